mod common;

use common::{all_bundled, uniform};
use lockstep_sim::block::TriggerSource;
use lockstep_sim::scenario::{load_scenario, ScenarioError};
use lockstep_sim::{Address, FaultKind, FaultSpec, FaultWindow, Instruction};
use proptest::prelude::*;

#[test]
fn bundled_scenarios_round_trip() {
    for (name, s) in all_bundled() {
        let back = load_scenario(&s.to_toml()).unwrap_or_else(|e| panic!("{name}: {e}\n{}", s.to_toml()));
        assert_eq!(back, s, "{name}");
        assert_eq!(back.hash(), s.hash());
    }
}

#[test]
fn fig5_shape() {
    let s = common::bundled("fig5.scn");
    assert_eq!(s.n_blocks(), 3);
    assert_eq!((s.moon.n_required, s.moon.m_agree), (2, 2));
}

#[test]
fn empty_file_fails_at_line_one() {
    match load_scenario("") {
        Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut text = uniform(3, 3, 2, 5, 5, 1).to_toml();
    text = text.replacen("max_cycles", "colour = 3\nmax_cycles", 1);
    assert!(matches!(load_scenario(&text), Err(ScenarioError::Parse { .. })));
}

#[test]
fn bad_instruction_points_at_it() {
    let text = uniform(3, 3, 2, 5, 5, 1).to_toml().replacen("compute 2", "compute two", 1);
    let Err(ScenarioError::Parse { line, .. }) = load_scenario(&text) else { panic!("accepted") };
    let offending = text.lines().nth(line - 1).unwrap();
    assert!(offending.contains("compute two"), "line {line}: {offending}");
}

#[test]
fn normal_code_cannot_touch_the_safe_bus() {
    let mut s = uniform(3, 3, 2, 5, 5, 1);
    s.blocks[1].program.insert(0, Instruction::Write(Address(0x8000), 1));
    match load_scenario(&s.to_toml()) {
        Err(ScenarioError::Validation { path, .. }) => assert_eq!(path, "blocks[1].program[0]"),
        other => panic!("{other:?}"),
    }
}

/// Normal code sees system RAM; safe code sees ls_ram followed by I/O.
fn instruction(safe: bool) -> impl Strategy<Value = Instruction> {
    let addr = if safe { 0x8000u32..=0xc0ff } else { 0u32..=0x7fff };
    prop_oneof![
        (1u32..20).prop_map(Instruction::Compute),
        addr.clone().prop_map(|a| Instruction::Read(Address(a))),
        (addr, any::<u32>()).prop_map(|(a, d)| Instruction::Write(Address(a), d)),
    ]
}

proptest! {
    #[test]
    fn generated_scenarios_round_trip(
        extra in 0usize..3,
        seed in any::<u64>(),
        programs in proptest::collection::vec(proptest::collection::vec(instruction(false), 0..6), 5),
        safe in proptest::collection::vec(instruction(true), 1..6),
        latencies in proptest::collection::vec(0u32..5, 5),
        trigger_at in 1u64..50,
        flip in 0u32..1000,
        random_selection in any::<bool>(),
        fault_bit in 0u8..32,
    ) {
        let mut s = uniform(3 + extra, 3, 2, 10, 40, trigger_at);
        s.seed = seed;
        s.flags.random_selection = random_selection;
        s.flags.flip_ppm = flip;
        for (i, b) in s.blocks.iter_mut().enumerate() {
            b.program = programs[i].clone();
            b.program.push(Instruction::TriggerSp(TriggerSource::AppTriggered));
            b.irq_latency = latencies[i];
        }
        s.safe_program = safe;
        s.faults.push(FaultSpec { target: 0, kind: FaultKind::BitFlipAddress { bit: fault_bit }, window: FaultWindow::AtCycle(3) });
        s.faults.push(FaultSpec {
            target: 1,
            kind: FaultKind::DivergentProgram { alternate: vec![Instruction::Compute(2)] },
            window: FaultWindow::AtSafeInstruction(0),
        });
        s.faults.push(FaultSpec { target: 2, kind: FaultKind::StartJitter { delay: 3 }, window: FaultWindow::AtCycle(1) });
        let text = s.to_toml();
        let back = load_scenario(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_toml(), text);
    }
}
