//! Trace records and their byte-deterministic serializations.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

/// Who emitted an event. Orders blocks (by id) before the monitor before the
/// system, which is the intra-phase order of the trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    Block(usize),
    Monitor,
    System,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Block(id) => write!(f, "{id}"),
            Entity::Monitor => f.write_str("monitor"),
            Entity::System => f.write_str("system"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Trigger,
    IrqAssert,
    IrqDeassert,
    SyncRead,
    Accept,
    Reject,
    Vote,
    Forward,
    NoMajority,
    ExitRead,
    Release,
    StateChange,
    FaultApplied,
    AvailabilityError,
    Boot,
    Halt,
    Warning,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Trigger => "trigger",
            EventKind::IrqAssert => "irq_assert",
            EventKind::IrqDeassert => "irq_deassert",
            EventKind::SyncRead => "sync_read",
            EventKind::Accept => "accept",
            EventKind::Reject => "reject",
            EventKind::Vote => "vote",
            EventKind::Forward => "forward",
            EventKind::NoMajority => "no_majority",
            EventKind::ExitRead => "exit_read",
            EventKind::Release => "release",
            EventKind::StateChange => "state_change",
            EventKind::FaultApplied => "fault_applied",
            EventKind::AvailabilityError => "availability_error",
            EventKind::Boot => "boot",
            EventKind::Halt => "halt",
            EventKind::Warning => "warning",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Int(u64),
    /// Rendered as a `0x`-prefixed string.
    Hex(u32),
    Str(String),
    Bool(bool),
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v)
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::Int(v as u64)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as u64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Hex(v) => write!(f, "{v:#x}"),
            Value::Str(s) => f.write_str(s),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl Value {
    fn write_json(&self, out: &mut String) {
        match self {
            Value::Int(v) => out.push_str(&v.to_string()),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::Hex(v) => out.push_str(&format!("\"{v:#x}\"")),
            Value::Str(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        }
    }

    pub fn as_int(&self) -> Option<u64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::Hex(v) => Some(*v as u64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    /// Intra-cycle phase 1..=7.
    pub phase: u8,
    pub entity: Entity,
    pub kind: EventKind,
    pub detail: Vec<(&'static str, Value)>,
}

impl TraceEvent {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.detail.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    pub fn block(&self) -> Option<usize> {
        match self.entity {
            Entity::Block(id) => Some(id),
            _ => None,
        }
    }

    pub fn order_key(&self) -> (u64, u8, Entity) {
        (self.cycle, self.phase, self.entity)
    }

    fn to_json_line(&self) -> String {
        let mut s = String::with_capacity(96);
        s.push_str(&format!("{{\"cycle\":{},\"phase\":{},\"entity\":", self.cycle, self.phase));
        match self.entity {
            Entity::Block(id) => s.push_str(&id.to_string()),
            other => s.push_str(&format!("\"{other}\"")),
        }
        s.push_str(&format!(",\"kind\":\"{}\",\"detail\":{{", self.kind));
        for (i, (k, v)) in self.detail.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&format!("\"{k}\":"));
            v.write_json(&mut s);
        }
        s.push_str("}}");
        s
    }

    fn to_csv_line(&self) -> String {
        let detail: Vec<String> = self.detail.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let mut detail = detail.join(";");
        if detail.contains(',') || detail.contains('"') {
            detail = format!("\"{}\"", detail.replace('"', "\"\""));
        }
        format!("{},{},{},{},{}", self.cycle, self.phase, self.entity, self.kind, detail)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TraceFormat {
    /// One JSON object per line, framed by a header and a terminator line.
    #[default]
    Jsonl,
    /// Comma-separated table with a header row.
    Csv,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" | "json" => Ok(TraceFormat::Jsonl),
            "csv" => Ok(TraceFormat::Csv),
            other => Err(format!("unknown trace format `{other}` (expected jsonl or csv)")),
        }
    }
}

pub const TRACE_HEADER_JSONL: &str = "{\"trace\":\"lockstep-sim\",\"version\":1}";
pub const TRACE_HEADER_CSV: &str = "cycle,phase,entity,kind,detail";

pub fn emit_trace<W: Write>(events: &[TraceEvent], format: TraceFormat, mut sink: W) -> io::Result<()> {
    match format {
        TraceFormat::Jsonl => {
            writeln!(sink, "{TRACE_HEADER_JSONL}")?;
            for ev in events {
                writeln!(sink, "{}", ev.to_json_line())?;
            }
            writeln!(sink, "{{\"end\":true,\"events\":{}}}", events.len())?;
        }
        TraceFormat::Csv => {
            writeln!(sink, "{TRACE_HEADER_CSV}")?;
            for ev in events {
                writeln!(sink, "{}", ev.to_csv_line())?;
            }
        }
    }
    sink.flush()
}

pub fn trace_to_string(events: &[TraceEvent], format: TraceFormat) -> String {
    let mut buf = Vec::new();
    emit_trace(events, format, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accept() -> TraceEvent {
        TraceEvent {
            cycle: 4,
            phase: 4,
            entity: Entity::Block(1),
            kind: EventKind::Accept,
            detail: vec![("session", 1u64.into()), ("response", 1u32.into())],
        }
    }

    #[test]
    fn empty_trace_is_framing_only() {
        assert_eq!(
            trace_to_string(&[], TraceFormat::Jsonl),
            format!("{TRACE_HEADER_JSONL}\n{{\"end\":true,\"events\":0}}\n")
        );
        assert_eq!(trace_to_string(&[], TraceFormat::Csv), format!("{TRACE_HEADER_CSV}\n"));
    }

    #[test]
    fn jsonl_key_order_is_fixed() {
        let s = trace_to_string(&[accept()], TraceFormat::Jsonl);
        let line = s.lines().nth(1).unwrap();
        assert_eq!(line, r#"{"cycle":4,"phase":4,"entity":1,"kind":"accept","detail":{"session":1,"response":1}}"#);
        let parsed: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(parsed["detail"]["response"], 1);
    }

    #[test]
    fn csv_rows() {
        let mut ev = accept();
        ev.detail.push(("note", Value::Str("a,b".into())));
        let s = trace_to_string(&[ev], TraceFormat::Csv);
        assert_eq!(s.lines().nth(1).unwrap(), "4,4,1,accept,\"session=1;response=1;note=a,b\"");
    }

    #[test]
    fn entity_order() {
        assert!(Entity::Block(7) < Entity::Monitor);
        assert!(Entity::Monitor < Entity::System);
        assert!(Entity::Block(0) < Entity::Block(1));
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse(), Ok(TraceFormat::Csv));
        assert_eq!("jsonl".parse(), Ok(TraceFormat::Jsonl));
        assert!("xml".parse::<TraceFormat>().is_err());
    }
}
