//! Bus transactions, the memory map and the word-addressed stores behind it.
//!
//! Two bus views exist. The *system bus* is shared by every block during
//! normal processing and reaches `system_ram` plus the monitor's control
//! registers. The *safe bus* is only driven by the voter's multiplexer and
//! reaches `ls_ram` and the I/O device.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 32-bit word address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address(pub u32);

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.0)
    }
}

pub const SYSTEM_RAM_START: Address = Address(0x0000);
pub const SYSTEM_RAM_END: Address = Address(0x7fff);
pub const LS_RAM_START: Address = Address(0x8000);
pub const LS_RAM_END: Address = Address(0xbfff);
pub const IO_DEVICE_START: Address = Address(0xc000);
pub const IO_DEVICE_END: Address = Address(0xc0ff);

/// Control-bus register: any write requests safe processing.
pub const MONITOR_CTRL_REQUEST: Address = Address(0xf000);
/// Control-bus register: `(n_required << 8) | m_agree`.
pub const MONITOR_CTRL_MOON: Address = Address(0xf004);

/// Reads here join (first read) or leave (second read) a lockstep session.
pub const LOCKSTEP_SYNC_ADDRESS: Address = Address(0xff00);
/// Code address of the first safe-program instruction.
pub const SAFECODE_START: Address = Address(0x0001_0000);

/// Low-byte encoding of the sync-read reply.
pub const SYNC_ACCEPT: u32 = 0x01;
pub const SYNC_REJECT: u32 = 0x00;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    SystemRam,
    LsRam,
    IoDevice,
    MonitorControl,
    LockstepSync,
}

impl Region {
    pub fn of(addr: Address) -> Option<Region> {
        let a = addr.0;
        match a {
            _ if (SYSTEM_RAM_START.0..=SYSTEM_RAM_END.0).contains(&a) => Some(Region::SystemRam),
            _ if (LS_RAM_START.0..=LS_RAM_END.0).contains(&a) => Some(Region::LsRam),
            _ if (IO_DEVICE_START.0..=IO_DEVICE_END.0).contains(&a) => Some(Region::IoDevice),
            _ if a == MONITOR_CTRL_REQUEST.0 || a == MONITOR_CTRL_MOON.0 => Some(Region::MonitorControl),
            _ if a == LOCKSTEP_SYNC_ADDRESS.0 => Some(Region::LockstepSync),
            _ => None,
        }
    }
}

/// Which side of the monitor a transaction travels on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BusPort {
    System,
    Safe,
}

impl BusPort {
    /// Regions addressable through this port with an ordinary load/store.
    pub fn reaches(self, region: Region) -> bool {
        match self {
            BusPort::System => matches!(region, Region::SystemRam | Region::MonitorControl),
            BusPort::Safe => matches!(region, Region::LsRam | Region::IoDevice),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxKind {
    Read,
    Write,
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxKind::Read => "read",
            TxKind::Write => "write",
        })
    }
}

/// One bus access issued by a block in one cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BusTransaction {
    pub block_id: usize,
    pub cycle: u64,
    pub kind: TxKind,
    pub address: Address,
    /// Write payload; zero for reads.
    pub data: u32,
    pub response: Option<u32>,
}

impl BusTransaction {
    pub fn read(block_id: usize, cycle: u64, address: Address) -> Self {
        BusTransaction { block_id, cycle, kind: TxKind::Read, address, data: 0, response: None }
    }

    pub fn write(block_id: usize, cycle: u64, address: Address, data: u32) -> Self {
        BusTransaction { block_id, cycle, kind: TxKind::Write, address, data, response: None }
    }

    pub fn is_pending(&self) -> bool {
        self.response.is_none()
    }

    pub fn is_sync_read(&self) -> bool {
        self.kind == TxKind::Read && self.address == LOCKSTEP_SYNC_ADDRESS
    }
}

/// Equality as seen by the compare matrix: `(kind, address, data)` only.
pub fn tx_equal(a: &BusTransaction, b: &BusTransaction) -> bool {
    a.kind == b.kind && a.address == b.address && a.data == b.data
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("unmapped address {address} on the {port:?} bus (block {block_id}, cycle {cycle})")]
    UnmappedAddress { address: Address, port: BusPort, block_id: usize, cycle: u64 },
    #[error("transaction from block {block_id} at cycle {cycle} already completed")]
    AlreadyComplete { block_id: usize, cycle: u64 },
}

/// Word store that reads zero for never-written addresses.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WordStore {
    words: BTreeMap<u32, u32>,
}

impl WordStore {
    pub fn load(&self, addr: Address) -> u32 {
        self.words.get(&addr.0).copied().unwrap_or(0)
    }

    pub fn store(&mut self, addr: Address, value: u32) {
        self.words.insert(addr.0, value);
    }

    /// Written words in ascending address order.
    pub fn iter(&self) -> impl Iterator<Item = (Address, u32)> + '_ {
        self.words.iter().map(|(&a, &v)| (Address(a), v))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemoryMap {
    pub system_ram: WordStore,
    pub ls_ram: WordStore,
    /// Append-only log of `(address, word)` pairs written to the I/O range.
    pub io_device: Vec<(Address, u32)>,
}

impl MemoryMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Completes `tx` against the stores reachable from `port`, filling in its
    /// response. Writes respond with zero. Reads of the I/O range return zero.
    pub fn issue(&mut self, tx: &mut BusTransaction, port: BusPort) -> Result<u32, BusError> {
        if !tx.is_pending() {
            return Err(BusError::AlreadyComplete { block_id: tx.block_id, cycle: tx.cycle });
        }
        let region = Region::of(tx.address).filter(|r| port.reaches(*r)).ok_or(BusError::UnmappedAddress {
            address: tx.address,
            port,
            block_id: tx.block_id,
            cycle: tx.cycle,
        })?;
        let response = match (region, tx.kind) {
            (Region::SystemRam, TxKind::Read) => self.system_ram.load(tx.address),
            (Region::SystemRam, TxKind::Write) => {
                self.system_ram.store(tx.address, tx.data);
                0
            }
            (Region::LsRam, TxKind::Read) => self.ls_ram.load(tx.address),
            (Region::LsRam, TxKind::Write) => {
                self.ls_ram.store(tx.address, tx.data);
                0
            }
            (Region::IoDevice, TxKind::Read) => 0,
            (Region::IoDevice, TxKind::Write) => {
                self.io_device.push((tx.address, tx.data));
                0
            }
            // Control registers are decoded by the monitor, not stored.
            (Region::MonitorControl, _) | (Region::LockstepSync, _) => 0,
        };
        tx.response = Some(response);
        Ok(response)
    }

    /// Fixed-priority arbitration for simultaneous system-bus accesses:
    /// lower block ids are served first, so the highest id's write wins.
    pub fn arbitrate_system(&mut self, txs: &mut [BusTransaction]) -> Result<(), BusError> {
        txs.sort_by_key(|t| t.block_id);
        for tx in txs.iter_mut() {
            self.issue(tx, BusPort::System)?;
        }
        Ok(())
    }
}
