use serde::{Deserialize, Serialize};

/// Read-modify-write operations supported by the bank execution units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RmwKind {
    AddInt,
    AddFloat,
    SubInt,
    SubFloat,
    BitAnd,
    BitOr,
    BitXor,
    /// Signed integer minimum.
    Min,
    /// Signed integer maximum.
    Max,
    TestAndSet,
    WriteIfZero,
    Swap,
}

impl RmwKind {
    /// Whether two same-address applications of this kind commute, so that
    /// reordering them cannot change final memory.
    pub fn commutes(self) -> bool {
        matches!(
            self,
            RmwKind::AddInt
                | RmwKind::SubInt
                | RmwKind::BitAnd
                | RmwKind::BitOr
                | RmwKind::BitXor
                | RmwKind::Min
                | RmwKind::Max
                | RmwKind::TestAndSet
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Read,
    Write,
    Rmw(RmwKind),
}

/// Which value the bank returns to the requesting lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ReplySelect {
    #[default]
    OldValue,
    NewValue,
    ChangedFlag,
}

/// One lane's memory access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRequest {
    pub address: u32,
    pub op: Op,
    pub data: u32,
    pub reply: ReplySelect,
}

impl MemoryRequest {
    pub fn read(address: u32) -> Self {
        Self {
            address,
            op: Op::Read,
            data: 0,
            reply: ReplySelect::OldValue,
        }
    }

    pub fn write(address: u32, data: u32) -> Self {
        Self {
            address,
            op: Op::Write,
            data,
            reply: ReplySelect::OldValue,
        }
    }

    pub fn rmw(address: u32, kind: RmwKind, data: u32, reply: ReplySelect) -> Self {
        Self {
            address,
            op: Op::Rmw(kind),
            data,
            reply,
        }
    }
}

/// A vector of up to `lanes` requests, one per lane. Absent lanes are idle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestVector {
    pub lanes: Vec<Option<MemoryRequest>>,
}

impl RequestVector {
    pub fn new(lanes: Vec<Option<MemoryRequest>>) -> Self {
        Self { lanes }
    }

    pub fn empty(width: usize) -> Self {
        Self {
            lanes: vec![None; width],
        }
    }

    /// Packs requests into consecutive lanes, padding to `width`.
    pub fn packed(width: usize, reqs: &[MemoryRequest]) -> Self {
        assert!(reqs.len() <= width);
        let mut lanes: Vec<_> = reqs.iter().copied().map(Some).collect();
        lanes.resize(width, None);
        Self { lanes }
    }

    pub fn width(&self) -> usize {
        self.lanes.len()
    }

    pub fn valid_count(&self) -> usize {
        self.lanes.iter().filter(|l| l.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.valid_count() == 0
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, &MemoryRequest)> {
        self.lanes
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.as_ref().map(|r| (i, r)))
    }
}
