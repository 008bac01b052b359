use super::request::{Op, ReplySelect, RmwKind};

/// Applies one read-modify-write in a bank's execution unit.
///
/// Returns `(new memory word, reply word)`. Float kinds operate on IEEE-754
/// single bits; NaNs propagate.
pub fn rmw_execute(kind: RmwKind, select: ReplySelect, old: u32, data: u32) -> (u32, u32) {
    let f = f32::from_bits;
    let new = match kind {
        RmwKind::AddInt => old.wrapping_add(data),
        RmwKind::SubInt => old.wrapping_sub(data),
        RmwKind::AddFloat => (f(old) + f(data)).to_bits(),
        RmwKind::SubFloat => (f(old) - f(data)).to_bits(),
        RmwKind::BitAnd => old & data,
        RmwKind::BitOr => old | data,
        RmwKind::BitXor => old ^ data,
        RmwKind::Min => (old as i32).min(data as i32) as u32,
        RmwKind::Max => (old as i32).max(data as i32) as u32,
        RmwKind::TestAndSet => old | 1,
        RmwKind::WriteIfZero => {
            if old == 0 {
                data
            } else {
                old
            }
        }
        RmwKind::Swap => data,
    };
    (new, reply_word(select, old, new))
}

fn reply_word(select: ReplySelect, old: u32, new: u32) -> u32 {
    match select {
        ReplySelect::OldValue => old,
        ReplySelect::NewValue => new,
        ReplySelect::ChangedFlag => (new != old) as u32,
    }
}

/// Executes any operation against an old memory word.
pub fn execute(op: Op, select: ReplySelect, old: u32, data: u32) -> (u32, u32) {
    match op {
        Op::Read => (old, old),
        Op::Write => (data, reply_word(select, old, data)),
        Op::Rmw(kind) => rmw_execute(kind, select, old, data),
    }
}
