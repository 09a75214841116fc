//! Plausible bugs that can be switched on in the server, one at a time.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Mutant {
    NonzeroInitialStore,
    CompleteOneByteEarly,
    EchoRequest,
    ReplyBeforeComplete,
    DuplicateReply,
    ReplyToNewestOther,
    StoreNeverUpdated,
    StoreBeforeReply,
    DropLastReplyByte,
    FreezeAfterTwoAccepts,
    ZeroRecvAsData,
    OffsetNotReset,
}

pub const ALL_MUTANTS: [Mutant; 12] = [
    Mutant::NonzeroInitialStore,
    Mutant::CompleteOneByteEarly,
    Mutant::EchoRequest,
    Mutant::ReplyBeforeComplete,
    Mutant::DuplicateReply,
    Mutant::ReplyToNewestOther,
    Mutant::StoreNeverUpdated,
    Mutant::StoreBeforeReply,
    Mutant::DropLastReplyByte,
    Mutant::FreezeAfterTwoAccepts,
    Mutant::ZeroRecvAsData,
    Mutant::OffsetNotReset,
];

impl Mutant {
    /// Stable numeric id, 1 through 12.
    pub fn id(self) -> u8 {
        ALL_MUTANTS.iter().position(|&m| m == self).expect("registered") as u8 + 1
    }

    pub fn from_id(id: u8) -> Result<Self, UnknownMutant> {
        ALL_MUTANTS.get((id as usize).wrapping_sub(1)).copied().ok_or(UnknownMutant(id.to_string()))
    }

    pub fn description(self) -> &'static str {
        match self {
            Mutant::NonzeroInitialStore => "stored message starts as non-zero bytes",
            Mutant::CompleteOneByteEarly => "a request is complete one byte early",
            Mutant::EchoRequest => "reply with the request instead of the stored message",
            Mutant::ReplyBeforeComplete => "reply after the first chunk of a request, not after the last",
            Mutant::DuplicateReply => "send the reply twice",
            Mutant::ReplyToNewestOther => "send the reply on the most recently accepted other connection",
            Mutant::StoreNeverUpdated => "never replace the stored message",
            Mutant::StoreBeforeReply => "replace the stored message before capturing the reply",
            Mutant::DropLastReplyByte => "drop the last byte of every reply",
            Mutant::FreezeAfterTwoAccepts => "stop updating the stored message after two accepts",
            Mutant::ZeroRecvAsData => "treat a zero-byte receive as one byte of stale buffer data",
            Mutant::OffsetNotReset => "do not reset the request buffer offset between requests",
        }
    }
}

/// The registry as `(id, description)` pairs.
pub fn mutant_registry() -> Vec<(u8, &'static str)> {
    ALL_MUTANTS.iter().map(|m| (m.id(), m.description())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mutant {0:?}; valid ids are 1 to 12")]
pub struct UnknownMutant(pub String);

impl FromStr for Mutant {
    type Err = UnknownMutant;

    fn from_str(s: &str) -> Result<Self, UnknownMutant> {
        let id: u8 = s.trim().parse().map_err(|_| UnknownMutant(s.to_string()))?;
        Mutant::from_id(id).map_err(|_| UnknownMutant(s.to_string()))
    }
}

impl fmt::Display for Mutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}
