//! A deterministic multicore cache-coherence simulator with conditional
//! access instructions, concurrent data structures built on them, pluggable
//! memory reclamation and a use-after-free oracle.

pub mod bench;
pub mod ca;
pub mod cli;
pub mod error;
pub mod heap;
pub mod history;
pub mod memsys;
pub mod simcore;
pub mod smr;
pub mod structures;

pub use error::{Result, SimError};
