use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unaligned word address {0:#x}")]
    Unaligned(u64),
    #[error("core {0} out of range")]
    BadCore(usize),
    #[error("step budget of {0} exhausted")]
    StepBudgetExhausted(u64),
    #[error("thread {tid} panicked at step {step}: {message}")]
    ThreadPanic { tid: usize, step: u64, message: String },
    #[error("schedule enumeration exceeded cap of {0}")]
    EnumerationCapExceeded(u64),
    #[error("allocation of {words} words does not fit a {block_words}-word block")]
    AllocTooLarge { words: usize, block_words: usize },
    #[error("simulated heap exhausted after {0} blocks")]
    OutOfMemory(usize),
    #[error("double free of {addr:#x} at step {step}")]
    DoubleFree { addr: u64, step: u64 },
    #[error("free of unallocated address {addr:#x} at step {step}")]
    InvalidFree { addr: u64, step: u64 },
    #[error("history of {0} operations exceeds checker cap")]
    HistoryTooLong(usize),
    #[error("thread {0} is not runnable")]
    NotRunnable(usize),
    #[error("invariant violated at step {step}: {message}")]
    Invariant { step: u64, message: String },
}
