//! Node-B MAC-hs: per-user transmission queues with pluggable buffer
//! management, the credit allocator with its grant signaling, Round-Robin
//! TTI scheduling and the HARQ sender processes.

pub mod credits;
pub mod harq;
pub mod queue;
pub mod scheduler;

pub use credits::{
    nrt_credits, nrt_max_credits_per_tti, rt_credits_per_tti, CreditAllocator, CreditGrant,
    RateEstimator,
};
pub use harq::{FeedbackOutcome, HarqBank, TransportBlock};
pub use queue::{EnqueueOutcome, MacHsQueue};
pub use scheduler::RoundRobin;
