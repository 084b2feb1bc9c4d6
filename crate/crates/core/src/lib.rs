//! Cooperative residential energy flexibility: a multi-home Dec-POMDP
//! simulator, a day-ahead LP oracle, a small neural toolkit and the
//! multi-agent trainers built on them, plus an experiment harness.

pub mod environment;
pub mod error;
pub mod harness;
pub mod marl;
pub mod neural;
pub mod oracle;
pub mod profiles;

pub use error::{Error, Result, Violation};
