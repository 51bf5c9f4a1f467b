//! Byzantine agents, their runs, causal cones and run surgery.

pub mod causal;
pub mod error;
pub mod filter;
pub mod hap;
pub mod logic;
pub mod protocol;
pub mod queries;
pub mod run;
pub mod scenario;
pub mod surgery;
pub mod text;

pub use error::{Error, Result};
pub use hap::{AgentId, GlobalHap, Gmi, HapSet, Label, LocalHap, LocalHistory, LocalSet, Signature, Time};
