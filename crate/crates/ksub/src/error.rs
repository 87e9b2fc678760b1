//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, KsubError>;

/// Errors raised by oracles, validators, optimizers and rounders.
///
/// The variants are deliberately coarse: callers (in particular the CLI)
/// map them onto distinct exit codes, so a guard refusal must never be
/// conflated with a validation failure or a config mistake.
#[derive(Debug, Error)]
pub enum KsubError {
    /// Exact enumeration was refused because the state space is too large.
    /// This is a refusal, not a failure: the oracle never degrades to
    /// sampling on its own.
    #[error("enumeration guard exceeded: (k+1)^n = {states} states > cap {max_states}")]
    GuardExceeded { states: u128, max_states: u128 },

    /// A point or assignment violates the feasible region it was handed to.
    #[error("infeasible input: {0}")]
    Infeasible(String),

    /// Matrix/vector sizes do not match the instance dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A documented operation precondition was violated by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A direction rule emitted a vector outside its contract.
    #[error("direction rule contract violated: {0}")]
    RuleContract(String),

    /// Invalid configuration (step sizes, epsilon ranges, distributions).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Instance or point file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}
