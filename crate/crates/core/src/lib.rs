//! Pricing and hedging of OTC contracts under heterogeneous funding rates,
//! netting conventions and collateral covenants.
//!
//! The library evolves a hedger's wealth forward under explicit trading
//! conventions ([`wealth`]), solves the matching nonlinear pricing
//! equations backward on a recombining lattice ([`pricer`]), and verifies
//! the martingale and no-arbitrage structure behind both numerically
//! ([`verify`]). Market data and the two discretizations live in
//! [`market`]; margin mechanics in [`collateral`].

pub mod collateral;
pub mod error;
pub mod expr;
pub mod market;
pub mod pricer;
pub mod verify;
pub mod wealth;

pub use error::{ConventionError, ExprError, MarketError, SolverError, VerifyError};
