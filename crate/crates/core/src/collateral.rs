//! Collateral amounts and margin-account costs under segregation, full
//! rehypothecation and partial rehypothecation.
//!
//! Margin interest uses exact per-step exponential accrual: a balance `b`
//! held in an account at rate `r` earns `b * (exp(r dt) - 1)` over a step,
//! matching the wealth-engine convention so that folding margin costs into
//! a cash-flow stream is an exact identity.

use std::sync::Arc;

use serde::Serialize;

use crate::error::MarketError;
use crate::expr::Expr;
use crate::market::{AccountSet, RateSpec};
use crate::wealth::CashFlowStream;

/// How the collateral amount is determined.
///
/// Sign convention: positive collateral is received by the hedger, negative
/// is posted. Value-linked variants read the hedger's current wealth, so a
/// positive wealth (a liability of the counterparty's) posts collateral.
#[derive(Debug, Clone)]
pub enum CollateralSpec {
    /// Exogenous amount, a function of time and spot only.
    Exogenous(Expr),
    /// Proportional to the hedger's wealth: `C = alpha * V`. Values of
    /// `alpha` in (-1, 0) give a partially collateralized contract.
    Proportional { alpha: RateSpec },
    /// Haircut collateralization `C = (1 + delta1) V^- - (1 + delta2) V^+`.
    Haircut { delta1: RateSpec, delta2: RateSpec },
    /// Full collateralization `C = -V`; identical to `Haircut(0, 0)`.
    Full,
}

impl CollateralSpec {
    /// Collateral for the state `(t, spot, wealth)`, split into received and
    /// posted parts.
    pub fn amount(&self, t: f64, spot: f64, wealth: f64) -> CollateralAmount {
        let total = match self {
            CollateralSpec::Exogenous(e) => e.eval(t, spot),
            CollateralSpec::Proportional { alpha } => alpha.value_at(t) * wealth,
            CollateralSpec::Haircut { delta1, delta2 } => {
                (1.0 + delta1.value_at(t)) * negative_part(wealth)
                    - (1.0 + delta2.value_at(t)) * positive_part(wealth)
            }
            CollateralSpec::Full => -wealth,
        };
        CollateralAmount {
            total,
            received: positive_part(total),
            posted: negative_part(total),
        }
    }
}

/// A collateral amount split into its received and posted components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollateralAmount {
    /// Signed amount `received - posted`.
    pub total: f64,
    /// Cash value of collateral received.
    pub received: f64,
    /// Cash value of collateral posted.
    pub posted: f64,
}

pub(crate) fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

pub(crate) fn negative_part(x: f64) -> f64 {
    (-x).max(0.0)
}

/// What the hedger may do with collateral received, and how posted
/// collateral is raised.
#[derive(Debug, Clone)]
pub enum MarginConvention {
    /// Received collateral sits in a dedicated reinvestment account; posted
    /// collateral is raised from a dedicated borrowing account.
    Segregated,
    /// Received collateral is fully reusable in the hedger's own trading.
    FullRehypo,
    /// Reuse capped at fraction `reuse_received` of collateral received and
    /// `reuse_posted` of collateral posted; the remainders sit in the
    /// dedicated accounts. `(1, 1)` degenerates to `FullRehypo`, `(0, 0)` to
    /// `Segregated`.
    PartialRehypo {
        reuse_received: RateSpec,
        reuse_posted: RateSpec,
    },
}

impl MarginConvention {
    pub fn validate(&self) -> Result<(), MarketError> {
        if let MarginConvention::PartialRehypo {
            reuse_received,
            reuse_posted,
        } = self
        {
            for curve in [reuse_received, reuse_posted] {
                if curve.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(MarketError::InvalidCurve(
                        "reuse fractions in [0, 1]".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Fraction of received/posted collateral that enters the hedger's cash
    /// pool at time `t`.
    pub fn reuse_fractions(&self, t: f64) -> (f64, f64) {
        match self {
            MarginConvention::Segregated => (0.0, 0.0),
            MarginConvention::FullRehypo => (1.0, 1.0),
            MarginConvention::PartialRehypo {
                reuse_received,
                reuse_posted,
            } => (reuse_received.value_at(t), reuse_posted.value_at(t)),
        }
    }
}

/// Collateral specification plus margin convention, as attached to a trade.
#[derive(Debug, Clone)]
pub struct CollateralSetup {
    pub spec: CollateralSpec,
    pub margin: MarginConvention,
}

/// Margin-account gain/cost over one step `[t, t + dt)` on collateral
/// balances fixed at the step start.
///
/// Under segregation the received amount earns the reinvestment rate and
/// pays remuneration, while the posted amount is financed at the borrow
/// rate and earns remuneration. Under full rehypothecation only the
/// remuneration legs remain (the principal itself moves into the trading
/// cash pool, which the wealth engine accounts for separately). Partial
/// rehypothecation keeps the non-reused fractions in the dedicated accounts.
pub fn margin_cost_increment(
    convention: &MarginConvention,
    received: f64,
    posted: f64,
    accounts: &AccountSet,
    t: f64,
    dt: f64,
) -> Result<f64, MarketError> {
    let t1 = t + dt;
    let remun_received = accounts.margin_remuneration_received.accrual(t, t1)? - 1.0;
    let remun_posted = accounts.margin_remuneration_posted.accrual(t, t1)? - 1.0;
    let reinvest = accounts.margin_reinvest.accrual(t, t1)? - 1.0;
    let borrow = accounts.margin_borrow.accrual(t, t1)? - 1.0;
    let (beta, gamma) = convention.reuse_fractions(t);
    Ok(received * ((1.0 - beta) * reinvest - remun_received)
        - posted * ((1.0 - gamma) * borrow - remun_posted))
}

/// Folds per-step margin costs into a contract's cash flows, producing the
/// collateral-adjusted stream. The increments settle at the end of each
/// step with amounts fixed by the step-start state, exactly as the wealth
/// engine accrues them, so pricing the adjusted stream without collateral
/// reproduces pricing the original stream with collateral.
pub fn adjusted_stream(
    stream: &CashFlowStream,
    increments: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
) -> CashFlowStream {
    stream.with_step_source(increments)
}

/// One interval of the margin-rate monotonicity report.
#[derive(Debug, Clone, Serialize)]
pub struct RemunerationInterval {
    pub start: f64,
    pub end: f64,
    /// Remuneration on received collateral at least the reinvestment rate.
    pub received_ok: bool,
    /// Borrow rate for posted collateral at least its remuneration.
    pub posted_ok: bool,
}

/// Interval-by-interval check of the margin-rate orderings required before
/// the no-arbitrage gate may be applied to value-linked collateral.
#[derive(Debug, Clone, Serialize)]
pub struct RemunerationReport {
    pub intervals: Vec<RemunerationInterval>,
    pub holds: bool,
}

/// Checks, per interval, that holding margin cannot be a free benefit:
/// the remuneration paid on received collateral dominates its reinvestment
/// rate, and the borrow rate for posted collateral dominates the
/// remuneration earned on it.
pub fn remuneration_monotonicity(accounts: &AccountSet) -> RemunerationReport {
    let mut grid: Vec<f64> = accounts
        .margin_remuneration_received
        .breakpoints()
        .iter()
        .chain(accounts.margin_remuneration_posted.breakpoints())
        .chain(accounts.margin_reinvest.breakpoints())
        .chain(accounts.margin_borrow.breakpoints())
        .copied()
        .collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

    let mut intervals = Vec::new();
    let mut holds = true;
    for w in grid.windows(2) {
        let t = w[0];
        let received_ok = accounts.margin_remuneration_received.value_at(t)
            >= accounts.margin_reinvest.value_at(t);
        let posted_ok =
            accounts.margin_borrow.value_at(t) >= accounts.margin_remuneration_posted.value_at(t);
        holds &= received_ok && posted_ok;
        intervals.push(RemunerationInterval {
            start: w[0],
            end: w[1],
            received_ok,
            posted_ok,
        });
    }
    RemunerationReport { intervals, holds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn flat(v: f64) -> RateSpec {
        RateSpec::flat(v, 1.0)
    }

    #[test]
    fn full_collateral_mirrors_wealth() {
        let c = CollateralSpec::Full.amount(0.0, 100.0, 7.0);
        assert_eq!(c.total, -7.0);
        assert_eq!(c.received, 0.0);
        assert_eq!(c.posted, 7.0);
    }

    #[test]
    fn haircut_formula() {
        let spec = CollateralSpec::Haircut {
            delta1: flat(0.1),
            delta2: flat(0.05),
        };
        let c = spec.amount(0.5, 100.0, -10.0);
        assert_relative_eq!(c.total, 11.0, epsilon = 1e-15);
        assert_eq!(c.received, 11.0);
        let c = spec.amount(0.5, 100.0, 10.0);
        assert_relative_eq!(c.total, -10.5, epsilon = 1e-15);
        assert_eq!(c.posted, 10.5);
    }

    #[test]
    fn proportional_scales_wealth() {
        let spec = CollateralSpec::Proportional { alpha: flat(-0.5) };
        let c = spec.amount(0.0, 100.0, 8.0);
        assert_eq!(c.total, -4.0);
    }

    #[test]
    fn haircut_zero_equals_full() {
        let spec = CollateralSpec::Haircut {
            delta1: flat(0.0),
            delta2: flat(0.0),
        };
        for v in [-3.0, 0.0, 5.5] {
            assert_eq!(spec.amount(0.2, 50.0, v), CollateralSpec::Full.amount(0.2, 50.0, v));
        }
    }

    #[test]
    fn zero_collateral_costs_nothing() {
        let acc = AccountSet::uniform(0.03, 1, 1.0);
        let inc =
            margin_cost_increment(&MarginConvention::Segregated, 0.0, 0.0, &acc, 0.0, 0.01)
                .unwrap();
        assert_eq!(inc, 0.0);
    }

    #[test]
    fn segregated_increment_matches_spread() {
        // Reinvestment at 3%, remuneration at 1%, 100 received over dt=0.01:
        // about 100 * 0.02 * 0.01.
        let mut acc = AccountSet::uniform(0.03, 1, 1.0);
        acc.margin_remuneration_received = flat(0.01);
        acc.margin_remuneration_posted = flat(0.01);
        let inc =
            margin_cost_increment(&MarginConvention::Segregated, 100.0, 0.0, &acc, 0.0, 0.01)
                .unwrap();
        assert_relative_eq!(inc, 0.02, max_relative = 1e-3);
        let exact = 100.0 * ((0.03f64 * 0.01).exp() - (0.01f64 * 0.01).exp());
        assert_abs_diff_eq!(inc, exact, epsilon = 1e-15);
    }

    #[test]
    fn partial_rehypo_degenerations_are_exact() {
        let mut acc = AccountSet::uniform(0.03, 1, 1.0);
        acc.margin_remuneration_received = flat(0.011);
        acc.margin_remuneration_posted = flat(0.009);
        acc.margin_reinvest = flat(0.028);
        acc.margin_borrow = flat(0.041);

        let seg = MarginConvention::Segregated;
        let full = MarginConvention::FullRehypo;
        let as_seg = MarginConvention::PartialRehypo {
            reuse_received: flat(0.0),
            reuse_posted: flat(0.0),
        };
        let as_full = MarginConvention::PartialRehypo {
            reuse_received: flat(1.0),
            reuse_posted: flat(1.0),
        };

        for (rec, post, t, dt) in [
            (100.0, 0.0, 0.0, 0.01),
            (0.0, 55.0, 0.25, 0.125),
            (13.7, 2.9, 0.5, 0.02),
        ] {
            let a = margin_cost_increment(&seg, rec, post, &acc, t, dt).unwrap();
            let b = margin_cost_increment(&as_seg, rec, post, &acc, t, dt).unwrap();
            assert_eq!(a, b);
            let c = margin_cost_increment(&full, rec, post, &acc, t, dt).unwrap();
            let d = margin_cost_increment(&as_full, rec, post, &acc, t, dt).unwrap();
            assert_eq!(c, d);
        }
    }

    #[test]
    fn symmetric_rate_collapse() {
        // Reinvest/borrow at the cash rate, remuneration at a single margin
        // rate: the increment collapses to (cash - margin) * C.
        let mut acc = AccountSet::uniform(0.03, 1, 1.0);
        acc.margin_remuneration_received = flat(0.01);
        acc.margin_remuneration_posted = flat(0.01);
        let dt = 0.005;
        for c in [-40.0, -1.0, 0.0, 2.5, 60.0] {
            let inc = margin_cost_increment(
                &MarginConvention::Segregated,
                positive_part(c),
                negative_part(c),
                &acc,
                0.0,
                dt,
            )
            .unwrap();
            let collapsed = c * ((0.03f64 * dt).exp() - (0.01f64 * dt).exp());
            assert_abs_diff_eq!(inc, collapsed, epsilon = 1e-12);
        }
    }

    #[test]
    fn monotonicity_report() {
        // Flat margin accounts at equal rates pass.
        let acc = AccountSet::uniform(0.03, 1, 1.0);
        assert!(remuneration_monotonicity(&acc).holds);

        // Remuneration above reinvestment and borrow above remuneration pass.
        let mut acc = AccountSet::uniform(0.03, 1, 1.0);
        acc.margin_remuneration_received = flat(0.02);
        acc.margin_reinvest = flat(0.01);
        acc.margin_borrow = flat(0.03);
        acc.margin_remuneration_posted = flat(0.01);
        assert!(remuneration_monotonicity(&acc).holds);

        // Reinvestment above remuneration fails and the interval is cited.
        let mut acc = AccountSet::uniform(0.03, 1, 1.0);
        acc.margin_remuneration_received =
            RateSpec::piecewise(vec![0.0, 0.5, 1.0], vec![0.03, 0.01]).unwrap();
        acc.margin_reinvest = flat(0.02);
        let report = remuneration_monotonicity(&acc);
        assert!(!report.holds);
        let bad: Vec<_> = report.intervals.iter().filter(|i| !i.received_ok).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].start, 0.5);
        assert_eq!(bad[0].end, 1.0);
    }
}
