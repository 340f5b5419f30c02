//! Forward evolution of a hedger's wealth under a trading convention,
//! with the exact additive decomposition into gains, funding costs, margin
//! costs and contractual cash flows.
//!
//! Discrete conventions, shared with the pricing module:
//! * positions are set at the step start; every account balance `b` accrues
//!   `b * (exp(r dt) - 1)` over the step;
//! * an asset position earns a dividend credit
//!   `xi * S * (exp(r dt) - exp((r - kappa) dt))` where `r` is the rate the
//!   position is compensated at in its convention;
//! * lump cash flows settle after accrual, at their date, as functions of
//!   the spot on that date;
//! * per-step sources (used when margin costs are folded into a stream)
//!   settle at the step end with amounts fixed by the step-start state.

use std::sync::Arc;

use crate::collateral::{margin_cost_increment, negative_part, positive_part, CollateralSetup};
use crate::error::ConventionError;
use crate::market::{AccountSet, Path, RateSpec};

/// Lump amount as a function of the spot on the flow date.
pub type FlowFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Continuous flow rate `(t, spot) -> currency / year`.
pub type RateFlowFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Per-step source `(t, spot, dt) -> currency`, settling at the step end.
pub type StepSourceFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Feedback hedge policy `(t, spots) -> units of the asset`.
pub type PolicyFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// A dated lump flow.
#[derive(Clone)]
pub struct Lump {
    pub time: f64,
    pub amount: FlowFn,
}

/// Contractual cash flows as seen by the hedger (received flows positive):
/// dated lumps, an optional terminal flow, an optional continuous flow rate
/// and an optional per-step source.
#[derive(Clone, Default)]
pub struct CashFlowStream {
    lumps: Vec<Lump>,
    terminal: Option<FlowFn>,
    rate: Option<RateFlowFn>,
    step_source: Option<StepSourceFn>,
}

impl std::fmt::Debug for CashFlowStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CashFlowStream")
            .field("lumps", &self.lumps.iter().map(|l| l.time).collect::<Vec<_>>())
            .field("terminal", &self.terminal.is_some())
            .field("rate", &self.rate.is_some())
            .field("step_source", &self.step_source.is_some())
            .finish()
    }
}

impl CashFlowStream {
    /// Stream with no flows at all.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Stream with a single terminal flow.
    pub fn terminal_only(amount: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CashFlowStream {
            terminal: Some(Arc::new(amount)),
            ..Self::default()
        }
    }

    /// Adds a dated lump flow.
    pub fn with_lump(mut self, time: f64, amount: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.lumps.push(Lump {
            time,
            amount: Arc::new(amount),
        });
        self
    }

    /// Adds a continuous flow rate.
    pub fn with_rate(mut self, rate: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.rate = Some(Arc::new(rate));
        self
    }

    /// Adds a per-step source, composing with any existing one.
    pub fn with_step_source(&self, source: StepSourceFn) -> Self {
        let mut out = self.clone();
        out.step_source = Some(match self.step_source.clone() {
            None => source,
            Some(prev) => Arc::new(move |t, s, dt| prev(t, s, dt) + source(t, s, dt)),
        });
        out
    }

    /// Terminal flow at maturity, zero when absent.
    pub fn terminal_flow(&self, spot: f64) -> f64 {
        self.terminal.as_ref().map_or(0.0, |f| f(spot))
    }

    /// Sum of lumps dated within `tol` of `t`, evaluated at `spot`.
    pub fn lumps_at(&self, t: f64, tol: f64, spot: f64) -> f64 {
        self.lumps
            .iter()
            .filter(|l| (l.time - t).abs() <= tol)
            .map(|l| (l.amount)(spot))
            .sum()
    }

    /// Continuous-rate flow over a step plus the per-step source, both fixed
    /// by the step-start state and settling at the step end.
    pub fn step_flow(&self, t: f64, spot: f64, dt: f64) -> f64 {
        let from_rate = self.rate.as_ref().map_or(0.0, |r| r(t, spot) * dt);
        let from_source = self.step_source.as_ref().map_or(0.0, |s| s(t, spot, dt));
        from_rate + from_source
    }

    pub fn lumps(&self) -> &[Lump] {
        &self.lumps
    }

    pub fn has_terminal(&self) -> bool {
        self.terminal.is_some()
    }

    /// Checks every lump date lies in `[0, horizon]` and on the grid.
    pub fn validate_grid(&self, times: &[f64]) -> Result<(), ConventionError> {
        let horizon = *times.last().unwrap();
        let tol = 1e-9 * horizon.max(1.0);
        for l in &self.lumps {
            if l.time < -tol || l.time > horizon + tol {
                return Err(ConventionError::BadScenario(format!(
                    "lump at {} outside [0, {horizon}]",
                    l.time
                )));
            }
            if !times.iter().any(|&t| (t - l.time).abs() <= tol) {
                return Err(ConventionError::BadScenario(format!(
                    "lump at {} off the time grid",
                    l.time
                )));
            }
        }
        Ok(())
    }
}

/// Trading convention: how cash and asset positions are pooled and funded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConventionSpec {
    /// One account funds everything at a single rate.
    SingleCurve,
    /// Symmetric cash account; the first `unsecured` assets are funded from
    /// cash, the rest through their secured accounts with daily
    /// resettlement.
    CommonUnsecuredWithRepo { unsecured: usize },
    /// Split lending/borrowing cash rates; the first `unsecured` assets are
    /// funded from cash, the rest through their secured accounts.
    SplitCash { unsecured: usize },
    /// Long and short cash positions netted per asset against that asset's
    /// own lending/borrowing accounts; the residual wealth stays in cash.
    NettingPerAsset,
    /// Short-sale proceeds pooled into the cash account; long positions
    /// funded per asset at its borrowing rate.
    PartialNettingShorts,
}

impl ConventionSpec {
    fn unsecured_count(&self, assets: usize) -> usize {
        match self {
            ConventionSpec::SingleCurve => assets,
            ConventionSpec::CommonUnsecuredWithRepo { unsecured }
            | ConventionSpec::SplitCash { unsecured } => (*unsecured).min(assets),
            ConventionSpec::NettingPerAsset | ConventionSpec::PartialNettingShorts => 0,
        }
    }

    /// Rate-shape prerequisites of the convention.
    pub fn validate(&self, accounts: &AccountSet) -> Result<(), ConventionError> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConventionError::RateShape(what.to_string()))
            }
        };
        match self {
            ConventionSpec::SingleCurve => {
                need(accounts.symmetric_cash(), "a symmetric cash account")?;
                need(
                    accounts.asset_funding.iter().all(|f| {
                        f.is_symmetric() && f.borrow.same_as(&accounts.cash_lend)
                    }),
                    "all funding accounts equal to the cash account",
                )
            }
            ConventionSpec::CommonUnsecuredWithRepo { unsecured } => {
                need(accounts.symmetric_cash(), "a symmetric cash account")?;
                need(
                    accounts.asset_funding[(*unsecured).min(accounts.asset_funding.len())..]
                        .iter()
                        .all(|f| f.is_symmetric()),
                    "symmetric secured funding for repo assets",
                )
            }
            ConventionSpec::SplitCash { unsecured } => need(
                accounts.asset_funding[(*unsecured).min(accounts.asset_funding.len())..]
                    .iter()
                    .all(|f| f.is_symmetric()),
                "symmetric secured funding for repo assets",
            ),
            ConventionSpec::NettingPerAsset | ConventionSpec::PartialNettingShorts => Ok(()),
        }
    }
}

/// Hedge policy: position in each asset as a feedback function of `(t, S)`,
/// plus an optional repo-funded fraction for secured assets (1 keeps the
/// secured account exactly offsetting the position).
#[derive(Clone)]
pub struct StrategySpec {
    pub positions: Vec<PolicyFn>,
    pub repo_fraction: Option<PolicyFn>,
}

impl StrategySpec {
    /// No position in any of `assets` assets.
    pub fn zero(assets: usize) -> Self {
        StrategySpec {
            positions: (0..assets)
                .map(|_| Arc::new(|_t: f64, _s: &[f64]| 0.0) as PolicyFn)
                .collect(),
            repo_fraction: None,
        }
    }

    /// Constant units per asset.
    pub fn constant(units: Vec<f64>) -> Self {
        StrategySpec {
            positions: units
                .into_iter()
                .map(|u| Arc::new(move |_t: f64, _s: &[f64]| u) as PolicyFn)
                .collect(),
            repo_fraction: None,
        }
    }

    /// Single-asset policy from a closure.
    pub fn single(policy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        StrategySpec {
            positions: vec![Arc::new(move |t: f64, s: &[f64]| policy(t, s[0]))],
            repo_fraction: None,
        }
    }

    /// Sets the repo-funded fraction policy.
    pub fn with_repo_fraction(
        mut self,
        w: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.repo_fraction = Some(Arc::new(move |t: f64, s: &[f64]| w(t, s[0])));
        self
    }
}

/// Account balances actually held over a step (values, not units).
#[derive(Debug, Clone, Default)]
pub struct AccountPositions {
    /// Non-negative balance in the cash lending account.
    pub cash_lend: f64,
    /// Non-positive balance in the cash borrowing account.
    pub cash_borrow: f64,
    /// Net balance in each asset's funding account(s).
    pub asset_funding: Vec<f64>,
    /// Collateral received at the step start.
    pub margin_received: f64,
    /// Collateral posted at the step start.
    pub margin_posted: f64,
}

/// Per-path record of the wealth evolution and its exact decomposition.
#[derive(Debug, Clone)]
pub struct WealthLedger {
    pub times: Vec<f64>,
    /// Spot per asset at each grid time.
    pub spots: Vec<Vec<f64>>,
    /// Wealth at each grid time.
    pub wealth: Vec<f64>,
    /// Cumulative trading gains (including dividend credits).
    pub gains: Vec<f64>,
    /// Cumulative funding interest.
    pub funding: Vec<f64>,
    /// Cumulative margin-account cost.
    pub margin: Vec<f64>,
    /// Cumulative contractual flows received.
    pub flows: Vec<f64>,
    /// Positive flow amounts settled at each grid time.
    pub flow_in: Vec<f64>,
    /// Negative flow amounts (as positives) settled at each grid time.
    pub flow_out: Vec<f64>,
    /// Cumulative pure price gains (no dividends), for the cash process.
    pub trade_gains: Vec<f64>,
    /// Hedge units held over each step, per asset.
    pub hedge: Vec<Vec<f64>>,
    /// Account balances held over each step.
    pub positions: Vec<AccountPositions>,
}

impl WealthLedger {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn terminal_wealth(&self) -> f64 {
        *self.wealth.last().unwrap()
    }
}

pub(crate) struct StepInputs<'a> {
    pub t: f64,
    pub dt: f64,
    pub spots: &'a [f64],
    pub spots_next: &'a [f64],
    pub wealth: f64,
    pub hedge: &'a [f64],
    pub repo_fraction: &'a [f64],
}

pub(crate) struct StepOutput {
    pub wealth_next: f64,
    pub gains: f64,
    pub trade_gains: f64,
    pub funding: f64,
    pub margin: f64,
    pub positions: AccountPositions,
}

/// One accrual step of the convention on positions fixed at the step start.
/// Flows are settled by the caller afterwards.
pub(crate) fn convention_step(
    convention: &ConventionSpec,
    accounts: &AccountSet,
    yields: &[RateSpec],
    collateral: Option<&CollateralSetup>,
    inp: &StepInputs<'_>,
) -> Result<StepOutput, ConventionError> {
    let d = inp.spots.len();
    let t = inp.t;
    let t1 = t + inp.dt;
    let unsecured = convention.unsecured_count(d);

    // Collateral at the step start, against the current wealth.
    let (c_plus, c_minus, pool_adj, margin_incr) = match collateral {
        None => (0.0, 0.0, 0.0, 0.0),
        Some(setup) => {
            let c = setup.spec.amount(t, inp.spots[0], inp.wealth);
            let (beta, gamma) = setup.margin.reuse_fractions(t);
            let incr =
                margin_cost_increment(&setup.margin, c.received, c.posted, accounts, t, inp.dt)?;
            (
                c.received,
                c.posted,
                beta * c.received - gamma * c.posted,
                incr,
            )
        }
    };

    let mut gains = 0.0;
    let mut trade_gains = 0.0;
    let mut legs_funding = 0.0;
    let mut cash_base = inp.wealth + pool_adj;
    let mut asset_positions = vec![0.0; d];

    for i in 0..d {
        let pos_value = inp.hedge[i] * inp.spots[i];
        let price_gain = inp.hedge[i] * (inp.spots_next[i] - inp.spots[i]);
        trade_gains += price_gain;

        // The rate an asset's position is compensated at, per convention.
        let comp_rate: &RateSpec = match convention {
            ConventionSpec::SingleCurve => &accounts.cash_lend,
            ConventionSpec::CommonUnsecuredWithRepo { .. } | ConventionSpec::SplitCash { .. } => {
                if i < unsecured {
                    &accounts.cash_lend
                } else {
                    &accounts.asset_funding[i].borrow
                }
            }
            ConventionSpec::NettingPerAsset => {
                if pos_value >= 0.0 {
                    &accounts.asset_funding[i].borrow
                } else {
                    &accounts.asset_funding[i].lend
                }
            }
            ConventionSpec::PartialNettingShorts => &accounts.cash_lend,
        };
        let comp = comp_rate.accrual(t, t1)?;
        let dividend = if yields.is_empty() {
            0.0
        } else {
            let yield_integral = yields[i].integral(t, t1)?;
            pos_value * comp * (1.0 - (-yield_integral).exp())
        };
        gains += price_gain + dividend;

        match convention {
            ConventionSpec::SingleCurve => {
                cash_base -= pos_value;
            }
            ConventionSpec::CommonUnsecuredWithRepo { .. } | ConventionSpec::SplitCash { .. } => {
                if i < unsecured {
                    cash_base -= pos_value;
                } else {
                    let w = inp.repo_fraction[i];
                    let leg = -w * pos_value;
                    legs_funding += leg * (comp - 1.0);
                    cash_base -= (1.0 - w) * pos_value;
                    asset_positions[i] = leg;
                }
            }
            ConventionSpec::NettingPerAsset => {
                let lend = accounts.asset_funding[i].lend.accrual(t, t1)? - 1.0;
                let borrow = accounts.asset_funding[i].borrow.accrual(t, t1)? - 1.0;
                legs_funding +=
                    negative_part(pos_value) * lend - positive_part(pos_value) * borrow;
                asset_positions[i] = -pos_value;
            }
            ConventionSpec::PartialNettingShorts => {
                let borrow = accounts.asset_funding[i].borrow.accrual(t, t1)? - 1.0;
                legs_funding += -positive_part(pos_value) * borrow;
                cash_base += negative_part(pos_value);
                asset_positions[i] = -positive_part(pos_value);
            }
        }
    }

    let lend_acc = accounts.cash_lend.accrual(t, t1)?;
    let borrow_acc = accounts.cash_borrow.accrual(t, t1)?;
    let x_plus = positive_part(cash_base);
    let x_minus = negative_part(cash_base);
    let cash_funding = x_plus * (lend_acc - 1.0) - x_minus * (borrow_acc - 1.0);
    let funding = cash_funding + legs_funding;

    let wealth_next = inp.wealth + gains + funding + margin_incr;

    Ok(StepOutput {
        wealth_next,
        gains,
        trade_gains,
        funding,
        margin: margin_incr,
        positions: AccountPositions {
            cash_lend: x_plus,
            cash_borrow: -x_minus,
            asset_funding: asset_positions,
            margin_received: c_plus,
            margin_posted: c_minus,
        },
    })
}

/// Evolves the hedger's wealth along one scenario, maintaining the exact
/// decomposition `V = V0 + G + F + F_margin + A` at every grid time.
pub fn evolve_wealth(
    strategy: &StrategySpec,
    stream: &CashFlowStream,
    collateral: Option<&CollateralSetup>,
    convention: &ConventionSpec,
    accounts: &AccountSet,
    yields: &[RateSpec],
    path: &Path,
    initial_wealth: f64,
) -> Result<WealthLedger, ConventionError> {
    let d = path.assets();
    if strategy.positions.len() != d {
        return Err(ConventionError::BadScenario(format!(
            "{} hedge policies for {} assets",
            strategy.positions.len(),
            d
        )));
    }
    if accounts.asset_funding.len() < d {
        return Err(ConventionError::BadScenario(format!(
            "{} funding curves for {} assets",
            accounts.asset_funding.len(),
            d
        )));
    }
    if !yields.is_empty() && yields.len() != d {
        return Err(ConventionError::BadScenario(
            "one dividend yield per asset (or none)".to_string(),
        ));
    }
    if path.times.len() < 2 || path.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConventionError::BadScenario(
            "a strictly increasing time grid".to_string(),
        ));
    }
    convention.validate(accounts)?;
    if let Some(setup) = collateral {
        setup.margin.validate()?;
    }
    stream.validate_grid(&path.times)?;

    let n_steps = path.steps();
    let horizon = *path.times.last().unwrap();
    let flow_tol = 1e-9 * horizon.max(1.0);

    let mut ledger = WealthLedger {
        times: path.times.clone(),
        spots: path.spots.clone(),
        wealth: Vec::with_capacity(n_steps + 1),
        gains: Vec::with_capacity(n_steps + 1),
        funding: Vec::with_capacity(n_steps + 1),
        margin: Vec::with_capacity(n_steps + 1),
        flows: Vec::with_capacity(n_steps + 1),
        flow_in: Vec::with_capacity(n_steps + 1),
        flow_out: Vec::with_capacity(n_steps + 1),
        trade_gains: Vec::with_capacity(n_steps + 1),
        hedge: Vec::with_capacity(n_steps),
        positions: Vec::with_capacity(n_steps),
    };

    // Flows dated at the start settle into the initial wealth.
    let initial_flow = stream.lumps_at(path.times[0], flow_tol, path.spots[0][0]);
    let mut wealth = initial_wealth + initial_flow;
    let mut cum_gains = 0.0;
    let mut cum_funding = 0.0;
    let mut cum_margin = 0.0;
    let mut cum_flows = initial_flow;
    let mut cum_trade = 0.0;

    ledger.wealth.push(wealth);
    ledger.gains.push(0.0);
    ledger.funding.push(0.0);
    ledger.margin.push(0.0);
    ledger.flows.push(cum_flows);
    ledger.flow_in.push(positive_part(initial_flow));
    ledger.flow_out.push(negative_part(initial_flow));
    ledger.trade_gains.push(0.0);

    let spots_now: Vec<Vec<f64>> = (0..=n_steps).map(|n| path.spots_at(n)).collect();

    for n in 0..n_steps {
        let t = path.times[n];
        let dt = path.times[n + 1] - t;
        let spots = &spots_now[n];
        let spots_next = &spots_now[n + 1];

        let hedge: Vec<f64> = strategy
            .positions
            .iter()
            .map(|p| p(t, spots))
            .collect();
        if hedge.iter().any(|h| !h.is_finite()) {
            return Err(ConventionError::BadScenario(format!(
                "non-finite hedge at t = {t}"
            )));
        }
        let w = strategy
            .repo_fraction
            .as_ref()
            .map_or(1.0, |f| f(t, spots));
        let repo_fraction = vec![w; d];

        let out = convention_step(
            convention,
            accounts,
            yields,
            collateral,
            &StepInputs {
                t,
                dt,
                spots,
                spots_next,
                wealth,
                hedge: &hedge,
                repo_fraction: &repo_fraction,
            },
        )?;

        // Settle flows dated at the step end, plus step-linked flows.
        let lumps = if n + 1 == n_steps {
            stream.terminal_flow(spots_next[0])
                + stream.lumps_at(path.times[n + 1], flow_tol, spots_next[0])
        } else {
            stream.lumps_at(path.times[n + 1], flow_tol, spots_next[0])
        };
        let step_flow = stream.step_flow(t, spots[0], dt);
        let flow = lumps + step_flow;

        wealth = out.wealth_next + flow;
        cum_gains += out.gains;
        cum_funding += out.funding;
        cum_margin += out.margin;
        cum_flows += flow;
        cum_trade += out.trade_gains;

        ledger.wealth.push(wealth);
        ledger.gains.push(cum_gains);
        ledger.funding.push(cum_funding);
        ledger.margin.push(cum_margin);
        ledger.flows.push(cum_flows);
        ledger.flow_in.push(positive_part(flow));
        ledger.flow_out.push(negative_part(flow));
        ledger.trade_gains.push(cum_trade);
        ledger.hedge.push(hedge);
        ledger.positions.push(out.positions);
    }

    Ok(ledger)
}

/// The four components of the wealth decomposition, cumulative per step.
pub fn decompose(ledger: &WealthLedger) -> (&[f64], &[f64], &[f64], &[f64]) {
    (
        &ledger.gains,
        &ledger.funding,
        &ledger.margin,
        &ledger.flows,
    )
}

/// Netted wealth: the ledger's wealth with the contract's flows stripped
/// out by reinvesting received flows at the borrowing rate and funding paid
/// flows at the lending rate.
pub fn netted_wealth(
    ledger: &WealthLedger,
    accounts: &AccountSet,
) -> Result<Vec<f64>, ConventionError> {
    let mut strip_in = 0.0;
    let mut strip_out = 0.0;
    let mut out = Vec::with_capacity(ledger.times.len());
    for n in 0..ledger.times.len() {
        if n > 0 {
            let t0 = ledger.times[n - 1];
            let t1 = ledger.times[n];
            strip_in *= accounts.cash_borrow.accrual(t0, t1)?;
            strip_out *= accounts.cash_lend.accrual(t0, t1)?;
        }
        strip_in += ledger.flow_in[n];
        strip_out += ledger.flow_out[n];
        out.push(ledger.wealth[n] - strip_in + strip_out);
    }
    Ok(out)
}

/// The cash process financing the portfolio: wealth minus accumulated pure
/// price gains. Equals `V0 + F + F_margin + dividend credits + A`.
pub fn cash_process(ledger: &WealthLedger) -> Vec<f64> {
    ledger
        .wealth
        .iter()
        .zip(&ledger.trade_gains)
        .map(|(v, g)| v - g)
        .collect()
}

/// Maximum absolute defect of the decomposition identity
/// `V = V0 + G + F + F_margin + A` over the ledger.
pub fn self_financing_residual(ledger: &WealthLedger) -> f64 {
    let v0 = ledger.wealth[0] - ledger.flows[0];
    (0..ledger.times.len())
        .map(|n| {
            (ledger.wealth[n]
                - (v0 + ledger.gains[n] + ledger.funding[n] + ledger.margin[n] + ledger.flows[n]))
                .abs()
        })
        .fold(0.0, f64::max)
}
