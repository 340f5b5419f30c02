//! Backward solution of the pricing equations on the lattice.
//!
//! The stored surface holds the value of the remaining contract flows to
//! the hedger: the terminal layer is the contract's own terminal flow, and
//! interior layers are ex-flow values. A sold option therefore has a
//! negative value at the root, and the wealth that replicates the position
//! starts at the negative of that value with the negated hedge surface.
//!
//! All operations run through one backward engine (`solve_backward`), so
//! discount-switched variants share their accumulation machinery. Per-step
//! sources settle at the step end and are discounted with the step, exactly
//! mirroring the wealth-engine accrual conventions; endogenous collateral
//! is evaluated against the candidate value at each node through the same
//! collateral code the wealth engine uses.

use std::sync::Arc;

use crate::collateral::{margin_cost_increment, CollateralSetup, CollateralSpec, MarginConvention};
use crate::error::{MarketError, SolverError};
use crate::expr::Expr;
use crate::market::{AccountSet, EquityModel, Lattice, OrderingCertificate, RateSpec};
use crate::wealth::{CashFlowStream, ConventionSpec, StrategySpec};

/// Triangular node-indexed surface: layer `n` has `n + 1` entries.
#[derive(Debug, Clone)]
pub struct Surface {
    steps: usize,
    data: Vec<f64>,
}

impl Surface {
    pub fn zeros(steps: usize) -> Self {
        Surface {
            steps,
            data: vec![0.0; (steps + 1) * (steps + 2) / 2],
        }
    }

    #[inline]
    fn offset(n: usize) -> usize {
        n * (n + 1) / 2
    }

    #[inline]
    pub fn get(&self, n: usize, j: usize) -> f64 {
        self.data[Self::offset(n) + j]
    }

    #[inline]
    pub fn set(&mut self, n: usize, j: usize, value: f64) {
        self.data[Self::offset(n) + j] = value;
    }

    pub fn layer(&self, n: usize) -> &[f64] {
        &self.data[Self::offset(n)..Self::offset(n) + n + 1]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Where the per-node fixed point starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPointStart {
    /// Start from the discounted expectation (the linear estimate).
    LinearEstimate,
    /// Start from zero; used to probe uniqueness of the fixed point.
    Zero,
}

/// Solver tolerances.
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    /// Fixed-point tolerance per node, applied at the node's value scale
    /// (`delta <= tolerance * (1 + |value|)`).
    pub tolerance: f64,
    /// Iteration cap per node.
    pub max_iterations: u32,
    /// Also solve on half the steps and report the coarse price.
    pub coarse_diagnostic: bool,
    pub start: FixedPointStart,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-13,
            max_iterations: 50,
            coarse_diagnostic: true,
            start: FixedPointStart::LinearEstimate,
        }
    }
}

/// Solution of a backward pricing run.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    /// Value of the remaining contract flows, per node; the terminal layer
    /// is the contractual terminal flow.
    pub value: Surface,
    /// Hedge surface, one layer per step.
    pub hedge: Surface,
    /// Fixed-point iterations spent per value node.
    pub iterations: Vec<u32>,
    /// Root value.
    pub price: f64,
    /// Price recomputed on half the steps, when requested.
    pub price_coarse: Option<f64>,
    /// Largest per-node iteration count.
    pub max_iterations_used: u32,
}

impl BsdeSolution {
    pub fn steps(&self) -> usize {
        self.value.steps()
    }

    /// Iterations spent at node `(n, j)`.
    pub fn iterations_at(&self, n: usize, j: usize) -> u32 {
        self.iterations[Surface::offset(n) + j]
    }
}

/// State handed to per-node sources.
pub(crate) struct NodeCtx {
    pub step: usize,
    pub index: usize,
    pub t: f64,
    pub dt: f64,
    pub spot: f64,
    /// Candidate node value: the running fixed-point iterate for implicit
    /// sources, the discounted expectation for explicit ones.
    pub value: f64,
    pub hedge: f64,
}

pub(crate) enum Source<'a> {
    None,
    /// Evaluated once against the discounted expectation.
    Explicit(&'a dyn Fn(&NodeCtx) -> f64),
    /// Iterated to the node fixed point.
    Implicit(&'a dyn Fn(&NodeCtx) -> f64),
}

pub(crate) struct Backward<'a> {
    pub lattice: &'a Lattice,
    /// Drift defining the one-step weights.
    pub drift: &'a RateSpec,
    /// Per-step discount rate.
    pub discount: &'a RateSpec,
    pub stream: &'a CashFlowStream,
    pub source: Source<'a>,
    /// Terminal layer supplied directly instead of from the stream.
    pub terminal_override: Option<&'a [f64]>,
}

/// Backward induction over the lattice. Interior lump flows are folded into
/// the successor values (so the hedge replicates value plus flows), the
/// terminal layer is the contract's terminal flow, and sources settle at
/// step ends inside the step discount.
pub(crate) fn solve_backward(
    bw: &Backward<'_>,
    settings: &SolverSettings,
) -> Result<BsdeSolution, SolverError> {
    let lat = bw.lattice;
    let n_steps = lat.steps();
    let dt = lat.dt();
    let maturity = lat.maturity();
    let weights = lat.weights(bw.drift)?;
    bw.discount.check_grid_alignment(dt, n_steps)?;
    if bw.discount.horizon() < maturity - 1e-9 {
        return Err(SolverError::Market(MarketError::OutOfDomain {
            t: maturity,
            horizon: bw.discount.horizon(),
        }));
    }

    let flow_tol = 1e-9 * maturity.max(1.0);
    let mut value = Surface::zeros(n_steps);
    let mut hedge = Surface::zeros(n_steps.saturating_sub(1));
    let mut iterations = vec![0u32; (n_steps + 1) * (n_steps + 2) / 2];
    let mut max_iter_used = 0u32;

    match bw.terminal_override {
        Some(layer) => {
            if layer.len() != n_steps + 1 {
                return Err(SolverError::Setup(format!(
                    "terminal layer of {} values for {} nodes",
                    layer.len(),
                    n_steps + 1
                )));
            }
            for (j, &v) in layer.iter().enumerate() {
                value.set(n_steps, j, v);
            }
        }
        None => {
            for j in 0..=n_steps {
                let s = lat.node_spot(n_steps, j);
                value.set(
                    n_steps,
                    j,
                    bw.stream.terminal_flow(s) + bw.stream.lumps_at(maturity, flow_tol, s),
                );
            }
        }
    }

    for n in (0..n_steps).rev() {
        let t = lat.time(n);
        let t_next = lat.time(n + 1);
        let disc = (-bw.discount.integral(t, t_next)?).exp();
        let q = weights[n];
        let interior = n + 1 < n_steps;
        for j in 0..=n {
            let s = lat.node_spot(n, j);
            let s_up = lat.node_spot(n + 1, j + 1);
            let s_down = lat.node_spot(n + 1, j);
            let mut z_up = value.get(n + 1, j + 1);
            let mut z_down = value.get(n + 1, j);
            if interior {
                z_up += bw.stream.lumps_at(t_next, flow_tol, s_up);
                z_down += bw.stream.lumps_at(t_next, flow_tol, s_down);
            }
            let expect = q * z_up + (1.0 - q) * z_down;
            let xi = (z_up - z_down) / (s_up - s_down);
            let carried = expect + bw.stream.step_flow(t, s, dt);
            let base = disc * carried;

            let mut iters = 0u32;
            let z = match &bw.source {
                Source::None => base,
                Source::Explicit(f) => {
                    let ctx = NodeCtx {
                        step: n,
                        index: j,
                        t,
                        dt,
                        spot: s,
                        value: base,
                        hedge: xi,
                    };
                    disc * (carried + f(&ctx))
                }
                Source::Implicit(f) => {
                    let mut z = match settings.start {
                        FixedPointStart::LinearEstimate => base,
                        FixedPointStart::Zero => 0.0,
                    };
                    let mut converged = false;
                    while iters < settings.max_iterations {
                        let ctx = NodeCtx {
                            step: n,
                            index: j,
                            t,
                            dt,
                            spot: s,
                            value: z,
                            hedge: xi,
                        };
                        let next = disc * (carried + f(&ctx));
                        iters += 1;
                        let delta = (next - z).abs();
                        z = next;
                        if delta <= settings.tolerance * (1.0 + z.abs()) {
                            converged = true;
                            break;
                        }
                    }
                    if !converged {
                        let ctx = NodeCtx {
                            step: n,
                            index: j,
                            t,
                            dt,
                            spot: s,
                            value: z,
                            hedge: xi,
                        };
                        let next = disc * (carried + f(&ctx));
                        return Err(SolverError::FixedPoint {
                            step: n,
                            index: j,
                            delta: (next - z).abs(),
                        });
                    }
                    z
                }
            };
            value.set(n, j, z);
            hedge.set(n, j, xi);
            iterations[Surface::offset(n) + j] = iters;
            max_iter_used = max_iter_used.max(iters);
        }
    }

    let price = value.get(0, 0);
    Ok(BsdeSolution {
        value,
        hedge,
        iterations,
        price,
        price_coarse: None,
        max_iterations_used: max_iter_used,
    })
}

fn with_coarse(
    lattice: &Lattice,
    settings: &SolverSettings,
    solve_on: impl Fn(&Lattice) -> Result<BsdeSolution, SolverError>,
) -> Result<BsdeSolution, SolverError> {
    let mut sol = solve_on(lattice)?;
    if settings.coarse_diagnostic && lattice.steps() >= 2 && lattice.steps() % 2 == 0 {
        let half = lattice.with_steps(lattice.steps() / 2)?;
        sol.price_coarse = Some(solve_on(&half)?.price);
    }
    Ok(sol)
}

/// Nonlinear generator of a pricing equation, with the account that
/// discounts it and a Lipschitz bound in `(value, hedge)` used for the
/// contraction guarantee.
#[derive(Clone)]
pub struct Driver {
    pub discount: RateSpec,
    /// `(t, spot, value, hedge) -> currency / year`, added to the value.
    pub generator: Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>,
    pub lipschitz: f64,
}

impl std::fmt::Debug for Driver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Driver")
            .field("discount", &self.discount)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Solves the pricing equation for an arbitrary Lipschitz driver. Refuses
/// grids on which the per-node fixed point is not a contraction.
pub fn solve_bsde(
    lattice: &Lattice,
    driver: &Driver,
    stream: &CashFlowStream,
    drift: &RateSpec,
    settings: &SolverSettings,
) -> Result<BsdeSolution, SolverError> {
    let product = driver.lipschitz * lattice.dt();
    if product >= 1.0 {
        let required = (driver.lipschitz * lattice.maturity()).floor() as usize + 1;
        return Err(SolverError::NonContraction {
            product,
            required_steps: required,
        });
    }
    with_coarse(lattice, settings, |lat| {
        let gen = driver.generator.clone();
        let src = move |ctx: &NodeCtx| gen(ctx.t, ctx.spot, ctx.value, ctx.hedge) * ctx.dt;
        solve_backward(
            &Backward {
                lattice: lat,
                drift,
                discount: &driver.discount,
                stream,
                source: Source::Implicit(&src),
                terminal_override: None,
            },
            settings,
        )
    })
}

/// Per-step margin cost of an exogenous collateral profile under
/// segregation; the same increment the wealth engine books, so folding it
/// into the cash-flow stream is an exact identity.
pub fn exogenous_margin_source(
    collateral: &Expr,
    accounts: &AccountSet,
    t: f64,
    spot: f64,
    dt: f64,
) -> f64 {
    let c = collateral.eval(t, spot);
    margin_cost_increment(
        &MarginConvention::Segregated,
        c.max(0.0),
        (-c).max(0.0),
        accounts,
        t,
        dt,
    )
    .expect("margin rates cover the pricing horizon")
}

/// The three-account shape: a symmetric cash account, a symmetric secured
/// funding account for the first asset, a symmetric margin remuneration
/// rate, and margin reinvest/borrow at the cash rate.
pub(crate) fn three_account_rates(
    accounts: &AccountSet,
) -> Result<(RateSpec, RateSpec, RateSpec), SolverError> {
    if !accounts.symmetric_cash() {
        return Err(SolverError::Setup("a symmetric cash account".to_string()));
    }
    let funding = accounts
        .asset_funding
        .first()
        .ok_or_else(|| SolverError::Setup("a funding curve for the asset".to_string()))?;
    if !funding.is_symmetric() {
        return Err(SolverError::Setup(
            "a symmetric secured funding account".to_string(),
        ));
    }
    if !accounts.symmetric_margin_remuneration() {
        return Err(SolverError::Setup(
            "a symmetric margin remuneration rate".to_string(),
        ));
    }
    if !accounts.margin_reinvest.same_as(&accounts.cash_lend)
        || !accounts.margin_borrow.same_as(&accounts.cash_lend)
    {
        return Err(SolverError::Setup(
            "margin reinvest/borrow at the cash rate".to_string(),
        ));
    }
    Ok((
        accounts.cash_lend.clone(),
        funding.borrow.clone(),
        accounts.margin_remuneration_received.clone(),
    ))
}

/// Both discounting routes for a contract with an exogenous collateral
/// profile.
#[derive(Debug, Clone)]
pub struct DualRouteQuote {
    /// Cash-account discounting with the margin cost as source.
    pub cash_route: BsdeSolution,
    /// Margin-rate discounting with the compensated source; an independent
    /// first-order discretization of the same value.
    pub margin_route: BsdeSolution,
}

impl DualRouteQuote {
    pub fn gap(&self) -> f64 {
        (self.cash_route.price - self.margin_route.price).abs()
    }

    pub fn hedge(&self) -> &Surface {
        &self.cash_route.hedge
    }
}

/// Prices a contract collateralized by an exogenous profile `C(t, S)`
/// through both discounting routes.
pub fn price_exogenous_collateral(
    lattice: &Lattice,
    equity: &EquityModel,
    accounts: &AccountSet,
    stream: &CashFlowStream,
    collateral: &Expr,
    settings: &SolverSettings,
) -> Result<DualRouteQuote, SolverError> {
    let (r0, r1, rc) = three_account_rates(accounts)?;
    let drift = r1.minus(&equity.dividend_yield);

    let cash_route = with_coarse(lattice, settings, |lat| {
        let src = |ctx: &NodeCtx| exogenous_margin_source(collateral, accounts, ctx.t, ctx.spot, ctx.dt);
        solve_backward(
            &Backward {
                lattice: lat,
                drift: &drift,
                discount: &r0,
                stream,
                source: Source::Explicit(&src),
                terminal_override: None,
            },
            settings,
        )
    })?;

    // Margin-rate discounting: the discount switch is compensated exactly
    // through the implicit value term, while the collateral term accrues
    // the funding basis as a spread. For zero collateral this collapses to
    // the cash route; otherwise the two routes stay independent first-order
    // discretizations of the same value.
    let margin_route = with_coarse(lattice, settings, |lat| {
        let src = |ctx: &NodeCtx| {
            let c = collateral.eval(ctx.t, ctx.spot);
            let t1 = ctx.t + ctx.dt;
            let basis = (r0.integral(ctx.t, t1).unwrap() - rc.integral(ctx.t, t1).unwrap()).exp();
            let a0 = r0.accrual(ctx.t, t1).unwrap();
            let ac = rc.accrual(ctx.t, t1).unwrap();
            c * (basis - 1.0) - ctx.value * (a0 - ac)
        };
        solve_backward(
            &Backward {
                lattice: lat,
                drift: &drift,
                discount: &rc,
                stream,
                source: Source::Implicit(&src),
                terminal_override: None,
            },
            settings,
        )
    })?;

    Ok(DualRouteQuote {
        cash_route,
        margin_route,
    })
}

/// Prices a fully collateralized contract: plain expectation under the
/// funded-asset drift, discounted at the margin remuneration rate.
pub fn price_full_collateral(
    lattice: &Lattice,
    equity: &EquityModel,
    accounts: &AccountSet,
    stream: &CashFlowStream,
    settings: &SolverSettings,
) -> Result<BsdeSolution, SolverError> {
    let (_r0, r1, rc) = three_account_rates(accounts)?;
    let drift = r1.minus(&equity.dividend_yield);
    with_coarse(lattice, settings, |lat| {
        solve_backward(
            &Backward {
                lattice: lat,
                drift: &drift,
                discount: &rc,
                stream,
                source: Source::None,
                terminal_override: None,
            },
            settings,
        )
    })
}

/// Prices a contract whose collateral is linked to the hedger's own value
/// (full, haircut or proportional specifications) under the given margin
/// convention. The collateral is evaluated against the candidate value at
/// each node through the same code the wealth engine uses, so the backward
/// pass mirrors the forward ledger exactly.
pub fn price_hedger_collateral(
    lattice: &Lattice,
    equity: &EquityModel,
    accounts: &AccountSet,
    stream: &CashFlowStream,
    setup: &CollateralSetup,
    settings: &SolverSettings,
) -> Result<BsdeSolution, SolverError> {
    if !accounts.symmetric_cash() {
        return Err(SolverError::Setup("a symmetric cash account".to_string()));
    }
    let funding = accounts
        .asset_funding
        .first()
        .ok_or_else(|| SolverError::Setup("a funding curve for the asset".to_string()))?;
    if !funding.is_symmetric() {
        return Err(SolverError::Setup(
            "a symmetric secured funding account".to_string(),
        ));
    }
    setup
        .margin
        .validate()
        .map_err(|e| SolverError::Setup(e.to_string()))?;
    let r0 = accounts.cash_lend.clone();
    let drift = funding.borrow.minus(&equity.dividend_yield);

    with_coarse(lattice, settings, |lat| {
        let src = |ctx: &NodeCtx| {
            let wealth = -ctx.value;
            let c = setup.spec.amount(ctx.t, ctx.spot, wealth);
            let (beta, gamma) = setup.margin.reuse_fractions(ctx.t);
            let pool = beta * c.received - gamma * c.posted;
            let a0 = r0.accrual(ctx.t, ctx.t + ctx.dt).unwrap() - 1.0;
            let mc = margin_cost_increment(
                &setup.margin,
                c.received,
                c.posted,
                accounts,
                ctx.t,
                ctx.dt,
            )
            .unwrap();
            mc + pool * a0
        };
        solve_backward(
            &Backward {
                lattice: lat,
                drift: &drift,
                discount: &r0,
                stream,
                source: Source::Implicit(&src),
                terminal_override: None,
            },
            settings,
        )
    })
}

/// Asymmetric-rate price together with the rate-ordering certificate it was
/// solved under.
#[derive(Debug, Clone)]
pub struct AsymmetricQuote {
    pub solution: BsdeSolution,
    pub certificate: OrderingCertificate,
}

/// Prices an uncollateralized contract under split cash rates. With the
/// shorts-pooled convention long positions are funded per asset at its
/// borrowing rate and short proceeds earn the cash lending rate; with the
/// split-cash convention the asset is repo funded and only the cash account
/// splits. A violated rate ordering is reported in the certificate but the
/// equation is still solved.
pub fn price_asymmetric_rates(
    lattice: &Lattice,
    equity: &EquityModel,
    accounts: &AccountSet,
    stream: &CashFlowStream,
    convention: &ConventionSpec,
    settings: &SolverSettings,
) -> Result<AsymmetricQuote, SolverError> {
    let certificate = accounts.ordering_certificate();
    let lend = accounts.cash_lend.clone();
    let borrow = accounts.cash_borrow.clone();

    let solution = match convention {
        ConventionSpec::PartialNettingShorts => {
            let drift = lend.minus(&equity.dividend_yield);
            let funding = accounts
                .asset_funding
                .first()
                .ok_or_else(|| SolverError::Setup("a funding curve for the asset".to_string()))?
                .borrow
                .clone();
            with_coarse(lattice, settings, |lat| {
                let src = |ctx: &NodeCtx| {
                    let t1 = ctx.t + ctx.dt;
                    let a_lend = lend.accrual(ctx.t, t1).unwrap() - 1.0;
                    let a_borrow = borrow.accrual(ctx.t, t1).unwrap() - 1.0;
                    let a_fund = funding.accrual(ctx.t, t1).unwrap() - 1.0;
                    let u = ctx.hedge * ctx.spot;
                    let w = ctx.value - u.max(0.0);
                    ctx.value * a_lend - u * a_lend - (-u).max(0.0) * a_fund
                        + (-w).max(0.0) * a_lend
                        - w.max(0.0) * a_borrow
                };
                solve_backward(
                    &Backward {
                        lattice: lat,
                        drift: &drift,
                        discount: &lend,
                        stream,
                        source: Source::Implicit(&src),
                        terminal_override: None,
            },
                    settings,
                )
            })?
        }
        ConventionSpec::SplitCash { .. } => {
            let funding = accounts
                .asset_funding
                .first()
                .ok_or_else(|| SolverError::Setup("a funding curve for the asset".to_string()))?;
            let repo = funding
                .secured_rate()
                .map_err(|e| SolverError::Setup(e.to_string()))?
                .clone();
            let drift = repo.minus(&equity.dividend_yield);
            with_coarse(lattice, settings, |lat| {
                let src = |ctx: &NodeCtx| {
                    let t1 = ctx.t + ctx.dt;
                    let a_lend = lend.accrual(ctx.t, t1).unwrap() - 1.0;
                    let a_borrow = borrow.accrual(ctx.t, t1).unwrap() - 1.0;
                    ctx.value.max(0.0) * (a_lend - a_borrow)
                };
                solve_backward(
                    &Backward {
                        lattice: lat,
                        drift: &drift,
                        discount: &lend,
                        stream,
                        source: Source::Implicit(&src),
                        terminal_override: None,
            },
                    settings,
                )
            })?
        }
        other => {
            return Err(SolverError::Setup(format!(
                "a shorts-pooled or split-cash convention, got {other:?}"
            )))
        }
    };

    Ok(AsymmetricQuote {
        solution,
        certificate,
    })
}

/// Prices under the three-account setting when the secured account does not
/// fully offset the stock position: `repo_fraction` of the hedge is repo
/// funded and the remainder sits on the cash account, earning or paying the
/// funding basis.
pub fn price_unsecured_hedge_extension(
    lattice: &Lattice,
    equity: &EquityModel,
    accounts: &AccountSet,
    stream: &CashFlowStream,
    collateral: Option<&Expr>,
    repo_fraction: &Expr,
    settings: &SolverSettings,
) -> Result<BsdeSolution, SolverError> {
    let (r0, r1, _rc) = three_account_rates(accounts)?;
    let drift = r1.minus(&equity.dividend_yield);
    with_coarse(lattice, settings, |lat| {
        let src = |ctx: &NodeCtx| {
            let t1 = ctx.t + ctx.dt;
            let a0 = r0.accrual(ctx.t, t1).unwrap();
            let a1 = r1.accrual(ctx.t, t1).unwrap();
            let margin = collateral.map_or(0.0, |c| {
                exogenous_margin_source(c, accounts, ctx.t, ctx.spot, ctx.dt)
            });
            let unsecured = (1.0 - repo_fraction.eval(ctx.t, ctx.spot)) * ctx.hedge * ctx.spot;
            margin + unsecured * (a0 - a1)
        };
        solve_backward(
            &Backward {
                lattice: lat,
                drift: &drift,
                discount: &r0,
                stream,
                source: Source::Explicit(&src),
                terminal_override: None,
            },
            settings,
        )
    })
}

/// The hedge surface of a solution.
pub fn hedge_ratio(solution: &BsdeSolution) -> &Surface {
    &solution.hedge
}

/// Feedback strategy that replicates the solved contract: the negated hedge
/// surface, looked up at the nearest node.
pub fn replication_strategy(lattice: &Lattice, solution: &BsdeSolution) -> StrategySpec {
    let lat = lattice.clone();
    let hedge = solution.hedge.clone();
    StrategySpec::single(move |t, s| {
        let (n, j) = lat.locate(t, s);
        let n = n.min(hedge.steps());
        -hedge.get(n, j.min(n))
    })
}

/// Initial wealth of the replicating portfolio.
pub fn replication_initial_wealth(solution: &BsdeSolution) -> f64 {
    -solution.price
}

/// Wealth-engine configuration whose forward ledger mirrors a pricing
/// operation; used to close replication tests.
pub fn three_account_convention() -> ConventionSpec {
    ConventionSpec::CommonUnsecuredWithRepo { unsecured: 0 }
}

/// Collateral setup matching `price_exogenous_collateral`.
pub fn exogenous_setup(collateral: &Expr) -> CollateralSetup {
    CollateralSetup {
        spec: CollateralSpec::Exogenous(collateral.clone()),
        margin: MarginConvention::Segregated,
    }
}
