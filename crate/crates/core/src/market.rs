//! Market data: piecewise-constant rate curves, funding account sets, the
//! equity model and its two discretizations (recombining lattice and seeded
//! Monte Carlo paths).

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MarketError;

const TIME_EPS: f64 = 1e-9;

/// Deterministic piecewise-constant per-annum rate (continuously compounded).
///
/// `breakpoints` are strictly increasing, start at 0 and end at the curve
/// horizon; `values` holds one rate per interval, left-closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl RateSpec {
    /// Flat rate over `[0, horizon]`.
    pub fn flat(rate: f64, horizon: f64) -> Self {
        RateSpec {
            breakpoints: vec![0.0, horizon],
            values: vec![rate],
        }
    }

    /// Piecewise-constant rate. `breakpoints.len()` must equal
    /// `values.len() + 1`, with `breakpoints[0] == 0`.
    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, MarketError> {
        if breakpoints.len() != values.len() + 1 {
            return Err(MarketError::InvalidCurve(format!(
                "{} breakpoints for {} values; expected one more breakpoint than values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.is_empty() || breakpoints[0] != 0.0 {
            return Err(MarketError::InvalidCurve(
                "breakpoints to start at 0".to_string(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MarketError::InvalidCurve(
                "strictly increasing breakpoints".to_string(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MarketError::InvalidCurve("finite values".to_string()));
        }
        Ok(RateSpec {
            breakpoints,
            values,
        })
    }

    /// End of the curve domain.
    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Value on the interval containing `t` (left-closed; the horizon maps to
    /// the last interval). Times within 1e-9 of a breakpoint snap to it.
    pub fn value_at(&self, t: f64) -> f64 {
        let mut idx = 0usize;
        for (i, &b) in self.breakpoints.iter().enumerate().skip(1) {
            if t >= b - TIME_EPS {
                idx = i;
            } else {
                break;
            }
        }
        self.values[idx.min(self.values.len() - 1)]
    }

    /// Exact integral of the rate over `[t0, t1]`.
    pub fn integral(&self, t0: f64, t1: f64) -> Result<f64, MarketError> {
        if t0 > t1 {
            return Err(MarketError::BadInterval { t0, t1 });
        }
        let horizon = self.horizon();
        if t0 < -TIME_EPS || t1 > horizon + TIME_EPS {
            return Err(MarketError::OutOfDomain {
                t: if t0 < -TIME_EPS { t0 } else { t1 },
                horizon,
            });
        }
        let mut acc = 0.0;
        for (i, &r) in self.values.iter().enumerate() {
            let lo = self.breakpoints[i].max(t0);
            let hi = self.breakpoints[i + 1].min(t1);
            if hi > lo {
                acc += r * (hi - lo);
            }
        }
        Ok(acc)
    }

    /// Growth factor `exp(integral of the rate over [t0, t1])`, exact on the
    /// piecewise-constant rate.
    pub fn accrual(&self, t0: f64, t1: f64) -> Result<f64, MarketError> {
        Ok(self.integral(t0, t1)?.exp())
    }

    /// True when the curve takes a single value over its whole domain.
    pub fn is_flat(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }

    /// True when the two curves agree at every point of the union grid.
    pub fn same_as(&self, other: &RateSpec) -> bool {
        let merged = merge_breakpoints(&[self, other]);
        merged
            .windows(2)
            .all(|w| self.value_at(w[0]) == other.value_at(w[0]))
    }

    /// Pointwise combination of two curves on the union of their breakpoints.
    pub fn combine(&self, other: &RateSpec, f: impl Fn(f64, f64) -> f64) -> RateSpec {
        let breakpoints = merge_breakpoints(&[self, other]);
        let values = breakpoints
            .windows(2)
            .map(|w| f(self.value_at(w[0]), other.value_at(w[0])))
            .collect();
        RateSpec {
            breakpoints,
            values,
        }
    }

    /// Pointwise difference `self - other`.
    pub fn minus(&self, other: &RateSpec) -> RateSpec {
        self.combine(other, |a, b| a - b)
    }

    /// Checks that every interior breakpoint lies on the uniform grid with
    /// `n` steps of size `dt`; refuses to interpolate otherwise.
    pub fn check_grid_alignment(&self, dt: f64, n: usize) -> Result<(), MarketError> {
        for &b in &self.breakpoints[1..self.breakpoints.len().saturating_sub(1) + 1] {
            if b > n as f64 * dt + TIME_EPS {
                continue;
            }
            let steps = b / dt;
            if (steps - steps.round()).abs() > 1e-6 {
                return Err(MarketError::MisalignedBreakpoint {
                    breakpoint: b,
                    dt,
                    n,
                });
            }
        }
        Ok(())
    }

    /// Breakpoints of the curve.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Per-interval values of the curve.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn merge_breakpoints(curves: &[&RateSpec]) -> Vec<f64> {
    let mut all: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.breakpoints.iter().copied())
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS);
    all
}

/// Long/short funding rates for one risky asset. A single secured (repo)
/// rate is the symmetric case `lend == borrow`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetFunding {
    pub lend: RateSpec,
    pub borrow: RateSpec,
}

impl AssetFunding {
    pub fn symmetric(rate: RateSpec) -> Self {
        AssetFunding {
            lend: rate.clone(),
            borrow: rate,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.lend.same_as(&self.borrow)
    }

    /// The single secured funding rate; errors when long and short rates
    /// differ.
    pub fn secured_rate(&self) -> Result<&RateSpec, MarketError> {
        if self.is_symmetric() {
            Ok(&self.borrow)
        } else {
            Err(MarketError::InvalidCurve(
                "a single secured funding rate (lend == borrow)".to_string(),
            ))
        }
    }
}

/// The full set of accrual curves a hedger faces: unsecured cash lending and
/// borrowing, per-asset funding, margin remuneration and margin
/// reinvest/borrow accounts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccountSet {
    /// Unsecured cash lending rate.
    pub cash_lend: RateSpec,
    /// Unsecured cash borrowing rate.
    pub cash_borrow: RateSpec,
    /// Funding rates per risky asset.
    pub asset_funding: Vec<AssetFunding>,
    /// Interest the hedger pays on collateral received.
    pub margin_remuneration_received: RateSpec,
    /// Interest the hedger earns on collateral posted.
    pub margin_remuneration_posted: RateSpec,
    /// Account where received collateral is reinvested under segregation.
    pub margin_reinvest: RateSpec,
    /// Account used to raise collateral the hedger posts.
    pub margin_borrow: RateSpec,
}

impl AccountSet {
    /// All accounts at one flat rate; convenient for symmetric fixtures.
    pub fn uniform(rate: f64, assets: usize, horizon: f64) -> Self {
        let r = RateSpec::flat(rate, horizon);
        AccountSet {
            cash_lend: r.clone(),
            cash_borrow: r.clone(),
            asset_funding: vec![AssetFunding::symmetric(r.clone()); assets],
            margin_remuneration_received: r.clone(),
            margin_remuneration_posted: r.clone(),
            margin_reinvest: r.clone(),
            margin_borrow: r,
        }
    }

    pub fn symmetric_cash(&self) -> bool {
        self.cash_lend.same_as(&self.cash_borrow)
    }

    pub fn symmetric_margin_remuneration(&self) -> bool {
        self.margin_remuneration_received
            .same_as(&self.margin_remuneration_posted)
    }

    /// Per-interval report of the rate orderings `cash_lend <= cash_borrow`
    /// and `cash_lend <= asset borrow rate` for every asset. The orderings
    /// are checked and reported, never silently assumed.
    pub fn ordering_certificate(&self) -> OrderingCertificate {
        let mut refs: Vec<&RateSpec> = vec![&self.cash_lend, &self.cash_borrow];
        for f in &self.asset_funding {
            refs.push(&f.borrow);
        }
        let grid = merge_breakpoints(&refs);
        let mut intervals = Vec::new();
        let mut holds = true;
        for w in grid.windows(2) {
            let t = w[0];
            let lend = self.cash_lend.value_at(t);
            let cash_ok = lend <= self.cash_borrow.value_at(t);
            let asset_ok: Vec<bool> = self
                .asset_funding
                .iter()
                .map(|f| lend <= f.borrow.value_at(t))
                .collect();
            holds &= cash_ok && asset_ok.iter().all(|&b| b);
            intervals.push(OrderingInterval {
                start: w[0],
                end: w[1],
                cash_ok,
                asset_ok,
            });
        }
        OrderingCertificate { intervals, holds }
    }
}

/// One interval of the rate-ordering certificate.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingInterval {
    pub start: f64,
    pub end: f64,
    /// `cash_lend <= cash_borrow` on this interval.
    pub cash_ok: bool,
    /// `cash_lend <= borrow rate of asset i` on this interval.
    pub asset_ok: Vec<bool>,
}

/// Interval-by-interval result of the rate-ordering check.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingCertificate {
    pub intervals: Vec<OrderingInterval>,
    pub holds: bool,
}

/// Lognormal equity with a deterministic dividend yield.
#[derive(Debug, Clone)]
pub struct EquityModel {
    /// Initial spot, strictly positive.
    pub spot: f64,
    /// Piecewise-constant volatility, strictly positive.
    pub volatility: RateSpec,
    /// Real-world drift.
    pub drift: RateSpec,
    /// Continuous dividend yield.
    pub dividend_yield: RateSpec,
}

impl EquityModel {
    pub fn new(
        spot: f64,
        volatility: RateSpec,
        drift: RateSpec,
        dividend_yield: RateSpec,
    ) -> Result<Self, MarketError> {
        if !(spot > 0.0) {
            return Err(MarketError::InvalidEquity("spot > 0".to_string()));
        }
        if volatility.values().iter().any(|&v| v <= 0.0) {
            return Err(MarketError::InvalidEquity(
                "volatility > 0 on the whole horizon".to_string(),
            ));
        }
        Ok(EquityModel {
            spot,
            volatility,
            drift,
            dividend_yield,
        })
    }

    /// Flat-parameter model.
    pub fn flat(spot: f64, sigma: f64, mu: f64, yield_: f64, horizon: f64) -> Self {
        EquityModel::new(
            spot,
            RateSpec::flat(sigma, horizon),
            RateSpec::flat(mu, horizon),
            RateSpec::flat(yield_, horizon),
        )
        .expect("valid flat equity model")
    }
}

/// Drift that makes the funding-discounted cum-dividend asset price driftless:
/// the asset's secured funding rate minus its dividend yield.
pub fn martingale_drift(
    accounts: &AccountSet,
    equity: &EquityModel,
) -> Result<RateSpec, MarketError> {
    let funding = accounts
        .asset_funding
        .first()
        .ok_or_else(|| MarketError::InvalidCurve("at least one asset funding curve".to_string()))?
        .secured_rate()?;
    Ok(funding.minus(&equity.dividend_yield))
}

/// Recombining binomial tree with constant up/down factors. Per-step weights
/// are derived lazily for any requested drift, so one tree serves several
/// measures.
#[derive(Debug, Clone)]
pub struct Lattice {
    spot: f64,
    sigma: f64,
    maturity: f64,
    steps: usize,
    dt: f64,
    up: f64,
    down: f64,
}

impl Lattice {
    /// Builds the tree. The volatility must be flat over `[0, maturity]`
    /// (a level change would break recombination).
    pub fn build(equity: &EquityModel, steps: usize, maturity: f64) -> Result<Self, MarketError> {
        if steps == 0 {
            return Err(MarketError::InvalidLattice("at least one step".to_string()));
        }
        if maturity <= 0.0 {
            return Err(MarketError::InvalidLattice("maturity > 0".to_string()));
        }
        if equity.volatility.horizon() < maturity - TIME_EPS {
            return Err(MarketError::OutOfDomain {
                t: maturity,
                horizon: equity.volatility.horizon(),
            });
        }
        if !equity.volatility.is_flat() {
            return Err(MarketError::InvalidLattice(
                "a flat volatility (piecewise levels would break recombination)".to_string(),
            ));
        }
        let sigma = equity.volatility.value_at(0.0);
        let dt = maturity / steps as f64;
        let up = (sigma * dt.sqrt()).exp();
        Ok(Lattice {
            spot: equity.spot,
            sigma,
            maturity,
            steps,
            dt,
            up,
            down: 1.0 / up,
        })
    }

    /// Same tree parameters on a different step count.
    pub fn with_steps(&self, steps: usize) -> Result<Self, MarketError> {
        if steps == 0 {
            return Err(MarketError::InvalidLattice("at least one step".to_string()));
        }
        let dt = self.maturity / steps as f64;
        let up = (self.sigma * dt.sqrt()).exp();
        Ok(Lattice {
            steps,
            dt,
            up,
            down: 1.0 / up,
            ..*self
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn spot0(&self) -> f64 {
        self.spot
    }

    pub fn up(&self) -> f64 {
        self.up
    }

    pub fn down(&self) -> f64 {
        self.down
    }

    /// Time of layer `n`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Spot at node `(n, j)`: `spot * up^j * down^(n - j)`.
    pub fn node_spot(&self, n: usize, j: usize) -> f64 {
        self.spot * self.up.powi(2 * j as i32 - n as i32)
    }

    /// One-step up-move weights, one per step, for the given drift. Errors
    /// when any weight leaves `(0, 1)`.
    pub fn weights(&self, drift: &RateSpec) -> Result<Vec<f64>, MarketError> {
        drift.check_grid_alignment(self.dt, self.steps)?;
        let span = self.up - self.down;
        (0..self.steps)
            .map(|n| {
                let t = self.time(n);
                let growth = drift.accrual(t, t + self.dt)?;
                let q = (growth - self.down) / span;
                if q <= 0.0 || q >= 1.0 {
                    Err(MarketError::InvalidWeight {
                        step: n,
                        drift: drift.value_at(t),
                        q,
                    })
                } else {
                    Ok(q)
                }
            })
            .collect()
    }

    /// The up/down path encoded by the bits of `mask` (bit `n mod 64` set
    /// means an up-move over step n; the pattern repeats past 64 steps).
    /// Spots coincide bitwise with the node spots.
    pub fn path_from_mask(&self, mask: u64) -> Path {
        let times: Vec<f64> = (0..=self.steps).map(|n| self.time(n)).collect();
        let mut ups = 0usize;
        let mut spots = Vec::with_capacity(self.steps + 1);
        spots.push(self.node_spot(0, 0));
        for n in 0..self.steps {
            if mask >> (n & 63) & 1 == 1 {
                ups += 1;
            }
            spots.push(self.node_spot(n + 1, ups));
        }
        Path {
            times,
            spots: vec![spots],
        }
    }

    /// All 2^steps up/down paths as spot trajectories whose entries coincide
    /// bitwise with the node spots. Limited to 24 steps.
    pub fn enumerate_paths(&self) -> Result<Vec<Path>, MarketError> {
        if self.steps > 24 {
            return Err(MarketError::TooManyPaths(self.steps));
        }
        Ok((0..1u64 << self.steps)
            .map(|mask| self.path_from_mask(mask))
            .collect())
    }

    /// Nearest node index for a grid point `(t, spot)`; exact on values
    /// produced by `node_spot`.
    pub fn locate(&self, t: f64, spot: f64) -> (usize, usize) {
        let n = (t / self.dt).round() as usize;
        let k = (spot / self.spot).ln() / self.up.ln();
        let j = ((k + n as f64) / 2.0).round().max(0.0) as usize;
        (n.min(self.steps), j.min(n.min(self.steps)))
    }
}

/// A single scenario: one spot trajectory per asset on a shared time grid.
#[derive(Debug, Clone)]
pub struct Path {
    pub times: Vec<f64>,
    /// One trajectory per asset, each of length `times.len()`.
    pub spots: Vec<Vec<f64>>,
}

impl Path {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn assets(&self) -> usize {
        self.spots.len()
    }

    /// Spot vector at grid index `n`.
    pub fn spots_at(&self, n: usize) -> Vec<f64> {
        self.spots.iter().map(|s| s[n]).collect()
    }
}

/// Label of the measure a path ensemble was drawn under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasureLabel {
    /// Real-world dynamics.
    RealWorld,
    /// Risk-adjusted dynamics with the stated drift description.
    Martingale { drift: String },
}

/// Seeded ensemble of lognormal paths, reproducible bit-for-bit from
/// `(seed, paths, steps, model, drift)` and independent of thread count.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    times: Vec<f64>,
    /// Row-major `paths x (steps + 1)` spot matrix.
    spots: Vec<f64>,
    paths: usize,
    steps: usize,
    pub seed: u64,
    pub label: MeasureLabel,
}

impl PathEnsemble {
    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Spot of path `i` at grid index `n`.
    pub fn spot(&self, i: usize, n: usize) -> f64 {
        self.spots[i * (self.steps + 1) + n]
    }

    /// Terminal spot of path `i`.
    pub fn terminal(&self, i: usize) -> f64 {
        self.spot(i, self.steps)
    }

    /// Extracts path `i` as a single-asset scenario.
    pub fn path(&self, i: usize) -> Path {
        let row = &self.spots[i * (self.steps + 1)..(i + 1) * (self.steps + 1)];
        Path {
            times: self.times.clone(),
            spots: vec![row.to_vec()],
        }
    }
}

/// Simulates `paths` lognormal trajectories over `steps` uniform steps up to
/// the drift horizon, using exact log stepping
/// `S' = S * exp((rho - sigma^2 / 2) dt + sigma sqrt(dt) Z)`.
///
/// Each path draws from its own counter-based stream (`seed`, stream = path
/// index), so the ensemble does not depend on the number of worker threads.
pub fn simulate_paths(
    equity: &EquityModel,
    drift: &RateSpec,
    steps: usize,
    paths: usize,
    seed: u64,
    label: MeasureLabel,
) -> Result<PathEnsemble, MarketError> {
    if steps == 0 || paths == 0 {
        return Err(MarketError::InvalidLattice(
            "at least one step and one path".to_string(),
        ));
    }
    let maturity = drift.horizon();
    let dt = maturity / steps as f64;
    let sqrt_dt = dt.sqrt();
    let times: Vec<f64> = (0..=steps).map(|n| n as f64 * dt).collect();

    // Per-step coefficients are shared by all paths.
    let mut log_drift = Vec::with_capacity(steps);
    let mut vol_step = Vec::with_capacity(steps);
    for n in 0..steps {
        let t = times[n];
        let rho = drift.integral(t, t + dt)?;
        let sigma = equity.volatility.value_at(t);
        log_drift.push(rho - 0.5 * sigma * sigma * dt);
        vol_step.push(sigma * sqrt_dt);
    }

    let width = steps + 1;
    let mut spots = vec![0.0f64; paths * width];
    spots
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            row[0] = equity.spot;
            for n in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                row[n + 1] = row[n] * (log_drift[n] + vol_step[n] * z).exp();
            }
        });

    Ok(PathEnsemble {
        times,
        spots,
        paths,
        steps,
        seed,
        label,
    })
}
