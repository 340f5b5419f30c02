//! Run configuration: schema, validation and assembly into model objects.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fundlab_core::collateral::{CollateralSetup, CollateralSpec, MarginConvention};
use fundlab_core::expr::Expr;
use fundlab_core::market::{AccountSet, AssetFunding, EquityModel, RateSpec};
use fundlab_core::wealth::{CashFlowStream, ConventionSpec};

/// Configuration failure with the offending key.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(message.into()))
}

/// A rate, either flat or piecewise-constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateInput {
    Flat(f64),
    Curve { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl RateInput {
    fn build(&self, horizon: f64, key: &str) -> Result<RateSpec, ConfigError> {
        match self {
            RateInput::Flat(v) => Ok(RateSpec::flat(*v, horizon)),
            RateInput::Curve {
                breakpoints,
                values,
            } => {
                let spec = RateSpec::piecewise(breakpoints.clone(), values.clone())
                    .map_err(|e| ConfigError(format!("{key}: {e}")))?;
                if spec.horizon() < horizon {
                    return err(format!(
                        "{key}: curve ends at {} before maturity {horizon}",
                        spec.horizon()
                    ));
                }
                Ok(spec)
            }
        }
    }
}

/// Funding rates for one asset: a single secured rate or a lend/borrow split.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssetFundingInput {
    Single(RateInput),
    Split { lend: RateInput, borrow: RateInput },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub cash_lend: RateInput,
    pub cash_borrow: RateInput,
    pub asset_funding: Vec<AssetFundingInput>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub spot: f64,
    pub volatility: RateInput,
    #[serde(default)]
    pub drift: Option<RateInput>,
    #[serde(default)]
    pub dividend_yield: Option<RateInput>,
    pub maturity: f64,
    pub rates: RatesSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowInput {
    pub time: f64,
    /// Expression of `(t, S)` evaluated at the flow date.
    pub amount: Expr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSection {
    /// Terminal flow to the hedger as an expression of `S` (so a sold call
    /// struck at 100 is `-call(100)`).
    pub payoff: Expr,
    #[serde(default)]
    pub flows: Vec<FlowInput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionName {
    SingleCurve,
    CommonUnsecuredWithRepo,
    SplitCash,
    NettingPerAsset,
    PartialNettingShorts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionSection {
    pub variant: ConventionName,
    /// Number of assets funded from cash under the split conventions.
    #[serde(default)]
    pub unsecured: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollateralName {
    None,
    Exogenous,
    Proportional,
    Haircut,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginName {
    Segregated,
    FullRehypo,
    PartialRehypo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollateralSection {
    pub variant: CollateralName,
    #[serde(default)]
    pub expression: Option<Expr>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub delta1: Option<f64>,
    #[serde(default)]
    pub delta2: Option<f64>,
    #[serde(default)]
    pub margin: Option<MarginName>,
    #[serde(default)]
    pub reuse_received: Option<f64>,
    #[serde(default)]
    pub reuse_posted: Option<f64>,
    #[serde(default)]
    pub remuneration_received: Option<RateInput>,
    #[serde(default)]
    pub remuneration_posted: Option<RateInput>,
    #[serde(default)]
    pub reinvest: Option<RateInput>,
    #[serde(default)]
    pub borrow: Option<RateInput>,
}

fn default_collateral() -> CollateralSection {
    CollateralSection {
        variant: CollateralName::None,
        expression: None,
        alpha: None,
        delta1: None,
        delta2: None,
        margin: None,
        reuse_received: None,
        reuse_posted: None,
        remuneration_received: None,
        remuneration_posted: None,
        reinvest: None,
        borrow: None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_steps() -> usize {
    1000
}
fn default_paths() -> usize {
    100_000
}
fn default_seed() -> u64 {
    42
}
fn default_tolerance() -> f64 {
    1e-13
}

impl Default for NumericsSection {
    fn default() -> Self {
        NumericsSection {
            steps: default_steps(),
            paths: default_paths(),
            seed: default_seed(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub directory: Option<String>,
    #[serde(default)]
    pub ledger_paths: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_samples")]
    pub strategy_samples: usize,
    #[serde(default = "default_gate_steps")]
    pub gate_steps: usize,
}

fn default_gamma() -> f64 {
    0.07
}
fn default_samples() -> usize {
    100
}
fn default_gate_steps() -> usize {
    10
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            gamma: default_gamma(),
            strategy_samples: default_samples(),
            gate_steps: default_gate_steps(),
        }
    }
}

/// Top-level run configuration. Unknown keys are rejected; defaults are
/// echoed back into every report for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub contract: ContractSection,
    pub convention: ConventionSection,
    #[serde(default = "default_collateral")]
    pub collateral: CollateralSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

/// Fully validated and assembled run inputs.
pub struct ResolvedRun {
    pub config: RunConfig,
    pub equity: EquityModel,
    pub accounts: AccountSet,
    pub stream: CashFlowStream,
    pub convention: ConventionSpec,
    pub collateral: Option<CollateralSetup>,
}

/// Loads and validates a configuration file.
#[allow(dead_code)]
pub fn load_config(path: &Path) -> Result<ResolvedRun, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    resolve(config)
}

/// Validates a parsed configuration and assembles the model objects.
pub fn resolve(config: RunConfig) -> Result<ResolvedRun, ConfigError> {
    let horizon = config.model.maturity;
    if !(horizon > 0.0) {
        return err("model.maturity must be positive");
    }
    if config.numerics.steps == 0 {
        return err("numerics.steps must be at least 1");
    }
    let dt = horizon / config.numerics.steps as f64;

    let check_alignment = |spec: &RateSpec, key: &str| -> Result<(), ConfigError> {
        spec.check_grid_alignment(dt, config.numerics.steps)
            .map_err(|e| ConfigError(format!("{key}: {e}")))
    };

    let volatility = config.model.volatility.build(horizon, "model.volatility")?;
    let drift = match &config.model.drift {
        Some(d) => d.build(horizon, "model.drift")?,
        None => RateSpec::flat(0.0, horizon),
    };
    let dividend_yield = match &config.model.dividend_yield {
        Some(d) => d.build(horizon, "model.dividend_yield")?,
        None => RateSpec::flat(0.0, horizon),
    };
    check_alignment(&dividend_yield, "model.dividend_yield")?;
    let equity = EquityModel::new(config.model.spot, volatility, drift, dividend_yield)
        .map_err(|e| ConfigError(format!("model: {e}")))?;

    let cash_lend = config
        .model
        .rates
        .cash_lend
        .build(horizon, "model.rates.cash_lend")?;
    check_alignment(&cash_lend, "model.rates.cash_lend")?;
    let cash_borrow = config
        .model
        .rates
        .cash_borrow
        .build(horizon, "model.rates.cash_borrow")?;
    check_alignment(&cash_borrow, "model.rates.cash_borrow")?;
    if config.model.rates.asset_funding.is_empty() {
        return err("model.rates.asset_funding needs at least one entry");
    }
    let mut asset_funding = Vec::new();
    for (i, f) in config.model.rates.asset_funding.iter().enumerate() {
        let key = format!("model.rates.asset_funding[{i}]");
        let built = match f {
            AssetFundingInput::Single(r) => AssetFunding::symmetric(r.build(horizon, &key)?),
            AssetFundingInput::Split { lend, borrow } => AssetFunding {
                lend: lend.build(horizon, &format!("{key}.lend"))?,
                borrow: borrow.build(horizon, &format!("{key}.borrow"))?,
            },
        };
        check_alignment(&built.lend, &format!("{key}.lend"))?;
        check_alignment(&built.borrow, &format!("{key}.borrow"))?;
        asset_funding.push(built);
    }

    let coll = &config.collateral;
    let needs_margin_accounts = coll.variant != CollateralName::None;
    let margin_rate = |input: &Option<RateInput>, key: &str| -> Result<RateSpec, ConfigError> {
        match input {
            Some(r) => {
                let spec = r.build(horizon, key)?;
                check_alignment(&spec, key)?;
                Ok(spec)
            }
            None if needs_margin_accounts => err(format!("{key} is required")),
            None => Ok(cash_lend.clone()),
        }
    };
    let accounts = AccountSet {
        cash_lend: cash_lend.clone(),
        cash_borrow,
        asset_funding,
        margin_remuneration_received: margin_rate(
            &coll.remuneration_received,
            "collateral.remuneration_received",
        )?,
        margin_remuneration_posted: margin_rate(
            &coll.remuneration_posted,
            "collateral.remuneration_posted",
        )?,
        margin_reinvest: margin_rate(&coll.reinvest, "collateral.reinvest")?,
        margin_borrow: margin_rate(&coll.borrow, "collateral.borrow")?,
    };

    let mut stream = {
        let payoff = config.contract.payoff.clone();
        let maturity = horizon;
        CashFlowStream::terminal_only(move |s: f64| payoff.eval(maturity, s))
    };
    let flow_tol = 1e-9 * horizon.max(1.0);
    for (i, flow) in config.contract.flows.iter().enumerate() {
        if flow.time < -flow_tol || flow.time > horizon + flow_tol {
            return err(format!(
                "contract.flows[{i}].time {} outside [0, {horizon}]",
                flow.time
            ));
        }
        let on_grid = (flow.time / dt - (flow.time / dt).round()).abs() <= 1e-6;
        if !on_grid {
            return err(format!(
                "contract.flows[{i}].time {} does not sit on the {}-step grid (dt = {dt})",
                flow.time, config.numerics.steps
            ));
        }
        let amount = flow.amount.clone();
        let at = flow.time;
        stream = stream.with_lump(at, move |s: f64| amount.eval(at, s));
    }

    let convention = match config.convention.variant {
        ConventionName::SingleCurve => ConventionSpec::SingleCurve,
        ConventionName::CommonUnsecuredWithRepo => ConventionSpec::CommonUnsecuredWithRepo {
            unsecured: config.convention.unsecured,
        },
        ConventionName::SplitCash => ConventionSpec::SplitCash {
            unsecured: config.convention.unsecured,
        },
        ConventionName::NettingPerAsset => ConventionSpec::NettingPerAsset,
        ConventionName::PartialNettingShorts => ConventionSpec::PartialNettingShorts,
    };

    let collateral = build_collateral(coll, horizon)?;

    Ok(ResolvedRun {
        config,
        equity,
        accounts,
        stream,
        convention,
        collateral,
    })
}

fn build_collateral(
    section: &CollateralSection,
    horizon: f64,
) -> Result<Option<CollateralSetup>, ConfigError> {
    let spec = match section.variant {
        CollateralName::None => return Ok(None),
        CollateralName::Exogenous => match &section.expression {
            Some(e) => CollateralSpec::Exogenous(e.clone()),
            None => return err("collateral.expression is required for the exogenous variant"),
        },
        CollateralName::Proportional => match section.alpha {
            Some(a) => CollateralSpec::Proportional {
                alpha: RateSpec::flat(a, horizon),
            },
            None => return err("collateral.alpha is required for the proportional variant"),
        },
        CollateralName::Haircut => {
            let d1 = section
                .delta1
                .ok_or_else(|| ConfigError("collateral.delta1 is required".to_string()))?;
            let d2 = section
                .delta2
                .ok_or_else(|| ConfigError("collateral.delta2 is required".to_string()))?;
            CollateralSpec::Haircut {
                delta1: RateSpec::flat(d1, horizon),
                delta2: RateSpec::flat(d2, horizon),
            }
        }
        CollateralName::Full => CollateralSpec::Full,
    };
    let margin = match section.margin.unwrap_or(MarginName::Segregated) {
        MarginName::Segregated => MarginConvention::Segregated,
        MarginName::FullRehypo => MarginConvention::FullRehypo,
        MarginName::PartialRehypo => {
            let beta = section
                .reuse_received
                .ok_or_else(|| ConfigError("collateral.reuse_received is required".to_string()))?;
            let gamma = section
                .reuse_posted
                .ok_or_else(|| ConfigError("collateral.reuse_posted is required".to_string()))?;
            if !(0.0..=1.0).contains(&beta) || !(0.0..=1.0).contains(&gamma) {
                return err("collateral.reuse_received/reuse_posted must lie in [0, 1]");
            }
            MarginConvention::PartialRehypo {
                reuse_received: RateSpec::flat(beta, horizon),
                reuse_posted: RateSpec::flat(gamma, horizon),
            }
        }
    };
    Ok(Some(CollateralSetup { spec, margin }))
}
