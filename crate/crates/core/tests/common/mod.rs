//! Shared fixtures and closed-form oracles for the integration suites.

use statrs::distribution::{ContinuousCDF, Normal};

use fundlab_core::market::{AccountSet, AssetFunding, EquityModel, RateSpec};
use fundlab_core::wealth::CashFlowStream;

pub const SPOT: f64 = 100.0;
pub const STRIKE: f64 = 100.0;
pub const SIGMA: f64 = 0.2;
pub const MATURITY: f64 = 1.0;

pub fn flat(v: f64) -> RateSpec {
    RateSpec::flat(v, MATURITY)
}

/// Flat market: every account at 3%, no dividends.
pub fn flat_fixture() -> (EquityModel, AccountSet) {
    (
        EquityModel::flat(SPOT, SIGMA, 0.03, 0.0, MATURITY),
        AccountSet::uniform(0.03, 1, MATURITY),
    )
}

/// Funding-spread market: cash 3%, secured funding 5%, margin remuneration
/// 1%, margin reinvest/borrow at cash, 2% dividend yield.
pub fn spread_fixture() -> (EquityModel, AccountSet) {
    let equity = EquityModel::flat(SPOT, SIGMA, 0.05, 0.02, MATURITY);
    let mut accounts = AccountSet::uniform(0.03, 1, MATURITY);
    accounts.asset_funding[0] = AssetFunding::symmetric(flat(0.05));
    accounts.margin_remuneration_received = flat(0.01);
    accounts.margin_remuneration_posted = flat(0.01);
    (equity, accounts)
}

/// Asymmetric-rate market: lend 2%, borrow 5%, long funding 4%.
pub fn asym_fixture() -> (EquityModel, AccountSet) {
    let equity = EquityModel::flat(SPOT, SIGMA, 0.05, 0.0, MATURITY);
    let mut accounts = AccountSet::uniform(0.02, 1, MATURITY);
    accounts.cash_borrow = flat(0.05);
    accounts.asset_funding[0] = AssetFunding {
        lend: flat(0.02),
        borrow: flat(0.04),
    };
    (equity, accounts)
}

/// Extension market: cash 5% above secured funding 3%, margin at 2%.
pub fn extension_fixture() -> (EquityModel, AccountSet) {
    let equity = EquityModel::flat(SPOT, SIGMA, 0.05, 0.0, MATURITY);
    let mut accounts = AccountSet::uniform(0.05, 1, MATURITY);
    accounts.asset_funding[0] = AssetFunding::symmetric(flat(0.03));
    accounts.margin_remuneration_received = flat(0.02);
    accounts.margin_remuneration_posted = flat(0.02);
    (equity, accounts)
}

pub fn sold_call(strike: f64) -> CashFlowStream {
    CashFlowStream::terminal_only(move |s: f64| -(s - strike).max(0.0))
}

pub fn long_call(strike: f64) -> CashFlowStream {
    CashFlowStream::terminal_only(move |s: f64| (s - strike).max(0.0))
}

pub fn norm_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Standard lognormal call value with continuous rate `r` and yield `q`.
pub fn bs_call(s: f64, k: f64, sigma: f64, t: f64, r: f64, q: f64) -> f64 {
    let vol = sigma * t.sqrt();
    let d1 = ((s / k).ln() + (r - q + 0.5 * sigma * sigma) * t) / vol;
    let d2 = d1 - vol;
    s * (-q * t).exp() * norm_cdf(d1) - k * (-r * t).exp() * norm_cdf(d2)
}

/// Expected call payoff on a lognormal terminal spot with the given forward,
/// discounted by `discount`.
pub fn black(forward: f64, k: f64, sigma: f64, t: f64, discount: f64) -> f64 {
    let vol = sigma * t.sqrt();
    let d1 = ((forward / k).ln() + 0.5 * vol * vol) / vol;
    let d2 = d1 - vol;
    discount * (forward * norm_cdf(d1) - k * norm_cdf(d2))
}
