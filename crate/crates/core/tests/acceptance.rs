//! Acceptance suite: one test per criterion, each printing a pass line.
//! Run with `cargo test -p fundlab-core --test acceptance -- --nocapture`.

mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use common::*;
use fundlab_core::collateral::{
    margin_cost_increment, CollateralSetup, CollateralSpec, MarginConvention,
};
use fundlab_core::expr::Expr;
use fundlab_core::market::{AccountSet, AssetFunding, EquityModel, Lattice, RateSpec};
use fundlab_core::pricer::{
    exogenous_margin_source, price_asymmetric_rates, price_exogenous_collateral,
    price_full_collateral, price_hedger_collateral, price_unsecured_hedge_extension,
    replication_initial_wealth, replication_strategy, solve_bsde, BsdeSolution, Driver,
    SolverSettings,
};
use fundlab_core::verify::{arbitrage_gate, gamma_measure_price, GateConfig, GateVerdict};
use fundlab_core::wealth::{
    evolve_wealth, self_financing_residual, CashFlowStream, ConventionSpec, StrategySpec,
};

fn settings() -> SolverSettings {
    SolverSettings {
        coarse_diagnostic: false,
        ..SolverSettings::default()
    }
}

fn pass(criterion: &str, detail: String) {
    println!("acceptance {criterion}: PASS - {detail}");
}

#[test]
fn criterion_01_classic_reduction() {
    let (equity, accounts) = flat_fixture();
    let lattice = Lattice::build(&equity, 1000, MATURITY).unwrap();
    let solution =
        price_full_collateral(&lattice, &equity, &accounts, &sold_call(STRIKE), &settings())
            .unwrap();
    let oracle = bs_call(SPOT, STRIKE, SIGMA, MATURITY, 0.03, 0.0);
    let relative = (solution.price + oracle).abs() / oracle;
    assert!(
        relative <= 5e-4,
        "relative defect {relative} (value {}, oracle {oracle})",
        solution.price
    );
    pass(
        "01 classic reduction",
        format!(
            "value {:.6} vs closed form {:.6} ({relative:.2e} relative)",
            solution.price, -oracle
        ),
    );
}

#[test]
fn criterion_02_discount_route_equivalence() {
    let (equity, accounts) = spread_fixture();
    let collateral = Expr::parse("-0.5*S").unwrap();
    let gap_at = |steps: usize| {
        let lattice = Lattice::build(&equity, steps, MATURITY).unwrap();
        let quote = price_exogenous_collateral(
            &lattice,
            &equity,
            &accounts,
            &sold_call(STRIKE),
            &collateral,
            &settings(),
        )
        .unwrap();
        (quote.gap(), quote.cash_route.price)
    };
    let (gap_fine, price) = gap_at(2000);
    let (gap_finer, _) = gap_at(4000);
    let relative = gap_fine / price.abs();
    let ratio = gap_fine / gap_finer;
    assert!(relative <= 1e-6, "relative gap {relative}");
    assert!(
        (1.6..=2.4).contains(&ratio),
        "convergence ratio {ratio} (gaps {gap_fine}, {gap_finer})"
    );
    pass(
        "02 discount-route equivalence",
        format!("relative gap {relative:.2e} at 2000 steps, halving ratio {ratio:.3}"),
    );
}

#[test]
fn criterion_03_full_collateral_degeneration() {
    let (equity, accounts) = spread_fixture();
    let lattice = Lattice::build(&equity, 1000, MATURITY).unwrap();
    let setup = CollateralSetup {
        spec: CollateralSpec::Haircut {
            delta1: flat(0.0),
            delta2: flat(0.0),
        },
        margin: MarginConvention::Segregated,
    };
    let endogenous = price_hedger_collateral(
        &lattice,
        &equity,
        &accounts,
        &sold_call(STRIKE),
        &setup,
        &settings(),
    )
    .unwrap();
    let closed =
        price_full_collateral(&lattice, &equity, &accounts, &sold_call(STRIKE), &settings())
            .unwrap();
    let gap = (endogenous.price - closed.price).abs();
    assert!(gap <= 1e-10, "gap {gap}");
    pass(
        "03 full-collateral degeneration",
        format!("zero-haircut value matches the closed form within {gap:.2e}"),
    );
}

#[test]
fn criterion_04_measure_switch_equivalence() {
    let (equity, accounts) = flat_fixture();
    let gamma = flat(0.07);
    let quote_at = |steps: usize| {
        let lattice = Lattice::build(&equity, steps, MATURITY).unwrap();
        let replication = price_full_collateral(
            &lattice,
            &equity,
            &accounts,
            &long_call(STRIKE),
            &settings(),
        )
        .unwrap();
        gamma_measure_price(&gamma, &replication, &accounts, &lattice).unwrap()
    };
    let fine = quote_at(2000);
    let finer = quote_at(4000);
    let relative = fine.gap / fine.value_risk_neutral.abs();
    let ratio = fine.gap / finer.gap;
    assert!(relative <= 1e-3, "relative gap {relative}");
    assert!(
        (1.6..=2.4).contains(&ratio),
        "convergence ratio {ratio} (gaps {}, {})",
        fine.gap,
        finer.gap
    );

    // The gap closes identically when the measure matches the cash account.
    let lattice = Lattice::build(&equity, 500, MATURITY).unwrap();
    let replication =
        price_full_collateral(&lattice, &equity, &accounts, &long_call(STRIKE), &settings())
            .unwrap();
    let at_cash =
        gamma_measure_price(&accounts.cash_lend, &replication, &accounts, &lattice).unwrap();
    assert_eq!(at_cash.gap, 0.0, "gap at the cash rate {}", at_cash.gap);
    pass(
        "04 measure-switch equivalence",
        format!(
            "relative gap {relative:.2e} at 2000 steps, ratio {ratio:.3}, exact zero at the cash rate"
        ),
    );
}

#[test]
fn criterion_05_ledger_identity() {
    let (equity, accounts) = spread_fixture();
    let flat_accounts = AccountSet::uniform(0.03, 1, MATURITY);
    let drift = flat(0.05);
    let ensemble = fundlab_core::market::simulate_paths(
        &equity,
        &drift,
        250,
        2,
        2024,
        fundlab_core::market::MeasureLabel::RealWorld,
    )
    .unwrap();
    let yields = vec![equity.dividend_yield.clone()];
    let conventions: Vec<(ConventionSpec, &AccountSet)> = vec![
        (ConventionSpec::SingleCurve, &flat_accounts),
        (
            ConventionSpec::CommonUnsecuredWithRepo { unsecured: 0 },
            &accounts,
        ),
        (ConventionSpec::SplitCash { unsecured: 0 }, &accounts),
        (ConventionSpec::NettingPerAsset, &accounts),
        (ConventionSpec::PartialNettingShorts, &accounts),
    ];

    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a: f64 = rng.gen_range(-2.0..2.0);
        let b: f64 = rng.gen_range(-2.0..2.0);
        let cutoff: f64 = rng.gen_range(0.2..0.8);
        let v0: f64 = rng.gen_range(-5.0..5.0);
        let strategy = StrategySpec::single(move |t, s| {
            if t < cutoff {
                a * (s / SPOT - 1.0).clamp(-1.0, 1.0)
            } else {
                b
            }
        });
        for (convention, acc) in &conventions {
            for path_idx in 0..ensemble.paths() {
                let ledger = evolve_wealth(
                    &strategy,
                    &CashFlowStream::empty(),
                    None,
                    convention,
                    acc,
                    &yields,
                    &ensemble.path(path_idx),
                    v0,
                )
                .unwrap();
                worst = worst.max(self_financing_residual(&ledger));
            }
        }
    }
    assert!(worst <= 1e-12, "worst residual {worst}");
    pass(
        "05 ledger identity",
        format!("worst residual {worst:.2e} over 100 strategies x 5 conventions"),
    );
}

struct ClosureCase {
    name: &'static str,
    equity: EquityModel,
    accounts: AccountSet,
    stream: CashFlowStream,
    convention: ConventionSpec,
    collateral: Option<CollateralSetup>,
    repo_fraction: Option<f64>,
    solve: Box<dyn Fn(&Lattice, &EquityModel, &AccountSet, &CashFlowStream) -> BsdeSolution>,
}

fn closure_cases() -> Vec<ClosureCase> {
    let (flat_eq, flat_acc) = flat_fixture();
    let (spread_eq, spread_acc) = spread_fixture();
    let (asym_eq, asym_acc) = asym_fixture();
    let (ext_eq, ext_acc) = extension_fixture();
    let mut split_acc = asym_acc.clone();
    split_acc.asset_funding[0] = AssetFunding::symmetric(flat(0.04));

    vec![
        ClosureCase {
            name: "plain backward solve",
            equity: flat_eq.clone(),
            accounts: flat_acc.clone(),
            stream: sold_call(STRIKE),
            convention: ConventionSpec::SingleCurve,
            collateral: None,
            repo_fraction: None,
            solve: Box::new(|lat, _eq, _acc, stream| {
                let driver = Driver {
                    discount: flat(0.03),
                    generator: Arc::new(|_, _, _, _| 0.0),
                    lipschitz: 0.0,
                };
                solve_bsde(lat, &driver, stream, &flat(0.03), &settings()).unwrap()
            }),
        },
        ClosureCase {
            name: "full collateral",
            equity: spread_eq.clone(),
            accounts: spread_acc.clone(),
            stream: sold_call(STRIKE),
            convention: ConventionSpec::CommonUnsecuredWithRepo { unsecured: 0 },
            collateral: Some(CollateralSetup {
                spec: CollateralSpec::Full,
                margin: MarginConvention::Segregated,
            }),
            repo_fraction: None,
            solve: Box::new(|lat, eq, acc, stream| {
                price_full_collateral(lat, eq, acc, stream, &settings()).unwrap()
            }),
        },
        ClosureCase {
            name: "exogenous collateral",
            equity: spread_eq.clone(),
            accounts: spread_acc.clone(),
            stream: sold_call(STRIKE),
            convention: ConventionSpec::CommonUnsecuredWithRepo { unsecured: 0 },
            collateral: Some(CollateralSetup {
                spec: CollateralSpec::Exogenous(Expr::parse("-0.5*S").unwrap()),
                margin: MarginConvention::Segregated,
            }),
            repo_fraction: None,
            solve: Box::new(|lat, eq, acc, stream| {
                price_exogenous_collateral(
                    lat,
                    eq,
                    acc,
                    stream,
                    &Expr::parse("-0.5*S").unwrap(),
                    &settings(),
                )
                .unwrap()
                .cash_route
            }),
        },
        ClosureCase {
            name: "haircut collateral",
            equity: spread_eq.clone(),
            accounts: spread_acc.clone(),
            stream: sold_call(STRIKE),
            convention: ConventionSpec::CommonUnsecuredWithRepo { unsecured: 0 },
            collateral: Some(CollateralSetup {
                spec: CollateralSpec::Haircut {
                    delta1: flat(0.1),
                    delta2: flat(0.05),
                },
                margin: MarginConvention::Segregated,
            }),
            repo_fraction: None,
            solve: Box::new(|lat, eq, acc, stream| {
                let setup = CollateralSetup {
                    spec: CollateralSpec::Haircut {
                        delta1: flat(0.1),
                        delta2: flat(0.05),
                    },
                    margin: MarginConvention::Segregated,
                };
                price_hedger_collateral(lat, eq, acc, stream, &setup, &settings()).unwrap()
            }),
        },
        ClosureCase {
            name: "asymmetric rates (shorts pooled)",
            equity: asym_eq.clone(),
            accounts: asym_acc.clone(),
            stream: sold_call(STRIKE),
            convention: ConventionSpec::PartialNettingShorts,
            collateral: None,
            repo_fraction: None,
            solve: Box::new(|lat, eq, acc, stream| {
                price_asymmetric_rates(
                    lat,
                    eq,
                    acc,
                    stream,
                    &ConventionSpec::PartialNettingShorts,
                    &settings(),
                )
                .unwrap()
                .solution
            }),
        },
        ClosureCase {
            name: "asymmetric rates (split cash)",
            equity: asym_eq.clone(),
            accounts: split_acc.clone(),
            stream: long_call(STRIKE),
            convention: ConventionSpec::SplitCash { unsecured: 0 },
            collateral: None,
            repo_fraction: None,
            solve: Box::new(|lat, eq, acc, stream| {
                price_asymmetric_rates(
                    lat,
                    eq,
                    acc,
                    stream,
                    &ConventionSpec::SplitCash { unsecured: 0 },
                    &settings(),
                )
                .unwrap()
                .solution
            }),
        },
        ClosureCase {
            name: "unsecured hedge extension",
            equity: ext_eq.clone(),
            accounts: ext_acc.clone(),
            stream: sold_call(STRIKE),
            convention: ConventionSpec::CommonUnsecuredWithRepo { unsecured: 0 },
            collateral: None,
            repo_fraction: Some(2.0),
            solve: Box::new(|lat, eq, acc, stream| {
                price_unsecured_hedge_extension(
                    lat,
                    eq,
                    acc,
                    stream,
                    None,
                    &Expr::constant(2.0),
                    &settings(),
                )
                .unwrap()
            }),
        },
    ]
}

#[test]
fn criterion_06_replication_closure() {
    let steps = 12;
    let mut report = Vec::new();
    for case in closure_cases() {
        let lattice = Lattice::build(&case.equity, steps, MATURITY).unwrap();
        let solution = (case.solve)(&lattice, &case.equity, &case.accounts, &case.stream);
        let mut strategy = replication_strategy(&lattice, &solution);
        if let Some(w) = case.repo_fraction {
            strategy = strategy.with_repo_fraction(move |_, _| w);
        }
        let v0 = replication_initial_wealth(&solution);
        let yields = vec![case.equity.dividend_yield.clone()];
        let mut worst = 0.0f64;
        for path in lattice.enumerate_paths().unwrap() {
            let ledger = evolve_wealth(
                &strategy,
                &case.stream,
                case.collateral.as_ref(),
                &case.convention,
                &case.accounts,
                &yields,
                &path,
                v0,
            )
            .unwrap();
            worst = worst.max(ledger.terminal_wealth().abs());
        }
        assert!(
            worst <= 1e-10,
            "{}: worst terminal wealth {worst}",
            case.name
        );
        report.push(format!("{} {worst:.1e}", case.name));
    }

    // Spot check at production depth on a sampled path.
    let (equity, accounts) = flat_fixture();
    let lattice = Lattice::build(&equity, 1000, MATURITY).unwrap();
    let solution =
        price_full_collateral(&lattice, &equity, &accounts, &sold_call(STRIKE), &settings())
            .unwrap();
    let strategy = replication_strategy(&lattice, &solution);
    let ledger = evolve_wealth(
        &strategy,
        &sold_call(STRIKE),
        Some(&CollateralSetup {
            spec: CollateralSpec::Full,
            margin: MarginConvention::Segregated,
        }),
        &ConventionSpec::CommonUnsecuredWithRepo { unsecured: 0 },
        &accounts,
        &[flat(0.0)],
        &lattice.path_from_mask(0xDEAD_BEEF_CAFE_F00D),
        replication_initial_wealth(&solution),
    )
    .unwrap();
    assert!(
        ledger.terminal_wealth().abs() <= 1e-10,
        "deep-lattice closure {}",
        ledger.terminal_wealth()
    );
    pass(
        "06 replication closure",
        format!(
            "terminal wealth over all {}-step paths: {}",
            steps,
            report.join(", ")
        ),
    );
}

#[test]
fn criterion_07_arbitrage_gate() {
    let (equity, accounts) = asym_fixture();
    let lattice = Lattice::build(&equity, 10, MATURITY).unwrap();
    let report = arbitrage_gate(
        &ConventionSpec::PartialNettingShorts,
        &accounts,
        &sold_call(STRIKE),
        &equity,
        &lattice,
        None,
        &GateConfig {
            samples: 100,
            seed: 42,
        },
    )
    .unwrap();
    assert_eq!(report.verdict, GateVerdict::Pass, "report {report:?}");
    assert!(report.max_drift <= 1e-12, "drift {}", report.max_drift);
    assert!(!report.dominance_found);

    // Ordering-violation fixture: long funding below the lending rate.
    let mut violated = accounts.clone();
    violated.asset_funding[0] = AssetFunding::symmetric(flat(0.01));
    let flagged = arbitrage_gate(
        &ConventionSpec::PartialNettingShorts,
        &violated,
        &sold_call(STRIKE),
        &equity,
        &lattice,
        None,
        &GateConfig {
            samples: 100,
            seed: 42,
        },
    )
    .unwrap();
    assert_eq!(flagged.verdict, GateVerdict::NotApplicable);
    assert!(flagged.max_drift > 1e-12);
    pass(
        "07 arbitrage gate",
        format!(
            "drift {:+.2e} over 100 strategies; violation fixture drifts {:+.2e}",
            report.max_drift, flagged.max_drift
        ),
    );
}

#[test]
fn criterion_08_nonlinearity_witness() {
    let (equity, accounts) = asym_fixture();
    let lattice = Lattice::build(&equity, 500, MATURITY).unwrap();
    let short = price_asymmetric_rates(
        &lattice,
        &equity,
        &accounts,
        &sold_call(STRIKE),
        &ConventionSpec::PartialNettingShorts,
        &settings(),
    )
    .unwrap();
    let long = price_asymmetric_rates(
        &lattice,
        &equity,
        &accounts,
        &long_call(STRIKE),
        &ConventionSpec::PartialNettingShorts,
        &settings(),
    )
    .unwrap();
    let witness = (short.solution.price + long.solution.price).abs();
    assert!(witness > 1e-3, "witness {witness}");
    pass(
        "08 nonlinearity witness",
        format!(
            "sold {:.6} and bought {:.6} differ from mirror images by {witness:.4}",
            short.solution.price, long.solution.price
        ),
    );
}

#[test]
fn criterion_09_extension_signs() {
    let (equity, accounts) = extension_fixture();
    let lattice = Lattice::build(&equity, 500, MATURITY).unwrap();
    let price_at = |w: f64| {
        price_unsecured_hedge_extension(
            &lattice,
            &equity,
            &accounts,
            &sold_call(STRIKE),
            None,
            &Expr::constant(w),
            &settings(),
        )
        .unwrap()
        .price
    };
    let neutral = price_at(1.0);
    let positive_residual = price_at(2.0);
    let negative_residual = price_at(0.0);
    assert!(
        positive_residual > neutral,
        "{positive_residual} vs {neutral}"
    );
    assert!(
        negative_residual < neutral,
        "{negative_residual} vs {neutral}"
    );
    pass(
        "09 extension signs",
        format!("{negative_residual:.6} < {neutral:.6} < {positive_residual:.6}"),
    );
}

#[test]
fn criterion_10_convention_degenerations() {
    // Margin-cost degenerations hold bitwise on randomized inputs.
    let (_, accounts) = spread_fixture();
    let mut acc = accounts.clone();
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
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    for _ in 0..500 {
        let received: f64 = rng.gen_range(0.0..150.0);
        let posted: f64 = rng.gen_range(0.0..150.0);
        let t: f64 = rng.gen_range(0.0..0.9);
        let dt: f64 = rng.gen_range(1e-4..0.05);
        let a = margin_cost_increment(&seg, received, posted, &acc, t, dt).unwrap();
        let b = margin_cost_increment(&as_seg, received, posted, &acc, t, dt).unwrap();
        assert_eq!(a, b, "segregated degeneration at ({received}, {posted})");
        let c = margin_cost_increment(&full, received, posted, &acc, t, dt).unwrap();
        let d = margin_cost_increment(&as_full, received, posted, &acc, t, dt).unwrap();
        assert_eq!(c, d, "rehypothecation degeneration at ({received}, {posted})");
    }

    // Per-asset netting with equal long/short rates collapses onto the
    // repo-funded split-cash dynamics node for node.
    let mut net_acc = AccountSet::uniform(0.02, 1, MATURITY);
    net_acc.cash_borrow = flat(0.05);
    net_acc.asset_funding[0] = AssetFunding::symmetric(flat(0.04));
    let equity = EquityModel::flat(SPOT, SIGMA, 0.05, 0.02, MATURITY);
    let yields = vec![equity.dividend_yield.clone()];
    let lattice = Lattice::build(&equity, 64, MATURITY).unwrap();
    let strategy = StrategySpec::single(|t, s| (s / SPOT - 1.0) * 2.5 + 0.3 * t - 0.4);
    let mut worst = 0.0f64;
    for mask in [0u64, 0xFFFF_FFFF_FFFF_FFFF, 0x5a5a_5a5a_1234_5678] {
        let path = lattice.path_from_mask(mask);
        let run = |conv: &ConventionSpec| {
            evolve_wealth(
                &strategy,
                &CashFlowStream::empty(),
                None,
                conv,
                &net_acc,
                &yields,
                &path,
                1.5,
            )
            .unwrap()
        };
        let a = run(&ConventionSpec::NettingPerAsset);
        let b = run(&ConventionSpec::SplitCash { unsecured: 0 });
        for n in 0..a.wealth.len() {
            worst = worst.max((a.wealth[n] - b.wealth[n]).abs());
        }
    }
    assert!(worst <= 1e-12, "collapse defect {worst}");
    pass(
        "10 convention degenerations",
        format!("margin degenerations exact; netting collapse within {worst:.2e}"),
    );
}

#[test]
fn criterion_11_monte_carlo_cross_check() {
    let (equity, accounts) = spread_fixture();
    let collateral = Expr::parse("-0.5*S").unwrap();
    let lattice = Lattice::build(&equity, 2000, MATURITY).unwrap();
    let quote = price_exogenous_collateral(
        &lattice,
        &equity,
        &accounts,
        &sold_call(STRIKE),
        &collateral,
        &settings(),
    )
    .unwrap();

    // Forward Monte Carlo of the same linear value: discounted terminal
    // flow plus the discounted per-step margin sources, under the funded
    // drift, streamed path by path.
    let paths = 200_000usize;
    let steps = 500usize;
    let dt = MATURITY / steps as f64;
    let sqrt_dt = dt.sqrt();
    let drift = 0.05 - 0.02; // funding minus yield
    let log_drift = (drift - 0.5 * SIGMA * SIGMA) * dt;
    let vol_step = SIGMA * sqrt_dt;
    let r0 = 0.03;
    let (sum, sum_sq) = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(777);
            rng.set_stream(i as u64);
            let mut s = SPOT;
            let mut value = 0.0;
            for n in 0..steps {
                let t = n as f64 * dt;
                let source = exogenous_margin_source(&collateral, &accounts, t, s, dt);
                value += (-(r0 * (t + dt))).exp() * source;
                let z: f64 = StandardNormal.sample(&mut rng);
                s *= (log_drift + vol_step * z).exp();
            }
            value += (-(r0 * MATURITY)).exp() * -(s - STRIKE).max(0.0);
            (value, value * value)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = sum / paths as f64;
    let variance = (sum_sq / paths as f64 - mean * mean) * paths as f64 / (paths as f64 - 1.0);
    let se = (variance / paths as f64).sqrt();
    let distance = (mean - quote.cash_route.price).abs();
    assert!(
        distance <= 3.0 * se,
        "monte carlo {mean} vs lattice {} is {distance} (> 3 se = {})",
        quote.cash_route.price,
        3.0 * se
    );
    pass(
        "11 monte carlo cross-check",
        format!(
            "lattice {:.5}, monte carlo {mean:.5} +- {se:.5} ({:.2} se apart)",
            quote.cash_route.price,
            distance / se
        ),
    );
}
