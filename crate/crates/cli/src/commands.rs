//! The four run modes: price, simulate, verify, compare.

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use fundlab_core::collateral::{
    margin_cost_increment, remuneration_monotonicity, MarginConvention,
};
use fundlab_core::expr::Expr;
use fundlab_core::market::{simulate_paths, Lattice, MeasureLabel, RateSpec};
use fundlab_core::pricer::{
    price_asymmetric_rates, price_exogenous_collateral, price_full_collateral,
    price_hedger_collateral, replication_initial_wealth, replication_strategy, BsdeSolution,
    SolverSettings, Surface,
};
use fundlab_core::verify::{
    arbitrage_gate, check_martingale, gamma_measure_price, GateConfig, GateVerdict, MeasureSpec,
};
use fundlab_core::wealth::{evolve_wealth, self_financing_residual, ConventionSpec};

use crate::config::{CollateralName, ResolvedRun};
use crate::output;

/// Failure classified by exit code.
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numeric(String),
    Verification(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Numeric(m) => write!(f, "numeric failure: {m}"),
            RunError::Verification(m) => write!(f, "verification failure: {m}"),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Verification(_) => 4,
        }
    }
}

fn numeric<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Numeric(e.to_string())
}

fn io_err(e: std::io::Error) -> RunError {
    RunError::Numeric(format!("io: {e}"))
}

fn settings(run: &ResolvedRun) -> SolverSettings {
    SolverSettings {
        tolerance: run.config.numerics.tolerance,
        ..SolverSettings::default()
    }
}

fn build_lattice(run: &ResolvedRun, steps: usize) -> Result<Lattice, RunError> {
    Lattice::build(&run.equity, steps, run.config.model.maturity).map_err(numeric)
}

/// Route selection for the price command, driven by the collateral section.
fn solve_price(run: &ResolvedRun, lattice: &Lattice) -> Result<PricedContract, RunError> {
    let settings = settings(run);
    match run.config.collateral.variant {
        CollateralName::None => {
            let convention = match run.convention {
                ConventionSpec::SplitCash { .. } => run.convention.clone(),
                _ => ConventionSpec::PartialNettingShorts,
            };
            let quote = price_asymmetric_rates(
                lattice,
                &run.equity,
                &run.accounts,
                &run.stream,
                &convention,
                &settings,
            )
            .map_err(numeric)?;
            Ok(PricedContract {
                solution: quote.solution,
                margin_route_value: None,
                route_gap: None,
            })
        }
        CollateralName::Exogenous => {
            let expr = run
                .config
                .collateral
                .expression
                .clone()
                .expect("validated by resolve");
            let quote = price_exogenous_collateral(
                lattice,
                &run.equity,
                &run.accounts,
                &run.stream,
                &expr,
                &settings,
            )
            .map_err(numeric)?;
            Ok(PricedContract {
                margin_route_value: Some(quote.margin_route.price),
                route_gap: Some(quote.gap()),
                solution: quote.cash_route,
            })
        }
        CollateralName::Full => {
            let solution = price_full_collateral(
                lattice,
                &run.equity,
                &run.accounts,
                &run.stream,
                &settings,
            )
            .map_err(numeric)?;
            Ok(PricedContract {
                solution,
                margin_route_value: None,
                route_gap: None,
            })
        }
        CollateralName::Haircut | CollateralName::Proportional => {
            let setup = run.collateral.as_ref().expect("validated by resolve");
            let solution = price_hedger_collateral(
                lattice,
                &run.equity,
                &run.accounts,
                &run.stream,
                setup,
                &settings,
            )
            .map_err(numeric)?;
            Ok(PricedContract {
                solution,
                margin_route_value: None,
                route_gap: None,
            })
        }
    }
}

struct PricedContract {
    solution: BsdeSolution,
    margin_route_value: Option<f64>,
    route_gap: Option<f64>,
}

pub fn price(run: &ResolvedRun, out_dir: &Path) -> Result<(), RunError> {
    let lattice = build_lattice(run, run.config.numerics.steps)?;
    let priced = solve_price(run, &lattice)?;
    let report = json!({
        "value": priced.solution.price,
        "steps": lattice.steps(),
        "value_at_half_steps": priced.solution.price_coarse,
        "margin_route_value": priced.margin_route_value,
        "route_gap": priced.route_gap,
        "max_fixed_point_iterations": priced.solution.max_iterations_used,
        "oracle": serde_json::Value::Null,
        "config": run.config,
    });
    output::write_text(
        out_dir,
        "value.json",
        &serde_json::to_string_pretty(&report).map_err(numeric)?,
    )
    .map_err(io_err)?;
    output::write_text(
        out_dir,
        "hedge_surface.csv",
        &output::surface_csv(&priced.solution, lattice.dt(), lattice.spot0(), lattice.up()),
    )
    .map_err(io_err)?;
    println!(
        "value {:.10} on {} steps -> {}",
        priced.solution.price,
        lattice.steps(),
        out_dir.display()
    );
    Ok(())
}

pub fn simulate(run: &ResolvedRun, out_dir: &Path) -> Result<(), RunError> {
    let steps = run.config.numerics.steps;
    let lattice = build_lattice(run, steps)?;
    let priced = solve_price(run, &lattice)?;
    let strategy = replication_strategy(&lattice, &priced.solution);
    let v0 = replication_initial_wealth(&priced.solution);
    let yields = vec![run.equity.dividend_yield.clone()];

    let ensemble = simulate_paths(
        &run.equity,
        &run.equity.drift.clone(),
        steps,
        run.config.numerics.paths,
        run.config.numerics.seed,
        MeasureLabel::RealWorld,
    )
    .map_err(numeric)?;

    let ledger_paths = run
        .config
        .output
        .ledger_paths
        .unwrap_or(10)
        .min(ensemble.paths());
    let mut summary = String::from("path,terminal_spot,terminal_wealth,ledger_residual\n");
    let mut ledgers = String::from(output::ledger_csv_header());
    for i in 0..ensemble.paths() {
        let path = ensemble.path(i);
        let ledger = evolve_wealth(
            &strategy,
            &run.stream,
            run.collateral.as_ref(),
            &run.convention,
            &run.accounts,
            &yields,
            &path,
            v0,
        )
        .map_err(numeric)?;
        summary.push_str(&format!(
            "{i},{},{},{}\n",
            output::cell(ensemble.terminal(i)),
            output::cell(ledger.terminal_wealth()),
            output::cell(self_financing_residual(&ledger)),
        ));
        if i < ledger_paths {
            output::ledger_csv_rows(i, &ledger, &run.accounts, &mut ledgers);
        }
    }
    output::write_text(out_dir, "summary.csv", &summary).map_err(io_err)?;
    output::write_text(out_dir, "ledgers.csv", &ledgers).map_err(io_err)?;
    let report = json!({
        "paths": ensemble.paths(),
        "steps": steps,
        "seed": run.config.numerics.seed,
        "initial_wealth": v0,
        "value": priced.solution.price,
        "config": run.config,
    });
    output::write_text(
        out_dir,
        "simulate.json",
        &serde_json::to_string_pretty(&report).map_err(numeric)?,
    )
    .map_err(io_err)?;
    println!(
        "{} ledgers simulated ({} written in full) -> {}",
        ensemble.paths(),
        ledger_paths,
        out_dir.display()
    );
    Ok(())
}

pub fn verify(run: &ResolvedRun, out_dir: &Path) -> Result<(), RunError> {
    let gate_convention = match run.convention {
        ConventionSpec::SingleCurve => ConventionSpec::SingleCurve,
        _ => ConventionSpec::PartialNettingShorts,
    };
    let gate_lattice = build_lattice(run, run.config.verify.gate_steps)?;
    let remuneration = run
        .collateral
        .as_ref()
        .map(|_| remuneration_monotonicity(&run.accounts));
    let gate = arbitrage_gate(
        &gate_convention,
        &run.accounts,
        &run.stream,
        &run.equity,
        &gate_lattice,
        remuneration,
        &GateConfig {
            samples: run.config.verify.strategy_samples,
            seed: run.config.numerics.seed,
        },
    )
    .map_err(numeric)?;

    // Discounted-spot martingale check; kept to a moderate depth so the
    // absolute defect threshold is meaningful at the extreme nodes.
    let check_lattice = build_lattice(run, run.config.numerics.steps.min(128))?;
    let drift = run
        .accounts
        .cash_lend
        .minus(&run.equity.dividend_yield);
    let mut surface = Surface::zeros(check_lattice.steps());
    for n in 0..=check_lattice.steps() {
        let disc = (-drift.integral(0.0, check_lattice.time(n)).unwrap()).exp();
        for j in 0..=n {
            surface.set(n, j, check_lattice.node_spot(n, j) * disc);
        }
    }
    let spot_defect = check_martingale(
        &check_lattice,
        &surface,
        &MeasureSpec::new(drift, "cash lending measure"),
    )
    .map_err(numeric)?;

    let passed = gate.verdict == GateVerdict::Pass && spot_defect <= 1e-12;
    let report = json!({
        "gate": gate,
        "spot_martingale_defect": spot_defect,
        "passed": passed,
        "config": run.config,
    });
    output::write_text(
        out_dir,
        "verify.json",
        &serde_json::to_string_pretty(&report).map_err(numeric)?,
    )
    .map_err(io_err)?;
    println!(
        "gate verdict {:?}, worst drift {:+.3e} -> {}",
        gate.verdict,
        gate.max_drift,
        out_dir.display()
    );
    if passed {
        Ok(())
    } else {
        Err(RunError::Verification(format!(
            "gate verdict {:?}, spot defect {spot_defect:.3e}",
            gate.verdict
        )))
    }
}

#[derive(Serialize)]
struct RatioCheck {
    fine_gap: f64,
    coarse_gap: f64,
    ratio: Option<f64>,
    passed: bool,
}

pub fn compare(run: &ResolvedRun, out_dir: &Path) -> Result<(), RunError> {
    let settings = settings(run);
    let steps = run.config.numerics.steps;
    let lattice = build_lattice(run, steps)?;
    let mut all_ok = true;

    // Dual-route equivalence on the configured exogenous collateral (zero
    // profile when the config does not supply one).
    let expr = match (&run.config.collateral.variant, &run.config.collateral.expression) {
        (CollateralName::Exogenous, Some(e)) => e.clone(),
        _ => Expr::constant(0.0),
    };
    let dual = price_exogenous_collateral(
        &lattice,
        &run.equity,
        &run.accounts,
        &run.stream,
        &expr,
        &settings,
    )
    .map_err(numeric)?;
    let fine_gap = dual.gap();
    let coarse_gap = match (
        dual.cash_route.price_coarse,
        dual.margin_route.price_coarse,
    ) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::NAN,
    };
    let scale = dual.cash_route.price.abs().max(1e-8);
    let measurable = fine_gap / scale > 1e-12;
    let ratio = if measurable && coarse_gap.is_finite() {
        Some(coarse_gap / fine_gap)
    } else {
        None
    };
    let routes_ok = fine_gap / scale <= 1e-6
        && ratio.map_or(true, |r| (1.6..=2.4).contains(&r));
    all_ok &= routes_ok;
    let route_check = RatioCheck {
        fine_gap,
        coarse_gap,
        ratio,
        passed: routes_ok,
    };

    // Discounting-measure equivalence, when the cash account is symmetric.
    let gamma_check = if run.accounts.symmetric_cash() {
        let gamma = RateSpec::flat(run.config.verify.gamma, run.config.model.maturity);
        let repl = &dual.cash_route;
        let fine = gamma_measure_price(&gamma, repl, &run.accounts, &lattice).map_err(numeric)?;
        let half = lattice.with_steps(steps / 2).map_err(numeric)?;
        let repl_half = price_exogenous_collateral(
            &half,
            &run.equity,
            &run.accounts,
            &run.stream,
            &expr,
            &SolverSettings {
                coarse_diagnostic: false,
                ..settings
            },
        )
        .map_err(numeric)?;
        let coarse = gamma_measure_price(&gamma, &repl_half.cash_route, &run.accounts, &half)
            .map_err(numeric)?;
        let at_cash = gamma_measure_price(
            &run.accounts.cash_lend,
            repl,
            &run.accounts,
            &lattice,
        )
        .map_err(numeric)?;
        let scale = fine.value_risk_neutral.abs().max(1e-8);
        let measurable = fine.gap / scale > 1e-12;
        let ratio = if measurable {
            Some(coarse.gap / fine.gap)
        } else {
            None
        };
        let ok = fine.gap / scale <= 1e-3
            && ratio.map_or(true, |r| (1.6..=2.4).contains(&r))
            && at_cash.gap == 0.0;
        all_ok &= ok;
        Some(json!({
            "gamma": run.config.verify.gamma,
            "value_gamma": fine.value_gamma,
            "value_risk_neutral": fine.value_risk_neutral,
            "fine_gap": fine.gap,
            "coarse_gap": coarse.gap,
            "ratio": ratio,
            "gap_at_cash_rate": at_cash.gap,
            "passed": ok,
        }))
    } else {
        None
    };

    // Margin-convention degenerations, exact by construction.
    let mut degeneration_ok = true;
    {
        let horizon = run.config.model.maturity;
        let seg = MarginConvention::Segregated;
        let full = MarginConvention::FullRehypo;
        let as_seg = MarginConvention::PartialRehypo {
            reuse_received: RateSpec::flat(0.0, horizon),
            reuse_posted: RateSpec::flat(0.0, horizon),
        };
        let as_full = MarginConvention::PartialRehypo {
            reuse_received: RateSpec::flat(1.0, horizon),
            reuse_posted: RateSpec::flat(1.0, horizon),
        };
        for k in 0..32 {
            let received = (k * 37 % 101) as f64;
            let posted = (k * 53 % 89) as f64;
            let t = (k % 7) as f64 / 8.0 * horizon;
            let dt = horizon / 64.0;
            let a = margin_cost_increment(&seg, received, posted, &run.accounts, t, dt)
                .map_err(numeric)?;
            let b = margin_cost_increment(&as_seg, received, posted, &run.accounts, t, dt)
                .map_err(numeric)?;
            let c = margin_cost_increment(&full, received, posted, &run.accounts, t, dt)
                .map_err(numeric)?;
            let d = margin_cost_increment(&as_full, received, posted, &run.accounts, t, dt)
                .map_err(numeric)?;
            degeneration_ok &= a == b && c == d;
        }
        all_ok &= degeneration_ok;
    }

    let report = json!({
        "discount_routes": route_check,
        "gamma_measure": gamma_check,
        "margin_degenerations": { "passed": degeneration_ok },
        "passed": all_ok,
        "config": run.config,
    });
    output::write_text(
        out_dir,
        "compare.json",
        &serde_json::to_string_pretty(&report).map_err(numeric)?,
    )
    .map_err(io_err)?;
    println!(
        "route gap {:.3e} (ratio {:?}) -> {}",
        fine_gap,
        ratio,
        out_dir.display()
    );
    if all_ok {
        Ok(())
    } else {
        Err(RunError::Verification(
            "one or more equivalence checks failed; see compare.json".to_string(),
        ))
    }
}
