//! Report writers: CSV surfaces and ledgers, JSON reports.

use std::fs;
use std::path::Path;

use fundlab_core::market::AccountSet;
use fundlab_core::pricer::BsdeSolution;
use fundlab_core::wealth::{netted_wealth, cash_process, WealthLedger};

/// Floating-point cell with 17 significant digits.
pub fn cell(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)
}

/// Value/hedge surface as CSV: one row per node.
pub fn surface_csv(solution: &BsdeSolution, dt: f64, spot0: f64, up: f64) -> String {
    let mut out = String::from("n,j,t,S,value,hedge,iterations\n");
    let steps = solution.steps();
    for n in 0..=steps {
        for j in 0..=n {
            let t = n as f64 * dt;
            let s = spot0 * up.powi(2 * j as i32 - n as i32);
            let hedge = if n < steps {
                cell(solution.hedge.get(n, j))
            } else {
                String::new()
            };
            let iters = solution.iterations_at(n, j);
            out.push_str(&format!(
                "{n},{j},{},{},{},{hedge},{iters}\n",
                cell(t),
                cell(s),
                cell(solution.value.get(n, j)),
            ));
        }
    }
    out
}

/// Ledger rows as CSV, one row per grid time.
pub fn ledger_csv_header() -> &'static str {
    "path,step,t,S,wealth,gains,funding,margin,flows,netted,cash_process,hedge,cash_lend,cash_borrow,asset_funding,margin_received,margin_posted\n"
}

pub fn ledger_csv_rows(
    path_index: usize,
    ledger: &WealthLedger,
    accounts: &AccountSet,
    out: &mut String,
) {
    let netted = netted_wealth(ledger, accounts).expect("rates cover the ledger horizon");
    let gamma = cash_process(ledger);
    for n in 0..ledger.times.len() {
        let (hedge, positions) = if n < ledger.hedge.len() {
            let p = &ledger.positions[n];
            (
                cell(ledger.hedge[n][0]),
                format!(
                    "{},{},{},{},{}",
                    cell(p.cash_lend),
                    cell(p.cash_borrow),
                    cell(p.asset_funding.first().copied().unwrap_or(0.0)),
                    cell(p.margin_received),
                    cell(p.margin_posted),
                ),
            )
        } else {
            (String::new(), ",,,,".to_string())
        };
        out.push_str(&format!(
            "{path_index},{n},{},{},{},{},{},{},{},{},{},{hedge},{positions}\n",
            cell(ledger.times[n]),
            cell(ledger.spots[0][n]),
            cell(ledger.wealth[n]),
            cell(ledger.gains[n]),
            cell(ledger.funding[n]),
            cell(ledger.margin[n]),
            cell(ledger.flows[n]),
            cell(netted[n]),
            cell(gamma[n]),
        ));
    }
}
