//! Runs every shipped scenario in memory and prints its verdicts.
//!
//! `cargo run --example run_scenario -- path/to/file.toml` runs a file instead.

use histlab::scenario::{compute, golden_scenario, parse_scenario, RunOptions, GOLDEN_SCENARIOS};

fn main() -> histlab::Result<()> {
    let scenarios = match std::env::args().nth(1) {
        Some(path) => vec![parse_scenario(path.as_ref())?],
        None => GOLDEN_SCENARIOS.iter().filter_map(|(n, _)| golden_scenario(n)).collect(),
    };
    for s in scenarios {
        let out = compute(&s, &RunOptions::default())?;
        let r = &out.report;
        println!("{} ({}), {} rows, {:.3}s", r.scenario, r.kind, out.table.rows.len(), r.wall_time.as_secs_f64());
        for (k, v) in &r.verdicts {
            println!("  {k}: {}", if *v { "pass" } else { "FAIL" });
        }
        for (k, v) in &r.defects {
            println!("  {k} = {v:.3e}");
        }
    }
    Ok(())
}
