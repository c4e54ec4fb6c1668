//! Analytic metrics of one SU next to a million-slot simulation of the same
//! system, with the pass/fail verdict of each comparison.

use std::time::Instant;

use cogharvest::model::validate;
use cogharvest::simcore::{compare, simulate_su, AnalyticSummary, SimOptions};
use cogharvest::{analyze_su, PolicyParams, SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    let model = validate(SystemConfig::reference(), vec![SuProfile::new(2.0, 15.0)])?;
    let params = PolicyParams::new(0.35, 0.2)?;
    let analysis = analyze_su(&model, 0, params)?;

    let start = Instant::now();
    let trace = simulate_su(&model, 0, params, &SimOptions::new(1_000_000, 2024))?;
    println!("simulated {} slots in {:.2} s", trace.slots, start.elapsed().as_secs_f64());
    println!(
        "probe shortfalls {}, clamped at zero {}, clamped at K {}",
        trace.shortfall_events, trace.clamped_low, trace.clamped_high
    );

    let report = compare(&trace, &AnalyticSummary::from(&analysis));
    println!("{:<20} {:>14} {:>14} {:>10}  verdict", "quantity", "analytic", "simulated", "deviation");
    for c in &report.checks {
        println!(
            "{:<20} {:>14.6} {:>14.6} {:>10.2e}  {}",
            c.quantity,
            c.analytic,
            c.empirical,
            c.deviation,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    println!("overall: {}", if report.passed() { "pass" } else { "FAIL" });
    Ok(())
}
