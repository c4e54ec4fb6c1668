//! The power policy on a seven-cell battery: how many cells each battery
//! level spends as the fed-back gain crosses its thresholds, and the
//! probability of each level under the idle decision.

use cogharvest::analysis::SuStatics;
use cogharvest::model::validate;
use cogharvest::policy::{breakpoints, policy_pmf};
use cogharvest::probing::Hypothesis;
use cogharvest::{PolicyParams, SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    let mut config = SystemConfig::reference();
    config.battery_cells = 7;
    let model = validate(config, vec![SuProfile::new(2.0, 1.0)])?;
    let params = PolicyParams::new(0.75, 0.02)?;
    let probe = model.config.probe_cells;

    println!("thresholds (level: gain interval)");
    for k in probe + 1..=model.config.battery_cells {
        let steps: Vec<String> = breakpoints(k, params, probe)
            .iter()
            .filter(|b| b.lower < b.upper)
            .map(|b| format!("{}: [{:.4}, {:.4})", b.level, b.lower, b.upper))
            .collect();
        let steps = if steps.is_empty() { "never transmits".to_string() } else { steps.join("  ") };
        println!("k={k}  {steps}");
    }

    let st = SuStatics::new(&model, 0);
    let pmf = policy_pmf(params, probe, model.config.battery_cells, &st.gain);
    println!("\nP(level | k, idle)");
    for k in 0..=model.config.battery_cells {
        let row: Vec<String> = pmf.row(Hypothesis::Idle, k).iter().map(|p| format!("{p:.3}")).collect();
        println!("k={k}  {}", row.join(" "));
    }
    Ok(())
}
