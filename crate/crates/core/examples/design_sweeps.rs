//! Design trade-offs of a single SU: the sensing window at a fixed policy,
//! the probe reserve at a fixed policy, and the optimised rate against the
//! battery size under a 2 dB interference cap.

use cogharvest::model::validate;
use cogharvest::optimizer::{linspace, solve_over_capacities, SearchConfig};
use cogharvest::{analyze_su, PolicyParams, SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    let params = PolicyParams::new(0.35, 0.25)?;

    println!("tau_s_ms,rate_lb,interference");
    for tau in linspace(0.1e-3, 3e-3, 8) {
        let mut config = SystemConfig::reference();
        config.sensing_duration = tau;
        let model = validate(config, vec![SuProfile::new(2.0, 15.0)])?;
        let a = analyze_su(&model, 0, params)?;
        println!("{:.3},{:.1},{:.4}", tau * 1e3, a.rate_lb(), a.interference);
    }

    println!("\nprobe_cells,rate_lb,avg_energy");
    for probe in 0..=8 {
        let mut config = SystemConfig::reference();
        config.battery_cells = 200;
        config.probe_cells = probe;
        let model = validate(config, vec![SuProfile::new(2.0, 18.0)])?;
        let a = analyze_su(&model, 0, params)?;
        println!("{probe},{:.1},{:.2}", a.rate_lb(), a.avg_energy());
    }

    println!("\nK,optimal_rate,omega,theta");
    let mut config = SystemConfig::reference();
    config.interference_cap = 10f64.powf(0.2);
    let model = validate(config, vec![SuProfile::new(2.0, 30.0)])?;
    let cells = [20, 40, 80, 120, 200];
    for (k, r) in cells.iter().zip(solve_over_capacities(&model, &cells, &SearchConfig::default())?) {
        println!("{k},{:.1},{:.4},{:.4}", r.sum_rate, r.params[0].omega, r.params[0].theta);
    }
    Ok(())
}
