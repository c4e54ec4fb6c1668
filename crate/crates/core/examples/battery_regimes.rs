//! Average stored energy for the small-slope/large-slope and
//! low-cutoff/high-cutoff policy pairs at three sampling frequencies.

use std::time::Instant;

use cogharvest::model::validate;
use cogharvest::{analyze_su, PolicyParams, SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    let cases = [(0.45, 0.2), (0.30, 0.2), (0.35, 0.1), (0.35, 0.5)];
    println!("fs_hz,omega,theta,avg_energy,battery_outage,rate_lb,eval_ms");
    for fs in [10e3, 100e3, 1000e3] {
        let mut config = SystemConfig::reference();
        config.sampling_frequency = fs;
        let model = validate(config, vec![SuProfile::new(2.0, 15.0)])?;
        for (omega, theta) in cases {
            let start = Instant::now();
            let a = analyze_su(&model, 0, PolicyParams::new(omega, theta)?)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            println!(
                "{fs},{omega},{theta},{:.2},{:.4},{:.2},{ms:.2}",
                a.avg_energy(),
                a.battery_outage(),
                a.rate_lb()
            );
        }
    }
    Ok(())
}
