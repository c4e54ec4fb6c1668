//! Energy-detector operating point against the sensing window: false-alarm
//! probability at the target detection rate, and the resulting sensing
//! outcome probabilities that drive both the rate and the interference.

use cogharvest::model::validate;
use cogharvest::sensing::sensing_stats;
use cogharvest::{SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    println!("tau_s_ms,samples,p_fa,p_d,pi_hat_idle,beta0,beta1");
    for tau_ms in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0] {
        let mut config = SystemConfig::reference();
        config.sensing_duration = tau_ms * 1e-3;
        let model = validate(config, vec![SuProfile::new(2.0, 15.0)])?;
        let s = sensing_stats(&model, model.profile(0));
        println!(
            "{tau_ms},{},{:.3e},{:.3},{:.4},{:.4},{:.4}",
            model.derived.sensing_samples, s.p_fa, s.p_d, s.pi_hat_idle, s.beta0, s.beta1
        );
    }
    Ok(())
}
