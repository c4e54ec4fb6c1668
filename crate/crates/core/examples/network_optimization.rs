//! Sum-rate maximisation of three SUs as the interference cap loosens. Each
//! cap warm-starts from the optimum of the previous one.

use std::time::Instant;

use cogharvest::model::validate;
use cogharvest::optimizer::{solve_over_caps, SearchConfig};
use cogharvest::{SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    let profiles = [(2.0, 1.0, 1.0), (2.2, 0.8, 0.5), (2.1, 1.2, 0.8)]
        .iter()
        .map(|&(gamma, pu_su, su_pu)| SuProfile { pu_su_var: pu_su, su_pu_var: su_pu, ..SuProfile::new(gamma, 15.0) })
        .collect();
    let model = validate(SystemConfig::reference(), profiles)?;
    let caps: Vec<f64> = (-10..=10).step_by(2).map(|db| 10f64.powf(db as f64 / 10.0)).collect();

    let start = Instant::now();
    let results = solve_over_caps(&model, &caps, &SearchConfig::default())?;
    println!("cap_w,feasible,sum_rate,aic_lhs,policies");
    for r in &results {
        let policies: Vec<String> = r.params.iter().map(|p| format!("({:.3} {:.4})", p.omega, p.theta)).collect();
        println!("{:.4},{},{:.1},{:.4},{}", r.interference_cap, r.feasible, r.sum_rate, r.aic_lhs, policies.join(" "));
    }
    println!("{} caps in {:.1} s", caps.len(), start.elapsed().as_secs_f64());
    Ok(())
}
