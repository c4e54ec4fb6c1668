//! Rate lower bound and interference of one SU along the two policy axes,
//! with the other parameter held at the reference value.

use cogharvest::model::validate;
use cogharvest::optimizer::{linspace, logspace};
use cogharvest::{analyze_su, PolicyParams, SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    let model = validate(SystemConfig::reference(), vec![SuProfile::new(2.0, 15.0)])?;
    let row = |omega: f64, theta: f64| -> cogharvest::Result<()> {
        let a = analyze_su(&model, 0, PolicyParams::new(omega, theta)?)?;
        println!(
            "{omega:.3},{theta:.4},{:.1},{:.4},{:.4},{:.2}",
            a.rate_lb(),
            a.interference,
            a.transmission_outage,
            a.avg_energy()
        );
        Ok(())
    };
    println!("omega,theta,rate_lb,interference,transmission_outage,avg_energy");
    for omega in linspace(0.0, 1.0, 11) {
        row(omega, 0.2)?;
    }
    println!();
    for theta in logspace(1e-3, 20.0, 12) {
        row(0.35, theta)?;
    }
    Ok(())
}
