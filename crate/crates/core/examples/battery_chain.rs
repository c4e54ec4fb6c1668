//! Battery Markov chain of a small battery: the column-stochastic transition
//! matrix, its steady state, and how fast plain power iteration gets there.

use cogharvest::battery::power_iteration;
use cogharvest::model::validate;
use cogharvest::{analyze_su, PolicyParams, SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    let mut config = SystemConfig::reference();
    config.battery_cells = 7;
    let model = validate(config, vec![SuProfile::new(2.0, 1.0)])?;
    let a = analyze_su(&model, 0, PolicyParams::new(0.75, 0.02)?)?;
    let phi = &a.chain.transition;

    println!("transition matrix (column j = current level)");
    for i in 0..phi.nrows() {
        let row: Vec<String> = (0..phi.ncols()).map(|j| format!("{:.4}", phi[(i, j)])).collect();
        println!("  {}", row.join(" "));
    }
    let zeta = a.steady_state();
    println!("steady state: {}", zeta.iter().map(|z| format!("{z:.5}")).collect::<Vec<_>>().join(" "));
    println!("residual |Phi zeta - zeta|: {:.2e}", a.chain.residual());
    println!("average stored energy {:.4} cells, battery outage {:.4}", a.avg_energy(), a.battery_outage());

    let it = power_iteration(phi, 1e-14, 50_000);
    let gap = it.distribution.iter().zip(zeta).map(|(p, z)| (p - z).abs()).fold(0.0, f64::max);
    println!("power iteration: {} steps, converged {}, gap {gap:.1e}", it.iterations, it.converged);
    Ok(())
}
