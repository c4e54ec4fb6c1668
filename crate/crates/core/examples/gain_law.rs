//! Channel estimation from the pilot phase: LMMSE variances under each
//! hypothesis and the two-component law of the fed-back gain seen by an SU
//! that decided the band was idle.

use cogharvest::model::validate;
use cogharvest::probing::{Conditioning, GainDistribution, Hypothesis};
use cogharvest::analysis::SuStatics;
use cogharvest::{SuProfile, SystemConfig};

fn main() -> cogharvest::Result<()> {
    let model = validate(SystemConfig::reference(), vec![SuProfile::new(2.0, 15.0)])?;
    let st = SuStatics::new(&model, 0);
    let e = &st.estimation;
    println!("estimated-gain variance: idle {:.5}, busy {:.5}", e.var_hat_h0, e.var_hat_h1);
    println!("estimation error:        idle {:.3e}, busy {:.3e}", e.var_err_h0, e.var_err_h1);

    let dist = GainDistribution::new(&st.sensing, e);
    println!("mixture weights: idle {:.4}, busy {:.4}", dist.weights[0], dist.weights[1]);
    println!("g,cdf_idle,cdf_busy,cdf_mixed");
    for g in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0] {
        println!(
            "{g},{:.6},{:.6},{:.6}",
            dist.cdf(g, Conditioning::Given(Hypothesis::Idle)),
            dist.cdf(g, Conditioning::Given(Hypothesis::Busy)),
            dist.cdf(g, Conditioning::Mixed)
        );
    }
    Ok(())
}
