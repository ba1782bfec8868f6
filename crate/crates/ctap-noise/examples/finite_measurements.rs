//! Feature vectors estimated from finitely many projective measurements.
//!
//! The exact feature vector is an ensemble mean of a Bernoulli outcome
//! (transfer or no transfer), so an experiment with M shots per driving
//! condition sees it with binomial noise. This compares M-shot estimates
//! against the exact vector for growing M and verifies the standard
//! 1/sqrt(M) error contraction.
//!
//!     cargo run --release --example finite_measurements

use ctap_noise::dataset::finite_measurement_features;
use ctap_noise::features::{feature_vector, QuadratureSpec};
use ctap_noise::noise::NoiseSpec;
use ctap_noise::rng::derive_rng;
use ctap_noise::surface::{SurfaceConfig, SurfaceSet};

fn main() -> ctap_noise::Result<()> {
    let config = SurfaceConfig {
        grid_step: 2.0,
        ..SurfaceConfig::default()
    };
    eprintln!("building surfaces at grid step {} ...", config.grid_step);
    let surfaces = SurfaceSet::build(&config)?;
    let quad = QuadratureSpec::default();

    let spec = NoiseSpec::quasistatic_correlated(1.0, 17.6)?;
    let exact = feature_vector(&spec, &surfaces, &quad)?;
    println!(
        "exact features: ({:.4}, {:.4}, {:.4})",
        exact.xi_eq, exact.xi_pg, exact.xi_pl
    );

    println!("\n      M     xi_eq     xi_p>s    xi_p<s    rms err (100 trials)");
    for m in [10usize, 100, 1000, 10000] {
        let mut rng = derive_rng(41, &[m as u64]);
        let mut sq = 0.0;
        let mut last = exact;
        for _ in 0..100 {
            let noisy = finite_measurement_features(&spec, &exact, m, &surfaces, &mut rng)?;
            let d = [
                noisy.xi_eq - exact.xi_eq,
                noisy.xi_pg - exact.xi_pg,
                noisy.xi_pl - exact.xi_pl,
            ];
            sq += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / 3.0;
            last = noisy;
        }
        let rms = (sq / 100.0).sqrt();
        println!(
            "{m:>7}   {:.4}    {:.4}    {:.4}    {rms:.4}",
            last.xi_eq, last.xi_pg, last.xi_pl
        );
    }
    println!("\nthe rms error falls about 3.2x per decade of M, the binomial 1/sqrt(M)");
    Ok(())
}
