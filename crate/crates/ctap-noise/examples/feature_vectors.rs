//! The three-component feature vector that separates the noise classes.
//!
//! A noise environment is summarized by the ensemble-averaged transfer
//! efficiency under three driving conditions: equal amplitudes, pump
//! dominant and stokes dominant. This prints the vector for representative
//! members of every class and cross-checks one quadrature value against a
//! plain Monte-Carlo average over frozen-shift draws.
//!
//!     cargo run --release --example feature_vectors

use ctap_noise::features::{feature_vector, monte_carlo_feature, QuadratureSpec};
use ctap_noise::noise::NoiseSpec;
use ctap_noise::rng::derive_rng;
use ctap_noise::surface::{SurfaceConfig, SurfaceSet};

fn main() -> ctap_noise::Result<()> {
    // Coarse surfaces keep this demo quick; production uses step 0.2.
    let config = SurfaceConfig {
        grid_step: 2.0,
        ..SurfaceConfig::default()
    };
    eprintln!("building surfaces at grid step {} ...", config.grid_step);
    let surfaces = SurfaceSet::build(&config)?;
    let quad = QuadratureSpec::default();

    let specs = [
        ("correlated, eta = 0.5", NoiseSpec::quasistatic_correlated(0.5, 17.6)?),
        ("correlated, eta = 3", NoiseSpec::quasistatic_correlated(3.0, 17.6)?),
        ("anticorrelated, eta = -1", NoiseSpec::quasistatic_anticorrelated(-1.0, 17.6)?),
        ("uncorrelated, sigma2 = 40", NoiseSpec::quasistatic_uncorrelated(17.6, 40.0)?),
        ("markovian, eta = +2", NoiseSpec::markovian_merged(2.0, 1.0)?),
        ("markovian, eta = -2", NoiseSpec::markovian_merged(-2.0, 1.0)?),
    ];

    println!("{:<28} {:>8} {:>8} {:>8}", "noise", "xi_eq", "xi_p>s", "xi_p<s");
    for (name, spec) in &specs {
        let f = feature_vector(spec, &surfaces, &quad)?;
        println!(
            "{name:<28} {:>8.4} {:>8.4} {:>8.4}",
            f.xi_eq, f.xi_pg, f.xi_pl
        );
    }

    // The quadrature is just a fast, deterministic way to take the same
    // ensemble average a sampler would.
    let spec = &specs[0].1;
    let exact = feature_vector(spec, &surfaces, &quad)?;
    let mut rng = derive_rng(23, &[1]);
    let (mc, se) = monte_carlo_feature(spec, &surfaces, 200_000, &mut rng)?;
    println!("\nquadrature against 200k-draw Monte Carlo for {}:", specs[0].0);
    for (axis, q, m, s) in [
        ("xi_eq", exact.xi_eq, mc.xi_eq, se[0]),
        ("xi_p>s", exact.xi_pg, mc.xi_pg, se[1]),
        ("xi_p<s", exact.xi_pl, mc.xi_pl, se[2]),
    ] {
        println!(
            "  {axis:<7} quad {q:.5}  mc {m:.5} +- {s:.5}  ({:+.2} se)",
            (q - m) / s
        );
    }
    Ok(())
}
