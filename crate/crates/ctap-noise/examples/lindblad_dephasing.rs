//! Transfer under Markovian dephasing.
//!
//! Solves the master equation for the equal drive at several dephasing
//! rates, printing the final transfer efficiency and the purity. Checks two
//! structural facts along the way: the gamma = 0 solution matches the pure
//! Schroedinger propagation, and a discretized white-noise Monte-Carlo
//! average converges to the same efficiency as its step is refined.
//!
//!     cargo run --release --example lindblad_dephasing

use ctap_noise::noise::{
    lindblad_history, markovian_efficiency, white_noise_refinement_pair, DensityMatrix,
};
use ctap_noise::quantum::{single_trajectory_efficiency, DriveCondition};
use ctap_noise::rng::derive_rng;

fn main() -> ctap_noise::Result<()> {
    let drive = DriveCondition::equal();
    let eta = 1.0;
    let steps = 4000;

    println!("equal drive, eta = {eta}");
    println!("  gamma    xi        purity    trace err   min eig");
    for gamma in [0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0] {
        let history = lindblad_history(
            &drive,
            eta,
            gamma,
            &DensityMatrix::basis_projector(0),
            steps,
            steps,
        )?;
        let (_, rho) = history.last().expect("history is never empty");
        println!(
            "{gamma:>7.3}  {:.6}  {:.6}  {:>9.2e}  {:>9.2e}",
            rho.population(2),
            rho.purity(),
            (rho.trace().re - 1.0).abs(),
            rho.min_eigenvalue(),
        );
    }

    let unitary = single_trajectory_efficiency(&drive, 0.0, 0.0);
    let zero_rate = markovian_efficiency(&drive, eta, 0.0, steps)?;
    println!(
        "\ngamma = 0 against the pure propagation: |{zero_rate:.9} - {unitary:.9}| = {:.2e}",
        (zero_rate - unitary).abs()
    );

    // White-noise cross-check: the same dephasing realized as a stochastic
    // frozen-shift sequence. Pairing coarse and fine steps on common draws
    // isolates the discretization error from the sampling error.
    let gamma = 0.5;
    let exact = markovian_efficiency(&drive, eta, gamma, steps)?;
    let mut rng = derive_rng(19, &[0]);
    println!("\nwhite-noise average at gamma = {gamma} (Lindblad value {exact:.6})");
    println!("  steps    mean       se        |err|");
    for coarse in [125, 250, 500] {
        let ((xc, sec), (xf, sef)) =
            white_noise_refinement_pair(&drive, eta, gamma, coarse, 3000, &mut rng)?;
        println!("{coarse:>7}  {xc:.6}  {sec:.6}  {:.6}", (xc - exact).abs());
        println!("{:>7}  {xf:.6}  {sef:.6}  {:.6}", 2 * coarse, (xf - exact).abs());
    }
    Ok(())
}
