//! Detuning-plane stability of the noiseless transfer.
//!
//! Scans the single-trajectory efficiency over the (delta_p, delta) plane
//! for each drive and prints a character map of the region transferring
//! above 0.7. The equal drive tolerates the widest detuning window.
//!
//!     cargo run --release --example stability_map

use ctap_noise::features::{stability_map, STABILITY_CONTOUR_LEVEL};
use ctap_noise::quantum::DriveCondition;

fn main() -> ctap_noise::Result<()> {
    let grid = 61;
    let half = 60.0;
    for (name, drive) in [
        ("equal", DriveCondition::equal()),
        ("pump-dominant", DriveCondition::pump_dominant()),
        ("stokes-dominant", DriveCondition::stokes_dominant()),
    ] {
        let map = stability_map(&drive, (-half, half), (-half, half), grid)?;
        let mask = map.mask(STABILITY_CONTOUR_LEVEL);
        let usable = mask.iter().flatten().filter(|&&b| b).count();
        println!(
            "{name}: {:.1}% of the {half} x {half} window above {STABILITY_CONTOUR_LEVEL}",
            100.0 * usable as f64 / (grid * grid) as f64
        );
        // Row direction is delta_p, column direction delta; print every
        // second row so the map stays terminal-sized.
        for row in mask.iter().step_by(2) {
            let line: String = row
                .iter()
                .step_by(2)
                .map(|&inside| if inside { '#' } else { '.' })
                .collect();
            println!("  {line}");
        }
        println!();
    }
    Ok(())
}
