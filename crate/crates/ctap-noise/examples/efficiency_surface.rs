//! Transfer-efficiency surfaces over the frozen-shift plane.
//!
//! Every quasistatic ensemble average in this crate is an integral of the
//! surface xi(x1, x2), so the surface is computed once per drive and cached.
//! This builds a coarse set (production uses grid step 0.2), prints a
//! slice along each axis, and round-trips the set through a cache file.
//!
//!     cargo run --release --example efficiency_surface

use ctap_noise::surface::{SurfaceConfig, SurfaceSet};

fn main() -> ctap_noise::Result<()> {
    let config = SurfaceConfig {
        grid_step: 2.0,
        ..SurfaceConfig::default()
    };
    eprintln!("building three surfaces at grid step {} ...", config.grid_step);
    let set = SurfaceSet::build(&config)?;

    let s = &set.equal;
    let (nx1, nx2) = s.grid_shape();
    let (x1_lo, x1_hi) = s.x1_range();
    let (x2_lo, x2_hi) = s.x2_range();
    println!(
        "equal-drive surface: {nx1} x {nx2} nodes on [{x1_lo}, {x1_hi}] x [{x2_lo}, {x2_hi}]"
    );

    println!("\nslice along x1 (x2 = 0): transfer survives any intermediate-level shift");
    println!("     x1      xi");
    for x1 in [0.0, 10.0, 30.0, 60.0, 90.0, 110.0] {
        println!("{x1:>7.1}  {:.4}", s.value(x1, 0.0));
    }

    println!("\nslice along x2 (x1 = 0): a target-level shift kills the two-photon resonance");
    println!("     x2      xi");
    for x2 in [0.0, 2.0, 5.0, 10.0, 20.0, 40.0] {
        println!("{x2:>7.1}  {:.4}", s.value(0.0, x2));
    }

    println!("\nper-drive efficiency at a diagonal shift (x1, x2) = (4, 8):");
    for (name, surface) in [
        ("equal", &set.equal),
        ("pump-dominant", &set.pump_dominant),
        ("stokes-dominant", &set.stokes_dominant),
    ] {
        println!("  {name:<16} {:.4}", surface.value(4.0, 8.0));
    }

    let path = std::env::temp_dir().join("surface-demo.json");
    set.save(&path)?;
    let back = SurfaceSet::load(&path)?;
    assert_eq!(back.equal.value(4.0, 8.0), set.equal.value(4.0, 8.0));
    println!("\ncache round-trip through {} is exact", path.display());
    std::fs::remove_file(&path).ok();
    Ok(())
}
