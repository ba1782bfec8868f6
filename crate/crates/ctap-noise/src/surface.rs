//! Precomputed transfer-efficiency surfaces over the noise-shift plane.
//!
//! All ensemble averages in this crate reduce to integrals of the single
//! smooth function xi(x1, x2) per drive, so it is evaluated once on a dense
//! rectangular grid and read back through a separable cubic B-spline
//! smoothing kernel. The function has no oscillatory structure, only a
//! plateau, a cliff of width a few 1/T and an exponential tail, which is why
//! a fixed grid works; the C2 kernel keeps high-order Gaussian quadratures
//! over the surface from stalling on interpolation kinks.
//!
//! The box is sized from measured support: the transfer probability falls
//! below 1e-7 outside |x2| <= 51/T for every drive (checked again at build
//! time on the outermost rows), while along x1 the region only needs to
//! cover the Gaussian weight of sigma1, which is fixed at 17.6/T across the
//! noise classes; beyond 6.5 sigma the weight is under 1e-9. Outside the box
//! the surface evaluates to zero, which is also the physical limit.

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::quantum::{propagate, Detunings, DriveCondition, QuantumState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Default grid spacing, in 1/T. Read-back error measured at ~3e-4.
pub const DEFAULT_GRID_STEP: f64 = 0.2;
/// Default half-extent of the x1 axis (6.5 sigma1 for sigma1 = 17.6/T).
pub const DEFAULT_X1_HALF: f64 = 114.4;
/// Default half-extent of the x2 axis (support dies below 1e-7 by 51/T).
pub const DEFAULT_X2_HALF: f64 = 56.0;
/// Propagation steps per grid node. The integrator's step-halving residual
/// at 1000 steps is ~1e-7, far below the interpolation budget.
pub const DEFAULT_BUILD_STEPS: usize = 1000;

/// Build parameters for one surface.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub x1_half: f64,
    pub x2_half: f64,
    pub grid_step: f64,
    pub steps: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            x1_half: DEFAULT_X1_HALF,
            x2_half: DEFAULT_X2_HALF,
            grid_step: DEFAULT_GRID_STEP,
            steps: DEFAULT_BUILD_STEPS,
        }
    }
}

impl SurfaceConfig {
    fn validate(&self) -> Result<()> {
        if !(self.x1_half > 0.0 && self.x2_half > 0.0 && self.grid_step > 0.0) {
            return Err(Error::InvalidArgument(
                "surface extents and grid step must be positive".into(),
            ));
        }
        let nx1 = (2.0 * self.x1_half / self.grid_step).round() as usize + 1;
        let nx2 = (2.0 * self.x2_half / self.grid_step).round() as usize + 1;
        if nx1 < 2 || nx2 < 2 {
            return Err(Error::InvalidArgument(
                "surface grid needs at least two points per axis".into(),
            ));
        }
        Ok(())
    }
}

/// Transfer efficiency xi(x1, x2) for one drive, sampled on a grid and read
/// back through the smoothing spline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencySurface {
    pub drive: DriveCondition,
    x1_min: f64,
    x2_min: f64,
    step: f64,
    nx1: usize,
    nx2: usize,
    /// Row-major: values[i1 * nx2 + i2].
    values: Vec<f64>,
}

impl EfficiencySurface {
    /// Evaluates the transfer probability on the grid by direct propagation.
    ///
    /// Fails if the outermost x2 rows still carry efficiency above 1e-5,
    /// which would mean the box truncates live structure.
    pub fn build(drive: &DriveCondition, config: &SurfaceConfig) -> Result<Self> {
        config.validate()?;
        let step = config.grid_step;
        let nx1 = (2.0 * config.x1_half / step).round() as usize + 1;
        let nx2 = (2.0 * config.x2_half / step).round() as usize + 1;
        let x1_min = -config.x1_half;
        let x2_min = -config.x2_half;
        let det = Detunings::default();
        let init = QuantumState::basis(0);
        let rows: Vec<Vec<f64>> = (0..nx1)
            .into_par_iter()
            .map(|i1| {
                let x1 = x1_min + i1 as f64 * step;
                let mut row = Vec::with_capacity(nx2);
                for i2 in 0..nx2 {
                    let x2 = x2_min + i2 as f64 * step;
                    let psi = propagate(drive, det, x1, x2, &init, config.steps)
                        .expect("surface node propagation cannot fail for a valid drive");
                    row.push(psi.population(2));
                }
                row
            })
            .collect();
        let mut values = Vec::with_capacity(nx1 * nx2);
        for row in rows {
            values.extend_from_slice(&row);
        }
        let surface = Self {
            drive: *drive,
            x1_min,
            x2_min,
            step,
            nx1,
            nx2,
            values,
        };
        let edge = surface.max_x2_edge_value();
        if edge > 1e-5 {
            return Err(Error::InvalidArgument(format!(
                "surface box too small: efficiency {edge:.2e} on the x2 boundary"
            )));
        }
        Ok(surface)
    }

    /// Largest value on the first and last x2 rows; the zero extension is
    /// only valid when this is negligible.
    pub fn max_x2_edge_value(&self) -> f64 {
        let mut m = 0.0f64;
        for i1 in 0..self.nx1 {
            m = m.max(self.values[i1 * self.nx2]);
            m = m.max(self.values[i1 * self.nx2 + self.nx2 - 1]);
        }
        m
    }

    pub fn x1_range(&self) -> (f64, f64) {
        (self.x1_min, self.x1_min + (self.nx1 - 1) as f64 * self.step)
    }

    pub fn x2_range(&self) -> (f64, f64) {
        (self.x2_min, self.x2_min + (self.nx2 - 1) as f64 * self.step)
    }

    pub fn grid_step(&self) -> f64 {
        self.step
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.nx1, self.nx2)
    }

    /// Smoothed evaluation: a separable cubic B-spline over the grid
    /// samples, zero outside the box (the physical limit).
    ///
    /// The kernel is nonnegative with unit sum, so values stay inside the
    /// sample range, and it is C2, so Gaussian quadratures over the surface
    /// converge cleanly instead of rattling on interpolation kinks. The
    /// smoothing bias is h^2 f'' / 6, the same order as plain bilinear
    /// interpolation error.
    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        let fx = (x1 - self.x1_min) / self.step;
        let fy = (x2 - self.x2_min) / self.step;
        if fx < 0.0 || fy < 0.0 || fx > (self.nx1 - 1) as f64 || fy > (self.nx2 - 1) as f64 {
            return 0.0;
        }
        let (ix, wx) = spline_taps(fx, self.nx1);
        let (iy, wy) = spline_taps(fy, self.nx2);
        let mut acc = 0.0;
        for a in 0..4 {
            let row = ix[a] * self.nx2;
            let mut r = 0.0;
            for b in 0..4 {
                r += wy[b] * self.values[row + iy[b]];
            }
            acc += wx[a] * r;
        }
        acc
    }

    /// Largest |x1| and |x2| still inside the box.
    pub fn box_half_extents(&self) -> (f64, f64) {
        let x1_max = self.x1_min + (self.nx1 - 1) as f64 * self.step;
        let x2_max = self.x2_min + (self.nx2 - 1) as f64 * self.step;
        ((-self.x1_min).max(x1_max), (-self.x2_min).max(x2_max))
    }

    /// E[value(X, eta X)] for X ~ N(0, sigma^2): the perfectly
    /// (anti-)correlated line through the surface, integrated with `rule`.
    /// Node placement is adapted to the stretch of the line inside the box
    /// (see `effective_sigma`), which matters for steep eta where the
    /// surface support covers only a small core of the Gaussian.
    pub fn line_gaussian_average(&self, rule: &GaussHermite, eta: f64, sigma: f64) -> f64 {
        let (bx1, bx2) = self.box_half_extents();
        let half = if eta.abs() * bx1 > bx2 {
            bx2 / eta.abs()
        } else {
            bx1
        };
        let sigma_eff = effective_sigma(sigma, half);
        if sigma_eff >= sigma {
            return rule.gaussian_average(sigma, |x1| self.value(x1, eta * x1));
        }
        let rho = sigma_eff / sigma;
        let c = 1.0 - rho * rho;
        let s = std::f64::consts::SQRT_2 * sigma_eff;
        let mut acc = 0.0;
        for (u, w) in rule.nodes().iter().zip(rule.weights()) {
            let x1 = s * u;
            let f = self.value(x1, eta * x1);
            // Nodes beyond the support contribute nothing; skipping them
            // also keeps the density-ratio exponent bounded.
            if f != 0.0 {
                acc += w * f * rho * (c * u * u).exp();
            }
        }
        acc
    }

    /// E[value(X, Y)] for independent X ~ N(0, sigma1^2), Y ~ N(0, sigma2^2)
    /// under the tensor product of `rule` with itself, evaluated exactly but
    /// factored through the separable kernel: per-axis node weights are
    /// folded onto the grid first, so the cost is O(nodes + grid cells)
    /// instead of O(nodes^2). Summation order is fixed, so the result is
    /// reproducible bit for bit.
    pub fn tensor_gaussian_average(
        &self,
        rule: &GaussHermite,
        sigma1: f64,
        sigma2: f64,
    ) -> f64 {
        let (bx1, bx2) = self.box_half_extents();
        let ax = self.axis_weights(rule, sigma1, bx1, self.x1_min, self.nx1);
        let ay = self.axis_weights(rule, sigma2, bx2, self.x2_min, self.nx2);
        let mut acc = 0.0;
        for k in 0..self.nx1 {
            let wk = ax[k];
            if wk == 0.0 {
                continue;
            }
            let row = k * self.nx2;
            let mut r = 0.0;
            for (l, wl) in ay.iter().enumerate() {
                r += wl * self.values[row + l];
            }
            acc += wk * r;
        }
        acc
    }

    /// Folds the rule's scaled nodes onto one grid axis: entry k collects
    /// the quadrature mass that `value` would read from grid line k. Nodes
    /// outside the box contribute nothing, matching the zero extension.
    /// Sigmas far wider than the axis get the same density-ratio treatment
    /// as `line_gaussian_average`.
    fn axis_weights(
        &self,
        rule: &GaussHermite,
        sigma: f64,
        half: f64,
        min: f64,
        n: usize,
    ) -> Vec<f64> {
        let sigma_eff = effective_sigma(sigma, half);
        let rho = sigma_eff / sigma;
        let c = 1.0 - rho * rho;
        let s = std::f64::consts::SQRT_2 * sigma_eff;
        let mut acc = vec![0.0; n];
        for (u, w) in rule.nodes().iter().zip(rule.weights()) {
            let f = (s * u - min) / self.step;
            if f < 0.0 || f > (n - 1) as f64 {
                continue;
            }
            let node_w = if c == 0.0 {
                *w
            } else {
                w * rho * (c * u * u).exp()
            };
            let (idx, wt) = spline_taps(f, n);
            for q in 0..4 {
                acc[idx[q]] += node_w * wt[q];
            }
        }
        acc
    }
}

/// How many effective sigmas of node density the support half-width should
/// span. Density at the edge is then e^(-factor^2/2) ~ 6e-10 of the peak,
/// matching the surface's own floor at the box edge.
const SUPPORT_SIGMA_FACTOR: f64 = 6.5;

/// Node-placement sigma for a Gaussian of width `sigma` integrated against
/// a function supported on [-half, half]. When the Gaussian is much wider
/// than the support, almost all nodes would fall where the integrand
/// vanishes; shrinking the placement sigma (and correcting each node by the
/// exact density ratio) keeps the estimate unbiased while the node density
/// tracks the structure that actually contributes.
fn effective_sigma(sigma: f64, half: f64) -> f64 {
    sigma.min(half / SUPPORT_SIGMA_FACTOR)
}

/// Four clamped grid indices around fractional coordinate f with their cubic
/// B-spline weights (nonnegative, summing to one). Clamping folds
/// out-of-range taps onto the edge sample.
fn spline_taps(f: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    let i = (f.floor() as isize).clamp(0, n as isize - 1);
    let t = f - i as f64;
    let idx = |k: isize| (i + k).clamp(0, n as isize - 1) as usize;
    (
        [idx(-1), idx(0), idx(1), idx(2)],
        bspline_weights(t),
    )
}

/// Cubic B-spline kernel evaluated at the four taps around offset t in [0, 1).
fn bspline_weights(t: f64) -> [f64; 4] {
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (4.0 - 6.0 * t * t + 3.0 * t * t * t) / 6.0,
        (4.0 - 6.0 * u * u + 3.0 * u * u * u) / 6.0,
        t * t * t / 6.0,
    ]
}

/// The three surfaces matching the three driving conditions of the feature
/// vector, in feature order: equal amplitudes, pump-dominant, stokes-dominant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceSet {
    pub equal: EfficiencySurface,
    pub pump_dominant: EfficiencySurface,
    pub stokes_dominant: EfficiencySurface,
    pub config: SurfaceConfig,
}

impl SurfaceSet {
    pub fn build(config: &SurfaceConfig) -> Result<Self> {
        Ok(Self {
            equal: EfficiencySurface::build(&DriveCondition::equal(), config)?,
            pump_dominant: EfficiencySurface::build(&DriveCondition::pump_dominant(), config)?,
            stokes_dominant: EfficiencySurface::build(&DriveCondition::stokes_dominant(), config)?,
            config: *config,
        })
    }

    pub fn surfaces(&self) -> [&EfficiencySurface; 3] {
        [&self.equal, &self.pump_dominant, &self.stokes_dominant]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        use std::io::Write;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let r = std::io::BufReader::new(file);
        Ok(serde_json::from_reader(r)?)
    }
}
