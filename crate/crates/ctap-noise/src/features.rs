//! Ensemble-averaged transfer efficiencies per driving condition and
//! stability maps over the detuning plane.
//!
//! The Gaussian averages run over a precomputed efficiency surface (see
//! `surface`) rather than fresh propagations: the transfer probability has a
//! cliff-shaped profile whose resolution demands node counts far beyond what
//! per-node propagation could afford, while surface lookups make even
//! thousands of nodes essentially free. Markovian efficiencies integrate the
//! master equation directly.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{self, NoiseClass, NoiseSpec, LINDBLAD_DEFAULT_STEPS};
use crate::quadrature::GaussHermite;
use crate::quantum::{Detunings, DriveCondition, PulseSchedule, DEFAULT_STEPS};
use crate::surface::{EfficiencySurface, SurfaceSet};

/// Smallest permitted node count on any quadrature axis.
pub const MIN_NODES: usize = 21;

/// Default 1-D node count, set where node doubling moves the averaged
/// efficiency by less than 1e-6 over the whole parameter range (measured
/// residual at this count is below 1e-8).
pub const DEFAULT_NODES_1D: usize = 2048;

/// Default per-axis node count for the 2-D tensor rule, chosen the same way.
pub const DEFAULT_NODES_2D: usize = 1024;

/// Node counts for the Gaussian ensemble averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes_1d: usize,
    pub nodes_2d_per_axis: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_1d: DEFAULT_NODES_1D,
            nodes_2d_per_axis: DEFAULT_NODES_2D,
        }
    }
}

impl QuadratureSpec {
    pub fn new(nodes_1d: usize, nodes_2d_per_axis: usize) -> Result<Self> {
        let spec = Self {
            nodes_1d,
            nodes_2d_per_axis,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_1d < MIN_NODES || self.nodes_2d_per_axis < MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs at least {MIN_NODES} nodes per axis, got {} and {}",
                self.nodes_1d, self.nodes_2d_per_axis
            )));
        }
        Ok(())
    }

    /// The same spec with both node counts doubled, for convergence checks.
    pub fn doubled(&self) -> Self {
        Self {
            nodes_1d: 2 * self.nodes_1d,
            nodes_2d_per_axis: 2 * self.nodes_2d_per_axis,
        }
    }
}

/// Construction of large rules costs seconds, so share them per node count.
static RULE_CACHE: LazyLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> =
    LazyLock::new(Mutex::default);

fn cached_rule(n: usize) -> Result<Arc<GaussHermite>> {
    if let Some(g) = RULE_CACHE.lock().expect("rule cache poisoned").get(&n) {
        return Ok(Arc::clone(g));
    }
    let fresh = Arc::new(GaussHermite::new(n)?);
    let mut map = RULE_CACHE.lock().expect("rule cache poisoned");
    Ok(Arc::clone(map.entry(n).or_insert(fresh)))
}

/// The three ensemble efficiencies (equal, pump-dominant, Stokes-dominant
/// drives) that a classifier consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub xi_eq: f64,
    pub xi_pg: f64,
    pub xi_pl: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.xi_eq, self.xi_pg, self.xi_pl]
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        let v = Self {
            xi_eq: a[0],
            xi_pg: a[1],
            xi_pl: a[2],
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.as_array() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidArgument(format!(
                    "feature component {c} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Mean efficiency for perfectly (anti-)correlated shifts x2 = eta * x1 with
/// x1 ~ N(0, sigma1^2), as a 1-D Gauss-Hermite sum along the line.
pub fn efficiency_correlated(
    surface: &EfficiencySurface,
    eta: f64,
    sigma1: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    quad.validate()?;
    if !(sigma1 > 0.0 && sigma1.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma1 must be positive, got {sigma1}"
        )));
    }
    let g = cached_rule(quad.nodes_1d)?;
    let v = surface.line_gaussian_average(&g, eta, sigma1);
    Ok(v.clamp(0.0, 1.0))
}

/// Mean efficiency for independent shifts x1 ~ N(0, sigma1^2) and
/// x2 ~ N(0, sigma2^2), as a tensor-product Gauss-Hermite sum.
pub fn efficiency_uncorrelated(
    surface: &EfficiencySurface,
    sigma1: f64,
    sigma2: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    quad.validate()?;
    if !(sigma1 > 0.0 && sigma1.is_finite() && sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma1 and sigma2 must be positive, got {sigma1} and {sigma2}"
        )));
    }
    let g = cached_rule(quad.nodes_2d_per_axis)?;
    let v = surface.tensor_gaussian_average(&g, sigma1, sigma2);
    Ok(v.clamp(0.0, 1.0))
}

/// Efficiency <2|rho(t_end)|2> under Markovian dephasing with rate gamma and
/// level-shift ratio eta.
pub fn efficiency_markovian(drive: &DriveCondition, eta: f64, gamma: f64) -> Result<f64> {
    noise::markovian_efficiency(drive, eta, gamma, LINDBLAD_DEFAULT_STEPS)
}

/// Dispatches one noise specification to the matching efficiency operation
/// for each of the three driving conditions.
pub fn feature_vector(
    spec: &NoiseSpec,
    surfaces: &SurfaceSet,
    quad: &QuadratureSpec,
) -> Result<FeatureVector> {
    spec.validate()?;
    let one = |surface: &EfficiencySurface| -> Result<f64> {
        match spec.class {
            NoiseClass::QuasistaticCorrelated | NoiseClass::QuasistaticAnticorrelated => {
                efficiency_correlated(surface, spec.eta, spec.sigma1, quad)
            }
            NoiseClass::QuasistaticUncorrelated => {
                efficiency_uncorrelated(surface, spec.sigma1, spec.sigma2, quad)
            }
            NoiseClass::Markovian
            | NoiseClass::MarkovianCorrelated
            | NoiseClass::MarkovianAnticorrelated => {
                efficiency_markovian(&surface.drive, spec.eta, spec.gamma)
            }
        }
    };
    Ok(FeatureVector {
        xi_eq: one(&surfaces.equal)?,
        xi_pg: one(&surfaces.pump_dominant)?,
        xi_pl: one(&surfaces.stokes_dominant)?,
    })
}

/// Monte-Carlo estimate of the quasistatic feature vector: `draws` fresh
/// realizations, each evaluated on all three surfaces (common draws across
/// the drives). Returns the mean vector and the per-component standard
/// error of the mean.
pub fn monte_carlo_feature<R: Rng>(
    spec: &NoiseSpec,
    surfaces: &SurfaceSet,
    draws: usize,
    rng: &mut R,
) -> Result<(FeatureVector, [f64; 3])> {
    spec.validate()?;
    if spec.class.is_markovian() {
        return Err(Error::InvalidNoiseSpec(
            "Monte-Carlo sampling only applies to quasistatic classes".into(),
        ));
    }
    if draws < 2 {
        return Err(Error::InvalidArgument(format!(
            "standard errors need at least 2 draws, got {draws}"
        )));
    }
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    for _ in 0..draws {
        let r = noise::sample_quasistatic(spec, rng)?;
        for (k, surface) in surfaces.surfaces().iter().enumerate() {
            let v = surface.value(r.x1, r.x2);
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    let n = draws as f64;
    let mean = [sum[0] / n, sum[1] / n, sum[2] / n];
    let mut se = [0.0f64; 3];
    for k in 0..3 {
        let var = ((sum_sq[k] - sum[k] * sum[k] / n) / (n - 1.0)).max(0.0);
        se[k] = (var / n).sqrt();
    }
    Ok((
        FeatureVector {
            xi_eq: mean[0],
            xi_pg: mean[1],
            xi_pl: mean[2],
        },
        se,
    ))
}

/// Default half-range of the stability scan on both detuning axes.
pub const STABILITY_DEFAULT_HALF_RANGE: f64 = 60.0;

/// Default number of grid points per detuning axis.
pub const STABILITY_DEFAULT_GRID: usize = 101;

/// Smallest permitted stability grid.
pub const STABILITY_MIN_GRID: usize = 51;

/// Contour level of the usable-transfer region.
pub const STABILITY_CONTOUR_LEVEL: f64 = 0.7;

/// Single-trajectory efficiency over a (delta_p, delta) detuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub delta_p_axis: Vec<f64>,
    pub delta_axis: Vec<f64>,
    /// Row-major: efficiency[i][j] at (delta_p_axis[i], delta_axis[j]).
    pub efficiency: Vec<Vec<f64>>,
    pub drive: DriveCondition,
}

/// Scans noiseless single-trajectory efficiency over the detuning plane.
pub fn stability_map(
    drive: &DriveCondition,
    dp_range: (f64, f64),
    d_range: (f64, f64),
    grid: usize,
) -> Result<StabilityMap> {
    if grid < STABILITY_MIN_GRID {
        return Err(Error::InvalidArgument(format!(
            "stability grid needs at least {STABILITY_MIN_GRID} points per axis, got {grid}"
        )));
    }
    if !(dp_range.0 < dp_range.1 && d_range.0 < d_range.1) {
        return Err(Error::InvalidArgument(
            "detuning ranges must be increasing intervals".into(),
        ));
    }
    let axis = |range: (f64, f64)| -> Vec<f64> {
        let step = (range.1 - range.0) / (grid - 1) as f64;
        (0..grid).map(|k| range.0 + k as f64 * step).collect()
    };
    let delta_p_axis = axis(dp_range);
    let delta_axis = axis(d_range);
    let sched = PulseSchedule::new(drive, DEFAULT_STEPS)?;
    let efficiency: Vec<Vec<f64>> = delta_p_axis
        .par_iter()
        .map(|&dp| {
            delta_axis
                .iter()
                .map(|&d| crate::quantum::schedule_efficiency(&sched, Detunings::new(dp, d), 0.0, 0.0))
                .collect()
        })
        .collect();
    Ok(StabilityMap {
        delta_p_axis,
        delta_axis,
        efficiency,
        drive: *drive,
    })
}

impl StabilityMap {
    /// Boolean level-set mask, true where efficiency exceeds `level`.
    pub fn mask(&self, level: f64) -> Vec<Vec<bool>> {
        self.efficiency
            .iter()
            .map(|row| row.iter().map(|&v| v > level).collect())
            .collect()
    }

    /// CSV with the delta axis as the header row and delta_p as the first
    /// column; floats printed in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta_p/delta");
        for d in &self.delta_axis {
            out.push(',');
            out.push_str(&d.to_string());
        }
        out.push('\n');
        for (i, dp) in self.delta_p_axis.iter().enumerate() {
            out.push_str(&dp.to_string());
            for v in &self.efficiency[i] {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Parses the `to_csv` format back; the drive is supplied by the caller
    /// since CSV carries only the grid.
    pub fn from_csv(text: &str, drive: DriveCondition) -> Result<Self> {
        let bad = |line: usize, what: &str| {
            Error::DatasetParse {
                line,
                message: what.to_string(),
            }
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "empty stability CSV"))?;
        let delta_axis: Vec<f64> = header
            .split(',')
            .skip(1)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(1, &format!("bad header value: {e}")))?;
        let mut delta_p_axis = Vec::new();
        let mut efficiency = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let dp: f64 = cells
                .next()
                .ok_or_else(|| bad(idx + 1, "missing delta_p cell"))?
                .parse()
                .map_err(|e| bad(idx + 1, &format!("bad delta_p: {e}")))?;
            let row: Vec<f64> = cells
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(idx + 1, &format!("bad efficiency: {e}")))?;
            if row.len() != delta_axis.len() {
                return Err(bad(
                    idx + 1,
                    &format!("row has {} cells, header {}", row.len(), delta_axis.len()),
                ));
            }
            delta_p_axis.push(dp);
            efficiency.push(row);
        }
        let map = Self {
            delta_p_axis,
            delta_axis,
            efficiency,
            drive,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        for axis in [&self.delta_p_axis, &self.delta_axis] {
            if axis.len() < 2 || axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(
                    "stability axes must be strictly increasing".into(),
                ));
            }
        }
        if self.efficiency.len() != self.delta_p_axis.len()
            || self
                .efficiency
                .iter()
                .any(|row| row.len() != self.delta_axis.len())
        {
            return Err(Error::ShapeMismatch(format!(
                "stability grid should be {}x{}, got {} rows with first row of {}",
                self.delta_p_axis.len(),
                self.delta_axis.len(),
                self.efficiency.len(),
                self.efficiency.first().map_or(0, Vec::len)
            )));
        }
        if self
            .efficiency
            .iter()
            .flatten()
            .any(|v| !(-1e-9..=1.0 + 1e-9).contains(v))
        {
            return Err(Error::InvalidArgument(
                "stability efficiencies must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}
