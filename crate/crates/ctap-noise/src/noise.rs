//! Noise classes, quasistatic sampling, and Markovian dephasing dynamics.
//!
//! Five classes of classical dephasing act on the two upper levels through
//! energy shifts x1, x2. Quasistatic noise freezes one Gaussian draw per
//! protocol run; Markovian noise enters through a Lindblad dissipator with
//! the diagonal jump operator O = diag(0, 1, eta).

use crate::error::{Error, Result};
use crate::quantum::{hamiltonian, Detunings, DriveCondition, QuantumState, MIN_STEPS};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Quasistatic spread of the first noise channel used throughout, 1/T.
pub const SIGMA1_DEFAULT: f64 = 17.6;
/// Default dephasing rate for the Markovian classes, 1/T.
pub const GAMMA_DEFAULT: f64 = 1.0;
/// Largest |eta| any class admits.
pub const ETA_MAX: f64 = 5.0;
/// Smallest |eta| for the sign-restricted classes.
pub const ETA_MIN: f64 = 0.1;

/// Default step count for the density-matrix integrator. The classical
/// 4th-order scheme needs more steps than the unitary propagator's exact
/// exponentials to meet the same step-halving contract.
pub const LINDBLAD_DEFAULT_STEPS: usize = 4000;

/// The noise classes. The first five are the five-way labeling; `Markovian`
/// merges the two Markovian signs into the four-way labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseClass {
    QuasistaticCorrelated,
    QuasistaticAnticorrelated,
    QuasistaticUncorrelated,
    MarkovianCorrelated,
    MarkovianAnticorrelated,
    Markovian,
}

impl NoiseClass {
    pub fn is_markovian(self) -> bool {
        matches!(
            self,
            Self::MarkovianCorrelated | Self::MarkovianAnticorrelated | Self::Markovian
        )
    }

    pub fn is_quasistatic(self) -> bool {
        !self.is_markovian()
    }

    /// Stable integer used to key derived random streams; never reorder.
    pub fn stream_code(self) -> u64 {
        match self {
            Self::QuasistaticCorrelated => 1,
            Self::QuasistaticAnticorrelated => 2,
            Self::QuasistaticUncorrelated => 3,
            Self::MarkovianCorrelated => 4,
            Self::MarkovianAnticorrelated => 5,
            Self::Markovian => 6,
        }
    }

    /// Serialization tag, also used in dataset files.
    pub fn tag(self) -> &'static str {
        match self {
            Self::QuasistaticCorrelated => "quasistatic-correlated",
            Self::QuasistaticAnticorrelated => "quasistatic-anticorrelated",
            Self::QuasistaticUncorrelated => "quasistatic-uncorrelated",
            Self::MarkovianCorrelated => "markovian-correlated",
            Self::MarkovianAnticorrelated => "markovian-anticorrelated",
            Self::Markovian => "markovian",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "quasistatic-correlated" => Self::QuasistaticCorrelated,
            "quasistatic-anticorrelated" => Self::QuasistaticAnticorrelated,
            "quasistatic-uncorrelated" => Self::QuasistaticUncorrelated,
            "markovian-correlated" => Self::MarkovianCorrelated,
            "markovian-anticorrelated" => Self::MarkovianAnticorrelated,
            "markovian" => Self::Markovian,
            other => {
                return Err(Error::InvalidNoiseSpec(format!(
                    "unknown noise class tag {other:?}"
                )))
            }
        })
    }
}

/// A fully parameterized noise model: class plus its parameters.
///
/// Unused parameters are pinned (eta at zero for the uncorrelated class,
/// sigma2 at zero everywhere else) so a spec has one canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub class: NoiseClass,
    pub eta: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub gamma: f64,
}

impl NoiseSpec {
    pub fn new(class: NoiseClass, eta: f64, sigma1: f64, sigma2: f64, gamma: f64) -> Result<Self> {
        let spec = Self {
            class,
            eta,
            sigma1,
            sigma2,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn quasistatic_correlated(eta: f64, sigma1: f64) -> Result<Self> {
        Self::new(NoiseClass::QuasistaticCorrelated, eta, sigma1, 0.0, GAMMA_DEFAULT)
    }

    pub fn quasistatic_anticorrelated(eta: f64, sigma1: f64) -> Result<Self> {
        Self::new(NoiseClass::QuasistaticAnticorrelated, eta, sigma1, 0.0, GAMMA_DEFAULT)
    }

    pub fn quasistatic_uncorrelated(sigma1: f64, sigma2: f64) -> Result<Self> {
        Self::new(NoiseClass::QuasistaticUncorrelated, 0.0, sigma1, sigma2, GAMMA_DEFAULT)
    }

    pub fn markovian_correlated(eta: f64, gamma: f64) -> Result<Self> {
        Self::new(NoiseClass::MarkovianCorrelated, eta, SIGMA1_DEFAULT, 0.0, gamma)
    }

    pub fn markovian_anticorrelated(eta: f64, gamma: f64) -> Result<Self> {
        Self::new(NoiseClass::MarkovianAnticorrelated, eta, SIGMA1_DEFAULT, 0.0, gamma)
    }

    pub fn markovian_merged(eta: f64, gamma: f64) -> Result<Self> {
        Self::new(NoiseClass::Markovian, eta, SIGMA1_DEFAULT, 0.0, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma1.is_finite()) {
            return Err(Error::InvalidNoiseSpec(format!(
                "sigma1 must be positive, got {}",
                self.sigma1
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidNoiseSpec(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !self.eta.is_finite() || !self.sigma2.is_finite() {
            return Err(Error::InvalidNoiseSpec("parameters must be finite".into()));
        }
        match self.class {
            NoiseClass::QuasistaticCorrelated | NoiseClass::MarkovianCorrelated => {
                if !(ETA_MIN..=ETA_MAX).contains(&self.eta) {
                    return Err(Error::InvalidNoiseSpec(format!(
                        "correlated class needs eta in [{ETA_MIN}, {ETA_MAX}], got {}",
                        self.eta
                    )));
                }
            }
            NoiseClass::QuasistaticAnticorrelated | NoiseClass::MarkovianAnticorrelated => {
                if !(-ETA_MAX..=-ETA_MIN).contains(&self.eta) {
                    return Err(Error::InvalidNoiseSpec(format!(
                        "anticorrelated class needs eta in [-{ETA_MAX}, -{ETA_MIN}], got {}",
                        self.eta
                    )));
                }
            }
            NoiseClass::QuasistaticUncorrelated => {
                if self.eta != 0.0 {
                    return Err(Error::InvalidNoiseSpec(format!(
                        "uncorrelated class does not use eta; set it to zero, got {}",
                        self.eta
                    )));
                }
                if !(self.sigma2 > 0.0 && self.sigma2 <= 5.0 * self.sigma1) {
                    return Err(Error::InvalidNoiseSpec(format!(
                        "uncorrelated class needs sigma2 in (0, 5 sigma1], got {}",
                        self.sigma2
                    )));
                }
            }
            NoiseClass::Markovian => {
                if !(-ETA_MAX..=ETA_MAX).contains(&self.eta) {
                    return Err(Error::InvalidNoiseSpec(format!(
                        "merged Markovian class needs eta in [-{ETA_MAX}, {ETA_MAX}], got {}",
                        self.eta
                    )));
                }
            }
        }
        if self.class != NoiseClass::QuasistaticUncorrelated && self.sigma2 != 0.0 {
            return Err(Error::InvalidNoiseSpec(format!(
                "sigma2 is only meaningful for the uncorrelated class; set it to zero, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

/// One frozen draw of the two energy shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub x1: f64,
    pub x2: f64,
}

/// Draws one quasistatic realization. Correlated classes tie x2 = eta * x1
/// exactly; the uncorrelated class draws the pair independently.
pub fn sample_quasistatic<R: Rng>(spec: &NoiseSpec, rng: &mut R) -> Result<NoiseRealization> {
    if spec.class.is_markovian() {
        return Err(Error::InvalidNoiseSpec(format!(
            "{:?} has no quasistatic realizations",
            spec.class
        )));
    }
    let z1: f64 = StandardNormal.sample(rng);
    let x1 = spec.sigma1 * z1;
    let x2 = match spec.class {
        NoiseClass::QuasistaticUncorrelated => {
            let z2: f64 = StandardNormal.sample(rng);
            spec.sigma2 * z2
        }
        _ => spec.eta * x1,
    };
    Ok(NoiseRealization { x1, x2 })
}

/// Diagonal jump operator diag(0, 1, eta) coupling to the level shifts.
pub fn jump_operator(eta: f64) -> [[f64; 3]; 3] {
    let mut o = [[0.0; 3]; 3];
    o[1][1] = 1.0;
    o[2][2] = eta;
    o
}

/// 3x3 density operator over the transfer basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    pub m: [[Complex64; 3]; 3],
}

impl DensityMatrix {
    pub fn zeros() -> Self {
        Self {
            m: [[Complex64::ZERO; 3]; 3],
        }
    }

    /// Projector |psi><psi| of a pure state.
    pub fn pure(state: &QuantumState) -> Self {
        let mut m = [[Complex64::ZERO; 3]; 3];
        for (j, row) in m.iter_mut().enumerate() {
            for (k, e) in row.iter_mut().enumerate() {
                *e = state.amps[j] * state.amps[k].conj();
            }
        }
        Self { m }
    }

    pub fn basis_projector(k: usize) -> Self {
        Self::pure(&QuantumState::basis(k))
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    /// Real part of Tr rho^2; 1 for pure states, 1/3 at the maximal mixture.
    pub fn purity(&self) -> f64 {
        let mut p = Complex64::ZERO;
        for j in 0..3 {
            for k in 0..3 {
                p += self.m[j][k] * self.m[k][j];
            }
        }
        p.re
    }

    /// Population of basis level k.
    pub fn population(&self, k: usize) -> f64 {
        self.m[k][k].re
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut e = 0.0f64;
        for j in 0..3 {
            for k in 0..3 {
                e = e.max((self.m[j][k] - self.m[k][j].conj()).norm());
            }
        }
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let mat = nalgebra::Matrix3::from_fn(|j, k| self.m[j][k]);
        let eig = mat.symmetric_eigen();
        eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Checks the density-matrix contract: Hermitian within 1e-10, unit
    /// trace within 1e-8, eigenvalues above -1e-8.
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!(
                "Hermiticity violated by {h:.2e}"
            )));
        }
        let t = self.trace();
        if (t.re - 1.0).abs() > 1e-8 || t.im.abs() > 1e-8 {
            return Err(Error::InvalidDensityMatrix(format!("trace is {t}")));
        }
        let lo = self.min_eigenvalue();
        if lo < -1e-8 {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {lo:.2e}"
            )));
        }
        Ok(())
    }

    fn hermitize(&mut self) {
        for j in 0..3 {
            for k in j..3 {
                let avg = 0.5 * (self.m[j][k] + self.m[k][j].conj());
                self.m[j][k] = avg;
                self.m[k][j] = avg.conj();
            }
        }
    }
}

/// d(rho)/dt at time t: von Neumann term plus pure-dephasing dissipator.
///
/// With a diagonal jump operator the dissipator acts elementwise:
/// -(gamma/2) (o_j - o_k)^2 rho_jk, which leaves populations untouched.
fn liouville(
    t: f64,
    rho: &[[Complex64; 3]; 3],
    drive: &DriveCondition,
    gamma: f64,
    o_diag: [f64; 3],
) -> [[Complex64; 3]; 3] {
    let h = hamiltonian(t, drive, Detunings::default(), 0.0, 0.0);
    let mut out = [[Complex64::ZERO; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            let mut comm = Complex64::ZERO;
            for l in 0..3 {
                comm += h[j][l] * rho[l][k] - rho[j][l] * h[l][k];
            }
            let gap = o_diag[j] - o_diag[k];
            out[j][k] = Complex64::new(0.0, -1.0) * comm - 0.5 * gamma * gap * gap * rho[j][k];
        }
    }
    out
}

/// Evolves a density matrix over the drive window under the dephasing
/// master equation, classical 4th-order fixed-step integration with
/// re-Hermitization after every step.
pub fn lindblad_propagate(
    drive: &DriveCondition,
    eta: f64,
    gamma: f64,
    initial: &DensityMatrix,
    steps: usize,
) -> Result<DensityMatrix> {
    if steps < MIN_STEPS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_STEPS} steps, got {steps}"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    initial.validate()?;
    let o = jump_operator(eta);
    let o_diag = [o[0][0], o[1][1], o[2][2]];
    let dt = (drive.t_end - drive.t_start) / steps as f64;
    let mut rho = initial.m;
    for k in 0..steps {
        let t = drive.t_start + k as f64 * dt;
        let k1 = liouville(t, &rho, drive, gamma, o_diag);
        let k2 = liouville(t + 0.5 * dt, &add_scaled(&rho, &k1, 0.5 * dt), drive, gamma, o_diag);
        let k3 = liouville(t + 0.5 * dt, &add_scaled(&rho, &k2, 0.5 * dt), drive, gamma, o_diag);
        let k4 = liouville(t + dt, &add_scaled(&rho, &k3, dt), drive, gamma, o_diag);
        for j in 0..3 {
            for l in 0..3 {
                rho[j][l] += dt / 6.0 * (k1[j][l] + 2.0 * k2[j][l] + 2.0 * k3[j][l] + k4[j][l]);
            }
        }
        let mut dm = DensityMatrix { m: rho };
        dm.hermitize();
        rho = dm.m;
    }
    Ok(DensityMatrix { m: rho })
}

/// Like `lindblad_propagate` but records (time, state) snapshots every
/// `stride` steps, starting with the initial state.
pub fn lindblad_history(
    drive: &DriveCondition,
    eta: f64,
    gamma: f64,
    initial: &DensityMatrix,
    steps: usize,
    stride: usize,
) -> Result<Vec<(f64, DensityMatrix)>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    if steps < MIN_STEPS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_STEPS} steps, got {steps}"
        )));
    }
    initial.validate()?;
    let o = jump_operator(eta);
    let o_diag = [o[0][0], o[1][1], o[2][2]];
    let dt = (drive.t_end - drive.t_start) / steps as f64;
    let mut rho = initial.m;
    let mut out = Vec::with_capacity(steps / stride + 2);
    out.push((drive.t_start, *initial));
    for k in 0..steps {
        let t = drive.t_start + k as f64 * dt;
        let k1 = liouville(t, &rho, drive, gamma, o_diag);
        let k2 = liouville(t + 0.5 * dt, &add_scaled(&rho, &k1, 0.5 * dt), drive, gamma, o_diag);
        let k3 = liouville(t + 0.5 * dt, &add_scaled(&rho, &k2, 0.5 * dt), drive, gamma, o_diag);
        let k4 = liouville(t + dt, &add_scaled(&rho, &k3, dt), drive, gamma, o_diag);
        for j in 0..3 {
            for l in 0..3 {
                rho[j][l] += dt / 6.0 * (k1[j][l] + 2.0 * k2[j][l] + 2.0 * k3[j][l] + k4[j][l]);
            }
        }
        let mut dm = DensityMatrix { m: rho };
        dm.hermitize();
        rho = dm.m;
        if (k + 1) % stride == 0 || k + 1 == steps {
            out.push((t + dt, DensityMatrix { m: rho }));
        }
    }
    Ok(out)
}

fn add_scaled(
    a: &[[Complex64; 3]; 3],
    b: &[[Complex64; 3]; 3],
    s: f64,
) -> [[Complex64; 3]; 3] {
    let mut out = *a;
    for j in 0..3 {
        for k in 0..3 {
            out[j][k] += s * b[j][k];
        }
    }
    out
}

/// Monte-Carlo average of the transfer efficiency under discretized white
/// noise: per step of width dt, x1 is a fresh Gaussian with variance
/// gamma/dt and x2 = eta * x1. Returns (mean, standard error). Converges to
/// the Lindblad efficiency as dt shrinks.
pub fn white_noise_efficiency<R: Rng>(
    drive: &DriveCondition,
    eta: f64,
    gamma: f64,
    steps: usize,
    n_traj: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if steps == 0 || n_traj < 2 {
        return Err(Error::InvalidArgument(
            "white-noise oracle needs steps >= 1 and at least 2 trajectories".into(),
        ));
    }
    let dt = (drive.t_end - drive.t_start) / steps as f64;
    let amp = (gamma / dt).sqrt();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut draws = vec![0.0f64; steps];
    for _ in 0..n_traj {
        for d in draws.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *d = amp * z;
        }
        let xi = white_noise_trajectory(drive, eta, &draws);
        sum += xi;
        sum_sq += xi * xi;
    }
    let n = n_traj as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Paired coarse/fine estimates driven by common random numbers: the fine
/// path uses the drawn per-step shifts, the coarse path their pairwise
/// means, which is the same white noise integrated on the doubled step.
/// Returns ((mean, se) at `coarse_steps`, (mean, se) at twice that).
pub fn white_noise_refinement_pair<R: Rng>(
    drive: &DriveCondition,
    eta: f64,
    gamma: f64,
    coarse_steps: usize,
    n_traj: usize,
    rng: &mut R,
) -> Result<((f64, f64), (f64, f64))> {
    if coarse_steps == 0 || n_traj < 2 {
        return Err(Error::InvalidArgument(
            "refinement pair needs steps >= 1 and at least 2 trajectories".into(),
        ));
    }
    let fine_steps = 2 * coarse_steps;
    let dt_fine = (drive.t_end - drive.t_start) / fine_steps as f64;
    let amp = (gamma / dt_fine).sqrt();
    let mut fine = vec![0.0f64; fine_steps];
    let mut coarse = vec![0.0f64; coarse_steps];
    let mut acc = [(0.0f64, 0.0f64); 2];
    for _ in 0..n_traj {
        for d in fine.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *d = amp * z;
        }
        for (k, c) in coarse.iter_mut().enumerate() {
            *c = 0.5 * (fine[2 * k] + fine[2 * k + 1]);
        }
        let xc = white_noise_trajectory(drive, eta, &coarse);
        let xf = white_noise_trajectory(drive, eta, &fine);
        acc[0].0 += xc;
        acc[0].1 += xc * xc;
        acc[1].0 += xf;
        acc[1].1 += xf * xf;
    }
    let n = n_traj as f64;
    let stats = |(s, ss): (f64, f64)| {
        let mean = s / n;
        let var = (ss / n - mean * mean).max(0.0) * n / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    Ok((stats(acc[0]), stats(acc[1])))
}

/// One trajectory with per-step frozen shifts: piecewise-constant noise,
/// pulses sampled at step midpoints, exact per-step evolution.
fn white_noise_trajectory(drive: &DriveCondition, eta: f64, x1_steps: &[f64]) -> f64 {
    let dt = (drive.t_end - drive.t_start) / x1_steps.len() as f64;
    let mut v = crate::linalg::IDENTITY3;
    let mut psi = QuantumState::basis(0).amps;
    for (k, &x1) in x1_steps.iter().enumerate() {
        let tm = drive.t_start + (k as f64 + 0.5) * dt;
        let (op, os) = drive.pulse_values(tm);
        // The per-step evolution needs a traceless diagonal; the peeled
        // trace is a global phase and the readout is a population anyway.
        // Couplings are the raw matrix entries, half the pulse values.
        let shift = x1 * (1.0 + eta) / 3.0;
        let dd = [-shift, x1 - shift, eta * x1 - shift];
        crate::quantum::step_exact(dd, 0.5 * op, 0.5 * os, dt, &mut v, &mut psi);
        if (k + 1) % 32 == 0 {
            crate::linalg::orthonormalize(&mut v);
        }
    }
    let n2 = psi[2].norm_sqr();
    let norm = psi[0].norm_sqr() + psi[1].norm_sqr() + n2;
    n2 / norm
}

/// Transfer efficiency <2|rho(t_end)|2> from |0><0| under Markovian
/// dephasing.
pub fn markovian_efficiency(
    drive: &DriveCondition,
    eta: f64,
    gamma: f64,
    steps: usize,
) -> Result<f64> {
    let rho = lindblad_propagate(drive, eta, gamma, &DensityMatrix::basis_projector(0), steps)?;
    Ok(rho.population(2).clamp(0.0, 1.0))
}
