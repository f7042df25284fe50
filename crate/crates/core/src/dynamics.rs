//! Time integration, rotating-frame steady-state detection and noise-seeded trials.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{relative_phases, wrap_phase, NetworkConfig, NetworkState};

/// Amplitude bound beyond which a trajectory counts as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Densities below this are treated as exactly zero by the detector.
const ZERO_DENSITY: f64 = 1e-12;

// Dormand-Prince 5(4) tableau. The system is autonomous, so the nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand-Prince 5(4) trajectory of one network.
///
/// The first stage of every step reuses the last stage of the previous one,
/// so [`Trajectory::derivative`] is always the right-hand side at the current state.
pub struct Trajectory<'a> {
    config: &'a NetworkConfig,
    psi: Vec<Complex64>,
    t: f64,
    h: f64,
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    next: Vec<Complex64>,
    steps: u64,
    rejected: u64,
}

impl<'a> Trajectory<'a> {
    pub fn new(config: &'a NetworkConfig, initial: NetworkState) -> Result<Self> {
        config.validate()?;
        if initial.amplitudes.len() != config.n() {
            return Err(Error::DimensionMismatch { expected: config.n(), found: initial.amplitudes.len() });
        }
        let initial = NetworkState::new(initial.amplitudes, initial.t)?;
        let n = config.n();
        let zero = vec![Complex64::new(0.0, 0.0); n];
        let mut traj = Trajectory {
            config,
            psi: initial.amplitudes,
            t: initial.t,
            h: config.integration.dt_init,
            k: std::array::from_fn(|_| zero.clone()),
            tmp: zero.clone(),
            next: zero,
            steps: 0,
            rejected: 0,
        };
        config.rhs_into(&traj.psi, &mut traj.k[0]);
        Ok(traj)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.psi
    }

    /// Right-hand side evaluated at the current state.
    pub fn derivative(&self) -> &[Complex64] {
        &self.k[0]
    }

    pub fn state(&self) -> NetworkState {
        NetworkState { amplitudes: self.psi.clone(), t: self.t }
    }

    pub fn config(&self) -> &NetworkConfig {
        self.config
    }

    /// Accepted and rejected step counts.
    pub fn step_counts(&self) -> (u64, u64) {
        (self.steps, self.rejected)
    }

    fn stage(&mut self, out: usize, coeffs: &[(usize, f64)], h: f64) {
        for i in 0..self.psi.len() {
            let mut acc = self.psi[i];
            for &(s, a) in coeffs {
                acc += self.k[s][i] * (a * h);
            }
            self.tmp[i] = acc;
        }
        self.config.rhs_into(&self.tmp, &mut self.k[out]);
    }

    /// Computes a trial step of size `h` into `self.next` and returns the
    /// scaled RMS norm of the embedded error estimate.
    fn attempt(&mut self, h: f64) -> f64 {
        let ctl = self.config.integration;
        self.stage(1, &[(0, A21)], h);
        self.stage(2, &[(0, A31), (1, A32)], h);
        self.stage(3, &[(0, A41), (1, A42), (2, A43)], h);
        self.stage(4, &[(0, A51), (1, A52), (2, A53), (3, A54)], h);
        self.stage(5, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], h);
        let k = &self.k;
        for i in 0..self.psi.len() {
            self.next[i] = self.psi[i]
                + (k[0][i] * A71 + k[2][i] * A73 + k[3][i] * A74 + k[4][i] * A75 + k[5][i] * A76) * h;
        }
        self.config.rhs_into(&self.next, &mut self.k[6]);

        let k = &self.k;
        let mut err_sq = 0.0;
        for i in 0..self.psi.len() {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h;
            let scale_re = ctl.abs_tol + ctl.rel_tol * self.psi[i].re.abs().max(self.next[i].re.abs());
            let scale_im = ctl.abs_tol + ctl.rel_tol * self.psi[i].im.abs().max(self.next[i].im.abs());
            err_sq += (e.re / scale_re).powi(2) + (e.im / scale_im).powi(2);
        }
        (err_sq / (2 * self.psi.len()) as f64).sqrt()
    }

    fn accept(&mut self, h: f64) -> Result<()> {
        self.t += h;
        std::mem::swap(&mut self.psi, &mut self.next);
        self.k.swap(0, 6);
        self.steps += 1;
        for z in &self.psi {
            if !(z.re.is_finite() && z.im.is_finite()) || z.norm() > DIVERGENCE_BOUND {
                return Err(Error::Diverged { t: self.t });
            }
        }
        Ok(())
    }

    /// Takes one uncontrolled step of size `h`, returning the embedded
    /// (fourth-order) error estimate in absolute units.
    pub fn step_fixed(&mut self, h: f64) -> Result<f64> {
        self.attempt(h);
        let k = &self.k;
        let est = (0..self.psi.len())
            .map(|i| ((k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h).norm())
            .fold(0.0, f64::max);
        self.accept(h)?;
        Ok(est)
    }

    /// Takes one accepted step, never going past `t_max`.
    pub fn step(&mut self) -> Result<()> {
        let t_max = self.config.integration.t_max;
        let mut rejected_before = false;
        loop {
            let h = self.h.min(t_max - self.t);
            if h <= 0.0 {
                return Err(Error::TimedOut { t_max });
            }
            if h < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::Diverged { t: self.t });
            }
            let err = self.attempt(h);
            if err.is_finite() && err <= 1.0 {
                let fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
                let fac = fac.clamp(0.2, if rejected_before { 1.0 } else { 5.0 });
                // keep the controller's step when the last step was clipped at t_max
                if h == self.h {
                    self.h = h * fac;
                }
                return self.accept(h);
            }
            self.rejected += 1;
            rejected_before = true;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            self.h = h * fac;
        }
    }

    /// Steps until `pred` fires. Fails with `TimedOut` at `t_max` or `Diverged`.
    pub fn step_until<P: FnMut(&Self) -> bool>(&mut self, mut pred: P) -> Result<()> {
        if pred(self) {
            return Ok(());
        }
        loop {
            self.step()?;
            if pred(self) {
                return Ok(());
            }
        }
    }
}

/// Per-site instantaneous rotation rates `mu_i = Re(i psi_i' / psi_i)`; `None` at zero sites.
pub fn site_rotation_rates(psi: &[Complex64], dpsi: &[Complex64]) -> Vec<Option<f64>> {
    psi.iter()
        .zip(dpsi)
        .map(|(p, d)| {
            let rho = p.norm_sqr();
            (rho > ZERO_DENSITY).then(|| -(d * p.conj()).im / rho)
        })
        .collect()
}

/// Least-squares rotation rate over `sites`: minimises `sum |psi_i' + i mu psi_i|^2`.
pub fn least_squares_mu(psi: &[Complex64], dpsi: &[Complex64], sites: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in sites {
        num += -(dpsi[i] * psi[i].conj()).im;
        den += psi[i].norm_sqr();
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Rotating-frame residual `max_i |rhs_i + i mu_i psi_i| / max_i |psi_i|`,
/// with `mu_i` the rotation rate of the component containing site `i`.
pub fn steady_residual(config: &NetworkConfig, psi: &[Complex64], component_mu: &[f64]) -> f64 {
    let mut d = vec![Complex64::new(0.0, 0.0); psi.len()];
    config.rhs_into(psi, &mut d);
    let comps = config.coupling.components();
    let mut num: f64 = 0.0;
    for (c, members) in comps.iter().enumerate() {
        for &i in members {
            num = num.max((d[i] + Complex64::new(0.0, component_mu[c]) * psi[i]).norm());
        }
    }
    let den = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

#[derive(Debug, Clone)]
struct Sample {
    t: f64,
    rho: Vec<f64>,
    /// Phase of each site relative to the first site of its component.
    phase: Vec<f64>,
}

/// Result of a detector check.
#[derive(Debug, Clone, PartialEq)]
pub enum Detection {
    NotYet,
    Steady {
        /// Least-squares rotation rate over all sites.
        mu: f64,
        /// One rotation rate per connected component of the coupling graph.
        component_mu: Vec<f64>,
    },
}

/// Declares a steady state once densities and intra-component relative phases
/// have varied by less than `tol` over a trailing `window`, and the per-site
/// rotation rates agree within `tol` inside every component.
///
/// Components of the coupling graph rotate independently, so phases and
/// rotation rates are only compared within a component.
pub struct SteadyDetector {
    window: f64,
    tol: f64,
    spacing: f64,
    components: Vec<Vec<usize>>,
    samples: VecDeque<Sample>,
}

impl SteadyDetector {
    pub fn new(config: &NetworkConfig, window: f64, tol: f64) -> Self {
        SteadyDetector {
            window,
            tol,
            spacing: window / 32.0,
            components: config.coupling.components(),
            samples: VecDeque::new(),
        }
    }

    pub fn from_controls(config: &NetworkConfig) -> Self {
        let c = config.integration;
        Self::new(config, c.stationarity_window, c.stationarity_tol)
    }

    fn sample(&self, t: f64, psi: &[Complex64]) -> Sample {
        let mut phase = vec![0.0; psi.len()];
        for members in &self.components {
            let reference = psi[members[0]].arg();
            for &i in members {
                phase[i] = wrap_phase(psi[i].arg() - reference);
            }
        }
        Sample { t, rho: crate::model::densities(psi), phase }
    }

    /// Records the current trajectory point (subsampled) and checks stationarity.
    pub fn observe(&mut self, traj: &Trajectory<'_>) -> Detection {
        let t = traj.t();
        if let Some(last) = self.samples.back() {
            if t - last.t < self.spacing {
                return Detection::NotYet;
            }
        }
        self.check_now(t, traj.amplitudes(), traj.derivative())
    }

    /// Like [`observe`](Self::observe) without subsampling.
    pub fn check_now(&mut self, t: f64, psi: &[Complex64], dpsi: &[Complex64]) -> Detection {
        let current = self.sample(t, psi);
        self.samples.push_back(current);
        while self.samples.len() >= 2 && self.samples[1].t <= t - self.window {
            self.samples.pop_front();
        }
        if self.samples.front().is_none_or(|s| s.t > t - self.window) {
            return Detection::NotYet;
        }
        let now = self.samples.back().unwrap();
        let n = psi.len();
        for i in 0..n {
            let (mut lo, mut hi) = (now.rho[i], now.rho[i]);
            let (mut plo, mut phi) = (0.0f64, 0.0f64);
            for s in &self.samples {
                lo = lo.min(s.rho[i]);
                hi = hi.max(s.rho[i]);
                let dp = wrap_phase(s.phase[i] - now.phase[i]);
                plo = plo.min(dp);
                phi = phi.max(dp);
            }
            let var = hi - lo;
            if var >= self.tol * now.rho[i].max(1.0) {
                return Detection::NotYet;
            }
            if now.rho[i] > ZERO_DENSITY && var > 1e-2 * now.rho[i] {
                // slowly growing or decaying near-vacuum site
                return Detection::NotYet;
            }
            if now.rho[i] > ZERO_DENSITY && phi - plo >= self.tol {
                return Detection::NotYet;
            }
        }
        let rates = site_rotation_rates(psi, dpsi);
        let mut component_mu = Vec::with_capacity(self.components.len());
        for members in &self.components {
            let rho_max = members.iter().map(|&i| now.rho[i]).fold(0.0, f64::max);
            let live: Vec<f64> = members
                .iter()
                .filter(|&&i| now.rho[i] > 1e-6 * rho_max)
                .filter_map(|&i| rates[i])
                .collect();
            if let (Some(lo), Some(hi)) = (
                live.iter().copied().reduce(f64::min),
                live.iter().copied().reduce(f64::max),
            ) {
                if hi - lo >= self.tol {
                    return Detection::NotYet;
                }
            }
            component_mu.push(least_squares_mu(psi, dpsi, members));
        }
        let all: Vec<usize> = (0..n).collect();
        Detection::Steady { mu: least_squares_mu(psi, dpsi, &all), component_mu }
    }
}

/// Final state of a run to steady state.
#[derive(Debug, Clone, PartialEq)]
pub enum RunEnd {
    Steady { mu: f64, component_mu: Vec<f64> },
    NonStationary,
    Diverged,
}

/// Integrates until the detector fires, `t_max` or divergence.
pub fn integrate_to_steady(config: &NetworkConfig, initial: NetworkState) -> Result<(RunEnd, NetworkState)> {
    let mut traj = Trajectory::new(config, initial)?;
    let mut detector = SteadyDetector::from_controls(config);
    let mut found = None;
    let outcome = traj.step_until(|tr| match detector.observe(tr) {
        Detection::NotYet => false,
        Detection::Steady { mu, component_mu } => {
            found = Some((mu, component_mu));
            true
        }
    });
    let end = match outcome {
        Ok(()) => {
            let (mu, component_mu) = found.expect("predicate fired");
            RunEnd::Steady { mu, component_mu }
        }
        Err(Error::TimedOut { .. }) => RunEnd::NonStationary,
        Err(Error::Diverged { .. }) => RunEnd::Diverged,
        Err(e) => return Err(e),
    };
    Ok((end, traj.state()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform over the disk `|z| <= amplitude`.
    UniformDisk,
    /// Real and imaginary parts i.i.d. `N(0, amplitude^2 / 2)`.
    #[default]
    ComplexGaussian,
}

/// Initial-condition noise for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { amplitude: 1e-3, distribution: NoiseDistribution::ComplexGaussian, seed: 0 }
    }
}

impl NoiseSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        NoiseSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(invalid(format!("noise amplitude must be > 0, got {}", self.amplitude)));
        }
        Ok(())
    }

    /// Draws `n` initial amplitudes, deterministic in `seed`.
    pub fn sample(&self, n: usize) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.distribution {
            NoiseDistribution::ComplexGaussian => {
                let normal = Normal::new(0.0, self.amplitude / std::f64::consts::SQRT_2).unwrap();
                (0..n).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect()
            }
            NoiseDistribution::UniformDisk => (0..n)
                .map(|_| {
                    let r = self.amplitude * rng.random::<f64>().sqrt();
                    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                    Complex64::from_polar(r, phi)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Steady,
    NonStationary,
    Diverged,
}

/// Classification of one noise-seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub kind: OutcomeKind,
    pub final_densities: Vec<f64>,
    pub final_relative_phases: Vec<f64>,
    /// Least-squares rotation rate; set only for steady outcomes.
    pub mu: Option<f64>,
    /// Rotation rate of each connected component of the coupling graph.
    pub component_mu: Vec<f64>,
    /// One bit per dyad, set only when steady and every dyad resolves.
    pub bits: Option<Vec<u8>>,
    /// Density contrast `|rho_i - rho_j| / (rho_i + rho_j)` per dyad.
    pub contrasts: Vec<f64>,
    pub elapsed_t: f64,
    pub seed: u64,
}

impl TrialOutcome {
    /// Steady, but at least one dyad fell below the contrast threshold.
    pub fn is_unresolved(&self) -> bool {
        self.kind == OutcomeKind::Steady && self.bits.is_none()
    }
}

pub(crate) fn validate_dyads(n: usize, dyads: &[(usize, usize)]) -> Result<()> {
    let mut used = vec![false; n];
    for &(i, j) in dyads {
        if i >= n || j >= n || i == j {
            return Err(invalid(format!("dyad ({i}, {j}) invalid for {n} sites")));
        }
        if used[i] || used[j] {
            return Err(invalid(format!("dyad ({i}, {j}) overlaps another dyad")));
        }
        used[i] = true;
        used[j] = true;
    }
    Ok(())
}

/// Density contrast of a site pair; zero when both sites are empty.
pub fn contrast(rho_i: f64, rho_j: f64) -> f64 {
    let s = rho_i + rho_j;
    if s > 0.0 {
        (rho_i - rho_j).abs() / s
    } else {
        0.0
    }
}

/// Seeds amplitudes from `noise`, integrates and classifies every dyad.
pub fn run_trial(config: &NetworkConfig, dyads: &[(usize, usize)], noise: &NoiseSpec) -> Result<TrialOutcome> {
    noise.validate()?;
    let initial = NetworkState { amplitudes: noise.sample(config.n()), t: 0.0 };
    run_trial_from(config, dyads, initial, noise.seed)
}

/// As [`run_trial`] from an explicit initial state; `seed` is only recorded.
pub fn run_trial_from(
    config: &NetworkConfig,
    dyads: &[(usize, usize)],
    initial: NetworkState,
    seed: u64,
) -> Result<TrialOutcome> {
    config.validate()?;
    validate_dyads(config.n(), dyads)?;
    let (end, state) = integrate_to_steady(config, initial)?;
    let rho = state.densities();
    let contrasts: Vec<f64> = dyads.iter().map(|&(i, j)| contrast(rho[i], rho[j])).collect();
    let (kind, mu, component_mu, bits) = match end {
        RunEnd::Steady { mu, component_mu } => {
            let threshold = config.integration.asym_threshold;
            let bits = contrasts
                .iter()
                .zip(dyads)
                .map(|(&c, &(i, j))| (c >= threshold).then_some(u8::from(rho[i] > rho[j])))
                .collect::<Option<Vec<u8>>>();
            (OutcomeKind::Steady, Some(mu), component_mu, bits)
        }
        RunEnd::NonStationary => (OutcomeKind::NonStationary, None, Vec::new(), None),
        RunEnd::Diverged => (OutcomeKind::Diverged, None, Vec::new(), None),
    };
    Ok(TrialOutcome {
        kind,
        final_relative_phases: relative_phases(&state.amplitudes),
        final_densities: rho,
        mu,
        component_mu,
        bits,
        contrasts,
        elapsed_t: state.t,
        seed,
    })
}
