//! Monte-Carlo campaigns over initial-condition noise.
//!
//! Trial `k` of a campaign always uses seed `base_seed + k`, and trials are
//! aggregated by index, so results do not depend on the rayon pool size.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_trial, run_trial_from, NoiseSpec, OutcomeKind, TrialOutcome};
use crate::error::{invalid, Error, Result};
use crate::model::{CouplingMatrix, IntegrationControls, NetworkConfig, NetworkState, SiteParams};
use crate::perturbation::{analytic_locus_slope, DyadParams};
use crate::spline::NaturalSpline;
use crate::topology::{dyad, tetrad, TetradShape};

/// Runs trials `0..n_trials` with seeds `noise.seed + k`.
///
/// A trial that errors out mid-integration is logged and recorded as diverged;
/// configuration errors are reported before any trial runs.
pub fn run_trials(
    config: &NetworkConfig,
    dyads: &[(usize, usize)],
    n_trials: usize,
    noise: &NoiseSpec,
) -> Result<Vec<TrialOutcome>> {
    run_trial_range(config, dyads, 0, n_trials, noise)
}

pub(crate) fn run_trial_range(
    config: &NetworkConfig,
    dyads: &[(usize, usize)],
    start: usize,
    end: usize,
    noise: &NoiseSpec,
) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    noise.validate()?;
    crate::dynamics::validate_dyads(config.n(), dyads)?;
    Ok((start..end)
        .into_par_iter()
        .map(|k| {
            let seed = noise.seed.wrapping_add(k as u64);
            run_trial(config, dyads, &noise.with_seed(seed)).unwrap_or_else(|e| {
                log::warn!("trial with seed {seed} failed: {e}");
                failed_outcome(config.n(), dyads.len(), seed)
            })
        })
        .collect())
}

fn failed_outcome(n: usize, n_dyads: usize, seed: u64) -> TrialOutcome {
    TrialOutcome {
        kind: OutcomeKind::Diverged,
        final_densities: vec![f64::NAN; n],
        final_relative_phases: vec![f64::NAN; n],
        mu: None,
        component_mu: Vec::new(),
        bits: None,
        contrasts: vec![f64::NAN; n_dyads],
        elapsed_t: f64::NAN,
        seed,
    }
}

/// Integer outcome of a bit vector, dyad 0 most significant.
pub fn state_value(bits: &[u8]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
}

/// Aggregate statistics of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_trials: usize,
    pub n_dyads: usize,
    /// Steady, but some dyad below the contrast threshold.
    pub n_unresolved: usize,
    /// Not stationary by `t_max`, including diverged trials.
    pub n_nonstationary: usize,
    /// Subset of `n_nonstationary` that diverged.
    pub n_diverged: usize,
    pub state_counts: BTreeMap<u64, usize>,
    /// Fraction of resolved trials with bit 1 (even site denser), per dyad.
    pub p1_per_dyad: Vec<f64>,
    /// Standard deviation of the {0, 1} outcomes, `sqrt(p1 (1 - p1))`.
    pub sigma_per_dyad: Vec<f64>,
    /// Binomial standard error `sqrt(p1 (1 - p1) / n_resolved)`.
    pub stderr_per_dyad: Vec<f64>,
    /// `(n(01) + n(10)) / (n(00) + n(11))` for two-dyad campaigns.
    pub bias: Option<f64>,
    pub mean_elapsed_t: f64,
}

impl EnsembleStats {
    pub fn from_outcomes(n_dyads: usize, outcomes: &[TrialOutcome]) -> Self {
        let mut state_counts = BTreeMap::new();
        let mut ones = vec![0usize; n_dyads];
        let (mut n_unresolved, mut n_nonstationary, mut n_diverged) = (0, 0, 0);
        let mut t_sum = 0.0;
        let mut t_n = 0usize;
        for o in outcomes {
            if o.elapsed_t.is_finite() {
                t_sum += o.elapsed_t;
                t_n += 1;
            }
            match o.kind {
                OutcomeKind::Steady => match &o.bits {
                    Some(bits) => {
                        *state_counts.entry(state_value(bits)).or_insert(0) += 1;
                        for (c, &b) in ones.iter_mut().zip(bits) {
                            *c += usize::from(b);
                        }
                    }
                    None => n_unresolved += 1,
                },
                OutcomeKind::NonStationary => n_nonstationary += 1,
                OutcomeKind::Diverged => {
                    n_nonstationary += 1;
                    n_diverged += 1;
                }
            }
        }
        let resolved: usize = state_counts.values().sum();
        let p1: Vec<f64> =
            ones.iter().map(|&c| if resolved > 0 { c as f64 / resolved as f64 } else { f64::NAN }).collect();
        let sigma: Vec<f64> = p1.iter().map(|p| (p * (1.0 - p)).sqrt()).collect();
        let stderr = sigma.iter().map(|s| s / (resolved as f64).sqrt()).collect();
        let bias = (n_dyads == 2).then(|| {
            let c = |s: u64| *state_counts.get(&s).unwrap_or(&0) as f64;
            (c(1) + c(2)) / (c(0) + c(3))
        });
        EnsembleStats {
            n_trials: outcomes.len(),
            n_dyads,
            n_unresolved,
            n_nonstationary,
            n_diverged,
            state_counts,
            p1_per_dyad: p1,
            sigma_per_dyad: sigma,
            stderr_per_dyad: stderr,
            bias,
            mean_elapsed_t: if t_n > 0 { t_sum / t_n as f64 } else { f64::NAN },
        }
    }

    pub fn n_resolved(&self) -> usize {
        self.state_counts.values().sum()
    }

    /// Count of one outcome integer.
    pub fn count(&self, state: u64) -> usize {
        self.state_counts.get(&state).copied().unwrap_or(0)
    }

    /// Dense histogram over `0..2^n_dyads`.
    pub fn histogram(&self) -> Vec<usize> {
        (0..1u64 << self.n_dyads).map(|s| self.count(s)).collect()
    }
}

/// Runs a campaign and aggregates it.
pub fn run_ensemble(
    config: &NetworkConfig,
    dyads: &[(usize, usize)],
    n_trials: usize,
    noise: &NoiseSpec,
) -> Result<EnsembleStats> {
    if n_trials == 0 {
        return Err(invalid("n_trials must be >= 1"));
    }
    Ok(EnsembleStats::from_outcomes(dyads.len(), &run_trials(config, dyads, n_trials, noise)?))
}

/// One grid point of a calibration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPointStats {
    pub r_g: f64,
    /// Fraction of resolved trials in which the perturbed site (site 1) is denser.
    pub p1: f64,
    pub sigma: f64,
    pub stderr: f64,
    pub n_resolved: usize,
    pub n_unresolved: usize,
    pub n_nonstationary: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub r_gamma: f64,
    pub points: Vec<CalibrationPointStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub r_gamma: f64,
    pub p1_curve: Vec<(f64, f64)>,
    pub sigma_curve: Vec<(f64, f64)>,
    /// Spline crossing of `p1 = 0.5`.
    pub r_g_star_p: f64,
    /// Spline maximum of `sigma`, which touches 0.5 where `p1` crosses it.
    pub r_g_star_sigma: Option<f64>,
    /// More than one crossing of `p1 = 0.5` in the scanned range.
    pub non_unique: bool,
    /// Points where `p1` drops by more than three standard errors.
    pub monotonicity_violations: usize,
}

/// Dyad with site 1 set to `(r_gamma gamma0, r_g g)`.
pub fn calibration_dyad(params: DyadParams, r_g: f64, r_gamma: f64) -> Result<NetworkConfig> {
    params.validate()?;
    let base = SiteParams::new(params.gamma0, params.g)?;
    let net = dyad(params.j, base, params.xi)?
        .with_site(1, SiteParams::new(r_gamma * params.gamma0, r_g * params.g)?)?;
    Ok(net.config)
}

/// Measures `p1(r_g)` and `sigma(r_g)` at fixed `r_gamma`; every grid point reuses the same seeds.
pub fn measure_calibration_curve(
    params: DyadParams,
    controls: IntegrationControls,
    r_gamma: f64,
    r_g_grid: &[f64],
    n_trials: usize,
    noise: &NoiseSpec,
) -> Result<CalibrationCurve> {
    if r_g_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("r_g grid must be strictly increasing"));
    }
    let points = r_g_grid
        .iter()
        .map(|&r_g| {
            let mut cfg = calibration_dyad(params, r_g, r_gamma)?;
            cfg.integration = controls;
            let s = run_ensemble(&cfg, &[(0, 1)], n_trials, noise)?;
            let p1 = 1.0 - s.p1_per_dyad[0];
            Ok(CalibrationPointStats {
                r_g,
                p1,
                sigma: s.sigma_per_dyad[0],
                stderr: s.stderr_per_dyad[0],
                n_resolved: s.n_resolved(),
                n_unresolved: s.n_unresolved,
                n_nonstationary: s.n_nonstationary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationCurve { r_gamma, points })
}

impl CalibrationCurve {
    /// Spline critical points of the measured curve.
    pub fn critical_points(&self) -> Result<CalibrationResult> {
        let n = self.points.len();
        if n < NaturalSpline::MIN_POINTS {
            return Err(Error::InsufficientPoints { needed: NaturalSpline::MIN_POINTS, got: n });
        }
        if let Some(p) = self.points.iter().find(|p| !p.p1.is_finite()) {
            return Err(Error::TooFewSamples(format!("no resolved trials at r_g = {}", p.r_g)));
        }
        let x: Vec<f64> = self.points.iter().map(|p| p.r_g).collect();
        let p1: Vec<f64> = self.points.iter().map(|p| p.p1).collect();
        let sigma: Vec<f64> = self.points.iter().map(|p| p.sigma).collect();
        let (lo, hi) = (x[0], x[n - 1]);

        let roots = NaturalSpline::new(&x, &p1)?.roots(0.5);
        if roots.is_empty() {
            return Err(Error::NoRoot { level: 0.5, lo, hi });
        }
        let non_unique = roots.len() > 1;
        if non_unique {
            log::warn!("p1 = 0.5 crossed {} times at r_gamma = {}; using the middle crossing", roots.len(), self.r_gamma);
        }
        let r_g_star_p = roots[roots.len() / 2];

        let (t_max, s_max) = NaturalSpline::new(&x, &sigma)?.argmax();
        let r_g_star_sigma = (s_max > 0.0 && t_max > lo && t_max < hi).then_some(t_max);

        let monotonicity_violations = self
            .points
            .windows(2)
            .filter(|w| {
                let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
                w[0].p1 - w[1].p1 > 3.0 * se.max(1e-12)
            })
            .count();

        Ok(CalibrationResult {
            r_gamma: self.r_gamma,
            p1_curve: x.iter().copied().zip(p1).collect(),
            sigma_curve: x.iter().copied().zip(sigma).collect(),
            r_g_star_p,
            r_g_star_sigma,
            non_unique,
            monotonicity_violations,
        })
    }
}

/// [`measure_calibration_curve`] followed by critical-point extraction.
pub fn calibration_sweep(
    params: DyadParams,
    controls: IntegrationControls,
    r_gamma: f64,
    r_g_grid: &[f64],
    n_trials: usize,
    noise: &NoiseSpec,
) -> Result<CalibrationResult> {
    if r_g_grid.len() < NaturalSpline::MIN_POINTS {
        return Err(Error::InsufficientPoints { needed: NaturalSpline::MIN_POINTS, got: r_g_grid.len() });
    }
    measure_calibration_curve(params, controls, r_gamma, r_g_grid, n_trials, noise)?.critical_points()
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard errors; `None` with only two points.
    pub slope_stderr: Option<f64>,
    pub intercept_stderr: Option<f64>,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("all abscissae are equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, intercept_stderr) = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let s2 = rss / (nf - 2.0);
        let se_slope = (s2 / sxx).sqrt();
        (Some(se_slope), Some((s2 * (1.0 / nf + mx * mx / sxx)).sqrt()))
    } else {
        (None, None)
    };
    Ok(LineFit { slope, intercept, slope_stderr, intercept_stderr })
}

/// Critical points `(r_g*, r_gamma)` and the fitted line `r_gamma = a + b r_g*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLocus {
    pub results: Vec<CalibrationResult>,
    pub fit: LineFit,
    /// Fit through the sigma-maximum critical points, when enough exist.
    pub sigma_fit: Option<LineFit>,
    /// `r_gamma` values dropped because no critical point was found.
    pub dropped: Vec<f64>,
}

/// Grid of `n` points of half-width `half_width` about the first-order prediction
/// `r_g = 1 + (r_gamma - 1) / slope`.
pub fn centered_grid(params: DyadParams, r_gamma: f64, half_width: f64, n: usize) -> Vec<f64> {
    let slope = analytic_locus_slope(params);
    let center = if slope != 0.0 { 1.0 + (r_gamma - 1.0) / slope } else { 1.0 };
    (0..n)
        .map(|i| center - half_width + 2.0 * half_width * i as f64 / (n.max(2) - 1) as f64)
        .collect()
}

pub fn critical_locus(
    params: DyadParams,
    controls: IntegrationControls,
    r_gammas: &[f64],
    half_width: f64,
    grid_points: usize,
    n_trials: usize,
    noise: &NoiseSpec,
) -> Result<CriticalLocus> {
    if r_gammas.len() < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: r_gammas.len() });
    }
    let mut results = Vec::new();
    let mut dropped = Vec::new();
    for &rg in r_gammas {
        let grid = centered_grid(params, rg, half_width, grid_points);
        match calibration_sweep(params, controls, rg, &grid, n_trials, noise) {
            Ok(r) => results.push(r),
            Err(e @ Error::NoRoot { .. }) => {
                log::warn!("r_gamma = {rg}: {e}; dropped from the locus");
                dropped.push(rg);
            }
            Err(e) => return Err(e),
        }
    }
    let x: Vec<f64> = results.iter().map(|r| r.r_g_star_p).collect();
    let y: Vec<f64> = results.iter().map(|r| r.r_gamma).collect();
    let fit = fit_line(&x, &y)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        results.iter().filter_map(|r| r.r_g_star_sigma.map(|s| (s, r.r_gamma))).unzip();
    let sigma_fit = fit_line(&xs, &ys).ok();
    Ok(CriticalLocus { results, fit, sigma_fit, dropped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetradBias {
    pub alpha: f64,
    pub shape: TetradShape,
    /// Counts of states 00, 01, 10, 11.
    pub histogram: [usize; 4],
    /// Square: dis-aligned over aligned. Crossed: aligned over dis-aligned.
    pub bias: f64,
    /// `(n(01) + n(10)) / (n(00) + n(11))` regardless of shape.
    pub raw_ratio: f64,
    /// Denominator of `bias` was zero.
    pub infinite: bool,
    pub stats: EnsembleStats,
}

#[allow(clippy::too_many_arguments)]
pub fn tetrad_bias(
    j: f64,
    alphas: &[f64],
    shape: TetradShape,
    base: SiteParams,
    xi: f64,
    controls: IntegrationControls,
    n_trials: usize,
    noise: &NoiseSpec,
) -> Result<Vec<TetradBias>> {
    alphas
        .iter()
        .map(|&alpha| {
            let net = tetrad(j, alpha, shape, base, xi)?.with_integration(controls)?;
            let stats = run_ensemble(&net.config, &net.dyads, n_trials, noise)?;
            let h = [stats.count(0), stats.count(1), stats.count(2), stats.count(3)];
            let aligned = (h[0] + h[3]) as f64;
            let dis = (h[1] + h[2]) as f64;
            let (num, den) = match shape {
                TetradShape::Square => (dis, aligned),
                TetradShape::Crossed => (aligned, dis),
            };
            let infinite = den == 0.0;
            if infinite {
                log::warn!("alpha = {alpha}: bias denominator is zero");
            }
            Ok(TetradBias {
                alpha,
                shape,
                histogram: h,
                bias: if infinite { f64::INFINITY } else { num / den },
                raw_ratio: dis / aligned,
                infinite,
                stats,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Asymmetric,
    Symmetric,
    NonStationary,
    NoCondensate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub gamma: f64,
    pub g: f64,
    pub abs_j: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionClassification {
    pub point: RegionPoint,
    pub verdict: Verdict,
    /// Largest steady-state dyad contrast over the seeds (0 if none steady).
    pub contrast: f64,
    pub trials_run: usize,
}

/// Classifies one dyad with coupling `j` (either sign).
///
/// Seeds `noise.seed + k` for `k < n_seeds` are tried in order and the scan
/// stops at the first asymmetric steady state. For `j < 0` the initial noise is
/// the `|j|` noise with site 1 negated, the gauge image of the `|j|` run.
pub fn classify_point(
    gamma: f64,
    g: f64,
    j: f64,
    xi: f64,
    controls: IntegrationControls,
    n_seeds: usize,
    noise: &NoiseSpec,
) -> Result<RegionClassification> {
    let point = RegionPoint { gamma, g, abs_j: j.abs(), xi };
    if n_seeds == 0 {
        return Err(invalid("n_seeds must be >= 1"));
    }
    noise.validate()?;
    let mut m = CouplingMatrix::zeros(2)?;
    m.set(0, 1, j)?;
    let cfg = NetworkConfig::new(vec![SiteParams::new(gamma, g)?; 2], m, xi, controls)?;
    if gamma + j.abs() <= 1.0 {
        return Ok(RegionClassification { point, verdict: Verdict::NoCondensate, contrast: 0.0, trials_run: 0 });
    }
    let (mut steady, mut best, mut max_rho) = (0usize, 0.0f64, 0.0f64);
    let mut trials_run = 0;
    for k in 0..n_seeds {
        let seed = noise.seed.wrapping_add(k as u64);
        let mut psi = noise.with_seed(seed).sample(2);
        if j < 0.0 {
            psi[1] = -psi[1];
        }
        let o = run_trial_from(&cfg, &[(0, 1)], NetworkState { amplitudes: psi, t: 0.0 }, seed)?;
        trials_run += 1;
        if o.kind == OutcomeKind::Steady {
            steady += 1;
            best = best.max(o.contrasts[0]);
            max_rho = max_rho.max(o.final_densities.iter().sum());
            if o.contrasts[0] >= controls.asym_threshold {
                break;
            }
        }
    }
    let verdict = if best >= controls.asym_threshold {
        Verdict::Asymmetric
    } else if steady == 0 {
        Verdict::NonStationary
    } else if max_rho < 1e-8 {
        Verdict::NoCondensate
    } else {
        Verdict::Symmetric
    };
    Ok(RegionClassification { point, verdict, contrast: best, trials_run })
}

/// Grid of the `g`-`|J|`-`xi` scan at fixed `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub g: Vec<f64>,
    pub abs_j: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Upper `xi` edge of the asymmetric region for one `(g, |J|)` column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub g: f64,
    pub abs_j: f64,
    pub xi_below: f64,
    pub xi_above: f64,
    pub xi_mid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSweep {
    pub gamma: f64,
    /// Ordered by `g`, then `|J|`, then `xi`.
    pub points: Vec<RegionClassification>,
    pub boundary: Vec<BoundaryPoint>,
    /// Largest number of Asymmetric -> other switches in any column.
    pub max_exits_per_column: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn region_sweep(
    gamma: f64,
    grid: &RegionGrid,
    j_sign: f64,
    controls: IntegrationControls,
    n_seeds: usize,
    noise: &NoiseSpec,
) -> Result<RegionSweep> {
    let mut xi = grid.xi.clone();
    xi.sort_by(f64::total_cmp);
    let cells: Vec<(f64, f64, f64)> = grid
        .g
        .iter()
        .flat_map(|&g| grid.abs_j.iter().flat_map({
            let xi = &xi;
            move |&aj| xi.iter().map(move |&x| (g, aj, x))
        }))
        .collect();
    let sign = if j_sign < 0.0 { -1.0 } else { 1.0 };
    let points = cells
        .par_iter()
        .map(|&(g, aj, x)| classify_point(gamma, g, sign * aj, x, controls, n_seeds, noise))
        .collect::<Result<Vec<_>>>()?;

    let mut boundary = Vec::new();
    let mut max_exits = 0;
    for column in points.chunks(xi.len().max(1)) {
        let mut exits = 0;
        for w in column.windows(2) {
            let (a, b) = (w[0].verdict == Verdict::Asymmetric, w[1].verdict == Verdict::Asymmetric);
            if a != b {
                let (lo, hi) = (w[0].point.xi, w[1].point.xi);
                boundary.push(BoundaryPoint {
                    g: w[0].point.g,
                    abs_j: w[0].point.abs_j,
                    xi_below: lo,
                    xi_above: hi,
                    xi_mid: 0.5 * (lo + hi),
                });
            }
            if a && !b {
                exits += 1;
            }
        }
        max_exits = max_exits.max(exits);
    }
    Ok(RegionSweep { gamma, points, boundary, max_exits_per_column: max_exits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::chain;
    use crate::topology::ChainSpec;

    fn fair() -> DyadParams {
        DyadParams::new(0.55, 2.8, 0.5, 5.0 / 3.0).unwrap()
    }

    fn fair_config() -> NetworkConfig {
        calibration_dyad(fair(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn state_value_msb_first() {
        assert_eq!(state_value(&[1, 0]), 2);
        assert_eq!(state_value(&[0, 1, 1]), 3);
        assert_eq!(state_value(&[]), 0);
    }

    #[test]
    fn stats_bookkeeping() {
        let s = run_ensemble(&fair_config(), &[(0, 1)], 60, &NoiseSpec::default().with_seed(11)).unwrap();
        assert_eq!(s.n_trials, 60);
        assert_eq!(s.n_resolved(), s.n_trials - s.n_unresolved - s.n_nonstationary);
        let p = s.p1_per_dyad[0];
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(s.sigma_per_dyad[0], (p * (1.0 - p)).sqrt());
        assert_eq!(s.bias, None);
        assert_eq!(s.histogram().iter().sum::<usize>(), s.n_resolved());
    }

    #[test]
    fn sigma_matches_sample_standard_deviation() {
        let outcomes = run_trials(&fair_config(), &[(0, 1)], 50, &NoiseSpec::default().with_seed(3)).unwrap();
        let bits: Vec<f64> = outcomes.iter().filter_map(|o| o.bits.as_ref().map(|b| b[0] as f64)).collect();
        let n = bits.len() as f64;
        let mean = bits.iter().sum::<f64>() / n;
        let sd = (bits.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n).sqrt();
        let s = EnsembleStats::from_outcomes(1, &outcomes);
        assert!((s.sigma_per_dyad[0] - sd).abs() < 1e-12);
    }

    #[test]
    fn campaigns_are_deterministic_and_pool_independent() {
        let cfg = fair_config();
        let noise = NoiseSpec::default().with_seed(99);
        let a = run_ensemble(&cfg, &[(0, 1)], 24, &noise).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_ensemble(&cfg, &[(0, 1)], 24, &noise).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn boosted_dyad_is_pinned() {
        let cfg = calibration_dyad(fair(), 1.0, 1.05).unwrap();
        let s = run_ensemble(&cfg, &[(0, 1)], 40, &NoiseSpec::default()).unwrap();
        assert_eq!(s.n_resolved(), 40);
        assert!(s.p1_per_dyad[0] == 0.0 || s.p1_per_dyad[0] == 1.0);
    }

    #[test]
    fn two_dyad_bias_field() {
        let net = chain(&ChainSpec::independent(2, 0.55), SiteParams::new(2.8, 0.5).unwrap(), 5.0 / 3.0).unwrap();
        let s = run_ensemble(&net.config, &net.dyads, 40, &NoiseSpec::default()).unwrap();
        let b = s.bias.unwrap();
        let expect = (s.count(1) + s.count(2)) as f64 / (s.count(0) + s.count(3)) as f64;
        assert_eq!(b, expect);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run_ensemble(&fair_config(), &[(0, 1)], 0, &NoiseSpec::default()).is_err());
    }

    #[test]
    fn line_fit() {
        let f = fit_line(&[1.0, 2.0], &[3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert_eq!(f.slope_stderr, None);
        let f = fit_line(&[0.0, 1.0, 2.0, 3.0], &[0.1, 0.9, 2.1, 2.9]).unwrap();
        assert!((f.slope - 0.96).abs() < 1e-12);
        assert!(f.slope_stderr.unwrap() > 0.0);
        assert!(matches!(fit_line(&[1.0], &[1.0]), Err(Error::InsufficientPoints { needed: 2, got: 1 })));
    }

    #[test]
    fn analytic_locus_two_points() {
        use crate::perturbation::analytic_calibration_curve;
        let pts = analytic_calibration_curve(fair(), &[0.005, 0.02]).unwrap();
        let f = fit_line(&[pts[0].r_g, pts[1].r_g], &[pts[0].r_gamma, pts[1].r_gamma]).unwrap();
        assert!((f.slope + 0.25 / (1.25 * 0.45)).abs() < 1e-12);
    }

    #[test]
    fn grid_centering() {
        let g = centered_grid(fair(), 0.99, 0.02, 5);
        let c = 1.0 + 0.01 / (0.25 / (1.25 * 0.45));
        assert!((g[2] - c).abs() < 1e-12);
        assert!((g[4] - g[0] - 0.04).abs() < 1e-12);
    }

    fn synthetic_curve(values: &[(f64, f64)]) -> CalibrationCurve {
        CalibrationCurve {
            r_gamma: 1.0,
            points: values
                .iter()
                .map(|&(r_g, p1)| CalibrationPointStats {
                    r_g,
                    p1,
                    sigma: (p1 * (1.0 - p1)).sqrt(),
                    stderr: (p1 * (1.0 - p1) / 400.0).sqrt(),
                    n_resolved: 400,
                    n_unresolved: 0,
                    n_nonstationary: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn critical_points_of_symmetric_sigmoid() {
        let pts: Vec<(f64, f64)> = (0..9)
            .map(|i| {
                let x = 0.98 + 0.005 * i as f64;
                (x, 1.0 / (1.0 + (-(x - 1.0) / 0.004).exp()))
            })
            .collect();
        let r = synthetic_curve(&pts).critical_points().unwrap();
        assert!((r.r_g_star_p - 1.0).abs() < 1e-9);
        assert!((r.r_g_star_sigma.unwrap() - 1.0).abs() < 1e-3);
        assert!(!r.non_unique);
        assert_eq!(r.monotonicity_violations, 0);
    }

    #[test]
    fn flat_curve_has_no_root() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (1.0 + 0.01 * i as f64, 0.0)).collect();
        let e = synthetic_curve(&pts).critical_points().unwrap_err();
        assert!(matches!(e, Error::NoRoot { .. }));
    }

    #[test]
    fn classify_known_points() {
        let c = IntegrationControls::default();
        let n = NoiseSpec::default();
        let fig = classify_point(2.8, 0.5, 0.55, 5.0 / 3.0, c, 8, &n).unwrap();
        assert_eq!(fig.verdict, Verdict::Asymmetric);
        assert!(fig.contrast >= c.asym_threshold);
        let below = classify_point(0.5, 0.3, 0.2, 1.0, c, 8, &n).unwrap();
        assert_eq!(below.verdict, Verdict::NoCondensate);
    }

    #[test]
    fn verdicts_are_gauge_symmetric() {
        let c = IntegrationControls::default();
        let n = NoiseSpec::default().with_seed(17);
        for (g, aj, xi) in [(0.5, 0.55, 5.0 / 3.0), (0.2, 0.3, 0.5), (0.8, 0.7, 6.0)] {
            let p = classify_point(2.8, g, aj, xi, c, 4, &n).unwrap();
            let m = classify_point(2.8, g, -aj, xi, c, 4, &n).unwrap();
            assert_eq!(p.verdict, m.verdict);
            assert_eq!(p.contrast, m.contrast);
        }
    }
}
