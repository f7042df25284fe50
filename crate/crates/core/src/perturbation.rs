//! First-order pump correction for a dyad whose second site carries a blueshift
//! imperfection `g -> g + eps`.
//!
//! Steady states are written with site 1 real and site 2 lagging by `theta`:
//!
//! ```text
//! psi_1 = a_1,    psi_2 = a_2 exp(-i theta),    i dpsi/dt = mu psi
//! ```
//!
//! Dividing each site equation by its amplitude gives the two complex equations
//!
//! ```text
//! F_1 = i mu - i a_1^2 - 1 + (1 - i g)       [ gamma / (1 + xi a_1^2) + J (a_2/a_1) e^{-i theta} ] = 0
//! F_2 = i mu - i a_2^2 - 1 + (1 - i (g+eps)) [ gamma~ / (1 + xi a_2^2) + J (a_1/a_2) e^{+i theta} ] = 0
//! ```
//!
//! Expanding `a_j = a_j^0 + eps a_j^1`, `theta = theta^0 + eps theta^1`,
//! `mu = mu^0 + eps mu^1` and `gamma~ = gamma^0 + eps gamma^1` to first order
//! gives four real linear equations in `(a_1^1, a_2^1, gamma^1, theta^1)` with
//! `mu^1` entering affinely. `mu^1` is then fixed by requiring `gamma^1` to be
//! unchanged when the two sites are relabelled.

use nalgebra::{Matrix4, Matrix4x2, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{wrap_phase, CouplingMatrix, IntegrationControls, NetworkConfig, NetworkState, SiteParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Uniform dyad parameters: coupling, unperturbed pump, blueshift, saturation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadParams {
    #[serde(rename = "J")]
    pub j: f64,
    pub gamma0: f64,
    pub g: f64,
    pub xi: f64,
}

impl DyadParams {
    pub fn new(j: f64, gamma0: f64, g: f64, xi: f64) -> Result<Self> {
        let p = DyadParams { j, gamma0, g, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j.is_finite() && self.j.abs() < 1.0) {
            return Err(invalid(format!("|J| must be < 1, got {}", self.j)));
        }
        if !(self.gamma0.is_finite() && self.gamma0 >= 0.0) {
            return Err(invalid("gamma0 must be >= 0"));
        }
        if !self.g.is_finite() {
            return Err(invalid("g must be finite"));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(invalid("xi must be > 0"));
        }
        Ok(())
    }

    /// Two-site network with site 2 set to `(gamma0 + d_gamma, g + eps)`.
    pub fn perturbed_config(&self, eps: f64, d_gamma: f64) -> Result<NetworkConfig> {
        let mut m = CouplingMatrix::zeros(2)?;
        m.set(0, 1, self.j)?;
        NetworkConfig::new(
            vec![
                SiteParams::new(self.gamma0, self.g)?,
                SiteParams::new(self.gamma0 + d_gamma, self.g + eps)?,
            ],
            m,
            self.xi,
            IntegrationControls::default(),
        )
    }
}

/// Unknowns of the steady-state equations with the imperfection applied.
#[derive(Debug, Clone, Copy)]
struct DyadPoint {
    a1: f64,
    a2: f64,
    theta: f64,
    mu: f64,
    gamma2: f64,
    g2: f64,
}

impl DyadPoint {
    fn equations(&self, p: &DyadParams) -> [Complex64; 2] {
        let e = Complex64::from_polar(1.0, -self.theta);
        let f1 = I * self.mu - I * self.a1 * self.a1 - 1.0
            + Complex64::new(1.0, -p.g) * (p.gamma0 / (1.0 + p.xi * self.a1 * self.a1) + p.j * (self.a2 / self.a1) * e);
        let f2 = I * self.mu - I * self.a2 * self.a2 - 1.0
            + Complex64::new(1.0, -self.g2)
                * (self.gamma2 / (1.0 + p.xi * self.a2 * self.a2) + p.j * (self.a1 / self.a2) * e.conj());
        [f1, f2]
    }

    /// Complex partial derivatives of `(F_1, F_2)`.
    fn partials(&self, p: &DyadParams) -> Partials {
        let (a1, a2) = (self.a1, self.a2);
        let e = Complex64::from_polar(1.0, -self.theta);
        let p1 = Complex64::new(1.0, -p.g);
        let p2 = Complex64::new(1.0, -self.g2);
        let s1 = 1.0 + p.xi * a1 * a1;
        let s2 = 1.0 + p.xi * a2 * a2;
        let j = p.j;
        Partials {
            a1: [
                -2.0 * I * a1 + p1 * (-2.0 * p.gamma0 * p.xi * a1 / (s1 * s1) - j * a2 / (a1 * a1) * e),
                p2 * j * e.conj() / a2,
            ],
            a2: [
                p1 * j * e / a1,
                -2.0 * I * a2 + p2 * (-2.0 * self.gamma2 * p.xi * a2 / (s2 * s2) - j * a1 / (a2 * a2) * e.conj()),
            ],
            theta: [p1 * j * (a2 / a1) * (-I) * e, p2 * j * (a1 / a2) * I * e.conj()],
            mu: [I, I],
            gamma2: [Complex64::new(0.0, 0.0), p2 / s2],
            g2: [
                Complex64::new(0.0, 0.0),
                -I * (self.gamma2 / s2 + j * (a1 / a2) * e.conj()),
            ],
        }
    }
}

struct Partials {
    a1: [Complex64; 2],
    a2: [Complex64; 2],
    theta: [Complex64; 2],
    mu: [Complex64; 2],
    gamma2: [Complex64; 2],
    g2: [Complex64; 2],
}

fn split(z: [Complex64; 2]) -> Vector4<f64> {
    Vector4::new(z[0].re, z[0].im, z[1].re, z[1].im)
}

fn columns(cols: [[Complex64; 2]; 4]) -> Matrix4<f64> {
    Matrix4::from_columns(&cols.map(split))
}

/// Solves a 4x4 system, refusing near-singular matrices.
fn solve4(m: &Matrix4<f64>, b: &Vector4<f64>, what: &str) -> Result<Vector4<f64>> {
    let sv = m.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(Error::SingularLinearization(format!(
            "{what}: condition number {:.3e}",
            if lo > 0.0 { hi / lo } else { f64::INFINITY }
        )));
    }
    m.lu()
        .solve(b)
        .ok_or_else(|| Error::SingularLinearization(format!("{what}: LU failed")))
}

/// Leading-order steady state of the unperturbed dyad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadBaseState {
    pub a1: f64,
    pub a2: f64,
    /// Phase of site 1 relative to site 2.
    pub theta: f64,
    pub mu: f64,
    pub params: DyadParams,
}

impl DyadBaseState {
    fn point(&self) -> DyadPoint {
        DyadPoint {
            a1: self.a1,
            a2: self.a2,
            theta: self.theta,
            mu: self.mu,
            gamma2: self.params.gamma0,
            g2: self.params.g,
        }
    }

    /// `(F_1, F_2)` at zero imperfection.
    pub fn residual(&self) -> [Complex64; 2] {
        self.point().equations(&self.params)
    }

    /// Largest absolute real or imaginary component of [`residual`](Self::residual).
    pub fn max_residual(&self) -> f64 {
        split(self.residual()).amax()
    }

    /// Same state with the sites relabelled: `a_1 <-> a_2`, `theta -> -theta`.
    pub fn swapped(&self) -> Self {
        DyadBaseState { a1: self.a2, a2: self.a1, theta: -self.theta, ..*self }
    }

    /// Gauge-fixes a pair of steady amplitudes, then polishes with [`refine`](Self::refine).
    pub fn from_amplitudes(psi: [Complex64; 2], mu: f64, params: DyadParams) -> Result<Self> {
        params.validate()?;
        if psi[0].norm() == 0.0 || psi[1].norm() == 0.0 {
            return Err(invalid("both dyad sites must be occupied"));
        }
        DyadBaseState {
            a1: psi[0].norm(),
            a2: psi[1].norm(),
            theta: wrap_phase(psi[0].arg() - psi[1].arg()),
            mu,
            params,
        }
        .refine()
    }

    /// Newton iteration on `(a_1, a_2, theta, mu)` until the residual is at round-off.
    pub fn refine(self) -> Result<Self> {
        let mut s = self;
        for _ in 0..50 {
            let pt = s.point();
            let f = split(pt.equations(&s.params));
            if f.amax() < 1e-14 {
                break;
            }
            let d = pt.partials(&s.params);
            let jac = columns([d.a1, d.a2, d.theta, d.mu]);
            let step = solve4(&jac, &(-f), "steady-state Newton")?;
            s.a1 += step[0];
            s.a2 += step[1];
            s.theta = wrap_phase(s.theta + step[2]);
            s.mu += step[3];
            if !(s.a1 > 0.0 && s.a2 > 0.0) {
                return Err(invalid("Newton iteration left the positive-amplitude region"));
            }
        }
        if s.max_residual() > 1e-10 {
            return Err(invalid(format!("steady state did not converge, residual {:.3e}", s.max_residual())));
        }
        Ok(s)
    }

    /// Network amplitudes of this state (site 1 real).
    pub fn amplitudes(&self) -> [Complex64; 2] {
        [Complex64::new(self.a1, 0.0), Complex64::from_polar(self.a2, -self.theta)]
    }
}

/// Symmetric fixed point `a_1 = a_2`, `theta = 0` (J > 0) or `pi` (J < 0), `mu = g + a^2`.
pub fn equal_occupancy_state(params: DyadParams) -> Result<DyadBaseState> {
    params.validate()?;
    let aj = params.j.abs();
    if params.gamma0 + aj <= 1.0 {
        return Err(Error::NoCondensate(params.gamma0 + aj));
    }
    let a_sq = (params.gamma0 + aj - 1.0) / ((1.0 - aj) * params.xi);
    let a = a_sq.sqrt();
    Ok(DyadBaseState {
        a1: a,
        a2: a,
        theta: if params.j < 0.0 { std::f64::consts::PI } else { 0.0 },
        mu: params.g + a_sq,
        params,
    })
}

/// First-order corrections for an imperfection `eps` on site 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSolution {
    pub a1_1: f64,
    pub a2_1: f64,
    pub gamma1: f64,
    pub theta1: f64,
    pub mu1: f64,
}

/// The four real first-order equations `M x = b_0 + mu^1 b_mu`
/// with `x = (a_1^1, a_2^1, gamma^1, theta^1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderSystem {
    pub matrix: Matrix4<f64>,
    pub rhs_const: Vector4<f64>,
    pub rhs_mu: Vector4<f64>,
}

impl FirstOrderSystem {
    pub fn assemble(base: &DyadBaseState) -> Self {
        let d = base.point().partials(&base.params);
        FirstOrderSystem {
            matrix: columns([d.a1, d.a2, d.gamma2, d.theta]),
            rhs_const: -split(d.g2),
            rhs_mu: -split(d.mu),
        }
    }

    /// Solution as an affine function of `mu^1`: `(x_0, x_mu)` with `x = x_0 + mu^1 x_mu`.
    pub fn affine_solution(&self) -> Result<(Vector4<f64>, Vector4<f64>)> {
        let x0 = solve4(&self.matrix, &self.rhs_const, "first-order system")?;
        let xm = solve4(&self.matrix, &self.rhs_mu, "first-order system")?;
        Ok((x0, xm))
    }
}

fn solution_at(x0: &Vector4<f64>, xm: &Vector4<f64>, mu1: f64) -> PerturbationSolution {
    let x = x0 + xm * mu1;
    PerturbationSolution { a1_1: x[0], a2_1: x[1], gamma1: x[2], theta1: x[3], mu1 }
}

/// Solves the first-order system and fixes `mu^1` by relabelling symmetry.
///
/// For an asymmetric base the condition `gamma^1(mu^1) = gamma^1_swapped(mu^1)`
/// is an affine equation with a unique root. For an equal-occupancy base the
/// relabelled system is identical and the condition holds for every `mu^1`;
/// there the symmetric requirement reduces to `a_1^1 = a_2^1` (the corrected
/// state stays equally occupied), which is used instead.
pub fn solve_first_order(base: &DyadBaseState) -> Result<PerturbationSolution> {
    base.params.validate()?;
    if !(base.a1 > 0.0 && base.a2 > 0.0) {
        return Err(invalid("base amplitudes must be positive"));
    }
    let (x0, xm) = FirstOrderSystem::assemble(base).affine_solution()?;
    let (y0, ym) = FirstOrderSystem::assemble(&base.swapped()).affine_solution()?;
    let (c0, c1, d0, d1) = (x0[2], xm[2], y0[2], ym[2]);
    let scale = c0.abs().max(c1.abs()).max(d0.abs()).max(d1.abs()).max(f64::MIN_POSITIVE);
    let tol = 1e-9 * scale;

    let mu1 = if (c1 - d1).abs() > tol {
        (d0 - c0) / (c1 - d1)
    } else if (c0 - d0).abs() <= tol {
        let denom = xm[0] - xm[1];
        if denom.abs() <= 1e-12 * xm[0].abs().max(xm[1].abs()).max(f64::MIN_POSITIVE) {
            return Err(Error::SingularLinearization(
                "symmetric base: a1^1 - a2^1 does not depend on mu^1".into(),
            ));
        }
        (x0[1] - x0[0]) / denom
    } else {
        return Err(Error::SingularLinearization(
            "gamma^1 independent of mu^1 in both labelings but unequal".into(),
        ));
    };
    Ok(solution_at(&x0, &xm, mu1))
}

/// Closed-form small-asymmetry corrections at the equal-occupancy state:
///
/// ```text
/// gamma^1 = -g gamma^0 / ((1 + g^2)(1 - |J|))
/// mu^1    = 1/2 - gamma^0 g / (2 (1 + g^2)(1 - |J|)^2 xi)
/// theta^1 = 1 / (2 (1 + g^2) |J|)
/// ```
///
/// `a_1^1`, `a_2^1` are the least-squares solution of the first-order system
/// with the three closed-form values substituted.
pub fn closed_form_corrections(params: DyadParams) -> Result<PerturbationSolution> {
    params.validate()?;
    let aj = params.j.abs();
    if aj == 0.0 {
        return Err(Error::DegenerateCoupling);
    }
    let base = equal_occupancy_state(params)?;
    let (g, gamma0, xi) = (params.g, params.gamma0, params.xi);
    let one_g2 = 1.0 + g * g;
    let gamma1 = -g * gamma0 / (one_g2 * (1.0 - aj));
    let mu1 = 0.5 - gamma0 * g / (2.0 * one_g2 * (1.0 - aj).powi(2) * xi);
    let theta1 = 1.0 / (2.0 * one_g2 * aj);

    let sys = FirstOrderSystem::assemble(&base);
    let m = &sys.matrix;
    let rhs = sys.rhs_const + sys.rhs_mu * mu1 - m.column(2) * gamma1 - m.column(3) * theta1;
    let a_cols: Matrix4x2<f64> = Matrix4x2::from_columns(&[m.column(0).into_owned(), m.column(1).into_owned()]);
    let normal = a_cols.transpose() * a_cols;
    let a: Vector2<f64> = normal
        .lu()
        .solve(&(a_cols.transpose() * rhs))
        .ok_or_else(|| Error::SingularLinearization("amplitude columns are dependent".into()))?;
    Ok(PerturbationSolution { a1_1: a[0], a2_1: a[1], gamma1, theta1, mu1 })
}

/// Largest `|rhs_i + i mu psi_i|` of the full perturbed dyad evaluated on the
/// first-order state `psi_1 = a_1^0 + eps a_1^1`, `psi_2 = (a_2^0 + eps a_2^1) e^{-i(theta^0 + eps theta^1)}`.
///
/// Uses the network right-hand side directly, independent of the linearisation.
pub fn expansion_residual(base: &DyadBaseState, sol: &PerturbationSolution, eps: f64) -> Result<f64> {
    let cfg = base.params.perturbed_config(eps, eps * sol.gamma1)?;
    let psi = vec![
        Complex64::new(base.a1 + eps * sol.a1_1, 0.0),
        Complex64::from_polar(base.a2 + eps * sol.a2_1, -(base.theta + eps * sol.theta1)),
    ];
    let mu = base.mu + eps * sol.mu1;
    let d = crate::model::rhs(&cfg, &NetworkState { amplitudes: psi.clone(), t: 0.0 })?;
    Ok(d.iter().zip(&psi).map(|(d, p)| (d + I * mu * p).norm()).fold(0.0, f64::max))
}

/// One point on a pump-versus-blueshift calibration locus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub epsilon: f64,
    /// `(g + eps) / g`
    pub r_g: f64,
    /// `gamma~ / gamma^0`
    pub r_gamma: f64,
    /// `|eps / g| > 0.2`, beyond the first-order regime.
    pub outside_validity: bool,
}

/// Ratio pairs `(r_g, r_gamma)` predicted by the closed-form `gamma^1`.
pub fn analytic_calibration_curve(params: DyadParams, epsilons: &[f64]) -> Result<Vec<CalibrationPoint>> {
    if params.g == 0.0 {
        return Err(invalid("r_g is undefined for g = 0"));
    }
    let sol = closed_form_corrections(params)?;
    epsilons
        .iter()
        .map(|&eps| {
            let r_g = (params.g + eps) / params.g;
            if !(r_g > 0.0) {
                return Err(invalid(format!("eps = {eps} gives non-positive r_g")));
            }
            let outside_validity = (eps / params.g).abs() > 0.2;
            if outside_validity {
                log::warn!("eps = {eps} is outside the first-order regime (|eps/g| > 0.2)");
            }
            Ok(CalibrationPoint {
                epsilon: eps,
                r_g,
                r_gamma: (params.gamma0 + eps * sol.gamma1) / params.gamma0,
                outside_validity,
            })
        })
        .collect()
}

/// Slope `d r_gamma / d r_g = g gamma^1 / gamma^0 = -g^2 / ((1 + g^2)(1 - |J|))`.
pub fn analytic_locus_slope(params: DyadParams) -> f64 {
    let g = params.g;
    -g * g / ((1.0 + g * g) * (1.0 - params.j.abs()))
}

/// Pump `gamma~` on site 2 for which the imperfect dyad has an exactly
/// equal-occupancy steady state, found by Newton iteration on the full
/// nonlinear equations from the first-order guess.
pub fn equal_occupation_pump(params: DyadParams, eps: f64) -> Result<f64> {
    let base = equal_occupancy_state(params)?;
    let guess = if params.j != 0.0 {
        closed_form_corrections(params)?
    } else {
        PerturbationSolution { a1_1: 0.0, a2_1: 0.0, gamma1: 0.0, theta1: 0.0, mu1: 0.0 }
    };
    // unknowns: a, theta, mu, gamma~
    let mut x = Vector4::new(
        base.a1 + eps * guess.a1_1,
        base.theta + eps * guess.theta1,
        base.mu + eps * guess.mu1,
        params.gamma0 + eps * guess.gamma1,
    );
    for _ in 0..60 {
        let pt = DyadPoint { a1: x[0], a2: x[0], theta: x[1], mu: x[2], gamma2: x[3], g2: params.g + eps };
        let f = split(pt.equations(&params));
        if f.amax() < 1e-14 {
            return Ok(x[3]);
        }
        let d = pt.partials(&params);
        let da = [d.a1[0] + d.a2[0], d.a1[1] + d.a2[1]];
        let jac = columns([da, d.theta, d.mu, d.gamma2]);
        x += solve4(&jac, &(-f), "equal-occupation Newton")?;
        if !(x[0] > 0.0) {
            return Err(invalid("equal-occupation Newton left the positive-amplitude region"));
        }
    }
    let pt = DyadPoint { a1: x[0], a2: x[0], theta: x[1], mu: x[2], gamma2: x[3], g2: params.g + eps };
    if split(pt.equations(&params)).amax() < 1e-11 {
        Ok(x[3])
    } else {
        Err(invalid(format!("equal-occupation pump did not converge for eps = {eps}")))
    }
}

/// Exact equal-occupation locus `(r_g, r_gamma)` from [`equal_occupation_pump`].
pub fn numerical_calibration_curve(params: DyadParams, epsilons: &[f64]) -> Result<Vec<CalibrationPoint>> {
    if params.g == 0.0 {
        return Err(invalid("r_g is undefined for g = 0"));
    }
    epsilons
        .iter()
        .map(|&eps| {
            Ok(CalibrationPoint {
                epsilon: eps,
                r_g: (params.g + eps) / params.g,
                r_gamma: equal_occupation_pump(params, eps)? / params.gamma0,
                outside_validity: (eps / params.g).abs() > 0.2,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_to_steady, NoiseSpec, RunEnd};
    use approx::assert_relative_eq;

    fn fig1b() -> DyadParams {
        DyadParams::new(0.45, 1.8, 0.4, 2.0).unwrap()
    }

    fn fig1cd() -> DyadParams {
        DyadParams::new(0.55, 2.8, 0.5, 5.0 / 3.0).unwrap()
    }

    #[test]
    fn equal_occupancy_values() {
        let s = equal_occupancy_state(fig1b()).unwrap();
        assert_relative_eq!(s.a1 * s.a1, 1.25 / 1.1, epsilon = 1e-14);
        assert_relative_eq!(s.mu, 0.4 + 1.25 / 1.1, epsilon = 1e-14);
        assert_eq!(s.theta, 0.0);
        assert!(s.max_residual() < 1e-10);

        let neg = equal_occupancy_state(DyadParams { j: -0.45, ..fig1b() }).unwrap();
        assert_relative_eq!(neg.a1, s.a1, epsilon = 1e-15);
        assert_relative_eq!(neg.theta, std::f64::consts::PI);
        assert!(neg.max_residual() < 1e-10);
    }

    #[test]
    fn weak_coupling_limit_is_single_site_density() {
        let p = DyadParams::new(1e-12, 2.8, 0.5, 5.0 / 3.0).unwrap();
        let s = equal_occupancy_state(p).unwrap();
        assert_relative_eq!(s.a1 * s.a1, 1.8 / (5.0 / 3.0), max_relative = 1e-10);
    }

    #[test]
    fn no_condensate_below_threshold() {
        let p = DyadParams::new(0.2, 0.7, 0.5, 1.0).unwrap();
        assert!(matches!(equal_occupancy_state(p), Err(Error::NoCondensate(_))));
    }

    #[test]
    fn closed_form_values() {
        let s = closed_form_corrections(fig1b()).unwrap();
        // -(0.4 * 1.8) / (1.16 * 0.55) and 1 / (2 * 1.16 * 0.45)
        assert_relative_eq!(s.gamma1, -0.72 / 0.638, epsilon = 1e-14);
        assert_relative_eq!(s.gamma1, -1.128_526_645_768_025, epsilon = 1e-12);
        assert_relative_eq!(s.theta1, 0.957_854_406_130_268, epsilon = 1e-12);
        assert_relative_eq!(s.mu1, 0.5 - 0.72 / (2.0 * 1.16 * 0.3025 * 2.0), epsilon = 1e-14);
        // symmetric state: both amplitude corrections equal
        //   a^1 = -g gamma0 / (4 xi (1 + g^2)(1 - |J|)^2 a^0)
        let a0 = equal_occupancy_state(fig1b()).unwrap().a1;
        let expect = -0.4 * 1.8 / (4.0 * 2.0 * 1.16 * 0.3025 * a0);
        assert_relative_eq!(s.a1_1, expect, max_relative = 1e-12);
        assert_relative_eq!(s.a2_1, expect, max_relative = 1e-12);
    }

    #[test]
    fn no_blueshift_needs_no_correction() {
        let s = closed_form_corrections(DyadParams { g: 0.0, ..fig1b() }).unwrap();
        assert_eq!(s.gamma1, 0.0);
    }

    #[test]
    fn zero_coupling_is_degenerate() {
        let p = DyadParams { j: 0.0, ..fig1b() };
        assert_eq!(closed_form_corrections(p).unwrap_err(), Error::DegenerateCoupling);
    }

    #[test]
    fn general_solver_matches_closed_form_at_symmetric_base() {
        for p in [fig1b(), fig1cd(), DyadParams { j: -0.3, ..fig1b() }] {
            let base = equal_occupancy_state(p).unwrap();
            let general = solve_first_order(&base).unwrap();
            let closed = closed_form_corrections(p).unwrap();
            for (a, b) in [
                (general.gamma1, closed.gamma1),
                (general.theta1, closed.theta1),
                (general.mu1, closed.mu1),
                (general.a1_1, closed.a1_1),
                (general.a2_1, closed.a2_1),
            ] {
                assert_relative_eq!(a, b, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn locus_slope_values() {
        assert_relative_eq!(analytic_locus_slope(fig1cd()), -0.25 / (1.25 * 0.45), epsilon = 1e-15);
        assert_relative_eq!(analytic_locus_slope(fig1cd()), -0.444_444_444_444_444_4, epsilon = 1e-12);
        assert_relative_eq!(analytic_locus_slope(fig1b()), -0.16 / (1.16 * 0.55), epsilon = 1e-15);
    }

    #[test]
    fn calibration_curve_is_affine_through_unity() {
        let eps = [-0.02, 0.0, 0.01, 0.03, 0.08];
        let pts = analytic_calibration_curve(fig1b(), &eps).unwrap();
        assert_eq!((pts[1].r_g, pts[1].r_gamma), (1.0, 1.0));
        let slope = analytic_locus_slope(fig1b());
        for p in &pts {
            assert_relative_eq!(p.r_gamma - 1.0, slope * (p.r_g - 1.0), epsilon = 1e-14);
            assert!(!p.outside_validity);
        }
        assert!(analytic_calibration_curve(fig1b(), &[-0.5]).is_err());
        assert!(analytic_calibration_curve(DyadParams { g: 0.0, ..fig1b() }, &[0.1]).is_err());
    }

    #[test]
    fn validity_flag() {
        let pts = analytic_calibration_curve(fig1b(), &[0.09, -0.1, 0.3]).unwrap();
        assert!(pts.iter().all(|p| p.outside_validity));
    }

    #[test]
    fn numerical_locus_agrees_to_first_order() {
        let p = fig1b();
        let slope = analytic_locus_slope(p);
        for eps in [1e-4, 1e-3, -1e-3] {
            let rg = (p.g + eps) / p.g;
            let exact = equal_occupation_pump(p, eps).unwrap() / p.gamma0;
            let first = 1.0 + slope * (rg - 1.0);
            // difference is second order in eps
            assert!((exact - first).abs() < 50.0 * eps * eps, "eps {eps}: {exact} vs {first}");
        }
    }

    fn residual_slope(base: &DyadBaseState, sol: &PerturbationSolution) -> f64 {
        let eps: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
        let pts: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| (e.ln(), expansion_residual(base, sol, e).unwrap().ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn symmetric_residual_is_second_order() {
        let base = equal_occupancy_state(fig1b()).unwrap();
        let sol = solve_first_order(&base).unwrap();
        let slope = residual_slope(&base, &sol);
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
        // an arbitrary wrong gamma^1 leaves a first-order residual
        let wrong = PerturbationSolution { gamma1: sol.gamma1 + 0.3, ..sol };
        assert!((residual_slope(&base, &wrong) - 1.0).abs() < 0.2);
    }

    #[test]
    fn asymmetric_base_from_simulation() {
        let p = fig1cd();
        let cfg = p.perturbed_config(0.0, 0.0).unwrap();
        let noise = NoiseSpec::default().with_seed(5);
        let (end, state) =
            integrate_to_steady(&cfg, NetworkState { amplitudes: noise.sample(2), t: 0.0 }).unwrap();
        let RunEnd::Steady { mu, .. } = end else { panic!("not steady") };
        let base = DyadBaseState::from_amplitudes([state.amplitudes[0], state.amplitudes[1]], mu, p).unwrap();
        assert!(base.max_residual() < 1e-10);
        assert!((base.a1 - base.a2).abs() > 0.1);
        assert!(base.swapped().max_residual() < 1e-10);

        let sol = solve_first_order(&base).unwrap();
        let slope = residual_slope(&base, &sol);
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");

        // relabelling invariance of gamma^1 at the fixed mu^1
        let (y0, ym) = FirstOrderSystem::assemble(&base.swapped()).affine_solution().unwrap();
        let swapped_gamma1 = y0[2] + sol.mu1 * ym[2];
        assert!((swapped_gamma1 - sol.gamma1).abs() < 1e-10 * sol.gamma1.abs().max(1.0));
    }

    #[test]
    fn degenerate_linearisation_is_reported() {
        // gamma0 = 1 - |J| exactly: zero-amplitude base
        let p = DyadParams::new(0.3, 0.7000000001, 0.5, 1.0).unwrap();
        let base = equal_occupancy_state(p).unwrap();
        assert!(base.a1 < 1e-4);
        let r = solve_first_order(&DyadBaseState { a1: 0.0, a2: 0.0, ..base });
        assert!(r.is_err());
    }
}
