//! Network description and the right-hand side of the condensate-centre equations
//!
//! Each site `i` carries a complex amplitude `psi_i` evolving as
//!
//! ```text
//! dpsi_i/dt = -i|psi_i|^2 psi_i - psi_i
//!             + (1 - i g_i) [ gamma_i / (1 + xi |psi_i|^2) psi_i + sum_{j != i} J_ij psi_j ]
//! ```
//!
//! with per-site pumping `gamma_i` and blueshift `g_i`, a shared saturation
//! nonlinearity `xi` and a real symmetric coupling matrix `J`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Pumping strength and blueshift of one condensate centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteParams {
    pub gamma: f64,
    pub g: f64,
}

impl SiteParams {
    pub fn new(gamma: f64, g: f64) -> Result<Self> {
        let p = SiteParams { gamma, g };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if !self.g.is_finite() {
            return Err(invalid("g must be finite"));
        }
        Ok(())
    }
}

/// Dense symmetric coupling matrix with zero diagonal and `|J_ij| < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CouplingMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CouplingMatrix {
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("coupling matrix needs at least one site"));
        }
        Ok(CouplingMatrix { n, entries: vec![0.0; n * n] })
    }

    /// Builds from row-major entries, checking every invariant.
    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("coupling matrix needs at least one site"));
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        let m = CouplingMatrix { n, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(n, entries)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(invalid(format!("J[{i}][{i}] must be zero")));
            }
            for j in 0..self.n {
                let v = self.get(i, j);
                if !v.is_finite() || v.abs() >= 1.0 {
                    return Err(invalid(format!("|J[{i}][{j}]| = {v} must be < 1")));
                }
                if v != self.get(j, i) {
                    return Err(invalid(format!("J is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    /// Sets `J_ij = J_ji = value`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(invalid(format!("coupling index ({i}, {j}) out of range for n = {}", self.n)));
        }
        if i == j && value != 0.0 {
            return Err(invalid("diagonal couplings must be zero"));
        }
        if !value.is_finite() || value.abs() >= 1.0 {
            return Err(invalid(format!("|J| = {value} must be < 1")));
        }
        self.entries[i * self.n + j] = value;
        self.entries[j * self.n + i] = value;
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Applies a site relabelling: entry `(perm[i], perm[j])` of the result is `(i, j)` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let mut out = CouplingMatrix::zeros(self.n)?;
        for i in 0..self.n {
            for j in 0..self.n {
                out.entries[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        Ok(out)
    }

    /// Connected components of the graph with an edge wherever `J_ij != 0`.
    /// Components are listed by smallest member, members ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.n];
        let mut comps = Vec::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = vec![start];
            label[start] = id;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for j in 0..self.n {
                    if label[j] == usize::MAX && self.get(i, j) != 0.0 {
                        label[j] = id;
                        members.push(j);
                        stack.push(j);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }

    /// Two-colouring of the coupling graph, `None` if it has an odd cycle.
    pub fn bipartition(&self) -> Option<Vec<bool>> {
        let mut colour: Vec<Option<bool>> = vec![None; self.n];
        for start in 0..self.n {
            if colour[start].is_some() {
                continue;
            }
            colour[start] = Some(false);
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                let ci = colour[i].unwrap();
                for j in 0..self.n {
                    if self.get(i, j) == 0.0 {
                        continue;
                    }
                    match colour[j] {
                        None => {
                            colour[j] = Some(!ci);
                            stack.push(j);
                        }
                        Some(cj) if cj == ci => return None,
                        Some(_) => {}
                    }
                }
            }
        }
        Some(colour.into_iter().map(|c| c.unwrap()).collect())
    }

    /// Same graph with every coupling sign flipped.
    pub fn negated(&self) -> Self {
        CouplingMatrix {
            n: self.n,
            entries: self.entries.iter().map(|v| if *v == 0.0 { 0.0 } else { -v }).collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for CouplingMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        CouplingMatrix::from_rows(&rows)
    }
}

impl From<CouplingMatrix> for Vec<Vec<f64>> {
    fn from(m: CouplingMatrix) -> Self {
        m.to_rows()
    }
}

/// Integrator and steady-state detection controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationControls {
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_max: f64,
    pub stationarity_window: f64,
    pub stationarity_tol: f64,
    /// Minimum density contrast `|rho_i - rho_j| / (rho_i + rho_j)` for a dyad to count as resolved.
    pub asym_threshold: f64,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        IntegrationControls {
            dt_init: 1e-2,
            rel_tol: 1e-9,
            abs_tol: 1e-9,
            t_max: 2000.0,
            stationarity_window: 5.0,
            stationarity_tol: 1e-7,
            asym_threshold: 0.05,
        }
    }
}

impl IntegrationControls {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("dt_init", self.dt_init),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("t_max", self.t_max),
            ("stationarity_window", self.stationarity_window),
            ("stationarity_tol", self.stationarity_tol),
            ("asym_threshold", self.asym_threshold),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.asym_threshold >= 1.0 {
            return Err(invalid("asym_threshold must be < 1"));
        }
        Ok(())
    }
}

/// Complete description of one simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub sites: Vec<SiteParams>,
    pub coupling: CouplingMatrix,
    pub xi: f64,
    #[serde(default)]
    pub integration: IntegrationControls,
}

impl NetworkConfig {
    pub fn new(
        sites: Vec<SiteParams>,
        coupling: CouplingMatrix,
        xi: f64,
        integration: IntegrationControls,
    ) -> Result<Self> {
        let cfg = NetworkConfig { sites, coupling, xi, integration };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uniform sites sharing `site`.
    pub fn uniform(site: SiteParams, coupling: CouplingMatrix, xi: f64) -> Result<Self> {
        let n = coupling.n();
        Self::new(vec![site; n], coupling, xi, IntegrationControls::default())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites.len() != self.coupling.n() {
            return Err(Error::DimensionMismatch { expected: self.coupling.n(), found: self.sites.len() });
        }
        for s in &self.sites {
            s.validate()?;
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(invalid(format!("xi must be finite and > 0, got {}", self.xi)));
        }
        self.integration.validate()
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    /// Relabels sites: old site `i` becomes site `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let mut sites = self.sites.clone();
        for (i, s) in self.sites.iter().enumerate() {
            sites[perm[i]] = *s;
        }
        Ok(NetworkConfig {
            sites,
            coupling: self.coupling.permuted(perm)?,
            xi: self.xi,
            integration: self.integration,
        })
    }

    /// Evaluates the right-hand side into `out` without allocating.
    ///
    /// `psi` and `out` must both have length `self.n()`.
    #[inline]
    pub fn rhs_into(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let n = self.sites.len();
        debug_assert_eq!(psi.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let p = psi[i];
            let rho = p.norm_sqr();
            let site = self.sites[i];
            let mut drive = p * (site.gamma / (1.0 + self.xi * rho));
            for (j, &jij) in self.coupling.row(i).iter().enumerate() {
                if jij != 0.0 {
                    drive += psi[j] * jij;
                }
            }
            let factor = Complex64::new(1.0, -site.g);
            out[i] = Complex64::new(0.0, -rho) * p - p + factor * drive;
        }
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: perm.len() });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(invalid("not a permutation"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Site amplitudes at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub amplitudes: Vec<Complex64>,
    pub t: f64,
}

impl NetworkState {
    pub fn new(amplitudes: Vec<Complex64>, t: f64) -> Result<Self> {
        let s = NetworkState { amplitudes, t };
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid("state time must be finite and >= 0"));
        }
        if s.amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("state amplitudes must be finite"));
        }
        Ok(s)
    }

    pub fn zeros(n: usize) -> Self {
        NetworkState { amplitudes: vec![Complex64::new(0.0, 0.0); n], t: 0.0 }
    }

    pub fn densities(&self) -> Vec<f64> {
        densities(&self.amplitudes)
    }

    pub fn relative_phases(&self) -> Vec<f64> {
        relative_phases(&self.amplitudes)
    }
}

/// Instantaneous time derivative of every amplitude.
pub fn rhs(config: &NetworkConfig, state: &NetworkState) -> Result<Vec<Complex64>> {
    if state.amplitudes.len() != config.n() {
        return Err(Error::DimensionMismatch { expected: config.n(), found: state.amplitudes.len() });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); config.n()];
    config.rhs_into(&state.amplitudes, &mut out);
    Ok(out)
}

/// Occupations `rho_i = |psi_i|^2`.
pub fn densities(psi: &[Complex64]) -> Vec<f64> {
    psi.iter().map(|z| z.norm_sqr()).collect()
}

/// Phases `theta_i - theta_1` for `i >= 2`, wrapped to `(-pi, pi]`.
pub fn relative_phases(psi: &[Complex64]) -> Vec<f64> {
    match psi.split_first() {
        None => Vec::new(),
        Some((first, rest)) => {
            let reference = first.arg();
            rest.iter().map(|z| wrap_phase(z.arg() - reference)).collect()
        }
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
