//! Named network layouts: isolated dyads, square and crossed tetrads, dyad chains.
//!
//! Dyad `k` always occupies sites `(2k, 2k + 1)`; its bit is 1 when the even
//! ("upper") site is denser.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{CouplingMatrix, IntegrationControls, NetworkConfig, SiteParams};

/// A network together with the site pairs read out as bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadNetwork {
    pub config: NetworkConfig,
    pub dyads: Vec<(usize, usize)>,
}

impl DyadNetwork {
    /// Replaces the parameters of one site, e.g. `(gamma~, g + eps)` on site 1.
    pub fn with_site(mut self, site: usize, params: SiteParams) -> Result<Self> {
        params.validate()?;
        let n = self.config.n();
        *self
            .config
            .sites
            .get_mut(site)
            .ok_or_else(|| invalid(format!("site {site} out of range for {n} sites")))? = params;
        Ok(self)
    }

    /// Multiplies the pump of one site by `factor`.
    pub fn boost(self, site: usize, factor: f64) -> Result<Self> {
        let p = *self
            .config
            .sites
            .get(site)
            .ok_or_else(|| invalid(format!("site {site} out of range")))?;
        self.with_site(site, SiteParams { gamma: p.gamma * factor, ..p })
    }

    pub fn with_integration(mut self, controls: IntegrationControls) -> Result<Self> {
        controls.validate()?;
        self.config.integration = controls;
        Ok(self)
    }
}

fn paired_dyads(n_dyads: usize) -> Vec<(usize, usize)> {
    (0..n_dyads).map(|k| (2 * k, 2 * k + 1)).collect()
}

/// Two sites coupled by `j`, both with `base` parameters.
pub fn dyad(j: f64, base: SiteParams, xi: f64) -> Result<DyadNetwork> {
    let mut m = CouplingMatrix::zeros(2)?;
    m.set(0, 1, j)?;
    Ok(DyadNetwork { config: NetworkConfig::uniform(base, m, xi)?, dyads: vec![(0, 1)] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TetradShape {
    /// Inter-dyad links (0,2) and (1,3).
    Square,
    /// Inter-dyad links (0,3) and (1,2).
    Crossed,
}

/// Two dyads `(0,1)`, `(2,3)` joined by weak links of strength `alpha * j`.
pub fn tetrad(j: f64, alpha: f64, shape: TetradShape, base: SiteParams, xi: f64) -> Result<DyadNetwork> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let mut m = CouplingMatrix::zeros(4)?;
    m.set(0, 1, j)?;
    m.set(2, 3, j)?;
    let w = alpha * j;
    match shape {
        TetradShape::Square => {
            m.set(0, 2, w)?;
            m.set(1, 3, w)?;
        }
        TetradShape::Crossed => {
            m.set(0, 3, w)?;
            m.set(1, 2, w)?;
        }
    }
    Ok(DyadNetwork { config: NetworkConfig::uniform(base, m, xi)?, dyads: paired_dyads(2) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Lateral,
    Crossed,
}

/// Weak coupling between dyads `position` and `position + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterLink {
    pub position: usize,
    pub kind: LinkKind,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostedSite {
    pub site: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_dyads: usize,
    #[serde(rename = "J")]
    pub intra_coupling: f64,
    #[serde(default)]
    pub inter_links: Vec<InterLink>,
    #[serde(default)]
    pub boosted_sites: Vec<BoostedSite>,
}

impl ChainSpec {
    /// Chain of independent dyads.
    pub fn independent(n_dyads: usize, j: f64) -> Self {
        ChainSpec { n_dyads, intra_coupling: j, inter_links: Vec::new(), boosted_sites: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dyads == 0 {
            return Err(invalid("chain needs at least one dyad"));
        }
        let j = self.intra_coupling;
        if !(j.is_finite() && j.abs() < 1.0) {
            return Err(invalid(format!("|J| must be < 1, got {j}")));
        }
        for l in &self.inter_links {
            if l.position + 1 >= self.n_dyads {
                return Err(invalid(format!("link position {} out of range", l.position)));
            }
            if !(l.alpha.is_finite() && l.alpha >= 0.0 && l.alpha * j.abs() < 1.0) {
                return Err(invalid(format!("invalid link alpha {}", l.alpha)));
            }
        }
        for b in &self.boosted_sites {
            if b.site >= 2 * self.n_dyads {
                return Err(invalid(format!("boosted site {} out of range", b.site)));
            }
            if !(b.factor.is_finite() && b.factor > 0.0) {
                return Err(invalid(format!("boost factor must be > 0, got {}", b.factor)));
            }
            if !(0.8..=1.3).contains(&b.factor) {
                log::warn!("boost factor {} on site {} is far from 1", b.factor, b.site);
            }
        }
        Ok(())
    }
}

/// Builds the `2 * n_dyads`-site chain described by `spec`.
pub fn chain(spec: &ChainSpec, base: SiteParams, xi: f64) -> Result<DyadNetwork> {
    spec.validate()?;
    let n = 2 * spec.n_dyads;
    let j = spec.intra_coupling;
    let mut m = CouplingMatrix::zeros(n)?;
    for k in 0..spec.n_dyads {
        m.set(2 * k, 2 * k + 1, j)?;
    }
    for l in &spec.inter_links {
        let (a, b) = (2 * l.position, 2 * l.position + 1);
        let (c, d) = (a + 2, b + 2);
        let w = l.alpha * j;
        match l.kind {
            LinkKind::Lateral => {
                m.set(a, c, w)?;
                m.set(b, d, w)?;
            }
            LinkKind::Crossed => {
                m.set(a, d, w)?;
                m.set(b, c, w)?;
            }
        }
    }
    let mut net = DyadNetwork { config: NetworkConfig::uniform(base, m, xi)?, dyads: paired_dyads(spec.n_dyads) };
    for b in &spec.boosted_sites {
        net = net.boost(b.site, b.factor)?;
    }
    Ok(net)
}
