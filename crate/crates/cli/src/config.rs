//! JSON run configuration and the embedded figure presets.

use std::path::Path;

use dyadsim_core::dynamics::NoiseSpec;
use dyadsim_core::ensemble::RegionGrid;
use dyadsim_core::model::{CouplingMatrix, IntegrationControls, NetworkConfig, SiteParams};
use dyadsim_core::perturbation::DyadParams;
use dyadsim_core::topology::{
    chain, dyad, tetrad, BoostedSite, ChainSpec, DyadNetwork, InterLink, LinkKind, TetradShape,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integration: IntegrationControls,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub campaign: CampaignSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub gamma: f64,
    pub g: f64,
    pub xi: f64,
    /// Dyad coupling; also the intra-dyad coupling of tetrads.
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    /// Explicit coupling matrix; dyads then come from `dyads`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyads: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tetrad: Option<TetradSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub site_overrides: Vec<SiteOverride>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            gamma: 2.8,
            g: 0.5,
            xi: 5.0 / 3.0,
            j: Some(0.55),
            coupling: None,
            dyads: None,
            chain: None,
            tetrad: None,
            site_overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TetradSection {
    pub alpha: f64,
    pub shape: TetradShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteOverride {
    pub site: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
}

/// Campaign sizes and scan grids; each command reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub trials: usize,
    /// Blueshift ratio on site 1 for dyad runs.
    pub r_g: f64,
    /// Pump ratio on site 1 for dyad runs and single calibration sweeps.
    pub r_gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_g_grid: Option<Vec<f64>>,
    pub r_gammas: Vec<f64>,
    /// Half-width of each locus grid about the first-order prediction.
    pub half_width: f64,
    pub grid_points: usize,
    pub alphas: Vec<f64>,
    pub shape: TetradShape,
    pub samples: usize,
    pub region: RegionGrid,
    pub seeds_per_point: usize,
    pub epsilons: Vec<f64>,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            trials: 400,
            r_g: 1.0,
            r_gamma: 1.0,
            r_g_grid: None,
            r_gammas: vec![0.95, 0.96, 0.97, 0.98, 0.99, 1.0],
            half_width: 0.025,
            grid_points: 9,
            alphas: vec![0.0, 0.025, 0.05, 0.075, 0.1],
            shape: TetradShape::Square,
            samples: 2000,
            region: default_region_grid(),
            seeds_per_point: 8,
            epsilons: (-8..=8).map(|k| 0.01 * k as f64).collect(),
        }
    }
}

pub fn default_region_grid() -> RegionGrid {
    RegionGrid {
        g: (1..=10).map(|i| 0.1 * i as f64).collect(),
        abs_j: (0..10).map(|i| 0.05 + 0.1 * i as f64).collect(),
        xi: vec![0.25, 0.5, 1.0, 5.0 / 3.0, 2.5, 4.0, 6.0, 10.0],
    }
}

pub const PRESETS: [&str; 8] = ["fig1a", "fig1b", "fig1cd", "fig2", "fig3", "fig4a", "fig4b", "fig4c"];

fn fig4_chain(links: Vec<InterLink>, boost_site: usize) -> ChainSpec {
    ChainSpec {
        n_dyads: 5,
        intra_coupling: 0.55,
        inter_links: links,
        boosted_sites: vec![BoostedSite { site: boost_site, factor: 1.05 }],
    }
}

/// Figure preset at desk scale, or at the original trial counts with `full_scale`.
pub fn preset(name: &str, full_scale: bool) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::default();
    let lateral = |position, alpha| InterLink { position, kind: LinkKind::Lateral, alpha };
    match name {
        "fig1a" => {
            c.campaign.trials = c.campaign.seeds_per_point;
            if full_scale {
                // 25 x 25 x 20 = 12500 points
                c.campaign.region = RegionGrid {
                    g: (1..=25).map(|i| 0.04 * i as f64).collect(),
                    abs_j: (0..25).map(|i| 0.02 + 0.04 * i as f64).collect(),
                    xi: (0..20).map(|i| 0.25 * 1.25f64.powi(i)).collect(),
                };
            }
        }
        "fig1b" => {
            c.model = ModelSection { gamma: 1.8, g: 0.4, xi: 2.0, j: Some(0.45), ..ModelSection::default() };
        }
        "fig1cd" => {
            c.campaign.trials = if full_scale { 1000 } else { 400 };
        }
        "fig2" => {
            c.model.tetrad = Some(TetradSection { alpha: 0.1, shape: TetradShape::Square });
            c.campaign.trials = if full_scale { 10000 } else { 2000 };
        }
        "fig3" => {
            c.model.j = None;
            c.model.chain = Some(ChainSpec::independent(30, 0.55));
            c.campaign.samples = 1;
        }
        "fig4a" | "fig4b" | "fig4c" => {
            c.model.j = None;
            c.model.chain = Some(match name {
                "fig4a" => ChainSpec::independent(5, 0.55),
                "fig4b" => fig4_chain(vec![lateral(0, 0.1), lateral(2, 0.1)], 8),
                _ => fig4_chain(
                    vec![lateral(0, 0.01), InterLink { position: 2, kind: LinkKind::Crossed, alpha: 0.01 }],
                    9,
                ),
            });
            c.campaign.samples = if full_scale { 5000 } else { 2000 };
            c.campaign.trials = c.campaign.samples;
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown preset '{other}'; available: {}",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(c)
}

/// Reads a config file; a run manifest is also accepted and its recorded config used.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let err = |e: serde_json::Error| CliError::Config(format!("{}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
    match value.get("config") {
        Some(inner) if value.get("command").is_some() => serde_json::from_value(inner.clone()).map_err(err),
        _ => serde_json::from_str(&text).map_err(err),
    }
}

impl RunConfig {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn dyad_params(&self) -> Result<DyadParams, CliError> {
        let j = self.model.j.ok_or_else(|| CliError::Config("model.J is required for this command".into()))?;
        Ok(DyadParams::new(j, self.model.gamma, self.model.g, self.model.xi)?)
    }

    pub fn base_site(&self) -> Result<SiteParams, CliError> {
        Ok(SiteParams::new(self.model.gamma, self.model.g)?)
    }

    /// Network described by the model section, with campaign ratios on site 1 for plain dyads.
    pub fn network(&self) -> Result<DyadNetwork, CliError> {
        let m = &self.model;
        let base = self.base_site()?;
        let mut net = if let Some(spec) = &m.chain {
            chain(spec, base, m.xi)?
        } else if let Some(rows) = &m.coupling {
            let coupling = CouplingMatrix::from_rows(rows)?;
            let n = coupling.n();
            let dyads = m.dyads.clone().unwrap_or_else(|| (0..n / 2).map(|k| (2 * k, 2 * k + 1)).collect());
            DyadNetwork { config: NetworkConfig::uniform(base, coupling, m.xi)?, dyads }
        } else if let Some(t) = &m.tetrad {
            let j = m.j.ok_or_else(|| CliError::Config("model.J is required for a tetrad".into()))?;
            tetrad(j, t.alpha, t.shape, base, m.xi)?
        } else {
            let j = m.j.ok_or_else(|| {
                CliError::Config("model needs one of J, coupling, chain or tetrad".into())
            })?;
            let c = &self.campaign;
            dyad(j, base, m.xi)?.with_site(1, SiteParams::new(c.r_gamma * m.gamma, c.r_g * m.g)?)?
        };
        for o in &m.site_overrides {
            let cur = *net
                .config
                .sites
                .get(o.site)
                .ok_or_else(|| CliError::Config(format!("override site {} out of range", o.site)))?;
            net = net.with_site(o.site, SiteParams::new(o.gamma.unwrap_or(cur.gamma), o.g.unwrap_or(cur.g))?)?;
        }
        Ok(net.with_integration(self.integration)?)
    }
}
