//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `harness = false` so every line is printed whether or not the
//! criterion passes; exits nonzero if any criterion fails. Campaigns run in a
//! four-thread pool and are re-run in a one-thread pool for criterion 10.

use std::time::Instant;

use dyadsim_core::dynamics::{run_trial, NoiseSpec, OutcomeKind};
use dyadsim_core::ensemble::{
    calibration_dyad, critical_locus, region_sweep, run_ensemble, run_trials, tetrad_bias, CriticalLocus,
    EnsembleStats, RegionGrid, RegionSweep, TetradBias, Verdict,
};
use dyadsim_core::model::{CouplingMatrix, IntegrationControls, NetworkConfig, SiteParams};
use dyadsim_core::perturbation::{
    analytic_locus_slope, closed_form_corrections, equal_occupancy_state, expansion_residual,
    numerical_calibration_curve, solve_first_order, DyadParams,
};
use dyadsim_core::rng::{chi_square_uniformity, generate_stream, max_pairwise_mutual_information, Stream};
use dyadsim_core::topology::{chain, ChainSpec, TetradShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const GAMMA: f64 = 2.8;
const G: f64 = 0.5;
const XI: f64 = 5.0 / 3.0;
const J: f64 = 0.55;

fn fair() -> DyadParams {
    DyadParams::new(J, GAMMA, G, XI).unwrap()
}

fn base_site() -> SiteParams {
    SiteParams::new(GAMMA, G).unwrap()
}

fn noise() -> NoiseSpec {
    NoiseSpec::default()
}

fn controls() -> IntegrationControls {
    IntegrationControls::default()
}

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, id: usize, pass: bool, started: Instant, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2}: {verdict}  [{:.1} s]  {detail}", started.elapsed().as_secs_f64());
        if !pass {
            self.failed.push(id);
        }
    }
}

// ---- campaigns (re-run for criterion 10) ----

/// `(gamma, g, xi, densities, mu)` of one single-site run.
type SingleSite = (f64, f64, f64, Vec<f64>, Option<f64>);

fn campaign_single_site() -> Vec<SingleSite> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..20)
        .map(|k| {
            let gamma = rng.random_range(1.2..4.0);
            let xi = rng.random_range(0.2..10.0);
            let g = rng.random_range(0.0..1.0);
            let cfg = NetworkConfig::uniform(SiteParams::new(gamma, g).unwrap(), CouplingMatrix::zeros(1).unwrap(), xi)
                .unwrap();
            let o = run_trial(&cfg, &[], &noise().with_seed(k)).unwrap();
            assert_eq!(o.kind, OutcomeKind::Steady, "single site gamma={gamma} xi={xi}");
            (gamma, g, xi, o.final_densities, o.mu)
        })
        .collect()
}

fn campaign_fair_coin() -> EnsembleStats {
    let cfg = calibration_dyad(fair(), 1.0, 1.0).unwrap();
    run_ensemble(&cfg, &[(0, 1)], 400, &noise()).unwrap()
}

fn campaign_locus() -> CriticalLocus {
    let r_gammas = [0.95, 0.96, 0.97, 0.98, 0.99, 1.0];
    critical_locus(fair(), controls(), &r_gammas, 0.025, 9, 400, &noise()).unwrap()
}

const ALPHAS: [f64; 5] = [0.0, 0.025, 0.05, 0.075, 0.1];

fn campaign_tetrad() -> Vec<TetradBias> {
    tetrad_bias(J, &ALPHAS, TetradShape::Square, base_site(), XI, controls(), 2000, &noise()).unwrap()
}

fn campaign_chain() -> Stream {
    let net = chain(&ChainSpec::independent(5, J), base_site(), XI).unwrap();
    generate_stream(&net, 2000, &noise()).unwrap()
}

fn campaign_pinning() -> Vec<dyadsim_core::dynamics::TrialOutcome> {
    let cfg = calibration_dyad(fair(), 1.0, 1.05).unwrap();
    run_trials(&cfg, &[(0, 1)], 200, &noise()).unwrap()
}

fn region_grid() -> RegionGrid {
    RegionGrid {
        g: (1..=10).map(|k| k as f64 / 10.0).collect(),
        abs_j: (0..10).map(|k| (2 * k + 1) as f64 / 20.0).collect(),
        xi: vec![0.25, 0.5, 1.0, 5.0 / 3.0, 2.5, 4.0, 6.0, 10.0],
    }
}

fn campaign_region(sign: f64) -> RegionSweep {
    region_sweep(GAMMA, &region_grid(), sign, controls(), 8, &noise()).unwrap()
}

// ---- criteria ----

fn criterion_1(rep: &mut Report, runs: &[SingleSite], t0: Instant) {
    let mut worst_rho = 0.0f64;
    let mut worst_mu = 0.0f64;
    for (gamma, g, xi, rho, mu) in runs {
        let rho_exact = (gamma - 1.0) / xi;
        let mu_exact = g + rho_exact;
        worst_rho = worst_rho.max((rho[0] - rho_exact).abs() / rho_exact);
        worst_mu = worst_mu.max(mu.map_or(f64::INFINITY, |m| (m - mu_exact).abs() / mu_exact));
    }
    rep.line(
        1,
        worst_rho < 1e-6 && worst_mu < 1e-6,
        t0,
        format!("single site, 20 draws: max rel err rho {worst_rho:.2e}, mu {worst_mu:.2e} (tol 1e-6)"),
    );
}

fn criterion_2(rep: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut worst_res, mut worst_rel, mut n) = (0.0f64, 0.0f64, 0);
    let mut failures = 0;
    while n < 100 {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let p = DyadParams::new(
            sign * rng.random_range(0.05..0.95),
            rng.random_range(1.2..5.0),
            rng.random_range(0.05..1.5),
            rng.random_range(0.2..10.0),
        )
        .unwrap();
        let Ok(base) = equal_occupancy_state(p) else { continue };
        n += 1;
        worst_res = worst_res.max(base.max_residual());
        match (solve_first_order(&base), closed_form_corrections(p)) {
            (Ok(a), Ok(b)) => {
                for (x, y) in [(a.gamma1, b.gamma1), (a.theta1, b.theta1), (a.mu1, b.mu1), (a.a1_1, b.a1_1)] {
                    worst_rel = worst_rel.max((x - y).abs() / y.abs());
                }
            }
            _ => failures += 1,
        }
    }
    rep.line(
        2,
        worst_res < 1e-10 && worst_rel < 1e-8 && failures == 0,
        t0,
        format!(
            "100 tuples: max base residual {worst_res:.2e} (tol 1e-10), max rel diff linear system vs closed form {worst_rel:.2e} (tol 1e-8), solver failures {failures}"
        ),
    );
}

fn criterion_3(rep: &mut Report) {
    let t0 = Instant::now();
    let eps: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut slopes = Vec::new();
    for p in [fair(), DyadParams::new(0.45, 1.8, 0.4, 2.0).unwrap()] {
        let base = equal_occupancy_state(p).unwrap();
        let sol = solve_first_order(&base).unwrap();
        let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let y: Vec<f64> = eps.iter().map(|&e| expansion_residual(&base, &sol, e).unwrap().ln()).collect();
        slopes.push(dyadsim_core::ensemble::fit_line(&x, &y).unwrap().slope);
    }
    rep.line(
        3,
        slopes.iter().all(|s| (s - 2.0).abs() <= 0.1),
        t0,
        format!("log-log residual slopes {slopes:.3?} (want 2.0 +/- 0.1)"),
    );
}

fn criterion_4(rep: &mut Report, s: &EnsembleStats, t0: Instant) {
    let p1 = s.p1_per_dyad[0];
    let sigma = s.sigma_per_dyad[0];
    // Independent recount from the state histogram.
    let n = s.n_resolved() as f64;
    let ones = s.count(1) as f64;
    let p = ones / n;
    let identity = (sigma - (p * (1.0 - p)).sqrt()).abs() <= 1e-15 && p == p1;
    rep.line(
        4,
        (0.425..=0.575).contains(&p1) && identity && s.n_resolved() == 400,
        t0,
        format!(
            "fair coin, 400 trials: p1 {p1:.4} in [0.425, 0.575], sigma {sigma:.4} = sqrt(p1(1-p1)): {identity}, resolved {}",
            s.n_resolved()
        ),
    );
}

fn criterion_5(rep: &mut Report, loc: &CriticalLocus, t0: Instant) {
    let p = fair();
    let hand = -p.g * p.g / ((1.0 + p.g * p.g) * (1.0 - p.j.abs()));
    let analytic = analytic_locus_slope(p);
    // Independent routes: general linear system, and the exact nonlinear locus.
    let general = p.g * solve_first_order(&equal_occupancy_state(p).unwrap()).unwrap().gamma1 / p.gamma0;
    let h = 1e-5;
    let num = numerical_calibration_curve(p, &[-h, h]).unwrap();
    let numeric = (num[1].r_gamma - num[0].r_gamma) / (num[1].r_g - num[0].r_g);
    let analytic_ok = (analytic - (-0.444)).abs() <= 1e-3
        && (analytic - hand).abs() < 1e-14
        && (general - analytic).abs() < 1e-10
        && (numeric - analytic).abs() < 1e-6;
    let slope = loc.fit.slope;
    let used = loc.results.len();
    let fit_ok = (-0.55..=-0.35).contains(&slope) && used >= 4;
    rep.line(
        5,
        analytic_ok && fit_ok,
        t0,
        format!(
            "fitted slope {slope:.4} +/- {:.4} over {used} r_gamma (want [-0.55, -0.35], >= 4); analytic {analytic:.6}, linear system {general:.6}, exact locus {numeric:.6} (want -0.444 +/- 1e-3)",
            loc.fit.slope_stderr.unwrap_or(f64::NAN)
        ),
    );
}

fn criterion_6(rep: &mut Report, rows: &[TetradBias], t0: Instant) {
    let zero = &rows[0];
    let n0 = zero.stats.n_resolved() as f64;
    let probs: Vec<f64> = zero.histogram.iter().map(|&c| c as f64 / n0).collect();
    let uniform = probs.iter().all(|p| (p - 0.25).abs() <= 0.03);
    let b_top = rows.last().unwrap().bias;
    let in_range = (3.0..=5.0).contains(&b_top);
    // Delta-method standard error of a count ratio d/a.
    let se = |r: &TetradBias| {
        let a = (r.histogram[0] + r.histogram[3]) as f64;
        let d = (r.histogram[1] + r.histogram[2]) as f64;
        r.bias * (1.0 / a + 1.0 / d).sqrt()
    };
    let monotone = rows.windows(2).all(|w| w[1].bias >= w[0].bias - 3.0 * (se(&w[0]).powi(2) + se(&w[1]).powi(2)).sqrt());
    let bs: Vec<f64> = rows.iter().map(|r| r.bias).collect();
    rep.line(
        6,
        uniform && in_range && monotone,
        t0,
        format!(
            "alpha=0 state probs {probs:.3?} (0.25 +/- 0.03): {uniform}; B(alpha=0.1) {b_top:.3} in [3, 5]: {in_range}; B over alpha {bs:.3?} non-decreasing within 3 se: {monotone}"
        ),
    );
}

fn criterion_7(rep: &mut Report, stream: &Stream, t0: Instant) {
    let chi = chi_square_uniformity(&stream.samples).unwrap();
    let mi = max_pairwise_mutual_information(&stream.samples).unwrap();
    rep.line(
        7,
        chi.p_value > 0.01 && mi < 0.01 && stream.samples.len() == 2000,
        t0,
        format!(
            "5-dyad chain, {} samples: chi-square stat {:.2}, p {:.4} (want > 0.01); max pairwise MI {mi:.5} bits (want < 0.01)",
            stream.samples.len(),
            chi.statistic,
            chi.p_value
        ),
    );
}

fn criterion_8(rep: &mut Report, outcomes: &[dyadsim_core::dynamics::TrialOutcome], t0: Instant) {
    let bits: Vec<Option<u8>> = outcomes.iter().map(|o| o.bits.as_ref().map(|b| b[0])).collect();
    let n_same = bits.iter().filter(|b| **b == bits[0] && b.is_some()).count();
    rep.line(
        8,
        n_same == 200,
        t0,
        format!("site 1 pumped 1.05x, 200 trials: {n_same}/200 in orientation {:?}", bits[0]),
    );
}

fn criterion_9(rep: &mut Report, pos: &RegionSweep, neg: &RegionSweep, t0: Instant) {
    let fig1c = pos
        .points
        .iter()
        .find(|c| (c.point.g - G).abs() < 1e-12 && (c.point.abs_j - J).abs() < 1e-12 && (c.point.xi - XI).abs() < 1e-12)
        .map(|c| c.verdict);
    let symmetric = pos.points.len() == neg.points.len()
        && pos.points.iter().zip(&neg.points).all(|(a, b)| a.verdict == b.verdict);
    let n_asym = pos.points.iter().filter(|c| c.verdict == Verdict::Asymmetric).count();
    rep.line(
        9,
        fig1c == Some(Verdict::Asymmetric) && pos.max_exits_per_column <= 1 && symmetric,
        t0,
        format!(
            "10x10x{} grid: (J=0.55, g=0.5, xi=5/3) -> {fig1c:?}; max asymmetric exits per xi column {} (want <= 1); J-sign verdicts identical: {symmetric}; {n_asym}/{} asymmetric",
            pos.points.len() / 100,
            pos.max_exits_per_column,
            pos.points.len()
        ),
    );
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

fn main() {
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let narrow = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut rep = Report { failed: Vec::new() };
    let mut fingerprints: Vec<(&str, String)> = Vec::new();

    wide.install(|| {
        let t = Instant::now();
        let single = campaign_single_site();
        criterion_1(&mut rep, &single, t);
        fingerprints.push(("single_site", json(&single)));

        criterion_2(&mut rep);
        criterion_3(&mut rep);

        let t = Instant::now();
        let coin = campaign_fair_coin();
        criterion_4(&mut rep, &coin, t);
        fingerprints.push(("fair_coin", json(&coin)));

        let t = Instant::now();
        let loc = campaign_locus();
        criterion_5(&mut rep, &loc, t);
        fingerprints.push(("locus", json(&loc)));

        let t = Instant::now();
        let tet = campaign_tetrad();
        criterion_6(&mut rep, &tet, t);
        fingerprints.push(("tetrad", json(&tet)));

        let t = Instant::now();
        let stream = campaign_chain();
        criterion_7(&mut rep, &stream, t);
        fingerprints.push(("chain", json(&stream)));

        let t = Instant::now();
        let pin = campaign_pinning();
        criterion_8(&mut rep, &pin, t);
        fingerprints.push(("pinning", json(&pin)));

        let t = Instant::now();
        let pos = campaign_region(1.0);
        let neg = campaign_region(-1.0);
        criterion_9(&mut rep, &pos, &neg, t);
        fingerprints.push(("region", json(&pos)));
    });

    let t = Instant::now();
    let rerun: Vec<(&str, String)> = narrow.install(|| {
        vec![
            ("single_site", json(&campaign_single_site())),
            ("fair_coin", json(&campaign_fair_coin())),
            ("locus", json(&campaign_locus())),
            ("tetrad", json(&campaign_tetrad())),
            ("chain", json(&campaign_chain())),
            ("pinning", json(&campaign_pinning())),
            ("region", json(&campaign_region(1.0))),
        ]
    });
    let differing: Vec<&str> =
        fingerprints.iter().zip(&rerun).filter(|(a, b)| a != b).map(|(a, _)| a.0).collect();
    rep.line(
        10,
        differing.is_empty() && fingerprints.len() == rerun.len(),
        t,
        format!("{} campaigns re-run with 1 thread vs 4: differing {differing:?}", rerun.len()),
    );

    if rep.failed.is_empty() {
        println!("acceptance: all 10 criteria PASS");
    } else {
        println!("acceptance: FAILED criteria {:?}", rep.failed);
        std::process::exit(1);
    }
}
