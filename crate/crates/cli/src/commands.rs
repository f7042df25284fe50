use std::collections::BTreeMap;

use dyadsim_core::dynamics::run_trial;
use dyadsim_core::ensemble::{
    centered_grid, critical_locus, measure_calibration_curve, region_sweep, run_trials, tetrad_bias,
    EnsembleStats, Verdict,
};
use dyadsim_core::perturbation::{
    analytic_calibration_curve, analytic_locus_slope, closed_form_corrections, equal_occupancy_state,
    numerical_calibration_curve, solve_first_order,
};
use dyadsim_core::rng::{generate_stream, max_pairwise_mutual_information, pack_bits, test_suite, Stream};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{bit_string, num, opt, OutDir};
use crate::CliError;

pub fn dispatch(name: &str, cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    match name {
        "trial" => trial(cfg, out),
        "ensemble" => ensemble(cfg, out),
        "calibrate" => calibrate(cfg, out),
        "locus" => locus(cfg, out),
        "tetrad" => tetrad(cfg, out),
        "region" => region(cfg, out),
        "chain" => chain(cfg, out),
        "rng" => rng(cfg, out),
        "perturb" => perturb(cfg, out),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

fn trial(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let net = cfg.network()?;
    let o = run_trial(&net.config, &net.dyads, &cfg.noise)?;
    out.write_csv(
        "sites.csv",
        &["site", "gamma", "g", "density", "relative_phase"],
        net.config.sites.iter().enumerate().map(|(i, s)| {
            vec![
                i.to_string(),
                num(s.gamma),
                num(s.g),
                num(o.final_densities[i]),
                num(o.final_relative_phases[i]),
            ]
        }),
    )?;
    println!("{}", serde_json::to_string(&json!({"kind": o.kind, "bits": o.bits, "mu": o.mu})).unwrap());
    out.write_json("summary.json", &o)
}

fn histogram_rows(stats: &EnsembleStats) -> Vec<Vec<String>> {
    let n = stats.n_resolved().max(1) as f64;
    stats
        .histogram()
        .into_iter()
        .enumerate()
        .map(|(s, c)| {
            let bits = dyadsim_core::rng::decode(s as u64, stats.n_dyads).unwrap_or_default();
            vec![s.to_string(), bit_string(&bits), c.to_string(), num(c as f64 / n)]
        })
        .collect()
}

fn ensemble(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let net = cfg.network()?;
    if cfg.campaign.trials == 0 {
        return Err(CliError::Config("campaign.trials must be >= 1".into()));
    }
    let outcomes = run_trials(&net.config, &net.dyads, cfg.campaign.trials, &cfg.noise)?;
    out.write_csv(
        "trials.csv",
        &["trial", "seed", "kind", "state", "bits", "min_contrast", "mu", "elapsed_t"],
        outcomes.iter().enumerate().map(|(k, o)| {
            let min_c = o.contrasts.iter().copied().fold(f64::INFINITY, f64::min);
            vec![
                k.to_string(),
                o.seed.to_string(),
                serde_json::to_value(o.kind).unwrap().as_str().unwrap().to_string(),
                o.bits.as_ref().map(|b| dyadsim_core::ensemble::state_value(b).to_string()).unwrap_or_default(),
                o.bits.as_deref().map(bit_string).unwrap_or_default(),
                if min_c.is_finite() { num(min_c) } else { String::new() },
                opt(o.mu),
                num(o.elapsed_t),
            ]
        }),
    )?;
    let stats = EnsembleStats::from_outcomes(net.dyads.len(), &outcomes);
    if net.dyads.len() <= 16 {
        out.write_csv("histogram.csv", &["state", "bits", "count", "p"], histogram_rows(&stats))?;
    }
    println!(
        "p1 = {:?}  sigma = {:?}  resolved {}/{}",
        stats.p1_per_dyad,
        stats.sigma_per_dyad,
        stats.n_resolved(),
        stats.n_trials
    );
    out.write_json("summary.json", &stats)
}

fn calibrate(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let params = cfg.dyad_params()?;
    let c = &cfg.campaign;
    let grid = c
        .r_g_grid
        .clone()
        .unwrap_or_else(|| centered_grid(params, c.r_gamma, c.half_width, c.grid_points));
    let curve = measure_calibration_curve(params, cfg.integration, c.r_gamma, &grid, c.trials, &cfg.noise)?;
    out.write_csv(
        "curve.csv",
        &["r_g", "p1", "sigma", "stderr", "n_resolved", "n_unresolved", "n_nonstationary"],
        curve.points.iter().map(|p| {
            vec![
                num(p.r_g),
                num(p.p1),
                num(p.sigma),
                num(p.stderr),
                p.n_resolved.to_string(),
                p.n_unresolved.to_string(),
                p.n_nonstationary.to_string(),
            ]
        }),
    )?;
    let critical = curve.critical_points();
    let summary = match &critical {
        Ok(r) => json!({"r_gamma": c.r_gamma, "critical": r}),
        Err(e) => json!({"r_gamma": c.r_gamma, "critical": null, "error": {"kind": e.kind(), "message": e.to_string()}}),
    };
    out.write_json("summary.json", &summary)?;
    let r = critical?;
    println!("r_g* (p1 = 0.5) = {:.6}  r_g* (sigma max) = {:?}", r.r_g_star_p, r.r_g_star_sigma);
    Ok(())
}

fn locus(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let params = cfg.dyad_params()?;
    let c = &cfg.campaign;
    let loc = critical_locus(
        params,
        cfg.integration,
        &c.r_gammas,
        c.half_width,
        c.grid_points,
        c.trials,
        &cfg.noise,
    )?;
    out.write_csv(
        "locus.csv",
        &["r_gamma", "r_g_star_p", "r_g_star_sigma", "non_unique"],
        loc.results
            .iter()
            .map(|r| vec![num(r.r_gamma), num(r.r_g_star_p), opt(r.r_g_star_sigma), r.non_unique.to_string()]),
    )?;
    out.write_csv(
        "curves.csv",
        &["r_gamma", "r_g", "p1", "sigma"],
        loc.results.iter().flat_map(|r| {
            r.p1_curve
                .iter()
                .zip(&r.sigma_curve)
                .map(|(p, s)| vec![num(r.r_gamma), num(p.0), num(p.1), num(s.1)])
                .collect::<Vec<_>>()
        }),
    )?;
    let analytic = analytic_locus_slope(params);
    println!("fitted slope {:.4} (analytic {:.4})", loc.fit.slope, analytic);
    out.write_json(
        "summary.json",
        &json!({"fit": loc.fit, "sigma_fit": loc.sigma_fit, "analytic_slope": analytic, "dropped": loc.dropped}),
    )
}

fn tetrad(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let j = cfg.model.j.ok_or_else(|| CliError::Config("model.J is required".into()))?;
    let shape = cfg.model.tetrad.map(|t| t.shape).unwrap_or(cfg.campaign.shape);
    let rows = tetrad_bias(
        j,
        &cfg.campaign.alphas,
        shape,
        cfg.base_site()?,
        cfg.model.xi,
        cfg.integration,
        cfg.campaign.trials,
        &cfg.noise,
    )?;
    out.write_csv(
        "bias.csv",
        &["alpha", "n00", "n01", "n10", "n11", "bias", "raw_ratio", "infinite", "n_unresolved", "n_nonstationary"],
        rows.iter().map(|r| {
            let mut v = vec![num(r.alpha)];
            v.extend(r.histogram.iter().map(|c| c.to_string()));
            v.extend([
                num(r.bias),
                num(r.raw_ratio),
                r.infinite.to_string(),
                r.stats.n_unresolved.to_string(),
                r.stats.n_nonstationary.to_string(),
            ]);
            v
        }),
    )?;
    for r in &rows {
        println!("alpha {:<6} hist {:?} B {:.3}", r.alpha, r.histogram, r.bias);
    }
    out.write_json("summary.json", &rows)
}

fn region(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let sign = cfg.model.j.unwrap_or(1.0);
    let c = &cfg.campaign;
    let sweep = region_sweep(cfg.model.gamma, &c.region, sign, cfg.integration, c.seeds_per_point, &cfg.noise)?;
    let label = |v: Verdict| serde_json::to_value(v).unwrap().as_str().unwrap().to_string();
    out.write_csv(
        "region.csv",
        &["gamma", "g", "abs_J", "xi", "verdict", "contrast", "trials_run"],
        sweep.points.iter().map(|p| {
            vec![
                num(p.point.gamma),
                num(p.point.g),
                num(p.point.abs_j),
                num(p.point.xi),
                label(p.verdict),
                num(p.contrast),
                p.trials_run.to_string(),
            ]
        }),
    )?;
    out.write_csv(
        "boundary.csv",
        &["g", "abs_J", "xi_below", "xi_above", "xi_mid"],
        sweep
            .boundary
            .iter()
            .map(|b| vec![num(b.g), num(b.abs_j), num(b.xi_below), num(b.xi_above), num(b.xi_mid)]),
    )?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in &sweep.points {
        *counts.entry(label(p.verdict)).or_default() += 1;
    }
    println!("verdicts {counts:?}; boundary points {}", sweep.boundary.len());
    out.write_json(
        "summary.json",
        &json!({
            "gamma": sweep.gamma,
            "verdict_counts": counts,
            "boundary_points": sweep.boundary.len(),
            "max_exits_per_column": sweep.max_exits_per_column,
        }),
    )
}

fn stream_tests(stream: &Stream) -> Value {
    let tests = match test_suite(&stream.samples) {
        Ok(reports) => json!(reports),
        Err(e) => json!({"skipped": e.to_string()}),
    };
    let mi = max_pairwise_mutual_information(&stream.samples).ok();
    json!({
        "samples": stream.samples.len(),
        "attempted": stream.attempted,
        "unresolved": stream.unresolved,
        "nonstationary": stream.nonstationary,
        "tests": tests,
        "max_pairwise_mutual_information_bits": mi,
    })
}

fn chain(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let net = cfg.network()?;
    if net.dyads.len() > 16 {
        return Err(CliError::Config("histograms are limited to 16 dyads; use `rng` for longer chains".into()));
    }
    let stream = generate_stream(&net, cfg.campaign.samples, &cfg.noise)?;
    let mut counts = vec![0usize; 1 << net.dyads.len()];
    for s in &stream.samples {
        counts[s.value as usize] += 1;
    }
    let n = stream.samples.len().max(1) as f64;
    out.write_csv(
        "histogram.csv",
        &["state", "bits", "count", "p"],
        counts.iter().enumerate().map(|(s, &c)| {
            let bits = dyadsim_core::rng::decode(s as u64, net.dyads.len()).unwrap_or_default();
            vec![s.to_string(), bit_string(&bits), c.to_string(), num(c as f64 / n)]
        }),
    )?;
    let summary = stream_tests(&stream);
    println!("{}", serde_json::to_string(&summary["tests"]).unwrap());
    out.write_json("summary.json", &summary)
}

fn rng(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let net = cfg.network()?;
    let stream = generate_stream(&net, cfg.campaign.samples, &cfg.noise)?;
    out.write_csv(
        "samples.csv",
        &["sample", "seed", "value", "bits"],
        stream
            .samples
            .iter()
            .enumerate()
            .map(|(k, s)| vec![k.to_string(), s.seed.to_string(), s.value.to_string(), bit_string(&s.bits)]),
    )?;
    out.write_bytes("stream.bin", &pack_bits(&stream.samples))?;
    for s in stream.samples.iter().take(4) {
        println!("{} {}", bit_string(&s.bits), s.value);
    }
    out.write_json("summary.json", &stream_tests(&stream))
}

fn perturb(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let params = cfg.dyad_params()?;
    let base = equal_occupancy_state(params)?;
    let closed = closed_form_corrections(params)?;
    let general = solve_first_order(&base)?;
    println!("equal occupancy: a0 = {:.8}  theta0 = {:.8}  mu0 = {:.8}", base.a1, base.theta, base.mu);
    println!(
        "closed form:     gamma1 = {:.8}  theta1 = {:.8}  mu1 = {:.8}  a1 = {:.8}",
        closed.gamma1, closed.theta1, closed.mu1, closed.a1_1
    );
    println!(
        "linear system:   gamma1 = {:.8}  theta1 = {:.8}  mu1 = {:.8}  a1 = {:.8}",
        general.gamma1, general.theta1, general.mu1, general.a1_1
    );
    println!("slope d r_gamma / d r_g = {:.8}", analytic_locus_slope(params));

    let eps: Vec<f64> = cfg.campaign.epsilons.clone();
    let mut summary = json!({
        "params": params,
        "base": base,
        "closed_form": closed,
        "first_order": general,
        "slope": analytic_locus_slope(params),
    });
    if params.g != 0.0 && !eps.is_empty() {
        let analytic = analytic_calibration_curve(params, &eps)?;
        let numerical = numerical_calibration_curve(params, &eps);
        if let Err(e) = &numerical {
            summary["numerical_error"] = json!(e.to_string());
        }
        out.write_csv(
            "curve.csv",
            &["epsilon", "r_g", "r_gamma_analytic", "r_gamma_numerical", "outside_validity"],
            analytic.iter().enumerate().map(|(k, a)| {
                let n = numerical.as_ref().ok().map(|v| v[k].r_gamma);
                vec![num(a.epsilon), num(a.r_g), num(a.r_gamma), opt(n), a.outside_validity.to_string()]
            }),
        )?;
    }
    out.write_json("summary.json", &summary)
}
