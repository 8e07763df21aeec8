//! Subcommand implementations: each resolves its configuration into library
//! calls and emits self-describing output files (see `output`).

use std::path::{Path, PathBuf};

use defectline::estimators::ScanConfig;
use defectline::geometry::{
    cone_renewals_on_line, conditioned_cluster_samples, line_interaction_stats,
};
use defectline::lattice::{LatticeBox, PercParams};
use defectline::renewal::{
    first_return_law, local_time_tail_probe, pinning_free_energy, renewal_limit_check,
};
use defectline::rng::CounterRng;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{opt_f64, write_file};

fn scan_config(cfg: &ExperimentConfig) -> ScanConfig {
    let model = cfg.model.as_ref().expect("lattice subcommand has a model");
    let geometry = cfg.geometry.as_ref().expect("and a geometry block");
    ScanConfig {
        d: model.d,
        p: model.p,
        n_values: geometry.n.clone(),
        half_width: geometry.half_width,
        replicas: cfg.run.replicas.expect("and a replica budget"),
        seed: cfg.run.seed,
    }
}

/// One row per (p, p_line, n): raw tallies and the frequency estimate.
pub fn connectivity(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let model = cfg.model.as_ref().unwrap();
    let scan = scan_config(cfg);
    let grid: Vec<f64> = match (&model.p_line, &model.p_line_grid) {
        (Some(v), None) => vec![*v],
        (None, Some(g)) => g.clone(),
        _ => unreachable!("config layer enforces exactly one"),
    };
    let mut lines = vec!["p,p_line,n,replicas,hits,phat,stderr,seed".to_string()];
    for &p_line in &grid {
        for point in defectline::estimators::connectivity_series(&scan, p_line)? {
            lines.push(format!(
                "{},{},{},{},{},{},{},{}",
                model.p,
                p_line,
                point.n,
                point.replicas,
                point.hits,
                point.estimate.value,
                point.estimate.stderr,
                scan.seed_for(point.n),
            ));
        }
    }
    Ok(write_file(out, "connectivity.csv", cfg, &lines)?)
}

/// Decay-rate scan: one summary row per grid point; failed fits keep their
/// row with `nan` fields so the scan stays rectangular.
pub fn xi_scan(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let model = cfg.model.as_ref().unwrap();
    let scan = scan_config(cfg);
    let grid = model.p_line_grid.as_ref().unwrap();
    let mut lines = vec!["p_line,xi_hat,xi_se,kappa_hat,kappa_se".to_string()];
    for row in defectline::estimators::xi_scan(&scan, grid) {
        let (xi, xi_se, kappa, kappa_se) = match &row.fit {
            Ok(fit) => (
                Some(fit.xi_hat),
                Some(fit.xi_se),
                Some(fit.kappa_hat),
                Some(fit.kappa_se),
            ),
            Err(_) => (None, None, None, None),
        };
        lines.push(format!(
            "{},{},{},{},{}",
            row.p_line,
            opt_f64(xi),
            opt_f64(xi_se),
            opt_f64(kappa),
            opt_f64(kappa_se),
        ));
    }
    Ok(write_file(out, "xi_scan.csv", cfg, &lines)?)
}

/// Decay-rate gap above the homogeneous point, with censoring flags; the
/// fitted small-gap slope is printed to stdout as a JSON summary.
pub fn gap_curve(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let model = cfg.model.as_ref().unwrap();
    let scan = scan_config(cfg);
    let grid = model.p_line_grid.as_ref().unwrap();
    let curve = defectline::estimators::gap_curve(&scan, grid)?;
    let mut lines = vec!["p_line,delta,gap,joint_se,censored".to_string()];
    for row in &curve.rows {
        lines.push(format!(
            "{},{},{},{},{}",
            row.p_line, row.delta, row.gap, row.joint_se, row.censored
        ));
    }
    let path = write_file(out, "gap_curve.csv", cfg, &lines)?;
    println!(
        "{}",
        serde_json::json!({
            "base_xi": curve.base.xi_hat,
            "base_xi_se": curve.base.xi_se,
            "slope": curve.slope,
        })
    );
    Ok(path)
}

/// Polynomial-correction exponent at a single line probability, with its
/// 95% interval appended to the scan-summary schema.
pub fn prefactor(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let model = cfg.model.as_ref().unwrap();
    let scan = scan_config(cfg);
    let p_line = model.p_line.unwrap();
    let report = defectline::estimators::prefactor_exponent(&scan, p_line)?;
    let lines = vec![
        "p_line,xi_hat,xi_se,kappa_hat,kappa_se,ci_lo,ci_hi".to_string(),
        format!(
            "{},{},{},{},{},{},{}",
            p_line,
            report.fit.xi_hat,
            report.fit.xi_se,
            report.kappa_hat,
            report.kappa_se,
            report.ci.0,
            report.ci.1
        ),
    ];
    Ok(write_file(out, "prefactor.csv", cfg, &lines)?)
}

/// Conditioned-cluster geometry: one JSON record per accepted sample
/// (cluster summary, renewal positions, line-interaction statistics), plus a
/// per-length acceptance summary on stdout.
pub fn geometry(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let model = cfg.model.as_ref().unwrap();
    let geom = cfg.geometry.as_ref().unwrap();
    let params = PercParams::new(model.d, model.p, model.p_line.unwrap())?;
    let samples = cfg.run.samples.unwrap() as usize;
    let max_attempts = cfg.run.max_attempts.unwrap();
    let root = CounterRng::new(cfg.run.seed);
    let mut lines = Vec::new();
    for &n in &geom.n {
        let w = geom
            .half_width
            .unwrap_or_else(|| defectline::lattice::default_half_width(n));
        let bbox = LatticeBox::new(model.d, n, w)?;
        let seed_n = root.value_at(n as u64);
        let batch = conditioned_cluster_samples(&bbox, &params, samples, seed_n, max_attempts)?;
        for sample in &batch.samples {
            let config = sample.config(&bbox, &params);
            let renewals = cone_renewals_on_line(&bbox, &sample.cluster)?;
            let stats = line_interaction_stats(&sample.cluster, &config, &params);
            // Vertex ids sort by first coordinate, so the bounding columns
            // are the ends of the sorted vertex list.
            let min_x = bbox.x_of(sample.cluster.vertices[0]);
            let max_x = bbox.x_of(*sample.cluster.vertices.last().unwrap());
            let record = serde_json::json!({
                "n": n,
                "replica": sample.replica,
                "config_seed": sample.config_seed,
                "cluster": {
                    "vertices": sample.cluster.vertices.len(),
                    "edges": sample.cluster.edges.len(),
                    "min_x": min_x,
                    "max_x": max_x,
                },
                "renewals": renewals.iter().map(|&z| bbox.x_of(z)).collect::<Vec<u32>>(),
                "line_stats": {
                    "edges_on_line": stats.edges_on_line,
                    "closed_boundary_on_line": stats.closed_boundary_on_line,
                    "interaction": stats.interaction,
                    "span": stats.span,
                },
            });
            lines.push(record.to_string());
        }
        println!(
            "{}",
            serde_json::json!({
                "n": n,
                "samples": batch.acceptance.hits,
                "attempts": batch.acceptance.trials,
                "acceptance": batch.acceptance.frequency(),
            })
        );
    }
    Ok(write_file(out, "geometry.jsonl", cfg, &lines)?)
}

/// Pinning free energy over the requested strengths; optionally a local-time
/// deviation probe into a second file.
pub fn pinning(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let pin = cfg.pinning.as_ref().unwrap();
    let law = first_return_law(pin.d, pin.nmax as usize)?;
    let mut lines = vec!["eps,f_value,bracket_lo,bracket_hi,nmax,tail_err".to_string()];
    for &eps in &pin.eps {
        let fe = pinning_free_energy(eps, &law)?;
        lines.push(format!(
            "{},{},{},{},{},{}",
            fe.epsilon, fe.f_value, fe.bracket.0, fe.bracket.1, fe.n_max, fe.tail_error
        ));
    }
    let mut written = vec![write_file(out, "pinning.csv", cfg, &lines)?];
    if let Some(probe) = &cfg.probe {
        let mut lines = vec!["delta,N,phat,stderr,rate".to_string()];
        for &delta in &probe.delta {
            let res = local_time_tail_probe(
                pin.d,
                delta,
                probe.n as usize,
                probe.replicas,
                cfg.run.seed,
            )?;
            lines.push(format!(
                "{},{},{},{},{}",
                res.delta,
                res.n,
                res.joint.value,
                res.joint.stderr,
                opt_f64(res.rate),
            ));
        }
        written.push(write_file(out, "probe.csv", cfg, &lines)?);
    }
    Ok(written)
}

/// Named demonstration kernels for the renewal limit theorem.
pub fn demo_kernel(name: &str) -> Vec<f64> {
    match name {
        // Geometric weights: the scaled renewal sequence is exactly 1/2 from
        // the first step on. 64 terms leave a tail below 1e-19.
        "geometric" => (1..=64).map(|k| 0.5f64.powi(k)).collect(),
        // Heavy-ish cubic weights (sum > 1, so the root sits below 1);
        // truncation at 4096 leaves a tail below 3e-8 of the mass, far below
        // the convergence deviations being demonstrated.
        "cubic" => (1..=4096).map(|k: i32| f64::from(k).powi(-3)).collect(),
        other => unreachable!("config layer rejects kernel {other}"),
    }
}

pub fn renewal_demo(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let ren = cfg.renewal.as_ref().unwrap();
    let mut lines = vec!["kernel,horizon,root,mean,limit,deviation".to_string()];
    for name in &ren.kernels {
        let b = demo_kernel(name);
        let check = renewal_limit_check(&b, ren.horizon as usize)?;
        lines.push(format!(
            "{},{},{},{},{},{}",
            name,
            ren.horizon,
            check.root.r,
            check.root.mean,
            check.limit,
            check.deviation()
        ));
    }
    Ok(write_file(out, "renewal_demo.csv", cfg, &lines)?)
}
