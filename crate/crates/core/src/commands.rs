//! One function per CLI subcommand: validate, compute, write CSVs and the
//! resolved configuration into the output directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bridge::{self, CoarseState, LiftingPolicy};
use crate::config::RunConfig;
use crate::cpi::{self, Termination};
use crate::error::{Error, Result};
use crate::gpc::GpcCoeffs;
use crate::model::CatalyticNetwork;
use crate::oracle::{self, ReferenceConfig};
use crate::output::{self, fmt_f64, Table};
use crate::rng::{RngStream, StreamKey};
use crate::ssa::{self, FineState};
use crate::steady::continuation::{self, classify, dominant_multiplier, BranchEnd, BranchPoint, ContinuationMode};
use crate::steady::fixed_point::{self, FixedPointProblem};
use crate::steady::newton::{newton_krylov, NewtonOptions};
use crate::steady::ContinuationOptions;

fn prepare(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join("resolved_config.toml");
    std::fs::write(&path, cfg.to_toml())?;
    Ok(path)
}

fn table(cfg: &RunConfig, columns: Vec<String>) -> Table {
    Table::new(cfg.seed, &cfg.hash(), &columns)
}

/// Ensemble of independent SSA runs at one β: mean coverage and its
/// standard error over replicas.
pub fn cmd_ssa(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate_common()?;
    let s = &cfg.ssa;
    if s.replicas == 0 {
        return Err(Error::config("ssa.replicas", "need at least one replica"));
    }
    if !(s.dt_obs > 0.0) {
        return Err(Error::config("ssa.dt_obs", format!("must be positive, got {}", s.dt_obs)));
    }
    if !(s.t_end >= 0.0) {
        return Err(Error::config("ssa.t_end", format!("must be >= 0, got {}", s.t_end)));
    }
    if !(s.beta > 0.0) {
        return Err(Error::config("ssa.beta", format!("must be positive, got {}", s.beta)));
    }
    let theta = CoarseState(s.initial);
    theta
        .validate()
        .map_err(|e| Error::config("ssa.initial", e.to_string()))?;
    let resolved = prepare(cfg, out)?;

    let n_obs = (s.t_end / s.dt_obs + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n_obs).map(|k| k as f64 * s.dt_obs).collect();
    let network = CatalyticNetwork::new(cfg.kinetics, s.beta);
    let n_tot = cfg.kinetics.n_tot;
    let runs: Vec<ssa::SampledTrajectory> = (0..s.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::from_key(StreamKey::new(cfg.seed, 0, 0, r as u64));
            let counts = bridge::lift_one(&theta, n_tot, LiftingPolicy::Multinomial, &mut rng);
            ssa::simulate_sampled(&FineState::new(counts.to_vec(), 0.0), &times, &network, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut cols = vec!["t".to_string()];
    cols.extend(output::per_species("mean"));
    cols.extend(output::per_species("se"));
    cols.push("replicas".into());
    let mut tab = table(cfg, cols);
    let r = s.replicas as f64;
    for (k, &t) in times.iter().enumerate() {
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for run in &runs {
            for c in 0..3 {
                let v = run.snapshots[k].counts[c] as f64 / n_tot as f64;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        let mean = sum.map(|v| v / r);
        let se: Vec<f64> = (0..3)
            .map(|c| {
                if s.replicas < 2 {
                    f64::NAN
                } else {
                    (((sq[c] - r * mean[c] * mean[c]) / (r - 1.0)).max(0.0) / r).sqrt()
                }
            })
            .collect();
        let mut row = vec![fmt_f64(t)];
        row.extend(mean.iter().map(|&v| fmt_f64(v)));
        row.extend(se.iter().map(|&v| fmt_f64(v)));
        row.push(s.replicas.to_string());
        tab.row(&row);
    }
    let path = out.join("ssa.csv");
    tab.write(&path)?;
    Ok(vec![resolved, path])
}

fn trajectory_header(order: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "segment".to_string()];
    cols.extend(output::coeff_header(order));
    cols
}

fn trajectory_row(t: f64, segment: &str, c: &GpcCoeffs) -> Vec<String> {
    let mut row = vec![fmt_f64(t), segment.to_string()];
    row.extend(output::coeff_cells(c));
    row
}

/// Coarse projective integration; writes the trajectory and per-burst
/// diagnostics.
pub fn cmd_cpi(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.cpi.validate()?;
    let c0 = cfg.initial.coeffs(cfg.cpi.order, "initial")?;
    let resolved = prepare(cfg, out)?;
    let traj = cpi::run_cpi(&cfg.cpi, &cfg.kinetics, &cfg.beta, &c0, cfg.seed)?;

    let mut tab = table(cfg, trajectory_header(cfg.cpi.order));
    for r in &traj.records {
        tab.row(&trajectory_row(r.t, r.segment.as_str(), &r.coeffs));
    }
    let path = out.join("cpi.csv");
    tab.write(&path)?;

    let mut cols: Vec<String> = [
        "t_start",
        "residual_norm",
        "residual_ratio",
        "clamp_max",
        "clamped_members",
        "events",
        "frozen_replicas",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(output::coeff_columns(cfg.cpi.order).into_iter().map(|c| format!("slope_{c}")));
    let mut diag = table(cfg, cols);
    for d in &traj.diagnostics {
        let mut row = vec![
            fmt_f64(d.t_start),
            fmt_f64(d.residual_norm),
            fmt_f64(d.residual_ratio),
            fmt_f64(d.clamp.max_magnitude),
            d.clamp.clamped_members.to_string(),
            d.events.to_string(),
            d.frozen_replicas.to_string(),
        ];
        row.extend(d.slope.to_flat().into_iter().map(fmt_f64));
        diag.row(&row);
    }
    let dpath = out.join("cpi_diagnostics.csv");
    diag.write(&dpath)?;

    if let Termination::Aborted(why) = traj.termination {
        return Err(Error::Numerical(format!("projective integration aborted: {why}")));
    }
    Ok(vec![resolved, path, dpath])
}

/// Mean-field reference at the times a completed CPI run would record, in
/// the same schema as `cmd_cpi`.
pub fn cmd_reference(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate_common()?;
    cfg.cpi.validate()?;
    if !(cfg.reference.dt > 0.0) {
        return Err(Error::config("reference.dt", format!("must be positive, got {}", cfg.reference.dt)));
    }
    let order = cfg.cpi.order;
    cfg.reference
        .xi
        .validate(order)
        .map_err(|e| Error::config("reference.xi", e.to_string()))?;
    let c0 = cfg.initial.coeffs(order, "initial")?;
    let resolved = prepare(cfg, out)?;
    let times: Vec<f64> = cpi::record_schedule(&cfg.cpi).into_iter().map(|(t, _)| t).collect();
    let traj = oracle::reference_gpc_trajectory(
        &ReferenceConfig {
            params: cfg.kinetics,
            beta: cfg.beta,
            initial: c0,
            xi: cfg.reference.xi,
            seed: cfg.seed,
            dt: cfg.reference.dt,
        },
        &times,
    )?;
    let mut tab = table(cfg, trajectory_header(order));
    for (t, c) in &traj {
        tab.row(&trajectory_row(*t, "reference", c));
    }
    let path = out.join("reference.csv");
    tab.write(&path)?;
    Ok(vec![resolved, path])
}

fn problem_of(cfg: &RunConfig) -> Result<FixedPointProblem> {
    let fp = &cfg.fixed_point;
    let problem = FixedPointProblem {
        horizon: fp.horizon,
        order: fp.order,
        ensemble: fp.ensemble,
        beta: cfg.beta,
        params: cfg.kinetics,
        master: cfg.seed,
        epoch: 0,
    };
    problem.validate()?;
    if fp.max_iter == 0 {
        return Err(Error::config("fixed_point.max_iter", "must be at least 1"));
    }
    Ok(problem)
}

fn newton_options(cfg: &RunConfig, problem: &FixedPointProblem, x0: &GpcCoeffs) -> Result<NewtonOptions> {
    let fp = &cfg.fixed_point;
    let mut opts = NewtonOptions::for_problem(problem);
    opts.max_iter = fp.max_iter;
    if let Some(e) = fp.eps0 {
        opts.eps0 = e;
    }
    match fp.tol_out {
        Some(t) => {
            opts.tol_out = t;
            opts.accept_tol = t;
        }
        None if problem.is_stochastic() => {
            if fp.noise_seeds < 2 {
                return Err(Error::config("fixed_point.noise_seeds", "need at least 2 seeds"));
            }
            let seeds: Vec<u64> = (1..=fp.noise_seeds as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
            let floor = fixed_point::noise_floor(x0, problem, &seeds)?;
            log::info!("measured noise floor {floor:.3e}");
            // The frozen-seed stepper is deterministic, so Newton can go
            // below the floor; stopping at the floor would leave an offset
            // amplified by the slow modes.
            opts.tol_out = 0.1 * floor;
            opts.accept_tol = 3.0 * floor;
        }
        None => {
            opts.tol_out = 1e-8;
            opts.accept_tol = 1e-8;
        }
    }
    Ok(opts)
}

fn branch_header(order: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["branch_point", "mean_beta", "stability", "multiplier", "fold", "residual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(output::coeff_columns(order));
    cols.extend(output::per_species("mean"));
    cols.extend(output::per_species("min"));
    cols.extend(output::per_species("max"));
    cols
}

fn branch_row(index: usize, p: &BranchPoint) -> Vec<String> {
    let mut row = vec![
        index.to_string(),
        fmt_f64(p.mean_beta),
        p.stability.as_str().to_string(),
        fmt_f64(p.multiplier),
        (p.fold as u8).to_string(),
        fmt_f64(p.residual),
    ];
    row.extend(p.coeffs.to_flat().into_iter().map(fmt_f64));
    let (lo, hi) = output::envelope(&p.coeffs);
    row.extend(p.coeffs.row(0).into_iter().map(fmt_f64));
    row.extend(lo.into_iter().map(fmt_f64));
    row.extend(hi.into_iter().map(fmt_f64));
    row
}

fn solve_start(cfg: &RunConfig, problem: &FixedPointProblem) -> Result<(BranchPoint, bool)> {
    let x0 = cfg.fixed_point.initial.coeffs(problem.order, "fixed_point.initial")?;
    let opts = newton_options(cfg, problem, &x0)?;
    let (x, report) = newton_krylov(&x0, problem, &opts)?;
    let mu = dominant_multiplier(&x, problem, opts.eps0)?;
    let point = BranchPoint {
        mean_beta: problem.beta.mean(),
        coeffs: x,
        stability: classify(mu, None, cfg.continuation.dead_band),
        multiplier: mu,
        fold: false,
        newton_iterations: report.iterations,
        residual: report.final_residual(),
    };
    Ok((point, report.converged()))
}

/// Newton-Krylov fixed point of the coarse time-stepper.
pub fn cmd_fixed_point(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate_common()?;
    let problem = problem_of(cfg)?;
    let resolved = prepare(cfg, out)?;
    let (point, converged) = solve_start(cfg, &problem)?;
    let mut tab = table(cfg, branch_header(problem.order));
    tab.row(&branch_row(0, &point));
    let path = out.join("fixed_point.csv");
    tab.write(&path)?;
    if !converged {
        return Err(Error::Numerical(format!(
            "Newton did not converge; residual {:.3e}",
            point.residual
        )));
    }
    Ok(vec![resolved, path])
}

/// Fixed point followed by pseudo-arclength continuation in ⟨β⟩.
pub fn cmd_continuation(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate_common()?;
    let problem = problem_of(cfg)?;
    let c = &cfg.continuation;
    if !(c.beta_min < c.beta_max) {
        return Err(Error::config("continuation.beta_max", "must exceed beta_min"));
    }
    if c.direction == 0.0 {
        return Err(Error::config("continuation.direction", "must be +1 or -1"));
    }
    let resolved = prepare(cfg, out)?;
    let x0 = cfg.fixed_point.initial.coeffs(problem.order, "fixed_point.initial")?;
    let newton = newton_options(cfg, &problem, &x0)?;
    let (start, report) = newton_krylov(&x0, &problem, &newton)?;
    if !report.converged() {
        return Err(Error::Numerical(format!(
            "starting point did not converge; residual {:.3e}",
            report.final_residual()
        )));
    }
    let mut opts = ContinuationOptions::for_problem(&problem);
    opts.mode = if c.natural {
        ContinuationMode::Natural
    } else {
        ContinuationMode::PseudoArclength
    };
    opts.ds0 = c.ds0;
    opts.ds_min = c.ds_min;
    opts.ds_max = c.ds_max;
    opts.max_points = c.max_points;
    opts.direction = c.direction;
    opts.dead_band = c.dead_band;
    opts.newton.tol_out = newton.tol_out;
    opts.newton.accept_tol = newton.accept_tol;
    opts.newton.eps0 = newton.eps0;
    let branch = continuation::continuation(&problem, &start, (c.beta_min, c.beta_max), &opts)?;

    let mut tab = table(cfg, branch_header(problem.order));
    for (k, p) in branch.points.iter().enumerate() {
        tab.row(&branch_row(k, p));
    }
    let path = out.join("continuation.csv");
    tab.write(&path)?;
    let mut folds = table(cfg, vec!["fold".into(), "mean_beta".into()]);
    for (k, f) in branch.folds.iter().enumerate() {
        folds.row(&[k.to_string(), fmt_f64(*f)]);
    }
    let fpath = out.join("folds.csv");
    folds.write(&fpath)?;
    if let BranchEnd::CorrectorFailed(why) = &branch.end {
        log::warn!("branch truncated: {why}");
    }
    Ok(vec![resolved, path, fpath])
}
