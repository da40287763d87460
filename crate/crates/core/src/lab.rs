//! Vanishing-viscosity experiments.
//!
//! Synthesize the feedback once (it takes no viscosity input), build the
//! zero-viscosity reference trajectory, then rerun the propagation at each
//! viscosity in a decreasing sweep and record sup-W2, barycenter deviation,
//! and cost gap per entry, plus log-log fitted convergence rates.

use crate::dynamics::{
    propagate_deterministic, propagate_gaussian, propagate_viscous, sample_initial,
    MeasureSnapshot, MeasureTrajectory, ViscousOptions,
};
use crate::error::{Error, Result};
use crate::matkit::{self, Mat};
use crate::metrics;
use crate::problem::{validate, InitialMeasure, ProblemSpec};
use crate::rng;
use crate::synthesis::{synthesize, AffineFeedback, TimeGrid};
use serde_json::{json, Value};

/// How measures are represented during the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Representation {
    /// Closed-form Gaussian propagation (requires a Gaussian initial measure).
    Gaussian,
    /// Particle ensembles of the given size.
    Empirical { samples: usize },
}

/// Sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Strictly decreasing positive viscosities.
    pub eps_list: Vec<f64>,
    pub grid_steps: usize,
    pub representation: Representation,
    /// Master seed: initial cloud sampling and per-viscosity noise streams
    /// (Empirical), feedback perturbations (optimality checks).
    pub seed: u64,
    /// Number of random perturbations in [`optimality_check`].
    pub perturbations: usize,
}

impl SweepConfig {
    fn check(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::InvalidConfig { msg: "eps list is empty".into() });
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidConfig { msg: "eps values must be positive".into() });
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig { msg: "eps list must be strictly decreasing".into() });
        }
        if self.grid_steps == 0 {
            return Err(Error::InvalidConfig { msg: "grid steps must be positive".into() });
        }
        if let Representation::Empirical { samples } = self.representation {
            if samples == 0 {
                return Err(Error::InvalidConfig { msg: "sample count must be positive".into() });
            }
        }
        Ok(())
    }
}

/// Per-viscosity convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub sup_w2: f64,
    pub sup_barycenter_err: f64,
    pub cost_viscous: f64,
    pub cost_det: f64,
    pub cost_gap: f64,
}

/// Full sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// In the order of `eps_list` (descending viscosity).
    pub rows: Vec<SweepRow>,
    /// Log-log slope of sup_w2 against eps; absent when degenerate.
    pub w2_rate: Option<f64>,
    /// Log-log slope of cost_gap against eps; absent when degenerate.
    pub cost_rate: Option<f64>,
    pub spec_digest: String,
    pub grid_steps: usize,
    pub seed: u64,
    /// Derived noise-stream seeds, one per viscosity (Empirical sweeps).
    pub eps_seeds: Vec<u64>,
}

fn require_valid(spec: &ProblemSpec) -> Result<()> {
    let report = validate(spec)?;
    if !report.ok() {
        return Err(Error::InvalidConfig {
            msg: format!("spec fails validation: {}", report.violations[0].condition),
        });
    }
    Ok(())
}

fn sup_barycenter_err(a: &MeasureTrajectory, b: &MeasureTrajectory) -> f64 {
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| {
            matkit::norm2(&matkit::vec_sub(&metrics::barycenter(x), &metrics::barycenter(y)))
        })
        .fold(0.0_f64, f64::max)
}

/// Run the vanishing-viscosity sweep: one synthesis, one zero-viscosity
/// reference, one viscous propagation per entry, all from the same initial
/// data and per-entry derived noise seeds. Deterministic in (spec, cfg).
pub fn epsilon_sweep(spec: &ProblemSpec, cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.check()?;
    require_valid(spec)?;
    let grid = TimeGrid::new(cfg.grid_steps, spec.horizon);
    // The feedback below is the single control object reused for every
    // viscosity; synthesis accepts no viscosity parameter.
    let (_solution, feedback) = synthesize(spec, grid)?;

    let mut rows = Vec::with_capacity(cfg.eps_list.len());
    let mut eps_seeds = Vec::new();

    match cfg.representation {
        Representation::Gaussian => {
            let init = match &spec.initial {
                InitialMeasure::Gaussian { mean, cov } => {
                    MeasureSnapshot::Gaussian { mean: mean.clone(), cov: cov.clone() }
                }
                _ => {
                    return Err(Error::InvalidConfig {
                        msg: "Gaussian representation requires a Gaussian initial measure".into(),
                    })
                }
            };
            let reference = propagate_gaussian(spec, &feedback, &init, 0.0, grid)?;
            let cost_det = metrics::total_cost(spec, &reference, &feedback)?.total;
            for &eps in &cfg.eps_list {
                let traj = propagate_gaussian(spec, &feedback, &init, eps, grid)?;
                let cost_viscous = metrics::total_cost(spec, &traj, &feedback)?.total;
                rows.push(SweepRow {
                    eps,
                    sup_w2: metrics::sup_w2(&traj, &reference)?,
                    sup_barycenter_err: sup_barycenter_err(&traj, &reference),
                    cost_viscous,
                    cost_det,
                    cost_gap: cost_viscous - cost_det,
                });
            }
        }
        Representation::Empirical { samples } => {
            let init = sample_initial(&spec.initial, samples, cfg.seed)?;
            let reference = propagate_deterministic(spec, &feedback, &init, grid)?;
            let cost_det = metrics::total_cost(spec, &reference, &feedback)?.total;
            for (idx, &eps) in cfg.eps_list.iter().enumerate() {
                let stream = rng::derive_seed(cfg.seed, idx as u64);
                eps_seeds.push(stream);
                let opts = ViscousOptions { eps, samples, seed: stream };
                let traj = propagate_viscous(spec, &feedback, &init, &opts, grid)?;
                let cost_viscous = metrics::total_cost(spec, &traj, &feedback)?.total;
                rows.push(SweepRow {
                    eps,
                    sup_w2: metrics::sup_w2(&traj, &reference)?,
                    sup_barycenter_err: sup_barycenter_err(&traj, &reference),
                    cost_viscous,
                    cost_det,
                    cost_gap: cost_viscous - cost_det,
                });
            }
        }
    }

    let w2s: Vec<f64> = rows.iter().map(|r| r.sup_w2).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.cost_gap).collect();
    let w2_rate = fit_rate(&cfg.eps_list, &w2s).ok();
    let cost_rate = fit_rate(&cfg.eps_list, &gaps).ok();

    Ok(SweepReport {
        rows,
        w2_rate,
        cost_rate,
        spec_digest: spec.digest(),
        grid_steps: cfg.grid_steps,
        seed: cfg.seed,
        eps_seeds,
    })
}

/// Least-squares slope of log err against log eps.
pub fn fit_rate(eps: &[f64], err: &[f64]) -> Result<f64> {
    if eps.len() != err.len() {
        return Err(Error::LengthMismatch { left: eps.len(), right: err.len() });
    }
    if eps.len() < 2 {
        return Err(Error::LengthMismatch { left: eps.len(), right: 2 });
    }
    if err.iter().any(|e| *e <= 1e-15) || eps.iter().any(|e| *e <= 0.0) {
        return Err(Error::DegenerateFit);
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit);
    }
    Ok(sxy / sxx)
}

/// Result of one perturbed-feedback cost comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationOutcome {
    pub id: usize,
    /// Cost excess over the optimal feedback at zero viscosity.
    pub excess_det: f64,
    /// Cost excess at the first viscosity of the sweep configuration.
    pub excess_viscous: f64,
}

/// Magnitude of the constant (ΔK, Δk) shifts used by [`optimality_check`].
pub const PERTURBATION_MAGNITUDE: f64 = 0.1;

/// Compare the optimal feedback against random constant affine
/// perturbations of magnitude 0.1, with Gaussian closed-form cost
/// evaluation at zero viscosity and at the first sweep viscosity.
pub fn optimality_check(spec: &ProblemSpec, cfg: &SweepConfig) -> Result<Vec<PerturbationOutcome>> {
    cfg.check()?;
    require_valid(spec)?;
    let init = match &spec.initial {
        InitialMeasure::Gaussian { mean, cov } => {
            MeasureSnapshot::Gaussian { mean: mean.clone(), cov: cov.clone() }
        }
        _ => {
            return Err(Error::InvalidConfig {
                msg: "optimality check uses the Gaussian closed form; initial measure must be Gaussian"
                    .into(),
            })
        }
    };
    let d = spec.dimension;
    let grid = TimeGrid::new(cfg.grid_steps, spec.horizon);
    let (_, feedback) = synthesize(spec, grid)?;
    let eps = cfg.eps_list[0];

    let cost_at = |fb: &AffineFeedback, eps: f64| -> Result<f64> {
        let traj = propagate_gaussian(spec, fb, &init, eps, grid)?;
        Ok(metrics::total_cost(spec, &traj, fb)?.total)
    };
    let optimal_det = cost_at(&feedback, 0.0)?;
    let optimal_visc = cost_at(&feedback, eps)?;
    let scale = PERTURBATION_MAGNITUDE;

    let mut outcomes = Vec::with_capacity(cfg.perturbations);
    for id in 1..=cfg.perturbations {
        let mut dg = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let u = rng::uniform(cfg.seed, rng::domain::PERTURB, id as u64, 0, (i * d + j) as u64);
                dg.set(i, j, 2.0 * u - 1.0);
            }
        }
        let dk: Vec<f64> = (0..d)
            .map(|i| 2.0 * rng::uniform(cfg.seed, rng::domain::PERTURB, id as u64, 1, i as u64) - 1.0)
            .collect();
        let norm = (dg.frobenius().powi(2) + matkit::dot(&dk, &dk)).sqrt();
        let factor = scale / norm;
        let perturbed = feedback.perturbed(&dg.scale(factor), &matkit::vec_scale(&dk, factor));
        outcomes.push(PerturbationOutcome {
            id,
            excess_det: cost_at(&perturbed, 0.0)? - optimal_det,
            excess_viscous: cost_at(&perturbed, eps)? - optimal_visc,
        });
    }
    Ok(outcomes)
}

/// 17-significant-digit decimal rendering; round-trips through f64 parsing.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV body of a sweep report.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("epsilon,sup_w2,sup_barycenter_err,cost_viscous,cost_det,cost_gap\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_float(r.eps),
            format_float(r.sup_w2),
            format_float(r.sup_barycenter_err),
            format_float(r.cost_viscous),
            format_float(r.cost_det),
            format_float(r.cost_gap),
        ));
    }
    out
}

/// JSON sidecar with rates, seeds, grid, and spec digest. The timestamp is
/// optional so that byte-identical reruns are possible.
pub fn sweep_sidecar(report: &SweepReport, timestamp: Option<u64>) -> Value {
    let mut obj = json!({
        "spec_digest": report.spec_digest,
        "grid_steps": report.grid_steps,
        "seed": report.seed,
        "eps_seeds": report.eps_seeds,
        "eps_list": report.rows.iter().map(|r| r.eps).collect::<Vec<f64>>(),
        "w2_rate": report.w2_rate,
        "cost_rate": report.cost_rate,
        "control_independent_of_viscosity": true,
    });
    if let Some(ts) = timestamp {
        obj.as_object_mut().unwrap().insert("unix_time".into(), json!(ts));
    }
    obj
}
