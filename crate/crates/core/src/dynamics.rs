//! Measure propagation under a given control.
//!
//! Three representations:
//! - deterministic continuity equation by interacting-particle
//!   characteristics (fourth-order one-step method, ensemble mean recomputed
//!   at every stage),
//! - viscous advection-diffusion by Euler-Maruyama ensembles with
//!   counter-based noise streams,
//! - closed-form Gaussian propagation for affine feedback, which serves as
//!   the oracle for the other two.

use crate::error::{Error, Result};
use crate::matkit::{self, Mat};
use crate::problem::{self, InitialMeasure, ProblemSpec};
use crate::rng;
use crate::synthesis::{AffineFeedback, TimeGrid};

/// A probability measure at one instant.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSnapshot {
    /// Uniform-weight atom cloud.
    Empirical { points: Vec<Vec<f64>> },
    /// Gaussian with mean and covariance.
    Gaussian { mean: Vec<f64>, cov: Mat },
}

impl MeasureSnapshot {
    pub fn dimension(&self) -> usize {
        match self {
            MeasureSnapshot::Empirical { points } => points[0].len(),
            MeasureSnapshot::Gaussian { mean, .. } => mean.len(),
        }
    }
}

/// Time-indexed sequence of snapshots, one per grid node.
#[derive(Debug, Clone)]
pub struct MeasureTrajectory {
    pub grid: TimeGrid,
    pub snapshots: Vec<MeasureSnapshot>,
}

/// Configuration of the stochastic propagation.
#[derive(Debug, Clone, Copy)]
pub struct ViscousOptions {
    /// Viscosity coefficient; zero is legal and yields the drift-only
    /// first-order scheme.
    pub eps: f64,
    /// Ensemble size when sampling an initial measure.
    pub samples: usize,
    pub seed: u64,
}

/// Evaluation contract (t, x) -> u, required Lipschitz in x.
pub trait ControlFn {
    fn control(&self, t: f64, x: &[f64]) -> Vec<f64>;

    /// Affine-feedback view, when available; enables closed-form Gaussian
    /// cost evaluation.
    fn as_affine(&self) -> Option<&AffineFeedback> {
        None
    }
}

impl ControlFn for AffineFeedback {
    fn control(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.eval(t, x)
    }

    fn as_affine(&self) -> Option<&AffineFeedback> {
        Some(self)
    }
}

/// The zero control.
pub struct ZeroControl {
    pub dimension: usize,
}

impl ControlFn for ZeroControl {
    fn control(&self, _t: f64, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.dimension]
    }
}

impl<F> ControlFn for F
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    fn control(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self(t, x)
    }
}

/// Draw n i.i.d. points from an initial measure. Deterministic given seed.
pub fn sample_initial(measure: &InitialMeasure, n: usize, seed: u64) -> Result<MeasureSnapshot> {
    assert!(n >= 1);
    let points = match measure {
        InitialMeasure::Gaussian { mean, cov } => {
            let root = matkit::spd_sqrt(cov)?;
            let d = mean.len();
            (0..n)
                .map(|i| {
                    let z: Vec<f64> = (0..d)
                        .map(|k| rng::normal(seed, rng::domain::INIT, i as u64, 0, k as u64))
                        .collect();
                    matkit::vec_add(mean, &root.matvec(&z))
                })
                .collect()
        }
        InitialMeasure::Empirical { points } => {
            // Resample with replacement when n differs from the atom count.
            if n == points.len() {
                points.clone()
            } else {
                (0..n)
                    .map(|i| {
                        let pick = rng::counter_u64(seed, rng::domain::INIT, i as u64, 1, 0)
                            as usize
                            % points.len();
                        points[pick].clone()
                    })
                    .collect()
            }
        }
        InitialMeasure::UniformBox { lo, hi } => (0..n)
            .map(|i| {
                lo.iter()
                    .zip(hi)
                    .enumerate()
                    .map(|(k, (a, b))| {
                        a + (b - a) * rng::uniform(seed, rng::domain::INIT, i as u64, 0, k as u64)
                    })
                    .collect()
            })
            .collect(),
    };
    Ok(MeasureSnapshot::Empirical { points })
}

fn ensemble_mean(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    let n = points.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn check_finite(points: &[Vec<f64>], t: f64) -> Result<()> {
    if points.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

/// Continuity-equation propagation by particle characteristics.
///
/// Each particle follows `x' = A x + B u(t, x) + Abar m` where `m` is the
/// ensemble mean, recomputed at every Runge-Kutta stage; the particle count
/// is conserved.
pub fn propagate_deterministic(
    spec: &ProblemSpec,
    control: &dyn ControlFn,
    init: &MeasureSnapshot,
    grid: TimeGrid,
) -> Result<MeasureTrajectory> {
    let points = match init {
        MeasureSnapshot::Empirical { points } => points.clone(),
        _ => return Err(Error::VariantMismatch),
    };
    let n = grid.steps();
    let h = grid.h();
    let mut snapshots = Vec::with_capacity(n + 1);
    let mut current = points;
    check_finite(&current, 0.0)?;
    snapshots.push(MeasureSnapshot::Empirical { points: current.clone() });

    let stage = |t: f64, pts: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        let mean = ensemble_mean(pts);
        pts.iter()
            .map(|x| {
                let u = control.control(t, x);
                problem::drift(spec, t, x, &mean, &u)
            })
            .collect()
    };

    for i in 0..n {
        let t0 = grid.node(i);
        let t1 = grid.node(i + 1);
        let tm = 0.5 * (t0 + t1);
        let k1 = stage(t0, &current)?;
        let s2: Vec<Vec<f64>> = current
            .iter()
            .zip(&k1)
            .map(|(x, k)| matkit::vec_add(x, &matkit::vec_scale(k, 0.5 * h)))
            .collect();
        let k2 = stage(tm, &s2)?;
        let s3: Vec<Vec<f64>> = current
            .iter()
            .zip(&k2)
            .map(|(x, k)| matkit::vec_add(x, &matkit::vec_scale(k, 0.5 * h)))
            .collect();
        let k3 = stage(tm, &s3)?;
        let s4: Vec<Vec<f64>> = current
            .iter()
            .zip(&k3)
            .map(|(x, k)| matkit::vec_add(x, &matkit::vec_scale(k, h)))
            .collect();
        let k4 = stage(t1, &s4)?;
        for (p, (((a, b), c), d)) in
            current.iter_mut().zip(k1.iter().zip(&k2).zip(&k3).zip(&k4))
        {
            for j in 0..p.len() {
                p[j] += h / 6.0 * (a[j] + 2.0 * b[j] + 2.0 * c[j] + d[j]);
            }
        }
        check_finite(&current, t1)?;
        snapshots.push(MeasureSnapshot::Empirical { points: current.clone() });
    }
    Ok(MeasureTrajectory { grid, snapshots })
}

/// Advection-diffusion propagation by Euler-Maruyama ensembles.
///
/// The normal increment for (particle i, step j) is a pure function of
/// (seed, i, j), so trajectories replay identically under any scheduling.
pub fn propagate_viscous(
    spec: &ProblemSpec,
    control: &dyn ControlFn,
    init: &MeasureSnapshot,
    opts: &ViscousOptions,
    grid: TimeGrid,
) -> Result<MeasureTrajectory> {
    assert!(opts.eps >= 0.0);
    let mut current = match init {
        MeasureSnapshot::Empirical { points } => points.clone(),
        _ => return Err(Error::VariantMismatch),
    };
    let n = grid.steps();
    let h = grid.h();
    let noise_scale = (2.0 * opts.eps * h).sqrt();
    let mut snapshots = Vec::with_capacity(n + 1);
    check_finite(&current, 0.0)?;
    snapshots.push(MeasureSnapshot::Empirical { points: current.clone() });

    for j in 0..n {
        let t = grid.node(j);
        let mean = ensemble_mean(&current);
        for (i, x) in current.iter_mut().enumerate() {
            let u = control.control(t, x);
            let b = problem::drift(spec, t, x, &mean, &u)?;
            for (k, xi) in x.iter_mut().enumerate() {
                let noise = if noise_scale > 0.0 {
                    noise_scale
                        * rng::normal(opts.seed, rng::domain::NOISE, i as u64, j as u64, k as u64)
                } else {
                    0.0
                };
                *xi += h * b[k] + noise;
            }
        }
        check_finite(&current, grid.node(j + 1))?;
        snapshots.push(MeasureSnapshot::Empirical { points: current.clone() });
    }
    Ok(MeasureTrajectory { grid, snapshots })
}

/// Closed-form Gaussian propagation under affine feedback: the mean follows
/// `m' = (A + BK + Abar) m + B k` and the covariance
/// `C' = (A + BK) C + C (A + BK)' + 2 eps I`.
pub fn propagate_gaussian(
    spec: &ProblemSpec,
    fb: &AffineFeedback,
    init: &MeasureSnapshot,
    eps: f64,
    grid: TimeGrid,
) -> Result<MeasureTrajectory> {
    let (mean0, cov0) = match init {
        MeasureSnapshot::Gaussian { mean, cov } => (mean.clone(), cov.clone()),
        _ => return Err(Error::VariantMismatch),
    };
    let d = mean0.len();
    let n = grid.steps();
    let h = grid.h();
    let diffusion = Mat::identity(d).scale(2.0 * eps);

    let closed_loop = |t: f64| -> Mat {
        problem::eval_tv(&spec.A, t).add(&problem::eval_tv(&spec.B, t).mul(&fb.gain.eval(t)))
    };
    let rhs = |t: f64, m: &[f64], c: &Mat| -> (Vec<f64>, Mat) {
        let acl = closed_loop(t);
        let abar = problem::eval_tv(&spec.Abar, t);
        let bk = problem::eval_tv(&spec.B, t).matvec(&fb.offset.eval(t));
        let dm = matkit::vec_add(&matkit::vec_add(&acl.matvec(m), &abar.matvec(m)), &bk);
        let dc = acl.mul(c).add(&c.mul(&acl.transpose())).add(&diffusion);
        (dm, dc)
    };

    let mut snapshots = Vec::with_capacity(n + 1);
    let mut mean = mean0;
    let mut cov = cov0.symmetrize();
    snapshots.push(MeasureSnapshot::Gaussian { mean: mean.clone(), cov: cov.clone() });
    for i in 0..n {
        let t0 = grid.node(i);
        let t1 = grid.node(i + 1);
        let tm = 0.5 * (t0 + t1);
        let (km1, kc1) = rhs(t0, &mean, &cov);
        let (km2, kc2) = rhs(
            tm,
            &matkit::vec_add(&mean, &matkit::vec_scale(&km1, 0.5 * h)),
            &cov.add(&kc1.scale(0.5 * h)),
        );
        let (km3, kc3) = rhs(
            tm,
            &matkit::vec_add(&mean, &matkit::vec_scale(&km2, 0.5 * h)),
            &cov.add(&kc2.scale(0.5 * h)),
        );
        let (km4, kc4) = rhs(
            t1,
            &matkit::vec_add(&mean, &matkit::vec_scale(&km3, h)),
            &cov.add(&kc3.scale(h)),
        );
        for j in 0..d {
            mean[j] += h / 6.0 * (km1[j] + 2.0 * km2[j] + 2.0 * km3[j] + km4[j]);
        }
        cov = cov
            .add(&kc1.add(&kc2.scale(2.0)).add(&kc3.scale(2.0)).add(&kc4).scale(h / 6.0))
            .symmetrize();
        if !mean.iter().all(|v| v.is_finite()) || !cov.is_finite() {
            return Err(Error::NonFinite { t: t1 });
        }
        snapshots.push(MeasureSnapshot::Gaussian { mean: mean.clone(), cov: cov.clone() });
    }
    Ok(MeasureTrajectory { grid, snapshots })
}
