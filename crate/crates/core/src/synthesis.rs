//! Feedback synthesis by the Riccati cascade.
//!
//! Backward solves for the barycenter Riccati matrix `Sigma` and the
//! fluctuation Riccati matrix `P`, the forward mean flow `xbar` (with
//! co-state `ybar = Sigma xbar`), and the affine offset `p`, assembled into
//! the optimal feedback `u(t,x) = K(t) x + k(t)` with `K = -R^{-1} B' P`,
//! `k = -R^{-1} B' p`. The construction takes no viscosity parameter: the
//! feedback is the optimal control for every viscosity level, and the only
//! viscosity-dependent object is the martingale diagnostic
//! `Z = sqrt(2 eps) P`.
//!
//! All solves use the classical fourth-order Runge-Kutta method on a fixed
//! uniform grid, with backward equations integrated in reversed time.
//! Node values are stored together with their ODE slopes so that curves can
//! be evaluated between nodes by cubic Hermite interpolation without losing
//! the integrator's order.

use crate::error::{Error, Result};
use crate::matkit::{self, Mat};
use crate::problem::{self, ProblemSpec};

/// Uniform time grid t_i = i T / N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Self {
        assert!(steps > 0 && horizon > 0.0);
        TimeGrid { steps, horizon }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|i| self.node(i))
    }

    /// Bracketing interval index and normalized offset for t in [0, T].
    fn locate(&self, t: f64) -> (usize, f64) {
        let h = self.h();
        let mut i = ((t / h).floor() as usize).min(self.steps.saturating_sub(1));
        if t < self.node(i) {
            i = i.saturating_sub(1);
        }
        let s = ((t - self.node(i)) / h).clamp(0.0, 1.0);
        (i, s)
    }
}

fn hermite_weights(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

/// Grid-sampled matrix curve with cubic Hermite evaluation between nodes.
#[derive(Debug, Clone)]
pub struct MatCurve {
    pub grid: TimeGrid,
    pub values: Vec<Mat>,
    pub slopes: Vec<Mat>,
}

impl MatCurve {
    pub fn eval(&self, t: f64) -> Mat {
        let (i, s) = self.grid.locate(t);
        if s == 0.0 {
            return self.values[i].clone();
        }
        let h = self.grid.h();
        let (w0, w1, w2, w3) = hermite_weights(s);
        self.values[i]
            .scale(w0)
            .add(&self.slopes[i].scale(w1 * h))
            .add(&self.values[i + 1].scale(w2))
            .add(&self.slopes[i + 1].scale(w3 * h))
    }
}

/// Grid-sampled vector curve with cubic Hermite evaluation between nodes.
#[derive(Debug, Clone)]
pub struct VecCurve {
    pub grid: TimeGrid,
    pub values: Vec<Vec<f64>>,
    pub slopes: Vec<Vec<f64>>,
}

impl VecCurve {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let (i, s) = self.grid.locate(t);
        if s == 0.0 {
            return self.values[i].clone();
        }
        let h = self.grid.h();
        let (w0, w1, w2, w3) = hermite_weights(s);
        let mut out = vec![0.0; self.values[i].len()];
        for (j, o) in out.iter_mut().enumerate() {
            *o = w0 * self.values[i][j]
                + w1 * h * self.slopes[i][j]
                + w2 * self.values[i + 1][j]
                + w3 * h * self.slopes[i + 1][j];
        }
        out
    }
}

/// The optimal affine feedback u(t, x) = K(t) x + k(t).
#[derive(Debug, Clone)]
pub struct AffineFeedback {
    pub gain: MatCurve,
    pub offset: VecCurve,
}

impl AffineFeedback {
    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        matkit::vec_add(&self.gain.eval(t).matvec(x), &self.offset.eval(t))
    }

    pub fn gain_at_node(&self, i: usize) -> &Mat {
        &self.gain.values[i]
    }

    pub fn offset_at_node(&self, i: usize) -> &[f64] {
        &self.offset.values[i]
    }

    /// Shift every gain/offset node by a constant perturbation.
    pub fn perturbed(&self, delta_gain: &Mat, delta_offset: &[f64]) -> AffineFeedback {
        let mut out = self.clone();
        for v in &mut out.gain.values {
            *v = v.add(delta_gain);
        }
        for v in &mut out.offset.values {
            *v = matkit::vec_add(v, delta_offset);
        }
        out
    }
}

/// Output of the full cascade: grid-sampled Sigma, P, p, xbar, ybar.
pub struct SynthesisSolution {
    pub grid: TimeGrid,
    pub sigma: MatCurve,
    pub riccati_p: MatCurve,
    pub offset_p: VecCurve,
    pub xbar: VecCurve,
    pub ybar: Vec<Vec<f64>>,
}

const BLOWUP_GUARD: f64 = 1e12;

/// -R(t)^{-1} B(t)'.
fn neg_rinv_bt(spec: &ProblemSpec, t: f64) -> Result<Mat> {
    let r = problem::eval_tv(&spec.R, t).symmetrize();
    let rinv = matkit::spd_inverse(&r)
        .map_err(|_| Error::NotPsd { what: "R(t)".into(), min_eig: f64::NAN })?;
    Ok(rinv.mul(&problem::eval_tv(&spec.B, t).transpose()).scale(-1.0))
}

/// B R^{-1} B' at time t.
fn control_kernel(spec: &ProblemSpec, t: f64) -> Result<Mat> {
    let b = problem::eval_tv(&spec.B, t);
    let r = problem::eval_tv(&spec.R, t).symmetrize();
    let rinv = matkit::spd_inverse(&r)
        .map_err(|_| Error::NotPsd { what: "R(t)".into(), min_eig: f64::NAN })?;
    Ok(b.mul(&rinv).mul(&b.transpose()))
}

/// Hamiltonian H(t, x, mu, y, alpha) = b . y + f.
pub fn hamiltonian(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    mubar: &[f64],
    y: &[f64],
    alpha: &[f64],
) -> Result<f64> {
    let b = problem::drift(spec, t, x, mubar, alpha)?;
    let f = problem::running_cost(spec, t, x, mubar, alpha)?;
    Ok(matkit::dot(&b, y) + f)
}

/// Pointwise Hamiltonian minimizer alpha = -R^{-1} B' y.
pub fn hamiltonian_minimizer(spec: &ProblemSpec, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    if t < 0.0 || t > spec.horizon {
        return Err(Error::OutOfRange { t, horizon: spec.horizon });
    }
    Ok(neg_rinv_bt(spec, t)?.matvec(y))
}

/// Backward RK4 for a matrix Riccati equation with right-hand side `rhs`
/// (the forward time derivative). Returns node values and slopes.
fn solve_backward_mat<F>(grid: TimeGrid, terminal: Mat, rhs: F) -> Result<(Vec<Mat>, Vec<Mat>)>
where
    F: Fn(f64, &Mat) -> Result<Mat>,
{
    let n = grid.steps();
    let h = grid.h();
    let mut values = vec![Mat::zeros(1, 1); n + 1];
    values[n] = terminal.symmetrize();
    for i in (0..n).rev() {
        let t1 = grid.node(i + 1);
        let t0 = grid.node(i);
        let tm = 0.5 * (t0 + t1);
        let y = &values[i + 1];
        let k1 = rhs(t1, y)?;
        let k2 = rhs(tm, &y.sub(&k1.scale(0.5 * h)))?;
        let k3 = rhs(tm, &y.sub(&k2.scale(0.5 * h)))?;
        let k4 = rhs(t0, &y.sub(&k3.scale(h)))?;
        let incr = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4).scale(h / 6.0);
        let next = y.sub(&incr).symmetrize();
        if next.max_abs() > BLOWUP_GUARD {
            return Err(Error::BlowUp { t: t0, magnitude: next.max_abs() });
        }
        values[i] = next;
    }
    let slopes = grid
        .nodes()
        .zip(&values)
        .map(|(t, v)| rhs(t, v))
        .collect::<Result<Vec<_>>>()?;
    Ok((values, slopes))
}

/// Barycenter Riccati equation, integrated backward from
/// `Sigma(T) = QT + (I - ST)' QbarT (I - ST)`.
pub fn solve_sigma(spec: &ProblemSpec, grid: TimeGrid) -> Result<MatCurve> {
    let d = spec.dimension;
    let ident = Mat::identity(d);
    let rhs = |t: f64, sigma: &Mat| -> Result<Mat> {
        let ahat = problem::eval_tv(&spec.A, t).add(&problem::eval_tv(&spec.Abar, t));
        let kernel = control_kernel(spec, t)?;
        let q = problem::eval_tv(&spec.Q, t);
        let qbar = problem::eval_tv(&spec.Qbar, t);
        let ims = ident.sub(&problem::eval_tv(&spec.S, t));
        let forcing = q.add(&ims.transpose().mul(&qbar).mul(&ims));
        // Sigma' = -(Sigma Ahat + Ahat' Sigma - Sigma BR^{-1}B' Sigma + forcing)
        Ok(sigma
            .mul(&ahat)
            .add(&ahat.transpose().mul(sigma))
            .sub(&sigma.mul(&kernel).mul(sigma))
            .add(&forcing)
            .scale(-1.0))
    };
    let ims_t = Mat::identity(d).sub(&spec.ST);
    let terminal = spec.QT.add(&ims_t.transpose().mul(&spec.QbarT).mul(&ims_t));
    let (values, slopes) = solve_backward_mat(grid, terminal, rhs)?;
    Ok(MatCurve { grid, values, slopes })
}

/// Fluctuation Riccati equation, integrated backward from `P(T) = QT + QbarT`.
///
/// The equation contains no viscosity parameter: P is shared by every
/// viscosity level.
pub fn solve_p(spec: &ProblemSpec, grid: TimeGrid) -> Result<MatCurve> {
    let rhs = |t: f64, p: &Mat| -> Result<Mat> {
        let a = problem::eval_tv(&spec.A, t);
        let kernel = control_kernel(spec, t)?;
        let forcing = problem::eval_tv(&spec.Q, t).add(&problem::eval_tv(&spec.Qbar, t));
        Ok(a.transpose()
            .mul(p)
            .add(&p.mul(&a))
            .sub(&p.mul(&kernel).mul(p))
            .add(&forcing)
            .scale(-1.0))
    };
    let terminal = spec.QT.add(&spec.QbarT);
    let (values, slopes) = solve_backward_mat(grid, terminal, rhs)?;
    Ok(MatCurve { grid, values, slopes })
}

/// Forward mean flow `xbar' = (A + Abar - BR^{-1}B' Sigma) xbar` from the
/// barycenter of the initial measure, plus `ybar = Sigma xbar` per node.
pub fn solve_mean_flow(
    spec: &ProblemSpec,
    sigma: &MatCurve,
    grid: TimeGrid,
) -> Result<(VecCurve, Vec<Vec<f64>>)> {
    let rhs = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
        let ahat = problem::eval_tv(&spec.A, t).add(&problem::eval_tv(&spec.Abar, t));
        let kernel = control_kernel(spec, t)?;
        let m = ahat.sub(&kernel.mul(&sigma.eval(t)));
        Ok(m.matvec(x))
    };
    let n = grid.steps();
    let h = grid.h();
    let mut values = vec![Vec::new(); n + 1];
    values[0] = spec.initial.barycenter();
    for i in 0..n {
        let t0 = grid.node(i);
        let t1 = grid.node(i + 1);
        let tm = 0.5 * (t0 + t1);
        let y = values[i].clone();
        let k1 = rhs(t0, &y)?;
        let k2 = rhs(tm, &matkit::vec_add(&y, &matkit::vec_scale(&k1, 0.5 * h)))?;
        let k3 = rhs(tm, &matkit::vec_add(&y, &matkit::vec_scale(&k2, 0.5 * h)))?;
        let k4 = rhs(t1, &matkit::vec_add(&y, &matkit::vec_scale(&k3, h)))?;
        let mut next = y;
        for j in 0..next.len() {
            next[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        values[i + 1] = next;
    }
    let slopes = grid
        .nodes()
        .zip(&values)
        .map(|(t, v)| rhs(t, v))
        .collect::<Result<Vec<_>>>()?;
    let ybar = values.iter().enumerate().map(|(i, x)| sigma.values[i].matvec(x)).collect();
    Ok((VecCurve { grid, values, slopes }, ybar))
}

/// Affine offset equation, integrated backward from
/// `p(T) = (ST' QbarT ST - ST' QbarT - QbarT ST) xbar(T)`.
pub fn solve_offset(
    spec: &ProblemSpec,
    riccati_p: &MatCurve,
    sigma: &MatCurve,
    xbar: &VecCurve,
    grid: TimeGrid,
) -> Result<VecCurve> {
    let rhs = |t: f64, p: &[f64]| -> Result<Vec<f64>> {
        let a = problem::eval_tv(&spec.A, t);
        let abar = problem::eval_tv(&spec.Abar, t);
        let kernel = control_kernel(spec, t)?;
        let pmat = riccati_p.eval(t);
        let lin = a.transpose().sub(&pmat.mul(&kernel));
        let s = problem::eval_tv(&spec.S, t);
        let qbar = problem::eval_tv(&spec.Qbar, t);
        let sq = s.transpose().mul(&qbar);
        let forcing = abar
            .transpose()
            .mul(&sigma.eval(t))
            .add(&pmat.mul(&abar))
            .add(&sq.mul(&s))
            .sub(&sq)
            .sub(&qbar.mul(&s));
        // p' = -(A' - P BR^{-1}B') p - forcing xbar
        Ok(matkit::vec_scale(
            &matkit::vec_add(&lin.matvec(p), &forcing.matvec(&xbar.eval(t))),
            -1.0,
        ))
    };
    let st = &spec.ST;
    let sq = st.transpose().mul(&spec.QbarT);
    let terminal_mat = sq.mul(st).sub(&sq).sub(&spec.QbarT.mul(st));
    let n = grid.steps();
    let h = grid.h();
    let mut values = vec![Vec::new(); n + 1];
    values[n] = terminal_mat.matvec(&xbar.values[n]);
    for i in (0..n).rev() {
        let t1 = grid.node(i + 1);
        let t0 = grid.node(i);
        let tm = 0.5 * (t0 + t1);
        let y = values[i + 1].clone();
        let k1 = rhs(t1, &y)?;
        let k2 = rhs(tm, &matkit::vec_sub(&y, &matkit::vec_scale(&k1, 0.5 * h)))?;
        let k3 = rhs(tm, &matkit::vec_sub(&y, &matkit::vec_scale(&k2, 0.5 * h)))?;
        let k4 = rhs(t0, &matkit::vec_sub(&y, &matkit::vec_scale(&k3, h)))?;
        let mut next = y;
        for j in 0..next.len() {
            next[j] -= h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if next.iter().any(|v| v.abs() > BLOWUP_GUARD) {
            return Err(Error::BlowUp { t: t0, magnitude: matkit::norm2(&next) });
        }
        values[i] = next;
    }
    let slopes = grid
        .nodes()
        .zip(&values)
        .map(|(t, v)| rhs(t, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(VecCurve { grid, values, slopes })
}

/// Finite-difference slopes for a derived node sequence (centered inside,
/// one-sided at the ends).
fn fd_slopes_mat(grid: TimeGrid, values: &[Mat]) -> Vec<Mat> {
    let n = values.len();
    let h = grid.h();
    (0..n)
        .map(|i| {
            if i == 0 {
                values[1].sub(&values[0]).scale(1.0 / h)
            } else if i == n - 1 {
                values[n - 1].sub(&values[n - 2]).scale(1.0 / h)
            } else {
                values[i + 1].sub(&values[i - 1]).scale(0.5 / h)
            }
        })
        .collect()
}

fn fd_slopes_vec(grid: TimeGrid, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = values.len();
    let h = grid.h();
    (0..n)
        .map(|i| {
            if i == 0 {
                matkit::vec_scale(&matkit::vec_sub(&values[1], &values[0]), 1.0 / h)
            } else if i == n - 1 {
                matkit::vec_scale(&matkit::vec_sub(&values[n - 1], &values[n - 2]), 1.0 / h)
            } else {
                matkit::vec_scale(&matkit::vec_sub(&values[i + 1], &values[i - 1]), 0.5 / h)
            }
        })
        .collect()
}

/// Run the full cascade: Sigma, mean flow, P, offset p, and the feedback
/// gains. Deterministic; identical inputs produce bit-identical outputs.
pub fn synthesize(spec: &ProblemSpec, grid: TimeGrid) -> Result<(SynthesisSolution, AffineFeedback)> {
    let sigma = solve_sigma(spec, grid)?;
    let (xbar, ybar) = solve_mean_flow(spec, &sigma, grid)?;
    let riccati_p = solve_p(spec, grid)?;
    let offset_p = solve_offset(spec, &riccati_p, &sigma, &xbar, grid)?;

    let mut gains = Vec::with_capacity(grid.steps() + 1);
    let mut offsets = Vec::with_capacity(grid.steps() + 1);
    for (i, t) in grid.nodes().enumerate() {
        let nrb = neg_rinv_bt(spec, t)?;
        gains.push(nrb.mul(&riccati_p.values[i]));
        offsets.push(nrb.matvec(&offset_p.values[i]));
    }
    let gain_slopes = fd_slopes_mat(grid, &gains);
    let offset_slopes = fd_slopes_vec(grid, &offsets);
    let feedback = AffineFeedback {
        gain: MatCurve { grid, values: gains, slopes: gain_slopes },
        offset: VecCurve { grid, values: offsets, slopes: offset_slopes },
    };
    let solution = SynthesisSolution { grid, sigma, riccati_p, offset_p, xbar, ybar };
    Ok((solution, feedback))
}

/// Drift of the optimal trajectory:
/// `b(t, x) = [A - BR^{-1}B'P] x + Abar xbar_t - BR^{-1}B' p`, evaluated
/// through the interpolated feedback so that it coincides exactly with
/// `drift(spec, t, x, xbar_t, u(t, x))`.
pub fn optimal_drift(
    spec: &ProblemSpec,
    sol: &SynthesisSolution,
    fb: &AffineFeedback,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let u = fb.eval(t, x);
    problem::drift(spec, t, x, &sol.xbar.eval(t), &u)
}

/// Martingale integrand diagnostic Z = sqrt(2 eps) P per node; the only
/// viscosity-dependent object in the synthesis.
pub fn z_diagnostic(riccati_p: &[Mat], eps: f64) -> Vec<Mat> {
    assert!(eps >= 0.0);
    let scale = (2.0 * eps).sqrt();
    riccati_p.iter().map(|p| p.scale(scale)).collect()
}
