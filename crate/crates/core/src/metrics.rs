//! Barycenters, moments, Wasserstein-2 distances, and the cost functional.
//!
//! Three W2 estimators, each exact on its domain: the 1-D quantile coupling,
//! the Gaussian (Bures) closed form, and exact optimal assignment between
//! equal-weight clouds in any dimension (shortest-augmenting-path algorithm,
//! capped at n = 2048).

use crate::dynamics::{ControlFn, MeasureSnapshot, MeasureTrajectory};
use crate::error::{Error, Result};
use crate::matkit::{self, Mat};
use crate::problem::{self, ProblemSpec};

/// Cost functional split into running and terminal parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub running: f64,
    pub terminal: f64,
    pub total: f64,
}

/// First moment of a snapshot.
pub fn barycenter(s: &MeasureSnapshot) -> Vec<f64> {
    match s {
        MeasureSnapshot::Empirical { points } => {
            let d = points[0].len();
            let mut m = vec![0.0; d];
            for p in points {
                for (acc, v) in m.iter_mut().zip(p) {
                    *acc += v;
                }
            }
            let n = points.len() as f64;
            m.iter().map(|v| v / n).collect()
        }
        MeasureSnapshot::Gaussian { mean, .. } => mean.clone(),
    }
}

/// Mean of |x|^2 under the snapshot.
pub fn second_moment(s: &MeasureSnapshot) -> f64 {
    match s {
        MeasureSnapshot::Empirical { points } => {
            points.iter().map(|p| matkit::dot(p, p)).sum::<f64>() / points.len() as f64
        }
        MeasureSnapshot::Gaussian { mean, cov } => matkit::dot(mean, mean) + cov.trace(),
    }
}

/// Exact W2 between equal-weight 1-D samples via the quantile coupling.
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mean_sq = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / sa.len() as f64;
    Ok(mean_sq.sqrt())
}

/// Closed-form W2 between Gaussians (Bures metric):
/// `W2^2 = |m1 - m2|^2 + tr(C1 + C2 - 2 (C2^{1/2} C1 C2^{1/2})^{1/2})`.
pub fn w2_gaussian(m1: &[f64], c1: &Mat, m2: &[f64], c2: &Mat) -> Result<f64> {
    let dm = matkit::vec_sub(m1, m2);
    let root2 = matkit::spd_sqrt(&c2.symmetrize())?;
    let inner = root2.mul(&c1.symmetrize()).mul(&root2).symmetrize();
    let cross = matkit::spd_sqrt(&inner)?;
    let bures = c1.trace() + c2.trace() - 2.0 * cross.trace();
    Ok((matkit::dot(&dm, &dm) + bures.max(0.0)).sqrt())
}

const ASSIGNMENT_CAP: usize = 2048;

/// Minimum-cost perfect matching on a dense cost matrix by shortest
/// augmenting paths with dual potentials. Returns `assign[col] = row`.
fn solve_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based; column 0 is the virtual start of each augmenting path.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut assigned = vec![0_usize; n + 1];
    let mut way = vec![0_usize; n + 1];
    for i in 1..=n {
        assigned[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned[j0] = assigned[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| assigned[j] - 1).collect()
}

/// Exact W2 between equal-weight clouds by optimal assignment on squared
/// Euclidean costs.
pub fn w2_assignment(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let n = a.len();
    if n > ASSIGNMENT_CAP {
        return Err(Error::SizeLimit { n, cap: ASSIGNMENT_CAP });
    }
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    let d = matkit::vec_sub(x, y);
                    matkit::dot(&d, &d)
                })
                .collect()
        })
        .collect();
    let assign = solve_assignment(&cost);
    let total: f64 = assign.iter().enumerate().map(|(j, &i)| cost[i][j]).sum();
    Ok((total / n as f64).sqrt())
}

fn snapshot_w2(a: &MeasureSnapshot, b: &MeasureSnapshot) -> Result<f64> {
    match (a, b) {
        (MeasureSnapshot::Gaussian { mean: m1, cov: c1 }, MeasureSnapshot::Gaussian { mean: m2, cov: c2 }) => {
            w2_gaussian(m1, c1, m2, c2)
        }
        (MeasureSnapshot::Empirical { points: pa }, MeasureSnapshot::Empirical { points: pb }) => {
            if pa.len() != pb.len() {
                return Err(Error::LengthMismatch { left: pa.len(), right: pb.len() });
            }
            if pa[0].len() == 1 {
                let xa: Vec<f64> = pa.iter().map(|p| p[0]).collect();
                let xb: Vec<f64> = pb.iter().map(|p| p[0]).collect();
                w2_1d(&xa, &xb)
            } else {
                w2_assignment(pa, pb)
            }
        }
        _ => Err(Error::VariantMismatch),
    }
}

/// Max over grid nodes of the pairwise W2 between two trajectories.
pub fn sup_w2(ta: &MeasureTrajectory, tb: &MeasureTrajectory) -> Result<f64> {
    if ta.grid != tb.grid {
        return Err(Error::GridMismatch);
    }
    let mut sup = 0.0_f64;
    for (a, b) in ta.snapshots.iter().zip(&tb.snapshots) {
        sup = sup.max(snapshot_w2(a, b)?);
    }
    Ok(sup)
}

/// Second-moment identity: E[x' M x] = m' M m + tr(M C) for x ~ N(m, C).
fn quad_mean(m: &Mat, mean: &[f64], cov: &Mat) -> f64 {
    matkit::dot(mean, &m.matvec(mean)) + m.mul(cov).trace()
}

/// Evaluate the cost functional J on a trajectory.
///
/// Empirical trajectories average the running cost over particles (control
/// re-evaluated from `control` at each node) with trapezoidal time
/// quadrature. Gaussian trajectories require an affine control and use the
/// closed-form second-moment identities.
pub fn total_cost(
    spec: &ProblemSpec,
    traj: &MeasureTrajectory,
    control: &dyn ControlFn,
) -> Result<CostBreakdown> {
    let grid = traj.grid;
    if grid.horizon() > spec.horizon + 1e-12 {
        return Err(Error::GridMismatch);
    }
    let n = grid.steps();
    let h = grid.h();

    let node_running = |i: usize| -> Result<f64> {
        let t = grid.node(i);
        match &traj.snapshots[i] {
            MeasureSnapshot::Empirical { points } => {
                let mubar = barycenter(&traj.snapshots[i]);
                let mut acc = 0.0;
                for x in points {
                    let u = control.control(t, x);
                    acc += problem::running_cost(spec, t, x, &mubar, &u)?;
                }
                Ok(acc / points.len() as f64)
            }
            MeasureSnapshot::Gaussian { mean, cov } => {
                let fb = control.as_affine().ok_or(Error::VariantMismatch)?;
                let q = problem::eval_tv(&spec.Q, t);
                let r = problem::eval_tv(&spec.R, t);
                let qbar = problem::eval_tv(&spec.Qbar, t);
                let s = problem::eval_tv(&spec.S, t);
                let gain = fb.gain.eval(t);
                let offset = fb.offset.eval(t);
                // E[x'Qx]
                let eq = quad_mean(&q, mean, cov);
                // u = K x + k: E[u'Ru] = (Km+k)'R(Km+k) + tr(K'RK C)
                let um = matkit::vec_add(&gain.matvec(mean), &offset);
                let krk = gain.transpose().mul(&r).mul(&gain);
                let er = matkit::dot(&um, &r.matvec(&um)) + krk.mul(cov).trace();
                // (x - S m): mean (I-S)m, covariance C
                let shifted = matkit::vec_sub(mean, &s.matvec(mean));
                let ebar = matkit::dot(&shifted, &qbar.matvec(&shifted)) + qbar.mul(cov).trace();
                Ok(0.5 * (eq + er + ebar))
            }
        }
    };

    let mut running = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        running += w * h * node_running(i)?;
    }

    let terminal = match &traj.snapshots[n] {
        MeasureSnapshot::Empirical { points } => {
            let mubar = barycenter(&traj.snapshots[n]);
            points.iter().map(|x| problem::terminal_cost(spec, x, &mubar)).sum::<f64>()
                / points.len() as f64
        }
        MeasureSnapshot::Gaussian { mean, cov } => {
            let eq = quad_mean(&spec.QT, mean, cov);
            let shifted = matkit::vec_sub(mean, &spec.ST.matvec(mean));
            let ebar =
                matkit::dot(&shifted, &spec.QbarT.matvec(&shifted)) + spec.QbarT.mul(cov).trace();
            0.5 * (eq + ebar)
        }
    };

    Ok(CostBreakdown { running, terminal, total: running + terminal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{propagate_gaussian, ZeroControl};
    use crate::problem::ScalarSpecBuilder;
    use crate::rng;
    use crate::synthesis::{synthesize, TimeGrid};

    #[test]
    fn barycenter_examples() {
        let s = MeasureSnapshot::Empirical { points: vec![vec![0.0, 0.0], vec![2.0, 4.0]] };
        assert_eq!(barycenter(&s), vec![1.0, 2.0]);
        let s = MeasureSnapshot::Gaussian { mean: vec![3.0], cov: Mat::scalar(5.0) };
        assert_eq!(barycenter(&s), vec![3.0]);
        let s = MeasureSnapshot::Empirical { points: vec![vec![1.5, -2.0]] };
        assert_eq!(barycenter(&s), vec![1.5, -2.0]);
    }

    #[test]
    fn second_moment_examples() {
        let s = MeasureSnapshot::Empirical { points: vec![vec![0.0]] };
        assert_eq!(second_moment(&s), 0.0);
        let s = MeasureSnapshot::Gaussian { mean: vec![1.0], cov: Mat::scalar(0.25) };
        assert_eq!(second_moment(&s), 1.25);
        let s = MeasureSnapshot::Empirical { points: vec![vec![-1.0], vec![1.0]] };
        assert_eq!(second_moment(&s), 1.0);
    }

    #[test]
    fn w2_1d_examples() {
        assert_eq!(w2_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(w2_1d(&[0.3, -0.7], &[0.3, -0.7]).unwrap(), 0.0);
        // Brute force over both couplings of {0,2} vs {1,1}: both give 1.
        assert_eq!(w2_1d(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(w2_1d(&[0.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn w2_gaussian_examples() {
        let d = w2_gaussian(&[0.0], &Mat::scalar(1.0), &[3.0], &Mat::scalar(1.0)).unwrap();
        assert!((d - 3.0).abs() <= 1e-12);
        let d = w2_gaussian(&[0.0], &Mat::scalar(1.0), &[0.0], &Mat::scalar(4.0)).unwrap();
        assert!((d - 1.0).abs() <= 1e-12);
        // Commuting diagonal case: W2^2 = (1-2)^2 + (2-1)^2 = 2.
        let d = w2_gaussian(
            &[0.0, 0.0],
            &Mat::diag(&[1.0, 4.0]),
            &[0.0, 0.0],
            &Mat::diag(&[4.0, 1.0]),
        )
        .unwrap();
        assert!((d - 2.0_f64.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn w2_assignment_examples() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let shuffled = vec![a[2].clone(), a[0].clone(), a[1].clone()];
        assert!(w2_assignment(&a, &shuffled).unwrap() <= 1e-12);

        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let b = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        assert!((w2_assignment(&a, &b).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn w2_assignment_matches_quantile_in_1d() {
        for trial in 0..5 {
            let n = 40;
            let a: Vec<Vec<f64>> = (0..n)
                .map(|i| vec![rng::normal(10 + trial, 0, i, 0, 0)])
                .collect();
            let b: Vec<Vec<f64>> = (0..n)
                .map(|i| vec![0.7 * rng::normal(20 + trial, 0, i, 0, 0) + 0.5])
                .collect();
            let xa: Vec<f64> = a.iter().map(|p| p[0]).collect();
            let xb: Vec<f64> = b.iter().map(|p| p[0]).collect();
            let exact = w2_1d(&xa, &xb).unwrap();
            let assigned = w2_assignment(&a, &b).unwrap();
            assert!((exact - assigned).abs() <= 1e-12, "{exact} vs {assigned}");
        }
    }

    #[test]
    fn w2_assignment_upper_bounded_by_identity_pairing() {
        let n = 30;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![rng::normal(1, 0, i, 0, 0), rng::normal(1, 0, i, 0, 1)])
            .collect();
        let b: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![rng::normal(2, 0, i, 0, 0), rng::normal(2, 0, i, 0, 1)])
            .collect();
        let opt = w2_assignment(&a, &b).unwrap();
        let identity_rms = (a
            .iter()
            .zip(&b)
            .map(|(x, y)| {
                let d = matkit::vec_sub(x, y);
                matkit::dot(&d, &d)
            })
            .sum::<f64>()
            / n as f64)
            .sqrt();
        assert!(opt <= identity_rms + 1e-12);
    }

    #[test]
    fn w2_size_cap() {
        let a = vec![vec![0.0]; 2049];
        assert!(matches!(w2_assignment(&a, &a), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn sup_w2_point_masses() {
        let grid = TimeGrid::new(4, 1.0);
        let mk = |x: f64| MeasureTrajectory {
            grid,
            snapshots: vec![MeasureSnapshot::Empirical { points: vec![vec![x]] }; 5],
        };
        let ta = mk(0.0);
        assert_eq!(sup_w2(&ta, &ta).unwrap(), 0.0);
        let tb = mk(2.0);
        assert_eq!(sup_w2(&ta, &tb).unwrap(), 2.0);
    }

    #[test]
    fn sup_w2_gaussian_scalar_covariance_formula() {
        let spec = ScalarSpecBuilder::default().build();
        let grid = TimeGrid::new(500, 1.0);
        let (_, fb) = synthesize(&spec, grid).unwrap();
        let init = MeasureSnapshot::Gaussian { mean: vec![1.0], cov: Mat::scalar(0.25) };
        let t0 = propagate_gaussian(&spec, &fb, &init, 0.0, grid).unwrap();
        let te = propagate_gaussian(&spec, &fb, &init, 0.1, grid).unwrap();
        let sup = sup_w2(&t0, &te).unwrap();
        // Means coincide, so W2(t) = |sqrt(c_eps) - sqrt(c_0)|.
        let mut expected = 0.0_f64;
        for (a, b) in t0.snapshots.iter().zip(&te.snapshots) {
            let (MeasureSnapshot::Gaussian { cov: c0, .. }, MeasureSnapshot::Gaussian { cov: ce, .. }) =
                (a, b)
            else {
                panic!()
            };
            expected = expected.max((ce.get(0, 0).sqrt() - c0.get(0, 0).sqrt()).abs());
        }
        assert!((sup - expected).abs() <= 1e-12);
    }

    #[test]
    fn total_cost_zero_matrices() {
        let spec = ScalarSpecBuilder { QT: 0.0, ..Default::default() }.build();
        let grid = TimeGrid::new(10, 1.0);
        let init = MeasureSnapshot::Empirical { points: vec![vec![1.0], vec![2.0]] };
        let zero = ZeroControl { dimension: 1 };
        let traj =
            crate::dynamics::propagate_deterministic(&spec, &zero, &init, grid).unwrap();
        let c = total_cost(&spec, &traj, &zero).unwrap();
        assert_eq!(c.total, 0.0);
    }

    #[test]
    fn total_cost_frozen_state_terminal_only() {
        // Zero control freezes the state; only the terminal cost remains.
        let spec = ScalarSpecBuilder::default().build();
        let grid = TimeGrid::new(100, 1.0);
        let init = MeasureSnapshot::Gaussian { mean: vec![1.0], cov: Mat::scalar(0.25) };
        let nodes = grid.steps() + 1;
        let frozen = crate::synthesis::AffineFeedback {
            gain: crate::synthesis::MatCurve {
                grid,
                values: vec![Mat::zeros(1, 1); nodes],
                slopes: vec![Mat::zeros(1, 1); nodes],
            },
            offset: crate::synthesis::VecCurve {
                grid,
                values: vec![vec![0.0]; nodes],
                slopes: vec![vec![0.0]; nodes],
            },
        };
        let traj = propagate_gaussian(&spec, &frozen, &init, 0.0, grid).unwrap();
        let c = total_cost(&spec, &traj, &frozen).unwrap();
        assert!((c.total - 0.625).abs() <= 1e-12, "{}", c.total);
        assert_eq!(c.running, 0.0);
    }

    #[test]
    fn total_cost_optimal_feedback_value_identity() {
        // J = (1/2) E[x0' P(0) x0] = 0.25 * 1.25 = 0.3125.
        let spec = ScalarSpecBuilder::default().build();
        let grid = TimeGrid::new(1000, 1.0);
        let (_, fb) = synthesize(&spec, grid).unwrap();
        let init = MeasureSnapshot::Gaussian { mean: vec![1.0], cov: Mat::scalar(0.25) };
        let traj = propagate_gaussian(&spec, &fb, &init, 0.0, grid).unwrap();
        let c = total_cost(&spec, &traj, &fb).unwrap();
        assert!((c.total - 0.3125).abs() <= 1e-6, "{}", c.total);
    }

    #[test]
    fn empirical_vs_bures_agreement() {
        let n = 4096;
        let g1 = crate::problem::InitialMeasure::Gaussian { mean: vec![0.2], cov: Mat::scalar(1.0) };
        let g2 = crate::problem::InitialMeasure::Gaussian { mean: vec![-0.5], cov: Mat::scalar(2.25) };
        let MeasureSnapshot::Empirical { points: p1 } =
            crate::dynamics::sample_initial(&g1, n, 3).unwrap()
        else {
            panic!()
        };
        let MeasureSnapshot::Empirical { points: p2 } =
            crate::dynamics::sample_initial(&g2, n, 4).unwrap()
        else {
            panic!()
        };
        let xa: Vec<f64> = p1.iter().map(|p| p[0]).collect();
        let xb: Vec<f64> = p2.iter().map(|p| p[0]).collect();
        let empirical = w2_1d(&xa, &xb).unwrap();
        let exact =
            w2_gaussian(&[0.2], &Mat::scalar(1.0), &[-0.5], &Mat::scalar(2.25)).unwrap();
        assert!((empirical - exact).abs() <= 0.05, "{empirical} vs {exact}");
    }
}
