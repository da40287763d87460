//! Closed-form propagation of a Gaussian measure under the optimal
//! feedback, with and without diffusion. Affine dynamics map Gaussians to
//! Gaussians, so only the mean and covariance evolve.

use mflq::dynamics::{propagate_gaussian, MeasureSnapshot};
use mflq::matkit::Mat;
use mflq::problem::ScalarSpecBuilder;
use mflq::synthesis::{synthesize, TimeGrid};

fn main() {
    let spec = ScalarSpecBuilder::default().build();
    let grid = TimeGrid::new(1000, spec.horizon);
    let (_, feedback) = synthesize(&spec, grid).unwrap();
    let init = MeasureSnapshot::Gaussian { mean: vec![1.0], cov: Mat::scalar(0.25) };

    for eps in [0.0, 0.1] {
        let traj = propagate_gaussian(&spec, &feedback, &init, eps, grid).unwrap();
        println!("viscosity {eps}");
        for i in [0, 500, 1000] {
            if let MeasureSnapshot::Gaussian { mean, cov } = &traj.snapshots[i] {
                println!("  t {:4.2}  mean {:10.6}  cov {:10.6}", grid.node(i), mean[0], cov.get(0, 0));
            }
        }
    }
    println!();
    println!("terminal covariance: (2-t)^2/16 -> 0.0625 without noise, +eps t(2-t) -> 0.1625 at eps 0.1");
}
