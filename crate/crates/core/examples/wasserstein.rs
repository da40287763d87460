//! The three Wasserstein-2 backends side by side: quantile coupling in one
//! dimension, exact assignment for point clouds, and the Bures closed form
//! for Gaussians.

use mflq::matkit::Mat;
use mflq::metrics::{w2_1d, w2_assignment, w2_gaussian};
use mflq::rng;

fn main() {
    // Two samples from shifted Gaussians; translation by c moves W2 by |c|.
    let n = 2000;
    let a: Vec<f64> = (0..n).map(|k| rng::normal(1, 1, 0, 0, k)).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 0.75).collect();
    println!("1-D quantile coupling, pure shift 0.75:   {:.6}", w2_1d(&a, &b).unwrap());

    // Exact assignment on a 2-D cloud against its translate.
    let cloud: Vec<Vec<f64>> = (0..256)
        .map(|i| vec![rng::normal(2, 1, i, 0, 0), rng::normal(2, 1, i, 0, 1)])
        .collect();
    let moved: Vec<Vec<f64>> = cloud.iter().map(|p| vec![p[0] + 0.3, p[1] - 0.4]).collect();
    println!("2-D exact assignment, shift (0.3, -0.4):  {:.6}", w2_assignment(&cloud, &moved).unwrap());
    println!("  (exact value is the shift length 0.5)");

    // Bures formula between two Gaussians.
    let d = w2_gaussian(&[0.0, 0.0], &Mat::diag(&[1.0, 1.0]), &[1.0, 0.0], &Mat::diag(&[4.0, 1.0])).unwrap();
    println!("Gaussian Bures distance:                  {:.6}", d);
    println!("  (closed form: sqrt(1 + (2-1)^2) = sqrt 2 = {:.6})", 2.0f64.sqrt());
}
