//! Solve the Riccati cascade for the baseline scalar problem and print the
//! resulting affine feedback u(t, x) = K(t) x + k(t) at a few times.
//!
//! For this problem P(t) = 1/(2 - t) in closed form, so K(0) = -1/2.

use mflq::problem::ScalarSpecBuilder;
use mflq::synthesis::{synthesize, TimeGrid};

fn main() {
    let spec = ScalarSpecBuilder::default().build();
    let grid = TimeGrid::new(1000, spec.horizon);
    let (solution, feedback) = synthesize(&spec, grid).expect("baseline problem is well-posed");

    println!("  t      Sigma(t)      P(t)        K(t)        k(t)      xbar(t)");
    for i in (0..=1000).step_by(200) {
        let t = grid.node(i);
        println!(
            "{t:5.2}  {:10.6}  {:10.6}  {:10.6}  {:10.6}  {:10.6}",
            solution.sigma.values[i].get(0, 0),
            solution.riccati_p.values[i].get(0, 0),
            feedback.gain_at_node(i).get(0, 0),
            feedback.offset_at_node(i)[0],
            solution.xbar.values[i][0],
        );
    }
    println!();
    println!("closed forms: P(t) = 1/(2-t), xbar(t) = (2-t)/2, k = 0");
}
