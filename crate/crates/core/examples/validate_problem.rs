//! Load a problem file and check the standing assumptions.
//!
//!     cargo run --example validate_problem [path/to/problem.json]

use mflq::problem::{validate, ProblemSpec};

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "problems/scalar.json".into());
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {path}: {e}");
            std::process::exit(2);
        }
    };
    let spec = match ProblemSpec::from_json_str(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot parse {path}: {e}");
            std::process::exit(2);
        }
    };
    println!("problem {path}");
    println!("dimension {} horizon {}", spec.dimension, spec.horizon);
    println!("digest {}", spec.digest());
    let report = validate(&spec).expect("well-shaped spec");
    if report.ok() {
        println!("all assumptions hold");
    } else {
        for v in &report.violations {
            println!("violated: {} at {} (magnitude {:.3e})", v.condition, v.at, v.magnitude);
        }
        std::process::exit(1);
    }
}
