//! Limit problem on the three-edge star graph, against its closed form for
//! `h = 1`, `f = x_1`.

use thinjunction::config::ProblemSpec;
use thinjunction::graph::{assemble_rhs0, solve_limit, weak_residual, TransmissionData};
use thinjunction::poly::Poly3;

fn main() {
    let spec = ProblemSpec::uniform(0.3, 1.0, Poly3::from_terms(&[(1.0, [1, 0, 0])]));
    let rhs = assemble_rhs0(&spec);
    let w = solve_limit(&spec, &rhs);

    let exact = |i: usize, x: f64| if i == 0 { -x * x * x / 6.0 + x / 9.0 + 1.0 / 18.0 } else { (1.0 - x) / 18.0 };
    let mut worst = 0.0f64;
    println!("{:>6} {:>14} {:>14} {:>14}", "x", "edge 1", "edge 2", "edge 3");
    for k in 0..=10 {
        let x = k as f64 / 10.0;
        println!("{x:>6.2} {:>14.10} {:>14.10} {:>14.10}", w.value(0, x), w.value(1, x), w.value(2, x));
        for i in 0..3 {
            worst = worst.max((w.value(i, x) - exact(i, x)).abs());
        }
    }
    println!("sup error vs closed form: {worst:.2e}");
    println!("Kirchhoff sum: {:.2e}", w.flux(&spec));
    println!("weak-form residual: {:.2e}", weak_residual(&spec, &w, &rhs, &TransmissionData::default()));
}
