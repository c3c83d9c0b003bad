//! Build the expansion to second order on a tapered junction and evaluate
//! its partial sums and residuals at a few points of the thin domain.

use thinjunction::assembler::Hierarchy;
use thinjunction::config::{local_to_global, ProblemSpec, RadiusProfile};
use thinjunction::junction::{TruncatedJunction, DEFAULT_EXTENT};
use thinjunction::mesh::MeshParams;
use thinjunction::poly::Poly3;

fn main() {
    let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(1.0));
    spec.h = [RadiusProfile::taper(0.25, 0.18, 0.3, 0.8), RadiusProfile::constant(0.2), RadiusProfile::constant(0.22)];
    let tj = TruncatedJunction::for_spec(&spec, spec.ell + DEFAULT_EXTENT, &MeshParams { segments: 32, ..MeshParams::default() });
    let h = Hierarchy::build(&spec, 2, Some(tj)).expect("solvable hierarchy");
    println!("delta per order {:?}", h.constants.delta);
    println!("d* per order {:?}", h.constants.dstar);
    println!("solvability defects {:?}", h.constants.solvability);

    let eps = 0.1;
    let u = h.sum(2, eps).unwrap();
    println!("{:>24} {:>12} {:>12} {:>12}", "x", "U^(2)", "|grad|", "R_1");
    for x in [[0.0, 0.0, 0.0], local_to_global(0, 0.05, 0.01, 0.0), local_to_global(1, 0.4, 0.0, 0.01), local_to_global(0, 0.97, 0.0, 0.0)] {
        let (v, g) = u.evaluate(x).unwrap();
        let r1 = u.residual_term(x, 1).unwrap();
        let gn = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        println!("{:>24} {v:>12.6} {gn:>12.4e} {r1:>12.3e}", format!("{:.3?}", x));
    }
}
