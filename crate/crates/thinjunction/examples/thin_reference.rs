//! Finite-element solution on the thin domain at one `eps`, compared with
//! the first two partial sums of the expansion.

use thinjunction::assembler::Hierarchy;
use thinjunction::config::{ProblemSpec, RadiusProfile};
use thinjunction::junction::{TruncatedJunction, DEFAULT_EXTENT};
use thinjunction::mesh::MeshParams;
use thinjunction::poly::Poly3;
use thinjunction::reference::{exact_measure, Region, ThinDomain, ThinMeshParams};

fn main() {
    let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(1.0));
    spec.h = [RadiusProfile::constant(0.25), RadiusProfile::constant(0.2), RadiusProfile::constant(0.22)];
    let eps = 0.1;
    let tj = TruncatedJunction::for_spec(&spec, spec.ell + DEFAULT_EXTENT, &MeshParams::default());
    let h = Hierarchy::build(&spec, 1, Some(tj)).unwrap();

    let d = ThinDomain::new(&spec, eps, &ThinMeshParams::default());
    let u = d.solve(&spec).unwrap();
    println!("{} nodes, {} CG iterations, measure {:.6e} (round sections {:.6e})", d.node_count(), u.iterations, d.measure(), exact_measure(&spec, eps));
    for m in 0..=1 {
        let s = h.sum(m, eps).unwrap();
        let w = |x: [f64; 3]| s.evaluate(x).unwrap();
        let full = d.norms(&u.values, Some(&w), Region::Full);
        let junc = d.norms(&u.values, Some(&w), Region::Junction);
        println!("U^({m}): H1 error {:.3e} (L2 {:.3e}), near the junction {:.3e}", full.h1, full.l2, junc.h1);
    }
    let means = d.average_e(&spec, &u.values, 1).unwrap();
    let (s, v) = means[means.len() / 2];
    println!("section mean on cylinder 2 at x = {s:.3}: {v:.6e}, omega_0 + eps omega_1 = {:.6e}", h.omegas[0].value(1, s) + eps * h.omegas[1].value(1, s));
}
