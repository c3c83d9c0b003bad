//! Boundary-layer corrector at a cylinder base: a trace on the end disk
//! decays into the cylinder at the first Neumann eigenvalue.

use thinjunction::bessel;
use thinjunction::layer::BoundaryLayerTerm;

fn main() {
    let h = 0.25;
    let kappa = bessel::jp_zero(1, 1);
    // single mode J_1(kappa r / h) cos(theta)
    let trace = move |r: f64, t: f64| bessel::j(1, kappa * r / h) * t.cos();
    let pi = BoundaryLayerTerm::from_trace(0, 2, h, &trace).expect("zero-mean trace");
    let lam = pi.decay_rate();
    println!("decay rate lambda_1 = {lam:.10} (j'_11 / h = {:.10})", kappa / h);
    let p0 = pi.eval(0.0, 0.5 * h, 0.0);
    for s in [0.0, 1.0 / lam, 2.0 / lam, 5.0 / lam] {
        let ratio = pi.eval(s, 0.5 * h, 0.0) / p0;
        let cert = pi.decay_certificate(s);
        println!("xi* = {s:.4}: ratio {ratio:.6e}  exp(-lambda xi*) {:.6e}  sup {:.3e} <= bound {:.3e}", (-lam * s).exp(), cert.observed, cert.bound);
    }
}
