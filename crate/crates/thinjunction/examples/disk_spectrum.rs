//! Neumann spectrum of a disk and the zero-mean Neumann solver for the
//! cross-section correctors.

use std::f64::consts::PI;
use thinjunction::disk::solve_disk_neumann;
use thinjunction::spectrum::neumann_spectrum;

fn main() {
    let sp = neumann_spectrum(1.0, 8);
    println!("first Neumann eigenvalues of the unit disk:");
    for m in &sp.modes {
        println!("  n = {} m = {} {:?}  lambda = {:.10}", m.n, m.m, m.parity, m.lambda);
    }

    // -Delta u = 2c/h with outward flux -c on the rim
    let (h, c) = (0.25, 1.0);
    let u = solve_disk_neumann(h, &|_, _| 2.0 * c / h, &|_| c).expect("compatible data");
    let mut worst = 0.0f64;
    for k in 0..=8 {
        let r = h * k as f64 / 8.0;
        let exact = -(c / (2.0 * h)) * r * r + c * h / 4.0;
        worst = worst.max((u.eval_polar(r, 0.3) - exact).abs());
    }
    println!("radial closed form, sup error: {worst:.2e}");

    // non-radial data: g = cos(theta) r, matched by the rim flux
    let v = solve_disk_neumann(h, &|r, t| r * t.cos(), &|t| h * h / 3.0 * t.cos()).expect("compatible data");
    println!("non-radial solve: mean {:.1e}, u(h/2, 0) = {:.6e}, u(h/2, pi) = {:.6e}", v.mean(), v.eval_polar(h / 2.0, 0.0), v.eval_polar(h / 2.0, PI));
}
