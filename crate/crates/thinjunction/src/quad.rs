//! Gauss rules on intervals, triangles and tetrahedra; adaptive interval
//! quadrature; periodic trapezoid rule on circles.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Jacobi rule for the weight `(1-t)^alpha (1+t)^beta` on [-1, 1]
/// (Golub-Welsch).
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    let ab = alpha + beta;
    for k in 0..n {
        let kf = k as f64;
        let a = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        j[(k, k)] = a;
        if k + 1 < n {
            let m = kf + 1.0;
            let num = 4.0 * m * (m + alpha) * (m + beta) * (m + ab);
            let den = (2.0 * m + ab).powi(2) * (2.0 * m + ab + 1.0) * (2.0 * m + ab - 1.0);
            let b = (num / den).sqrt();
            j[(k, k + 1)] = b;
            j[(k + 1, k)] = b;
        }
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma(alpha + 1.0) * gamma(beta + 1.0) / gamma(ab + 2.0);
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gamma function for the small positive arguments used by the rules above.
fn gamma(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-12 && x > 0.0 {
        return crate::jet::factorial(x.round() as usize - 1);
    }
    // Lanczos approximation
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Fixed-order Gauss-Legendre integral over [a, b].
pub fn integrate_gl(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(&t, &wt)| wt * f(m + r * t)).sum::<f64>() * r
}

/// Adaptive Gauss-Legendre quadrature to an absolute tolerance.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (x, w) = gauss_legendre(12);
    let rule = |lo: f64, hi: f64| -> f64 {
        let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        x.iter().zip(&w).map(|(&t, &wt)| wt * f(m + r * t)).sum::<f64>() * r
    };
    fn rec(rule: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let (l, r) = (rule(lo, mid), rule(mid, hi));
        if (l + r - whole).abs() <= tol || depth > 40 {
            l + r
        } else {
            rec(rule, lo, mid, l, 0.5 * tol, depth + 1) + rec(rule, mid, hi, r, 0.5 * tol, depth + 1)
        }
    }
    if a == b {
        return 0.0;
    }
    rec(&rule, a, b, rule(a, b), tol, 0)
}

/// Adaptive quadrature split at interior breakpoints.
pub fn adaptive_split(f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    pts.push(b);
    let n = (pts.len() - 1) as f64;
    pts.windows(2).map(|w| adaptive(f, w[0], w[1], tol / n)).sum()
}

/// `int_0^{2 pi} g(t) dt` by the periodic trapezoid rule with `n` points.
pub fn trapezoid_periodic(g: &dyn Fn(f64) -> f64, n: usize) -> f64 {
    let dt = 2.0 * PI / n as f64;
    (0..n).map(|k| g(k as f64 * dt)).sum::<f64>() * dt
}

/// Quadrature on a simplex: barycentric points, weights summing to 1.
#[derive(Clone, Debug)]
pub struct SimplexRule<const N: usize> {
    pub points: Vec<[f64; N]>,
    pub weights: Vec<f64>,
}

pub type TriRule = SimplexRule<3>;
pub type TetRule = SimplexRule<4>;

/// Collapsed-coordinate (conical product) triangle rule exact to `degree`.
pub fn triangle_rule(degree: usize) -> TriRule {
    let n = degree / 2 + 1;
    let (u, wu) = jacobi01(n, 1.0);
    let (v, wv) = jacobi01(n, 0.0);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = u[i];
            let y = v[j] * (1.0 - u[i]);
            points.push([1.0 - x - y, x, y]);
            weights.push(wu[i] * wv[j]);
        }
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    SimplexRule { points, weights }
}

/// Collapsed-coordinate tetrahedron rule exact to `degree`.
pub fn tet_rule(degree: usize) -> TetRule {
    if degree <= 1 {
        return SimplexRule {
            points: vec![[0.25; 4]],
            weights: vec![1.0],
        };
    }
    if degree == 2 {
        let a = 0.585_410_196_624_968_5;
        let b = 0.138_196_601_125_010_5;
        return SimplexRule {
            points: vec![[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]],
            weights: vec![0.25; 4],
        };
    }
    let n = degree / 2 + 1;
    let (u, wu) = jacobi01(n, 2.0);
    let (v, wv) = jacobi01(n, 1.0);
    let (w, ww) = jacobi01(n, 0.0);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = u[i];
                let y = v[j] * (1.0 - x);
                let z = w[k] * (1.0 - x) * (1.0 - v[j]);
                points.push([1.0 - x - y - z, x, y, z]);
                weights.push(wu[i] * wv[j] * ww[k]);
            }
        }
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|wt| *wt /= s);
    SimplexRule { points, weights }
}

/// Gauss-Jacobi rule for weight `(1-u)^alpha` on [0, 1].
fn jacobi01(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_jacobi(n, alpha, 0.0);
    let u = t.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let wu = w.iter().map(|&w| w * 0.5f64.powf(alpha + 1.0)).collect();
    (u, wu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let v = integrate_gl(&|x| x.powi(9) + x.powi(8), -1.0, 1.0, 5);
        assert!((v - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_matches_legendre_for_zero_weight() {
        let (x, w) = gauss_jacobi(6, 0.0, 0.0);
        let (y, v) = gauss_legendre(6);
        for k in 0..6 {
            assert!((x[k] - y[k]).abs() < 1e-13);
            assert!((w[k] - v[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn adaptive_handles_peaks() {
        let v = adaptive(&|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12);
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn tet_rule_degree_five_exact() {
        let r = tet_rule(5);
        // int over unit tet of x^2 y^2 z / vol = 6 * 2!2!1!/(8!) * 6 ... use Dirichlet formula
        let val: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, w)| w * p[1].powi(2) * p[2].powi(2) * p[3])
            .sum();
        // mean of l1^2 l2^2 l3 over a tet = 3! * 2!2!1! / (3 + 5)!
        let exact = 6.0 * 4.0 / 40320.0;
        assert!((val - exact).abs() < 1e-15);
    }

    #[test]
    fn triangle_rule_exact() {
        let r = triangle_rule(5);
        let val: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(3) * p[1].powi(2)).sum();
        // mean over a triangle = 2! a! b! / (2 + a + b)!
        let exact = 2.0 * 6.0 * 2.0 / 5040.0;
        assert!((val - exact).abs() < 1e-15);
    }
}
