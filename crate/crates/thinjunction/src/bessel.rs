//! Bessel functions of the first kind and the zeros of their derivatives.

/// `J_n(x)` for `x >= 0`.
pub fn j(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x < 2.0 {
        series(n, x)
    } else {
        miller(n, x)
    }
}

/// `J_n'(x)`.
pub fn jp(n: usize, x: f64) -> f64 {
    if n == 0 {
        -j(1, x)
    } else {
        0.5 * (j(n - 1, x) - j(n + 1, x))
    }
}

/// `J_n''(x)` from Bessel's equation; `x > 0`.
pub fn jpp(n: usize, x: f64) -> f64 {
    let nf = n as f64;
    -jp(n, x) / x - (1.0 - nf * nf / (x * x)) * j(n, x)
}

fn series(n: usize, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= h / k as f64;
    }
    let mut sum = term;
    let q = -h * h;
    for k in 1..60 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Backward recurrence normalised by `J_0 + 2 sum J_2k = 1`.
fn miller(n: usize, x: f64) -> f64 {
    let start = 2 * ((n.max(x as usize) + 30 + (x.sqrt() * 10.0) as usize) / 2);
    let (mut jp1, mut jk) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    let mut out = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * jk - jp1;
        jp1 = jk;
        jk = jm1;
        // jk now holds J_{k-1}
        if k - 1 == n {
            out = jk;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * jk;
        }
        if jk.abs() > 1e250 {
            jk *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            out *= 1e-250;
        }
    }
    norm += jk;
    out / norm
}

/// `m`-th positive zero (`m >= 1`) of `J_n'`.
pub fn jp_zero(n: usize, m: usize) -> f64 {
    jp_zeros_below(n, f64::INFINITY, m)[m - 1]
}

/// Positive zeros of `J_n'` in increasing order, stopping at `limit` or
/// after `max_count` zeros.
pub fn jp_zeros_below(n: usize, limit: f64, max_count: usize) -> Vec<f64> {
    let step = 0.05;
    let mut x = if n == 0 { step } else { n as f64 };
    let mut g0 = jp(n, x);
    let mut out = Vec::new();
    while out.len() < max_count && x < limit {
        let x1 = x + step;
        let g1 = jp(n, x1);
        if g0 == 0.0 {
            out.push(x);
        } else if g0 * g1 < 0.0 {
            out.push(refine(n, x, x1));
        }
        x = x1;
        g0 = g1;
    }
    out.retain(|&r| r < limit);
    out
}

fn refine(n: usize, mut a: f64, mut b: f64) -> f64 {
    let ga = jp(n, a);
    for _ in 0..30 {
        let m = 0.5 * (a + b);
        if jp(n, m) * ga > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let mut r = 0.5 * (a + b);
    for _ in 0..5 {
        let d = jp(n, r) / jpp(n, r);
        r -= d;
        if d.abs() < 1e-16 * r {
            break;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `J_n(x) = (1/2pi) int_0^{2pi} cos(n t - x sin t) dt`.
    fn j_integral(n: usize, x: f64) -> f64 {
        crate::quad::trapezoid_periodic(&|t| (n as f64 * t - x * t.sin()).cos(), 128) / (2.0 * PI)
    }

    fn jp_integral(n: usize, x: f64) -> f64 {
        crate::quad::trapezoid_periodic(&|t| t.sin() * (n as f64 * t - x * t.sin()).sin(), 128) / (2.0 * PI)
    }

    #[test]
    fn values_match_integral_representation() {
        for n in 0..12 {
            for &x in &[0.1, 0.9, 1.99, 2.0, 3.7, 8.0, 14.5, 25.0] {
                let (a, b) = (j(n, x), j_integral(n, x));
                assert!((a - b).abs() < 1e-14, "J_{n}({x}): {a} vs {b}");
                assert!((jp(n, x) - jp_integral(n, x)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn first_derivative_zero_by_bisection_oracle() {
        let (mut a, mut b) = (1.5, 2.2);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if jp_integral(1, a) * jp_integral(1, m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        assert!((jp_zero(1, 1) - 0.5 * (a + b)).abs() < 1e-12);
        assert!((jp_zero(1, 1) - 1.841_183_781_3).abs() < 1e-9);
        // J_0' = -J_1 vanishes at j_{1,1}
        assert!((jp_zero(0, 1) - 3.831_705_970_207_512).abs() < 1e-12);
    }
}
