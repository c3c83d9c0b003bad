//! Piecewise-linear finite elements on [`TetMesh`]: assembly, quadrature
//! and error norms.

use crate::mesh::{Tag, TetMesh};
use crate::quad::{tet_rule, triangle_rule};
use crate::spectrum::neumaier;
use crate::sparse::Csr;
use rayon::prelude::*;
use serde::Serialize;

pub type Field3<'a> = dyn Fn([f64; 3]) -> f64 + Sync + 'a;

fn bary_point(p: &[[f64; 3]], l: &[f64]) -> [f64; 3] {
    let mut x = [0.0; 3];
    for (k, pk) in p.iter().enumerate() {
        for d in 0..3 {
            x[d] += l[k] * pk[d];
        }
    }
    x
}

/// Stiffness matrix `(grad phi_a, grad phi_b)`.
pub fn stiffness(mesh: &TetMesh) -> Csr {
    let mut a = Csr::from_cells(mesh.nodes.len(), &mesh.tets);
    let local: Vec<[[f64; 4]; 4]> = (0..mesh.tets.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|t| {
            let (g, vol) = mesh.gradients(t);
            let mut k = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    k[i][j] = vol * (g[i][0] * g[j][0] + g[i][1] * g[j][1] + g[i][2] * g[j][2]);
                }
            }
            k
        })
        .collect();
    for (t, k) in local.iter().enumerate() {
        let v = mesh.tets[t];
        for i in 0..4 {
            for j in 0..4 {
                a.add(v[i], v[j], k[i][j]);
            }
        }
    }
    a
}

/// Load vector `(f, phi_a)` over tetrahedra accepted by `cells`.
pub fn volume_load(mesh: &TetMesh, f: &Field3<'_>, degree: usize) -> Vec<f64> {
    let rule = tet_rule(degree);
    let local: Vec<[f64; 4]> = (0..mesh.tets.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|t| {
            let p = mesh.tet_points(t);
            let vol = mesh.tet_volume(t);
            let mut r = [0.0; 4];
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let v = w * vol * f(bary_point(&p, l));
                for k in 0..4 {
                    r[k] += v * l[k];
                }
            }
            r
        })
        .collect();
    let mut b = vec![0.0; mesh.nodes.len()];
    for (t, r) in local.iter().enumerate() {
        for k in 0..4 {
            b[mesh.tets[t][k]] += r[k];
        }
    }
    b
}

/// Load vector `(g, phi_a)` over boundary faces whose tag passes `select`.
pub fn boundary_load(mesh: &TetMesh, select: &dyn Fn(Tag) -> bool, g: &dyn Fn(Tag, [f64; 3]) -> f64, degree: usize) -> Vec<f64> {
    let rule = triangle_rule(degree);
    let mut b = vec![0.0; mesh.nodes.len()];
    for f in mesh.boundary.iter().filter(|f| select(f.tag)) {
        let p = [mesh.nodes[f.v[0]], mesh.nodes[f.v[1]], mesh.nodes[f.v[2]]];
        let area = crate::mesh::tri_area(p[0], p[1], p[2]);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let v = w * area * g(f.tag, bary_point(&p, l));
            for k in 0..3 {
                b[f.v[k]] += v * l[k];
            }
        }
    }
    b
}

/// `int f` over the tetrahedra whose centroid passes `region`.
pub fn integrate(mesh: &TetMesh, f: &Field3<'_>, region: &(dyn Fn([f64; 3]) -> bool + Sync), degree: usize) -> f64 {
    let rule = tet_rule(degree);
    let parts: Vec<f64> = (0..mesh.tets.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|t| {
            let p = mesh.tet_points(t);
            if !region(bary_point(&p, &[0.25; 4])) {
                return 0.0;
            }
            let vol = mesh.tet_volume(t);
            rule.points.iter().zip(&rule.weights).map(|(l, w)| w * vol * f(bary_point(&p, l))).sum()
        })
        .collect();
    neumaier(parts.into_iter())
}

/// `int g` over boundary faces passing `select`.
pub fn integrate_boundary(mesh: &TetMesh, select: &dyn Fn(Tag) -> bool, g: &dyn Fn(Tag, [f64; 3]) -> f64, degree: usize) -> f64 {
    let rule = triangle_rule(degree);
    neumaier(mesh.boundary.iter().filter(|f| select(f.tag)).map(|f| {
        let p = [mesh.nodes[f.v[0]], mesh.nodes[f.v[1]], mesh.nodes[f.v[2]]];
        let area = crate::mesh::tri_area(p[0], p[1], p[2]);
        rule.points.iter().zip(&rule.weights).map(|(l, w)| w * area * g(f.tag, bary_point(&p, l))).sum::<f64>()
    }))
}

/// `int u_h g` for a nodal field.
pub fn integrate_product(mesh: &TetMesh, u: &[f64], g: &Field3<'_>, degree: usize) -> f64 {
    let rule = tet_rule(degree);
    let parts: Vec<f64> = (0..mesh.tets.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|t| {
            let p = mesh.tet_points(t);
            let v = mesh.tets[t];
            let vol = mesh.tet_volume(t);
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(l, w)| {
                    let uh: f64 = (0..4).map(|k| l[k] * u[v[k]]).sum();
                    w * vol * uh * g(bary_point(&p, l))
                })
                .sum()
        })
        .collect();
    neumaier(parts.into_iter())
}

/// Same as [`integrate_product`] for a boundary integral.
pub fn integrate_boundary_product(mesh: &TetMesh, u: &[f64], select: &dyn Fn(Tag) -> bool, g: &dyn Fn(Tag, [f64; 3]) -> f64, degree: usize) -> f64 {
    let rule = triangle_rule(degree);
    neumaier(mesh.boundary.iter().filter(|f| select(f.tag)).map(|f| {
        let p = [mesh.nodes[f.v[0]], mesh.nodes[f.v[1]], mesh.nodes[f.v[2]]];
        let area = crate::mesh::tri_area(p[0], p[1], p[2]);
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| {
                let uh: f64 = (0..3).map(|k| l[k] * u[f.v[k]]).sum();
                w * area * uh * g(f.tag, bary_point(&p, l))
            })
            .sum::<f64>()
    }))
}

/// Constant gradient of a P1 field on tetrahedron `t`.
pub fn gradient(mesh: &TetMesh, u: &[f64], t: usize) -> [f64; 3] {
    let (g, _) = mesh.gradients(t);
    let v = mesh.tets[t];
    let mut out = [0.0; 3];
    for k in 0..4 {
        for d in 0..3 {
            out[d] += u[v[k]] * g[k][d];
        }
    }
    out
}

/// Nodal gradients by volume-weighted averaging of the element gradients
/// over each node's patch.
pub fn recover_gradient(mesh: &TetMesh, u: &[f64]) -> Vec<[f64; 3]> {
    let mut g = vec![[0.0; 3]; mesh.nodes.len()];
    let mut w = vec![0.0; mesh.nodes.len()];
    for t in 0..mesh.tets.len() {
        let gt = gradient(mesh, u, t);
        let vol = mesh.tet_volume(t);
        for &v in &mesh.tets[t] {
            w[v] += vol;
            for d in 0..3 {
                g[v][d] += vol * gt[d];
            }
        }
    }
    g.iter_mut().zip(&w).for_each(|(gv, &wv)| gv.iter_mut().for_each(|x| *x /= wv));
    g
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub h1: f64,
}

/// Norms of `u_h - w` over tetrahedra whose centroid passes `region`, where
/// `w` returns value and gradient. Pass `None` to measure `u_h` alone.
pub fn error_norms(
    mesh: &TetMesh,
    u: &[f64],
    w: Option<&(dyn Fn([f64; 3]) -> (f64, [f64; 3]) + Sync)>,
    region: &(dyn Fn([f64; 3]) -> bool + Sync),
    degree: usize,
) -> Norms {
    let rule = tet_rule(degree);
    let parts: Vec<(f64, f64)> = (0..mesh.tets.len())
        .into_par_iter()
        .with_min_len(128)
        .map(|t| {
            let p = mesh.tet_points(t);
            if !region(bary_point(&p, &[0.25; 4])) {
                return (0.0, 0.0);
            }
            let v = mesh.tets[t];
            let vol = mesh.tet_volume(t);
            let gu = gradient(mesh, u, t);
            let (mut l2, mut h1) = (0.0, 0.0);
            for (l, wt) in rule.points.iter().zip(&rule.weights) {
                let uh: f64 = (0..4).map(|k| l[k] * u[v[k]]).sum();
                let (wv, wg) = w.map_or((0.0, [0.0; 3]), |w| w(bary_point(&p, l)));
                let e = uh - wv;
                let de = [gu[0] - wg[0], gu[1] - wg[1], gu[2] - wg[2]];
                l2 += wt * vol * e * e;
                h1 += wt * vol * (de[0] * de[0] + de[1] * de[1] + de[2] * de[2]);
            }
            (l2, h1)
        })
        .collect();
    let l2 = neumaier(parts.iter().map(|p| p.0));
    let h1 = neumaier(parts.iter().map(|p| p.1));
    Norms { l2: l2.sqrt(), h1_semi: h1.sqrt(), h1: (l2 + h1).sqrt() }
}
