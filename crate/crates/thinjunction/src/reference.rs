//! Direct P1 solution of the full problem on the thin domain, used to check
//! the expansion. Region norms and the cross-section average live here too.

use crate::config::{global_to_local, ProblemSpec};
use crate::fem::{self, Norms};
use crate::mesh::{graded_stations, Geometry, MeshParams, Tag, TetMesh};
use crate::sparse::{pcg_two_level, CoarseSpace, Constraint, Csr, SolveError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CG_TOL: f64 = 1e-10;
const CG_MAX_ITER: usize = 100_000;
const QUAD_DEGREE: usize = 4;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no Dirichlet nodes")]
    NoDirichlet,
    #[error("cross-section average needs a constant radius on cylinder {0}")]
    VaryingRadius(usize),
    #[error("unknown region '{0}'")]
    UnknownRegion(String),
}

/// Resolution of the thin-domain mesh.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThinMeshParams {
    /// Polygon sides per cross-section.
    pub segments: usize,
    /// Axial spacing next to the box and the ends, in units of `eps h_min`.
    pub axial: f64,
    /// Largest axial spacing.
    pub coarse: f64,
    /// Growth of the spacing per unit distance from the nearest end.
    pub growth: f64,
}

impl Default for ThinMeshParams {
    fn default() -> Self {
        ThinMeshParams { segments: 32, axial: 0.25, coarse: 0.01, growth: 0.08 }
    }
}

impl ThinMeshParams {
    pub fn refined(&self, factor: f64) -> Self {
        let p = ((self.segments as f64 / 4.0) * factor).round() as usize;
        ThinMeshParams { segments: 4 * p.max(2), axial: self.axial / factor, coarse: self.coarse / factor, growth: self.growth }
    }

    fn core(&self) -> MeshParams {
        MeshParams { segments: self.segments, core: 0.5, axial: self.axial }
    }
}

/// Regions of the thin domain on which errors are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// The whole domain.
    Full,
    /// Cylinder `i` beyond `x_i = 3 ell eps^alpha`.
    Cylinder(usize),
    /// Every point with all `x_i < 2 ell eps`.
    Junction,
}

impl std::str::FromStr for Region {
    type Err = ReferenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Region::Full),
            "junction" => Ok(Region::Junction),
            "cyl1" => Ok(Region::Cylinder(0)),
            "cyl2" => Ok(Region::Cylinder(1)),
            "cyl3" => Ok(Region::Cylinder(2)),
            _ => Err(ReferenceError::UnknownRegion(s.to_string())),
        }
    }
}

impl Region {
    pub fn name(&self) -> String {
        match self {
            Region::Full => "full".into(),
            Region::Junction => "junction".into(),
            Region::Cylinder(i) => format!("cyl{}", i + 1),
        }
    }

    pub fn contains(&self, x: [f64; 3], eps: f64, ell: f64, alpha: f64) -> bool {
        match *self {
            Region::Full => true,
            Region::Cylinder(i) => x[i] > 3.0 * ell * eps.powf(alpha),
            Region::Junction => x.iter().all(|&v| v < 2.0 * ell * eps),
        }
    }
}

pub fn thin_geometry(spec: &ProblemSpec, eps: f64, p: &ThinMeshParams) -> Geometry {
    let half = eps * spec.ell;
    let hmin = spec.h.iter().map(|h| h.eval(0.0)).fold(f64::INFINITY, f64::min);
    let st = graded_stations(half, p.axial * eps * hmin, p.coarse, p.growth);
    Geometry {
        half,
        stations: std::array::from_fn(|_| st.clone()),
        radii: std::array::from_fn(|i| st.iter().map(|&s| eps * spec.h[i].eval(s)).collect()),
    }
}

/// Meshed thin domain with its assembled stiffness.
pub struct ThinDomain {
    pub eps: f64,
    pub ell: f64,
    pub alpha: f64,
    pub params: ThinMeshParams,
    pub mesh: TetMesh,
    pub stiffness: Csr,
    pub dirichlet: Vec<usize>,
    coarse: CoarseSpace,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteField {
    #[serde(skip)]
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ThinDomain {
    pub fn new(spec: &ProblemSpec, eps: f64, params: &ThinMeshParams) -> Self {
        let mesh = TetMesh::build(&thin_geometry(spec, eps, params), &params.core());
        let stiffness = fem::stiffness(&mesh);
        let mut dirichlet: Vec<usize> = (0..3).flat_map(|i| mesh.tagged_nodes(Tag::End(i))).collect();
        dirichlet.sort_unstable();
        let coarse = mesh.axial_coarse_space(params.coarse.max(4.0 * eps * spec.h0()[0]));
        ThinDomain { eps, ell: spec.ell, alpha: spec.alpha, params: params.clone(), mesh, stiffness, dirichlet, coarse }
    }

    pub fn node_count(&self) -> usize {
        self.mesh.nodes.len()
    }

    /// Load `(f, psi) - sum (eps phi_i(x_i, xbar / eps), psi)_lateral`. The
    /// lateral part is rescaled to the round perimeter.
    pub fn load(&self, spec: &ProblemSpec) -> Vec<f64> {
        let mut b = fem::volume_load(&self.mesh, &|x| spec.f.eval(x), QUAD_DEGREE);
        if spec.has_lateral_load() {
            let e = self.eps;
            let q = crate::mesh::perimeter_ratio(self.params.segments);
            let lat = fem::boundary_load(
                &self.mesh,
                &|t| matches!(t, Tag::Lateral(_)),
                &|t, x| match t {
                    Tag::Lateral(i) => {
                        let [s, a, c] = global_to_local(i, x);
                        q * e * spec.phi[i].eval([s, a / e, c / e])
                    }
                    _ => 0.0,
                },
                QUAD_DEGREE,
            );
            b.iter_mut().zip(&lat).for_each(|(p, q)| *p -= q);
        }
        b
    }

    /// Homogeneous Dirichlet data on the end disks.
    pub fn solve(&self, spec: &ProblemSpec) -> Result<DiscreteField, ReferenceError> {
        self.solve_load(&self.load(spec), &self.dirichlet, CG_TOL)
    }

    /// Solve with `u = g` on `fixed`, load `b` elsewhere.
    pub fn solve_with_boundary(&self, b: &[f64], fixed: &[usize], g: &dyn Fn([f64; 3]) -> f64, tol: f64) -> Result<DiscreteField, ReferenceError> {
        let mut lift = vec![0.0; self.node_count()];
        for &v in fixed {
            lift[v] = g(self.mesh.nodes[v]);
        }
        let al = self.stiffness.apply(&lift);
        let rhs: Vec<f64> = b.iter().zip(&al).map(|(p, q)| p - q).collect();
        let mut f = self.solve_load(&rhs, fixed, tol)?;
        f.values.iter_mut().zip(&lift).for_each(|(u, l)| *u += l);
        Ok(f)
    }

    fn solve_load(&self, b: &[f64], fixed: &[usize], tol: f64) -> Result<DiscreteField, ReferenceError> {
        if fixed.is_empty() {
            return Err(ReferenceError::NoDirichlet);
        }
        let c = Constraint::Fixed(fixed.to_vec());
        let (values, st) = pcg_two_level(&self.stiffness, b, &c, tol, CG_MAX_ITER, Some(&self.coarse))?;
        Ok(DiscreteField { values, iterations: st.iterations, residual: st.residual })
    }

    /// `max |(A u - b, v)| / |b|` over test vectors vanishing on the
    /// Dirichlet nodes.
    pub fn galerkin_defect(&self, u: &[f64], b: &[f64], tests: &[Vec<f64>]) -> f64 {
        let mut r = self.stiffness.apply(u);
        r.iter_mut().zip(b).for_each(|(p, q)| *p -= q);
        for &v in &self.dirichlet {
            r[v] = 0.0;
        }
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        tests
            .iter()
            .map(|t| {
                let nt = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                (r.iter().zip(t).map(|(p, q)| p * q).sum::<f64>() / (nb * nt)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Norms of `u - w` over a region; `w = None` measures `u` itself.
    pub fn norms(&self, u: &[f64], w: Option<&(dyn Fn([f64; 3]) -> (f64, [f64; 3]) + Sync)>, region: Region) -> Norms {
        let (e, l, a) = (self.eps, self.ell, self.alpha);
        fem::error_norms(&self.mesh, u, w, &|x| region.contains(x, e, l, a), 2)
    }

    pub fn measure(&self) -> f64 {
        self.mesh.volume()
    }

    /// Cross-section averages `(x_i, E u)` at every station of cylinder `i`.
    pub fn average_e(&self, spec: &ProblemSpec, u: &[f64], i: usize) -> Result<Vec<(f64, f64)>, ReferenceError> {
        if !spec.h[i].is_constant() {
            return Err(ReferenceError::VaryingRadius(i));
        }
        let c = &self.mesh.cylinders[i];
        Ok(c.stations.iter().enumerate().map(|(k, &s)| (s, c.section_mean(&self.mesh, k, u))).collect())
    }
}

/// `meas` of the thin domain with round sections.
pub fn exact_measure(spec: &ProblemSpec, eps: f64) -> f64 {
    let half = eps * spec.ell;
    let cyl: f64 = (0..3)
        .map(|i| crate::quad::adaptive_split(&|x| std::f64::consts::PI * (eps * spec.h[i].eval(x)).powi(2), half, 1.0, &spec.h[i].breaks(), 1e-14))
        .sum();
    (2.0 * half).powi(3) + cyl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> ThinMeshParams {
        ThinMeshParams { segments: 16, axial: 0.5, coarse: 0.04, growth: 0.2 }
    }

    #[test]
    fn zero_data_gives_zero() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        let d = ThinDomain::new(&spec, 0.1, &small());
        let u = d.solve(&spec).unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
        let n = d.norms(&u.values, None, Region::Full);
        assert_eq!((n.l2, n.h1_semi, n.h1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn linear_data_reproduced() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        let d = ThinDomain::new(&spec, 0.1, &small());
        let mut fixed: Vec<usize> = d.mesh.boundary.iter().flat_map(|f| f.v).collect();
        fixed.sort_unstable();
        fixed.dedup();
        let g = |x: [f64; 3]| 1.0 - x[0];
        let u = d.solve_with_boundary(&vec![0.0; d.node_count()], &fixed, &g, 1e-14).unwrap();
        let err = d.mesh.nodes.iter().zip(&u.values).map(|(p, v)| (v - g(*p)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        // constant gradient: |grad u|^2 meas
        let n = d.norms(&u.values, None, Region::Full);
        assert!((n.h1_semi.powi(2) - d.measure()).abs() < 1e-9 * d.measure());
    }

    #[test]
    fn measure_matches_round_domain() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        let exact = exact_measure(&spec, 0.1);
        let pi = std::f64::consts::PI;
        assert!((exact - (3.0 * pi * 0.025f64.powi(2) * 0.97 + 0.216e-3)).abs() < 1e-15);
        assert!((exact - 5.9313e-3).abs() < 5e-3 * exact, "{exact}");
        let d = ThinDomain::new(&spec, 0.1, &ThinMeshParams::default());
        let one = vec![1.0; d.node_count()];
        let n = d.norms(&one, None, Region::Full);
        assert!((n.l2.powi(2) - exact).abs() < 5e-3 * exact);
    }

    #[test]
    fn smooth_solution_converges_at_second_order() {
        // u = cos(pi x1) with Dirichlet data on the whole boundary
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        let pi = std::f64::consts::PI;
        let exact = |x: [f64; 3]| (pi * x[0]).cos();
        let mut errs = Vec::new();
        for p in [small(), small().refined(2.0)] {
            let d = ThinDomain::new(&spec, 0.1, &p);
            let b = fem::volume_load(&d.mesh, &|x| pi * pi * (pi * x[0]).cos(), 4);
            let mut fixed: Vec<usize> = d.mesh.boundary.iter().flat_map(|f| f.v).collect();
            fixed.sort_unstable();
            fixed.dedup();
            let u = d.solve_with_boundary(&b, &fixed, &exact, CG_TOL).unwrap();
            let w = |x: [f64; 3]| ((pi * x[0]).cos(), [-pi * (pi * x[0]).sin(), 0.0, 0.0]);
            errs.push(d.norms(&u.values, Some(&w), Region::Full).l2);
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!((rate - 2.0).abs() < 0.3, "rate {rate} from {errs:?}");
    }

    #[test]
    fn galerkin_orthogonality_and_averages() {
        let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [1, 0, 0]), (0.5, [0, 0, 0])]));
        spec.phi[1] = Poly3::from_terms(&[(0.3, [0, 1, 0]), (0.2, [0, 0, 0])]);
        let d = ThinDomain::new(&spec, 0.1, &small());
        let u = d.solve(&spec).unwrap();
        assert!(d.dirichlet.iter().all(|&v| u.values[v] == 0.0));
        let b = d.load(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tests: Vec<Vec<f64>> = (0..20).map(|_| (0..d.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        assert!(d.galerkin_defect(&u.values, &b, &tests) < 1e-9);
        // averages of a constant, of x_i and of an odd transverse field
        let n = d.node_count();
        let c = vec![2.5; n];
        let xi: Vec<f64> = d.mesh.nodes.iter().map(|p| p[1]).collect();
        let odd: Vec<f64> = d.mesh.nodes.iter().map(|p| p[0] * p[2]).collect();
        for (s, v) in d.average_e(&spec, &c, 1).unwrap() {
            assert!((v - 2.5).abs() < 1e-13, "{s}");
        }
        for (s, v) in d.average_e(&spec, &xi, 1).unwrap() {
            assert!((v - s).abs() < 1e-13);
        }
        for (_, v) in d.average_e(&spec, &odd, 1).unwrap() {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn regions_parse() {
        assert_eq!("cyl2".parse::<Region>().unwrap(), Region::Cylinder(1));
        assert!("box".parse::<Region>().is_err());
        assert!(Region::Junction.contains([0.05, 0.0, 0.0], 0.1, 0.3, 0.8));
        assert!(!Region::Junction.contains([0.07, 0.0, 0.0], 0.1, 0.3, 0.8));
    }
}
