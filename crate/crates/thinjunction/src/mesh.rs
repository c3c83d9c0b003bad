//! Conforming tetrahedral meshes of a box `(-L, L)^3` with three cylinders
//! attached to its positive faces.
//!
//! Each positive face carries an O-grid triangulation with an embedded
//! polygonal disk; the box is filled by coning the six face triangulations
//! towards the centre in layers, and the cylinders are extrusions of the
//! disk part of the face. Prisms are split into tetrahedra by the
//! minimum-global-index rule, which keeps shared quadrilaterals conforming.

use crate::config::local_to_global;
use crate::sparse::CoarseSpace;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    /// Box surface outside the attachment disks.
    Wall,
    /// Lateral surface of cylinder `i`.
    Lateral(usize),
    /// Far end disk of cylinder `i`.
    End(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryFace {
    pub v: [usize; 3],
    pub tag: Tag,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshParams {
    /// Boundary segments of each polygonal cross-section; a multiple of 4.
    pub segments: usize,
    /// Half-width of the inner square of the disk O-grid, relative to the radius.
    pub core: f64,
    /// Axial spacing in units of the cross-section radius at the junction.
    pub axial: f64,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams { segments: 48, core: 0.5, axial: 0.25 }
    }
}

impl MeshParams {
    pub fn refined(&self, factor: f64) -> Self {
        let p = ((self.segments as f64 / 4.0) * factor).round() as usize;
        MeshParams { segments: 4 * p.max(2), core: self.core, axial: self.axial / factor }
    }
}

/// Geometry to mesh: box half-width, axial stations of each cylinder
/// (starting at the face, increasing) and the radius at every station.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub half: f64,
    pub stations: [Vec<f64>; 3],
    pub radii: [Vec<f64>; 3],
}

/// Extruded cross-section layers of one cylinder.
#[derive(Clone, Debug)]
pub struct CylinderLayers {
    /// Disk triangulation in face coordinates at the junction.
    pub disk2d: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    pub stations: Vec<f64>,
    pub radii: Vec<f64>,
    /// Global node id of every disk point at every station.
    pub nodes: Vec<Vec<usize>>,
}

impl CylinderLayers {
    /// Index of the station closest to `s`.
    pub fn nearest_station(&self, s: f64) -> usize {
        let mut best = 0;
        for (k, &t) in self.stations.iter().enumerate() {
            if (t - s).abs() < (self.stations[best] - s).abs() {
                best = k;
            }
        }
        best
    }

    /// Area-weighted mean of nodal values over the cross-section at a station.
    pub fn section_mean(&self, mesh: &TetMesh, station: usize, vals: &[f64]) -> f64 {
        let ids = &self.nodes[station];
        let (mut num, mut den) = (0.0, 0.0);
        for t in &self.tris {
            let a = tri_area(mesh.nodes[ids[t[0]]], mesh.nodes[ids[t[1]]], mesh.nodes[ids[t[2]]]);
            num += a * (vals[ids[t[0]]] + vals[ids[t[1]]] + vals[ids[t[2]]]) / 3.0;
            den += a;
        }
        num / den
    }

    /// Cross-section area at a station.
    pub fn section_area(&self, mesh: &TetMesh, station: usize) -> f64 {
        let ids = &self.nodes[station];
        self.tris.iter().map(|t| tri_area(mesh.nodes[ids[t[0]]], mesh.nodes[ids[t[1]]], mesh.nodes[ids[t[2]]])).sum()
    }
}

#[derive(Clone, Debug)]
pub struct TetMesh {
    pub nodes: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub boundary: Vec<BoundaryFace>,
    pub half: f64,
    pub cylinders: [CylinderLayers; 3],
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn tri_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let n = cross(sub(b, a), sub(c, a));
    0.5 * dot(n, n).sqrt()
}

/// Signed volume of a tetrahedron.
pub fn signed_volume(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> f64 {
    dot(sub(b, a), cross(sub(c, a), sub(d, a))) / 6.0
}

/// Circumradius of the regular polygon with `n` sides and the area of the
/// circle of radius `r`.
pub fn area_preserving_radius(r: f64, n: usize) -> f64 {
    let t = 2.0 * PI / n as f64;
    r * (2.0 * PI / (n as f64 * t.sin())).sqrt()
}

/// Circle perimeter over the perimeter of the area-preserving polygon.
pub fn perimeter_ratio(n: usize) -> f64 {
    let nf = n as f64;
    PI / (nf * area_preserving_radius(1.0, n) * (PI / nf).sin())
}

/// Planar triangulation of a face `[-L, L]^2`.
#[derive(Clone, Debug)]
struct Face2D {
    pts: Vec<[f64; 2]>,
    tris: Vec<[usize; 3]>,
    /// Triangles inside the embedded disk (a prefix of `tris`).
    disk_tris: usize,
    /// Points inside the disk (a prefix of `pts`).
    disk_pts: usize,
}

fn grid_coord(h: f64, i: usize, p: usize) -> f64 {
    -h + 2.0 * h * (i as f64 / p as f64)
}

/// Grid index of the `k`-th point of the counter-clockwise boundary loop of
/// a `p x p` grid, starting at the corner `(+, -)`.
fn loop_index(k: usize, p: usize) -> (usize, usize) {
    let (side, j) = (k / p, k % p);
    match side {
        0 => (p, j),
        1 => (p - j, p),
        2 => (0, p - j),
        _ => (j, 0),
    }
}

fn square_loop(h: f64, p: usize) -> Vec<[f64; 2]> {
    (0..4 * p)
        .map(|k| {
            let (i, j) = loop_index(k, p);
            [grid_coord(h, i, p), grid_coord(h, j, p)]
        })
        .collect()
}

fn grid_triangles(ids: &dyn Fn(usize, usize) -> usize, p: usize, tris: &mut Vec<[usize; 3]>) {
    for i in 0..p {
        for j in 0..p {
            let (a, b, c, d) = (ids(i, j), ids(i + 1, j), ids(i + 1, j + 1), ids(i, j + 1));
            if (i + j) % 2 == 0 {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
}

/// Rings between two closed loops of equal length; `inner` ids are given,
/// intermediate rings are interpolated and the outer ring is appended last.
fn ring_band(
    pts: &mut Vec<[f64; 2]>,
    tris: &mut Vec<[usize; 3]>,
    inner: &[usize],
    outer: &[[f64; 2]],
    layers: usize,
) -> Vec<usize> {
    let n = inner.len();
    let a: Vec<[f64; 2]> = inner.iter().map(|&id| pts[id]).collect();
    let mut prev = inner.to_vec();
    for j in 1..=layers {
        let t = j as f64 / layers as f64;
        let ring: Vec<usize> = (0..n)
            .map(|k| {
                pts.push([a[k][0] + t * (outer[k][0] - a[k][0]), a[k][1] + t * (outer[k][1] - a[k][1])]);
                pts.len() - 1
            })
            .collect();
        for k in 0..n {
            let k1 = (k + 1) % n;
            let (p0, p1, q0, q1) = (prev[k], prev[k1], ring[k], ring[k1]);
            if k % 2 == 0 {
                tris.push([p0, p1, q1]);
                tris.push([p0, q1, q0]);
            } else {
                tris.push([p0, p1, q0]);
                tris.push([p1, q1, q0]);
            }
        }
        prev = ring;
    }
    prev
}

fn plain_face(half: f64, p: usize) -> Face2D {
    let mut pts = Vec::with_capacity((p + 1) * (p + 1));
    for i in 0..=p {
        for j in 0..=p {
            pts.push([grid_coord(half, i, p), grid_coord(half, j, p)]);
        }
    }
    let mut tris = Vec::new();
    grid_triangles(&|i, j| i * (p + 1) + j, p, &mut tris);
    Face2D { pts, tris, disk_tris: 0, disk_pts: 0 }
}

fn disk_face(half: f64, r: f64, params: &MeshParams) -> Face2D {
    let p = params.segments / 4;
    let n = 4 * p;
    let c = params.core * r;
    let rho = area_preserving_radius(r, n);
    let mut pts = Vec::new();
    for i in 0..=p {
        for j in 0..=p {
            pts.push([grid_coord(c, i, p), grid_coord(c, j, p)]);
        }
    }
    let mut tris = Vec::new();
    grid_triangles(&|i, j| i * (p + 1) + j, p, &mut tris);
    let inner: Vec<usize> = (0..n)
        .map(|k| {
            let (i, j) = loop_index(k, p);
            i * (p + 1) + j
        })
        .collect();
    let circle: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let t = -PI / 4.0 + 2.0 * PI * k as f64 / n as f64;
            [rho * t.cos(), rho * t.sin()]
        })
        .collect();
    let spacing = 2.0 * PI * r / n as f64;
    let n1 = ((r - c) / spacing).ceil().max(1.0) as usize;
    let rim = ring_band(&mut pts, &mut tris, &inner, &circle, n1);
    let disk_tris = tris.len();
    let disk_pts = pts.len();
    let n2 = ((half * 2f64.sqrt() - rho) / (2.0 * spacing)).ceil().max(1.0) as usize;
    ring_band(&mut pts, &mut tris, &rim, &square_loop(half, p), n2);
    Face2D { pts, tris, disk_tris, disk_pts }
}

/// Split a prism (bottom `v[0..3]`, `v[3+k]` above `v[k]`) into three
/// tetrahedra so that every quadrilateral face is cut along the diagonal
/// through its smallest global index.
pub fn split_prism(v: [usize; 6]) -> [[usize; 4]; 3] {
    const ROT: [[usize; 6]; 6] = [
        [0, 1, 2, 3, 4, 5],
        [1, 2, 0, 4, 5, 3],
        [2, 0, 1, 5, 3, 4],
        [3, 5, 4, 0, 2, 1],
        [4, 3, 5, 1, 0, 2],
        [5, 4, 3, 2, 1, 0],
    ];
    let m = (0..6).min_by_key(|&k| v[k]).unwrap();
    let w: Vec<usize> = ROT[m].iter().map(|&k| v[k]).collect();
    if w[1].min(w[5]) < w[2].min(w[4]) {
        [[w[0], w[1], w[2], w[5]], [w[0], w[1], w[5], w[4]], [w[0], w[4], w[5], w[3]]]
    } else {
        [[w[0], w[1], w[2], w[4]], [w[0], w[4], w[2], w[5]], [w[0], w[4], w[5], w[3]]]
    }
}

struct Builder {
    nodes: Vec<[f64; 3]>,
    index: HashMap<[i64; 3], usize>,
    quantum: f64,
    tets: Vec<[usize; 4]>,
}

impl Builder {
    fn vid(&mut self, p: [f64; 3]) -> usize {
        let key = [
            (p[0] / self.quantum).round() as i64,
            (p[1] / self.quantum).round() as i64,
            (p[2] / self.quantum).round() as i64,
        ];
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        self.nodes.push(p);
        self.index.insert(key, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    fn push_tet(&mut self, mut t: [usize; 4]) {
        let v = signed_volume(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]], self.nodes[t[3]]);
        if v < 0.0 {
            t.swap(2, 3);
        }
        self.tets.push(t);
    }

    fn push_prism(&mut self, v: [usize; 6]) {
        for t in split_prism(v) {
            self.push_tet(t);
        }
    }
}

/// Lateral quadrilateral between two stations, cut like the adjacent prism.
fn lateral_pair(a0: usize, b0: usize, a1: usize, b1: usize) -> [[usize; 3]; 2] {
    let m = a0.min(b0).min(a1).min(b1);
    if m == a0 || m == b1 {
        [[a0, b0, b1], [a0, b1, a1]]
    } else {
        [[a0, b0, a1], [b0, b1, a1]]
    }
}

impl TetMesh {
    pub fn build(geo: &Geometry, params: &MeshParams) -> TetMesh {
        assert!(params.segments % 4 == 0 && params.segments >= 8, "segments must be a multiple of 4");
        let p = params.segments / 4;
        let half = geo.half;
        let mut b = Builder { nodes: Vec::new(), index: HashMap::new(), quantum: 1e-10 * half, tets: Vec::new() };
        let mut boundary = Vec::new();
        let centre = b.vid([0.0, 0.0, 0.0]);
        let layers = (p / 2).max(2);
        let faces: Vec<(usize, f64, Face2D)> = (0..3)
            .flat_map(|i| [(i, 1.0, disk_face(half, geo.radii[i][0], params)), (i, -1.0, plain_face(half, p))])
            .collect();
        for (i, sign, face) in &faces {
            // ids of every face point on every cone layer
            let ids: Vec<Vec<usize>> = (1..=layers)
                .map(|j| {
                    let t = j as f64 / layers as f64;
                    face.pts
                        .iter()
                        .map(|q| {
                            let g = local_to_global(*i, sign * half, q[0], q[1]);
                            b.vid([t * g[0], t * g[1], t * g[2]])
                        })
                        .collect()
                })
                .collect();
            for (k, t) in face.tris.iter().enumerate() {
                b.push_tet([centre, ids[0][t[0]], ids[0][t[1]], ids[0][t[2]]]);
                for j in 0..layers - 1 {
                    let (lo, hi) = (&ids[j], &ids[j + 1]);
                    b.push_prism([lo[t[0]], lo[t[1]], lo[t[2]], hi[t[0]], hi[t[1]], hi[t[2]]]);
                }
                if *sign < 0.0 || k >= face.disk_tris {
                    let top = &ids[layers - 1];
                    boundary.push(BoundaryFace { v: [top[t[0]], top[t[1]], top[t[2]]], tag: Tag::Wall });
                }
            }
        }
        let cylinders: Vec<CylinderLayers> = (0..3)
            .map(|i| {
                let face = &faces[2 * i].2;
                let disk2d: Vec<[f64; 2]> = face.pts[..face.disk_pts].to_vec();
                let tris: Vec<[usize; 3]> = face.tris[..face.disk_tris].to_vec();
                let (st, rad) = (&geo.stations[i], &geo.radii[i]);
                let mut nodes: Vec<Vec<usize>> = Vec::with_capacity(st.len());
                nodes.push(
                    disk2d
                        .iter()
                        .map(|q| b.vid(local_to_global(i, half, q[0], q[1])))
                        .collect(),
                );
                for k in 1..st.len() {
                    let sc = rad[k] / rad[0];
                    let layer: Vec<usize> = disk2d
                        .iter()
                        .map(|q| {
                            b.nodes.push(local_to_global(i, st[k], sc * q[0], sc * q[1]));
                            b.nodes.len() - 1
                        })
                        .collect();
                    nodes.push(layer);
                }
                // rim loop: the last ring of the disk O-grid
                let n = params.segments;
                let rim: Vec<usize> = (disk2d.len() - n..disk2d.len()).collect();
                for k in 0..st.len() - 1 {
                    let (lo, hi) = (&nodes[k], &nodes[k + 1]);
                    for t in &tris {
                        b.push_prism([lo[t[0]], lo[t[1]], lo[t[2]], hi[t[0]], hi[t[1]], hi[t[2]]]);
                    }
                    for m in 0..n {
                        let (a, c) = (rim[m], rim[(m + 1) % n]);
                        for v in lateral_pair(lo[a], lo[c], hi[a], hi[c]) {
                            boundary.push(BoundaryFace { v, tag: Tag::Lateral(i) });
                        }
                    }
                }
                let last = nodes.last().unwrap();
                for t in &tris {
                    boundary.push(BoundaryFace { v: [last[t[0]], last[t[1]], last[t[2]]], tag: Tag::End(i) });
                }
                CylinderLayers { disk2d, tris, stations: st.clone(), radii: rad.clone(), nodes }
            })
            .collect();
        let cylinders: [CylinderLayers; 3] = cylinders.try_into().unwrap();
        TetMesh { nodes: b.nodes, tets: b.tets, boundary, half, cylinders }
    }

    /// Coarse space of axial hat functions on every cylinder, nodes about
    /// `spacing` apart, joined by one constant on the box.
    pub fn axial_coarse_space(&self, spacing: f64) -> CoarseSpace {
        let mut map = vec![[(0u32, 1.0), (0u32, 0.0)]; self.nodes.len()];
        let mut n = 1u32;
        for c in &self.cylinders {
            let st = &c.stations;
            let mut marks = vec![0usize];
            for k in 1..st.len() {
                if k == st.len() - 1 || st[k] - st[*marks.last().unwrap()] >= spacing {
                    marks.push(k);
                }
            }
            let ids: Vec<u32> = (0..marks.len()).map(|j| if j == 0 { 0 } else { n + j as u32 - 1 }).collect();
            n += marks.len() as u32 - 1;
            for w in 0..marks.len() - 1 {
                let (k0, k1) = (marks[w], marks[w + 1]);
                for k in k0..=k1 {
                    let t = (st[k] - st[k0]) / (st[k1] - st[k0]);
                    for &v in &c.nodes[k] {
                        map[v] = [(ids[w], 1.0 - t), (ids[w + 1], t)];
                    }
                }
            }
        }
        CoarseSpace { n: n as usize, map }
    }

    pub fn tet_points(&self, t: usize) -> [[f64; 3]; 4] {
        let v = self.tets[t];
        [self.nodes[v[0]], self.nodes[v[1]], self.nodes[v[2]], self.nodes[v[3]]]
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let p = self.tet_points(t);
        signed_volume(p[0], p[1], p[2], p[3])
    }

    pub fn volume(&self) -> f64 {
        crate::spectrum::neumaier((0..self.tets.len()).map(|t| self.tet_volume(t)))
    }

    pub fn boundary_area(&self, tag: Tag) -> f64 {
        self.boundary
            .iter()
            .filter(|f| f.tag == tag)
            .map(|f| tri_area(self.nodes[f.v[0]], self.nodes[f.v[1]], self.nodes[f.v[2]]))
            .sum()
    }

    /// Nodes lying on faces with the given tag.
    pub fn tagged_nodes(&self, tag: Tag) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary.iter().filter(|f| f.tag == tag).flat_map(|f| f.v).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Barycentric gradients of a tetrahedron and its volume.
    pub fn gradients(&self, t: usize) -> ([[f64; 3]; 4], f64) {
        let p = self.tet_points(t);
        let vol = signed_volume(p[0], p[1], p[2], p[3]);
        let mut g = [[0.0; 3]; 4];
        // grad of lambda_k is the inward face normal scaled by area / (3 vol)
        for k in 0..4 {
            let o = [(k + 1) % 4, (k + 2) % 4, (k + 3) % 4];
            let mut n = cross(sub(p[o[1]], p[o[0]]), sub(p[o[2]], p[o[0]]));
            let s = dot(n, sub(p[k], p[o[0]]));
            let f = 1.0 / s;
            n = [n[0] * f, n[1] * f, n[2] * f];
            g[k] = n;
        }
        (g, vol)
    }
}

/// Junction geometry: box `(-ell, ell)^3` with cylinders of radius
/// `h0[i]` out to `xi_i = r_trunc`, with layers of equal spacing.
pub fn junction_geometry(ell: f64, h0: [f64; 3], r_trunc: f64, params: &MeshParams) -> Geometry {
    let hmin = h0.iter().cloned().fold(f64::INFINITY, f64::min);
    let per_unit = (1.0 / (params.axial * hmin)).ceil();
    let n = ((r_trunc - ell) * per_unit).round().max(1.0) as usize;
    let st: Vec<f64> = (0..=n).map(|k| ell + (r_trunc - ell) * k as f64 / n as f64).collect();
    Geometry {
        half: ell,
        stations: [st.clone(), st.clone(), st.clone()],
        radii: std::array::from_fn(|i| vec![h0[i]; n + 1]),
    }
}

/// Stations on `[a, 1]` whose spacing grows linearly with the distance to
/// either end, from `fine` up to `coarse`.
pub fn graded_stations(a: f64, fine: f64, coarse: f64, growth: f64) -> Vec<f64> {
    let len = 1.0 - a;
    let spacing = |d: f64| (fine + growth * d).min(coarse);
    let mut s = vec![0.0];
    while *s.last().unwrap() < len {
        let x = *s.last().unwrap();
        let d = x.min(len - x).max(0.0);
        s.push(x + spacing(d));
    }
    let n = s.len() - 1;
    // squeeze onto [0, len] without changing the node count
    let scale = len / s[n];
    s.iter().map(|x| a + x * scale).collect()
}

/// Bucket grid for point location.
#[derive(Clone, Debug)]
pub struct Locator {
    lo: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl Locator {
    pub fn new(mesh: &TetMesh) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &mesh.nodes {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let vol: f64 = (0..3).map(|d| (hi[d] - lo[d]).max(1e-12)).product();
        let cell = (vol / (mesh.tets.len() as f64 / 4.0)).cbrt().max(1e-12);
        let dims: [usize; 3] = std::array::from_fn(|d| (((hi[d] - lo[d]) / cell).ceil() as usize).clamp(1, 4096));
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let cell_of = |x: f64, d: usize| (((x - lo[d]) / cell).floor().max(0.0) as usize).min(dims[d] - 1);
        for (t, tet) in mesh.tets.iter().enumerate() {
            let mut a = [usize::MAX; 3];
            let mut b = [0usize; 3];
            for &v in tet {
                for d in 0..3 {
                    let c = cell_of(mesh.nodes[v][d], d);
                    a[d] = a[d].min(c);
                    b[d] = b[d].max(c);
                }
            }
            for i in a[0]..=b[0] {
                for j in a[1]..=b[1] {
                    for k in a[2]..=b[2] {
                        buckets[(i * dims[1] + j) * dims[2] + k].push(t as u32);
                    }
                }
            }
        }
        Locator { lo, cell, dims, buckets }
    }

    fn barycentric(mesh: &TetMesh, t: usize, x: [f64; 3]) -> [f64; 4] {
        let p = mesh.tet_points(t);
        let v = signed_volume(p[0], p[1], p[2], p[3]);
        [
            signed_volume(x, p[1], p[2], p[3]) / v,
            signed_volume(p[0], x, p[2], p[3]) / v,
            signed_volume(p[0], p[1], x, p[3]) / v,
            signed_volume(p[0], p[1], p[2], x) / v,
        ]
    }

    /// Containing tetrahedron and barycentric coordinates; points slightly
    /// outside the mesh snap to the nearest candidate with clamped weights.
    pub fn locate(&self, mesh: &TetMesh, x: [f64; 3]) -> Option<(usize, [f64; 4])> {
        let idx: [i64; 3] = std::array::from_fn(|d| ((x[d] - self.lo[d]) / self.cell).floor() as i64);
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for reach in 0..=1i64 {
            for di in -reach..=reach {
                for dj in -reach..=reach {
                    for dk in -reach..=reach {
                        let c = [idx[0] + di, idx[1] + dj, idx[2] + dk];
                        if (0..3).any(|d| c[d] < 0 || c[d] >= self.dims[d] as i64) {
                            continue;
                        }
                        let b = &self.buckets[((c[0] as usize) * self.dims[1] + c[1] as usize) * self.dims[2] + c[2] as usize];
                        for &t in b {
                            let l = Self::barycentric(mesh, t as usize, x);
                            let viol = l.iter().fold(0.0f64, |m, &v| m.max(-v));
                            if viol <= 1e-12 {
                                return Some((t as usize, l));
                            }
                            if best.as_ref().map_or(true, |b| viol < b.2) {
                                best = Some((t as usize, l, viol));
                            }
                        }
                    }
                }
            }
            if best.as_ref().map_or(false, |b| b.2 < 0.05) {
                break;
            }
        }
        best.filter(|b| b.2 < 0.5).map(|(t, l, _)| {
            let c: Vec<f64> = l.iter().map(|v| v.max(0.0)).collect();
            let s: f64 = c.iter().sum();
            (t, [c[0] / s, c[1] / s, c[2] / s, c[3] / s])
        })
    }

    /// P1 interpolation of nodal values.
    pub fn interpolate(&self, mesh: &TetMesh, vals: &[f64], x: [f64; 3]) -> Option<f64> {
        self.locate(mesh, x).map(|(t, l)| {
            let v = mesh.tets[t];
            (0..4).map(|k| l[k] * vals[v[k]]).sum()
        })
    }
}
