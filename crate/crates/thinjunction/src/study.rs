//! Convergence studies in `eps`: build the expansion once, solve the thin
//! problem for each `eps`, measure the requested errors and fit rates.

use crate::assembler::{sample_interior, sample_lateral, ExpansionError, Hierarchy, JunctionConstants};
use crate::config::{ConfigError, ProblemSpec};
use crate::junction::{TruncatedJunction, DEFAULT_EXTENT};
use crate::mesh::MeshParams;
use crate::reference::{ReferenceError, Region, ThinDomain, ThinMeshParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

pub const NODE_BUDGET: usize = 2_000_000;
/// Slack below the predicted exponent for one-sided targets.
pub const ONE_SIDED_SLACK: f64 = 0.3;
pub const TWO_SIDED_SLACK: f64 = 0.4;
/// Slack for the energy estimate scaled by the domain measure.
pub const RELATIVE_SLACK: f64 = 0.15;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("target {target} needs {need}")]
    DataMismatch { target: String, need: &'static str },
    #[error("unknown target '{0}'")]
    UnknownTarget(String),
    #[error("{0}")]
    Io(String),
}

/// Quantities whose decay in `eps` is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Target {
    /// `|u - U^(m)|_{H1}` on the whole domain.
    T0(u32),
    EnergyU0,
    MeanSquareU0,
    /// `|u - U^(0)|_{H1} / sqrt(meas)`.
    EnergyU0Rel,
    EnergyU1,
    /// `max_i |u - omega_0|_{H1}` on the cylinders past `3 ell eps^alpha`.
    Cylinders,
    /// `|u - omega_0(0) - eps N_1|_{H1}` near the box.
    JunctionZone,
    /// `max |E u - omega_0|` over the stations past `3 ell eps^alpha`.
    PointwiseZeroth,
    /// `max |E u - omega_0 - eps omega_1|` over the same stations.
    PointwiseFirst,
    /// Sampled sup of the residual `R_j`, `j = 1..=9`, at the plan order.
    Resid(usize),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::T0(m) => write!(f, "T0_{m}"),
            Target::EnergyU0 => write!(f, "COR42_H1_U0"),
            Target::MeanSquareU0 => write!(f, "COR42_L2_U0"),
            Target::EnergyU0Rel => write!(f, "COR42_H1_U0_REL"),
            Target::EnergyU1 => write!(f, "COR42_H1_U1"),
            Target::Cylinders => write!(f, "COR42_CYL"),
            Target::JunctionZone => write!(f, "COR42_JUNC"),
            Target::PointwiseZeroth => write!(f, "COR43_POINTWISE"),
            Target::PointwiseFirst => write!(f, "COR44_POINTWISE"),
            Target::Resid(j) => write!(f, "RESID_{j}"),
        }
    }
}

impl FromStr for Target {
    type Err = StudyError;
    fn from_str(s: &str) -> Result<Self, StudyError> {
        let bad = || StudyError::UnknownTarget(s.to_string());
        Ok(match s {
            "COR42_H1_U0" => Target::EnergyU0,
            "COR42_L2_U0" => Target::MeanSquareU0,
            "COR42_H1_U0_REL" => Target::EnergyU0Rel,
            "COR42_H1_U1" => Target::EnergyU1,
            "COR42_CYL" => Target::Cylinders,
            "COR42_JUNC" => Target::JunctionZone,
            "COR43_POINTWISE" => Target::PointwiseZeroth,
            "COR44_POINTWISE" => Target::PointwiseFirst,
            _ => {
                if let Some(m) = s.strip_prefix("T0_") {
                    let m: u32 = m.parse().map_err(|_| bad())?;
                    if m < 2 {
                        return Err(bad());
                    }
                    Target::T0(m)
                } else if let Some(j) = s.strip_prefix("RESID_") {
                    let j: usize = j.parse().map_err(|_| bad())?;
                    if !(1..=9).contains(&j) {
                        return Err(bad());
                    }
                    Target::Resid(j)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl TryFrom<String> for Target {
    type Error = StudyError;
    fn try_from(s: String) -> Result<Self, StudyError> {
        s.parse()
    }
}

impl From<Target> for String {
    fn from(t: Target) -> String {
        t.to_string()
    }
}

/// How a fitted slope is judged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Criterion {
    /// Slope at least `predicted - slack`.
    AtLeast { slack: f64 },
    /// Slope within `predicted +- slack`.
    Within { slack: f64 },
    /// Exponentially small: the errors may not grow as `eps` shrinks.
    Decaying,
    /// Tabulated only. The matching commutator carries `eps^{-1-alpha}`
    /// in front of a decay `exp(-gamma ell eps^{alpha-1})` that is still
    /// flat at practical `eps`.
    ReportOnly,
}

impl Target {
    /// Predicted exponent; `None` for exponentially small targets.
    pub fn predicted(&self, alpha: f64, m: u32) -> Option<f64> {
        let m = m as f64;
        match self {
            Target::T0(m) => Some(alpha * (*m as f64 - 0.5) + 0.5),
            Target::EnergyU0 => Some(1.0 + alpha / 2.0),
            Target::MeanSquareU0 => Some(1.5 * alpha + 0.5),
            Target::EnergyU0Rel => Some(alpha / 2.0),
            Target::EnergyU1 => Some(1.0 + alpha),
            Target::Cylinders => Some(2.0),
            Target::JunctionZone => Some(2.5),
            Target::PointwiseZeroth => Some(1.0),
            Target::PointwiseFirst => Some(2.0),
            Target::Resid(1) | Target::Resid(4) => Some(m - 1.0),
            Target::Resid(2) | Target::Resid(3) => None,
            Target::Resid(8) => Some(m),
            Target::Resid(9) => Some(1.0 + alpha * (m - 1.0)),
            Target::Resid(_) => Some(alpha * (m - 1.0)),
        }
    }

    pub fn criterion(&self) -> Criterion {
        match self {
            Target::PointwiseFirst => Criterion::Within { slack: TWO_SIDED_SLACK },
            Target::EnergyU0Rel => Criterion::AtLeast { slack: RELATIVE_SLACK },
            Target::Resid(2) => Criterion::ReportOnly,
            Target::Resid(3) => Criterion::Decaying,
            _ => Criterion::AtLeast { slack: ONE_SIDED_SLACK },
        }
    }

    pub fn needs_fem(&self) -> bool {
        !matches!(self, Target::Resid(_))
    }

    /// Expansion order the target needs, given the plan order.
    pub fn order(&self, plan_order: u32) -> u32 {
        match self {
            Target::T0(m) => *m,
            Target::EnergyU0 | Target::MeanSquareU0 | Target::EnergyU0Rel | Target::Cylinders | Target::PointwiseZeroth => 0,
            Target::EnergyU1 | Target::JunctionZone | Target::PointwiseFirst => 1,
            Target::Resid(_) => plan_order,
        }
    }

    pub fn region(&self) -> &'static str {
        match self {
            Target::Cylinders | Target::PointwiseZeroth | Target::PointwiseFirst => "cylinders",
            Target::JunctionZone => "junction",
            Target::Resid(8) | Target::Resid(9) => "lateral",
            _ => "full",
        }
    }

    fn check_data(&self, spec: &ProblemSpec) -> Result<(), StudyError> {
        let mismatch = |need| Err(StudyError::DataMismatch { target: self.to_string(), need });
        match self {
            Target::PointwiseZeroth if !spec.h.iter().all(|h| h.is_constant()) => mismatch("constant radii"),
            Target::PointwiseFirst => {
                if !spec.h.iter().all(|h| h.is_constant()) || spec.has_lateral_load() {
                    return mismatch("constant radii and no lateral load");
                }
                // f may depend on the axial variable only, on every cylinder
                let transverse = |i: usize| spec.f_local(i).terms.iter().any(|t| t.e[1] + t.e[2] > 0);
                if (0..3).any(transverse) {
                    return mismatch("a source depending on the axial variable only");
                }
                Ok(())
            }
            Target::Resid(_) if spec.order < 2 => mismatch("order >= 2"),
            _ => Ok(()),
        }
    }
}

fn default_extent() -> f64 {
    DEFAULT_EXTENT
}

fn default_samples() -> usize {
    300
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyPlan {
    pub spec: ProblemSpec,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub targets: Vec<Target>,
    #[serde(default)]
    pub thin_mesh: ThinMeshParams,
    #[serde(default)]
    pub junction_mesh: MeshParams,
    /// Outlet length past the box of the truncated junction.
    #[serde(default = "default_extent")]
    pub extent: f64,
    /// Sample count per cylinder for the residual sups.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl StudyPlan {
    pub fn new(spec: ProblemSpec, epsilons: Vec<f64>, targets: Vec<Target>) -> Self {
        StudyPlan {
            spec,
            epsilons,
            targets,
            thin_mesh: ThinMeshParams::default(),
            junction_mesh: MeshParams::default(),
            extent: DEFAULT_EXTENT,
            samples: default_samples(),
            seed: 0,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, StudyError> {
        let p: StudyPlan = serde_json::from_str(s).map_err(|e| StudyError::Plan(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        self.spec.validate()?;
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) || self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(StudyError::Plan("epsilons must be positive and strictly decreasing".into()));
        }
        if self.epsilons.len() < 3 {
            return Err(StudyError::Plan("need at least three epsilons for a slope".into()));
        }
        for t in &self.targets {
            t.check_data(&self.spec)?;
        }
        Ok(())
    }

    /// Targets to report: the requested ones, plus the relative energy
    /// estimate whenever the absolute one is asked for.
    pub fn expanded_targets(&self) -> Vec<Target> {
        let mut t = self.targets.clone();
        if t.contains(&Target::EnergyU0) && !t.contains(&Target::EnergyU0Rel) {
            t.push(Target::EnergyU0Rel);
        }
        t
    }
}

/// Least-squares fit of `log error` against `log eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval for the slope; absent with only two points.
    pub ci95: Option<[f64; 2]>,
    pub points: usize,
}

/// Two-sided 97.5% Student quantiles for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110,
    2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];

/// Fit over the points with positive error; `None` below two of them.
pub fn fit_slope(eps: &[f64], err: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = eps.iter().zip(err).filter(|(_, &e)| e > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ci95 = (n > 2).then(|| {
        let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (ssr / (n - 2) as f64 / sxx).sqrt();
        let t = T975[(n - 3).min(T975.len() - 1)];
        [slope - t * se, slope + t * se]
    });
    Some(SlopeFit { slope, intercept, ci95, points: n })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub epsilon: f64,
    pub error: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// Every error vanished: nothing to fit.
    Degenerate,
    /// Some `eps` failed; the table is incomplete.
    Partial,
}

#[derive(Clone, Debug, Serialize)]
pub struct TargetReport {
    pub target: Target,
    pub region: String,
    pub predicted: Option<f64>,
    pub criterion: Criterion,
    pub rows: Vec<Row>,
    pub fit: Option<SlopeFit>,
    pub status: Status,
    pub pass: bool,
}

impl TargetReport {
    fn judge(&mut self) {
        let eps: Vec<f64> = self.rows.iter().map(|r| r.epsilon).collect();
        let err: Vec<f64> = self.rows.iter().map(|r| r.error).collect();
        self.fit = fit_slope(&eps, &err);
        if err.iter().all(|&e| e == 0.0) && !err.is_empty() {
            self.status = Status::Degenerate;
            self.pass = true;
            return;
        }
        self.pass = match (self.criterion, self.predicted, self.fit) {
            (Criterion::Decaying, _, _) => err.windows(2).all(|w| w[1] <= w[0]),
            (Criterion::ReportOnly, _, _) => true,
            (Criterion::AtLeast { slack }, Some(p), Some(f)) => f.slope >= p - slack,
            (Criterion::Within { slack }, Some(p), Some(f)) => (f.slope - p).abs() <= slack,
            _ => false,
        };
        if self.status == Status::Partial {
            self.pass = false;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    /// SHA-256 of the spec's canonical JSON.
    pub spec_hash: String,
    pub crate_version: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyReport {
    pub provenance: Provenance,
    pub alpha: f64,
    pub order: u32,
    pub targets: Vec<TargetReport>,
    pub constants: Option<JunctionConstants>,
    pub node_counts: Vec<(f64, usize)>,
    pub warnings: Vec<String>,
    pub all_pass: bool,
}

pub fn spec_hash(spec: &ProblemSpec) -> String {
    let digest = Sha256::digest(spec.to_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Rough node count of the thin mesh, before building it.
pub fn estimate_nodes(spec: &ProblemSpec, eps: f64, p: &ThinMeshParams) -> usize {
    let g = crate::reference::thin_geometry(spec, eps, p);
    let disk = p.segments * p.segments / 8 + p.segments;
    3 * g.stations[0].len() * disk
}

/// Run the plan. FEM failures at some `eps` leave partial tables.
pub fn run_study(plan: &StudyPlan) -> Result<StudyReport, StudyError> {
    plan.validate()?;
    let spec = &plan.spec;
    let targets = plan.expanded_targets();
    let order = targets.iter().map(|t| t.order(spec.order)).max().unwrap_or(0);
    let mut warnings = Vec::new();
    let junction = (order >= 1).then(|| TruncatedJunction::for_spec(spec, spec.ell + plan.extent, &plan.junction_mesh));
    let hier = Hierarchy::build(spec, order, junction)?;
    let mut reports: Vec<TargetReport> = targets
        .iter()
        .map(|&t| TargetReport {
            target: t,
            region: t.region().to_string(),
            predicted: t.predicted(spec.alpha, spec.order),
            criterion: t.criterion(),
            rows: Vec::new(),
            fit: None,
            status: Status::Ok,
            pass: false,
        })
        .collect();
    let mut node_counts = Vec::new();
    let need_fem = targets.iter().any(|t| t.needs_fem());
    for &eps in &plan.epsilons {
        let start = Instant::now();
        let mut domain = None;
        if need_fem {
            let est = estimate_nodes(spec, eps, &plan.thin_mesh);
            if est > NODE_BUDGET {
                warnings.push(format!("eps = {eps}: about {est} nodes, above the budget of {NODE_BUDGET}"));
            }
            let d = ThinDomain::new(spec, eps, &plan.thin_mesh);
            node_counts.push((eps, d.node_count()));
            match d.solve(spec) {
                Ok(u) => domain = Some((d, u.values)),
                Err(e) => warnings.push(format!("eps = {eps}: reference solve failed: {e}")),
            }
        }
        let setup_ms = start.elapsed().as_millis() as u64;
        for rep in reports.iter_mut() {
            let t0 = Instant::now();
            let err = match (rep.target.needs_fem(), &domain) {
                (true, None) => {
                    rep.status = Status::Partial;
                    continue;
                }
                (true, Some((d, u))) => fem_error(&hier, rep.target, eps, d, u)?,
                (false, _) => residual_sup(&hier, rep.target, eps, plan)?,
            };
            let extra = if rep.target.needs_fem() { setup_ms } else { 0 };
            rep.rows.push(Row { epsilon: eps, error: err, wall_ms: extra + t0.elapsed().as_millis() as u64 });
        }
    }
    for r in reports.iter_mut() {
        r.judge();
    }
    let all_pass = reports.iter().all(|r| r.pass);
    Ok(StudyReport {
        provenance: Provenance { spec_hash: spec_hash(spec), crate_version: env!("CARGO_PKG_VERSION").to_string() },
        alpha: spec.alpha,
        order: spec.order,
        targets: reports,
        constants: (order >= 1).then(|| hier.constants.clone()),
        node_counts,
        warnings,
        all_pass,
    })
}

fn fem_error(h: &Hierarchy, t: Target, eps: f64, d: &ThinDomain, u: &[f64]) -> Result<f64, StudyError> {
    let spec = &h.spec;
    let partial = |m: u32| -> Result<f64, StudyError> {
        let s = h.sum(m, eps)?;
        let w = |x: [f64; 3]| s.evaluate(x).unwrap_or((0.0, [0.0; 3]));
        Ok(d.norms(u, Some(&w), Region::Full).h1)
    };
    let stations = |i: usize| -> Result<Vec<(f64, f64)>, StudyError> {
        let lo = 3.0 * spec.ell * eps.powf(spec.alpha);
        Ok(d.average_e(spec, u, i)?.into_iter().filter(|(s, _)| *s >= lo).collect())
    };
    Ok(match t {
        Target::T0(m) => partial(m)?,
        Target::EnergyU0 => partial(0)?,
        Target::EnergyU0Rel => partial(0)? / d.measure().sqrt(),
        Target::EnergyU1 => partial(1)?,
        Target::MeanSquareU0 => {
            let s = h.sum(0, eps)?;
            let w = |x: [f64; 3]| s.evaluate(x).unwrap_or((0.0, [0.0; 3]));
            d.norms(u, Some(&w), Region::Full).l2
        }
        Target::Cylinders => (0..3)
            .map(|i| {
                let w0 = &h.omegas[0];
                let w = |x: [f64; 3]| {
                    let mut g = [0.0; 3];
                    g[i] = w0.d1(i, x[i]);
                    (w0.value(i, x[i]), g)
                };
                d.norms(u, Some(&w), Region::Cylinder(i)).h1
            })
            .fold(0.0, f64::max),
        Target::JunctionZone => {
            let s = h.sum(1, eps)?;
            let w = |x: [f64; 3]| s.inner_part(x);
            d.norms(u, Some(&w), Region::Junction).h1
        }
        Target::PointwiseZeroth | Target::PointwiseFirst => {
            let first = if t == Target::PointwiseFirst { eps } else { 0.0 };
            let mut worst = 0.0f64;
            for i in 0..3 {
                for (s, v) in stations(i)? {
                    let w = h.omegas[0].value(i, s) + if first != 0.0 { first * h.omegas[1].value(i, s) } else { 0.0 };
                    worst = worst.max((v - w).abs());
                }
            }
            worst
        }
        Target::Resid(_) => unreachable!("residuals need no reference solve"),
    })
}

fn residual_sup(h: &Hierarchy, t: Target, eps: f64, plan: &StudyPlan) -> Result<f64, StudyError> {
    let Target::Resid(j) = t else { unreachable!("only residual targets are sampled") };
    let s = h.sum(plan.spec.order, eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ j as u64);
    let pts = if j >= 8 {
        sample_lateral(&plan.spec, eps, plan.samples, &mut rng)
    } else {
        sample_interior(&plan.spec, eps, plan.samples, &mut rng)
    };
    let mut worst = 0.0f64;
    for x in pts {
        let r = if j >= 8 { s.boundary_residual(x, j)? } else { s.residual_term(x, j)? };
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Flat rows for CSV: `(epsilon, error, predicted, region, wall_ms)`,
/// ordered by `eps` descending and then by target.
pub fn csv_rows(report: &StudyReport) -> Vec<(f64, f64, Option<f64>, String, u64)> {
    let mut rows: Vec<(usize, f64, f64, Option<f64>, String, u64)> = Vec::new();
    for (k, t) in report.targets.iter().enumerate() {
        for r in &t.rows {
            rows.push((k, r.epsilon, r.error, t.predicted, format!("{}@{}", t.target, t.region), r.wall_ms));
        }
    }
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    rows.into_iter().map(|(_, e, err, p, reg, w)| (e, err, p, reg, w)).collect()
}

pub fn to_csv(report: &StudyReport) -> String {
    let mut out = String::from("epsilon,error,predicted,region,wall_ms\n");
    for (e, err, p, reg, w) in csv_rows(report) {
        let p = p.map(|v| format!("{v}")).unwrap_or_default();
        out.push_str(&format!("{e},{err:e},{p},{reg},{w}\n"));
    }
    out
}

pub fn to_json(report: &StudyReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Write `report` under `path` in the chosen format.
pub fn emit(report: &StudyReport, format: Format, path: &std::path::Path) -> Result<(), StudyError> {
    let body = match format {
        Format::Json => to_json(report),
        Format::Csv => to_csv(report),
    };
    std::fs::write(path, body).map_err(|e| StudyError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly3;
    use proptest::prelude::*;

    fn empty_report() -> StudyReport {
        StudyReport {
            provenance: Provenance { spec_hash: String::new(), crate_version: "0".into() },
            alpha: 0.8,
            order: 2,
            targets: vec![],
            constants: None,
            node_counts: vec![],
            warnings: vec![],
            all_pass: true,
        }
    }

    fn report_with(rows: &[(f64, f64)]) -> StudyReport {
        let mut r = empty_report();
        let mut t = TargetReport {
            target: Target::Cylinders,
            region: "cylinders".into(),
            predicted: Some(2.0),
            criterion: Target::Cylinders.criterion(),
            rows: rows.iter().map(|&(e, x)| Row { epsilon: e, error: x, wall_ms: 5 }).collect(),
            fit: None,
            status: Status::Ok,
            pass: false,
        };
        t.judge();
        r.targets.push(t);
        r
    }

    #[test]
    fn log_ratio_slope() {
        let f = fit_slope(&[0.1, 0.05], &[1e-2, 2.5e-3]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(f.ci95.is_none());
    }

    #[test]
    fn predicted_exponents() {
        assert!((Target::EnergyU0.predicted(0.8, 2).unwrap() - 1.4).abs() < 1e-12);
        assert!((Target::T0(2).predicted(0.8, 2).unwrap() - 1.7).abs() < 1e-12);
        assert_eq!(Target::Resid(2).predicted(0.8, 2), None);
        assert!((Target::Resid(9).predicted(0.8, 3).unwrap() - 2.6).abs() < 1e-12);
    }

    #[test]
    fn target_names_round_trip() {
        for t in [Target::T0(3), Target::JunctionZone, Target::PointwiseFirst, Target::Resid(7), Target::EnergyU0Rel] {
            assert_eq!(t.to_string().parse::<Target>().unwrap(), t);
            let j = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<Target>(&j).unwrap(), t);
        }
        assert!("T0_1".parse::<Target>().is_err());
        assert!("RESID_10".parse::<Target>().is_err());
    }

    #[test]
    fn empty_report_gives_header_only() {
        assert_eq!(to_csv(&empty_report()), "epsilon,error,predicted,region,wall_ms\n");
    }

    #[test]
    fn csv_sorted_and_deterministic() {
        let r = report_with(&[(0.05, 1e-4), (0.2, 1e-2), (0.1, 2e-3)]);
        let csv = to_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0.2,") && lines[2].starts_with("0.1,") && lines[3].starts_with("0.05,"));
        assert_eq!(csv, to_csv(&r));
        assert_eq!(to_json(&r), to_json(&r));
        let dir = std::env::temp_dir();
        let (a, b) = (dir.join("tj_emit_a.csv"), dir.join("tj_emit_b.csv"));
        emit(&r, Format::Csv, &a).unwrap();
        emit(&r, Format::Csv, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn zero_errors_are_degenerate() {
        let r = report_with(&[(0.2, 0.0), (0.1, 0.0), (0.05, 0.0)]);
        assert_eq!(r.targets[0].status, Status::Degenerate);
        assert!(r.targets[0].fit.is_none());
    }

    #[test]
    fn zero_data_study_is_degenerate() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::zero());
        let mut plan = StudyPlan::new(spec, vec![0.2, 0.1, 0.05], vec![Target::EnergyU0, Target::PointwiseZeroth]);
        plan.thin_mesh = ThinMeshParams { segments: 12, axial: 0.5, coarse: 0.05, growth: 0.3 };
        let rep = run_study(&plan).unwrap();
        assert_eq!(rep.targets.len(), 3);
        for t in &rep.targets {
            assert_eq!(t.status, Status::Degenerate, "{}", t.target);
            assert!(t.rows.iter().all(|r| r.error == 0.0));
        }
    }

    #[test]
    fn hash_tracks_spec_bytes() {
        let a = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(1.0));
        let mut b = a.clone();
        assert_eq!(spec_hash(&a), spec_hash(&b));
        b.f = Poly3::constant(1.0 + 1e-12);
        assert_ne!(spec_hash(&a), spec_hash(&b));
    }

    #[test]
    fn plan_validation() {
        let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(1.0));
        assert!(StudyPlan::new(spec.clone(), vec![0.1, 0.2, 0.05], vec![]).validate().is_err());
        assert!(StudyPlan::new(spec.clone(), vec![0.2, 0.1], vec![]).validate().is_err());
        let mut s2 = spec.clone();
        s2.f = Poly3::from_terms(&[(1.0, [0, 1, 0])]);
        assert!(StudyPlan::new(s2, vec![0.2, 0.1, 0.05], vec![Target::PointwiseFirst]).validate().is_err());
        let p = StudyPlan::new(spec, vec![0.2, 0.1, 0.05], vec![Target::Resid(1)]);
        let back = StudyPlan::from_json_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back.targets, p.targets);
    }

    #[test]
    fn shipped_plans_parse() {
        for text in [include_str!("../plans/estimates.json"), include_str!("../plans/residuals.json"), include_str!("../plans/partial_sum.json")] {
            let p = StudyPlan::from_json_str(text).unwrap();
            assert!(!p.targets.is_empty());
        }
    }

    proptest! {
        #[test]
        fn slope_ignores_uniform_scaling(
            errs in proptest::collection::vec(1e-8f64..1.0, 3..6),
            scale in 1e-3f64..1e3,
        ) {
            let eps: Vec<f64> = (0..errs.len()).map(|k| 0.2 / 2f64.powi(k as i32)).collect();
            let scaled: Vec<f64> = errs.iter().map(|e| e * scale).collect();
            let a = fit_slope(&eps, &errs).unwrap();
            let b = fit_slope(&eps, &scaled).unwrap();
            prop_assert!((a.slope - b.slope).abs() < 1e-9);
            prop_assert!((b.intercept - a.intercept - scale.ln()).abs() < 1e-9);
        }
    }
}
