use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thinjunction::commands::{self, expand_report, inner_fields, junction_report, limit_report, reference_report};
use thinjunction::config::{load_spec, ProblemSpec};
use thinjunction::junction::{TruncatedJunction, DEFAULT_EXTENT};
use thinjunction::mesh::MeshParams;
use thinjunction::poly::Poly3;
use thinjunction::reference::ThinMeshParams;
use thinjunction::study::{self, Format, StudyPlan};
use thinjunction::vtk::save_vtk;

#[derive(Parser)]
#[command(version, about = "Asymptotics of the Poisson problem in a thin three-cylinder junction")]
struct Cli {
    /// Problem spec (JSON). Defaults to straight cylinders of radius 0.25 and f = x1.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the limit problem on the graph.
    LimitSolve {
        #[arg(long, default_value_t = 65)]
        samples: usize,
    },
    /// Build the expansion to order m and report the junction constants.
    Expand {
        #[arg(long)]
        order: u32,
    },
    /// Special solutions on a junction truncated at R (fast variables).
    Junction {
        #[arg(long = "R")]
        r: Option<f64>,
    },
    /// Finite-element solve of the thin problem.
    Reference {
        #[arg(long)]
        epsilon: Option<f64>,
        /// Also compare with the partial sums up to the spec's order.
        #[arg(long)]
        compare: bool,
    },
    /// Convergence study from a plan file.
    Study {
        #[arg(long)]
        plan: PathBuf,
    },
}

type Res<T> = Result<T, String>;

fn default_spec() -> ProblemSpec {
    ProblemSpec::uniform(0.3, 0.25, Poly3::from_terms(&[(1.0, [1, 0, 0])]))
}

fn write(out: &Path, name: &str, ext: &str, body: String) -> Res<()> {
    let p = out.join(format!("{name}.{ext}"));
    std::fs::write(&p, body).map_err(|e| format!("{}: {e}", p.display()))?;
    eprintln!("wrote {}", p.display());
    Ok(())
}

fn emit<T: serde::Serialize>(out: &Path, name: &str, fmt: Format, rep: &T, csv: impl FnOnce() -> String) -> Res<()> {
    match fmt {
        Format::Json => write(out, name, "json", serde_json::to_string_pretty(rep).map_err(|e| e.to_string())? + "\n"),
        Format::Csv => write(out, name, "csv", csv()),
    }
}

fn vtk(out: &Path, name: &str, mesh: &thinjunction::mesh::TetMesh, fields: &[(String, Vec<f64>)]) -> Res<()> {
    let p = out.join(format!("{name}.vtk"));
    let refs: Vec<(&str, &[f64])> = fields.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
    save_vtk(&p, name, mesh, &refs).map_err(|e| format!("{}: {e}", p.display()))?;
    eprintln!("wrote {}", p.display());
    Ok(())
}

fn run(cli: Cli) -> Res<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| format!("{}: {e}", cli.out.display()))?;
    let spec = match &cli.config {
        Some(p) => load_spec(p).map_err(|e| e.to_string())?,
        None => default_spec(),
    };
    let (out, fmt) = (cli.out.as_path(), cli.format);
    match cli.cmd {
        Cmd::LimitSolve { samples } => {
            let r = limit_report(&spec, samples);
            eprintln!("weak residual {:.3e}, Kirchhoff defect {:.3e}", r.weak_residual, r.kirchhoff);
            emit(out, "limit", fmt, &r, || r.to_csv())?;
            Ok(r.pass)
        }
        Cmd::Expand { order } => {
            let (r, h) = expand_report(&spec, order, &MeshParams::default(), DEFAULT_EXTENT).map_err(|e| e.to_string())?;
            eprintln!("solvability defects {:?}", r.constants.solvability);
            emit(out, "expand", fmt, &r, || r.to_csv())?;
            if let Some(tj) = &h.junction {
                vtk(out, "inner", &tj.mesh, &inner_fields(&h))?;
            }
            Ok(r.pass)
        }
        Cmd::Junction { r } => {
            let r = r.unwrap_or(spec.ell + DEFAULT_EXTENT);
            if r <= TruncatedJunction::min_truncation(spec.ell) {
                return Err(format!("R = {r} leaves no room for the plateau stations"));
            }
            let (rep, tj, fields) = junction_report(&spec, r, &MeshParams::default()).map_err(|e| e.to_string())?;
            eprintln!("largest slope error {:.3e}", rep.max_slope_error);
            emit(out, "junction", fmt, &rep, || rep.to_csv())?;
            let named: Vec<(String, Vec<f64>)> = fields.into_iter().enumerate().map(|(k, v)| (format!("N{}", k + 2), v)).collect();
            vtk(out, "specials", &tj.mesh, &named)?;
            Ok(rep.pass)
        }
        Cmd::Reference { epsilon, compare } => {
            let eps = epsilon.unwrap_or(spec.epsilon);
            let hier = if compare {
                Some(expand_report(&spec, spec.order, &MeshParams::default(), DEFAULT_EXTENT).map_err(|e| e.to_string())?.1)
            } else {
                None
            };
            let params = ThinMeshParams::default();
            let (rep, d, u) = reference_report(&spec, eps, &params, hier.as_ref(), 0).map_err(|e| e.to_string())?;
            eprintln!("{} nodes, {} iterations, Galerkin defect {:.3e}", rep.nodes, rep.iterations, rep.galerkin_defect);
            emit(out, "reference", fmt, &rep, || rep.to_csv())?;
            let mut fields = vec![("u".to_string(), u)];
            if let Some(h) = &hier {
                let w = commands::expansion_nodal(h, h.order, eps, &d.mesh).map_err(|e| e.to_string())?;
                fields.push((format!("U{}", h.order), w));
            }
            vtk(out, "reference", &d.mesh, &fields)?;
            Ok(rep.pass)
        }
        Cmd::Study { plan } => {
            let text = std::fs::read_to_string(&plan).map_err(|e| format!("{}: {e}", plan.display()))?;
            let mut p = StudyPlan::from_json_str(&text).map_err(|e| e.to_string())?;
            if cli.config.is_some() {
                p.spec = spec;
                p.validate().map_err(|e| e.to_string())?;
            }
            let rep = study::run_study(&p).map_err(|e| e.to_string())?;
            for t in &rep.targets {
                let slope = t.fit.map_or("-".to_string(), |f| format!("{:.3}", f.slope));
                let pred = t.predicted.map_or("-".to_string(), |v| format!("{v:.3}"));
                eprintln!("{:<18} slope {slope:>7} predicted {pred:>6} {:?} {}", t.target.to_string(), t.status, if t.pass { "PASS" } else { "FAIL" });
            }
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            let ext = if fmt == Format::Json { "json" } else { "csv" };
            study::emit(&rep, fmt, &out.join(format!("study.{ext}"))).map_err(|e| e.to_string())?;
            Ok(rep.all_pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
