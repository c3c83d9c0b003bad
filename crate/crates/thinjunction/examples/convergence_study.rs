//! A small convergence study in `eps` on coarse meshes, printed as CSV.
//! The shipped plans under `plans/` run the full-size versions through the
//! command-line tool.

use thinjunction::config::ProblemSpec;
use thinjunction::poly::Poly3;
use thinjunction::reference::ThinMeshParams;
use thinjunction::study::{run_study, to_csv, StudyPlan, Target};

fn main() {
    let spec = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(1.0));
    let mut plan = StudyPlan::new(spec, vec![0.2, 0.1, 0.05], vec![Target::EnergyU0, Target::PointwiseFirst]);
    plan.thin_mesh = ThinMeshParams { segments: 16, axial: 0.4, coarse: 0.02, growth: 0.15 };
    let rep = run_study(&plan).expect("study runs");
    print!("{}", to_csv(&rep));
    for t in &rep.targets {
        let slope = t.fit.map(|f| f.slope).unwrap_or(f64::NAN);
        println!("# {}: slope {slope:.3}, predicted {:?}, pass {}", t.target, t.predicted, t.pass);
    }
}
