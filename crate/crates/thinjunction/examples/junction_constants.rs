//! Truncated junction: special solutions growing into outlets 2 and 3,
//! the flux constant `d_1^*`, and a VTK export of the fields.

use thinjunction::config::{ProblemSpec, RadiusProfile};
use thinjunction::junction::{compute_dstar, solve_special, TruncatedJunction, DEFAULT_EXTENT};
use thinjunction::mesh::MeshParams;
use thinjunction::poly::Poly3;
use thinjunction::vtk::save_vtk;

fn main() {
    let mut spec = ProblemSpec::uniform(0.3, 0.25, Poly3::constant(1.0));
    spec.h = [RadiusProfile::constant(0.25), RadiusProfile::constant(0.2), RadiusProfile::constant(0.22)];
    println!("d_1^* = {:.8}", compute_dstar(&spec, 1).unwrap());

    let params = MeshParams { segments: 32, ..MeshParams::default() };
    let tj = TruncatedJunction::for_spec(&spec, spec.ell + DEFAULT_EXTENT, &params);
    println!("junction mesh: {} nodes, {} tets", tj.node_count(), tj.mesh.tets.len());
    let sp = solve_special(&tj).expect("special solutions");
    for s in &sp.n {
        println!("N_{}: far slopes {:?}, flux balance {:.1e}, constants {:?}", s.outlet + 1, s.slopes, s.flux_balance(), s.constants());
    }

    let path = std::env::temp_dir().join("specials.vtk");
    let (a, b) = (sp.n[0].nodal(&tj), sp.n[1].nodal(&tj));
    save_vtk(&path, "special solutions", &tj.mesh, &[("N2", &a), ("N3", &b)]).unwrap();
    println!("wrote {}", path.display());
}
