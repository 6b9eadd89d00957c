//! Scratch probe: folded singularity coordinates and the one-dimensional
//! manifold's h-profile, for overlay against simulated traces.

use hhscale::geometry::{folded_singularities, manifold_mh, orbital_relation, true_equilibrium};
use hhscale::params::{ModelParameters, Regime};

fn main() {
    for &i_phys in &[20.051, 23.051, 23.5, 26.03452346, 26.1209956, 26.2, 28.0, 29.7] {
        let p = ModelParameters::h_slow().with_current(i_phys);
        match folded_singularities(Regime::HSlow, &p) {
            Ok((qm, qp)) => {
                let rel = orbital_relation(Regime::HSlow, &p).unwrap();
                let eq = true_equilibrium(Regime::HSlow, &p);
                let eq_str = match eq {
                    Ok(e) => format!("v_eq={:.4} h_eq={:.4} on {} {:?}", e.0[0], e.0[1], e.1, e.2.label),
                    Err(e) => format!("eq: {e}"),
                };
                println!(
                    "I={i_phys:<11} q-=( {:.4}, {:.4} ) q+=( {:.4}, {:.4} ) gap={:+.4} {} {}",
                    qm.v, qm.h, qp.v, qp.h, rel.gap, rel.kind, eq_str
                );
            }
            Err(e) => println!("I={i_phys:<11} folded singularities: {e}"),
        }
    }

    // H-curve profile at two currents, for trace overlays.
    for &i_phys in &[20.051, 26.2] {
        let p = ModelParameters::h_slow().with_current(i_phys);
        let grid: Vec<f64> = (0..=260).map(|i| -0.62 + 0.002 * i as f64).collect();
        println!("# H curve at I={i_phys}");
        match manifold_mh(&grid, &p) {
            Ok(pts) => {
                use std::io::Write;
                let mut f =
                    std::fs::File::create(format!("/tmp/hcurve_{i_phys}.csv")).unwrap();
                for q in pts {
                    writeln!(f, "{:.5},{:.6},{:.6}", q[0], q[1], q[2]).unwrap();
                }
                println!("# wrote /tmp/hcurve_{i_phys}.csv ({} rows)", grid.len());
            }
            Err(e) => println!("# manifold sampling failed: {e}"),
        }
    }
}
