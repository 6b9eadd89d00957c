//! Scratch probe: does the three-dimensional reduction show the same
//! equilibrium capture, or does it escape at the folded node?

use hhscale::dynamics::{integrate, SystemState};
use hhscale::gating::gate_inf_dimless;
use hhscale::geometry::true_equilibrium;
use hhscale::params::{GateKind, ModelParameters, Regime, ReducedState};
use hhscale::reduction::nu;

fn main() {
    for &i_phys in &[20.051, 23.5, 26.1209956, 26.2] {
        let p = ModelParameters::h_slow().with_current(i_phys);
        let eq = true_equilibrium(Regime::HSlow, &p).unwrap().0;
        let v0 = eq[0] - 0.15;
        let h0 = gate_inf_dimless(GateKind::H, v0, &p);
        let n0 = nu(v0, h0, &p).unwrap().value;
        let init = SystemState::Reduced(ReducedState::new(v0, h0, n0));
        match integrate(init, 1500.0, 1e-7, 1e-10, &p) {
            Ok(traj) => {
                let v: Vec<f64> = traj.voltages();
                let mut above = v[0] > -0.35;
                let mut t_down = 0.0;
                let mut line = String::new();
                let mut count = 0;
                for (i, t) in traj.times.iter().enumerate() {
                    let now = v[i] > -0.35;
                    if now != above {
                        if now {
                            let h = traj.slow_coordinates(i).h;
                            line.push_str(&format!(
                                " [below {:>6.1}ms -> h_up {:.4}]",
                                t - t_down,
                                h
                            ));
                            count += 1;
                            if count % 4 == 0 {
                                line.push('\n');
                            }
                        } else {
                            t_down = *t;
                        }
                        above = now;
                    }
                }
                println!("I={i_phys} reduced3d:\n{line}\n");
            }
            Err(e) => println!("I={i_phys} reduced3d FAILED: {e}"),
        }
    }
}
