//! Scratch probe: start on the singular cycle's landing point (the
//! down-projection of the upper folded singularity) and watch whether a
//! folded-node cycle persists or degrades into equilibrium capture.

use hhscale::error::Result;
use hhscale::gating::{alpha, beta};
use hhscale::geometry::{folded_singularities, project_fold, CurveLabel, FoldPoint};
use hhscale::model;
use hhscale::ode::{integrate_path, OdeOptions, OdeSystem};
use hhscale::params::{GateKind, ModelParameters, Regime};
use hhscale::reduction::mu;

struct Lit<'a> {
    p: &'a ModelParameters,
}

impl OdeSystem<4> for Lit<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 4]) -> Result<[f64; 4]> {
        let p = self.p;
        let (v, m, h, n) = (y[0], y[1], y[2], y[3]);
        let vm = v * p.k_v;
        let em = p.epsilon_membrane();
        Ok([
            model::rhs_v(v, m, h, n, p) / em,
            alpha(GateKind::M, vm) * (1.0 - m) - beta(GateKind::M, vm) * m,
            (alpha(GateKind::H, vm) * (1.0 - h) - beta(GateKind::H, vm) * h) / p.tau_h,
            (alpha(GateKind::N, vm) * (1.0 - n) - beta(GateKind::N, vm) * n) / p.tau_n,
        ])
    }

    fn fastest_rate(&self, _t: f64, y: &[f64; 4]) -> f64 {
        let p = self.p;
        let em = p.epsilon_membrane();
        let row_v = (model::rhs_v_dv(y[1], y[2], y[3], p).abs()
            + model::rhs_v_dm(y[0], y[1], y[2], p).abs()
            + model::rhs_v_dh(y[0], y[1], p).abs()
            + model::rhs_v_dn(y[0], y[3], p).abs())
            / em;
        let vm = y[0] * p.k_v;
        let row_m = alpha(GateKind::M, vm) + beta(GateKind::M, vm);
        row_v.max(row_m)
    }
}

fn main() {
    let opts = OdeOptions {
        rel_tol: 1e-7,
        abs_tol: 1e-10,
        h_init: 1e-5,
        h_max: 0.25,
        ..OdeOptions::default()
    };
    for &i_phys in &[20.051, 23.5, 26.1209956, 26.2] {
        let p = ModelParameters::h_slow().with_current(i_phys);
        let (_qm, qp) = folded_singularities(Regime::HSlow, &p).unwrap();
        let fold = FoldPoint { v: qp.v, h: qp.h, n: qp.n, curve: CurveLabel::LPlus };
        let land = project_fold(&fold, &p).unwrap();
        let m0 = mu(land[0], land[1], land[2], &p).unwrap().value;
        let y0 = [land[0], m0, land[1], land[2]];
        println!(
            "I={i_phys}: q+ h={:.4}, landing v={:.4}, m0={:.4}",
            qp.h, land[0], m0
        );
        let path = integrate_path(&Lit { p: &p }, 0.0, y0, 1500.0, &opts).unwrap();
        // Walk the trace, print each up-jump (v crossing -0.35 upward): time
        // since previous down-crossing and h at the crossing.
        let mut above = path.y[0][0] > -0.35;
        let mut t_down = 0.0;
        let mut line = String::new();
        let mut count = 0;
        for (t, y) in path.t.iter().zip(path.y.iter()) {
            let now = y[0] > -0.35;
            if now != above {
                if now {
                    line.push_str(&format!(
                        " [below {:>6.1}ms -> h_up {:.4}]",
                        t - t_down,
                        y[2]
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
        println!("{line}\n");
    }
}
