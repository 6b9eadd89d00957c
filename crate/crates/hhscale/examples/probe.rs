//! Scratch probe for classifier calibration. Not part of the library.

use hhscale::dynamics::{
    classify_pattern, default_initial, integrate, ClassifierConfig, SystemKind,
};
use hhscale::params::{ModelParameters, Regime};
use std::time::Instant;

fn run(regime: Regime, system: SystemKind, i_phys: f64, duration: f64) {
    let p = ModelParameters::for_regime(regime).with_current(i_phys);
    let cfg = ClassifierConfig::default();
    let t0 = Instant::now();
    let initial = match default_initial(system, regime, &p) {
        Ok(s) => s,
        Err(e) => {
            println!("{regime:?} {system:?} I={i_phys:<12} init FAILED: {e}");
            return;
        }
    };
    let traj = match integrate(initial, duration, 1e-7, 1e-10, &p) {
        Ok(t) => t,
        Err(e) => {
            println!("{regime:?} {system:?} I={i_phys:<12} integrate FAILED: {e}");
            return;
        }
    };
    let dt = t0.elapsed().as_secs_f64();
    match classify_pattern(&traj, regime, &p, &cfg) {
        Ok(r) => println!(
            "{regime:?} {system:?} I={i_phys:<12} D={duration:<6} {:<16} above/per={:.2} below/per={:.2} lao/per={:.2} period={:.3} samples={} [{dt:.1}s]",
            format!("{}", r.class),
            r.epochs_above,
            r.epochs_below,
            r.lao_count,
            r.period_estimate,
            traj.len(),
        ),
        Err(e) => println!(
            "{regime:?} {system:?} I={i_phys:<12} D={duration:<6} UNCLASSIFIED: {e} samples={} [{dt:.1}s]",
            traj.len()
        ),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("h1");
    match which {
        "h1" => {
            run(Regime::HSlow, SystemKind::Full4d, 20.051, 150.0);
        }
        "h2" => {
            run(Regime::HSlow, SystemKind::Full4d, 23.051, 150.0);
            run(Regime::HSlow, SystemKind::Full4d, 23.5, 150.0);
        }
        "h3" => {
            run(Regime::HSlow, SystemKind::Full4d, 26.03452346, 150.0);
            run(Regime::HSlow, SystemKind::Full4d, 26.1209956, 150.0);
            run(Regime::HSlow, SystemKind::Full4d, 26.2, 150.0);
        }
        "r3" => {
            run(Regime::HSlow, SystemKind::Reduced3d, 26.2, 150.0);
            run(Regime::HSlow, SystemKind::Reduced3d, 20.051, 150.0);
        }
        "n1" => {
            run(Regime::NSlow, SystemKind::Full4d, 9.0, 400.0);
            run(Regime::NSlow, SystemKind::Full4d, 64.5, 400.0);
        }
        "n2" => {
            run(Regime::NSlow, SystemKind::Full4d, 90.0, 400.0);
            run(Regime::NSlow, SystemKind::Full4d, 150.0, 400.0);
        }
        "edges" => {
            run(Regime::HSlow, SystemKind::Full4d, 5.0, 150.0);
            run(Regime::HSlow, SystemKind::Full4d, 100.0, 150.0);
            run(Regime::HSlow, SystemKind::Full4d, 280.0, 150.0);
        }
        other => {
            // free-form: regime system current duration
            let regime = if other == "h" { Regime::HSlow } else { Regime::NSlow };
            let system = match args.get(2).map(|s| s.as_str()) {
                Some("r") => SystemKind::Reduced3d,
                _ => SystemKind::Full4d,
            };
            let i: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20.0);
            let d: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(150.0);
            run(regime, system, i, d);
        }
    }
}
