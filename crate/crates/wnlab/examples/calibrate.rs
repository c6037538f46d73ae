//! Scratch calibration harness for the rate-slope experiments.

use wnlab::config::{AxisProfile, SignalDef};
use wnlab::risk::{mc_risk, rate_fit, Method};
use wnlab_core::bandwidth::BandwidthVector;
use wnlab_core::grid::Grid;
use wnlab_core::kernels::{build_base_w, build_wl, product_kernel};
use wnlab_core::selection::{PsiMode, UpperFunctionConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("c7");
    match which {
        "c7" => c7(&args[2..]),
        "c8" => c8(&args[2..]),
        _ => eprintln!("unknown mode"),
    }
}

fn c7(args: &[String]) {
    let amp: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(160.0);
    let reps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let grid = Grid::new(1, 1.0, 512).unwrap();
    let w = build_base_w(wnlab_core::kernels::KernelProfile::CosineBump, 2);
    let kernel = product_kernel(build_wl(&w, 2), 1);
    let cfg = UpperFunctionConfig::compute(&kernel, 1, 1.0, 2.0, 2.0, PsiMode::Constant);
    let signal = SignalDef {
        amplitude: amp,
        axes: vec![AxisProfile::QuarticBump],
    }
    .render(&grid);
    let method = Method::SelectConst(
        (0..=2).map(|s| BandwidthVector::constant(1, s)).collect(),
    );
    let mut curve = Vec::new();
    for k in 0..6 {
        let eps = 0.2 * 0.5f64.powi(k);
        let est = mc_risk(&signal, &method, 2.0, 2.0, eps, reps, 7, &cfg, &kernel).unwrap();
        let mean_vol = est.per_rep_volume.iter().sum::<f64>() / est.per_rep_volume.len() as f64;
        println!(
            "amp={amp} eps={eps:.5} risk={:.5} stderr={:.5} mean_sel_vol={:.4}",
            est.risk, est.stderr, mean_vol
        );
        curve.push((eps, est.risk));
    }
    let fit = rate_fit(&curve).unwrap();
    println!(
        "amp={amp}: slope={:.4} halfwidth={:.4} (target 0.8 +- 0.1)",
        fit.slope, fit.halfwidth
    );
}

fn c8(args: &[String]) {
    let amp: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let teeth: u32 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let reps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let grid = Grid::new(2, 1.0, 128).unwrap();
    let w = build_base_w(wnlab_core::kernels::KernelProfile::CosineBump, 2);
    let kernel = product_kernel(build_wl(&w, 2), 2);
    let cfg = UpperFunctionConfig::compute(&kernel, 2, 1.0, 2.0, 2.0, PsiMode::Constant);
    let signal = SignalDef {
        amplitude: amp,
        axes: vec![AxisProfile::QuarticBump, AxisProfile::TentWave { teeth }],
    }
    .render(&grid);
    let mut levels = Vec::new();
    for s0 in 0..=1u32 {
        for s1 in 0..=1u32 {
            levels.push(BandwidthVector::new(vec![s0, s1]));
        }
    }
    let method = Method::SelectConst(levels);
    let mut curve = Vec::new();
    for k in 0..5 {
        let eps = 0.2 * 0.5f64.powi(k);
        let est = mc_risk(&signal, &method, 2.0, 2.0, eps, reps, 7, &cfg, &kernel).unwrap();
        println!(
            "amp={amp} teeth={teeth} eps={eps:.5} risk={:.5} stderr={:.5}",
            est.risk, est.stderr
        );
        curve.push((eps, est.risk));
    }
    let fit = rate_fit(&curve).unwrap();
    println!(
        "amp={amp} teeth={teeth}: slope={:.4} halfwidth={:.4} (target 0.571 +- 0.12)",
        fit.slope, fit.halfwidth
    );
}
