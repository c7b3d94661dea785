use std::time::Instant;

use mkelab_core::mke::{run_pipeline, Baseline, ExperimentConfig};
use mkelab_core::perturb::Transform;

fn main() {
    let mut cfg = ExperimentConfig::defaults_for(Baseline::MmStudent);
    cfg.data.noise_std = 0.35;
    cfg.transform = Transform::InputGaussian { variance: 2.0 };
    cfg.epochs = 2000;
    cfg.seed = 0;
    let t0 = Instant::now();
    let arts = run_pipeline(&cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "2000-epoch pipeline: {:.2}s ({:.3} ms/student-epoch incl teacher) student acc {:.3}",
        dt,
        dt * 1000.0 / 2000.0,
        arts.student_report.accuracy
    );
}
