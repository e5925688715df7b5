//! Trains a low-fidelity operator on synthetic coarse data and reports its
//! test errors.
//!
//! cargo run --release --example low_fidelity -- [drag|lift] [physics|data] [epochs]

use bifi_core::bifidelity::{train_low_fidelity, TrainingConfig};
use bifi_core::data::{generate_synthetic, sample_velocities, split, SyntheticGeneratorParams, Target};
use bifi_core::metrics::{aggregate, StdKind, TrajectoryError};
use bifi_core::operator::OperatorVariant;

fn main() -> bifi_core::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let target: Target = args.first().map_or(Ok(Target::Drag), |s| s.parse())?;
    let variant = match args.get(1).map(String::as_str) {
        Some("data") => OperatorVariant::DataDriven,
        _ => OperatorVariant::PhysicsGuided,
    };
    let epochs = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500);

    let velocities = sample_velocities(150, (0.9, 1.1), 1);
    let params = SyntheticGeneratorParams::for_target(target);
    let (coarse, _) = generate_synthetic(&params, &velocities, 300, 0.0, 8.0, 2, target)?;
    let (train, test) = split(&coarse, 0.1, 3)?;
    let config = TrainingConfig {
        variant,
        target,
        max_epochs: epochs,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let trained = train_low_fidelity(&train, &config)?;
    let errors = test
        .trajectories()
        .iter()
        .map(|tr| {
            let pred = trained.operator.predict_trajectory(tr.u_bar, &tr.times)?;
            TrajectoryError::compute(tr.u_bar, &pred, &tr.values)
        })
        .collect::<bifi_core::Result<Vec<_>>>()?;
    let report = aggregate(errors, StdKind::Population)?;
    for e in &report.per_trajectory {
        println!("u = {:.4}: L2 {:.3}%", e.u_bar, 100.0 * e.l2_rel);
    }
    println!(
        "{target} {variant:?}: mean L2 {:.3}%, mean L1 {:.3}%, best epoch {} of {}, {:.1?}",
        100.0 * report.mean_l2,
        100.0 * report.mean_l1,
        trained.report.best_epoch,
        trained.report.epochs_run(),
        start.elapsed()
    );
    Ok(())
}
