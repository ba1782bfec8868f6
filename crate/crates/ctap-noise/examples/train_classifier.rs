//! End-to-end classification demo: generate, split, train, evaluate.
//!
//! Draws a labeled dataset for the four-class task (correlated,
//! anticorrelated, uncorrelated, Markovian), trains the multilayer
//! perceptron on a stratified split and prints the learning curve tail,
//! the test accuracy and the confusion matrix. Coarse surfaces and a small
//! sample budget keep the demo in the seconds range; accuracy climbs with
//! both.
//!
//!     cargo run --release --example train_classifier

use ctap_noise::dataset::{generate_dataset, split_dataset, Task};
use ctap_noise::features::QuadratureSpec;
use ctap_noise::mlp::{init_model, train, TrainConfig};
use ctap_noise::surface::{SurfaceConfig, SurfaceSet};

fn main() -> ctap_noise::Result<()> {
    let config = SurfaceConfig {
        grid_step: 2.0,
        ..SurfaceConfig::default()
    };
    eprintln!("building surfaces at grid step {} ...", config.grid_step);
    let surfaces = SurfaceSet::build(&config)?;

    let task = Task::Four;
    let per_class = 120;
    let seed = 5;
    let data = generate_dataset(task, per_class, &QuadratureSpec::default(), 1.0, seed, &surfaces)?;
    let split = split_dataset(&data, (0.6, 0.2, 0.2), seed)?;
    println!(
        "dataset: {} samples, split {}/{}/{}",
        data.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );

    let cfg = TrainConfig {
        epochs: 150,
        seed,
        ..TrainConfig::default()
    };
    let model = init_model(task.n_classes(), seed)?;
    let (_, report) = train(model, &split, &cfg)?;

    println!("\nepoch   train loss   val loss   val acc");
    let n = report.val_loss.len();
    for e in (0..n).step_by((n / 8).max(1)).chain([n - 1]) {
        println!(
            "{:>5}   {:>10.4}   {:>8.4}   {:>7.4}",
            e + 1,
            report.train_loss[e],
            report.val_loss[e],
            report.val_accuracy[e]
        );
    }
    println!(
        "\nkept epoch {} of {}; test accuracy {:.4}",
        report.best_epoch, report.epochs_run, report.test_accuracy
    );

    println!("\nconfusion (rows true, columns predicted):");
    for (i, class) in task.classes().iter().enumerate() {
        let row: Vec<String> = report.confusion[i].iter().map(|c| format!("{c:>4}")).collect();
        println!("  {:<28} {}", class.tag(), row.join(" "));
    }
    Ok(())
}
