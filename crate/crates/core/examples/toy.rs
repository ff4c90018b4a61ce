//! Trains the default configuration on a generated four-class toy set and
//! prints the test report.
//!
//! cargo run --release --example toy [-- OUT_DIR]

use std::time::Instant;

use octx_core::synthetic::{write_toy_splits, ToySizes};
use octx_core::train::{evaluate, train_with, TrainConfig};
use octx_core::OctNet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| dir.path().to_path_buf());
    let splits = write_toy_splits(&root, ToySizes::default(), 7)?;
    let config = TrainConfig::default();
    let start = Instant::now();
    let (net, history) = train_with(OctNet::build(config.seed), &splits, &config, |r| {
        println!(
            "epoch {:>2}  loss {:.4}  acc {:.3}  val_acc {:.3}  ({:.0?})",
            r.epoch,
            r.train_loss,
            r.train_acc,
            r.val_acc.unwrap_or(f64::NAN),
            start.elapsed()
        );
    })?;
    let metrics = evaluate(&net, &splits.test)?;
    println!("{}", metrics.report());
    println!("{} optimizer steps in {:.1?}", history.optimizer_steps, start.elapsed());
    Ok(())
}
