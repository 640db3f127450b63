//! `regression`: drive the learning-curve experiment from a TOML spec.

use serde::Deserialize;
use simpel::eval::{run_learning_curve, CurveOptions, ExperimentSpec, RunStatus};

use crate::config::{apply_overrides, load_toml, section};
use crate::{Failure, RunArgs};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingMode {
    /// Write 0 for wall times so outputs are byte-identical across runs.
    #[default]
    Zero,
    Real,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default)]
pub struct OutputOptions {
    pub timing: TimingMode,
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let mut root = load_toml(&args.config)?;
    apply_overrides(&mut root, &args.set)?;
    let spec: ExperimentSpec = section(&root, "experiment")?;
    let output: OutputOptions = match root.get("output") {
        Some(_) => section(&root, "output")?,
        None => OutputOptions::default(),
    };
    spec.validate().map_err(Failure::from)?;

    std::fs::create_dir_all(&args.out)?;
    let options = CurveOptions {
        out_csv: args.out.join("metrics.csv"),
        summary_json: Some(args.out.join("summary.json")),
        resume: args.resume,
        master_seed: args.seed,
        real_timing: output.timing == TimingMode::Real,
    };
    let rows = run_learning_curve(&spec, &options)?;
    let failed = rows.iter().filter(|r| r.status == RunStatus::Failed).count();
    println!(
        "regression: {} rows ({} failed) -> {}",
        rows.len(),
        failed,
        options.out_csv.display()
    );
    Ok(())
}
