//! A small grid sweep and the sampling comparison driven through the
//! experiment harness, as the CLI does, on synthetic data.
//!
//! cargo run --release --example sweep_harness

use scatterdp::harness::{load_pair, run_experiment, DataSources, ExperimentConfig};

const CONFIG: &str = r#"
kind = "sweep"
dataset = "synthetic"
epsilon = 3.0
delta = 1e-5
seeds = [0, 1]

[synthetic]
train = 3000
test = 600

[run]
batch_size = 512
clip = 0.1
base_lr = 1.0
epochs = 8
normalization = { kind = "group", groups = 27 }

[grid]
base_lr = [0.5, 2.0]
normalization = [{ kind = "none" }, { kind = "group", groups = 27 }]
"#;

fn main() -> scatterdp::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let data = load_pair(cfg.dataset, &cfg.scatter, &cfg.synthetic, &DataSources::default())?;
    let out = run_experiment(&cfg, &data)?;
    println!("{} result rows; summary:", out.main().rows.len());
    print!("{}", out.get("summary").unwrap().to_csv());

    let sampling = ExperimentConfig::from_toml_with(CONFIG, &["kind=\"sampling\"".into()])?;
    let out = run_experiment(&sampling, &data)?;
    print!("\n{}", out.get("summary").unwrap().to_csv());
    Ok(())
}
