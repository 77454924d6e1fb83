//! Sweeps the novelty weight of the neural recommender and prints the
//! accuracy, novelty and coverage of each setting.
//!
//! ```text
//! cargo run --release --example beta_sweep -- [beta,beta,...]
//! ```

use newsrec::config::RunConfig;
use newsrec::pipeline::{prepare, sweep_beta, write_sweep_csv};

const OVERLAY: &str = r#"
[dataset.synthetic]
n_articles = 600
n_hours = 24
sessions_per_hour = 200
topic_count = 8

[harness]
warmup_hours = 6
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let betas: Vec<f64> = match std::env::args().nth(1) {
        Some(s) => s.split(',').map(str::parse).collect::<Result<_, _>>()?,
        None => vec![0.0, 0.5, 5.0, 20.0],
    };
    let cfg = RunConfig::layered("quick", Some(OVERLAY))?;
    let data = prepare(&cfg)?;
    let rows = sweep_beta(&cfg, &data, &betas)?;
    write_sweep_csv(&rows, cfg.harness.cutoff, std::io::stdout())?;
    Ok(())
}
