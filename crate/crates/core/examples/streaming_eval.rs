//! Runs the full streaming protocol from a configuration profile: hourly
//! training and evaluation of every enabled algorithm, paired t-tests
//! against the best algorithm per metric, and CSV reports merged into the
//! long format.
//!
//! ```text
//! cargo run --release --example streaming_eval -- [out_dir]
//! ```

use std::fs::{self, File};
use std::path::PathBuf;

use newsrec::config::RunConfig;
use newsrec::harness::write_long_csv;
use newsrec::pipeline::{evaluate, prepare};

const OVERLAY: &str = r#"
[dataset.synthetic]
n_articles = 800
n_hours = 30
sessions_per_hour = 250
topic_count = 10

[harness]
warmup_hours = 6
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("newsrec-eval"));
    fs::create_dir_all(&dir)?;
    let cfg = RunConfig::layered("quick", Some(OVERLAY))?;
    cfg.validate()?;

    let data = prepare(&cfg)?;
    let report = evaluate(&cfg, &data)?;
    println!("{} evaluation hours x {} algorithms", report.hours().len(), report.algorithms.len());
    for s in &report.summary {
        let p = match (s.best, s.p_value) {
            (true, _) => "best".to_string(),
            (false, Some(p)) => format!("p = {p:.2e}{}", if s.degenerate { " (no variance)" } else { "" }),
            (false, None) => "-".to_string(),
        };
        println!("{:<10} {:<9} {:>8.4}  {p}", s.metric.column(report.cutoff), s.algorithm, s.mean.unwrap_or(f64::NAN));
    }

    let hourly = dir.join("hourly.csv");
    report.write_hourly_csv(File::create(&hourly)?)?;
    report.write_summary_csv(File::create(dir.join("summary.csv"))?)?;
    let n = write_long_csv(&[("quick".into(), fs::read_to_string(&hourly)?)], File::create(dir.join("long.csv"))?)?;
    println!("wrote {} ({n} long-format rows)", dir.display());
    Ok(())
}
