//! Scores a few hand-made top-5 lists with the accuracy, novelty and
//! diversity metrics, then aggregates them into hourly values.
//!
//! ```text
//! cargo run --example list_metrics
//! ```

use std::collections::BTreeSet;

use newsrec::corpus::ArticleId;
use newsrec::metrics::{evaluate_list, MetricAccumulator, MetricConfig, RankedList};

fn list(ids: [u32; 5], positive_rank: usize, pops: [f64; 5], clicked: [bool; 5], spread: f64) -> RankedList {
    RankedList {
        top: ids.map(ArticleId).to_vec(),
        positive_rank,
        pops: pops.to_vec(),
        clicked: clicked.to_vec(),
        aces: Some((0..5).map(|i| vec![1.0, spread * i as f64, (i % 2) as f64 * spread]).collect()),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = MetricConfig { cutoff: 5, background_relevance: 0.02 };
    let lists = [
        ("popular, hit at 1", list([1, 2, 3, 4, 5], 1, [0.30, 0.20, 0.15, 0.10, 0.05], [true, false, false, false, false], 0.1)),
        ("long tail, hit at 3", list([6, 7, 8, 9, 10], 3, [0.01, 0.004, 0.002, 0.002, 0.001], [false, false, true, false, false], 1.0)),
        ("miss", list([1, 11, 12, 13, 14], 9, [0.30, 0.02, 0.02, 0.01, 0.01], [false; 5], 0.5)),
    ];
    println!("{:<22} {:>5} {:>6} {:>7} {:>7} {:>7} {:>8}", "list", "HR", "MRR", "ESI-R", "ESI-RR", "EILD-R", "EILD-RR");
    let mut acc = MetricAccumulator::new();
    for (name, l) in &lists {
        let m = evaluate_list(l, &cfg)?;
        println!(
            "{name:<22} {:>5.2} {:>6.3} {:>7.3} {:>7.3} {:>7.3} {:>8.3}",
            m.hr,
            m.mrr,
            m.esi_r,
            m.esi_rr,
            m.eild_r.unwrap_or(f64::NAN),
            m.eild_rr.unwrap_or(f64::NAN)
        );
        acc.add(l, &m, cfg.cutoff);
    }
    let recommendable: BTreeSet<ArticleId> = (1..=20).map(ArticleId).collect();
    let hour = acc.finish(&recommendable);
    println!("hour: {} lists, HR {:.3}, MRR {:.3}, COV {:.2}", hour.n_measurements, hour.hr.unwrap(), hour.mrr.unwrap(), hour.cov.unwrap());
    Ok(())
}
