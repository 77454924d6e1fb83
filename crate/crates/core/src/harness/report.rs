//! Evaluation reports and their CSV forms.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use super::{paired_ttest, HarnessError};
use crate::metrics::HourMetrics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Metric {
    Hr,
    Mrr,
    Cov,
    EsiR,
    EsiRr,
    EildR,
    EildRr,
}

impl Metric {
    pub const ALL: [Metric; 7] =
        [Metric::Hr, Metric::Mrr, Metric::Cov, Metric::EsiR, Metric::EsiRr, Metric::EildR, Metric::EildRr];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Hr => "HR",
            Metric::Mrr => "MRR",
            Metric::Cov => "COV",
            Metric::EsiR => "ESI-R",
            Metric::EsiRr => "ESI-RR",
            Metric::EildR => "EILD-R",
            Metric::EildRr => "EILD-RR",
        }
    }

    pub fn column(self, cutoff: usize) -> String {
        format!("{}@{cutoff}", self.label())
    }

    pub fn of(self, m: &HourMetrics) -> Option<f64> {
        match self {
            Metric::Hr => m.hr,
            Metric::Mrr => m.mrr,
            Metric::Cov => m.cov,
            Metric::EsiR => m.esi_r,
            Metric::EsiRr => m.esi_rr,
            Metric::EildR => m.eild_r,
            Metric::EildRr => m.eild_rr,
        }
    }

    fn set(self, m: &mut HourMetrics, v: Option<f64>) {
        match self {
            Metric::Hr => m.hr = v,
            Metric::Mrr => m.mrr = v,
            Metric::Cov => m.cov = v,
            Metric::EsiR => m.esi_r = v,
            Metric::EsiRr => m.esi_rr = v,
            Metric::EildR => m.eild_r = v,
            Metric::EildRr => m.eild_rr = v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HourRow {
    /// 1-based evaluation hour.
    pub hour: usize,
    pub algorithm: String,
    pub metrics: HourMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub metric: Metric,
    /// Mean of the hourly values.
    pub mean: Option<f64>,
    pub best: bool,
    /// Bonferroni-adjusted p-value of the paired test against the best
    /// algorithm on this metric.
    pub p_value: Option<f64>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub algorithms: Vec<String>,
    pub rows: Vec<HourRow>,
    pub summary: Vec<SummaryRow>,
    /// Measurements dropped per algorithm because scoring failed.
    pub voided: BTreeMap<String, usize>,
    /// Candidate sets with fewer negatives than requested.
    pub short_candidate_sets: usize,
    pub cutoff: usize,
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.8}")).unwrap_or_default()
}

impl EvalReport {
    pub fn new(
        algorithms: Vec<String>,
        rows: Vec<HourRow>,
        voided: BTreeMap<String, usize>,
        short_candidate_sets: usize,
        cutoff: usize,
    ) -> Self {
        let summary = summarize(&algorithms, &rows);
        Self { algorithms, rows, summary, voided, short_candidate_sets, cutoff }
    }

    pub fn hours(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self.rows.iter().map(|r| r.hour).collect();
        h.dedup();
        h
    }

    /// Hourly values of `metric` for `algorithm`, `None` where undefined.
    pub fn series(&self, algorithm: &str, metric: Metric) -> Vec<Option<f64>> {
        self.rows.iter().filter(|r| r.algorithm == algorithm).map(|r| metric.of(&r.metrics)).collect()
    }

    pub fn mean(&self, algorithm: &str, metric: Metric) -> Option<f64> {
        self.summary.iter().find(|s| s.algorithm == algorithm && s.metric == metric).and_then(|s| s.mean)
    }

    pub fn write_hourly_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        write_hourly(&self.rows, self.cutoff, w)
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["algorithm", "metric", "mean", "best", "p_value_vs_best", "degenerate"])?;
        for s in &self.summary {
            out.write_record([
                s.algorithm.clone(),
                s.metric.column(self.cutoff),
                fmt(s.mean),
                s.best.to_string(),
                fmt(s.p_value),
                s.degenerate.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn hourly_header(cutoff: usize) -> Vec<String> {
    let mut h = vec!["hour".to_string(), "algorithm".to_string()];
    h.extend(Metric::ALL.iter().map(|m| m.column(cutoff)));
    h.push("n_measurements".into());
    h
}

fn write_hourly<W: Write>(rows: &[HourRow], cutoff: usize, w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(hourly_header(cutoff))?;
    for r in rows {
        let mut rec = vec![r.hour.to_string(), r.algorithm.clone()];
        rec.extend(Metric::ALL.iter().map(|m| fmt(m.of(&r.metrics))));
        rec.push(r.metrics.n_measurements.to_string());
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a per-hour report. Returns the rows and the cut-off named in the
/// header.
pub fn read_hourly_csv<R: Read>(r: R) -> Result<(Vec<HourRow>, usize), HarnessError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let cutoff = header
        .get(2)
        .and_then(|c| c.strip_prefix("HR@"))
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| HarnessError::Report(format!("unexpected header {header:?}")))?;
    if header != hourly_header(cutoff) {
        return Err(HarnessError::Report(format!("unexpected header {header:?}")));
    }
    let num = |s: &str, line: usize| -> Result<Option<f64>, HarnessError> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| HarnessError::Report(format!("line {line}: bad number {s:?}")))
    };
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let hour = rec[0].parse().map_err(|_| HarnessError::Report(format!("line {line}: bad hour")))?;
        let mut metrics = HourMetrics {
            n_measurements: rec[9].parse().map_err(|_| HarnessError::Report(format!("line {line}: bad count")))?,
            hr: None,
            mrr: None,
            cov: None,
            esi_r: None,
            esi_rr: None,
            eild_r: None,
            eild_rr: None,
        };
        for (j, m) in Metric::ALL.iter().enumerate() {
            m.set(&mut metrics, num(&rec[2 + j], line)?);
        }
        rows.push(HourRow { hour, algorithm: rec[1].to_string(), metrics });
    }
    Ok((rows, cutoff))
}

fn summarize(algorithms: &[String], rows: &[HourRow]) -> Vec<SummaryRow> {
    let by_alg = |a: &str| -> Vec<&HourRow> { rows.iter().filter(|r| r.algorithm == a).collect() };
    let mut out = Vec::new();
    for metric in Metric::ALL {
        let series: Vec<Vec<(usize, f64)>> = algorithms
            .iter()
            .map(|a| by_alg(a).iter().filter_map(|r| metric.of(&r.metrics).map(|v| (r.hour, v))).collect())
            .collect();
        let means: Vec<Option<f64>> = series
            .iter()
            .map(|s| (!s.is_empty()).then(|| s.iter().map(|x| x.1).sum::<f64>() / s.len() as f64))
            .collect();
        let best = means
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.map(|v| (i, v)))
            .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((i, v)),
            })
            .map(|x| x.0);
        let comparisons = algorithms.len().saturating_sub(1);
        for (i, a) in algorithms.iter().enumerate() {
            let mut row = SummaryRow {
                algorithm: a.clone(),
                metric,
                mean: means[i],
                best: best == Some(i),
                p_value: None,
                degenerate: false,
            };
            if let Some(b) = best.filter(|&b| b != i) {
                let theirs: BTreeMap<usize, f64> = series[i].iter().copied().collect();
                let (x, y): (Vec<f64>, Vec<f64>) = series[b]
                    .iter()
                    .filter_map(|&(h, v)| theirs.get(&h).map(|&w| (v, w)))
                    .unzip();
                if let Ok(t) = paired_ttest(&x, &y, comparisons) {
                    row.p_value = Some(t.p_value);
                    row.degenerate = t.degenerate;
                }
            }
            out.push(row);
        }
    }
    out
}

/// Tidy `(run, hour, algorithm, metric, value)` rows. Inputs may be per-hour
/// reports or earlier long-format outputs; the latter keep their labels.
pub fn write_long_csv<W: Write>(inputs: &[(String, String)], w: W) -> Result<usize, HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LONG_HEADER)?;
    let mut n = 0;
    for (label, text) in inputs {
        let first = text.lines().next().unwrap_or_default();
        if first.split(',').eq(LONG_HEADER.iter().copied()) {
            let mut rd = csv::Reader::from_reader(text.as_bytes());
            for rec in rd.records() {
                let rec = rec?;
                if rec.len() != LONG_HEADER.len() {
                    return Err(HarnessError::Report(format!("{label}: malformed long-format row")));
                }
                out.write_record(&rec)?;
                n += 1;
            }
            continue;
        }
        let (rows, cutoff) =
            read_hourly_csv(text.as_bytes()).map_err(|e| HarnessError::Report(format!("{label}: {e}")))?;
        for r in &rows {
            for m in Metric::ALL {
                out.write_record([label.clone(), r.hour.to_string(), r.algorithm.clone(), m.column(cutoff), fmt(m.of(&r.metrics))])?;
                n += 1;
            }
        }
    }
    out.flush()?;
    Ok(n)
}

pub const LONG_HEADER: [&str; 5] = ["run", "hour", "algorithm", "metric", "value"];
