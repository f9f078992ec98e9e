//! Grade CSV export and score-file comparison.

use std::fmt::Write as _;

use autograde_core::report::export_status;
use autograde_core::stats::{
    describe, exclude_zeros, histogram10, linfit, minmax_align, pearson, CorrelationResult, DescriptiveStats, Histogram,
    RegressionResult, ScoreDataset,
};
use autograde_core::GradingRecord;
use serde::{Deserialize, Serialize};

pub const GRADES_HEADER: [&str; 4] = ["submission_id", "student_id", "score", "status"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeRow {
    pub submission_id: String,
    pub student_id: String,
    pub score: f64,
    pub status: String,
}

impl GradeRow {
    pub fn from_record(r: &GradingRecord) -> Self {
        GradeRow {
            submission_id: r.submission.submission_id.clone(),
            student_id: r.submission.student_id.clone(),
            score: r.exposed_score(),
            status: export_status(r).into(),
        }
    }
}

/// One row per record with the exposed score at full precision.
pub fn write_grades(records: &[GradingRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GRADES_HEADER).expect("in-memory write");
    for r in records {
        let row = GradeRow::from_record(r);
        w.write_record([&row.submission_id, &row.student_id, &row.score.to_string(), &row.status])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CsvError {
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

pub fn read_grades(text: &str) -> Result<Vec<GradeRow>, CsvError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CsvError::Csv(e.to_string()))?.clone();
    if headers.iter().ne(GRADES_HEADER) {
        return Err(CsvError::MissingColumn(GRADES_HEADER.join(",")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CsvError::Csv(e.to_string()))?;
        let score = rec[2]
            .parse::<f64>()
            .map_err(|e| CsvError::BadRow { row: i + 1, reason: format!("score {:?}: {e}", &rec[2]) })?;
        out.push(GradeRow {
            submission_id: rec[0].into(),
            student_id: rec[1].into(),
            score,
            status: rec[3].into(),
        });
    }
    Ok(out)
}

/// Reads a two-column score file. The id column is `key` when given,
/// otherwise the first of `submission_id`, `student_id`, `id`; scores come
/// from `score`.
pub fn read_scores(text: &str, label: &str, key: Option<&str>) -> Result<ScoreDataset, CsvError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CsvError::Csv(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = match key {
        Some(k) => find(k).ok_or_else(|| CsvError::MissingColumn(k.into()))?,
        None => ["submission_id", "student_id", "id"]
            .iter()
            .find_map(|k| find(k))
            .ok_or_else(|| CsvError::MissingColumn("submission_id".into()))?,
    };
    let score_col = find("score").ok_or_else(|| CsvError::MissingColumn("score".into()))?;
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CsvError::Csv(e.to_string()))?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        let raw = rec.get(score_col).unwrap_or("").trim();
        let score = raw
            .parse::<f64>()
            .map_err(|e| CsvError::BadRow { row: i + 1, reason: format!("score {raw:?}: {e}") })?;
        entries.push((id, score));
    }
    ScoreDataset::new(label, entries).map_err(|e| CsvError::BadRow { row: 0, reason: e.to_string() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SideSummary {
    pub label: String,
    pub stats: Result<DescriptiveStats, String>,
    pub histogram: Result<Histogram, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub a: SideSummary,
    pub b: SideSummary,
    /// `b` after min-max alignment, when requested.
    pub b_aligned: Option<SideSummary>,
    pub correlation: Result<CorrelationResult, String>,
    /// `b` (aligned if requested) regressed on `a`.
    pub regression: Result<RegressionResult, String>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CompareOptions {
    pub exclude_zeros: bool,
    pub normalize_to_max: Option<f64>,
    /// Histogram domain; defaults to the alignment maximum or 100.
    pub domain_max: Option<f64>,
}

fn side(ds: &ScoreDataset, domain: f64) -> SideSummary {
    SideSummary {
        label: ds.label().into(),
        stats: describe(ds).map_err(|e| e.to_string()),
        histogram: histogram10(ds, domain).map_err(|e| e.to_string()),
    }
}

pub fn compare_scores(a: &ScoreDataset, b: &ScoreDataset, opts: CompareOptions) -> Comparison {
    let (a, b) = if opts.exclude_zeros { (exclude_zeros(a), exclude_zeros(b)) } else { (a.clone(), b.clone()) };
    let domain = opts.domain_max.or(opts.normalize_to_max).unwrap_or(100.0);
    let aligned = opts.normalize_to_max.map(|m| minmax_align(&b, m));
    let b_used = match &aligned {
        Some(Ok(ds)) => ds,
        _ => &b,
    };
    Comparison {
        a: side(&a, domain),
        b: side(&b, domain),
        b_aligned: aligned.as_ref().map(|r| match r {
            Ok(ds) => side(ds, domain),
            Err(e) => SideSummary {
                label: format!("{} (alignment failed)", b.label()),
                stats: Err(e.to_string()),
                histogram: Err(e.to_string()),
            },
        }),
        correlation: pearson(&a, b_used).map_err(|e| e.to_string()),
        regression: linfit(&a, b_used).map_err(|e| e.to_string()),
    }
}

fn fmt_side(out: &mut String, s: &SideSummary) {
    let _ = writeln!(out, "{}", s.label);
    match &s.stats {
        Ok(d) => {
            let _ = writeln!(
                out,
                "  n={} mean={:.4} median={:.4} std={:.4} skewness={:.4} min={:.4} max={:.4}",
                d.n, d.mean, d.median, d.std, d.skewness, d.min, d.max
            );
        }
        Err(e) => {
            let _ = writeln!(out, "  stats unavailable: {e}");
        }
    }
    match &s.histogram {
        Ok(h) => {
            let bins: Vec<String> = h.bins.iter().map(|b| format!("[{}, {}): {}", b.lower, b.upper, b.count)).collect();
            let _ = writeln!(out, "  histogram {}", bins.join(", "));
        }
        Err(e) => {
            let _ = writeln!(out, "  histogram unavailable: {e}");
        }
    }
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        fmt_side(&mut out, &self.a);
        fmt_side(&mut out, &self.b);
        if let Some(b) = &self.b_aligned {
            fmt_side(&mut out, b);
        }
        match &self.correlation {
            Ok(c) => {
                let _ = writeln!(out, "pearson r={:.4} p={:.4} n={} unpaired={}", c.r, c.p_value, c.n, c.unpaired);
            }
            Err(e) => {
                let _ = writeln!(out, "pearson unavailable: {e}");
            }
        }
        match &self.regression {
            Ok(r) => {
                let _ = writeln!(out, "linear fit slope={:.4} intercept={:.4} n={}", r.slope, r.intercept, r.n);
            }
            Err(e) => {
                let _ = writeln!(out, "linear fit unavailable: {e}");
            }
        }
        out
    }
}
