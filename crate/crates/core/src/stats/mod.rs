//! Score statistics for comparing graders.

mod paired;
pub mod special;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use paired::{join, linfit, pearson, CorrelationResult, Joined, RegressionResult};

#[derive(Clone, Debug, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatsError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("score for \"{id}\" is not finite")]
    NonFinite { id: String },
    #[error("submission \"{id}\" appears more than once")]
    DuplicateId { id: String },
    #[error("degenerate input: {reason}")]
    DegenerateInput { reason: String },
    #[error("{} score(s) outside [0, {domain_max}]", offenders.len())]
    OutOfDomain { domain_max: f64, offenders: Vec<(String, f64)> },
    #[error("domain maximum must be positive and finite, got {0}")]
    InvalidDomain(f64),
}

pub(crate) fn degenerate(reason: &str) -> StatsError {
    StatsError::DegenerateInput { reason: reason.into() }
}

/// Labelled scores keyed by submission id. Scores are finite and ids unique.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreDataset {
    label: String,
    entries: Vec<(String, f64)>,
}

impl ScoreDataset {
    pub fn new(label: impl Into<String>, entries: Vec<(String, f64)>) -> Result<Self, StatsError> {
        let mut ids: Vec<&str> = entries.iter().map(|(id, _)| id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(StatsError::DuplicateId { id: w[0].into() });
        }
        if let Some((id, _)) = entries.iter().find(|(_, s)| !s.is_finite()) {
            return Err(StatsError::NonFinite { id: id.clone() });
        }
        Ok(ScoreDataset { label: label.into(), entries })
    }

    /// Convenience constructor numbering entries `0..n`.
    pub fn from_scores(label: impl Into<String>, scores: &[f64]) -> Result<Self, StatsError> {
        ScoreDataset::new(
            label,
            scores.iter().enumerate().map(|(i, s)| (format!("{i}"), *s)).collect(),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, s)| *s).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|(i, _)| i == id).map(|(_, s)| *s)
    }
}

/// Drops scores that are exactly zero.
pub fn exclude_zeros(ds: &ScoreDataset) -> ScoreDataset {
    ScoreDataset {
        label: format!("{} (zeros excluded)", ds.label),
        entries: ds.entries.iter().filter(|(_, s)| *s != 0.0).cloned().collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub skewness: f64,
    /// Set when skewness is undefined (n < 3 or constant data) and reported as 0.
    pub skewness_degenerate: bool,
    pub min: f64,
    pub max: f64,
}

pub fn describe(ds: &ScoreDataset) -> Result<DescriptiveStats, StatsError> {
    describe_values(&ds.scores())
}

pub fn describe_values(values: &[f64]) -> Result<DescriptiveStats, StatsError> {
    let n = values.len();
    if n == 0 {
        return Err(StatsError::EmptyDataset);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[n - 1];
    let nf = n as f64;
    let mean = (sorted.iter().sum::<f64>() / nf).clamp(min, max);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let constant = min == max;
    let (m2, m3) = sorted.iter().fold((0.0, 0.0), |(m2, m3), v| {
        let d = v - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let std = if n < 2 || constant { 0.0 } else { libm::sqrt(m2 / (nf - 1.0)) };
    let skewness_degenerate = n < 3 || constant;
    let skewness = if skewness_degenerate {
        0.0
    } else {
        let (m2, m3) = (m2 / nf, m3 / nf);
        let g1 = m3 / libm::pow(m2, 1.5);
        g1 * libm::sqrt(nf * (nf - 1.0)) / (nf - 2.0)
    };
    Ok(DescriptiveStats {
        n,
        mean,
        median,
        std,
        skewness,
        skewness_degenerate,
        min,
        max,
    })
}

/// Min-max rescales `ai` onto `[0, human_max]`.
pub fn minmax_align(ai: &ScoreDataset, human_max: f64) -> Result<ScoreDataset, StatsError> {
    if !(human_max.is_finite() && human_max > 0.0) {
        return Err(degenerate("human maximum must be positive"));
    }
    let scores = ai.scores();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores.is_empty() || lo == hi {
        return Err(degenerate("fewer than two distinct scores"));
    }
    let span = hi - lo;
    Ok(ScoreDataset {
        label: format!("{} (min-max aligned to {})", ai.label, human_max),
        entries: ai
            .entries
            .iter()
            .map(|(id, s)| (id.clone(), (s - lo) / span * human_max))
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Ten-point bins. Each bin is `[lower, upper)` except the last, which also
/// holds `upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(|b| b.count).collect()
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

pub const BIN_WIDTH: f64 = 10.0;

pub fn histogram10(ds: &ScoreDataset, domain_max: f64) -> Result<Histogram, StatsError> {
    if !(domain_max.is_finite() && domain_max > 0.0) {
        return Err(StatsError::InvalidDomain(domain_max));
    }
    let offenders: Vec<(String, f64)> = ds
        .entries
        .iter()
        .filter(|(_, s)| !(0.0..=domain_max).contains(s))
        .cloned()
        .collect();
    if !offenders.is_empty() {
        return Err(StatsError::OutOfDomain { domain_max, offenders });
    }
    let nbins = libm::ceil(domain_max / BIN_WIDTH) as usize;
    let mut bins: Vec<HistogramBin> = (0..nbins)
        .map(|i| HistogramBin {
            lower: i as f64 * BIN_WIDTH,
            upper: ((i + 1) as f64 * BIN_WIDTH).min(domain_max),
            count: 0,
        })
        .collect();
    for (_, s) in &ds.entries {
        let idx = (libm::floor(s / BIN_WIDTH) as usize).min(nbins - 1);
        bins[idx].count += 1;
    }
    Ok(Histogram { bin_width: BIN_WIDTH, bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn ds(scores: &[f64]) -> ScoreDataset {
        ScoreDataset::from_scores("t", scores).unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert_eq!(
            ScoreDataset::new("x", vec![("a".into(), 1.0), ("a".into(), 2.0)]),
            Err(StatsError::DuplicateId { id: "a".into() })
        );
        assert!(matches!(
            ScoreDataset::new("x", vec![("a".into(), f64::NAN)]),
            Err(StatsError::NonFinite { .. })
        ));
    }

    #[test]
    fn zero_exclusion() {
        let d = ScoreDataset::new("h", vec![("a".into(), 0.0), ("b".into(), 50.0)]).unwrap();
        let e = exclude_zeros(&d);
        assert_eq!(e.entries(), [("b".into(), 50.0)]);
        assert_eq!(e.label(), "h (zeros excluded)");
        assert!(exclude_zeros(&ds(&[0.0, 0.0])).is_empty());
        assert_eq!(exclude_zeros(&ds(&[1.0, 2.0])).entries(), ds(&[1.0, 2.0]).entries());
    }

    #[test]
    fn describe_small_cases() {
        let d = describe(&ds(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!((d.mean, d.median, d.std, d.skewness), (2.0, 2.0, 1.0, 0.0));
        assert!(!d.skewness_degenerate);
        let c = describe(&ds(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!((c.std, c.skewness, c.skewness_degenerate), (0.0, 0.0, true));
        assert_eq!(describe(&ds(&[1.0, 2.0, 3.0, 4.0])).unwrap().median, 2.5);
        let one = describe(&ds(&[88.0])).unwrap();
        assert_eq!((one.mean, one.median, one.std, one.skewness_degenerate), (88.0, 88.0, 0.0, true));
        assert_eq!(describe(&ds(&[])), Err(StatsError::EmptyDataset));
    }

    #[test]
    fn skewness_reference() {
        // scipy.stats.skew([1, 2, 3, 10], bias=False)
        let d = describe(&ds(&[1.0, 2.0, 3.0, 10.0])).unwrap();
        assert!((d.skewness - 1.763_632_614_803_888).abs() < 1e-12, "{}", d.skewness);
    }

    #[test]
    fn minmax_examples() {
        let d = ScoreDataset::new(
            "ai",
            vec![("lo".into(), 15.63), ("mid".into(), 59.95), ("hi".into(), 87.50)],
        )
        .unwrap();
        let n = minmax_align(&d, 100.0).unwrap();
        assert_eq!(n.get("lo"), Some(0.0));
        assert_eq!(n.get("hi"), Some(100.0));
        // (59.95 − 15.63) / 71.87 × 100
        let mid = n.get("mid").unwrap();
        assert!((mid - 61.66689856685682).abs() < 1e-9, "{mid}");
        assert_eq!(libm::round(mid * 100.0) / 100.0, 61.67);
        let two = minmax_align(&ds(&[0.0, 10.0]), 50.0).unwrap();
        assert_eq!(two.scores(), [0.0, 50.0]);
        assert!(matches!(minmax_align(&ds(&[3.0, 3.0]), 100.0), Err(StatsError::DegenerateInput { .. })));
    }

    #[test]
    fn histogram_examples() {
        let h = histogram10(&ds(&[5.0, 15.0, 100.0]), 100.0).unwrap();
        assert_eq!(h.counts(), [1, 1, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!((h.bins[9].lower, h.bins[9].upper), (90.0, 100.0));
        assert_eq!(histogram10(&ds(&[]), 100.0).unwrap().total(), 0);
        assert_eq!(histogram10(&ds(&[90.0]), 100.0).unwrap().counts()[9], 1);
        assert_eq!(histogram10(&ds(&[89.999]), 100.0).unwrap().counts()[8], 1);
        match histogram10(&ds(&[-1.0, 50.0, 101.0]), 100.0) {
            Err(StatsError::OutOfDomain { offenders, .. }) => assert_eq!(offenders.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..100.0, 1..60)
    }

    proptest! {
        #[test]
        fn describe_invariants(v in scores_strategy(), seed in any::<u64>()) {
            let d = describe_values(&v).unwrap();
            prop_assert!(d.min <= d.median && d.median <= d.max);
            prop_assert!(d.min <= d.mean && d.mean <= d.max);
            prop_assert!(d.std >= 0.0);
            prop_assert_eq!(d.std == 0.0, v.iter().all(|x| *x == v[0]));
            // Permutation invariance (rotation plus reversal).
            let mut p = v.clone();
            p.rotate_left((seed as usize) % v.len());
            p.reverse();
            let e = describe_values(&p).unwrap();
            prop_assert_eq!((d.n, d.median, d.min, d.max), (e.n, e.median, e.min, e.max));
            prop_assert!((d.mean - e.mean).abs() <= 1e-9);
            prop_assert!((d.std - e.std).abs() <= 1e-9);
        }

        #[test]
        fn minmax_preserves_ranking(v in proptest::collection::vec(0.0f64..100.0, 2..60), hm in 1.0f64..200.0) {
            prop_assume!(v.iter().any(|x| *x != v[0]));
            let out = minmax_align(&ds(&v), hm).unwrap().scores();
            let lo = out.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!((lo, hi), (0.0, hm));
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if v[i] < v[j] {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        }

        #[test]
        fn histogram_counts_and_shift(k in proptest::collection::vec(0u32..360, 0..60)) {
            // Quarter-point scores keep x + 10 exact.
            let v: Vec<f64> = k.iter().map(|k| *k as f64 * 0.25).collect();
            let h = histogram10(&ds(&v), 100.0).unwrap();
            prop_assert_eq!(h.total(), v.len());
            let shifted: Vec<f64> = v.iter().map(|x| x + 10.0).collect();
            let hs = histogram10(&ds(&shifted), 100.0).unwrap();
            let c = h.counts();
            let cs = hs.counts();
            prop_assert_eq!(cs[0], 0);
            prop_assert_eq!(&cs[1..], &c[..9]);
        }
    }
}
