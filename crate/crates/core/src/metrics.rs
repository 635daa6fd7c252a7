//! Interval and calibration metrics.
//!
//! Credible intervals are equal-tailed empirical quantiles of each column of a
//! [`ProbabilitySampleSet`]. The sample quantile at level `q` of `S` sorted
//! values `x[0] ≤ … ≤ x[S-1]` sits at position `h = (S - 1)·q` and linearly
//! interpolates `x[⌊h⌋]` and `x[⌈h⌉]` (Hyndman–Fan type 7).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::samples::{MethodTag, ProbabilitySampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub lower: f64,
    pub upper: f64,
    /// Nominal level `1 - α`.
    pub level: f64,
}

impl CredibleInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Closed-interval membership.
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Type-7 quantile of an ascending slice.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{name} must lie in (0, 1), got {v}")))
    }
}

pub fn credible_intervals(samples: &ProbabilitySampleSet, alpha: f64) -> Result<Vec<CredibleInterval>> {
    check_unit_open("alpha", alpha)?;
    if samples.num_draws() < 2 {
        return Err(Error::Precondition("credible intervals need at least 2 draws".into()));
    }
    (0..samples.num_points()).map(|j| column_interval(samples.column(j), alpha)).collect()
}

/// Equal-tailed interval of one column of draws.
pub fn column_interval(mut draws: Vec<f64>, alpha: f64) -> Result<CredibleInterval> {
    check_unit_open("alpha", alpha)?;
    if draws.len() < 2 {
        return Err(Error::Precondition("credible intervals need at least 2 draws".into()));
    }
    if draws.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("NaN among draws".into()));
    }
    draws.sort_unstable_by(f64::total_cmp);
    Ok(CredibleInterval {
        lower: sorted_quantile(&draws, alpha / 2.0),
        upper: sorted_quantile(&draws, 1.0 - alpha / 2.0),
        level: 1.0 - alpha,
    })
}

/// Fraction of true probabilities inside their intervals.
pub fn coverage(intervals: &[CredibleInterval], true_probs: Option<&[f64]>) -> Result<f64> {
    let truth = true_probs
        .ok_or_else(|| Error::Precondition("coverage requires known true probabilities".into()))?;
    if truth.len() != intervals.len() {
        return Err(Error::Precondition(format!(
            "{} intervals but {} true probabilities",
            intervals.len(),
            truth.len()
        )));
    }
    if intervals.is_empty() {
        return Err(Error::Precondition("coverage of an empty set".into()));
    }
    let hits: Vec<f64> = intervals
        .iter()
        .zip(truth)
        .map(|(ci, &p)| if ci.contains(p) { 1.0 } else { 0.0 })
        .collect();
    Ok(pairwise_sum(&hits) / hits.len() as f64)
}

pub fn mean_width(intervals: &[CredibleInterval]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::Precondition("mean width of an empty set".into()));
    }
    let w: Vec<f64> = intervals.iter().map(CredibleInterval::width).collect();
    Ok(pairwise_sum(&w) / w.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EceVariant {
    /// Per bin `|mean(y) - mean(π̂)|`.
    #[default]
    PositiveFrequency,
    /// Per bin `|acc(y, τ(π̂)) - mean(π̂)|` with τ thresholding at 0.5.
    LiteralEq6,
}

/// Bin index in `0..bins`: bins are right-closed, the first also holds 0.
pub fn bin_index(c: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut k = ((c * b).ceil() as usize).saturating_sub(1).min(bins - 1);
    while k > 0 && c <= k as f64 / b {
        k -= 1;
    }
    while k + 1 < bins && c > (k + 1) as f64 / b {
        k += 1;
    }
    k
}

/// Per-bin summary for reliability tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub positive_rate: f64,
    pub accuracy: f64,
}

pub fn calibration_bins(labels: &[u8], confidences: &[f64], bins: usize) -> Result<Vec<CalibrationBin>> {
    if bins == 0 {
        return Err(Error::Precondition("ece needs at least one bin".into()));
    }
    if labels.len() != confidences.len() {
        return Err(Error::Precondition("labels and confidences differ in length".into()));
    }
    if labels.is_empty() {
        return Err(Error::Precondition("ece of an empty set".into()));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::Precondition(format!("confidence {c} outside [0, 1]")));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("label {y} is not binary")));
    }
    let mut conf: Vec<Vec<f64>> = vec![Vec::new(); bins];
    let mut pos: Vec<Vec<f64>> = vec![Vec::new(); bins];
    let mut hit: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for (&y, &c) in labels.iter().zip(confidences) {
        let b = bin_index(c, bins);
        conf[b].push(c);
        pos[b].push(f64::from(y));
        let pred = u8::from(c >= 0.5);
        hit[b].push(if pred == y { 1.0 } else { 0.0 });
    }
    // Sorting makes the per-bin sums independent of observation order.
    let mean = |v: &mut Vec<f64>| {
        if v.is_empty() {
            0.0
        } else {
            v.sort_unstable_by(f64::total_cmp);
            pairwise_sum(v) / v.len() as f64
        }
    };
    Ok((0..bins)
        .map(|b| CalibrationBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: conf[b].len(),
            mean_confidence: mean(&mut conf[b]),
            positive_rate: mean(&mut pos[b]),
            accuracy: mean(&mut hit[b]),
        })
        .collect())
}

/// Expected calibration error over `bins` equal-width bins.
pub fn ece(labels: &[u8], confidences: &[f64], bins: usize, variant: EceVariant) -> Result<f64> {
    let table = calibration_bins(labels, confidences, bins)?;
    let n = labels.len() as f64;
    let terms: Vec<f64> = table
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let target = match variant {
                EceVariant::PositiveFrequency => b.positive_rate,
                EceVariant::LiteralEq6 => b.accuracy,
            };
            b.count as f64 / n * (target - b.mean_confidence).abs()
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Fraction of thresholded predictions equal to the labels; ties go to class 1.
pub fn accuracy(labels: &[u8], confidences: &[f64], threshold: f64) -> Result<f64> {
    if labels.len() != confidences.len() {
        return Err(Error::Precondition("labels and confidences differ in length".into()));
    }
    if labels.is_empty() {
        return Err(Error::Precondition("accuracy of an empty set".into()));
    }
    let hits: Vec<f64> = labels
        .iter()
        .zip(confidences)
        .map(|(&y, &c)| if u8::from(c >= threshold) == y { 1.0 } else { 0.0 })
        .collect();
    Ok(pairwise_sum(&hits) / hits.len() as f64)
}

/// High confidence set: points whose whole interval lies above `1 - δ` or below `δ`.
pub fn hcs(intervals: &[CredibleInterval], delta: f64) -> Result<(Vec<usize>, f64)> {
    check_unit_open("delta", delta)?;
    let members: Vec<usize> = intervals
        .iter()
        .enumerate()
        .filter(|(_, ci)| ci.lower > 1.0 - delta || ci.upper < delta)
        .map(|(i, _)| i)
        .collect();
    let prop = if intervals.is_empty() {
        0.0
    } else {
        members.len() as f64 / intervals.len() as f64
    };
    Ok((members, prop))
}

/// One method's scores on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: MethodTag,
    pub replicate: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub ece: f64,
    pub accuracy: f64,
    pub hcs_proportion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub alpha: f64,
    pub delta: f64,
    pub ece_bins: usize,
    pub ece_variant: EceVariant,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings { alpha: 0.1, delta: 0.2, ece_bins: 10, ece_variant: EceVariant::PositiveFrequency }
    }
}

/// Scores a sample set against labels and true probabilities at the same points.
/// The point prediction is the posterior predictive mean.
pub fn evaluate(
    samples: &ProbabilitySampleSet,
    labels: &[u8],
    true_probs: Option<&[f64]>,
    settings: &MetricSettings,
    replicate: usize,
) -> Result<MetricsReport> {
    let cis = credible_intervals(samples, settings.alpha)?;
    let point = samples.column_means();
    Ok(MetricsReport {
        method: samples.method,
        replicate,
        coverage: coverage(&cis, true_probs)?,
        mean_width: mean_width(&cis)?,
        ece: ece(labels, &point, settings.ece_bins, settings.ece_variant)?,
        accuracy: accuracy(labels, &point, 0.5)?,
        hcs_proportion: hcs(&cis, settings.delta)?.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ci(lower: f64, upper: f64) -> CredibleInterval {
        CredibleInterval { lower, upper, level: 0.9 }
    }

    fn set(cols: &[Vec<f64>]) -> ProbabilitySampleSet {
        let s = cols[0].len();
        let rows = (0..s).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        ProbabilitySampleSet::from_rows(rows, MethodTag::BnnMcmc).unwrap()
    }

    #[test]
    fn constant_column_gives_degenerate_interval() {
        let cis = credible_intervals(&set(&[vec![0.37; 9]]), 0.1).unwrap();
        assert_eq!((cis[0].lower, cis[0].upper), (0.37, 0.37));
        assert_eq!(cis[0].width(), 0.0);
    }

    #[test]
    fn order_statistic_interpolation() {
        let col: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        // Oracle: position (S-1)q over the ascending values.
        let oracle = |q: f64| {
            let h = 9.0 * q;
            let k = h.floor() as usize;
            col[k] + (h - k as f64) * (col[(k + 1).min(9)] - col[k])
        };
        let mut shuffled = col.clone();
        shuffled.swap(0, 7);
        shuffled.swap(3, 9);
        let ci = column_interval(shuffled, 0.2).unwrap();
        assert!((ci.lower - oracle(0.1)).abs() < 1e-15);
        assert!((ci.upper - oracle(0.9)).abs() < 1e-15);
        assert!((ci.lower - 0.19).abs() < 1e-12 && (ci.upper - 0.91).abs() < 1e-12);
        assert!((ci.level - 0.8).abs() < 1e-15);
        // Same rule through a sample set (entries must be interior).
        let interior: Vec<f64> = col.iter().map(|v| v * 0.9).collect();
        let cis = credible_intervals(&set(&[interior]), 0.2).unwrap();
        assert!((cis[0].lower - 0.9 * 0.19).abs() < 1e-12 && (cis[0].upper - 0.9 * 0.91).abs() < 1e-12);
    }

    #[test]
    fn alpha_near_one_collapses_to_median() {
        let col: Vec<f64> = (1..=11).map(|k| k as f64 / 12.0).collect();
        let cis = credible_intervals(&set(&[col]), 0.999).unwrap();
        assert!(cis[0].width() < 0.01);
        assert!((cis[0].lower - 0.5).abs() < 0.01);
    }

    #[test]
    fn alpha_out_of_range_is_an_error() {
        let s = set(&[vec![0.2, 0.3]]);
        assert!(credible_intervals(&s, 0.0).is_err());
        assert!(credible_intervals(&s, 1.0).is_err());
    }

    #[test]
    fn coverage_cases() {
        let full = vec![ci(0.0, 1.0); 3];
        assert_eq!(coverage(&full, Some(&[0.1, 0.5, 0.9])).unwrap(), 1.0);
        let wrong = vec![ci(0.2, 0.2); 3];
        assert_eq!(coverage(&wrong, Some(&[0.1, 0.5, 0.9])).unwrap(), 0.0);
        let mixed = [ci(0.2, 0.4), ci(0.6, 0.7), ci(0.9, 0.9)];
        assert_eq!(coverage(&mixed, Some(&[0.3, 0.5, 0.9])).unwrap(), 2.0 / 3.0);
        assert!(coverage(&mixed, None).is_err());
    }

    #[test]
    fn width_cases() {
        assert_eq!(mean_width(&[ci(0.0, 1.0), ci(0.0, 1.0)]).unwrap(), 1.0);
        assert_eq!(mean_width(&[ci(0.4, 0.4)]).unwrap(), 0.0);
        assert!((mean_width(&[ci(0.1, 0.3), ci(0.5, 0.9)]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn bin_edges_are_right_closed() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.3, 10), 2);
        assert_eq!(bin_index(0.30000000000000004, 10), 3);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.5, 2), 0);
        assert_eq!(bin_index(0.7, 1), 0);
    }

    #[test]
    fn ece_hand_case() {
        let conf = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let y = [0, 0, 1, 1, 1, 1];
        let expected = 0.5 * (1.0f64 / 3.0 - 0.2).abs() + 0.5 * (1.0f64 - 0.8).abs();
        let got = ece(&y, &conf, 2, EceVariant::PositiveFrequency).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.166_666_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn ece_exact_agreement_is_zero() {
        let conf = vec![1.0; 20];
        let y = vec![1u8; 20];
        for bins in [1, 3, 10] {
            assert_eq!(ece(&y, &conf, bins, EceVariant::PositiveFrequency).unwrap(), 0.0);
            assert_eq!(ece(&y, &conf, bins, EceVariant::LiteralEq6).unwrap(), 0.0);
        }
    }

    #[test]
    fn ece_rejects_out_of_range_confidence() {
        assert!(ece(&[1], &[1.2], 10, EceVariant::PositiveFrequency).is_err());
        assert!(ece(&[1], &[0.2], 0, EceVariant::PositiveFrequency).is_err());
    }

    #[test]
    fn literal_variant_penalises_low_confidence_bins() {
        // Calibrated at 0.2 but thresholding predicts 0 and is right 80% of the time.
        let conf = vec![0.2; 10];
        let y = [1, 1, 0, 0, 0, 0, 0, 0, 0, 0];
        assert!(ece(&y, &conf, 10, EceVariant::PositiveFrequency).unwrap() < 1e-15);
        assert!((ece(&y, &conf, 10, EceVariant::LiteralEq6).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn hcs_cases() {
        let cis = [ci(0.85, 0.95), ci(0.1, 0.15), ci(0.3, 0.6)];
        let (idx, prop) = hcs(&cis, 0.2).unwrap();
        assert_eq!(idx, vec![0, 1]);
        assert!((prop - 2.0 / 3.0).abs() < 1e-15);
        let (idx, prop) = hcs(&[ci(0.0, 1.0); 4], 0.2).unwrap();
        assert!(idx.is_empty());
        assert_eq!(prop, 0.0);
        let (idx, _) = hcs(&[ci(0.01, 1.0), ci(0.0, 0.99), ci(0.0, 1.0)], 0.999_999).unwrap();
        assert_eq!(idx, vec![0, 1]);
    }

    #[test]
    fn accuracy_cases() {
        let y = [0u8, 1, 1, 0];
        let exact: Vec<f64> = y.iter().map(|&v| crate::numeric::clamp_prob(f64::from(v))).collect();
        assert_eq!(accuracy(&y, &exact, 0.5).unwrap(), 1.0);
        let flipped: Vec<f64> = exact.iter().map(|p| 1.0 - p).collect();
        assert_eq!(accuracy(&y, &flipped, 0.5).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 0, 1], &[0.4, 0.6, 0.5, 0.2], 0.5).unwrap(), 0.5);
    }

    fn sample_sets() -> impl Strategy<Value = ProbabilitySampleSet> {
        (2usize..30, 1usize..6).prop_flat_map(|(s, m)| {
            proptest::collection::vec(0.001f64..0.999, s * m).prop_map(move |v| {
                ProbabilitySampleSet::from_flat(v, s, m, MethodTag::Bootstrap).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn wider_nominal_level_dominates(set in sample_sets(), a1 in 0.01f64..0.5, gap in 0.01f64..0.45,
                                         truth in proptest::collection::vec(0.001f64..0.999, 6)) {
            let a2 = a1 + gap;
            let c1 = credible_intervals(&set, a1).unwrap();
            let c2 = credible_intervals(&set, a2).unwrap();
            for (i1, i2) in c1.iter().zip(&c2) {
                prop_assert!(i1.width() >= i2.width());
                prop_assert!(i1.lower <= i2.lower && i1.upper >= i2.upper);
            }
            let t = &truth[..set.num_points()];
            prop_assert!(coverage(&c1, Some(t)).unwrap() >= coverage(&c2, Some(t)).unwrap());
        }

        #[test]
        fn hcs_is_monotone_in_delta(bounds in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40),
                                    d1 in 0.01f64..0.99, d2 in 0.01f64..0.99) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let cis: Vec<_> = bounds.iter().map(|&(a, b)| ci(a.min(b), a.max(b))).collect();
            let small = hcs(&cis, lo).unwrap().0;
            let big = hcs(&cis, hi).unwrap().0;
            prop_assert!(small.iter().all(|i| big.contains(i)));
        }

        #[test]
        fn ece_order_and_duplication_invariant(pairs in proptest::collection::vec((0.0f64..=1.0, 0u8..2), 1..60),
                                               bins in 1usize..12, rot in 0usize..60) {
            let conf: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let base = ece(&y, &conf, bins, EceVariant::PositiveFrequency).unwrap();
            let k = rot % conf.len();
            let mut c2 = conf.clone(); c2.rotate_left(k); c2.reverse();
            let mut y2 = y.clone(); y2.rotate_left(k); y2.reverse();
            prop_assert_eq!(base, ece(&y2, &c2, bins, EceVariant::PositiveFrequency).unwrap());
            let cd: Vec<f64> = conf.iter().chain(&conf).copied().collect();
            let yd: Vec<u8> = y.iter().chain(&y).copied().collect();
            let dup = ece(&yd, &cd, bins, EceVariant::PositiveFrequency).unwrap();
            prop_assert!((base - dup).abs() < 1e-12);
        }

        #[test]
        fn ece_vanishes_when_bins_match_their_positive_rate(counts in proptest::collection::vec((1usize..6, 0usize..6), 1..10)) {
            // Each bin holds `k` positives out of `n = k + j`, all at confidence k/n.
            let mut conf = Vec::new();
            let mut y = Vec::new();
            for &(k, j) in &counts {
                let n = k + j;
                let c = k as f64 / n as f64;
                for i in 0..n {
                    conf.push(c);
                    y.push(u8::from(i < k));
                }
            }
            // One bin per distinct confidence is guaranteed by a single bin when all agree;
            // with many bins distinct confidences may share a bin, so use bins = 1 per group.
            for (&(k, j), start) in counts.iter().zip(counts.iter().scan(0, |s, &(k, j)| { let o = *s; *s += k + j; Some(o) })) {
                let n = k + j;
                let e = ece(&y[start..start + n], &conf[start..start + n], 10, EceVariant::PositiveFrequency).unwrap();
                prop_assert!(e < 1e-12);
            }
        }
    }
}
