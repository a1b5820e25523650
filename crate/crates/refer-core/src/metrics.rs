//! Scoring a run against ground truth: rank correlations with tie handling,
//! reasoning accuracy, the four-cell error partition, paired significance
//! tests, and relative cost fractions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::gateway::CostLedger;
use crate::parser::Answer;
use crate::score::{Rational, ScoreScale};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("degenerate input: {reason}")]
    DegenerateInput { reason: String },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("rating-mode partition requires a score scale")]
    MissingScale,
    #[error("degenerate variance: all paired differences are equal")]
    DegenerateVariance,
    #[error("all methods have zero cost")]
    AllZeroCosts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Spearman,
    KendallTauB,
}

/// A rank correlation value together with how it was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    pub kind: CorrelationKind,
    pub n_pairs: usize,
}

fn check_pair_lengths(x: &[f64], y: &[f64]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricsError::DegenerateInput {
            reason: format!("need at least 2 pairs, got {}", x.len()),
        });
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().all(|&e| e == v[0]) {
            return Err(MetricsError::DegenerateInput {
                reason: format!("{name} is constant"),
            });
        }
    }
    Ok(())
}

/// Average ranks (1-based), ties sharing the mean of their rank positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j are tied; ranks are 1-based
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx * vy).sqrt()
}

/// Spearman rank correlation: average ranks assigned to ties, then the
/// Pearson correlation of the two rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, MetricsError> {
    check_pair_lengths(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    Ok(Correlation {
        value: pearson(&rx, &ry),
        kind: CorrelationKind::Spearman,
        n_pairs: x.len(),
    })
}

/// Kendall's tau-b: (C − D) / √((n₀ − t_x)(n₀ − t_y)) with n₀ = n(n−1)/2 and
/// t_x, t_y the within-sequence tied pair counts.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<Correlation, MetricsError> {
    check_pair_lengths(x, y)?;
    let n = x.len();
    let mut numerator = 0i64; // C − D as a sum of sign products
    for i in 0..n {
        for j in (i + 1)..n {
            numerator += sign_of(x[i] - x[j]) * sign_of(y[i] - y[j]);
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let tied = |v: &[f64]| -> f64 {
        let mut sorted = v.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut pairs = 0.0;
        let mut run = 1usize;
        for k in 1..sorted.len() {
            if sorted[k] == sorted[k - 1] {
                run += 1;
            } else {
                pairs += (run * (run - 1) / 2) as f64;
                run = 1;
            }
        }
        pairs + (run * (run - 1) / 2) as f64
    };
    let tx = tied(x);
    let ty = tied(y);
    let denom = ((n0 - tx) * (n0 - ty)).sqrt();
    if denom == 0.0 {
        return Err(MetricsError::DegenerateInput {
            reason: "all pairs tied in one sequence".into(),
        });
    }
    Ok(Correlation {
        value: numerator as f64 / denom,
        kind: CorrelationKind::KendallTauB,
        n_pairs: n,
    })
}

fn sign_of(d: f64) -> i64 {
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of predictions exactly matching gold answers.
pub fn accuracy(pred: &[Answer], gold: &[Answer]) -> Result<f64, MetricsError> {
    if pred.len() != gold.len() || pred.is_empty() {
        return Err(MetricsError::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// One value entering the error partition: a numeric score or an answer.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionValue {
    Score(Rational),
    Answer(Answer),
}

/// The four-cell breakdown of area-chair correctness conditioned on whether
/// any peer was correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub some_peer_correct_ac_correct: usize,
    pub some_peer_correct_ac_wrong: usize,
    pub all_peers_wrong_ac_correct: usize,
    pub all_peers_wrong_ac_wrong: usize,
    /// Band half-width as a fraction of the scale span; 0 in reasoning mode.
    pub threshold_fraction: f64,
}

impl PartitionCounts {
    pub fn total(&self) -> usize {
        self.some_peer_correct_ac_correct
            + self.some_peer_correct_ac_wrong
            + self.all_peers_wrong_ac_correct
            + self.all_peers_wrong_ac_wrong
    }
}

/// Partitions samples by peer/area-chair correctness.
///
/// Rating mode ("Score" values) needs `scale`: a score is correct when its
/// distance from the truth is at most `threshold_fraction × (max − min)`.
/// Reasoning mode ("Answer" values) uses exact match and ignores the
/// threshold.
pub fn error_partition(
    peer_values: &[Vec<PartitionValue>],
    ac_values: &[PartitionValue],
    truth: &[PartitionValue],
    scale: Option<&ScoreScale>,
    threshold_fraction: Rational,
) -> Result<PartitionCounts, MetricsError> {
    if peer_values.len() != ac_values.len() || ac_values.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            left: peer_values.len(),
            right: ac_values.len().min(truth.len()),
        });
    }

    let correct = |value: &PartitionValue, truth: &PartitionValue| -> Result<bool, MetricsError> {
        match (value, truth) {
            (PartitionValue::Score(s), PartitionValue::Score(t)) => {
                let scale = scale.ok_or(MetricsError::MissingScale)?;
                let band = threshold_fraction * scale.span();
                Ok((*s - *t).abs() <= band)
            }
            (PartitionValue::Answer(a), PartitionValue::Answer(t)) => Ok(a == t),
            _ => Err(MetricsError::DegenerateInput {
                reason: "mixed score/answer values in partition".into(),
            }),
        }
    };

    let mut counts = PartitionCounts {
        some_peer_correct_ac_correct: 0,
        some_peer_correct_ac_wrong: 0,
        all_peers_wrong_ac_correct: 0,
        all_peers_wrong_ac_wrong: 0,
        threshold_fraction: threshold_fraction.to_f64(),
    };
    for ((peers, ac), t) in peer_values.iter().zip(ac_values).zip(truth) {
        let mut some_peer = false;
        for p in peers {
            if correct(p, t)? {
                some_peer = true;
                break;
            }
        }
        let ac_ok = correct(ac, t)?;
        match (some_peer, ac_ok) {
            (true, true) => counts.some_peer_correct_ac_correct += 1,
            (true, false) => counts.some_peer_correct_ac_wrong += 1,
            (false, true) => counts.all_peers_wrong_ac_correct += 1,
            (false, false) => counts.all_peers_wrong_ac_wrong += 1,
        }
    }
    Ok(counts)
}

/// Result of a two-sided paired t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub degrees_of_freedom: usize,
}

/// Two-sided paired t-test on dᵢ = aᵢ − bᵢ with n−1 degrees of freedom.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricsError::DegenerateInput {
            reason: format!("need at least 2 pairs, got {n}"),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|&v| v == d[0]) {
        return Err(MetricsError::DegenerateVariance);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTest {
        t,
        p,
        degrees_of_freedom: n - 1,
    })
}

/// Each method's total cost divided by the maximum method cost; the most
/// expensive method maps to exactly 1.0.
pub fn relative_costs(ledger: &CostLedger) -> Result<BTreeMap<String, f64>, MetricsError> {
    let per_method = ledger.cost_by_method();
    let max = per_method
        .values()
        .copied()
        .max()
        .filter(|m| *m > Rational::ZERO)
        .ok_or(MetricsError::AllZeroCosts)?;
    Ok(per_method
        .into_iter()
        .map(|(method, cost)| (method, (cost / max).to_f64()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_identity_and_reversal() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &x).unwrap().value, 1.0);
        let y = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman(&x, &y).unwrap().value, -1.0);
    }

    #[test]
    fn spearman_with_ties_matches_hand_arithmetic() {
        // ranks of x: [1, 2.5, 2.5, 4]; Pearson against [1,2,3,4] = 4.5/sqrt(22.5)
        let x = [1.0, 2.0, 2.0, 4.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let r = spearman(&x, &y).unwrap().value;
        assert!((r - 4.5 / 22.5f64.sqrt()).abs() < 1e-12);
        assert!((r - 0.9487).abs() < 1e-4);
    }

    #[test]
    fn kendall_fixture_five_over_sqrt_thirty() {
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let tau = kendall_tau_b(&x, &y).unwrap().value;
        assert!((tau - 5.0 / 30.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kendall_identity_is_one() {
        let x = [3.0, 1.0, 4.0, 1.5, 9.0];
        let tau = kendall_tau_b(&x, &x).unwrap().value;
        assert!((tau - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_sequences_are_degenerate() {
        let c = [2.0, 2.0, 2.0];
        let v = [1.0, 2.0, 3.0];
        assert!(matches!(
            spearman(&c, &v),
            Err(MetricsError::DegenerateInput { .. })
        ));
        assert!(matches!(
            kendall_tau_b(&v, &c),
            Err(MetricsError::DegenerateInput { .. })
        ));
        assert!(matches!(
            spearman(&v, &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn accuracy_counts_exact_matches() {
        let a = |c| Answer::Label(c);
        assert_eq!(
            accuracy(&[a('A'), a('B'), a('C')], &[a('A'), a('B'), a('C')]).unwrap(),
            1.0
        );
        let two_thirds = accuracy(&[a('A'), a('B'), a('C')], &[a('A'), a('B'), a('D')]).unwrap();
        assert!((two_thirds - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            accuracy(&[], &[]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn partition_band_rule_matches_hand_evaluation() {
        // scale 1–3, truth 3, band ±0.5: peer 3 correct, AC 2.6 correct.
        let scale = ScoreScale::integer(1, 3);
        let peers = vec![vec![
            PartitionValue::Score(Rational::from_integer(3)),
            PartitionValue::Score(Rational::from_integer(1)),
            PartitionValue::Score(Rational::from_integer(2)),
        ]];
        let ac = vec![PartitionValue::Score(Rational::new(13, 5))];
        let truth = vec![PartitionValue::Score(Rational::from_integer(3))];
        let counts =
            error_partition(&peers, &ac, &truth, Some(&scale), Rational::new(1, 4)).unwrap();
        assert_eq!(counts.some_peer_correct_ac_correct, 1);
        assert_eq!(counts.total(), 1);
    }

    #[test]
    fn partition_reasoning_exact_match() {
        let peers = vec![vec![
            PartitionValue::Answer(Answer::Label('B')),
            PartitionValue::Answer(Answer::Label('B')),
        ]];
        let ac = vec![PartitionValue::Answer(Answer::Label('C'))];
        let truth = vec![PartitionValue::Answer(Answer::Label('C'))];
        let counts = error_partition(&peers, &ac, &truth, None, Rational::ZERO).unwrap();
        assert_eq!(counts.all_peers_wrong_ac_correct, 1);
    }

    #[test]
    fn partition_rating_without_scale_is_missing_scale() {
        let peers = vec![vec![PartitionValue::Score(Rational::ONE)]];
        let ac = vec![PartitionValue::Score(Rational::ONE)];
        let truth = vec![PartitionValue::Score(Rational::ONE)];
        assert_eq!(
            error_partition(&peers, &ac, &truth, None, Rational::new(1, 4)).unwrap_err(),
            MetricsError::MissingScale
        );
    }

    #[test]
    fn ttest_zero_mean_difference() {
        let a = [1.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0, 0.0, 1.0];
        let r = paired_ttest(&a, &b).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ttest_equal_inputs_degenerate() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(
            paired_ttest(&a, &a).unwrap_err(),
            MetricsError::DegenerateVariance
        );
    }

    #[test]
    fn ttest_matches_hand_computation() {
        // d = [1..5], mean 3, sd sqrt(2.5), t = 3/(sqrt(2.5)/sqrt(5)) = 3*sqrt(2)
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let r = paired_ttest(&a, &b).unwrap();
        assert!((r.t - 3.0 * 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.degrees_of_freedom, 4);
        assert!(r.p > 0.0 && r.p < 0.05);
    }
}
