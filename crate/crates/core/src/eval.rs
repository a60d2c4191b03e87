//! F1 and area under the F1 curve, iteration reports, and the two baseline
//! selection strategies (uniform random, entropy only).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::matcher::PairEncoding;
use crate::scoring::conditional_entropy;

/// Accumulate `(tp, fp, fn)` with one prediction.
pub fn f1_counts(acc: (usize, usize, usize), prediction: Label, truth: Label) -> (usize, usize, usize) {
    let (tp, fp, fn_) = acc;
    match (prediction, truth) {
        (1, 1) => (tp + 1, fp, fn_),
        (1, _) => (tp, fp + 1, fn_),
        (_, 1) => (tp, fp, fn_ + 1),
        _ => acc,
    }
}

/// `(precision, recall, f1)`, each 0 when its denominator is 0.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1(predictions: &HashMap<String, Label>, truth: &HashMap<String, Label>) -> Result<Metrics> {
    if predictions.len() != truth.len() || predictions.keys().any(|k| !truth.contains_key(k)) {
        return Err(Error::KeyMismatch);
    }
    let (tp, fp, fn_) = predictions
        .iter()
        .fold((0, 0, 0), |acc, (k, &p)| f1_counts(acc, p, truth[k]));
    let (precision, recall, f1) = f1_from_counts(tp, fp, fn_);
    Ok(Metrics { precision, recall, f1 })
}

/// Trapezoid area under `(labels_used, f1_percent)` divided by 100.
pub fn auc_f1(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let area: f64 = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(area / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Battleship,
    Random,
    Entropy,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "battleship" => Ok(Self::Battleship),
            "random" => Ok(Self::Random),
            "entropy" => Ok(Self::Entropy),
            other => Err(Error::Config(format!("unknown strategy {other:?} (battleship, random, entropy)"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Battleship => "battleship",
            Self::Random => "random",
            Self::Entropy => "entropy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    /// Oracle labels so far, seed included.
    pub labels_used: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Pairs sent to the oracle in this iteration, in selection order.
    pub selected_ids: Vec<String>,
    pub oracle_calls: usize,
    pub weak_count: usize,
    /// Precision of weak match labels against ground truth, when known.
    pub weak_precision: Option<f64>,
    pub pool_remaining: usize,
    pub pool_exhausted: bool,
    pub timing: f64,
}

/// `(labels_used, f1 %)` points of a report series.
pub fn curve(reports: &[IterationReport]) -> Vec<(f64, f64)> {
    reports.iter().map(|r| (r.labels_used as f64, 100.0 * r.f1)).collect()
}

pub fn write_reports_jsonl(path: impl AsRef<Path>, reports: &[IterationReport]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_reports_jsonl(path: impl AsRef<Path>) -> Result<Vec<IterationReport>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// `iteration,labels_used,f1,auc_so_far`; the AUC column is empty until two points exist.
pub fn write_summary_csv(path: impl AsRef<Path>, reports: &[IterationReport]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "iteration,labels_used,f1,auc_so_far")?;
    let points = curve(reports);
    for (i, r) in reports.iter().enumerate() {
        let auc = auc_f1(&points[..=i]).map(|a| format!("{a:.6}")).unwrap_or_default();
        writeln!(out, "{},{},{:.6},{}", r.iteration, r.labels_used, r.f1, auc)?;
    }
    out.flush()?;
    Ok(())
}

/// Strategy × iteration table of F1 (%) with a final AUC column, as CSV.
pub fn compare_table(runs: &[(String, Vec<IterationReport>)]) -> String {
    let iterations = runs.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    let mut header = vec!["strategy".to_string()];
    header.extend((0..iterations).map(|i| format!("f1_iter{i}")));
    header.push("auc".into());
    let mut lines = vec![header.join(",")];
    for (name, reports) in runs {
        let mut row = vec![name.clone()];
        for i in 0..iterations {
            row.push(reports.get(i).map(|r| format!("{:.2}", 100.0 * r.f1)).unwrap_or_default());
        }
        row.push(auc_f1(&curve(reports)).map(|a| format!("{a:.2}")).unwrap_or_default());
        lines.push(row.join(","));
    }
    lines.join("\n") + "\n"
}

/// `b` pool positions drawn uniformly without replacement.
pub fn strategy_random(pool: &[usize], b: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.choose_multiple(&mut rng, b.min(pool.len())).copied().collect()
}

/// Split `b` between predicted matches (`b/2`) and non-matches (the rest),
/// picking on each side by `key` (ties to the smaller index) and filling a
/// short side from the other.
fn per_side(pool: &[usize], encodings: &[PairEncoding], b: usize, key: impl Fn(f64) -> f64) -> Vec<usize> {
    let mut sides: [Vec<(f64, usize)>; 2] = [Vec::new(), Vec::new()];
    for &i in pool {
        let c = encodings[i].confidence;
        sides[encodings[i].prediction as usize].push((key(c), i));
    }
    for side in &mut sides {
        side.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    }
    let b = b.min(pool.len());
    let want_pos = b / 2;
    let take_pos = want_pos.min(sides[1].len());
    let take_neg = (b - take_pos).min(sides[0].len());
    let take_pos = (b - take_neg).min(sides[1].len());
    let mut picked: Vec<usize> = sides[1][..take_pos].iter().map(|x| x.1).collect();
    picked.extend(sides[0][..take_neg].iter().map(|x| x.1));
    picked
}

/// The most uncertain pairs by local entropy, half per predicted class.
pub fn strategy_entropy_only(pool: &[usize], encodings: &[PairEncoding], b: usize) -> Vec<usize> {
    per_side(pool, encodings, b, |c| conditional_entropy(c.clamp(0.0, 1.0)).unwrap_or(0.0))
}

/// Weak labels for the entropy-only baseline: the most certain pairs per side,
/// labeled with the prediction.
pub fn weak_entropy_only(pool: &[usize], encodings: &[PairEncoding], weak_budget: usize) -> Vec<(usize, Label)> {
    per_side(pool, encodings, weak_budget, |c| -conditional_entropy(c.clamp(0.0, 1.0)).unwrap_or(0.0))
        .into_iter()
        .map(|i| (i, encodings[i].prediction))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f1_examples() {
        let (p, r, f) = f1_from_counts(8, 2, 2);
        assert!((p - 0.8).abs() < 1e-12 && (r - 0.8).abs() < 1e-12 && (f - 0.8).abs() < 1e-12);
        assert_eq!(f1_from_counts(0, 0, 5), (0.0, 0.0, 0.0));
        assert_eq!(f1_from_counts(4, 0, 0).2, 1.0);
    }

    #[test]
    fn f1_over_maps() {
        let truth: HashMap<String, Label> = [("a", 1), ("b", 0), ("c", 1)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert_eq!(f1(&truth, &truth).unwrap().f1, 1.0);
        let zeros: HashMap<String, Label> = truth.keys().map(|k| (k.clone(), 0)).collect();
        assert_eq!(f1(&zeros, &truth).unwrap().f1, 0.0);
        let mut missing = truth.clone();
        missing.remove("a");
        assert!(matches!(f1(&missing, &truth), Err(Error::KeyMismatch)));
        missing.insert("z".into(), 1);
        assert!(matches!(f1(&missing, &truth), Err(Error::KeyMismatch)));
    }

    #[test]
    fn auc_examples() {
        let flat: Vec<(f64, f64)> = (1..=9).map(|i| (100.0 * i as f64, 50.0)).collect();
        assert!((auc_f1(&flat).unwrap() - 400.0).abs() < 1e-9);
        assert!((auc_f1(&[(100.0, 0.0), (900.0, 100.0)]).unwrap() - 400.0).abs() < 1e-9);
        assert!(auc_f1(&[(100.0, 10.0)]).is_err());
    }

    #[test]
    fn random_strategy_edges() {
        let pool: Vec<usize> = (0..20).collect();
        assert!(strategy_random(&pool, 0, 1).is_empty());
        let mut all = strategy_random(&pool, 50, 1);
        all.sort();
        assert_eq!(all, pool);
        assert_eq!(strategy_random(&pool, 5, 3), strategy_random(&pool, 5, 3));
    }

    fn enc(confidences: &[f64]) -> Vec<PairEncoding> {
        confidences
            .iter()
            .enumerate()
            .map(|(i, &c)| PairEncoding::new(i.to_string(), vec![1.0], c))
            .collect()
    }

    #[test]
    fn entropy_only_example() {
        let e = enc(&[0.5, 0.9, 0.45, 0.05]);
        let mut picked = strategy_entropy_only(&[0, 1, 2, 3], &e, 2);
        picked.sort();
        assert_eq!(picked, vec![0, 2]);
        let weak = weak_entropy_only(&[0, 1, 2, 3], &e, 2);
        assert_eq!(weak, vec![(1, 1), (3, 0)]);
    }

    #[test]
    fn entropy_only_fills_short_side_and_breaks_ties_by_index() {
        let e = enc(&[0.99, 0.01, 0.01, 0.01, 0.01]);
        assert_eq!(strategy_entropy_only(&[0, 1, 2, 3, 4], &e, 4), vec![0, 1, 2, 3]);
        let e = enc(&[0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(strategy_entropy_only(&[4, 3, 2, 1, 0], &e, 2), vec![3, 0]);
    }

    #[test]
    fn report_files() {
        let r = |i: usize, f1: f64| IterationReport {
            iteration: i,
            labels_used: 100 * (i + 1),
            f1,
            precision: f1,
            recall: f1,
            selected_ids: vec![],
            oracle_calls: 100,
            weak_count: 0,
            weak_precision: None,
            pool_remaining: 10,
            pool_exhausted: false,
            timing: 0.0,
        };
        let reports = vec![r(0, 0.2), r(1, 0.4)];
        let dir = tempfile::tempdir().unwrap();
        write_reports_jsonl(dir.path().join("r.jsonl"), &reports).unwrap();
        assert_eq!(read_reports_jsonl(dir.path().join("r.jsonl")).unwrap(), reports);
        write_summary_csv(dir.path().join("s.csv"), &reports).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(text, "iteration,labels_used,f1,auc_so_far\n0,100,0.200000,\n1,200,0.400000,30.000000\n");
        let table = compare_table(&[("random".into(), reports)]);
        assert_eq!(table, "strategy,f1_iter0,f1_iter1,auc\nrandom,20.00,40.00,30.00\n");
    }

    proptest! {
        #[test]
        fn f1_ignores_order(labels in proptest::collection::vec((0u8..2, 0u8..2), 1..40)) {
            let a = labels.iter().fold((0, 0, 0), |acc, &(p, t)| f1_counts(acc, p, t));
            let b = labels.iter().rev().fold((0, 0, 0), |acc, &(p, t)| f1_counts(acc, p, t));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn dominating_curve_has_larger_auc(
            base in proptest::collection::vec(0.0f64..90.0, 2..10),
            lift in proptest::collection::vec(0.0f64..10.0, 10),
        ) {
            let low: Vec<(f64, f64)> = base.iter().enumerate().map(|(i, &f)| (100.0 * (i + 1) as f64, f)).collect();
            let high: Vec<(f64, f64)> = low.iter().zip(&lift).map(|(&(x, f), l)| (x, f + l)).collect();
            prop_assert!(auc_f1(&high).unwrap() >= auc_f1(&low).unwrap());
        }
    }
}
