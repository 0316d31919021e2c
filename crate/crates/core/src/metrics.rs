//! Clustering and feature-selection accuracy.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Pair counts between two partitions: same/same (`a`), same/different
/// (`b`), different/same (`c`) and different/different (`d`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

/// Pair counts from the contingency table, in `O(n)`.
pub fn pair_counts(z_true: &[usize], z_hat: &[usize]) -> Result<PairCounts> {
    if z_true.len() != z_hat.len() {
        return Err(Error::Dimension(format!(
            "{} true labels vs {} estimated",
            z_true.len(),
            z_hat.len()
        )));
    }
    let choose2 = |m: u64| m * m.saturating_sub(1) / 2;
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&t, &h) in z_true.iter().zip(z_hat) {
        *cells.entry((t, h)).or_default() += 1;
        *rows.entry(t).or_default() += 1;
        *cols.entry(h).or_default() += 1;
    }
    let a: u64 = cells.values().map(|&m| choose2(m)).sum();
    let same_true: u64 = rows.values().map(|&m| choose2(m)).sum();
    let same_hat: u64 = cols.values().map(|&m| choose2(m)).sum();
    let total = choose2(z_true.len() as u64);
    Ok(PairCounts {
        a,
        b: same_true - a,
        c: same_hat - a,
        d: total + a - same_true - same_hat,
    })
}

/// Adjusted Rand index through the pair-count formula
/// `[N(A+D) - X] / [N² - X]` with `N = n choose 2` and
/// `X = (A+B)(A+C) + (C+D)(B+D)`. A zero denominator (both partitions
/// trivial) gives 1 when the partitions agree and 0 otherwise.
pub fn ari(z_true: &[usize], z_hat: &[usize]) -> Result<f64> {
    let PairCounts { a, b, c, d } = pair_counts(z_true, z_hat)?;
    let (a, b, c, d) = (a as i128, b as i128, c as i128, d as i128);
    let total = a + b + c + d;
    let x = (a + b) * (a + c) + (c + d) * (b + d);
    let num = total * (a + d) - x;
    let den = total * total - x;
    if den == 0 {
        return Ok(if b == 0 && c == 0 { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

/// Confusion table of a binary call against truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(truth: &[bool], call: &[bool]) -> Result<Self> {
        if truth.len() != call.len() {
            return Err(Error::Dimension(format!(
                "{} true indicators vs {} calls",
                truth.len(),
                call.len()
            )));
        }
        let mut c = Self {
            tp: 0,
            tn: 0,
            fp: 0,
            fn_: 0,
        };
        for (&t, &h) in truth.iter().zip(call) {
            match (t, h) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// `TP / (TP + FN)`; 0 when there are no true positives to find.
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `TN / (TN + FP)`; 0 when there are no true negatives.
    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    /// Matthews correlation coefficient; 0 when any margin is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if den == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub mcc: f64,
}

pub fn confusion_metrics(gamma_true: &[bool], gamma_hat: &[bool]) -> Result<SelectionMetrics> {
    let c = ConfusionCounts::new(gamma_true, gamma_hat)?;
    Ok(SelectionMetrics {
        sensitivity: c.sensitivity(),
        specificity: c.specificity(),
        mcc: c.mcc(),
    })
}

/// Area under the ROC curve of `scores` against `truth`, as the Mann-Whitney
/// statistic with ties counted one half.
pub fn auc(truth: &[bool], scores: &[f64]) -> Result<f64> {
    if truth.len() != scores.len() {
        return Err(Error::Dimension(format!(
            "{} labels vs {} scores",
            truth.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = truth.iter().filter(|t| **t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, doubled to stay in integers
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        for &o in &order[i..=j] {
            if truth[o] {
                rank_sum2 += twice_mid;
            }
        }
        i = j + 1;
    }
    let (np, nn) = (n_pos as u64, n_neg as u64);
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ari_oracle(t: &[usize], h: &[usize]) -> f64 {
        let n = t.len();
        let (mut a, mut b, mut c, mut d) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for k in 0..i {
                match (t[i] == t[k], h[i] == h[k]) {
                    (true, true) => a += 1.0,
                    (true, false) => b += 1.0,
                    (false, true) => c += 1.0,
                    (false, false) => d += 1.0,
                }
            }
        }
        let nn = (n * (n - 1) / 2) as f64;
        let x = (a + b) * (a + c) + (c + d) * (b + d);
        let den = nn * nn - x;
        if den == 0.0 {
            return if b == 0.0 && c == 0.0 { 1.0 } else { 0.0 };
        }
        (nn * (a + d) - x) / den
    }

    #[test]
    fn ari_examples() {
        let z = [0, 0, 1, 1, 2];
        assert_eq!(ari(&z, &z).unwrap(), 1.0);
        assert_eq!(ari(&z, &[5, 5, 3, 3, 9]).unwrap(), 1.0);
        let t = [1, 1, 2, 2];
        let h = [1, 1, 1, 2];
        // A=1, B=1, C=2, D=2, N=6, X=2*3+4*3=18, N(A+D)=18: numerator 0
        assert_eq!(ari(&t, &h).unwrap(), ari_oracle(&t, &h));
        assert_eq!(ari(&t, &h).unwrap(), 0.0);
        assert!(ari(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ari_matches_pair_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let n = rng.random_range(2..25);
            let kt = rng.random_range(1..5);
            let kh = rng.random_range(1..5);
            let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
            let h: Vec<usize> = (0..n).map(|_| rng.random_range(0..kh)).collect();
            assert_eq!(ari(&t, &h).unwrap(), ari_oracle(&t, &h));
        }
    }

    proptest! {
        #[test]
        fn ari_symmetric_and_permutation_invariant(
            t in prop::collection::vec(0usize..4, 2..30),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h: Vec<usize> = t.iter().map(|_| rng.random_range(0..3)).collect();
            prop_assert_eq!(ari(&t, &h).unwrap(), ari(&h, &t).unwrap());
            let relabel = |z: &[usize]| z.iter().map(|&k| 7 - k).collect::<Vec<_>>();
            prop_assert_eq!(ari(&t, &h).unwrap(), ari(&relabel(&t), &h).unwrap());
            prop_assert_eq!(ari(&t, &h).unwrap(), ari(&t, &relabel(&h)).unwrap());
        }
    }

    #[test]
    fn confusion_examples() {
        let t = [true, false, true, false];
        let m = confusion_metrics(&t, &t).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.mcc), (1.0, 1.0, 1.0));
        let m = confusion_metrics(&t, &[true; 4]).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.mcc), (1.0, 0.0, 0.0));
        assert!(confusion_metrics(&t, &t[..3]).is_err());
    }

    #[test]
    fn confusion_matches_hand_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let t: Vec<bool> = (0..20).map(|_| rng.random()).collect();
            let h: Vec<bool> = (0..20).map(|_| rng.random()).collect();
            let (mut tp, mut tn, mut fp, mut fnn) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..20 {
                if t[k] && h[k] {
                    tp += 1.0
                } else if !t[k] && !h[k] {
                    tn += 1.0
                } else if h[k] {
                    fp += 1.0
                } else {
                    fnn += 1.0
                }
            }
            let m = confusion_metrics(&t, &h).unwrap();
            let den: f64 = (tp + fp) * (tp + fnn) * (tn + fp) * (tn + fnn);
            let mcc = if den == 0.0 { 0.0 } else { (tp * tn - fp * fnn) / den.sqrt() };
            assert_eq!(m.mcc, mcc);
            if tp + fnn > 0.0 {
                assert_eq!(m.sensitivity, tp / (tp + fnn));
            }
            if tn + fp > 0.0 {
                assert_eq!(m.specificity, tn / (tn + fp));
            }
            assert!((-1.0..=1.0).contains(&m.mcc));
        }
    }

    /// ROC curve traced threshold by threshold and integrated with trapezoids.
    fn auc_trapezoid(truth: &[bool], scores: &[f64]) -> f64 {
        let mut th: Vec<f64> = scores.to_vec();
        th.sort_by(|a, b| b.total_cmp(a));
        th.dedup();
        let np = truth.iter().filter(|t| **t).count() as f64;
        let nn = truth.len() as f64 - np;
        let mut pts = vec![(0.0, 0.0)];
        for &c in &th {
            let tp = truth.iter().zip(scores).filter(|(t, s)| **t && **s >= c).count() as f64;
            let fp = truth.iter().zip(scores).filter(|(t, s)| !**t && **s >= c).count() as f64;
            pts.push((fp / nn, tp / np));
        }
        pts.windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    #[test]
    fn auc_examples() {
        let t = [true, true, false, false];
        assert_eq!(auc(&t, &[0.9, 0.8, 0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&t, &[0.1, 0.2, 0.9, 0.8]).unwrap(), 0.0);
        assert_eq!(auc(&t, &[0.5; 4]).unwrap(), 0.5);
        assert!(auc(&[true, true], &[0.1, 0.2]).is_err());
        let t = [true, false, true, true, false, false, true, false, false, true];
        let s = [0.9, 0.3, 0.3, 0.8, 0.5, 0.1, 0.6, 0.6, 0.2, 1.0];
        assert!((auc(&t, &s).unwrap() - auc_trapezoid(&t, &s)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_matches_trapezoid(
            pairs in prop::collection::vec((any::<bool>(), 0u8..6), 2..30)
        ) {
            let t: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            prop_assume!(t.iter().any(|x| *x) && t.iter().any(|x| !*x));
            let s: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 5.0).collect();
            let a = auc(&t, &s).unwrap();
            prop_assert!((a - auc_trapezoid(&t, &s)).abs() < 1e-12);
            // strictly increasing transforms leave it unchanged
            let s2: Vec<f64> = s.iter().map(|v| (3.0 * v).exp()).collect();
            prop_assert_eq!(a, auc(&t, &s2).unwrap());
        }
    }
}
