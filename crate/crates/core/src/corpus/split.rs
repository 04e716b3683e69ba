use rand::seq::SliceRandom;

use super::FunctionRecord;
use crate::error::{Error, Result};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, valid, test };
        let all = r.as_array();
        if all.iter().any(|x| !(x.is_finite() && *x > 0.0)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split ratios must be positive and sum to 1, got {all:?}")));
        }
        Ok(r)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, valid: 0.1, test: 0.1 }
    }
}

/// Splits `corpus` into train/valid/test, stratified by label.
///
/// Split sizes follow the rounded global ratios; within each label stratum the
/// count in each split is within one of its exact quota. Records keep their
/// corpus order inside each split.
pub fn split_corpus(
    corpus: &[FunctionRecord],
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Vec<FunctionRecord>, Vec<FunctionRecord>, Vec<FunctionRecord>)> {
    let ratios = SplitRatios::new(ratios.train, ratios.valid, ratios.test)?;
    if corpus.len() < 3 {
        return Err(Error::data(format!("need at least 3 records to split, got {}", corpus.len())));
    }
    let r = ratios.as_array();
    let n = corpus.len();
    let t0 = (n as f64 * r[0]).round() as i64;
    let t1 = (n as f64 * r[1]).round() as i64;
    let targets = [t0, t1, n as i64 - t0 - t1];

    let strata: Vec<Vec<usize>> = (0u8..=1)
        .map(|label| (0..n).filter(|&i| corpus[i].label == label).collect())
        .collect();
    let counts = allocate(&strata.iter().map(Vec::len).collect::<Vec<_>>(), &r, targets);

    let mut assignment = vec![0usize; n];
    for (s, members) in strata.iter().enumerate() {
        let mut members = members.clone();
        members.shuffle(&mut rng::rng(seed, &[stream::SPLIT, s as u64]));
        let mut it = members.into_iter();
        for (split, &c) in counts[s].iter().enumerate() {
            for idx in it.by_ref().take(c) {
                assignment[idx] = split;
            }
        }
    }
    let pick = |k: usize| -> Vec<FunctionRecord> {
        (0..n).filter(|&i| assignment[i] == k).map(|i| corpus[i].clone()).collect()
    };
    Ok((pick(0), pick(1), pick(2)))
}

// Floors each stratum quota, then hands out the leftover units one per split,
// preferring splits still below their global target and larger fractional parts.
fn allocate(stratum_sizes: &[usize], ratios: &[f64; 3], targets: [i64; 3]) -> Vec<[usize; 3]> {
    let mut deficit = targets;
    let mut out = Vec::with_capacity(stratum_sizes.len());
    let mut plans: Vec<([usize; 3], [f64; 3], usize)> = Vec::new();
    for &ns in stratum_sizes {
        let quota = ratios.map(|r| ns as f64 * r);
        let base = quota.map(|q| q.floor() as usize);
        let frac = [0, 1, 2].map(|j| quota[j] - base[j] as f64);
        for j in 0..3 {
            deficit[j] -= base[j] as i64;
        }
        plans.push((base, frac, ns - base.iter().sum::<usize>()));
    }
    // strata with more leftover units choose first
    let mut order: Vec<usize> = (0..plans.len()).collect();
    order.sort_by_key(|&s| std::cmp::Reverse(plans[s].2));
    for s in order {
        let (ref mut base, frac, extra) = plans[s];
        let mut used = [false; 3];
        for _ in 0..extra {
            let j = (0..3)
                .filter(|&j| !used[j])
                .max_by(|&a, &b| {
                    (deficit[a] > 0)
                        .cmp(&(deficit[b] > 0))
                        .then(frac[a].total_cmp(&frac[b]))
                        .then(b.cmp(&a))
                })
                .expect("at most two leftover units per stratum");
            used[j] = true;
            base[j] += 1;
            deficit[j] -= 1;
        }
    }
    out.extend(plans.into_iter().map(|(b, _, _)| b));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(n_vuln: usize, n_benign: usize) -> Vec<FunctionRecord> {
        (0..n_vuln + n_benign)
            .map(|i| {
                let label = u8::from(i < n_vuln);
                FunctionRecord::new(format!("f{i}"), vec!["x;".into()], label, []).unwrap()
            })
            .collect()
    }

    fn vulns(c: &[FunctionRecord]) -> usize {
        c.iter().filter(|r| r.label == 1).count()
    }

    #[test]
    fn sizes_follow_ratios() {
        let c = corpus(37, 63);
        let (a, b, t) = split_corpus(&c, SplitRatios::default(), 1).unwrap();
        assert_eq!((a.len(), b.len(), t.len()), (80, 10, 10));
    }

    #[test]
    fn stratified_counts() {
        let c = corpus(50, 50);
        let (a, b, t) = split_corpus(&c, SplitRatios::default(), 3).unwrap();
        assert_eq!((vulns(&a), vulns(&b), vulns(&t)), (40, 5, 5));
    }

    #[test]
    fn deterministic_given_seed() {
        let c = corpus(20, 30);
        let x = split_corpus(&c, SplitRatios::default(), 9).unwrap();
        let y = split_corpus(&c, SplitRatios::default(), 9).unwrap();
        assert_eq!(x, y);
        let z = split_corpus(&c, SplitRatios::default(), 10).unwrap();
        assert_ne!(x.0, z.0);
    }

    #[test]
    fn rejects_tiny_corpus_and_bad_ratios() {
        assert!(split_corpus(&corpus(1, 1), SplitRatios::default(), 0).is_err());
        let bad = SplitRatios { train: 0.5, valid: 0.5, test: 0.5 };
        assert!(split_corpus(&corpus(5, 5), bad, 0).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_stratified_partition(
            n_vuln in 0usize..80,
            n_benign in 0usize..80,
            tr in 0.2f64..0.9,
            va_share in 0.1f64..0.9,
            seed in any::<u64>(),
        ) {
            prop_assume!(n_vuln + n_benign >= 3);
            let va = (1.0 - tr) * va_share;
            let ratios = SplitRatios::new(tr, va, 1.0 - tr - va).unwrap();
            let c = corpus(n_vuln, n_benign);
            let (a, b, t) = split_corpus(&c, ratios, seed).unwrap();
            let n = c.len() as f64;
            let r = ratios.as_array();

            let mut ids: Vec<&str> = a.iter().chain(&b).chain(&t).map(|r| r.id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), c.len());

            for (part, rj) in [&a, &b, &t].into_iter().zip(r) {
                prop_assert!((part.len() as f64 - n * rj).abs() <= 1.0 + 1e-9);
                prop_assert!((vulns(part) as f64 - n_vuln as f64 * rj).abs() <= 1.0 + 1e-9);
                let benign = part.len() - vulns(part);
                prop_assert!((benign as f64 - n_benign as f64 * rj).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
