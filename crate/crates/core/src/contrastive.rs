//! Top-K statement representations, cosine similarity, per-batch k-means and
//! the (clustered) supervised contrastive losses.
//!
//! For an anchor `i` with label 1 and positive set `Pos(i)`, the loss term is
//!
//! ```text
//!   -1/|Pos(i)| * sum_{p in Pos(i)} log( exp(s_ip / tau) / sum_{a != i} exp(s_ia / tau) )
//! ```
//!
//! with `s` the cosine similarity. The plain loss takes every other vulnerable
//! function as a positive; the clustered loss only those in the anchor's
//! k-means cluster. Anchors without positives contribute nothing.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::encoder::StatementMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub const DEFAULT_TAU: f64 = 0.5;
pub const KMEANS_MAX_ITERS: usize = 50;
const NORM_EPS: f64 = 1e-12;

/// Concatenated top-K statement rows of one function plus its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKRepresentation {
    pub vector: Array1<f64>,
    pub label: u8,
    pub cluster: Option<usize>,
}

/// Concatenates rows `topk` of `f` (ascending) into a `k * d` vector,
/// zero-padding the tail when fewer than `k` rows are given.
pub fn build_topk_representation(f: &StatementMatrix, topk: &[usize], k: usize) -> Result<Array1<f64>> {
    let d = f.dim();
    if topk.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::data(format!("top-K indices must be strictly ascending, got {topk:?}")));
    }
    if topk.len() > k {
        return Err(Error::data(format!("{} indices for K = {k}", topk.len())));
    }
    if let Some(&bad) = topk.iter().find(|&&i| i >= f.n_statements()) {
        return Err(Error::data(format!("statement index {bad} out of range")));
    }
    let mut v = Array1::zeros(k * d);
    for (slot, &i) in topk.iter().enumerate() {
        v.slice_mut(s![slot * d..(slot + 1) * d]).assign(&f.values.row(i));
    }
    Ok(v)
}

/// `u.v / (|u| |v|)`, or 0 when either norm is below 1e-12.
pub fn cosine_similarity(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (u.dot(&u).sqrt(), v.dot(&v).sqrt());
    if nu < NORM_EPS || nv < NORM_EPS {
        return Ok(0.0);
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Similarity matrix plus unit vectors and norms, for the backward pass.
struct Similarities {
    sim: Array2<f64>,
    units: Vec<Array1<f64>>,
    norms: Vec<f64>,
}

fn similarities(reps: &[Array1<f64>]) -> Similarities {
    let norms: Vec<f64> = reps.iter().map(|r| r.dot(r).sqrt()).collect();
    let units: Vec<Array1<f64>> = reps
        .iter()
        .zip(&norms)
        .map(|(r, &n)| if n < NORM_EPS { Array1::zeros(r.len()) } else { r / n })
        .collect();
    let m = reps.len();
    let mut sim = Array2::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let v = units[i].dot(&units[j]);
            sim[[i, j]] = v;
            sim[[j, i]] = v;
        }
    }
    Similarities { sim, units, norms }
}

/// Loss value, per-representation gradients, and whether the batch was too
/// small to form any pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub grads: Vec<Array1<f64>>,
    pub small_batch: bool,
}

/// Which positives an anchor may use.
#[derive(Debug, Clone, Copy)]
pub enum Positives<'a> {
    /// Every other vulnerable sample.
    AllVulnerable,
    /// Other vulnerable samples sharing the anchor's cluster label.
    SameCluster(&'a [usize]),
}

/// Contrastive loss and its gradient with respect to each representation.
pub fn contrastive_with_grad(reps: &[Array1<f64>], labels: &[u8], positives: Positives<'_>, tau: f64) -> Result<ContrastiveOutput> {
    let m = reps.len();
    if labels.len() != m {
        return Err(Error::shape(format!("{m} representations for {} labels", labels.len())));
    }
    if let Positives::SameCluster(c) = positives {
        if c.len() != m {
            return Err(Error::shape(format!("{m} representations for {} cluster labels", c.len())));
        }
    }
    if !(tau > 0.0) {
        return Err(Error::config(format!("contrastive temperature must be positive, got {tau}")));
    }
    let dims = reps.first().map_or(0, Array1::len);
    if reps.iter().any(|r| r.len() != dims) {
        return Err(Error::shape("representations differ in length".to_string()));
    }
    let mut grads = vec![Array1::zeros(dims); m];
    if m < 2 {
        return Ok(ContrastiveOutput { loss: 0.0, grads, small_batch: true });
    }

    let sims = similarities(reps);
    let is_positive = |i: usize, j: usize| {
        j != i
            && labels[j] == 1
            && match positives {
                Positives::AllVulnerable => true,
                Positives::SameCluster(c) => c[j] == c[i],
            }
    };
    // d loss / d sim[i][j], accumulated per anchor row
    let mut d_sim = Array2::<f64>::zeros((m, m));
    let mut loss = 0.0;
    for i in (0..m).filter(|&i| labels[i] == 1) {
        let pos: Vec<usize> = (0..m).filter(|&j| is_positive(i, j)).collect();
        if pos.is_empty() {
            continue;
        }
        let logits: Vec<(usize, f64)> = (0..m).filter(|&a| a != i).map(|a| (a, sims.sim[[i, a]] / tau)).collect();
        let max = logits.iter().fold(f64::NEG_INFINITY, |acc, &(_, v)| acc.max(v));
        let z: f64 = logits.iter().map(|&(_, v)| (v - max).exp()).sum();
        let log_z = max + z.ln();
        let inv = 1.0 / pos.len() as f64;
        loss += pos.iter().map(|&p| log_z - sims.sim[[i, p]] / tau).sum::<f64>() * inv;
        for &(a, v) in &logits {
            d_sim[[i, a]] += (v - log_z).exp() / tau;
        }
        for &p in &pos {
            d_sim[[i, p]] -= inv / tau;
        }
    }

    // s_ij = u_i . u_j with u = r / |r|, so ds_ij/dr_i = (u_j - s_ij u_i) / |r_i|
    for i in 0..m {
        if sims.norms[i] < NORM_EPS {
            continue;
        }
        let mut g = Array1::<f64>::zeros(dims);
        for j in (0..m).filter(|&j| j != i) {
            let w = d_sim[[i, j]] + d_sim[[j, i]];
            if w == 0.0 || sims.norms[j] < NORM_EPS {
                continue;
            }
            g.scaled_add(w, &sims.units[j]);
            g.scaled_add(-w * sims.sim[[i, j]], &sims.units[i]);
        }
        grads[i] = g / sims.norms[i];
    }
    Ok(ContrastiveOutput { loss, grads, small_batch: false })
}

/// Supervised contrastive loss with all other vulnerable samples as positives.
pub fn scl_loss(reps: &[Array1<f64>], labels: &[u8], tau: f64) -> Result<f64> {
    Ok(contrastive_with_grad(reps, labels, Positives::AllVulnerable, tau)?.loss)
}

/// Clustered contrastive loss: positives restricted to the anchor's cluster.
pub fn cscl_loss(reps: &[Array1<f64>], labels: &[u8], clusters: &[usize], tau: f64) -> Result<f64> {
    Ok(contrastive_with_grad(reps, labels, Positives::SameCluster(clusters), tau)?.loss)
}

/// Centroids and assignments from one k-means run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: ArrayView1<f64>, centroids: &[Array1<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, mu)| (c, sq_dist(p, mu.view())))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Lloyd's algorithm with k-means++ seeding. Stops after 50 iterations or when
/// assignments no longer change. Empty clusters are re-seeded with the point
/// farthest from its centroid. With fewer points than `k`, every point gets
/// its own cluster.
pub fn kmeans(points: &[Array1<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::data("cannot cluster an empty batch"));
    }
    if n < k {
        return Ok(ClusterModel {
            centroids: points.iter().map(|p| p.to_vec()).collect(),
            assignments: (0..n).collect(),
            iterations: 0,
        });
    }
    let mut r = rng::rng(seed, &[stream::KMEANS]);

    let mut centroids: Vec<Array1<f64>> = vec![points[r.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p.view(), centroids[0].view())).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = r.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            r.gen_range(0..n)
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p.view(), points[next].view()));
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERS {
        iterations += 1;
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p.view(), &centroids);
            dist[i] = d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![Array1::<f64>::zeros(points[0].len()); k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            sums[c] += p;
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = &sums[c] / counts[c] as f64;
            } else {
                let far = (0..n).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                centroids[c] = points[far].clone();
                dist[far] = 0.0;
            }
        }
    }
    Ok(ClusterModel { centroids: centroids.iter().map(|c| c.to_vec()).collect(), assignments, iterations })
}

/// Cluster labels for a mini-batch of representations.
pub fn kmeans_minibatch(reps: &[Array1<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(kmeans(reps, k, seed)?.assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    // Direct evaluation of the loss definition, no log-sum-exp.
    fn oracle(reps: &[Array1<f64>], labels: &[u8], clusters: Option<&[usize]>, tau: f64) -> f64 {
        let m = reps.len();
        let cos = |a: &Array1<f64>, b: &Array1<f64>| {
            let (na, nb) = (a.dot(a).sqrt(), b.dot(b).sqrt());
            if na < 1e-12 || nb < 1e-12 {
                0.0
            } else {
                a.dot(b) / (na * nb)
            }
        };
        let mut total = 0.0;
        for i in 0..m {
            if labels[i] != 1 {
                continue;
            }
            let pos: Vec<usize> = (0..m)
                .filter(|&p| p != i && labels[p] == 1 && clusters.is_none_or(|c| c[p] == c[i]))
                .collect();
            if pos.is_empty() {
                continue;
            }
            let denom: f64 = (0..m).filter(|&a| a != i).map(|a| (cos(&reps[i], &reps[a]) / tau).exp()).sum();
            let s: f64 = pos.iter().map(|&p| ((cos(&reps[i], &reps[p]) / tau).exp() / denom).ln()).sum();
            total += -s / pos.len() as f64;
        }
        total
    }

    fn worked() -> Vec<Array1<f64>> {
        vec![array![1.0, 0.0], array![1.0, 0.0], array![0.0, 1.0]]
    }

    #[test]
    fn topk_representation_examples() {
        let f = StatementMatrix::new(array![[1.0, 0.0], [7.0, 7.0], [0.0, 1.0]], vec![1, 1, 1]).unwrap();
        assert_eq!(build_topk_representation(&f, &[0, 2], 2).unwrap(), array![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(build_topk_representation(&f, &[], 2).unwrap(), Array1::<f64>::zeros(4));
        assert_eq!(build_topk_representation(&f, &[1], 1).unwrap(), array![7.0, 7.0]);
        assert_eq!(build_topk_representation(&f, &[1], 3).unwrap().len(), 6);
        assert!(build_topk_representation(&f, &[2, 0], 2).is_err());
    }

    #[test]
    fn cosine_examples() {
        let u = array![1.0, 2.0, -0.5];
        assert_relative_eq!(cosine_similarity(u.view(), u.view()).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(cosine_similarity(array![1.0, 0.0].view(), array![0.0, 3.0].view()).unwrap(), 0.0);
        assert_relative_eq!(cosine_similarity(u.view(), (-&u).view()).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(cosine_similarity(u.view(), Array1::zeros(3).view()).unwrap(), 0.0);
        assert!(cosine_similarity(u.view(), array![1.0].view()).is_err());
    }

    #[test]
    fn scl_worked_example() {
        let l = scl_loss(&worked(), &[1, 1, 0], 0.5).unwrap();
        let want = 2.0 * (1.0 + (-2f64).exp()).ln();
        assert_relative_eq!(l, want, epsilon = 1e-12);
        assert!((l - 0.2539).abs() < 1e-4);
    }

    #[test]
    fn scl_degenerate_batches() {
        assert_eq!(scl_loss(&worked(), &[0, 0, 0], 0.5).unwrap(), 0.0);
        assert_eq!(scl_loss(&worked(), &[1, 0, 0], 0.5).unwrap(), 0.0);
        let out = contrastive_with_grad(&worked()[..1], &[1], Positives::AllVulnerable, 0.5).unwrap();
        assert!(out.small_batch);
        assert_eq!(out.loss, 0.0);
        assert!(scl_loss(&worked(), &[1, 1, 0], 0.0).is_err());
    }

    #[test]
    fn cscl_worked_examples() {
        let want = 2.0 * (1.0 + (-2f64).exp()).ln();
        assert_relative_eq!(cscl_loss(&worked(), &[1, 1, 0], &[0, 0, 1], 0.5).unwrap(), want, epsilon = 1e-12);
        assert_eq!(cscl_loss(&worked(), &[1, 1, 0], &[0, 1, 1], 0.5).unwrap(), 0.0);
        assert_eq!(cscl_loss(&worked(), &[0, 0, 0], &[0, 0, 0], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::rng(3, &[]);
        for trial in 0..20 {
            let m = 2 + trial % 5;
            let reps: Vec<Array1<f64>> =
                (0..m).map(|_| Array1::from_shape_simple_fn(3, || r.gen_range(-1.0..1.0))).collect();
            let labels: Vec<u8> = (0..m).map(|_| r.gen_range(0..2)).collect();
            let clusters: Vec<usize> = (0..m).map(|_| r.gen_range(0..2)).collect();
            for positives in [Positives::AllVulnerable, Positives::SameCluster(&clusters)] {
                let out = contrastive_with_grad(&reps, &labels, positives, 0.5).unwrap();
                let h = 1e-6;
                for i in 0..m {
                    for j in 0..3 {
                        let mut up = reps.clone();
                        up[i][j] += h;
                        let mut down = reps.clone();
                        down[i][j] -= h;
                        let fd = (contrastive_with_grad(&up, &labels, positives, 0.5).unwrap().loss
                            - contrastive_with_grad(&down, &labels, positives, 0.5).unwrap().loss)
                            / (2.0 * h);
                        assert!((fd - out.grads[i][j]).abs() < 1e-6, "{fd} vs {}", out.grads[i][j]);
                    }
                }
            }
        }
    }

    #[test]
    fn moving_a_positive_away_increases_loss() {
        let reps = vec![array![1.0, 0.2], array![0.9, 0.3], array![-0.2, 1.0], array![0.1, -1.0]];
        let labels = [1, 1, 0, 0];
        let base = scl_loss(&reps, &labels, 0.5).unwrap();
        let mut worse = reps.clone();
        worse[1] = array![0.3, 0.9];
        assert!(scl_loss(&worse, &labels, 0.5).unwrap() > base);
    }

    #[test]
    fn kmeans_examples() {
        let pts = vec![array![0.0, 0.0], array![0.1, 0.0], array![5.0, 5.0], array![5.1, 5.0]];
        for seed in 0..20 {
            let a = kmeans_minibatch(&pts, 2, seed).unwrap();
            assert_eq!(a[0], a[1]);
            assert_eq!(a[2], a[3]);
            assert_ne!(a[0], a[2]);
            assert_eq!(a, kmeans_minibatch(&pts, 2, seed).unwrap());
        }
        assert_eq!(kmeans_minibatch(&pts, 1, 3).unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(kmeans_minibatch(&pts[..2], 3, 3).unwrap(), vec![0, 1]);
        assert!(kmeans_minibatch(&[], 2, 0).is_err());
    }

    #[test]
    fn kmeans_assigns_each_point_to_its_nearest_centroid() {
        let mut r = rng::rng(5, &[]);
        let pts: Vec<Array1<f64>> = (0..40).map(|_| Array1::from_shape_simple_fn(4, || r.gen_range(-3.0..3.0))).collect();
        let model = kmeans(&pts, 5, 1).unwrap();
        let cents: Vec<Array1<f64>> = model.centroids.iter().map(|c| Array1::from(c.clone())).collect();
        if model.iterations < KMEANS_MAX_ITERS {
            for (p, &a) in pts.iter().zip(&model.assignments) {
                assert_eq!(nearest(p.view(), &cents).0, a);
            }
        }
    }

    #[test]
    fn kmeans_handles_duplicates() {
        let pts = vec![array![1.0, 1.0]; 6];
        let a = kmeans_minibatch(&pts, 3, 9).unwrap();
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|&c| c < 3));
    }

    fn batch() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u8>, Vec<usize>)> {
        (2usize..=6).prop_flat_map(|m| {
            (
                proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), m),
                proptest::collection::vec(0u8..2, m),
                proptest::collection::vec(0usize..3, m),
            )
        })
    }

    proptest! {
        #[test]
        fn losses_match_direct_oracle((reps, labels, clusters) in batch(), tau in 0.1f64..2.0) {
            let reps: Vec<Array1<f64>> = reps.into_iter().map(Array1::from).collect();
            let scl = scl_loss(&reps, &labels, tau).unwrap();
            let cscl = cscl_loss(&reps, &labels, &clusters, tau).unwrap();
            prop_assert!((scl - oracle(&reps, &labels, None, tau)).abs() < 1e-8);
            prop_assert!((cscl - oracle(&reps, &labels, Some(&clusters), tau)).abs() < 1e-8);
            prop_assert!(scl >= 0.0 && cscl >= 0.0);
            let one = vec![0usize; reps.len()];
            prop_assert!((cscl_loss(&reps, &labels, &one, tau).unwrap() - scl).abs() < 1e-10);
        }

        #[test]
        fn losses_are_permutation_invariant((reps, labels, clusters) in batch(), rot in 0usize..6) {
            let reps: Vec<Array1<f64>> = reps.into_iter().map(Array1::from).collect();
            let r = rot % reps.len();
            let (mut r2, mut l2, mut c2) = (reps.clone(), labels.clone(), clusters.clone());
            r2.rotate_left(r);
            l2.rotate_left(r);
            c2.rotate_left(r);
            prop_assert!((scl_loss(&reps, &labels, 0.5).unwrap() - scl_loss(&r2, &l2, 0.5).unwrap()).abs() < 1e-10);
            prop_assert!((cscl_loss(&reps, &labels, &clusters, 0.5).unwrap() - cscl_loss(&r2, &l2, &c2, 0.5).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn cosine_scale_invariant(u in proptest::collection::vec(-3.0f64..3.0, 4), v in proptest::collection::vec(-3.0f64..3.0, 4), a in 0.01f64..100.0, b in 0.01f64..100.0) {
            let (u, v) = (Array1::from(u), Array1::from(v));
            let base = cosine_similarity(u.view(), v.view()).unwrap();
            let scaled = cosine_similarity((&u * a).view(), (&v * b).view()).unwrap();
            prop_assert!((base - scaled).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&base));
        }
    }
}
