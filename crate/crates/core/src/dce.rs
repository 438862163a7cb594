//! Deep cluster embedding: Student-t soft assignment of instances to
//! learnable centroids, with k-means++ initialization and an optional
//! off-tape alternating refinement used as a warm-up before end-to-end
//! training.
//!
//! Centroids are global model parameters shared across bags. For a bag
//! with fewer instances than clusters, only the first `min(C, S)`
//! centroids participate (the assignment renormalizes over the surviving
//! columns).

use rand::Rng;

use crate::real::Real;
use crate::rng::{stream, StreamKind};
use crate::tensor::{Tape, Tensor, TensorId};

/// Centroids plus the soft assignment of one feature set against them.
#[derive(Clone, Debug)]
pub struct ClusterState<R: Real> {
    pub centroids: Tensor<R>,
    pub z: Tensor<R>,
}

impl<R: Real> ClusterState<R> {
    pub fn new(features: &Tensor<R>, centroids: Tensor<R>) -> Self {
        let z = soft_assign_values(features, &centroids);
        ClusterState { centroids, z }
    }
}

/// Number of centroids that participate for a bag of `s` instances.
pub fn effective_clusters(c: usize, s: usize) -> usize {
    c.min(s)
}

/// Differentiable soft assignment: S×C matrix of row-normalized
/// Student-t kernel weights between instances and centroids.
pub fn soft_assign<R: Real>(
    tape: &mut Tape<R>,
    features: TensorId,
    centroids: TensorId,
) -> TensorId {
    tape.student_t_assign(features, centroids)
}

/// Off-tape soft assignment (same computation, values only).
pub fn soft_assign_values<R: Real>(features: &Tensor<R>, centroids: &Tensor<R>) -> Tensor<R> {
    let mut tape: Tape<R> = Tape::new();
    let f = tape.leaf(features.clone());
    let m = tape.leaf(centroids.clone());
    let z = tape.student_t_assign(f, m);
    tape.value(z).clone()
}

/// k-means++ seeding over `features`, followed by at most 20 Lloyd
/// iterations (stops early once the largest centroid shift drops below
/// 1e-4). Deterministic for a given seed.
pub fn init_centroids<R: Real>(features: &Tensor<R>, c_eff: usize, seed: u64) -> Tensor<R> {
    let s = features.rows;
    assert!(c_eff >= 1, "init_centroids: C_eff must be >= 1");
    assert!(
        s >= c_eff,
        "init_centroids: S ({}) must be >= C_eff ({}); shrink C_eff first",
        s,
        c_eff
    );
    let mut rng = stream(seed, StreamKind::Warmup, 0, 0);
    let mut centroids = kmeans_pp_seed(features, c_eff, &mut rng);
    lloyd(features, &mut centroids, 20, 1e-4);
    centroids
}

fn kmeans_pp_seed<R: Real>(features: &Tensor<R>, k: usize, rng: &mut impl Rng) -> Tensor<R> {
    let s = features.rows;
    let d = features.cols;
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    chosen.push(rng.gen_range(0..s));
    let mut min_dist = vec![f64::INFINITY; s];
    while chosen.len() < k {
        let last = *chosen.last().unwrap();
        for i in 0..s {
            let mut dist = 0.0;
            for j in 0..d {
                let diff = features.get(i, j).as_f64() - features.get(last, j).as_f64();
                dist += diff * diff;
            }
            if dist < min_dist[i] {
                min_dist[i] = dist;
            }
        }
        let total: f64 = min_dist.iter().sum();
        let next = if total > 0.0 {
            // cumulative scan keeps the draw deterministic and dependency-free
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = s - 1;
            for (i, &w) in min_dist.iter().enumerate() {
                acc += w;
                if target < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining points coincide with a chosen centroid
            (0..s).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
    }
    let mut data = Vec::with_capacity(k * d);
    for &idx in &chosen {
        data.extend_from_slice(features.row(idx));
    }
    Tensor::new(k, d, data)
}

/// Hard-assignment Lloyd iterations; empty clusters keep their previous
/// centroid. Returns the number of iterations performed.
pub fn lloyd<R: Real>(
    features: &Tensor<R>,
    centroids: &mut Tensor<R>,
    max_iters: usize,
    tol: f64,
) -> usize {
    let s = features.rows;
    let d = features.cols;
    let k = centroids.rows;
    for iter in 0..max_iters {
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..s {
            let c = nearest_centroid(features, i, centroids);
            counts[c] += 1;
            for j in 0..d {
                sums[c * d + j] += features.get(i, j).as_f64();
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut dist = 0.0;
            for j in 0..d {
                let new = sums[c * d + j] / counts[c] as f64;
                let diff = new - centroids.get(c, j).as_f64();
                dist += diff * diff;
                centroids.set(c, j, R::from_f64(new));
            }
            shift = shift.max(dist.sqrt());
        }
        if shift < tol {
            return iter + 1;
        }
    }
    max_iters
}

/// Index of the centroid nearest to instance `i` (lowest index on ties).
pub fn nearest_centroid<R: Real>(features: &Tensor<R>, i: usize, centroids: &Tensor<R>) -> usize {
    let d = features.cols;
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for c in 0..centroids.rows {
        let mut dist = 0.0;
        for j in 0..d {
            let diff = features.get(i, j).as_f64() - centroids.get(c, j).as_f64();
            dist += diff * diff;
        }
        if dist < best_dist {
            best_dist = dist;
            best = c;
        }
    }
    best
}

/// Alternate centroid updates (assignment-weighted feature means) with
/// fresh soft assignments until the largest centroid shift drops below
/// `tol` or `max_iters` is reached. Runs entirely off the autodiff tape.
pub fn refine_alternating<R: Real>(
    features: &Tensor<R>,
    state: ClusterState<R>,
    max_iters: usize,
    tol: f64,
) -> ClusterState<R> {
    let mut centroids = state.centroids;
    let mut z = state.z;
    let s = features.rows;
    let d = features.cols;
    let k = centroids.rows;
    for _ in 0..max_iters {
        let mut shift: f64 = 0.0;
        let mut next = Tensor::zeros(k, d);
        for c in 0..k {
            let mut weight = 0.0f64;
            let mut acc = vec![0.0f64; d];
            for i in 0..s {
                let w = z.get(i, c).as_f64();
                weight += w;
                for j in 0..d {
                    acc[j] += w * features.get(i, j).as_f64();
                }
            }
            let mut dist = 0.0;
            for j in 0..d {
                let new = acc[j] / weight;
                let diff = new - centroids.get(c, j).as_f64();
                dist += diff * diff;
                next.set(c, j, R::from_f64(new));
            }
            shift = shift.max(dist.sqrt());
        }
        centroids = next;
        z = soft_assign_values(features, &centroids);
        if shift < tol {
            break;
        }
    }
    ClusterState { centroids, z }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clouds() -> (Tensor<f64>, [f64; 2], [f64; 2]) {
        // two tight clouds around (0,0) and (10,10)
        let pts = vec![
            0.1, -0.2, -0.1, 0.15, 0.05, 0.0, //
            9.9, 10.2, 10.1, 9.85, 10.0, 10.05,
        ];
        let t = Tensor::new(6, 2, pts);
        let mean_a = [(0.1 - 0.1 + 0.05) / 3.0, (-0.2 + 0.15 + 0.0) / 3.0];
        let mean_b = [(9.9 + 10.1 + 10.0) / 3.0, (10.2 + 9.85 + 10.05) / 3.0];
        (t, mean_a, mean_b)
    }

    /// Exact 2-means by enumerating every 2-partition of a small set.
    fn exact_two_means(features: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = features.rows;
        let d = features.cols;
        let mut best_sse = f64::INFINITY;
        let mut best = (vec![0.0; d], vec![0.0; d]);
        for mask in 1..(1u32 << n) - 1 {
            let mut means = [vec![0.0; d], vec![0.0; d]];
            let mut counts = [0usize; 2];
            for i in 0..n {
                let side = ((mask >> i) & 1) as usize;
                counts[side] += 1;
                for j in 0..d {
                    means[side][j] += features.get(i, j);
                }
            }
            if counts[0] == 0 || counts[1] == 0 {
                continue;
            }
            for side in 0..2 {
                for j in 0..d {
                    means[side][j] /= counts[side] as f64;
                }
            }
            let mut sse = 0.0;
            for i in 0..n {
                let side = ((mask >> i) & 1) as usize;
                for j in 0..d {
                    let diff = features.get(i, j) - means[side][j];
                    sse += diff * diff;
                }
            }
            if sse < best_sse {
                best_sse = sse;
                best = (means[0].clone(), means[1].clone());
            }
        }
        best
    }

    fn match_centroids(centroids: &Tensor<f64>, a: &[f64], b: &[f64]) -> f64 {
        // pair each centroid with its nearest oracle mean, return max error
        let dist = |row: &[f64], m: &[f64]| -> f64 {
            row.iter()
                .zip(m)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let c0 = centroids.row(0);
        let c1 = centroids.row(1);
        let direct = dist(c0, a).max(dist(c1, b));
        let crossed = dist(c0, b).max(dist(c1, a));
        direct.min(crossed)
    }

    #[test]
    fn init_with_one_centroid_per_point_returns_the_points() {
        let f: Tensor<f64> = Tensor::new(3, 2, vec![0.0, 0.0, 5.0, 0.0, 0.0, 5.0]);
        let c = init_centroids(&f, 3, 42);
        let mut got: Vec<Vec<u64>> = (0..3)
            .map(|i| c.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut want: Vec<Vec<u64>> = (0..3)
            .map(|i| f.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn init_recovers_two_separated_clouds() {
        let (f, _, _) = two_clouds();
        let (oracle_a, oracle_b) = exact_two_means(&f);
        let c = init_centroids(&f, 2, 7);
        assert!(
            match_centroids(&c, &oracle_a, &oracle_b) < 1e-3,
            "centroids {:?} vs oracle {:?} {:?}",
            c.data,
            oracle_a,
            oracle_b
        );
    }

    #[test]
    fn init_is_deterministic() {
        let (f, _, _) = two_clouds();
        let a = init_centroids(&f, 2, 99);
        let b = init_centroids(&f, 2, 99);
        assert_eq!(a.data, b.data);
    }

    #[test]
    #[should_panic(expected = "must be >= C_eff")]
    fn init_rejects_more_clusters_than_instances() {
        let f = Tensor::new(2, 2, vec![0.0; 4]);
        init_centroids(&f, 3, 0);
    }

    #[test]
    fn soft_assign_single_cluster_is_all_ones() {
        let f = Tensor::new(3, 2, vec![0.0, 0.0, 1.0, 2.0, -5.0, 3.0]);
        let m = Tensor::new(1, 2, vec![0.5, 0.5]);
        let z = soft_assign_values(&f, &m);
        assert!(z.data.iter().all(|&v| (v - 1.0f64).abs() < 1e-12));
    }

    #[test]
    fn soft_assign_equidistant_is_half() {
        let f = Tensor::new(1, 2, vec![1.0, 0.0]);
        let m = Tensor::new(2, 2, vec![0.0, 0.0, 2.0, 0.0]);
        let z = soft_assign_values(&f, &m);
        assert!((z.get(0, 0) - 0.5f64).abs() < 1e-12);
        assert!((z.get(0, 1) - 0.5f64).abs() < 1e-12);
    }

    #[test]
    fn soft_assign_hand_case() {
        // f at origin, centroids at origin and (2,0): weights 1 and 1/5
        let f = Tensor::new(1, 2, vec![0.0, 0.0]);
        let m = Tensor::new(2, 2, vec![0.0, 0.0, 2.0, 0.0]);
        let z = soft_assign_values(&f, &m);
        assert!((z.get(0, 0) - 5.0 / 6.0f64).abs() < 1e-12);
        assert!((z.get(0, 1) - 1.0 / 6.0f64).abs() < 1e-12);
    }

    #[test]
    fn soft_assign_rows_sum_to_one_and_positive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let f = Tensor::new(8, 3, (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let m = Tensor::new(4, 3, (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let z: Tensor<f64> = soft_assign_values(&f, &m);
        for r in 0..8 {
            let sum: f64 = z.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(z.row(r).iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn soft_assign_is_equivariant_under_centroid_permutation() {
        let f = Tensor::new(3, 2, vec![0.2, 0.4, -1.0, 0.3, 2.0, -0.7]);
        let m = Tensor::new(3, 2, vec![0.0, 0.0, 1.0, 1.0, -1.0, 0.5]);
        let perm = Tensor::new(3, 2, vec![1.0, 1.0, -1.0, 0.5, 0.0, 0.0]); // columns 1,2,0
        let z: Tensor<f64> = soft_assign_values(&f, &m);
        let zp = soft_assign_values(&f, &perm);
        for r in 0..3 {
            assert!((z.get(r, 1) - zp.get(r, 0)).abs() < 1e-15);
            assert!((z.get(r, 2) - zp.get(r, 1)).abs() < 1e-15);
            assert!((z.get(r, 0) - zp.get(r, 2)).abs() < 1e-15);
        }
    }

    #[test]
    fn refine_fixed_point_is_unchanged() {
        // a single centroid's fixed point is the weighted feature mean;
        // with one cluster z is all ones, so the fixed point is the mean
        let f = Tensor::new(3, 2, vec![0.0, 0.0, 2.0, 0.0, 1.0, 3.0]);
        let mean = Tensor::new(1, 2, vec![1.0, 1.0]);
        let state = ClusterState::new(&f, mean.clone());
        let out = refine_alternating(&f, state, 10, 1e-9);
        assert_eq!(out.centroids.data, mean.data);
    }

    #[test]
    fn refine_converges_to_cloud_means() {
        // the Student-t kernel has heavy tails, so the far cloud always
        // contaminates a little; wide separation keeps that below 1e-2
        let pts = vec![
            0.1, -0.2, -0.1, 0.15, 0.05, 0.0, //
            299.9, 300.2, 300.1, 299.85, 300.0, 300.05,
        ];
        let f = Tensor::new(6, 2, pts);
        let (oracle_a, oracle_b) = exact_two_means(&f);
        // start near each cloud, as the k-means++ warm-up would
        let start = Tensor::new(2, 2, vec![5.0, 5.0, 250.0, 280.0]);
        let state = ClusterState::new(&f, start);
        let out = refine_alternating(&f, state, 200, 1e-8);
        assert!(
            match_centroids(&out.centroids, &oracle_a, &oracle_b) < 1e-2,
            "refined {:?} vs oracle {:?} {:?}",
            out.centroids.data,
            oracle_a,
            oracle_b
        );
    }

    #[test]
    fn refine_zero_iters_is_identity() {
        let (f, _, _) = two_clouds();
        let start = Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let state = ClusterState::new(&f, start.clone());
        let out = refine_alternating(&f, state, 0, 1e-8);
        assert_eq!(out.centroids.data, start.data);
    }

    #[test]
    fn soft_assign_grad_wrt_centroids_matches_finite_differences() {
        let f0 = vec![0.3, -0.8, 1.1, 0.4];
        let m0 = vec![0.0, 0.1, 0.9, -0.5];
        let eval = |m: &[f64]| -> f64 {
            let mut tape: Tape<f64> = Tape::new();
            let f = tape.constant(2, 2, f0.clone());
            let c = tape.leaf(Tensor::param(2, 2, m.to_vec()));
            let z = soft_assign(&mut tape, f, c);
            let w = tape.constant(2, 2, vec![0.7, -0.2, 1.3, 0.5]);
            let zw = tape.mul(z, w);
            let loss = tape.sum(zw);
            tape.data(loss)[0]
        };
        let mut tape: Tape<f64> = Tape::new();
        let f = tape.constant(2, 2, f0.clone());
        let c = tape.leaf(Tensor::param(2, 2, m0.clone()));
        let z = soft_assign(&mut tape, f, c);
        let w = tape.constant(2, 2, vec![0.7, -0.2, 1.3, 0.5]);
        let zw = tape.mul(z, w);
        let loss = tape.sum(zw);
        tape.backward(loss);
        let eps = 1e-5;
        for i in 0..4 {
            let mut plus = m0.clone();
            plus[i] += eps;
            let mut minus = m0.clone();
            minus[i] -= eps;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let a = tape.grad(c)[i];
            let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {}: analytic {} fd {}", i, a, fd);
        }
    }
}
