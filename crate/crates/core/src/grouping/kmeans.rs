//! Seeded k-means with k-means++ initialisation.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_ITERATIONS: usize = 100;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

fn dist2(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = dist2(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &Array2<f64>, clusters: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < clusters {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // fewer distinct points than clusters
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(points.row(i), points.row(next)));
        }
    }
    let mut centroids = Array2::zeros((clusters, points.ncols()));
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&points.row(i));
    }
    centroids
}

/// Cluster labels in `0..clusters` for each row of `points`.
///
/// Deterministic for a given seed. Empty clusters are reseeded to the point
/// farthest from its current centroid.
pub fn kmeans(points: &Array2<f64>, clusters: usize, seed: u64) -> Vec<usize> {
    let n = points.nrows();
    assert!(clusters >= 1 && clusters <= n, "need 1 <= clusters <= points");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, clusters, &mut rng);
    let mut labels = vec![0; n];

    for _ in 0..MAX_ITERATIONS {
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(points.row(i), &centroids);
            labels[i] = c;
            dists[i] = d;
        }

        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; clusters];
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += &points.row(i);
            counts[labels[i]] += 1;
        }
        let mut next = centroids.clone();
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                next.row_mut(c).assign(&(&sums.row(c) / count as f64));
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                next.row_mut(c).assign(&points.row(far));
                dists[far] = 0.0;
            }
        }
        let shift = (0..clusters)
            .map(|c| dist2(centroids.row(c), next.row(c)).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    for (i, label) in labels.iter_mut().enumerate() {
        *label = nearest(points.row(i), &centroids).0;
    }
    labels
}
