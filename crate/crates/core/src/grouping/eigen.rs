//! Dense symmetric eigensolver (cyclic Jacobi rotations).

use ndarray::Array2;

const MAX_SWEEPS: usize = 100;
const REL_TOL: f64 = 1e-15;

/// Eigenvalues in ascending order and the matching unit eigenvectors as
/// columns. Each eigenvector is signed so that its largest-magnitude entry
/// (first one on ties) is positive.
///
/// Only the upper triangle of `a` is assumed symmetric with the lower one;
/// callers pass symmetric matrices.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[p * n + q] * m[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= REL_TOL * frob || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for k in 0..n {
            if v[k * n + src].abs() > v[pivot * n + src].abs() {
                pivot = k;
            }
        }
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[[k, col]] = sign * v[k * n + src];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                a[[i, j]] = x;
                a[[j, i]] = x;
            }
        }
        a
    }

    #[test]
    fn diagonal_input() {
        let a = Array2::from_diag(&ndarray::arr1(&[3.0, 1.0, 2.0]));
        let (vals, vecs) = symmetric_eigen(&a);
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        assert_eq!(vecs[[1, 0]], 1.0);
    }

    #[test]
    fn residuals_and_orthonormality() {
        for (n, seed) in [(2, 1), (5, 2), (12, 3), (30, 4)] {
            let a = random_symmetric(n, seed);
            let (vals, vecs) = symmetric_eigen(&a);
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            let av = a.dot(&vecs);
            for c in 0..n {
                for r in 0..n {
                    assert!((av[[r, c]] - vals[c] * vecs[[r, c]]).abs() < 1e-10);
                }
            }
            let gram = vecs.t().dot(&vecs);
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[[i, j]] - expect).abs() < 1e-10);
                }
            }
            // trace is preserved
            let trace: f64 = (0..n).map(|i| a[[i, i]]).sum();
            assert!((vals.iter().sum::<f64>() - trace).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_convention() {
        let a = random_symmetric(8, 9);
        let (_, vecs) = symmetric_eigen(&a);
        for c in 0..8 {
            let col = vecs.column(c);
            let max = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(max > 0.0);
        }
    }
}
