use serde::Serialize;

use super::{AnalyticsError, EmbeddingMatrix};

/// Top principal components and the data projected onto them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    /// One row per input row, `k` coordinates each.
    pub coords: Vec<Vec<f64>>,
    /// `k` unit vectors of length `d`.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub mean: Vec<f64>,
}

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix (row-major,
/// `n x n`). Returns eigenvalues and the matching eigenvectors as columns
/// of a row-major matrix.
pub(crate) fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Makes the largest-magnitude entry positive.
fn fix_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Projects the rows of `m` onto their top `k` principal components.
///
/// The covariance uses the `n - 1` denominator. When there are fewer rows
/// than columns the `n x n` Gram matrix is decomposed instead. Each
/// component's largest entry is positive.
pub fn pca_project(m: &EmbeddingMatrix, k: usize) -> Result<Projection, AnalyticsError> {
    let (n, d) = (m.rows(), m.cols());
    if n < 2 {
        return Err(AnalyticsError::DegenerateData(format!("need at least 2 rows, got {n}")));
    }
    if k == 0 || d < k {
        return Err(AnalyticsError::DegenerateData(format!("cannot take {k} components of {d} columns")));
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| m.get(i, j)).sum::<f64>() / n as f64).collect();
    let x: Vec<f64> = (0..n).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| m.get(i, j) - mean[j]).collect();
    let denom = (n - 1) as f64;
    let total_variance: f64 = x.iter().map(|v| v * v).sum::<f64>() / denom;
    if total_variance == 0.0 {
        return Err(AnalyticsError::DegenerateData("all rows are identical".into()));
    }

    let (values, mut components): (Vec<f64>, Vec<Vec<f64>>) = if d <= n {
        let mut cov = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                let s = (0..n).map(|i| x[i * d + a] * x[i * d + b]).sum::<f64>() / denom;
                cov[a * d + b] = s;
                cov[b * d + a] = s;
            }
        }
        let (vals, vecs) = jacobi_eigen(cov, d);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&p, &q| vals[q].total_cmp(&vals[p]));
        order
            .into_iter()
            .take(k)
            .map(|c| (vals[c], (0..d).map(|r| vecs[r * d + c]).collect()))
            .unzip()
    } else {
        let mut gram = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let s = (0..d).map(|j| x[a * d + j] * x[b * d + j]).sum::<f64>() / denom;
                gram[a * n + b] = s;
                gram[b * n + a] = s;
            }
        }
        let (vals, vecs) = jacobi_eigen(gram, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&p, &q| vals[q].total_cmp(&vals[p]));
        order
            .into_iter()
            .take(k)
            .map(|c| {
                let comp: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x[i * d + j] * vecs[i * n + c]).sum()).collect();
                (vals[c], comp)
            })
            .unzip()
    };
    if values[k - 1] <= 1e-12 * values[0].max(f64::MIN_POSITIVE) {
        return Err(AnalyticsError::DegenerateData(format!("data has rank below {k}")));
    }
    for c in &mut components {
        normalize(c);
        fix_sign(c);
    }
    let coords = (0..n)
        .map(|i| components.iter().map(|c| (0..d).map(|j| x[i * d + j] * c[j]).sum()).collect())
        .collect();
    Ok(Projection {
        coords,
        components,
        explained_variance: values.into_iter().map(|v| v.max(0.0)).collect(),
        total_variance,
        mean,
    })
}
