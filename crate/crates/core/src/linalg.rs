//! Small dense routines for the normal equations and Newton steps.
//!
//! Matrices are square, row-major `Vec<f64>`; dimensions stay in the tens.

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

/// Pivots below `rel_tol * max_diag` count as zero.
pub const PIVOT_REL_TOL: f64 = 1e-10;

impl Cholesky {
    /// Factors `a`. On failure returns the indices of every column whose
    /// pivot vanished after eliminating the columns before it.
    pub fn factor(a: &[f64], n: usize) -> Result<Self, Vec<usize>> {
        assert_eq!(a.len(), n * n, "matrix is not {n}x{n}");
        let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
        let threshold = PIVOT_REL_TOL * max_diag.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        let mut dependent = Vec::new();
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= threshold {
                // leave the column at zero so later pivots are computed as
                // if it had been dropped
                dependent.push(j);
                continue;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        if dependent.is_empty() {
            Ok(Cholesky { n, l })
        } else {
            Err(dependent)
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y = A x` for a square row-major `A`.
pub fn mat_vec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| dot(&a[i * n..(i + 1) * n], x)).collect()
}

/// Adds `w * v vᵀ` into `a`.
pub fn add_outer(a: &mut [f64], v: &[f64], w: f64) {
    let n = v.len();
    for i in 0..n {
        let wi = w * v[i];
        if wi == 0.0 {
            continue;
        }
        for j in 0..n {
            a[i * n + j] += wi * v[j];
        }
    }
}
