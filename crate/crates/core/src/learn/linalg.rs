//! Dense symmetric positive-definite solves for the small systems that
//! regression fitting produces.

/// Lower-triangular Cholesky factor of a `p × p` row-major matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    p: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// `None` when the matrix is not numerically positive definite.
    pub fn new(a: &[f64], p: usize) -> Option<Cholesky> {
        debug_assert_eq!(a.len(), p * p);
        let mut l = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                let mut s = a[i * p + j];
                for k in 0..j {
                    s -= l[i * p + k] * l[j * p + k];
                }
                if i == j {
                    let scale = a[i * p + i].abs().max(f64::MIN_POSITIVE);
                    if s <= scale * 1e-13 || !s.is_finite() {
                        return None;
                    }
                    l[i * p + i] = s.sqrt();
                } else {
                    l[i * p + j] = s / l[j * p + j];
                }
            }
        }
        Some(Cholesky { p, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut y = b.to_vec();
        for i in 0..p {
            for k in 0..i {
                y[i] -= self.l[i * p + k] * y[k];
            }
            y[i] /= self.l[i * p + i];
        }
        for i in (0..p).rev() {
            for k in i + 1..p {
                y[i] -= self.l[k * p + i] * y[k];
            }
            y[i] /= self.l[i * p + i];
        }
        y
    }

    /// Full inverse, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let p = self.p;
        let mut inv = vec![0.0; p * p];
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..p {
                inv[i * p + j] = col[i];
            }
        }
        inv
    }
}

/// `XᵀWX` and `XᵀWz` for column-major `x` with an implicit leading column
/// of ones when `intercept`.
pub fn weighted_normal_equations(x: &[Vec<f64>], w: &[f64], z: &[f64], intercept: bool) -> (Vec<f64>, Vec<f64>) {
    let off = usize::from(intercept);
    let p = x.len() + off;
    let n = w.len();
    let col = |j: usize, i: usize| if intercept && j == 0 { 1.0 } else { x[j - off][i] };
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for j in 0..p {
        let mut bj = 0.0;
        for i in 0..n {
            bj += col(j, i) * w[i] * z[i];
        }
        b[j] = bj;
        for k in 0..=j {
            let mut s = 0.0;
            for (i, wi) in w.iter().enumerate() {
                s += col(j, i) * wi * col(k, i);
            }
            a[j * p + k] = s;
            a[k * p + j] = s;
        }
    }
    (a, b)
}
