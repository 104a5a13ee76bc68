//! Helpers shared by the integration tests. Oracles here avoid the crate's
//! own linear algebra.
#![allow(dead_code)]

use bnngp::data::{generate_rings, standardize, Dataset};
use bnngp::rng::NormalStream;
use bnngp::{Matrix, RngSeed};

/// `A A^T / n + eps I` for a Gaussian `A`.
pub fn random_psd(n: usize, g: &mut NormalStream) -> Matrix {
    let a = g.matrix(n, n);
    Matrix::from_fn(n, n, |i, j| {
        let s: f64 = (0..n).map(|k| a[(i, k)] * a[(j, k)]).sum::<f64>() / n as f64;
        if i == j {
            s + 0.05
        } else {
            s
        }
    })
}

/// Lower Cholesky factor by the textbook loop.
pub fn chol(k: &Matrix) -> Vec<Vec<f64>> {
    let n = k.rows();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                l[i][i] = (k[(i, i)] - s).sqrt();
            } else {
                l[i][j] = (k[(i, j)] - s) / l[j][j];
            }
        }
    }
    l
}

/// Dense Gauss-Jordan inverse and determinant with partial pivoting.
pub fn inverse_and_det(k: &Matrix) -> (Vec<Vec<f64>>, f64) {
    let n = k.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| k.row(i).to_vec()).collect();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        if p != c {
            a.swap(p, c);
            inv.swap(p, c);
            det = -det;
        }
        let piv = a[c][c];
        det *= piv;
        for j in 0..n {
            a[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                for j in 0..n {
                    a[r][j] -= f * a[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    (inv, det)
}

/// `log N(y; 0, K + v_n I)` from the explicit inverse and determinant.
pub fn naive_logpdf(y: &[f64], k: &Matrix, v_n: f64) -> f64 {
    let n = y.len();
    let kn = Matrix::from_fn(n, n, |i, j| k[(i, j)] + if i == j { v_n } else { 0.0 });
    let (inv, det) = inverse_and_det(&kn);
    let quad: f64 = (0..n).map(|i| (0..n).map(|j| y[i] * inv[i][j] * y[j]).sum::<f64>()).sum();
    -0.5 * (quad + det.ln() + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Running mean / standard error without storing the draws.
#[derive(Default, Clone, Copy)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn se(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Standardized Rings restricted to every `stride`-th point.
pub fn rings_subset(stride: usize) -> Dataset {
    let d = standardize(&generate_rings()).unwrap();
    let idx: Vec<usize> = (0..d.len()).step_by(stride).collect();
    d.subset(&idx)
}

pub fn normals(seed: u64) -> NormalStream {
    RngSeed(seed).normals()
}

pub fn relu(x: f64) -> f64 {
    std::f64::consts::SQRT_2 * x.max(0.0)
}

pub fn sinusoid(x: f64) -> f64 {
    x.cos() + x.sin()
}

/// Monte-Carlo `E[phi(z_a) phi(z_b)]` for `z ~ N(0, K)`, all pairs `a <= b`,
/// as `(a, b, mean, se)`.
pub fn mc_second_moments(k: &Matrix, phi: fn(f64) -> f64, n_draws: usize, seed: u64) -> Vec<(usize, usize, f64, f64)> {
    use rayon::prelude::*;
    let n = k.rows();
    let l = chol(k);
    let chunks = 64;
    let per = n_draws / chunks;
    let stats: Vec<Vec<Moments>> = (0..chunks as u64)
        .into_par_iter()
        .map(|c| {
            let mut g = RngSeed(seed).child(c).normals();
            let mut acc = vec![Moments::default(); n * n];
            let mut e = vec![0.0; n];
            let mut z = vec![0.0; n];
            for _ in 0..per {
                g.fill(&mut e);
                for i in 0..n {
                    z[i] = phi((0..=i).map(|p| l[i][p] * e[p]).sum());
                }
                for a in 0..n {
                    for b in a..n {
                        acc[a * n + b].push(z[a] * z[b]);
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            let m = stats.iter().fold(Moments::default(), |s, c| s.merge(c[a * n + b]));
            out.push((a, b, m.mean(), m.se()));
        }
    }
    out
}
