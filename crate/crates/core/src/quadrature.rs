//! Gauss rules for expectations under the standard normal.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point rule.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre rule on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Gauss-Hermite rule for `E[f(u)]`, `u ~ N(0, 1)`: weights sum to one.
///
/// Built from the physicists' rule (weight `exp(-x^2)`) via `u = sqrt(2) x`.
pub fn gauss_hermite_normal(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        // initial guesses from Numerical Recipes' gauher
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-0.16667),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-14 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    let scale = 1.0 / PI.sqrt();
    Rule {
        nodes: nodes.iter().rev().map(|x| x * std::f64::consts::SQRT_2).collect(),
        weights: weights.iter().rev().map(|w| w * scale).collect(),
    }
}

/// Half-width of the truncated support used by the panel rule.
pub const NORMAL_CUTOFF: f64 = 9.0;

/// Composite Gauss-Legendre rule for `E[f(u)]`, `u ~ N(0, 1)`, on
/// `[-9, 9]` with panel edges at `{-9, -4.5, 0, 4.5, 9}` and at every
/// breakpoint inside the support. The normal density is folded into the
/// weights. Integrands that are smooth between breakpoints converge fast.
pub fn normal_panels(base: &Rule, breakpoints: &[f64]) -> Rule {
    let c = NORMAL_CUTOFF;
    let mut edges = vec![-c, -0.5 * c, 0.0, 0.5 * c, c];
    edges.extend(breakpoints.iter().copied().filter(|b| b.is_finite() && b.abs() < c));
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut nodes = Vec::with_capacity(base.nodes.len() * (edges.len() - 1));
    let mut weights = Vec::with_capacity(nodes.capacity());
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in base.nodes.iter().zip(&base.weights) {
            let u = mid + half * x;
            nodes.push(u);
            weights.push(wt * half * norm * (-0.5 * u * u).exp());
        }
    }
    Rule { nodes, weights }
}
