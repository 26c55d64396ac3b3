//! Small shared numerics: Gauss–Legendre rules, polynomial extrapolation,
//! least-squares lines.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre polynomial (deterministic,
/// accurate to machine precision).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Initial guess (Abramowitz–Stegun).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Cached 16-point rule (the workhorse for panel quadrature).
pub fn gl16() -> &'static [(f64, f64)] {
    static CACHE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    CACHE.get_or_init(|| gauss_legendre(16))
}

/// Scale a [-1, 1] rule to the interval [a, b].
pub fn scale_rule(rule: &[(f64, f64)], a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(|&(x, w)| (mid + half * x, half * w)).collect()
}

/// Node-to-node integration matrix for the 16-point rule on [-1, 1]:
/// `S[q][r] = ∫_{-1}^{x_q} ℓ_r(x) dx` for the Lagrange basis ℓ_r.
///
/// Exact for the degree-15 interpolant (each subintegral is evaluated with
/// a nested 16-point rule, which is exact for degree ≤ 31).
pub fn gl16_integration_matrix() -> &'static Vec<Vec<f64>> {
    static CACHE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let rule = gl16();
        let nodes: Vec<f64> = rule.iter().map(|&(x, _)| x).collect();
        // Barycentric weights.
        let n = nodes.len();
        let mut bw = vec![1.0f64; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    bw[i] /= nodes[i] - nodes[j];
                }
            }
        }
        let lagrange = |r: usize, x: f64| -> f64 {
            let mut prod = 1.0;
            for (j, &xj) in nodes.iter().enumerate() {
                if j != r {
                    prod *= x - xj;
                }
            }
            prod * bw[r]
        };
        let mut s = vec![vec![0.0; n]; n];
        for (q, &xq) in nodes.iter().enumerate() {
            for sub in scale_rule(rule, -1.0, xq) {
                for r in 0..n {
                    s[q][r] += sub.1 * lagrange(r, sub.0);
                }
            }
        }
        s
    })
}

/// Value at x = 0 of the degree-(n-1) polynomial through the points
/// (xs[i], ys[i]) (Lagrange form). Used for κ → 0 extrapolations.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let mut acc = 0.0;
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        let mut w = 1.0;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                w *= xj / (xj - xi);
            }
        }
        acc += w * yi;
    }
    acc
}

/// Least-squares line `y = slope·x + intercept`; returns (slope, intercept,
/// per-point residuals).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, Vec<f64>) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residuals = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (slope * x + intercept))
        .collect();
    (slope, intercept, residuals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl16_integrates_high_degree_polynomials_exactly() {
        // Exact through degree 31: check x^30 on [-1,1] = 2/31.
        let s: f64 = gl16().iter().map(|&(x, w)| w * x.powi(30)).sum();
        assert!((s - 2.0 / 31.0).abs() < 1e-14);
        // And an oscillatory integral to high accuracy on a scaled panel.
        let s: f64 = scale_rule(gl16(), 0.0, 1.0)
            .iter()
            .map(|&(x, w)| w * (5.0 * x).sin())
            .sum();
        assert!((s - (1.0 - (5.0f64).cos()) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn integration_matrix_matches_partial_integrals() {
        // For f(x) = x^3, the interpolant is exact, so S·f must reproduce
        // ∫_{-1}^{x_q} x^3 dx = (x_q^4 - 1)/4.
        let rule = gl16();
        let s = gl16_integration_matrix();
        for (q, &(xq, _)) in rule.iter().enumerate() {
            let val: f64 = rule
                .iter()
                .enumerate()
                .map(|(r, &(xr, _))| s[q][r] * xr.powi(3))
                .sum();
            assert!((val - (xq.powi(4) - 1.0) / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn extrapolation_recovers_polynomial_values() {
        // y = 3 - 2x + 5x² sampled at three points → y(0) = 3.
        let xs = [0.2, 0.1, 0.05];
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 - 2.0 * x + 5.0 * x * x).collect();
        assert!((extrapolate_to_zero(&xs, &ys) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|&x| -1.5 * x + 0.25).collect();
        let (slope, intercept, res) = fit_line(&xs, &ys);
        assert!((slope + 1.5).abs() < 1e-12);
        assert!((intercept - 0.25).abs() < 1e-12);
        assert!(res.iter().all(|r| r.abs() < 1e-12));
    }
}
