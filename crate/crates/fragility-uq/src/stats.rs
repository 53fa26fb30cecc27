//! Small statistical helpers: standard-normal cdf/quantile, empirical
//! quantiles, trapezoid weights.

/// Standard normal cumulative distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function: rational initial guess polished by
/// Newton steps on the cdf, accurate to machine precision over (0, 1).
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    let q = p - 0.5;
    let mut x = if q.abs() <= 0.45 {
        let r = q * q;
        q * (2.506_628_238_84
            + r * (-18.615_000_625_29 + r * (41.391_197_735_34 + r * -25.441_060_496_37)))
            / (1.0
                + r * (-8.473_510_930_9
                    + r * (23.083_367_437_43
                        + r * (-21.062_241_018_26 + r * 3.130_829_098_33))))
    } else {
        let tail = p.min(1.0 - p);
        let t = (-2.0 * tail.ln()).sqrt();
        let val = t - (2.307_53 + 0.270_61 * t) / (1.0 + t * (0.992_29 + 0.044_81 * t));
        if q < 0.0 {
            -val
        } else {
            val
        }
    };
    let inv_sqrt_2pi = 0.398_942_280_401_432_7;
    for _ in 0..10 {
        let err = norm_cdf(x) - p;
        let pdf = inv_sqrt_2pi * (-0.5 * x * x).exp();
        if pdf <= f64::MIN_POSITIVE {
            break;
        }
        let dx = err / pdf;
        x -= dx;
        if dx.abs() <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Lower empirical quantile: inf{v : (#{x_i <= v}/m) >= gamma}.
///
/// This is the "type 1" quantile, the gamma-th order statistic at index
/// ceil(gamma * m). `gamma = 1` gives the maximum.
pub fn lower_quantile(values: &[f64], gamma: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&gamma) && gamma > 0.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len();
    let k = (gamma * m as f64).ceil() as usize;
    sorted[k.clamp(1, m) - 1]
}

/// In-place variant over a scratch buffer, for hot loops.
pub fn lower_quantile_mut(values: &mut [f64], gamma: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let m = values.len();
    let k = ((gamma * m as f64).ceil() as usize).clamp(1, m) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
    *v
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (n-1 denominator).
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Trapezoid quadrature weights on an arbitrary strictly increasing grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let t = grid.len();
    assert!(t >= 2, "trapezoid rule needs at least two nodes");
    let mut w = vec![0.0; t];
    for i in 0..t - 1 {
        let h = grid[i + 1] - grid[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
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
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn norm_cdf_reference_points() {
        assert_abs_diff_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_cdf(1.6448536269514722), 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(norm_cdf(-1.2815515655446004), 0.10, epsilon = 1e-12);
        assert_abs_diff_eq!(norm_cdf(1.959963984540054), 0.975, epsilon = 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-8, 1e-3, 0.1, 0.25, 0.5, 0.77, 0.9, 0.999, 1.0 - 1e-9] {
            assert_abs_diff_eq!(norm_cdf(norm_quantile(p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn lower_quantile_is_order_statistic() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(lower_quantile(&v, 0.5), 0.5);
        assert_eq!(lower_quantile(&v, 1.0), 1.0);
        assert_eq!(lower_quantile(&v, 0.05), 0.1);
        let mut scratch = v.clone();
        assert_eq!(lower_quantile_mut(&mut scratch, 0.5), 0.5);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.2).collect();
        let w = trapezoid_weights(&grid);
        let integral: f64 = grid.iter().zip(&w).map(|(x, w)| (2.0 * x + 1.0) * w).sum();
        assert_abs_diff_eq!(integral, 4.0 + 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // exact for degree <= 15
        let int_x14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_abs_diff_eq!(int_x14, 2.0 / 15.0, epsilon = 1e-12);
        let total: f64 = w.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
    }
}
