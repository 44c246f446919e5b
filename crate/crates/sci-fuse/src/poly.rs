//! Closed-form real-root extraction for polynomials up to degree four,
//! with Newton polishing against the original coefficients.
//!
//! Coefficients are ordered highest degree first. The solvers are fully
//! deterministic; callers that need certified residuals polish and then
//! verify by back-substitution.

/// Evaluate by Horner's rule.
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

/// Derivative value at `x`.
pub fn eval_derivative(coeffs: &[f64], x: f64) -> f64 {
    let n = coeffs.len();
    if n < 2 {
        return 0.0;
    }
    coeffs[..n - 1]
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, &c)| acc * x + c * (n - 1 - i) as f64)
}

/// Convolution of coefficient arrays (polynomial product).
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Monic quadratic `(x - r1)(x - r2)` as coefficients.
pub fn from_root_pair(r1: f64, r2: f64) -> [f64; 3] {
    [1.0, -(r1 + r2), r1 * r2]
}

/// A few Newton steps on `coeffs`, keeping the iterate with the smallest
/// absolute residual.
pub fn newton_polish(coeffs: &[f64], x0: f64, iters: usize) -> f64 {
    let mut x = x0;
    let mut best = x0;
    let mut best_res = eval(coeffs, x0).abs();
    for _ in 0..iters {
        let d = eval_derivative(coeffs, x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        x -= eval(coeffs, x) / d;
        if !x.is_finite() {
            break;
        }
        let res = eval(coeffs, x).abs();
        if res < best_res {
            best_res = res;
            best = x;
        }
    }
    best
}

fn roots_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        if b == 0.0 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / (2.0 * a)];
    }
    // avoid cancellation: compute the large-magnitude root first
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut roots = if q == 0.0 {
        vec![0.0, -b / a]
    } else {
        vec![q / a, c / q]
    };
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}

fn roots_cubic_normalized(b: f64, c: f64, d: f64) -> Vec<f64> {
    // x^3 + b x^2 + c x + d
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut roots = if disc > 0.0 {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() - shift]
    } else if disc == 0.0 {
        if q == 0.0 {
            vec![-shift]
        } else {
            let u = (-q / 2.0).cbrt();
            vec![2.0 * u - shift, -u - shift]
        }
    } else {
        // three real roots: trigonometric form
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let tau = 2.0 * std::f64::consts::PI / 3.0;
        vec![
            m * phi.cos() - shift,
            m * (phi - tau).cos() - shift,
            m * (phi + tau).cos() - shift,
        ]
    };
    roots.sort_by(f64::total_cmp);
    roots
}

fn roots_quartic_normalized(b: f64, c: f64, d: f64, e: f64) -> Vec<f64> {
    // x^4 + b x^3 + c x^2 + d x + e, depressed via x = y - b/4
    let shift = b / 4.0;
    let p = c - 3.0 * b * b / 8.0;
    let q = d - b * c / 2.0 + b * b * b / 8.0;
    let r = e - b * d / 4.0 + b * b * c / 16.0 - 3.0 * b.powi(4) / 256.0;

    let mut ys: Vec<f64> = Vec::new();
    if q.abs() <= 1e-14 * (1.0 + p.abs() + r.abs()) {
        // biquadratic: y^4 + p y^2 + r
        for z in roots_quadratic(1.0, p, r) {
            if z > 0.0 {
                ys.push(z.sqrt());
                ys.push(-z.sqrt());
            } else if z == 0.0 {
                ys.push(0.0);
            }
        }
    } else {
        // Ferrari: real m > 0 with 8m^3 + 8pm^2 + (2p^2 - 8r)m - q^2 = 0
        let m = roots_cubic_normalized(p, p * p / 4.0 - r, -q * q / 8.0)
            .into_iter()
            .filter(|m| *m > 0.0)
            .fold(f64::NAN, f64::max);
        if !m.is_finite() {
            return Vec::new();
        }
        let s = (2.0 * m).sqrt();
        let t = q / (2.0 * s);
        ys.extend(roots_quadratic(1.0, -s, p / 2.0 + m + t));
        ys.extend(roots_quadratic(1.0, s, p / 2.0 + m - t));
    }
    let mut roots: Vec<f64> = ys.into_iter().map(|y| y - shift).collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// All real roots of a polynomial of degree at most four, ascending, after
/// Newton polishing against the input coefficients. Near-zero leading
/// coefficients are trimmed relative to the largest coefficient.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let max_c = coeffs.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    if max_c == 0.0 {
        return Vec::new();
    }
    let mut c: &[f64] = coeffs;
    while c.len() > 1 && c[0].abs() <= 1e-14 * max_c {
        c = &c[1..];
    }
    let raw = match c.len() {
        0 | 1 => Vec::new(),
        2 => vec![-c[1] / c[0]],
        3 => roots_quadratic(c[0], c[1], c[2]),
        4 => roots_cubic_normalized(c[1] / c[0], c[2] / c[0], c[3] / c[0]),
        5 => roots_quartic_normalized(c[1] / c[0], c[2] / c[0], c[3] / c[0], c[4] / c[0]),
        n => panic!("real_roots supports degree <= 4, got degree {}", n - 1),
    };
    let mut polished: Vec<f64> = raw.into_iter().map(|x| newton_polish(coeffs, x, 8)).collect();
    polished.sort_by(f64::total_cmp);
    polished.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())));
    polished
}
