//! Reference values computed without the library's series machinery.
//!
//! Infinite sums are a plain partial sum to `L` plus the midpoint-rule tail
//! `sum_{l>=L} h(l) ~ int_{L-1/2}^inf h(x) dx`, whose error is about
//! `h'(L)/24`. The integral is taken by the trapezoid rule after
//! `x = (L - 1/2) e^s`, `s = e^r`, which turns power and log-power tails into
//! analytic integrands with exponential decay at both ends of the `r` line.
//! Integrands are evaluated through `u = ln x`, since `x` itself overflows.

use std::f64::consts::E;

use bmapinf::BatchSizeDistribution;

pub const PARTIAL: u64 = 20_000;

/// `ln(e^u + c)` without forming `e^u`.
pub fn ln_exp_plus(u: f64, c: f64) -> f64 {
    u + (c * (-u).exp()).ln_1p()
}

/// `int_a^inf f(x) dx` for power or log-power decay, with `g(u) = x f(x)`
/// given in terms of `u = ln x` so that no node overflows.
pub fn tail_integral(g: impl Fn(f64) -> f64, a: f64) -> f64 {
    let la = a.ln();
    let h = 1.0 / 32.0;
    let mut total = 0.0;
    let mut r: f64 = -60.0;
    while r <= 700.0 {
        let s = r.exp();
        total += g(la + s) * s;
        r += h;
    }
    total * h
}

/// `sum_{l>=1} phi(l) w(l)` with `phi` and `ln(l w(l))` given in terms of
/// `u = ln l`.
pub fn series(phi: impl Fn(f64) -> f64, log_xw: impl Fn(f64) -> f64) -> f64 {
    let term = |u: f64, shift: f64| {
        let lw = log_xw(u) - shift;
        if lw == f64::NEG_INFINITY {
            0.0
        } else {
            phi(u) * lw.exp()
        }
    };
    let mut head = 0.0;
    // smallest terms first
    for l in (1..PARTIAL).rev() {
        let u = (l as f64).ln();
        head += term(u, u);
    }
    head + tail_integral(|u| term(u, 0.0), PARTIAL as f64 - 0.5)
}

/// `ln(x w(x))` for the unnormalized weight `w` of each family, as a
/// function of `u = ln x`.
pub fn log_weight(b: &BatchSizeDistribution) -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
    match b {
        BatchSizeDistribution::Zeta(z) => {
            let a = z.alpha();
            Box::new(move |u: f64| (1.0 - a) * u)
        }
        BatchSizeDistribution::LogHeavy(l) => {
            let beta = l.beta();
            Box::new(move |u: f64| -(-u).exp().ln_1p() - beta * ln_exp_plus(u, 1.0 + E).ln())
        }
        BatchSizeDistribution::Geometric(g) => {
            let lq = (1.0 - g.p()).ln();
            Box::new(move |u: f64| (u.exp() - 1.0) * lq + u)
        }
        BatchSizeDistribution::Finite(_) => unreachable!("finite laws are summed exactly"),
    }
}

/// `E[phi(B)]` from scratch, including the normalizer; `phi` takes `ln B`.
pub fn expectation(b: &BatchSizeDistribution, phi: impl Fn(f64) -> f64) -> f64 {
    if let BatchSizeDistribution::Finite(f) = b {
        return f
            .pmf()
            .iter()
            .enumerate()
            .map(|(i, p)| p * phi((i as f64 + 1.0).ln()))
            .sum();
    }
    let lw = log_weight(b);
    series(phi, &lw) / normalizer(b)
}

pub fn normalizer(b: &BatchSizeDistribution) -> f64 {
    series(|_| 1.0, log_weight(b))
}

/// `e^-rho rho^k / k!` for `k = 0..n`.
pub fn poisson_pmf(rho: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut p = (-rho).exp();
    for k in 0..n {
        out.push(p);
        p *= rho / (k + 1) as f64;
    }
    out
}

/// Drift from the direct definition `y(k) = sum_l Q(k; l) v(l)`:
/// `k mu v(k-1) + (D(0) e - k mu) v(k) + sum_v (A_v e) E[v(k + B_v)]`.
pub fn drift_direct(view: &bmapinf::BmapView, k: u64) -> Vec<f64> {
    let mu = view.single_rate().expect("single-rate view");
    let v = |x: f64| (x + E).ln();
    let kf = k as f64;
    let d0e = view.d0().row_sums();
    let mut y: Vec<f64> = d0e
        .iter()
        .map(|r| kf * mu * v(kf - 1.0) + (r - kf * mu) * v(kf))
        .collect();
    for (_, a, b) in view.arrivals() {
        let m = expectation(b, |u| ln_exp_plus(u, kf + E));
        for (yi, r) in y.iter_mut().zip(a.row_sums()) {
            *yi += r * m;
        }
    }
    y
}

/// Dense stationary vector by Gaussian elimination with partial pivoting on
/// `Q^T` with the last equation replaced by normalization.
pub fn dense_stationary(q: &[Vec<f64>]) -> Vec<f64> {
    let n = q.len();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| q[j][i]).collect()).collect();
    let mut b = vec![0.0; n];
    a[n - 1] = vec![1.0; n];
    b[n - 1] = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(r);
            for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * y;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Two-sided Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical value of the KS statistic at level 0.001 for large `n`.
pub fn ks_critical_001(n: usize) -> f64 {
    1.9495 / (n as f64).sqrt()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
