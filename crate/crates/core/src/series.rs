//! Series evaluation helpers shared by the heavy-tailed batch families.
//!
//! Sums of the form `sum_{k>=1} h(k)` with slowly decaying `h` are split into
//! an explicit partial sum over `k < n` and an Euler-Maclaurin tail
//!
//! ```text
//! sum_{k>=n} h(k) = I(n) + h(n)/2 - h'(n)/12 + h'''(n)/720 + R,   |R| <= |h'''(n)|/720
//! ```
//!
//! where `I(n) = int_n^inf h(x) dx` is supplied by the caller in closed form
//! (plus an exponentially small remainder handled by quadrature). The remainder
//! bound holds whenever `h''''` keeps one sign on `[n, inf)`, which is the case
//! for every tail used in this crate (power and log-power laws).

/// A series value with a bound on its neglected remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub error_bound: f64,
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Euler-Maclaurin estimate of `sum_{k>=n} h(k)` given `integral = int_n^inf h`.
///
/// Derivatives are taken by central differences with step `n/256`; the
/// correction terms they feed are already `O(h/n)` and `O(h/n^3)`.
pub(crate) fn euler_maclaurin_tail<H: Fn(f64) -> f64>(h: &H, n: f64, integral: f64) -> SeriesValue {
    debug_assert!(n >= 16.0, "Euler-Maclaurin tail needs a reasonably large start");
    let s = n / 256.0;
    let (m2, m1, c, p1, p2) = (h(n - 2.0 * s), h(n - s), h(n), h(n + s), h(n + 2.0 * s));
    let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * s);
    let d3 = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * s * s * s);
    SeriesValue {
        value: integral + 0.5 * c - d1 / 12.0 + d3 / 720.0,
        // 2x slack absorbs the finite-difference error in d3
        error_bound: 2.0 * d3.abs() / 720.0,
    }
}

/// `sum_{k=1}^{n-1} h(k)` plus the Euler-Maclaurin tail from `n`.
pub(crate) fn sum_with_tail<H: Fn(f64) -> f64>(h: H, n: u64, tail_integral: f64) -> SeriesValue {
    let partial = compensated_sum((1..n).map(|k| h(k as f64)));
    let tail = euler_maclaurin_tail(&h, n as f64, tail_integral);
    SeriesValue {
        value: partial + tail.value,
        error_bound: tail.error_bound,
    }
}

/// Integrates a smooth function over `[a, b]`, split at `breaks`, with the
/// double-exponential rule. Returns the integral and the summed error
/// estimate.
pub(crate) fn integrate_split<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    points.push(b);
    points.sort_by(f64::total_cmp);
    // keep each piece short enough for the rule's fixed evaluation budget
    let mut pieces = Vec::new();
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let chunks = ((hi - lo) / 8.0).ceil().max(1.0) as usize;
        let step = (hi - lo) / chunks as f64;
        for i in 0..chunks {
            let x0 = lo + step * i as f64;
            let x1 = if i + 1 == chunks { hi } else { x0 + step };
            pieces.push((x0, x1));
        }
    }
    let per_piece = tol / pieces.len() as f64;
    let mut total = CompensatedSum::default();
    let mut err = 0.0;
    for (x0, x1) in pieces {
        let out = quadrature::double_exponential::integrate(&f, x0, x1, per_piece);
        total.add(out.integral);
        err += out.error_estimate;
    }
    (total.value(), err)
}
