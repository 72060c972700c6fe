//! Batch-size laws carried by each arrival stream.
//!
//! Four families are supported. `Finite` and `Geometric` are light-tailed and
//! summed directly. `Zeta` (`p_k ~ k^-alpha`) and `LogHeavy`
//! (`p_k ~ 1/((k+1) log(k+1+e)^beta)`) have slowly decaying tails; every
//! series over them is a partial sum to [`TAIL_START`] plus an Euler-Maclaurin
//! tail whose integral is evaluated in closed form after the substitution
//! `u = log x` (Zeta) or `u = log(x+1+e)` (LogHeavy), leaving only an
//! exponentially small remainder for quadrature.

use std::f64::consts::E;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::series::{compensated_sum, integrate_split, sum_with_tail, SeriesValue};

/// Index where heavy-tail partial sums hand over to the Euler-Maclaurin tail.
pub const TAIL_START: u64 = 1024;

const PMF_SUM_TOL: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
pub enum BatchSizeDistribution {
    Finite(FiniteLaw),
    Geometric(GeometricLaw),
    Zeta(ZetaLaw),
    LogHeavy(LogHeavyLaw),
}

/// Explicit pmf over batch sizes `1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLaw {
    pmf: Vec<f64>,
    /// `survival[k] = P(B > k)` for `k = 0..=m`, accumulated from the top.
    survival: Vec<f64>,
}

/// `p_k = (1-p)^(k-1) p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricLaw {
    p: f64,
    log_q: f64,
}

/// `p_k = k^-alpha / zeta(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaLaw {
    alpha: f64,
    zeta: f64,
    survival: Arc<[f64]>,
}

/// `p_k = 1 / (Z (k+1) log(k+1+e)^beta)`, normalizable for `beta > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogHeavyLaw {
    beta: f64,
    norm: f64,
    survival: Arc<[f64]>,
}

impl BatchSizeDistribution {
    pub fn finite(pmf: Vec<f64>) -> Result<Self, ModelError> {
        FiniteLaw::new(pmf).map(Self::Finite)
    }

    pub fn geometric(p: f64) -> Result<Self, ModelError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ModelError::BadPmf(format!("geometric p must lie in (0,1), got {p}")));
        }
        Ok(Self::Geometric(GeometricLaw { p, log_q: (-p).ln_1p() }))
    }

    pub fn zeta(alpha: f64) -> Result<Self, ModelError> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(ModelError::BadPmf(format!("zeta exponent must exceed 1, got {alpha}")));
        }
        Ok(Self::Zeta(ZetaLaw::new(alpha)))
    }

    pub fn log_heavy(beta: f64) -> Result<Self, ModelError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ModelError::BadPmf(format!(
                "log-heavy exponent must be positive, got {beta}"
            )));
        }
        if beta <= 1.0 {
            // sum 1/((k+1) log(k+1+e)^beta) diverges by the integral test
            return Err(ModelError::BadPmf(format!(
                "log-heavy exponent {beta} <= 1 is not normalizable: sum_k 1/((k+1) log(k+1+e)^beta) diverges"
            )));
        }
        Ok(Self::LogHeavy(LogHeavyLaw::new(beta)))
    }

    /// The single-arrival law, `P(B = 1) = 1`.
    pub fn single() -> Self {
        Self::finite(vec![1.0]).expect("unit pmf is valid")
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Finite(_) => "finite",
            Self::Geometric(_) => "geometric",
            Self::Zeta(_) => "zeta",
            Self::LogHeavy(_) => "log_heavy",
        }
    }

    /// `P(B = k)`; zero for `k = 0`.
    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            Self::Finite(f) => f.pmf.get(k as usize - 1).copied().unwrap_or(0.0),
            Self::Geometric(g) => g.p * ((k - 1) as f64 * g.log_q).exp(),
            Self::Zeta(z) => (k as f64).powf(-z.alpha) / z.zeta,
            Self::LogHeavy(l) => l.weight(k as f64) / l.norm,
        }
    }

    /// `P(B > k)`.
    pub fn survival(&self, k: u64) -> f64 {
        match self {
            Self::Finite(f) => f.survival.get(k as usize).copied().unwrap_or(0.0),
            Self::Geometric(g) => (k as f64 * g.log_q).exp(),
            Self::Zeta(z) => {
                if k < TAIL_START {
                    z.survival[k as usize]
                } else {
                    z.tail_mass(k + 1)
                }
            }
            Self::LogHeavy(l) => {
                if k < TAIL_START {
                    l.survival[k as usize]
                } else {
                    l.tail_mass(k + 1)
                }
            }
        }
    }

    /// Largest batch size with positive probability, if bounded.
    pub fn max_support(&self) -> Option<u64> {
        match self {
            Self::Finite(f) => Some(f.pmf.len() as u64),
            _ => None,
        }
    }

    /// Whether `sum_k log(k+e) p_k` converges, decided per family.
    pub fn has_finite_log_moment(&self) -> bool {
        match self {
            Self::LogHeavy(l) => l.beta > 2.0,
            _ => true,
        }
    }

    /// `sum_{k>=1} log(k+e) p_k`, or `+inf` when the series diverges.
    pub fn log_moment(&self) -> f64 {
        self.log_moment_series().map_or(f64::INFINITY, |s| s.value)
    }

    /// The log moment with the bound on its truncated remainder; `None` when
    /// the series diverges.
    pub fn log_moment_series(&self) -> Option<SeriesValue> {
        match self {
            Self::Finite(f) => Some(SeriesValue {
                // plain left-to-right sum: bitwise equal to the explicit finite sum
                value: f
                    .pmf
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * (i as f64 + 1.0 + E).ln())
                    .sum(),
                error_bound: 0.0,
            }),
            Self::Geometric(g) => Some(g.direct_sum(|k| (k + E).ln(), |k| 1.0 + 1.0 / (k + E))),
            Self::Zeta(z) => Some(z.series(|x| (x + E).ln(), |n| z.log_integral(n))),
            Self::LogHeavy(l) if l.beta > 2.0 => Some(l.series(|x| (x + E).ln(), |n| l.log_integral(n))),
            Self::LogHeavy(_) => None,
        }
    }

    /// `sum_{l>=1} log(1 + l/c) p_l` for `c > 0`; `None` when it diverges
    /// (exactly when the log moment diverges).
    pub fn log_shift_moment(&self, c: f64) -> Option<SeriesValue> {
        assert!(c > 0.0, "shift must be positive");
        match self {
            Self::Finite(f) => Some(SeriesValue {
                value: compensated_sum(
                    f.pmf
                        .iter()
                        .enumerate()
                        .map(|(i, p)| p * ((i as f64 + 1.0) / c).ln_1p()),
                ),
                error_bound: 0.0,
            }),
            Self::Geometric(g) => Some(g.direct_sum(|l| (l / c).ln_1p(), |l| 1.0 + 1.0 / l)),
            Self::Zeta(z) => Some(z.series(|x| (x / c).ln_1p(), |n| z.shift_integral(n, c))),
            Self::LogHeavy(l) if l.beta > 2.0 => Some(l.series(|x| (x / c).ln_1p(), |n| l.shift_integral(n, c))),
            Self::LogHeavy(_) => None,
        }
    }

    /// Probability generating function `sum_k z^k p_k` for `z` in `[0, 1]`.
    pub fn pgf(&self, z: f64) -> f64 {
        assert!((0.0..=1.0).contains(&z), "pgf argument must lie in [0,1]");
        if z == 0.0 {
            return 0.0;
        }
        if z == 1.0 {
            return 1.0;
        }
        match self {
            Self::Finite(f) => compensated_sum(f.pmf.iter().enumerate().map(|(i, p)| p * z.powi(i as i32 + 1))),
            Self::Geometric(g) => g.p * z / (1.0 - (1.0 - g.p) * z),
            _ => {
                // remainder after k is at most z^(k+1) P(B > k)
                let mut acc = crate::series::CompensatedSum::default();
                let mut zk = 1.0;
                for k in 1.. {
                    zk *= z;
                    acc.add(zk * self.pmf(k));
                    if zk * z * self.survival(k) < 1e-18 * acc.value() {
                        break;
                    }
                }
                acc.value()
            }
        }
    }

    /// Inverse CDF: the smallest `k >= 1` with `P(B <= k) >= u`, saturating at
    /// `cap`.
    pub fn quantile(&self, u: f64, cap: u64) -> u64 {
        debug_assert!((0.0..=1.0).contains(&u));
        let cap = cap.max(1);
        let target = 1.0 - u;
        if target >= 1.0 {
            return 1;
        }
        if self.survival(cap) > target {
            return cap;
        }
        let guess = match self {
            Self::Finite(f) => return f.quantile(target).min(cap),
            Self::Geometric(g) => (target.ln() / g.log_q).ceil(),
            Self::Zeta(z) => ((z.alpha - 1.0) * z.zeta * target).powf(-1.0 / (z.alpha - 1.0)) - 1.0,
            Self::LogHeavy(l) => {
                let u = ((l.beta - 1.0) * l.norm * target).powf(-1.0 / (l.beta - 1.0));
                u.exp() - 2.0 - E
            }
        };
        let table_hit = match self {
            Self::Zeta(z) => table_quantile(&z.survival, target),
            Self::LogHeavy(l) => table_quantile(&l.survival, target),
            _ => None,
        };
        if let Some(k) = table_hit {
            return k.min(cap);
        }
        let guess = if guess.is_finite() {
            guess.clamp(1.0, cap as f64) as u64
        } else {
            cap
        };
        self.refine_quantile(guess.max(1), target, cap)
    }

    /// Exponential bracketing around `guess`, then bisection on the monotone
    /// survival function.
    fn refine_quantile(&self, guess: u64, target: f64, cap: u64) -> u64 {
        // invariant sought: survival(lo) > target >= survival(hi)
        let (mut lo, mut hi);
        let first_step = (guess >> 24).max(1);
        if self.survival(guess) <= target {
            hi = guess;
            let mut step = first_step;
            loop {
                let probe = hi.saturating_sub(step);
                if probe == 0 {
                    lo = 0;
                    break;
                }
                if self.survival(probe) > target {
                    lo = probe;
                    break;
                }
                hi = probe;
                step = step.saturating_mul(2);
            }
        } else {
            lo = guess;
            let mut step = first_step;
            loop {
                let probe = lo.saturating_add(step).min(cap);
                if self.survival(probe) <= target {
                    hi = probe;
                    break;
                }
                lo = probe;
                step = step.saturating_mul(2);
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.survival(mid) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

fn table_quantile(survival: &[f64], target: f64) -> Option<u64> {
    // survival is nonincreasing; first index with value <= target
    let idx = survival.partition_point(|&s| s > target);
    (idx < survival.len()).then_some(idx.max(1) as u64)
}

impl FiniteLaw {
    fn new(mut pmf: Vec<f64>) -> Result<Self, ModelError> {
        if let Some((i, p)) = pmf.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(ModelError::BadPmf(format!("pmf entry for batch size {} is {p}", i + 1)));
        }
        while pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        if pmf.is_empty() {
            return Err(ModelError::BadPmf("pmf has no positive mass".into()));
        }
        let total: f64 = compensated_sum(pmf.iter().copied());
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(ModelError::BadPmf(format!("pmf sums to {total}, expected 1")));
        }
        let mut survival = vec![0.0; pmf.len() + 1];
        for k in (0..pmf.len()).rev() {
            survival[k] = survival[k + 1] + pmf[k];
        }
        Ok(Self { pmf, survival })
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    fn quantile(&self, target: f64) -> u64 {
        table_quantile(&self.survival, target).unwrap_or(self.pmf.len() as u64)
    }
}

impl GeometricLaw {
    pub fn p(&self) -> f64 {
        self.p
    }

    /// `sum_k phi(k) p_k` for nonnegative increasing `phi` with
    /// `phi(k+1)/phi(k) <= growth(k)`; stops once the geometric remainder
    /// bound is negligible.
    fn direct_sum(&self, phi: impl Fn(f64) -> f64, growth: impl Fn(f64) -> f64) -> SeriesValue {
        let q = 1.0 - self.p;
        let mut acc = crate::series::CompensatedSum::default();
        let mut weight = self.p;
        let mut k = 1.0f64;
        loop {
            let term = phi(k) * weight;
            acc.add(term);
            let ratio = q * growth(k);
            if ratio < 1.0 {
                let bound = term * ratio / (1.0 - ratio);
                if bound <= 1e-17 * acc.value() || term == 0.0 {
                    return SeriesValue {
                        value: acc.value(),
                        error_bound: bound,
                    };
                }
            }
            weight *= q;
            k += 1.0;
        }
    }
}

impl ZetaLaw {
    fn new(alpha: f64) -> Self {
        let w = |x: f64| x.powf(-alpha);
        let zeta = sum_with_tail(w, TAIL_START, Self::weight_integral_for(alpha, TAIL_START as f64)).value;
        let mut law = Self {
            alpha,
            zeta,
            survival: Arc::from(Vec::new()),
        };
        law.survival = survival_table(|k| w(k) / zeta, law.tail_mass(TAIL_START));
        law
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `zeta(alpha)`, the normalizing constant.
    pub fn normalizer(&self) -> f64 {
        self.zeta
    }

    fn weight_integral_for(alpha: f64, n: f64) -> f64 {
        n.powf(1.0 - alpha) / (alpha - 1.0)
    }

    /// `P(B >= n)` for `n >= TAIL_START`.
    fn tail_mass(&self, n: u64) -> f64 {
        let a = self.alpha;
        crate::series::euler_maclaurin_tail(&|x: f64| x.powf(-a), n as f64, Self::weight_integral_for(a, n as f64))
            .value
            / self.zeta
    }

    fn series(&self, phi: impl Fn(f64) -> f64, tail_integral: impl Fn(f64) -> f64) -> SeriesValue {
        let a = self.alpha;
        let raw = sum_with_tail(|x| phi(x) * x.powf(-a), TAIL_START, tail_integral(TAIL_START as f64));
        SeriesValue {
            value: raw.value / self.zeta,
            error_bound: raw.error_bound / self.zeta,
        }
    }

    /// `int_n^inf log(x+e) x^-alpha dx` via `log(x+e) = log x + log(1+e/x)`.
    fn log_integral(&self, n: f64) -> f64 {
        let r = self.alpha - 1.0;
        let head = n.powf(-r) * (n.ln() / r + 1.0 / (r * r));
        // int_n^inf log(1+e/x) x^-alpha dx, expanded in e/x
        let mut series = crate::series::CompensatedSum::default();
        for j in 1..200 {
            let jf = j as f64;
            let term = (E / n).powi(j) * n.powf(-r) / (jf * (r + jf));
            series.add(if j % 2 == 1 { term } else { -term });
            if term < 1e-20 * head {
                break;
            }
        }
        head + series.value()
    }

    /// `int_n^inf log(1+x/c) x^-alpha dx`, in `u = log x`.
    fn shift_integral(&self, n: f64, c: f64) -> f64 {
        let r = self.alpha - 1.0;
        let (lc, un) = (c.ln(), n.ln());
        let ux = un.max(lc);
        // below c: integrate log1p(e^u/c) e^(-r u) directly
        let (near, _) = integrate_split(|u| (u.exp() / c).ln_1p() * (-r * u).exp(), un, ux, &[], QUAD_TOL);
        // above c: log(1+e^u/c) = (u - log c) + log1p(c e^-u)
        let main = (-r * ux).exp() * ((ux - lc) / r + 1.0 / (r * r));
        let (rest, _) = integrate_split(
            |u| (c * (-u).exp()).ln_1p() * (-r * u).exp(),
            ux,
            ux + 50.0,
            &[],
            QUAD_TOL,
        );
        near + main + rest
    }
}

impl LogHeavyLaw {
    fn new(beta: f64) -> Self {
        let raw = Self {
            beta,
            norm: 1.0,
            survival: Arc::from(Vec::new()),
        };
        let norm = sum_with_tail(|x| raw.weight(x), TAIL_START, raw.weight_integral(TAIL_START as f64)).value;
        let mut law = Self { norm, ..raw };
        law.survival = survival_table(|k| law.weight(k) / norm, law.tail_mass(TAIL_START));
        law
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The normalizing constant `sum_k 1/((k+1) log(k+1+e)^beta)`.
    pub fn normalizer(&self) -> f64 {
        self.norm
    }

    fn weight(&self, x: f64) -> f64 {
        1.0 / ((x + 1.0) * (x + 1.0 + E).ln().powf(self.beta))
    }

    /// Change of variables `u = log(x+1+e)` turns `w(x) dx` into
    /// `u^-beta (1 + 1/expm1(u-1)) du`.
    fn jacobian_weight(&self, u: f64) -> f64 {
        u.powf(-self.beta) * (1.0 + 1.0 / (u - 1.0).exp_m1())
    }

    /// `int_n^inf w(x) dx`. The remainder `int u^-beta / expm1(u-1) du` is
    /// expanded as `sum_j e^j int u^-beta e^(-j u) du`, each an upper
    /// incomplete gamma function.
    fn weight_integral(&self, n: f64) -> f64 {
        let b = self.beta;
        let u0 = (n + 1.0 + E).ln();
        let main = u0.powf(1.0 - b) / (b - 1.0);
        let mut rest = 0.0;
        for j in 1..64 {
            let jf = j as f64;
            let term = (-jf * (u0 - 1.0)).exp() * u0.powf(1.0 - b) * scaled_upper_gamma(1.0 - b, jf * u0);
            rest += term;
            if term < 1e-18 * main {
                break;
            }
        }
        main + rest
    }

    /// `int_n^inf log(x+e) w(x) dx`; requires `beta > 2`.
    fn log_integral(&self, n: f64) -> f64 {
        let b = self.beta;
        let u0 = (n + 1.0 + E).ln();
        // log(x+e) = u + log1p(-e^-u)
        let main = u0.powf(2.0 - b) / (b - 2.0);
        let rest = |u: f64| {
            let em = 1.0 / (u - 1.0).exp_m1();
            u.powf(-b) * ((-(-u).exp()).ln_1p() * (1.0 + em) + u * em)
        };
        let (tail, _) = integrate_split(rest, u0, u0 + 50.0, &[], QUAD_TOL);
        main + tail
    }

    /// `int_n^inf log(1+x/c) w(x) dx`; requires `beta > 2`.
    fn shift_integral(&self, n: f64, c: f64) -> f64 {
        let b = self.beta;
        let un = (n + 1.0 + E).ln();
        let ux = un.max((c.max(n) + 1.0 + E).ln());
        let lc = c.ln();
        let (near, _) = integrate_split(
            |u| {
                let x = u.exp() - 1.0 - E;
                (x / c).ln_1p() * self.jacobian_weight(u)
            },
            un,
            ux,
            &[],
            QUAD_TOL,
        );
        // log(1+x/c) = u - log c + log1p(a e^-u), a = c - 1 - e
        let a = c - 1.0 - E;
        let main = ux.powf(2.0 - b) / (b - 2.0) - lc * ux.powf(1.0 - b) / (b - 1.0);
        let rest = |u: f64| {
            let em = 1.0 / (u - 1.0).exp_m1();
            u.powf(-b) * ((u - lc) * em + (a * (-u).exp()).ln_1p() * (1.0 + em))
        };
        let (tail, _) = integrate_split(rest, ux, ux + 50.0, &[], QUAD_TOL);
        near + main + tail
    }

    fn tail_mass(&self, n: u64) -> f64 {
        crate::series::euler_maclaurin_tail(&|x| self.weight(x), n as f64, self.weight_integral(n as f64)).value
            / self.norm
    }

    fn series(&self, phi: impl Fn(f64) -> f64, tail_integral: impl Fn(f64) -> f64) -> SeriesValue {
        let raw = sum_with_tail(
            |x| phi(x) * self.weight(x),
            TAIL_START,
            tail_integral(TAIL_START as f64),
        );
        SeriesValue {
            value: raw.value / self.norm,
            error_bound: raw.error_bound / self.norm,
        }
    }
}

/// `e^x x^-a Gamma(a, x)` by the modified Lentz continued fraction; accurate
/// for `x > a + 1`.
fn scaled_upper_gamma(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let fi = i as f64;
        let an = -fi * (fi - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `survival[k] = P(B > k)` for `k < TAIL_START`, accumulated downward from
/// the analytic tail mass `P(B >= TAIL_START)`.
fn survival_table(pmf: impl Fn(f64) -> f64, tail_from_start: f64) -> Arc<[f64]> {
    let n = TAIL_START as usize;
    let mut s = vec![0.0; n];
    s[n - 1] = tail_from_start;
    for k in (0..n - 1).rev() {
        s[k] = s[k + 1] + pmf((k + 1) as f64);
    }
    Arc::from(s)
}

/// Serialized form: `{"family": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchSpec {
    Finite { pmf: Vec<f64> },
    Geometric { p: f64 },
    Zeta { alpha: f64 },
    LogHeavy { beta: f64 },
}

impl TryFrom<&BatchSpec> for BatchSizeDistribution {
    type Error = ModelError;

    fn try_from(spec: &BatchSpec) -> Result<Self, ModelError> {
        match spec {
            BatchSpec::Finite { pmf } => Self::finite(pmf.clone()),
            BatchSpec::Geometric { p } => Self::geometric(*p),
            BatchSpec::Zeta { alpha } => Self::zeta(*alpha),
            BatchSpec::LogHeavy { beta } => Self::log_heavy(*beta),
        }
    }
}

impl From<&BatchSizeDistribution> for BatchSpec {
    fn from(b: &BatchSizeDistribution) -> Self {
        match b {
            BatchSizeDistribution::Finite(f) => BatchSpec::Finite { pmf: f.pmf.clone() },
            BatchSizeDistribution::Geometric(g) => BatchSpec::Geometric { p: g.p },
            BatchSizeDistribution::Zeta(z) => BatchSpec::Zeta { alpha: z.alpha },
            BatchSizeDistribution::LogHeavy(l) => BatchSpec::LogHeavy { beta: l.beta },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn single_atom_log_moment() {
        let b = BatchSizeDistribution::single();
        assert_eq!(b.log_moment(), (1.0 + E).ln());
        assert!(close(b.log_moment(), 1.313262, 1e-6));
    }

    #[test]
    fn finite_rejects_bad_mass() {
        assert!(BatchSizeDistribution::finite(vec![0.5, 0.4]).is_err());
        assert!(BatchSizeDistribution::finite(vec![0.5, -0.1, 0.6]).is_err());
        assert!(BatchSizeDistribution::finite(vec![0.0, 0.0]).is_err());
        assert!(BatchSizeDistribution::finite(vec![0.25, 0.75, 0.0]).is_ok());
    }

    #[test]
    fn parameter_domains() {
        assert!(BatchSizeDistribution::geometric(0.0).is_err());
        assert!(BatchSizeDistribution::geometric(1.0).is_err());
        assert!(BatchSizeDistribution::zeta(1.0).is_err());
        assert!(BatchSizeDistribution::log_heavy(0.0).is_err());
        assert!(BatchSizeDistribution::log_heavy(1.0).is_err());
        assert!(BatchSizeDistribution::log_heavy(1.0001).is_ok());
    }

    #[test]
    fn divergence_is_decided_by_family() {
        for beta in [1.2, 1.5, 2.0] {
            let b = BatchSizeDistribution::log_heavy(beta).unwrap();
            assert!(b.log_moment().is_infinite());
            assert!(b.log_shift_moment(3.0).is_none());
        }
        assert!(BatchSizeDistribution::log_heavy(2.0001)
            .unwrap()
            .log_moment()
            .is_finite());
        assert!(BatchSizeDistribution::zeta(1.01).unwrap().log_moment().is_finite());
    }

    #[test]
    fn zeta_normalizer_matches_known_values() {
        let z2 = BatchSizeDistribution::zeta(2.0).unwrap();
        let BatchSizeDistribution::Zeta(law) = &z2 else {
            unreachable!()
        };
        assert!(close(law.normalizer(), std::f64::consts::PI.powi(2) / 6.0, 1e-13));
        let z4 = ZetaLaw::new(4.0);
        assert!(close(z4.normalizer(), std::f64::consts::PI.powi(4) / 90.0, 1e-13));
        // zeta(1.5) = 2.612375348685488...
        assert!(close(ZetaLaw::new(1.5).normalizer(), 2.612_375_348_685_488, 1e-12));
    }

    #[test]
    fn survival_is_continuous_across_table_edge() {
        for b in [
            BatchSizeDistribution::zeta(2.5).unwrap(),
            BatchSizeDistribution::log_heavy(1.5).unwrap(),
        ] {
            let k = TAIL_START - 1;
            let inside = b.survival(k);
            let outside = b.survival(k + 1);
            assert!(
                close(inside - outside, b.pmf(k + 1), 1e-9),
                "{} {}",
                inside - outside,
                b.pmf(k + 1)
            );
            assert!(close(b.survival(0), 1.0, 1e-12));
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let laws = [
            BatchSizeDistribution::finite(vec![0.2, 0.0, 0.5, 0.3]).unwrap(),
            BatchSizeDistribution::geometric(0.3).unwrap(),
            BatchSizeDistribution::zeta(1.7).unwrap(),
            BatchSizeDistribution::log_heavy(1.2).unwrap(),
        ];
        for b in &laws {
            for &u in &[1e-9, 0.1, 0.5, 0.9, 0.99, 0.999_999] {
                let k = b.quantile(u, u64::MAX >> 11);
                if k == u64::MAX >> 11 {
                    continue;
                }
                let cdf = 1.0 - b.survival(k);
                let cdf_prev = 1.0 - b.survival(k - 1);
                assert!(cdf >= u - 1e-12, "{} u={u} k={k}", b.family());
                assert!(k == 1 || cdf_prev < u + 1e-12, "{} u={u} k={k}", b.family());
            }
        }
        assert_eq!(laws[0].quantile(0.2, 100), 1);
        assert_eq!(laws[0].quantile(0.21, 100), 3);
    }

    #[test]
    fn quantile_saturates_at_cap() {
        let b = BatchSizeDistribution::log_heavy(1.2).unwrap();
        assert_eq!(b.quantile(0.999, 1000), 1000);
    }

    #[test]
    fn pgf_closed_form_and_series_agree() {
        let g = BatchSizeDistribution::geometric(0.4).unwrap();
        let direct: f64 = (1..400).map(|k| 0.5f64.powi(k) * g.pmf(k as u64)).sum();
        assert!(close(g.pgf(0.5), direct, 1e-14));
        let z = BatchSizeDistribution::zeta(2.5).unwrap();
        let direct: f64 = (1..2000).map(|k| 0.75f64.powi(k) * z.pmf(k as u64)).sum();
        assert!(close(z.pgf(0.75), direct, 1e-14));
    }

    #[test]
    fn spec_round_trip() {
        let spec = BatchSpec::LogHeavy { beta: 3.0 };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"family":"log_heavy","params":{"beta":3.0}}"#);
        let back: BatchSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<BatchSpec>(r#"{"family":"zeta","params":{"alpha":2,"x":1}}"#).is_err());
    }
}
