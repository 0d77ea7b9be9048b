//! Sample moments and the two moment-matching fitters.
//!
//! * Three-moment shifted lognormal: `P ≈ θ + Z` (positive skew) or
//!   `P ≈ θ - Z` (negative skew) with `Z = e^X`, `X ~ N(μ_X, σ_X²)`.
//! * Two-moment lognormal match of `e^{X1} + e^{X2}` for correlated normals.

use crate::error::{Error, Result};
use crate::special::{log_add_exp, norm_inv_cdf};
use crate::Scalar;

/// Below this absolute sample skewness the three-moment system is treated as
/// degenerate and a plain two-moment lognormal is fitted instead.
pub const DEFAULT_SKEW_THRESHOLD: f64 = 1e-4;

/// Mean and central moments with `1/n` divisors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments<T> {
    pub mean: T,
    pub m2: T,
    pub m3: T,
    pub n: usize,
}

impl<T: Scalar> SampleMoments<T> {
    pub fn skewness(&self) -> Result<T> {
        skewness(self)
    }
}

pub fn central_moments<T: Scalar>(sample: &[T]) -> Result<SampleMoments<T>> {
    let n = sample.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "central moments need at least 3 observations, got {n}"
        )));
    }
    if let Some(bad) = sample.iter().find(|x| !x.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite observation {bad}")));
    }
    let nn = T::from_usize(n).expect("sample size fits the scalar type");
    let mean = sample.iter().fold(T::zero(), |acc, &x| acc + x) / nn;
    let (s2, s3) = sample.iter().fold((T::zero(), T::zero()), |(a, b), &x| {
        let d = x - mean;
        let d2 = d * d;
        (a + d2, b + d2 * d)
    });
    Ok(SampleMoments {
        mean,
        m2: s2 / nn,
        m3: s3 / nn,
        n,
    })
}

/// `m3 / m2^{3/2}`. A spread at rounding level of the mean counts as zero
/// variance: its third moment is pure noise.
pub fn skewness<T: Scalar>(m: &SampleMoments<T>) -> Result<T> {
    if !(m.m2.sqrt() > T::lit(64.0) * T::epsilon() * m.mean.abs()) || !(m.m2 > T::zero()) {
        return Err(Error::Degenerate(
            "sample has zero variance; skewness undefined".into(),
        ));
    }
    Ok(m.m3 / (m.m2 * m.m2.sqrt()))
}

/// Unique `η >= 1` with `(η + 2) √(η - 1) = b`, i.e. the root of
/// `η³ + 3η² - (4 + b²) = 0`. For a lognormal, `η = e^{σ²}` and `b` is the
/// absolute skewness.
pub fn solve_eta<T: Scalar>(b: T) -> T {
    T::one() + solve_eta_minus_one(b)
}

/// `η - 1`, solved directly as the root `u >= 0` of `u³ + 6u² + 9u - b² = 0`
/// so that small skews keep full relative precision.
pub fn solve_eta_minus_one<T: Scalar>(b: T) -> T {
    let b = b.abs();
    if b == T::zero() {
        return T::zero();
    }
    let (three, six, nine) = (T::lit(3.0), T::lit(6.0), T::lit(9.0));
    let b2 = b * b;
    let f = |u: T| ((u + six) * u + nine) * u - b2;
    let df = |u: T| (three * u + T::lit(12.0)) * u + nine;

    // f(0) = -b² < 0; u³ <= b² and 9u <= b² give two upper bounds
    let mut lo = T::zero();
    let mut hi = b.powf(T::lit(2.0 / 3.0)).min(b2 / nine);
    if f(hi) < T::zero() {
        hi = hi * T::lit(1.0 + 1e-6) + T::epsilon();
    }
    let guess = (T::lit(4.0) + b2).cbrt() - T::lit(2.0);
    let mut u = if guess > lo && guess < hi {
        guess
    } else {
        T::lit(0.5) * (lo + hi)
    };

    for _ in 0..200 {
        let fu = f(u);
        if fu == T::zero() {
            return u;
        }
        if fu < T::zero() {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = u - fu / df(u);
        if !(next > lo && next < hi) {
            next = T::lit(0.5) * (lo + hi);
        }
        if (next - u).abs() <= T::epsilon() * next.abs() || hi - lo <= T::epsilon() * hi {
            return next;
        }
        u = next;
    }
    u
}

/// Parameters of `e^X`, `X ~ N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalParams<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> LognormalParams<T> {
    pub fn new(mu: T, sigma: T) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < T::zero() {
            return Err(Error::invalid(
                "sigma_X",
                format!("lognormal needs finite mu and sigma >= 0, got ({mu}, {sigma})"),
            ));
        }
        Ok(Self { mu, sigma })
    }

    /// `(ln E[Z], ln E[Z²])`.
    pub fn log_moments(&self) -> (T, T) {
        let v = self.sigma * self.sigma;
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        (self.mu + half * v, two * self.mu + two * v)
    }

    /// `E[Z] = e^{mu + sigma²/2}`.
    pub fn mean(&self) -> T {
        self.log_moments().0.exp()
    }

    /// `E[Z²] = e^{2 mu + 2 sigma²}`.
    pub fn second_moment(&self) -> T {
        self.log_moments().1.exp()
    }

    /// `W = √(ln(M2 / M1²))`, evaluated from the log moments.
    pub fn log_std_from_moments(&self) -> T {
        let (l1, l2) = self.log_moments();
        (l2 - T::lit(2.0) * l1).max(T::zero()).sqrt()
    }

    /// Quantile of `Z` at probability `p`.
    pub fn quantile(&self, p: T) -> T {
        (self.mu + self.sigma * norm_inv_cdf(p)).exp()
    }
}

/// `E[Z]` for `Z ~ LogN(mu, sigma²)`.
pub fn lognormal_mean<T: Scalar>(p: &LognormalParams<T>) -> T {
    p.mean()
}

/// `E[Z²]` for `Z ~ LogN(mu, sigma²)`.
pub fn lognormal_second_moment<T: Scalar>(p: &LognormalParams<T>) -> T {
    p.second_moment()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `P ≈ θ + Z`.
    Positive,
    /// `P ≈ θ - Z`.
    Negative,
}

impl Orientation {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Orientation::Positive => T::one(),
            Orientation::Negative => -T::one(),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Orientation::Positive => 1,
            Orientation::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedLognormalFit<T> {
    pub theta: T,
    pub orientation: Orientation,
    pub log_params: LognormalParams<T>,
    /// Set when the sample skew was below threshold and a plain two-moment
    /// lognormal (`θ = 0`) was fitted.
    pub near_zero_skew: bool,
}

impl<T: Scalar> ShiftedLognormalFit<T> {
    /// Shift in the signed reading `Z_τ = τ + Z` (positive skew) or
    /// `Z_τ = -τ - Z` (negative skew): `τ = θ` or `τ = -θ`.
    pub fn tau(&self) -> T {
        self.orientation.sign::<T>() * self.theta
    }

    pub fn mean(&self) -> T {
        self.theta + self.orientation.sign::<T>() * self.log_params.mean()
    }

    pub fn m2(&self) -> T {
        let s2 = self.log_params.sigma * self.log_params.sigma;
        (T::lit(2.0) * self.log_params.mu + s2).exp() * s2.exp_m1()
    }

    pub fn m3(&self) -> T {
        let s2 = self.log_params.sigma * self.log_params.sigma;
        let u = s2.exp_m1();
        self.orientation.sign::<T>()
            * (T::lit(3.0) * self.log_params.mu + T::lit(1.5) * s2).exp()
            * u
            * u
            * (u + T::lit(3.0))
    }

    /// Analytic quantile of the fitted law at probability `p`.
    pub fn quantile(&self, p: T) -> T {
        match self.orientation {
            Orientation::Positive => self.theta + self.log_params.quantile(p),
            Orientation::Negative => self.theta - self.log_params.quantile(T::one() - p),
        }
    }
}

pub fn fit_shifted_lognormal<T: Scalar>(m: &SampleMoments<T>) -> Result<ShiftedLognormalFit<T>> {
    fit_shifted_lognormal_with(m, T::lit(DEFAULT_SKEW_THRESHOLD))
}

/// Method of moments: `σ_X² = ln η` from the absolute skewness,
/// `μ_X = ½ ln(m2 / (η (η - 1)))`, `θ = mean ∓ e^{μ_X + σ_X²/2}`.
pub fn fit_shifted_lognormal_with<T: Scalar>(
    m: &SampleMoments<T>,
    skew_threshold: T,
) -> Result<ShiftedLognormalFit<T>> {
    let skew = skewness(m)?;
    let half = T::lit(0.5);
    if skew.abs() < skew_threshold {
        if !(m.mean > T::zero()) {
            return Err(Error::Degenerate(format!(
                "near-zero skew fallback needs a positive mean, got {}",
                m.mean
            )));
        }
        let s2 = (m.m2 / (m.mean * m.mean)).ln_1p();
        return Ok(ShiftedLognormalFit {
            theta: T::zero(),
            orientation: Orientation::Positive,
            log_params: LognormalParams::new(m.mean.ln() - half * s2, s2.sqrt())?,
            near_zero_skew: true,
        });
    }
    let orientation = if skew > T::zero() {
        Orientation::Positive
    } else {
        Orientation::Negative
    };
    let u = solve_eta_minus_one(skew.abs());
    let s2 = u.ln_1p();
    let mu = half * (m.m2 / ((T::one() + u) * u)).ln();
    let log_params = LognormalParams::new(mu, s2.sqrt())?;
    Ok(ShiftedLognormalFit {
        theta: m.mean - orientation.sign::<T>() * log_params.mean(),
        orientation,
        log_params,
        near_zero_skew: false,
    })
}

/// Exponents `(X1, X2)` of a correlated lognormal pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLognormalSpec<T> {
    pub mu1: T,
    pub sigma1_sq: T,
    pub mu2: T,
    pub sigma2_sq: T,
    pub cov: T,
}

impl<T: Scalar> TwoLognormalSpec<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu1", self.mu1),
            ("sigma1_sq", self.sigma1_sq),
            ("mu2", self.mu2),
            ("sigma2_sq", self.sigma2_sq),
            ("cov", self.cov),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.sigma1_sq < T::zero() || self.sigma2_sq < T::zero() {
            return Err(Error::invalid("sigma_sq", "variances must be >= 0"));
        }
        let bound = self.sigma1_sq * self.sigma2_sq;
        if self.cov * self.cov > bound * T::lit(1.0 + 1e-10) + T::min_positive_value() {
            return Err(Error::invalid("cov", "covariance exceeds sigma1 * sigma2"));
        }
        Ok(())
    }

    /// `(ln E[Y], ln E[Y²])` for `Y = e^{X1} + e^{X2}`, straight from the
    /// lognormal product-moment formula.
    pub fn sum_log_moments(&self) -> (T, T) {
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let first = log_add_exp(
            self.mu1 + half * self.sigma1_sq,
            self.mu2 + half * self.sigma2_sq,
        );
        let cross = two.ln()
            + self.mu1
            + self.mu2
            + half * (self.sigma1_sq + self.sigma2_sq + two * self.cov);
        let second = log_add_exp(
            log_add_exp(two * self.mu1 + two * self.sigma1_sq, cross),
            two * self.mu2 + two * self.sigma2_sq,
        );
        (first, second)
    }
}

/// Lognormal `e^X` with the same first two moments as `e^{X1} + e^{X2}`.
///
/// `σ_X² = ln(E[Y²] / E[Y]²)` is evaluated as
/// `ln1p(Σ_ij w_i w_j (e^{Cov_ij} - 1))`, `w_i = E[e^{X_i}] / E[Y]`, which is
/// the same quantity without cancellation when `σ_X²` is tiny.
pub fn match_two_lognormal_sum<T: Scalar>(s: &TwoLognormalSpec<T>) -> Result<LognormalParams<T>> {
    s.validate()?;
    let half = T::lit(0.5);
    let a1 = s.mu1 + half * s.sigma1_sq;
    let a2 = s.mu2 + half * s.sigma2_sq;
    let log_mean = log_add_exp(a1, a2);
    let w1 = (a1 - log_mean).exp();
    let w2 = (a2 - log_mean).exp();
    let excess = w1 * w1 * s.sigma1_sq.exp_m1()
        + T::lit(2.0) * w1 * w2 * s.cov.exp_m1()
        + w2 * w2 * s.sigma2_sq.exp_m1();
    let var = excess.max(T::zero()).ln_1p();
    LognormalParams::new(log_mean - half * var, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn moments_of_small_samples() {
        let m = central_moments(&[1.0f64, 1.0, 1.0]).unwrap();
        assert_eq!((m.mean, m.m2, m.m3, m.n), (1.0, 0.0, 0.0, 3));
        assert!(skewness(&m).is_err());
        let m = central_moments(&[0.0f64, 2.0, 1.0]).unwrap();
        assert_eq!(m.mean, 1.0);
        assert!((m.m2 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.m3, 0.0);
        assert_eq!(skewness(&m).unwrap(), 0.0);
        assert!(central_moments(&[1.0f64, 2.0]).is_err());
        assert!(central_moments(&[1.0f64, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn skewness_formula() {
        let m = SampleMoments::<f64> {
            mean: 7.0,
            m2: 1.0,
            m3: 4.0,
            n: 10,
        };
        assert_eq!(skewness(&m).unwrap(), 4.0);
        let m = SampleMoments::<f64> {
            mean: 7.0,
            m2: 4.0,
            m3: -8.0,
            n: 10,
        };
        assert_eq!(skewness(&m).unwrap(), -1.0);
    }

    #[test]
    fn eta_exact_roots() {
        assert_eq!(solve_eta(0.0f64), 1.0);
        assert!((solve_eta(4.0f64) - 2.0).abs() < 1e-14);
        // bisection oracle on (η + 2)√(η − 1) = 0.1237 over [1, 2]
        let target = 0.1237f64;
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (mid + 2.0) * (mid - 1.0).sqrt() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((solve_eta(target) - lo).abs() < 1e-14);
        let eta = solve_eta(target);
        assert!(((eta + 2.0) * (eta - 1.0).sqrt() - target).abs() <= 1e-12 * (1.0 + target));
    }

    #[test]
    fn eta_small_skew_keeps_precision() {
        // u ≈ b²/9 for small b
        let u = solve_eta_minus_one(1e-6f64);
        assert!(rel(u, 1e-12 / 9.0) < 1e-6);
        let u = solve_eta_minus_one(1e-3f64);
        assert!(((u + 3.0) * u.sqrt() - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn lognormal_moment_formulas() {
        let p = LognormalParams::new(0.0, 0.0).unwrap();
        assert_eq!((p.mean(), p.second_moment()), (1.0, 1.0));
        let p = LognormalParams::new(4.838, 0.0431).unwrap();
        assert!(rel(lognormal_mean(&p), (4.838f64 + 0.000_928_805).exp()) < 1e-12);
        assert!(lognormal_second_moment(&p) >= lognormal_mean(&p).powi(2));
        assert!(LognormalParams::new(0.0, -1.0).is_err());
    }

    #[test]
    fn recovers_exact_shifted_law() {
        let truth = ShiftedLognormalFit::<f64> {
            theta: 50.0,
            orientation: Orientation::Positive,
            log_params: LognormalParams::new(4.0, 0.05).unwrap(),
            near_zero_skew: false,
        };
        let m = SampleMoments::<f64> {
            mean: truth.mean(),
            m2: truth.m2(),
            m3: truth.m3(),
            n: 1000,
        };
        let fit = fit_shifted_lognormal(&m).unwrap();
        assert_eq!(fit.orientation, Orientation::Positive);
        assert!((fit.theta - 50.0).abs() < 1e-9 * 50.0);
        assert!((fit.log_params.mu - 4.0).abs() < 1e-9);
        assert!((fit.log_params.sigma - 0.05).abs() < 1e-9);
        assert_eq!(fit.tau(), fit.theta);
    }

    #[test]
    fn negative_orientation_and_tau_mapping() {
        let truth = ShiftedLognormalFit::<f64> {
            theta: 121.46,
            orientation: Orientation::Negative,
            log_params: LognormalParams::new(3.069, 0.133).unwrap(),
            near_zero_skew: false,
        };
        let m = SampleMoments::<f64> {
            mean: truth.mean(),
            m2: truth.m2(),
            m3: truth.m3(),
            n: 1000,
        };
        assert!(skewness(&m).unwrap() < 0.0);
        let fit = fit_shifted_lognormal(&m).unwrap();
        assert_eq!(fit.orientation, Orientation::Negative);
        assert!((fit.theta - 121.46).abs() < 1e-9);
        assert!((fit.tau() + 121.46).abs() < 1e-9);
        assert!((fit.quantile(0.5) - (121.46 - 3.069f64.exp())).abs() < 1e-9);
    }

    #[test]
    fn near_zero_skew_falls_back_to_lognormal() {
        let m = SampleMoments::<f64> {
            mean: 100.0,
            m2: 25.0,
            m3: 1e-6,
            n: 1000,
        };
        let fit = fit_shifted_lognormal(&m).unwrap();
        assert!(fit.near_zero_skew);
        assert_eq!(fit.theta, 0.0);
        assert_eq!(fit.orientation, Orientation::Positive);
        assert!(rel(fit.mean(), 100.0) < 1e-12);
        assert!(rel(fit.m2(), 25.0) < 1e-12);
        let neg = SampleMoments::<f64> {
            mean: -1.0,
            m2: 25.0,
            m3: 0.0,
            n: 1000,
        };
        assert!(fit_shifted_lognormal(&neg).is_err());
        let flat = SampleMoments::<f64> {
            mean: 1.0,
            m2: 0.0,
            m3: 0.0,
            n: 1000,
        };
        assert!(matches!(
            fit_shifted_lognormal(&flat),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn two_lognormal_degenerate_cases() {
        let s = |mu1: f64, s1: f64, mu2: f64, s2: f64, cov: f64| TwoLognormalSpec {
            mu1,
            sigma1_sq: s1,
            mu2,
            sigma2_sq: s2,
            cov,
        };
        let p = match_two_lognormal_sum(&s(0.0, 0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!((p.mu - 2f64.ln()).abs() < 1e-15 && p.sigma == 0.0);
        let p = match_two_lognormal_sum(&s(0.0, 0.0, 3f64.ln(), 0.0, 0.0)).unwrap();
        assert!((p.mu - 4f64.ln()).abs() < 1e-15 && p.sigma == 0.0);
        let p = match_two_lognormal_sum(&s(0.0, 0.04, 0.0, 0.04, 0.04)).unwrap();
        assert!((p.mu - 2f64.ln()).abs() < 1e-14);
        assert!((p.sigma * p.sigma - 0.04).abs() < 1e-15);
        assert!(match_two_lognormal_sum(&s(0.0, 0.01, 0.0, 0.04, 0.05)).is_err());
        assert!(match_two_lognormal_sum(&s(0.0, -0.01, 0.0, 0.04, 0.0)).is_err());
    }

    fn spec_strategy() -> impl Strategy<Value = TwoLognormalSpec<f64>> {
        (
            -10.0..10.0f64,
            0.0..3.0f64,
            -10.0..10.0f64,
            0.0..3.0f64,
            -1.0..1.0f64,
        )
            .prop_map(|(mu1, s1, mu2, s2, rho)| TwoLognormalSpec {
                mu1,
                sigma1_sq: s1 * s1,
                mu2,
                sigma2_sq: s2 * s2,
                cov: rho * s1 * s2,
            })
    }

    proptest! {
        #[test]
        fn eta_round_trip(b in 0.0..100.0f64) {
            let eta = solve_eta(b);
            prop_assert!(eta >= 1.0);
            prop_assert!(((eta + 2.0) * (eta - 1.0).sqrt() - b).abs() <= 1e-12 * (1.0 + b));
        }

        #[test]
        fn w_equals_sigma(mu in -20.0..20.0f64, sigma in 0.0..3.0f64) {
            let p = LognormalParams::new(mu, sigma).unwrap();
            prop_assert!((p.log_std_from_moments() - sigma).abs() <= 1e-6 * sigma.max(1e-3));
        }

        #[test]
        fn shifted_fit_plug_back(
            mean in 50.0..150.0f64,
            sd in 0.1..20.0f64,
            skew in prop_oneof![-3.0..-1e-3f64, 1e-3..3.0f64],
        ) {
            let m = SampleMoments::<f64> { mean, m2: sd * sd, m3: skew * sd * sd * sd, n: 100 };
            let fit = fit_shifted_lognormal(&m).unwrap();
            prop_assert!(rel(fit.mean(), mean) <= 1e-9);
            prop_assert!(rel(fit.m2(), m.m2) <= 1e-9);
            prop_assert!(rel(fit.m3(), m.m3) <= 1e-9);
        }

        #[test]
        fn two_lognormal_plug_back(s in spec_strategy()) {
            let p = match_two_lognormal_sum(&s).unwrap();
            let (l1, l2) = s.sum_log_moments();
            prop_assert!(rel(p.mean(), l1.exp()) <= 1e-12);
            prop_assert!(rel(p.second_moment(), l2.exp()) <= 1e-12);
            prop_assert!(p.sigma >= 0.0);
        }

        #[test]
        fn scale_equivariance(a in 0.1..10.0f64, skew in 0.05..2.0f64) {
            let m = SampleMoments::<f64> { mean: 100.0, m2: 16.0, m3: skew * 64.0, n: 100 };
            let scaled = SampleMoments::<f64> { mean: a * m.mean, m2: a * a * m.m2, m3: a * a * a * m.m3, n: 100 };
            let f = fit_shifted_lognormal(&m).unwrap();
            let g = fit_shifted_lognormal(&scaled).unwrap();
            prop_assert!((g.theta - a * f.theta).abs() <= 1e-9 * (a * f.theta).abs().max(1.0));
            prop_assert!((g.log_params.mu - (f.log_params.mu + a.ln())).abs() <= 1e-12);
            prop_assert!((g.log_params.sigma - f.log_params.sigma).abs() <= 1e-12);
        }
    }
}
