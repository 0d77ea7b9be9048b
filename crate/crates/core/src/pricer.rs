//! Closed-form engines: the shifted Black-Scholes kernel, pricing from a
//! fitted shifted lognormal, and the parametric lognormal law of the
//! terminal price with its delta and gamma in `P0`.

use crate::distfit::{
    central_moments, fit_shifted_lognormal, match_two_lognormal_sum, Orientation, SampleMoments,
    ShiftedLognormalFit, TwoLognormalSpec,
};
use crate::error::{Error, Result};
use crate::mc::{simulate_terminal_prices, McConfig, McResult};
use crate::model::{
    terminal_price_moments, terminal_rate_law, ModelSpec, OptionContract, RateDynamics,
};
use crate::special::{norm_cdf, norm_pdf};
use crate::Scalar;

/// Smallest sample `price_sln` will fit.
pub const MIN_FIT_SAMPLE: usize = 1000;

/// Inputs of `df · E[(Z - K_eff)^+]` (or the put) for `Z` lognormal with
/// mean `forward_mean` and log-std `log_std`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsKernelInputs<T> {
    pub forward_mean: T,
    pub log_std: T,
    pub strike: T,
    pub discount: T,
}

impl<T: Scalar> BsKernelInputs<T> {
    fn validate(&self) -> Result<()> {
        if !(self.forward_mean > T::zero() && self.forward_mean.is_finite()) {
            return Err(Error::invalid(
                "M1",
                format!("forward mean must be > 0, got {}", self.forward_mean),
            ));
        }
        if !(self.log_std >= T::zero() && self.log_std.is_finite()) {
            return Err(Error::invalid(
                "W",
                format!("log-std must be >= 0, got {}", self.log_std),
            ));
        }
        if !(self.discount > T::zero() && self.discount.is_finite()) {
            return Err(Error::invalid("df", "discount factor must be > 0"));
        }
        if !self.strike.is_finite() {
            return Err(Error::invalid("K_eff", "effective strike must be finite"));
        }
        Ok(())
    }

    /// `(d1, d2)`; only meaningful for `strike > 0` and `log_std > 0`.
    pub fn d1_d2(&self) -> (T, T) {
        let w = self.log_std;
        let d1 = ((self.forward_mean / self.strike).ln() + T::lit(0.5) * w * w) / w;
        (d1, d1 - w)
    }
}

/// Call on the lognormal underlier. `K_eff <= 0` is exercised with
/// certainty; `W = 0` is the intrinsic value.
pub fn bs_call<T: Scalar>(inp: &BsKernelInputs<T>) -> Result<T> {
    inp.validate()?;
    let (m1, k, df) = (inp.forward_mean, inp.strike, inp.discount);
    if k <= T::zero() {
        return Ok(df * (m1 - k));
    }
    if inp.log_std == T::zero() {
        return Ok(df * (m1 - k).max(T::zero()));
    }
    let (d1, d2) = inp.d1_d2();
    Ok((df * (m1 * norm_cdf(d1) - k * norm_cdf(d2))).max(T::zero()))
}

/// Put on the lognormal underlier. `K_eff <= 0` is worthless.
pub fn bs_put<T: Scalar>(inp: &BsKernelInputs<T>) -> Result<T> {
    inp.validate()?;
    let (m1, k, df) = (inp.forward_mean, inp.strike, inp.discount);
    if k <= T::zero() {
        return Ok(T::zero());
    }
    if inp.log_std == T::zero() {
        return Ok(df * (k - m1).max(T::zero()));
    }
    let (d1, d2) = inp.d1_d2();
    Ok((df * (k * norm_cdf(-d2) - m1 * norm_cdf(-d1))).max(T::zero()))
}

/// `P(r_T) ≈ LogN(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalLognormalLaw<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> TerminalLognormalLaw<T> {
    /// `E[P(r_T)] = e^{mu + sigma²/2}`.
    pub fn mean(&self) -> T {
        (self.mu + T::lit(0.5) * self.sigma * self.sigma).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sln,
    Ln,
    Mc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sln => "SLN",
            Method::Ln => "LN",
            Method::Mc => "MC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diagnostics<T> {
    ShiftedLognormal {
        fit: ShiftedLognormalFit<T>,
        moments: SampleMoments<T>,
    },
    Lognormal(TerminalLognormalLaw<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceResult<T> {
    pub price: T,
    pub method: Method,
    pub std_error: Option<T>,
    pub n: Option<usize>,
    pub diagnostics: Option<Diagnostics<T>>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> From<McResult<T>> for PriceResult<T> {
    fn from(r: McResult<T>) -> Self {
        Self {
            price: r.price,
            method: Method::Mc,
            std_error: Some(r.std_error),
            n: Some(r.n),
            diagnostics: None,
            warnings: Vec::new(),
        }
    }
}

/// Call with strike `strike` on a fitted shifted lognormal: a call struck at
/// `K - θ` for `θ + Z`, a put struck at `θ - K` for `θ - Z`.
pub fn price_shifted_lognormal<T: Scalar>(
    fit: &ShiftedLognormalFit<T>,
    strike: T,
    discount: T,
) -> Result<T> {
    let forward_mean = fit.log_params.mean();
    let log_std = fit.log_params.log_std_from_moments();
    match fit.orientation {
        Orientation::Positive => bs_call(&BsKernelInputs {
            forward_mean,
            log_std,
            strike: strike - fit.theta,
            discount,
        }),
        Orientation::Negative => bs_put(&BsKernelInputs {
            forward_mean,
            log_std,
            strike: fit.theta - strike,
            discount,
        }),
    }
}

/// Shifted-lognormal approximation: simulate `P(r_T)` with `sample`, match
/// three moments, and price through the shifted kernel.
pub fn price_sln<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    contract: &OptionContract<T>,
    sample: &McConfig,
) -> Result<PriceResult<T>> {
    contract.validate()?;
    if sample.n < MIN_FIT_SAMPLE {
        return Err(Error::invalid(
            "n",
            format!("shifted-lognormal fit needs at least {MIN_FIT_SAMPLE} draws"),
        ));
    }
    let prices = simulate_terminal_prices(spec, dynamics, contract.expiry, sample)?;
    let moments = central_moments(&prices)?;
    let fit = fit_shifted_lognormal(&moments)?;
    let price = price_shifted_lognormal(&fit, contract.strike, contract.discount_factor())?;
    Ok(PriceResult {
        price,
        method: Method::Sln,
        std_error: None,
        n: Some(sample.n),
        diagnostics: Some(Diagnostics::ShiftedLognormal { fit, moments }),
        warnings: Vec::new(),
    })
}

/// Exponents of `(P(r_T)/k)^{-C/U} = e^{X1} + e^{X2}` with
/// `X1 = (LC/U) r_T` and `X2 = C (L/U + 1) r_T - C x0`.
pub fn terminal_exponent_spec<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    expiry: T,
) -> Result<TwoLognormalSpec<T>> {
    let law = terminal_rate_law(&spec.market, dynamics, expiry)?;
    let d = &spec.duration;
    let a = d.lower * d.curvature / d.upper;
    let b = d.curvature * (d.lower / d.upper + T::one());
    let var = law.std * law.std;
    Ok(TwoLognormalSpec {
        mu1: a * law.mean,
        sigma1_sq: a * a * var,
        mu2: b * law.mean - d.curvature * d.coupon,
        sigma2_sq: b * b * var,
        cov: a * b * var,
    })
}

/// Parametric lognormal law of `P(r_T)`:
/// `mu_P = -(U/C) mu_X + ln k`, `sigma_P = (U/C) sigma_X`, where
/// `(mu_X, sigma_X)` matches the two-lognormal sum above.
pub fn ln_terminal_params<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    expiry: T,
) -> Result<TerminalLognormalLaw<T>> {
    let sum = terminal_exponent_spec(spec, dynamics, expiry)?;
    let x = match_two_lognormal_sum(&sum)?;
    let power = spec.duration.range_over_curvature();
    Ok(TerminalLognormalLaw {
        mu: -power * x.mu + spec.log_level(),
        sigma: power * x.sigma,
    })
}

fn ln_kernel<T: Scalar>(
    law: &TerminalLognormalLaw<T>,
    contract: &OptionContract<T>,
) -> BsKernelInputs<T> {
    BsKernelInputs {
        forward_mean: law.mean(),
        log_std: law.sigma,
        strike: contract.strike,
        discount: contract.discount_factor(),
    }
}

/// Skewness of `P(r_T)` by quadrature; the parametric lognormal assumes it
/// is positive.
pub fn terminal_skew_proxy<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    expiry: T,
) -> Result<T> {
    let law = terminal_rate_law(&spec.market, dynamics, expiry)?;
    Ok(terminal_price_moments(spec, &law).skewness())
}

/// Parametric lognormal price. Computed for any curvature; a warning is
/// attached when the terminal price is not positively skewed.
pub fn price_ln<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    contract: &OptionContract<T>,
) -> Result<PriceResult<T>> {
    contract.validate()?;
    let law = ln_terminal_params(spec, dynamics, contract.expiry)?;
    let price = bs_call(&ln_kernel(&law, contract))?;
    let mut warnings = Vec::new();
    let skew = terminal_skew_proxy(spec, dynamics, contract.expiry)?;
    if !(skew > T::zero()) {
        warnings.push(format!(
            "lognormal approximation assumes positive skew; terminal price skewness is {:.4}",
            skew.as_f64()
        ));
    }
    Ok(PriceResult {
        price,
        method: Method::Ln,
        std_error: None,
        n: None,
        diagnostics: Some(Diagnostics::Lognormal(law)),
        warnings,
    })
}

/// Delta and gamma in `P0` of the parametric lognormal price, plus the
/// `df · M1 / P0` ceiling on delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnGreeks<T> {
    pub delta: T,
    pub gamma: T,
    pub delta_upper_bound: T,
}

/// `mu_X, sigma_X` do not depend on `P0` and `k` is linear in it, so `M1`
/// scales with `P0` and the Black-Scholes spot Greeks apply with `S = P0`.
pub fn ln_greeks<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    contract: &OptionContract<T>,
) -> Result<LnGreeks<T>> {
    contract.validate()?;
    let law = ln_terminal_params(spec, dynamics, contract.expiry)?;
    let kernel = ln_kernel(&law, contract);
    let p0 = spec.market.spot_price;
    let scale = kernel.discount * kernel.forward_mean;
    let upper = scale / p0;
    if contract.strike <= T::zero() {
        return Ok(LnGreeks {
            delta: upper,
            gamma: T::zero(),
            delta_upper_bound: upper,
        });
    }
    if law.sigma == T::zero() {
        let itm = if kernel.forward_mean > contract.strike {
            T::one()
        } else {
            T::zero()
        };
        return Ok(LnGreeks {
            delta: upper * itm,
            gamma: T::zero(),
            delta_upper_bound: upper,
        });
    }
    let (d1, _) = kernel.d1_d2();
    Ok(LnGreeks {
        delta: scale * norm_cdf(d1) / p0,
        gamma: scale * norm_pdf(d1) / (p0 * p0 * law.sigma),
        delta_upper_bound: upper,
    })
}

pub fn delta_ln<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    contract: &OptionContract<T>,
) -> Result<T> {
    Ok(ln_greeks(spec, dynamics, contract)?.delta)
}

pub fn gamma_ln<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    contract: &OptionContract<T>,
) -> Result<T> {
    Ok(ln_greeks(spec, dynamics, contract)?.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distfit::LognormalParams;
    use crate::model::{DurationParams, MarketState};
    use proptest::prelude::*;

    fn kernel(m1: f64, w: f64, k: f64, df: f64) -> BsKernelInputs<f64> {
        BsKernelInputs {
            forward_mean: m1,
            log_std: w,
            strike: k,
            discount: df,
        }
    }

    fn spec(c: f64) -> ModelSpec<f64> {
        ModelSpec::new(
            DurationParams::new(1.0, 9.0, c, 0.055).unwrap(),
            MarketState::new(100.0, 0.01).unwrap(),
        )
        .unwrap()
    }

    fn contract(k: f64) -> OptionContract<f64> {
        OptionContract::new(k, 0.25, 0.0209).unwrap()
    }

    #[test]
    fn kernel_reference_values() {
        assert_eq!(bs_call(&kernel(100.0, 0.0, 100.0, 1.0)).unwrap(), 0.0);
        assert!(bs_call(&kernel(100.0, 1e-12, 100.0, 1.0)).unwrap() < 1e-9);
        // 100 * (N(0.1) - N(-0.1))
        let atm = 7.965_567_455_405_798;
        assert!((bs_call(&kernel(100.0, 0.2, 100.0, 1.0)).unwrap() - atm).abs() < 1e-12);
        assert!((bs_put(&kernel(100.0, 0.2, 100.0, 1.0)).unwrap() - atm).abs() < 1e-12);
        assert!((bs_call(&kernel(100.0, 0.2, -5.0, 0.99)).unwrap() - 103.95).abs() < 1e-12);
        assert_eq!(bs_put(&kernel(100.0, 0.2, -1.0, 0.99)).unwrap(), 0.0);
        assert_eq!(bs_put(&kernel(100.0, 0.0, 120.0, 0.5)).unwrap(), 10.0);
        assert!(bs_call(&kernel(0.0, 0.2, 100.0, 1.0)).is_err());
        assert!(bs_call(&kernel(100.0, -0.2, 100.0, 1.0)).is_err());
    }

    #[test]
    fn exponent_spec_is_comonotone() {
        let s = terminal_exponent_spec(&spec(3.0), &RateDynamics::new(0.0, 0.02).unwrap(), 0.25)
            .unwrap();
        assert!((s.cov - (s.sigma1_sq * s.sigma2_sq).sqrt()).abs() < 1e-18);
        assert!((s.mu1 - 3.0 / 9.0 * 0.01).abs() < 1e-16);
        assert!((s.mu2 - (3.0 * (1.0 / 9.0 + 1.0) * 0.01 - 3.0 * 0.055)).abs() < 1e-16);
    }

    #[test]
    fn ln_params_default_curve() {
        // step-by-step evaluation of the matching formulas in numpy, C = 3
        let law =
            ln_terminal_params(&spec(3.0), &RateDynamics::new(0.0, 0.02).unwrap(), 0.25).unwrap();
        assert!((law.mu - 4.604_834_458_076_908).abs() < 1e-10, "{}", law.mu);
        assert!(
            (law.sigma - 0.051_987_417_744_820_29).abs() < 1e-10,
            "{}",
            law.sigma
        );
    }

    #[test]
    fn ln_deterministic_limit() {
        let s = spec(3.0);
        let d = RateDynamics::new(0.04, 1e-10).unwrap();
        let law = ln_terminal_params(&s, &d, 0.25).unwrap();
        assert!(law.sigma > 0.0 && law.sigma < 1e-8);
        assert!((law.mu.exp() / s.price(0.02) - 1.0).abs() < 1e-6);
        let d = RateDynamics::new(0.0, 1e-8).unwrap();
        // at the money the residual time value is O(sigma_P)
        assert!(price_ln(&s, &d, &contract(100.0)).unwrap().price < 1e-5);
        assert_eq!(price_ln(&s, &d, &contract(101.0)).unwrap().price, 0.0);
        let itm = price_ln(&s, &d, &contract(95.0)).unwrap().price;
        assert!((itm - contract(95.0).discount_factor() * 5.0).abs() < 1e-6);
    }

    #[test]
    fn regime_warning_only_for_negative_skew() {
        let d = RateDynamics::new(0.0, 0.02).unwrap();
        assert!(price_ln(&spec(3.0), &d, &contract(100.0))
            .unwrap()
            .warnings
            .is_empty());
        assert_eq!(
            price_ln(&spec(30.0), &d, &contract(100.0))
                .unwrap()
                .warnings
                .len(),
            1
        );
    }

    #[test]
    fn sln_kernel_dispatch() {
        let fit = ShiftedLognormalFit {
            theta: 120.0,
            orientation: Orientation::Negative,
            log_params: LognormalParams::new(3.0, 0.1).unwrap(),
            near_zero_skew: false,
        };
        let p = price_shifted_lognormal(&fit, 100.0, 1.0).unwrap();
        let direct = bs_put(&kernel(fit.log_params.mean(), 0.1, 20.0, 1.0)).unwrap();
        assert!((p - direct).abs() < 1e-12);
        // strike above θ: θ - Z < K always
        assert_eq!(price_shifted_lognormal(&fit, 125.0, 1.0).unwrap(), 0.0);
        let pos = ShiftedLognormalFit {
            theta: -20.0,
            orientation: Orientation::Positive,
            ..fit
        };
        // K - θ = 120
        let direct = bs_call(&kernel(fit.log_params.mean(), 0.1, 120.0, 1.0)).unwrap();
        assert!((price_shifted_lognormal(&pos, 100.0, 1.0).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn sln_rejects_small_samples() {
        let d = RateDynamics::new(0.0, 0.02).unwrap();
        let cfg = McConfig::default().with_paths(999);
        assert!(price_sln(&spec(3.0), &d, &contract(100.0), &cfg).is_err());
    }

    #[test]
    fn strike_monotone_and_convex() {
        let d = RateDynamics::new(0.0, 0.02).unwrap();
        let cfg = McConfig::default().with_paths(20_000);
        for c in [0.5, 3.0, 30.0] {
            let s = spec(c);
            let r = price_sln(&s, &d, &contract(100.0), &cfg).unwrap();
            let Some(Diagnostics::ShiftedLognormal { fit, .. }) = r.diagnostics else {
                panic!()
            };
            let df = contract(100.0).discount_factor();
            let sln: Vec<f64> = (90..=110)
                .map(|k| price_shifted_lognormal(&fit, k as f64, df).unwrap())
                .collect();
            let ln: Vec<f64> = (90..=110)
                .map(|k| price_ln(&s, &d, &contract(k as f64)).unwrap().price)
                .collect();
            for xs in [&sln, &ln] {
                for w in xs.windows(3) {
                    assert!(w[1] <= w[0] && w[2] <= w[1]);
                    assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-10);
                }
            }
        }
    }

    #[test]
    fn greeks_match_finite_differences_at_defaults() {
        let s = spec(3.0);
        let d = RateDynamics::new(0.0, 0.02).unwrap();
        let c = contract(100.0);
        let g = ln_greeks(&s, &d, &c).unwrap();
        let at = |p0: f64| {
            price_ln(&s.with_spot_price(p0).unwrap(), &d, &c)
                .unwrap()
                .price
        };
        let h = 0.1;
        let fd_delta = (at(100.0 + h) - at(100.0 - h)) / (2.0 * h);
        let fd_gamma = (at(100.0 + h) - 2.0 * at(100.0) + at(100.0 - h)) / (h * h);
        assert!((fd_delta / g.delta - 1.0).abs() < 1e-5);
        assert!((fd_gamma / g.gamma - 1.0).abs() < 1e-3);
        assert!(g.delta > 0.0 && g.delta < g.delta_upper_bound && g.gamma > 0.0);
    }

    proptest! {
        #[test]
        fn put_call_parity(m1 in 1.0..200.0f64, w in 0.0..1.5f64, k in -50.0..300.0f64, df in 0.5..1.0f64) {
            let inp = kernel(m1, w, k, df);
            let lhs = bs_call(&inp).unwrap() - bs_put(&inp).unwrap();
            prop_assert!((lhs - df * (m1 - k)).abs() <= 1e-12 * m1.max(k.abs()).max(1.0) * 10.0);
        }

        #[test]
        fn discount_scales_linearly(m1 in 1.0..200.0f64, w in 0.01..1.0f64, k in 1.0..300.0f64, lambda in 0.1..1.0f64) {
            let a = bs_call(&kernel(m1, w, k, 1.0)).unwrap();
            let b = bs_call(&kernel(m1, w, k, lambda)).unwrap();
            prop_assert!((b - lambda * a).abs() <= 1e-13 * m1);
        }

        #[test]
        fn density_ratio_identity(m1 in 1.0..200.0f64, w in 0.1..1.0f64, moneyness in 0.5..2.0f64) {
            let k = m1 * moneyness;
            let (d1, d2) = kernel(m1, w, k, 1.0).d1_d2();
            let lhs = (norm_pdf(d1) / norm_pdf(d2)).ln();
            prop_assert!((lhs + (m1 / k).ln()).abs() <= 1e-12);
            prop_assert!((0.5 * (d2 * d2 - d1 * d1) + (m1 / k).ln()).abs() <= 1e-12);
        }
    }
}
