//! Logistic-duration price model and the normal terminal rate law.
//!
//! Duration is `D(r) = L + U / (1 + e^{-C (r - x0)})` and the price solving
//! `dP = -D P dr` is `P(r) = k e^{-L r} (1 + e^{C (r - x0)})^{-U/C}`, with the
//! level `k` calibrated so that `P(r0) = P0`. Everything is evaluated in log
//! space: large curvatures push `e^{C (r - x0)}` out of range.

use crate::error::{Error, Result};
use crate::special::log1pexp;
use crate::Scalar;

fn finite<T: Scalar>(name: &'static str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationParams<T> {
    /// Lower bound of the duration curve.
    pub lower: T,
    /// Height of the transition; duration tends to `lower + upper` for high rates.
    pub upper: T,
    pub curvature: T,
    /// Coupon rate, the midpoint of the logistic transition.
    pub coupon: T,
}

impl<T: Scalar> DurationParams<T> {
    pub fn new(lower: T, upper: T, curvature: T, coupon: T) -> Result<Self> {
        let p = Self {
            lower,
            upper,
            curvature,
            coupon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        finite("L", self.lower)?;
        finite("U", self.upper)?;
        finite("C", self.curvature)?;
        finite("x0", self.coupon)?;
        if self.lower < T::zero() {
            return Err(Error::invalid("L", "duration lower bound must be >= 0"));
        }
        if self.upper <= T::zero() {
            return Err(Error::invalid("U", "duration range must be > 0"));
        }
        if self.curvature <= T::zero() {
            return Err(Error::invalid("C", "curvature must be > 0"));
        }
        Ok(())
    }

    /// `U / C`, the exponent of the logistic factor.
    #[inline]
    pub fn range_over_curvature(&self) -> T {
        self.upper / self.curvature
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState<T> {
    /// Current spot price `P0`.
    pub spot_price: T,
    /// Current mortgage rate `r0`.
    pub rate: T,
}

impl<T: Scalar> MarketState<T> {
    pub fn new(spot_price: T, rate: T) -> Result<Self> {
        let m = Self { spot_price, rate };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        finite("P0", self.spot_price)?;
        finite("r0", self.rate)?;
        if self.spot_price <= T::zero() {
            return Err(Error::invalid("P0", "spot price must be > 0"));
        }
        Ok(())
    }
}

/// Drift and volatility of `dr = mu dt + sigma dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDynamics<T> {
    pub drift: T,
    pub volatility: T,
}

impl<T: Scalar> RateDynamics<T> {
    pub fn new(drift: T, volatility: T) -> Result<Self> {
        let d = Self { drift, volatility };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        finite("mu", self.drift)?;
        finite("sigma", self.volatility)?;
        if self.volatility <= T::zero() {
            return Err(Error::invalid("sigma", "rate volatility must be > 0"));
        }
        Ok(())
    }
}

/// European call on the pass-through price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionContract<T> {
    pub strike: T,
    /// Time to expiry as a year fraction.
    pub expiry: T,
    /// Continuously compounded risk-free rate.
    pub risk_free: T,
}

impl<T: Scalar> OptionContract<T> {
    pub fn new(strike: T, expiry: T, risk_free: T) -> Result<Self> {
        let c = Self {
            strike,
            expiry,
            risk_free,
        };
        c.validate()?;
        Ok(c)
    }

    /// A zero strike is accepted: the payoff is then the underlier itself.
    pub fn validate(&self) -> Result<()> {
        finite("K", self.strike)?;
        finite("T", self.expiry)?;
        finite("r_f", self.risk_free)?;
        if self.strike < T::zero() {
            return Err(Error::invalid("K", "strike must be >= 0"));
        }
        if self.expiry <= T::zero() {
            return Err(Error::invalid("T", "expiry must be > 0"));
        }
        Ok(())
    }

    /// `e^{-r_f T}`.
    pub fn discount_factor(&self) -> T {
        (-self.risk_free * self.expiry).exp()
    }
}

/// Calibrated price model. The level is held as `ln k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec<T> {
    pub duration: DurationParams<T>,
    pub market: MarketState<T>,
    log_level: T,
}

impl<T: Scalar> ModelSpec<T> {
    /// Validates both parameter blocks and calibrates `k` to `P(r0) = P0`.
    pub fn new(duration: DurationParams<T>, market: MarketState<T>) -> Result<Self> {
        duration.validate()?;
        market.validate()?;
        Ok(Self {
            duration,
            market,
            log_level: log_level(&duration, &market),
        })
    }

    /// Same curve, recalibrated to another spot price.
    pub fn with_spot_price(&self, spot_price: T) -> Result<Self> {
        Self::new(
            self.duration,
            MarketState::new(spot_price, self.market.rate)?,
        )
    }

    pub fn log_level(&self) -> T {
        self.log_level
    }

    /// `k`; overflows to `+inf` for extreme `U/C` but `ln k` stays exact.
    pub fn level(&self) -> T {
        self.log_level.exp()
    }

    pub fn log_price(&self, rate: T) -> T {
        let d = &self.duration;
        self.log_level
            - d.lower * rate
            - d.range_over_curvature() * log1pexp(d.curvature * (rate - d.coupon))
    }

    pub fn price(&self, rate: T) -> T {
        self.log_price(rate).exp()
    }

    pub fn duration_at(&self, rate: T) -> T {
        duration(&self.duration, rate)
    }
}

/// `D(r) = L + U / (1 + e^{-C (r - x0)})`.
pub fn duration<T: Scalar>(p: &DurationParams<T>, rate: T) -> T {
    let z = -p.curvature * (rate - p.coupon);
    // 1/(1+e^z) = e^{-softplus(z)}; stays finite for any z
    p.lower + p.upper * (-log1pexp(z)).exp()
}

fn log_level<T: Scalar>(d: &DurationParams<T>, m: &MarketState<T>) -> T {
    m.spot_price.ln()
        + d.lower * m.rate
        + d.range_over_curvature() * log1pexp(d.curvature * (m.rate - d.coupon))
}

/// `k = P0 e^{L r0} (1 + e^{C (r0 - x0)})^{U/C}`.
pub fn calibrate_level<T: Scalar>(d: &DurationParams<T>, m: &MarketState<T>) -> Result<T> {
    d.validate()?;
    m.validate()?;
    Ok(log_level(d, m).exp())
}

pub fn price<T: Scalar>(spec: &ModelSpec<T>, rate: T) -> T {
    spec.price(rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalLaw<T> {
    pub mean: T,
    pub std: T,
}

/// `r_T ~ N(r0 + mu T, sigma^2 T)`.
pub fn terminal_rate_law<T: Scalar>(
    market: &MarketState<T>,
    dynamics: &RateDynamics<T>,
    expiry: T,
) -> Result<NormalLaw<T>> {
    if !(expiry > T::zero()) {
        return Err(Error::invalid("T", "expiry must be > 0"));
    }
    Ok(NormalLaw {
        mean: market.rate + dynamics.drift * expiry,
        std: dynamics.volatility * expiry.sqrt(),
    })
}

/// Mean and second/third central moments of `P(r_T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalMoments<T> {
    pub mean: T,
    pub m2: T,
    pub m3: T,
}

impl<T: Scalar> TerminalMoments<T> {
    pub fn skewness(&self) -> T {
        self.m3 / self.m2.powf(T::lit(1.5))
    }
}

/// Moments of the terminal price by trapezoidal quadrature over the normal
/// rate law on `[-12, 12]` standard deviations (step 0.005). The integrand is
/// smooth and Gaussian-damped, so the rule converges geometrically.
pub fn terminal_price_moments<T: Scalar>(
    spec: &ModelSpec<T>,
    law: &NormalLaw<T>,
) -> TerminalMoments<T> {
    const STEPS: i32 = 4800;
    let h = 24.0 / STEPS as f64;
    let nodes: Vec<(f64, T)> = (0..=STEPS)
        .map(|i| {
            let z = -12.0 + i as f64 * h;
            let w = crate::special::norm_pdf_f64(z) * h;
            (w, spec.price(law.mean + law.std * T::lit(z)))
        })
        .collect();
    let mean: f64 = nodes.iter().map(|(w, p)| w * p.as_f64()).sum();
    let (m2, m3) = nodes.iter().fold((0.0, 0.0), |(a, b), (w, p)| {
        let d = p.as_f64() - mean;
        (a + w * d * d, b + w * d * d * d)
    });
    TerminalMoments {
        mean: T::lit(mean),
        m2: T::lit(m2),
        m3: T::lit(m3),
    }
}
