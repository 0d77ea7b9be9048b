//! Seeded Monte Carlo reference pricer.
//!
//! The terminal rate is the only state variable, so a run draws `n` normal
//! variates, maps them to rates and prices, and averages discounted payoffs.
//! Results are bit-identical for a given `(inputs, seed, n)` whatever the
//! worker count: shards are generated independently and reduced in order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{terminal_rate_law, ModelSpec, OptionContract, RateDynamics};
use crate::rng::{shard_normals, SHARD_SIZE};
use crate::Scalar;

/// Seed used when none is supplied anywhere.
pub const DEFAULT_SEED: u64 = 20_170_101;
pub const DEFAULT_PATHS: usize = 70_000;
/// Absolute bump on `P0` for the finite-difference delta (1 bp of par).
pub const DEFAULT_BUMP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
    pub bump: f64,
    /// Thread count; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_PATHS,
            seed: DEFAULT_SEED,
            bump: DEFAULT_BUMP,
            workers: None,
        }
    }
}

impl McConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_paths(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invalid("n", "sample count must be >= 1"));
        }
        if !(self.bump > 0.0 && self.bump.is_finite()) {
            return Err(Error::invalid("bump", "delta bump must be > 0"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers", "worker count must be >= 1"));
        }
        Ok(())
    }

    pub(crate) fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match self.workers {
            Some(w) => rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .expect("thread pool")
                .install(f),
            None => f(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult<T> {
    pub price: T,
    /// Sample standard deviation of discounted payoffs over `√n`.
    pub std_error: T,
    pub n: usize,
}

/// `n` standard normal draws for `cfg`, in index order.
pub fn standard_normals(cfg: &McConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let shards = cfg.n.div_ceil(SHARD_SIZE);
    let n = cfg.n;
    let seed = cfg.seed;
    Ok(cfg.run(|| {
        (0..shards)
            .into_par_iter()
            .map(|s| shard_normals(seed, s, SHARD_SIZE.min(n - s * SHARD_SIZE)))
            .flatten_iter()
            .collect()
    }))
}

/// i.i.d. draws of `r_T ~ N(r0 + mu T, sigma² T)`.
pub fn simulate_terminal_rates<T: Scalar>(
    market: &crate::model::MarketState<T>,
    dynamics: &RateDynamics<T>,
    expiry: T,
    cfg: &McConfig,
) -> Result<Vec<T>> {
    dynamics.validate()?;
    let law = terminal_rate_law(market, dynamics, expiry)?;
    Ok(standard_normals(cfg)?
        .into_iter()
        .map(|z| law.mean + law.std * T::lit(z))
        .collect())
}

/// `P(r_T)` for each simulated terminal rate.
pub fn simulate_terminal_prices<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    expiry: T,
    cfg: &McConfig,
) -> Result<Vec<T>> {
    let rates = simulate_terminal_rates(&spec.market, dynamics, expiry, cfg)?;
    Ok(cfg.run(|| rates.par_iter().map(|&r| spec.price(r)).collect()))
}

/// Running mean and sum of squared deviations (Chan et al. combination).
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    ss: f64,
}

impl Moments {
    fn of(xs: impl Iterator<Item = f64>) -> Self {
        xs.fold(Self::default(), |mut acc, x| {
            acc.n += 1.0;
            let d = x - acc.mean;
            acc.mean += d / acc.n;
            acc.ss += d * (x - acc.mean);
            acc
        })
    }

    fn merge(self, o: Self) -> Self {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Self {
            n,
            mean: self.mean + d * o.n / n,
            ss: self.ss + o.ss + d * d * self.n * o.n / n,
        }
    }
}

/// Discounted call payoff statistics over a terminal price sample. The
/// reduction runs over fixed shards in index order.
pub fn payoff_statistics<T: Scalar>(prices: &[T], strike: T, discount: T) -> McResult<T> {
    let df = discount.as_f64();
    let k = strike.as_f64();
    let parts: Vec<Moments> = prices
        .par_chunks(SHARD_SIZE)
        .map(|chunk| Moments::of(chunk.iter().map(|p| df * (p.as_f64() - k).max(0.0))))
        .collect();
    let m = parts.into_iter().fold(Moments::default(), Moments::merge);
    let n = prices.len();
    let std_error = if n > 1 {
        (m.ss / (m.n - 1.0)).sqrt() / m.n.sqrt()
    } else {
        0.0
    };
    McResult {
        price: T::lit(m.mean),
        std_error: T::lit(std_error),
        n,
    }
}

/// `e^{-r_f T} E[(P(r_T) - K)^+]` by simulation.
pub fn price_mc<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    contract: &OptionContract<T>,
    cfg: &McConfig,
) -> Result<McResult<T>> {
    contract.validate()?;
    let prices = simulate_terminal_prices(spec, dynamics, contract.expiry, cfg)?;
    let df = contract.discount_factor();
    Ok(cfg.run(|| payoff_statistics(&prices, contract.strike, df)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaScheme {
    /// `(C(P0 + h) - C(P0)) / h`.
    #[default]
    Forward,
    /// `(C(P0 + h) - C(P0 - h)) / 2h`, for diagnostics.
    Central,
}

/// Finite-difference delta in `P0` with common random numbers: every leg
/// reprices the same rate sample under a recalibrated level `k`.
pub fn delta_mc<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    contract: &OptionContract<T>,
    cfg: &McConfig,
) -> Result<T> {
    delta_mc_with(spec, dynamics, contract, cfg, DeltaScheme::Forward)
}

pub fn delta_mc_with<T: Scalar>(
    spec: &ModelSpec<T>,
    dynamics: &RateDynamics<T>,
    contract: &OptionContract<T>,
    cfg: &McConfig,
    scheme: DeltaScheme,
) -> Result<T> {
    contract.validate()?;
    let rates = simulate_terminal_rates(&spec.market, dynamics, contract.expiry, cfg)?;
    let h = T::lit(cfg.bump);
    let p0 = spec.market.spot_price;
    let df = contract.discount_factor();
    let leg = |s: &ModelSpec<T>| -> T {
        let prices: Vec<T> = rates.par_iter().map(|&r| s.price(r)).collect();
        payoff_statistics(&prices, contract.strike, df).price
    };
    cfg.run(|| {
        let up = leg(&spec.with_spot_price(p0 + h)?);
        Ok(match scheme {
            DeltaScheme::Forward => (up - leg(spec)) / h,
            DeltaScheme::Central => (up - leg(&spec.with_spot_price(p0 - h)?)) / (T::lit(2.0) * h),
        })
    })
}
