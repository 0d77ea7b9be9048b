//! Experiment harness: parameter sweeps with relative-difference grids,
//! skewness/fit tables and QQ exports, written as plot-ready CSV.

use std::io::Write;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::distfit::{central_moments, fit_shifted_lognormal, ShiftedLognormalFit};
use crate::error::{Error, Result};
use crate::mc::{delta_mc, payoff_statistics, simulate_terminal_prices, McConfig};
use crate::pricer::{ln_greeks, price_ln, price_shifted_lognormal};
use crate::rng::derive_seed;

/// Monte Carlo prices at or below this are not used as a divisor.
pub const MIN_REFERENCE_PRICE: f64 = 1e-10;

/// Default parameter bundle; the curvature is left for the sweep.
pub fn default_params() -> RunConfig {
    RunConfig::default()
}

/// Curvatures of the skew/fit table and the default curvature axis.
pub const DEFAULT_CURVATURES: [f64; 12] = [
    0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 10.0, 15.0, 20.0, 30.0, 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisName {
    Strike,
    Curvature,
    Sigma,
    SpotPrice,
}

impl AxisName {
    pub fn as_str(self) -> &'static str {
        match self {
            AxisName::Strike => "K",
            AxisName::Curvature => "C",
            AxisName::Sigma => "sigma",
            AxisName::SpotPrice => "P0",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "K" => Ok(AxisName::Strike),
            "C" => Ok(AxisName::Curvature),
            "sigma" => Ok(AxisName::Sigma),
            "P0" => Ok(AxisName::SpotPrice),
            _ => Err(Error::Config(format!(
                "unknown sweep axis `{s}` (expected K, C, sigma or P0)"
            ))),
        }
    }

    fn apply(self, cfg: &mut RunConfig, v: f64) {
        match self {
            AxisName::Strike => cfg.contract.strike = v,
            AxisName::Curvature => cfg.model.curvature = Some(v),
            AxisName::Sigma => cfg.dynamics.sigma = v,
            AxisName::SpotPrice => cfg.market.spot_price = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn explicit(name: AxisName, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config(format!(
                "axis {} has no values",
                name.as_str()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "axis {} values must be finite and strictly increasing",
                name.as_str()
            )));
        }
        Ok(Self { name, values })
    }

    /// `count` evenly spaced points from `start` to `stop` inclusive.
    pub fn linear(name: AxisName, start: f64, stop: f64, count: usize) -> Result<Self> {
        let values = match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => {
                let step = (stop - start) / (count - 1) as f64;
                (0..count)
                    .map(|i| {
                        if i == count - 1 {
                            stop
                        } else {
                            start + step * i as f64
                        }
                    })
                    .collect()
            }
        };
        Self::explicit(name, values)
    }

    /// Grids covering the standard sweep ranges.
    pub fn default_for(name: AxisName) -> Self {
        match name {
            AxisName::Strike => Self::linear(name, 97.0, 103.0, 13),
            AxisName::Curvature => Self::explicit(name, DEFAULT_CURVATURES.to_vec()),
            AxisName::Sigma => Self::linear(name, 0.005, 0.04, 8),
            AxisName::SpotPrice => Self::linear(name, 95.0, 106.0, 12),
        }
        .expect("default axes are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Engines {
    pub sln: bool,
    pub ln: bool,
    pub mc: bool,
}

impl Engines {
    pub const ALL: Engines = Engines {
        sln: true,
        ln: true,
        mc: true,
    };

    /// Comma-separated subset of `sln,ln,mc`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut e = Engines {
            sln: false,
            ln: false,
            mc: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "sln" => e.sln = true,
                "ln" => e.ln = true,
                "mc" => e.mc = true,
                _ => return Err(Error::Config(format!("unknown engine `{part}`"))),
            }
        }
        if !(e.sln || e.ln || e.mc) {
            return Err(Error::Config("no engines selected".into()));
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Greek {
    Delta,
}

/// Which axis, if any, shares one rate sample across its values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrnAxis {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    /// Path count and base seed; cell seeds are derived from it.
    pub mc: McConfig,
    pub axis1: SweepAxis,
    pub axis2: SweepAxis,
    pub engines: Engines,
    pub greek: Option<Greek>,
    pub crn_axis: Option<CrnAxis>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axis1.name == self.axis2.name {
            return Err(Error::Config("sweep axes must differ".into()));
        }
        self.mc.validate()?;
        if self.greek.is_some() && !(self.engines.mc || self.engines.ln) {
            return Err(Error::Config(
                "delta sweeps need the mc and/or ln engine".into(),
            ));
        }
        let mut probe = self.base.clone();
        self.axis1.name.apply(&mut probe, self.axis1.values[0]);
        self.axis2.name.apply(&mut probe, self.axis2.values[0]);
        probe.validate()?;
        probe.model_spec()?;
        Ok(())
    }

    fn cell_seed(&self, i: usize, j: usize) -> u64 {
        let (i, j) = match self.crn_axis {
            None => (i as u64, j as u64),
            Some(CrnAxis::First) => (u64::MAX, j as u64),
            Some(CrnAxis::Second) => (i as u64, u64::MAX),
        };
        derive_seed(self.mc.seed, &[i, j])
    }
}

/// Seed of the fitting sample, kept independent of the reference sample.
pub fn fit_seed(seed: u64) -> u64 {
    derive_seed(seed, &[0x0053_4c4e])
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridCell {
    pub axis1_value: f64,
    pub axis2_value: f64,
    pub price_mc: Option<f64>,
    pub se_mc: Option<f64>,
    pub price_sln: Option<f64>,
    pub price_ln: Option<f64>,
    pub rel_diff_sln_pct: Option<f64>,
    pub rel_diff_ln_pct: Option<f64>,
    pub delta_mc: Option<f64>,
    pub delta_ln: Option<f64>,
    pub rel_diff_delta_ln_pct: Option<f64>,
    pub skew: Option<f64>,
    /// Reference value too small to divide by; relative differences omitted.
    pub flagged: bool,
}

fn rel_diff_pct(engine: Option<f64>, reference: Option<f64>, flagged: &mut bool) -> Option<f64> {
    let (e, r) = (engine?, reference?);
    if r.abs() <= MIN_REFERENCE_PRICE {
        *flagged = true;
        return None;
    }
    Some(100.0 * (e - r) / r)
}

fn sample_skew(prices: &[f64]) -> Option<f64> {
    central_moments(prices).ok()?.skewness().ok()
}

fn run_cell(spec: &SweepSpec, i: usize, j: usize) -> Result<GridCell> {
    let mut cfg = spec.base.clone();
    let (v1, v2) = (spec.axis1.values[i], spec.axis2.values[j]);
    spec.axis1.name.apply(&mut cfg, v1);
    spec.axis2.name.apply(&mut cfg, v2);
    cfg.validate()?;
    let model = cfg.model_spec()?;
    let dynamics = cfg.dynamics()?;
    let contract = cfg.contract()?;
    let seed = spec.cell_seed(i, j);
    let mc = spec.mc.with_seed(seed);
    let df = contract.discount_factor();
    let mut cell = GridCell {
        axis1_value: v1,
        axis2_value: v2,
        ..Default::default()
    };

    if spec.greek == Some(Greek::Delta) {
        if spec.engines.mc {
            cell.delta_mc = Some(delta_mc(&model, &dynamics, &contract, &mc)?);
            let prices = simulate_terminal_prices(&model, &dynamics, contract.expiry, &mc)?;
            cell.skew = sample_skew(&prices);
        }
        if spec.engines.ln {
            cell.delta_ln = Some(ln_greeks(&model, &dynamics, &contract)?.delta);
        }
        cell.rel_diff_delta_ln_pct = rel_diff_pct(cell.delta_ln, cell.delta_mc, &mut cell.flagged);
        return Ok(cell);
    }

    if spec.engines.mc {
        let prices = simulate_terminal_prices(&model, &dynamics, contract.expiry, &mc)?;
        let r = payoff_statistics(&prices, contract.strike, df);
        cell.price_mc = Some(r.price);
        cell.se_mc = Some(r.std_error);
        cell.skew = sample_skew(&prices);
    }
    if spec.engines.sln {
        let fit_cfg = mc.with_seed(fit_seed(seed));
        let prices = simulate_terminal_prices(&model, &dynamics, contract.expiry, &fit_cfg)?;
        let fit = fit_shifted_lognormal(&central_moments(&prices)?)?;
        cell.price_sln = Some(price_shifted_lognormal(&fit, contract.strike, df)?);
        if cell.skew.is_none() {
            cell.skew = sample_skew(&prices);
        }
    }
    if spec.engines.ln {
        cell.price_ln = Some(price_ln(&model, &dynamics, &contract)?.price);
    }
    cell.rel_diff_sln_pct = rel_diff_pct(cell.price_sln, cell.price_mc, &mut cell.flagged);
    cell.rel_diff_ln_pct = rel_diff_pct(cell.price_ln, cell.price_mc, &mut cell.flagged);
    Ok(cell)
}

/// One cell per grid point, row-major over `axis1 × axis2`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<GridCell>> {
    spec.validate()?;
    let (n1, n2) = (spec.axis1.values.len(), spec.axis2.values.len());
    spec.mc.run(|| {
        (0..n1 * n2)
            .into_par_iter()
            .map(|idx| run_cell(spec, idx / n2, idx % n2))
            .collect()
    })
}

/// Largest `|rel_diff|` per closed-form engine.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepSummary {
    pub max_abs_rel_diff_sln_pct: Option<f64>,
    pub max_abs_rel_diff_ln_pct: Option<f64>,
    pub max_abs_rel_diff_delta_ln_pct: Option<f64>,
    pub flagged_cells: usize,
}

pub fn summarize(cells: &[GridCell]) -> SweepSummary {
    let max_of = |f: fn(&GridCell) -> Option<f64>| {
        cells
            .iter()
            .filter_map(f)
            .map(f64::abs)
            .fold(None, |acc: Option<f64>, x| {
                Some(acc.map_or(x, |a| a.max(x)))
            })
    };
    SweepSummary {
        max_abs_rel_diff_sln_pct: max_of(|c| c.rel_diff_sln_pct),
        max_abs_rel_diff_ln_pct: max_of(|c| c.rel_diff_ln_pct),
        max_abs_rel_diff_delta_ln_pct: max_of(|c| c.rel_diff_delta_ln_pct),
        flagged_cells: cells.iter().filter(|c| c.flagged).count(),
    }
}

/// `%.10g`-style rendering: 10 significant digits, trailing zeros trimmed.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..10).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    trim_zeros(&format!("{:.*}", (9 - exp) as usize, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_default()
}

pub const SWEEP_HEADER: &str = "axis1_name,axis1_value,axis2_name,axis2_value,price_mc,se_mc,price_sln,price_ln,rel_diff_sln_pct,rel_diff_ln_pct,skew";
pub const DELTA_SWEEP_HEADER: &str =
    "axis1_name,axis1_value,axis2_name,axis2_value,delta_mc,delta_ln,rel_diff_delta_ln_pct,skew";

fn io_err(path: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_string(),
        source,
    }
}

/// Writes the sweep CSV (LF line endings, header first).
pub fn write_sweep_csv<W: Write>(
    out: &mut W,
    spec: &SweepSpec,
    cells: &[GridCell],
    path: &str,
) -> Result<()> {
    let (a1, a2) = (spec.axis1.name.as_str(), spec.axis2.name.as_str());
    let mut text = String::new();
    if spec.greek == Some(Greek::Delta) {
        text.push_str(DELTA_SWEEP_HEADER);
        text.push('\n');
        for c in cells {
            text.push_str(&format!(
                "{a1},{},{a2},{},{},{},{},{}\n",
                format_sig(c.axis1_value),
                format_sig(c.axis2_value),
                opt(c.delta_mc),
                opt(c.delta_ln),
                opt(c.rel_diff_delta_ln_pct),
                opt(c.skew)
            ));
        }
    } else {
        text.push_str(SWEEP_HEADER);
        text.push('\n');
        for c in cells {
            text.push_str(&format!(
                "{a1},{},{a2},{},{},{},{},{},{},{},{}\n",
                format_sig(c.axis1_value),
                format_sig(c.axis2_value),
                opt(c.price_mc),
                opt(c.se_mc),
                opt(c.price_sln),
                opt(c.price_ln),
                opt(c.rel_diff_sln_pct),
                opt(c.rel_diff_ln_pct),
                opt(c.skew)
            ));
        }
    }
    out.write_all(text.as_bytes()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewRow {
    pub curvature: f64,
    pub skew: f64,
    pub fit: ShiftedLognormalFit<f64>,
}

/// Skewness and shifted-lognormal fit of `P(r_T)` per curvature, each row on
/// its own sample (seed derived from `cfg.seed` and the row index).
pub fn skew_table(curvatures: &[f64], base: &RunConfig, cfg: &McConfig) -> Result<Vec<SkewRow>> {
    cfg.validate()?;
    cfg.run(|| {
        curvatures
            .par_iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut rc = base.clone();
                rc.model.curvature = Some(c);
                rc.validate()?;
                let sample_cfg = cfg.with_seed(derive_seed(cfg.seed, &[i as u64]));
                let prices = simulate_terminal_prices(
                    &rc.model_spec()?,
                    &rc.dynamics()?,
                    rc.contract.expiry,
                    &sample_cfg,
                )?;
                let moments = central_moments(&prices)?;
                Ok(SkewRow {
                    curvature: c,
                    skew: moments.skewness()?,
                    fit: fit_shifted_lognormal(&moments)?,
                })
            })
            .collect()
    })
}

pub const SKEW_TABLE_HEADER: &str = "C,skew,orientation,theta,mu_X,sigma_X";

pub fn write_skew_table_csv<W: Write>(out: &mut W, rows: &[SkewRow], path: &str) -> Result<()> {
    let mut text = format!("{SKEW_TABLE_HEADER}\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_sig(r.curvature),
            format_sig(r.skew),
            r.fit.orientation.as_i8(),
            format_sig(r.fit.theta),
            format_sig(r.fit.log_params.mu),
            format_sig(r.fit.log_params.sigma)
        ));
    }
    out.write_all(text.as_bytes()).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QqRow {
    pub p: f64,
    pub empirical: f64,
    pub fitted: f64,
}

/// Empirical quantile of a sorted sample: linear interpolation between order
/// statistics placed at plotting positions `(i - 0.5) / n`, clamped to the
/// sample range.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = n as f64 * p + 0.5;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let i = lo as usize - 1;
    sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
}

/// Empirical vs fitted quantiles at `p_j = j / (count + 1)`, `j = 1..=count`.
pub fn qq_export(
    sample: &[f64],
    fit: &ShiftedLognormalFit<f64>,
    quantile_count: usize,
) -> Result<Vec<QqRow>> {
    if quantile_count < 2 {
        return Err(Error::invalid("quantiles", "need at least 2 quantiles"));
    }
    if sample.is_empty() {
        return Err(Error::Degenerate("empty sample".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((1..=quantile_count)
        .map(|j| {
            let p = j as f64 / (quantile_count + 1) as f64;
            QqRow {
                p,
                empirical: empirical_quantile(&sorted, p),
                fitted: fit.quantile(p),
            }
        })
        .collect())
}

/// Fits `sample` and exports its QQ rows; degenerate samples surface the
/// fitting error.
pub fn qq_from_sample(
    sample: &[f64],
    quantile_count: usize,
) -> Result<(ShiftedLognormalFit<f64>, Vec<QqRow>)> {
    let fit = fit_shifted_lognormal(&central_moments(sample)?)?;
    let rows = qq_export(sample, &fit, quantile_count)?;
    Ok((fit, rows))
}

pub const QQ_HEADER: &str = "p,empirical_q,fitted_q";

pub fn write_qq_csv<W: Write>(out: &mut W, rows: &[QqRow], path: &str) -> Result<()> {
    let mut text = format!("{QQ_HEADER}\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{}\n",
            format_sig(r.p),
            format_sig(r.empirical),
            format_sig(r.fitted)
        ));
    }
    out.write_all(text.as_bytes()).map_err(io_err(path))
}
