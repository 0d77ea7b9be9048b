//! Normal distribution functions and overflow-safe exponential kernels.
//!
//! `norm_cdf`/`norm_pdf` are evaluated in `f64` through `libm` (erfc, exp),
//! which keeps them within a few ulps everywhere including the far tails.
//! `norm_inv_cdf` is Wichura's AS241 (PPND16), relative error about 1e-16.

use crate::Scalar;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    T::lit(norm_cdf_f64(x.as_f64()))
}

/// Standard normal density.
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    T::lit(norm_pdf_f64(x.as_f64()))
}

/// Inverse of the standard normal CDF. `p` outside `(0, 1)` maps to `∓∞`/NaN.
pub fn norm_inv_cdf<T: Scalar>(p: T) -> T {
    T::lit(norm_inv_cdf_f64(p.as_f64()))
}

#[inline]
pub fn norm_cdf_f64(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
pub fn norm_pdf_f64(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// AS241. Only `libm` and IEEE arithmetic are used so the output is
/// bit-identical across platforms (the Monte Carlo stream depends on it).
#[allow(clippy::excessive_precision)] // published coefficients, verbatim
pub fn norm_inv_cdf_f64(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_672_7e3 * r + 3.343_057_558_358_812_810_5e4) * r
            + 6.726_577_092_700_870_085_3e4)
            * r
            + 4.592_195_393_154_987_145_7e4)
            * r
            + 1.373_169_376_550_946_112_5e4)
            * r
            + 1.971_590_950_306_551_442_7e3)
            * r
            + 1.331_416_678_917_843_774_5e2)
            * r
            + 3.387_132_872_796_366_608_0;
        let den = ((((((5.226_495_278_852_854_561_0e3 * r + 2.872_908_573_572_194_267_4e4) * r
            + 3.930_789_580_009_271_061_0e4)
            * r
            + 2.121_379_430_158_659_586_7e4)
            * r
            + 5.394_196_021_424_751_107_7e3)
            * r
            + 6.871_870_074_920_579_083_0e2)
            * r
            + 4.231_333_070_160_091_125_2e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = libm::sqrt(-libm::log(tail));
    let z = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414_076_4e-4 * r + 2.272_384_498_926_918_458_33e-2)
            * r
            + 2.417_807_251_774_506_117_7e-1)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34;
        let den = ((((((1.050_750_071_644_416_843_24e-9 * r + 5.475_938_084_995_344_946e-4)
            * r
            + 1.519_866_656_361_645_719_66e-2)
            * r
            + 1.481_039_764_274_800_745_9e-1)
            * r
            + 6.897_673_349_851_000_045_5e-1)
            * r
            + 1.676_384_830_183_803_849_4)
            * r
            + 2.053_191_626_637_758_821_87)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_132_65e-7 * r + 2.711_555_568_743_487_578_15e-5)
            * r
            + 1.242_660_947_388_078_438_6e-3)
            * r
            + 2.653_218_952_657_612_309_3e-2)
            * r
            + 2.965_605_718_285_048_912_3e-1)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2;
        let den = ((((((2.044_263_103_389_939_785_64e-15 * r + 1.421_511_758_316_445_888_7e-7)
            * r
            + 1.846_318_317_510_054_681_8e-5)
            * r
            + 7.868_691_311_456_132_591e-4)
            * r
            + 1.487_536_129_085_061_485_25e-2)
            * r
            + 1.369_298_809_227_358_053_1e-1)
            * r
            + 5.998_322_065_558_879_376_9e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// `ln(1 + e^x)` without overflow for large positive `x`.
#[inline]
pub fn log1pexp<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    if a.is_infinite() && a < T::zero() {
        return b;
    }
    if b.is_infinite() && b < T::zero() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        // scipy.stats.norm.cdf
        let cases: [(f64, f64); 5] = [
            (0.0, 0.5),
            (0.1, 0.539_827_837_277_029),
            (-1.0, 0.158_655_253_931_457_05),
            (1.959_963_984_540_054, 0.975),
            (-8.0, 6.220_960_574_271_785e-16),
        ];
        for (x, want) in cases {
            let got = norm_cdf(x);
            assert!(
                (got - want).abs() <= 1e-15 + 1e-14 * want,
                "{x}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn cdf_tails_sum_to_one() {
        for i in -60..=60 {
            let x: f64 = i as f64 * 0.1;
            assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() <= 2e-16);
        }
    }

    #[test]
    fn inverse_cdf_reference_and_round_trip() {
        assert_eq!(norm_inv_cdf(0.5f64), 0.0);
        assert!((norm_inv_cdf(0.975f64) - 1.959_963_984_540_054).abs() < 1e-15);
        assert!((norm_inv_cdf(1e-10f64) + 6.361_340_902_404_056).abs() < 1e-13);
        assert!((norm_inv_cdf(1e-300f64) + 37.047_096_299_361_2).abs() < 1e-11);
        for i in 1..1000 {
            let p: f64 = i as f64 / 1000.0;
            let x = norm_inv_cdf(p);
            assert!(
                (norm_cdf(x) - p).abs() <= 4e-16 * p.max(1.0 - p) + 1e-17,
                "p={p}"
            );
        }
        assert!(norm_inv_cdf(0.0f64).is_infinite());
        assert!(norm_inv_cdf(1.5f64).is_nan());
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(log1pexp(1000.0f64), 1000.0);
        assert!((log1pexp(0.0f64) - std::f64::consts::LN_2).abs() < 1e-16);
        assert!((log1pexp(-40.0f64) - (-40.0f64).exp()).abs() < 1e-30);
        assert!((log_add_exp(0.0f64, 0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert_eq!(log_add_exp(800.0f64, 0.0), 800.0);
    }

    #[test]
    fn f32_paths() {
        assert!((norm_cdf(0.0f32) - 0.5).abs() < 1e-7);
        assert!((norm_inv_cdf(0.975f32) - 1.959_964).abs() < 1e-5);
    }
}
