//! Exact statistics behind the certificates: standard normal CDF and
//! quantile, Clopper-Pearson lower confidence bounds, and the exact
//! two-sided binomial test.
//!
//! Everything here is `f64`; certified radii inherit that precision.

use crate::error::Error;
use crate::Result;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_286_9;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_94;

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF, absolute error below 1e-12 everywhere.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile on the open interval `(0, 1)`.
///
/// A rational initial guess is polished with Newton steps on
/// [`std_normal_cdf`]. Arguments above one half go through the exact
/// complement `1 - p` (no rounding there for `p >= 0.5`) so both tails
/// are solved where the CDF has full relative precision, keeping the
/// pair mutual inverses to a few ulps of `z` across the whole interval.
pub fn std_normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "quantile argument must lie in (0, 1), got {p}"
        )));
    }
    if p > 0.5 {
        return Ok(-lower_half_quantile(1.0 - p));
    }
    Ok(lower_half_quantile(p))
}

/// Newton solve of `cdf(x) = p` for `p` in `(0, 1/2]`, where `cdf` is
/// small and the residual `cdf(x) - p` carries no cancellation.
fn lower_half_quantile(p: f64) -> f64 {
    let mut x = inv_cdf_initial_guess(p);
    for _ in 0..3 {
        let pdf = std_normal_pdf(x);
        // In the far tails the density underflows; the rational guess is
        // already the best available there.
        if pdf < 1e-290 {
            break;
        }
        let step = (std_normal_cdf(x) - p) / pdf;
        let next = x - step;
        if !next.is_finite() {
            break;
        }
        x = next;
    }
    x
}

/// Largest `p` such that `P[Binomial(trials, p) >= successes] <= alpha`,
/// i.e. the one-sided lower Clopper-Pearson bound at confidence `1 - alpha`.
///
/// Solved by bisection on the exact binomial upper tail, summed in log
/// space; `successes = 0` returns 0.
pub fn clopper_pearson_lower(successes: u64, trials: u64, alpha: f64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("trial count must be positive".into()));
    }
    if successes > trials {
        return Err(Error::Domain(format!(
            "successes {successes} exceed trials {trials}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if successes == 0 {
        return Ok(0.0);
    }
    let ln_choose_k = ln_binomial(trials, successes);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if binomial_upper_tail(successes, trials, mid, ln_choose_k) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Exact two-sided p-value for observing `successes` heads in `trials`
/// fair-coin flips: twice the smaller tail, capped at 1.
pub fn binom_two_sided_p(successes: u64, trials: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("trial count must be positive".into()));
    }
    if successes > trials {
        return Err(Error::Domain(format!(
            "successes {successes} exceed trials {trials}"
        )));
    }
    let m = successes.min(trials - successes);
    if m == 0 {
        // Single outermost outcome: the tail is exactly 2^-trials.
        return Ok((2.0 * 0.5_f64.powi(trials as i32)).min(1.0));
    }
    let ln_half_n = -(trials as f64) * std::f64::consts::LN_2;
    let mut ln_choose = 0.0_f64; // ln C(trials, 0)
    let mut tail = ln_half_n.exp();
    for i in 0..m {
        ln_choose += ((trials - i) as f64).ln() - ((i + 1) as f64).ln();
        tail += (ln_choose + ln_half_n).exp();
    }
    Ok((2.0 * tail).min(1.0))
}

/// `P[Binomial(trials, p) >= successes]` for `p` strictly inside `(0, 1)`,
/// summed in log space with early termination past the mode.
fn binomial_upper_tail(successes: u64, trials: u64, p: f64, ln_choose_k: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mode = ((trials + 1) as f64 * p).floor() as u64;
    let mut ln_choose = ln_choose_k;
    let mut acc = 0.0_f64;
    let mut i = successes;
    loop {
        let tail_terms = trials - i;
        let ln_term = if tail_terms == 0 {
            ln_choose + i as f64 * ln_p
        } else {
            ln_choose + i as f64 * ln_p + tail_terms as f64 * ln_q
        };
        let term = ln_term.exp();
        acc += term;
        if i == trials {
            break;
        }
        if i > mode && term < acc * 1e-18 {
            break;
        }
        ln_choose += ((trials - i) as f64).ln() - ((i + 1) as f64).ln();
        i += 1;
    }
    acc
}

/// `ln C(n, k)` by summing logs over the shorter side of the symmetry.
fn ln_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc = 0.0_f64;
    for j in 1..=k {
        acc += ((n - k + j) as f64).ln() - (j as f64).ln();
    }
    acc
}

/// Complementary error function (Cody-style rational approximations on
/// three ranges; relative error near machine precision).
fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= 0.46875 {
        return 1.0 - erf(x);
    } else if y <= 4.0 {
        erfc_mid(y)
    } else {
        erfc_far(y)
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// Error function; odd, `erf(0) = 0`.
fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        // Rational approximation in y^2 near the origin.
        const A: [f64; 5] = [
            3.161_123_743_870_565_6e0,
            1.138_641_541_510_501_56e2,
            3.774_852_376_853_020_2e2,
            3.209_377_589_138_469_47e3,
            1.857_777_061_846_031_53e-1,
        ];
        const B: [f64; 4] = [
            2.360_129_095_234_412_09e1,
            2.440_246_379_344_441_73e2,
            1.282_616_526_077_372_28e3,
            2.844_236_833_439_170_62e3,
        ];
        let z = y * y;
        let mut num = A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + A[i]) * z;
            den = (den + B[i]) * z;
        }
        x * (num + A[3]) / (den + B[3])
    } else {
        let tail = if y <= 4.0 { erfc_mid(y) } else { erfc_far(y) };
        let val = 1.0 - tail;
        if x < 0.0 {
            -val
        } else {
            val
        }
    }
}

/// `erfc(y)` for `0.46875 < y <= 4`.
fn erfc_mid(y: f64) -> f64 {
    const C: [f64; 9] = [
        5.641_884_969_886_700_89e-1,
        8.883_149_794_388_375_94e0,
        6.611_919_063_714_162_95e1,
        2.986_351_381_974_001_31e2,
        8.819_522_212_417_690_9e2,
        1.712_047_612_634_070_58e3,
        2.051_078_377_826_071_47e3,
        1.230_339_354_797_997_25e3,
        2.153_115_354_744_038_46e-8,
    ];
    const D: [f64; 8] = [
        1.574_492_611_070_983_47e1,
        1.176_939_508_913_124_99e2,
        5.371_811_018_620_098_58e2,
        1.621_389_574_566_690_19e3,
        3.290_799_235_733_459_63e3,
        4.362_619_090_143_247_16e3,
        3.439_367_674_143_721_64e3,
        1.230_339_354_803_749_42e3,
    ];
    let mut num = C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + C[i]) * y;
        den = (den + D[i]) * y;
    }
    scale_by_exp_neg_sq(y, (num + C[7]) / (den + D[7]))
}

/// `erfc(y)` for `y > 4` via the asymptotic rational form in `1/y^2`.
fn erfc_far(y: f64) -> f64 {
    if y >= 26.6 {
        // Below the smallest positive normal f64.
        return 0.0;
    }
    const P: [f64; 6] = [
        3.053_266_349_612_323_44e-1,
        3.603_448_999_498_044_39e-1,
        1.257_817_261_112_292_46e-1,
        1.608_378_514_874_227_66e-2,
        6.587_491_615_298_378_03e-4,
        1.631_538_713_730_209_78e-2,
    ];
    const Q: [f64; 5] = [
        2.568_520_192_289_822_42e0,
        1.872_952_849_923_460_47e0,
        5.279_051_029_514_284_12e-1,
        6.051_834_131_244_131_91e-2,
        2.335_204_976_268_691_85e-3,
    ];
    let z = 1.0 / (y * y);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    let r = z * (num + P[4]) / (den + Q[4]);
    scale_by_exp_neg_sq(y, (FRAC_1_SQRT_PI - r) / y)
}

/// Multiplies by `exp(-y^2)` split as `exp(-ysq^2) * exp(-(y-ysq)(y+ysq))`
/// with `ysq` truncated to 1/16ths, which keeps the argument of each `exp`
/// small enough to avoid rounding loss in the product.
fn scale_by_exp_neg_sq(y: f64, value: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp() * value
}

/// Acklam's rational approximation to the standard normal quantile
/// (absolute error below 1.2e-9 before refinement).
fn inv_cdf_initial_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239e0,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838e0,
        -2.549_732_539_343_734e0,
        4.374_664_141_464_968e0,
        2.938_163_982_698_783e0,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996e0,
        3.754_408_661_907_416e0,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    }
}
