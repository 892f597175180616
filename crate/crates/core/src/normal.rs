//! Scalar and bivariate standard-normal primitives.
//!
//! The unchecked functions ([`pdf`], [`cdf`], [`sf`], [`quantile`]) are the hot-path
//! versions used throughout the crate; the `std_normal_*` wrappers validate their
//! input and return [`Error::Domain`](crate::Error::Domain) on bad arguments.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const TWO_PI: f64 = 2.0 * PI;

/// Correlations within this distance of ±1 use the exact one-dimensional formulas.
pub const DEGENERATE_RHO_EPS: f64 = 1e-9;
const RHO_CLAMP_EPS: f64 = 1e-12;

/// A correlation coefficient in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Correlation(f64);

impl Correlation {
    pub const ZERO: Correlation = Correlation(0.0);
    pub const ONE: Correlation = Correlation(1.0);

    /// Values within `1e-12` outside `[-1, 1]` are clamped; anything further out is rejected.
    pub fn new(rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho.abs() > 1.0 + RHO_CLAMP_EPS {
            return Err(domain(format!(
                "correlation must lie in [-1, 1], got {rho}"
            )));
        }
        Ok(Correlation(rho.clamp(-1.0, 1.0)))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// True when `rho` is treated as exactly `+1`.
    #[inline]
    pub fn is_perfect_positive(self) -> bool {
        self.0 >= 1.0 - DEGENERATE_RHO_EPS
    }

    /// True when `rho` is treated as exactly `-1`.
    #[inline]
    pub fn is_perfect_negative(self) -> bool {
        self.0 <= -1.0 + DEGENERATE_RHO_EPS
    }
}

impl TryFrom<f64> for Correlation {
    type Error = crate::Error;

    fn try_from(value: f64) -> Result<Self> {
        Correlation::new(value)
    }
}

impl From<Correlation> for f64 {
    fn from(value: Correlation) -> Self {
        value.0
    }
}

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate for large positive `x`.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Φ⁻¹(p). Returns NaN outside `(0, 1)`; see [`std_normal_quantile`] for the checked form.
pub fn quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    if p > 0.5 {
        // 1 - p is exact for p in [0.5, 1]
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

// Acklam's rational approximation (relative error ~1e-9) polished by two Newton
// steps against the lower tail of Φ. Valid for 0 < p <= 0.5.
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
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
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p == 0.5 {
        return 0.0;
    }
    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let density = pdf(x);
        if density <= 0.0 {
            break;
        }
        x -= (cdf(x) - p) / density;
    }
    x
}

pub fn std_normal_pdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!(
            "normal pdf needs a finite argument, got {x}"
        )));
    }
    Ok(pdf(x))
}

pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!(
            "normal cdf needs a finite argument, got {x}"
        )));
    }
    Ok(cdf(x))
}

pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    Ok(quantile(p))
}

/// `P(Z1 <= z1_hi, Z2 >= z2_lo)` for standard normals with correlation `rho`.
///
/// `z1_hi` may be `+inf` and `z2_lo` may be `-inf`. NaN bounds yield NaN.
pub fn bivariate_rect_prob(z1_hi: f64, z2_lo: f64, rho: Correlation) -> f64 {
    if z1_hi.is_nan() || z2_lo.is_nan() {
        return f64::NAN;
    }
    if z1_hi == f64::NEG_INFINITY || z2_lo == f64::INFINITY {
        return 0.0;
    }
    if z1_hi == f64::INFINITY {
        return sf(z2_lo);
    }
    if z2_lo == f64::NEG_INFINITY {
        return cdf(z1_hi);
    }
    let r = rho.get();
    let p = if rho.is_perfect_positive() {
        // Z1 = Z2
        (cdf(z1_hi) - cdf(z2_lo)).max(0.0)
    } else if rho.is_perfect_negative() {
        // Z2 = -Z1
        cdf(z1_hi.min(-z2_lo))
    } else if r == 0.0 {
        cdf(z1_hi) * sf(z2_lo)
    } else if r < 0.0 {
        // P(Z1 <= a, -Z2 <= -b) with corr(Z1, -Z2) = -r > 0
        bvn_upper(-z1_hi, z2_lo, -r)
    } else {
        // P(Z1 <= a) - P(Z1 <= a, Z2 <= b)
        cdf(z1_hi) - bvn_upper(-z1_hi, -z2_lo, r)
    };
    p.clamp(0.0, 1.0)
}

// Gauss–Legendre (weight, abscissa) pairs on [-1, 1]; only the negative half is
// stored, the integrand is evaluated at both ±x.
const GL_6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];
const GL_12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
const GL_20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// `P(X > h, Y > k)` for standard normals with correlation `r ∈ [0, 1)`.
///
/// Drezner–Wesolowsky integration with Genz's double-precision modifications
/// (series expansion around `r = 1` for `r >= 0.925`).
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&r));
    let nodes: &[(f64, f64)] = if r < 0.3 {
        &GL_6
    } else if r < 0.75 {
        &GL_12
    } else {
        &GL_20
    };
    let hk = h * k;

    if r < 0.925 {
        let mut bvn = 0.0;
        if r > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin() / 2.0;
            for &(w, x) in nodes {
                for sign in [-1.0, 1.0] {
                    let sn = (asr * (sign * x + 1.0)).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / TWO_PI;
        }
        return bvn + sf(h) * sf(k);
    }

    let as_ = (1.0 - r) * (1.0 + r);
    let mut a = as_.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    let mut bvn = a
        * (-(bs / as_ + hk) / 2.0).exp()
        * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
    if hk > -160.0 {
        let b = bs.sqrt();
        bvn -= (-hk / 2.0).exp()
            * TWO_PI.sqrt()
            * sf(b / a)
            * b
            * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for &(w, x) in nodes {
        for sign in [-1.0, 1.0] {
            let xs = (a * (sign * x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let asr = -(bs / xs + hk) / 2.0;
            if asr > -100.0 {
                bvn += a
                    * w
                    * asr.exp()
                    * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                        - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
    }
    -bvn / TWO_PI + sf(h.max(k))
}

/// A reproducible random stream: ChaCha8 keyed by `seed`, with `stream_id`
/// selecting one of 2^64 independent streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// One draw of `(Z1, Z2)` with `Z2 = rho·Z1 + sqrt(1 - rho²)·ε`.
    #[inline]
    pub fn bivariate(&mut self, rho: Correlation) -> (f64, f64) {
        let r = rho.get();
        let z1 = self.std_normal();
        if r == 1.0 {
            return (z1, z1);
        }
        if r == -1.0 {
            return (z1, -z1);
        }
        let eps = self.std_normal();
        (z1, r * z1 + (1.0 - r * r).sqrt() * eps)
    }
}

pub fn sample_bivariate(rho: Correlation, stream: &mut RngStream, count: usize) -> Vec<(f64, f64)> {
    (0..count).map(|_| stream.bivariate(rho)).collect()
}
