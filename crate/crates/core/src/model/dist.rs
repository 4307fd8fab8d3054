//! Log densities and samplers for the distributions of the model.
//!
//! Truncated densities carry their normalising constants: the hyperparameter
//! conditionals depend on them.

use std::f64::consts::{FRAC_1_PI, PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn normal_ln_pdf_var(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var) - 0.5 * var.ln() - LN_SQRT_2PI
}

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `ln Φ(x)`, accurate in the lower tail.
pub fn ln_std_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        std_normal_cdf(x).ln()
    } else {
        // Mills ratio expansion.
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Uniform on the closed interval `[lo, hi]`.
#[inline]
pub fn uniform_ln_pdf(x: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&x) {
        -(hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Normal(mean, sd²) truncated to `[lower, ∞)`.
pub fn truncnorm_lower_ln_pdf(x: f64, mean: f64, sd: f64, lower: f64) -> f64 {
    if x < lower || sd <= 0.0 {
        return f64::NEG_INFINITY;
    }
    normal_ln_pdf(x, mean, sd) - ln_std_normal_cdf((mean - lower) / sd)
}

#[inline]
pub fn t3_ln_pdf(t: f64) -> f64 {
    // Γ(2) / (√(3π) Γ(3/2)) = 2 / (π√3)
    const LN_NORM: f64 = -1.000_888_849_623_509_5;
    LN_NORM - 2.0 * (1.0 + t * t / 3.0).ln()
}

pub fn t3_cdf(t: f64) -> f64 {
    if t > 0.0 {
        return 1.0 - t3_cdf(-t);
    }
    let u = t / 3f64.sqrt();
    0.5 + FRAC_1_PI * (u / (1.0 + u * u) + u.atan())
}

/// Survival function `P(T > t)`.
pub fn t3_sf(t: f64) -> f64 {
    t3_cdf(-t)
}

/// Student-t with 3 degrees of freedom, location `loc`, scale `scale`,
/// truncated to `[lower, ∞)`.
pub fn trunc_t3_ln_pdf(x: f64, loc: f64, scale: f64, lower: f64) -> f64 {
    if x < lower || scale <= 0.0 {
        return f64::NEG_INFINITY;
    }
    t3_ln_pdf((x - loc) / scale) - scale.ln() - t3_sf((lower - loc) / scale).ln()
}

/// Density of `μ` when `inverse_logit(μ) ~ U(0, 1)`: the standard logistic.
pub fn logistic_ln_pdf(x: f64) -> f64 {
    let a = x.abs();
    -a - 2.0 * (-a).exp().ln_1p()
}

#[inline]
pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln p` for `δ ~ Bernoulli(inverse_logit(l))`.
pub fn bernoulli_logit_ln_pmf(delta: bool, l: f64) -> f64 {
    // ln σ(l) = -ln(1 + e^{-l})
    let ln_sigmoid = |v: f64| {
        if v >= 0.0 {
            -(-v).exp().ln_1p()
        } else {
            v - v.exp().ln_1p()
        }
    };
    if delta {
        ln_sigmoid(l)
    } else {
        ln_sigmoid(-l)
    }
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from Normal(mean, sd²) truncated to `[lower, ∞)`.
pub fn sample_truncnorm_lower<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lower: f64) -> f64 {
    if sd <= 0.0 {
        return mean.max(lower);
    }
    let a = (lower - mean) / sd;
    if a <= 0.5 {
        loop {
            let z = std_normal(rng);
            if z >= a {
                return mean + sd * z;
            }
        }
    }
    // Exponential proposal for the upper tail.
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - rng.random::<f64>().ln() / alpha;
        let rho = (-0.5 * (z - alpha) * (z - alpha)).exp();
        if rng.random::<f64>() <= rho {
            return mean + sd * z;
        }
    }
}

fn sample_t3<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let z = std_normal(rng);
    let chi2: f64 = (0..3).map(|_| std_normal(rng).powi(2)).sum();
    z / (chi2 / 3.0).sqrt()
}

/// Draw from the truncated t3 of [`trunc_t3_ln_pdf`].
pub fn sample_trunc_t3_lower<R: Rng + ?Sized>(
    rng: &mut R,
    loc: f64,
    scale: f64,
    lower: f64,
) -> f64 {
    if scale <= 0.0 {
        return loc.max(lower);
    }
    let a = (lower - loc) / scale;
    if a <= 1.0 {
        loop {
            let t = sample_t3(rng);
            if t >= a {
                return loc + scale * t;
            }
        }
    }
    // Inverse survival function by bisection.
    let target = rng.random::<f64>() * t3_sf(a);
    let (mut lo, mut hi) = (a, a.max(1.0) * 2.0);
    while t3_sf(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t3_sf(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            break;
        }
    }
    loc + scale * 0.5 * (lo + hi)
}

/// `ln(e^a + e^b + ...)` of a slice; −∞ when empty.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub const TWO_PI: f64 = 2.0 * PI;
