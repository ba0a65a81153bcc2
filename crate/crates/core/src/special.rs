//! Special functions used across the crate. Gamma, beta and erf kernels come
//! from `statrs`; everything here is edge-case handling and a few derived
//! distributions (noncentral chi-square, F, normal tails).

use statrs::function::{beta, erf, gamma};
use std::f64::consts::{LN_2, PI, SQRT_2};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// ln k! for integer k.
pub fn ln_factorial(k: usize) -> f64 {
    gamma::ln_gamma(k as f64 + 1.0)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma::gamma_lr(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma::gamma_ur(a, x)
    }
}

/// Gamma(a, 1) log-density at x > 0.
pub fn ln_gamma_pdf(a: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() - x - gamma::ln_gamma(a)
}

pub fn chisq_cdf(nu: f64, x: f64) -> f64 {
    gamma_p(0.5 * nu, 0.5 * x)
}

pub fn chisq_ccdf(nu: f64, x: f64) -> f64 {
    gamma_q(0.5 * nu, 0.5 * x)
}

pub fn chisq_pdf(nu: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return match nu {
            n if n < 2.0 => f64::INFINITY,
            n if n == 2.0 => 0.5,
            _ => 0.0,
        };
    }
    (ln_gamma_pdf(0.5 * nu, 0.5 * x) - LN_2).exp()
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

// statrs' erfc is only good to ~1e-11, so the normal CDF goes through the
// incomplete gamma function instead: erfc(x) = Q(1/2, x²) for x ≥ 0.
pub fn norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let h = 0.5 * x * x;
    if x < 0.0 {
        0.5 * gamma_q(0.5, h)
    } else {
        0.5 + 0.5 * gamma_p(0.5, h)
    }
}

pub fn norm_ccdf(x: f64) -> f64 {
    norm_cdf(-x)
}

pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erf::erfc_inv(2.0 * p);
    // Newton polish against the accurate CDF.
    for _ in 0..3 {
        let f = if p < 0.5 {
            norm_cdf(x) - p
        } else {
            (1.0 - p) - norm_ccdf(x)
        };
        let d = norm_pdf(x);
        if d == 0.0 {
            break;
        }
        x -= f / d;
    }
    x
}

/// Mills ratio Φ(−w)/φ(w), accurate for large positive w.
pub fn mills_ratio(w: f64) -> f64 {
    if w < 5.0 {
        return norm_ccdf(w) / norm_pdf(w);
    }
    // Continued fraction 1/(w+1/(w+2/(w+3/(w+...)))) evaluated bottom-up.
    let mut t = 0.0;
    for k in (1..=60).rev() {
        t = k as f64 / (w + t);
    }
    1.0 / (w + t)
}

/// ln Φ(−w) for any w.
pub fn ln_norm_ccdf(w: f64) -> f64 {
    if w < 5.0 {
        norm_ccdf(w).ln()
    } else {
        -0.5 * w * w - LN_SQRT_2PI + mills_ratio(w).ln()
    }
}

/// CDF of the F(d1, d2) distribution.
pub fn f_cdf(d1: f64, d2: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let z = d1 * x / (d1 * x + d2);
    beta::beta_reg(0.5 * d1, 0.5 * d2, z)
}

/// Density of the F(d1, d2) distribution.
pub fn f_pdf(d1: f64, d2: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln()
        - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln()
        - beta::ln_beta(0.5 * d1, 0.5 * d2);
    ln.exp()
}

/// Poisson(λ/2) mixture over j of `term(j)`, walking outward from the mode so
/// the weights never underflow before the mass is exhausted.
fn poisson_mixture(half_lambda: f64, term: impl Fn(usize) -> f64) -> f64 {
    if half_lambda == 0.0 {
        return term(0);
    }
    let mode = half_lambda.floor() as usize;
    let ln_w = |j: usize| -half_lambda + j as f64 * half_lambda.ln() - ln_factorial(j);
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut j = mode;
    loop {
        let w = ln_w(j).exp();
        total += w * term(j);
        mass += w;
        if (w < 1e-18 && j > mode) || j > mode + 100_000 {
            break;
        }
        j += 1;
    }
    let mut j = mode;
    while j > 0 {
        j -= 1;
        let w = ln_w(j).exp();
        total += w * term(j);
        mass += w;
        if w < 1e-18 {
            break;
        }
    }
    debug_assert!((mass - 1.0).abs() < 1e-9);
    total
}

/// CDF of the noncentral chi-square χ²_ν(λ); ν may be non-integer.
pub fn ncx2_cdf(nu: f64, lambda: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    poisson_mixture(0.5 * lambda, |j| chisq_cdf(nu + 2.0 * j as f64, x))
}

pub fn ncx2_ccdf(nu: f64, lambda: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    poisson_mixture(0.5 * lambda, |j| chisq_ccdf(nu + 2.0 * j as f64, x))
}

pub fn ncx2_pdf(nu: f64, lambda: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return chisq_pdf(nu, x) * (-0.5 * lambda).exp();
    }
    poisson_mixture(0.5 * lambda, |j| chisq_pdf(nu + 2.0 * j as f64, x))
}

/// log(1 + x) − x without cancellation for small x.
pub fn log1p_minus(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let mut s = 0.0;
        let mut p = x * x;
        for k in 2..12 {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            s += sign * p / k as f64;
            p *= x;
        }
        s
    } else {
        x.ln_1p() - x
    }
}

pub fn ln_binomial(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

pub const INV_PI: f64 = 1.0 / PI;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chisq_known_values() {
        assert!((chisq_cdf(2.0, 2.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        assert!((chisq_cdf(1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-13);
        assert!((chisq_pdf(2.0, 2.0) - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(chisq_cdf(3.0, 0.0), 0.0);
    }

    #[test]
    fn normal_tails() {
        assert!((norm_cdf(1.644_853_626_951_472_2) - 0.95).abs() < 1e-14);
        for w in [1.0, 4.0, 6.0, 10.0, 30.0] {
            let direct = norm_ccdf(w).ln();
            assert!((ln_norm_ccdf(w) - direct).abs() < 1e-10 * direct.abs(), "w={w}");
        }
        assert!((ln_norm_ccdf(50.0) + 1254.831_361_139_42).abs() < 1e-9);
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn noncentral_against_sum_of_squares_identity() {
        // χ²_1(λ) CDF = Φ(√x − √λ) − Φ(−√x − √λ)
        for (lam, x) in [(1.0f64, 2.0f64), (7.0, 3.0), (0.3, 0.2), (25.0, 40.0)] {
            let exact = norm_cdf(x.sqrt() - lam.sqrt()) - norm_cdf(-x.sqrt() - lam.sqrt());
            assert!((ncx2_cdf(1.0, lam, x) - exact).abs() < 1e-13, "{lam} {x}");
            assert!((ncx2_cdf(1.0, lam, x) + ncx2_ccdf(1.0, lam, x) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn f_distribution() {
        // F(2, 2) has CDF x/(1+x).
        assert!((f_cdf(2.0, 2.0, 3.0) - 0.75).abs() < 1e-14);
        assert!((f_pdf(2.0, 2.0, 3.0) - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn log1p_minus_small_and_large() {
        assert!((log1p_minus(1e-5) - ((1e-5f64).ln_1p() - 1e-5)).abs() < 1e-20);
        assert!((log1p_minus(0.5) - (1.5f64.ln() - 0.5)).abs() < 1e-15);
    }
}
