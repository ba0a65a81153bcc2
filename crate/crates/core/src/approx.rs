//! Moment-matching surrogates and saddlepoint approximations.
//!
//! Matching applies to the chi-square part of a positive definite form with
//! no Gaussian component; a constant offset is carried as a shift. The
//! saddlepoint routines work for any form.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::reduction::ReducedForm;
use crate::result::{Method, MethodResult};
use crate::special::{
    chisq_cdf, f_cdf, ln_gamma, ln_norm_ccdf, mills_ratio, ncx2_cdf, norm_cdf, norm_ccdf,
};
use crate::transforms::{cgf_derivative_unchecked, cgf_unchecked, cumulants, mgf_domain, CumulantSet};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchFamily {
    Satterthwaite,
    Pearson,
    Hbe,
    Wood,
    Liu,
}

impl MatchFamily {
    pub fn method(self) -> Method {
        match self {
            MatchFamily::Satterthwaite => Method::Satterthwaite,
            MatchFamily::Pearson => Method::Pearson,
            MatchFamily::Hbe => Method::Hbe,
            MatchFamily::Wood => Method::Wood,
            MatchFamily::Liu => Method::Liu,
        }
    }

    pub fn from_method(m: Method) -> Option<Self> {
        Some(match m {
            Method::Satterthwaite => MatchFamily::Satterthwaite,
            Method::Pearson => MatchFamily::Pearson,
            Method::Hbe => MatchFamily::Hbe,
            Method::Wood => MatchFamily::Wood,
            Method::Liu => MatchFamily::Liu,
            _ => return None,
        })
    }
}

/// A fitted surrogate distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MatchedSurrogate {
    /// a·χ²_b
    ScaledChisq { a: f64, b: f64 },
    /// a·χ²_b + c
    ShiftedScaledChisq { a: f64, b: f64, c: f64 },
    /// mean + sd·(χ²_b − b)/√(2b)
    StandardizedChisq { b: f64, mean: f64, sd: f64 },
    /// (α₁β/α₂)·F(2α₁, 2α₂)
    CorrectedF { alpha1: f64, alpha2: f64, beta: f64 },
    /// mean + sd·(χ²_ℓ(δ) − ℓ − δ)/(√2·a)
    NoncentralChisq { a: f64, delta: f64, l: f64, mean: f64, sd: f64 },
}

impl MatchedSurrogate {
    pub fn cdf(&self, q: f64) -> f64 {
        match *self {
            MatchedSurrogate::ScaledChisq { a, b } => chisq_cdf(b, q / a),
            MatchedSurrogate::ShiftedScaledChisq { a, b, c } => chisq_cdf(b, (q - c) / a),
            MatchedSurrogate::StandardizedChisq { b, mean, sd } => {
                chisq_cdf(b, b + (2.0 * b).sqrt() * (q - mean) / sd)
            }
            MatchedSurrogate::CorrectedF { alpha1, alpha2, beta } => {
                f_cdf(2.0 * alpha1, 2.0 * alpha2, alpha2 * q / (alpha1 * beta))
            }
            MatchedSurrogate::NoncentralChisq { a, delta, l, mean, sd } => {
                ncx2_cdf(l, delta, l + delta + std::f64::consts::SQRT_2 * a * (q - mean) / sd)
            }
        }
    }

    /// First `order` cumulants of the surrogate from its own closed form
    /// (order ≤ 3 for the F family).
    pub fn cumulants(&self, order: usize) -> Vec<f64> {
        // κ_j of χ²_ν(λ) is 2^{j−1}(j−1)!(ν + jλ)
        let chi = |j: usize, nu: f64, lam: f64| {
            let mut c = 1.0;
            for i in 1..j {
                c *= 2.0 * i as f64;
            }
            c * (nu + j as f64 * lam)
        };
        let affine = |scale: f64, shift: f64, nu: f64, lam: f64| -> Vec<f64> {
            (1..=order)
                .map(|j| {
                    let k = scale.powi(j as i32) * chi(j, nu, lam);
                    if j == 1 {
                        k + shift
                    } else {
                        k
                    }
                })
                .collect()
        };
        match *self {
            MatchedSurrogate::ScaledChisq { a, b } => affine(a, 0.0, b, 0.0),
            MatchedSurrogate::ShiftedScaledChisq { a, b, c } => affine(a, c, b, 0.0),
            MatchedSurrogate::StandardizedChisq { b, mean, sd } => {
                let s = sd / (2.0 * b).sqrt();
                affine(s, mean - s * b, b, 0.0)
            }
            MatchedSurrogate::NoncentralChisq { a, delta, l, mean, sd } => {
                let s = sd / (std::f64::consts::SQRT_2 * a);
                affine(s, mean - s * (l + delta), l, delta)
            }
            MatchedSurrogate::CorrectedF { alpha1, alpha2, beta } => {
                assert!(order <= 3, "corrected F cumulants only to order 3");
                let scale = alpha1 * beta / alpha2;
                // E[F^k] for F(2α₁, 2α₂), times scale^k
                let raw = |k: i32| {
                    let kf = k as f64;
                    (scale * alpha2 / alpha1).powi(k)
                        * (ln_gamma(alpha1 + kf) + ln_gamma(alpha2 - kf)
                            - ln_gamma(alpha1)
                            - ln_gamma(alpha2))
                        .exp()
                };
                let (m1, m2, m3) = (raw(1), raw(2), raw(3));
                let k = [m1, m2 - m1 * m1, m3 - 3.0 * m2 * m1 + 2.0 * m1.powi(3)];
                k[..order].to_vec()
            }
        }
    }
}

fn need(kappas: &CumulantSet, j: usize) -> Result<f64> {
    kappas
        .get(j)
        .ok_or_else(|| Error::not_applicable(format!("cumulant κ{j} not supplied")))
}

/// Fits the surrogate of `family` to the given cumulants.
pub fn match_cumulants(kappas: &CumulantSet, family: MatchFamily) -> Result<MatchedSurrogate> {
    let k1 = need(kappas, 1)?;
    let k2 = need(kappas, 2)?;
    if !(k2 > 0.0) {
        return Err(Error::not_applicable("κ2 must be positive"));
    }
    match family {
        MatchFamily::Satterthwaite => {
            if !(k1 > 0.0) {
                return Err(Error::not_applicable("κ1 must be positive"));
            }
            Ok(MatchedSurrogate::ScaledChisq {
                a: 0.5 * k2 / k1,
                b: 2.0 * k1 * k1 / k2,
            })
        }
        MatchFamily::Pearson | MatchFamily::Hbe => {
            let k3 = need(kappas, 3)?;
            if !(k3 > 0.0) {
                return Err(Error::not_applicable("κ3 must be positive"));
            }
            let b = 8.0 * k2.powi(3) / (k3 * k3);
            Ok(if family == MatchFamily::Pearson {
                MatchedSurrogate::ShiftedScaledChisq {
                    a: k3 / (4.0 * k2),
                    b,
                    c: k1 - 2.0 * k2 * k2 / k3,
                }
            } else {
                MatchedSurrogate::StandardizedChisq {
                    b,
                    mean: k1,
                    sd: k2.sqrt(),
                }
            })
        }
        MatchFamily::Wood => {
            let k3 = need(kappas, 3)?;
            let den = k1 * k3 - 2.0 * k2 * k2;
            let r = 4.0 * k1 * k2 * k2 + k3 * (k2 - k1 * k1);
            let alpha1 = 2.0 * k1 * (k1 * k3 + k1 * k1 * k2 - k2 * k2) / r;
            let alpha2 = 3.0 + 2.0 * k2 * (k2 + k1 * k1) / den;
            let beta = r / den;
            let ok = alpha1.is_finite() && alpha1 > 0.0 && alpha2.is_finite() && alpha2 > 3.0;
            if !ok || !(beta > 0.0) {
                return Err(Error::not_applicable(format!(
                    "corrected F parameters out of range (κ1κ3 − 2κ2² = {den:e})"
                )));
            }
            Ok(MatchedSurrogate::CorrectedF { alpha1, alpha2, beta })
        }
        MatchFamily::Liu => {
            let k3 = need(kappas, 3)?;
            let k4 = need(kappas, 4)?;
            if !(k3 > 0.0) {
                return Err(Error::not_applicable("κ3 must be positive"));
            }
            let s1 = k3 / (2.0 * std::f64::consts::SQRT_2 * k2.powf(1.5));
            let s2 = k4 / (12.0 * k2 * k2);
            let (a, delta, l) = if s1 * s1 > s2 {
                let a = 1.0 / (s1 - (s1 * s1 - s2).sqrt());
                let delta = s1 * a.powi(3) - a * a;
                (a, delta, a * a - 2.0 * delta)
            } else {
                (1.0 / s1, 0.0, 1.0 / (s1 * s1))
            };
            if !(l > 0.0) || delta < 0.0 {
                return Err(Error::not_applicable("noncentral chi-square parameters out of range"));
            }
            Ok(MatchedSurrogate::NoncentralChisq {
                a,
                delta,
                l,
                mean: k1,
                sd: k2.sqrt(),
            })
        }
    }
}

/// Matched surrogate for the form, with the constant stripped off.
pub fn match_form(red: &ReducedForm, family: MatchFamily) -> Result<MatchedSurrogate> {
    if !red.is_positive() {
        return Err(Error::not_applicable("moment matching needs all weights positive"));
    }
    if red.sigma > 0.0 {
        return Err(Error::not_applicable("moment matching needs σ = 0"));
    }
    let base = red.with_constant(0.0);
    match_cumulants(&cumulants(&base, 4), family)
}

/// CDF of the matched surrogate. Wood's family falls back to Pearson's when
/// its parameters leave the admissible range (equal weights, or strong
/// noncentrality); the fallback is noted.
pub fn cdf_matched(red: &ReducedForm, q: f64, family: MatchFamily) -> Result<MethodResult> {
    let x = q - red.constant;
    let mut notes = Vec::new();
    let s = match match_form(red, family) {
        Err(Error::NotApplicable(msg)) if family == MatchFamily::Wood && red.is_positive() && red.sigma == 0.0 => {
            notes.push(format!("{msg}; used the shifted chi-square surrogate"));
            match_form(red, MatchFamily::Pearson)?
        }
        other => other?,
    };
    let v = s.cdf(x);
    let mut r = MethodResult::approximate(family.method(), v).with_complement(1.0 - v);
    r.diagnostics.notes = notes;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddlepointSolution {
    pub t0: f64,
    pub w: f64,
    pub v: f64,
    pub k: f64,
    pub k2: f64,
}

/// Root of K′(t) = q on the MGF domain.
pub fn saddlepoint_solve(red: &ReducedForm, q: f64) -> Result<SaddlepointSolution> {
    let dom = mgf_domain(red);
    let k1 = cgf_derivative_unchecked(red, 0.0, 1);
    let g = |t: f64| cgf_derivative_unchecked(red, t, 1) - q;
    let tol = 1e-10 * (1.0 + q.abs());
    let t0 = if (q - k1).abs() <= tol {
        0.0
    } else {
        let up = q > k1;
        let edge = if up { dom.t_right } else { dom.t_left };
        if edge.is_infinite() && red.sigma == 0.0 {
            // K′ tends to c″ on the open side; q beyond it has no saddlepoint
            let limit = red.constant;
            let beyond = if up { q >= limit } else { q <= limit };
            if beyond {
                return Err(Error::Domain {
                    t: edge,
                    t_left: dom.t_left,
                    t_right: dom.t_right,
                });
            }
        }
        // bracket: move from 0 toward the edge, halving the remaining gap
        let mut lo = 0.0;
        let mut hi;
        let sd = cgf_derivative_unchecked(red, 0.0, 2).sqrt();
        let mut step = if up { 1.0 } else { -1.0 } / sd;
        loop {
            hi = if edge.is_finite() {
                let cand = lo + 0.5 * (edge - lo);
                if (cand - lo).abs() > step.abs() { lo + step } else { cand }
            } else {
                lo + step
            };
            if hi == lo {
                break;
            }
            let gh = g(hi);
            if (gh > 0.0) == up || gh == 0.0 {
                break;
            }
            lo = hi;
            step *= 2.0;
        }
        // safeguarded Newton on [lo, hi]
        let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let mut t = 0.5 * (a + b);
        for _ in 0..200 {
            let gt = g(t);
            if gt == 0.0 {
                break;
            }
            if gt > 0.0 {
                b = t;
            } else {
                a = t;
            }
            let d = cgf_derivative_unchecked(red, t, 2);
            let mut next = t - gt / d;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            // polish past the residual tolerance until the step stalls
            let small = (next - t).abs() <= 4.0 * f64::EPSILON * t.abs();
            t = next;
            if small || (b - a) <= 4.0 * f64::EPSILON * t.abs() || gt.abs() <= tol * 1e-6 {
                break;
            }
        }
        t
    };
    let k = cgf_unchecked(red, t0);
    let k2 = cgf_derivative_unchecked(red, t0, 2);
    let r = 2.0 * (t0 * q - k);
    let w = t0.signum() * r.max(0.0).sqrt();
    Ok(SaddlepointSolution {
        t0,
        w,
        v: t0 * k2.sqrt(),
        k,
        k2,
    })
}

/// Saddlepoint density [2πK″(t₀)]^{−1/2} exp(K(t₀) − t₀q).
pub fn pdf_spa(red: &ReducedForm, q: f64) -> Result<MethodResult> {
    let s = saddlepoint_solve(red, q)?;
    let v = (s.k - s.t0 * q - LN_SQRT_2PI - 0.5 * s.k2.ln()).exp();
    let mut r = MethodResult::approximate(Method::SpaDensity, v);
    r.diagnostics.saddlepoint = Some(s.t0);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaVariant {
    LugannaniRice,
    BarndorffNielsen,
}

impl SpaVariant {
    pub fn method(self) -> Method {
        match self {
            SpaVariant::LugannaniRice => Method::SpaLr,
            SpaVariant::BarndorffNielsen => Method::SpaBn,
        }
    }
}

/// Half-width of the region around t₀ = 0 where the mean limit replaces the
/// formula; t is measured in units of 1/sd.
fn eps_switch(red: &ReducedForm) -> f64 {
    1e-4 / cgf_derivative_unchecked(red, 0.0, 2).sqrt()
}

/// ln of the tail Φ(−w) + φ(w)(1/v − 1/w) for w > 0 (LR), computed without
/// forming Φ(−w).
fn ln_lr_tail(w: f64, v: f64) -> f64 {
    // Mills ratio minus 1/w, then the 1/v term
    let m = if w >= 5.0 {
        let mut t = 0.0;
        for k in (1..=60).rev() {
            t = k as f64 / (w + t);
        }
        -t / (w * (w + t))
    } else {
        mills_ratio(w) - 1.0 / w
    };
    -0.5 * w * w - LN_SQRT_2PI + (m + 1.0 / v).ln()
}

fn ln_bn_tail(w: f64, v: f64) -> f64 {
    ln_norm_ccdf(w + (v / w).ln() / w)
}

/// F(κ₁) limit, and the same expressed for BN as Φ of the skewness term.
fn mean_limit(red: &ReducedForm, variant: SpaVariant) -> f64 {
    let k2 = cgf_derivative_unchecked(red, 0.0, 2);
    let k3 = cgf_derivative_unchecked(red, 0.0, 3);
    let z = k3 / (6.0 * k2.powf(1.5));
    match variant {
        SpaVariant::LugannaniRice => 0.5 + z / (2.0 * std::f64::consts::PI).sqrt(),
        SpaVariant::BarndorffNielsen => norm_cdf(z),
    }
}

/// (lower, upper) tail pair from a saddlepoint solution away from the mean.
fn tails(s: &SaddlepointSolution, variant: SpaVariant) -> (f64, f64) {
    let ln_tail = |w: f64, v: f64| match variant {
        SpaVariant::LugannaniRice => ln_lr_tail(w, v),
        SpaVariant::BarndorffNielsen => ln_bn_tail(w, v),
    };
    if s.w > 0.0 {
        let u = ln_tail(s.w, s.v).exp();
        (1.0 - u, u)
    } else {
        let l = ln_tail(-s.w, -s.v).exp();
        (l, 1.0 - l)
    }
}

/// Saddlepoint CDF; `complement` holds the directly computed upper tail.
pub fn cdf_spa(red: &ReducedForm, q: f64, variant: SpaVariant) -> Result<MethodResult> {
    let s = saddlepoint_solve(red, q)?;
    let eps = eps_switch(red);
    let at = s.t0.abs();
    let (lower, upper) = if at >= 2.0 * eps && s.w != 0.0 {
        tails(&s, variant)
    } else {
        let m = mean_limit(red, variant);
        if at <= eps || s.w == 0.0 {
            (m, 1.0 - m)
        } else {
            let (l, _) = tails(&s, variant);
            let f = (at - eps) / eps;
            let v = f * l + (1.0 - f) * m;
            (v, 1.0 - v)
        }
    };
    let mut r = MethodResult::approximate(variant.method(), lower).with_complement(upper);
    r.diagnostics.saddlepoint = Some(s.t0);
    Ok(r)
}

/// ln P(Q > q) from the saddlepoint formula, usable far in the upper tail
/// where the probability underflows.
pub fn ln_ccdf_spa(red: &ReducedForm, q: f64, variant: SpaVariant) -> Result<f64> {
    let s = saddlepoint_solve(red, q)?;
    if s.t0 >= 2.0 * eps_switch(red) && s.w > 0.0 {
        Ok(match variant {
            SpaVariant::LugannaniRice => ln_lr_tail(s.w, s.v),
            SpaVariant::BarndorffNielsen => ln_bn_tail(s.w, s.v),
        })
    } else {
        Ok(cdf_spa(red, q, variant)?.upper().ln())
    }
}

/// Normal approximation N(κ₁, κ₂); used as a sanity reference only.
pub fn normal_cdf(red: &ReducedForm, q: f64) -> (f64, f64) {
    let k = cumulants(red, 2).kappa;
    let z = (q - k[0]) / k[1].sqrt();
    (norm_cdf(z), norm_ccdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{chisq_ccdf, chisq_pdf, norm_pdf};

    fn reference_form() -> ReducedForm {
        ReducedForm::central(&[0.6, 0.3, 0.1], &[2, 2, 1]).unwrap()
    }

    #[test]
    fn satterthwaite_fixed_point() {
        let red = ReducedForm::central(&[3.0], &[5]).unwrap();
        let s = match_form(&red, MatchFamily::Satterthwaite).unwrap();
        match s {
            MatchedSurrogate::ScaledChisq { a, b } => {
                assert!((a - 3.0).abs() < 1e-14 && (b - 5.0).abs() < 1e-14)
            }
            _ => unreachable!(),
        }
        let r = cdf_matched(&red, 9.0, MatchFamily::Satterthwaite).unwrap();
        assert!((r.value - chisq_cdf(5.0, 3.0)).abs() < 1e-14);
    }

    #[test]
    fn hbe_and_liu_recover_chi_square_two() {
        let red = ReducedForm::central(&[1.0, 1.0 + 1e-14], &[1, 1]).unwrap();
        match match_form(&red, MatchFamily::Hbe).unwrap() {
            MatchedSurrogate::StandardizedChisq { b, .. } => assert!((b - 2.0).abs() < 1e-12),
            _ => unreachable!(),
        }
        let v = cdf_matched(&red, 2.0, MatchFamily::Hbe).unwrap().value;
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let k = cumulants(&red, 4).kappa;
        let s1 = k[2] / (2.0 * 2f64.sqrt() * k[1].powf(1.5));
        let s2 = k[3] / (12.0 * k[1] * k[1]);
        assert!((s1 - 0.5f64.sqrt()).abs() < 1e-12 && (s2 - 0.5).abs() < 1e-12);
        match match_form(&red, MatchFamily::Liu).unwrap() {
            MatchedSurrogate::NoncentralChisq { delta, l, .. } => {
                assert_eq!(delta, 0.0);
                assert!((l - 2.0).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        let v = cdf_matched(&red, 2.0, MatchFamily::Liu).unwrap().value;
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn surrogate_cumulants_match() {
        let forms = [
            ReducedForm::central(&[1.0, 0.5, 0.25], &[1, 1, 1]).unwrap(),
            ReducedForm::new(vec![2.0, 0.3], vec![3, 1], vec![1.5, 0.2], 0.0, 0.0).unwrap(),
            ReducedForm::new(vec![0.9, 0.1], vec![1, 4], vec![0.0, 3.0], 0.0, 0.0).unwrap(),
        ];
        for red in &forms {
            let k = cumulants(red, 4).kappa;
            for (fam, n) in [
                (MatchFamily::Satterthwaite, 2),
                (MatchFamily::Pearson, 3),
                (MatchFamily::Hbe, 3),
                (MatchFamily::Wood, 3),
                (MatchFamily::Liu, 3),
            ] {
                let s = match match_form(red, fam) {
                    Ok(s) => s,
                    Err(e) => {
                        assert_eq!(fam, MatchFamily::Wood, "{e}");
                        continue;
                    }
                };
                let ks = s.cumulants(n);
                for j in 0..n {
                    assert!((ks[j] - k[j]).abs() <= 1e-10 * k[j].abs(), "{fam:?} κ{} {} vs {}", j + 1, ks[j], k[j]);
                }
            }
        }
    }

    #[test]
    fn liu_general_branch_matches_kurtosis() {
        // s1² > s2 branch: skewness and kurtosis both matched
        let red = ReducedForm::new(vec![1.0, 0.2], vec![1, 2], vec![4.0, 0.0], 0.0, 0.0).unwrap();
        let k = cumulants(&red, 4).kappa;
        let s1 = k[2] / (2.0 * 2f64.sqrt() * k[1].powf(1.5));
        let s2 = k[3] / (12.0 * k[1] * k[1]);
        assert!(s1 * s1 > s2);
        let ks = match_form(&red, MatchFamily::Liu).unwrap().cumulants(4);
        assert!((ks[3] - k[3]).abs() < 1e-9 * k[3]);
    }

    #[test]
    fn wood_near_the_95_percent_point() {
        let red = ReducedForm::central(&[1.0, 0.5, 0.25], &[1, 1, 1]).unwrap();
        let q = crate::inversion::quantile(&red, 0.95, Method::Imhof, 1e-10).unwrap();
        let v = cdf_matched(&red, q, MatchFamily::Wood).unwrap();
        assert!((v.value - 0.95).abs() < 0.01, "{}", v.value);
        assert!(v.diagnostics.notes.is_empty());
    }

    #[test]
    fn wood_falls_back_for_equal_weights() {
        let red = ReducedForm::central(&[2.0], &[3]).unwrap();
        let r = cdf_matched(&red, 5.0, MatchFamily::Wood).unwrap();
        assert!((r.value - chisq_cdf(3.0, 2.5)).abs() < 1e-12);
        assert_eq!(r.diagnostics.notes.len(), 1);
    }

    #[test]
    fn matching_rejects_indefinite_forms() {
        let red = ReducedForm::central(&[1.0, -0.5], &[1, 1]).unwrap();
        assert!(matches!(cdf_matched(&red, 0.0, MatchFamily::Hbe), Err(Error::NotApplicable(_))));
        let g = ReducedForm::new(vec![1.0], vec![1], vec![0.0], 0.5, 0.0).unwrap();
        assert!(matches!(cdf_matched(&g, 1.0, MatchFamily::Satterthwaite), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn constant_shifts_the_surrogate() {
        let red = ReducedForm::new(vec![3.0], vec![5], vec![0.0], 0.0, 2.0).unwrap();
        let v = cdf_matched(&red, 11.0, MatchFamily::Satterthwaite).unwrap().value;
        assert!((v - chisq_cdf(5.0, 3.0)).abs() < 1e-14);
    }

    #[test]
    fn reference_saddlepoint_numbers() {
        let s = saddlepoint_solve(&reference_form(), 1.0).unwrap();
        assert!((s.t0 + 1.0084).abs() < 1e-3, "{}", s.t0);
        let f = pdf_spa(&reference_form(), 1.0).unwrap().value;
        assert!((f - 0.42).abs() < 0.01, "{f}");
    }

    #[test]
    fn saddlepoint_basics() {
        let chi2 = ReducedForm::central(&[1.0], &[2]).unwrap();
        assert!((saddlepoint_solve(&chi2, 4.0).unwrap().t0 - 0.25).abs() < 1e-12);
        assert_eq!(saddlepoint_solve(&chi2, 2.0).unwrap().t0, 0.0);
        assert!(matches!(saddlepoint_solve(&chi2, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(saddlepoint_solve(&chi2, -1.0), Err(Error::Domain { .. })));
        let f = pdf_spa(&chi2, 2.0).unwrap().value;
        let exact = chisq_pdf(2.0, 2.0);
        assert!((f / exact - 1.0).abs() < 0.12);
        // residual accuracy
        let red = ReducedForm::new(vec![2.0, -1.0], vec![1, 3], vec![0.5, 2.0], 0.3, 1.0).unwrap();
        for q in [-40.0, -3.0, 0.0, 2.5, 9.0, 120.0] {
            let s = saddlepoint_solve(&red, q).unwrap();
            let r = cgf_derivative_unchecked(&red, s.t0, 1) - q;
            assert!(r.abs() <= 1e-10 * (1.0 + q.abs()), "q={q} r={r}");
            let k1 = cumulants(&red, 1).kappa[0];
            assert_eq!(s.t0 > 0.0, q > k1);
        }
    }

    #[test]
    fn gaussian_spa_is_exact() {
        let g = ReducedForm::gaussian(2.0, 1.0).unwrap();
        for q in [-3.0, 0.5, 1.0, 4.0] {
            let f = pdf_spa(&g, q).unwrap().value;
            let z = (q - 1.0) / 2.0;
            assert!((f - norm_pdf(z) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_limit_and_tails() {
        let chi1 = ReducedForm::central(&[1.0], &[1]).unwrap();
        let r = cdf_spa(&chi1, 1.0, SpaVariant::LugannaniRice).unwrap();
        let want = 0.5 + 8.0 / (6.0 * (2.0 * std::f64::consts::PI).sqrt() * 2f64.powf(1.5));
        assert!((r.value - want).abs() < 1e-14);
        // continuity across the switch region
        let a = cdf_spa(&chi1, 1.0 + 1e-3, SpaVariant::LugannaniRice).unwrap().value;
        assert!((a - want).abs() < 1e-3);
        let chi5 = ReducedForm::central(&[1.0], &[5]).unwrap();
        let u = cdf_spa(&chi5, 25.0, SpaVariant::LugannaniRice).unwrap().upper();
        let exact = chisq_ccdf(5.0, 25.0);
        assert!((u / exact - 1.0).abs() < 0.05, "{u} {exact}");
        let lu = ln_ccdf_spa(&chi5, 25.0, SpaVariant::LugannaniRice).unwrap();
        assert!((lu - u.ln()).abs() < 1e-10);
        // far tail that underflows in linear space
        let l = ln_ccdf_spa(&chi5, 2000.0, SpaVariant::LugannaniRice).unwrap();
        // ln Γ(2.5, 1000)/Γ(2.5) with the first asymptotic correction
        let x: f64 = 1000.0;
        let want = 1.5 * x.ln() - x - ln_gamma(2.5) + (1.0 + 1.5 / x).ln();
        assert!((l / want - 1.0).abs() < 1e-3, "{l} {want}");
    }

    #[test]
    fn lr_and_bn_agree_away_from_the_mean() {
        let red = ReducedForm::new(vec![1.5, 0.4, -0.7], vec![2, 1, 3], vec![0.0, 1.0, 0.5], 0.0, 0.0).unwrap();
        for q in [-12.0, -6.0, 6.0, 10.0, 20.0] {
            let s = saddlepoint_solve(&red, q).unwrap();
            if s.w.abs() < 0.5 {
                continue;
            }
            let a = cdf_spa(&red, q, SpaVariant::LugannaniRice).unwrap().value;
            let b = cdf_spa(&red, q, SpaVariant::BarndorffNielsen).unwrap().value;
            assert!((a - b).abs() < 1e-3, "q={q} {a} {b}");
        }
    }

    #[test]
    fn spa_cdf_is_monotone() {
        let red = ReducedForm::new(vec![1.0, -2.0], vec![1, 2], vec![0.5, 0.0], 0.0, 0.0).unwrap();
        let mut prev = 0.0;
        for i in 0..200 {
            let q = -30.0 + 0.2 * i as f64;
            let v = cdf_spa(&red, q, SpaVariant::LugannaniRice).unwrap().value;
            assert!(v >= prev - 1e-12, "q={q}");
            prev = v;
        }
    }
}
