//! Exact and series representations of the CDF/PDF.
//!
//! * Central forms with even degrees and no Gaussian term have a rational MGF
//!   and are expanded in partial fractions; the CDF is then a finite sum of
//!   gamma CDFs.
//! * Positive definite forms admit three convergent series: Ruben's mixture
//!   of chi-square laws, the Kotz power series and a Laguerre expansion.
//!
//! Ruben truncation is controlled by a dominating series: replacing every
//! η = 1 − β/ω by |η| gives coefficients ĉ_k ≥ |c_k| whose total mass is known
//! in closed form, so Σ_{k>K} ĉ_k is a rigorous tail bound for both the
//! central and the noncentral case.

use serde::Serialize;
use statrs::function::gamma::inv_digamma;

use crate::error::{Error, Result};
use crate::reduction::ReducedForm;
use crate::result::{BoundKind, Method, MethodResult};
use crate::special::{gamma_p, gamma_q, ln_gamma, ln_gamma_pdf};
use crate::transforms::cumulants;

pub const K_MAX: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PfTerm {
    pub omega: f64,
    pub order: u32,
    pub coeff: f64,
}

/// M(t) = Σ A_ℓk (1 − 2ω_ℓ t)^{−k}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialFractionExpansion {
    pub terms: Vec<PfTerm>,
    /// Constant shift c″ of the form.
    pub shift: f64,
}

fn check_central_even(red: &ReducedForm) -> Result<()> {
    if red.sigma > 0.0 {
        return Err(Error::not_applicable("partial fractions need sigma = 0"));
    }
    if !red.is_central() {
        return Err(Error::not_applicable("partial fractions need a central form (all delta2 = 0)"));
    }
    if let Some(v) = red.nu.iter().find(|v| *v % 2 == 1) {
        return Err(Error::not_applicable(format!(
            "partial fractions need even degrees of freedom (found nu = {v})"
        )));
    }
    if red.is_empty() {
        return Err(Error::not_applicable("form has no chi-square part"));
    }
    Ok(())
}

/// Partial fraction expansion of a central even-degree MGF.
///
/// For the pole at ω_ℓ put y = 1 − 2ω_ℓ t; every other factor becomes
/// (1 − r_j)(1 + c_j y) with r_j = ω_j/ω_ℓ, c_j = r_j/(1 − r_j), so A_ℓk is the
/// coefficient of y^{m_ℓ−k} in Π_{j≠ℓ} (1 − r_j)^{−m_j}(1 + c_j y)^{−m_j}.
pub fn partial_fractions(red: &ReducedForm) -> Result<PartialFractionExpansion> {
    check_central_even(red)?;
    let l = red.len();
    let m: Vec<usize> = red.nu.iter().map(|v| (*v / 2) as usize).collect();
    let mut terms = Vec::new();
    for i in 0..l {
        let deg = m[i]; // need coefficients y^0 .. y^{m_i - 1}
        let mut poly = vec![0.0; deg];
        poly[0] = 1.0;
        let mut scale = 1.0;
        for j in 0..l {
            if j == i {
                continue;
            }
            let r = red.omega[j] / red.omega[i];
            let c = r / (1.0 - r);
            scale *= (1.0 - r).powi(-(m[j] as i32));
            // series of (1 + c y)^{-m_j}
            let mut ser = vec![0.0; deg];
            let mut coef = 1.0;
            for (n, s) in ser.iter_mut().enumerate() {
                *s = coef;
                coef *= -c * (m[j] + n) as f64 / (n + 1) as f64;
            }
            let mut next = vec![0.0; deg];
            for a in 0..deg {
                for b in 0..deg - a {
                    next[a + b] += poly[a] * ser[b];
                }
            }
            poly = next;
        }
        for k in 1..=deg {
            terms.push(PfTerm {
                omega: red.omega[i],
                order: k as u32,
                coeff: scale * poly[deg - k],
            });
        }
    }
    Ok(PartialFractionExpansion {
        terms,
        shift: red.constant,
    })
}

impl PartialFractionExpansion {
    pub fn mgf(&self, t: f64) -> f64 {
        let base: f64 = self
            .terms
            .iter()
            .map(|p| p.coeff * (1.0 - 2.0 * p.omega * t).powi(-(p.order as i32)))
            .sum();
        base * (self.shift * t).exp()
    }

    /// (CDF, CCDF) at q as sums of gamma CDFs.
    pub fn cdf_pair(&self, q: f64) -> (f64, f64) {
        let x = q - self.shift;
        let mut lower = 0.0;
        let mut upper = 0.0;
        for p in &self.terms {
            let k = p.order as f64;
            let z = x / (2.0 * p.omega);
            let (g, gc) = if p.omega > 0.0 {
                if x > 0.0 {
                    (gamma_p(k, z), gamma_q(k, z))
                } else {
                    (0.0, 1.0)
                }
            } else if x < 0.0 {
                (gamma_q(k, z), gamma_p(k, z))
            } else {
                (1.0, 0.0)
            };
            lower += p.coeff * g;
            upper += p.coeff * gc;
        }
        (lower, upper)
    }

    pub fn pdf(&self, q: f64) -> f64 {
        let x = q - self.shift;
        let mut s = 0.0;
        for p in &self.terms {
            let z = x / (2.0 * p.omega);
            if z > 0.0 {
                let k = p.order as f64;
                s += p.coeff * (ln_gamma_pdf(k, z).exp() / (2.0 * p.omega.abs()));
            } else if z == 0.0 && p.order == 1 {
                s += p.coeff / (2.0 * p.omega.abs());
            }
        }
        s
    }

    /// Σ |A_ℓk|, the amplification factor of rounding errors.
    pub fn cancellation(&self) -> f64 {
        self.terms.iter().map(|p| p.coeff.abs()).sum()
    }

    /// α_ℓj = −s_ℓ Σ_{k≥j} A_ℓk with s_ℓ = 2ω_ℓ, keyed like `terms`.
    pub fn alpha(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.terms.len()];
        let mut i = 0;
        while i < self.terms.len() {
            let w = self.terms[i].omega;
            let mut j = i;
            while j < self.terms.len() && self.terms[j].omega == w {
                j += 1;
            }
            let s = 2.0 * w;
            let mut acc = 0.0;
            for t in (i..j).rev() {
                acc += -s * self.terms[t].coeff;
                out[t] = acc;
            }
            i = j;
        }
        out
    }

    /// Exponential-polynomial form of the same CDF:
    /// F(q) = u(q) + Σ α_ℓk/((k−1)!|s|)·(q/s)^{k−1}·e^{−q/s}·u(q/s).
    pub fn cdf_exponential_form(&self, q: f64) -> f64 {
        let x = q - self.shift;
        let alpha = self.alpha();
        let mut f = if x >= 0.0 { 1.0 } else { 0.0 };
        for (p, a) in self.terms.iter().zip(alpha) {
            let s = 2.0 * p.omega;
            let z = x / s;
            if z > 0.0 || (z == 0.0 && p.omega > 0.0) {
                let k = p.order as f64;
                let ln_mag = (k - 1.0) * if z > 0.0 { z.ln() } else { 0.0 } - z - ln_gamma(k);
                let pow_zero = if z == 0.0 && p.order > 1 { 0.0 } else { 1.0 };
                f += a / s.abs() * pow_zero * ln_mag.exp();
            }
        }
        f
    }
}

pub fn cdf_central_even(red: &ReducedForm, q: f64) -> Result<MethodResult> {
    let pf = partial_fractions(red)?;
    let (lo, hi) = pf.cdf_pair(q);
    let mut r = MethodResult::new(Method::CentralEven, lo, Some(0.0), BoundKind::Rigorous)
        .with_complement(hi);
    r.note(format!(
        "exact up to floating-point rounding (amplification sum|A| = {:.3e})",
        pf.cancellation()
    ));
    r.diagnostics.truncation_index = Some(pf.terms.len());
    Ok(r)
}

pub fn pdf_central_even(red: &ReducedForm, q: f64) -> Result<MethodResult> {
    let pf = partial_fractions(red)?;
    let mut r = MethodResult::new(Method::CentralEven, pf.pdf(q), Some(0.0), BoundKind::Rigorous);
    r.note(format!(
        "exact up to floating-point rounding (amplification sum|A| = {:.3e})",
        pf.cancellation()
    ));
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Ruben,
    Kotz,
    Laguerre,
}

impl SeriesKind {
    fn method(self) -> Method {
        match self {
            SeriesKind::Ruben => Method::Ruben,
            SeriesKind::Kotz => Method::Kotz,
            SeriesKind::Laguerre => Method::Laguerre,
        }
    }
}

/// Series coefficients for a positive definite form. Coefficients are
/// extended on demand, so one instance serves many evaluation points.
///
/// For Kotz, `c[k]` stores c_k·scale^k (the raw coefficients over- or
/// underflow for small weights); Ruben and Laguerre use scale = 1.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesCoefficients {
    pub kind: SeriesKind,
    pub beta: f64,
    pub scale: f64,
    /// log of the common factor c_0 (c[0] is normalized to 1).
    pub ln_c0: f64,
    pub c: Vec<f64>,
    /// d[0] is unused; d[k] for k ≥ 1.
    pub d: Vec<f64>,
    /// Constant shift c″ subtracted from q before evaluation.
    pub shift_value: f64,
    #[serde(skip)]
    form: ReducedForm,
    /// Dominating coefficients ĉ_k (Ruben only) and their closed-form total.
    #[serde(skip)]
    c_hat: Vec<f64>,
    #[serde(skip)]
    d_hat: Vec<f64>,
    #[serde(skip)]
    ln_hat_total: f64,
    #[serde(skip)]
    hat_sum: f64,
    #[serde(skip)]
    hat_comp: f64,
}

fn check_series(red: &ReducedForm) -> Result<()> {
    if red.sigma > 0.0 {
        return Err(Error::not_applicable("series expansions need sigma = 0"));
    }
    if !red.is_positive() {
        return Err(Error::not_applicable(
            "series expansions need a positive definite form (all omega > 0)",
        ));
    }
    Ok(())
}

pub fn default_beta(red: &ReducedForm, kind: SeriesKind) -> f64 {
    let hi = red.omega.iter().cloned().fold(f64::MIN, f64::max);
    let lo = red.omega.iter().cloned().fold(f64::MAX, f64::min);
    match kind {
        SeriesKind::Ruben => 2.0 * hi * lo / (hi + lo),
        SeriesKind::Laguerre => 0.5 * (hi + lo),
        SeriesKind::Kotz => 1.0,
    }
}

pub fn series_coefficients(
    red: &ReducedForm,
    kind: SeriesKind,
    beta: Option<f64>,
    k: usize,
) -> Result<SeriesCoefficients> {
    check_series(red)?;
    let beta = beta.unwrap_or_else(|| default_beta(red, kind));
    let hi = red.omega.iter().cloned().fold(f64::MIN, f64::max);
    let lo = red.omega.iter().cloned().fold(f64::MAX, f64::min);
    match kind {
        SeriesKind::Ruben if !(beta > 0.0 && beta < 2.0 * lo) => {
            return Err(Error::invalid(format!(
                "Ruben beta must lie in (0, 2*omega_min) = (0, {}), got {beta}",
                2.0 * lo
            )))
        }
        SeriesKind::Laguerre if !(beta > 0.5 * hi) => {
            return Err(Error::invalid(format!(
                "Laguerre beta must exceed omega_max/2 = {}, got {beta}",
                0.5 * hi
            )))
        }
        _ => {}
    }
    let d2sum: f64 = red.delta2.iter().sum();
    let (ln_c0, scale, ln_hat_total) = match kind {
        SeriesKind::Ruben => {
            let mut ln_c0 = -0.5 * d2sum;
            let mut ln_hat = 0.0;
            for ((&w, &v), &d) in red.omega.iter().zip(&red.nu).zip(&red.delta2) {
                let eta = (1.0 - beta / w).abs();
                ln_c0 += 0.5 * v as f64 * (beta / w).ln();
                ln_hat += -0.5 * v as f64 * (-eta).ln_1p() + 0.5 * beta * d / w / (1.0 - eta);
            }
            if ln_c0 < -700.0 {
                return Err(Error::not_applicable(
                    "noncentrality too large for the Ruben series (c_0 underflows)",
                ));
            }
            (ln_c0, 1.0, ln_hat)
        }
        SeriesKind::Kotz => {
            let mut ln_c0 = -0.5 * d2sum;
            for (&w, &v) in red.omega.iter().zip(&red.nu) {
                ln_c0 -= 0.5 * v as f64 * (2.0 * w).ln();
            }
            (ln_c0, 2.0 * lo, 0.0)
        }
        SeriesKind::Laguerre => (0.0, 1.0, 0.0),
    };
    let mut sc = SeriesCoefficients {
        kind,
        beta,
        scale,
        ln_c0,
        c: vec![1.0],
        d: vec![0.0],
        shift_value: red.constant,
        form: red.with_constant(0.0),
        c_hat: vec![1.0],
        d_hat: vec![0.0],
        ln_hat_total,
        hat_sum: 1.0,
        hat_comp: 0.0,
    };
    sc.extend(k);
    Ok(sc)
}

impl SeriesCoefficients {
    /// Half the total degrees of freedom, N/2.
    pub fn half_dof(&self) -> f64 {
        0.5 * self.form.total_dof() as f64
    }

    fn d_term(&self, k: usize) -> (f64, f64) {
        let kf = k as f64;
        let beta = self.beta;
        let mut d = 0.0;
        let mut dh = 0.0;
        for ((&w, &v), &dl) in self.form.omega.iter().zip(&self.form.nu).zip(&self.form.delta2) {
            let v = v as f64;
            match self.kind {
                SeriesKind::Ruben => {
                    let eta = 1.0 - beta / w;
                    let e = eta.abs();
                    d += v * eta.powi(k as i32) + kf * beta * dl / w * eta.powi(k as i32 - 1);
                    dh += v * e.powi(k as i32) + kf * beta * dl / w * e.powi(k as i32 - 1);
                }
                SeriesKind::Kotz => {
                    let r = (self.scale / (2.0 * w)).powi(k as i32);
                    d += 0.5 * (v - kf * dl) * r;
                }
                SeriesKind::Laguerre => {
                    let g = 1.0 - w / beta;
                    d += 0.5 * (-(kf / beta) * w * dl * g.powi(k as i32 - 1) + v * g.powi(k as i32));
                }
            }
        }
        (d, dh)
    }

    /// Make sure c_0..c_k are available.
    pub fn extend(&mut self, k: usize) {
        while self.c.len() <= k {
            let n = self.c.len();
            let (dn, dhn) = self.d_term(n);
            self.d.push(dn);
            self.d_hat.push(dhn);
            let denom = match self.kind {
                SeriesKind::Ruben => 2.0 * n as f64,
                _ => n as f64,
            };
            let mut s = 0.0;
            let mut sh = 0.0;
            for r in 0..n {
                s += self.d[n - r] * self.c[r];
                if self.kind == SeriesKind::Ruben {
                    sh += self.d_hat[n - r] * self.c_hat[r];
                }
            }
            self.c.push(s / denom);
            if self.kind == SeriesKind::Ruben {
                let ch = sh / denom;
                self.c_hat.push(ch);
                // Kahan-compensated running sum of ĉ_k
                let y = ch - self.hat_comp;
                let t = self.hat_sum + y;
                self.hat_comp = (t - self.hat_sum) - y;
                self.hat_sum = t;
            }
        }
    }

    /// Actual coefficient c_k (unscaled).
    pub fn coefficient(&mut self, k: usize) -> f64 {
        self.extend(k);
        (self.ln_c0 - k as f64 * self.scale.ln()).exp() * self.c[k]
    }

    /// Rigorous bound on Σ_{k>K} |c_k| (Ruben only), together with the part of
    /// it that is pure rounding allowance and cannot shrink further.
    fn ruben_tail_mass(&self, kk: usize) -> (f64, f64) {
        debug_assert!(self.c_hat.len() > kk);
        let total = self.ln_hat_total.exp();
        let partial: f64 = if kk + 1 == self.c_hat.len() {
            self.hat_sum
        } else {
            self.c_hat[..=kk].iter().sum()
        };
        // rounding allowance for exp(), the compensated sum and the recursion
        let guard = f64::EPSILON
            * total
            * (8.0 + 2.0 * self.ln_hat_total.abs() + (kk as f64 + 1.0).sqrt());
        let rem = (total - partial).max(0.0) + guard;
        let c0 = self.ln_c0.exp();
        (rem * c0, guard * c0)
    }
}

/// Largest Gamma(a, 1) density at x over a ∈ {a0, a0+1, ...}.
fn sup_gamma_pdf(a0: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut best = ln_gamma_pdf(a0, x);
    let star = inv_digamma(x.ln());
    if star > a0 {
        let k = ((star - a0).floor()).max(0.0);
        for a in [a0 + k, a0 + k + 1.0] {
            best = best.max(ln_gamma_pdf(a, x));
        }
    }
    best.exp()
}

/// Evaluate the series CDF (`want_pdf = false`) or PDF at q.
fn evaluate(
    sc: &mut SeriesCoefficients,
    q: f64,
    tol: f64,
    k_max: usize,
    want_pdf: bool,
) -> Result<MethodResult> {
    let method = sc.kind.method();
    let x_raw = q - sc.shift_value;
    let n2 = sc.half_dof();
    if x_raw <= 0.0 {
        let mut v = 0.0;
        if want_pdf && x_raw == 0.0 {
            // Only N = 2 has a positive density at the origin.
            if n2 == 1.0 {
                return evaluate(sc, q + 1e-300, tol, k_max, true);
            } else if n2 < 1.0 {
                v = f64::INFINITY;
            }
        }
        let mut r = MethodResult::new(method, v, Some(0.0), BoundKind::Rigorous);
        if !want_pdf {
            r = r.with_complement(1.0);
        }
        return Ok(r);
    }
    if sc.kind == SeriesKind::Kotz {
        let k1 = cumulants(&sc.form, 1).kappa[0];
        if x_raw > 10.0 * k1 {
            return Err(Error::not_applicable(format!(
                "Kotz power series restricted to q <= 10*kappa1 = {}",
                10.0 * k1
            )));
        }
    }
    match sc.kind {
        SeriesKind::Ruben => ruben_eval(sc, x_raw, tol, k_max, want_pdf),
        SeriesKind::Kotz => kotz_eval(sc, x_raw, tol, k_max, want_pdf),
        SeriesKind::Laguerre => laguerre_eval(sc, x_raw, tol, k_max, want_pdf),
    }
}

fn ruben_eval(
    sc: &mut SeriesCoefficients,
    xq: f64,
    tol: f64,
    k_max: usize,
    want_pdf: bool,
) -> Result<MethodResult> {
    let b2 = 2.0 * sc.beta;
    let x = xq / b2;
    let n2 = sc.half_dof();
    let c0 = sc.ln_c0.exp();
    let mut lower = 0.0;
    let mut upper = 0.0;
    let mut dens = 0.0;
    let mut small_run = 0;
    let mut k = 0;
    let mut last_bound;
    loop {
        sc.extend(k);
        let ck = c0 * sc.c[k];
        let a = n2 + k as f64;
        if want_pdf {
            let t = ck * ln_gamma_pdf(a, x).exp() / b2;
            dens += t;
            small_run = if t.abs() < tol / 100.0 { small_run + 1 } else { 0 };
        } else {
            let (p, qq) = (gamma_p(a, x), gamma_q(a, x));
            lower += ck * p;
            upper += ck * qq;
            small_run = if (ck * p).abs() < tol / 100.0 && (ck * qq).abs() < tol / 100.0 {
                small_run + 1
            } else {
                0
            };
        }
        let stuck;
        {
            let (mass, floor) = sc.ruben_tail_mass(k);
            let a_next = n2 + k as f64 + 1.0;
            let factor = if want_pdf {
                sup_gamma_pdf(a_next, x) / b2
            } else {
                // CDF tail ≤ P(a_next, x)·mass; the complement's tail ≤ mass.
                1.0
            };
            let bound = mass * factor;
            stuck = floor * factor >= 0.25 * tol;
            last_bound = bound;
            if bound < tol {
                let value = if want_pdf { dens } else { lower };
                let eb = if want_pdf {
                    bound
                } else {
                    mass * gamma_p(a_next, x)
                };
                let mut r = MethodResult::new(Method::Ruben, value, Some(eb), BoundKind::Rigorous);
                if !want_pdf {
                    r = r.with_complement(upper);
                }
                r.diagnostics.truncation_index = Some(k);
                r.diagnostics.beta = Some(sc.beta);
                return Ok(r);
            }
        }
        if small_run >= 20 && stuck {
            let value = if want_pdf { dens } else { lower };
            let mut r =
                MethodResult::new(Method::Ruben, value, Some(tol), BoundKind::Heuristic);
            if !want_pdf {
                r = r.with_complement(upper);
            }
            r.note("stopped on 20 consecutive small terms; rigorous tail bound not reached");
            r.diagnostics.truncation_index = Some(k);
            r.diagnostics.beta = Some(sc.beta);
            return Ok(r);
        }
        k += 1;
        if k > k_max {
            let value = if want_pdf { dens } else { lower };
            let mut r = MethodResult::new(
                Method::Ruben,
                value,
                Some(last_bound),
                BoundKind::Rigorous,
            );
            if !want_pdf {
                r = r.with_complement(upper);
            }
            r.diagnostics.truncation_index = Some(k_max);
            return Err(Error::convergence(
                format!("Ruben series did not reach tol {tol:e} within {k_max} terms"),
                Some(r),
            ));
        }
    }
}

fn kotz_eval(
    sc: &mut SeriesCoefficients,
    xq: f64,
    tol: f64,
    k_max: usize,
    want_pdf: bool,
) -> Result<MethodResult> {
    let n2 = sc.half_dof();
    let lnq = xq.ln();
    let ln_ratio = (xq / sc.scale).ln();
    let mut sum = 0.0;
    let mut biggest: f64 = 0.0;
    // rounding error carried by the terms themselves
    let mut term_err = 0.0;
    let mut small_run = 0;
    let mut last = 0.0;
    for k in 0..=k_max {
        sc.extend(k);
        let ck = sc.c[k];
        let term = if ck == 0.0 {
            0.0
        } else {
            let g = if want_pdf {
                n2 + k as f64
            } else {
                n2 + k as f64 + 1.0
            };
            let p = if want_pdf { n2 - 1.0 } else { n2 };
            let ln = sc.ln_c0 + ck.abs().ln() + k as f64 * ln_ratio + p * lnq - ln_gamma(g);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 } * ck.signum();
            let t = ln.exp();
            term_err += t * f64::EPSILON * (1.0 + ln.abs() + k as f64);
            sign * t
        };
        sum += term;
        biggest = biggest.max(term.abs());
        last = term.abs();
        small_run = if term.abs() < tol / 100.0 { small_run + 1 } else { 0 };
        if small_run >= 20 && k > 0 {
            // exp(ln) amplifies the error in ln, the c_k recursion adds about k ulps
            let noise = term_err + biggest * f64::EPSILON * (k as f64 + 1.0).sqrt();
            let mut r =
                MethodResult::new(Method::Kotz, sum, Some(tol + noise), BoundKind::Heuristic);
            if !want_pdf {
                r = r.with_complement(1.0 - sum);
            }
            r.diagnostics.truncation_index = Some(k);
            r.note(format!("alternating power series; largest term {biggest:.3e}"));
            if noise > tol {
                return Err(Error::convergence(
                    format!("cancellation in the alternating series: rounding error {noise:.1e} exceeds tol {tol:e}"),
                    Some(r),
                ));
            }
            return Ok(r);
        }
    }
    let mut r = MethodResult::new(Method::Kotz, sum, Some(last), BoundKind::Heuristic);
    r.diagnostics.truncation_index = Some(k_max);
    Err(Error::convergence("Kotz series did not converge", Some(r)))
}

fn laguerre_eval(
    sc: &mut SeriesCoefficients,
    xq: f64,
    tol: f64,
    k_max: usize,
    want_pdf: bool,
) -> Result<MethodResult> {
    let n2 = sc.half_dof();
    let x = xq / (2.0 * sc.beta);
    // generalized Laguerre L_k^{alpha}(x) by three-term recurrence
    let alpha = if want_pdf { n2 - 1.0 } else { n2 };
    let mut l_prev = 0.0;
    let mut l_cur = 1.0; // L_0
    let mut sum = if want_pdf {
        ln_gamma_pdf(n2, x).exp() / (2.0 * sc.beta)
    } else {
        gamma_p(n2, x)
    };
    let mut upper = if want_pdf { 0.0 } else { gamma_q(n2, x) };
    let lead = alpha * x.ln() - x; // log of x^alpha e^{-x}
    let mut small_run = 0;
    let mut last = 0.0;
    for k in 1..=k_max {
        sc.extend(k);
        let ck = sc.c[k];
        // polynomial index: k for the PDF, k-1 for the CDF
        let idx = if want_pdf { k } else { k - 1 };
        if want_pdf {
            let next = ((2.0 * (k - 1) as f64 + 1.0 + alpha - x) * l_cur
                - ((k - 1) as f64 + alpha) * l_prev)
                / k as f64;
            l_prev = l_cur;
            l_cur = next;
        } else if idx > 0 {
            let j = idx - 1;
            let next = ((2.0 * j as f64 + 1.0 + alpha - x) * l_cur - (j as f64 + alpha) * l_prev)
                / (j + 1) as f64;
            l_prev = l_cur;
            l_cur = next;
        }
        let term = if ck == 0.0 || l_cur == 0.0 {
            0.0
        } else {
            let ln_fact = ln_gamma(if want_pdf { k as f64 + 1.0 } else { k as f64 });
            let mut ln = ck.abs().ln() + ln_fact - ln_gamma(n2 + k as f64) + lead + l_cur.abs().ln();
            if want_pdf {
                ln -= (2.0 * sc.beta).ln();
            }
            ck.signum() * l_cur.signum() * ln.exp()
        };
        sum += term;
        upper -= term;
        last = term.abs();
        small_run = if term.abs() < tol / 100.0 { small_run + 1 } else { 0 };
        if small_run >= 20 {
            let mut r = MethodResult::new(Method::Laguerre, sum, Some(tol), BoundKind::Heuristic);
            if !want_pdf {
                r = r.with_complement(upper);
            }
            r.diagnostics.truncation_index = Some(k);
            r.diagnostics.beta = Some(sc.beta);
            return Ok(r);
        }
    }
    let mut r = MethodResult::new(Method::Laguerre, sum, Some(last), BoundKind::Heuristic);
    r.diagnostics.truncation_index = Some(k_max);
    Err(Error::convergence("Laguerre series did not converge", Some(r)))
}

impl SeriesCoefficients {
    pub fn cdf(&mut self, q: f64, tol: f64, k_max: usize) -> Result<MethodResult> {
        evaluate(self, q, tol, k_max, false)
    }

    pub fn pdf(&mut self, q: f64, tol: f64, k_max: usize) -> Result<MethodResult> {
        let mut r = evaluate(self, q, tol, k_max, true)?;
        if self.kind == SeriesKind::Ruben && r.bound_kind != BoundKind::Approximate {
            if let Some(k) = r.diagnostics.truncation_index {
                if let Ok(b) = ropokis_bound(&self.form, self.beta, k, q - self.shift_value) {
                    if let Some(eb) = r.error_bound.as_mut() {
                        *eb = eb.min(b);
                    }
                    r.bound_kind = BoundKind::Rigorous;
                }
            }
        }
        Ok(r)
    }
}

pub fn cdf_series(
    red: &ReducedForm,
    q: f64,
    kind: SeriesKind,
    beta: Option<f64>,
    tol: f64,
) -> Result<MethodResult> {
    let mut sc = series_coefficients(red, kind, beta, 0)?;
    sc.cdf(q, tol, K_MAX)
}

pub fn pdf_series(
    red: &ReducedForm,
    q: f64,
    kind: SeriesKind,
    beta: Option<f64>,
    tol: f64,
) -> Result<MethodResult> {
    let mut sc = series_coefficients(red, kind, beta, 0)?;
    sc.pdf(q, tol, K_MAX)
}

/// Truncation bound for the Ruben density series after K terms, for central
/// forms with an even number of variables.
///
/// The |η| values are sorted decreasingly and paired, a_i = ξ_{2i−1}; then
/// Π(1 − ξθ)^{−1/2} is dominated by Π(1 − a_iθ)^{−1}, whose coefficients are
/// complete homogeneous symmetric polynomials. The tail of the density
/// series summed against them has the closed form
/// c₀ Σ_i Δ_i·e^{−(1−a_i)x}·P(K+N/2, a_i x)/(2β) with Δ_i = Π_{l≠i} 1/(a_i − a_l),
/// used when the a_i are well separated; otherwise the tail is summed directly.
pub fn ruben_truncation_bound(red: &ReducedForm, beta: f64, k: usize, q: f64) -> Result<f64> {
    ropokis_bound(red, beta, k, q - red.constant)
}

fn ropokis_bound(red: &ReducedForm, beta: f64, kk: usize, xq: f64) -> Result<f64> {
    check_series(red)?;
    if !red.is_central() {
        return Err(Error::not_applicable("truncation bound needs a central form"));
    }
    let n_tot = red.total_dof() as usize;
    if n_tot % 2 == 1 {
        return Err(Error::not_applicable(
            "truncation bound needs an even number of variables",
        ));
    }
    if xq <= 0.0 {
        return Ok(0.0);
    }
    let n = n_tot / 2;
    let mut xi: Vec<f64> = Vec::with_capacity(n_tot);
    for (&w, &v) in red.omega.iter().zip(&red.nu) {
        for _ in 0..v {
            xi.push((1.0 - beta / w).abs());
        }
    }
    xi.sort_by(|a, b| b.total_cmp(a));
    let a: Vec<f64> = (0..n).map(|i| xi[2 * i]).collect();
    let mut ln_c0 = 0.0;
    for (&w, &v) in red.omega.iter().zip(&red.nu) {
        ln_c0 += 0.5 * v as f64 * (beta / w).ln();
    }
    let b = 2.0 * beta;
    let x = xq / b;
    let m = kk + n; // P(m, a x) = Σ_{j ≥ m} Poisson(j; a x)

    let amax = a.iter().cloned().fold(0.0, f64::max);
    if amax == 0.0 {
        return Ok(0.0);
    }
    // Closed form when the a_i are distinct and the alternating sum is stable.
    let distinct = {
        let mut s = a.clone();
        s.sort_by(|p, q| q.total_cmp(p));
        s.windows(2).all(|w| w[0] - w[1] > 1e-3 * w[0])
    };
    if distinct {
        let mut total = 0.0;
        let mut magnitude = 0.0;
        for i in 0..n {
            let mut ln_delta = 0.0;
            let mut sign = 1.0;
            for l in 0..n {
                if l != i {
                    let diff = a[i] - a[l];
                    sign *= diff.signum();
                    ln_delta -= diff.abs().ln();
                }
            }
            let tail = (-(1.0 - a[i]) * x).exp() * gamma_p(m as f64, a[i] * x) / b;
            let t = sign * ln_delta.exp() * tail;
            total += t;
            magnitude += t.abs();
        }
        if total > 0.0 && magnitude * 1e-10 < total {
            return Ok(ln_c0.exp() * total * (1.0 + 1e-9));
        }
    }
    // Direct summation of h_k(a)·g_{n+k}(x). Past index J the terms are
    // dominated using h_k(a) ≤ C(n+k−1, k)·amax^k, whose sum is closed form.
    let extra = 2000 + (4.0 * x) as usize;
    let mut h = vec![0.0; kk + extra + 1];
    h[0] = 1.0;
    for &ai in &a {
        for j in 1..h.len() {
            h[j] += ai * h[j - 1];
        }
    }
    let mut s = 0.0;
    let mut jj = kk;
    for (j, &hj) in h.iter().enumerate().skip(kk + 1) {
        let t = hj * (ln_gamma_pdf(n as f64 + j as f64, x)).exp() / b;
        s += t;
        jj = j;
        if j as f64 > 2.0 * x + 10.0 && t < 1e-17 * s {
            break;
        }
    }
    let nf = n as f64;
    let ln_env = (nf - 1.0) * x.ln() - x - ln_gamma(nf) + amax * x;
    let rem = ln_env.exp() * gamma_p(jj as f64 + 1.0, amax * x) / b;
    Ok(ln_c0.exp() * (s * (1.0 + 1e-12) + rem))
}
