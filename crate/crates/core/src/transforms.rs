//! MGF, CF, CGF, cumulants and moments of a reduced form.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reduction::ReducedForm;

/// Open interval (t_left, t_right) on which the MGF is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfDomain {
    pub t_left: f64,
    pub t_right: f64,
}

impl MgfDomain {
    pub fn contains(&self, t: f64) -> bool {
        t > self.t_left && t < self.t_right
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantSet {
    /// κ_1..κ_J; `kappa[0]` is the mean.
    pub kappa: Vec<f64>,
}

impl CumulantSet {
    /// κ_j (1-based).
    pub fn get(&self, j: usize) -> Option<f64> {
        self.kappa.get(j.wrapping_sub(1)).copied()
    }

    pub fn order(&self) -> usize {
        self.kappa.len()
    }
}

pub const DEFAULT_CUMULANT_ORDER: usize = 8;

pub fn mgf_domain(red: &ReducedForm) -> MgfDomain {
    let mut pos: f64 = 0.0;
    let mut neg: f64 = 0.0;
    for &w in &red.omega {
        if w > 0.0 {
            pos = pos.max(w);
        } else {
            neg = neg.max(-w);
        }
    }
    MgfDomain {
        t_left: if neg > 0.0 { -0.5 / neg } else { f64::NEG_INFINITY },
        t_right: if pos > 0.0 { 0.5 / pos } else { f64::INFINITY },
    }
}

fn check_domain(red: &ReducedForm, t: f64) -> Result<()> {
    let d = mgf_domain(red);
    if d.contains(t) {
        Ok(())
    } else {
        Err(Error::Domain {
            t,
            t_left: d.t_left,
            t_right: d.t_right,
        })
    }
}

/// K(t) = log M(t), evaluated without forming the product.
pub fn cgf(red: &ReducedForm, t: f64) -> Result<f64> {
    check_domain(red, t)?;
    Ok(cgf_unchecked(red, t))
}

pub(crate) fn cgf_unchecked(red: &ReducedForm, t: f64) -> f64 {
    let mut k = 0.5 * red.sigma * red.sigma * t * t + red.constant * t;
    for ((&w, &v), &d) in red.omega.iter().zip(&red.nu).zip(&red.delta2) {
        let x = -2.0 * w * t;
        let one_minus = 1.0 + x;
        k += -0.5 * v as f64 * x.ln_1p() + t * d * w / one_minus;
    }
    k
}

pub fn mgf(red: &ReducedForm, t: f64) -> Result<f64> {
    cgf(red, t).map(f64::exp)
}

/// φ(β) = E exp(iβQ).
pub fn cf(red: &ReducedForm, beta: f64) -> Complex64 {
    ln_cf(red, beta).exp()
}

pub(crate) fn ln_cf(red: &ReducedForm, beta: f64) -> Complex64 {
    let i = Complex64::i();
    let mut acc = Complex64::new(-0.5 * red.sigma * red.sigma * beta * beta, red.constant * beta);
    for ((&w, &v), &d) in red.omega.iter().zip(&red.nu).zip(&red.delta2) {
        let z = Complex64::new(1.0, -2.0 * w * beta);
        acc += -0.5 * v as f64 * z.ln() + i * beta * d * w / z;
    }
    acc
}

/// m-th derivative of the CGF at t; m = 0 returns K(t).
pub fn cgf_derivative(red: &ReducedForm, t: f64, m: u32) -> Result<f64> {
    check_domain(red, t)?;
    Ok(cgf_derivative_unchecked(red, t, m))
}

pub(crate) fn cgf_derivative_unchecked(red: &ReducedForm, t: f64, m: u32) -> f64 {
    if m == 0 {
        return cgf_unchecked(red, t);
    }
    let mf = m as f64;
    // 2^{m-1}(m-1)!
    let mut pref = 1.0;
    for j in 1..m {
        pref *= 2.0 * j as f64;
    }
    let mut s = 0.0;
    for ((&w, &v), &d) in red.omega.iter().zip(&red.nu).zip(&red.delta2) {
        let r = 1.0 / (1.0 - 2.0 * w * t);
        let rm = r.powi(m as i32);
        s += w.powi(m as i32) * rm * (v as f64 + mf * d * r);
    }
    let mut out = pref * s;
    if m == 1 {
        out += red.sigma * red.sigma * t + red.constant;
    } else if m == 2 {
        out += red.sigma * red.sigma;
    }
    out
}

pub fn cumulants(red: &ReducedForm, order: usize) -> CumulantSet {
    let kappa = (1..=order as u32)
        .map(|j| cgf_derivative_unchecked(red, 0.0, j))
        .collect();
    CumulantSet { kappa }
}

/// Raw moments μ̃_1..μ̃_J from cumulants.
pub fn raw_moments(kappas: &CumulantSet) -> Vec<f64> {
    let j = kappas.order();
    let mut m = vec![1.0];
    for k in 1..=j {
        let mut s = 0.0;
        let mut binom = 1.0; // C(k-1, l)
        for l in 0..k {
            s += binom * m[l] * kappas.kappa[k - l - 1];
            binom *= (k - 1 - l) as f64 / (l + 1) as f64;
        }
        m.push(s);
    }
    m.split_off(1)
}

/// Minimizes the convex function K(t) − t·x over t ∈ [lo, hi] by golden
/// section; returns the minimal value (a log Chernoff bound).
fn golden_min(red: &ReducedForm, x: f64, lo: f64, hi: f64) -> f64 {
    let g = |t: f64| cgf_unchecked(red, t) - t * x;
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..120 {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()) {
            break;
        }
    }
    g(lo).min(gc).min(gd).min(g(0.5 * (a + b)))
}

/// Finite search end for the Chernoff minimization on one side.
fn search_end(red: &ReducedForm, x: f64, edge: f64, sign: f64) -> f64 {
    if edge.is_finite() {
        return edge * (1.0 - 1e-12);
    }
    // No singularity on this side: grow until K'(t) − x changes sign.
    let scale = 1.0 / (cumulants(red, 2).kappa[1].sqrt() + red.max_abs_weight() + 1e-300);
    let mut t = sign * scale;
    for _ in 0..200 {
        let slope = cgf_derivative_unchecked(red, t, 1) - x;
        if slope * sign > 0.0 {
            break;
        }
        t *= 2.0;
    }
    t
}

/// log of the Chernoff bound on P(Q ≥ x).
pub fn ln_chernoff_upper(red: &ReducedForm, x: f64) -> f64 {
    let dom = mgf_domain(red);
    let hi = search_end(red, x, dom.t_right, 1.0);
    golden_min(red, x, 0.0, hi).min(0.0)
}

/// log of the Chernoff bound on P(Q ≤ x).
pub fn ln_chernoff_lower(red: &ReducedForm, x: f64) -> f64 {
    let dom = mgf_domain(red);
    let lo = search_end(red, x, dom.t_left, -1.0);
    golden_min(red, x, lo, 0.0).min(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chi2(nu: u32) -> ReducedForm {
        ReducedForm::central(&[1.0], &[nu]).unwrap()
    }

    #[test]
    fn mgf_of_chi_square_two() {
        assert!((mgf(&chi2(2), 0.25).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(mgf(&chi2(2), 0.0).unwrap(), 1.0);
        assert!(matches!(mgf(&chi2(2), 0.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn domains() {
        let d = mgf_domain(&ReducedForm::central(&[2.0, -2.0], &[1, 1]).unwrap());
        assert_eq!((d.t_left, d.t_right), (-0.25, 0.25));
        let d = mgf_domain(&ReducedForm::central(&[0.5], &[1]).unwrap());
        assert_eq!((d.t_left, d.t_right), (f64::NEG_INFINITY, 1.0));
        let d = mgf_domain(&ReducedForm::central(&[-1.0, -3.0], &[1, 1]).unwrap());
        assert_eq!((d.t_left, d.t_right), (-1.0 / 6.0, f64::INFINITY));
    }

    #[test]
    fn cf_of_chi_square_two() {
        let z = cf(&chi2(2), 1.0);
        let want = Complex64::new(1.0, 0.0) / Complex64::new(1.0, -2.0);
        assert!((z - want).norm() < 1e-15);
        assert_eq!(cf(&chi2(2), 0.0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn cumulant_formulas() {
        let k = cumulants(&chi2(3), 3).kappa;
        assert_eq!(k, vec![3.0, 6.0, 24.0]);
        let f = ReducedForm::new(vec![1.0], vec![1], vec![1.0], 0.0, 0.0).unwrap();
        assert_eq!(cumulants(&f, 3).kappa, vec![2.0, 6.0, 32.0]);
        let g = ReducedForm::new(vec![1.0], vec![1], vec![1.0], 5.0, 0.0).unwrap();
        let kg = cumulants(&g, 3).kappa;
        assert_eq!(kg[1], 31.0);
        assert_eq!(kg[2], 32.0);
    }

    #[test]
    fn moments_from_cumulants() {
        let m = raw_moments(&cumulants(&chi2(2), 4));
        assert_eq!(m[0], 2.0);
        assert_eq!(m[1], 8.0);
        // E[χ²₂^k] = 2^k k!
        assert!((m[2] - 48.0).abs() < 1e-12);
        assert!((m[3] - 384.0).abs() < 1e-12);
    }

    #[test]
    fn third_derivative_matches_cumulant() {
        let f = ReducedForm::new(vec![2.0, -0.5], vec![1, 3], vec![0.3, 1.2], 0.7, 0.1).unwrap();
        let k3 = cumulants(&f, 3).kappa[2];
        assert!((cgf_derivative(&f, 0.0, 3).unwrap() - k3).abs() < 1e-12 * k3.abs());
    }

    #[test]
    fn effective_and_reduced_mgf_agree_on_worked_example_two() {
        let red = ReducedForm::new(
            vec![25.0, -25.0],
            vec![2, 1],
            vec![1186.0 / 625.0, 64.0 / 625.0],
            0.0,
            -1122.0 / 25.0,
        )
        .unwrap();
        let lam = [25.0, 25.0, -25.0];
        let h2 = [961.0 / 625.0, 9.0 / 25.0, 64.0 / 625.0];
        let t = 0.005;
        let mut direct = red.constant * t;
        for (l, h) in lam.iter().zip(h2) {
            direct += -0.5 * (1.0 - 2.0 * l * t).ln() + t * h * l / (1.0 - 2.0 * l * t);
        }
        let m = mgf(&red, t).unwrap();
        assert!((m - direct.exp()).abs() < 1e-12 * m);
    }

    #[test]
    fn chernoff_bounds_dominate_chi_square_tails() {
        let f = chi2(3);
        for x in [5.0, 10.0, 20.0] {
            let b = ln_chernoff_upper(&f, x).exp();
            assert!(b >= crate::special::chisq_ccdf(3.0, x));
        }
        let b = ln_chernoff_lower(&f, 0.1).exp();
        assert!(b >= crate::special::chisq_cdf(3.0, 0.1) && b < 0.1);
    }
}
