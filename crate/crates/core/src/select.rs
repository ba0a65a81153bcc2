//! Method dispatch and automatic selection.

use serde::Serialize;

use crate::approx::{cdf_matched, cdf_spa, pdf_spa, MatchFamily, SpaVariant};
use crate::error::{Error, Result};
use crate::exact_series::{cdf_central_even, cdf_series, pdf_central_even, pdf_series, SeriesKind};
use crate::inversion::{cdf_davies, cdf_imhof, pdf_davies, pdf_imhof};
use crate::reduction::ReducedForm;
use crate::result::{Method, MethodResult};
use crate::transforms::{cumulants, ln_chernoff_lower, ln_chernoff_upper};

/// Tail probability below which the saddlepoint approximation is preferred.
pub const TAIL_SWITCH: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Cdf,
    Pdf,
}

/// Which tail the caller cares about; `Both` checks whichever is smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailHint {
    #[default]
    Both,
    Lower,
    Upper,
}

/// Chernoff estimate of the tail probability at q on the requested side.
pub fn chernoff_tail(red: &ReducedForm, q: f64, hint: TailHint) -> f64 {
    let up = || ln_chernoff_upper(red, q).exp();
    let lo = || ln_chernoff_lower(red, q).exp();
    match hint {
        TailHint::Upper => up(),
        TailHint::Lower => lo(),
        TailHint::Both => up().min(lo()),
    }
}

/// Picks a method from the form's class and a Chernoff tail pre-check:
/// central, even, σ = 0 → central_even (exact in both tails); far tail →
/// saddlepoint; positive definite, σ = 0 → ruben; otherwise davies.
pub fn select_method(red: &ReducedForm, quantity: Quantity, q: f64, hint: TailHint) -> Method {
    let class = red.classify();
    if red.sigma == 0.0 && red.is_central() && class.even_degrees {
        return Method::CentralEven;
    }
    if chernoff_tail(red, q, hint) < TAIL_SWITCH {
        return match quantity {
            Quantity::Cdf => Method::SpaLr,
            Quantity::Pdf => Method::SpaDensity,
        };
    }
    if red.sigma == 0.0 && red.is_positive() {
        return Method::Ruben;
    }
    Method::Davies
}

/// CDF at q by the named method.
pub fn cdf_with(red: &ReducedForm, q: f64, method: Method, tol: f64) -> Result<MethodResult> {
    if let Some(f) = MatchFamily::from_method(method) {
        return cdf_matched(red, q, f);
    }
    match method {
        Method::CentralEven => cdf_central_even(red, q),
        Method::Ruben => cdf_series(red, q, SeriesKind::Ruben, None, tol),
        Method::Kotz => cdf_series(red, q, SeriesKind::Kotz, None, tol),
        Method::Laguerre => cdf_series(red, q, SeriesKind::Laguerre, None, tol),
        Method::Imhof => cdf_imhof(red, q, tol),
        Method::Davies => cdf_davies(red, q, tol),
        Method::SpaLr => cdf_spa(red, q, SpaVariant::LugannaniRice),
        Method::SpaBn => cdf_spa(red, q, SpaVariant::BarndorffNielsen),
        other => Err(Error::not_applicable(format!("{other} does not compute a CDF"))),
    }
}

/// Density at q by the named method. The saddlepoint CDF variants map to
/// the saddlepoint density.
pub fn pdf_with(red: &ReducedForm, q: f64, method: Method, tol: f64) -> Result<MethodResult> {
    match method {
        Method::CentralEven => pdf_central_even(red, q),
        Method::Ruben => pdf_series(red, q, SeriesKind::Ruben, None, tol),
        Method::Kotz => pdf_series(red, q, SeriesKind::Kotz, None, tol),
        Method::Laguerre => pdf_series(red, q, SeriesKind::Laguerre, None, tol),
        Method::Imhof => pdf_imhof(red, q, tol),
        Method::Davies => pdf_davies(red, q, tol),
        Method::SpaDensity | Method::SpaLr | Method::SpaBn => pdf_spa(red, q),
        other => Err(Error::not_applicable(format!("{other} does not compute a density"))),
    }
}

/// CDF by the named method, or automatically when `method` is `None`.
pub fn cdf(red: &ReducedForm, q: f64, method: Option<Method>, tol: f64) -> Result<MethodResult> {
    match method {
        Some(m) => cdf_with(red, q, m, tol),
        None => cdf_auto(red, q, tol),
    }
}

pub fn pdf(red: &ReducedForm, q: f64, method: Option<Method>, tol: f64) -> Result<MethodResult> {
    match method {
        Some(m) => pdf_with(red, q, m, tol),
        None => pdf_auto(red, q, tol),
    }
}

/// Quantile by the named method. In automatic mode one method is fixed
/// for the whole root search so the CDF being inverted stays monotone: the
/// saddlepoint for probabilities beyond the tail switch, otherwise the
/// method chosen at the mean.
pub fn quantile(red: &ReducedForm, p: f64, method: Option<Method>, tol: f64) -> Result<f64> {
    crate::inversion::quantile(red, p, quantile_method(red, p, method), tol)
}

/// The CDF method [`quantile`] inverts.
pub fn quantile_method(red: &ReducedForm, p: f64, method: Option<Method>) -> Method {
    let mean = cumulants(red, 1).kappa[0];
    match method {
        Some(m) => m,
        None => match select_method(red, Quantity::Cdf, mean, TailHint::Both) {
            Method::CentralEven => Method::CentralEven,
            _ if p.min(1.0 - p) < TAIL_SWITCH => Method::SpaLr,
            m => m,
        },
    }
}

/// Automatic CDF: the selected method, falling back to Davies when it is
/// not applicable or fails to converge. The choice is recorded in the notes.
pub fn cdf_auto(red: &ReducedForm, q: f64, tol: f64) -> Result<MethodResult> {
    auto(red, q, tol, Quantity::Cdf)
}

pub fn pdf_auto(red: &ReducedForm, q: f64, tol: f64) -> Result<MethodResult> {
    auto(red, q, tol, Quantity::Pdf)
}

fn auto(red: &ReducedForm, q: f64, tol: f64, quantity: Quantity) -> Result<MethodResult> {
    let m = select_method(red, quantity, q, TailHint::Both);
    let run = |m| match quantity {
        Quantity::Cdf => cdf_with(red, q, m, tol),
        Quantity::Pdf => pdf_with(red, q, m, tol),
    };
    match run(m) {
        Ok(mut r) => {
            r.note(format!("auto-selected {m}"));
            Ok(r)
        }
        Err(e @ (Error::NotApplicable(_) | Error::Convergence { .. } | Error::Domain { .. })) if m != Method::Davies => {
            let mut r = run(Method::Davies)?;
            r.note(format!("auto-selected {m} failed ({e}); fell back to davies"));
            Ok(r)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_rules() {
        let f = ReducedForm::central(&[1.0, -1.0], &[2, 2]).unwrap();
        assert_eq!(select_method(&f, Quantity::Cdf, 0.5, TailHint::Both), Method::CentralEven);
        let g = ReducedForm::new(vec![1.0, 0.5], vec![1, 1], vec![0.0, 0.0], 2.0, 0.0).unwrap();
        assert_eq!(select_method(&g, Quantity::Cdf, 1.5, TailHint::Both), Method::Davies);
        let pd = ReducedForm::central(&[1.0, 0.5], &[1, 2]).unwrap();
        assert_eq!(select_method(&pd, Quantity::Cdf, 2.0, TailHint::Both), Method::Ruben);
        assert_eq!(select_method(&pd, Quantity::Cdf, 60.0 * 2.0, TailHint::Both), Method::SpaLr);
        assert_eq!(select_method(&pd, Quantity::Pdf, 60.0 * 2.0, TailHint::Both), Method::SpaDensity);
    }

    #[test]
    fn auto_routes_by_class() {
        let g = ReducedForm::new(vec![1.0], vec![1], vec![0.0], 1.0, 0.0).unwrap();
        let r = cdf_auto(&g, 1.0, 1e-8).unwrap();
        assert_eq!(r.method, Method::Davies);
        let r = pdf_auto(&ReducedForm::central(&[1.0], &[2]).unwrap(), 2.0, 1e-8).unwrap();
        assert!((r.value - 0.5 * (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn every_cdf_method_on_chi_square_two() {
        let f = ReducedForm::central(&[1.0], &[2]).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        for m in [
            Method::CentralEven,
            Method::Ruben,
            Method::Kotz,
            Method::Laguerre,
            Method::Imhof,
            Method::Davies,
            Method::Satterthwaite,
            Method::Pearson,
            Method::Hbe,
            Method::Wood,
            Method::Liu,
        ] {
            let r = cdf_with(&f, 2.0, m, 1e-10).unwrap();
            assert!((r.value - exact).abs() < 1e-8, "{m}: {}", r.value);
        }
        let r = cdf_with(&f, 2.0, Method::SpaLr, 1e-10).unwrap();
        assert!((r.value - exact).abs() < 0.01);
    }

    #[test]
    fn automatic_quantile() {
        let f = ReducedForm::central(&[1.0, 0.5], &[1, 1]).unwrap();
        for p in [1e-3, 0.5, 0.999] {
            let x = quantile(&f, p, None, 1e-10).unwrap();
            assert!((cdf(&f, x, None, 1e-11).unwrap().value - p).abs() < 1e-9);
        }
    }
}
