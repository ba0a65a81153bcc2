//! Reduction of raw Gaussian quadratic forms to the canonical representation
//!
//! Q = Σ_ℓ ω_ℓ χ²_{ν_ℓ}(δ²_ℓ) + σ·Z + c″
//!
//! via a factorization Σ = B·Bᵀ and an eigendecomposition of BᵀAB.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigh_desc, factor_psd, hermitian_part};

pub type C64 = Complex<f64>;

/// Relative threshold below which an eigenvalue counts as zero.
pub const ZERO_TOL: f64 = 1e-12;
/// Relative gap within which sorted eigenvalues are merged.
pub const GROUP_TOL: f64 = 1e-9;

/// xᵀAx + bᵀx + c with x ~ N(μ, Σ).
#[derive(Debug, Clone, PartialEq)]
pub struct RawForm {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl RawForm {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: f64,
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dims(n, a.ncols(), b.len(), mu.len(), sigma.nrows(), sigma.ncols())?;
        if !c.is_finite() || b.iter().chain(mu.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite entry in b, c or mu"));
        }
        Ok(RawForm { a, b, c, mu, sigma })
    }

    /// xᵀAx with x ~ N(0, I).
    pub fn standard(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, DVector::zeros(n), 0.0, DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn negated(&self) -> Self {
        RawForm {
            a: -&self.a,
            b: -&self.b,
            c: -self.c,
            mu: self.mu.clone(),
            sigma: self.sigma.clone(),
        }
    }

    /// Reduce with default tolerances and group repeated eigenvalues.
    pub fn reduce(&self) -> Result<ReducedForm> {
        Ok(group_eigenvalues(&reduce_real(self, ZERO_TOL)?, GROUP_TOL))
    }
}

/// xᴴAx + Re(bᴴx) + c with x ~ CN(μ, Σ), A Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct RawComplexForm {
    pub a: DMatrix<C64>,
    pub b: DVector<C64>,
    pub c: f64,
    pub mu: DVector<C64>,
    pub sigma: DMatrix<C64>,
}

impl RawComplexForm {
    pub fn new(
        a: DMatrix<C64>,
        b: DVector<C64>,
        c: f64,
        mu: DVector<C64>,
        sigma: DMatrix<C64>,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dims(n, a.ncols(), b.len(), mu.len(), sigma.nrows(), sigma.ncols())?;
        if !c.is_finite() {
            return Err(Error::invalid("c is not finite"));
        }
        Ok(RawComplexForm { a, b, c, mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn reduce(&self) -> Result<ReducedForm> {
        reduce_complex(self, ZERO_TOL)
    }
}

fn check_dims(n: usize, nc: usize, nb: usize, nmu: usize, sr: usize, sc: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("empty form"));
    }
    if nc != n || nb != n || nmu != n || sr != n || sc != n {
        return Err(Error::invalid(format!(
            "inconsistent dimensions: A {n}x{nc}, b {nb}, mu {nmu}, sigma {sr}x{sc}"
        )));
    }
    Ok(())
}

/// Σ λ_n χ²₁(h²_n) + σZ + c″ with every λ_n ≠ 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveForm {
    pub lambda: Vec<f64>,
    pub h2: Vec<f64>,
    pub sigma: f64,
    #[serde(rename = "const")]
    pub constant: f64,
}

/// Σ_ℓ ω_ℓ χ²_{ν_ℓ}(δ²_ℓ) + σZ + c″ with distinct ω_ℓ sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedForm {
    pub omega: Vec<f64>,
    pub nu: Vec<u32>,
    pub delta2: Vec<f64>,
    pub sigma: f64,
    #[serde(rename = "const")]
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Centrality {
    Central,
    Noncentral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    Positive,
    Negative,
    Indefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FormClass {
    pub centrality: Centrality,
    pub definiteness: Definiteness,
    pub has_gaussian: bool,
    pub even_degrees: bool,
}

impl ReducedForm {
    /// Validates and canonicalizes: sorts weights descending and merges
    /// weights closer than the grouping tolerance.
    pub fn new(
        omega: Vec<f64>,
        nu: Vec<u32>,
        delta2: Vec<f64>,
        sigma: f64,
        constant: f64,
    ) -> Result<Self> {
        let l = omega.len();
        if nu.len() != l || delta2.len() != l {
            return Err(Error::invalid(format!(
                "omega, nu, delta2 lengths differ ({l}, {}, {})",
                nu.len(),
                delta2.len()
            )));
        }
        if omega.iter().any(|w| !w.is_finite() || *w == 0.0) {
            return Err(Error::invalid("weights must be finite and nonzero"));
        }
        if nu.iter().any(|&v| v == 0) {
            return Err(Error::invalid("degrees of freedom must be >= 1"));
        }
        if delta2.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("noncentralities must be finite and >= 0"));
        }
        if !sigma.is_finite() || sigma < 0.0 || !constant.is_finite() {
            return Err(Error::invalid("sigma must be finite and >= 0, const finite"));
        }
        if l == 0 && sigma == 0.0 {
            return Err(Error::DegenerateConstant(constant));
        }
        let mut terms: Vec<(f64, u32, f64)> = omega
            .into_iter()
            .zip(nu)
            .zip(delta2)
            .map(|((w, v), d)| (w, v, d))
            .collect();
        terms.sort_by(|x, y| y.0.total_cmp(&x.0));
        let mut out = ReducedForm {
            omega: Vec::new(),
            nu: Vec::new(),
            delta2: Vec::new(),
            sigma,
            constant,
        };
        let mut i = 0;
        while i < terms.len() {
            let mut j = i + 1;
            while j < terms.len() && close(terms[j - 1].0, terms[j].0, GROUP_TOL) {
                j += 1;
            }
            let cluster = &terms[i..j];
            let nsum: u32 = cluster.iter().map(|t| t.1).sum();
            let wmean = cluster.iter().map(|t| t.0 * t.1 as f64).sum::<f64>() / nsum as f64;
            out.omega.push(wmean);
            out.nu.push(nsum);
            out.delta2.push(cluster.iter().map(|t| t.2).sum());
            i = j;
        }
        Ok(out)
    }

    /// Central form Σ ω_ℓ χ²_{ν_ℓ}.
    pub fn central(omega: &[f64], nu: &[u32]) -> Result<Self> {
        Self::new(omega.to_vec(), nu.to_vec(), vec![0.0; omega.len()], 0.0, 0.0)
    }

    /// Pure Gaussian σZ + c.
    pub fn gaussian(sigma: f64, constant: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), Vec::new(), sigma, constant)
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Ñ = Σ ν_ℓ.
    pub fn total_dof(&self) -> u32 {
        self.nu.iter().sum()
    }

    pub fn is_central(&self) -> bool {
        self.delta2.iter().all(|&d| d == 0.0)
    }

    pub fn is_positive(&self) -> bool {
        !self.omega.is_empty() && self.omega.iter().all(|&w| w > 0.0)
    }

    pub fn classify(&self) -> FormClass {
        let pos = self.omega.iter().any(|&w| w > 0.0);
        let neg = self.omega.iter().any(|&w| w < 0.0);
        FormClass {
            centrality: if self.is_central() {
                Centrality::Central
            } else {
                Centrality::Noncentral
            },
            definiteness: match (pos, neg) {
                (true, false) => Definiteness::Positive,
                (false, true) => Definiteness::Negative,
                _ => Definiteness::Indefinite,
            },
            has_gaussian: self.sigma > 0.0,
            even_degrees: self.nu.iter().all(|v| v % 2 == 0),
        }
    }

    /// Same form with constant replaced.
    pub fn with_constant(&self, constant: f64) -> Self {
        ReducedForm {
            constant,
            ..self.clone()
        }
    }

    /// −Q.
    pub fn negated(&self) -> Self {
        let l = self.len();
        let mut omega = Vec::with_capacity(l);
        let mut nu = Vec::with_capacity(l);
        let mut delta2 = Vec::with_capacity(l);
        for i in (0..l).rev() {
            omega.push(-self.omega[i]);
            nu.push(self.nu[i]);
            delta2.push(self.delta2[i]);
        }
        ReducedForm {
            omega,
            nu,
            delta2,
            sigma: self.sigma,
            constant: -self.constant,
        }
    }

    /// Expands every cluster into ν unit-degree terms; the noncentrality
    /// of a cluster is carried by its first member.
    pub fn expand(&self) -> EffectiveForm {
        let mut lambda = Vec::new();
        let mut h2 = Vec::new();
        for ((&w, &v), &d) in self.omega.iter().zip(&self.nu).zip(&self.delta2) {
            for k in 0..v {
                lambda.push(w);
                h2.push(if k == 0 { d } else { 0.0 });
            }
        }
        EffectiveForm {
            lambda,
            h2,
            sigma: self.sigma,
            constant: self.constant,
        }
    }

    /// Largest |ω|, or 0 for a pure Gaussian.
    pub fn max_abs_weight(&self) -> f64 {
        self.omega.iter().fold(0.0, |m, w| m.max(w.abs()))
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Factor Σ = B·Bᵀ; returns (B, rank).
pub fn factor_covariance(sigma: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, usize)> {
    factor_psd(sigma, tol, "sigma")
}

/// Eigen-reduction of a real form to its effective representation.
pub fn reduce_real(form: &RawForm, tol: f64) -> Result<EffectiveForm> {
    let a = hermitian_part(&form.a, "A")?;
    let (bf, _r) = factor_covariance(&form.sigma, tol)?;
    let m = bf.transpose() * &a * &bf;
    let (vals, p) = eigh_desc(&m);
    let lin = &a * &form.mu * 2.0 + &form.b;
    let d = p.transpose() * bf.transpose() * lin;
    let c1 = form.b.dot(&form.mu) + form.mu.dot(&(&a * &form.mu)) + form.c;
    let parts: Vec<(f64, f64)> = vals.iter().copied().zip(d.iter().copied()).collect();
    finish_reduction(&parts, c1, tol)
}

/// Shared tail of the real reduction. `parts` pairs each eigenvalue of
/// BᵀAB with the matching component of d.
fn finish_reduction(parts: &[(f64, f64)], c1: f64, tol: f64) -> Result<EffectiveForm> {
    let top = parts.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
    let dnorm = parts.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
    let mut lambda = Vec::new();
    let mut h2 = Vec::new();
    let mut s2 = 0.0;
    let mut c2 = c1;
    for &(l, d) in parts {
        if top > 0.0 && l.abs() > tol * top {
            let h = d / (2.0 * l);
            lambda.push(l);
            h2.push(h * h);
            c2 -= l * h * h;
        } else {
            s2 += d * d;
        }
    }
    let mut sigma = s2.sqrt();
    if sigma < 1e-12 * (1.0 + dnorm) {
        sigma = 0.0;
    }
    if lambda.is_empty() && sigma == 0.0 {
        return Err(Error::DegenerateConstant(c2));
    }
    Ok(EffectiveForm {
        lambda,
        h2,
        sigma,
        constant: c2,
    })
}

/// Merge clustered eigenvalues (single linkage on the sorted values).
pub fn group_eigenvalues(eff: &EffectiveForm, group_tol: f64) -> ReducedForm {
    let mut idx: Vec<usize> = (0..eff.lambda.len()).collect();
    idx.sort_by(|&i, &j| eff.lambda[j].total_cmp(&eff.lambda[i]));
    let mut omega = Vec::new();
    let mut nu = Vec::new();
    let mut delta2 = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && close(eff.lambda[idx[j - 1]], eff.lambda[idx[j]], group_tol) {
            j += 1;
        }
        let members = &idx[i..j];
        omega.push(members.iter().map(|&k| eff.lambda[k]).sum::<f64>() / members.len() as f64);
        nu.push(members.len() as u32);
        delta2.push(members.iter().map(|&k| eff.h2[k]).sum());
        i = j;
    }
    ReducedForm {
        omega,
        nu,
        delta2,
        sigma: eff.sigma,
        constant: eff.constant,
    }
}

/// Reduction of a complex form; every degree of freedom comes in pairs.
pub fn reduce_complex(form: &RawComplexForm, tol: f64) -> Result<ReducedForm> {
    let a = hermitian_part(&form.a, "A")?;
    let (bf, _r) = factor_psd(&form.sigma, tol, "sigma")?;
    let m = bf.adjoint() * &a * &bf;
    let (vals, p) = eigh_desc(&m);
    let lin = &a * &form.mu * C64::new(2.0, 0.0) + &form.b;
    let d = p.adjoint() * bf.adjoint() * lin;
    let c1 = form.b.dotc(&form.mu).re + form.mu.dotc(&(&a * &form.mu)).re + form.c;

    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dnorm = d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut lambda = Vec::new();
    let mut h2 = Vec::new();
    let mut s2 = 0.0;
    let mut c2 = c1;
    for (l, dz) in vals.iter().copied().zip(d.iter()) {
        let d2 = dz.norm_sqr();
        if top > 0.0 && l.abs() > tol * top {
            // (λ/2)·χ²₂(|d|²/(2λ²)), split into two unit-degree terms.
            lambda.push(0.5 * l);
            h2.push(d2 / (2.0 * l * l));
            lambda.push(0.5 * l);
            h2.push(0.0);
            c2 -= 0.25 * d2 / l;
        } else {
            s2 += 0.5 * d2;
        }
    }
    let mut sigma = s2.sqrt();
    if sigma < 1e-12 * (1.0 + dnorm) {
        sigma = 0.0;
    }
    if lambda.is_empty() && sigma == 0.0 {
        return Err(Error::DegenerateConstant(c2));
    }
    let eff = EffectiveForm {
        lambda,
        h2,
        sigma,
        constant: c2,
    };
    Ok(group_eigenvalues(&eff, GROUP_TOL))
}

pub fn classify(red: &ReducedForm) -> FormClass {
    red.classify()
}
