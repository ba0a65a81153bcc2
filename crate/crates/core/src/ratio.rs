//! Ratios R = xᵀAx / xᵀBx with B positive semidefinite.
//!
//! The CDF goes through the indefinite form xᵀ(A − rB)x at zero, reduced
//! afresh for every r. Moments use either the Bao–Kan series or the
//! Magnus-type integral, both after whitening x to N(m, I).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::approx::saddlepoint_solve;
use crate::error::{Error, Result};
use crate::linalg::{eigh_desc, hermitian_part, norm_max};
use crate::quadrature::{integrate, integrate_half_line};
use crate::reduction::{factor_covariance, RawForm, ZERO_TOL};
use crate::result::{BoundKind, Method, MethodResult};
use crate::special::ln_gamma;

/// Relative size below which a block of A or an eigenvalue of B is zero.
const NULL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RatioSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl RatioSpec {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || b.nrows() != n || mu.len() != n || sigma.nrows() != n {
            return Err(Error::invalid("A, B, mu and sigma must share one dimension"));
        }
        let a = hermitian_part(&a, "A")?;
        let b = hermitian_part(&b, "B")?;
        let (vals, _) = eigh_desc(&b);
        let top = vals[0];
        if top <= 0.0 {
            return Err(Error::invalid("B must be nonzero positive semidefinite"));
        }
        let low = *vals.last().unwrap();
        if low < -1e-8 * top {
            return Err(Error::invalid(format!("B is not positive semidefinite (eigenvalue {low:.3e})")));
        }
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("mu has non-finite entries"));
        }
        let sigma = hermitian_part(&sigma, "sigma")?;
        Ok(RatioSpec { a, b, mu, sigma })
    }

    /// x ~ N(0, I).
    pub fn standard(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// The ratio in whitened coordinates: y ~ N(m, I_k), R = yᵀAy / yᵀBy.
#[derive(Debug, Clone)]
struct Whitened {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    m: DVector<f64>,
}

fn whiten(spec: &RatioSpec) -> Result<Whitened> {
    let (f, k) = factor_covariance(&spec.sigma, ZERO_TOL)?;
    if k == 0 {
        return Err(Error::invalid("sigma is zero"));
    }
    // columns of F are orthogonal, so F⁺ = (FᵀF)⁻¹Fᵀ is a diagonal rescaling
    let ftf = f.transpose() * &f;
    let m = DVector::from_fn(k, |i, _| f.column(i).dot(&spec.mu) / ftf[(i, i)]);
    let resid = &spec.mu - &f * &m;
    if resid.norm() > 1e-8 * (1.0 + spec.mu.norm()) {
        return Err(Error::not_applicable("mean lies outside the range of the covariance"));
    }
    Ok(Whitened {
        a: f.transpose() * &spec.a * &f,
        b: f.transpose() * &spec.b * &f,
        m,
    })
}

/// The form xᵀ(A − rB)x with the ratio's mean and covariance.
pub fn ratio_to_indefinite(spec: &RatioSpec, r: f64) -> RawForm {
    let n = spec.dim();
    RawForm {
        a: &spec.a - &spec.b * r,
        b: DVector::zeros(n),
        c: 0.0,
        mu: spec.mu.clone(),
        sigma: spec.sigma.clone(),
    }
}

/// P(R ≤ r) = P(xᵀ(A − rB)x ≤ 0). `None` selects the method automatically.
pub fn cdf_ratio(spec: &RatioSpec, r: f64, method: Option<Method>, tol: f64) -> Result<MethodResult> {
    match ratio_to_indefinite(spec, r).reduce() {
        Ok(red) => crate::select::cdf(&red, 0.0, method, tol),
        Err(Error::DegenerateConstant(c)) => {
            let v = if c <= 0.0 { 1.0 } else { 0.0 };
            Ok(MethodResult::new(Method::Constant, v, Some(0.0), BoundKind::Rigorous).with_complement(1.0 - v))
        }
        Err(e) => Err(e),
    }
}

/// Saddlepoint density of R at r, unnormalized.
pub fn pdf_ratio_spa(spec: &RatioSpec, r: f64) -> Result<MethodResult> {
    let w = whiten(spec)?;
    let v = spa_density(&w, r)?;
    let mut out = MethodResult::approximate(Method::SpaDensity, v.0);
    out.diagnostics.saddlepoint = Some(v.1);
    Ok(out)
}

/// Returns (density, t₀). The density is E_t₀[xᵀBx]·M(t₀)/√(2πK″(t₀)),
/// where E_t₀ is the expectation under the exponentially tilted law.
fn spa_density(w: &Whitened, r: f64) -> Result<(f64, f64)> {
    let k = w.a.nrows();
    let mm = &w.a - &w.b * r;
    let form = RawForm {
        a: mm.clone(),
        b: DVector::zeros(k),
        c: 0.0,
        mu: w.m.clone(),
        sigma: DMatrix::identity(k, k),
    };
    let red = form.reduce()?;
    let s = saddlepoint_solve(&red, 0.0)?;
    let t = s.t0;
    // tilted law of y: N(V(m), V) with V = (I − 2tM)⁻¹
    let vinv = DMatrix::identity(k, k) - &mm * (2.0 * t);
    let chol = vinv
        .cholesky()
        .ok_or_else(|| Error::not_applicable("tilted covariance is not positive definite"))?;
    let v = chol.inverse();
    let mean = &v * &w.m;
    let j = (&w.b * &v).trace() + mean.dot(&(&w.b * &mean));
    let dens = j * (s.k - 0.5 * (2.0 * std::f64::consts::PI * s.k2).ln()).exp();
    Ok((dens, t))
}

/// Closure of the support of R, possibly infinite on either side.
pub fn ratio_support(spec: &RatioSpec) -> Result<(f64, f64)> {
    let w = whiten(spec)?;
    let (bv, p) = eigh_desc(&w.b);
    let top = bv[0];
    let rb = bv.iter().filter(|&&x| x > NULL_TOL * top).count();
    let k = bv.len();
    let scale = norm_max(&w.a).max(1e-300);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    if rb < k {
        let p2 = p.columns(rb, k - rb).into_owned();
        let a22 = p2.transpose() * &w.a * &p2;
        let (ev, _) = eigh_desc(&a22);
        if ev[0] > NULL_TOL * scale {
            hi = f64::INFINITY;
        }
        if *ev.last().unwrap() < -NULL_TOL * scale {
            lo = f64::NEG_INFINITY;
        }
        let p1 = p.columns(0, rb).into_owned();
        if norm_max(&(p1.transpose() * &w.a * &p2)) > NULL_TOL * scale {
            return Ok((f64::NEG_INFINITY, f64::INFINITY));
        }
    }
    // generalized eigenvalues of (A, B) on the range of B
    let p1 = p.columns(0, rb).into_owned();
    let dinv = DMatrix::from_diagonal(&DVector::from_iterator(rb, bv[..rb].iter().map(|x| 1.0 / x.sqrt())));
    let c = &dinv * p1.transpose() * &w.a * &p1 * &dinv;
    let (ev, _) = eigh_desc(&c);
    Ok((lo.min(*ev.last().unwrap()), hi.max(ev[0])))
}

/// ∫ pdf_ratio_spa over the support, for normalizing the saddlepoint density.
pub fn spa_normalizer(spec: &RatioSpec, tol: f64) -> Result<f64> {
    let w = whiten(spec)?;
    let (lo, hi) = ratio_support(spec)?;
    let f = |r: f64| spa_density(&w, r).map(|v| v.0).unwrap_or(0.0);
    let q = if lo.is_finite() && hi.is_finite() {
        integrate(f, lo, hi, tol, 4000)
    } else {
        // r = c + s·tan θ over the matching θ range
        let c = if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            0.0
        };
        let s = 1.0 + c.abs();
        let th = |x: f64| if x.is_finite() { ((x - c) / s).atan() } else { x.signum() * std::f64::consts::FRAC_PI_2 };
        let g = |th: f64| {
            let cs = th.cos();
            if cs <= 0.0 {
                return 0.0;
            }
            f(c + s * th.tan()) * s / (cs * cs)
        };
        integrate(g, th(lo), th(hi), tol, 4000)
    };
    if !q.converged {
        return Err(Error::convergence("normalizing integral did not converge", None));
    }
    Ok(q.value)
}

/// Saddlepoint density divided by its integral over the support.
pub fn pdf_ratio_spa_normalized(spec: &RatioSpec, r: f64, tol: f64) -> Result<MethodResult> {
    let mut out = pdf_ratio_spa(spec, r)?;
    let c = spa_normalizer(spec, tol)?;
    out.value /= c;
    out.diagnostics.raw_value = out.value;
    out.note(format!("normalized by {c:.10}"));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExistenceCondition {
    /// B positive definite.
    PositiveDefinite,
    /// P₂ᵀAP₂ ≠ 0: needs 2p < r_B.
    NullBlock,
    /// P₂ᵀAP₂ = 0, P₁ᵀAP₂ ≠ 0: needs p < r_B.
    CrossBlock,
    /// A vanishes on the null space of B.
    Decoupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MomentExistence {
    pub exists: bool,
    pub condition: ExistenceCondition,
    pub r_b: usize,
}

/// Whether E[R^p] is finite.
pub fn moment_exists(spec: &RatioSpec, p: u32) -> Result<MomentExistence> {
    let w = whiten(spec)?;
    let (bv, vecs) = eigh_desc(&w.b);
    let k = bv.len();
    let r_b = bv.iter().filter(|&&x| x > NULL_TOL * bv[0]).count();
    if r_b == k {
        return Ok(MomentExistence { exists: true, condition: ExistenceCondition::PositiveDefinite, r_b });
    }
    let scale = norm_max(&w.a).max(f64::MIN_POSITIVE);
    let p1 = vecs.columns(0, r_b);
    let p2 = vecs.columns(r_b, k - r_b);
    let a22 = p2.transpose() * &w.a * p2;
    let p = p as usize;
    if norm_max(&a22) > NULL_TOL * scale {
        return Ok(MomentExistence { exists: 2 * p < r_b, condition: ExistenceCondition::NullBlock, r_b });
    }
    let a12 = p1.transpose() * &w.a * p2;
    if norm_max(&a12) > NULL_TOL * scale {
        return Ok(MomentExistence { exists: p < r_b, condition: ExistenceCondition::CrossBlock, r_b });
    }
    Ok(MomentExistence { exists: true, condition: ExistenceCondition::Decoupled, r_b })
}

fn require_moment(spec: &RatioSpec, p: u32) -> Result<Whitened> {
    if p == 0 {
        return Err(Error::invalid("moment order must be positive"));
    }
    let e = moment_exists(spec, p)?;
    if !e.exists {
        return Err(Error::not_applicable(format!(
            "E[R^{p}] is infinite ({:?} condition, rank(B) = {})",
            e.condition, e.r_b
        )));
    }
    whiten(spec)
}

pub const DEFAULT_J_MAX: usize = 500;

/// Bao–Kan series for E[R^p].
///
/// With B̂ = I − βB and the generating function
/// Φ(s, v) = e^{−mᵀm/2}|I − sA − vB̂|^{−1/2} exp(½(1 − v)·mᵀ(I − sA − vB̂)⁻¹m)
/// = Σ h_{i,j} sⁱvʲ, the moment is p!βᵖ Σ_j (p)_j h_{p,j}/(k/2)_{p+j}.
/// The h are built by the (G, e) recursion over the total degree, rescaled
/// by (i+j)!/(k/2)_{i+j} so nothing overflows. The error bound is a
/// geometric extrapolation of the last ten terms, not a proof.
pub fn ratio_moment_series(
    spec: &RatioSpec,
    p: u32,
    beta: Option<f64>,
    j_max: usize,
    tol: f64,
) -> Result<MethodResult> {
    let w = require_moment(spec, p)?;
    let k = w.a.nrows();
    let (bv, _) = eigh_desc(&w.b);
    let bmax = bv[0];
    let beta = beta.unwrap_or(1.0 / bmax);
    if !(beta > 0.0 && beta < 2.0 / bmax) {
        return Err(Error::invalid(format!("beta must lie in (0, {})", 2.0 / bmax)));
    }
    let a = &w.a;
    let bh = DMatrix::identity(k, k) - &w.b * beta;
    let m = &w.m;
    let mm = m.dot(m);
    let half_n = 0.5 * k as f64;
    let p = p as usize;
    let zero_m = DMatrix::<f64>::zeros(k, k);
    let zero_v = DVector::<f64>::zeros(k);

    // column j holds (h, G, e) for i = 0..=p
    let mut prev_h = vec![0.0; p + 1];
    let mut prev_g = vec![zero_m.clone(); p + 1];
    let mut prev_e = vec![zero_v.clone(); p + 1];
    let mut terms: Vec<f64> = Vec::new();
    let mut sum = 0.0;
    let mut estimate = f64::INFINITY;
    let mut converged = false;
    for j in 0..=j_max {
        let mut h = vec![0.0; p + 1];
        let mut g = vec![zero_m.clone(); p + 1];
        let mut e = vec![zero_v.clone(); p + 1];
        for i in 0..=p {
            let deg = i + j;
            if deg == 0 {
                h[0] = 1.0;
                continue;
            }
            let r = deg as f64 / (half_n + deg as f64 - 1.0);
            let mut gi = zero_m.clone();
            let mut ei = zero_v.clone();
            if i > 0 {
                let mut t = g[i - 1].clone();
                for d in 0..k {
                    t[(d, d)] += h[i - 1];
                }
                gi += a * t;
                ei += a * &e[i - 1];
            }
            if j > 0 {
                let mut t = prev_g[i].clone();
                for d in 0..k {
                    t[(d, d)] += prev_h[i];
                }
                gi += &bh * t;
                ei += &bh * &prev_e[i];
            }
            gi *= r;
            let ei = &gi * m + ei * r;
            let mut mg = m.dot(&ei);
            if j > 0 {
                mg -= r * (m.dot(&prev_e[i]) + m.dot(&(&prev_g[i] * m)) + prev_h[i] * mm);
            }
            h[i] = (gi.trace() + mg) / (2.0 * deg as f64);
            g[i] = gi;
            e[i] = ei;
        }
        let term = p as f64 / (p + j) as f64 * h[p];
        sum += term;
        terms.push(term);
        if terms.len() > 10 {
            let n = terms.len();
            let last = &terms[n - 11..];
            let mut ratio: f64 = 0.0;
            for w2 in last.windows(2) {
                if w2[0] != 0.0 {
                    ratio = ratio.max((w2[1] / w2[0]).abs());
                }
            }
            let scale = beta.powi(p as i32);
            estimate = if ratio < 1.0 {
                scale * term.abs() * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            if estimate <= tol * (1.0 + (sum * scale).abs()) || (last.iter().all(|&t| t == 0.0)) {
                converged = true;
                break;
            }
        }
        prev_h = h;
        prev_g = g;
        prev_e = e;
    }
    let value = beta.powi(p as i32) * sum;
    let mut res = MethodResult::new(Method::BaoKanSeries, value, Some(estimate), BoundKind::Heuristic);
    res.diagnostics.truncation_index = Some(terms.len());
    res.diagnostics.beta = Some(beta);
    if !converged {
        return Err(Error::convergence(
            format!("series not converged after {} terms", terms.len()),
            Some(res),
        ));
    }
    Ok(res)
}

/// d_p = E[(wᵀCw)^p]/(2^p p!) for w ~ N(h, I) with C = diag(λ).
fn d_coefficients(lambda: &[f64], h: &[f64], p: usize) -> f64 {
    let n = lambda.len();
    let mut d = 1.0;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    for k in 1..=p {
        let mut dk = 0.0;
        for i in 0..n {
            u[i] = lambda[i] * (d + u[i]);
            v[i] = lambda[i] * v[i] + h[i] * h[i] * u[i];
            dk += u[i] + v[i];
        }
        d = dk / (2.0 * k as f64);
    }
    d
}

/// Magnus-type integral for E[R^p]:
/// Γ(p)⁻¹ ∫₀^∞ t^{p−1} φ(t) 2^p p! d_p(t) dt with t = u/(1 − u).
pub fn ratio_moment_integral(spec: &RatioSpec, p: u32, quadrature_tol: f64) -> Result<MethodResult> {
    let w = require_moment(spec, p)?;
    let (bv, bvec) = eigh_desc(&w.b);
    let bt_m = bvec.transpose() * &w.m;
    let bt_a_b = bvec.transpose() * &w.a * &bvec;
    let p = p as usize;
    let lnpref = (p as f64) * std::f64::consts::LN_2 + ln_gamma(p as f64 + 1.0) - ln_gamma(p as f64);
    let integrand = |t: f64| integrand_at(&bv, &bt_a_b, &bt_m, t, p, lnpref) * t.powi(p as i32 - 1);
    let q = integrate_half_line(integrand, quadrature_tol, 20_000);
    let mut res = MethodResult::new(Method::MagnusIntegral, q.value, Some(q.error), BoundKind::Heuristic);
    res.diagnostics.grid_size = Some(q.evaluations);
    if !q.converged {
        return Err(Error::convergence("moment integral did not converge", Some(res)));
    }
    Ok(res)
}

/// φ(t)·2^p p!/Γ(p)·d_p(t), everything in the eigenbasis of B.
fn integrand_at(bv: &[f64], a: &DMatrix<f64>, m: &DVector<f64>, t: f64, p: usize, lnpref: f64) -> f64 {
    let k = bv.len();
    // L = diag((1 + 2t b)^{−1/2})
    let l: Vec<f64> = bv.iter().map(|&b| 1.0 / (1.0 + 2.0 * t * b.max(0.0)).sqrt()).collect();
    let mut ln_phi = 0.0;
    for i in 0..k {
        let s = 1.0 + 2.0 * t * bv[i].max(0.0);
        ln_phi += -0.5 * s.ln() + 0.5 * m[i] * m[i] * (1.0 / s - 1.0);
    }
    let c = DMatrix::from_fn(k, k, |i, j| l[i] * a[(i, j)] * l[j]);
    let mt = DVector::from_fn(k, |i, _| l[i] * m[i]);
    let (lam, q) = eigh_desc(&c);
    let h = q.transpose() * mt;
    let d = d_coefficients(&lam, h.as_slice(), p);
    (ln_phi + lnpref).exp() * d
}
