//! Independent reference engines: Monte Carlo sampling and a grid
//! convolution CDF for small reduced forms.
//!
//! Sampling is split into chunks of `CHUNK` draws. Chunk i uses ChaCha8
//! seeded with `seed` on stream i, so estimates depend only on (seed, n) and
//! not on the number of threads.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::factor_psd;
use crate::ratio::{moment_exists, RatioSpec};
use crate::reduction::{RawComplexForm, RawForm, ReducedForm, ZERO_TOL};
use crate::special::{chisq_cdf, ncx2_cdf, ncx2_ccdf};

pub const RNG_NAME: &str = "ChaCha8 (one stream per 65536-draw chunk)";
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
}

/// Anything that can draw one realization of Q.
pub trait Sampler: Sync {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64;
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Precomputed x = μ + F z for a real form.
pub struct RawSampler {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    mu: DVector<f64>,
    f: DMatrix<f64>,
}

impl RawSampler {
    pub fn new(form: &RawForm) -> Result<Self> {
        let (f, _) = factor_psd(&form.sigma, ZERO_TOL, "sigma")?;
        Ok(RawSampler {
            a: form.a.clone(),
            b: form.b.clone(),
            c: form.c,
            mu: form.mu.clone(),
            f,
        })
    }
}

impl Sampler for RawSampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z = DVector::from_fn(self.f.ncols(), |_, _| normal(rng));
        let x = &self.mu + &self.f * z;
        x.dot(&(&self.a * &x)) + self.b.dot(&x) + self.c
    }
}

/// x = μ + F z with z ~ CN(0, I).
pub struct ComplexSampler {
    a: DMatrix<Complex64>,
    b: DVector<Complex64>,
    c: f64,
    mu: DVector<Complex64>,
    f: DMatrix<Complex64>,
}

impl ComplexSampler {
    pub fn new(form: &RawComplexForm) -> Result<Self> {
        let (f, _) = factor_psd(&form.sigma, ZERO_TOL, "sigma")?;
        Ok(ComplexSampler {
            a: form.a.clone(),
            b: form.b.clone(),
            c: form.c,
            mu: form.mu.clone(),
            f,
        })
    }
}

impl Sampler for ComplexSampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = DVector::from_fn(self.f.ncols(), |_, _| Complex64::new(s * normal(rng), s * normal(rng)));
        let x = &self.mu + &self.f * z;
        x.dotc(&(&self.a * &x)).re + self.b.dotc(&x).re + self.c
    }
}

/// Σ ω((Z₁ + δ)² + Z₂² + … + Z_ν²) + σZ + c″.
impl Sampler for ReducedForm {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let mut q = self.constant;
        for ((&w, &v), &d2) in self.omega.iter().zip(&self.nu).zip(&self.delta2) {
            let mut s = 0.0;
            for k in 0..v {
                let z = normal(rng) + if k == 0 { d2.sqrt() } else { 0.0 };
                s += z * z;
            }
            q += w * s;
        }
        if self.sigma > 0.0 {
            q += self.sigma * normal(rng);
        }
        q
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Runs `n` draws in chunks and reduces per-chunk accumulators in chunk order.
fn run_chunks<T: Send, F>(n: usize, seed: u64, per_chunk: F) -> Vec<T>
where
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK.min(n - c * CHUNK);
            per_chunk(&mut rng, len)
        })
        .collect()
}

/// Empirical P(Q ≤ q) at several points from one set of draws.
pub fn mc_cdf_many<S: Sampler + ?Sized>(form: &S, qs: &[f64], n: usize, seed: u64) -> Result<Vec<McResult>> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let counts = run_chunks(n, seed, |rng, len| {
        let mut c = vec![0u64; qs.len()];
        for _ in 0..len {
            let x = form.draw(rng);
            for (ci, &q) in c.iter_mut().zip(qs) {
                if x <= q {
                    *ci += 1;
                }
            }
        }
        c
    });
    Ok((0..qs.len())
        .map(|i| {
            let k: u64 = counts.iter().map(|c| c[i]).sum();
            let p = k as f64 / n as f64;
            McResult {
                estimate: p,
                std_error: (p * (1.0 - p) / n as f64).sqrt(),
                n,
                seed,
            }
        })
        .collect())
}

pub fn mc_cdf<S: Sampler + ?Sized>(form: &S, q: f64, n: usize, seed: u64) -> Result<McResult> {
    Ok(mc_cdf_many(form, &[q], n, seed)?[0])
}

/// Sample mean of R^p. For a mean the delete-one jackknife standard error
/// equals s/√n, which is what is computed.
pub fn mc_ratio_moment(spec: &RatioSpec, p: u32, n: usize, seed: u64) -> Result<McResult> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let e = moment_exists(spec, p)?;
    if !e.exists {
        return Err(Error::not_applicable(format!("E[R^{p}] is infinite")));
    }
    let (f, _) = factor_psd(&spec.sigma, ZERO_TOL, "sigma")?;
    let parts = run_chunks(n, seed, |rng, len| {
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..len {
            let z = DVector::from_fn(f.ncols(), |_, _| normal(rng));
            let x = &spec.mu + &f * z;
            let r = x.dot(&(&spec.a * &x)) / x.dot(&(&spec.b * &x));
            let v = r.powi(p as i32);
            sum += v;
            sq += v * v;
        }
        (sum, sq)
    });
    let (sum, sq) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    Ok(McResult {
        estimate: mean,
        std_error: (var / nf).sqrt(),
        n,
        seed,
    })
}

/// Reference CDF from convolving discretized components on a uniform grid.
#[derive(Debug, Clone)]
pub struct GridCdf {
    /// Value of the first lattice point.
    pub start: f64,
    pub step: f64,
    /// P(S ≤ start + i·step) for the lattice variable S.
    pub cumulative: Vec<f64>,
}

impl GridCdf {
    /// Continuity-corrected interpolation: the lattice CDF at kh is read as
    /// the continuous CDF at (k + ½)h, which is accurate to O(h²).
    pub fn cdf(&self, x: f64) -> f64 {
        let u = (x - self.start) / self.step - 0.5;
        if u < 0.0 {
            let first = self.cumulative.first().copied().unwrap_or(0.0);
            return (first * (u + 1.0)).max(0.0);
        }
        let i = u.floor() as usize;
        if i + 1 >= self.cumulative.len() {
            return 1.0;
        }
        let t = u - i as f64;
        self.cumulative[i] * (1.0 - t) + self.cumulative[i + 1] * t
    }
}

/// Discretizes each ω_ℓχ²_{ν_ℓ}(δ²_ℓ) with cell masses on [0, span] (mirrored
/// for negative ω) and convolves them by FFT.
pub fn grid_cdf(red: &ReducedForm, step: f64, span: f64) -> Result<GridCdf> {
    if red.len() > 3 || red.sigma != 0.0 || red.is_empty() {
        return Err(Error::invalid("grid oracle needs 1 to 3 weights and σ = 0"));
    }
    if !(step > 0.0) || !(span > step) {
        return Err(Error::invalid("grid step and span must be positive with span > step"));
    }
    let cells = (span / step).ceil() as usize + 1;
    let mut start = red.constant;
    let mut acc: Vec<f64> = vec![1.0];
    for ((&w, &v), &d2) in red.omega.iter().zip(&red.nu).zip(&red.delta2) {
        let a = w.abs();
        let tail = ncx2_ccdf(v as f64, d2, span / a);
        if tail > 1e-10 {
            return Err(Error::invalid(format!("span {span} leaves tail mass {tail:.2e} for weight {w}")));
        }
        let cdf = |y: f64| if d2 == 0.0 { chisq_cdf(v as f64, y) } else { ncx2_cdf(v as f64, d2, y) };
        let mut mass: Vec<f64> = (0..cells)
            .map(|i| {
                let hi = (i as f64 + 0.5) * step / a;
                let lo = ((i as f64 - 0.5) * step / a).max(0.0);
                cdf(hi) - cdf(lo)
            })
            .collect();
        if w < 0.0 {
            mass.reverse();
            start -= (cells - 1) as f64 * step;
        }
        acc = convolve(&acc, &mass);
    }
    let mut c = 0.0;
    let cumulative = acc
        .iter()
        .map(|m| {
            c += m.max(0.0);
            c.min(1.0)
        })
        .collect();
    Ok(GridCdf { start, step, cumulative })
}

fn convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() + y.len() - 1;
    if x.len().min(y.len()) < 64 {
        let mut out = vec![0.0; n];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in y.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        return out;
    }
    let m = n.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let pad = |v: &[f64]| {
        let mut b: Vec<Complex64> = v.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        b.resize(m, Complex64::new(0.0, 0.0));
        b
    };
    let mut a = pad(x);
    let mut b = pad(y);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    inv.process(&mut a);
    a.truncate(n);
    a.into_iter().map(|z| z.re / m as f64).collect()
}

/// Options for [`random_form`].
#[derive(Debug, Clone, Copy)]
pub struct RandomFormOptions {
    pub max_terms: usize,
    pub negative: bool,
    pub noncentral: bool,
    pub sigma: bool,
    /// Total degrees of freedom cap (N).
    pub max_dof: u32,
}

impl Default for RandomFormOptions {
    fn default() -> Self {
        RandomFormOptions {
            max_terms: 4,
            negative: true,
            noncentral: true,
            sigma: false,
            max_dof: 8,
        }
    }
}

/// A random reduced form: weights log-uniform on [0.05, 5] with random
/// sign, small degrees of freedom, noncentralities uniform on [0, 3].
pub fn random_form<R: Rng>(rng: &mut R, opt: RandomFormOptions) -> ReducedForm {
    loop {
        let l = rng.random_range(1..=opt.max_terms);
        let mut omega = Vec::new();
        let mut nu = Vec::new();
        let mut delta2 = Vec::new();
        let mut dof = 0;
        for _ in 0..l {
            if dof >= opt.max_dof {
                break;
            }
            let mut w = (rng.random_range(0.05f64.ln()..5f64.ln())).exp();
            if opt.negative && rng.random_bool(0.4) {
                w = -w;
            }
            let v = rng.random_range(1..=3u32).min(opt.max_dof - dof);
            dof += v;
            omega.push(w);
            nu.push(v);
            delta2.push(if opt.noncentral && rng.random_bool(0.5) { rng.random_range(0.0..3.0) } else { 0.0 });
        }
        let sigma = if opt.sigma && rng.random_bool(0.5) { rng.random_range(0.1..2.0) } else { 0.0 };
        if let Ok(f) = ReducedForm::new(omega, nu, delta2, sigma, 0.0) {
            return f;
        }
    }
}

/// The fixed validation battery: 30 reduced forms (N ≤ 8, mixed sign and
/// centrality, σ = 0 except for every fifth form).
pub fn standard_battery() -> Vec<ReducedForm> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_ba77);
    (0..30)
        .map(|i| {
            random_form(
                &mut rng,
                RandomFormOptions {
                    sigma: i % 5 == 4,
                    ..Default::default()
                },
            )
        })
        .collect()
}
