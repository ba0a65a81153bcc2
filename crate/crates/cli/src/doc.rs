//! Input documents.
//!
//! A document is one JSON object with a `kind` field and the payload for
//! that kind. Matrices are row-major arrays of rows; complex entries are
//! `[re, im]` pairs. `method` and `tol` may be given in the document and
//! are overridden by the corresponding flags.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use quadform::ratio::RatioSpec;
use quadform::{Error, RawComplexForm, RawForm, ReducedForm, Result};
use serde::Deserialize;
use serde_json::{Map, Value};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    a: Vec<Vec<f64>>,
    b: Option<Vec<f64>>,
    c: Option<f64>,
    mu: Option<Vec<f64>>,
    sigma: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComplexDoc {
    a: Vec<Vec<[f64; 2]>>,
    b: Option<Vec<[f64; 2]>>,
    c: Option<f64>,
    mu: Option<Vec<[f64; 2]>>,
    sigma: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReducedDoc {
    omega: Vec<f64>,
    nu: Option<Vec<u32>>,
    delta2: Option<Vec<f64>>,
    sigma: Option<f64>,
    #[serde(rename = "const", alias = "constant")]
    constant: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatioDoc {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    mu: Option<Vec<f64>>,
    sigma: Option<Vec<Vec<f64>>>,
}

/// The random object a document describes.
#[derive(Debug, Clone)]
pub enum Subject {
    Raw(RawForm),
    RawComplex(RawComplexForm),
    Reduced(ReducedForm),
    Ratio(RatioSpec),
}

#[derive(Debug, Clone)]
pub struct Document {
    pub subject: Subject,
    pub method: Option<String>,
    pub tol: Option<f64>,
}

pub fn parse(text: &str) -> Result<Document> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed document: {e}")))?;
    let Value::Object(mut obj) = value else {
        return Err(Error::invalid("document must be a JSON object"));
    };
    let kind = match obj.remove("kind") {
        Some(Value::String(k)) => k,
        Some(_) => return Err(Error::invalid("`kind` must be a string")),
        None => return Err(Error::invalid("document has no `kind`")),
    };
    let method = match obj.remove("method") {
        None | Some(Value::Null) => None,
        Some(Value::String(m)) => Some(m),
        Some(_) => return Err(Error::invalid("`method` must be a string")),
    };
    let tol = match obj.remove("tol") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_f64().ok_or_else(|| Error::invalid("`tol` must be a number"))?),
    };
    let subject = match kind.as_str() {
        "raw" => Subject::Raw(raw(payload(obj, &kind)?)?),
        "raw_complex" => Subject::RawComplex(raw_complex(payload(obj, &kind)?)?),
        "reduced" => Subject::Reduced(reduced(payload(obj, &kind)?)?),
        "ratio" => Subject::Ratio(ratio(payload(obj, &kind)?)?),
        other => {
            return Err(Error::invalid(format!(
                "unknown kind `{other}` (expected raw, raw_complex, reduced or ratio)"
            )))
        }
    };
    Ok(Document { subject, method, tol })
}

fn payload<T: for<'de> Deserialize<'de>>(obj: Map<String, Value>, kind: &str) -> Result<T> {
    serde_json::from_value(Value::Object(obj)).map_err(|e| Error::invalid(format!("bad `{kind}` document: {e}")))
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("`{name}` must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn cmatrix(rows: &[Vec<[f64; 2]>], name: &str) -> Result<DMatrix<Complex64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("`{name}` must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

fn cvector(v: &[[f64; 2]]) -> DVector<Complex64> {
    DVector::from_iterator(v.len(), v.iter().map(|z| Complex64::new(z[0], z[1])))
}

fn raw(d: RawDoc) -> Result<RawForm> {
    let a = matrix(&d.a, "a")?;
    let n = a.nrows();
    let sigma = match d.sigma {
        Some(s) => matrix(&s, "sigma")?,
        None => DMatrix::identity(n, n),
    };
    RawForm::new(
        a,
        DVector::from_vec(d.b.unwrap_or_else(|| vec![0.0; n])),
        d.c.unwrap_or(0.0),
        DVector::from_vec(d.mu.unwrap_or_else(|| vec![0.0; n])),
        sigma,
    )
}

fn raw_complex(d: RawComplexDoc) -> Result<RawComplexForm> {
    let a = cmatrix(&d.a, "a")?;
    let n = a.nrows();
    let sigma = match d.sigma {
        Some(s) => cmatrix(&s, "sigma")?,
        None => DMatrix::identity(n, n),
    };
    let zero = || DVector::zeros(n);
    RawComplexForm::new(
        a,
        d.b.as_deref().map(cvector).unwrap_or_else(zero),
        d.c.unwrap_or(0.0),
        d.mu.as_deref().map(cvector).unwrap_or_else(zero),
        sigma,
    )
}

fn reduced(d: ReducedDoc) -> Result<ReducedForm> {
    let l = d.omega.len();
    ReducedForm::new(
        d.omega,
        d.nu.unwrap_or_else(|| vec![1; l]),
        d.delta2.unwrap_or_else(|| vec![0.0; l]),
        d.sigma.unwrap_or(0.0),
        d.constant.unwrap_or(0.0),
    )
}

fn ratio(d: RatioDoc) -> Result<RatioSpec> {
    let a = matrix(&d.a, "a")?;
    let b = matrix(&d.b, "b")?;
    let n = a.nrows();
    let sigma = match d.sigma {
        Some(s) => matrix(&s, "sigma")?,
        None => DMatrix::identity(n, n),
    };
    RatioSpec::new(a, b, DVector::from_vec(d.mu.unwrap_or_else(|| vec![0.0; n])), sigma)
}
