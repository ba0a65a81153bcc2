//! Result type shared by every CDF/PDF/moment routine.

use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CentralEven,
    Ruben,
    Kotz,
    Laguerre,
    Imhof,
    Davies,
    SpaLr,
    SpaBn,
    SpaDensity,
    Satterthwaite,
    Pearson,
    Hbe,
    Wood,
    Liu,
    BaoKanSeries,
    MagnusIntegral,
    Constant,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::CentralEven => "central_even",
            Method::Ruben => "ruben",
            Method::Kotz => "kotz",
            Method::Laguerre => "laguerre",
            Method::Imhof => "imhof",
            Method::Davies => "davies",
            Method::SpaLr => "spa_lr",
            Method::SpaBn => "spa_bn",
            Method::SpaDensity => "spa_density",
            Method::Satterthwaite => "satterthwaite",
            Method::Pearson => "pearson",
            Method::Hbe => "hbe",
            Method::Wood => "wood",
            Method::Liu => "liu",
            Method::BaoKanSeries => "bao_kan_series",
            Method::MagnusIntegral => "magnus_integral",
            Method::Constant => "constant",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        let all = [
            Method::CentralEven,
            Method::Ruben,
            Method::Kotz,
            Method::Laguerre,
            Method::Imhof,
            Method::Davies,
            Method::SpaLr,
            Method::SpaBn,
            Method::Satterthwaite,
            Method::Pearson,
            Method::Hbe,
            Method::Wood,
            Method::Liu,
            Method::SpaDensity,
            Method::BaoKanSeries,
            Method::MagnusIntegral,
        ];
        all.into_iter().find(|m| m.name() == s)
    }

    /// Exact methods carry a rigorous or estimated numerical error bound.
    pub fn is_exact(self) -> bool {
        matches!(
            self,
            Method::CentralEven
                | Method::Ruben
                | Method::Kotz
                | Method::Laguerre
                | Method::Imhof
                | Method::Davies
                | Method::BaoKanSeries
                | Method::MagnusIntegral
                | Method::Constant
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How much the reported `error_bound` can be trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// A proven upper bound on the absolute error (up to floating point).
    Rigorous,
    /// An error estimate without proof (last-term size, Richardson, ...).
    Heuristic,
    /// An approximation method; no error estimate at all.
    Approximate,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saddlepoint: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Unclamped value; differs from `value` only after presentation clamping.
    pub raw_value: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub value: f64,
    /// Upper tail (1 − CDF) evaluated without cancellation when the method
    /// permits it. Only set for CDF results.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complement: Option<f64>,
    pub error_bound: Option<f64>,
    pub bound_kind: BoundKind,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl MethodResult {
    pub fn new(method: Method, value: f64, error_bound: Option<f64>, kind: BoundKind) -> Self {
        MethodResult {
            value,
            complement: None,
            error_bound,
            bound_kind: kind,
            method,
            diagnostics: Diagnostics {
                raw_value: value,
                ..Default::default()
            },
        }
    }

    pub fn approximate(method: Method, value: f64) -> Self {
        Self::new(method, value, None, BoundKind::Approximate)
    }

    pub fn with_complement(mut self, upper: f64) -> Self {
        self.complement = Some(upper);
        self
    }

    /// 1 − F, preferring the directly computed upper tail.
    pub fn upper(&self) -> f64 {
        self.complement.unwrap_or(1.0 - self.value)
    }

    /// Bound to report, or `None` when only a heuristic/no estimate exists.
    pub fn rigorous_bound(&self) -> Option<f64> {
        match self.bound_kind {
            BoundKind::Rigorous => self.error_bound,
            _ => None,
        }
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.diagnostics.notes.push(msg.into());
    }
}
