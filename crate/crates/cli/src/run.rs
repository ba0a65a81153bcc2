//! Command execution. Every command returns one JSON value.

use std::str::FromStr;

use quadform::exact_series::{series_coefficients, SeriesCoefficients, SeriesKind, K_MAX};
use quadform::oracle::{mc_cdf_many, mc_ratio_moment, ComplexSampler, McResult, RawSampler, RNG_NAME};
use quadform::ratio::{
    cdf_ratio, moment_exists, pdf_ratio_spa, ratio_moment_integral, ratio_moment_series, ratio_to_indefinite,
    spa_normalizer, RatioSpec, DEFAULT_J_MAX,
};
use quadform::select::{cdf_with, pdf_with, quantile, quantile_method, select_method, Quantity, TailHint};
use quadform::transforms::{cumulants, raw_moments};
use quadform::{BoundKind, Error, Method, MethodResult, ReducedForm, Result};
use serde_json::{json, Map, Value};

use crate::doc::{Document, Subject};

#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err("expected start:stop:count".into());
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        let (start, stop) = (num(a)?, num(b)?);
        let count: usize = n.trim().parse().map_err(|e| format!("`{n}`: {e}"))?;
        if count == 0 || !start.is_finite() || !stop.is_finite() {
            return Err("grid needs finite endpoints and count >= 1".into());
        }
        Ok(Grid { start, stop, count })
    }
}

impl Grid {
    fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let h = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + i as f64 * h).collect()
    }
}

pub struct Options {
    pub method: Option<String>,
    pub tol: f64,
    pub seed: u64,
    pub grid: Option<Grid>,
    pub max_terms: Option<usize>,
    pub quadrature_tol: f64,
}

pub enum Command {
    Reduce,
    Cdf { q: Option<f64> },
    Pdf { q: Option<f64> },
    Quantile { p: Option<f64> },
    Moments { order: usize },
    Cumulants { order: usize },
    RatioCdf { r: Option<f64> },
    RatioPdf { r: Option<f64>, normalized: bool },
    RatioMoment { p: u32 },
    McCheck { q: Option<f64>, r: Option<f64>, p: Option<u32>, n: usize },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Reduce => "reduce",
            Command::Cdf { .. } => "cdf",
            Command::Pdf { .. } => "pdf",
            Command::Quantile { .. } => "quantile",
            Command::Moments { .. } => "moments",
            Command::Cumulants { .. } => "cumulants",
            Command::RatioCdf { .. } => "ratio-cdf",
            Command::RatioPdf { .. } => "ratio-pdf",
            Command::RatioMoment { .. } => "ratio-moment",
            Command::McCheck { .. } => "mc-check",
        }
    }
}

/// A reduced form, or the constant a degenerate form collapses to.
enum Loaded {
    Form(ReducedForm),
    Constant(f64),
}

fn load_form(d: &Document, cmd: &str) -> Result<Loaded> {
    let red = match &d.subject {
        Subject::Raw(f) => f.reduce(),
        Subject::RawComplex(f) => f.reduce(),
        Subject::Reduced(f) => Ok(f.clone()),
        Subject::Ratio(_) => {
            return Err(Error::invalid(format!(
                "`{cmd}` needs a raw, raw_complex or reduced document; use the ratio-* commands for ratios"
            )))
        }
    };
    match red {
        Ok(f) => Ok(Loaded::Form(f)),
        Err(Error::DegenerateConstant(c)) => Ok(Loaded::Constant(c)),
        Err(e) => Err(e),
    }
}

fn load_ratio<'a>(d: &'a Document, cmd: &str) -> Result<&'a RatioSpec> {
    match &d.subject {
        Subject::Ratio(s) => Ok(s),
        _ => Err(Error::invalid(format!("`{cmd}` needs a ratio document"))),
    }
}

fn parse_method(opts: &Options) -> Result<Option<Method>> {
    match opts.method.as_deref() {
        None | Some("auto") => Ok(None),
        Some(s) => Method::parse(s)
            .map(Some)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`"))),
    }
}

/// Evaluation points from `--<name>` or `--grid`, exactly one of which must be given.
fn points(single: Option<f64>, opts: &Options, name: &str) -> Result<Vec<f64>> {
    match (single, opts.grid) {
        (Some(x), None) => Ok(vec![x]),
        (None, Some(g)) => Ok(g.points()),
        (Some(_), Some(_)) => Err(Error::invalid(format!("give either --{name} or --grid, not both"))),
        (None, None) => Err(Error::invalid(format!("missing --{name} (or --grid)"))),
    }
}

/// Fields shared by every computed value. `error_bound` is only set for
/// rigorous bounds; heuristic estimates go to `error_estimate`.
fn result_fields(r: &MethodResult) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("value".into(), json!(r.value));
    if let Some(c) = r.complement {
        m.insert("complement".into(), json!(c));
    }
    m.insert("error_bound".into(), json!(r.rigorous_bound()));
    if r.bound_kind == BoundKind::Heuristic {
        m.insert("error_estimate".into(), json!(r.error_bound));
    }
    m.insert("bound_kind".into(), json!(r.bound_kind));
    m.insert("method".into(), json!(r.method));
    m.insert("diagnostics".into(), json!(r.diagnostics));
    m
}

fn point(key: &str, x: f64, r: &MethodResult) -> Value {
    let mut m = Map::new();
    m.insert(key.into(), json!(x));
    m.extend(result_fields(r));
    Value::Object(m)
}

/// One point is emitted inline, a grid as a `points` array.
fn assemble(command: &str, mut rows: Vec<Value>) -> Value {
    let mut out = Map::new();
    out.insert("command".into(), json!(command));
    if rows.len() == 1 {
        if let Value::Object(m) = rows.remove(0) {
            out.extend(m);
        }
    } else {
        out.insert("points".into(), Value::Array(rows));
    }
    Value::Object(out)
}

fn constant_result(value: f64) -> MethodResult {
    MethodResult::new(Method::Constant, value, Some(0.0), BoundKind::Rigorous).with_complement(1.0 - value)
}

fn series_kind(m: Method) -> Option<SeriesKind> {
    match m {
        Method::Ruben => Some(SeriesKind::Ruben),
        Method::Kotz => Some(SeriesKind::Kotz),
        Method::Laguerre => Some(SeriesKind::Laguerre),
        _ => None,
    }
}

/// Evaluates one form at many points, building series coefficients once
/// per series kind and extending them as needed.
struct Evaluator<'a> {
    red: &'a ReducedForm,
    tol: f64,
    k_max: usize,
    series: Vec<(SeriesKind, SeriesCoefficients)>,
}

impl<'a> Evaluator<'a> {
    fn new(red: &'a ReducedForm, opts: &Options) -> Self {
        Evaluator {
            red,
            tol: opts.tol,
            k_max: opts.max_terms.unwrap_or(K_MAX),
            series: Vec::new(),
        }
    }

    fn with(&mut self, q: f64, m: Method, quantity: Quantity) -> Result<MethodResult> {
        let Some(kind) = series_kind(m) else {
            return match quantity {
                Quantity::Cdf => cdf_with(self.red, q, m, self.tol),
                Quantity::Pdf => pdf_with(self.red, q, m, self.tol),
            };
        };
        let i = match self.series.iter().position(|(k, _)| *k == kind) {
            Some(i) => i,
            None => {
                self.series.push((kind, series_coefficients(self.red, kind, None, 0)?));
                self.series.len() - 1
            }
        };
        let sc = &mut self.series[i].1;
        match quantity {
            Quantity::Cdf => sc.cdf(q, self.tol, self.k_max),
            Quantity::Pdf => sc.pdf(q, self.tol, self.k_max),
        }
    }

    /// Explicit method, or automatic selection with a Davies fallback.
    fn eval(&mut self, q: f64, method: Option<Method>, quantity: Quantity) -> Result<MethodResult> {
        if let Some(m) = method {
            return self.with(q, m, quantity);
        }
        let m = select_method(self.red, quantity, q, TailHint::Both);
        match self.with(q, m, quantity) {
            Ok(mut r) => {
                r.note(format!("auto-selected {m}"));
                Ok(r)
            }
            Err(e @ (Error::NotApplicable(_) | Error::Convergence { .. } | Error::Domain { .. }))
                if m != Method::Davies =>
            {
                let mut r = self.with(q, Method::Davies, quantity)?;
                r.note(format!("auto-selected {m} failed ({e}); fell back to davies"));
                Ok(r)
            }
            Err(e) => Err(e),
        }
    }
}

pub fn run(cmd: &Command, d: &Document, opts: &Options) -> Result<Value> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("--tol must be positive"));
    }
    if !(opts.quadrature_tol > 0.0) {
        return Err(Error::invalid("--quadrature-tol must be positive"));
    }
    let name = cmd.name();
    let method = parse_method(opts)?;
    match *cmd {
        Command::Reduce => reduce(d),
        Command::Cdf { q } => {
            let qs = points(q, opts, "q")?;
            let rows = match load_form(d, name)? {
                Loaded::Constant(c) => qs
                    .iter()
                    .map(|&x| point("q", x, &constant_result(if x >= c { 1.0 } else { 0.0 })))
                    .collect(),
                Loaded::Form(red) => {
                    let mut ev = Evaluator::new(&red, opts);
                    qs.iter()
                        .map(|&x| Ok(point("q", x, &ev.eval(x, method, Quantity::Cdf)?)))
                        .collect::<Result<_>>()?
                }
            };
            Ok(assemble(name, rows))
        }
        Command::Pdf { q } => {
            let qs = points(q, opts, "q")?;
            let Loaded::Form(red) = load_form(d, name)? else {
                return Err(Error::not_applicable("a degenerate constant has no density"));
            };
            let mut ev = Evaluator::new(&red, opts);
            let rows = qs
                .iter()
                .map(|&x| Ok(point("q", x, &ev.eval(x, method, Quantity::Pdf)?)))
                .collect::<Result<_>>()?;
            Ok(assemble(name, rows))
        }
        Command::Quantile { p } => {
            let ps = points(p, opts, "p")?;
            let loaded = load_form(d, name)?;
            let rows = ps
                .iter()
                .map(|&pr| {
                    if !(pr > 0.0 && pr < 1.0) {
                        return Err(Error::invalid(format!("probability must lie in (0, 1), got {pr}")));
                    }
                    let (x, m) = match &loaded {
                        Loaded::Constant(c) => (*c, Method::Constant),
                        Loaded::Form(red) => (quantile(red, pr, method, opts.tol)?, quantile_method(red, pr, method)),
                    };
                    Ok(json!({
                        "p": pr,
                        "value": x,
                        "method": m,
                        "cdf_tolerance": opts.tol,
                    }))
                })
                .collect::<Result<_>>()?;
            Ok(assemble(name, rows))
        }
        Command::Moments { order } | Command::Cumulants { order } => {
            if order == 0 {
                return Err(Error::invalid("--order must be at least 1"));
            }
            let kappa = match load_form(d, name)? {
                Loaded::Form(red) => cumulants(&red, order).kappa,
                Loaded::Constant(c) => (1..=order).map(|j| if j == 1 { c } else { 0.0 }).collect(),
            };
            let mut out = Map::new();
            out.insert("command".into(), json!(name));
            if let Command::Moments { .. } = cmd {
                let set = quadform::transforms::CumulantSet { kappa: kappa.clone() };
                out.insert("raw_moments".into(), json!(raw_moments(&set)));
                out.insert("mean".into(), json!(kappa[0]));
                if order >= 2 {
                    out.insert("variance".into(), json!(kappa[1]));
                }
            } else {
                out.insert("cumulants".into(), json!(kappa));
            }
            out.insert("method".into(), json!("analytic"));
            Ok(Value::Object(out))
        }
        Command::RatioCdf { r } => {
            let spec = load_ratio(d, name)?;
            let rows = points(r, opts, "r")?
                .iter()
                .map(|&x| Ok(point("r", x, &cdf_ratio(spec, x, method, opts.tol)?)))
                .collect::<Result<_>>()?;
            Ok(assemble(name, rows))
        }
        Command::RatioPdf { r, normalized } => {
            let spec = load_ratio(d, name)?;
            if !matches!(method, None | Some(Method::SpaDensity)) {
                return Err(Error::not_applicable("ratio densities are only available by saddlepoint"));
            }
            let c = if normalized { Some(spa_normalizer(spec, opts.quadrature_tol)?) } else { None };
            let rows = points(r, opts, "r")?
                .iter()
                .map(|&x| {
                    let mut res = pdf_ratio_spa(spec, x)?;
                    if let Some(c) = c {
                        res.value /= c;
                        res.diagnostics.raw_value = res.value;
                        res.note(format!("normalized by {c:.10}"));
                    }
                    Ok(point("r", x, &res))
                })
                .collect::<Result<_>>()?;
            Ok(assemble(name, rows))
        }
        Command::RatioMoment { p } => {
            let spec = load_ratio(d, name)?;
            let e = moment_exists(spec, p)?;
            let series = |tol| ratio_moment_series(spec, p, None, opts.max_terms.unwrap_or(DEFAULT_J_MAX), tol);
            let res = match method {
                Some(Method::BaoKanSeries) => series(opts.tol)?,
                Some(Method::MagnusIntegral) => ratio_moment_integral(spec, p, opts.quadrature_tol)?,
                Some(m) => return Err(Error::not_applicable(format!("{m} does not compute ratio moments"))),
                None => match series(opts.tol) {
                    Ok(r) => r,
                    Err(Error::Convergence { .. }) => {
                        let mut r = ratio_moment_integral(spec, p, opts.quadrature_tol)?;
                        r.note("series did not converge; used the integral");
                        r
                    }
                    Err(e) => return Err(e),
                },
            };
            let mut m = Map::new();
            m.insert("command".into(), json!(name));
            m.insert("p".into(), json!(p));
            m.extend(result_fields(&res));
            m.insert("existence".into(), json!(e));
            Ok(Value::Object(m))
        }
        Command::McCheck { q, r, p, n } => mc_check(d, opts, method, q, r, p, n),
    }
}

fn reduce(d: &Document) -> Result<Value> {
    let (red, class) = match load_form(d, "reduce")? {
        Loaded::Form(f) => {
            let class = f.classify();
            (json!(f), json!(class))
        }
        Loaded::Constant(c) => (
            json!({"omega": [], "nu": [], "delta2": [], "sigma": 0.0, "const": c}),
            json!("degenerate_constant"),
        ),
    };
    Ok(json!({"command": "reduce", "reduced": red, "class": class}))
}

fn mc_fields(mc: &McResult, value: f64) -> Map<String, Value> {
    let z = if mc.std_error > 0.0 {
        (value - mc.estimate) / mc.std_error
    } else if value == mc.estimate {
        0.0
    } else {
        f64::INFINITY
    };
    let mut m = Map::new();
    m.insert("mc_estimate".into(), json!(mc.estimate));
    m.insert("mc_std_error".into(), json!(mc.std_error));
    m.insert("z".into(), if z.is_finite() { json!(z) } else { Value::Null });
    m.insert("within_4se".into(), json!(z.abs() <= 4.0));
    m
}

fn mc_check(
    d: &Document,
    opts: &Options,
    method: Option<Method>,
    q: Option<f64>,
    r: Option<f64>,
    p: Option<u32>,
    n: usize,
) -> Result<Value> {
    let name = "mc-check";
    let mut rows: Vec<Value> = Vec::new();
    match &d.subject {
        Subject::Ratio(spec) => match (r, p) {
            (None, Some(p)) if opts.grid.is_none() => {
                let mc = mc_ratio_moment(spec, p, n, opts.seed)?;
                let lib = match method {
                    Some(Method::MagnusIntegral) => ratio_moment_integral(spec, p, opts.quadrature_tol)?,
                    _ => ratio_moment_series(spec, p, None, opts.max_terms.unwrap_or(DEFAULT_J_MAX), opts.tol)?,
                };
                let mut m = Map::new();
                m.insert("p".into(), json!(p));
                m.extend(result_fields(&lib));
                m.extend(mc_fields(&mc, lib.value));
                rows.push(Value::Object(m));
            }
            (r, None) => {
                for x in points(r, opts, "r")? {
                    let form = ratio_to_indefinite(spec, x);
                    let mc = mc_cdf_many(&RawSampler::new(&form)?, &[0.0], n, opts.seed)?[0];
                    let lib = cdf_ratio(spec, x, method, opts.tol)?;
                    let mut m = Map::new();
                    m.insert("r".into(), json!(x));
                    m.extend(result_fields(&lib));
                    m.extend(mc_fields(&mc, lib.value));
                    rows.push(Value::Object(m));
                }
            }
            _ => return Err(Error::invalid("ratio mc-check takes either --p or --r/--grid")),
        },
        _ => {
            if r.is_some() || p.is_some() {
                return Err(Error::invalid("--r and --p apply to ratio documents"));
            }
            let qs = points(q, opts, "q")?;
            let mcs = match &d.subject {
                Subject::Raw(f) => mc_cdf_many(&RawSampler::new(f)?, &qs, n, opts.seed)?,
                Subject::RawComplex(f) => mc_cdf_many(&ComplexSampler::new(f)?, &qs, n, opts.seed)?,
                Subject::Reduced(f) => mc_cdf_many(f, &qs, n, opts.seed)?,
                Subject::Ratio(_) => unreachable!(),
            };
            let loaded = load_form(d, name)?;
            let mut ev = match &loaded {
                Loaded::Form(red) => Some(Evaluator::new(red, opts)),
                Loaded::Constant(_) => None,
            };
            for (&x, mc) in qs.iter().zip(&mcs) {
                let lib = match (&mut ev, &loaded) {
                    (Some(ev), _) => ev.eval(x, method, Quantity::Cdf)?,
                    (None, Loaded::Constant(c)) => constant_result(if x >= *c { 1.0 } else { 0.0 }),
                    (None, Loaded::Form(_)) => unreachable!(),
                };
                let mut m = Map::new();
                m.insert("q".into(), json!(x));
                m.extend(result_fields(&lib));
                m.extend(mc_fields(mc, lib.value));
                rows.push(Value::Object(m));
            }
        }
    }
    let all = rows.iter().all(|r| r["within_4se"] == json!(true));
    let mut out = match assemble(name, rows) {
        Value::Object(m) => m,
        _ => unreachable!(),
    };
    out.insert("n".into(), json!(n));
    out.insert("seed".into(), json!(opts.seed));
    out.insert("rng".into(), json!(RNG_NAME));
    out.insert("all_within_4se".into(), json!(all));
    Ok(Value::Object(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: Grid = "-1:1:5".parse().unwrap();
        assert_eq!(g.points(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!("3:9:1".parse::<Grid>().unwrap().points(), vec![3.0]);
        for bad in ["1:2", "1:2:0", "a:2:3", "1:2:3:4"] {
            assert!(bad.parse::<Grid>().is_err(), "{bad}");
        }
    }
}
