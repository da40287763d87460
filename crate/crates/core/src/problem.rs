//! LQ mean-field problem instances.
//!
//! A [`ProblemSpec`] holds the time-varying coefficient matrices of the
//! dynamics `b(t,x,mu,u) = A x + B u + Abar mubar`, the quadratic running and
//! terminal cost matrices, the horizon, and the initial measure. The module
//! also checks the standing symmetry/positivity assumptions and reads the
//! strict JSON problem-file format.

use crate::error::{Error, Result};
use crate::matkit::{self, Mat};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// Piecewise-linear-in-time matrix given by knots (t_k, M_k).
///
/// A single knot means constant in time. Evaluation between knots is linear
/// interpolation; knot times must be strictly increasing, starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingMat {
    knots: Vec<(f64, Mat)>,
}

impl TimeVaryingMat {
    pub fn constant(m: Mat) -> Self {
        TimeVaryingMat { knots: vec![(0.0, m)] }
    }

    pub fn from_knots(knots: Vec<(f64, Mat)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Parse { msg: "time-varying matrix with no knots".into() });
        }
        let shape = (knots[0].1.rows(), knots[0].1.cols());
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Parse { msg: "knot times must be strictly increasing".into() });
            }
        }
        for (t, m) in &knots {
            if !t.is_finite() || *t < 0.0 {
                return Err(Error::Parse { msg: format!("bad knot time {t}") });
            }
            if (m.rows(), m.cols()) != shape {
                return Err(Error::ShapeMismatch { what: "knot values differ in shape".into() });
            }
        }
        Ok(TimeVaryingMat { knots })
    }

    pub fn knots(&self) -> &[(f64, Mat)] {
        &self.knots
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.knots[0].1.rows(), self.knots[0].1.cols())
    }
}

/// Linear interpolation of a time-varying matrix; exact values at knots.
pub fn eval_tv(m: &TimeVaryingMat, t: f64) -> Mat {
    let knots = &m.knots;
    if knots.len() == 1 || t <= knots[0].0 {
        return knots[0].1.clone();
    }
    let last = knots.len() - 1;
    if t >= knots[last].0 {
        return knots[last].1.clone();
    }
    let idx = knots.partition_point(|(tk, _)| *tk <= t);
    let (t0, m0) = &knots[idx - 1];
    let (t1, m1) = &knots[idx];
    if t == *t0 {
        return m0.clone();
    }
    let w = (t - t0) / (t1 - t0);
    m0.scale(1.0 - w).add(&m1.scale(w))
}

/// Initial state distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialMeasure {
    Gaussian { mean: Vec<f64>, cov: Mat },
    Empirical { points: Vec<Vec<f64>> },
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialMeasure {
    /// First moment of the measure.
    pub fn barycenter(&self) -> Vec<f64> {
        match self {
            InitialMeasure::Gaussian { mean, .. } => mean.clone(),
            InitialMeasure::Empirical { points } => {
                let d = points[0].len();
                let mut m = vec![0.0; d];
                for p in points {
                    for (acc, v) in m.iter_mut().zip(p) {
                        *acc += v;
                    }
                }
                let n = points.len() as f64;
                m.iter().map(|v| v / n).collect()
            }
            InitialMeasure::UniformBox { lo, hi } => {
                lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()
            }
        }
    }
}

/// Full LQ mean-field problem instance.
#[derive(Debug, Clone, PartialEq)]
#[allow(non_snake_case)]
pub struct ProblemSpec {
    pub dimension: usize,
    pub horizon: f64,
    pub A: TimeVaryingMat,
    pub Abar: TimeVaryingMat,
    pub B: TimeVaryingMat,
    pub Q: TimeVaryingMat,
    pub Qbar: TimeVaryingMat,
    pub R: TimeVaryingMat,
    pub S: TimeVaryingMat,
    pub QT: Mat,
    pub QbarT: Mat,
    pub ST: Mat,
    pub initial: InitialMeasure,
}

/// One violated assumption: which condition, where, and how badly.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Condition identifier, e.g. `R_positive_definite`, `Q_symmetric`.
    pub condition: String,
    /// Knot time, or `"terminal"`.
    pub at: String,
    /// Offending minimum eigenvalue or asymmetry norm.
    pub magnitude: f64,
}

/// Result of checking the standing assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ProblemSpec {
    pub fn check_shapes(&self) -> Result<()> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::ShapeMismatch { what: "dimension must be positive".into() });
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Parse { msg: "horizon must be a positive real".into() });
        }
        let tv = [
            ("A", &self.A),
            ("Abar", &self.Abar),
            ("B", &self.B),
            ("Q", &self.Q),
            ("Qbar", &self.Qbar),
            ("R", &self.R),
            ("S", &self.S),
        ];
        for (name, m) in tv {
            if m.shape() != (d, d) {
                return Err(Error::ShapeMismatch { what: format!("{name} is not {d}x{d}") });
            }
            let last = m.knots().last().unwrap().0;
            if last > self.horizon {
                return Err(Error::Parse { msg: format!("{name} knot beyond horizon") });
            }
        }
        for (name, m) in [("QT", &self.QT), ("QbarT", &self.QbarT), ("ST", &self.ST)] {
            if (m.rows(), m.cols()) != (d, d) {
                return Err(Error::ShapeMismatch { what: format!("{name} is not {d}x{d}") });
            }
        }
        match &self.initial {
            InitialMeasure::Gaussian { mean, cov } => {
                if mean.len() != d || (cov.rows(), cov.cols()) != (d, d) {
                    return Err(Error::ShapeMismatch { what: "initial gaussian".into() });
                }
            }
            InitialMeasure::Empirical { points } => {
                if points.is_empty() || points.iter().any(|p| p.len() != d) {
                    return Err(Error::ShapeMismatch { what: "initial empirical points".into() });
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::NotFinite { what: "initial empirical points".into() });
                }
            }
            InitialMeasure::UniformBox { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return Err(Error::ShapeMismatch { what: "initial uniform box".into() });
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::Parse { msg: "uniform box requires lo < hi".into() });
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, as lowercase hex.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.to_json()).expect("serialize");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

const PSD_TOL: f64 = 1e-9;
const SYM_TOL: f64 = 1e-12;
const R_PD_MIN: f64 = 1e-9;

fn check_sym(m: &Mat, cond: &str, at: &str, out: &mut Vec<Violation>) -> bool {
    let asym = m.asymmetry();
    if asym > SYM_TOL * (1.0 + m.frobenius()) {
        out.push(Violation { condition: format!("{cond}_symmetric"), at: at.into(), magnitude: asym });
        return false;
    }
    true
}

fn check_psd(m: &Mat, cond: &str, at: &str, out: &mut Vec<Violation>) {
    let sym = m.symmetrize();
    match matkit::min_eigenvalue(&sym) {
        Ok(min) => {
            if min < -PSD_TOL * (1.0 + sym.frobenius()) {
                out.push(Violation { condition: format!("{cond}_psd"), at: at.into(), magnitude: min });
            }
        }
        Err(_) => out.push(Violation {
            condition: format!("{cond}_psd"),
            at: at.into(),
            magnitude: f64::NAN,
        }),
    }
}

/// Check the standing assumptions: symmetry of the cost matrices, Q and Qbar
/// positive semidefinite, R positive definite, and the two barycenter
/// conditions, at every knot and at the terminal time.
pub fn validate(spec: &ProblemSpec) -> Result<ValidationReport> {
    spec.check_shapes()?;
    let mut violations = Vec::new();
    let d = spec.dimension;
    let ident = Mat::identity(d);

    // Union of knot times of the running-cost matrices.
    let mut times: Vec<f64> = Vec::new();
    for tv in [&spec.Q, &spec.Qbar, &spec.R, &spec.S] {
        for (t, _) in tv.knots() {
            if !times.iter().any(|u| (u - t).abs() < 1e-15) {
                times.push(*t);
            }
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for &t in &times {
        let at = format!("t={t}");
        let q = eval_tv(&spec.Q, t);
        let qbar = eval_tv(&spec.Qbar, t);
        let r = eval_tv(&spec.R, t);
        let s = eval_tv(&spec.S, t);

        let q_sym = check_sym(&q, "Q", &at, &mut violations);
        let qbar_sym = check_sym(&qbar, "Qbar", &at, &mut violations);
        let r_sym = check_sym(&r, "R", &at, &mut violations);
        if q_sym {
            check_psd(&q, "Q", &at, &mut violations);
        }
        if qbar_sym {
            check_psd(&qbar, "Qbar", &at, &mut violations);
        }
        if r_sym {
            match matkit::min_eigenvalue(&r.symmetrize()) {
                Ok(min) if min < R_PD_MIN => violations.push(Violation {
                    condition: "R_positive_definite".into(),
                    at: at.clone(),
                    magnitude: min,
                }),
                Ok(_) => {}
                Err(_) => violations.push(Violation {
                    condition: "R_positive_definite".into(),
                    at: at.clone(),
                    magnitude: f64::NAN,
                }),
            }
        }
        // Barycenter condition in the running cost: Q + (I-S)' Qbar (I-S) >= 0.
        if q_sym && qbar_sym {
            let ims = ident.sub(&s);
            let combo = q.add(&ims.transpose().mul(&qbar).mul(&ims));
            check_psd(&combo, "cond_qs", &at, &mut violations);
        }
    }

    let qt_sym = check_sym(&spec.QT, "QT", "terminal", &mut violations);
    let qbart_sym = check_sym(&spec.QbarT, "QbarT", "terminal", &mut violations);
    if qt_sym {
        check_psd(&spec.QT, "QT", "terminal", &mut violations);
    }
    if qbart_sym {
        check_psd(&spec.QbarT, "QbarT", "terminal", &mut violations);
    }
    if qt_sym && qbart_sym {
        let ims = ident.sub(&spec.ST);
        let combo = spec.QT.add(&ims.transpose().mul(&spec.QbarT).mul(&ims));
        check_psd(&combo, "cond_qsT", "terminal", &mut violations);
    }

    if let InitialMeasure::Gaussian { cov, .. } = &spec.initial {
        if check_sym(cov, "initial_cov", "initial", &mut violations) {
            check_psd(cov, "initial_cov", "initial", &mut violations);
        }
    }

    Ok(ValidationReport { violations })
}

fn check_time(spec: &ProblemSpec, t: f64) -> Result<()> {
    if t < 0.0 || t > spec.horizon || !t.is_finite() {
        return Err(Error::OutOfRange { t, horizon: spec.horizon });
    }
    Ok(())
}

/// Dynamics b(t, x, mu, u) = A(t) x + B(t) u + Abar(t) mubar.
pub fn drift(spec: &ProblemSpec, t: f64, x: &[f64], mubar: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_time(spec, t)?;
    let ax = eval_tv(&spec.A, t).matvec(x);
    let bu = eval_tv(&spec.B, t).matvec(u);
    let am = eval_tv(&spec.Abar, t).matvec(mubar);
    Ok(matkit::vec_add(&matkit::vec_add(&ax, &bu), &am))
}

/// Running cost f = (1/2)[x'Qx + u'Ru + (x - S mubar)' Qbar (x - S mubar)].
pub fn running_cost(spec: &ProblemSpec, t: f64, x: &[f64], mubar: &[f64], u: &[f64]) -> Result<f64> {
    check_time(spec, t)?;
    let q = eval_tv(&spec.Q, t);
    let r = eval_tv(&spec.R, t);
    let qbar = eval_tv(&spec.Qbar, t);
    let s = eval_tv(&spec.S, t);
    let shifted = matkit::vec_sub(x, &s.matvec(mubar));
    let val = matkit::dot(x, &q.matvec(x))
        + matkit::dot(u, &r.matvec(u))
        + matkit::dot(&shifted, &qbar.matvec(&shifted));
    Ok(0.5 * val)
}

/// Terminal cost g = (1/2)[x'QT x + (x - ST mubar)' QbarT (x - ST mubar)].
pub fn terminal_cost(spec: &ProblemSpec, x: &[f64], mubar: &[f64]) -> f64 {
    let shifted = matkit::vec_sub(x, &spec.ST.matvec(mubar));
    0.5 * (matkit::dot(x, &spec.QT.matvec(x))
        + matkit::dot(&shifted, &spec.QbarT.matvec(&shifted)))
}

// ---------------------------------------------------------------------------
// JSON problem-file format (strict: unknown fields are an error)
// ---------------------------------------------------------------------------

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse { msg: msg.into() }
}

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| parse_err(format!("{what} must be an object")))
}

fn expect_keys(obj: &Map<String, Value>, allowed: &[&str], what: &str) -> Result<()> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(parse_err(format!("unknown field `{key}` in {what}")));
        }
    }
    Ok(())
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str, what: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| parse_err(format!("missing field `{key}` in {what}")))
}

fn parse_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| parse_err(format!("{what} must be a number")))
}

fn parse_vector(v: &Value, what: &str) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| parse_err(format!("{what} must be an array")))?;
    arr.iter().map(|x| parse_f64(x, what)).collect()
}

fn parse_matrix(v: &Value, what: &str) -> Result<Mat> {
    let rows = v.as_array().ok_or_else(|| parse_err(format!("{what} must be a 2-D array")))?;
    if rows.is_empty() {
        return Err(parse_err(format!("{what} is empty")));
    }
    let mut data = Vec::new();
    let cols = rows[0].as_array().map(|r| r.len()).unwrap_or(0);
    for row in rows {
        let row = parse_vector(row, what)?;
        if row.len() != cols {
            return Err(parse_err(format!("{what} has ragged rows")));
        }
        data.extend(row);
    }
    Mat::new(rows.len(), cols, data)
}

fn parse_tv(v: &Value, what: &str) -> Result<TimeVaryingMat> {
    let obj = as_object(v, what)?;
    expect_keys(obj, &["constant", "knots"], what)?;
    match (obj.get("constant"), obj.get("knots")) {
        (Some(c), None) => Ok(TimeVaryingMat::constant(parse_matrix(c, what)?)),
        (None, Some(k)) => {
            let arr = k.as_array().ok_or_else(|| parse_err(format!("{what}.knots must be an array")))?;
            let mut knots = Vec::new();
            for entry in arr {
                let eobj = as_object(entry, what)?;
                expect_keys(eobj, &["t", "value"], what)?;
                let t = parse_f64(get(eobj, "t", what)?, what)?;
                let value = parse_matrix(get(eobj, "value", what)?, what)?;
                knots.push((t, value));
            }
            TimeVaryingMat::from_knots(knots)
        }
        _ => Err(parse_err(format!("{what} must have exactly one of `constant`, `knots`"))),
    }
}

fn parse_initial(v: &Value) -> Result<InitialMeasure> {
    let obj = as_object(v, "initial")?;
    let kind = get(obj, "type", "initial")?
        .as_str()
        .ok_or_else(|| parse_err("initial.type must be a string"))?;
    match kind {
        "gaussian" => {
            expect_keys(obj, &["type", "mean", "cov"], "initial")?;
            let mean = parse_vector(get(obj, "mean", "initial")?, "initial.mean")?;
            let cov = parse_matrix(get(obj, "cov", "initial")?, "initial.cov")?;
            Ok(InitialMeasure::Gaussian { mean, cov })
        }
        "empirical" => {
            expect_keys(obj, &["type", "points"], "initial")?;
            let pts = get(obj, "points", "initial")?
                .as_array()
                .ok_or_else(|| parse_err("initial.points must be an array"))?;
            let points = pts
                .iter()
                .map(|p| parse_vector(p, "initial.points"))
                .collect::<Result<Vec<_>>>()?;
            if points.is_empty() {
                return Err(parse_err("initial.points is empty"));
            }
            Ok(InitialMeasure::Empirical { points })
        }
        "uniform_box" => {
            expect_keys(obj, &["type", "lo", "hi"], "initial")?;
            let lo = parse_vector(get(obj, "lo", "initial")?, "initial.lo")?;
            let hi = parse_vector(get(obj, "hi", "initial")?, "initial.hi")?;
            Ok(InitialMeasure::UniformBox { lo, hi })
        }
        other => Err(parse_err(format!("unknown initial type `{other}`"))),
    }
}

impl ProblemSpec {
    /// Parse the JSON problem-file format. Unknown fields are rejected.
    pub fn from_json_str(text: &str) -> Result<ProblemSpec> {
        let root: Value =
            serde_json::from_str(text).map_err(|e| parse_err(format!("invalid JSON: {e}")))?;
        let obj = as_object(&root, "problem")?;
        expect_keys(obj, &["dimension", "horizon", "matrices", "terminal", "initial"], "problem")?;

        let dimension = get(obj, "dimension", "problem")?
            .as_u64()
            .ok_or_else(|| parse_err("dimension must be a positive integer"))?
            as usize;
        let horizon = parse_f64(get(obj, "horizon", "problem")?, "horizon")?;

        let mats = as_object(get(obj, "matrices", "problem")?, "matrices")?;
        expect_keys(mats, &["A", "Abar", "B", "Q", "Qbar", "R", "S"], "matrices")?;
        let tv = |name: &str| -> Result<TimeVaryingMat> {
            parse_tv(get(mats, name, "matrices")?, &format!("matrices.{name}"))
        };

        let term = as_object(get(obj, "terminal", "problem")?, "terminal")?;
        expect_keys(term, &["QT", "QbarT", "ST"], "terminal")?;

        let spec = ProblemSpec {
            dimension,
            horizon,
            A: tv("A")?,
            Abar: tv("Abar")?,
            B: tv("B")?,
            Q: tv("Q")?,
            Qbar: tv("Qbar")?,
            R: tv("R")?,
            S: tv("S")?,
            QT: parse_matrix(get(term, "QT", "terminal")?, "terminal.QT")?,
            QbarT: parse_matrix(get(term, "QbarT", "terminal")?, "terminal.QbarT")?,
            ST: parse_matrix(get(term, "ST", "terminal")?, "terminal.ST")?,
            initial: parse_initial(get(obj, "initial", "problem")?)?,
        };
        spec.check_shapes()?;
        Ok(spec)
    }

    /// Canonical JSON form, the inverse of [`ProblemSpec::from_json_str`].
    pub fn to_json(&self) -> Value {
        fn mat_json(m: &Mat) -> Value {
            let rows: Vec<Value> = (0..m.rows())
                .map(|i| json!((0..m.cols()).map(|j| m.get(i, j)).collect::<Vec<f64>>()))
                .collect();
            json!(rows)
        }
        fn tv_json(m: &TimeVaryingMat) -> Value {
            if m.knots().len() == 1 {
                json!({ "constant": mat_json(&m.knots()[0].1) })
            } else {
                let knots: Vec<Value> = m
                    .knots()
                    .iter()
                    .map(|(t, v)| json!({ "t": t, "value": mat_json(v) }))
                    .collect();
                json!({ "knots": knots })
            }
        }
        let initial = match &self.initial {
            InitialMeasure::Gaussian { mean, cov } => {
                json!({ "type": "gaussian", "mean": mean, "cov": mat_json(cov) })
            }
            InitialMeasure::Empirical { points } => {
                json!({ "type": "empirical", "points": points })
            }
            InitialMeasure::UniformBox { lo, hi } => {
                json!({ "type": "uniform_box", "lo": lo, "hi": hi })
            }
        };
        json!({
            "dimension": self.dimension,
            "horizon": self.horizon,
            "matrices": {
                "A": tv_json(&self.A),
                "Abar": tv_json(&self.Abar),
                "B": tv_json(&self.B),
                "Q": tv_json(&self.Q),
                "Qbar": tv_json(&self.Qbar),
                "R": tv_json(&self.R),
                "S": tv_json(&self.S),
            },
            "terminal": {
                "QT": mat_json(&self.QT),
                "QbarT": mat_json(&self.QbarT),
                "ST": mat_json(&self.ST),
            },
            "initial": initial,
        })
    }
}

/// Builder for scalar (d = 1) specs; used pervasively in tests and examples.
#[allow(non_snake_case)]
pub struct ScalarSpecBuilder {
    pub A: f64,
    pub Abar: f64,
    pub B: f64,
    pub Q: f64,
    pub Qbar: f64,
    pub R: f64,
    pub S: f64,
    pub QT: f64,
    pub QbarT: f64,
    pub ST: f64,
    pub horizon: f64,
    pub initial: InitialMeasure,
}

impl Default for ScalarSpecBuilder {
    fn default() -> Self {
        ScalarSpecBuilder {
            A: 0.0,
            Abar: 0.0,
            B: 1.0,
            Q: 0.0,
            Qbar: 0.0,
            R: 1.0,
            S: 0.0,
            QT: 1.0,
            QbarT: 0.0,
            ST: 0.0,
            horizon: 1.0,
            initial: InitialMeasure::Gaussian { mean: vec![1.0], cov: Mat::scalar(0.25) },
        }
    }
}

impl ScalarSpecBuilder {
    pub fn build(self) -> ProblemSpec {
        let c = |v: f64| TimeVaryingMat::constant(Mat::scalar(v));
        ProblemSpec {
            dimension: 1,
            horizon: self.horizon,
            A: c(self.A),
            Abar: c(self.Abar),
            B: c(self.B),
            Q: c(self.Q),
            Qbar: c(self.Qbar),
            R: c(self.R),
            S: c(self.S),
            QT: Mat::scalar(self.QT),
            QbarT: Mat::scalar(self.QbarT),
            ST: Mat::scalar(self.ST),
            initial: self.initial,
        }
    }
}
