//! Candidate equations: a constant intercept plus an ordered set of
//! parameterized summands.
//!
//! The search grammar is
//!
//! ```text
//! V -> c | V + B
//! B -> c·X | c·exp(c·X) | c·X·X
//! X -> x_1 | ... | x_m
//! ```
//!
//! with an additional generator-only `c·X^3 | c·X^4` block used to build
//! decision boundaries that lie outside the search space.
//!
//! Equations are always kept in canonical form: summands sorted by
//! [`SummandShape`], product features sorted ascending, and no two summands
//! with the same shape.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest magnitude accepted as an `exp` argument.
pub const EXP_ARG_LIMIT: f64 = 700.0;

/// Current version of the equation JSON document.
pub const EQUATION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("feature index {index} out of range for input of length {len}")]
    FeatureOutOfRange { index: usize, len: usize },
    #[error("non-finite input value at feature {0}")]
    NonFiniteInput(usize),
    #[error("duplicate summand structure {0:?}")]
    DuplicateSummand(SummandShape),
    #[error("expected {expected} constants, got {got}")]
    ConstantCount { expected: usize, got: usize },
    #[error("no name for feature {0}")]
    MissingName(usize),
    #[error("feature {0} has zero range and cannot be denormalized")]
    DegenerateFeature(usize),
    #[error("power degree must be 3 or 4, got {0}")]
    InvalidDegree(u8),
    #[error("malformed equation document: {0}")]
    Format(String),
}

/// Index into the encoded feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(pub usize);

impl FeatureId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One additive building block with its constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Summand {
    /// `coef · x_f`
    Linear { coef: f64, feature: FeatureId },
    /// `coef · x_left · x_right`, `left <= right`; `left == right` is the square.
    Product {
        coef: f64,
        left: FeatureId,
        right: FeatureId,
    },
    /// `outer · exp(inner · x_f)`
    Exp {
        outer: f64,
        inner: f64,
        feature: FeatureId,
    },
    /// `coef · x_f^degree`, degree 3 or 4. Only produced by the data generators
    /// unless a grammar explicitly enables it.
    Power {
        coef: f64,
        feature: FeatureId,
        degree: u8,
    },
}

/// The structure of a summand with its constants erased.
///
/// The derived `Ord` is the canonical summand order: variant rank first
/// (linear, product, exp, power), then feature indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SummandShape {
    Linear(FeatureId),
    Product(FeatureId, FeatureId),
    Exp(FeatureId),
    Power(FeatureId, u8),
}

impl SummandShape {
    /// Number of constants the summand carries.
    pub fn constant_count(self) -> usize {
        match self {
            SummandShape::Exp(_) => 2,
            _ => 1,
        }
    }

    /// Builds a summand of this shape with the given constants.
    pub fn with_constants(self, constants: &[f64]) -> Summand {
        match self {
            SummandShape::Linear(feature) => Summand::Linear {
                coef: constants[0],
                feature,
            },
            SummandShape::Product(left, right) => Summand::Product {
                coef: constants[0],
                left,
                right,
            },
            SummandShape::Exp(feature) => Summand::Exp {
                outer: constants[0],
                inner: constants[1],
                feature,
            },
            SummandShape::Power(feature, degree) => Summand::Power {
                coef: constants[0],
                feature,
                degree,
            },
        }
    }

    /// Builds a summand of this shape with all constants zero.
    pub fn zeroed(self) -> Summand {
        self.with_constants(&[0.0, 0.0])
    }

    pub fn max_feature(self) -> usize {
        match self {
            SummandShape::Linear(f) | SummandShape::Exp(f) | SummandShape::Power(f, _) => f.0,
            SummandShape::Product(a, b) => a.0.max(b.0),
        }
    }

    pub fn features(self) -> Vec<FeatureId> {
        match self {
            SummandShape::Linear(f) | SummandShape::Exp(f) | SummandShape::Power(f, _) => vec![f],
            SummandShape::Product(a, b) => vec![a, b],
        }
    }

    pub fn variant(self) -> SummandKind {
        match self {
            SummandShape::Linear(_) => SummandKind::Linear,
            SummandShape::Product(..) => SummandKind::Product,
            SummandShape::Exp(_) => SummandKind::Exp,
            SummandShape::Power(_, 3) => SummandKind::Cubic,
            SummandShape::Power(..) => SummandKind::Quartic,
        }
    }
}

impl Summand {
    pub fn shape(&self) -> SummandShape {
        match *self {
            Summand::Linear { feature, .. } => SummandShape::Linear(feature),
            Summand::Product { left, right, .. } => {
                if left <= right {
                    SummandShape::Product(left, right)
                } else {
                    SummandShape::Product(right, left)
                }
            }
            Summand::Exp { feature, .. } => SummandShape::Exp(feature),
            Summand::Power {
                feature, degree, ..
            } => SummandShape::Power(feature, degree),
        }
    }

    pub fn constants(&self) -> Vec<f64> {
        match *self {
            Summand::Linear { coef, .. }
            | Summand::Product { coef, .. }
            | Summand::Power { coef, .. } => vec![coef],
            Summand::Exp { outer, inner, .. } => vec![outer, inner],
        }
    }

    fn canonical(self) -> Summand {
        match self {
            Summand::Product { coef, left, right } if left > right => Summand::Product {
                coef,
                left: right,
                right: left,
            },
            other => other,
        }
    }

    /// Value of the summand at `x`, with `overflow` set when the result
    /// had to be saturated. Feature indices are assumed valid.
    #[inline]
    pub(crate) fn value_at(&self, x: &[f64], overflow: &mut bool) -> f64 {
        let v = match *self {
            Summand::Linear { coef, feature } => coef * x[feature.0],
            Summand::Product { coef, left, right } => coef * x[left.0] * x[right.0],
            Summand::Exp {
                outer,
                inner,
                feature,
            } => outer * clamped_exp(inner * x[feature.0], overflow),
            Summand::Power {
                coef,
                feature,
                degree,
            } => coef * x[feature.0].powi(i32::from(degree)),
        };
        saturate(v, overflow)
    }
}

/// Grammar variants that refinement may introduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummandKind {
    Linear,
    Product,
    Exp,
    Cubic,
    Quartic,
}

/// Shape of the search space: which summands exist over how many features,
/// and how large an equation may grow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub variants: Vec<SummandKind>,
    pub n_features: usize,
    pub max_summands: usize,
    /// Optional ceiling on the total number of constants, intercept included.
    pub max_constants: Option<usize>,
}

impl GrammarConfig {
    /// Linear, product and exp summands over `n_features` features.
    pub fn search(n_features: usize, max_summands: usize) -> Self {
        Self {
            variants: vec![SummandKind::Linear, SummandKind::Product, SummandKind::Exp],
            n_features,
            max_summands,
            max_constants: None,
        }
    }

    /// The search grammar plus cubic and quartic power summands.
    pub fn extended(n_features: usize, max_summands: usize) -> Self {
        let mut g = Self::search(n_features, max_summands);
        g.variants.extend([SummandKind::Cubic, SummandKind::Quartic]);
        g
    }

    pub fn enables(&self, kind: SummandKind) -> bool {
        self.variants.contains(&kind)
    }

    /// Every summand shape the grammar admits, in canonical order.
    pub fn shapes(&self) -> Vec<SummandShape> {
        let m = self.n_features;
        let mut out = Vec::new();
        if self.enables(SummandKind::Linear) {
            out.extend((0..m).map(|f| SummandShape::Linear(FeatureId(f))));
        }
        if self.enables(SummandKind::Product) {
            for a in 0..m {
                for b in a..m {
                    out.push(SummandShape::Product(FeatureId(a), FeatureId(b)));
                }
            }
        }
        if self.enables(SummandKind::Exp) {
            out.extend((0..m).map(|f| SummandShape::Exp(FeatureId(f))));
        }
        for f in 0..m {
            if self.enables(SummandKind::Cubic) {
                out.push(SummandShape::Power(FeatureId(f), 3));
            }
            if self.enables(SummandKind::Quartic) {
                out.push(SummandShape::Power(FeatureId(f), 4));
            }
        }
        out.sort();
        out
    }
}

/// Result of evaluating an equation, with the saturation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub overflow: bool,
}

/// `intercept + Σ summands`, always in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    intercept: f64,
    summands: Vec<Summand>,
}

impl Equation {
    pub fn constant(intercept: f64) -> Self {
        Self {
            intercept,
            summands: Vec::new(),
        }
    }

    /// Builds a canonical equation; fails if two summands share a shape.
    pub fn new(intercept: f64, summands: Vec<Summand>) -> Result<Self, ExprError> {
        for s in &summands {
            if let Summand::Power { degree, .. } = s {
                if !matches!(degree, 3 | 4) {
                    return Err(ExprError::InvalidDegree(*degree));
                }
            }
        }
        Self {
            intercept,
            summands,
        }
        .canonicalize()
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn summands(&self) -> &[Summand] {
        &self.summands
    }

    pub fn len(&self) -> usize {
        self.summands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summands.is_empty()
    }

    pub fn shapes(&self) -> Vec<SummandShape> {
        self.summands.iter().map(Summand::shape).collect()
    }

    pub fn has_exp(&self) -> bool {
        self.summands
            .iter()
            .any(|s| matches!(s, Summand::Exp { .. }))
    }

    pub fn has_power(&self) -> bool {
        self.summands
            .iter()
            .any(|s| matches!(s, Summand::Power { .. }))
    }

    /// Smallest feature count this equation can be evaluated on.
    pub fn required_features(&self) -> usize {
        self.summands
            .iter()
            .map(|s| s.shape().max_feature() + 1)
            .max()
            .unwrap_or(0)
    }

    /// 1 for the intercept plus each summand's own constants.
    pub fn constant_count(&self) -> usize {
        1 + self
            .summands
            .iter()
            .map(|s| s.shape().constant_count())
            .sum::<usize>()
    }

    /// All constants, intercept first, then summand by summand (exp: outer, inner).
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.constant_count());
        out.push(self.intercept);
        for s in &self.summands {
            out.extend(s.constants());
        }
        out
    }

    /// Same structure with new constants, in [`Equation::constants`] order.
    pub fn with_constants(&self, constants: &[f64]) -> Result<Self, ExprError> {
        let expected = self.constant_count();
        if constants.len() != expected {
            return Err(ExprError::ConstantCount {
                expected,
                got: constants.len(),
            });
        }
        let mut pos = 1;
        let summands = self
            .summands
            .iter()
            .map(|s| {
                let shape = s.shape();
                let n = shape.constant_count();
                let out = shape.with_constants(&constants[pos..pos + n]);
                pos += n;
                out
            })
            .collect();
        Ok(Self {
            intercept: constants[0],
            summands,
        })
    }

    /// Sorts summands into canonical order. Duplicate shapes are an error,
    /// never merged.
    pub fn canonicalize(self) -> Result<Self, ExprError> {
        let mut summands: Vec<Summand> = self.summands.into_iter().map(Summand::canonical).collect();
        summands.sort_by_key(|a| a.shape());
        for pair in summands.windows(2) {
            if pair[0].shape() == pair[1].shape() {
                return Err(ExprError::DuplicateSummand(pair[0].shape()));
            }
        }
        Ok(Self {
            intercept: self.intercept,
            summands,
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ExprError> {
        let need = self.required_features();
        if need > x.len() {
            return Err(ExprError::FeatureOutOfRange {
                index: need - 1,
                len: x.len(),
            });
        }
        for s in &self.summands {
            for f in s.shape().features() {
                if !x[f.0].is_finite() {
                    return Err(ExprError::NonFiniteInput(f.0));
                }
            }
        }
        Ok(())
    }

    /// Value of the equation at `x`. Overflow saturates to ±`f64::MAX`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.evaluate_detailed(x).map(|e| e.value)
    }

    pub fn evaluate_detailed(&self, x: &[f64]) -> Result<Evaluation, ExprError> {
        self.check_input(x)?;
        let mut overflow = false;
        let value = self.value_unchecked(x, &mut overflow);
        Ok(Evaluation { value, overflow })
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, x: &[f64], overflow: &mut bool) -> f64 {
        let mut total = self.intercept;
        for s in &self.summands {
            total = saturate(total + s.value_at(x, overflow), overflow);
        }
        total
    }

    /// Partial derivatives of the equation value with respect to every
    /// constant, in [`Equation::constants`] order.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.constant_count()];
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let mut overflow = false;
        out[0] = 1.0;
        let mut pos = 1;
        for s in &self.summands {
            match *s {
                Summand::Linear { feature, .. } => {
                    out[pos] = x[feature.0];
                    pos += 1;
                }
                Summand::Product { left, right, .. } => {
                    out[pos] = x[left.0] * x[right.0];
                    pos += 1;
                }
                Summand::Exp {
                    outer,
                    inner,
                    feature,
                } => {
                    let xf = x[feature.0];
                    let e = clamped_exp(inner * xf, &mut overflow);
                    out[pos] = e;
                    out[pos + 1] = saturate(outer * xf * e, &mut overflow);
                    pos += 2;
                }
                Summand::Power {
                    feature, degree, ..
                } => {
                    out[pos] = x[feature.0].powi(i32::from(degree));
                    pos += 1;
                }
            }
        }
    }

    /// One child per admissible new summand shape, in canonical shape order.
    /// The existing constants are kept and the new summand's constants are
    /// zero; the optimizer decides the starting point.
    pub fn refinements(&self, grammar: &GrammarConfig) -> Vec<Equation> {
        if self.summands.len() >= grammar.max_summands {
            return Vec::new();
        }
        let present = self.shapes();
        grammar
            .shapes()
            .into_iter()
            .filter(|shape| !present.contains(shape))
            .filter(|shape| {
                grammar
                    .max_constants
                    .is_none_or(|cap| self.constant_count() + shape.constant_count() <= cap)
            })
            .map(|shape| {
                let mut summands = self.summands.clone();
                let at = summands
                    .binary_search_by(|s| s.shape().cmp(&shape))
                    .unwrap_err();
                summands.insert(at, shape.zeroed());
                Equation {
                    intercept: self.intercept,
                    summands,
                }
            })
            .collect()
    }

    /// Total order on structures; used to break ties between equal scores.
    pub fn structure_cmp(&self, other: &Equation) -> Ordering {
        self.shapes().cmp(&other.shapes())
    }

    /// Human-readable infix form with constants at `precision` decimals.
    pub fn to_infix_string(&self, names: &[String], precision: usize) -> Result<String, ExprError> {
        self.render(precision, |f| {
            names
                .get(f.0)
                .cloned()
                .ok_or(ExprError::MissingName(f.0))
        })
    }

    fn render(
        &self,
        precision: usize,
        mut var: impl FnMut(FeatureId) -> Result<String, ExprError>,
    ) -> Result<String, ExprError> {
        let mut out = format!("{:.*}", precision, self.intercept);
        for s in &self.summands {
            let lead = s.constants()[0];
            let sign = if lead.is_sign_negative() { '-' } else { '+' };
            let mag = lead.abs();
            let body = match *s {
                Summand::Linear { feature, .. } => var(feature)?,
                Summand::Product { left, right, .. } => {
                    format!("{} · {}", var(left)?, var(right)?)
                }
                Summand::Exp { inner, feature, .. } => {
                    format!("exp({:.*} · {})", precision, inner, var(feature)?)
                }
                Summand::Power {
                    feature, degree, ..
                } => format!("{}^{}", var(feature)?, degree),
            };
            write!(out, " {sign} {mag:.precision$} · {body}").expect("write to String");
        }
        Ok(out)
    }

    /// Rewrites the equation over raw (non-normalized) inputs by substituting
    /// `(x_i - min_i) / range_i` for every feature it uses.
    pub fn denormalize(&self, mins: &[f64], ranges: &[f64]) -> Result<DisplayExpression, ExprError> {
        let need = self.required_features();
        if mins.len() < need || ranges.len() < need {
            return Err(ExprError::FeatureOutOfRange {
                index: need.saturating_sub(1),
                len: mins.len().min(ranges.len()),
            });
        }
        for s in &self.summands {
            for f in s.shape().features() {
                if !(ranges[f.0] > 0.0) {
                    return Err(ExprError::DegenerateFeature(f.0));
                }
            }
        }
        Ok(DisplayExpression {
            equation: self.clone(),
            mins: mins.to_vec(),
            ranges: ranges.to_vec(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&EquationDoc::from(self)).expect("equation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ExprError> {
        let doc: EquationDoc =
            serde_json::from_str(text).map_err(|e| ExprError::Format(e.to_string()))?;
        Equation::try_from(doc)
    }
}

/// An equation over raw inputs: each feature is affinely normalized before
/// the normalized equation is applied. No algebraic expansion is done.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayExpression {
    equation: Equation,
    mins: Vec<f64>,
    ranges: Vec<f64>,
}

impl DisplayExpression {
    pub fn evaluate(&self, raw: &[f64]) -> Result<f64, ExprError> {
        let x: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(i, &v)| match (self.mins.get(i), self.ranges.get(i)) {
                (Some(&lo), Some(&r)) if r > 0.0 => (v - lo) / r,
                _ => 0.0,
            })
            .collect();
        self.equation.evaluate(&x)
    }

    pub fn to_infix_string(&self, names: &[String], precision: usize) -> Result<String, ExprError> {
        self.equation.render(precision, |f| {
            let name = names.get(f.0).ok_or(ExprError::MissingName(f.0))?;
            let lo = self.mins[f.0];
            let op = if lo.is_sign_negative() { '+' } else { '-' };
            Ok(format!(
                "(({name} {op} {:.*}) / {:.*})",
                precision,
                lo.abs(),
                precision,
                self.ranges[f.0]
            ))
        })
    }
}

#[inline]
fn clamped_exp(arg: f64, overflow: &mut bool) -> f64 {
    if arg > EXP_ARG_LIMIT {
        *overflow = true;
        EXP_ARG_LIMIT.exp()
    } else if arg < -EXP_ARG_LIMIT {
        (-EXP_ARG_LIMIT).exp()
    } else {
        arg.exp()
    }
}

#[inline]
fn saturate(v: f64, overflow: &mut bool) -> f64 {
    if v.is_finite() {
        v
    } else {
        *overflow = true;
        if v.is_nan() {
            0.0
        } else if v > 0.0 {
            f64::MAX
        } else {
            f64::MIN
        }
    }
}

/// Wire form of an equation.
///
/// ```json
/// {"version":1,"intercept":0.75,"summands":[
///   {"kind":"product","features":[0,1],"constants":[-1.27]},
///   {"kind":"exp","features":[2],"constants":[8.01,8.18]},
///   {"kind":"power","features":[0],"constants":[0.5],"degree":3}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationDoc {
    pub version: u32,
    pub intercept: f64,
    pub summands: Vec<SummandDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummandDoc {
    pub kind: String,
    pub features: Vec<usize>,
    pub constants: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u8>,
}

impl From<&Equation> for EquationDoc {
    fn from(eq: &Equation) -> Self {
        let summands = eq
            .summands
            .iter()
            .map(|s| {
                let shape = s.shape();
                let (kind, degree) = match shape {
                    SummandShape::Linear(_) => ("linear", None),
                    SummandShape::Product(..) => ("product", None),
                    SummandShape::Exp(_) => ("exp", None),
                    SummandShape::Power(_, d) => ("power", Some(d)),
                };
                SummandDoc {
                    kind: kind.to_string(),
                    features: shape.features().into_iter().map(FeatureId::index).collect(),
                    constants: s.constants(),
                    degree,
                }
            })
            .collect();
        EquationDoc {
            version: EQUATION_FORMAT_VERSION,
            intercept: eq.intercept,
            summands,
        }
    }
}

impl TryFrom<EquationDoc> for Equation {
    type Error = ExprError;

    fn try_from(doc: EquationDoc) -> Result<Self, Self::Error> {
        if doc.version != EQUATION_FORMAT_VERSION {
            return Err(ExprError::Format(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        let bad = |s: &SummandDoc| ExprError::Format(format!("bad summand {s:?}"));
        let mut summands = Vec::with_capacity(doc.summands.len());
        for s in &doc.summands {
            let f = |i: usize| s.features.get(i).copied().map(FeatureId).ok_or_else(|| bad(s));
            let shape = match (s.kind.as_str(), s.features.len()) {
                ("linear", 1) => SummandShape::Linear(f(0)?),
                ("product", 2) => SummandShape::Product(f(0)?, f(1)?),
                ("exp", 1) => SummandShape::Exp(f(0)?),
                ("power", 1) => SummandShape::Power(f(0)?, s.degree.ok_or_else(|| bad(s))?),
                _ => return Err(bad(s)),
            };
            if s.constants.len() != shape.constant_count() {
                return Err(bad(s));
            }
            summands.push(shape.with_constants(&s.constants));
        }
        Equation::new(doc.intercept, summands)
    }
}

impl Serialize for Equation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EquationDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Equation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = EquationDoc::deserialize(deserializer)?;
        Equation::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(coef: f64, f: usize) -> Summand {
        Summand::Linear {
            coef,
            feature: FeatureId(f),
        }
    }

    fn prod(coef: f64, a: usize, b: usize) -> Summand {
        Summand::Product {
            coef,
            left: FeatureId(a),
            right: FeatureId(b),
        }
    }

    fn exp(outer: f64, inner: f64, f: usize) -> Summand {
        Summand::Exp {
            outer,
            inner,
            feature: FeatureId(f),
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn constant_equation_ignores_input() {
        let eq = Equation::constant(0.75);
        assert_eq!(eq.evaluate(&[]).unwrap(), 0.75);
        assert_eq!(eq.evaluate(&[3.0, -2.0]).unwrap(), 0.75);
    }

    #[test]
    fn exp_term_value() {
        let eq = Equation::new(0.0, vec![exp(8.01, 8.18, 0)]).unwrap();
        let v = eq.evaluate(&[1.0]).unwrap();
        assert!((v - 28586.0).abs() <= 1.0, "{v}");
    }

    #[test]
    fn product_term_value() {
        let eq = Equation::new(0.0, vec![prod(1.0, 0, 1)]).unwrap();
        assert_eq!(eq.evaluate(&[2.0, 3.0]).unwrap(), 6.0);
    }

    #[test]
    fn evaluate_rejects_bad_inputs() {
        let eq = Equation::new(0.0, vec![lin(1.0, 2)]).unwrap();
        assert!(matches!(
            eq.evaluate(&[1.0, 2.0]),
            Err(ExprError::FeatureOutOfRange { .. })
        ));
        assert_eq!(
            eq.evaluate(&[0.0, 0.0, f64::NAN]),
            Err(ExprError::NonFiniteInput(2))
        );
    }

    #[test]
    fn exp_overflow_saturates_and_flags() {
        let eq = Equation::new(0.0, vec![exp(1e10, 1000.0, 0)]).unwrap();
        let e = eq.evaluate_detailed(&[1.0]).unwrap();
        assert!(e.overflow);
        assert_eq!(e.value, f64::MAX);
        let calm = Equation::new(0.0, vec![exp(1.0, 1.0, 0)]).unwrap();
        assert!(!calm.evaluate_detailed(&[1.0]).unwrap().overflow);
    }

    #[test]
    fn linear_and_square_gradients() {
        let eq = Equation::new(0.3, vec![lin(2.0, 0)]).unwrap();
        assert_eq!(eq.gradient(&[4.0]).unwrap(), vec![1.0, 4.0]);
        let sq = Equation::new(0.3, vec![prod(2.0, 0, 0)]).unwrap();
        assert_eq!(sq.gradient(&[3.0]).unwrap(), vec![1.0, 9.0]);
    }

    #[test]
    fn exp_gradient_matches_finite_differences() {
        // Expected values computed by central differences with h = 1e-6.
        let eq = Equation::new(0.1, vec![exp(2.0, 0.5, 0)]).unwrap();
        let x = [1.0];
        let g = eq.gradient(&x).unwrap();
        let base = eq.constants();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut up = base.clone();
            let mut down = base.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (eq.with_constants(&up).unwrap().evaluate(&x).unwrap()
                - eq.with_constants(&down).unwrap().evaluate(&x).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() / fd.abs().max(1.0) < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
        assert!((g[1] - 1.6487).abs() < 1e-4);
        assert!((g[2] - 3.2974).abs() < 1e-4);
    }

    #[test]
    fn refinement_counts_small_cases() {
        let g2 = GrammarConfig::search(2, 3);
        assert_eq!(Equation::constant(0.0).refinements(&g2).len(), 7);
        let with_x1 = Equation::new(0.0, vec![lin(1.0, 0)]).unwrap();
        assert_eq!(with_x1.refinements(&g2).len(), 6);
        let g1 = GrammarConfig::search(1, 3);
        let kids = Equation::constant(0.0).refinements(&g1);
        assert_eq!(
            kids.iter().map(|e| e.shapes()[0]).collect::<Vec<_>>(),
            vec![
                SummandShape::Linear(FeatureId(0)),
                SummandShape::Product(FeatureId(0), FeatureId(0)),
                SummandShape::Exp(FeatureId(0)),
            ]
        );
    }

    #[test]
    fn refinements_stop_at_depth_cap() {
        let g = GrammarConfig::search(2, 1);
        let eq = Equation::new(0.0, vec![lin(1.0, 0)]).unwrap();
        assert!(eq.refinements(&g).is_empty());
    }

    #[test]
    fn refinements_respect_constant_ceiling() {
        let mut g = GrammarConfig::search(2, 3);
        g.max_constants = Some(2);
        let kids = Equation::constant(0.0).refinements(&g);
        assert_eq!(kids.len(), 5);
        assert!(kids.iter().all(|k| !k.has_exp()));
    }

    #[test]
    fn refinements_never_emit_power_in_search_grammar() {
        let g = GrammarConfig::search(3, 3);
        assert!(Equation::constant(0.0)
            .refinements(&g)
            .iter()
            .all(|e| !e.has_power()));
        let ext = GrammarConfig::extended(3, 3);
        assert!(Equation::constant(0.0)
            .refinements(&ext)
            .iter()
            .any(|e| e.has_power()));
    }

    #[test]
    fn canonicalize_orders_product_pair() {
        let eq = Equation::new(0.0, vec![prod(2.0, 1, 0)]).unwrap();
        assert_eq!(eq.summands()[0], prod(2.0, 0, 1));
    }

    #[test]
    fn canonicalize_sorts_and_is_idempotent() {
        let eq = Equation::new(0.0, vec![lin(1.0, 1), lin(2.0, 0)]).unwrap();
        assert_eq!(eq.summands(), &[lin(2.0, 0), lin(1.0, 1)]);
        assert_eq!(eq.clone().canonicalize().unwrap(), eq);
    }

    #[test]
    fn canonicalize_rejects_duplicates() {
        let err = Equation::new(0.0, vec![prod(1.0, 0, 1), prod(2.0, 1, 0)]).unwrap_err();
        assert!(matches!(err, ExprError::DuplicateSummand(_)));
    }

    #[test]
    fn infix_rendering() {
        assert_eq!(
            Equation::constant(-0.5).to_infix_string(&[], 2).unwrap(),
            "-0.50"
        );
        let eq = Equation::new(0.75, vec![prod(-1.27, 0, 1)]).unwrap();
        assert_eq!(
            eq.to_infix_string(&names(&["a", "b"]), 2).unwrap(),
            "0.75 - 1.27 · a · b"
        );
        let adult = Equation::new(
            0.75,
            vec![prod(-1.27, 0, 1), lin(3.37, 2), exp(8.01, 8.18, 3)],
        )
        .unwrap();
        let text = adult
            .to_infix_string(
                &names(&["own-child", "education-num", "capitalgain", "married-civ-spouse"]),
                2,
            )
            .unwrap();
        assert_eq!(
            text,
            "0.75 + 3.37 · capitalgain - 1.27 · own-child · education-num + 8.01 · exp(8.18 · married-civ-spouse)"
        );
        assert!(matches!(
            eq.to_infix_string(&names(&["a"]), 2),
            Err(ExprError::MissingName(1))
        ));
    }

    #[test]
    fn denormalize_identity_and_endpoint() {
        let eq = Equation::new(0.2, vec![lin(1.0, 0)]).unwrap();
        let d = eq.denormalize(&[0.0], &[1.0]).unwrap();
        assert_eq!(d.evaluate(&[0.37]).unwrap(), eq.evaluate(&[0.37]).unwrap());
        let eq = Equation::new(0.0, vec![lin(1.0, 0)]).unwrap();
        let d = eq.denormalize(&[2.0], &[4.0]).unwrap();
        assert_eq!(d.evaluate(&[6.0]).unwrap(), 1.0);
        assert_eq!(
            d.to_infix_string(&names(&["x"]), 2).unwrap(),
            "0.00 + 1.00 · ((x - 2.00) / 4.00)"
        );
    }

    #[test]
    fn denormalize_rejects_zero_range_on_used_feature() {
        let eq = Equation::new(0.0, vec![lin(1.0, 1)]).unwrap();
        assert!(eq.denormalize(&[0.0, 0.0], &[0.0, 1.0]).is_ok());
        assert_eq!(
            eq.denormalize(&[0.0, 0.0], &[1.0, 0.0]),
            Err(ExprError::DegenerateFeature(1))
        );
    }

    #[test]
    fn json_document_shape() {
        let eq = Equation::new(
            0.5,
            vec![
                exp(1.5, -0.25, 0),
                Summand::Power {
                    coef: 2.0,
                    feature: FeatureId(1),
                    degree: 3,
                },
            ],
        )
        .unwrap();
        let text = eq.to_json();
        assert_eq!(
            text,
            r#"{"version":1,"intercept":0.5,"summands":[{"kind":"exp","features":[0],"constants":[1.5,-0.25]},{"kind":"power","features":[1],"constants":[2.0],"degree":3}]}"#
        );
        assert_eq!(Equation::from_json(&text).unwrap(), eq);
        assert!(Equation::from_json(&text.replace("\"version\":1", "\"version\":9")).is_err());
    }
}
