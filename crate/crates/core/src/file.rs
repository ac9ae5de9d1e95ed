//! Versioned JSON interchange format for networks, nonlinearities, weight
//! tuples and experiment settings.
//!
//! ```json
//! {
//!   "version": 1,
//!   "basis": { "sqrt2": 1.4142135623730951 },
//!   "networks": {
//!     "N": {
//!       "inputs": ["x"], "outputs": ["y"],
//!       "nodes": { "x": null, "y": 0.5 },
//!       "edges": [ { "from": "x", "to": "y", "weight": { "sqrt2": "1/2" } } ]
//!     }
//!   },
//!   "nonlinearities": { "rho": "tanh" },
//!   "tuples": { "t": [1, { "sqrt2": "1" }] },
//!   "experiments": { "e": { "seed": 7, "trials": 20 } }
//! }
//! ```
//!
//! Plain numbers are read as the decimal they are written as when an exact
//! value is needed, so `1.4` means 7/5.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::eval::{Builtin, Nonlinearity, Sampling};
use crate::net::{Network, NodeId};
use crate::sigma::TanhSeries;
use crate::torus::{Basis, SymbolicReal};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("basis: {0}")]
    Basis(String),
    #[error("network `{network}`: {message}")]
    Network { network: String, message: String },
    #[error("nonlinearity `{name}`: {message}")]
    Nonlinearity { name: String, message: String },
    #[error("tuple `{name}`: {message}")]
    Tuple { name: String, message: String },
    #[error("experiment `{name}`: {message}")]
    Experiment { name: String, message: String },
    #[error("no {kind} named `{name}`")]
    Missing { kind: &'static str, name: String },
    #[error("{kind} `{name}` is ambiguous; the file has {count}")]
    Ambiguous { kind: &'static str, name: String, count: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exact rational written as `"p/q"` or `"p"`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Rational(pub BigRational);

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Rational {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| format!("bad rational `{s}`"))?;
            let q: BigInt = q.trim().parse().map_err(|_| format!("bad rational `{s}`"))?;
            if q.is_zero() {
                return Err(format!("zero denominator in `{s}`"));
            }
            return Ok(Rational(BigRational::new(p, q)));
        }
        parse_decimal(s).map(Rational).ok_or_else(|| format!("bad rational `{s}`"))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Exact value of a plain decimal such as `-12.5` or `3e-2`.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let n: BigInt = format!("{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(n);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

/// Exact value of a float as written in shortest round-trip form.
pub fn decimal_of(x: f64) -> Option<BigRational> {
    x.is_finite().then(|| parse_decimal(&format!("{x}"))).flatten()
}

/// Numeric, an exact rational string such as `"2/5"`, or symbolic as
/// rational coordinates over named basis constants (`"1"` is always
/// available).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Numeric(f64),
    Exact(Rational),
    Symbolic(BTreeMap<String, Rational>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub weight: WeightSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
    pub nodes: BTreeMap<NodeId, Option<f64>>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    #[serde(rename = "C")]
    pub c: f64,
    pub alpha: f64,
    pub terms: Vec<(f64, f64)>,
    pub tail_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NonlinearitySpec {
    Builtin(String),
    Series { series: SeriesSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub per_dim: usize,
    pub lhs_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let s = Sampling::default();
        GridSpec { lo: s.lo, hi: s.hi, per_dim: s.per_dim, lhs_points: s.lhs_points }
    }
}

impl GridSpec {
    pub fn sampling(&self, seed: u64) -> Sampling {
        Sampling { lo: self.lo, hi: self.hi, per_dim: self.per_dim, lhs_points: self.lhs_points, seed }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub basis: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub networks: BTreeMap<String, NetworkSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nonlinearities: BTreeMap<String, NonlinearitySpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tuples: BTreeMap<String, Vec<WeightSpec>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub experiments: BTreeMap<String, ExperimentSpec>,
}

impl Default for NetworkFile {
    fn default() -> Self {
        NetworkFile {
            version: FORMAT_VERSION,
            basis: BTreeMap::new(),
            networks: BTreeMap::new(),
            nonlinearities: BTreeMap::new(),
            tuples: BTreeMap::new(),
            experiments: BTreeMap::new(),
        }
    }
}

impl NetworkSpec {
    /// Numeric edges; the node/edge structure is copied verbatim.
    pub fn from_network(net: &Network) -> Self {
        NetworkSpec {
            inputs: net.inputs().to_vec(),
            outputs: net.outputs().to_vec(),
            nodes: net.nodes().clone(),
            edges: net
                .edges()
                .iter()
                .map(|((from, to), w)| EdgeSpec { from: from.clone(), to: to.clone(), weight: WeightSpec::Numeric(*w) })
                .collect(),
        }
    }
}

impl NonlinearitySpec {
    pub fn from_series(s: &TanhSeries) -> Self {
        NonlinearitySpec::Series {
            series: SeriesSpec { c: s.offset(), alpha: s.alpha(), terms: s.terms().collect(), tail_bound: s.tail_bound() },
        }
    }

    pub fn resolve(&self) -> Result<Nonlinearity, String> {
        match self {
            NonlinearitySpec::Builtin(s) => {
                let b: Builtin = s.parse().map_err(|e| format!("{e}"))?;
                b.check().map_err(|e| format!("{e}"))?;
                Ok(Nonlinearity::Builtin(b))
            }
            NonlinearitySpec::Series { series } => {
                TanhSeries::new(series.c, series.alpha, series.terms.clone(), series.tail_bound)
                    .map(|s| Nonlinearity::Series(Arc::new(s)))
                    .map_err(|e| format!("{e}"))
            }
        }
    }
}

impl NetworkFile {
    pub fn parse(text: &str) -> Result<Self, FileError> {
        let file: NetworkFile = serde_json::from_str(text)
            .map_err(|e| FileError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        file.check()?;
        Ok(file)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, FileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: sorted keys, two-space indentation, shortest
    /// round-trip numbers, trailing newline.
    pub fn emit(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    /// Semantic checks, each error naming the offending entity.
    pub fn check(&self) -> Result<(), FileError> {
        if self.version != FORMAT_VERSION {
            return Err(FileError::Version(self.version));
        }
        let basis = self.basis()?;
        for name in self.networks.keys() {
            self.network(name)?;
        }
        for (name, spec) in &self.nonlinearities {
            spec.resolve().map_err(|message| FileError::Nonlinearity { name: name.clone(), message })?;
        }
        for (name, tuple) in &self.tuples {
            for w in tuple {
                symbolic_value(&basis, w).map_err(|message| FileError::Tuple { name: name.clone(), message })?;
            }
        }
        for (name, e) in &self.experiments {
            let bad = |message: &str| FileError::Experiment { name: name.clone(), message: message.into() };
            if let Some(g) = &e.grid {
                if !(g.lo < g.hi) || g.per_dim < 2 || g.lhs_points == 0 {
                    return Err(bad("grid needs lo < hi, per_dim ≥ 2 and lhs_points ≥ 1"));
                }
            }
            if e.tol.is_some_and(|t| !(t >= 0.0)) {
                return Err(bad("tol must be non-negative"));
            }
            if e.layout.as_ref().is_some_and(|l| l.len() < 2 || l.contains(&0)) {
                return Err(bad("layout needs at least two positive entries"));
            }
        }
        Ok(())
    }

    /// The declared basis, always including the constant `1`.
    pub fn basis(&self) -> Result<Basis, FileError> {
        let mut entries = vec![("1".to_owned(), 1.0)];
        for (n, v) in &self.basis {
            if n == "1" {
                if *v != 1.0 {
                    return Err(FileError::Basis("`1` is reserved".into()));
                }
                continue;
            }
            entries.push((n.clone(), *v));
        }
        Basis::new(entries).map_err(|e| FileError::Basis(e.to_string()))
    }

    pub fn network(&self, name: &str) -> Result<Network, FileError> {
        let spec = self.networks.get(name).ok_or_else(|| FileError::Missing { kind: "network", name: name.into() })?;
        let basis = self.basis()?;
        let err = |message: String| FileError::Network { network: name.into(), message };
        let mut edges = BTreeMap::new();
        for e in &spec.edges {
            let w = symbolic_value(&basis, &e.weight)
                .map_err(|m| err(format!("edge {} -> {}: {m}", e.from, e.to)))?
                .numeric();
            if edges.insert((e.from.clone(), e.to.clone()), w).is_some() {
                return Err(err(format!("edge {} -> {} listed twice", e.from, e.to)));
            }
        }
        Network::new(spec.nodes.clone(), spec.inputs.clone(), spec.outputs.clone(), edges)
            .map_err(|e| err(e.to_string()))
    }

    /// Exact weights of the edges leaving `src` in network `name`, in
    /// target id order.
    pub fn symbolic_out_weights(&self, name: &str, src: &NodeId) -> Result<Vec<(NodeId, SymbolicReal)>, FileError> {
        let spec = self.networks.get(name).ok_or_else(|| FileError::Missing { kind: "network", name: name.into() })?;
        let basis = self.basis()?;
        let mut out = Vec::new();
        for e in spec.edges.iter().filter(|e| &e.from == src) {
            let v = symbolic_value(&basis, &e.weight)
                .map_err(|message| FileError::Network { network: name.into(), message })?;
            out.push((e.to.clone(), v));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    pub fn tuple(&self, name: &str) -> Result<Vec<SymbolicReal>, FileError> {
        let t = self.tuples.get(name).ok_or_else(|| FileError::Missing { kind: "tuple", name: name.into() })?;
        let basis = self.basis()?;
        t.iter()
            .map(|w| symbolic_value(&basis, w).map_err(|message| FileError::Tuple { name: name.into(), message }))
            .collect()
    }

    pub fn nonlinearity(&self, name: &str) -> Result<Nonlinearity, FileError> {
        if let Some(spec) = self.nonlinearities.get(name) {
            return spec.resolve().map_err(|message| FileError::Nonlinearity { name: name.into(), message });
        }
        name.parse::<Builtin>()
            .map(Nonlinearity::Builtin)
            .map_err(|_| FileError::Missing { kind: "nonlinearity", name: name.into() })
    }

    /// The entry called `name`, or the only entry when `name` is `None`.
    pub fn pick<'a, T>(map: &'a BTreeMap<String, T>, kind: &'static str, name: Option<&str>) -> Result<&'a str, FileError> {
        match name {
            Some(n) => map
                .get_key_value(n)
                .map(|(k, _)| k.as_str())
                .ok_or_else(|| FileError::Missing { kind, name: n.into() }),
            None if map.len() == 1 => Ok(map.keys().next().expect("one entry")),
            None => Err(FileError::Ambiguous { kind, name: "(unnamed)".into(), count: map.len() }),
        }
    }
}

/// Coordinates of a weight over the basis. Numbers become their written
/// decimal times `1`.
pub fn symbolic_value(basis: &Basis, w: &WeightSpec) -> Result<SymbolicReal, String> {
    let mut coeffs = vec![BigRational::zero(); basis.len()];
    match w {
        WeightSpec::Numeric(x) => {
            let r = decimal_of(*x).ok_or_else(|| format!("weight {x} is not finite"))?;
            let one = basis.index_of("1").ok_or("basis lacks `1`")?;
            coeffs[one] = r;
        }
        WeightSpec::Exact(r) => {
            let one = basis.index_of("1").ok_or("basis lacks `1`")?;
            coeffs[one] = r.0.clone();
        }
        WeightSpec::Symbolic(m) => {
            for (name, r) in m {
                let i = basis.index_of(name).ok_or_else(|| format!("unknown basis constant `{name}`"))?;
                coeffs[i] = r.0.clone();
            }
        }
    }
    SymbolicReal::new(basis, coeffs).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{q_dimension, rat};

    const SAMPLE: &str = r#"{
  "version": 1,
  "basis": { "sqrt2": 1.4142135623730951 },
  "networks": {
    "N": {
      "inputs": ["x"],
      "outputs": ["y"],
      "nodes": { "x": null, "h": -0.25, "y": 0.5 },
      "edges": [
        { "from": "x", "to": "h", "weight": { "sqrt2": "1/2", "1": "1" } },
        { "from": "h", "to": "y", "weight": 0.1 }
      ]
    }
  },
  "nonlinearities": {
    "rho": "isru:0.5",
    "sigma": { "series": { "C": 0.5, "alpha": 3.141592653589793, "terms": [[0.0, 0.5]], "tail_bound": 0.0 } }
  },
  "tuples": { "rationals": ["2/5", "-4/5", "3/2"], "roots": [1, { "sqrt2": "1" }, { "1": "1/2", "sqrt2": "1" }], "decimal": [1, 1.4] },
  "experiments": { "e": { "seed": 3, "trials": 4, "grid": { "lo": -1, "hi": 1, "per_dim": 11, "lhs_points": 10 } } }
}"#;

    #[test]
    fn parse_and_resolve() {
        let f = NetworkFile::parse(SAMPLE).unwrap();
        let n = f.network("N").unwrap();
        let w = n.weight(&"x".into(), &"h".into()).unwrap();
        assert!((w - (1.0 + 0.5 * 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(q_dimension(&f.tuple("roots").unwrap()).unwrap(), 2);
        assert_eq!(q_dimension(&f.tuple("decimal").unwrap()).unwrap(), 1);
        assert_eq!(q_dimension(&f.tuple("rationals").unwrap()).unwrap(), 1);
        assert_eq!(f.tuple("decimal").unwrap()[1].coeffs()[0], rat(7, 5));
        assert!(matches!(f.nonlinearity("sigma").unwrap(), Nonlinearity::Series(_)));
        assert_eq!(f.nonlinearity("tanh").unwrap(), Nonlinearity::Builtin(Builtin::Tanh));
    }

    #[test]
    fn emit_is_canonical() {
        let f = NetworkFile::parse(SAMPLE).unwrap();
        let text = f.emit();
        let g = NetworkFile::parse(&text).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.emit(), text);
    }

    #[test]
    fn parse_errors_carry_position() {
        match NetworkFile::parse("{\n  \"version\": 1,\n  \"networks\": [\n}") {
            Err(FileError::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_name_the_entity() {
        let bad = SAMPLE.replace("\"weight\": 0.1", "\"weight\": 0.0");
        match NetworkFile::parse(&bad) {
            Err(FileError::Network { network, .. }) => assert_eq!(network, "N"),
            other => panic!("{other:?}"),
        }
        let unknown = SAMPLE.replace("\"sqrt2\": \"1/2\"", "\"pi\": \"1/2\"");
        let err = NetworkFile::parse(&unknown).unwrap_err().to_string();
        assert!(err.contains("`N`") && err.contains("pi"), "{err}");
        assert!(matches!(NetworkFile::parse(&SAMPLE.replace("\"version\": 1", "\"version\": 2")), Err(FileError::Version(2))));
        let nl = SAMPLE.replace("isru:0.5", "relu6");
        assert!(matches!(NetworkFile::parse(&nl), Err(FileError::Nonlinearity { .. })));
    }

    #[test]
    fn decimals_are_exact() {
        assert_eq!(parse_decimal("-12.5"), Some(rat(-25, 2)));
        assert_eq!(parse_decimal("3e-2"), Some(rat(3, 100)));
        assert_eq!(parse_decimal("."), None);
        assert_eq!(decimal_of(0.1), Some(rat(1, 10)));
        assert_eq!("4/6".parse::<Rational>().unwrap().to_string(), "2/3");
    }
}
