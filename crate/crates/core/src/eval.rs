//! Realized maps of networks over the reals and the complex plane.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::net::{NetError, Network, NodeId};
use crate::sigma::{PoleProximity, TanhSeries};

pub type Assignment = BTreeMap<NodeId, f64>;
pub type ComplexAssignment = BTreeMap<NodeId, Complex64>;

/// Default absolute distance to a pole below which complex evaluation aborts.
pub const DEFAULT_POLE_TOL: f64 = 1e-9;

/// Closed-form activation functions. Parameters must be strictly positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Builtin {
    Tanh,
    ClippedRelu,
    Logistic,
    Arctan,
    Softsign,
    Isru(f64),
    ClippedIdentity(f64),
    SoftClip(f64),
}

impl Builtin {
    pub const NAMES: [&'static str; 8] = [
        "tanh",
        "clipped-relu",
        "logistic",
        "arctan",
        "softsign",
        "isru",
        "clipped-identity",
        "soft-clip",
    ];

    /// Every kind with a representative parameter, handy for sweeping tests.
    pub fn all_default() -> Vec<Builtin> {
        vec![
            Builtin::Tanh,
            Builtin::ClippedRelu,
            Builtin::Logistic,
            Builtin::Arctan,
            Builtin::Softsign,
            Builtin::Isru(1.0),
            Builtin::ClippedIdentity(1.0),
            Builtin::SoftClip(4.0),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Tanh => "tanh",
            Builtin::ClippedRelu => "clipped-relu",
            Builtin::Logistic => "logistic",
            Builtin::Arctan => "arctan",
            Builtin::Softsign => "softsign",
            Builtin::Isru(_) => "isru",
            Builtin::ClippedIdentity(_) => "clipped-identity",
            Builtin::SoftClip(_) => "soft-clip",
        }
    }

    pub fn parameter(&self) -> Option<f64> {
        match *self {
            Builtin::Isru(a) | Builtin::ClippedIdentity(a) | Builtin::SoftClip(a) => Some(a),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<(), EvalError> {
        match self.parameter() {
            Some(a) if !(a > 0.0 && a.is_finite()) => Err(EvalError::BadParameter {
                kind: self.name(),
                value: a,
            }),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Builtin::Tanh => x.tanh(),
            Builtin::ClippedRelu => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    x
                }
            }
            Builtin::Logistic => logistic(x),
            Builtin::Arctan => x.atan(),
            Builtin::Softsign => x / (1.0 + x.abs()),
            Builtin::Isru(a) => x / (1.0 + a * x * x).sqrt(),
            Builtin::ClippedIdentity(a) => {
                if x <= -a {
                    -a
                } else if x >= a {
                    a
                } else {
                    x
                }
            }
            Builtin::SoftClip(a) => (softplus(a * x) - softplus(a * (x - 1.0))) / a,
        }
    }

    /// Derivative, right-hand at breakpoints.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Builtin::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Builtin::ClippedRelu => {
                if (0.0..1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::Logistic => {
                let s = logistic(x);
                s * (1.0 - s)
            }
            Builtin::Arctan => 1.0 / (1.0 + x * x),
            Builtin::Softsign => {
                let d = 1.0 + x.abs();
                1.0 / (d * d)
            }
            Builtin::Isru(a) => (1.0 + a * x * x).powf(-1.5),
            Builtin::ClippedIdentity(a) => {
                if x >= -a && x < a {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::SoftClip(a) => logistic(a * x) - logistic(a * (x - 1.0)),
        }
    }

    /// Points where the derivative may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Builtin::ClippedRelu => vec![0.0, 1.0],
            Builtin::ClippedIdentity(a) => vec![-a, a],
            _ => Vec::new(),
        }
    }

    pub fn limit_neg_inf(&self) -> f64 {
        match *self {
            Builtin::Tanh | Builtin::Softsign => -1.0,
            Builtin::ClippedRelu | Builtin::Logistic | Builtin::SoftClip(_) => 0.0,
            Builtin::Arctan => -std::f64::consts::FRAC_PI_2,
            Builtin::Isru(a) => -1.0 / a.sqrt(),
            Builtin::ClippedIdentity(a) => -a,
        }
    }

    /// sup |ρ'| in closed form.
    pub fn derivative_sup(&self) -> f64 {
        match *self {
            Builtin::Logistic => 0.25,
            Builtin::SoftClip(a) => (a / 4.0).tanh(),
            _ => 1.0,
        }
    }

    /// Total variation of ρ' in closed form. Every builtin derivative rises
    /// from 0 to its peak and falls back, so the variation is twice the peak.
    pub fn derivative_bv(&self) -> f64 {
        2.0 * self.derivative_sup()
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parameter() {
            Some(a) => write!(f, "{}:{}", self.name(), a),
            None => f.write_str(self.name()),
        }
    }
}

impl FromStr for Builtin {
    type Err = EvalError;

    /// Accepts `tanh`, `isru:0.5`, `soft-clip:4` and so on. Parametric kinds
    /// default to `a = 1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => {
                let a = p
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| EvalError::UnknownNonlinearity(s.to_owned()))?;
                (n.trim(), Some(a))
            }
            None => (s.trim(), None),
        };
        let a = param.unwrap_or(1.0);
        let b = match name {
            "tanh" => Builtin::Tanh,
            "clipped-relu" => Builtin::ClippedRelu,
            "logistic" => Builtin::Logistic,
            "arctan" => Builtin::Arctan,
            "softsign" => Builtin::Softsign,
            "isru" => Builtin::Isru(a),
            "clipped-identity" => Builtin::ClippedIdentity(a),
            "soft-clip" => Builtin::SoftClip(a),
            _ => return Err(EvalError::UnknownNonlinearity(s.to_owned())),
        };
        if param.is_some() && b.parameter().is_none() {
            return Err(EvalError::UnknownNonlinearity(s.to_owned()));
        }
        b.check()?;
        Ok(b)
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// The activation applied at every non-input node.
#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity {
    Builtin(Builtin),
    Series(Arc<TanhSeries>),
}

impl Nonlinearity {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Builtin(b) => b.apply(x),
            Nonlinearity::Series(s) => s.eval(x),
        }
    }

    pub fn as_series(&self) -> Option<&TanhSeries> {
        match self {
            Nonlinearity::Series(s) => Some(s),
            Nonlinearity::Builtin(_) => None,
        }
    }
}

impl From<Builtin> for Nonlinearity {
    fn from(b: Builtin) -> Self {
        Nonlinearity::Builtin(b)
    }
}

impl From<TanhSeries> for Nonlinearity {
    fn from(s: TanhSeries) -> Self {
        Nonlinearity::Series(Arc::new(s))
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("pre-activation of `{node}` lies within {distance:e} of the pole {pole}")]
pub struct DomainError {
    pub node: NodeId,
    pub pole: Complex64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("assignment does not match the network inputs (missing: {missing:?}, unexpected: {extra:?})")]
    AssignmentMismatch { missing: Vec<NodeId>, extra: Vec<NodeId> },
    #[error("expected {expected} input values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("complex evaluation needs a tanh-series nonlinearity")]
    NotSeries,
    #[error("networks disagree on inputs or output count")]
    InputMismatch,
    #[error("{kind} parameter must be positive and finite, got {value}")]
    BadParameter { kind: &'static str, value: f64 },
    #[error("unknown nonlinearity `{0}`")]
    UnknownNonlinearity(String),
    #[error("pole tolerance must be positive")]
    BadPoleTol,
    #[error(transparent)]
    Net(#[from] NetError),
}

/// A network flattened into index form for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledNetwork {
    ids: Vec<NodeId>,
    order: Vec<usize>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    bias: Vec<f64>,
    parents: Vec<Vec<(usize, f64)>>,
}

impl CompiledNetwork {
    pub fn new(net: &Network) -> Result<Self, NetError> {
        let ids: Vec<NodeId> = net.node_ids().cloned().collect();
        let index: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let order = net.topological_order()?.iter().map(|id| index[id]).collect();
        let inputs = net.inputs().iter().map(|id| index[id]).collect();
        let outputs = net.outputs().iter().map(|id| index[id]).collect();
        let bias = ids.iter().map(|id| net.bias(id).unwrap_or(0.0)).collect();
        // Parent lists arrive sorted by NodeId, which fixes the summation order.
        let parents = ids
            .iter()
            .map(|id| net.parents(id).iter().map(|(p, w)| (index[p], *w)).collect())
            .collect();
        Ok(CompiledNetwork { ids, order, inputs, outputs, bias, parents })
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.ids.binary_search(id).ok()
    }

    /// Values of every node (indexed like [`CompiledNetwork::ids`]) at an
    /// input point given in input-list order.
    pub fn node_values(&self, rho: &Nonlinearity, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.inputs.len(), "input arity");
        let mut val = vec![0.0; self.ids.len()];
        for (&i, &xi) in self.inputs.iter().zip(x) {
            val[i] = xi;
        }
        for &v in &self.order {
            if self.parents[v].is_empty() {
                continue;
            }
            let mut acc = 0.0;
            for &(p, w) in &self.parents[v] {
                acc += w * val[p];
            }
            val[v] = rho.apply(acc + self.bias[v]);
        }
        val
    }

    pub fn eval(&self, rho: &Nonlinearity, x: &[f64]) -> Vec<f64> {
        let val = self.node_values(rho, x);
        self.outputs.iter().map(|&o| val[o]).collect()
    }

    pub fn node_values_complex(
        &self,
        sigma: &TanhSeries,
        z: &[Complex64],
        pole_tol: f64,
    ) -> Result<Vec<Complex64>, DomainError> {
        assert_eq!(z.len(), self.inputs.len(), "input arity");
        let mut val = vec![Complex64::new(0.0, 0.0); self.ids.len()];
        for (&i, &zi) in self.inputs.iter().zip(z) {
            val[i] = zi;
        }
        for &v in &self.order {
            if self.parents[v].is_empty() {
                continue;
            }
            let mut acc = Complex64::new(self.bias[v], 0.0);
            let mut lin = Complex64::new(0.0, 0.0);
            for &(p, w) in &self.parents[v] {
                lin += val[p] * w;
            }
            acc += lin;
            val[v] = sigma.eval_complex(acc, pole_tol).map_err(|PoleProximity { pole, distance }| {
                DomainError { node: self.ids[v].clone(), pole, distance }
            })?;
        }
        Ok(val)
    }

    pub fn eval_complex(
        &self,
        sigma: &TanhSeries,
        z: &[Complex64],
        pole_tol: f64,
    ) -> Result<Vec<Complex64>, DomainError> {
        let val = self.node_values_complex(sigma, z, pole_tol)?;
        Ok(self.outputs.iter().map(|&o| val[o]).collect())
    }
}

fn ordered_inputs<T: Copy>(net: &Network, x: &BTreeMap<NodeId, T>) -> Result<Vec<T>, EvalError> {
    let missing: Vec<NodeId> = net.inputs().iter().filter(|id| !x.contains_key(*id)).cloned().collect();
    let extra: Vec<NodeId> = x.keys().filter(|id| !net.is_input(id)).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(EvalError::AssignmentMismatch { missing, extra });
    }
    Ok(net.inputs().iter().map(|id| x[id]).collect())
}

/// Output values in output-list order.
pub fn eval_real(net: &Network, rho: &Nonlinearity, x: &Assignment) -> Result<Vec<(NodeId, f64)>, EvalError> {
    let point = ordered_inputs(net, x)?;
    let c = CompiledNetwork::new(net)?;
    Ok(net.outputs().iter().cloned().zip(c.eval(rho, &point)).collect())
}

/// Outputs at a point given in input-list order.
pub fn eval_point(net: &Network, rho: &Nonlinearity, x: &[f64]) -> Result<Vec<f64>, EvalError> {
    if x.len() != net.inputs().len() {
        return Err(EvalError::Arity { expected: net.inputs().len(), got: x.len() });
    }
    Ok(CompiledNetwork::new(net)?.eval(rho, x))
}

/// Value of every node, keyed by id.
pub fn eval_nodes_real(net: &Network, rho: &Nonlinearity, x: &Assignment) -> Result<BTreeMap<NodeId, f64>, EvalError> {
    let point = ordered_inputs(net, x)?;
    let c = CompiledNetwork::new(net)?;
    Ok(c.ids.iter().cloned().zip(c.node_values(rho, &point)).collect())
}

fn series_of(sigma: &Nonlinearity, pole_tol: f64) -> Result<&TanhSeries, EvalError> {
    if !(pole_tol > 0.0) {
        return Err(EvalError::BadPoleTol);
    }
    sigma.as_series().ok_or(EvalError::NotSeries)
}

/// Holomorphic continuation of the realized map, aborting at the first node
/// whose pre-activation comes within `pole_tol` of a pole of σ.
pub fn eval_complex(
    net: &Network,
    sigma: &Nonlinearity,
    z: &ComplexAssignment,
    pole_tol: f64,
) -> Result<Vec<(NodeId, Complex64)>, EvalError> {
    let series = series_of(sigma, pole_tol)?;
    let point = ordered_inputs(net, z)?;
    let c = CompiledNetwork::new(net)?;
    let out = c.eval_complex(series, &point, pole_tol)?;
    Ok(net.outputs().iter().cloned().zip(out).collect())
}

pub fn eval_complex_nodes(
    net: &Network,
    sigma: &Nonlinearity,
    z: &ComplexAssignment,
    pole_tol: f64,
) -> Result<BTreeMap<NodeId, Complex64>, EvalError> {
    let series = series_of(sigma, pole_tol)?;
    let point = ordered_inputs(net, z)?;
    let c = CompiledNetwork::new(net)?;
    let vals = c.node_values_complex(series, &point, pole_tol)?;
    Ok(c.ids.iter().cloned().zip(vals).collect())
}

/// Where [`maps_equal`] samples. Product grid up to two inputs, Latin
/// hypercube beyond.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampling {
    pub lo: f64,
    pub hi: f64,
    pub per_dim: usize,
    pub lhs_points: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { lo: -3.0, hi: 3.0, per_dim: 601, lhs_points: 10_000, seed: 0 }
    }
}

impl Sampling {
    pub fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        let axis = |i: usize| {
            if self.per_dim <= 1 {
                0.5 * (self.lo + self.hi)
            } else {
                self.lo + (self.hi - self.lo) * i as f64 / (self.per_dim - 1) as f64
            }
        };
        match dim {
            0 => vec![Vec::new()],
            1 => (0..self.per_dim).map(|i| vec![axis(i)]).collect(),
            2 => (0..self.per_dim)
                .flat_map(|i| (0..self.per_dim).map(move |j| (i, j)))
                .map(|(i, j)| vec![axis(i), axis(j)])
                .collect(),
            _ => latin_hypercube(dim, self.lhs_points, self.lo, self.hi, self.seed),
        }
    }
}

pub fn latin_hypercube(dim: usize, n: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates with the seeded generator.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        for (p, &s) in pts.iter_mut().zip(&strata) {
            let u: f64 = rng.gen();
            p[d] = lo + (hi - lo) * (s as f64 + u) / n as f64;
        }
    }
    pts
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapComparison {
    pub equal: bool,
    pub max_diff: f64,
    /// Point (input-list order) attaining `max_diff`, reported when unequal.
    pub witness: Option<Vec<f64>>,
}

/// Grid oracle for equality of realized maps.
pub fn maps_equal(
    n1: &Network,
    n2: &Network,
    rho: &Nonlinearity,
    grid: &Sampling,
    tol: f64,
) -> Result<MapComparison, EvalError> {
    if n1.inputs() != n2.inputs() || n1.outputs().len() != n2.outputs().len() {
        return Err(EvalError::InputMismatch);
    }
    let c1 = CompiledNetwork::new(n1)?;
    let c2 = CompiledNetwork::new(n2)?;
    let points = grid.points(n1.inputs().len());
    let diffs: Vec<f64> = points
        .par_iter()
        .map(|x| {
            let a = c1.eval(rho, x);
            let b = c2.eval(rho, x);
            a.iter()
                .zip(&b)
                .map(|(p, q)| {
                    let d = (p - q).abs();
                    if d.is_nan() {
                        f64::INFINITY
                    } else {
                        d
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut best = 0usize;
    for (i, &d) in diffs.iter().enumerate() {
        if d > diffs[best] {
            best = i;
        }
    }
    let max_diff = diffs.get(best).copied().unwrap_or(0.0);
    let equal = max_diff <= tol;
    Ok(MapComparison {
        equal,
        max_diff,
        witness: if equal { None } else { Some(points[best].clone()) },
    })
}
