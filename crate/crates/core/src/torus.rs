//! Rational structure of weight tuples, torus winding witnesses and the
//! input-splitting construction.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::net::{NetError, Network, NodeId};
use crate::sigma::{self_avoiding_witness, RelationVerdict, SigmaError, TanhSeries};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TorusError {
    #[error("value {0} is zero")]
    ZeroValue(usize),
    #[error("no values given")]
    Empty,
    #[error("value {index} has {got} coordinates, basis has {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("invalid basis: {0}")]
    BadBasis(String),
    #[error("basis constants satisfy the integer relation {0:?}")]
    DependentBasis(Vec<i64>),
    #[error("no winding witness within the search budget")]
    NotFound,
    #[error("tolerance must be non-negative")]
    BadTolerance,
    #[error("target has {got} coordinates, decomposition has rank {expected}")]
    TargetMismatch { expected: usize, got: usize },
    #[error("no admissible A at margin {0}")]
    NoAdmissibleA(f64),
    #[error("input splitting needs rank k ≥ 2, got {0}")]
    RankOne(usize),
    #[error("network must have exactly one input")]
    NotSingleInput,
    #[error("network must be non-degenerate, clones-free and layered")]
    BadNetwork,
    #[error("decomposition covers {expected} first-layer weights, network has {got}")]
    FirstLayerMismatch { expected: usize, got: usize },
    #[error("first-layer weight of `{node}` is {weight}, decomposition says {value}")]
    WeightMismatch { node: NodeId, weight: f64, value: f64 },
    #[error("series must have imaginary period 1 (alpha = π)")]
    NotUnitPeriod,
    #[error("every multiplier is even")]
    AllEven,
    #[error("scale a must be positive and finite")]
    BadScale,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sigma(#[from] SigmaError),
}

/// Named real constants, declared rationally independent by the user.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    names: Vec<String>,
    values: Vec<f64>,
}

impl Basis {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self, TorusError> {
        let mut names = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (n, v) in entries {
            if n.is_empty() || names.contains(&n) {
                return Err(TorusError::BadBasis(format!("name `{n}` is empty or repeated")));
            }
            if !v.is_finite() || v == 0.0 {
                return Err(TorusError::BadBasis(format!("`{n}` must be finite and nonzero")));
            }
            names.push(n);
            values.push(v);
        }
        Ok(Basis { names, values })
    }

    /// The one-element basis {1}.
    pub fn unit() -> Self {
        Basis { names: vec!["1".into()], values: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Heuristic independence check: no small integer relation among the
    /// numeric values up to `height`.
    pub fn check_independence(&self, height: u32) -> Result<(), TorusError> {
        match crate::sigma::refute_rational_relation(&self.values, height)? {
            RelationVerdict::NoRelationUpTo(_) => Ok(()),
            RelationVerdict::Relation(m) => Err(TorusError::DependentBasis(m)),
        }
    }
}

/// Exact rational coordinates over a [`Basis`] together with the value.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicReal {
    coeffs: Vec<BigRational>,
    numeric: f64,
}

pub fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

impl SymbolicReal {
    pub fn new(basis: &Basis, coeffs: Vec<BigRational>) -> Result<Self, TorusError> {
        if coeffs.len() != basis.len() {
            return Err(TorusError::DimensionMismatch { index: 0, expected: basis.len(), got: coeffs.len() });
        }
        let numeric = coeffs
            .iter()
            .zip(basis.values())
            .map(|(c, v)| c.to_f64().unwrap_or(f64::NAN) * v)
            .sum();
        Ok(SymbolicReal { coeffs, numeric })
    }

    /// A rational number over the basis {1}.
    pub fn rational(r: BigRational) -> Self {
        let numeric = r.to_f64().unwrap_or(f64::NAN);
        SymbolicReal { coeffs: vec![r], numeric }
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn numeric(&self) -> f64 {
        self.numeric
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }
}

fn check_values(values: &[SymbolicReal]) -> Result<usize, TorusError> {
    let first = values.first().ok_or(TorusError::Empty)?;
    let m = first.coeffs.len();
    for (i, v) in values.iter().enumerate() {
        if v.coeffs.len() != m {
            return Err(TorusError::DimensionMismatch { index: i, expected: m, got: v.coeffs.len() });
        }
        if v.is_zero() {
            return Err(TorusError::ZeroValue(i));
        }
    }
    Ok(m)
}

/// Row-echelon rank of the given rows.
pub fn rational_rank(rows: &[Vec<BigRational>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let cols = m.first().map(Vec::len).unwrap_or(0);
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..m.len()).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        for r in 0..m.len() {
            if r != rank && !m[r][c].is_zero() {
                let f = &m[r][c] / &m[rank][c];
                let pivot_row = m[rank].clone();
                for (x, p) in m[r].iter_mut().zip(&pivot_row) {
                    *x -= &f * p;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Solves Σ_j q_j cols[j] = target exactly, or `None` if target is outside
/// the span. `cols` must be linearly independent.
fn solve_in_span(cols: &[&[BigRational]], target: &[BigRational]) -> Option<Vec<BigRational>> {
    let k = cols.len();
    let m = target.len();
    // Augmented m × (k + 1) system.
    let mut a: Vec<Vec<BigRational>> = (0..m)
        .map(|i| {
            let mut row: Vec<BigRational> = cols.iter().map(|c| c[i].clone()).collect();
            row.push(target[i].clone());
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..k {
        let Some(p) = (r..m).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = BigRational::one() / &a[r][c];
        for x in a[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..m {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                let pr = a[r].clone();
                for (x, p) in a[i].iter_mut().zip(&pr) {
                    *x -= &f * p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    if a[r..].iter().any(|row| !row[k].is_zero()) {
        return None;
    }
    let mut q = vec![BigRational::zero(); k];
    for (i, &c) in pivots.iter().enumerate() {
        q[c] = a[i][k].clone();
    }
    Some(q)
}

/// dim over ℚ of the span of the values.
pub fn q_dimension(values: &[SymbolicReal]) -> Result<usize, TorusError> {
    check_values(values)?;
    let rows: Vec<Vec<BigRational>> = values.iter().map(|v| v.coeffs.clone()).collect();
    Ok(rational_rank(&rows))
}

/// A ℚ-basis selected from the values plus the exact coordinates of every
/// value in it. Rows of `q` follow `order`; the first `k` rows are the
/// identity.
#[derive(Clone, Debug, PartialEq)]
pub struct QDecomposition {
    pub k: usize,
    pub order: Vec<usize>,
    pub q: Vec<Vec<BigRational>>,
    /// Numeric values in the original order.
    pub values: Vec<f64>,
}

impl QDecomposition {
    pub fn d(&self) -> usize {
        self.order.len()
    }

    /// Row of Q for the value at original index `p`.
    pub fn row_of(&self, p: usize) -> &[BigRational] {
        let pos = self.order.iter().position(|&i| i == p).expect("index in range");
        &self.q[pos]
    }

    /// Numeric values of the selected basis α_1..α_k.
    pub fn basis_values(&self) -> Vec<f64> {
        self.order[..self.k].iter().map(|&i| self.values[i]).collect()
    }

    pub fn q_f64(&self) -> Vec<Vec<f64>> {
        self.q.iter().map(|row| row.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()).collect()
    }

    /// Least common denominator of all entries of Q.
    pub fn denominator_lcm(&self) -> BigInt {
        self.q.iter().flatten().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
    }

    /// max_p |α_p − (Q α_basis)_p| computed in floating point.
    pub fn numeric_defect(&self) -> f64 {
        let basis = self.basis_values();
        let q = self.q_f64();
        self.order
            .iter()
            .enumerate()
            .map(|(p, &i)| (self.values[i] - q[p].iter().zip(&basis).map(|(a, b)| a * b).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }
}

/// Greedy ℚ-basis: a value joins if it is independent of those already
/// chosen, scanning in the given order.
pub fn q_decompose(values: &[SymbolicReal]) -> Result<QDecomposition, TorusError> {
    check_values(values)?;
    let mut selected: Vec<usize> = Vec::new();
    for i in 0..values.len() {
        let mut rows: Vec<Vec<BigRational>> = selected.iter().map(|&j| values[j].coeffs.clone()).collect();
        rows.push(values[i].coeffs.clone());
        if rational_rank(&rows) > selected.len() {
            selected.push(i);
        }
    }
    let k = selected.len();
    let mut order = selected.clone();
    order.extend((0..values.len()).filter(|i| !selected.contains(i)));
    let cols: Vec<&[BigRational]> = selected.iter().map(|&j| values[j].coeffs.as_slice()).collect();
    let q = order
        .iter()
        .map(|&i| solve_in_span(&cols, &values[i].coeffs).expect("value lies in the span of the selected basis"))
        .collect();
    Ok(QDecomposition { k, order, q, values: values.iter().map(|v| v.numeric).collect() })
}

/// Integers N_j and scale a with ω_j = N_j a for values that share one
/// rational direction (rank 1). The N_j have no common factor.
pub fn integer_multiples(decomp: &QDecomposition) -> Option<(Vec<BigInt>, f64)> {
    if decomp.k != 1 {
        return None;
    }
    let lcm = decomp.denominator_lcm();
    let mut ns = vec![BigInt::zero(); decomp.d()];
    for (pos, &i) in decomp.order.iter().enumerate() {
        let scaled = &decomp.q[pos][0] * BigRational::from_integer(lcm.clone());
        ns[i] = scaled.to_integer();
    }
    let g = ns.iter().fold(BigInt::zero(), |acc, n| acc.gcd(n));
    for n in ns.iter_mut() {
        *n = &*n / &g;
    }
    let scale = (BigRational::from_integer(g) / BigRational::from_integer(lcm)).to_f64()? * decomp.basis_values()[0];
    Some((ns, scale))
}

/// Divides every N_j by the largest common power of two 2^l and multiplies
/// `a` by 2^l. Returns (odd-containing multiples, new a, l).
pub fn odd_normalize(ns: &[i64], a: f64) -> (Vec<i64>, f64, u32) {
    let l = ns.iter().filter(|&&n| n != 0).map(|n| n.trailing_zeros()).min().unwrap_or(0);
    (ns.iter().map(|n| n >> l).collect(), a * (1u64 << l) as f64, l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindingWitness {
    pub t: f64,
    pub r: Vec<f64>,
    /// max_p dist(α_p t − (Q (α_j r_j))_p, ℤ).
    pub relation_residual: f64,
    /// max_p |(Q (α_j (r_j − s_j)))_p|.
    pub target_gap: f64,
    pub residual: f64,
}

fn dist_to_integer(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Recomputes (relation residual, target gap) of a candidate (t, r).
pub fn winding_residuals(decomp: &QDecomposition, s: &[f64], t: f64, r: &[f64]) -> (f64, f64) {
    let basis = decomp.basis_values();
    let q = decomp.q_f64();
    let mut relation: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for (p, &i) in decomp.order.iter().enumerate() {
        let combo: f64 = (0..decomp.k).map(|j| q[p][j] * basis[j] * r[j]).sum();
        relation = relation.max(dist_to_integer(decomp.values[i] * t - combo));
        let g: f64 = (0..decomp.k).map(|j| q[p][j] * basis[j] * (r[j] - s[j])).sum();
        gap = gap.max(g.abs());
    }
    (relation, gap)
}

fn witness_at(decomp: &QDecomposition, s: &[f64], t: f64, r: Vec<f64>) -> WindingWitness {
    let (relation_residual, target_gap) = winding_residuals(decomp, s, t, &r);
    WindingWitness { t, r, relation_residual, target_gap, residual: relation_residual.max(target_gap) }
}

/// Residue classes c mod D (each entry in [0, D)) with Q c integral, or
/// `None` when D^k is too large to enumerate.
fn lattice_classes(decomp: &QDecomposition, d: i64) -> Option<Vec<Vec<i64>>> {
    let count = (d as f64).powi(decomp.k as i32);
    if count > 1e5 {
        return None;
    }
    let mut out = Vec::new();
    let mut c = vec![0i64; decomp.k];
    loop {
        let integral = decomp.q.iter().all(|row| {
            let v: BigRational = row.iter().zip(&c).map(|(x, &ci)| x * BigRational::from_integer(BigInt::from(ci))).sum();
            v.is_integer()
        });
        if integral {
            out.push(c.clone());
        }
        let mut i = 0;
        while i < c.len() {
            c[i] += 1;
            if c[i] < d {
                break;
            }
            c[i] = 0;
            i += 1;
        }
        if i == c.len() {
            return Some(out);
        }
    }
}

/// Searches t with |t| > `min_abs_t` such that (α_p t) + ℤ^d lies within
/// `tol` of Q(α_1 r_1, …, α_k r_k) + ℤ^d with r close to `s`.
///
/// Rank 1 uses the exact period of the rational tuple. Higher rank scans
/// t_n = (n + α_1 s_1)/α_1 for n = 1, −1, 2, −2, … (at most `budget`
/// candidates), recovers r from the nearest point of the lattice
/// K = {m ∈ ℤ^k : Q m ∈ ℤ^d}, and returns the first hit.
pub fn winding_search(
    decomp: &QDecomposition,
    s: &[f64],
    min_abs_t: f64,
    tol: f64,
    budget: usize,
) -> Result<WindingWitness, TorusError> {
    if !(tol >= 0.0) {
        return Err(TorusError::BadTolerance);
    }
    if s.len() != decomp.k {
        return Err(TorusError::TargetMismatch { expected: decomp.k, got: s.len() });
    }
    let basis = decomp.basis_values();
    let lcm = decomp.denominator_lcm();
    if decomp.k == 1 {
        let period = lcm.to_f64().unwrap_or(f64::INFINITY) / basis[0].abs();
        let above = ((min_abs_t - s[0]) / period).floor() + 1.0;
        let below = ((-min_abs_t - s[0]) / period).ceil() - 1.0;
        let t_up = s[0] + above * period;
        let t_down = s[0] + below * period;
        let t = if t_up.abs() <= t_down.abs() { t_up } else { t_down };
        let w = witness_at(decomp, s, t, s.to_vec());
        return if w.residual <= tol { Ok(w) } else { Err(TorusError::NotFound) };
    }
    let d = lcm.to_i64().unwrap_or(i64::MAX);
    let classes = if d == 1 { None } else { lattice_classes(decomp, d) };
    let q = decomp.q_f64();
    let score = |y: &[f64], m: &[i64]| -> f64 {
        q.iter()
            .map(|row| row.iter().zip(y.iter().zip(m)).map(|(a, (yi, &mi))| a * (yi - mi as f64)).sum::<f64>().abs())
            .fold(0.0, f64::max)
    };
    let integral = |m: &[i64]| {
        decomp.q.iter().all(|row| {
            let v: BigRational = row.iter().zip(m).map(|(x, &mi)| x * BigRational::from_integer(BigInt::from(mi))).sum();
            v.is_integer()
        })
    };
    for step in 0..budget {
        let n = (step / 2 + 1) as f64 * if step % 2 == 0 { 1.0 } else { -1.0 };
        let t = (n + basis[0] * s[0]) / basis[0];
        if t.abs() <= min_abs_t {
            continue;
        }
        let y: Vec<f64> = (0..decomp.k).map(|j| basis[j] * (t - s[j])).collect();
        let m: Option<Vec<i64>> = match &classes {
            Some(cls) => cls
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(&y)
                        .map(|(&ci, &yi)| ci + d * ((yi - ci as f64) / d as f64).round() as i64)
                        .collect::<Vec<i64>>()
                })
                .min_by(|a, b| score(&y, a).total_cmp(&score(&y, b))),
            None => {
                let m: Vec<i64> = y.iter().map(|v| v.round() as i64).collect();
                (d == 1 || integral(&m)).then_some(m)
            }
        };
        let Some(m) = m else { continue };
        let r: Vec<f64> = (0..decomp.k).map(|j| t - m[j] as f64 / basis[j]).collect();
        let w = witness_at(decomp, s, t, r);
        if w.residual <= tol {
            return Ok(w);
        }
    }
    Err(TorusError::NotFound)
}

/// Exclusion points (S − θ_p)/ω_p of the first layer.
pub fn exclusion_points(first_layer: &[(f64, f64)], series: &TanhSeries) -> Vec<f64> {
    let mut pts: Vec<f64> = first_layer
        .iter()
        .flat_map(|&(w, th)| series.shifts().iter().map(move |s| (s - th) / w))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts
}

/// A ∈ `interval` at distance ≥ `margin` from every exclusion point: the
/// midpoint of the first admissible gap between consecutive exclusion
/// points clipped to the interval, or an interval endpoint bordering it.
pub fn choose_a(
    first_layer: &[(f64, f64)],
    series: &TanhSeries,
    interval: (f64, f64),
    margin: f64,
) -> Result<f64, TorusError> {
    if !(margin > 0.0) {
        return Err(TorusError::NoAdmissibleA(margin));
    }
    let pts = exclusion_points(first_layer, series);
    let ok = |x: f64| crate::sigma::distance_to_sorted(&pts, x) >= margin;
    let mut cuts: Vec<f64> = vec![interval.0];
    cuts.extend(pts.iter().copied().filter(|&p| p > interval.0 && p < interval.1));
    cuts.push(interval.1);
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if ok(mid) {
            return Ok(mid);
        }
        for end in [w[0], w[1]] {
            if (end == interval.0 || end == interval.1) && ok(end) {
                return Ok(end);
            }
        }
    }
    Err(TorusError::NoAdmissibleA(margin))
}

/// Names of the inputs created by [`split_input`].
pub fn split_input_labels(k: usize) -> Vec<NodeId> {
    (1..=k).map(|j| NodeId::new(format!("u{j}"))).collect()
}

/// Replaces the single input by k inputs u_1..u_k. First-layer node v_p
/// (taken in id order, matching the decomposition's original order) gets an
/// edge from u_j with weight q_pj·ω_{v_j} whenever q_pj ≠ 0; deeper layers
/// are copied unchanged.
pub fn split_input(m_prime: &Network, decomp: &QDecomposition, series: &TanhSeries) -> Result<Network, TorusError> {
    if decomp.k < 2 {
        return Err(TorusError::RankOne(decomp.k));
    }
    if (series.imaginary_period() - 1.0).abs() > 1e-12 {
        return Err(TorusError::NotUnitPeriod);
    }
    let [v_in] = m_prime.inputs() else {
        return Err(TorusError::NotSingleInput);
    };
    if !m_prime.is_layered() || !m_prime.is_non_degenerate() || !m_prime.is_clones_free() {
        return Err(TorusError::BadNetwork);
    }
    let first: Vec<NodeId> = m_prime.children(v_in).iter().map(|(c, _)| c.clone()).collect();
    if first.len() != decomp.d() {
        return Err(TorusError::FirstLayerMismatch { expected: decomp.d(), got: first.len() });
    }
    let omega: Vec<f64> = first.iter().map(|v| m_prime.weight(v_in, v).expect("child edge")).collect();
    for (p, v) in first.iter().enumerate() {
        let value = decomp.values[p];
        if (omega[p] - value).abs() > 1e-12 * value.abs().max(1.0) {
            return Err(TorusError::WeightMismatch { node: v.clone(), weight: omega[p], value });
        }
    }
    let labels = split_input_labels(decomp.k);
    let mut nodes = m_prime.nodes().clone();
    nodes.remove(v_in);
    for u in &labels {
        if nodes.insert(u.clone(), None).is_some() {
            return Err(NetError::IdCollision(u.clone()).into());
        }
    }
    let mut edges: BTreeMap<(NodeId, NodeId), f64> = m_prime
        .edges()
        .iter()
        .filter(|((s, _), _)| s != v_in)
        .map(|(k, w)| (k.clone(), *w))
        .collect();
    for (pos, &p) in decomp.order.iter().enumerate() {
        for (j, u) in labels.iter().enumerate() {
            let qpj = &decomp.q[pos][j];
            if qpj.is_zero() {
                continue;
            }
            let w = qpj.to_f64().unwrap_or(f64::NAN) * omega[decomp.order[j]];
            edges.insert((u.clone(), first[p].clone()), w);
        }
    }
    Ok(Network::new(nodes, labels, m_prime.outputs().to_vec(), edges)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineKind {
    /// Even N: tanh(π(N a t + θ − s)), no poles on the line.
    TanhLike,
    /// Odd N: coth(π(N a t + θ − s)), poles at t = (s − θ)/(N a).
    CothLike,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryProfile {
    pub n: i64,
    pub theta: f64,
    pub kind: LineKind,
    pub poles: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalProfile {
    pub entries: Vec<EntryProfile>,
    /// (entry index, t*) with t* a pole of exactly one odd entry.
    pub witness: Option<(usize, f64)>,
}

/// Behaviour of the node maps σ(N_j a z + θ_j) along z = t + i/(2a).
pub fn critical_line_profile(
    a: f64,
    entries: &[(i64, f64)],
    series: &TanhSeries,
    t_window: (f64, f64),
) -> Result<CriticalProfile, TorusError> {
    if (series.alpha() - PI).abs() > 1e-12 {
        return Err(TorusError::NotUnitPeriod);
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(TorusError::BadScale);
    }
    if entries.iter().all(|(n, _)| n % 2 == 0) {
        return Err(TorusError::AllEven);
    }
    let profiles = entries
        .iter()
        .map(|&(n, theta)| {
            if n % 2 == 0 {
                return EntryProfile { n, theta, kind: LineKind::TanhLike, poles: Vec::new() };
            }
            let mut poles: Vec<f64> = series
                .shifts()
                .iter()
                .map(|s| (s - theta) / (n as f64 * a))
                .filter(|t| *t >= t_window.0 && *t <= t_window.1)
                .collect();
            poles.sort_by(f64::total_cmp);
            EntryProfile { n, theta, kind: LineKind::CothLike, poles }
        })
        .collect();
    let odd: Vec<usize> = (0..entries.len()).filter(|&j| entries[j].0 % 2 != 0).collect();
    let pairs: Vec<(i64, f64)> = odd.iter().map(|&j| entries[j]).collect();
    let witness = self_avoiding_witness(&pairs, series.shifts(), (t_window.0 * a, t_window.1 * a), 1e-9)
        .ok()
        .map(|hit| (odd[hit.index], hit.t / a));
    Ok(CriticalProfile { entries: profiles, witness })
}

/// |σ(N a z + θ)| at z = t_pole + near + i/(2a) over the same at
/// t_pole + far + i/(2a).
pub fn blowup_ratio(
    series: &TanhSeries,
    entry: (i64, f64),
    a: f64,
    t_pole: f64,
    near: f64,
    far: f64,
) -> Result<f64, TorusError> {
    let g = |t: f64| {
        let z = Complex64::new(t, 0.5 / a);
        series.eval_complex(z * (entry.0 as f64 * a) + entry.1, 1e-15)
    };
    let num = g(t_pole + near).map_err(|_| TorusError::NotFound)?.norm();
    let den = g(t_pole + far).map_err(|_| TorusError::NotFound)?.norm();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LayeredForm;
    use crate::sigma::reference_series;

    fn sqrt2_basis() -> Basis {
        Basis::new(vec![("1".into(), 1.0), ("sqrt2".into(), 2f64.sqrt())]).unwrap()
    }

    fn sym(b: &Basis, c: &[(i64, i64)]) -> SymbolicReal {
        SymbolicReal::new(b, c.iter().map(|&(p, q)| rat(p, q)).collect()).unwrap()
    }

    fn rationals(v: &[(i64, i64)]) -> Vec<SymbolicReal> {
        v.iter().map(|&(p, q)| SymbolicReal::rational(rat(p, q))).collect()
    }

    #[test]
    fn example_tuple_dimensions() {
        assert_eq!(q_dimension(&rationals(&[(2, 5), (-4, 5), (3, 2)])).unwrap(), 1);
        assert_eq!(q_dimension(&rationals(&[(1, 1), (7, 5)])).unwrap(), 1);
        let b = sqrt2_basis();
        assert_eq!(q_dimension(&[sym(&b, &[(1, 1), (0, 1)]), sym(&b, &[(0, 1), (1, 1)])]).unwrap(), 2);
        let v = [sym(&b, &[(1, 1), (0, 1)]), sym(&b, &[(0, 1), (1, 1)]), sym(&b, &[(1, 2), (1, 1)])];
        assert_eq!(q_dimension(&v).unwrap(), 2);
        assert_eq!(q_dimension(&rationals(&[(1, 1), (0, 1)])), Err(TorusError::ZeroValue(1)));
    }

    #[test]
    fn rational_decomposition() {
        let d = q_decompose(&rationals(&[(2, 5), (-4, 5), (3, 2)])).unwrap();
        assert_eq!(d.k, 1);
        assert_eq!(d.q, vec![vec![rat(1, 1)], vec![rat(-2, 1)], vec![rat(15, 4)]]);
        assert!(d.numeric_defect() < 1e-12);
        let single = q_decompose(&rationals(&[(3, 7)])).unwrap();
        assert_eq!(single.q, vec![vec![rat(1, 1)]]);
    }

    #[test]
    fn irrational_decomposition() {
        let b = sqrt2_basis();
        let v = [sym(&b, &[(1, 1), (0, 1)]), sym(&b, &[(0, 1), (1, 1)]), sym(&b, &[(1, 2), (1, 1)])];
        let d = q_decompose(&v).unwrap();
        assert_eq!(d.k, 2);
        assert_eq!(d.q, vec![vec![rat(1, 1), rat(0, 1)], vec![rat(0, 1), rat(1, 1)], vec![rat(1, 2), rat(1, 1)]]);
        // Exact reconstruction over the basis.
        for (pos, &i) in d.order.iter().enumerate() {
            let rebuilt: Vec<BigRational> = (0..b.len())
                .map(|c| (0..d.k).map(|j| &d.q[pos][j] * &v[d.order[j]].coeffs()[c]).sum())
                .collect();
            assert_eq!(rebuilt, v[i].coeffs());
        }
    }

    #[test]
    fn reordering_puts_the_basis_first() {
        let b = sqrt2_basis();
        let v = [sym(&b, &[(2, 1), (0, 1)]), sym(&b, &[(4, 1), (0, 1)]), sym(&b, &[(0, 1), (3, 1)])];
        let d = q_decompose(&v).unwrap();
        assert_eq!(d.order, vec![0, 2, 1]);
        assert_eq!(d.row_of(1), &[rat(2, 1), rat(0, 1)]);
    }

    #[test]
    fn winding_for_sqrt2() {
        let b = sqrt2_basis();
        let d = q_decompose(&[sym(&b, &[(1, 1), (0, 1)]), sym(&b, &[(0, 1), (1, 1)])]).unwrap();
        let w = winding_search(&d, &[0.0, 0.0], 20.0, 5e-3, 10_000).unwrap();
        assert_eq!(w.t, 169.0);
        assert!(w.r[0].abs() < 1e-12);
        assert!((w.r[1] - (169.0 - 239.0 / 2f64.sqrt())).abs() < 1e-12);
        // Convergent oracle: |169√2 − 239| ≈ 2.1e−3.
        assert!((w.residual - (239.0 - 169.0 * 2f64.sqrt()).abs()).abs() < 1e-9);
        let (rel, gap) = winding_residuals(&d, &[0.0, 0.0], w.t, &w.r);
        assert_eq!(rel.max(gap), w.residual);
        assert_eq!(winding_search(&d, &[0.0, 0.0], 20.0, 0.0, 2000), Err(TorusError::NotFound));
    }

    #[test]
    fn winding_for_rational_pair() {
        let d = q_decompose(&rationals(&[(1, 2), (3, 2)])).unwrap();
        let w = winding_search(&d, &[0.0], 10.0, 1e-12, 10).unwrap();
        assert_eq!(w.t, 12.0);
        assert_eq!(w.residual, 0.0);
    }

    #[test]
    fn winding_respects_the_lattice() {
        // Q row (1/2, 1/2) forces m_1 + m_2 even.
        let b = sqrt2_basis();
        let v = [sym(&b, &[(1, 1), (0, 1)]), sym(&b, &[(0, 1), (1, 1)]), sym(&b, &[(1, 2), (1, 2)])];
        let d = q_decompose(&v).unwrap();
        let w = winding_search(&d, &[0.1, -0.2], 5.0, 2e-2, 100_000).unwrap();
        assert!(w.t.abs() > 5.0);
        assert!(w.relation_residual < 1e-9);
        assert!(w.residual <= 2e-2);
    }

    #[test]
    fn choose_a_examples() {
        let unit = TanhSeries::new(0.0, PI, vec![(0.0, 1.0)], 0.0).unwrap();
        assert_eq!(choose_a(&[(1.0, 0.0)], &unit, (0.0, 1.0), 0.4).unwrap(), 0.5);
        let two = TanhSeries::new(0.0, PI, vec![(0.0, 1.0), (0.5, 1.0)], 0.0).unwrap();
        assert_eq!(choose_a(&[(1.0, 0.0)], &two, (0.0, 1.0), 0.2).unwrap(), 0.25);
        let dense = TanhSeries::new(0.0, PI, (0..=4).map(|i| (0.25 * i as f64, 1.0)).collect(), 0.0).unwrap();
        assert_eq!(choose_a(&[(1.0, 0.0)], &dense, (0.0, 1.0), 0.5), Err(TorusError::NoAdmissibleA(0.5)));
    }

    fn fixture_131() -> (Network, QDecomposition) {
        let s2 = 2f64.sqrt();
        let form = LayeredForm::new(
            vec![vec![vec![1.0], vec![s2], vec![1.0 + s2]], vec![vec![0.4, -0.7, 0.25]]],
            vec![vec![0.3, -0.2, 0.1], vec![0.05]],
        )
        .unwrap();
        let net = Network::from_layered(&form, &[NodeId::from("x")]).unwrap();
        let b = sqrt2_basis();
        let d = q_decompose(&[sym(&b, &[(1, 1), (0, 1)]), sym(&b, &[(0, 1), (1, 1)]), sym(&b, &[(1, 1), (1, 1)])]).unwrap();
        (net, d)
    }

    #[test]
    fn split_edges_follow_q() {
        let (net, d) = fixture_131();
        let split = split_input(&net, &d, &reference_series()).unwrap();
        let (u1, u2) = (NodeId::from("u1"), NodeId::from("u2"));
        let v = |j: usize| NodeId::new(format!("v1_{j}"));
        assert_eq!(split.weight(&u1, &v(1)), Some(1.0));
        assert_eq!(split.weight(&u2, &v(1)), None);
        assert_eq!(split.weight(&u2, &v(2)), Some(2f64.sqrt()));
        assert_eq!(split.weight(&u1, &v(3)), Some(1.0));
        assert_eq!(split.weight(&u2, &v(3)), Some(2f64.sqrt()));
        assert!(split.validate().is_empty() && split.is_non_degenerate() && split.is_clones_free());
        let rational = q_decompose(&rationals(&[(1, 1), (2, 1), (3, 1)])).unwrap();
        assert_eq!(split_input(&net, &rational, &reference_series()), Err(TorusError::RankOne(1)));
    }

    #[test]
    fn odd_normalization() {
        assert_eq!(odd_normalize(&[4, 8, 12], 0.5), (vec![1, 2, 3], 2.0, 2));
        assert_eq!(odd_normalize(&[3, 2], 1.0), (vec![3, 2], 1.0, 0));
        let d = q_decompose(&rationals(&[(2, 5), (-4, 5), (3, 2)])).unwrap();
        let (ns, a) = integer_multiples(&d).unwrap();
        assert_eq!(ns, vec![BigInt::from(4), BigInt::from(-8), BigInt::from(15)]);
        assert!((a - 0.1).abs() < 1e-15);
    }

    #[test]
    fn critical_line_classification() {
        let unit = TanhSeries::new(0.0, PI, vec![(0.0, 1.0)], 0.0).unwrap();
        let p = critical_line_profile(1.0, &[(1, 0.0), (2, 0.0)], &unit, (-5.0, 5.0)).unwrap();
        assert_eq!(p.entries[0].kind, LineKind::CothLike);
        assert_eq!(p.entries[0].poles, vec![0.0]);
        assert_eq!(p.entries[1].kind, LineKind::TanhLike);
        assert!(p.entries[1].poles.is_empty());
        let one = TanhSeries::new(0.0, PI, vec![(1.0, 1.0)], 0.0).unwrap();
        let p = critical_line_profile(2.0, &[(1, 0.0)], &one, (-5.0, 5.0)).unwrap();
        assert_eq!(p.entries[0].poles, vec![0.5]);
        assert_eq!(critical_line_profile(1.0, &[(2, 0.0)], &unit, (-5.0, 5.0)), Err(TorusError::AllEven));
    }

    #[test]
    fn critical_line_poles_blow_up() {
        let s = reference_series();
        let p = critical_line_profile(1.0, &[(1, 0.0), (3, 0.2)], &s, (-3.0, 3.0)).unwrap();
        let (j, t) = p.witness.unwrap();
        let entry = (p.entries[j].n, p.entries[j].theta);
        assert!(blowup_ratio(&s, entry, 1.0, t, 1e-3, 1e-1).unwrap() > 10.0);
    }
}
