//! Canonical node signatures and isomorphism checks: extensional,
//! faithful, layered and up to sign changes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::net::{canonical_bits, LayeredForm, NetError, Network, NodeId};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum IsoError {
    #[error("networks have different input label sets")]
    InputSetsDiffer,
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Interned fingerprint. Equality is O(1) within one [`SignatureTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature(u32);

impl Signature {
    pub fn ordinal(self) -> u32 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum SigKey {
    Input(NodeId),
    Node { bias: u64, parents: Vec<(u32, u64)> },
}

/// Interner for signatures. Share one table between networks to compare
/// their signatures; `with_quantum` rounds weights and biases to a grid
/// before hashing.
#[derive(Clone, Debug, Default)]
pub struct SignatureTable {
    keys: HashMap<SigKey, u32>,
    quantum: Option<f64>,
}

impl SignatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_quantum(q: f64) -> Self {
        assert!(q > 0.0, "quantum must be positive");
        SignatureTable { keys: HashMap::new(), quantum: Some(q) }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn bits(&self, x: f64) -> u64 {
        match self.quantum {
            Some(q) => canonical_bits((x / q).round() * q),
            None => canonical_bits(x),
        }
    }

    fn intern(&mut self, key: SigKey) -> Signature {
        let next = self.keys.len() as u32;
        Signature(*self.keys.entry(key).or_insert(next))
    }

    pub fn signatures(&mut self, net: &Network) -> Result<BTreeMap<NodeId, Signature>, NetError> {
        let mut out: BTreeMap<NodeId, Signature> = BTreeMap::new();
        for id in net.topological_order()? {
            let key = match net.bias(&id) {
                None => SigKey::Input(id.clone()),
                Some(b) => {
                    let mut parents: Vec<(u32, u64)> = net
                        .parents(&id)
                        .iter()
                        .map(|(p, w)| (out[p].0, self.bits(*w)))
                        .collect();
                    parents.sort_unstable();
                    SigKey::Node { bias: self.bits(b), parents }
                }
            };
            let sig = self.intern(key);
            out.insert(id, sig);
        }
        Ok(out)
    }
}

/// Signatures of one network in a fresh table.
pub fn signatures(net: &Network) -> Result<BTreeMap<NodeId, Signature>, NetError> {
    SignatureTable::new().signatures(net)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsoKind {
    Extensional,
    Faithful,
    Layered,
    SignChange,
}

/// Replayable certificate of an isomorphism from the first network to the
/// second. For layered kinds, nodes are named `v{l}_{j}` (1-based `j`,
/// layer 0 included); `gammas[l][j]` is the row of the first form matched to
/// row `j` of the second, and `signs[l][j]` the matching ε.
#[derive(Clone, Debug, PartialEq)]
pub struct IsoWitness {
    pub kind: IsoKind,
    pub map: BTreeMap<NodeId, NodeId>,
    pub gammas: Vec<Vec<usize>>,
    pub signs: Vec<Vec<i8>>,
}

fn same_inputs(n1: &Network, n2: &Network) -> Result<(), IsoError> {
    let a: BTreeSet<&NodeId> = n1.inputs().iter().collect();
    let b: BTreeSet<&NodeId> = n2.inputs().iter().collect();
    if a == b {
        Ok(())
    } else {
        Err(IsoError::InputSetsDiffer)
    }
}

fn fast_path_applies(n: &Network) -> bool {
    n.is_clones_free() && n.is_non_degenerate()
}

pub fn extensionally_isomorphic(n1: &Network, n2: &Network) -> Result<Option<IsoWitness>, IsoError> {
    isomorphic(n1, n2, IsoKind::Extensional)
}

pub fn faithfully_isomorphic(n1: &Network, n2: &Network) -> Result<Option<IsoWitness>, IsoError> {
    isomorphic(n1, n2, IsoKind::Faithful)
}

fn isomorphic(n1: &Network, n2: &Network, kind: IsoKind) -> Result<Option<IsoWitness>, IsoError> {
    same_inputs(n1, n2)?;
    let faithful = kind == IsoKind::Faithful;
    let map = if fast_path_applies(n1) && fast_path_applies(n2) {
        match_by_signatures(n1, n2, faithful)?
    } else {
        match_by_search(n1, n2, faithful)?
    };
    Ok(map.map(|map| IsoWitness { kind, map, gammas: Vec::new(), signs: Vec::new() }))
}

/// Node matching through equal signatures. Only complete on clones-free
/// networks, where signatures are injective.
pub fn match_by_signatures(
    n1: &Network,
    n2: &Network,
    faithful: bool,
) -> Result<Option<BTreeMap<NodeId, NodeId>>, IsoError> {
    same_inputs(n1, n2)?;
    if n1.node_count() != n2.node_count() || n1.edge_count() != n2.edge_count() {
        return Ok(None);
    }
    let mut table = SignatureTable::new();
    let s1 = table.signatures(n1)?;
    let s2 = table.signatures(n2)?;
    let mut by_sig: HashMap<Signature, &NodeId> = HashMap::new();
    for (id, sig) in &s2 {
        if by_sig.insert(*sig, id).is_some() {
            // Repeated signature: matching is ambiguous, defer to search.
            return match_by_search(n1, n2, faithful);
        }
    }
    let mut map = BTreeMap::new();
    for (id, sig) in &s1 {
        match by_sig.get(sig) {
            Some(&target) => {
                map.insert(id.clone(), target.clone());
            }
            None => return Ok(None),
        }
    }
    let witness = IsoWitness {
        kind: if faithful { IsoKind::Faithful } else { IsoKind::Extensional },
        map,
        gammas: Vec::new(),
        signs: Vec::new(),
    };
    Ok(verify_network_witness(n1, n2, &witness).ok().map(|_| witness.map))
}

/// Exhaustive backtracking over level-preserving bijections, nodes ordered
/// by level then degree.
pub fn match_by_search(
    n1: &Network,
    n2: &Network,
    faithful: bool,
) -> Result<Option<BTreeMap<NodeId, NodeId>>, IsoError> {
    same_inputs(n1, n2)?;
    if n1.node_count() != n2.node_count()
        || n1.edge_count() != n2.edge_count()
        || n1.outputs().len() != n2.outputs().len()
    {
        return Ok(None);
    }
    if faithful {
        let a: BTreeSet<&NodeId> = n1.outputs().iter().collect();
        let b: BTreeSet<&NodeId> = n2.outputs().iter().collect();
        if a != b {
            return Ok(None);
        }
    }
    let l1 = n1.levels()?;
    let l2 = n2.levels()?;
    let degree = |n: &Network, id: &NodeId| n.parents(id).len() + n.children(id).len();
    let mut order: Vec<&NodeId> = n1.hidden_and_output_nodes().collect();
    order.sort_by_key(|id| (l1[*id], std::cmp::Reverse(degree(n1, id)), (*id).clone()));

    let mut map: BTreeMap<NodeId, NodeId> = n1.inputs().iter().map(|id| (id.clone(), id.clone())).collect();
    let mut used: BTreeSet<NodeId> = n2.inputs().iter().cloned().collect();
    let candidates: Vec<&NodeId> = n2.hidden_and_output_nodes().collect();

    struct Ctx<'a> {
        n1: &'a Network,
        n2: &'a Network,
        l1: &'a BTreeMap<NodeId, usize>,
        l2: &'a BTreeMap<NodeId, usize>,
        order: &'a [&'a NodeId],
        candidates: &'a [&'a NodeId],
        faithful: bool,
    }

    fn compatible(ctx: &Ctx, map: &BTreeMap<NodeId, NodeId>, v: &NodeId, c: &NodeId) -> bool {
        let (n1, n2) = (ctx.n1, ctx.n2);
        if ctx.l1[v] != ctx.l2[c]
            || n1.bias(v).map(canonical_bits) != n2.bias(c).map(canonical_bits)
            || n1.parents(v).len() != n2.parents(c).len()
            || n1.children(v).len() != n2.children(c).len()
            || n1.is_output(v) != n2.is_output(c)
        {
            return false;
        }
        if ctx.faithful && n1.is_output(v) && v != c {
            return false;
        }
        // Parents sit at lower levels and are already mapped.
        let mut want: Vec<(&NodeId, u64)> =
            n1.parents(v).iter().map(|(p, w)| (&map[p], canonical_bits(*w))).collect();
        want.sort();
        let mut have: Vec<(&NodeId, u64)> = n2.parents(c).iter().map(|(p, w)| (p, canonical_bits(*w))).collect();
        have.sort();
        want == have
    }

    fn extend(ctx: &Ctx, depth: usize, map: &mut BTreeMap<NodeId, NodeId>, used: &mut BTreeSet<NodeId>) -> bool {
        let Some(&v) = ctx.order.get(depth) else {
            return true;
        };
        for &c in ctx.candidates {
            if used.contains(c) || !compatible(ctx, map, v, c) {
                continue;
            }
            map.insert(v.clone(), c.clone());
            used.insert(c.clone());
            if extend(ctx, depth + 1, map, used) {
                return true;
            }
            map.remove(v);
            used.remove(c);
        }
        false
    }

    let ctx = Ctx { n1, n2, l1: &l1, l2: &l2, order: &order, candidates: &candidates, faithful };
    if extend(&ctx, 0, &mut map, &mut used) {
        Ok(Some(map))
    } else {
        Ok(None)
    }
}

/// Replays a network witness clause by clause.
pub fn verify_network_witness(n1: &Network, n2: &Network, w: &IsoWitness) -> Result<(), String> {
    let map = &w.map;
    if map.len() != n1.node_count() || n1.node_count() != n2.node_count() {
        return Err("map is not total on the first network".into());
    }
    let image: BTreeSet<&NodeId> = map.values().collect();
    if image.len() != map.len() || image.iter().any(|id| !n2.contains(id)) {
        return Err("map is not a bijection onto the second network".into());
    }
    for id in n1.node_ids() {
        if !map.contains_key(id) {
            return Err(format!("`{id}` is unmapped"));
        }
    }
    for id in n1.inputs() {
        if map[id] != *id {
            return Err(format!("input `{id}` is not fixed"));
        }
    }
    let out_img: BTreeSet<&NodeId> = n1.outputs().iter().map(|o| &map[o]).collect();
    let out2: BTreeSet<&NodeId> = n2.outputs().iter().collect();
    if out_img != out2 {
        return Err("outputs are not mapped onto outputs".into());
    }
    if w.kind == IsoKind::Faithful {
        if let Some(o) = n1.outputs().iter().find(|o| map[*o] != **o) {
            return Err(format!("output `{o}` is not fixed"));
        }
    }
    if n1.edge_count() != n2.edge_count() {
        return Err("edge counts differ".into());
    }
    for ((s, d), wt) in n1.edges() {
        match n2.weight(&map[s], &map[d]) {
            Some(w2) if w2 == *wt => {}
            _ => return Err(format!("edge `{s}` -> `{d}` is not preserved")),
        }
    }
    for id in n1.node_ids() {
        if n1.bias(id) != n2.bias(&map[id]) {
            return Err(format!("bias of `{id}` is not preserved"));
        }
    }
    Ok(())
}

fn layer_label(l: usize, j: usize) -> NodeId {
    NodeId::new(format!("v{}_{}", l, j + 1))
}

fn layered_witness(kind: IsoKind, gammas: Vec<Vec<usize>>, signs: Vec<Vec<i8>>) -> IsoWitness {
    let mut map = BTreeMap::new();
    for (l, g) in gammas.iter().enumerate() {
        for (j, &i) in g.iter().enumerate() {
            map.insert(layer_label(l, i), layer_label(l, j));
        }
    }
    IsoWitness { kind, map, gammas, signs }
}

/// Backtracking search for γ (and ε when `signed`) with
/// W2[l][j][k] = ε_l(j) W1[l][γ_l(j)][γ_{l−1}(k)] ε_{l−1}(k).
fn layered_search(f1: &LayeredForm, f2: &LayeredForm, signed: bool) -> Option<(Vec<Vec<usize>>, Vec<Vec<i8>>)> {
    if f1.layout != f2.layout {
        return None;
    }
    let depth = f1.depth();
    let mut gammas: Vec<Vec<usize>> = f1.layout.iter().map(|&d| vec![usize::MAX; d]).collect();
    let mut signs: Vec<Vec<i8>> = f1.layout.iter().map(|&d| vec![1; d]).collect();
    gammas[0] = (0..f1.layout[0]).collect();
    let mut used: Vec<Vec<bool>> = f1.layout.iter().map(|&d| vec![false; d]).collect();

    #[allow(clippy::too_many_arguments)]
    fn go(
        f1: &LayeredForm,
        f2: &LayeredForm,
        signed: bool,
        depth: usize,
        l: usize,
        j: usize,
        gammas: &mut Vec<Vec<usize>>,
        signs: &mut Vec<Vec<i8>>,
        used: &mut Vec<Vec<bool>>,
    ) -> bool {
        if l > depth {
            return true;
        }
        if j == f1.layout[l] {
            return go(f1, f2, signed, depth, l + 1, 0, gammas, signs, used);
        }
        let last = l == depth;
        let choices: Vec<usize> = if last { vec![j] } else { (0..f1.layout[l]).collect() };
        let sign_opts: &[i8] = if signed && !last { &[1, -1] } else { &[1] };
        let w1 = &f1.weights[l - 1];
        let w2 = &f2.weights[l - 1];
        for i in choices {
            if used[l][i] {
                continue;
            }
            for &s in sign_opts {
                let sf = s as f64;
                if f2.biases[l - 1][j] != sf * f1.biases[l - 1][i] {
                    continue;
                }
                let row_ok = (0..f1.layout[l - 1]).all(|k| {
                    let g = gammas[l - 1][k];
                    w2[j][k] == sf * w1[i][g] * signs[l - 1][k] as f64
                });
                if !row_ok {
                    continue;
                }
                gammas[l][j] = i;
                signs[l][j] = s;
                used[l][i] = true;
                if go(f1, f2, signed, depth, l, j + 1, gammas, signs, used) {
                    return true;
                }
                used[l][i] = false;
            }
        }
        gammas[l][j] = usize::MAX;
        signs[l][j] = 1;
        false
    }

    if go(f1, f2, signed, depth, 1, 0, &mut gammas, &mut signs, &mut used) {
        Some((gammas, signs))
    } else {
        None
    }
}

pub fn layered_isomorphic(f1: &LayeredForm, f2: &LayeredForm) -> Option<IsoWitness> {
    let (gammas, signs) = layered_search(f1, f2, false)?;
    Some(layered_witness(IsoKind::Layered, gammas, signs))
}

/// Sign canonicalization of the hidden layers. Returns the canonical form,
/// the applied flips, and whether some node had no canonical orientation.
pub fn canonicalize_signs(f: &LayeredForm) -> (LayeredForm, Vec<Vec<i8>>, bool) {
    let mut c = f.clone();
    let mut flips: Vec<Vec<i8>> = f.layout.iter().map(|&d| vec![1; d]).collect();
    let mut ambiguous = false;
    for l in 1..f.depth() {
        for j in 0..f.layout[l] {
            let bias = c.biases[l - 1][j];
            let flip = if bias < 0.0 {
                true
            } else if bias > 0.0 {
                false
            } else {
                let mut row = c.weights[l - 1][j].clone();
                let mut neg: Vec<f64> = row.iter().map(|x| -x).collect();
                row.sort_by(f64::total_cmp);
                neg.sort_by(f64::total_cmp);
                match lex_cmp(&neg, &row) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => {
                        ambiguous = true;
                        false
                    }
                }
            };
            if flip {
                flips[l][j] = -1;
                c.biases[l - 1][j] = -bias;
                for x in c.weights[l - 1][j].iter_mut() {
                    *x = -*x;
                }
                for row in c.weights[l].iter_mut() {
                    row[j] = -row[j];
                }
            }
        }
    }
    (c, flips, ambiguous)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

pub fn sign_change_isomorphic(f1: &LayeredForm, f2: &LayeredForm) -> Option<IsoWitness> {
    if f1.layout != f2.layout {
        return None;
    }
    let (c1, e1, a1) = canonicalize_signs(f1);
    let (c2, e2, a2) = canonicalize_signs(f2);
    let (gammas, signs) = if a1 || a2 {
        layered_search(f1, f2, true)?
    } else {
        let (gammas, _) = layered_search(&c1, &c2, false)?;
        let signs = gammas
            .iter()
            .enumerate()
            .map(|(l, g)| g.iter().enumerate().map(|(j, &i)| e2[l][j] * e1[l][i]).collect())
            .collect();
        (gammas, signs)
    };
    Some(layered_witness(IsoKind::SignChange, gammas, signs))
}

/// Replays a layered or sign-change witness.
pub fn verify_layered_witness(f1: &LayeredForm, f2: &LayeredForm, w: &IsoWitness) -> Result<(), String> {
    if f1.layout != f2.layout {
        return Err("layouts differ".into());
    }
    let depth = f1.depth();
    if w.gammas.len() != depth + 1 || w.signs.len() != depth + 1 {
        return Err("witness has the wrong number of layers".into());
    }
    for (l, &d) in f1.layout.iter().enumerate() {
        let g = &w.gammas[l];
        let mut seen = vec![false; d];
        if g.len() != d || w.signs[l].len() != d {
            return Err(format!("layer {l} has the wrong width"));
        }
        for &i in g {
            if i >= d || std::mem::replace(&mut seen[i], true) {
                return Err(format!("γ_{l} is not a permutation"));
            }
        }
        let fixed = l == 0 || l == depth;
        if fixed && (g.iter().enumerate().any(|(j, &i)| i != j) || w.signs[l].iter().any(|&s| s != 1)) {
            return Err(format!("layer {l} must be fixed"));
        }
        if w.signs[l].iter().any(|&s| s != 1 && s != -1) {
            return Err(format!("layer {l} has an invalid sign"));
        }
        if w.kind == IsoKind::Layered && w.signs[l].iter().any(|&s| s != 1) {
            return Err("layered witness carries sign flips".into());
        }
    }
    for l in 1..=depth {
        for j in 0..f1.layout[l] {
            let i = w.gammas[l][j];
            let s = w.signs[l][j] as f64;
            if f2.biases[l - 1][j] != s * f1.biases[l - 1][i] {
                return Err(format!("bias of node {j} in layer {l}"));
            }
            for k in 0..f1.layout[l - 1] {
                let expect = s * f1.weights[l - 1][i][w.gammas[l - 1][k]] * w.signs[l - 1][k] as f64;
                if f2.weights[l - 1][j][k] != expect {
                    return Err(format!("weight ({j}, {k}) in layer {l}"));
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum GenericityViolation {
    ZeroBias { layer: usize, node: usize },
    EqualBiasMagnitude { layer: usize, nodes: (usize, usize) },
    ZeroWeight { layer: usize, row: usize, column: usize },
    RationalRatio { layer: usize, column: usize, rows: (usize, usize), p: i128, q: i128 },
}

/// Clauses (i)–(iii) of the genericity conditions for tanh identifiability.
/// Layers are 1-based; rows and columns 0-based.
pub fn fefferman_genericity(f: &LayeredForm) -> Vec<GenericityViolation> {
    let mut out = Vec::new();
    for l in 1..=f.depth() {
        let b = &f.biases[l - 1];
        for (j, &x) in b.iter().enumerate() {
            if x == 0.0 {
                out.push(GenericityViolation::ZeroBias { layer: l, node: j });
            }
        }
        for j in 0..b.len() {
            for j2 in j + 1..b.len() {
                if b[j].abs() == b[j2].abs() {
                    out.push(GenericityViolation::EqualBiasMagnitude { layer: l, nodes: (j, j2) });
                }
            }
        }
        let w = &f.weights[l - 1];
        for (j, row) in w.iter().enumerate() {
            for (k, &x) in row.iter().enumerate() {
                if x == 0.0 {
                    out.push(GenericityViolation::ZeroWeight { layer: l, row: j, column: k });
                }
            }
        }
        let qmax = 100 * (f.layout[l] as i128).pow(2);
        for k in 0..f.layout[l - 1] {
            for j in 0..w.len() {
                for j2 in 0..w.len() {
                    if j == j2 || w[j][k] == 0.0 || w[j2][k] == 0.0 {
                        continue;
                    }
                    if let Some((p, q)) = small_rational_ratio(w[j][k], w[j2][k], qmax) {
                        out.push(GenericityViolation::RationalRatio { layer: l, column: k, rows: (j, j2), p, q });
                    }
                }
            }
        }
    }
    out
}

/// (p, q) with a / b = p / q and 1 ≤ q ≤ qmax: exactly when the binary
/// values already give such a ratio, otherwise through continued-fraction
/// convergents of the floating ratio within 1e−12.
pub fn small_rational_ratio(a: f64, b: f64, qmax: i128) -> Option<(i128, i128)> {
    let exact = BigRational::from_float(a)? / BigRational::from_float(b)?;
    if exact.denom() <= &BigInt::from(qmax) {
        if let (Some(p), Some(q)) = (exact.numer().to_i128(), exact.denom().to_i128()) {
            return Some((p, q));
        }
    }
    let r = a / b;
    if !r.is_finite() || r.abs() > 1e15 {
        return None;
    }
    // Convergents h/k of r.
    let (mut h0, mut h1): (i128, i128) = (1, r.floor() as i128);
    let (mut k0, mut k1): (i128, i128) = (0, 1);
    let mut rem = r - r.floor();
    loop {
        if (r - h1 as f64 / k1 as f64).abs() <= 1e-12 * r.abs().max(1.0) {
            return Some((h1, k1));
        }
        if rem.abs() < 1e-300 {
            return None;
        }
        let inv = 1.0 / rem;
        let a_n = inv.floor();
        if a_n > 1e15 {
            return None;
        }
        rem = inv - a_n;
        let a_n = a_n as i128;
        let h2 = a_n.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a_n.checked_mul(k1)?.checked_add(k0)?;
        if k2 > qmax {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> NodeId {
        NodeId::from(s)
    }

    /// Clones-free 6-node fixture: two inputs, three hidden, one output.
    fn six() -> Network {
        Network::builder()
            .input("x1")
            .input("x2")
            .node("a", 0.1)
            .node("b", 0.2)
            .node("c", 0.1)
            .node("y", 0.0)
            .edge("x1", "a", 1.0)
            .edge("x2", "b", 1.0)
            .edge("x1", "c", 1.0)
            .edge("x2", "c", 1.0)
            .edge("a", "y", 1.0)
            .edge("b", "y", -1.0)
            .edge("c", "y", 0.5)
            .output("y")
            .build()
            .unwrap()
    }

    fn renamed(net: &Network, rename: &[(&str, &str)]) -> Network {
        let r = |n: &NodeId| {
            rename.iter().find(|(a, _)| *a == n.as_str()).map(|(_, b)| id(b)).unwrap_or_else(|| n.clone())
        };
        let nodes = net.nodes().iter().map(|(k, v)| (r(k), *v)).collect();
        let edges = net.edges().iter().map(|((s, d), w)| ((r(s), r(d)), *w)).collect();
        Network::new(nodes, net.inputs().iter().map(r).collect(), net.outputs().iter().map(r).collect(), edges).unwrap()
    }

    #[test]
    fn clones_share_a_signature() {
        let net = Network::builder()
            .input("u")
            .node("c1", 0.0)
            .node("c2", 0.0)
            .node("o", 0.0)
            .edge("u", "c1", 1.0)
            .edge("u", "c2", 1.0)
            .edge("c1", "o", 1.0)
            .edge("c2", "o", 2.0)
            .output("o")
            .build()
            .unwrap();
        let s = signatures(&net).unwrap();
        assert_eq!(s[&id("c1")], s[&id("c2")]);
    }

    #[test]
    fn clones_free_signatures_are_distinct() {
        let s = signatures(&six()).unwrap();
        let values: Vec<Signature> = s.values().copied().collect();
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                assert_ne!(values[i], values[j]);
            }
        }
        assert_eq!(values.len(), 6);
    }

    #[test]
    fn relabeling_preserves_signature_multiset() {
        let net = six();
        let other = renamed(&net, &[("a", "p"), ("b", "q"), ("c", "r")]);
        let mut table = SignatureTable::new();
        let mut s1: Vec<Signature> = table.signatures(&net).unwrap().into_values().collect();
        let mut s2: Vec<Signature> = table.signatures(&other).unwrap().into_values().collect();
        s1.sort();
        s2.sort();
        assert_eq!(s1, s2);
    }

    #[test]
    fn extensional_iso_of_renamed_copy() {
        let net = six();
        let other = renamed(&net, &[("a", "c"), ("c", "a"), ("b", "zz")]);
        let w = extensionally_isomorphic(&net, &other).unwrap().unwrap();
        verify_network_witness(&net, &other, &w).unwrap();
        assert_eq!(w.map[&id("a")], id("c"));
        let same = faithfully_isomorphic(&net, &net).unwrap().unwrap();
        assert!(same.map.iter().all(|(k, v)| k == v));
    }

    #[test]
    fn bias_change_breaks_iso() {
        let net = six();
        let mut nodes = net.nodes().clone();
        nodes.insert(id("b"), Some(0.25));
        let other = Network::new(nodes, net.inputs().to_vec(), net.outputs().to_vec(), net.edges().clone()).unwrap();
        assert!(extensionally_isomorphic(&net, &other).unwrap().is_none());
        assert!(match_by_search(&net, &other, false).unwrap().is_none());
    }

    #[test]
    fn swapped_output_labels_are_extensional_but_not_faithful() {
        let net = Network::builder()
            .input("x")
            .node("o1", 0.1)
            .node("o2", 0.2)
            .edge("x", "o1", 1.0)
            .edge("x", "o2", 2.0)
            .output("o1")
            .output("o2")
            .build()
            .unwrap();
        let swapped = renamed(&net, &[("o1", "o2"), ("o2", "o1")]);
        let w = extensionally_isomorphic(&net, &swapped).unwrap().unwrap();
        verify_network_witness(&net, &swapped, &w).unwrap();
        assert!(faithfully_isomorphic(&net, &swapped).unwrap().is_none());
        assert!(match_by_search(&net, &swapped, true).unwrap().is_none());
    }

    #[test]
    fn input_sets_must_agree() {
        let a = Network::builder().input("x").node("y", 0.0).edge("x", "y", 1.0).output("y").build().unwrap();
        let b = Network::builder().input("z").node("y", 0.0).edge("z", "y", 1.0).output("y").build().unwrap();
        assert_eq!(extensionally_isomorphic(&a, &b), Err(IsoError::InputSetsDiffer));
    }

    fn form_131() -> LayeredForm {
        LayeredForm::new(
            vec![vec![vec![1.0], vec![-2.0], vec![0.5]], vec![vec![0.3, 0.7, -1.1]]],
            vec![vec![0.1, -0.2, 0.3], vec![0.05]],
        )
        .unwrap()
    }

    fn permute_hidden(f: &LayeredForm, p: &[usize]) -> LayeredForm {
        // Row j of the result is row p[j] of f.
        let w1 = p.iter().map(|&i| f.weights[0][i].clone()).collect();
        let b1 = p.iter().map(|&i| f.biases[0][i]).collect();
        let w2 = f.weights[1].iter().map(|row| p.iter().map(|&i| row[i]).collect()).collect();
        LayeredForm::new(vec![w1, w2], vec![b1, f.biases[1].clone()]).unwrap()
    }

    #[test]
    fn layered_permutation_witness() {
        let f = form_131();
        let g = permute_hidden(&f, &[2, 0, 1]);
        let w = layered_isomorphic(&f, &g).unwrap();
        assert_eq!(w.gammas[1], vec![2, 0, 1]);
        verify_layered_witness(&f, &g, &w).unwrap();
        let other = LayeredForm::new(vec![vec![vec![1.0], vec![1.0]], vec![vec![1.0, 1.0]]], vec![vec![0.1, 0.2], vec![0.0]]).unwrap();
        assert!(layered_isomorphic(&f, &other).is_none());
    }

    fn flip_node(f: &LayeredForm, l: usize, j: usize, outgoing: bool) -> LayeredForm {
        let mut g = f.clone();
        g.biases[l - 1][j] = -g.biases[l - 1][j];
        g.weights[l - 1][j].iter_mut().for_each(|x| *x = -*x);
        if outgoing {
            g.weights[l].iter_mut().for_each(|row| row[j] = -row[j]);
        }
        g
    }

    #[test]
    fn sign_flip_witness() {
        let f = form_131();
        let g = flip_node(&f, 1, 1, true);
        let w = sign_change_isomorphic(&f, &g).unwrap();
        assert_eq!(w.signs[1], vec![1, -1, 1]);
        verify_layered_witness(&f, &g, &w).unwrap();
        assert!(sign_change_isomorphic(&f, &flip_node(&f, 1, 1, false)).is_none());
    }

    #[test]
    fn sign_flip_with_symmetric_zero_bias_row() {
        // Node 0 has bias 0 and incoming weights {1, −1}: no canonical sign.
        let f = LayeredForm::new(
            vec![vec![vec![1.0, -1.0], vec![2.0, 0.5]], vec![vec![0.4, 0.9]]],
            vec![vec![0.0, 0.3], vec![0.1]],
        )
        .unwrap();
        assert!(canonicalize_signs(&f).2);
        let g = flip_node(&f, 1, 0, true);
        let w = sign_change_isomorphic(&f, &g).unwrap();
        verify_layered_witness(&f, &g, &w).unwrap();
    }

    #[test]
    fn genericity_clauses() {
        let f = LayeredForm::new(vec![vec![vec![1.0, 0.0], vec![2.0, 3.0]]], vec![vec![0.0, 0.5]]).unwrap();
        let v = fefferman_genericity(&f);
        assert!(v.contains(&GenericityViolation::ZeroBias { layer: 1, node: 0 }));
        assert!(v.contains(&GenericityViolation::ZeroWeight { layer: 1, row: 0, column: 1 }));
        assert!(v.contains(&GenericityViolation::RationalRatio { layer: 1, column: 0, rows: (0, 1), p: 1, q: 2 }));
    }

    #[test]
    fn ratio_detection() {
        assert_eq!(small_rational_ratio(0.1, 0.3, 100), Some((1, 3)));
        assert_eq!(small_rational_ratio(1.0, 2f64.sqrt(), 400), None);
        assert_eq!(small_rational_ratio(3.0, 7.0, 6), None);
        assert_eq!(small_rational_ratio(-3.0, 7.0, 7), Some((-3, 7)));
    }
}
