//! General feed-forward networks.
//!
//! A [`Network`] is a weighted DAG with an ordered list of input nodes, an
//! ordered list of output nodes, a bias on every non-input node and a nonzero
//! weight on every edge. Layered networks convert to and from the matrix form
//! [`LayeredForm`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque node handle, unique within one network.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(token: impl Into<String>) -> Self {
        NodeId(token.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// A single broken structural invariant, as reported by [`Network::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyNodeId,
    DuplicateInput(NodeId),
    DuplicateOutput(NodeId),
    UnknownInput(NodeId),
    UnknownOutput(NodeId),
    UnknownEdgeEndpoint { src: NodeId, dst: NodeId, missing: NodeId },
    ZeroWeight { src: NodeId, dst: NodeId },
    NonFiniteWeight { src: NodeId, dst: NodeId },
    NonFiniteBias(NodeId),
    Cycle(Vec<NodeId>),
    InputWithParents(NodeId),
    ParentlessNonInput(NodeId),
    OutputIsInput(NodeId),
    InputWithBias(NodeId),
    MissingBias(NodeId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyNodeId => write!(f, "empty node id"),
            Violation::DuplicateInput(v) => write!(f, "input `{v}` listed more than once"),
            Violation::DuplicateOutput(v) => write!(f, "output `{v}` listed more than once"),
            Violation::UnknownInput(v) => write!(f, "input `{v}` is not a node"),
            Violation::UnknownOutput(v) => write!(f, "output `{v}` is not a node"),
            Violation::UnknownEdgeEndpoint { src, dst, missing } => {
                write!(f, "edge `{src}` -> `{dst}` references unknown node `{missing}`")
            }
            Violation::ZeroWeight { src, dst } => write!(f, "edge `{src}` -> `{dst}` has weight 0"),
            Violation::NonFiniteWeight { src, dst } => {
                write!(f, "edge `{src}` -> `{dst}` has a non-finite weight")
            }
            Violation::NonFiniteBias(v) => write!(f, "node `{v}` has a non-finite bias"),
            Violation::Cycle(nodes) => {
                let names: Vec<&str> = nodes.iter().map(NodeId::as_str).collect();
                write!(f, "directed cycle through {{{}}}", names.join(", "))
            }
            Violation::InputWithParents(v) => write!(f, "input `{v}` has incoming edges"),
            Violation::ParentlessNonInput(v) => {
                write!(f, "node `{v}` has no parents but is not listed as an input")
            }
            Violation::OutputIsInput(v) => write!(f, "output `{v}` is an input node"),
            Violation::InputWithBias(v) => write!(f, "input `{v}` carries a bias"),
            Violation::MissingBias(v) => write!(f, "non-input node `{v}` has no bias"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("network contains a directed cycle")]
    Cyclic,
    #[error("`{0}` is an input node")]
    InputNode(NodeId),
    #[error("`{0}` is not an input node")]
    NotAnInput(NodeId),
    #[error("nodes `{0}` and `{1}` are not a clone pair")]
    NotClones(NodeId, NodeId),
    #[error("merging would orphan `{0}`, whose constant value reaches an output")]
    OrphanReachesOutput(NodeId),
    #[error("network is not layered: edge `{src}` -> `{dst}` joins levels {src_level} and {dst_level}")]
    NotLayered { src: NodeId, dst: NodeId, src_level: usize, dst_level: usize },
    #[error("outputs must be exactly the nodes of the final level")]
    OutputsNotFinalLayer,
    #[error("layer {layer} has an identically zero row {row}")]
    ZeroRow { layer: usize, row: usize },
    #[error("layer {layer} has an identically zero column {column}")]
    ZeroColumn { layer: usize, column: usize },
    #[error("layered form is malformed: {0}")]
    Malformed(String),
    #[error("node id `{0}` is already in use")]
    IdCollision(NodeId),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;

/// A general feed-forward network.
///
/// Values are immutable once built; every transformation returns a new
/// network. Parent lists are kept sorted by [`NodeId`], which fixes the
/// summation order used during evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    nodes: BTreeMap<NodeId, Option<f64>>,
    inputs: Vec<NodeId>,
    outputs: Vec<NodeId>,
    edges: BTreeMap<(NodeId, NodeId), f64>,
    parents: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
    children: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

impl Network {
    /// Assembles a network without checking any invariant. Use
    /// [`Network::validate`] to inspect the result, or [`Network::new`] to
    /// reject invalid input up front.
    pub fn from_parts(
        nodes: BTreeMap<NodeId, Option<f64>>,
        inputs: Vec<NodeId>,
        outputs: Vec<NodeId>,
        edges: BTreeMap<(NodeId, NodeId), f64>,
    ) -> Self {
        let mut parents: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        let mut children: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for ((src, dst), &w) in &edges {
            parents.entry(dst.clone()).or_default().push((src.clone(), w));
            children.entry(src.clone()).or_default().push((dst.clone(), w));
        }
        // BTreeMap iteration is ordered by (src, dst), so parent lists come out
        // sorted by src; children lists need an explicit sort.
        for list in children.values_mut() {
            list.sort_by(|a, b| a.0.cmp(&b.0));
        }
        Network { nodes, inputs, outputs, edges, parents, children }
    }

    pub fn new(
        nodes: BTreeMap<NodeId, Option<f64>>,
        inputs: Vec<NodeId>,
        outputs: Vec<NodeId>,
        edges: BTreeMap<(NodeId, NodeId), f64>,
    ) -> Result<Self> {
        let net = Network::from_parts(nodes, inputs, outputs, edges);
        let violations = net.validate();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(NetError::Invalid(violations))
        }
    }

    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::default()
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, Option<f64>> {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn bias(&self, id: &NodeId) -> Option<f64> {
        self.nodes.get(id).copied().flatten()
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn is_input(&self, id: &NodeId) -> bool {
        self.inputs.contains(id)
    }

    pub fn is_output(&self, id: &NodeId) -> bool {
        self.outputs.contains(id)
    }

    pub fn edges(&self) -> &BTreeMap<(NodeId, NodeId), f64> {
        &self.edges
    }

    pub fn weight(&self, src: &NodeId, dst: &NodeId) -> Option<f64> {
        self.edges.get(&(src.clone(), dst.clone())).copied()
    }

    /// Parents of `id` with the incoming weights, sorted by parent id.
    pub fn parents(&self, id: &NodeId) -> &[(NodeId, f64)] {
        self.parents.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Children of `id` with the outgoing weights, sorted by child id.
    pub fn children(&self, id: &NodeId) -> &[(NodeId, f64)] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Non-input nodes in id order.
    pub fn hidden_and_output_nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().filter(|(_, b)| b.is_some()).map(|(id, _)| id)
    }

    /// Every broken invariant, one entry each. An empty list means the
    /// network is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.nodes.keys().any(|id| id.as_str().is_empty()) {
            out.push(Violation::EmptyNodeId);
        }

        let mut seen = BTreeSet::new();
        for v in &self.inputs {
            if !seen.insert(v) {
                out.push(Violation::DuplicateInput(v.clone()));
            }
            if !self.nodes.contains_key(v) {
                out.push(Violation::UnknownInput(v.clone()));
            }
        }
        let input_set: BTreeSet<&NodeId> = self.inputs.iter().collect();

        let mut seen = BTreeSet::new();
        for v in &self.outputs {
            if !seen.insert(v) {
                out.push(Violation::DuplicateOutput(v.clone()));
            }
            if !self.nodes.contains_key(v) {
                out.push(Violation::UnknownOutput(v.clone()));
            }
            if input_set.contains(v) {
                out.push(Violation::OutputIsInput(v.clone()));
            }
        }

        for ((src, dst), &w) in &self.edges {
            for end in [src, dst] {
                if !self.nodes.contains_key(end) {
                    out.push(Violation::UnknownEdgeEndpoint {
                        src: src.clone(),
                        dst: dst.clone(),
                        missing: end.clone(),
                    });
                }
            }
            if w == 0.0 {
                out.push(Violation::ZeroWeight { src: src.clone(), dst: dst.clone() });
            } else if !w.is_finite() {
                out.push(Violation::NonFiniteWeight { src: src.clone(), dst: dst.clone() });
            }
        }

        for (id, bias) in &self.nodes {
            let listed = input_set.contains(id);
            let has_parents = !self.parents(id).is_empty();
            match (listed, has_parents) {
                (true, true) => out.push(Violation::InputWithParents(id.clone())),
                (false, false) => out.push(Violation::ParentlessNonInput(id.clone())),
                _ => {}
            }
            match (listed, bias) {
                (true, Some(_)) => out.push(Violation::InputWithBias(id.clone())),
                (false, None) => out.push(Violation::MissingBias(id.clone())),
                (false, Some(b)) if !b.is_finite() => {
                    out.push(Violation::NonFiniteBias(id.clone()))
                }
                _ => {}
            }
        }

        if let Err(stuck) = self.kahn_order() {
            out.push(Violation::Cycle(stuck));
        }
        out
    }

    /// Kahn's algorithm with an id-ordered ready set. On failure returns the
    /// nodes that could not be ordered (those on or behind a cycle).
    fn kahn_order(&self) -> std::result::Result<Vec<NodeId>, Vec<NodeId>> {
        let mut indegree: BTreeMap<&NodeId, usize> =
            self.nodes.keys().map(|id| (id, 0)).collect();
        for (_, dst) in self.edges.keys() {
            if let Some(d) = indegree.get_mut(dst) {
                *d += 1;
            }
        }
        let mut ready: BTreeSet<&NodeId> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(id, _)| *id).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_first() {
            order.push(id.clone());
            for (child, _) in self.children(id) {
                if let Some(d) = indegree.get_mut(child) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(child);
                    }
                }
            }
        }
        if order.len() == self.nodes.len() {
            Ok(order)
        } else {
            let done: BTreeSet<&NodeId> = order.iter().collect();
            Err(self.nodes.keys().filter(|id| !done.contains(id)).cloned().collect())
        }
    }

    /// Nodes in a topological order (parents before children), ties broken by id.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        self.kahn_order().map_err(|_| NetError::Cyclic)
    }

    /// Level of every node: 0 for parentless nodes, otherwise one more than
    /// the largest parent level.
    pub fn levels(&self) -> Result<BTreeMap<NodeId, usize>> {
        let order = self.topological_order()?;
        let mut levels = BTreeMap::new();
        for id in order {
            let lv = self
                .parents(&id)
                .iter()
                .map(|(p, _)| levels[p] + 1)
                .max()
                .unwrap_or(0);
            levels.insert(id, lv);
        }
        Ok(levels)
    }

    pub fn level(&self, id: &NodeId) -> Result<usize> {
        if !self.contains(id) {
            return Err(NetError::UnknownNode(id.clone()));
        }
        Ok(self.levels()?[id])
    }

    /// Largest node level.
    pub fn depth(&self) -> Result<usize> {
        Ok(self.levels()?.values().copied().max().unwrap_or(0))
    }

    /// Iterated-parent closure of `set`, including `set` itself.
    pub fn ancestor_closure<'a>(
        &'a self,
        set: impl IntoIterator<Item = &'a NodeId>,
    ) -> BTreeSet<NodeId> {
        let mut closure = BTreeSet::new();
        let mut stack: Vec<&NodeId> = set.into_iter().collect();
        while let Some(id) = stack.pop() {
            if closure.insert(id.clone()) {
                stack.extend(self.parents(id).iter().map(|(p, _)| p));
            }
        }
        closure
    }

    /// The ancestor subnetwork of `set`: every node reachable backwards from
    /// `set`, with inherited weights and biases, and outputs exactly `set`
    /// (in the given order, duplicates dropped).
    pub fn ancestor_subnetwork(&self, set: &[NodeId]) -> Result<Network> {
        for id in set {
            if !self.contains(id) {
                return Err(NetError::UnknownNode(id.clone()));
            }
            if self.is_input(id) {
                return Err(NetError::InputNode(id.clone()));
            }
        }
        let keep = self.ancestor_closure(set);
        let mut outputs = Vec::new();
        for id in set {
            if !outputs.contains(id) {
                outputs.push(id.clone());
            }
        }
        Ok(self.restrict(&keep, outputs))
    }

    /// Induced subgraph on `keep` with the given outputs; inputs are the
    /// original inputs that survive, in their original order.
    fn restrict(&self, keep: &BTreeSet<NodeId>, outputs: Vec<NodeId>) -> Network {
        let nodes = self
            .nodes
            .iter()
            .filter(|(id, _)| keep.contains(*id))
            .map(|(id, b)| (id.clone(), *b))
            .collect();
        let inputs = self.inputs.iter().filter(|id| keep.contains(*id)).cloned().collect();
        let edges = self
            .edges
            .iter()
            .filter(|((s, d), _)| keep.contains(s) && keep.contains(d))
            .map(|(k, w)| (k.clone(), *w))
            .collect();
        Network::from_parts(nodes, inputs, outputs, edges)
    }

    /// True iff every node leads up to at least one output.
    pub fn is_non_degenerate(&self) -> bool {
        self.ancestor_closure(&self.outputs).len() == self.nodes.len()
    }

    /// True iff every edge joins consecutive levels.
    pub fn is_layered(&self) -> bool {
        self.first_layering_violation().map(|v| v.is_none()).unwrap_or(false)
    }

    fn first_layering_violation(&self) -> Result<Option<NetError>> {
        let levels = self.levels()?;
        for (src, dst) in self.edges.keys() {
            let (a, b) = (levels[src], levels[dst]);
            if b != a + 1 {
                return Ok(Some(NetError::NotLayered {
                    src: src.clone(),
                    dst: dst.clone(),
                    src_level: a,
                    dst_level: b,
                }));
            }
        }
        Ok(None)
    }

    fn clone_key(&self, id: &NodeId) -> Option<CloneKey> {
        let bias = self.bias(id)?;
        let parents = self.parents(id).iter().map(|(p, w)| (p.clone(), canonical_bits(*w))).collect();
        Some(CloneKey { bias: canonical_bits(bias), parents })
    }

    /// Every unordered pair of distinct non-input nodes with equal parent
    /// sets, equal per-parent weights and equal biases. Pairs are returned
    /// as `(smaller id, larger id)` in lexicographic order.
    pub fn find_clone_pairs(&self) -> Vec<(NodeId, NodeId)> {
        let mut groups: BTreeMap<CloneKey, Vec<NodeId>> = BTreeMap::new();
        for id in self.hidden_and_output_nodes() {
            if let Some(key) = self.clone_key(id) {
                groups.entry(key).or_default().push(id.clone());
            }
        }
        let mut pairs = Vec::new();
        for members in groups.values() {
            for (i, a) in members.iter().enumerate() {
                for b in &members[i + 1..] {
                    pairs.push((a.clone(), b.clone()));
                }
            }
        }
        pairs.sort();
        pairs
    }

    pub fn is_clones_free(&self) -> bool {
        self.find_clone_pairs().is_empty()
    }

    /// Removes `drop` in favour of its clone `keep`.
    ///
    /// Outgoing edges of `drop` are grafted onto `keep`, adding weights where
    /// `keep` already has an edge to the same child; edges whose weights sum
    /// to exactly zero disappear. Nodes left without parents are pruned
    /// recursively, as are nodes that lose every path to an output. If `drop`
    /// is an output it is replaced by `keep` in the output list (or simply
    /// removed when `keep` is already an output).
    pub fn merge_clone_pair(&self, keep: &NodeId, drop: &NodeId) -> Result<Network> {
        for id in [keep, drop] {
            if !self.contains(id) {
                return Err(NetError::UnknownNode(id.clone()));
            }
        }
        let (Some(kk), Some(dk)) = (self.clone_key(keep), self.clone_key(drop)) else {
            return Err(NetError::NotClones(keep.clone(), drop.clone()));
        };
        if keep == drop || kk != dk {
            return Err(NetError::NotClones(keep.clone(), drop.clone()));
        }

        let reaching_before = self.ancestor_closure(&self.outputs);

        let mut outputs = Vec::with_capacity(self.outputs.len());
        for id in &self.outputs {
            let id = if id == drop { keep } else { id };
            if !outputs.contains(id) {
                outputs.push(id.clone());
            }
        }

        let mut nodes = self.nodes.clone();
        nodes.remove(drop);
        let mut edges: BTreeMap<(NodeId, NodeId), f64> = self
            .edges
            .iter()
            .filter(|((s, d), _)| s != drop && d != drop)
            .map(|(k, w)| (k.clone(), *w))
            .collect();
        for (child, w) in self.children(drop) {
            let key = (keep.clone(), child.clone());
            let sum = edges.get(&key).copied().unwrap_or(0.0) + w;
            if sum == 0.0 {
                edges.remove(&key);
            } else {
                edges.insert(key, sum);
            }
        }
        let mut merged = Network::from_parts(nodes, self.inputs.clone(), outputs, edges);

        // Orphans compute a constant; they may only go if nothing downstream
        // of them is observed.
        loop {
            let orphans: Vec<NodeId> = merged
                .hidden_and_output_nodes()
                .filter(|id| merged.parents(id).is_empty())
                .cloned()
                .collect();
            if orphans.is_empty() {
                break;
            }
            for id in &orphans {
                if reaching_before.contains(id) {
                    return Err(NetError::OrphanReachesOutput(id.clone()));
                }
            }
            let keep_set: BTreeSet<NodeId> =
                merged.nodes.keys().filter(|id| !orphans.contains(id)).cloned().collect();
            let outputs = merged.outputs.clone();
            merged = merged.restrict(&keep_set, outputs);
        }

        let reaching_after = merged.ancestor_closure(&merged.outputs);
        let lost: Vec<&NodeId> = reaching_before
            .iter()
            .filter(|id| {
                merged.contains(id) && !merged.is_input(id) && !reaching_after.contains(*id)
            })
            .collect();
        if !lost.is_empty() {
            let keep_set: BTreeSet<NodeId> = merged
                .nodes
                .keys()
                .filter(|id| !lost.contains(id))
                .cloned()
                .collect();
            let outputs = merged.outputs.clone();
            merged = merged.restrict(&keep_set, outputs);
        }
        Ok(merged)
    }

    /// Matrix form of a layered network.
    ///
    /// Layer 0 follows the input order, the final layer follows the output
    /// order (which must be exactly the nodes of maximal level), and hidden
    /// layers are sorted by node id. Returns the form together with the node
    /// labels of each layer.
    pub fn to_layered(&self) -> Result<(LayeredForm, Vec<Vec<NodeId>>)> {
        if let Some(err) = self.first_layering_violation()? {
            return Err(err);
        }
        let levels = self.levels()?;
        let depth = levels.values().copied().max().unwrap_or(0);
        let mut labels: Vec<Vec<NodeId>> = vec![Vec::new(); depth + 1];
        labels[0] = self.inputs.clone();
        for (id, &lv) in &levels {
            if lv > 0 && lv < depth {
                labels[lv].push(id.clone());
            }
        }
        let last: BTreeSet<&NodeId> =
            levels.iter().filter(|(_, &lv)| lv == depth).map(|(id, _)| id).collect();
        let out_set: BTreeSet<&NodeId> = self.outputs.iter().collect();
        if depth == 0 || last != out_set {
            return Err(NetError::OutputsNotFinalLayer);
        }
        labels[depth] = self.outputs.clone();

        let mut weights = Vec::with_capacity(depth);
        let mut biases = Vec::with_capacity(depth);
        for l in 1..=depth {
            let col_index: BTreeMap<&NodeId, usize> =
                labels[l - 1].iter().enumerate().map(|(k, id)| (id, k)).collect();
            let mut w = vec![vec![0.0; labels[l - 1].len()]; labels[l].len()];
            let mut b = Vec::with_capacity(labels[l].len());
            for (j, id) in labels[l].iter().enumerate() {
                for (p, wt) in self.parents(id) {
                    w[j][col_index[p]] = *wt;
                }
                b.push(self.bias(id).unwrap_or(0.0));
            }
            weights.push(w);
            biases.push(b);
        }
        let form = LayeredForm::new(weights, biases)?;
        Ok((form, labels))
    }

    /// Graph form of a layered network. Inputs take the given labels; node
    /// `j` (1-based) of layer `l` is named `v{l}_{j}`.
    pub fn from_layered(form: &LayeredForm, input_labels: &[NodeId]) -> Result<Network> {
        form.check()?;
        if input_labels.len() != form.layout[0] {
            return Err(NetError::Malformed(format!(
                "{} input labels for an input layer of width {}",
                input_labels.len(),
                form.layout[0]
            )));
        }
        let mut nodes = BTreeMap::new();
        for id in input_labels {
            if nodes.insert(id.clone(), None).is_some() {
                return Err(NetError::IdCollision(id.clone()));
            }
        }
        let mut prev: Vec<NodeId> = input_labels.to_vec();
        let mut edges = BTreeMap::new();
        for (l, (w, b)) in form.weights.iter().zip(&form.biases).enumerate() {
            let layer: Vec<NodeId> =
                (1..=w.len()).map(|j| NodeId::new(format!("v{}_{}", l + 1, j))).collect();
            for (j, id) in layer.iter().enumerate() {
                if nodes.insert(id.clone(), Some(b[j])).is_some() {
                    return Err(NetError::IdCollision(id.clone()));
                }
                for (k, &wt) in w[j].iter().enumerate() {
                    if wt != 0.0 {
                        edges.insert((prev[k].clone(), id.clone()), wt);
                    }
                }
            }
            prev = layer;
        }
        Network::new(nodes, input_labels.to_vec(), prev, edges)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct CloneKey {
    bias: u64,
    parents: Vec<(NodeId, u64)>,
}

/// Bit pattern with `-0.0` folded onto `0.0`, so that bit equality agrees
/// with numeric equality on finite values.
pub(crate) fn canonical_bits(x: f64) -> u64 {
    if x == 0.0 {
        0.0f64.to_bits()
    } else {
        x.to_bits()
    }
}

/// Weight matrices and bias vectors of a layered network.
///
/// `weights[l]` is the `layout[l + 1] x layout[l]` matrix of layer `l + 1`,
/// stored row-major; `biases[l]` has length `layout[l + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredForm {
    pub layout: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl LayeredForm {
    pub fn new(weights: Vec<Vec<Vec<f64>>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let first = weights
            .first()
            .ok_or_else(|| NetError::Malformed("no layers".into()))?;
        let d0 = first.first().map(Vec::len).unwrap_or(0);
        let mut layout = vec![d0];
        layout.extend(weights.iter().map(Vec::len));
        let form = LayeredForm { layout, weights, biases };
        form.check()?;
        Ok(form)
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Dimension consistency plus the no-zero-row / no-zero-column rule.
    pub fn check(&self) -> Result<()> {
        let depth = self.weights.len();
        if depth == 0 || self.layout.len() != depth + 1 || self.biases.len() != depth {
            return Err(NetError::Malformed("layout, weights and biases disagree in depth".into()));
        }
        if self.layout.iter().any(|&d| d == 0) {
            return Err(NetError::Malformed("layer widths must be positive".into()));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (rows, cols) = (self.layout[l + 1], self.layout[l]);
            if w.len() != rows || b.len() != rows || w.iter().any(|r| r.len() != cols) {
                return Err(NetError::Malformed(format!("layer {} has inconsistent dimensions", l + 1)));
            }
            for (j, row) in w.iter().enumerate() {
                if row.iter().all(|&x| x == 0.0) {
                    return Err(NetError::ZeroRow { layer: l + 1, row: j });
                }
            }
            for k in 0..cols {
                if w.iter().all(|row| row[k] == 0.0) {
                    return Err(NetError::ZeroColumn { layer: l + 1, column: k });
                }
            }
        }
        Ok(())
    }
}

/// Incremental construction helper, mostly for tests and fixtures.
#[derive(Clone, Debug, Default)]
pub struct NetworkBuilder {
    nodes: BTreeMap<NodeId, Option<f64>>,
    inputs: Vec<NodeId>,
    outputs: Vec<NodeId>,
    edges: BTreeMap<(NodeId, NodeId), f64>,
}

impl NetworkBuilder {
    pub fn input(mut self, id: impl Into<NodeId>) -> Self {
        let id = id.into();
        self.nodes.insert(id.clone(), None);
        self.inputs.push(id);
        self
    }

    pub fn node(mut self, id: impl Into<NodeId>, bias: f64) -> Self {
        self.nodes.insert(id.into(), Some(bias));
        self
    }

    pub fn edge(mut self, src: impl Into<NodeId>, dst: impl Into<NodeId>, weight: f64) -> Self {
        self.edges.insert((src.into(), dst.into()), weight);
        self
    }

    pub fn output(mut self, id: impl Into<NodeId>) -> Self {
        self.outputs.push(id.into());
        self
    }

    pub fn build(self) -> Result<Network> {
        Network::new(self.nodes, self.inputs, self.outputs, self.edges)
    }

    pub fn build_unchecked(self) -> Network {
        Network::from_parts(self.nodes, self.inputs, self.outputs, self.edges)
    }
}
