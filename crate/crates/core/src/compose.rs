//! Amalgams, single-input gluing and input anchoring.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::Nonlinearity;
use crate::net::{NetError, Network, NodeId};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ComposeError {
    #[error("argument {index} is degenerate")]
    Degenerate { index: usize },
    #[error("argument {index} has clone pairs")]
    Cloned { index: usize },
    #[error("argument {index} is not layered")]
    NotLayered { index: usize },
    #[error("arguments have different input label sets")]
    InputMismatch,
    #[error("nothing to amalgamate")]
    Empty,
    #[error("glue weights must be {expected} distinct nonzero reals")]
    BadGlueWeights { expected: usize },
    #[error("anchoring needs at least two inputs")]
    SingleInput,
    #[error("`{0}` is not an input")]
    NotAnInput(NodeId),
    #[error("no candidate anchor gives a clones-free network")]
    NotFound,
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmalgamResult {
    pub amalgam: Network,
    /// One map per argument, from its nodes into the amalgam.
    pub embeddings: Vec<BTreeMap<NodeId, NodeId>>,
}

fn check_argument(net: &Network, index: usize) -> Result<(), ComposeError> {
    if !net.is_non_degenerate() {
        return Err(ComposeError::Degenerate { index });
    }
    if !net.is_clones_free() {
        return Err(ComposeError::Cloned { index });
    }
    if !net.is_layered() {
        return Err(ComposeError::NotLayered { index });
    }
    Ok(())
}

fn input_set(net: &Network) -> BTreeSet<&NodeId> {
    net.inputs().iter().collect()
}

/// Side-by-side union on shared inputs followed by bottom-up clone merging.
///
/// Nodes of `n1` keep their ids; non-input nodes of `n2` keep theirs unless
/// taken, in which case a `#2`, `#3`, … suffix is appended.
pub fn amalgamate(n1: &Network, n2: &Network) -> Result<AmalgamResult, ComposeError> {
    check_argument(n1, 0)?;
    check_argument(n2, 1)?;
    if input_set(n1) != input_set(n2) {
        return Err(ComposeError::InputMismatch);
    }
    let (union, e1, e2) = side_by_side(n1, n2);
    let (amalgam, renames) = merge_all_clones(union)?;
    let follow = |m: BTreeMap<NodeId, NodeId>| -> BTreeMap<NodeId, NodeId> {
        m.into_iter().map(|(k, v)| (k, resolve(&renames, v))).collect()
    };
    Ok(AmalgamResult { amalgam, embeddings: vec![follow(e1), follow(e2)] })
}

type Embedding = BTreeMap<NodeId, NodeId>;

fn side_by_side(n1: &Network, n2: &Network) -> (Network, Embedding, Embedding) {
    let mut nodes = n1.nodes().clone();
    let mut edges = n1.edges().clone();
    let mut outputs = n1.outputs().to_vec();
    let e1: Embedding = n1.node_ids().map(|id| (id.clone(), id.clone())).collect();
    let mut e2: Embedding = n2.inputs().iter().map(|id| (id.clone(), id.clone())).collect();
    for id in n2.hidden_and_output_nodes() {
        let mut fresh = id.clone();
        let mut k = 2;
        while nodes.contains_key(&fresh) || n2.contains(&fresh) && fresh != *id {
            fresh = NodeId::new(format!("{id}#{k}"));
            k += 1;
        }
        nodes.insert(fresh.clone(), n2.bias(id));
        e2.insert(id.clone(), fresh);
    }
    for ((s, d), w) in n2.edges() {
        edges.insert((e2[s].clone(), e2[d].clone()), *w);
    }
    for o in n2.outputs() {
        if !outputs.contains(&e2[o]) {
            outputs.push(e2[o].clone());
        }
    }
    (Network::from_parts(nodes, n1.inputs().to_vec(), outputs, edges), e1, e2)
}

fn resolve(renames: &BTreeMap<NodeId, NodeId>, mut id: NodeId) -> NodeId {
    while let Some(next) = renames.get(&id) {
        id = next.clone();
    }
    id
}

/// Merges clone pairs lowest level first until none remain. Returns the
/// merged network and the drop → keep renames.
fn merge_all_clones(mut net: Network) -> Result<(Network, BTreeMap<NodeId, NodeId>), ComposeError> {
    let mut renames = BTreeMap::new();
    loop {
        let pairs = net.find_clone_pairs();
        if pairs.is_empty() {
            return Ok((net, renames));
        }
        let levels = net.levels()?;
        let (keep, drop) = pairs
            .into_iter()
            .min_by(|a, b| (levels[&a.0], &a.0, &a.1).cmp(&(levels[&b.0], &b.0, &b.1)))
            .expect("nonempty");
        net = net.merge_clone_pair(&keep, &drop)?;
        renames.insert(drop, keep);
    }
}

/// Left fold of [`amalgamate`] with composed embeddings.
pub fn amalgamate_many(nets: &[Network]) -> Result<AmalgamResult, ComposeError> {
    let (first, rest) = nets.split_first().ok_or(ComposeError::Empty)?;
    check_argument(first, 0)?;
    let mut acc = AmalgamResult {
        amalgam: first.clone(),
        embeddings: vec![first.node_ids().map(|id| (id.clone(), id.clone())).collect()],
    };
    for (i, net) in rest.iter().enumerate() {
        let step = amalgamate(&acc.amalgam, net).map_err(|e| match e {
            ComposeError::Degenerate { index: 1 } => ComposeError::Degenerate { index: i + 1 },
            ComposeError::Cloned { index: 1 } => ComposeError::Cloned { index: i + 1 },
            ComposeError::NotLayered { index: 1 } => ComposeError::NotLayered { index: i + 1 },
            other => other,
        })?;
        let into = &step.embeddings[0];
        let mut embeddings: Vec<Embedding> = acc
            .embeddings
            .into_iter()
            .map(|m| m.into_iter().map(|(k, v)| (k, into[&v].clone())).collect())
            .collect();
        embeddings.push(step.embeddings[1].clone());
        acc = AmalgamResult { amalgam: step.amalgam, embeddings };
    }
    Ok(acc)
}

/// Name of the input introduced by [`glue_single_input`].
pub const GLUE_INPUT: &str = "v_in";

/// Replaces the shared inputs by one new input `v_in`: every former input
/// becomes a bias-0 node fed by `v_in` with its glue weight. `weights`
/// follow the input-list order of the first network; `None` means 1, 2, …, n.
pub fn glue_single_input(nets: &[Network], weights: Option<&[f64]>) -> Result<Vec<Network>, ComposeError> {
    let first = nets.first().ok_or(ComposeError::Empty)?;
    let inputs = first.inputs().to_vec();
    for net in nets {
        if input_set(net) != input_set(first) {
            return Err(ComposeError::InputMismatch);
        }
    }
    let n = inputs.len();
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => (1..=n).map(|k| k as f64).collect(),
    };
    let distinct: BTreeSet<u64> = w.iter().map(|x| x.to_bits()).collect();
    if w.len() != n || distinct.len() != n || w.iter().any(|x| *x == 0.0 || !x.is_finite()) {
        return Err(ComposeError::BadGlueWeights { expected: n });
    }
    let root = NodeId::from(GLUE_INPUT);
    nets.iter()
        .map(|net| {
            if net.contains(&root) {
                return Err(ComposeError::Net(NetError::IdCollision(root.clone())));
            }
            let mut nodes = net.nodes().clone();
            let mut edges = net.edges().clone();
            nodes.insert(root.clone(), None);
            for (id, &wt) in inputs.iter().zip(&w) {
                nodes.insert(id.clone(), Some(0.0));
                edges.insert((root.clone(), id.clone()), wt);
            }
            Ok(Network::new(nodes, vec![root.clone()], net.outputs().to_vec(), edges)?)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnchorResult {
    pub anchored: Network,
    /// Constant values of outputs that depended on the anchored input only.
    pub dropped_output_values: BTreeMap<NodeId, f64>,
    /// Retained nodes whose bias absorbed removed parents: (old θ, new θ̃).
    pub modified_biases: BTreeMap<NodeId, (f64, f64)>,
}

/// Fixes input `anchored` to `a`. Nodes with no other input among their
/// ancestors become constants a_v = ρ(Σ ω a_u + θ_v) and disappear; their
/// contributions fold into the biases of retained children.
pub fn anchor_input(
    net: &Network,
    anchored: &NodeId,
    a: f64,
    rho: &Nonlinearity,
) -> Result<AnchorResult, ComposeError> {
    if !net.contains(anchored) {
        return Err(NetError::UnknownNode(anchored.clone()).into());
    }
    if !net.is_input(anchored) {
        return Err(ComposeError::NotAnInput(anchored.clone()));
    }
    if net.inputs().len() < 2 {
        return Err(ComposeError::SingleInput);
    }
    if !net.is_non_degenerate() {
        return Err(ComposeError::Degenerate { index: 0 });
    }
    if !net.is_clones_free() {
        return Err(ComposeError::Cloned { index: 0 });
    }

    let order = net.topological_order()?;
    // A node is retained iff some other input reaches it.
    let mut retained: BTreeSet<NodeId> = BTreeSet::new();
    for id in &order {
        let keep = if net.is_input(id) {
            id != anchored
        } else {
            net.parents(id).iter().any(|(p, _)| retained.contains(p))
        };
        if keep {
            retained.insert(id.clone());
        }
    }

    let mut constant: BTreeMap<NodeId, f64> = BTreeMap::new();
    constant.insert(anchored.clone(), a);
    let mut nodes = BTreeMap::new();
    let mut modified = BTreeMap::new();
    for id in &order {
        if net.is_input(id) {
            if id != anchored {
                nodes.insert(id.clone(), None);
            }
            continue;
        }
        let theta = net.bias(id).expect("non-input has a bias");
        let mut folded = theta;
        let mut touched = false;
        for (p, w) in net.parents(id) {
            if let Some(c) = constant.get(p) {
                folded += w * c;
                touched = true;
            }
        }
        if retained.contains(id) {
            if touched {
                modified.insert(id.clone(), (theta, folded));
            }
            nodes.insert(id.clone(), Some(folded));
        } else {
            constant.insert(id.clone(), rho.apply(folded));
        }
    }

    let edges = net
        .edges()
        .iter()
        .filter(|((s, d), _)| retained.contains(s) && retained.contains(d))
        .map(|(k, w)| (k.clone(), *w))
        .collect();
    let inputs = net.inputs().iter().filter(|id| *id != anchored).cloned().collect();
    let outputs = net.outputs().iter().filter(|id| retained.contains(*id)).cloned().collect();
    let dropped = net
        .outputs()
        .iter()
        .filter(|id| !retained.contains(*id))
        .map(|id| (id.clone(), constant[id]))
        .collect();
    Ok(AnchorResult {
        anchored: Network::new(nodes, inputs, outputs, edges)?,
        dropped_output_values: dropped,
        modified_biases: modified,
    })
}

/// 0, ±1, ±½, then 16 seeded uniform draws from [−1, 1].
pub fn default_anchor_candidates(seed: u64) -> Vec<f64> {
    let mut out = vec![0.0, 1.0, -1.0, 0.5, -0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend((0..16).map(|_| rng.gen_range(-1.0..=1.0)));
    out
}

/// First candidate whose anchored network has no clone pairs.
pub fn find_clone_free_anchor(
    net: &Network,
    anchored: &NodeId,
    rho: &Nonlinearity,
    candidates: &[f64],
) -> Result<(f64, AnchorResult), ComposeError> {
    for &a in candidates {
        let r = anchor_input(net, anchored, a, rho)?;
        if r.anchored.is_clones_free() {
            return Ok((a, r));
        }
    }
    Err(ComposeError::NotFound)
}
