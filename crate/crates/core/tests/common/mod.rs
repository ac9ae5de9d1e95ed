#![allow(dead_code)]

use std::collections::BTreeMap;

use nnident::experiment::{labelled_network, random_layered_form, WeightDistribution};
use nnident::net::{LayeredForm, Network, NodeId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn id(s: &str) -> NodeId {
    NodeId::from(s)
}

/// Clones-free, non-degenerate DAG with at most `max_nodes` nodes. Weights
/// and biases come from small palettes so that structurally similar nodes
/// are common.
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize) -> Network {
    const W: [f64; 5] = [1.0, -1.0, 2.0, 0.5, -2.0];
    const B: [f64; 3] = [0.0, 0.5, -0.5];
    loop {
        let n_in = rng.gen_range(1..=2);
        let n_rest = rng.gen_range(1..=max_nodes - n_in);
        let names: Vec<NodeId> = (0..n_in)
            .map(|i| NodeId::new(format!("x{}", i + 1)))
            .chain((0..n_rest).map(|i| NodeId::new(format!("n{}", i + 1))))
            .collect();
        let mut b = Network::builder();
        for x in &names[..n_in] {
            b = b.input(x.clone());
        }
        let mut has_child = vec![false; names.len()];
        for j in n_in..names.len() {
            b = b.node(names[j].clone(), *B.choose(rng).unwrap());
            let k = rng.gen_range(1..=j.min(3));
            let mut parents: Vec<usize> = (0..j).collect();
            parents.shuffle(rng);
            for &p in &parents[..k] {
                b = b.edge(names[p].clone(), names[j].clone(), *W.choose(rng).unwrap());
                has_child[p] = true;
            }
        }
        if has_child[..n_in].iter().any(|c| !c) {
            continue;
        }
        for j in n_in..names.len() {
            if !has_child[j] || rng.gen_bool(0.15) {
                b = b.output(names[j].clone());
            }
        }
        let net = b.build().expect("generator builds valid networks");
        if net.is_non_degenerate() && net.is_clones_free() {
            return net;
        }
    }
}

/// Renames every non-input node through a random permutation of the ids.
pub fn shuffle_ids(net: &Network, rng: &mut ChaCha8Rng) -> Network {
    let ids: Vec<NodeId> = net.node_ids().filter(|v| !net.is_input(v)).cloned().collect();
    let mut perm = ids.clone();
    perm.shuffle(rng);
    let map: BTreeMap<NodeId, NodeId> = ids.into_iter().zip(perm).collect();
    nnident::experiment::relabel(net, &map).unwrap()
}

/// Changes the weight of one random edge; `None` if the result is invalid.
pub fn perturb(net: &Network, rng: &mut ChaCha8Rng) -> Option<Network> {
    let edges: Vec<_> = net.edges().keys().cloned().collect();
    let key = edges.choose(rng)?.clone();
    let mut e = net.edges().clone();
    *e.get_mut(&key).unwrap() *= 3.0;
    Network::new(net.nodes().clone(), net.inputs().to_vec(), net.outputs().to_vec(), e).ok()
}

/// Two inputs, two outputs; `y2` depends on `x1` only.
pub fn anchoring_fixture(seed: u64) -> Network {
    let mut r = rng(seed);
    loop {
        let w1 = r.gen_range(2..=3);
        let w2 = r.gen_range(2..=3);
        let mut f = random_layered_form(&mut r, &[2, w1, w2, 2], &WeightDistribution::default());
        f.weights[0][0][1] = 0.0;
        for k in 1..w1 {
            f.weights[1][0][k] = 0.0;
        }
        for k in 1..w2 {
            f.weights[2][1][k] = 0.0;
        }
        let net = labelled_network(&f).unwrap();
        if net.is_clones_free() && net.is_non_degenerate() {
            return net;
        }
    }
}

/// Negates row `j` of hidden layer `l` (1-based layer), its bias and the
/// matching column of the next layer.
pub fn flip_sign(f: &LayeredForm, l: usize, j: usize) -> LayeredForm {
    let mut g = f.clone();
    for w in g.weights[l - 1][j].iter_mut() {
        *w = -*w;
    }
    g.biases[l - 1][j] = -g.biases[l - 1][j];
    for row in g.weights[l].iter_mut() {
        row[j] = -row[j];
    }
    g
}

pub fn uniform_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(lo..hi)).collect()).collect()
}

/// Adds a clone `c_{v}` of a random non-input node with children, splitting
/// each outgoing weight between the two copies. `None` if no node has
/// children.
pub fn with_clone(net: &Network, rng: &mut ChaCha8Rng) -> Option<(Network, NodeId, NodeId)> {
    let candidates: Vec<NodeId> =
        net.node_ids().filter(|v| !net.is_input(v) && !net.children(v).is_empty()).cloned().collect();
    let v = candidates.choose(rng)?.clone();
    let c = NodeId::new(format!("c_{v}"));
    let mut nodes = net.nodes().clone();
    nodes.insert(c.clone(), net.bias(&v));
    let mut edges = net.edges().clone();
    for (p, w) in net.parents(&v) {
        edges.insert((p.clone(), c.clone()), *w);
    }
    let t: f64 = rng.gen_range(0.2..0.8);
    for (ch, w) in net.children(&v) {
        edges.insert((v.clone(), ch.clone()), w * t);
        edges.insert((c.clone(), ch.clone()), w * (1.0 - t));
    }
    let out = Network::new(nodes, net.inputs().to_vec(), net.outputs().to_vec(), edges).ok()?;
    Some((out, v, c))
}

/// Like `shuffle_ids` but leaves outputs in place.
pub fn shuffle_hidden(net: &Network, rng: &mut ChaCha8Rng) -> Network {
    let ids: Vec<NodeId> = net.node_ids().filter(|v| !net.is_input(v) && !net.is_output(v)).cloned().collect();
    let mut perm = ids.clone();
    perm.shuffle(rng);
    let map: BTreeMap<NodeId, NodeId> = ids.into_iter().zip(perm).collect();
    nnident::experiment::relabel(net, &map).unwrap()
}
