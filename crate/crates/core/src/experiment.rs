//! Random network generation, linear-independence tests, the seeded
//! identifiability experiment and the two counterexample constructions.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::eval::{latin_hypercube, maps_equal, Builtin, CompiledNetwork, EvalError, Nonlinearity, Sampling};
use crate::file::{GridSpec, NetworkSpec};
use crate::iso::{faithfully_isomorphic, IsoError};
use crate::net::{LayeredForm, NetError, Network, NodeId};
use crate::sigma::TanhSeries;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no networks given")]
    Empty,
    #[error("network {0} does not share the input list of network 0")]
    InputMismatch(usize),
    #[error("network {0} must have exactly one output")]
    NotSingleOutput(usize),
    #[error("need more than {needed} samples, got {got}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("layout must have at least two positive entries")]
    BadLayout,
    #[error("generator produced an invalid network: {0}")]
    Generator(NetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Iso(#[from] IsoError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// SplitMix64 finalizer; derives independent per-trial seeds from a
/// master seed and a counter.
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut z = master.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Weights uniform on [−max_abs, −min_abs] ∪ [min_abs, max_abs], biases
/// uniform on [−bias_abs, bias_abs].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightDistribution {
    pub min_abs: f64,
    pub max_abs: f64,
    pub bias_abs: f64,
}

impl Default for WeightDistribution {
    fn default() -> Self {
        WeightDistribution { min_abs: 0.1, max_abs: 2.0, bias_abs: 1.0 }
    }
}

impl WeightDistribution {
    fn weight(&self, rng: &mut ChaCha8Rng) -> f64 {
        let m = rng.gen_range(self.min_abs..=self.max_abs);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    }

    fn bias(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(-self.bias_abs..=self.bias_abs)
    }
}

pub fn random_layered_form(rng: &mut ChaCha8Rng, layout: &[usize], dist: &WeightDistribution) -> LayeredForm {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 1..layout.len() {
        weights.push((0..layout[l]).map(|_| (0..layout[l - 1]).map(|_| dist.weight(rng)).collect()).collect());
        biases.push((0..layout[l]).map(|_| dist.bias(rng)).collect());
    }
    LayeredForm { layout: layout.to_vec(), weights, biases }
}

/// Graph form with ids `x{j}` for inputs, `h{l}_{j}` for hidden nodes and
/// `y{j}` for outputs (all 1-based). Zero entries mean no edge.
pub fn labelled_network(form: &LayeredForm) -> Result<Network, NetError> {
    let depth = form.layout.len() - 1;
    let name = |l: usize, j: usize| {
        NodeId::new(match l {
            0 => format!("x{}", j + 1),
            l if l == depth => format!("y{}", j + 1),
            l => format!("h{l}_{}", j + 1),
        })
    };
    let mut b = Network::builder();
    for j in 0..form.layout[0] {
        b = b.input(name(0, j));
    }
    for l in 1..=depth {
        for j in 0..form.layout[l] {
            b = b.node(name(l, j), form.biases[l - 1][j]);
            for k in 0..form.layout[l - 1] {
                let w = form.weights[l - 1][j][k];
                if w != 0.0 {
                    b = b.edge(name(l - 1, k), name(l, j), w);
                }
            }
        }
    }
    for j in 0..form.layout[depth] {
        b = b.output(name(depth, j));
    }
    b.build()
}

/// Valid, non-degenerate, clones-free layered network with the given
/// layout. Draws again on the measure-zero event of a clone pair.
pub fn random_clonesfree_network(seed: u64, layout: &[usize], dist: &WeightDistribution) -> Result<Network, ExperimentError> {
    if layout.len() < 2 || layout.contains(&0) {
        return Err(ExperimentError::BadLayout);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let net = labelled_network(&random_layered_form(&mut rng, layout, dist)).map_err(ExperimentError::Generator)?;
        if net.is_clones_free() {
            return Ok(net);
        }
    }
}

/// Renames nodes by `map`; ids not in the map are kept.
pub fn relabel(net: &Network, map: &BTreeMap<NodeId, NodeId>) -> Result<Network, NetError> {
    let f = |id: &NodeId| map.get(id).cloned().unwrap_or_else(|| id.clone());
    Network::new(
        net.nodes().iter().map(|(id, b)| (f(id), *b)).collect(),
        net.inputs().iter().map(f).collect(),
        net.outputs().iter().map(f).collect(),
        net.edges().iter().map(|((s, d), w)| ((f(s), f(d)), *w)).collect(),
    )
}

/// Same network with the hidden nodes of every layer shuffled among their
/// ids.
pub fn permuted_copy(net: &Network, rng: &mut ChaCha8Rng) -> Result<Network, NetError> {
    let mut by_level: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    let levels = net.levels()?;
    for (id, lv) in &levels {
        if !net.is_input(id) && !net.is_output(id) {
            by_level.entry(*lv).or_default().push(id.clone());
        }
    }
    let mut map = BTreeMap::new();
    for ids in by_level.values() {
        let mut shuffled = ids.clone();
        shuffled.shuffle(rng);
        map.extend(ids.iter().cloned().zip(shuffled));
    }
    relabel(net, &map)
}

/// Random network shapes: `d_in` inputs, up to `max_hidden` hidden layers
/// of width 1..=`max_width`, one output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub d_in: usize,
    pub max_hidden: usize,
    pub max_width: usize,
    pub weights: WeightDistribution,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec { d_in: 1, max_hidden: 2, max_width: 3, weights: WeightDistribution::default() }
    }
}

impl GeneratorSpec {
    pub fn layout(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let hidden = rng.gen_range(0..=self.max_hidden);
        let mut l = vec![self.d_in];
        l.extend((0..hidden).map(|_| rng.gen_range(1..=self.max_width)));
        l.push(1);
        l
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Network, ExperimentError> {
        let layout = self.layout(rng);
        random_clonesfree_network(rng.gen(), &layout, &self.weights)
    }
}

/// The zero block ρ(ρ(x) − ½ρ(2x) − ½ρ(2x − 1)) on a single input `x`.
pub fn zero_block_form() -> LayeredForm {
    LayeredForm {
        layout: vec![1, 3, 1],
        weights: vec![vec![vec![1.0], vec![2.0], vec![2.0]], vec![vec![1.0, -0.5, -0.5]]],
        biases: vec![vec![0.0, 0.0, -1.0], vec![0.0]],
    }
}

pub fn zero_block_network() -> Network {
    Network::from_layered(&zero_block_form(), &[NodeId::from("x")]).expect("fixed fixture")
}

/// Feeds the single output of `net` through the zero block. New nodes are
/// `z1`, `z2`, `z3` and the output `z_out`.
pub fn append_zero_block(net: &Network) -> Result<Network, NetError> {
    let [out] = net.outputs() else {
        return Err(NetError::Malformed("zero block needs a single output".into()));
    };
    let mut nodes = net.nodes().clone();
    let mut edges = net.edges().clone();
    let z = |s: &str| NodeId::from(s);
    for (id, bias, w_in, w_out) in [("z1", 0.0, 1.0, 1.0), ("z2", 0.0, 2.0, -0.5), ("z3", -1.0, 2.0, -0.5)] {
        if nodes.insert(z(id), Some(bias)).is_some() {
            return Err(NetError::IdCollision(z(id)));
        }
        edges.insert((out.clone(), z(id)), w_in);
        edges.insert((z(id), z("z_out")), w_out);
    }
    if nodes.insert(z("z_out"), Some(0.0)).is_some() {
        return Err(NetError::IdCollision(z("z_out")));
    }
    Network::new(nodes, net.inputs().to_vec(), vec![z("z_out")], edges)
}

/// Maximum |output| of the zero block under clipped ReLU on an even grid.
pub fn clipped_relu_zero_demo(lo: f64, hi: f64, points: usize) -> f64 {
    let c = CompiledNetwork::new(&zero_block_network()).expect("fixed fixture");
    let rho = Nonlinearity::Builtin(Builtin::ClippedRelu);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64)
        .map(|x| c.eval(&rho, &[x])[0].abs())
        .fold(0.0, f64::max)
}

/// Networks N_1..N_4 built from a 4-output network by keeping output rows
/// (1,3), (1,4), (2,4), (2,3).
pub fn multi_output_family(base: &LayeredForm) -> Result<[Network; 4], NetError> {
    let depth = base.depth();
    if base.layout[depth] != 4 || depth < 2 {
        return Err(NetError::Malformed("need depth ≥ 2 and four outputs".into()));
    }
    let pick = |rows: [usize; 2]| -> Result<Network, NetError> {
        let mut f = base.clone();
        f.weights[depth - 1] = rows.iter().map(|&r| base.weights[depth - 1][r - 1].clone()).collect();
        f.biases[depth - 1] = vec![0.0, 0.0];
        f.layout[depth] = 2;
        labelled_network(&f)
    };
    Ok([pick([1, 3])?, pick([1, 4])?, pick([2, 4])?, pick([2, 3])?])
}

/// max over random points in [−3, 3]^d of |N1 − N2 + N3 − N4| for a random
/// clones-free base of the given layout (last entry must be 4).
pub fn multi_output_demo(seed: u64, layout: &[usize], rho: &Nonlinearity, points: usize) -> Result<f64, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = loop {
        let mut f = random_layered_form(&mut rng, layout, &WeightDistribution::default());
        let last = f.biases.len() - 1;
        f.biases[last] = vec![0.0; layout[layout.len() - 1]];
        if labelled_network(&f)?.is_clones_free() {
            break f;
        }
    };
    let fam = multi_output_family(&base)?;
    let compiled = fam.iter().map(CompiledNetwork::new).collect::<Result<Vec<_>, _>>()?;
    let pts = latin_hypercube(layout[0], points, -3.0, 3.0, rng.gen());
    let mut worst: f64 = 0.0;
    for x in &pts {
        let v: Vec<Vec<f64>> = compiled.iter().map(|c| c.eval(rho, x)).collect();
        for o in 0..2 {
            worst = worst.max((v[0][o] - v[1][o] + v[2][o] - v[3][o]).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiReport {
    pub samples: usize,
    /// Singular values of the column-normalized sample matrix, descending.
    pub singular_values: Vec<f64>,
    pub min_singular_value: f64,
    pub threshold: f64,
    /// (λ_0, λ_1, …, λ_n) with max |λ| = 1, reported when dependent.
    pub lambda: Option<Vec<f64>>,
}

impl LiReport {
    pub fn dependent(&self) -> bool {
        self.min_singular_value < self.threshold
    }
}

pub const LI_THRESHOLD: f64 = 1e-8;

/// Smallest singular value of the m × (n+1) matrix [1 | f_1 | … | f_n]
/// sampled at Latin-hypercube points of [lo, hi]^d, columns scaled to unit
/// norm. A null vector is mapped back to unscaled coefficients.
pub fn li_test(
    networks: &[Network],
    rho: &Nonlinearity,
    m: usize,
    seed: u64,
    range: (f64, f64),
) -> Result<LiReport, ExperimentError> {
    let first = networks.first().ok_or(ExperimentError::Empty)?;
    for (i, n) in networks.iter().enumerate() {
        if n.inputs() != first.inputs() {
            return Err(ExperimentError::InputMismatch(i));
        }
        if n.outputs().len() != 1 {
            return Err(ExperimentError::NotSingleOutput(i));
        }
    }
    let cols = networks.len() + 1;
    if m <= cols {
        return Err(ExperimentError::TooFewSamples { got: m, needed: cols });
    }
    let compiled = networks.iter().map(CompiledNetwork::new).collect::<Result<Vec<_>, _>>()?;
    let pts = latin_hypercube(first.inputs().len(), m, range.0, range.1, seed);
    let rows: Vec<Vec<f64>> = pts.par_iter().map(|x| compiled.iter().map(|c| c.eval(rho, x)[0]).collect()).collect();
    let mut a = DMatrix::from_fn(m, cols, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    for (j, &n) in norms.iter().enumerate() {
        if n > 0.0 {
            a.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let svd = a.svd(false, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let (imin, &smin) = sv.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    let mut sorted = sv.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let lambda = (smin < LI_THRESHOLD).then(|| {
        let vt = svd.v_t.as_ref().expect("requested");
        let mut l: Vec<f64> = (0..cols)
            .map(|j| if norms[j] > 0.0 { vt[(imin, j)] / norms[j] } else { vt[(imin, j)] })
            .collect();
        let scale = l.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let sign = l.iter().find(|x| x.abs() == scale).map_or(1.0, |x| x.signum());
        l.iter_mut().for_each(|x| *x *= sign / scale);
        l
    });
    Ok(LiReport { samples: m, singular_values: sorted, min_singular_value: smin, threshold: LI_THRESHOLD, lambda })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    PermutedCopy,
    FreshPair,
    ClippedReluControl,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::PermutedCopy => "permuted",
            Arm::FreshPair => "fresh",
            Arm::ClippedReluControl => "control",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub arm: Arm,
    pub trial: usize,
    pub seed: u64,
    pub layout_a: Vec<usize>,
    pub layout_b: Vec<usize>,
    pub maps_equal: bool,
    pub max_diff: f64,
    pub witness: Option<Vec<f64>>,
    pub isomorphic: bool,
    /// Both networks, kept when the verdicts disagree.
    pub fixtures: Option<(NetworkSpec, NetworkSpec)>,
}

impl TrialRecord {
    pub fn agrees(&self) -> bool {
        self.maps_equal == self.isomorphic
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArmSummary {
    pub trials: usize,
    pub equal_isomorphic: usize,
    pub unequal_non_isomorphic: usize,
    pub equal_non_isomorphic: usize,
    pub unequal_isomorphic: usize,
    pub min_diff: f64,
    pub max_diff: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub generator: GeneratorSpec,
    pub trials: usize,
    pub control_trials: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generator: GeneratorSpec::default(),
            trials: 200,
            control_trials: 20,
            seed: 0,
            grid: GridSpec::default(),
            tol: 1e-9,
        }
    }
}

impl ExperimentConfig {
    /// Full grid for one input, 61 points per axis for two, Latin
    /// hypercube beyond.
    pub fn sampling(&self, seed: u64) -> Sampling {
        let mut s = self.grid.sampling(seed);
        if self.generator.d_in == 2 {
            s.per_dim = s.per_dim.min(61);
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub seed: u64,
    pub records: Vec<TrialRecord>,
    pub summaries: BTreeMap<Arm, ArmSummary>,
    pub wall_clock: Duration,
}

impl ExperimentReport {
    /// Disagreements in the arms that use σ.
    pub fn contradictions(&self) -> Vec<&TrialRecord> {
        self.records.iter().filter(|r| r.arm != Arm::ClippedReluControl && !r.agrees()).collect()
    }

    /// (equal, non-isomorphic) pairs found by the clipped-ReLU arm.
    pub fn control_counterexamples(&self) -> usize {
        self.summaries.get(&Arm::ClippedReluControl).map_or(0, |s| s.equal_non_isomorphic)
    }

    /// One row per trial; deterministic for a fixed configuration.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("arm,trial,seed,layout_a,layout_b,maps_equal,max_diff,isomorphic,witness\n");
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("-");
        for r in &self.records {
            let witness = r
                .witness
                .as_ref()
                .map(|w| w.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.arm,
                r.trial,
                r.seed,
                join(&r.layout_a),
                join(&r.layout_b),
                r.maps_equal,
                r.max_diff,
                r.isomorphic,
                witness
            ));
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let mut s = format!("seed {}\n", self.seed);
        for (arm, a) in &self.summaries {
            s.push_str(&format!(
                "{arm}: trials {} equal+iso {} unequal+noniso {} equal+noniso {} unequal+iso {} diff range [{}, {}]\n",
                a.trials, a.equal_isomorphic, a.unequal_non_isomorphic, a.equal_non_isomorphic, a.unequal_isomorphic, a.min_diff, a.max_diff
            ));
        }
        s
    }
}

fn layout_of(net: &Network) -> Vec<usize> {
    net.to_layered().map(|(f, _)| f.layout).unwrap_or_default()
}

fn run_trial(
    arm: Arm,
    trial: usize,
    seed: u64,
    cfg: &ExperimentConfig,
    sigma: &Nonlinearity,
) -> Result<TrialRecord, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, rho) = match arm {
        Arm::PermutedCopy => {
            let a = cfg.generator.draw(&mut rng)?;
            let b = permuted_copy(&a, &mut rng)?;
            (a, b, sigma.clone())
        }
        Arm::FreshPair => (cfg.generator.draw(&mut rng)?, cfg.generator.draw(&mut rng)?, sigma.clone()),
        Arm::ClippedReluControl => {
            let a = append_zero_block(&cfg.generator.draw(&mut rng)?)?;
            let b = append_zero_block(&cfg.generator.draw(&mut rng)?)?;
            (a, b, Nonlinearity::Builtin(Builtin::ClippedRelu))
        }
    };
    let cmp = maps_equal(&a, &b, &rho, &cfg.sampling(seed), cfg.tol)?;
    let isomorphic = faithfully_isomorphic(&a, &b)?.is_some();
    let keep = cmp.equal != isomorphic;
    Ok(TrialRecord {
        arm,
        trial,
        seed,
        layout_a: layout_of(&a),
        layout_b: layout_of(&b),
        maps_equal: cmp.equal,
        max_diff: cmp.max_diff,
        witness: cmp.witness,
        isomorphic,
        fixtures: keep.then(|| (NetworkSpec::from_network(&a), NetworkSpec::from_network(&b))),
    })
}

/// Runs the permuted-copy and fresh-pair arms under `sigma` and the
/// clipped-ReLU control arm. Trials run in parallel; records are ordered by
/// arm and trial index.
pub fn identifiability_experiment(cfg: &ExperimentConfig, sigma: &TanhSeries) -> Result<ExperimentReport, ExperimentError> {
    let start = Instant::now();
    let sigma = Nonlinearity::from(sigma.clone());
    let jobs: Vec<(Arm, usize)> = [(Arm::PermutedCopy, cfg.trials), (Arm::FreshPair, cfg.trials), (Arm::ClippedReluControl, cfg.control_trials)]
        .into_iter()
        .flat_map(|(arm, n)| (0..n).map(move |t| (arm, t)))
        .collect();
    let records = jobs
        .par_iter()
        .enumerate()
        .map(|(counter, &(arm, t))| run_trial(arm, t, derive_seed(cfg.seed, counter as u64), cfg, &sigma))
        .collect::<Result<Vec<_>, _>>()?;
    let mut summaries: BTreeMap<Arm, ArmSummary> = BTreeMap::new();
    for r in &records {
        let s = summaries.entry(r.arm).or_insert(ArmSummary { min_diff: f64::INFINITY, ..Default::default() });
        s.trials += 1;
        match (r.maps_equal, r.isomorphic) {
            (true, true) => s.equal_isomorphic += 1,
            (false, false) => s.unequal_non_isomorphic += 1,
            (true, false) => s.equal_non_isomorphic += 1,
            (false, true) => s.unequal_isomorphic += 1,
        }
        s.min_diff = s.min_diff.min(r.max_diff);
        s.max_diff = s.max_diff.max(r.max_diff);
    }
    Ok(ExperimentReport { seed: cfg.seed, records, summaries, wall_clock: start.elapsed() })
}
