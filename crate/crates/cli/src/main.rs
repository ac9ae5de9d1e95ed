use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nnident::compose::{amalgamate_many, anchor_input, default_anchor_candidates, find_clone_free_anchor};
use nnident::eval::{CompiledNetwork, Sampling};
use nnident::experiment::{
    clipped_relu_zero_demo, identifiability_experiment, li_test, multi_output_demo, ExperimentConfig,
    GeneratorSpec,
};
use nnident::file::{GridSpec, NetworkFile, NetworkSpec, NonlinearitySpec};
use nnident::iso::{extensionally_isomorphic, faithfully_isomorphic, layered_isomorphic, sign_change_isomorphic};
use nnident::sigma::{
    approximate, generate_self_avoiding, reference_series, self_avoiding_witness, BijectionRule, SelfAvoidingSpec,
    TargetFunctionSpec, Window,
};
use nnident::torus::{q_decompose, split_input, winding_search};
use nnident::{Builtin, Network, NodeId, Nonlinearity, TanhSeries};

#[derive(Parser)]
#[command(name = "nnident", version, about = "Structure and identifiability analysis for feed-forward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and report structural properties.
    Validate(ValidateArgs),
    /// Evaluate a network on a grid.
    Eval(EvalArgs),
    /// Decide isomorphism of two networks.
    Iso(IsoArgs),
    /// Amalgamate networks into one clones-free network.
    Amalgam(AmalgamArgs),
    /// Fix one input of a network to a constant.
    Anchor(AnchorArgs),
    /// Build a tanh series approximating a builtin nonlinearity.
    Approx(ApproxArgs),
    /// List poles of a tanh series in a window.
    Poles(PolesArgs),
    /// Test {1} ∪ output maps for linear independence.
    Litest(LiArgs),
    /// Run the seeded identifiability experiment.
    Identify(IdentifyArgs),
    /// Rational dimension and decomposition of weight tuples.
    Qdim(QdimArgs),
    /// Split the single input of a network along the rational structure of
    /// its first-layer weights.
    Split(SplitArgs),
    /// Generate self-avoiding shifts and search witnesses.
    Selfavoid(SelfAvoidArgs),
    /// Reproduce the counterexample constructions.
    Demo(DemoArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    input: PathBuf,
    /// Network name; optional when the file holds one network.
    #[arg(long)]
    network: Option<String>,
    /// Nonlinearity: a name from the file, a builtin such as `tanh`, or `reference`.
    #[arg(long, default_value = "tanh")]
    sigma: String,
    /// LO:HI:N points per input dimension.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV of (inputs, outputs) rows.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IsoMode {
    Extensional,
    Faithful,
    Layered,
    Sign,
}

#[derive(Args)]
struct IsoArgs {
    #[arg(long)]
    input: PathBuf,
    first: String,
    second: String,
    #[arg(long, value_enum, default_value = "faithful")]
    mode: IsoMode,
}

#[derive(Args)]
struct AmalgamArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(required = true, num_args = 2..)]
    networks: Vec<String>,
    /// Network file receiving the amalgam.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AnchorArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    network: Option<String>,
    /// Input node to fix.
    #[arg(long)]
    anchor: String,
    /// Value to fix it to; searched for a clones-free result when omitted.
    #[arg(long, allow_hyphen_values = true)]
    value: Option<f64>,
    #[arg(long, default_value = "tanh")]
    sigma: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ApproxArgs {
    /// Builtin target, e.g. `clipped-relu` or `isru:0.5`.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    /// LO:HI window of the guarantee.
    #[arg(long, default_value = "-20:20", allow_hyphen_values = true)]
    window: String,
    /// Network file receiving the series as nonlinearity `sigma`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PolesArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "reference")]
    sigma: String,
    /// RE_LO:RE_HI:IM_LO:IM_HI.
    #[arg(long, default_value = "-3:3:-1:1", allow_hyphen_values = true)]
    window: String,
    /// CSV of (re, im) rows.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LiArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(required = true)]
    networks: Vec<String>,
    #[arg(long, default_value = "tanh")]
    sigma: String,
    /// Number of sample points.
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "-3:3", allow_hyphen_values = true)]
    range: String,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Optional file providing the series named by --sigma.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "reference")]
    sigma: String,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    control_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    d_in: usize,
    #[arg(long, default_value_t = 2)]
    max_hidden: usize,
    #[arg(long, default_value_t = 3)]
    max_width: usize,
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// CSV of trial records; falsifying fixtures go next to it.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct QdimArgs {
    #[arg(long)]
    input: PathBuf,
    /// Tuple names; all tuples when omitted.
    tuples: Vec<String>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    network: Option<String>,
    #[arg(long, default_value = "reference")]
    sigma: String,
    /// Also search a winding witness with |t| above this radius.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 5e-3)]
    tol: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Odd,
    Even,
}

#[derive(Args)]
struct SelfAvoidArgs {
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = -10, allow_hyphen_values = true)]
    kmin: i64,
    #[arg(long, default_value_t = 10, allow_hyphen_values = true)]
    kmax: i64,
    #[arg(long, value_enum, default_value = "odd")]
    rule: Rule,
    /// N:THETA pairs, comma separated, e.g. `1:0,3:0.2`.
    #[arg(long, allow_hyphen_values = true)]
    pairs: Option<String>,
    #[arg(long, default_value = "-3:3", allow_hyphen_values = true)]
    window: String,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// CSV of (k, s_k) rows.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    ClippedReluZero,
    MultiOutput,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(value_enum)]
    which: Demo,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds for the multi-output demo.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// LO:HI:N for the clipped-ReLU demo.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, default_value = "tanh")]
    sigma: String,
}

struct CliError(String);

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

fn fail<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError(msg.into()))
}

type Outcome = Result<bool, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Eval(a) => eval(a),
        Command::Iso(a) => iso(a),
        Command::Amalgam(a) => amalgam(a),
        Command::Anchor(a) => anchor(a),
        Command::Approx(a) => approx(a),
        Command::Poles(a) => poles(a),
        Command::Litest(a) => litest(a),
        Command::Identify(a) => identify(a),
        Command::Qdim(a) => qdim(a),
        Command::Split(a) => split(a),
        Command::Selfavoid(a) => selfavoid(a),
        Command::Demo(a) => demo(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_floats(s: &str, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError(format!("bad {what} `{s}`")))?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return fail(format!("{what} `{s}` needs {n} finite numbers separated by `:`"));
    }
    Ok(v)
}

fn parse_range(s: &str, what: &str) -> Result<(f64, f64), CliError> {
    let v = parse_floats(s, 2, what)?;
    if v[0] >= v[1] {
        return fail(format!("{what} `{s}` is empty"));
    }
    Ok((v[0], v[1]))
}

fn parse_grid(s: Option<&str>) -> Result<GridSpec, CliError> {
    let mut g = GridSpec::default();
    if let Some(s) = s {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return fail(format!("grid `{s}` must be LO:HI:N"));
        }
        let (lo, hi) = parse_range(&format!("{}:{}", parts[0], parts[1]), "grid")?;
        let n: usize = parts[2].parse().map_err(|_| CliError(format!("bad point count in grid `{s}`")))?;
        if n < 2 {
            return fail("grid needs at least 2 points");
        }
        g.lo = lo;
        g.hi = hi;
        g.per_dim = n;
    }
    Ok(g)
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    if let Some(p) = path {
        std::fs::write(p, content).map_err(|e| CliError(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<NetworkFile, CliError> {
    NetworkFile::read(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn network_from(file: &NetworkFile, name: Option<&str>) -> Result<(String, Network), CliError> {
    let n = NetworkFile::pick(&file.networks, "network", name)?.to_owned();
    let net = file.network(&n)?;
    Ok((n, net))
}

fn sigma_from(file: Option<&NetworkFile>, name: &str) -> Result<Nonlinearity, CliError> {
    if name == "reference" && file.is_none_or(|f| !f.nonlinearities.contains_key(name)) {
        return Ok(reference_series().into());
    }
    match file {
        Some(f) => Ok(f.nonlinearity(name)?),
        None => name
            .parse::<Builtin>()
            .map(Nonlinearity::Builtin)
            .map_err(|_| CliError(format!("unknown nonlinearity `{name}`"))),
    }
}

fn series_from(file: Option<&NetworkFile>, name: &str) -> Result<Arc<TanhSeries>, CliError> {
    match sigma_from(file, name)? {
        Nonlinearity::Series(s) => Ok(s),
        Nonlinearity::Builtin(b) => fail(format!("`{b}` is not a tanh series")),
    }
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn validate(a: ValidateArgs) -> Outcome {
    let file = read_file(&a.input)?;
    let mut all_good = true;
    for name in file.networks.keys() {
        let net = file.network(name)?;
        let clones = net.find_clone_pairs().len();
        let nd = net.is_non_degenerate();
        all_good &= nd && clones == 0;
        println!(
            "network {name}: nodes {} edges {} depth {} layered {} non-degenerate {} clone pairs {clones}",
            net.node_count(),
            net.edge_count(),
            net.depth()?,
            yes(net.is_layered()),
            yes(nd),
        );
    }
    for name in file.nonlinearities.keys() {
        println!("nonlinearity {name}: ok");
    }
    for name in file.tuples.keys() {
        println!("tuple {name}: ok");
    }
    for name in file.experiments.keys() {
        println!("experiment {name}: ok");
    }
    Ok(all_good)
}

fn eval(a: EvalArgs) -> Outcome {
    let file = read_file(&a.input)?;
    let (name, net) = network_from(&file, a.network.as_deref())?;
    let rho = sigma_from(Some(&file), &a.sigma)?;
    let sampling: Sampling = parse_grid(a.grid.as_deref())?.sampling(a.seed);
    let points = sampling.points(net.inputs().len());
    let c = CompiledNetwork::new(&net)?;
    let mut csv = String::new();
    let header: Vec<&str> = net.inputs().iter().chain(net.outputs()).map(NodeId::as_str).collect();
    csv.push_str(&header.join(","));
    csv.push('\n');
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in &points {
        let y = c.eval(&rho, x);
        for v in &y {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let row: Vec<String> = x.iter().chain(&y).map(|v| format!("{v}")).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    println!("network {name}: {} points, outputs in [{lo}, {hi}]", points.len());
    write_output(a.output.as_deref(), &csv)?;
    Ok(true)
}

fn iso(a: IsoArgs) -> Outcome {
    let file = read_file(&a.input)?;
    let n1 = file.network(&a.first)?;
    let n2 = file.network(&a.second)?;
    let witness = match a.mode {
        IsoMode::Extensional => extensionally_isomorphic(&n1, &n2)?,
        IsoMode::Faithful => faithfully_isomorphic(&n1, &n2)?,
        IsoMode::Layered | IsoMode::Sign => {
            let (f1, _) = n1.to_layered()?;
            let (f2, _) = n2.to_layered()?;
            match a.mode {
                IsoMode::Layered => layered_isomorphic(&f1, &f2),
                _ => sign_change_isomorphic(&f1, &f2),
            }
        }
    };
    match witness {
        Some(w) => {
            println!("isomorphic ({:?})", w.kind);
            for (src, dst) in &w.map {
                println!("  {src} -> {dst}");
            }
            if w.signs.iter().flatten().any(|&s| s < 0) {
                for (l, s) in w.signs.iter().enumerate() {
                    println!("  signs layer {l}: {s:?}");
                }
            }
            Ok(true)
        }
        None => {
            println!("not isomorphic");
            Ok(false)
        }
    }
}

fn amalgam(a: AmalgamArgs) -> Outcome {
    let file = read_file(&a.input)?;
    let nets = a.networks.iter().map(|n| file.network(n)).collect::<Result<Vec<_>, _>>()?;
    let r = amalgamate_many(&nets)?;
    let total: usize = nets.iter().map(Network::node_count).sum();
    println!("amalgam: {} nodes (arguments total {total}), {} edges", r.amalgam.node_count(), r.amalgam.edge_count());
    for (name, emb) in a.networks.iter().zip(&r.embeddings) {
        let moved: Vec<String> = emb.iter().filter(|(k, v)| k != v).map(|(k, v)| format!("{k}->{v}")).collect();
        println!("  {name}: {}", if moved.is_empty() { "identity".to_owned() } else { moved.join(" ") });
    }
    let mut out = NetworkFile { basis: file.basis.clone(), ..Default::default() };
    out.networks.insert("amalgam".into(), NetworkSpec::from_network(&r.amalgam));
    write_output(a.output.as_deref(), &out.emit())?;
    Ok(true)
}

fn anchor(a: AnchorArgs) -> Outcome {
    let file = read_file(&a.input)?;
    let (name, net) = network_from(&file, a.network.as_deref())?;
    let rho = sigma_from(Some(&file), &a.sigma)?;
    let id = NodeId::new(a.anchor);
    let (value, r) = match a.value {
        Some(v) => (v, anchor_input(&net, &id, v, &rho)?),
        None => find_clone_free_anchor(&net, &id, &rho, &default_anchor_candidates(a.seed))?,
    };
    println!(
        "network {name}: anchored {id} at {value}; {} -> {} nodes, clones-free {}",
        net.node_count(),
        r.anchored.node_count(),
        yes(r.anchored.is_clones_free())
    );
    for (o, v) in &r.dropped_output_values {
        println!("  constant output {o} = {v}");
    }
    let mut out = NetworkFile::default();
    out.networks.insert(format!("{name}_anchored"), NetworkSpec::from_network(&r.anchored));
    write_output(a.output.as_deref(), &out.emit())?;
    Ok(r.anchored.is_clones_free())
}

fn approx(a: ApproxArgs) -> Outcome {
    let b: Builtin = a.target.parse()?;
    b.check()?;
    let window = parse_range(&a.window, "window")?;
    let (series, rep) = approximate(&TargetFunctionSpec::from_builtin(b), a.tol, window)?;
    println!("target {b}, epsilon {}, window [{}, {}]", a.tol, window.0, window.1);
    println!("alpha {} beta {} mesh {} terms {} k in [{}, {}]", rep.alpha, rep.beta, rep.mesh, rep.terms, rep.k_min, rep.k_max);
    println!(
        "budgets: smoothing {} riemann {} perturbation {}",
        rep.budget_smoothing, rep.budget_riemann, rep.budget_perturbation
    );
    println!("measured sup error {} on {} points; tail bound {}; attempts {}", rep.measured_sup_error, rep.grid_points, rep.tail_bound, rep.attempts);
    let mut out = NetworkFile::default();
    out.nonlinearities.insert("sigma".into(), NonlinearitySpec::from_series(&series));
    write_output(a.output.as_deref(), &out.emit())?;
    Ok(rep.measured_sup_error < a.tol)
}

fn poles(a: PolesArgs) -> Outcome {
    let file = a.input.as_deref().map(read_file).transpose()?;
    let s = series_from(file.as_ref(), &a.sigma)?;
    let w = parse_floats(&a.window, 4, "window")?;
    let window = Window { re_lo: w[0], re_hi: w[1], im_lo: w[2], im_hi: w[3] };
    let poles = s.poles(&window);
    let mut csv = String::from("re,im\n");
    for p in &poles {
        let _ = writeln!(csv, "{},{}", p.re, p.im);
    }
    println!("{} poles in window; imaginary period {}", poles.len(), s.imaginary_period());
    write_output(a.output.as_deref(), &csv)?;
    Ok(true)
}

fn litest(a: LiArgs) -> Outcome {
    let file = read_file(&a.input)?;
    let nets = a.networks.iter().map(|n| file.network(n)).collect::<Result<Vec<_>, _>>()?;
    let rho = sigma_from(Some(&file), &a.sigma)?;
    let r = li_test(&nets, &rho, a.grid, a.seed, parse_range(&a.range, "range")?)?;
    println!("samples {} min singular value {}", r.samples, r.min_singular_value);
    println!("singular values {:?}", r.singular_values);
    match &r.lambda {
        Some(l) => {
            println!("dependent; lambda_0 {} lambda {:?}", l[0], &l[1..]);
            Ok(false)
        }
        None => {
            println!("independent (threshold {})", r.threshold);
            Ok(true)
        }
    }
}

fn identify(a: IdentifyArgs) -> Outcome {
    let file = a.input.as_deref().map(read_file).transpose()?;
    let sigma = series_from(file.as_ref(), &a.sigma)?;
    if a.d_in == 0 || a.max_width == 0 {
        return fail("d-in and max-width must be positive");
    }
    let cfg = ExperimentConfig {
        generator: GeneratorSpec { d_in: a.d_in, max_hidden: a.max_hidden, max_width: a.max_width, ..Default::default() },
        trials: a.trials,
        control_trials: a.control_trials,
        seed: a.seed,
        grid: parse_grid(a.grid.as_deref())?,
        tol: a.tol,
    };
    let report = identifiability_experiment(&cfg, &sigma)?;
    print!("{}", report.summary_text());
    println!("wall clock {:.3} s", report.wall_clock.as_secs_f64());
    write_output(a.output.as_deref(), &report.to_csv())?;
    let bad = report.contradictions();
    if bad.is_empty() {
        println!("no contradictions");
        return Ok(true);
    }
    let mut artifact = NetworkFile::default();
    for r in &bad {
        let (x, y) = r.fixtures.clone().expect("kept on disagreement");
        artifact.networks.insert(format!("{}_{}_a", r.arm, r.trial), x);
        artifact.networks.insert(format!("{}_{}_b", r.arm, r.trial), y);
    }
    let path = a.output.map(|p| p.with_extension("falsifying.json")).unwrap_or_else(|| "identify.falsifying.json".into());
    write_output(Some(&path), &artifact.emit())?;
    println!("{} contradictions; fixtures written to {}", bad.len(), path.display());
    Ok(false)
}

fn qdim(a: QdimArgs) -> Outcome {
    let file = read_file(&a.input)?;
    let names: Vec<String> = if a.tuples.is_empty() { file.tuples.keys().cloned().collect() } else { a.tuples };
    if names.is_empty() {
        return fail("file has no tuples");
    }
    for name in names {
        let d = q_decompose(&file.tuple(&name)?)?;
        println!("{name}: {}", d.k);
        for (pos, &i) in d.order.iter().enumerate() {
            let row: Vec<String> = d.q[pos].iter().map(|x| x.to_string()).collect();
            println!("  value {} = ({}) · basis", i + 1, row.join(", "));
        }
    }
    Ok(true)
}

fn split(a: SplitArgs) -> Outcome {
    let file = read_file(&a.input)?;
    let (name, net) = network_from(&file, a.network.as_deref())?;
    let series = series_from(Some(&file), &a.sigma)?;
    let [v_in] = net.inputs() else {
        return fail(format!("network `{name}` must have a single input"));
    };
    let weights = file.symbolic_out_weights(&name, v_in)?;
    let decomp = q_decompose(&weights.iter().map(|(_, w)| w.clone()).collect::<Vec<_>>())?;
    println!("network {name}: first-layer rank {}", decomp.k);
    let out_net = split_input(&net, &decomp, &series)?;
    println!("split network: inputs {:?}, {} edges", out_net.inputs().iter().map(NodeId::as_str).collect::<Vec<_>>(), out_net.edge_count());
    if let Some(radius) = a.radius {
        match winding_search(&decomp, &vec![0.0; decomp.k], radius, a.tol, 100_000) {
            Ok(w) => println!("winding witness t {} r {:?} residual {}", w.t, w.r, w.residual),
            Err(e) => println!("winding witness: {e}"),
        }
    }
    let mut out = NetworkFile::default();
    out.networks.insert(format!("{name}_split"), NetworkSpec::from_network(&out_net));
    write_output(a.output.as_deref(), &out.emit())?;
    Ok(true)
}

fn selfavoid(a: SelfAvoidArgs) -> Outcome {
    let spec = SelfAvoidingSpec {
        beta: a.beta,
        k_min: a.kmin,
        k_max: a.kmax,
        rule: match a.rule {
            Rule::Odd => BijectionRule::OddNonNegative,
            Rule::Even => BijectionRule::EvenPositive,
        },
    };
    let shifts = generate_self_avoiding(&spec)?;
    let mut csv = String::from("k,s\n");
    for (k, s) in (a.kmin..=a.kmax).zip(&shifts) {
        let _ = writeln!(csv, "{k},{s}");
    }
    println!("{} shifts in [{}, {}]", shifts.len(), shifts[0], shifts[shifts.len() - 1]);
    write_output(a.output.as_deref(), &csv)?;
    let Some(pairs) = a.pairs else {
        return Ok(true);
    };
    let mut parsed = Vec::new();
    for p in pairs.split(',') {
        let (n, th) = p.split_once(':').ok_or_else(|| CliError(format!("pair `{p}` must be N:THETA")))?;
        let n: i64 = n.trim().parse().map_err(|_| CliError(format!("bad multiplier in `{p}`")))?;
        let th: f64 = th.trim().parse().map_err(|_| CliError(format!("bad offset in `{p}`")))?;
        parsed.push((n, th));
    }
    let window = parse_range(&a.window, "window")?;
    match self_avoiding_witness(&parsed, &shifts, window, a.tol) {
        Ok(hit) => {
            println!("witness t {} in copy of pair {}", hit.t, hit.index + 1);
            Ok(true)
        }
        Err(e) => {
            println!("no witness: {e}");
            Ok(false)
        }
    }
}

fn demo(a: DemoArgs) -> Outcome {
    match a.which {
        Demo::ClippedReluZero => {
            let g = parse_grid(a.grid.as_deref())?;
            let m = clipped_relu_zero_demo(g.lo, g.hi, g.per_dim);
            println!("max |output| over {} points in [{}, {}]: {m}", g.per_dim, g.lo, g.hi);
            Ok(m == 0.0)
        }
        Demo::MultiOutput => {
            let rho = sigma_from(None, &a.sigma)?;
            let mut worst: f64 = 0.0;
            for s in 0..a.trials as u64 {
                worst = worst.max(multi_output_demo(a.seed.wrapping_add(s), &[2, 3, 4], &rho, 1000)?);
            }
            println!("max |N1 - N2 + N3 - N4| over {} seeds x 1000 points: {worst}", a.trials);
            Ok(worst <= 1e-9)
        }
    }
}
