//! Command-line front end. Every subcommand wraps one library call and emits
//! plain text, JSON (sorted keys, manifest embedded) or CSV.
//!
//! Settings come from, in increasing precedence: built-in defaults, the TOML
//! file named by `--config` or `$COLORLAB_CONFIG`, then flags.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graph::{self, Coloring, Graph, Model, DEFAULT_BUDGET};
use crate::matrix::{self, ConstantsProfile, ModelParams, OverlapMatrix, SpecialKind};
use crate::moments;
use crate::peel::{self, CheckMode, Property};
use crate::thresholds;
use crate::variational::{self, AscentConfig, XiProfile};

pub const CONFIG_ENV: &str = "COLORLAB_CONFIG";

#[derive(Parser, Debug)]
#[command(name = "colorlab", version, about = "Second-moment laboratory for random graph colouring")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// Number of colours.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Average degree.
    #[arg(long, global = true)]
    d: Option<f64>,
    /// Number of vertices.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Number of edges.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Stable-block size.
    #[arg(long, global = true)]
    s: Option<usize>,
    /// Seed for randomized commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials or multistart count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Enumeration budget.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// `paper` or `desk`.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Emit JSON with a run manifest.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// Emit CSV where supported.
    #[arg(long, global = true)]
    csv: bool,
    /// Write output to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (output does not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Degree thresholds and the chromatic window for `k` (or `k..=k-max`).
    Thresholds {
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// The objective at a named matrix or a JSON matrix file.
    Fvalue {
        #[arg(long, default_value = "barycenter")]
        matrix: String,
    },
    /// Multistart check that the barycentre maximises the objective.
    Certify {
        #[arg(long, value_delimiter = ',')]
        regions: Option<Vec<usize>>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Closed-form and numeric Hessian spectrum at the barycentre.
    Hessian,
    /// Draw a random graph.
    Sample {
        #[arg(long, default_value = "planted_m")]
        model: String,
    },
    /// Exact or Monte Carlo moments of the colouring count.
    Moments {
        #[arg(long, default_value_t = 1)]
        order: u8,
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        balanced: bool,
        /// Exact moments for every m from 0 to C(n, 2).
        #[arg(long)]
        all_m: bool,
    },
    /// Cluster of a planted colouring against its free-vertex bound.
    Cluster {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        coloring: Option<PathBuf>,
    },
    /// Core, peeling sets, census and the P1-P4 predicates.
    Core {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        coloring: Option<PathBuf>,
    },
    /// Region label of an overlap matrix.
    Partition {
        #[arg(long, default_value = "barycenter")]
        matrix: String,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
    },
    /// Shape of the auxiliary function xi on (0, k/2).
    Xi {
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
}

#[derive(Deserialize, Serialize, Debug, Default, Clone)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k: Option<usize>,
    d: Option<f64>,
    n: Option<usize>,
    m: Option<usize>,
    s: Option<usize>,
    seed: Option<u64>,
    trials: Option<usize>,
    budget: Option<u64>,
    profile: Option<String>,
    workers: Option<usize>,
}

/// Effective settings after merging the config file and flags.
#[derive(Serialize, Debug, Clone)]
struct Settings {
    k: Option<usize>,
    d: Option<f64>,
    n: Option<usize>,
    m: Option<usize>,
    s: Option<usize>,
    seed: Option<u64>,
    trials: Option<usize>,
    budget: u64,
    profile: String,
    #[serde(skip)]
    workers: Option<usize>,
}

#[derive(Serialize, Debug, Clone)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub profile: String,
    pub version: String,
    /// From `SOURCE_DATE_EPOCH` only, so outputs stay reproducible.
    pub timestamp: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Compute(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Param(_) | Error::Format(_) => CliError::Usage(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

struct Output {
    value: Value,
    plain: String,
    csv: Option<String>,
}

impl Settings {
    fn k(&self) -> CliResult<usize> {
        self.k.map_or_else(|| usage("--k is required"), Ok)
    }
    fn d(&self) -> CliResult<f64> {
        self.d.map_or_else(|| usage("--d is required"), Ok)
    }
    fn n(&self) -> CliResult<usize> {
        self.n.map_or_else(|| usage("--n is required"), Ok)
    }
    fn seed(&self) -> CliResult<u64> {
        self.seed.map_or_else(|| usage("this command is randomized and needs --seed"), Ok)
    }
    fn profile(&self, k: usize) -> CliResult<ConstantsProfile> {
        Ok(ConstantsProfile::by_name(&self.profile, k)?)
    }
}

fn load_config(path: Option<&PathBuf>) -> CliResult<ConfigFile> {
    let path = match path {
        Some(p) => Some(p.clone()),
        None => std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
    };
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

fn merge(c: &Common, f: ConfigFile) -> Settings {
    Settings {
        k: c.k.or(f.k),
        d: c.d.or(f.d),
        n: c.n.or(f.n),
        m: c.m.or(f.m),
        s: c.s.or(f.s),
        seed: c.seed.or(f.seed),
        trials: c.trials.or(f.trials),
        budget: c.budget.or(f.budget).unwrap_or(DEFAULT_BUDGET),
        profile: c.profile.clone().or(f.profile).unwrap_or_else(|| "desk".into()),
        workers: c.workers.or(f.workers),
    }
}

/// Argument list without the options that must not affect output.
fn recorded_command(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(1) {
        if skip {
            skip = false;
            continue;
        }
        if a == "--workers" || a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--workers=") || a.starts_with("--out=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

fn read_matrix(source: &str, k: Option<usize>, s: Option<usize>) -> CliResult<OverlapMatrix> {
    if let Ok(kind) = source.parse::<SpecialKind>() {
        let Some(k) = k else { return usage("--k is required for named matrices") };
        return Ok(matrix::special_matrix(kind, k, s)?);
    }
    let text = if source.trim_start().starts_with('{') {
        source.to_string()
    } else {
        std::fs::read_to_string(source).map_err(|e| CliError::Usage(format!("cannot read matrix {source}: {e}")))?
    };
    Ok(OverlapMatrix::from_json(&text)?)
}

fn read_file(p: &PathBuf) -> CliResult<String> {
    std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))
}

/// A graph and colouring from files, or a planted sample.
fn instance(st: &Settings, graph: &Option<PathBuf>, coloring: &Option<PathBuf>) -> CliResult<(Graph, Coloring, Value)> {
    match (graph, coloring) {
        (Some(g), Some(c)) => {
            let g = Graph::from_json(&read_file(g)?)?;
            let c = Coloring::from_json(&read_file(c)?)?;
            Ok((g, c, json!({"source": "files"})))
        }
        (None, None) => {
            let (n, k, d, seed) = (st.n()?, st.k()?, st.d()?, st.seed()?);
            let sigma = graph::random_balanced(n, k, seed)?;
            let mut p = ModelParams::new(k, d)?.with_n(n);
            if let Some(m) = st.m {
                p = p.with_m(m);
            }
            let g = graph::sample_graph(Model::PlantedM, &p, Some(&sigma), seed.wrapping_add(1))?;
            Ok((g, sigma, json!({"source": "planted_m", "m": p.m})))
        }
        _ => usage("give both --graph and --coloring, or neither"),
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn cmd_thresholds(st: &Settings, k_max: Option<usize>) -> CliResult<Output> {
    let k = st.k()?;
    let hi = k_max.unwrap_or(k);
    if hi < k {
        return usage("--k-max must be at least --k");
    }
    let tables: Vec<thresholds::ThresholdTable> = (k..=hi).map(thresholds::thresholds).collect::<Result<_>>()?;
    let csv = thresholds::thresholds_csv(k..=hi)?;
    let plain = tables
        .iter()
        .map(|t| {
            format!(
                "k={} d_AN={} d_cond={} d_first_refined={} d_first={} window=({}, {})",
                t.k, t.d_an, t.d_cond, t.d_first_refined, t.d_first, t.window_lo, t.window_hi
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let value = if tables.len() == 1 {
        let mut v = to_value(&tables[0]);
        v["stable_crossover"] = to_value(&variational::stable_crossover(k, 1e-12)?);
        if let Some(d) = st.d {
            v["window_hit"] = to_value(&thresholds::chromatic_window(d, 3));
        }
        v
    } else {
        to_value(&tables)
    };
    Ok(Output { value, plain, csv: Some(csv) })
}

fn cmd_fvalue(st: &Settings, source: &str) -> CliResult<Output> {
    let rho = read_matrix(source, st.k, st.s)?;
    let params = ModelParams::new(rho.k(), st.d()?)?;
    let f = matrix::f_value(&rho, &params)?;
    let region = matrix::classify_region(&rho, &st.profile(rho.k())?);
    Ok(Output {
        value: json!({"k": rho.k(), "d": params.d, "matrix": source, "f": f, "region": to_value(&region)}),
        plain: format!("{f}"),
        csv: None,
    })
}

fn cmd_certify(st: &Settings, regions: &Option<Vec<usize>>, max_iter: Option<usize>) -> CliResult<Output> {
    let (k, d, seed) = (st.k()?, st.d()?, st.seed()?);
    let params = ModelParams::new(k, d)?;
    let mut cfg = AscentConfig::new(k, seed);
    cfg.profile = st.profile(k)?;
    if let Some(t) = st.trials {
        cfg.multistart_count = t;
    }
    if let Some(it) = max_iter {
        cfg.max_iterations = it;
    }
    let rep = variational::certify_barycenter_max(&params, &cfg, regions.as_deref())?;
    let plain = format!(
        "best f = {} in region s={} (f(barycenter) = {}, margin {}); {} starts; barycenter winner: {}",
        rep.best_value, rep.best_region, rep.reference_value, rep.margin, rep.starts_run, rep.converged_to_barycenter
    );
    Ok(Output { value: to_value(&rep), plain, csv: None })
}

fn cmd_hessian(st: &Settings) -> CliResult<Output> {
    let params = ModelParams::new(st.k()?, st.d()?)?;
    let rep = variational::hessian_at_barycenter(&params)?;
    let plain = format!("c = {}; max eigenvalue error {}; negative definite: {}", rep.closed_form_c, rep.max_eigen_error, rep.negative_definite);
    Ok(Output { value: to_value(&rep), plain, csv: None })
}

fn cmd_sample(st: &Settings, model: &str) -> CliResult<Output> {
    let model: Model = model.parse()?;
    let (n, k, d, seed) = (st.n()?, st.k()?, st.d()?, st.seed()?);
    let mut p = ModelParams::new(k, d)?.with_n(n);
    if let Some(m) = st.m {
        p = p.with_m(m);
    }
    let sigma = match model {
        Model::PlantedM | Model::PlantedP => Some(graph::random_balanced(n, k, seed)?),
        _ => None,
    };
    let g = graph::sample_graph(model, &p, sigma.as_ref(), seed.wrapping_add(1))?;
    let plain = g.edges().iter().map(|(u, v)| format!("{u} {v}")).collect::<Vec<_>>().join("\n");
    let csv = std::iter::once("u,v".to_string()).chain(g.edges().iter().map(|(u, v)| format!("{u},{v}"))).collect::<Vec<_>>().join("\n") + "\n";
    Ok(Output {
        value: json!({"model": to_value(&model), "graph": g.to_value(), "sigma": sigma.map(|s| to_value(&s))}),
        plain,
        csv: Some(csv),
    })
}

fn cmd_moments(st: &Settings, order: u8, exact: bool, balanced: bool, all_m: bool) -> CliResult<Output> {
    let (n, k) = (st.n()?, st.k()?);
    let reports = if all_m {
        moments::exact_moment_all_m(n, k, order, balanced, st.budget)?
    } else {
        let m = st.m.map_or_else(|| usage("--m is required"), Ok)?;
        if exact || st.trials.is_none() {
            vec![moments::exact_moment(n, m, k, order, balanced, st.budget)?]
        } else {
            let seed = st.seed()?;
            vec![moments::mc_moment(n, m, k, order, balanced, st.trials.unwrap_or(1), seed, st.budget)?]
        }
    };
    let csv = moments::moments_csv(&reports)?;
    let plain = match reports.as_slice() {
        [r] if r.std_error.is_none() => r.value_string(),
        [r] => format!("{} {}", r.value_string(), r.std_error.unwrap_or(0.0)),
        rs => rs.iter().map(|r| format!("{} {}", r.m, r.value_string())).collect::<Vec<_>>().join("\n"),
    };
    let value = if reports.len() == 1 { to_value(&reports[0]) } else { to_value(&reports) };
    Ok(Output { value, plain, csv: Some(csv) })
}

fn cmd_cluster(st: &Settings, g: &Option<PathBuf>, c: &Option<PathBuf>) -> CliResult<Output> {
    let (g, sigma, source) = instance(st, g, c)?;
    let k = sigma.k();
    let prof = st.profile(k)?;
    let core = peel::core(&g, &sigma, &prof)?;
    let census = peel::vertex_census(&g, &sigma, &core.core_vertices, &prof)?;
    let bound = peel::cluster_bound(&census, k);
    let cl = graph::cluster(&g, &sigma, &prof, st.budget)?;
    let frozen = census.sigma_complete.iter().all(|&v| cl.members.iter().all(|t| t.color(v) == sigma.color(v)));
    let size = cl.size();
    let holds = num_bigint::BigUint::from(size) <= bound;
    let plain = format!("cluster size {size}; bound {bound}; complete vertices frozen: {frozen}; bound holds: {holds}");
    Ok(Output {
        value: json!({
            "instance": source,
            "cluster_size": size,
            "bound": bound.to_string(),
            "complete_vertices_frozen": frozen,
            "bound_holds": holds,
            "census": to_value(&census),
            "profile": to_value(&prof),
        }),
        plain,
        csv: None,
    })
}

fn cmd_core(st: &Settings, g: &Option<PathBuf>, c: &Option<PathBuf>) -> CliResult<Output> {
    let (g, sigma, source) = instance(st, g, c)?;
    let prof = st.profile(sigma.k())?;
    let core = peel::core(&g, &sigma, &prof)?;
    let cr = peel::cr_sets(&g, &sigma, &prof)?;
    let census = peel::vertex_census(&g, &sigma, &core.core_vertices, &prof)?;
    let inside = cr.remainder(g.n()).iter().all(|v| core.core_vertices.contains(v));
    let mode = CheckMode::Auto { budget: st.budget, trials: st.trials.unwrap_or(200), seed: st.seed.unwrap_or(0) };
    let mut props = serde_json::Map::new();
    for p in [Property::P1, Property::P2, Property::P3, Property::P4] {
        props.insert(format!("{p:?}"), to_value(&peel::check_property(&g, Some(&sigma), p, &prof, mode)?));
    }
    let plain = format!(
        "core {} of {} vertices; |W| = {}, |U| = {}, |Z| = {}; remainder inside core: {inside}; |F1| = {}, |F2| = {}",
        core.core_vertices.len(),
        g.n(),
        cr.w_union.len(),
        cr.u.len(),
        cr.z.len(),
        census.f1.len(),
        census.f2.len()
    );
    Ok(Output {
        value: json!({
            "instance": source,
            "core": to_value(&core),
            "cr_sets": to_value(&cr),
            "census": to_value(&census),
            "remainder_inside_core": inside,
            "properties": Value::Object(props),
        }),
        plain,
        csv: None,
    })
}

fn cmd_partition(st: &Settings, source: &str, eta: f64) -> CliResult<Output> {
    let rho = read_matrix(source, st.k, st.s)?;
    let label = moments::laplace_partition(&rho, eta, &st.profile(rho.k())?)?;
    Ok(Output { value: to_value(&label), plain: format!("{:?}", label.label), csv: None })
}

fn cmd_xi(st: &Settings, points: usize) -> CliResult<Output> {
    let xi = XiProfile::new(st.k()?)?;
    let check = xi.grid_check(points);
    let half = xi.k as f64 / 2.0;
    let mut csv = String::from("b,xi,xi_prime\n");
    for i in 1..=points {
        let b = half * i as f64 / (points + 1) as f64;
        csv.push_str(&format!("{b},{},{}\n", xi.xi(b), xi.xi_prime(b)));
    }
    let plain = format!("mu = {}; sign changes {}; near {:?}", xi.mu, check.sign_changes, check.sign_change_near);
    Ok(Output { value: json!({"profile": to_value(&xi), "check": to_value(&check)}), plain, csv: Some(csv) })
}

fn dispatch(cmd: &Cmd, st: &Settings) -> CliResult<Output> {
    match cmd {
        Cmd::Thresholds { k_max } => cmd_thresholds(st, *k_max),
        Cmd::Fvalue { matrix } => cmd_fvalue(st, matrix),
        Cmd::Certify { regions, max_iterations } => cmd_certify(st, regions, *max_iterations),
        Cmd::Hessian => cmd_hessian(st),
        Cmd::Sample { model } => cmd_sample(st, model),
        Cmd::Moments { order, exact, balanced, all_m } => cmd_moments(st, *order, *exact, *balanced, *all_m),
        Cmd::Cluster { graph, coloring } => cmd_cluster(st, graph, coloring),
        Cmd::Core { graph, coloring } => cmd_core(st, graph, coloring),
        Cmd::Partition { matrix, eta } => cmd_partition(st, matrix, *eta),
        Cmd::Xi { points } => cmd_xi(st, *points),
    }
}

fn render(cli: &Cli, st: &Settings, argv: &[String], out: Output) -> CliResult<String> {
    if cli.common.csv {
        return out.csv.map_or_else(|| usage("this command has no CSV form"), Ok);
    }
    if !cli.common.json {
        return Ok(out.plain + "\n");
    }
    let manifest = RunManifest {
        command: recorded_command(argv),
        config: to_value(st),
        seed: st.seed,
        profile: st.profile.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: std::env::var("SOURCE_DATE_EPOCH").ok(),
    };
    let doc = json!({"manifest": to_value(&manifest), "result": out.value});
    Ok(serde_json::to_string_pretty(&doc).expect("json") + "\n")
}

fn execute(argv: &[String], stdout: &mut dyn Write) -> CliResult<()> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string()));
        }
    };
    let st = merge(&cli.common, load_config(cli.common.config.as_ref())?);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = st.workers {
        if w == 0 {
            return usage("--workers must be at least 1");
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Compute(Error::Param(e.to_string())))?;
    let out = pool.install(|| dispatch(&cli.cmd, &st))?;
    let text = render(&cli, &st, argv, out)?;
    match &cli.common.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Compute(Error::Io(e))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Compute(Error::Io(e))),
    }
}

/// Runs the command line `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on a computation or output error, 2 on a usage error.
pub fn run_with_io(argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match execute(argv, stdout) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "{}", msg.trim_end());
            let _ = writeln!(stderr, "usage: colorlab <thresholds|fvalue|certify|hessian|sample|moments|cluster|core|partition|xi> [options]");
            2
        }
        Err(CliError::Compute(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn run(argv: &[String]) -> i32 {
    run_with_io(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
