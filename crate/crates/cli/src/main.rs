//! `prodmeasure` command-line tool.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prodmeasure::ingest::{
    feature_system_measure, points_to_measure, series_to_measure, FeatureSystem, HypercubeSystem, LabeledCells,
};
use prodmeasure::io::{self, fmt_f64};
use prodmeasure::noise::{
    apply_noise, check_kahane, noisy_coefficient_stats, sample_seed, stats_to_csv, NoiseParams, KAHANE_BOUND,
};
use prodmeasure::stats::{average_coefficients, norm_distance};
use prodmeasure::viz::{
    day_wheel, knot_labels, pseudo_welding_curve, render_curve_svg, render_wheel_svg, Colormap, CurveStyle,
    NodeLabels, WheelStyle,
};
use prodmeasure::{CoefficientTree, LeafMeasure};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

const LEAF_WARNING_THRESHOLD: f64 = 1e7;
const DEFAULT_POINT_DEPTH: u32 = 8;
const DEFAULT_DIRAC_DEPTH: u32 = 8;
const DEFAULT_SAMPLES: u64 = 1000;
const DEFAULT_MAX_SCALE: u32 = 6;

#[derive(Parser, Debug)]
#[command(name = "prodmeasure", version, about = "Product-coefficient representation of measures on dyadic sets")]
struct Cli {
    /// JSON file of default flag values (e.g. {"depth": 6, "seed": 3}); explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute product coefficients from a series, a point cloud, or a feature table.
    Coeffs(CoeffsArgs),
    /// Rebuild leaf masses from a coefficient file.
    Reconstruct(ReconstructArgs),
    /// Multi-scale variance-norm distance between two coefficient files.
    Distance(DistanceArgs),
    /// Average coefficient files into a class representative.
    Infer(InferArgs),
    /// Sample the multiscale noise model on a coefficient file.
    Noise(NoiseArgs),
    /// Render the pseudo-welding curve as SVG.
    Weld(WeldArgs),
    /// Render the day wheel as SVG.
    Wheel(WheelArgs),
    /// Coefficients of the point mass at x in [0, 1).
    Dirac(DiracArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn parse(s: &str) -> Result<Format, Failure> {
        <Format as ValueEnum>::from_str(s, true).map_err(|_| Failure::config(format!("unknown format '{s}'")))
    }
}

#[derive(Args, Debug)]
struct CoeffsArgs {
    /// Input file: one value per line (CSV) or a JSON array, unless --points or --features is set.
    input: PathBuf,
    /// Treat the input as a point CSV (numeric columns, optional trailing label).
    #[arg(long, conflicts_with = "features")]
    points: bool,
    /// Feature-system JSON; the input is then a numeric table evaluated row by row.
    #[arg(long, value_name = "FILE")]
    features: Option<PathBuf>,
    /// Tree depth [default: log2 of the series length rounded up; 8 for points; number of features].
    #[arg(long)]
    depth: Option<u32>,
    /// Output format [default: json].
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Halving order for points, 1-based and comma separated [default: 1,2,...,d].
    #[arg(long, value_delimiter = ',')]
    dim_order: Option<Vec<usize>>,
    /// Output file [default: stdout].
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    input: PathBuf,
    /// Leaf depth [default: the tree depth].
    #[arg(long)]
    depth: Option<u32>,
    /// Output format [default: csv].
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    a: PathBuf,
    b: PathBuf,
    /// Output format; csv prints the bare number [default: csv].
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct InferArgs {
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    input: PathBuf,
    /// Noise parameter JSON: {"mode": "per-scale"|"per-node", "depth": n, "sigmas": {...}}.
    #[arg(long, value_name = "FILE")]
    params: PathBuf,
    /// Base seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo samples for the coefficient statistics [default: 1000].
    #[arg(long)]
    samples: Option<u64>,
    /// Number of noisy trees to write [default: 1].
    #[arg(long)]
    realizations: Option<u64>,
    /// Output directory; receives noisy-NNNN.json and stats.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct WeldArgs {
    /// Coefficient JSON, or a labelled point CSV with --points.
    input: PathBuf,
    #[arg(long)]
    points: bool,
    /// Depth for point input [default: 8].
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    dim_order: Option<Vec<usize>>,
    /// Label treated as class A [default: first label in sorted order].
    #[arg(long)]
    class_a: Option<String>,
    /// Last scale drawn [default: min(6, depth - 1)].
    #[arg(long)]
    max_scale: Option<u32>,
    /// Also write the knots (x, y, scale, index, category) as CSV.
    #[arg(long, value_name = "FILE")]
    knots_csv: Option<PathBuf>,
    /// Canvas width in pixels [default: 800].
    #[arg(long)]
    width: Option<f64>,
    /// Canvas height in pixels [default: 480].
    #[arg(long)]
    height: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WheelArgs {
    input: PathBuf,
    /// Outermost ring scale [default: min(6, depth - 1)].
    #[arg(long)]
    max_scale: Option<u32>,
    /// diverging or jet [default: diverging].
    #[arg(long)]
    colormap: Option<String>,
    /// Wheel size in pixels [default: 480].
    #[arg(long)]
    size: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiracArgs {
    #[arg(allow_hyphen_values = true)]
    x: f64,
    /// Tree depth [default: 8].
    #[arg(long)]
    depth: Option<u32>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// A failed run: machine-readable kind plus message.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            kind: "config",
            message: message.into(),
        }
    }
}

impl From<prodmeasure::Error> for Failure {
    fn from(e: prodmeasure::Error) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

trait Context<T> {
    fn in_file(self, path: &Path) -> Result<T, Failure>;
}

impl<T> Context<T> for prodmeasure::Result<T> {
    fn in_file(self, path: &Path) -> Result<T, Failure> {
        self.map_err(|e| {
            let mut f = Failure::from(e);
            let shown = path.display().to_string();
            if !f.message.starts_with(&shown) {
                f.message = format!("{shown}: {}", f.message);
            }
            f
        })
    }
}

/// Defaults read from `--config`.
struct Defaults(Map<String, Value>);

impl Defaults {
    fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Defaults(Map::new()));
        };
        let text = io::read_text(path)?;
        match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => Ok(Defaults(map)),
            Ok(_) => Err(Failure::config(format!("{}: config must be a JSON object", path.display()))),
            Err(e) => Err(Failure::config(format!("{}: {e}", path.display()))),
        }
    }

    /// Looks up a key, accepting either camelCase or kebab-case.
    fn get<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<Option<T>, Failure> {
        let kebab: String = key
            .chars()
            .flat_map(|c| {
                if c.is_ascii_uppercase() {
                    vec!['-', c.to_ascii_lowercase()]
                } else {
                    vec![c]
                }
            })
            .collect();
        match self.0.get(key).or_else(|| self.0.get(&kebab)) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| Failure::config(format!("config key '{key}': {e}"))),
        }
    }

    fn pick<T: serde::de::DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    fn format(&self, flag: Option<Format>, default: Format) -> Result<Format, Failure> {
        match flag {
            Some(f) => Ok(f),
            None => self.get::<String>("format")?.map_or(Ok(default), |s| Format::parse(&s)),
        }
    }
}

/// Resolved settings of one run. Serialized into every output and hashed.
struct RunConfig {
    command: &'static str,
    settings: Map<String, Value>,
}

impl RunConfig {
    fn new(command: &'static str) -> Self {
        RunConfig {
            command,
            settings: Map::new(),
        }
    }

    fn set(&mut self, key: &str, value: impl serde::Serialize) {
        self.settings
            .insert(key.to_string(), serde_json::to_value(value).expect("settings are serializable"));
    }

    fn to_value(&self) -> Value {
        json!({ "command": self.command, "settings": self.settings })
    }

    fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_value().to_string().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn provenance(&self) -> Value {
        json!({
            "tool": "prodmeasure",
            "version": env!("CARGO_PKG_VERSION"),
            "configHash": self.hash(),
            "config": self.to_value(),
        })
    }

    /// One-line provenance for comment headers.
    fn comment(&self) -> String {
        format!(
            "prodmeasure {} config-sha256 {} config {}",
            env!("CARGO_PKG_VERSION"),
            self.hash(),
            self.to_value()
        )
    }

    fn csv_header(&self) -> String {
        format!("# {}\n", self.comment())
    }

    fn svg(&self, svg: &str) -> String {
        let comment = self.comment().replace("--", "- -");
        match svg.find('>') {
            Some(end) => format!("{}\n<!-- {comment} -->{}", &svg[..=end], &svg[end + 1..]),
            None => svg.to_string(),
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => Ok(io::write_text(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn warn_if_large(depth: u32) {
    if 2f64.powi(depth as i32) > LEAF_WARNING_THRESHOLD {
        log::warn!("depth {depth} gives {} leaves; expect high memory use", 2f64.powi(depth as i32));
    }
}

fn one_based_order(order: Option<Vec<usize>>) -> Result<Option<Vec<usize>>, Failure> {
    order
        .map(|o| {
            o.into_iter()
                .map(|d| {
                    d.checked_sub(1)
                        .ok_or_else(|| Failure::config("dimension indices in --dim-order are 1-based"))
                })
                .collect()
        })
        .transpose()
}

fn ceil_log2(n: usize) -> u32 {
    n.next_power_of_two().trailing_zeros()
}

fn coeffs_to_csv(tree: &CoefficientTree, run: &RunConfig) -> String {
    let mut s = run.csv_header();
    let _ = writeln!(s, "# depth {}", tree.depth());
    let _ = writeln!(s, "# totalMass {}", fmt_f64(tree.total_mass()));
    s.push_str("scale,index,coefficient\n");
    for (node, a) in tree.coefficients() {
        let _ = writeln!(s, "{},{},{}", node.scale, node.index, fmt_f64(a));
    }
    s
}

fn cmd_coeffs(args: CoeffsArgs, defaults: &Defaults) -> Result<(), Failure> {
    let mut run = RunConfig::new("coeffs");
    let format = defaults.format(args.format, Format::Json)?;
    let depth: Option<u32> = defaults.pick(args.depth, "depth")?;
    let text = io::read_text(&args.input)?;
    run.set("input", path_str(&args.input));
    run.set("format", format!("{format:?}").to_lowercase());

    let tree = if let Some(features_path) = &args.features {
        let system = FeatureSystem::from_json(&io::read_text(features_path)?).in_file(features_path)?;
        if let Some(d) = depth.filter(|&d| d != system.depth()) {
            return Err(Failure::config(format!(
                "--depth {d} disagrees with the {} features",
                system.depth()
            )));
        }
        let table = io::parse_points_csv(&text, None).in_file(&args.input)?;
        run.set("features", path_str(features_path));
        run.set("depth", system.depth());
        feature_system_measure(&table.points, &system).in_file(&args.input)?
    } else if args.points || defaults.get::<bool>("points")?.unwrap_or(false) {
        let depth = depth.unwrap_or(DEFAULT_POINT_DEPTH);
        warn_if_large(depth);
        let order = one_based_order(defaults.pick(args.dim_order, "dimOrder")?)?;
        let table = io::parse_points_csv(&text, None).in_file(&args.input)?;
        let system = HypercubeSystem::fit(&table.points, order, depth).in_file(&args.input)?;
        run.set("points", true);
        run.set("depth", depth);
        run.set("system", &system);
        CoefficientTree::from_sparse(&points_to_measure(&table.points, &system).in_file(&args.input)?)?
    } else {
        let is_json = args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let values = if is_json {
            io::parse_values_json(&text)
        } else {
            io::parse_values_csv(&text)
        }
        .in_file(&args.input)?;
        let depth = depth.unwrap_or_else(|| ceil_log2(values.len().max(1)));
        warn_if_large(depth);
        run.set("depth", depth);
        CoefficientTree::from_leaves(&series_to_measure(&values, depth).in_file(&args.input)?)?
    };

    let out = match format {
        Format::Json => io::tree_to_json(&tree, Some(run.provenance())),
        Format::Csv => coeffs_to_csv(&tree, &run),
    };
    emit(args.output.as_deref(), &out)
}

fn cmd_reconstruct(args: ReconstructArgs, defaults: &Defaults) -> Result<(), Failure> {
    let tree = io::read_tree(&args.input).in_file(&args.input)?;
    let depth = defaults.pick(args.depth, "depth")?.unwrap_or(tree.depth());
    let format = defaults.format(args.format, Format::Csv)?;
    warn_if_large(depth);
    let leaves: LeafMeasure = tree.reconstruct_leaves(depth)?;
    let mut run = RunConfig::new("reconstruct");
    run.set("input", path_str(&args.input));
    run.set("depth", depth);
    run.set("format", format!("{format:?}").to_lowercase());
    let out = match format {
        Format::Csv => run.csv_header() + &io::leaves_to_csv(&leaves),
        Format::Json => {
            let doc = json!({
                "depth": depth,
                "masses": serde_json::from_str::<Value>(&io::leaves_to_json(&leaves)).expect("valid json"),
                "provenance": run.provenance(),
            });
            serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
        }
    };
    emit(args.output.as_deref(), &out)
}

fn cmd_distance(args: DistanceArgs, defaults: &Defaults) -> Result<(), Failure> {
    let a = io::read_tree(&args.a).in_file(&args.a)?;
    let b = io::read_tree(&args.b).in_file(&args.b)?;
    let d = norm_distance(&a, &b)?;
    let format = defaults.format(args.format, Format::Csv)?;
    match format {
        Format::Csv => println!("{}", fmt_f64(d)),
        Format::Json => {
            let mut run = RunConfig::new("distance");
            run.set("a", path_str(&args.a));
            run.set("b", path_str(&args.b));
            let doc = json!({ "distance": d, "provenance": run.provenance() });
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        }
    }
    Ok(())
}

fn cmd_infer(args: InferArgs) -> Result<(), Failure> {
    if args.inputs.is_empty() {
        return Err(Failure {
            kind: "domain",
            message: "infer needs at least one coefficient file".into(),
        });
    }
    let trees = args
        .inputs
        .iter()
        .map(|p| io::read_tree(p).in_file(p))
        .collect::<Result<Vec<_>, _>>()?;
    let average = average_coefficients(&trees)?;
    let mut run = RunConfig::new("infer");
    run.set("inputs", args.inputs.iter().map(|p| path_str(p)).collect::<Vec<_>>());
    emit(args.output.as_deref(), &io::tree_to_json(&average, Some(run.provenance())))
}

fn cmd_noise(args: NoiseArgs, defaults: &Defaults) -> Result<(), Failure> {
    let tree = io::read_tree(&args.input).in_file(&args.input)?;
    let params = NoiseParams::from_json(&io::read_text(&args.params)?).in_file(&args.params)?;
    let seed = defaults.pick(args.seed, "seed")?.unwrap_or(0);
    let samples = defaults.pick(args.samples, "samples")?.unwrap_or(DEFAULT_SAMPLES);
    let realizations = defaults.pick(args.realizations, "realizations")?.unwrap_or(1);

    let kahane = check_kahane(&params);
    if !kahane.holds {
        eprintln!("==============================================================");
        eprintln!(
            "warning: sup sigma^2 = {} is not below 2 ln 2 = {:.6}",
            fmt_f64(params.max_sigma_squared()),
            KAHANE_BOUND
        );
        eprintln!("the infinite-depth noise measure may be zero; finite-depth output is still written");
        eprintln!("==============================================================");
    }

    let mut run = RunConfig::new("noise");
    run.set("input", path_str(&args.input));
    run.set("params", serde_json::from_str::<Value>(&params.to_json()).expect("valid json"));
    run.set("seed", seed);
    run.set("samples", samples);
    run.set("realizations", realizations);

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Failure {
        kind: "io",
        message: format!("{}: {e}", args.out_dir.display()),
    })?;
    for i in 0..realizations {
        let noisy = apply_noise(&tree, &params, sample_seed(seed, i))?;
        let mut prov = run.provenance();
        prov["realization"] = json!(i);
        io::write_text(
            &args.out_dir.join(format!("noisy-{i:04}.json")),
            &io::tree_to_json(&noisy, Some(prov)),
        )?;
    }
    let stats = noisy_coefficient_stats(&tree, &params, samples, seed)?;
    io::write_text(
        &args.out_dir.join("stats.csv"),
        &(run.csv_header() + &stats_to_csv(&stats)),
    )?;
    Ok(())
}

fn default_max_scale(depth: u32) -> u32 {
    DEFAULT_MAX_SCALE.min(depth.saturating_sub(1))
}

fn cmd_weld(args: WeldArgs, defaults: &Defaults) -> Result<(), Failure> {
    let mut run = RunConfig::new("weld");
    run.set("input", path_str(&args.input));
    let (tree, labels): (CoefficientTree, Option<NodeLabels>) =
        if args.points || defaults.get::<bool>("points")?.unwrap_or(false) {
            let depth = defaults.pick(args.depth, "depth")?.unwrap_or(DEFAULT_POINT_DEPTH);
            warn_if_large(depth);
            let order = one_based_order(defaults.pick(args.dim_order, "dimOrder")?)?;
            let class_a: Option<String> = defaults.pick(args.class_a, "classA")?;
            let table = io::parse_points_csv(&io::read_text(&args.input)?, None).in_file(&args.input)?;
            let system = HypercubeSystem::fit(&table.points, order, depth).in_file(&args.input)?;
            run.set("system", &system);
            match table.labels {
                Some(labels) => {
                    let cells = LabeledCells::new(&table.points, &labels, &system, class_a.as_deref())
                        .in_file(&args.input)?;
                    run.set("classes", cells.classes());
                    let tree = CoefficientTree::from_sparse(&cells.measure()?)?;
                    (tree, Some(knot_labels(&cells)))
                }
                None => (
                    CoefficientTree::from_sparse(&points_to_measure(&table.points, &system).in_file(&args.input)?)?,
                    None,
                ),
            }
        } else {
            (io::read_tree(&args.input).in_file(&args.input)?, None)
        };
    let max_scale = defaults
        .pick(args.max_scale, "maxScale")?
        .unwrap_or_else(|| default_max_scale(tree.depth()));
    let mut style = CurveStyle::default();
    if let Some(w) = defaults.pick(args.width, "width")? {
        style.width = w;
    }
    if let Some(h) = defaults.pick(args.height, "height")? {
        style.height = h;
    }
    run.set("maxScale", max_scale);
    run.set("width", style.width);
    run.set("height", style.height);

    let curve = pseudo_welding_curve(&tree, max_scale, labels.as_ref())?;
    if let Some(path) = &args.knots_csv {
        io::write_text(path, &(run.csv_header() + &curve.to_csv()))?;
    }
    emit(args.output.as_deref(), &run.svg(&render_curve_svg(&curve, &style)))
}

fn cmd_wheel(args: WheelArgs, defaults: &Defaults) -> Result<(), Failure> {
    let tree = io::read_tree(&args.input).in_file(&args.input)?;
    let max_scale = defaults
        .pick(args.max_scale, "maxScale")?
        .unwrap_or_else(|| default_max_scale(tree.depth()));
    let mut style = WheelStyle::default();
    if let Some(name) = defaults.pick(args.colormap, "colormap")? {
        style.colormap = name.parse::<Colormap>()?;
    }
    if let Some(size) = defaults.pick(args.size, "size")? {
        if !(size > 0.0 && size.is_finite()) {
            return Err(Failure::config(format!("size {size} must be positive")));
        }
        style.size = size;
    }
    let mut run = RunConfig::new("wheel");
    run.set("input", path_str(&args.input));
    run.set("maxScale", max_scale);
    run.set("colormap", format!("{:?}", style.colormap).to_lowercase());
    run.set("size", style.size);
    let wheel = day_wheel(&tree, max_scale)?;
    emit(args.output.as_deref(), &run.svg(&render_wheel_svg(&wheel, &style)))
}

fn cmd_dirac(args: DiracArgs, defaults: &Defaults) -> Result<(), Failure> {
    let depth = defaults.pick(args.depth, "depth")?.unwrap_or(DEFAULT_DIRAC_DEPTH);
    let tree = CoefficientTree::dirac(args.x, depth)?;
    let mut run = RunConfig::new("dirac");
    run.set("x", args.x);
    run.set("depth", depth);
    emit(args.output.as_deref(), &io::tree_to_json(&tree, Some(run.provenance())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let defaults = Defaults::load(cli.config.as_deref())?;
    match cli.command {
        Command::Coeffs(a) => cmd_coeffs(a, &defaults),
        Command::Reconstruct(a) => cmd_reconstruct(a, &defaults),
        Command::Distance(a) => cmd_distance(a, &defaults),
        Command::Infer(a) => cmd_infer(a),
        Command::Noise(a) => cmd_noise(a, &defaults),
        Command::Weld(a) => cmd_weld(a, &defaults),
        Command::Wheel(a) => cmd_wheel(a, &defaults),
        Command::Dirac(a) => cmd_dirac(a, &defaults),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message);
            ExitCode::FAILURE
        }
    }
}
