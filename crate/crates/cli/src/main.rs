//! Command-line interface: generate synthetic cache dumps, compress them,
//! benchmark methods across eviction ratios, run the ablation grid, sweep
//! scoring knobs, and inspect per-head router behavior.
//!
//! Data goes to --out (or stdout); diagnostics go to stderr. Exit codes:
//! 0 success, 2 usage error, 1 runtime error. Identical flags produce
//! byte-identical outputs at any --threads setting.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nestedkv_core::allocator::compress;
use nestedkv_core::baselines::Method;
use nestedkv_core::config::EngineConfig;
use nestedkv_core::router::nestedkv_trace;
use nestedkv_core::synthbench::{
    generate, run_bench, run_sweep, BenchConfig, GeneratorKind, NeedlePlacement, SweepConfig,
    SweepKnob, SynthSpec,
};
use nestedkv_core::tensor::{
    read_layer_keys, read_manifest, retained_to_string, write_layer_keys, write_manifest,
    write_retained, CacheManifest,
};

#[derive(Parser)]
#[command(
    name = "nestedkv",
    version,
    about = "Training-free KV-cache compression engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic key dump: manifest, binary layers, planted set
    Gen(GenArgs),
    /// Compress a dumped cache into a retained-index JSON
    Compress(CompressArgs),
    /// Benchmark methods across eviction ratios on a synthetic stream
    Bench(BenchArgs),
    /// Run the four-variant ablation grid (full / no-adaptive / no-continuum / neither)
    Ablate(AblateArgs),
    /// Sweep one scoring knob around its default on a fixed stream
    Sweep(SweepArgs),
    /// Report per-head router diagnostics for a dumped cache
    Inspect(InspectArgs),
}

/// Scoring constants; defaults reproduce the fixed engine configuration.
#[derive(Args)]
struct ScoringArgs {
    /// Blend temperature on the reliability gaps [default: 3.0]
    #[arg(long)]
    beta: Option<f64>,
    /// Surprise-gate threshold [default: 0.6]
    #[arg(long)]
    tau: Option<f64>,
    /// Surprise-gate sharpness [default: 10.0]
    #[arg(long)]
    kappa: Option<f64>,
    /// Channel prior "stable,episodic,current"; positive, sums to 1 [default: 0.4,0.4,0.2]
    #[arg(long)]
    prior: Option<String>,
    /// Current-anchor window length [default: 64]
    #[arg(long)]
    window: Option<usize>,
    /// Pinned sink positions [default: 4]
    #[arg(long = "n-sink")]
    n_sink: Option<usize>,
    /// Per-head safeguard fraction for competitive allocation [default: 0.2]
    #[arg(long = "alpha-s")]
    alpha_s: Option<f64>,
}

impl ScoringArgs {
    fn engine(&self) -> Result<EngineConfig, Failure> {
        let mut cfg = EngineConfig::default();
        if let Some(b) = self.beta {
            cfg.scoring.beta = b;
        }
        if let Some(t) = self.tau {
            cfg.scoring.tau = t;
        }
        if let Some(k) = self.kappa {
            cfg.scoring.kappa = k;
        }
        if let Some(p) = &self.prior {
            let vals = parse_list::<f64>(p, "--prior")?;
            if vals.len() != 3 {
                return Err(Failure::Usage(format!(
                    "--prior needs exactly three comma-separated floats, got {}",
                    vals.len()
                )));
            }
            cfg.scoring.prior = [vals[0], vals[1], vals[2]];
        }
        if let Some(w) = self.window {
            cfg.scoring.window = w;
        }
        if let Some(s) = self.n_sink {
            cfg.scoring.n_sink = s;
        }
        if let Some(a) = self.alpha_s {
            cfg.alloc.safeguard = a;
        }
        cfg.validate()
            .map_err(|e| Failure::Usage(format!("scoring flags: {e}")))?;
        Ok(cfg)
    }
}

/// Synthetic stream shape shared by gen, bench, ablate, and sweep.
#[derive(Args)]
struct StreamArgs {
    /// Stream generator: global_needle, episodic_needle, current_needle, uniform_noise
    #[arg(long, default_value = "global_needle")]
    generator: String,
    /// Tokens per stream
    #[arg(long, default_value_t = 2048)]
    n: usize,
    /// Key dimension
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// KV heads
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// Needles to plant (ignored by uniform_noise)
    #[arg(long, default_value_t = 16)]
    needles: usize,
    /// Explicit needle positions "10,30,..." (overrides --needles)
    #[arg(long = "needle-positions")]
    needle_positions: Option<String>,
    /// Gaussian noise applied before re-normalization
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    /// Current-needle drift: total direction sweep in units of pi radians
    #[arg(long, default_value_t = 1.2)]
    drift: f64,
}

impl StreamArgs {
    fn spec(&self, seed: u64, n_sink: usize) -> Result<SynthSpec, Failure> {
        let kind = GeneratorKind::from_str(&self.generator)
            .map_err(|e| Failure::Usage(format!("--generator: {e}")))?;
        let mut spec = SynthSpec::new(kind, self.n, self.d, self.heads, seed);
        spec.noise_sigma = self.sigma;
        spec.drift = self.drift;
        spec.n_sink = n_sink;
        spec.needles = match &self.needle_positions {
            Some(list) => {
                NeedlePlacement::Positions(parse_list::<usize>(list, "--needle-positions")?)
            }
            None => NeedlePlacement::Count(self.needles),
        };
        Ok(spec)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Layers to emit (layer i reuses the planted set with a derived seed)
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Sink prefix the generator must avoid planting on
    #[arg(long = "n-sink", default_value_t = 4)]
    n_sink: usize,
    /// Directory for manifest.json, keys_layer{i}.bin, planted.json
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct CompressArgs {
    /// Manifest of the dumped cache
    #[arg(long)]
    input: PathBuf,
    /// Eviction ratio in [0, 1)
    #[arg(long)]
    ratio: f64,
    /// nestedkv, nestedkv_uniform, single_anchor_adaptive, single_anchor_uniform, recency, random
    #[arg(long, default_value = "nestedkv")]
    method: String,
    /// Output path for the retained-index JSON (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Comma-separated eviction ratios
    #[arg(long, default_value = "0.25,0.5,0.75")]
    ratios: String,
    /// Comma-separated methods (default: all six)
    #[arg(long)]
    methods: Option<String>,
    /// Probe queries for mass retention
    #[arg(long, default_value_t = 16)]
    queries: usize,
    /// Output path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Comma-separated eviction ratios
    #[arg(long, default_value = "0.25,0.5,0.75")]
    ratios: String,
    /// Probe queries for mass retention
    #[arg(long, default_value_t = 16)]
    queries: usize,
    /// Output path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Knob to sweep: beta, tau, kappa, prior_ws, window_W, block_clip, block_fraction
    #[arg(long)]
    knob: String,
    /// Comma-separated values (block_clip uses lo:hi items); default is one
    /// step either side of the knob's default
    #[arg(long)]
    values: Option<String>,
    #[command(flatten)]
    stream: StreamArgs,
    /// Eviction ratio for every sweep cell
    #[arg(long, default_value_t = 0.75)]
    ratio: f64,
    /// Probe queries for mass retention
    #[arg(long, default_value_t = 16)]
    queries: usize,
    /// Output path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Args)]
struct InspectArgs {
    /// Manifest of the dumped cache
    #[arg(long)]
    input: PathBuf,
    /// Restrict to one layer (all layers if omitted)
    #[arg(long)]
    layer: Option<usize>,
    /// Output path for the diagnostics JSON (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    scoring: ScoringArgs,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn runtime(err: impl Display) -> Self {
        Failure::Runtime(err.to_string())
    }
}

fn parse_list<T: FromStr>(text: &str, flag: &str) -> Result<Vec<T>, Failure> {
    text.split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<T>()
                .map_err(|_| Failure::Usage(format!("{flag}: cannot parse `{}`", piece.trim())))
        })
        .collect()
}

fn parse_ratios(text: &str) -> Result<Vec<f64>, Failure> {
    let ratios = parse_list::<f64>(text, "--ratios")?;
    for &r in &ratios {
        if !(0.0..1.0).contains(&r) {
            return Err(Failure::Usage(format!("--ratios: {r} outside [0, 1)")));
        }
    }
    Ok(ratios)
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Failure::Runtime(format!("cannot write `{}`: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn pick_format<'a>(format: &str, csv: &'a str, json: &'a str) -> Result<&'a str, Failure> {
    match format {
        "csv" => Ok(csv),
        "json" => Ok(json),
        other => Err(Failure::Usage(format!(
            "--format: unknown format `{other}`"
        ))),
    }
}

fn main() {
    let cli = Cli::parse();
    let exit = match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(exit);
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let threads = match &cli.command {
        Command::Gen(a) => a.threads,
        Command::Compress(a) => a.threads,
        Command::Bench(a) => a.threads,
        Command::Ablate(a) => a.threads,
        Command::Sweep(a) => a.threads,
        Command::Inspect(a) => a.threads,
    };
    if threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(Failure::runtime)?;
        pool.install(|| run(cli))
    } else {
        run(cli)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Compress(args) => cmd_compress(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_add((layer as u64).wrapping_mul(0x9e3779b97f4a7c15))
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    if args.layers == 0 {
        return Err(Failure::Usage("--layers must be >= 1".into()));
    }
    let spec = args.stream.spec(args.seed, args.n_sink)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| {
        Failure::Runtime(format!("cannot create `{}`: {e}", args.out_dir.display()))
    })?;

    // Layer 0 as specified; later layers reuse its planted positions with
    // derived seeds so every layer hides the same needles.
    let first = generate(&spec).map_err(Failure::runtime)?;
    let mut layer_files = Vec::with_capacity(args.layers);
    for layer in 0..args.layers {
        let stream = if layer == 0 {
            first.clone()
        } else {
            let mut later = spec.clone();
            later.seed = layer_seed(args.seed, layer);
            later.needles = NeedlePlacement::Positions(first.planted.clone());
            generate(&later).map_err(Failure::runtime)?
        };
        let file = format!("keys_layer{layer}.bin");
        write_layer_keys(&stream.heads, &args.out_dir.join(&file)).map_err(Failure::runtime)?;
        layer_files.push(file);
    }

    let manifest = CacheManifest::new(
        args.layers,
        args.stream.heads,
        args.stream.n,
        args.stream.d,
        layer_files,
        args.out_dir.clone(),
    )
    .map_err(Failure::runtime)?;
    write_manifest(&manifest, &args.out_dir.join("manifest.json")).map_err(Failure::runtime)?;

    let planted_doc = serde_json::json!({
        "generator": spec.kind.name(),
        "seed": args.seed,
        "planted": first.planted,
    });
    let mut text = serde_json::to_string_pretty(&planted_doc).expect("planted set serializes");
    text.push('\n');
    std::fs::write(args.out_dir.join("planted.json"), text)
        .map_err(|e| Failure::Runtime(format!("cannot write planted.json: {e}")))?;
    Ok(())
}

fn cmd_compress(args: CompressArgs) -> Result<(), Failure> {
    if !(0.0..1.0).contains(&args.ratio) {
        return Err(Failure::Usage(format!(
            "--ratio: {} outside [0, 1)",
            args.ratio
        )));
    }
    let method =
        Method::from_str(&args.method).map_err(|e| Failure::Usage(format!("--method: {e}")))?;
    let engine = args.scoring.engine()?;
    let manifest = read_manifest(&args.input).map_err(Failure::runtime)?;
    let retained =
        compress(&manifest, method, args.ratio, &engine, args.seed).map_err(Failure::runtime)?;

    let echo = serde_json::json!({
        "method": method.name(),
        "ratio": args.ratio,
        "seed": args.seed,
        "scoring": engine.scoring,
        "alloc": engine.alloc,
    });
    match &args.out {
        Some(path) => write_retained(&retained, &echo, path).map_err(Failure::runtime),
        None => {
            print!("{}", retained_to_string(&retained, &echo));
            Ok(())
        }
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let engine = args.scoring.engine()?;
    let spec = args.stream.spec(args.seed, engine.scoring.n_sink)?;
    let ratios = parse_ratios(&args.ratios)?;
    let methods = match &args.methods {
        Some(list) => list
            .split(',')
            .map(|m| {
                Method::from_str(m.trim()).map_err(|e| Failure::Usage(format!("--methods: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => Method::ALL.to_vec(),
    };
    let mut cfg = BenchConfig::new(methods, ratios, vec![spec]);
    cfg.engine = engine;
    cfg.query_count = args.queries;
    let report = run_bench(&cfg).map_err(Failure::runtime)?;
    let (csv, json) = (report.to_csv(), report.to_json());
    emit(&args.out, pick_format(&args.format, &csv, &json)?)
}

fn cmd_ablate(args: AblateArgs) -> Result<(), Failure> {
    let engine = args.scoring.engine()?;
    let spec = args.stream.spec(args.seed, engine.scoring.n_sink)?;
    let ratios = parse_ratios(&args.ratios)?;
    let mut cfg = BenchConfig::new(Method::ABLATION.to_vec(), ratios, vec![spec]);
    cfg.engine = engine;
    cfg.query_count = args.queries;
    let report = run_bench(&cfg).map_err(Failure::runtime)?;
    let (csv, json) = (report.to_csv(), report.to_json());
    emit(&args.out, pick_format(&args.format, &csv, &json)?)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    if !(0.0..1.0).contains(&args.ratio) {
        return Err(Failure::Usage(format!(
            "--ratio: {} outside [0, 1)",
            args.ratio
        )));
    }
    let knob =
        SweepKnob::from_str(&args.knob).map_err(|e| Failure::Usage(format!("--knob: {e}")))?;
    let engine = args.scoring.engine()?;
    let spec = args.stream.spec(args.seed, engine.scoring.n_sink)?;
    let mut cfg = SweepConfig::new(knob, spec, args.ratio);
    cfg.engine = engine;
    cfg.query_count = args.queries;
    if let Some(values) = &args.values {
        cfg.values = values
            .split(',')
            .map(|v| {
                knob.parse_value(v.trim())
                    .map_err(|e| Failure::Usage(format!("--values: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
    }
    let report = run_sweep(&cfg).map_err(Failure::runtime)?;
    let (csv, json) = (report.to_csv(), report.to_json());
    emit(&args.out, pick_format(&args.format, &csv, &json)?)
}

fn cmd_inspect(args: InspectArgs) -> Result<(), Failure> {
    let engine = args.scoring.engine()?;
    let manifest = read_manifest(&args.input).map_err(Failure::runtime)?;
    let layers: Vec<usize> = match args.layer {
        Some(l) if l >= manifest.n_layers => {
            return Err(Failure::Usage(format!(
                "--layer: {l} out of range for {} layers",
                manifest.n_layers
            )));
        }
        Some(l) => vec![l],
        None => (0..manifest.n_layers).collect(),
    };

    let mut layer_docs = Vec::with_capacity(layers.len());
    for layer in layers {
        let heads = read_layer_keys(&manifest, layer).map_err(Failure::runtime)?;
        let mut head_docs = Vec::with_capacity(heads.len());
        for ks in &heads {
            let trace = nestedkv_trace(ks, &engine.scoring).map_err(Failure::runtime)?;
            head_docs
                .push(serde_json::to_value(trace.diagnostics()).expect("diagnostics serialize"));
        }
        layer_docs.push(serde_json::json!({ "layer": layer, "heads": head_docs }));
    }
    let doc = serde_json::json!({ "layers": layer_docs });
    let mut text = serde_json::to_string_pretty(&doc).expect("diagnostics serialize");
    text.push('\n');
    emit(&args.out, &text)
}
