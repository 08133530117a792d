//! Benchmark and sweep runners: the full methods x ratios x streams grid,
//! with CSV and JSON reports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::allocator::compress_layer;
use crate::baselines::Method;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::router::nestedkv_trace;

use super::{default_queries, generate, mass_retention, needle_recall, SynthSpec};

/// The benchmark grid: every method is run at every ratio on every stream.
#[derive(Clone, Debug, Serialize)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub ratios: Vec<f64>,
    pub specs: Vec<SynthSpec>,
    pub engine: EngineConfig,
    pub query_count: usize,
}

impl BenchConfig {
    pub fn new(methods: Vec<Method>, ratios: Vec<f64>, specs: Vec<SynthSpec>) -> Self {
        Self {
            methods,
            ratios,
            specs,
            engine: EngineConfig::default(),
            query_count: 16,
        }
    }
}

/// One evaluated (method, ratio, stream, head) cell.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub method: &'static str,
    pub ratio: f64,
    pub generator: &'static str,
    pub seed: u64,
    pub head: usize,
    pub budget: usize,
    pub needle_recall: f64,
    pub mass_retention: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,ratio,generator,seed,head,budget,needle_recall,mass_retention\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.6},{},{},{},{},{:.6},{:.6}",
                r.method,
                r.ratio,
                r.generator,
                r.seed,
                r.head,
                r.budget,
                r.needle_recall,
                r.mass_retention
            )
            .expect("string write");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Mean recall and mass over heads for one (method, ratio, generator) cell.
    pub fn mean_cell(&self, method: &str, ratio: f64, generator: &str) -> Option<(f64, f64)> {
        let rows: Vec<&BenchRow> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.ratio == ratio && r.generator == generator)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|r| r.needle_recall).sum::<f64>() / n,
            rows.iter().map(|r| r.mass_retention).sum::<f64>() / n,
        ))
    }
}

/// Runs the full cross-product. Streams with no planted needles report a
/// vacuous recall of 1.0.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.engine.validate()?;
    for &r in &cfg.ratios {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidRatio(r));
        }
    }

    let mut rows = Vec::new();
    for spec in &cfg.specs {
        let stream = generate(spec)?;
        let queries: Vec<Vec<Vec<f64>>> = stream
            .heads
            .iter()
            .map(|h| default_queries(h, cfg.query_count))
            .collect();
        for &method in &cfg.methods {
            for &ratio in &cfg.ratios {
                let layer =
                    compress_layer(&stream.heads, method, ratio, &cfg.engine, spec.seed, 0)?;
                for (h, head) in layer.heads.iter().enumerate() {
                    let recall = if stream.planted.is_empty() {
                        1.0
                    } else {
                        needle_recall(&head.indices, &stream.planted)?
                    };
                    rows.push(BenchRow {
                        method: method.name(),
                        ratio,
                        generator: spec.kind.name(),
                        seed: spec.seed,
                        head: h,
                        budget: head.budget,
                        needle_recall: recall,
                        mass_retention: mass_retention(
                            &stream.heads[h],
                            &queries[h],
                            &head.indices,
                        ),
                    });
                }
            }
        }
    }
    Ok(BenchReport {
        config: cfg.clone(),
        rows,
    })
}

// ---- hyperparameter sweep ------------------------------------------------

/// One-knob sweep over the scoring configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SweepKnob {
    Beta,
    Tau,
    Kappa,
    PriorWs,
    Window,
    BlockClip,
    BlockFraction,
}

impl SweepKnob {
    pub const ALL: [SweepKnob; 7] = [
        SweepKnob::Beta,
        SweepKnob::Tau,
        SweepKnob::Kappa,
        SweepKnob::PriorWs,
        SweepKnob::Window,
        SweepKnob::BlockClip,
        SweepKnob::BlockFraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepKnob::Beta => "beta",
            SweepKnob::Tau => "tau",
            SweepKnob::Kappa => "kappa",
            SweepKnob::PriorWs => "prior_ws",
            SweepKnob::Window => "window_W",
            SweepKnob::BlockClip => "block_clip",
            SweepKnob::BlockFraction => "block_fraction",
        }
    }

    /// One step below and above the default, default included.
    pub fn default_values(self) -> Vec<KnobValue> {
        match self {
            SweepKnob::Beta => scalars(&[1.5, 3.0, 6.0]),
            SweepKnob::Tau => scalars(&[0.5, 0.6, 0.7]),
            SweepKnob::Kappa => scalars(&[5.0, 10.0, 20.0]),
            SweepKnob::PriorWs => scalars(&[0.3, 0.4, 0.5]),
            SweepKnob::Window => scalars(&[32.0, 64.0, 128.0]),
            SweepKnob::BlockClip => vec![
                KnobValue::Clip(64, 128),
                KnobValue::Clip(128, 256),
                KnobValue::Clip(256, 512),
            ],
            SweepKnob::BlockFraction => scalars(&[16.0, 32.0, 64.0]),
        }
    }

    /// The engine-default setting of this knob.
    pub fn default_value(self) -> KnobValue {
        match self {
            SweepKnob::Beta => KnobValue::Scalar(3.0),
            SweepKnob::Tau => KnobValue::Scalar(0.6),
            SweepKnob::Kappa => KnobValue::Scalar(10.0),
            SweepKnob::PriorWs => KnobValue::Scalar(0.4),
            SweepKnob::Window => KnobValue::Scalar(64.0),
            SweepKnob::BlockClip => KnobValue::Clip(128, 256),
            SweepKnob::BlockFraction => KnobValue::Scalar(32.0),
        }
    }

    /// Parses one value in the knob's own syntax (scalar, or `lo:hi` for the
    /// block clip).
    pub fn parse_value(self, s: &str) -> Result<KnobValue> {
        let bad = || Error::InvalidConfig(format!("cannot parse `{s}` for knob {}", self.name()));
        if self == SweepKnob::BlockClip {
            let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
            return Ok(KnobValue::Clip(
                lo.trim().parse().map_err(|_| bad())?,
                hi.trim().parse().map_err(|_| bad())?,
            ));
        }
        Ok(KnobValue::Scalar(s.trim().parse().map_err(|_| bad())?))
    }
}

impl FromStr for SweepKnob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::UnknownKnob(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum KnobValue {
    Scalar(f64),
    Clip(usize, usize),
}

impl KnobValue {
    pub fn label(&self) -> String {
        match self {
            KnobValue::Scalar(v) => format!("{v}"),
            KnobValue::Clip(lo, hi) => format!("{lo}:{hi}"),
        }
    }
}

fn scalars(vals: &[f64]) -> Vec<KnobValue> {
    vals.iter().map(|&v| KnobValue::Scalar(v)).collect()
}

/// Applies one knob setting to an engine config, leaving everything else at
/// its existing value. Moving the stable prior weight redistributes the
/// remainder over episodic and current in their default 2:1 proportion.
pub fn apply_knob(knob: SweepKnob, value: KnobValue, engine: &mut EngineConfig) -> Result<()> {
    let whole = |v: f64, what: &str| -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "{what} must be a positive integer, got {v}"
            )));
        }
        Ok(v as usize)
    };
    match (knob, value) {
        (SweepKnob::Beta, KnobValue::Scalar(v)) => engine.scoring.beta = v,
        (SweepKnob::Tau, KnobValue::Scalar(v)) => engine.scoring.tau = v,
        (SweepKnob::Kappa, KnobValue::Scalar(v)) => engine.scoring.kappa = v,
        (SweepKnob::PriorWs, KnobValue::Scalar(v)) => {
            let rest = 1.0 - v;
            engine.scoring.prior = [v, rest * 2.0 / 3.0, rest / 3.0];
        }
        (SweepKnob::Window, KnobValue::Scalar(v)) => {
            engine.scoring.window = whole(v, "window")?;
        }
        (SweepKnob::BlockFraction, KnobValue::Scalar(v)) => {
            engine.scoring.block.divisor = whole(v, "block fraction")?;
        }
        (SweepKnob::BlockClip, KnobValue::Clip(lo, hi)) => {
            engine.scoring.block.min_block = lo;
            engine.scoring.block.max_block = hi;
        }
        (knob, value) => {
            return Err(Error::InvalidConfig(format!(
                "knob {} cannot take value {}",
                knob.name(),
                value.label()
            )));
        }
    }
    engine.validate()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepConfig {
    pub knob: SweepKnob,
    /// Values to visit; the default is appended if absent.
    pub values: Vec<KnobValue>,
    pub spec: SynthSpec,
    pub ratio: f64,
    pub engine: EngineConfig,
    pub query_count: usize,
}

impl SweepConfig {
    pub fn new(knob: SweepKnob, spec: SynthSpec, ratio: f64) -> Self {
        Self {
            knob,
            values: knob.default_values(),
            spec,
            ratio,
            engine: EngineConfig::default(),
            query_count: 16,
        }
    }
}

/// One sweep cell: head-averaged metrics at a single knob setting.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub knob: &'static str,
    pub value: String,
    pub is_default: bool,
    pub needle_recall: f64,
    pub mass_retention: f64,
    pub mean_alpha: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("knob,value,is_default,needle_recall,mass_retention,mean_alpha\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6}",
                r.knob, r.value, r.is_default, r.needle_recall, r.mass_retention, r.mean_alpha
            )
            .expect("string write");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Repeats the benchmark on one fixed stream, moving a single knob through
/// its value list with everything else at defaults. The routed scorer with
/// competitive allocation is the swept method.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if !(0.0..1.0).contains(&cfg.ratio) {
        return Err(Error::InvalidRatio(cfg.ratio));
    }
    let stream = generate(&cfg.spec)?;
    let queries: Vec<Vec<Vec<f64>>> = stream
        .heads
        .iter()
        .map(|h| default_queries(h, cfg.query_count))
        .collect();

    let default = cfg.knob.default_value();
    let mut values = cfg.values.clone();
    if !values.contains(&default) {
        values.push(default);
    }

    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut engine = cfg.engine;
        apply_knob(cfg.knob, value, &mut engine)?;
        let layer = compress_layer(
            &stream.heads,
            Method::NestedKv,
            cfg.ratio,
            &engine,
            cfg.spec.seed,
            0,
        )?;

        let n_heads = stream.heads.len() as f64;
        let mut recall_sum = 0.0;
        let mut mass_sum = 0.0;
        let mut alpha_sum = 0.0;
        for (h, head) in layer.heads.iter().enumerate() {
            recall_sum += if stream.planted.is_empty() {
                1.0
            } else {
                needle_recall(&head.indices, &stream.planted)?
            };
            mass_sum += mass_retention(&stream.heads[h], &queries[h], &head.indices);
            alpha_sum += nestedkv_trace(&stream.heads[h], &engine.scoring)?
                .diagnostics()
                .mean_alpha;
        }
        rows.push(SweepRow {
            knob: cfg.knob.name(),
            value: value.label(),
            is_default: value == default,
            needle_recall: recall_sum / n_heads,
            mass_retention: mass_sum / n_heads,
            mean_alpha: alpha_sum / n_heads,
        });
    }
    Ok(SweepReport {
        config: cfg.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::{GeneratorKind, NeedlePlacement};

    fn small_spec(seed: u64) -> SynthSpec {
        let mut s = SynthSpec::new(GeneratorKind::GlobalNeedle, 128, 17, 2, seed);
        s.needles = NeedlePlacement::Count(4);
        s
    }

    #[test]
    fn row_count_is_methods_by_ratios_by_heads() {
        let cfg = BenchConfig::new(
            vec![Method::NestedKv, Method::Recency],
            vec![0.25, 0.5, 0.75],
            vec![small_spec(1)],
        );
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2 * 3 * 2);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 12);
        assert!(
            csv.starts_with("method,ratio,generator,seed,head,budget,needle_recall,mass_retention")
        );
    }

    #[test]
    fn bench_is_byte_deterministic() {
        let cfg = BenchConfig::new(vec![Method::NestedKv], vec![0.5], vec![small_spec(2)]);
        let a = run_bench(&cfg).unwrap().to_csv();
        let b = run_bench(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn ratio_zero_is_lossless_for_every_method() {
        let cfg = BenchConfig::new(Method::ALL.to_vec(), vec![0.0], vec![small_spec(3)]);
        let report = run_bench(&cfg).unwrap();
        for row in &report.rows {
            assert_eq!(row.needle_recall, 1.0, "{}", row.method);
            assert!((row.mass_retention - 1.0).abs() < 1e-9, "{}", row.method);
        }
    }

    #[test]
    fn bad_ratio_rejected() {
        let cfg = BenchConfig::new(vec![Method::NestedKv], vec![1.0], vec![small_spec(4)]);
        assert!(matches!(run_bench(&cfg), Err(Error::InvalidRatio(_))));
    }

    #[test]
    fn knob_names_round_trip() {
        for k in SweepKnob::ALL {
            assert_eq!(SweepKnob::from_str(k.name()).unwrap(), k);
        }
        assert!(matches!(
            SweepKnob::from_str("gamma"),
            Err(Error::UnknownKnob(_))
        ));
    }

    #[test]
    fn prior_knob_redistributes() {
        let mut engine = EngineConfig::default();
        apply_knob(SweepKnob::PriorWs, KnobValue::Scalar(0.3), &mut engine).unwrap();
        let p = engine.scoring.prior;
        assert!((p[0] - 0.3).abs() < 1e-12);
        assert!((p[1] - 0.7 * 2.0 / 3.0).abs() < 1e-12);
        assert!((p[2] - 0.7 / 3.0).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_emits_one_row_per_value_with_default_flagged() {
        let mut spec = SynthSpec::new(GeneratorKind::EpisodicNeedle, 512, 32, 2, 0);
        spec.needles = NeedlePlacement::Count(8);
        let cfg = SweepConfig::new(SweepKnob::Beta, spec, 0.75);
        let report = run_sweep(&cfg).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows.iter().filter(|r| r.is_default).count(), 1);
        assert!(report.rows.iter().any(|r| r.is_default && r.value == "3"));
    }

    #[test]
    fn sweep_appends_missing_default() {
        let mut spec = SynthSpec::new(GeneratorKind::GlobalNeedle, 128, 17, 1, 5);
        spec.needles = NeedlePlacement::Count(4);
        let mut cfg = SweepConfig::new(SweepKnob::Tau, spec, 0.5);
        cfg.values = scalars(&[0.5, 0.7]);
        let report = run_sweep(&cfg).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.rows.last().unwrap().is_default);
    }

    #[test]
    fn tau_sweep_alpha_is_non_increasing() {
        // Raising the gate threshold can only shrink alpha on a fixed stream.
        let mut spec = SynthSpec::new(GeneratorKind::EpisodicNeedle, 512, 32, 2, 0);
        spec.needles = NeedlePlacement::Count(8);
        let mut cfg = SweepConfig::new(SweepKnob::Tau, spec, 0.75);
        cfg.values = scalars(&[0.5, 0.6, 0.7]);
        let report = run_sweep(&cfg).unwrap();
        let alphas: Vec<f64> = report.rows.iter().map(|r| r.mean_alpha).collect();
        assert!(alphas[0] > alphas[1] && alphas[1] > alphas[2], "{alphas:?}");
    }
}
