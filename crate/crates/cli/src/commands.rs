use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use mosi_core::annotations::{dataset_stats, proportions_csv, validate_curation, CurationReport, DatasetStats};
use mosi_core::mask::{write_png_store, write_rle_store, StoreKind};
use mosi_core::metrics::{
    default_thresholds, eval_mos, eval_mosi, run_parallel, EvalMode, MosConfig, MosDatasetReport, MosiConfig,
    MosiDatasetReport, MosiReport, DEFAULT_FP_FLOOR, DEFAULT_SR_THRESHOLDS, SCHEMA_VERSION,
};
use mosi_core::propagator::{
    self, read_proposals, write_proposals, CarryoverTracker, Corruption, FileProposer, Mode, OracleTracker, Proposer,
    Scenario,
};
use mosi_core::selfcheck::run_selfcheck;
use mosi_core::{Error, MaskStore, PropagatorConfig, Result, SequenceAnnotation, TrackOutput};
use serde::Serialize;

use crate::config::{FileConfig, DEFAULT_SEED};
use crate::layout::{self, IntervalSource, ANNOTATION_FILE, MOTION_FILE};
use crate::{table, Cli, Command, Global, ModeArg, RunMode, StoreFormat};

struct Ctx {
    global: Global,
    file: FileConfig,
    workers: usize,
}

impl Ctx {
    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.file.seed).unwrap_or(DEFAULT_SEED)
    }

    fn emit<T: Serialize>(&self, report: &T, table: Option<String>) -> Result<()> {
        let text = match table {
            Some(t) if self.global.table => t,
            _ => serde_json::to_string_pretty(report)? + "\n",
        };
        match &self.global.output {
            Some(path) => layout::write_file(path, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// Runs one subcommand. `Ok(false)` means the report was written but a check failed.
pub fn run(cli: Cli) -> Result<bool> {
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let workers = match cli.global.workers.or(file.workers) {
        Some(0) => return Err(Error::InvalidInput("worker count must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let ctx = Ctx {
        global: cli.global,
        file,
        workers,
    };
    match cli.command {
        Command::EvalMos(a) => eval_mos_cmd(&ctx, a),
        Command::EvalMosi(a) => eval_mosi_cmd(&ctx, a),
        Command::Propagate(a) => propagate_cmd(&ctx, a),
        Command::Validate(a) => validate_cmd(&ctx, a),
        Command::Convert(a) => convert_cmd(&ctx, a),
        Command::Selfcheck(a) => {
            let report = run_selfcheck(ctx.seed(a.seed))?;
            ctx.emit(&report, None)?;
            Ok(report.passed)
        }
        Command::Render(a) => render_cmd(&ctx, a),
        Command::Ingest(a) => ingest_cmd(&ctx, a),
        Command::Stats(a) => stats_cmd(&ctx, a),
    }
}

fn check_unit(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::InvalidInput(format!("{name} value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn eval_mos_cmd(ctx: &Ctx, a: crate::EvalMosArgs) -> Result<bool> {
    let names = layout::paired_sequences(&a.gt, &a.pred)?;
    let file = &ctx.file.mos;
    let mode = match a.mode {
        Some(ModeArg::Multi) => EvalMode::MultiObject,
        Some(ModeArg::Fgbg) => EvalMode::ForegroundBackground,
        None => file.mode.unwrap_or_default(),
    };
    let sr_thresholds = match (a.sr_thresholds, &file.sr_thresholds) {
        (Some(t), _) => Some(t),
        (None, Some(t)) => Some(t.clone()),
        (None, None) => a.sr.then(|| DEFAULT_SR_THRESHOLDS.to_vec()),
    };
    if let Some(t) = &sr_thresholds {
        if t.is_empty() {
            return Err(Error::InvalidInput("empty success-rate threshold list".into()));
        }
        check_unit("success-rate threshold", t)?;
    }
    let cfg = MosConfig {
        tolerance: a.tolerance.or(file.tolerance),
        mode,
        sr_thresholds,
    };
    let reports = run_parallel(&names, ctx.workers, |name| {
        let gt = layout::load_masks(&a.gt.join(name))?;
        let pred = layout::load_masks(&a.pred.join(name))?;
        eval_mos(&pred, &gt, &cfg)
    })?;
    let report = MosDatasetReport::from_sequences(names.into_iter().zip(reports).collect());
    ctx.emit(&report, Some(table::mos(&report)))?;
    Ok(true)
}

fn mosi_config(ctx: &Ctx, fp_floor: Option<f64>, thresholds: Option<Vec<f64>>) -> Result<MosiConfig> {
    let file = &ctx.file.mosi;
    let cfg = MosiConfig {
        fp_floor: fp_floor.or(file.fp_floor).unwrap_or(DEFAULT_FP_FLOOR),
        thresholds: thresholds
            .or_else(|| file.thresholds.clone())
            .unwrap_or_else(default_thresholds),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn eval_mosi_cmd(ctx: &Ctx, a: crate::EvalMosiArgs) -> Result<bool> {
    let cfg = mosi_config(ctx, a.fp_floor, a.thresholds)?;
    let names = layout::paired_sequences(&a.gt, &a.pred)?;
    let source = layout::interval_source(a.intervals.as_ref(), a.fps)?;
    let reports = run_parallel(&names, ctx.workers, |name| {
        let gt = layout::load_gt(&a.gt.join(name), name, &source)?;
        let pred = layout::load_pred(&a.pred.join(name))?;
        eval_mosi(&pred, &gt, &cfg)
    })?;
    let report = MosiDatasetReport::from_sequences(names.into_iter().zip(reports).collect());
    ctx.emit(&report, Some(table::mosi(&report)))?;
    Ok(true)
}

#[derive(Serialize)]
struct PropagateReport {
    schema_version: u32,
    mode: &'static str,
    frames: usize,
    height: usize,
    width: usize,
    /// Moving frames per output track id, as written to motion.json.
    moving_frames: BTreeMap<u32, Vec<usize>>,
    /// Scores against the scenario ground truth, when one is available.
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<MosiReport>,
}

fn write_store(dir: &Path, store: &MaskStore, format: StoreFormat) -> Result<()> {
    match format {
        StoreFormat::Png => write_png_store(dir, store),
        StoreFormat::Rle => write_rle_store(dir, store),
    }
}

fn propagate_cmd(ctx: &Ctx, a: crate::PropagateArgs) -> Result<bool> {
    let mut cfg = PropagatorConfig::default();
    ctx.file.propagator.apply(&mut cfg);
    let flags = [
        (&mut cfg.tau_motion, a.tau_motion),
        (&mut cfg.tau_iou, a.tau_iou),
        (&mut cfg.tau_match, a.tau_match),
        (&mut cfg.tau_new, a.tau_new),
        (&mut cfg.topk_fraction, a.topk_fraction),
        (&mut cfg.topk_iou_floor, a.topk_iou_floor),
    ];
    for (slot, v) in flags {
        if let Some(v) = v {
            *slot = v;
        }
    }
    cfg.validate()?;
    let mode = match a.mode {
        RunMode::Online => Mode::Online,
        RunMode::Offline => Mode::Offline,
    };

    let (output, evaluation) = if let Some(path) = &a.scenario {
        let mut scenario = Scenario::load(path)?;
        if let Some(seed) = a.seed.or(ctx.file.seed) {
            scenario.seed = seed;
        }
        let (mut proposer, factory) = scenario.simulation()?;
        let output = propagator::run(mode, &mut proposer, &factory, &cfg)?;
        let mosi = mosi_config(ctx, None, None)?;
        let evaluation = eval_mosi(&output.to_motion_sequence()?, &scenario.ground_truth()?, &mosi)?;
        (output, Some(evaluation))
    } else {
        let dir = a.proposals.as_ref().expect("clap requires --scenario or --proposals");
        let mut proposer = FileProposer::open(dir)?;
        let output = match &a.oracle_gt {
            Some(gt_dir) => {
                let masks = oracle_masks(gt_dir, &proposer)?;
                let seed = ctx.seed(a.seed);
                let factory = move || OracleTracker::new(Arc::clone(&masks), Corruption::default(), seed);
                propagator::run(mode, &mut proposer, &factory, &cfg)?
            }
            None => propagator::run(mode, &mut proposer, &CarryoverTracker::new, &cfg)?,
        };
        (output, None)
    };

    let moving_frames = write_output(&a.out, &output, a.format)?;
    let (height, width) = output.dims();
    let report = PropagateReport {
        schema_version: SCHEMA_VERSION,
        mode: match mode {
            Mode::Online => "online",
            Mode::Offline => "offline",
        },
        frames: output.num_frames(),
        height,
        width,
        moving_frames,
        evaluation,
    };
    ctx.emit(&report, None)?;
    Ok(true)
}

fn oracle_masks(dir: &Path, proposer: &FileProposer) -> Result<Arc<BTreeMap<u32, Vec<mosi_core::BinaryMask>>>> {
    let gt = layout::load_masks(dir)?;
    let n = proposer.num_frames();
    if gt.frames() != (0..n).collect::<Vec<_>>().as_slice() {
        return Err(Error::FrameMismatch(format!(
            "oracle ground truth must cover frames 0..{n} of the proposals"
        )));
    }
    if gt.dims() != proposer.dims() {
        return Err(Error::DimensionMismatch {
            expected: proposer.dims(),
            actual: gt.dims(),
        });
    }
    Ok(Arc::new(gt.objects().clone()))
}

fn write_output(dir: &Path, output: &TrackOutput, format: StoreFormat) -> Result<BTreeMap<u32, Vec<usize>>> {
    let (store, moving) = output.to_store()?;
    write_store(dir, &store, format)?;
    layout::write_file(&dir.join(MOTION_FILE), &(serde_json::to_string_pretty(&moving)? + "\n"))?;
    Ok(moving)
}

#[derive(Serialize)]
struct ValidateReport {
    schema_version: u32,
    consistent: bool,
    sequences_needing_tfa: usize,
    /// Sequences named in the interval table without a ground-truth directory.
    unmatched_annotations: Vec<String>,
    sequences: BTreeMap<String, CurationReport>,
}

fn validate_cmd(ctx: &Ctx, a: crate::ValidateArgs) -> Result<bool> {
    let names = layout::sequences(&a.gt)?;
    let source = layout::interval_source(a.intervals.as_ref(), a.fps)?;
    let reports = run_parallel(&names, ctx.workers, |name| {
        let dir = a.gt.join(name);
        let masks = layout::load_masks(&dir)?;
        let ann = source.annotation(&dir, name, layout::frame_count(&masks))?;
        Ok(validate_curation(&ann, &masks))
    })?;
    let unmatched_annotations = match &source {
        IntervalSource::Table { table, .. } => table
            .keys()
            .filter(|k| names.binary_search(k).is_err())
            .cloned()
            .collect(),
        IntervalSource::Sidecar => Vec::new(),
    };
    let consistent = reports.iter().all(|r| r.consistent) && unmatched_annotations.is_empty();
    let report = ValidateReport {
        schema_version: SCHEMA_VERSION,
        consistent,
        sequences_needing_tfa: reports.iter().filter(|r| r.needs_tfa).count(),
        unmatched_annotations,
        sequences: names.into_iter().zip(reports).collect(),
    };
    ctx.emit(&report, None)?;
    Ok(consistent || !a.strict)
}

#[derive(Serialize)]
struct ConvertReport {
    schema_version: u32,
    from: &'static str,
    to: &'static str,
    frames: usize,
}

fn format_name(f: StoreFormat) -> &'static str {
    match f {
        StoreFormat::Png => "png",
        StoreFormat::Rle => "rle",
    }
}

fn convert_cmd(ctx: &Ctx, a: crate::ConvertArgs) -> Result<bool> {
    let (kind, store) = MaskStore::load(&a.input)?;
    let from = match kind {
        StoreKind::Png => StoreFormat::Png,
        StoreKind::Rle => StoreFormat::Rle,
    };
    let to = a.to.unwrap_or(match from {
        StoreFormat::Png => StoreFormat::Rle,
        StoreFormat::Rle => StoreFormat::Png,
    });
    write_store(&a.output_dir, &store, to)?;
    for sidecar in [MOTION_FILE, ANNOTATION_FILE] {
        let src = a.input.join(sidecar);
        if src.is_file() {
            let dst = a.output_dir.join(sidecar);
            fs::copy(&src, &dst).map_err(|e| Error::io(&dst, e))?;
        }
    }
    let report = ConvertReport {
        schema_version: SCHEMA_VERSION,
        from: format_name(from),
        to: format_name(to),
        frames: store.frames.len(),
    };
    ctx.emit(&report, None)?;
    Ok(true)
}

#[derive(Serialize)]
struct RenderReport {
    schema_version: u32,
    sequence: String,
    frames: usize,
    objects: Vec<u32>,
    proposals: usize,
}

fn render_cmd(ctx: &Ctx, a: crate::RenderArgs) -> Result<bool> {
    let scenario = Scenario::load(&a.scenario)?;
    let store = scenario.label_maps()?;
    write_store(&a.gt, &store, a.format)?;
    layout::write_file(&a.gt.join(ANNOTATION_FILE), &(scenario.annotation()?.to_json() + "\n"))?;
    let mut proposals = 0;
    if let Some(dir) = &a.proposals {
        let (mut proposer, _) = scenario.simulation()?;
        let frames = read_proposals(&mut proposer)?;
        proposals = frames.iter().map(|f| f.proposals.len()).sum();
        write_proposals(dir, &frames)?;
    }
    let report = RenderReport {
        schema_version: SCHEMA_VERSION,
        sequence: scenario.name.clone(),
        frames: scenario.frame_count,
        objects: scenario.objects.iter().map(|o| o.id).collect(),
        proposals,
    };
    ctx.emit(&report, None)?;
    Ok(true)
}

#[derive(Serialize)]
struct IngestReport {
    schema_version: u32,
    written: Vec<String>,
}

fn ingest_cmd(ctx: &Ctx, a: crate::IngestArgs) -> Result<bool> {
    let IntervalSource::Table { table, fps } = layout::interval_source(Some(&a.intervals), Some(a.fps))? else {
        unreachable!("interval table requested");
    };
    let names = layout::sequences(&a.gt)?;
    if let Some(seq) = table.keys().find(|k| names.binary_search(k).is_err()) {
        return Err(Error::Missing(a.gt.join(seq)));
    }
    let out = a.out.as_ref().unwrap_or(&a.gt);
    let mut anns = Vec::with_capacity(names.len());
    for name in &names {
        let frame_count = layout::store_frame_count(&a.gt.join(name))?;
        let objects = table.get(name).cloned().unwrap_or_default();
        anns.push(SequenceAnnotation::new(name.clone(), fps, frame_count, objects)?);
    }
    for ann in &anns {
        layout::write_file(&out.join(&ann.sequence).join(ANNOTATION_FILE), &(ann.to_json() + "\n"))?;
    }
    ctx.emit(
        &IngestReport {
            schema_version: SCHEMA_VERSION,
            written: names,
        },
        None,
    )?;
    Ok(true)
}

#[derive(Serialize)]
struct StatsReport {
    schema_version: u32,
    #[serde(flatten)]
    stats: DatasetStats,
}

fn stats_cmd(ctx: &Ctx, a: crate::StatsArgs) -> Result<bool> {
    let names = layout::sequences(&a.gt)?;
    let source = layout::interval_source(a.intervals.as_ref(), a.fps)?;
    let anns = run_parallel(&names, ctx.workers, |name| {
        let dir = a.gt.join(name);
        let frame_count = match source {
            IntervalSource::Sidecar => 0,
            IntervalSource::Table { .. } => layout::store_frame_count(&dir)?,
        };
        source.annotation(&dir, name, frame_count)
    })?;
    let stats = dataset_stats(&anns)?;
    if let Some(path) = &a.proportions_csv {
        layout::write_file(path, &proportions_csv(&stats))?;
    }
    ctx.emit(
        &StatsReport {
            schema_version: SCHEMA_VERSION,
            stats,
        },
        None,
    )?;
    Ok(true)
}
