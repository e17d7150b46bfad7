//! Commands behind the `loopcascade` binary.

pub mod config;
pub mod manifest;
pub mod spec;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use loopcascade::analysis::{
    compare_to_model, estimate_amplification_all, extract_peaks, triplet_rate, ComparisonRow, Hist2D, Measured,
    MeasuredPoint, PeakCounts,
};
use loopcascade::fock::{cascade_state, FockError};
use loopcascade::model::{amplification_curve, breakeven_beta};
use loopcascade::sim::{simulate_into, SimSink, TruthRecord, TRUTH_CSV_HEADER};
use loopcascade::tags::{BinaryTagWriter, CsvTagWriter, TagReader, TagError, TimeTag, TripletFinder};
use loopcascade::time::{seconds_to_ticks, Femtos};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use config::RunConfig;
use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    fn tags(path: &Path, e: TagError) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum TagFormat {
    #[default]
    Bin,
    Csv,
}

impl TagFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            TagFormat::Bin => "tags.ttg",
            TagFormat::Csv => "tags.csv",
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn cmd_model(cfg: &RunConfig, grid: &[f64], out: Option<&Path>) -> Result<(), CliError> {
    cfg.validate_sim()?;
    let params = cfg.model_params();
    params.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let curve =
        amplification_curve(&params, cfg.uncertainty(), grid).map_err(|e| CliError::Validation(e.to_string()))?;
    match out {
        Some(path) => write_file(path, &curve.to_csv())?,
        None => print!("{}", curve.to_csv()),
    }
    match breakeven_beta(&params) {
        Ok(Some(b)) => log::info!("break-even beta = {b:.6}"),
        Ok(None) => log::info!("no break-even in [0, 1]"),
        Err(e) => log::warn!("break-even: {e}"),
    }
    Ok(())
}

enum TagOut {
    Bin(BinaryTagWriter<BufWriter<File>>),
    Csv(CsvTagWriter<BufWriter<File>>),
}

/// Streams simulator output to files, keeping the first error.
struct FileSink {
    tags: Option<TagOut>,
    truth: Option<BufWriter<File>>,
    analysis: Option<Analyzer>,
    error: Option<String>,
}

impl FileSink {
    fn fail(&mut self, e: impl std::fmt::Display) {
        if self.error.is_none() {
            self.error = Some(e.to_string());
        }
    }
}

impl SimSink for FileSink {
    fn tag(&mut self, tag: TimeTag) {
        let r = match &mut self.tags {
            Some(TagOut::Bin(w)) => w.push(tag),
            Some(TagOut::Csv(w)) => w.push(tag),
            None => Ok(()),
        };
        if let Err(e) = r {
            self.fail(e);
        }
        if let Some(a) = &mut self.analysis {
            a.push(tag);
        }
    }

    fn truth(&mut self, record: &TruthRecord) {
        if let Some(w) = &mut self.truth {
            if let Err(e) = writeln!(w, "{}", record.csv_row()) {
                self.fail(e);
            }
        }
    }
}

fn finish_tags(out: Option<TagOut>) -> Result<(), TagError> {
    match out {
        Some(TagOut::Bin(w)) => w.finish().map(drop),
        Some(TagOut::Csv(w)) => w.finish().map(drop),
        None => Ok(()),
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub heralds: u64,
    pub converted: u64,
    pub tags: [u64; 3],
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path, format: TagFormat) -> Result<SimulateSummary, CliError> {
    cfg.validate_sim()?;
    make_dir(out)?;
    let tag_path = out.join(format.file_name());
    let tag_file = create(&tag_path)?;
    let tags = match format {
        TagFormat::Bin => TagOut::Bin(BinaryTagWriter::new(tag_file, cfg.sim.tick.0).map_err(|e| CliError::tags(&tag_path, e))?),
        TagFormat::Csv => TagOut::Csv(CsvTagWriter::new(tag_file).map_err(|e| CliError::tags(&tag_path, e))?),
    };
    let truth_path = out.join("truth.csv");
    let mut truth = create(&truth_path)?;
    writeln!(truth, "{TRUTH_CSV_HEADER}").map_err(|e| CliError::io(&truth_path, e))?;
    let mut sink = FileSink {
        tags: Some(tags),
        truth: Some(truth),
        analysis: None,
        error: None,
    };
    let summary = simulate_into(&cfg.sim, &mut sink).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(e) = sink.error {
        return Err(CliError::Runtime(e));
    }
    finish_tags(sink.tags.take()).map_err(|e| CliError::tags(&tag_path, e))?;
    if let Some(mut w) = sink.truth.take() {
        w.flush().map_err(|e| CliError::io(&truth_path, e))?;
    }
    let mut manifest = RunManifest::new("simulate", cfg);
    manifest.outputs.clear();
    manifest.write(out, &[format.file_name(), "truth.csv"])?;
    Ok(SimulateSummary {
        heralds: summary.heralds,
        converted: summary.converted,
        tags: summary.tags,
    })
}

/// Triplet finder feeding the delay histogram.
struct Analyzer {
    finder: TripletFinder,
    hist: Hist2D,
    triplets: Option<BufWriter<File>>,
    error: Option<io::Error>,
    first_tick: Option<u64>,
    last_tick: u64,
}

impl Analyzer {
    fn new(cfg: &RunConfig, duration_s: f64) -> Result<Self, CliError> {
        let a = &cfg.analysis;
        Ok(Analyzer {
            finder: TripletFinder::new(a.window_ticks),
            hist: Hist2D::new(a.bin_width, a.window_ticks, duration_s).map_err(|e| CliError::Validation(e.to_string()))?,
            triplets: None,
            error: None,
            first_tick: None,
            last_tick: 0,
        })
    }

    fn push(&mut self, tag: TimeTag) {
        self.first_tick.get_or_insert(tag.ticks);
        self.last_tick = tag.ticks;
        self.finder.push(tag);
        let ready = self.finder.take_ready();
        self.record(&ready);
    }

    fn record(&mut self, triplets: &[loopcascade::tags::TripletEvent]) {
        for t in triplets {
            self.hist.add(t);
            if let Some(w) = &mut self.triplets {
                if let Err(e) = writeln!(w, "{},{},{}", t.t1, t.t2, t.t3) {
                    self.error.get_or_insert(e);
                }
            }
        }
    }

    fn finish(mut self) -> Result<(Hist2D, Option<(u64, u64)>), io::Error> {
        let finder = std::mem::replace(&mut self.finder, TripletFinder::new(0));
        let rest = finder.finish();
        self.record(&rest);
        if let Some(e) = self.error {
            return Err(e);
        }
        if let Some(mut w) = self.triplets {
            w.flush()?;
        }
        Ok((self.hist, self.first_tick.map(|f| (f, self.last_tick))))
    }
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub triplets: u64,
    pub duration_s: f64,
    pub rate_per_hour: Option<Measured>,
    pub t_loop_ticks: f64,
    pub eta_pc: Measured,
    pub peaks: Option<PeakCounts>,
    pub a_exp: Option<Measured>,
    pub note: Option<String>,
}

fn report_for(cfg: &RunConfig, hist: &Hist2D) -> AnalysisReport {
    let a = &cfg.analysis;
    let t_loop_ticks = seconds_to_ticks(cfg.sim.t_loop.as_seconds(), cfg.sim.tick.0);
    let eta_pc = Measured::new(cfg.sim.eta_switch, a.eta_pc_err);
    let mut note = None;
    let peaks = extract_peaks(hist, t_loop_ticks, a.n_peaks, a.halfwidth_ticks)
        .map_err(|e| note = Some(e.to_string()))
        .ok();
    let a_exp = peaks.as_ref().and_then(|p| {
        estimate_amplification_all(p, eta_pc)
            .map_err(|e| note = Some(e.to_string()))
            .ok()
    });
    AnalysisReport {
        triplets: hist.total(),
        duration_s: hist.duration_s(),
        rate_per_hour: triplet_rate(hist.total(), hist.duration_s()).ok(),
        t_loop_ticks,
        eta_pc,
        peaks,
        a_exp,
        note,
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data") + "\n"
}

/// Reads a tag stream and writes `triplets.csv`, `histogram.csv` and
/// `report.json`. The acquisition time is the configured duration when a
/// config is given, otherwise the span of the stream.
pub fn cmd_analyze(cfg: &RunConfig, duration_given: bool, input: &Path, out: &Path) -> Result<AnalysisReport, CliError> {
    let file = File::open(input).map_err(|e| CliError::io(input, e))?;
    let reader = TagReader::new(BufReader::new(file)).map_err(|e| CliError::tags(input, e))?;
    let tick_fs = reader.tick_fs();
    let mut cfg = cfg.clone();
    if cfg.sim.tick.0 != tick_fs {
        log::info!("stream tick {tick_fs} fs overrides the configured tick");
        cfg.sim.tick = Femtos(tick_fs);
    }
    make_dir(out)?;
    let mut analyzer = Analyzer::new(&cfg, 0.0)?;
    analyzer.triplets = Some(create(&out.join("triplets.csv"))?);
    if let Some(w) = &mut analyzer.triplets {
        writeln!(w, "t1,t2,t3").map_err(|e| CliError::io(out, e))?;
    }
    for tag in reader {
        analyzer.push(tag.map_err(|e| CliError::tags(input, e))?);
    }
    let (hist, span) = analyzer.finish().map_err(|e| CliError::io(out, e))?;
    let duration_s = if duration_given {
        cfg.sim.duration.as_seconds()
    } else {
        span.map_or(0.0, |(a, b)| (b - a) as f64 * tick_fs as f64 / 1e15)
    };
    let mut full = Hist2D::new(hist.bin_width(), hist.x_extent(), duration_s).expect("validated");
    full.merge(&hist).expect("same binning");
    write_file(&out.join("histogram.csv"), &full.to_csv())?;
    let report = report_for(&cfg, &full);
    write_file(&out.join("report.json"), &to_json(&report))?;
    let mut manifest = RunManifest::new("analyze", &cfg);
    manifest.inputs.push(input.to_path_buf());
    manifest.write(out, &["triplets.csv", "histogram.csv", "report.json"])?;
    Ok(report)
}

/// Seed of sweep point `index`, derived from the base seed.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub seed: u64,
    pub triplets: u64,
    #[serde(flatten)]
    pub comparison: Option<ComparisonRow>,
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub field: String,
    pub rows: Vec<SweepRow>,
    /// Values whose residual exceeds 3 sigma.
    pub flagged: Vec<String>,
}

fn run_point(cfg: &RunConfig, dir: &Path, keep_tags: Option<TagFormat>) -> Result<(AnalysisReport, Option<ComparisonRow>), CliError> {
    make_dir(dir)?;
    let mut sink = FileSink {
        tags: None,
        truth: None,
        analysis: Some(Analyzer::new(cfg, cfg.sim.duration.as_seconds())?),
        error: None,
    };
    let mut outputs = vec!["histogram.csv", "report.json"];
    if let Some(format) = keep_tags {
        let path = dir.join(format.file_name());
        let file = create(&path)?;
        sink.tags = Some(match format {
            TagFormat::Bin => TagOut::Bin(BinaryTagWriter::new(file, cfg.sim.tick.0).map_err(|e| CliError::tags(&path, e))?),
            TagFormat::Csv => TagOut::Csv(CsvTagWriter::new(file).map_err(|e| CliError::tags(&path, e))?),
        });
        outputs.push(format.file_name());
    }
    simulate_into(&cfg.sim, &mut sink).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(e) = sink.error.take() {
        return Err(CliError::Runtime(e));
    }
    finish_tags(sink.tags.take()).map_err(|e| CliError::tags(dir, e))?;
    let (hist, _) = sink.analysis.take().unwrap().finish().map_err(|e| CliError::io(dir, e))?;
    write_file(&dir.join("histogram.csv"), &hist.to_csv())?;
    let report = report_for(cfg, &hist);
    write_file(&dir.join("report.json"), &to_json(&report))?;
    let params = cfg.model_params();
    let comparison = match report.a_exp {
        Some(a) => {
            let curve = amplification_curve(&params, cfg.uncertainty(), &[params.beta_loop])
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let point = MeasuredPoint {
                beta: params.beta_loop,
                a,
            };
            let cmp = compare_to_model(&[point], &curve).map_err(|e| CliError::Runtime(e.to_string()))?;
            cmp.rows.first().copied()
        }
        None => None,
    };
    RunManifest::new("sweep-point", cfg).write(dir, &outputs)?;
    Ok((report, comparison))
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    field: &str,
    values: &[String],
    out: &Path,
    keep_tags: Option<TagFormat>,
) -> Result<SweepReport, CliError> {
    if values.is_empty() {
        return Err(CliError::Validation("sweep has no points".into()));
    }
    let mut points = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut c = cfg.clone();
        if field != "seed" {
            c.sim.seed = point_seed(cfg.sim.seed, i);
        }
        c.set(field, v)?;
        c.validate_sim()?;
        c.model_params().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        points.push(c);
    }
    make_dir(out)?;
    let dirs: Vec<PathBuf> = (0..points.len()).map(|i| out.join(format!("point-{i:03}"))).collect();
    let results: Vec<Result<_, CliError>> = points
        .par_iter()
        .zip(&dirs)
        .map(|(c, d)| run_point(c, d, keep_tags))
        .collect();
    let mut rows = Vec::with_capacity(points.len());
    let mut flagged = Vec::new();
    for ((value, c), r) in values.iter().zip(&points).zip(results) {
        let (report, comparison) = r?;
        if comparison.is_some_and(|row| row.residual_sigma.abs() > loopcascade::analysis::FLAG_SIGMA) {
            flagged.push(value.clone());
        }
        rows.push(SweepRow {
            value: value.clone(),
            seed: c.sim.seed,
            triplets: report.triplets,
            comparison,
            note: report.note,
        });
    }
    let report = SweepReport {
        field: field.to_string(),
        rows,
        flagged,
    };
    write_file(&out.join("sweep.json"), &to_json(&report))?;
    write_file(&out.join("sweep.csv"), &sweep_csv(&report))?;
    let mut manifest = RunManifest::new("sweep", cfg);
    manifest.inputs = dirs;
    manifest.write(out, &["sweep.json", "sweep.csv"])?;
    Ok(report)
}

fn sweep_csv(report: &SweepReport) -> String {
    let mut out = format!(
        "{},seed,triplets,beta,a_exp,a_err,a_model,a_model_lo,a_model_hi,residual_sigma\n",
        report.field
    );
    for r in &report.rows {
        let cmp = r.comparison.map_or_else(
            || ",,,,,,".to_string(),
            |c| {
                format!(
                    "{},{},{},{},{},{},{}",
                    c.beta, c.a_exp, c.a_err, c.a_model, c.a_model_lo, c.a_model_hi, c.residual_sigma
                )
            },
        );
        out.push_str(&format!("{},{},{},{cmp}\n", r.value, r.seed, r.triplets));
    }
    out
}

/// Largest deviation of `|amp(k+1) / amp(k)|` from `sqrt(beta)` that
/// `verify-fock` accepts.
pub const RATIO_TOLERANCE: f64 = 1e-9;

pub fn cmd_verify_fock(passes: u32, g1_alpha: f64, g2: f64, beta: f64, out: &mut impl Write) -> Result<f64, CliError> {
    let state = cascade_state(passes, g1_alpha, g2, beta).map_err(|e| match e {
        FockError::StateSize(_) => CliError::Runtime(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    })?;
    let io_err = |e: io::Error| CliError::Runtime(e.to_string());
    let expected = beta.sqrt();
    writeln!(out, "k,re,im,abs,ratio").map_err(io_err)?;
    let mut worst: f64 = 0.0;
    let mut previous: Option<f64> = None;
    for k in 0..passes {
        let a = state.triplet_amplitude(k);
        let ratio = previous.filter(|p| *p > 0.0).map(|p| a.norm() / p);
        if let Some(r) = ratio {
            worst = worst.max((r - expected).abs());
        }
        let r = ratio.map(|r| format!("{r:.12}")).unwrap_or_default();
        writeln!(out, "{k},{:.6e},{:.6e},{:.6e},{r}", a.re, a.im, a.norm()).map_err(io_err)?;
        previous = Some(a.norm());
    }
    writeln!(out, "# sqrt(beta) = {expected:.12}, max deviation {worst:.3e}, leakage {:.3e}", state.leakage())
        .map_err(io_err)?;
    if worst > RATIO_TOLERANCE {
        return Err(CliError::Runtime(format!(
            "amplitude ratio deviates from sqrt(beta) by {worst:.3e} > {RATIO_TOLERANCE:e}"
        )));
    }
    Ok(worst)
}
