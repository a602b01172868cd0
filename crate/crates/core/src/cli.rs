//! Command-line front end.
//!
//! Settings resolve as flag, then config file, then built-in default. The
//! config file is JSON, given by `--config` or the `LRSWEEP_CONFIG`
//! environment variable. File outputs are written to a temporary sibling and
//! renamed into place; existing files are only replaced with `--force`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind as ClapKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    analyze, ingest, write_results_csv, write_rows_csv, Analysis, AnalysisOptions, CategoryMinimaRow,
};
use crate::fit::{
    fit_epoch_quadratic, fit_kstar_model, fit_ratio_power_law, predict_kstar, FittedModel, KStarPoint,
    ModelFile, RatioPoint,
};
use crate::mixture::build_schedule;
use crate::search::{
    enumerate_all, enumerate_single_stage, parse_setup_id, read_jsonl, write_jsonl, Approach, Category,
    SearchRanges, SetupSpec,
};
use crate::surrogate::{generate_dataset, SurrogateParams};
use crate::train::{build_training_plan, PlanConfig, TrainingPlan, DEFAULT_DEVICES};
use crate::mixture::ScheduleSpec;
use crate::{Error, ErrorKind, Result};

pub const CONFIG_ENV: &str = "LRSWEEP_CONFIG";
pub const DEFAULT_LANGUAGE_PAIR: &str = "target-en";

#[derive(Debug, Parser)]
#[command(name = "lrsweep", version, about = "Plan and analyze low-resource-language pretraining sweeps")]
struct Cli {
    /// JSON config file; flags take precedence over it.
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List setups of the search grid as JSONL.
    Enumerate(EnumerateArgs),
    /// Training plan and mixture schedule for one setup.
    Plan(PlanArgs),
    /// Generate synthetic results for a setup list.
    Simulate(SimulateArgs),
    /// Analyze results: report JSON plus plot-ready CSV tables.
    Analyze(AnalyzeArgs),
    /// Fit a model to analysis tables.
    #[command(subcommand)]
    Fit(FitCommand),
    /// Evaluate a stored model.
    #[command(subcommand)]
    Predict(PredictCommand),
    /// Figure tables, or a text summary with --summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    /// Compute exponents to include (comma separated).
    #[arg(long = "f-c", value_delimiter = ',', allow_negative_numbers = true)]
    f_c: Vec<i32>,
    /// Omit two-stage setups.
    #[arg(long)]
    single_stage_only: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    setup_id: String,
    #[arg(long)]
    devices: Option<u32>,
    /// Base seed for epoch shuffles.
    #[arg(long)]
    seed: Option<u64>,
    /// High-resource tokens available; checked against the plan.
    #[arg(long)]
    high_available: Option<u64>,
    /// Also write the per-batch schedule as CSV.
    #[arg(long, value_name = "PATH")]
    batches: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SetupSource {
    /// Setup list (JSONL from `enumerate`); defaults to the full grid.
    #[arg(long, value_name = "PATH")]
    setups: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    setups: SetupSource,
    /// Surrogate parameters (JSON).
    #[arg(long, value_name = "PATH")]
    params: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    language_pair: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalysisInput {
    #[command(flatten)]
    setups: SetupSource,
    /// Results CSV (`setup_id,language_pair,val_loss`).
    #[arg(long, value_name = "PATH")]
    results: PathBuf,
    #[arg(long)]
    language_pair: Option<String>,
    /// Loss margin multi-2stage must beat mono-1stage by.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Category competing in the optimal-scale table.
    #[arg(long, value_parser = parse_category, default_value = "multi-2stage")]
    scale_category: Category,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: AnalysisInput,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    input: AnalysisInput,
    /// Human-readable summary instead of JSON tables.
    #[arg(long)]
    summary: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum FitCommand {
    /// Quadratic in log2 epochs; input is `epoch_curves.csv` or any CSV
    /// with `f_k` and `loss`/`min_loss` columns.
    Epochs(FitEpochsArgs),
    /// k*(C, D_T) model; input is `kstar_curves.csv`.
    Kstar(FitKstarArgs),
    /// Ratio power law; input is `ratio_points.csv`.
    Ratio(FitRatioArgs),
}

#[derive(Debug, Args)]
struct FitEpochsArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_parser = parse_category)]
    category: Option<Category>,
    #[arg(long = "f-c", allow_negative_numbers = true)]
    f_c: Option<i32>,
    #[arg(long = "f-d", allow_negative_numbers = true)]
    f_d: Option<i32>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitKstarArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_parser = parse_approach, default_value = "mono-1stage")]
    approach: Approach,
    /// Top of the knot grid (defaults by approach).
    #[arg(long)]
    h_max: Option<f64>,
    /// Keep curves whose epoch optimum was not a convex interior vertex.
    #[arg(long)]
    keep_all: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitRatioArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long = "f-c", allow_negative_numbers = true)]
    f_c: Option<i32>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PredictCommand {
    /// Optimal epoch count at compute C and corpus D_T.
    Kstar(PredictKstarArgs),
}

#[derive(Debug, Args)]
struct PredictKstarArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long = "C")]
    c: f64,
    #[arg(long = "DT")]
    d_t: f64,
    /// Round to the nearest power of two.
    #[arg(long)]
    round_pow2: bool,
}

fn parse_category(s: &str) -> std::result::Result<Category, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| "expected mono-1stage, multi-1stage or multi-2stage".into())
}

fn parse_approach(s: &str) -> std::result::Result<Approach, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| "expected mono-1stage, multi-1stage or multi-2stage".into())
}

/// Config file contents. Every field is optional.
#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub devices: Option<u32>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub language_pair: Option<String>,
    /// Compute exponents for the default grid.
    pub compute: Option<Vec<i32>>,
    pub high_resource_available: Option<u64>,
    pub surrogate: Option<SurrogateParams>,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => read_json(p),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("{}:{}", path.display(), e.line()),
        message: e.to_string(),
    })
}

/// Run the CLI on `args` (including the program name) and return the exit
/// code: 0 success, 1 usage, 2 data or validation, 3 fit.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapKind::DisplayHelp | ClapKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Fit => 3,
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let force = cli.force;
    match cli.command {
        Command::Enumerate(a) => cmd_enumerate(a, &cfg, force),
        Command::Plan(a) => cmd_plan(a, &cfg, force),
        Command::Simulate(a) => cmd_simulate(a, &cfg, force),
        Command::Analyze(a) => cmd_analyze(a, &cfg, force),
        Command::Fit(f) => cmd_fit(f, force),
        Command::Predict(PredictCommand::Kstar(a)) => cmd_predict_kstar(a),
        Command::Report(a) => cmd_report(a, &cfg, force),
    }
}

// ---------------------------------------------------------------------------
// Output helpers

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn emit(output: Option<&Path>, bytes: &[u8], force: bool) -> Result<()> {
    match output {
        Some(p) => atomic_write(p, bytes, force),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Write several files, refusing before touching any if one would be
/// overwritten without `--force`.
fn emit_all(files: &[(PathBuf, Vec<u8>)], force: bool) -> Result<()> {
    if !force {
        if let Some((p, _)) = files.iter().find(|(p, _)| p.exists()) {
            return Err(Error::WouldOverwrite(p.clone()));
        }
    }
    for (p, bytes) in files {
        atomic_write(p, bytes, force)?;
    }
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_rows_csv(rows, &mut buf)?;
    Ok(buf)
}

fn default_ranges(cfg: &Config) -> SearchRanges {
    match &cfg.compute {
        Some(f_cs) => SearchRanges::default().restrict_compute(f_cs),
        None => SearchRanges::default(),
    }
}

fn load_setups(src: &SetupSource, cfg: &Config) -> Result<Vec<SetupSpec>> {
    match &src.setups {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
            read_jsonl(BufReader::new(f), &p.display().to_string())
        }
        None => Ok(enumerate_all(&default_ranges(cfg))),
    }
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_enumerate(a: EnumerateArgs, cfg: &Config, force: bool) -> Result<()> {
    let ranges = if a.f_c.is_empty() {
        default_ranges(cfg)
    } else {
        SearchRanges::default().restrict_compute(&a.f_c)
    };
    let setups = if a.single_stage_only {
        enumerate_single_stage(&ranges)
    } else {
        enumerate_all(&ranges)
    };
    let mut buf = Vec::new();
    write_jsonl(&setups, &mut buf)?;
    emit(a.output.as_deref(), &buf, force)
}

#[derive(Serialize)]
struct PlanOutput {
    plan: TrainingPlan,
    schedule: ScheduleSpec,
}

fn cmd_plan(a: PlanArgs, cfg: &Config, force: bool) -> Result<()> {
    let setup = parse_setup_id(&a.setup_id)?;
    let plan_cfg = PlanConfig {
        devices: a.devices.or(cfg.devices).unwrap_or(DEFAULT_DEVICES),
        high_resource_available: a.high_available.or(cfg.high_resource_available),
    };
    if plan_cfg.devices == 0 {
        return Err(Error::Usage("--devices must be at least 1".into()));
    }
    let plan = build_training_plan(&setup, &plan_cfg)?;
    let schedule = build_schedule(
        &setup.id,
        &setup.derived(),
        setup.split().as_ref(),
        plan.batch.global_batch_tokens,
        a.seed.or(cfg.seed).unwrap_or(0),
        plan_cfg.high_resource_available,
    )?;
    let mut files = Vec::new();
    if let Some(p) = &a.batches {
        let mut buf = Vec::new();
        schedule.write_csv(&mut buf)?;
        files.push((p.clone(), buf));
    }
    let body = json_bytes(&PlanOutput { plan, schedule })?;
    match &a.output {
        Some(p) => files.push((p.clone(), body)),
        None => emit(None, &body, force)?,
    }
    emit_all(&files, force)
}

fn cmd_simulate(a: SimulateArgs, cfg: &Config, force: bool) -> Result<()> {
    let setups = load_setups(&a.setups, cfg)?;
    let mut params = match &a.params {
        Some(p) => read_json(p)?,
        None => cfg.surrogate.unwrap_or_default(),
    };
    if let Some(g) = a.gamma {
        params.gamma = g;
    }
    if let Some(s) = a.noise_sigma {
        params.noise_sigma = s;
    }
    if !(0.0..=1.0).contains(&params.gamma) {
        return Err(Error::Usage(format!("gamma must lie in [0, 1], got {}", params.gamma)));
    }
    if params.noise_sigma < 0.0 {
        return Err(Error::Usage("noise sigma must be non-negative".into()));
    }
    let seed = a.seed.or(cfg.seed).unwrap_or(params.seed);
    let pair = a
        .language_pair
        .or_else(|| cfg.language_pair.clone())
        .unwrap_or_else(|| DEFAULT_LANGUAGE_PAIR.into());
    let records = generate_dataset(&setups, &params, seed, &pair);
    let mut buf = Vec::new();
    write_results_csv(&records, &mut buf)?;
    emit(a.output.as_deref(), &buf, force)
}

fn run_analysis(input: &AnalysisInput, cfg: &Config) -> Result<Analysis> {
    let setups = load_setups(&input.setups, cfg)?;
    let f = fs::File::open(&input.results).map_err(|e| Error::io(&input.results, e))?;
    let (results, report) = ingest(
        BufReader::new(f),
        &input.results.display().to_string(),
        &setups,
    )?;
    let pair = match input.language_pair.clone().or_else(|| cfg.language_pair.clone()) {
        Some(p) => p,
        None => match results.language_pairs().as_slice() {
            [] => DEFAULT_LANGUAGE_PAIR.to_string(),
            [only] => only.to_string(),
            many => {
                return Err(Error::Usage(format!(
                    "results hold several language pairs ({}); pick one with --language-pair",
                    many.join(", ")
                )))
            }
        },
    };
    let opts = AnalysisOptions {
        epsilon: input.epsilon.or(cfg.epsilon).unwrap_or(0.0),
        scale_category: input.scale_category,
    };
    analyze(&results, report, &setups, &pair, opts)
}

fn cmd_analyze(a: AnalyzeArgs, cfg: &Config, force: bool) -> Result<()> {
    let an = run_analysis(&a.input, cfg)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let minima: Vec<CategoryMinimaRow> = an.report.category_minima.iter().map(Into::into).collect();
    let dir = &a.out_dir;
    let files = vec![
        (dir.join("report.json"), json_bytes(&an.report)?),
        (dir.join("category_minima.csv"), csv_bytes(&minima)?),
        (dir.join("scale_curves.csv"), csv_bytes(&an.scale_curves)?),
        (dir.join("epoch_curves.csv"), csv_bytes(&an.epoch_curves)?),
        (dir.join("kstar_curves.csv"), csv_bytes(&an.kstar_curves)?),
        (dir.join("ratio_points.csv"), csv_bytes(&an.ratio_points)?),
    ];
    emit_all(&files, force)
}

/// A CSV file addressed by column name.
struct Table {
    source: String,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let source = path.display().to_string();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(BufReader::new(f));
        let perr = |e: csv::Error| Error::Parse {
            location: format!("{source}:{}", e.position().map(|p| p.line()).unwrap_or(1)),
            message: e.to_string(),
        };
        let headers = rdr.headers().map_err(perr)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(perr)?;
            rows.push((rec.position().map(|p| p.line()).unwrap_or(0), rec));
        }
        Ok(Self { source, headers, rows })
    }

    fn col(&self, names: &[&str]) -> Option<usize> {
        names
            .iter()
            .find_map(|n| self.headers.iter().position(|h| h == n))
    }

    fn need(&self, names: &[&str]) -> Result<usize> {
        self.col(names).ok_or_else(|| Error::Parse {
            location: format!("{}:1", self.source),
            message: format!("missing column `{}`", names[0]),
        })
    }

    fn get<T: std::str::FromStr>(&self, row: &(u64, csv::StringRecord), col: usize) -> Result<T> {
        let raw = row.1.get(col).unwrap_or("");
        raw.trim().parse().map_err(|_| Error::Parse {
            location: format!("{}:{}", self.source, row.0),
            message: format!("bad value `{raw}` in column `{}`", self.headers[col]),
        })
    }
}

fn cmd_fit(f: FitCommand, force: bool) -> Result<()> {
    let (file, output) = match f {
        FitCommand::Epochs(a) => (fit_epochs(&a)?, a.output),
        FitCommand::Kstar(a) => (fit_kstar(&a)?, a.output),
        FitCommand::Ratio(a) => (fit_ratio(&a)?, a.output),
    };
    emit(output.as_deref(), &json_bytes(&file)?, force)
}

fn fit_epochs(a: &FitEpochsArgs) -> Result<ModelFile> {
    let t = Table::read(&a.input)?;
    let fk = t.need(&["f_k"])?;
    let loss = t.need(&["min_loss", "loss"])?;
    let cat = t.col(&["category"]);
    let fc = t.col(&["f_C"]);
    let fd = t.col(&["f_D"]);
    let mut pts = Vec::new();
    let mut curves = std::collections::BTreeSet::new();
    for row in &t.rows {
        let key_cat = cat.map(|c| row.1.get(c).unwrap_or("").to_string());
        if let (Some(want), Some(got)) = (a.category, &key_cat) {
            if want.as_str() != got {
                continue;
            }
        }
        let key_c: Option<i32> = fc.map(|c| t.get(row, c)).transpose()?;
        if a.f_c.is_some() && key_c.is_some() && a.f_c != key_c {
            continue;
        }
        let key_d: Option<i32> = fd.map(|c| t.get(row, c)).transpose()?;
        if a.f_d.is_some() && key_d.is_some() && a.f_d != key_d {
            continue;
        }
        curves.insert((key_cat, key_c, key_d));
        pts.push((t.get::<f64>(row, fk)?, t.get::<f64>(row, loss)?));
    }
    if curves.len() > 1 {
        return Err(Error::Usage(format!(
            "{} holds {} curves; select one with --category, --f-c and --f-d",
            t.source,
            curves.len()
        )));
    }
    Ok(ModelFile::epoch(fit_epoch_quadratic(&pts)?))
}

fn fit_kstar(a: &FitKstarArgs) -> Result<ModelFile> {
    let t = Table::read(&a.input)?;
    let (c, fd, y) = (t.need(&["C"])?, t.need(&["f_D"])?, t.need(&["log2_k_star"])?);
    let cat = t.col(&["category"]);
    let convex = t.col(&["convex"]);
    let extra = t.col(&["extrapolated"]);
    let mut pts = Vec::new();
    for row in &t.rows {
        if let Some(col) = cat {
            if row.1.get(col) != Some(a.approach.as_str()) {
                continue;
            }
        }
        if !a.keep_all {
            let flag = |col: Option<usize>| -> Result<Option<bool>> { col.map(|c| t.get(row, c)).transpose() };
            if flag(convex)? == Some(false) || flag(extra)? == Some(true) {
                continue;
            }
        }
        pts.push(KStarPoint {
            c: t.get(row, c)?,
            f_d: t.get(row, fd)?,
            log2_k_star: t.get(row, y)?,
        });
    }
    Ok(ModelFile::kstar(fit_kstar_model(&pts, a.approach, a.h_max)?))
}

fn fit_ratio(a: &FitRatioArgs) -> Result<ModelFile> {
    let t = Table::read(&a.input)?;
    let (m, d, r, l) = (
        t.need(&["M"])?,
        t.need(&["D"])?,
        t.need(&["r"])?,
        t.need(&["loss", "min_loss"])?,
    );
    let fc = t.col(&["f_C"]);
    let mut pts = Vec::new();
    for row in &t.rows {
        if let (Some(want), Some(col)) = (a.f_c, fc) {
            if t.get::<i32>(row, col)? != want {
                continue;
            }
        }
        pts.push(RatioPoint {
            m: t.get(row, m)?,
            d: t.get(row, d)?,
            r: t.get(row, r)?,
            loss: t.get(row, l)?,
        });
    }
    Ok(ModelFile::ratio(fit_ratio_power_law(&pts)?))
}

fn cmd_predict_kstar(a: PredictKstarArgs) -> Result<()> {
    let file: ModelFile = read_json(&a.model)?;
    let FittedModel::Kstar(model) = file.model else {
        return Err(Error::Usage(format!("{} is not a kstar model", a.model.display())));
    };
    if !(a.c > 0.0 && a.d_t > 0.0) {
        return Err(Error::Usage("--C and --DT must be positive".into()));
    }
    let k = predict_kstar(&model, a.c, a.d_t, a.round_pow2);
    emit(None, format!("{k}\n").as_bytes(), false)
}

#[derive(Serialize)]
struct Figures<'a> {
    language_pair: &'a str,
    /// Minimum loss per category against (C, D_T).
    figure1_category_minima: Vec<CategoryMinimaRow>,
    /// Minimum loss per model scale against (C, D_T).
    figure2_scale_curves: &'a [crate::analysis::ScaleCurveRow],
    /// Optimal log2 epochs against (C, D_T).
    figure3_kstar_curves: &'a [crate::analysis::KStarCurveRow],
    /// Loss against ratio per (M, D).
    figure4_ratio_points: &'a [crate::analysis::RatioPointRow],
}

fn cmd_report(a: ReportArgs, cfg: &Config, force: bool) -> Result<()> {
    let an = run_analysis(&a.input, cfg)?;
    let body = if a.summary {
        summary_text(&an).into_bytes()
    } else {
        json_bytes(&Figures {
            language_pair: &an.report.language_pair,
            figure1_category_minima: an.report.category_minima.iter().map(Into::into).collect(),
            figure2_scale_curves: &an.scale_curves,
            figure3_kstar_curves: &an.kstar_curves,
            figure4_ratio_points: &an.ratio_points,
        })?
    };
    emit(a.output.as_deref(), &body, force)
}

fn pow2_label(x: f64) -> String {
    format!("2^{}", x.log2().round() as i64)
}

/// Plain-text rendering of an analysis.
pub fn summary_text(an: &Analysis) -> String {
    use std::fmt::Write as _;
    let r = &an.report;
    let mut s = String::new();
    let _ = writeln!(s, "language pair: {}", r.language_pair);
    let _ = writeln!(
        s,
        "records: {} accepted, {} duplicate rows, {} rejected",
        r.ingest.accepted,
        r.ingest.duplicates,
        r.ingest.rejected.len()
    );
    for est in &r.compute_optimal {
        let _ = writeln!(s, "\nC = {:.3e} (f_C = {})", est.c, est.f_c);
        let _ = writeln!(
            s,
            "  compute-optimal corpus D* = {:.3e} tokens via {} (loss {:.4})",
            est.d_star, est.setup_id, est.val_loss
        );
        if let Some(t) = r.thresholds.iter().find(|t| t.f_c == est.f_c) {
            match &t.crossing {
                None => {
                    let _ = writeln!(s, "  switch: mono-1stage wins at every D_T");
                }
                Some(c) => match (c.d_t_high, c.ratio_high) {
                    (Some(hi), Some(rh)) => {
                        let _ = writeln!(
                            s,
                            "  switch: multi-2stage wins up to D_T = {:.3e} ({}·D*), mono-1stage from {:.3e} ({}·D*)",
                            c.d_t_low,
                            pow2_label(c.ratio_low),
                            hi,
                            pow2_label(rh)
                        );
                    }
                    _ => {
                        let _ = writeln!(
                            s,
                            "  switch: multi-2stage wins through D_T = {:.3e} ({}·D*); no upper crossing",
                            c.d_t_low,
                            pow2_label(c.ratio_low)
                        );
                    }
                },
            }
        }
        if let Some(sc) = r.optimal_scale.iter().find(|sc| sc.f_c == est.f_c) {
            let fms: Vec<String> = sc.winners.iter().map(|w| w.f_m.to_string()).collect();
            let _ = writeln!(
                s,
                "  optimal f_M by D_T (ascending): [{}], fold change {}",
                fms.join(", "),
                sc.fold_change
            );
        }
    }
    s
}
