//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::complexity::{complexity_csv, complexity_markdown, rm_mrc_ml_total, table_6g, ComplexityQuery, ComplexityRow};
use crate::config::Config;
use crate::detector::{ber_csv, BerReport};
use crate::error::{Error, Result};
use crate::neural::{train_cv, Architecture, Checkpoint, TrainedDetector};
use crate::pipeline::{generate_dataset, Dataset, TestBank};
use crate::reference::{self, BerTable};

#[derive(Debug, Parser)]
#[command(name = "otfs-mimo", version, about = "MIMO-OTFS detection simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Real-multiplication counts for one configuration or the massive-MIMO table.
    Complexity(ComplexityArgs),
    /// Simulate training frames and write labelled MRC outputs.
    GenData(GenDataArgs),
    /// Cross-validate and retrain a network detector on a dataset.
    Train(TrainArgs),
    /// BER of MLD and/or trained networks on shared test frames.
    Eval(EvalArgs),
    /// Regenerate the reference complexity and BER tables with a comparison summary.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TableFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), required_unless_present = "table_6g")]
    pub m: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), required_unless_present = "table_6g")]
    pub n: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1)]
    pub nt: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub nr: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 4)]
    pub q: u64,
    /// Emit the ten-row table at M = N = 128.
    #[arg(long = "table-6g", conflicts_with_all = ["m", "n"])]
    pub table_6g: bool,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_parser = parse_arch)]
    pub arch: Architecture,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss-history CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Network checkpoint; repeatable.
    #[arg(long)]
    pub ckpt: Vec<PathBuf>,
    /// `mld`; repeatable. Defaults to `mld` when no checkpoint is given.
    #[arg(long)]
    pub detector: Vec<String>,
    #[arg(long = "snr-list", value_delimiter = ',', allow_negative_numbers = true)]
    pub snr_list: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Accepted for clarity; every reference table is always regenerated.
    #[arg(long = "reference-tables")]
    pub reference_tables: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Base configuration; system/channel sizes are overridden per table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Networks to train for each table.
    #[arg(long, value_delimiter = ',', value_parser = parse_arch, default_value = "mlp")]
    pub archs: Vec<Architecture>,
    #[arg(long = "target-symbols")]
    pub target_symbols: Option<usize>,
    #[arg(long = "train-frames")]
    pub train_frames: Option<usize>,
    #[arg(long = "max-epochs")]
    pub max_epochs: Option<usize>,
}

fn parse_arch(s: &str) -> std::result::Result<Architecture, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Sibling record written next to every output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

struct Emitter {
    command: String,
    cfg: Option<Config>,
    inputs: Vec<String>,
    started: f64,
}

impl Emitter {
    fn new(command: &str, cfg: Option<&Config>, inputs: &[&Path]) -> Self {
        Emitter {
            command: command.into(),
            cfg: cfg.cloned(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            started: unix_now(),
        }
    }

    fn write(&self, path: &Path, contents: &str) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, contents)?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            seed: self.cfg.as_ref().map(|c| c.system.seed),
            config: self.cfg.as_ref().map(Config::to_toml_string),
            inputs: self.inputs.clone(),
            outputs: vec![path.display().to_string()],
            started_unix: self.started,
            finished_unix: unix_now(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(manifest_path(path), json)?;
        Ok(())
    }
}

fn load_config(path: &Path) -> Result<Config> {
    Config::load(path)?.with_env_seed()
}

/// Process exit status for an error: 1 for I/O, 2 for invalid input or configuration.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Io(_) => 1,
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::InvalidProfile(_)
        | Error::Unsupported(_)
        | Error::Parse(_)
        | Error::InvalidClass { .. }
        | Error::InvalidInput(_)
        | Error::Capacity(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Complexity(a) => cmd_complexity(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    }
}

fn emit_or_print(emitter: &Emitter, out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => emitter.write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_complexity(a: ComplexityArgs) -> Result<()> {
    let emitter = Emitter::new("complexity", None, &[]);
    let text = if a.table_6g {
        let rows = table_6g();
        match a.format {
            TableFormat::Csv => complexity_csv(&rows),
            TableFormat::Markdown => complexity_markdown(&rows),
        }
    } else {
        let (m, n) = (a.m.expect("required by clap"), a.n.expect("required by clap"));
        let query = ComplexityQuery::new(m, n, a.nt, a.nr.unwrap_or(a.nt), a.q)?;
        let row = ComplexityRow::evaluate(&query);
        match a.format {
            TableFormat::Csv => format!(
                "m,n,nt,nr,q,mld,mrc_ml_total,mlp,cnn,resnet\n{},{},{},{},{},{},{},{},{},{}\n",
                query.m,
                query.n,
                query.nt,
                query.nr,
                query.q,
                row.mld,
                rm_mrc_ml_total(&query),
                row.mlp,
                row.cnn,
                row.resnet
            ),
            TableFormat::Markdown => complexity_markdown(&[row]),
        }
    };
    emit_or_print(&emitter, a.out.as_deref(), &text)
}

pub fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let snr = a.snr_db.unwrap_or(cfg.training.snr_db);
    let frames = a.frames.unwrap_or(cfg.training.frames);
    if frames == 0 {
        return Err(Error::InvalidParameter("--frames must be at least 1".into()));
    }
    let dataset = generate_dataset(&cfg, snr, frames)?;
    Emitter::new("gen-data", Some(&cfg), &[&a.config]).write(&a.out, &dataset.to_csv())
}

fn history_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".history.csv");
    out.with_file_name(name)
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let dataset = Dataset::from_csv(&fs::read_to_string(&a.data)?)?;
    if dataset.config.system.q != cfg.system.q {
        return Err(Error::Config(format!(
            "dataset holds Q = {} symbols but the configuration selects Q = {}",
            dataset.config.system.q, cfg.system.q
        )));
    }
    let (det, report) = train_cv(a.arch, cfg.system.q, &dataset.features(), &dataset.labels(), &cfg.train_config())?;
    let emitter = Emitter::new("train", Some(&cfg), &[&a.config, &a.data]);
    emitter.write(&a.out, &Checkpoint::from_detector(&det).to_json()?)?;
    emitter.write(&a.history.unwrap_or_else(|| history_path(&a.out)), &report.history_csv())
}

pub fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let snrs = a.snr_list.clone().unwrap_or_else(|| cfg.eval.snr_db.clone());
    let mut detectors: Vec<String> = a.detector.iter().map(|d| d.to_ascii_lowercase()).collect();
    if let Some(bad) = detectors.iter().find(|d| d.as_str() != "mld") {
        return Err(Error::Config(format!("--detector accepts only `mld`, got `{bad}`; pass networks with --ckpt")));
    }
    if detectors.is_empty() && a.ckpt.is_empty() {
        detectors.push("mld".into());
    }
    let nets = a
        .ckpt
        .iter()
        .map(|p| Checkpoint::load(p)?.into_detector())
        .collect::<Result<Vec<TrainedDetector>>>()?;
    let bank = TestBank::simulate(&cfg)?;
    let mut reports = Vec::new();
    if !detectors.is_empty() {
        reports.extend(bank.mld_reports(&snrs)?);
    }
    for det in &nets {
        reports.extend(bank.nn_reports(det, &snrs)?);
    }
    let mut inputs: Vec<&Path> = vec![&a.config];
    inputs.extend(a.ckpt.iter().map(PathBuf::as_path));
    Emitter::new("eval", Some(&cfg), &inputs).write(&a.out, &ber_csv(&reports))
}

struct ReproStage {
    name: String,
    seconds: f64,
    outcome: std::result::Result<String, String>,
}

fn table_config(base: &Config, nt: usize, fading_m: f64, q: usize, a: &ReproduceArgs) -> Config {
    let mut cfg = base.clone();
    cfg.system.nt = nt;
    cfg.system.nr = nt;
    cfg.system.q = q;
    cfg.channel.m = fading_m;
    cfg.eval.snr_db = reference::SNR_DB.to_vec();
    if let Some(t) = a.target_symbols {
        cfg.eval.target_symbols = t;
    }
    if let Some(f) = a.train_frames {
        cfg.training.frames = f;
    }
    if let Some(e) = a.max_epochs {
        cfg.training.max_epochs = e;
    }
    cfg
}

fn ber_experiment(cfg: &Config, archs: &[Architecture]) -> Result<Vec<BerReport>> {
    let mut nets = Vec::new();
    if !archs.is_empty() {
        let data = generate_dataset(cfg, cfg.training.snr_db, cfg.training.frames).map_err(|e| e.in_stage("dataset"))?;
        let (x, y) = (data.features(), data.labels());
        for &arch in archs {
            let (det, _) =
                train_cv(arch, cfg.system.q, &x, &y, &cfg.train_config()).map_err(|e| e.in_stage(format!("train-{arch}")))?;
            nets.push(det);
        }
    }
    let bank = TestBank::simulate(cfg).map_err(|e| e.in_stage("test-frames"))?;
    let mut reports = bank.mld_reports(&cfg.eval.snr_db)?;
    for det in &nets {
        reports.extend(bank.nn_reports(det, &cfg.eval.snr_db)?);
    }
    Ok(reports)
}

fn compare_ber(table: &BerTable, reports: &[BerReport]) -> String {
    let mut out = String::from("| detector | SNR (dB) | simulated | reference | relative deviation |\n|---|---|---|---|---|\n");
    for r in reports {
        let idx = reference::SNR_DB.iter().position(|&s| s == r.snr_db);
        let reference = idx.and_then(|i| table.row(&r.detector).map(|row| row[i]));
        match reference {
            Some(v) => out.push_str(&format!(
                "| {} | {} | {:.6} | {:.6} | {:+.1}% |\n",
                r.detector,
                r.snr_db,
                r.ber(),
                v,
                100.0 * (r.ber() - v) / v
            )),
            None => out.push_str(&format!("| {} | {} | {:.6} | - | - |\n", r.detector, r.snr_db, r.ber())),
        }
    }
    out
}

pub fn cmd_reproduce(a: ReproduceArgs) -> Result<()> {
    let base = match &a.config {
        Some(p) => load_config(p)?,
        None => Config::default().with_env_seed()?,
    };
    fs::create_dir_all(&a.out)?;
    let emitter = Emitter::new("reproduce", Some(&base), &[]);
    let mut stages = Vec::new();

    let t0 = Instant::now();
    let rows = table_6g();
    let mut matched = 0;
    let mut cells = 0;
    for (row, (_, _, printed)) in rows.iter().zip(reference::COMPLEXITY_6G) {
        for (v, p) in [row.mld, row.mlp, row.cnn, row.resnet].iter().zip(printed) {
            cells += 1;
            matched += usize::from(reference::matches_3sf(*v as f64, p));
        }
    }
    let written = emitter.write(&a.out.join("complexity_6g.csv"), &complexity_csv(&rows));
    stages.push(ReproStage {
        name: "complexity_6g".into(),
        seconds: t0.elapsed().as_secs_f64(),
        outcome: written
            .map(|_| format!("{matched}/{cells} cells match at 3 significant figures\n\n{}", complexity_markdown(&rows)))
            .map_err(|e| e.to_string()),
    });

    let experiments: Vec<(String, BerTable, usize)> = vec![
        ("ber_siso_m1".into(), reference::SISO_M1, 4),
        ("ber_siso_m2".into(), reference::SISO_M2, 4),
        ("ber_mimo_m1".into(), reference::MIMO_M1, 4),
        ("ber_mimo_m2".into(), reference::MIMO_M2, 4),
        ("ber_siso_m2_16qam".into(), reference::SISO_M2, 16),
    ];
    for (name, table, q) in experiments {
        let t = Instant::now();
        let cfg = table_config(&base, table.nt, table.fading_m, q, &a);
        let archs: &[Architecture] = if q == 16 { &[Architecture::Mlp] } else { &a.archs };
        let outcome = ber_experiment(&cfg, archs).and_then(|reports| {
            emitter.write(&a.out.join(format!("{name}.csv")), &ber_csv(&reports))?;
            Ok(if q == 4 {
                compare_ber(&table, &reports)
            } else {
                let mut s = String::from("No published 16-QAM cells; MLP relative to MLD:\n\n");
                let mld: Vec<&BerReport> = reports.iter().filter(|r| r.detector == "mld").collect();
                for r in reports.iter().filter(|r| r.detector != "mld") {
                    if let Some(m) = mld.iter().find(|m| m.snr_db == r.snr_db) {
                        s.push_str(&format!(
                            "- {} dB: {} {:.6} vs mld {:.6}\n",
                            r.snr_db,
                            r.detector,
                            r.ber(),
                            m.ber()
                        ));
                    }
                }
                s
            })
        });
        stages.push(ReproStage { name, seconds: t.elapsed().as_secs_f64(), outcome: outcome.map_err(|e| e.to_string()) });
    }

    let mut summary = String::from("# Reproduction summary\n\n");
    let mut failed = 0;
    for s in &stages {
        summary.push_str(&format!("## {} ({:.1} s)\n\n", s.name, s.seconds));
        match &s.outcome {
            Ok(body) => summary.push_str(body),
            Err(e) => {
                failed += 1;
                summary.push_str(&format!("FAILED: {e}\n"));
            }
        }
        summary.push('\n');
    }
    emitter.write(&a.out.join("summary.md"), &summary)?;
    if failed > 0 {
        return Err(Error::Failed(format!("{failed} reproduce stage(s) failed; see summary.md")));
    }
    Ok(())
}
