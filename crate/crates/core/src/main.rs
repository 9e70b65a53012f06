use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use svseval::audio::{load_wav, mixdown_mono, select_excerpt, write_wav, AudioBuffer, ExcerptRequest, SampleFormat};
use svseval::bsseval::ProjectionConfig;
use svseval::correlation::{parse_directions, tradeoff_svg, tradeoff_table, write_tradeoff_csv, MetricTable};
use svseval::loudness::integrated_loudness;
use svseval::pipeline::{
    compute_table, parse_metric_list, read_manifest, write_manifest, write_metric_table, ManifestRow, MetricsOptions,
    PipelineError,
};
use svseval::prepare::{prepare_channels, DEFAULT_TARGET_LUFS};
use svseval::service::{self, ServiceConfig};
use svseval::study::{
    compute_dmos, read_ratings_csv, screen_participants, BootstrapConfig, DmosSummary, ModelType, Screening,
};

#[derive(Parser)]
#[command(name = "svseval", version, about = "Singing voice separation quality evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mix stimuli down to mono and normalize their loudness.
    Prepare {
        /// Job manifest CSV.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TARGET_LUFS, allow_hyphen_values = true)]
        target_lufs: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute objective metrics for every manifest row.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated: si-sdr, sdr, sir, sar, mrstft, fad:<encoder>, mse:<encoder>.
        #[arg(long)]
        metrics: String,
        /// DMOS JSON from the `dmos` subcommand; adds a dmos column.
        #[arg(long)]
        dmos: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        filter_length: usize,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Screen participants and aggregate ratings into DMOS.
    Dmos {
        #[arg(long)]
        ratings: PathBuf,
        /// Comma-separated gold stimulus ids, in addition to rows typed `gold`.
        #[arg(long, value_delimiter = ',')]
        gold: Vec<String>,
        /// DMOS JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-participant screening report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rank-correlate metrics with DMOS per model type.
    Correlate {
        #[arg(long)]
        table: PathBuf,
        /// JSON sidecar mapping metric name to direction.
        #[arg(long)]
        directions: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the listening-study HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pick a random excerpt where the target is active.
    Excerpt {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
        #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Writes target.wav and mixture.wav cut at the chosen offset.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "Usage", message: message.into() }
    }

    fn runtime(kind: &'static str, err: impl std::fmt::Display) -> Self {
        Self { code: 1, kind, message: err.to_string() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::UnknownMetric(_) | PipelineError::DuplicateMetric(_) => CliError::usage(e.to_string()),
            e => CliError::runtime("Metrics", e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime("Io", e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(CliError::usage(e.to_string().trim())),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("{}", json!({ "error": e.kind, "message": e.message }));
    ExitCode::from(e.code)
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Prepare { input, target_lufs, out } => prepare(&input, target_lufs, &out),
        Command::Metrics { manifest, metrics, dmos, filter_length, out } => {
            run_metrics(&manifest, &metrics, dmos.as_deref(), filter_length, out.as_deref())
        }
        Command::Dmos { ratings, gold, out, report, resamples, confidence, seed } => run_dmos(
            &ratings,
            &gold,
            out.as_deref(),
            report.as_deref(),
            BootstrapConfig { resamples, confidence, seed },
        ),
        Command::Correlate { table, directions, out_dir } => correlate(&table, directions.as_deref(), &out_dir),
        Command::Serve { config } => serve(&config),
        Command::Excerpt { target, mixture, seconds, threshold, seed, out_dir } => {
            excerpt(&target, &mixture, ExcerptRequest { duration_s: seconds, threshold_db: threshold, seed }, out_dir.as_deref())
        }
    }
}

fn open(path: impl AsRef<Path>) -> CliResult<File> {
    let path = path.as_ref();
    File::open(path).map_err(|e| CliError::runtime("Io", format!("{}: {e}", path.display())))
}

fn create(path: impl AsRef<Path>) -> CliResult<File> {
    let path = path.as_ref();
    File::create(path).map_err(|e| CliError::runtime("Io", format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn prepare(manifest: &Path, target_lufs: f64, out: &Path) -> CliResult {
    let rows = read_manifest(manifest)?;
    let audio_dir = out.join("audio");
    std::fs::create_dir_all(&audio_dir)?;
    let mut report = csv::Writer::from_path(out.join("prepare_report.csv")).map_err(|e| CliError::runtime("Io", e))?;
    report
        .write_record(["output", "source", "input_lufs", "applied_gain_db", "output_lufs", "peak_dbfs"])
        .map_err(|e| CliError::runtime("Io", e))?;

    let mut process = |src: &Path, name: String| -> CliResult<PathBuf> {
        let channels = load_wav(src).map_err(|e| CliError::runtime("Audio", format!("{}: {e}", src.display())))?;
        let input = mixdown_mono(&channels)
            .ok()
            .and_then(|m| integrated_loudness(&m).ok())
            .and_then(|r| r.lufs());
        let (buffer, result) = prepare_channels(&channels, target_lufs)
            .map_err(|e| CliError::runtime("Loudness", format!("{}: {e}", src.display())))?;
        let dest = audio_dir.join(name);
        write_wav(&dest, std::slice::from_ref(&buffer), SampleFormat::Float32).map_err(|e| CliError::runtime("Audio", e))?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        report
            .write_record([
                dest.display().to_string(),
                src.display().to_string(),
                fmt(input),
                result.applied_gain_db.to_string(),
                fmt(result.lufs()),
                (20.0 * buffer.peak().log10()).to_string(),
            ])
            .map_err(|e| CliError::runtime("Io", e))?;
        Ok(std::path::absolute(&dest)?)
    };

    let mut prepared: Vec<ManifestRow> = Vec::with_capacity(rows.len());
    for row in &rows {
        let id = &row.stimulus_id;
        let mut new = row.clone();
        new.reference = process(&row.reference, format!("{id}_reference.wav"))?;
        new.estimate = process(&row.estimate, format!("{id}_estimate.wav"))?;
        new.interference = row
            .interference
            .iter()
            .enumerate()
            .map(|(k, p)| process(p, format!("{id}_interference{k}.wav")))
            .collect::<CliResult<_>>()?;
        prepared.push(new);
    }
    report.flush()?;
    write_manifest(create(out.join("manifest.csv"))?, &prepared)?;
    println!("{}", json!({ "stimuli": prepared.len(), "manifest": out.join("manifest.csv") }));
    Ok(())
}

fn run_metrics(manifest: &Path, metrics: &str, dmos: Option<&Path>, filter_length: usize, out: Option<&Path>) -> CliResult {
    let metrics = parse_metric_list(metrics)?;
    if filter_length == 0 {
        return Err(CliError::usage("--filter-length must be at least 1"));
    }
    let dmos = match dmos {
        Some(p) => {
            let list: Vec<DmosSummary> = serde_json::from_reader(open(p)?)
                .map_err(|e| CliError::runtime("Dmos", format!("{}: {e}", p.display())))?;
            Some(list.into_iter().map(|d| (d.stimulus_id, d.dmos)).collect::<BTreeMap<_, _>>())
        }
        None => None,
    };
    let rows = read_manifest(manifest)?;
    let options = MetricsOptions {
        projection: ProjectionConfig { filter_length, ..ProjectionConfig::default() },
        ..MetricsOptions::default()
    };
    let table = compute_table(&rows, &metrics, &options)?;
    let mut w = output(out)?;
    write_metric_table(&mut w, &table, &metrics, dmos.as_ref())?;
    w.flush()?;
    Ok(())
}

fn run_dmos(ratings: &Path, gold: &[String], out: Option<&Path>, report: Option<&Path>, bootstrap: BootstrapConfig) -> CliResult {
    let rows = read_ratings_csv(open(ratings)?).map_err(|e| CliError::runtime("Ratings", e))?;
    let mut gold_ids: BTreeSet<String> = gold.iter().map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect();
    gold_ids.extend(rows.iter().filter(|r| r.model_type == ModelType::Gold).map(|r| r.stimulus_id.clone()));
    let records: Vec<_> = rows.iter().map(|r| r.record()).collect();
    for r in &records {
        r.validate().map_err(|e| CliError::runtime("Ratings", format!("{}: {e}", r.stimulus_id)))?;
    }

    let screening = screen_participants(&records, &gold_ids);
    let retained: BTreeSet<String> = screening
        .iter()
        .filter(|r| r.decision == Screening::Retained)
        .map(|r| r.participant_id.clone())
        .collect();
    let stimuli: Vec<String> = records
        .iter()
        .map(|r| r.stimulus_id.clone())
        .filter(|s| !gold_ids.contains(s))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let summaries = compute_dmos(&records, &retained, &stimuli, &bootstrap).map_err(|e| CliError::runtime("Dmos", e))?;

    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, &summaries).map_err(|e| CliError::runtime("Io", e))?;
    writeln!(w)?;
    w.flush()?;
    if let Some(path) = report {
        let mut f = BufWriter::new(create(path)?);
        serde_json::to_writer_pretty(&mut f, &screening).map_err(|e| CliError::runtime("Io", e))?;
        writeln!(f)?;
        f.flush()?;
    }
    let excluded = screening.len() - retained.len();
    log::info!("{} participants, {excluded} excluded, {} stimuli", screening.len(), summaries.len());
    Ok(())
}

fn correlate(table: &Path, directions: Option<&Path>, out_dir: &Path) -> CliResult {
    let table = MetricTable::read_csv(open(table)?).map_err(|e| CliError::runtime("Table", e))?;
    let directions = match directions {
        Some(p) => parse_directions(&std::fs::read_to_string(p)?).map_err(|e| CliError::runtime("Directions", e))?,
        None => BTreeMap::new(),
    };
    let rows = tradeoff_table(&table, &directions).map_err(|e| CliError::runtime("Correlation", e))?;
    std::fs::create_dir_all(out_dir)?;
    write_tradeoff_csv(create(out_dir.join("tradeoff.csv"))?, &rows).map_err(|e| CliError::runtime("Io", e))?;
    let mut f = BufWriter::new(create(out_dir.join("tradeoff.json"))?);
    serde_json::to_writer_pretty(&mut f, &rows).map_err(|e| CliError::runtime("Io", e))?;
    writeln!(f)?;
    f.flush()?;
    std::fs::write(out_dir.join("tradeoff.svg"), tradeoff_svg(&rows))?;
    println!(
        "{}",
        json!({
            "discriminative_rows": table.count(ModelType::Discriminative),
            "generative_rows": table.count(ModelType::Generative),
            "metrics": rows.len(),
        })
    );
    Ok(())
}

fn serve(config: &Path) -> CliResult {
    let config = ServiceConfig::load(config).map_err(|e| CliError::runtime("Config", e))?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(service::run(config)).map_err(|e| CliError::runtime("Service", e))
}

fn audio_err(p: &Path) -> impl Fn(svseval::audio::AudioError) -> CliError + '_ {
    move |e| CliError::runtime("Audio", format!("{}: {e}", p.display()))
}

fn excerpt(target: &Path, mixture: &Path, request: ExcerptRequest, out_dir: Option<&Path>) -> CliResult {
    let target_ch = load_wav(target).map_err(audio_err(target))?;
    let mixture_ch = load_wav(mixture).map_err(audio_err(mixture))?;
    let t = mixdown_mono(&target_ch).map_err(audio_err(target))?;
    let m = mixdown_mono(&mixture_ch).map_err(audio_err(mixture))?;
    let offset = select_excerpt(&t, &m, &request).map_err(|e| CliError::runtime("Excerpt", e))?;
    let len = request.window_len(t.sample_rate());

    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (name, channels, src) in [("target.wav", &target_ch, target), ("mixture.wav", &mixture_ch, mixture)] {
            let cut: Vec<AudioBuffer> =
                channels.iter().map(|c| c.slice(offset, len)).collect::<Result<_, _>>().map_err(audio_err(src))?;
            let dest = dir.join(name);
            write_wav(&dest, &cut, SampleFormat::Float32).map_err(audio_err(&dest))?;
            files.push(dest);
        }
    }
    println!(
        "{}",
        json!({
            "offset_samples": offset,
            "offset_seconds": offset as f64 / f64::from(t.sample_rate()),
            "length_samples": len,
            "files": files,
        })
    );
    Ok(())
}
