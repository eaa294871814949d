//! `vizcritique`: offline chart analysis and report comparison.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vizcritique::config::ClarifyConfig;
use vizcritique::feedback::{LlmError, LlmMode, QuestionBank};
use vizcritique::load_chart_image;
use vizcritique::pipeline::{run_analysis, AnalysisRequest, Analyzer, DirSink};
use vizcritique::report::{deserialize_report, render_delta_table, render_markdown, serialize_report, DesignReport};
use vizcritique::setup::{build_backends, fixture_digest, BackendSettings};
use vizcritique::synth::{generate, reference_file_text, SynthSpec};
use vizcritique::tracker::{diff_metrics, track, TrackError, TrackerOutput};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REPLAY_MISS: u8 = 3;
const EXIT_SCHEMA: u8 = 4;

#[derive(Parser)]
#[command(name = "vizcritique", version, about = "Design feedback for chart images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one chart image and write the report and artifacts.
    Analyze(AnalyzeArgs),
    /// Print the metric deltas between two canonical reports.
    Compare(CompareArgs),
    /// Print the fixture digest of an image.
    Digest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "png")]
        format: String,
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Write a seeded synthetic chart and its fixture responses.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 320)]
        width: u32,
        #[arg(long, default_value_t = 240)]
        height: u32,
        /// Directory receiving chart.png and fixtures/.
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the bundled reference distributions file.
    GenReferences {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Md,
    Canonical,
}

#[derive(Args)]
struct BackendArgs {
    /// LLM mode: live, record or replay.
    #[arg(long, default_value = "live")]
    mode: LlmMode,
    /// JSON-lines exchange store for record and replay.
    #[arg(long)]
    exchanges: Option<PathBuf>,
    #[arg(long)]
    backend_llm_url: Option<String>,
    #[arg(long)]
    backend_saliency_url: Option<String>,
    #[arg(long)]
    backend_ocr_url: Option<String>,
    #[arg(long)]
    backend_chart_table_url: Option<String>,
    #[arg(long)]
    backend_detector_url: Option<String>,
    /// Directory of `<digest>.ocr|.table|.detections` fixture responses.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
}

impl BackendArgs {
    fn settings(&self) -> BackendSettings {
        BackendSettings {
            mode: self.mode,
            exchanges: self.exchanges.clone(),
            llm_url: self.backend_llm_url.clone(),
            saliency_url: self.backend_saliency_url.clone(),
            ocr_url: self.backend_ocr_url.clone(),
            chart_table_url: self.backend_chart_table_url.clone(),
            detector_url: self.backend_detector_url.clone(),
            fixtures: self.fixtures.clone(),
            timeout_secs: self.timeout_secs,
            ..BackendSettings::default()
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output directory: report.json, artifacts/ and, for md, report.md.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    format: OutputFormat,
    /// Thresholds TOML; defaults apply when omitted.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Canonical report of the previous revision, for tracking.
    #[arg(long)]
    previous: Option<PathBuf>,
    #[arg(long, default_value = "1")]
    revision_id: String,
    /// Timestamp recorded in the report; defaults to now.
    #[arg(long)]
    created_at: Option<String>,
    #[command(flatten)]
    backends: BackendArgs,
}

#[derive(Args)]
struct CompareArgs {
    previous: PathBuf,
    current: PathBuf,
    /// Also summarize the changes per topic with the LLM.
    #[arg(long)]
    track: bool,
    #[command(flatten)]
    backends: BackendArgs,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    fn other(message: impl ToString) -> Self {
        Self::new(EXIT_FAILURE, message.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<ClarifyConfig, Failure> {
    let Some(path) = path else {
        return Ok(ClarifyConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    ClarifyConfig::from_toml(&text).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
}

fn read_report(path: &Path) -> Result<DesignReport, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    deserialize_report(&text).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
}

fn format_of(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let bytes = std::fs::read(&args.input).map_err(|e| Failure::usage(format!("{}: {e}", args.input.display())))?;
    let config = load_config(args.thresholds.as_deref())?;
    let previous = args.previous.as_deref().map(read_report).transpose()?;
    let backends = build_backends(&args.backends.settings()).map_err(Failure::other)?;
    let analyzer = Analyzer::new(config, backends);
    let created_at = args
        .created_at
        .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let request = AnalysisRequest {
        revision_id: &args.revision_id,
        created_at: &created_at,
        image_bytes: &bytes,
        format: &format_of(&args.input),
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::other(format!("{}: {e}", args.out.display())))?;
    let sink = DirSink::new(&args.out);
    let report = run_analysis(&request, previous.as_ref(), &analyzer, &sink).map_err(|e| match &e.replay_miss {
        Some(digest) => Failure::new(
            EXIT_REPLAY_MISS,
            format!("stage {}: no recorded exchange for prompt digest {digest}", e.stage),
        ),
        None => Failure::other(e),
    })?;
    write(&args.out.join("report.json"), &serialize_report(&report))?;
    if let OutputFormat::Md = args.format {
        write(&args.out.join("report.md"), &render_markdown(&report))?;
    }
    println!("{}", args.out.display());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Failure> {
    let prev = read_report(&args.previous)?;
    let curr = read_report(&args.current)?;
    let deltas = diff_metrics(&prev, &curr).map_err(|e| Failure::new(EXIT_SCHEMA, e.to_string()))?;
    print!("{}", render_delta_table(&deltas));
    if args.track {
        let backends = build_backends(&args.backends.settings()).map_err(Failure::other)?;
        let out = track(Some(&prev), &curr, &QuestionBank::bundled(), &backends.llm).map_err(|e| match e {
            TrackError::Schema(m) => Failure::new(EXIT_SCHEMA, m.to_string()),
            TrackError::Llm(l @ LlmError::ReplayMiss { .. }) => Failure::new(EXIT_REPLAY_MISS, l.to_string()),
            TrackError::Llm(l) => Failure::other(l),
        })?;
        if let TrackerOutput::Compared { topics, .. } = out {
            println!();
            for t in topics {
                println!("- {}: {}", t.topic.title(), t.summary);
            }
        }
    }
    Ok(())
}

fn digest(input: &Path, format: &str, thresholds: Option<&Path>) -> Result<(), Failure> {
    let bytes = std::fs::read(input).map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
    let img = load_chart_image(&bytes, format).map_err(Failure::other)?;
    println!("{}", fixture_digest(&img, load_config(thresholds)?.analysis_max_dim));
    Ok(())
}

fn synth(seed: u64, width: u32, height: u32, out: &Path) -> Result<(), Failure> {
    let chart = generate(&SynthSpec::random(seed, width, height), seed);
    std::fs::create_dir_all(out).map_err(|e| Failure::other(format!("{}: {e}", out.display())))?;
    std::fs::write(out.join("chart.png"), chart.image.to_png_bytes()).map_err(Failure::other)?;
    let digest = chart
        .write_fixtures(&out.join("fixtures"), ClarifyConfig::default().analysis_max_dim)
        .map_err(|e| Failure::usage(e.to_string()))?;
    println!("{digest}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Compare(args) => compare(args),
        Command::Digest {
            input,
            format,
            thresholds,
        } => digest(&input, &format, thresholds.as_deref()),
        Command::Synth {
            seed,
            width,
            height,
            out,
        } => synth(seed, width, height, &out),
        Command::GenReferences { out } => match out {
            Some(path) => write(&path, &reference_file_text()),
            None => {
                print!("{}", reference_file_text());
                Ok(())
            }
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
