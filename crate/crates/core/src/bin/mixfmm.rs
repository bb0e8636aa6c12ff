use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use mixfmm::baselines::{kmeans, pca};
use mixfmm::fit::{FitConfig, FmmFitter};
use mixfmm::metrics::MetricsReport;
use mixfmm::mixture::{fit_em_with, EmConfig};
use mixfmm::pipeline::experiment::{ExperimentConfig, KChoice, Method};
use mixfmm::pipeline::io::{self, create, open};
use mixfmm::pipeline::{benchmark_spec, detect_spikes, generate, run_experiment, segment, GeneratorSpec, SpikeSet};
use mixfmm::select::{select_k_with, SelectConfig};
use mixfmm::{Error, FmmModel, Result};

#[derive(Parser)]
#[command(name = "mixfmm", version, about = "Spike sorting with mixtures of FMM models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled spike set
    Simulate {
        /// Generator description (JSON); the built-in benchmark when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the generator seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect spike peaks in a voltage trace
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        threshold_c: f64,
        #[arg(long, default_value_t = 64)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut aligned windows around detected peaks
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        peaks: PathBuf,
        #[arg(long, default_value_t = 64)]
        window: usize,
        #[arg(long, default_value_t = 20)]
        align_at: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an FMM model to every signal of a spike file
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster spikes with a MixFMM model
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Choose the number of clusters from the log-likelihood curve
    SelectK {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        k_max: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        /// Settle borderline elbows with the silhouette
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        asw_tie_break: bool,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// PCA + k-means baseline
    Baseline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        components: usize,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Validity indices of a labelling
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full experiment: cluster, score and export
    Run {
        #[arg(long)]
        input: PathBuf,
        /// mixfmm1, mixfmm3 or pca_km
        #[arg(long, default_value = "mixfmm3")]
        method: String,
        /// Number of clusters or "auto"
        #[arg(long, default_value = "auto")]
        k: String,
        #[arg(long, default_value_t = 5)]
        k_max: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct EmArgs {
    /// FMM order of each component
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    homoscedastic: bool,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

impl EmArgs {
    fn config(&self) -> EmConfig {
        EmConfig {
            n_starts: self.starts,
            seed: self.seed,
            homoscedastic: self.homoscedastic,
            max_iter: self.max_iter,
            ..EmConfig::default()
        }
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

#[derive(Serialize)]
struct SingleFit<'a> {
    id: &'a str,
    model: FmmModel,
    rss: f64,
    r_squared: f64,
}

fn read_set(path: &Path) -> Result<SpikeSet> {
    io::read_spikes(open(path)?, &path.display().to_string())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create(path)?.write_all(text.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { spec, seed, out } => {
            let mut spec = match spec {
                Some(path) => serde_json::from_reader::<_, GeneratorSpec>(open(&path)?)?,
                None => benchmark_spec(0),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            io::write_spikes(create(&out)?, &generate(&spec)?)
        }
        Command::Detect {
            input,
            threshold_c,
            window,
            out,
        } => {
            let rec = io::read_recording(open(&input)?)?;
            io::write_peaks(create(&out)?, &detect_spikes(&rec, threshold_c, window)?)
        }
        Command::Segment {
            input,
            peaks,
            window,
            align_at,
            out,
        } => {
            let rec = io::read_recording(open(&input)?)?;
            let peaks = io::read_peaks(open(&peaks)?)?;
            let seg = segment(&rec, &peaks, window, align_at)?;
            if !seg.dropped.is_empty() {
                eprintln!("dropped {} peaks too close to the trace edges", seg.dropped.len());
            }
            io::write_spikes(create(&out)?, &seg.spikes)
        }
        Command::Fit { input, m, out } => {
            let set = read_set(&input)?;
            let fitter = FmmFitter::new(&set.grid, &FitConfig::default())?;
            let fits = set
                .signals
                .iter()
                .map(|s| {
                    let r = fitter.fit_multi(&s.values, m)?;
                    Ok(SingleFit {
                        id: &s.id,
                        model: r.model,
                        rss: r.rss,
                        r_squared: r.r_squared,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_text(&out, &(serde_json::to_string_pretty(&fits)? + "\n"))
        }
        Command::Cluster { input, k, em, out_dir } => {
            let set = read_set(&input)?;
            let fitter = FmmFitter::new(&set.grid, &FitConfig::default())?;
            let fit = fit_em_with(&set.signals, &fitter, k, em.m, &em.config())?;
            std::fs::create_dir_all(&out_dir)?;
            io::write_labels(create(&out_dir.join("labels.csv"))?, &fit.labels())?;
            write_text(&out_dir.join("model.json"), &(fit.model.to_json()? + "\n"))?;
            io::write_templates(create(&out_dir.join("templates.csv"))?, &set.grid, &fit.model.means(&set.grid))
        }
        Command::SelectK {
            input,
            k_max,
            rho,
            asw_tie_break,
            em,
            out,
        } => {
            let set = read_set(&input)?;
            let fitter = FmmFitter::new(&set.grid, &FitConfig::default())?;
            let sel = SelectConfig {
                k_max,
                rho,
                asw_tie_break,
                ..SelectConfig::default()
            };
            let selection = select_k_with(&set.signals, &fitter, em.m, &sel, &em.config())?;
            if selection.trace.fallback {
                eprintln!("no gain ratio fell below rho; reporting K = {k_max}");
            }
            write_text(&out, &selection.trace.to_table())
        }
        Command::Baseline {
            input,
            k,
            components,
            starts,
            seed,
            out_dir,
        } => {
            let set = read_set(&input)?;
            let proj = pca(&set.signals, components)?;
            let km = kmeans(&proj.scores, k, starts, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            io::write_labels(create(&out_dir.join("labels.csv"))?, &km.labels)?;
            let mut scores = csv::Writer::from_writer(create(&out_dir.join("scores.csv"))?);
            let header: Vec<String> = (1..=components).map(|j| format!("pc{j}")).collect();
            let to_parse = |e: csv::Error| Error::Parse(e.to_string());
            scores.write_record(&header).map_err(to_parse)?;
            for row in &proj.scores {
                scores
                    .write_record(row.iter().map(f64::to_string))
                    .map_err(to_parse)?;
            }
            scores.flush()?;
            Ok(())
        }
        Command::Score { input, labels, out } => {
            let set = read_set(&input)?;
            let labels = io::read_labels(open(&labels)?)?;
            let report = MetricsReport::compute(&set.signals, &labels, set.true_labels.as_deref())?;
            write_text(&out, &report.to_table())
        }
        Command::Run {
            input,
            method,
            k,
            k_max,
            rho,
            em,
            out_dir,
        } => {
            let set = read_set(&input)?;
            let method: Method = method.parse()?;
            let cfg = ExperimentConfig {
                em: em.config(),
                select: SelectConfig {
                    k_max,
                    rho,
                    ..SelectConfig::default()
                },
                ..ExperimentConfig::default()
            };
            let report = run_experiment(&set, method, k.parse::<KChoice>()?, &cfg)?;
            report.write(&set, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = ErrorLine {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&line).expect("serializable"));
            ExitCode::from(2)
        }
    }
}
