//! Command-line front end. `run` returns the process exit code.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RhinoError};
use crate::graph::{aggregate_summary_binary, aggregate_summary_prob, remove_cycles_greedy, TemporalGraph};
use crate::io;
use crate::metrics::{f1_scores_masked, temporal_auroc};
use crate::synthgen::{generate, GenConfig};
use crate::trainer::{train_with_log, TrainConfig};
use crate::treatment::{cate, CateQuery, GraphMode, DEFAULT_GRAPH_SAMPLES, DEFAULT_ROLLOUTS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rhino", version, about = "Temporal causal discovery with instantaneous effects and history-dependent noise")]
struct Cli {
    /// Seed overriding the one in any config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a synthetic dataset with its ground-truth graph.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; receives data.csv, truth.csv and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Progress log (JSON lines); defaults to `<out>.log.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Export the learned graph.
    Discover {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Write edge probabilities instead of a thresholded graph.
        #[arg(long)]
        probabilities: bool,
        /// Aggregate over lags.
        #[arg(long)]
        summary: bool,
    },
    /// Score a predicted graph against the truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Edge probabilities for AUROC.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Skip lagged self-edges.
        #[arg(long)]
        ignore_self: bool,
    },
    /// Estimate a conditional average treatment effect.
    Cate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        query: PathBuf,
    },
}

/// Query file for `cate`; history rows are time steps, oldest first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryFile {
    pub history: Vec<Vec<f64>>,
    pub intervention: usize,
    pub treatment: f64,
    pub reference: f64,
    pub target: usize,
    pub horizon: usize,
    #[serde(default = "default_graphs")]
    pub graphs: usize,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    #[serde(default)]
    pub mode: GraphMode,
}

fn default_graphs() -> usize {
    DEFAULT_GRAPH_SAMPLES
}

fn default_rollouts() -> usize {
    DEFAULT_ROLLOUTS
}

impl QueryFile {
    fn to_query(&self) -> Result<CateQuery> {
        let d = self.history.first().map_or(0, Vec::len);
        if self.history.iter().any(|r| r.len() != d) {
            return Err(RhinoError::invalid("history rows differ in length"));
        }
        let flat: Vec<f64> = self.history.iter().flatten().copied().collect();
        let history = Array2::from_shape_vec((self.history.len(), d), flat).expect("rectangular history");
        Ok(CateQuery {
            graphs: self.graphs,
            rollouts: self.rollouts,
            mode: self.mode,
            ..CateQuery::new(history, self.intervention, self.treatment, self.reference, self.target, self.horizon)
        })
    }
}

#[derive(Debug, Serialize)]
struct CateOutput<'a> {
    estimate: f64,
    std_error: f64,
    query: &'a QueryFile,
}

#[derive(Debug, Serialize)]
struct Manifest {
    config: GenConfig,
    files: Vec<(String, String)>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn threshold(probs: &ndarray::Array3<f64>, level: f64) -> Result<TemporalGraph> {
    if !(0.0..1.0).contains(&level) {
        return Err(RhinoError::invalid("threshold must lie in [0, 1)"));
    }
    let mut adj = probs.mapv(|p| u8::from(p > level));
    for i in 0..adj.shape()[1] {
        adj[[0, i, i]] = 0;
    }
    let mut inst = adj.index_axis(Axis(0), 0).to_owned();
    remove_cycles_greedy(&mut inst, &probs.index_axis(Axis(0), 0).to_owned());
    adj.index_axis_mut(Axis(0), 0).assign(&inst);
    TemporalGraph::from_adjacency(adj)
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let mut cfg: GenConfig = match config {
                Some(p) => read_json(&p)?,
                None => GenConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let (gt, ds) = generate(&cfg)?;
            fs::create_dir_all(&out)?;
            let data = out.join("data.csv");
            let truth = out.join("truth.csv");
            io::save_dataset(&ds, &data)?;
            io::write_graph(&gt.graph, File::create(&truth)?)?;
            let manifest = Manifest {
                config: cfg,
                files: vec![
                    ("data.csv".into(), sha256_file(&data)?),
                    ("truth.csv".into(), sha256_file(&truth)?),
                ],
            };
            fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        }
        Command::Train { data, config, out, log } => {
            let mut cfg: TrainConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let ds = io::load_dataset(&data)?;
            let log_path = log.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".log.jsonl");
                PathBuf::from(p)
            });
            let mut log_file = std::io::BufWriter::new(File::create(&log_path)?);
            let model = train_with_log(&ds, &cfg, Some(&mut log_file))?;
            log_file.flush()?;
            io::save_model(&model, &out)?;
        }
        Command::Discover {
            model,
            out,
            threshold: level,
            probabilities,
            summary,
        } => {
            let m = io::load_model(&model)?;
            let probs = m.edge_probabilities();
            let file = File::create(&out)?;
            match (probabilities, summary) {
                (true, false) => io::write_temporal_scores(&probs, file)?,
                (true, true) => io::write_summary(&aggregate_summary_prob(&probs, false)?, file)?,
                (false, false) => io::write_graph(&threshold(&probs, level)?, file)?,
                (false, true) => io::write_summary(&aggregate_summary_binary(&threshold(&probs, level)?, false), file)?,
            }
        }
        Command::Evaluate {
            pred,
            truth,
            scores,
            ignore_self,
        } => {
            let p = io::read_graph(File::open(&pred)?)?;
            let t = io::read_graph(File::open(&truth)?)?;
            let mut report = f1_scores_masked(&p, &t, ignore_self)?;
            if let Some(path) = scores {
                let s = io::read_temporal_scores(File::open(&path)?)?;
                report.auroc = match temporal_auroc(&s, &t) {
                    Ok(v) => Some(v),
                    Err(RhinoError::UndefinedMetric(_)) => None,
                    Err(e) => return Err(e),
                };
            }
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Command::Cate { model, query } => {
            let m = io::load_model(&model)?;
            let qf: QueryFile = read_json(&query)?;
            let q = qf.to_query()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            let est = cate(&m, &q, &mut rng)?;
            let out = CateOutput {
                estimate: est.estimate,
                std_error: est.std_error,
                query: &qf,
            };
            writeln!(stdout, "{}", serde_json::to_string_pretty(&out)?)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, A>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_DATA
            }
        }
    }
}
