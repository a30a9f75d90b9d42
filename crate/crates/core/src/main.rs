use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use phenoclust::cli::{cmd_cluster, cmd_necessity, cmd_preprocess, cmd_run_all, cmd_select, RunConfig};
use phenoclust::pipeline::PipelineConfig;
use phenoclust::{Error, Result};

#[derive(Parser)]
#[command(
    name = "phenoclust",
    version,
    about = "Unsupervised phenotype discovery: low-rank feature selection, Gower/PAM clustering, and cluster profiling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Consolidate categories, dummy code, drop incomplete rows, finalize.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Maximum categories kept per categorical column.
        #[arg(long, default_value_t = 3)]
        max_categories: usize,
        /// Average duplicate measurements sharing a row id.
        #[arg(long)]
        average_duplicates: bool,
    },
    /// Cross-validated feature selection over the regularization sweep.
    Select {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cluster the full dataset on a feature set and profile the clusters.
    Cluster {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated feature indices or column names.
        #[arg(long, value_delimiter = ',', required = true)]
        features: Vec<String>,
        /// Optional external grouping CSV (row_id, label) to profile instead
        /// of the computed clusters.
        #[arg(long)]
        group_labels: Option<PathBuf>,
    },
    /// Shuffle-based feature necessity test against an existing clustering.
    Necessity {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        features: Vec<String>,
        /// Labels CSV produced by the cluster or run-all command.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Full pipeline: select, necessity-test, drop, recluster, profile.
    /// `--seed` is required so reruns are explicitly reproducible.
    RunAll {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_folds: Option<usize>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    gamma_step: Option<f64>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    necessity_threshold: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => {
                let (input, schema, output) = match (&self.input, &self.schema, &self.output) {
                    (Some(i), Some(s), Some(o)) => (i.clone(), s.clone(), o.clone()),
                    _ => {
                        return Err(Error::Config(
                            "provide --config or all of --input, --schema, --output".into(),
                        ))
                    }
                };
                RunConfig {
                    input,
                    schema,
                    output,
                    pipeline: PipelineConfig::default(),
                }
            }
        };
        if let Some(v) = &self.input {
            config.input = v.clone();
        }
        if let Some(v) = &self.schema {
            config.schema = v.clone();
        }
        if let Some(v) = &self.output {
            config.output = v.clone();
        }
        let p = &mut config.pipeline;
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.n_folds {
            p.n_folds = v;
        }
        if let Some(v) = self.gamma0 {
            p.gamma0 = v;
        }
        if let Some(v) = self.gamma_step {
            p.gamma_step = Some(v);
        }
        if let Some(v) = self.n_min {
            p.n_min = v;
        }
        if let Some(v) = self.n_max {
            p.n_max = v;
        }
        if let Some(v) = self.rank {
            p.rank = v;
        }
        if let Some(v) = self.repeats {
            p.repeats = v;
        }
        if let Some(v) = self.necessity_threshold {
            p.necessity_threshold = v;
        }
        if let Some(v) = self.alpha {
            p.alpha = v;
        }
        if let Some(v) = self.max_iters {
            p.max_iters = v;
        }
        if config.output.as_os_str().is_empty() {
            return Err(Error::Config(
                "output directory required (set `output` in the config or pass --output)".into(),
            ));
        }
        Ok(config)
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    kind: &'a str,
    message: String,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess {
            input,
            schema,
            output,
            max_categories,
            average_duplicates,
        } => {
            let ds = cmd_preprocess(&input, &schema, &output, max_categories, average_duplicates)?;
            println!(
                "finalized {} rows x {} columns -> {}",
                ds.n_rows(),
                ds.n_cols(),
                output.display()
            );
        }
        Command::Select { common } => {
            let config = common.resolve()?;
            let selection = cmd_select(&config)?;
            println!(
                "selected {} features across {} folds -> {}",
                selection.final_features.len(),
                selection.per_fold.len(),
                config.output.display()
            );
        }
        Command::Cluster {
            common,
            features,
            group_labels,
        } => {
            let config = common.resolve()?;
            let assignment = cmd_cluster(&config, &features, group_labels.as_deref())?;
            println!(
                "{} clusters (silhouette {:.4}) -> {}",
                assignment.n_clusters,
                assignment.silhouette,
                config.output.display()
            );
        }
        Command::Necessity {
            common,
            features,
            labels,
        } => {
            let config = common.resolve()?;
            let report = cmd_necessity(&config, &features, &labels)?;
            let unnecessary = report.per_feature.iter().filter(|f| !f.necessary).count();
            println!(
                "{} of {} features flagged unnecessary -> {}",
                unnecessary,
                report.per_feature.len(),
                config.output.display()
            );
        }
        Command::RunAll { common } => {
            let seed = common.seed.ok_or_else(|| {
                Error::Config("run-all requires an explicit --seed for reproducibility".into())
            })?;
            let mut config = common.resolve()?;
            config.pipeline.seed = seed;
            let result = cmd_run_all(&config)?;
            println!(
                "{} clusters from {} surviving features -> {}",
                result.final_assignment.n_clusters,
                result.surviving_features.len(),
                config.output.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = ErrorLine {
                kind: e.kind(),
                message: e.to_string(),
            };
            eprintln!(
                "error: {}",
                serde_json::to_string(&line).unwrap_or_else(|_| "{\"kind\":\"unknown\"}".to_string())
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
