use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use emcomm::agent::{load_agent, Frontend, FrontendConfig};
use emcomm::data::EvalSet;
use emcomm::evaluation::{protocol_complexity, success_matrix};
use emcomm::experiment::{preset, run_experiment, ExperimentConfig, RunOptions, Scale, PRESETS};
use emcomm::report::{heatmap_svg, matrix_rows, num, write_csv_file, MATRIX_HEADER};
use emcomm::worldgen::{build_splits_with, write_png, DatasetSplits, GenConfig, Split};
use emcomm::Agent;

#[derive(Parser)]
#[command(name = "emcomm", version, about = "Communities of agents learning to talk through a reference game")]
struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info", env = "EMCOMM_LOG")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    InDomain,
    OutOfDomain,
}

impl SplitArg {
    fn split(self) -> Split {
        match self {
            SplitArg::Train => Split::Train,
            SplitArg::InDomain => Split::EvalInDomain,
            SplitArg::OutOfDomain => Split::EvalOutOfDomain,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and write its manifest and statistics.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "EMCOMM_OUT", default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        n_train: usize,
        #[arg(long, default_value_t = 1000)]
        n_eval_in_domain: usize,
        #[arg(long, default_value_t = 5000)]
        n_eval_out_of_domain: usize,
        /// Also write PNGs of the first N training images.
        #[arg(long, default_value_t = 0)]
        images: usize,
    },
    /// Run an experiment from a TOML file or a preset.
    Run {
        /// Experiment TOML.
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Parent directory; the run goes into `<out>/<name>`.
        #[arg(long, env = "EMCOMM_OUT", default_value = "runs")]
        out: PathBuf,
        /// Continue from the last completed stage.
        #[arg(long)]
        resume: bool,
        /// Write SVG figures next to the CSVs.
        #[arg(long)]
        plot: bool,
        /// Evaluate matrix rows on separate threads.
        #[arg(long)]
        parallel_eval: bool,
        /// Stop after this many stages (continue later with --resume).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Success matrix of saved agents.
    Eval {
        /// Agent checkpoints.
        #[arg(required = true)]
        agents: Vec<PathBuf>,
        /// Dataset manifest; generated from --seed when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "in-domain")]
        split: SplitArg,
        /// Use only the first N examples.
        #[arg(long)]
        examples: Option<usize>,
        /// Output CSV.
        #[arg(long, default_value = "matrix.csv")]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        parallel_eval: bool,
    },
    /// List the built-in presets.
    Presets,
}

fn gen_data(seed: u64, out: &Path, cfg: GenConfig, images: usize) -> Result<()> {
    let splits = build_splits_with(seed, &cfg)?;
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(fs::File::create(out.join("manifest.jsonl"))?);
    splits.write_manifest(&mut w)?;
    w.flush()?;
    let stats: BTreeMap<&str, _> = [
        ("train", splits.stats(Split::Train)),
        ("eval_in_domain", splits.stats(Split::EvalInDomain)),
        ("eval_out_of_domain", splits.stats(Split::EvalOutOfDomain)),
    ]
    .into_iter()
    .collect();
    fs::write(out.join("stats.json"), serde_json::to_string_pretty(&stats)?)?;
    if images > 0 {
        let dir = out.join("images");
        fs::create_dir_all(&dir)?;
        for ex in splits.train.iter().take(images) {
            write_png(BufWriter::new(fs::File::create(dir.join(format!("{}.png", ex.id)))?), &ex.image())?;
        }
    }
    for (name, s) in &stats {
        log::info!(
            "{name}: {} examples, ambiguous {:.3}, single-side {:.3}, held-out {}",
            s.n,
            s.ambiguous_fraction,
            s.single_side_fraction,
            s.held_out_examples
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: Option<PathBuf>,
    preset_name: Option<String>,
    scale: &str,
    seed: Option<u64>,
    out: PathBuf,
    resume: bool,
    plot: bool,
    parallel_eval: bool,
    stop_after: Option<usize>,
) -> Result<()> {
    let mut cfg = match (config, preset_name) {
        (Some(path), None) => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        (None, Some(name)) => preset(&name, scale.parse::<Scale>()?)?,
        _ => return Err(emcomm::Error::Config("give a config file or --preset".into()).into()),
    };
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    let out_dir = out.join(&cfg.name);
    log::info!("running {} into {}", cfg.name, out_dir.display());
    let summary = run_experiment(
        &cfg,
        &RunOptions {
            out_dir,
            resume,
            plot,
            parallel_eval,
            stop_after,
        },
    )?;
    for (label, m) in &summary.mean {
        let complexity = m.complexity.map(|c| format!(", complexity {c:.3}")).unwrap_or_default();
        println!("{label}: self-play {:.3}, cross-play {:.3}{complexity}", m.self_play, m.cross_play);
        for (h, r) in &m.historical {
            println!("  historical {h}: {r:.3}");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    paths: &[PathBuf],
    data: Option<PathBuf>,
    seed: u64,
    split: SplitArg,
    examples: Option<usize>,
    out: &Path,
    plot: bool,
    parallel_eval: bool,
) -> Result<()> {
    let mut agents: Vec<Agent> = Vec::with_capacity(paths.len());
    for p in paths {
        let (a, _) = load_agent(p).with_context(|| format!("loading {}", p.display()))?;
        agents.push(a);
    }
    let dim = agents[0].config.image_features;
    if agents.iter().any(|a| a.config.image_features != dim) {
        bail!(emcomm::Error::Config("agents disagree on the image feature size".into()));
    }
    let splits = match data {
        Some(p) => DatasetSplits::read_manifest(BufReader::new(fs::File::open(&p)?))?,
        None => build_splits_with(seed, &GenConfig::default())?,
    };
    let all = splits.split(split.split());
    let items = &all[..examples.unwrap_or(all.len()).min(all.len())];
    let frontend = Frontend::from_config(&FrontendConfig {
        output_dim: dim,
        ..FrontendConfig::default()
    })?;
    let eval = EvalSet::new(items, &frontend, splits.config.cut_range, seed)?;
    let labels: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
        .collect();
    let players: Vec<&Agent> = agents.iter().collect();
    let m = success_matrix(&players, labels, &eval, parallel_eval)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let hash = format!("eval seed={seed} examples={}", eval.len());
    write_csv_file(out, &hash, &MATRIX_HEADER, &matrix_rows(&m))?;
    if plot {
        fs::write(out.with_extension("svg"), heatmap_svg(&m, "pair success"))?;
    }
    let (_, complexity) = protocol_complexity(&players, &eval)?;
    println!(
        "self-play {}, cross-play {}, complexity {}",
        num(m.self_play_mean()),
        num(m.cross_play_mean()),
        num(complexity)
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            seed,
            out,
            n_train,
            n_eval_in_domain,
            n_eval_out_of_domain,
            images,
        } => gen_data(
            seed,
            &out,
            GenConfig {
                n_train,
                n_eval_in_domain,
                n_eval_out_of_domain,
                ..GenConfig::default()
            },
            images,
        ),
        Command::Run {
            config,
            preset,
            scale,
            seed,
            out,
            resume,
            plot,
            parallel_eval,
            stop_after,
        } => run(config, preset, &scale, seed, out, resume, plot, parallel_eval, stop_after),
        Command::Eval {
            agents,
            data,
            seed,
            split,
            examples,
            out,
            plot,
            parallel_eval,
        } => eval(&agents, data, seed, split, examples, &out, plot, parallel_eval),
        Command::Presets => {
            for p in PRESETS {
                println!("{:<22} {}", p.name, p.description);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<emcomm::Error>().is_some_and(|e| e.is_config());
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
