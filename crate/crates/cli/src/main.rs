use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cutflip_core::agent::{rollout, AgentParams, ArchConfig, Budget, PolicyConfig};
use cutflip_core::dataset::{Dataset, Family, GeneratorSpec, Split};
use cutflip_core::eval::{decode_timing, evaluate, evaluate_heuristic, EvalReport, HeuristicProtocol, Protocol};
use cutflip_core::generate::{generate_er, WeightSet, WeightSpec};
use cutflip_core::gset::read_gset;
use cutflip_core::heuristics::{
    mca_restarts, mca_soft_restarts, tune_temperature, SoftPolicyConfig, COARSE_TEMPERATURE_GRID,
    FINE_TEMPERATURE_GRID,
};
use cutflip_core::oracle::{brute_force_max_cut, BRUTE_FORCE_CAP};
use cutflip_core::training::{train, write_log, TrainConfig, ValidationInstance};
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "cutflip", version, about = "Max-Cut by learned local search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random dataset with a manifest.
    Generate(GenerateArgs),
    /// Solve one instance and print the best cut and its labeling.
    Solve(SolveArgs),
    /// Train an agent.
    Train(TrainArgs),
    /// Evaluate an agent or a heuristic on a dataset and write a CSV report.
    Evaluate(EvaluateArgs),
    /// Grid-search the soft-greedy temperature on a dataset.
    TuneTemp(TuneArgs),
    /// Exact maximum cut of a small instance.
    Oracle(OracleArgs),
    /// Per-action decode time across graph sizes, as CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Er,
    Ba,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    /// {0, 1}
    Binary,
    /// {0, -1, 1}
    Signed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Args)]
struct WeightOpts {
    #[arg(long, value_enum, default_value = "signed")]
    weights: WeightArg,
    /// Draw weights of included edges from the set without 0.
    #[arg(long)]
    nonzero: bool,
}

impl WeightOpts {
    fn spec(&self) -> WeightSpec {
        WeightSpec {
            set: match self.weights {
                WeightArg::Binary => WeightSet::Binary,
                WeightArg::Signed => WeightSet::Signed,
            },
            nonzero: self.nonzero,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "er")]
    family: FamilyArg,
    #[arg(long)]
    n_vertices: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0.15)]
    edge_prob: f64,
    #[arg(long, default_value_t = 4)]
    attachment: usize,
    #[command(flatten)]
    weights: WeightOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    name: String,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Fill reference cuts with exact optima where the graph is small enough.
    #[arg(long)]
    oracle: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Mca,
    McaSoft,
    Agent,
}

#[derive(Args)]
struct SolveArgs {
    /// Edge-list file.
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "mca")]
    method: Method,
    #[arg(long, required_if_eq("method", "agent"))]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Restarts for heuristics, trajectories for the agent.
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 2.0)]
    steps_per_vertex: f64,
    /// Wall-clock limit for the agent instead of a step budget.
    #[arg(long)]
    time_s: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` file; defaults are used for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as `key=value`, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Vertices of each generated training graph.
    #[arg(long, default_value_t = 40)]
    n_vertices: usize,
    #[arg(long, default_value_t = 0.15)]
    edge_prob: f64,
    #[command(flatten)]
    weights: WeightOpts,
    /// Dataset directory used for model selection. Instances without a
    /// stored reference cut are solved exactly when small enough and
    /// otherwise scored against the best heuristic cut.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Output directory for checkpoints, the log and the resolved config.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, conflicts_with = "heuristic")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    heuristic: Option<HeuristicArg>,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 2.0)]
    steps_per_vertex: f64,
    #[arg(long)]
    time_s: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Use temperatures stored in the dataset manifest where present.
    #[arg(long)]
    per_instance_temperature: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; a `.manifest.json` is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    Mca,
    McaSoft,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Fine,
    Coarse,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "fine")]
    grid: GridArg,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 2.0)]
    steps_per_vertex: f64,
    /// Pick a temperature per instance and store it in the manifest.
    #[arg(long)]
    per_instance: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    graph: PathBuf,
    /// Also print one optimal labeling.
    #[arg(long)]
    labels: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Checkpoint to time; a seeded random initialization otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    sizes: Vec<usize>,
    /// Expected degree of the generated graphs.
    #[arg(long, default_value_t = 10.0)]
    mean_degree: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    trajectories: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::TuneTemp(a) => tune(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a),
    }
}

fn load_params(path: &Path) -> Result<AgentParams<f32>> {
    let f = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    AgentParams::load(std::io::BufReader::new(f)).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn save_params(params: &AgentParams<f32>, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    params.save(&mut w)?;
    w.flush()?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_graph(path: &Path) -> Result<cutflip_core::Graph> {
    read_gset(path).with_context(|| format!("reading {}", path.display()))
}

fn labels_line(labels: &[bool]) -> String {
    labels.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn generate(a: GenerateArgs) -> Result<()> {
    let family = match a.family {
        FamilyArg::Er => Family::Er { edge_prob: a.edge_prob },
        FamilyArg::Ba => Family::Ba {
            attachment: a.attachment,
        },
    };
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Validation => Split::Validation,
        SplitArg::Test => Split::Test,
    };
    let spec = GeneratorSpec {
        family,
        n_vertices: a.n_vertices,
        weights: a.weights.spec(),
        count: a.count,
        seed: a.seed,
    };
    let mut ds = Dataset::generate(&a.name, split, spec)?;
    if a.oracle {
        ds.fill_oracle_references(BRUTE_FORCE_CAP)?;
    }
    ds.save(&a.out)?;
    println!("wrote {} instances to {}", ds.instances.len(), a.out.display());
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let graph = read_graph(&a.graph)?;
    let max_steps = (a.steps_per_vertex * graph.n_vertices() as f64).ceil() as usize;
    let (best, labels) = match a.method {
        Method::Mca => {
            let out = mca_restarts(&graph, a.runs, max_steps, a.seed)?;
            (out.best.best_cut, out.best.best_labels)
        }
        Method::McaSoft => {
            let cfg = SoftPolicyConfig {
                temperature: a.temperature,
                max_steps,
                n_restarts: a.runs,
                rng_seed: a.seed,
            };
            let out = mca_soft_restarts(&graph, &cfg)?;
            (out.best.best_cut, out.best.best_labels)
        }
        Method::Agent => {
            let params = load_params(a.checkpoint.as_deref().expect("required by clap"))?;
            let budget = match a.time_s {
                Some(s) => Budget::Time(Duration::from_secs_f64(s)),
                None => Budget::StepsPerVertex(a.steps_per_vertex),
            };
            let cfg = PolicyConfig {
                temperature: a.temperature,
                epsilon: 0.0,
                rng_seed: a.seed,
                budget,
            };
            let out = rollout(std::slice::from_ref(&graph), &params, &cfg, a.runs)?
                .pop()
                .expect("one result per graph");
            (out.best_cut, out.best_labels)
        }
    };
    println!("{best}");
    println!("{}", labels_line(&labels));
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("override `{o}` is not key=value"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;

    let validation = match &a.validation {
        Some(dir) => {
            let mut ds = Dataset::load(dir).with_context(|| format!("loading {}", dir.display()))?;
            ds.fill_oracle_references(BRUTE_FORCE_CAP)?;
            ds.instances
                .into_iter()
                .enumerate()
                .map(|(k, i)| {
                    let reference_cut = match i.reference_cut {
                        Some(r) => r,
                        None => heuristic_reference(&i.graph, k as u64)?,
                    };
                    Ok(ValidationInstance {
                        graph: i.graph,
                        reference_cut,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };

    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("config.txt"), cfg.to_text())?;
    let weights = a.weights.spec();
    let (n, p) = (a.n_vertices, a.edge_prob);
    let mut log_file = BufWriter::new(File::create(a.out.join("train_log.jsonl"))?);
    let mut log_err = None;
    let outcome = train::<f32, _, _>(
        &cfg,
        |rng| generate_er(n, p, weights, rng.random()),
        &validation,
        |rec| {
            eprintln!(
                "step {:>6}  loss {:>10}  eps {:.3}  val {}",
                rec.step,
                rec.loss.map_or("-".into(), |l| format!("{l:.3e}")),
                rec.epsilon,
                rec.validation_ar.map_or("-".into(), |v| format!("{v:.4}"))
            );
            if let Err(e) = write_log(&mut log_file, std::slice::from_ref(rec)) {
                log_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    log_file.flush()?;
    save_params(&outcome.final_params, &a.out.join("final.ckpt"))?;
    save_params(&outcome.best_params, &a.out.join("best.ckpt"))?;
    match outcome.best_validation_ar {
        Some(ar) => println!("best validation ratio {ar:.4}"),
        None => println!("no validation set"),
    }
    Ok(())
}

/// Best cut found by MCA and by MCA-soft at every fine-grid temperature,
/// each with 100 restarts of 4|V| flips. Stands in for the optimum on
/// graphs too large for the exact solver.
fn heuristic_reference(graph: &cutflip_core::Graph, seed: u64) -> Result<i64> {
    let max_steps = 4 * graph.n_vertices();
    let mut best = mca_restarts(graph, 100, max_steps, seed)?.best.best_cut;
    for &temperature in &FINE_TEMPERATURE_GRID {
        let cfg = SoftPolicyConfig {
            temperature,
            max_steps,
            n_restarts: 100,
            rng_seed: seed,
        };
        best = best.max(mca_soft_restarts(graph, &cfg)?.best.best_cut);
    }
    Ok(best.max(1))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    let (report, method, checkpoint_hash) = match (&a.checkpoint, a.heuristic) {
        (Some(path), _) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let params = AgentParams::<f32>::load(bytes.as_slice())?;
            let budget = match a.time_s {
                Some(s) => Budget::Time(Duration::from_secs_f64(s)),
                None => Budget::StepsPerVertex(a.steps_per_vertex),
            };
            let protocol = Protocol {
                n_trajectories: a.runs,
                budget,
                temperature: a.temperature,
                per_instance_temperature: a.per_instance_temperature,
                seed: a.seed,
            };
            (evaluate(&params, &ds, &protocol)?, "agent", Some(sha256_hex(&bytes)))
        }
        (None, Some(h)) => {
            let protocol = HeuristicProtocol {
                n_restarts: a.runs,
                steps_per_vertex: a.steps_per_vertex,
                temperature: match h {
                    HeuristicArg::Mca => None,
                    HeuristicArg::McaSoft => Some(a.temperature),
                },
                per_instance_temperature: a.per_instance_temperature,
                seed: a.seed,
            };
            let name = match h {
                HeuristicArg::Mca => "mca",
                HeuristicArg::McaSoft => "mca-soft",
            };
            (evaluate_heuristic(&ds, &protocol)?, name, None)
        }
        (None, None) => bail!("pass --checkpoint or --heuristic"),
    };
    print_summary(&report);
    match &a.out {
        Some(path) => {
            report.write_csv(File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
            let manifest = serde_json::json!({
                "dataset": ds.name,
                "method": method,
                "seed": a.seed,
                "runs": a.runs,
                "steps_per_vertex": a.steps_per_vertex,
                "time_s": a.time_s,
                "temperature": a.temperature,
                "per_instance_temperature": a.per_instance_temperature,
                "checkpoint_sha256": checkpoint_hash,
            });
            let config_hash = sha256_hex(manifest.to_string().as_bytes());
            let mut manifest = manifest;
            manifest["config_sha256"] = config_hash.into();
            let mpath = path.with_extension("manifest.json");
            std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)?)?;
        }
        None => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn print_summary(report: &EvalReport) {
    if let Some(agg) = report.approx_ratio() {
        eprintln!(
            "approximation ratio: mean {:.4} (95% CI {:.4}..{:.4}) over {} instances",
            agg.mean, agg.ci_low, agg.ci_high, agg.count
        );
    }
    if let Some(agg) = report.best_cut() {
        eprintln!("best cut: mean {:.2} over {} instances", agg.mean, agg.count);
    }
}

fn tune(a: TuneArgs) -> Result<()> {
    let mut ds = Dataset::load(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    let grid: &[f64] = match a.grid {
        GridArg::Fine => &FINE_TEMPERATURE_GRID,
        GridArg::Coarse => &COARSE_TEMPERATURE_GRID,
    };
    let n = ds.instances.first().map_or(0, |i| i.graph.n_vertices());
    let template = SoftPolicyConfig {
        temperature: 0.0,
        max_steps: (a.steps_per_vertex * n as f64).ceil() as usize,
        n_restarts: a.restarts,
        rng_seed: a.seed,
    };
    if ds.instances.iter().any(|i| i.graph.n_vertices() != n) {
        bail!("tune-temp expects instances of a single size");
    }
    let out = tune_temperature(&ds.graphs(), grid, &template, a.per_instance)?;
    println!("temperature,mean_best_cut");
    for (t, s) in grid.iter().zip(&out.mean_best_cut) {
        println!("{t},{s}");
    }
    println!("best temperature {}", out.temperature);
    if let Some(per) = out.per_instance {
        for (inst, t) in ds.instances.iter_mut().zip(per) {
            inst.temperature = Some(t);
        }
        ds.save(&a.dataset)?;
        println!("stored per-instance temperatures in {}", a.dataset.display());
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let graph = read_graph(&a.graph)?;
    let out = brute_force_max_cut(&graph)?;
    println!("{}", out.best_cut);
    if a.labels {
        println!("{}", labels_line(&out.best_labels));
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let params = match &a.checkpoint {
        Some(p) => load_params(p)?,
        None => AgentParams::init(ArchConfig::default(), &mut rand_chacha_seeded(a.seed)),
    };
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "n_vertices,n_edges,trajectories,steps,encode_s,decode_s_per_action,env_s_per_action")?;
    for &n in &a.sizes {
        if n < 2 {
            bail!("graph sizes must be at least 2");
        }
        let p = (a.mean_degree / (n - 1) as f64).min(1.0);
        let weights = WeightSpec {
            set: WeightSet::Binary,
            nonzero: true,
        };
        let graph = generate_er(n, p, weights, a.seed ^ n as u64)?;
        let t = decode_timing(&params, &graph, a.trajectories, a.steps, a.seed)?;
        writeln!(
            out,
            "{},{},{},{},{:.6e},{:.6e},{:.6e}",
            t.n_vertices, t.n_edges, t.n_trajectories, t.steps, t.encode_s, t.decode_s_per_action, t.env_s_per_action
        )?;
    }
    out.flush()?;
    Ok(())
}

fn rand_chacha_seeded(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}
