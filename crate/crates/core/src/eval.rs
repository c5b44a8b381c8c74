//! Evaluation protocol and result tables.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent::{rollout, AgentParams, Budget, PolicyConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::heuristics::{mca_restarts, mca_soft_restarts, SoftPolicyConfig};
use crate::neuro::Scalar;
use crate::oracle::{approximation_ratio, BRUTE_FORCE_CAP};

/// How trajectories are run for every instance. The agent always acts with
/// `epsilon = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Protocol {
    pub n_trajectories: usize,
    pub budget: Budget,
    pub temperature: f64,
    /// Use an instance's tuned temperature when the dataset provides one.
    pub per_instance_temperature: bool,
    pub seed: u64,
}

impl Protocol {
    /// 50 greedy trajectories of `2|V|` flips.
    pub fn small_graph(seed: u64) -> Self {
        Self {
            n_trajectories: 50,
            budget: Budget::StepsPerVertex(2.0),
            temperature: 0.0,
            per_instance_temperature: false,
            seed,
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub n_vertices: usize,
    pub best_cut: i64,
    pub reference_cut: Option<i64>,
    pub approx_ratio: Option<f64>,
    /// Flips per trajectory.
    pub n_actions: usize,
    pub elapsed_s: f64,
    pub temperature: f64,
}

/// Mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let half = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            1.96 * (var / k).sqrt()
        } else {
            0.0
        };
        Some(Self {
            count: values.len(),
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Aggregate of the rows that have a ratio.
    pub fn approx_ratio(&self) -> Option<Aggregate> {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.approx_ratio).collect();
        Aggregate::of(&v)
    }

    pub fn best_cut(&self) -> Option<Aggregate> {
        let v: Vec<f64> = self.rows.iter().map(|r| r.best_cut as f64).collect();
        Aggregate::of(&v)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let rows = input.deserialize().collect::<std::result::Result<Vec<EvalRow>, _>>()?;
        Ok(Self { rows })
    }
}

fn row(
    id: &str,
    n_vertices: usize,
    best_cut: i64,
    reference_cut: Option<i64>,
    n_actions: usize,
    elapsed_s: f64,
    temperature: f64,
) -> Result<EvalRow> {
    let approx_ratio = reference_cut.map(|r| approximation_ratio(best_cut, r)).transpose()?;
    Ok(EvalRow {
        id: id.to_string(),
        n_vertices,
        best_cut,
        reference_cut,
        approx_ratio,
        n_actions,
        elapsed_s,
        temperature,
    })
}

/// Fills missing references of small instances with exact optima.
fn with_references(dataset: &Dataset) -> Result<Dataset> {
    if dataset.instances.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    let mut ds = dataset.clone();
    ds.fill_oracle_references(BRUTE_FORCE_CAP)?;
    Ok(ds)
}

/// Runs the agent on every instance. Missing references are filled by the
/// exact solver for graphs small enough; otherwise the ratio is left empty.
pub fn evaluate<T: Scalar>(params: &AgentParams<T>, dataset: &Dataset, protocol: &Protocol) -> Result<EvalReport> {
    let ds = with_references(dataset)?;
    let mut rows = Vec::with_capacity(ds.instances.len());
    for (i, inst) in ds.instances.iter().enumerate() {
        let temperature = match (protocol.per_instance_temperature, inst.temperature) {
            (true, Some(t)) => t,
            _ => protocol.temperature,
        };
        let cfg = PolicyConfig {
            temperature,
            epsilon: 0.0,
            rng_seed: crate::seed::derive_seed(protocol.seed, i as u64, 0),
            budget: protocol.budget,
        };
        let r = rollout(std::slice::from_ref(&inst.graph), params, &cfg, protocol.n_trajectories)?
            .pop()
            .expect("one graph in, one result out");
        rows.push(row(
            &inst.id,
            inst.graph.n_vertices(),
            r.best_cut,
            inst.reference_cut,
            r.actions[0],
            r.elapsed.as_secs_f64(),
            temperature,
        )?);
    }
    Ok(EvalReport { rows })
}

/// Greedy or soft-greedy baselines under an equal flip budget per restart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeuristicProtocol {
    pub n_restarts: usize,
    pub steps_per_vertex: f64,
    /// `None` runs plain greedy ascent, which stops at a local optimum.
    pub temperature: Option<f64>,
    pub per_instance_temperature: bool,
    pub seed: u64,
}

pub fn evaluate_heuristic(dataset: &Dataset, protocol: &HeuristicProtocol) -> Result<EvalReport> {
    let ds = with_references(dataset)?;
    let mut rows = Vec::with_capacity(ds.instances.len());
    for (i, inst) in ds.instances.iter().enumerate() {
        let n = inst.graph.n_vertices();
        let max_steps = (protocol.steps_per_vertex * n as f64).ceil() as usize;
        let seed = crate::seed::derive_seed(protocol.seed, i as u64, 0);
        let temperature = match (protocol.per_instance_temperature, inst.temperature) {
            (true, Some(t)) => Some(t),
            _ => protocol.temperature,
        };
        let start = Instant::now();
        let out = match temperature {
            None => mca_restarts(&inst.graph, protocol.n_restarts, max_steps, seed)?,
            Some(t) => mca_soft_restarts(
                &inst.graph,
                &SoftPolicyConfig {
                    temperature: t,
                    max_steps,
                    n_restarts: protocol.n_restarts,
                    rng_seed: seed,
                },
            )?,
        };
        let actions = out.steps_per_restart.iter().copied().max().unwrap_or(0);
        rows.push(row(
            &inst.id,
            n,
            out.best.best_cut,
            inst.reference_cut,
            actions,
            start.elapsed().as_secs_f64(),
            temperature.unwrap_or(0.0),
        )?);
    }
    Ok(EvalReport { rows })
}

/// Per-action cost of decoding on one graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeTiming {
    pub n_vertices: usize,
    pub n_edges: usize,
    pub n_trajectories: usize,
    pub steps: usize,
    pub encode_s: f64,
    /// Q evaluation, action choice and recurrent update, per step of one
    /// trajectory batch.
    pub decode_s_per_action: f64,
    /// Environment update per step of one trajectory batch.
    pub env_s_per_action: f64,
}

/// Times `steps` greedy flips of `n_trajectories` trajectories after one
/// encoder pass.
pub fn decode_timing<T: Scalar>(
    params: &AgentParams<T>,
    graph: &crate::graph::Graph,
    n_trajectories: usize,
    steps: usize,
    seed: u64,
) -> Result<DecodeTiming> {
    use crate::agent::{select_action, BatchDecoder, Lane};
    use rand::SeedableRng;

    if steps == 0 || n_trajectories == 0 {
        return Err(Error::Argument("steps and n_trajectories must be positive".into()));
    }
    let lanes = (0..n_trajectories)
        .map(|k| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, 0, k as u64));
            let labels = crate::heuristics::random_labels(graph.n_vertices(), &mut rng);
            Ok(Lane {
                graph: 0,
                state: crate::env::CutState::new(graph, labels)?,
                rng,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let start = Instant::now();
    let mut decoder = BatchDecoder::new(params, vec![graph], lanes)?;
    let encode_s = start.elapsed().as_secs_f64();
    for _ in 0..steps {
        decoder.step(params, |_, q, rng| select_action(q, 0.0, 0.0, rng))?;
    }
    Ok(DecodeTiming {
        n_vertices: graph.n_vertices(),
        n_edges: graph.n_edges(),
        n_trajectories,
        steps,
        encode_s,
        decode_s_per_action: decoder.decode_time.as_secs_f64() / steps as f64,
        env_s_per_action: decoder.env_time.as_secs_f64() / steps as f64,
    })
}
