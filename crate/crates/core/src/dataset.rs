//! Named collections of instances stored as a directory of edge-list files
//! plus a JSON manifest.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{generate_ba, generate_er, WeightSpec};
use crate::graph::Graph;
use crate::gset::{read_gset, write_gset};
use crate::oracle::brute_force_max_cut_capped;
use crate::seed::derive_seed;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Er { edge_prob: f64 },
    Ba { attachment: usize },
}

/// Parameters that regenerate a dataset exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub n_vertices: usize,
    pub weights: WeightSpec,
    pub count: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Instance `i`; every instance has its own derived seed.
    pub fn instance(&self, i: usize) -> Result<Graph> {
        let seed = derive_seed(self.seed, i as u64, 0);
        match self.family {
            Family::Er { edge_prob } => generate_er(self.n_vertices, edge_prob, self.weights, seed),
            Family::Ba { attachment } => generate_ba(self.n_vertices, attachment, self.weights, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub graph: Graph,
    pub reference_cut: Option<i64>,
    /// Soft-greedy temperature tuned for this instance, if any.
    pub temperature: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub generator: Option<GeneratorSpec>,
    pub instances: Vec<Instance>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
    n_vertices: usize,
    n_edges: usize,
    reference_cut: Option<i64>,
    temperature: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    name: String,
    split: Split,
    generator: Option<GeneratorSpec>,
    instances: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn generate(name: &str, split: Split, spec: GeneratorSpec) -> Result<Self> {
        let instances = (0..spec.count)
            .map(|i| {
                Ok(Instance {
                    id: format!("{name}-{i:04}"),
                    graph: spec.instance(i)?,
                    reference_cut: None,
                    temperature: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = Self {
            name: name.to_string(),
            split,
            generator: Some(spec),
            instances,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for inst in &self.instances {
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::Argument(format!("duplicate instance id `{}`", inst.id)));
            }
            if inst.reference_cut.is_some_and(|r| r <= 0) {
                return Err(Error::Argument(format!("instance `{}` has a non-positive reference cut", inst.id)));
            }
        }
        Ok(())
    }

    pub fn graphs(&self) -> Vec<Graph> {
        self.instances.iter().map(|i| i.graph.clone()).collect()
    }

    /// Fills missing references with the exact optimum for graphs of at most
    /// `max_vertices` vertices. Optima of zero stay missing. Returns how many
    /// references were added.
    pub fn fill_oracle_references(&mut self, max_vertices: usize) -> Result<usize> {
        let mut added = 0;
        for inst in &mut self.instances {
            if inst.reference_cut.is_none() && inst.graph.n_vertices() <= max_vertices {
                let best = brute_force_max_cut_capped(&inst.graph, max_vertices)?.best_cut;
                if best > 0 {
                    inst.reference_cut = Some(best);
                    added += 1;
                }
            }
        }
        Ok(added)
    }

    /// Writes `<id>.txt` per instance and the manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.instances.len());
        for inst in &self.instances {
            let file = format!("{}.txt", inst.id);
            std::fs::write(dir.join(&file), write_gset(&inst.graph))?;
            entries.push(ManifestEntry {
                id: inst.id.clone(),
                file,
                n_vertices: inst.graph.n_vertices(),
                n_edges: inst.graph.n_edges(),
                reference_cut: inst.reference_cut,
                temperature: inst.temperature,
            });
        }
        let manifest = Manifest {
            name: self.name.clone(),
            split: self.split,
            generator: self.generator,
            instances: entries,
        };
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let instances = manifest
            .instances
            .into_iter()
            .map(|e| {
                let graph = read_gset(&dir.join(&e.file))?;
                if graph.n_vertices() != e.n_vertices || graph.n_edges() != e.n_edges {
                    return Err(Error::Argument(format!("instance `{}` does not match its manifest entry", e.id)));
                }
                Ok(Instance {
                    id: e.id,
                    graph,
                    reference_cut: e.reference_cut,
                    temperature: e.temperature,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = Self {
            name: manifest.name,
            split: manifest.split,
            generator: manifest.generator,
            instances,
        };
        ds.validate()?;
        Ok(ds)
    }
}
