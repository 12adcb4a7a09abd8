//! Case-study presets and JSON overrides.

use std::fmt;
use std::str::FromStr;

use persim_core::agents::{ClassSpec, PopulationSpec, Prompt, PromptEmbedder, Role, SyntheticParams, TargetSpec};
use persim_core::embedding::EmbedderConfig;
use persim_core::engine::{BackendConfig, ExperimentConfig, FORMAT_VERSION};
use persim_core::network::TopologyConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Latent dimension used by every preset.
pub const P: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Cs1Disruption,
    Cs1Control,
    Cs2Adversarial,
    Cs3Polarization,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Cs1Disruption,
        Preset::Cs1Control,
        Preset::Cs2Adversarial,
        Preset::Cs3Polarization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cs1Disruption => "cs1_disruption",
            Preset::Cs1Control => "cs1_control",
            Preset::Cs2Adversarial => "cs2_adversarial",
            Preset::Cs3Polarization => "cs3_polarization",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown preset {s:?}")))
    }
}

pub const CS1_TAG: &str = "society_culture";
pub const CS2_NORMAL_TAG: &str = "society_culture";
pub const CS2_ADVERSARY_TAG: &str = "science_math";
pub const CS3_TAGS: [&str; 2] = ["society_culture", "science_math"];

fn bank(size: usize, tag_of: impl Fn(usize) -> &'static str) -> Vec<Prompt> {
    (0..size)
        .map(|id| Prompt {
            id,
            text: String::new(),
            class_tag: Some(tag_of(id).to_owned()),
        })
        .collect()
}

fn unit(axis: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; P];
    v[axis] = scale;
    v
}

fn config(
    population: PopulationSpec,
    topology: TopologyConfig,
    question_bank: Vec<Prompt>,
    questions_per_interaction: usize,
    steps: usize,
    prompt_embedder: PromptEmbedder,
) -> ExperimentConfig {
    ExperimentConfig {
        format_version: FORMAT_VERSION,
        n_agents: population.n_agents(),
        population,
        topology,
        eval_set: question_bank.iter().map(|p| p.id).collect(),
        question_bank,
        questions_per_interaction,
        steps,
        master_seed: 0,
        backend: BackendConfig::Synthetic,
        prompt_embedder,
        embedder: EmbedderConfig::passthrough(P),
    }
}

/// Wide initial spread with slow, nearly noiseless updates: the snapshot noise
/// floor `sqrt(2 m p) * sigma` stays well below per-step state movement, so the
/// system-level distances track consensus rather than sampling noise.
fn cs1(topology: TopologyConfig) -> ExperimentConfig {
    let population = PopulationSpec {
        classes: vec![ClassSpec {
            tag: CS1_TAG.into(),
            count: 25,
            role: Role::Normal,
            center: vec![0.0; P],
            params: None,
        }],
        init_scale: 1.0,
        agent: SyntheticParams {
            alpha: 0.05,
            eta: 0.055,
            sigma: 0.001,
        },
        targets: None,
    };
    config(population, topology, bank(400, |_| CS1_TAG), 50, 40, PromptEmbedder::new(P, 0.1, 1))
}

/// A weak prompt pull keeps targets close to the adversary once captured.
fn cs2() -> ExperimentConfig {
    let population = PopulationSpec {
        classes: vec![
            ClassSpec {
                tag: CS2_NORMAL_TAG.into(),
                count: 5,
                role: Role::Normal,
                center: vec![0.0; P],
                params: None,
            },
            ClassSpec {
                tag: CS2_ADVERSARY_TAG.into(),
                count: 1,
                role: Role::Adversarial,
                center: unit(0, 1.0),
                params: None,
            },
        ],
        init_scale: 0.1,
        agent: SyntheticParams {
            alpha: 0.05,
            ..SyntheticParams::default()
        },
        targets: Some(TargetSpec {
            class_tag: CS2_NORMAL_TAG.into(),
            count: 2,
        }),
    };
    config(
        population,
        TopologyConfig::VulnerableOscillation { attack_period: 2 },
        bank(200, |_| CS2_NORMAL_TAG),
        100,
        30,
        PromptEmbedder::new(P, 0.1, 2),
    )
}

fn cs3() -> ExperimentConfig {
    let classes = CS3_TAGS
        .iter()
        .enumerate()
        .map(|(k, tag)| ClassSpec {
            tag: (*tag).into(),
            count: 5,
            role: Role::Normal,
            center: unit(0, if k == 0 { 0.1 } else { -0.1 }),
            params: None,
        })
        .collect();
    let population = PopulationSpec {
        classes,
        init_scale: 0.1,
        agent: SyntheticParams::default(),
        targets: None,
    };
    config(
        population,
        TopologyConfig::IntraClassOnly,
        bank(400, |id| CS3_TAGS[id * 2 / 400]),
        100,
        30,
        PromptEmbedder::new(P, 0.1, 3),
    )
}

/// The preset's configuration with `master_seed` 0.
pub fn base_config(preset: Preset) -> ExperimentConfig {
    match preset {
        Preset::Cs1Disruption => cs1(TopologyConfig::DisruptedLocal { t_star: 21 }),
        Preset::Cs1Control => cs1(TopologyConfig::FullyConnected),
        Preset::Cs2Adversarial => cs2(),
        Preset::Cs3Polarization => cs3(),
    }
}

/// RFC 7386 merge patch: objects merge key by key, `null` deletes, anything else replaces.
pub fn merge_patch(target: &mut Value, patch: &Value) {
    let Value::Object(entries) = patch else {
        *target = patch.clone();
        return;
    };
    if !target.is_object() {
        *target = Value::Object(Default::default());
    }
    let map = target.as_object_mut().expect("object");
    for (key, value) in entries {
        if value.is_null() {
            map.remove(key);
        } else {
            merge_patch(map.entry(key.clone()).or_insert(Value::Null), value);
        }
    }
}

/// Preset plus overrides, ready to run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudySpec {
    pub preset: Preset,
    #[serde(default)]
    pub overrides: Value,
    pub seeds: Vec<u64>,
}

impl CaseStudySpec {
    pub fn new(preset: Preset, seeds: Vec<u64>) -> Self {
        CaseStudySpec {
            preset,
            overrides: Value::Null,
            seeds,
        }
    }

    pub fn with_overrides(mut self, overrides: Value) -> Self {
        self.overrides = overrides;
        self
    }

    /// Effective configuration for `seed`. `n_agents` follows the population
    /// unless the overrides set it explicitly.
    pub fn resolve(&self, seed: u64) -> Result<ExperimentConfig, CliError> {
        let mut value = serde_json::to_value(base_config(self.preset)).expect("config serializes");
        if !self.overrides.is_null() {
            merge_patch(&mut value, &self.overrides);
        }
        let mut config: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("overrides do not form a valid config: {e}")))?;
        let sets_n = self.overrides.get("n_agents").is_some();
        if !sets_n {
            config.n_agents = config.population.n_agents();
        }
        config.master_seed = seed;
        config.validate()?;
        Ok(config)
    }
}
