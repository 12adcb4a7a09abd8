//! Running presets and writing their analysis artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use persim_core::agents::Role;
use persim_core::analysis::{
    cluster_series, iso_mirror, perspective_trajectories, polarization, AnalysisConfig, ClusterReport,
    IsoMirrorCurve, PerspectiveTrajectory, PolarizationSeries,
};
use persim_core::engine::{load_history, run_to_dir, ExperimentConfig, RunHistory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::plot::emit_plots;
use crate::presets::{CaseStudySpec, Preset};

pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const CLUSTERS_CSV: &str = "clusters.csv";
pub const ISO_MIRROR_CSV: &str = "iso_mirror.csv";
pub const POLARIZATION_CSV: &str = "polarization.csv";

/// Which analyses to run on a history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisPlan {
    pub clusters: bool,
    pub iso_mirror: bool,
    pub polarization: bool,
}

impl AnalysisPlan {
    pub fn for_preset(preset: Preset) -> Self {
        let cs1 = matches!(preset, Preset::Cs1Disruption | Preset::Cs1Control);
        AnalysisPlan {
            clusters: cs1,
            iso_mirror: cs1,
            polarization: !cs1,
        }
    }

    /// Everything that applies to the run's shape.
    pub fn everything() -> Self {
        AnalysisPlan {
            clusters: true,
            iso_mirror: true,
            polarization: true,
        }
    }
}

/// Polarization groups implied by the population: non-adversarial agents
/// versus the adversary, or else the first two classes in declaration order.
pub fn polarization_groups(history: &RunHistory) -> Option<(Vec<usize>, Vec<usize>)> {
    let agents = &history.agents;
    if agents.iter().any(|a| a.role == Role::Adversarial) {
        let (b, a): (Vec<_>, Vec<_>) = agents.iter().partition(|a| a.role == Role::Adversarial);
        return Some((a.iter().map(|x| x.index).collect(), b.iter().map(|x| x.index).collect()));
    }
    let classes = &history.config.population.classes;
    if classes.len() < 2 {
        return None;
    }
    let members = |tag: &str| -> Vec<usize> {
        agents.iter().filter(|a| a.class_tag == tag).map(|a| a.index).collect()
    };
    Some((members(&classes[0].tag), members(&classes[1].tag)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunAnalysis {
    pub trajectory: PerspectiveTrajectory,
    pub clusters: Option<ClusterReport>,
    pub iso_mirror: Option<IsoMirrorCurve>,
    pub polarization: Option<PolarizationSeries>,
}

pub fn analyze_history(
    history: &RunHistory,
    plan: AnalysisPlan,
    config: &AnalysisConfig,
) -> Result<RunAnalysis, CliError> {
    let trajectory = perspective_trajectories(history, config.d)?;
    let clusters = if plan.clusters {
        Some(cluster_series(&trajectory, config.k_max, config.restarts, config.seed)?)
    } else {
        None
    };
    let iso = if plan.iso_mirror && history.snapshots.len() >= 2 {
        Some(iso_mirror(history, config.k_neighbors)?)
    } else {
        None
    };
    let polarization = match (plan.polarization, polarization_groups(history)) {
        (true, Some((a, b))) => Some(polarization(&trajectory, &a, &b)?),
        _ => None,
    };
    Ok(RunAnalysis {
        trajectory,
        clusters,
        iso_mirror: iso,
        polarization,
    })
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Writes the analysis CSVs into `dir`; returns the written paths.
pub fn write_analysis(dir: &Path, analysis: &RunAnalysis) -> Result<Vec<PathBuf>, CliError> {
    let mut out = vec![write(dir.join(TRAJECTORIES_CSV), &analysis.trajectory.to_csv())?];
    if let Some(c) = &analysis.clusters {
        out.push(write(dir.join(CLUSTERS_CSV), &c.to_csv())?);
    }
    if let Some(i) = &analysis.iso_mirror {
        out.push(write(dir.join(ISO_MIRROR_CSV), &i.to_csv())?);
    }
    if let Some(p) = &analysis.polarization {
        out.push(write(dir.join(POLARIZATION_CSV), &p.to_csv())?);
    }
    Ok(out)
}

/// Loads a run directory, analyzes it and writes CSVs next to it.
pub fn analyze_dir(run_dir: &Path, config: &AnalysisConfig) -> Result<RunAnalysis, CliError> {
    let history = load_history(run_dir)?;
    let analysis = analyze_history(&history, AnalysisPlan::everything(), config)?;
    write_analysis(run_dir, &analysis)?;
    Ok(analysis)
}

/// `out_dir/config.json`: the resolved study. Per-seed configs differ from
/// `experiment` only in `master_seed`, which here holds the first seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEcho {
    pub preset: Preset,
    pub seeds: Vec<u64>,
    pub analysis: AnalysisConfig,
    pub plan: AnalysisPlan,
    pub experiment: ExperimentConfig,
}

pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed-{seed}"))
}

/// Outcome of one seed.
#[derive(Debug)]
pub struct SeedResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub analysis: RunAnalysis,
}

fn run_seed(
    spec: &CaseStudySpec,
    seed: u64,
    out_dir: &Path,
    plan: AnalysisPlan,
    analysis: &AnalysisConfig,
) -> Result<SeedResult, CliError> {
    let config = spec.resolve(seed)?;
    let dir = seed_dir(out_dir, seed);
    log::info!("{}: seed {seed} -> {}", spec.preset, dir.display());
    let history = run_to_dir(&config, &dir)?;
    let result = analyze_history(&history, plan, analysis)?;
    write_analysis(&dir, &result)?;
    emit_plots(&dir)?;
    Ok(SeedResult {
        seed,
        dir,
        analysis: result,
    })
}

/// Runs every seed of `spec` into `out_dir/seed-{s}` (in parallel), analyzes
/// and plots each run, then writes the study echo and any aggregated series.
pub fn run_case_study(
    spec: &CaseStudySpec,
    out_dir: &Path,
    analysis: &AnalysisConfig,
) -> Result<Vec<SeedResult>, CliError> {
    if spec.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let first = spec.resolve(spec.seeds[0])?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let plan = AnalysisPlan::for_preset(spec.preset);
    let echo = StudyEcho {
        preset: spec.preset,
        seeds: spec.seeds.clone(),
        analysis: *analysis,
        plan,
        experiment: first,
    };
    let mut text = serde_json::to_string_pretty(&echo).expect("echo serializes");
    text.push('\n');
    write(out_dir.join("config.json"), &text)?;

    let results = spec
        .seeds
        .par_iter()
        .map(|&seed| run_seed(spec, seed, out_dir, plan, analysis))
        .collect::<Result<Vec<_>, _>>()?;

    if plan.polarization && results.iter().all(|r| r.analysis.polarization.is_some()) {
        let mut csv = String::from("seed,t,value,signed_gap\n");
        for r in &results {
            let p = r.analysis.polarization.as_ref().expect("checked");
            for (t, (v, g)) in p.values.iter().zip(&p.signed_gaps).enumerate() {
                let _ = writeln!(csv, "{},{t},{v},{g}", r.seed);
            }
        }
        write(out_dir.join(POLARIZATION_CSV), &csv)?;
    }
    Ok(results)
}
