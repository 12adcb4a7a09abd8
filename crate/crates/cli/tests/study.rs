use std::fs;
use std::path::Path;

use persim_cli::study::{seed_dir, ISO_MIRROR_CSV, POLARIZATION_CSV, TRAJECTORIES_CSV};
use persim_cli::{emit_plots, run_case_study, CaseStudySpec, CliError, Preset, StudyEcho};
use persim_core::agents::Role;
use persim_core::analysis::AnalysisConfig;
use persim_core::engine::{load_history, InteractionRecord};
use serde_json::json;

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn cs3_study_writes_one_directory_per_seed_and_an_aggregate() {
    let out = tempfile::tempdir().unwrap();
    let spec = CaseStudySpec::new(Preset::Cs3Polarization, vec![0, 1, 2, 3]).with_overrides(json!({"steps": 4}));
    let results = run_case_study(&spec, out.path(), &AnalysisConfig::default()).unwrap();
    assert_eq!(results.len(), 4);
    for s in 0..4 {
        let dir = seed_dir(out.path(), s);
        for f in ["config.json", TRAJECTORIES_CSV, POLARIZATION_CSV, "trajectories.svg", "polarization.svg"] {
            assert!(dir.join(f).is_file(), "{}", dir.join(f).display());
        }
    }
    let agg = read(&out.path().join(POLARIZATION_CSV));
    let mut lines = agg.lines();
    assert_eq!(lines.next(), Some("seed,t,value,signed_gap"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 5);
    for t in 0..5 {
        assert_eq!(rows.iter().filter(|r| r[1] == t.to_string()).count(), 4);
    }
    assert!(rows.iter().filter(|r| r[1] == "0").all(|r| r[2] == "1"));
}

#[test]
fn cs1_iso_mirror_has_a_row_per_step() {
    let out = tempfile::tempdir().unwrap();
    let spec = CaseStudySpec::new(Preset::Cs1Disruption, vec![0]);
    run_case_study(&spec, out.path(), &AnalysisConfig::default()).unwrap();
    let dir = seed_dir(out.path(), 0);
    let iso = read(&dir.join(ISO_MIRROR_CSV));
    assert_eq!(iso.lines().count(), 1 + 41);
    for f in ["clusters.csv", "clusters.svg", "iso_mirror.svg"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(!dir.join(POLARIZATION_CSV).exists());
}

#[test]
fn untargeted_adversary_is_never_interviewed() {
    let out = tempfile::tempdir().unwrap();
    let spec = CaseStudySpec::new(Preset::Cs2Adversarial, vec![5])
        .with_overrides(json!({"steps": 8, "population": {"targets": {"count": 0}}}));
    run_case_study(&spec, out.path(), &AnalysisConfig::default()).unwrap();
    let dir = seed_dir(out.path(), 5);
    let history = load_history(&dir).unwrap();
    let adversary = history.agents.iter().find(|a| a.role == Role::Adversarial).unwrap().index;
    let text = read(&dir.join("interactions.jsonl"));
    let records: Vec<InteractionRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 8 * 6);
    assert!(records.iter().all(|r| r.interviewee.as_ref().is_none_or(|j| j.index != adversary)));
    assert!(records.iter().filter(|r| r.interviewer.index == adversary).all(|r| r.interviewee.is_none()));
}

#[test]
fn config_echo_round_trips_and_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let overrides = json!({"steps": 3, "population": {"agent": {"eta": 0.3}}});
    let spec = CaseStudySpec::new(Preset::Cs3Polarization, vec![2, 9]).with_overrides(overrides);
    let analysis = AnalysisConfig::default();
    run_case_study(&spec, a.path(), &analysis).unwrap();
    run_case_study(&spec, b.path(), &analysis).unwrap();
    run_case_study(&spec, b.path(), &analysis).unwrap();

    let echo: StudyEcho = serde_json::from_str(&read(&a.path().join("config.json"))).unwrap();
    assert_eq!(echo.experiment, spec.resolve(2).unwrap());
    assert_eq!(echo.seeds, [2, 9]);
    assert_eq!(echo.experiment.population.agent.eta, 0.3);

    let files = |root: &Path| {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        out.sort();
        out
    };
    let listing = files(a.path());
    assert_eq!(listing, files(b.path()));
    for rel in listing {
        assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap(), "{}", rel.display());
    }
}

#[test]
fn plots_are_deterministic_and_count_lines() {
    let out = tempfile::tempdir().unwrap();
    let spec = CaseStudySpec::new(Preset::Cs3Polarization, vec![0]).with_overrides(json!({"steps": 2}));
    run_case_study(&spec, out.path(), &AnalysisConfig::default()).unwrap();
    let dir = seed_dir(out.path(), 0);
    let first: Vec<Vec<u8>> = emit_plots(&dir).unwrap().iter().map(|p| fs::read(p).unwrap()).collect();
    let second: Vec<Vec<u8>> = emit_plots(&dir).unwrap().iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
    // 10 agents in 2 classes: one line each plus a bold mean per class
    let svg = read(&dir.join("trajectories.svg"));
    assert_eq!(svg.matches("<polyline").count(), 12);
}

#[test]
fn empty_polarization_csv_is_reported_by_name() {
    let out = tempfile::tempdir().unwrap();
    let spec = CaseStudySpec::new(Preset::Cs3Polarization, vec![0]).with_overrides(json!({"steps": 1}));
    run_case_study(&spec, out.path(), &AnalysisConfig::default()).unwrap();
    let dir = seed_dir(out.path(), 0);
    let path = dir.join(POLARIZATION_CSV);
    fs::write(&path, "t,value,signed_gap\n").unwrap();
    let err = emit_plots(&dir).unwrap_err();
    assert!(err.to_string().contains("polarization.csv"), "{err}");
    fs::remove_file(&path).unwrap();
    fs::remove_file(dir.join(TRAJECTORIES_CSV)).unwrap();
    assert!(matches!(emit_plots(&dir), Err(CliError::FileNotFound(p)) if p.ends_with(TRAJECTORIES_CSV)));
}

#[test]
fn bad_overrides_fail_before_running() {
    let out = tempfile::tempdir().unwrap();
    let spec = CaseStudySpec::new(Preset::Cs2Adversarial, vec![0]).with_overrides(json!({"steps": "many"}));
    assert!(matches!(run_case_study(&spec, out.path(), &AnalysisConfig::default()), Err(CliError::Config(_))));
    assert!(!out.path().join("config.json").exists());
}
