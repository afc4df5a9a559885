use std::fs;
use std::path::Path;

use spde_core::config::RunConfig;
use spde_core::harness::StudyMode;
use spde_core::schemes::Scheme;
use spde_core::Error;

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = fs::read_to_string(&path).unwrap();
            let cfg = RunConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.to_problem().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn echo_round_trips() {
    for cfg in [RunConfig::default(), RunConfig::spatial_preset()] {
        let again = RunConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(again, cfg);
    }
}

#[test]
fn empty_file_gives_defaults() {
    assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
}

#[test]
fn spatial_preset_matches_shipped_file() {
    let text = include_str!("../../../configs/spatial.toml");
    let cfg = RunConfig::parse(text).unwrap();
    assert_eq!(cfg, RunConfig::spatial_preset());
    assert_eq!(cfg.study.mode, StudyMode::Spatial);
    assert_eq!(cfg.discretization.scheme, Scheme::Implicit);
}

#[test]
fn errors_carry_field_paths() {
    let cases = [
        ("[noise]\nhurst = 1.0\n", "noise.hurst"),
        (
            "[discretization]\nsteps = [16, 48]\nreference_steps = 4096\n",
            "discretization",
        ),
        ("[study]\nsamples = 1\n", "study.samples"),
        ("[problem]\nhorizon = -1.0\n", "problem.horizon"),
    ];
    for (text, path) in cases {
        match RunConfig::parse(text) {
            Err(Error::Config { path: p, .. }) => assert!(p.starts_with(path), "{text:?} gave path {p}"),
            other => panic!("{text:?} gave {other:?}"),
        }
    }
}

#[test]
fn rates_and_bands_follow_the_study() {
    let temporal = RunConfig::default();
    assert!((temporal.theoretical_rate() - 0.75).abs() < 1e-12);
    assert_eq!(temporal.band(), (Some(0.60), Some(0.90)));
    let spatial = RunConfig::spatial_preset();
    assert!((spatial.theoretical_rate() - 1.5).abs() < 1e-12);
    assert_eq!(spatial.band(), (Some(1.2), Some(1.8)));
}
