#![allow(dead_code)]

use std::path::PathBuf;

use sma_grid::{load_scenario, Scenario};

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load(rel: &str) -> Scenario {
    let path = scenarios_dir().join(rel);
    load_scenario(&path, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every bundled scenario the engines are expected to agree on at `dt = 1e-3`.
pub fn corpus() -> Vec<(String, Scenario)> {
    let dir = scenarios_dir().join("corpus");
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml"))
        .collect();
    names.sort();
    let mut out: Vec<_> = names
        .iter()
        .map(|n| (n.clone(), load(&format!("corpus/{n}"))))
        .collect();
    out.push(("microgrid_day.toml".into(), load("microgrid_day.toml")));
    out
}
