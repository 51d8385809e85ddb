//! Bundled scenario and environment files.
//!
//! Files are compiled in, but a directory named by `EVAC_FIXTURES_DIR` takes
//! precedence so geometry can be adjusted without rebuilding.

use std::path::PathBuf;

pub const FIXTURES_ENV: &str = "EVAC_FIXTURES_DIR";

const EMBEDDED: &[(&str, &str)] = &[
    ("scenarios/walk.json", include_str!("../fixtures/scenarios/walk.json")),
    ("scenarios/corner.json", include_str!("../fixtures/scenarios/corner.json")),
    ("scenarios/counterflow.json", include_str!("../fixtures/scenarios/counterflow.json")),
    ("scenarios/exit_alloc.json", include_str!("../fixtures/scenarios/exit_alloc.json")),
    ("scenarios/showcase.json", include_str!("../fixtures/scenarios/showcase.json")),
    ("graphs/nightclub.json", include_str!("../fixtures/graphs/nightclub.json")),
    ("suite/suite.json", include_str!("../fixtures/suite/suite.json")),
];

/// Contents of the fixture at `relative` (e.g. `scenarios/walk.json`).
pub fn load(relative: &str) -> Option<String> {
    if let Some(dir) = std::env::var_os(FIXTURES_ENV) {
        let path = PathBuf::from(dir).join(relative);
        if let Ok(text) = std::fs::read_to_string(&path) {
            log::debug!("using fixture override {}", path.display());
            return Some(text);
        }
    }
    EMBEDDED.iter().find(|(name, _)| *name == relative).map(|(_, text)| text.to_string())
}

/// Names of all bundled fixtures.
pub fn names() -> impl Iterator<Item = &'static str> {
    EMBEDDED.iter().map(|(name, _)| *name)
}
