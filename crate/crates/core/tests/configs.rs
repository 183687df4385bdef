use std::fs;
use std::path::Path;

use sarcstance::experiment::ExperimentSpec;

#[test]
fn shipped_specs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let spec = ExperimentSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!spec.condition_label().is_empty());
            n += 1;
        }
    }
    assert!(n >= 3);
}
