//! Helpers for driving the `calibench` binary.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use calibench_core::kb::Domain;

pub const PREDICATES: &str = r#"
[[predicate]]
name = "located_in"
surface = "is located in"
transitive = true
negation = "located_outside"

[[predicate]]
name = "located_outside"
surface = "is located outside"

[[predicate]]
name = "different_from"
surface = "is different from"
symmetric = true

[[predicate]]
name = "influenced_by"
surface = "was influenced by"
inverse = "influenced"

[[predicate]]
name = "influenced"
inverse = "influenced_by"

[[predicate]]
name = "associated_with"
surface = "is associated with"
negation = "not_associated_with"

[[predicate]]
name = "not_associated_with"
surface = "is not associated with"
"#;

/// `copies` disjoint groups of eight triples per domain. Each group yields
/// at least two facts of every native reasoning type.
pub fn synthetic_triples(copies: usize) -> String {
    let mut out = String::new();
    for d in Domain::ALL {
        let tag = d.as_str().to_ascii_lowercase();
        for k in 0..copies {
            let e = |x: &str| format!("{x} {tag} {k}");
            for (s, p, o) in [
                ("a", "located_in", "b"),
                ("b", "located_in", "c"),
                ("c", "located_in", "d"),
                ("a", "different_from", "e"),
                ("b", "different_from", "f"),
                ("a", "influenced_by", "g"),
                ("b", "influenced_by", "h"),
                ("a", "associated_with", "k"),
            ] {
                out.push_str(&format!("{} | {p} | {} | {}\n", e(s), e(o), d.as_str()));
            }
        }
    }
    out
}

/// Writes triples, manifest and a mock-provider config into `dir`.
pub fn write_setup(dir: &Path, copies: usize, quota: usize, extra: &str) -> PathBuf {
    std::fs::write(dir.join("triples.txt"), synthetic_triples(copies)).unwrap();
    std::fs::write(dir.join("predicates.toml"), PREDICATES).unwrap();
    let cfg = format!(
        r#"out_dir = "run"
seed = 7

[kb]
triples = "triples.txt"
predicates = "predicates.toml"

[qgen]
quota = {quota}

[ask]
models = ["mock:gpt35"]
parallelism = 4

[mock.gpt35]
accuracy = 0.35
seed = 3
confidence = {{ kind = "point_mass", value = 0.94 }}
{extra}
"#
    );
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

pub fn calibench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calibench"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of an emitted CSV, skipping the manifest comment line.
pub fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = std::fs::read_to_string(path).unwrap();
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .records()
        .map(Result::unwrap)
        .collect()
}

pub fn csv_headers(path: &Path) -> csv::StringRecord {
    let text = std::fs::read_to_string(path).unwrap();
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .headers()
        .unwrap()
        .clone()
}
