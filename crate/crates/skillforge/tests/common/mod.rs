//! Helpers shared by the integration suites: desk fixture projects and
//! generated mock scripts.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use skillforge::config::Config;
use skillforge::layout::Layout;
use skillforge::pipeline::Engine;
use skillforge::provider::{Gateway, MockProvider};
use skillforge::store::init_project;
use tempfile::TempDir;

pub const DESK_LEAVES: [&str; 6] = [
    "science/genomics/alignment/read-trimming",
    "science/genomics/alignment/variant-calling",
    "science/genomics/expression/normalization",
    "science/imaging/segmentation",
    "science/imaging/denoising",
    "science/chemistry/docking",
];

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn desk_taxonomy() -> String {
    std::fs::read_to_string(fixture("desk/taxonomy.txt")).unwrap()
}

pub struct Project {
    pub dir: TempDir,
    pub layout: Layout,
}

impl Project {
    pub fn root(&self) -> &Path {
        self.dir.path()
    }
}

pub fn project_from(taxonomy: &str) -> Project {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    init_project(&layout, taxonomy).unwrap();
    Project { dir, layout }
}

pub fn desk_project() -> Project {
    project_from(&desk_taxonomy())
}

pub fn desk_config() -> Config {
    Config::load(&fixture("desk/config.toml")).unwrap()
}

pub fn engine_with(layout: &Layout, config: Config, script: &Path) -> Engine {
    let profile = config.effort_profile().unwrap();
    let gateway = Gateway::new(Arc::new(MockProvider::new(script)), profile);
    Engine::new(layout.clone(), config, gateway).unwrap()
}

/// A fresh engine on the desk script, as a new process would build it.
pub fn desk_engine(layout: &Layout) -> Engine {
    engine_with(layout, desk_config(), &fixture("desk/script"))
}

/// Lowercase alphanumeric runs joined by single hyphens.
pub fn slugify(text: &str) -> String {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

pub fn leaf_slug(leaf: &str) -> String {
    leaf.split('/').map(slugify).collect::<Vec<_>>().join(".")
}

pub fn write_json(dir: &Path, name: &str, value: &Value) {
    std::fs::create_dir_all(dir).unwrap();
    let mut text = serde_json::to_string_pretty(value).unwrap();
    text.push('\n');
    std::fs::write(dir.join(name), text).unwrap();
}

pub const GOOD_SCRIPT: &str = "#!/bin/sh\nset -e\nout=\"${SF_OUTPUT_DIR:-out}\"\nmkdir -p \"$out\"\ntr 'a-z' 'A-Z' < \"$1\" > \"$out/result.txt\"\nwc -l < \"$1\" | tr -d ' '\n";

/// A candidate that passes execution and synthetic tests.
pub fn passing_candidate(name: &str, task: &str, steps: &[&str], source: &str) -> Value {
    json!({
        "name": name,
        "task_scope": task,
        "inputs": [{"name": "records", "description": "input records, one per line", "required": true, "kind": "file"}],
        "outputs": [{"name": "result", "description": "transformed records", "kind": "file"}],
        "environment_assumptions": ["POSIX sh"],
        "execution_steps": steps,
        "provenance_links": [source],
        "example_invocations": ["sh scripts/run.sh {records}"],
        "test_commands": ["sh scripts/run.sh tests/sample.txt"],
        "artifacts": [
            {"path": "scripts/run.sh", "content": GOOD_SCRIPT},
            {"path": "tests/sample.txt", "content": "acgt\nttga\n"}
        ]
    })
}

/// Writes sequential-mode responses for `cycles` cycles on the desk tree.
/// Cycle `n` focuses one leaf, records one resource and builds one skill
/// whose task words are unique to that cycle.
pub fn write_rotation_script(dir: &Path, cycles: u64) {
    for n in 1..=cycles {
        let leaf = DESK_LEAVES[((n - 1) % DESK_LEAVES.len() as u64) as usize];
        write_json(
            dir,
            &format!("tree_check__c{}__1.json", n),
            &json!({"focus_leaves": [leaf], "rationale": format!("rotation {}", n), "proposed_edits": []}),
        );
        let source = format!("https://tools.example.org/rotation/{}", n);
        let key = format!("c{}-{}", n, leaf_slug(leaf));
        write_json(
            dir,
            &format!("resource_search__{}__1.json", key),
            &json!({"resources": [{"kind": "repository", "locator": source, "leaf_path": leaf, "authority_rank": 3}]}),
        );
        let task = format!("Convert k{n}x records into q{n}y summaries");
        let steps = [format!("read k{n}x rows"), format!("emit q{n}y lines")];
        let steps: Vec<&str> = steps.iter().map(String::as_str).collect();
        write_json(
            dir,
            &format!("skill_build__{}__1.json", key),
            &json!({"candidates": [passing_candidate(&format!("rotation tool {}", n), &task, &steps, &source)]}),
        );
        write_json(
            dir,
            &format!("refresh__c{}__1.json", n),
            &json!({"registry_updates": [], "tree_updates": []}),
        );
    }
}

/// Every regular file under `root` with its bytes, keyed by relative path.
pub fn snapshot_files(root: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    if !root.exists() {
        return out;
    }
    for e in walkdir::WalkDir::new(root).sort_by_file_name() {
        let e = e.unwrap();
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            if rel == "LOCK" {
                continue;
            }
            out.insert(rel, std::fs::read(e.path()).unwrap());
        }
    }
    out
}
