mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;

fn skillforge(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillforge"))
        .arg("--registry")
        .arg(root)
        .arg("--config")
        .arg(fixture("desk/config.toml"))
        .arg("--script")
        .arg(fixture("desk/script"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn campaign_status_export_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let taxonomy = fixture("desk/taxonomy.txt");
    let init = ok(&skillforge(root, &["init", taxonomy.to_str().unwrap()]));
    assert!(init.starts_with("initialized "), "{}", init);

    let plan = fixture("desk/campaign.toml");
    let run = ok(&skillforge(root, &["campaign", "run", plan.to_str().unwrap()]));
    assert!(run.starts_with("campaign desk: Completed, 3 mining phases, 2 evaluation phases"), "{}", run);

    let status: serde_json::Value = serde_json::from_str(&ok(&skillforge(root, &["status"]))).unwrap();
    assert!(status.is_object(), "{}", status);

    let site = root.join("out-site");
    let export = ok(&skillforge(root, &["export-site", site.to_str().unwrap()]));
    assert!(export.starts_with("exported "), "{}", export);
    assert!(site.join("stats.json").is_file());

    let timing = ok(&skillforge(root, &["timing-report"]));
    let lines: Vec<&str> = timing.lines().collect();
    assert_eq!(lines.len(), 6, "{}", timing);
    assert!(lines[0].starts_with("stage"));
    assert!(lines[1].starts_with("tree_check"));
}

#[test]
fn failures_name_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = skillforge(dir.path(), &["novelty", "no-such-skill"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: novelty: "), "{}", err);

    let taxonomy = fixture("desk/taxonomy.txt");
    ok(&skillforge(dir.path(), &["init", taxonomy.to_str().unwrap()]));
    let again = skillforge(dir.path(), &["init", taxonomy.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).starts_with("error: init: "));

    let resume = skillforge(dir.path(), &["campaign", "resume", "desk"]);
    assert_eq!(resume.status.code(), Some(1));
    let err = String::from_utf8_lossy(&resume.stderr);
    assert!(err.starts_with("error: campaign resume: ") && err.contains("no checkpoint"), "{}", err);
}
