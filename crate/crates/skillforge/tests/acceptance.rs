//! The acceptance gate. Runs every criterion, prints one PASS/FAIL line
//! each and exits non-zero if any failed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::*;
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use serde::Deserialize;
use skillforge::campaign::{resume_campaign, run_campaign, CampaignConfig, CampaignStatus};
use skillforge::catalog::load_catalog;
use skillforge::config::Config;
use skillforge::export::{export_site, SiteStats};
use skillforge::harness::{synthetic_test, Harness, Stability};
use skillforge::layout::STATE_ENTRIES;
use skillforge::pipeline::{
    read_cycle_reports, CycleReport, CycleStatus, Mode, PipelineError, StageOutcome,
};
use skillforge::store::{open_library, open_registry, state_digest};
use skillforge::workers::{collect_leaf_artifacts, merge_worker_outputs, run_workers, spawn_workspace, WorkerError, WorkerOutput};
use skillforge_core::contract::{scope_summary, ContractInput, ContractOutput, InputKind, OutputKind, SkillContract};
use skillforge_core::novelty::{adjudicate, search_catalogs, CatalogEntry, Decision};
use skillforge_core::registry::{
    resource_id, Confidence, Layer, NoveltyRecord, Outcome, Registry, ResourceEntry, ResourceKind, SkillEntry,
    SkillStatus, VerificationRecord,
};
use skillforge_core::stage::StageKind;
use skillforge_core::taxonomy::load_tree;
use skillforge_core::tree::{LeafSpec, NodeKind};
use skillforge_core::{Library, NodePath};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

trait OrFail<T> {
    fn or_fail(self, what: &str) -> Result<T, String>;
}

impl<T, E: std::fmt::Display> OrFail<T> for Result<T, E> {
    fn or_fail(self, what: &str) -> Result<T, String> {
        self.map_err(|e| format!("{}: {}", what, e))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("deterministic mock campaign", deterministic_campaign),
        ("stage-order conformance", stage_order),
        ("tree invariant suite", tree_invariants),
        ("validation state machine", state_machine),
        ("synthetic stability oracle", synthetic_stability),
        ("novelty ladder equivalence", novelty_ladder),
        ("merge determinism", merge_determinism),
        ("checkpoint soundness", checkpoint_soundness),
        ("site export fidelity", export_fidelity),
        ("timing report", timing_report),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {}", msg))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} {}: PASS ({}; {:.2}s)", i + 1, name, detail, secs),
            Err(why) => {
                println!("criterion {:>2} {}: FAIL ({}; {:.2}s)", i + 1, name, why, secs);
                failed.push(i + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {:?}", failed);
        std::process::exit(1);
    }
}

// ---- shared --------------------------------------------------------------------------

fn state_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in STATE_ENTRIES {
        for (rel, bytes) in snapshot_files(&root.join(entry)) {
            out.insert(format!("{}/{}", entry, rel), bytes);
        }
    }
    out
}

fn first_difference(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Option<String> {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter().find(|k| a.get(*k) != b.get(*k)).cloned()
}

fn desk_campaign(stop_after: Option<usize>) -> Result<(Project, CampaignStatus, usize), String> {
    let p = desk_project();
    let plan = CampaignConfig::load(&fixture("desk/campaign.toml")).or_fail("plan")?;
    let report = run_campaign(&desk_engine(&p.layout), plan, stop_after).or_fail("campaign run")?;
    let phases = report.phases.len();
    let status = report.status;
    Ok((p, status, phases))
}

fn path(s: &str) -> NodePath {
    s.parse().unwrap()
}

// ---- 1 -------------------------------------------------------------------------------

fn deterministic_campaign() -> Check {
    let mut runs = Vec::new();
    let mut slowest = 0.0f64;
    for _ in 0..2 {
        let start = Instant::now();
        let (p, status, phases) = desk_campaign(None)?;
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        ensure!(status == CampaignStatus::Completed, "campaign ended {:?}", status);
        ensure!(phases == 5, "expected 5 phases, saw {}", phases);
        ensure!(secs < 30.0, "campaign took {:.1}s", secs);
        runs.push((state_files(p.root()), snapshot_files(&p.root().join("site"))));
    }
    let (a, b) = (&runs[0], &runs[1]);
    if let Some(f) = first_difference(&a.0, &b.0) {
        return Err(format!("state differs at {}", f));
    }
    ensure!(a.1 == b.1, "site bundles differ");
    ensure!(a.0.keys().any(|k| k.starts_with("registry/")), "no registry files");
    ensure!(a.1.len() == 5, "site bundle has {} files", a.1.len());
    Ok(format!("{} state files byte-identical, slowest run {:.2}s", a.0.len(), slowest))
}

// ---- 2 -------------------------------------------------------------------------------

fn stage_order() -> Check {
    const EXPECTED: [StageKind; 5] = [
        StageKind::TreeCheck,
        StageKind::ResourceSearch,
        StageKind::SkillBuild,
        StageKind::SkillTest,
        StageKind::Refresh,
    ];
    let p = desk_project();
    let script = p.root().join("rotation-script");
    write_rotation_script(&script, 50);
    let engine = engine_with(&p.layout, Config::desk(), &script);
    for _ in 0..50 {
        engine.run_cycle(Mode::Sequential, None).or_fail("cycle")?;
    }
    let reports = read_cycle_reports(&p.layout).or_fail("cycle log")?;
    ensure!(reports.len() == 50, "{} cycle reports", reports.len());
    for r in &reports {
        ensure!(r.is_completed(), "cycle {} did not complete: {:?}", r.cycle_index, r.status);
        ensure!(
            r.stage_order() == EXPECTED,
            "cycle {} ran {:?}",
            r.cycle_index,
            r.stage_order()
        );
        ensure!(r.verified.len() == 1, "cycle {} verified {:?}", r.cycle_index, r.verified);
    }

    // skipping ahead is refused before anything runs
    let mut state = engine.begin_cycle(Mode::Sequential, None).or_fail("begin")?;
    match engine.run_stage(&mut state, StageKind::SkillBuild) {
        Err(PipelineError::OutOfOrderStage { .. }) => {}
        other => return Err(format!("out-of-order stage accepted: {:?}", other.map(|o| o.stage))),
    }
    let verified = open_registry(&p.layout)
        .or_fail("registry")?
        .skills()
        .filter(|s| s.status == SkillStatus::Verified)
        .count();
    Ok(format!("50/50 cycles in order, {} verified skills", verified))
}

// ---- 3 -------------------------------------------------------------------------------

const SOURCE: &str = "https://example.org/seed";

#[derive(Default)]
struct OpTally {
    insert: usize,
    skill: usize,
    merge: usize,
    prune: usize,
    split: usize,
    fail: usize,
    resource: usize,
}

fn live_leaves(lib: &Library) -> Vec<NodePath> {
    lib.tree
        .leaves()
        .filter(|n| n.status.is_live())
        .map(|n| n.path.clone())
        .collect()
}

fn random_op(lib: &mut Library, rng: &mut StdRng, n: usize, cycle: u64, tally: &mut OpTally) -> Result<(), String> {
    let leaves = live_leaves(lib);
    let pick = |rng: &mut StdRng| leaves[rng.random_range(0..leaves.len())].clone();
    match rng.random_range(0..7) {
        0 => {
            let parents: Vec<NodePath> = lib
                .tree
                .nodes()
                .filter(|n| n.status.is_live() && matches!(n.kind, NodeKind::Domain | NodeKind::Subdomain))
                .map(|n| n.path.clone())
                .collect();
            let parent = parents[rng.random_range(0..parents.len())].clone();
            lib.insert_leaf(&parent, &LeafSpec::new(format!("n{}", n), cycle))
                .or_fail("insert")?;
            tally.insert += 1;
        }
        1 => {
            let leaf = pick(rng);
            let name = format!("tool {}", n);
            let id = lib.registry.allocate_skill_id(&leaf, &name);
            lib.registry
                .upsert_skill(SkillEntry {
                    id: id.clone(),
                    name,
                    leaf_path: leaf.clone(),
                    status: SkillStatus::Untested,
                    package_path: format!("skills/{}/{}", leaf.dir(), id),
                    smoke_target: None,
                    provenance: vec![resource_id(SOURCE)],
                    created_cycle: cycle,
                    updated_cycle: cycle,
                    confidence: Confidence::Standard,
                })
                .or_fail("upsert")?;
            if rng.random_bool(0.6) {
                lib.record_verification(VerificationRecord {
                    skill_id: id.clone(),
                    layer: Layer::Execution,
                    outcome: Outcome::Pass,
                    attempt: 1,
                    report_locator: String::new(),
                    cycle,
                })
                .or_fail("verify")?;
            }
            lib.place_skill(&id, cycle).or_fail("place")?;
            tally.skill += 1;
        }
        2 if leaves.len() >= 2 => {
            let a = pick(rng);
            let mut b = pick(rng);
            while b == a {
                b = pick(rng);
            }
            let survivor = if rng.random_bool(0.5) { a.clone() } else { b.clone() };
            let before = lib.tree.skill_links();
            lib.merge_leaves(&a, &b, &survivor, cycle).or_fail("merge")?;
            ensure!(before == lib.tree.skill_links(), "merge of {} and {} changed links", a, b);
            tally.merge += 1;
        }
        3 if leaves.len() > 3 => {
            let leaf = pick(rng);
            let retired = lib.prune_leaf(&leaf, "random prune", cycle).or_fail("prune")?;
            for id in retired {
                ensure!(!lib.registry.skill(&id).unwrap().status.is_live(), "{} survived prune", id);
            }
            tally.prune += 1;
        }
        4 => {
            let leaf = pick(rng);
            let skills: Vec<String> = lib.tree.get(&leaf).unwrap().linked_skills.iter().cloned().collect();
            let cut = rng.random_range(0..=skills.len());
            let parts = vec![
                (LeafSpec::new(format!("p{}", n), cycle), skills[..cut].to_vec()),
                (LeafSpec::new(format!("q{}", n), cycle), skills[cut..].to_vec()),
            ];
            let before = lib.tree.skill_links();
            lib.split_leaf(&leaf, &parts, cycle).or_fail("split")?;
            ensure!(before == lib.tree.skill_links(), "split of {} changed links", leaf);
            tally.split += 1;
        }
        5 => {
            let verified: Vec<String> = lib
                .registry
                .skills()
                .filter(|s| s.status == SkillStatus::Verified)
                .map(|s| s.id.clone())
                .collect();
            if let Some(id) = verified.choose(rng).cloned() {
                let attempt = lib.registry.next_attempt(&id, Layer::Execution);
                lib.record_verification(VerificationRecord {
                    skill_id: id,
                    layer: Layer::Execution,
                    outcome: Outcome::Fail,
                    attempt,
                    report_locator: String::new(),
                    cycle,
                })
                .or_fail("fail")?;
                tally.fail += 1;
            }
        }
        _ => {
            let leaf = pick(rng);
            let locator = format!("https://example.org/r{}", rng.random_range(0..40));
            lib.record_resource(ResourceEntry::new(ResourceKind::Paper, &locator, leaf, cycle, 2))
                .or_fail("resource")?;
            tally.resource += 1;
        }
    }
    Ok(())
}

fn tree_invariants() -> Check {
    let taxonomy = "lab\n  wet\n    assays\n      elisa *\n      qpcr *\n    culture *\n  dry\n    stats\n      anova *\n    plots *\n  field\n    survey *\n";
    let mut tally = OpTally::default();
    let seeds = 5u64;
    for seed in 0..seeds {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut registry = Registry::new();
        registry
            .record_resource(ResourceEntry::new(ResourceKind::Repository, SOURCE, path("lab/wet/culture"), 0, 1))
            .or_fail("seed resource")?;
        let mut lib = Library::new(load_tree(taxonomy).or_fail("taxonomy")?, registry);
        for n in 0..1000 {
            random_op(&mut lib, &mut rng, n, 1 + n as u64 / 20, &mut tally)
                .map_err(|e| format!("seed {} op {}: {}", seed, n, e))?;
            let violations = lib.integrity_check();
            ensure!(violations.is_empty(), "seed {} op {}: {:?}", seed, n, violations);
            for node in lib.tree.nodes() {
                ensure!(
                    node.coverage_flag == node.computed_coverage(),
                    "seed {} op {}: stale coverage on {}",
                    seed,
                    n,
                    node.path
                );
            }
        }
    }
    ensure!(
        tally.merge > 0 && tally.split > 0 && tally.prune > 0 && tally.insert > 0,
        "some operation never ran"
    );
    Ok(format!(
        "{} ops over {} seeds: {} insert, {} merge, {} prune, {} split, {} skill, {} fail, {} resource",
        seeds * 1000,
        seeds,
        tally.insert,
        tally.merge,
        tally.prune,
        tally.split,
        tally.skill,
        tally.fail,
        tally.resource
    ))
}

// ---- 4 -------------------------------------------------------------------------------

/// Legal moves, written out from the state machine table.
const LEGAL: [(SkillStatus, SkillStatus); 9] = {
    use SkillStatus::*;
    [
        (Untested, Repaired),
        (Untested, Verified),
        (Untested, Removed),
        (Repaired, Verified),
        (Repaired, Removed),
        (Verified, Review),
        (Verified, Deprecated),
        (Review, Verified),
        (Review, Deprecated),
    ]
};

fn route_to(status: SkillStatus) -> Vec<SkillStatus> {
    use SkillStatus::*;
    match status {
        Untested => vec![],
        Repaired => vec![Repaired],
        Verified => vec![Verified],
        Review => vec![Verified, Review],
        Deprecated => vec![Verified, Deprecated],
        Removed => vec![Removed],
    }
}

fn sweep_entry() -> SkillEntry {
    SkillEntry {
        id: "sweep-tool".into(),
        name: "sweep tool".into(),
        leaf_path: path("lab/bench/a"),
        status: SkillStatus::Untested,
        package_path: "skills/lab/bench/a/sweep-tool".into(),
        smoke_target: None,
        provenance: vec![resource_id(SOURCE)],
        created_cycle: 1,
        updated_cycle: 1,
        confidence: Confidence::Standard,
    }
}

fn state_machine() -> Check {
    let (p, status, _) = desk_campaign(None)?;
    ensure!(status == CampaignStatus::Completed, "campaign ended {:?}", status);
    let reg = open_registry(&p.layout).or_fail("registry")?;

    let outcomes = |id: &str| -> Vec<(u32, Outcome)> {
        reg.verifications_for(id)
            .filter(|v| v.layer == Layer::Execution)
            .map(|v| (v.attempt, v.outcome))
            .collect()
    };
    let fixed = "variant-calling-pileup-caller";
    let skill = reg.skill(fixed).ok_or("fixable skill missing")?;
    ensure!(skill.status == SkillStatus::Verified, "{} is {}", fixed, skill.status);
    ensure!(reg.attempts(fixed, Layer::Execution) == 2, "{} took {} attempts", fixed, reg.attempts(fixed, Layer::Execution));
    ensure!(
        outcomes(fixed) == [(1, Outcome::Fail), (2, Outcome::Pass)],
        "{} execution record {:?}",
        fixed,
        outcomes(fixed)
    );
    let broken = "normalization-tpm-scaler";
    let skill = reg.skill(broken).ok_or("broken skill missing")?;
    ensure!(skill.status == SkillStatus::Removed, "{} is {}", broken, skill.status);
    ensure!(
        outcomes(broken) == [(1, Outcome::Fail), (2, Outcome::Fail), (3, Outcome::Fail)],
        "{} execution record {:?}",
        broken,
        outcomes(broken)
    );

    // every history starts untested, moves only along legal edges and ends
    // at the stored status
    let mut replayed = 0;
    for s in reg.skills() {
        let h = reg.history(&s.id);
        ensure!(h.first() == Some(&SkillStatus::Untested), "{} history starts {:?}", s.id, h.first());
        // updates that keep the status are not moves
        for w in h.windows(2).filter(|w| w[0] != w[1]) {
            ensure!(LEGAL.contains(&(w[0], w[1])), "{} moved {} -> {}", s.id, w[0], w[1]);
        }
        ensure!(h.last() == Some(&s.status), "{} history ends {:?}, status {}", s.id, h.last(), s.status);
        replayed += 1;
    }

    let mut rejected = 0;
    let mut illegal = 0;
    for from in SkillStatus::ALL {
        for to in SkillStatus::ALL {
            if from == to {
                continue;
            }
            let mut reg = Registry::new();
            reg.upsert_skill(sweep_entry()).or_fail("sweep upsert")?;
            for step in route_to(from) {
                reg.set_status("sweep-tool", step, 1).or_fail("sweep route")?;
            }
            let legal = LEGAL.contains(&(from, to));
            match reg.set_status("sweep-tool", to, 2) {
                Ok(e) => {
                    ensure!(legal, "{} -> {} accepted", from, to);
                    ensure!(e.status == to, "{} -> {} left {}", from, to, e.status);
                }
                Err(e) => {
                    ensure!(!legal, "{} -> {} refused: {}", from, to, e);
                    let msg = e.to_string();
                    ensure!(msg.contains(from.as_str()) && msg.contains(to.as_str()), "error omits states: {}", msg);
                    ensure!(reg.skill("sweep-tool").unwrap().status == from, "refusal changed status");
                    rejected += 1;
                }
            }
            if !legal {
                illegal += 1;
            }
        }
    }
    ensure!(rejected == illegal, "{} of {} illegal moves rejected", rejected, illegal);
    Ok(format!(
        "fixable verified at attempt 2, broken removed after 3, {} histories replayed, {}/{} illegal moves rejected",
        replayed, rejected, illegal
    ))
}

// ---- 5 -------------------------------------------------------------------------------

fn package(root: &Path, name: &str, script: &str) -> std::path::PathBuf {
    let dir = root.join("packages").join(name);
    std::fs::create_dir_all(dir.join("scripts")).unwrap();
    std::fs::write(dir.join("scripts/run.sh"), script).unwrap();
    dir
}

fn synthetic_contract(inputs: Vec<ContractInput>, invocation: &str) -> SkillContract {
    SkillContract {
        task_scope: "Uppercase sequence records".into(),
        inputs,
        outputs: vec![ContractOutput {
            name: "summary".into(),
            description: "uppercased records".into(),
            kind: OutputKind::Stream,
        }],
        environment_assumptions: vec!["POSIX sh".into()],
        execution_steps: vec!["uppercase each record".into()],
        provenance_links: vec![SOURCE.into()],
        follow_up_guidance: None,
        example_invocations: vec![invocation.into()],
        test_commands: vec![],
    }
}

fn records_input() -> ContractInput {
    ContractInput {
        name: "records".into(),
        description: "records to transform".into(),
        required: true,
        kind: InputKind::File,
    }
}

fn synthetic_stability() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path(), Duration::from_secs(5));
    let stamped = package(dir.path(), "stamped", "#!/bin/sh\ntr 'a-z' 'A-Z' < \"$1\"\ndate +%s%N\n");
    let twin = package(dir.path(), "twin", "#!/bin/sh\ntr 'a-z' 'A-Z' < \"$1\"\n");
    let ignoring = package(dir.path(), "ignoring", "#!/bin/sh\ntr 'a-z' 'A-Z' < \"$1\"\n");
    let one = synthetic_contract(vec![records_input()], "sh scripts/run.sh {records}");
    let two = synthetic_contract(
        vec![
            records_input(),
            ContractInput {
                name: "label".into(),
                description: "sample label".into(),
                required: true,
                kind: InputKind::Argument,
            },
        ],
        "sh scripts/run.sh {records} {label}",
    );
    let none = BTreeMap::new();
    let (mut unstable, mut stable) = (0, 0);
    for attempt in 1..=20 {
        let r = synthetic_test(&h, "stamped", &stamped, &one, &none, attempt).or_fail("stamped run")?;
        if r.stability == Stability::Unstable && r.verdict == Outcome::Fail {
            unstable += 1;
        }
        let r = synthetic_test(&h, "twin", &twin, &one, &none, attempt).or_fail("twin run")?;
        if r.stability == Stability::Stable && r.verdict == Outcome::Pass {
            stable += 1;
        }
    }
    ensure!(unstable == 20, "timestamp fixture unstable in {}/20 runs", unstable);
    ensure!(stable == 20, "deterministic twin stable in {}/20 runs", stable);
    let r = synthetic_test(&h, "ignoring", &ignoring, &two, &none, 1).or_fail("ignoring run")?;
    ensure!(r.gaps == ["label"], "gaps {:?}", r.gaps);
    ensure!(r.contract_coverage["records"].exercised, "records input not exercised");
    ensure!(!r.contract_coverage["label"].exercised, "label input reported as used");
    ensure!(r.stability == Stability::Stable, "ignored-input fixture unstable");
    Ok("timestamp unstable 20/20, twin stable 20/20, gap exactly [label]".into())
}

// ---- 6 -------------------------------------------------------------------------------

#[derive(Deserialize)]
struct Candidate {
    id: String,
    task_scope: String,
    environment_assumptions: Vec<String>,
    execution_steps: Vec<String>,
}

/// Brute force over the whole catalog with its own tokenizer.
mod oracle {
    use std::collections::BTreeSet;

    const STOP: &str = "a about after all also an and any are as at be been but by can each for from has have \
        if in into is it its more no not of on or other so such than that the their then there these this to \
        was which will with within";

    fn keywords(text: &str) -> BTreeSet<String> {
        let stop: BTreeSet<&str> = STOP.split_whitespace().collect();
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| w.to_lowercase())
            .filter(|w| !stop.contains(w.as_str()))
            .collect();
        let mut set: BTreeSet<String> = words.iter().cloned().collect();
        for i in 1..words.len() {
            set.insert(format!("{} {}", words[i - 1], words[i]));
        }
        set
    }

    fn similar(a: &str, b: &str) -> bool {
        let (ka, kb) = (keywords(a), keywords(b));
        let union = ka.union(&kb).count();
        let inter = ka.intersection(&kb).count();
        // inter / union >= 0.6 without division
        let by_keywords = union > 0 && 5 * inter >= 3 * union;
        let flat = |s: &str| s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ");
        by_keywords || (!flat(a).is_empty() && flat(a) == flat(b))
    }

    /// "redundant", "merge" or "novel".
    pub fn decide(task: &str, scope: &str, catalog: &[(String, String)]) -> &'static str {
        let same_task: Vec<&(String, String)> = catalog.iter().filter(|(t, _)| similar(task, t)).collect();
        if same_task.iter().any(|(_, s)| similar(scope, s)) {
            "redundant"
        } else if !same_task.is_empty() {
            "merge"
        } else {
            "novel"
        }
    }
}

fn novelty_ladder() -> Check {
    let catalog = load_catalog(&fixture("desk/catalog.ndjson")).or_fail("catalog")?;
    ensure!(catalog.entries.len() == 20, "catalog has {} entries", catalog.entries.len());
    let text = std::fs::read_to_string(fixture("novelty/candidates.json")).or_fail("candidates")?;
    let candidates: Vec<Candidate> = serde_json::from_str(&text).or_fail("candidates")?;
    ensure!(candidates.len() == 10, "{} candidates", candidates.len());
    let pairs: Vec<(String, String)> = catalog
        .entries
        .iter()
        .map(|e| (e.task_description.clone(), e.scope_summary.clone()))
        .collect();
    let limit = desk_config().novelty.limit;
    let mut agree = 0;
    let mut seen = BTreeMap::new();
    for c in &candidates {
        let contract = SkillContract {
            task_scope: c.task_scope.clone(),
            inputs: vec![],
            outputs: vec![],
            environment_assumptions: c.environment_assumptions.clone(),
            execution_steps: c.execution_steps.clone(),
            provenance_links: vec![SOURCE.into()],
            follow_up_guidance: None,
            example_invocations: vec![],
            test_commands: vec![],
        };
        let entry = CatalogEntry {
            entry_ref: c.id.clone(),
            task_description: contract.task_scope.clone(),
            scope_summary: scope_summary(&contract),
            topic_path: None,
            provenance: vec![],
        };
        let verdict = adjudicate(&c.id, search_catalogs(std::slice::from_ref(&catalog), &entry, limit), None);
        let scope = c
            .environment_assumptions
            .iter()
            .chain(&c.execution_steps)
            .cloned()
            .collect::<Vec<_>>()
            .join("; ");
        let expected = oracle::decide(&c.task_scope, &scope, &pairs);
        ensure!(
            verdict.decision.as_str() == expected,
            "{}: adjudicate said {}, oracle {}",
            c.id,
            verdict.decision.as_str(),
            expected
        );
        agree += 1;
        *seen.entry(expected).or_insert(0) += 1;
        if c.id == "forced-redundant" {
            ensure!(verdict.decision == Decision::Redundant, "forced redundant case missed");
        }
        if c.id == "forced-merge" {
            ensure!(verdict.decision == Decision::Merge, "forced merge case missed");
        }
    }
    Ok(format!("{}/10 agree; oracle classes {:?}", agree, seen))
}

// ---- 7 -------------------------------------------------------------------------------

fn worker_files(leaf: &NodePath) -> Vec<(String, String)> {
    vec![
        (format!("skills/{}/probe/SKILL.md", leaf.dir()), format!("# probe for {}\n", leaf)),
        (format!("skills/{}/probe/scripts/run.sh", leaf.dir()), "#!/bin/sh\necho probe\n".into()),
        (format!("tests/{}/probe.md", leaf.dir()), format!("notes on {}\n", leaf.last())),
    ]
}

fn run_round(leaves: &[NodePath], delays: &[u64], rogue: Option<&NodePath>) -> Result<(Project, Vec<WorkerOutput>, Vec<NodePath>), String> {
    let p = desk_project();
    let lib = open_library(&p.layout).or_fail("library")?;
    let finished = Mutex::new(Vec::new());
    let outputs = run_workers(&p.layout, &lib.tree, leaves, |ws| {
        let i = leaves.iter().position(|l| l == &ws.leaf_path).unwrap();
        std::thread::sleep(Duration::from_millis(delays[i]));
        for (rel, text) in worker_files(&ws.leaf_path) {
            let target = ws.isolated_root.join(rel);
            std::fs::create_dir_all(target.parent().unwrap()).map_err(|e| e.to_string())?;
            std::fs::write(target, text).map_err(|e| e.to_string())?;
        }
        if rogue == Some(&ws.leaf_path) {
            std::fs::create_dir_all(ws.isolated_root.join("site")).map_err(|e| e.to_string())?;
            std::fs::write(ws.isolated_root.join("site/stats.json"), "{}\n").map_err(|e| e.to_string())?;
        }
        finished.lock().unwrap().push(ws.leaf_path.clone());
        Ok((None, ()))
    })
    .or_fail("workers")?;
    let order = finished.into_inner().unwrap();
    Ok((p, outputs.into_iter().map(|(o, _)| o).collect(), order))
}

fn merge_determinism() -> Check {
    let leaves: Vec<NodePath> = DESK_LEAVES[..4].iter().map(|l| path(l)).collect();
    let mut digests = BTreeSet::new();
    let mut orders = BTreeSet::new();
    for round in 0..20u64 {
        let mut rng = StdRng::seed_from_u64(round);
        let delays: Vec<u64> = (0..leaves.len()).map(|_| rng.random_range(0..25)).collect();
        let (p, mut outputs, order) = run_round(&leaves, &delays, None)?;
        outputs.shuffle(&mut rng);
        let report = merge_worker_outputs(p.root(), outputs).or_fail("merge")?;
        ensure!(report.applied == leaves, "round {} applied {:?}", round, report.applied);
        digests.insert(state_digest(&p.layout).or_fail("digest")?);
        orders.insert(order);
    }
    ensure!(digests.len() == 1, "{} distinct final digests", digests.len());

    // a worker writing a refresh-owned path is turned away at collection
    let p = desk_project();
    let lib = open_library(&p.layout).or_fail("library")?;
    let before = state_digest(&p.layout).or_fail("digest")?;
    let mut ws = spawn_workspace(&p.layout, &lib.tree, &leaves[0]).or_fail("spawn")?;
    std::fs::create_dir_all(ws.isolated_root.join("site")).unwrap();
    std::fs::write(ws.isolated_root.join("site/stats.json"), "{}\n").unwrap();
    match collect_leaf_artifacts(&p.layout, &mut ws, None) {
        Err(e @ WorkerError::SharedFileWrite { .. }) => {
            ensure!(e.to_string().contains("site/stats.json"), "conflict does not name the path: {}", e)
        }
        other => return Err(format!("refresh-owned write collected: {:?}", other.map(|s| s.files))),
    }
    ensure!(state_digest(&p.layout).or_fail("digest")? == before, "rejection changed the main state");

    // and inside a full round the rogue leaf is excluded while the rest merge
    // exactly as they would without it
    let (p, outputs, _) = run_round(&leaves, &[0, 0, 0, 0], Some(&leaves[1]))?;
    let report = merge_worker_outputs(p.root(), outputs).or_fail("merge")?;
    ensure!(
        report.excluded.len() == 1 && report.excluded[0].0 == leaves[1] && report.excluded[0].1.contains("site/stats.json"),
        "exclusions {:?}",
        report.excluded
    );
    let honest: Vec<NodePath> = leaves.iter().filter(|l| **l != leaves[1]).cloned().collect();
    let (q, outputs, _) = run_round(&honest, &[0, 0, 0], None)?;
    merge_worker_outputs(q.root(), outputs).or_fail("merge")?;
    ensure!(
        state_digest(&p.layout).or_fail("digest")? == state_digest(&q.layout).or_fail("digest")?,
        "rogue worker leaked into the merged state"
    );
    Ok(format!(
        "20 rounds, {} completion orders, 1 digest; site/stats.json conflict rejected",
        orders.len()
    ))
}

// ---- 8 -------------------------------------------------------------------------------

fn checkpoint_soundness() -> Check {
    let (reference, status, phases) = desk_campaign(None)?;
    ensure!(status == CampaignStatus::Completed, "reference run ended {:?}", status);
    let expected = state_files(reference.root());
    let expected_digest = state_digest(&reference.layout).or_fail("digest")?;
    for k in 1..phases {
        let (p, status, done) = desk_campaign(Some(k))?;
        ensure!(status == CampaignStatus::Interrupted && done == k, "stop after {} gave {:?} with {}", k, status, done);
        let report = resume_campaign(&desk_engine(&p.layout), "desk", None).or_fail("resume")?;
        ensure!(report.status == CampaignStatus::Completed, "resume after {} ended {:?}", k, report.status);
        if let Some(f) = first_difference(&expected, &state_files(p.root())) {
            return Err(format!("interrupted after phase {}: {} differs", k, f));
        }
    }
    // one phase per process, all the way through
    let (p, _, _) = desk_campaign(Some(1))?;
    let mut resumes = 0;
    loop {
        let report = resume_campaign(&desk_engine(&p.layout), "desk", Some(1)).or_fail("stepwise resume")?;
        resumes += 1;
        if report.status == CampaignStatus::Completed {
            break;
        }
        ensure!(resumes < 10, "stepwise campaign never finished");
    }
    ensure!(
        state_digest(&p.layout).or_fail("digest")? == expected_digest,
        "stepwise campaign diverged"
    );
    Ok(format!("{} interruption points and a stepwise run match the reference", phases - 1))
}

// ---- 9 -------------------------------------------------------------------------------

/// Counts of the published library snapshot.
const SNAPSHOT_SKILLS: usize = 286;
const SNAPSHOT_DOMAINS: usize = 27;
const SNAPSHOT_SUBDOMAINS: usize = 254;
const SNAPSHOT_RESOURCES: usize = 394;

/// A library with the snapshot's counts. 20 live skills were merges and
/// 88 redundant candidates were removed, so 266 of 374 verdicts are novel.
fn snapshot_shaped_library() -> Result<Library, String> {
    let mut taxonomy = String::from("science\n");
    let mut leaves = Vec::new();
    let mut sub = 0;
    for d in 0..SNAPSHOT_DOMAINS {
        taxonomy.push_str(&format!("  domain-{:02}\n", d));
        let count = SNAPSHOT_SUBDOMAINS / SNAPSHOT_DOMAINS + usize::from(d < SNAPSHOT_SUBDOMAINS % SNAPSHOT_DOMAINS);
        for _ in 0..count {
            taxonomy.push_str(&format!("    area-{:03}\n      methods *\n", sub));
            leaves.push(path(&format!("science/domain-{:02}/area-{:03}/methods", d, sub)));
            sub += 1;
        }
    }
    let mut lib = Library::new(load_tree(&taxonomy).or_fail("taxonomy")?, Registry::new());
    for r in 0..SNAPSHOT_RESOURCES {
        let leaf = leaves[r % leaves.len()].clone();
        lib.record_resource(ResourceEntry::new(
            ResourceKind::Documentation,
            &format!("https://docs.example.org/r{:03}", r),
            leaf,
            1,
            2,
        ))
        .or_fail("resource")?;
    }
    let add = |lib: &mut Library, i: usize| -> Result<String, String> {
        let leaf = leaves[i % leaves.len()].clone();
        let name = format!("tool {:03}", i);
        let id = lib.registry.allocate_skill_id(&leaf, &name);
        lib.registry
            .upsert_skill(SkillEntry {
                id: id.clone(),
                name,
                leaf_path: leaf.clone(),
                status: SkillStatus::Untested,
                package_path: format!("skills/{}/{}", leaf.dir(), id),
                smoke_target: None,
                provenance: vec![resource_id(&format!("https://docs.example.org/r{:03}", i % SNAPSHOT_RESOURCES))],
                created_cycle: 1,
                updated_cycle: 1,
                confidence: Confidence::Standard,
            })
            .or_fail("skill")?;
        Ok(id)
    };
    for i in 0..SNAPSHOT_SKILLS {
        let id = add(&mut lib, i)?;
        lib.record_verification(VerificationRecord {
            skill_id: id.clone(),
            layer: Layer::Execution,
            outcome: Outcome::Pass,
            attempt: 1,
            report_locator: String::new(),
            cycle: 1,
        })
        .or_fail("verify")?;
        lib.place_skill(&id, 1).or_fail("place")?;
        let decision = if i < 20 { Decision::Merge } else { Decision::Novel };
        lib.registry
            .record_verdict(NoveltyRecord {
                skill_id: id,
                decision,
                rationale: String::new(),
                matches: vec![],
                cycle: 1,
            })
            .or_fail("verdict")?;
    }
    for i in SNAPSHOT_SKILLS..SNAPSHOT_SKILLS + 88 {
        let id = add(&mut lib, i)?;
        lib.set_status(&id, SkillStatus::Removed, 1).or_fail("remove")?;
        lib.registry
            .record_verdict(NoveltyRecord {
                skill_id: id,
                decision: Decision::Redundant,
                rationale: String::new(),
                matches: vec![],
                cycle: 1,
            })
            .or_fail("verdict")?;
    }
    Ok(lib)
}

fn stats_row(label: &str, value: &str) -> String {
    format!("<tr><th>{}</th><td>{}</td></tr>", label, value)
}

fn export_fidelity() -> Check {
    // the golden campaign's bundle against the registry it was built from
    let (p, _, _) = desk_campaign(None)?;
    let engine = desk_engine(&p.layout);
    let lib = open_library(&p.layout).or_fail("library")?;
    let snapshot = lib.stats().or_fail("snapshot")?;
    let out = tempfile::tempdir().unwrap();
    let bundle = engine.export(&out.path().join("a")).or_fail("export")?;
    engine.export(&out.path().join("b")).or_fail("export")?;
    ensure!(bundle.stats == SiteStats::from(snapshot), "bundle stats {:?} vs {:?}", bundle.stats, snapshot);
    let written: SiteStats =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("a/stats.json")).unwrap()).or_fail("stats.json")?;
    ensure!(written == bundle.stats, "stats.json disagrees with the bundle");
    let a = snapshot_files(&out.path().join("a"));
    ensure!(a == snapshot_files(&out.path().join("b")), "two exports differ");
    ensure!(a == snapshot_files(&p.root().join("site")), "export differs from the committed site");

    // a library with the published snapshot's shape
    let lib = snapshot_shaped_library()?;
    let snapshot = lib.stats().or_fail("snapshot")?;
    let b1 = export_site(&lib, out.path(), &out.path().join("shaped-1")).or_fail("export")?;
    export_site(&lib, out.path(), &out.path().join("shaped-2")).or_fail("export")?;
    ensure!(b1.stats == SiteStats::from(snapshot), "snapshot-shaped stats mismatch");
    ensure!(
        snapshot_files(&out.path().join("shaped-1")) == snapshot_files(&out.path().join("shaped-2")),
        "snapshot-shaped exports differ"
    );
    let s = &b1.stats;
    ensure!(
        (s.skills, s.domains, s.subdomains, s.resources)
            == (SNAPSHOT_SKILLS, SNAPSHOT_DOMAINS, SNAPSHOT_SUBDOMAINS, SNAPSHOT_RESOURCES),
        "counts {:?}",
        s
    );
    ensure!(s.novel_percent == "71.1%", "novel fraction renders {}", s.novel_percent);
    let html = std::fs::read_to_string(out.path().join("shaped-1/index.html")).unwrap();
    let mut last = 0;
    for (label, value) in [
        ("Skills", SNAPSHOT_SKILLS.to_string()),
        ("Domains", SNAPSHOT_DOMAINS.to_string()),
        ("Subdomains", SNAPSHOT_SUBDOMAINS.to_string()),
        ("Resources", SNAPSHOT_RESOURCES.to_string()),
    ] {
        let at = html.find(&stats_row(label, &value)).ok_or(format!("no {} row", label))?;
        ensure!(at > last, "{} row out of order", label);
        last = at;
    }
    Ok(format!(
        "stats equal snapshot; snapshot-shaped panel {} skills / {} domains / {} subdomains / {} resources, {} novel",
        s.skills, s.domains, s.subdomains, s.resources, s.novel_percent
    ))
}

// ---- 10 ------------------------------------------------------------------------------

fn scripted_report(index: u64, completed: bool, micros: &[u64]) -> CycleReport {
    let stages = StageKind::CYCLE
        .iter()
        .zip(micros)
        .map(|(stage, m)| StageOutcome {
            stage: *stage,
            digest: String::new(),
            duration_micros: *m,
            notes: vec![],
        })
        .collect();
    CycleReport {
        cycle_index: index,
        branch: None,
        mode: Mode::Sequential,
        status: if completed {
            CycleStatus::Completed
        } else {
            CycleStatus::Aborted {
                stage: StageKind::SkillBuild,
                error: "scripted".into(),
            }
        },
        stages,
        focus_leaves: vec![],
        created: vec![],
        verified: vec![],
        removed: vec![],
        retired: vec![],
        tree_edits: vec![],
        followups: vec![],
    }
}

fn timing_report() -> Check {
    let p = desk_project();
    let mut rng = StdRng::seed_from_u64(7);
    let completed = 12u64;
    // per stage, durations whose sum divides evenly so the mean is an
    // integer number of microseconds
    let mut columns: Vec<Vec<u64>> = Vec::new();
    for _ in 0..5 {
        let mut col: Vec<u64> = (0..completed).map(|_| rng.random_range(1_000..5_000_000)).collect();
        let sum: u64 = col.iter().sum();
        col[0] += (completed - sum % completed) % completed;
        columns.push(col);
    }
    let mut lines = Vec::new();
    for c in 0..completed {
        let micros: Vec<u64> = columns.iter().map(|col| col[c as usize]).collect();
        lines.push(scripted_report(c + 1, true, &micros));
        if c % 4 == 3 {
            // aborted cycles stay out of the means
            lines.push(scripted_report(100 + c, false, &[9_999_999, 9_999_999, 9_999_999]));
        }
    }
    let text: String = lines.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    std::fs::create_dir_all(p.layout.reports_dir()).unwrap();
    std::fs::write(p.layout.cycle_log(), text).unwrap();

    let (summary, table) = desk_engine(&p.layout).timing_report().or_fail("timing report")?;
    let order: Vec<&str> = summary.stages.iter().map(|s| s.stage.as_str()).collect();
    ensure!(
        order == ["tree_check", "resource_search", "skill_build", "skill_test", "refresh"],
        "rows {:?}",
        order
    );
    ensure!(summary.cycles == completed as usize, "{} cycles counted", summary.cycles);
    for (row, col) in summary.stages.iter().zip(&columns) {
        let total: u64 = col.iter().sum();
        let mean_micros = total / completed;
        ensure!(mean_micros * completed == total, "oracle column not divisible");
        let expected = mean_micros as f64 / 1e6;
        ensure!(row.samples == completed as usize, "{} samples for {}", row.samples, row.stage);
        ensure!(row.total_micros == total, "{} total {} vs {}", row.stage, row.total_micros, total);
        ensure!(
            row.mean_seconds == Some(expected),
            "{} mean {:?} vs {}",
            row.stage,
            row.mean_seconds,
            expected
        );
    }
    ensure!(table.lines().count() == 6, "table has {} lines", table.lines().count());
    let saved = std::fs::read_to_string(p.layout.reports_dir().join("timing.json")).or_fail("timing.json")?;
    ensure!(
        serde_json::from_str::<serde_json::Value>(&saved).unwrap()
            == serde_json::to_value(&summary).unwrap(),
        "timing.json disagrees with the summary"
    );
    Ok(format!("5 stage means exact over {} completed cycles", completed))
}
