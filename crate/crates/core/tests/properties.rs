use proptest::prelude::*;

use skillforge_core::contract::{parse_contract, render_metadata, ContractInput, InputKind, SkillContract};
use skillforge_core::novelty::derive_keywords;
use skillforge_core::path::NodePath;
use skillforge_core::registry::{
    resource_id, Confidence, Layer, Outcome, Registry, ResourceEntry, ResourceKind, SkillEntry, SkillStatus,
    VerificationRecord,
};
use skillforge_core::taxonomy::load_tree;
use skillforge_core::tree::{LeafSpec, NodeKind};
use skillforge_core::Library;

const SOURCE: &str = "https://example.org/source";

fn fresh() -> Library {
    let tree = load_tree("r\n  d1\n    s1\n      a *\n      b *\n    c *\n  d2\n    e *\n    f *\n").unwrap();
    let mut registry = Registry::new();
    registry
        .record_resource(ResourceEntry::new(ResourceKind::Repository, SOURCE, "r/d1/c".parse().unwrap(), 0, 1))
        .unwrap();
    Library::new(tree, registry)
}

fn live_leaves(lib: &Library) -> Vec<NodePath> {
    lib.tree
        .leaves()
        .filter(|n| n.status.is_live())
        .map(|n| n.path.clone())
        .collect()
}

fn domain_of(p: &NodePath) -> NodePath {
    NodePath::from_labels(p.labels()[..2].to_vec()).unwrap()
}

/// Digests of every domain subtree not touched by `touched`.
fn frame(lib: &Library, touched: &[NodePath]) -> Vec<(NodePath, String)> {
    let root = lib.tree.get(lib.tree.root()).unwrap();
    root.children
        .iter()
        .filter(|d| !touched.iter().any(|t| t.starts_with(d)))
        .map(|d| (d.clone(), lib.tree.subtree_digest(d)))
        .collect()
}

/// Applies one op chosen by `(kind, x, y)`; returns the paths it may touch.
fn step(lib: &mut Library, counter: &mut u32, cycle: u64, kind: u8, x: u32, y: u32) -> Vec<NodePath> {
    let leaves = live_leaves(lib);
    let pick = |n: u32| leaves[n as usize % leaves.len()].clone();
    *counter += 1;
    match kind % 7 {
        0 => {
            let parents: Vec<NodePath> = lib
                .tree
                .nodes()
                .filter(|n| n.status.is_live() && n.kind != NodeKind::Leaf && n.kind != NodeKind::Root)
                .map(|n| n.path.clone())
                .collect();
            let parent = parents[x as usize % parents.len()].clone();
            lib.insert_leaf(&parent, &LeafSpec::new(format!("n{}", counter), cycle)).unwrap();
            vec![parent]
        }
        1 => {
            let leaf = pick(x);
            let id = lib.registry.allocate_skill_id(&leaf, &format!("tool {}", counter));
            lib.registry
                .upsert_skill(SkillEntry {
                    id: id.clone(),
                    name: format!("tool {}", counter),
                    leaf_path: leaf.clone(),
                    status: SkillStatus::Untested,
                    package_path: format!("skills/{}/{}", leaf.dir(), id),
                    smoke_target: None,
                    provenance: vec![resource_id(SOURCE)],
                    created_cycle: cycle,
                    updated_cycle: cycle,
                    confidence: if y % 3 == 0 { Confidence::Starter } else { Confidence::Standard },
                })
                .unwrap();
            if y % 2 == 0 {
                lib.record_verification(VerificationRecord {
                    skill_id: id.clone(),
                    layer: Layer::Execution,
                    outcome: Outcome::Pass,
                    attempt: 1,
                    report_locator: String::new(),
                    cycle,
                })
                .unwrap();
            }
            lib.place_skill(&id, cycle).unwrap();
            vec![leaf]
        }
        2 if leaves.len() >= 2 => {
            let a = pick(x);
            let mut b = pick(y);
            if a == b {
                b = pick(x + 1);
            }
            let survivor = if (x ^ y) % 2 == 0 { a.clone() } else { b.clone() };
            let before = lib.tree.skill_links();
            lib.merge_leaves(&a, &b, &survivor, cycle).unwrap();
            assert_eq!(before, lib.tree.skill_links(), "merge lost links");
            vec![a, b]
        }
        3 if leaves.len() > 3 => {
            let leaf = pick(x);
            let linked = lib.prune_leaf(&leaf, "test prune", cycle).unwrap();
            for id in linked {
                assert!(!lib.registry.skill(&id).unwrap().status.is_live());
            }
            vec![leaf]
        }
        4 => {
            let leaf = pick(x);
            let skills: Vec<String> = lib.tree.get(&leaf).unwrap().linked_skills.iter().cloned().collect();
            let cut = if skills.is_empty() { 0 } else { y as usize % (skills.len() + 1) };
            let parts = vec![
                (LeafSpec::new(format!("p{}", counter), cycle), skills[..cut].to_vec()),
                (LeafSpec::new(format!("q{}", counter), cycle), skills[cut..].to_vec()),
            ];
            let before = lib.tree.skill_links();
            lib.split_leaf(&leaf, &parts, cycle).unwrap();
            assert_eq!(before, lib.tree.skill_links(), "split lost links");
            vec![leaf]
        }
        5 => {
            let verified: Vec<String> = lib
                .registry
                .skills()
                .filter(|s| s.status == SkillStatus::Verified)
                .map(|s| s.id.clone())
                .collect();
            if verified.is_empty() {
                return vec![];
            }
            let id = verified[x as usize % verified.len()].clone();
            let attempt = lib.registry.next_attempt(&id, Layer::Execution);
            let e = lib
                .record_verification(VerificationRecord {
                    skill_id: id.clone(),
                    layer: Layer::Execution,
                    outcome: Outcome::Fail,
                    attempt,
                    report_locator: String::new(),
                    cycle,
                })
                .unwrap();
            vec![e.leaf_path]
        }
        _ => {
            let leaf = pick(x);
            let locator = format!("https://example.org/r{}", y % 17);
            let receipt = lib
                .registry
                .record_resource(ResourceEntry::new(ResourceKind::Paper, &locator, leaf.clone(), cycle, 1))
                .unwrap();
            lib.tree = lib.tree.link_resource(&leaf, &receipt.id, cycle).unwrap();
            vec![leaf]
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 3, max_shrink_iters: 20, ..ProptestConfig::default() })]

    #[test]
    fn random_operation_sequences_keep_every_invariant(
        ops in prop::collection::vec((any::<u8>(), any::<u32>(), any::<u32>()), 1000)
    ) {
        let mut lib = fresh();
        let mut counter = 0;
        for (i, (kind, x, y)) in ops.into_iter().enumerate() {
            let cycle = 1 + i as u64 / 10;
            let snapshot = lib.clone();
            let touched = step(&mut lib, &mut counter, cycle, kind, x, y);
            let domains: Vec<NodePath> = touched.iter().filter(|p| p.len() >= 2).map(domain_of).collect();
            for (d, digest) in frame(&snapshot, &domains) {
                prop_assert_eq!(lib.tree.subtree_digest(&d), digest, "op {} touched {}", i, d);
            }
            let violations = lib.integrity_check();
            prop_assert!(violations.is_empty(), "after op {}: {:?}", i, violations);
            for n in lib.tree.nodes() {
                prop_assert_eq!(n.coverage_flag, n.computed_coverage());
            }
        }
        for s in lib.registry.skills() {
            prop_assert_eq!(lib.registry.history(&s.id).last(), Some(&s.status));
        }
    }

    #[test]
    fn contract_metadata_round_trips(
        scope in "[A-Za-z][A-Za-z ]{0,40}",
        names in prop::collection::btree_set("[a-z][a-z0-9_]{0,8}", 1..4),
        steps in prop::collection::vec("[A-Za-z ]{1,30}", 1..4),
        tests in prop::collection::vec("[a-z]{1,6}( [a-z./]{1,10}){0,2}", 0..3),
        guidance in prop::option::of("[A-Za-z ]{1,20}"),
    ) {
        let contract = SkillContract {
            task_scope: scope,
            inputs: names.iter().map(|n| ContractInput {
                name: n.clone(),
                description: format!("value for {}", n),
                required: n.len() % 2 == 0,
                kind: InputKind::Argument,
            }).collect(),
            outputs: vec![],
            environment_assumptions: vec!["posix shell".into()],
            execution_steps: steps,
            provenance_links: vec![resource_id(SOURCE)],
            follow_up_guidance: guidance,
            example_invocations: vec![],
            test_commands: tests,
        };
        let doc: serde_json::Value = serde_json::from_str(&render_metadata(&contract)).unwrap();
        prop_assert_eq!(parse_contract(&doc).unwrap(), contract);
    }

    #[test]
    fn keywords_are_deterministic(scope in "[A-Za-z ,.]{0,60}") {
        let a = derive_keywords(&scope);
        let b = derive_keywords(&scope);
        prop_assert_eq!(a.clone(), b);
        if let Ok(kw) = a {
            prop_assert!(!kw.is_empty());
        }
    }
}

#[test]
fn no_path_leads_back_from_retired_states() {
    for from in [SkillStatus::Deprecated, SkillStatus::Removed] {
        let mut reachable = vec![from];
        let mut i = 0;
        while i < reachable.len() {
            let s = reachable[i];
            for t in SkillStatus::ALL {
                if s.can_transition_to(t) && !reachable.contains(&t) {
                    reachable.push(t);
                }
            }
            i += 1;
        }
        assert!(!reachable.contains(&SkillStatus::Verified));
    }
}
