//! Golden ingestion checks shared by the core tests and the acceptance run.

use std::fs;
use std::path::Path;

use sktree::ingest::{
    build_process_trees, open_input, parse_events, EventTypeMap, FeaturizationConfig, HostEvent, MaliciousRoots, DEPTH_CHANNEL,
    SPAWN_CHANNEL,
};
use sktree::tree_model::TimeSeries;

/// The documented process creation record parses field for field.
pub fn process_creation_record() {
    // Field values as printed for a process creation record; the omitted
    // `properties` payload is stood in by an empty object.
    let line = r#"{"action":"CREATE",
"actorID":"437acfc7-d9ef-4c60-a108-...",
"hostname":"SysClient0201.systemia.com",
"object":"PROCESS",
"objectID":"b9d06a48-0968-4bda-b743-...",
"properties":{},
"timestamp":1569245579591}"#
        .replace('\n', "");
    let report = parse_events(line.as_bytes()).unwrap();
    assert!(report.issues.is_empty());
    assert_eq!(
        report.events,
        vec![HostEvent {
            action: "CREATE".into(),
            actor_id: "437acfc7-d9ef-4c60-a108-...".into(),
            object: "PROCESS".into(),
            object_id: "b9d06a48-0968-4bda-b743-...".into(),
            hostname: "SysClient0201.systemia.com".into(),
            timestamp: 1_569_245_579_591,
        }]
    );
}

/// Value index of a mapped event type within a knot's non-time values.
fn ix(object: &str, action: &str) -> usize {
    EventTypeMap::default().channel(object, action).unwrap() - 1
}

fn last(series: &TimeSeries) -> &[f64] {
    series.value(series.len() - 1)
}

/// Expected non-zero entries of a knot; every other entry must be zero.
fn assert_counts(values: &[f64], expected: &[(usize, f64)]) {
    let mut want = vec![0.0; values.len()];
    for &(i, v) in expected {
        want[i] = v;
    }
    assert_eq!(values, &want[..]);
}

const DEPTH: usize = DEPTH_CHANNEL - 1;
const SPAWN: usize = SPAWN_CHANNEL - 1;
const W0: f64 = 1_569_245_400.0;

/// Hand-verified trees for `thirty_events.jsonl` under `data_dir`.
pub fn thirty_event_log(data_dir: &Path) {
    let report = parse_events(open_input(data_dir.join("thirty_events.jsonl")).unwrap()).unwrap();
    assert_eq!(report.events.len(), 30);
    assert!(report.issues.is_empty());
    let labels = MaliciousRoots::parse(&fs::read_to_string(data_dir.join("thirty_events.labels")).unwrap());
    let raw = FeaturizationConfig {
        normalize: false,
        ..Default::default()
    };
    let out = build_process_trees(&report.events, &labels, &raw).unwrap();

    let s = &out.stats;
    assert_eq!(
        (s.events_in, s.events_mapped, s.trees_built, s.trees_kept),
        (30, 29, 6, 4)
    );
    assert_eq!((s.discarded_too_few, s.discarded_too_many, s.events_discarded, s.orphan_roots), (2, 0, 2, 3));

    let ds = &out.dataset;
    let meta: Vec<(&str, f64, &str, bool, usize, u8)> = ds
        .meta
        .iter()
        .zip(&ds.labels)
        .map(|(m, &l)| (m.hostname.as_str(), m.window_start, m.root_id.as_str(), m.orphan, m.n_events, l))
        .collect();
    assert_eq!(
        meta,
        vec![
            ("ws1", W0, "C2", false, 3, 1),
            ("ws1", W0, "P", true, 13, 0),
            ("ws1", W0 + 900.0, "P", true, 2, 0),
            ("ws2", W0, "Q", true, 9, 0),
        ]
    );
    assert!(ds.trees.iter().all(|t| t.dim() == 23));

    // C2: malicious child of a benign parent, rooted on its own
    let c2 = &ds.trees[0];
    assert!(c2.is_leaf());
    assert_eq!(c2.series().times(), &[51.0, 51.000001, 52.0, 53.0]);
    assert_counts(last(c2.series()), &[(ix("FILE", "CREATE"), 1.0), (ix("FILE", "WRITE"), 1.0), (ix("FLOW", "MESSAGE"), 1.0)]);

    // P, first window: spawns C1 (which spawns G1) and C2
    let p = &ds.trees[1];
    assert_eq!(p.series().times(), &[10.0, 10.000001, 12.0]);
    assert_counts(p.series().value(0), &[]);
    let branches = p.enumerate_branches();
    let times: Vec<Vec<f64>> = branches.iter().map(|b| b.series.times().to_vec()).collect();
    assert_eq!(
        times,
        vec![
            vec![10.0, 10.000001, 12.0, 20.0, 25.0, 40.0, 50.0, 60.0],
            vec![10.0, 10.000001, 12.0, 20.0, 21.0, 22.0, 30.0, 45.0],
            vec![10.0, 10.000001, 12.0, 20.0, 21.0, 22.0, 30.0, 31.0, 31.000001],
        ]
    );
    let (load, read, write) = (ix("MODULE", "LOAD"), ix("FILE", "READ"), ix("FILE", "WRITE"));
    assert_counts(
        last(&branches[0].series),
        &[
            (SPAWN, 2.0),
            (load, 1.0),
            (read, 1.0),
            (ix("REGISTRY", "EDIT"), 1.0),
            (ix("FLOW", "START"), 1.0),
            (ix("THREAD", "CREATE"), 1.0),
        ],
    );
    // the parent's spawn counter steps at the fork, the child's depth does
    assert_counts(branches[0].series.value(3), &[(SPAWN, 1.0), (load, 1.0), (read, 1.0)]);
    assert_counts(branches[1].series.value(3), &[(DEPTH, 1.0), (load, 1.0), (read, 1.0)]);
    assert_counts(last(&branches[1].series), &[(DEPTH, 1.0), (SPAWN, 1.0), (load, 2.0), (read, 2.0), (write, 1.0)]);
    assert_counts(
        last(&branches[2].series),
        &[
            (DEPTH, 2.0),
            (load, 2.0),
            (read, 1.0),
            (write, 1.0),
            (ix("SHELL", "COMMAND"), 1.0),
            (ix("FILE", "DELETE"), 1.0),
        ],
    );

    // P again in the next window, counters restarted
    let p1 = &ds.trees[2];
    assert!(p1.is_leaf());
    assert_eq!(p1.series().times(), &[5.0, 5.000001, 6.0]);
    assert_counts(last(p1.series()), &[(read, 1.0), (load, 1.0)]);

    // Q on the second host
    let q = ds.trees[3].enumerate_branches();
    assert_eq!(q.len(), 3);
    let term = ix("PROCESS", "TERMINATE");
    let task = ix("TASK", "START");
    assert_eq!(q[0].series.times(), &[100.0, 100.000001, 101.0, 104.0, 200.0]);
    assert_counts(last(&q[0].series), &[(SPAWN, 1.0), (task, 1.0), (term, 1.0), (ix("FILE", "MODIFY"), 1.0)]);
    assert_counts(last(&q[1].series), &[(DEPTH, 1.0), (SPAWN, 1.0), (task, 1.0), (read, 2.0)]);
    assert_counts(
        last(&q[2].series),
        &[(DEPTH, 2.0), (task, 1.0), (read, 2.0), (ix("REGISTRY", "ADD"), 1.0), (term, 1.0)],
    );

    // normalised output keeps the structure and maps time into [0, 1]
    let norm = build_process_trees(&report.events, &labels, &FeaturizationConfig::default()).unwrap();
    assert_eq!(norm.dataset.meta, ds.meta);
    for (n, r) in norm.dataset.trees.iter().zip(&ds.trees) {
        assert_eq!(n.branch_count(), r.branch_count());
        assert_eq!(n.event_count(), r.event_count());
        for b in n.enumerate_branches() {
            assert!(b.series.times().iter().all(|t| (0.0..=1.0).contains(t)));
        }
    }
    assert!((norm.dataset.trees[1].series().time(0) - 10.0 / 900.0).abs() < 1e-15);
}
