//! Process-tree reconstruction and featurisation.
//!
//! Events are replayed per host in time order. Every `(root process,
//! window)` pair owns one tree. Channel layout of each knot:
//!
//! | channel | meaning |
//! |---|---|
//! | 0 | seconds since window start |
//! | 1 | depth below the tree's root process |
//! | 2 | children spawned along this branch |
//! | 3.. | cumulative count per mapped `(object, action)` |
//!
//! A `(PROCESS, CREATE)` event ends the parent's current node and opens two
//! children: the parent's continuation (channel 2 + 1) and the new child
//! (channel 1 + 1), both starting from the parent's last values. Any other
//! mapped event appends a knot to its actor's current node.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::debug;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, TreeMeta};
use super::events::HostEvent;
use super::normalize::normalize_tree;
use crate::error::{Error, Result};
use crate::tree_model::{StreamingTree, TimeSeries};

pub const PROCESS: &str = "PROCESS";
pub const CREATE: &str = "CREATE";
pub const TIME_CHANNEL: usize = 0;
pub const DEPTH_CHANNEL: usize = 1;
pub const SPAWN_CHANNEL: usize = 2;
pub const FIRST_EVENT_CHANNEL: usize = 3;
/// Tie-break offset for events of one process sharing a timestamp.
pub const TIE_OFFSET_SECONDS: f64 = 1e-6;

/// Ordered `(object, action)` pairs, each owning one counter channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(String, String)>", into = "Vec<(String, String)>")]
pub struct EventTypeMap {
    pairs: Vec<(String, String)>,
    index: HashMap<(String, String), usize>,
}

impl EventTypeMap {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, (object, action)) in pairs.iter().enumerate() {
            if object == PROCESS && action == CREATE {
                return Err(Error::InvalidParameter("(PROCESS, CREATE) drives branching and cannot be a counter".into()));
            }
            if index.insert((object.clone(), action.clone()), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate event type ({object}, {action})")));
            }
        }
        Ok(Self { pairs, index })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Counter channel (offset by the three leading channels) for an event.
    pub fn channel(&self, object: &str, action: &str) -> Option<usize> {
        self.index
            .get(&(object.to_string(), action.to_string()))
            .map(|i| i + FIRST_EVENT_CHANNEL)
    }

    /// Tree dimension including time.
    pub fn tree_dim(&self) -> usize {
        FIRST_EVENT_CHANNEL + self.pairs.len()
    }
}

impl Default for EventTypeMap {
    /// Twenty eCAR object/action pairs.
    fn default() -> Self {
        const DEFAULT: [(&str, &str); 20] = [
            ("PROCESS", "OPEN"),
            ("PROCESS", "TERMINATE"),
            ("THREAD", "CREATE"),
            ("THREAD", "REMOTE_CREATE"),
            ("THREAD", "TERMINATE"),
            ("FILE", "CREATE"),
            ("FILE", "READ"),
            ("FILE", "WRITE"),
            ("FILE", "MODIFY"),
            ("FILE", "DELETE"),
            ("FILE", "RENAME"),
            ("FLOW", "START"),
            ("FLOW", "MESSAGE"),
            ("FLOW", "OPEN"),
            ("MODULE", "LOAD"),
            ("REGISTRY", "ADD"),
            ("REGISTRY", "EDIT"),
            ("REGISTRY", "REMOVE"),
            ("TASK", "START"),
            ("SHELL", "COMMAND"),
        ];
        Self::new(DEFAULT.iter().map(|(o, a)| (o.to_string(), a.to_string())).collect()).expect("default map is valid")
    }
}

impl TryFrom<Vec<(String, String)>> for EventTypeMap {
    type Error = Error;
    fn try_from(pairs: Vec<(String, String)>) -> Result<Self> {
        Self::new(pairs)
    }
}

impl From<EventTypeMap> for Vec<(String, String)> {
    fn from(map: EventTypeMap) -> Self {
        map.pairs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizationConfig {
    pub event_types: EventTypeMap,
    pub window_seconds: f64,
    pub min_events: usize,
    pub max_events: usize,
    pub normalize: bool,
}

impl Default for FeaturizationConfig {
    fn default() -> Self {
        Self {
            event_types: EventTypeMap::default(),
            window_seconds: 900.0,
            min_events: 2,
            max_events: 200,
            normalize: true,
        }
    }
}

impl FeaturizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_seconds.is_finite() && self.window_seconds > 0.0) {
            return Err(Error::InvalidParameter("window_seconds must be positive".into()));
        }
        if self.min_events < 1 || self.max_events < self.min_events {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= min_events <= max_events, got {}..{}",
                self.min_events, self.max_events
            )));
        }
        Ok(())
    }
}

/// Process ids marked malicious; their descendants inherit the label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaliciousRoots(pub HashSet<String>);

impl MaliciousRoots {
    /// One process id per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub events_in: usize,
    /// Process creations plus events with a counter channel.
    pub events_mapped: usize,
    pub trees_built: usize,
    pub trees_kept: usize,
    pub discarded_too_few: usize,
    pub discarded_too_many: usize,
    pub events_discarded: usize,
    pub orphan_roots: usize,
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub dataset: LabeledDataset,
    pub stats: IngestStats,
}

struct Node {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    children: Vec<usize>,
}

impl Node {
    fn start(t: f64, value: Vec<f64>) -> Self {
        Self {
            times: vec![t],
            values: vec![value],
            children: Vec::new(),
        }
    }
}

struct TreeBuild {
    host: String,
    window: i64,
    root: String,
    label: u8,
    orphan: bool,
    nodes: Vec<Node>,
    n_events: usize,
}

impl TreeBuild {
    fn to_tree(&self, node: usize, dim: usize) -> Result<StreamingTree> {
        let n = &self.nodes[node];
        let series = TimeSeries::new(dim, n.times.iter().copied().zip(n.values.iter().cloned()))?;
        let children = n.children.iter().map(|&c| self.to_tree(c, dim)).collect::<Result<Vec<_>>>()?;
        StreamingTree::new(series, children)
    }
}

struct ProcState {
    tree: usize,
    node: usize,
    last_t: f64,
    value: Vec<f64>,
}

struct HostReplay<'a> {
    config: &'a FeaturizationConfig,
    parents: &'a HashMap<(&'a str, &'a str), &'a str>,
    labels: &'a mut HashMap<(String, String), u8>,
    malicious: &'a MaliciousRoots,
    trees: Vec<TreeBuild>,
    procs: HashMap<(i64, String), ProcState>,
}

impl HostReplay<'_> {
    fn label_of(&mut self, host: &str, pid: &str) -> u8 {
        if let Some(&l) = self.labels.get(&(host.to_string(), pid.to_string())) {
            return l;
        }
        let mut seen = HashSet::new();
        let mut cur = pid;
        let mut label = 0;
        loop {
            if self.malicious.0.contains(cur) {
                label = 1;
                break;
            }
            if !seen.insert(cur) {
                break;
            }
            match self.parents.get(&(host, cur)) {
                Some(p) => cur = p,
                None => break,
            }
        }
        self.labels.insert((host.to_string(), pid.to_string()), label);
        label
    }

    /// State of `pid` in `window`, opening a new root tree if needed.
    fn ensure(&mut self, host: &str, window: i64, pid: &str, t: f64) -> (i64, String) {
        let key = (window, pid.to_string());
        if !self.procs.contains_key(&key) {
            let label = self.label_of(host, pid);
            let orphan = !self.parents.contains_key(&(host, pid));
            let origin = vec![0.0; self.config.event_types.tree_dim() - 1];
            self.trees.push(TreeBuild {
                host: host.to_string(),
                window,
                root: pid.to_string(),
                label,
                orphan,
                nodes: vec![Node::start(t, origin.clone())],
                n_events: 0,
            });
            self.procs.insert(
                key.clone(),
                ProcState {
                    tree: self.trees.len() - 1,
                    node: 0,
                    last_t: t,
                    value: origin,
                },
            );
        }
        key
    }

    fn replay(&mut self, event: &HostEvent) -> bool {
        let window_ms = self.config.window_seconds * 1000.0;
        let window = (event.timestamp as f64 / window_ms).floor() as i64;
        let t = (event.timestamp as f64 - window as f64 * window_ms) / 1000.0;
        let host = event.hostname.as_str();

        if event.object == PROCESS && event.action == CREATE {
            let key = self.ensure(host, window, &event.actor_id, t);
            let child_key = (window, event.object_id.clone());
            let child_label = self.label_of(host, &event.object_id);
            let child_active = self.procs.contains_key(&child_key);
            let parent = self.procs.get_mut(&key).expect("ensured");
            let t_eff = t.max(parent.last_t + TIE_OFFSET_SECONDS);
            let mut cont_value = parent.value.clone();
            cont_value[SPAWN_CHANNEL - 1] += 1.0;
            let tree = &mut self.trees[parent.tree];
            tree.n_events += 1;

            let mut new_child = None;
            if !child_active && child_label == tree.label {
                let mut child_value = parent.value.clone();
                child_value[DEPTH_CHANNEL - 1] += 1.0;
                let cont = tree.nodes.len();
                tree.nodes.push(Node::start(t_eff, cont_value.clone()));
                tree.nodes.push(Node::start(t_eff, child_value.clone()));
                tree.nodes[parent.node].children = vec![cont, cont + 1];
                parent.node = cont;
                new_child = Some(ProcState {
                    tree: parent.tree,
                    node: cont + 1,
                    last_t: t_eff,
                    value: child_value,
                });
            } else {
                // The child roots its own tree (malicious under a benign
                // parent) or is already active: only the spawn counter moves.
                let node = &mut tree.nodes[parent.node];
                node.times.push(t_eff);
                node.values.push(cont_value.clone());
            }
            parent.last_t = t_eff;
            parent.value = cont_value;
            if let Some(child) = new_child {
                self.procs.insert(child_key, child);
            }
            return true;
        }

        let Some(channel) = self.config.event_types.channel(&event.object, &event.action) else {
            return false;
        };
        let key = self.ensure(host, window, &event.actor_id, t);
        let state = self.procs.get_mut(&key).expect("ensured");
        let t_eff = t.max(state.last_t + TIE_OFFSET_SECONDS);
        state.value[channel - 1] += 1.0;
        state.last_t = t_eff;
        let tree = &mut self.trees[state.tree];
        tree.n_events += 1;
        let node = &mut tree.nodes[state.node];
        node.times.push(t_eff);
        node.values.push(state.value.clone());
        true
    }
}

/// Builds one labelled streaming tree per `(host, root process, window)`.
///
/// Trees are rooted at processes without a known parent, or at a process
/// named in `malicious` whose parent is benign, so every event lands in
/// exactly one tree and each tree carries a single label. Output is sorted
/// by `(hostname, window, root id)`.
pub fn build_process_trees(events: &[HostEvent], malicious: &MaliciousRoots, config: &FeaturizationConfig) -> Result<IngestOutput> {
    config.validate()?;
    let mut stats = IngestStats {
        events_in: events.len(),
        ..Default::default()
    };

    let mut parents: HashMap<(&str, &str), &str> = HashMap::new();
    for e in events.iter().filter(|e| e.object == PROCESS && e.action == CREATE) {
        parents
            .entry((e.hostname.as_str(), e.object_id.as_str()))
            .or_insert(e.actor_id.as_str());
    }

    let mut by_host: BTreeMap<&str, Vec<&HostEvent>> = BTreeMap::new();
    for e in events {
        by_host.entry(e.hostname.as_str()).or_default().push(e);
    }

    let mut labels = HashMap::new();
    let mut builds = Vec::new();
    for (_, mut host_events) in by_host {
        host_events.sort_by_key(|e| e.timestamp);
        let mut replay = HostReplay {
            config,
            parents: &parents,
            labels: &mut labels,
            malicious,
            trees: Vec::new(),
            procs: HashMap::new(),
        };
        for e in host_events {
            if replay.replay(e) {
                stats.events_mapped += 1;
            }
        }
        builds.extend(replay.trees);
    }
    builds.sort_by(|a, b| (&a.host, a.window, &a.root).cmp(&(&b.host, b.window, &b.root)));

    let dim = config.event_types.tree_dim();
    let mut dataset = LabeledDataset::default();
    for b in builds {
        stats.trees_built += 1;
        if b.n_events < config.min_events || b.n_events > config.max_events {
            if b.n_events < config.min_events {
                stats.discarded_too_few += 1;
            } else {
                stats.discarded_too_many += 1;
            }
            stats.events_discarded += b.n_events;
            continue;
        }
        let mut tree = b.to_tree(0, dim)?;
        if config.normalize {
            tree = normalize_tree(&tree, (0.0, config.window_seconds))?;
        }
        if b.orphan {
            stats.orphan_roots += 1;
        }
        debug!("tree {}@{} window {}: {} events, label {}", b.root, b.host, b.window, b.n_events, b.label);
        dataset.push(
            tree,
            b.label,
            TreeMeta {
                hostname: b.host,
                window_start: b.window as f64 * config.window_seconds,
                root_id: b.root,
                orphan: b.orphan,
                n_events: b.n_events,
            },
        );
        stats.trees_kept += 1;
    }
    Ok(IngestOutput { dataset, stats })
}
