use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::derive_seed;
use crate::error::{Error, Result};
use crate::ingest::{build_process_trees, FeaturizationConfig, HostEvent, IngestStats, LabeledDataset, MaliciousRoots, CREATE, PROCESS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Class 1 spawns more processes, deeper, with bursty file and shell
    /// activity.
    Separable,
    /// Both classes drawn from the benign profile.
    Null,
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(Self::Separable),
            "null" => Ok(Self::Null),
            other => Err(Error::InvalidParameter(format!("unknown profile {other:?}, expected separable or null"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Separable => "separable",
            Self::Null => "null",
        })
    }
}

struct Behaviour {
    root_events: (usize, usize),
    root_spawns: (usize, usize),
    child_events: (usize, usize),
    /// Grandchildren per child.
    child_spawns: (usize, usize),
    mix: &'static [((&'static str, &'static str), f64)],
    bursty: bool,
}

const BENIGN: Behaviour = Behaviour {
    root_events: (6, 14),
    root_spawns: (0, 1),
    child_events: (2, 5),
    child_spawns: (0, 0),
    mix: &[
        (("MODULE", "LOAD"), 0.35),
        (("FILE", "READ"), 0.25),
        (("REGISTRY", "EDIT"), 0.1),
        (("THREAD", "CREATE"), 0.1),
        (("FLOW", "MESSAGE"), 0.1),
        (("PROCESS", "OPEN"), 0.1),
    ],
    bursty: false,
};

const MALICIOUS: Behaviour = Behaviour {
    root_events: (4, 10),
    root_spawns: (3, 4),
    child_events: (2, 6),
    child_spawns: (0, 1),
    mix: &[
        (("FILE", "CREATE"), 0.2),
        (("FILE", "WRITE"), 0.2),
        (("FILE", "DELETE"), 0.15),
        (("SHELL", "COMMAND"), 0.15),
        (("FLOW", "START"), 0.1),
        (("REGISTRY", "ADD"), 0.1),
        (("MODULE", "LOAD"), 0.1),
    ],
    bursty: true,
};

const WINDOW_MS: i64 = 900_000;
const HOST: &str = "synthetic-host";

struct Generator<'a> {
    rng: ChaCha8Rng,
    behaviour: &'a Behaviour,
    events: Vec<HostEvent>,
    tree: usize,
    next_pid: usize,
    window_start: i64,
}

impl Generator<'_> {
    fn pid(&mut self) -> String {
        let id = format!("t{}-p{}", self.tree, self.next_pid);
        self.next_pid += 1;
        id
    }

    fn times(&mut self, count: usize, from: i64) -> Vec<i64> {
        let end = WINDOW_MS - 1;
        let mut times: Vec<i64> = if self.behaviour.bursty {
            let centers: Vec<i64> = (0..2).map(|_| self.rng.gen_range(from..end)).collect();
            (0..count)
                .map(|_| {
                    let c = centers[self.rng.gen_range(0..centers.len())];
                    let jitter = rand_exp(&mut self.rng, 5_000.0) as i64;
                    (c + jitter).min(end)
                })
                .collect()
        } else {
            (0..count).map(|_| self.rng.gen_range(from..end)).collect()
        };
        times.sort_unstable();
        times
    }

    /// Emits the activity of `pid` from `from` ms on; spawned children
    /// recurse with `depth + 1`.
    fn process(&mut self, pid: &str, from: i64, depth: usize) {
        let b = self.behaviour;
        let (events, spawns) = match depth {
            0 => (b.root_events, b.root_spawns),
            1 => (b.child_events, b.child_spawns),
            _ => (b.child_events, (0, 0)),
        };
        let n_events = self.rng.gen_range(events.0..=events.1);
        let n_spawns = self.rng.gen_range(spawns.0..=spawns.1);
        let times = self.times(n_events + n_spawns, from);
        let mut slots: Vec<bool> = (0..times.len()).map(|i| i < n_spawns).collect();
        slots.shuffle(&mut self.rng);
        let weights = WeightedIndex::new(b.mix.iter().map(|(_, w)| *w)).expect("positive weights");
        for (&t, spawn) in times.iter().zip(slots) {
            if spawn && t + 1 < WINDOW_MS - 1 {
                let child = self.pid();
                self.push(PROCESS, CREATE, pid, &child, t);
                self.process(&child, t + 1, depth + 1);
            } else {
                let (object, action) = b.mix[weights.sample(&mut self.rng)].0;
                let object_id = format!("obj-{}", self.rng.gen_range(0..1000));
                self.push(object, action, pid, &object_id, t);
            }
        }
    }

    fn push(&mut self, object: &str, action: &str, actor: &str, object_id: &str, t: i64) {
        self.events.push(HostEvent {
            action: action.to_string(),
            actor_id: actor.to_string(),
            object: object.to_string(),
            object_id: object_id.to_string(),
            hostname: HOST.to_string(),
            timestamp: self.window_start + t,
        });
    }
}

fn rand_exp(rng: &mut impl Rng, mean: f64) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    -mean * u.ln()
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: LabeledDataset,
    pub stats: IngestStats,
    pub profile: Profile,
    pub seed: u64,
    /// Fewer trees per class than the default number of folds.
    pub too_small_for_cv: bool,
}

/// Event logs for `n_per_class` trees of each class, one tree per
/// 15-minute window on a single host, run through the regular ingest path.
/// Classes alternate by window, so the dataset order interleaves labels.
pub fn generate_synthetic(n_per_class: usize, seed: u64, profile: Profile) -> Result<SyntheticDataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("n_per_class must be at least 1".into()));
    }
    let mut events = Vec::new();
    let mut malicious = HashSet::new();
    for tree in 0..2 * n_per_class {
        let label = tree % 2;
        let behaviour = match (profile, label) {
            (Profile::Separable, 1) => &MALICIOUS,
            _ => &BENIGN,
        };
        let mut g = Generator {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, tree as u64)),
            behaviour,
            events: Vec::new(),
            tree,
            next_pid: 0,
            window_start: tree as i64 * WINDOW_MS,
        };
        let root = g.pid();
        if label == 1 {
            malicious.insert(root.clone());
        }
        g.process(&root, 0, 0);
        events.append(&mut g.events);
    }
    let out = build_process_trees(&events, &MaliciousRoots(malicious), &FeaturizationConfig::default())?;
    if out.dataset.len() != 2 * n_per_class {
        return Err(Error::InvalidParameter(format!(
            "generator produced {} trees, expected {}",
            out.dataset.len(),
            2 * n_per_class
        )));
    }
    Ok(SyntheticDataset {
        dataset: out.dataset,
        stats: out.stats,
        profile,
        seed,
        too_small_for_cv: n_per_class < super::ExperimentConfig::default().folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_trees_flagged_small() {
        let s = generate_synthetic(1, 3, Profile::Separable).unwrap();
        assert_eq!(s.dataset.len(), 2);
        assert_eq!(s.dataset.labels, vec![0, 1]);
        assert!(s.too_small_for_cv);
        assert!(s.dataset.trees.iter().all(|t| t.dim() == 23));
    }

    #[test]
    fn deterministic_and_within_filter() {
        let a = generate_synthetic(20, 11, Profile::Separable).unwrap();
        let b = generate_synthetic(20, 11, Profile::Separable).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert!(a.dataset.meta.iter().all(|m| (2..=200).contains(&m.n_events)));
        assert_eq!(a.dataset.class_counts(), [20, 20]);
    }

    #[test]
    fn separable_classes_differ_in_branching() {
        let s = generate_synthetic(30, 5, Profile::Separable).unwrap();
        let max_benign = (0..60).filter(|&i| s.dataset.labels[i] == 0).map(|i| s.dataset.trees[i].branch_count()).max().unwrap();
        let min_mal = (0..60).filter(|&i| s.dataset.labels[i] == 1).map(|i| s.dataset.trees[i].branch_count()).min().unwrap();
        assert!(min_mal > max_benign, "{min_mal} vs {max_benign}");
    }

    #[test]
    fn profile_parses() {
        assert_eq!("null".parse::<Profile>().unwrap(), Profile::Null);
        assert!("other".parse::<Profile>().is_err());
    }
}
