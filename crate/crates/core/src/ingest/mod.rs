//! eCAR event logs to labelled, featurised streaming trees.

mod dataset;
mod events;
mod featurize;
mod normalize;

pub use dataset::{LabeledDataset, TreeMeta};
pub use events::{open_input, parse_events, HostEvent, IssueKind, ParseIssue, ParseReport};
pub use featurize::{
    build_process_trees, EventTypeMap, FeaturizationConfig, IngestOutput, IngestStats, MaliciousRoots, CREATE, DEPTH_CHANNEL,
    FIRST_EVENT_CHANNEL, PROCESS, SPAWN_CHANNEL, TIE_OFFSET_SECONDS, TIME_CHANNEL,
};
pub use normalize::normalize_tree;
