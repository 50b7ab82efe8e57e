//! Choosing what to ask the model for a changed node.

use crate::codegraph::{CodeGraph, NodeId, NodeKind};
use crate::gateway::markers::has_marker;
use crate::prompt::TaskKind;

/// Test-neighbour search radius for the generate-tests branch.
pub const TEST_HOPS: u32 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TaskSignals {
    pub region_has_marker: bool,
    pub open_bug_count: u32,
    /// Outcome of the latest test result touching the node, if any.
    pub last_test_failed: Option<bool>,
    pub is_source: bool,
    pub test_nearby: bool,
}

impl TaskSignals {
    pub fn anomaly(&self) -> bool {
        self.region_has_marker || self.open_bug_count > 0 || self.last_test_failed == Some(true)
    }
}

/// Bug detection wins whenever something looks wrong; otherwise an
/// untested source node asks for tests and everything else for completion.
pub fn decide_task(signals: &TaskSignals) -> TaskKind {
    if signals.anomaly() {
        TaskKind::DetectBugs
    } else if signals.is_source && !signals.test_nearby {
        TaskKind::GenerateTests
    } else {
        TaskKind::CompleteCode
    }
}

/// Signals for `id`, scanning lines `region` (1-based, inclusive) of its
/// text for markers, or the whole file when `region` is `None`.
pub fn signals_for(graph: &CodeGraph, id: NodeId, region: Option<(u32, u32)>) -> TaskSignals {
    let Some(node) = graph.node(id) else {
        return TaskSignals::default();
    };
    let scanned = match region {
        None => node.text.clone(),
        Some((start, end)) => node
            .text
            .lines()
            .skip(start.max(1) as usize - 1)
            .take((end.max(start.max(1)) - start.max(1) + 1) as usize)
            .collect::<Vec<_>>()
            .join("\n"),
    };
    let test_nearby = graph
        .distances_from([id], Some(TEST_HOPS))
        .keys()
        .any(|v| *v != id && graph.node(*v).is_some_and(|n| n.kind == NodeKind::Test));
    TaskSignals {
        region_has_marker: has_marker(&scanned),
        open_bug_count: node.stats.open_bug_count,
        last_test_failed: node.last_test_failed,
        is_source: node.kind == NodeKind::Source,
        test_nearby,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_tested_edit_completes() {
        let s = TaskSignals {
            is_source: true,
            test_nearby: true,
            last_test_failed: Some(false),
            ..Default::default()
        };
        assert_eq!(decide_task(&s), TaskKind::CompleteCode);
    }

    #[test]
    fn each_anomaly_arm_detects() {
        let base = TaskSignals {
            is_source: true,
            ..Default::default()
        };
        for s in [
            TaskSignals {
                region_has_marker: true,
                ..base
            },
            TaskSignals {
                open_bug_count: 2,
                ..base
            },
            TaskSignals {
                last_test_failed: Some(true),
                ..base
            },
        ] {
            assert_eq!(decide_task(&s), TaskKind::DetectBugs);
        }
    }

    #[test]
    fn untested_source_generates_tests() {
        let s = TaskSignals {
            is_source: true,
            ..Default::default()
        };
        assert_eq!(decide_task(&s), TaskKind::GenerateTests);
        let t = TaskSignals::default();
        assert_eq!(decide_task(&t), TaskKind::CompleteCode);
    }
}
