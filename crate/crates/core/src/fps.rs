//! The fully preemptive schedule: every sub-instance a task instance can
//! possibly be split into, and a total execution order over all of them.
//!
//! A task instance `T_{i,j}` with window `[R, D)` is split at every
//! release of a strictly-higher-priority task that falls strictly inside
//! the window; releases exactly at the boundary cannot preempt anything
//! within the window and do not split. Sub-instance `k` occupies the
//! k-th resulting segment. The total order sorts all sub-instances by
//! (segment start, task priority, instance index), which reflects every
//! possible preemption while staying consistent with priorities and
//! releases.

use crate::taskmodel::{expand_instances, TaskInstance, TaskSet};
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Default cap on the total number of sub-instances a schedule may have.
pub const DEFAULT_SUB_INSTANCE_CAP: usize = 1000;

/// One preemption-delimited fragment `T_{i,j,k}` of a task instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubInstance {
    /// 1-based task index (priority rank).
    pub task: usize,
    /// 1-based instance index.
    pub instance: usize,
    /// 1-based sub-instance index within the instance.
    pub part: usize,
    /// Segment window within the parent instance, `[seg_start, seg_end)`.
    pub seg_start: u64,
    pub seg_end: u64,
    /// Parent instance release.
    pub release: u64,
    /// Parent instance deadline.
    pub deadline: u64,
    /// 0-based position in the total order.
    pub order: usize,
}

impl SubInstance {
    pub fn id(&self) -> (usize, usize, usize) {
        (self.task, self.instance, self.part)
    }
}

#[derive(Debug, Error)]
pub enum FpsError {
    #[error("fully preemptive schedule has {count} sub-instances, exceeding the cap of {cap}")]
    TooManySubInstances { count: usize, cap: usize },
    #[error("unknown sub-instance ({0},{1},{2})")]
    UnknownSubInstance(usize, usize, usize),
}

/// The ordered collection of all possible sub-instances.
#[derive(Debug, Clone)]
pub struct FpSchedule {
    subs: Vec<SubInstance>,
    by_id: HashMap<(usize, usize, usize), usize>,
    /// Instances in (release, priority) order, with the order indices of
    /// their sub-instances in ascending `k`.
    instances: Vec<(TaskInstance, Vec<usize>)>,
}

impl FpSchedule {
    /// Sub-instances in total order.
    pub fn subs(&self) -> &[SubInstance] {
        &self.subs
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn get(&self, task: usize, instance: usize, part: usize) -> Option<&SubInstance> {
        self.by_id
            .get(&(task, instance, part))
            .map(|&idx| &self.subs[idx])
    }

    /// The sub-instance immediately before `sub` in total order, if any.
    pub fn predecessor(&self, sub: &SubInstance) -> Result<Option<&SubInstance>, FpsError> {
        let (i, j, k) = sub.id();
        let idx = *self
            .by_id
            .get(&(i, j, k))
            .ok_or(FpsError::UnknownSubInstance(i, j, k))?;
        Ok(if idx == 0 {
            None
        } else {
            Some(&self.subs[idx - 1])
        })
    }

    /// Parent instances in (release, priority) order, each with the order
    /// indices of its sub-instances in ascending `k`.
    pub fn instances(&self) -> &[(TaskInstance, Vec<usize>)] {
        &self.instances
    }

    /// One line per sub-instance in total order, for golden-file tests
    /// and debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for sub in &self.subs {
            let _ = writeln!(
                out,
                "({},{},{}) seg=[{},{}) R={}, D={}, order={}",
                sub.task,
                sub.instance,
                sub.part,
                sub.seg_start,
                sub.seg_end,
                sub.release,
                sub.deadline,
                sub.order
            );
        }
        out
    }
}

/// Build the fully preemptive schedule with the default sub-instance cap.
pub fn build_fps(ts: &TaskSet) -> Result<FpSchedule, FpsError> {
    build_fps_with_cap(ts, DEFAULT_SUB_INSTANCE_CAP)
}

/// Build the fully preemptive schedule, failing if the total number of
/// sub-instances exceeds `cap`.
pub fn build_fps_with_cap(ts: &TaskSet, cap: usize) -> Result<FpSchedule, FpsError> {
    let instances = expand_instances(ts);
    from_instances(ts, &instances, cap)
}

/// Core construction over an explicit instance list.
fn from_instances(
    ts: &TaskSet,
    instances: &[TaskInstance],
    cap: usize,
) -> Result<FpSchedule, FpsError> {
    // Release times per task, for splitting lower-priority windows.
    let mut releases_by_task: Vec<Vec<u64>> = vec![Vec::new(); ts.tasks.len()];
    for inst in instances {
        releases_by_task[inst.task - 1].push(inst.release);
    }

    let mut subs: Vec<SubInstance> = Vec::new();
    for inst in instances {
        // Split points: releases of strictly-higher-priority tasks that
        // lie strictly inside (R, D). Boundary releases do not split.
        let mut cuts: Vec<u64> = Vec::new();
        for higher in 0..inst.task - 1 {
            for &r in &releases_by_task[higher] {
                if r > inst.release && r < inst.deadline {
                    cuts.push(r);
                }
            }
        }
        cuts.sort_unstable();
        cuts.dedup();

        let mut seg_start = inst.release;
        for (k, seg_end) in cuts
            .iter()
            .copied()
            .chain(std::iter::once(inst.deadline))
            .enumerate()
        {
            subs.push(SubInstance {
                task: inst.task,
                instance: inst.instance,
                part: k + 1,
                seg_start,
                seg_end,
                release: inst.release,
                deadline: inst.deadline,
                order: 0,
            });
            seg_start = seg_end;
        }
    }

    if subs.len() > cap {
        return Err(FpsError::TooManySubInstances {
            count: subs.len(),
            cap,
        });
    }

    subs.sort_by_key(|s| (s.seg_start, s.task, s.instance));
    let mut by_id = HashMap::with_capacity(subs.len());
    for (order, sub) in subs.iter_mut().enumerate() {
        sub.order = order;
        by_id.insert(sub.id(), order);
    }

    let mut per_instance: Vec<(TaskInstance, Vec<usize>)> = instances
        .iter()
        .map(|inst| (*inst, Vec::new()))
        .collect();
    let inst_pos: HashMap<(usize, usize), usize> = instances
        .iter()
        .enumerate()
        .map(|(pos, inst)| ((inst.task, inst.instance), pos))
        .collect();
    for sub in &subs {
        let pos = inst_pos[&(sub.task, sub.instance)];
        per_instance[pos].1.push(sub.order);
    }
    // Within an instance, segment starts increase with k, so the order
    // indices collected above are already ascending in k.
    debug_assert!(per_instance
        .iter()
        .all(|(_, orders)| orders.windows(2).all(|w| w[0] < w[1])));

    Ok(FpSchedule {
        subs,
        by_id,
        instances: per_instance,
    })
}
