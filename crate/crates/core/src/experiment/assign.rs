use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExperimentAssignment, ExperimentError, ScheduleConfig, SnapshotKind, SnapshotTask};
use crate::store::{Event, Store, StoreState};
use crate::types::{Arm, PostId, Timestamp};

/// Enough to rebuild the assignment generator exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngCheckpoint {
    pub seed: u64,
    pub draws: u64,
}

/// Fair-coin arm generator over a seeded ChaCha stream.
#[derive(Debug, Clone)]
pub struct ArmAssigner {
    seed: u64,
    draws: u64,
    rng: ChaCha8Rng,
}

impl ArmAssigner {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            draws: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_checkpoint(cp: RngCheckpoint) -> Self {
        let mut a = Self::new(cp.seed);
        for _ in 0..cp.draws {
            a.draw();
        }
        a
    }

    /// Resumes from the store's checkpoint, or starts fresh with `seed`.
    pub fn resume(state: &StoreState, seed: u64) -> Result<Self, ExperimentError> {
        match state.rng {
            Some(cp) if cp.seed != seed => Err(ExperimentError::Config(format!(
                "store was started with seed {}, not {seed}",
                cp.seed
            ))),
            Some(cp) => Ok(Self::from_checkpoint(cp)),
            None => Ok(Self::new(seed)),
        }
    }

    pub fn draw(&mut self) -> Arm {
        self.draws += 1;
        if self.rng.random_bool(0.5) {
            Arm::Experimental
        } else {
            Arm::Control
        }
    }

    pub fn checkpoint(&self) -> RngCheckpoint {
        RngCheckpoint {
            seed: self.seed,
            draws: self.draws,
        }
    }
}

/// Draws an arm for `post_id` and persists the assignment, the generator
/// checkpoint and the final-snapshot task in one transaction.
pub fn assign_group(
    store: &Store,
    assigner: &mut ArmAssigner,
    post_id: &PostId,
    schedule: &ScheduleConfig,
    now: Timestamp,
) -> Result<ExperimentAssignment, ExperimentError> {
    store.transact(|state| {
        if state.assignments.contains_key(post_id) {
            return Err(ExperimentError::DuplicateAssignment(post_id.clone()));
        }
        let index = assigner.checkpoint().draws;
        let arm = assigner.draw();
        let a = ExperimentAssignment::new(post_id.clone(), arm, now, index);
        let final_task = SnapshotTask {
            id: state.next_task_id(),
            due_at: schedule.final_due(now),
            kind: SnapshotKind::Final,
            subject: post_id.clone(),
            post_ids: vec![post_id.clone()],
            completed_at: None,
        };
        let mut events = vec![
            Event::Assignment(a.clone()),
            Event::Rng(assigner.checkpoint()),
            Event::Task(final_task),
        ];
        if arm == Arm::Control {
            events.push(Event::Task(SnapshotTask {
                id: state.next_task_id() + 1,
                due_at: now + schedule.initial_snapshot_delay,
                kind: SnapshotKind::Initial,
                subject: post_id.clone(),
                post_ids: vec![post_id.clone()],
                completed_at: None,
            }));
        }
        Ok((events, a))
    })
}

/// Checks that the persisted arms are exactly the seeded sequence.
pub fn audit_randomization(state: &StoreState) -> Result<(), String> {
    let Some(cp) = state.rng else {
        return if state.assignments.is_empty() {
            Ok(())
        } else {
            Err("assignments exist but no generator checkpoint was recorded".into())
        };
    };
    let mut by_draw: Vec<&ExperimentAssignment> = state.assignments.values().collect();
    by_draw.sort_by_key(|a| a.draw);
    if by_draw.len() as u64 != cp.draws {
        return Err(format!(
            "{} assignments but {} recorded draws",
            by_draw.len(),
            cp.draws
        ));
    }
    let mut replay = ArmAssigner::new(cp.seed);
    for (i, a) in by_draw.iter().enumerate() {
        if a.draw != i as u64 {
            return Err(format!("draw index {} missing", i));
        }
        let expected = replay.draw();
        if a.arm != expected {
            return Err(format!("post {} has arm {} but draw {i} gives {}", a.post_id, a.arm.as_str(), expected.as_str()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> Timestamp {
        chrono::Utc.with_ymd_and_hms(2023, 8, 24, 8, 0, 0).unwrap()
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = ArmAssigner::new(7);
        let mut b = ArmAssigner::new(7);
        let xs: Vec<Arm> = (0..200).map(|_| a.draw()).collect();
        let ys: Vec<Arm> = (0..200).map(|_| b.draw()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn checkpoint_resumes_the_stream() {
        let mut a = ArmAssigner::new(11);
        for _ in 0..37 {
            a.draw();
        }
        let mut b = ArmAssigner::from_checkpoint(a.checkpoint());
        for _ in 0..50 {
            assert_eq!(a.draw(), b.draw());
        }
    }

    #[test]
    fn duplicate_assignment_fails_and_persists_nothing() {
        let store = Store::in_memory();
        let cfg = ScheduleConfig::default();
        let mut rng = ArmAssigner::new(1);
        let id = PostId::from("p1");
        assign_group(&store, &mut rng, &id, &cfg, t0()).unwrap();
        let err = assign_group(&store, &mut rng, &id, &cfg, t0()).unwrap_err();
        assert!(matches!(err, ExperimentError::DuplicateAssignment(_)));
        assert_eq!(rng.checkpoint().draws, 1);
        store.read(|s| {
            assert_eq!(s.assignments.len(), 1);
            assert_eq!(s.rng.unwrap().draws, 1);
        });
    }

    #[test]
    fn persisted_arms_replay_from_seed() {
        let store = Store::in_memory();
        let cfg = ScheduleConfig::default();
        let mut rng = ArmAssigner::new(99);
        for i in 0..40 {
            assign_group(&store, &mut rng, &PostId::new(format!("p{i}")), &cfg, t0()).unwrap();
        }
        store.read(audit_randomization).unwrap();
        let resumed = store.read(|s| ArmAssigner::resume(s, 99)).unwrap();
        assert_eq!(resumed.checkpoint().draws, 40);
        assert!(store.read(|s| ArmAssigner::resume(s, 98)).is_err());
    }

    #[test]
    fn control_gets_initial_task() {
        let store = Store::in_memory();
        let cfg = ScheduleConfig::default();
        let mut rng = ArmAssigner::new(3);
        for i in 0..10 {
            let id = PostId::new(format!("p{i}"));
            let a = assign_group(&store, &mut rng, &id, &cfg, t0()).unwrap();
            let tasks: Vec<SnapshotTask> =
                store.read(|s| s.tasks.values().filter(|t| t.subject == id).cloned().collect());
            let initial = tasks.iter().filter(|t| t.kind == SnapshotKind::Initial).count();
            assert_eq!(initial, usize::from(a.arm == Arm::Control));
            assert_eq!(tasks.iter().filter(|t| t.kind == SnapshotKind::Final).count(), 1);
        }
    }
}
