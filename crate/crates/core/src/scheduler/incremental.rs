use std::collections::HashSet;

use crate::acg::{Acg, ActionId, Constraint, NodeIx};

use super::greedy::{next_schedules, Pass, Planner};
use super::signature::ScheduleSignature;
use super::{SchedError, Schedule, ScheduleRequest};

/// Changes applied to a graph since generation `base_generation`.
#[derive(Clone, Debug, Default)]
pub struct Delta {
    pub base_generation: u64,
    pub actions: Vec<ActionId>,
    pub constraints: Vec<Constraint>,
}

/// Keeps a best schedule up to date as the graph grows.
///
/// A refresh runs one greedy pass seeded with the previous best schedule, so
/// surviving actions keep their place and new actions are fitted around them.
#[derive(Debug)]
pub struct IncrementalScheduler {
    req: ScheduleRequest,
    generation: u64,
    top: Schedule,
}

impl IncrementalScheduler {
    pub fn new(acg: &Acg, req: ScheduleRequest) -> Self {
        let first = next_schedules(acg, &req.clone().candidates(1), &HashSet::new());
        let top = first.into_iter().next().unwrap_or_else(|| Schedule {
            sched_id: ScheduleSignature::of(acg, &[]).id(),
            order: Vec::new(),
        });
        IncrementalScheduler {
            req,
            generation: acg.generation(),
            top,
        }
    }

    pub fn top(&self) -> &Schedule {
        &self.top
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Updates the best schedule after `delta` was applied to `acg`.
    pub fn refresh(&mut self, acg: &Acg, delta: &Delta) -> Result<&Schedule, SchedError> {
        if delta.base_generation != self.generation {
            return Err(SchedError::StaleState {
                state: self.generation,
                delta: delta.base_generation,
            });
        }
        let planner = Planner::new(acg, &self.req);
        let mut kept: Vec<NodeIx> = self
            .top
            .order
            .iter()
            .filter_map(|id| acg.index_of(id))
            .filter(|&ix| planner.is_eligible(ix))
            .collect();
        kept.sort_by_key(|&ix| (!planner.local[ix as usize], planner.rank[ix as usize]));
        let fresh = delta.actions.iter().filter_map(|id| acg.index_of(id)).chain(
            delta
                .constraints
                .iter()
                .flat_map(|c| [c.a(), c.b()])
                .filter_map(|id| acg.index_of(id)),
        );
        let order: Vec<NodeIx> = kept.into_iter().chain(fresh).chain(planner.base_order()).collect();

        let mut pass = Pass::new(&planner);
        let picked = pass.run(order.into_iter());
        let ids: Vec<ActionId> = picked.iter().map(|&ix| acg.id_at(ix).clone()).collect();
        self.top = Schedule {
            sched_id: ScheduleSignature::of(acg, &ids).id(),
            order: ids,
        };
        self.generation = acg.generation();
        Ok(&self.top)
    }
}
