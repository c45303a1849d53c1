use std::collections::HashMap;

use crate::acg::{fnv1a64, Acg, ActionId};

use super::ScheduleId;

/// Equivalence class of a schedule: which actions it includes and how it
/// orders each included `NonCommuting` pair. Orderings of commuting actions
/// do not matter.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScheduleSignature {
    pub included: Vec<ActionId>,
    pub nc_orientations: Vec<(ActionId, ActionId)>,
}

impl ScheduleSignature {
    pub fn of(acg: &Acg, order: &[ActionId]) -> Self {
        let pos: HashMap<&ActionId, usize> = order.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let mut nc_orientations = Vec::new();
        for id in order {
            let Some(ix) = acg.index_of(id) else { continue };
            for &other in &acg.node(ix).non_commuting {
                let other = acg.id_at(other);
                if let Some(&po) = pos.get(other) {
                    if pos[id] < po {
                        nc_orientations.push((id.clone(), other.clone()));
                    }
                }
            }
        }
        nc_orientations.sort();
        nc_orientations.dedup();
        let mut included = order.to_vec();
        included.sort();
        ScheduleSignature {
            included,
            nc_orientations,
        }
    }

    pub fn id(&self) -> ScheduleId {
        let mut text = String::new();
        for id in &self.included {
            text.push_str(&id.to_string());
            text.push(';');
        }
        text.push('|');
        for (a, b) in &self.nc_orientations {
            text.push_str(&format!("{a}<{b};"));
        }
        ScheduleId(fnv1a64(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acg::{Action, Constraint};

    #[test]
    fn commuting_orders_are_equivalent() {
        let mut g = Acg::new();
        let a = ActionId::new("d", "p", 1);
        let b = ActionId::new("d", "q", 1);
        g.add_action(Action::new(a.clone(), "t")).unwrap();
        g.add_action(Action::new(b.clone(), "t")).unwrap();
        let ab = ScheduleSignature::of(&g, &[a.clone(), b.clone()]);
        let ba = ScheduleSignature::of(&g, &[b.clone(), a.clone()]);
        assert_eq!(ab, ba);
        assert_eq!(ab.id(), ba.id());

        g.add_constraint(Constraint::non_commuting(a.clone(), b.clone()));
        let ab = ScheduleSignature::of(&g, &[a.clone(), b.clone()]);
        let ba = ScheduleSignature::of(&g, &[b, a]);
        assert_ne!(ab, ba);
        assert_ne!(ab.id(), ba.id());
    }
}
