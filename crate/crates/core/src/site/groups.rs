use std::collections::{BTreeMap, BTreeSet};

use crate::acg::{Acg, Constraint, DocId};

/// Partitions documents into bound groups: two documents share a group when
/// a cross-document constraint links them and at least one of its actions
/// is not committed. Groups are closed transitively.
pub fn bound_groups<'a>(
    docs: impl IntoIterator<Item = &'a DocId>,
    cross: impl IntoIterator<Item = &'a Constraint>,
    acg: &Acg,
) -> Vec<BTreeSet<DocId>> {
    let mut parent: BTreeMap<DocId, DocId> = docs.into_iter().map(|d| (d.clone(), d.clone())).collect();
    fn find(parent: &mut BTreeMap<DocId, DocId>, d: &DocId) -> DocId {
        let p = parent.entry(d.clone()).or_insert_with(|| d.clone()).clone();
        if &p == d {
            return p;
        }
        let root = find(parent, &p);
        parent.insert(d.clone(), root.clone());
        root
    }
    for c in cross {
        if acg.is_committed(c.a()) && acg.is_committed(c.b()) {
            continue;
        }
        let ra = find(&mut parent, &c.a().doc);
        let rb = find(&mut parent, &c.b().doc);
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent.insert(hi, lo);
        }
    }
    let mut groups: BTreeMap<DocId, BTreeSet<DocId>> = BTreeMap::new();
    let docs: Vec<DocId> = parent.keys().cloned().collect();
    for d in docs {
        let r = find(&mut parent, &d);
        groups.entry(r).or_default().insert(d);
    }
    groups.into_values().collect()
}
