use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Driver, DriverConfig, HarnessError, Report, World};
use crate::acg::DocId;
use crate::apps::{DictState, SrdaSession};
use crate::sim::{SimNet, SiteId};

/// Random dictionary operations issued by every site.
#[derive(Clone, Debug)]
pub struct SrdaWorkload {
    pub sites: usize,
    pub ops_per_site: usize,
    pub docs: usize,
    /// Distinct tuple identifiers per document.
    pub tids: usize,
    /// Mean ticks between two operations of one site.
    pub op_gap: u64,
    /// Disconnect the last site for the middle third of the run.
    pub disconnect: bool,
    pub max_ticks: u64,
    pub driver: DriverConfig,
}

impl Default for SrdaWorkload {
    fn default() -> Self {
        SrdaWorkload {
            sites: 4,
            ops_per_site: 200,
            docs: 1,
            tids: 24,
            op_gap: 20,
            disconnect: true,
            max_ticks: 5_000_000,
            driver: DriverConfig::default(),
        }
    }
}

#[derive(Debug)]
pub struct WorkloadOutcome {
    pub report: Report,
    pub ops: usize,
    pub all_decided: bool,
    pub prefixes_agree: bool,
    pub states_agree: bool,
    pub stability_violations: u64,
    pub mean_latency: Option<f64>,
    /// Committed dictionary contents per document, as seen by the first site.
    pub committed: BTreeMap<DocId, DictState>,
}

impl WorkloadOutcome {
    pub fn converged(&self) -> bool {
        self.all_decided && self.prefixes_agree && self.states_agree
    }
}

enum Step {
    Op(usize),
    Disconnect(usize),
    Reconnect(usize),
}

pub fn run_srda(w: &SrdaWorkload) -> Result<WorkloadOutcome, HarnessError> {
    if w.sites == 0 || w.docs == 0 || w.tids == 0 {
        return Err(HarnessError::Usage("sites, docs and tids must be positive".into()));
    }
    let names: Vec<String> = (0..w.sites).map(|i| format!("s{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let docs: Vec<DocId> = (0..w.docs).map(|i| DocId::new(format!("dict{i}"))).collect();
    let mut driver = Driver::new(&refs, w.driver.clone())?;
    for name in &refs {
        for doc in &docs {
            driver.act(name, |s| s.open(doc.clone(), "srda"))??;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(w.driver.seed ^ 0x5eed_5eed);
    let mut steps = Vec::new();
    let span = w.ops_per_site as u64 * w.op_gap.max(1);
    for site in 0..w.sites {
        for k in 0..w.ops_per_site as u64 {
            let tick = 1 + k * w.op_gap + rng.gen_range(0..w.op_gap.max(1));
            driver.net.at(tick, steps.len());
            steps.push(Step::Op(site));
        }
    }
    if w.disconnect && w.sites > 1 {
        let last = w.sites - 1;
        driver.net.at(span / 3, steps.len());
        steps.push(Step::Disconnect(last));
        driver.net.at(2 * span / 3, steps.len());
        steps.push(Step::Reconnect(last));
    }

    let mut sessions: Vec<SrdaSession> = (0..w.sites).map(|_| SrdaSession::new()).collect();
    let mut failure: Option<HarnessError> = None;
    let mut ops = 0;
    let end = driver.run(w.max_ticks, |net: &mut SimNet, world: &mut World, i| {
        let r = match steps[i] {
            Step::Op(site) => {
                let r = random_op(net, world, refs[site], &mut sessions[site], &docs, w.tids, &mut rng);
                ops += usize::from(r.is_ok());
                r
            }
            Step::Disconnect(site) => {
                net.disconnect(&SiteId::new(&names[site]));
                Ok(())
            }
            Step::Reconnect(site) => {
                net.reconnect(&SiteId::new(&names[site]));
                Ok(())
            }
        };
        if let Err(e) = r {
            failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let world = &driver.world;
    let mut committed = BTreeMap::new();
    let mut states_agree = true;
    for doc in &docs {
        let mut states = world
            .sites()
            .map(|s| DictState::replay(s.acg(), doc, s.commit_state().committed_prefix()));
        let first = states.next().expect("one site at least");
        states_agree &= states.all(|s| s == first);
        committed.insert(doc.clone(), first);
    }
    let all_decided = world.all_decided();
    let prefixes_agree = world.prefixes_agree();
    let first = world.sites().next().expect("one site at least");
    let prefix_len = first.commit_state().committed_prefix().len();
    let aborted = first.commit_state().aborted().len();

    let mut report = Report::new("srda");
    report
        .push("seed", w.driver.seed)
        .push("sites", w.sites)
        .push("ops", ops)
        .push("end_tick", end)
        .push("committed", prefix_len)
        .push("aborted", aborted)
        .push("tuples", committed.values().map(DictState::len).sum::<usize>())
        .push("all_decided", all_decided)
        .push("prefixes_agree", prefixes_agree)
        .push("states_agree", states_agree)
        .push("samples", world.samples())
        .push("stability_violations", world.stability_violations())
        .push(
            "mean_commit_latency_ticks",
            world.mean_latency().map_or("none".to_owned(), |m| format!("{m:.1}")),
        );
    Ok(WorkloadOutcome {
        report,
        ops,
        all_decided,
        prefixes_agree,
        states_agree,
        stability_violations: world.stability_violations(),
        mean_latency: world.mean_latency(),
        committed,
    })
}

fn random_op(
    net: &mut SimNet,
    world: &mut World,
    name: &str,
    session: &mut SrdaSession,
    docs: &[DocId],
    tids: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), HarnessError> {
    let doc = docs[rng.gen_range(0..docs.len())].clone();
    let tid = format!("t{}", rng.gen_range(0..tids));
    let attr = ["a", "b", "c"][rng.gen_range(0..3)];
    let value = rng.gen_range(0..1000u32).to_string();
    let roll: f64 = rng.gen();
    world.act(net, name, |site| -> Result<(), HarnessError> {
        let live = SrdaSession::view(site, &doc)?.get(&tid).is_some();
        let attrs = [(attr.to_owned(), value)].into_iter().collect();
        if !live {
            session.insert(site, &doc, &tid, attrs)?;
        } else if roll < 0.65 {
            session.modify(site, &doc, &tid, attrs)?;
        } else {
            session.remove(site, &doc, &tid)?;
        }
        Ok(())
    })?
}
