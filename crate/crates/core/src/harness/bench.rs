use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Driver, DriverConfig, HarnessError, Report};
use crate::acg::{is_sound, Acg, Action, ActionId, Constraint, ConstraintKind, DocId};
use crate::apps::SrdaOp;
use crate::scheduler::{next_schedules, Delta, IncrementalScheduler, ScheduleRequest};

const ISSUERS: u64 = 8;

fn bench_id(i: u64) -> ActionId {
    ActionId::new("bench", format!("p{}", i % ISSUERS), i / ISSUERS + 1)
}

fn random_constraint(rng: &mut ChaCha8Rng, n: u64) -> Constraint {
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let kind = [
        ConstraintKind::NotAfter,
        ConstraintKind::Enables,
        ConstraintKind::NonCommuting,
    ][rng.gen_range(0..3)];
    Constraint::new(kind, bench_id(a), bench_id(b))
}

/// `actions` actions and `constraints` constraints between random distinct
/// pairs, kinds drawn uniformly. Cycles are allowed.
pub fn random_graph(actions: usize, constraints: usize, seed: u64) -> Acg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Acg::new();
    for i in 0..actions as u64 {
        g.add_action(Action::new(bench_id(i), "bench")).expect("fresh id");
    }
    if actions > 1 {
        for _ in 0..constraints {
            g.add_constraint(random_constraint(&mut rng, actions as u64));
        }
    }
    g
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Times a full schedule computation on a random graph, then one
/// incremental step after a delta of ten records.
pub fn bench_schedule(actions: usize, constraints: usize, seed: u64) -> Result<Report, HarnessError> {
    if actions == 0 {
        return Err(HarnessError::Usage("at least one action is needed".into()));
    }
    let t = Instant::now();
    let mut g = random_graph(actions, constraints, seed);
    let build = ms(t);

    let req = ScheduleRequest::default().seed(seed);
    let t = Instant::now();
    let found = next_schedules(&g, &req, &HashSet::new());
    let full = ms(t);
    let top = found.first().map(|s| s.order.clone()).unwrap_or_default();
    let full_sound = is_sound(&g, &top).unwrap_or(false);

    let mut inc = IncrementalScheduler::new(&g, req.clone());
    let base = g.generation();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut delta = Delta {
        base_generation: base,
        ..Delta::default()
    };
    let n = actions as u64;
    for k in 0..5 {
        let id = bench_id(n + k);
        g.add_action(Action::new(id.clone(), "bench")).expect("fresh id");
        delta.actions.push(id.clone());
        let other = bench_id(rng.gen_range(0..n));
        let c = if rng.gen_bool(0.5) {
            Constraint::not_after(other, id)
        } else {
            Constraint::non_commuting(id, other)
        };
        g.add_constraint(c.clone());
        delta.constraints.push(c);
    }
    let t = Instant::now();
    let refreshed = inc
        .refresh(&g, &delta)
        .map_err(|e| HarnessError::Assertion(e.to_string()))?
        .order
        .clone();
    let incremental = ms(t);
    let inc_sound = is_sound(&g, &refreshed).unwrap_or(false);

    let mut report = Report::new("bench-sched");
    report
        .push("actions", actions)
        .push("constraints", constraints)
        .push("seed", seed)
        .push("candidates", found.len())
        .push("score", top.len())
        .push("sound", full_sound)
        .push("delta_records", delta.actions.len() + delta.constraints.len())
        .push("incremental_score", refreshed.len())
        .push("incremental_sound", inc_sound)
        .timing("build_ms", build)
        .timing("full_ms", full)
        .timing("incremental_ms", incremental);
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct CommitBench {
    pub sites: usize,
    /// Actions per simulated second per site.
    pub rate: f64,
    /// Ticks during which actions are issued.
    pub duration: u64,
    pub driver: DriverConfig,
    pub max_ticks: u64,
}

impl Default for CommitBench {
    fn default() -> Self {
        CommitBench {
            sites: 4,
            rate: 20.0,
            duration: 10_000,
            driver: DriverConfig::default(),
            max_ticks: 10_000_000,
        }
    }
}

/// Commit latency of independent inserts under the periodic schedule and
/// proposal cadence.
pub fn bench_commit(b: &CommitBench) -> Result<Report, HarnessError> {
    if b.sites == 0 {
        return Err(HarnessError::Usage("at least one site is needed".into()));
    }
    let names: Vec<String> = (0..b.sites).map(|i| format!("s{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut driver = Driver::new(&refs, b.driver.clone())?;
    let doc = DocId::new("bench");
    for name in &refs {
        driver.act(name, |s| s.open(doc.clone(), "srda"))??;
    }
    let per_site = (b.rate * b.duration as f64 / 1000.0).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(b.driver.seed);
    let mut steps = Vec::new();
    for site in 0..b.sites {
        for _ in 0..per_site {
            driver.net.at(rng.gen_range(1..=b.duration.max(1)), steps.len());
            steps.push(site);
        }
    }
    let mut failure = None;
    let wall = Instant::now();
    let end = driver.run(b.max_ticks, |net, world, i| {
        let name = refs[steps[i]];
        let r = world.act(net, name, |s| {
            let id = s.next_id(&doc)?;
            let op = SrdaOp::Insert {
                tid: format!("{id}"),
                attrs: Default::default(),
            };
            s.submit(op.to_action(id), Vec::new())
        });
        if let Err(e) = r.and_then(|r| r.map_err(HarnessError::from)) {
            failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let world = &driver.world;
    let issued = per_site * b.sites;
    let mut report = Report::new("bench-commit");
    report
        .push("sites", b.sites)
        .push("rate", b.rate)
        .push("duration", b.duration)
        .push("seed", b.driver.seed)
        .push("issued", issued)
        .push("committed", world.latencies().len())
        .push("all_decided", world.all_decided())
        .push("end_tick", end)
        .push(
            "mean_commit_latency_ticks",
            world.mean_latency().map_or("none".to_owned(), |m| format!("{m:.1}")),
        )
        .push(
            "max_commit_latency_ticks",
            world.latencies().iter().max().map_or("none".to_owned(), u64::to_string),
        )
        .push(
            "throughput_per_s",
            if end == 0 {
                "0.0".to_owned()
            } else {
                format!("{:.1}", world.latencies().len() as f64 * 1000.0 / end as f64)
            },
        )
        .timing("wall_ms", ms(wall));
    Ok(report)
}
