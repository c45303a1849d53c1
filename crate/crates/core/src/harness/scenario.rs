//! Scripted scenarios.
//!
//! Settings: `sites` (required), `latency = lo..hi`, `seed`, `ticks`,
//! `antagonistic_inserts`, `candidates`, `restarts`.
//!
//! Events, each `@tick` followed by one of:
//!
//! ```text
//! open SITE DOC APP
//! insert SITE DOC TID [name=value]...
//! modify SITE DOC TID name=value...
//! remove SITE DOC TID
//! event SITE EVENT SLOT [NAME]     # create a calendar event, inviting SITE
//! invite SITE EVENT USER
//! alternatives SITE EVENT EVENT
//! cancel-event SITE EVENT
//! disconnect SITE
//! reconnect SITE
//! observe LABEL SITE DOC           # record the candidate schedules
//! ```
//!
//! Expectations, checked after the run:
//!
//! ```text
//! classes LABEL N                  # number of candidate schedules
//! scores LABEL N...                # their sizes, best first
//! first LABEL EVENT[,EVENT]...     # events held by the best candidate
//! holds LABEL EVENT[,EVENT]...     # some candidate holds exactly these
//! upcalls SITE N                   # getConstraint calls on SITE
//! upcall-pair SITE DOC DOC N       # calls for pairs across two documents
//! decided                          # every action committed or aborted
//! agree                            # identical committed prefixes
//! converged DOC                    # identical committed dictionaries
//! no-double-booking                # on every site's views
//! same-solution                    # every site holds the same events
//! ```

use std::collections::{BTreeMap, BTreeSet};

use super::{Driver, DriverConfig, HarnessError, Report, World};
use crate::acg::{Acg, ActionId, DocId};
use crate::apps::calendar::{self, CalendarOp, EventHandle};
use crate::apps::{Attrs, DictState, SrdaSession};
use crate::sim::{Script, ScriptEvent, SimNet, SiteId};
use crate::site::Site;

/// The shared calendar walk-through: two alternative seminar dates, a
/// lesson booked offline on the first date, and the resulting conflict.
pub const CALENDAR_SCRIPT: &str = include_str!("../../scenarios/calendar.script");

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub report: Report,
    pub failures: Vec<String>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug)]
struct Candidate {
    score: usize,
    held: BTreeSet<String>,
}

/// Events whose `enable-event` is part of `order`.
fn held_events<'a>(acg: &Acg, order: impl IntoIterator<Item = &'a ActionId>) -> BTreeSet<String> {
    order
        .into_iter()
        .filter_map(|id| acg.action(id).and_then(CalendarOp::decode))
        .filter_map(|op| match op {
            CalendarOp::EnableEvent { event, .. } => Some(event),
            _ => None,
        })
        .collect()
}

fn names(list: &str) -> BTreeSet<String> {
    list.split(',').filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

fn join(set: &BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(",")
}

fn parse_attrs(words: &[String]) -> Result<Attrs, HarnessError> {
    words
        .iter()
        .map(|w| {
            w.split_once('=')
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| HarnessError::Usage(format!("expected name=value, got {w:?}")))
        })
        .collect()
}

struct Runner {
    sessions: BTreeMap<String, SrdaSession>,
    handles: BTreeMap<String, EventHandle>,
    observed: BTreeMap<String, Vec<Candidate>>,
}

impl Runner {
    fn event(&mut self, net: &mut SimNet, world: &mut World, ev: &ScriptEvent) -> Result<(), HarnessError> {
        let w = &ev.words;
        let arg = |i: usize| -> Result<&str, HarnessError> {
            w.get(i)
                .map(String::as_str)
                .ok_or_else(|| HarnessError::Usage(format!("line {}: {:?} needs more arguments", ev.line, w[0])))
        };
        let site = arg(1)?;
        match w[0].as_str() {
            "open" => {
                let (doc, app) = (arg(2)?, arg(3)?);
                world.act(net, site, |s| s.open(doc, app))??;
            }
            "insert" | "modify" | "remove" => {
                let doc = DocId::new(arg(2)?);
                let tid = arg(3)?;
                let attrs = parse_attrs(&w[4.min(w.len())..])?;
                let session = self.sessions.entry(site.to_owned()).or_default();
                world.act(net, site, |s| match w[0].as_str() {
                    "insert" => session.insert(s, &doc, tid, attrs),
                    "modify" => session.modify(s, &doc, tid, attrs),
                    _ => session.remove(s, &doc, tid),
                })??;
            }
            "event" => {
                let (event, slot) = (arg(2)?, arg(3)?);
                let name = w.get(4).map_or(event, String::as_str);
                let h = world.act(net, site, |s| calendar::create_event(s, event, name, slot, site))??;
                self.handles.insert(event.to_owned(), h);
            }
            "invite" => {
                let (event, user) = (arg(2)?, arg(3)?);
                let h = self.handle(event)?;
                world.act(net, site, |s| calendar::invite(s, h, user))??;
            }
            "alternatives" => {
                let a = self.handle(arg(2)?)?.clone();
                let b = self.handle(arg(3)?)?.clone();
                world.act(net, site, |s| calendar::alternatives(s, &a, &b))??;
            }
            "cancel-event" => {
                let h = self.handle(arg(2)?)?.clone();
                world.act(net, site, |s| calendar::cancel_event(s, &h))??;
            }
            "disconnect" => net.disconnect(&SiteId::new(site)),
            "reconnect" => net.reconnect(&SiteId::new(site)),
            "observe" => {
                let label = arg(1)?;
                let (site, doc) = (arg(2)?, DocId::new(arg(3)?));
                let s = world
                    .site_mut(site)
                    .ok_or_else(|| HarnessError::Usage(format!("unknown site {site:?}")))?;
                s.deliver_schedules();
                let found = s
                    .schedules(&doc)
                    .iter()
                    .map(|c| Candidate {
                        score: c.score(),
                        held: held_events(s.acg(), &c.order),
                    })
                    .collect();
                self.observed.insert(label.to_owned(), found);
            }
            other => {
                return Err(HarnessError::Usage(format!(
                    "line {}: unknown event {other:?}",
                    ev.line
                )));
            }
        }
        Ok(())
    }

    fn handle(&mut self, event: &str) -> Result<&mut EventHandle, HarnessError> {
        self.handles
            .get_mut(event)
            .ok_or_else(|| HarnessError::Usage(format!("no event {event:?} created")))
    }
}

/// Views of every site list an invitation of one user at one slot in two
/// live events.
fn double_booked(site: &Site) -> bool {
    !calendar::double_bookings(site).is_empty()
}

fn check(world: &World, observed: &BTreeMap<String, Vec<Candidate>>, words: &[String]) -> Result<bool, String> {
    let arg = |i: usize| {
        words
            .get(i)
            .map(String::as_str)
            .ok_or_else(|| format!("{:?} needs more arguments", words[0]))
    };
    let obs = |label: &str| {
        observed
            .get(label)
            .ok_or_else(|| format!("nothing observed as {label:?}"))
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad number {s:?}"));
    let site = |name: &str| world.site(name).ok_or_else(|| format!("unknown site {name:?}"));
    Ok(match words[0].as_str() {
        "classes" => obs(arg(1)?)?.len() == num(arg(2)?)?,
        "scores" => {
            let want: Result<Vec<usize>, String> = words[2..].iter().map(|s| num(s)).collect();
            obs(arg(1)?)?.iter().map(|c| c.score).collect::<Vec<_>>() == want?
        }
        "first" => obs(arg(1)?)?
            .first()
            .is_some_and(|c| c.held == names(arg(2).unwrap_or(""))),
        "holds" => {
            let want = names(arg(2).unwrap_or(""));
            obs(arg(1)?)?.iter().any(|c| c.held == want)
        }
        "upcalls" => site(arg(1)?)?.upcalls().len() == num(arg(2)?)?,
        "upcall-pair" => {
            let s = site(arg(1)?)?;
            let docs: BTreeSet<&str> = [arg(2)?, arg(3)?].into();
            let n = s
                .upcalls()
                .iter()
                .filter(|(a, b)| [a.doc.as_str(), b.doc.as_str()].into_iter().collect::<BTreeSet<_>>() == docs)
                .count();
            n == num(arg(4)?)?
        }
        "decided" => world.all_decided(),
        "agree" => world.prefixes_agree(),
        "converged" => {
            let doc = DocId::new(arg(1)?);
            let mut states = world
                .sites()
                .map(|s| DictState::replay(s.acg(), &doc, s.commit_state().committed_prefix()));
            let first = states.next();
            states.all(|s| Some(&s) == first.as_ref())
        }
        "no-double-booking" => !world.sites().any(double_booked),
        "same-solution" => {
            let mut held = world
                .sites()
                .map(|s| held_events(s.acg(), s.commit_state().committed_prefix()));
            let first = held.next();
            held.all(|h| Some(&h) == first.as_ref())
        }
        other => return Err(format!("unknown expectation {other:?}")),
    })
}

/// Runs a scenario script. `seed` and `max_ticks` override the script's
/// settings when given. Failed expectations are reported, not raised.
pub fn run_scenario_text(
    text: &str,
    seed: Option<u64>,
    max_ticks: Option<u64>,
) -> Result<ScenarioOutcome, HarnessError> {
    let script = Script::parse(text)?;
    let sites = script.list("sites");
    if sites.is_empty() {
        return Err(HarnessError::Usage("the script names no sites".into()));
    }
    let seed = match seed {
        Some(s) => s,
        None => script.get_or("seed", 0)?,
    };
    let ticks = match max_ticks {
        Some(t) => t,
        None => script.get_or("ticks", 1_000_000)?,
    };
    let mut config = DriverConfig {
        seed,
        latency: script.range("latency", (1, 50))?,
        antagonistic_inserts: script.get_or("antagonistic_inserts", false)?,
        ..DriverConfig::default()
    };
    config.site.candidates = script.get_or("candidates", config.site.candidates)?;
    config.site.restarts = script.get_or("restarts", config.site.restarts)?;
    let refs: Vec<&str> = sites.iter().map(String::as_str).collect();
    let mut driver = Driver::new(&refs, config)?;
    for (i, ev) in script.events.iter().enumerate() {
        driver.net.at(ev.tick, i);
    }
    let mut runner = Runner {
        sessions: BTreeMap::new(),
        handles: BTreeMap::new(),
        observed: BTreeMap::new(),
    };
    let mut failure = None;
    let end = driver.run(ticks, |net, world, i| {
        if failure.is_none() {
            if let Err(e) = runner.event(net, world, &script.events[i]) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    for site in driver.world.sites.values_mut() {
        site.deliver_schedules();
    }

    let mut report = Report::new("scenario");
    report.push("seed", seed).push("end_tick", end);
    for (label, found) in &runner.observed {
        report.push(&format!("observe.{label}.classes"), found.len());
        let scores: Vec<String> = found.iter().map(|c| c.score.to_string()).collect();
        report.push(&format!("observe.{label}.scores"), scores.join(","));
        for (rank, c) in found.iter().enumerate() {
            report.push(&format!("observe.{label}.held.{rank}"), join(&c.held));
        }
    }
    for site in driver.world.sites() {
        let p = site.participant();
        report
            .push(
                &format!("site.{p}.committed"),
                site.commit_state().committed_prefix().len(),
            )
            .push(&format!("site.{p}.aborted"), site.commit_state().aborted().len())
            .push(&format!("site.{p}.upcalls"), site.upcalls().len())
            .push(
                &format!("site.{p}.held"),
                join(&held_events(site.acg(), site.commit_state().committed_prefix())),
            );
    }
    let mut failures = Vec::new();
    for e in &script.expects {
        let ok = match check(&driver.world, &runner.observed, &e.words) {
            Ok(ok) => ok,
            Err(msg) => return Err(HarnessError::Usage(format!("line {}: {msg}", e.line))),
        };
        report.push(&format!("expect.{}", e.line), if ok { "pass" } else { "fail" });
        if !ok {
            failures.push(format!("line {}: expect {}", e.line, e.words.join(" ")));
        }
    }
    Ok(ScenarioOutcome { report, failures })
}

pub fn run_scenario(
    path: &std::path::Path,
    seed: Option<u64>,
    max_ticks: Option<u64>,
) -> Result<ScenarioOutcome, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    run_scenario_text(&text, seed, max_ticks)
}
