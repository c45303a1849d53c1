//! Simulation driver, workloads, benchmarks and scripted scenarios.
//!
//! A [`Driver`] couples a [`SimNet`] with one [`Site`] per simulated
//! participant. It forwards network events to sites, ships whatever the
//! sites produce back into the network, and keeps each site's periodic
//! scheduling and proposal timers armed while there is work to do, so a
//! run ends once every action is decided.

mod bench;
mod dump;
mod local;
mod report;
mod scenario;
mod workload;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

pub use bench::{bench_commit, bench_schedule, random_graph, CommitBench};
pub use dump::{dump, Dump};
pub use local::{local_site, srda_command, SrdaVerb};
pub use report::Report;
pub use scenario::{run_scenario, run_scenario_text, ScenarioOutcome, CALENDAR_SCRIPT};
pub use workload::{run_srda, SrdaWorkload, WorkloadOutcome};

use crate::acg::ActionId;
use crate::apps::{CalendarApp, SrdaApp, SrdaError};
use crate::sim::{Event, ParseError, SimError, SimNet, SiteId};
use crate::site::{Site, SiteConfig, SiteError, PROPOSE_TIMER, SCHEDULE_TIMER};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Site(#[from] SiteError),
    #[error(transparent)]
    Srda(#[from] SrdaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct DriverConfig {
    pub seed: u64,
    /// Inclusive one-way latency range in ticks.
    pub latency: (u64, u64),
    /// Template for every site; `sites`, `seed` and `root` are filled in.
    pub site: SiteConfig,
    pub antagonistic_inserts: bool,
    /// Ticks between committed-prefix samples.
    pub sample_every: u64,
    /// Each site persists under `<root>/<site>` when set.
    pub root: Option<PathBuf>,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            seed: 0,
            latency: (1, 50),
            site: SiteConfig::default(),
            antagonistic_inserts: false,
            sample_every: 100,
            root: None,
        }
    }
}

/// Everything but the network.
pub struct World {
    sites: BTreeMap<SiteId, Site>,
    periods: (u64, u64),
    armed: BTreeSet<(SiteId, u32)>,
    seen_submitted: BTreeMap<SiteId, usize>,
    issued_at: HashMap<ActionId, u64>,
    latencies: Vec<u64>,
    sample_every: u64,
    next_sample: u64,
    last_sample: BTreeMap<SiteId, Vec<ActionId>>,
    stability_violations: u64,
    samples: u64,
}

pub struct Driver {
    pub net: SimNet,
    pub world: World,
}

impl Driver {
    pub fn new(names: &[&str], config: DriverConfig) -> Result<Driver, HarnessError> {
        if names.is_empty() {
            return Err(HarnessError::Usage("at least one site is needed".into()));
        }
        let mut net = SimNet::new(config.seed, config.latency);
        let all: Vec<SiteId> = names.iter().map(|n| SiteId::new(*n)).collect();
        let mut sites = BTreeMap::new();
        for (i, id) in all.iter().enumerate() {
            net.add_site(id.clone());
            let site_config = SiteConfig {
                sites: all.clone(),
                seed: config.seed.wrapping_add(i as u64),
                root: config.root.as_ref().map(|r| r.join(id.as_str())),
                ..config.site.clone()
            };
            let mut site = Site::new(id.clone(), site_config)?;
            site.register_app(Box::new(SrdaApp {
                antagonistic_inserts: config.antagonistic_inserts,
            }));
            site.register_app(Box::new(CalendarApp));
            sites.insert(id.clone(), site);
        }
        Ok(Driver {
            net,
            world: World {
                sites,
                periods: (config.site.schedule_period, config.site.proposal_period),
                armed: BTreeSet::new(),
                seen_submitted: BTreeMap::new(),
                issued_at: HashMap::new(),
                latencies: Vec::new(),
                sample_every: config.sample_every.max(1),
                next_sample: 0,
                last_sample: BTreeMap::new(),
                stability_violations: 0,
                samples: 0,
            },
        })
    }

    /// Runs `f` on a site at the current tick and ships its output.
    pub fn act<R>(&mut self, name: &str, f: impl FnOnce(&mut Site) -> R) -> Result<R, HarnessError> {
        self.world.act(&mut self.net, name, f)
    }

    /// Runs until nothing is pending. `script` handles events registered
    /// with [`SimNet::at`].
    pub fn run(
        &mut self,
        max_ticks: u64,
        mut script: impl FnMut(&mut SimNet, &mut World, usize),
    ) -> Result<u64, HarnessError> {
        let world = &mut self.world;
        let end = self
            .net
            .run_until_quiescent(max_ticks, |net, ev| world.handle(net, ev, &mut script))?;
        world.sample_all();
        Ok(end)
    }

    /// Runs to quiescence, then brings every view up to date.
    pub fn settle(&mut self, max_ticks: u64) -> Result<u64, HarnessError> {
        let end = self.run(max_ticks, |_, _, _| {})?;
        for site in self.world.sites.values_mut() {
            site.deliver_schedules();
        }
        Ok(end)
    }
}

impl World {
    pub fn site(&self, name: &str) -> Option<&Site> {
        self.sites.get(&SiteId::new(name))
    }

    pub fn site_mut(&mut self, name: &str) -> Option<&mut Site> {
        self.sites.get_mut(&SiteId::new(name))
    }

    pub fn sites(&self) -> impl Iterator<Item = &Site> {
        self.sites.values()
    }

    pub fn act<R>(&mut self, net: &mut SimNet, name: &str, f: impl FnOnce(&mut Site) -> R) -> Result<R, HarnessError> {
        let id = SiteId::new(name);
        let site = self
            .sites
            .get_mut(&id)
            .ok_or_else(|| HarnessError::Usage(format!("unknown site {name:?}")))?;
        let r = f(site);
        self.ship(net, &id);
        Ok(r)
    }

    fn handle(&mut self, net: &mut SimNet, ev: Event, script: &mut dyn FnMut(&mut SimNet, &mut World, usize)) {
        match ev {
            Event::LogData {
                dest,
                log,
                offset,
                bytes,
            } => {
                if let Some(site) = self.sites.get_mut(&dest) {
                    site.on_log_data(&log, offset, &bytes);
                    self.ship(net, &dest);
                }
            }
            Event::Multicast { dest, bytes, .. } => {
                if let Some(site) = self.sites.get_mut(&dest) {
                    if let Some(d) = site.on_multicast(&bytes) {
                        for id in d.committed.iter().filter(|id| id.issuer == dest) {
                            if let Some(t) = self.issued_at.get(id) {
                                self.latencies.push(net.now() - t);
                            }
                        }
                    }
                    self.ship(net, &dest);
                }
            }
            Event::Timer { site: id, tag } => {
                self.armed.remove(&(id.clone(), tag));
                if let Some(site) = self.sites.get_mut(&id) {
                    site.on_timer(tag);
                    self.ship(net, &id);
                }
            }
            Event::Script(i) => script(net, self, i),
        }
        if net.now() >= self.next_sample {
            self.next_sample = net.now() + self.sample_every;
            self.sample_all();
        }
    }

    /// Publishes a site's output and arms the timers it needs.
    fn ship(&mut self, net: &mut SimNet, id: &SiteId) {
        let site = self.sites.get_mut(id).expect("known site");
        let seen = self.seen_submitted.entry(id.clone()).or_insert(0);
        for a in &site.submitted()[*seen..] {
            self.issued_at.insert(a.clone(), net.now());
        }
        *seen = site.submitted().len();
        let out = site.take_outbox();
        for (log, bytes) in out.appends {
            net.publish_append(&log, &bytes);
        }
        for p in out.proposals {
            net.amcast(id, p);
        }
        let wants = [
            (SCHEDULE_TIMER, site.needs_schedule(), self.periods.0),
            (PROPOSE_TIMER, site.has_undecided(), self.periods.1),
        ];
        for (tag, want, period) in wants {
            if want && self.armed.insert((id.clone(), tag)) {
                net.set_timer(id, period, tag);
            }
        }
    }

    fn sample_all(&mut self) {
        self.samples += 1;
        for (id, site) in &self.sites {
            let now = site.commit_state().committed_prefix();
            let before = self.last_sample.entry(id.clone()).or_default();
            if !now.starts_with(before) {
                log::error!("{id}: committed prefix changed");
                self.stability_violations += 1;
            }
            *before = now.to_vec();
        }
    }

    /// Submit-to-commit delays at the issuing site, in ticks.
    pub fn latencies(&self) -> &[u64] {
        &self.latencies
    }

    pub fn mean_latency(&self) -> Option<f64> {
        if self.latencies.is_empty() {
            None
        } else {
            Some(self.latencies.iter().sum::<u64>() as f64 / self.latencies.len() as f64)
        }
    }

    pub fn stability_violations(&self) -> u64 {
        self.stability_violations
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn all_decided(&self) -> bool {
        self.sites.values().all(|s| !s.has_undecided())
    }

    pub fn prefixes_agree(&self) -> bool {
        let mut it = self.sites.values().map(|s| s.commit_state().committed_prefix());
        let first = it.next().unwrap_or_default();
        it.all(|p| p == first)
    }
}
