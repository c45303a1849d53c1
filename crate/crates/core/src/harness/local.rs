//! Dictionary operations against a single persisted site.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::HarnessError;
use crate::acg::{ActionId, DocId};
use crate::apps::{Attrs, SrdaApp, SrdaError, SrdaSession};
use crate::site::{Site, SiteConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SrdaVerb {
    Insert { doc: String, tid: String, attrs: Attrs },
    Modify { doc: String, tid: String, attrs: Attrs },
    Remove { doc: String, tid: String },
    Read { doc: String, tid: String },
    Dump { doc: String },
}

/// A lone site persisted under `root`, with every dictionary found there
/// open and earlier decisions re-applied.
pub fn local_site(root: &Path, me: &str) -> Result<Site, HarnessError> {
    fs::create_dir_all(root)?;
    let config = SiteConfig {
        sites: vec![me.into()],
        root: Some(root.to_path_buf()),
        ..SiteConfig::default()
    };
    let mut site = Site::new(me, config)?;
    site.register_app(Box::new(SrdaApp::default()));
    let mut docs: Vec<String> = fs::read_dir(root)?
        .filter_map(Result::ok)
        .filter(|e| e.path().join("multilog").is_dir())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter(|n| !n.starts_with('.'))
        .collect();
    docs.sort();
    for doc in docs {
        site.open(doc, "srda")?;
    }
    site.replay_decisions()?;
    Ok(site)
}

/// Commits whatever is pending; the site is alone so everything is stable.
fn commit(site: &mut Site) {
    while site.propose().is_some() {
        let out = site.take_outbox();
        for p in out.proposals {
            site.on_multicast(&p);
        }
        if !site.has_undecided() {
            break;
        }
    }
    site.take_outbox();
}

/// Runs one verb and returns what to print.
pub fn srda_command(root: &Path, me: &str, verb: &SrdaVerb) -> Result<String, HarnessError> {
    let mut site = local_site(root, me)?;
    let mut session = SrdaSession::new();
    let open = |site: &mut Site, doc: &str| -> Result<DocId, HarnessError> {
        let doc = DocId::new(doc);
        if !site.is_open(&doc) {
            site.open(doc.clone(), "srda")?;
        }
        Ok(doc)
    };
    let written = |site: &mut Site, id: ActionId| {
        commit(site);
        let state = if site.acg().is_committed(&id) {
            "committed"
        } else {
            "tentative"
        };
        format!("{id} {state}\n")
    };
    Ok(match verb {
        SrdaVerb::Insert { doc, tid, attrs } => {
            let doc = open(&mut site, doc)?;
            let id = session.insert(&mut site, &doc, tid, attrs.clone())?;
            written(&mut site, id)
        }
        SrdaVerb::Modify { doc, tid, attrs } => {
            let doc = open(&mut site, doc)?;
            let id = session.modify(&mut site, &doc, tid, attrs.clone())?;
            written(&mut site, id)
        }
        SrdaVerb::Remove { doc, tid } => {
            let doc = open(&mut site, doc)?;
            let id = session.remove(&mut site, &doc, tid)?;
            written(&mut site, id)
        }
        SrdaVerb::Read { doc, tid } => {
            let doc = DocId::new(doc);
            if !site.is_open(&doc) {
                return Err(SrdaError::NoSuchTuple(tid.clone()).into());
            }
            let mut out = String::new();
            for (k, v) in SrdaSession::read(&mut site, &doc, tid)? {
                let _ = writeln!(out, "{k}={v}");
            }
            out
        }
        SrdaVerb::Dump { doc } => {
            let doc = DocId::new(doc);
            let mut out = String::new();
            if site.is_open(&doc) {
                for (tid, attrs) in SrdaSession::view(&mut site, &doc)?.contents() {
                    let _ = write!(out, "{tid}");
                    for (k, v) in attrs {
                        let _ = write!(out, " {k}={v}");
                    }
                    out.push('\n');
                }
            }
            out
        }
    })
}
