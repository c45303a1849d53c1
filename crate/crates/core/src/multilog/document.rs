use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acg::{Acg, ActionId, DocId, ParticipantId};

use super::codec::Record;
use super::filter::FilterSpec;
use super::logdir::{Cursor, LogDir, DEFAULT_CHUNK_THRESHOLD};
use super::MultilogError;

/// A named schedule, optionally with the application state it produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotMeta {
    pub name: String,
    pub schedule: Vec<ActionId>,
    /// Opaque application state. Present means the snapshot is materialised.
    pub materialised: Option<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    name: String,
    schedule: Vec<ActionId>,
    materialised: bool,
}

/// Lets a site keep chunks that could be collected.
pub trait RetentionPolicy {
    fn retain(&self, participant: &ParticipantId, seq: u64) -> bool;
}

/// Collects everything allowed.
pub struct CollectAll;

impl RetentionPolicy for CollectAll {
    fn retain(&self, _: &ParticipantId, _: u64) -> bool {
        false
    }
}

impl<F: Fn(&ParticipantId, u64) -> bool> RetentionPolicy for F {
    fn retain(&self, participant: &ParticipantId, seq: u64) -> bool {
        self(participant, seq)
    }
}

/// A document on disk: one log per participant plus local metadata.
#[derive(Debug)]
pub struct DocumentDir {
    doc: DocId,
    path: PathBuf,
    local: ParticipantId,
    own: LogDir,
}

fn check_name(name: &str) -> Result<(), MultilogError> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-".contains(&b));
    if ok {
        Ok(())
    } else {
        Err(MultilogError::InvalidName(name.to_owned()))
    }
}

impl DocumentDir {
    /// Opens (creating if needed) `<root>/<doc>` on behalf of `local`.
    pub fn open(root: impl AsRef<Path>, doc: DocId, local: ParticipantId) -> Result<Self, MultilogError> {
        Self::open_with_threshold(root, doc, local, DEFAULT_CHUNK_THRESHOLD)
    }

    pub fn open_with_threshold(
        root: impl AsRef<Path>,
        doc: DocId,
        local: ParticipantId,
        chunk_threshold: u64,
    ) -> Result<Self, MultilogError> {
        check_name(doc.as_str())?;
        check_name(local.as_str())?;
        let path = root.as_ref().join(doc.as_str());
        fs::create_dir_all(path.join("multilog"))?;
        fs::create_dir_all(path.join("meta").join("filters"))?;
        fs::create_dir_all(path.join("meta").join("snapshots"))?;
        let own = LogDir::open_owned(path.join("multilog").join(local.as_str()), local.clone())?
            .with_chunk_threshold(chunk_threshold);
        Ok(DocumentDir { doc, path, local, own })
    }

    pub fn doc(&self) -> &DocId {
        &self.doc
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn local(&self) -> &ParticipantId {
        &self.local
    }

    pub fn own_log(&mut self) -> &mut LogDir {
        &mut self.own
    }

    /// Appends to the local participant's log.
    pub fn append(&mut self, rec: &Record) -> Result<Cursor, MultilogError> {
        self.own.append(rec)
    }

    /// Participants with a log directory, sorted.
    pub fn participants(&self) -> Result<Vec<ParticipantId>, MultilogError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.path.join("multilog"))? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                if let Some(name) = entry.file_name().to_str() {
                    out.push(ParticipantId::from(name));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Read handle on any participant's log.
    pub fn log(&self, participant: &ParticipantId) -> LogDir {
        LogDir::open(
            self.path.join("multilog").join(participant.as_str()),
            participant.clone(),
        )
    }

    /// Every record of every log, each log in order.
    pub fn read_all(&self) -> Result<Vec<(ParticipantId, Record)>, MultilogError> {
        let mut out = Vec::new();
        for p in self.participants()? {
            let log = self.log(&p);
            let start = log
                .chunks()?
                .first()
                .map_or(Cursor::START, |&seq| Cursor { seq, offset: 0 });
            for (rec, _) in log.read_from(start)?.records {
                out.push((p.clone(), rec));
            }
        }
        Ok(out)
    }

    /// Rebuilds the graph of this document's retained records.
    pub fn load_into(&self, acg: &mut Acg) -> Result<(), MultilogError> {
        for (issuer, rec) in self.read_all()? {
            match rec {
                Record::Action(a) => {
                    acg.add_action(a)?;
                }
                Record::Constraint(c) => {
                    acg.add_constraint(c.resolve(&self.doc, &issuer));
                }
                Record::Proposal(_) => {}
            }
        }
        Ok(())
    }

    fn meta_file(&self, kind: &str, name: &str, ext: &str) -> Result<PathBuf, MultilogError> {
        check_name(name)?;
        Ok(self.path.join("meta").join(kind).join(format!("{name}.{ext}")))
    }

    fn list_meta(&self, kind: &str) -> Result<Vec<String>, MultilogError> {
        let mut names = Vec::new();
        for entry in fs::read_dir(self.path.join("meta").join(kind))? {
            let name = entry?.file_name();
            if let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                names.push(stem.to_owned());
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn save_filter(&self, filter: &FilterSpec) -> Result<(), MultilogError> {
        let file = self.meta_file("filters", &filter.name, "json")?;
        if file.exists() {
            return Err(MultilogError::NameCollision(filter.name.clone()));
        }
        fs::write(file, serde_json::to_vec_pretty(filter)?)?;
        Ok(())
    }

    pub fn remove_filter(&self, name: &str) -> Result<(), MultilogError> {
        let file = self.meta_file("filters", name, "json")?;
        if !file.exists() {
            return Err(MultilogError::NotFound(name.to_owned()));
        }
        fs::remove_file(file)?;
        Ok(())
    }

    pub fn list_filters(&self) -> Result<Vec<FilterSpec>, MultilogError> {
        self.list_meta("filters")?
            .into_iter()
            .map(|name| {
                let bytes = fs::read(self.meta_file("filters", &name, "json")?)?;
                Ok(serde_json::from_slice(&bytes)?)
            })
            .collect()
    }

    pub fn save_snapshot(&self, snap: &SnapshotMeta) -> Result<(), MultilogError> {
        let header = self.meta_file("snapshots", &snap.name, "json")?;
        if header.exists() {
            return Err(MultilogError::NameCollision(snap.name.clone()));
        }
        if let Some(blob) = &snap.materialised {
            fs::write(self.meta_file("snapshots", &snap.name, "state")?, blob)?;
        }
        let h = SnapshotHeader {
            name: snap.name.clone(),
            schedule: snap.schedule.clone(),
            materialised: snap.materialised.is_some(),
        };
        // The header goes last so a snapshot is never listed without its state.
        fs::write(header, serde_json::to_vec(&h)?)?;
        Ok(())
    }

    pub fn remove_snapshot(&self, name: &str) -> Result<(), MultilogError> {
        let header = self.meta_file("snapshots", name, "json")?;
        if !header.exists() {
            return Err(MultilogError::NotFound(name.to_owned()));
        }
        fs::remove_file(header)?;
        let blob = self.meta_file("snapshots", name, "state")?;
        if blob.exists() {
            fs::remove_file(blob)?;
        }
        Ok(())
    }

    pub fn list_snapshots(&self) -> Result<Vec<SnapshotMeta>, MultilogError> {
        self.list_meta("snapshots")?
            .into_iter()
            .map(|name| {
                let h: SnapshotHeader =
                    serde_json::from_slice(&fs::read(self.meta_file("snapshots", &name, "json")?)?)?;
                let materialised = if h.materialised {
                    Some(fs::read(self.meta_file("snapshots", &name, "state")?)?)
                } else {
                    None
                };
                Ok(SnapshotMeta {
                    name: h.name,
                    schedule: h.schedule,
                    materialised,
                })
            })
            .collect()
    }

    /// Deletes old chunks made redundant by a materialised snapshot.
    ///
    /// A chunk goes only if every action in it is decided, every constraint
    /// in it touches decided actions only, and a single materialised snapshot
    /// includes all of its committed actions. Chunks are removed oldest
    /// first and the newest chunk of each log is always kept.
    pub fn gc_chunks(
        &self,
        acg: &Acg,
        snapshots: &[SnapshotMeta],
        policy: &dyn RetentionPolicy,
    ) -> Result<Vec<(ParticipantId, u64)>, MultilogError> {
        let covers: Vec<BTreeSet<&ActionId>> = snapshots
            .iter()
            .filter(|s| s.materialised.is_some())
            .map(|s| s.schedule.iter().collect())
            .collect();
        let mut deleted = Vec::new();
        if covers.is_empty() {
            return Ok(deleted);
        }
        let decided = |id: &ActionId| acg.is_committed(id) || acg.is_aborted(id);
        let mut per_log: BTreeMap<ParticipantId, Vec<u64>> = BTreeMap::new();
        for p in self.participants()? {
            let log = self.log(&p);
            let chunks = log.chunks()?;
            let Some((_, old)) = chunks.split_last() else { continue };
            for &seq in old {
                if policy.retain(&p, seq) {
                    break;
                }
                let batch = match log.read_from(Cursor { seq, offset: 0 }) {
                    Ok(b) => b,
                    Err(e) => {
                        log::warn!("gc: skipping {p} chunk {seq}: {e}");
                        break;
                    }
                };
                let mut committed = Vec::new();
                let mut ok = true;
                for (rec, at) in &batch.records {
                    if at.seq != seq {
                        break;
                    }
                    match rec {
                        Record::Action(a) => {
                            if !decided(&a.id) {
                                ok = false;
                            } else if acg.is_committed(&a.id) {
                                committed.push(a.id.clone());
                            }
                        }
                        Record::Constraint(c) => {
                            let c = c.resolve(&self.doc, &p);
                            ok &= decided(c.a()) && decided(c.b());
                        }
                        Record::Proposal(_) => {}
                    }
                }
                ok &= covers.iter().any(|cov| committed.iter().all(|id| cov.contains(id)));
                if !ok {
                    break;
                }
                per_log.entry(p.clone()).or_default().push(seq);
            }
        }
        for (p, seqs) in per_log {
            let log = self.log(&p);
            for seq in seqs {
                log.delete_oldest(seq)?;
                deleted.push((p.clone(), seq));
            }
        }
        Ok(deleted)
    }
}
