//! Human-readable listing of multilog files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::acg::{DocId, ParticipantId};
use crate::multilog::codec::{self, Frame, Record, FRAME_OVERHEAD};
use crate::reconciler::Proposal;

#[derive(Debug, Default)]
pub struct Dump {
    pub text: String,
    pub records: usize,
    /// Records that failed to decode.
    pub flagged: usize,
}

fn name_of(p: &Path) -> Option<String> {
    p.file_name().map(|n| n.to_string_lossy().into_owned())
}

fn is_chunk(p: &Path) -> bool {
    name_of(p).is_some_and(|n| n.starts_with("chunk-") && n.ends_with(".log"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    out.sort();
    Ok(out)
}

/// Lists a document directory, a participant's log directory or a single
/// chunk file. Records that fail their checksum are flagged and skipped
/// when their length is intact.
pub fn dump(path: &Path) -> Result<Dump, HarnessError> {
    let mut out = Dump::default();
    if path.is_file() {
        let log_dir = path.parent().unwrap_or(Path::new(""));
        dump_chunk(&mut out, path, &owner(log_dir))?;
    } else if path.join("multilog").is_dir() {
        for log in sorted_entries(&path.join("multilog"))? {
            dump_log(&mut out, &log)?;
        }
    } else if path.is_dir() {
        dump_log(&mut out, path)?;
    } else {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )
        .into());
    }
    Ok(out)
}

/// Document and participant of a log directory laid out as
/// `<doc>/multilog/<participant>`.
fn owner(log_dir: &Path) -> Option<(DocId, ParticipantId)> {
    let participant = name_of(log_dir)?;
    let multilog = log_dir.parent()?;
    if name_of(multilog)? != "multilog" {
        return None;
    }
    let doc = name_of(multilog.parent()?)?;
    Some((DocId::new(doc), ParticipantId::new(participant)))
}

fn dump_log(out: &mut Dump, dir: &Path) -> Result<(), HarnessError> {
    let who = owner(dir);
    let label = who
        .as_ref()
        .map_or_else(|| dir.display().to_string(), |(d, p)| format!("{d}/{p}"));
    let _ = writeln!(out.text, "== {label}");
    for chunk in sorted_entries(dir)?.into_iter().filter(|p| is_chunk(p)) {
        dump_chunk(out, &chunk, &who)?;
    }
    Ok(())
}

fn dump_chunk(out: &mut Dump, path: &Path, who: &Option<(DocId, ParticipantId)>) -> Result<(), HarnessError> {
    let bytes = fs::read(path)?;
    let name = name_of(path).unwrap_or_default();
    let mut at = 0;
    while at < bytes.len() {
        let rest = &bytes[at..];
        match codec::decode(rest) {
            Ok(Frame::Complete(rec, n)) => {
                out.records += 1;
                let _ = writeln!(out.text, "{name}:{at} {}", describe(&rec, who));
                at += n;
            }
            Ok(Frame::Incomplete) => {
                let _ = writeln!(out.text, "{name}:{at} TORN {} trailing bytes", rest.len());
                out.flagged += 1;
                break;
            }
            Err(e) => {
                out.flagged += 1;
                let _ = writeln!(out.text, "{name}:{at} CORRUPT {e}");
                let len = u32::from_le_bytes(rest[..4].try_into().expect("decode saw a header")) as usize;
                if len > codec::MAX_PAYLOAD || rest.len() < len + FRAME_OVERHEAD {
                    break;
                }
                at += len + FRAME_OVERHEAD;
            }
        }
    }
    Ok(())
}

fn describe(rec: &Record, who: &Option<(DocId, ParticipantId)>) -> String {
    match rec {
        Record::Action(a) => {
            let mut s = format!("action {} app={} keys={}", a.id, a.app_tag, a.keys.len());
            for (k, v) in &a.attributes {
                let _ = write!(s, " {k}={v}");
            }
            s
        }
        Record::Constraint(c) => match who {
            Some((doc, p)) => format!("constraint {}", c.resolve(doc, p)),
            None => format!("constraint {:?}", c),
        },
        Record::Proposal(bytes) => match Proposal::decode(bytes) {
            Ok(p) => {
                let decisions: Vec<String> = p.decisions.iter().map(ToString::to_string).collect();
                format!("proposal {}#{} [{}]", p.proposer, p.seq, decisions.join(", "))
            }
            Err(_) => format!("proposal ({} bytes, undecodable)", bytes.len()),
        },
    }
}
