use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::acg::ParticipantId;

use super::codec::{self, Record};
use super::MultilogError;

pub const DEFAULT_CHUNK_THRESHOLD: u64 = 1 << 20;

/// Position in a log: chunk sequence number and byte offset in that chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cursor {
    pub seq: u64,
    pub offset: u64,
}

impl Cursor {
    pub const START: Cursor = Cursor { seq: 1, offset: 0 };
}

impl Default for Cursor {
    fn default() -> Self {
        Cursor::START
    }
}

pub fn chunk_file_name(seq: u64) -> String {
    format!("chunk-{seq:010}.log")
}

fn parse_chunk_name(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("chunk-")?.strip_suffix(".log")?;
    if digits.len() != 10 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Records read by [`LogDir::read_from`].
#[derive(Debug, Default)]
pub struct ReadBatch {
    /// Each record with the cursor just past it.
    pub records: Vec<(Record, Cursor)>,
    /// Where the next read should start.
    pub next: Cursor,
    /// The log ends in an incomplete record, which was skipped.
    pub torn: bool,
}

/// One participant's log: a directory of numbered chunk files.
#[derive(Debug)]
pub struct LogDir {
    participant: ParticipantId,
    path: PathBuf,
    chunk_threshold: u64,
    writable: bool,
}

impl LogDir {
    /// Opens a log for reading. The directory need not exist yet.
    pub fn open(path: impl Into<PathBuf>, participant: ParticipantId) -> Self {
        LogDir {
            participant,
            path: path.into(),
            chunk_threshold: DEFAULT_CHUNK_THRESHOLD,
            writable: false,
        }
    }

    /// Opens the log as its owner. A torn record left at the end of the
    /// newest chunk by an interrupted append is cut off.
    pub fn open_owned(path: impl Into<PathBuf>, participant: ParticipantId) -> Result<Self, MultilogError> {
        let mut log = LogDir::open(path, participant);
        log.writable = true;
        fs::create_dir_all(&log.path)?;
        if let Some(&seq) = log.chunks()?.last() {
            let file = log.chunk_path(seq);
            let bytes = fs::read(&file)?;
            let (recs, err) = codec::decode_all(&bytes);
            if err.is_none() {
                let good = recs.last().map_or(0, |(_, end)| *end);
                if good < bytes.len() {
                    log::warn!("{}: dropping {} torn bytes", file.display(), bytes.len() - good);
                    OpenOptions::new().write(true).open(&file)?.set_len(good as u64)?;
                }
            }
        }
        Ok(log)
    }

    pub fn with_chunk_threshold(mut self, bytes: u64) -> Self {
        self.chunk_threshold = bytes.max(1);
        self
    }

    pub fn participant(&self) -> &ParticipantId {
        &self.participant
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_owned(&self) -> bool {
        self.writable
    }

    pub fn chunk_path(&self, seq: u64) -> PathBuf {
        self.path.join(chunk_file_name(seq))
    }

    /// Retained chunk sequence numbers, ascending.
    pub fn chunks(&self) -> Result<Vec<u64>, MultilogError> {
        let mut seqs = Vec::new();
        let entries = match fs::read_dir(&self.path) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(seqs),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let entry = entry?;
            if let Some(seq) = entry.file_name().to_str().and_then(parse_chunk_name) {
                seqs.push(seq);
            }
        }
        seqs.sort_unstable();
        Ok(seqs)
    }

    /// Appends a record and returns where it starts.
    pub fn append(&mut self, rec: &Record) -> Result<Cursor, MultilogError> {
        self.append_bytes(&codec::encode(rec))
    }

    /// Appends pre-encoded frames.
    pub fn append_bytes(&mut self, frame: &[u8]) -> Result<Cursor, MultilogError> {
        if !self.writable {
            return Err(MultilogError::NotOwner(self.participant.clone()));
        }
        let (mut seq, mut size) = match self.chunks()?.last() {
            Some(&seq) => (seq, fs::metadata(self.chunk_path(seq))?.len()),
            None => (1, 0),
        };
        if size >= self.chunk_threshold {
            seq += 1;
            size = 0;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.chunk_path(seq))?;
        file.write_all(frame)?;
        file.sync_data()?;
        Ok(Cursor { seq, offset: size })
    }

    /// Reads every complete record from `cursor` to the end of the log.
    pub fn read_from(&self, cursor: Cursor) -> Result<ReadBatch, MultilogError> {
        let chunks = self.chunks()?;
        let mut batch = ReadBatch {
            next: cursor,
            ..ReadBatch::default()
        };
        let Some(&lowest) = chunks.first() else {
            return Ok(batch);
        };
        if cursor.seq < lowest {
            return Err(MultilogError::CursorBeforeRetention {
                participant: self.participant.clone(),
                seq: cursor.seq,
                lowest,
            });
        }
        for &seq in chunks.iter().filter(|&&s| s >= cursor.seq) {
            let start = if seq == cursor.seq { cursor.offset } else { 0 };
            let mut bytes = Vec::new();
            File::open(self.chunk_path(seq))?.read_to_end(&mut bytes)?;
            if start as usize > bytes.len() {
                return Err(MultilogError::Corrupt {
                    participant: self.participant.clone(),
                    seq,
                    offset: start,
                    reason: "cursor past end of chunk".into(),
                });
            }
            let (recs, err) = codec::decode_all(&bytes[start as usize..]);
            for (rec, end) in recs {
                let at = Cursor {
                    seq,
                    offset: start + end as u64,
                };
                batch.next = at;
                batch.records.push((rec, at));
            }
            if batch.records.is_empty() || batch.next.seq != seq {
                batch.next = Cursor { seq, offset: start };
            }
            if let Some((at, e)) = err {
                return Err(MultilogError::Corrupt {
                    participant: self.participant.clone(),
                    seq,
                    offset: start + at as u64,
                    reason: e.to_string(),
                });
            }
            let consumed = batch.next.offset as usize;
            if consumed < bytes.len() {
                // Only the newest chunk can legitimately end mid-record.
                log::warn!(
                    "{}: skipping torn record at {}",
                    self.chunk_path(seq).display(),
                    consumed
                );
                batch.torn = true;
                break;
            }
        }
        Ok(batch)
    }

    /// Deletes a chunk. Only the oldest retained chunk may go, and never the
    /// newest one.
    pub(crate) fn delete_oldest(&self, seq: u64) -> Result<(), MultilogError> {
        let chunks = self.chunks()?;
        if chunks.first() != Some(&seq) || chunks.last() == Some(&seq) {
            return Err(MultilogError::NotFound(chunk_file_name(seq)));
        }
        fs::remove_file(self.chunk_path(seq))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: u8) -> Record {
        Record::Proposal(vec![n; 10])
    }

    #[test]
    fn chunk_names_sort_numerically() {
        assert_eq!(chunk_file_name(1), "chunk-0000000001.log");
        assert_eq!(parse_chunk_name("chunk-0000000042.log"), Some(42));
        assert_eq!(parse_chunk_name("chunk-42.log"), None);
        assert!(chunk_file_name(9) < chunk_file_name(10));
    }

    #[test]
    fn append_and_read() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = LogDir::open_owned(dir.path().join("alice"), "alice".into()).unwrap();
        assert_eq!(log.append(&rec(1)).unwrap(), Cursor { seq: 1, offset: 0 });
        log.append(&rec(2)).unwrap();
        log.append(&rec(3)).unwrap();
        let batch = log.read_from(Cursor::START).unwrap();
        let got: Vec<_> = batch.records.iter().map(|(r, _)| r.clone()).collect();
        assert_eq!(got, vec![rec(1), rec(2), rec(3)]);
        let again = log.read_from(batch.next).unwrap();
        assert!(again.records.is_empty());
        assert_eq!(again.next, batch.next);
    }

    #[test]
    fn rolls_over_at_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let frame = codec::encode(&rec(0)).len() as u64;
        let mut log = LogDir::open_owned(dir.path().join("a"), "a".into())
            .unwrap()
            .with_chunk_threshold(2 * frame);
        log.append(&rec(1)).unwrap();
        log.append(&rec(2)).unwrap();
        assert_eq!(log.append(&rec(3)).unwrap(), Cursor { seq: 2, offset: 0 });
        assert_eq!(log.chunks().unwrap(), vec![1, 2]);
        assert_eq!(log.read_from(Cursor::START).unwrap().records.len(), 3);
        let mid = log.read_from(Cursor { seq: 1, offset: frame }).unwrap();
        assert_eq!(mid.records.len(), 2);
    }

    #[test]
    fn readers_cannot_append() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = LogDir::open(dir.path().join("bob"), "bob".into());
        assert!(matches!(log.append(&rec(1)), Err(MultilogError::NotOwner(_))));
    }

    #[test]
    fn torn_tail_is_skipped_then_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a");
        let mut log = LogDir::open_owned(&path, "a".into()).unwrap();
        log.append(&rec(1)).unwrap();
        log.append(&rec(2)).unwrap();
        let file = log.chunk_path(1);
        let len = fs::metadata(&file).unwrap().len();
        OpenOptions::new()
            .write(true)
            .open(&file)
            .unwrap()
            .set_len(len - 1)
            .unwrap();

        let batch = log.read_from(Cursor::START).unwrap();
        assert!(batch.torn);
        assert_eq!(batch.records.len(), 1);
        assert_eq!(batch.next.offset, codec::encode(&rec(1)).len() as u64);

        let mut log = LogDir::open_owned(&path, "a".into()).unwrap();
        log.append(&rec(3)).unwrap();
        let got: Vec<_> = log
            .read_from(Cursor::START)
            .unwrap()
            .records
            .into_iter()
            .map(|(r, _)| r)
            .collect();
        assert_eq!(got, vec![rec(1), rec(3)]);
    }

    #[test]
    fn corrupt_record_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = LogDir::open_owned(dir.path().join("a"), "a".into()).unwrap();
        log.append(&rec(1)).unwrap();
        log.append(&rec(2)).unwrap();
        let file = log.chunk_path(1);
        let mut bytes = fs::read(&file).unwrap();
        let last = bytes.len() - 6;
        bytes[last] ^= 1;
        fs::write(&file, bytes).unwrap();
        assert!(matches!(
            log.read_from(Cursor::START),
            Err(MultilogError::Corrupt { .. })
        ));
    }
}
