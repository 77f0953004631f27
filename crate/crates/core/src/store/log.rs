//! Append-only record log.
//!
//! ```text
//! "DVS1"
//! repeated: len: u32 LE | crc32(body): u32 LE | body = type byte + payload
//! ```
//!
//! A torn or corrupt tail is cut off on open; everything before it was
//! acknowledged only after `sync_data` returned.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

/// Record kind and payload.
pub type Frame = (u8, Vec<u8>);

pub const MAGIC: &[u8; 4] = b"DVS1";
pub const RECORD_DEFINITION: u8 = 0;
pub const RECORD_DV: u8 = 1;

const HEADER: usize = 8;

pub fn frame(kind: u8, payload: &[u8], out: &mut Vec<u8>) {
    let len = (payload.len() + 1) as u32;
    let mut h = crc32fast::Hasher::new();
    h.update(&[kind]);
    h.update(payload);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&h.finalize().to_le_bytes());
    out.push(kind);
    out.extend_from_slice(payload);
}

/// Splits a log body (after the magic) into records; returns them and the
/// length of the valid prefix.
pub fn read_frames(buf: &[u8]) -> (Vec<Frame>, usize) {
    let mut out = Vec::new();
    let mut pos = 0;
    while buf.len() - pos >= HEADER {
        let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().expect("4")) as usize;
        let crc = u32::from_le_bytes(buf[pos + 4..pos + 8].try_into().expect("4"));
        if len == 0 || buf.len() - pos - HEADER < len {
            break;
        }
        let body = &buf[pos + HEADER..pos + HEADER + len];
        if crc32fast::hash(body) != crc {
            break;
        }
        out.push((body[0], body[1..].to_vec()));
        pos += HEADER + len;
    }
    (out, pos)
}

#[derive(Debug)]
pub struct LogFile {
    file: File,
    path: PathBuf,
    len: u64,
}

impl LogFile {
    /// Opens or creates the log, returning it with every intact record.
    pub fn open(path: &Path) -> io::Result<(LogFile, Vec<Frame>)> {
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        if buf.len() < MAGIC.len() {
            if !MAGIC.starts_with(&buf) {
                return Err(io::Error::new(io::ErrorKind::InvalidData, format!("{}: not a DVS1 log", path.display())));
            }
            file.set_len(0)?;
            file.seek(SeekFrom::Start(0))?;
            file.write_all(MAGIC)?;
            file.sync_all()?;
            return Ok((LogFile { file, path: path.to_path_buf(), len: MAGIC.len() as u64 }, Vec::new()));
        }
        if &buf[..4] != MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("{}: bad magic", path.display())));
        }
        let (records, valid) = read_frames(&buf[4..]);
        let len = (4 + valid) as u64;
        if len != buf.len() as u64 {
            file.set_len(len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::Start(len))?;
        Ok((LogFile { file, path: path.to_path_buf(), len }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, kind: u8, payload: &[u8]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(payload.len() + HEADER + 1);
        frame(kind, payload, &mut buf);
        self.append_framed(&buf)
    }

    /// Writes already framed bytes and syncs once.
    pub fn append_framed(&mut self, bytes: &[u8]) -> io::Result<()> {
        let res = self.file.write_all(bytes).and_then(|_| self.file.sync_data());
        match res {
            Ok(()) => {
                self.len += bytes.len() as u64;
                Ok(())
            }
            Err(e) => {
                // drop whatever part of the frame made it to disk
                let _ = self.file.set_len(self.len);
                let _ = self.file.seek(SeekFrom::Start(self.len));
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.log");
        {
            let (mut log, recs) = LogFile::open(&p).unwrap();
            assert!(recs.is_empty());
            log.append(RECORD_DV, b"one").unwrap();
            log.append(RECORD_DEFINITION, b"two").unwrap();
        }
        let (_, recs) = LogFile::open(&p).unwrap();
        assert_eq!(recs, vec![(RECORD_DV, b"one".to_vec()), (RECORD_DEFINITION, b"two".to_vec())]);
    }

    #[test]
    fn torn_tail_is_cut() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.log");
        {
            let (mut log, _) = LogFile::open(&p).unwrap();
            log.append(RECORD_DV, b"kept").unwrap();
        }
        let full = std::fs::metadata(&p).unwrap().len();
        let mut extra = Vec::new();
        frame(RECORD_DV, b"lost-in-crash", &mut extra);
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(&extra[..extra.len() - 3]).unwrap();
        drop(f);
        let (mut log, recs) = LogFile::open(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), full);
        log.append(RECORD_DV, b"next").unwrap();
        let (_, recs) = LogFile::open(&p).unwrap();
        assert_eq!(recs[1].1, b"next");
    }

    #[test]
    fn corrupt_crc_stops_replay() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.log");
        {
            let (mut log, _) = LogFile::open(&p).unwrap();
            log.append(RECORD_DV, b"a").unwrap();
            log.append(RECORD_DV, b"b").unwrap();
        }
        let mut bytes = std::fs::read(&p).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xFF;
        std::fs::write(&p, &bytes).unwrap();
        let (_, recs) = LogFile::open(&p).unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.log");
        std::fs::write(&p, b"hello world").unwrap();
        assert!(LogFile::open(&p).is_err());
    }
}
