//! Append-only artefact ledger.
//!
//! `ledger.txt` holds one JSON record per line. Each record names its
//! payload (copied under `artifacts/<id>-<hash16>/payload`), the payload's
//! SHA-256, the parent records it depends on, and the hash of the previous
//! record, so that editing any committed line or payload is detectable.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ArtefactId, AssuranceError};

pub const LEDGER_FILE: &str = "ledger.txt";
const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentRef {
    pub id: ArtefactId,
    pub label: String,
    pub seq: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordBody {
    pub seq: u64,
    pub id: ArtefactId,
    pub stage: u8,
    pub label: String,
    /// 1 for the first record of an (id, label) pair, then counting up.
    pub version: u32,
    /// Payload path relative to the run directory.
    pub payload: String,
    pub sha256: String,
    pub size: u64,
    /// Unix seconds; taken from `SOURCE_DATE_EPOCH` when set.
    pub created_at: u64,
    pub parents: Vec<ParentRef>,
    pub prev_hash: String,
}

impl RecordBody {
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("record serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    #[serde(flatten)]
    pub body: RecordBody,
    pub record_hash: String,
}

pub fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut size = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        size += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), size))
}

fn now() -> u64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return epoch;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Parsed records by 1-based line number; unparseable lines keep their error.
type ParsedLines = Vec<(usize, Result<ArtifactRecord, String>)>;

fn read_records(path: &Path) -> io::Result<ParsedLines> {
    let mut out = Vec::new();
    if !path.exists() {
        return Ok(out);
    }
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((
            i + 1,
            serde_json::from_str(&line).map_err(|e| e.to_string()),
        ));
    }
    Ok(out)
}

/// A run directory's ledger. Single writer.
#[derive(Debug)]
pub struct Ledger {
    dir: PathBuf,
    records: Vec<ArtifactRecord>,
}

impl Ledger {
    /// Opens (or starts) the ledger of `dir`.
    pub fn open(dir: &Path) -> Result<Self, AssuranceError> {
        fs::create_dir_all(dir)?;
        let mut records = Vec::new();
        for (line, r) in read_records(&dir.join(LEDGER_FILE))? {
            records.push(r.map_err(|e| {
                AssuranceError::Integrity(format!("{LEDGER_FILE}:{line}: unreadable record: {e}"))
            })?);
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            records,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records(&self) -> &[ArtifactRecord] {
        &self.records
    }

    pub fn has(&self, id: ArtefactId) -> bool {
        self.records.iter().any(|r| r.body.id == id)
    }

    /// Most recent record of `id`, optionally restricted to one label.
    pub fn latest(&self, id: ArtefactId, label: Option<&str>) -> Option<&ArtifactRecord> {
        self.records
            .iter()
            .rev()
            .find(|r| r.body.id == id && label.is_none_or(|l| r.body.label == l))
    }

    /// Like [`Ledger::latest`] but failing with a dependency-style error.
    pub fn require(
        &self,
        id: ArtefactId,
        label: Option<&str>,
    ) -> Result<&ArtifactRecord, AssuranceError> {
        self.latest(id, label)
            .ok_or_else(|| AssuranceError::Missing {
                artefact: id,
                label: label.map(str::to_string),
            })
    }

    pub fn payload_path(&self, record: &ArtifactRecord) -> PathBuf {
        self.dir.join(&record.body.payload)
    }

    /// Reads a committed payload, checking it against the recorded hash.
    pub fn read_payload(&self, record: &ArtifactRecord) -> Result<Vec<u8>, AssuranceError> {
        let bytes = fs::read(self.payload_path(record))?;
        let hash = hex::encode(Sha256::digest(&bytes));
        if hash != record.body.sha256 {
            return Err(AssuranceError::Integrity(format!(
                "payload of {}[{}] seq {} has hash {hash}, ledger says {}",
                record.body.id, record.body.label, record.body.seq, record.body.sha256
            )));
        }
        Ok(bytes)
    }

    fn latest_parents(&self, ids: &[ArtefactId]) -> Vec<ParentRef> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in self.records.iter().rev() {
            if ids.contains(&r.body.id) && seen.insert((r.body.id, r.body.label.clone())) {
                out.push(parent_ref(r));
            }
        }
        out.sort_by(|a, b| (a.id, &a.label).cmp(&(b.id, &b.label)));
        out
    }

    /// Commits `payload` as artefact `id`. Every input required by `id`'s
    /// stage must already be committed; the latest record of each becomes a
    /// parent, together with any `extra_parents` given as (id, label).
    pub fn record_artifact(
        &mut self,
        id: ArtefactId,
        label: &str,
        payload: &Path,
        extra_parents: &[(ArtefactId, &str)],
    ) -> Result<&ArtifactRecord, AssuranceError> {
        let missing: Vec<ArtefactId> = id
            .required_inputs()
            .iter()
            .copied()
            .filter(|i| !self.has(*i))
            .collect();
        if !missing.is_empty() {
            return Err(AssuranceError::Dependency {
                artefact: id,
                missing,
            });
        }
        let mut parents = self.latest_parents(id.required_inputs());
        for (pid, plabel) in extra_parents {
            let r = self.require(*pid, Some(plabel))?;
            let p = parent_ref(r);
            if !parents.contains(&p) {
                parents.push(p);
            }
        }
        self.append(id, label, payload, parents)
    }

    /// Appends a record without checking stage dependencies. Intended for
    /// building deliberately incomplete ledgers when testing
    /// [`verify_chain`].
    pub fn append_unchecked(
        &mut self,
        id: ArtefactId,
        label: &str,
        payload: &Path,
        parents: Vec<ParentRef>,
    ) -> Result<&ArtifactRecord, AssuranceError> {
        self.append(id, label, payload, parents)
    }

    fn append(
        &mut self,
        id: ArtefactId,
        label: &str,
        payload: &Path,
        parents: Vec<ParentRef>,
    ) -> Result<&ArtifactRecord, AssuranceError> {
        if label.is_empty() || label.contains(char::is_whitespace) {
            return Err(AssuranceError::Usage(format!(
                "artefact label {label:?} must be a non-empty word"
            )));
        }
        if !payload.is_file() {
            return Err(AssuranceError::Usage(format!(
                "payload {} does not exist",
                payload.display()
            )));
        }
        let (sha256, size) = sha256_file(payload)?;
        let rel = format!("artifacts/{id}-{}/payload", &sha256[..16]);
        let dest = self.dir.join(&rel);
        if dest.exists() {
            let (existing, _) = sha256_file(&dest)?;
            if existing != sha256 {
                return Err(AssuranceError::Integrity(format!(
                    "{rel} already holds different content (hash {existing}, new payload {sha256})"
                )));
            }
        } else {
            let parent = dest.parent().expect("payload path has a parent");
            fs::create_dir_all(parent)?;
            let tmp = parent.join("payload.partial");
            fs::copy(payload, &tmp)?;
            fs::rename(&tmp, &dest)?;
        }

        let version = 1 + self
            .records
            .iter()
            .filter(|r| r.body.id == id && r.body.label == label)
            .count() as u32;
        let body = RecordBody {
            seq: self.records.len() as u64,
            id,
            stage: id.stage(),
            label: label.to_string(),
            version,
            payload: rel,
            sha256,
            size,
            created_at: now(),
            parents,
            prev_hash: self
                .records
                .last()
                .map(|r| r.record_hash.clone())
                .unwrap_or_else(|| GENESIS.to_string()),
        };
        let record = ArtifactRecord {
            record_hash: body.hash(),
            body,
        };
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(LEDGER_FILE))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        self.records.push(record);
        Ok(self.records.last().unwrap())
    }
}

fn parent_ref(r: &ArtifactRecord) -> ParentRef {
    ParentRef {
        id: r.body.id,
        label: r.body.label.clone(),
        seq: r.body.seq,
        sha256: r.body.sha256.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFailure {
    /// Ledger line (1-based).
    pub line: usize,
    pub seq: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub records: usize,
    pub failures: Vec<ChainFailure>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn first_failure(&self) -> Option<&ChainFailure> {
        self.failures.first()
    }
}

/// Re-hashes every payload and record and checks links and stage
/// dependencies. Problems are reported, not raised; only an unreadable
/// ledger file is an error.
pub fn verify_chain(dir: &Path) -> Result<VerificationReport, AssuranceError> {
    let path = dir.join(LEDGER_FILE);
    if !path.exists() {
        return Err(AssuranceError::Usage(format!(
            "no ledger at {}",
            path.display()
        )));
    }
    let mut failures = Vec::new();
    let mut fail = |line: usize, seq: Option<u64>, message: String| {
        failures.push(ChainFailure { line, seq, message })
    };
    let mut committed: Vec<ArtifactRecord> = Vec::new();
    let mut prev = GENESIS.to_string();
    let entries = read_records(&path)?;
    let n = entries.len();
    for (line, entry) in entries {
        let rec = match entry {
            Ok(r) => r,
            Err(e) => {
                fail(line, None, format!("unreadable record: {e}"));
                continue;
            }
        };
        let b = &rec.body;
        let seq = Some(b.seq);
        if b.seq != committed.len() as u64 {
            fail(
                line,
                seq,
                format!(
                    "sequence number {} where {} expected",
                    b.seq,
                    committed.len()
                ),
            );
        }
        if b.prev_hash != prev {
            fail(
                line,
                seq,
                "previous-record hash does not match the chain".into(),
            );
        }
        if b.hash() != rec.record_hash {
            fail(
                line,
                seq,
                "record hash does not match record contents".into(),
            );
        }
        if b.stage != b.id.stage() {
            fail(
                line,
                seq,
                format!(
                    "{} belongs to stage {}, recorded as {}",
                    b.id,
                    b.id.stage(),
                    b.stage
                ),
            );
        }
        match sha256_file(&dir.join(&b.payload)) {
            Ok((h, _)) if h == b.sha256 => {}
            Ok((h, _)) => fail(
                line,
                seq,
                format!(
                    "payload {} hash mismatch: file {h}, ledger {}",
                    b.payload, b.sha256
                ),
            ),
            Err(e) => fail(line, seq, format!("payload {} unreadable: {e}", b.payload)),
        }
        for input in b.id.required_inputs() {
            if !committed.iter().any(|r| r.body.id == *input) {
                fail(
                    line,
                    seq,
                    format!("{} committed before its input {input}", b.id),
                );
            }
        }
        for p in &b.parents {
            let ok = committed.iter().any(|r| {
                r.body.seq == p.seq
                    && r.body.id == p.id
                    && r.body.label == p.label
                    && r.body.sha256 == p.sha256
            });
            if !ok {
                fail(
                    line,
                    seq,
                    format!(
                        "parent {}[{}] seq {} not found earlier in the ledger",
                        p.id, p.label, p.seq
                    ),
                );
            }
        }
        prev = rec.record_hash.clone();
        committed.push(rec);
    }
    Ok(VerificationReport {
        records: n,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(dir: &Path, name: &str, content: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, content).unwrap();
        p
    }

    fn scoped(dir: &Path) -> Ledger {
        let mut l = Ledger::open(&dir.join("run")).unwrap();
        for id in [ArtefactId::A, ArtefactId::B, ArtefactId::C, ArtefactId::D] {
            let p = payload(dir, &format!("{id}.txt"), &format!("artefact {id}"));
            l.record_artifact(id, "fixture", &p, &[]).unwrap();
        }
        let p = payload(dir, "E.txt", "allocated requirements");
        l.record_artifact(ArtefactId::E, "requirements", &p, &[])
            .unwrap();
        l
    }

    #[test]
    fn h_with_e_present_commits() {
        let tmp = tempfile::tempdir().unwrap();
        let mut l = scoped(tmp.path());
        let p = payload(tmp.path(), "H.json", "{\"SR1\":0.6}");
        let r = l
            .record_artifact(ArtefactId::H, "requirements", &p, &[])
            .unwrap()
            .clone();
        assert_eq!(r.body.stage, 2);
        assert_eq!(r.body.parents.len(), 1);
        assert_eq!(r.body.parents[0].id, ArtefactId::E);
        assert_eq!(l.payload_path(&r).file_name().unwrap(), "payload");
        assert!(verify_chain(l.dir()).unwrap().passed());
    }

    #[test]
    fn h_without_e_is_dependency_error() {
        let tmp = tempfile::tempdir().unwrap();
        let mut l = Ledger::open(tmp.path()).unwrap();
        let p = payload(tmp.path(), "H.json", "{}");
        match l.record_artifact(ArtefactId::H, "requirements", &p, &[]) {
            Err(AssuranceError::Dependency { artefact, missing }) => {
                assert_eq!(artefact, ArtefactId::H);
                assert_eq!(missing, vec![ArtefactId::E]);
            }
            other => panic!("{other:?}"),
        }
        assert!(l.records().is_empty());
    }

    #[test]
    fn re_recording_same_payload_bumps_version() {
        let tmp = tempfile::tempdir().unwrap();
        let mut l = scoped(tmp.path());
        let p = payload(tmp.path(), "H.json", "same");
        let a = l
            .record_artifact(ArtefactId::H, "req", &p, &[])
            .unwrap()
            .clone();
        let b = l
            .record_artifact(ArtefactId::H, "req", &p, &[])
            .unwrap()
            .clone();
        assert_eq!(a.body.sha256, b.body.sha256);
        assert_eq!(a.body.payload, b.body.payload);
        assert_eq!((a.body.version, b.body.version), (1, 2));
        assert_eq!(b.body.prev_hash, a.record_hash);
        let reopened = Ledger::open(l.dir()).unwrap();
        assert_eq!(reopened.records(), l.records());
    }

    #[test]
    fn tampered_payload_is_flagged() {
        let tmp = tempfile::tempdir().unwrap();
        let l = scoped(tmp.path());
        let victim = l.latest(ArtefactId::C, None).unwrap().clone();
        fs::write(l.payload_path(&victim), "edited").unwrap();
        let report = verify_chain(l.dir()).unwrap();
        assert!(!report.passed());
        let f = report.first_failure().unwrap();
        assert_eq!(f.seq, Some(victim.body.seq));
        assert!(f.message.contains("hash mismatch"));
        assert!(l.read_payload(&victim).is_err());
    }

    #[test]
    fn tampered_record_is_flagged() {
        let tmp = tempfile::tempdir().unwrap();
        let l = scoped(tmp.path());
        let path = l.dir().join(LEDGER_FILE);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"fixture\"", "\"changed\"");
        fs::write(&path, text).unwrap();
        let report = verify_chain(l.dir()).unwrap();
        assert!(report
            .failures
            .iter()
            .any(|f| f.message.contains("record hash")));
    }

    #[test]
    fn stage5_without_verification_plan_is_gap() {
        let tmp = tempfile::tempdir().unwrap();
        let mut l = scoped(tmp.path());
        let p = payload(tmp.path(), "x.json", "{}");
        l.record_artifact(ArtefactId::H, "req", &p, &[]).unwrap();
        for id in [ArtefactId::L, ArtefactId::M, ArtefactId::N, ArtefactId::O] {
            l.record_artifact(id, "plan", &p, &[]).unwrap();
        }
        l.record_artifact(ArtefactId::V, "actor", &p, &[]).unwrap();
        assert!(matches!(
            l.record_artifact(ArtefactId::Z, "general", &p, &[]),
            Err(AssuranceError::Dependency { ref missing, .. }) if missing == &vec![ArtefactId::P]
        ));
        l.append_unchecked(ArtefactId::Z, "general", &p, vec![])
            .unwrap();
        let report = verify_chain(l.dir()).unwrap();
        assert_eq!(report.failures.len(), 1);
        assert!(report.failures[0].message.contains("input P"));
    }

    #[test]
    fn colliding_payload_slot_is_integrity_error() {
        let tmp = tempfile::tempdir().unwrap();
        let mut l = scoped(tmp.path());
        let p = payload(tmp.path(), "H.json", "genuine");
        let r = l
            .record_artifact(ArtefactId::H, "req", &p, &[])
            .unwrap()
            .clone();
        fs::write(l.payload_path(&r), "impostor").unwrap();
        assert!(matches!(
            l.record_artifact(ArtefactId::H, "req", &p, &[]),
            Err(AssuranceError::Integrity(_))
        ));
    }

    #[test]
    fn extra_parent_must_exist() {
        let tmp = tempfile::tempdir().unwrap();
        let mut l = scoped(tmp.path());
        let p = payload(tmp.path(), "H.json", "x");
        assert!(matches!(
            l.record_artifact(ArtefactId::H, "req", &p, &[(ArtefactId::AA, "traces")]),
            Err(AssuranceError::Missing { .. })
        ));
    }
}
