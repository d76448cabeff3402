//! Append-only database of measured transformation results, keyed by
//! canonical key and device.
//!
//! File format: a `feinsum-facts v1` header line, then one record per line
//! with tab-separated fields `key device transform wall_time_s flop_rate
//! recorded_at meta`. `meta` is percent-escaped. Writers hold an advisory
//! lock file and replace the database atomically.

mod roofline;

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};

pub use roofline::{
    arithmetic_intensity, flop_count, footprint_bytes, roofline, roofline_for_ai, DevicePeaks,
    Roofline,
};

use crate::canonicalize::{canonicalize, CanonResult};
use crate::error::{Error, Result};
use crate::model::BatchedEinsum;
use crate::notation::render_key;

const HEADER: &str = "feinsum-facts v1";

/// One stored measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct FactRecord {
    pub canonical_key: String,
    pub device_id: String,
    pub transform_id: String,
    pub wall_time_s: f64,
    pub flop_rate: f64,
    pub recorded_at: DateTime<Utc>,
    pub meta: String,
}

/// A measurement to be recorded; the key and timestamp are filled in by
/// [`FactsDb::record_facts`].
#[derive(Clone, Debug, PartialEq)]
pub struct NewFact {
    pub device_id: String,
    pub transform_id: String,
    pub wall_time_s: f64,
    pub flop_rate: f64,
    pub meta: String,
    /// Defaults to the current time.
    pub recorded_at: Option<DateTime<Utc>>,
}

impl NewFact {
    pub fn new(
        device_id: impl Into<String>,
        transform_id: impl Into<String>,
        wall_time_s: f64,
        flop_rate: f64,
    ) -> Self {
        NewFact {
            device_id: device_id.into(),
            transform_id: transform_id.into(),
            wall_time_s,
            flop_rate,
            meta: String::new(),
            recorded_at: None,
        }
    }
}

/// Best record for a query plus the query's canonicalization, whose maps
/// translate the canonical symbols a stored transform refers to back to
/// the query's own names.
#[derive(Clone, Debug)]
pub struct Retrieved {
    pub best: FactRecord,
    pub canon: CanonResult,
}

fn check_field(name: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidRecord(format!(
            "{name} must be nonempty and free of tabs and line breaks"
        )));
    }
    Ok(())
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(p) = rest.find('%') {
        out.push_str(&rest[..p]);
        let code = rest.get(p + 1..p + 3)?;
        out.push(match code {
            "25" => '%',
            "09" => '\t',
            "0A" => '\n',
            "0D" => '\r',
            _ => return None,
        });
        rest = &rest[p + 3..];
    }
    out.push_str(rest);
    Some(out)
}

impl FactRecord {
    fn validate(&self) -> Result<()> {
        check_field("canonical key", &self.canonical_key)?;
        check_field("device id", &self.device_id)?;
        check_field("transform id", &self.transform_id)?;
        if !(self.wall_time_s.is_finite() && self.wall_time_s > 0.0) {
            return Err(Error::InvalidRecord(format!(
                "wall time must be positive, got {}",
                self.wall_time_s
            )));
        }
        if !(self.flop_rate.is_finite() && self.flop_rate >= 0.0) {
            return Err(Error::InvalidRecord(format!(
                "flop rate must be nonnegative, got {}",
                self.flop_rate
            )));
        }
        Ok(())
    }

    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.canonical_key,
            self.device_id,
            self.transform_id,
            self.wall_time_s,
            self.flop_rate,
            self.recorded_at_text(),
            escape(&self.meta)
        )
    }

    /// The timestamp as stored: RFC 3339, UTC, microsecond precision.
    pub fn recorded_at_text(&self) -> String {
        self.recorded_at
            .to_rfc3339_opts(SecondsFormat::Micros, true)
    }

    fn from_line(line: &str) -> std::result::Result<FactRecord, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [key, device, transform, wall, rate, at, meta] = fields[..] else {
            return Err(format!(
                "expected 7 tab-separated fields, found {}",
                fields.len()
            ));
        };
        let record = FactRecord {
            canonical_key: key.to_string(),
            device_id: device.to_string(),
            transform_id: transform.to_string(),
            wall_time_s: wall
                .parse()
                .map_err(|_| format!("invalid wall time `{wall}`"))?,
            flop_rate: rate
                .parse()
                .map_err(|_| format!("invalid flop rate `{rate}`"))?,
            recorded_at: DateTime::parse_from_rfc3339(at)
                .map_err(|_| format!("invalid timestamp `{at}`"))?
                .with_timezone(&Utc),
            meta: unescape(meta).ok_or_else(|| format!("invalid escape in `{meta}`"))?,
        };
        record.validate().map_err(|e| e.to_string())?;
        Ok(record)
    }
}

/// Handle to a database file. Cheap to clone; holds no open files.
#[derive(Clone, Debug)]
pub struct FactsDb {
    path: PathBuf,
    lock_timeout: Duration,
}

/// Removes the lock file when dropped.
struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

impl FactsDb {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FactsDb {
            path: path.into(),
            lock_timeout: Duration::from_secs(10),
        }
    }

    pub fn with_lock_timeout(mut self, timeout: Duration) -> Self {
        self.lock_timeout = timeout;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn sibling(&self, suffix: &str) -> PathBuf {
        let mut name = self.path.file_name().unwrap_or_default().to_os_string();
        name.push(suffix);
        self.path.with_file_name(name)
    }

    pub fn lock_path(&self) -> PathBuf {
        self.sibling(".lock")
    }

    fn lock(&self) -> Result<LockGuard> {
        let path = self.lock_path();
        let start = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(LockGuard(path)),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if start.elapsed() >= self.lock_timeout {
                        return Err(Error::LockTimeout(path));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Every record in file order. A missing file is an empty database.
    pub fn records(&self) -> Result<Vec<FactRecord>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let bad = |line: usize, message: String| Error::DbFormat {
            path: self.path.clone(),
            line,
            message,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(HEADER) => {}
            Some(other) => return Err(bad(1, format!("unexpected header `{other}`"))),
            None => return Ok(Vec::new()),
        }
        lines
            .enumerate()
            .map(|(k, line)| FactRecord::from_line(line).map_err(|m| bad(k + 2, m)))
            .collect()
    }

    /// Appends records under `e`'s canonical key and returns how many were
    /// written. The file is rewritten through a temporary file and renamed
    /// into place, so a crash leaves either the old or the new contents.
    pub fn record_facts(&self, e: &BatchedEinsum, facts: &[NewFact]) -> Result<usize> {
        let canon = canonicalize(e)?;
        let key = render_key(&canon.canonical);
        let now = Utc::now();
        let records: Vec<FactRecord> = facts
            .iter()
            .map(|f| FactRecord {
                canonical_key: key.clone(),
                device_id: f.device_id.clone(),
                transform_id: f.transform_id.clone(),
                wall_time_s: f.wall_time_s,
                flop_rate: f.flop_rate,
                recorded_at: f.recorded_at.unwrap_or(now),
                meta: f.meta.clone(),
            })
            .collect();
        for r in &records {
            r.validate()?;
        }
        self.append(&records)?;
        Ok(records.len())
    }

    fn append(&self, records: &[FactRecord]) -> Result<()> {
        let _guard = self.lock()?;
        // parse first so a corrupt file is never silently extended
        self.records()?;
        let mut text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        if text.is_empty() {
            text.push_str(HEADER);
            text.push('\n');
        } else if !text.ends_with('\n') {
            text.push('\n');
        }
        for r in records {
            text.push_str(&r.to_line());
            text.push('\n');
        }
        let tmp = self.sibling(&format!(".tmp{}", std::process::id()));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.path)?;
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }
        Ok(())
    }

    /// Records stored under `e`'s canonical key, any device.
    pub fn records_for(&self, e: &BatchedEinsum) -> Result<(CanonResult, Vec<FactRecord>)> {
        let canon = canonicalize(e)?;
        let key = render_key(&canon.canonical);
        let records = self
            .records()?
            .into_iter()
            .filter(|r| r.canonical_key == key)
            .collect();
        Ok((canon, records))
    }

    /// Fastest record for `e` on `device_id`; ties go to the most recent.
    pub fn retrieve(&self, e: &BatchedEinsum, device_id: &str) -> Result<Retrieved> {
        let (canon, records) = self.records_for(e)?;
        let best = records
            .into_iter()
            .filter(|r| r.device_id == device_id)
            .min_by(|a, b| {
                a.wall_time_s
                    .total_cmp(&b.wall_time_s)
                    .then(b.recorded_at.cmp(&a.recorded_at))
            })
            .ok_or_else(|| Error::NotFound {
                key: render_key(&canon.canonical),
                device: device_id.to_string(),
            })?;
        Ok(Retrieved { best, canon })
    }
}
