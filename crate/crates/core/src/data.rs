//! Trials, trial sets, the on-disk archive format and train/test splitting.
//!
//! An archive is a directory holding `meta.json` plus one CSV matrix per
//! trial (rows = time samples, columns = channels, no header).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ARCHIVE_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";

/// Two-class label. `Neg` is −1 (hand / left hand), `Pos` is +1 (foot / right hand).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    #[serde(rename = "-1")]
    Neg,
    #[serde(rename = "+1")]
    Pos,
}

impl Class {
    pub fn sign(self) -> f64 {
        match self {
            Class::Neg => -1.0,
            Class::Pos => 1.0,
        }
    }

    /// Sign rule shared by every decision function: a score of exactly 0 is `Pos`.
    pub fn from_score(score: f64) -> Class {
        if score >= 0.0 {
            Class::Pos
        } else {
            Class::Neg
        }
    }

    pub fn flipped(self) -> Class {
        match self {
            Class::Neg => Class::Pos,
            Class::Pos => Class::Neg,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Neg => "-1",
            Class::Pos => "+1",
        }
    }

    /// Parses archive label strings. Task-specific names are mapped onto the
    /// fixed sign convention.
    pub fn parse(s: &str) -> Option<Class> {
        match s.trim().to_ascii_lowercase().as_str() {
            "-1" | "hand" | "left" => Some(Class::Neg),
            "+1" | "1" | "foot" | "right" => Some(Class::Pos),
            _ => None,
        }
    }
}

/// One epoch of multichannel EEG. `data` is channels x samples, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub data: DMatrix<f64>,
    pub label: Option<Class>,
    pub session_id: u32,
    pub trial_index: usize,
}

impl Trial {
    pub fn new(
        data: DMatrix<f64>,
        label: Option<Class>,
        session_id: u32,
        trial_index: usize,
    ) -> Result<Self> {
        let trial = Trial {
            data,
            label,
            session_id,
            trial_index,
        };
        trial.validate()?;
        Ok(trial)
    }

    fn validate(&self) -> Result<()> {
        if self.data.nrows() < 1 || self.data.ncols() < 2 {
            return Err(Error::invalid(format!(
                "trial needs >= 1 channel and >= 2 samples, got {}x{}",
                self.data.nrows(),
                self.data.ncols()
            )));
        }
        if self.session_id < 1 {
            return Err(Error::invalid("session_id must be >= 1"));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trial contains non-finite samples"));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    /// Same metadata, new data matrix.
    pub fn with_data(&self, data: DMatrix<f64>) -> Trial {
        Trial {
            data,
            label: self.label,
            session_id: self.session_id,
            trial_index: self.trial_index,
        }
    }
}

/// Ordered trials sharing one geometry, grouped into contiguous sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    trials: Vec<Trial>,
    sampling_rate_hz: f64,
    channel_labels: Vec<String>,
}

impl TrialSet {
    pub fn new(
        trials: Vec<Trial>,
        sampling_rate_hz: f64,
        channel_labels: Vec<String>,
    ) -> Result<Self> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(Error::invalid("sampling rate must be positive"));
        }
        if let Some(first) = trials.first() {
            let (nc, ns) = (first.n_channels(), first.n_samples());
            if channel_labels.len() != nc {
                return Err(Error::DimensionMismatch {
                    expected: channel_labels.len(),
                    actual: nc,
                });
            }
            let mut last_session = 0;
            for t in &trials {
                t.validate()?;
                if t.n_channels() != nc || t.n_samples() != ns {
                    return Err(Error::invalid(format!(
                        "trial shape {}x{} differs from {}x{}",
                        t.n_channels(),
                        t.n_samples(),
                        nc,
                        ns
                    )));
                }
                if t.session_id < last_session {
                    return Err(Error::invalid(
                        "session ids must be nondecreasing in trial order",
                    ));
                }
                last_session = t.session_id;
            }
        }
        Ok(TrialSet {
            trials,
            sampling_rate_hz,
            channel_labels,
        })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn n_channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.trials.first().map_or(0, Trial::n_samples)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sampling_rate_hz
    }

    pub fn labels(&self) -> Vec<Option<Class>> {
        self.trials.iter().map(|t| t.label).collect()
    }

    /// Labels of a fully labeled set; `None` if any trial is unlabeled.
    pub fn known_labels(&self) -> Option<Vec<Class>> {
        self.trials.iter().map(|t| t.label).collect()
    }

    /// Distinct session ids in recording order.
    pub fn session_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.trials.iter().map(|t| t.session_id).collect();
        ids.dedup();
        ids
    }

    /// Index range of each session, in recording order.
    pub fn session_ranges(&self) -> Vec<(u32, std::ops::Range<usize>)> {
        let mut out: Vec<(u32, std::ops::Range<usize>)> = Vec::new();
        for (i, t) in self.trials.iter().enumerate() {
            match out.last_mut() {
                Some((id, r)) if *id == t.session_id => r.end = i + 1,
                _ => out.push((t.session_id, i..i + 1)),
            }
        }
        out
    }

    /// Trials at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> TrialSet {
        TrialSet {
            trials: indices.iter().map(|&i| self.trials[i].clone()).collect(),
            sampling_rate_hz: self.sampling_rate_hz,
            channel_labels: self.channel_labels.clone(),
        }
    }

    /// Copy with every label removed.
    pub fn without_labels(&self) -> TrialSet {
        let mut out = self.clone();
        for t in &mut out.trials {
            t.label = None;
        }
        out
    }

    /// Copy with labels replaced (length must match).
    pub fn relabeled(&self, labels: &[Option<Class>]) -> Result<TrialSet> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: labels.len(),
            });
        }
        let mut out = self.clone();
        for (t, &l) in out.trials.iter_mut().zip(labels) {
            t.label = l;
        }
        Ok(out)
    }

    /// Applies `f` to every trial's data matrix.
    pub fn map_data<F>(&self, f: F) -> Result<TrialSet>
    where
        F: Fn(&Trial) -> Result<DMatrix<f64>>,
    {
        let trials = self
            .trials
            .iter()
            .map(|t| Ok(t.with_data(f(t)?)))
            .collect::<Result<Vec<_>>>()?;
        TrialSet::new(trials, self.sampling_rate_hz, self.channel_labels.clone())
    }

    /// Concatenates two sets with identical geometry.
    pub fn concat(&self, other: &TrialSet) -> Result<TrialSet> {
        if self.channel_labels != other.channel_labels
            || self.sampling_rate_hz != other.sampling_rate_hz
        {
            return Err(Error::invalid("cannot concatenate sets with different geometry"));
        }
        let mut trials = self.trials.clone();
        trials.extend(other.trials.iter().cloned());
        TrialSet::new(trials, self.sampling_rate_hz, self.channel_labels.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// First ⌈fraction·N⌉ trials in recording order.
    Prefix,
    /// First ⌈fraction·S⌉ whole sessions.
    BySession,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub mode: SplitMode,
}

impl SplitSpec {
    pub fn prefix(train_fraction: f64) -> Self {
        SplitSpec {
            train_fraction,
            mode: SplitMode::Prefix,
        }
    }

    pub fn by_session(train_fraction: f64) -> Self {
        SplitSpec {
            train_fraction,
            mode: SplitMode::BySession,
        }
    }

    /// Number of training trials this spec takes from `set`.
    pub fn train_len(&self, set: &TrialSet) -> Result<usize> {
        let f = self.train_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::config(
                "train_fraction",
                format!("must lie in (0, 1], got {f}"),
            ));
        }
        let n = match self.mode {
            SplitMode::Prefix => ceil_fraction(f, set.len()),
            SplitMode::BySession => {
                let ranges = set.session_ranges();
                let k = ceil_fraction(f, ranges.len());
                if k == 0 {
                    0
                } else {
                    ranges[k - 1].1.end
                }
            }
        };
        Ok(n)
    }
}

/// ⌈f·n⌉, tolerant of the representation error in products like 0.8·280.
pub(crate) fn ceil_fraction(f: f64, n: usize) -> usize {
    let x = f * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Partitions `set` into leading train and trailing test trials.
pub fn split(set: &TrialSet, spec: &SplitSpec) -> Result<(TrialSet, TrialSet)> {
    let k = spec.train_len(set)?;
    if k == 0 {
        return Err(Error::config("train_fraction", "training set would be empty"));
    }
    if k >= set.len() {
        return Err(Error::config("train_fraction", "test set would be empty"));
    }
    let train: Vec<usize> = (0..k).collect();
    let test: Vec<usize> = (k..set.len()).collect();
    Ok((set.subset(&train), set.subset(&test)))
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveMeta {
    version: u32,
    sampling_rate_hz: f64,
    channel_labels: Vec<String>,
    sessions: Vec<SessionMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionMeta {
    id: u32,
    trials: Vec<TrialEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrialEntry {
    file: String,
    label: Option<String>,
}

fn trial_file_name(session: u32, index: usize) -> String {
    format!("s{session:02}_t{index:04}.csv")
}

/// Writes `set` as an archive directory at `path` (created if missing).
pub fn save_archive(set: &TrialSet, path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    let mut sessions: Vec<SessionMeta> = Vec::new();
    for (id, range) in set.session_ranges() {
        let mut entries = Vec::with_capacity(range.len());
        for (pos, trial) in set.trials()[range].iter().enumerate() {
            let file = trial_file_name(id, pos);
            let file_path = path.join(&file);
            fs::write(&file_path, matrix_to_csv(&trial.data))
                .map_err(|e| Error::io(&file_path, e))?;
            entries.push(TrialEntry {
                file,
                label: trial.label.map(|c| c.as_str().to_string()),
            });
        }
        sessions.push(SessionMeta {
            id,
            trials: entries,
        });
    }
    let meta = ArchiveMeta {
        version: ARCHIVE_VERSION,
        sampling_rate_hz: set.sampling_rate_hz(),
        channel_labels: set.channel_labels().to_vec(),
        sessions,
    };
    let meta_path = path.join(META_FILE);
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

// Rust's shortest round-trip float formatting: exact, and always >= 9 significant
// digits whenever the value needs them.
fn matrix_to_csv(data: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(data.len() * 20);
    for s in 0..data.ncols() {
        for c in 0..data.nrows() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:?}", data[(c, s)]);
        }
        out.push('\n');
    }
    out
}

fn archive_err(file: &Path, message: impl Into<String>) -> Error {
    Error::Archive {
        file: file.to_path_buf(),
        message: message.into(),
    }
}

fn parse_csv(file: &Path, text: &str, n_channels: usize) -> Result<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut rows = 0;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                archive_err(file, format!("line {}: cannot parse `{field}`", line_no + 1))
            })?;
            if !v.is_finite() {
                return Err(archive_err(
                    file,
                    format!("line {}: non-finite value `{field}`", line_no + 1),
                ));
            }
            values.push(v);
            cols += 1;
        }
        if cols != n_channels {
            return Err(archive_err(
                file,
                format!(
                    "channel count mismatch: line {} has {cols} columns, metadata declares {n_channels} channels",
                    line_no + 1
                ),
            ));
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(archive_err(file, "trial needs at least 2 samples"));
    }
    // Row-major samples x channels is column-major channels x samples.
    Ok(DMatrix::from_vec(n_channels, rows, values))
}

/// Reads an archive directory written by [`save_archive`] (or by hand).
pub fn load_archive(path: &Path) -> Result<TrialSet> {
    let meta_path = path.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            archive_err(&meta_path, "missing metadata file")
        } else {
            Error::io(&meta_path, e)
        }
    })?;
    let meta: ArchiveMeta = serde_json::from_str(&text)
        .map_err(|e| archive_err(&meta_path, format!("malformed metadata: {e}")))?;
    if meta.version != ARCHIVE_VERSION {
        return Err(archive_err(
            &meta_path,
            format!("unknown format version {}", meta.version),
        ));
    }
    if !(meta.sampling_rate_hz.is_finite() && meta.sampling_rate_hz > 0.0) {
        return Err(archive_err(&meta_path, "sampling_rate_hz must be positive"));
    }
    let n_channels = meta.channel_labels.len();
    if n_channels == 0 {
        return Err(archive_err(&meta_path, "no channel labels"));
    }

    let mut trials = Vec::new();
    let mut n_samples: Option<usize> = None;
    let mut last_session = 0;
    for session in &meta.sessions {
        if session.id < 1 || session.id < last_session {
            return Err(archive_err(
                &meta_path,
                format!("session id {} out of order or < 1", session.id),
            ));
        }
        last_session = session.id;
        for (pos, entry) in session.trials.iter().enumerate() {
            let file: PathBuf = path.join(&entry.file);
            let body = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let data = parse_csv(&file, &body, n_channels)?;
            match n_samples {
                None => n_samples = Some(data.ncols()),
                Some(n) if n != data.ncols() => {
                    return Err(archive_err(
                        &file,
                        format!("sample count {} differs from {n}", data.ncols()),
                    ))
                }
                _ => {}
            }
            let label = match &entry.label {
                None => None,
                Some(s) => Some(Class::parse(s).ok_or_else(|| {
                    archive_err(&meta_path, format!("unknown label `{s}` for {}", entry.file))
                })?),
            };
            trials.push(Trial {
                data,
                label,
                session_id: session.id,
                trial_index: pos,
            });
        }
    }
    TrialSet::new(trials, meta.sampling_rate_hz, meta.channel_labels)
        .map_err(|e| archive_err(&meta_path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_set(n: usize, sessions: u32) -> TrialSet {
        let per = n / sessions as usize;
        let trials = (0..n)
            .map(|i| {
                let data = DMatrix::from_fn(3, 4, |c, s| (i * 100 + c * 10 + s) as f64 * 0.1);
                let label = if i % 2 == 0 { Class::Neg } else { Class::Pos };
                Trial::new(data, Some(label), (i / per) as u32 + 1, i % per).unwrap()
            })
            .collect();
        TrialSet::new(trials, 100.0, vec!["C3".into(), "Cz".into(), "C4".into()]).unwrap()
    }

    #[test]
    fn prefix_split_counts_for_280_trials() {
        let set = toy_set(280, 4);
        for (f, k) in [(0.8, 224), (0.6, 168), (0.3, 84), (0.2, 56), (0.1, 28)] {
            let (train, test) = split(&set, &SplitSpec::prefix(f)).unwrap();
            assert_eq!(train.len(), k, "fraction {f}");
            assert_eq!(test.len(), 280 - k);
        }
    }

    #[test]
    fn by_session_split_takes_whole_sessions() {
        let set = toy_set(240, 4);
        let (train, test) = split(&set, &SplitSpec::by_session(0.25)).unwrap();
        assert_eq!((train.len(), test.len()), (60, 180));
        assert!(train.trials().iter().all(|t| t.session_id == 1));
    }

    #[test]
    fn split_rejects_empty_sides() {
        let set = toy_set(10, 1);
        assert!(split(&set, &SplitSpec::prefix(1.0)).is_err());
        assert!(split(&set, &SplitSpec::prefix(0.0)).is_err());
        assert!(split(&set, &SplitSpec::by_session(1.0)).is_err());
    }

    #[test]
    fn trial_rejects_bad_shapes_and_values() {
        assert!(Trial::new(DMatrix::zeros(2, 1), None, 1, 0).is_err());
        assert!(Trial::new(DMatrix::zeros(0, 5), None, 1, 0).is_err());
        let mut m = DMatrix::zeros(2, 3);
        m[(1, 1)] = f64::NAN;
        assert!(Trial::new(m, None, 1, 0).is_err());
    }

    #[test]
    fn sessions_must_be_nondecreasing() {
        let a = Trial::new(DMatrix::zeros(1, 3), None, 2, 0).unwrap();
        let b = Trial::new(DMatrix::zeros(1, 3), None, 1, 0).unwrap();
        assert!(TrialSet::new(vec![a, b], 10.0, vec!["x".into()]).is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!(Class::parse("-1"), Some(Class::Neg));
        assert_eq!(Class::parse("+1"), Some(Class::Pos));
        assert_eq!(Class::parse("Left"), Some(Class::Neg));
        assert_eq!(Class::parse("foot"), Some(Class::Pos));
        assert_eq!(Class::parse("0"), None);
        assert_eq!(Class::from_score(0.0), Class::Pos);
        assert_eq!(Class::from_score(-0.1), Class::Neg);
    }

    #[test]
    fn archive_round_trip_and_null_labels() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy_set(2, 1).without_labels();
        save_archive(&set, dir.path()).unwrap();
        let meta = fs::read_to_string(dir.path().join(META_FILE)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&meta).unwrap();
        assert!(v["sessions"][0]["trials"][0]["label"].is_null());
        let back = load_archive(dir.path()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.n_channels(), 3);
    }

    #[test]
    fn single_trial_archive_has_one_matrix_file() {
        let dir = tempfile::tempdir().unwrap();
        save_archive(&toy_set(1, 1), dir.path()).unwrap();
        let csvs = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
            .count();
        assert_eq!(csvs, 1);
    }

    #[test]
    fn load_reports_channel_mismatch_with_file_name() {
        let dir = tempfile::tempdir().unwrap();
        save_archive(&toy_set(2, 1), dir.path()).unwrap();
        let victim = dir.path().join(trial_file_name(1, 1));
        fs::write(&victim, "1,2\n3,4\n5,6\n7,8\n").unwrap();
        let err = load_archive(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("channel count mismatch"), "{msg}");
        assert!(msg.contains("s01_t0001.csv"), "{msg}");
    }

    #[test]
    fn load_reports_missing_meta_bad_version_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_archive(dir.path()).unwrap_err().to_string();
        assert!(err.contains("meta.json") && err.contains("missing"), "{err}");

        save_archive(&toy_set(2, 1), dir.path()).unwrap();
        let victim = dir.path().join(trial_file_name(1, 0));
        fs::write(&victim, "1,2,3\nNaN,0,0\n").unwrap();
        let err = load_archive(dir.path()).unwrap_err().to_string();
        assert!(err.contains("non-finite") && err.contains("s01_t0000.csv"), "{err}");

        let meta_path = dir.path().join(META_FILE);
        let meta = fs::read_to_string(&meta_path).unwrap();
        fs::write(&meta_path, meta.replace("\"version\": 1", "\"version\": 7")).unwrap();
        let err = load_archive(dir.path()).unwrap_err().to_string();
        assert!(err.contains("unknown format version 7"), "{err}");
    }
}
