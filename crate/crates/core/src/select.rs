//! Transductive parameter selection.
//!
//! Two label-free criteria compare classifier outputs on the training set
//! (out-of-fold) with outputs on the unlabeled test set:
//!
//! * class balance: the fraction of non-negative test scores should be 1/2;
//! * distribution match: Pearson correlation between 40-bin histograms of the
//!   train and test scores over their pooled range.
//!
//! Balance acts as a feasibility gate ([`PENALTY_GATE`]); correlation ranks the
//! feasible candidates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::lda::fit_rows;
use crate::data::{Class, TrialSet};
use crate::error::{Error, Result};
use crate::features::CspModel;
use crate::pipeline::config::{CspParams, PipelineConfig};
use crate::preprocess::{window_range, PreprocessConfig, SpatialRef};

pub const N_BINS: usize = 40;
/// Largest class-balance penalty a feasible candidate may have.
pub const PENALTY_GATE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEstimate {
    pub bin_edges: Vec<f64>,
    pub mass: Vec<f64>,
}

/// Normalized 40-bin histogram over `[lo, hi]`; out-of-range scores land in
/// the first or last bin.
pub fn estimate_pdf(scores: &[f64], range: (f64, f64)) -> Result<PdfEstimate> {
    let (lo, hi) = range;
    if scores.is_empty() {
        return Err(Error::invalid("no scores to histogram"));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::invalid(format!("degenerate histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / N_BINS as f64;
    let bin_edges = (0..=N_BINS).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; N_BINS];
    for &s in scores {
        let pos = ((s - lo) / width).floor();
        let bin = if pos.is_nan() || pos < 0.0 {
            0
        } else {
            (pos as usize).min(N_BINS - 1)
        };
        counts[bin] += 1;
    }
    let n = scores.len() as f64;
    let mass = counts.into_iter().map(|c| c as f64 / n).collect();
    Ok(PdfEstimate { bin_edges, mass })
}

/// |P̂(+1) − 0.5| where P̂(+1) is the fraction of scores ≥ 0.
pub fn class_balance_penalty(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("no scores"));
    }
    let pos = scores.iter().filter(|&&s| s >= 0.0).count();
    Ok((pos as f64 / scores.len() as f64 - 0.5).abs())
}

/// Pearson correlation of two histograms' bin masses.
pub fn pdf_correlation(train: &PdfEstimate, test: &PdfEstimate) -> Result<f64> {
    if train.bin_edges != test.bin_edges {
        return Err(Error::invalid("histograms have different bin edges"));
    }
    let flat = |p: &PdfEstimate| p.mass.iter().all(|&m| m == p.mass[0]);
    if flat(train) || flat(test) {
        return Err(Error::CriterionUndefined(
            "flat histogram has zero variance across bins".into(),
        ));
    }
    let n = train.mass.len() as f64;
    let ma = train.mass.iter().sum::<f64>() / n;
    let mb = test.mass.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in train.mass.iter().zip(&test.mass) {
        let (da, db) = (a - ma, b - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Candidate values per axis. Empty axes are filled in by
/// [`SearchSpace::resolve`]: the sliding default grid for bands and windows,
/// the base configuration for channels and m.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub bands_hz: Vec<(f64, f64)>,
    pub windows_s: Vec<(f64, f64)>,
    pub channel_sets: Vec<Vec<usize>>,
    pub m_values: Vec<usize>,
}

/// 2 Hz bands sliding from 8 to 30 Hz in 1 Hz steps, plus 8–35 Hz.
pub fn default_bands(fs: f64) -> Vec<(f64, f64)> {
    let nyquist = fs / 2.0;
    let mut bands: Vec<(f64, f64)> = (8..=28)
        .map(|lo| (lo as f64, lo as f64 + 2.0))
        .filter(|&(_, hi)| hi < nyquist)
        .collect();
    if 35.0 < nyquist {
        bands.push((8.0, 35.0));
    }
    bands
}

/// Windows 2–4 s long (0.5 s steps) sliding from 0.5 s in 0.5 s steps.
pub fn default_windows(duration_s: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for len_steps in 4..=8 {
        let len = len_steps as f64 * 0.5;
        let mut start = 0.5;
        while start + len <= duration_s + 1e-9 {
            out.push((start, start + len));
            start += 0.5;
        }
    }
    out
}

impl SearchSpace {
    /// Full default grid with channels and m taken from the base config.
    pub fn default_grid() -> Self {
        SearchSpace::default()
    }

    /// Copy with every empty axis filled in.
    pub fn resolve(&self, base: &CspParams, fs: f64, duration_s: f64, n_channels: usize) -> SearchSpace {
        fn or<T: Clone>(v: &[T], default: impl FnOnce() -> Vec<T>) -> Vec<T> {
            if v.is_empty() {
                default()
            } else {
                v.to_vec()
            }
        }
        SearchSpace {
            bands_hz: or(&self.bands_hz, || default_bands(fs)),
            windows_s: or(&self.windows_s, || default_windows(duration_s)),
            channel_sets: or(&self.channel_sets, || {
                vec![base.channels.clone().unwrap_or_else(|| (0..n_channels).collect())]
            }),
            m_values: or(&self.m_values, || vec![base.m]),
        }
    }

    pub fn validate(&self, fs: f64, duration_s: f64, n_channels: usize) -> Result<()> {
        for &(lo, hi) in &self.bands_hz {
            if !(lo > 0.0 && lo < hi && hi < fs / 2.0) {
                return Err(Error::config(
                    "search.bands_hz",
                    format!("band ({lo}, {hi}) invalid for Nyquist {}", fs / 2.0),
                ));
            }
        }
        for &(a, b) in &self.windows_s {
            if !(a >= 0.0 && a < b && b <= duration_s + 1e-9) {
                return Err(Error::config(
                    "search.windows_s",
                    format!("window ({a}, {b}) outside 0..{duration_s} s"),
                ));
            }
        }
        for set in &self.channel_sets {
            if set.is_empty() || set.iter().any(|&c| c >= n_channels) {
                return Err(Error::config(
                    "search.channel_sets",
                    format!("channel set {set:?} invalid for {n_channels} channels"),
                ));
            }
        }
        if self.m_values.contains(&0) {
            return Err(Error::config("search.m_values", "m must be >= 1"));
        }
        Ok(())
    }

    pub fn n_candidates(&self) -> usize {
        self.bands_hz.len() * self.windows_s.len() * self.channel_sets.len() * self.m_values.len()
    }

    /// Candidates in enumeration order (band, window, channels, m).
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut out = Vec::with_capacity(self.n_candidates());
        for &band_hz in &self.bands_hz {
            for &window_s in &self.windows_s {
                for channels in &self.channel_sets {
                    for &m in &self.m_values {
                        out.push(Candidate {
                            band_hz,
                            window_s,
                            channels: channels.clone(),
                            m,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub band_hz: (f64, f64),
    pub window_s: (f64, f64),
    pub channels: Vec<usize>,
    pub m: usize,
}

impl Candidate {
    /// `base` with this candidate's CSP parameters.
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        cfg.csp.preprocess.band_hz = Some(self.band_hz);
        cfg.csp.preprocess.window_s = Some(self.window_s);
        cfg.csp.m = self.m;
        cfg.csp.channels = Some(self.channels.clone());
        cfg
    }
}

/// One row of the search report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub index: usize,
    pub band_hz: (f64, f64),
    pub window_s: (f64, f64),
    pub channels: Vec<usize>,
    pub m: usize,
    pub rho: Option<f64>,
    pub penalty: Option<f64>,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub config: PipelineConfig,
    pub winner: usize,
    pub rho: f64,
    pub balance_penalty: f64,
    pub table: Vec<CandidateScore>,
}

impl SearchResult {
    pub fn winning(&self) -> &CandidateScore {
        &self.table[self.winner]
    }
}

/// Sufficient statistics of one trial over contiguous time segments.
struct SegmentMoments {
    /// Σ x xᵀ per segment.
    second: Vec<DMatrix<f64>>,
    /// Σ x per segment.
    first: Vec<DVector<f64>>,
}

/// Per-trial statistics over one window, restricted to a channel subset.
struct WindowStats {
    /// Trace-normalized X Xᵀ (the CSP fitting input).
    normalized: DMatrix<f64>,
    /// Unbiased sample covariance (the feature input).
    covariance: DMatrix<f64>,
}

fn segment_moments(data: &DMatrix<f64>, cuts: &[usize]) -> SegmentMoments {
    let mut second = Vec::with_capacity(cuts.len() - 1);
    let mut first = Vec::with_capacity(cuts.len() - 1);
    for w in cuts.windows(2) {
        let x = data.columns(w[0], w[1] - w[0]);
        second.push(&x * x.transpose());
        first.push(x.column_sum());
    }
    SegmentMoments { second, first }
}

fn window_stats(
    seg: &SegmentMoments,
    segs: std::ops::Range<usize>,
    n: usize,
    channels: &[usize],
) -> Result<WindowStats> {
    let nc = seg.second[0].nrows();
    let mut m = DMatrix::<f64>::zeros(nc, nc);
    let mut s = DVector::<f64>::zeros(nc);
    for k in segs {
        m += &seg.second[k];
        s += &seg.first[k];
    }
    let k = channels.len();
    let ms = DMatrix::from_fn(k, k, |i, j| m[(channels[i], channels[j])]);
    let ss = DVector::from_fn(k, |i, _| s[channels[i]]);
    let tr = ms.trace();
    if !(tr > 0.0) {
        return Err(Error::Degenerate("trial has zero energy in window".into()));
    }
    let nf = n as f64;
    let covariance = (&ms - &ss * ss.transpose() / nf) / (nf - 1.0);
    Ok(WindowStats {
        normalized: ms / tr,
        covariance,
    })
}

fn mean_normalized(stats: &[WindowStats], idx: &[usize]) -> DMatrix<f64> {
    let k = stats[0].normalized.nrows();
    let mut acc = DMatrix::zeros(k, k);
    for &i in idx {
        acc += &stats[i].normalized;
    }
    acc / idx.len() as f64
}

struct Criteria {
    rho: std::result::Result<f64, String>,
    penalty: f64,
}

/// Fits CSP + LDA on the training statistics and compares the score
/// distributions of the training trials and the test trials.
fn evaluate_candidate(
    train_stats: &[WindowStats],
    test_stats: &[WindowStats],
    labels: &[Class],
    m: usize,
) -> Result<Criteria> {
    let (neg, pos): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i] == Class::Neg);
    let csp = CspModel::from_covariances(
        &mean_normalized(train_stats, &neg),
        &mean_normalized(train_stats, &pos),
        m,
    )?;
    let feature = |s: &WindowStats| csp.feature_from_covariance(&s.covariance);
    let train_feats = train_stats.iter().map(|s| feature(s).map(|v| [v])).collect::<Result<Vec<_>>>()?;
    let rows: Vec<&[f64]> = train_feats.iter().map(|f| f.as_slice()).collect();
    let lda = fit_rows(&rows, labels)?;
    let train_scores = rows.iter().map(|r| lda.score_values(r)).collect::<Result<Vec<_>>>()?;
    let test_scores = test_stats
        .iter()
        .map(|s| lda.score_values(&[feature(s)?]))
        .collect::<Result<Vec<_>>>()?;

    let penalty = class_balance_penalty(&test_scores)?;
    let (lo, hi) = train_scores
        .iter()
        .chain(&test_scores)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let rho = estimate_pdf(&train_scores, (lo, hi))
        .and_then(|a| estimate_pdf(&test_scores, (lo, hi)).map(|b| (a, b)))
        .and_then(|(a, b)| pdf_correlation(&a, &b))
        .map_err(|e| e.to_string());
    Ok(Criteria { rho, penalty })
}

/// Applies the spatial reference and band-pass for one band to every trial.
fn filtered(set: &TrialSet, spatial_ref: SpatialRef, band: (f64, f64)) -> Result<Vec<DMatrix<f64>>> {
    let pre = PreprocessConfig {
        band_hz: Some(band),
        spatial_ref,
        ..Default::default()
    };
    let fs = set.sampling_rate_hz();
    set.trials()
        .iter()
        .map(|t| pre.apply_trial(t, fs).map(|t| t.data))
        .collect()
}

/// Transductive search over CSP band, window, channel subset and m.
///
/// Each candidate's CSP + LDA is fitted on the whole training set, which then
/// scores both the training trials and the test trials. An overfitted
/// candidate separates its own training trials far better than the test
/// trials, and the two score histograms disagree. Test labels are never read.
pub fn grid_search(
    train: &TrialSet,
    test: &TrialSet,
    space: &SearchSpace,
    base: &PipelineConfig,
) -> Result<SearchResult> {
    let labels = train
        .known_labels()
        .ok_or_else(|| Error::invalid("grid search needs a fully labeled training set"))?;
    if test.is_empty() {
        return Err(Error::invalid("grid search needs a nonempty test set"));
    }
    if train.channel_labels() != test.channel_labels()
        || train.sampling_rate_hz() != test.sampling_rate_hz()
        || train.n_samples() != test.n_samples()
    {
        return Err(Error::invalid("train and test sets have different geometry"));
    }
    let fs = train.sampling_rate_hz();
    let duration = train.duration_s();
    let space = space.resolve(&base.csp, fs, duration, train.n_channels());
    space.validate(fs, duration, train.n_channels())?;
    if space.n_candidates() == 0 {
        return Err(Error::config("search", "search space is empty"));
    }
    if !(labels.contains(&Class::Neg) && labels.contains(&Class::Pos)) {
        return Err(Error::invalid("grid search needs both classes in the training set"));
    }

    // Segment boundaries shared by every window.
    let n_samples = train.n_samples();
    let ranges = space
        .windows_s
        .iter()
        .map(|&(a, b)| window_range(fs, n_samples, a, b))
        .collect::<Result<Vec<_>>>()?;
    let mut cuts: Vec<usize> = ranges.iter().flat_map(|r| [r.start, r.end]).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let seg_span = |r: &std::ops::Range<usize>| {
        let a = cuts.binary_search(&r.start).unwrap();
        let b = cuts.binary_search(&r.end).unwrap();
        a..b
    };

    let spatial_ref = base.csp.preprocess.spatial_ref;
    let per_channel_m: Vec<(&Vec<usize>, usize)> = space
        .channel_sets
        .iter()
        .flat_map(|c| space.m_values.iter().map(move |&m| (c, m)))
        .collect();

    let per_band: Vec<Vec<Result<Criteria>>> = space
        .bands_hz
        .par_iter()
        .map(|&band| {
            let moments = |set: &TrialSet| -> Result<Vec<SegmentMoments>> {
                Ok(filtered(set, spatial_ref, band)?
                    .iter()
                    .map(|d| segment_moments(d, &cuts))
                    .collect())
            };
            let (train_m, test_m) = match moments(train).and_then(|a| Ok((a, moments(test)?))) {
                Ok(v) => v,
                Err(e) => {
                    let msg = e.to_string();
                    return (0..ranges.len() * per_channel_m.len())
                        .map(|_| Err(Error::invalid(msg.clone())))
                        .collect();
                }
            };
            let mut out = Vec::with_capacity(ranges.len() * per_channel_m.len());
            for r in &ranges {
                let span = seg_span(r);
                for &(channels, m) in &per_channel_m {
                    let stats = |ms: &[SegmentMoments]| {
                        ms.iter()
                            .map(|s| window_stats(s, span.clone(), r.len(), channels))
                            .collect::<Result<Vec<_>>>()
                    };
                    out.push(stats(&train_m).and_then(|tr| {
                        let te = stats(&test_m)?;
                        evaluate_candidate(&tr, &te, &labels, m)
                    }));
                }
            }
            out
        })
        .collect();

    let table: Vec<CandidateScore> = space
        .candidates()
        .into_iter()
        .zip(per_band.into_iter().flatten())
        .enumerate()
        .map(|(index, (c, res))| {
            let (rho, penalty, error) = match res {
                Ok(Criteria { rho: Ok(r), penalty }) => (Some(r), Some(penalty), None),
                Ok(Criteria { rho: Err(e), penalty }) => (None, Some(penalty), Some(e)),
                Err(e) => (None, None, Some(e.to_string())),
            };
            let feasible = matches!((rho, penalty), (Some(_), Some(p)) if p <= PENALTY_GATE);
            CandidateScore {
                index,
                band_hz: c.band_hz,
                window_s: c.window_s,
                channels: c.channels,
                m: c.m,
                rho,
                penalty,
                feasible,
                error,
            }
        })
        .collect();

    let winner = pick_winner(&table).ok_or_else(|| {
        Error::AllCandidatesFailed(
            table
                .iter()
                .map(|c| (c.index, c.error.clone().unwrap_or_default()))
                .collect(),
        )
    })?;
    let row = &table[winner];
    let cand = Candidate {
        band_hz: row.band_hz,
        window_s: row.window_s,
        channels: row.channels.clone(),
        m: row.m,
    };
    Ok(SearchResult {
        config: cand.apply(base),
        winner,
        rho: row.rho.unwrap_or(f64::NAN),
        balance_penalty: row.penalty.unwrap_or(f64::NAN),
        table,
    })
}

/// Highest ρ among feasible rows; failing that, highest ρ − penalty among rows
/// where ρ is defined. Earlier rows win ties.
pub fn pick_winner(table: &[CandidateScore]) -> Option<usize> {
    let best = |key: &dyn Fn(&CandidateScore) -> Option<f64>| {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in table.iter().enumerate() {
            if let Some(v) = key(row) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| i)
    };
    best(&|r| if r.feasible { r.rho } else { None })
        .or_else(|| best(&|r| Some(r.rho? - r.penalty?)))
}
