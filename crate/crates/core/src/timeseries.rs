//! Raw series ingestion, normalisation, windowing, splitting and
//! pseudo-anomaly injection.

use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigkernel::Path;

/// A `len × dim` series stored row-major, with optional 0/1 point labels
/// (1 marks an anomalous time step).
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    values: Vec<f64>,
    len: usize,
    dim: usize,
    point_labels: Option<Vec<u8>>,
}

impl RawSeries {
    pub fn new(
        values: Vec<f64>,
        len: usize,
        dim: usize,
        point_labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if dim == 0 || len == 0 {
            return Err(Error::InsufficientData(format!(
                "empty series ({len}x{dim})"
            )));
        }
        if values.len() != len * dim {
            return Err(Error::DimensionMismatch {
                expected: len * dim,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(labels) = &point_labels {
            if labels.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    got: labels.len(),
                });
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::InvalidArgument("point labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            values,
            len,
            dim,
            point_labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], point_labels: Option<Vec<u8>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), rows.len(), dim, point_labels)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point_labels(&self) -> Option<&[u8]> {
        self.point_labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Option<Vec<u8>>) -> Result<Self> {
        let values = std::mem::take(&mut self.values);
        Self::new(values, self.len, self.dim, labels)
    }

    /// Divide every entry by `scale`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / scale).collect(),
            ..self.clone()
        })
    }

    /// Time steps `[start, end)` with their labels.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len {
            return Err(Error::InvalidArgument(format!(
                "bad slice [{start}, {end}) of a series of length {}",
                self.len
            )));
        }
        Self::new(
            self.values[start * self.dim..end * self.dim].to_vec(),
            end - start,
            self.dim,
            self.point_labels.as_ref().map(|l| l[start..end].to_vec()),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Global max-abs normalisation. Returns the normalised series and the scale
/// it was divided by; an all-zero series is returned as is with scale 1.
pub fn normalise_series(s: &RawSeries) -> (RawSeries, f64) {
    let m = s.max_abs();
    if m == 0.0 || m == 1.0 {
        return (s.clone(), 1.0);
    }
    (s.scaled(m).expect("positive finite scale"), m)
}

/// Labelled windows cut from a series. Label +1 is normal, −1 anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSet {
    windows: Vec<Path>,
    labels: Vec<f64>,
    origins: Vec<usize>,
}

impl WindowSet {
    pub fn new(windows: Vec<Path>, labels: Vec<f64>, origins: Vec<usize>) -> Result<Self> {
        if labels.len() != windows.len() || origins.len() != windows.len() {
            return Err(Error::DimensionMismatch {
                expected: windows.len(),
                got: labels.len().min(origins.len()),
            });
        }
        if let Some(first) = windows.first() {
            if let Some(w) = windows.iter().find(|w| !w.same_shape(first)) {
                return Err(Error::DimensionMismatch {
                    expected: first.as_flat().len(),
                    got: w.as_flat().len(),
                });
            }
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidArgument(
                "window labels must be +1 or -1".into(),
            ));
        }
        Ok(Self {
            windows,
            labels,
            origins,
        })
    }

    pub fn empty() -> Self {
        Self {
            windows: Vec::new(),
            labels: Vec::new(),
            origins: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[Path] {
        &self.windows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            windows: idx.iter().map(|&i| self.windows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            origins: idx.iter().map(|&i| self.origins[i]).collect(),
        }
    }

    /// Windows carrying the given label.
    pub fn with_label(&self, label: f64) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.labels[i] == label)
            .collect();
        self.select(&idx)
    }

    /// Every `step`-th window, always keeping the first.
    pub fn every(&self, step: usize) -> Self {
        let idx: Vec<usize> = (0..self.len()).step_by(step.max(1)).collect();
        self.select(&idx)
    }

    /// Evenly spaced subsample of at most `max` windows.
    pub fn thin(&self, max: usize) -> Self {
        let n = self.len();
        if max == 0 || n <= max {
            return self.clone();
        }
        let idx: Vec<usize> = (0..max).map(|i| i * n / max).collect();
        self.select(&idx)
    }

    pub fn concat(&self, other: &WindowSet) -> Result<Self> {
        let mut windows = self.windows.clone();
        windows.extend_from_slice(&other.windows);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut origins = self.origins.clone();
        origins.extend_from_slice(&other.origins);
        Self::new(windows, labels, origins)
    }
}

/// Overlapping windows starting at `0, stride, 2·stride, …`. A window is
/// labelled −1 when any covered time step carries point label 1.
pub fn window(s: &RawSeries, length: usize, stride: usize) -> Result<WindowSet> {
    if length < 2 {
        return Err(Error::InvalidArgument(format!(
            "window length must be at least 2, got {length}"
        )));
    }
    if stride < 1 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if s.len() < length {
        return Err(Error::InsufficientData(format!(
            "series of length {} is shorter than the window length {length}",
            s.len()
        )));
    }
    let count = (s.len() - length) / stride + 1;
    // prefix counts of anomalous points for O(1) overlap queries
    let mut anomalous = vec![0usize; s.len() + 1];
    if let Some(labels) = s.point_labels() {
        for (t, &l) in labels.iter().enumerate() {
            anomalous[t + 1] = anomalous[t] + l as usize;
        }
    }
    let mut windows = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut origins = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        let end = start + length;
        windows.push(Path::new(
            s.values[start * s.dim..end * s.dim].to_vec(),
            length,
            s.dim,
        )?);
        labels.push(if anomalous[end] > anomalous[start] {
            -1.0
        } else {
            1.0
        });
        origins.push(start);
    }
    WindowSet::new(windows, labels, origins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Spike,
    Scale,
    Noise,
    TrendShift,
    SegmentShuffle,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 5] = [
        AnomalyKind::Spike,
        AnomalyKind::Scale,
        AnomalyKind::Noise,
        AnomalyKind::TrendShift,
        AnomalyKind::SegmentShuffle,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyInjectionConfig {
    pub kinds: Vec<AnomalyKind>,
    pub magnitude: f64,
    pub seed: u64,
    pub count: usize,
}

impl Default for AnomalyInjectionConfig {
    fn default() -> Self {
        Self {
            kinds: AnomalyKind::ALL.to_vec(),
            magnitude: 1.0,
            seed: 0,
            count: 1,
        }
    }
}

impl AnomalyInjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one anomaly kind is required".into(),
            ));
        }
        if !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "injection magnitude must be positive, got {}",
                self.magnitude
            )));
        }
        if self.count < 1 {
            return Err(Error::InvalidArgument(
                "injection count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Value range used to size injected anomalies: peak-to-peak over all input
/// windows, else the largest magnitude, else 1.
fn reference_range(windows: &[Path]) -> f64 {
    let (lo, hi) = windows
        .iter()
        .flat_map(|w| w.as_flat())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi > lo {
        return hi - lo;
    }
    let m = lo.abs().max(hi.abs());
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Random segment `[a, b)` of at least two steps and at most half the window.
fn random_segment(rng: &mut ChaCha8Rng, len: usize) -> (usize, usize) {
    let longest = (len / 2).max(2).min(len);
    let seg = rng.random_range(2..=longest);
    let a = rng.random_range(0..=len - seg);
    (a, a + seg)
}

fn apply_kind(
    kind: AnomalyKind,
    values: &mut [f64],
    len: usize,
    dim: usize,
    magnitude: f64,
    range: f64,
    rng: &mut ChaCha8Rng,
) {
    match kind {
        AnomalyKind::Spike => {
            let t = rng.random_range(0..len);
            let c = rng.random_range(0..dim);
            values[t * dim + c] += magnitude * range;
        }
        AnomalyKind::Scale => {
            let (a, b) = random_segment(rng, len);
            for v in &mut values[a * dim..b * dim] {
                *v *= 1.0 + magnitude;
            }
        }
        AnomalyKind::Noise => {
            let (a, b) = random_segment(rng, len);
            let normal = Normal::new(0.0, magnitude * range).expect("positive std");
            for v in &mut values[a * dim..b * dim] {
                *v += normal.sample(rng);
            }
        }
        AnomalyKind::TrendShift => {
            // ramp from a random start up to the full height at the last step
            let start = rng.random_range(0..len - 1);
            let span = (len - 1 - start) as f64;
            for t in start + 1..len {
                let h = magnitude * range * (t - start) as f64 / span;
                for v in &mut values[t * dim..(t + 1) * dim] {
                    *v += h;
                }
            }
        }
        AnomalyKind::SegmentShuffle => {
            let (a, b) = random_segment(rng, len);
            let mut order: Vec<usize> = (a..b).collect();
            order.shuffle(rng);
            if order.is_sorted() {
                // a shuffle that moved nothing is no anomaly
                order.reverse();
            }
            let rows: Vec<f64> = order
                .iter()
                .flat_map(|&t| values[t * dim..(t + 1) * dim].to_vec())
                .collect();
            values[a * dim..b * dim].copy_from_slice(&rows);
        }
    }
}

/// `cfg.count` windows labelled −1, each a seeded random transform of a
/// randomly chosen input window. The input is not modified.
pub fn inject_pseudo_anomalies(
    normals: &WindowSet,
    cfg: &AnomalyInjectionConfig,
) -> Result<WindowSet> {
    cfg.validate()?;
    if normals.is_empty() {
        return Err(Error::InsufficientData(
            "no windows to derive pseudo-anomalies from".into(),
        ));
    }
    let range = reference_range(normals.windows());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut windows = Vec::with_capacity(cfg.count);
    let mut origins = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let i = rng.random_range(0..normals.len());
        let kind = cfg.kinds[rng.random_range(0..cfg.kinds.len())];
        let source = &normals.windows[i];
        let (len, dim) = (source.len(), source.dim());
        let mut values = source.as_flat().to_vec();
        apply_kind(kind, &mut values, len, dim, cfg.magnitude, range, &mut rng);
        windows.push(Path::new(values, len, dim)?);
        origins.push(normals.origins[i]);
    }
    WindowSet::new(windows, vec![-1.0; cfg.count], origins)
}

/// Seeded random partition into `⌈n·fraction⌉` training windows and the rest.
/// Both parts are kept nonempty. Each part preserves the input order.
pub fn train_val_split(
    normals: &WindowSet,
    fraction: f64,
    seed: u64,
) -> Result<(WindowSet, WindowSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = normals.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("cannot split {n} windows")));
    }
    let n_train = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val) = idx.split_at_mut(n_train);
    train.sort_unstable();
    val.sort_unstable();
    Ok((normals.select(train), normals.select(val)))
}

/// One labelled anomalous stretch of a synthetic series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySegment {
    pub start: usize,
    pub length: usize,
    pub kind: AnomalyKind,
    pub magnitude: f64,
}

/// Smooth multichannel series (three random low-frequency sinusoids per
/// channel plus small Gaussian noise) with the given anomalous segments
/// written in and labelled. Deterministic in `seed`.
///
/// Segment kinds act on every channel of the segment: `spike` adds
/// alternating ±magnitude spikes on every other step and the last one, `scale` multiplies by
/// `1 + magnitude`, `noise` adds Gaussian noise of std `magnitude`,
/// `trend_shift` adds a ramp rising to `magnitude` and `segment_shuffle`
/// reverses then shuffles the time order.
pub fn synthetic_benchmark(
    seed: u64,
    len: usize,
    dim: usize,
    anomalies: &[AnomalySegment],
) -> Result<RawSeries> {
    if len < 500 {
        return Err(Error::InvalidArgument(format!(
            "synthetic series need at least 500 steps, got {len}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "synthetic series need at least one channel".into(),
        ));
    }
    for seg in anomalies {
        if seg.length == 0 || seg.start + seg.length > len || !(seg.magnitude > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad anomaly segment {seg:?}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.02).expect("positive std");
    let tau = std::f64::consts::TAU;
    let components: Vec<[(f64, f64, f64); 3]> = (0..dim)
        .map(|_| {
            [0; 3].map(|_| {
                let period = rng.random_range(40.0..160.0);
                let amplitude = rng.random_range(0.3..1.0);
                let phase = rng.random_range(0.0..tau);
                (tau / period, amplitude, phase)
            })
        })
        .collect();
    let mut values = vec![0.0; len * dim];
    for t in 0..len {
        for (c, comps) in components.iter().enumerate() {
            let smooth: f64 = comps
                .iter()
                .map(|(w, a, p)| a * (w * t as f64 + p).sin())
                .sum();
            values[t * dim + c] = smooth + noise.sample(&mut rng);
        }
    }
    let mut labels = vec![0u8; len];
    for seg in anomalies {
        let (a, b) = (seg.start, seg.start + seg.length);
        labels[a..b].iter_mut().for_each(|l| *l = 1);
        let m = seg.magnitude;
        match seg.kind {
            AnomalyKind::Spike => {
                let spiked = (a..b).filter(|&t| (t - a) % 2 == 0 || t == b - 1);
                for (k, t) in spiked.enumerate() {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    values[t * dim..(t + 1) * dim]
                        .iter_mut()
                        .for_each(|v| *v += sign * m);
                }
            }
            AnomalyKind::Scale => values[a * dim..b * dim]
                .iter_mut()
                .for_each(|v| *v *= 1.0 + m),
            AnomalyKind::Noise => {
                let burst = Normal::new(0.0, m).expect("positive std");
                values[a * dim..b * dim]
                    .iter_mut()
                    .for_each(|v| *v += burst.sample(&mut rng));
            }
            AnomalyKind::TrendShift => {
                for t in a..b {
                    let h = m * (t - a + 1) as f64 / seg.length as f64;
                    values[t * dim..(t + 1) * dim]
                        .iter_mut()
                        .for_each(|v| *v += h);
                }
            }
            AnomalyKind::SegmentShuffle => {
                let mut order: Vec<usize> = (a..b).rev().collect();
                order.shuffle(&mut rng);
                let rows: Vec<f64> = order
                    .iter()
                    .flat_map(|&t| values[t * dim..(t + 1) * dim].to_vec())
                    .collect();
                values[a * dim..b * dim].copy_from_slice(&rows);
            }
        }
    }
    RawSeries::new(values, len, dim, Some(labels))
}

/// Five segments of length 100 spread over the last 60% of a series, one of
/// each kind.
pub fn standard_anomaly_segments(len: usize) -> Vec<AnomalySegment> {
    let first = len * 2 / 5;
    let span = len - first;
    let seg_len = 100;
    let kinds = [
        (AnomalyKind::Spike, 1.5),
        (AnomalyKind::Scale, 2.0),
        (AnomalyKind::Noise, 0.5),
        (AnomalyKind::TrendShift, 3.0),
        (AnomalyKind::SegmentShuffle, 1.0),
    ];
    kinds
        .iter()
        .enumerate()
        .map(|(i, &(kind, magnitude))| AnomalySegment {
            start: first + span * (2 * i + 1) / 10 - seg_len / 2,
            length: seg_len,
            kind,
            magnitude,
        })
        .collect()
}

/// Read a headerless comma-separated series, one row per time step.
pub fn read_series_csv(path: impl AsRef<FsPath>) -> Result<RawSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad number {field:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} holds no rows",
            path.as_ref().display()
        )));
    }
    RawSeries::from_rows(&rows, None)
}

/// Read one 0/1 label per line.
pub fn read_labels_csv(path: impl AsRef<FsPath>) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| match l {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(Error::InvalidArgument(format!(
                "label must be 0 or 1, got {other:?}"
            ))),
        })
        .collect()
}

/// Read a series and, when given, its label file.
pub fn read_series(
    data: impl AsRef<FsPath>,
    labels: Option<impl AsRef<FsPath>>,
) -> Result<RawSeries> {
    let series = read_series_csv(data)?;
    match labels {
        Some(path) => series.with_labels(Some(read_labels_csv(path)?)),
        None => Ok(series),
    }
}

pub fn write_series_csv(s: &RawSeries, path: impl AsRef<FsPath>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for t in 0..s.len() {
        writer.write_record(s.row(t).iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_labels_csv(labels: &[u8], path: impl AsRef<FsPath>) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 2);
    for l in labels {
        text.push_str(if *l == 0 { "0\n" } else { "1\n" });
    }
    std::fs::write(path, text)?;
    Ok(())
}
