//! Dataset manifests, in-memory clips and segment sampling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::dsp::extract_f0_reference;
use crate::error::{Error, Result};
use crate::excitation::PitchContour;
use crate::par::parallel_map;
use crate::signal::{
    load_wav, resample, FrameParams, MelAnalyzer, MelSpectrogram, Sidecar, SidecarKind, Waveform,
    SAMPLE_RATE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }
}

/// What to do with audio that is not at the model rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatePolicy {
    Resample,
    Reject,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub wav: PathBuf,
    pub f0: Option<PathBuf>,
    pub split: Split,
}

/// Clip list in a plain text file:
///
/// ```text
/// sample_rate_policy = resample
/// shuffle_seed = 0
/// train  clips/a.wav  clips/a.f0
/// valid  clips/b.wav  -
/// ```
///
/// Relative paths are resolved against the manifest's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub rate_policy: RatePolicy,
    pub shuffle_seed: u64,
}

impl DatasetManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = DatasetManifest {
            entries: Vec::new(),
            rate_policy: RatePolicy::Resample,
            shuffle_seed: 0,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Dataset(format!("manifest line {}: {what}", i + 1));
            if let Some((k, v)) = line.split_once('=') {
                match (k.trim(), v.trim()) {
                    ("sample_rate_policy", "resample") => m.rate_policy = RatePolicy::Resample,
                    ("sample_rate_policy", "reject") => m.rate_policy = RatePolicy::Reject,
                    ("shuffle_seed", v) => {
                        m.shuffle_seed = v.parse().map_err(|_| bad("bad shuffle_seed"))?
                    }
                    _ => return Err(bad(&format!("unknown setting `{line}`"))),
                }
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(bad("expected `split wav f0|-`"));
            }
            let split = match cols[0] {
                "train" => Split::Train,
                "valid" => Split::Valid,
                other => return Err(bad(&format!("unknown split `{other}`"))),
            };
            let f0 = (cols[2] != "-").then(|| base.join(cols[2]));
            m.entries.push(ManifestEntry {
                wav: base.join(cols[1]),
                f0,
                split,
            });
        }
        m.check()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::Missing(path.to_path_buf()))?;
        let m = Self::parse(&text, path.parent().unwrap_or(Path::new(".")))?;
        for e in &m.entries {
            for p in std::iter::once(&e.wav).chain(e.f0.as_ref()) {
                if !p.exists() {
                    return Err(Error::Missing(p.clone()));
                }
            }
        }
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Dataset("manifest lists no clips".into()));
        }
        for e in self.entries.iter().filter(|e| e.split == Split::Valid) {
            if self
                .entries
                .iter()
                .any(|o| o.split == Split::Train && o.wav == e.wav)
            {
                return Err(Error::Dataset(format!(
                    "{} is in both splits",
                    e.wav.display()
                )));
            }
        }
        Ok(())
    }

    /// Text form with paths written relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut s = String::new();
        let policy = match self.rate_policy {
            RatePolicy::Resample => "resample",
            RatePolicy::Reject => "reject",
        };
        let _ = writeln!(s, "sample_rate_policy = {policy}");
        let _ = writeln!(s, "shuffle_seed = {}", self.shuffle_seed);
        for e in &self.entries {
            let f0 = e.f0.as_deref().map(rel).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "{}\t{}\t{}", e.split.name(), rel(&e.wav), f0);
        }
        s
    }
}

/// One utterance with its analysis features.
#[derive(Clone, Debug)]
pub struct Clip {
    pub name: String,
    pub audio: Waveform,
    pub mel: MelSpectrogram,
    pub f0: PitchContour,
}

impl Clip {
    pub fn from_audio(
        name: impl Into<String>,
        audio: Waveform,
        f0: Option<PitchContour>,
    ) -> Result<Self> {
        let params = FrameParams::default();
        let mel = MelAnalyzer::new(&params)?.log_mel(&audio)?;
        let f0 = match f0 {
            Some(c) => fit_contour(c, mel.frames())?,
            None => extract_f0_reference(&audio, params.hop)?,
        };
        Ok(Self {
            name: name.into(),
            audio,
            mel,
            f0,
        })
    }

    /// Frames whose full `hop` samples lie inside the audio.
    pub fn whole_frames(&self) -> usize {
        self.audio.len() / FrameParams::default().hop
    }
}

/// Pads with unvoiced frames or truncates an external contour that is off
/// by at most two frames.
fn fit_contour(c: PitchContour, frames: usize) -> Result<PitchContour> {
    if c.frames().abs_diff(frames) > 2 {
        return Err(Error::FrameMismatch(c.frames(), frames));
    }
    let mut f0 = c.f0;
    f0.resize(frames, 0.0);
    PitchContour::new(f0, c.hop)
}

/// Train and validation clips held in memory.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<Clip>,
    pub valid: Vec<Clip>,
    pub shuffle_seed: u64,
}

impl Corpus {
    pub fn load(manifest: &DatasetManifest, jobs: usize) -> Result<Self> {
        let loaded = parallel_map(&manifest.entries, jobs, |e| {
            load_clip(e, manifest.rate_policy)
        });
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for (e, clip) in manifest.entries.iter().zip(loaded) {
            match e.split {
                Split::Train => train.push(clip?),
                Split::Valid => valid.push(clip?),
            }
        }
        if train.is_empty() {
            return Err(Error::Dataset("no training clips".into()));
        }
        if valid.is_empty() {
            return Err(Error::Dataset("no validation clips".into()));
        }
        Ok(Self {
            train,
            valid,
            shuffle_seed: manifest.shuffle_seed,
        })
    }

    pub fn shortest_train_samples(&self) -> usize {
        self.train.iter().map(|c| c.audio.len()).min().unwrap_or(0)
    }

    /// Fixed held-out clip used for validation.
    pub fn held_out(&self) -> &Clip {
        &self.valid[0]
    }
}

fn load_clip(e: &ManifestEntry, policy: RatePolicy) -> Result<Clip> {
    let mut audio = load_wav(&e.wav)?;
    if audio.sample_rate != SAMPLE_RATE {
        match policy {
            RatePolicy::Resample => audio = resample(&audio, SAMPLE_RATE)?,
            RatePolicy::Reject => return Err(Error::UnsupportedRate(audio.sample_rate)),
        }
    }
    if audio.len() < SAMPLE_RATE as usize {
        return Err(Error::Dataset(format!(
            "{} is shorter than one second",
            e.wav.display()
        )));
    }
    let f0 = match &e.f0 {
        Some(p) => {
            let s = Sidecar::load(p, SidecarKind::F0)?;
            Some(PitchContour::new(s.values, FrameParams::default().hop)?)
        }
        None => None,
    };
    let name = e
        .wav
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Clip::from_audio(name, audio, f0)
}

/// Segment position: clip index and first frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentRef {
    pub clip: usize,
    pub start: usize,
}

/// Draws fixed-length segments so that every clip is visited once per epoch.
#[derive(Clone, Debug)]
pub struct SegmentSampler {
    rng: ChaCha8Rng,
    limits: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
    coverage: Vec<u64>,
}

impl SegmentSampler {
    /// `whole_frames[i]` is the number of complete frames in clip `i`.
    pub fn new(whole_frames: &[usize], segment_frames: usize, seed: u64) -> Result<Self> {
        if whole_frames.is_empty() {
            return Err(Error::Dataset("no clips to sample".into()));
        }
        if let Some(short) = whole_frames.iter().position(|&f| f < segment_frames) {
            return Err(Error::Dataset(format!(
                "clip {short} has {} frames, fewer than the {segment_frames}-frame segment",
                whole_frames[short]
            )));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            limits: whole_frames.iter().map(|&f| f - segment_frames).collect(),
            order: Vec::new(),
            pos: 0,
            epoch: 0,
            coverage: vec![0; whole_frames.len()],
        })
    }

    pub fn next_segment(&mut self) -> SegmentRef {
        if self.pos == self.order.len() {
            self.order = (0..self.limits.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let clip = self.order[self.pos];
        self.pos += 1;
        self.coverage[clip] += 1;
        let start = self.rng.gen_range(0..=self.limits[clip]);
        SegmentRef { clip, start }
    }

    pub fn batch(&mut self, n: usize) -> Vec<SegmentRef> {
        (0..n).map(|_| self.next_segment()).collect()
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Segments drawn from each clip.
    pub fn coverage(&self) -> &[u64] {
        &self.coverage
    }
}

/// `[B, n_mels, S]` input batch from per-segment mels.
pub fn stack_mels(mels: &[MelSpectrogram]) -> Result<Tensor> {
    let first = mels
        .first()
        .ok_or_else(|| Error::Dataset("empty batch".into()))?;
    let (m, f) = (first.n_mels, first.frames());
    let mut data = Vec::with_capacity(mels.len() * m * f);
    for mel in mels {
        if mel.frames() != f || mel.n_mels != m {
            return Err(Error::FrameMismatch(mel.frames(), f));
        }
        data.extend_from_slice(mel.to_tensor().data());
    }
    Tensor::new(&[mels.len(), m, f], data)
}

/// `[B, 1, T]` batch from equally long signals.
pub fn stack_signals(signals: &[&[f64]]) -> Result<Tensor> {
    let t = signals.first().map(|s| s.len()).unwrap_or(0);
    if signals.iter().any(|s| s.len() != t) {
        return Err(Error::Dataset("ragged signal batch".into()));
    }
    let data: Vec<f64> = signals.iter().flat_map(|s| s.iter().copied()).collect();
    Tensor::new(&[signals.len(), 1, t], data)
}
