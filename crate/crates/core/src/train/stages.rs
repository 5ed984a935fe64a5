//! The three training stages: pitch predictor, DSP vocoder, GAN vocoder.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, info};
use sha2::{Digest, Sha256};

use crate::autodiff::checkpoint::{self, Header};
use crate::autodiff::{clip_grad_norm, AdamState, Graph, ParamStore, Tensor, Var};
use crate::dsp::{dsp_synthesize, NNFilterNets, PitchPredictor};
use crate::error::{Error, Result};
use crate::excitation::{interpolate_f0, noise_source, sine_excitation, PitchContour};
use crate::gan::{
    build_supervision, discriminator_loss, generator_loss, DiscriminatorEnsemble, Generator,
    SupervisionBundle,
};
use crate::par::parallel_map;
use crate::signal::{FrameParams, MelAnalyzer, MelSpectrogram};

use super::config::{ReconTarget, Stage, TrainConfig};
use super::data::{stack_mels, stack_signals, Clip, Corpus, SegmentRef, SegmentSampler};

pub const CSV_HEADER: &str = "step,loss_total,loss_adv,loss_recon,loss_fm,loss_d";

/// One row of the loss log; unused components are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub total: f64,
    pub adv: f64,
    pub recon: f64,
    pub fm: f64,
    pub d: f64,
}

impl LossRow {
    pub fn is_finite(&self) -> bool {
        [self.total, self.adv, self.recon, self.fm, self.d]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub fn loss_csv(rows: &[LossRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.step, r.total, r.adv, r.recon, r.fm, r.d
        );
    }
    s
}

/// Parses a loss log written by [`loss_csv`].
pub fn parse_loss_csv(text: &str) -> Result<Vec<LossRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format("loss log header".into()));
    }
    lines
        .map(|l| {
            let v: Vec<&str> = l.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                v.get(i)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Format(format!("loss log row `{l}`")))
            };
            Ok(LossRow {
                step: num(0)? as usize,
                total: num(1)?,
                adv: num(2)?,
                recon: num(3)?,
                fm: num(4)?,
                d: num(5)?,
            })
        })
        .collect()
}

/// Outcome of one stage run.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub stage: Stage,
    pub rows: Vec<LossRow>,
    /// `(step, held-out metric)`; mel L1 for the vocoders, log-f0 L2 for pitch.
    pub validation: Vec<(usize, f64)>,
    pub checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    /// Discriminator checkpoint of the GAN stage.
    pub discriminator: Option<PathBuf>,
}

impl TrainReport {
    pub fn first_validation(&self) -> Option<f64> {
        self.validation.first().map(|v| v.1)
    }

    pub fn last_validation(&self) -> Option<f64> {
        self.validation.last().map(|v| v.1)
    }

    pub fn best_validation(&self) -> Option<f64> {
        self.validation.iter().map(|v| v.1).reduce(f64::min)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|_| Error::Missing(path.to_path_buf()))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Stateless seed derivation (SplitMix64 finalizer over the mixed words).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean absolute difference over the common frames of two mels.
pub fn mel_l1(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    if a.n_mels != b.n_mels {
        return Err(Error::FrameMismatch(a.n_mels, b.n_mels));
    }
    let n = a.frames().min(b.frames()) * a.n_mels;
    if n == 0 {
        return Err(Error::TooShort {
            len: 0,
            frame_len: 1,
        });
    }
    Ok(a.values[..n]
        .iter()
        .zip(&b.values[..n])
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n as f64)
}

pub fn load_pitch(path: &Path) -> Result<PitchPredictor> {
    let (h, p) = load_model(path, "pitch")?;
    PitchPredictor::from_checkpoint(&h, &p)
}

pub fn load_dsp(path: &Path) -> Result<NNFilterNets> {
    let (h, p) = load_model(path, "dsp")?;
    NNFilterNets::from_checkpoint(&h, &p)
}

/// Generator plus the input switch it was trained with.
pub fn load_generator(path: &Path) -> Result<(Generator, bool)> {
    let (h, p) = load_model(path, "generator")?;
    let tf_s = match h.get("enable_tf_s") {
        Some(_) => h.parse_value("enable_tf_s")?,
        None => true,
    };
    Ok((Generator::from_checkpoint(&h, &p)?, tf_s))
}

fn load_model(path: &Path, model: &str) -> Result<(Header, ParamStore)> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let (h, p) = checkpoint::load(path)?;
    match h.get("model") {
        Some(m) if m == model => Ok((h, p)),
        other => Err(Error::Checkpoint(format!(
            "{} holds a `{}` model, expected `{model}`",
            path.display(),
            other.unwrap_or("?")
        ))),
    }
}

struct Outputs {
    dir: PathBuf,
    prefix: &'static str,
}

impl Outputs {
    fn new(dir: &Path, prefix: &'static str, config: &TrainConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{prefix}_config.txt")), config.resolved())?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prefix,
        })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.prefix))
    }

    fn finish(&self, rows: &[LossRow], validation: &[(usize, f64)]) -> Result<()> {
        std::fs::write(self.path("_loss.csv"), loss_csv(rows))?;
        let mut v = String::from("step,valid\n");
        for (s, x) in validation {
            let _ = writeln!(v, "{s},{x:e}");
        }
        std::fs::write(self.path("_valid.csv"), v)?;
        Ok(())
    }
}

fn check_segment_fits(config: &TrainConfig, corpus: &Corpus) -> Result<SegmentSampler> {
    let hop = FrameParams::default().hop;
    if config.segment_frames * hop > corpus.shortest_train_samples() {
        return Err(Error::Config(format!(
            "segment of {} frames exceeds the shortest clip ({} samples)",
            config.segment_frames,
            corpus.shortest_train_samples()
        )));
    }
    let frames: Vec<usize> = corpus.train.iter().map(Clip::whole_frames).collect();
    SegmentSampler::new(
        &frames,
        config.segment_frames,
        derive_seed(config.seed, corpus.shuffle_seed, 1),
    )
}

fn segment_mel(clip: &Clip, r: SegmentRef, frames: usize) -> MelSpectrogram {
    clip.mel.slice(r.start, frames)
}

fn segment_audio(samples: &[f64], r: SegmentRef, frames: usize) -> &[f64] {
    let hop = FrameParams::default().hop;
    &samples[r.start * hop..(r.start + frames) * hop]
}

fn segment_f0(clip: &Clip, r: SegmentRef, frames: usize) -> Result<PitchContour> {
    PitchContour::new(clip.f0.f0[r.start..r.start + frames].to_vec(), clip.f0.hop)
}

fn clip(store: &mut ParamStore, max_norm: f64) {
    if max_norm > 0.0 {
        let norm = clip_grad_norm(store, max_norm);
        debug!("gradient norm {norm:.4}");
    }
}

/// Pitch predictor on mel; minimizes voiced log-f0 L2 plus voicing BCE.
pub fn train_pitch(config: &TrainConfig, corpus: &Corpus, out: &Path) -> Result<TrainReport> {
    if !corpus.train.iter().any(|c| c.f0.voiced_fraction() > 0.0) {
        return Err(Error::Dataset("corpus has no voiced frames".into()));
    }
    let outputs = Outputs::new(out, "pitch", config)?;
    let mut sampler = check_segment_fits(config, corpus)?;
    let mut net = PitchPredictor::new(config.pitch.clone(), config.seed)?;
    let mut adam = AdamState::new(config.adam, &net.store)?;
    let held = corpus.held_out();
    let validate = |net: &PitchPredictor| -> Result<f64> {
        let mut g = Graph::inference();
        let mel = g.constant(held.mel.to_tensor());
        let (_, l2) = net.loss(&mut g, &net.store, mel, &held.f0.f0)?;
        Ok(g.value(l2).item())
    };
    let s = config.segment_frames;
    let mut rows = Vec::with_capacity(config.steps);
    let mut validation = Vec::new();
    let best_path = outputs.path("_best.ckpt");
    let mut best = f64::INFINITY;
    for step in 0..=config.steps {
        if step % config.validate_every == 0 || step == config.steps {
            let v = validate(&net)?;
            info!("pitch step {step}: held-out log-f0 L2 {v:.5}");
            validation.push((step, v));
            if v < best {
                best = v;
                checkpoint::save(&best_path, &net.header(), &net.store)?;
            }
        }
        if step == config.steps {
            break;
        }
        let batch = sampler.batch(config.batch_size);
        let mels: Vec<_> = batch
            .iter()
            .map(|&r| segment_mel(&corpus.train[r.clip], r, s))
            .collect();
        let mut target = Vec::with_capacity(batch.len() * s);
        for &r in &batch {
            target.extend_from_slice(&corpus.train[r.clip].f0.f0[r.start..r.start + s]);
        }
        let mut g = Graph::new();
        let mel = g.constant(stack_mels(&mels)?);
        let (total, l2) = net.loss(&mut g, &net.store, mel, &target)?;
        let row = LossRow {
            step,
            total: g.value(total).item(),
            recon: g.value(l2).item(),
            ..LossRow::default()
        };
        debug!("pitch {row:?}");
        rows.push(row);
        let grads = g.backward(total)?;
        net.store.zero_grad();
        net.store.accumulate(&g, &grads);
        clip(&mut net.store, config.grad_clip);
        adam.step(&mut net.store)?;
    }
    let path = outputs.path(".ckpt");
    checkpoint::save(&path, &net.header(), &net.store)?;
    outputs.finish(&rows, &validation)?;
    Ok(TrainReport {
        stage: Stage::Pitch,
        rows,
        validation,
        checkpoint: path,
        best_checkpoint: best_path,
        discriminator: None,
    })
}

/// Held-out mel L1 of the DSP vocoder on `clip` with reference f0.
pub fn dsp_validation(nets: &NNFilterNets, clip: &Clip, seed: u64) -> Result<f64> {
    let y = dsp_synthesize(&clip.mel, &clip.f0, nets, seed)?;
    let mel = MelAnalyzer::new(&FrameParams::default())?.log_mel(&y)?;
    mel_l1(&mel, &clip.mel)
}

/// DSP vocoder on reference f0, minimizing log-mel L1 over random segments.
/// Requires the pitch stage to have run first.
pub fn train_dsp(
    config: &TrainConfig,
    corpus: &Corpus,
    pitch_ckpt: &Path,
    out: &Path,
) -> Result<TrainReport> {
    load_pitch(pitch_ckpt)?;
    let outputs = Outputs::new(out, "dsp", config)?;
    let mut sampler = check_segment_fits(config, corpus)?;
    let mut nets = NNFilterNets::new(config.dsp.clone(), config.seed)?;
    let mut adam = AdamState::new(config.adam, &nets.store)?;
    let analyzer = MelAnalyzer::new(&FrameParams::default())?;
    let held = corpus.held_out();
    let valid_seed = derive_seed(config.seed, 2, 0);
    let s = config.segment_frames;
    let fs = nets.config.sample_rate as f64;
    let mut rows = Vec::with_capacity(config.steps);
    let mut validation = Vec::new();
    let best_path = outputs.path("_best.ckpt");
    let mut best = f64::INFINITY;
    for step in 0..=config.steps {
        if step % config.validate_every == 0 || step == config.steps {
            let v = dsp_validation(&nets, held, valid_seed)?;
            info!("dsp step {step}: held-out mel L1 {v:.5}");
            validation.push((step, v));
            if v < best {
                best = v;
                checkpoint::save(&best_path, &nets.header(), &nets.store)?;
            }
        }
        if step == config.steps {
            break;
        }
        let batch = sampler.batch(config.batch_size);
        let mut mels = Vec::new();
        let mut sines = Vec::new();
        let mut noises = Vec::new();
        let mut reals = Vec::new();
        for (i, &r) in batch.iter().enumerate() {
            let clip = &corpus.train[r.clip];
            mels.push(segment_mel(clip, r, s));
            let f0 = interpolate_f0(&segment_f0(clip, r, s)?);
            sines.push(sine_excitation(&f0, nets.config.harmonics, fs)?.samples);
            let seed = derive_seed(config.seed, step as u64, i as u64);
            noises.push(noise_source(f0.len(), seed, nets.config.noise_amplitude)?.samples);
            reals.push(segment_audio(&clip.audio.samples, r, s));
        }
        let mut g = Graph::new();
        let mel = g.constant(stack_mels(&mels)?);
        let sine = g.constant(stack_signals(
            &sines.iter().map(Vec::as_slice).collect::<Vec<_>>(),
        )?);
        let noise = g.constant(stack_signals(
            &noises.iter().map(Vec::as_slice).collect::<Vec<_>>(),
        )?);
        let real = g.constant(stack_signals(&reals)?);
        let y = nets.synthesize_graph(&mut g, &nets.store, mel, sine, noise)?;
        let mel_y = analyzer.log_mel_graph(&mut g, y)?;
        let mel_r = analyzer.log_mel_graph(&mut g, real)?;
        let loss = g.l1_loss(mel_y, mel_r)?;
        let v = g.value(loss).item();
        let row = LossRow {
            step,
            total: v,
            recon: v,
            ..LossRow::default()
        };
        debug!("dsp {row:?}");
        rows.push(row);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("dsp loss at step {step}")));
        }
        let grads = g.backward(loss)?;
        nets.store.zero_grad();
        nets.store.accumulate(&g, &grads);
        clip(&mut nets.store, config.grad_clip);
        adam.step(&mut nets.store)?;
    }
    let path = outputs.path(".ckpt");
    checkpoint::save(&path, &nets.header(), &nets.store)?;
    outputs.finish(&rows, &validation)?;
    Ok(TrainReport {
        stage: Stage::Dsp,
        rows,
        validation,
        checkpoint: path,
        best_checkpoint: best_path,
        discriminator: None,
    })
}

/// Generator input for a whole clip or segment.
fn generator_input(bundle: &SupervisionBundle, clip: &Clip, tf_s: bool) -> MelSpectrogram {
    if tf_s {
        bundle.mel_dsp.clone()
    } else {
        clip.mel.clone()
    }
}

/// Runs `gen` on a whole utterance and returns its samples.
pub fn generate(gen: &Generator, mel: &MelSpectrogram, p1: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::inference();
    let m = g.constant(mel.to_tensor());
    let p = if gen.config.enable_t_s {
        Some(g.constant(Tensor::new(&[1, 1, p1.len()], p1.to_vec())?))
    } else {
        None
    };
    let y = gen.forward(&mut g, &gen.store, m, p)?;
    let out = g.value(y).data().to_vec();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("generator output".into()));
    }
    Ok(out)
}

fn gan_validation(
    gen: &Generator,
    clip: &Clip,
    bundle: &SupervisionBundle,
    tf_s: bool,
) -> Result<f64> {
    let y = generate(gen, &generator_input(bundle, clip, tf_s), &bundle.p1)?;
    let mel = MelAnalyzer::new(&FrameParams::default())?.log_mel_samples(&y);
    mel_l1(&mel, &clip.mel)
}

/// Alternating discriminator and generator updates with the DSP vocoder
/// frozen. The DSP checkpoint file must be byte-identical afterwards.
pub fn train_gan(
    config: &TrainConfig,
    corpus: &Corpus,
    dsp_ckpt: &Path,
    pitch_ckpt: &Path,
    out: &Path,
    jobs: usize,
) -> Result<TrainReport> {
    load_pitch(pitch_ckpt)?;
    let dsp_hash = file_sha256(dsp_ckpt)?;
    let nets = load_dsp(dsp_ckpt)?;
    if nets.config.use_weight_predictor != config.enable_weight_predictor {
        return Err(Error::Config(format!(
            "enable_weight_predictor = {} needs a DSP checkpoint trained with it, {} was not",
            config.enable_weight_predictor,
            dsp_ckpt.display()
        )));
    }
    let outputs = Outputs::new(out, "gan", config)?;
    let mut sampler = check_segment_fits(config, corpus)?;
    let tf_s = config.enable_tf_s;
    let supervise = |(i, clip): &(usize, &Clip)| {
        build_supervision(
            &clip.mel,
            &clip.f0,
            &nets,
            tf_s,
            derive_seed(config.seed, 3, *i as u64),
        )
    };
    let indexed: Vec<(usize, &Clip)> = corpus.train.iter().enumerate().collect();
    let bundles = parallel_map(&indexed, jobs, supervise)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let held = corpus.held_out();
    let held_bundle = supervise(&(usize::MAX, held))?;

    let mut gen = Generator::new(config.generator.clone(), config.seed)?;
    let mut disc =
        DiscriminatorEnsemble::new(config.discriminator.clone(), derive_seed(config.seed, 4, 0))?;
    let mut adam_g = AdamState::new(config.adam, &gen.store)?;
    let mut adam_d = AdamState::new(config.adam, &disc.store)?;
    let analyzer = MelAnalyzer::new(&FrameParams::default())?;
    let s = config.segment_frames;
    let mut rows = Vec::with_capacity(config.steps);
    let mut validation = Vec::new();
    let best_path = outputs.dir.join("generator_best.ckpt");
    let mut best = f64::INFINITY;
    let gen_header = |gen: &Generator| {
        let mut h = gen.header();
        h.set("enable_tf_s", tf_s);
        h.set("recon_target", config.recon_target.name());
        h
    };
    for step in 0..=config.steps {
        if step % config.validate_every == 0 || step == config.steps {
            let v = gan_validation(&gen, held, &held_bundle, tf_s)?;
            info!("gan step {step}: held-out mel L1 {v:.5}");
            validation.push((step, v));
            if v < best {
                best = v;
                checkpoint::save(&best_path, &gen_header(&gen), &gen.store)?;
            }
        }
        if step == config.steps {
            break;
        }
        let batch = sampler.batch(config.batch_size);
        let mut mels = Vec::new();
        let mut p1s = Vec::new();
        let mut reals = Vec::new();
        let mut targets = Vec::new();
        for &r in &batch {
            let (clip, bundle) = (&corpus.train[r.clip], &bundles[r.clip]);
            mels.push(generator_input(bundle, clip, tf_s).slice(r.start, s));
            p1s.push(segment_audio(&bundle.p1, r, s));
            reals.push(segment_audio(&clip.audio.samples, r, s));
            targets.push(match config.recon_target {
                ReconTarget::MelIn => segment_audio(&clip.audio.samples, r, s),
                ReconTarget::MelDsp => segment_audio(&bundle.dsp_audio.samples, r, s),
            });
        }
        let mut g = Graph::new();
        let mel = g.constant(stack_mels(&mels)?);
        let p1 = config
            .enable_t_s
            .then(|| stack_signals(&p1s))
            .transpose()?
            .map(|t| g.constant(t));
        let real = g.constant(stack_signals(&reals)?);
        let fake = gen.forward(&mut g, &gen.store, mel, p1)?;

        // Discriminator step on a detached copy of the generator output.
        let mut gd = Graph::new();
        let fake_d = gd.constant(g.value(fake).clone());
        let real_d = gd.constant(g.value(real).clone());
        let d_real = disc.forward(&mut gd, &disc.store, real_d)?;
        let d_fake = disc.forward(&mut gd, &disc.store, fake_d)?;
        let loss_d = discriminator_loss(&mut gd, &d_real, &d_fake)?;
        let loss_d_value = gd.value(loss_d).item();
        let grads = gd.backward(loss_d)?;
        disc.store.zero_grad();
        disc.store.accumulate(&gd, &grads);
        clip(&mut disc.store, config.grad_clip);
        adam_d.step(&mut disc.store)?;

        // Generator step through the updated, frozen discriminator.
        g.freeze_params(true);
        let d_fake = disc.forward(&mut g, &disc.store, fake)?;
        let d_real = disc.forward(&mut g, &disc.store, real)?;
        g.freeze_params(false);
        let real_features: Vec<Vec<Var>> = d_real.iter().map(|b| b.features.clone()).collect();
        let mel_fake = analyzer.log_mel_graph(&mut g, fake)?;
        let target = g.constant(stack_signals(&targets)?);
        let mel_target = analyzer.log_mel_graph(&mut g, target)?;
        let loss = generator_loss(
            &mut g,
            &d_fake,
            &real_features,
            mel_fake,
            mel_target,
            config.weights,
        )?;
        let row = LossRow {
            step,
            total: g.value(loss.total).item(),
            adv: g.value(loss.adv).item(),
            recon: g.value(loss.recon).item(),
            fm: g.value(loss.fm).item(),
            d: loss_d_value,
        };
        debug!("gan {row:?}");
        rows.push(row);
        if !row.is_finite() {
            return Err(Error::NonFinite(format!("gan losses at step {step}")));
        }
        let grads = g.backward(loss.total)?;
        gen.store.zero_grad();
        gen.store.accumulate(&g, &grads);
        clip(&mut gen.store, config.grad_clip);
        adam_g.step(&mut gen.store)?;
    }
    let path = outputs.dir.join("generator.ckpt");
    checkpoint::save(&path, &gen_header(&gen), &gen.store)?;
    let d_path = outputs.dir.join("discriminator.ckpt");
    checkpoint::save(&d_path, &disc.header(), &disc.store)?;
    outputs.finish(&rows, &validation)?;
    if file_sha256(dsp_ckpt)? != dsp_hash {
        return Err(Error::Checkpoint(format!(
            "{} changed during GAN training",
            dsp_ckpt.display()
        )));
    }
    Ok(TrainReport {
        stage: Stage::Gan,
        rows,
        validation,
        checkpoint: path,
        best_checkpoint: best_path,
        discriminator: Some(d_path),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            LossRow {
                step: 0,
                total: 1.5,
                recon: 1.5,
                ..LossRow::default()
            },
            LossRow {
                step: 1,
                total: 0.1,
                adv: 0.2,
                recon: 0.3,
                fm: 0.4,
                d: 0.5,
            },
        ];
        let text = loss_csv(&rows);
        assert!(text.starts_with("step,loss_total,loss_adv,loss_recon,loss_fm,loss_d\n"));
        assert_eq!(parse_loss_csv(&text).unwrap(), rows);
    }

    #[test]
    fn seeds_differ_by_position() {
        let a = derive_seed(1, 2, 3);
        assert_eq!(a, derive_seed(1, 2, 3));
        assert_ne!(a, derive_seed(1, 3, 2));
        assert_ne!(a, derive_seed(2, 2, 3));
    }
}
