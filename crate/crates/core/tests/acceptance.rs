//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Everything runs inside one test so the expensive training corpus and
//! checkpoints are shared between the training, MCD and ablation checks.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use dspgan::autodiff::{Graph, Tensor};
use dspgan::dsp::{ltv_filter, split_features, DspConfig, ImpulseResponseFrames, NNFilterNets};
use dspgan::excitation::sine_excitation;
use dspgan::gan::{discriminator_loss, generator_loss, BranchOutput, LossWeights};
use dspgan::gradsuite::{composite_suite, op_suite};
use dspgan::train::{
    ablation_matrix, copy_synth, generate_corpus, train_dsp, train_gan, train_pitch, ConfigFile,
    Corpus, CorpusSpec, DatasetManifest, F0Source, Stage, TrainConfig, VocoderSet,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Board {
    results: Vec<(usize, bool)>,
}

impl Board {
    fn run(&mut self, id: usize, name: &str, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let outcome =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let (pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let _ = writeln!(
            std::io::stderr(),
            "criterion {id} {}: {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        self.results.push((id, pass));
    }
}

// ---------------------------------------------------------------- 1

fn gradient_integrity() -> Outcome {
    let t = Instant::now();
    let mut entries = op_suite(1e-5, 0).map_err(|e| e.to_string())?;
    entries.extend(composite_suite(1e-5, 8, 0).map_err(|e| e.to_string())?);
    let elapsed = t.elapsed();
    let worst = entries
        .iter()
        .max_by(|a, b| {
            a.report
                .max_relative_error
                .total_cmp(&b.report.max_relative_error)
        })
        .expect("entries");
    let failing: Vec<String> = entries
        .iter()
        .filter(|e| !(e.report.max_relative_error < 1e-4))
        .map(|e| format!("{}={:.3e}", e.name, e.report.max_relative_error))
        .collect();
    let has_generator = entries.iter().any(|e| e.name.contains("generator"));
    check(
        failing.is_empty() && has_generator && elapsed < Duration::from_secs(120),
        format!(
            "{} checks, worst {} {:.3e}, failing [{}], {:.1}s",
            entries.len(),
            worst.name,
            worst.report.max_relative_error,
            failing.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf[..=x.len() / 2].iter().map(|c| c.norm_sqr()).collect()
}

fn excitation_correctness() -> Outcome {
    let t = Instant::now();
    let fs = 24000usize;
    let mut notes = Vec::new();
    for f0 in [60usize, 100, 220, 440] {
        let e = sine_excitation(&vec![f0 as f64; fs], 200, fs as f64).map_err(|e| e.to_string())?;
        // One second at an integer f0: harmonic k lands on bin k·f0.
        let p = power_spectrum(&e.samples);
        let k_top = 200.min(fs / 2 / f0);
        let peak = p.iter().cloned().fold(0.0, f64::max);
        for k in 1..=k_top {
            let bin = k * f0;
            if bin == fs / 2 {
                // sin(π n) vanishes at every sample.
                continue;
            }
            let lo = p[bin - 1].max(p[bin + 1]);
            if !(p[bin] > 0.5 * peak && p[bin] > 1e6 * lo) {
                return Err(format!("f0 {f0}: no clean peak at harmonic {k}"));
            }
        }
        // The band between the last sounding harmonic and Nyquist.
        let last = (1..=k_top).rev().find(|k| k * f0 < fs / 2).unwrap();
        let above: f64 = p[last * f0 + 1..].iter().sum();
        let db = 10.0 * (above.max(1e-300) / peak).log10();
        if !(db < -60.0) {
            return Err(format!("f0 {f0}: {db:.1} dB above the last harmonic"));
        }
        notes.push(format!("{f0}Hz {last} harmonics {db:.0}dB"));
    }
    // Voiced, unvoiced, voiced.
    let mut f0 = vec![150.0; 3000];
    f0.extend(vec![0.0; 2000]);
    f0.extend(vec![180.0; 3000]);
    let e = sine_excitation(&f0, 200, fs as f64).map_err(|e| e.to_string())?;
    let silent = e.samples[3000..5000].iter().all(|&v| v == 0.0);
    let voiced = e.samples[..3000].iter().any(|&v| v != 0.0);
    let elapsed = t.elapsed();
    check(
        silent && voiced && elapsed < Duration::from_secs(30),
        format!(
            "{}; unvoiced exactly zero {silent}; {:.1}s",
            notes.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn split_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut coords = 0usize;
    for _ in 0..1000 {
        let shape = [
            rng.gen_range(1..3),
            rng.gen_range(1..9),
            rng.gen_range(1..17),
        ];
        let n = shape.iter().product();
        let scale = 10f64.powi(rng.gen_range(-3..4));
        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let mut g = Graph::inference();
        let hv = g.constant(Tensor::new(&shape, h.clone()).unwrap());
        let wv = g.constant(Tensor::new(&shape, w).unwrap());
        let (sp, ap) = split_features(&mut g, hv, wv).map_err(|e| e.to_string())?;
        let (sp, ap) = (g.value(sp).data(), g.value(ap).data());
        for i in 0..n {
            if sp[i] + ap[i] != h[i] {
                return Err(format!(
                    "sp + ap != h at {i}: {} + {} vs {}",
                    sp[i], ap[i], h[i]
                ));
            }
        }
        coords += n;
    }
    let config = DspConfig {
        use_weight_predictor: false,
        hidden: 16,
        ..DspConfig::default()
    };
    let nets = NNFilterNets::new(config.clone(), 9).map_err(|e| e.to_string())?;
    let frames = 12;
    let mel: Vec<f64> = (0..config.n_mels * frames)
        .map(|_| rng.gen_range(-11.0..2.0))
        .collect();
    let mut g = Graph::inference();
    let mel = g.constant(Tensor::new(&[1, config.n_mels, frames], mel).unwrap());
    let out = nets
        .filters(&mut g, &nets.store, mel)
        .map_err(|e| e.to_string())?;
    let half = g.value(out.weights).data().iter().all(|&w| w == 0.5);
    let equal = g.value(out.periodic).data() == g.value(out.aperiodic).data();
    check(
        half && equal,
        format!(
            "{coords} coordinates exact; without weight predictor w = 0.5 {half}, sp = ap {equal}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn dense_fir(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| (0..h.len().min(t + 1)).map(|j| h[j] * x[t - j]).sum())
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn ltv_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (frames, hop, ir_len) = (40, 120, 64);
    let noise = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let x = noise(&mut rng, frames * hop);

    let mut delta = vec![0.0; frames * ir_len];
    for n in 0..frames {
        delta[n * ir_len] = 1.0;
    }
    let irs = ImpulseResponseFrames::new(ir_len, delta).unwrap();
    let y = ltv_filter(&x, &irs, hop).map_err(|e| e.to_string())?;
    let identity = max_abs_diff(&y, &x);

    let h: Vec<f64> = (0..ir_len)
        .map(|j| rng.gen_range(-1.0..1.0) * (-(j as f64) / 12.0).exp())
        .collect();
    let irs = ImpulseResponseFrames::new(ir_len, h.repeat(frames)).unwrap();
    let y = ltv_filter(&x, &irs, hop).map_err(|e| e.to_string())?;
    let oracle = dense_fir(&x, &h);
    let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let fir = max_abs_diff(&y, &oracle) / scale;

    let irs = ImpulseResponseFrames::new(ir_len, noise(&mut rng, frames * ir_len)).unwrap();
    let x2 = noise(&mut rng, frames * hop);
    let (a, b) = (0.7, -1.9);
    let mix: Vec<f64> = x.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
    let y_mix = ltv_filter(&mix, &irs, hop).map_err(|e| e.to_string())?;
    let y1 = ltv_filter(&x, &irs, hop).map_err(|e| e.to_string())?;
    let y2 = ltv_filter(&x2, &irs, hop).map_err(|e| e.to_string())?;
    let sum: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
    let linear = max_abs_diff(&y_mix, &sum);

    check(
        identity < 1e-9 && fir < 1e-6 && linear < 1e-9,
        format!("identity {identity:.2e}, dense FIR relative {fir:.2e}, linearity {linear:.2e}"),
    )
}

// ---------------------------------------------------------------- 5

fn branches(g: &mut Graph, score: f64, features: &[Tensor]) -> Vec<BranchOutput> {
    (0..3)
        .map(|b| BranchOutput {
            score: g.constant(Tensor::full(&[2, 1, 7 + b], score)),
            features: features.iter().map(|f| g.constant(f.clone())).collect(),
        })
        .collect()
}

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let feats: Vec<Tensor> = (0..2)
        .map(|i| {
            let n = 2 * 4 * (5 + i);
            Tensor::new(
                &[2, 4, 5 + i],
                (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap()
        })
        .collect();
    let mel = Tensor::new(
        &[1, 80, 6],
        (0..480).map(|_| rng.gen_range(-11.0..2.0)).collect(),
    )
    .unwrap();

    let mut g = Graph::inference();
    let real = branches(&mut g, 1.0, &feats);
    let fake = branches(&mut g, 0.0, &feats);
    let l_d = discriminator_loss(&mut g, &real, &fake).map_err(|e| e.to_string())?;
    let l_d = g.value(l_d).item();

    let mut g = Graph::inference();
    let real = branches(&mut g, 1.0, &feats);
    let fake = branches(&mut g, 1.0, &feats);
    let real_features: Vec<_> = real.iter().map(|b| b.features.clone()).collect();
    let m1 = g.constant(mel.clone());
    let m2 = g.constant(mel.clone());
    let l_g = generator_loss(
        &mut g,
        &fake,
        &real_features,
        m1,
        m2,
        LossWeights::default(),
    )
    .map_err(|e| e.to_string())?;
    let l_g = g.value(l_g.total).item();

    // Away from the optimum every weighted term is its weight times the
    // unweighted term, bit for bit.
    let mut mismatches = 0;
    let mut unit = None;
    for (recon, fm) in [(1.0, 1.0), (45.0, 2.0), (0.3, 7.5), (1e3, 1e-3)] {
        let mut g = Graph::inference();
        let real = branches(&mut g, 0.8, &feats);
        let shifted: Vec<Tensor> = feats
            .iter()
            .map(|f| {
                Tensor::new(f.shape(), f.data().iter().map(|v| v * 0.9 + 0.1).collect()).unwrap()
            })
            .collect();
        let fake = branches(&mut g, 0.3, &shifted);
        let real_features: Vec<_> = real.iter().map(|b| b.features.clone()).collect();
        let mf = g.constant(
            Tensor::new(mel.shape(), mel.data().iter().map(|v| v + 0.25).collect()).unwrap(),
        );
        let mt = g.constant(mel.clone());
        let l = generator_loss(
            &mut g,
            &fake,
            &real_features,
            mf,
            mt,
            LossWeights { recon, fm },
        )
        .map_err(|e| e.to_string())?;
        let parts = (
            g.value(l.adv).item(),
            g.value(l.recon).item(),
            g.value(l.fm).item(),
        );
        let (adv1, r1, f1) = *unit.get_or_insert(parts);
        if parts.0 != adv1 || parts.1 != recon * r1 || parts.2 != fm * f1 {
            mismatches += 1;
        }
        if g.value(l.total).item() != (parts.0 + parts.1) + parts.2 {
            mismatches += 1;
        }
    }
    check(
        l_d == 0.0 && l_g == 0.0 && mismatches == 0,
        format!("L_D {l_d}, L_G {l_g}, weight-scaling mismatches {mismatches}"),
    )
}

// ---------------------------------------------------------------- 6, 7, 8

struct Trained {
    corpus: Corpus,
    dir: PathBuf,
    file: ConfigFile,
    pitch: PathBuf,
    dsp: PathBuf,
    generator: Option<PathBuf>,
}

fn desk_config() -> ConfigFile {
    ConfigFile::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/desk.cfg")).unwrap()
}

fn prepare(dir: &Path) -> Result<Trained, String> {
    let manifest = generate_corpus(&dir.join("corpus"), &CorpusSpec::default(), 1)
        .map_err(|e| e.to_string())?;
    let corpus = Corpus::load(
        &DatasetManifest::load(&manifest).map_err(|e| e.to_string())?,
        1,
    )
    .map_err(|e| e.to_string())?;
    let file = desk_config();
    let pitch = train_pitch(
        &TrainConfig::from_file(&file, Stage::Pitch).unwrap(),
        &corpus,
        &dir.join("pitch"),
    )
    .map_err(|e| e.to_string())?;
    Ok(Trained {
        corpus,
        dir: dir.to_path_buf(),
        file,
        pitch: pitch.checkpoint,
        dsp: PathBuf::new(),
        generator: None,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn training_progress(t: &mut Trained) -> Outcome {
    let start = Instant::now();
    let dsp = train_dsp(
        &TrainConfig::from_file(&t.file, Stage::Dsp).unwrap(),
        &t.corpus,
        &t.pitch,
        &t.dir.join("dsp"),
    )
    .map_err(|e| e.to_string())?;
    t.dsp = dsp.checkpoint.clone();
    let (s0, v0) = dsp.validation[0];
    let (sn, vn) = *dsp.validation.last().unwrap();
    let dsp_drop = 1.0 - vn / v0;

    let mut drops = Vec::new();
    let mut steps = 0;
    for seed in [0u64, 1, 2] {
        let mut f = t.file.clone();
        f.set_in(Stage::Gan, "seed", seed);
        let config = TrainConfig::from_file(&f, Stage::Gan).unwrap();
        steps = config.steps;
        let report = train_gan(
            &config,
            &t.corpus,
            &t.dsp,
            &t.pitch,
            &t.dir.join(format!("gan{seed}")),
            1,
        )
        .map_err(|e| e.to_string())?;
        let rows = &report.rows;
        let tail = &rows[rows.len().saturating_sub(20)..];
        let late = tail.iter().map(|r| r.recon).sum::<f64>() / tail.len() as f64;
        drops.push(1.0 - late / rows[0].recon);
        if seed == 0 {
            t.generator = Some(report.checkpoint.clone());
        }
    }
    let gan_drop = median(drops.clone());
    let elapsed = start.elapsed();
    check(
        s0 == 0
            && sn <= 2000
            && dsp_drop >= 0.5
            && steps <= 3000
            && gan_drop >= 0.4
            && elapsed < Duration::from_secs(30 * 60),
        format!(
            "dsp held-out mel L1 {v0:.3} -> {vn:.3} at step {sn} ({:.0}% drop); \
             gan recon drop over {steps} steps per seed [{}], median {:.0}%; {:.0}s",
            100.0 * dsp_drop,
            drops
                .iter()
                .map(|d| format!("{:.0}%", 100.0 * d))
                .collect::<Vec<_>>()
                .join(", "),
            100.0 * gan_drop,
            elapsed.as_secs_f64()
        ),
    )
}

fn directional_mcd(t: &Trained) -> Outcome {
    let generator = t.generator.as_ref().ok_or("no trained generator")?;
    let models = VocoderSet::load(generator, &t.dsp, None).map_err(|e| e.to_string())?;
    let held = t.corpus.held_out();
    let c = copy_synth(&held.audio, &models, &F0Source::Reference, 0).map_err(|e| e.to_string())?;
    check(
        c.mcd_gan.is_finite() && c.mcd_gan <= c.mcd_dsp,
        format!(
            "{}: gan {:.2} dB, dsp-only {:.2} dB",
            held.name, c.mcd_gan, c.mcd_dsp
        ),
    )
}

fn ablation(t: &Trained) -> Outcome {
    let mut f = t.file.clone();
    for (stage, steps) in [(Stage::Pitch, 40), (Stage::Dsp, 80), (Stage::Gan, 60)] {
        f.set_in(stage, "steps", steps);
        f.set_in(stage, "validate_every", 20);
    }
    let runs =
        ablation_matrix(&f, &t.corpus, &t.dir.join("ablation"), 1).map_err(|e| e.to_string())?;
    let names: Vec<&str> = runs.iter().map(|r| r.spec.name).collect();
    let finite = runs.iter().all(|r| {
        !r.report.rows.is_empty()
            && r.report.rows.iter().all(|row| row.is_finite())
            && r.report.validation.iter().all(|v| v.1.is_finite())
    });
    let mut hashes: Vec<&str> = runs.iter().map(|r| r.generator_sha256.as_str()).collect();
    hashes.sort_unstable();
    hashes.dedup();
    let mut configs = 0;
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            configs += usize::from(a.config != b.config);
        }
    }
    check(
        names == ["full", "no_ts", "no_tfs", "no_wp"] && finite && hashes.len() == 4 && configs == 6,
        format!(
            "runs {names:?}, all finite {finite}, distinct checkpoints {}, distinct config pairs {configs}/6",
            hashes.len()
        ),
    )
}

// ---------------------------------------------------------------- 9

const TINY: &str = "\
batch_size = 2
segment_frames = 8
validate_every = 5
grad_clip = 1.0
[pitch]
steps = 10
pitch_hidden = 16
[dsp]
steps = 10
hidden = 16
[gan]
steps = 6
initial_channels = 16
upsample_channels = 16,8,4
resblock_kernels = 3
resblock_dilations = 1,3
disc_channels = 4,8,8
";

fn cli(cwd: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dspgan"))
        .args(args)
        .current_dir(cwd)
        .env("DSPGAN_LOG", "quiet")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{:?} exited {}: {}",
            args,
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

const SCRIPT: &[&[&str]] = &[
    &[
        "generate-corpus",
        "--out",
        "corpus",
        "--train-clips",
        "3",
        "--valid-clips",
        "1",
        "--min-seconds",
        "1.0",
        "--max-seconds",
        "1.3",
        "--seed",
        "4",
    ],
    &[
        "extract-mel",
        "corpus/clips/clip000.wav",
        "corpus/clips/clip003.wav",
        "--out",
        "mel",
    ],
    &["extract-f0", "corpus/clips/clip000.wav", "--out", "f0"],
    &[
        "synth-excitation",
        "--f0",
        "const:110",
        "--seconds",
        "0.5",
        "--out",
        "exc",
    ],
    &[
        "synth-excitation",
        "--f0",
        "const:110",
        "--seconds",
        "0.5",
        "--source",
        "noise",
        "--seed",
        "2",
        "--out",
        "noise",
    ],
    &[
        "train",
        "pitch",
        "--manifest",
        "corpus/manifest.txt",
        "--config",
        "tiny.cfg",
        "--seed",
        "1",
        "--out",
        "pitch",
    ],
    &[
        "train",
        "dsp",
        "--manifest",
        "corpus/manifest.txt",
        "--config",
        "tiny.cfg",
        "--pitch",
        "pitch/pitch.ckpt",
        "--seed",
        "1",
        "--out",
        "dsp",
    ],
    &[
        "train",
        "gan",
        "--manifest",
        "corpus/manifest.txt",
        "--config",
        "tiny.cfg",
        "--pitch",
        "pitch/pitch.ckpt",
        "--dsp",
        "dsp/dsp.ckpt",
        "--seed",
        "1",
        "--out",
        "gan",
    ],
    &[
        "dsp-synth",
        "corpus/clips/clip003.wav",
        "--dsp",
        "dsp/dsp.ckpt",
        "--out",
        "dspsynth",
    ],
    &[
        "copy-synth",
        "corpus/clips/clip003.wav",
        "--generator",
        "gan/generator.ckpt",
        "--dsp",
        "dsp/dsp.ckpt",
        "--f0-source",
        "predictor",
        "--pitch",
        "pitch/pitch.ckpt",
        "--out",
        "copy",
    ],
    &["mcd", "corpus/clips/clip003.wav", "copy/clip003_gan.wav"],
    &[
        "spectrogram-dump",
        "corpus/clips/clip003.wav",
        "copy/clip003_gan.wav",
        "--out",
        "pgm",
    ],
    &[
        "grad-check",
        "--per-tensor",
        "1",
        "--threshold",
        "1",
        "--out",
        "grad",
    ],
    &[
        "ablation-matrix",
        "--config",
        "tiny.cfg",
        "--manifest",
        "corpus/manifest.txt",
        "--seed",
        "1",
        "--out",
        "ablation",
    ],
];

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn reproducibility(dir: &Path) -> Outcome {
    let mut runs = Vec::new();
    for name in ["first", "second"] {
        let root = dir.join(name);
        std::fs::create_dir_all(&root).unwrap();
        std::fs::write(root.join("tiny.cfg"), TINY).unwrap();
        let mut stdout = Vec::new();
        for args in SCRIPT {
            stdout.push(cli(&root, args)?);
        }
        runs.push((stdout, tree(&root)));
    }
    let (a, b) = (&runs[0], &runs[1]);
    let commands: std::collections::BTreeSet<&str> = SCRIPT.iter().map(|a| a[0]).collect();
    let differing_stdout: Vec<&str> = SCRIPT
        .iter()
        .zip(a.0.iter().zip(&b.0))
        .filter(|(_, (x, y))| x != y)
        .map(|(s, _)| s[0])
        .collect();
    let differing_files: Vec<String> =
        a.1.keys()
            .chain(b.1.keys())
            .filter(|k| a.1.get(*k) != b.1.get(*k))
            .map(|k| k.display().to_string())
            .collect();
    let kinds = |ext: &str| {
        a.1.keys()
            .filter(|k| k.extension().is_some_and(|e| e == ext))
            .count()
    };
    check(
        differing_stdout.is_empty() && differing_files.is_empty() && kinds("ckpt") > 0 && kinds("pgm") > 0,
        format!(
            "{} commands, {} files ({} checkpoints, {} wavs, {} pgm); differing stdout {:?}, differing files {:?}",
            commands.len(),
            a.1.len(),
            kinds("ckpt"),
            kinds("wav"),
            kinds("pgm"),
            differing_stdout,
            differing_files
        ),
    )
}

#[test]
fn acceptance() {
    let mut board = Board {
        results: Vec::new(),
    };
    board.run(1, "gradient integrity", gradient_integrity);
    board.run(2, "excitation correctness", excitation_correctness);
    board.run(3, "feature split identity", split_identity);
    board.run(4, "LTV filter laws", ltv_laws);
    board.run(5, "loss identities", loss_identities);

    let dir = tempfile::tempdir().unwrap();
    match prepare(dir.path()) {
        Ok(mut trained) => {
            board.run(6, "desk training progress", || {
                training_progress(&mut trained)
            });
            board.run(7, "directional MCD", || directional_mcd(&trained));
            board.run(8, "ablation matrix", || ablation(&trained));
        }
        Err(e) => {
            for (id, name) in [
                (6, "desk training progress"),
                (7, "directional MCD"),
                (8, "ablation matrix"),
            ] {
                board.run(id, name, || {
                    Err(format!("corpus or pitch stage failed: {e}"))
                });
            }
        }
    }
    board.run(9, "reproducibility", || {
        reproducibility(&dir.path().join("cli"))
    });

    let failed: Vec<usize> = board.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
