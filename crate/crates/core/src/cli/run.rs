use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use dspgan::dsp::dsp_synthesize;
use dspgan::excitation::{interpolate_f0, noise_source, sine_excitation, PitchContour};
use dspgan::gradsuite::run_suite;
use dspgan::par::parallel_map;
use dspgan::signal::{
    load_wav, mel_matrix_text, mel_mcd, resample, spectrogram_pgm, write_wav, Codec, FrameParams,
    MelAnalyzer, MelSpectrogram, Sidecar, SidecarKind, Waveform, SAMPLE_RATE,
};
use dspgan::train::{
    ablation_matrix, copy_synth, file_sha256, generate_corpus, load_dsp, load_pitch, train_dsp,
    train_gan, train_pitch, ConfigFile, Corpus, CorpusSpec, DatasetManifest, F0Source, Stage,
    TrainConfig, TrainReport, VocoderSet,
};

use super::args::{Command, Common, ExcitationSource, F0Args, StageArg};

pub enum Failure {
    Usage(String),
    Runtime(dspgan::Error),
    /// Ran to completion but a checked bound was violated.
    Check(Value),
}

impl From<dspgan::Error> for Failure {
    fn from(e: dspgan::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<Value, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn print_resolved(command: &str, common: &Common, extra: &[(&str, String)]) {
    let mut s = format!("# resolved config\ncommand = {command}\n");
    let _ = writeln!(s, "seed = {}", common.seed());
    let _ = writeln!(s, "out = {}", common.out.display());
    let _ = writeln!(s, "jobs = {}", common.jobs());
    for (k, v) in extra {
        let _ = writeln!(s, "{k} = {v}");
    }
    eprint!("{s}");
}

fn f0_source_name(s: &F0Source) -> String {
    match s {
        F0Source::Predictor => "predictor".into(),
        F0Source::Reference => "reference".into(),
        F0Source::File(p) => format!("file:{}", p.display()),
        F0Source::Const(f) => format!("const:{f}"),
    }
}

fn check_f0_args(f0: &F0Args) -> Result<(), Failure> {
    if f0.f0_source == F0Source::Predictor && f0.pitch.is_none() {
        return Err(usage("--f0-source predictor requires --pitch <CKPT>"));
    }
    Ok(())
}

/// Output stems must be unique so files from different inputs never collide.
fn stems(wavs: &[PathBuf]) -> Result<Vec<String>, Failure> {
    let mut seen = BTreeSet::new();
    wavs.iter()
        .map(|w| {
            let stem = w
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| usage(format!("`{}` has no file name", w.display())))?;
            if !seen.insert(stem.clone()) {
                return Err(usage(format!("two inputs share the file name `{stem}`")));
            }
            Ok(stem)
        })
        .collect()
}

fn load_audio(path: &Path) -> dspgan::Result<Waveform> {
    let w = load_wav(path)?;
    if w.sample_rate == SAMPLE_RATE {
        Ok(w)
    } else {
        resample(&w, SAMPLE_RATE)
    }
}

fn analyzer() -> dspgan::Result<MelAnalyzer> {
    MelAnalyzer::new(&FrameParams::default())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Runs `f` over every input in parallel, keeping input order.
fn per_file<F>(wavs: &[PathBuf], stems: &[String], jobs: usize, f: F) -> Result<Vec<Value>, Failure>
where
    F: Fn(&Path, &str) -> dspgan::Result<Value> + Sync,
{
    let items: Vec<(&PathBuf, &String)> = wavs.iter().zip(stems).collect();
    let results = parallel_map(&items, jobs, |(w, s)| f(w, s));
    Ok(results.into_iter().collect::<dspgan::Result<Vec<_>>>()?)
}

fn summary(command: &str, mut fields: serde_json::Map<String, Value>) -> Value {
    fields.insert("command".into(), Value::from(command));
    Value::Object(fields)
}

fn obj(v: Value) -> serde_json::Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => serde_json::Map::new(),
    }
}

pub fn execute(command: &Command) -> Outcome {
    let name = command.name();
    match command {
        Command::ExtractMel { wavs, common } => {
            let stems = stems(wavs)?;
            print_resolved(name, common, &[("inputs", wavs.len().to_string())]);
            std::fs::create_dir_all(&common.out)?;
            let an = analyzer()?;
            let files = per_file(wavs, &stems, common.jobs(), |w, stem| {
                let mel = an.log_mel(&load_audio(w)?)?;
                let side = Sidecar::new(
                    SidecarKind::Mel,
                    mel.frames(),
                    mel.n_mels,
                    mel.values.clone(),
                )?;
                let out = common.out.join(format!("{stem}.mel"));
                side.save(&out)?;
                side.save_text(&common.out.join(format!("{stem}.mel.txt")))?;
                Ok(json!({"input": path_str(w), "frames": mel.frames(), "mel": path_str(&out)}))
            })?;
            Ok(summary(name, obj(json!({"files": files}))))
        }
        Command::ExtractF0 { wavs, f0, common } => {
            check_f0_args(f0)?;
            let stems = stems(wavs)?;
            print_resolved(
                name,
                common,
                &[
                    ("inputs", wavs.len().to_string()),
                    ("f0_source", f0_source_name(&f0.f0_source)),
                    (
                        "pitch",
                        f0.pitch.as_deref().map(path_str).unwrap_or_default(),
                    ),
                ],
            );
            let pitch = f0.pitch.as_deref().map(load_pitch).transpose()?;
            std::fs::create_dir_all(&common.out)?;
            let an = analyzer()?;
            let files = per_file(wavs, &stems, common.jobs(), |w, stem| {
                let audio = load_audio(w)?;
                let mel = an.log_mel(&audio)?;
                let c = f0.f0_source.resolve(&audio, &mel, pitch.as_ref())?;
                let out = common.out.join(format!("{stem}.f0"));
                Sidecar::new(SidecarKind::F0, c.frames(), 1, c.f0.clone())?.save(&out)?;
                Ok(json!({
                    "input": path_str(w),
                    "frames": c.frames(),
                    "voiced_fraction": c.voiced_fraction(),
                    "f0": path_str(&out),
                }))
            })?;
            Ok(summary(name, obj(json!({"files": files}))))
        }
        Command::SynthExcitation {
            f0,
            seconds,
            k,
            source,
            noise_amplitude,
            common,
        } => {
            let fs = SAMPLE_RATE as f64;
            let f0_samples = match f0 {
                F0Source::Const(hz) => {
                    let s = seconds
                        .ok_or_else(|| usage("--f0 const:HZ requires --seconds <SECONDS>"))?;
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(usage(format!(
                            "--seconds expects a positive duration, got {s}"
                        )));
                    }
                    vec![*hz; (s * fs).round() as usize]
                }
                F0Source::File(p) => {
                    if seconds.is_some() {
                        return Err(usage("--seconds only applies to --f0 const:HZ"));
                    }
                    let side = Sidecar::load(p, SidecarKind::F0)?;
                    interpolate_f0(&PitchContour::new(side.values, FrameParams::default().hop)?)
                }
                _ => return Err(usage("--f0 expects const:HZ or file:PATH")),
            };
            if *k == 0 {
                return Err(usage("--k expects a positive harmonic count"));
            }
            print_resolved(
                name,
                common,
                &[
                    ("f0", f0_source_name(f0)),
                    (
                        "seconds",
                        seconds.map(|s| s.to_string()).unwrap_or_default(),
                    ),
                    ("k", k.to_string()),
                    ("source", format!("{source:?}").to_lowercase()),
                    ("noise_amplitude", noise_amplitude.to_string()),
                ],
            );
            if f0_samples.is_empty() {
                return Err(usage("excitation would be empty"));
            }
            let samples = match source {
                ExcitationSource::Sine => sine_excitation(&f0_samples, *k, fs)?.samples,
                ExcitationSource::Noise => {
                    noise_source(f0_samples.len(), common.seed(), *noise_amplitude)?.samples
                }
            };
            // Linear gain keeps the spectrum intact while fitting the wav range.
            let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let gain = 1.0 / peak.max(1.0);
            let wave = Waveform::new(samples.iter().map(|v| v * gain).collect(), SAMPLE_RATE);
            std::fs::create_dir_all(&common.out)?;
            let out = common.out.join("excitation.wav");
            write_wav(&wave, &out, Codec::Float32)?;
            Ok(summary(
                name,
                obj(json!({
                    "samples": wave.len(),
                    "sample_rate": SAMPLE_RATE,
                    "peak": peak,
                    "gain": gain,
                    "wav": path_str(&out),
                })),
            ))
        }
        Command::DspSynth {
            wavs,
            dsp,
            f0,
            common,
        } => {
            check_f0_args(f0)?;
            let stems = stems(wavs)?;
            print_resolved(
                name,
                common,
                &[
                    ("inputs", wavs.len().to_string()),
                    ("dsp", path_str(dsp)),
                    ("f0_source", f0_source_name(&f0.f0_source)),
                    (
                        "pitch",
                        f0.pitch.as_deref().map(path_str).unwrap_or_default(),
                    ),
                ],
            );
            let nets = load_dsp(dsp)?;
            let pitch = f0.pitch.as_deref().map(load_pitch).transpose()?;
            std::fs::create_dir_all(&common.out)?;
            let an = analyzer()?;
            let files = per_file(wavs, &stems, common.jobs(), |w, stem| {
                let audio = load_audio(w)?;
                let mel = an.log_mel(&audio)?;
                let c = f0.f0_source.resolve(&audio, &mel, pitch.as_ref())?;
                let y = dsp_synthesize(&mel, &c, &nets, common.seed())?;
                let out = common.out.join(format!("{stem}_dsp.wav"));
                write_wav(&y, &out, Codec::Float32)?;
                let mcd = mel_mcd(&mel, &an.log_mel(&y)?)?;
                Ok(json!({"input": path_str(w), "wav": path_str(&out), "mcd_db": mcd}))
            })?;
            Ok(summary(name, obj(json!({"files": files}))))
        }
        Command::Train {
            stage,
            manifest,
            config,
            overrides,
            pitch,
            dsp,
            common,
        } => train(
            name,
            *stage,
            manifest,
            config.as_deref(),
            overrides,
            pitch.as_deref(),
            dsp.as_deref(),
            common,
        ),
        Command::CopySynth {
            wavs,
            generator,
            dsp,
            f0,
            common,
        } => {
            check_f0_args(f0)?;
            let stems = stems(wavs)?;
            print_resolved(
                name,
                common,
                &[
                    ("inputs", wavs.len().to_string()),
                    ("generator", path_str(generator)),
                    ("dsp", path_str(dsp)),
                    ("f0_source", f0_source_name(&f0.f0_source)),
                    (
                        "pitch",
                        f0.pitch.as_deref().map(path_str).unwrap_or_default(),
                    ),
                ],
            );
            let models = VocoderSet::load(generator, dsp, f0.pitch.as_deref())?;
            std::fs::create_dir_all(&common.out)?;
            let files = per_file(wavs, &stems, common.jobs(), |w, stem| {
                let r = copy_synth(&load_wav(w)?, &models, &f0.f0_source, common.seed())?;
                let gan = common.out.join(format!("{stem}_gan.wav"));
                let dsp_out = common.out.join(format!("{stem}_dsp.wav"));
                write_wav(&r.gan, &gan, Codec::Float32)?;
                write_wav(&r.dsp, &dsp_out, Codec::Float32)?;
                Ok(json!({
                    "input": path_str(w),
                    "gan_wav": path_str(&gan),
                    "dsp_wav": path_str(&dsp_out),
                    "mcd_gan_db": r.mcd_gan,
                    "mcd_dsp_db": r.mcd_dsp,
                }))
            })?;
            Ok(summary(name, obj(json!({"files": files}))))
        }
        Command::Mcd { a, b, common } => {
            print_resolved(name, common, &[("a", path_str(a)), ("b", path_str(b))]);
            let an = analyzer()?;
            let ma = an.log_mel(&load_audio(a)?)?;
            let mb = an.log_mel(&load_audio(b)?)?;
            let frames = ma.frames().min(mb.frames());
            Ok(summary(
                name,
                obj(json!({"mcd_db": mel_mcd(&ma, &mb)?, "frames": frames})),
            ))
        }
        Command::SpectrogramDump { wavs, common } => {
            let stems = stems(wavs)?;
            print_resolved(name, common, &[("inputs", wavs.len().to_string())]);
            std::fs::create_dir_all(&common.out)?;
            let an = analyzer()?;
            let files = per_file(wavs, &stems, common.jobs(), |w, stem| {
                let mel: MelSpectrogram = an.log_mel(&load_audio(w)?)?;
                let pgm = common.out.join(format!("{stem}.pgm"));
                let txt = common.out.join(format!("{stem}.txt"));
                std::fs::write(&pgm, spectrogram_pgm(&mel))?;
                std::fs::write(&txt, mel_matrix_text(&mel))?;
                Ok(json!({
                    "input": path_str(w),
                    "width": mel.frames(),
                    "height": mel.n_mels,
                    "pgm": path_str(&pgm),
                    "matrix": path_str(&txt),
                }))
            })?;
            Ok(summary(name, obj(json!({"files": files}))))
        }
        Command::GradCheck {
            eps,
            per_tensor,
            threshold,
            common,
        } => {
            if *per_tensor == 0 {
                return Err(usage("--per-tensor expects a positive count"));
            }
            print_resolved(
                name,
                common,
                &[
                    ("eps", eps.to_string()),
                    ("per_tensor", per_tensor.to_string()),
                    ("threshold", threshold.to_string()),
                ],
            );
            let entries = run_suite(*eps, *per_tensor, common.seed())?;
            std::fs::create_dir_all(&common.out)?;
            let mut table = String::from("check max_relative_error checked non_smooth\n");
            let mut worst = ("", 0.0f64);
            for e in &entries {
                let r = &e.report;
                let _ = writeln!(
                    table,
                    "{} {:e} {} {}",
                    e.name, r.max_relative_error, r.checked, r.non_smooth
                );
                if r.max_relative_error >= worst.1 {
                    worst = (&e.name, r.max_relative_error);
                }
            }
            let out = common.out.join("grad_check.txt");
            std::fs::write(&out, table)?;
            let pass = worst.1 < *threshold;
            let s = summary(
                name,
                obj(json!({
                    "checks": entries.len(),
                    "max_relative_error": worst.1,
                    "worst": worst.0,
                    "checked": entries.iter().map(|e| e.report.checked).sum::<usize>(),
                    "non_smooth": entries.iter().map(|e| e.report.non_smooth).sum::<usize>(),
                    "pass": pass,
                    "report": path_str(&out),
                })),
            );
            if pass {
                Ok(s)
            } else {
                Err(Failure::Check(s))
            }
        }
        Command::AblationMatrix {
            config,
            manifest,
            common,
        } => {
            let mut file = ConfigFile::load(config)?;
            if let Some(seed) = common.seed {
                for stage in [Stage::Pitch, Stage::Dsp, Stage::Gan] {
                    file.set_in(stage, "seed", seed);
                }
            }
            let mut extra = vec![
                ("config", path_str(config)),
                ("manifest", path_str(manifest)),
            ];
            for stage in [Stage::Pitch, Stage::Dsp, Stage::Gan] {
                let c = TrainConfig::from_file(&file, stage).map_err(|e| usage(e.to_string()))?;
                extra.push((
                    "stage",
                    format!("{}\n{}", stage.name(), c.resolved().trim_end()),
                ));
            }
            print_resolved(name, common, &extra);
            let corpus = Corpus::load(&DatasetManifest::load(manifest)?, common.jobs())?;
            std::fs::create_dir_all(&common.out)?;
            let runs = ablation_matrix(&file, &corpus, &common.out, common.jobs())?;
            let runs: Vec<Value> = runs
                .iter()
                .map(|r| {
                    json!({
                        "name": r.spec.name,
                        "dir": path_str(&r.dir),
                        "generator_sha256": r.generator_sha256,
                        "final_recon": r.report.rows.last().map(|x| x.recon),
                        "finite": r.report.rows.iter().all(|x| x.is_finite()),
                    })
                })
                .collect();
            Ok(summary(name, obj(json!({"runs": runs}))))
        }
        Command::GenerateCorpus {
            train_clips,
            valid_clips,
            min_seconds,
            max_seconds,
            common,
        } => {
            let spec = CorpusSpec {
                train_clips: *train_clips,
                valid_clips: *valid_clips,
                min_seconds: *min_seconds,
                max_seconds: *max_seconds,
                seed: common.seed(),
            };
            print_resolved(
                name,
                common,
                &[
                    ("train_clips", train_clips.to_string()),
                    ("valid_clips", valid_clips.to_string()),
                    ("min_seconds", min_seconds.to_string()),
                    ("max_seconds", max_seconds.to_string()),
                ],
            );
            let manifest = generate_corpus(&common.out, &spec, common.jobs())?;
            Ok(summary(
                name,
                obj(json!({
                    "manifest": path_str(&manifest),
                    "clips": train_clips + valid_clips,
                })),
            ))
        }
    }
}

fn report_fields(r: &TrainReport) -> Result<Value, Failure> {
    let last = r.rows.last();
    Ok(json!({
        "stage": r.stage.name(),
        "steps": r.rows.len(),
        "checkpoint": path_str(&r.checkpoint),
        "checkpoint_sha256": file_sha256(&r.checkpoint)?,
        "best_checkpoint": path_str(&r.best_checkpoint),
        "discriminator": r.discriminator.as_deref().map(path_str),
        "first_validation": r.first_validation(),
        "last_validation": r.last_validation(),
        "best_validation": r.best_validation(),
        "final_total": last.map(|x| x.total),
        "final_recon": last.map(|x| x.recon),
    }))
}

#[allow(clippy::too_many_arguments)]
fn train(
    name: &str,
    stage: StageArg,
    manifest: &Path,
    config: Option<&Path>,
    overrides: &[String],
    pitch: Option<&Path>,
    dsp: Option<&Path>,
    common: &Common,
) -> Outcome {
    let stage = match stage {
        StageArg::Pitch => Stage::Pitch,
        StageArg::Dsp => Stage::Dsp,
        StageArg::Gan => Stage::Gan,
    };
    let mut file = match config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        file.set_in(stage, k.trim(), v.trim());
    }
    if let Some(seed) = common.seed {
        file.set_in(stage, "seed", seed);
    }
    let pitch = match (stage, pitch) {
        (Stage::Pitch, _) => None,
        (_, Some(p)) => Some(p),
        (_, None) => {
            return Err(usage(format!(
                "train {} requires --pitch <CKPT>",
                stage.name()
            )))
        }
    };
    let dsp = match (stage, dsp) {
        (Stage::Gan, Some(p)) => Some(p),
        (Stage::Gan, None) => return Err(usage("train gan requires --dsp <CKPT>")),
        _ => None,
    };
    // Bad keys or values from --set or the config file are usage errors.
    let cfg = TrainConfig::from_file(&file, stage).map_err(|e| usage(e.to_string()))?;
    eprint!(
        "# resolved config\ncommand = {name} {}\nout = {}\njobs = {}\nmanifest = {}\n{}",
        stage.name(),
        common.out.display(),
        common.jobs(),
        manifest.display(),
        cfg.resolved()
    );
    let corpus = Corpus::load(&DatasetManifest::load(manifest)?, common.jobs())?;
    std::fs::create_dir_all(&common.out)?;
    let report = match stage {
        Stage::Pitch => train_pitch(&cfg, &corpus, &common.out)?,
        Stage::Dsp => train_dsp(&cfg, &corpus, pitch.expect("checked"), &common.out)?,
        Stage::Gan => train_gan(
            &cfg,
            &corpus,
            dsp.expect("checked"),
            pitch.expect("checked"),
            &common.out,
            common.jobs(),
        )?,
    };
    Ok(summary(name, obj(report_fields(&report)?)))
}
