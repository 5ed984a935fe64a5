use std::path::Path;
use std::process::{Command, Output};

use dspgan::signal::{load_wav, write_wav, Codec};
use dspgan::train::synthesize_clip;

fn run(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dspgan"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DSPGAN_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn speech_wav(dir: &Path) {
    let clip = synthesize_clip(7, 1.5).unwrap();
    write_wav(&clip.audio, &dir.join("speech.wav"), Codec::Pcm16).unwrap();
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in [
        "extract-mel",
        "extract-f0",
        "synth-excitation",
        "dsp-synth",
        "train",
        "copy-synth",
        "mcd",
        "spectrogram-dump",
        "grad-check",
        "ablation-matrix",
        "generate-corpus",
    ] {
        assert!(text.contains(name), "{name} missing from help");
    }
    assert!(text.contains("DSPGAN_LOG"));
}

#[test]
fn usage_errors_exit_one_and_runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["mcd", "a.wav", "b.wav", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(dir.path(), &["synth-excitation"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(dir.path(), &["mcd", "a.wav", "b.wav"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a.wav"));
    let o = Command::new(env!("CARGO_BIN_EXE_dspgan"))
        .args(["mcd", "a.wav", "b.wav"])
        .current_dir(dir.path())
        .env("DSPGAN_LOG", "loud")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_dependencies_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.txt"), "").unwrap();
    let o = run(dir.path(), &["train", "dsp", "--manifest", "m.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--pitch"));
    let o = run(
        dir.path(),
        &[
            "train",
            "pitch",
            "--manifest",
            "m.txt",
            "--set",
            "nonsense=3",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_excitation_renders_one_second() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "synth-excitation",
            "--f0",
            "const:100",
            "--seconds",
            "1",
            "--k",
            "200",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("# resolved config"));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["command"], "synth-excitation");
    let w = load_wav(&dir.path().join("out/excitation.wav")).unwrap();
    assert_eq!(w.sample_rate, 24000);
    assert_eq!(w.len(), 24000);
    assert!(w.samples.iter().all(|v| v.abs() <= 1.0));
    assert!(w.samples.iter().any(|&v| v != 0.0));
}

#[test]
fn feature_commands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    speech_wav(dir.path());

    let o = run(
        dir.path(),
        &["spectrogram-dump", "speech.wav", "--out", "img"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let frames = 36000 / 256 + 1;
    let pgm = std::fs::read(dir.path().join("img/speech.pgm")).unwrap();
    let header = format!("P5\n{frames} 80\n255\n");
    assert!(pgm.starts_with(header.as_bytes()));
    assert_eq!(pgm.len(), header.len() + frames * 80);
    let text = std::fs::read_to_string(dir.path().join("img/speech.txt")).unwrap();
    assert_eq!(text.lines().count(), 80);
    assert!(text.lines().all(|l| l.split(' ').count() == frames));

    let o = run(dir.path(), &["extract-mel", "speech.wav", "--out", "mel"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("mel/speech.mel").exists());

    let o = run(dir.path(), &["extract-f0", "speech.wav", "--out", "f0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("f0/speech.f0").exists());

    let o = run(dir.path(), &["mcd", "speech.wav", "speech.wav"]);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["mcd_db"], 0.0);
}

#[test]
fn grad_check_reports_failure_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["grad-check", "--per-tensor", "1", "--threshold", "1e-30"],
    );
    assert_eq!(o.status.code(), Some(2));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["pass"], false);
    assert!(dir.path().join("out/grad_check.txt").exists());
}
