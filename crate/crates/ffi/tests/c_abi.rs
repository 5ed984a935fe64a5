//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "dspgan.h"

int main(void) {
    if (strlen(dspgan_version()) == 0) return 10;

    double f0[2400];
    for (int i = 0; i < 2400; i++) f0[i] = 100.0;
    DspganBuffer *buf = NULL;
    if (dspgan_sine_excitation(f0, 2400, 5, 24000.0, &buf) != DSPGAN_STATUS_OK) return 11;
    if (dspgan_buffer_len(buf) != 2400) return 12;
    const double *x = dspgan_buffer_data(buf);
    double expect = 0.0;
    double phase = 2.0 * M_PI * 100.0 / 24000.0;
    for (int k = 1; k <= 5; k++) expect += sin(k * phase);
    if (fabs(x[1] - expect) > 1e-12) return 13;
    dspgan_buffer_free(buf);

    DspganVocoder *v = NULL;
    if (dspgan_vocoder_load("missing.ckpt", "missing.ckpt", NULL, &v) != DSPGAN_STATUS_IO) return 14;
    if (v != NULL || strlen(dspgan_last_error()) == 0) return 15;
    if (dspgan_vocoder_load(NULL, "a", NULL, &v) != DSPGAN_STATUS_NULL_POINTER) return 16;
    dspgan_vocoder_free(NULL);
    dspgan_buffer_free(NULL);
    printf("ok\n");
    return 0;
}
"#;

/// Builds the static library and returns its path; `cargo test` alone
/// only produces the rlib.
fn static_lib() -> PathBuf {
    let out = Command::new(env!("CARGO"))
        .args([
            "build",
            "--quiet",
            "-p",
            "dspgan-ffi",
            "--lib",
            "--message-format=json",
        ])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|m| m["reason"] == "compiler-artifact" && m["target"]["name"] == "dspgan_ffi")
        .flat_map(|m| m["filenames"].as_array().cloned().unwrap_or_default())
        .filter_map(|f| f.as_str().map(PathBuf::from))
        .find(|f| f.extension().is_some_and(|e| e == "a"))
        .expect("static library artifact")
}

fn cc() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .map(String::from)
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let lib = static_lib();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let out = Command::new(&cc)
        .arg("-std=c99")
        .arg("-D_DEFAULT_SOURCE")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).current_dir(dir.path()).output().unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&run.stdout), "ok\n");
}
