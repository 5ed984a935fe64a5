//! The four-way supervision ablation: full, without time-domain
//! supervision, without time-frequency supervision, without weight predictor.

use std::path::{Path, PathBuf};

use log::info;

use crate::error::Result;

use super::config::{ConfigFile, Stage, TrainConfig};
use super::data::Corpus;
use super::stages::{file_sha256, train_dsp, train_gan, train_pitch, TrainReport};

/// One row of the matrix: directory name and the three switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AblationSpec {
    pub name: &'static str,
    pub enable_t_s: bool,
    pub enable_tf_s: bool,
    pub enable_weight_predictor: bool,
}

pub const ABLATIONS: [AblationSpec; 4] = [
    AblationSpec {
        name: "full",
        enable_t_s: true,
        enable_tf_s: true,
        enable_weight_predictor: true,
    },
    AblationSpec {
        name: "no_ts",
        enable_t_s: false,
        enable_tf_s: true,
        enable_weight_predictor: true,
    },
    AblationSpec {
        name: "no_tfs",
        enable_t_s: true,
        enable_tf_s: false,
        enable_weight_predictor: true,
    },
    AblationSpec {
        name: "no_wp",
        enable_t_s: true,
        enable_tf_s: true,
        enable_weight_predictor: false,
    },
];

#[derive(Clone, Debug)]
pub struct AblationRun {
    pub spec: AblationSpec,
    pub dir: PathBuf,
    pub config: TrainConfig,
    pub report: TrainReport,
    pub generator_sha256: String,
}

impl AblationSpec {
    fn apply(&self, file: &mut ConfigFile) {
        file.set("enable_t_s", self.enable_t_s);
        file.set("enable_tf_s", self.enable_tf_s);
        file.set("enable_weight_predictor", self.enable_weight_predictor);
    }
}

/// Trains the shared pitch stage, both DSP variants, then one GAN per row
/// into `out/<name>`.
pub fn ablation_matrix(
    file: &ConfigFile,
    corpus: &Corpus,
    out: &Path,
    jobs: usize,
) -> Result<Vec<AblationRun>> {
    let stages = out.join("stages");
    let pitch = train_pitch(
        &TrainConfig::from_file(file, Stage::Pitch)?,
        corpus,
        &stages.join("pitch"),
    )?;
    let mut dsp_ckpts = Vec::new();
    for wp in [true, false] {
        let mut f = file.clone();
        f.set("enable_weight_predictor", wp);
        let dir = stages.join(if wp { "dsp" } else { "dsp_no_wp" });
        let report = train_dsp(
            &TrainConfig::from_file(&f, Stage::Dsp)?,
            corpus,
            &pitch.checkpoint,
            &dir,
        )?;
        dsp_ckpts.push((wp, report.checkpoint));
    }
    let mut runs = Vec::new();
    for spec in ABLATIONS {
        info!("ablation {}", spec.name);
        let mut f = file.clone();
        spec.apply(&mut f);
        let config = TrainConfig::from_file(&f, Stage::Gan)?;
        let dsp = &dsp_ckpts
            .iter()
            .find(|(wp, _)| *wp == spec.enable_weight_predictor)
            .expect("both variants")
            .1;
        let dir = out.join(spec.name);
        let report = train_gan(&config, corpus, dsp, &pitch.checkpoint, &dir, jobs)?;
        let generator_sha256 = file_sha256(&report.checkpoint)?;
        runs.push(AblationRun {
            spec,
            dir,
            config,
            report,
            generator_sha256,
        });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_distinct_single_switch_changes() {
        for (i, a) in ABLATIONS.iter().enumerate() {
            for b in &ABLATIONS[i + 1..] {
                assert_ne!(
                    (a.enable_t_s, a.enable_tf_s, a.enable_weight_predictor),
                    (b.enable_t_s, b.enable_tf_s, b.enable_weight_predictor)
                );
            }
            let off = [a.enable_t_s, a.enable_tf_s, a.enable_weight_predictor]
                .iter()
                .filter(|x| !**x)
                .count();
            assert_eq!(off, usize::from(i > 0));
        }
    }
}
