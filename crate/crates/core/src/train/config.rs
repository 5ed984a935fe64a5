//! `key = value` configuration files with `[stage]` sections.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::AdamConfig;
use crate::dsp::{DspConfig, PitchConfig};
use crate::error::{Error, Result};
use crate::gan::{DiscriminatorConfig, GeneratorConfig, LossWeights};

/// Parsed file: the unnamed leading section is stored under `""`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, Vec<(String, String)>>,
}

const SECTIONS: [&str; 3] = ["pitch", "dsp", "gan"];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{name}]",
                        i + 1
                    )));
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    i + 1
                ))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            sections
                .entry(current.clone())
                .or_default()
                .push((k.to_string(), v.to_string()));
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::Missing(path.to_path_buf()))?;
        Self::parse(&text)
    }

    /// Entries in effect for `stage`: global ones first, then the section's.
    pub fn entries_for(&self, stage: Stage) -> Vec<(String, String)> {
        let mut out = self.sections.get("").cloned().unwrap_or_default();
        out.extend(self.sections.get(stage.name()).cloned().unwrap_or_default());
        out
    }

    /// Adds or replaces a global entry.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let global = self.sections.entry(String::new()).or_default();
        global.retain(|(k, _)| k != key);
        global.push((key.to_string(), value.to_string()));
    }

    pub fn set_in(&mut self, stage: Stage, key: &str, value: impl ToString) {
        let sec = self.sections.entry(stage.name().to_string()).or_default();
        sec.retain(|(k, _)| k != key);
        sec.push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, entries) in &self.sections {
            if !name.is_empty() {
                let _ = writeln!(s, "[{name}]");
            }
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Pitch,
    Dsp,
    Gan,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pitch => "pitch",
            Stage::Dsp => "dsp",
            Stage::Gan => "gan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pitch" => Ok(Stage::Pitch),
            "dsp" => Ok(Stage::Dsp),
            "gan" => Ok(Stage::Gan),
            _ => Err(Error::Config(format!(
                "unknown stage `{s}` (expected pitch, dsp or gan)"
            ))),
        }
    }
}

/// Mel the generator's reconstruction loss is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconTarget {
    /// Mel of the recorded segment.
    MelIn,
    /// Mel of the DSP vocoder's rendering of the segment.
    MelDsp,
}

impl ReconTarget {
    pub fn name(self) -> &'static str {
        match self {
            ReconTarget::MelIn => "mel_in",
            ReconTarget::MelDsp => "mel_dsp",
        }
    }
}

/// Fully resolved settings for one training stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub steps: usize,
    pub batch_size: usize,
    pub segment_frames: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Joint gradient-norm ceiling per update; 0 disables clipping.
    pub grad_clip: f64,
    pub validate_every: usize,
    pub enable_t_s: bool,
    pub enable_tf_s: bool,
    pub enable_weight_predictor: bool,
    pub weights: LossWeights,
    pub recon_target: ReconTarget,
    pub pitch: PitchConfig,
    pub dsp: DspConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl TrainConfig {
    /// Desk-scale defaults for `stage`.
    pub fn defaults(stage: Stage) -> Self {
        let (steps, lr) = match stage {
            Stage::Pitch => (500, 1e-3),
            Stage::Dsp => (2000, 1e-3),
            Stage::Gan => (3000, 2e-4),
        };
        Self {
            stage,
            steps,
            batch_size: 4,
            segment_frames: 32,
            seed: 0,
            adam: AdamConfig {
                learning_rate: lr,
                ..AdamConfig::default()
            },
            grad_clip: 0.0,
            validate_every: 100,
            enable_t_s: true,
            enable_tf_s: true,
            enable_weight_predictor: true,
            weights: LossWeights::default(),
            recon_target: ReconTarget::MelIn,
            pitch: PitchConfig::default(),
            dsp: DspConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }

    pub fn from_file(file: &ConfigFile, stage: Stage) -> Result<Self> {
        let mut c = Self::defaults(stage);
        for (k, v) in file.entries_for(stage) {
            c.apply(&k, &v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Sets one key; unknown keys are errors.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{v}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!(
                    "`{key}` expects true or false, got `{v}`"
                ))),
            }
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|t| num(key, t.trim())).collect()
        }
        match key {
            "steps" => self.steps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "segment_frames" => self.segment_frames = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "learning_rate" => self.adam.learning_rate = num(key, value)?,
            "beta1" => self.adam.beta1 = num(key, value)?,
            "beta2" => self.adam.beta2 = num(key, value)?,
            "grad_clip" => self.grad_clip = num(key, value)?,
            "validate_every" => self.validate_every = num(key, value)?,
            "enable_t_s" => self.enable_t_s = flag(key, value)?,
            "enable_tf_s" => self.enable_tf_s = flag(key, value)?,
            "enable_weight_predictor" => self.enable_weight_predictor = flag(key, value)?,
            "lambda_recon" => self.weights.recon = num(key, value)?,
            "lambda_fm" => self.weights.fm = num(key, value)?,
            "recon_target" => {
                self.recon_target = match value {
                    "mel_in" => ReconTarget::MelIn,
                    "mel_dsp" => ReconTarget::MelDsp,
                    _ => {
                        return Err(Error::Config(format!(
                            "`recon_target` expects mel_in or mel_dsp, got `{value}`"
                        )))
                    }
                }
            }
            "pitch_hidden" => self.pitch.hidden = num(key, value)?,
            "pitch_layers" => self.pitch.layers = num(key, value)?,
            "hidden" => self.dsp.hidden = num(key, value)?,
            "layers" => self.dsp.layers = num(key, value)?,
            "kernel" => self.dsp.kernel = num(key, value)?,
            "cepstrum_len" => self.dsp.cepstrum_len = num(key, value)?,
            "ir_len" => self.dsp.ir_len = num(key, value)?,
            "harmonics" => self.dsp.harmonics = num(key, value)?,
            "noise_amplitude" => self.dsp.noise_amplitude = num(key, value)?,
            "voicing_threshold" => self.dsp.voicing_threshold = num(key, value)?,
            "initial_channels" => self.generator.initial_channels = num(key, value)?,
            "upsample_factors" => self.generator.upsample_factors = list(key, value)?,
            "upsample_channels" => self.generator.upsample_channels = list(key, value)?,
            "resblock_kernels" => self.generator.resblock_kernels = list(key, value)?,
            "resblock_dilations" => self.generator.resblock_dilations = list(key, value)?,
            "downsample_channels" => self.generator.downsample_channels = num(key, value)?,
            "disc_periods" => self.discriminator.periods = list(key, value)?,
            "disc_scales" => self.discriminator.scales = list(key, value)?,
            "disc_channels" => self.discriminator.channels = list(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        self.dsp.use_weight_predictor = self.enable_weight_predictor;
        self.generator.enable_t_s = self.enable_t_s;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.segment_frames == 0 {
            return Err(Error::Config(
                "batch_size and segment_frames must be positive".into(),
            ));
        }
        if self.validate_every == 0 {
            return Err(Error::Config("validate_every must be positive".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::Config("grad_clip must be non-negative".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.dsp.validate()?;
        self.generator.validate()?;
        if self.generator.hop() != self.dsp.hop {
            return Err(Error::Config(format!(
                "upsample factors give hop {} but frames are {} samples",
                self.generator.hop(),
                self.dsp.hop
            )));
        }
        Ok(())
    }

    /// Every resolved setting as `key = value` lines, in a fixed order.
    pub fn resolved(&self) -> String {
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut rows: Vec<(&str, String)> = vec![
            ("stage", self.stage.name().into()),
            ("steps", self.steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("segment_frames", self.segment_frames.to_string()),
            ("seed", self.seed.to_string()),
            ("learning_rate", self.adam.learning_rate.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("validate_every", self.validate_every.to_string()),
            ("enable_t_s", self.enable_t_s.to_string()),
            ("enable_tf_s", self.enable_tf_s.to_string()),
            (
                "enable_weight_predictor",
                self.enable_weight_predictor.to_string(),
            ),
        ];
        match self.stage {
            Stage::Pitch => {
                rows.push(("pitch_hidden", self.pitch.hidden.to_string()));
                rows.push(("pitch_layers", self.pitch.layers.to_string()));
            }
            Stage::Dsp => {
                let d = &self.dsp;
                rows.push(("hidden", d.hidden.to_string()));
                rows.push(("layers", d.layers.to_string()));
                rows.push(("kernel", d.kernel.to_string()));
                rows.push(("cepstrum_len", d.cepstrum_len.to_string()));
                rows.push(("ir_len", d.ir_len.to_string()));
                rows.push(("harmonics", d.harmonics.to_string()));
                rows.push(("noise_amplitude", d.noise_amplitude.to_string()));
                rows.push(("voicing_threshold", d.voicing_threshold.to_string()));
            }
            Stage::Gan => {
                let g = &self.generator;
                rows.push(("lambda_recon", self.weights.recon.to_string()));
                rows.push(("lambda_fm", self.weights.fm.to_string()));
                rows.push(("recon_target", self.recon_target.name().into()));
                rows.push(("initial_channels", g.initial_channels.to_string()));
                rows.push(("upsample_factors", join(&g.upsample_factors)));
                rows.push(("upsample_channels", join(&g.upsample_channels)));
                rows.push(("resblock_kernels", join(&g.resblock_kernels)));
                rows.push(("resblock_dilations", join(&g.resblock_dilations)));
                rows.push(("downsample_channels", g.downsample_channels.to_string()));
                rows.push(("disc_periods", join(&self.discriminator.periods)));
                rows.push(("disc_scales", join(&self.discriminator.scales)));
                rows.push(("disc_channels", join(&self.discriminator.channels)));
            }
        }
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "steps = 10\nseed = 3 # trailing\n\n[dsp]\nhidden = 32\n[gan]\nsteps = 7\nupsample_channels = 16, 8, 4\nenable_t_s = false\n";

    #[test]
    fn sections_override_globals() {
        let f = ConfigFile::parse(TEXT).unwrap();
        let d = TrainConfig::from_file(&f, Stage::Dsp).unwrap();
        assert_eq!((d.steps, d.seed, d.dsp.hidden), (10, 3, 32));
        let g = TrainConfig::from_file(&f, Stage::Gan).unwrap();
        assert_eq!(g.steps, 7);
        assert_eq!(g.generator.upsample_channels, vec![16, 8, 4]);
        assert!(!g.generator.enable_t_s);
        assert_eq!(g.dsp.hidden, DspConfig::default().hidden);
        assert_eq!(ConfigFile::parse(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        let f = ConfigFile::parse("stepz = 3").unwrap();
        assert!(TrainConfig::from_file(&f, Stage::Dsp).is_err());
        assert!(ConfigFile::parse("[tts]\nsteps = 1").is_err());
        assert!(ConfigFile::parse("steps 3").is_err());
        let f = ConfigFile::parse("[gan]\nupsample_factors = 8,8,2").unwrap();
        assert!(TrainConfig::from_file(&f, Stage::Gan).is_err());
    }

    #[test]
    fn resolved_lists_recon_target() {
        let c = TrainConfig::defaults(Stage::Gan);
        assert!(c.resolved().contains("recon_target = mel_in"));
        assert!(c.resolved().contains("lambda_recon = 45"));
    }
}
