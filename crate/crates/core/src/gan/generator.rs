//! Upsampling generator with sine-excitation injection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::checkpoint::Header;
use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Conv1d, ConvTranspose1d};

/// Channels of every downsampled-excitation stage.
pub const EXCITATION_CHANNELS: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub n_mels: usize,
    /// Width after the input convolution.
    pub initial_channels: usize,
    pub upsample_factors: Vec<usize>,
    pub upsample_channels: Vec<usize>,
    pub resblock_kernels: Vec<usize>,
    pub resblock_dilations: Vec<usize>,
    pub downsample_channels: usize,
    /// Inject downsampled excitation into the upsampling stages.
    pub enable_t_s: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            initial_channels: 256,
            upsample_factors: vec![8, 8, 4],
            upsample_channels: vec![128, 64, 32],
            resblock_kernels: vec![3, 7],
            resblock_dilations: vec![1, 3, 5],
            downsample_channels: EXCITATION_CHANNELS,
            enable_t_s: true,
        }
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split(h: &Header, key: &str) -> Result<Vec<usize>> {
    let raw = h
        .get(key)
        .ok_or_else(|| Error::Checkpoint(format!("header lacks `{key}`")))?;
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad `{key}` = `{raw}`")))
        })
        .collect()
}

impl GeneratorConfig {
    /// Samples produced per input frame.
    pub fn hop(&self) -> usize {
        self.upsample_factors.iter().product()
    }

    /// Excitation downsampling factors, the upsampling factors reversed.
    pub fn downsample_factors(&self) -> Vec<usize> {
        self.upsample_factors.iter().rev().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.upsample_factors.is_empty()
            || self.upsample_factors.len() != self.upsample_channels.len()
        {
            return bad("upsample factors and channels must be non-empty and equally long".into());
        }
        if self.upsample_factors.iter().any(|&f| f < 2 || f % 2 != 0) {
            return bad(format!(
                "upsample factors must be even, got {:?}",
                self.upsample_factors
            ));
        }
        if self.resblock_kernels.is_empty() || self.resblock_kernels.iter().any(|k| k % 2 == 0) {
            return bad("resblock kernels must be odd and non-empty".into());
        }
        if self.resblock_dilations.is_empty() || self.resblock_dilations.contains(&0) {
            return bad("resblock dilations must be positive and non-empty".into());
        }
        if self.initial_channels == 0
            || self.upsample_channels.contains(&0)
            || self.downsample_channels == 0
        {
            return bad("channel counts must be positive".into());
        }
        Ok(())
    }

    pub fn write_header(&self, h: &mut Header) {
        h.set("n_mels", self.n_mels);
        h.set("initial_channels", self.initial_channels);
        h.set("upsample_factors", join(&self.upsample_factors));
        h.set("upsample_channels", join(&self.upsample_channels));
        h.set("resblock_kernels", join(&self.resblock_kernels));
        h.set("resblock_dilations", join(&self.resblock_dilations));
        h.set("downsample_channels", self.downsample_channels);
        h.set("enable_t_s", self.enable_t_s);
    }

    pub fn from_header(h: &Header) -> Result<Self> {
        Ok(Self {
            n_mels: h.parse_value("n_mels")?,
            initial_channels: h.parse_value("initial_channels")?,
            upsample_factors: split(h, "upsample_factors")?,
            upsample_channels: split(h, "upsample_channels")?,
            resblock_kernels: split(h, "resblock_kernels")?,
            resblock_dilations: split(h, "resblock_dilations")?,
            downsample_channels: h.parse_value("downsample_channels")?,
            enable_t_s: h.parse_value("enable_t_s")?,
        })
    }
}

/// Residual stack of dilated convolutions, each followed by a
/// dilation-1 convolution.
struct ResBlock {
    pairs: Vec<(Conv1d, Conv1d)>,
}

impl ResBlock {
    fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Result<Var> {
        for (c1, c2) in &self.pairs {
            let t = g.leaky_relu(x);
            let t = c1.forward(g, store, t)?;
            let t = g.leaky_relu(t);
            let t = c2.forward(g, store, t)?;
            x = g.add(t, x)?;
        }
        Ok(x)
    }
}

struct Stage {
    up: ConvTranspose1d,
    blocks: Vec<ResBlock>,
}

pub struct Generator {
    pub config: GeneratorConfig,
    pub store: ParamStore,
    pre: Conv1d,
    stages: Vec<Stage>,
    down: Vec<Conv1d>,
    post: Conv1d,
}

impl Generator {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let depth = c.upsample_factors.len();
        let ex = if c.enable_t_s {
            c.downsample_channels
        } else {
            0
        };
        let pre = Conv1d::same(
            &mut store,
            "pre",
            c.n_mels,
            c.initial_channels,
            7,
            1,
            &mut rng,
        );
        // Excitation joins after the input convolution and after every
        // upsampling step except the last.
        let mut width = c.initial_channels + ex;
        let mut stages = Vec::with_capacity(depth);
        for (i, (&u, &ch)) in c
            .upsample_factors
            .iter()
            .zip(&c.upsample_channels)
            .enumerate()
        {
            let up = ConvTranspose1d::new(
                &mut store,
                &format!("up.{i}"),
                width,
                ch,
                2 * u,
                u,
                u / 2,
                &mut rng,
            );
            width = ch + if i + 1 < depth { ex } else { 0 };
            let blocks = c
                .resblock_kernels
                .iter()
                .enumerate()
                .map(|(j, &k)| ResBlock {
                    pairs: c
                        .resblock_dilations
                        .iter()
                        .enumerate()
                        .map(|(m, &d)| {
                            let n = format!("res.{i}.{j}.{m}");
                            (
                                Conv1d::same(
                                    &mut store,
                                    &format!("{n}.a"),
                                    width,
                                    width,
                                    k,
                                    d,
                                    &mut rng,
                                ),
                                Conv1d::same(
                                    &mut store,
                                    &format!("{n}.b"),
                                    width,
                                    width,
                                    k,
                                    1,
                                    &mut rng,
                                ),
                            )
                        })
                        .collect(),
                })
                .collect();
            stages.push(Stage { up, blocks });
        }
        let post = Conv1d::same(&mut store, "post", width, 1, 7, 1, &mut rng);
        let down = if c.enable_t_s {
            c.downsample_factors()
                .iter()
                .enumerate()
                .map(|(i, &f)| {
                    let cin = if i == 0 { 1 } else { c.downsample_channels };
                    Conv1d::new(
                        &mut store,
                        &format!("down.{i}"),
                        cin,
                        c.downsample_channels,
                        2 * f,
                        f,
                        1,
                        f / 2,
                        &mut rng,
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            store,
            pre,
            stages,
            down,
            post,
        })
    }

    pub fn header(&self) -> Header {
        let mut h = Header::new();
        h.set("model", "generator");
        self.config.write_header(&mut h);
        h
    }

    pub fn from_checkpoint(header: &Header, params: &ParamStore) -> Result<Self> {
        let mut g = Self::new(GeneratorConfig::from_header(header)?, 0)?;
        g.store.load_from(params)?;
        Ok(g)
    }

    /// Strided convolutions over `p1 [B, 1, T]`; stage `i` runs at
    /// `T / (f_0 · … · f_i)` samples with the downsampling factors in order.
    pub fn downsample_excitation(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        p1: Var,
    ) -> Result<Vec<Var>> {
        if self.down.is_empty() {
            return Ok(Vec::new());
        }
        let t = g.shape(p1)[2];
        let hop = self.config.hop();
        if t % hop != 0 {
            return Err(Error::NotDivisible {
                len: t,
                factor: hop,
            });
        }
        let mut x = p1;
        let mut out = Vec::with_capacity(self.down.len());
        for conv in &self.down {
            x = conv.forward(g, store, x)?;
            x = g.leaky_relu(x);
            out.push(x);
        }
        Ok(out)
    }

    /// Waveform `[B, 1, F·hop]` in (−1, 1) from `mel [B, n_mels, F]` and,
    /// when excitation injection is enabled, `p1 [B, 1, F·hop]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        mel: Var,
        p1: Option<Var>,
    ) -> Result<Var> {
        let shape = g.shape(mel).to_vec();
        if shape.len() != 3 || shape[1] != self.config.n_mels {
            return Err(shape_err("generator", "mel", format!("{shape:?}")));
        }
        let frames = shape[2];
        let mut excitation = match (self.config.enable_t_s, p1) {
            (true, Some(p)) => {
                if g.shape(p) != [shape[0], 1, frames * self.config.hop()] {
                    return Err(shape_err(
                        "generator",
                        "excitation",
                        format!("{:?} for {frames} frames", g.shape(p)),
                    ));
                }
                self.downsample_excitation(g, store, p)?
            }
            (true, None) => {
                return Err(Error::Config(
                    "excitation injection enabled but no excitation given".into(),
                ))
            }
            (false, _) => Vec::new(),
        };
        // Features are consumed coarsest first: after the input convolution,
        // then after every upsampling step but the last.
        let mut x = self.pre.forward(g, store, mel)?;
        if let Some(e) = excitation.pop() {
            x = g.concat_channels(&[x, e])?;
        }
        for stage in &self.stages {
            x = g.leaky_relu(x);
            x = stage.up.forward(g, store, x)?;
            if let Some(e) = excitation.pop() {
                x = g.concat_channels(&[x, e])?;
            }
            let mut acc: Option<Var> = None;
            for block in &stage.blocks {
                let y = block.forward(g, store, x)?;
                acc = Some(match acc {
                    None => y,
                    Some(a) => g.add(a, y)?,
                });
            }
            x = g.scale(
                acc.expect("at least one resblock"),
                1.0 / stage.blocks.len() as f64,
            );
        }
        x = g.leaky_relu(x);
        x = self.post.forward(g, store, x)?;
        Ok(g.tanh(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use proptest::prelude::*;

    pub(crate) fn narrow(enable_t_s: bool) -> GeneratorConfig {
        GeneratorConfig {
            initial_channels: 16,
            upsample_channels: vec![8, 8, 4],
            resblock_kernels: vec![3],
            resblock_dilations: vec![1, 3],
            enable_t_s,
            ..GeneratorConfig::default()
        }
    }

    fn run(gen: &Generator, frames: usize, p1: Option<Vec<f64>>) -> (Graph, Var) {
        let mut g = Graph::new();
        let mel = g.constant(Tensor::full(&[1, 80, frames], -4.0));
        let p = p1.map(|v| g.constant(Tensor::new(&[1, 1, frames * 256], v).unwrap()));
        let y = gen.forward(&mut g, &gen.store, mel, p).unwrap();
        (g, y)
    }

    #[test]
    fn excitation_stage_lengths_and_widths() {
        let gen = Generator::new(narrow(true), 0).unwrap();
        let mut g = Graph::new();
        let p1 = g.constant(Tensor::full(&[1, 1, 24064], 0.1));
        let feats = gen.downsample_excitation(&mut g, &gen.store, p1).unwrap();
        let shapes: Vec<Vec<usize>> = feats.iter().map(|&v| g.shape(v).to_vec()).collect();
        assert_eq!(
            shapes,
            vec![vec![1, 32, 6016], vec![1, 32, 752], vec![1, 32, 94]]
        );
        let bad = g.constant(Tensor::full(&[1, 1, 1000], 0.1));
        assert!(matches!(
            gen.downsample_excitation(&mut g, &gen.store, bad),
            Err(Error::NotDivisible {
                len: 1000,
                factor: 256
            })
        ));
    }

    #[test]
    fn zero_excitation_with_zero_bias_gives_zero_features() {
        let mut gen = Generator::new(narrow(true), 0).unwrap();
        for conv in gen.down.clone() {
            gen.store
                .get_mut(conv.bias)
                .value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let p1 = g.constant(Tensor::zeros(&[1, 1, 512]));
        for f in gen.downsample_excitation(&mut g, &gen.store, p1).unwrap() {
            assert!(g.value(f).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ninety_four_frames_to_full_length() {
        let gen = Generator::new(narrow(true), 1).unwrap();
        let (g, y) = run(&gen, 94, Some(vec![0.0; 24064]));
        assert_eq!(g.shape(y), &[1, 1, 24064]);
        assert!(g.value(y).data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn header_round_trip_and_missing_excitation() {
        let gen = Generator::new(narrow(false), 2).unwrap();
        let back = Generator::from_checkpoint(&gen.header(), &gen.store).unwrap();
        assert_eq!(back.config, gen.config);
        assert!(back.store.same_values(&gen.store));
        let with = Generator::new(narrow(true), 2).unwrap();
        let mut g = Graph::new();
        let mel = g.constant(Tensor::full(&[1, 80, 2], 0.0));
        assert!(with.forward(&mut g, &with.store, mel, None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn length_law(frames in 1usize..128, t_s in any::<bool>()) {
            let mut cfg = narrow(t_s);
            cfg.initial_channels = 4;
            cfg.upsample_channels = vec![4, 2, 2];
            cfg.downsample_channels = 2;
            let gen = Generator::new(cfg, 3).unwrap();
            let p1 = t_s.then(|| vec![0.5; frames * 256]);
            let (g, y) = run(&gen, frames, p1);
            prop_assert_eq!(g.shape(y), &[1, 1, frames * 256]);
            prop_assert!(g.value(y).data().iter().all(|v| v.abs() < 1.0));
        }
    }
}
