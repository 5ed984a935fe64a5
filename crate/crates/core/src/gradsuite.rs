//! Finite-difference checks of every differentiable operation and of the
//! composite vocoder losses.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    grad_check_coords, grad_check_params, Coords, GradCheckReport, Graph, ParamStore, Pointwise,
    Tensor, Var, Window,
};
use crate::dsp::{split_features, DspConfig, NNFilterNets};
use crate::error::Result;
use crate::gan::{
    generator_loss, DiscriminatorConfig, DiscriminatorEnsemble, Generator, GeneratorConfig,
    LossWeights,
};
use crate::signal::{FrameParams, MelAnalyzer};

/// Frames used by the composite checks.
pub const CHECK_FRAMES: usize = 8;

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

struct Inputs {
    rng: ChaCha8Rng,
}

impl Inputs {
    /// Values in `±[0.2, 1]`, away from the kinks of abs and leaky ReLU.
    fn signed(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let m: f64 = self.rng.gen_range(0.2..1.0);
                if self.rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        Tensor::new(shape, data).expect("non-empty")
    }

    fn positive(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape,
            (0..n).map(|_| self.rng.gen_range(0.3..1.5)).collect(),
        )
        .expect("non-empty")
    }

    fn uniform(&mut self, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape,
            (0..n).map(|_| self.rng.gen_range(-scale..scale)).collect(),
        )
        .expect("non-empty")
    }
}

/// `Σ out ⊙ R` with a fixed random `R`, so every output coordinate carries
/// a distinct weight.
fn project(g: &mut Graph, out: Var, salt: u64) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ salt);
    let n: usize = shape.iter().product();
    let r = g.constant(Tensor::new(
        &shape,
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?);
    let p = g.mul(out, r)?;
    Ok(g.sum(p))
}

type OpFn = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

fn op_cases(x: &mut Inputs) -> Vec<(&'static str, Vec<Tensor>, OpFn)> {
    let s = [2, 3, 5];
    let mut cases: Vec<(&'static str, Vec<Tensor>, OpFn)> = vec![
        (
            "add",
            vec![x.signed(&s), x.signed(&s)],
            Box::new(|g, v| {
                let o = g.add(v[0], v[1])?;
                project(g, o, 1)
            }),
        ),
        (
            "sub",
            vec![x.signed(&s), x.signed(&s)],
            Box::new(|g, v| {
                let o = g.sub(v[0], v[1])?;
                project(g, o, 2)
            }),
        ),
        (
            "mul",
            vec![x.signed(&s), x.signed(&s)],
            Box::new(|g, v| {
                let o = g.mul(v[0], v[1])?;
                project(g, o, 3)
            }),
        ),
        (
            "affine",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let o = g.affine(v[0], -1.7, 0.3);
                project(g, o, 4)
            }),
        ),
        (
            "scale",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let o = g.scale(v[0], 2.5);
                project(g, o, 5)
            }),
        ),
        (
            "add_bias",
            vec![x.signed(&s), x.signed(&[3])],
            Box::new(|g, v| {
                let o = g.add_bias(v[0], v[1])?;
                project(g, o, 6)
            }),
        ),
        (
            "clamp_min",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let o = g.clamp_min(v[0], 0.05);
                project(g, o, 7)
            }),
        ),
        (
            "sum",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let sq = g.mul(v[0], v[0])?;
                Ok(g.sum(sq))
            }),
        ),
        (
            "mean",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let sq = g.mul(v[0], v[0])?;
                Ok(g.mean(sq))
            }),
        ),
        (
            "reshape",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let o = g.reshape(v[0], &[6, 1, 5])?;
                project(g, o, 8)
            }),
        ),
        (
            "concat_channels",
            vec![x.signed(&s), x.signed(&[2, 2, 5])],
            Box::new(|g, v| {
                let o = g.concat_channels(&[v[0], v[1]])?;
                project(g, o, 9)
            }),
        ),
        (
            "gather",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let index: Vec<usize> = (0..40).map(|i| (i * 7 + 3) % 30).collect();
                let o = g.gather(v[0], Arc::new(index), &[2, 4, 5])?;
                project(g, o, 10)
            }),
        ),
        (
            "reflect_pad",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let o = g.reflect_pad(v[0], 3, 2)?;
                project(g, o, 11)
            }),
        ),
        (
            "slice_time",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let o = g.slice_time(v[0], 1, 3)?;
                project(g, o, 12)
            }),
        ),
        (
            "transpose12",
            vec![x.signed(&s)],
            Box::new(|g, v| {
                let o = g.transpose12(v[0])?;
                project(g, o, 13)
            }),
        ),
        (
            "linear_map",
            vec![x.signed(&[4, 3]), x.signed(&s)],
            Box::new(|g, v| {
                let o = g.linear_map(v[0], v[1])?;
                project(g, o, 14)
            }),
        ),
        (
            "l1_loss",
            vec![x.signed(&s), x.signed(&s)],
            Box::new(|g, v| {
                let b = g.affine(v[1], 1.0, 2.5);
                g.l1_loss(v[0], b)
            }),
        ),
        (
            "mse_to",
            vec![x.signed(&s)],
            Box::new(|g, v| Ok(g.mse_to(v[0], 0.4))),
        ),
        (
            "avg_pool",
            vec![x.signed(&[2, 3, 9])],
            Box::new(|g, v| {
                let o = g.avg_pool(v[0], 4, 2, 2)?;
                project(g, o, 15)
            }),
        ),
        (
            "conv1d",
            vec![x.signed(&[2, 3, 11]), x.signed(&[4, 3, 3]), x.signed(&[4])],
            Box::new(|g, v| {
                let o = g.conv1d(v[0], v[1], Some(v[2]), 1, 2, 2)?;
                project(g, o, 16)
            }),
        ),
        (
            "conv1d_strided",
            vec![x.signed(&[1, 2, 13]), x.signed(&[3, 2, 5])],
            Box::new(|g, v| {
                let o = g.conv1d(v[0], v[1], None, 3, 1, 2)?;
                project(g, o, 17)
            }),
        ),
        (
            "conv_transpose1d",
            vec![x.signed(&[2, 3, 4]), x.signed(&[3, 2, 8])],
            Box::new(|g, v| {
                let o = g.conv_transpose1d(v[0], v[1], 4, 2)?;
                project(g, o, 18)
            }),
        ),
        (
            "framed_dft_power",
            vec![x.signed(&[2, 1, 40])],
            Box::new(|g, v| {
                let o = g.framed_dft_power(v[0], 16, 4, Window::Hann)?;
                project(g, o, 19)
            }),
        ),
        (
            "cepstrum_to_impulse",
            vec![x.uniform(&[2, 8, 3], 0.3)],
            Box::new(|g, v| {
                let o = g.cepstrum_to_impulse(v[0], 32, 16)?;
                project(g, o, 20)
            }),
        ),
        (
            "ltv_filter",
            vec![x.signed(&[2, 1, 24]), x.signed(&[2, 3, 6])],
            Box::new(|g, v| {
                let o = g.ltv_filter(v[0], v[1], 8)?;
                project(g, o, 21)
            }),
        ),
        (
            "split_features",
            vec![x.signed(&s), x.uniform(&s, 1.0)],
            Box::new(|g, v| {
                let w = g.sigmoid(v[1]);
                let (sp, ap) = split_features(g, v[0], w)?;
                let a = project(g, sp, 22)?;
                let b = project(g, ap, 23)?;
                g.add(a, b)
            }),
        ),
    ];
    let pointwise = [
        ("leaky_relu", Pointwise::LeakyRelu(0.1)),
        ("tanh", Pointwise::Tanh),
        ("sigmoid", Pointwise::Sigmoid),
        ("exp", Pointwise::Exp),
        ("log1p_abs", Pointwise::Log1pAbs),
        ("square", Pointwise::Square),
        ("abs", Pointwise::Abs),
        ("softplus", Pointwise::Softplus),
    ];
    for (i, (name, kind)) in pointwise.into_iter().enumerate() {
        cases.push((
            name,
            vec![x.signed(&s)],
            Box::new(move |g, v| {
                let o = g.pointwise(v[0], kind);
                project(g, o, 100 + i as u64)
            }),
        ));
    }
    cases.push((
        "log",
        vec![x.positive(&s)],
        Box::new(|g, v| {
            let o = g.ln(v[0]);
            project(g, o, 200)
        }),
    ));
    cases
}

/// Adds `N(0, scale²)`-like uniform noise to every parameter so no layer
/// sits at an exactly-zero initialization.
fn jitter(store: &mut ParamStore, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).value.data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

fn test_signal(frames: usize, hop: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames * hop)
        .map(|n| {
            0.4 * (0.07 * n as f64).sin()
                + 0.2 * (0.31 * n as f64).sin()
                + rng.gen_range(-0.05..0.05)
        })
        .collect()
}

/// Mel L1 of the DSP vocoder wrt all of its parameters.
fn dsp_case(eps: f64, coords: Coords) -> Result<GradCheckReport> {
    let config = DspConfig {
        hidden: 8,
        layers: 2,
        cepstrum_len: 24,
        ..DspConfig::default()
    };
    let mut nets = NNFilterNets::new(config, 7)?;
    jitter(&mut nets.store, 0.02, 8);
    let hop = nets.config.hop;
    let analyzer = MelAnalyzer::new(&FrameParams::default())?;
    let mut x = Inputs {
        rng: ChaCha8Rng::seed_from_u64(9),
    };
    let mel = x.uniform(&[1, 80, CHECK_FRAMES], 1.0);
    let sine = Tensor::new(
        &[1, 1, CHECK_FRAMES * hop],
        test_signal(CHECK_FRAMES, hop, 1),
    )?;
    let noise = Tensor::new(
        &[1, 1, CHECK_FRAMES * hop],
        test_signal(CHECK_FRAMES, hop, 2),
    )?;
    let target = Tensor::new(
        &[1, 1, CHECK_FRAMES * hop],
        test_signal(CHECK_FRAMES, hop, 3),
    )?;
    let nets = &nets;
    grad_check_params(
        &nets.store,
        |g, store| {
            let m = g.constant(mel.clone());
            let s = g.constant(sine.clone());
            let n = g.constant(noise.clone());
            let y = nets.synthesize_graph(g, store, m, s, n)?;
            let my = analyzer.log_mel_graph(g, y)?;
            let t = g.constant(target.clone());
            let mt = analyzer.log_mel_graph(g, t)?;
            g.l1_loss(my, mt)
        },
        eps,
        coords,
    )
}

/// Full generator objective (adversarial, reconstruction and feature
/// matching through a frozen discriminator) wrt every generator parameter.
fn generator_case(eps: f64, coords: Coords) -> Result<GradCheckReport> {
    let config = GeneratorConfig {
        initial_channels: 8,
        upsample_channels: vec![8, 4, 4],
        resblock_kernels: vec![3],
        resblock_dilations: vec![1, 3],
        ..GeneratorConfig::default()
    };
    let gen = Generator::new(config, 11)?;
    let disc = DiscriminatorEnsemble::new(
        DiscriminatorConfig {
            channels: vec![4, 4, 4],
            ..DiscriminatorConfig::default()
        },
        12,
    )?;
    let hop = gen.config.hop();
    let analyzer = MelAnalyzer::new(&FrameParams::default())?;
    let mut x = Inputs {
        rng: ChaCha8Rng::seed_from_u64(13),
    };
    let mel = x.uniform(&[1, 80, CHECK_FRAMES], 1.0);
    let p1 = Tensor::new(
        &[1, 1, CHECK_FRAMES * hop],
        test_signal(CHECK_FRAMES, hop, 4),
    )?;
    // The reference sits near the current output, as late in training,
    // which keeps the reconstruction term small.
    let real = {
        let mut g = Graph::inference();
        let m = g.constant(mel.clone());
        let p = g.constant(p1.clone());
        let y = gen.forward(&mut g, &gen.store, m, Some(p))?;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let data = g
            .value(y)
            .data()
            .iter()
            .map(|v| v + rng.gen_range(-0.01..0.01))
            .collect();
        Tensor::new(&[1, 1, CHECK_FRAMES * hop], data)?
    };
    let (gen, disc) = (&gen, &disc);
    let f = |g: &mut Graph, store: &ParamStore| -> Result<Var> {
        let m = g.constant(mel.clone());
        let p = g.constant(p1.clone());
        let r = g.constant(real.clone());
        let y = gen.forward(g, store, m, Some(p))?;
        g.freeze_params(true);
        let fake = disc.forward(g, &disc.store, y)?;
        let reals = disc.forward(g, &disc.store, r)?;
        g.freeze_params(false);
        let rf: Vec<Vec<Var>> = reals.iter().map(|b| b.features.clone()).collect();
        let my = analyzer.log_mel_graph(g, y)?;
        let mr = analyzer.log_mel_graph(g, r)?;
        Ok(generator_loss(g, &fake, &rf, my, mr, LossWeights::default())?.total)
    };
    grad_check_params(&gen.store, f, eps, coords)
}

/// Every registered op on small random inputs, all coordinates.
pub fn op_suite(eps: f64, seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut x = Inputs {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut out = Vec::new();
    for (name, inputs, f) in op_cases(&mut x) {
        let report = grad_check_coords(|g, v| f(g, v), &inputs, eps, Coords::All)?;
        out.push(SuiteEntry {
            name: name.to_string(),
            report,
        });
    }
    Ok(out)
}

/// Log-mel front end and both vocoder objectives on `CHECK_FRAMES` frames.
/// `per_tensor` bounds the coordinates perturbed per parameter tensor.
pub fn composite_suite(eps: f64, per_tensor: usize, seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    let log_mel_input = Tensor::new(
        &[1, 1, CHECK_FRAMES * 256],
        test_signal(CHECK_FRAMES, 256, seed),
    )?;
    let analyzer = MelAnalyzer::new(&FrameParams::default())?;
    let report = grad_check_coords(
        |g, v| {
            let m = analyzer.log_mel_graph(g, v[0])?;
            project(g, m, 300)
        },
        &[log_mel_input],
        eps,
        Coords::Sample {
            per_tensor: 64,
            seed,
        },
    )?;
    out.push(SuiteEntry {
        name: "log_mel".into(),
        report,
    });
    let coords = Coords::Sample { per_tensor, seed };
    out.push(SuiteEntry {
        name: "dsp_mel_loss".into(),
        report: dsp_case(eps, coords)?,
    });
    out.push(SuiteEntry {
        name: "generator_loss".into(),
        report: generator_case(eps, coords)?,
    });
    Ok(out)
}

pub fn run_suite(eps: f64, per_tensor: usize, seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut out = op_suite(eps, seed)?;
    out.extend(composite_suite(eps, per_tensor, seed)?);
    Ok(out)
}
