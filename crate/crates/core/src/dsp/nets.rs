//! Neural filter estimators: prenet, weight predictor and the periodic /
//! aperiodic complex-cepstrum heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::checkpoint::Header;
use crate::autodiff::{Backward, BackwardCtx, Graph, ParamStore, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::excitation::{DEFAULT_HARMONICS, DEFAULT_NOISE_AMPLITUDE};
use crate::nn::ConvStack;

/// Architecture and synthesis settings of the DSP vocoder.
#[derive(Clone, Debug, PartialEq)]
pub struct DspConfig {
    pub n_mels: usize,
    pub hidden: usize,
    pub layers: usize,
    pub kernel: usize,
    pub cepstrum_len: usize,
    pub ir_len: usize,
    pub n_fft: usize,
    pub hop: usize,
    pub harmonics: usize,
    pub noise_amplitude: f64,
    pub voicing_threshold: f64,
    pub use_weight_predictor: bool,
    pub sample_rate: u32,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            hidden: 256,
            layers: 4,
            kernel: 3,
            cepstrum_len: 222,
            ir_len: 512,
            n_fft: 1024,
            hop: 256,
            harmonics: DEFAULT_HARMONICS,
            noise_amplitude: DEFAULT_NOISE_AMPLITUDE,
            voicing_threshold: super::pitch::VOICING_THRESHOLD,
            use_weight_predictor: true,
            sample_rate: crate::signal::SAMPLE_RATE,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cepstrum_len == 0 || self.cepstrum_len > self.n_fft || self.ir_len > self.n_fft {
            return Err(Error::Config(format!(
                "cepstrum_len {} / ir_len {} must not exceed n_fft {}",
                self.cepstrum_len, self.ir_len, self.n_fft
            )));
        }
        if self.hidden == 0 || self.layers == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(
                "dsp nets need positive width/depth and an odd kernel".into(),
            ));
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::Config(format!(
                "noise_amplitude {}",
                self.noise_amplitude
            )));
        }
        Ok(())
    }

    pub fn write_header(&self, h: &mut Header) {
        h.set("n_mels", self.n_mels);
        h.set("hidden", self.hidden);
        h.set("layers", self.layers);
        h.set("kernel", self.kernel);
        h.set("cepstrum_len", self.cepstrum_len);
        h.set("ir_len", self.ir_len);
        h.set("n_fft", self.n_fft);
        h.set("hop", self.hop);
        h.set("harmonics", self.harmonics);
        h.set("noise_amplitude", self.noise_amplitude);
        h.set("voicing_threshold", self.voicing_threshold);
        h.set("use_weight_predictor", self.use_weight_predictor);
        h.set("sample_rate", self.sample_rate);
    }

    pub fn from_header(h: &Header) -> Result<Self> {
        Ok(Self {
            n_mels: h.parse_value("n_mels")?,
            hidden: h.parse_value("hidden")?,
            layers: h.parse_value("layers")?,
            kernel: h.parse_value("kernel")?,
            cepstrum_len: h.parse_value("cepstrum_len")?,
            ir_len: h.parse_value("ir_len")?,
            n_fft: h.parse_value("n_fft")?,
            hop: h.parse_value("hop")?,
            harmonics: h.parse_value("harmonics")?,
            noise_amplitude: h.parse_value("noise_amplitude")?,
            voicing_threshold: h.parse_value("voicing_threshold")?,
            use_weight_predictor: h.parse_value("use_weight_predictor")?,
            sample_rate: h.parse_value("sample_rate")?,
        })
    }
}

/// Intermediate and final outputs of the filter networks for one batch.
pub struct FilterOutputs {
    pub hidden: Var,
    pub weights: Var,
    pub periodic: Var,
    pub aperiodic: Var,
    /// `[B, F, ir_len]`
    pub ir_periodic: Var,
    /// `[B, F, ir_len]`
    pub ir_aperiodic: Var,
}

pub struct NNFilterNets {
    pub config: DspConfig,
    pub store: ParamStore,
    prenet: ConvStack,
    weight_predictor: Option<ConvStack>,
    periodic: ConvStack,
    aperiodic: ConvStack,
}

impl NNFilterNets {
    /// Fresh networks; the cepstrum heads start at zero so every initial
    /// filter is a unit impulse.
    pub fn new(config: DspConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let prenet = ConvStack::new(
            &mut store, "prenet", c.n_mels, c.hidden, c.hidden, c.layers, c.kernel, false, &mut rng,
        );
        let weight_predictor = c.use_weight_predictor.then(|| {
            ConvStack::new(
                &mut store, "weight", c.n_mels, c.hidden, c.hidden, c.layers, c.kernel, false,
                &mut rng,
            )
        });
        let periodic = ConvStack::new(
            &mut store,
            "periodic",
            c.hidden,
            c.hidden,
            c.cepstrum_len,
            c.layers,
            c.kernel,
            true,
            &mut rng,
        );
        let aperiodic = ConvStack::new(
            &mut store,
            "aperiodic",
            c.hidden,
            c.hidden,
            c.cepstrum_len,
            c.layers,
            c.kernel,
            true,
            &mut rng,
        );
        Ok(Self {
            config,
            store,
            prenet,
            weight_predictor,
            periodic,
            aperiodic,
        })
    }

    /// Rebuilds the networks described by a checkpoint header and loads
    /// its parameters.
    pub fn from_checkpoint(header: &Header, params: &ParamStore) -> Result<Self> {
        let mut nets = Self::new(DspConfig::from_header(header)?, 0)?;
        nets.store.load_from(params)?;
        Ok(nets)
    }

    pub fn header(&self) -> Header {
        let mut h = Header::new();
        h.set("model", "dsp");
        self.config.write_header(&mut h);
        h
    }

    /// Runs every subnet on `mel [B, n_mels, F]`.
    pub fn filters(&self, g: &mut Graph, store: &ParamStore, mel: Var) -> Result<FilterOutputs> {
        let shape = g.shape(mel).to_vec();
        if shape.len() != 3 || shape[1] != self.config.n_mels {
            return Err(shape_err("dsp filters", "mel", format!("{shape:?}")));
        }
        let hidden = self.prenet.forward(g, store, mel)?;
        let weights = match &self.weight_predictor {
            Some(net) => {
                let logits = net.forward(g, store, mel)?;
                g.sigmoid(logits)
            }
            None => g.constant(Tensor::full(g.shape(hidden), 0.5)),
        };
        let (periodic, aperiodic) = split_features(g, hidden, weights)?;
        let cp = self.periodic.forward(g, store, periodic)?;
        let ca = self.aperiodic.forward(g, store, aperiodic)?;
        let ir_periodic = g.cepstrum_to_impulse(cp, self.config.n_fft, self.config.ir_len)?;
        let ir_aperiodic = g.cepstrum_to_impulse(ca, self.config.n_fft, self.config.ir_len)?;
        Ok(FilterOutputs {
            hidden,
            weights,
            periodic,
            aperiodic,
            ir_periodic,
            ir_aperiodic,
        })
    }

    /// Differentiable waveform `[B, 1, F·hop]` from mel and the two sources.
    pub fn synthesize_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        mel: Var,
        sine: Var,
        noise: Var,
    ) -> Result<Var> {
        let f = self.filters(g, store, mel)?;
        let yp = g.ltv_filter(sine, f.ir_periodic, self.config.hop)?;
        let ya = g.ltv_filter(noise, f.ir_aperiodic, self.config.hop)?;
        g.add(yp, ya)
    }
}

/// Elementwise `(sp, ap)` with `sp ≈ w·h`, `ap ≈ (1 − w)·h` and
/// `sp + ap == h` exactly: the larger share is formed by a product and the
/// other by a subtraction that is exact because both operands lie within a
/// factor of two of each other.
fn split_pair(h: f64, w: f64) -> (f64, f64) {
    if w >= 0.5 {
        let sp = w * h;
        (sp, h - sp)
    } else {
        let ap = (1.0 - w) * h;
        (h - ap, ap)
    }
}

struct SplitOp {
    periodic: bool,
}

impl Backward for SplitOp {
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (h, w) = (ctx.inputs[0].data(), ctx.inputs[1].data());
        let sign = if self.periodic { 1.0 } else { -1.0 };
        let dh = ctx.needs[0].then(|| {
            grad.iter()
                .zip(w)
                .map(|(g, &w)| g * if self.periodic { w } else { 1.0 - w })
                .collect()
        });
        let dw = ctx.needs[1].then(|| grad.iter().zip(h).map(|(g, h)| sign * g * h).collect());
        vec![dh, dw]
    }
}

/// Splits hidden features `h` by weights `w` into periodic and aperiodic
/// parts whose sum reproduces `h` exactly.
pub fn split_features(g: &mut Graph, h: Var, w: Var) -> Result<(Var, Var)> {
    if g.shape(h) != g.shape(w) {
        return Err(shape_err(
            "split_features",
            "operands",
            format!("{:?} vs {:?}", g.shape(h), g.shape(w)),
        ));
    }
    let shape = g.shape(h).to_vec();
    let (sp, ap): (Vec<f64>, Vec<f64>) = g
        .value(h)
        .data()
        .iter()
        .zip(g.value(w).data())
        .map(|(&h, &w)| split_pair(h, w))
        .unzip();
    let sp = g.record(
        Tensor::new(&shape, sp)?,
        &[h, w],
        Box::new(SplitOp { periodic: true }),
    );
    let ap = g.record(
        Tensor::new(&shape, ap)?,
        &[h, w],
        Box::new(SplitOp { periodic: false }),
    );
    Ok((sp, ap))
}
