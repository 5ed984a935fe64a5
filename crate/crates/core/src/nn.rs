//! Parameterised layers built on the graph operations.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;

/// `padding` that keeps the time length for an odd kernel at stride 1.
pub fn same_padding(kernel: usize, dilation: usize) -> usize {
    dilation * (kernel - 1) / 2
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * kernel;
        Self {
            weight: store.add_uniform(format!("{name}.weight"), &[cout, cin, kernel], fan_in, rng),
            bias: store.add_uniform(format!("{name}.bias"), &[cout], fan_in, rng),
            stride,
            dilation,
            padding,
        }
    }

    /// Stride-1 convolution preserving length.
    pub fn same<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        let pad = same_padding(kernel, dilation);
        Self::new(store, name, cin, cout, kernel, 1, dilation, pad, rng)
    }

    /// Same-length convolution whose weights and bias start at zero.
    pub fn zeroed(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
    ) -> Self {
        Self {
            weight: store.add_zeros(format!("{name}.weight"), &[cout, cin, kernel]),
            bias: store.add_zeros(format!("{name}.bias"), &[cout]),
            stride: 1,
            dilation: 1,
            padding: same_padding(kernel, 1),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.conv1d(x, w, Some(b), self.stride, self.dilation, self.padding)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * kernel / stride;
        Self {
            weight: store.add_uniform(format!("{name}.weight"), &[cin, cout, kernel], fan_in, rng),
            bias: store.add_uniform(format!("{name}.bias"), &[cout], fan_in, rng),
            stride,
            padding,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.conv_transpose1d(x, w, self.stride, self.padding)?;
        g.add_bias(y, b)
    }
}

/// Same-length convolutions with leaky ReLU between layers (none after the
/// last).
#[derive(Clone, Debug)]
pub struct ConvStack {
    pub layers: Vec<Conv1d>,
}

impl ConvStack {
    /// `depth` layers `cin -> hidden -> ... -> cout`; the final layer starts
    /// at zero when `zero_last` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        hidden: usize,
        cout: usize,
        depth: usize,
        kernel: usize,
        zero_last: bool,
        rng: &mut R,
    ) -> Self {
        assert!(depth >= 1, "conv stack needs at least one layer");
        let layers = (0..depth)
            .map(|i| {
                let a = if i == 0 { cin } else { hidden };
                let b = if i + 1 == depth { cout } else { hidden };
                let n = format!("{name}.{i}");
                if i + 1 == depth && zero_last {
                    Conv1d::zeroed(store, &n, a, b, kernel)
                } else {
                    Conv1d::same(store, &n, a, b, kernel, 1, rng)
                }
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Result<Var> {
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, store, x)?;
            if i + 1 < self.layers.len() {
                x = g.leaky_relu(x);
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::SeedableRng;

    #[test]
    fn stack_preserves_length_and_zero_last_outputs_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let s = ConvStack::new(&mut store, "s", 3, 8, 5, 4, 3, true, &mut rng);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[2, 3, 11], 0.3));
        let y = s.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.shape(y), &[2, 5, 11]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
        assert_eq!(store.len(), 8);
    }
}
