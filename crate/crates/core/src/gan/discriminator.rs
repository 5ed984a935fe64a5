//! Multi-period and multi-scale discriminator branches.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::checkpoint::Header;
use crate::autodiff::{reflect_index, Graph, ParamStore, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::Conv1d;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub periods: Vec<usize>,
    pub scales: Vec<usize>,
    /// Widths of the strided layers in every branch.
    pub channels: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            periods: vec![2, 3],
            scales: vec![1, 2],
            channels: vec![16, 32, 64],
        }
    }
}

/// Scores `[N, 1, T']` plus every intermediate activation.
pub struct BranchOutput {
    pub score: Var,
    pub features: Vec<Var>,
}

enum Kind {
    Period(usize),
    Scale(usize),
}

struct Branch {
    kind: Kind,
    layers: Vec<Conv1d>,
    post: Conv1d,
}

impl Branch {
    fn period(store: &mut ParamStore, p: usize, channels: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let name = format!("mpd.{p}");
        let mut cin = 1;
        let mut layers = Vec::new();
        for (i, &c) in channels.iter().enumerate() {
            layers.push(Conv1d::new(
                store,
                &format!("{name}.{i}"),
                cin,
                c,
                5,
                3,
                1,
                2,
                rng,
            ));
            cin = c;
        }
        layers.push(Conv1d::same(
            store,
            &format!("{name}.last"),
            cin,
            cin,
            5,
            1,
            rng,
        ));
        let post = Conv1d::same(store, &format!("{name}.post"), cin, 1, 3, 1, rng);
        Self {
            kind: Kind::Period(p),
            layers,
            post,
        }
    }

    fn scale(store: &mut ParamStore, s: usize, channels: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let name = format!("msd.{s}");
        let mut layers = vec![Conv1d::same(
            store,
            &format!("{name}.in"),
            1,
            channels[0],
            15,
            1,
            rng,
        )];
        let mut cin = channels[0];
        for (i, &c) in channels.iter().enumerate() {
            layers.push(Conv1d::new(
                store,
                &format!("{name}.{i}"),
                cin,
                c,
                41,
                4,
                1,
                20,
                rng,
            ));
            cin = c;
        }
        layers.push(Conv1d::same(
            store,
            &format!("{name}.last"),
            cin,
            cin,
            5,
            1,
            rng,
        ));
        let post = Conv1d::same(store, &format!("{name}.post"), cin, 1, 3, 1, rng);
        Self {
            kind: Kind::Scale(s),
            layers,
            post,
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<BranchOutput> {
        let mut h = match self.kind {
            Kind::Period(p) => fold_period(g, x, p)?,
            Kind::Scale(s) => {
                let mut h = x;
                let mut s = s;
                while s > 1 {
                    h = g.avg_pool(h, 4, 2, 2)?;
                    s /= 2;
                }
                h
            }
        };
        let mut features = Vec::with_capacity(self.layers.len() + 1);
        for layer in &self.layers {
            h = layer.forward(g, store, h)?;
            h = g.leaky_relu(h);
            features.push(h);
        }
        let score = self.post.forward(g, store, h)?;
        features.push(score);
        Ok(BranchOutput { score, features })
    }
}

/// `[B, 1, T]` reflect-padded to a multiple of `p`, then regrouped as
/// `[B·p, 1, T/p]` so that row `b·p + j` holds samples `j, j+p, j+2p, …`.
fn fold_period(g: &mut Graph, x: Var, p: usize) -> Result<Var> {
    let (b, t) = match *g.shape(x) {
        [b, 1, t] => (b, t),
        _ => {
            return Err(shape_err(
                "period fold",
                "input",
                format!("{:?}", g.shape(x)),
            ))
        }
    };
    let padded = t.div_ceil(p) * p;
    let rows = padded / p;
    let mut index = Vec::with_capacity(b * padded);
    for bi in 0..b {
        for j in 0..p {
            for r in 0..rows {
                index.push(bi * t + reflect_index((r * p + j) as isize, t));
            }
        }
    }
    g.gather(x, Arc::new(index), &[b * p, 1, rows])
}

pub struct DiscriminatorEnsemble {
    pub config: DiscriminatorConfig,
    pub store: ParamStore,
    branches: Vec<Branch>,
}

impl DiscriminatorEnsemble {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.channels.is_empty() || config.channels.contains(&0) {
            return Err(Error::Config(
                "discriminator channels must be positive and non-empty".into(),
            ));
        }
        if config.periods.contains(&0) || config.scales.iter().any(|s| !s.is_power_of_two()) {
            return Err(Error::Config(
                "periods must be positive and scales powers of two".into(),
            ));
        }
        if config.periods.is_empty() && config.scales.is_empty() {
            return Err(Error::Config(
                "discriminator needs at least one branch".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut branches = Vec::new();
        for &p in &config.periods {
            branches.push(Branch::period(&mut store, p, &config.channels, &mut rng));
        }
        for &s in &config.scales {
            branches.push(Branch::scale(&mut store, s, &config.channels, &mut rng));
        }
        Ok(Self {
            config,
            store,
            branches,
        })
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn header(&self) -> Header {
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut h = Header::new();
        h.set("model", "discriminator");
        h.set("periods", join(&self.config.periods));
        h.set("scales", join(&self.config.scales));
        h.set("channels", join(&self.config.channels));
        h
    }

    pub fn from_checkpoint(header: &Header, params: &ParamStore) -> Result<Self> {
        let list = |k: &str| -> Result<Vec<usize>> {
            let raw = header
                .get(k)
                .ok_or_else(|| Error::Checkpoint(format!("header lacks `{k}`")))?;
            if raw.is_empty() {
                return Ok(Vec::new());
            }
            raw.split(',')
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Checkpoint(format!("bad `{k}` = `{raw}`")))
                })
                .collect()
        };
        let config = DiscriminatorConfig {
            periods: list("periods")?,
            scales: list("scales")?,
            channels: list("channels")?,
        };
        let mut d = Self::new(config, 0)?;
        d.store.load_from(params)?;
        Ok(d)
    }

    /// Evaluates every branch on `x [B, 1, T]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Vec<BranchOutput>> {
        self.branches
            .iter()
            .map(|b| b.forward(g, store, x))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn fold_groups_phases() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[1, 1, 7], (0..7).map(|v| v as f64).collect()).unwrap());
        let y = fold_period(&mut g, x, 3).unwrap();
        assert_eq!(g.shape(y), &[3, 1, 3]);
        // Sample 7 and 8 are reflections of 5 and 4.
        assert_eq!(
            g.value(y).data(),
            &[0.0, 3.0, 6.0, 1.0, 4.0, 5.0, 2.0, 5.0, 4.0]
        );
    }

    #[test]
    fn every_branch_returns_scores_and_features() {
        let d = DiscriminatorEnsemble::new(DiscriminatorConfig::default(), 0).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[2, 1, 2048], 0.1));
        let outs = d.forward(&mut g, &d.store, x).unwrap();
        assert_eq!(outs.len(), 4);
        for o in &outs {
            assert!(o.features.len() >= 4);
            assert_eq!(g.shape(o.score)[1], 1);
        }
        let back = DiscriminatorEnsemble::from_checkpoint(&d.header(), &d.store).unwrap();
        assert!(back.store.same_values(&d.store));
    }
}
