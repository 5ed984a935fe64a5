//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{hyper_err, Error, Result};

/// Which coordinates of each checked tensor are perturbed.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    /// At most `per_tensor` coordinates per tensor, drawn with `seed`.
    Sample {
        per_tensor: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates whose `±eps` step moved some piecewise op (leaky ReLU,
    /// abs, clamp) across its kink. A central difference straddling a kink
    /// does not estimate the derivative, so these are counted and left out
    /// of `max_relative_error`.
    pub non_smooth: usize,
    /// (tensor index, coordinate, analytic, numeric) at the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
    (analytic - numeric).abs() / denom
}

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(hyper_err("grad_check", "eps", eps));
    }
    Ok(())
}

fn select(n: usize, coords: Coords, salt: u64) -> Vec<usize> {
    match coords {
        Coords::All => (0..n).collect(),
        Coords::Sample { per_tensor, seed } => {
            if per_tensor >= n {
                return (0..n).collect();
            }
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut idx = sample(&mut rng, n, per_tensor).into_vec();
            idx.sort_unstable();
            idx
        }
    }
}

fn signed_scalar(graph: &Graph, v: Var) -> Result<(f64, u64)> {
    Ok((scalar_of(graph, v)?, graph.kink_signature().unwrap_or(0)))
}

fn scalar_of(graph: &Graph, v: Var) -> Result<f64> {
    let t = graph.value(v);
    if t.len() != 1 {
        return Err(Error::NonScalar(t.shape().to_vec()));
    }
    Ok(t.item())
}

struct Tracker {
    report: GradCheckReport,
}

impl Tracker {
    fn new() -> Self {
        Self {
            report: GradCheckReport {
                max_relative_error: 0.0,
                checked: 0,
                non_smooth: 0,
                worst: None,
            },
        }
    }

    /// Scores one coordinate given the objective and kink signature at the
    /// two perturbed points.
    fn probe(
        &mut self,
        tensor: usize,
        coord: usize,
        analytic: f64,
        base: u64,
        plus: (f64, u64),
        minus: (f64, u64),
        eps: f64,
    ) {
        if plus.1 != base || minus.1 != base {
            self.report.non_smooth += 1;
            return;
        }
        self.observe(tensor, coord, analytic, (plus.0 - minus.0) / (2.0 * eps));
    }

    fn observe(&mut self, tensor: usize, coord: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.report.checked += 1;
        if err > self.report.max_relative_error || self.report.worst.is_none() {
            self.report.max_relative_error = err;
            self.report.worst = Some((tensor, coord, analytic, numeric));
        }
    }
}

/// Compares tape gradients of `f` at `inputs` with central differences
/// `(f(x+eps) - f(x-eps)) / (2 eps)` and returns the worst relative error.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_coords(f, inputs, eps, Coords::All)
}

pub fn grad_check_coords<F>(
    f: F,
    inputs: &[Tensor],
    eps: f64,
    coords: Coords,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    check_eps(eps)?;
    let eval = |vals: &[Tensor]| -> Result<(f64, u64)> {
        let mut g = Graph::new();
        g.track_kinks();
        let vars: Vec<Var> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        signed_scalar(&g, out)
    };
    let mut g = Graph::new();
    g.track_kinks();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let (_, base) = signed_scalar(&g, out)?;
    let grads = g.backward(out)?;
    let mut tracker = Tracker::new();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = grads
            .get(*var)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[ti].len()]);
        for c in select(inputs[ti].len(), coords, ti as u64) {
            let orig = work[ti].data()[c];
            work[ti].data_mut()[c] = orig + eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[c] = orig - eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[c] = orig;
            tracker.probe(ti, c, analytic[c], base, plus, minus, eps);
        }
    }
    Ok(tracker.report)
}

/// Finite-difference check of every parameter in `store` feeding the scalar
/// built by `f`.
pub fn grad_check_params<F>(
    store: &ParamStore,
    f: F,
    eps: f64,
    coords: Coords,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    check_eps(eps)?;
    let eval = |params: &ParamStore| -> Result<(f64, u64)> {
        let mut g = Graph::new();
        g.track_kinks();
        let out = f(&mut g, params)?;
        signed_scalar(&g, out)
    };
    let mut g = Graph::new();
    g.track_kinks();
    let out = f(&mut g, store)?;
    let (_, base) = signed_scalar(&g, out)?;
    let grads = g.backward(out)?;
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    analytic_store.accumulate(&g, &grads);
    drop(g);

    let mut work = store.clone();
    let mut tracker = Tracker::new();
    let ids: Vec<_> = store.ids().collect();
    for (ti, id) in ids.into_iter().enumerate() {
        let n = store.value(id).len();
        for c in select(n, coords, ti as u64) {
            let orig = work.value(id).data()[c];
            work.get_mut(id).value.data_mut()[c] = orig + eps;
            let plus = eval(&work)?;
            work.get_mut(id).value.data_mut()[c] = orig - eps;
            let minus = eval(&work)?;
            work.get_mut(id).value.data_mut()[c] = orig;
            let analytic = analytic_store.get(id).grad[c];
            tracker.probe(ti, c, analytic, base, plus, minus, eps);
        }
    }
    Ok(tracker.report)
}
