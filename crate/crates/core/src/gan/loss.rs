//! Least-squares adversarial, feature-matching and mel reconstruction losses.

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};

use super::discriminator::BranchOutput;

pub const LAMBDA_RECON: f64 = 45.0;
pub const LAMBDA_FM: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub recon: f64,
    pub fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            recon: LAMBDA_RECON,
            fm: LAMBDA_FM,
        }
    }
}

/// `Σ_branches mean((D(x) − 1)²) + mean(D(x̂)²)`.
pub fn discriminator_loss(
    g: &mut Graph,
    real: &[BranchOutput],
    fake: &[BranchOutput],
) -> Result<Var> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(shape_err(
            "discriminator_loss",
            "branches",
            format!("{} vs {}", real.len(), fake.len()),
        ));
    }
    let mut total: Option<Var> = None;
    for (r, f) in real.iter().zip(fake) {
        let lr = g.mse_to(r.score, 1.0);
        let lf = g.mse_to(f.score, 0.0);
        let l = g.add(lr, lf)?;
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l)?,
        });
    }
    Ok(total.expect("non-empty"))
}

/// `Σ_branches mean((D(x̂) − 1)²)`.
pub fn adversarial_loss(g: &mut Graph, fake: &[BranchOutput]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for f in fake {
        let l = g.mse_to(f.score, 1.0);
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l)?,
        });
    }
    total.ok_or_else(|| shape_err("adversarial_loss", "branches", "none"))
}

/// Mean over branches and layers of the mean absolute feature difference.
pub fn feature_matching_loss(g: &mut Graph, real: &[Vec<Var>], fake: &[Vec<Var>]) -> Result<Var> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(shape_err(
            "feature_matching_loss",
            "branches",
            format!("{} vs {}", real.len(), fake.len()),
        ));
    }
    let mut terms = Vec::new();
    for (rb, fb) in real.iter().zip(fake) {
        if rb.len() != fb.len() {
            return Err(shape_err(
                "feature_matching_loss",
                "layers",
                format!("{} vs {}", rb.len(), fb.len()),
            ));
        }
        for (&r, &f) in rb.iter().zip(fb) {
            terms.push(g.l1_loss(f, r)?);
        }
    }
    let n = terms.len() as f64;
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(g.scale(acc, 1.0 / n))
}

/// Generator objective and its weighted parts.
pub struct GeneratorLoss {
    pub total: Var,
    pub adv: Var,
    pub recon: Var,
    pub fm: Var,
}

/// `adv + λ_recon · L1(mel(x̂), target) + λ_fm · fm`.
pub fn generator_loss(
    g: &mut Graph,
    fake: &[BranchOutput],
    real_features: &[Vec<Var>],
    mel_fake: Var,
    mel_target: Var,
    weights: LossWeights,
) -> Result<GeneratorLoss> {
    let adv = adversarial_loss(g, fake)?;
    let l1 = g.l1_loss(mel_fake, mel_target)?;
    let recon = g.scale(l1, weights.recon);
    let fake_features: Vec<Vec<Var>> = fake.iter().map(|b| b.features.clone()).collect();
    let fm = feature_matching_loss(g, real_features, &fake_features)?;
    let fm = g.scale(fm, weights.fm);
    let t = g.add(adv, recon)?;
    let total = g.add(t, fm)?;
    Ok(GeneratorLoss {
        total,
        adv,
        recon,
        fm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn branch(g: &mut Graph, score: f64, feat: f64) -> BranchOutput {
        let s = g.constant(Tensor::full(&[1, 1, 5], score));
        let f = g.constant(Tensor::full(&[1, 2, 5], feat));
        BranchOutput {
            score: s,
            features: vec![f, s],
        }
    }

    #[test]
    fn discriminator_loss_values() {
        let mut g = Graph::new();
        let cases = [(1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.5, 0.5, 0.5)];
        for (r, f, per_branch) in cases {
            let real = vec![branch(&mut g, r, 0.0), branch(&mut g, r, 0.0)];
            let fake = vec![branch(&mut g, f, 0.0), branch(&mut g, f, 0.0)];
            let l = discriminator_loss(&mut g, &real, &fake).unwrap();
            assert_eq!(g.value(l).item(), 2.0 * per_branch);
        }
    }

    #[test]
    fn generator_loss_optimum_and_scaling() {
        let mut g = Graph::new();
        let fake = vec![branch(&mut g, 1.0, 0.3)];
        let real: Vec<Vec<Var>> = fake.iter().map(|b| b.features.clone()).collect();
        let mel = g.constant(Tensor::full(&[1, 80, 3], -2.0));
        let l = generator_loss(&mut g, &fake, &real, mel, mel, LossWeights::default()).unwrap();
        assert_eq!(g.value(l.total).item(), 0.0);

        let zero = vec![branch(&mut g, 0.0, 0.3)];
        let real: Vec<Vec<Var>> = zero.iter().map(|b| b.features.clone()).collect();
        let l = generator_loss(&mut g, &zero, &real, mel, mel, LossWeights::default()).unwrap();
        assert_eq!(g.value(l.adv).item(), 1.0);

        let other = g.constant(Tensor::full(&[1, 80, 3], -1.3));
        let w = LossWeights::default();
        let a = generator_loss(&mut g, &zero, &real, mel, other, w).unwrap();
        let b = generator_loss(
            &mut g,
            &zero,
            &real,
            mel,
            other,
            LossWeights {
                recon: 2.0 * w.recon,
                ..w
            },
        )
        .unwrap();
        assert_eq!(g.value(b.recon).item(), 2.0 * g.value(a.recon).item());
        assert_eq!(g.value(b.adv).item(), g.value(a.adv).item());
        assert_eq!(g.value(b.fm).item(), g.value(a.fm).item());
    }

    #[test]
    fn feature_matching_offsets_and_permutation() {
        let mut g = Graph::new();
        let a = branch(&mut g, 0.2, 0.1);
        let b = branch(&mut g, 0.7, -0.4);
        let shift = |g: &mut Graph, br: &BranchOutput, c: f64| -> Vec<Var> {
            br.features.iter().map(|&f| g.affine(f, 1.0, c)).collect()
        };
        let real = vec![a.features.clone(), b.features.clone()];
        let fake = vec![shift(&mut g, &a, 0.25), shift(&mut g, &b, 0.25)];
        let l = feature_matching_loss(&mut g, &real, &fake).unwrap();
        assert!((g.value(l).item() - 0.25).abs() < 1e-15);
        let rr = vec![real[1].clone(), real[0].clone()];
        let ff = vec![fake[1].clone(), fake[0].clone()];
        let l2 = feature_matching_loss(&mut g, &rr, &ff).unwrap();
        assert!((g.value(l2).item() - g.value(l).item()).abs() < 1e-15);
        assert!(feature_matching_loss(&mut g, &real, &fake[..1]).is_err());
    }
}
