//! GAN objective: multi-scale hinge losses plus feature matching.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

fn scale_mismatch(op: &'static str, real: usize, fake: usize) -> Error {
    Error::DimMismatch {
        op,
        axis: "scales",
        expected: real,
        actual: fake,
    }
}

/// Hinge discriminator objective summed over scales:
/// sum_k mean(max(0, 1 - D_k(x))) + mean(max(0, 1 + D_k(G(s)))).
/// Zero exactly when every real score is >= 1 and every fake score <= -1.
pub fn discriminator_loss(
    g: &mut Graph,
    real_scores: &[NodeId],
    fake_scores: &[NodeId],
) -> Result<NodeId> {
    if real_scores.len() != fake_scores.len() || real_scores.is_empty() {
        return Err(scale_mismatch(
            "discriminator_loss",
            real_scores.len(),
            fake_scores.len(),
        ));
    }
    let mut total: Option<NodeId> = None;
    for (&r, &f) in real_scores.iter().zip(fake_scores) {
        let hinge_real = g.affine(r, -1.0, 1.0);
        let hinge_real = g.relu(hinge_real);
        let hinge_real = g.mean_all(hinge_real);
        let hinge_fake = g.affine(f, 1.0, 1.0);
        let hinge_fake = g.relu(hinge_fake);
        let hinge_fake = g.mean_all(hinge_fake);
        let scale_sum = g.add(hinge_real, hinge_fake)?;
        total = Some(match total {
            None => scale_sum,
            Some(t) => g.add(t, scale_sum)?,
        });
    }
    Ok(total.expect("at least one scale"))
}

/// Generator adversarial objective: sum_k mean(-D_k(G(s))).
pub fn generator_adversarial_loss(g: &mut Graph, fake_scores: &[NodeId]) -> Result<NodeId> {
    if fake_scores.is_empty() {
        return Err(scale_mismatch("generator_adversarial_loss", 1, 0));
    }
    let mut total: Option<NodeId> = None;
    for &f in fake_scores {
        let neg = g.affine(f, -1.0, 0.0);
        let m = g.mean_all(neg);
        total = Some(match total {
            None => m,
            Some(t) => g.add(t, m)?,
        });
    }
    Ok(total.expect("at least one scale"))
}

/// L1 feature matching over every layer of every scale block, each layer
/// normalized by its own element count (a per-layer element mean).
pub fn feature_matching_loss(
    g: &mut Graph,
    real_features: &[Vec<NodeId>],
    fake_features: &[Vec<NodeId>],
) -> Result<NodeId> {
    if real_features.len() != fake_features.len() || real_features.is_empty() {
        return Err(scale_mismatch(
            "feature_matching_loss",
            real_features.len(),
            fake_features.len(),
        ));
    }
    let mut total: Option<NodeId> = None;
    for (scale, (rs, fs)) in real_features.iter().zip(fake_features).enumerate() {
        if rs.len() != fs.len() {
            return Err(Error::InvalidArg {
                op: "feature_matching_loss",
                reason: format!(
                    "scale {scale}: layer count mismatch ({} real vs {} fake)",
                    rs.len(),
                    fs.len()
                ),
            });
        }
        for (&r, &f) in rs.iter().zip(fs) {
            let term = g.l1_mean(r, f)?;
            total = Some(match total {
                None => term,
                Some(t) => g.add(t, term)?,
            });
        }
    }
    total.ok_or(Error::InvalidArg {
        op: "feature_matching_loss",
        reason: "no feature layers".into(),
    })
}

/// Combined generator objective: adversarial + lambda * feature matching.
pub fn generator_total_loss(g: &mut Graph, adv: NodeId, fm: NodeId, lambda: f32) -> Result<NodeId> {
    let scaled = g.affine(fm, lambda, 0.0);
    g.add(adv, scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    fn scores(g: &mut Graph, value: f32, scales: usize) -> Vec<NodeId> {
        (0..scales)
            .map(|_| g.leaf(Tensor::filled(Shape::new(1, 1, 5), value)))
            .collect()
    }

    #[test]
    fn d_loss_zero_when_margins_satisfied() {
        let mut g = Graph::new();
        let real = scores(&mut g, 2.0, 3);
        let fake = scores(&mut g, -2.0, 3);
        let loss = discriminator_loss(&mut g, &real, &fake).unwrap();
        assert_eq!(g.value(loss).item(), 0.0);
    }

    #[test]
    fn d_loss_at_zero_scores_is_two_per_scale() {
        let mut g = Graph::new();
        let real = scores(&mut g, 0.0, 3);
        let fake = scores(&mut g, 0.0, 3);
        let loss = discriminator_loss(&mut g, &real, &fake).unwrap();
        assert_eq!(g.value(loss).item(), 6.0);
    }

    #[test]
    fn d_loss_real_half_term() {
        let mut g = Graph::new();
        let real = scores(&mut g, 0.5, 1);
        let fake = scores(&mut g, -2.0, 1); // fake term vanishes
        let loss = discriminator_loss(&mut g, &real, &fake).unwrap();
        assert!((g.value(loss).item() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn d_loss_scale_count_mismatch_rejected() {
        let mut g = Graph::new();
        let real = scores(&mut g, 0.0, 3);
        let fake = scores(&mut g, 0.0, 2);
        assert!(discriminator_loss(&mut g, &real, &fake).is_err());
    }

    #[test]
    fn adv_loss_values_and_monotonicity() {
        let mut g = Graph::new();
        let ones = scores(&mut g, 1.0, 3);
        let loss = generator_adversarial_loss(&mut g, &ones).unwrap();
        assert_eq!(g.value(loss).item(), -3.0);

        let zeros = scores(&mut g, 0.0, 3);
        let loss0 = generator_adversarial_loss(&mut g, &zeros).unwrap();
        assert_eq!(g.value(loss0).item(), 0.0);
        // higher scores, lower loss
        assert!(g.value(loss).item() < g.value(loss0).item());
    }

    #[test]
    fn fm_loss_spec_values() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_vec(Shape::new(1, 1, 2), vec![1.0, 2.0]).unwrap());
        let b = g.leaf(Tensor::zeros(Shape::new(1, 1, 2)));
        let loss = feature_matching_loss(&mut g, &[vec![a]], &[vec![b]]).unwrap();
        assert_eq!(g.value(loss).item(), 1.5);

        let same = feature_matching_loss(&mut g, &[vec![a]], &[vec![a]]).unwrap();
        assert_eq!(g.value(same).item(), 0.0);

        // additive across scales
        let two = feature_matching_loss(&mut g, &[vec![a], vec![a]], &[vec![b], vec![b]]).unwrap();
        assert_eq!(g.value(two).item(), 3.0);
    }

    #[test]
    fn fm_layer_count_mismatch_rejected() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(Shape::new(1, 1, 2)));
        assert!(feature_matching_loss(&mut g, &[vec![a, a]], &[vec![a]]).is_err());
    }

    #[test]
    fn total_loss_composition() {
        let mut g = Graph::new();
        let adv = g.scalar_leaf(-3.0);
        let fm = g.scalar_leaf(0.5);
        let total = generator_total_loss(&mut g, adv, fm, 10.0).unwrap();
        assert_eq!(g.value(total).item(), 2.0);
        let pure = generator_total_loss(&mut g, adv, fm, 0.0).unwrap();
        assert_eq!(g.value(pure).item(), -3.0);
    }
}
