use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};

/// Per-user loss weights `ω_k`, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    weights: Vec<f64>,
    epoch: usize,
}

impl LossWeights {
    /// `ω_k = 1/K` at epoch 0.
    pub fn uniform(users: usize) -> Self {
        LossWeights {
            weights: vec![1.0 / users as f64; users],
            epoch: 0,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn users(&self) -> usize {
        self.weights.len()
    }

    /// Number of updates applied so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }
}

/// `ω_k ← L_k / Σ_j L_j`. All-zero losses keep the previous weights.
pub fn update_weights(prev: &LossWeights, losses: &[f64]) -> Result<LossWeights> {
    if losses.len() != prev.users() {
        return Err(Error::Dimension(format!("{} losses for {} users", losses.len(), prev.users())));
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::DegenerateInput(format!("loss {bad} is not a finite nonnegative value")));
    }
    let total: f64 = losses.iter().sum();
    let weights = if total > 0.0 {
        losses.iter().map(|l| l / total).collect()
    } else {
        prev.weights.clone()
    };
    Ok(LossWeights {
        weights,
        epoch: prev.epoch + 1,
    })
}

/// `Σ_k ω_k · MSE(S_k, Ŝ_k)` on the tape, plus each user's MSE as a plain
/// number (no gradient flows through the weights).
pub fn total_loss(tape: &mut Tape, targets: &[Var], preds: &[Var], weights: &LossWeights) -> Result<(Var, Vec<f64>)> {
    if targets.len() != weights.users() || preds.len() != weights.users() {
        return Err(Error::Dimension(format!(
            "{} targets and {} predictions for {} users",
            targets.len(),
            preds.len(),
            weights.users()
        )));
    }
    let mut per_user = Vec::with_capacity(targets.len());
    let mut total: Option<Var> = None;
    for ((&s, &p), &w) in targets.iter().zip(preds).zip(weights.as_slice()) {
        let mse = tape.mse_loss(p, s)?;
        per_user.push(tape.value(mse)[0]);
        let term = tape.scale(mse, w);
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
    }
    let total = total.ok_or_else(|| Error::Dimension("no users".into()))?;
    Ok((total, per_user))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn examples() {
        let w0 = LossWeights::uniform(2);
        assert_eq!(w0.as_slice(), &[0.5, 0.5]);
        assert_eq!(w0.epoch(), 0);
        assert_eq!(update_weights(&w0, &[1.0, 3.0]).unwrap().as_slice(), &[0.25, 0.75]);
        assert_eq!(update_weights(&w0, &[2.0, 2.0]).unwrap().as_slice(), &[0.5, 0.5]);
        let w3 = LossWeights::uniform(3);
        assert_eq!(update_weights(&w3, &[1.0, 1.0, 2.0]).unwrap().as_slice(), &[0.25, 0.25, 0.5]);
        assert_eq!(LossWeights::uniform(4).as_slice(), &[0.25; 4]);
    }

    #[test]
    fn zero_losses_keep_previous() {
        let w = update_weights(&LossWeights::uniform(2), &[1.0, 3.0]).unwrap();
        let z = update_weights(&w, &[0.0, 0.0]).unwrap();
        assert_eq!(z.as_slice(), w.as_slice());
        assert_eq!(z.epoch(), 2);
        assert!(update_weights(&w, &[1.0]).is_err());
        assert!(update_weights(&w, &[-1.0, 1.0]).is_err());
        assert!(update_weights(&w, &[f64::NAN, 1.0]).is_err());
    }

    fn pair(tape: &mut Tape, rng: &mut crate::rng::Rng, n: usize) -> (Var, Var, f64) {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
        let s = tape.constant(Tensor::matrix(2, n / 2, a).unwrap());
        let p = tape.constant(Tensor::matrix(2, n / 2, b).unwrap());
        (s, p, mse)
    }

    #[test]
    fn total_matches_direct_weighted_sum() {
        let mut rng = substream(3, "w", &[]);
        let mut tape = Tape::new();
        let (s1, p1, m1) = pair(&mut tape, &mut rng, 10);
        let (s2, p2, m2) = pair(&mut tape, &mut rng, 10);
        let w = update_weights(&LossWeights::uniform(2), &[0.3, 0.9]).unwrap();
        let (t, per) = total_loss(&mut tape, &[s1, s2], &[p1, p2], &w).unwrap();
        assert!((per[0] - m1).abs() < 1e-12 && (per[1] - m2).abs() < 1e-12);
        let direct = w.as_slice()[0] * m1 + w.as_slice()[1] * m2;
        assert!((tape.value(t)[0] - direct).abs() < 1e-12);

        let only_first = update_weights(&LossWeights::uniform(2), &[1.0, 0.0]).unwrap();
        let (t, _) = total_loss(&mut tape, &[s1, s2], &[p1, p2], &only_first).unwrap();
        assert!((tape.value(t)[0] - m1).abs() < 1e-15);
    }

    #[test]
    fn equal_losses_equal_weights_give_that_loss() {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::zeros(vec![1, 4]));
        let p = tape.constant(Tensor::filled(vec![1, 4], 0.5));
        let (t, _) = total_loss(&mut tape, &[s, s], &[p, p], &LossWeights::uniform(2)).unwrap();
        assert_eq!(tape.value(t)[0], 0.25);
        assert!(total_loss(&mut tape, &[s], &[p, p], &LossWeights::uniform(2)).is_err());
    }

    proptest! {
        #[test]
        fn weights_stay_on_the_simplex(losses in prop::collection::vec(0.0f64..10.0, 1..8)) {
            let w = update_weights(&LossWeights::uniform(losses.len()), &losses).unwrap();
            let s: f64 = w.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
        }
    }
}
