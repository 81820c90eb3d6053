use crate::error::{Error, Result};
use crate::neural::{log_softmax, softmax};

/// Evenly spaced atoms on `[v_min, v_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalSupport {
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: Vec<f64>,
}

impl CategoricalSupport {
    pub fn new(v_min: f64, v_max: f64, num_atoms: usize) -> Result<Self> {
        if num_atoms < 2 || !(v_min < v_max) {
            return Err(Error::InvalidArgument(format!(
                "support needs >= 2 atoms and v_min < v_max, got {num_atoms} on [{v_min}, {v_max}]"
            )));
        }
        let step = (v_max - v_min) / (num_atoms - 1) as f64;
        let atoms = (0..num_atoms).map(|i| v_min + step * i as f64).collect();
        Ok(Self { v_min, v_max, atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms.len() - 1) as f64
    }
}

pub fn categorical_mean(probs: &[f64], atoms: &[f64]) -> f64 {
    probs.iter().zip(atoms).map(|(p, z)| p * z).sum()
}

/// Projects a distribution with mass `probs[j]` at `target_atoms[j]` onto
/// `support`. Each mass is split linearly between its two neighbouring
/// atoms; mass outside the support goes to the nearest boundary atom.
pub fn categorical_project(target_atoms: &[f64], probs: &[f64], support: &CategoricalSupport) -> Vec<f64> {
    let k = support.len();
    let dz = support.spacing();
    let mut out = vec![0.0; k];
    for (z, p) in target_atoms.iter().zip(probs) {
        let clamped = z.clamp(support.v_min, support.v_max);
        let mut b = (clamped - support.v_min) / dz;
        // Atoms that land on a support point up to rounding keep all their mass there.
        if (b - b.round()).abs() < 1e-10 {
            b = b.round();
        }
        let lower = (b.floor() as usize).min(k - 1);
        let upper = (b.ceil() as usize).min(k - 1);
        if lower == upper {
            out[lower] += p;
        } else {
            out[lower] += p * (upper as f64 - b);
            out[upper] += p * (b - lower as f64);
        }
    }
    out
}

/// Cross-entropy `-sum_i Y_i log softmax(logits)_i` and its gradient
/// `softmax(logits) - Y`.
pub fn categorical_ce_loss(target: &[f64], logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    if target.len() != logits.len() {
        return Err(Error::Shape("target and logits differ in length".into()));
    }
    let log_p = log_softmax(logits);
    let loss = -target.iter().zip(&log_p).map(|(y, lp)| y * lp).sum::<f64>();
    let p = softmax(logits);
    let grad = p.iter().zip(target).map(|(p, y)| p - y).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::fd;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Per-atom clamp and interpolate, written independently of the kernel.
    fn brute_force(target_atoms: &[f64], probs: &[f64], atoms: &[f64]) -> Vec<f64> {
        let (lo, hi) = (atoms[0], atoms[atoms.len() - 1]);
        atoms
            .iter()
            .map(|zi| {
                let dz = atoms[1] - atoms[0];
                target_atoms
                    .iter()
                    .zip(probs)
                    .map(|(z, p)| {
                        let z = z.clamp(lo, hi);
                        p * (1.0 - ((z - zi).abs() / dz)).max(0.0)
                    })
                    .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn identity_projection() {
        let s = CategoricalSupport::new(-2.0, 2.0, 5).unwrap();
        let p = [0.1, 0.2, 0.3, 0.25, 0.15];
        assert_eq!(categorical_project(&s.atoms, &p, &s), p.to_vec());
    }

    #[test]
    fn midpoint_splits_evenly() {
        let s = CategoricalSupport::new(0.0, 1.0, 2).unwrap();
        assert_eq!(categorical_project(&[0.5], &[1.0], &s), vec![0.5, 0.5]);
        assert_eq!(categorical_project(&[7.0], &[1.0], &s), vec![0.0, 1.0]);
    }

    #[test]
    fn shifted_projection_matches_brute_force() {
        let s = CategoricalSupport::new(-2.0, 2.0, 5).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let shifted: Vec<f64> = s.atoms.iter().map(|z| 1.0 + 0.99 * z).collect();
            let got = categorical_project(&shifted, &p, &s);
            let want = brute_force(&shifted, &p, &s.atoms);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ce_loss_properties() {
        let logits = [0.3, -1.2, 2.0];
        let p = softmax(&logits);
        let (_, grad) = categorical_ce_loss(&p, &logits).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
        let (loss, _) = categorical_ce_loss(&[0.0, 1.0, 0.0, 0.0], &[0.0; 4]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        let y = [0.2, 0.5, 0.3];
        let (_, grad) = categorical_ce_loss(&y, &logits).unwrap();
        let numeric = fd::gradient(|l| categorical_ce_loss(&y, l).unwrap().0, &logits, 1e-6);
        assert!(fd::max_rel_err(&grad, &numeric) <= 1e-6);
    }
}
