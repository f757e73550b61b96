//! Cost functionals over empirical and weighted measures.
//!
//! Entropy is deliberately absent here: it is not defined for point masses.
//! The free energy lives in the equilibrium module's quadrature oracle.

use serde::{Deserialize, Serialize};

use crate::datastream::Trajectory;
use crate::error::{Error, Result};
use crate::model::{predict, DataPoint, Measure, Theta};
use crate::onpgd::Snapshot;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weighted point-mass measure `sum_i w_i delta_{theta_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMeasure {
    dim: usize,
    samples: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedMeasure {
    /// `samples` is row-major, `dim` entries per atom.
    pub fn new(dim: usize, samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("parameter dimension must be positive"));
        }
        if weights.is_empty() || samples.len() != dim * weights.len() {
            return Err(Error::input(format!(
                "{} sample values do not form {} atoms of dimension {}",
                samples.len(),
                weights.len(),
                dim
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::input("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::input(format!("weights sum to {total}, not 1")));
        }
        Ok(WeightedMeasure { dim, samples, weights })
    }

    pub fn uniform(dim: usize, samples: Vec<f64>) -> Result<Self> {
        if dim == 0 || samples.is_empty() || samples.len() % dim != 0 {
            return Err(Error::input("samples do not form a whole number of atoms"));
        }
        let n = samples.len() / dim;
        Self::new(dim, samples, vec![1.0 / n as f64; n])
    }

    pub fn from_thetas(thetas: &[Theta], weights: Vec<f64>) -> Result<Self> {
        let dim = thetas.first().map(Theta::dim).ok_or_else(|| Error::input("no atoms"))?;
        if thetas.iter().any(|t| t.dim() != dim) {
            return Err(Error::input("atoms have mixed dimensions"));
        }
        Self::new(dim, thetas.iter().flat_map(|t| t.flatten()).collect(), weights)
    }

    /// Replaces the weights, keeping the atoms.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, self.samples.clone(), weights)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn theta(&self, i: usize) -> Theta {
        Theta::from_flat(self.atom(i)).expect("atoms have dimension >= 2")
    }

    /// Effective sample size `1 / sum w_i^2`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

impl Measure for WeightedMeasure {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn atom(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

/// `<measure, |theta|^2>`.
pub fn second_moment<M: Measure>(measure: &M) -> f64 {
    measure.integrate(|p| p.iter().map(|v| v * v).sum())
}

/// `m^2 - 2 y m + (lambda / 2) <measure, |theta|^2>` with `m` the network
/// prediction at `z.x`.
pub fn cost_u<M: Measure>(measure: &M, z: &DataPoint, lambda: f64) -> Result<f64> {
    let m = predict(measure, &z.x)?;
    let penalty = if lambda == 0.0 { 0.0 } else { 0.5 * lambda * second_moment(measure) };
    Ok(m * m - 2.0 * z.y * m + penalty)
}

pub fn cost_u_unreg<M: Measure>(measure: &M, z: &DataPoint) -> Result<f64> {
    cost_u(measure, z, 0.0)
}

/// Mean squared error of recorded predictions against a test trajectory.
pub fn oos_mse_from_predictions(predictions: &[f64], test: &Trajectory) -> Result<f64> {
    if predictions.len() != test.len() {
        return Err(Error::input(format!(
            "{} predictions for {} test points",
            predictions.len(),
            test.len()
        )));
    }
    if test.is_empty() {
        return Err(Error::input("empty test trajectory"));
    }
    let sse: f64 = predictions
        .iter()
        .zip(test.points())
        .map(|(p, z)| (p - z.y) * (p - z.y))
        .sum();
    Ok(sse / test.len() as f64)
}

/// Out-of-sample MSE from ensemble snapshots.
///
/// Evaluation is prequential: the prediction at data index `k` (1-based) uses
/// the snapshot taken after `k - 1` updates, so snapshots `0..K-1` must all be
/// present.
pub fn oos_mse(snapshots: &[Snapshot], test: &Trajectory) -> Result<f64> {
    let mut predictions = Vec::with_capacity(test.len());
    for k in 0..test.len() {
        let snap = snapshots
            .iter()
            .find(|s| s.k == k)
            .ok_or_else(|| Error::input(format!("no snapshot for update count {k}")))?;
        predictions.push(predict(&snap.ensemble, &test.points()[k].x)?);
    }
    oos_mse_from_predictions(&predictions, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::Trajectory;
    use approx::assert_abs_diff_eq;

    fn two_atoms(b_vals: [f64; 2], a_vals: [f64; 2], weights: [f64; 2]) -> WeightedMeasure {
        WeightedMeasure::new(
            3,
            vec![a_vals[0], 0.0, b_vals[0], a_vals[1], 0.0, b_vals[1]],
            weights.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(WeightedMeasure::new(3, vec![0.0; 6], vec![0.5, 0.4]).is_err());
        assert!(WeightedMeasure::new(3, vec![0.0; 5], vec![0.5, 0.5]).is_err());
        assert!(WeightedMeasure::new(3, vec![0.0; 6], vec![1.5, -0.5]).is_err());
        assert!(WeightedMeasure::new(3, vec![], vec![]).is_err());
        assert!(WeightedMeasure::new(3, vec![0.0; 6], vec![0.5, 0.5 + 1e-13]).is_ok());
    }

    #[test]
    fn cost_u_examples() {
        let m = WeightedMeasure::uniform(3, vec![0.0; 3]).unwrap();
        assert_eq!(cost_u(&m, &DataPoint::scalar(0.3, 1.0), 0.1).unwrap(), 0.0);

        // theta = (1, 1, 0) at x = atanh(0.5): m = 0.5 and |theta|^2 = 2
        let m = WeightedMeasure::from_thetas(&[Theta::new(1.0, vec![1.0], 0.0)], vec![1.0]).unwrap();
        let z = DataPoint::scalar(0.5f64.atanh(), 1.0);
        assert_abs_diff_eq!(cost_u(&m, &z, 0.1).unwrap(), -0.65, epsilon = 1e-15);
    }

    #[test]
    fn unregularized_examples() {
        let b = 0.3f64.atanh();
        let m = two_atoms([b, b], [1.0, 1.0], [0.5, 0.5]);
        let z = DataPoint::scalar(0.0, 0.0);
        assert_abs_diff_eq!(cost_u_unreg(&m, &z).unwrap(), 0.09, epsilon = 1e-15);
        assert_eq!(cost_u_unreg(&m, &z).unwrap(), cost_u(&m, &z, 0.0).unwrap());
        let z = DataPoint::scalar(0.0, 0.3);
        assert_abs_diff_eq!(cost_u_unreg(&m, &z).unwrap(), -0.09, epsilon = 1e-15);
    }

    #[test]
    fn second_moment_examples() {
        assert_eq!(second_moment(&WeightedMeasure::uniform(3, vec![0.0; 9]).unwrap()), 0.0);
        let one = WeightedMeasure::from_thetas(&[Theta::new(1.0, vec![1.0], 1.0)], vec![1.0]).unwrap();
        assert_eq!(second_moment(&one), 3.0);
        let two = WeightedMeasure::new(2, vec![1.0, 1.0, 2.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(second_moment(&two), 3.0);
    }

    #[test]
    fn oos_mse_examples() {
        let pts: Vec<DataPoint> = (0..4).map(|k| DataPoint::scalar(k as f64, 1.0)).collect();
        let test = Trajectory::new(0.5, pts, None).unwrap();
        assert_eq!(oos_mse_from_predictions(&[1.0; 4], &test).unwrap(), 0.0);
        assert_eq!(oos_mse_from_predictions(&[0.0; 4], &test).unwrap(), 1.0);
        assert!(oos_mse_from_predictions(&[0.0; 3], &test).is_err());
    }
}
