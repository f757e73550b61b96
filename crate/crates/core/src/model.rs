//! Neurons, parameter vectors and network prediction over measures.
//!
//! A parameter vector is stored flattened as `(a, w_1..w_n, b)`, so a network
//! with `n` covariates has parameter dimension `d = n + 2`. The neuron is
//! `sigma(x, theta) = a * tanh(w.x + b)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub a: f64,
    pub w: Vec<f64>,
    pub b: f64,
}

impl Theta {
    pub fn new(a: f64, w: Vec<f64>, b: f64) -> Self {
        Theta { a, w, b }
    }

    pub fn zeros(n: usize) -> Self {
        Theta { a: 0.0, w: vec![0.0; n], b: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.w.len() + 2
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.push(self.a);
        out.extend_from_slice(&self.w);
        out.push(self.b);
        out
    }

    pub fn from_flat(p: &[f64]) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::input("flattened parameter needs at least (a, b)"));
        }
        Ok(Theta { a: p[0], w: p[1..p.len() - 1].to_vec(), b: p[p.len() - 1] })
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.w.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b + self.w.iter().map(|v| v * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

impl DataPoint {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        DataPoint { x, y }
    }

    pub fn scalar(x: f64, y: f64) -> Self {
        DataPoint { x: vec![x], y }
    }
}

/// Smooth bounded truncation `level * tanh(v / level)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub enabled: bool,
    pub level: f64,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        TruncationSpec { enabled: false, level: 1.0 }
    }
}

impl TruncationSpec {
    pub fn at(level: f64) -> Result<Self> {
        let spec = TruncationSpec { enabled: true, level };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.level > 0.0 && self.level.is_finite()) {
            return Err(Error::input(format!("truncation level must be positive, got {}", self.level)));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if self.enabled {
            self.level * (v / self.level).tanh()
        } else {
            v
        }
    }
}

/// A parametric feature map `sigma(x, theta)`.
///
/// Parameters are passed flattened. Implementations must be pure.
pub trait FeatureMap: Sync {
    fn param_dim(&self) -> usize;
    fn covariate_dim(&self) -> usize;
    fn eval(&self, x: &[f64], p: &[f64]) -> f64;
    /// Gradient in the parameters, written into `out` (length `param_dim`).
    fn grad(&self, x: &[f64], p: &[f64], out: &mut [f64]);
}

/// `a * tanh(w.x + b)` with `n` covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TanhNeuron {
    pub n: usize,
}

impl TanhNeuron {
    pub fn new(n: usize) -> Self {
        TanhNeuron { n }
    }

    #[inline]
    fn preactivation(x: &[f64], p: &[f64]) -> f64 {
        let n = x.len();
        let mut u = p[n + 1];
        for (wi, xi) in p[1..=n].iter().zip(x) {
            u += wi * xi;
        }
        u
    }
}

impl FeatureMap for TanhNeuron {
    fn param_dim(&self) -> usize {
        self.n + 2
    }

    fn covariate_dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        p[0] * Self::preactivation(x, p).tanh()
    }

    #[inline]
    fn grad(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        let n = x.len();
        let t = Self::preactivation(x, p).tanh();
        let s = p[0] * (1.0 - t * t);
        out[0] = t;
        for (o, xi) in out[1..=n].iter_mut().zip(x) {
            *o = s * xi;
        }
        out[n + 1] = s;
    }
}

/// One-parameter neuron `tanh(theta * x)` with a scalar covariate. Used by the
/// one-dimensional quadrature oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScalarTanh;

impl FeatureMap for ScalarTanh {
    fn param_dim(&self) -> usize {
        1
    }

    fn covariate_dim(&self) -> usize {
        1
    }

    #[inline]
    fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        (p[0] * x[0]).tanh()
    }

    #[inline]
    fn grad(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        let t = (p[0] * x[0]).tanh();
        out[0] = x[0] * (1.0 - t * t);
    }
}

/// Output-truncated feature map: `level * tanh(inner / level)`, bounded by
/// `level` in absolute value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated<M> {
    pub inner: M,
    pub level: f64,
}

impl<M: FeatureMap> FeatureMap for Truncated<M> {
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn covariate_dim(&self) -> usize {
        self.inner.covariate_dim()
    }

    fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        self.level * (self.inner.eval(x, p) / self.level).tanh()
    }

    fn grad(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        let t = (self.inner.eval(x, p) / self.level).tanh();
        self.inner.grad(x, p, out);
        let s = 1.0 - t * t;
        for o in out.iter_mut() {
            *o *= s;
        }
    }
}

pub fn sigma(x: &[f64], theta: &Theta) -> Result<f64> {
    check_dim(theta.w.len(), x.len())?;
    Ok(theta.a * (theta.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + theta.b).tanh())
}

/// Gradient of `sigma` in `(a, w, b)` order.
pub fn grad_sigma(x: &[f64], theta: &Theta) -> Result<Vec<f64>> {
    check_dim(theta.w.len(), x.len())?;
    let p = theta.flatten();
    let mut out = vec![0.0; p.len()];
    TanhNeuron::new(x.len()).grad(x, &p, &mut out);
    Ok(out)
}

/// A finitely supported probability measure on parameter space.
pub trait Measure {
    fn param_dim(&self) -> usize;
    fn len(&self) -> usize;
    fn atom(&self, i: usize) -> &[f64];
    fn weight(&self, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integral of `f` against the measure.
    fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64
    where
        Self: Sized,
    {
        (0..self.len()).map(|i| self.weight(i) * f(self.atom(i))).sum()
    }
}

/// `<measure, sigma(x, .)>` for an arbitrary feature map.
pub fn predict_with<M: Measure, F: FeatureMap>(map: &F, measure: &M, x: &[f64]) -> Result<f64> {
    if measure.is_empty() {
        return Err(Error::input("cannot predict with an empty measure"));
    }
    check_dim(map.param_dim(), measure.param_dim())?;
    check_dim(map.covariate_dim(), x.len())?;
    Ok(measure.integrate(|p| map.eval(x, p)))
}

/// Network output `<measure, sigma(x, .)>` with tanh neurons.
pub fn predict<M: Measure>(measure: &M, x: &[f64]) -> Result<f64> {
    predict_with(&TanhNeuron::new(x.len()), measure, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::WeightedMeasure;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma_trivial_cases() {
        let th = Theta::new(0.0, vec![3.0, -1.0], 0.7);
        assert_eq!(sigma(&[0.2, 5.0], &th).unwrap(), 0.0);
        let th = Theta::new(1.0, vec![0.0], 0.0);
        assert_eq!(sigma(&[123.0], &th).unwrap(), 0.0);
    }

    #[test]
    fn sigma_matches_reference_tanh() {
        // atanh(0.5) = 0.5493061443340548...
        let th = Theta::new(2.0, vec![1.0], 0.0);
        let v = sigma(&[0.5493061443340548], &th).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        let v = sigma(&[0.5493061], &th).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn sigma_dimension_mismatch() {
        let th = Theta::zeros(2);
        assert!(matches!(sigma(&[1.0], &th), Err(Error::Dimension { expected: 2, got: 1 })));
        assert!(grad_sigma(&[1.0, 2.0, 3.0], &th).is_err());
    }

    #[test]
    fn grad_sigma_trivial_cases() {
        let g = grad_sigma(&[0.4, -2.0], &Theta::zeros(2)).unwrap();
        assert_eq!(g, vec![0.0; 4]);
        let g = grad_sigma(&[3.0], &Theta::new(1.0, vec![0.0], 0.0)).unwrap();
        assert_eq!(g, vec![0.0, 3.0, 1.0]);
    }

    #[test]
    fn flatten_round_trip() {
        let th = Theta::new(0.3, vec![1.0, -2.0, 0.5], -0.1);
        let p = th.flatten();
        assert_eq!(p, vec![0.3, 1.0, -2.0, 0.5, -0.1]);
        assert_eq!(Theta::from_flat(&p).unwrap(), th);
    }

    #[test]
    fn predict_examples() {
        let m = WeightedMeasure::uniform(3, vec![0.0; 3]).unwrap();
        assert_eq!(predict(&m, &[1.0]).unwrap(), 0.0);

        // sigma values 0.2 and 0.6 via a * tanh(b) with b = atanh(0.5)
        let b = 0.5f64.atanh();
        let m = WeightedMeasure::uniform(3, vec![0.4, 0.0, b, 1.2, 0.0, b]).unwrap();
        assert_abs_diff_eq!(predict(&m, &[9.0]).unwrap(), 0.4, epsilon = 1e-15);

        // weights (0.25, 0.75) over sigma values (0, 1)
        let big = 40.0; // tanh(40) == 1 in double precision
        let m = WeightedMeasure::new(3, vec![0.0, 0.0, 0.0, 1.0, 0.0, big], vec![0.25, 0.75]).unwrap();
        assert_eq!(predict(&m, &[0.0]).unwrap(), 0.75);
    }

    #[test]
    fn truncation_is_bounded_and_near_identity() {
        let t = TruncationSpec::at(2.0).unwrap();
        for &y in &[-1e6, -5.0, 0.0, 3.0, 1e9] {
            assert!(t.apply(y).abs() <= 2.0);
        }
        assert!(t.apply(1e9) < 2.0 + 1e-12);
        // |C tanh(y/C) - y| <= |y|^3 / (3 C^2)
        for &y in &[-0.2f64, -0.05, 0.0, 0.1, 0.2] {
            let bound = y.abs().powi(3) / (3.0 * 4.0) + 1e-15;
            assert!((t.apply(y) - y).abs() <= bound);
        }
        assert_abs_diff_eq!(t.apply(1e-3), 1e-3, epsilon = 1e-9);
        assert!(TruncationSpec::at(0.0).is_err());
        assert_eq!(TruncationSpec::default().apply(17.0), 17.0);
    }
}
