//! Offline baseline: full-batch gradient descent on the aggregated training
//! loss, then static out-of-sample prediction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datastream::Trajectory;
use crate::error::{Error, Result};
use crate::measures::oos_mse_from_predictions;
use crate::model::predict;
use crate::onpgd::{run_online_with, OnpgdConfig, ParticleEnsemble};
use crate::rng::{standard_normal, SeedTree};

const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineFitConfig {
    pub iters: usize,
    /// Step size in mean-field units: each particle moves by
    /// `learning_rate * N * dL/dtheta_i`.
    pub learning_rate: f64,
    pub lambda: f64,
    pub particles: usize,
    pub init_sd: f64,
    pub init_seed: u64,
}

impl Default for OfflineFitConfig {
    fn default() -> Self {
        OfflineFitConfig { iters: 2000, learning_rate: 0.05, lambda: 0.1, particles: 80, init_sd: 0.2f64.sqrt(), init_seed: 0 }
    }
}

impl OfflineFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.particles == 0 {
            return Err(Error::input("iterations and particle count must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::input("learning rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.init_sd >= 0.0) {
            return Err(Error::input("lambda and init sd must be >= 0"));
        }
        Ok(())
    }
}

/// `(1/K) sum_k (predict(x_k) - y_k)^2 + (lambda / 2N) sum_i |theta_i|^2`.
pub fn batch_loss(ensemble: &ParticleEnsemble, train: &Trajectory, lambda: f64) -> Result<f64> {
    let mut sse = 0.0;
    for z in train.points() {
        let r = predict(ensemble, &z.x)? - z.y;
        sse += r * r;
    }
    let n = ensemble.particles() as f64;
    let penalty: f64 = ensemble.params().iter().map(|v| v * v).sum();
    Ok(sse / train.len() as f64 + 0.5 * lambda / n * penalty)
}

/// Gradient of [`batch_loss`] in the flattened particle parameters, together
/// with the loss itself.
pub fn batch_gradient(ensemble: &ParticleEnsemble, train: &Trajectory, lambda: f64) -> Result<(f64, Vec<f64>)> {
    let n_covariates = train.covariate_dim();
    if ensemble.covariate_dim() != n_covariates {
        return Err(Error::Dimension { expected: ensemble.covariate_dim(), got: n_covariates });
    }
    let dim = n_covariates + 2;
    let n = ensemble.particles() as f64;
    let k_len = train.len() as f64;
    let params = ensemble.params();
    let mut grad = vec![0.0; params.len()];
    let mut tanh_u = vec![0.0; ensemble.particles()];
    let mut sse = 0.0;
    for z in train.points() {
        let mut total = 0.0;
        for (t, p) in tanh_u.iter_mut().zip(params.chunks_exact(dim)) {
            let u = p[1..=n_covariates].iter().zip(&z.x).fold(p[dim - 1], |acc, (w, x)| acc + w * x);
            *t = u.tanh();
            total += p[0] * *t;
        }
        let r = total / n - z.y;
        sse += r * r;
        let coef = 2.0 * r / (k_len * n);
        for ((t, p), out) in tanh_u.iter().zip(params.chunks_exact(dim)).zip(grad.chunks_exact_mut(dim)) {
            let s = coef * p[0] * (1.0 - t * t);
            out[0] += coef * t;
            for (o, x) in out[1..=n_covariates].iter_mut().zip(&z.x) {
                *o += s * x;
            }
            out[dim - 1] += s;
        }
    }
    let mut penalty = 0.0;
    for (o, p) in grad.iter_mut().zip(params) {
        *o += lambda / n * p;
        penalty += p * p;
    }
    Ok((sse / k_len + 0.5 * lambda / n * penalty, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineFit {
    pub ensemble: ParticleEnsemble,
    /// Loss before each step and after the last one (`iters + 1` entries).
    pub loss_trace: Vec<f64>,
}

pub fn init_offline(cfg: &OfflineFitConfig, covariate_dim: usize) -> Result<ParticleEnsemble> {
    let mut rng = SeedTree::new(cfg.init_seed).stream("offline-init", 0);
    let dim = covariate_dim + 2;
    let params = (0..cfg.particles * dim).map(|_| cfg.init_sd * standard_normal(&mut rng)).collect();
    ParticleEnsemble::from_flat(dim, params)
}

pub fn fit_offline(train: &Trajectory, cfg: &OfflineFitConfig) -> Result<OfflineFit> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::input("empty training trajectory"));
    }
    fit_from(init_offline(cfg, train.covariate_dim())?, train, cfg)
}

/// Gradient descent from a given starting ensemble.
pub fn fit_from(mut ensemble: ParticleEnsemble, train: &Trajectory, cfg: &OfflineFitConfig) -> Result<OfflineFit> {
    cfg.validate()?;
    let step = cfg.learning_rate * ensemble.particles() as f64;
    let mut loss_trace = Vec::with_capacity(cfg.iters + 1);
    for iter in 0..=cfg.iters {
        let (loss, grad) = batch_gradient(&ensemble, train, cfg.lambda)?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Divergence { iter, loss });
        }
        loss_trace.push(loss);
        if iter == cfg.iters {
            break;
        }
        for (p, g) in ensemble.params_mut().iter_mut().zip(&grad) {
            *p -= step * g;
        }
    }
    Ok(OfflineFit { ensemble, loss_trace })
}

/// Columns `iter, loss`.
pub fn write_loss_csv<W: Write>(trace: &[f64], out: W) -> Result<()> {
    let csv_err = |e: csv::Error| Error::input(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "loss"]).map_err(csv_err)?;
    for (i, l) in trace.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::input(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Online predictions on `test`, recorded while training on `train`: the
/// prediction at test index `k` uses the ensemble that has consumed `k - 1`
/// training points.
pub fn online_test_predictions(train: &Trajectory, test: &Trajectory, cfg: &OnpgdConfig, seed: u64) -> Result<Vec<f64>> {
    if train.len() != test.len() {
        return Err(Error::input("train and test trajectories must have the same length"));
    }
    let mut preds = Vec::with_capacity(test.len());
    run_online_with(train, cfg, seed, |k, ens| {
        if k < test.len() {
            preds.push(predict(ens, &test.points()[k].x)?);
        }
        Ok(())
    })?;
    Ok(preds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosRecord {
    pub mse_online: f64,
    pub mse_offline: f64,
    pub offline_loss_trace: Vec<f64>,
}

/// Trains both learners on `train` and scores them on `test`. The offline
/// initialization is seeded from `seed` as well.
pub fn compare_oos(
    train: &Trajectory,
    test: &Trajectory,
    onpgd: &OnpgdConfig,
    offline: &OfflineFitConfig,
    seed: u64,
) -> Result<OosRecord> {
    let online = online_test_predictions(train, test, onpgd, seed)?;
    let mse_online = oos_mse_from_predictions(&online, test)?;
    let fit = fit_offline(train, &OfflineFitConfig { init_seed: seed, ..*offline })?;
    let offline_preds = test
        .points()
        .iter()
        .map(|z| predict(&fit.ensemble, &z.x))
        .collect::<Result<Vec<f64>>>()?;
    let mse_offline = oos_mse_from_predictions(&offline_preds, test)?;
    Ok(OosRecord { mse_online, mse_offline, offline_loss_trace: fit.loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DataPoint;
    use approx::assert_abs_diff_eq;

    fn toy_trajectory(k: usize) -> Trajectory {
        let pts = (0..k)
            .map(|i| {
                let t = i as f64 * 0.37;
                DataPoint::new(vec![t.sin(), (1.3 * t).cos()], 0.3 * (0.5 * t).sin())
            })
            .collect();
        Trajectory::new(0.02, pts, None).unwrap()
    }

    #[test]
    fn zero_output_weights_decay_quadratically() {
        let pts = (0..30).map(|i| DataPoint::scalar(0.1 * i as f64, 0.0)).collect();
        let train = Trajectory::new(0.02, pts, None).unwrap();
        let cfg = OfflineFitConfig { iters: 50, particles: 6, ..Default::default() };
        let mut start = init_offline(&cfg, 1).unwrap();
        for p in start.params_mut().chunks_exact_mut(3) {
            p[0] = 0.0;
        }
        let penalty: f64 = start.params().iter().map(|v| v * v).sum::<f64>() * 0.5 * cfg.lambda / 6.0;
        assert_abs_diff_eq!(batch_loss(&start, &train, cfg.lambda).unwrap(), penalty, epsilon = 1e-15);
        let fit = fit_from(start, &train, &cfg).unwrap();
        assert!(fit.loss_trace.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(fit.loss_trace.len(), 51);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let train = toy_trajectory(40);
        let cfg = OfflineFitConfig { particles: 4, init_sd: 0.8, init_seed: 11, ..Default::default() };
        let ens = init_offline(&cfg, 2).unwrap();
        let (loss, grad) = batch_gradient(&ens, &train, 0.3).unwrap();
        assert_abs_diff_eq!(loss, batch_loss(&ens, &train, 0.3).unwrap(), epsilon = 1e-14);
        let h = 1e-6;
        for j in 0..ens.params().len() {
            let mut up = ens.clone();
            up.params_mut()[j] += h;
            let mut down = ens.clone();
            down.params_mut()[j] -= h;
            let fd = (batch_loss(&up, &train, 0.3).unwrap() - batch_loss(&down, &train, 0.3).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(grad[j], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn fit_is_deterministic_and_descends() {
        let train = toy_trajectory(60);
        let cfg = OfflineFitConfig { iters: 200, particles: 10, learning_rate: 0.02, init_seed: 5, ..Default::default() };
        let a = fit_offline(&train, &cfg).unwrap();
        let b = fit_offline(&train, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn divergence_is_reported() {
        let pts = (0..5).map(|i| DataPoint::scalar(i as f64, 1e4)).collect();
        let train = Trajectory::new(0.02, pts, None).unwrap();
        let cfg = OfflineFitConfig { iters: 10, particles: 2, ..Default::default() };
        assert!(matches!(fit_offline(&train, &cfg).unwrap_err(), Error::Divergence { iter: 0, .. }));
    }

    #[test]
    fn constant_zero_data_scores_zero() {
        let pts: Vec<DataPoint> = (0..20).map(|i| DataPoint::scalar(0.05 * i as f64, 0.0)).collect();
        let train = Trajectory::new(0.02, pts.clone(), None).unwrap();
        let test = Trajectory::new(0.02, pts, None).unwrap();
        let onpgd = OnpgdConfig { particles: 5, beta: 0.0, init_sd: Some(0.0), ..Default::default() };
        let offline = OfflineFitConfig { iters: 5, particles: 5, init_sd: 0.0, ..Default::default() };
        let rec = compare_oos(&train, &test, &onpgd, &offline, 1).unwrap();
        assert_eq!(rec.mse_online, 0.0);
        assert_eq!(rec.mse_offline, 0.0);
    }

    #[test]
    fn loss_csv_layout() {
        let mut buf = Vec::new();
        write_loss_csv(&[2.0, 1.5], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,loss\n0,2\n1,1.5\n");
    }
}
