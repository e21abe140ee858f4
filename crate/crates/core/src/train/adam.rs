use super::TrainError;
use crate::model::ParamStore;
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with moment buffers in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|p| vec![T::zero(); p.data.len()])
                .collect()
        };
        Adam {
            cfg,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Rejects a gradient set with any non-finite entry, naming the first offender.
    pub fn check_grads(params: &ParamStore<T>, grads: &[Vec<T>]) -> Result<(), String> {
        if grads.len() != params.len() {
            return Err(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            ));
        }
        for (p, g) in params.tensors().iter().zip(grads) {
            if g.len() != p.data.len() {
                return Err(format!(
                    "gradient of {} has {} entries, expected {}",
                    p.spec.name,
                    g.len(),
                    p.data.len()
                ));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(format!("{}[{i}] = {:?}", p.spec.name, g[i]));
            }
        }
        Ok(())
    }

    pub fn step(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &[Vec<T>],
        lr: f64,
    ) -> Result<(), TrainError> {
        Self::check_grads(params, grads).map_err(|detail| TrainError::NonFinite {
            what: "gradient",
            epoch: 0,
            step: self.t,
            detail,
        })?;
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut())
            {
                let gi = gi.f64();
                let m_new = beta1 * mi.f64() + (1.0 - beta1) * gi;
                let v_new = beta2 * vi.f64() + (1.0 - beta2) * gi * gi;
                *mi = T::c(m_new);
                *vi = T::c(v_new);
                let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + eps);
                *w = T::c(w.f64() - update);
            }
        }
        Ok(())
    }
}
