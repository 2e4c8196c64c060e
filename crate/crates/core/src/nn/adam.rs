use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: Some(0.5),
        }
    }
}

/// Adam over a parameter set that may be split across several slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn from_state(config: AdamConfig, m: Vec<f64>, v: Vec<f64>, t: u64) -> Result<Self> {
        if m.len() != v.len() {
            return shape_err(format!("first moment has {} slots, second {}", m.len(), v.len()));
        }
        Ok(Self { config, m, v, t })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Clips the global norm, then applies one bias-corrected Adam step.
    ///
    /// A non-finite gradient aborts the step and leaves parameters and
    /// optimizer state untouched.
    pub fn step(&mut self, parts: &mut [(&mut [f64], &[f64])]) -> Result<()> {
        let total: usize = parts.iter().map(|(p, _)| p.len()).sum();
        if total != self.m.len() {
            return shape_err(format!("optimizer tracks {} parameters, got {total}", self.m.len()));
        }
        for (p, g) in parts.iter() {
            if p.len() != g.len() {
                return shape_err(format!("{} parameters vs {} gradients", p.len(), g.len()));
            }
        }
        let sq: f64 = parts.iter().flat_map(|(_, g)| g.iter()).map(|g| g * g).sum();
        if !sq.is_finite() {
            return Err(Error::AbortUpdate("non-finite gradient".into()));
        }
        let norm = sq.sqrt();
        let scale = match self.config.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };

        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut k = 0;
        for (params, grads) in parts.iter_mut() {
            for (p, g) in params.iter_mut().zip(grads.iter()) {
                let g = g * scale;
                self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
                self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
                let m_hat = self.m[k] / bc1;
                let v_hat = self.v[k] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
                k += 1;
            }
        }
        Ok(())
    }
}

/// Global L2 norm of a gradient after the configured clip.
pub fn clipped_norm(grads: &[&[f64]], max: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum::<f64>().sqrt();
    norm.min(max)
}
