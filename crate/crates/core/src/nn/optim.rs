use std::f64::consts::PI;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment accumulators per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(Tensor::zeros_like).collect(),
            v: params.iter().map(Tensor::zeros_like).collect(),
            step: 0,
        }
    }
}

/// One Adam step with decoupled weight decay: the parameter first shrinks by
/// `lr * weight_decay * param`, then moves by the bias-corrected moment ratio.
pub fn adamw_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut OptimState,
    lr: f64,
    beta1: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape("parameter, gradient and state counts differ".into()));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape != g.shape {
            return Err(Error::Shape(format!("gradient {:?} for parameter {:?}", g.shape, p.shape)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            p.data[i] -= lr * cfg.weight_decay * p.data[i];
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            p.data[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub max_lr: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
    pub warm_fraction: f64,
    pub momentum_max: f64,
    pub momentum_min: f64,
    pub total_steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            max_lr: 2.25e-3,
            div_factor: 10.0,
            final_div_factor: 1e4,
            warm_fraction: 0.3,
            momentum_max: 0.95,
            momentum_min: 0.85,
            total_steps: 1000,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warm_fraction > 0.0 && self.warm_fraction < 1.0) {
            return Err(Error::Config("warm fraction must lie in (0, 1)".into()));
        }
        if !(self.max_lr > 0.0 && self.div_factor > 0.0 && self.final_div_factor > 0.0) {
            return Err(Error::Config("learning-rate factors must be positive".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be >= 1".into()));
        }
        Ok(())
    }
}

fn cos_anneal(start: f64, end: f64, pct: f64) -> f64 {
    end + (start - end) / 2.0 * (1.0 + (PI * pct).cos())
}

/// Learning rate and first-moment coefficient at `step` of a one-cycle
/// schedule: the rate rises from `max/div` to `max` over the warm fraction,
/// then falls to `max/(div*final_div)`; momentum moves in antiphase.
pub fn one_cycle(step: usize, cfg: &ScheduleConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    if step > cfg.total_steps {
        return Err(Error::OutOfRange(format!("step {step} beyond {} total", cfg.total_steps)));
    }
    let start = cfg.max_lr / cfg.div_factor;
    let end = start / cfg.final_div_factor;
    let warm_end = cfg.warm_fraction * cfg.total_steps as f64;
    let s = step as f64;
    Ok(if s <= warm_end {
        let pct = s / warm_end;
        (
            cos_anneal(start, cfg.max_lr, pct),
            cos_anneal(cfg.momentum_max, cfg.momentum_min, pct),
        )
    } else {
        let pct = (s - warm_end) / (cfg.total_steps as f64 - warm_end);
        (
            cos_anneal(cfg.max_lr, end, pct),
            cos_anneal(cfg.momentum_min, cfg.momentum_max, pct),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<Tensor> {
        vec![Tensor::from_vec(&[1], vec![v]).unwrap()]
    }

    #[test]
    fn zero_grad_no_decay_is_noop() {
        let mut p = scalar(1.5);
        let g = scalar(0.0);
        let mut s = OptimState::new(&p);
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        adamw_step(&mut p, &g, &mut s, 0.1, 0.9, &cfg).unwrap();
        assert_eq!(p[0].data[0], 1.5);
    }

    #[test]
    fn zero_grad_decay_scales() {
        let mut p = scalar(2.0);
        let mut s = OptimState::new(&p);
        adamw_step(&mut p, &scalar(0.0), &mut s, 0.1, 0.9, &AdamWConfig::default()).unwrap();
        assert!((p[0].data[0] - 2.0 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_closed_form() {
        let (p0, g, lr) = (0.7, -0.3, 0.05);
        let cfg = AdamWConfig::default();
        let mut p = scalar(p0);
        let mut s = OptimState::new(&p);
        adamw_step(&mut p, &scalar(g), &mut s, lr, 0.9, &cfg).unwrap();
        // m_hat = g and v_hat = g^2 after one step.
        let want = p0 * (1.0 - lr * 0.01) - lr * g / (g.abs() + 1e-8);
        assert!((p[0].data[0] - want).abs() < 1e-15);
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = ScheduleConfig { total_steps: 100, ..Default::default() };
        let (lr, m) = one_cycle(0, &cfg).unwrap();
        assert!((lr - 2.25e-4).abs() < 1e-18 && (m - 0.95).abs() < 1e-15);
        let (lr, m) = one_cycle(30, &cfg).unwrap();
        assert!((lr - 2.25e-3).abs() < 1e-15 && (m - 0.85).abs() < 1e-15);
        let (lr, m) = one_cycle(100, &cfg).unwrap();
        assert!((lr - 2.25e-8).abs() < 1e-20 && (m - 0.95).abs() < 1e-15);
        assert!(one_cycle(101, &cfg).is_err());
    }

    #[test]
    fn schedule_continuous_at_boundary() {
        let cfg = ScheduleConfig { total_steps: 1_000_000, warm_fraction: 0.3, ..Default::default() };
        let (a, _) = one_cycle(300_000, &cfg).unwrap();
        let (b, _) = one_cycle(300_001, &cfg).unwrap();
        let (c, _) = one_cycle(299_999, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
    }
}
