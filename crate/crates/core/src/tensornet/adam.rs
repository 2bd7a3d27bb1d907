use super::{Gradients, ParamStore, Scalar};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments are kept in `f64` regardless of the parameter type.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Scalar>(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.params().iter().map(|p| vec![0.0; p.values.len()]).collect();
        AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(params: &mut ParamStore<T>, grads: &Gradients<T>, state: &mut AdamState) -> Result<()> {
    if grads.grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} gradients and {} moment sets for {} parameters",
            grads.grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (p, g) in params.params().iter().zip(&grads.grads) {
        match g {
            None => return Err(Error::Graph(format!("no gradient for parameter {}", p.name))),
            Some(g) if g.len() != p.values.len() => {
                return Err(Error::Shape(format!("gradient length mismatch for {}", p.name)))
            }
            Some(_) => {}
        }
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, p) in params.params_mut().iter_mut().enumerate() {
        let g = grads.grads[i].as_ref().expect("checked above");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.values.iter_mut().enumerate() {
            let gj = g[j].f64();
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let update = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            if update != 0.0 {
                *w = T::of(w.f64() - update);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.push("w", [1; 5], vec![v]).unwrap();
        s
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut s = scalar_store(0.7);
        let mut st = AdamState::new(&s, AdamConfig::default());
        let g = Gradients {
            grads: vec![Some(vec![0.0])],
        };
        for _ in 0..5 {
            adam_step(&mut s, &g, &mut st).unwrap();
        }
        assert_eq!(s.get(0).values, vec![0.7]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = scalar_store(1.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        let g = Gradients {
            grads: vec![Some(vec![1.0])],
        };
        adam_step(&mut s, &g, &mut st).unwrap();
        assert!((1.0 - s.get(0).values[0] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = scalar_store(1.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        let g = Gradients { grads: vec![None] };
        assert!(adam_step(&mut s, &g, &mut st).is_err());
    }

    #[test]
    fn quadratic_decreases_after_warmup() {
        // f(w) = sum (w - c)^2 in four dimensions.
        let c = [3.0, -1.0, 0.5, 2.0];
        let mut s = ParamStore::<f64>::new();
        s.push("w", [4, 1, 1, 1, 1], vec![0.0; 4]).unwrap();
        let cfg = AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&s, cfg);
        let loss = |w: &[f64]| w.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut history = Vec::new();
        for _ in 0..200 {
            let w = s.get(0).values.clone();
            history.push(loss(&w));
            let g = w.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
            adam_step(&mut s, &Gradients { grads: vec![Some(g)] }, &mut st).unwrap();
        }
        for pair in history[10..].windows(2) {
            assert!(pair[1] < pair[0], "{pair:?}");
        }
        assert!(history[199] < 0.5 * history[0]);
    }
}
