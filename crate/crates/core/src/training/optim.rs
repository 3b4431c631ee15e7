use crate::error::{Error, Result};
use crate::numeric::{Gradients, HasParams, ParamStore, Real};

/// Rescales `grads` in place so their global L2 norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, clip_norm: Real) -> Result<Real> {
    let norm = grads.global_norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite(format!("gradient norm {norm}")));
    }
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    Ok(norm)
}

/// One Nesterov step in lookahead form:
/// `v ← μ·v − lr·∇f(θ + μ·v)`, `θ ← θ + v`.
///
/// `grad_fn` is evaluated at the lookahead point and returns the loss there with
/// its gradients; clipping, if any, is its responsibility.
pub fn nesterov_step<M, F>(
    target: &mut M,
    velocity: &mut Gradients,
    lr: Real,
    momentum: Real,
    grad_fn: F,
) -> Result<Real>
where
    M: HasParams,
    F: FnOnce(&M) -> Result<(Real, Gradients)>,
{
    let ids: Vec<_> = target.params().iter().map(|(id, _)| id).collect();
    for &id in &ids {
        let v = velocity.get(id).data();
        for (p, vi) in target.params_mut().get_mut(id).value.data_mut().iter_mut().zip(v) {
            *p += momentum * vi;
        }
    }
    let result = grad_fn(target);
    let params = target.params_mut();
    let (loss, grads) = match result {
        Ok(r) => r,
        Err(e) => {
            undo_lookahead(params, velocity, momentum);
            return Err(e);
        }
    };
    if !grads.iter().all(|g| g.all_finite()) {
        undo_lookahead(params, velocity, momentum);
        return Err(Error::NonFinite("gradient at lookahead point".into()));
    }
    // θ + v_new = (θ + μ·v) − lr·g
    for &id in &ids {
        let g = grads.get(id).data();
        let p = params.get_mut(id).value.data_mut();
        let v = velocity.get_mut(id).data_mut();
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = momentum * *vi - lr * gi;
            *pi -= lr * gi;
        }
    }
    Ok(loss)
}

fn undo_lookahead(params: &mut ParamStore, velocity: &Gradients, momentum: Real) {
    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let v = velocity.get(id).data();
        for (p, vi) in params.get_mut(id).value.data_mut().iter_mut().zip(v) {
            *p -= momentum * vi;
        }
    }
}

/// Plateau-driven learning-rate decay.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub lr: Real,
    pub best_val_ppl: Real,
    pub min_lr: Real,
    pub decay: Real,
    /// Non-improving validations tolerated before each decay.
    pub patience: usize,
    pub stopped: bool,
    waited: usize,
}

impl LrSchedule {
    pub fn new(lr: Real, min_lr: Real) -> Self {
        LrSchedule {
            lr,
            best_val_ppl: Real::INFINITY,
            min_lr,
            decay: 10.0,
            patience: 0,
            stopped: false,
            waited: 0,
        }
    }

    pub fn with_patience(mut self, patience: usize) -> Self {
        self.patience = patience;
        self
    }

    /// Feeds one validation result; returns whether training should stop.
    pub fn observe(&mut self, val_ppl: Real) -> bool {
        if val_ppl < self.best_val_ppl {
            self.best_val_ppl = val_ppl;
            self.waited = 0;
        } else if self.waited < self.patience {
            self.waited += 1;
        } else {
            self.lr /= self.decay;
            self.waited = 0;
        }
        if self.lr < self.min_lr {
            self.stopped = true;
        }
        self.stopped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn scalar_store(theta: Real) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("theta", Tensor::new(vec![1], vec![theta]).unwrap()).unwrap();
        s
    }

    fn quadratic(store: &ParamStore) -> Result<(Real, Gradients)> {
        let mut g = Gradients::zeros_like(store);
        let id = store.id("theta").unwrap();
        let th = store.value(id).data()[0];
        g.get_mut(id).data_mut()[0] = th;
        Ok((th * th / 2.0, g))
    }

    #[test]
    fn nesterov_hand_iteration() {
        let mut store = scalar_store(1.0);
        let mut vel = Gradients::zeros_like(&store);
        let id = store.id("theta").unwrap();
        // hand iteration of v ← 0.9v − 0.1(θ + 0.9v), θ ← θ + v
        let (mut th, mut v): (Real, Real) = (1.0, 0.0);
        for step in 0..3 {
            v = 0.9 * v - 0.1 * (th + 0.9 * v);
            th += v;
            nesterov_step(&mut store, &mut vel, 0.1, 0.9, quadratic).unwrap();
            assert!((store.value(id).data()[0] - th).abs() < 1e-12, "step {step}");
            assert!((vel.get(id).data()[0] - v).abs() < 1e-12);
        }
        let mut first = scalar_store(1.0);
        let mut v0 = Gradients::zeros_like(&first);
        nesterov_step(&mut first, &mut v0, 0.1, 0.9, quadratic).unwrap();
        assert!((first.value(id).data()[0] - 0.9).abs() < 1e-15);
        assert!((v0.get(id).data()[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_coasts() {
        let mut store = scalar_store(2.0);
        let mut vel = Gradients::zeros_like(&store);
        let id = store.id("theta").unwrap();
        vel.get_mut(id).data_mut()[0] = 0.5;
        nesterov_step(&mut store, &mut vel, 0.1, 0.9, |s| Ok((0.0, Gradients::zeros_like(s)))).unwrap();
        assert!((store.value(id).data()[0] - 2.45).abs() < 1e-15);
    }

    #[test]
    fn failed_gradient_leaves_parameters_untouched() {
        let mut store = scalar_store(2.0);
        let mut vel = Gradients::zeros_like(&store);
        let id = store.id("theta").unwrap();
        vel.get_mut(id).data_mut()[0] = 0.5;
        let err = nesterov_step(&mut store, &mut vel, 0.1, 0.9, |s| {
            let mut g = Gradients::zeros_like(s);
            g.get_mut(id).data_mut()[0] = Real::NAN;
            Ok((0.0, g))
        });
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(store.value(id).data()[0], 2.0);
    }

    #[test]
    fn reference_hyperparameters_decrease_quadratic() {
        let mut store = scalar_store(1.0);
        let mut vel = Gradients::zeros_like(&store);
        let id = store.id("theta").unwrap();
        let mut best = Real::INFINITY;
        for _ in 0..50 {
            nesterov_step(&mut store, &mut vel, 0.2, 0.99, quadratic).unwrap();
            let th = store.value(id).data()[0];
            best = best.min(th * th / 2.0);
        }
        assert!(best < 0.5);
    }

    #[test]
    fn clipping_examples() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(&[2])).unwrap();
        let id = store.id("a").unwrap();
        let mut g = Gradients::zeros_like(&store);
        g.get_mut(id).data_mut().copy_from_slice(&[0.12, 0.16]);
        assert!((clip_gradients(&mut g, 0.1).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(g.get(id).data(), &[0.06, 0.08]);

        g.get_mut(id).data_mut().copy_from_slice(&[0.03, 0.04]);
        clip_gradients(&mut g, 0.1).unwrap();
        assert_eq!(g.get(id).data(), &[0.03, 0.04]);

        let mut z = Gradients::zeros_like(&store);
        assert_eq!(clip_gradients(&mut z, 0.1).unwrap(), 0.0);
        assert_eq!(z.get(id).data(), &[0.0, 0.0]);

        z.get_mut(id).data_mut()[0] = Real::INFINITY;
        assert!(matches!(clip_gradients(&mut z, 0.1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn schedule_examples() {
        let mut s = LrSchedule::new(0.2, 1e-5);
        assert!(!s.observe(50.0));
        assert_eq!(s.lr, 0.2);
        assert!(!s.observe(40.0));
        assert_eq!(s.lr, 0.2);
        assert!(!s.observe(40.0));
        assert!((s.lr - 0.02).abs() < 1e-15);

        let mut s = LrSchedule::new(2e-5, 1e-5);
        s.best_val_ppl = 3.0;
        assert!(s.observe(3.5));
        assert!((s.lr - 2e-6).abs() < 1e-18);
        assert!(s.observe(1.0));
    }

    #[test]
    fn patience_delays_decay() {
        let mut s = LrSchedule::new(0.2, 1e-5).with_patience(2);
        s.observe(5.0);
        s.observe(6.0);
        s.observe(5.5);
        assert_eq!(s.lr, 0.2);
        s.observe(5.0);
        assert!((s.lr - 0.02).abs() < 1e-15);
        s.observe(4.0);
        s.observe(4.5);
        s.observe(4.5);
        assert!((s.lr - 0.02).abs() < 1e-15);
    }

    #[test]
    fn plateaus_walk_down_to_stop() {
        let mut s = LrSchedule::new(0.2, 1e-5);
        s.observe(10.0);
        let mut lrs = vec![s.lr];
        while !s.observe(10.0) {
            lrs.push(s.lr);
        }
        let want = [0.2, 0.02, 0.002, 2e-4, 2e-5];
        assert_eq!(lrs.len(), want.len());
        for (a, b) in lrs.iter().zip(want) {
            assert!((a - b).abs() < 1e-12 * b);
        }
        assert!(s.lr < 1e-5);
    }
}
