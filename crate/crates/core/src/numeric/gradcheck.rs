//! Central finite-difference checks of taped gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{HasParams, ParamStore};
use super::tape::{Padding, Tape, Var};
use super::tensor::{Real, Tensor};
use crate::error::Result;

pub const FD_STEP: Real = 1e-5;

/// Gradients smaller than this are compared on an absolute scale of `REL_FLOOR`,
/// where finite differences carry no relative precision.
pub const REL_FLOOR: Real = 1e-4;

#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    pub max_rel_error: Real,
    pub max_abs_error: Real,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: Real) -> bool {
        self.max_rel_error < tol
    }

    pub fn merge(&mut self, other: GradCheck) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.coordinates += other.coordinates;
    }
}

pub fn relative_error(analytic: Real, numeric: Real) -> Real {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn eval<M, F>(target: &M, loss: &F) -> Result<Real>
where
    M: HasParams,
    F: for<'a> Fn(&'a M, &mut Tape<'a>) -> Result<Var>,
{
    let mut tape = Tape::new(target.params());
    let l = loss(target, &mut tape)?;
    Ok(tape.value(l)[0])
}

/// Compares the backward pass of `loss` against central differences over every
/// coordinate of every parameter. `loss` must be deterministic.
pub fn gradient_check<M, F>(target: &mut M, loss: F) -> Result<GradCheck>
where
    M: HasParams,
    F: for<'a> Fn(&'a M, &mut Tape<'a>) -> Result<Var>,
{
    let grads = {
        let mut tape = Tape::new(target.params());
        let l = loss(target, &mut tape)?;
        tape.backward(l)?
    };
    let ids: Vec<_> = target.params().iter().map(|(id, _)| id).collect();
    let mut report = GradCheck::default();
    for id in ids {
        let n = target.params().value(id).len();
        for i in 0..n {
            let orig = target.params().value(id).data()[i];
            target.params_mut().get_mut(id).value.data_mut()[i] = orig + FD_STEP;
            let up = eval(target, &loss)?;
            target.params_mut().get_mut(id).value.data_mut()[i] = orig - FD_STEP;
            let down = eval(target, &loss)?;
            target.params_mut().get_mut(id).value.data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grads.get(id).data()[i];
            let rel = relative_error(analytic, numeric);
            report.max_abs_error = report.max_abs_error.max((analytic - numeric).abs());
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((target.params().get(id).name.clone(), i));
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

/// Names of the primitives exercised by [`check_primitive`].
pub const PRIMITIVES: [&str; 15] = [
    "embedding",
    "concat_rows",
    "matmul",
    "matmul_bt",
    "add",
    "add_row",
    "scale",
    "glu",
    "conv1d_symmetric",
    "conv1d_causal",
    "attention",
    "attention_masked_self",
    "log_softmax",
    "dropout",
    "nll",
];

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    t
}

/// Reduces a matrix to a scalar through a fixed random projection, so every
/// output coordinate carries a distinct upstream gradient.
fn project(tape: &mut Tape<'_>, x: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let y = tape.matmul(x, w)?;
    Ok(tape.sum(y))
}

/// One randomized finite-difference check of the named primitive.
pub fn check_primitive(name: &str, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..5);
    let k = rng.random_range(1..5);
    let n = rng.random_range(1..5);
    let mut store = ParamStore::new();
    let a = store.add("a", random(&mut rng, &[m, k]))?;
    let (proj_width, b) = match name {
        "embedding" => (k, None),
        "concat_rows" => (k, Some(store.add("b", random(&mut rng, &[n, k]))?)),
        "add" => (k, Some(store.add("b", random(&mut rng, &[m, k]))?)),
        "matmul" => (n, Some(store.add("b", random(&mut rng, &[k, n]))?)),
        "matmul_bt" => (n, Some(store.add("b", random(&mut rng, &[n, k]))?)),
        "add_row" => (k, Some(store.add("b", random(&mut rng, &[k]))?)),
        "glu" => (k, Some(store.add("b", random(&mut rng, &[m, 2 * k]))?)),
        "conv1d_symmetric" | "conv1d_causal" => {
            let w = 2 * rng.random_range(0..3) + 1;
            (n, Some(store.add("b", random(&mut rng, &[w, k, n]))?))
        }
        "attention" => (n, Some(store.add("b", random(&mut rng, &[n + 1, k]))?)),
        _ => (k, None),
    };
    let c = if name == "attention" {
        Some(store.add("c", random(&mut rng, &[n + 1, n]))?)
    } else {
        None
    };
    let weights = random(&mut rng, &[proj_width, 1]);
    let ids: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..m)).collect();
    let targets: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
    let dropout_seed = rng.random::<u64>();
    let name = name.to_string();

    gradient_check(&mut store, move |_, tape| {
        let av = tape.param(a);
        let bv = b.map(|b| tape.param(b));
        let out = match name.as_str() {
            "embedding" => tape.embedding(av, &ids)?,
            "concat_rows" => tape.concat_rows(av, bv.unwrap())?,
            "matmul" => tape.matmul(av, bv.unwrap())?,
            "matmul_bt" => tape.matmul_bt(av, bv.unwrap())?,
            "add" => tape.add(av, bv.unwrap())?,
            "add_row" => tape.add_row(av, bv.unwrap())?,
            "scale" => tape.scale(av, -1.7),
            "glu" => tape.glu(bv.unwrap())?,
            "conv1d_symmetric" => tape.conv1d(av, bv.unwrap(), Padding::Symmetric)?,
            "conv1d_causal" => tape.conv1d(av, bv.unwrap(), Padding::Causal)?,
            "attention" => {
                let cv = tape.param(c.unwrap());
                tape.attention(av, bv.unwrap(), cv, None)?.context
            }
            "attention_masked_self" => {
                let mask: Vec<bool> = (0..m * m).map(|i| i % m <= i / m).collect();
                tape.attention(av, av, av, Some(&mask))?.context
            }
            "log_softmax" => tape.log_softmax(av)?,
            "dropout" => {
                let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
                tape.dropout(av, 0.3, Some(&mut r))
            }
            "nll" => {
                let lp = tape.log_softmax(av)?;
                return tape.nll(lp, &targets);
            }
            other => panic!("unknown primitive {other}"),
        };
        project(tape, out, &weights)
    })
}

/// Runs [`check_primitive`] for `trials` seeds and merges the reports.
pub fn check_primitive_trials(name: &str, trials: u64, seed: u64) -> Result<GradCheck> {
    let mut total = GradCheck::default();
    for t in 0..trials {
        total.merge(check_primitive(name, seed.wrapping_mul(1_000_003).wrapping_add(t))?);
    }
    Ok(total)
}
