use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::params::{BoundParams, ParamStore};
use crate::autodiff::tape::{NodeId, Tape};
use crate::autodiff::tensor::Scalar;
use crate::error::{Error, Result};

/// Options for [`grad_check`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckOpts {
    /// Central-difference step.
    pub epsilon: Scalar,
    /// Check at most this many coordinates per parameter, sampled with the
    /// seed below. `None` checks everything.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOpts {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: Scalar,
    pub worst_param: String,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Compare backprop gradients against central differences for every
/// parameter coordinate (or a seeded subsample).
///
/// `loss_fn` must build a scalar loss on the given tape from the bound
/// parameters, deterministically: the loss is evaluated twice up front and a
/// bitwise mismatch is reported as an error (this catches dropout or other
/// stray randomness, which would invalidate the finite differences).
pub fn grad_check<F>(store: &ParamStore, opts: GradCheckOpts, loss_fn: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<NodeId>,
{
    let eval = |s: &ParamStore| -> Result<Scalar> {
        let mut tape = Tape::eval();
        let bound = BoundParams::bind(&mut tape, s);
        let loss = loss_fn(&mut tape, &bound)?;
        Ok(tape.value(loss).item())
    };

    let l1 = eval(store)?;
    let l2 = eval(store)?;
    if l1.to_bits() != l2.to_bits() {
        return Err(Error::NonDeterministicLoss(l1 as f64, l2 as f64));
    }
    if !l1.is_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }

    let mut tape = Tape::eval();
    let bound = BoundParams::bind(&mut tape, store);
    let loss = loss_fn(&mut tape, &bound)?;
    tape.backward(loss)?;
    let grads = bound.collect_grads(&tape, store);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_coord: 0,
        coords_checked: 0,
    };

    for (name, tensor) in store.iter() {
        let n = tensor.numel();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(cap) if n > cap => sample(&mut rng, n, cap).into_vec(),
            _ => (0..n).collect(),
        };
        let analytic = &grads[name];
        for idx in coords {
            let mut plus = store.clone();
            plus.get_mut(name).data_mut()[idx] += opts.epsilon;
            let lp = eval(&plus)?;
            let mut minus = store.clone();
            minus.get_mut(name).data_mut()[idx] -= opts.epsilon;
            let lm = eval(&minus)?;
            let numeric = (lp - lm) / (2.0 * opts.epsilon);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.to_string();
                report.worst_coord = idx;
            }
            report.coords_checked += 1;
        }
    }
    Ok(report)
}
