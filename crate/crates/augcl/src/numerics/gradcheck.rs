//! Finite-difference gradient checking.
//!
//! Central differences over a black-box scalar function of named tensors.
//! Deliberately knows nothing about the tape, so it can serve as an
//! independent reference for the reverse-mode gradients.

use std::collections::BTreeMap;

use super::Tensor;

/// Central-difference gradient of `f` at `params`, entry by entry.
pub fn finite_difference<F>(
    f: &mut F,
    params: &BTreeMap<String, Tensor>,
    h: f64,
) -> BTreeMap<String, Tensor>
where
    F: FnMut(&BTreeMap<String, Tensor>) -> f64,
{
    let mut grads = BTreeMap::new();
    for name in params.keys() {
        let numel = params[name].numel();
        let mut g = Vec::with_capacity(numel);
        for k in 0..numel {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data_mut()[k] += h;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data_mut()[k] -= h;
            g.push((f(&plus) - f(&minus)) / (2.0 * h));
        }
        grads.insert(
            name.clone(),
            Tensor::new(params[name].shape().to_vec(), g).unwrap(),
        );
    }
    grads
}

/// Worst relative disagreement between two gradient sets.
///
/// Differences at or below `abs_floor` count as zero, so near-zero entries do
/// not blow up the relative measure.
pub fn max_mismatch(
    a: &BTreeMap<String, Tensor>,
    b: &BTreeMap<String, Tensor>,
    abs_floor: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (name, ta) in a {
        let tb = &b[name];
        for (&x, &y) in ta.data().iter().zip(tb.data()) {
            let diff = (x - y).abs();
            if diff <= abs_floor {
                continue;
            }
            worst = worst.max(diff / x.abs().max(y.abs()));
        }
    }
    worst
}
