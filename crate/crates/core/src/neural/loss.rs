//! Softmax and sparse categorical cross-entropy.

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy over the batch and its gradient with respect to the logits.
pub fn scce_loss(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, q) = logits.dim();
    if labels.len() != batch || batch == 0 {
        return Err(Error::InvalidDimension(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= q) {
        return Err(Error::InvalidClass { class: bad, order: q });
    }
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (i, (mut row, &y)) in grad.axis_iter_mut(Axis(0)).zip(labels).enumerate() {
        loss -= log_softmax_at(logits.row(i), y);
        row[y] -= 1.0;
    }
    grad /= batch as f64;
    Ok((loss / batch as f64, grad))
}

fn log_softmax_at(row: ArrayView1<f64>, y: usize) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    row[y] - lse
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use ndarray::{array, Array};

    #[test]
    fn uniform_logits_give_ln_q() {
        let (loss, _) = scce_loss(&Array2::zeros((3, 4)), &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_margin_drives_loss_to_zero() {
        let (loss, _) = scce_loss(&array![[1000.0, 0.0, 0.0, 0.0]], &[0]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let z = array![[0.3, -1.2, 4.0, 2.2], [800.0, 801.0, 799.0, 0.0]];
        let p = softmax(&z);
        for row in p.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let shifted = softmax(&(&z + 17.5));
        for (a, b) in p.iter().zip(shifted.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(8, 1);
        let z = Array::from_shape_simple_fn((8, 4), || 4.0 * rng.uniform() - 2.0);
        let labels: Vec<usize> = (0..8).map(|_| rng.below(4)).collect();
        let (_, grad) = scce_loss(&z, &labels).unwrap();
        let h = 1e-5;
        for idx in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp.as_slice_mut().unwrap()[idx] += h;
            zm.as_slice_mut().unwrap()[idx] -= h;
            let fd = (scce_loss(&zp, &labels).unwrap().0 - scce_loss(&zm, &labels).unwrap().0) / (2.0 * h);
            let an = grad.as_slice().unwrap()[idx];
            assert!((fd - an).abs() / an.abs().max(1e-3) < 1e-6, "{fd} vs {an}");
        }
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            scce_loss(&Array2::zeros((1, 4)), &[4]),
            Err(Error::InvalidClass { class: 4, order: 4 })
        ));
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(array![0.1, 2.0, -1.0, 0.0].view()), 1);
        assert_eq!(argmax(array![1.0, 1.0, 0.0, 0.0].view()), 0);
    }
}
