use ndarray::{Array2, ArrayView1};

use crate::{Error, Result};

/// Softmax of one logit row.
pub fn softmax(row: ArrayView1<f64>) -> Vec<f64> {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Summed negative log-likelihood over the positions where `mask` is set,
/// with the gradient of that sum with respect to the logits.
pub(crate) fn cross_entropy_sum(
    logits: &Array2<f64>,
    targets: &[usize],
    mask: &[bool],
) -> Result<(f64, usize, Array2<f64>)> {
    let (n, v) = logits.dim();
    if targets.len() != n || mask.len() != n {
        return Err(Error::Shape(format!(
            "{n} logit rows, {} targets, {} mask flags",
            targets.len(),
            mask.len()
        )));
    }
    if let Some(&t) = targets.iter().zip(mask).find(|(&t, &m)| m && t >= v).map(|(t, _)| t) {
        return Err(Error::TokenOutOfRange { id: t, vocab_size: v });
    }
    let mut grad = Array2::zeros((n, v));
    let mut total = 0.0;
    let mut count = 0;
    for i in (0..n).filter(|&i| mask[i]) {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[targets[i]];
        let mut g = grad.row_mut(i);
        for (gj, &x) in g.iter_mut().zip(row.iter()) {
            *gj = (x - lse).exp();
        }
        g[targets[i]] -= 1.0;
        count += 1;
    }
    Ok((total, count, grad))
}

/// Mean negative log softmax probability of `targets` over unmasked
/// positions, and its gradient with respect to `logits`.
pub fn cross_entropy_loss(logits: &Array2<f64>, targets: &[usize], mask: &[bool]) -> Result<(f64, Array2<f64>)> {
    let (total, count, mut grad) = cross_entropy_sum(logits, targets, mask)?;
    if count == 0 {
        return Err(Error::NoSupervisedPositions);
    }
    let inv = 1.0 / count as f64;
    grad.mapv_inplace(|g| g * inv);
    Ok((total * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_v() {
        let logits = Array2::zeros((3, 7));
        let (loss, _) = cross_entropy_loss(&logits, &[0, 3, 6], &[true; 3]).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_is_near_zero() {
        let logits = array![[50.0, 0.0, 0.0], [0.0, 0.0, 50.0]];
        let (loss, _) = cross_entropy_loss(&logits, &[0, 2], &[true, true]).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn masked_positions_ignored() {
        let logits = array![[1.0, 2.0], [5.0, -3.0]];
        let (a, g) = cross_entropy_loss(&logits, &[0, 1], &[true, false]).unwrap();
        let (b, _) = cross_entropy_loss(&logits.slice(ndarray::s![0..1, ..]).to_owned(), &[0], &[true]).unwrap();
        assert_eq!(a, b);
        assert!(g.row(1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn all_masked_is_error() {
        let logits = Array2::zeros((2, 3));
        assert!(matches!(
            cross_entropy_loss(&logits, &[0, 1], &[false, false]),
            Err(Error::NoSupervisedPositions)
        ));
        assert!(cross_entropy_loss(&logits, &[0], &[true]).is_err());
    }
}
