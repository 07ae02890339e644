//! Forward kernels shared by the tape and by callers that only need values.

use super::{NumericsError, RngStream, Tensor};

/// Additive logit penalty applied to masked positions before the softmax.
pub const MASK_PENALTY: f64 = -1e9;

/// Default layer-norm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn require_rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), NumericsError> {
    if t.rank() != 2 {
        return Err(NumericsError::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// `C = A·B` for `A: m×k`, `B: k×n`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, k) = require_rank2("matmul", a)?;
    let (k2, n) = require_rank2("matmul", b)?;
    if k != k2 {
        return Err(NumericsError::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(Tensor::from_parts(vec![m, n], matmul_raw(a.data(), b.data(), m, k, n)))
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `A·Bᵀ` for `A: m×k`, `B: n×k`.
pub(crate) fn matmul_nt_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * n + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `Aᵀ·B` for `A: k×m`, `B: k×n`.
pub(crate) fn matmul_tn_raw(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Row-wise softmax over the last dimension with a shared validity mask.
///
/// Masked logits are shifted by [`MASK_PENALTY`], the row maximum is taken over
/// valid entries only, and masked weights are written back as exact zeros.
pub fn softmax_masked(logits: &Tensor, mask: &[bool]) -> Result<Tensor, NumericsError> {
    let cols = logits.cols();
    if mask.len() != cols {
        return Err(NumericsError::Shape {
            op: "softmax_masked",
            lhs: logits.shape().to_vec(),
            rhs: vec![mask.len()],
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(NumericsError::DegenerateMask);
    }
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(cols) {
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (v, &valid) in row.iter_mut().zip(mask) {
            let shifted = if valid { *v - max } else { *v + MASK_PENALTY - max };
            let e = shifted.exp();
            *v = if valid { e } else { 0.0 };
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(Tensor::from_parts(logits.shape().to_vec(), out))
}

/// Normalized rows and reciprocal standard deviations, kept for the backward pass.
pub(crate) struct LayerNormParts {
    pub output: Tensor,
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm_parts(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<LayerNormParts, NumericsError> {
    let d = x.cols();
    if gamma.len() != d || beta.len() != d {
        return Err(NumericsError::Shape {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gamma.shape().to_vec(),
        });
    }
    let rows = x.rows();
    let mut normalized = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = x.row_slice(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..d {
            let xh = (row[j] - mean) * is;
            normalized[r * d + j] = xh;
            out[r * d + j] = gamma.data()[j] * xh + beta.data()[j];
        }
    }
    Ok(LayerNormParts {
        output: Tensor::from_parts(x.shape().to_vec(), out),
        normalized,
        inv_std,
    })
}

/// Per-row layer normalization over the last dimension (biased variance).
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor, NumericsError> {
    layer_norm_parts(x, gamma, beta, eps).map(|p| p.output)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::Shape {
            op: "add",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Inverted-dropout scale factors: `0` for dropped elements, `1/(1-rate)` for survivors.
///
/// Returns `None` when dropout is the identity (evaluation mode or zero rate).
pub fn dropout_scales(
    len: usize,
    rate: f64,
    training: bool,
    rng: Option<&mut RngStream>,
) -> Result<Option<Vec<f64>>, NumericsError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::InvalidDropout(rate));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let rng = rng.ok_or(NumericsError::MissingRng)?;
    let keep = 1.0 / (1.0 - rate);
    Ok(Some(
        (0..len)
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect(),
    ))
}

pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: Option<&mut RngStream>) -> Result<Tensor, NumericsError> {
    Ok(match dropout_scales(x.len(), rate, training, rng)? {
        None => x.clone(),
        Some(scales) => Tensor::from_parts(
            x.shape().to_vec(),
            x.data().iter().zip(&scales).map(|(v, s)| v * s).collect(),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_sum() {
        let eye = t(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = t(&[vec![1.5, -2.0, 3.0], vec![0.25, 4.0, -1.0]]);
        assert_eq!(matmul(&eye, &b).unwrap(), b);

        let a = t(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let ones = t(&[vec![1.0], vec![1.0]]);
        assert_eq!(matmul(&a, &ones).unwrap(), t(&[vec![3.0], vec![7.0]]));
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn transposed_kernels_agree_with_explicit_transpose() {
        let a = t(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0]]);
        let b = t(&[vec![0.5, 1.0, -2.0], vec![3.0, 0.0, 1.0]]);
        let nt = matmul_nt_raw(a.data(), b.data(), 2, 3, 2);
        assert_eq!(nt, matmul(&a, &b.transpose().unwrap()).unwrap().into_data());
        let tn = matmul_tn_raw(a.data(), b.data(), 2, 3, 3);
        assert_eq!(tn, matmul(&a.transpose().unwrap(), &b).unwrap().into_data());
    }

    #[test]
    fn softmax_uniform_and_hand_values() {
        let s = softmax_masked(&Tensor::row(vec![0.0; 3]), &[true; 3]).unwrap();
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_masked(&Tensor::row(vec![1.0, 2.0, 3.0]), &[true; 3]).unwrap();
        let expected = [0.09003, 0.24473, 0.66524];
        for (v, e) in s.data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-5, "{v} vs {e}");
        }
    }

    #[test]
    fn softmax_masked_position_is_exactly_zero() {
        let s = softmax_masked(&Tensor::row(vec![5.0, 2.0, 9.0]), &[true, false, true]).unwrap();
        assert_eq!(s.data()[1], 0.0);
        assert!((s.data()[0] + s.data()[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_all_masked_row() {
        let err = softmax_masked(&Tensor::row(vec![1.0, 2.0]), &[false, false]).unwrap_err();
        assert!(matches!(err, NumericsError::DegenerateMask));
    }

    #[test]
    fn layer_norm_examples() {
        let ones = Tensor::ones(&[3]);
        let zeros = Tensor::zeros(&[3]);
        let out = layer_norm(&Tensor::row(vec![5.0; 3]), &ones, &zeros, LAYER_NORM_EPS).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let out = layer_norm(
            &Tensor::row(vec![1.0, 3.0]),
            &Tensor::ones(&[2]),
            &Tensor::zeros(&[2]),
            LAYER_NORM_EPS,
        )
        .unwrap();
        // std is 1, so eps perturbs the result at the 1e-5 level.
        assert!((out.data()[0] + 1.0).abs() < 1e-5);
        assert!((out.data()[1] - 1.0).abs() < 1e-5);

        let x = t(&[vec![0.3, -2.0, 8.0], vec![1.0, 1.5, 2.0]]);
        let out = layer_norm(&x, &Tensor::zeros(&[3]), &Tensor::full(&[3], 7.0), LAYER_NORM_EPS).unwrap();
        assert!(out.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn relu_and_dropout_identities() {
        assert_eq!(relu(&Tensor::row(vec![-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
        let x = Tensor::row(vec![0.5, -1.0, 3.0]);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(dropout(&x, 0.0, true, Some(&mut rng)).unwrap(), x);
        assert_eq!(dropout(&x, 0.9, false, None).unwrap(), x);
        assert!(matches!(
            dropout(&x, 1.0, true, Some(&mut rng)),
            Err(NumericsError::InvalidDropout(_))
        ));
    }

    #[test]
    fn dropout_scales_survivors() {
        let x = Tensor::ones(&[1, 2000]);
        let mut rng = RngStream::new(3, 9);
        let y = dropout(&x, 0.25, true, Some(&mut rng)).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count();
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
        assert!((1400..1600).contains(&kept), "kept {kept}");
    }
}
