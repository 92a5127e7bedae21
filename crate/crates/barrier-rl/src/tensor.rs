//! Dense row-major arrays of `f64` plus the handful of kernels the tape needs.
//!
//! Shapes are plain `Vec<usize>`; a scalar is the empty shape. There is no
//! broadcasting beyond matrix-vector products and bias rows in `affine`;
//! everything else requires exactly matching shapes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let len = shape.iter().product::<usize>().max(1);
        Tensor { shape: shape.to_vec(), data: vec![v; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expect = shape.iter().product::<usize>().max(1);
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expect} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::from_vec(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Value of a scalar (or single-element) tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on tensor with {} elements", self.data.len());
        self.data[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| x * c)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add_assign on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let [r, c] = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::from_vec(&[c, r], out)
    }

    /// Matrix product. Supports (p,q)x(q,r), (p,q)x(q,) and (q,)x(q,r).
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        match (self.rank(), other.rank()) {
            (2, 2) => {
                let [p, q] = self.dims2("matmul lhs")?;
                let [q2, r] = other.dims2("matmul rhs")?;
                if q != q2 {
                    return Err(Error::ShapeMismatch(format!(
                        "matmul inner dims {q} vs {q2}"
                    )));
                }
                let mut out = vec![0.0; p * r];
                matmul_into(&self.data, &other.data, &mut out, p, q, r);
                Tensor::from_vec(&[p, r], out)
            }
            (2, 1) => {
                let [p, q] = self.dims2("matmul lhs")?;
                if q != other.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "matvec dims ({p},{q}) vs ({},)",
                        other.len()
                    )));
                }
                let mut out = vec![0.0; p];
                matmul_into(&self.data, &other.data, &mut out, p, q, 1);
                Ok(Tensor::vector(out))
            }
            (1, 2) => {
                let q = self.len();
                let [q2, r] = other.dims2("matmul rhs")?;
                if q != q2 {
                    return Err(Error::ShapeMismatch(format!(
                        "vecmat dims ({q},) vs ({q2},{r})"
                    )));
                }
                let mut out = vec![0.0; r];
                matmul_into(&self.data, &other.data, &mut out, 1, q, r);
                Ok(Tensor::vector(out))
            }
            (a, b) => Err(Error::ShapeMismatch(format!(
                "matmul requires rank 1 or 2 operands, got ranks {a} and {b}"
            ))),
        }
    }

    /// Column sums of a 2-D tensor.
    pub fn col_sum(&self) -> Result<Tensor> {
        let [r, c] = self.dims2("col_sum")?;
        let mut out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                out[j] += self.data[i * c + j];
            }
        }
        Ok(Tensor::vector(out))
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.shape.iter().product::<usize>().max(1);
        if self.data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "tensor invariant violated: shape {:?} with {} elements",
                self.shape,
                self.data.len()
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn dims2(&self, what: &str) -> Result<[usize; 2]> {
        if self.rank() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "{what} requires a 2-D tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok([self.shape[0], self.shape[1]])
    }
}

/// `x @ w + b` with the bias broadcast across rows; `x` may be rank 1 or 2.
/// Both the tape's `affine` node and the plain forward paths call this, so
/// the two routes produce bit-identical values.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let xw = x.matmul(w)?;
    match xw.rank() {
        1 => xw.add(b),
        2 => {
            let rows = xw.shape()[0];
            let cols = xw.shape()[1];
            if b.shape() != [cols] {
                return Err(Error::ShapeMismatch(format!(
                    "affine bias {:?} vs output cols {cols}",
                    b.shape()
                )));
            }
            let mut out = xw.data().to_vec();
            for r in 0..rows {
                for c in 0..cols {
                    out[r * cols + c] += b.data()[c];
                }
            }
            Tensor::from_vec(&[rows, cols], out)
        }
        _ => Err(Error::ShapeMismatch("affine input must be rank 1 or 2".into())),
    }
}

/// Repeat a rank-1 tensor as the rows of a `(rows, n)` matrix.
pub fn tile_row(t: &Tensor, rows: usize) -> Tensor {
    debug_assert_eq!(t.rank(), 1);
    let n = t.len();
    let mut data = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        data.extend_from_slice(t.data());
    }
    Tensor { shape: vec![rows, n], data }
}

pub fn outer(a: &[f64], b: &[f64]) -> Tensor {
    let mut out = vec![0.0; a.len() * b.len()];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    Tensor { shape: vec![a.len(), b.len()], data: out }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let a_row = &a[i * q..(i + 1) * q];
        let out_row = &mut out[i * r..(i + 1) * r];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[k * r..(k + 1) * r];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
}

/// Numerically stable softplus, ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid expressed through softplus so the plain path and the
/// tape path (exp of neg of softplus of neg) produce bit-identical values.
pub fn sigmoid(x: f64) -> f64 {
    (-softplus(-x)).exp()
}

/// Smooth clamp of `x` into `[lo, hi]` built from two softplus hinges.
/// Near the interior it is close to the identity; gradients never vanish.
pub fn softclamp(x: f64, lo: f64, hi: f64) -> f64 {
    let hi2 = hi - std::f64::consts::LN_2;
    let y = hi2 - softplus(hi2 - x);
    lo + softplus(y - lo)
}

pub mod norms {
    pub fn l2(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_shapes() {
        let a = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::matrix(3, 2, vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58., 64., 139., 154.]);

        let v = Tensor::vector(vec![1., 0., -1.]);
        let av = a.matmul(&v).unwrap();
        assert_eq!(av.data(), &[1. - 3., 4. - 6.]);

        let va = v.matmul(&b).unwrap();
        assert_eq!(va.data(), &[7. - 11., 8. - 12.]);
    }

    #[test]
    fn matmul_dim_mismatch() {
        let a = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let a = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let t = a.transpose().unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.transpose().unwrap(), a);
    }

    #[test]
    fn softplus_stable_at_extremes() {
        assert!(softplus(800.0).is_finite());
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_matches_closed_form() {
        for &x in &[-5.0, -0.3, 0.0, 0.7, 4.2] {
            let direct = 1.0 / (1.0 + (-x as f64).exp());
            assert!((sigmoid(x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn softclamp_respects_bounds() {
        let (lo, hi) = (-5.0, 1.0);
        for i in -100..=100 {
            let x = i as f64 * 0.5;
            let y = softclamp(x, lo, hi);
            assert!(y >= lo && y <= hi, "softclamp({x}) = {y} outside [{lo}, {hi}]");
        }
        // near the middle of the range it is close to the identity
        let mid = softclamp(-2.0, lo, hi);
        assert!((mid - (-2.0)).abs() < 0.1);
    }

    #[test]
    fn scalar_shape_is_empty() {
        let s = Tensor::scalar(3.5);
        assert!(s.is_scalar());
        assert_eq!(s.len(), 1);
        assert_eq!(s.item(), 3.5);
    }
}
