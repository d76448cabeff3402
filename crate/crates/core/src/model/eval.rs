//! Reference evaluator: literal nested loops over the full iteration space.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use super::{ArrayMeta, BatchedEinsum, DtypeCode};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Dense row-major array. Integer and half-precision dtypes are held as `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub dtype: DtypeCode,
    pub data: TensorData,
}

impl Tensor {
    pub fn real(shape: impl Into<Vec<usize>>, dtype: DtypeCode, data: Vec<f64>) -> Tensor {
        Tensor {
            shape: shape.into(),
            dtype,
            data: TensorData::Real(data),
        }
    }

    pub fn complex(shape: impl Into<Vec<usize>>, dtype: DtypeCode, data: Vec<Complex64>) -> Tensor {
        Tensor {
            shape: shape.into(),
            dtype,
            data: TensorData::Complex(data),
        }
    }

    pub fn f64(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Tensor {
        Tensor::real(shape, DtypeCode::Float64, data)
    }

    /// Zero-filled tensor; complex storage iff `dtype` is complex.
    pub fn zeros(shape: impl Into<Vec<usize>>, dtype: DtypeCode) -> Tensor {
        let shape = shape.into();
        let len = shape.iter().product();
        let data = if dtype.is_complex() {
            TensorData::Complex(vec![Complex64::new(0.0, 0.0); len])
        } else {
            TensorData::Real(vec![0.0; len])
        };
        Tensor { shape, dtype, data }
    }

    /// Uniform entries in `[-1, 1)`; integer dtypes get small integers.
    pub fn random<R: Rng + ?Sized>(meta: &ArrayMeta, rng: &mut R) -> Tensor {
        let len = meta.len();
        let real = |rng: &mut R| match meta.dtype {
            DtypeCode::Int8 | DtypeCode::Int32 | DtypeCode::Int64 => {
                rng.gen_range(-4i32..=4) as f64
            }
            _ => rng.gen_range(-1.0..1.0),
        };
        if meta.dtype.is_complex() {
            let data = (0..len)
                .map(|_| Complex64::new(real(rng), real(rng)))
                .collect();
            Tensor::complex(meta.shape.clone(), meta.dtype, data)
        } else {
            let data = (0..len).map(|_| real(rng)).collect();
            Tensor::real(meta.shape.clone(), meta.dtype, data)
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::Real(v) => v.len(),
            TensorData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_flat(&self, offset: usize) -> Complex64 {
        match &self.data {
            TensorData::Real(v) => Complex64::new(v[offset], 0.0),
            TensorData::Complex(v) => v[offset],
        }
    }

    pub fn get(&self, index: &[usize]) -> Complex64 {
        self.get_flat(flat_offset(&self.shape, index))
    }

    pub fn set_flat(&mut self, offset: usize, value: Complex64) {
        match &mut self.data {
            TensorData::Real(v) => v[offset] = value.re,
            TensorData::Complex(v) => v[offset] = value,
        }
    }

    pub fn values(&self) -> Vec<Complex64> {
        (0..self.len()).map(|k| self.get_flat(k)).collect()
    }

    /// Elementwise `|a - b| <= rel * max(|a|, |b|, 1)`, same shape required.
    pub fn approx_eq(&self, other: &Tensor, rel: f64) -> bool {
        self.shape == other.shape
            && self.len() == other.len()
            && (0..self.len()).all(|k| {
                let (a, b) = (self.get_flat(k), other.get_flat(k));
                (a - b).norm() <= rel * a.norm().max(b.norm()).max(1.0)
            })
    }
}

pub(crate) fn flat_offset(shape: &[usize], index: &[usize]) -> usize {
    shape
        .iter()
        .zip(index)
        .fold(0, |acc, (&extent, &i)| acc * extent + i)
}

/// Widest dtype by rank.
pub(crate) fn widest<'a>(dtypes: impl IntoIterator<Item = &'a DtypeCode>) -> DtypeCode {
    dtypes
        .into_iter()
        .copied()
        .max()
        .unwrap_or(DtypeCode::Float64)
}

/// Evaluates every row of `e`, looking operands up by name in `bindings`.
pub fn evaluate(e: &BatchedEinsum, bindings: &BTreeMap<String, Tensor>) -> Result<Vec<Tensor>> {
    e.check()?;
    for (name, meta) in e.universe() {
        let t = bindings
            .get(&name)
            .ok_or_else(|| Error::MissingBinding(name.clone()))?;
        if t.shape != meta.shape {
            return Err(Error::BindingMismatch {
                name,
                reason: format!("shape {:?}, declared {:?}", t.shape, meta.shape),
            });
        }
        if t.dtype != meta.dtype {
            return Err(Error::BindingMismatch {
                name,
                reason: format!("dtype {}, declared {}", t.dtype, meta.dtype),
            });
        }
        if t.len() != meta.len() {
            return Err(Error::BindingMismatch {
                name,
                reason: format!("{} elements for shape {:?}", t.len(), meta.shape),
            });
        }
    }
    let operands: Vec<Vec<&Tensor>> = e
        .args
        .iter()
        .map(|row| row.iter().map(|a| &bindings[&a.name]).collect())
        .collect();
    Ok(operands
        .iter()
        .map(|row| {
            evaluate_with(
                e,
                |slot, idx| row[slot].get(idx),
                row.iter().map(|t| &t.dtype),
            )
        })
        .collect())
}

/// Sum-of-products over the full iteration space of `e`'s notation, reading
/// operand `slot` at a given multi-index through `value`.
pub(crate) fn evaluate_with<'a>(
    e: &BatchedEinsum,
    value: impl Fn(usize, &[usize]) -> Complex64,
    dtypes: impl IntoIterator<Item = &'a DtypeCode>,
) -> Tensor {
    let lengths = e.index_lengths();
    let symbols: Vec<&str> = e.indices_in_order();
    let extents: Vec<usize> = symbols.iter().map(|s| lengths[*s]).collect();
    let position = |s: &str| symbols.iter().position(|t| *t == s).unwrap();
    let out_pos: Vec<usize> = e.i_out.iter().map(|s| position(s)).collect();
    let in_pos: Vec<Vec<usize>> = e
        .i_in
        .iter()
        .map(|l| l.iter().map(|s| position(s)).collect())
        .collect();
    let out_shape: Vec<usize> = out_pos.iter().map(|&p| extents[p]).collect();
    let mut out = Tensor::zeros(out_shape.clone(), widest(dtypes));

    let total: usize = extents.iter().product();
    let mut counter = vec![0usize; extents.len()];
    let mut scratch: Vec<Vec<usize>> = in_pos.iter().map(|p| vec![0; p.len()]).collect();
    let mut out_idx = vec![0usize; out_pos.len()];
    for _ in 0..total {
        let mut prod = Complex64::new(1.0, 0.0);
        for (slot, positions) in in_pos.iter().enumerate() {
            for (d, &p) in positions.iter().enumerate() {
                scratch[slot][d] = counter[p];
            }
            prod *= value(slot, &scratch[slot]);
        }
        for (d, &p) in out_pos.iter().enumerate() {
            out_idx[d] = counter[p];
        }
        let off = flat_offset(&out_shape, &out_idx);
        let acc = out.get_flat(off) + prod;
        out.set_flat(off, acc);
        // odometer increment, last symbol fastest
        for k in (0..counter.len()).rev() {
            counter[k] += 1;
            if counter[k] < extents[k] {
                break;
            }
            counter[k] = 0;
        }
    }
    out
}
