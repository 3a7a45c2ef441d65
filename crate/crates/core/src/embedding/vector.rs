use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    unit_normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw values without normalizing them.
    pub fn raw(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingVector {
            values,
            unit_normalized: false,
        })
    }

    /// Scales `values` to unit L2 norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut v = Self::raw(values)?;
        v.normalize()?;
        Ok(v)
    }

    /// Unit-normalizes, then rounds every component to `f32` precision so the
    /// value is identical to what the on-disk cache stores.
    pub(crate) fn normalized_f32(values: Vec<f64>) -> Result<Self> {
        let mut v = Self::normalized(values)?;
        for x in &mut v.values {
            *x = *x as f32 as f64;
        }
        Ok(v)
    }

    pub(crate) fn from_f32_unit(values: Vec<f32>) -> Self {
        EmbeddingVector {
            values: values.into_iter().map(f64::from).collect(),
            unit_normalized: true,
        }
    }

    fn normalize(&mut self) -> Result<()> {
        let norm = l2_norm(&self.values);
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        for x in &mut self.values {
            *x /= norm;
        }
        self.unit_normalized = true;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn is_unit_normalized(&self) -> bool {
        self.unit_normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn dot(&self, other: &EmbeddingVector) -> Result<f64> {
        check_dims(self, other)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<()> {
    if a.dimension() != b.dimension() {
        return Err(Error::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    Ok(())
}

/// `1 - a·b / (‖a‖‖b‖)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a, b)?;
    cosine_distance_slices(&a.values, &b.values)
}

pub(crate) fn cosine_distance_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): for a == b this gives
    // exactly na, so the distance is exactly zero.
    let sim = dot(a, b) / (na * nb).sqrt();
    Ok((1.0 - sim).clamp(0.0, 2.0))
}
