use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Unit-length sentence embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "Vec<T>", into = "Vec<T>")]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> TryFrom<Vec<T>> for EmbeddingVector<T> {
    type Error = Error;

    fn try_from(values: Vec<T>) -> Result<Self> {
        Self::normalized(values)
    }
}

impl<T: Scalar> From<EmbeddingVector<T>> for Vec<T> {
    fn from(v: EmbeddingVector<T>) -> Self {
        v.values
    }
}

impl<T: Scalar> EmbeddingVector<T> {
    /// L2-normalizes `values`. Fails on empty or zero vectors.
    pub fn normalized(mut values: Vec<T>) -> Result<Self> {
        let norm = l2_norm(&values);
        if values.is_empty() || norm <= T::zero() || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector { values })
    }

    /// Keeps `values` unchanged when already unit length within 1e-9 and
    /// normalizes otherwise.
    pub fn normalized_if_needed(values: Vec<T>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !values.is_empty() && (norm - T::one()).abs() <= T::lit(1e-9) {
            return Ok(EmbeddingVector { values });
        }
        Self::normalized(values)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        l2_norm(&self.values)
    }
}

pub(crate) fn l2_norm<T: Scalar>(values: &[T]) -> T {
    values.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Cosine similarity of two unit vectors: their dot product, clamped to [−1, 1].
pub fn cosine_similarity<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(dot(&a.values, &b.values).max(-T::one()).min(T::one()))
}
