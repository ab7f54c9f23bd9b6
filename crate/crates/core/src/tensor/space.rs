use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{Error, Result};

/// A named Hilbert-space factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledSpace {
    label: String,
    dim: usize,
}

impl LabeledSpace {
    pub fn new(label: impl Into<String>, dim: usize) -> Result<Self> {
        let label = label.into();
        if dim == 0 {
            return Err(Error::ZeroDimension(label));
        }
        Ok(Self { label, dim })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl fmt::Display for LabeledSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.label, self.dim)
    }
}

/// An ordered tensor product of labelled factors.
///
/// Factors are always kept sorted by label, so two products over the same label set
/// have the same layout regardless of how they were built. Composite indices are
/// row-major: the last factor's index varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SpaceProduct {
    factors: Vec<LabeledSpace>,
}

impl SpaceProduct {
    pub fn new(factors: impl IntoIterator<Item = LabeledSpace>) -> Result<Self> {
        let mut factors: Vec<LabeledSpace> = factors.into_iter().collect();
        factors.sort_by(|a, b| a.label.cmp(&b.label));
        for pair in factors.windows(2) {
            if pair[0].label == pair[1].label {
                return Err(Error::LabelCollision(pair[0].label.clone()));
            }
        }
        Ok(Self { factors })
    }

    /// The zero-factor product (a one-dimensional space).
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(space: LabeledSpace) -> Self {
        Self { factors: vec![space] }
    }

    pub fn factors(&self) -> &[LabeledSpace] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(LabeledSpace::dim).product()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(LabeledSpace::label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.factors.binary_search_by(|f| f.label.as_str().cmp(label)).ok()
    }

    pub fn factor(&self, label: &str) -> Option<&LabeledSpace> {
        self.position(label).map(|i| &self.factors[i])
    }

    /// Union of two products with disjoint labels.
    pub fn union(&self, other: &SpaceProduct) -> Result<SpaceProduct> {
        SpaceProduct::new(self.factors.iter().chain(other.factors.iter()).cloned())
    }

    /// The sub-product over `labels`; every label must be present.
    pub fn subset<S: AsRef<str>>(&self, labels: &[S]) -> Result<SpaceProduct> {
        let mut factors = Vec::with_capacity(labels.len());
        for label in labels {
            let label = label.as_ref();
            let factor = self
                .factor(label)
                .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
            factors.push(factor.clone());
        }
        SpaceProduct::new(factors)
    }

    /// The product with the factors named in `labels` removed.
    pub fn without<S: AsRef<str>>(&self, labels: &[S]) -> Result<SpaceProduct> {
        self.check_labels(labels)?;
        Ok(SpaceProduct {
            factors: self
                .factors
                .iter()
                .filter(|f| !labels.iter().any(|l| l.as_ref() == f.label))
                .cloned()
                .collect(),
        })
    }

    pub fn is_subspace_of(&self, other: &SpaceProduct) -> bool {
        self.factors.iter().all(|f| other.factor(&f.label) == Some(f))
    }

    pub(crate) fn check_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<()> {
        for (i, label) in labels.iter().enumerate() {
            let label = label.as_ref();
            if !self.contains(label) {
                return Err(Error::UnknownLabel(label.to_string()));
            }
            if labels[..i].iter().any(|l| l.as_ref() == label) {
                return Err(Error::LabelCollision(label.to_string()));
            }
        }
        Ok(())
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.factors.len()];
        for k in (0..self.factors.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.factors[k + 1].dim;
        }
        strides
    }

    /// Index offsets splitting this product into a complement part and a `sub` part.
    ///
    /// Returns `(rest, sub)` such that the composite index of the multi-index pair
    /// `(r, s)` is `rest[r] + sub[s]`, where `r` and `s` enumerate the complement and
    /// the sub-product in their own canonical row-major order.
    pub(crate) fn split_offsets<S: AsRef<str>>(&self, sub: &[S]) -> Result<(Vec<usize>, Vec<usize>)> {
        self.check_labels(sub)?;
        let strides = self.strides();
        let mut rest_axes = Vec::new();
        let mut sub_axes = Vec::new();
        for (k, f) in self.factors.iter().enumerate() {
            if sub.iter().any(|l| l.as_ref() == f.label) {
                sub_axes.push((f.dim, strides[k]));
            } else {
                rest_axes.push((f.dim, strides[k]));
            }
        }
        Ok((offsets(&rest_axes), offsets(&sub_axes)))
    }

    /// `map[i]` is the canonical index of the composite index `i` taken in the
    /// factor order `ordered`, which must be a permutation of this product's factors.
    pub(crate) fn reorder_map(&self, ordered: &[LabeledSpace]) -> Result<Vec<usize>> {
        if ordered.len() != self.factors.len() {
            return Err(Error::SpaceMismatch(format!(
                "{} factors given for a product of {}",
                ordered.len(),
                self.factors.len()
            )));
        }
        let strides = self.strides();
        let mut axes = Vec::with_capacity(ordered.len());
        for f in ordered {
            let k = self
                .position(&f.label)
                .ok_or_else(|| Error::UnknownLabel(f.label.clone()))?;
            if self.factors[k].dim != f.dim {
                return Err(Error::DimensionMismatch(format!(
                    "factor `{}` has dimension {} and {}",
                    f.label, self.factors[k].dim, f.dim
                )));
            }
            axes.push((f.dim, strides[k]));
        }
        Ok(offsets(&axes))
    }
}

impl From<LabeledSpace> for SpaceProduct {
    fn from(space: LabeledSpace) -> Self {
        SpaceProduct::single(space)
    }
}

impl fmt::Display for SpaceProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(" ⊗ "))
    }
}

/// Row-major enumeration of `sum(digit_k * stride_k)` over the given axes.
fn offsets(axes: &[(usize, usize)]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &(dim, stride) in axes {
        let mut next = Vec::with_capacity(out.len() * dim);
        for &base in &out {
            for digit in 0..dim {
                next.push(base + digit * stride);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(items: &[(&str, usize)]) -> SpaceProduct {
        SpaceProduct::new(items.iter().map(|(l, d)| LabeledSpace::new(*l, *d).unwrap())).unwrap()
    }

    #[test]
    fn factors_are_sorted_by_label() {
        let s = sp(&[("b", 3), ("a", 2)]);
        let labels: Vec<&str> = s.labels().collect();
        assert_eq!(labels, ["a", "b"]);
        assert_eq!(s.dim(), 6);
    }

    #[test]
    fn duplicate_label_is_rejected() {
        let err =
            SpaceProduct::new([LabeledSpace::new("x", 2).unwrap(), LabeledSpace::new("x", 3).unwrap()]).unwrap_err();
        assert_eq!(err, Error::LabelCollision("x".into()));
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(LabeledSpace::new("x", 0).is_err());
    }

    #[test]
    fn split_offsets_cover_every_index_once() {
        let s = sp(&[("a", 2), ("b", 3), ("c", 2)]);
        let (rest, sub) = s.split_offsets(&["b"]).unwrap();
        let mut all: Vec<usize> = rest.iter().flat_map(|r| sub.iter().map(move |t| r + t)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..12).collect::<Vec<_>>());
        assert_eq!(sub, [0, 2, 4]);
    }

    #[test]
    fn reorder_map_is_a_permutation() {
        let s = sp(&[("a", 2), ("b", 3)]);
        let ordered = [LabeledSpace::new("b", 3).unwrap(), LabeledSpace::new("a", 2).unwrap()];
        let map = s.reorder_map(&ordered).unwrap();
        // ordered index (b, a) = b * 2 + a maps to canonical a * 3 + b
        assert_eq!(map, [0, 3, 1, 4, 2, 5]);
    }
}
