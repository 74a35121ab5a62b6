//! Feature vectors, selection masks and masked instances.
//!
//! A masked coordinate is *absent*, which is not the same thing as the value
//! zero. [`MaskedInstance`] therefore stores `Option<f64>` per coordinate and
//! the mask can always be recovered from it.

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};

/// A dense, finite-valued feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("feature vector must have at least one entry"));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "feature {j} is not finite ({})",
                values[j]
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(x: FeatureVector) -> Self {
        x.0
    }
}

// Bitwise equality is what the audit and LP tables need; entries are finite
// so `to_bits` agrees with `==` except for the sign of zero.
impl Eq for FeatureVector {}

impl Hash for FeatureVector {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in &self.0 {
            canonical_bits(*v).hash(state);
        }
    }
}

fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Binary selection vector `h`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(d: usize) -> Self {
        Mask {
            bits: vec![false; d],
        }
    }

    pub fn full(d: usize) -> Self {
        Mask { bits: vec![true; d] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Mask { bits }
    }

    /// Mask with the given (zero-based) indices selected.
    pub fn from_indices(d: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; d];
        for &j in indices {
            if j >= d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: j + 1,
                });
            }
            bits[j] = true;
        }
        Ok(Mask { bits })
    }

    /// Bit `j` of `code` selects feature `j`. Requires `d <= 64`.
    pub fn from_code(d: usize, code: u64) -> Self {
        debug_assert!(d <= 64);
        Mask {
            bits: (0..d).map(|j| code >> j & 1 == 1).collect(),
        }
    }

    pub fn code(&self) -> u64 {
        debug_assert!(self.bits.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &b)| acc | (u64::from(b) << j))
    }

    /// All `2^d` masks in code order.
    pub fn enumerate(d: usize) -> impl Iterator<Item = Mask> {
        (0..1u64 << d).map(move |c| Mask::from_code(d, c))
    }

    pub fn single(d: usize, j: usize) -> Self {
        let mut m = Mask::empty(d);
        m.bits[j] = true;
        m
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn set(&mut self, j: usize, on: bool) {
        self.bits[j] = on;
    }

    /// `‖h‖`, the number of selected features.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `‖h‖ / d`.
    pub fn sparsity_ratio(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
    }

    pub fn unselected(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| (!b).then_some(j))
    }

    /// `self ⊆ other`: every feature selected here is selected in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> Result<bool> {
        check_dim(self.len(), other.len())?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .all(|(&a, &b)| !a || b))
    }

    /// `h + u` for masks with disjoint support.
    pub fn union(&self, other: &Mask) -> Result<Mask> {
        check_dim(self.len(), other.len())?;
        let overlap: Vec<usize> = self
            .bits
            .iter()
            .zip(&other.bits)
            .enumerate()
            .filter_map(|(j, (&a, &b))| (a && b).then_some(j))
            .collect();
        if !overlap.is_empty() {
            return Err(Error::Reselection { indices: overlap });
        }
        Ok(Mask {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    /// Adds feature `j`, which must not be selected yet.
    pub fn with(&self, j: usize) -> Result<Mask> {
        if j >= self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                actual: j + 1,
            });
        }
        if self.bits[j] {
            return Err(Error::Reselection { indices: vec![j] });
        }
        let mut m = self.clone();
        m.bits[j] = true;
        Ok(m)
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask(")?;
        for &b in &self.bits {
            write!(f, "{}", u8::from(b))?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let bits: Vec<u8> = self.bits.iter().map(|&b| u8::from(b)).collect();
        bits.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<u8>::deserialize(d)?;
        let bits = raw
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!(
                    "mask bit must be 0 or 1, got {other}"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Mask { bits })
    }
}

/// `x ⊙ h`: the partially observed feature vector induced by a mask.
#[derive(Debug, Clone)]
pub struct MaskedInstance {
    values: Vec<Option<f64>>,
}

impl MaskedInstance {
    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, j: usize) -> Option<f64> {
        self.values[j]
    }

    /// The mask is exactly recoverable from the instance.
    pub fn mask(&self) -> Mask {
        Mask {
            bits: self.values.iter().map(Option::is_some).collect(),
        }
    }

    pub(crate) fn from_parts(values: Vec<Option<f64>>) -> Self {
        MaskedInstance { values }
    }
}

impl PartialEq for MaskedInstance {
    fn eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => canonical_bits(*a) == canonical_bits(*b),
                _ => false,
            })
    }
}

impl Eq for MaskedInstance {}

impl Hash for MaskedInstance {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.values.len().hash(state);
        for v in &self.values {
            match v {
                None => 0u8.hash(state),
                Some(x) => {
                    1u8.hash(state);
                    canonical_bits(*x).hash(state);
                }
            }
        }
    }
}

impl fmt::Display for MaskedInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (j, v) in self.values.iter().enumerate() {
            if j > 0 {
                write!(f, ", ")?;
            }
            match v {
                Some(x) => write!(f, "{x}")?,
                None => write!(f, "∅")?,
            }
        }
        write!(f, ")")
    }
}

#[derive(Serialize, Deserialize)]
struct MaskedInstanceRepr {
    values: Vec<Option<f64>>,
    bits: Mask,
}

impl Serialize for MaskedInstance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MaskedInstanceRepr {
            values: self.values.clone(),
            bits: self.mask(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MaskedInstance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MaskedInstanceRepr::deserialize(d)?;
        if repr.values.len() != repr.bits.len() {
            return Err(serde::de::Error::custom(format!(
                "values has length {} but bits has length {}",
                repr.values.len(),
                repr.bits.len()
            )));
        }
        for (j, (v, &b)) in repr.values.iter().zip(repr.bits.bits()).enumerate() {
            match v {
                Some(x) if !b => {
                    return Err(serde::de::Error::custom(format!(
                        "coordinate {j} has value {x} but bit 0"
                    )))
                }
                None if b => {
                    return Err(serde::de::Error::custom(format!(
                        "coordinate {j} is absent but bit 1"
                    )))
                }
                Some(x) if !x.is_finite() => {
                    return Err(serde::de::Error::custom(format!(
                        "coordinate {j} is not finite"
                    )))
                }
                _ => {}
            }
        }
        Ok(MaskedInstance::from_parts(repr.values))
    }
}

/// `x ⊙ h`.
pub fn apply_mask(x: &FeatureVector, h: &Mask) -> Result<MaskedInstance> {
    check_dim(x.len(), h.len())?;
    Ok(MaskedInstance::from_parts(
        x.values()
            .iter()
            .zip(h.bits())
            .map(|(&v, &b)| b.then_some(v))
            .collect(),
    ))
}
