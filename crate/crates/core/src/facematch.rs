//! Face-characteristic verification.
//!
//! A probe embedding taken during the exam is compared with every reference
//! embedding captured before it started. The smallest Euclidean distance
//! decides the verdict: at or below the threshold the probe is the candidate,
//! above it someone else is sitting the exam.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMBEDDING_DIM: usize = 128;

/// Distance at or below which a probe is accepted as the candidate.
pub const DEFAULT_FACE_THRESHOLD: f64 = 0.6;

/// Number of reference frames captured before the exam.
pub const DEFAULT_REFERENCE_COUNT: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaceMatchError {
    #[error("embedding has {0} components, expected {EMBEDDING_DIM}")]
    WrongDimension(usize),
    #[error("embedding component {index} is not finite")]
    NonFiniteInput { index: usize },
    #[error("reference set is empty")]
    EmptyReferenceSet,
    #[error("threshold {0} must be positive and finite")]
    InvalidThreshold(f64),
}

/// A 128-dimensional face characteristic. Values are opaque; no
/// normalization is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, FaceMatchError> {
        check_components(&values)?;
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(alloc::vec![0.0; EMBEDDING_DIM])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = FaceMatchError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

fn check_components(values: &[f64]) -> Result<(), FaceMatchError> {
    if values.len() != EMBEDDING_DIM {
        return Err(FaceMatchError::WrongDimension(values.len()));
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(FaceMatchError::NonFiniteInput { index }),
        None => Ok(()),
    }
}

/// The candidate's reference embeddings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceSet(Vec<Embedding>);

impl ReferenceSet {
    pub fn new(references: Vec<Embedding>) -> Self {
        Self(references)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Embedding> {
        self.0.iter()
    }

    pub fn push(&mut self, e: Embedding) {
        self.0.push(e);
    }

    /// Logs a warning when fewer references than `expected` were captured.
    /// Short sets are still usable.
    pub fn warn_if_short(&self, expected: usize) -> bool {
        let short = self.0.len() < expected;
        if short {
            log::warn!(
                "reference set holds {} embeddings, expected {}",
                self.0.len(),
                expected
            );
        }
        short
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdentityVerdict {
    Clean,
    AnotherPerson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityDecision {
    pub min_distance: f64,
    pub verdict: IdentityVerdict,
    pub threshold_used: f64,
}

/// Euclidean distance between two validated embeddings.
pub fn euclidean_distance(a: &Embedding, b: &Embedding) -> f64 {
    libm::sqrt(squared_distance(&a.0, &b.0))
}

/// Euclidean distance over raw slices, validating dimension and finiteness.
pub fn euclidean_distance_slices(a: &[f64], b: &[f64]) -> Result<f64, FaceMatchError> {
    check_components(a)?;
    check_components(b)?;
    Ok(libm::sqrt(squared_distance(a, b)))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn min_reference_distance(probe: &Embedding, refs: &ReferenceSet) -> Result<f64, FaceMatchError> {
    refs.iter()
        .map(|r| euclidean_distance(probe, r))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |m| m.min(d))))
        .ok_or(FaceMatchError::EmptyReferenceSet)
}

/// Clean when the closest reference is within `threshold` (inclusive),
/// AnotherPerson otherwise.
pub fn classify_identity(
    probe: &Embedding,
    refs: &ReferenceSet,
    threshold: f64,
) -> Result<IdentityDecision, FaceMatchError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(FaceMatchError::InvalidThreshold(threshold));
    }
    let min_distance = min_reference_distance(probe, refs)?;
    let verdict = if min_distance <= threshold {
        IdentityVerdict::Clean
    } else {
        IdentityVerdict::AnotherPerson
    };
    Ok(IdentityDecision {
        min_distance,
        verdict,
        threshold_used: threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn axis(index: usize, value: f64) -> Embedding {
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[index] = value;
        Embedding::new(v).unwrap()
    }

    fn arb_embedding() -> impl Strategy<Value = Embedding> {
        proptest::collection::vec(-1.0f64..1.0, EMBEDDING_DIM).prop_map(|v| Embedding::new(v).unwrap())
    }

    #[test]
    fn identical_embeddings_are_zero_apart() {
        let e = axis(3, 0.25);
        assert_eq!(euclidean_distance(&e, &e), 0.0);
    }

    #[test]
    fn single_axis_distance() {
        assert_eq!(euclidean_distance(&Embedding::zeros(), &axis(0, 0.6)), 0.6);
    }

    #[test]
    fn rejects_bad_components() {
        assert_eq!(
            Embedding::new(vec![0.0; 127]),
            Err(FaceMatchError::WrongDimension(127))
        );
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[5] = f64::NAN;
        assert_eq!(
            euclidean_distance_slices(&v, &[0.0; EMBEDDING_DIM]),
            Err(FaceMatchError::NonFiniteInput { index: 5 })
        );
    }

    #[test]
    fn empty_reference_set_is_an_error() {
        let refs = ReferenceSet::default();
        assert_eq!(
            min_reference_distance(&Embedding::zeros(), &refs),
            Err(FaceMatchError::EmptyReferenceSet)
        );
        assert!(classify_identity(&Embedding::zeros(), &refs, 0.6).is_err());
    }

    #[test]
    fn single_reference_min_is_the_distance() {
        let probe = axis(1, 0.3);
        let r = axis(2, 0.4);
        let refs = ReferenceSet::new(vec![r.clone()]);
        assert_eq!(
            min_reference_distance(&probe, &refs).unwrap(),
            euclidean_distance(&probe, &r)
        );
    }

    #[test]
    fn boundary_distance_is_clean() {
        let refs = ReferenceSet::new(vec![Embedding::zeros()]);
        let d = classify_identity(&axis(0, 0.6), &refs, 0.6).unwrap();
        assert_eq!(d.min_distance, 0.6);
        assert_eq!(d.verdict, IdentityVerdict::Clean);
    }

    #[test]
    fn probe_in_references_is_clean() {
        let probe = axis(9, 0.9);
        let refs = ReferenceSet::new(vec![axis(0, 1.0), probe.clone()]);
        let d = classify_identity(&probe, &refs, 0.6).unwrap();
        assert_eq!(d.min_distance, 0.0);
        assert_eq!(d.verdict, IdentityVerdict::Clean);
    }

    #[test]
    fn single_axis_impostor() {
        let refs = ReferenceSet::new(vec![Embedding::zeros(); 20]);
        let d = classify_identity(&axis(17, 0.7), &refs, 0.6).unwrap();
        assert_eq!(d.verdict, IdentityVerdict::AnotherPerson);
        assert_eq!(d.min_distance, 0.7);
        assert_eq!(d.threshold_used, 0.6);
    }

    #[test]
    fn short_reference_sets_warn_but_work() {
        let refs = ReferenceSet::new(vec![Embedding::zeros(); 3]);
        assert!(refs.warn_if_short(DEFAULT_REFERENCE_COUNT));
        assert!(classify_identity(&axis(0, 0.1), &refs, 0.6).is_ok());
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in arb_embedding(), b in arb_embedding()) {
            prop_assert_eq!(euclidean_distance(&a, &b), euclidean_distance(&b, &a));
        }

        #[test]
        fn triangle_inequality(a in arb_embedding(), b in arb_embedding(), c in arb_embedding()) {
            let ab = euclidean_distance(&a, &b);
            let bc = euclidean_distance(&b, &c);
            let ac = euclidean_distance(&a, &c);
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn adding_a_reference_never_increases_min(
            probe in arb_embedding(),
            refs in proptest::collection::vec(arb_embedding(), 1..6),
            extra in arb_embedding(),
        ) {
            let mut set = ReferenceSet::new(refs);
            let before = min_reference_distance(&probe, &set).unwrap();
            set.push(extra);
            prop_assert!(min_reference_distance(&probe, &set).unwrap() <= before);
        }

        #[test]
        fn verdict_flips_exactly_at_threshold(
            probe in arb_embedding(),
            refs in proptest::collection::vec(arb_embedding(), 1..4),
            threshold in 0.01f64..20.0,
        ) {
            let set = ReferenceSet::new(refs);
            let d = classify_identity(&probe, &set, threshold).unwrap();
            prop_assert_eq!(d.verdict == IdentityVerdict::Clean, d.min_distance <= threshold);
            let at = classify_identity(&probe, &set, d.min_distance.max(1e-12)).unwrap();
            if d.min_distance > 0.0 {
                prop_assert_eq!(at.verdict, IdentityVerdict::Clean);
            }
        }
    }
}
