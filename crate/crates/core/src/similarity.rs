//! Similarity coefficients over prioritized attribute profiles.

use std::collections::BTreeMap;

use thiserror::Error;

/// Default upper bound κ on priorities.
pub const DEFAULT_KAPPA: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("profile has no attributes")]
    Empty,
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("priority {priority} of {attribute:?} outside 1..={kappa}")]
    PriorityOutOfRange { attribute: String, priority: u32, kappa: u32 },
    #[error("kappa must be at least 1")]
    InvalidKappa,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimilarityError {
    #[error("priority vectors are empty")]
    EmptyVectors,
    #[error("priority vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("set sizes must be positive")]
    ZeroSize,
    #[error("intersection {intersection} exceeds a set size ({size_a}, {size_b})")]
    IntersectionTooLarge { intersection: u64, size_a: u64, size_b: u64 },
}

/// A user's attributes with their priorities in `1..=κ`.
///
/// Attributes are kept in lexicographic order, which is the canonical order
/// for common-attribute vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeProfile {
    entries: BTreeMap<String, u32>,
    kappa: u32,
}

impl AttributeProfile {
    pub fn new<I, S>(entries: I, kappa: u32) -> Result<Self, ProfileError>
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        if kappa == 0 {
            return Err(ProfileError::InvalidKappa);
        }
        let mut map = BTreeMap::new();
        for (attr, priority) in entries {
            let attr = attr.into();
            if priority == 0 || priority > kappa {
                return Err(ProfileError::PriorityOutOfRange {
                    attribute: attr,
                    priority,
                    kappa,
                });
            }
            if map.insert(attr.clone(), priority).is_some() {
                return Err(ProfileError::DuplicateAttribute(attr));
            }
        }
        if map.is_empty() {
            return Err(ProfileError::Empty);
        }
        Ok(Self { entries: map, kappa })
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn priority(&self, attr: &str) -> Option<u32> {
        self.entries.get(attr).copied()
    }

    pub fn contains(&self, attr: &str) -> bool {
        self.entries.contains_key(attr)
    }

    /// Entries in canonical (lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.keys().map(String::as_str)
    }

    /// Σ priorities.
    pub fn weighted_size(&self) -> u64 {
        self.entries.values().map(|&v| u64::from(v)).sum()
    }
}

/// Priorities on a shared ordering of common attributes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PriorityVector(pub Vec<u32>);

impl PriorityVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
    }

    fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommonAttributes {
    pub ids: Vec<String>,
    pub initiator: PriorityVector,
    pub responder: PriorityVector,
}

impl CommonAttributes {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// The common attributes of `a` and `b` in lexicographic order, with both priority vectors.
pub fn common_attributes(a: &AttributeProfile, b: &AttributeProfile) -> CommonAttributes {
    let mut out = CommonAttributes::default();
    for (attr, pa) in a.iter() {
        if let Some(pb) = b.priority(attr) {
            out.ids.push(attr.to_owned());
            out.initiator.0.push(pa);
            out.responder.0.push(pb);
        }
    }
    out
}

fn check_vectors(va: &PriorityVector, vb: &PriorityVector) -> Result<(), SimilarityError> {
    if va.len() != vb.len() {
        return Err(SimilarityError::LengthMismatch(va.len(), vb.len()));
    }
    if va.is_empty() {
        return Err(SimilarityError::EmptyVectors);
    }
    Ok(())
}

pub fn cosine(va: &PriorityVector, vb: &PriorityVector) -> Result<f64, SimilarityError> {
    check_vectors(va, vb)?;
    Ok(va.dot(vb) / (va.norm_sq().sqrt() * vb.norm_sq().sqrt()))
}

/// `V_A·V_B / (‖V_A‖² + ‖V_B‖² − V_A·V_B)`.
pub fn tanimoto(va: &PriorityVector, vb: &PriorityVector) -> Result<f64, SimilarityError> {
    check_vectors(va, vb)?;
    let dot = va.dot(vb);
    Ok(dot / (va.norm_sq() + vb.norm_sq() - dot))
}

/// Priority-expanded view of a profile: an attribute with priority `a` counts `a` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountingSet {
    pub weighted_size: u64,
    pub per_attribute: BTreeMap<String, u32>,
}

pub fn counting_set(profile: &AttributeProfile) -> CountingSet {
    CountingSet {
        weighted_size: profile.weighted_size(),
        per_attribute: profile.entries.clone(),
    }
}

/// Σ over common attributes of `min(a_i, b_i)`.
pub fn weighted_intersection_size(a: &AttributeProfile, b: &AttributeProfile) -> u64 {
    a.iter()
        .filter_map(|(attr, pa)| b.priority(attr).map(|pb| u64::from(pa.min(pb))))
        .sum()
}

/// Set Ochiai coefficient `|A∩B| / √(|A|·|B|)`.
pub fn ochiai_sets(intersection: u64, size_a: u64, size_b: u64) -> Result<f64, SimilarityError> {
    if size_a == 0 || size_b == 0 {
        return Err(SimilarityError::ZeroSize);
    }
    if intersection > size_a.min(size_b) {
        return Err(SimilarityError::IntersectionTooLarge {
            intersection,
            size_a,
            size_b,
        });
    }
    Ok(intersection as f64 / (size_a as f64 * size_b as f64).sqrt())
}

/// Ochiai coefficient of the two counting sets: `Σ min(a_i,b_i) / (√Σa_i · √Σb_i)`.
pub fn priority_ochiai(a: &AttributeProfile, b: &AttributeProfile) -> f64 {
    // profiles are non-empty with priorities ≥ 1, so neither size is zero
    ochiai_sets(weighted_intersection_size(a, b), a.weighted_size(), b.weighted_size()).expect("valid profiles have positive weighted size")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-4;

    fn profile(entries: &[(&str, u32)]) -> AttributeProfile {
        AttributeProfile::new(entries.iter().map(|&(a, p)| (a, p)), DEFAULT_KAPPA).unwrap()
    }

    fn alice() -> AttributeProfile {
        profile(&[("cancer", 8), ("music", 4), ("football", 1), ("tennis", 3), ("cooking", 2)])
    }

    fn bob() -> AttributeProfile {
        profile(&[("cancer", 7), ("football", 2)])
    }

    fn frank() -> AttributeProfile {
        profile(&[("cancer", 8), ("music", 3)])
    }

    fn pv(v: &[u32]) -> PriorityVector {
        PriorityVector(v.to_vec())
    }

    #[test]
    fn profile_validation() {
        assert_eq!(AttributeProfile::new(Vec::<(&str, u32)>::new(), 10), Err(ProfileError::Empty));
        assert!(matches!(
            AttributeProfile::new([("a", 1), ("a", 2)], 10),
            Err(ProfileError::DuplicateAttribute(_))
        ));
        assert!(matches!(
            AttributeProfile::new([("a", 0)], 10),
            Err(ProfileError::PriorityOutOfRange { .. })
        ));
        assert!(matches!(
            AttributeProfile::new([("a", 11)], 10),
            Err(ProfileError::PriorityOutOfRange { .. })
        ));
        assert!(AttributeProfile::new([("a", 9)], 9).is_ok());
    }

    #[test]
    fn common_attributes_alice_bob() {
        let c = common_attributes(&alice(), &bob());
        assert_eq!(c.ids, vec!["cancer", "football"]);
        assert_eq!(c.initiator, pv(&[8, 1]));
        assert_eq!(c.responder, pv(&[7, 2]));

        let same = common_attributes(&alice(), &alice());
        assert_eq!(same.len(), 5);
        assert_eq!(same.initiator, same.responder);

        let disjoint = common_attributes(&bob(), &profile(&[("music", 3)]));
        assert!(disjoint.is_empty());
    }

    #[test]
    fn cosine_values() {
        assert!((cosine(&pv(&[8, 1]), &pv(&[8, 1])).unwrap() - 1.0).abs() < 1e-12);
        let expected = 58.0 / (65f64.sqrt() * 53f64.sqrt());
        assert!((cosine(&pv(&[8, 1]), &pv(&[7, 2])).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.98817).abs() < TOL);
        assert_eq!(cosine(&pv(&[]), &pv(&[])), Err(SimilarityError::EmptyVectors));
        assert_eq!(cosine(&pv(&[1]), &pv(&[1, 2])), Err(SimilarityError::LengthMismatch(1, 2)));
    }

    #[test]
    fn tanimoto_table_values() {
        assert!((tanimoto(&pv(&[8, 1]), &pv(&[7, 2])).unwrap() - 0.9667).abs() < TOL);
        assert!((tanimoto(&pv(&[8, 4, 1, 3, 2]), &pv(&[1, 9, 4, 2, 1])).unwrap() - 0.3972).abs() < TOL);
        assert_eq!(tanimoto(&pv(&[3, 5]), &pv(&[3, 5])).unwrap(), 1.0);
        assert_eq!(tanimoto(&pv(&[]), &pv(&[])), Err(SimilarityError::EmptyVectors));
    }

    #[test]
    fn counting_sets() {
        assert_eq!(counting_set(&alice()).weighted_size, 18);
        assert_eq!(counting_set(&bob()).weighted_size, 9);
        assert_eq!(counting_set(&profile(&[("x", 1)])).weighted_size, 1);
    }

    #[test]
    fn weighted_intersections() {
        assert_eq!(weighted_intersection_size(&alice(), &bob()), 8);
        assert_eq!(weighted_intersection_size(&bob(), &profile(&[("music", 2)])), 0);
        assert_eq!(weighted_intersection_size(&alice(), &alice()), 18);
    }

    #[test]
    fn ochiai_set_values() {
        assert_eq!(ochiai_sets(5, 5, 5).unwrap(), 1.0);
        assert_eq!(ochiai_sets(0, 4, 7).unwrap(), 0.0);
        assert!((ochiai_sets(8, 18, 9).unwrap() - 8.0 / 162f64.sqrt()).abs() < 1e-12);
        assert!((ochiai_sets(8, 18, 9).unwrap() - 0.62854).abs() < TOL);
        assert_eq!(ochiai_sets(1, 0, 3), Err(SimilarityError::ZeroSize));
        assert!(matches!(ochiai_sets(4, 3, 9), Err(SimilarityError::IntersectionTooLarge { .. })));
    }

    #[test]
    fn priority_ochiai_values() {
        let af = priority_ochiai(&alice(), &frank());
        assert!((af - 11.0 / 198f64.sqrt()).abs() < 1e-12);
        assert!((af - 0.78173).abs() < TOL);
        assert_eq!(priority_ochiai(&alice(), &alice()), 1.0);
        assert_eq!(priority_ochiai(&bob(), &profile(&[("music", 3)])), 0.0);
    }
}
