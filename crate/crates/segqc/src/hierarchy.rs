//! Label vocabularies and derived-class hierarchies.
//!
//! A segmentation volume stores one base label per voxel (0 = background).
//! Quality metrics and error maps, however, are computed per *derived class*:
//! a named union of base labels. Brain tumor masks use a nested chain
//! (whole tumor ⊇ tumor core ⊇ enhancing tumor); cardiac masks use disjoint
//! classes (left ventricle / myocardium / right ventricle).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};

/// Background voxel value. Never a declared base label.
pub const BACKGROUND: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyKind {
    /// Derived classes are strictly nested, declared outermost-first.
    Chain,
    /// No derived class contains another.
    Antichain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseLabel {
    pub name: String,
    pub code: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedClass {
    pub name: String,
    /// Base label codes whose union forms this class.
    pub members: BTreeSet<u8>,
}

/// Serialized form of [`ClassHierarchy`]; revalidated on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub base_labels: Vec<BaseLabel>,
    pub derived_classes: Vec<DerivedClass>,
    pub kind: HierarchyKind,
}

/// Ordered label vocabulary plus the derived classes metrics operate on.
///
/// Construction validates the declared structure and precomputes, for every
/// derived class, the unique base label that recomposition writes for it
/// (the member not claimed by any later class). This makes
/// `one_hot` followed by `to_multiclass` the identity on valid masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HierarchySpec", into = "HierarchySpec")]
pub struct ClassHierarchy {
    base_labels: Vec<BaseLabel>,
    derived: Vec<DerivedClass>,
    kind: HierarchyKind,
    /// `recompose_labels[c]` is written when class `c` is the last class set at a voxel.
    recompose_labels: Vec<u8>,
    /// `class_bits[code as usize]` has bit `c` set iff `code` belongs to derived class `c`.
    class_bits: Vec<u32>,
}

impl TryFrom<HierarchySpec> for ClassHierarchy {
    type Error = SegQcError;

    fn try_from(spec: HierarchySpec) -> Result<Self> {
        ClassHierarchy::new(spec.base_labels, spec.derived_classes, spec.kind)
    }
}

impl From<ClassHierarchy> for HierarchySpec {
    fn from(h: ClassHierarchy) -> Self {
        HierarchySpec { base_labels: h.base_labels, derived_classes: h.derived, kind: h.kind }
    }
}

impl ClassHierarchy {
    pub fn new(
        base_labels: Vec<BaseLabel>,
        derived: Vec<DerivedClass>,
        kind: HierarchyKind,
    ) -> Result<Self> {
        if derived.is_empty() {
            return Err(SegQcError::InvalidHierarchy("need at least one derived class".into()));
        }
        if base_labels.is_empty() {
            return Err(SegQcError::InvalidHierarchy("need at least one base label".into()));
        }
        let mut seen = BTreeSet::new();
        for bl in &base_labels {
            if bl.code == BACKGROUND {
                return Err(SegQcError::InvalidHierarchy(format!(
                    "base label '{}' uses reserved background code 0",
                    bl.name
                )));
            }
            if !seen.insert(bl.code) {
                return Err(SegQcError::InvalidHierarchy(format!("duplicate base code {}", bl.code)));
            }
        }
        let codes: BTreeSet<u8> = base_labels.iter().map(|b| b.code).collect();
        for dc in &derived {
            if dc.members.is_empty() {
                return Err(SegQcError::InvalidHierarchy(format!("class '{}' is empty", dc.name)));
            }
            if let Some(bad) = dc.members.iter().find(|m| !codes.contains(m)) {
                return Err(SegQcError::InvalidHierarchy(format!(
                    "class '{}' references undeclared base code {}",
                    dc.name, bad
                )));
            }
        }
        // Every base label must be covered by at least one derived class.
        for bl in &base_labels {
            if !derived.iter().any(|d| d.members.contains(&bl.code)) {
                return Err(SegQcError::InvalidHierarchy(format!(
                    "base label '{}' (code {}) belongs to no derived class",
                    bl.name, bl.code
                )));
            }
        }
        match kind {
            HierarchyKind::Chain => {
                for w in derived.windows(2) {
                    if !w[1].members.is_subset(&w[0].members) {
                        return Err(SegQcError::InvalidHierarchy(format!(
                            "chain order violated: '{}' is not a subset of '{}'",
                            w[1].name, w[0].name
                        )));
                    }
                }
            }
            HierarchyKind::Antichain => {
                for i in 0..derived.len() {
                    for j in 0..derived.len() {
                        if i != j && derived[i].members.is_subset(&derived[j].members) {
                            return Err(SegQcError::InvalidHierarchy(format!(
                                "antichain violated: '{}' is contained in '{}'",
                                derived[i].name, derived[j].name
                            )));
                        }
                    }
                }
            }
        }
        let recompose_labels = Self::compute_recompose_labels(&derived)?;
        let class_bits = Self::compute_class_bits(&derived);
        Ok(Self { base_labels, derived, kind, recompose_labels, class_bits })
    }

    fn compute_recompose_labels(derived: &[DerivedClass]) -> Result<Vec<u8>> {
        if derived.len() > 32 {
            return Err(SegQcError::InvalidHierarchy("at most 32 derived classes supported".into()));
        }
        let mut out = Vec::with_capacity(derived.len());
        for (c, dc) in derived.iter().enumerate() {
            let mut rest: BTreeSet<u8> = BTreeSet::new();
            for later in &derived[c + 1..] {
                rest.extend(later.members.iter().copied());
            }
            let own: Vec<u8> = dc.members.difference(&rest).copied().collect();
            if own.len() != 1 {
                return Err(SegQcError::InvalidHierarchy(format!(
                    "class '{}' must own exactly one base label not claimed by later classes (found {:?})",
                    dc.name, own
                )));
            }
            out.push(own[0]);
        }
        Ok(out)
    }

    fn compute_class_bits(derived: &[DerivedClass]) -> Vec<u32> {
        let max_code = derived.iter().flat_map(|d| d.members.iter()).max().copied().unwrap_or(0);
        let mut bits = vec![0u32; max_code as usize + 1];
        for (c, dc) in derived.iter().enumerate() {
            for &code in &dc.members {
                bits[code as usize] |= 1 << c;
            }
        }
        bits
    }

    /// Brain-tumor hierarchy: base labels NCR=1, ED=2, ET=4; derived classes
    /// WT = {ET, NCR, ED} ⊇ TC = {ET, NCR} ⊇ ET = {ET}.
    pub fn brats() -> Self {
        Self::new(
            vec![
                BaseLabel { name: "NCR".into(), code: 1 },
                BaseLabel { name: "ED".into(), code: 2 },
                BaseLabel { name: "ET".into(), code: 4 },
            ],
            vec![
                DerivedClass { name: "WT".into(), members: [1, 2, 4].into() },
                DerivedClass { name: "TC".into(), members: [1, 4].into() },
                DerivedClass { name: "ET".into(), members: [4].into() },
            ],
            HierarchyKind::Chain,
        )
        .expect("builtin hierarchy is valid")
    }

    /// Cardiac hierarchy: disjoint LV=1, Myo=2, RV=3, one derived class each.
    pub fn cardiac() -> Self {
        Self::new(
            vec![
                BaseLabel { name: "LV".into(), code: 1 },
                BaseLabel { name: "Myo".into(), code: 2 },
                BaseLabel { name: "RV".into(), code: 3 },
            ],
            vec![
                DerivedClass { name: "LV".into(), members: [1].into() },
                DerivedClass { name: "Myo".into(), members: [2].into() },
                DerivedClass { name: "RV".into(), members: [3].into() },
            ],
            HierarchyKind::Antichain,
        )
        .expect("builtin hierarchy is valid")
    }

    pub fn num_classes(&self) -> usize {
        self.derived.len()
    }

    pub fn num_base_labels(&self) -> usize {
        self.base_labels.len()
    }

    pub fn base_labels(&self) -> &[BaseLabel] {
        &self.base_labels
    }

    pub fn derived_classes(&self) -> &[DerivedClass] {
        &self.derived
    }

    pub fn kind(&self) -> HierarchyKind {
        self.kind
    }

    pub fn class_name(&self, c: usize) -> &str {
        &self.derived[c].name
    }

    pub fn recompose_label(&self, c: usize) -> u8 {
        self.recompose_labels[c]
    }

    pub fn is_declared(&self, code: u8) -> bool {
        code == BACKGROUND || self.base_labels.iter().any(|b| b.code == code)
    }

    /// Bitmask of derived classes containing `code` (0 for background/unknown).
    #[inline]
    pub fn membership_bits(&self, code: u8) -> u32 {
        self.class_bits.get(code as usize).copied().unwrap_or(0)
    }

    #[inline]
    pub fn label_in_class(&self, code: u8, class: usize) -> bool {
        self.membership_bits(code) & (1 << class) != 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brats_is_chain_with_expected_recompose_labels() {
        let h = ClassHierarchy::brats();
        assert_eq!(h.num_classes(), 3);
        // WT ring recomposes to ED, TC ring to NCR, innermost to ET.
        assert_eq!(h.recompose_label(0), 2);
        assert_eq!(h.recompose_label(1), 1);
        assert_eq!(h.recompose_label(2), 4);
    }

    #[test]
    fn membership_bits_match_declared_sets() {
        let h = ClassHierarchy::brats();
        assert_eq!(h.membership_bits(2), 0b001); // ED only in WT
        assert_eq!(h.membership_bits(1), 0b011); // NCR in WT, TC
        assert_eq!(h.membership_bits(4), 0b111); // ET in all three
        assert_eq!(h.membership_bits(0), 0);
    }

    #[test]
    fn rejects_background_code_and_uncovered_labels() {
        let bad = ClassHierarchy::new(
            vec![BaseLabel { name: "A".into(), code: 0 }],
            vec![DerivedClass { name: "X".into(), members: [0].into() }],
            HierarchyKind::Chain,
        );
        assert!(bad.is_err());

        let uncovered = ClassHierarchy::new(
            vec![
                BaseLabel { name: "A".into(), code: 1 },
                BaseLabel { name: "B".into(), code: 2 },
            ],
            vec![DerivedClass { name: "X".into(), members: [1].into() }],
            HierarchyKind::Chain,
        );
        assert!(uncovered.is_err());
    }

    #[test]
    fn rejects_wrong_chain_order() {
        let bad = ClassHierarchy::new(
            vec![
                BaseLabel { name: "A".into(), code: 1 },
                BaseLabel { name: "B".into(), code: 2 },
            ],
            vec![
                DerivedClass { name: "inner".into(), members: [1].into() },
                DerivedClass { name: "outer".into(), members: [1, 2].into() },
            ],
            HierarchyKind::Chain,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn json_round_trip_preserves_membership() {
        let h = ClassHierarchy::cardiac();
        let s = serde_json::to_string(&h).unwrap();
        let h2: ClassHierarchy = serde_json::from_str(&s).unwrap();
        assert_eq!(h, h2);
        assert!(h2.label_in_class(3, 2));
    }
}
