//! Label masks, hierarchical one-hot encoding, and recomposition.
//!
//! `one_hot` expands a multi-class label volume into one binary channel per
//! derived class. `to_multiclass` inverts it: channels are replayed in
//! declared order and the last class set at a voxel writes its recomposition
//! label, so for nested chain hierarchies the innermost class wins (the ring
//! construction: outer-minus-inner differences become the ring labels).

use ndarray::{Array3, Array4};

use crate::error::{Result, SegQcError};
use crate::hierarchy::{ClassHierarchy, BACKGROUND};

/// Integer label volume of shape `(D, H, W)` tied to a hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    data: Array3<u8>,
    hierarchy: ClassHierarchy,
}

/// `C` binary channels of shape `(C, D, H, W)`, one per derived class.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMaskStack {
    data: Array4<bool>,
    hierarchy: ClassHierarchy,
}

/// Returned by [`to_multiclass`]: voxels whose channel combination cannot be
/// represented by any single base label (and were resolved by priority order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConsistencyReport {
    pub inconsistent_voxels: usize,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.inconsistent_voxels == 0
    }
}

impl LabelMask {
    /// Validates every voxel value against the hierarchy's declared labels.
    pub fn new(data: Array3<u8>, hierarchy: ClassHierarchy) -> Result<Self> {
        for &v in data.iter() {
            if !hierarchy.is_declared(v) {
                return Err(SegQcError::UndeclaredLabel { value: v });
            }
        }
        Ok(Self { data, hierarchy })
    }

    /// Skips label validation; for masks produced by code that guarantees
    /// validity (resampling, recomposition).
    pub(crate) fn new_unchecked(data: Array3<u8>, hierarchy: ClassHierarchy) -> Self {
        Self { data, hierarchy }
    }

    pub fn background(shape: [usize; 3], hierarchy: ClassHierarchy) -> Self {
        Self { data: Array3::from_elem(shape, BACKGROUND), hierarchy }
    }

    pub fn data(&self) -> &Array3<u8> {
        &self.data
    }

    pub fn hierarchy(&self) -> &ClassHierarchy {
        &self.hierarchy
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[0], s[1], s[2]]
    }

    pub fn same_geometry(&self, other: &LabelMask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(SegQcError::ShapeMismatch {
                expected: self.data.shape().to_vec(),
                got: other.data.shape().to_vec(),
            });
        }
        if self.hierarchy != other.hierarchy {
            return Err(SegQcError::HierarchyMismatch);
        }
        Ok(())
    }
}

impl BinaryMaskStack {
    pub fn new(data: Array4<bool>, hierarchy: ClassHierarchy) -> Result<Self> {
        if data.shape()[0] != hierarchy.num_classes() {
            return Err(SegQcError::ShapeMismatch {
                expected: vec![hierarchy.num_classes()],
                got: vec![data.shape()[0]],
            });
        }
        Ok(Self { data, hierarchy })
    }

    pub fn data(&self) -> &Array4<bool> {
        &self.data
    }

    pub fn hierarchy(&self) -> &ClassHierarchy {
        &self.hierarchy
    }

    pub fn num_classes(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn spatial_shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[1], s[2], s[3]]
    }

    /// Chain nesting check: every inner-class voxel is also set in the class before it.
    pub fn satisfies_nesting(&self) -> bool {
        let c = self.num_classes();
        for ci in 1..c {
            let outer = self.data.index_axis(ndarray::Axis(0), ci - 1);
            let inner = self.data.index_axis(ndarray::Axis(0), ci);
            if inner.iter().zip(outer.iter()).any(|(&i, &o)| i && !o) {
                return false;
            }
        }
        true
    }
}

/// Expands `mask` into per-derived-class binary channels.
///
/// Channel `c` is true exactly where the voxel's base label belongs to
/// derived class `c`.
pub fn one_hot(mask: &LabelMask) -> BinaryMaskStack {
    let h = mask.hierarchy();
    let c = h.num_classes();
    let [d, hh, w] = mask.shape();
    let mut out = Array4::<bool>::from_elem((c, d, hh, w), false);
    let src = mask.data().as_slice().expect("contiguous mask");
    let voxels = d * hh * w;
    {
        let flat = out.as_slice_mut().expect("contiguous stack");
        for (i, &code) in src.iter().enumerate() {
            let bits = h.membership_bits(code);
            if bits == 0 {
                continue;
            }
            for ci in 0..c {
                if bits & (1 << ci) != 0 {
                    flat[ci * voxels + i] = true;
                }
            }
        }
    }
    BinaryMaskStack { data: out, hierarchy: h.clone() }
}

/// Recomposes a binary stack into a multi-class label mask.
///
/// Classes are replayed in declared order, last writer wins; for a chain
/// hierarchy (declared outermost-first) this resolves inconsistent stacks
/// innermost-class-wins. Voxels whose channel pattern does not match the
/// recomposed label's memberships are counted in the report.
pub fn to_multiclass(stack: &BinaryMaskStack) -> (LabelMask, ConsistencyReport) {
    let h = stack.hierarchy().clone();
    let c = stack.num_classes();
    let [d, hh, w] = stack.spatial_shape();
    let voxels = d * hh * w;
    let flat = stack.data().as_slice().expect("contiguous stack");

    let mut labels = vec![BACKGROUND; voxels];
    let mut inconsistent = 0usize;
    for i in 0..voxels {
        let mut pattern: u32 = 0;
        let mut label = BACKGROUND;
        for ci in 0..c {
            if flat[ci * voxels + i] {
                pattern |= 1 << ci;
                label = h.recompose_label(ci);
            }
        }
        if h.membership_bits(label) != pattern {
            inconsistent += 1;
        }
        labels[i] = label;
    }
    let data = Array3::from_shape_vec((d, hh, w), labels).expect("exact shape");
    (LabelMask { data, hierarchy: h }, ConsistencyReport { inconsistent_voxels: inconsistent })
}
