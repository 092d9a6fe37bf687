//! Segmentation error maps.

use ndarray::Array4;

use crate::error::{Result, SegQcError};
use crate::hierarchy::ClassHierarchy;
use crate::mask::{one_hot, LabelMask};

/// Per-class binary error volumes of shape `(C, D, H, W)`.
///
/// Unlike a one-hot mask stack, error channels carry no nesting invariant:
/// an error in an inner class need not be an error in the outer class.
#[derive(Debug, Clone, PartialEq)]
pub struct SemStack {
    data: Array4<bool>,
    hierarchy: ClassHierarchy,
}

impl SemStack {
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

    pub fn into_data(self) -> Array4<bool> {
        self.data
    }
}

/// Ground-truth error map: per class, the symmetric difference between the
/// query's and the reference's one-hot channels.
pub fn sem_ground_truth(query: &LabelMask, gt: &LabelMask) -> Result<SemStack> {
    query.same_geometry(gt)?;
    let q = one_hot(query);
    let g = one_hot(gt);
    let mut data = q.data().clone();
    for (dv, &gv) in data.iter_mut().zip(g.data().iter()) {
        *dv ^= gv;
    }
    SemStack::new(data, query.hierarchy().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::ClassHierarchy;
    use ndarray::Array3;
    use rand::prelude::*;

    fn mask(a: Array3<u8>) -> LabelMask {
        LabelMask::new(a, ClassHierarchy::brats()).unwrap()
    }

    #[test]
    fn identical_masks_have_empty_sem() {
        let mut a = Array3::zeros((3, 3, 3));
        a[[1, 2, 0]] = 4;
        let m = mask(a);
        let s = sem_ground_truth(&m, &m).unwrap();
        assert!(s.data().iter().all(|&b| !b));
    }

    #[test]
    fn background_query_gives_gt_one_hot() {
        let mut a = Array3::zeros((3, 3, 3));
        a[[0, 1, 2]] = 1;
        a[[2, 2, 2]] = 2;
        let g = mask(a);
        let q = mask(Array3::zeros((3, 3, 3)));
        let s = sem_ground_truth(&q, &g).unwrap();
        assert_eq!(s.data(), one_hot(&g).data());
    }

    #[test]
    fn random_pairs_match_xor_oracle() {
        let codes = [0u8, 1, 2, 4];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let qa = Array3::from_shape_fn((4, 4, 4), |_| *codes.choose(&mut rng).unwrap());
            let ga = Array3::from_shape_fn((4, 4, 4), |_| *codes.choose(&mut rng).unwrap());
            let (q, g) = (mask(qa), mask(ga));
            let s = sem_ground_truth(&q, &g).unwrap();
            let (qh, gh) = (one_hot(&q), one_hot(&g));
            for ((c, z, y, x), &v) in s.data().indexed_iter() {
                assert_eq!(v, qh.data()[[c, z, y, x]] ^ gh.data()[[c, z, y, x]]);
            }
            // Channel empty iff one-hot channels agree.
            for c in 0..3 {
                let empty = s
                    .data()
                    .index_axis(ndarray::Axis(0), c)
                    .iter()
                    .all(|&b| !b);
                let equal = qh
                    .data()
                    .index_axis(ndarray::Axis(0), c)
                    .iter()
                    .zip(gh.data().index_axis(ndarray::Axis(0), c).iter())
                    .all(|(&a, &b)| a == b);
                assert_eq!(empty, equal);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = mask(Array3::zeros((3, 3, 3)));
        let b = mask(Array3::zeros((4, 3, 3)));
        assert!(sem_ground_truth(&a, &b).is_err());
    }
}
