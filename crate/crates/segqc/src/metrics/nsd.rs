//! Normalized surface dice at a tolerance.
//!
//! Boundary voxels are foreground voxels with at least one six-connected
//! background neighbor, where everything outside the volume counts as
//! background. The per-class score is the fraction of boundary voxels of
//! either mask lying within `tolerance` (Euclidean, voxel units, inclusive)
//! of the other mask's boundary.

use ndarray::{Array3, ArrayView3, Axis};

use crate::error::{Result, SegQcError};
use crate::mask::BinaryMaskStack;
use crate::metrics::edt::squared_edt;

/// Six-connected boundary of a binary mask; volume faces count as background.
pub fn boundary(mask: ArrayView3<'_, bool>) -> Array3<bool> {
    let (d, h, w) = mask.dim();
    Array3::from_shape_fn((d, h, w), |(z, y, x)| {
        mask[[z, y, x]]
            && ((z == 0 || !mask[[z - 1, y, x]])
                || (z + 1 == d || !mask[[z + 1, y, x]])
                || (y == 0 || !mask[[z, y - 1, x]])
                || (y + 1 == h || !mask[[z, y + 1, x]])
                || (x == 0 || !mask[[z, y, x - 1]])
                || (x + 1 == w || !mask[[z, y, x + 1]]))
    })
}

/// Surface dice of one class pair at `tolerance` voxels.
pub fn surface_dice(
    query: ArrayView3<'_, bool>,
    gt: ArrayView3<'_, bool>,
    tolerance: f64,
) -> f64 {
    let bq = boundary(query);
    let bg = boundary(gt);
    let nq = bq.iter().filter(|&&b| b).count();
    let ng = bg.iter().filter(|&&b| b).count();
    if nq == 0 && ng == 0 {
        return 1.0;
    }
    if nq == 0 || ng == 0 {
        return 0.0;
    }
    let tol2 = tolerance * tolerance;
    let dist_to_g = squared_edt(&bg);
    let dist_to_q = squared_edt(&bq);
    let close_q = bq
        .iter()
        .zip(dist_to_g.iter())
        .filter(|(&b, &d2)| b && d2 <= tol2)
        .count();
    let close_g = bg
        .iter()
        .zip(dist_to_q.iter())
        .filter(|(&b, &d2)| b && d2 <= tol2)
        .count();
    (close_q + close_g) as f64 / (nq + ng) as f64
}

/// Per-class normalized surface dice between two mask stacks.
pub fn per_class_nsd(
    query: &BinaryMaskStack,
    gt: &BinaryMaskStack,
    tolerance_vox: f64,
) -> Result<Vec<f64>> {
    if tolerance_vox < 0.0 || !tolerance_vox.is_finite() {
        return Err(SegQcError::InvalidConfig(format!(
            "tolerance must be non-negative, got {tolerance_vox}"
        )));
    }
    if query.data().shape() != gt.data().shape() {
        return Err(SegQcError::ShapeMismatch {
            expected: gt.data().shape().to_vec(),
            got: query.data().shape().to_vec(),
        });
    }
    if query.hierarchy() != gt.hierarchy() {
        return Err(SegQcError::HierarchyMismatch);
    }
    Ok((0..query.num_classes())
        .map(|c| {
            surface_dice(
                query.data().index_axis(Axis(0), c),
                gt.data().index_axis(Axis(0), c),
                tolerance_vox,
            )
        })
        .collect())
}

/// Mean of [`per_class_nsd`] over classes.
pub fn nsd(query: &BinaryMaskStack, gt: &BinaryMaskStack, tolerance_vox: f64) -> Result<f64> {
    let per = per_class_nsd(query, gt, tolerance_vox)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::ClassHierarchy;
    use ndarray::Array4;
    use rand::prelude::*;

    fn stack_of(masks: Vec<Array3<bool>>) -> BinaryMaskStack {
        let (d, h, w) = masks[0].dim();
        let mut data = Array4::from_elem((masks.len(), d, h, w), false);
        for (c, m) in masks.iter().enumerate() {
            data.index_axis_mut(Axis(0), c).assign(m);
        }
        BinaryMaskStack::new(data, ClassHierarchy::brats()).unwrap()
    }

    /// O(B²) oracle: all-pairs boundary distances.
    fn oracle_surface_dice(q: &Array3<bool>, g: &Array3<bool>, tol: f64) -> f64 {
        let bq = boundary(q.view());
        let bg = boundary(g.view());
        let pq: Vec<[i64; 3]> = bq
            .indexed_iter()
            .filter(|(_, &b)| b)
            .map(|((z, y, x), _)| [z as i64, y as i64, x as i64])
            .collect();
        let pg: Vec<[i64; 3]> = bg
            .indexed_iter()
            .filter(|(_, &b)| b)
            .map(|((z, y, x), _)| [z as i64, y as i64, x as i64])
            .collect();
        if pq.is_empty() && pg.is_empty() {
            return 1.0;
        }
        if pq.is_empty() || pg.is_empty() {
            return 0.0;
        }
        let tol2 = tol * tol;
        let within = |a: &[i64; 3], set: &[[i64; 3]]| {
            set.iter().any(|b| {
                let d2 = (a[0] - b[0]).pow(2) + (a[1] - b[1]).pow(2) + (a[2] - b[2]).pow(2);
                d2 as f64 <= tol2
            })
        };
        let cq = pq.iter().filter(|p| within(p, &pg)).count();
        let cg = pg.iter().filter(|p| within(p, &pq)).count();
        (cq + cg) as f64 / (pq.len() + pg.len()) as f64
    }

    #[test]
    fn identical_nonempty_masks_score_one() {
        let mut m = Array3::from_elem((6, 6, 6), false);
        for z in 2..5 {
            for y in 1..4 {
                for x in 2..4 {
                    m[[z, y, x]] = true;
                }
            }
        }
        for tol in [0.0, 1.0, 3.0] {
            assert_eq!(surface_dice(m.view(), m.view(), tol), 1.0);
        }
    }

    #[test]
    fn disjoint_cubes_ten_apart_score_zero() {
        let mut q = Array3::from_elem((3, 3, 14), false);
        let mut g = Array3::from_elem((3, 3, 14), false);
        q[[1, 1, 1]] = true;
        g[[1, 1, 11]] = true;
        assert_eq!(surface_dice(q.view(), g.view(), 1.0), 0.0);
    }

    #[test]
    fn empty_conventions() {
        let e = Array3::from_elem((4, 4, 4), false);
        let mut f = e.clone();
        f[[1, 1, 1]] = true;
        assert_eq!(surface_dice(e.view(), e.view(), 1.0), 1.0);
        assert_eq!(surface_dice(e.view(), f.view(), 1.0), 0.0);
        assert_eq!(surface_dice(f.view(), e.view(), 1.0), 0.0);
    }

    #[test]
    fn full_volume_boundary_is_outer_shell() {
        let m = Array3::from_elem((3, 4, 5), true);
        let b = boundary(m.view());
        // Interior voxel: only (1, 1..3, 1..4) interior region has all six
        // neighbors inside; everything else touches a face.
        assert!(!b[[1, 1, 1]] || m.dim().0 <= 2);
        assert!(b[[0, 0, 0]]);
        assert!(b[[2, 3, 4]]);
        assert!(b[[0, 2, 2]]);
        assert!(!b[[1, 2, 2]]);
    }

    #[test]
    fn random_masks_match_pairwise_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4242);
        for _ in 0..15 {
            let q = Array3::from_shape_fn((8, 8, 8), |_| rng.random::<f64>() < 0.35);
            let g = Array3::from_shape_fn((8, 8, 8), |_| rng.random::<f64>() < 0.35);
            for tol in [0.0, 1.0, 2.0] {
                let got = surface_dice(q.view(), g.view(), tol);
                let want = oracle_surface_dice(&q, &g, tol);
                assert!((got - want).abs() <= 1e-9, "tol {tol}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn monotone_in_tolerance_and_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let q = Array3::from_shape_fn((6, 6, 6), |_| rng.random::<f64>() < 0.3);
        let g = Array3::from_shape_fn((6, 6, 6), |_| rng.random::<f64>() < 0.3);
        let mut prev = 0.0;
        for tol in [0.0, 0.5, 1.0, 2.0, 4.0, 10.0] {
            let v = surface_dice(q.view(), g.view(), tol);
            assert!(v + 1e-12 >= prev, "not monotone at tol {tol}");
            assert_eq!(v, surface_dice(g.view(), q.view(), tol));
            prev = v;
        }
        // Max possible distance in a 6³ volume is √75 < 10.
        assert_eq!(prev, 1.0);
    }

    #[test]
    fn stack_api_validates_inputs() {
        let a = Array3::from_elem((3, 3, 3), false);
        let s1 = stack_of(vec![a.clone(), a.clone(), a.clone()]);
        let b = Array3::from_elem((4, 3, 3), false);
        let s2 = stack_of(vec![b.clone(), b.clone(), b.clone()]);
        assert!(per_class_nsd(&s1, &s2, 1.0).is_err());
        assert!(per_class_nsd(&s1, &s1, -0.5).is_err());
        assert_eq!(nsd(&s1, &s1, 1.0).unwrap(), 1.0);
    }
}
