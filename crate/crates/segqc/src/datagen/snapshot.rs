//! Snapshot segmentations sampled along a segmenter's training trajectory.
//!
//! Training with a deliberately small learning rate slows convergence so the
//! recorded argmax predictions sweep from low to higher quality. Epoch 0
//! means the untrained network.

use crate::error::{Result, SegQcError};
use crate::mask::LabelMask;
use crate::proxyseg::ProxySegNet;
use crate::volume::Volume;

/// The deliberately small default learning rate for snapshot runs.
pub const SNAPSHOT_LR: f64 = 1e-6;

#[derive(Debug)]
pub struct SnapshotRecord {
    pub case_index: usize,
    pub epoch: usize,
    pub segmentation: LabelMask,
}

/// Trains `segmenter` on `cases` and records argmax segmentations for every
/// case at each epoch listed in `snapshot_epochs`.
pub fn snapshot_segmentations(
    segmenter: &mut ProxySegNet,
    cases: &[(&Volume, &LabelMask)],
    snapshot_epochs: &[usize],
    lr: f64,
    seed: u64,
) -> Result<Vec<SnapshotRecord>> {
    if snapshot_epochs.is_empty() {
        return Err(SegQcError::InvalidConfig("snapshot epoch list is empty".into()));
    }
    if cases.is_empty() {
        return Err(SegQcError::InvalidConfig("no cases to snapshot".into()));
    }
    let mut epochs: Vec<usize> = snapshot_epochs.to_vec();
    epochs.sort_unstable();
    epochs.dedup();
    let max_epoch = *epochs.last().expect("non-empty");

    let mut out = Vec::new();
    for epoch in 0..=max_epoch {
        if epochs.binary_search(&epoch).is_ok() {
            for (case_index, (vol, _)) in cases.iter().enumerate() {
                out.push(SnapshotRecord {
                    case_index,
                    epoch,
                    segmentation: segmenter.segment_labels(vol)?,
                });
            }
        }
        if epoch < max_epoch {
            segmenter.train(cases, 1, lr, seed.wrapping_add(epoch as u64))?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::phantom::{generate_phantom, PhantomSpec};
    use crate::hierarchy::ClassHierarchy;
    use crate::metrics::multiclass_dsc;
    use crate::proxyseg::ProxySegConfig;

    #[test]
    fn single_case_single_epoch_emits_one_record() {
        let (vol, gt) = generate_phantom(&PhantomSpec::default_brain(12), 2).unwrap();
        let mut net =
            ProxySegNet::new(ProxySegConfig::new(1), ClassHierarchy::brats(), 1).unwrap();
        let recs = snapshot_segmentations(&mut net, &[(&vol, &gt)], &[0], SNAPSHOT_LR, 3).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].epoch, 0);
    }

    #[test]
    fn empty_epoch_list_rejected() {
        let (vol, gt) = generate_phantom(&PhantomSpec::default_brain(12), 2).unwrap();
        let mut net =
            ProxySegNet::new(ProxySegConfig::new(1), ClassHierarchy::brats(), 1).unwrap();
        assert!(snapshot_segmentations(&mut net, &[(&vol, &gt)], &[], SNAPSHOT_LR, 3).is_err());
    }

    #[test]
    fn untrained_snapshot_is_poor_and_quality_never_degrades_much() {
        // With a real learning rate the trajectory improves; the untrained
        // snapshot must be poor and the final median must not fall below the
        // initial median.
        let cases: Vec<_> = (0..3)
            .map(|s| generate_phantom(&PhantomSpec::default_brain(12), 100 + s).unwrap())
            .collect();
        let refs: Vec<(&crate::volume::Volume, &LabelMask)> =
            cases.iter().map(|(v, m)| (v, m)).collect();
        let mut net =
            ProxySegNet::new(ProxySegConfig::new(1), ClassHierarchy::brats(), 9).unwrap();
        let recs = snapshot_segmentations(&mut net, &refs, &[0, 30], 5e-3, 11).unwrap();
        assert_eq!(recs.len(), 6);
        let dsc_at = |epoch: usize| -> Vec<f64> {
            recs.iter()
                .filter(|r| r.epoch == epoch)
                .map(|r| multiclass_dsc(&r.segmentation, refs[r.case_index].1).unwrap())
                .collect()
        };
        let median = |mut v: Vec<f64>| -> f64 {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let first = dsc_at(0);
        let last = dsc_at(30);
        let mean_first: f64 = first.iter().sum::<f64>() / first.len() as f64;
        assert!(mean_first < 0.3, "untrained DSC {mean_first}");
        assert!(median(last.clone()) >= median(first.clone()), "{last:?} vs {first:?}");
    }
}
