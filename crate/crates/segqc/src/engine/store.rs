//! In-memory dataset store: volumes, ground truths, and query segmentations
//! loaded once from a dataset directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::datagen::{DatasetManifest, SegRecord};
use crate::error::{Result, SegQcError};
use crate::io::nifti;
use crate::mask::LabelMask;
use crate::volume::Volume;

pub struct LoadedCase {
    pub case_id: String,
    pub volume: Volume,
    pub gt: LabelMask,
}

pub struct CaseStore {
    pub manifest: DatasetManifest,
    cases: BTreeMap<String, LoadedCase>,
    /// Query segmentations keyed by global `<case_id>/<seg_id>`.
    segs: BTreeMap<String, (LabelMask, SegRecord)>,
}

impl CaseStore {
    /// Loads every case (or only `subset` case ids) into memory.
    pub fn load(root: &Path, manifest: &DatasetManifest, subset: Option<&BTreeSet<String>>) -> Result<Self> {
        let mut cases = BTreeMap::new();
        let mut segs = BTreeMap::new();
        for case in &manifest.cases {
            if let Some(keep) = subset {
                if !keep.contains(&case.case_id) {
                    continue;
                }
            }
            let volume = nifti::read_volume(&root.join(&case.image))?;
            let gt = nifti::read_labels(&root.join(&case.gt), manifest.hierarchy.clone())?;
            for seg in &case.segs {
                let mask = nifti::read_labels(&root.join(&seg.path), manifest.hierarchy.clone())?;
                segs.insert(format!("{}/{}", case.case_id, seg.seg_id), (mask, seg.clone()));
            }
            cases.insert(
                case.case_id.clone(),
                LoadedCase { case_id: case.case_id.clone(), volume, gt },
            );
        }
        Ok(Self { manifest: manifest.clone(), cases, segs })
    }

    pub fn case(&self, case_id: &str) -> Result<&LoadedCase> {
        self.cases
            .get(case_id)
            .ok_or_else(|| SegQcError::Data(format!("case '{case_id}' not loaded")))
    }

    pub fn case_ids(&self) -> Vec<String> {
        self.cases.keys().cloned().collect()
    }

    /// Resolves a global seg id to (volume, gt, query, record).
    pub fn triple(&self, global_id: &str) -> Result<(&Volume, &LabelMask, &LabelMask, &SegRecord)> {
        let (mask, rec) = self
            .segs
            .get(global_id)
            .ok_or_else(|| SegQcError::Data(format!("segmentation '{global_id}' not loaded")))?;
        let case_id = global_id.split('/').next().expect("validated id");
        let case = self.case(case_id)?;
        Ok((&case.volume, &case.gt, mask, rec))
    }

    pub fn has_seg(&self, global_id: &str) -> bool {
        self.segs.contains_key(global_id)
    }

    /// Quality records (global id, dsc) restricted to the loaded cases.
    pub fn quality_records(&self) -> Vec<(String, f64)> {
        self.segs.iter().map(|(id, (_, rec))| (id.clone(), rec.dsc)).collect()
    }

    pub fn num_segs(&self) -> usize {
        self.segs.len()
    }
}
