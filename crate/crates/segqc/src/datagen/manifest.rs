//! Dataset directory layout and its manifest.
//!
//! ```text
//! <root>/manifest.json
//! <root>/cases/<case_id>/image.nii.gz
//! <root>/cases/<case_id>/gt.nii.gz
//! <root>/cases/<case_id>/segs/<seg_id>.nii.gz
//! <root>/cases/<case_id>/segs/<seg_id>.meta.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};
use crate::hierarchy::ClassHierarchy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegRecord {
    pub seg_id: String,
    /// Path relative to the dataset root.
    pub path: String,
    /// Producer tag, e.g. "seggen:s1.0" or "snapshot:e003".
    pub generator: String,
    pub dsc: f64,
    pub nsd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMeta {
    pub generator: String,
    pub dsc: f64,
    pub nsd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    pub image: String,
    pub gt: String,
    pub segs: Vec<SegRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub hierarchy: ClassHierarchy,
    /// NSD tolerance (voxels) the stored nsd values were computed with.
    pub nsd_tolerance: f64,
    pub cases: Vec<CaseEntry>,
}

impl DatasetManifest {
    pub fn new(hierarchy: ClassHierarchy, nsd_tolerance: f64) -> Self {
        Self { schema_version: 1, hierarchy, nsd_tolerance, cases: Vec::new() }
    }

    pub fn case_dir(case_id: &str) -> String {
        format!("cases/{case_id}")
    }

    pub fn image_rel(case_id: &str) -> String {
        format!("cases/{case_id}/image.nii.gz")
    }

    pub fn gt_rel(case_id: &str) -> String {
        format!("cases/{case_id}/gt.nii.gz")
    }

    pub fn seg_rel(case_id: &str, seg_id: &str) -> String {
        format!("cases/{case_id}/segs/{seg_id}.nii.gz")
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| SegQcError::io(root.display().to_string(), e))?;
        let p = root.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(self)?)
            .map_err(|e| SegQcError::io(p.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let p = root.join("manifest.json");
        let raw =
            fs::read_to_string(&p).map_err(|e| SegQcError::io(p.display().to_string(), e))?;
        let m: DatasetManifest = serde_json::from_str(&raw)?;
        if m.schema_version != 1 {
            return Err(SegQcError::Data(format!(
                "unsupported manifest schema {}",
                m.schema_version
            )));
        }
        Ok(m)
    }

    /// Verifies that every referenced file exists; returns missing paths.
    pub fn missing_files(&self, root: &Path) -> Vec<PathBuf> {
        let mut missing = Vec::new();
        let mut check = |rel: &str| {
            let p = root.join(rel);
            if !p.exists() {
                missing.push(p);
            }
        };
        for case in &self.cases {
            check(&case.image);
            check(&case.gt);
            for seg in &case.segs {
                check(&seg.path);
            }
        }
        missing
    }

    pub fn find_case(&self, case_id: &str) -> Option<&CaseEntry> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    /// All (seg_id, quality) pairs for balanced indexing. `seg_id`s are
    /// globally unique: `<case_id>/<seg_id>`.
    pub fn quality_records(&self, use_dsc: bool) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for case in &self.cases {
            for seg in &case.segs {
                out.push((
                    format!("{}/{}", case.case_id, seg.seg_id),
                    if use_dsc { seg.dsc } else { seg.nsd },
                ));
            }
        }
        out
    }

    /// Looks up a global `<case_id>/<seg_id>` reference.
    pub fn resolve(&self, global_id: &str) -> Result<(&CaseEntry, &SegRecord)> {
        let (case_id, seg_id) = global_id
            .split_once('/')
            .ok_or_else(|| SegQcError::Data(format!("malformed seg reference '{global_id}'")))?;
        let case = self
            .find_case(case_id)
            .ok_or_else(|| SegQcError::Data(format!("unknown case '{case_id}'")))?;
        let seg = case
            .segs
            .iter()
            .find(|s| s.seg_id == seg_id)
            .ok_or_else(|| SegQcError::Data(format!("unknown seg '{global_id}'")))?;
        Ok((case, seg))
    }

    /// Per-case seg counts, for quick dataset summaries.
    pub fn seg_counts(&self) -> BTreeMap<String, usize> {
        self.cases.iter().map(|c| (c.case_id.clone(), c.segs.len())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_lookup() {
        let mut m = DatasetManifest::new(ClassHierarchy::brats(), 1.0);
        m.cases.push(CaseEntry {
            case_id: "case000".into(),
            image: DatasetManifest::image_rel("case000"),
            gt: DatasetManifest::gt_rel("case000"),
            segs: vec![SegRecord {
                seg_id: "seg000".into(),
                path: DatasetManifest::seg_rel("case000", "seg000"),
                generator: "seggen:s1.0".into(),
                dsc: 0.8,
                nsd: 0.7,
                seed: 4,
            }],
        });
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = DatasetManifest::load(dir.path()).unwrap();
        assert_eq!(m, back);
        let (case, seg) = back.resolve("case000/seg000").unwrap();
        assert_eq!(case.case_id, "case000");
        assert_eq!(seg.dsc, 0.8);
        assert!(back.resolve("case000/none").is_err());
        // Files were never written.
        assert_eq!(back.missing_files(dir.path()).len(), 3);
    }
}
