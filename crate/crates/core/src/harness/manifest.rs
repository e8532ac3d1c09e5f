//! Case manifest: `{"cases":[{"id","image","gt_mask","lesion_type","is_lymph_node","truth"?}]}`.
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::phantom::PhantomTruth;
use crate::volume::{CtVolume, MaskVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub id: String,
    pub image: String,
    pub gt_mask: String,
    pub lesion_type: String,
    pub is_lymph_node: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub cases: Vec<CaseEntry>,
}

/// A case with its files loaded.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub entry: CaseEntry,
    pub ct: CtVolume,
    pub gt: MaskVolume,
    pub truth: Option<PhantomTruth>,
}

impl CaseManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.cases {
            if c.id.is_empty() {
                return Err(Error::contract("case id must not be empty"));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(Error::contract(format!("duplicate case id {:?}", c.id)));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self =
            serde_json::from_str(&text).map_err(|e| Error::format("manifest", format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Entries sorted by id.
    pub fn sorted(&self) -> Vec<CaseEntry> {
        let mut v = self.cases.clone();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }
}

pub fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl CaseEntry {
    pub fn load(&self, base: &Path) -> Result<LoadedCase> {
        let ctx = |e: Error| e.context(format!("case {}", self.id));
        let ct = io::load_volume(resolve(base, &self.image)).map_err(ctx)?;
        let gt = io::load_mask(resolve(base, &self.gt_mask)).map_err(ctx)?;
        if gt.dims() != ct.dims() || gt.spacing() != ct.spacing() {
            return Err(ctx(Error::contract(format!(
                "mask grid {:?}/{:?} differs from image grid {:?}/{:?}",
                gt.dims(),
                gt.spacing(),
                ct.dims(),
                ct.spacing()
            ))));
        }
        let truth = match &self.truth {
            None => None,
            Some(t) => {
                let path = resolve(base, t);
                let text = std::fs::read_to_string(&path).map_err(|e| ctx(Error::io(&path, e)))?;
                Some(serde_json::from_str(&text).map_err(|e| ctx(Error::format("truth", e.to_string())))?)
            }
        };
        Ok(LoadedCase { entry: self.clone(), ct, gt, truth })
    }
}
