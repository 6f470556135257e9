//! JSON manifest tying an image to its region proposals and, once a fine model
//! has run, to the per-region logit files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mlcrf_core::proposer::RegionProposal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionEntry {
    pub region_id: usize,
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    /// Logit file, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionManifest {
    pub image_id: String,
    pub image_width: usize,
    pub image_height: usize,
    pub proposal_hash: String,
    pub regions: Vec<RegionEntry>,
}

/// SHA-256 over the image size and the ordered proposal rectangles.
pub fn proposal_hash(width: usize, height: usize, proposals: &[RegionProposal]) -> String {
    let mut canonical = format!("{width}x{height}");
    for p in proposals {
        let _ = write!(canonical, ";{},{},{},{}", p.top, p.left, p.height, p.width);
    }
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl RegionManifest {
    pub fn new(image_id: &str, width: usize, height: usize, proposals: &[RegionProposal]) -> Self {
        Self {
            image_id: image_id.to_string(),
            image_width: width,
            image_height: height,
            proposal_hash: proposal_hash(width, height, proposals),
            regions: proposals
                .iter()
                .enumerate()
                .map(|(k, p)| RegionEntry {
                    region_id: k,
                    top: p.top,
                    left: p.left,
                    height: p.height,
                    width: p.width,
                    logits: None,
                })
                .collect(),
        }
    }

    /// True when both the stored hash and the listed rectangles match `proposals`.
    pub fn matches(&self, width: usize, height: usize, proposals: &[RegionProposal]) -> bool {
        self.image_width == width
            && self.image_height == height
            && self.proposal_hash == proposal_hash(width, height, proposals)
            && self.regions.len() == proposals.len()
            && self
                .regions
                .iter()
                .zip(proposals)
                .all(|(r, p)| (r.top, r.left, r.height, r.width) == (p.top, p.left, p.height, p.width))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| PipelineError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| PipelineError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Absolute location of each region's logit file, resolved against `manifest_dir`.
    pub fn logit_paths(&self, manifest_dir: &Path) -> Result<Vec<PathBuf>> {
        self.regions
            .iter()
            .map(|r| match &r.logits {
                Some(rel) => {
                    let p = manifest_dir.join(rel);
                    if p.is_file() {
                        Ok(p)
                    } else {
                        Err(PipelineError::MissingRegionLogits {
                            image_id: self.image_id.clone(),
                            region_id: r.region_id,
                            path: Some(p),
                        })
                    }
                }
                None => Err(PipelineError::MissingRegionLogits {
                    image_id: self.image_id.clone(),
                    region_id: r.region_id,
                    path: None,
                }),
            })
            .collect()
    }
}
