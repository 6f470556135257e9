//! Median-filter hole filling for depth maps.
//!
//! Each pass fills every missing pixel that has at least one valid pixel inside its
//! window with the lower median of those valid pixels. Passes read only the previous
//! pass's state, so the filled region grows inward from the hole boundary.

use crate::error::{Error, Result};
use crate::imagedata::DepthField;

pub const DEFAULT_WINDOW: usize = 5;

/// Fills every missing pixel. Valid pixels are never modified.
pub fn fill_missing(depth: &DepthField, window: usize) -> Result<DepthField> {
    fill_missing_traced(depth, window).map(|(filled, _)| filled)
}

/// Like [`fill_missing`], also returning the missing-pixel count after each pass.
pub fn fill_missing_traced(depth: &DepthField, window: usize) -> Result<(DepthField, Vec<usize>)> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "depth fill window must be odd and at least 3, got {window}"
        )));
    }
    let mut remaining = depth.missing_count();
    if remaining == 0 {
        return Ok((depth.clone(), Vec::new()));
    }
    if remaining == depth.missing().len() {
        return Err(Error::AllMissing);
    }

    let (w, h) = (depth.width(), depth.height());
    let radius = (window / 2) as isize;
    let mut values = depth.data().to_vec();
    let mut missing = depth.missing().to_vec();
    let mut trace = Vec::new();
    let mut neighbours = Vec::with_capacity(window * window);

    while remaining > 0 {
        let mut next_values = values.clone();
        let mut next_missing = missing.clone();
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                if !missing[i] {
                    continue;
                }
                neighbours.clear();
                for dr in -radius..=radius {
                    for dc in -radius..=radius {
                        let (r, c) = (row as isize + dr, col as isize + dc);
                        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                            continue;
                        }
                        let j = r as usize * w + c as usize;
                        if !missing[j] {
                            neighbours.push(values[j]);
                        }
                    }
                }
                if neighbours.is_empty() {
                    continue;
                }
                neighbours.sort_by(f64::total_cmp);
                next_values[i] = neighbours[(neighbours.len() - 1) / 2];
                next_missing[i] = false;
            }
        }
        let now = next_missing.iter().filter(|&&m| m).count();
        // a non-empty valid set always borders the holes, so every pass makes progress
        assert!(now < remaining, "depth fill pass made no progress");
        remaining = now;
        trace.push(now);
        values = next_values;
        missing = next_missing;
    }

    Ok((DepthField::new(w, h, values, missing)?, trace))
}
