//! Frame selection and the pluggable video decoder interface.

use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};

/// Evenly spaced frame indices over `[0, total_frames)`.
///
/// For `k > 1` the rule is `index_i = round(i · (total_frames − 1) / (k − 1))`,
/// which includes both endpoints; `k = 1` selects the middle frame
/// `floor(total_frames / 2)`.
pub fn sample_frame_indices(total_frames: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Data("frame count k must be positive".into()));
    }
    if k > total_frames {
        return Err(Error::Data(format!(
            "cannot sample {k} frames from a video with {total_frames} frames"
        )));
    }
    if k == 1 {
        return Ok(vec![total_frames / 2]);
    }
    let span = (total_frames - 1) as f64;
    let denom = (k - 1) as f64;
    Ok((0..k)
        .map(|i| (i as f64 * span / denom).round() as usize)
        .collect())
}

/// Decodes individual frames of a video reference.
///
/// Codec support is out of scope; implementations interpret the media path
/// however they like (the bundled one reads a directory of frame images).
pub trait FrameDecoder: Send + Sync {
    fn frame_count(&self, media_path: &Path) -> Result<usize>;
    fn decode_frame(&self, media_path: &Path, frame_index: usize) -> Result<RgbImage>;
}

/// Rejects every video; the default when no decoder is configured.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullDecoder;

impl FrameDecoder for NullDecoder {
    fn frame_count(&self, media_path: &Path) -> Result<usize> {
        Err(Error::Data(format!(
            "no video decoder configured (cannot read {})",
            media_path.display()
        )))
    }

    fn decode_frame(&self, media_path: &Path, _frame_index: usize) -> Result<RgbImage> {
        Err(Error::Data(format!(
            "no video decoder configured (cannot read {})",
            media_path.display()
        )))
    }
}

/// Treats a video as a directory of frame images, ordered by file name.
#[derive(Debug, Default, Clone, Copy)]
pub struct FrameDirDecoder;

impl FrameDirDecoder {
    fn list_frames(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::Data(format!("cannot list frames in {}: {e}", dir.display())))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(Error::Data(format!(
                "video directory {} contains no frames",
                dir.display()
            )));
        }
        Ok(entries)
    }
}

impl FrameDecoder for FrameDirDecoder {
    fn frame_count(&self, media_path: &Path) -> Result<usize> {
        Ok(self.list_frames(media_path)?.len())
    }

    fn decode_frame(&self, media_path: &Path, frame_index: usize) -> Result<RgbImage> {
        let frames = self.list_frames(media_path)?;
        let path = frames.get(frame_index).ok_or_else(|| {
            Error::Data(format!(
                "frame index {frame_index} out of range for {} ({} frames)",
                media_path.display(),
                frames.len()
            ))
        })?;
        Ok(image::open(path)?.to_rgb8())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_total_is_identity_range() {
        assert_eq!(
            sample_frame_indices(25, 25).unwrap(),
            (0..25).collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_frame_is_middle() {
        assert_eq!(sample_frame_indices(5, 1).unwrap(), vec![2]);
        assert_eq!(sample_frame_indices(4, 1).unwrap(), vec![2]);
        assert_eq!(sample_frame_indices(1, 1).unwrap(), vec![0]);
    }

    #[test]
    fn rounded_linear_spacing() {
        assert_eq!(sample_frame_indices(9, 3).unwrap(), vec![0, 4, 8]);
        assert_eq!(sample_frame_indices(100, 25).unwrap().len(), 25);
    }

    #[test]
    fn invalid_k_rejected() {
        assert!(sample_frame_indices(10, 0).is_err());
        assert!(sample_frame_indices(10, 11).is_err());
    }

    #[test]
    fn indices_strictly_increasing_and_idempotent() {
        for total in 1..60usize {
            for k in 1..=total {
                let idx = sample_frame_indices(total, k).unwrap();
                assert_eq!(idx.len(), k);
                assert!(idx.windows(2).all(|w| w[0] < w[1]), "{total} {k}: {idx:?}");
                assert!(*idx.last().unwrap() < total);
                // Re-applying the rule to the selected count reproduces it.
                let again = sample_frame_indices(total, idx.len()).unwrap();
                assert_eq!(idx, again);
            }
        }
    }
}
