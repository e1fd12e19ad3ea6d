//! Sample decoding and tensor assembly for the training/evaluation loops.

use image::RgbImage;
use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;

use crate::data::{augment, crop_face, AugmentationConfig, FaceBox, MediaKind, Sample, CROP_SIZE};
use crate::data::FrameDecoder;
use crate::error::Result;
use crate::nn::Elem;

/// Decodes a sample's pixels (the selected frame for videos).
pub fn load_sample_rgb(sample: &Sample, decoder: &dyn FrameDecoder) -> Result<RgbImage> {
    match sample.media_kind {
        MediaKind::Image => Ok(image::open(&sample.media_path)?.to_rgb8()),
        MediaKind::Video => decoder.decode_frame(&sample.media_path, sample.frame_index as usize),
    }
}

/// Full per-sample pipeline: decode, face-crop (whole frame when no box is
/// present), and optionally augment. Output is always `224×224×3`.
pub fn prepare_sample(
    sample: &Sample,
    decoder: &dyn FrameDecoder,
    margin: f64,
    augmentation: Option<(&AugmentationConfig, &mut ChaCha8Rng)>,
) -> Result<RgbImage> {
    let img = load_sample_rgb(sample, decoder)?;
    let full = FaceBox {
        x: 0,
        y: 0,
        w: img.width(),
        h: img.height(),
    };
    let face_box = sample.face_box.as_ref().unwrap_or(&full);
    let cropped = crop_face(&img, face_box, margin)?;
    match augmentation {
        Some((cfg, rng)) => Ok(augment(&cropped, cfg, rng)),
        None => Ok(cropped),
    }
}

/// Stacks crops into a `(B, 3, 224, 224)` tensor normalized to `[-1, 1]`
/// (pixel / 255, then centered at 0.5 with scale 0.5).
pub fn images_to_tensor<F: Elem>(images: &[RgbImage]) -> ArrayD<F> {
    let b = images.len();
    let (c, s) = (3usize, CROP_SIZE as usize);
    let mut data = vec![F::zero(); b * c * s * s];
    for (bi, img) in images.iter().enumerate() {
        debug_assert_eq!(img.dimensions(), (CROP_SIZE, CROP_SIZE));
        let raw = img.as_raw();
        let img_base = bi * c * s * s;
        for y in 0..s {
            for x in 0..s {
                let px = (y * s + x) * 3;
                for ch in 0..c {
                    let v = raw[px + ch] as f64 / 255.0;
                    data[img_base + ch * s * s + y * s + x] = F::from_f64((v - 0.5) / 0.5);
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[b, c, s, s]), data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_layout_and_normalization() {
        let mut img = RgbImage::new(CROP_SIZE, CROP_SIZE);
        img.put_pixel(0, 0, image::Rgb([255, 0, 127]));
        let t = images_to_tensor::<f64>(&[img]);
        assert_eq!(t.shape(), &[1, 3, 224, 224]);
        assert!((t[[0, 0, 0, 0]] - 1.0).abs() < 1e-12);
        assert!((t[[0, 1, 0, 0]] + 1.0).abs() < 1e-12);
        assert!((t[[0, 2, 0, 0]] - (127.0 / 255.0 - 0.5) / 0.5).abs() < 1e-12);
    }
}
