//! Face cropping with symmetric margin expansion and bilinear resize.

use image::{imageops, RgbImage};

use crate::data::FaceBox;
use crate::error::{Error, Result};

/// Network input side length.
pub const CROP_SIZE: u32 = 224;

/// Expands a box by `margin · w` horizontally and `margin · h` vertically on
/// each side, then clips to the image bounds. Returns `(x, y, w, h)`.
pub fn expand_box(face_box: &FaceBox, margin: f64, img_w: u32, img_h: u32) -> (u32, u32, u32, u32) {
    let dx = margin * face_box.w as f64;
    let dy = margin * face_box.h as f64;
    let left = (face_box.x as f64 - dx).round().max(0.0) as u32;
    let top = (face_box.y as f64 - dy).round().max(0.0) as u32;
    let right = ((face_box.x + face_box.w) as f64 + dx).round().min(img_w as f64) as u32;
    let bottom = ((face_box.y + face_box.h) as f64 + dy).round().min(img_h as f64) as u32;
    (left, top, right - left, bottom - top)
}

/// Crops the (margin-expanded, clipped) face region and resizes it to
/// `224×224×3` with bilinear interpolation.
pub fn crop_face(image: &RgbImage, face_box: &FaceBox, margin: f64) -> Result<RgbImage> {
    let (img_w, img_h) = image.dimensions();
    if face_box.w == 0 || face_box.h == 0 {
        return Err(Error::Data("face box has zero area".into()));
    }
    if face_box.x + face_box.w > img_w || face_box.y + face_box.h > img_h {
        return Err(Error::Data(format!(
            "face box ({}, {}, {}, {}) outside {}x{} image",
            face_box.x, face_box.y, face_box.w, face_box.h, img_w, img_h
        )));
    }
    let (x, y, w, h) = expand_box(face_box, margin, img_w, img_h);
    let view = imageops::crop_imm(image, x, y, w, h).to_image();
    if (w, h) == (CROP_SIZE, CROP_SIZE) {
        return Ok(view);
    }
    Ok(imageops::resize(
        &view,
        CROP_SIZE,
        CROP_SIZE,
        imageops::FilterType::Triangle,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_expansion_hand_computed() {
        // 5% margin on (100, 100, 200, 200) inside 500x500: 10 px per side.
        let b = FaceBox { x: 100, y: 100, w: 200, h: 200 };
        assert_eq!(expand_box(&b, 0.05, 500, 500), (90, 90, 220, 220));
    }

    #[test]
    fn expansion_clips_at_image_edge() {
        let b = FaceBox { x: 0, y: 0, w: 100, h: 100 };
        let (x, y, w, h) = expand_box(&b, 0.05, 120, 120);
        assert_eq!((x, y), (0, 0));
        assert!(x + w <= 120 && y + h <= 120);
    }

    #[test]
    fn identity_crop_returns_same_pixels() {
        let mut img = RgbImage::new(224, 224);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = image::Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]);
        }
        let b = FaceBox { x: 0, y: 0, w: 224, h: 224 };
        let out = crop_face(&img, &b, 0.0).unwrap();
        assert_eq!(out.as_raw(), img.as_raw());
    }

    #[test]
    fn output_is_always_224() {
        let img = RgbImage::new(333, 471);
        for b in [
            FaceBox { x: 0, y: 0, w: 333, h: 471 },
            FaceBox { x: 10, y: 20, w: 31, h: 47 },
            FaceBox { x: 300, y: 400, w: 33, h: 71 },
        ] {
            let out = crop_face(&img, &b, 0.05).unwrap();
            assert_eq!(out.dimensions(), (224, 224));
        }
    }

    #[test]
    fn box_outside_image_rejected() {
        let img = RgbImage::new(100, 100);
        let b = FaceBox { x: 50, y: 50, w: 60, h: 60 };
        assert!(crop_face(&img, &b, 0.0).is_err());
        let zero = FaceBox { x: 0, y: 0, w: 0, h: 10 };
        assert!(crop_face(&img, &zero, 0.0).is_err());
    }
}
