//! Manifest CSV format and row validation.
//!
//! Header (exact): `media_path,media_kind,label,attack_type,dataset_id,video_id,frame_index,box_x,box_y,box_w,box_h`
//!
//! The four box columns are either all present or all empty. Labels are
//! `bonafide` / `attack`; `attack_type` must be empty exactly when the label
//! is `bonafide`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: &str = "1";
pub const MANIFEST_HEADER: &str =
    "media_path,media_kind,label,attack_type,dataset_id,video_id,frame_index,box_x,box_y,box_w,box_h";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[serde(rename = "bonafide")]
    BonaFide,
    Attack,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::BonaFide => "bonafide",
            Label::Attack => "attack",
        }
    }

    /// Classification target: 1 for bona fide, 0 for attack.
    pub fn target(&self) -> f64 {
        match self {
            Label::BonaFide => 1.0,
            Label::Attack => 0.0,
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "bonafide" => Some(Label::BonaFide),
            "attack" => Some(Label::Attack),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

impl MediaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MediaKind::Image => "image",
            MediaKind::Video => "video",
        }
    }

    pub fn parse(s: &str) -> Option<MediaKind> {
        match s {
            "image" => Some(MediaKind::Image),
            "video" => Some(MediaKind::Video),
            _ => None,
        }
    }
}

/// Axis-aligned face box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// One media item: an image, or one selected frame of a video.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub media_path: PathBuf,
    pub media_kind: MediaKind,
    pub label: Label,
    /// Free-form attack description (e.g. "print", "replay_webcam");
    /// empty exactly when `label` is bona fide.
    pub attack_type: String,
    pub dataset_id: String,
    /// Groups frames of one video for score fusion; equals the media path
    /// stem for standalone images.
    pub video_id: String,
    pub frame_index: u32,
    pub face_box: Option<FaceBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<Sample>,
    pub source_format_version: String,
}

impl Manifest {
    pub fn new(rows: Vec<Sample>) -> Self {
        Self {
            rows,
            source_format_version: MANIFEST_FORMAT_VERSION.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows restricted to one dataset id.
    pub fn filter_dataset(&self, dataset_id: &str) -> Manifest {
        Manifest::new(
            self.rows
                .iter()
                .filter(|s| s.dataset_id == dataset_id)
                .cloned()
                .collect(),
        )
    }

    /// Concatenates several manifests.
    pub fn merged(parts: &[&Manifest]) -> Manifest {
        Manifest::new(parts.iter().flat_map(|m| m.rows.iter().cloned()).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    media_path: String,
    media_kind: String,
    label: String,
    attack_type: String,
    dataset_id: String,
    video_id: String,
    frame_index: u32,
    box_x: Option<u32>,
    box_y: Option<u32>,
    box_w: Option<u32>,
    box_h: Option<u32>,
}

fn row_error(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn validate_row(path: &Path, row_no: usize, raw: RawRow) -> Result<Sample> {
    let media_kind = MediaKind::parse(&raw.media_kind).ok_or_else(|| {
        row_error(
            path,
            row_no,
            format!("unknown media_kind '{}' (expected image|video)", raw.media_kind),
        )
    })?;
    let label = Label::parse(&raw.label).ok_or_else(|| {
        row_error(
            path,
            row_no,
            format!("unknown label '{}' (expected bonafide|attack)", raw.label),
        )
    })?;
    match label {
        Label::BonaFide if !raw.attack_type.is_empty() => {
            return Err(row_error(
                path,
                row_no,
                format!(
                    "label is bonafide but attack_type is '{}': attack_type must be empty for bona fide rows",
                    raw.attack_type
                ),
            ));
        }
        Label::Attack if raw.attack_type.is_empty() => {
            return Err(row_error(
                path,
                row_no,
                "label is attack but attack_type is empty",
            ));
        }
        _ => {}
    }
    if raw.dataset_id.is_empty() {
        return Err(row_error(path, row_no, "dataset_id must be non-empty"));
    }
    let n_box = [raw.box_x, raw.box_y, raw.box_w, raw.box_h]
        .iter()
        .filter(|v| v.is_some())
        .count();
    let face_box = match n_box {
        0 => None,
        4 => {
            let (w, h) = (raw.box_w.unwrap(), raw.box_h.unwrap());
            if w == 0 || h == 0 {
                return Err(row_error(path, row_no, "face box must have w > 0 and h > 0"));
            }
            Some(FaceBox {
                x: raw.box_x.unwrap(),
                y: raw.box_y.unwrap(),
                w,
                h,
            })
        }
        _ => {
            return Err(row_error(
                path,
                row_no,
                "box columns must be all present or all empty",
            ))
        }
    };
    Ok(Sample {
        media_path: PathBuf::from(raw.media_path),
        media_kind,
        label,
        attack_type: raw.attack_type,
        dataset_id: raw.dataset_id,
        video_id: raw.video_id,
        frame_index: raw.frame_index,
        face_box,
    })
}

/// Loads and validates a manifest CSV. Errors carry the 1-based data row.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| row_error(path, 0, format!("cannot open manifest: {e}")))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    {
        let headers = reader
            .headers()
            .map_err(|e| row_error(path, 0, format!("cannot read header: {e}")))?;
        let expected: Vec<&str> = MANIFEST_HEADER.split(',').collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(row_error(
                path,
                0,
                format!("unexpected header {got:?}, expected {expected:?}"),
            ));
        }
    }

    let mut rows = Vec::new();
    let mut seen: HashSet<(PathBuf, u32)> = HashSet::new();
    for (i, record) in reader.deserialize::<RawRow>().enumerate() {
        let row_no = i + 1;
        let raw = record.map_err(|e| row_error(path, row_no, format!("malformed row: {e}")))?;
        let sample = validate_row(path, row_no, raw)?;
        if !seen.insert((sample.media_path.clone(), sample.frame_index)) {
            return Err(row_error(
                path,
                row_no,
                format!(
                    "duplicate (media_path, frame_index) pair: ({}, {})",
                    sample.media_path.display(),
                    sample.frame_index
                ),
            ));
        }
        rows.push(sample);
    }
    Ok(Manifest::new(rows))
}

/// Writes a manifest in the canonical CSV format.
pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for sample in &manifest.rows {
        let raw = RawRow {
            media_path: sample.media_path.to_string_lossy().into_owned(),
            media_kind: sample.media_kind.as_str().to_string(),
            label: sample.label.as_str().to_string(),
            attack_type: sample.attack_type.clone(),
            dataset_id: sample.dataset_id.clone(),
            video_id: sample.video_id.clone(),
            frame_index: sample.frame_index,
            box_x: sample.face_box.map(|b| b.x),
            box_y: sample.face_box.map(|b| b.y),
            box_w: sample.face_box.map(|b| b.w),
            box_h: sample.face_box.map(|b| b.h),
        };
        writer.serialize(raw)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_well_formed_rows() {
        let f = write_tmp(concat!(
            "media_path,media_kind,label,attack_type,dataset_id,video_id,frame_index,box_x,box_y,box_w,box_h\n",
            "a.png,image,bonafide,,dev,a,0,10,20,30,40\n",
            "b.png,image,attack,print,dev,b,0,,,,\n",
            "v/frames,video,attack,replay_webcam,dev,v,12,,,,\n",
        ));
        let m = load_manifest(f.path()).unwrap();
        assert_eq!(m.rows.len(), 3);
        assert_eq!(m.rows[0].face_box, Some(FaceBox { x: 10, y: 20, w: 30, h: 40 }));
        assert_eq!(m.rows[1].face_box, None);
        assert_eq!(m.rows[2].frame_index, 12);
        assert_eq!(m.source_format_version, MANIFEST_FORMAT_VERSION);
    }

    #[test]
    fn bonafide_with_attack_type_names_the_row() {
        let f = write_tmp(concat!(
            "media_path,media_kind,label,attack_type,dataset_id,video_id,frame_index,box_x,box_y,box_w,box_h\n",
            "a.png,image,bonafide,,dev,a,0,,,,\n",
            "b.png,image,bonafide,print,dev,b,0,,,,\n",
        ));
        let err = load_manifest(f.path()).unwrap_err();
        match err {
            Error::Manifest { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn header_only_file_is_empty_manifest() {
        let f = write_tmp(
            "media_path,media_kind,label,attack_type,dataset_id,video_id,frame_index,box_x,box_y,box_w,box_h\n",
        );
        let m = load_manifest(f.path()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn duplicate_media_frame_pair_rejected() {
        let f = write_tmp(concat!(
            "media_path,media_kind,label,attack_type,dataset_id,video_id,frame_index,box_x,box_y,box_w,box_h\n",
            "a.png,image,attack,print,dev,a,0,,,,\n",
            "a.png,image,attack,print,dev,a,0,,,,\n",
        ));
        assert!(load_manifest(f.path()).is_err());
    }

    #[test]
    fn partial_box_rejected() {
        let f = write_tmp(concat!(
            "media_path,media_kind,label,attack_type,dataset_id,video_id,frame_index,box_x,box_y,box_w,box_h\n",
            "a.png,image,attack,print,dev,a,0,10,20,,\n",
        ));
        assert!(load_manifest(f.path()).is_err());
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(load_manifest("/nonexistent/manifest.csv").is_err());
    }
}
