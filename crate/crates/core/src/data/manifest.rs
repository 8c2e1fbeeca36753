//! Line-delimited dataset manifest.
//!
//! The first non-empty line is a header `{"format": "privgaze-manifest",
//! "version": 1}`; every following line is one JSON record with paths
//! relative to the manifest's directory and inline annotations.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{CameraIntrinsics, GazeVector, Vec3};
use crate::pose::parse_keypoints;

use super::image::{load_depth, load_scene, BoundingBox};
use super::sample::{check_annotations, GazeSample};

pub const MANIFEST_FORMAT: &str = "privgaze-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub split: Split,
    pub subject: String,
    pub scene_id: String,
    pub scene: String,
    pub depth: String,
    pub keypoints: String,
    pub intrinsics: CameraIntrinsics,
    pub head_box: BoundingBox,
    pub eye_2d: [f64; 2],
    pub eye_3d: [f64; 3],
    pub gt_gaze: [f64; 3],
    pub gt_target_2d: [f64; 2],
    pub gt_target_3d: [f64; 3],
}

impl ManifestRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(CoreError::Invalid("record with an empty id".into()));
        }
        self.intrinsics.validate().map_err(|e| CoreError::Record {
            record: self.id.clone(),
            field: "intrinsics",
            msg: e.to_string(),
        })?;
        let eye = Vec3::from(self.eye_3d);
        check_annotations(
            &self.id,
            (self.intrinsics.width, self.intrinsics.height),
            &self.head_box,
            &eye,
            &Vec3::from(self.gt_gaze),
            self.gt_target_2d,
            &[
                ("eye_2d", &self.eye_2d[..]),
                ("eye_3d", &self.eye_3d[..]),
                ("gt_target_3d", &self.gt_target_3d[..]),
            ],
        )
    }

    fn paths(&self) -> [(&'static str, &str); 3] {
        [("scene", &self.scene), ("depth", &self.depth), ("keypoints", &self.keypoints)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Parses and validates manifest text without touching the file system.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((n, header)) = lines.next() else {
            return Err(CoreError::Parse {
                line: 1,
                msg: "missing manifest header".into(),
            });
        };
        let header: Header = serde_json::from_str(header).map_err(|e| CoreError::Parse {
            line: n + 1,
            msg: format!("bad header: {e}"),
        })?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(CoreError::Parse {
                line: n + 1,
                msg: format!(
                    "unsupported manifest {} v{}, expected {MANIFEST_FORMAT} v{MANIFEST_VERSION}",
                    header.format, header.version
                ),
            });
        }
        let mut records = Vec::new();
        for (n, line) in lines {
            let r: ManifestRecord = serde_json::from_str(line).map_err(|e| CoreError::Parse {
                line: n + 1,
                msg: e.to_string(),
            })?;
            r.validate()?;
            records.push(r);
        }
        let m = Self {
            root: root.into(),
            records,
        };
        m.check_ids_and_splits()?;
        Ok(m)
    }

    fn check_ids_and_splits(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut subjects: HashMap<&str, Split> = HashMap::new();
        let mut scenes: HashMap<&str, Split> = HashMap::new();
        for r in &self.records {
            let err = |field, msg| CoreError::Record {
                record: r.id.clone(),
                field,
                msg,
            };
            if !ids.insert(r.id.as_str()) {
                return Err(err("id", "duplicate id".into()));
            }
            for (field, map, key) in [("subject", &mut subjects, &r.subject), ("scene_id", &mut scenes, &r.scene_id)] {
                let first = *map.entry(key.as_str()).or_insert(r.split);
                if first != r.split {
                    return Err(err(field, format!("`{key}` appears in both {first} and {} splits", r.split)));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let header = Header {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Fails on the first record whose scene, depth or keypoint file is missing.
    pub fn check_files(&self) -> Result<()> {
        for r in &self.records {
            for (field, rel) in r.paths() {
                if !self.resolve(rel).is_file() {
                    return Err(CoreError::Record {
                        record: r.id.clone(),
                        field,
                        msg: format!("missing file {}", self.resolve(rel).display()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<usize> {
        (0..self.records.len()).filter(|i| self.records[*i].split == split).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Decodes the files of record `index` and checks the full sample.
    pub fn load_sample(&self, index: usize) -> Result<GazeSample> {
        let r = &self.records[index];
        let wrap = |field: &'static str, e: CoreError| CoreError::Record {
            record: r.id.clone(),
            field,
            msg: e.to_string(),
        };
        let scene = load_scene(&self.resolve(&r.scene)).map_err(|e| wrap("scene", e))?;
        let depth = load_depth(&self.resolve(&r.depth)).map_err(|e| wrap("depth", e))?;
        let kp_path = self.resolve(&r.keypoints);
        let kp_text = fs::read_to_string(&kp_path).map_err(|e| wrap("keypoints", CoreError::io(&kp_path, e)))?;
        let keypoints = parse_keypoints(&kp_text).map_err(|e| wrap("keypoints", e))?;
        let gt_gaze = GazeVector::new(r.gt_gaze[0], r.gt_gaze[1], r.gt_gaze[2]).map_err(|e| wrap("gt_gaze", e))?;
        let s = GazeSample {
            id: r.id.clone(),
            scene,
            depth,
            intrinsics: r.intrinsics,
            keypoints,
            head_box: r.head_box,
            eye_2d: r.eye_2d,
            eye_3d: Vec3::from(r.eye_3d),
            gt_gaze,
            gt_target_2d: r.gt_target_2d,
            gt_target_3d: Vec3::from(r.gt_target_3d),
        };
        s.validate()?;
        Ok(s)
    }
}

/// Reads, validates and checks the referenced files of a manifest. Paths in
/// records resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = DatasetManifest::parse(&text, root)?;
    m.check_files()?;
    Ok(m)
}
