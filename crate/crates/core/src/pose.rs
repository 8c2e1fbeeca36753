//! Keypoint layouts, upper-body selection and neck-anchored normalization.
//!
//! | index | COCO-17          | upper-13       |
//! |-------|------------------|----------------|
//! | 0     | nose             | nose           |
//! | 1, 2  | left/right eye   | left/right eye |
//! | 3, 4  | left/right ear   | left/right ear |
//! | 5, 6  | left/right shoulder | same        |
//! | 7, 8  | left/right elbow | same           |
//! | 9, 10 | left/right wrist | same           |
//! | 11, 12| left/right hip   | same           |
//! | 13, 14| left/right knee  | (dropped)      |
//! | 15, 16| left/right ankle | (dropped)      |
//!
//! "Left" is the person's left.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const JOINT_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub const LEFT_SHOULDER: usize = 5;
pub const RIGHT_SHOULDER: usize = 6;
pub const LEFT_HIP: usize = 11;
pub const RIGHT_HIP: usize = 12;
pub const POSE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointLayout {
    Coco17,
    Upper13,
}

impl JointLayout {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            JointLayout::Coco17 => 17,
            JointLayout::Upper13 => 13,
        }
    }

    pub fn from_len(n: usize) -> Result<Self> {
        match n {
            17 => Ok(JointLayout::Coco17),
            13 => Ok(JointLayout::Upper13),
            n => Err(CoreError::Layout(n)),
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        &JOINT_NAMES[..self.len()]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JointLayout::Coco17 => "coco17",
            JointLayout::Upper13 => "upper13",
        }
    }

    /// Index of the mirror-image joint (left and right swapped).
    pub fn mirror(self, i: usize) -> usize {
        match i {
            0 => 0,
            i if i % 2 == 1 => i + 1,
            i => i - 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoints2D {
    layout: JointLayout,
    joints: Vec<[f64; 2]>,
    confidence: Option<Vec<f64>>,
}

impl Keypoints2D {
    pub fn new(layout: JointLayout, joints: Vec<[f64; 2]>, confidence: Option<Vec<f64>>) -> Result<Self> {
        if joints.len() != layout.len() {
            return Err(CoreError::Invalid(format!(
                "{} layout needs {} joints, got {}",
                layout.as_str(),
                layout.len(),
                joints.len()
            )));
        }
        if let Some((i, _)) = joints.iter().enumerate().find(|(_, j)| !(j[0].is_finite() && j[1].is_finite())) {
            return Err(CoreError::NonFinite(format!("keypoint {}", JOINT_NAMES[i])));
        }
        if let Some(c) = &confidence {
            if c.len() != joints.len() {
                return Err(CoreError::Invalid(format!("{} confidences for {} joints", c.len(), joints.len())));
            }
            if let Some(v) = c.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(CoreError::Invalid(format!("confidence {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            layout,
            joints,
            confidence,
        })
    }

    pub fn layout(&self) -> JointLayout {
        self.layout
    }

    pub fn joints(&self) -> &[[f64; 2]] {
        &self.joints
    }

    pub fn confidence(&self) -> Option<&[f64]> {
        self.confidence.as_deref()
    }

    /// Applies `f` to every joint position, keeping layout and confidences.
    pub fn map_joints(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        Self::new(self.layout, self.joints.iter().map(|j| f(*j)).collect(), self.confidence.clone())
    }

    /// Mirrors about the vertical line `x = axis` and swaps left/right labels.
    pub fn mirrored(&self, axis: f64) -> Self {
        let n = self.joints.len();
        let joints = (0..n)
            .map(|i| {
                let j = self.joints[self.layout.mirror(i)];
                [2.0 * axis - j[0], j[1]]
            })
            .collect();
        let confidence = self
            .confidence
            .as_ref()
            .map(|c| (0..n).map(|i| c[self.layout.mirror(i)]).collect());
        Self {
            layout: self.layout,
            joints,
            confidence,
        }
    }
}

/// Drops knees and ankles; an upper-13 input is returned unchanged.
pub fn select_upper_body(full: &Keypoints2D) -> Keypoints2D {
    Keypoints2D {
        layout: JointLayout::Upper13,
        joints: full.joints[..13].to_vec(),
        confidence: full.confidence.as_ref().map(|c| c[..13].to_vec()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedPose {
    pub layout: JointLayout,
    pub joints: Vec<[f64; 2]>,
    /// Neck position in pixels.
    pub anchor: [f64; 2],
    /// Neck to mid-hip distance in pixels.
    pub scale: f64,
}

impl NormalizedPose {
    /// Flattened `[x0, y0, x1, y1, ...]`.
    pub fn features(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|j| [j[0], j[1]]).collect()
    }

    pub fn denormalize(&self) -> Vec<[f64; 2]> {
        self.joints
            .iter()
            .map(|j| [j[0] * self.scale + self.anchor[0], j[1] * self.scale + self.anchor[1]])
            .collect()
    }
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Translates the shoulder midpoint to the origin and divides by the
/// distance to the hip midpoint. Works on either layout so the full-body
/// ablation shares the code path.
pub fn normalize_keypoints(kp: &Keypoints2D) -> Result<NormalizedPose> {
    let j = &kp.joints;
    let neck = midpoint(j[LEFT_SHOULDER], j[RIGHT_SHOULDER]);
    let hip = midpoint(j[LEFT_HIP], j[RIGHT_HIP]);
    let s = (neck[0] - hip[0]).hypot(neck[1] - hip[1]);
    if !(s >= POSE_EPS) {
        return Err(CoreError::DegeneratePose(s));
    }
    let joints = j.iter().map(|p| [(p[0] - neck[0]) / s, (p[1] - neck[1]) / s]).collect();
    Ok(NormalizedPose {
        layout: kp.layout,
        joints,
        anchor: neck,
        scale: s,
    })
}

/// Writes the line-oriented keypoint record: a `layout <name>` line, then
/// one `name x y [confidence]` line per joint in layout order.
pub fn format_keypoints(kp: &Keypoints2D) -> String {
    let mut out = format!("layout {}\n", kp.layout.as_str());
    for (i, j) in kp.joints.iter().enumerate() {
        out.push_str(&format!("{} {} {}", JOINT_NAMES[i], j[0], j[1]));
        if let Some(c) = &kp.confidence {
            out.push_str(&format!(" {}", c[i]));
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`format_keypoints`]. Blank lines and `#` comments are
/// ignored; either every joint carries a confidence or none does.
pub fn parse_keypoints(text: &str) -> Result<Keypoints2D> {
    let err = |line: usize, msg: String| CoreError::Parse { line, msg };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n, header) = lines.next().ok_or_else(|| err(1, "empty keypoint record".into()))?;
    let layout = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["layout", "coco17"] => JointLayout::Coco17,
        ["layout", "upper13"] => JointLayout::Upper13,
        _ => return Err(err(n, format!("expected `layout coco17|upper13`, found `{header}`"))),
    };
    let mut joints = Vec::with_capacity(layout.len());
    let mut conf = Vec::with_capacity(layout.len());
    for (n, l) in lines {
        let i = joints.len();
        if i == layout.len() {
            return Err(err(n, format!("more than {} joints", layout.len())));
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(n, format!("expected `name x y [confidence]`, found `{l}`")));
        }
        if fields[0] != JOINT_NAMES[i] {
            return Err(err(n, format!("expected joint `{}`, found `{}`", JOINT_NAMES[i], fields[0])));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(n, format!("`{s}`: {e}")));
        joints.push([num(fields[1])?, num(fields[2])?]);
        if fields.len() == 4 {
            conf.push(num(fields[3])?);
        }
        if !conf.is_empty() && conf.len() != joints.len() {
            return Err(err(n, "confidence given for some joints but not others".into()));
        }
    }
    if joints.len() != layout.len() {
        return Err(err(text.lines().count().max(1), format!("{} joints, expected {}", joints.len(), layout.len())));
    }
    let confidence = (!conf.is_empty()).then_some(conf);
    Keypoints2D::new(layout, joints, confidence)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> Keypoints2D {
        let mut j = vec![[0.0, 0.0]; 13];
        j[0] = [20.0, 0.0];
        j[LEFT_SHOULDER] = [10.0, 10.0];
        j[RIGHT_SHOULDER] = [30.0, 10.0];
        j[LEFT_HIP] = [12.0, 50.0];
        j[RIGHT_HIP] = [28.0, 50.0];
        Keypoints2D::new(JointLayout::Upper13, j, None).unwrap()
    }

    #[test]
    fn hand_computed_normalization() {
        let n = normalize_keypoints(&example()).unwrap();
        assert_eq!(n.anchor, [20.0, 10.0]);
        assert_eq!(n.scale, 40.0);
        assert_eq!(n.joints[0], [0.0, -0.25]);
        let neck = midpoint(n.joints[LEFT_SHOULDER], n.joints[RIGHT_SHOULDER]);
        let hip = midpoint(n.joints[LEFT_HIP], n.joints[RIGHT_HIP]);
        assert_eq!(neck, [0.0, 0.0]);
        assert_eq!(hip[0].hypot(hip[1]), 1.0);
    }

    #[test]
    fn collapsed_pose_is_degenerate() {
        let kp = Keypoints2D::new(JointLayout::Upper13, vec![[5.0, 5.0]; 13], None).unwrap();
        assert!(matches!(normalize_keypoints(&kp), Err(CoreError::DegeneratePose(_))));
    }

    #[test]
    fn selection_drops_legs_and_is_idempotent() {
        let j: Vec<[f64; 2]> = (0..17).map(|i| [i as f64, -(i as f64)]).collect();
        let full = Keypoints2D::new(JointLayout::Coco17, j.clone(), None).unwrap();
        let up = select_upper_body(&full);
        assert_eq!(up.layout(), JointLayout::Upper13);
        assert_eq!(up.joints(), &j[..13]);
        assert_eq!(select_upper_body(&up), up);
        let mut far = j;
        for p in &mut far[13..] {
            *p = [1e9, -1e9];
        }
        let far = Keypoints2D::new(JointLayout::Coco17, far, None).unwrap();
        assert_eq!(select_upper_body(&far), up);
    }

    #[test]
    fn layouts_and_construction_checks() {
        assert!(matches!(JointLayout::from_len(15), Err(CoreError::Layout(15))));
        assert!(Keypoints2D::new(JointLayout::Coco17, vec![[0.0; 2]; 13], None).is_err());
        assert!(Keypoints2D::new(JointLayout::Upper13, vec![[f64::NAN, 0.0]; 13], None).is_err());
        assert!(Keypoints2D::new(JointLayout::Upper13, vec![[0.0; 2]; 13], Some(vec![1.5; 13])).is_err());
        for i in 0..17 {
            let m = JointLayout::Coco17.mirror(i);
            assert_eq!(JointLayout::Coco17.mirror(m), i);
            if i > 0 {
                assert_eq!(JOINT_NAMES[i].replace("left", "right"), JOINT_NAMES[i.max(m)]);
            }
        }
    }

    #[test]
    fn mirroring_swaps_sides() {
        let kp = example();
        let m = kp.mirrored(19.5);
        assert_eq!(m.joints()[LEFT_SHOULDER], [9.0, 10.0]);
        assert_eq!(m.joints()[RIGHT_SHOULDER], [29.0, 10.0]);
        assert_eq!(m.mirrored(19.5), kp);
    }

    #[test]
    fn keypoint_text_round_trips() {
        let j: Vec<[f64; 2]> = (0..17).map(|i| [i as f64 * 1.25, 100.0 - i as f64 / 3.0]).collect();
        let c: Vec<f64> = (0..17).map(|i| i as f64 / 16.0).collect();
        for kp in [
            Keypoints2D::new(JointLayout::Coco17, j.clone(), Some(c)).unwrap(),
            Keypoints2D::new(JointLayout::Upper13, j[..13].to_vec(), None).unwrap(),
        ] {
            assert_eq!(parse_keypoints(&format_keypoints(&kp)).unwrap(), kp);
        }
    }

    #[test]
    fn malformed_keypoint_text_names_the_line() {
        let good = format_keypoints(&example());
        let swapped = good.replacen("left_eye", "right_eye", 1);
        match parse_keypoints(&swapped) {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_keypoints("").is_err());
        assert!(parse_keypoints("layout upper13\nnose 1 2\n").is_err());
        assert!(parse_keypoints(&good.replace("nose 20 0", "nose 20 zero")).is_err());
        assert!(parse_keypoints(&format!("# comment\n{good}\n")).is_ok());
    }
}
