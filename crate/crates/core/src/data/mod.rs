//! Dataset records, privacy blurring, augmentation and synthetic scenes.

pub mod augment;
pub mod blur;
pub mod image;
pub mod manifest;
pub mod sample;
pub mod synth;

pub use augment::{augment, flip_horizontal, AugmentConfig};
pub use blur::{audit_blur, blur_face, BlurAudit};
pub use image::{head_mask, load_depth, load_scene, save_depth, save_scene, BoundingBox, SceneImage};
pub use manifest::{load_manifest, DatasetManifest, ManifestRecord, Split};
pub use sample::GazeSample;
pub use synth::{synth_generate, synth_samples, SynthConfig};
