//! Three-panel evaluation figures: the blurred scene with predicted (blue)
//! and ground-truth (red) 2D targets, the field-of-view overlay, and a
//! top-down view of the point cloud with both gaze rays.

use std::path::Path;

use image::{Rgb, RgbImage};
use privgaze_core::data::GazeSample;
use privgaze_core::geometry::unproject;
use privgaze_core::Vec3;
use privgaze_train::Prediction;

const RED: Rgb<u8> = Rgb([230, 30, 30]);
const BLUE: Rgb<u8> = Rgb([30, 80, 240]);
const GREEN: Rgb<u8> = Rgb([40, 200, 60]);
const GAP: u32 = 4;

pub fn save(img: &RgbImage, path: &Path) -> Result<(), String> {
    img.save(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn dot(img: &mut RgbImage, x: f64, y: f64, r: i64, c: Rgb<u8>) {
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(img, cx + dx, cy + dy, c);
            }
        }
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).clamp(1, 1 << 14);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put(img, (a.0 + t * (b.0 - a.0)).round() as i64, (a.1 + t * (b.1 - a.1)).round() as i64, c);
    }
}

fn hot(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    [(3.0 * v).min(1.0), (3.0 * v - 1.0).clamp(0.0, 1.0), (3.0 * v - 2.0).clamp(0.0, 1.0)]
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn render_figure(s: &GazeSample, p: &Prediction) -> Result<RgbImage, String> {
    let (w, h) = (s.width() as u32, s.height() as u32);
    let mut img = RgbImage::from_pixel(3 * w + 2 * GAP, h, Rgb([255, 255, 255]));
    let to_px = |q: [f64; 2]| (q[0] * w as f64 - 0.5, q[1] * h as f64 - 0.5);
    let eye = (s.eye_2d[0], s.eye_2d[1]);

    // scene with 2D targets
    for v in 0..h {
        for u in 0..w {
            let px = s.scene.pixel(u as usize, v as usize);
            img.put_pixel(u, v, Rgb(px.map(|c| to_u8(c as f64))));
        }
    }
    let mut panel = RgbImage::new(w, h);
    for (u, v, px) in img.enumerate_pixels().filter(|(u, _, _)| *u < w) {
        panel.put_pixel(u, v, *px);
    }
    line(&mut panel, eye, to_px(s.gt_target_2d), RED);
    line(&mut panel, eye, to_px(p.point_2d), BLUE);
    dot(&mut panel, to_px(s.gt_target_2d).0, to_px(s.gt_target_2d).1, 3, RED);
    dot(&mut panel, to_px(p.point_2d).0, to_px(p.point_2d).1, 3, BLUE);
    dot(&mut panel, eye.0, eye.1, 2, GREEN);
    image::imageops::replace(&mut img, &panel, 0, 0);

    // field-of-view (or heatmap) overlay on a dimmed grayscale scene
    let map = p.fov.as_ref().unwrap_or(&p.heatmap).resize_bilinear(w as usize, h as usize);
    let peak = map.data().iter().cloned().fold(0.0, f64::max).max(1e-12);
    let mut panel = RgbImage::new(w, h);
    for v in 0..h {
        for u in 0..w {
            let px = s.scene.pixel(u as usize, v as usize);
            let gray = (px[0] + px[1] + px[2]) as f64 / 3.0;
            let c = hot(*map.get(v as usize, u as usize) / peak);
            panel.put_pixel(u, v, Rgb(c.map(|x| to_u8(0.35 * gray + 0.65 * x))));
        }
    }
    dot(&mut panel, to_px(s.gt_target_2d).0, to_px(s.gt_target_2d).1, 3, RED);
    dot(&mut panel, to_px(p.point_2d).0, to_px(p.point_2d).1, 3, BLUE);
    image::imageops::replace(&mut img, &panel, (w + GAP) as i64, 0);

    // top-down (x, z) view of the cloud with both rays
    let cloud = unproject(&s.depth, &s.intrinsics).map_err(|e| e.to_string())?;
    let mut pts: Vec<Vec3> = cloud.valid_points().filter(|(u, v, _)| u % 2 == 0 && v % 2 == 0).map(|(_, _, q)| q).collect();
    pts.extend([s.eye_3d, s.gt_target_3d, p.target_3d]);
    let (mut x0, mut x1, mut z0, mut z1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for q in &pts {
        x0 = x0.min(q.x);
        x1 = x1.max(q.x);
        z0 = z0.min(q.z);
        z1 = z1.max(q.z);
    }
    let margin = 8.0;
    let scale = ((w as f64 - 2.0 * margin) / (x1 - x0).max(1e-6)).min((h as f64 - 2.0 * margin) / (z1 - z0).max(1e-6));
    let proj = |q: &Vec3| (margin + (q.x - x0) * scale, h as f64 - margin - (q.z - z0) * scale);
    let mut panel = RgbImage::from_pixel(w, h, Rgb([250, 250, 250]));
    let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), q| (a.min(q.y), b.max(q.y)));
    for q in &pts[..pts.len() - 3] {
        let shade = 0.25 + 0.5 * (q.y - y0) / (y1 - y0).max(1e-6);
        let (x, y) = proj(q);
        put(&mut panel, x.round() as i64, y.round() as i64, Rgb([to_u8(shade); 3]));
    }
    let e = proj(&s.eye_3d);
    line(&mut panel, e, proj(&s.gt_target_3d), RED);
    line(&mut panel, e, proj(&p.target_3d), BLUE);
    dot(&mut panel, e.0, e.1, 2, GREEN);
    image::imageops::replace(&mut img, &panel, (2 * (w + GAP)) as i64, 0);
    Ok(img)
}
