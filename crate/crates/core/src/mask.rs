//! Binary raster masks.

use image::{GrayImage, Luma};
use nalgebra::Vector2;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask {path}: {message}")]
    Io { path: String, message: String },
    #[error("mask dimensions must be positive, got {width}×{height}")]
    EmptyRaster { width: usize, height: usize },
    #[error("mask buffer has {got} pixels, expected {expected}")]
    BufferSize { expected: usize, got: usize },
}

/// Row-major binary occupancy; `true` marks object pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Silhouette {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Zeroth, first and second moments of the foreground pixel centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskMoments {
    pub count: usize,
    pub centroid: Vector2<f64>,
    /// Population covariance `[uu, uv, vv]`.
    pub covariance: [f64; 3],
}

/// Inclusive pixel rectangle `[u0, u1] × [v0, v1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub u0: usize,
    pub v0: usize,
    pub u1: usize,
    pub v1: usize,
}

impl PixelRect {
    pub fn union(&self, other: &PixelRect) -> PixelRect {
        PixelRect {
            u0: self.u0.min(other.u0),
            v0: self.v0.min(other.v0),
            u1: self.u1.max(other.u1),
            v1: self.v1.max(other.v1),
        }
    }
}

impl Silhouette {
    pub fn new(width: usize, height: usize) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyRaster { width, height });
        }
        Ok(Self {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyRaster { width, height });
        }
        if bits.len() != width * height {
            return Err(MaskError::BufferSize {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    /// Builds a mask by evaluating `inside(u, v)` at every pixel centre.
    pub fn from_fn(
        width: usize,
        height: usize,
        inside: impl Fn(usize, usize) -> bool,
    ) -> Result<Self, MaskError> {
        let mut m = Self::new(width, height)?;
        for v in 0..height {
            for u in 0..width {
                m.bits[v * width + u] = inside(u, v);
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[v * self.width + u] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Moments of the foreground pixel centres, or `None` for an empty mask.
    pub fn moments(&self) -> Option<MaskMoments> {
        let mut count = 0usize;
        let (mut su, mut sv) = (0.0f64, 0.0f64);
        for (u, v) in self.foreground() {
            count += 1;
            su += u as f64;
            sv += v as f64;
        }
        if count == 0 {
            return None;
        }
        let n = count as f64;
        let centroid = Vector2::new(su / n, sv / n);
        let (mut cuu, mut cuv, mut cvv) = (0.0, 0.0, 0.0);
        for (u, v) in self.foreground() {
            let du = u as f64 - centroid.x;
            let dv = v as f64 - centroid.y;
            cuu += du * du;
            cuv += du * dv;
            cvv += dv * dv;
        }
        Some(MaskMoments {
            count,
            centroid,
            covariance: [cuu / n, cuv / n, cvv / n],
        })
    }

    pub fn full_rect(&self) -> PixelRect {
        PixelRect {
            u0: 0,
            v0: 0,
            u1: self.width - 1,
            v1: self.height - 1,
        }
    }

    /// Smallest rectangle holding every foreground pixel.
    pub fn bounding_rect(&self) -> Option<PixelRect> {
        let mut rect: Option<PixelRect> = None;
        for (u, v) in self.foreground() {
            let p = PixelRect { u0: u, v0: v, u1: u, v1: v };
            rect = Some(rect.map_or(p, |r| r.union(&p)));
        }
        rect
    }

    fn rows_in<'a>(&'a self, r: &PixelRect) -> impl Iterator<Item = (usize, &'a [bool])> + 'a {
        let (u0, u1) = (r.u0.min(self.width - 1), r.u1.min(self.width - 1));
        let (v0, v1) = (r.v0, r.v1.min(self.height - 1));
        (v0..=v1).map(move |v| (v, &self.bits[v * self.width + u0..=v * self.width + u1]))
    }

    /// Foreground count and centroid restricted to `r`.
    pub fn centroid_in(&self, r: &PixelRect) -> (usize, Option<Vector2<f64>>) {
        let (mut n, mut su, mut sv) = (0usize, 0.0f64, 0.0f64);
        for (v, row) in self.rows_in(r) {
            for (i, _) in row.iter().enumerate().filter(|(_, b)| **b) {
                n += 1;
                su += (r.u0 + i) as f64;
                sv += v as f64;
            }
        }
        let c = (n > 0).then(|| Vector2::new(su / n as f64, sv / n as f64));
        (n, c)
    }

    /// Intersection and union pixel counts with `other` inside `r`.
    pub fn overlap_in(&self, other: &Silhouette, r: &PixelRect) -> (usize, usize) {
        let (mut inter, mut union) = (0, 0);
        for ((_, a), (_, b)) in self.rows_in(r).zip(other.rows_in(r)) {
            for (x, y) in a.iter().zip(b) {
                inter += (*x && *y) as usize;
                union += (*x || *y) as usize;
            }
        }
        (inter, union)
    }

    /// Foreground-count of each 8-connected component, largest first, and
    /// the mask restricted to the largest one. Ties keep the component that
    /// appears first in row-major order.
    pub fn largest_component(&self) -> (Silhouette, Vec<usize>) {
        let mut labels = vec![0u32; self.bits.len()];
        let mut sizes: Vec<usize> = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || labels[start] != 0 {
                continue;
            }
            sizes.push(0);
            let label = sizes.len() as u32;
            labels[start] = label;
            stack.push(start);
            while let Some(i) = stack.pop() {
                sizes[label as usize - 1] += 1;
                let (u, v) = ((i % self.width) as isize, (i / self.width) as isize);
                for dv in -1..=1 {
                    for du in -1..=1 {
                        let (nu, nv) = (u + du, v + dv);
                        if nu < 0 || nv < 0 || nu >= self.width as isize || nv >= self.height as isize {
                            continue;
                        }
                        let j = nv as usize * self.width + nu as usize;
                        if self.bits[j] && labels[j] == 0 {
                            labels[j] = label;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        let mut keep = 0u32;
        let mut best = 0usize;
        for (i, &s) in sizes.iter().enumerate() {
            if s > best {
                best = s;
                keep = i as u32 + 1;
            }
        }
        let bits = labels.iter().map(|&l| l != 0 && l == keep).collect();
        let mut sorted = sizes;
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        (
            Silhouette {
                width: self.width,
                height: self.height,
                bits,
            },
            sorted,
        )
    }

    /// Reads an 8-bit PNG; foreground is any pixel with luma above 127.
    pub fn load_png(path: &Path) -> Result<Self, MaskError> {
        let err = |message: String| MaskError::Io {
            path: path.display().to_string(),
            message,
        };
        let img = image::open(path).map_err(|e| err(e.to_string()))?;
        if img.color() != image::ColorType::L8 {
            log::warn!(
                "mask {} is {:?}, expected single-channel 8-bit; converting to luma",
                path.display(),
                img.color()
            );
        }
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        let bits = gray.pixels().map(|p| p.0[0] > 127).collect();
        Self::from_bits(w as usize, h as usize, bits).map_err(|e| err(e.to_string()))
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |u, v| {
            Luma([if self.get(u as usize, v as usize) { 255 } else { 0 }])
        })
    }

    /// Writes the mask as an 8-bit PNG with values 0/255.
    pub fn save_png(&self, path: &Path) -> Result<(), MaskError> {
        let mut buf = Vec::new();
        self.to_gray_image()
            .write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Png)
            .map_err(|e| MaskError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        crate::io::write_atomic(path, &buf).map_err(|e| MaskError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Foreground pixels that touch a background pixel or the raster border.
    pub fn boundary(&self) -> Silhouette {
        let mut out = Silhouette {
            width: self.width,
            height: self.height,
            bits: vec![false; self.bits.len()],
        };
        for (u, v) in self.foreground() {
            let edge = u == 0
                || v == 0
                || u + 1 == self.width
                || v + 1 == self.height
                || !self.get(u - 1, v)
                || !self.get(u + 1, v)
                || !self.get(u, v - 1)
                || !self.get(u, v + 1);
            if edge {
                out.set(u, v, true);
            }
        }
        out
    }
}
