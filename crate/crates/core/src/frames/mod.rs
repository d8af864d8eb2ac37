//! Frame ingestion and patch partitioning.
//!
//! Frames are 8-bit RGB, row-major. They come from binary PPM (P6) files
//! listed in a JSON manifest, or from the deterministic synthetic
//! generators in [`synth`].

mod ppm;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

pub use ppm::{load_frame, parse_ppm, write_ppm};
pub use synth::{synth_sequence, Scenario};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, index: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("zero-sized frame {width}x{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidFrame(format!(
                "pixel buffer holds {} bytes, {width}x{height} RGB needs {}",
                pixels.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
        })
    }

    /// A frame filled with one color.
    pub fn uniform(width: usize, height: usize, rgb: [u8; 3], index: usize) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels, index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                got_w: self.width,
                got_h: self.height,
            });
        }
        Ok(())
    }
}

/// Partition of a frame into non-overlapping `P x P` patches, indexed row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    rows: usize,
    cols: usize,
}

/// Pixel rectangle `[x0, x0 + size) x [y0, y0 + size)` covered by one patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub x0: usize,
    pub y0: usize,
    pub size: usize,
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 || !width.is_multiple_of(patch_size) || !height.is_multiple_of(patch_size) {
            return Err(Error::NotDivisible {
                width,
                height,
                patch_size,
            });
        }
        Ok(Self {
            patch_size,
            rows: height / patch_size,
            cols: width / patch_size,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn patch_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn width(&self) -> usize {
        self.cols * self.patch_size
    }

    pub fn height(&self) -> usize {
        self.rows * self.patch_size
    }

    /// Pixels per patch, `P^2`.
    pub fn patch_area(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn rect(&self, patch: usize) -> PatchRect {
        debug_assert!(patch < self.patch_count());
        PatchRect {
            x0: (patch % self.cols) * self.patch_size,
            y0: (patch / self.cols) * self.patch_size,
            size: self.patch_size,
        }
    }

    /// Patch index containing pixel `(x, y)`.
    pub fn patch_at(&self, x: usize, y: usize) -> usize {
        (y / self.patch_size) * self.cols + x / self.patch_size
    }

    pub fn matches(&self, frame: &Frame) -> bool {
        frame.width() == self.width() && frame.height() == self.height()
    }

    pub(crate) fn check(&self, frame: &Frame) -> Result<()> {
        frame.check_dims(self.width(), self.height())
    }
}

/// Builds the grid for `frame`, refusing dimensions that `patch_size` does not divide.
pub fn make_grid(frame: &Frame, patch_size: usize) -> Result<PatchGrid> {
    PatchGrid::new(frame.width(), frame.height(), patch_size)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameManifest {
    pub patch_size: usize,
    /// Frame files, already resolved against the manifest's directory.
    pub frames: Vec<PathBuf>,
    /// Declared `(width, height)`, if the manifest carries one.
    pub dims: Option<(usize, usize)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    patch_size: usize,
    frames: Vec<PathBuf>,
    #[serde(default)]
    width: Option<usize>,
    #[serde(default)]
    height: Option<usize>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<FrameManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if raw.patch_size == 0 {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            reason: "patch_size must be positive".into(),
        });
    }
    if raw.frames.is_empty() {
        return Err(Error::EmptyFrameList(path.to_path_buf()));
    }
    let dims = match (raw.width, raw.height) {
        (Some(w), Some(h)) => Some((w, h)),
        (None, None) => None,
        _ => {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                reason: "width and height must be declared together".into(),
            })
        }
    };
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let frames = raw
        .frames
        .into_iter()
        .map(|p| if p.is_absolute() { p } else { base.join(p) })
        .collect();
    Ok(FrameManifest {
        patch_size: raw.patch_size,
        frames,
        dims,
    })
}

impl FrameManifest {
    /// Loads every listed frame in manifest order. All frames must share the
    /// declared dimensions, or those of the first frame when none are declared.
    pub fn load_frames(&self) -> Result<Vec<Frame>> {
        let mut expected = self.dims;
        let mut out = Vec::with_capacity(self.frames.len());
        for (i, path) in self.frames.iter().enumerate() {
            let frame = load_frame(path, expected)?.with_index(i);
            expected.get_or_insert((frame.width(), frame.height()));
            out.push(frame);
        }
        if let Some(first) = out.first() {
            make_grid(first, self.patch_size)?;
        }
        Ok(out)
    }
}
