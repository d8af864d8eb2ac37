//! Deterministic synthetic frame sequences used as benchmark fixtures.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Frame, PatchGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Frame 0 (a seeded texture) repeated verbatim.
    Static,
    /// High-contrast square moving 1 px per frame over a flat background.
    MovingSquare,
    /// I.i.d. uniform RGB per pixel, fresh every frame.
    Noise,
    /// Static textured background with a moving square on top.
    Composite,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Static,
        Scenario::MovingSquare,
        Scenario::Noise,
        Scenario::Composite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::MovingSquare => "moving_square",
            Scenario::Noise => "noise",
            Scenario::Composite => "composite",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s || sc.name().replace('_', "-") == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

const BACKGROUND: [u8; 3] = [96, 96, 96];
const SQUARE: [u8; 3] = [235, 40, 40];

/// Generates `frame_count` frames of `width x height`. Pure in all arguments.
pub fn synth_sequence(
    scenario: Scenario,
    frame_count: usize,
    width: usize,
    height: usize,
    patch_size: usize,
    seed: u64,
) -> Result<Vec<Frame>> {
    if frame_count == 0 {
        return Err(Error::Empty("frame_count must be at least 1"));
    }
    let grid = PatchGrid::new(width, height, patch_size)?;
    let canvas = Canvas { width, height };
    let frames = match scenario {
        Scenario::Static => {
            let base = canvas.cells(seed, 4);
            (0..frame_count).map(|t| base.clone().with_index(t)).collect()
        }
        Scenario::MovingSquare => {
            let bg = Frame::uniform(width, height, BACKGROUND, 0)?;
            let square = Square::for_grid(&grid);
            (0..frame_count)
                .map(|t| square.draw(bg.clone(), t).with_index(t))
                .collect()
        }
        Scenario::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..frame_count)
                .map(|t| {
                    let mut px = vec![0u8; width * height * 3];
                    rng.fill(px.as_mut_slice());
                    Frame::new(width, height, px, t).expect("buffer sized above")
                })
                .collect()
        }
        Scenario::Composite => {
            let bg = canvas.composite_background(&grid, seed);
            let square = Square::for_grid(&grid);
            (0..frame_count)
                .map(|t| square.draw(bg.clone(), t).with_index(t))
                .collect()
        }
    };
    Ok(frames)
}

/// Axis-aligned square sweeping left and right along one patch row,
/// bouncing at the frame edges so every step is exactly 1 px.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Square {
    side: usize,
    y0: usize,
    travel: usize,
}

impl Square {
    pub(crate) fn for_grid(grid: &PatchGrid) -> Self {
        let p = grid.patch_size();
        let side = (p * 3 / 4).max(1);
        let y0 = (grid.rows() / 2) * p + (p - side) / 2;
        Self {
            side,
            y0,
            travel: grid.width() - side,
        }
    }

    pub(crate) fn x0(&self, t: usize) -> usize {
        if self.travel == 0 {
            return 0;
        }
        let phase = t % (2 * self.travel);
        if phase <= self.travel {
            phase
        } else {
            2 * self.travel - phase
        }
    }

    /// Pixels covered by the square at time `t`, as `(x, y)` ranges.
    pub(crate) fn footprint(&self, t: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let x0 = self.x0(t);
        (x0..x0 + self.side, self.y0..self.y0 + self.side)
    }

    fn draw(&self, frame: Frame, t: usize) -> Frame {
        let (xs, ys) = self.footprint(t);
        let w = frame.width();
        let mut px = frame.pixels;
        for y in ys {
            for x in xs.clone() {
                let o = (y * w + x) * 3;
                px[o..o + 3].copy_from_slice(&SQUARE);
            }
        }
        Frame { pixels: px, ..frame }
    }
}

struct Canvas {
    width: usize,
    height: usize,
}

impl Canvas {
    fn paint(&self, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Frame {
        let mut px = Vec::with_capacity(self.width * self.height * 3);
        for y in 0..self.height {
            for x in 0..self.width {
                px.extend_from_slice(&f(x, y));
            }
        }
        Frame::new(self.width, self.height, px, 0).expect("buffer sized above")
    }

    /// Random saturated colors in `cell x cell` blocks covering the whole frame.
    fn cells(&self, seed: u64, cell: usize) -> Frame {
        let cols = self.width.div_ceil(cell);
        let rows = self.height.div_ceil(cell);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let palette: Vec<[u8; 3]> = (0..cols * rows).map(|_| rng.random()).collect();
        self.paint(|x, y| palette[(y / cell) * cols + x / cell])
    }

    /// Per-patch texture map: flat regions, coarse stripes, mid-scale blocks
    /// and a two-hue checker, laid out so every saliency tier occurs.
    fn composite_background(&self, grid: &PatchGrid, seed: u64) -> Frame {
        let p = grid.patch_size();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hues: [[u8; 3]; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
        let cells = self.cells(seed ^ 0x9e37_79b9_7f4a_7c15, (p / 4).max(1));
        let cols = grid.cols();
        let check = (p / 4).max(2);
        self.paint(|x, y| {
            let (r, c) = (y / p, x / p);
            match texture_kind(r, c, grid.rows(), cols) {
                Texture::Flat => BACKGROUND,
                Texture::Stripes => {
                    if (x / (p / 2).max(1)).is_multiple_of(2) {
                        hues[0]
                    } else {
                        hues[1]
                    }
                }
                Texture::Blocks => cells.rgb(x, y),
                Texture::Checker => {
                    if (x / check + y / check).is_multiple_of(2) {
                        [250, 30, 30]
                    } else {
                        [30, 220, 250]
                    }
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Texture {
    Flat,
    Stripes,
    Blocks,
    Checker,
}

fn texture_kind(row: usize, col: usize, rows: usize, cols: usize) -> Texture {
    // left half is flat, right half is textured, texture finer toward the right
    let band = col * 4 / cols.max(1);
    let lower = row * 2 >= rows;
    match (band, lower) {
        (0, _) | (1, _) => Texture::Flat,
        (2, false) => Texture::Stripes,
        (2, true) => Texture::Blocks,
        _ => Texture::Checker,
    }
}
