//! Synthetic static-camera videos with exactly known background and masks.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{read_frame, Frame, VideoFrames};
use crate::error::{Error, Result};
use crate::metrics::MaskVolume;

#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    Constant(f64),
    /// Varies linearly across columns from `left` (column 0) to `right`.
    LinearGradient { left: f64, right: f64 },
    ImageFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    /// `size x size` pixels; rows `r - size/2 .. r - size/2 + size`.
    Square,
    /// Pixels within `size / 2` of the center.
    Disk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub background: Background,
    pub object: ObjectKind,
    pub object_intensity: f64,
    /// Zero paints nothing.
    pub object_size: usize,
    /// Object center `(row, col)` for each frame; its length is the frame count.
    pub trajectory: Vec<(i64, i64)>,
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    /// 40x50x30 video: an 8x8 square of intensity 0.9 sweeping diagonally over
    /// a 0.2 -> 0.5 horizontal gradient, so the object is at least 0.4 brighter
    /// than anything it covers.
    fn default() -> Self {
        Self {
            height: 40,
            width: 50,
            background: Background::LinearGradient {
                left: 0.2,
                right: 0.5,
            },
            object: ObjectKind::Square,
            object_intensity: 0.9,
            object_size: 8,
            trajectory: linear_trajectory((12, 4), (28, 42), 30),
            noise_sigma: 0.0,
        }
    }
}

/// `frames` centers evenly spaced (rounded) from `start` to `end`.
pub fn linear_trajectory(start: (i64, i64), end: (i64, i64), frames: usize) -> Vec<(i64, i64)> {
    let lerp = |a: i64, b: i64, j: usize| {
        if frames < 2 {
            return a;
        }
        a + ((b - a) as f64 * j as f64 / (frames - 1) as f64).round() as i64
    };
    (0..frames)
        .map(|j| (lerp(start.0, end.0, j), lerp(start.1, end.1, j)))
        .collect()
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trajectory.is_empty() {
            return Err(Error::param("trajectory", "must contain at least one frame"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::param("height/width", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.object_intensity) {
            return Err(Error::param("object_intensity", "must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::param("noise_sigma", "must be nonnegative"));
        }
        match self.background {
            Background::Constant(v) if !(0.0..=1.0).contains(&v) => {
                Err(Error::param("background", "constant must lie in [0, 1]"))
            }
            Background::LinearGradient { left, right }
                if !(0.0..=1.0).contains(&left) || !(0.0..=1.0).contains(&right) =>
            {
                Err(Error::param("background", "gradient ends must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    fn background_frame(&self) -> Result<Frame> {
        let (h, w) = (self.height, self.width);
        Ok(match &self.background {
            Background::Constant(v) => Frame::from_element(h, w, *v),
            Background::LinearGradient { left, right } => Frame::from_fn(h, w, |_, c| {
                if w == 1 {
                    *left
                } else {
                    left + (right - left) * c as f64 / (w - 1) as f64
                }
            }),
            Background::ImageFile(path) => {
                let img = read_frame(path)?;
                if img.shape() != (h, w) {
                    return Err(Error::ShapeMismatch(format!(
                        "background image is {}x{}, spec asks for {h}x{w}",
                        img.nrows(),
                        img.ncols()
                    )));
                }
                img
            }
        })
    }

    fn covers(&self, center: (i64, i64), r: i64, c: i64) -> bool {
        let s = self.object_size as i64;
        match self.object {
            ObjectKind::Square => {
                let (r0, c0) = (center.0 - s / 2, center.1 - s / 2);
                (r0..r0 + s).contains(&r) && (c0..c0 + s).contains(&c)
            }
            ObjectKind::Disk => {
                let (dr, dc) = ((r - center.0) as f64, (c - center.1) as f64);
                s > 0 && dr * dr + dc * dc <= (s as f64 / 2.0).powi(2)
            }
        }
    }
}

/// Generated video plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub video: VideoFrames,
    pub background: Frame,
    pub masks: MaskVolume,
}

/// Paint the object along its trajectory over the background, clipped at the
/// frame borders, then add seeded Gaussian noise. Noisy frames are clamped to
/// `[0, 1]` so they remain valid frames; masks mark exactly the painted pixels.
pub fn synthesize(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticVideo> {
    spec.validate()?;
    let background = spec.background_frame()?;
    let (h, w, m) = (spec.height, spec.width, spec.trajectory.len());
    let mut masks = MaskVolume::empty(h, w, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).unwrap());
    let mut frames = Vec::with_capacity(m);
    for (j, &center) in spec.trajectory.iter().enumerate() {
        let mut f = background.clone();
        let mask = masks.frame_mut(j);
        for c in 0..w {
            for r in 0..h {
                if spec.covers(center, r as i64, c as i64) {
                    f[(r, c)] = spec.object_intensity;
                    mask[r + c * h] = true;
                }
            }
        }
        if let Some(normal) = &noise {
            for v in f.iter_mut() {
                *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        frames.push(f);
    }
    Ok(SyntheticVideo {
        video: VideoFrames::new(frames)?,
        background,
        masks,
    })
}
