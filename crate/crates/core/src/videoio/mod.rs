//! Video ingest, preprocessing and export.
//!
//! Frames are `n1 x n2` matrices with intensities scaled to `[0, 1]`. A video
//! becomes an `n x m` [`DataMatrix`] by stacking each frame in column-major
//! order (down the first image column, then the second, ...), so pixel
//! `(r, c)` of frame `j` lands at row `r + c * n1` of column `j`.

mod matfile;
mod pnm;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub use matfile::{read_matrix, write_matrix};
pub use pnm::{read_frame, read_mask, write_frame, write_mask};
pub use synth::{linear_trajectory, synthesize, Background, ObjectKind, SyntheticSpec, SyntheticVideo};

/// A single grayscale image, `n1` rows by `n2` columns.
pub type Frame = DMatrix<f64>;

/// File name that, when present in a frame directory, lists the frame files
/// in playback order (one per line) instead of the lexicographic default.
pub const MANIFEST_NAME: &str = "manifest.txt";

/// An ordered sequence of equally sized grayscale frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFrames {
    frames: Vec<Frame>,
}

impl VideoFrames {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::TooFewFrames(0));
        };
        let (rows, cols) = first.shape();
        for (index, f) in frames.iter().enumerate() {
            if f.shape() != (rows, cols) {
                return Err(Error::InconsistentDimensions {
                    index,
                    rows,
                    cols,
                    got_rows: f.nrows(),
                    got_cols: f.ncols(),
                });
            }
        }
        Ok(Self { frames })
    }

    pub fn height(&self) -> usize {
        self.frames[0].nrows()
    }

    pub fn width(&self) -> usize {
        self.frames[0].ncols()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}

/// Dense `n x m` video matrix together with the frame shape it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    height: usize,
    width: usize,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, height: usize, width: usize) -> Result<Self> {
        if height * width != values.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows cannot hold {height}x{width} frames",
                values.nrows()
            )));
        }
        Ok(Self {
            values,
            height,
            width,
        })
    }

    pub fn zeros(height: usize, width: usize, frames: usize) -> Self {
        Self {
            values: DMatrix::zeros(height * width, frames),
            height,
            width,
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    /// `(n1, n2, m)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.frames())
    }

    /// Same frame geometry, different values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, self.height, self.width)
    }

    /// Reshape column `j` back into a frame.
    pub fn frame(&self, j: usize) -> Frame {
        Frame::from_column_slice(self.height, self.width, self.values.column(j).as_slice())
    }
}

/// Flatten every frame column-major into one column of a matrix.
pub fn to_matrix(video: &VideoFrames) -> DataMatrix {
    let (h, w, m) = (video.height(), video.width(), video.len());
    let mut values = DMatrix::zeros(h * w, m);
    for (j, f) in video.frames().iter().enumerate() {
        values.column_mut(j).copy_from_slice(f.as_slice());
    }
    DataMatrix {
        values,
        height: h,
        width: w,
    }
}

pub fn from_matrix(data: &DataMatrix) -> VideoFrames {
    VideoFrames {
        frames: (0..data.frames()).map(|j| data.frame(j)).collect(),
    }
}

/// How raw sample values are mapped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    /// Divide by the format's maximum value (255 for 8-bit data).
    #[default]
    MaxValue,
}

/// Read every frame file in `dir` (PGM, PPM or PNG). Files are taken in
/// lexicographic order unless the directory holds a [`MANIFEST_NAME`] file.
pub fn ingest_frames(dir: &Path, scaling: Scaling) -> Result<VideoFrames> {
    let Scaling::MaxValue = scaling;
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let paths = list_frame_files(dir)?;
    if paths.len() < 2 {
        return Err(Error::TooFewFrames(paths.len()));
    }
    let frames = paths
        .iter()
        .map(|p| read_frame(p))
        .collect::<Result<Vec<_>>>()?;
    VideoFrames::new(frames)
}

/// Image files in `dir` in playback order: the [`MANIFEST_NAME`] listing when
/// present, otherwise every PGM, PPM or PNG file sorted by name.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = dir.join(MANIFEST_NAME);
    if manifest.is_file() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        return Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| dir.join(l))
            .collect());
    }
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("pgm" | "ppm" | "png")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Default motionless threshold: a mean per-pixel change of 0.01.
pub fn default_motionless_threshold(pixels: usize) -> f64 {
    0.01 * pixels as f64
}

/// Drop frames whose l1 difference from the last kept frame is below
/// `threshold`. The first frame is always kept. Returns the reduced matrix and,
/// for each output column, the index of the input column it came from.
pub fn remove_motionless_frames(
    data: &DataMatrix,
    threshold: f64,
) -> Result<(DataMatrix, Vec<usize>)> {
    if !(threshold >= 0.0) {
        return Err(Error::param("motionless_threshold", "must be nonnegative"));
    }
    let m = data.frames();
    if m < 2 {
        return Err(Error::TooFewFrames(m));
    }
    let v = data.values();
    let mut kept = vec![0];
    for j in 1..m {
        let last = *kept.last().unwrap();
        let diff: f64 = v
            .column(j)
            .iter()
            .zip(v.column(last).iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        if !(diff < threshold) {
            kept.push(j);
        }
    }
    if kept.len() < 2 {
        return Err(Error::InsufficientMotion {
            kept: kept.len(),
            total: m,
        });
    }
    let values = v.select_columns(kept.iter());
    Ok((data.with_values(values)?, kept))
}

/// Add i.i.d. `N(0, sigma^2)` noise. The result is not clipped to `[0, 1]`.
pub fn add_gaussian_noise(data: &DataMatrix, sigma: f64, seed: u64) -> Result<DataMatrix> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param("noise_sigma", "must be a nonnegative finite number"));
    }
    if sigma == 0.0 {
        return Ok(data.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut out = data.clone();
    for x in out.values_mut().iter_mut() {
        *x += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Mean over all frames of `l`, reshaped to an image.
pub fn mean_background_image(l: &DataMatrix) -> Frame {
    let mean = l.values().column_mean();
    Frame::from_column_slice(l.height(), l.width(), mean.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column_video(cols: &[Vec<f64>]) -> DataMatrix {
        let n = cols[0].len();
        let flat: Vec<f64> = cols.iter().flatten().copied().collect();
        DataMatrix::new(DMatrix::from_column_slice(n, cols.len(), &flat), n, 1).unwrap()
    }

    #[test]
    fn vectorization_is_column_major() {
        let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
        let f = Frame::from_row_slice(2, 2, &[a, b, c, d]);
        let video = VideoFrames::new(vec![f]).unwrap();
        let data = to_matrix(&video);
        assert_eq!(data.values().column(0).as_slice(), &[a, c, b, d]);
        assert_eq!(data.shape(), (2, 2, 1));
    }

    #[test]
    fn frame_count_becomes_column_count() {
        let video = VideoFrames::new(vec![Frame::zeros(3, 4); 7]).unwrap();
        let data = to_matrix(&video);
        assert_eq!(data.frames(), 7);
        assert_eq!(data.pixels(), 12);
    }

    #[test]
    fn mismatched_frames_rejected() {
        let err = VideoFrames::new(vec![Frame::zeros(3, 4), Frame::zeros(4, 3)]).unwrap_err();
        assert!(matches!(err, Error::InconsistentDimensions { index: 1, .. }));
    }

    #[test]
    fn identical_frames_dropped() {
        let data = column_video(&[vec![0.2, 0.4], vec![0.2, 0.4]]);
        let err = remove_motionless_frames(&data, 0.01).unwrap_err();
        assert!(matches!(err, Error::InsufficientMotion { kept: 1, total: 2 }));

        let data = column_video(&[vec![0.2, 0.4], vec![0.2, 0.4], vec![0.9, 0.4]]);
        let (out, kept) = remove_motionless_frames(&data, 0.01).unwrap();
        assert_eq!(kept, vec![0, 2]);
        assert_eq!(out.frames(), 2);
    }

    #[test]
    fn zero_threshold_keeps_everything() {
        let data = column_video(&[vec![0.2], vec![0.2], vec![0.2]]);
        let (out, kept) = remove_motionless_frames(&data, 0.0).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
        assert_eq!(out, data);
    }

    #[test]
    fn small_gap_frame_dropped() {
        // l1 gaps between consecutive frames: 0.5, 0.001, 0.5
        let data = column_video(&[vec![0.0], vec![0.5], vec![0.501], vec![1.001]]);
        let (_, kept) = remove_motionless_frames(&data, 0.01).unwrap();
        assert_eq!(kept, vec![0, 1, 3]);
    }

    #[test]
    fn comparison_is_against_last_kept_frame() {
        // each step moves 0.006, below the threshold, but the drift from the
        // last kept frame eventually exceeds it
        let data = column_video(&[vec![0.0], vec![0.006], vec![0.012], vec![0.018]]);
        let (_, kept) = remove_motionless_frames(&data, 0.01).unwrap();
        assert_eq!(kept, vec![0, 2]);
    }

    #[test]
    fn noise_zero_sigma_is_identity() {
        let data = column_video(&[vec![0.1, 0.2], vec![0.3, 0.4]]);
        assert_eq!(add_gaussian_noise(&data, 0.0, 5).unwrap(), data);
        assert!(add_gaussian_noise(&data, -1.0, 5).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let data = DataMatrix::zeros(4, 5, 3);
        let a = add_gaussian_noise(&data, 0.01, 42).unwrap();
        let b = add_gaussian_noise(&data, 0.01, 42).unwrap();
        let c = add_gaussian_noise(&data, 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_mean_is_near_zero() {
        let sigma = 0.002;
        let data = DataMatrix::new(DMatrix::from_element(1000, 1000, 0.5), 1000, 1).unwrap();
        let noisy = add_gaussian_noise(&data, sigma, 7).unwrap();
        let mean = (noisy.values() - data.values()).mean();
        assert!(mean.abs() < 3.0 * sigma / 1e3, "mean {mean}");
    }

    #[test]
    fn mean_background_of_two_columns() {
        let data = DataMatrix::new(DMatrix::from_column_slice(4, 2, &[0., 1., 2., 3., 2., 3., 4., 5.]), 2, 2)
            .unwrap();
        let bg = mean_background_image(&data);
        assert_eq!(bg, Frame::from_column_slice(2, 2, &[1., 2., 3., 4.]));
    }

    #[test]
    fn mean_background_of_rank_one() {
        let u = nalgebra::DVector::from_vec(vec![0.1, 0.7, 0.3]);
        let l = &u * nalgebra::RowDVector::from_element(5, 1.0);
        let bg = mean_background_image(&DataMatrix::new(l, 3, 1).unwrap());
        for (a, b) in bg.iter().zip(u.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn matrix_roundtrip(h in 1usize..6, w in 1usize..6, m in 1usize..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = (0..m)
                .map(|_| Frame::from_fn(h, w, |_, _| rand::Rng::random::<f64>(&mut rng)))
                .collect();
            let video = VideoFrames::new(frames).unwrap();
            prop_assert_eq!(from_matrix(&to_matrix(&video)), video);
        }

        #[test]
        fn motionless_removal_idempotent(
            cols in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 2..10),
            threshold in 0.0f64..1.0,
        ) {
            let data = column_video(&cols);
            if let Ok((once, _)) = remove_motionless_frames(&data, threshold) {
                let (twice, kept) = remove_motionless_frames(&once, threshold).unwrap();
                prop_assert_eq!(&twice, &once);
                prop_assert_eq!(kept, (0..once.frames()).collect::<Vec<_>>());
            }
        }

        #[test]
        fn mean_background_permutation_invariant(
            cols in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 2..8),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let data = column_video(&cols);
            let mut perm: Vec<usize> = (0..cols.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled = data.with_values(data.values().select_columns(perm.iter())).unwrap();
            let a = mean_background_image(&data);
            let b = mean_background_image(&shuffled);
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
