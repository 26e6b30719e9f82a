//! Background and foreground quality metrics.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::videoio::DataMatrix;

/// PSNR reported when the estimate matches the truth exactly.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Default hard threshold for turning `S` into foreground masks.
pub const DEFAULT_FG_THRESHOLD: f64 = 0.05;

/// Binary `n1 x n2 x m` volume laid out like a [`DataMatrix`]: each frame
/// column-major, frames back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVolume {
    height: usize,
    width: usize,
    frames: usize,
    data: Vec<bool>,
}

impl MaskVolume {
    pub fn empty(height: usize, width: usize, frames: usize) -> Self {
        Self {
            height,
            width,
            frames,
            data: vec![false; height * width * frames],
        }
    }

    pub fn from_frames(height: usize, width: usize, frames: Vec<Vec<bool>>) -> Result<Self> {
        let m = frames.len();
        let mut data = Vec::with_capacity(height * width * m);
        for (j, f) in frames.into_iter().enumerate() {
            if f.len() != height * width {
                return Err(Error::ShapeMismatch(format!(
                    "mask frame {j} has {} pixels, expected {}",
                    f.len(),
                    height * width
                )));
            }
            data.extend(f);
        }
        Ok(Self {
            height,
            width,
            frames: m,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.frames)
    }

    pub fn frame(&self, j: usize) -> &[bool] {
        let n = self.height * self.width;
        &self.data[j * n..(j + 1) * n]
    }

    pub fn frame_mut(&mut self, j: usize) -> &mut [bool] {
        let n = self.height * self.width;
        &mut self.data[j * n..(j + 1) * n]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Keep only the listed frames, in order.
    pub fn select_frames(&self, frames: &[usize]) -> Self {
        let mut data = Vec::with_capacity(frames.len() * self.height * self.width);
        for &j in frames {
            data.extend_from_slice(self.frame(j));
        }
        Self {
            height: self.height,
            width: self.width,
            frames: frames.len(),
            data,
        }
    }
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `||truth - estimate||_F / ||truth||_F`.
pub fn relative_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(estimate, truth)?;
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::param("truth", "relative error needs a nonzero truth"));
    }
    Ok((truth - estimate).norm() / denom)
}

/// Peak signal-to-noise ratio in dB, `20 log10(i_max / rmse)`. The RMSE is
/// taken over all entries; exact matches return [`PSNR_CAP_DB`].
pub fn psnr(estimate: &DMatrix<f64>, truth: &DMatrix<f64>, i_max: f64) -> Result<f64> {
    check_same_shape(estimate, truth)?;
    let sq: f64 = estimate
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if sq == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    let rmse = (sq / estimate.len() as f64).sqrt();
    Ok(20.0 * (i_max / rmse).log10())
}

/// Foreground wherever `|S| > threshold`.
pub fn threshold_foreground(s: &DataMatrix, threshold: f64) -> Result<MaskVolume> {
    if !(threshold >= 0.0) {
        return Err(Error::param("fg_threshold", "must be nonnegative"));
    }
    let (h, w, m) = s.shape();
    Ok(MaskVolume {
        height: h,
        width: w,
        frames: m,
        data: s.values().iter().map(|v| v.abs() > threshold).collect(),
    })
}

/// Precision, recall and F-measure of a predicted mask against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrReFm {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Set when some ratio was 0/0 and reported as 0.
    pub degenerate: bool,
}

pub fn pr_re_fm(predicted: &MaskVolume, truth: &MaskVolume) -> Result<PrReFm> {
    if predicted.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(format!(
            "predicted mask {:?} vs truth {:?}",
            predicted.shape(),
            truth.shape()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in predicted.data.iter().zip(&truth.data) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let precision = ratio(tp as f64, (tp + fp) as f64);
    let recall = ratio(tp as f64, (tp + fn_) as f64);
    // 2PR / (P + R) written in counts, which avoids rounding in P and R
    let f_measure = if precision + recall == 0.0 {
        ratio(0.0, 0.0)
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok(PrReFm {
        precision,
        recall,
        f_measure,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        degenerate,
    })
}

/// Full evaluation of one separation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// RE of the mean background image.
    pub relative_error: f64,
    /// PSNR of the mean background image.
    pub psnr: f64,
    /// RE of the full `L` against the truth background repeated per frame.
    pub relative_error_full: Option<f64>,
    pub psnr_full: Option<f64>,
    pub foreground: Option<PrReFm>,
    pub fg_threshold: f64,
    pub runtime_seconds: Option<f64>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "re,psnr,re_full,psnr_full,precision,recall,f_measure,degenerate,fg_threshold,runtime_s";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let fg = self.foreground;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.relative_error,
            self.psnr,
            opt(self.relative_error_full),
            opt(self.psnr_full),
            opt(fg.map(|f| f.precision)),
            opt(fg.map(|f| f.recall)),
            opt(fg.map(|f| f.f_measure)),
            fg.map(|f| f.degenerate.to_string()).unwrap_or_default(),
            self.fg_threshold,
            opt(self.runtime_seconds),
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "re_mean_background={}", self.relative_error)?;
        writeln!(f, "psnr_mean_background={}", self.psnr)?;
        if let Some(v) = self.relative_error_full {
            writeln!(f, "re_full={v}")?;
        }
        if let Some(v) = self.psnr_full {
            writeln!(f, "psnr_full={v}")?;
        }
        if let Some(fg) = &self.foreground {
            writeln!(f, "precision={}", fg.precision)?;
            writeln!(f, "recall={}", fg.recall)?;
            writeln!(f, "f_measure={}", fg.f_measure)?;
            writeln!(f, "tp={} fp={} fn={}", fg.true_positives, fg.false_positives, fg.false_negatives)?;
            writeln!(f, "degenerate={}", fg.degenerate)?;
        }
        writeln!(f, "fg_threshold={}", self.fg_threshold)?;
        if let Some(t) = self.runtime_seconds {
            writeln!(f, "runtime_s={t}")?;
        }
        Ok(())
    }
}
