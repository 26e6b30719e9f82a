//! Sparse spatial/temporal similarity graphs and their symmetrically
//! normalized Laplacians `I - W^{-1/2} A W^{-1/2}`.
//!
//! Temporal vertices are frames (columns of `D`) on a line graph; spatial
//! vertices are pixels on the image grid. Each vertex is joined to its
//! nearest neighbours by location, with out-of-range positions mirrored back
//! into range. A mirrored position that lands on the vertex itself is
//! dropped, and duplicate positions collapse to one edge, so border vertices
//! have fewer neighbours.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::videoio::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimilarityKernel {
    /// `exp(-dist^2 / h^2)`.
    Exponential { h: f64 },
    /// Cosine of the angle between the two vectors, clamped below at 0.
    Cosine,
}

impl SimilarityKernel {
    fn validate(&self, name: &'static str) -> Result<()> {
        match *self {
            SimilarityKernel::Exponential { h } if !(h > 0.0 && h.is_finite()) => {
                Err(Error::param(name, format!("filtering parameter must be positive, got {h}")))
            }
            _ => Ok(()),
        }
    }

    fn similarity(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match *self {
            SimilarityKernel::Exponential { h } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                Ok((-d2 / (h * h)).exp())
            }
            SimilarityKernel::Cosine => cosine_similarity(a, b),
        }
    }
}

/// `u.v / (|u| |v|)`, clamped to `[0, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    assert_eq!(u.len(), v.len(), "cosine_similarity of unequal lengths");
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(0.0, 1.0))
}

/// Which vertices are neighbours and how spatial patches are cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborhoodPolicy {
    /// Neighbours on each side of a frame in the temporal line graph. A pixel
    /// gets the same total, `2 * half_width`, spread along the four grid
    /// directions (`half_width / 2` steps each way), so it must be even.
    pub half_width: usize,
    /// Side of the square patch compared between pixels; must be odd.
    pub patch_size: usize,
}

impl Default for NeighborhoodPolicy {
    fn default() -> Self {
        Self {
            half_width: 2,
            patch_size: 3,
        }
    }
}

impl NeighborhoodPolicy {
    fn validate_temporal(&self) -> Result<()> {
        if self.half_width == 0 {
            return Err(Error::param("half_width", "must be at least 1"));
        }
        Ok(())
    }

    fn validate_spatial(&self, height: usize, width: usize) -> Result<()> {
        if self.half_width == 0 || self.half_width % 2 != 0 {
            return Err(Error::param(
                "half_width",
                "spatial neighbourhoods need an even half-width (2 gives the 4 nearest pixels)",
            ));
        }
        if self.patch_size % 2 == 0 {
            return Err(Error::param("patch_size", "must be odd"));
        }
        if self.patch_size > height.min(width) {
            return Err(Error::param(
                "patch_size",
                format!("{} exceeds the frame size {height}x{width}", self.patch_size),
            ));
        }
        Ok(())
    }
}

/// Reflect `i` into `0..len` without repeating the edge sample
/// (`-1 -> 1`, `len -> len - 2`).
pub fn mirror_index(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let k = i.rem_euclid(period);
    (if k < len as i64 { k } else { period - k }) as usize
}

/// Square sparse matrix in compressed sparse row form. Column indices are
/// sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        if let Some(&(r, c, _)) = sorted.iter().find(|&&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::ShapeMismatch(format!("entry ({r}, {c}) outside {dim}x{dim}")));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; dim + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.dim)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.dim, &t).expect("indices already in range")
    }

    pub fn is_symmetric(&self) -> bool {
        self.transpose() == *self
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `self * x` for a dense `dim x k` matrix.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim);
        let mut out = DMatrix::zeros(self.dim, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut oc = out.column_mut(c);
            for i in 0..self.dim {
                oc[i] = self.row(i).map(|(j, v)| v * xc[j]).sum();
            }
        }
        out
    }

    /// `x * self` for a dense `k x dim` matrix, assuming `self` is symmetric
    /// so that column `j` equals row `j`.
    pub fn dense_mul_symmetric(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.ncols(), self.dim);
        let mut out = DMatrix::zeros(x.nrows(), self.dim);
        for j in 0..self.dim {
            let mut oc = out.column_mut(j);
            for (k, v) in self.row(j) {
                oc.axpy(v, &x.column(k), 1.0);
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.triplets() {
            out[(i, j)] = v;
        }
        out
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.dim)
            .map(|i| self.row_ptr[i + 1] - self.row_ptr[i])
            .max()
            .unwrap_or(0)
    }

    /// Text export: header `DGL1 dim nnz`, then one `row col value` line per
    /// stored entry in row-major order. Values use the shortest decimal that
    /// parses back to the same f64.
    pub fn to_triplet_text(&self) -> String {
        let mut s = format!("DGL1 {} {}\n", self.dim, self.nnz());
        for (i, j, v) in self.triplets() {
            writeln!(s, "{i} {j} {v:?}").unwrap();
        }
        s
    }

    pub fn from_triplet_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Config {
            line,
            message: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty triplet file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 || h[0] != "DGL1" {
            return Err(bad(1, "expected header `DGL1 dim nnz`"));
        }
        let dim: usize = h[1].parse().map_err(|_| bad(1, "bad dimension"))?;
        let nnz: usize = h[2].parse().map_err(|_| bad(1, "bad nonzero count"))?;
        let mut triplets = Vec::with_capacity(nnz);
        for (k, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let parse = || -> Option<(usize, usize, f64)> {
                Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?))
            };
            match parse() {
                Some(t) if f.len() == 3 => triplets.push(t),
                _ => return Err(bad(k + 1, "expected `row col value`")),
            }
        }
        if triplets.len() != nnz {
            return Err(bad(1, "nonzero count does not match the number of entries"));
        }
        Self::from_triplets(dim, &triplets)
    }

    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_triplet_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_triplets(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_triplet_text(&text)
    }
}

/// Normalized graph Laplacian with the degree vector it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLaplacian {
    matrix: SparseMatrix,
    degrees: Vec<f64>,
}

impl SparseLaplacian {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    /// The identity, i.e. the Laplacian of an edgeless graph with unit degrees.
    pub fn identity(dim: usize) -> Self {
        let t: Vec<_> = (0..dim).map(|i| (i, i, 1.0)).collect();
        Self {
            matrix: SparseMatrix::from_triplets(dim, &t).unwrap(),
            degrees: vec![1.0; dim],
        }
    }

    /// Wrap an arbitrary symmetric matrix, e.g. a hand-built test operator.
    pub fn from_matrix(matrix: SparseMatrix) -> Result<Self> {
        if !matrix.is_symmetric() {
            return Err(Error::param("laplacian", "must be symmetric"));
        }
        let degrees = vec![1.0; matrix.dim];
        Ok(Self { matrix, degrees })
    }

    /// Largest and smallest eigenvalue estimates by power iteration on `Phi`
    /// and on `2I - Phi` (eigenvalues of a normalized Laplacian lie in
    /// `[0, 2]`).
    pub fn extreme_eigenvalues(&self, iterations: usize) -> (f64, f64) {
        let n = self.dim();
        if n == 0 {
            return (0.0, 0.0);
        }
        let power = |shift: Option<f64>| {
            let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
            let mut lambda = 0.0;
            for _ in 0..iterations {
                let mut y = self.matrix.mul_vec(&x);
                if let Some(s) = shift {
                    for (yi, xi) in y.iter_mut().zip(&x) {
                        *yi = s * xi - *yi;
                    }
                }
                let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return 0.0;
                }
                lambda = y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
                    / x.iter().map(|v| v * v).sum::<f64>();
                x = y.into_iter().map(|v| v / norm).collect();
            }
            lambda
        };
        let max = power(None);
        let min = 2.0 - power(Some(2.0));
        (min, max)
    }
}

/// `I - W^{-1/2} A W^{-1/2}` with `W = diag(row sums of A)`.
pub fn normalized_laplacian(adjacency: &SparseMatrix) -> Result<SparseLaplacian> {
    if let Some((i, j, v)) = adjacency.triplets().into_iter().find(|t| !(t.2 >= 0.0)) {
        return Err(Error::param("adjacency", format!("entry ({i}, {j}) = {v} is negative")));
    }
    if !adjacency.is_symmetric() {
        return Err(Error::param("adjacency", "must be symmetric"));
    }
    let degrees = adjacency.row_sums();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedVertex(i));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets: Vec<(usize, usize, f64)> = (0..adjacency.dim).map(|i| (i, i, 1.0)).collect();
    for (i, j, a) in adjacency.triplets() {
        triplets.push((i, j, -a * (inv_sqrt[i] * inv_sqrt[j])));
    }
    Ok(SparseLaplacian {
        matrix: SparseMatrix::from_triplets(adjacency.dim, &triplets)?,
        degrees,
    })
}

/// Symmetric adjacency from an undirected edge set; each unordered pair is
/// evaluated once and stored in both triangles.
fn adjacency_from_edges(
    dim: usize,
    edges: &BTreeSet<(usize, usize)>,
    mut weight: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<SparseMatrix> {
    let mut triplets = Vec::with_capacity(2 * edges.len());
    for &(i, j) in edges {
        let w = weight(i, j)?;
        triplets.push((i, j, w));
        triplets.push((j, i, w));
    }
    SparseMatrix::from_triplets(dim, &triplets)
}

fn undirected(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// `m x m` frame adjacency: frame `i` is linked to frames `i +- 1 ..= i +- half_width`
/// (mirrored at the ends) with weight given by `kernel` on whole columns.
pub fn temporal_adjacency(
    data: &DataMatrix,
    kernel: SimilarityKernel,
    policy: &NeighborhoodPolicy,
) -> Result<SparseMatrix> {
    kernel.validate("h_t")?;
    policy.validate_temporal()?;
    let m = data.frames();
    if m < 2 {
        return Err(Error::TooFewFrames(m));
    }
    let hw = policy.half_width as i64;
    let mut edges = BTreeSet::new();
    for i in 0..m {
        for off in (-hw..=hw).filter(|&o| o != 0) {
            let j = mirror_index(i as i64 + off, m);
            if j != i {
                edges.insert(undirected(i, j));
            }
        }
    }
    let v = data.values();
    adjacency_from_edges(m, &edges, |i, j| {
        kernel.similarity(v.column(i).as_slice(), v.column(j).as_slice())
    })
}

/// `n x n` pixel adjacency: each pixel is linked to the nearest grid pixels
/// along its row and column (mirrored at the borders), weighted by `kernel`
/// on the `p x p x m` spatiotemporal patches centered at the two pixels.
pub fn spatial_adjacency(
    data: &DataMatrix,
    kernel: SimilarityKernel,
    policy: &NeighborhoodPolicy,
) -> Result<SparseMatrix> {
    kernel.validate("h_s")?;
    let (h, w, m) = data.shape();
    policy.validate_spatial(h, w)?;
    let reach = (policy.half_width / 2) as i64;
    let idx = |r: usize, c: usize| r + c * h;

    let mut edges = BTreeSet::new();
    for c in 0..w {
        for r in 0..h {
            for step in 1..=reach {
                for (dr, dc) in [(-step, 0), (step, 0), (0, -step), (0, step)] {
                    let rr = mirror_index(r as i64 + dr, h);
                    let cc = mirror_index(c as i64 + dc, w);
                    if (rr, cc) != (r, c) {
                        edges.insert(undirected(idx(r, c), idx(rr, cc)));
                    }
                }
            }
        }
    }

    // patches[i] holds pixel i's patch, frame-major, mirrored at the borders
    let half = (policy.patch_size / 2) as i64;
    let v = data.values();
    let patch_len = policy.patch_size * policy.patch_size * m;
    let mut patches = vec![0.0; h * w * patch_len];
    for c in 0..w {
        for r in 0..h {
            let dst = &mut patches[idx(r, c) * patch_len..(idx(r, c) + 1) * patch_len];
            let mut k = 0;
            for t in 0..m {
                let col = v.column(t);
                for dc in -half..=half {
                    let cc = mirror_index(c as i64 + dc, w);
                    for dr in -half..=half {
                        let rr = mirror_index(r as i64 + dr, h);
                        dst[k] = col[idx(rr, cc)];
                        k += 1;
                    }
                }
            }
        }
    }
    let patch = |i: usize| &patches[i * patch_len..(i + 1) * patch_len];
    adjacency_from_edges(h * w, &edges, |i, j| kernel.similarity(patch(i), patch(j)))
}

/// Spatial and temporal Laplacians for one video.
#[derive(Debug, Clone)]
pub struct GraphPair {
    pub spatial: SparseLaplacian,
    pub temporal: SparseLaplacian,
    /// Smallest and largest adjacency weight, spatial then temporal.
    pub spatial_weight_range: (f64, f64),
    pub temporal_weight_range: (f64, f64),
}

pub fn build_graphs(
    data: &DataMatrix,
    spatial_kernel: SimilarityKernel,
    temporal_kernel: SimilarityKernel,
    policy: &NeighborhoodPolicy,
) -> Result<GraphPair> {
    let a_s = spatial_adjacency(data, spatial_kernel, policy)?;
    let a_t = temporal_adjacency(data, temporal_kernel, policy)?;
    let range = |a: &SparseMatrix| {
        a.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    };
    Ok(GraphPair {
        spatial_weight_range: range(&a_s),
        temporal_weight_range: range(&a_t),
        spatial: normalized_laplacian(&a_s)?,
        temporal: normalized_laplacian(&a_t)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(h: usize, w: usize, m: usize, f: impl FnMut(usize, usize) -> f64) -> DataMatrix {
        DataMatrix::new(DMatrix::from_fn(h * w, m, f), h, w).unwrap()
    }

    fn exp1() -> SimilarityKernel {
        SimilarityKernel::Exponential { h: 1.0 }
    }

    #[test]
    fn mirror_reflects_without_repeating_edge() {
        assert_eq!(mirror_index(-1, 5), 1);
        assert_eq!(mirror_index(-2, 5), 2);
        assert_eq!(mirror_index(5, 5), 3);
        assert_eq!(mirror_index(6, 5), 2);
        assert_eq!(mirror_index(3, 5), 3);
        assert_eq!(mirror_index(-3, 2), 1);
        assert_eq!(mirror_index(4, 1), 0);
    }

    #[test]
    fn identical_adjacent_frames_weigh_one() {
        let d = video(2, 2, 3, |i, j| if j < 2 { i as f64 * 0.1 } else { 0.9 });
        let a = temporal_adjacency(&d, exp1(), &NeighborhoodPolicy::default()).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
    }

    #[test]
    fn unit_distance_weighs_inverse_e() {
        let h = 0.7;
        // columns differ by h in one entry
        let d = video(1, 2, 2, |i, j| if i == 0 && j == 1 { h } else { 0.0 });
        let a = temporal_adjacency(&d, SimilarityKernel::Exponential { h }, &NeighborhoodPolicy::default())
            .unwrap();
        assert!((a.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((a.get(0, 1) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn temporal_neighbour_counts() {
        let d = video(1, 1, 5, |_, j| j as f64);
        let a = temporal_adjacency(&d, exp1(), &NeighborhoodPolicy::default()).unwrap();
        let nnz: Vec<usize> = (0..5).map(|i| a.row(i).count()).collect();
        // hand enumeration with mirroring: {1,2}, {0,2,3}, {0,1,3,4}, {1,2,4}, {2,3}
        assert_eq!(nnz, vec![2, 3, 4, 3, 2]);
        assert!((0..5).all(|i| a.get(i, i) == 0.0));
    }

    #[test]
    fn constant_video_spatial_weights_are_one() {
        let d = video(5, 6, 3, |_, _| 0.4);
        let a = spatial_adjacency(&d, exp1(), &NeighborhoodPolicy::default()).unwrap();
        assert!(a.nnz() > 0);
        assert!(a.triplets().iter().all(|t| t.2 == 1.0));
    }

    #[test]
    fn patch_distance_h_gives_inverse_e() {
        // 3x3 frames, 1 frame; pixel 4 (center) and pixel 5 (row 2, col 1)
        let h = 0.5;
        let d = video(3, 3, 1, |i, _| [0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0][i]);
        let policy = NeighborhoodPolicy::default();
        let a = spatial_adjacency(&d, SimilarityKernel::Exponential { h }, &policy).unwrap();
        // brute-force the patch distance with an explicit mirrored copy of the image
        let img = |r: i64, c: i64| d.values()[(mirror_index(r, 3) + 3 * mirror_index(c, 3), 0)];
        let mut d2 = 0.0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let x = img(1 + dr, 1 + dc) - img(2 + dr, 1 + dc);
                d2 += x * x;
            }
        }
        assert!((a.get(4, 5) - (-d2 / (h * h)).exp()).abs() < 1e-15);
        let scaled = SimilarityKernel::Exponential { h: d2.sqrt() };
        let a = spatial_adjacency(&d, scaled, &policy).unwrap();
        assert!((a.get(4, 5) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn corner_pixel_neighbours() {
        let d = video(3, 3, 2, |i, j| (i * 3 + j) as f64 * 0.01);
        let a = spatial_adjacency(&d, exp1(), &NeighborhoodPolicy::default()).unwrap();
        // corner (0,0): up/down both map to row 1, left/right both to col 1
        let cols: Vec<usize> = a.row(0).map(|(j, _)| j).collect();
        assert_eq!(cols, vec![1, 3]);
        assert!(a.row(0).count() <= 4);
        assert_eq!(a.row(4).count(), 4);
    }

    #[test]
    fn oversized_patch_rejected() {
        let d = video(3, 5, 2, |_, _| 0.0);
        let policy = NeighborhoodPolicy {
            half_width: 2,
            patch_size: 5,
        };
        assert!(spatial_adjacency(&d, exp1(), &policy).is_err());
        let even = NeighborhoodPolicy {
            half_width: 2,
            patch_size: 2,
        };
        assert!(spatial_adjacency(&d, exp1(), &even).is_err());
        assert!(spatial_adjacency(&d, SimilarityKernel::Exponential { h: 0.0 }, &NeighborhoodPolicy::default())
            .is_err());
        assert!(temporal_adjacency(&d, SimilarityKernel::Exponential { h: -1.0 }, &NeighborhoodPolicy::default())
            .is_err());
    }

    #[test]
    fn two_node_laplacian() {
        for a in [0.1, 1.0, 7.5] {
            let adj = SparseMatrix::from_triplets(2, &[(0, 1, a), (1, 0, a)]).unwrap();
            let lap = normalized_laplacian(&adj).unwrap();
            let dense = lap.matrix().to_dense();
            let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
            assert!((dense - expected).abs().max() < 1e-15);
        }
    }

    #[test]
    fn star_graph_spectrum() {
        let adj = SparseMatrix::from_triplets(3, &[(0, 1, 1.0), (1, 0, 1.0), (0, 2, 1.0), (2, 0, 1.0)])
            .unwrap();
        let lap = normalized_laplacian(&adj).unwrap();
        let mut eig: Vec<f64> = lap.matrix().to_dense().symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        for (got, want) in eig.iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-8, "{eig:?}");
        }
    }

    #[test]
    fn isolated_vertex_named() {
        let adj = SparseMatrix::from_triplets(3, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(matches!(normalized_laplacian(&adj), Err(Error::IsolatedVertex(2))));
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[1.0, -2.0], &[-1.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn cosine_kernel_graphs() {
        let d = video(4, 4, 3, |i, j| 0.2 + 0.05 * i as f64 + 0.1 * j as f64);
        let g = build_graphs(&d, SimilarityKernel::Cosine, SimilarityKernel::Cosine, &NeighborhoodPolicy::default())
            .unwrap();
        assert!(g.spatial.matrix().is_symmetric());
        assert!(g.spatial_weight_range.1 <= 1.0 && g.spatial_weight_range.0 > 0.0);
        let zero = video(2, 2, 3, |_, j| if j == 1 { 0.0 } else { 1.0 });
        assert!(matches!(
            temporal_adjacency(&zero, SimilarityKernel::Cosine, &NeighborhoodPolicy::default()),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn triplet_text_roundtrip() {
        let d = video(3, 4, 3, |i, j| ((i * 31 + j * 17) % 11) as f64 / 11.0);
        let lap = normalized_laplacian(&spatial_adjacency(&d, exp1(), &NeighborhoodPolicy::default()).unwrap())
            .unwrap();
        let text = lap.matrix().to_triplet_text();
        assert!(text.starts_with(&format!("DGL1 12 {}\n", lap.matrix().nnz())));
        let back = SparseMatrix::from_triplet_text(&text).unwrap();
        assert_eq!(&back, lap.matrix());
        assert_eq!(back.to_triplet_text(), text);
    }

    #[test]
    fn dense_products_match() {
        let d = video(3, 4, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0);
        let g = build_graphs(&d, exp1(), exp1(), &NeighborhoodPolicy::default()).unwrap();
        let x = DMatrix::from_fn(12, 5, |i, j| (i as f64 - j as f64).sin());
        let ps = g.spatial.matrix().to_dense();
        let pt = g.temporal.matrix().to_dense();
        assert!((g.spatial.matrix().mul_dense(&x) - &ps * &x).abs().max() < 1e-14);
        assert!((g.temporal.matrix().dense_mul_symmetric(&x) - &x * &pt).abs().max() < 1e-14);
    }

    #[test]
    fn power_iteration_brackets_spectrum() {
        let d = video(4, 5, 6, |i, j| ((i * 13 + j * 5) % 7) as f64 / 7.0);
        let g = build_graphs(&d, exp1(), exp1(), &NeighborhoodPolicy::default()).unwrap();
        let (lo, hi) = g.spatial.extreme_eigenvalues(2000);
        let eig = g.spatial.matrix().to_dense().symmetric_eigenvalues();
        assert!((hi - eig.max()).abs() < 1e-3);
        assert!((lo - eig.min()).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn laplacians_are_symmetric_psd(
            h in 2usize..6, w in 2usize..6, m in 2usize..6, seed in any::<u64>(), hs in 0.2f64..3.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = video(h, w, m, |_, _| rng.random::<f64>());
            let policy = NeighborhoodPolicy { half_width: 2, patch_size: if h.min(w) >= 3 { 3 } else { 1 } };
            let kernel = SimilarityKernel::Exponential { h: hs };
            let a_s = spatial_adjacency(&d, kernel, &policy).unwrap();
            let a_t = temporal_adjacency(&d, kernel, &policy).unwrap();
            prop_assert!(a_s.max_row_nnz() <= 4 && a_t.max_row_nnz() <= 4);
            for a in [a_s, a_t] {
                prop_assert!(a.is_symmetric());
                let lap = normalized_laplacian(&a).unwrap();
                prop_assert!(lap.matrix().is_symmetric());
                let null: Vec<f64> = lap.degrees().iter().map(|d| d.sqrt()).collect();
                prop_assert!(lap.matrix().mul_vec(&null).iter().all(|v| v.abs() < 1e-10));
                let dense = lap.matrix().to_dense();
                for _ in 0..20 {
                    let x = nalgebra::DVector::from_fn(lap.dim(), |_, _| rng.random_range(-1.0..1.0));
                    let sparse_q: f64 = lap.matrix().mul_vec(x.as_slice()).iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    let dense_q = (x.transpose() * &dense * &x)[(0, 0)];
                    prop_assert!(sparse_q >= -1e-10);
                    prop_assert!((sparse_q - dense_q).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn exponential_kernel_monotone(d1 in 0.0f64..5.0, extra in 0.0f64..5.0, h in 0.1f64..3.0) {
            let k = SimilarityKernel::Exponential { h };
            let near = k.similarity(&[0.0], &[d1]).unwrap();
            let far = k.similarity(&[0.0], &[d1 + extra]).unwrap();
            prop_assert!(far <= near);
            prop_assert!((0.0..=1.0).contains(&near));
        }
    }
}
