//! Python bindings. Videos are `(frames, height, width)` float64 arrays,
//! matrices are 2-D float64 arrays.

use std::collections::HashMap;

use nalgebra::DMatrix;
use numpy::ndarray::{Array1, Array2, Array3};
use numpy::{IntoPyArray, PyArray1, PyArray2, PyArray3, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dualgraph::cli::Preset;
use dualgraph::graph::{build_graphs, GraphPair, SimilarityKernel};
use dualgraph::metrics::{self, MaskVolume};
use dualgraph::proxops::{self, ErfScale, WeightVector};
use dualgraph::solver::{self, DualSign};
use dualgraph::videoio::{self, DataMatrix};
use dualgraph::{NeighborhoodPolicy, SparseLaplacian};

fn value_error(e: dualgraph::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_dmatrix(a: &PyReadonlyArray2<'_, f64>) -> DMatrix<f64> {
    let v = a.as_array();
    DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)])
}

fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn video_to_data(video: &PyReadonlyArray3<'_, f64>) -> PyResult<DataMatrix> {
    let v = video.as_array();
    let (m, h, w) = v.dim();
    let values = DMatrix::from_fn(h * w, m, |i, j| v[(j, i % h, i / h)]);
    DataMatrix::new(values, h, w).map_err(value_error)
}

fn data_to_video(d: &DataMatrix) -> Array3<f64> {
    let (h, w, m) = d.shape();
    let v = d.values();
    Array3::from_shape_fn((m, h, w), |(j, r, c)| v[(r + c * h, j)])
}

fn masks_to_array(masks: &MaskVolume) -> Array3<bool> {
    let (h, w, m) = masks.shape();
    Array3::from_shape_fn((m, h, w), |(j, r, c)| masks.frame(j)[r + c * h])
}

fn array_to_masks(a: &PyReadonlyArray3<'_, bool>) -> PyResult<MaskVolume> {
    let v = a.as_array();
    let (m, h, w) = v.dim();
    let frames = (0..m)
        .map(|j| (0..h * w).map(|i| v[(j, i % h, i / h)]).collect())
        .collect();
    MaskVolume::from_frames(h, w, frames).map_err(value_error)
}

/// ADMM solver parameters. Unset keyword arguments keep the library defaults.
#[pyclass(name = "SolverConfig", module = "dualgraph", skip_from_py_object)]
#[derive(Clone)]
struct PySolverConfig {
    inner: solver::SolverConfig,
}

#[pymethods]
impl PySolverConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let mut cfg = Self {
            inner: solver::SolverConfig::default(),
        };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                cfg.set(&key, &v)?;
            }
        }
        cfg.inner.validate().map_err(value_error)?;
        Ok(cfg)
    }

    /// Named parameter set: "exp1", "exp2" or "exp3".
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let p: Preset = name.parse().map_err(value_error)?;
        Ok(Self {
            inner: p.solver_config(),
        })
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let c = &mut self.inner;
        match key {
            "lambda1" => c.lambda1 = value.extract()?,
            "lambda2" => c.lambda2 = value.extract()?,
            "gamma1" => c.gamma1 = value.extract()?,
            "gamma2" => c.gamma2 = value.extract()?,
            "rho1" => c.rho1 = value.extract()?,
            "rho2" => c.rho2 = value.extract()?,
            "dt" => c.dt = value.extract()?,
            "beta" => c.beta = value.extract()?,
            "lambda2_floor" => c.lambda2_floor = value.extract()?,
            "decay_period" => c.decay_period = value.extract()?,
            "tol" => c.tol = value.extract()?,
            "max_outer" => c.max_outer = value.extract()?,
            "max_inner" => c.max_inner = value.extract()?,
            "freeze_weights" => c.freeze_weights = value.extract()?,
            "erf_sigma" => {
                c.erf_scale = match value.extract::<Option<f64>>()? {
                    None => ErfScale::Adaptive,
                    Some(s) => ErfScale::Fixed(s),
                }
            }
            "v_sign" => {
                c.v_sign = match value.extract::<String>()?.as_str() {
                    "printed" => DualSign::Printed,
                    "corrected" => DualSign::Corrected,
                    other => return Err(PyValueError::new_err(format!("v_sign must be printed or corrected, got {other:?}"))),
                }
            }
            other => return Err(PyValueError::new_err(format!("unknown solver parameter {other:?}"))),
        }
        Ok(())
    }

    /// All parameters as a dict.
    fn as_dict(&self) -> HashMap<&'static str, String> {
        let c = &self.inner;
        HashMap::from([
            ("lambda1", c.lambda1.to_string()),
            ("lambda2", c.lambda2.to_string()),
            ("gamma1", c.gamma1.to_string()),
            ("gamma2", c.gamma2.to_string()),
            ("rho1", c.rho1.to_string()),
            ("rho2", c.rho2.to_string()),
            ("dt", c.dt.to_string()),
            ("beta", c.beta.to_string()),
            ("lambda2_floor", c.lambda2_floor.to_string()),
            ("decay_period", c.decay_period.to_string()),
            ("tol", c.tol.to_string()),
            ("max_outer", c.max_outer.to_string()),
            ("max_inner", c.max_inner.to_string()),
            ("freeze_weights", c.freeze_weights.to_string()),
            (
                "erf_sigma",
                match c.erf_scale {
                    ErfScale::Adaptive => "adaptive".to_string(),
                    ErfScale::Fixed(s) => s.to_string(),
                },
            ),
            (
                "v_sign",
                match c.v_sign {
                    DualSign::Printed => "printed".to_string(),
                    DualSign::Corrected => "corrected".to_string(),
                },
            ),
        ])
    }

    #[getter]
    fn lambda1(&self) -> f64 {
        self.inner.lambda1
    }

    #[getter]
    fn lambda2(&self) -> f64 {
        self.inner.lambda2
    }

    #[getter]
    fn gamma1(&self) -> f64 {
        self.inner.gamma1
    }

    #[getter]
    fn gamma2(&self) -> f64 {
        self.inner.gamma2
    }

    #[getter]
    fn max_outer(&self) -> usize {
        self.inner.max_outer
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SolverConfig(lambda1={}, lambda2={}, gamma1={}, gamma2={}, rho1={}, rho2={}, dt={}, beta={})",
            c.lambda1, c.lambda2, c.gamma1, c.gamma2, c.rho1, c.rho2, c.dt, c.beta
        )
    }
}

/// A normalized graph Laplacian in sparse form.
#[pyclass(name = "Laplacian", module = "dualgraph")]
struct PyLaplacian {
    inner: SparseLaplacian,
}

#[pymethods]
impl PyLaplacian {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.matrix().nnz()
    }

    /// Vertex degrees of the underlying adjacency.
    fn degrees<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        Array1::from(self.inner.degrees().to_vec()).into_pyarray(py)
    }

    fn to_dense<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_ndarray(&self.inner.matrix().to_dense()).into_pyarray(py)
    }

    /// `(row, col, value)` entries in row-major order.
    fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.inner.matrix().triplets()
    }

    /// Smallest and largest eigenvalue estimates by power iteration.
    #[pyo3(signature = (iterations = 500))]
    fn extreme_eigenvalues(&self, iterations: usize) -> (f64, f64) {
        self.inner.extreme_eigenvalues(iterations)
    }

    fn __repr__(&self) -> String {
        format!("Laplacian(dim={}, nnz={})", self.dim(), self.nnz())
    }
}

fn kernel(kind: &str, h: f64) -> PyResult<SimilarityKernel> {
    match kind {
        "exponential" => Ok(SimilarityKernel::Exponential { h }),
        "cosine" => Ok(SimilarityKernel::Cosine),
        other => Err(PyValueError::new_err(format!("kernel must be exponential or cosine, got {other:?}"))),
    }
}

fn graphs_for(
    data: &DataMatrix,
    kind: &str,
    h_s: f64,
    h_t: f64,
    patch_size: usize,
    half_width: usize,
) -> PyResult<GraphPair> {
    build_graphs(
        data,
        kernel(kind, h_s)?,
        kernel(kind, h_t)?,
        &NeighborhoodPolicy {
            half_width,
            patch_size,
        },
    )
    .map_err(value_error)
}

/// Spatial and temporal Laplacians of a video.
#[pyfunction]
#[pyo3(signature = (video, kernel = "exponential", h_s = 1.0, h_t = 1.0, patch_size = 3, half_width = 2))]
fn graphs(
    video: PyReadonlyArray3<'_, f64>,
    kernel: &str,
    h_s: f64,
    h_t: f64,
    patch_size: usize,
    half_width: usize,
) -> PyResult<(PyLaplacian, PyLaplacian)> {
    let data = video_to_data(&video)?;
    let g = graphs_for(&data, kernel, h_s, h_t, patch_size, half_width)?;
    Ok((PyLaplacian { inner: g.spatial }, PyLaplacian { inner: g.temporal }))
}

/// Output of [`separate`].
#[pyclass(name = "SeparationResult", module = "dualgraph")]
struct PySeparationResult {
    background: Array3<f64>,
    foreground: Array3<f64>,
    mean_background: Array2<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    wall_time: f64,
    history: solver::History,
}

#[pymethods]
impl PySeparationResult {
    #[getter]
    fn background<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f64>> {
        self.background.clone().into_pyarray(py)
    }

    #[getter]
    fn foreground<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f64>> {
        self.foreground.clone().into_pyarray(py)
    }

    #[getter]
    fn mean_background<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.mean_background.clone().into_pyarray(py)
    }

    /// Per-iteration diagnostics keyed by name.
    #[getter]
    fn history(&self) -> HashMap<&'static str, Vec<f64>> {
        let h = &self.history;
        HashMap::from([
            ("rel_change_l", h.rel_change_l.clone()),
            ("rel_change_s", h.rel_change_s.clone()),
            ("residual_u", h.residual_u.clone()),
            ("residual_v", h.residual_v.clone()),
            ("objective", h.objective.clone()),
            ("lambda2", h.lambda2.clone()),
        ])
    }

    /// Foreground masks `|S| > threshold`, shape `(frames, height, width)`.
    #[pyo3(signature = (threshold = metrics::DEFAULT_FG_THRESHOLD))]
    fn masks<'py>(&self, py: Python<'py>, threshold: f64) -> PyResult<Bound<'py, PyArray3<bool>>> {
        if !(threshold >= 0.0) {
            return Err(PyValueError::new_err("threshold must be nonnegative"));
        }
        Ok(self.foreground.mapv(|v| v.abs() > threshold).into_pyarray(py))
    }

    fn __repr__(&self) -> String {
        format!(
            "SeparationResult(frames={}, iterations={}, converged={})",
            self.background.dim().0,
            self.iterations,
            self.converged
        )
    }
}

/// Split a `(frames, height, width)` video into background and foreground.
#[pyfunction]
#[pyo3(signature = (video, config = None, kernel = "exponential", h_s = 1.0, h_t = 1.0, patch_size = 3, half_width = 2))]
#[allow(clippy::too_many_arguments)]
fn separate(
    py: Python<'_>,
    video: PyReadonlyArray3<'_, f64>,
    config: Option<PyRef<'_, PySolverConfig>>,
    kernel: &str,
    h_s: f64,
    h_t: f64,
    patch_size: usize,
    half_width: usize,
) -> PyResult<PySeparationResult> {
    let data = video_to_data(&video)?;
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let g = graphs_for(&data, kernel, h_s, h_t, patch_size, half_width)?;
    let r = py
        .detach(|| solver::solve(&data, &g.spatial, &g.temporal, &cfg))
        .map_err(value_error)?;
    let mean = videoio::mean_background_image(&r.background);
    Ok(PySeparationResult {
        background: data_to_video(&r.background),
        foreground: data_to_video(&r.foreground),
        mean_background: to_ndarray(&mean),
        iterations: r.iterations,
        converged: r.converged,
        wall_time: r.wall_time.as_secs_f64(),
        history: r.state.history,
    })
}

/// The builtin synthetic benchmark: `(video, background, masks)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, noise_sigma = 0.0))]
fn synthesize<'py>(
    py: Python<'py>,
    seed: u64,
    noise_sigma: f64,
) -> PyResult<(Bound<'py, PyArray3<f64>>, Bound<'py, PyArray2<f64>>, Bound<'py, PyArray3<bool>>)> {
    let spec = videoio::SyntheticSpec {
        noise_sigma,
        ..videoio::SyntheticSpec::default()
    };
    let out = videoio::synthesize(&spec, seed).map_err(value_error)?;
    Ok((
        data_to_video(&videoio::to_matrix(&out.video)).into_pyarray(py),
        to_ndarray(&out.background).into_pyarray(py),
        masks_to_array(&out.masks).into_pyarray(py),
    ))
}

/// Entrywise soft threshold `sign(a) max(|a| - mu, 0)`.
#[pyfunction]
fn shrink<'py>(py: Python<'py>, a: PyReadonlyArray2<'py, f64>, mu: f64) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let out = proxops::shrink(&to_dmatrix(&a), mu).map_err(value_error)?;
    Ok(to_ndarray(&out).into_pyarray(py))
}

/// Proximal map of `tau * sum_i w_i sigma_i`; weights must be nondecreasing in `[0, 1]`.
#[pyfunction]
fn weighted_svt<'py>(
    py: Python<'py>,
    m: PyReadonlyArray2<'py, f64>,
    weights: Vec<f64>,
    tau: f64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let w = WeightVector::new(weights).map_err(value_error)?;
    let out = proxops::weighted_svt(&to_dmatrix(&m), &w, tau).map_err(value_error)?;
    Ok(to_ndarray(&out.matrix).into_pyarray(py))
}

/// `exp(-sigma_i^2 / scale^2)`; `scale=None` uses the mean singular value.
#[pyfunction]
#[pyo3(signature = (singular_values, scale = None))]
fn erf_weights(singular_values: Vec<f64>, scale: Option<f64>) -> PyResult<Vec<f64>> {
    let s = scale.map_or(ErfScale::Adaptive, ErfScale::Fixed);
    Ok(proxops::erf_weights(&singular_values, s).map_err(value_error)?.as_slice().to_vec())
}

#[pyfunction]
fn weighted_nuclear_norm(m: PyReadonlyArray2<'_, f64>, weights: Vec<f64>) -> PyResult<f64> {
    let w = WeightVector::new(weights).map_err(value_error)?;
    proxops::weighted_nuclear_norm(&to_dmatrix(&m), &w).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (estimate, truth, i_max = 1.0))]
fn psnr(estimate: PyReadonlyArray2<'_, f64>, truth: PyReadonlyArray2<'_, f64>, i_max: f64) -> PyResult<f64> {
    metrics::psnr(&to_dmatrix(&estimate), &to_dmatrix(&truth), i_max).map_err(value_error)
}

#[pyfunction]
fn relative_error(estimate: PyReadonlyArray2<'_, f64>, truth: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    metrics::relative_error(&to_dmatrix(&estimate), &to_dmatrix(&truth)).map_err(value_error)
}

/// Precision, recall and F-measure of boolean `(frames, height, width)` masks.
#[pyfunction]
fn pr_re_fm(predicted: PyReadonlyArray3<'_, bool>, truth: PyReadonlyArray3<'_, bool>) -> PyResult<HashMap<&'static str, f64>> {
    let r = metrics::pr_re_fm(&array_to_masks(&predicted)?, &array_to_masks(&truth)?).map_err(value_error)?;
    Ok(HashMap::from([
        ("precision", r.precision),
        ("recall", r.recall),
        ("f_measure", r.f_measure),
        ("true_positives", r.true_positives as f64),
        ("false_positives", r.false_positives as f64),
        ("false_negatives", r.false_negatives as f64),
    ]))
}

/// Mean frame of a `(frames, height, width)` video.
#[pyfunction]
fn mean_background<'py>(py: Python<'py>, video: PyReadonlyArray3<'py, f64>) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let d = video_to_data(&video)?;
    Ok(to_ndarray(&videoio::mean_background_image(&d)).into_pyarray(py))
}

#[pymodule]
#[pyo3(name = "dualgraph")]
fn dualgraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolverConfig>()?;
    m.add_class::<PyLaplacian>()?;
    m.add_class::<PySeparationResult>()?;
    m.add_function(wrap_pyfunction!(separate, m)?)?;
    m.add_function(wrap_pyfunction!(graphs, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(shrink, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_svt, m)?)?;
    m.add_function(wrap_pyfunction!(erf_weights, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_nuclear_norm, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(pr_re_fm, m)?)?;
    m.add_function(wrap_pyfunction!(mean_background, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn video_layout_round_trips() {
        let d = DataMatrix::new(DMatrix::from_fn(6, 4, |i, j| (i * 10 + j) as f64), 2, 3).unwrap();
        let v = data_to_video(&d);
        assert_eq!(v.dim(), (4, 2, 3));
        // pixel (r, c) of frame j sits at row r + c * h
        assert_eq!(v[(3, 1, 2)], d.values()[(1 + 2 * 2, 3)]);
        let m = to_ndarray(d.values());
        assert_eq!(m[(5, 3)], 53.0);
    }
}
