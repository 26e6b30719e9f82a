//! The `detect`, `eval`, `synth` and `graph-info` pipelines.
//!
//! Artifacts go to files only and never include timings, so reruns from the
//! emitted `resolved-config.txt` reproduce them byte for byte. Progress and
//! timings go to the log on standard error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;

use super::config::{parse_synth_spec, InputSource, RunConfig};
use crate::error::{Error, Result};
use crate::graph::{build_graphs, GraphPair};
use crate::metrics::{pr_re_fm, psnr, relative_error, threshold_foreground, EvalReport, MaskVolume};
use crate::solver::solve_with_progress;
use crate::videoio::{
    default_motionless_threshold, add_gaussian_noise, ingest_frames, list_frame_files, mean_background_image,
    read_frame, read_mask, read_matrix, remove_motionless_frames, synthesize, to_matrix, write_frame, write_mask,
    write_matrix, DataMatrix, Frame, Scaling, SyntheticSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_INPUT_ERROR: i32 = 2;

pub const RESOLVED_CONFIG: &str = "resolved-config.txt";
pub const BACKGROUND_FILE: &str = "background.dgm";
pub const FOREGROUND_FILE: &str = "foreground.dgm";
pub const MEAN_BACKGROUND_PGM: &str = "background_mean.pgm";
pub const MEAN_BACKGROUND_DGM: &str = "background_mean.dgm";
pub const MASK_DIR: &str = "masks";
pub const PROGRESS_LOG: &str = "progress.log";
pub const KEPT_FRAMES: &str = "kept_frames.txt";
pub const SUMMARY: &str = "summary.txt";
pub const EVAL_REPORT: &str = "eval.txt";
pub const EVAL_CSV: &str = "eval.csv";

/// Exit code for a failed command: divergence counts as non-convergence,
/// everything else as an input or configuration problem.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_INPUT_ERROR,
    }
}

/// Known ground truth for an input, restricted to the kept frames.
#[derive(Debug, Clone, Default)]
pub struct Truth {
    pub background: Option<Frame>,
    pub masks: Option<MaskVolume>,
}

/// Data matrix after noise injection and motionless-frame removal.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub data: DataMatrix,
    /// Original index of each remaining frame.
    pub kept: Vec<usize>,
    pub truth: Truth,
}

fn synth_spec_for(input: &InputSource) -> Result<Option<SyntheticSpec>> {
    match input {
        InputSource::BuiltinSynthetic => Ok(Some(SyntheticSpec::default())),
        InputSource::SynthSpec(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_synth_spec(&text).map(Some)
        }
        _ => Ok(None),
    }
}

/// Read a truth background: a PGM/PNG frame, or a matrix file holding one
/// column (a mean image) or one column per frame (averaged).
pub fn read_truth_background(path: &Path) -> Result<Frame> {
    let is_matrix = path.extension().and_then(|e| e.to_str()) == Some("dgm");
    if is_matrix {
        Ok(mean_background_image(&read_matrix(path)?))
    } else {
        read_frame(path)
    }
}

/// Read one mask image per frame from `dir`, in playback order.
pub fn read_truth_masks(dir: &Path) -> Result<MaskVolume> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let mut frames = Vec::new();
    let mut shape = None;
    for path in list_frame_files(dir)? {
        let (h, w, bits) = read_mask(&path)?;
        match shape {
            None => shape = Some((h, w)),
            Some((h0, w0)) if (h0, w0) != (h, w) => {
                return Err(Error::InconsistentDimensions {
                    index: frames.len(),
                    rows: h0,
                    cols: w0,
                    got_rows: h,
                    got_cols: w,
                })
            }
            _ => {}
        }
        frames.push(bits);
    }
    let Some((h, w)) = shape else {
        return Err(Error::format(dir, "no mask images found"));
    };
    MaskVolume::from_frames(h, w, frames)
}

fn truth_from_config(cfg: &RunConfig, synthetic: Truth) -> Result<Truth> {
    Ok(Truth {
        background: match &cfg.truth_background {
            Some(p) => Some(read_truth_background(p)?),
            None => synthetic.background,
        },
        masks: match &cfg.truth_masks {
            Some(p) => Some(read_truth_masks(p)?),
            None => synthetic.masks,
        },
    })
}

/// Load the configured input and apply the preprocessing steps.
pub fn prepare_input(cfg: &RunConfig) -> Result<PreparedInput> {
    cfg.validate()?;
    let (data, synthetic) = match &cfg.input {
        InputSource::FramesDir(dir) => (to_matrix(&ingest_frames(dir, Scaling::MaxValue)?), Truth::default()),
        InputSource::MatrixFile(path) => (read_matrix(path)?, Truth::default()),
        source => {
            let spec = synth_spec_for(source)?.expect("synthetic source");
            let video = synthesize(&spec, cfg.seed)?;
            let truth = Truth {
                background: Some(video.background),
                masks: Some(video.masks),
            };
            (to_matrix(&video.video), truth)
        }
    };
    let truth = truth_from_config(cfg, synthetic)?;
    if let Some(bg) = &truth.background {
        if bg.shape() != (data.height(), data.width()) {
            return Err(Error::ShapeMismatch(format!(
                "truth background is {}x{}, frames are {}x{}",
                bg.nrows(),
                bg.ncols(),
                data.height(),
                data.width()
            )));
        }
    }
    if let Some(masks) = &truth.masks {
        if masks.shape() != data.shape() {
            return Err(Error::ShapeMismatch(format!(
                "truth masks are {:?}, video is {:?}",
                masks.shape(),
                data.shape()
            )));
        }
    }

    let data = add_gaussian_noise(&data, cfg.noise_sigma, cfg.seed)?;
    let (data, kept) = if cfg.remove_motionless {
        let threshold = cfg
            .motionless_threshold
            .unwrap_or_else(|| default_motionless_threshold(data.pixels()));
        remove_motionless_frames(&data, threshold)?
    } else {
        let m = data.frames();
        (data, (0..m).collect())
    };
    let truth = Truth {
        background: truth.background,
        masks: truth.masks.map(|m| m.select_frames(&kept)),
    };
    Ok(PreparedInput { data, kept, truth })
}

pub fn build_config_graphs(cfg: &RunConfig, data: &DataMatrix) -> Result<GraphPair> {
    build_graphs(
        data,
        cfg.graph.spatial_kernel(),
        cfg.graph.temporal_kernel(),
        &cfg.graph.policy,
    )
}

/// Compare a background/foreground pair against whatever truth is known.
pub fn evaluate(l: &DataMatrix, s: &DataMatrix, truth: &Truth, fg_threshold: f64) -> Result<EvalReport> {
    let Some(bg) = &truth.background else {
        return Err(Error::param("truth_background", "no truth background available"));
    };
    let mean = mean_background_image(l);
    let full_truth = DMatrix::from_fn(l.pixels(), l.frames(), |i, _| bg.as_slice()[i]);
    let foreground = match &truth.masks {
        Some(masks) => Some(pr_re_fm(&threshold_foreground(s, fg_threshold)?, masks)?),
        None => None,
    };
    Ok(EvalReport {
        relative_error: relative_error(&mean, bg)?,
        psnr: psnr(&mean, bg, 1.0)?,
        relative_error_full: Some(relative_error(l.values(), &full_truth)?),
        psnr_full: Some(psnr(l.values(), &full_truth, 1.0)?),
        foreground,
        fg_threshold,
        runtime_seconds: None,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn mask_file_name(original_index: usize) -> String {
    format!("mask_{original_index:05}.pgm")
}

#[derive(Debug, Clone)]
pub struct DetectOutcome {
    /// `None` for a dry run.
    pub converged: Option<bool>,
    pub iterations: usize,
    pub report: Option<EvalReport>,
}

impl DetectOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.converged {
            Some(false) => EXIT_NOT_CONVERGED,
            _ => EXIT_OK,
        }
    }
}

/// Full separation pipeline. With `dry_run` the input is loaded and the
/// graphs are built, but nothing is solved or written.
pub fn cmd_detect(cfg: &RunConfig, dry_run: bool) -> Result<DetectOutcome> {
    let start = Instant::now();
    let input = prepare_input(cfg)?;
    let (h, w, m) = input.data.shape();
    info!("input {h}x{w}, {m} frames kept");
    let graphs = build_config_graphs(cfg, &input.data)?;
    info!(
        "graphs built: spatial nnz {}, temporal nnz {}",
        graphs.spatial.matrix().nnz(),
        graphs.temporal.matrix().nnz()
    );
    if dry_run {
        info!("dry run: configuration valid, nothing written");
        return Ok(DetectOutcome {
            converged: None,
            iterations: 0,
            report: None,
        });
    }

    let out = &cfg.output_dir;
    create_dir(out)?;
    write_text(&out.join(RESOLVED_CONFIG), &cfg.to_config_text())?;

    let mut progress = String::new();
    let result = solve_with_progress(&input.data, &graphs.spatial, &graphs.temporal, &cfg.solver, |rec| {
        info!("{rec}");
        writeln!(progress, "{rec}").unwrap();
    })?;
    info!("solver finished in {:.3} s", result.wall_time.as_secs_f64());
    writeln!(
        progress,
        "converged={} iterations={}",
        result.converged, result.iterations
    )
    .unwrap();
    write_text(&out.join(PROGRESS_LOG), &progress)?;

    write_matrix(&out.join(BACKGROUND_FILE), &result.background)?;
    write_matrix(&out.join(FOREGROUND_FILE), &result.foreground)?;
    let mean = mean_background_image(&result.background);
    write_frame(&out.join(MEAN_BACKGROUND_PGM), &mean)?;
    write_matrix(
        &out.join(MEAN_BACKGROUND_DGM),
        &DataMatrix::new(DMatrix::from_column_slice(h * w, 1, mean.as_slice()), h, w)?,
    )?;
    let masks = threshold_foreground(&result.foreground, cfg.fg_threshold)?;
    let mask_dir = out.join(MASK_DIR);
    create_dir(&mask_dir)?;
    for (j, &orig) in input.kept.iter().enumerate() {
        write_mask(&mask_dir.join(mask_file_name(orig)), h, w, masks.frame(j))?;
    }
    let kept: String = input.kept.iter().map(|k| format!("{k}\n")).collect();
    write_text(&out.join(KEPT_FRAMES), &kept)?;

    let report = match input.truth.background {
        Some(_) => Some(evaluate(&result.background, &result.foreground, &input.truth, cfg.fg_threshold)?),
        None => None,
    };
    let mut summary = format!(
        "converged={}\niterations={}\nfinal_rel_change_l={:e}\nfinal_rel_change_s={:e}\nframes={m}\nheight={h}\nwidth={w}\n",
        result.converged, result.iterations, result.final_rel_change_l, result.final_rel_change_s
    );
    if let Some(r) = &report {
        summary.push_str(&r.to_string());
    }
    write_text(&out.join(SUMMARY), &summary)?;
    info!("detect finished in {:.3} s", start.elapsed().as_secs_f64());
    if !result.converged {
        log::warn!(
            "solver stopped at max_outer={} without meeting tol={:e}",
            cfg.solver.max_outer,
            cfg.solver.tol
        );
    }
    Ok(DetectOutcome {
        converged: Some(result.converged),
        iterations: result.iterations,
        report,
    })
}

/// Evaluate the artifacts of a previous `detect` run in `cfg.output_dir`
/// against the configured truth files (or the synthetic truth).
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let l = read_matrix(&out.join(BACKGROUND_FILE))?;
    let s = read_matrix(&out.join(FOREGROUND_FILE))?;
    let kept_path = out.join(KEPT_FRAMES);
    let kept: Vec<usize> = match fs::read_to_string(&kept_path) {
        Ok(text) => text
            .lines()
            .map(|line| {
                line.trim()
                    .parse()
                    .map_err(|_| Error::format(&kept_path, format!("bad frame index {line:?}")))
            })
            .collect::<Result<_>>()?,
        Err(_) => (0..l.frames()).collect(),
    };
    if kept.len() != l.frames() {
        return Err(Error::ShapeMismatch(format!(
            "{} kept frame indices for {} background frames",
            kept.len(),
            l.frames()
        )));
    }

    let synthetic = match synth_spec_for(&cfg.input)? {
        Some(spec) => {
            let video = synthesize(&spec, cfg.seed)?;
            Truth {
                background: Some(video.background),
                masks: Some(video.masks),
            }
        }
        None => Truth::default(),
    };
    let truth = truth_from_config(cfg, synthetic)?;
    if truth.background.is_none() {
        return Err(Error::param(
            "truth_background",
            "required for eval unless the input is synthetic",
        ));
    }
    let masks = match truth.masks {
        Some(m) if m.shape().2 == l.frames() => Some(m),
        Some(m) if kept.iter().all(|&k| k < m.shape().2) => Some(m.select_frames(&kept)),
        Some(m) => {
            return Err(Error::ShapeMismatch(format!(
                "truth masks have {} frames, kept frame indices go up to {}",
                m.shape().2,
                kept.iter().max().unwrap()
            )))
        }
        None => None,
    };
    let truth = Truth {
        background: truth.background,
        masks,
    };
    let report = evaluate(&l, &s, &truth, cfg.fg_threshold)?;
    write_text(&out.join(EVAL_REPORT), &report.to_string())?;
    write_text(
        &out.join(EVAL_CSV),
        &format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()),
    )?;
    Ok(report)
}

/// Files written by [`cmd_synth`].
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub frames: Vec<PathBuf>,
    pub masks: Vec<PathBuf>,
    pub background: PathBuf,
}

/// Write a synthetic video as 8-bit PGM frames plus its truth: `frames/`,
/// `masks/`, `background.pgm`, and exact copies `video.dgm` and
/// `background.dgm`.
pub fn cmd_synth(spec_path: Option<&Path>, out: &Path, seed: u64) -> Result<SynthOutput> {
    let spec = match spec_path {
        Some(p) => synth_spec_for(&InputSource::SynthSpec(p.to_path_buf()))?.expect("synthetic source"),
        None => SyntheticSpec::default(),
    };
    let video = synthesize(&spec, seed)?;
    let (h, w) = (spec.height, spec.width);
    let (frame_dir, mask_dir) = (out.join("frames"), out.join(MASK_DIR));
    create_dir(&frame_dir)?;
    create_dir(&mask_dir)?;
    let mut result = SynthOutput {
        frames: Vec::new(),
        masks: Vec::new(),
        background: out.join("background.pgm"),
    };
    for (j, f) in video.video.frames().iter().enumerate() {
        let path = frame_dir.join(format!("frame_{j:05}.pgm"));
        write_frame(&path, f)?;
        result.frames.push(path);
        let path = mask_dir.join(mask_file_name(j));
        write_mask(&path, h, w, video.masks.frame(j))?;
        result.masks.push(path);
    }
    write_frame(&result.background, &video.background)?;
    write_matrix(&out.join("video.dgm"), &to_matrix(&video.video))?;
    write_matrix(
        &out.join("background.dgm"),
        &DataMatrix::new(DMatrix::from_column_slice(h * w, 1, video.background.as_slice()), h, w)?,
    )?;
    Ok(result)
}

/// Graph statistics as `key=value` lines.
pub fn graph_info_text(graphs: &GraphPair) -> String {
    let mut out = String::new();
    for (name, lap, range) in [
        ("spatial", &graphs.spatial, graphs.spatial_weight_range),
        ("temporal", &graphs.temporal, graphs.temporal_weight_range),
    ] {
        let deg = lap.degrees();
        let dmin = deg.iter().copied().fold(f64::INFINITY, f64::min);
        let dmax = deg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (emin, emax) = lap.extreme_eigenvalues(500);
        writeln!(out, "{name}_dim={}", lap.dim()).unwrap();
        writeln!(out, "{name}_nnz={}", lap.matrix().nnz()).unwrap();
        writeln!(out, "{name}_min_degree={dmin}").unwrap();
        writeln!(out, "{name}_max_degree={dmax}").unwrap();
        writeln!(out, "{name}_min_similarity={}", range.0).unwrap();
        writeln!(out, "{name}_max_similarity={}", range.1).unwrap();
        writeln!(out, "{name}_eig_min_estimate={emin}").unwrap();
        writeln!(out, "{name}_eig_max_estimate={emax}").unwrap();
    }
    out
}

/// Build both Laplacians for the configured input and describe them. With
/// `export`, also write `phi_s.txt` and `phi_t.txt` triplet files to the
/// output directory.
pub fn cmd_graph_info(cfg: &RunConfig, export: bool) -> Result<(GraphPair, String)> {
    let input = prepare_input(cfg)?;
    let graphs = build_config_graphs(cfg, &input.data)?;
    let text = graph_info_text(&graphs);
    if export {
        create_dir(&cfg.output_dir)?;
        graphs.spatial.matrix().write_triplets(&cfg.output_dir.join("phi_s.txt"))?;
        graphs.temporal.matrix().write_triplets(&cfg.output_dir.join("phi_t.txt"))?;
    }
    Ok((graphs, text))
}
