//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional
//! and may appear at most once; unknown keys are errors. Numbers accept
//! scientific notation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{NeighborhoodPolicy, SimilarityKernel};
use crate::metrics::DEFAULT_FG_THRESHOLD;
use crate::proxops::ErfScale;
use crate::solver::{DualSign, SolverConfig};
use crate::videoio::{linear_trajectory, Background, ObjectKind, SyntheticSpec};

/// Where the video comes from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InputSource {
    /// [`SyntheticSpec::default`].
    #[default]
    BuiltinSynthetic,
    /// Synthetic video described by a spec file (see [`parse_synth_spec`]).
    SynthSpec(PathBuf),
    /// Directory of frame images.
    FramesDir(PathBuf),
    /// Matrix file written by [`crate::videoio::write_matrix`].
    MatrixFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelKind {
    #[default]
    Exponential,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub kernel: KernelKind,
    /// Spatial filtering parameter.
    pub h_s: f64,
    /// Temporal filtering parameter.
    pub h_t: f64,
    pub policy: NeighborhoodPolicy,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Exponential,
            h_s: 1.0,
            h_t: 1.0,
            policy: NeighborhoodPolicy::default(),
        }
    }
}

impl GraphParams {
    pub fn spatial_kernel(&self) -> SimilarityKernel {
        self.kernel_with(self.h_s)
    }

    pub fn temporal_kernel(&self) -> SimilarityKernel {
        self.kernel_with(self.h_t)
    }

    fn kernel_with(&self, h: f64) -> SimilarityKernel {
        match self.kernel {
            KernelKind::Exponential => SimilarityKernel::Exponential { h },
            KernelKind::Cosine => SimilarityKernel::Cosine,
        }
    }
}

/// Named solver parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Exp1,
    Exp2,
    Exp3,
}

impl Preset {
    /// Defaults with `lambda1, lambda2, gamma1, gamma2, rho1, rho2, dt, beta`
    /// replaced by the preset values.
    pub fn solver_config(self) -> SolverConfig {
        let (lambda1, lambda2, gamma1, gamma2, rho1, rho2, dt, beta) = match self {
            Preset::Exp1 => (1e2, 1e-1, 1e-6, 1e-8, 1.0, 1.0, 1e-1, 1.0),
            Preset::Exp2 => (1e-4, 1e-1, 1e-5, 1e5, 1e-3, 1e1, 1e-5, 1.05),
            Preset::Exp3 => (1e5, 1.0, 1e-6, 1e-8, 1e1, 1e-2, 1e-1, 1.0),
        };
        SolverConfig {
            lambda1,
            lambda2,
            gamma1,
            gamma2,
            rho1,
            rho2,
            dt,
            beta,
            ..SolverConfig::default()
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(Preset::Exp1),
            "exp2" => Ok(Preset::Exp2),
            "exp3" => Ok(Preset::Exp3),
            other => Err(Error::param("preset", format!("unknown preset {other:?}, expected exp1, exp2 or exp3"))),
        }
    }
}

/// Everything one `detect` run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputSource,
    pub solver: SolverConfig,
    pub graph: GraphParams,
    pub remove_motionless: bool,
    /// `None` uses [`crate::videoio::default_motionless_threshold`].
    pub motionless_threshold: Option<f64>,
    /// Extra Gaussian noise added to the data matrix; 0 disables.
    pub noise_sigma: f64,
    pub seed: u64,
    pub truth_background: Option<PathBuf>,
    /// Directory of truth mask images, one per input frame.
    pub truth_masks: Option<PathBuf>,
    pub fg_threshold: f64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputSource::default(),
            solver: SolverConfig::default(),
            graph: GraphParams::default(),
            remove_motionless: false,
            motionless_threshold: None,
            noise_sigma: 0.0,
            seed: 0,
            truth_background: None,
            truth_masks: None,
            fg_threshold: DEFAULT_FG_THRESHOLD,
            output_dir: PathBuf::from("dualgraph_out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        for (name, h) in [("h_s", self.graph.h_s), ("h_t", self.graph.h_t)] {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {h}")));
            }
        }
        if let Some(t) = self.motionless_threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::param("motionless_threshold", format!("must be nonnegative, got {t}")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise_sigma", format!("must be nonnegative, got {}", self.noise_sigma)));
        }
        if !(self.fg_threshold >= 0.0 && self.fg_threshold.is_finite()) {
            return Err(Error::param("fg_threshold", format!("must be nonnegative, got {}", self.fg_threshold)));
        }
        Ok(())
    }

    /// Every effective value, in a form [`parse_config_str`] reads back to an
    /// equal config. Floats use the shortest representation that round-trips.
    pub fn to_config_text(&self) -> String {
        let s = &self.solver;
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        match &self.input {
            InputSource::BuiltinSynthetic => put("input", "builtin_synthetic".into()),
            InputSource::SynthSpec(p) => put("synth_spec", p.display().to_string()),
            InputSource::FramesDir(p) => put("frames_dir", p.display().to_string()),
            InputSource::MatrixFile(p) => put("matrix_path", p.display().to_string()),
        }
        put("lambda1", fmt_f64(s.lambda1));
        put("lambda2", fmt_f64(s.lambda2));
        put("gamma1", fmt_f64(s.gamma1));
        put("gamma2", fmt_f64(s.gamma2));
        put("rho1", fmt_f64(s.rho1));
        put("rho2", fmt_f64(s.rho2));
        put("dt", fmt_f64(s.dt));
        put("beta", fmt_f64(s.beta));
        put("lambda2_floor", fmt_f64(s.lambda2_floor));
        put("decay_period", s.decay_period.to_string());
        put(
            "erf_sigma",
            match s.erf_scale {
                ErfScale::Adaptive => "adaptive".into(),
                ErfScale::Fixed(v) => fmt_f64(v),
            },
        );
        put("tol", fmt_f64(s.tol));
        put("max_outer", s.max_outer.to_string());
        put("max_inner", s.max_inner.to_string());
        put(
            "v_sign",
            match s.v_sign {
                DualSign::Printed => "printed".into(),
                DualSign::Corrected => "corrected".into(),
            },
        );
        put("freeze_weights", s.freeze_weights.to_string());
        put(
            "kernel",
            match self.graph.kernel {
                KernelKind::Exponential => "exponential".into(),
                KernelKind::Cosine => "cosine".into(),
            },
        );
        put("h_s", fmt_f64(self.graph.h_s));
        put("h_t", fmt_f64(self.graph.h_t));
        put("patch_size", self.graph.policy.patch_size.to_string());
        put("half_width", self.graph.policy.half_width.to_string());
        put("remove_motionless", self.remove_motionless.to_string());
        put(
            "motionless_threshold",
            self.motionless_threshold.map_or_else(|| "auto".into(), fmt_f64),
        );
        put("noise_sigma", fmt_f64(self.noise_sigma));
        put("seed", self.seed.to_string());
        if let Some(p) = &self.truth_background {
            put("truth_background", p.display().to_string());
        }
        if let Some(p) = &self.truth_masks {
            put("truth_masks", p.display().to_string());
        }
        put("fg_threshold", fmt_f64(self.fg_threshold));
        put("output_dir", self.output_dir.display().to_string());
        out
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Lines of a `key = value` file, keyed by name with their line numbers.
fn lex(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut entries = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got {line:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Config {
                line: line_no,
                message: "empty key".into(),
            });
        }
        if let Some((first, _)) = entries.insert(key.to_string(), (line_no, value.to_string())) {
            return Err(Error::Config {
                line: line_no,
                message: format!("key `{key}` already set on line {first}"),
            });
        }
    }
    Ok(entries)
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.0.remove(key)
    }

    fn parsed<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Config {
                line,
                message: format!("`{key}` expects {what}, got {v:?}"),
            }),
        }
    }

    fn f64(&mut self, key: &str, slot: &mut f64) -> Result<()> {
        if let Some(v) = self.parsed(key, "a number")? {
            *slot = v;
        }
        Ok(())
    }

    fn usize(&mut self, key: &str, slot: &mut usize) -> Result<()> {
        if let Some(v) = self.parsed(key, "a nonnegative integer")? {
            *slot = v;
        }
        Ok(())
    }

    fn bool(&mut self, key: &str, slot: &mut bool) -> Result<()> {
        if let Some(v) = self.parsed(key, "true or false")? {
            *slot = v;
        }
        Ok(())
    }

    fn choice<T>(&mut self, key: &str, options: &[(&str, T)], slot: &mut T) -> Result<()>
    where
        T: Copy,
    {
        if let Some((line, v)) = self.take(key) {
            *slot = options
                .iter()
                .find(|(name, _)| *name == v)
                .map(|(_, t)| *t)
                .ok_or_else(|| Error::Config {
                    line,
                    message: format!(
                        "`{key}` expects one of {}, got {v:?}",
                        options.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                    ),
                })?;
        }
        Ok(())
    }

    fn reject_leftovers(self) -> Result<()> {
        if let Some((key, (line, _))) = self.0.into_iter().min_by_key(|(_, (line, _))| *line) {
            return Err(Error::Config {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, RunConfig::default())
}

/// Apply the keys in `text` on top of `base`, then validate.
pub fn parse_config_str(text: &str, base: RunConfig) -> Result<RunConfig> {
    let mut e = Entries(lex(text)?);
    let mut cfg = base;

    let mut sources = Vec::new();
    if let Some((line, v)) = e.take("input") {
        if v != "builtin_synthetic" {
            return Err(Error::Config {
                line,
                message: format!("`input` only accepts builtin_synthetic, got {v:?}"),
            });
        }
        sources.push((line, InputSource::BuiltinSynthetic));
    }
    if let Some((line, v)) = e.take("synth_spec") {
        sources.push((line, InputSource::SynthSpec(v.into())));
    }
    if let Some((line, v)) = e.take("frames_dir") {
        sources.push((line, InputSource::FramesDir(v.into())));
    }
    if let Some((line, v)) = e.take("matrix_path") {
        sources.push((line, InputSource::MatrixFile(v.into())));
    }
    sources.sort_by_key(|(line, _)| *line);
    match sources.len() {
        0 => {}
        1 => cfg.input = sources.pop().unwrap().1,
        _ => {
            return Err(Error::Config {
                line: sources[1].0,
                message: "more than one input source; set only one of input, synth_spec, frames_dir, matrix_path"
                    .into(),
            })
        }
    }

    let s = &mut cfg.solver;
    e.f64("lambda1", &mut s.lambda1)?;
    e.f64("lambda2", &mut s.lambda2)?;
    e.f64("gamma1", &mut s.gamma1)?;
    e.f64("gamma2", &mut s.gamma2)?;
    e.f64("rho1", &mut s.rho1)?;
    e.f64("rho2", &mut s.rho2)?;
    e.f64("dt", &mut s.dt)?;
    e.f64("beta", &mut s.beta)?;
    e.f64("lambda2_floor", &mut s.lambda2_floor)?;
    e.usize("decay_period", &mut s.decay_period)?;
    if let Some((line, v)) = e.take("erf_sigma") {
        s.erf_scale = if v == "adaptive" {
            ErfScale::Adaptive
        } else {
            ErfScale::Fixed(v.parse().map_err(|_| Error::Config {
                line,
                message: format!("`erf_sigma` expects adaptive or a number, got {v:?}"),
            })?)
        };
    }
    e.f64("tol", &mut s.tol)?;
    e.usize("max_outer", &mut s.max_outer)?;
    e.usize("max_inner", &mut s.max_inner)?;
    e.choice(
        "v_sign",
        &[("printed", DualSign::Printed), ("corrected", DualSign::Corrected)],
        &mut s.v_sign,
    )?;
    e.bool("freeze_weights", &mut s.freeze_weights)?;

    let g = &mut cfg.graph;
    e.choice(
        "kernel",
        &[("exponential", KernelKind::Exponential), ("cosine", KernelKind::Cosine)],
        &mut g.kernel,
    )?;
    e.f64("h_s", &mut g.h_s)?;
    e.f64("h_t", &mut g.h_t)?;
    e.usize("patch_size", &mut g.policy.patch_size)?;
    e.usize("half_width", &mut g.policy.half_width)?;

    e.bool("remove_motionless", &mut cfg.remove_motionless)?;
    if let Some((line, v)) = e.take("motionless_threshold") {
        cfg.motionless_threshold = if v == "auto" {
            None
        } else {
            Some(v.parse().map_err(|_| Error::Config {
                line,
                message: format!("`motionless_threshold` expects auto or a number, got {v:?}"),
            })?)
        };
    }
    e.f64("noise_sigma", &mut cfg.noise_sigma)?;
    if let Some(v) = e.parsed("seed", "a nonnegative integer")? {
        cfg.seed = v;
    }
    if let Some((_, v)) = e.take("truth_background") {
        cfg.truth_background = Some(v.into());
    }
    if let Some((_, v)) = e.take("truth_masks") {
        cfg.truth_masks = Some(v.into());
    }
    e.f64("fg_threshold", &mut cfg.fg_threshold)?;
    if let Some((_, v)) = e.take("output_dir") {
        cfg.output_dir = v.into();
    }
    e.reject_leftovers()?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_pair(line: usize, key: &str, v: &str) -> Result<(i64, i64)> {
    let bad = || Error::Config {
        line,
        message: format!("`{key}` expects `row,col`, got {v:?}"),
    };
    let (a, b) = v.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// Synthetic video description, starting from [`SyntheticSpec::default`].
///
/// Keys: `height`, `width`, `frames`, `background` (`constant:V`,
/// `gradient:LEFT,RIGHT` or `image:PATH`), `object` (`square` or `disk`),
/// `object_intensity`, `object_size`, `start` and `end` (`row,col` centers of
/// a linear trajectory), `noise_sigma`.
pub fn parse_synth_spec(text: &str) -> Result<SyntheticSpec> {
    let mut e = Entries(lex(text)?);
    let mut spec = SyntheticSpec::default();
    let mut start = spec.trajectory[0];
    let mut end = *spec.trajectory.last().unwrap();
    let mut frames = spec.trajectory.len();
    e.usize("height", &mut spec.height)?;
    e.usize("width", &mut spec.width)?;
    e.usize("frames", &mut frames)?;
    if let Some((line, v)) = e.take("background") {
        let bad = |message: String| Error::Config { line, message };
        spec.background = match v.split_once(':') {
            Some(("constant", x)) => Background::Constant(
                x.trim().parse().map_err(|_| bad(format!("bad constant background {x:?}")))?,
            ),
            Some(("gradient", ends)) => {
                let (l, r) = ends
                    .split_once(',')
                    .ok_or_else(|| bad(format!("gradient expects LEFT,RIGHT, got {ends:?}")))?;
                Background::LinearGradient {
                    left: l.trim().parse().map_err(|_| bad(format!("bad gradient end {l:?}")))?,
                    right: r.trim().parse().map_err(|_| bad(format!("bad gradient end {r:?}")))?,
                }
            }
            Some(("image", p)) => Background::ImageFile(PathBuf::from(p.trim())),
            _ => return Err(bad(format!("`background` expects constant:V, gradient:L,R or image:PATH, got {v:?}"))),
        };
    }
    e.choice(
        "object",
        &[("square", ObjectKind::Square), ("disk", ObjectKind::Disk)],
        &mut spec.object,
    )?;
    e.f64("object_intensity", &mut spec.object_intensity)?;
    e.usize("object_size", &mut spec.object_size)?;
    if let Some((line, v)) = e.take("start") {
        start = parse_pair(line, "start", &v)?;
    }
    if let Some((line, v)) = e.take("end") {
        end = parse_pair(line, "end", &v)?;
    }
    e.f64("noise_sigma", &mut spec.noise_sigma)?;
    e.reject_leftovers()?;
    spec.trajectory = linear_trajectory(start, end, frames);
    spec.validate()?;
    Ok(spec)
}
