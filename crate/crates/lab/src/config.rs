//! INI experiment configuration.
//!
//! Every key has a default; unknown sections or keys are rejected so that
//! typos do not silently fall back to defaults. Trigonometric coefficient
//! lists are comma-separated terms `k:cos:sin` (spatial harmonic `k`) or
//! `j:k:cos:sin` (time harmonic `j`, spatial harmonic `k`), each standing for
//! `cos·cos(2π(jt + kq)) + sin·sin(2π(jt + kq))`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use birkhoff_core::hamiltonian::TonelliHamiltonian;
use birkhoff_core::lax_oleinik::{mane_critical_value, LaxOleinik, PathModel, PotentialSettings};
use birkhoff_core::trig::{TrigSeries, TrigTerm};
use ini::Ini;
use serde_json::{json, Value};

use crate::error::LabError;

/// Horizon (periods) of the critical-value slope fit used when `alpha0 = estimate`.
pub const ESTIMATE_HORIZON: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyName {
    Mechanical,
    ShiftedQuadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    pub family: FamilyName,
    pub kinetic: f64,
    pub potential_coeffs: String,
    pub shift_coeffs: String,
    pub drift: f64,
    pub offset: f64,
}

impl Default for HamiltonianSpec {
    fn default() -> Self {
        Self {
            family: FamilyName::Mechanical,
            kinetic: 1.0,
            potential_coeffs: String::new(),
            shift_coeffs: String::new(),
            drift: 0.0,
            offset: 0.0,
        }
    }
}

impl HamiltonianSpec {
    pub fn build(&self) -> Result<TonelliHamiltonian, LabError> {
        Ok(match self.family {
            FamilyName::Mechanical => {
                TonelliHamiltonian::mechanical(self.kinetic, parse_terms(&self.potential_coeffs)?, self.offset)?
            }
            FamilyName::ShiftedQuadratic => {
                TonelliHamiltonian::shifted_quadratic(parse_terms(&self.shift_coeffs)?, self.drift, self.offset)
            }
        })
    }
}

/// Where a potential on the circle comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSource {
    /// Explicit coefficient list, evaluated at `t = 0`.
    Series(String),
    /// `u*(0, ·)` of a shifted-quadratic family.
    Shift,
}

impl PotentialSource {
    fn parse(text: &str) -> Result<Self, LabError> {
        if text.trim() == "shift" {
            Ok(Self::Shift)
        } else {
            parse_terms(text)?;
            Ok(Self::Series(text.trim().to_string()))
        }
    }

    pub fn series(&self, spec: &HamiltonianSpec) -> Result<TrigSeries, LabError> {
        match self {
            Self::Series(text) => parse_terms(text),
            Self::Shift => {
                if spec.family != FamilyName::ShiftedQuadratic {
                    return Err(LabError::Config(
                        "potential = shift needs family = shifted_quadratic".into(),
                    ));
                }
                parse_terms(&spec.shift_coeffs)
            }
        }
    }

    fn text(&self) -> String {
        match self {
            Self::Series(t) => t.clone(),
            Self::Shift => "shift".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    /// Closed form when the family has one, otherwise [`AlphaChoice::Estimate`].
    Auto,
    /// Slope fit of the grid potentials.
    Estimate,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationSource {
    /// `u = u*` of a shifted-quadratic family.
    Analytic,
    /// Stationary weak-KAM solution from the barrier.
    WeakKam,
    /// Lax-Oleinik evolution of the initial potential.
    Lax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSection {
    pub q0: f64,
    pub p0: f64,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSection {
    /// Signs of the fiber quadratic form, one per axis.
    pub signature: Vec<i8>,
    pub constant: f64,
    /// Perturbation amplitude `w(q)` multiplying `exp(−|ξ|²)`.
    pub coeffs: String,
    pub bump: f64,
    pub half_width: f64,
    pub fiber_resolution: usize,
    pub base_resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSection {
    pub source: CalibrationSource,
    pub t0: f64,
    pub q0: f64,
    pub horizon: f64,
    pub count: u64,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub hamiltonian: HamiltonianSpec,
    pub initial: PotentialSource,
    pub limit: Option<PotentialSource>,
    pub n_max: usize,
    pub m_max: usize,
    pub resolution: usize,
    pub hausdorff_tol: f64,
    pub gauge_tol: f64,
    pub window: usize,
    pub seed: u64,
    pub alpha0: AlphaChoice,
    pub fixed_point_tol: f64,
    pub fixed_point_budget: usize,
    pub invariance_samples: usize,
    pub curve_spacing: f64,
    pub curve_sag: f64,
    pub node_cap: usize,
    pub path_segments: usize,
    /// Midpoint nodes per straight segment; 0 keeps the engine default.
    pub quadrature: usize,
    pub output_dir: PathBuf,
    pub flow: FlowSection,
    pub potential_s: f64,
    pub potential_t: f64,
    pub lax_horizon: f64,
    pub mane_horizon: usize,
    pub barrier_s: f64,
    pub barrier_t: f64,
    pub barrier_n_min: usize,
    pub barrier_n_max: usize,
    pub spectral: SpectralSection,
    pub calibration: CalibrationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let curve = birkhoff_core::curve::EvolveSettings::default();
        Self {
            hamiltonian: HamiltonianSpec::default(),
            initial: PotentialSource::Series(String::new()),
            limit: None,
            n_max: 8,
            m_max: 8,
            resolution: 256,
            hausdorff_tol: 1e-4,
            gauge_tol: 1e-4,
            window: 3,
            seed: 0,
            alpha0: AlphaChoice::Auto,
            fixed_point_tol: 1e-4,
            fixed_point_budget: 256,
            invariance_samples: 8,
            curve_spacing: curve.spacing,
            curve_sag: curve.sag,
            node_cap: curve.node_cap,
            path_segments: 0,
            quadrature: 0,
            output_dir: PathBuf::from("out"),
            flow: FlowSection {
                q0: 0.25,
                p0: 0.5,
                t0: 0.0,
                t1: 1.0,
            },
            potential_s: 0.0,
            potential_t: 1.0,
            lax_horizon: 1.0,
            mane_horizon: 64,
            barrier_s: 0.0,
            barrier_t: 0.0,
            barrier_n_min: 16,
            barrier_n_max: 64,
            spectral: SpectralSection {
                signature: vec![-1, 1],
                constant: 0.0,
                coeffs: String::new(),
                bump: 1.0,
                half_width: 4.0,
                fiber_resolution: 65,
                base_resolution: 64,
            },
            calibration: CalibrationSection {
                source: CalibrationSource::Lax,
                t0: 0.0,
                q0: 0.0,
                horizon: 1.0,
                count: 1000,
                t_max: 2.0,
            },
        }
    }
}

/// Key-value store that hands out each key once and reports leftovers.
struct Raw(BTreeMap<String, BTreeMap<String, String>>);

impl Raw {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.0.get_mut(section).and_then(|s| s.remove(key))
    }

    fn num<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T, LabError> {
        match self.take(section, key) {
            None => Ok(default),
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| LabError::Config(format!("[{section}] {key} = {v:?} is not a valid number"))),
        }
    }

    fn finish(self) -> Result<(), LabError> {
        for (section, keys) in self.0 {
            if let Some(k) = keys.keys().next() {
                return Err(LabError::Config(format!("unknown key [{section}] {k}")));
            }
        }
        Ok(())
    }
}

const SECTIONS: &[&str] = &[
    "hamiltonian",
    "initial",
    "experiment",
    "output",
    "flow",
    "potential",
    "lax",
    "mane",
    "barrier",
    "spectral",
    "calibration",
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LabError> {
        let ini = Ini::load_from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        let mut map: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(LabError::Config("keys outside any section".into()));
                }
                continue;
            };
            if !SECTIONS.contains(&section) {
                return Err(LabError::Config(format!("unknown section [{section}]")));
            }
            let entry = map.entry(section.to_string()).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let mut raw = Raw(map);
        let d = Self::default();

        let family = match raw.take("hamiltonian", "family").as_deref().map(str::trim) {
            None | Some("mechanical") => FamilyName::Mechanical,
            Some("shifted_quadratic") => FamilyName::ShiftedQuadratic,
            Some("custom") => {
                return Err(LabError::Config(
                    "custom Hamiltonians are only available through the library API".into(),
                ))
            }
            Some(other) => return Err(LabError::Config(format!("unknown family {other:?}"))),
        };
        let hamiltonian = HamiltonianSpec {
            family,
            kinetic: raw.num("hamiltonian", "kinetic", 1.0)?,
            potential_coeffs: raw.take("hamiltonian", "potential_coeffs").unwrap_or_default(),
            shift_coeffs: raw.take("hamiltonian", "shift_coeffs").unwrap_or_default(),
            drift: raw.num("hamiltonian", "drift", 0.0)?,
            offset: raw.num("hamiltonian", "offset", 0.0)?,
        };
        parse_terms(&hamiltonian.potential_coeffs)?;
        parse_terms(&hamiltonian.shift_coeffs)?;

        let initial = PotentialSource::parse(&raw.take("initial", "potential").unwrap_or_default())?;
        let limit = raw
            .take("initial", "limit_potential")
            .map(|t| PotentialSource::parse(&t))
            .transpose()?;

        let alpha0 = match raw.take("experiment", "alpha0").as_deref().map(str::trim) {
            None | Some("auto") => AlphaChoice::Auto,
            Some("estimate") => AlphaChoice::Estimate,
            Some(v) => AlphaChoice::Value(
                v.parse()
                    .map_err(|_| LabError::Config(format!("[experiment] alpha0 = {v:?}")))?,
            ),
        };
        let path_segments = match raw.take("lax", "path").as_deref().map(str::trim) {
            None | Some("straight") => 0,
            Some("relaxed") => raw.num("lax", "segments", 8usize)?,
            Some(other) => return Err(LabError::Config(format!("[lax] path = {other:?}"))),
        };

        let signature = match raw.take("spectral", "signature") {
            None => d.spectral.signature.clone(),
            Some(s) => parse_signature(&s)?,
        };
        let source = match raw.take("calibration", "source").as_deref().map(str::trim) {
            None | Some("lax") => CalibrationSource::Lax,
            Some("analytic") => CalibrationSource::Analytic,
            Some("weak_kam") => CalibrationSource::WeakKam,
            Some(other) => return Err(LabError::Config(format!("[calibration] source = {other:?}"))),
        };
        let spectral_coeffs = raw.take("spectral", "coeffs").unwrap_or_default();
        parse_terms(&spectral_coeffs)?;

        let cfg = Self {
            hamiltonian,
            initial,
            limit,
            n_max: raw.num("experiment", "n_max", d.n_max)?,
            m_max: raw.num("experiment", "m_max", d.m_max)?,
            resolution: raw.num("experiment", "resolution", d.resolution)?,
            hausdorff_tol: raw.num("experiment", "hausdorff_tol", d.hausdorff_tol)?,
            gauge_tol: raw.num("experiment", "gauge_tol", d.gauge_tol)?,
            window: raw.num("experiment", "window", d.window)?,
            seed: raw.num("experiment", "seed", d.seed)?,
            alpha0,
            fixed_point_tol: raw.num("experiment", "fixed_point_tol", d.fixed_point_tol)?,
            fixed_point_budget: raw.num("experiment", "fixed_point_budget", d.fixed_point_budget)?,
            invariance_samples: raw.num("experiment", "invariance_samples", d.invariance_samples)?,
            curve_spacing: raw.num("experiment", "curve_spacing", d.curve_spacing)?,
            curve_sag: raw.num("experiment", "curve_sag", d.curve_sag)?,
            node_cap: raw.num("experiment", "node_cap", d.node_cap)?,
            path_segments,
            quadrature: raw.num("lax", "quadrature", d.quadrature)?,
            output_dir: raw.take("output", "dir").map(PathBuf::from).unwrap_or(d.output_dir),
            flow: FlowSection {
                q0: raw.num("flow", "q0", d.flow.q0)?,
                p0: raw.num("flow", "p0", d.flow.p0)?,
                t0: raw.num("flow", "t0", d.flow.t0)?,
                t1: raw.num("flow", "t1", d.flow.t1)?,
            },
            potential_s: raw.num("potential", "s", d.potential_s)?,
            potential_t: raw.num("potential", "t", d.potential_t)?,
            lax_horizon: raw.num("lax", "horizon", d.lax_horizon)?,
            mane_horizon: raw.num("mane", "horizon", d.mane_horizon)?,
            barrier_s: raw.num("barrier", "s", d.barrier_s)?,
            barrier_t: raw.num("barrier", "t", d.barrier_t)?,
            barrier_n_min: raw.num("barrier", "n_min", d.barrier_n_min)?,
            barrier_n_max: raw.num("barrier", "n_max", d.barrier_n_max)?,
            spectral: SpectralSection {
                signature,
                constant: raw.num("spectral", "constant", d.spectral.constant)?,
                coeffs: spectral_coeffs,
                bump: raw.num("spectral", "bump", d.spectral.bump)?,
                half_width: raw.num("spectral", "half_width", d.spectral.half_width)?,
                fiber_resolution: raw.num("spectral", "fiber_resolution", d.spectral.fiber_resolution)?,
                base_resolution: raw.num("spectral", "base_resolution", d.spectral.base_resolution)?,
            },
            calibration: CalibrationSection {
                source,
                t0: raw.num("calibration", "t0", d.calibration.t0)?,
                q0: raw.num("calibration", "q0", d.calibration.q0)?,
                horizon: raw.num("calibration", "horizon", d.calibration.horizon)?,
                count: raw.num("calibration", "count", d.calibration.count)?,
                t_max: raw.num("calibration", "t_max", d.calibration.t_max)?,
            },
        };
        raw.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: &str| Err(LabError::Config(m.to_string()));
        if self.n_max < 1 || self.m_max < 1 {
            return bad("n_max and m_max must be at least 1");
        }
        if !(self.hausdorff_tol > 0.0 && self.gauge_tol > 0.0 && self.fixed_point_tol > 0.0) {
            return bad("thresholds must be positive");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.resolution < birkhoff_core::curve::MIN_NODES {
            return bad("resolution must be at least 16");
        }
        if !(self.curve_spacing > 0.0 && self.curve_sag > 0.0) {
            return bad("curve_spacing and curve_sag must be positive");
        }
        Ok(())
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, resolution: Option<usize>, out: Option<PathBuf>) -> Result<Self, LabError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(n) = resolution {
            self.resolution = n;
        }
        if let Some(o) = out {
            self.output_dir = o;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn initial_series(&self) -> Result<TrigSeries, LabError> {
        self.initial.series(&self.hamiltonian)
    }

    pub fn limit_series(&self) -> Result<Option<TrigSeries>, LabError> {
        self.limit.as_ref().map(|l| l.series(&self.hamiltonian)).transpose()
    }

    pub fn evolve_settings(&self) -> birkhoff_core::curve::EvolveSettings {
        birkhoff_core::curve::EvolveSettings {
            spacing: self.curve_spacing,
            sag: self.curve_sag,
            node_cap: self.node_cap,
            ..Default::default()
        }
    }

    pub fn potential_settings(&self, h: &TonelliHamiltonian) -> PotentialSettings {
        let mut s = PotentialSettings::for_hamiltonian(h);
        if self.quadrature > 0 {
            s.quadrature_nodes = self.quadrature;
        }
        if self.path_segments > 0 {
            s.path = PathModel::Relaxed {
                segments: self.path_segments,
            };
        }
        s
    }

    /// Critical value used to normalise the operators.
    pub fn critical_value(&self, h: &TonelliHamiltonian, engine: &LaxOleinik<'_>) -> Result<f64, LabError> {
        let exact = match self.hamiltonian.family {
            FamilyName::ShiftedQuadratic => Some(self.hamiltonian.offset),
            FamilyName::Mechanical if h.is_autonomous() => h.mechanical_critical_value(),
            FamilyName::Mechanical => None,
        };
        match (self.alpha0, exact) {
            (AlphaChoice::Value(a), _) => Ok(a),
            (AlphaChoice::Auto, Some(a)) => Ok(a),
            _ => Ok(mane_critical_value(engine, ESTIMATE_HORIZON)?.alpha0),
        }
    }

    /// Effective configuration, for the report.
    pub fn echo(&self) -> Value {
        let h = &self.hamiltonian;
        let family = match h.family {
            FamilyName::Mechanical => "mechanical",
            FamilyName::ShiftedQuadratic => "shifted_quadratic",
        };
        let alpha0 = match self.alpha0 {
            AlphaChoice::Auto => json!("auto"),
            AlphaChoice::Estimate => json!("estimate"),
            AlphaChoice::Value(a) => json!(a),
        };
        let source = match self.calibration.source {
            CalibrationSource::Analytic => "analytic",
            CalibrationSource::WeakKam => "weak_kam",
            CalibrationSource::Lax => "lax",
        };
        json!({
            "hamiltonian": {
                "family": family,
                "kinetic": h.kinetic,
                "potential_coeffs": h.potential_coeffs,
                "shift_coeffs": h.shift_coeffs,
                "drift": h.drift,
                "offset": h.offset,
            },
            "initial": {
                "potential": self.initial.text(),
                "limit_potential": self.limit.as_ref().map(|l| l.text()),
            },
            "experiment": {
                "n_max": self.n_max,
                "m_max": self.m_max,
                "resolution": self.resolution,
                "hausdorff_tol": self.hausdorff_tol,
                "gauge_tol": self.gauge_tol,
                "window": self.window,
                "seed": self.seed,
                "alpha0": alpha0,
                "fixed_point_tol": self.fixed_point_tol,
                "fixed_point_budget": self.fixed_point_budget,
                "invariance_samples": self.invariance_samples,
                "curve_spacing": self.curve_spacing,
                "curve_sag": self.curve_sag,
                "node_cap": self.node_cap,
            },
            "output": { "dir": self.output_dir.to_string_lossy() },
            "flow": { "q0": self.flow.q0, "p0": self.flow.p0, "t0": self.flow.t0, "t1": self.flow.t1 },
            "potential": { "s": self.potential_s, "t": self.potential_t },
            "lax": {
                "horizon": self.lax_horizon,
                "path": if self.path_segments > 0 { "relaxed" } else { "straight" },
                "segments": self.path_segments,
                "quadrature": self.quadrature,
            },
            "mane": { "horizon": self.mane_horizon },
            "barrier": {
                "s": self.barrier_s,
                "t": self.barrier_t,
                "n_min": self.barrier_n_min,
                "n_max": self.barrier_n_max,
            },
            "spectral": {
                "signature": signature_text(&self.spectral.signature),
                "constant": self.spectral.constant,
                "coeffs": self.spectral.coeffs,
                "bump": self.spectral.bump,
                "half_width": self.spectral.half_width,
                "fiber_resolution": self.spectral.fiber_resolution,
                "base_resolution": self.spectral.base_resolution,
            },
            "calibration": {
                "source": source,
                "t0": self.calibration.t0,
                "q0": self.calibration.q0,
                "horizon": self.calibration.horizon,
                "count": self.calibration.count,
                "t_max": self.calibration.t_max,
            },
        })
    }
}

/// Parses a coefficient list; the empty list is the zero series.
pub fn parse_terms(text: &str) -> Result<TrigSeries, LabError> {
    let mut terms = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let fields: Vec<&str> = item.split(':').map(str::trim).collect();
        let bad = || LabError::Config(format!("bad trigonometric term {item:?}"));
        let int = |s: &str| s.parse::<i32>().map_err(|_| bad());
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
        terms.push(match fields.as_slice() {
            [k, a, b] => TrigTerm::spatial(int(k)?, real(a)?, real(b)?),
            [j, k, a, b] => TrigTerm::new(int(j)?, int(k)?, real(a)?, real(b)?),
            _ => return Err(bad()),
        });
    }
    Ok(TrigSeries::new(terms)?)
}

fn parse_signature(text: &str) -> Result<Vec<i8>, LabError> {
    let sig: Vec<i8> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "+" => Ok(1),
            "-" => Ok(-1),
            _ => Err(LabError::Config(format!("signature entries are + or -, got {s:?}"))),
        })
        .collect::<Result<_, _>>()?;
    if sig.is_empty() || sig.len() > 2 {
        return Err(LabError::Config("signature needs one or two axes".into()));
    }
    Ok(sig)
}

pub fn signature_text(sig: &[i8]) -> String {
    sig.iter().map(|&s| if s < 0 { "-" } else { "+" }).collect::<Vec<_>>().join(",")
}
