//! Toolkit configuration: a TOML file with one table per concern.
//!
//! ```toml
//! [aperture]
//! focal_length_mm = 2.1
//!
//! [[transition]]
//! label = "T2"
//! wavelength_nm = 251.8
//! lifetime_ns = 230.0
//! omega_fraction = "auto"
//! eta = 0.975
//! strehl = 0.99
//! eta_t = "auto"
//! ```
//!
//! Relative file paths resolve against the directory holding the config.

use std::path::{Path, PathBuf};

use dipolewave::geometry::ApertureSpec;
use dipolewave::polarimetry::DEFAULT_NOISE_FLOOR;
use dipolewave::temporal::TransitionSpec;
use dipolewave::wavefront::{DEFAULT_DEGREE, DEFAULT_GRID};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A coupling factor: a fixed number or computed from the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Factor {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApertureSection {
    pub focal_length_mm: f64,
    pub outer_radius_mm: f64,
    pub bore_radius_mm: f64,
}

impl Default for ApertureSection {
    fn default() -> Self {
        let a = ApertureSpec::default();
        Self {
            focal_length_mm: a.focal_length_mm,
            outer_radius_mm: a.outer_radius_mm,
            bore_radius_mm: a.bore_radius_mm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSection {
    pub label: String,
    pub wavelength_nm: f64,
    pub lifetime_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_fraction: Option<Factor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Factor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strehl: Option<Factor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_t: Option<Factor>,
    #[serde(default = "one")]
    pub branching: f64,
    /// Published absorption probability to compare against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_pa: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl TransitionSection {
    pub fn spec(&self) -> Result<TransitionSpec, CliError> {
        Ok(TransitionSpec::new(self.label.clone(), self.wavelength_nm, self.lifetime_ns)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    /// Pulse length in lifetimes.
    pub duration_lifetimes: f64,
    pub bin_width_ns: f64,
    pub buildup_ns: f64,
    /// `[start, end]` in ns; the modulated envelope is clipped to it before
    /// scoring. The whole response tail is scored if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_ns: Option<[f64; 2]>,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            duration_lifetimes: 5.0,
            bin_width_ns: 0.01,
            buildup_ns: 5.0,
            window_ns: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilesSection {
    /// Wave-plate frame manifest (`filename angle_deg` lines).
    pub frames: Option<PathBuf>,
    /// Sampled entrance-plane profile (`rho amplitude` columns).
    pub mode_profile: Option<PathBuf>,
    /// Zernike expansion of the mirror aberrations.
    pub zernike: Option<PathBuf>,
    /// Gridded phase map of the mirror aberrations.
    pub phase_map: Option<PathBuf>,
    /// Optical constants of the mirror coating.
    pub optical_constants: Option<PathBuf>,
    /// Photon-count histogram (`bin_start_ns counts` columns).
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub rectify: bool,
    pub ideal_orientation: bool,
    pub remove_misalignment: bool,
    pub trim_outer: f64,
    pub noise_floor: f64,
    /// Entrance-plane `ρ` per camera pixel.
    pub pixel_scale: Option<f64>,
    /// Beam axis `[x, y]` in pixels; the intensity centroid if absent.
    pub center: Option<[f64; 2]>,
    pub grid: usize,
    pub degree: u32,
    /// Doughnut waist `w/f`; the optimum if absent.
    pub waist: Option<f64>,
    /// Aberration data are double-pass interferograms.
    pub double_pass: bool,
    /// Evaluate with the compensating phase plate in place.
    pub phase_plate: bool,
    /// Include the coating's phase upon reflection in Strehl ratios.
    pub coating_phase: bool,
    /// Histograms were recorded in start-stop mode (time reversed).
    pub reverse_histogram: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            rectify: false,
            ideal_orientation: false,
            remove_misalignment: true,
            trim_outer: 0.0,
            noise_floor: DEFAULT_NOISE_FLOOR,
            pixel_scale: None,
            center: None,
            grid: DEFAULT_GRID,
            degree: DEFAULT_DEGREE,
            waist: None,
            double_pass: false,
            phase_plate: false,
            coating_phase: false,
            reverse_histogram: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolerancesSection {
    /// Strehl quadrature refinement stops below this change.
    pub strehl: f64,
    /// Largest accepted gap between recomputed and reference `P_a`.
    pub reference_pa: f64,
}

impl Default for TolerancesSection {
    fn default() -> Self {
        Self {
            strehl: 1e-4,
            reference_pa: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    #[serde(default)]
    pub aperture: ApertureSection,
    #[serde(default)]
    pub transition: Vec<TransitionSection>,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub files: FilesSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub tolerances: TolerancesSection,
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        let t = |spec: TransitionSpec| TransitionSection {
            label: spec.label,
            wavelength_nm: spec.wavelength_nm,
            lifetime_ns: spec.lifetime_ns,
            omega_fraction: Some(Factor::Auto(AutoTag::Auto)),
            eta: Some(Factor::Auto(AutoTag::Auto)),
            strehl: None,
            eta_t: Some(Factor::Auto(AutoTag::Auto)),
            branching: 1.0,
            reference_pa: None,
        };
        Self {
            aperture: ApertureSection::default(),
            transition: vec![t(TransitionSpec::t1()), t(TransitionSpec::t2())],
            pulse: PulseSection::default(),
            files: FilesSection::default(),
            analysis: AnalysisSection::default(),
            tolerances: TolerancesSection::default(),
        }
    }
}

impl ToolkitConfig {
    /// Parses and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Core(dipolewave::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.files.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.aperture()?;
        for t in &self.transition {
            t.spec()?;
            if !(0.0..=1.0).contains(&t.branching) {
                return Err(CliError::Config(format!("{}: branching must lie in [0, 1]", t.label)));
            }
            for (name, f) in [
                ("omega_fraction", t.omega_fraction),
                ("eta", t.eta),
                ("strehl", t.strehl),
                ("eta_t", t.eta_t),
            ] {
                if let Some(Factor::Value(v)) = f {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(CliError::Config(format!("{}.{name} = {v} outside [0, 1]", t.label)));
                    }
                }
            }
        }
        let p = &self.pulse;
        if !(p.duration_lifetimes > 0.0 && p.bin_width_ns > 0.0 && p.buildup_ns >= 0.0) {
            return Err(CliError::Config("pulse duration and bin width must be positive, buildup non-negative".into()));
        }
        if p.window_ns.is_some_and(|[t0, t1]| !(t0 < t1)) {
            return Err(CliError::Config("pulse window must have start < end".into()));
        }
        let a = &self.analysis;
        if !(0.0..1.0).contains(&a.trim_outer) {
            return Err(CliError::Config(format!("trim_outer = {} outside [0, 1)", a.trim_outer)));
        }
        if !(0.0..1.0).contains(&a.noise_floor) {
            return Err(CliError::Config(format!("noise_floor = {} outside [0, 1)", a.noise_floor)));
        }
        if a.pixel_scale.is_some_and(|s| !(s > 0.0)) || a.waist.is_some_and(|w| !(w > 0.0)) {
            return Err(CliError::Config("pixel_scale and waist must be positive".into()));
        }
        if a.grid < 3 || a.degree < 2 {
            return Err(CliError::Config("grid must be at least 3 and degree at least 2".into()));
        }
        let t = &self.tolerances;
        if !(t.strehl > 0.0 && t.reference_pa > 0.0) {
            return Err(CliError::Config("tolerances must be positive".into()));
        }
        for path in self.files.paths() {
            if !path.is_file() {
                let source = std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist");
                return Err(dipolewave::Error::Io {
                    path: path.clone(),
                    source,
                }
                .into());
            }
        }
        Ok(())
    }

    pub fn aperture(&self) -> Result<ApertureSpec, CliError> {
        let a = &self.aperture;
        Ok(ApertureSpec::new(a.focal_length_mm, a.outer_radius_mm, a.bore_radius_mm)?)
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl FilesSection {
    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        [
            &self.frames,
            &self.mode_profile,
            &self.zernike,
            &self.phase_map,
            &self.optical_constants,
            &self.histogram,
        ]
        .into_iter()
        .flatten()
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.frames,
            &mut self.mode_profile,
            &mut self.zernike,
            &mut self.phase_map,
            &mut self.optical_constants,
            &mut self.histogram,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
