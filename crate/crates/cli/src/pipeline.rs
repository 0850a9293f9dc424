//! Resolution of coupling factors from the configuration and input data.

use std::path::Path;

use dipolewave::focalfield::{
    plane_to_sphere, strehl, Aberration, OpticalConstants, StrehlResult, StrehlSettings,
};
use dipolewave::geometry::{weighted_solid_angle, ApertureSpec};
use dipolewave::modes::{optimize_waist, spatial_overlap, RadialMode, SampledProfile};
use dipolewave::polarimetry::{
    measured_overlap, stokes_from_frames, FrameStack, OverlapOptions, PolarizationMap, StokesGrids,
};
use dipolewave::temporal::{
    aom_response, ideal_envelope, temporal_overlap, AomModel, Histogram, PulseEnvelope, TransitionSpec,
};
use dipolewave::wavefront::{
    make_phase_plate, render, rescale_wavelength, single_pass, zernike_fit, Annulus, PhaseMap, ZernikeExpansion,
    FUSED_SILICA, MISALIGNMENT,
};
use log::{debug, info};

use crate::config::{Factor, ToolkitConfig, TransitionSection};
use crate::error::CliError;

/// A factor value with a description of where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub value: f64,
    pub provenance: String,
}

impl Resolved {
    fn new(value: f64, provenance: impl Into<String>) -> Self {
        Self {
            value,
            provenance: provenance.into(),
        }
    }
}

pub struct Pipeline {
    pub cfg: ToolkitConfig,
    pub aperture: ApertureSpec,
}

impl Pipeline {
    pub fn new(cfg: ToolkitConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let aperture = cfg.aperture()?;
        Ok(Self { cfg, aperture })
    }

    pub fn annulus(&self) -> Result<Annulus, CliError> {
        Ok(Annulus::default().trimmed(self.cfg.analysis.trim_outer)?)
    }

    pub fn omega_fraction(&self) -> Resolved {
        let interval = self.aperture.angle_interval();
        let w = weighted_solid_angle(interval);
        Resolved::new(
            w.fraction,
            format!(
                "dipole-weighted solid angle over [{:.2}°, {:.2}°]",
                interval.theta_min.to_degrees(),
                interval.theta_max.to_degrees()
            ),
        )
    }

    /// Doughnut waist: configured, or the optimum for the aperture.
    pub fn waist(&self) -> Result<(f64, String), CliError> {
        Ok(match self.cfg.analysis.waist {
            Some(w) => (w, format!("configured waist w/f = {w}")),
            None => {
                let opt = optimize_waist(&self.aperture)?;
                (opt.waist, format!("optimal waist w/f = {:.4}", opt.waist))
            }
        })
    }

    pub fn polarization_map(&self, manifest: &Path) -> Result<(StokesGrids, PolarizationMap), CliError> {
        let a = &self.cfg.analysis;
        let scale = a
            .pixel_scale
            .ok_or_else(|| CliError::Config("analysis.pixel_scale is required to reduce frames".into()))?;
        let stack = FrameStack::load(manifest, scale, a.center.map(|c| (c[0], c[1])))?;
        info!("loaded {} frames of {:?} pixels", stack.frames().len(), stack.dim());
        let stokes = stokes_from_frames(&stack)?;
        let map = PolarizationMap::from_stokes(&stokes, scale, stack.center, a.noise_floor)?;
        Ok((stokes, map))
    }

    pub fn overlap_options(&self) -> OverlapOptions {
        OverlapOptions {
            ideal_orientation: self.cfg.analysis.ideal_orientation,
            rectify: self.cfg.analysis.rectify,
        }
    }

    pub fn eta(&self) -> Result<Resolved, CliError> {
        let dipole = RadialMode::dipole();
        let files = &self.cfg.files;
        if let Some(frames) = &files.frames {
            let (_, map) = self.polarization_map(frames)?;
            let eta = measured_overlap(&map, &self.aperture, &dipole, self.overlap_options())?;
            let how = if self.cfg.analysis.rectify { ", rectified" } else { "" };
            return Ok(Resolved::new(eta, format!("measured overlap from {}{how}", frames.display())));
        }
        if let Some(profile) = &files.mode_profile {
            let mode = RadialMode::sampled(SampledProfile::from_file(profile)?);
            let eta = spatial_overlap(&mode, &dipole, &self.aperture)?;
            return Ok(Resolved::new(eta, format!("overlap of profile {}", profile.display())));
        }
        let (w, how) = self.waist()?;
        let eta = spatial_overlap(&RadialMode::doughnut(w)?, &dipole, &self.aperture)?;
        Ok(Resolved::new(eta, format!("doughnut overlap, {how}")))
    }

    fn coating(&self) -> Result<OpticalConstants, CliError> {
        Ok(match &self.cfg.files.optical_constants {
            Some(p) => OpticalConstants::read(p)?,
            None => OpticalConstants::aluminum(),
        })
    }

    /// Mirror phase map in waves at its reference wavelength, prepared per
    /// the analysis flags.
    fn measured_map(&self, path: &Path) -> Result<PhaseMap, CliError> {
        let a = &self.cfg.analysis;
        let mut map = PhaseMap::read(path)?.restricted(self.annulus()?);
        if a.double_pass {
            map = single_pass(&map);
        }
        if a.remove_misalignment {
            let fit = zernike_fit(&map, a.degree, false)?;
            let tilt = fit
                .expansion
                .terms()
                .iter()
                .filter(|t| MISALIGNMENT.contains(&(t.n, t.m)))
                .copied()
                .collect();
            let tilt = render(&ZernikeExpansion::new(tilt, map.lambda_ref_nm)?, map.dim().0)?;
            if tilt.dim() == map.dim() {
                map.values -= &tilt.values;
            } else {
                return Err(CliError::Config("misalignment removal needs a square phase map".into()));
            }
        }
        Ok(map)
    }

    /// Aberrations acting at `lambda_nm`, with a description.
    pub fn aberrations(&self, lambda_nm: f64) -> Result<(Vec<Aberration>, Vec<String>), CliError> {
        let a = &self.cfg.analysis;
        let files = &self.cfg.files;
        let mut out = Vec::new();
        let mut how = Vec::new();
        let plate = |map: &PhaseMap| -> Result<Aberration, CliError> {
            Ok(Aberration::Map(rescale_wavelength(&make_phase_plate(map), lambda_nm, &FUSED_SILICA)?))
        };
        if let Some(path) = &files.zernike {
            let mut e = ZernikeExpansion::read(path)?;
            if a.double_pass {
                e = e.scaled(0.5);
            }
            if a.remove_misalignment {
                e = e.without(&MISALIGNMENT);
            }
            if a.phase_plate {
                out.push(plate(&render(&e, a.grid)?)?);
                how.push(format!("residual of {} behind a plate designed at {} nm", path.display(), e.lambda_ref_nm));
            } else {
                out.push(Aberration::Zernike(e));
                how.push(format!("Zernike aberrations {}", path.display()));
            }
        } else if let Some(path) = &files.phase_map {
            let map = self.measured_map(path)?;
            if a.phase_plate {
                out.push(plate(&map)?);
                how.push(format!("residual of {} behind a plate designed at {} nm", path.display(), map.lambda_ref_nm));
            } else {
                out.push(Aberration::Map(map));
                how.push(format!("phase map {}", path.display()));
            }
        }
        if a.coating_phase {
            let c = self.coating()?;
            how.push(format!("{} phase upon reflection ({})", c.material, c.source));
            out.push(Aberration::Coating(c));
        }
        Ok((out, how))
    }

    pub fn strehl_at(&self, lambda_nm: f64) -> Result<Option<(StrehlResult, String)>, CliError> {
        let (ab, how) = self.aberrations(lambda_nm)?;
        if ab.is_empty() {
            return Ok(None);
        }
        let (w, waist) = self.waist()?;
        let field = plane_to_sphere(&RadialMode::doughnut(w)?, &self.aperture, lambda_nm)?;
        let settings = StrehlSettings {
            tolerance: self.cfg.tolerances.strehl,
            ..StrehlSettings::default()
        };
        let s = strehl(&field, &ab, &settings)?;
        debug!("Strehl at {lambda_nm} nm: {s:?}");
        Ok(Some((s, format!("{}; doughnut {waist}; {lambda_nm} nm", how.join(" + ")))))
    }

    /// Post-modulator envelope for the configured pulse settings.
    pub fn shaped_pulse(&self, spec: &TransitionSpec) -> Result<(PulseEnvelope, PulseEnvelope), CliError> {
        let p = &self.cfg.pulse;
        let ideal = ideal_envelope(spec, p.duration_lifetimes * spec.lifetime_ns, p.bin_width_ns)?;
        let shaped = if p.buildup_ns > 0.0 {
            aom_response(&ideal, &AomModel::new(p.buildup_ns)?)
        } else {
            ideal.clone()
        };
        let shaped = match p.window_ns {
            Some([t0, t1]) => shaped.windowed(t0, t1)?,
            None => shaped,
        };
        Ok((ideal, shaped))
    }

    pub fn eta_t(&self, spec: &TransitionSpec) -> Result<Resolved, CliError> {
        if let Some(path) = &self.cfg.files.histogram {
            let env = Histogram::read(path)?.to_envelope(self.cfg.analysis.reverse_histogram)?;
            let o = temporal_overlap(&env, spec)?;
            return Ok(Resolved::new(o.eta_t, format!("photon histogram {}", path.display())));
        }
        let p = &self.cfg.pulse;
        let (_, shaped) = self.shaped_pulse(spec)?;
        let o = temporal_overlap(&shaped, spec)?;
        let window = p
            .window_ns
            .map(|[t0, t1]| format!(", window [{t0}, {t1}] ns"))
            .unwrap_or_default();
        Ok(Resolved::new(
            o.eta_t,
            format!(
                "modulator model: {} lifetimes, {} ns build-up, {} ns bins{window}",
                p.duration_lifetimes, p.buildup_ns, p.bin_width_ns
            ),
        ))
    }

    /// Resolves one factor of a transition.
    pub fn factor(&self, t: &TransitionSection, name: &'static str) -> Result<Resolved, CliError> {
        let spec = t.spec()?;
        let entry = match name {
            "omega_fraction" => t.omega_fraction,
            "eta" => t.eta,
            "strehl" => t.strehl,
            "eta_t" => t.eta_t,
            _ => unreachable!("unknown factor {name}"),
        };
        let missing = |reason: &str| CliError::MissingFactor {
            transition: t.label.clone(),
            factor: name,
            reason: reason.into(),
        };
        match entry {
            None => Err(missing("neither a value nor \"auto\" is configured")),
            Some(Factor::Value(v)) => Ok(Resolved::new(v, "config")),
            Some(Factor::Auto(_)) => match name {
                "omega_fraction" => Ok(self.omega_fraction()),
                "eta" => self.eta(),
                "strehl" => match self.strehl_at(spec.wavelength_nm)? {
                    Some((s, how)) => Ok(Resolved::new(s.at_peak, how)),
                    None => Err(missing("\"auto\" needs files.zernike, files.phase_map or analysis.coating_phase")),
                },
                _ => self.eta_t(&spec),
            },
        }
    }
}
