//! Vectorial focusing by the parabolic mirror in the Debye approximation,
//! Strehl ratios, and the complex reflectivity of the mirror coating.
//!
//! Fields on the focal sphere are described by their `ê_ϑ` and `ê_φ`
//! components. The sphere point at `(ϑ, φ)` lies in the direction
//! `n̂ = (sinϑ cosφ, sinϑ sinφ, −cosϑ)` from the focus; waves travel from the
//! sphere towards the focus, so the focal field is
//!
//! `E(x) = ∬ E_sph(ϑ, φ) e^{iΦ(ϑ, φ)} e^{−i 2π n̂·x} sinϑ dϑ dφ`
//!
//! with `x` in wavelengths. Integration runs over Gauss–Legendre nodes in
//! `cosϑ` and uniform nodes in `φ`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::geometry::{incidence_angle, theta_from_rho, AngleInterval, ApertureSpec};
use crate::io::{self, GridHeader};
use crate::modes::{optimize_waist_with, spatial_overlap_with, OverlapQuadrature, RadialMode, WaistOptimum};
use crate::polarimetry::{missing_fraction, PolarizationMap, MAX_MISSING_FRACTION};
use crate::quadrature::{golden_section_max, GaussRule};
use crate::wavefront::{PhaseMap, ZernikeEvaluator, ZernikeExpansion};
use crate::{Error, Result};

type C64 = Complex64;
type Amplitude = dyn Fn(f64, f64) -> [C64; 2] + Send + Sync;

/// Apodization `sec²(ϑ/2)` from entrance-plane to sphere amplitude.
pub fn apodization(theta: f64) -> f64 {
    let c = (0.5 * theta).cos();
    1.0 / (c * c)
}

/// Field on the focal sphere as `(E_ϑ, E_φ)`.
#[derive(Clone)]
pub struct SphereField {
    amplitude: Arc<Amplitude>,
    pub lambda_nm: f64,
    pub domain: AngleInterval,
    /// Aperture radius `ρ_max`; pupil coordinates are `ρ/ρ_max`.
    pub rho_max: f64,
}

impl fmt::Debug for SphereField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereField")
            .field("lambda_nm", &self.lambda_nm)
            .field("domain", &self.domain)
            .field("rho_max", &self.rho_max)
            .finish_non_exhaustive()
    }
}

impl SphereField {
    pub fn new<F>(amplitude: F, lambda_nm: f64, domain: AngleInterval, rho_max: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> [C64; 2] + Send + Sync + 'static,
    {
        if !(lambda_nm > 0.0) {
            return Err(Error::domain("wavelength must be positive"));
        }
        if domain.theta_max >= PI {
            return Err(Error::domain("sphere domain must end before the axis behind the mirror"));
        }
        Ok(Self {
            amplitude: Arc::new(amplitude),
            lambda_nm,
            domain,
            rho_max,
        })
    }

    /// `(E_ϑ, E_φ)` at a sphere point.
    pub fn amplitude(&self, theta: f64, phi: f64) -> [C64; 2] {
        (self.amplitude)(theta, phi)
    }

    pub fn with_wavelength(&self, lambda_nm: f64) -> Self {
        Self {
            lambda_nm,
            ..self.clone()
        }
    }
}

/// Maps a radially polarized entrance-plane mode onto the focal sphere:
/// `r = 2f tan(ϑ/2)`, amplitude × `sec²(ϑ/2)`, radial → `ê_ϑ`.
pub fn plane_to_sphere(mode: &RadialMode, aperture: &ApertureSpec, lambda_nm: f64) -> Result<SphereField> {
    aperture.validate()?;
    let mode = mode.clone();
    SphereField::new(
        move |theta, _| {
            let rho = 2.0 * (0.5 * theta).tan();
            [C64::new(mode.amplitude(rho) * apodization(theta), 0.0), C64::new(0.0, 0.0)]
        },
        lambda_nm,
        aperture.angle_interval(),
        aperture.rho_max(),
    )
}

/// Maps a measured polarization map onto the focal sphere (nearest pixel).
/// The elliptical Jones vector `cosχ â + i sinχ b̂` along the ellipse axes
/// is projected on the radial and azimuthal directions.
pub fn map_to_sphere(map: &PolarizationMap, aperture: &ApertureSpec, lambda_nm: f64) -> Result<SphereField> {
    aperture.validate()?;
    let missing = missing_fraction(map, aperture);
    if missing > MAX_MISSING_FRACTION {
        return Err(Error::Coverage {
            missing_fraction: missing,
        });
    }
    let map = map.clone();
    let (rows, cols) = map.dim();
    SphereField::new(
        move |theta, phi| {
            let rho = 2.0 * (0.5 * theta).tan();
            let (x, y) = (rho * phi.cos(), rho * phi.sin());
            let j = (map.center.0 + x / map.pixel_scale).round();
            let i = (map.center.1 + y / map.pixel_scale).round();
            if i < 0.0 || j < 0.0 || i >= rows as f64 || j >= cols as f64 {
                return [C64::new(0.0, 0.0); 2];
            }
            let (i, j) = (i as usize, j as usize);
            if !map.mask[[i, j]] {
                return [C64::new(0.0, 0.0); 2];
            }
            let psi = if y >= 0.0 { map.psi[[i, j]] } else { map.psi[[i, j]] + PI };
            let chi = map.chi[[i, j]];
            let amp = map.s0[[i, j]].sqrt() * apodization(theta);
            let (sd, cd) = (psi - phi).sin_cos();
            let (sc, cc) = chi.sin_cos();
            [
                C64::new(amp * cc * cd, -amp * sc * sd),
                C64::new(amp * cc * sd, amp * sc * cd),
            ]
        },
        lambda_nm,
        aperture.angle_interval(),
        aperture.rho_max(),
    )
}

/// Quadrature nodes on the sphere.
#[derive(Debug, Clone)]
pub struct AngularGrid {
    pub theta: Vec<f64>,
    /// Weights for `sinϑ dϑ`.
    pub weights: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: f64,
}

impl AngularGrid {
    pub fn new(domain: AngleInterval, n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_phi == 0 {
            return Err(Error::domain("azimuthal node count must be positive"));
        }
        let rule = GaussRule::new(n_theta, domain.theta_max.cos(), domain.theta_min.cos())?;
        let theta = rule.nodes.iter().map(|u| u.clamp(-1.0, 1.0).acos()).collect();
        let dphi = 2.0 * PI / n_phi as f64;
        Ok(Self {
            theta,
            weights: rule.weights,
            phi: (0..n_phi).map(|k| k as f64 * dphi).collect(),
            dphi,
        })
    }
}

/// Angular node counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FocalQuadrature {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for FocalQuadrature {
    fn default() -> Self {
        Self {
            n_theta: 256,
            n_phi: 256,
        }
    }
}

/// `∬ (|E_ϑ|² + |E_φ|²) sinϑ dϑ dφ`.
pub fn sphere_power(field: &SphereField, quad: FocalQuadrature) -> Result<f64> {
    let g = AngularGrid::new(field.domain, quad.n_theta, quad.n_phi)?;
    let mut p = 0.0;
    for (&t, &w) in g.theta.iter().zip(&g.weights) {
        let ring: f64 = g
            .phi
            .iter()
            .map(|&ph| {
                let [a, b] = field.amplitude(t, ph);
                a.norm_sqr() + b.norm_sqr()
            })
            .sum();
        p += w * ring * g.dphi;
    }
    Ok(p)
}

/// Normalized overlap `Re⟨a, b⟩ / (‖a‖‖b‖)` on the sphere, over the domain
/// of `a`.
pub fn sphere_overlap(a: &SphereField, b: &SphereField, quad: FocalQuadrature) -> Result<f64> {
    let g = AngularGrid::new(a.domain, quad.n_theta, quad.n_phi)?;
    let (mut ab, mut aa, mut bb) = (C64::new(0.0, 0.0), 0.0, 0.0);
    for (&t, &w) in g.theta.iter().zip(&g.weights) {
        for &ph in &g.phi {
            let [a1, a2] = a.amplitude(t, ph);
            let [b1, b2] = b.amplitude(t, ph);
            ab += w * (a1 * b1.conj() + a2 * b2.conj());
            aa += w * (a1.norm_sqr() + a2.norm_sqr());
            bb += w * (b1.norm_sqr() + b2.norm_sqr());
        }
    }
    let norm = (aa * bb).sqrt();
    if !(norm > 0.0) {
        return Err(Error::UndefinedOverlap("zero field on the sphere".into()));
    }
    Ok(ab.re / norm)
}

/// Phase imprinted on the converging wave.
#[derive(Debug, Clone)]
pub enum Aberration {
    /// Zernike expansion on the pupil `ρ/ρ_max`, in waves at its reference
    /// wavelength.
    Zernike(ZernikeExpansion),
    /// Gridded phase on the pupil; unmeasured pixels carry no phase.
    Map(PhaseMap),
    /// Phase upon reflection `arg r_p` of the mirror coating.
    Coating(OpticalConstants),
}

enum PreparedAberration<'a> {
    Zernike(ZernikeEvaluator, f64),
    Map(&'a PhaseMap),
    Coating(C64),
}

impl Aberration {
    fn prepare(&self, lambda_nm: f64) -> Result<PreparedAberration<'_>> {
        Ok(match self {
            Aberration::Zernike(e) => PreparedAberration::Zernike(e.evaluator(), e.lambda_ref_nm / lambda_nm),
            Aberration::Map(m) => PreparedAberration::Map(m),
            Aberration::Coating(c) => PreparedAberration::Coating(c.index(lambda_nm)?),
        })
    }
}

impl PreparedAberration<'_> {
    /// Phase in radians at the sphere point.
    fn phase(&self, theta: f64, phi: f64, rho_max: f64, lambda_nm: f64) -> f64 {
        let u = (2.0 * (0.5 * theta).tan() / rho_max).min(1.0);
        match self {
            PreparedAberration::Zernike(ev, k) => 2.0 * PI * k * ev.eval(u, phi),
            PreparedAberration::Map(m) => {
                let waves = m.sample(u * phi.cos(), u * phi.sin()).unwrap_or(0.0);
                2.0 * PI * waves * m.lambda_ref_nm / lambda_nm
            }
            PreparedAberration::Coating(n) => fresnel_rp(*n, 0.5 * theta).arg(),
        }
    }
}

/// Total aberration phase (radians) at a sphere point.
pub fn aberration_phase(field: &SphereField, aberrations: &[Aberration], theta: f64, phi: f64) -> Result<f64> {
    let prepared = aberrations
        .iter()
        .map(|a| a.prepare(field.lambda_nm))
        .collect::<Result<Vec<_>>>()?;
    Ok(prepared
        .iter()
        .map(|p| p.phase(theta, phi, field.rho_max, field.lambda_nm))
        .sum())
}

/// Weighted quadrature nodes: direction `n̂` and the vector amplitude
/// `w·(E_ϑ ê_ϑ + E_φ ê_φ)·e^{iΦ}`.
struct Nodes {
    dirs: Vec<[f64; 3]>,
    amps: Vec<[C64; 3]>,
    /// Per ϑ-ring sums of `amps`, for on-axis evaluation.
    rings: Vec<(f64, [C64; 3])>,
}

fn build_nodes(field: &SphereField, aberrations: &[Aberration], quad: FocalQuadrature) -> Result<Nodes> {
    let g = AngularGrid::new(field.domain, quad.n_theta, quad.n_phi)?;
    let prepared = aberrations
        .iter()
        .map(|a| a.prepare(field.lambda_nm))
        .collect::<Result<Vec<_>>>()?;
    type Ring = (Vec<[f64; 3]>, Vec<[C64; 3]>);
    let per_ring: Vec<Ring> = g
        .theta
        .par_iter()
        .zip(&g.weights)
        .map(|(&t, &w)| {
            let (st, ct) = t.sin_cos();
            let mut dirs = Vec::with_capacity(g.phi.len());
            let mut amps = Vec::with_capacity(g.phi.len());
            for &ph in &g.phi {
                let (sp, cp) = ph.sin_cos();
                let [et, ep] = field.amplitude(t, ph);
                let phase: f64 = prepared
                    .iter()
                    .map(|p| p.phase(t, ph, field.rho_max, field.lambda_nm))
                    .sum();
                let f = C64::from_polar(w * g.dphi, phase);
                let e_theta = [ct * cp, ct * sp, st];
                let e_phi = [-sp, cp, 0.0];
                amps.push([
                    f * (et * e_theta[0] + ep * e_phi[0]),
                    f * (et * e_theta[1] + ep * e_phi[1]),
                    f * (et * e_theta[2]),
                ]);
                dirs.push([st * cp, st * sp, -ct]);
            }
            (dirs, amps)
        })
        .collect();
    let mut nodes = Nodes {
        dirs: Vec::with_capacity(quad.n_theta * quad.n_phi),
        amps: Vec::with_capacity(quad.n_theta * quad.n_phi),
        rings: Vec::with_capacity(quad.n_theta),
    };
    for ((dirs, amps), &t) in per_ring.into_iter().zip(&g.theta) {
        let mut sum = [C64::new(0.0, 0.0); 3];
        for a in &amps {
            for c in 0..3 {
                sum[c] += a[c];
            }
        }
        nodes.rings.push((t.cos(), sum));
        nodes.dirs.extend(dirs);
        nodes.amps.extend(amps);
    }
    Ok(nodes)
}

/// Fails if the angular grid cannot resolve the phase variation over the
/// evaluation points.
pub fn check_sampling(points: &[[f64; 3]], quad: FocalQuadrature) -> Result<()> {
    let r_xy = points.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    let r_z = points.iter().map(|p| p[2].abs()).fold(0.0, f64::max);
    let need_phi = (3.0 * PI * r_xy).ceil() as usize + 24;
    let need_theta = (PI * (r_xy + r_z)).ceil() as usize + 16;
    if quad.n_phi < need_phi || quad.n_theta < need_theta {
        return Err(Error::Sampling(format!(
            "{}x{} nodes for points within {r_xy:.2} λ laterally and {r_z:.2} λ axially; need at least {need_theta}x{need_phi}",
            quad.n_theta, quad.n_phi
        )));
    }
    Ok(())
}

/// Complex focal field `(E_x, E_y, E_z)` at `points` (in wavelengths).
pub fn focal_field(
    field: &SphereField,
    aberrations: &[Aberration],
    points: &[[f64; 3]],
    quad: FocalQuadrature,
) -> Result<Vec<[C64; 3]>> {
    check_sampling(points, quad)?;
    let nodes = build_nodes(field, aberrations, quad)?;
    Ok(points.par_iter().map(|p| field_at(&nodes, *p)).collect())
}

fn field_at(nodes: &Nodes, p: [f64; 3]) -> [C64; 3] {
    let mut e = [C64::new(0.0, 0.0); 3];
    for (d, a) in nodes.dirs.iter().zip(&nodes.amps) {
        let k = C64::from_polar(1.0, -2.0 * PI * (d[0] * p[0] + d[1] * p[1] + d[2] * p[2]));
        for c in 0..3 {
            e[c] += a[c] * k;
        }
    }
    e
}

fn axial_intensity(nodes: &Nodes, z: f64) -> f64 {
    let mut e = [C64::new(0.0, 0.0); 3];
    for (u, a) in &nodes.rings {
        // n̂·(0, 0, z) = −z cosϑ
        let k = C64::from_polar(1.0, 2.0 * PI * z * u);
        for c in 0..3 {
            e[c] += a[c] * k;
        }
    }
    e.iter().map(|c| c.norm_sqr()).sum()
}

pub fn intensity(e: &[C64; 3]) -> f64 {
    e.iter().map(|c| c.norm_sqr()).sum()
}

/// Strehl evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrehlSettings {
    pub quad: FocalQuadrature,
    /// Node counts double until the Strehl ratio changes by less than this.
    pub tolerance: f64,
    pub max_nodes: usize,
    /// Half-width of the axial peak search in wavelengths.
    pub axial_range: f64,
}

impl Default for StrehlSettings {
    fn default() -> Self {
        Self {
            quad: FocalQuadrature::default(),
            tolerance: 1e-4,
            max_nodes: 4096,
            axial_range: 2.0,
        }
    }
}

/// Strehl ratio at the axial intensity maximum and at the nominal focus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrehlResult {
    pub at_peak: f64,
    pub at_nominal: f64,
    /// Axial position of the maximum in wavelengths.
    pub peak_z: f64,
    pub quad: FocalQuadrature,
}

const AXIAL_SCAN: usize = 161;

fn axial_peak(nodes: &Nodes, range: f64) -> Result<(f64, f64)> {
    let step = 2.0 * range / (AXIAL_SCAN - 1) as f64;
    let (mut bz, mut bi) = (0.0, f64::NEG_INFINITY);
    for k in 0..AXIAL_SCAN {
        let z = -range + k as f64 * step;
        let v = axial_intensity(nodes, z);
        if v > bi {
            bz = z;
            bi = v;
        }
    }
    let lo = (bz - step).max(-range);
    let hi = (bz + step).min(range);
    let m = golden_section_max(|z| axial_intensity(nodes, z), lo, hi, 1e-7, 300)?;
    Ok(if m.value >= bi { (m.x, m.value) } else { (bz, bi) })
}

fn strehl_once(field: &SphereField, aberrations: &[Aberration], s: &StrehlSettings, quad: FocalQuadrature) -> Result<StrehlResult> {
    check_sampling(&[[0.0, 0.0, s.axial_range]], quad)?;
    let reference = build_nodes(field, &[], quad)?;
    let aberrated = build_nodes(field, aberrations, quad)?;
    let (_, i_ref) = axial_peak(&reference, s.axial_range)?;
    if !(i_ref > 0.0) {
        return Err(Error::UndefinedOverlap("unaberrated focal intensity vanishes".into()));
    }
    let (z, i_peak) = axial_peak(&aberrated, s.axial_range)?;
    Ok(StrehlResult {
        at_peak: i_peak / i_ref,
        at_nominal: axial_intensity(&aberrated, 0.0) / i_ref,
        peak_z: z,
        quad,
    })
}

/// Peak on-axis intensity with aberrations over the unaberrated peak.
pub fn strehl(field: &SphereField, aberrations: &[Aberration], settings: &StrehlSettings) -> Result<StrehlResult> {
    let mut quad = settings.quad;
    let mut prev = strehl_once(field, aberrations, settings, quad)?;
    loop {
        quad = FocalQuadrature {
            n_theta: quad.n_theta * 2,
            n_phi: quad.n_phi * 2,
        };
        if quad.n_theta > settings.max_nodes || quad.n_phi > settings.max_nodes {
            return Err(Error::Convergence(format!(
                "Strehl ratio still changing by more than {} at {}x{} nodes",
                settings.tolerance, prev.quad.n_theta, prev.quad.n_phi
            )));
        }
        let next = strehl_once(field, aberrations, settings, quad)?;
        if (next.at_peak - prev.at_peak).abs() < settings.tolerance {
            return Ok(next);
        }
        prev = next;
    }
}

/// RMS of the aberration phase (waves) weighted by each node's
/// contribution `|E_ϑ| sinϑ` to the on-axis focal field, piston removed.
pub fn weighted_phase_rms(field: &SphereField, aberrations: &[Aberration], quad: FocalQuadrature) -> Result<f64> {
    phase_rms(field, aberrations, quad, false)
}

/// [`weighted_phase_rms`] with the best-fit axial refocus `∝ cosϑ` removed
/// as well; the Maréchal estimate of the Strehl ratio at the axial peak.
pub fn refocused_phase_rms(field: &SphereField, aberrations: &[Aberration], quad: FocalQuadrature) -> Result<f64> {
    phase_rms(field, aberrations, quad, true)
}

fn phase_rms(field: &SphereField, aberrations: &[Aberration], quad: FocalQuadrature, refocus: bool) -> Result<f64> {
    let g = AngularGrid::new(field.domain, quad.n_theta, quad.n_phi)?;
    let prepared = aberrations
        .iter()
        .map(|a| a.prepare(field.lambda_nm))
        .collect::<Result<Vec<_>>>()?;
    // weighted moments of (1, cosϑ, Φ)
    let (mut w0, mut wc, mut wcc, mut wp, mut wcp, mut wpp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &w) in g.theta.iter().zip(&g.weights) {
        let c = t.cos();
        for &ph in &g.phi {
            let wt = w * field.amplitude(t, ph)[0].norm() * t.sin();
            let waves = prepared
                .iter()
                .map(|p| p.phase(t, ph, field.rho_max, field.lambda_nm))
                .sum::<f64>()
                / (2.0 * PI);
            w0 += wt;
            wc += wt * c;
            wcc += wt * c * c;
            wp += wt * waves;
            wcp += wt * c * waves;
            wpp += wt * waves * waves;
        }
    }
    if !(w0 > 0.0) {
        return Err(Error::UndefinedOverlap("zero field on the sphere".into()));
    }
    let (mc, mp) = (wc / w0, wp / w0);
    let var_p = wpp / w0 - mp * mp;
    let var = if refocus {
        let var_c = wcc / w0 - mc * mc;
        let cov = wcp / w0 - mc * mp;
        if var_c > 0.0 { var_p - cov * cov / var_c } else { var_p }
    } else {
        var_p
    };
    Ok(var.max(0.0).sqrt())
}

/// Field components on a transverse plane `z`, `n × n` points spanning
/// `±half_width` wavelengths.
pub fn focal_plane(
    field: &SphereField,
    aberrations: &[Aberration],
    z: f64,
    half_width: f64,
    n: usize,
    quad: FocalQuadrature,
) -> Result<Vec<Array2<C64>>> {
    if n < 2 {
        return Err(Error::domain("focal plane needs at least 2x2 points"));
    }
    let coord = |k: usize| -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64;
    let points: Vec<[f64; 3]> = (0..n)
        .flat_map(|i| (0..n).map(move |j| [coord(j), coord(i), z]))
        .collect();
    let e = focal_field(field, aberrations, &points, quad)?;
    Ok((0..3)
        .map(|c| Array2::from_shape_fn((n, n), |(i, j)| e[i * n + j][c]))
        .collect())
}

/// Writes focal-plane components as real/imaginary channels.
pub fn write_focal_plane(path: impl AsRef<Path>, components: &[Array2<C64>], lambda_nm: f64) -> Result<()> {
    let (rows, cols) = components
        .first()
        .map(|c| c.dim())
        .ok_or_else(|| Error::domain("no components to write"))?;
    let names = ["Ex", "Ey", "Ez"];
    let mut channels = Vec::new();
    let mut labels = Vec::new();
    for (c, name) in components.iter().zip(names) {
        channels.push(c.mapv(|v| v.re));
        labels.push(format!("{name}_re"));
        channels.push(c.mapv(|v| v.im));
        labels.push(format!("{name}_im"));
    }
    let header = GridHeader {
        rows,
        cols,
        pixel_scale: None,
        center: None,
        channels: labels,
        lambda_nm: Some(lambda_nm),
    };
    let refs: Vec<&Array2<f64>> = channels.iter().collect();
    io::write_grid(path, &header, &refs)
}

/// Tabulated complex refractive index `n + iκ` of a material.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalConstants {
    pub material: String,
    pub source: String,
    /// `(λ_nm, n, κ)`, strictly increasing in λ.
    table: Vec<(f64, f64, f64)>,
}

const ALUMINUM_TABLE: &str = include_str!("../data/aluminum_rakic1998.txt");

impl OpticalConstants {
    /// Parses `lambda_nm n kappa` lines. A `# source: <citation>` header line
    /// is mandatory; `# material: <name>` is optional.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut source = None;
        let mut material = String::from("unknown");
        let mut table: Vec<(f64, f64, f64)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(s) = rest.strip_prefix("source:") {
                    source = Some(s.trim().to_string()).filter(|s| !s.is_empty());
                } else if let Some(m) = rest.strip_prefix("material:") {
                    material = m.trim().to_string();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::parse(origin, idx + 1, format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::parse(origin, idx + 1, "expected `lambda_nm n kappa`"));
            }
            if v[2] < 0.0 || v[1] < 0.0 {
                return Err(Error::parse(origin, idx + 1, "n and kappa must be non-negative"));
            }
            if table.last().is_some_and(|l| l.0 >= v[0]) {
                return Err(Error::parse(origin, idx + 1, "wavelengths must increase strictly"));
            }
            table.push((v[0], v[1], v[2]));
        }
        let source = source.ok_or_else(|| Error::parse(origin, 0, "missing `# source:` provenance line"))?;
        if table.len() < 2 {
            return Err(Error::parse(origin, 0, "table needs at least two wavelengths"));
        }
        Ok(Self {
            material,
            source,
            table,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&io::read_text(path)?, path)
    }

    /// Shipped aluminum table (200–800 nm).
    pub fn aluminum() -> Self {
        Self::parse(ALUMINUM_TABLE, Path::new("data/aluminum_rakic1998.txt")).expect("shipped table parses")
    }

    pub fn range_nm(&self) -> (f64, f64) {
        (self.table[0].0, self.table[self.table.len() - 1].0)
    }

    /// Linearly interpolated `n + iκ`.
    pub fn index(&self, lambda_nm: f64) -> Result<C64> {
        let (lo, hi) = self.range_nm();
        if !(lambda_nm >= lo && lambda_nm <= hi) {
            return Err(Error::domain(format!(
                "wavelength {lambda_nm} nm outside the {} table range [{lo}, {hi}] nm",
                self.material
            )));
        }
        let k = self.table.partition_point(|r| r.0 <= lambda_nm).clamp(1, self.table.len() - 1);
        let (a, b) = (self.table[k - 1], self.table[k]);
        let t = (lambda_nm - a.0) / (b.0 - a.0);
        Ok(C64::new(a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2)))
    }
}

/// Fresnel amplitude reflection coefficient for p-polarization at
/// incidence angle `alpha` from vacuum onto index `n` (`n + iκ`).
pub fn fresnel_rp(n: C64, alpha: f64) -> C64 {
    let n2 = n * n;
    let (s, c) = alpha.sin_cos();
    let root = (n2 - s * s).sqrt();
    (n2 * c - root) / (n2 * c + root)
}

/// `r_p` of the mirror coating for the ray reaching the focus at polar
/// angle `theta`.
pub fn aluminum_rp(theta: f64, lambda_nm: f64, constants: &OpticalConstants) -> Result<C64> {
    let alpha = incidence_angle(theta)?;
    Ok(fresnel_rp(constants.index(lambda_nm)?, alpha))
}

/// Overlap with and without the coating's amplitude reflectivity applied
/// to the incident mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectivityOverlap {
    pub eta: f64,
    pub eta_unweighted: f64,
    pub delta: f64,
}

fn reflectivity_weight(constants: &OpticalConstants, lambda_nm: f64) -> Result<impl Fn(f64) -> f64 + Copy> {
    let n = constants.index(lambda_nm)?;
    Ok(move |rho: f64| {
        let theta = theta_from_rho(rho).unwrap_or(0.0);
        fresnel_rp(n, 0.5 * theta).norm()
    })
}

/// Overlap of `mode`, reflected with amplitude `|r_p|`, with the dipole mode.
pub fn reflectivity_weighted_overlap(
    mode: &RadialMode,
    aperture: &ApertureSpec,
    constants: &OpticalConstants,
    lambda_nm: f64,
) -> Result<ReflectivityOverlap> {
    let quad = OverlapQuadrature::default();
    let dipole = RadialMode::dipole();
    let w = reflectivity_weight(constants, lambda_nm)?;
    let eta = spatial_overlap_with(mode, &dipole, aperture, w, &quad)?;
    let eta_unweighted = spatial_overlap_with(mode, &dipole, aperture, |_| 1.0, &quad)?;
    Ok(ReflectivityOverlap {
        eta,
        eta_unweighted,
        delta: eta - eta_unweighted,
    })
}

/// Waist optimum with the coating reflectivity included.
pub fn optimize_waist_with_coating(
    aperture: &ApertureSpec,
    constants: &OpticalConstants,
    lambda_nm: f64,
) -> Result<WaistOptimum> {
    let w = reflectivity_weight(constants, lambda_nm)?;
    optimize_waist_with(aperture, w, &OverlapQuadrature::default())
}
