//! Rotating quarter-wave-plate polarimetry and the overlap of measured beams
//! with the dipole mode.
//!
//! A quarter-wave plate at angle `θ` followed by a horizontal polariser
//! transmits `I(θ) = ½[S0 + S1 cos²2θ + S2 sin2θ cos2θ − S3 sin2θ]`, which
//! is fitted per pixel on the basis `{1, cos4θ, sin4θ, sin2θ}`.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use nalgebra::{DMatrix, Matrix4, Vector4};
use ndarray::{Array2, Zip};

use crate::geometry::ApertureSpec;
use crate::io::{self, GridHeader};
use crate::modes::RadialMode;
use crate::{Error, Result};

/// Minimum number of wave-plate angles distinct modulo π.
pub const MIN_ANGLES: usize = 5;
/// Design matrices above this condition number are rejected.
pub const MAX_DESIGN_CONDITION: f64 = 1e6;
/// Default noise floor as a fraction of the S0 maximum.
pub const DEFAULT_NOISE_FLOOR: f64 = 0.01;
/// Largest tolerated fraction of the aperture annulus outside the map.
pub const MAX_MISSING_FRACTION: f64 = 1e-3;

/// Intensity frames taken at a sequence of wave-plate angles.
#[derive(Debug, Clone)]
pub struct FrameStack {
    frames: Vec<Array2<f64>>,
    qwp_angles: Vec<f64>,
    /// Entrance-plane `ρ` per pixel.
    pub pixel_scale: f64,
    /// Beam axis `(x, y)` in pixel coordinates (column, row).
    pub center: (f64, f64),
}

impl FrameStack {
    pub fn new(frames: Vec<Array2<f64>>, qwp_angles: Vec<f64>, pixel_scale: f64, center: (f64, f64)) -> Result<Self> {
        if frames.len() != qwp_angles.len() {
            return Err(Error::domain(format!(
                "{} frames but {} wave-plate angles",
                frames.len(),
                qwp_angles.len()
            )));
        }
        let Some(first) = frames.first() else {
            return Err(Error::Determinacy("no frames".into()));
        };
        if frames.iter().any(|f| f.dim() != first.dim()) {
            return Err(Error::domain("frames differ in shape"));
        }
        if frames.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("frame intensities must be finite and non-negative"));
        }
        if !(pixel_scale > 0.0) {
            return Err(Error::domain("pixel scale must be positive"));
        }
        design_pseudoinverse(&qwp_angles)?;
        Ok(Self {
            frames,
            qwp_angles,
            pixel_scale,
            center,
        })
    }

    /// Loads 16-bit graymaps listed in a manifest (`filename angle_deg`).
    /// Without an explicit `center` the S0-free intensity centroid of the
    /// summed frames is used.
    pub fn load(manifest: impl AsRef<Path>, pixel_scale: f64, center: Option<(f64, f64)>) -> Result<Self> {
        let entries = io::read_manifest(manifest)?;
        let mut frames = Vec::with_capacity(entries.len());
        let mut angles = Vec::with_capacity(entries.len());
        for e in entries {
            frames.push(io::read_pgm16(&e.file)?);
            angles.push(e.angle_deg.to_radians());
        }
        let center = match center {
            Some(c) => c,
            None => {
                let mut total = frames[0].clone();
                frames[1..].iter().for_each(|f| total += f);
                centroid(&total)?
            }
        };
        Self::new(frames, angles, pixel_scale, center)
    }

    pub fn frames(&self) -> &[Array2<f64>] {
        &self.frames
    }

    pub fn qwp_angles(&self) -> &[f64] {
        &self.qwp_angles
    }

    pub fn dim(&self) -> (usize, usize) {
        self.frames[0].dim()
    }
}

fn design_row(theta: f64) -> [f64; 4] {
    [1.0, (4.0 * theta).cos(), (4.0 * theta).sin(), (2.0 * theta).sin()]
}

/// Least-squares projector `(AᵀA)⁻¹Aᵀ` of the Fourier design matrix.
fn design_pseudoinverse(angles: &[f64]) -> Result<DMatrix<f64>> {
    let mut folded: Vec<f64> = angles.iter().map(|a| a.rem_euclid(PI)).collect();
    folded.sort_by(f64::total_cmp);
    let mut distinct = folded.len().min(1);
    for w in folded.windows(2) {
        if w[1] - w[0] > 1e-6 {
            distinct += 1;
        }
    }
    if distinct > 1 && folded[folded.len() - 1] - folded[0] > PI - 1e-6 {
        distinct -= 1;
    }
    if distinct < MIN_ANGLES {
        return Err(Error::Determinacy(format!(
            "{distinct} distinct wave-plate angles (mod π), need at least {MIN_ANGLES}"
        )));
    }
    let a = DMatrix::from_fn(angles.len(), 4, |r, c| design_row(angles[r])[c]);
    let sv = a.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < MAX_DESIGN_CONDITION) {
        return Err(Error::Determinacy(format!(
            "design matrix condition {cond:.3e} for the given angles"
        )));
    }
    let ata = a.transpose() * &a;
    let inv = ata
        .try_inverse()
        .ok_or_else(|| Error::Determinacy("singular design matrix".into()))?;
    Ok(inv * a.transpose())
}

/// Per-pixel Stokes parameters with the fit residual.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesGrids {
    pub s0: Array2<f64>,
    pub s1: Array2<f64>,
    pub s2: Array2<f64>,
    pub s3: Array2<f64>,
    /// RMS deviation between the frames and the fitted modulation.
    pub residual: Array2<f64>,
}

impl StokesGrids {
    pub fn at(&self, row: usize, col: usize) -> [f64; 4] {
        [
            self.s0[[row, col]],
            self.s1[[row, col]],
            self.s2[[row, col]],
            self.s3[[row, col]],
        ]
    }
}

/// Fourier reduction of a rotating-wave-plate stack.
pub fn stokes_from_frames(stack: &FrameStack) -> Result<StokesGrids> {
    let p = design_pseudoinverse(&stack.qwp_angles)?;
    let rows_a: Vec<[f64; 4]> = stack.qwp_angles.iter().map(|&t| design_row(t)).collect();
    let dim = stack.dim();
    let mut out = StokesGrids {
        s0: Array2::zeros(dim),
        s1: Array2::zeros(dim),
        s2: Array2::zeros(dim),
        s3: Array2::zeros(dim),
        residual: Array2::zeros(dim),
    };
    let k = stack.frames.len();
    let mut intensity = vec![0.0; k];
    for i in 0..dim.0 {
        for j in 0..dim.1 {
            for (f, v) in stack.frames.iter().zip(intensity.iter_mut()) {
                *v = f[[i, j]];
            }
            let mut a = [0.0; 4];
            for (c, ac) in a.iter_mut().enumerate() {
                *ac = (0..k).map(|r| p[(c, r)] * intensity[r]).sum();
            }
            let s1 = 4.0 * a[1];
            out.s0[[i, j]] = 2.0 * a[0] - 0.5 * s1;
            out.s1[[i, j]] = s1;
            out.s2[[i, j]] = 4.0 * a[2];
            out.s3[[i, j]] = -2.0 * a[3];
            let ss: f64 = rows_a
                .iter()
                .zip(&intensity)
                .map(|(row, &v)| {
                    let model: f64 = row.iter().zip(&a).map(|(x, y)| x * y).sum();
                    (v - model).powi(2)
                })
                .sum();
            out.residual[[i, j]] = (ss / k as f64).sqrt();
        }
    }
    Ok(out)
}

/// Polarization-ellipse orientation and ellipticity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseAngles {
    /// Orientation in `[0, π)`.
    pub psi: f64,
    /// Ellipticity in `[−π/4, π/4]`.
    pub chi: f64,
    /// False at the circular pole, where `psi` carries no information.
    pub psi_defined: bool,
}

/// `ψ = ½ atan2(S2, S1)` folded to `[0, π)` and `χ = ½ asin(S3/S0)`, with
/// the degree of polarization clamped to 1. `None` for `S0 ≤ 0`.
pub fn ellipse_angles(s0: f64, s1: f64, s2: f64, s3: f64) -> Option<EllipseAngles> {
    if !(s0 > 0.0) {
        return None;
    }
    let mut psi = 0.5 * s2.atan2(s1);
    if psi < 0.0 {
        psi += PI;
    }
    if psi >= PI {
        psi -= PI;
    }
    let chi = 0.5 * (s3 / s0).clamp(-1.0, 1.0).asin();
    Some(EllipseAngles {
        psi,
        chi,
        psi_defined: s1.hypot(s2) > 1e-12 * s0,
    })
}

/// Spatially resolved polarization state of a measured beam.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationMap {
    pub s0: Array2<f64>,
    pub psi: Array2<f64>,
    pub chi: Array2<f64>,
    pub mask: Array2<bool>,
    pub pixel_scale: f64,
    pub center: (f64, f64),
}

impl PolarizationMap {
    /// Masks pixels with `S0` below `noise_floor × max S0`.
    pub fn from_stokes(stokes: &StokesGrids, pixel_scale: f64, center: (f64, f64), noise_floor: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&noise_floor) {
            return Err(Error::domain(format!("noise floor must lie in [0, 1), got {noise_floor}")));
        }
        let dim = stokes.s0.dim();
        let max = stokes.s0.iter().copied().fold(0.0, f64::max);
        let floor = noise_floor * max;
        let mut map = Self {
            s0: stokes.s0.mapv(|v| v.max(0.0)),
            psi: Array2::zeros(dim),
            chi: Array2::zeros(dim),
            mask: Array2::from_elem(dim, false),
            pixel_scale,
            center,
        };
        for ((i, j), &s0) in stokes.s0.indexed_iter() {
            let [_, s1, s2, s3] = stokes.at(i, j);
            if let Some(e) = ellipse_angles(s0, s1, s2, s3) {
                map.psi[[i, j]] = e.psi;
                map.chi[[i, j]] = e.chi;
                map.mask[[i, j]] = s0 >= floor;
            }
        }
        Ok(map)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.s0.dim()
    }

    /// Entrance-plane coordinates `(x, y)` of a pixel.
    pub fn plane_coords(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 - self.center.0) * self.pixel_scale,
            (row as f64 - self.center.1) * self.pixel_scale,
        )
    }

    /// Writes S0, ψ and χ; masked pixels hold `NaN` in ψ and χ.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let (rows, cols) = self.dim();
        let header = GridHeader {
            rows,
            cols,
            pixel_scale: Some(self.pixel_scale),
            center: Some([self.center.0, self.center.1]),
            channels: vec!["S0".into(), "psi".into(), "chi".into()],
            lambda_nm: None,
        };
        let masked = |g: &Array2<f64>| Zip::from(g).and(&self.mask).map_collect(|&v, &m| if m { v } else { f64::NAN });
        io::write_grid(path, &header, &[&self.s0, &masked(&self.psi), &masked(&self.chi)])
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (h, g) = io::read_grid(path)?;
        if g.len() != 3 {
            return Err(Error::parse(path, 1, "polarization maps hold S0, psi and chi"));
        }
        let (Some(pixel_scale), Some(center)) = (h.pixel_scale, h.center) else {
            return Err(Error::parse(path, 1, "header lacks pixel_scale or center"));
        };
        let mask = g[1].mapv(|v| !v.is_nan());
        let clean = |a: &Array2<f64>| a.mapv(|v| if v.is_nan() { 0.0 } else { v });
        Ok(Self {
            s0: clean(&g[0]),
            psi: clean(&g[1]),
            chi: clean(&g[2]),
            mask,
            pixel_scale,
            center: (center[0], center[1]),
        })
    }
}

/// Intensity-weighted centroid `(x, y)` in pixel coordinates.
pub fn centroid(intensity: &Array2<f64>) -> Result<(f64, f64)> {
    let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
    for ((i, j), &v) in intensity.indexed_iter() {
        let w = v.max(0.0);
        sx += w * j as f64;
        sy += w * i as f64;
        s += w;
    }
    if !(s > 0.0) {
        return Err(Error::domain("centroid of an empty image"));
    }
    Ok((sx / s, sy / s))
}

/// How measured orientations enter [`measured_overlap`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OverlapOptions {
    /// Replace ψ by the exact radial direction.
    pub ideal_orientation: bool,
    /// Choose the sign of the field vector per pixel to maximise its radial
    /// projection.
    pub rectify: bool,
}

/// Fraction of the aperture annulus (area-weighted) lying outside the map.
pub fn missing_fraction(map: &PolarizationMap, aperture: &ApertureSpec) -> f64 {
    const NR: usize = 200;
    const NA: usize = 720;
    let (rows, cols) = map.dim();
    let (lo, hi) = (aperture.rho_bore(), aperture.rho_max());
    let (mut out, mut total) = (0.0, 0.0);
    for i in 0..NR {
        let r = lo + (hi - lo) * (i as f64 + 0.5) / NR as f64;
        for k in 0..NA {
            let phi = 2.0 * PI * k as f64 / NA as f64;
            let px = map.center.0 + r * phi.cos() / map.pixel_scale;
            let py = map.center.1 + r * phi.sin() / map.pixel_scale;
            let inside = px >= -0.5 && py >= -0.5 && px <= cols as f64 - 0.5 && py <= rows as f64 - 0.5;
            total += r;
            if !inside {
                out += r;
            }
        }
    }
    out / total
}

/// Normalized scalar product of the measured field with a radially
/// polarized reference mode over the aperture annulus.
///
/// The measured radial component is `√S0 · cosχ · cos(ψ̃ − φ)`, where `ψ̃`
/// lifts the axis angle ψ to a vector angle (ψ for `y ≥ 0`, ψ + π below the
/// x-axis). Masked pixels contribute no measured field; the reference norm
/// covers every pixel of the annulus.
pub fn measured_overlap(
    map: &PolarizationMap,
    aperture: &ApertureSpec,
    mode: &RadialMode,
    options: OverlapOptions,
) -> Result<f64> {
    aperture.validate()?;
    let missing = missing_fraction(map, aperture);
    if missing > MAX_MISSING_FRACTION {
        return Err(Error::Coverage {
            missing_fraction: missing,
        });
    }
    let (lo, hi) = (aperture.rho_bore(), aperture.rho_max());
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for ((i, j), &s0) in map.s0.indexed_iter() {
        let (x, y) = map.plane_coords(i, j);
        let r = x.hypot(y);
        if r < lo || r > hi {
            continue;
        }
        let b = mode.amplitude(r);
        bb += b * b;
        if !map.mask[[i, j]] {
            continue;
        }
        let phi = y.atan2(x);
        let proj = if options.ideal_orientation {
            1.0
        } else {
            let psi = if y >= 0.0 { map.psi[[i, j]] } else { map.psi[[i, j]] + PI };
            let c = (psi - phi).cos();
            if options.rectify {
                c.abs()
            } else {
                c
            }
        };
        ab += s0.sqrt() * map.chi[[i, j]].clamp(-FRAC_PI_4, FRAC_PI_4).cos() * proj * b;
        aa += s0;
    }
    let norm = (aa * bb).sqrt();
    if !(norm > 0.0) {
        return Err(Error::UndefinedOverlap("no measured or reference field on the aperture".into()));
    }
    Ok(ab / norm)
}

/// Mueller matrix of a quarter-wave plate with fast axis at `theta`.
pub fn qwp_mueller(theta: f64) -> Matrix4<f64> {
    let (s, c) = (2.0 * theta).sin_cos();
    Matrix4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, c * c, c * s, -s, //
        0.0, c * s, s * s, c, //
        0.0, s, -c, 0.0,
    )
}

/// Mueller matrix of a horizontal linear polariser.
pub fn horizontal_polarizer_mueller() -> Matrix4<f64> {
    Matrix4::new(
        0.5, 0.5, 0.0, 0.0, //
        0.5, 0.5, 0.0, 0.0, //
        0.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 0.0,
    )
}

/// Detected intensity for Stokes vector `s` behind the rotating-plate analyser.
pub fn analyser_intensity(s: [f64; 4], theta: f64) -> f64 {
    (horizontal_polarizer_mueller() * qwp_mueller(theta) * Vector4::from(s))[0]
}

/// Noiseless analyser frames for Stokes grids `[S0, S1, S2, S3]`, one per
/// plate angle (radians).
pub fn synthesize_frames(stokes: &[Array2<f64>; 4], angles: &[f64]) -> Result<Vec<Array2<f64>>> {
    let dim = stokes[0].dim();
    if stokes.iter().any(|s| s.dim() != dim) {
        return Err(Error::domain("Stokes grids differ in shape"));
    }
    Ok(angles
        .iter()
        .map(|&a| {
            let m = horizontal_polarizer_mueller() * qwp_mueller(a);
            let row = [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(0, 3)]];
            Array2::from_shape_fn(dim, |ij| (0..4).map(|k| row[k] * stokes[k][ij]).sum())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::spatial_overlap;
    use approx::assert_abs_diff_eq;

    fn angles(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 * PI / n as f64).collect()
    }

    fn uniform_stack(s: [f64; 4], n: usize) -> FrameStack {
        let th = angles(n);
        let frames = th
            .iter()
            .map(|&t| Array2::from_elem((3, 4), analyser_intensity(s, t)))
            .collect();
        FrameStack::new(frames, th, 0.1, (1.5, 1.0)).unwrap()
    }

    #[test]
    fn analyser_matches_closed_form() {
        let s = [1.0, 0.3, -0.4, 0.5];
        for t in angles(7) {
            let (s2t, c2t) = (2.0 * t).sin_cos();
            let closed = 0.5 * (s[0] + s[1] * c2t * c2t + s[2] * s2t * c2t - s[3] * s2t);
            assert_abs_diff_eq!(analyser_intensity(s, t), closed, epsilon = 1e-15);
        }
    }

    #[test]
    fn horizontal_and_circular_states() {
        for s in [[1.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 1.0]] {
            let g = stokes_from_frames(&uniform_stack(s, 8)).unwrap();
            for (got, want) in g.at(1, 2).iter().zip(s) {
                assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
            }
            assert!(g.residual.iter().all(|&r| r < 1e-12));
        }
    }

    #[test]
    fn too_few_angles_is_underdetermined() {
        let th = vec![0.0, 0.3, 0.6, 0.9, 0.0 + PI];
        let frames = vec![Array2::from_elem((2, 2), 1.0); 5];
        assert!(matches!(FrameStack::new(frames, th, 0.1, (0.5, 0.5)), Err(Error::Determinacy(_))));
        let clustered = vec![0.0, 1e-4, 2e-4, 3e-4, 4e-4, 5e-4];
        let frames = vec![Array2::from_elem((2, 2), 1.0); 6];
        assert!(matches!(FrameStack::new(frames, clustered, 0.1, (0.5, 0.5)), Err(Error::Determinacy(_))));
    }

    #[test]
    fn ellipse_examples() {
        let e = ellipse_angles(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!((e.psi, e.chi), (0.0, 0.0));
        let e = ellipse_angles(1.0, 0.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(e.psi, PI / 4.0, epsilon = 1e-15);
        let e = ellipse_angles(1.0, 0.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(e.chi, PI / 4.0, epsilon = 1e-15);
        assert!(!e.psi_defined);
        // vertical folds to π/2, slight over-polarization clamps
        let e = ellipse_angles(1.0, -1.0, -0.0, 0.0).unwrap();
        assert_abs_diff_eq!(e.psi, PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ellipse_angles(1.0, 0.0, 0.0, 1.2).unwrap().chi, PI / 4.0, epsilon = 1e-15);
        assert!(ellipse_angles(0.0, 0.0, 0.0, 0.0).is_none());
    }

    /// Radially polarized doughnut on an even-sized grid, so the axis sits
    /// between pixels and the grid is symmetric about it.
    fn radial_map_floor(n: usize, waist: f64, rho_max: f64, floor: f64) -> PolarizationMap {
        assert!(n.is_multiple_of(2));
        let c = (n as f64 - 1.0) / 2.0;
        let scale = rho_max / (c - 4.0);
        let mut s0 = Array2::zeros((n, n));
        let mut psi = Array2::zeros((n, n));
        for ((i, j), v) in s0.indexed_iter_mut() {
            let (x, y) = ((j as f64 - c) * scale, (i as f64 - c) * scale);
            let r = x.hypot(y);
            *v = (r * (-(r * r) / (waist * waist)).exp()).powi(2);
            psi[[i, j]] = y.atan2(x).rem_euclid(PI);
        }
        let max = s0.iter().copied().fold(0.0, f64::max);
        let mask = s0.mapv(|v| v >= floor * max);
        PolarizationMap {
            s0,
            chi: Array2::zeros((n, n)),
            psi,
            mask,
            pixel_scale: scale,
            center: (c, c),
        }
    }

    fn radial_map(n: usize, waist: f64, rho_max: f64) -> PolarizationMap {
        radial_map_floor(n, waist, rho_max, 0.0)
    }

    #[test]
    fn radial_doughnut_scores_like_profile_overlap() {
        let ap = ApertureSpec::default();
        let map = radial_map(300, 2.26, ap.rho_max());
        let dip = RadialMode::dipole();
        let eta = measured_overlap(&map, &ap, &dip, OverlapOptions::default()).unwrap();
        assert_abs_diff_eq!(eta, 0.982, epsilon = 0.002);
        let rect = measured_overlap(&map, &ap, &dip, OverlapOptions { rectify: true, ..Default::default() }).unwrap();
        assert_abs_diff_eq!(eta, rect, epsilon = 1e-12);
        let profile = spatial_overlap(&RadialMode::doughnut(2.26).unwrap(), &dip, &ap).unwrap();
        assert_abs_diff_eq!(eta, profile, epsilon = 2e-3);
    }

    #[test]
    fn noise_floor_drops_the_dim_rim() {
        // the default floor masks ρ ≳ 4.4, where the doughnut holds < 1 % of
        // its peak intensity but the dipole reference does not vanish
        let ap = ApertureSpec::default();
        let dip = RadialMode::dipole();
        let open = measured_overlap(&radial_map(300, 2.26, ap.rho_max()), &ap, &dip, OverlapOptions::default()).unwrap();
        let floored = radial_map_floor(300, 2.26, ap.rho_max(), DEFAULT_NOISE_FLOOR);
        let eta = measured_overlap(&floored, &ap, &dip, OverlapOptions::default()).unwrap();
        assert!(eta < open);
        assert_abs_diff_eq!(eta, 0.977, epsilon = 0.001);
    }

    #[test]
    fn x_polarized_map_has_no_radial_overlap() {
        let ap = ApertureSpec::default();
        let mut map = radial_map(200, 2.26, ap.rho_max());
        map.psi.fill(0.0);
        let eta = measured_overlap(&map, &ap, &RadialMode::dipole(), OverlapOptions::default()).unwrap();
        assert_abs_diff_eq!(eta, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn overlap_is_invariant_under_intensity_scale() {
        let ap = ApertureSpec::default();
        let map = radial_map(150, 2.0, ap.rho_max());
        let mut scaled = map.clone();
        scaled.s0.mapv_inplace(|v| v * 37.5);
        let o = OverlapOptions::default();
        let a = measured_overlap(&map, &ap, &RadialMode::dipole(), o).unwrap();
        let b = measured_overlap(&scaled, &ap, &RadialMode::dipole(), o).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn pi_flips_near_axis_are_rectified() {
        let ap = ApertureSpec::default();
        let clean = radial_map(200, 2.26, ap.rho_max());
        let mut noisy = clean.clone();
        for ((i, j), psi) in noisy.psi.indexed_iter_mut() {
            let (x, y) = clean.plane_coords(i, j);
            // ±0.1 rad orientation noise close to the x-axis wraps ψ across 0/π
            if (y / x).abs().atan() < 0.1 {
                *psi = (*psi + if (i + j) % 2 == 0 { 0.1 } else { -0.1 }).rem_euclid(PI);
            }
        }
        let dip = RadialMode::dipole();
        let raw = OverlapOptions::default();
        let rect = OverlapOptions { rectify: true, ..raw };
        let eta_clean = measured_overlap(&clean, &ap, &dip, raw).unwrap();
        let eta_noisy = measured_overlap(&noisy, &ap, &dip, raw).unwrap();
        let eta_rect = measured_overlap(&noisy, &ap, &dip, rect).unwrap();
        assert!(eta_noisy < eta_clean - 0.01, "{eta_noisy} vs {eta_clean}");
        assert_abs_diff_eq!(eta_rect, eta_clean, epsilon = 1e-3);
    }

    #[test]
    fn ideal_orientation_removes_orientation_loss() {
        let ap = ApertureSpec::default();
        let mut map = radial_map(150, 2.26, ap.rho_max());
        map.psi.mapv_inplace(|p| (p + 0.3).rem_euclid(PI));
        let dip = RadialMode::dipole();
        let tilted = measured_overlap(&map, &ap, &dip, OverlapOptions { rectify: true, ..Default::default() }).unwrap();
        let ideal = measured_overlap(&map, &ap, &dip, OverlapOptions { ideal_orientation: true, rectify: false }).unwrap();
        assert_abs_diff_eq!(tilted, ideal * 0.3f64.cos(), epsilon = 1e-9);
    }

    #[test]
    fn small_map_fails_coverage() {
        let ap = ApertureSpec::default();
        let mut map = radial_map(100, 2.26, ap.rho_max());
        map.pixel_scale *= 0.5;
        let err = measured_overlap(&map, &ap, &RadialMode::dipole(), OverlapOptions::default());
        assert!(matches!(err, Err(Error::Coverage { missing_fraction }) if missing_fraction > 0.3));
    }

    #[test]
    fn centroid_of_doughnut_is_axis() {
        let map = radial_map(100, 2.26, 4.76);
        let (x, y) = centroid(&map.s0).unwrap();
        assert_abs_diff_eq!(x, map.center.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y, map.center.1, epsilon = 1e-9);
    }

    #[test]
    fn map_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pol.txt");
        let map = radial_map(20, 2.0, 4.0);
        map.write(&p).unwrap();
        let back = PolarizationMap::read(&p).unwrap();
        assert_eq!(back.mask, map.mask);
        assert_eq!(back.center, map.center);
        for ((i, j), &m) in map.mask.indexed_iter() {
            if m {
                assert_eq!(back.psi[[i, j]], map.psi[[i, j]]);
            }
        }
    }
}
