//! Zernike wavefront representation, PV/RMS metrics, phase-plate synthesis
//! and wavelength rescaling through fused-silica dispersion.
//!
//! Phases are in waves at a reference wavelength. Pupil coordinates are
//! normalised to the aperture radius; a grid of `rows × cols` pixels spans
//! `[-1, 1]` in both directions with pixel centres on the end points.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rayon::prelude::*;

use crate::io::{self, GridHeader};
use crate::{Error, Result};

pub const DEFAULT_DEGREE: u32 = 10;
pub const DEFAULT_GRID: usize = 513;

/// Fits whose design matrix exceeds this condition estimate are rejected.
pub const MAX_CONDITION: f64 = 1e8;

/// Checks `n ≥ |m|` and `n − |m|` even.
pub fn check_index(n: u32, m: i32) -> Result<()> {
    let am = m.unsigned_abs();
    if am > n || !(n - am).is_multiple_of(2) {
        Err(Error::ZernikeIndex { n, m })
    } else {
        Ok(())
    }
}

/// All `(n, m)` pairs up to `degree`, ordered by `n` then `m`.
pub fn indices_up_to(degree: u32) -> Vec<(u32, i32)> {
    (0..=degree)
        .flat_map(|n| (0..=n).map(move |k| (n, 2 * k as i32 - n as i32)))
        .collect()
}

/// Radial polynomial `R_n^|m|(ρ)`.
pub fn radial(n: u32, m: i32, rho: f64) -> f64 {
    radial_coefficients(n, m)
        .iter()
        .map(|&(c, p)| c * rho.powi(p))
        .sum()
}

fn radial_coefficients(n: u32, m: i32) -> Vec<(f64, i32)> {
    let am = m.unsigned_abs();
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    (0..=(n - am) / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * fact(n - k) / (fact(k) * fact((n + am) / 2 - k) * fact((n - am) / 2 - k));
            (c, (n - 2 * k) as i32)
        })
        .collect()
}

/// Basis function: `R_n^m cos(mφ)` for `m ≥ 0`, `R_n^|m| sin(|m|φ)` for `m < 0`.
pub fn zernike(n: u32, m: i32, rho: f64, phi: f64) -> f64 {
    let r = radial(n, m, rho);
    if m >= 0 {
        r * (m as f64 * phi).cos()
    } else {
        r * ((-m) as f64 * phi).sin()
    }
}

/// Annular pupil domain as fractions of the aperture radius.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

impl Default for Annulus {
    fn default() -> Self {
        Self {
            inner: 0.0,
            outer: 1.0,
        }
    }
}

impl Annulus {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&inner) || !(outer > inner && outer <= 1.0) {
            return Err(Error::domain(format!("invalid annulus [{inner}, {outer}]")));
        }
        Ok(Self { inner, outer })
    }

    /// Removes the outer `fraction` of the radius.
    pub fn trimmed(self, fraction: f64) -> Result<Self> {
        Self::new(self.inner, self.outer * (1.0 - fraction))
    }

    pub fn contains(&self, rho: f64) -> bool {
        rho >= self.inner && rho <= self.outer
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZernikeTerm {
    pub n: u32,
    pub m: i32,
    /// Coefficient in waves at the reference wavelength.
    pub value: f64,
}

/// Wavefront as a sum of Zernike terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ZernikeExpansion {
    terms: Vec<ZernikeTerm>,
    pub lambda_ref_nm: f64,
    pub annulus: Annulus,
}

impl ZernikeExpansion {
    pub fn new(terms: Vec<ZernikeTerm>, lambda_ref_nm: f64) -> Result<Self> {
        for t in &terms {
            check_index(t.n, t.m)?;
            if !t.value.is_finite() {
                return Err(Error::domain(format!("coefficient ({}, {}) is not finite", t.n, t.m)));
            }
        }
        if !(lambda_ref_nm > 0.0) {
            return Err(Error::domain("reference wavelength must be positive"));
        }
        Ok(Self {
            terms,
            lambda_ref_nm,
            annulus: Annulus::default(),
        })
    }

    pub fn zero(lambda_ref_nm: f64) -> Self {
        Self {
            terms: Vec::new(),
            lambda_ref_nm,
            annulus: Annulus::default(),
        }
    }

    pub fn with_annulus(mut self, annulus: Annulus) -> Self {
        self.annulus = annulus;
        self
    }

    pub fn terms(&self) -> &[ZernikeTerm] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.n).max().unwrap_or(0)
    }

    pub fn coefficient(&self, n: u32, m: i32) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.n == n && t.m == m)
            .map(|t| t.value)
            .sum()
    }

    /// Multiplies every coefficient by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(|t| t.value *= k);
        out
    }

    /// Drops terms whose `(n, m)` appears in `indices`.
    pub fn without(&self, indices: &[(u32, i32)]) -> Self {
        let mut out = self.clone();
        out.terms.retain(|t| !indices.contains(&(t.n, t.m)));
        out
    }

    /// Evaluator with the radial polynomials expanded once.
    pub fn evaluator(&self) -> ZernikeEvaluator {
        ZernikeEvaluator {
            terms: self
                .terms
                .iter()
                .filter(|t| t.value != 0.0)
                .map(|t| (t.m, t.value, radial_coefficients(t.n, t.m)))
                .collect(),
        }
    }

    /// Phase in waves at unit-disk coordinates.
    pub fn eval(&self, rho: f64, phi: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::domain(format!("pupil radius {rho} outside [0, 1]")));
        }
        Ok(self.evaluator().eval(rho, phi))
    }

    /// Reads `n m value` lines; `# lambda_nm <value>` and
    /// `# annulus <inner> <outer>` header comments set the metadata.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = io::read_text(path)?;
        let mut lambda = None;
        let mut annulus = Annulus::default();
        let mut terms = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let bad = |msg: &str| Error::parse(path, idx + 1, msg);
            if let Some(rest) = line.strip_prefix('#') {
                let mut f = rest.split_whitespace();
                match f.next() {
                    Some("lambda_nm") => {
                        lambda = Some(f.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad lambda_nm"))?);
                    }
                    Some("annulus") => {
                        let v: Vec<f64> = f.filter_map(|v| v.parse().ok()).collect();
                        if v.len() != 2 {
                            return Err(bad("annulus needs inner and outer fractions"));
                        }
                        annulus = Annulus::new(v[0], v[1]).map_err(|e| bad(&e.to_string()))?;
                    }
                    _ => {}
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("expected `n m value`"));
            }
            let n: u32 = f[0].parse().map_err(|_| bad("bad n"))?;
            let m: i32 = f[1].parse().map_err(|_| bad("bad m"))?;
            let value: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
            check_index(n, m).map_err(|e| bad(&e.to_string()))?;
            terms.push(ZernikeTerm { n, m, value });
        }
        let lambda = lambda.ok_or_else(|| Error::parse(path, 0, "missing `# lambda_nm` header"))?;
        Ok(Self::new(terms, lambda)?.with_annulus(annulus))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!(
            "# lambda_nm {}\n# annulus {} {}\n# n m value_waves\n",
            self.lambda_ref_nm, self.annulus.inner, self.annulus.outer
        );
        for t in &self.terms {
            let _ = writeln!(out, "{} {} {:e}", t.n, t.m, t.value);
        }
        io::write_text(path.as_ref(), &out)
    }
}

/// Precomputed evaluator for a [`ZernikeExpansion`].
/// Radial polynomial as `(coefficient, power)` pairs.
type RadialPoly = Vec<(f64, i32)>;

#[derive(Debug, Clone)]
pub struct ZernikeEvaluator {
    terms: Vec<(i32, f64, RadialPoly)>,
}

impl ZernikeEvaluator {
    pub fn eval(&self, rho: f64, phi: f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, value, poly)| {
                let r: f64 = poly.iter().map(|&(c, p)| c * rho.powi(p)).sum();
                let ang = if *m >= 0 {
                    (*m as f64 * phi).cos()
                } else {
                    (-*m as f64 * phi).sin()
                };
                value * r * ang
            })
            .sum()
    }
}

/// Piston, tip, tilt and defocus.
pub const MISALIGNMENT: [(u32, i32); 4] = [(0, 0), (1, -1), (1, 1), (2, 0)];

/// Gridded phase in waves at `lambda_ref_nm` with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub values: Array2<f64>,
    pub mask: Array2<bool>,
    pub lambda_ref_nm: f64,
}

impl PhaseMap {
    pub fn new(values: Array2<f64>, mask: Array2<bool>, lambda_ref_nm: f64) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::domain("phase values and mask differ in shape"));
        }
        let (r, c) = values.dim();
        if r < 2 || c < 2 {
            return Err(Error::domain("phase map needs at least 2x2 pixels"));
        }
        if values.iter().zip(mask.iter()).any(|(v, &m)| m && !v.is_finite()) {
            return Err(Error::domain("phase map holds non-finite values inside its mask"));
        }
        if !(lambda_ref_nm > 0.0) {
            return Err(Error::domain("reference wavelength must be positive"));
        }
        Ok(Self {
            values,
            mask,
            lambda_ref_nm,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Pupil coordinates `(x, y)` of pixel `(row, col)`.
    pub fn pupil(&self, row: usize, col: usize) -> (f64, f64) {
        pupil_coords(self.dim(), row, col)
    }

    /// Masks every pixel outside `annulus`.
    pub fn restricted(&self, annulus: Annulus) -> Self {
        let mut out = self.clone();
        for ((i, j), m) in out.mask.indexed_iter_mut() {
            let (x, y) = pupil_coords(self.values.dim(), i, j);
            *m = *m && annulus.contains(x.hypot(y));
        }
        out
    }

    /// Fraction of the annulus pixels that are valid.
    pub fn coverage(&self, annulus: Annulus) -> f64 {
        let (mut inside, mut valid) = (0usize, 0usize);
        for ((i, j), &m) in self.mask.indexed_iter() {
            let (x, y) = self.pupil(i, j);
            if annulus.contains(x.hypot(y)) {
                inside += 1;
                valid += m as usize;
            }
        }
        if inside == 0 {
            0.0
        } else {
            valid as f64 / inside as f64
        }
    }

    /// Bilinear interpolation at pupil coordinates; masked neighbours are
    /// skipped and the remaining weights renormalised.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (rows, cols) = self.dim();
        let fx = (x + 1.0) * 0.5 * (cols - 1) as f64;
        let fy = (y + 1.0) * 0.5 * (rows - 1) as f64;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= (cols - 1) as f64 && fy <= (rows - 1) as f64) {
            return None;
        }
        let j0 = (fx.floor() as usize).min(cols - 2);
        let i0 = (fy.floor() as usize).min(rows - 2);
        let (tx, ty) = (fx - j0 as f64, fy - i0 as f64);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (di, wy) in [(0, 1.0 - ty), (1, ty)] {
            for (dj, wx) in [(0, 1.0 - tx), (1, tx)] {
                let w = wx * wy;
                if w > 0.0 && self.mask[[i0 + di, j0 + dj]] {
                    acc += w * self.values[[i0 + di, j0 + dj]];
                    wsum += w;
                }
            }
        }
        (wsum > 0.0).then(|| acc / wsum)
    }

    /// Map displaced by `(dx, dy)` pixels (content moves towards +x, +y).
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let (rows, cols) = self.dim();
        let sx = 2.0 / (cols - 1) as f64;
        let sy = 2.0 / (rows - 1) as f64;
        let mut values = Array2::zeros((rows, cols));
        let mut mask = Array2::from_elem((rows, cols), false);
        for i in 0..rows {
            for j in 0..cols {
                let (x, y) = self.pupil(i, j);
                if let Some(v) = self.sample(x - dx * sx, y - dy * sy) {
                    values[[i, j]] = v;
                    mask[[i, j]] = true;
                }
            }
        }
        Self {
            values,
            mask,
            lambda_ref_nm: self.lambda_ref_nm,
        }
    }

    /// Reads a single-channel grid file (`NaN` = masked).
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (header, mut grids) = io::read_grid(path)?;
        if grids.len() != 1 {
            return Err(Error::parse(path, 1, "phase map files hold exactly one channel"));
        }
        let lambda = header
            .lambda_nm
            .ok_or_else(|| Error::parse(path, 1, "phase map header lacks lambda_nm"))?;
        let values = grids.remove(0);
        let mask = values.mapv(|v| !v.is_nan());
        let values = values.mapv(|v| if v.is_nan() { 0.0 } else { v });
        Self::new(values, mask, lambda)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let (rows, cols) = self.dim();
        let header = GridHeader {
            rows,
            cols,
            pixel_scale: None,
            center: None,
            channels: vec!["phase_waves".into()],
            lambda_nm: Some(self.lambda_ref_nm),
        };
        let out = ndarray::Zip::from(&self.values)
            .and(&self.mask)
            .map_collect(|&v, &m| if m { v } else { f64::NAN });
        io::write_grid(path, &header, &[&out])
    }
}

fn pupil_coords((rows, cols): (usize, usize), row: usize, col: usize) -> (f64, f64) {
    (
        -1.0 + 2.0 * col as f64 / (cols - 1) as f64,
        -1.0 + 2.0 * row as f64 / (rows - 1) as f64,
    )
}

/// Samples an expansion on a `size × size` grid, masked to its annulus.
pub fn render(expansion: &ZernikeExpansion, size: usize) -> Result<PhaseMap> {
    if size < 3 {
        return Err(Error::domain("grid size must be at least 3"));
    }
    let ev = expansion.evaluator();
    let annulus = expansion.annulus;
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..size)
        .into_par_iter()
        .map(|i| {
            let mut v = vec![0.0; size];
            let mut m = vec![false; size];
            for j in 0..size {
                let (x, y) = pupil_coords((size, size), i, j);
                let r = x.hypot(y);
                if annulus.contains(r) {
                    v[j] = ev.eval(r, y.atan2(x));
                    m[j] = true;
                }
            }
            (v, m)
        })
        .collect();
    let values = Array2::from_shape_vec((size, size), rows.iter().flat_map(|r| r.0.clone()).collect())
        .expect("square grid");
    let mask = Array2::from_shape_vec((size, size), rows.iter().flat_map(|r| r.1.clone()).collect())
        .expect("square grid");
    PhaseMap::new(values, mask, expansion.lambda_ref_nm)
}

/// Peak-to-valley and RMS (about the mean) in waves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvRms {
    pub pv: f64,
    pub rms: f64,
}

/// PV/RMS over the valid pixels of `map` inside `annulus`.
pub fn pv_rms(map: &PhaseMap, annulus: Annulus) -> Result<PvRms> {
    let vals: Vec<f64> = map
        .values
        .indexed_iter()
        .filter(|&((i, j), _)| {
            let (x, y) = map.pupil(i, j);
            map.mask[[i, j]] && annulus.contains(x.hypot(y))
        })
        .map(|(_, &v)| v)
        .collect();
    stats(&vals)
}

fn stats(vals: &[f64]) -> Result<PvRms> {
    if vals.is_empty() {
        return Err(Error::domain("no valid pixels in the metric domain"));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PvRms {
        pv: max - min,
        rms: var.sqrt(),
    })
}

/// PV/RMS of an expansion over `annulus`, from an area-weighted polar
/// quadrature (RMS) and a dense polar sampling (PV).
pub fn pv_rms_expansion(expansion: &ZernikeExpansion, annulus: Annulus) -> Result<PvRms> {
    let ev = expansion.evaluator();
    let n_phi = 4 * (expansion.degree() as usize + 4) * 16;
    let rule = crate::quadrature::GaussRule::new(
        expansion.degree() as usize / 2 + 8,
        annulus.inner * annulus.inner,
        annulus.outer * annulus.outer,
    )?;
    // ρ² as the radial variable makes the area element uniform
    let (mut s1, mut s2, mut wsum) = (0.0, 0.0, 0.0);
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        let r = u.sqrt();
        for k in 0..n_phi {
            let v = ev.eval(r, 2.0 * PI * k as f64 / n_phi as f64);
            s1 += w * v;
            s2 += w * v * v;
            wsum += w;
        }
    }
    let mean = s1 / wsum;
    let rms = (s2 / wsum - mean * mean).max(0.0).sqrt();

    let n_r = 400;
    let n_a = 1440;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=n_r {
        let r = annulus.inner + (annulus.outer - annulus.inner) * i as f64 / n_r as f64;
        for k in 0..n_a {
            let v = ev.eval(r, 2.0 * PI * k as f64 / n_a as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok(PvRms { pv: hi - lo, rms })
}

/// Result of a least-squares Zernike fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ZernikeFit {
    pub expansion: ZernikeExpansion,
    /// RMS of the map minus the full fit (before misalignment removal).
    pub residual_rms: f64,
    /// Condition estimate of the design matrix.
    pub condition: f64,
}

/// Least-squares fit of all terms up to `degree` on the valid pixels.
/// With `remove_misalignment`, piston, tip/tilt and defocus are zeroed after
/// fitting.
pub fn zernike_fit(map: &PhaseMap, degree: u32, remove_misalignment: bool) -> Result<ZernikeFit> {
    if degree < 2 {
        return Err(Error::domain("fit degree must be at least 2"));
    }
    let idx = indices_up_to(degree);
    let k = idx.len();
    let basis: Vec<ZernikeEvaluator> = idx
        .iter()
        .map(|&(n, m)| ZernikeExpansion::zero(1.0).with_term(n, m, 1.0).evaluator())
        .collect();
    let pixels: Vec<(f64, f64, f64)> = map
        .mask
        .indexed_iter()
        .filter(|(_, &m)| m)
        .map(|((i, j), _)| {
            let (x, y) = map.pupil(i, j);
            (x.hypot(y), y.atan2(x), map.values[[i, j]])
        })
        .filter(|&(r, _, _)| r <= 1.0 + 1e-12)
        .collect();
    if pixels.len() < k {
        return Err(Error::Conditioning {
            condition: f64::INFINITY,
            detail: format!("{} valid pixels for {k} terms", pixels.len()),
        });
    }

    let (ata, atb) = pixels
        .par_chunks(4096)
        .map(|chunk| {
            let mut ata = DMatrix::<f64>::zeros(k, k);
            let mut atb = DVector::<f64>::zeros(k);
            let mut row = DVector::<f64>::zeros(k);
            for &(r, phi, v) in chunk {
                for (c, b) in basis.iter().enumerate() {
                    row[c] = b.eval(r.min(1.0), phi);
                }
                ata.syger(1.0, &row, &row, 1.0);
                atb.axpy(v, &row, 1.0);
            }
            (ata, atb)
        })
        .reduce(
            || (DMatrix::zeros(k, k), DVector::zeros(k)),
            |(a1, b1), (a2, b2)| (a1 + a2, b1 + b2),
        );
    let ata = DMatrix::from_fn(k, k, |i, j| if i >= j { ata[(i, j)] } else { ata[(j, i)] });

    let sv = ata.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    // normal equations square the condition number
    let condition = if smin > 0.0 { (smax / smin).sqrt() } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Conditioning {
            condition,
            detail: format!("mask too sparse for degree {degree}"),
        });
    }
    let coef = ata
        .cholesky()
        .ok_or_else(|| Error::Conditioning {
            condition,
            detail: "normal matrix not positive definite".into(),
        })?
        .solve(&atb);

    let terms: Vec<ZernikeTerm> = idx
        .iter()
        .zip(coef.iter())
        .map(|(&(n, m), &value)| ZernikeTerm { n, m, value })
        .collect();
    let full = ZernikeExpansion::new(terms, map.lambda_ref_nm)?;
    let ev = full.evaluator();
    let resid: Vec<f64> = pixels.iter().map(|&(r, phi, v)| v - ev.eval(r.min(1.0), phi)).collect();
    let residual_rms = (resid.iter().map(|e| e * e).sum::<f64>() / resid.len() as f64).sqrt();
    let expansion = if remove_misalignment {
        full.without(&MISALIGNMENT)
    } else {
        full
    };
    Ok(ZernikeFit {
        expansion,
        residual_rms,
        condition,
    })
}

impl ZernikeExpansion {
    /// Adds (or accumulates into) a single term.
    pub fn with_term(mut self, n: u32, m: i32, value: f64) -> Self {
        match self.terms.iter_mut().find(|t| t.n == n && t.m == m) {
            Some(t) => t.value += value,
            None => self.terms.push(ZernikeTerm { n, m, value }),
        }
        self
    }
}

/// Halves a double-pass interferometric map.
pub fn single_pass(measured: &PhaseMap) -> PhaseMap {
    PhaseMap {
        values: measured.values.mapv(|v| v * 0.5),
        ..measured.clone()
    }
}

/// Phase conjugate of an aberration.
pub fn make_phase_plate(aberration: &PhaseMap) -> PhaseMap {
    PhaseMap {
        values: aberration.values.mapv(|v| -v),
        ..aberration.clone()
    }
}

/// Wavefront after passing `aberration` and `plate` (same grid and
/// wavelength); valid where both are.
pub fn compensate(aberration: &PhaseMap, plate: &PhaseMap) -> Result<PhaseMap> {
    if aberration.dim() != plate.dim() {
        return Err(Error::domain("aberration and plate grids differ"));
    }
    if aberration.lambda_ref_nm != plate.lambda_ref_nm {
        return Err(Error::domain("aberration and plate use different reference wavelengths"));
    }
    let mask = ndarray::Zip::from(&aberration.mask)
        .and(&plate.mask)
        .map_collect(|&a, &b| a && b);
    let values = ndarray::Zip::from(&aberration.values)
        .and(&plate.values)
        .and(&mask)
        .map_collect(|&a, &p, &m| if m { a + p } else { 0.0 });
    PhaseMap::new(values, mask, aberration.lambda_ref_nm)
}

/// Three-term Sellmeier dispersion `n² = 1 + Σ Bᵢλ²/(λ² − Cᵢ)`, λ in µm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sellmeier {
    pub b: [f64; 3],
    pub c_um2: [f64; 3],
    /// Validity range in nm.
    pub valid_nm: (f64, f64),
    pub source: &'static str,
}

/// Fused silica at room temperature.
pub const FUSED_SILICA: Sellmeier = Sellmeier {
    b: [0.696_166_3, 0.407_942_6, 0.897_479_4],
    c_um2: [
        0.068_404_3 * 0.068_404_3,
        0.116_241_4 * 0.116_241_4,
        9.896_161 * 9.896_161,
    ],
    valid_nm: (210.0, 3710.0),
    source: "I. H. Malitson, J. Opt. Soc. Am. 55, 1205 (1965)",
};

impl Sellmeier {
    pub fn index(&self, lambda_nm: f64) -> Result<f64> {
        let (lo, hi) = self.valid_nm;
        if !(lambda_nm >= lo && lambda_nm <= hi) {
            return Err(Error::domain(format!(
                "wavelength {lambda_nm} nm outside dispersion model range [{lo}, {hi}] nm"
            )));
        }
        let l2 = (lambda_nm * 1e-3).powi(2);
        let n2 = 1.0
            + self
                .b
                .iter()
                .zip(&self.c_um2)
                .map(|(b, c)| b * l2 / (l2 - c))
                .sum::<f64>();
        Ok(n2.sqrt())
    }
}

/// Residual phase at `lambda1` per wave of plate phase at `lambda0`.
///
/// The mirror aberration in waves scales as `λ₀/λ₁`, the plate phase as
/// `(n₁−1)λ₀ / ((n₀−1)λ₁)`; the residual is their sum with the plate
/// cancelling the aberration exactly at `λ₀`.
pub fn rescale_factor(model: &Sellmeier, lambda0_nm: f64, lambda1_nm: f64) -> Result<f64> {
    let n0 = model.index(lambda0_nm)?;
    let n1 = model.index(lambda1_nm)?;
    Ok(lambda0_nm / lambda1_nm * ((n1 - 1.0) / (n0 - 1.0) - 1.0))
}

/// Residual wavefront (waves at `lambda1_nm`) of a plate designed at its
/// reference wavelength and used at `lambda1_nm`.
pub fn rescale_wavelength(plate: &PhaseMap, lambda1_nm: f64, model: &Sellmeier) -> Result<PhaseMap> {
    let k = rescale_factor(model, plate.lambda_ref_nm, lambda1_nm)?;
    PhaseMap::new(plate.values.mapv(|v| v * k), plate.mask.clone(), lambda1_nm)
}
