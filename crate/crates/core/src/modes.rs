//! Entrance-plane modes, their overlap, and the coupling figures of merit.
//!
//! All profiles are scalar radial amplitudes of radially polarized fields in
//! the mirror's entrance plane, as functions of `ρ = r/f`.

use std::path::Path;

use crate::geometry::ApertureSpec;
use crate::quadrature::{golden_section_max, simpson};
use crate::{io, Error, Result};

/// Radial amplitude of the ideal dipole mode after reflection off the mirror,
/// `ρ / ((ρ/2)² + 1)²`, for a linear dipole along the mirror axis.
pub fn dipole_profile(rho: f64) -> Result<f64> {
    check_radius(rho)?;
    Ok(dipole_amplitude(rho))
}

/// Radially polarized doughnut amplitude `ρ·exp(−ρ²/w̃²)` with waist `w̃ = w/f`.
pub fn doughnut_profile(rho: f64, waist: f64) -> Result<f64> {
    check_radius(rho)?;
    check_waist(waist)?;
    Ok(doughnut_amplitude(rho, waist))
}

fn dipole_amplitude(rho: f64) -> f64 {
    let q = 0.25 * rho * rho + 1.0;
    rho / (q * q)
}

fn doughnut_amplitude(rho: f64, waist: f64) -> f64 {
    rho * (-(rho * rho) / (waist * waist)).exp()
}

fn check_radius(rho: f64) -> Result<()> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("radius must be finite and >= 0, got {rho}")))
    }
}

fn check_waist(waist: f64) -> Result<()> {
    if waist > 0.0 && waist.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("waist must be positive, got {waist}")))
    }
}

/// Tabulated radial profile, linearly interpolated and zero outside the
/// sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledProfile {
    rho: Vec<f64>,
    amplitude: Vec<f64>,
}

impl SampledProfile {
    pub fn new(rho: Vec<f64>, amplitude: Vec<f64>) -> Result<Self> {
        if rho.len() != amplitude.len() || rho.len() < 2 {
            return Err(Error::domain(
                "sampled profile needs at least two (rho, amplitude) pairs",
            ));
        }
        if rho[0] < 0.0 || rho.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain(
                "sampled radii must be non-negative and strictly increasing",
            ));
        }
        if amplitude.iter().any(|a| !a.is_finite()) {
            return Err(Error::domain("sampled amplitudes must be finite"));
        }
        Ok(Self { rho, amplitude })
    }

    /// Reads a two-column `rho amplitude` text file (`#` starts a comment).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = io::read_columns(path, 2)?;
        let (rho, amplitude) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
        Self::new(rho, amplitude)
    }

    pub fn radii(&self) -> &[f64] {
        &self.rho
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let first = self.rho[0];
        let last = self.rho[self.rho.len() - 1];
        if rho < first || rho > last {
            return 0.0;
        }
        let i = self.rho.partition_point(|&r| r <= rho).clamp(1, self.rho.len() - 1);
        let (r0, r1) = (self.rho[i - 1], self.rho[i]);
        let t = (rho - r0) / (r1 - r0);
        self.amplitude[i - 1] * (1.0 - t) + self.amplitude[i] * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModeKind {
    Dipole,
    Doughnut { waist: f64 },
    Sampled(SampledProfile),
}

/// Radially polarized entrance-plane mode with amplitude scale `E₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMode {
    pub kind: ModeKind,
    pub scale: f64,
}

impl RadialMode {
    pub fn dipole() -> Self {
        Self {
            kind: ModeKind::Dipole,
            scale: 1.0,
        }
    }

    pub fn doughnut(waist: f64) -> Result<Self> {
        check_waist(waist)?;
        Ok(Self {
            kind: ModeKind::Doughnut { waist },
            scale: 1.0,
        })
    }

    pub fn sampled(profile: SampledProfile) -> Self {
        Self {
            kind: ModeKind::Sampled(profile),
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Field amplitude at `ρ ≥ 0`.
    pub fn amplitude(&self, rho: f64) -> f64 {
        self.scale
            * match &self.kind {
                ModeKind::Dipole => dipole_amplitude(rho),
                ModeKind::Doughnut { waist } => doughnut_amplitude(rho, *waist),
                ModeKind::Sampled(p) => p.eval(rho),
            }
    }

    fn knots(&self) -> &[f64] {
        match &self.kind {
            ModeKind::Sampled(p) => p.radii(),
            _ => &[],
        }
    }
}

/// Integration settings for entrance-plane overlaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapQuadrature {
    /// Simpson sub-intervals on the first pass.
    pub intervals: usize,
    /// Passes double the interval count until `|Δη|` drops below this.
    pub tolerance: f64,
    pub max_intervals: usize,
}

impl Default for OverlapQuadrature {
    fn default() -> Self {
        Self {
            intervals: 4096,
            tolerance: 1e-9,
            max_intervals: 1 << 21,
        }
    }
}

/// Normalized overlap `∫ab ρdρ / √(∫a²ρdρ ∫b²ρdρ)` over `[ρ_bore, ρ_max]`.
pub fn spatial_overlap(a: &RadialMode, b: &RadialMode, aperture: &ApertureSpec) -> Result<f64> {
    spatial_overlap_with(a, b, aperture, |_| 1.0, &OverlapQuadrature::default())
}

/// [`spatial_overlap`] with the first mode multiplied by a radial weight
/// (e.g. the amplitude reflectivity it picks up on the mirror).
pub fn spatial_overlap_with<W: Fn(f64) -> f64>(
    a: &RadialMode,
    b: &RadialMode,
    aperture: &ApertureSpec,
    weight: W,
    quad: &OverlapQuadrature,
) -> Result<f64> {
    spatial_overlap_with_breaks(a, b, aperture, weight, &[], quad)
}

/// [`spatial_overlap_with`] for a weight that may jump at `breaks`. The
/// weight is evaluated strictly inside each segment.
pub fn spatial_overlap_with_breaks<W: Fn(f64) -> f64>(
    a: &RadialMode,
    b: &RadialMode,
    aperture: &ApertureSpec,
    weight: W,
    breaks: &[f64],
    quad: &OverlapQuadrature,
) -> Result<f64> {
    aperture.validate()?;
    let user_breaks = breaks;
    let lo = aperture.rho_bore();
    let hi = aperture.rho_max();
    let mut breaks = vec![lo];
    breaks.extend(
        a.knots()
            .iter()
            .chain(b.knots())
            .chain(user_breaks)
            .copied()
            .filter(|&k| k > lo && k < hi),
    );
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let eval = |n: usize| -> Result<f64> {
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for seg in breaks.windows(2) {
            let (s0, s1) = (seg[0], seg[1]);
            let share = ((s1 - s0) / (hi - lo) * n as f64).ceil() as usize;
            let m = share.max(2);
            let w = |r: f64| weight(r.clamp(s0.next_up(), s1.next_down()));
            ab += simpson(|r| w(r) * a.amplitude(r) * b.amplitude(r) * r, s0, s1, m);
            aa += simpson(|r| (w(r) * a.amplitude(r)).powi(2) * r, s0, s1, m);
            bb += simpson(|r| b.amplitude(r).powi(2) * r, s0, s1, m);
        }
        let norm = (aa * bb).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::UndefinedOverlap(
                "a mode has zero norm on the aperture".into(),
            ));
        }
        Ok((ab / norm).clamp(-1.0, 1.0))
    };

    let mut n = quad.intervals.max(2);
    let mut prev = eval(n)?;
    loop {
        n *= 2;
        if n > quad.max_intervals {
            return Err(Error::Convergence(format!(
                "overlap quadrature not converged to {} with {} intervals",
                quad.tolerance, quad.max_intervals
            )));
        }
        let next = eval(n)?;
        if (next - prev).abs() < quad.tolerance {
            return Ok(next);
        }
        prev = next;
    }
}

/// Best doughnut waist for a given aperture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaistOptimum {
    /// Optimal waist `w̃ = w/f`.
    pub waist: f64,
    /// Overlap with the dipole mode at the optimum.
    pub eta: f64,
    pub evaluations: usize,
}

/// Maximises the doughnut/dipole overlap over the waist.
pub fn optimize_waist(aperture: &ApertureSpec) -> Result<WaistOptimum> {
    optimize_waist_with(aperture, |_| 1.0, &OverlapQuadrature::default())
}

/// Waist optimisation with a radial weight applied to the doughnut (see
/// [`spatial_overlap_with`]).
pub fn optimize_waist_with<W: Fn(f64) -> f64 + Copy>(
    aperture: &ApertureSpec,
    weight: W,
    quad: &OverlapQuadrature,
) -> Result<WaistOptimum> {
    aperture.validate()?;
    let dipole = RadialMode::dipole();
    let lo = 0.1;
    let hi = aperture.rho_max().max(1.0);
    let eta_at = |w: f64| -> Result<f64> {
        let mode = RadialMode::doughnut(w)?;
        spatial_overlap_with(&mode, &dipole, aperture, weight, quad)
    };

    // coarse scan: locate the peak and check there is only one
    const SCAN: usize = 48;
    let grid: Vec<f64> = (0..SCAN)
        .map(|i| lo * (hi / lo).powf(i as f64 / (SCAN - 1) as f64))
        .collect();
    let values = grid.iter().map(|&w| eta_at(w)).collect::<Result<Vec<_>>>()?;
    let peaks = (1..SCAN - 1)
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .count();
    let best = values
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if peaks != 1 || best == 0 || best == SCAN - 1 {
        return Err(Error::Convergence(format!(
            "overlap is not unimodal in the waist on [{lo}, {hi}] ({peaks} interior peaks, best at scan index {best})"
        )));
    }

    let mut failure = None;
    let found = golden_section_max(
        |w| match eta_at(w) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        grid[best - 1],
        grid[best + 1],
        1e-7,
        200,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let found = found?;
    Ok(WaistOptimum {
        waist: found.x,
        eta: found.value,
        evaluations: found.evaluations + SCAN,
    })
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Free-space coupling strength `G = (Ω_μ/Ω_max)·η²·S` with the Strehl ratio
/// `S` entering as a multiplicative loss.
pub fn coupling_strength(omega_fraction: f64, eta: f64, strehl: f64) -> Result<f64> {
    check_unit("solid-angle fraction", omega_fraction)?;
    check_unit("spatial overlap", eta)?;
    check_unit("Strehl ratio", strehl)?;
    Ok(omega_fraction * eta * eta * strehl)
}

/// Absorption probability `P_a = G·η_t²·b` for a transition with branching
/// factor `b` (1 for a closed two-level system).
pub fn absorption_probability(g: f64, eta_t: f64, branching: f64) -> Result<f64> {
    check_unit("coupling strength", g)?;
    check_unit("temporal overlap", eta_t)?;
    check_unit("branching factor", branching)?;
    Ok(g * eta_t * eta_t * branching)
}

/// All factors of the coupling budget for one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingFigures {
    pub omega_fraction: f64,
    pub eta: f64,
    pub strehl: f64,
    pub eta_t: f64,
    pub branching: f64,
    pub g: f64,
    pub p_a: f64,
}

impl CouplingFigures {
    pub fn assemble(
        omega_fraction: f64,
        eta: f64,
        strehl: f64,
        eta_t: f64,
        branching: f64,
    ) -> Result<Self> {
        let g = coupling_strength(omega_fraction, eta, strehl)?;
        let p_a = absorption_probability(g, eta_t, branching)?;
        Ok(Self {
            omega_fraction,
            eta,
            strehl,
            eta_t,
            branching,
            g,
            p_a,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Fine-grid trapezoid overlap, independent of the Simpson path.
    fn trapezoid_overlap(a: impl Fn(f64) -> f64, b: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 2_000_000;
        let h = (hi - lo) / n as f64;
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let r = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let (x, y) = (a(r), b(r));
            ab += w * x * y * r;
            aa += w * x * x * r;
            bb += w * y * y * r;
        }
        ab / (aa * bb).sqrt()
    }

    #[test]
    fn dipole_profile_examples() {
        assert_eq!(dipole_profile(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(dipole_profile(2.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(dipole_profile(-1.0).is_err());
        assert!(dipole_profile(1e6).unwrap() < 1e-16);
    }

    #[test]
    fn dipole_peak_location() {
        let peak = 2.0 / 3f64.sqrt();
        let m = golden_section_max(dipole_amplitude, 0.0, 4.0, 1e-12, 300).unwrap();
        assert_abs_diff_eq!(m.x, peak, epsilon = 1e-7);
        assert_abs_diff_eq!(peak, 1.1547, epsilon = 1e-4);
    }

    #[test]
    fn doughnut_profile_examples() {
        let w = 2.26;
        assert_eq!(doughnut_profile(0.0, w).unwrap(), 0.0);
        assert_abs_diff_eq!(
            doughnut_profile(w, w).unwrap(),
            w * (-1f64).exp(),
            epsilon = 1e-15
        );
        let m = golden_section_max(|r| doughnut_amplitude(r, w), 0.0, 10.0, 1e-12, 300).unwrap();
        assert_abs_diff_eq!(m.x, w / 2f64.sqrt(), epsilon = 1e-7);
        assert!(doughnut_profile(1.0, 0.0).is_err());
        assert!(RadialMode::doughnut(-2.0).is_err());
    }

    #[test]
    fn self_overlap_is_one() {
        let a = ApertureSpec::default();
        let eta = spatial_overlap(&RadialMode::dipole(), &RadialMode::dipole(), &a).unwrap();
        assert_abs_diff_eq!(eta, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn doughnut_at_reference_waist() {
        let a = ApertureSpec::default();
        let eta =
            spatial_overlap(&RadialMode::doughnut(2.26).unwrap(), &RadialMode::dipole(), &a)
                .unwrap();
        assert_abs_diff_eq!(eta, 0.982, epsilon = 0.001);
    }

    #[test]
    fn narrow_doughnut_matches_trapezoid_oracle() {
        let a = ApertureSpec::default();
        let oracle = trapezoid_overlap(
            |r| doughnut_amplitude(r, 1.13),
            dipole_amplitude,
            a.rho_bore(),
            a.rho_max(),
        );
        let eta =
            spatial_overlap(&RadialMode::doughnut(1.13).unwrap(), &RadialMode::dipole(), &a)
                .unwrap();
        assert!(eta < 0.982);
        assert_abs_diff_eq!(eta, oracle, epsilon = 1e-9);
    }

    #[test]
    fn zero_mode_is_undefined() {
        let zero = RadialMode::dipole().with_scale(0.0);
        let err = spatial_overlap(&zero, &RadialMode::dipole(), &ApertureSpec::default());
        assert!(matches!(err, Err(Error::UndefinedOverlap(_))));
    }

    #[test]
    fn sampled_profile_interpolates_and_windows() {
        let p = SampledProfile::new(vec![1.0, 2.0, 4.0], vec![1.0, 3.0, 1.0]).unwrap();
        assert_eq!(p.eval(0.5), 0.0);
        assert_eq!(p.eval(1.5), 2.0);
        assert_eq!(p.eval(3.0), 2.0);
        assert_eq!(p.eval(4.0), 1.0);
        assert_eq!(p.eval(4.1), 0.0);
        assert!(SampledProfile::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(SampledProfile::new(vec![-1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn sampled_dipole_converges_to_analytic() {
        let rho: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.0025).collect();
        let amp = rho.iter().map(|&r| dipole_amplitude(r)).collect();
        let mode = RadialMode::sampled(SampledProfile::new(rho, amp).unwrap());
        let a = ApertureSpec::default();
        let eta = spatial_overlap(&mode, &RadialMode::dipole(), &a).unwrap();
        assert_abs_diff_eq!(eta, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn default_waist_optimum() {
        let opt = optimize_waist(&ApertureSpec::default()).unwrap();
        assert_abs_diff_eq!(opt.waist, 2.26, epsilon = 0.02);
        assert_abs_diff_eq!(opt.eta, 0.982, epsilon = 0.001);
    }

    #[test]
    fn optimum_is_stationary() {
        let a = ApertureSpec::default();
        let opt = optimize_waist(&a).unwrap();
        let dip = RadialMode::dipole();
        let eta = |w: f64| spatial_overlap(&RadialMode::doughnut(w).unwrap(), &dip, &a).unwrap();
        let h = 1e-3;
        let slope = (eta(opt.waist + h) - eta(opt.waist - h)) / (2.0 * h);
        assert!(slope.abs() < 1e-4, "slope {slope}");
    }

    #[test]
    fn open_aperture_optimum_is_local_maximum() {
        let a = ApertureSpec::new(1.0, 1000.0, 0.0).unwrap();
        let opt = optimize_waist(&a).unwrap();
        let dip = RadialMode::dipole();
        let eta = |w: f64| spatial_overlap(&RadialMode::doughnut(w).unwrap(), &dip, &a).unwrap();
        assert!(opt.eta >= eta(opt.waist * 1.1));
        assert!(opt.eta >= eta(opt.waist * 0.9));
    }

    #[test]
    fn coupling_examples() {
        assert_eq!(coupling_strength(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(coupling_strength(0.94, 0.982, 1.0).unwrap(), 0.906, epsilon = 5e-4);
        assert_abs_diff_eq!(coupling_strength(0.94, 0.979, 0.99).unwrap(), 0.892, epsilon = 1e-3);
        assert!(coupling_strength(1.1, 1.0, 1.0).is_err());
        assert!(coupling_strength(1.0, -0.1, 1.0).is_err());
    }

    #[test]
    fn absorption_examples() {
        assert_eq!(absorption_probability(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(absorption_probability(0.885, 0.99, 1.0).unwrap(), 0.867, epsilon = 1e-3);
        assert_abs_diff_eq!(
            absorption_probability(0.892, 0.96, 1.0 / 3.0).unwrap(),
            0.274,
            epsilon = 2e-3
        );
        assert!(absorption_probability(0.5, 0.5, 1.5).is_err());
    }

    #[test]
    fn figures_satisfy_identities() {
        let f = CouplingFigures::assemble(0.94, 0.975, 0.99, 0.99, 1.0).unwrap();
        assert_eq!(f.g, 0.94 * 0.975 * 0.975 * 0.99);
        assert_eq!(f.p_a, f.g * 0.99 * 0.99);
    }

    fn sampled_mode(values: &[f64]) -> RadialMode {
        let n = values.len();
        let rho = (0..n).map(|i| 5.0 * i as f64 / (n - 1) as f64).collect();
        RadialMode::sampled(SampledProfile::new(rho, values.to_vec()).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn overlap_bounded_and_symmetric(
            va in prop::collection::vec(0.01f64..1.0, 8),
            vb in prop::collection::vec(0.01f64..1.0, 8),
        ) {
            let ap = ApertureSpec::default();
            let (a, b) = (sampled_mode(&va), sampled_mode(&vb));
            let ab = spatial_overlap(&a, &b, &ap).unwrap();
            let ba = spatial_overlap(&b, &a, &ap).unwrap();
            prop_assert!(ab.abs() <= 1.0);
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn overlap_is_scale_invariant(w in 0.5f64..4.0, c in 1e-3f64..1e3) {
            let ap = ApertureSpec::default();
            let d = RadialMode::doughnut(w).unwrap();
            let base = spatial_overlap(&d, &RadialMode::dipole(), &ap).unwrap();
            let scaled = spatial_overlap(&d.with_scale(c), &RadialMode::dipole(), &ap).unwrap();
            prop_assert!((base - scaled).abs() < 1e-12);
        }

        #[test]
        fn proportional_profiles_overlap_fully(v in prop::collection::vec(0.01f64..1.0, 8), c in 0.1f64..10.0) {
            let ap = ApertureSpec::default();
            let a = sampled_mode(&v);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let eta = spatial_overlap(&a, &sampled_mode(&scaled), &ap).unwrap();
            prop_assert!((eta - 1.0).abs() < 1e-12);
        }
    }
}
