//! Parabolic-mirror coordinate maps.
//!
//! The mirror surface is `z = r²/(4f) − f` with the focus at the origin. A ray
//! entering parallel to the axis at radius `ρ = r/f` is reflected through the
//! focus; seen from the focus, the reflection point lies at the polar angle
//! `ϑ = 2·arctan(ρ/2)` measured from the direction of the vertex. The vertex is
//! at `ϑ = 0` and the open aperture faces `ϑ = π`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::quadrature::GaussRule;
use crate::{Error, Result};

/// Maximum dipole-weighted solid angle, `∫ sin²ϑ dΩ` over the full sphere.
pub const MAX_WEIGHTED_SOLID_ANGLE: f64 = 8.0 * PI / 3.0;

/// Geometry of a deep parabolic mirror with an on-axis bore.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    /// Focal length in millimetres.
    pub focal_length_mm: f64,
    /// Radius of the front aperture in millimetres.
    pub outer_radius_mm: f64,
    /// Radius of the central bore in millimetres.
    pub bore_radius_mm: f64,
}

impl Default for ApertureSpec {
    fn default() -> Self {
        Self {
            focal_length_mm: 2.1,
            outer_radius_mm: 10.0,
            bore_radius_mm: 0.75,
        }
    }
}

impl ApertureSpec {
    pub fn new(focal_length_mm: f64, outer_radius_mm: f64, bore_radius_mm: f64) -> Result<Self> {
        let spec = Self {
            focal_length_mm,
            outer_radius_mm,
            bore_radius_mm,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same mirror with the bore closed.
    pub fn without_bore(self) -> Self {
        Self {
            bore_radius_mm: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length_mm > 0.0 && self.focal_length_mm.is_finite()) {
            return Err(Error::domain(format!(
                "focal length must be positive, got {}",
                self.focal_length_mm
            )));
        }
        if !(self.bore_radius_mm >= 0.0
            && self.bore_radius_mm < self.outer_radius_mm
            && self.outer_radius_mm.is_finite())
        {
            return Err(Error::domain(format!(
                "need 0 <= bore radius < outer radius, got bore {} and outer {}",
                self.bore_radius_mm, self.outer_radius_mm
            )));
        }
        Ok(())
    }

    /// Outer radius in units of the focal length.
    pub fn rho_max(&self) -> f64 {
        self.outer_radius_mm / self.focal_length_mm
    }

    /// Bore radius in units of the focal length.
    pub fn rho_bore(&self) -> f64 {
        self.bore_radius_mm / self.focal_length_mm
    }

    /// Half opening angle of the mirror (polar angle of the rim).
    pub fn theta_max(&self) -> f64 {
        rho_to_theta(self.rho_max())
    }

    pub fn theta_bore(&self) -> f64 {
        rho_to_theta(self.rho_bore())
    }

    /// Polar-angle range illuminated through the annulus `[ρ_bore, ρ_max]`.
    pub fn angle_interval(&self) -> AngleInterval {
        AngleInterval {
            theta_min: self.theta_bore(),
            theta_max: self.theta_max(),
        }
    }
}

/// Range of polar angles `[ϑ_min, ϑ_max]` seen from the focus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub theta_min: f64,
    pub theta_max: f64,
}

impl AngleInterval {
    /// Accepts `0 ≤ ϑ_min ≤ ϑ_max ≤ π`; equal bounds give an empty interval.
    pub fn new(theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(0.0 <= theta_min && theta_min <= theta_max && theta_max <= PI) {
            return Err(Error::domain(format!(
                "angle interval [{theta_min}, {theta_max}] outside 0 <= min <= max <= pi"
            )));
        }
        Ok(Self {
            theta_min,
            theta_max,
        })
    }

    pub fn from_degrees(min_deg: f64, max_deg: f64) -> Result<Self> {
        Self::new(min_deg.to_radians(), max_deg.to_radians())
    }

    pub fn full_sphere() -> Self {
        Self {
            theta_min: 0.0,
            theta_max: PI,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.theta_max <= self.theta_min
    }

    pub fn width(&self) -> f64 {
        self.theta_max - self.theta_min
    }
}

fn rho_to_theta(rho: f64) -> f64 {
    2.0 * (0.5 * rho).atan()
}

/// Polar angle `ϑ = 2·arctan(ρ/2)` of the ray entering at radius `ρ = r/f`.
pub fn theta_from_rho(rho: f64) -> Result<f64> {
    if !(rho >= 0.0) || rho.is_infinite() {
        return Err(Error::domain(format!("radius must be finite and >= 0, got {rho}")));
    }
    Ok(rho_to_theta(rho))
}

/// Inverse of [`theta_from_rho`]: `ρ = 2·tan(ϑ/2)`.
pub fn rho_from_theta(theta: f64) -> Result<f64> {
    if !(0.0..PI).contains(&theta) {
        return Err(Error::domain(format!("polar angle must lie in [0, pi), got {theta}")));
    }
    Ok(2.0 * (0.5 * theta).tan())
}

/// Angle of incidence on the mirror surface for the ray that reaches the
/// focus under polar angle `ϑ`.
///
/// The surface normal at radius `r` is tilted by `arctan(r/2f)` from the
/// axis, so `α = ϑ/2`: normal incidence at the vertex, 45° at `r = 2f`.
pub fn incidence_angle(theta: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::domain(format!("polar angle must lie in [0, pi], got {theta}")));
    }
    Ok((0.5 * theta).min(FRAC_PI_2))
}

/// Dipole-weighted solid angle of a polar-angle interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSolidAngle {
    /// `Ω_μ = 2π ∫ sin³ϑ dϑ` in steradians.
    pub steradians: f64,
    /// `Ω_μ / (8π/3)`.
    pub fraction: f64,
    /// Set when the interval is empty.
    pub degenerate: bool,
}

// antiderivative of sin³
fn sin3_primitive(theta: f64) -> f64 {
    let c = theta.cos();
    -c + c * c * c / 3.0
}

/// Solid angle weighted with the radiation pattern `sin²ϑ` of a linear dipole
/// oriented along the mirror axis, assuming full azimuthal coverage.
pub fn weighted_solid_angle(interval: AngleInterval) -> WeightedSolidAngle {
    if interval.is_empty() {
        return WeightedSolidAngle {
            steradians: 0.0,
            fraction: 0.0,
            degenerate: true,
        };
    }
    let steradians =
        2.0 * PI * (sin3_primitive(interval.theta_max) - sin3_primitive(interval.theta_min));
    WeightedSolidAngle {
        steradians,
        fraction: steradians / MAX_WEIGHTED_SOLID_ANGLE,
        degenerate: false,
    }
}

/// Quadrature evaluation of the same integral, kept as a cross-check of the
/// closed form.
pub fn weighted_solid_angle_numeric(interval: AngleInterval, order: usize) -> Result<f64> {
    if interval.is_empty() {
        return Ok(0.0);
    }
    let rule = GaussRule::new(order, interval.theta_min, interval.theta_max)?;
    Ok(2.0 * PI * rule.integrate(|t| t.sin().powi(3)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn default_aperture_ratios() {
        let a = ApertureSpec::default();
        assert_abs_diff_eq!(a.rho_max(), 4.76, epsilon = 0.005);
        assert_abs_diff_eq!(a.rho_bore(), 0.357, epsilon = 0.001);
    }

    #[test]
    fn invalid_apertures_are_rejected() {
        assert!(ApertureSpec::new(0.0, 10.0, 0.0).is_err());
        assert!(ApertureSpec::new(2.1, 1.0, 1.0).is_err());
        assert!(ApertureSpec::new(2.1, 10.0, -0.1).is_err());
        assert!(ApertureSpec::new(2.1, 10.0, 0.0).is_ok());
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta_from_rho(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(theta_from_rho(2.0).unwrap(), FRAC_PI_2, epsilon = 1e-15);
        let rim = theta_from_rho(4.76).unwrap().to_degrees();
        assert!((rim - 134.3).abs() <= 0.2, "rim at {rim}");
        // exact default rim: 10 mm / 2.1 mm
        let rim = ApertureSpec::default().theta_max().to_degrees();
        assert_abs_diff_eq!(rim, 134.435, epsilon = 1e-3);
    }

    #[test]
    fn theta_domain_errors() {
        assert!(theta_from_rho(-1e-9).is_err());
        assert!(theta_from_rho(f64::NAN).is_err());
        assert!(rho_from_theta(PI).is_err());
        assert!(rho_from_theta(-0.1).is_err());
    }

    #[test]
    fn incidence_angle_examples() {
        assert_eq!(incidence_angle(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            incidence_angle(FRAC_PI_2).unwrap().to_degrees(),
            45.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            incidence_angle(134f64.to_radians()).unwrap().to_degrees(),
            67.0,
            epsilon = 1e-12
        );
        assert!(incidence_angle(3.2).is_err());
    }

    #[test]
    fn incidence_matches_surface_normal() {
        // normal of z = r²/4 − 1 (f = 1) at r has slope angle arctan(r/2)
        for &rho in &[0.1, 0.7, 2.0, 3.3, 4.76] {
            let normal_tilt = (rho / 2.0f64).atan();
            let alpha = incidence_angle(theta_from_rho(rho).unwrap()).unwrap();
            assert_abs_diff_eq!(alpha, normal_tilt, epsilon = 1e-14);
        }
    }

    #[test]
    fn solid_angle_examples() {
        let full = weighted_solid_angle(AngleInterval::full_sphere());
        assert_relative_eq!(full.steradians, MAX_WEIGHTED_SOLID_ANGLE, max_relative = 1e-15);
        let half = weighted_solid_angle(AngleInterval::new(0.0, FRAC_PI_2).unwrap());
        assert_relative_eq!(half.steradians, 4.0 * PI / 3.0, max_relative = 1e-15);
        let rim = weighted_solid_angle(AngleInterval::from_degrees(0.0, 134.0).unwrap());
        assert_abs_diff_eq!(rim.fraction, 0.94, epsilon = 0.005);
    }

    #[test]
    fn empty_interval_is_degenerate() {
        let w = weighted_solid_angle(AngleInterval::new(0.3, 0.3).unwrap());
        assert!(w.degenerate);
        assert_eq!(w.steradians, 0.0);
        assert!(AngleInterval::new(0.5, 0.4).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let iv = ApertureSpec::default().angle_interval();
        let closed = weighted_solid_angle(iv).steradians;
        let numeric = weighted_solid_angle_numeric(iv, 32).unwrap();
        assert_relative_eq!(closed, numeric, max_relative = 1e-10);
    }

    #[test]
    fn bore_changes_solid_angle_negligibly() {
        let a = ApertureSpec::default();
        let with_bore = weighted_solid_angle(a.angle_interval()).fraction;
        let without = weighted_solid_angle(a.without_bore().angle_interval()).fraction;
        assert_abs_diff_eq!(a.theta_bore().to_degrees(), 20.2, epsilon = 0.1);
        assert!(without - with_bore < 0.004);
        assert!(without > with_bore);
    }

    proptest! {
        #[test]
        fn rho_theta_round_trip(rho in 0.0f64..1e4) {
            let back = rho_from_theta(theta_from_rho(rho).unwrap()).unwrap();
            prop_assert!((back - rho).abs() <= 1e-12 * rho.max(1e-300) || back == rho);
        }

        #[test]
        fn theta_is_strictly_increasing(rho in 0.0f64..100.0, d in 1e-6f64..10.0) {
            prop_assert!(theta_from_rho(rho + d).unwrap() > theta_from_rho(rho).unwrap());
        }

        #[test]
        fn solid_angle_is_additive(a in 0.0f64..PI, b in 0.0f64..PI, c in 0.0f64..PI) {
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            let whole = weighted_solid_angle(AngleInterval::new(v[0], v[2]).unwrap()).steradians;
            let parts = weighted_solid_angle(AngleInterval::new(v[0], v[1]).unwrap()).steradians
                + weighted_solid_angle(AngleInterval::new(v[1], v[2]).unwrap()).steradians;
            prop_assert!((whole - parts).abs() <= 1e-12 * MAX_WEIGHTED_SOLID_ANGLE);
        }
    }
}
