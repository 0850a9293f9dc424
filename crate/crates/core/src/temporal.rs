//! Temporal wave packets for single-photon absorption.
//!
//! The ideal excitation pulse is the time-reversed spontaneous-emission
//! envelope `e^{Γt/2}θ(−t)`. Pulses are sampled in uniform bins; time is in
//! nanoseconds.

use std::f64::consts::PI;
use std::path::Path;

use crate::quadrature::golden_section_max;
use crate::{io, Error, Result};

/// Dipole transition: label, wavelength and excited-state lifetime.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransitionSpec {
    pub label: String,
    pub wavelength_nm: f64,
    pub lifetime_ns: f64,
}

impl TransitionSpec {
    pub fn new(label: impl Into<String>, wavelength_nm: f64, lifetime_ns: f64) -> Result<Self> {
        if !(lifetime_ns > 0.0 && lifetime_ns.is_finite()) {
            return Err(Error::domain(format!("lifetime must be positive, got {lifetime_ns}")));
        }
        if !(wavelength_nm > 0.0) {
            return Err(Error::domain(format!("wavelength must be positive, got {wavelength_nm}")));
        }
        Ok(Self {
            label: label.into(),
            wavelength_nm,
            lifetime_ns,
        })
    }

    /// 369.5 nm, 8.1 ns.
    pub fn t1() -> Self {
        Self::new("T1", 369.5, 8.1).expect("valid preset")
    }

    /// 251.8 nm, 230 ns.
    pub fn t2() -> Self {
        Self::new("T2", 251.8, 230.0).expect("valid preset")
    }

    /// Spontaneous emission rate `Γ = 1/τ` in 1/ns.
    pub fn gamma(&self) -> f64 {
        1.0 / self.lifetime_ns
    }
}

/// Field-amplitude samples in uniform bins. Bin `i` spans
/// `[t_start + i·bw, t_start + (i+1)·bw]` with `t_start = t_end − n·bw`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseEnvelope {
    pub samples: Vec<f64>,
    pub bin_width_ns: f64,
    /// Right edge of the last bin.
    pub t_end_ns: f64,
}

impl PulseEnvelope {
    pub fn new(samples: Vec<f64>, bin_width_ns: f64, t_end_ns: f64) -> Result<Self> {
        if !(bin_width_ns > 0.0 && bin_width_ns.is_finite()) {
            return Err(Error::domain("bin width must be positive"));
        }
        if samples.len() < 2 {
            return Err(Error::domain("an envelope needs at least two samples"));
        }
        if samples.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("envelope amplitudes must be finite and non-negative"));
        }
        Ok(Self {
            samples,
            bin_width_ns,
            t_end_ns,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t_start_ns(&self) -> f64 {
        self.t_end_ns - self.samples.len() as f64 * self.bin_width_ns
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.t_start_ns() + i as f64 * self.bin_width_ns
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) + 0.5 * self.bin_width_ns
    }

    /// `∫|E|² dt` under the piecewise-constant interpretation.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() * self.bin_width_ns
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    pub fn shifted(&self, dt_ns: f64) -> Self {
        Self {
            t_end_ns: self.t_end_ns + dt_ns,
            ..self.clone()
        }
    }

    /// Keeps the bins whose centres lie in `[t0, t1]`.
    pub fn windowed(&self, t0: f64, t1: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| (t0..=t1).contains(&self.bin_center(i)))
            .collect();
        let (Some(&first), Some(&last)) = (keep.first(), keep.last()) else {
            return Err(Error::domain(format!("window [{t0}, {t1}] ns holds no bins")));
        };
        Self::new(
            self.samples[first..=last].to_vec(),
            self.bin_width_ns,
            self.bin_start(last) + self.bin_width_ns,
        )
    }
}

/// `e^{Γt/2}` for `t ≤ 0`, zero after the cutoff.
pub fn ideal_amplitude(spec: &TransitionSpec, t_ns: f64) -> f64 {
    if t_ns > 0.0 {
        0.0
    } else {
        (0.5 * spec.gamma() * t_ns).exp()
    }
}

/// Rising exponential truncated to `[−T, 0]`, sampled at bin midpoints.
pub fn ideal_envelope(spec: &TransitionSpec, duration_ns: f64, bin_width_ns: f64) -> Result<PulseEnvelope> {
    check_duration(duration_ns, bin_width_ns)?;
    let n = ((duration_ns / bin_width_ns).round() as usize).max(2);
    let samples = (0..n)
        .map(|i| {
            let t = -((n - i) as f64 - 0.5) * bin_width_ns;
            ideal_amplitude(spec, t)
        })
        .collect();
    PulseEnvelope::new(samples, bin_width_ns, 0.0)
}

fn check_duration(duration_ns: f64, bin_width_ns: f64) -> Result<()> {
    if !(duration_ns > 0.0 && duration_ns.is_finite()) {
        return Err(Error::domain(format!("duration must be positive, got {duration_ns}")));
    }
    if !(bin_width_ns > 0.0 && bin_width_ns < duration_ns) {
        return Err(Error::domain(format!(
            "bin width {bin_width_ns} ns must be positive and shorter than the pulse"
        )));
    }
    Ok(())
}

/// Best temporal overlap and the shift that achieves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalOverlap {
    pub eta_t: f64,
    /// Time by which the pulse is delayed to reach `eta_t`.
    pub shift_ns: f64,
}

/// Overlap of `pulse` delayed by `shift_ns` with the ideal envelope.
///
/// The pulse is piecewise constant over its bins; the ideal envelope is
/// integrated exactly per bin.
pub fn overlap_at_shift(pulse: &PulseEnvelope, spec: &TransitionSpec, shift_ns: f64) -> Result<f64> {
    let norm = (pulse.energy() / spec.gamma()).sqrt();
    if !(norm > 0.0) {
        return Err(Error::UndefinedOverlap("pulse has zero energy".into()));
    }
    Ok(raw_overlap(pulse, spec, shift_ns) / norm)
}

fn raw_overlap(pulse: &PulseEnvelope, spec: &TransitionSpec, shift_ns: f64) -> f64 {
    let g2 = 0.5 * spec.gamma();
    let bw = pulse.bin_width_ns;
    let t0 = pulse.t_start_ns() + shift_ns;
    let mut acc = 0.0;
    for (i, &e) in pulse.samples.iter().enumerate() {
        let a = t0 + i as f64 * bw;
        if a >= 0.0 {
            break;
        }
        if e == 0.0 {
            continue;
        }
        let b = (a + bw).min(0.0);
        acc += e * ((g2 * b).exp() - (g2 * a).exp()) / g2;
    }
    acc
}

/// Samples in the coarse shift scan.
const SHIFT_SCAN: usize = 801;

/// Maximises the overlap over time shifts within ±10 lifetimes of the
/// alignment that puts the ideal cutoff at the trailing edge of the
/// strongest bin.
pub fn temporal_overlap(pulse: &PulseEnvelope, spec: &TransitionSpec) -> Result<TemporalOverlap> {
    let norm = (pulse.energy() / spec.gamma()).sqrt();
    if !(norm > 0.0) {
        return Err(Error::UndefinedOverlap("pulse has zero energy".into()));
    }
    let peak = pulse
        .samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let centre = -(pulse.bin_start(peak) + pulse.bin_width_ns);
    let half = 10.0 * spec.lifetime_ns;
    let step = 2.0 * half / (SHIFT_SCAN - 1) as f64;
    let f = |s: f64| raw_overlap(pulse, spec, s) / norm;

    let mut best = (centre, f64::NEG_INFINITY);
    for k in 0..SHIFT_SCAN {
        let s = centre - half + k as f64 * step;
        let v = f(s);
        if v > best.1 {
            best = (s, v);
        }
    }
    let tol = 1e-9 * spec.lifetime_ns.max(pulse.bin_width_ns);
    let refined = golden_section_max(f, best.0 - step, best.0 + step, tol, 500)?;
    let (shift_ns, eta) = if refined.value >= best.1 {
        (refined.x, refined.value)
    } else {
        best
    };
    Ok(TemporalOverlap {
        eta_t: eta.clamp(0.0, 1.0),
        shift_ns,
    })
}

/// RF drive amplitude `U₀(t) = arcsin(e^{t/2τ})` for `t ≤ 0`, so that the
/// diffracted intensity `sin²U₀` follows `e^{t/τ}`.
pub fn aom_drive_at(spec: &TransitionSpec, t_ns: f64) -> Result<f64> {
    if t_ns > 0.0 || t_ns.is_nan() {
        return Err(Error::domain(format!("drive defined only for t <= 0, got {t_ns} ns")));
    }
    Ok((t_ns / (2.0 * spec.lifetime_ns)).exp().min(1.0).asin())
}

/// Drive samples `(t, U₀)` at the bin midpoints of [`ideal_envelope`] plus
/// the cutoff point `t = 0`.
pub fn aom_drive(spec: &TransitionSpec, duration_ns: f64, bin_width_ns: f64) -> Result<Vec<(f64, f64)>> {
    check_duration(duration_ns, bin_width_ns)?;
    let n = ((duration_ns / bin_width_ns).round() as usize).max(2);
    let mut out = (0..n)
        .map(|i| {
            let t = -((n - i) as f64 - 0.5) * bin_width_ns;
            aom_drive_at(spec, t).map(|u| (t, u))
        })
        .collect::<Result<Vec<_>>>()?;
    out.push((0.0, PI / 2.0));
    Ok(out)
}

/// Acousto-optic modulator with a finite grating build-up time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AomModel {
    /// Angular RF carrier frequency in rad/ns.
    pub rf_frequency: f64,
    pub buildup_ns: f64,
}

impl Default for AomModel {
    fn default() -> Self {
        Self {
            rf_frequency: 2.0 * PI * 0.4,
            buildup_ns: 5.0,
        }
    }
}

impl AomModel {
    pub fn new(buildup_ns: f64) -> Result<Self> {
        if !(buildup_ns >= 0.0 && buildup_ns.is_finite()) {
            return Err(Error::domain(format!("build-up time must be >= 0, got {buildup_ns}")));
        }
        Ok(Self {
            buildup_ns,
            ..Self::default()
        })
    }
}

/// Build-up times appended after the input so the falling edge decays.
pub const RESPONSE_TAIL: f64 = 10.0;

/// First-order low-pass of the field envelope with time constant
/// `buildup_ns`, discretised with a zero-order hold on the input bins.
pub fn aom_response(input: &PulseEnvelope, model: &AomModel) -> PulseEnvelope {
    if model.buildup_ns == 0.0 {
        return input.clone();
    }
    let bw = input.bin_width_ns;
    let tail = (RESPONSE_TAIL * model.buildup_ns / bw).ceil() as usize;
    let a = 1.0 - (-bw / model.buildup_ns).exp();
    let mut y = 0.0;
    let samples: Vec<f64> = input
        .samples
        .iter()
        .copied()
        .chain(std::iter::repeat_n(0.0, tail))
        .map(|x| {
            y += (x - y) * a;
            y
        })
        .collect();
    PulseEnvelope {
        samples,
        bin_width_ns: bw,
        t_end_ns: input.t_end_ns + tail as f64 * bw,
    }
}

/// Field envelope from photon counts: `√counts` per bin, optionally time
/// reversed (start-stop acquisition records the pulse backwards).
///
/// `t_start_ns` is the start of the first recorded bin.
pub fn histogram_to_envelope(counts: &[u64], bin_width_ns: f64, t_start_ns: f64, reverse: bool) -> Result<PulseEnvelope> {
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::UndefinedOverlap("histogram holds no counts".into()));
    }
    let n = counts.len() as f64;
    let mut samples: Vec<f64> = counts.iter().map(|&c| (c as f64).sqrt()).collect();
    let t_end = if reverse {
        samples.reverse();
        -t_start_ns
    } else {
        t_start_ns + n * bin_width_ns
    };
    PulseEnvelope::new(samples, bin_width_ns, t_end)
}

/// Photon-count histogram: bin start times and counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_start_ns: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Reads two-column `bin_start_ns counts` text; bins must be uniform.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = io::read_columns(path, 2)?;
        if rows.len() < 2 {
            return Err(Error::parse(path, 0, "histogram needs at least two bins"));
        }
        let mut counts = Vec::with_capacity(rows.len());
        for (k, r) in rows.iter().enumerate() {
            if r[1] < 0.0 || r[1].fract() != 0.0 {
                return Err(Error::parse(path, 0, format!("row {}: counts must be non-negative integers", k + 1)));
            }
            counts.push(r[1] as u64);
        }
        let starts: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let bw = starts[1] - starts[0];
        let uniform = starts
            .windows(2)
            .all(|w| ((w[1] - w[0]) - bw).abs() <= 1e-6 * bw.abs().max(1e-12));
        if !(bw > 0.0) || !uniform {
            return Err(Error::parse(path, 0, "bin start times must increase uniformly"));
        }
        Ok(Self {
            bin_start_ns: starts,
            counts,
        })
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.bin_start_ns[1] - self.bin_start_ns[0]
    }

    pub fn to_envelope(&self, reverse: bool) -> Result<PulseEnvelope> {
        histogram_to_envelope(&self.counts, self.bin_width_ns(), self.bin_start_ns[0], reverse)
    }
}

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;

/// Mean photon number per pulse for average optical power `power_w` at
/// repetition rate `rep_rate_hz`.
pub fn mean_photons(power_w: f64, rep_rate_hz: f64, lambda_nm: f64) -> Result<f64> {
    if !(power_w >= 0.0 && power_w.is_finite()) {
        return Err(Error::domain(format!("power must be >= 0, got {power_w}")));
    }
    if !(rep_rate_hz > 0.0) || !(lambda_nm > 0.0) {
        return Err(Error::domain("repetition rate and wavelength must be positive"));
    }
    let photon = PLANCK * LIGHT_SPEED / (lambda_nm * 1e-9);
    Ok(power_w / rep_rate_hz / photon)
}
