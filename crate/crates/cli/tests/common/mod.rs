//! Fixtures shared by the CLI test targets.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dipolewave::geometry::ApertureSpec;
use dipolewave::io::write_pgm16;
use dipolewave::polarimetry::synthesize_frames;
use ndarray::Array2;

pub const GRID: usize = 300;
pub const WAIST: f64 = 2.26;
pub const QWP_ANGLES_DEG: [f64; 8] = [0.0, 22.5, 45.0, 67.5, 90.0, 112.5, 135.0, 157.5];

pub struct RunOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl RunOutput {
    /// Value of a `key=value` line on stdout.
    pub fn value(&self, key: &str) -> f64 {
        let prefix = format!("{key}=");
        self.stdout
            .lines()
            .find_map(|l| l.strip_prefix(&prefix))
            .unwrap_or_else(|| panic!("no {key} in output:\n{}", self.stdout))
            .trim()
            .parse()
            .unwrap_or_else(|e| panic!("{key}: {e}"))
    }
}

pub fn run(args: &[&str]) -> RunOutput {
    let Output { status, stdout, stderr } = Command::new(env!("CARGO_BIN_EXE_dipolewave"))
        .args(args)
        .output()
        .expect("binary runs");
    RunOutput {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Entrance-plane `ρ` per pixel that puts the mirror rim four pixels inside
/// the frame edge.
pub fn pixel_scale() -> f64 {
    let c = (GRID as f64 - 1.0) / 2.0;
    ApertureSpec::default().rho_max() / (c - 4.0)
}

/// Stokes grids of a radially polarized doughnut. `flip` adds ±0.1 rad of
/// orientation noise within 0.1 rad of the x-axis, which wraps ψ across 0/π.
pub fn radial_stokes(flip: bool) -> [Array2<f64>; 4] {
    let n = GRID;
    let c = (n as f64 - 1.0) / 2.0;
    let scale = pixel_scale();
    let mut s = [(); 4].map(|_| Array2::<f64>::zeros((n, n)));
    for i in 0..n {
        for j in 0..n {
            let (x, y) = ((j as f64 - c) * scale, (i as f64 - c) * scale);
            let r = x.hypot(y);
            let i0 = (r * (-(r * r) / (WAIST * WAIST)).exp()).powi(2);
            let mut psi = y.atan2(x);
            if flip && (y / x).abs().atan() < 0.1 {
                psi += if (i + j) % 2 == 0 { 0.1 } else { -0.1 };
            }
            s[0][[i, j]] = i0;
            s[1][[i, j]] = i0 * (2.0 * psi).cos();
            s[2][[i, j]] = i0 * (2.0 * psi).sin();
        }
    }
    s
}

/// Writes wave-plate frames of `stokes` as 16-bit graymaps plus a manifest
/// and returns the manifest path.
pub fn write_stack(dir: &Path, stokes: &[Array2<f64>; 4]) -> PathBuf {
    let angles: Vec<f64> = QWP_ANGLES_DEG.iter().map(|a| a.to_radians()).collect();
    let frames = synthesize_frames(stokes, &angles).unwrap();
    let peak = frames.iter().flat_map(|f| f.iter().copied()).fold(0.0, f64::max);
    let mut manifest = String::new();
    for (k, (frame, deg)) in frames.iter().zip(QWP_ANGLES_DEG).enumerate() {
        let name = format!("frame{k}.pgm");
        let counts = frame.mapv(|v| (v / peak * 65000.0).round().clamp(0.0, 65535.0) as u16);
        write_pgm16(dir.join(&name), &counts).unwrap();
        manifest.push_str(&format!("{name} {deg}\n"));
    }
    let path = dir.join("frames.txt");
    write(&path, &manifest);
    path
}

/// Config for reducing a frame stack written by [`write_stack`].
pub fn stokes_config(dir: &Path, manifest: &Path) -> PathBuf {
    let c = (GRID as f64 - 1.0) / 2.0;
    let text = format!(
        "[files]\nframes = {:?}\n\n[analysis]\nnoise_floor = 0.0\npixel_scale = {}\ncenter = [{c}, {c}]\n",
        manifest.to_str().unwrap(),
        pixel_scale()
    );
    let path = dir.join("stokes.toml");
    write(&path, &text);
    path
}

/// Two transitions with every factor fixed.
pub fn table_config(dir: &Path) -> PathBuf {
    let text = r#"
[[transition]]
label = "T1"
wavelength_nm = 369.5
lifetime_ns = 8.1
omega_fraction = 0.94
eta = 0.979
strehl = 0.99
eta_t = 0.96
reference_pa = 0.812

[[transition]]
label = "T2"
wavelength_nm = 251.8
lifetime_ns = 230.0
omega_fraction = 0.94
eta = 0.975
strehl = 0.99
eta_t = 0.99
reference_pa = 0.867
"#;
    let path = dir.join("table.toml");
    write(&path, text);
    path
}

