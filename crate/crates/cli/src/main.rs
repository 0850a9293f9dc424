// Negated comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod pipeline;
mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dipolewave::focalfield::{
    focal_plane, optimize_waist_with_coating, plane_to_sphere, reflectivity_weighted_overlap, write_focal_plane,
    FocalQuadrature, OpticalConstants,
};
use dipolewave::geometry::{weighted_solid_angle, AngleInterval};
use dipolewave::io;
use dipolewave::modes::{optimize_waist, spatial_overlap, RadialMode, SampledProfile};
use dipolewave::polarimetry::{measured_overlap, OverlapOptions, PolarizationMap};
use dipolewave::temporal::{aom_drive, temporal_overlap, Histogram};
use dipolewave::wavefront::{make_phase_plate, pv_rms, pv_rms_expansion, render, zernike_fit, PhaseMap};
use log::info;

use crate::config::ToolkitConfig;
use crate::error::CliError;
use crate::pipeline::Pipeline;

#[derive(Parser, Debug)]
#[command(name = "dipolewave", version, about = "Mode design and coupling budget for a deep parabolic mirror")]
struct Cli {
    /// TOML configuration; built-in defaults if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files; nothing is written without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Choose the field sign per pixel to maximise its radial projection.
    #[arg(long, global = true)]
    rectify: bool,
    /// Exclude this fraction of the outer pupil radius from wavefront data.
    #[arg(long, global = true, value_name = "FRACTION")]
    trim_outer: Option<f64>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coupling strength and absorption probability per transition.
    Report,
    /// Reduce a wave-plate frame stack to Stokes and polarization maps.
    Stokes {
        /// Frame manifest (overrides files.frames).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Spatial overlap of an entrance-plane mode with the dipole mode.
    Overlap {
        #[command(flatten)]
        source: ModeSource,
        #[command(flatten)]
        coating: CoatingArgs,
    },
    /// Doughnut waist maximising the overlap.
    OptimizeWaist {
        #[command(flatten)]
        coating: CoatingArgs,
    },
    /// Zernike fit, PV/RMS and phase plate of a measured phase map.
    Zernike {
        /// Phase map (overrides files.phase_map).
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        degree: Option<u32>,
    },
    /// Strehl ratio of the configured aberrations.
    Strehl {
        #[arg(long)]
        zernike: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        /// Evaluation wavelength; defaults to each configured transition.
        #[arg(long)]
        wavelength: Option<f64>,
        /// Evaluate behind the compensating phase plate.
        #[arg(long)]
        plate: bool,
        /// Include the coating's phase upon reflection.
        #[arg(long)]
        coating_phase: bool,
        /// Export an N×N focal-plane field grid at the axial peak.
        #[arg(long, value_name = "N")]
        focal_plane: Option<usize>,
        /// Half-width of the exported focal plane in wavelengths.
        #[arg(long, default_value_t = 1.5)]
        half_width: f64,
    },
    /// Modulator drive waveform and temporal overlap.
    Pulse {
        /// Transition label; the first configured one by default.
        #[arg(long)]
        transition: Option<String>,
        /// Pulse length in lifetimes.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        buildup: Option<f64>,
        /// Score a photon-count histogram instead of the model.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Dipole-weighted solid angle of an angular interval.
    SolidAngle {
        /// Lower polar angle; the bore edge by default.
        #[arg(long)]
        min_deg: Option<f64>,
        /// Upper polar angle; the mirror rim by default.
        #[arg(long)]
        max_deg: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct ModeSource {
    /// Doughnut waist w/f.
    #[arg(long, conflicts_with_all = ["profile", "map"])]
    waist: Option<f64>,
    /// Sampled profile (`rho amplitude` columns).
    #[arg(long, conflicts_with = "map")]
    profile: Option<PathBuf>,
    /// Polarization map written by `stokes`.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoatingArgs {
    /// Weight by the coating reflectivity at this wavelength.
    #[arg(long, value_name = "NM")]
    coating_nm: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ToolkitConfig::load(p)?,
        None => ToolkitConfig::default(),
    };
    if cli.rectify {
        cfg.analysis.rectify = true;
    }
    if let Some(t) = cli.trim_outer {
        cfg.analysis.trim_outer = t;
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).map_err(|e| dipolewave::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Report => cmd_report(cfg, out),
        Command::Stokes { manifest } => {
            if manifest.is_some() {
                cfg.files.frames = manifest;
            }
            cmd_stokes(Pipeline::new(cfg)?, out)
        }
        Command::Overlap { source, coating } => cmd_overlap(Pipeline::new(cfg)?, source, coating),
        Command::OptimizeWaist { coating } => cmd_optimize_waist(Pipeline::new(cfg)?, coating),
        Command::Zernike { map, degree } => {
            if map.is_some() {
                cfg.files.phase_map = map;
            }
            if let Some(d) = degree {
                cfg.analysis.degree = d;
            }
            cmd_zernike(Pipeline::new(cfg)?, out)
        }
        Command::Strehl {
            zernike,
            map,
            wavelength,
            plate,
            coating_phase,
            focal_plane,
            half_width,
        } => {
            if zernike.is_some() {
                cfg.files.zernike = zernike;
                cfg.files.phase_map = None;
            } else if map.is_some() {
                cfg.files.phase_map = map;
                cfg.files.zernike = None;
            }
            cfg.analysis.phase_plate |= plate;
            cfg.analysis.coating_phase |= coating_phase;
            cmd_strehl(Pipeline::new(cfg)?, wavelength, focal_plane.map(|n| (n, half_width)), out)
        }
        Command::Pulse {
            transition,
            duration,
            buildup,
            histogram,
        } => {
            if let Some(d) = duration {
                cfg.pulse.duration_lifetimes = d;
            }
            if let Some(b) = buildup {
                cfg.pulse.buildup_ns = b;
            }
            if histogram.is_some() {
                cfg.files.histogram = histogram;
            }
            cmd_pulse(Pipeline::new(cfg)?, transition, out)
        }
        Command::SolidAngle { min_deg, max_deg } => cmd_solid_angle(Pipeline::new(cfg)?, min_deg, max_deg),
    }
}

fn write_out(out: Option<&Path>, name: &str, text: &str) -> Result<(), CliError> {
    if let Some(dir) = out {
        io::write_text(&dir.join(name), text)?;
    }
    Ok(())
}

fn cmd_report(cfg: ToolkitConfig, out: Option<&Path>) -> Result<String, CliError> {
    let report = report::build(&Pipeline::new(cfg)?)?;
    let text = report.render();
    write_out(out, "report.txt", &text)?;
    Ok(text)
}

fn cmd_stokes(p: Pipeline, out: Option<&Path>) -> Result<String, CliError> {
    let manifest = p
        .cfg
        .files
        .frames
        .clone()
        .ok_or_else(|| CliError::Config("no frame manifest (files.frames or --manifest)".into()))?;
    let (stokes, map) = p.polarization_map(&manifest)?;
    let dipole = RadialMode::dipole();
    let score = |rectify: bool, ideal_orientation: bool| {
        measured_overlap(
            &map,
            &p.aperture,
            &dipole,
            OverlapOptions {
                ideal_orientation,
                rectify,
            },
        )
    };
    let plain = score(false, false)?;
    let rectified = score(true, false)?;
    let ideal = score(false, true)?;
    let chosen = if p.cfg.analysis.rectify { rectified } else { plain };
    let max_residual = stokes.residual.iter().copied().fold(0.0, f64::max);
    if let Some(dir) = out {
        map.write(dir.join("polarization_map.txt"))?;
    }
    let mut s = String::new();
    let _ = writeln!(s, "frames={}", manifest.display());
    let _ = writeln!(s, "center={:.3},{:.3}", map.center.0, map.center.1);
    let _ = writeln!(s, "valid_pixels={}", map.mask.iter().filter(|&&m| m).count());
    let _ = writeln!(s, "max_fit_residual={max_residual:e}");
    let _ = writeln!(s, "eta={chosen}");
    let _ = writeln!(s, "eta_unrectified={plain}");
    let _ = writeln!(s, "eta_rectified={rectified}");
    let _ = writeln!(s, "eta_ideal_orientation={ideal}");
    write_out(out, "stokes_summary.txt", &s)?;
    Ok(s)
}

fn coating_constants(p: &Pipeline) -> Result<OpticalConstants, CliError> {
    Ok(match &p.cfg.files.optical_constants {
        Some(path) => OpticalConstants::read(path)?,
        None => OpticalConstants::aluminum(),
    })
}

fn cmd_overlap(p: Pipeline, source: ModeSource, coating: CoatingArgs) -> Result<String, CliError> {
    let dipole = RadialMode::dipole();
    let mut s = String::new();
    if let Some(path) = source.map {
        let map = PolarizationMap::read(&path)?;
        let eta = measured_overlap(&map, &p.aperture, &dipole, p.overlap_options())?;
        let _ = writeln!(s, "source=polarization map {}", path.display());
        let _ = writeln!(s, "eta={eta}");
        return Ok(s);
    }
    let (mode, how) = match (source.waist, source.profile.or(p.cfg.files.mode_profile.clone())) {
        (Some(w), _) => (RadialMode::doughnut(w)?, format!("doughnut w/f = {w}")),
        (None, Some(path)) => (
            RadialMode::sampled(SampledProfile::from_file(&path)?),
            format!("profile {}", path.display()),
        ),
        (None, None) => {
            let (w, how) = p.waist()?;
            (RadialMode::doughnut(w)?, format!("doughnut, {how}"))
        }
    };
    let _ = writeln!(s, "source={how}");
    match coating.coating_nm {
        Some(lambda) => {
            let c = coating_constants(&p)?;
            let r = reflectivity_weighted_overlap(&mode, &p.aperture, &c, lambda)?;
            let _ = writeln!(s, "eta={}", r.eta);
            let _ = writeln!(s, "eta_unweighted={}", r.eta_unweighted);
            let _ = writeln!(s, "delta={}", r.delta);
        }
        None => {
            let _ = writeln!(s, "eta={}", spatial_overlap(&mode, &dipole, &p.aperture)?);
        }
    }
    Ok(s)
}

fn cmd_optimize_waist(p: Pipeline, coating: CoatingArgs) -> Result<String, CliError> {
    let mut s = String::new();
    let plain = optimize_waist(&p.aperture)?;
    let _ = writeln!(s, "waist={}", plain.waist);
    let _ = writeln!(s, "eta={}", plain.eta);
    if let Some(lambda) = coating.coating_nm {
        let c = coating_constants(&p)?;
        let coated = optimize_waist_with_coating(&p.aperture, &c, lambda)?;
        let _ = writeln!(s, "coated_waist={}", coated.waist);
        let _ = writeln!(s, "coated_eta={}", coated.eta);
        let _ = writeln!(s, "delta={}", coated.eta - plain.eta);
    }
    Ok(s)
}

fn cmd_zernike(p: Pipeline, out: Option<&Path>) -> Result<String, CliError> {
    let path = p
        .cfg
        .files
        .phase_map
        .clone()
        .ok_or_else(|| CliError::Config("no phase map (files.phase_map or --map)".into()))?;
    let a = &p.cfg.analysis;
    let annulus = p.annulus()?;
    let mut map = PhaseMap::read(&path)?.restricted(annulus);
    if a.double_pass {
        map = dipolewave::wavefront::single_pass(&map);
    }
    let raw = pv_rms(&map, annulus)?;
    let fit = zernike_fit(&map, a.degree, a.remove_misalignment)?;
    let corrected = pv_rms_expansion(&fit.expansion, annulus)?;
    let mut s = String::new();
    let _ = writeln!(s, "map={}", path.display());
    let _ = writeln!(s, "coverage={}", map.coverage(annulus));
    let _ = writeln!(s, "pv={}", raw.pv);
    let _ = writeln!(s, "rms={}", raw.rms);
    let _ = writeln!(s, "fit_degree={}", a.degree);
    let _ = writeln!(s, "fit_terms={}", fit.expansion.terms().len());
    let _ = writeln!(s, "fit_residual_rms={}", fit.residual_rms);
    let _ = writeln!(s, "fit_condition={}", fit.condition);
    let _ = writeln!(s, "fit_pv={}", corrected.pv);
    let _ = writeln!(s, "fit_rms={}", corrected.rms);
    if let Some(dir) = out {
        fit.expansion.write(dir.join("zernike_fit.txt"))?;
        let plate = make_phase_plate(&render(&fit.expansion, a.grid)?);
        plate.write(dir.join("phase_plate.txt"))?;
        io::write_text(&dir.join("zernike_summary.txt"), &s)?;
    }
    Ok(s)
}

fn cmd_strehl(
    p: Pipeline,
    wavelength: Option<f64>,
    plane: Option<(usize, f64)>,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let lambdas: Vec<(String, f64)> = match wavelength {
        Some(l) => vec![(format!("{l}nm"), l)],
        None => p.cfg.transition.iter().map(|t| (t.label.clone(), t.wavelength_nm)).collect(),
    };
    if lambdas.is_empty() {
        return Err(CliError::Config("no wavelength: pass --wavelength or configure a transition".into()));
    }
    let mut s = String::new();
    for (label, lambda) in lambdas {
        let Some((r, how)) = p.strehl_at(lambda)? else {
            return Err(CliError::Config(
                "no aberrations: give --zernike, --map, --coating-phase or configure files".into(),
            ));
        };
        let _ = writeln!(s, "{label}.wavelength_nm={lambda}");
        let _ = writeln!(s, "{label}.strehl={}", r.at_peak);
        let _ = writeln!(s, "{label}.strehl_nominal={}", r.at_nominal);
        let _ = writeln!(s, "{label}.peak_z_waves={}", r.peak_z);
        let _ = writeln!(s, "{label}.nodes={}x{}", r.quad.n_theta, r.quad.n_phi);
        let _ = writeln!(s, "{label}.source={how}");
        if let (Some((n, hw)), Some(dir)) = (plane, out) {
            let (ab, _) = p.aberrations(lambda)?;
            let (w, _) = p.waist()?;
            let field = plane_to_sphere(&RadialMode::doughnut(w)?, &p.aperture, lambda)?;
            let need = ((3.0 * std::f64::consts::PI * hw * 2f64.sqrt()).ceil() as usize + 24).max(256);
            let quad = FocalQuadrature {
                n_theta: r.quad.n_theta.max(need),
                n_phi: r.quad.n_phi.max(need),
            };
            let comps = focal_plane(&field, &ab, r.peak_z, hw, n, quad)?;
            let file = format!("focal_plane_{label}.txt");
            write_focal_plane(dir.join(&file), &comps, lambda)?;
            info!("wrote {file}");
        }
    }
    write_out(out, "strehl_summary.txt", &s)?;
    Ok(s)
}

fn cmd_pulse(p: Pipeline, label: Option<String>, out: Option<&Path>) -> Result<String, CliError> {
    let t = match &label {
        Some(l) => p
            .cfg
            .transition
            .iter()
            .find(|t| &t.label == l)
            .ok_or_else(|| CliError::Config(format!("no transition labelled {l}")))?,
        None => p
            .cfg
            .transition
            .first()
            .ok_or_else(|| CliError::Config("no [[transition]] configured".into()))?,
    };
    let spec = t.spec()?;
    let mut s = String::new();
    let _ = writeln!(s, "transition={}", spec.label);
    if let Some(path) = &p.cfg.files.histogram {
        let env = Histogram::read(path)?.to_envelope(p.cfg.analysis.reverse_histogram)?;
        let o = temporal_overlap(&env, &spec)?;
        let _ = writeln!(s, "histogram={}", path.display());
        let _ = writeln!(s, "eta_t={}", o.eta_t);
        let _ = writeln!(s, "shift_ns={}", o.shift_ns);
        return Ok(s);
    }
    let cfg = &p.cfg.pulse;
    let duration = cfg.duration_lifetimes * spec.lifetime_ns;
    let (ideal, shaped) = p.shaped_pulse(&spec)?;
    let ideal_o = temporal_overlap(&ideal, &spec)?;
    let o = temporal_overlap(&shaped, &spec)?;
    let _ = writeln!(s, "duration_ns={duration}");
    let _ = writeln!(s, "buildup_ns={}", cfg.buildup_ns);
    let _ = writeln!(s, "eta_t_input={}", ideal_o.eta_t);
    let _ = writeln!(s, "eta_t={}", o.eta_t);
    let _ = writeln!(s, "shift_ns={}", o.shift_ns);
    if let Some(dir) = out {
        let drive = aom_drive(&spec, duration, cfg.bin_width_ns)?;
        io::write_columns(
            dir.join("aom_drive.txt"),
            &["t_ns U0_rad"],
            drive.into_iter().map(|(t, u)| vec![t, u]),
        )?;
        io::write_columns(
            dir.join("envelope.txt"),
            &["t_center_ns amplitude"],
            (0..shaped.len()).map(|i| vec![shaped.bin_center(i), shaped.samples[i]]),
        )?;
        io::write_text(&dir.join("pulse_summary.txt"), &s)?;
    }
    Ok(s)
}

fn cmd_solid_angle(p: Pipeline, min_deg: Option<f64>, max_deg: Option<f64>) -> Result<String, CliError> {
    let d = p.aperture.angle_interval();
    let interval = AngleInterval::from_degrees(
        min_deg.unwrap_or(d.theta_min.to_degrees()),
        max_deg.unwrap_or(d.theta_max.to_degrees()),
    )?;
    let w = weighted_solid_angle(interval);
    let mut s = String::new();
    let _ = writeln!(s, "theta_min_deg={}", interval.theta_min.to_degrees());
    let _ = writeln!(s, "theta_max_deg={}", interval.theta_max.to_degrees());
    let _ = writeln!(s, "steradians={}", w.steradians);
    let _ = writeln!(s, "fraction={}", w.fraction);
    let _ = writeln!(s, "fraction_rounded={:.2}", w.fraction);
    Ok(s)
}
