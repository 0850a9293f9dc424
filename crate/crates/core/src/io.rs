//! Plain-text and image file formats shared by the analysis modules.
//!
//! Grid files start with a single `# {json}` header line describing the grid,
//! followed by one block per channel. Each block is introduced by
//! `# channel <name>` and holds `rows` lines of `cols` whitespace-separated
//! values; `NaN` marks masked pixels.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{GraymapHeader, PnmEncoder, PnmHeader, SampleEncoding};
use image::ExtendedColorType;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Header of a grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub rows: usize,
    pub cols: usize,
    /// Entrance-plane `ρ` per pixel, if the grid is a beam image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_scale: Option<f64>,
    /// Beam axis in pixel coordinates `(x, y)` = `(column, row)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    pub channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_nm: Option<f64>,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a multi-channel grid. All channels must match the header shape.
pub fn write_grid(path: impl AsRef<Path>, header: &GridHeader, channels: &[&Array2<f64>]) -> Result<()> {
    let path = path.as_ref();
    if channels.len() != header.channels.len() {
        return Err(Error::domain(format!(
            "{} channel names for {} channels",
            header.channels.len(),
            channels.len()
        )));
    }
    let json = serde_json::to_string(header).map_err(|e| Error::domain(e.to_string()))?;
    let mut out = format!("# {json}\n");
    for (name, grid) in header.channels.iter().zip(channels) {
        if grid.dim() != (header.rows, header.cols) {
            return Err(Error::domain(format!(
                "channel {name} has shape {:?}, header says {}x{}",
                grid.dim(),
                header.rows,
                header.cols
            )));
        }
        let _ = writeln!(out, "# channel {name}");
        for row in grid.rows() {
            let line: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    write_text(path, &out)
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:e}")
    }
}

/// Reads a grid file written by [`write_grid`].
pub fn read_grid(path: impl AsRef<Path>) -> Result<(GridHeader, Vec<Array2<f64>>)> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let header: GridHeader = match lines.next() {
        Some((_, l)) if l.trim_start().starts_with('#') => {
            let body = l.trim_start().trim_start_matches('#').trim();
            serde_json::from_str(body).map_err(|e| Error::parse(path, 1, e.to_string()))?
        }
        _ => return Err(Error::parse(path, 1, "missing JSON header line")),
    };
    let mut grids = Vec::with_capacity(header.channels.len());
    let mut current: Option<(String, Vec<f64>)> = None;
    let finish = |name: String, data: Vec<f64>, line: usize| -> Result<Array2<f64>> {
        Array2::from_shape_vec((header.rows, header.cols), data).map_err(|_| {
            Error::parse(path, line, format!("channel {name} does not hold {}x{} values", header.rows, header.cols))
        })
    };
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(name) = rest.trim().strip_prefix("channel") {
                if let Some((n, d)) = current.take() {
                    grids.push(finish(n, d, idx + 1)?);
                }
                current = Some((name.trim().to_string(), Vec::with_capacity(header.rows * header.cols)));
            }
            continue;
        }
        let Some((_, data)) = current.as_mut() else {
            return Err(Error::parse(path, idx + 1, "values before the first channel marker"));
        };
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(tok.parse().map_err(|_| Error::parse(path, idx + 1, format!("bad number {tok:?}")))?);
        }
        if data.len() - before != header.cols {
            return Err(Error::parse(path, idx + 1, format!("expected {} values per row", header.cols)));
        }
    }
    if let Some((n, d)) = current.take() {
        grids.push(finish(n, d, text.lines().count())?);
    }
    if grids.len() != header.channels.len() {
        return Err(Error::parse(
            path,
            1,
            format!("header lists {} channels, file holds {}", header.channels.len(), grids.len()),
        ));
    }
    Ok((header, grids))
}

/// Reads whitespace-separated numeric columns, skipping blank lines and `#`
/// comments. Every data line must hold exactly `ncols` values.
pub fn read_columns(path: impl AsRef<Path>, ncols: usize) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(path, idx + 1, format!("bad number {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != ncols {
            return Err(Error::parse(path, idx + 1, format!("expected {ncols} columns, found {}", row.len())));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes numeric columns with optional `#` header lines.
pub fn write_columns(path: impl AsRef<Path>, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

/// Reads a binary 16-bit portable graymap as counts.
pub fn read_pgm16(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Image {
            path: path.into(),
            msg: e.to_string(),
        })?;
    let gray = img.into_luma16();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(f64::from).collect();
    Array2::from_shape_vec((h as usize, w as usize), data).map_err(|e| Error::Image {
        path: path.into(),
        msg: e.to_string(),
    })
}

/// Writes counts as a binary 16-bit portable graymap.
pub fn write_pgm16(path: impl AsRef<Path>, counts: &Array2<u16>) -> Result<()> {
    let path = path.as_ref();
    let (rows, cols) = counts.dim();
    let samples: Vec<u16> = counts.iter().copied().collect();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_header(PnmHeader::from(GraymapHeader {
            encoding: SampleEncoding::Binary,
            height: rows as u32,
            width: cols as u32,
            maxwhite: u32::from(u16::MAX),
        }))
        .encode(&samples[..], cols as u32, rows as u32, ExtendedColorType::L16)
        .map_err(|e| Error::Image {
            path: path.into(),
            msg: e.to_string(),
        })
}

/// One frame of a wave-plate scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: PathBuf,
    pub angle_deg: f64,
}

/// Reads a frame manifest: lines `filename angle_deg`, paths relative to the
/// manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new("."));
    let text = read_text(path)?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(file), Some(angle), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(path, idx + 1, "expected `filename angle_deg`"));
        };
        let angle_deg = angle
            .parse()
            .map_err(|_| Error::parse(path, idx + 1, format!("bad angle {angle:?}")))?;
        entries.push(ManifestEntry {
            file: dir.join(file),
            angle_deg,
        });
    }
    if entries.is_empty() {
        return Err(Error::parse(path, 0, "manifest lists no frames"));
    }
    Ok(entries)
}
