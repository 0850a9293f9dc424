//! Coupling report: a fixed-width table followed by a `key=value` block.

use std::fmt::Write as _;

use dipolewave::modes::CouplingFigures;
use sha2::{Digest, Sha256};

use crate::config::ToolkitConfig;
use crate::error::CliError;
use crate::pipeline::{Pipeline, Resolved};

pub const FACTORS: [&str; 4] = ["omega_fraction", "eta", "strehl", "eta_t"];

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionReport {
    pub label: String,
    pub wavelength_nm: f64,
    pub lifetime_ns: f64,
    pub figures: CouplingFigures,
    /// Provenance per entry of [`FACTORS`].
    pub provenance: [String; 4],
    pub reference_pa: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub version: String,
    pub config_sha256: String,
    pub transitions: Vec<TransitionReport>,
}

pub fn config_digest(cfg: &ToolkitConfig) -> String {
    Sha256::digest(cfg.canonical().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn build(pipeline: &Pipeline) -> Result<CouplingReport, CliError> {
    let cfg = &pipeline.cfg;
    if cfg.transition.is_empty() {
        return Err(CliError::Config("no [[transition]] entries".into()));
    }
    let mut transitions = Vec::new();
    for t in &cfg.transition {
        let mut resolved: Vec<Resolved> = Vec::with_capacity(4);
        for name in FACTORS {
            resolved.push(pipeline.factor(t, name)?);
        }
        let figures = CouplingFigures::assemble(
            resolved[0].value,
            resolved[1].value,
            resolved[2].value,
            resolved[3].value,
            t.branching,
        )?;
        let note = t.reference_pa.and_then(|r| {
            let gap = figures.p_a - r;
            (gap.abs() > cfg.tolerances.reference_pa).then(|| {
                format!(
                    "P_a = {:.3} recomputed from the factors differs from the reference {r:.3} by {gap:+.3}; the recomputed value is reported",
                    figures.p_a
                )
            })
        });
        let [a, b, c, d] = [0, 1, 2, 3].map(|k| resolved[k].provenance.clone());
        transitions.push(TransitionReport {
            label: t.label.clone(),
            wavelength_nm: t.wavelength_nm,
            lifetime_ns: t.lifetime_ns,
            figures,
            provenance: [a, b, c, d],
            reference_pa: t.reference_pa,
            note,
        });
    }
    Ok(CouplingReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config_digest(cfg),
        transitions,
    })
}

impl CouplingReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dipolewave {} coupling report", self.version);
        let _ = writeln!(s, "config sha256 {}", self.config_sha256);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<10} {:>9} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "transition", "lambda_nm", "tau_ns", "Omega", "eta", "Strehl", "eta_t", "b", "G", "P_a"
        );
        for t in &self.transitions {
            let f = &t.figures;
            let _ = writeln!(
                s,
                "{:<10} {:>9.1} {:>8.1} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
                t.label, t.wavelength_nm, t.lifetime_ns, f.omega_fraction, f.eta, f.strehl, f.eta_t, f.branching, f.g, f.p_a
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "provenance:");
        for t in &self.transitions {
            for (name, p) in FACTORS.iter().zip(&t.provenance) {
                let _ = writeln!(s, "  {}.{name}: {p}", t.label);
            }
        }
        let notes: Vec<_> = self
            .transitions
            .iter()
            .filter_map(|t| t.note.as_ref().map(|n| (t, n)))
            .collect();
        if !notes.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "notes:");
            for (t, n) in notes {
                let _ = writeln!(s, "  NOTE {}: {n}", t.label);
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[values]");
        let _ = writeln!(s, "version={}", self.version);
        let _ = writeln!(s, "config_sha256={}", self.config_sha256);
        for t in &self.transitions {
            let f = &t.figures;
            let l = &t.label;
            for (k, v) in [
                ("omega_fraction", f.omega_fraction),
                ("eta", f.eta),
                ("strehl", f.strehl),
                ("eta_t", f.eta_t),
                ("branching", f.branching),
                ("G", f.g),
                ("P_a", f.p_a),
            ] {
                let _ = writeln!(s, "{l}.{k}={v}");
            }
            if let Some(r) = t.reference_pa {
                let _ = writeln!(s, "{l}.reference_P_a={r}");
                let _ = writeln!(s, "{l}.reference_flagged={}", t.note.is_some());
            }
            for (name, p) in FACTORS.iter().zip(&t.provenance) {
                let _ = writeln!(s, "{l}.{name}.source={p}");
            }
        }
        s
    }
}
