//! CSV output for diagnostics rows and the equilibrium profile.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::DiagnosticsRecord;
use crate::equilibrium::EquilibriumField;
use crate::error::{Result, VfpError};
use crate::mesh::Mesh;

/// Column order of every diagnostics CSV.
pub const COLUMNS: [&str; 12] = [
    "step",
    "t",
    "l2_dist",
    "rho_dist",
    "dperp",
    "d1_norm",
    "b_norm",
    "hminus1_macro",
    "mass",
    "H0",
    "H1",
    "Efun",
];

/// Columns of `equilibrium.csv`.
pub const EQUILIBRIUM_COLUMNS: [&str; 5] = ["x_center", "dx", "phi", "sqrt_rho_inf", "E"];

/// Shortest decimal that parses back to the same `f64`.
pub fn format_value(x: f64) -> String {
    format!("{x:e}")
}

fn format_optional(x: Option<f64>) -> String {
    x.map(format_value).unwrap_or_default()
}

/// Streams diagnostics rows; the header goes out with the first row (or on
/// `finish` for an empty run). Rows are flushed every `flush_every` records.
pub struct DiagnosticsSink<W: Write> {
    out: W,
    header_written: bool,
    rows: usize,
    flush_every: usize,
    path: Option<PathBuf>,
}

impl DiagnosticsSink<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| VfpError::io(path, "creating", e))?;
        let mut sink = DiagnosticsSink::new(BufWriter::new(file));
        sink.path = Some(path.to_path_buf());
        Ok(sink)
    }
}

impl<W: Write> DiagnosticsSink<W> {
    pub fn new(out: W) -> Self {
        DiagnosticsSink {
            out,
            header_written: false,
            rows: 0,
            flush_every: 100,
            path: None,
        }
    }

    pub fn with_flush_every(mut self, rows: usize) -> Self {
        self.flush_every = rows.max(1);
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    fn io_err(&self, e: std::io::Error) -> VfpError {
        let path = self.path.clone().unwrap_or_else(|| PathBuf::from("<csv sink>"));
        VfpError::io(path, "writing", e)
    }

    fn ensure_header(&mut self) -> Result<()> {
        if !self.header_written {
            writeln!(self.out, "{}", COLUMNS.join(",")).map_err(|e| self.io_err(e))?;
            self.header_written = true;
        }
        Ok(())
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        self.ensure_header()?;
        let line = [
            r.step.to_string(),
            format_value(r.t),
            format_value(r.l2_dist),
            format_value(r.rho_dist),
            format_value(r.dperp),
            format_value(r.d1_norm),
            format_value(r.b_norm),
            format_optional(r.hminus1_macro),
            format_value(r.mass),
            format_value(r.h0),
            format_value(r.h1),
            format_optional(r.efun),
        ]
        .join(",");
        writeln!(self.out, "{line}").map_err(|e| self.io_err(e))?;
        self.rows += 1;
        if self.rows % self.flush_every == 0 {
            self.out.flush().map_err(|e| self.io_err(e))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.ensure_header()?;
        self.out.flush().map_err(|e| self.io_err(e))?;
        Ok(self.out)
    }
}

pub fn write_equilibrium_csv(path: &Path, mesh: &Mesh, field: &EquilibriumField) -> Result<()> {
    let mut text = EQUILIBRIUM_COLUMNS.join(",");
    text.push('\n');
    for j in 0..mesh.n_cells() {
        let row = [
            mesh.x_center()[j],
            mesh.dx()[j],
            field.phi()[j],
            field.sqrt_rho_inf()[j],
            field.field()[j],
        ];
        let row: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| VfpError::io(path, "writing", e))
}
