//! Self-describing tables: kernel, scan and reconstruction files.
//!
//! CSV layout:
//!
//! ```text
//! # key = value          metadata, one per line
//! #@ <config line>       producing configuration, for re-execution
//! col_a,col_b,...
//! 1.5e3,2e-7,...
//! ```
//!
//! Floats are written with `{:e}`, the shortest representation that parses
//! back to the same value. The JSON form carries the same four parts.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::Reconstruction;
use crate::kernel::{KernelMode, ResponseKernel};
use crate::spectra::{Counts, Regime, ScanResult};

pub const CONFIG_PREFIX: &str = "#@ ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Parse(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    /// Producing configuration (TOML), if any.
    pub config: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, ..Self::default() }
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_all(&self, key: &str) -> Vec<&str> {
        self.meta.iter().filter(|(k, _)| k == key).map(|(_, v)| v.as_str()).collect()
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        let raw = self.meta(key).ok_or_else(|| Error::Parse(format!("missing header field '{key}'")))?;
        raw.parse().map_err(|_| Error::Parse(format!("header field '{key}' = '{raw}' is not a number")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse(format!("missing column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        for (k, v) in &self.meta {
            writeln!(out, "# {k} = {}", v.replace('\n', " "))?;
        }
        if let Some(cfg) = &self.config {
            for line in cfg.lines() {
                writeln!(out, "{CONFIG_PREFIX}{line}")?;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut table = Table::default();
        let mut config = Vec::new();
        let mut line = String::new();
        let header = loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::Parse("table has no column header".into()));
            }
            let l = line.trim_end_matches(['\n', '\r']);
            if let Some(cfg) = l.strip_prefix(CONFIG_PREFIX).or_else(|| (l == "#@").then_some("")) {
                config.push(cfg.to_string());
            } else if let Some(kv) = l.strip_prefix('#') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("malformed header line '{l}'")))?;
                table.meta.push((k.trim().to_string(), v.trim().to_string()));
            } else {
                break l.to_string();
            }
        };
        if !config.is_empty() {
            table.config = Some(config.join("\n") + "\n");
        }
        let mut rest = header.into_bytes();
        rest.push(b'\n');
        reader.read_to_end(&mut rest)?;
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_slice());
        table.columns = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|_| Error::Parse(format!("row {i}: '{f}' is not a number"))))
                .collect::<Result<Vec<_>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn write(&self, out: impl Write, format: Format) -> Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                let mut out = out;
                serde_json::to_writer_pretty(&mut out, self).map_err(|e| Error::Parse(e.to_string()))?;
                writeln!(out)?;
                Ok(())
            }
        }
    }

    pub fn read(input: impl Read, format: Format) -> Result<Self> {
        match format {
            Format::Csv => Self::read_csv(input),
            Format::Json => serde_json::from_reader(input).map_err(|e| Error::Parse(e.to_string())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(file, Format::from_path(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(file, Format::from_path(path))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Scan file: `omega_rad_s, b_offs_T, mean_atoms[, asymmetry][, shot_k...]`.
pub fn scan_table(scan: &ScanResult, kernel: &ResponseKernel, asymmetry: Option<&[f64]>) -> Table {
    let mut columns = vec!["omega_rad_s".to_string(), "b_offs_T".into(), "mean_atoms".into()];
    if asymmetry.is_some() {
        columns.push("asymmetry".into());
    }
    let shots = scan.counts.as_ref().map_or(0, |c| c.shots.first().map_or(0, Vec::len));
    columns.extend((0..shots).map(|k| format!("shot_{k}")));
    let mut t = Table::new(columns);
    t.push_meta("t_meas_s", format!("{:e}", scan.t_meas));
    t.push_meta("regime", scan.regime);
    t.push_meta("kernel_mode", kernel.mode);
    t.push_meta("mu_J", format!("{:e}", kernel.mu));
    t.push_meta("hbar_J_s", format!("{:e}", kernel.hbar));
    t.push_meta("n_det", format!("{:e}", kernel.n_det));
    t.push_meta("provenance", &scan.provenance);
    if let Some(c) = &scan.counts {
        t.push_meta("efficiency", format!("{:e}", c.efficiency));
        t.push_meta("count_seed", c.seed);
    }
    for w in &scan.warnings {
        t.push_meta("warning", w);
    }
    for i in 0..scan.omega.len() {
        let mut row = vec![scan.omega[i], scan.b_offs[i], scan.mean_atoms[i]];
        if let Some(a) = asymmetry {
            row.push(a[i]);
        }
        if let Some(c) = &scan.counts {
            row.extend(c.shots[i].iter().map(|&v| v as f64));
        }
        t.rows.push(row);
    }
    t
}

/// Scan result plus the kernel constants recorded with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFile {
    pub scan: ScanResult,
    pub mu: f64,
    pub hbar: f64,
    pub n_det: f64,
    pub kernel_mode: KernelMode,
}

pub fn read_scan(table: &Table) -> Result<ScanFile> {
    let omega = table.column("omega_rad_s")?;
    let b_offs = table.column("b_offs_T")?;
    let mean_atoms = table.column("mean_atoms")?;
    let shot_cols: Vec<usize> = table
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("shot_"))
        .map(|(j, _)| j)
        .collect();
    let counts = if shot_cols.is_empty() {
        None
    } else {
        let shots = table
            .rows
            .iter()
            .map(|r| {
                shot_cols
                    .iter()
                    .map(|&j| {
                        let v = r[j];
                        if v >= 0.0 && v.fract() == 0.0 {
                            Ok(v as u64)
                        } else {
                            Err(Error::Parse(format!("count {v} is not a non-negative integer")))
                        }
                    })
                    .collect::<Result<Vec<u64>>>()
            })
            .collect::<Result<_>>()?;
        Some(Counts {
            efficiency: table.meta_f64("efficiency")?,
            seed: table
                .meta("count_seed")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse("missing count_seed".into()))?,
            shots,
        })
    };
    let regime: Regime = table.meta("regime").ok_or_else(|| Error::Parse("missing regime".into()))?.parse()?;
    let kernel_mode: KernelMode = table
        .meta("kernel_mode")
        .ok_or_else(|| Error::Parse("missing kernel_mode".into()))?
        .parse()?;
    Ok(ScanFile {
        scan: ScanResult {
            omega,
            b_offs,
            mean_atoms,
            t_meas: table.meta_f64("t_meas_s")?,
            regime,
            provenance: table.meta("provenance").unwrap_or_default().to_string(),
            warnings: table.meta_all("warning").into_iter().map(str::to_string).collect(),
            counts,
        },
        mu: table.meta_f64("mu_J")?,
        hbar: table.meta_f64("hbar_J_s")?,
        n_det: table.meta_f64("n_det")?,
        kernel_mode,
    })
}

/// Column holding D̃ for a kernel mode.
pub fn kernel_column(mode: KernelMode) -> String {
    format!("d_tilde_{mode}")
}

/// Kernel file with one D̃ column per supplied kernel; all must share μ and n_det.
pub fn kernel_table(kernels: &[&ResponseKernel], omega: &[f64]) -> Result<Table> {
    let first = kernels.first().ok_or_else(|| Error::invalid("kernel", "no kernel to write"))?;
    let mut columns = vec!["omega_rad_s".to_string(), "w".into()];
    columns.extend(kernels.iter().map(|k| kernel_column(k.mode)));
    let mut t = Table::new(columns);
    t.push_meta("mu_J", format!("{:e}", first.mu));
    t.push_meta("hbar_J_s", format!("{:e}", first.hbar));
    t.push_meta("mu_over_hbar_rad_s", format!("{:e}", first.bandwidth()));
    t.push_meta("n_det", format!("{:e}", first.n_det));
    t.push_meta("u0_squared", format!("{:e}", first.u0_sq));
    for k in kernels {
        t.push_meta(format!("d0_{}", k.mode), format!("{:e}", k.d0()));
        t.push_meta(format!("provenance_{}", k.mode), &k.provenance);
        for w in &k.warnings {
            t.push_meta("warning", w);
        }
    }
    let bw = first.bandwidth();
    for &o in omega {
        let mut row = vec![o, if bw > 0.0 { o / bw } else { 0.0 }];
        row.extend(kernels.iter().map(|k| k.spectral(o)));
        t.rows.push(row);
    }
    Ok(t)
}

/// Rebuilds a kernel from a kernel file. Approx1D is reconstructed
/// analytically; Exact3D becomes a tabulated profile.
pub fn read_kernel(table: &Table, mode: KernelMode) -> Result<ResponseKernel> {
    let omega = table.column("omega_rad_s")?;
    let values = table.column(&kernel_column(mode))?;
    ResponseKernel::from_table(
        mode,
        table.meta_f64("mu_J")?,
        table.meta_f64("hbar_J_s")?,
        table.meta_f64("n_det")?,
        &omega,
        &values,
    )
}

pub fn reconstruction_table(rec: &Reconstruction, truth: Option<&[f64]>) -> Table {
    let mut columns = vec!["omega_rad_s".to_string(), "spectrum_A2_s".into()];
    if truth.is_some() {
        columns.push("truth_A2_s".into());
    }
    let mut t = Table::new(columns);
    let d = &rec.diagnostics;
    t.push_meta("lambda", format!("{:e}", d.lambda));
    t.push_meta("residual_norm", format!("{:e}", d.residual_norm));
    t.push_meta("solution_norm", format!("{:e}", d.solution_norm));
    t.push_meta("condition", format!("{:e}", d.condition));
    t.push_meta("chi2_target", format!("{:e}", d.chi2_target));
    t.push_meta("discrepancy_met", d.discrepancy_met);
    t.push_meta("active_set_iterations", d.active_set_iterations);
    for (i, (&o, &s)) in rec.omega.iter().zip(&rec.spectrum).enumerate() {
        let mut row = vec![o, s];
        if let Some(tr) = truth {
            row.push(tr[i]);
        }
        t.rows.push(row);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(vec!["a".into(), "b".into()]);
        t.push_meta("x", "1e-3");
        t.push_meta("note", "text, with comma = sign");
        t.config = Some("[trap]\natom_number = 1e5\n".into());
        t.rows = vec![vec![0.1, -2.5e-300], vec![1.0 / 3.0, f64::MAX]];
        t
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Table::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = sample();
        let mut buf = Vec::new();
        t.write(&mut buf, Format::Json).unwrap();
        assert_eq!(Table::read(buf.as_slice(), Format::Json).unwrap(), t);
    }

    #[test]
    fn bad_cells_are_reported() {
        let err = Table::read_csv("a,b\n1,zz\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(Table::read_csv("# only = header\n".as_bytes()).is_err());
    }
}
