//! Binary field dumps with a `key=value` header sidecar, and CSV reports.
//!
//! Field files hold little-endian `f64` values with the direction index
//! outermost and `ix` fastest. CSV numbers use 17 significant digits so that
//! every value round-trips exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::{DirectionalField, ScalarField};
use crate::grid::PeriodicGrid;
use crate::harness::{ErrorRow, RateRow, RefinementRow, ResidualRow};
use crate::kinetic::Diagnostics;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldHeader {
    pub n: [usize; 3],
    /// 0 for scalar fields.
    pub n_dirs: usize,
    pub time: f64,
    pub epsilon: f64,
}

impl FieldHeader {
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2] * self.n_dirs.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn render(&self) -> String {
        format!(
            "nx={}\nny={}\nnz={}\nn_dirs={}\ntime={}\nepsilon={}\n",
            self.n[0],
            self.n[1],
            self.n[2],
            self.n_dirs,
            fmt_real(self.time),
            fmt_real(self.epsilon)
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let mut n = [None; 3];
        let (mut n_dirs, mut time, mut epsilon) = (None, None, None);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("header line {}: malformed `{line}`", lineno + 1));
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "nx" => n[0] = Some(v.parse().map_err(|_| bad())?),
                "ny" => n[1] = Some(v.parse().map_err(|_| bad())?),
                "nz" => n[2] = Some(v.parse().map_err(|_| bad())?),
                "n_dirs" => n_dirs = Some(v.parse().map_err(|_| bad())?),
                "time" => time = Some(v.parse().map_err(|_| bad())?),
                "epsilon" => epsilon = Some(v.parse().map_err(|_| bad())?),
                _ => return Err(Error::Config(format!("header line {}: unknown key `{k}`", lineno + 1))),
            }
        }
        let missing = |what: &str| Error::Config(format!("header is missing `{what}`"));
        Ok(Self {
            n: [
                n[0].ok_or_else(|| missing("nx"))?,
                n[1].ok_or_else(|| missing("ny"))?,
                n[2].ok_or_else(|| missing("nz"))?,
            ],
            n_dirs: n_dirs.ok_or_else(|| missing("n_dirs"))?,
            time: time.ok_or_else(|| missing("time"))?,
            epsilon: epsilon.ok_or_else(|| missing("epsilon"))?,
        })
    }
}

/// `field.bin` -> `field.hdr`.
pub fn header_path(path: &Path) -> PathBuf {
    path.with_extension("hdr")
}

pub fn write_field(path: &Path, header: &FieldHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.len() {
        return Err(Error::Shape(format!(
            "field dump expects {} values, got {}",
            header.len(),
            values.len()
        )));
    }
    let mut bytes = Vec::with_capacity(8 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    fs::write(header_path(path), header.render())?;
    Ok(())
}

pub fn write_scalar(
    path: &Path,
    grid: &PeriodicGrid<f64>,
    s: &ScalarField<f64>,
    time: f64,
    epsilon: f64,
) -> Result<()> {
    let header = FieldHeader {
        n: grid.n(),
        n_dirs: 0,
        time,
        epsilon,
    };
    write_field(path, &header, s.as_slice())
}

pub fn write_directional(
    path: &Path,
    grid: &PeriodicGrid<f64>,
    f: &DirectionalField<f64>,
    time: f64,
    epsilon: f64,
) -> Result<()> {
    let header = FieldHeader {
        n: grid.n(),
        n_dirs: f.n_dirs(),
        time,
        epsilon,
    };
    write_field(path, &header, f.as_slice())
}

pub fn read_field(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let header = FieldHeader::parse(&fs::read_to_string(header_path(path))?)?;
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * header.len() {
        return Err(Error::Shape(format!(
            "{} holds {} bytes, header implies {}",
            path.display(),
            bytes.len(),
            8 * header.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, values))
}

/// 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A row type with a fixed CSV schema.
pub trait CsvRecord {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn write_csv<R: CsvRecord>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(R::HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Header and raw string records of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

/// Appends CSV rows as they are produced, e.g. per-step diagnostics.
pub struct CsvAppender<R> {
    out: std::io::BufWriter<fs::File>,
    _row: std::marker::PhantomData<R>,
}

impl<R: CsvRecord> CsvAppender<R> {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{}", R::HEADER.join(","))?;
        Ok(Self {
            out,
            _row: std::marker::PhantomData,
        })
    }

    pub fn push(&mut self, row: &R) -> Result<()> {
        writeln!(self.out, "{}", row.fields().join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl CsvRecord for Diagnostics {
    const HEADER: &'static [&'static str] = &["t", "energy", "theta_min", "theta_max", "f_min", "f_max"];
    fn fields(&self) -> Vec<String> {
        [
            self.t,
            self.energy,
            self.theta_min,
            self.theta_max,
            self.f_min,
            self.f_max,
        ]
        .map(fmt_real)
        .to_vec()
    }
}

/// Per-step record of the limit solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl LimitDiagnostics {
    pub fn of(grid: &PeriodicGrid<f64>, state: &crate::limit::LimitState<f64>) -> Self {
        Self {
            t: state.t,
            mass: state.mass(grid),
            theta_min: state.theta0.min(),
            theta_max: state.theta0.max(),
        }
    }
}

impl CsvRecord for LimitDiagnostics {
    const HEADER: &'static [&'static str] = &["t", "mass_theta_plus_theta4", "theta_min", "theta_max"];
    fn fields(&self) -> Vec<String> {
        [self.t, self.mass, self.theta_min, self.theta_max]
            .map(fmt_real)
            .to_vec()
    }
}

/// One stored point of a layer trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNormRow {
    pub tau: f64,
    pub norm_theta: f64,
    pub norm_f: f64,
}

impl LayerNormRow {
    pub fn rows(traj: &crate::layers::LayerTrajectory<f64>) -> Vec<Self> {
        traj.taus
            .iter()
            .zip(&traj.norms)
            .map(|(&tau, &(a, b))| Self {
                tau,
                norm_theta: a,
                norm_f: b,
            })
            .collect()
    }
}

impl CsvRecord for LayerNormRow {
    const HEADER: &'static [&'static str] = &["tau", "norm_thetaI", "norm_fI"];
    fn fields(&self) -> Vec<String> {
        [self.tau, self.norm_theta, self.norm_f].map(fmt_real).to_vec()
    }
}

/// Picard increment norm; `ratio` is undefined for the first iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRow {
    pub iter: usize,
    pub v_norm: f64,
    pub ratio: Option<f64>,
}

impl IterationRow {
    pub fn rows(fp: &crate::oracle::FixedPoint) -> Vec<Self> {
        fp.increment_norms
            .iter()
            .enumerate()
            .map(|(k, &v)| Self {
                iter: k + 1,
                v_norm: v,
                ratio: k.checked_sub(1).map(|j| fp.ratios[j]),
            })
            .collect()
    }
}

impl CsvRecord for IterationRow {
    const HEADER: &'static [&'static str] = &["iter", "v_norm", "ratio"];
    fn fields(&self) -> Vec<String> {
        vec![
            self.iter.to_string(),
            fmt_real(self.v_norm),
            self.ratio.map(fmt_real).unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyRow {
    pub resolution: usize,
    pub max_discrepancy: f64,
}

impl DiscrepancyRow {
    pub fn rows(cv: &crate::oracle::CrossValidation) -> Vec<Self> {
        cv.resolutions
            .iter()
            .zip(&cv.discrepancies)
            .map(|(&resolution, &max_discrepancy)| Self {
                resolution,
                max_discrepancy,
            })
            .collect()
    }
}

impl CsvRecord for DiscrepancyRow {
    const HEADER: &'static [&'static str] = &["resolution", "max_discrepancy"];
    fn fields(&self) -> Vec<String> {
        vec![self.resolution.to_string(), fmt_real(self.max_discrepancy)]
    }
}

impl CsvRecord for ErrorRow {
    const HEADER: &'static [&'static str] = &[
        "epsilon",
        "t",
        "err_linf_f",
        "err_linf_theta",
        "err_h2_theta",
        "composite_order",
    ];
    fn fields(&self) -> Vec<String> {
        let mut v: Vec<String> = [
            self.epsilon,
            self.t,
            self.err_linf_f,
            self.err_linf_theta,
            self.err_h2_theta,
        ]
        .map(fmt_real)
        .to_vec();
        v.push(self.composite_order.to_string());
        v
    }
}

impl CsvRecord for RateRow {
    const HEADER: &'static [&'static str] = &[
        "metric",
        "composite_order",
        "slope",
        "intercept",
        "max_residual",
        "flag",
    ];
    fn fields(&self) -> Vec<String> {
        vec![
            self.metric.clone(),
            self.composite_order.to_string(),
            fmt_real(self.slope),
            fmt_real(self.intercept),
            fmt_real(self.max_residual),
            self.flag.clone(),
        ]
    }
}

impl CsvRecord for ResidualRow {
    const HEADER: &'static [&'static str] = &["epsilon", "t", "residual_l1", "residual_l2", "composite_order"];
    fn fields(&self) -> Vec<String> {
        let mut v: Vec<String> = [self.epsilon, self.t, self.residual_l1, self.residual_l2]
            .map(fmt_real)
            .to_vec();
        v.push(self.composite_order.to_string());
        v
    }
}

impl CsvRecord for RefinementRow {
    const HEADER: &'static [&'static str] = &[
        "epsilon",
        "t",
        "composite_order",
        "metric",
        "coarse",
        "fine",
        "relative_change",
    ];
    fn fields(&self) -> Vec<String> {
        vec![
            fmt_real(self.epsilon),
            fmt_real(self.t),
            self.composite_order.to_string(),
            self.metric.to_owned(),
            fmt_real(self.coarse),
            fmt_real(self.fine),
            fmt_real(self.relative_change()),
        ]
    }
}
