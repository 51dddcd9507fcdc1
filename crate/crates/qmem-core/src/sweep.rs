//! Parameter sweeps: runs the optimizer (or a fixed control, or the
//! shape-based comparison) over rectangular grids of memory parameters and
//! detunings, writing a resumable, deterministic CSV.
//!
//! File layout: line 1 is a JSON header carrying the scientific part of the
//! spec plus the grid fingerprint, line 2 the CSV column header, then one
//! row per completed point. Completed rows are appended as workers finish;
//! on success the file is rewritten sorted by (delta, d, tau_sig), so an
//! uninterrupted run and an interrupt-plus-resume produce identical bytes.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bound;
use crate::error::{invalid_arg, Error, Result};
use crate::fields::{ControlParams, MemoryParams};
use crate::optimizer::{objective, optimize_control, optimize_theta_only, OptimizeOptions};
use crate::protocols::{character_ratio, classify_from_measurements, pure_ats_reference, Label};
use crate::shapeopt::{build_storage_map, optimal_signal_efficiency, ShapeOptions};
use crate::solver::{default_grids, simulate_storage, GridOptions};

/// Exact CSV column order; stable external contract.
pub const CSV_COLUMNS: &str = "delta,d,tau_sig,theta,delay,tau_ctrl,eta,eta_opt,eta_ratio,\
adiabaticity,c_tilde,label,n_evals,converged,grid_fingerprint,status,reason";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    FullOpt,
    ThetaOnly,
    Fixed2pi,
    CompareShapes,
}

impl SweepMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMode::FullOpt => "full_opt",
            SweepMode::ThetaOnly => "theta_only",
            SweepMode::Fixed2pi => "fixed_2pi",
            SweepMode::CompareShapes => "compare_shapes",
        }
    }

    pub fn parse(s: &str) -> Option<SweepMode> {
        match s {
            "full_opt" => Some(SweepMode::FullOpt),
            "theta_only" => Some(SweepMode::ThetaOnly),
            "fixed_2pi" => Some(SweepMode::Fixed2pi),
            "compare_shapes" => Some(SweepMode::CompareShapes),
            _ => None,
        }
    }
}

/// Scientific content of a sweep; this is what gets embedded in the output
/// header and must match on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecCore {
    pub d_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub delta_values: Vec<f64>,
    pub mode: SweepMode,
    pub grid: GridOptions,
    /// Bound kernel grid size used for eta_opt.
    pub bound_n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub d_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub delta_values: Vec<f64>,
    pub mode: SweepMode,
    #[serde(default)]
    pub grid: GridOptions,
    #[serde(default = "default_bound_n")]
    pub bound_n: usize,
    pub output: PathBuf,
    /// 0 means the rayon default.
    #[serde(default)]
    pub workers: usize,
}

fn default_bound_n() -> usize {
    bound::DEFAULT_BOUND_N
}

impl SweepSpec {
    pub fn core(&self) -> SpecCore {
        SpecCore {
            d_values: self.d_values.clone(),
            tau_values: self.tau_values.clone(),
            delta_values: self.delta_values.clone(),
            mode: self.mode,
            grid: self.grid,
            bound_n: self.bound_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("d", &self.d_values, true)?;
        check_axis("tau_sig", &self.tau_values, true)?;
        check_axis("delta", &self.delta_values, false)?;
        if self.bound_n < 100 {
            return Err(invalid_arg("bound_n must be at least 100"));
        }
        if self.output.as_os_str().is_empty() {
            return Err(invalid_arg("sweep output path is empty"));
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.d_values.len() * self.tau_values.len() * self.delta_values.len()
    }
}

fn check_axis(name: &str, values: &[f64], positive: bool) -> Result<()> {
    if values.is_empty() {
        return Err(invalid_arg(format!("{name} axis is empty")));
    }
    for w in values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(invalid_arg(format!("{name} axis is not strictly increasing")));
        }
    }
    for &v in values {
        if !v.is_finite() || (positive && v <= 0.0) {
            return Err(invalid_arg(format!("{name} axis holds an invalid value {v}")));
        }
    }
    Ok(())
}

/// One sweep point; `status` is "ok" or "failed", failed rows carry NaN
/// metrics and a reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub delta: f64,
    pub d: f64,
    pub tau_sig: f64,
    pub theta: f64,
    pub delay: f64,
    pub tau_ctrl: f64,
    pub eta: f64,
    pub eta_opt: f64,
    pub eta_ratio: f64,
    pub adiabaticity: f64,
    pub c_tilde: f64,
    pub label: String,
    pub n_evals: usize,
    pub converged: bool,
    pub grid_fingerprint: String,
    pub status: String,
    pub reason: String,
}

impl SweepRecord {
    pub fn key(&self) -> PointKey {
        PointKey::new(self.delta, self.d, self.tau_sig)
    }

    /// Shortest-roundtrip formatting throughout, so write/parse round trips
    /// are exact and reruns are byte-identical.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.delta,
            self.d,
            self.tau_sig,
            self.theta,
            self.delay,
            self.tau_ctrl,
            self.eta,
            self.eta_opt,
            self.eta_ratio,
            self.adiabaticity,
            self.c_tilde,
            self.label,
            self.n_evals,
            self.converged,
            self.grid_fingerprint,
            self.status,
            self.reason
        )
    }

    pub fn parse_csv(line: &str, line_no: usize) -> Result<SweepRecord> {
        let parts: Vec<&str> = line.split(',').collect();
        let n_cols = CSV_COLUMNS.split(',').count();
        if parts.len() != n_cols {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {n_cols} columns, found {}", parts.len()),
            });
        }
        let num = |idx: usize| -> Result<f64> {
            parts[idx].parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("column {} is not a number: {:?}", idx + 1, parts[idx]),
            })
        };
        let rec = SweepRecord {
            delta: num(0)?,
            d: num(1)?,
            tau_sig: num(2)?,
            theta: num(3)?,
            delay: num(4)?,
            tau_ctrl: num(5)?,
            eta: num(6)?,
            eta_opt: num(7)?,
            eta_ratio: num(8)?,
            adiabaticity: num(9)?,
            c_tilde: num(10)?,
            label: parts[11].to_string(),
            n_evals: parts[12].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad n_evals {:?}", parts[12]),
            })?,
            converged: parts[13].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad converged flag {:?}", parts[13]),
            })?,
            grid_fingerprint: parts[14].to_string(),
            status: parts[15].to_string(),
            reason: parts[16].to_string(),
        };
        if rec.status == "ok" {
            if !rec.label.is_empty() && Label::parse(&rec.label).is_none() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown label {:?}", rec.label),
                });
            }
            let quotient = rec.eta / rec.eta_opt;
            if (quotient - rec.eta_ratio).abs() > 1e-12 * quotient.abs().max(1.0) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "eta_ratio does not match eta / eta_opt".into(),
                });
            }
        } else if rec.status != "failed" {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("unknown status {:?}", rec.status),
            });
        }
        Ok(rec)
    }
}

/// Bitwise point identity; exact because the CSV uses shortest-roundtrip
/// formatting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PointKey(u64, u64, u64);

impl PointKey {
    pub fn new(delta: f64, d: f64, tau_sig: f64) -> PointKey {
        PointKey(delta.to_bits(), d.to_bits(), tau_sig.to_bits())
    }
}

/// Parsed state of an existing sweep file.
#[derive(Debug, Clone)]
pub struct ResumeState {
    pub core: SpecCore,
    pub fingerprint: String,
    pub records: Vec<SweepRecord>,
}

impl ResumeState {
    pub fn completed(&self) -> HashSet<PointKey> {
        self.records.iter().map(|r| r.key()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    spec: SpecCore,
    fingerprint: String,
}

/// Reads a sweep file back: embedded spec, fingerprint, completed records.
pub fn resume(path: &Path) -> Result<ResumeState> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing JSON header line".into(),
    })??;
    let header: FileHeader = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        msg: format!("bad JSON header: {e}"),
    })?;
    let columns = lines.next().ok_or(Error::Parse {
        line: 2,
        msg: "missing CSV column header".into(),
    })??;
    if columns != CSV_COLUMNS {
        return Err(Error::Parse {
            line: 2,
            msg: "CSV column header does not match the schema".into(),
        });
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let line_no = i + 3;
        let rec = SweepRecord::parse_csv(&line, line_no)?;
        if !seen.insert(rec.key()) {
            return Err(Error::Parse {
                line: line_no,
                msg: "duplicate sweep point".into(),
            });
        }
        records.push(rec);
    }
    Ok(ResumeState {
        core: header.spec,
        fingerprint: header.fingerprint,
        records,
    })
}

/// Summary returned by [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub n_total: usize,
    pub n_resumed: usize,
    pub n_computed: usize,
    pub n_failed: usize,
}

fn sanitize(reason: &str) -> String {
    reason.replace(['\n', '\r'], " ").replace(',', ";")
}

fn sort_records(records: &mut [SweepRecord]) {
    records.sort_by(|a, b| {
        (a.delta, a.d, a.tau_sig)
            .partial_cmp(&(b.delta, b.d, b.tau_sig))
            .unwrap()
    });
}

/// Runs (or resumes) a sweep, appending rows as points complete and leaving
/// a sorted file behind. Identical spec and grids give identical bytes.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let fingerprint = spec.grid.fingerprint();
    let header = FileHeader {
        spec: spec.core(),
        fingerprint: fingerprint.clone(),
    };

    // load or create the output before any computation
    let mut existing = Vec::new();
    if spec.output.exists() && fs::metadata(&spec.output)?.len() > 0 {
        let state = resume(&spec.output)?;
        if state.core != header.spec {
            return Err(Error::SpecConflict(format!(
                "existing file {} was produced by a different spec",
                spec.output.display()
            )));
        }
        existing = state.records;
    } else {
        let mut f = fs::File::create(&spec.output)?;
        writeln!(f, "{}", serde_json::to_string(&header)?)?;
        writeln!(f, "{CSV_COLUMNS}")?;
    }
    let completed: HashSet<PointKey> = existing.iter().map(|r| r.key()).collect();

    // points in final order; only the missing ones are computed
    let mut points = Vec::new();
    for &delta in &spec.delta_values {
        for &d in &spec.d_values {
            for &tau in &spec.tau_values {
                points.push((delta, d, tau));
            }
        }
    }
    let todo: Vec<(f64, f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(delta, d, tau)| !completed.contains(&PointKey::new(delta, d, tau)))
        .collect();

    // eta_opt depends only on d; compute each value once
    let mut eta_opts = std::collections::HashMap::new();
    for &(_, d, _) in &todo {
        if !eta_opts.contains_key(&d.to_bits()) {
            eta_opts.insert(d.to_bits(), bound::eta_opt(d, spec.bound_n)?);
        }
    }

    let appender = Mutex::new(fs::OpenOptions::new().append(true).open(&spec.output)?);
    let compute = |&(delta, d, tau): &(f64, f64, f64)| -> SweepRecord {
        let eta_opt = eta_opts[&d.to_bits()];
        let rec = compute_point(spec, delta, d, tau, eta_opt, &fingerprint);
        {
            let mut f = appender.lock().unwrap();
            let _ = writeln!(f, "{}", rec.to_csv());
            let _ = f.flush();
        }
        rec
    };

    let new_records: Vec<SweepRecord> = if spec.workers == 1 {
        todo.iter().map(compute).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::InvalidState(format!("thread pool: {e}")))?;
        pool.install(|| todo.par_iter().map(compute).collect())
    };

    let mut records = existing;
    records.extend(new_records);
    write_records(&spec.output, &header.spec, &fingerprint, &mut records)?;

    let n_failed = records.iter().filter(|r| r.status == "failed").count();
    Ok(SweepOutcome {
        n_total: points.len(),
        n_resumed: completed.len(),
        n_computed: todo.len(),
        n_failed,
        records,
    })
}

/// Sorts the records and rewrites the sweep file atomically (temp file plus
/// rename).
pub fn write_records(
    path: &Path,
    core: &SpecCore,
    fingerprint: &str,
    records: &mut [SweepRecord],
) -> Result<()> {
    sort_records(records);
    let header = FileHeader {
        spec: core.clone(),
        fingerprint: fingerprint.to_string(),
    };
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        writeln!(f, "{}", serde_json::to_string(&header)?)?;
        writeln!(f, "{CSV_COLUMNS}")?;
        for r in records.iter() {
            writeln!(f, "{}", r.to_csv())?;
        }
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn compute_point(
    spec: &SweepSpec,
    delta: f64,
    d: f64,
    tau: f64,
    eta_opt: f64,
    fingerprint: &str,
) -> SweepRecord {
    match try_compute_point(spec, delta, d, tau, eta_opt, fingerprint) {
        Ok(rec) => rec,
        Err(e) => SweepRecord {
            delta,
            d,
            tau_sig: tau,
            theta: f64::NAN,
            delay: f64::NAN,
            tau_ctrl: f64::NAN,
            eta: f64::NAN,
            eta_opt: f64::NAN,
            eta_ratio: f64::NAN,
            adiabaticity: f64::NAN,
            c_tilde: f64::NAN,
            label: String::new(),
            n_evals: 0,
            converged: false,
            grid_fingerprint: fingerprint.to_string(),
            status: "failed".into(),
            reason: sanitize(&e.to_string()),
        },
    }
}

fn try_compute_point(
    spec: &SweepSpec,
    delta: f64,
    d: f64,
    tau: f64,
    eta_opt: f64,
    fingerprint: &str,
) -> Result<SweepRecord> {
    let m = MemoryParams::new(d, tau, delta, 0.0)?;
    let oo = OptimizeOptions {
        grid: spec.grid,
        eta_opt: Some(eta_opt),
        ..Default::default()
    };

    let (g, eta, n_evals, converged) = match spec.mode {
        SweepMode::FullOpt => {
            let r = optimize_control(&m, &oo)?;
            (r.best_g, r.eta, r.n_evals, r.converged)
        }
        SweepMode::ThetaOnly => {
            let r = optimize_theta_only(&m, &oo)?;
            (r.best_g, r.eta, r.n_evals, r.converged)
        }
        SweepMode::Fixed2pi => {
            let g = ControlParams::new(2.0 * std::f64::consts::PI, 0.0, tau)?;
            let eta = objective(&m, &g, &spec.grid)?;
            (g, eta, 1, true)
        }
        SweepMode::CompareShapes => {
            // eta column carries the shape-based bound sigma0^2, maximized
            // over the seed-optimized controls; the control columns report
            // the Gaussian optimum for reference
            let r = optimize_control(&m, &oo)?;
            let sopts = ShapeOptions {
                grid: spec.grid,
                ..Default::default()
            };
            let mut eta_shape = 0.0f64;
            for seed in &r.seeds {
                let map = build_storage_map(&m, &seed.g, &sopts)?;
                eta_shape = eta_shape.max(optimal_signal_efficiency(&map)?.eta_shape);
            }
            (r.best_g, eta_shape, r.n_evals, r.converged)
        }
    };

    let (zg, tg) = default_grids(&m, &g, &spec.grid)?;
    let sim = simulate_storage(&m, &g, &zg, &tg)?;
    let c = character_ratio(&sim, &m, &zg, &tg)?;
    let c0 = pure_ats_reference(&m, &spec.grid)?;
    let diag = classify_from_measurements(&m, &g, c, c0)?;

    Ok(SweepRecord {
        delta,
        d,
        tau_sig: tau,
        theta: g.theta,
        delay: g.delay,
        tau_ctrl: g.tau_ctrl,
        eta,
        eta_opt,
        eta_ratio: eta / eta_opt,
        adiabaticity: diag.adiabaticity,
        c_tilde: diag.normalized_character,
        label: diag.label.as_str().to_string(),
        n_evals,
        converged,
        grid_fingerprint: fingerprint.to_string(),
        status: "ok".into(),
        reason: String::new(),
    })
}
