//! The work behind each subcommand, returning data and rendered text.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use passivity_core::network::assemble;
use passivity_core::passivity::{certify, incremental_monotonicity_test, passive_voltage_window, MonotonicityReport};
use passivity_core::sim::{detect_steady_state, run_scenario, SegmentOutcome, Trace};
use passivity_core::{LoadModel, PassivityCertificate, Verdict, VoltageWindow};
use rayon::prelude::*;

use crate::config::{Analysis, ConfigDocument, ConfigFile};

/// Per-step growth of the error Hamiltonian tolerated on a certified
/// segment, relative to the previous sample.
pub const ENERGY_SLACK: f64 = 1e-9;

pub const THREADS_ENV: &str = "PASSIVITY_CERT_THREADS";

fn float(buf: &mut ryu::Buffer, x: f64) -> String {
    if x.is_finite() {
        buf.format(x).to_string()
    } else {
        x.to_string()
    }
}

/// Left-aligned plain-text table.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (k, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if k + 1 == cells.len() {
                s.push_str(cell);
            } else {
                let _ = write!(s, "{cell:<w$}  ");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

pub struct CertifyRow {
    pub load: String,
    pub cert: PassivityCertificate,
    /// Incremental check over the certified interval containing the voltage.
    pub monotonicity: Option<((f64, f64), MonotonicityReport)>,
}

pub fn certify_loads(file: &ConfigFile, voltage: f64, seed: Option<u64>) -> Result<Vec<CertifyRow>> {
    if !(voltage > 0.0 && voltage.is_finite()) {
        bail!("--voltage must be a positive amplitude, got {voltage}");
    }
    let mut rows = Vec::new();
    for (_, doc) in file.documents() {
        let a = &doc.analysis;
        for load in &doc.grid.loads {
            let cert = certify(&load.model, voltage)?;
            let window = window(&load.model, a)?;
            let monotonicity = match window
                .intervals
                .iter()
                .find(|&&(lo, hi)| lo <= voltage && voltage <= hi)
            {
                Some(&region) if a.monotonicity_samples > 0 => Some((
                    region,
                    incremental_monotonicity_test(&load.model, region, a.monotonicity_samples, seed.unwrap_or(a.seed))?,
                )),
                _ => None,
            };
            rows.push(CertifyRow {
                load: load.id.clone(),
                cert,
                monotonicity,
            });
        }
    }
    Ok(rows)
}

pub fn certify_table(rows: &[CertifyRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let c = &r.cert;
            vec![
                r.load.clone(),
                format!("{}", c.v_amp),
                c.verdict.as_str().to_string(),
                format!("{:.6e}", c.lambda_min),
                format!("{:.6e}", c.lambda_max),
                format!("{:.6e}", c.residuals.first),
                format!("{:.6e}", c.residuals.second),
            ]
        })
        .collect();
    let mut out = render_table(
        &[
            "load",
            "V",
            "verdict",
            "lambda_min",
            "lambda_max",
            "residual_1",
            "residual_2",
        ],
        &body,
    );
    for r in rows {
        if let Some(((lo, hi), m)) = &r.monotonicity {
            let _ = writeln!(
                out,
                "{}: {} sampled pairs in [{lo:.2}, {hi:.2}] V, {} monotonicity violations",
                r.load, m.samples, m.violation_count
            );
        }
    }
    out
}

pub fn certify_csv(rows: &[CertifyRow]) -> String {
    let mut buf = ryu::Buffer::new();
    let mut out = String::from("load,v,verdict,lambda_min,lambda_max,residual_1,residual_2\n");
    for r in rows {
        let c = &r.cert;
        let nums: Vec<String> = [c.lambda_min, c.lambda_max, c.residuals.first, c.residuals.second]
            .iter()
            .map(|&x| float(&mut buf, x))
            .collect();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.load,
            float(&mut buf, c.v_amp),
            c.verdict.as_str(),
            nums.join(",")
        );
    }
    out
}

pub fn all_passive(rows: &[CertifyRow]) -> bool {
    rows.iter().all(|r| r.cert.verdict.is_passive())
}

fn window(model: &LoadModel, a: &Analysis) -> Result<VoltageWindow> {
    Ok(passive_voltage_window(model, a.v_min, a.v_max, a.grid, a.tol)?)
}

pub struct Limits {
    pub rows: Vec<(String, f64, f64)>,
    pub warnings: Vec<String>,
}

pub fn limits(file: &ConfigFile) -> Result<Limits> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (_, doc) in file.documents() {
        for load in &doc.grid.loads {
            let w = window(&load.model, &doc.analysis)?;
            if w.is_empty() {
                warnings.push(format!(
                    "load `{}` is not strictly passive anywhere in [{}, {}] V",
                    load.id, doc.analysis.v_min, doc.analysis.v_max
                ));
            }
            rows.extend(w.intervals.iter().map(|&(lo, hi)| (load.id.clone(), lo, hi)));
        }
    }
    Ok(Limits { rows, warnings })
}

pub fn limits_csv(l: &Limits) -> String {
    let mut buf = ryu::Buffer::new();
    let mut out = String::from("load,v_lo,v_hi\n");
    for (id, lo, hi) in &l.rows {
        let _ = writeln!(out, "{id},{},{}", float(&mut buf, *lo), float(&mut buf, *hi));
    }
    out
}

/// `lo:hi:n`, endpoints included; `n = 1` gives `lo` alone.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        bail!("range `{text}` is not of the form lo:hi:n");
    };
    let lo: f64 = lo.trim().parse().with_context(|| format!("range start `{lo}`"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("range end `{hi}`"))?;
    let n: usize = n.trim().parse().with_context(|| format!("range count `{n}`"))?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() {
        bail!("range `{text}` needs finite bounds and n >= 1");
    }
    Ok((0..n)
        .map(|k| {
            if n == 1 {
                lo
            } else if k + 1 == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect())
}

pub struct SweepRow {
    pub value: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// Finds the load addressed by `<load id>.<parameter path>`.
fn resolve_param<'a>(file: &'a ConfigFile, text: &'a str) -> Result<(&'a ConfigDocument, LoadModel, &'a str)> {
    for (_, doc) in file.documents() {
        for load in &doc.grid.loads {
            if let Some(path) = text.strip_prefix(load.id.as_str()).and_then(|r| r.strip_prefix('.')) {
                load.model
                    .param(path)
                    .map_err(|_| anyhow!("`{path}` is not a numeric parameter of load `{}`", load.id))?;
                return Ok((doc, load.model, path));
            }
        }
    }
    bail!("`{text}` does not name a load parameter (expected <load>.<param>)")
}

fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

pub fn sweep(file: &ConfigFile, param: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    let (doc, model, path) = resolve_param(file, param)?;
    let a = doc.analysis.clone();
    let point = |&value: &f64| -> Result<SweepRow> {
        let mut m = model;
        m.set_param(path, value)?;
        Ok(SweepRow {
            value,
            intervals: window(&m, &a)?.intervals,
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    pool.install(|| values.par_iter().map(point).collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut buf = ryu::Buffer::new();
    let mut out = String::from("value,v_lo,v_hi\n");
    for r in rows {
        let v = float(&mut buf, r.value);
        if r.intervals.is_empty() {
            let _ = writeln!(out, "{v},,");
        }
        for &(lo, hi) in &r.intervals {
            let _ = writeln!(out, "{v},{},{}", float(&mut buf, lo), float(&mut buf, hi));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Settled,
    Unsettled,
    Diverged,
    Failed,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Settled => "settled",
            Outcome::Unsettled => "unsettled",
            Outcome::Diverged => "unstable",
            Outcome::Failed => "step_failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consistency {
    /// The certificate predicts the observed behavior and it was observed.
    Consistent,
    Inconsistent,
    /// The equilibrium certifies but the transient left the window, so no
    /// prediction applies.
    NotGuaranteed,
}

impl Consistency {
    pub fn as_str(self) -> &'static str {
        match self {
            Consistency::Consistent => "consistent",
            Consistency::Inconsistent => "INCONSISTENT",
            Consistency::NotGuaranteed => "not_guaranteed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegmentVerdict {
    pub segment: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub load: String,
    /// Equilibrium amplitude under the segment's parameters.
    pub v_eq: Option<f64>,
    pub certificate: Option<Verdict>,
    /// Certified interval holding the equilibrium.
    pub window: Option<(f64, f64)>,
    pub visited: (f64, f64),
    pub visited_certified: bool,
    pub outcome: Outcome,
    /// Samples where the error Hamiltonian grew beyond the slack.
    pub energy_increases: Option<usize>,
    pub consistency: Consistency,
}

pub fn energy_increases(h: &[f64]) -> usize {
    h.windows(2).filter(|w| w[1] > w[0] * (1.0 + ENERGY_SLACK)).count()
}

/// Per segment and load: the certificate at the equilibrium, what the run did
/// and whether the two agree.
pub fn segment_verdicts(doc: &ConfigDocument, trace: &Trace) -> Result<Vec<SegmentVerdict>> {
    let settings = doc
        .scenario
        .as_ref()
        .ok_or_else(|| anyhow!("document has no scenario"))?;
    let sys = assemble(&doc.grid)?;
    let settle = detect_steady_state(trace, doc.analysis.settle_window, doc.analysis.settle_tol);
    let mut models: Vec<LoadModel> = doc.grid.loads.iter().map(|l| l.model).collect();
    let mut next_event = 0;
    let mut out = Vec::new();
    for (k, seg) in trace.segments.iter().enumerate() {
        while next_event < settings.events.len() && settings.events[next_event].t <= seg.t_start {
            let e = &settings.events[next_event];
            let l = sys.load_index(&e.target).expect("validated");
            models[l].set_param(&e.param, e.value)?;
            next_event += 1;
        }
        let energy = trace.segment_energy(k).map(|h| energy_increases(&h));
        let mut rows = Vec::new();
        for (l, model) in models.iter().enumerate() {
            let v_eq = seg.reference.as_ref().map(|x| sys.load_voltage(x, l).amplitude());
            let certificate = v_eq.map(|v| certify(model, v)).transpose()?.map(|c| c.verdict);
            let w = window(model, &doc.analysis)?;
            let visited = seg.visited[l];
            let holding = |v: f64| w.intervals.iter().copied().find(|&(lo, hi)| lo <= v && v <= hi);
            let visited_certified = holding(visited.0).is_some_and(|(_, hi)| visited.1 <= hi);
            let outcome = match &seg.outcome {
                SegmentOutcome::Completed if settle[k][l].settled => Outcome::Settled,
                SegmentOutcome::Completed => Outcome::Unsettled,
                SegmentOutcome::Diverged { .. } => Outcome::Diverged,
                SegmentOutcome::StepFailed { .. } => Outcome::Failed,
            };
            rows.push(SegmentVerdict {
                segment: k,
                t_start: seg.t_start,
                t_end: seg.t_end,
                load: doc.grid.loads[l].id.clone(),
                v_eq,
                certificate,
                window: v_eq.and_then(holding),
                visited,
                visited_certified,
                outcome,
                energy_increases: energy,
                consistency: Consistency::NotGuaranteed,
            });
        }
        // the energy argument needs every load of the grid inside its window
        let guaranteed = seg.outcome.is_completed()
            && rows
                .iter()
                .all(|r| r.visited_certified && r.certificate.is_some_and(Verdict::is_passive));
        for r in &mut rows {
            r.consistency = if guaranteed {
                if r.outcome == Outcome::Settled && r.energy_increases == Some(0) {
                    Consistency::Consistent
                } else {
                    Consistency::Inconsistent
                }
            } else if r.certificate.is_none_or(|c| c == Verdict::Violated) {
                if r.outcome == Outcome::Settled {
                    Consistency::Inconsistent
                } else {
                    Consistency::Consistent
                }
            } else {
                Consistency::NotGuaranteed
            };
        }
        out.extend(rows);
    }
    Ok(out)
}

pub fn summary_table(verdicts: &[SegmentVerdict]) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    let body: Vec<Vec<String>> = verdicts
        .iter()
        .map(|v| {
            vec![
                v.segment.to_string(),
                format!("[{}, {})", v.t_start, v.t_end),
                v.load.clone(),
                opt(v.v_eq),
                v.certificate.map_or("no_equilibrium", Verdict::as_str).to_string(),
                v.window
                    .map_or("-".to_string(), |(lo, hi)| format!("[{lo:.2}, {hi:.2}]")),
                format!("[{:.2}, {:.2}]", v.visited.0, v.visited.1),
                v.outcome.as_str().to_string(),
                v.energy_increases.map_or("-".to_string(), |n| n.to_string()),
                v.consistency.as_str().to_string(),
            ]
        })
        .collect();
    render_table(
        &[
            "seg",
            "t",
            "load",
            "V_eq",
            "certificate",
            "window",
            "visited",
            "outcome",
            "H_up",
            "check",
        ],
        &body,
    )
}

pub struct Simulation {
    pub trace: Trace,
    pub verdicts: Vec<SegmentVerdict>,
}

pub fn simulate(doc: &ConfigDocument) -> Result<Simulation> {
    let scenario = doc
        .scenario()
        .ok_or_else(|| anyhow!("config has no `scenario` section"))?;
    let trace = run_scenario(&scenario)?;
    let verdicts = segment_verdicts(doc, &trace)?;
    Ok(Simulation { trace, verdicts })
}
