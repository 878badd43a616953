//! Fixed-step integration of an assembled network under a parameter-change
//! schedule, with trace recording, CSV export and settling checks.

use std::cell::{Cell, RefCell};
use std::io::{self, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dq::DqVector;
use crate::error::{Error, Result};
use crate::network::{assemble, AssembledSystem, ComponentKind, Microgrid};
use crate::newton::{self, NewtonOptions};

pub const DEFAULT_DT: f64 = 1e-5;
pub const DEFAULT_RECORD_EVERY: usize = 100;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-7;
pub const DEFAULT_NEWTON_MAX: usize = 25;
pub const DEFAULT_COLLAPSE_FRACTION: f64 = 0.1;
/// Any physical state component (A or V) beyond this ends a segment as unstable.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// A continuous-time system `ẋ = f(x)`.
pub trait Dynamics {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
    /// Typical magnitude of each state entry.
    fn scale(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }
    /// Called with every accepted substep state of a refined step.
    fn accept(&self, _x: &[f64]) {}
}

impl Dynamics for AssembledSystem {
    fn dim(&self) -> usize {
        AssembledSystem::dim(self)
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.rhs(x, out)
    }

    fn scale(&self) -> Vec<f64> {
        self.state_scale()
    }
}

/// Wraps a closure as [`Dynamics`].
pub struct FnDynamics<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> Dynamics for FnDynamics<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out)
    }
}

fn check_step(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Scenario(format!("step size must be positive, got {dt}")))
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(k) => Err(Error::Diverged(format!("state entry {k} is {}", x[k]))),
    }
}

/// One classical Runge-Kutta step.
pub fn step_rk4<D: Dynamics + ?Sized>(sys: &D, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_step(dt)?;
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    sys.eval(x, &mut k1)?;
    for j in 0..n {
        tmp[j] = x[j] + 0.5 * dt * k1[j];
    }
    sys.eval(&tmp, &mut k2)?;
    for j in 0..n {
        tmp[j] = x[j] + 0.5 * dt * k2[j];
    }
    sys.eval(&tmp, &mut k3)?;
    for j in 0..n {
        tmp[j] = x[j] + dt * k3[j];
    }
    sys.eval(&tmp, &mut k4)?;
    for j in 0..n {
        tmp[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    check_finite(&tmp)?;
    Ok(tmp)
}

/// One implicit trapezoidal step. The residual
/// `(x₁ − x₀ − dt/2·(f(x₀) + f(x₁))) / scale` is driven below `newton_tol`,
/// so the tolerance is in the physical units of the state (A and V for a
/// network).
pub fn step_trapezoidal<D: Dynamics + ?Sized>(
    sys: &D,
    x: &[f64],
    dt: f64,
    newton_tol: f64,
    newton_max: usize,
) -> Result<Vec<f64>> {
    check_step(dt)?;
    let n = x.len();
    let scale = sys.scale();
    let mut f0 = vec![0.0; n];
    sys.eval(x, &mut f0)?;
    let mut f1 = vec![0.0; n];
    let sol = newton::solve(
        |x1, out| {
            sys.eval(x1, &mut f1)?;
            for j in 0..n {
                out[j] = (x1[j] - x[j] - 0.5 * dt * (f0[j] + f1[j])) / scale[j];
            }
            Ok(())
        },
        x.to_vec(),
        &scale,
        NewtonOptions {
            tol: newton_tol,
            max_iter: newton_max,
        },
    )?;
    check_finite(&sol.x)?;
    Ok(sol.x)
}

/// Substep control for the trapezoidal rule inside one fixed output step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Refinement {
    /// Largest accepted difference between one step and two half steps, in
    /// the physical units of the state (A, V).
    pub tol: f64,
    /// Halvings allowed below the output step.
    pub max_depth: u32,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_depth: 12,
        }
    }
}

fn scaled_gap(a: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(scale)
        .map(|((a, b), s)| ((a - b) / s).abs())
        .fold(0.0, |m, v| if v.is_nan() { f64::NAN } else { m.max(v) })
}

/// Trapezoidal step of size `dt` with step-doubling refinement: the step is
/// compared against two half steps and halved recursively while they differ
/// by more than `refine.tol` or the implicit solve fails. At the depth limit
/// the plain step is taken, or an explicit RK4 step if the implicit solve
/// still fails. The fast node dynamics after a
/// parameter jump are tracked this way without shrinking the output step.
pub fn step_trapezoidal_refined<D: Dynamics + ?Sized>(
    sys: &D,
    x: &[f64],
    dt: f64,
    newton_tol: f64,
    newton_max: usize,
    refine: Refinement,
) -> Result<Vec<f64>> {
    let scale = sys.scale();
    let full = step_trapezoidal(sys, x, dt, newton_tol, newton_max);
    refine_from(
        sys,
        x,
        dt,
        newton_tol,
        newton_max,
        refine.tol,
        refine.max_depth,
        &scale,
        full,
    )
}

#[allow(clippy::too_many_arguments)]
fn refine_from<D: Dynamics + ?Sized>(
    sys: &D,
    x: &[f64],
    dt: f64,
    newton_tol: f64,
    newton_max: usize,
    tol: f64,
    depth: u32,
    scale: &[f64],
    full: Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    if depth == 0 {
        let x1 = match full {
            Err(Error::NewtonFailed { .. }) => step_rk4(sys, x, dt)?,
            other => other?,
        };
        sys.accept(&x1);
        return Ok(x1);
    }
    if let Err(e) = &full {
        if !matches!(e, Error::NewtonFailed { .. }) {
            return full;
        }
    }
    let h = 0.5 * dt;
    let first = step_trapezoidal(sys, x, h, newton_tol, newton_max);
    let first_ok = first.as_ref().ok().cloned();
    if let (Ok(full), Some(mid)) = (&full, &first_ok) {
        if let Ok(second) = step_trapezoidal(sys, mid, h, newton_tol, newton_max) {
            if scaled_gap(full, &second, scale) <= tol {
                sys.accept(mid);
                sys.accept(&second);
                return Ok(second);
            }
        }
    }
    let mid = refine_from(sys, x, h, newton_tol, newton_max, tol, depth - 1, scale, first)?;
    let second = step_trapezoidal(sys, &mid, h, newton_tol, newton_max);
    refine_from(sys, &mid, h, newton_tol, newton_max, tol, depth - 1, scale, second)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    ExplicitRk4,
    #[default]
    ImplicitTrapezoidal,
}

impl Integrator {
    pub fn as_str(self) -> &'static str {
        match self {
            Integrator::ExplicitRk4 => "explicit_rk4",
            Integrator::ImplicitTrapezoidal => "implicit_trapezoidal",
        }
    }
}

/// How the state at `t = 0` is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Loads at the mean source voltage, lines at their steady currents for
    /// those terminal voltages.
    Nominal,
    /// Equilibrium of the initial grid.
    #[default]
    SteadyState,
}

/// What follows a segment that left the bounded region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfterDivergence {
    /// The trace ends with the failed segment.
    #[default]
    Stop,
    /// The next segment resumes from the state the failed segment started
    /// from, as if the failed parameters had never been applied.
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub t: f64,
    /// Load id.
    pub target: String,
    /// Dotted parameter path within the load model.
    pub param: String,
    pub value: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_record_every() -> usize {
    DEFAULT_RECORD_EVERY
}
fn default_newton_tol() -> f64 {
    DEFAULT_NEWTON_TOL
}
fn default_newton_max() -> usize {
    DEFAULT_NEWTON_MAX
}
fn default_collapse_fraction() -> f64 {
    DEFAULT_COLLAPSE_FRACTION
}

/// Integration settings and event schedule, without the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSettings {
    pub t_end: f64,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub after_divergence: AfterDivergence,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max")]
    pub newton_max: usize,
    #[serde(default)]
    pub refinement: Refinement,
    /// A load amplitude below this fraction of the mean source amplitude ends
    /// the segment as collapsed.
    #[serde(default = "default_collapse_fraction")]
    pub collapse_fraction: f64,
}

impl ScenarioSettings {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            events: Vec::new(),
            integrator: Integrator::default(),
            dt: DEFAULT_DT,
            record_every: DEFAULT_RECORD_EVERY,
            initial: InitialCondition::default(),
            after_divergence: AfterDivergence::default(),
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max: DEFAULT_NEWTON_MAX,
            refinement: Refinement::default(),
            collapse_fraction: DEFAULT_COLLAPSE_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: Microgrid,
    pub settings: ScenarioSettings,
}

impl Scenario {
    pub fn new(grid: Microgrid, settings: ScenarioSettings) -> Self {
        Self { grid, settings }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        if !(s.t_end >= 0.0 && s.t_end.is_finite()) {
            return Err(Error::Scenario(format!("t_end must be non-negative, got {}", s.t_end)));
        }
        check_step(s.dt)?;
        if s.record_every == 0 {
            return Err(Error::Scenario("record_every must be at least 1".into()));
        }
        if !(s.collapse_fraction >= 0.0 && s.collapse_fraction < 1.0) {
            return Err(Error::Scenario("collapse_fraction must lie in [0, 1)".into()));
        }
        if !(s.refinement.tol > 0.0) {
            return Err(Error::Scenario("refinement tolerance must be positive".into()));
        }
        if !(s.newton_tol > 0.0) || s.newton_max == 0 {
            return Err(Error::Scenario(
                "Newton tolerance and iteration cap must be positive".into(),
            ));
        }
        let mut last = 0.0;
        for e in &s.events {
            if !(e.t >= last && e.t <= s.t_end) {
                return Err(Error::Scenario(format!(
                    "event at t = {} is out of order or outside [0, {}]",
                    e.t, s.t_end
                )));
            }
            last = e.t;
            let load = self
                .grid
                .loads
                .iter()
                .find(|l| l.id == e.target)
                .ok_or_else(|| Error::Scenario(format!("event targets unknown load `{}`", e.target)))?;
            load.model.param(&e.param)?;
            if !e.value.is_finite() {
                return Err(Error::Scenario(format!("event value for `{}` is not finite", e.param)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentOutcome {
    Completed,
    /// The state left the bounded region or a load hit the voltage singularity.
    Diverged {
        t: f64,
        reason: String,
    },
    /// The implicit solve failed without a divergence indication.
    StepFailed {
        t: f64,
        reason: String,
    },
}

impl SegmentOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, SegmentOutcome::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub t_start: f64,
    /// Scheduled end; the actual end is the last recorded row when the
    /// segment failed.
    pub t_end: f64,
    /// Rows recorded inside the segment. The row at the next event instant
    /// belongs to the next segment but continues this one's state.
    pub rows: Range<usize>,
    /// Equilibrium under this segment's parameters, if one was found.
    pub reference: Option<Vec<f64>>,
    /// Per load: smallest and largest amplitude over every accepted step and
    /// substep, including the collapse floor if the segment ended there.
    pub visited: Vec<(f64, f64)>,
    pub outcome: SegmentOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// `<component>.<axis>` for every state entry, in layout order.
    pub state_columns: Vec<String>,
    pub load_ids: Vec<String>,
    /// `1/(2L)` or `1/(2C)` per state entry.
    energy_weights: Vec<f64>,
    /// `1/L` or `1/C` per state entry, turning state into physical values.
    physical: Vec<f64>,
    /// Offsets of each load's charge pair in the state.
    load_offsets: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub amplitudes: Vec<Vec<f64>>,
    pub h_err: Vec<f64>,
    pub segments: Vec<SegmentRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.load_ids.iter().position(|l| l == id)
    }

    /// Ended early because of a diverged or failed segment.
    pub fn is_truncated(&self) -> bool {
        self.segments.last().is_some_and(|s| !s.outcome.is_completed())
    }

    pub fn load_voltage(&self, row: usize, load: usize) -> DqVector {
        let o = self.load_offsets[load];
        let x = &self.states[row];
        DqVector::new(x[o] * self.physical[o], x[o + 1] * self.physical[o + 1])
    }

    pub fn error_energy(&self, x: &[f64], reference: &[f64]) -> f64 {
        x.iter()
            .zip(reference)
            .zip(&self.energy_weights)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum()
    }

    /// Rows spanned by segment `k`, including the boundary row that closes it.
    pub fn segment_span(&self, k: usize) -> Range<usize> {
        let rows = &self.segments[k].rows;
        let closing = if rows.end < self.len() && self.segments[k].outcome.is_completed() {
            1
        } else {
            0
        };
        rows.start..rows.end + closing
    }

    /// Error energy against segment `k`'s own equilibrium over its span.
    pub fn segment_energy(&self, k: usize) -> Option<Vec<f64>> {
        let reference = self.segments[k].reference.as_ref()?;
        Some(
            self.segment_span(k)
                .map(|r| self.error_energy(&self.states[r], reference))
                .collect(),
        )
    }

    /// Writes the trace as CSV: `t`, every state entry, `Vamp.<load>`, `H_err`.
    /// Floats use the shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut buf = ryu::Buffer::new();
        let mut header = String::from("t");
        for c in &self.state_columns {
            header.push(',');
            header.push_str(c);
        }
        for id in &self.load_ids {
            header.push_str(",Vamp.");
            header.push_str(id);
        }
        header.push_str(",H_err\n");
        out.write_all(header.as_bytes())?;

        let mut line = String::new();
        for r in 0..self.len() {
            line.clear();
            line.push_str(buf.format(self.times[r]));
            for v in self.states[r].iter().chain(&self.amplitudes[r]).chain([&self.h_err[r]]) {
                line.push(',');
                line.push_str(buf.format(*v));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("CSV is ASCII")
    }
}

fn step_count(span: f64, dt: f64) -> usize {
    if span <= 0.0 {
        return 0;
    }
    let r = span / dt;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * r.max(1.0) {
        nearest.max(1.0) as usize
    } else {
        r.ceil() as usize
    }
}

fn out_of_bounds(sys: &AssembledSystem, scale: &[f64], x: &[f64]) -> Option<String> {
    x.iter().zip(scale).enumerate().find_map(|(k, (v, s))| {
        let physical = v / s;
        (!(physical.abs() <= DIVERGENCE_LIMIT)).then(|| {
            let slot = sys.layout().iter().find(|slot| slot.range.contains(&k));
            let name = slot.map_or("?", |s| s.component.as_str());
            format!("`{name}` reached {physical:e}")
        })
    })
}

/// The assembled network with a floor under every load amplitude. Below the
/// floor the node dynamics run on picosecond scales, so the trajectory is
/// treated as collapsed instead of being followed.
struct Guarded<'a> {
    sys: &'a AssembledSystem,
    v_collapse: f64,
    /// Per load: (min, max) amplitude over accepted substeps.
    visited: RefCell<Vec<(f64, f64)>>,
    /// Amplitude of the last state rejected by the floor.
    floor_hit: Cell<Option<(usize, f64)>>,
}

impl<'a> Guarded<'a> {
    fn new(sys: &'a AssembledSystem, v_collapse: f64) -> Self {
        Self {
            sys,
            v_collapse,
            visited: RefCell::new(vec![(f64::INFINITY, f64::NEG_INFINITY); sys.grid().loads.len()]),
            floor_hit: Cell::new(None),
        }
    }

    /// Widens load `k`'s range to include the amplitude it was heading for
    /// when it hit the floor.
    fn observe_floor(&self, k: usize, v: f64) {
        let range = &mut self.visited.borrow_mut()[k];
        range.0 = range.0.min(v);
    }

    fn observe(&self, x: &[f64]) {
        let mut visited = self.visited.borrow_mut();
        for (k, range) in visited.iter_mut().enumerate() {
            let v = self.sys.load_voltage(x, k).amplitude();
            *range = (range.0.min(v), range.1.max(v));
        }
    }
}

impl Dynamics for Guarded<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for k in 0..self.sys.grid().loads.len() {
            let v = self.sys.load_voltage(x, k).amplitude();
            if !(v >= self.v_collapse) {
                self.floor_hit.set(Some((k, v)));
                return Err(Error::Diverged(format!(
                    "voltage collapse at `{}` ({v:.3} V)",
                    self.sys.grid().loads[k].id
                )));
            }
        }
        self.sys.rhs(x, out)
    }

    fn scale(&self) -> Vec<f64> {
        self.sys.state_scale()
    }

    fn accept(&self, x: &[f64]) {
        self.observe(x);
    }
}

struct Recorder {
    sys_weights: Vec<f64>,
    trace: Trace,
}

impl Recorder {
    fn push(&mut self, sys: &AssembledSystem, t: f64, x: &[f64], reference: Option<&[f64]>) {
        let h = reference.map_or(f64::NAN, |r| {
            x.iter()
                .zip(r)
                .zip(&self.sys_weights)
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum()
        });
        self.trace.times.push(t);
        self.trace.states.push(x.to_vec());
        self.trace.amplitudes.push(sys.load_amplitudes(x));
        self.trace.h_err.push(h);
    }
}

fn column_names(sys: &AssembledSystem) -> Vec<String> {
    let mut cols = Vec::with_capacity(sys.dim());
    for slot in sys.layout() {
        cols.push(format!("{}.d", slot.component));
        cols.push(format!("{}.q", slot.component));
    }
    cols
}

fn classify(err: Error, t: f64) -> SegmentOutcome {
    match err {
        Error::Diverged(reason) => SegmentOutcome::Diverged { t, reason },
        Error::Singular { .. } | Error::NonPositiveVoltage(_) => SegmentOutcome::Diverged {
            t,
            reason: err.to_string(),
        },
        other => SegmentOutcome::StepFailed {
            t,
            reason: other.to_string(),
        },
    }
}

/// Integrates the scenario segment by segment. Events sharing a timestamp
/// are applied together; the state is carried across every event unchanged.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace> {
    scenario.validate()?;
    let s = &scenario.settings;
    let mut sys = assemble(&scenario.grid)?;
    let scale = sys.state_scale();
    let sources = &scenario.grid.sources;
    let v_collapse = if sources.is_empty() {
        0.0
    } else {
        s.collapse_fraction * sources.iter().map(|src| src.v_fixed.amplitude()).sum::<f64>() / sources.len() as f64
    };

    let weights: Vec<f64> = scale.iter().map(|m| 0.5 / m).collect();
    let load_offsets = sys
        .layout()
        .iter()
        .filter(|slot| slot.kind == ComponentKind::Load)
        .map(|slot| slot.range.start)
        .collect();
    let mut rec = Recorder {
        sys_weights: weights.clone(),
        trace: Trace {
            state_columns: column_names(&sys),
            load_ids: scenario.grid.loads.iter().map(|l| l.id.clone()).collect(),
            energy_weights: weights,
            physical: scale.iter().map(|m| 1.0 / m).collect(),
            load_offsets,
            times: Vec::new(),
            states: Vec::new(),
            amplitudes: Vec::new(),
            h_err: Vec::new(),
            segments: Vec::new(),
        },
    };

    // segment boundaries: 0, distinct event times, t_end
    let mut bounds = vec![0.0];
    for e in &s.events {
        if e.t > *bounds.last().unwrap() {
            bounds.push(e.t);
        }
    }
    if s.t_end > *bounds.last().unwrap() || bounds.len() == 1 {
        bounds.push(s.t_end);
    }

    let mut reference = sys.steady_state().ok();
    let mut x = match s.initial {
        InitialCondition::SteadyState => reference
            .clone()
            .ok_or_else(|| Error::Scenario("initial grid has no equilibrium".into()))?,
        InitialCondition::Nominal => sys.steady_state_seed()?,
    };

    let mut segment_start = x.clone();
    let mut next_event = 0;
    for seg in 0..bounds.len() - 1 {
        let (t_a, t_b) = (bounds[seg], bounds[seg + 1]);
        if seg > 0 || t_a == 0.0 {
            let mut changed = false;
            while next_event < s.events.len() && s.events[next_event].t == t_a {
                let e = &s.events[next_event];
                let k = sys.load_index(&e.target).expect("validated");
                sys.set_load_param(k, &e.param, e.value)?;
                next_event += 1;
                changed = true;
            }
            if changed {
                let seed = reference.clone().unwrap_or_else(|| x.clone());
                reference = sys.steady_state_from(seed).or_else(|_| sys.steady_state()).ok();
            }
        }

        let resuming = seg > 0
            && s.after_divergence == AfterDivergence::Restart
            && !rec.trace.segments[seg - 1].outcome.is_completed();
        if resuming {
            x = segment_start.clone();
        }
        segment_start = x.clone();

        let first_row = rec.trace.len();
        rec.push(&sys, t_a, &x, reference.as_deref());
        let n = step_count(t_b - t_a, s.dt);
        let h = if n > 0 { (t_b - t_a) / n as f64 } else { 0.0 };
        let mut outcome = SegmentOutcome::Completed;
        let guarded = Guarded::new(&sys, v_collapse);
        guarded.observe(&x);
        for k in 1..=n {
            let t = if k == n { t_b } else { t_a + k as f64 * h };
            let stepped = match s.integrator {
                Integrator::ExplicitRk4 => step_rk4(&guarded, &x, h),
                Integrator::ImplicitTrapezoidal => {
                    step_trapezoidal_refined(&guarded, &x, h, s.newton_tol, s.newton_max, s.refinement)
                }
            };
            match stepped {
                Ok(next) => {
                    if let Some(reason) = out_of_bounds(&sys, &scale, &next) {
                        rec.push(&sys, t, &next, reference.as_deref());
                        outcome = SegmentOutcome::Diverged { t, reason };
                        break;
                    }
                    guarded.observe(&next);
                    x = next;
                }
                Err(err) => {
                    if let (Error::Diverged(_), Some((load, v))) = (&err, guarded.floor_hit.get()) {
                        guarded.observe_floor(load, v);
                    }
                    outcome = classify(err, t);
                    break;
                }
            }
            if k % s.record_every == 0 && k < n {
                rec.push(&sys, t, &x, reference.as_deref());
            }
        }
        let failed = !outcome.is_completed();
        let visited = guarded.visited.into_inner();
        rec.trace.segments.push(SegmentRecord {
            t_start: t_a,
            t_end: t_b,
            rows: first_row..rec.trace.len(),
            reference: reference.clone(),
            visited,
            outcome,
        });
        if failed && s.after_divergence == AfterDivergence::Stop {
            return Ok(rec.trace);
        }
    }

    // closing row at t_end
    let last_ok = rec.trace.segments.last().is_none_or(|s| s.outcome.is_completed());
    if last_ok && s.t_end > 0.0 {
        rec.push(&sys, s.t_end, &x, reference.as_deref());
        let len = rec.trace.len();
        if let Some(last) = rec.trace.segments.last_mut() {
            last.rows.end = len;
        }
    }
    Ok(rec.trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settling {
    pub settled: bool,
    /// Peak-to-peak amplitude over the trailing window (V); infinite when
    /// the segment failed.
    pub deviation: f64,
}

/// Per segment and per load: settled when the amplitude stays within `tol`
/// (peak to peak) over the trailing `window` seconds of the segment.
pub fn detect_steady_state(trace: &Trace, window: f64, tol: f64) -> Vec<Vec<Settling>> {
    let loads = trace.load_ids.len();
    (0..trace.segments.len())
        .map(|k| {
            let seg = &trace.segments[k];
            let span = trace.segment_span(k);
            if !seg.outcome.is_completed() || span.is_empty() {
                return vec![
                    Settling {
                        settled: false,
                        deviation: f64::INFINITY,
                    };
                    loads
                ];
            }
            let t_close = trace.times[span.end - 1];
            let rows: Vec<usize> = span.filter(|&r| trace.times[r] >= t_close - window).collect();
            (0..loads)
                .map(|l| {
                    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                        let a = trace.amplitudes[r][l];
                        (lo.min(a), hi.max(a))
                    });
                    let deviation = hi - lo;
                    Settling {
                        settled: deviation <= tol,
                        deviation,
                    }
                })
                .collect()
        })
        .collect()
}
