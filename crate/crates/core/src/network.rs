//! Port-Hamiltonian load nodes, π-lines and ideal sources, assembled into one
//! right-hand side over the stacked state.
//!
//! State layout: every line contributes its flux linkage `L·i` (V·s), then
//! every load node its charge `C·v` (A·s), two entries (d, q) each, in
//! declaration order. Shunt halves of the lines are lumped into the node
//! capacitances; at an ideal source they are dynamically irrelevant and dropped.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dq::DqVector;
use crate::error::{check_param, Error, Result};
use crate::loads::LoadModel;
use crate::newton::{self, NewtonOptions};

pub const DEFAULT_OMEGA0: f64 = 2.0 * PI * 50.0;

fn default_omega0() -> f64 {
    DEFAULT_OMEGA0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceNode {
    pub id: String,
    pub v_fixed: DqVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadNode {
    pub id: String,
    /// Capacitance of the node itself (F), excluding line shunts, which
    /// assembly adds.
    #[serde(default)]
    pub c: f64,
    pub model: LoadModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiLine {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Ω
    pub r: f64,
    /// H
    pub l: f64,
    /// Shunt capacitance at each end (F).
    #[serde(default)]
    pub c_shunt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Microgrid {
    #[serde(default)]
    pub sources: Vec<SourceNode>,
    #[serde(default)]
    pub loads: Vec<LoadNode>,
    #[serde(default)]
    pub lines: Vec<PiLine>,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

impl Default for Microgrid {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            loads: Vec::new(),
            lines: Vec::new(),
            omega0: DEFAULT_OMEGA0,
        }
    }
}

/// `d/dt (C v) = J_L v − i_L(v) + i_exchange` with `J_L = [[0, ω₀C], [−ω₀C, 0]]`.
pub fn load_node_rhs(c: f64, model: &LoadModel, v: DqVector, i_exchange: DqVector, omega0: f64) -> Result<DqVector> {
    let rotation = v.cross_coupled() * (omega0 * c);
    Ok(rotation - model.current(v)? + i_exchange)
}

/// `d/dt (L i) = −R i + ω₀L [[0, 1], [−1, 0]] i + v_from − v_to`.
pub fn line_rhs(line: &PiLine, i: DqVector, v_from: DqVector, v_to: DqVector, omega0: f64) -> DqVector {
    i * (-line.r) + i.cross_coupled() * (omega0 * line.l) + v_from - v_to
}

/// Line current at which [`line_rhs`] vanishes for fixed terminal voltages.
pub fn line_steady_current(line: &PiLine, v_from: DqVector, v_to: DqVector, omega0: f64) -> DqVector {
    let dv = v_from - v_to;
    let x = omega0 * line.l;
    let z2 = line.r * line.r + x * x;
    DqVector::new((line.r * dv.d + x * dv.q) / z2, (-x * dv.d + line.r * dv.q) / z2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Source(usize),
    Load(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    Line,
    Load,
}

/// Where one component's two state entries live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSlot {
    pub component: String,
    pub kind: ComponentKind,
    pub range: Range<usize>,
}

/// A validated microgrid with resolved topology and lumped capacitances.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    grid: Microgrid,
    ends: Vec<(Endpoint, Endpoint)>,
    load_c: Vec<f64>,
    layout: Vec<StateSlot>,
}

pub fn assemble(grid: &Microgrid) -> Result<AssembledSystem> {
    check_param(
        "omega0",
        grid.omega0,
        "reference frequency must be positive",
        grid.omega0 > 0.0,
    )?;

    let mut nodes: HashMap<&str, Endpoint> = HashMap::new();
    for (k, s) in grid.sources.iter().enumerate() {
        if !(s.v_fixed.amplitude() > 0.0) || !s.v_fixed.is_finite() {
            return Err(Error::Assembly(format!("source `{}` needs a positive amplitude", s.id)));
        }
        if nodes.insert(&s.id, Endpoint::Source(k)).is_some() {
            return Err(Error::Assembly(format!("duplicate node id `{}`", s.id)));
        }
    }
    for (k, load) in grid.loads.iter().enumerate() {
        load.model
            .validate()
            .map_err(|e| Error::Assembly(format!("load `{}`: {e}", load.id)))?;
        check_param("c", load.c, "node capacitance must be non-negative", load.c >= 0.0)?;
        if nodes.insert(&load.id, Endpoint::Load(k)).is_some() {
            return Err(Error::Assembly(format!("duplicate node id `{}`", load.id)));
        }
    }

    let mut load_c: Vec<f64> = grid.loads.iter().map(|l| l.c).collect();
    let mut ends = Vec::with_capacity(grid.lines.len());
    let mut line_ids = std::collections::HashSet::new();
    for line in &grid.lines {
        if !line_ids.insert(line.id.as_str()) || nodes.contains_key(line.id.as_str()) {
            return Err(Error::Assembly(format!("duplicate component id `{}`", line.id)));
        }
        check_param("r", line.r, "line resistance must be positive", line.r > 0.0)?;
        check_param("l", line.l, "line inductance must be positive", line.l > 0.0)?;
        check_param(
            "c_shunt",
            line.c_shunt,
            "shunt capacitance must be non-negative",
            line.c_shunt >= 0.0,
        )?;
        let resolve = |id: &str| {
            nodes
                .get(id)
                .copied()
                .ok_or_else(|| Error::Assembly(format!("line `{}` references unknown node `{id}`", line.id)))
        };
        let from = resolve(&line.from)?;
        let to = resolve(&line.to)?;
        if from == to {
            return Err(Error::Assembly(format!("line `{}` is a self-loop", line.id)));
        }
        for end in [from, to] {
            if let Endpoint::Load(k) = end {
                load_c[k] += line.c_shunt;
            }
        }
        ends.push((from, to));
    }
    for (k, c) in load_c.iter().enumerate() {
        if !(*c > 0.0) {
            return Err(Error::Assembly(format!(
                "load `{}` has zero total capacitance",
                grid.loads[k].id
            )));
        }
    }

    let mut layout = Vec::with_capacity(grid.lines.len() + grid.loads.len());
    for (k, line) in grid.lines.iter().enumerate() {
        layout.push(StateSlot {
            component: line.id.clone(),
            kind: ComponentKind::Line,
            range: 2 * k..2 * k + 2,
        });
    }
    let offset = 2 * grid.lines.len();
    for (k, load) in grid.loads.iter().enumerate() {
        layout.push(StateSlot {
            component: load.id.clone(),
            kind: ComponentKind::Load,
            range: offset + 2 * k..offset + 2 * k + 2,
        });
    }

    Ok(AssembledSystem {
        grid: grid.clone(),
        ends,
        load_c,
        layout,
    })
}

fn read(x: &[f64], offset: usize) -> DqVector {
    DqVector::new(x[offset], x[offset + 1])
}

fn write(out: &mut [f64], offset: usize, v: DqVector) {
    out[offset] = v.d;
    out[offset + 1] = v.q;
}

impl AssembledSystem {
    pub fn dim(&self) -> usize {
        2 * (self.grid.lines.len() + self.grid.loads.len())
    }

    pub fn grid(&self) -> &Microgrid {
        &self.grid
    }

    pub fn layout(&self) -> &[StateSlot] {
        &self.layout
    }

    /// Lumped capacitance of every load node (F).
    pub fn load_capacitances(&self) -> &[f64] {
        &self.load_c
    }

    pub fn line_ends(&self) -> &[(Endpoint, Endpoint)] {
        &self.ends
    }

    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.grid.loads.iter().position(|l| l.id == id)
    }

    pub fn load_model(&self, k: usize) -> &LoadModel {
        &self.grid.loads[k].model
    }

    /// Replaces one model parameter of load `k`. The changed model must validate.
    pub fn set_load_param(&mut self, k: usize, path: &str, value: f64) -> Result<()> {
        let mut model = self.grid.loads[k].model;
        model.set_param(path, value)?;
        model.validate()?;
        self.grid.loads[k].model = model;
        Ok(())
    }

    fn load_offset(&self, k: usize) -> usize {
        2 * (self.grid.lines.len() + k)
    }

    pub fn line_current(&self, x: &[f64], k: usize) -> DqVector {
        read(x, 2 * k) * (1.0 / self.grid.lines[k].l)
    }

    pub fn load_voltage(&self, x: &[f64], k: usize) -> DqVector {
        read(x, self.load_offset(k)) * (1.0 / self.load_c[k])
    }

    pub fn load_amplitudes(&self, x: &[f64]) -> Vec<f64> {
        (0..self.grid.loads.len())
            .map(|k| self.load_voltage(x, k).amplitude())
            .collect()
    }

    pub fn node_voltage(&self, x: &[f64], end: Endpoint) -> DqVector {
        match end {
            Endpoint::Source(s) => self.grid.sources[s].v_fixed,
            Endpoint::Load(k) => self.load_voltage(x, k),
        }
    }

    /// Builds a state vector from physical line currents and load voltages.
    pub fn state_from(&self, currents: &[DqVector], voltages: &[DqVector]) -> Result<Vec<f64>> {
        if currents.len() != self.grid.lines.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.lines.len(),
                got: currents.len(),
            });
        }
        if voltages.len() != self.grid.loads.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.loads.len(),
                got: voltages.len(),
            });
        }
        let mut x = vec![0.0; self.dim()];
        for (k, i) in currents.iter().enumerate() {
            write(&mut x, 2 * k, *i * self.grid.lines[k].l);
        }
        for (k, v) in voltages.iter().enumerate() {
            write(&mut x, self.load_offset(k), *v * self.load_c[k]);
        }
        Ok(x)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            })
        }
    }

    /// `Σ_in i − Σ_out i` at every load node.
    pub fn exchange_currents(&self, x: &[f64]) -> Vec<DqVector> {
        let mut exchange = vec![DqVector::ZERO; self.grid.loads.len()];
        for (k, &(from, to)) in self.ends.iter().enumerate() {
            let i = self.line_current(x, k);
            if let Endpoint::Load(a) = from {
                exchange[a] = exchange[a] - i;
            }
            if let Endpoint::Load(b) = to {
                exchange[b] += i;
            }
        }
        exchange
    }

    /// Time derivative of the stacked state.
    pub fn rhs(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        self.check_dim(out)?;
        let w = self.grid.omega0;
        for (k, line) in self.grid.lines.iter().enumerate() {
            let (from, to) = self.ends[k];
            let d = line_rhs(
                line,
                self.line_current(x, k),
                self.node_voltage(x, from),
                self.node_voltage(x, to),
                w,
            );
            write(out, 2 * k, d);
        }
        let exchange = self.exchange_currents(x);
        for (k, load) in self.grid.loads.iter().enumerate() {
            let d = load_node_rhs(self.load_c[k], &load.model, self.load_voltage(x, k), exchange[k], w)?;
            write(out, self.load_offset(k), d);
        }
        Ok(())
    }

    /// Typical state magnitudes: one amp of flux per line, one volt of charge per node.
    pub fn state_scale(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.dim());
        for line in &self.grid.lines {
            s.extend([line.l, line.l]);
        }
        for c in &self.load_c {
            s.extend([*c, *c]);
        }
        s
    }

    /// `Σ_lines ‖x − x*‖²/(2L) + Σ_loads ‖x − x*‖²/(2C)` (J).
    pub fn error_hamiltonian(&self, x: &[f64], reference: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(reference)?;
        let mut h = 0.0;
        for (k, line) in self.grid.lines.iter().enumerate() {
            h += (read(x, 2 * k) - read(reference, 2 * k)).norm_squared() / (2.0 * line.l);
        }
        for k in 0..self.grid.loads.len() {
            let o = self.load_offset(k);
            h += (read(x, o) - read(reference, o)).norm_squared() / (2.0 * self.load_c[k]);
        }
        Ok(h)
    }

    /// Stored energy of the whole state, the error Hamiltonian against zero.
    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        self.error_hamiltonian(x, &vec![0.0; x.len()])
    }

    /// Power balance terms at state `x`: `(source injection, load consumption,
    /// line losses, rate of change of stored energy)`, all in W.
    pub fn power_balance(&self, x: &[f64]) -> Result<PowerBalance> {
        let mut dx = vec![0.0; self.dim()];
        self.rhs(x, &mut dx)?;
        let mut balance = PowerBalance::default();
        for (k, line) in self.grid.lines.iter().enumerate() {
            let i = self.line_current(x, k);
            let (from, to) = self.ends[k];
            if let Endpoint::Source(s) = from {
                balance.source += self.grid.sources[s].v_fixed.dot(i);
            }
            if let Endpoint::Source(s) = to {
                balance.source -= self.grid.sources[s].v_fixed.dot(i);
            }
            balance.losses += line.r * i.norm_squared();
            balance.storage_rate += i.dot(read(&dx, 2 * k));
        }
        for (k, load) in self.grid.loads.iter().enumerate() {
            let v = self.load_voltage(x, k);
            balance.loads += v.dot(load.model.current(v)?);
            balance.storage_rate += v.dot(read(&dx, self.load_offset(k)));
        }
        Ok(balance)
    }

    /// Initial guess for the operating point: every load at the mean source
    /// voltage, every line at its steady current for those terminal voltages.
    pub fn steady_state_seed(&self) -> Result<Vec<f64>> {
        if self.grid.sources.is_empty() && !self.grid.loads.is_empty() {
            return Err(Error::Assembly("no source to define an operating point".into()));
        }
        let n = self.grid.sources.len().max(1) as f64;
        let mean = self
            .grid
            .sources
            .iter()
            .fold(DqVector::ZERO, |acc, s| acc + s.v_fixed * (1.0 / n));
        let voltages = vec![mean; self.grid.loads.len()];
        self.lines_at_steady_state(&voltages)
    }

    /// Loads at `voltages`, lines at their steady currents for those terminals.
    pub fn lines_at_steady_state(&self, voltages: &[DqVector]) -> Result<Vec<f64>> {
        let node = |end: Endpoint| match end {
            Endpoint::Source(s) => self.grid.sources[s].v_fixed,
            Endpoint::Load(k) => voltages[k],
        };
        let currents: Vec<DqVector> = self
            .grid
            .lines
            .iter()
            .zip(&self.ends)
            .map(|(line, &(from, to))| line_steady_current(line, node(from), node(to), self.grid.omega0))
            .collect();
        self.state_from(&currents, voltages)
    }

    /// Equilibrium of the assembled dynamics by damped Newton from `seed`.
    pub fn steady_state_from(&self, seed: Vec<f64>) -> Result<Vec<f64>> {
        self.check_dim(&seed)?;
        let scale = self.state_scale();
        let sol = newton::solve(
            |x, out| self.rhs(x, out),
            seed,
            &scale,
            NewtonOptions {
                tol: STEADY_STATE_TOL,
                max_iter: 100,
            },
        )?;
        Ok(sol.x)
    }

    pub fn steady_state(&self) -> Result<Vec<f64>> {
        self.steady_state_from(self.steady_state_seed()?)
    }
}

/// Residual bound on `‖rhs‖∞` for an accepted equilibrium (SI units).
pub const STEADY_STATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerBalance {
    pub source: f64,
    pub loads: f64,
    pub losses: f64,
    pub storage_rate: f64,
}

impl PowerBalance {
    /// `source − loads − losses − storage_rate`, zero up to rounding.
    pub fn mismatch(&self) -> f64 {
        self.source - self.loads - self.losses - self.storage_rate
    }
}

/// Single source feeding a single load through one π-line.
pub fn chain(source_v: DqVector, line: PiLine, load: LoadModel) -> Microgrid {
    Microgrid {
        sources: vec![SourceNode {
            id: line.from.clone(),
            v_fixed: source_v,
        }],
        loads: vec![LoadNode {
            id: line.to.clone(),
            c: 0.0,
            model: load,
        }],
        lines: vec![line],
        omega0: DEFAULT_OMEGA0,
    }
}

/// Reference line: 1 km, R = 12.73 mΩ, L = 0.9337 mH, C = 12.74 nF.
pub fn reference_line(id: &str, from: &str, to: &str) -> PiLine {
    PiLine {
        id: id.to_string(),
        from: from.to_string(),
        to: to.to_string(),
        r: 0.01273,
        l: 0.9337e-3,
        c_shunt: 12.74e-9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loads::reference::BASE_ZIP;
    use crate::loads::ZipParams;

    fn table1_chain(model: LoadModel) -> Microgrid {
        chain(DqVector::new(400.0, 0.0), reference_line("line", "src", "load"), model)
    }

    #[test]
    fn lossless_node_rotates() {
        let c = 1e-6;
        let d = load_node_rhs(
            c,
            &LoadModel::Zip(ZipParams::default()),
            DqVector::new(400.0, 0.0),
            DqVector::ZERO,
            DEFAULT_OMEGA0,
        )
        .unwrap();
        assert_eq!(d.d, 0.0);
        assert!((d.q + DEFAULT_OMEGA0 * c * 400.0).abs() < 1e-15);
    }

    #[test]
    fn matched_exchange_balances_admittance_load() {
        let model = LoadModel::Zip(ZipParams::admittance(0.15, 0.05));
        let v = DqVector::new(230.0, -40.0);
        let c = 12.74e-9;
        // cancel both the load current and the capacitive rotation term
        let i = model.current(v).unwrap() - v.cross_coupled() * (DEFAULT_OMEGA0 * c);
        let d = load_node_rhs(c, &model, v, i, DEFAULT_OMEGA0).unwrap();
        assert!(d.amplitude() < 1e-12);
    }

    #[test]
    fn base_zip_exchange_cancels_load_current() {
        let model = LoadModel::Zip(BASE_ZIP);
        let c = 12.74e-9;
        let v = DqVector::new(400.0, 0.0);
        let d = load_node_rhs(c, &model, v, DqVector::new(73.25, -76.5), DEFAULT_OMEGA0).unwrap();
        let jv = v.cross_coupled() * (DEFAULT_OMEGA0 * c);
        assert!((d - jv).amplitude() < 1e-12);
    }

    #[test]
    fn line_without_drive_is_at_rest() {
        let line = reference_line("l", "a", "b");
        let v = DqVector::new(400.0, 10.0);
        assert_eq!(line_rhs(&line, DqVector::ZERO, v, v, DEFAULT_OMEGA0), DqVector::ZERO);
    }

    #[test]
    fn steady_line_current_zeroes_rhs() {
        let line = reference_line("l", "a", "b");
        let (vf, vt) = (DqVector::new(400.0, 0.0), DqVector::new(371.0, -22.0));
        let i = line_steady_current(&line, vf, vt, DEFAULT_OMEGA0);
        assert!(line_rhs(&line, i, vf, vt, DEFAULT_OMEGA0).amplitude() < 1e-12);
    }

    #[test]
    fn unit_drop_is_reactance_dominated() {
        let line = reference_line("l", "a", "b");
        let x = DEFAULT_OMEGA0 * line.l;
        assert!((x - 0.29333).abs() < 1e-4);
        let i = line_steady_current(&line, DqVector::new(1.0, 0.0), DqVector::ZERO, DEFAULT_OMEGA0);
        let z2 = line.r * line.r + x * x;
        assert!((i.d - line.r / z2).abs() < 1e-12 && (i.q + x / z2).abs() < 1e-12);
        // the current lags by almost 90°
        assert!(i.q.abs() > 20.0 * i.d.abs());
    }

    #[test]
    fn chain_has_four_states() {
        let sys = assemble(&table1_chain(LoadModel::Zip(BASE_ZIP))).unwrap();
        assert_eq!(sys.dim(), 4);
        assert_eq!(sys.load_capacitances(), &[12.74e-9]);
        assert_eq!(sys.layout()[0].kind, ComponentKind::Line);
        assert_eq!(sys.layout()[1].range, 2..4);
    }

    #[test]
    fn empty_grid_is_a_valid_noop() {
        let sys = assemble(&Microgrid::default()).unwrap();
        assert_eq!(sys.dim(), 0);
        let mut out = [];
        sys.rhs(&[], &mut out).unwrap();
        assert_eq!(sys.error_hamiltonian(&[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn dangling_endpoint_is_rejected() {
        let mut g = table1_chain(LoadModel::Zip(BASE_ZIP));
        g.lines[0].to = "nowhere".into();
        assert!(matches!(assemble(&g), Err(Error::Assembly(_))));
    }

    #[test]
    fn zero_capacitance_is_rejected() {
        let mut g = table1_chain(LoadModel::Zip(BASE_ZIP));
        g.lines[0].c_shunt = 0.0;
        assert!(matches!(assemble(&g), Err(Error::Assembly(_))));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut g = table1_chain(LoadModel::Zip(BASE_ZIP));
        g.lines[0].id = "load".into();
        assert!(assemble(&g).is_err());
    }

    #[test]
    fn shunts_are_lumped_once_per_incident_line() {
        let mut g = table1_chain(LoadModel::Zip(BASE_ZIP));
        g.loads[0].c = 1e-9;
        g.lines.push(reference_line("line2", "src", "load"));
        let sys = assemble(&g).unwrap();
        let expected = 1e-9 + 2.0 * 12.74e-9;
        assert!((sys.load_capacitances()[0] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn error_energy_of_unit_deviation() {
        let sys = assemble(&table1_chain(LoadModel::Zip(BASE_ZIP))).unwrap();
        let c = sys.load_capacitances()[0];
        let reference = vec![0.0, 0.0, 400.0 * c, 0.0];
        let mut x = reference.clone();
        assert_eq!(sys.error_hamiltonian(&x, &reference).unwrap(), 0.0);
        x[2] += c;
        assert!((sys.error_hamiltonian(&x, &reference).unwrap() - c / 2.0).abs() < 1e-9 * c);
        assert!(sys.error_hamiltonian(&x[..3], &reference).is_err());
    }

    #[test]
    fn chain_equilibrium_is_a_fixed_point() {
        let sys = assemble(&table1_chain(LoadModel::Zip(BASE_ZIP))).unwrap();
        let x = sys.steady_state().unwrap();
        let mut dx = vec![0.0; 4];
        sys.rhs(&x, &mut dx).unwrap();
        assert!(dx.iter().all(|v| v.abs() <= 1e-9), "{dx:?}");
        let v = sys.load_voltage(&x, 0).amplitude();
        assert!(v > 350.0 && v < 400.0, "{v}");
    }

    #[test]
    fn set_load_param_validates() {
        let mut sys = assemble(&table1_chain(LoadModel::Zip(BASE_ZIP))).unwrap();
        sys.set_load_param(0, "y_p", 0.1).unwrap();
        assert_eq!(sys.load_model(0).param("y_p").unwrap(), 0.1);
        assert!(sys.set_load_param(0, "y_p", -1.0).is_err());
        assert_eq!(sys.load_model(0).param("y_p").unwrap(), 0.1);
    }
}
