//! Strict-passivity certificates for static loads.
//!
//! A load is strictly passive around an operating point when its current map
//! is strictly monotone, which holds wherever the symmetric part of the
//! current Jacobian is positive definite. For ZIP and exponential loads the
//! two eigenvalues of that 2×2 symmetric part have closed forms depending on
//! the amplitude only. The smaller one decides the verdict.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dq::DqVector;
use crate::error::{Error, Result};
use crate::loads::{Branch, ExpParams, LoadModel, ZipParams, V_EPS};

/// Eigenvalues within this band around zero are reported as marginal (S).
pub const LAMBDA_TOL: f64 = 1e-9;

pub const DEFAULT_WINDOW_GRID: usize = 2000;
pub const DEFAULT_WINDOW_TOL: f64 = 0.5;

/// `[[a, b], [b, c]]`, the symmetric part of a current Jacobian (S).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetricPart2x2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SymmetricPart2x2 {
    /// `(A + Aᵀ)/2` of a row-major 2×2 matrix.
    pub fn symmetrize(m: [[f64; 2]; 2]) -> Self {
        Self {
            a: m[0][0],
            b: 0.5 * (m[0][1] + m[1][0]),
            c: m[1][1],
        }
    }

    /// `(larger, smaller)` eigenvalue.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a + self.c);
        let radius = (0.5 * (self.a - self.c)).hypot(self.b);
        (mean + radius, mean - radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    StrictlyPassive,
    Marginal,
    Violated,
}

impl Verdict {
    pub fn is_passive(self) -> bool {
        self == Verdict::StrictlyPassive
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::StrictlyPassive => "StrictlyPassive",
            Verdict::Marginal => "Marginal",
            Verdict::Violated => "Violated",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Left-minus-right sides of the two sufficient inequalities. Both must be
/// positive for a strict-passivity verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionResiduals {
    /// `Y_P + I_P/(2V)` (S) or `n_p P₀` (W).
    pub first: f64,
    /// Squared second condition, W² for both families.
    pub second: f64,
}

impl ConditionResiduals {
    pub fn hold(&self) -> bool {
        self.first > 0.0 && self.second > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassivityCertificate {
    pub v_amp: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub residuals: ConditionResiduals,
    pub verdict: Verdict,
}

impl PassivityCertificate {
    /// The sign comes from the inequality conditions; the eigenvalue only
    /// decides whether the point sits in the marginal band.
    fn new(v_amp: f64, (lambda_max, lambda_min): (f64, f64), residuals: ConditionResiduals) -> Self {
        let verdict = if lambda_min.abs() <= LAMBDA_TOL {
            Verdict::Marginal
        } else if residuals.hold() {
            Verdict::StrictlyPassive
        } else {
            Verdict::Violated
        };
        Self {
            v_amp,
            lambda_min,
            lambda_max,
            residuals,
            verdict,
        }
    }
}

fn guard(v: DqVector) -> Result<f64> {
    let amp = v.amplitude();
    if amp > V_EPS && amp.is_finite() {
        Ok(amp)
    } else {
        Err(Error::Singular {
            amplitude: amp,
            guard: V_EPS,
        })
    }
}

fn guard_amp(v_amp: f64) -> Result<()> {
    if v_amp > V_EPS && v_amp.is_finite() {
        Ok(())
    } else {
        Err(Error::Singular {
            amplitude: v_amp,
            guard: V_EPS,
        })
    }
}

/// Closed-form symmetric Jacobian part of the load current map at `v`.
pub fn symmetric_jacobian(model: &LoadModel, v: DqVector) -> Result<SymmetricPart2x2> {
    let amp = guard(v)?;
    Ok(match model.branch(amp) {
        Branch::Zip(p) => zip_symmetric_part(p, v, amp),
        Branch::Exp(p) => exp_symmetric_part(p, v, amp),
    })
}

fn zip_symmetric_part(p: &ZipParams, v: DqVector, amp: f64) -> SymmetricPart2x2 {
    let DqVector { d, q } = v;
    let v3 = amp * amp * amp;
    let v4 = v3 * amp;
    let diff = d * d - q * q;
    let cross = d * q;
    SymmetricPart2x2 {
        a: p.y_p + (p.i_p * q * q - p.i_q * cross) / v3 - (p.p_p * diff + 2.0 * p.p_q * cross) / v4,
        // the I_Q term carries (d² − q²)/2, as required for agreement with the eigenvalues
        b: (0.5 * p.i_q * diff - p.i_p * cross) / v3 + (p.p_q * diff - 2.0 * p.p_p * cross) / v4,
        c: p.y_p + (p.i_p * d * d + p.i_q * cross) / v3 + (p.p_p * diff + 2.0 * p.p_q * cross) / v4,
    }
}

fn exp_symmetric_part(p: &ExpParams, v: DqVector, amp: f64) -> SymmetricPart2x2 {
    let DqVector { d, q } = v;
    // P₀/(V₀^n_p V^(4-n_p)) and Q₀/(V₀^n_q V^(4-n_q))
    let kp = p.p0 * (amp / p.v0).powf(p.n_p) / amp.powi(4);
    let kq = p.q0 * (amp / p.v0).powf(p.n_q) / amp.powi(4);
    let cross = d * q;
    SymmetricPart2x2 {
        a: kp * ((p.n_p - 1.0) * d * d + q * q) + (p.n_q - 2.0) * kq * cross,
        // ∂i_q/∂v_d of the reactive part enters with a negative sign
        b: (p.n_p - 2.0) * kp * cross - 0.5 * (p.n_q - 2.0) * kq * (d * d - q * q),
        c: kp * (d * d + (p.n_p - 1.0) * q * q) - (p.n_q - 2.0) * kq * cross,
    }
}

/// Central-difference Jacobian `∂i/∂v` (row-major, rows i_d, i_q).
pub fn numeric_jacobian(model: &LoadModel, v: DqVector, h: f64) -> Result<[[f64; 2]; 2]> {
    let amp = v.amplitude();
    if !(h > 0.0) || amp <= V_EPS + 2.0 * h {
        return Err(Error::StepTooLarge {
            step: h,
            amplitude: amp,
        });
    }
    let column = |e: DqVector| -> Result<DqVector> {
        let plus = model.current(v + e * h)?;
        let minus = model.current(v - e * h)?;
        Ok((plus - minus) * (0.5 / h))
    };
    let dd = column(DqVector::new(1.0, 0.0))?;
    let dq = column(DqVector::new(0.0, 1.0))?;
    Ok([[dd.d, dq.d], [dd.q, dq.q]])
}

/// Ridders' extrapolation of central differences: a Neville tableau over the
/// steps `h, h/1.4, h/1.4², …`, returning the entry with the smallest error
/// estimate together with that estimate (S).
pub fn numeric_jacobian_ridders(model: &LoadModel, v: DqVector, h: f64) -> Result<([[f64; 2]; 2], f64)> {
    const SHRINK: f64 = 1.4;
    const SHRINK2: f64 = SHRINK * SHRINK;
    const LEVELS: usize = 12;
    const SAFE: f64 = 2.0;

    let amp = v.amplitude();
    if !(h > 0.0) || amp <= V_EPS + 2.0 * h {
        return Err(Error::StepTooLarge {
            step: h,
            amplitude: amp,
        });
    }
    let mut out = [[0.0; 2]; 2];
    let mut worst_err: f64 = 0.0;
    for (col, e) in [DqVector::new(1.0, 0.0), DqVector::new(0.0, 1.0)]
        .into_iter()
        .enumerate()
    {
        let diff = |h: f64| -> Result<[f64; 2]> {
            let d = (model.current(v + e * h)? - model.current(v - e * h)?) * (0.5 / h);
            Ok([d.d, d.q])
        };
        // tableau[i][j]: j-th extrapolation at level i, both current components
        let mut tableau = [[[0.0f64; 2]; LEVELS]; LEVELS];
        let mut step = h;
        tableau[0][0] = diff(step)?;
        let mut best = tableau[0][0];
        let mut best_err = f64::INFINITY;
        for i in 1..LEVELS {
            step /= SHRINK;
            tableau[0][i] = diff(step)?;
            let mut fac = SHRINK2;
            for j in 1..=i {
                let mut err: f64 = 0.0;
                for k in 0..2 {
                    tableau[j][i][k] = (tableau[j - 1][i][k] * fac - tableau[j - 1][i - 1][k]) / (fac - 1.0);
                    err = err.max(
                        (tableau[j][i][k] - tableau[j - 1][i][k])
                            .abs()
                            .max((tableau[j][i][k] - tableau[j - 1][i - 1][k]).abs()),
                    );
                }
                fac *= SHRINK2;
                if err <= best_err {
                    best_err = err;
                    best = tableau[j][i];
                }
            }
            let drift = (0..2)
                .map(|k| (tableau[i][i][k] - tableau[i - 1][i - 1][k]).abs())
                .fold(0.0, f64::max);
            if drift >= SAFE * best_err {
                break;
            }
        }
        out[0][col] = best[0];
        out[1][col] = best[1];
        worst_err = worst_err.max(best_err);
    }
    Ok((out, worst_err))
}

/// `(λ₁, λ₂)` with `λ₁ ≥ λ₂` for a ZIP load at amplitude `v_amp`.
pub fn eigenvalues_zip(p: &ZipParams, v_amp: f64) -> Result<(f64, f64)> {
    guard_amp(v_amp)?;
    let v = v_amp;
    let center = p.y_p + p.i_p / (2.0 * v);
    let radicand = 0.25 * (p.i_p * p.i_p + p.i_q * p.i_q) * v * v
        + (p.i_p * p.p_p + p.i_q * p.p_q) * v
        + (p.p_p * p.p_p + p.p_q * p.p_q);
    let radius = radicand.sqrt() / (v * v);
    Ok((center + radius, center - radius))
}

/// `(λ₁, λ₂)` with `λ₁ ≥ λ₂` for an exponential load at amplitude `v_amp`.
pub fn eigenvalues_exp(p: &ExpParams, v_amp: f64) -> Result<(f64, f64)> {
    guard_amp(v_amp)?;
    let x = v_amp / p.v0;
    let active = p.p0 * x.powf(p.n_p);
    let reactive = p.q0 * x.powf(p.n_q);
    let scale = 0.5 / (v_amp * v_amp);
    let center = p.n_p * active;
    let radius = ((p.n_p - 2.0) * active).hypot((p.n_q - 2.0) * reactive);
    Ok((scale * (center + radius), scale * (center - radius)))
}

/// Closed-form eigenvalues of whichever branch is active at `v_amp`.
pub fn eigenvalues(model: &LoadModel, v_amp: f64) -> Result<(f64, f64)> {
    match model.branch(v_amp) {
        Branch::Zip(p) => eigenvalues_zip(p, v_amp),
        Branch::Exp(p) => eigenvalues_exp(p, v_amp),
    }
}

/// ZIP certificate from the two inequalities
/// `Y_P + I_P/(2V) > 0` and
/// `Y_P²V⁴ + Y_P I_P V³ > ¼I_Q²V² + (I_P P_P + I_Q P_Q)V + P_P² + P_Q²`.
pub fn check_zip_conditions(p: &ZipParams, v_amp: f64) -> Result<PassivityCertificate> {
    let eig = eigenvalues_zip(p, v_amp)?;
    let v = v_amp;
    let v2 = v * v;
    let lhs = p.y_p * p.y_p * v2 * v2 + p.y_p * p.i_p * v2 * v;
    let rhs = 0.25 * p.i_q * p.i_q * v2 + (p.i_p * p.p_p + p.i_q * p.p_q) * v + (p.p_p * p.p_p + p.p_q * p.p_q);
    let residuals = ConditionResiduals {
        first: p.y_p + p.i_p / (2.0 * v),
        second: lhs - rhs,
    };
    Ok(PassivityCertificate::new(v_amp, eig, residuals))
}

/// Exponential certificate from `n_p P₀ > 0` and
/// `4(n_p − 1) P₀² (V/V₀)^(2n_p) > (n_q − 2)² Q₀² (V/V₀)^(2n_q)`.
pub fn check_exp_conditions(p: &ExpParams, v_amp: f64) -> Result<PassivityCertificate> {
    let eig = eigenvalues_exp(p, v_amp)?;
    let x = v_amp / p.v0;
    let active = p.p0 * x.powf(p.n_p);
    let reactive = p.q0 * x.powf(p.n_q);
    let nq2 = p.n_q - 2.0;
    let residuals = ConditionResiduals {
        first: p.n_p * p.p0,
        second: 4.0 * (p.n_p - 1.0) * active * active - nq2 * nq2 * reactive * reactive,
    };
    Ok(PassivityCertificate::new(v_amp, eig, residuals))
}

/// Certificate for the branch active at `v_amp`.
pub fn certify(model: &LoadModel, v_amp: f64) -> Result<PassivityCertificate> {
    match model.branch(v_amp) {
        Branch::Zip(p) => check_zip_conditions(p, v_amp),
        Branch::Exp(p) => check_exp_conditions(p, v_amp),
    }
}

pub fn is_strictly_passive(model: &LoadModel, v_amp: f64) -> Result<bool> {
    Ok(certify(model, v_amp)?.verdict.is_passive())
}

/// Maximal amplitude intervals on which a load certifies strictly passive.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VoltageWindow {
    pub intervals: Vec<(f64, f64)>,
}

impl VoltageWindow {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, v_amp: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= v_amp && v_amp <= hi)
    }

    /// Lowest certified amplitude, if any.
    pub fn lower_limit(&self) -> Option<f64> {
        self.intervals.first().map(|iv| iv.0)
    }

    pub fn upper_limit(&self) -> Option<f64> {
        self.intervals.last().map(|iv| iv.1)
    }
}

/// Scans `[v_min, v_max]` on `grid` points and bisects every passivity change
/// to a bracket of width `≤ tol`. Interval endpoints are the passive side of
/// each final bracket, so every returned endpoint itself certifies.
pub fn passive_voltage_window(
    model: &LoadModel,
    v_min: f64,
    v_max: f64,
    grid: usize,
    tol: f64,
) -> Result<VoltageWindow> {
    if !(v_min > V_EPS && v_max > v_min && v_max.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "v_min/v_max".into(),
            value: v_min,
            reason: "scan range must satisfy v_eps < v_min < v_max",
        });
    }
    if grid < 2 {
        return Err(Error::InvalidParameter {
            name: "grid".into(),
            value: grid as f64,
            reason: "at least two grid points are required",
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol".into(),
            value: tol,
            reason: "bisection tolerance must be positive",
        });
    }

    let step = (v_max - v_min) / (grid - 1) as f64;
    let point = |k: usize| if k + 1 == grid { v_max } else { v_min + k as f64 * step };
    let passive = |v: f64| is_strictly_passive(model, v);

    let mut intervals = Vec::new();
    let mut prev_v = v_min;
    let mut prev = passive(v_min)?;
    let mut open = prev.then_some(v_min);
    for k in 1..grid {
        let v = point(k);
        let now = passive(v)?;
        if now != prev {
            let (mut lo, mut hi) = (prev_v, v);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if passive(mid)? == prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if now {
                open = Some(hi);
            } else if let Some(start) = open.take() {
                intervals.push((start, lo));
            }
        }
        prev = now;
        prev_v = v;
    }
    if let Some(start) = open {
        intervals.push((start, v_max));
    }
    Ok(VoltageWindow { intervals })
}

/// [`passive_voltage_window`] with the default grid and tolerance.
pub fn default_window(model: &LoadModel, v_min: f64, v_max: f64) -> Result<VoltageWindow> {
    passive_voltage_window(model, v_min, v_max, DEFAULT_WINDOW_GRID, DEFAULT_WINDOW_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    pub v: DqVector,
    pub v_ref: DqVector,
    pub inner_product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub samples: usize,
    /// Smallest `(v − v*)ᵀ(i(v) − i(v*))` seen (W).
    pub min_inner_product: f64,
    /// Smallest inner product divided by `‖v − v*‖²` (S).
    pub min_normalized: f64,
    pub violation_count: usize,
    /// First few violating pairs.
    pub violations: Vec<MonotonicityViolation>,
}

impl MonotonicityReport {
    pub fn is_clean(&self) -> bool {
        self.violation_count == 0
    }
}

const MAX_REPORTED_VIOLATIONS: usize = 16;

/// Draws `samples` pairs of dq voltages with amplitudes uniform in `region`
/// and angles uniform in `[0, 2π)`, and checks the incremental inequality
/// `(v − v*)ᵀ(i(v) − i(v*)) > 0` on each.
pub fn incremental_monotonicity_test(
    model: &LoadModel,
    region: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let (lo, hi) = region;
    if !(lo > V_EPS && hi >= lo) {
        return Err(Error::InvalidParameter {
            name: "region".into(),
            value: lo,
            reason: "region must satisfy v_eps < v_min <= v_max",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let amp = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        DqVector::from_polar(amp, theta)
    };

    let mut report = MonotonicityReport {
        samples,
        min_inner_product: f64::INFINITY,
        min_normalized: f64::INFINITY,
        violation_count: 0,
        violations: Vec::new(),
    };
    for _ in 0..samples {
        let v = draw(&mut rng);
        let v_ref = draw(&mut rng);
        let dv = v - v_ref;
        let inner = dv.dot(model.current(v)? - model.current(v_ref)?);
        report.min_inner_product = report.min_inner_product.min(inner);
        let n2 = dv.norm_squared();
        if n2 > 0.0 {
            report.min_normalized = report.min_normalized.min(inner / n2);
        }
        if !(inner > 0.0) {
            report.violation_count += 1;
            if report.violations.len() < MAX_REPORTED_VIOLATIONS {
                report.violations.push(MonotonicityViolation {
                    v,
                    v_ref,
                    inner_product: inner,
                });
            }
        }
    }
    Ok(report)
}
