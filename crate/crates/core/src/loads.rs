//! Static load models and their voltage-dependent dq current injections.
//!
//! Each model is described by its consumed active power `P(V)` and reactive
//! power `Q(V)` as functions of the voltage amplitude `V = |v|`. The dq current
//! drawn at voltage `v` is `(1/V²)·[[P, Q], [-Q, P]]·v`, the unique solution of
//! `P = v_d i_d + v_q i_q`, `Q = v_q i_d - v_d i_q`.

use serde::{Deserialize, Serialize};

use crate::dq::DqVector;
use crate::error::{check_param, Error, Result};

/// Amplitude below which the current maps refuse to evaluate (V).
pub const V_EPS: f64 = 1e-6;

/// Fraction of the nominal voltage below which two-tier loads fall back to
/// pure admittance.
pub const TWO_TIER_FRACTION: f64 = 0.7;

/// Grouped ZIP coefficients: `P = y_p V² + i_p V + p_p`, `Q = y_q V² + i_q V + p_q`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZipParams {
    /// S
    pub y_p: f64,
    /// A
    pub i_p: f64,
    /// W
    pub p_p: f64,
    /// S
    pub y_q: f64,
    /// A
    pub i_q: f64,
    /// VAr
    pub p_q: f64,
}

impl ZipParams {
    /// Pure-admittance load.
    pub fn admittance(y_p: f64, y_q: f64) -> Self {
        Self {
            y_p,
            y_q,
            ..Self::default()
        }
    }

    /// Builds the grouped coefficients from per-unit ZIP shares and nominal
    /// values, e.g. `y_p = a_z · P₀ / V₀²`.
    pub fn from_nominal(p0: f64, q0: f64, v0: f64, active: [f64; 3], reactive: [f64; 3]) -> Self {
        Self {
            y_p: active[0] * p0 / (v0 * v0),
            i_p: active[1] * p0 / v0,
            p_p: active[2] * p0,
            y_q: reactive[0] * q0 / (v0 * v0),
            i_q: reactive[1] * q0 / v0,
            p_q: reactive[2] * q0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.fields() {
            check_param(name, value, "load parameters must be non-negative", value >= 0.0)?;
        }
        Ok(())
    }

    pub fn is_admittance_only(&self) -> bool {
        self.i_p == 0.0 && self.p_p == 0.0 && self.i_q == 0.0 && self.p_q == 0.0
    }

    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("y_p", self.y_p),
            ("i_p", self.i_p),
            ("p_p", self.p_p),
            ("y_q", self.y_q),
            ("i_q", self.i_q),
            ("p_q", self.p_q),
        ]
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "y_p" => &mut self.y_p,
            "i_p" => &mut self.i_p,
            "p_p" => &mut self.p_p,
            "y_q" => &mut self.y_q,
            "i_q" => &mut self.i_q,
            "p_q" => &mut self.p_q,
            _ => return None,
        })
    }
}

/// Exponential load: `P = p0 (V/v0)^n_p`, `Q = q0 (V/v0)^n_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpParams {
    /// W
    pub p0: f64,
    /// VAr
    pub q0: f64,
    pub n_p: f64,
    pub n_q: f64,
    /// Nominal phase-to-phase RMS voltage (V).
    pub v0: f64,
}

impl ExpParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.fields() {
            check_param(name, value, "load parameters must be non-negative", value >= 0.0)?;
        }
        check_param("v0", self.v0, "nominal voltage must be positive", self.v0 > 0.0)
    }

    fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("p0", self.p0),
            ("q0", self.q0),
            ("n_p", self.n_p),
            ("n_q", self.n_q),
            ("v0", self.v0),
        ]
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "p0" => &mut self.p0,
            "q0" => &mut self.q0,
            "n_p" => &mut self.n_p,
            "n_q" => &mut self.n_q,
            "v0" => &mut self.v0,
            _ => return None,
        })
    }
}

/// Model used above the two-tier threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperModel {
    Zip(ZipParams),
    #[serde(rename = "exponential")]
    Exp(ExpParams),
}

/// ZIP or exponential model for `V ≥ v_threshold`, pure admittance below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoTierParams {
    pub upper: UpperModel,
    pub z_only: ZipParams,
    pub v_threshold: f64,
}

impl TwoTierParams {
    /// Exponential upper tier with the threshold at `0.7 · v0`.
    pub fn with_exponential(upper: ExpParams, z_only: ZipParams) -> Self {
        Self {
            upper: UpperModel::Exp(upper),
            z_only,
            v_threshold: TWO_TIER_FRACTION * upper.v0,
        }
    }

    /// ZIP upper tier; the ZIP coefficients carry no nominal voltage, so it is
    /// passed explicitly.
    pub fn with_zip(upper: ZipParams, z_only: ZipParams, v0: f64) -> Self {
        Self {
            upper: UpperModel::Zip(upper),
            z_only,
            v_threshold: TWO_TIER_FRACTION * v0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.upper {
            UpperModel::Zip(p) => p.validate()?,
            UpperModel::Exp(p) => p.validate()?,
        }
        self.z_only.validate()?;
        if !self.z_only.is_admittance_only() {
            return Err(Error::InvalidParameter {
                name: "z_only".into(),
                value: f64::NAN,
                reason: "the lower tier may only carry admittance terms",
            });
        }
        check_param(
            "v_threshold",
            self.v_threshold,
            "threshold must be positive",
            self.v_threshold > 0.0,
        )
    }

    /// Branch active at amplitude `v_amp`; the threshold itself belongs to the upper tier.
    pub fn branch(&self, v_amp: f64) -> Branch<'_> {
        if v_amp >= self.v_threshold {
            match &self.upper {
                UpperModel::Zip(p) => Branch::Zip(p),
                UpperModel::Exp(p) => Branch::Exp(p),
            }
        } else {
            Branch::Zip(&self.z_only)
        }
    }
}

/// A static load model of one of the three supported families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadModel {
    Zip(ZipParams),
    #[serde(rename = "exponential")]
    Exp(ExpParams),
    TwoTier(TwoTierParams),
}

/// The smooth model that governs a load at a particular amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch<'a> {
    Zip(&'a ZipParams),
    Exp(&'a ExpParams),
}

impl LoadModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LoadModel::Zip(p) => p.validate(),
            LoadModel::Exp(p) => p.validate(),
            LoadModel::TwoTier(p) => p.validate(),
        }
    }

    pub fn branch(&self, v_amp: f64) -> Branch<'_> {
        match self {
            LoadModel::Zip(p) => Branch::Zip(p),
            LoadModel::Exp(p) => Branch::Exp(p),
            LoadModel::TwoTier(p) => p.branch(v_amp),
        }
    }

    /// `(P, Q)` consumed at amplitude `v_amp`.
    pub fn power(&self, v_amp: f64) -> Result<(f64, f64)> {
        match self.branch(v_amp) {
            Branch::Zip(p) => power_zip(p, v_amp),
            Branch::Exp(p) => power_exp(p, v_amp),
        }
    }

    /// dq current drawn at dq voltage `v`.
    pub fn current(&self, v: DqVector) -> Result<DqVector> {
        match self {
            LoadModel::Zip(p) => current_zip(p, v),
            LoadModel::Exp(p) => current_exp(p, v),
            LoadModel::TwoTier(p) => current_twotier(p, v),
        }
    }

    /// Reads a numeric parameter by dotted path (`y_p`, `n_q`, `upper.p_q`,
    /// `z_only.y_p`, `v_threshold`, ...).
    pub fn param(&self, path: &str) -> Result<f64> {
        let mut copy = *self;
        copy.param_mut(path).map(|v| *v)
    }

    /// Assigns a numeric parameter by dotted path. The result is not validated.
    pub fn set_param(&mut self, path: &str, value: f64) -> Result<()> {
        *self.param_mut(path)? = value;
        Ok(())
    }

    fn param_mut(&mut self, path: &str) -> Result<&mut f64> {
        let unknown = || Error::UnknownParameter(path.to_string());
        match self {
            LoadModel::Zip(p) => p.field_mut(path).ok_or_else(unknown),
            LoadModel::Exp(p) => p.field_mut(path).ok_or_else(unknown),
            LoadModel::TwoTier(p) => {
                if path == "v_threshold" {
                    return Ok(&mut p.v_threshold);
                }
                let (head, tail) = path.split_once('.').ok_or_else(unknown)?;
                match (head, &mut p.upper) {
                    ("upper", UpperModel::Zip(z)) => z.field_mut(tail).ok_or_else(unknown),
                    ("upper", UpperModel::Exp(e)) => e.field_mut(tail).ok_or_else(unknown),
                    // the lower tier is admittance-only
                    ("z_only", _) if matches!(tail, "y_p" | "y_q") => p.z_only.field_mut(tail).ok_or_else(unknown),
                    _ => Err(unknown()),
                }
            }
        }
    }
}

fn check_amplitude(v_amp: f64) -> Result<()> {
    if v_amp > 0.0 && v_amp.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveVoltage(v_amp))
    }
}

fn guarded_amplitude(v: DqVector) -> Result<f64> {
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

pub fn power_zip(p: &ZipParams, v_amp: f64) -> Result<(f64, f64)> {
    check_amplitude(v_amp)?;
    let v2 = v_amp * v_amp;
    Ok((p.y_p * v2 + p.i_p * v_amp + p.p_p, p.y_q * v2 + p.i_q * v_amp + p.p_q))
}

pub fn power_exp(p: &ExpParams, v_amp: f64) -> Result<(f64, f64)> {
    check_amplitude(v_amp)?;
    let ratio = v_amp / p.v0;
    Ok((p.p0 * ratio.powf(p.n_p), p.q0 * ratio.powf(p.n_q)))
}

/// Solves the dq power equations for the current at voltage `v`.
pub fn current_from_power(active: f64, reactive: f64, v: DqVector) -> Result<DqVector> {
    guarded_amplitude(v)?;
    let v2 = v.norm_squared();
    Ok(DqVector::new(
        (active * v.d + reactive * v.q) / v2,
        (active * v.q - reactive * v.d) / v2,
    ))
}

pub fn current_zip(p: &ZipParams, v: DqVector) -> Result<DqVector> {
    let amp = guarded_amplitude(v)?;
    let v2 = v.norm_squared();
    let DqVector { d, q } = v;
    Ok(DqVector::new(
        (p.p_p * d + p.p_q * q) / v2 + (p.i_p * d + p.i_q * q) / amp + p.y_p * d + p.y_q * q,
        (p.p_p * q - p.p_q * d) / v2 + (p.i_p * q - p.i_q * d) / amp + p.y_p * q - p.y_q * d,
    ))
}

pub fn current_exp(p: &ExpParams, v: DqVector) -> Result<DqVector> {
    let amp = guarded_amplitude(v)?;
    let ln_v = amp.ln();
    let g = p.p0 * ((p.n_p - 2.0) * ln_v).exp() / p.v0.powf(p.n_p);
    let h = p.q0 * ((p.n_q - 2.0) * ln_v).exp() / p.v0.powf(p.n_q);
    Ok(DqVector::new(g * v.d + h * v.q, g * v.q - h * v.d))
}

pub fn current_twotier(p: &TwoTierParams, v: DqVector) -> Result<DqVector> {
    let amp = guarded_amplitude(v)?;
    match p.branch(amp) {
        Branch::Zip(z) => current_zip(z, v),
        Branch::Exp(e) => current_exp(e, v),
    }
}

/// Reference parameter sets used by tests, examples and the bundled config.
pub mod reference {
    use super::{ExpParams, ZipParams};

    pub const NOMINAL_VOLTAGE: f64 = 400.0;

    pub const BASE_ZIP: ZipParams = ZipParams {
        y_p: 0.15,
        i_p: 2.0,
        p_p: 4500.0,
        y_q: 0.05,
        i_q: 9.0,
        p_q: 19_000.0,
    };

    pub const BASE_EXP: ExpParams = ExpParams {
        p0: 5500.0,
        q0: 3700.0,
        n_p: 1.7,
        n_q: 0.7,
        v0: NOMINAL_VOLTAGE,
    };
}

#[cfg(test)]
mod tests {
    use super::reference::{BASE_EXP, BASE_ZIP};
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn zip_power_pure_admittance() {
        let p = ZipParams::admittance(0.15, 0.0);
        assert_eq!(power_zip(&p, 400.0).unwrap(), (24_000.0, 0.0));
    }

    #[test]
    fn zip_power_table1_base() {
        let (active, reactive) = power_zip(&BASE_ZIP, 400.0).unwrap();
        assert_eq!(active, 29_300.0);
        // 0.05·400² + 9·400 + 19000
        assert_eq!(reactive, 30_600.0);
    }

    #[test]
    fn zip_power_scales_with_coefficients() {
        let p = BASE_ZIP;
        let doubled = ZipParams {
            y_p: 2.0 * p.y_p,
            i_p: 2.0 * p.i_p,
            p_p: 2.0 * p.p_p,
            y_q: 2.0 * p.y_q,
            i_q: 2.0 * p.i_q,
            p_q: 2.0 * p.p_q,
        };
        let (a, r) = power_zip(&p, 371.0).unwrap();
        let (a2, r2) = power_zip(&doubled, 371.0).unwrap();
        assert!(close(a2, 2.0 * a, 1e-15) && close(r2, 2.0 * r, 1e-15));
    }

    #[test]
    fn non_positive_amplitude_is_a_domain_error() {
        assert!(matches!(power_zip(&BASE_ZIP, 0.0), Err(Error::NonPositiveVoltage(_))));
        assert!(matches!(power_exp(&BASE_EXP, -1.0), Err(Error::NonPositiveVoltage(_))));
    }

    #[test]
    fn exp_power_at_nominal_voltage() {
        assert_eq!(power_exp(&BASE_EXP, 400.0).unwrap(), (5500.0, 3700.0));
    }

    #[test]
    fn exp_power_half_voltage() {
        // 0.5^1.7 = 2^-1.7 = 0.30778610333622..., evaluated as exp2 of the exponent.
        let expected = 5500.0 * (-1.7f64).exp2();
        let (active, _) = power_exp(&BASE_EXP, 200.0).unwrap();
        assert!(close(active, expected, 1e-14));
        assert!(close(active, 1692.823568349, 1e-10));
    }

    #[test]
    fn quadratic_exponent_matches_admittance() {
        let e = ExpParams {
            n_p: 2.0,
            n_q: 2.0,
            ..BASE_EXP
        };
        let z = ZipParams::admittance(e.p0 / 160_000.0, e.q0 / 160_000.0);
        for v in [1.0, 37.5, 400.0, 999.0] {
            let (pa, pr) = power_exp(&e, v).unwrap();
            let (za, zr) = power_zip(&z, v).unwrap();
            assert!(close(pa, za, 1e-14) && close(pr, zr, 1e-14));
        }
    }

    #[test]
    fn current_from_zero_power_is_zero() {
        let i = current_from_power(0.0, 0.0, DqVector::new(120.0, -45.0)).unwrap();
        assert_eq!(i, DqVector::ZERO);
    }

    #[test]
    fn current_from_power_on_d_axis() {
        let i = current_from_power(24_000.0, 0.0, DqVector::new(400.0, 0.0)).unwrap();
        assert_eq!(i, DqVector::new(60.0, 0.0));
    }

    #[test]
    fn current_from_power_singular_at_origin() {
        let err = current_from_power(1.0, 1.0, DqVector::new(1e-7, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn zip_current_admittance_only() {
        let p = ZipParams::admittance(0.15, 0.05);
        let i = current_zip(&p, DqVector::new(400.0, 0.0)).unwrap();
        assert!(close(i.d, 60.0, 1e-15) && close(i.q, -20.0, 1e-15));
    }

    #[test]
    fn zip_current_table1_base() {
        let v = DqVector::new(400.0, 0.0);
        let i = current_zip(&BASE_ZIP, v).unwrap();
        assert!(close(i.d, 73.25, 1e-14), "{}", i.d);
        assert!(close(i.q, -76.5, 1e-14), "{}", i.q);
        // back-substitute into the power equations
        let (active, reactive) = power_zip(&BASE_ZIP, 400.0).unwrap();
        assert!(close(v.d * i.d + v.q * i.q, active, 1e-14));
        assert!(close(v.q * i.d - v.d * i.q, reactive, 1e-14));
    }

    #[test]
    fn exp_current_at_nominal_voltage() {
        let i = current_exp(&BASE_EXP, DqVector::new(400.0, 0.0)).unwrap();
        assert!(close(i.d, 13.75, 1e-14) && close(i.q, -9.25, 1e-14));
    }

    #[test]
    fn two_tier_branch_selection() {
        let z_only = ZipParams::admittance(0.03, 0.02);
        let tt = TwoTierParams::with_exponential(BASE_EXP, z_only);
        assert_eq!(tt.v_threshold, 280.0);

        let low = DqVector::new(200.0, 0.0);
        assert_eq!(current_twotier(&tt, low).unwrap(), current_zip(&z_only, low).unwrap());

        let nominal = DqVector::new(400.0, 0.0);
        assert_eq!(
            current_twotier(&tt, nominal).unwrap(),
            current_exp(&BASE_EXP, nominal).unwrap()
        );
    }

    #[test]
    fn two_tier_threshold_is_inclusive_above() {
        let z_only = ZipParams::admittance(0.03, 0.02);
        let tt = TwoTierParams::with_exponential(BASE_EXP, z_only);
        let at = DqVector::new(tt.v_threshold, 0.0);
        let upper = current_exp(&BASE_EXP, at).unwrap();
        let lower = current_zip(&z_only, at).unwrap();
        assert_eq!(current_twotier(&tt, at).unwrap(), upper);
        // the model is discontinuous here: 5500·0.7^1.7/280 vs 0.03·280
        let jump = (upper - lower).amplitude();
        assert!(jump > 1.0, "jump {jump}");
        assert!(close(upper.d, 5500.0 * 0.7f64.powf(1.7) / 280.0, 1e-13));
        assert!(close(lower.d, 8.4, 1e-14));
    }

    #[test]
    fn validation_rejects_negative_parameters() {
        let mut p = BASE_ZIP;
        p.i_q = -1.0;
        assert!(p.validate().is_err());
        let e = ExpParams { v0: 0.0, ..BASE_EXP };
        assert!(e.validate().is_err());
        let tt = TwoTierParams::with_exponential(BASE_EXP, BASE_ZIP);
        assert!(tt.validate().is_err(), "lower tier must be admittance-only");
    }

    #[test]
    fn parameter_paths() {
        let mut m = LoadModel::Zip(BASE_ZIP);
        m.set_param("p_q", 11_000.0).unwrap();
        assert_eq!(m.param("p_q").unwrap(), 11_000.0);
        assert!(m.set_param("n_p", 1.0).is_err());

        let mut tt = LoadModel::TwoTier(TwoTierParams::with_exponential(
            BASE_EXP,
            ZipParams::admittance(0.03, 0.02),
        ));
        tt.set_param("upper.n_p", 1.1).unwrap();
        assert_eq!(tt.param("upper.n_p").unwrap(), 1.1);
        assert_eq!(tt.param("z_only.y_q").unwrap(), 0.02);
        assert!(tt.param("z_only.p_p").is_err());
        assert_eq!(tt.param("v_threshold").unwrap(), 280.0);
    }

    #[test]
    fn serde_uses_family_tags() {
        let json = serde_json::to_string(&LoadModel::Exp(BASE_EXP)).unwrap();
        assert!(json.starts_with(r#"{"exponential":{"p0":5500.0"#), "{json}");
        let back: LoadModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, LoadModel::Exp(BASE_EXP));
        let bad = r#"{"zip":{"y_p":1,"i_p":0,"p_p":0,"y_q":0,"i_q":0,"p_q":0,"extra":1}}"#;
        assert!(serde_json::from_str::<LoadModel>(bad).is_err());
    }
}
