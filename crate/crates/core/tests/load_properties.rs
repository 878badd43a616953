use std::f64::consts::TAU;

use passivity_core::loads::reference::{BASE_EXP, BASE_ZIP, NOMINAL_VOLTAGE};
use passivity_core::loads::{current_from_power, TWO_TIER_FRACTION};
use passivity_core::{DqVector, ExpParams, LoadModel, TwoTierParams, ZipParams};
use proptest::prelude::*;

fn scaled(x: f64, f: f64) -> f64 {
    x * f
}

fn zip_params() -> impl Strategy<Value = ZipParams> {
    (
        0.1f64..10.0,
        0.1f64..10.0,
        0.1f64..10.0,
        0.1f64..10.0,
        0.1f64..10.0,
        0.1f64..10.0,
    )
        .prop_map(|(a, b, c, d, e, f)| ZipParams {
            y_p: scaled(BASE_ZIP.y_p, a),
            i_p: scaled(BASE_ZIP.i_p, b),
            p_p: scaled(BASE_ZIP.p_p, c),
            y_q: scaled(BASE_ZIP.y_q, d),
            i_q: scaled(BASE_ZIP.i_q, e),
            p_q: scaled(BASE_ZIP.p_q, f),
        })
}

fn exp_params() -> impl Strategy<Value = ExpParams> {
    (0.1f64..10.0, 0.1f64..10.0, 0.0f64..3.0, 0.0f64..3.0).prop_map(|(a, b, n_p, n_q)| ExpParams {
        p0: BASE_EXP.p0 * a,
        q0: BASE_EXP.q0 * b,
        n_p,
        n_q,
        v0: NOMINAL_VOLTAGE,
    })
}

fn models() -> impl Strategy<Value = LoadModel> {
    prop_oneof![
        zip_params().prop_map(LoadModel::Zip),
        exp_params().prop_map(LoadModel::Exp),
        (exp_params(), 0.01f64..1.0, 0.01f64..1.0).prop_map(|(e, y_p, y_q)| LoadModel::TwoTier(
            TwoTierParams::with_exponential(e, ZipParams::admittance(y_p, y_q))
        )),
    ]
}

fn voltage() -> impl Strategy<Value = DqVector> {
    (10.0f64..1000.0, 0.0f64..TAU).prop_map(|(a, th)| DqVector::from_polar(a, th))
}

proptest! {
    #[test]
    fn current_reproduces_power(model in models(), v in voltage()) {
        let i = model.current(v).unwrap();
        let (p, q) = model.power(v.amplitude()).unwrap();
        // P = vᵀi, Q = v_q i_d − v_d i_q for the dq current map
        let p_back = v.d * i.d + v.q * i.q;
        let q_back = v.q * i.d - v.d * i.q;
        let scale = p.abs().max(q.abs()).max(1.0);
        prop_assert!((p_back - p).abs() <= 1e-9 * scale, "{} vs {}", p_back, p);
        prop_assert!((q_back - q).abs() <= 1e-9 * scale, "{} vs {}", q_back, q);
    }

    #[test]
    fn current_is_rotation_equivariant(model in models(), v in voltage(), phi in 0.0f64..TAU) {
        let rotated_first = model.current(v.rotate(phi)).unwrap();
        let rotated_after = model.current(v).unwrap().rotate(phi);
        let scale = rotated_after.amplitude().max(1.0);
        prop_assert!((rotated_first - rotated_after).amplitude() <= 1e-10 * scale);
    }

    #[test]
    fn integer_exponents_match_zip_terms(p0 in 100.0f64..1e5, q0 in 100.0f64..1e5, v in voltage()) {
        let v0 = NOMINAL_VOLTAGE;
        for (n, idx) in [(2.0, 0usize), (1.0, 1), (0.0, 2)] {
            let exp = LoadModel::Exp(ExpParams { p0, q0, n_p: n, n_q: n, v0 });
            let mut active = [0.0; 3];
            let mut reactive = [0.0; 3];
            active[idx] = 1.0;
            reactive[idx] = 1.0;
            let zip = LoadModel::Zip(ZipParams::from_nominal(p0, q0, v0, active, reactive));
            let a = exp.current(v).unwrap();
            let b = zip.current(v).unwrap();
            prop_assert!((a - b).amplitude() <= 1e-9 * a.amplitude().max(1e-9));
        }
    }

    #[test]
    fn generic_current_agrees_with_power_division(p in zip_params(), v in voltage()) {
        let (active, reactive) = LoadModel::Zip(p).power(v.amplitude()).unwrap();
        let generic = current_from_power(active, reactive, v).unwrap();
        let direct = LoadModel::Zip(p).current(v).unwrap();
        prop_assert!((generic - direct).amplitude() <= 1e-10 * direct.amplitude());
    }

    #[test]
    fn two_tier_switches_at_threshold(e in exp_params(), y in 0.01f64..1.0, frac in 0.05f64..0.99) {
        let tt = TwoTierParams::with_exponential(e, ZipParams::admittance(y, y));
        let model = LoadModel::TwoTier(tt);
        let below = tt.v_threshold * frac;
        let (p, q) = model.power(below).unwrap();
        prop_assert!((p - y * below * below).abs() <= 1e-9 * p.abs().max(1.0));
        prop_assert!((q - y * below * below).abs() <= 1e-9 * q.abs().max(1.0));
        let upper = LoadModel::Exp(e).power(tt.v_threshold).unwrap();
        prop_assert_eq!(model.power(tt.v_threshold).unwrap(), upper);
        prop_assert!((tt.v_threshold - TWO_TIER_FRACTION * e.v0).abs() < 1e-12);
    }
}

#[test]
fn serde_round_trip_of_every_family() {
    let models = [
        LoadModel::Zip(BASE_ZIP),
        LoadModel::Exp(BASE_EXP),
        LoadModel::TwoTier(TwoTierParams::with_exponential(
            BASE_EXP,
            ZipParams::admittance(0.1, 0.02),
        )),
    ];
    for m in models {
        let json = serde_json::to_string(&m).unwrap();
        let back: LoadModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
