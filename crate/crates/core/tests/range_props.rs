//! Range expansion invariants.

use proptest::prelude::*;
use vtank_core::range::{child_name, RangeParameter, RangeSpec};
use vtank_core::{PhysicalParameters, Vec3};

fn base() -> PhysicalParameters {
    PhysicalParameters {
        mass: 500.0,
        cog: Vec3::new(0.5, 0.5, 0.25),
        velocity: 2.0,
        water_temperature: 15.0,
        inertia_diag: [1.0; 3],
        water_z: 0.5,
        wave_height: 0.0,
        trim_angle: 0.0,
    }
}

fn fields(p: &PhysicalParameters) -> [f64; 5] {
    [p.velocity, p.mass, p.trim_angle, p.water_z, p.water_temperature]
}

proptest! {
    #[test]
    fn children_differ_in_one_field(which in 0usize..5, lo in 1.0f64..20.0, span in 0.5f64..20.0, count in 2u32..12) {
        let parameter = RangeParameter::ALL[which];
        let hi = if parameter == RangeParameter::WaterTemperature { (lo + span).min(99.0) } else { lo + span };
        let spec = RangeSpec { parameter, lo, hi, count };
        let kids = spec.expand(&base()).unwrap();
        prop_assert_eq!(kids.len(), count as usize);
        let b = fields(&base());
        for (i, k) in kids.iter().enumerate() {
            let f = fields(k);
            for j in 0..5 {
                if j != which {
                    prop_assert_eq!(f[j], b[j]);
                }
            }
            let expected = lo + i as f64 * (hi - lo) / f64::from(count - 1);
            prop_assert!((parameter.get(k) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            prop_assert_eq!(k.cog, base().cog);
        }
        prop_assert_eq!(parameter.get(&kids[0]), lo);
        prop_assert_eq!(parameter.get(kids.last().unwrap()), hi);
    }
}

#[test]
fn velocity_two_to_six() {
    let spec = RangeSpec { parameter: RangeParameter::Velocity, lo: 2.0, hi: 6.0, count: 5 };
    let v: Vec<f64> = spec.expand(&base()).unwrap().iter().map(|p| p.velocity).collect();
    assert_eq!(v, vec![2.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(child_name("hull", 0), "hull_r001");
    assert_eq!(child_name("hull", 11), "hull_r012");
}

#[test]
fn invalid_endpoints_rejected() {
    let bad = [
        RangeSpec { parameter: RangeParameter::Mass, lo: 0.0, hi: 10.0, count: 3 },
        RangeSpec { parameter: RangeParameter::Velocity, lo: 3.0, hi: 1.0, count: 3 },
        RangeSpec { parameter: RangeParameter::Velocity, lo: 1.0, hi: 3.0, count: 1 },
    ];
    for s in bad {
        assert!(s.expand(&base()).is_err(), "{s:?}");
    }
}
