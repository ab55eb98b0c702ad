//! Fresh-water properties.

use serde::{Deserialize, Serialize};

/// (T °C, ρ kg/m³, ν 10⁻⁶ m²/s). Standard fresh-water values at 0.1 MPa; the
/// 4 °C node pins the density maximum.
const FRESH_WATER: &[(f64, f64, f64)] = &[
    (0.0, 999.8428, 1.79204),
    (4.0, 999.9749, 1.56733),
    (5.0, 999.9668, 1.51822),
    (10.0, 999.7027, 1.30629),
    (15.0, 999.1026, 1.13859),
    (20.0, 998.2067, 1.00340),
    (25.0, 997.0470, 0.89266),
    (30.0, 995.6488, 0.80071),
    (35.0, 994.0326, 0.72344),
    (40.0, 992.2152, 0.65785),
    (45.0, 990.2105, 0.60166),
    (50.0, 988.0299, 0.55313),
    (55.0, 985.6831, 0.51093),
    (60.0, 983.1784, 0.47400),
    (65.0, 980.5226, 0.44149),
    (70.0, 977.7217, 0.41272),
    (75.0, 974.7809, 0.38714),
    (80.0, 971.7046, 0.36431),
    (85.0, 968.4967, 0.34384),
    (90.0, 965.1605, 0.32542),
    (95.0, 961.6991, 0.30880),
    (100.0, 958.1149, 0.29375),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fluid {
    /// Density, kg/m³.
    pub rho: f64,
    /// Kinematic viscosity, m²/s.
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("water temperature {0} °C outside (0, 100)")]
pub struct OutOfRange(pub f64);

/// Linear interpolation in the fresh-water table for `0 < t < 100` °C.
pub fn fluid_properties(t: f64) -> Result<Fluid, OutOfRange> {
    if !(t > 0.0 && t < 100.0) {
        return Err(OutOfRange(t));
    }
    let k = FRESH_WATER.windows(2).position(|w| t <= w[1].0).expect("t < 100");
    let (t0, r0, n0) = FRESH_WATER[k];
    let (t1, r1, n1) = FRESH_WATER[k + 1];
    let f = (t - t0) / (t1 - t0);
    Ok(Fluid { rho: r0 + f * (r1 - r0), nu: (n0 + f * (n1 - n0)) * 1e-6 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_degrees() {
        let f = fluid_properties(15.0).unwrap();
        assert!((f.rho - 999.1).abs() < 0.01);
        assert!((f.nu - 1.139e-6).abs() < 0.001e-6);
    }

    #[test]
    fn monotone() {
        assert!(fluid_properties(4.0).unwrap().rho > fluid_properties(90.0).unwrap().rho);
        let mut prev = fluid_properties(0.01).unwrap();
        let mut t: f64 = 0.01;
        while t < 99.9 {
            t += 0.1;
            let f = fluid_properties(t.min(99.99)).unwrap();
            assert!(f.nu < prev.nu);
            if t - 0.1 >= 4.0 {
                assert!(f.rho <= prev.rho, "t={t}");
            }
            prev = f;
        }
    }

    #[test]
    fn out_of_range() {
        assert!(fluid_properties(-5.0).is_err());
        assert!(fluid_properties(0.0).is_err());
        assert!(fluid_properties(100.0).is_err());
        assert!(fluid_properties(f64::NAN).is_err());
    }
}
