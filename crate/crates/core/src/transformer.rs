//! Transformer parameterizations and the closed-form complementarity error.
//!
//! The primary winding is a series `R_w + jωL1`, optionally shunted by a
//! parasitic `C_par` across the whole winding. The secondary is unloaded
//! (high-impedance buffer), so its terminal voltage is `jωM·I_L1`.

use num_complex::Complex64;
use thiserror::Error;

use crate::mna::mutual_inductance;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("angular frequency must be positive, got {0}")]
    NonPositiveOmega(f64),
    #[error("closed form is singular at ω = {0} rad/s (lossless resonance)")]
    Singular(f64),
}

pub(crate) fn require(
    ok: bool,
    name: &'static str,
    value: f64,
    reason: &'static str,
) -> Result<(), DesignError> {
    if ok {
        Ok(())
    } else {
        Err(DesignError::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerParams {
    /// Primary self-inductance, H.
    pub l1: f64,
    /// Secondary self-inductance, H. The turns ratio is `sqrt(l2 / l1)`.
    pub l2: f64,
    /// Coupling coefficient in (0, 1].
    pub k: f64,
    /// Primary winding resistance, Ω.
    pub r_w: f64,
    /// Parasitic capacitance across the primary winding, F.
    pub c_par: f64,
}

impl TransformerParams {
    /// Perfectly coupled, lossless 1:1 transformer.
    pub fn ideal(l1: f64) -> Self {
        Self {
            l1,
            l2: l1,
            k: 1.0,
            r_w: 0.0,
            c_par: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        require(self.l1 > 0.0 && self.l1.is_finite(), "L1", self.l1, "must be positive")?;
        require(self.l2 > 0.0 && self.l2.is_finite(), "L2", self.l2, "must be positive")?;
        require(self.k > 0.0 && self.k <= 1.0, "k", self.k, "must lie in (0, 1]")?;
        require(self.r_w >= 0.0 && self.r_w.is_finite(), "R_w", self.r_w, "must be non-negative")?;
        require(self.c_par >= 0.0 && self.c_par.is_finite(), "C_par", self.c_par, "must be non-negative")
    }

    pub fn is_ideal(&self) -> bool {
        self.k == 1.0 && self.r_w == 0.0 && self.c_par == 0.0
    }

    pub fn mutual(&self) -> f64 {
        mutual_inductance(self.k, self.l1, self.l2)
    }

    /// Primary-referred leakage inductance `(1 − k²)·L1`.
    pub fn leakage(&self) -> f64 {
        (1.0 - self.k * self.k) * self.l1
    }

    pub fn turns_ratio(&self) -> f64 {
        (self.l2 / self.l1).sqrt()
    }
}

/// Phasors of the primary loop for a unit source EMF.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PrimaryLoop {
    pub z_c3: Complex64,
    pub z_winding: Complex64,
    pub loop_current: Complex64,
    pub winding_current: Complex64,
    pub v_in: Complex64,
    pub jw_m: Complex64,
}

impl PrimaryLoop {
    pub fn solve(params: &TransformerParams, c3: f64, r_s: f64, omega: f64) -> Result<Self, DesignError> {
        if omega.is_nan() || omega <= 0.0 {
            return Err(DesignError::NonPositiveOmega(omega));
        }
        let jw = Complex64::new(0.0, omega);
        let z_c3 = 1.0 / (jw * c3);
        let z_winding = params.r_w + jw * params.l1;
        let z_primary = if params.c_par > 0.0 {
            let z_par = 1.0 / (jw * params.c_par);
            z_winding * z_par / (z_winding + z_par)
        } else {
            z_winding
        };
        let z_loop = r_s + z_primary + z_c3;
        let scale = r_s + z_primary.norm() + z_c3.norm();
        if z_loop.norm() <= 4.0 * f64::EPSILON * scale {
            return Err(DesignError::Singular(omega));
        }
        let loop_current = 1.0 / z_loop;
        let v_in = 1.0 - r_s * loop_current;
        if v_in.norm() <= 4.0 * f64::EPSILON {
            return Err(DesignError::Singular(omega));
        }
        let winding_current = z_primary * loop_current / z_winding;
        Ok(Self {
            z_c3,
            z_winding,
            loop_current,
            winding_current,
            v_in,
            jw_m: jw * params.mutual(),
        })
    }

    /// `(H_LF, H_HF)` relative to the input terminal.
    pub fn transfer(&self) -> (Complex64, Complex64) {
        (
            self.z_c3 * self.loop_current / self.v_in,
            self.jw_m * self.winding_current / self.v_in,
        )
    }

    /// `H_LF + H_HF − 1`, formed from the error term directly:
    /// `(jωM − R_w − jωL1)·I_L1 / V_in`.
    pub fn epsilon(&self) -> Complex64 {
        (self.jw_m - self.z_winding) * self.winding_current / self.v_in
    }
}

/// Complementarity error `ε(jω)` of the transformer crossover with a series
/// capacitor `c3` and source resistance `r_s`, relative to the input terminal.
pub fn epsilon_closed_form(
    params: &TransformerParams,
    c3: f64,
    r_s: f64,
    omega: f64,
) -> Result<Complex64, DesignError> {
    params.validate()?;
    require(c3 > 0.0, "C3", c3, "must be positive")?;
    require(r_s >= 0.0, "R_s", r_s, "must be non-negative")?;
    Ok(PrimaryLoop::solve(params, c3, r_s, omega)?.epsilon())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    const L1: f64 = 2.533_029_591_058_444e-3;
    const C3: f64 = 1e-5;

    #[test]
    fn ideal_transformer_has_no_error() {
        let p = TransformerParams::ideal(L1);
        assert!(p.is_ideal());
        for f in [1.0, 20.0, 999.0, 1001.0, 20_000.0, 1e6] {
            let eps = epsilon_closed_form(&p, C3, 0.0, TAU * f).unwrap();
            assert_eq!(eps, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn finite_coupling_scales_ideal_hf_response() {
        let p = TransformerParams {
            k: 0.999,
            ..TransformerParams::ideal(L1)
        };
        for i in 0..10 {
            let f = 20.0 * 1000f64.powf(i as f64 / 9.0);
            let w = TAU * f;
            // ideal HF branch by hand: ω²LC / (ω²LC − 1)
            let x = w * w * L1 * C3;
            let h_hf_ideal = x / (x - 1.0);
            let eps = epsilon_closed_form(&p, C3, 0.0, w).unwrap();
            let expected = (0.999 - 1.0) * h_hf_ideal;
            assert!((eps - expected).norm() <= 1e-12 * (1.0 + expected.abs()), "f={f}");
        }
    }

    #[test]
    fn vanishes_toward_dc() {
        let p = TransformerParams {
            k: 0.99,
            r_w: 0.5,
            ..TransformerParams::ideal(L1)
        };
        let mut last = f64::INFINITY;
        for w in [1.0, 1e-2, 1e-4, 1e-6] {
            let e = epsilon_closed_form(&p, C3, 0.1, w).unwrap().norm();
            assert!(e < last);
            last = e;
        }
        assert!(last < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = TransformerParams::ideal(L1);
        assert_eq!(
            epsilon_closed_form(&p, C3, 0.0, 0.0).unwrap_err(),
            DesignError::NonPositiveOmega(0.0)
        );
        let bad = TransformerParams { k: 1.2, ..p };
        assert!(epsilon_closed_form(&bad, C3, 0.0, 1.0).is_err());
        assert!(epsilon_closed_form(&p, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn leakage_and_mutual() {
        let p = TransformerParams {
            k: 0.9,
            l2: 4.0 * L1,
            ..TransformerParams::ideal(L1)
        };
        assert!((p.leakage() - 0.19 * L1).abs() < 1e-18);
        assert!((p.mutual() - 0.9 * 2.0 * L1).abs() < 1e-15);
        assert_eq!(p.mutual(), mutual_inductance(0.9, L1, 4.0 * L1));
        assert!((p.turns_ratio() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn error_shrinks_as_coupling_approaches_one() {
        let w = TAU * 300.0;
        let mut last = f64::INFINITY;
        for k in [0.9, 0.99, 0.999, 0.9999, 1.0] {
            let p = TransformerParams {
                k,
                ..TransformerParams::ideal(L1)
            };
            let e = epsilon_closed_form(&p, C3, 0.0, w).unwrap().norm();
            assert!(e < last);
            last = e;
        }
        assert_eq!(last, 0.0);
    }

    proptest! {
        #[test]
        fn ideal_error_is_identically_zero(
            l1_exp in -6.0f64..0.0,
            c3_exp in -9.0f64..-3.0,
            f_exp in 0.0f64..6.0,
            r_s in 0.0f64..10.0,
        ) {
            let p = TransformerParams::ideal(10f64.powf(l1_exp));
            let w = TAU * 10f64.powf(f_exp);
            match epsilon_closed_form(&p, 10f64.powf(c3_exp), r_s, w) {
                Ok(eps) => prop_assert_eq!(eps, Complex64::new(0.0, 0.0)),
                Err(DesignError::Singular(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
