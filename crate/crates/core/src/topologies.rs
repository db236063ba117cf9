//! Reference crossover systems: the transformer router, a second-order LC
//! crossover and a windowed-sinc FIR pair.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use num_complex::Complex64;

use crate::netlist::{Circuit, Element};
use crate::transformer::{require, DesignError, PrimaryLoop, TransformerParams};

/// Node names used by the builders.
pub mod nodes {
    pub const SOURCE: &str = "src";
    pub const INPUT: &str = "in";
    pub const LF: &str = "lf";
    pub const HF: &str = "hf";
    pub const LP: &str = "lp";
    pub const HP: &str = "hp";
}

/// Series capacitor plus transformer primary (LF across the capacitor),
/// secondary winding as the HF output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtrDesign {
    pub c3: f64,
    pub transformer: TransformerParams,
    /// Source resistance, Ω.
    pub r_s: f64,
}

impl RtrDesign {
    /// Ideal 1:1 design whose primary resonates with `c3` at `f0`.
    pub fn from_crossover(f0: f64, c3: f64) -> Result<Self, DesignError> {
        require(f0 > 0.0 && f0.is_finite(), "f0", f0, "must be positive")?;
        require(c3 > 0.0 && c3.is_finite(), "C3", c3, "must be positive")?;
        let w0 = TAU * f0;
        let design = Self {
            c3,
            transformer: TransformerParams::ideal(1.0 / (w0 * w0 * c3)),
            r_s: 0.0,
        };
        design.validate()?;
        Ok(design)
    }

    /// 1 kHz crossover, C3 = 10 µF, ideal transformer, no source resistance.
    pub fn reference() -> Self {
        Self::from_crossover(1000.0, 10e-6).expect("reference design is valid")
    }

    /// Reference design with k = 0.999, R_w = 0.1 Ω, R_s = 0.1 Ω.
    pub fn reference_nonideal() -> Self {
        Self::reference().with_losses(0.999, 0.1, 0.1)
    }

    pub fn with_losses(mut self, k: f64, r_w: f64, r_s: f64) -> Self {
        self.transformer.k = k;
        self.transformer.r_w = r_w;
        self.r_s = r_s;
        self
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        self.transformer.validate()?;
        require(self.c3 > 0.0 && self.c3.is_finite(), "C3", self.c3, "must be positive")?;
        require(self.r_s >= 0.0 && self.r_s.is_finite(), "R_s", self.r_s, "must be non-negative")
    }

    /// Series resonance of the primary inductance with `c3`, Hz.
    pub fn f0(&self) -> f64 {
        1.0 / (TAU * (self.transformer.l1 * self.c3).sqrt())
    }

    /// Name of the transfer-reference node in the built circuit.
    pub fn input_node(&self) -> &'static str {
        nodes::INPUT
    }
}

pub fn build_rtr(design: &RtrDesign) -> Result<Circuit, DesignError> {
    design.validate()?;
    let t = &design.transformer;
    let mut elements = Vec::new();

    let drive = if design.r_s > 0.0 { nodes::SOURCE } else { nodes::INPUT };
    elements.push(Element::ac_source("V1", drive, "0", 1.0, 0.0));
    if design.r_s > 0.0 {
        elements.push(Element::resistor("RS", nodes::SOURCE, nodes::INPUT, design.r_s));
    }
    let primary_top = if t.r_w > 0.0 {
        elements.push(Element::resistor("RW", nodes::INPUT, "pri", t.r_w));
        "pri"
    } else {
        nodes::INPUT
    };
    elements.push(Element::inductor("L1", primary_top, nodes::LF, t.l1));
    if t.c_par > 0.0 {
        elements.push(Element::capacitor("CP", nodes::INPUT, nodes::LF, t.c_par));
    }
    elements.push(Element::capacitor("C3", nodes::LF, "0", design.c3));
    elements.push(Element::inductor("L2", nodes::HF, "0", t.l2));
    elements.push(Element::coupling("K1", "L1", "L2", t.k));

    Ok(Circuit {
        elements,
        probes: vec![nodes::LF.into(), nodes::HF.into()],
        comments: vec![
            format!("transformer crossover, f0 = {} Hz", crate::netlist::format_value(design.f0())),
            "LF output v(lf), HF output v(hf), transfer reference v(in)".into(),
            "dot convention: the first node of L1 and of L2 is the dotted terminal".into(),
        ],
    })
}

/// Closed-form `(H_LF, H_HF)` relative to the input terminal.
pub fn rtr_closed_form(design: &RtrDesign, omega: f64) -> Result<(Complex64, Complex64), DesignError> {
    design.validate()?;
    Ok(PrimaryLoop::solve(&design.transformer, design.c3, design.r_s, omega)?.transfer())
}

/// Second-order LC crossover specified by its alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lc2Design {
    pub f0: f64,
    /// Load resistance on each branch, Ω.
    pub r_load: f64,
    pub q: f64,
    /// Series resistance of the low-pass inductor, Ω.
    pub esr_l: f64,
    /// Series resistance of the high-pass capacitor, Ω.
    pub esr_c: f64,
}

impl Lc2Design {
    /// Butterworth 1 kHz crossover into 8 Ω with lossy series parts.
    pub fn reference() -> Self {
        Self {
            f0: 1000.0,
            r_load: 8.0,
            q: FRAC_1_SQRT_2,
            esr_l: 0.3,
            esr_c: 0.05,
        }
    }

    /// Lossless variant of [`Lc2Design::reference`].
    pub fn ideal() -> Self {
        Self {
            esr_l: 0.0,
            esr_c: 0.0,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        require(self.f0 > 0.0 && self.f0.is_finite(), "f0", self.f0, "must be positive")?;
        require(self.r_load > 0.0 && self.r_load.is_finite(), "R_load", self.r_load, "must be positive")?;
        require(self.q > 0.0 && self.q.is_finite(), "Q", self.q, "must be positive")?;
        require(self.esr_l >= 0.0, "esr_L", self.esr_l, "must be non-negative")?;
        require(self.esr_c >= 0.0, "esr_C", self.esr_c, "must be non-negative")
    }

    /// Element values: `L = R/(Q·ω0)`, `C = Q/(R·ω0)`, the high-pass branch
    /// uses the same L and C.
    pub fn values(&self) -> Result<Lc2Values, DesignError> {
        self.validate()?;
        let w0 = TAU * self.f0;
        let l = self.r_load / (self.q * w0);
        let c = self.q / (self.r_load * w0);
        Ok(Lc2Values {
            l_lp: l,
            c_lp: c,
            c_hp: c,
            l_hp: l,
            r_load_lp: self.r_load,
            r_load_hp: self.r_load,
            esr_l: self.esr_l,
            esr_c: self.esr_c,
        })
    }
}

/// Concrete component values of an LC crossover (possibly perturbed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lc2Values {
    pub l_lp: f64,
    pub c_lp: f64,
    pub c_hp: f64,
    pub l_hp: f64,
    pub r_load_lp: f64,
    pub r_load_hp: f64,
    pub esr_l: f64,
    pub esr_c: f64,
}

impl Lc2Values {
    pub fn validate(&self) -> Result<(), DesignError> {
        for (name, v) in [
            ("L_lp", self.l_lp),
            ("C_lp", self.c_lp),
            ("C_hp", self.c_hp),
            ("L_hp", self.l_hp),
            ("R_load_lp", self.r_load_lp),
            ("R_load_hp", self.r_load_hp),
        ] {
            require(v > 0.0 && v.is_finite(), name, v, "must be positive")?;
        }
        require(self.esr_l >= 0.0, "esr_L", self.esr_l, "must be non-negative")?;
        require(self.esr_c >= 0.0, "esr_C", self.esr_c, "must be non-negative")
    }
}

pub fn build_lc2(design: &Lc2Design) -> Result<Circuit, DesignError> {
    let mut circuit = build_lc2_values(&design.values()?)?;
    circuit.comments.insert(
        0,
        format!(
            "second-order LC crossover, f0 = {} Hz, Q = {}",
            crate::netlist::format_value(design.f0),
            crate::netlist::format_value(design.q)
        ),
    );
    Ok(circuit)
}

pub fn build_lc2_values(v: &Lc2Values) -> Result<Circuit, DesignError> {
    v.validate()?;
    let mut elements = vec![Element::ac_source("V1", nodes::INPUT, "0", 1.0, 0.0)];

    let lp_top = if v.esr_l > 0.0 {
        elements.push(Element::resistor("RESRL", nodes::INPUT, "lpa", v.esr_l));
        "lpa"
    } else {
        nodes::INPUT
    };
    elements.push(Element::inductor("LLP", lp_top, nodes::LP, v.l_lp));
    elements.push(Element::capacitor("CLP", nodes::LP, "0", v.c_lp));
    elements.push(Element::resistor("RLP", nodes::LP, "0", v.r_load_lp));

    let hp_top = if v.esr_c > 0.0 {
        elements.push(Element::resistor("RESRC", nodes::INPUT, "hpa", v.esr_c));
        "hpa"
    } else {
        nodes::INPUT
    };
    elements.push(Element::capacitor("CHP", hp_top, nodes::HP, v.c_hp));
    elements.push(Element::inductor("LHP", nodes::HP, "0", v.l_hp));
    elements.push(Element::resistor("RHP", nodes::HP, "0", v.r_load_hp));

    Ok(Circuit {
        elements,
        probes: vec![nodes::LP.into(), nodes::HP.into()],
        comments: vec!["LP output v(lp), HP output v(hp), transfer reference v(in)".into()],
    })
}

/// Closed-form `(H_LP, H_HP)` of the loaded ladders.
pub fn lc2_closed_form(design: &Lc2Design, omega: f64) -> Result<(Complex64, Complex64), DesignError> {
    lc2_closed_form_values(&design.values()?, omega)
}

pub fn lc2_closed_form_values(v: &Lc2Values, omega: f64) -> Result<(Complex64, Complex64), DesignError> {
    v.validate()?;
    if omega.is_nan() || omega <= 0.0 {
        return Err(DesignError::NonPositiveOmega(omega));
    }
    let jw = Complex64::new(0.0, omega);
    // series (esr + jωL) into C ∥ R:  H = R / (R + (esr + jωL)(1 + jωRC))
    let h_lp = v.r_load_lp / (v.r_load_lp + (v.esr_l + jw * v.l_lp) * (1.0 + jw * v.r_load_lp * v.c_lp));
    // series (esr + 1/jωC) into L ∥ R:  H = 1 / (1 + Z_series·(1/R + 1/jωL))
    let z_series = v.esr_c + 1.0 / (jw * v.c_hp);
    let y_shunt = 1.0 / v.r_load_hp + 1.0 / (jw * v.l_hp);
    let h_hp = 1.0 / (1.0 + z_series * y_shunt);
    Ok((h_lp, h_hp))
}

/// Linear-phase FIR crossover with a Hamming window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirDesign {
    pub n_taps: usize,
    pub f_cut: f64,
    pub f_s: f64,
}

impl FirDesign {
    /// 1023 taps at 48 kHz, cut at 1 kHz.
    pub fn reference() -> Self {
        Self {
            n_taps: 1023,
            f_cut: 1000.0,
            f_s: 48_000.0,
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        require(
            self.n_taps >= 3 && self.n_taps % 2 == 1,
            "n_taps",
            self.n_taps as f64,
            "must be odd and at least 3",
        )?;
        require(self.f_s > 0.0 && self.f_s.is_finite(), "f_s", self.f_s, "must be positive")?;
        require(
            self.f_cut > 0.0 && self.f_cut < self.f_s / 2.0,
            "f_cut",
            self.f_cut,
            "must lie in (0, f_s/2)",
        )
    }

    /// Bulk delay of the pair, in samples.
    pub fn latency_samples(&self) -> usize {
        (self.n_taps - 1) / 2
    }

    pub fn latency_s(&self) -> f64 {
        self.latency_samples() as f64 / self.f_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirPair {
    pub lp: Vec<f64>,
    pub hp: Vec<f64>,
}

/// Windowed-sinc low-pass normalized to unity DC gain, and its spectral
/// inversion `δ[n − (N−1)/2] − h_lp[n]`.
pub fn design_fir(design: &FirDesign) -> Result<FirPair, DesignError> {
    design.validate()?;
    let n = design.n_taps;
    let centre = design.latency_samples();
    let fc = design.f_cut / design.f_s;

    // left half including the centre tap, mirrored so the taps are exactly symmetric
    let half: Vec<f64> = (0..=centre)
        .map(|i| {
            let m = i as f64 - centre as f64;
            let sinc = if i == centre {
                2.0 * fc
            } else {
                (TAU * fc * m).sin() / (PI * m)
            };
            let window = 0.54 - 0.46 * (TAU * i as f64 / (n - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let mut lp: Vec<f64> = (0..n).map(|i| half[i.min(n - 1 - i)]).collect();
    let dc: f64 = lp.iter().sum();
    lp.iter_mut().for_each(|h| *h /= dc);

    let hp = lp
        .iter()
        .enumerate()
        .map(|(i, &h)| if i == centre { 1.0 - h } else { -h })
        .collect();
    Ok(FirPair { lp, hp })
}
