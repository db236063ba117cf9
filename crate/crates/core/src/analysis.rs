//! AC sweeps and the crossover metrics computed from them.
//!
//! Transfer functions are referenced to the input terminal (the node after
//! any source resistance) unless [`Reference::SourceEmf`] is requested.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::mna::{solve_ac, AcSolution, MnaError};
use crate::netlist::{Circuit, GROUND};
use crate::topologies::FirPair;
use crate::transformer::DesignError;

/// Floor used whenever a dB value would be −∞.
pub const DB_FLOOR: f64 = -300.0;

/// Condition estimates above this are recorded as solver warnings.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("at f = {freq_hz} Hz: {source}")]
    Solve {
        freq_hz: f64,
        #[source]
        source: MnaError,
    },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("probe node '{0}' is not part of the circuit")]
    MissingProbe(String),
    #[error("circuit needs two probes (LF and HF), found {0}")]
    NotEnoughProbes(usize),
    #[error("transfer reference is zero at f = {0} Hz")]
    ZeroReference(f64),
    #[error("sweeps are on different grids")]
    GridMismatch,
    #[error("need at least {needed} sweep points, have {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("frequency {f} Hz outside [0, f_s/2) for f_s = {f_s} Hz")]
    OutOfBand { f: f64, f_s: f64 },
    #[error("sweep is empty")]
    EmptySweep,
}

/// Log-uniform frequency grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub n_points: usize,
}

impl FrequencyGrid {
    pub fn log(f_min: f64, f_max: f64, n_points: usize) -> Result<Self, AnalysisError> {
        if !(f_min > 0.0 && f_min.is_finite() && f_max.is_finite() && f_min < f_max) {
            return Err(AnalysisError::InvalidGrid(format!(
                "need 0 < f_min < f_max, got [{f_min}, {f_max}]"
            )));
        }
        if n_points < 2 {
            return Err(AnalysisError::InvalidGrid(format!(
                "need at least 2 points, got {n_points}"
            )));
        }
        Ok(Self {
            f_min,
            f_max,
            n_points,
        })
    }

    /// 20 Hz – 20 kHz, 500 points.
    pub fn audio() -> Self {
        Self {
            f_min: 20.0,
            f_max: 20_000.0,
            n_points: 500,
        }
    }

    /// Grid frequencies; the endpoints are exact.
    pub fn points(&self) -> Vec<f64> {
        let (lo, hi) = (self.f_min.ln(), self.f_max.ln());
        let last = self.n_points - 1;
        (0..self.n_points)
            .map(|i| match i {
                0 => self.f_min,
                i if i == last => self.f_max,
                i => (lo + (hi - lo) * i as f64 / last as f64).exp(),
            })
            .collect()
    }

    /// Ratio between neighbouring points.
    pub fn step_ratio(&self) -> f64 {
        (self.f_max / self.f_min).powf(1.0 / (self.n_points - 1) as f64)
    }
}

/// Wrap an angle in degrees into (−180, 180].
pub fn normalize_deg(deg: f64) -> f64 {
    let mut d = deg.rem_euclid(360.0);
    if d > 180.0 {
        d -= 360.0;
    }
    if d <= -180.0 {
        d += 360.0;
    }
    d
}

pub fn phase_deg(z: Complex64) -> f64 {
    normalize_deg(z.arg().to_degrees())
}

/// Shortest angular distance between two phases, in [0, 180].
pub fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

pub fn db(magnitude: f64) -> f64 {
    if magnitude > 0.0 {
        (20.0 * magnitude.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Both branch responses at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPair {
    pub f: f64,
    pub h_lf: Complex64,
    pub h_hf: Complex64,
    pub sum: Complex64,
    pub eps: Complex64,
    pub phase_lf_deg: f64,
    pub phase_hf_deg: f64,
}

impl TransferPair {
    pub fn new(f: f64, h_lf: Complex64, h_hf: Complex64) -> Self {
        let sum = h_lf + h_hf;
        Self {
            f,
            h_lf,
            h_hf,
            sum,
            eps: sum - 1.0,
            phase_lf_deg: phase_deg(h_lf),
            phase_hf_deg: phase_deg(h_hf),
        }
    }

    pub fn branch(&self, branch: Branch) -> Complex64 {
        match branch {
            Branch::Lf => self.h_lf,
            Branch::Hf => self.h_hf,
            Branch::Sum => self.sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Lf,
    Hf,
    Sum,
}

/// Denominator of the transfer functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reference {
    /// Voltage at a node (normally the input terminal).
    Node(String),
    /// Complex EMF of the first AC source.
    SourceEmf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probes {
    pub lf: String,
    pub hf: String,
    pub reference: Reference,
}

impl Probes {
    pub fn new(lf: &str, hf: &str) -> Self {
        Self {
            lf: lf.into(),
            hf: hf.into(),
            reference: Reference::Node(crate::topologies::nodes::INPUT.into()),
        }
    }

    /// First two `.probe` nodes; reference is node `in` if present, otherwise
    /// the positive node of the first source.
    pub fn for_circuit(circuit: &Circuit) -> Result<Self, AnalysisError> {
        if circuit.probes.len() < 2 {
            return Err(AnalysisError::NotEnoughProbes(circuit.probes.len()));
        }
        let input = crate::topologies::nodes::INPUT;
        let reference = if circuit.has_node(input) {
            Reference::Node(input.into())
        } else {
            match circuit.sources().next() {
                Some(s) if s.nodes[0] != GROUND => Reference::Node(s.nodes[0].clone()),
                _ => Reference::SourceEmf,
            }
        };
        Ok(Self {
            lf: circuit.probes[0].clone(),
            hf: circuit.probes[1].clone(),
            reference,
        })
    }

    pub fn with_reference(mut self, reference: Reference) -> Self {
        self.reference = reference;
        self
    }

    pub fn describe_reference(&self) -> String {
        match &self.reference {
            Reference::Node(n) => format!("v({n})"),
            Reference::SourceEmf => "source emf".into(),
        }
    }

    fn validate(&self, circuit: &Circuit) -> Result<(), AnalysisError> {
        for n in [&self.lf, &self.hf] {
            if !circuit.has_node(n) {
                return Err(AnalysisError::MissingProbe(n.clone()));
            }
        }
        if let Reference::Node(n) = &self.reference {
            if !circuit.has_node(n) {
                return Err(AnalysisError::MissingProbe(n.clone()));
            }
        }
        Ok(())
    }

    fn transfer(&self, circuit: &Circuit, sol: &AcSolution) -> Result<(Complex64, Complex64), AnalysisError> {
        let f = sol.freq_hz();
        let v = |n: &str| sol.voltage(n).ok_or_else(|| AnalysisError::MissingProbe(n.into()));
        let denom = match &self.reference {
            Reference::Node(n) => v(n)?,
            Reference::SourceEmf => {
                let s = circuit.sources().next().ok_or(AnalysisError::Solve {
                    freq_hz: f,
                    source: MnaError::NoSource,
                })?;
                Complex64::from_polar(s.value, s.phase_deg.to_radians())
            }
        };
        if denom == Complex64::new(0.0, 0.0) {
            return Err(AnalysisError::ZeroReference(f));
        }
        Ok((v(&self.lf)? / denom, v(&self.hf)? / denom))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverWarning {
    pub freq_hz: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub topology: String,
    /// Crossover frequency, when the topology has one.
    pub f0: Option<f64>,
    pub grid: FrequencyGrid,
    pub points: Vec<TransferPair>,
    /// Per-point condition estimate (1 for non-MNA sweeps).
    pub condition: Vec<f64>,
    pub warnings: Vec<SolverWarning>,
    pub reference: String,
}

impl SweepResult {
    pub fn labelled(mut self, topology: &str, f0: Option<f64>) -> Self {
        self.topology = topology.to_string();
        self.f0 = f0;
        self
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f).collect()
    }

    pub fn max_condition(&self) -> f64 {
        self.condition.iter().copied().fold(1.0, f64::max)
    }
}

/// Solve the circuit at every grid point (in parallel; results keep grid order).
pub fn ac_sweep(circuit: &Circuit, probes: &Probes, grid: &FrequencyGrid) -> Result<SweepResult, AnalysisError> {
    probes.validate(circuit)?;
    let freqs = grid.points();
    let solved: Vec<Result<(TransferPair, f64), AnalysisError>> = freqs
        .par_iter()
        .map(|&f| {
            let sol = solve_ac(circuit, TAU * f).map_err(|source| AnalysisError::Solve { freq_hz: f, source })?;
            let (lf, hf) = probes.transfer(circuit, &sol)?;
            Ok((TransferPair::new(f, lf, hf), sol.condition_estimate))
        })
        .collect();

    let mut points = Vec::with_capacity(freqs.len());
    let mut condition = Vec::with_capacity(freqs.len());
    let mut warnings = Vec::new();
    for r in solved {
        let (p, c) = r?;
        if c > CONDITION_WARNING {
            warnings.push(SolverWarning { freq_hz: p.f, condition: c });
        }
        points.push(p);
        condition.push(c);
    }
    Ok(SweepResult {
        topology: "netlist".into(),
        f0: None,
        grid: *grid,
        points,
        condition,
        warnings,
        reference: probes.describe_reference(),
    })
}

/// `(H_LF, H_HF)` of the circuit at a single frequency.
pub fn transfer_at(circuit: &Circuit, probes: &Probes, f: f64) -> Result<(Complex64, Complex64), AnalysisError> {
    probes.validate(circuit)?;
    let sol = solve_ac(circuit, TAU * f).map_err(|source| AnalysisError::Solve { freq_hz: f, source })?;
    probes.transfer(circuit, &sol)
}

/// `H(f) = Σ h[n]·exp(−j·2π·f·n/f_s)`.
pub fn fir_response(h: &[f64], f: f64, f_s: f64) -> Result<Complex64, AnalysisError> {
    if !(f >= 0.0 && f < f_s / 2.0) {
        return Err(AnalysisError::OutOfBand { f, f_s });
    }
    let step = -TAU * f / f_s;
    Ok(h
        .iter()
        .enumerate()
        .map(|(n, &c)| c * Complex64::cis(step * n as f64))
        .sum())
}

/// Sweep of an FIR pair on the grid (transfer relative to the digital input).
pub fn fir_sweep(pair: &FirPair, f_s: f64, grid: &FrequencyGrid) -> Result<SweepResult, AnalysisError> {
    let freqs = grid.points();
    let solved: Vec<Result<TransferPair, AnalysisError>> = freqs
        .par_iter()
        .map(|&f| Ok(TransferPair::new(f, fir_response(&pair.lp, f, f_s)?, fir_response(&pair.hp, f, f_s)?)))
        .collect();
    let points = solved.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        topology: "fir".into(),
        f0: None,
        grid: *grid,
        condition: vec![1.0; points.len()],
        points,
        warnings: Vec::new(),
        reference: "digital input".into(),
    })
}

/// Frequency regions relative to the crossover `f0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Full,
    /// `f ≤ f0/2` or `f ≥ 2·f0`: the flat band.
    OutsideOctave,
    /// `f0/2 < f < 2·f0`: near the crossover.
    WithinOctave,
    /// `f ≤ f0/10` or `f ≥ 10·f0`: deep in either branch's passband.
    OutsideDecade,
}

impl Band {
    /// With an unknown `f0` every band is the full band.
    pub fn contains(self, f: f64, f0: Option<f64>) -> bool {
        let Some(f0) = f0 else { return true };
        match self {
            Band::Full => true,
            Band::OutsideOctave => f <= f0 / 2.0 || f >= 2.0 * f0,
            Band::WithinOctave => f > f0 / 2.0 && f < 2.0 * f0,
            Band::OutsideDecade => f <= f0 / 10.0 || f >= 10.0 * f0,
        }
    }
}

fn band_max(values: impl Iterator<Item = (f64, f64)>, band: Band, f0: Option<f64>) -> Option<f64> {
    values
        .filter(|(f, _)| band.contains(*f, f0))
        .map(|(_, v)| v)
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplementarityReport {
    pub max_eps_full_db: f64,
    pub max_eps_flat_db: f64,
    pub flat_points: usize,
}

pub fn complementarity_report(sweep: &SweepResult) -> Result<ComplementarityReport, AnalysisError> {
    if sweep.points.is_empty() {
        return Err(AnalysisError::EmptySweep);
    }
    let eps = || sweep.points.iter().map(|p| (p.f, p.eps.norm()));
    let full = band_max(eps(), Band::Full, sweep.f0).unwrap_or(0.0);
    let flat = band_max(eps(), Band::OutsideOctave, sweep.f0);
    Ok(ComplementarityReport {
        max_eps_full_db: db(full),
        max_eps_flat_db: db(flat.unwrap_or(0.0)),
        flat_points: sweep
            .points
            .iter()
            .filter(|p| Band::OutsideOctave.contains(p.f, sweep.f0))
            .count(),
    })
}

/// Per-point phase deviation of a sweep against a reference sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDeviation {
    pub f: Vec<f64>,
    pub f0: Option<f64>,
    pub lf_deg: Vec<f64>,
    pub hf_deg: Vec<f64>,
    /// Deviation of the inter-branch difference `phase_lf − phase_hf`.
    pub split_deg: Vec<f64>,
}

impl PhaseDeviation {
    /// Largest per-branch deviation in `band` (0 if the band is empty).
    pub fn max_branch(&self, band: Band) -> f64 {
        let both = self
            .f
            .iter()
            .zip(self.lf_deg.iter().zip(&self.hf_deg))
            .map(|(&f, (&a, &b))| (f, a.max(b)));
        band_max(both, band, self.f0).unwrap_or(0.0)
    }

    pub fn max_split(&self, band: Band) -> f64 {
        band_max(self.f.iter().copied().zip(self.split_deg.iter().copied()), band, self.f0).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    /// `arg(H_LF + H_HF)` per point: the reconstruction phase.
    pub sum_phase_deg: Vec<f64>,
    pub max_abs_sum_phase_deg: f64,
    /// `phase_lf − phase_hf` per point, normalized.
    pub split_deg: Vec<f64>,
    pub deviation: Option<PhaseDeviation>,
}

pub fn phase_metrics(sweep: &SweepResult, reference: Option<&SweepResult>) -> Result<PhaseReport, AnalysisError> {
    let sum_phase_deg: Vec<f64> = sweep.points.iter().map(|p| phase_deg(p.sum)).collect();
    let split = |s: &SweepResult| -> Vec<f64> {
        s.points
            .iter()
            .map(|p| normalize_deg(p.phase_lf_deg - p.phase_hf_deg))
            .collect()
    };
    let split_deg = split(sweep);

    let deviation = match reference {
        None => None,
        Some(r) => {
            if r.points.len() != sweep.points.len() || r.points.iter().zip(&sweep.points).any(|(a, b)| a.f != b.f) {
                return Err(AnalysisError::GridMismatch);
            }
            let ref_split = split(r);
            Some(PhaseDeviation {
                f: sweep.frequencies(),
                f0: r.f0.or(sweep.f0),
                lf_deg: sweep
                    .points
                    .iter()
                    .zip(&r.points)
                    .map(|(a, b)| circular_distance_deg(a.phase_lf_deg, b.phase_lf_deg))
                    .collect(),
                hf_deg: sweep
                    .points
                    .iter()
                    .zip(&r.points)
                    .map(|(a, b)| circular_distance_deg(a.phase_hf_deg, b.phase_hf_deg))
                    .collect(),
                split_deg: split_deg
                    .iter()
                    .zip(&ref_split)
                    .map(|(&a, &b)| circular_distance_deg(a, b))
                    .collect(),
            })
        }
    };

    Ok(PhaseReport {
        max_abs_sum_phase_deg: sum_phase_deg.iter().map(|p| p.abs()).fold(0.0, f64::max),
        sum_phase_deg,
        split_deg,
        deviation,
    })
}

/// `IL(f) = −20·log10|H_LF + H_HF|` per point.
pub fn insertion_loss(sweep: &SweepResult) -> Vec<f64> {
    sweep.points.iter().map(|p| -db(p.sum.norm())).collect()
}

/// Largest insertion loss inside `band`.
pub fn max_insertion_loss(sweep: &SweepResult, band: Band) -> Option<f64> {
    band_max(
        sweep.points.iter().zip(insertion_loss(sweep)).map(|(p, il)| (p.f, il)),
        band,
        sweep.f0,
    )
}

/// Continuous phase (radians) by nearest-multiple-of-2π continuation.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    for (i, &p) in phases.iter().enumerate() {
        if i == 0 {
            out.push(p);
            continue;
        }
        let prev: f64 = out[i - 1];
        let turns = ((prev - p) / TAU).round();
        out.push(p + turns * TAU);
    }
    out
}

/// `τ(f) = −dφ/dω` in seconds: three-point differences on the non-uniform
/// grid for interior points, one-sided at the ends.
pub fn group_delay(sweep: &SweepResult, branch: Branch) -> Result<Vec<f64>, AnalysisError> {
    let n = sweep.points.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints { needed: 3, have: n });
    }
    let phi = unwrap_phase(&sweep.points.iter().map(|p| p.branch(branch).arg()).collect::<Vec<_>>());
    let w: Vec<f64> = sweep.points.iter().map(|p| TAU * p.f).collect();

    Ok((0..n)
        .map(|i| {
            let d = if i == 0 {
                (phi[1] - phi[0]) / (w[1] - w[0])
            } else if i == n - 1 {
                (phi[n - 1] - phi[n - 2]) / (w[n - 1] - w[n - 2])
            } else {
                let h1 = w[i] - w[i - 1];
                let h2 = w[i + 1] - w[i];
                -h2 / (h1 * (h1 + h2)) * phi[i - 1]
                    + (h2 - h1) / (h1 * h2) * phi[i]
                    + h1 / (h2 * (h1 + h2)) * phi[i + 1]
            };
            -d
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub f_peak: f64,
    pub magnitude: f64,
    /// Grid index of the largest sample.
    pub index: usize,
}

/// Interior maximum of `|H_branch|`, refined by a parabola through the three
/// samples around it in (log f, dB). `None` when the largest sample sits on
/// either end of the grid (monotone response).
pub fn find_resonance(sweep: &SweepResult, branch: Branch) -> Option<Resonance> {
    let mags: Vec<f64> = sweep.points.iter().map(|p| p.branch(branch).norm()).collect();
    let (index, _) = mags
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &m)| if m > best.1 { (i, m) } else { best });
    if index == 0 || index + 1 >= mags.len() {
        return None;
    }
    let x = |i: usize| sweep.points[i].f.ln();
    let y = |i: usize| db(mags[i]);
    let (x0, x1, x2) = (x(index - 1), x(index), x(index + 1));
    let (y0, y1, y2) = (y(index - 1), y(index), y(index + 1));

    // vertex of the interpolating parabola (Lagrange form)
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curvature = (d12 - d01) / (x2 - x0);
    let (x_peak, y_peak) = if curvature < 0.0 {
        let xp = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
        let xp = xp.clamp(x0, x2);
        let yp = y1 + d01 * (xp - x1) + curvature * (xp - x0) * (xp - x1);
        (xp, yp)
    } else {
        (x1, y1)
    };
    Some(Resonance {
        f_peak: x_peak.exp(),
        magnitude: 10f64.powf(y_peak / 20.0),
        index,
    })
}

/// Locate the maximum of `|H_branch|` on the circuit itself by golden-section
/// search in log-frequency between the grid neighbours of `coarse.index`.
pub fn refine_resonance(
    circuit: &Circuit,
    probes: &Probes,
    sweep: &SweepResult,
    branch: Branch,
    coarse: &Resonance,
) -> Result<Resonance, AnalysisError> {
    let i = coarse.index;
    if i == 0 || i + 1 >= sweep.points.len() {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            have: sweep.points.len(),
        });
    }
    let magnitude = |log_f: f64| -> Result<f64, AnalysisError> {
        let f = log_f.exp();
        let sol = solve_ac(circuit, TAU * f).map_err(|source| AnalysisError::Solve { freq_hz: f, source })?;
        let (lf, hf) = probes.transfer(circuit, &sol)?;
        Ok(match branch {
            Branch::Lf => lf.norm(),
            Branch::Hf => hf.norm(),
            Branch::Sum => (lf + hf).norm(),
        })
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (sweep.points[i - 1].f.ln(), sweep.points[i + 1].f.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (magnitude(c)?, magnitude(d)?);
    while (b - a).abs() > 1e-12 * a.abs().max(1.0) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = magnitude(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = magnitude(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok(Resonance {
        f_peak: x.exp(),
        magnitude: magnitude(x)?,
        index: i,
    })
}

/// Phase of `H·e^{+jωD/f_s}`: the FIR phase after removing a bulk delay of
/// `delay_samples`.
pub fn remove_bulk_delay(h: Complex64, f: f64, f_s: f64, delay_samples: f64) -> Complex64 {
    h * Complex64::cis(TAU * f * delay_samples / f_s)
}
