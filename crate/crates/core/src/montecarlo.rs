//! Component-tolerance Monte Carlo.
//!
//! Sample `i` draws from its own generator, so results do not depend on
//! thread count or evaluation order. The generator for sample `i` is
//! `ChaCha8Rng::seed_from_u64(s_i)` where `s_i` is the `(i+1)`-th output of
//! SplitMix64 started at `master_seed`:
//!
//! ```text
//! state = master_seed + (i+1) * 0x9E3779B97F4A7C15   (wrapping)
//! z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! s_i = z ^ (z >> 31)
//! ```
//!
//! Each perturbable value is multiplied by an independent factor drawn
//! uniformly from `[1 − tol, 1 + tol]`, in a fixed draw order per design.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{
    ac_sweep, complementarity_report, fir_response, insertion_loss, phase_metrics, transfer_at, AnalysisError, Band,
    FrequencyGrid, Probes, SweepResult,
};
use crate::format::sci;
use crate::netlist::{Circuit, ElementKind};
use crate::topologies::{build_lc2_values, build_rtr, nodes, FirDesign, Lc2Values, RtrDesign};
use crate::transformer::DesignError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("tolerance must lie in [0, 1), got {0}")]
    InvalidTolerance(f64),
    #[error("need at least one sample")]
    NoSamples,
    #[error("nominal design: {0}")]
    Nominal(#[source] AnalysisError),
    #[error(transparent)]
    Design(#[from] DesignError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSpec {
    /// Relative tolerance, e.g. 0.05 for ±5 %.
    pub tol: f64,
    pub n_samples: usize,
    pub master_seed: u64,
    /// Separate tolerance for the coupling coefficient; `None` keeps k nominal.
    pub k_tol: Option<f64>,
}

impl ToleranceSpec {
    pub fn new(tol: f64, n_samples: usize, master_seed: u64) -> Self {
        Self {
            tol,
            n_samples,
            master_seed,
            k_tol: None,
        }
    }

    pub fn validate(&self) -> Result<(), McError> {
        for t in std::iter::once(self.tol).chain(self.k_tol) {
            if !(0.0..1.0).contains(&t) {
                return Err(McError::InvalidTolerance(t));
            }
        }
        if self.n_samples == 0 {
            return Err(McError::NoSamples);
        }
        Ok(())
    }
}

/// SplitMix64 output number `index + 1` from `seed`.
pub fn sample_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A design that can be perturbed and swept.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Rtr(RtrDesign),
    Lc2(Lc2Values),
    /// Digital filters have no component tolerances; every sample is nominal.
    Fir(FirDesign),
    /// Arbitrary netlist: every R, L and C value is perturbed.
    Netlist(Circuit),
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Rtr(_) => "rtr",
            Design::Lc2(_) => "lc2",
            Design::Fir(_) => "fir",
            Design::Netlist(_) => "netlist",
        }
    }

    pub fn f0(&self) -> Option<f64> {
        match self {
            Design::Rtr(d) => Some(d.f0()),
            Design::Lc2(v) => Some(1.0 / (std::f64::consts::TAU * (v.l_lp * v.c_lp).sqrt())),
            Design::Fir(d) => Some(d.f_cut),
            Design::Netlist(_) => None,
        }
    }

    /// Band in which the headline phase deviation is taken. The RTR branches
    /// individually swing through 180° at the series resonance, so a few
    /// percent of detuning there says nothing about the signal path; its
    /// deviation is judged on the flat band. The LC crossover acts near f0.
    pub fn phase_band(&self) -> Band {
        match self {
            Design::Rtr(_) => Band::OutsideOctave,
            Design::Lc2(_) => Band::WithinOctave,
            Design::Fir(_) | Design::Netlist(_) => Band::Full,
        }
    }

    fn perturb(&self, rng: &mut ChaCha8Rng, spec: &ToleranceSpec) -> Design {
        let mut factor = |tol: f64| if tol == 0.0 { 1.0 } else { rng.gen_range(1.0 - tol..=1.0 + tol) };
        let tol = spec.tol;
        match self {
            Design::Rtr(d) => {
                let mut p = *d;
                // one core factor for both windings keeps the turns ratio
                let core = factor(tol);
                p.transformer.l1 *= core;
                p.transformer.l2 *= core;
                p.c3 *= factor(tol);
                p.transformer.r_w *= factor(tol);
                p.r_s *= factor(tol);
                p.transformer.c_par *= factor(tol);
                if let Some(kt) = spec.k_tol {
                    p.transformer.k = (p.transformer.k * factor(kt)).min(1.0);
                }
                Design::Rtr(p)
            }
            Design::Lc2(v) => {
                let mut p = *v;
                for x in [
                    &mut p.l_lp,
                    &mut p.c_lp,
                    &mut p.c_hp,
                    &mut p.l_hp,
                    &mut p.r_load_lp,
                    &mut p.r_load_hp,
                    &mut p.esr_l,
                    &mut p.esr_c,
                ] {
                    *x *= factor(tol);
                }
                Design::Lc2(p)
            }
            Design::Fir(d) => Design::Fir(*d),
            Design::Netlist(c) => {
                let mut c = c.clone();
                for e in &mut c.elements {
                    match e.kind {
                        ElementKind::Resistor | ElementKind::Inductor | ElementKind::Capacitor => {
                            e.value *= factor(tol)
                        }
                        ElementKind::Coupling => {
                            if let Some(kt) = spec.k_tol {
                                e.value = (e.value * factor(kt)).min(1.0);
                            }
                        }
                        ElementKind::AcSource => {}
                    }
                }
                Design::Netlist(c)
            }
        }
    }

    /// Branch responses at one frequency.
    pub fn transfer_at(&self, f: f64) -> Result<(Complex64, Complex64), AnalysisError> {
        match self {
            Design::Rtr(d) => transfer_at(&build_rtr(d)?, &Probes::new(nodes::LF, nodes::HF), f),
            Design::Lc2(v) => transfer_at(&build_lc2_values(v)?, &Probes::new(nodes::LP, nodes::HP), f),
            Design::Fir(d) => {
                let pair = crate::topologies::design_fir(d)?;
                Ok((fir_response(&pair.lp, f, d.f_s)?, fir_response(&pair.hp, f, d.f_s)?))
            }
            Design::Netlist(c) => transfer_at(c, &Probes::for_circuit(c)?, f),
        }
    }

    /// Sweep on `grid`, labelled with this design's topology and f0.
    pub fn sweep(&self, grid: &FrequencyGrid) -> Result<SweepResult, AnalysisError> {
        let s = match self {
            Design::Rtr(d) => ac_sweep(&build_rtr(d)?, &Probes::new(nodes::LF, nodes::HF), grid)?,
            Design::Lc2(v) => ac_sweep(&build_lc2_values(v)?, &Probes::new(nodes::LP, nodes::HP), grid)?,
            Design::Fir(d) => crate::analysis::fir_sweep(&crate::topologies::design_fir(d)?, d.f_s, grid)?,
            Design::Netlist(c) => ac_sweep(c, &Probes::for_circuit(c)?, grid)?,
        };
        Ok(s.labelled(self.name(), self.f0()))
    }
}

pub fn sample_designs(nominal: &Design, spec: &ToleranceSpec) -> Result<Vec<Design>, McError> {
    spec.validate()?;
    Ok((0..spec.n_samples)
        .map(|i| sample_design(nominal, spec, i))
        .collect())
}

fn sample_design(nominal: &Design, spec: &ToleranceSpec, index: usize) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(spec.master_seed, index as u64));
    nominal.perturb(&mut rng, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    pub index: usize,
    pub seed: u64,
    /// Headline phase deviation: the larger of the branch and inter-branch
    /// deviations inside [`Design::phase_band`].
    pub phase_dev_deg: f64,
    pub branch_dev_flat_deg: f64,
    pub branch_dev_near_deg: f64,
    pub split_dev_near_deg: f64,
    pub max_eps_db: f64,
    pub max_eps_flat_db: f64,
    pub il_min_db: f64,
    pub il_max_db: f64,
    /// Set when the sample could not be swept; metrics are NaN then.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub max: f64,
    pub mean: f64,
    /// Nearest-rank 95th percentile.
    pub p95: f64,
}

impl Aggregate {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Self {
                max: f64::NAN,
                mean: f64::NAN,
                p95: f64::NAN,
            };
        }
        v.sort_by(f64::total_cmp);
        let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
        Self {
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p95: v[rank - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub topology: String,
    pub spec: ToleranceSpec,
    pub samples: Vec<McSample>,
    pub phase_dev_deg: Aggregate,
    pub branch_dev_flat_deg: Aggregate,
    pub branch_dev_near_deg: Aggregate,
    pub split_dev_near_deg: Aggregate,
    pub max_eps_db: Aggregate,
    pub il_max_db: Aggregate,
    pub failed: usize,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "sample",
    "seed",
    "phase_dev_deg",
    "branch_dev_flat_deg",
    "branch_dev_near_deg",
    "split_dev_near_deg",
    "max_eps_db",
    "max_eps_flat_db",
    "il_min_db",
    "il_max_db",
    "warning",
];

impl McReport {
    /// One row per sample, then a `#`-prefixed `key=value` footer.
    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for s in &self.samples {
            let nums = [
                s.phase_dev_deg,
                s.branch_dev_flat_deg,
                s.branch_dev_near_deg,
                s.split_dev_near_deg,
                s.max_eps_db,
                s.max_eps_flat_db,
                s.il_min_db,
                s.il_max_db,
            ];
            let warning = s.warning.as_deref().unwrap_or("").replace([',', '\n'], ";");
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.index,
                s.seed,
                nums.map(sci).join(","),
                warning
            ));
        }
        for line in self.summary_lines() {
            out.push_str("# ");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("topology={}", self.topology),
            format!("tol={}", self.spec.tol),
            format!("n_samples={}", self.spec.n_samples),
            format!("seed={}", self.spec.master_seed),
            format!("failed_samples={}", self.failed),
        ];
        for (key, a) in [
            ("phase_dev_deg", self.phase_dev_deg),
            ("branch_dev_flat_deg", self.branch_dev_flat_deg),
            ("branch_dev_near_deg", self.branch_dev_near_deg),
            ("split_dev_near_deg", self.split_dev_near_deg),
            ("max_eps_db", self.max_eps_db),
            ("il_max_db", self.il_max_db),
        ] {
            lines.push(format!("{key}_max={}", sci(a.max)));
            lines.push(format!("{key}_mean={}", sci(a.mean)));
            lines.push(format!("{key}_p95={}", sci(a.p95)));
        }
        lines
    }
}

fn evaluate(design: &Design, nominal_design: &Design, nominal: &SweepResult, grid: &FrequencyGrid, index: usize, seed: u64) -> McSample {
    let failed = |msg: String| McSample {
        index,
        seed,
        phase_dev_deg: f64::NAN,
        branch_dev_flat_deg: f64::NAN,
        branch_dev_near_deg: f64::NAN,
        split_dev_near_deg: f64::NAN,
        max_eps_db: f64::NAN,
        max_eps_flat_db: f64::NAN,
        il_min_db: f64::NAN,
        il_max_db: f64::NAN,
        warning: Some(msg),
    };
    // unperturbed samples (tol = 0, FIR) reuse the nominal sweep
    let swept = if design == nominal_design { Ok(nominal.clone()) } else { design.sweep(grid) };
    let sweep = match swept {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    // band edges follow the nominal crossover, not the detuned one
    let sweep = SweepResult { f0: nominal.f0, ..sweep };
    let (phase, comp) = match (phase_metrics(&sweep, Some(nominal)), complementarity_report(&sweep)) {
        (Ok(p), Ok(c)) => (p, c),
        (Err(e), _) | (_, Err(e)) => return failed(e.to_string()),
    };
    let dev = phase.deviation.expect("reference supplied");
    let band = design.phase_band();
    let il = insertion_loss(&sweep);
    McSample {
        index,
        seed,
        phase_dev_deg: dev.max_branch(band).max(dev.max_split(band)),
        branch_dev_flat_deg: dev.max_branch(Band::OutsideOctave),
        branch_dev_near_deg: dev.max_branch(Band::WithinOctave),
        split_dev_near_deg: dev.max_split(Band::WithinOctave),
        max_eps_db: comp.max_eps_full_db,
        max_eps_flat_db: comp.max_eps_flat_db,
        il_min_db: il.iter().copied().fold(f64::INFINITY, f64::min),
        il_max_db: il.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        warning: None,
    }
}

/// Sweep every sample and compare it against the nominal sweep.
pub fn mc_run(nominal: &Design, spec: &ToleranceSpec, grid: &FrequencyGrid) -> Result<McReport, McError> {
    spec.validate()?;
    let reference = nominal.sweep(grid).map_err(McError::Nominal)?;
    let samples: Vec<McSample> = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| {
            let design = sample_design(nominal, spec, i);
            evaluate(&design, nominal, &reference, grid, i, sample_seed(spec.master_seed, i as u64))
        })
        .collect();

    let agg = |f: fn(&McSample) -> f64| Aggregate::of(samples.iter().map(f));
    Ok(McReport {
        topology: nominal.name().into(),
        spec: *spec,
        phase_dev_deg: agg(|s| s.phase_dev_deg),
        branch_dev_flat_deg: agg(|s| s.branch_dev_flat_deg),
        branch_dev_near_deg: agg(|s| s.branch_dev_near_deg),
        split_dev_near_deg: agg(|s| s.split_dev_near_deg),
        max_eps_db: agg(|s| s.max_eps_db),
        il_max_db: agg(|s| s.il_max_db),
        failed: samples.iter().filter(|s| s.warning.is_some()).count(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topologies::Lc2Design;

    fn small_grid() -> FrequencyGrid {
        FrequencyGrid::log(20.0, 20_000.0, 120).unwrap()
    }

    #[test]
    fn splitmix_reference_values() {
        // published SplitMix64 sequence for seed 0
        assert_eq!(sample_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(sample_seed(0, 1), 0x6E78_9E6A_A1B9_65F4);
        assert_ne!(sample_seed(42, 0), sample_seed(43, 0));
    }

    #[test]
    fn zero_tolerance_reproduces_nominal() {
        let nominal = Design::Rtr(RtrDesign::reference_nonideal());
        for d in sample_designs(&nominal, &ToleranceSpec::new(0.0, 5, 7)).unwrap() {
            assert_eq!(d, nominal);
        }
        let r = mc_run(&nominal, &ToleranceSpec::new(0.0, 3, 7), &small_grid()).unwrap();
        assert_eq!(r.phase_dev_deg.max, 0.0);
        assert_eq!(r.failed, 0);
    }

    #[test]
    fn samples_stay_within_support() {
        let v = Lc2Design::reference().values().unwrap();
        let nominal = Design::Lc2(v);
        for d in sample_designs(&nominal, &ToleranceSpec::new(0.05, 100, 1)).unwrap() {
            let Design::Lc2(p) = d else { panic!() };
            for (a, b) in [
                (p.l_lp, v.l_lp),
                (p.c_lp, v.c_lp),
                (p.c_hp, v.c_hp),
                (p.l_hp, v.l_hp),
                (p.r_load_lp, v.r_load_lp),
                (p.esr_l, v.esr_l),
                (p.esr_c, v.esr_c),
            ] {
                let ratio = a / b;
                assert!((0.95..=1.05).contains(&ratio), "{ratio}");
            }
        }
    }

    #[test]
    fn rtr_core_factor_keeps_turns_ratio_and_k() {
        let nominal = Design::Rtr(RtrDesign::reference_nonideal());
        for d in sample_designs(&nominal, &ToleranceSpec::new(0.05, 20, 3)).unwrap() {
            let Design::Rtr(p) = d else { panic!() };
            assert!((p.transformer.turns_ratio() - 1.0).abs() < 1e-15);
            assert_eq!(p.transformer.k, 0.999);
        }
        let with_k = ToleranceSpec {
            k_tol: Some(0.01),
            ..ToleranceSpec::new(0.05, 20, 3)
        };
        let ks: Vec<f64> = sample_designs(&nominal, &with_k)
            .unwrap()
            .into_iter()
            .map(|d| match d {
                Design::Rtr(p) => p.transformer.k,
                _ => unreachable!(),
            })
            .collect();
        assert!(ks.iter().all(|&k| (0.999 * 0.99..=1.0).contains(&k)));
        assert!(ks.iter().any(|&k| k != 0.999));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let nominal = Design::Lc2(Lc2Design::reference().values().unwrap());
        let spec = ToleranceSpec::new(0.05, 16, 42);
        let a = mc_run(&nominal, &spec, &small_grid()).unwrap();
        let b = mc_run(&nominal, &spec, &small_grid()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| mc_run(&nominal, &spec, &small_grid()).unwrap());
        assert_eq!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn aggregates_match_rows() {
        let nominal = Design::Rtr(RtrDesign::reference_nonideal());
        let r = mc_run(&nominal, &ToleranceSpec::new(0.05, 20, 9), &small_grid()).unwrap();
        let vals: Vec<f64> = r.samples.iter().map(|s| s.phase_dev_deg).collect();
        let max = vals.iter().copied().fold(0.0, f64::max);
        assert_eq!(r.phase_dev_deg.max, max);
        assert!(r.phase_dev_deg.mean <= max && r.phase_dev_deg.p95 <= max);
        assert!((r.phase_dev_deg.mean - vals.iter().sum::<f64>() / 20.0).abs() < 1e-12);
        let csv = r.to_csv();
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 21);
        assert!(csv.contains("# phase_dev_deg_max="));
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let a = Aggregate::of((1..=20).map(f64::from));
        assert_eq!(a.p95, 19.0);
        assert_eq!(a.max, 20.0);
        assert_eq!(a.mean, 10.5);
        assert!(Aggregate::of(std::iter::empty()).max.is_nan());
    }

    #[test]
    fn fir_has_nothing_to_perturb() {
        let d = Design::Fir(FirDesign {
            n_taps: 31,
            f_cut: 1000.0,
            f_s: 48_000.0,
        });
        let r = mc_run(&d, &ToleranceSpec::new(0.05, 4, 1), &small_grid()).unwrap();
        assert_eq!(r.phase_dev_deg.max, 0.0);
    }

    #[test]
    fn rejects_bad_spec() {
        let d = Design::Rtr(RtrDesign::reference());
        assert_eq!(
            sample_designs(&d, &ToleranceSpec::new(1.0, 1, 0)).unwrap_err(),
            McError::InvalidTolerance(1.0)
        );
        assert_eq!(sample_designs(&d, &ToleranceSpec::new(0.1, 0, 0)).unwrap_err(), McError::NoSamples);
    }
}
