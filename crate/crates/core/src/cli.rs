//! Command-line front end: `sweep`, `mc`, `compare` and `recon`.
//!
//! Every numeric output is `%.12e`; summaries are `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use thiserror::Error;

use crate::analysis::{
    complementarity_report, find_resonance, insertion_loss, max_insertion_loss, phase_deg, phase_metrics,
    refine_resonance, remove_bulk_delay, AnalysisError, Band, Branch, FrequencyGrid, Probes, Resonance, SweepResult,
};
use crate::format::sci;
use crate::montecarlo::{mc_run, Design, McError, McReport, ToleranceSpec};
use crate::netlist::{parse_netlist, Circuit, ParseError};
use crate::timedomain::{
    branch_response_time, circular_xcorr_lag, fir_filter, reconstruct_error, rms, synth_multitone, Signal,
    TimeDomainError, Tone, ToneSpec,
};
use crate::topologies::{build_lc2_values, build_rtr, design_fir, nodes, FirDesign, Lc2Design, RtrDesign};
use crate::transformer::DesignError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Netlist {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error(transparent)]
    TimeDomain(#[from] TimeDomainError),
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "rtr", version, about = "Transformer crossover simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// AC sweep of one scenario: sweep.csv and summary.txt.
    Sweep(RunArgs),
    /// Component-tolerance Monte Carlo: mc.csv and mc_summary.txt.
    Mc(RunArgs),
    /// LC / FIR / RTR comparison table: compare.csv and compare.txt.
    Compare(RunArgs),
    /// Multi-tone reconstruction: signal CSVs and recon_summary.txt.
    Recon(RunArgs),
}

/// Flags shared by every subcommand. Unset flags fall back to `--config`,
/// then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// rtr | rtr-nonideal | lc2 | fir | netlist:<path>  [default: rtr]
    #[arg(long)]
    pub scenario: Option<String>,
    /// [default: 20]
    #[arg(long)]
    pub f_min: Option<f64>,
    /// [default: 20000]
    #[arg(long)]
    pub f_max: Option<f64>,
    /// [default: 500]
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Crossover frequency in Hz (FIR cutoff for `fir`).  [default: 1000]
    #[arg(long)]
    pub f0: Option<f64>,
    /// RTR series capacitor, F.  [default: 1e-5]
    #[arg(long)]
    pub c3: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub r_w: Option<f64>,
    #[arg(long)]
    pub r_s: Option<f64>,
    #[arg(long)]
    pub c_par: Option<f64>,
    #[arg(long)]
    pub r_load: Option<f64>,
    #[arg(long)]
    pub esr_l: Option<f64>,
    #[arg(long)]
    pub esr_c: Option<f64>,
    #[arg(long)]
    pub n_taps: Option<usize>,
    /// Sample rate for FIR and time-domain work.  [default: 48000]
    #[arg(long)]
    pub f_s: Option<f64>,
    /// Relative component tolerance.  [default: 0.05]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Monte Carlo sample count.  [default: 200]
    #[arg(long)]
    pub n: Option<usize>,
    /// [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also perturb k with this tolerance.
    #[arg(long)]
    pub k_tol: Option<f64>,
    /// Comma list of freq[:amplitude[:phase_rad]].  [default: 100,3000,8000]
    #[arg(long)]
    pub tones: Option<String>,
    /// Record length, s.  [default: 0.1]
    #[arg(long)]
    pub duration: Option<f64>,
    /// [default: ./out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File of `key = value` lines using the flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Rtr,
    RtrNonideal,
    Lc2,
    Fir,
    Netlist(PathBuf),
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "rtr" => Scenario::Rtr,
            "rtr-nonideal" => Scenario::RtrNonideal,
            "lc2" => Scenario::Lc2,
            "fir" => Scenario::Fir,
            _ => match s.strip_prefix("netlist:") {
                Some(p) if !p.is_empty() => Scenario::Netlist(PathBuf::from(p)),
                _ => {
                    return Err(config_err(format!(
                        "unknown scenario '{s}' (expected rtr, rtr-nonideal, lc2, fir or netlist:<path>)"
                    )))
                }
            },
        })
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub grid: FrequencyGrid,
    pub f0: Option<f64>,
    pub c3: Option<f64>,
    pub k: Option<f64>,
    pub r_w: Option<f64>,
    pub r_s: Option<f64>,
    pub c_par: Option<f64>,
    pub r_load: Option<f64>,
    pub esr_l: Option<f64>,
    pub esr_c: Option<f64>,
    pub n_taps: Option<usize>,
    pub f_s: f64,
    pub mc: ToleranceSpec,
    pub tones: ToneSpec,
    pub duration: f64,
    pub out: PathBuf,
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("{}:{}: expected 'key = value'", path.display(), i + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn fill<T: std::str::FromStr>(
    slot: &mut Option<T>,
    map: &mut BTreeMap<String, String>,
    key: &str,
) -> Result<(), Error> {
    if let Some(raw) = map.remove(key) {
        if slot.is_none() {
            *slot = Some(
                raw.parse()
                    .map_err(|_| config_err(format!("config: invalid value '{raw}' for {key}")))?,
            );
        }
    }
    Ok(())
}

/// Tones as `freq[:amplitude[:phase_rad]]`, comma separated.
pub fn parse_tones(s: &str) -> Result<ToneSpec, Error> {
    let mut tones = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let mut parts = item.split(':');
        let num = |p: Option<&str>, default: f64| -> Result<f64, Error> {
            match p {
                None => Ok(default),
                Some(t) => t
                    .trim()
                    .parse()
                    .map_err(|_| config_err(format!("invalid tone '{item}'"))),
            }
        };
        let freq = num(parts.next(), f64::NAN)?;
        let amplitude = num(parts.next(), 1.0)?;
        let phase = num(parts.next(), 0.0)?;
        if parts.next().is_some() {
            return Err(config_err(format!("invalid tone '{item}'")));
        }
        tones.push(Tone {
            freq,
            amplitude,
            phase,
        });
    }
    Ok(ToneSpec::new(tones))
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, Error> {
        let mut a = self.clone();
        if let Some(path) = &self.config {
            let mut map = read_config(path)?;
            fill(&mut a.scenario, &mut map, "scenario")?;
            fill(&mut a.f_min, &mut map, "f-min")?;
            fill(&mut a.f_max, &mut map, "f-max")?;
            fill(&mut a.n_points, &mut map, "n-points")?;
            fill(&mut a.f0, &mut map, "f0")?;
            fill(&mut a.c3, &mut map, "c3")?;
            fill(&mut a.k, &mut map, "k")?;
            fill(&mut a.r_w, &mut map, "r-w")?;
            fill(&mut a.r_s, &mut map, "r-s")?;
            fill(&mut a.c_par, &mut map, "c-par")?;
            fill(&mut a.r_load, &mut map, "r-load")?;
            fill(&mut a.esr_l, &mut map, "esr-l")?;
            fill(&mut a.esr_c, &mut map, "esr-c")?;
            fill(&mut a.n_taps, &mut map, "n-taps")?;
            fill(&mut a.f_s, &mut map, "f-s")?;
            fill(&mut a.tol, &mut map, "tol")?;
            fill(&mut a.n, &mut map, "n")?;
            fill(&mut a.seed, &mut map, "seed")?;
            fill(&mut a.k_tol, &mut map, "k-tol")?;
            fill(&mut a.tones, &mut map, "tones")?;
            fill(&mut a.duration, &mut map, "duration")?;
            fill(&mut a.out, &mut map, "out")?;
            if let Some(key) = map.keys().next() {
                return Err(config_err(format!("{}: unknown key '{key}'", path.display())));
            }
        }

        let scenario = Scenario::parse(a.scenario.as_deref().unwrap_or("rtr"))?;
        let grid = FrequencyGrid::log(
            a.f_min.unwrap_or(20.0),
            a.f_max.unwrap_or(20_000.0),
            a.n_points.unwrap_or(500),
        )?;
        let mc = ToleranceSpec {
            k_tol: a.k_tol,
            ..ToleranceSpec::new(a.tol.unwrap_or(0.05), a.n.unwrap_or(200), a.seed.unwrap_or(42))
        };
        mc.validate()?;
        let tones = parse_tones(a.tones.as_deref().unwrap_or("100,3000,8000"))?;
        let config = RunConfig {
            scenario,
            grid,
            f0: a.f0,
            c3: a.c3,
            k: a.k,
            r_w: a.r_w,
            r_s: a.r_s,
            c_par: a.c_par,
            r_load: a.r_load,
            esr_l: a.esr_l,
            esr_c: a.esr_c,
            n_taps: a.n_taps,
            f_s: a.f_s.unwrap_or(48_000.0),
            mc,
            tones,
            duration: a.duration.unwrap_or(0.1),
            out: a.out.unwrap_or_else(|| PathBuf::from("out")),
        };
        // surface design errors before any work starts
        config.design()?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn rtr_design(&self, nonideal: bool) -> Result<RtrDesign, Error> {
        let mut d = RtrDesign::from_crossover(self.f0.unwrap_or(1000.0), self.c3.unwrap_or(1e-5))?;
        if nonideal {
            let n = RtrDesign::reference_nonideal();
            d = d.with_losses(n.transformer.k, n.transformer.r_w, n.r_s);
        }
        let t = &mut d.transformer;
        t.k = self.k.unwrap_or(t.k);
        t.r_w = self.r_w.unwrap_or(t.r_w);
        t.c_par = self.c_par.unwrap_or(t.c_par);
        d.r_s = self.r_s.unwrap_or(d.r_s);
        d.validate()?;
        Ok(d)
    }

    pub fn lc2_design(&self) -> Result<Lc2Design, Error> {
        let r = Lc2Design::reference();
        let d = Lc2Design {
            f0: self.f0.unwrap_or(r.f0),
            r_load: self.r_load.unwrap_or(r.r_load),
            esr_l: self.esr_l.unwrap_or(r.esr_l),
            esr_c: self.esr_c.unwrap_or(r.esr_c),
            ..r
        };
        d.validate()?;
        Ok(d)
    }

    pub fn fir_design(&self) -> Result<FirDesign, Error> {
        let r = FirDesign::reference();
        let d = FirDesign {
            n_taps: self.n_taps.unwrap_or(r.n_taps),
            f_cut: self.f0.unwrap_or(r.f_cut),
            f_s: self.f_s,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn load_netlist(path: &Path) -> Result<Circuit, Error> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        parse_netlist(&text).map_err(|source| Error::Netlist {
            path: path.into(),
            source,
        })
    }

    pub fn design(&self) -> Result<Design, Error> {
        Ok(match &self.scenario {
            Scenario::Rtr => Design::Rtr(self.rtr_design(false)?),
            Scenario::RtrNonideal => Design::Rtr(self.rtr_design(true)?),
            Scenario::Lc2 => Design::Lc2(self.lc2_design()?.values()?),
            Scenario::Fir => Design::Fir(self.fir_design()?),
            Scenario::Netlist(p) => Design::Netlist(Self::load_netlist(p)?),
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Error> {
        fs::create_dir_all(&self.out).map_err(|source| Error::Io {
            path: self.out.clone(),
            source,
        })?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "f_hz",
    "hlf_re",
    "hlf_im",
    "hhf_re",
    "hhf_im",
    "sum_re",
    "sum_im",
    "eps_db",
    "phase_lf_deg",
    "phase_hf_deg",
    "il_db",
];

pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out = format!(
        "# topology={} reference={} f0={}\n{}\n",
        sweep.topology,
        sweep.reference,
        sweep.f0.map_or("none".into(), sci),
        SWEEP_COLUMNS.join(",")
    );
    for (p, il) in sweep.points.iter().zip(insertion_loss(sweep)) {
        let row = [
            p.f,
            p.h_lf.re,
            p.h_lf.im,
            p.h_hf.re,
            p.h_hf.im,
            p.sum.re,
            p.sum.im,
            crate::analysis::db(p.eps.norm()),
            p.phase_lf_deg,
            p.phase_hf_deg,
            il,
        ];
        out.push_str(&row.map(sci).join(","));
        out.push('\n');
    }
    out
}

fn kv(lines: &[(&str, String)]) -> String {
    lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or("none".into(), sci)
}

/// Resonance of one branch, refined on the circuit when there is one.
fn resonance(design: &Design, sweep: &SweepResult, branch: Branch) -> Result<Option<Resonance>, Error> {
    let Some(coarse) = find_resonance(sweep, branch) else {
        return Ok(None);
    };
    let circuit = match design {
        Design::Rtr(d) => Some((build_rtr(d)?, Probes::new(nodes::LF, nodes::HF))),
        Design::Lc2(v) => Some((build_lc2_values(v)?, Probes::new(nodes::LP, nodes::HP))),
        Design::Netlist(c) => Some((c.clone(), Probes::for_circuit(c)?)),
        Design::Fir(_) => None,
    };
    Ok(Some(match circuit {
        Some((c, p)) => refine_resonance(&c, &p, sweep, branch, &coarse).unwrap_or(coarse),
        None => coarse,
    }))
}

pub fn sweep_summary(design: &Design, sweep: &SweepResult) -> Result<String, Error> {
    let comp = complementarity_report(sweep)?;
    let phase = phase_metrics(sweep, None)?;
    let il = insertion_loss(sweep);
    let lf = resonance(design, sweep, Branch::Lf)?;
    let hf = resonance(design, sweep, Branch::Hf)?;
    Ok(kv(&[
        ("topology", sweep.topology.clone()),
        ("reference", sweep.reference.clone()),
        ("f_min_hz", sci(sweep.grid.f_min)),
        ("f_max_hz", sci(sweep.grid.f_max)),
        ("n_points", sweep.points.len().to_string()),
        ("f0_hz", opt(sweep.f0)),
        ("max_eps_full_db", sci(comp.max_eps_full_db)),
        ("max_eps_flat_db", sci(comp.max_eps_flat_db)),
        ("flat_points", comp.flat_points.to_string()),
        ("max_abs_sum_phase_deg", sci(phase.max_abs_sum_phase_deg)),
        ("il_max_db", sci(il.iter().copied().fold(f64::NEG_INFINITY, f64::max))),
        ("il_pass_max_db", opt(max_insertion_loss(sweep, Band::OutsideDecade))),
        ("resonance_lf_hz", opt(lf.map(|r| r.f_peak))),
        ("resonance_lf_mag", opt(lf.map(|r| r.magnitude))),
        ("resonance_hf_hz", opt(hf.map(|r| r.f_peak))),
        ("resonance_hf_mag", opt(hf.map(|r| r.magnitude))),
        ("max_condition", sci(sweep.max_condition())),
        ("solver_warnings", sweep.warnings.len().to_string()),
    ]))
}

pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    let design = config.design()?;
    let sweep = design.sweep(&config.grid)?;
    Ok(vec![
        config.write("sweep.csv", &sweep_csv(&sweep))?,
        config.write("summary.txt", &sweep_summary(&design, &sweep)?)?,
    ])
}

pub fn cmd_mc(config: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    let report = mc_run(&config.design()?, &config.mc, &config.grid)?;
    let summary: String = report.summary_lines().iter().map(|l| format!("{l}\n")).collect();
    Ok(vec![
        config.write("mc.csv", &report.to_csv())?,
        config.write("mc_summary.txt", &summary)?,
    ])
}

/// Latency probe: 4096 samples (so the bins avoid round crossover
/// frequencies), Schroeder tones across the grid.
const PROBE_LEN: usize = 4096;

/// Bulk delay of `H_LF + H_HF` from the circular cross-correlation of a
/// steady-state broadband probe with the reconstructed sum. Tones at which the
/// network is singular (a lossless resonance landing on a bin) are dropped.
pub fn measure_latency_s(design: &Design, f_s: f64, grid: &FrequencyGrid) -> Result<f64, Error> {
    let duration = PROBE_LEN as f64 / f_s;
    let f_hi = grid.f_max.min(0.49 * f_s);
    let probe = ToneSpec::schroeder(grid.f_min, f_hi, duration);
    let mut kept = Vec::new();
    let mut h = Vec::new();
    for t in probe.tones {
        match design.transfer_at(t.freq) {
            Ok((lf, hf)) => {
                kept.push(t);
                h.push(lf + hf);
            }
            Err(AnalysisError::Solve { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let probe = ToneSpec::new(kept);
    let x = synth_multitone(&probe, f_s, duration)?;
    let y = branch_response_time(&probe, &h, f_s, duration)?;
    Ok(circular_xcorr_lag(&x.samples, &y.samples) as f64 / f_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareColumn {
    pub insertion_loss_db: f64,
    pub sum_phase_err_deg_max: f64,
    pub latency_ms: f64,
    pub mc_phase_dev_deg_max: f64,
}

fn compare_column(design: &Design, config: &RunConfig) -> Result<(CompareColumn, McReport), Error> {
    let sweep = design.sweep(&config.grid)?;
    let insertion_loss_db = max_insertion_loss(&sweep, Band::OutsideDecade)
        .ok_or_else(|| config_err("grid has no points outside one decade of f0"))?;
    let sum_phase_err_deg_max = match design {
        Design::Fir(d) => sweep
            .points
            .iter()
            .map(|p| phase_deg(remove_bulk_delay(p.sum, p.f, d.f_s, d.latency_samples() as f64)).abs())
            .fold(0.0, f64::max),
        _ => phase_metrics(&sweep, None)?.max_abs_sum_phase_deg,
    };
    let f_s = match design {
        Design::Fir(d) => d.f_s,
        _ => config.f_s,
    };
    let latency_ms = 1e3 * measure_latency_s(design, f_s, &config.grid)?;
    let mc = mc_run(design, &config.mc, &config.grid)?;
    Ok((
        CompareColumn {
            insertion_loss_db,
            sum_phase_err_deg_max,
            latency_ms,
            mc_phase_dev_deg_max: mc.phase_dev_deg.max,
        },
        mc,
    ))
}

/// Columns lc2, fir, rtr. The RTR column is non-ideal only for the
/// `rtr-nonideal` scenario.
pub fn compare_columns(config: &RunConfig) -> Result<[(&'static str, CompareColumn); 3], Error> {
    let rtr = config.rtr_design(config.scenario == Scenario::RtrNonideal)?;
    let lc2 = Design::Lc2(config.lc2_design()?.values()?);
    let fir = Design::Fir(config.fir_design()?);
    Ok([
        ("lc2", compare_column(&lc2, config)?.0),
        ("fir", compare_column(&fir, config)?.0),
        ("rtr", compare_column(&Design::Rtr(rtr), config)?.0),
    ])
}

pub const COMPARE_ROWS: [&str; 4] = [
    "insertion_loss_db",
    "sum_phase_err_deg_max",
    "latency_ms",
    "mc_phase_dev_deg_max",
];

fn row_values(c: &CompareColumn) -> [f64; 4] {
    [
        c.insertion_loss_db,
        c.sum_phase_err_deg_max,
        c.latency_ms,
        c.mc_phase_dev_deg_max,
    ]
}

pub fn compare_csv(cols: &[(&str, CompareColumn)]) -> String {
    let mut out = format!("metric,{}\n", cols.iter().map(|c| c.0).collect::<Vec<_>>().join(","));
    for (i, row) in COMPARE_ROWS.iter().enumerate() {
        let vals: Vec<String> = cols.iter().map(|c| sci(row_values(&c.1)[i])).collect();
        out.push_str(&format!("{row},{}\n", vals.join(",")));
    }
    out
}

pub fn compare_text(cols: &[(&str, CompareColumn)]) -> String {
    let mut out = String::new();
    for (name, c) in cols {
        for (row, v) in COMPARE_ROWS.iter().zip(row_values(c)) {
            out.push_str(&format!("{name}.{row}={}\n", sci(v)));
        }
    }
    out
}

pub fn cmd_compare(config: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    let cols = compare_columns(config)?;
    Ok(vec![
        config.write("compare.csv", &compare_csv(&cols))?,
        config.write("compare.txt", &compare_text(&cols))?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub input: Signal,
    pub lf: Signal,
    pub hf: Signal,
    pub sum: Signal,
    /// Relative RMS error (after delay compensation for FIR).
    pub error: f64,
    pub delay_samples: usize,
}

pub fn reconstruct(design: &Design, tones: &ToneSpec, f_s: f64, duration: f64) -> Result<Reconstruction, Error> {
    let input = synth_multitone(tones, f_s, duration)?;
    match design {
        Design::Fir(d) => {
            if d.f_s != f_s {
                return Err(config_err("FIR sample rate must match the signal rate"));
            }
            let pair = design_fir(d)?;
            let lf = fir_filter(&pair.lp, &input);
            let hf = fir_filter(&pair.hp, &input);
            let sum = lf.add(&hf)?;
            let delay = d.latency_samples();
            if input.len() <= d.n_taps {
                return Err(config_err(format!(
                    "record of {} samples is too short for {} taps",
                    input.len(),
                    d.n_taps
                )));
            }
            // interior only: the first N outputs still see the zero initial state
            let range = d.n_taps..input.len();
            let reference: Vec<f64> = range.clone().map(|n| input.samples[n - delay]).collect();
            let residual: Vec<f64> = range.map(|n| sum.samples[n] - input.samples[n - delay]).collect();
            let denom = rms(&reference);
            if denom == 0.0 {
                return Err(TimeDomainError::ZeroInput.into());
            }
            Ok(Reconstruction {
                error: rms(&residual) / denom,
                input,
                lf,
                hf,
                sum,
                delay_samples: delay,
            })
        }
        _ => {
            let (h_lf, h_hf): (Vec<Complex64>, Vec<Complex64>) = tones
                .tones
                .iter()
                .map(|t| design.transfer_at(t.freq))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .unzip();
            let lf = branch_response_time(tones, &h_lf, f_s, duration)?;
            let hf = branch_response_time(tones, &h_hf, f_s, duration)?;
            let sum = lf.add(&hf)?;
            Ok(Reconstruction {
                error: reconstruct_error(&input, &lf, &hf)?,
                input,
                lf,
                hf,
                sum,
                delay_samples: 0,
            })
        }
    }
}

pub fn cmd_recon(config: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    let design = config.design()?;
    let r = reconstruct(&design, &config.tones, config.f_s, config.duration)?;
    let eps: Vec<f64> = match &design {
        Design::Fir(_) => Vec::new(),
        _ => config
            .tones
            .tones
            .iter()
            .map(|t| design.transfer_at(t.freq).map(|(a, b)| (a + b - 1.0).norm()))
            .collect::<Result<_, _>>()?,
    };
    let summary = kv(&[
        ("topology", design.name().into()),
        ("f_s_hz", sci(config.f_s)),
        ("duration_s", sci(config.duration)),
        ("samples", r.input.len().to_string()),
        (
            "tones_hz",
            config.tones.frequencies().iter().map(|f| sci(*f)).collect::<Vec<_>>().join(";"),
        ),
        ("delay_samples", r.delay_samples.to_string()),
        ("relative_rms_error", sci(r.error)),
        ("max_tone_eps", sci(eps.iter().copied().fold(0.0, f64::max))),
    ]);
    Ok(vec![
        config.write("input.csv", &r.input.to_csv())?,
        config.write("lf.csv", &r.lf.to_csv())?,
        config.write("hf.csv", &r.hf.to_csv())?,
        config.write("sum.csv", &r.sum.to_csv())?,
        config.write("recon_summary.txt", &summary)?,
    ])
}

/// Run a parsed command line; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, Error> {
    match &cli.command {
        Command::Sweep(a) => cmd_sweep(&a.resolve()?),
        Command::Mc(a) => cmd_mc(&a.resolve()?),
        Command::Compare(a) => cmd_compare(&a.resolve()?),
        Command::Recon(a) => cmd_recon(&a.resolve()?),
    }
}
