//! Python bindings: `import rtr`.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rtr_core::analysis::{self, FrequencyGrid, SweepResult};
use rtr_core::cli;
use rtr_core::montecarlo::{self, ToleranceSpec};
use rtr_core::netlist;
use rtr_core::timedomain::{Tone, ToneSpec};
use rtr_core::topologies::{FirDesign, Lc2Design, RtrDesign};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A linear circuit parsed from (or emitted as) netlist text.
#[pyclass(name = "Circuit", from_py_object)]
#[derive(Clone)]
struct PyCircuit(netlist::Circuit);

#[pymethods]
impl PyCircuit {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        netlist::parse_netlist(text).map(Self).map_err(value_error)
    }

    fn to_netlist(&self) -> String {
        netlist::emit_netlist(&self.0)
    }

    fn nodes(&self) -> Vec<String> {
        self.0.nodes()
    }

    #[getter]
    fn probes(&self) -> Vec<String> {
        self.0.probes.clone()
    }

    fn __len__(&self) -> usize {
        self.0.elements.len()
    }

    fn __repr__(&self) -> String {
        format!("Circuit({} elements, {} probes)", self.0.elements.len(), self.0.probes.len())
    }
}

/// One frequency sweep of a crossover.
#[pyclass(name = "Sweep")]
struct PySweep(SweepResult);

#[pymethods]
impl PySweep {
    #[getter]
    fn topology(&self) -> String {
        self.0.topology.clone()
    }

    #[getter]
    fn f0(&self) -> Option<f64> {
        self.0.f0
    }

    #[getter]
    fn frequencies(&self) -> Vec<f64> {
        self.0.frequencies()
    }

    #[getter]
    fn h_lf(&self) -> Vec<Complex64> {
        self.0.points.iter().map(|p| p.h_lf).collect()
    }

    #[getter]
    fn h_hf(&self) -> Vec<Complex64> {
        self.0.points.iter().map(|p| p.h_hf).collect()
    }

    #[getter]
    fn eps_db(&self) -> Vec<f64> {
        self.0.points.iter().map(|p| analysis::db(p.eps.norm())).collect()
    }

    /// Worst complementarity error over the full and flat bands, in dB.
    fn complementarity<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = analysis::complementarity_report(&self.0).map_err(value_error)?;
        let d = PyDict::new(py);
        d.set_item("max_eps_full_db", r.max_eps_full_db)?;
        d.set_item("max_eps_flat_db", r.max_eps_flat_db)?;
        d.set_item("flat_points", r.flat_points)?;
        Ok(d)
    }

    fn to_csv(&self) -> String {
        cli::sweep_csv(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.points.len()
    }
}

/// A crossover under test: RTR, LC2, FIR or an arbitrary netlist.
#[pyclass(name = "Design")]
struct PyDesign(montecarlo::Design);

#[pymethods]
impl PyDesign {
    #[staticmethod]
    #[pyo3(signature = (f0=1000.0, c3=10e-6, k=1.0, r_w=0.0, r_s=0.0, c_par=0.0))]
    fn rtr(f0: f64, c3: f64, k: f64, r_w: f64, r_s: f64, c_par: f64) -> PyResult<Self> {
        let mut d = RtrDesign::from_crossover(f0, c3).map_err(value_error)?.with_losses(k, r_w, r_s);
        d.transformer.c_par = c_par;
        d.validate().map_err(value_error)?;
        Ok(Self(montecarlo::Design::Rtr(d)))
    }

    #[staticmethod]
    #[pyo3(signature = (f0=1000.0, r_load=8.0, esr_l=0.3, esr_c=0.05))]
    fn lc2(f0: f64, r_load: f64, esr_l: f64, esr_c: f64) -> PyResult<Self> {
        let d = Lc2Design {
            f0,
            r_load,
            esr_l,
            esr_c,
            ..Lc2Design::reference()
        };
        let v = d.values().map_err(value_error)?;
        Ok(Self(montecarlo::Design::Lc2(v)))
    }

    #[staticmethod]
    #[pyo3(signature = (n_taps=1023, f_cut=1000.0, f_s=48000.0))]
    fn fir(n_taps: usize, f_cut: f64, f_s: f64) -> PyResult<Self> {
        let d = FirDesign { n_taps, f_cut, f_s };
        d.validate().map_err(value_error)?;
        Ok(Self(montecarlo::Design::Fir(d)))
    }

    #[staticmethod]
    fn netlist(circuit: PyCircuit) -> Self {
        Self(montecarlo::Design::Netlist(circuit.0))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    #[getter]
    fn f0(&self) -> Option<f64> {
        self.0.f0()
    }

    #[pyo3(signature = (f_min=20.0, f_max=20000.0, n_points=500))]
    fn sweep(&self, py: Python<'_>, f_min: f64, f_max: f64, n_points: usize) -> PyResult<PySweep> {
        let grid = FrequencyGrid::log(f_min, f_max, n_points).map_err(value_error)?;
        py.detach(|| self.0.sweep(&grid)).map(PySweep).map_err(value_error)
    }

    /// Complex (H_LF, H_HF) at one frequency.
    fn transfer(&self, f: f64) -> PyResult<(Complex64, Complex64)> {
        self.0.transfer_at(f).map_err(value_error)
    }

    /// Tolerance analysis; returns the summary as a dict plus the per-sample CSV.
    #[pyo3(signature = (tol=0.05, n=200, seed=42, k_tol=None, f_min=20.0, f_max=20000.0, n_points=500))]
    #[allow(clippy::too_many_arguments)]
    fn monte_carlo<'py>(
        &self,
        py: Python<'py>,
        tol: f64,
        n: usize,
        seed: u64,
        k_tol: Option<f64>,
        f_min: f64,
        f_max: f64,
        n_points: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let grid = FrequencyGrid::log(f_min, f_max, n_points).map_err(value_error)?;
        let spec = ToleranceSpec {
            k_tol,
            ..ToleranceSpec::new(tol, n, seed)
        };
        let report = py
            .detach(|| montecarlo::mc_run(&self.0, &spec, &grid))
            .map_err(value_error)?;
        let d = PyDict::new(py);
        for line in report.summary_lines() {
            if let Some((k, v)) = line.split_once('=') {
                match v.parse::<f64>() {
                    Ok(x) => d.set_item(k, x)?,
                    Err(_) => d.set_item(k, v)?,
                }
            }
        }
        d.set_item(
            "phase_dev_deg",
            report.samples.iter().map(|s| s.phase_dev_deg).collect::<Vec<_>>(),
        )?;
        d.set_item("csv", report.to_csv())?;
        Ok(d)
    }

    /// Split a multitone through both branches and sum them again.
    #[pyo3(signature = (tones=vec![100.0, 3000.0, 8000.0], f_s=48000.0, duration=0.1))]
    fn reconstruct<'py>(
        &self,
        py: Python<'py>,
        tones: Vec<f64>,
        f_s: f64,
        duration: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let spec = ToneSpec::new(tones.into_iter().map(|f| Tone::new(f, 1.0)).collect());
        let r = py
            .detach(|| cli::reconstruct(&self.0, &spec, f_s, duration))
            .map_err(value_error)?;
        let d = PyDict::new(py);
        d.set_item("input", r.input.samples)?;
        d.set_item("lf", r.lf.samples)?;
        d.set_item("hf", r.hf.samples)?;
        d.set_item("sum", r.sum.samples)?;
        d.set_item("relative_rms_error", r.error)?;
        d.set_item("delay_samples", r.delay_samples)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        match self.0.f0() {
            Some(f0) => format!("Design({}, f0={f0} Hz)", self.0.name()),
            None => format!("Design({})", self.0.name()),
        }
    }
}

#[pyfunction]
fn parse_netlist(text: &str) -> PyResult<PyCircuit> {
    PyCircuit::parse(text)
}

#[pyfunction]
fn emit_netlist(circuit: &PyCircuit) -> String {
    circuit.to_netlist()
}

/// Lowpass and highpass FIR taps.
#[pyfunction]
#[pyo3(signature = (n_taps=1023, f_cut=1000.0, f_s=48000.0))]
fn fir_taps(n_taps: usize, f_cut: f64, f_s: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let pair = rtr_core::topologies::design_fir(&FirDesign { n_taps, f_cut, f_s }).map_err(value_error)?;
    Ok((pair.lp, pair.hp))
}

#[pymodule]
fn rtr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCircuit>()?;
    m.add_class::<PySweep>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(parse_netlist, m)?)?;
    m.add_function(wrap_pyfunction!(emit_netlist, m)?)?;
    m.add_function(wrap_pyfunction!(fir_taps, m)?)?;
    Ok(())
}
