//! Complex modified nodal analysis at a single angular frequency.
//!
//! Unknowns are ordered deterministically: non-ground node voltages in order
//! of first appearance, then inductor branch currents in file order, then
//! source branch currents in file order. Branch currents flow from the first
//! node to the second through the element. Coupled inductors use the dot
//! convention "dotted terminal is the first node listed", so a positive `k`
//! adds `+jωM·I_other` to each winding voltage.

use std::collections::HashMap;

use indexmap::IndexMap;
use num_complex::Complex64;
use thiserror::Error;

use crate::lu::{DenseMatrix, LuFactors};
use crate::netlist::{Circuit, Element, ElementKind, GROUND};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MnaError {
    #[error("circuit has no elements")]
    EmptyCircuit,
    #[error("angular frequency must be positive, got {0}")]
    NonPositiveOmega(f64),
    #[error("circuit has no AC source")]
    NoSource,
    #[error("floating node(s) with no path to ground: {}", .0.join(", "))]
    FloatingNodes(Vec<String>),
    #[error("coupling '{coupling}' does not reference an inductor named '{inductor}'")]
    InvalidCoupling { coupling: String, inductor: String },
    #[error("singular system at f = {freq_hz} Hz (smallest pivot {pivot:e} at unknown {unknown})")]
    Singular {
        freq_hz: f64,
        pivot: f64,
        unknown: String,
    },
    #[error("solution does not belong to this circuit: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unknown {
    NodeVoltage(String),
    BranchCurrent(String),
}

impl std::fmt::Display for Unknown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unknown::NodeVoltage(n) => write!(f, "v({n})"),
            Unknown::BranchCurrent(e) => write!(f, "i({e})"),
        }
    }
}

/// Assembled `A·x = b` together with the meaning of each unknown.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    pub matrix: DenseMatrix,
    pub rhs: Vec<Complex64>,
    pub unknowns: Vec<Unknown>,
    pub omega: f64,
}

impl MnaSystem {
    pub fn dim(&self) -> usize {
        self.unknowns.len()
    }

    pub fn node_count(&self) -> usize {
        self.unknowns
            .iter()
            .filter(|u| matches!(u, Unknown::NodeVoltage(_)))
            .count()
    }
}

/// Mutual inductance between two windings.
#[derive(Debug, Clone, PartialEq)]
pub struct MutualGroup {
    pub inductors: (String, String),
    pub l1: f64,
    pub l2: f64,
    pub m: f64,
}

/// `M = k·sqrt(L1·L2)`.
pub fn mutual_inductance(k: f64, l1: f64, l2: f64) -> f64 {
    k * (l1 * l2).sqrt()
}

/// Resolve every coupling card of `circuit` into its mutual inductance.
pub fn mutual_groups(circuit: &Circuit) -> Result<Vec<MutualGroup>, MnaError> {
    let inductor = |coupling: &Element, name: &str| {
        circuit
            .element(name)
            .filter(|e| e.kind == ElementKind::Inductor)
            .map(|e| (e.name.clone(), e.value))
            .ok_or_else(|| MnaError::InvalidCoupling {
                coupling: coupling.name.clone(),
                inductor: name.to_string(),
            })
    };
    circuit
        .elements
        .iter()
        .filter(|e| e.kind == ElementKind::Coupling)
        .map(|k| {
            let (a, la) = inductor(k, &k.nodes[0])?;
            let (b, lb) = inductor(k, &k.nodes[1])?;
            Ok(MutualGroup {
                inductors: (a, b),
                l1: la,
                l2: lb,
                m: mutual_inductance(k.value, la, lb),
            })
        })
        .collect()
}

/// Stamp `circuit` at angular frequency `omega`.
pub fn assemble(circuit: &Circuit, omega: f64) -> Result<MnaSystem, MnaError> {
    if circuit.elements.is_empty() {
        return Err(MnaError::EmptyCircuit);
    }
    if omega.is_nan() || omega <= 0.0 {
        return Err(MnaError::NonPositiveOmega(omega));
    }
    if circuit.sources().next().is_none() {
        return Err(MnaError::NoSource);
    }
    let floating = circuit.floating_nodes();
    if !floating.is_empty() {
        return Err(MnaError::FloatingNodes(floating));
    }

    let nodes = circuit.nodes();
    let node_index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut unknowns: Vec<Unknown> = nodes.iter().cloned().map(Unknown::NodeVoltage).collect();

    let mut branch_index: HashMap<String, usize> = HashMap::new();
    for kind in [ElementKind::Inductor, ElementKind::AcSource] {
        for e in circuit.elements.iter().filter(|e| e.kind == kind) {
            branch_index.insert(e.name.to_ascii_uppercase(), unknowns.len());
            unknowns.push(Unknown::BranchCurrent(e.name.clone()));
        }
    }

    let n = unknowns.len();
    let mut a = DenseMatrix::zeros(n);
    let mut b = vec![ZERO; n];
    let node = |name: &str| -> Option<usize> {
        if name == GROUND {
            None
        } else {
            Some(node_index[name])
        }
    };
    let jw = Complex64::new(0.0, omega);

    let stamp_admittance = |a: &mut DenseMatrix, p: Option<usize>, q: Option<usize>, y: Complex64| {
        if let Some(p) = p {
            a.add(p, p, y);
        }
        if let Some(q) = q {
            a.add(q, q, y);
        }
        if let (Some(p), Some(q)) = (p, q) {
            a.add(p, q, -y);
            a.add(q, p, -y);
        }
    };
    let stamp_branch = |a: &mut DenseMatrix, p: Option<usize>, q: Option<usize>, row: usize| {
        // KCL contribution of the branch current and the branch's node-voltage terms
        if let Some(p) = p {
            a.add(p, row, Complex64::new(1.0, 0.0));
            a.add(row, p, Complex64::new(1.0, 0.0));
        }
        if let Some(q) = q {
            a.add(q, row, Complex64::new(-1.0, 0.0));
            a.add(row, q, Complex64::new(-1.0, 0.0));
        }
    };

    for e in circuit.elements.iter().filter(|e| e.is_branch()) {
        let p = node(&e.nodes[0]);
        let q = node(&e.nodes[1]);
        match e.kind {
            ElementKind::Resistor => stamp_admittance(&mut a, p, q, Complex64::new(1.0 / e.value, 0.0)),
            ElementKind::Capacitor => stamp_admittance(&mut a, p, q, jw * e.value),
            ElementKind::Inductor => {
                let row = branch_index[&e.name.to_ascii_uppercase()];
                stamp_branch(&mut a, p, q, row);
                a.add(row, row, -jw * e.value);
            }
            ElementKind::AcSource => {
                let row = branch_index[&e.name.to_ascii_uppercase()];
                stamp_branch(&mut a, p, q, row);
                b[row] = Complex64::from_polar(e.value, e.phase_deg.to_radians());
            }
            ElementKind::Coupling => {}
        }
    }

    for group in mutual_groups(circuit)? {
        let ra = branch_index[&group.inductors.0.to_ascii_uppercase()];
        let rb = branch_index[&group.inductors.1.to_ascii_uppercase()];
        a.add(ra, rb, -jw * group.m);
        a.add(rb, ra, -jw * group.m);
    }

    Ok(MnaSystem {
        matrix: a,
        rhs: b,
        unknowns,
        omega,
    })
}

/// Node voltages and branch currents at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct AcSolution {
    pub omega: f64,
    pub node_voltages: IndexMap<String, Complex64>,
    /// Currents of inductors and sources, keyed by element name.
    pub branch_currents: IndexMap<String, Complex64>,
    /// Largest over smallest LU pivot magnitude.
    pub condition_estimate: f64,
}

impl AcSolution {
    /// Voltage at `node`; ground is 0, unknown nodes are `None`.
    pub fn voltage(&self, node: &str) -> Option<Complex64> {
        if node == GROUND {
            Some(ZERO)
        } else {
            self.node_voltages.get(node).copied()
        }
    }

    pub fn freq_hz(&self) -> f64 {
        self.omega / std::f64::consts::TAU
    }
}

pub fn solve_ac(circuit: &Circuit, omega: f64) -> Result<AcSolution, MnaError> {
    let system = assemble(circuit, omega)?;
    let lu = LuFactors::factor(system.matrix.clone()).map_err(|s| MnaError::Singular {
        freq_hz: omega / std::f64::consts::TAU,
        pivot: s.pivot,
        unknown: system.unknowns[s.column].to_string(),
    })?;
    let x = lu.solve(&system.rhs);

    let mut node_voltages = IndexMap::new();
    let mut branch_currents = IndexMap::new();
    for (u, v) in system.unknowns.iter().zip(x) {
        match u {
            Unknown::NodeVoltage(n) => {
                node_voltages.insert(n.clone(), v);
            }
            Unknown::BranchCurrent(e) => {
                branch_currents.insert(e.clone(), v);
            }
        }
    }
    Ok(AcSolution {
        omega,
        node_voltages,
        branch_currents,
        condition_estimate: lu.pivot_ratio(),
    })
}

/// Branch voltage (first node minus second) and current through `element`,
/// in associated reference directions.
pub fn element_phasors(
    element: &Element,
    solution: &AcSolution,
) -> Result<(Complex64, Complex64), MnaError> {
    let voltage = |n: &str| {
        solution
            .voltage(n)
            .ok_or_else(|| MnaError::Mismatch(format!("node '{n}' missing from solution")))
    };
    let v = voltage(&element.nodes[0])? - voltage(&element.nodes[1])?;
    let i = match element.kind {
        ElementKind::Resistor => v / element.value,
        ElementKind::Capacitor => v * Complex64::new(0.0, solution.omega * element.value),
        ElementKind::Inductor | ElementKind::AcSource => solution
            .branch_currents
            .get(&element.name)
            .copied()
            .ok_or_else(|| {
                MnaError::Mismatch(format!("branch current of '{}' missing", element.name))
            })?,
        ElementKind::Coupling => {
            return Err(MnaError::Mismatch("coupling cards carry no branch".into()))
        }
    };
    Ok((v, i))
}

/// Complex-power bookkeeping for one solved frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBalance {
    /// Σ V·conj(I) over every branch; zero by Tellegen's theorem.
    pub residual: Complex64,
    /// Complex power delivered by the sources.
    pub source: Complex64,
    /// Real power absorbed by resistors.
    pub dissipated: f64,
}

impl PowerBalance {
    /// `|residual| / |S_source|`.
    pub fn relative_residual(&self) -> f64 {
        let s = self.source.norm();
        if s == 0.0 {
            if self.residual.norm() == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.residual.norm() / s
        }
    }
}

pub fn power_balance(solution: &AcSolution, circuit: &Circuit) -> Result<PowerBalance, MnaError> {
    if circuit.nodes().len() != solution.node_voltages.len() {
        return Err(MnaError::Mismatch(format!(
            "circuit has {} nodes, solution has {}",
            circuit.nodes().len(),
            solution.node_voltages.len()
        )));
    }
    let mut residual = ZERO;
    let mut source = ZERO;
    let mut dissipated = 0.0;
    for e in circuit.elements.iter().filter(|e| e.is_branch()) {
        let (v, i) = element_phasors(e, solution)?;
        let s = v * i.conj();
        residual += s;
        match e.kind {
            ElementKind::AcSource => source -= s,
            ElementKind::Resistor => dissipated += s.re,
            _ => {}
        }
    }
    Ok(PowerBalance {
        residual,
        source,
        dissipated,
    })
}

/// Largest absolute KCL imbalance over all non-ground nodes.
pub fn kcl_residual(solution: &AcSolution, circuit: &Circuit) -> Result<f64, MnaError> {
    let mut sums: IndexMap<&str, Complex64> = solution
        .node_voltages
        .keys()
        .map(|k| (k.as_str(), ZERO))
        .collect();
    for e in circuit.elements.iter().filter(|e| e.is_branch()) {
        let (_, i) = element_phasors(e, solution)?;
        if let Some(s) = sums.get_mut(e.nodes[0].as_str()) {
            *s += i;
        }
        if let Some(s) = sums.get_mut(e.nodes[1].as_str()) {
            *s -= i;
        }
    }
    Ok(sums.values().map(|s| s.norm()).fold(0.0, f64::max))
}

/// Largest branch-current magnitude, the scale for [`kcl_residual`].
pub fn max_branch_current(solution: &AcSolution, circuit: &Circuit) -> Result<f64, MnaError> {
    let mut max: f64 = 0.0;
    for e in circuit.elements.iter().filter(|e| e.is_branch()) {
        max = max.max(element_phasors(e, solution)?.1.norm());
    }
    Ok(max)
}
