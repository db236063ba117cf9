pub mod analysis;
pub mod cli;
pub mod format;
pub mod lu;
pub mod montecarlo;
pub mod mna;
pub mod netlist;
pub mod timedomain;
pub mod topologies;
pub mod transformer;
