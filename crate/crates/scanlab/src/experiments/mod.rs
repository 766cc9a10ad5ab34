pub mod bipartite;
pub mod common;
pub mod coupling_scan;
pub mod echo_series;
pub mod equilibrate;
pub mod hbar_scan;
pub mod rmt_check;
