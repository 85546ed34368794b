pub mod analytic;
pub mod cli;
pub mod design;
pub mod error;
pub mod fock_oracle;
pub mod montecarlo;
pub mod output;
pub mod spectral;
