//! JSON files for spectral states and probe modes.
//!
//! State file:
//! `{"schema":1, "grid":{"points":[..],"weights":[..]}, "rho":{"re":[[..]],"im":[[..]]}}`
//!
//! Mode file:
//! `{"schema":1, "grid":{..}, "mode":{"re":[..],"im":[..]}}`. The grid is
//! optional in mode files; without it the mode is read onto the grid of the
//! state it is paired with.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FrequencyGrid, ModeFunction, SpectralDensityMatrix, NORM_TOL, TRACE_TOL};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridJson {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComplexVecJson {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComplexMatJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateFile {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub grid: GridJson,
    pub rho: ComplexMatJson,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModeFile {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridJson>,
    pub mode: ComplexVecJson,
}

fn check_schema(schema: u32) -> Result<()> {
    if schema != SCHEMA_VERSION {
        return Err(Error::InvalidState(format!(
            "unsupported schema version {schema}"
        )));
    }
    Ok(())
}

impl GridJson {
    pub fn from_grid(grid: &FrequencyGrid) -> Self {
        GridJson {
            points: grid.points().to_vec(),
            weights: grid.weights().to_vec(),
        }
    }

    pub fn to_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.points.clone(), self.weights.clone())
    }
}

impl StateFile {
    pub fn from_state(rho: &SpectralDensityMatrix) -> Self {
        let m = rho.entries();
        let n = m.nrows();
        StateFile {
            schema: SCHEMA_VERSION,
            grid: GridJson::from_grid(rho.grid()),
            rho: ComplexMatJson {
                re: (0..n).map(|i| (0..n).map(|j| m[(i, j)].re).collect()).collect(),
                im: (0..n).map(|i| (0..n).map(|j| m[(i, j)].im).collect()).collect(),
            },
        }
    }

    /// Builds the validated density matrix, rescaling its trace to one.
    pub fn to_state(&self) -> Result<SpectralDensityMatrix> {
        check_schema(self.schema)?;
        let grid = Arc::new(self.grid.to_grid()?);
        let n = grid.len();
        let shape_ok = self.rho.re.len() == n
            && self.rho.im.len() == n
            && self.rho.re.iter().chain(&self.rho.im).all(|row| row.len() == n);
        if !shape_ok {
            return Err(Error::InvalidState(format!(
                "rho must be {n}x{n} in both re and im"
            )));
        }
        let mut entries =
            DMatrix::from_fn(n, n, |i, j| Complex64::new(self.rho.re[i][j], self.rho.im[i][j]));
        let trace: f64 = grid
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * entries[(i, i)].re)
            .sum();
        if !(trace > 0.0 && trace.is_finite()) {
            return Err(Error::InvalidState(format!("trace is {trace}")));
        }
        if (trace - 1.0).abs() > TRACE_TOL {
            log::warn!("state trace {trace} rescaled to 1 on the file's grid");
            entries /= Complex64::from(trace);
        }
        SpectralDensityMatrix::new(grid, entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

impl ModeFile {
    pub fn from_mode(u: &ModeFunction) -> Self {
        ModeFile {
            schema: SCHEMA_VERSION,
            grid: Some(GridJson::from_grid(u.grid())),
            mode: ComplexVecJson {
                re: u.amplitudes().iter().map(|a| a.re).collect(),
                im: u.amplitudes().iter().map(|a| a.im).collect(),
            },
        }
    }

    /// Builds the mode, normalizing it on its grid.
    ///
    /// `fallback` is used when the file carries no grid, and is shared
    /// whenever the file's grid equals it.
    pub fn to_mode(&self, fallback: Option<&Arc<FrequencyGrid>>) -> Result<ModeFunction> {
        check_schema(self.schema)?;
        let grid = match (&self.grid, fallback) {
            (Some(g), Some(fb)) => {
                let g = g.to_grid()?;
                if &g == fb.as_ref() {
                    Arc::clone(fb)
                } else {
                    Arc::new(g)
                }
            }
            (Some(g), None) => Arc::new(g.to_grid()?),
            (None, Some(fb)) => Arc::clone(fb),
            (None, None) => {
                return Err(Error::InvalidState(
                    "mode file has no grid and no state grid to fall back on".into(),
                ))
            }
        };
        if self.mode.re.len() != self.mode.im.len() {
            return Err(Error::InvalidState(
                "mode re and im lengths differ".into(),
            ));
        }
        let amps: Vec<Complex64> = self
            .mode
            .re
            .iter()
            .zip(&self.mode.im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        let u = ModeFunction::normalized(grid, amps)?;
        let raw_norm: f64 = u
            .grid()
            .weights()
            .iter()
            .zip(self.mode.re.iter().zip(&self.mode.im))
            .map(|(w, (re, im))| w * (re * re + im * im))
            .sum();
        if (raw_norm - 1.0).abs() > NORM_TOL {
            log::warn!("mode norm {raw_norm} rescaled to 1 on its grid");
        }
        Ok(u)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
