//! Experiment planning on top of the closed-form statistics: contour grids
//! of `c_f` and `R_C(0)`, the largest correction factor reachable with dark
//! counts, the probe intensity that minimizes the relative overlap
//! uncertainty, and synthetic dip scans over pulse delay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{EffectiveParams, SetupParams};
use crate::error::{Error, Result};
use crate::output::sig9;
use crate::spectral::{overlap_t, ModeFunction, SpectralDensityMatrix};

/// Default ceiling of the probe-intensity search, in detected photons.
pub const DEFAULT_X_HI: f64 = 10.0;
/// Points in the coarse logarithmic scan of [`optimal_intensity`].
pub const COARSE_POINTS: usize = 1000;
/// Final bracket width of the golden-section refinement.
pub const REFINE_TOL: f64 = 1e-6;
/// Lowest intensity of the coarse scan, relative to the ceiling.
const COARSE_SPAN: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRange {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl ScanRange {
    pub fn new(lo: f64, hi: f64, steps: usize, spacing: Spacing) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param("range", lo, "needs finite lo < hi"));
        }
        if steps < 2 {
            return Err(Error::param("steps", steps as f64, "must be >= 2"));
        }
        if spacing == Spacing::Logarithmic && lo <= 0.0 {
            return Err(Error::param("lo", lo, "logarithmic range needs lo > 0"));
        }
        Ok(ScanRange {
            lo,
            hi,
            steps,
            spacing,
        })
    }

    pub fn linear(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        Self::new(lo, hi, steps, Spacing::Linear)
    }

    pub fn logarithmic(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        Self::new(lo, hi, steps, Spacing::Logarithmic)
    }

    /// Sample points, both ends included exactly.
    pub fn values(&self) -> Vec<f64> {
        let last = self.steps - 1;
        (0..self.steps)
            .map(|i| {
                if i == last {
                    return self.hi;
                }
                let f = i as f64 / last as f64;
                match self.spacing {
                    Spacing::Linear => self.lo + f * (self.hi - self.lo),
                    Spacing::Logarithmic => (self.lo.ln() + f * (self.hi / self.lo).ln()).exp(),
                }
            })
            .collect()
    }
}

/// One cell of a contour grid; also the CSV row layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourCell {
    #[serde(serialize_with = "sig9")]
    pub eta_p: f64,
    #[serde(serialize_with = "sig9")]
    pub eta_beta_sq: f64,
    #[serde(serialize_with = "sig9")]
    pub xi: f64,
    #[serde(serialize_with = "sig9")]
    pub c_f: f64,
    #[serde(serialize_with = "sig9")]
    pub rc0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub xi: f64,
    pub eta_p: Vec<f64>,
    pub eta_beta_sq: Vec<f64>,
    /// Row-major: all intensities for the first `ηp`, then the next.
    pub cells: Vec<ContourCell>,
}

impl ContourGrid {
    pub fn cell(&self, i: usize, j: usize) -> &ContourCell {
        &self.cells[i * self.eta_beta_sq.len() + j]
    }
}

/// `c_f` and `R_C(0)` over `ηp × η|β|²` at fixed `ξ`.
pub fn contour_grid(xr: &ScanRange, yr: &ScanRange, xi: f64) -> Result<ContourGrid> {
    let xs = xr.values();
    let ys = yr.values();
    if xr.lo < 0.0 || xr.hi > 1.0 {
        return Err(Error::param("eta_p", if xr.lo < 0.0 { xr.lo } else { xr.hi }, "must lie in [0, 1]"));
    }
    if yr.lo < 0.0 {
        return Err(Error::param("eta_beta_sq", yr.lo, "must be >= 0"));
    }
    if xi == 1.0 && yr.lo == 0.0 {
        return Err(Error::param(
            "eta_beta_sq",
            0.0,
            "zero intensity without dark counts has no correction factor",
        ));
    }
    let cells = xs
        .par_iter()
        .flat_map_iter(|&x| ys.iter().map(move |&y| (x, y)))
        .map(|(x, y)| {
            let e = EffectiveParams::new(x, y, xi)?;
            Ok(ContourCell {
                eta_p: x,
                eta_beta_sq: y,
                xi,
                c_f: e.correction_factor()?,
                rc0: e.coincidence_rate(0.0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContourGrid {
        xi,
        eta_p: xs,
        eta_beta_sq: ys,
        cells,
    })
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
///
/// Returns `(x_max, f_max)` once the bracket is narrower than `tol`.
pub fn golden_section_maximize(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxCorrection {
    pub c_f_max: f64,
    pub eta_p: f64,
    pub eta_beta_sq: f64,
    /// The maximum sits on an edge of the intensity range; for `ξ = 1` at the
    /// low edge this is the supremum `1` approached as `η|β|² → 0`.
    pub boundary: bool,
}

/// Largest correction factor over a `(ηp, η|β|²)` domain at fixed `ξ`.
///
/// Grid argmax first, then golden-section refinement in `η|β|²` between the
/// neighbours of the best cell at its `ηp`.
pub fn max_correction_factor(xi: f64, domain: (&ScanRange, &ScanRange)) -> Result<MaxCorrection> {
    let (xr, yr) = domain;
    let grid = contour_grid(xr, yr, xi)?;
    let (best, cell) = grid
        .cells
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.c_f.total_cmp(&b.1.c_f))
        .expect("grid has at least 4 cells");
    let ny = grid.eta_beta_sq.len();
    let j = best % ny;
    let eta_p = cell.eta_p;

    if j == 0 && xi == 1.0 {
        return Ok(MaxCorrection {
            c_f_max: 1.0,
            eta_p,
            eta_beta_sq: 0.0,
            boundary: true,
        });
    }

    let cf = |y: f64| {
        EffectiveParams {
            eta_p,
            eta_beta_sq: y,
            xi,
        }
        .correction_factor()
        .unwrap_or(f64::NEG_INFINITY)
    };
    let lo = grid.eta_beta_sq[j.saturating_sub(1)];
    let hi = grid.eta_beta_sq[(j + 1).min(ny - 1)];
    let (y, c) = golden_section_maximize(cf, lo, hi, 1e-9);
    let (y, c) = if c >= cell.c_f { (y, c) } else { (cell.eta_beta_sq, cell.c_f) };
    Ok(MaxCorrection {
        c_f_max: c,
        eta_p,
        eta_beta_sq: y,
        boundary: j == 0 || j == ny - 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalIntensity {
    #[serde(serialize_with = "sig9")]
    pub eta_p: f64,
    #[serde(serialize_with = "sig9")]
    pub xi: f64,
    /// Optimal detected probe intensity `η|β|²`.
    #[serde(serialize_with = "sig9")]
    pub x_star: f64,
    /// `c_f √R_C(0)` there.
    #[serde(serialize_with = "sig9")]
    pub g_star: f64,
}

/// [`optimal_intensity_with`] on `(0, 10]`.
pub fn optimal_intensity(eta_p: f64, xi: f64) -> Result<OptimalIntensity> {
    optimal_intensity_with(eta_p, xi, DEFAULT_X_HI)
}

/// Maximizes `g(x) = c_f √R_C(0)` over `x = η|β|² ∈ (0, x_hi]`.
///
/// A logarithmic scan of [`COARSE_POINTS`] points locates the global
/// maximum without assuming unimodality; golden-section search between the
/// neighbouring scan points then pins it to [`REFINE_TOL`].
pub fn optimal_intensity_with(eta_p: f64, xi: f64, x_hi: f64) -> Result<OptimalIntensity> {
    if !(eta_p > 0.0 && eta_p <= 1.0) {
        return Err(Error::param("eta_p", eta_p, "must be in (0, 1]"));
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::param("xi", xi, "must be in (0, 1]"));
    }
    if !(x_hi > 0.0 && x_hi.is_finite()) {
        return Err(Error::param("x_hi", x_hi, "must be positive"));
    }
    let g = |x: f64| {
        EffectiveParams {
            eta_p,
            eta_beta_sq: x,
            xi,
        }
        .figure_of_merit()
    };
    let xs = ScanRange::logarithmic(x_hi * COARSE_SPAN, x_hi, COARSE_POINTS)?.values();
    let gs = xs.iter().map(|&x| g(x)).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = gs.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "figure of merit is {} at eta_beta_sq = {}",
            gs[bad], xs[bad]
        )));
    }
    let j = gs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, _)| j)
        .expect("coarse scan is non-empty");
    let lo = if j == 0 { 0.0 } else { xs[j - 1] };
    let hi = xs[(j + 1).min(xs.len() - 1)];
    let (x, gx) = golden_section_maximize(|x| g(x).unwrap_or(f64::NEG_INFINITY), lo, hi, REFINE_TOL);
    let (x_star, g_star) = if gx >= gs[j] { (x, gx) } else { (xs[j], gs[j]) };
    Ok(OptimalIntensity {
        eta_p,
        xi,
        x_star,
        g_star,
    })
}

/// One delay of a dip scan; also the CSV row layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipRow {
    #[serde(serialize_with = "sig9")]
    pub tau: f64,
    #[serde(serialize_with = "sig9")]
    pub overlap: f64,
    #[serde(serialize_with = "sig9")]
    pub visibility: f64,
    #[serde(serialize_with = "sig9")]
    pub rate: f64,
}

/// Overlap, visibility and coincidence rate as the probe is delayed by each `τ`.
pub fn dip_scan(
    rho: &SpectralDensityMatrix,
    u0: &ModeFunction,
    taus: &ScanRange,
    s: &SetupParams,
) -> Result<Vec<DipRow>> {
    s.validate()?;
    let e = s.effective();
    taus.values()
        .into_par_iter()
        .map(|tau| {
            let t = overlap_t(rho, &u0.delayed(tau))?;
            Ok(DipRow {
                tau,
                overlap: t,
                visibility: e.visibility(t)?,
                rate: e.coincidence_rate(t)?,
            })
        })
        .collect()
}
