//! Single-photon spectral states and probe mode functions on a discretized
//! frequency axis.
//!
//! Every spectral object carries a shared [`FrequencyGrid`]; integrals over
//! frequency become weighted sums `Σᵢ wᵢ f(ωᵢ)` with trapezoidal weights.
//! Mode functions are normalized and density matrices have unit trace with
//! respect to those weights, so the invariants hold exactly on the grid
//! regardless of how much of the continuum was cut off.

mod json;

pub use json::{GridJson, ModeFile, ComplexVecJson, ComplexMatJson, StateFile, SCHEMA_VERSION};

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Unit-norm tolerance for mode functions.
pub const NORM_TOL: f64 = 1e-10;
/// Hermiticity tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Unit-trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of the weight-symmetrized density matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Mixture probabilities must sum to one within this tolerance.
pub const PROBABILITY_SUM_TOL: f64 = 1e-10;

/// Imaginary residue of an overlap below which it is dropped silently.
pub const IMAG_SILENT: f64 = 1e-10;
/// Imaginary residue of an overlap above which it is an error.
pub const IMAG_ERROR: f64 = 1e-8;

/// Minimum sampling density accepted by [`make_gaussian_mode`].
pub const MIN_POINTS_PER_SIGMA: f64 = 8.0;

/// Discretized angular-frequency axis with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl FrequencyGrid {
    /// Grid with explicit weights, e.g. read back from a state file.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidGrid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid("non-finite frequency".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "points must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidGrid("weights must be positive".into()));
        }
        Ok(FrequencyGrid { points, weights })
    }

    /// Trapezoidal weights for an arbitrary (possibly nonuniform) set of points.
    pub fn trapezoid(points: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {n}"
            )));
        }
        let weights = (0..n)
            .map(|i| {
                let left = if i > 0 { points[i] - points[i - 1] } else { 0.0 };
                let right = if i + 1 < n { points[i + 1] - points[i] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect();
        Self::new(points, weights)
    }

    /// `n` equally spaced points on `[lo, hi]`, trapezoidal weights.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || n < 2 {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs lo < hi and n >= 2 (lo={lo}, hi={hi}, n={n})"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let points = (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
            .collect();
        Self::trapezoid(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Largest spacing between neighbouring points whose interval touches `[lo, hi]`.
    fn max_spacing_within(&self, lo: f64, hi: f64) -> f64 {
        self.points
            .windows(2)
            .filter(|w| w[1] >= lo && w[0] <= hi)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

fn same_grid(a: &Arc<FrequencyGrid>, b: &Arc<FrequencyGrid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Complex spectral amplitude `u(ω)` sampled on a grid, unit quadrature norm.
#[derive(Debug, Clone)]
pub struct ModeFunction {
    grid: Arc<FrequencyGrid>,
    amplitudes: Vec<Complex64>,
}

impl ModeFunction {
    /// Wraps amplitudes that are already normalized on `grid`.
    pub fn new(grid: Arc<FrequencyGrid>, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_len(&grid, amplitudes.len())?;
        let norm = quadrature_norm_sq(&grid, &amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "mode norm is {norm}, expected 1"
            )));
        }
        Ok(ModeFunction { grid, amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm on `grid`.
    pub fn normalized(grid: Arc<FrequencyGrid>, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_len(&grid, amplitudes.len())?;
        let norm = quadrature_norm_sq(&grid, &amplitudes);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidState(format!(
                "cannot normalize mode with squared norm {norm}"
            )));
        }
        let scale = norm.sqrt().recip();
        let amplitudes = amplitudes.into_iter().map(|a| a * scale).collect();
        Ok(ModeFunction { grid, amplitudes })
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `Σᵢ wᵢ |uᵢ|²`.
    pub fn norm_sq(&self) -> f64 {
        quadrature_norm_sq(&self.grid, &self.amplitudes)
    }

    /// Quadrature inner product `⟨self|other⟩ = Σᵢ wᵢ conj(selfᵢ) otherᵢ`.
    pub fn inner(&self, other: &ModeFunction) -> Result<Complex64> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .grid
            .weights()
            .iter()
            .zip(&self.amplitudes)
            .zip(&other.amplitudes)
            .map(|((w, a), b)| a.conj() * b * *w)
            .sum())
    }

    /// The same pulse delayed by `tau`: `u(ω) e^{iωτ}`.
    pub fn delayed(&self, tau: f64) -> ModeFunction {
        let amplitudes = self
            .grid
            .points()
            .iter()
            .zip(&self.amplitudes)
            .map(|(w, a)| a * Complex64::from_polar(1.0, w * tau))
            .collect();
        ModeFunction {
            grid: Arc::clone(&self.grid),
            amplitudes,
        }
    }

    /// Multiplies by a global phase `e^{iφ}`.
    pub fn with_phase(&self, phi: f64) -> ModeFunction {
        let phase = Complex64::from_polar(1.0, phi);
        ModeFunction {
            grid: Arc::clone(&self.grid),
            amplitudes: self.amplitudes.iter().map(|a| a * phase).collect(),
        }
    }
}

/// Probe-mode delay, `u(ω) → u(ω) e^{iωτ}`.
pub fn delay_mode(u: &ModeFunction, tau: f64) -> ModeFunction {
    u.delayed(tau)
}

fn check_len(grid: &FrequencyGrid, n: usize) -> Result<()> {
    if grid.len() != n {
        return Err(Error::InvalidState(format!(
            "{n} values for a grid of {} points",
            grid.len()
        )));
    }
    Ok(())
}

fn quadrature_norm_sq(grid: &FrequencyGrid, amplitudes: &[Complex64]) -> f64 {
    grid.weights()
        .iter()
        .zip(amplitudes)
        .map(|(w, a)| w * a.norm_sqr())
        .sum()
}

/// Single-photon spectral density matrix `ρᵢⱼ = ρ(ωᵢ, ωⱼ)`.
#[derive(Debug, Clone)]
pub struct SpectralDensityMatrix {
    grid: Arc<FrequencyGrid>,
    entries: DMatrix<Complex64>,
}

impl SpectralDensityMatrix {
    /// Validates Hermiticity, unit quadrature trace and positivity.
    pub fn new(grid: Arc<FrequencyGrid>, entries: DMatrix<Complex64>) -> Result<Self> {
        let n = grid.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidState(format!(
                "density matrix is {}x{}, grid has {n} points",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..=i {
                let d = entries[(i, j)] - entries[(j, i)].conj();
                if d.norm() > HERMITIAN_TOL {
                    return Err(Error::InvalidState(format!(
                        "not Hermitian at ({i}, {j}): deviation {:e}",
                        d.norm()
                    )));
                }
            }
        }
        let rho = SpectralDensityMatrix { grid, entries };
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "not positive semidefinite: smallest eigenvalue {min_eig:e}"
            )));
        }
        Ok(rho)
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Quadrature trace `Σᵢ wᵢ Re ρᵢᵢ`.
    pub fn trace(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.entries[(i, i)].re)
            .sum()
    }

    /// Smallest eigenvalue of `√wᵢ ρᵢⱼ √wⱼ`, the operator whose spectrum is physical.
    pub fn min_eigenvalue(&self) -> f64 {
        let sqrt_w: Vec<f64> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let n = sqrt_w.len();
        let sym = DMatrix::from_fn(n, n, |i, j| self.entries[(i, j)] * (sqrt_w[i] * sqrt_w[j]));
        sym.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        purity(self)
    }

    /// Overlap with a probe mode; see [`overlap_t`].
    pub fn overlap(&self, u: &ModeFunction) -> Result<f64> {
        overlap_t(self, u)
    }
}

/// Gaussian test pulse: centre `ω₀`, intensity width `σ`, delay `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPulseSpec {
    pub center: f64,
    pub width: f64,
    pub delay: f64,
}

impl GaussianPulseSpec {
    pub fn new(center: f64, width: f64, delay: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::param("width", width, "must be positive"));
        }
        if !center.is_finite() || !delay.is_finite() {
            return Err(Error::param("center/delay", f64::NAN, "must be finite"));
        }
        Ok(GaussianPulseSpec {
            center,
            width,
            delay,
        })
    }
}

/// Samples `exp(−(ω−ω₀)²/(4σ²)) e^{iωτ}` on `grid` and renormalizes it there.
///
/// `|u|²` is then a Gaussian of standard deviation `σ`, and the overlap of a
/// pulse with its copy delayed by `τ` is `exp(−σ²τ²)`.
pub fn make_gaussian_mode(spec: GaussianPulseSpec, grid: &Arc<FrequencyGrid>) -> Result<ModeFunction> {
    let GaussianPulseSpec {
        center,
        width,
        delay,
    } = GaussianPulseSpec::new(spec.center, spec.width, spec.delay)?;
    let lo = center - 5.0 * width;
    let hi = center + 5.0 * width;
    let spacing = grid.max_spacing_within(lo, hi);
    let points_per_sigma = width / spacing;
    if points_per_sigma < MIN_POINTS_PER_SIGMA {
        return Err(Error::Resolution {
            points_per_sigma,
            required: MIN_POINTS_PER_SIGMA,
        });
    }
    if grid.lo() > lo || grid.hi() < hi {
        log::warn!(
            "grid [{}, {}] does not span centre ± 5 sigma [{lo}, {hi}]",
            grid.lo(),
            grid.hi()
        );
    }
    let amplitudes = grid
        .points()
        .iter()
        .map(|&w| {
            let envelope = (-(w - center).powi(2) / (4.0 * width * width)).exp();
            Complex64::from_polar(envelope, w * delay)
        })
        .collect();
    ModeFunction::normalized(Arc::clone(grid), amplitudes)
}

/// `ρ = |u⟩⟨u|`.
pub fn pure_state(u: &ModeFunction) -> SpectralDensityMatrix {
    let a = u.amplitudes();
    let n = a.len();
    SpectralDensityMatrix {
        grid: Arc::clone(u.grid()),
        entries: DMatrix::from_fn(n, n, |i, j| a[i] * a[j].conj()),
    }
}

/// Convex combination `Σₖ qₖ ρₖ`.
pub fn mix_states(components: &[(f64, &SpectralDensityMatrix)]) -> Result<SpectralDensityMatrix> {
    let Some((_, first)) = components.first() else {
        return Err(Error::InvalidState("empty mixture".into()));
    };
    let grid = Arc::clone(first.grid());
    let mut sum = 0.0;
    for (q, rho) in components {
        if !(*q >= 0.0 && q.is_finite()) {
            return Err(Error::param("probability", *q, "must be non-negative"));
        }
        if !same_grid(&grid, rho.grid()) {
            return Err(Error::GridMismatch);
        }
        sum += q;
    }
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::ProbabilitySum { sum });
    }
    let n = grid.len();
    let mut entries = DMatrix::<Complex64>::zeros(n, n);
    for (q, rho) in components {
        entries += rho.entries() * Complex64::from(*q);
    }
    Ok(SpectralDensityMatrix { grid, entries })
}

/// Mode overlap `T = Σᵢⱼ wᵢ wⱼ conj(uᵢ) ρᵢⱼ uⱼ`.
///
/// The imaginary part is roundoff for valid inputs: it is dropped below
/// [`IMAG_SILENT`], dropped with a warning up to [`IMAG_ERROR`], and rejected
/// above that.
pub fn overlap_t(rho: &SpectralDensityMatrix, u: &ModeFunction) -> Result<f64> {
    if !same_grid(rho.grid(), u.grid()) {
        return Err(Error::GridMismatch);
    }
    let w = rho.grid().weights();
    let a = u.amplitudes();
    let weighted: Vec<Complex64> = a.iter().zip(w).map(|(ai, wi)| ai * *wi).collect();
    let mut t = Complex64::new(0.0, 0.0);
    for (i, wi_ui) in weighted.iter().enumerate() {
        let row: Complex64 = rho
            .entries()
            .row(i)
            .iter()
            .zip(&weighted)
            .map(|(r, wu)| r * wu)
            .sum();
        t += wi_ui.conj() * row;
    }
    let imag = t.im.abs();
    if imag > IMAG_ERROR {
        return Err(Error::ComplexResidue { imag: t.im });
    }
    if imag > IMAG_SILENT {
        log::warn!("overlap carries imaginary residue {:e}; clamped", t.im);
    }
    Ok(t.re.clamp(0.0, 1.0))
}

/// `Tr ρ² = Σᵢⱼ wᵢ wⱼ |ρᵢⱼ|²`.
pub fn purity(rho: &SpectralDensityMatrix) -> f64 {
    let w = rho.grid().weights();
    let n = w.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += w[i] * w[j] * rho.entries()[(i, j)].norm_sqr();
        }
    }
    acc
}
