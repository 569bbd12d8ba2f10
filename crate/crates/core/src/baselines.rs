//! Model-based reference transceiver: Gray-labelled 4-QAM, least-squares
//! beampattern synthesis, the two-beam ISAC combiner, the MAP ratio test
//! detector with grid angle search, and the coherent ML symbol detector.

use nalgebra::{DMatrix, DVector};
use ndarray::linalg::general_mat_mul;
use ndarray::Array2;

use crate::error::{IsacError, Result};
use crate::signal::{ArrayGeometry, ComplexVec, C64};

/// `{(±1 ± j)/√2}` with Gray labels: 0 → (1+j), 1 → (−1+j), 2 → (1−j), 3 → (−1−j).
pub fn qam4_constellation() -> [C64; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [C64::new(s, s), C64::new(-s, s), C64::new(s, -s), C64::new(-s, -s)]
}

pub fn qam4_map(message: usize) -> Result<C64> {
    qam4_constellation()
        .get(message)
        .copied()
        .ok_or_else(|| IsacError::InvalidArgument(format!("4-QAM message {message} out of range")))
}

/// Nearest scaled constellation point, `argmin_m |z − κ x_m|²`; ties go to
/// the lowest index.
pub fn ml_comm_detect(z: C64, csi: C64, constellation: &[C64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (m, x) in constellation.iter().enumerate() {
        let d = (z - csi * x).norm_sqr();
        if d < best_d {
            best_d = d;
            best = m;
        }
    }
    best
}

/// Desired-beampattern problem on an angular grid.
#[derive(Clone, Debug)]
pub struct BeamSynthesisSpec {
    pub grid: Vec<f64>,
    pub sector: (f64, f64),
    pub geometry: ArrayGeometry,
}

impl BeamSynthesisSpec {
    /// Uniform grid of `n_grid` points over `[−π/2, π/2]`.
    pub fn uniform(geometry: ArrayGeometry, sector: (f64, f64), n_grid: usize) -> Self {
        let half = std::f64::consts::FRAC_PI_2;
        let step = 2.0 * half / (n_grid - 1) as f64;
        let grid = (0..n_grid).map(|i| -half + step * i as f64).collect();
        Self { grid, sector, geometry }
    }

    /// 1° grid, 181 points.
    pub fn one_degree(geometry: ArrayGeometry, sector: (f64, f64)) -> Self {
        Self::uniform(geometry, sector, 181)
    }

    /// Target amplitudes: `K` inside the sector, 0 outside.
    pub fn desired(&self) -> Vec<f64> {
        // tolerance keeps sector edges that land on the grid inside
        let tol = 1e-9;
        let k = self.geometry.num_elements() as f64;
        self.grid
            .iter()
            .map(|t| {
                if *t >= self.sector.0 - tol && *t <= self.sector.1 + tol {
                    k
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `‖b − Aᵀy‖²`.
    pub fn residual(&self, y: &[C64]) -> f64 {
        self.residual_against(&self.desired().iter().map(|b| C64::new(*b, 0.0)).collect::<Vec<_>>(), y)
    }

    fn residual_against(&self, b: &[C64], y: &[C64]) -> f64 {
        self.grid
            .iter()
            .zip(b)
            .map(|(t, bi)| (bi - self.geometry.steering_vector(*t).dot(y)).norm_sqr())
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IsacError::InvalidArgument(
                "synthesis grid must be strictly increasing".into(),
            ));
        }
        if self.grid.len() < self.geometry.num_elements() {
            return Err(IsacError::InvalidArgument(format!(
                "synthesis grid has {} points, needs at least K = {}",
                self.grid.len(),
                self.geometry.num_elements()
            )));
        }
        Ok(())
    }
}

const LS_RIDGE: f64 = 1e-9;

/// Unnormalised least-squares solution `(A* Aᵀ + εI)⁻¹ A* b` for an arbitrary
/// complex target vector.
pub fn ls_solve(spec: &BeamSynthesisSpec, target: &[C64]) -> Result<ComplexVec> {
    spec.validate()?;
    if target.len() != spec.grid.len() {
        return Err(IsacError::DimensionMismatch {
            expected: spec.grid.len(),
            actual: target.len(),
        });
    }
    let k = spec.geometry.num_elements();
    let mut gram = DMatrix::<C64>::zeros(k, k);
    let mut rhs = DVector::<C64>::zeros(k);
    for (t, b) in spec.grid.iter().zip(target) {
        let a = spec.geometry.steering_vector(*t);
        for i in 0..k {
            let ai = a[i].conj();
            rhs[i] += ai * b;
            for j in 0..k {
                gram[(i, j)] += ai * a[j];
            }
        }
    }
    for i in 0..k {
        gram[(i, i)] += C64::new(LS_RIDGE, 0.0);
    }
    let chol = gram
        .cholesky()
        .ok_or(IsacError::Singular("least-squares beam synthesis"))?;
    let y = chol.solve(&rhs);
    Ok(y.iter().copied().collect())
}

/// Least-squares sector beam, normalised to unit norm.
pub fn ls_beam(spec: &BeamSynthesisSpec) -> Result<ComplexVec> {
    let b: Vec<C64> = spec.desired().iter().map(|v| C64::new(*v, 0.0)).collect();
    let y = ls_solve(spec, &b)?;
    let n = y.norm();
    if n < 1e-300 {
        return Err(IsacError::Singular("least-squares beam synthesis (zero solution)"));
    }
    Ok(y.scale(C64::new(1.0 / n, 0.0)))
}

/// Radar/communication trade-off knob of the two-beam combiner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultibeamParams {
    pub rho: f64,
    pub phi: f64,
}

impl MultibeamParams {
    pub fn new(rho: f64, phi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(IsacError::InvalidArgument(format!("rho {rho} outside [0, 1]")));
        }
        if !(0.0..2.0 * std::f64::consts::PI).contains(&phi) {
            return Err(IsacError::InvalidArgument(format!("phi {phi} outside [0, 2π)")));
        }
        Ok(Self { rho, phi })
    }

    /// `rho ∈ {0, 1/8, …, 1}` × `phi ∈ {0, π/4, …, 7π/4}`, rho-major.
    pub fn default_grid() -> Vec<Self> {
        let mut out = Vec::with_capacity(72);
        for i in 0..=8 {
            for j in 0..8 {
                out.push(Self {
                    rho: i as f64 / 8.0,
                    phi: j as f64 * std::f64::consts::PI / 4.0,
                });
            }
        }
        out
    }
}

/// `√E (√ρ y_r + √(1−ρ) e^{jφ} y_c) / ‖·‖`.
pub fn multibeam(radar: &[C64], comm: &[C64], params: MultibeamParams, energy: f64) -> Result<ComplexVec> {
    if radar.len() != comm.len() {
        return Err(IsacError::DimensionMismatch {
            expected: radar.len(),
            actual: comm.len(),
        });
    }
    let wr = params.rho.sqrt();
    let wc = C64::from_polar((1.0 - params.rho).sqrt(), params.phi);
    let mix: ComplexVec = radar.iter().zip(comm).map(|(r, c)| wr * r + wc * c).collect();
    let n = mix.norm();
    if n < 1e-12 {
        return Err(IsacError::DegenerateBeam(n));
    }
    Ok(mix.scale(C64::new(energy.sqrt() / n, 0.0)))
}

/// Closed-form gain estimate minimising the MAP objective for fixed `θ`, `y`:
/// `yᴴ a*(θ) a(θ)ᴴ z / (K |a(θ)ᵀ y|² + N₀/σ²)`.
pub fn maprt_alpha_hat(z: &[C64], angle: f64, y: &[C64], noise_psd: f64, gain_var: f64, geom: &ArrayGeometry) -> C64 {
    let a = geom.steering_vector(angle);
    let k = geom.num_elements() as f64;
    let g = a.dot(y);
    let num = g.conj() * a.inner(z);
    num / (k * g.norm_sqr() + noise_psd / gain_var)
}

/// `‖z − α a aᵀ y‖²/N₀ + |α|²/σ²`, the quantity minimised over `(α, θ)`.
pub fn maprt_objective(
    z: &[C64],
    alpha: C64,
    angle: f64,
    y: &[C64],
    noise_psd: f64,
    gain_var: f64,
    geom: &ArrayGeometry,
) -> f64 {
    let a = geom.steering_vector(angle);
    let g = alpha * a.dot(y);
    let resid: f64 = z.iter().zip(a.iter()).map(|(zk, ak)| (zk - g * ak).norm_sqr()).sum();
    resid / noise_psd + alpha.norm_sqr() / gain_var
}

/// Log MAP ratio for a fixed transmit signal, maximised over the angle grid:
/// `max_θ |a(θ)ᵀy|² |a(θ)ᴴz|² / (N₀ (K|a(θ)ᵀy|² + N₀/σ²))`.
pub fn maprt_loglr(z: &[C64], y: &[C64], noise_psd: f64, gain_var: f64, geom: &ArrayGeometry, grid: &[f64]) -> f64 {
    let k = geom.num_elements() as f64;
    grid.iter()
        .map(|t| {
            let a = geom.steering_vector(*t);
            let g = a.dot(y).norm_sqr();
            g * a.inner(z).norm_sqr() / (noise_psd * (k * g + noise_psd / gain_var))
        })
        .fold(0.0, f64::max)
}

/// MAP ratio test with the transmit signal optimised out: the statistic is
/// `max_θ |a(θ)ᴴ z|²` over a fixed angle grid.
#[derive(Clone, Debug)]
pub struct MaprtDetector {
    grid: Vec<f64>,
    num_elements: usize,
    // rows [Re aᴴ, −Im aᴴ]-style real embedding, shape (2G, 2K)
    embed: Array2<f64>,
    threshold: Option<f64>,
}

/// Uniform MAPRT angle grid resolution.
pub const MAPRT_GRID_POINTS: usize = 2001;

impl MaprtDetector {
    pub fn new(geom: &ArrayGeometry, grid: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(IsacError::InvalidArgument("MAPRT angle grid is empty".into()));
        }
        let k = geom.num_elements();
        let g = grid.len();
        let mut embed = Array2::zeros((2 * g, 2 * k));
        for (i, t) in grid.iter().enumerate() {
            let a = geom.steering_vector(*t);
            for (j, aj) in a.iter().enumerate() {
                // Re(aᴴz) = ar·zr + ai·zi ; Im(aᴴz) = ar·zi − ai·zr
                embed[[i, j]] = aj.re;
                embed[[i, k + j]] = aj.im;
                embed[[g + i, j]] = -aj.im;
                embed[[g + i, k + j]] = aj.re;
            }
        }
        Ok(Self {
            grid,
            num_elements: k,
            embed,
            threshold: None,
        })
    }

    /// `points` uniform angles over `[lo, hi]`.
    pub fn uniform(geom: &ArrayGeometry, range: (f64, f64), points: usize) -> Result<Self> {
        let grid = if points <= 1 || range.1 <= range.0 {
            vec![range.0]
        } else {
            let step = (range.1 - range.0) / (points - 1) as f64;
            (0..points).map(|i| range.0 + step * i as f64).collect()
        };
        Self::new(geom, grid)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = Some(threshold);
    }

    /// Statistic and grid angle estimate for one observation.
    pub fn statistic(&self, z: &[C64]) -> Result<(f64, f64)> {
        if z.len() != self.num_elements {
            return Err(IsacError::DimensionMismatch {
                expected: self.num_elements,
                actual: z.len(),
            });
        }
        let mut zs = Array2::zeros((2 * self.num_elements, 1));
        for (k, zk) in z.iter().enumerate() {
            zs[[k, 0]] = zk.re;
            zs[[self.num_elements + k, 0]] = zk.im;
        }
        Ok(self.statistic_stacked(&zs)[0])
    }

    /// Batch form: `stacked` has shape `(2K, B)`, real parts above imaginary parts.
    pub fn statistic_stacked(&self, stacked: &Array2<f64>) -> Vec<(f64, f64)> {
        let g = self.grid.len();
        // (B, 2G) so each trial's projections are contiguous
        let mut proj = Array2::zeros((stacked.ncols(), 2 * g));
        general_mat_mul(1.0, &stacked.t(), &self.embed.t(), 0.0, &mut proj);
        proj.outer_iter()
            .map(|row| {
                let (re, im) = row.as_slice().expect("standard layout").split_at(g);
                let mut best = (f64::NEG_INFINITY, 0usize);
                for i in 0..g {
                    let p = re[i].powi(2) + im[i].powi(2);
                    if p > best.0 {
                        best = (p, i);
                    }
                }
                (best.0, self.grid[best.1])
            })
            .collect()
    }

    /// Detection decision; requires a calibrated threshold.
    pub fn decide(&self, stat: f64) -> Result<bool> {
        self.threshold
            .map(|t| stat > t)
            .ok_or_else(|| IsacError::Calibration("MAPRT threshold not calibrated".into()))
    }
}

/// Stacks complex observations into the `(2K, B)` real layout.
pub fn stack_observations(zs: &[&[C64]]) -> Array2<f64> {
    let k = zs.first().map(|z| z.len()).unwrap_or(0);
    let mut out = Array2::zeros((2 * k, zs.len()));
    for (b, z) in zs.iter().enumerate() {
        for (i, zi) in z.iter().enumerate() {
            out[[i, b]] = zi.re;
            out[[k + i, b]] = zi.im;
        }
    }
    out
}
