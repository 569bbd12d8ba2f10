//! Complex signal vectors, linear array geometry, steering vectors and
//! beampatterns.

use std::ops::{Deref, DerefMut};

use num_complex::Complex64;

use crate::error::{IsacError, Result};
use crate::rng::Rng;

pub type C64 = Complex64;

/// Fixed-length vector of complex baseband samples.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ComplexVec(Vec<C64>);

impl ComplexVec {
    pub fn new(values: Vec<C64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); n])
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn conj(&self) -> Self {
        Self(self.0.iter().map(|c| c.conj()).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(self.0.iter().map(|c| c * s).collect())
    }

    /// Unconjugated bilinear product `selfᵀ other`.
    pub fn dot(&self, other: &[C64]) -> C64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// Hermitian inner product `selfᴴ other`.
    pub fn inner(&self, other: &[C64]) -> C64 {
        self.0.iter().zip(other).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Real parts followed by imaginary parts.
    pub fn to_real_concat(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.re).chain(self.0.iter().map(|c| c.im)).collect()
    }

    /// Inverse of [`ComplexVec::to_real_concat`].
    pub fn from_real_concat(parts: &[f64]) -> Self {
        let n = parts.len() / 2;
        Self((0..n).map(|k| C64::new(parts[k], parts[n + k])).collect())
    }
}

impl Deref for ComplexVec {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.0
    }
}

impl DerefMut for ComplexVec {
    fn deref_mut(&mut self) -> &mut [C64] {
        &mut self.0
    }
}

impl From<Vec<C64>> for ComplexVec {
    fn from(v: Vec<C64>) -> Self {
        Self(v)
    }
}

impl FromIterator<C64> for ComplexVec {
    fn from_iter<I: IntoIterator<Item = C64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Uniform or perturbed linear array. Element 0 sits at the origin and
/// element `k` at the cumulative sum of the first `k` gaps.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    wavelength: f64,
    gaps: Vec<f64>,
    // phase slope per element: 2π p_k / λ
    phase_slopes: Vec<f64>,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, wavelength: f64, gaps: Vec<f64>) -> Result<Self> {
        if num_elements == 0 {
            return Err(IsacError::InvalidConfig("array needs at least one element".into()));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(IsacError::InvalidConfig(format!(
                "wavelength {wavelength} must be positive"
            )));
        }
        if gaps.len() != num_elements - 1 {
            return Err(IsacError::DimensionMismatch {
                expected: num_elements - 1,
                actual: gaps.len(),
            });
        }
        if let Some(g) = gaps.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(IsacError::InvalidConfig(format!("element gap {g} must be positive")));
        }
        let mut position = 0.0;
        let mut phase_slopes = Vec::with_capacity(num_elements);
        phase_slopes.push(0.0);
        for g in &gaps {
            position += g;
            phase_slopes.push(2.0 * std::f64::consts::PI * position / wavelength);
        }
        Ok(Self {
            wavelength,
            gaps,
            phase_slopes,
        })
    }

    /// Half-wavelength uniform linear array.
    pub fn nominal(num_elements: usize, wavelength: f64) -> Result<Self> {
        Self::new(
            num_elements,
            wavelength,
            vec![wavelength / 2.0; num_elements.saturating_sub(1)],
        )
    }

    pub fn num_elements(&self) -> usize {
        self.phase_slopes.len()
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn positions(&self) -> Vec<f64> {
        self.phase_slopes
            .iter()
            .map(|s| s * self.wavelength / (2.0 * std::f64::consts::PI))
            .collect()
    }

    pub fn is_nominal(&self) -> bool {
        self.gaps.iter().all(|g| *g == self.wavelength / 2.0)
    }

    /// Element `k` is `exp(-j 2π p_k sin(angle) / λ)`.
    pub fn steering_vector(&self, angle: f64) -> ComplexVec {
        let mut out = ComplexVec::zeros(self.num_elements());
        self.steering_into(angle, &mut out);
        out
    }

    /// Writes the steering vector for `angle` into `out` without allocating.
    pub fn steering_into(&self, angle: f64, out: &mut [C64]) {
        debug_assert!(angle.abs() <= std::f64::consts::FRAC_PI_2 + 1e-12);
        debug_assert_eq!(out.len(), self.num_elements());
        let s = angle.sin();
        for (o, slope) in out.iter_mut().zip(&self.phase_slopes) {
            let (sin, cos) = (-slope * s).sin_cos();
            *o = C64::new(cos, sin);
        }
    }

    /// Transmit energy toward `angle`: `|a(angle)ᵀ signal|²`.
    pub fn beampattern(&self, signal: &[C64], angle: f64) -> Result<f64> {
        if signal.len() != self.num_elements() {
            return Err(IsacError::DimensionMismatch {
                expected: self.num_elements(),
                actual: signal.len(),
            });
        }
        Ok(self.steering_vector(angle).dot(signal).norm_sqr())
    }

    /// Draws an impaired copy: every gap i.i.d. `N(λ/2, sigma²)`, rejecting
    /// nonpositive draws.
    pub fn perturb(&self, rng: &mut Rng, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(IsacError::InvalidArgument(format!(
                "gap deviation {sigma} must be nonnegative"
            )));
        }
        let half = self.wavelength / 2.0;
        let gaps = (0..self.gaps.len())
            .map(|_| loop {
                let g = half + sigma * rng.normal();
                if g > 0.0 {
                    break g;
                }
            })
            .collect();
        Self::new(self.num_elements(), self.wavelength, gaps)
    }
}

/// Nominal geometry perturbed with gap deviation `sigma_lambda` (meters).
pub fn perturb_geometry(
    rng: &mut Rng,
    num_elements: usize,
    wavelength: f64,
    sigma_lambda: f64,
) -> Result<ArrayGeometry> {
    ArrayGeometry::nominal(num_elements, wavelength)?.perturb(rng, sigma_lambda)
}

/// Circularly-symmetric complex Gaussian samples, `E|x|² = variance`.
pub fn sample_cn(rng: &mut Rng, variance: f64, n: usize) -> ComplexVec {
    let s = (variance / 2.0).sqrt();
    (0..n).map(|_| cn_scalar(rng, s)).collect()
}

/// One `CN(0, 2 s²)` draw given the per-component deviation `s`.
#[inline]
pub fn cn_scalar(rng: &mut Rng, component_std: f64) -> C64 {
    let re = rng.normal();
    let im = rng.normal();
    C64::new(component_std * re, component_std * im)
}

pub fn deg2rad(d: f64) -> f64 {
    d.to_radians()
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn broadside_is_all_ones() {
        let g = ArrayGeometry::nominal(16, 1.0).unwrap();
        for e in g.steering_vector(0.0).iter() {
            assert!(close(*e, C64::new(1.0, 0.0), 1e-15));
        }
    }

    #[test]
    fn endfire_two_elements() {
        let g = ArrayGeometry::nominal(2, 1.0).unwrap();
        let a = g.steering_vector(FRAC_PI_2);
        assert!(close(a[0], C64::new(1.0, 0.0), 1e-15));
        assert!(close(a[1], C64::new(-1.0, 0.0), 1e-12));
    }

    #[test]
    fn impaired_matches_direct_formula() {
        let mut rng = Rng::new(7, 0);
        let lambda = 0.01;
        let g = perturb_geometry(&mut rng, 16, lambda, lambda / 30.0).unwrap();
        let a = g.steering_vector(0.3);
        let mut p = 0.0;
        for k in 0..16 {
            if k > 0 {
                p += g.gaps()[k - 1];
            }
            let expected = C64::from_polar(1.0, -2.0 * PI * p * 0.3f64.sin() / lambda);
            assert!(close(a[k], expected, 1e-10), "element {k}");
        }
    }

    #[test]
    fn matched_beam_gives_array_gain() {
        let g = ArrayGeometry::nominal(16, 1.0).unwrap();
        let th = 0.2;
        let y = g.steering_vector(th).conj().scale(C64::new(0.25, 0.0));
        assert_abs_diff_eq!(g.beampattern(&y, th).unwrap(), 16.0, epsilon = 1e-10);
        assert_eq!(g.beampattern(&ComplexVec::zeros(16), th).unwrap(), 0.0);
        assert!(g.beampattern(&ComplexVec::zeros(3), th).is_err());
    }

    #[test]
    fn zero_variance_sampling() {
        let mut rng = Rng::new(3, 3);
        assert_eq!(sample_cn(&mut rng, 0.0, 4), ComplexVec::zeros(4));
        let a = sample_cn(&mut Rng::new(1, 2), 1.0, 16);
        let b = sample_cn(&mut Rng::new(1, 2), 1.0, 16);
        assert_eq!(a, b);
    }

    #[test]
    fn sample_power_converges() {
        let x = sample_cn(&mut Rng::new(1, 0), 1.0, 1_000_000);
        let p = x.norm_sqr() / x.len() as f64;
        assert!((p - 1.0).abs() < 0.01, "mean power {p}");
        let mean: C64 = x.iter().sum::<C64>() / x.len() as f64;
        assert!(mean.norm() < 0.005);
    }

    #[test]
    fn power_is_exponential_chi_square() {
        // |x|²/variance ~ Exp(1); 20 equiprobable bins.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let n = 100_000;
        let bins = 20;
        let var = 2.5;
        let x = sample_cn(&mut Rng::new(11, 4), var, n);
        let mut counts = vec![0usize; bins];
        for c in x.iter() {
            let u = 1.0 - (-c.norm_sqr() / var).exp();
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let e = n as f64 / bins as f64;
        let stat: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        let crit = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn zero_sigma_perturbation_is_nominal() {
        let mut rng = Rng::new(1, 1);
        let g = perturb_geometry(&mut rng, 16, 1.0, 0.0).unwrap();
        assert!(g.is_nominal());
        assert_eq!(g, ArrayGeometry::nominal(16, 1.0).unwrap());
    }

    #[test]
    fn perturbed_gaps_structure_and_moments() {
        let lambda = 1.0;
        let g = perturb_geometry(&mut Rng::new(42, 0), 16, lambda, lambda / 30.0).unwrap();
        assert_eq!(g.gaps().len(), 15);
        assert!(g.gaps().iter().all(|d| *d > 0.0));

        let mut rng = Rng::new(9, 1);
        let base = ArrayGeometry::nominal(2, lambda).unwrap();
        let n = 100_000;
        let mean = (0..n)
            .map(|_| base.perturb(&mut rng, lambda / 30.0).unwrap().gaps()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() / 0.5 < 0.005, "gap mean {mean}");
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ArrayGeometry::new(3, 1.0, vec![0.5, -0.1]).is_err());
        assert!(ArrayGeometry::new(3, 1.0, vec![0.5]).is_err());
        assert!(ArrayGeometry::new(3, 0.0, vec![0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn steering_unit_modulus(angle in -FRAC_PI_2..FRAC_PI_2, seed in 0u64..1000) {
            let g = perturb_geometry(&mut Rng::new(seed, 0), 16, 1.0, 1.0 / 30.0).unwrap();
            for e in g.steering_vector(angle).iter() {
                prop_assert!((e.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn nominal_steering_conjugate_symmetry(angle in -FRAC_PI_2..FRAC_PI_2) {
            let g = ArrayGeometry::nominal(16, 1.0).unwrap();
            let a = g.steering_vector(angle);
            let b = g.steering_vector(-angle);
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y.conj()).norm() < 1e-12);
            }
        }

        #[test]
        fn beampattern_matches_double_loop(angle in -FRAC_PI_2..FRAC_PI_2, seed in 0u64..1000) {
            let mut rng = Rng::new(seed, 5);
            let g = perturb_geometry(&mut rng, 16, 1.0, 1.0 / 30.0).unwrap();
            let y = sample_cn(&mut rng, 1.0, 16);
            let pos = g.positions();
            // |Σ_k a_k y_k|² = Σ_k Σ_l a_k y_k conj(a_l y_l)
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..16 {
                for l in 0..16 {
                    let ak = C64::from_polar(1.0, -2.0 * PI * pos[k] * angle.sin());
                    let al = C64::from_polar(1.0, -2.0 * PI * pos[l] * angle.sin());
                    acc += ak * y[k] * (al * y[l]).conj();
                }
            }
            let fast = g.beampattern(&y, angle).unwrap();
            prop_assert!((fast - acc.re).abs() <= 1e-10 * acc.re.abs().max(1e-12));
        }
    }
}
