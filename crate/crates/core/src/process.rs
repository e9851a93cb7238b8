//! Independent-increment processes with the decomposition
//! `X(t) = X⊥(s;t) + X∥(s;t)`: the Ornstein-Uhlenbeck stochastic convolution
//! on the grid algebra and matrix-valued Lévy processes, together with their
//! exact Gaussian laws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{Algebra, AlgebraElement, AlgebraTag, FilipovicGeometry};
use crate::error::{Error, Result};

/// Mean vector and covariance matrix of a Gaussian element in coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianLaw {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cov.nrows(),
            });
        }
        let scale = cov.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
        for i in 0..n {
            for j in 0..n {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let sym = (cov.transpose() + &cov) * 0.5;
        Ok(Self {
            mean: mean.iter().copied().collect(),
            cov: (0..n)
                .map(|i| (0..n).map(|j| sym[(i, j)]).collect())
                .collect(),
        })
    }

    pub fn zero_mean(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        Self::new(DVector::zeros(n), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn cov(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.cov[i][j])
    }

    pub fn cov_entry(&self, i: usize, j: usize) -> f64 {
        self.cov[i][j]
    }

    pub fn variance_diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.cov[i][i]).collect()
    }

    /// Spectral-factorization sampler. Eigenvalues below the PSD clip
    /// tolerance are rejected; small negative quadrature noise is clipped
    /// to zero.
    pub fn sampler(&self) -> Result<GaussianSampler> {
        let cov = self.cov();
        let eig = cov.symmetric_eigen();
        let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let tol = 1e-10 * lambda_max.max(1.0);
        let n = self.dim();
        let mut scaled = eig.eigenvectors.clone();
        for (k, lam) in eig.eigenvalues.iter().enumerate() {
            if *lam < -tol {
                return Err(Error::NotPsd(*lam));
            }
            let s = lam.max(0.0).sqrt();
            for i in 0..n {
                scaled[(i, k)] *= s;
            }
        }
        Ok(GaussianSampler {
            mean: self.mean(),
            factor: scaled,
        })
    }
}

/// Cached symmetric factorization `cov = F·Fᵀ` for repeated sampling.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        &self.mean + &self.factor * z
    }
}

/// Draw one sample from a Gaussian law under a fixed seed. Reproducible:
/// identical seeds give identical samples.
pub fn sample_perp(law: &GaussianLaw, seed: u64) -> Result<DVector<f64>> {
    let sampler = law.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(&mut rng))
}

/// Law of the ℱ_s-independent part of a decomposition.
#[derive(Clone, Debug)]
pub enum PerpLaw {
    /// Jointly Gaussian coordinates (grid OU perp part).
    Gaussian(GaussianLaw),
    /// d×d matrix with i.i.d. Gaussian entries; carries the raw entry
    /// moments needed by the closed-form word expectations.
    IidEntries {
        d: usize,
        entry_mean: f64,
        entry_var: f64,
        moments: EntryMoments,
    },
}

impl PerpLaw {
    pub fn iid_entries(d: usize, entry_mean: f64, entry_var: f64) -> Self {
        PerpLaw::IidEntries {
            d,
            entry_mean,
            entry_var,
            moments: EntryMoments::gaussian(entry_mean, entry_var),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PerpLaw::Gaussian(law) => law.dim(),
            PerpLaw::IidEntries { d, .. } => d * d,
        }
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        match self {
            PerpLaw::Gaussian(law) => law.mean(),
            PerpLaw::IidEntries { d, entry_mean, .. } => DVector::from_element(d * d, *entry_mean),
        }
    }

    pub fn sampler(&self) -> Result<PerpSampler> {
        match self {
            PerpLaw::Gaussian(law) => Ok(PerpSampler::Gaussian(law.sampler()?)),
            PerpLaw::IidEntries {
                d,
                entry_mean,
                entry_var,
                ..
            } => {
                if *entry_var < 0.0 {
                    return Err(Error::NotPsd(*entry_var));
                }
                Ok(PerpSampler::Iid {
                    dim: d * d,
                    mean: *entry_mean,
                    sd: entry_var.sqrt(),
                })
            }
        }
    }
}

/// Sampler for a [`PerpLaw`].
#[derive(Clone, Debug)]
pub enum PerpSampler {
    Gaussian(GaussianSampler),
    Iid { dim: usize, mean: f64, sd: f64 },
}

impl PerpSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            PerpSampler::Gaussian(s) => s.sample(rng),
            PerpSampler::Iid { dim, mean, sd } => DVector::from_iterator(
                *dim,
                (0..*dim).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)),
            ),
        }
    }
}

/// The decomposition `X(t) = X∥(s;t) + X⊥(s;t)`: the realized
/// ℱ_s-measurable part and the law of the independent part.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub parallel: AlgebraElement,
    pub perp_law: PerpLaw,
}

/// Raw (non-central) moments m₁…m₆ of a scalar increment law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryMoments {
    raw: [f64; 6],
}

impl EntryMoments {
    /// Raw moments of a Gaussian increment `N(mu, var)` via the recurrence
    /// `E[X^n] = mu·E[X^{n−1}] + (n−1)·var·E[X^{n−2}]`.
    pub fn gaussian(mu: f64, var: f64) -> Self {
        let mut m = [0.0; 7];
        m[0] = 1.0;
        for n in 1..=6 {
            m[n] = mu * m[n - 1]
                + if n >= 2 {
                    (n - 1) as f64 * var * m[n - 2]
                } else {
                    0.0
                };
        }
        Self {
            raw: [m[1], m[2], m[3], m[4], m[5], m[6]],
        }
    }

    pub fn from_first_three(m1: f64, m2: f64, m3: f64) -> Result<Self> {
        if m2 < m1 * m1 {
            return Err(Error::InvalidArgument(format!(
                "inconsistent moments: m2 = {m2} < m1² = {}",
                m1 * m1
            )));
        }
        // Fill the higher moments from the Gaussian law with matching mean
        // and variance; only m1..m3 are contractually meaningful here.
        let mut em = Self::gaussian(m1, m2 - m1 * m1);
        em.raw[0] = m1;
        em.raw[1] = m2;
        em.raw[2] = m3;
        Ok(em)
    }

    /// Raw moment E[X^n] for 0 ≤ n ≤ 6.
    pub fn raw(&self, n: usize) -> f64 {
        if n == 0 {
            1.0
        } else {
            self.raw[n - 1]
        }
    }

    pub fn m1(&self) -> f64 {
        self.raw[0]
    }

    pub fn m2(&self) -> f64 {
        self.raw[1]
    }

    pub fn m3(&self) -> f64 {
        self.raw[2]
    }
}

/// Ornstein-Uhlenbeck stochastic convolution `X(t) = ∫₀ᵗ 𝒮_{t−u} dW(u)` on
/// the discretized grid algebra, with the shift semigroup as the transport
/// and a stationary Wiener increment covariance Q per unit time.
#[derive(Clone, Debug)]
pub struct OUProcess {
    geometry: FilipovicGeometry,
    shift_step: DMatrix<f64>,
    noise_cov_q: DMatrix<f64>,
    dt_quadrature: f64,
}

impl OUProcess {
    pub fn new(
        geometry: FilipovicGeometry,
        noise_cov_q: DMatrix<f64>,
        dt_quadrature: f64,
    ) -> Result<Self> {
        let n = geometry.grid().n_points;
        if noise_cov_q.nrows() != n || noise_cov_q.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: noise_cov_q.nrows(),
            });
        }
        if !(dt_quadrature > 0.0) {
            return Err(Error::InvalidArgument(
                "dt_quadrature must be positive".into(),
            ));
        }
        let scale = noise_cov_q
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()))
            .max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (noise_cov_q[(i, j)] - noise_cov_q[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument("Q must be symmetric".into()));
                }
            }
        }
        let shift_step = geometry.shift_step_matrix();
        Ok(Self {
            geometry,
            shift_step,
            noise_cov_q,
            dt_quadrature,
        })
    }

    /// Exponential noise kernel `q(ξᵢ,ξⱼ) = σ²·exp(−γ|ξᵢ−ξⱼ|)`.
    pub fn with_exponential_kernel(
        geometry: FilipovicGeometry,
        sigma: f64,
        gamma: f64,
        dt_quadrature: f64,
    ) -> Result<Self> {
        let nodes = geometry.grid().nodes();
        let n = nodes.len();
        let q = DMatrix::from_fn(n, n, |i, j| {
            sigma * sigma * (-gamma * (nodes[i] - nodes[j]).abs()).exp()
        });
        Self::new(geometry, q, dt_quadrature)
    }

    pub fn geometry(&self) -> &FilipovicGeometry {
        &self.geometry
    }

    pub fn algebra(&self) -> Algebra {
        Algebra::Grid(self.geometry.clone())
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov_q
    }

    pub fn dt_quadrature(&self) -> f64 {
        self.dt_quadrature
    }

    pub fn shift_step_matrix(&self) -> &DMatrix<f64> {
        &self.shift_step
    }

    /// Matrix of 𝒮_u: linear interpolation between integer powers of the
    /// one-node shift, consistent with the shift operation itself.
    pub fn shift_matrix(&self, u: f64) -> Result<DMatrix<f64>> {
        if !(u >= 0.0) {
            return Err(Error::InvalidArgument("shift time must be ≥ 0".into()));
        }
        let dx = self.geometry.grid().dx;
        let pos = u / dx;
        let mut m = pos.floor() as usize;
        let mut theta = pos - m as f64;
        if theta < 1e-9 {
            theta = 0.0;
        } else if theta > 1.0 - 1e-9 {
            theta = 0.0;
            m += 1;
        }
        let pm = self.shift_power(m);
        if theta == 0.0 {
            return Ok(pm);
        }
        let pm1 = self.shift_power(m + 1);
        Ok(pm * (1.0 - theta) + pm1 * theta)
    }

    fn shift_power(&self, m: usize) -> DMatrix<f64> {
        let n = self.geometry.grid().n_points;
        // P^m re-indexes nodes: row i reads node min(i+m, n−1).
        DMatrix::from_fn(n, n, |i, j| if j == (i + m).min(n - 1) { 1.0 } else { 0.0 })
    }

    /// Law of `X⊥(s;t) = ∫_s^t 𝒮_{t−u} dW(u)`: zero-mean Gaussian with
    /// covariance `∫₀^{t−s} S_u·Q·S_uᵀ du` by trapezoidal quadrature.
    pub fn perp_covariance(&self, s: f64, t: f64) -> Result<GaussianLaw> {
        self.perp_covariance_with_step(s, t, self.dt_quadrature)
    }

    /// Same integral at an explicit quadrature step (used by the
    /// refinement gates).
    pub fn perp_covariance_with_step(&self, s: f64, t: f64, dt: f64) -> Result<GaussianLaw> {
        if s < 0.0 || t < s {
            return Err(Error::InvalidArgument(format!(
                "need 0 ≤ s ≤ t, got s = {s}, t = {t}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("quadrature step must be > 0".into()));
        }
        let n = self.geometry.grid().n_points;
        let tau = t - s;
        if tau == 0.0 {
            return GaussianLaw::zero_mean(DMatrix::zeros(n, n));
        }
        let steps = (tau / dt).ceil() as usize;
        let h = tau / steps as f64;
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for j in 0..=steps {
            let u = (j as f64 * h).min(tau);
            let su = self.shift_matrix(u)?;
            let integrand = &su * &self.noise_cov_q * su.transpose();
            let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
            acc += integrand * (w * h);
        }
        GaussianLaw::zero_mean(acc)
    }

    /// Decompose at `(s, t)` given the realized state `X(s)`:
    /// `X∥(s;t) = 𝒮_{t−s} X(s)` and `X⊥(s;t)` zero-mean Gaussian.
    pub fn decompose(&self, x_s: &AlgebraElement, s: f64, t: f64) -> Result<Decomposition> {
        if t < s {
            return Err(Error::InvalidArgument(format!(
                "need t ≥ s, got s = {s}, t = {t}"
            )));
        }
        let parallel = self.geometry.shift(t - s, x_s)?;
        let perp_law = PerpLaw::Gaussian(self.perp_covariance(s, t)?);
        Ok(Decomposition { parallel, perp_law })
    }

    /// Exact-in-law path simulation: `X(t+dt) = 𝒮_dt X(t) + G` with
    /// `G ~ N(0, ∫₀^dt S_u Q S_uᵀ du)`.
    pub fn simulate_path(
        &self,
        x0: Option<&AlgebraElement>,
        t_end: f64,
        dt: f64,
        seed: u64,
    ) -> Result<OuPath> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if !(t_end >= 0.0) {
            return Err(Error::InvalidArgument("t_end must be ≥ 0".into()));
        }
        let n = self.geometry.grid().n_points;
        let tag = AlgebraTag::GridPointwise { n_points: n };
        let mut state = match x0 {
            Some(g) => {
                if g.tag() != tag {
                    return Err(Error::AlgebraMismatch(
                        "initial state must be a grid element".into(),
                    ));
                }
                g.clone()
            }
            None => AlgebraElement::zeros(tag),
        };
        let steps = (t_end / dt).round().max(0.0) as usize;
        let step_law = self.perp_covariance(0.0, dt)?;
        let sampler = step_law.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);

        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        times.push(0.0);
        states.push(state.clone());
        for j in 1..=steps {
            let transported = self.geometry.shift(dt, &state)?;
            let noise = sampler.sample(&mut rng);
            state = AlgebraElement::new(
                transported
                    .coords()
                    .iter()
                    .zip(noise.iter())
                    .map(|(a, b)| a + b)
                    .collect(),
                tag,
            )?;
            times.push(j as f64 * dt);
            states.push(state.clone());
        }
        Ok(OuPath { times, states })
    }
}

/// A realized OU path: states at equally spaced times.
#[derive(Clone, Debug)]
pub struct OuPath {
    pub times: Vec<f64>,
    pub states: Vec<AlgebraElement>,
}

impl OuPath {
    pub fn last(&self) -> &AlgebraElement {
        self.states
            .last()
            .expect("path has at least the initial state")
    }

    /// State at time `s` (nearest stored step).
    pub fn state_at(&self, s: f64) -> Result<&AlgebraElement> {
        if self.times.is_empty() {
            return Err(Error::InvalidArgument("empty path".into()));
        }
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for (i, t) in self.times.iter().enumerate() {
            let e = (t - s).abs();
            if e < best_err {
                best_err = e;
                best = i;
            }
        }
        if best_err > 1e-9 * s.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "path has no state at t = {s} (nearest stored time differs by {best_err})"
            )));
        }
        Ok(&self.states[best])
    }
}

/// Matrix-valued Lévy process: d² independent copies of a scalar Brownian
/// motion with drift, one per entry.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MatrixLevyProcess {
    pub d: usize,
    /// Per-unit-time drift of each entry.
    pub entry_mu: f64,
    /// Per-unit-time variance of each entry.
    pub entry_sigma2: f64,
}

impl MatrixLevyProcess {
    pub fn new(d: usize, entry_mu: f64, entry_sigma2: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(
                "matrix dimension must be ≥ 2".into(),
            ));
        }
        if entry_sigma2 < 0.0 {
            return Err(Error::InvalidArgument("variance must be ≥ 0".into()));
        }
        Ok(Self {
            d,
            entry_mu,
            entry_sigma2,
        })
    }

    /// Raw moments of one entry increment over an interval of length `dt`.
    pub fn entry_moments(&self, dt: f64) -> EntryMoments {
        EntryMoments::gaussian(self.entry_mu * dt, self.entry_sigma2 * dt)
    }

    /// Decompose at `(s, t)`: `X∥ = X(s)` and `X⊥` the increment over `(s,t]`.
    pub fn decompose(&self, x_s: &AlgebraElement, s: f64, t: f64) -> Result<Decomposition> {
        if t < s {
            return Err(Error::InvalidArgument(format!(
                "need t ≥ s, got s = {s}, t = {t}"
            )));
        }
        let tag = AlgebraTag::Matrix { d: self.d };
        if x_s.tag() != tag {
            return Err(Error::AlgebraMismatch(
                "state must be a matrix element".into(),
            ));
        }
        let dt = t - s;
        Ok(Decomposition {
            parallel: x_s.clone(),
            perp_law: PerpLaw::iid_entries(self.d, self.entry_mu * dt, self.entry_sigma2 * dt),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::GridSpec;
    use approx::assert_relative_eq;

    fn desk_ou() -> OUProcess {
        let geom = FilipovicGeometry::new(GridSpec::default_desk());
        OUProcess::with_exponential_kernel(geom, 0.1, 1.0, 1e-3).unwrap()
    }

    #[test]
    fn perp_covariance_degenerate_cases() {
        let ou = desk_ou();
        let law = ou.perp_covariance(1.0, 1.0).unwrap();
        assert!(law.cov().iter().all(|&c| c == 0.0));

        let geom = FilipovicGeometry::new(GridSpec::default_desk());
        let q0 = DMatrix::zeros(16, 16);
        let ou0 = OUProcess::new(geom, q0, 1e-3).unwrap();
        let law0 = ou0.perp_covariance(0.2, 1.7).unwrap();
        assert!(law0.cov().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn perp_covariance_rejects_reversed_times() {
        let ou = desk_ou();
        assert!(ou.perp_covariance(1.0, 0.5).is_err());
    }

    #[test]
    fn perp_variance_matches_fine_quadrature() {
        let ou = desk_ou();
        let coarse = ou.perp_covariance_with_step(0.0, 1.0, 1e-3).unwrap();
        let fine = ou.perp_covariance_with_step(0.0, 1.0, 1e-4).unwrap();
        for i in 0..16 {
            assert_relative_eq!(
                coarse.cov_entry(i, i),
                fine.cov_entry(i, i),
                max_relative = 1e-4
            );
        }
    }

    #[test]
    fn shift_matrix_agrees_with_shift_operation() {
        let ou = desk_ou();
        let geom = ou.geometry();
        let g = AlgebraElement::grid((0..16).map(|i| (i as f64 * 0.3).sin()).collect());
        for u in [0.0, 0.1, 0.26666, 0.5, 1.0, 3.9] {
            let via_matrix = ou.shift_matrix(u).unwrap() * g.as_vector();
            let via_op = geom.shift(u, &g).unwrap();
            for (a, b) in via_matrix.iter().zip(via_op.coords()) {
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn decompose_trivial_cases() {
        let ou = desk_ou();
        let g = AlgebraElement::grid((0..16).map(|i| 1.0 + 0.1 * i as f64).collect());
        let d = ou.decompose(&g, 0.5, 0.5).unwrap();
        assert_eq!(d.parallel, g);
        match d.perp_law {
            PerpLaw::Gaussian(law) => assert!(law.cov().iter().all(|&c| c == 0.0)),
            _ => panic!("expected Gaussian perp law"),
        }

        let dx = ou.geometry().grid().dx;
        let d2 = ou.decompose(&g, 0.5, 0.5 + dx).unwrap();
        let expected = ou.geometry().shift(dx, &g).unwrap();
        assert_eq!(d2.parallel, expected);
    }

    #[test]
    fn sampler_zero_covariance_returns_mean() {
        let law =
            GaussianLaw::new(DVector::from_vec(vec![1.0, -2.0]), DMatrix::zeros(2, 2)).unwrap();
        let s = sample_perp(&law, 99).unwrap();
        assert_eq!(s.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn sampler_rejects_indefinite_matrix() {
        let law = GaussianLaw::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        )
        .unwrap();
        assert!(law.sampler().is_err());
    }

    #[test]
    fn identical_seeds_identical_samples() {
        let ou = desk_ou();
        let law = ou.perp_covariance(0.0, 1.0).unwrap();
        let a = sample_perp(&law, 1234).unwrap();
        let b = sample_perp(&law, 1234).unwrap();
        assert_eq!(a, b);
        let c = sample_perp(&law, 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_path_is_pure_transport() {
        let geom = FilipovicGeometry::new(GridSpec::default_desk());
        let ou = OUProcess::new(geom.clone(), DMatrix::zeros(16, 16), 1e-3).unwrap();
        let g = AlgebraElement::grid((0..16).map(|i| (i as f64).cos()).collect());
        // Step by one grid cell so the transport composes as exact node
        // re-indexing.
        let dx = geom.grid().dx;
        let path = ou.simulate_path(Some(&g), 4.0 * dx, dx, 7).unwrap();
        let expected = geom.shift(4.0 * dx, &g).unwrap();
        assert_eq!(path.last(), &expected);
    }

    #[test]
    fn chapman_kolmogorov_two_steps_vs_one() {
        let ou = desk_ou();
        // One grid step, where the discretized semigroup composes exactly
        // (S_u·S_dx = S_{u+dx} holds without interpolation error).
        let dt = ou.geometry().grid().dx;
        // Two-step covariance: S_dt·C1·S_dtᵀ + C1 against C(2dt).
        let c1 = ou.perp_covariance(0.0, dt).unwrap().cov();
        let c2 = ou.perp_covariance(0.0, 2.0 * dt).unwrap().cov();
        let s = ou.shift_matrix(dt).unwrap();
        let composed = &s * &c1 * s.transpose() + &c1;
        let scale = c2.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for i in 0..16 {
            for j in 0..16 {
                assert!(
                    (composed[(i, j)] - c2[(i, j)]).abs() <= 1e-6 * scale.max(1.0),
                    "mismatch at ({i},{j}): {} vs {}",
                    composed[(i, j)],
                    c2[(i, j)]
                );
            }
        }
    }

    #[test]
    fn path_is_reproducible_and_seed_sensitive() {
        let ou = desk_ou();
        let p1 = ou.simulate_path(None, 0.5, 0.05, 42).unwrap();
        let p2 = ou.simulate_path(None, 0.5, 0.05, 42).unwrap();
        for (a, b) in p1.states.iter().zip(&p2.states) {
            assert_eq!(a, b);
        }
        let p3 = ou.simulate_path(None, 0.5, 0.05, 43).unwrap();
        assert_ne!(p1.last(), p3.last());
    }

    #[test]
    fn gaussian_entry_moments_recurrence() {
        let em = EntryMoments::gaussian(1.0, 1.0);
        // N(1,1): E X = 1, E X² = 2, E X³ = 4, E X⁴ = 10.
        assert_relative_eq!(em.raw(1), 1.0);
        assert_relative_eq!(em.raw(2), 2.0);
        assert_relative_eq!(em.raw(3), 4.0);
        assert_relative_eq!(em.raw(4), 10.0);
    }

    #[test]
    fn entry_moments_consistency_check() {
        assert!(EntryMoments::from_first_three(1.0, 0.5, 0.0).is_err());
        let em = EntryMoments::from_first_three(1.0, 2.0, 4.0).unwrap();
        assert_eq!(em.m1(), 1.0);
        assert_eq!(em.m2(), 2.0);
        assert_eq!(em.m3(), 4.0);
    }

    #[test]
    fn matrix_levy_decompose() {
        let p = MatrixLevyProcess::new(2, 0.0, 1.0).unwrap();
        let x = AlgebraElement::matrix(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = p.decompose(&x, 0.0, 1.0).unwrap();
        assert_eq!(d.parallel, x);
        match d.perp_law {
            PerpLaw::IidEntries {
                entry_mean,
                entry_var,
                ..
            } => {
                assert_eq!(entry_mean, 0.0);
                assert_eq!(entry_var, 1.0);
            }
            _ => panic!("expected iid entries"),
        }
    }
}
