//! Frozen-path Monte Carlo conditional-expectation oracle: the single source
//! of ground truth for every closed-form claim.
//!
//! Conditional expectations given ℱ_s are computed by fixing the realized
//! path up to s and averaging a functional over independent resamples of the
//! ℱ_s-independent part. Draws are partitioned into fixed-size batches, each
//! owning a seed-derived random stream, and reduced pairwise in batch order,
//! so estimates are bit-identical for a given (config, seed) regardless of
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{Algebra, AlgebraElement};
use crate::error::{Error, Result};
use crate::process::{Decomposition, MatrixLevyProcess, OUProcess};

/// Fixed batch size of the partitioned reduction.
const BATCH: usize = 4096;

/// A stochastic process that admits the orthogonal/parallel decomposition.
#[derive(Clone, Debug)]
pub enum Process {
    Ou(OUProcess),
    MatrixLevy(MatrixLevyProcess),
}

impl Process {
    pub fn algebra(&self) -> Algebra {
        match self {
            Process::Ou(p) => p.algebra(),
            Process::MatrixLevy(p) => Algebra::Matrix(crate::algebra::MatrixAlgebraSpec { d: p.d }),
        }
    }

    pub fn decompose(&self, x_s: &AlgebraElement, s: f64, t: f64) -> Result<Decomposition> {
        match self {
            Process::Ou(p) => p.decompose(x_s, s, t),
            Process::MatrixLevy(p) => p.decompose(x_s, s, t),
        }
    }
}

/// A realized path frozen at time s, plus the seed base for perp resampling.
/// The perp streams are disjoint from any path-simulation stream by
/// construction (stream index 0 is reserved for paths).
#[derive(Clone, Debug)]
pub struct FrozenScenario {
    process: Process,
    x_s: AlgebraElement,
    s: f64,
    seed_base: u64,
}

impl FrozenScenario {
    /// Freeze an explicitly given state at time s.
    pub fn from_state(
        process: Process,
        x_s: AlgebraElement,
        s: f64,
        seed_base: u64,
    ) -> Result<Self> {
        if x_s.tag() != process.algebra().tag() {
            return Err(Error::AlgebraMismatch(
                "frozen state does not live in the process algebra".into(),
            ));
        }
        Ok(Self {
            process,
            x_s,
            s,
            seed_base,
        })
    }

    /// Simulate an OU path from zero up to s under `path_seed` and freeze it.
    pub fn simulate_ou(
        process: OUProcess,
        s: f64,
        dt: f64,
        path_seed: u64,
        seed_base: u64,
    ) -> Result<Self> {
        let path = process.simulate_path(None, s, dt, path_seed)?;
        let x_s = path.state_at(s)?.clone();
        Ok(Self {
            process: Process::Ou(process),
            x_s,
            s,
            seed_base,
        })
    }

    pub fn algebra(&self) -> Algebra {
        self.process.algebra()
    }

    pub fn state(&self) -> &AlgebraElement {
        &self.x_s
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn seed_base(&self) -> u64 {
        self.seed_base
    }

    pub fn decomposition(&self, t: f64) -> Result<Decomposition> {
        self.process.decompose(&self.x_s, self.s, t)
    }

    fn batch_rng(&self, stream: u64, batch: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed_base);
        // Stream 0 is reserved for path simulation; shift batches up by one.
        rng.set_stream((stream << 32) | (batch + 1));
        rng
    }
}

/// A Monte Carlo estimate: componentwise mean, standard errors and count.
#[derive(Clone, Debug, Serialize)]
pub struct MCEstimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub n: usize,
}

impl MCEstimate {
    pub fn scalar_mean(&self) -> f64 {
        self.mean[0]
    }

    pub fn scalar_se(&self) -> f64 {
        self.se[0]
    }
}

/// Per-component running moments of one batch: count, mean and the centered
/// sum of squares M2. Batches combine pairwise (Chan's formula) in fixed
/// index order, which keeps the reduction deterministic and avoids the
/// catastrophic cancellation of a naive sum-of-squares.
#[derive(Clone, Debug)]
pub(crate) struct BatchMoments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl BatchMoments {
    /// Two-pass moments of a column-major value buffer (dim × count).
    pub(crate) fn from_buffer(dim: usize, values: &[f64]) -> Self {
        let n = if dim == 0 { 0 } else { values.len() / dim };
        let mut mean = vec![0.0; dim];
        for chunk in values.chunks(dim) {
            for (m, v) in mean.iter_mut().zip(chunk) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n.max(1) as f64;
        }
        let mut m2 = vec![0.0; dim];
        for chunk in values.chunks(dim) {
            for ((acc, v), m) in m2.iter_mut().zip(chunk).zip(&mean) {
                let d = v - m;
                *acc += d * d;
            }
        }
        Self { n, mean, m2 }
    }

    pub(crate) fn combine(a: Self, b: Self) -> Self {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let n = a.n + b.n;
        let (na, nb, nf) = (a.n as f64, b.n as f64, (a.n + b.n) as f64);
        let mean: Vec<f64> = a
            .mean
            .iter()
            .zip(&b.mean)
            .map(|(x, y)| (na * x + nb * y) / nf)
            .collect();
        let m2: Vec<f64> =
            a.m2.iter()
                .zip(&b.m2)
                .zip(a.mean.iter().zip(&b.mean))
                .map(|((m2a, m2b), (ma, mb))| {
                    let delta = mb - ma;
                    m2a + m2b + delta * delta * na * nb / nf
                })
                .collect();
        Self { n, mean, m2 }
    }

    pub(crate) fn combine_pairwise(mut parts: Vec<Self>) -> Option<Self> {
        if parts.is_empty() {
            return None;
        }
        while parts.len() > 1 {
            let mut next = Vec::with_capacity(parts.len().div_ceil(2));
            let mut iter = parts.drain(..);
            while let Some(a) = iter.next() {
                match iter.next() {
                    Some(b) => next.push(Self::combine(a, b)),
                    None => next.push(a),
                }
            }
            drop(iter);
            parts = next;
        }
        parts.pop()
    }

    pub(crate) fn into_estimate(self) -> MCEstimate {
        let nf = self.n as f64;
        let se = self
            .m2
            .iter()
            .map(|m2| (m2 / (nf - 1.0).max(1.0) / nf).sqrt())
            .collect();
        MCEstimate {
            mean: self.mean,
            se,
            n: self.n,
        }
    }
}

/// Frozen-path Monte Carlo conditional expectation of a vector-valued
/// functional: draws n independent X⊥(s;t), evaluates `functional(X∥ + X⊥)`
/// and returns mean and standard error per component.
///
/// `stream` keys the random stream so that repeated estimates on the same
/// scenario are statistically independent.
pub fn conditional_mc<F>(
    scenario: &FrozenScenario,
    functional: F,
    t: f64,
    n: usize,
    stream: u64,
) -> Result<MCEstimate>
where
    F: Fn(&AlgebraElement) -> Vec<f64> + Sync,
{
    if n < 100 {
        return Err(Error::InvalidArgument("need n ≥ 100 draws".into()));
    }
    if t < scenario.s {
        return Err(Error::InvalidArgument(format!(
            "need t ≥ s, got t = {t}, s = {}",
            scenario.s
        )));
    }
    let decomposition = scenario.decomposition(t)?;
    let sampler = decomposition.perp_law.sampler()?;
    let algebra = scenario.algebra();
    let tag = algebra.tag();
    let parallel = &decomposition.parallel;

    let n_batches = n.div_ceil(BATCH);
    let results: Vec<Result<(BatchMoments, usize)>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = scenario.batch_rng(stream, b as u64);
            let lo = b * BATCH;
            let hi = ((b + 1) * BATCH).min(n);
            let mut buffer: Vec<f64> = Vec::new();
            let mut dim = 0usize;
            let mut nonfinite = 0usize;
            for _ in lo..hi {
                let draw = sampler.sample(&mut rng);
                let x = AlgebraElement::new(
                    parallel
                        .coords()
                        .iter()
                        .zip(draw.iter())
                        .map(|(p, d)| p + d)
                        .collect(),
                    tag,
                )?;
                let value = functional(&x);
                if dim == 0 {
                    dim = value.len();
                    buffer.reserve(dim * (hi - lo));
                } else if value.len() != dim {
                    return Err(Error::InvalidArgument(
                        "functional output dimension changed between draws".into(),
                    ));
                }
                for v in &value {
                    if !v.is_finite() {
                        nonfinite += 1;
                    }
                }
                buffer.extend_from_slice(&value);
            }
            Ok((BatchMoments::from_buffer(dim, &buffer), nonfinite))
        })
        .collect();

    let mut parts = Vec::with_capacity(n_batches);
    let mut nonfinite = 0usize;
    for r in results {
        let (acc, bad) = r?;
        nonfinite += bad;
        parts.push(acc);
    }
    if nonfinite > 0 {
        return Err(Error::NonFinite(format!(
            "{nonfinite} non-finite functional values in conditional_mc"
        )));
    }
    let total = BatchMoments::combine_pairwise(parts)
        .ok_or_else(|| Error::InvalidArgument("no draws".into()))?;
    Ok(total.into_estimate())
}

/// Scalar convenience wrapper around [`conditional_mc`].
pub fn conditional_mc_scalar<F>(
    scenario: &FrozenScenario,
    functional: F,
    t: f64,
    n: usize,
    stream: u64,
) -> Result<MCEstimate>
where
    F: Fn(&AlgebraElement) -> f64 + Sync,
{
    conditional_mc(scenario, |x| vec![functional(x)], t, n, stream)
}

/// Pooled-sample estimator of `x ↦ E[exp(−x·‖X(t)‖^power) | ℱ_s]`: one set of
/// draws of `‖X∥+X⊥‖^power` reused across every x (common random numbers),
/// hence monotone decreasing in x by construction.
#[derive(Clone, Debug)]
pub struct LaplaceEstimator {
    samples: Vec<f64>,
}

impl LaplaceEstimator {
    /// Build the pooled sample. `power` is the norm exponent (2k+2 for the
    /// odd-moment integral).
    pub fn build(
        scenario: &FrozenScenario,
        t: f64,
        power: f64,
        n: usize,
        stream: u64,
    ) -> Result<Self> {
        if n < 100 {
            return Err(Error::InvalidArgument("need n ≥ 100 draws".into()));
        }
        let algebra = scenario.algebra();
        let decomposition = scenario.decomposition(t)?;
        let sampler = decomposition.perp_law.sampler()?;
        let tag = algebra.tag();
        let parallel = &decomposition.parallel;
        let n_batches = n.div_ceil(BATCH);
        let batches: Vec<Result<Vec<f64>>> = (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = scenario.batch_rng(stream, b as u64);
                let lo = b * BATCH;
                let hi = ((b + 1) * BATCH).min(n);
                let mut out = Vec::with_capacity(hi - lo);
                for _ in lo..hi {
                    let draw = sampler.sample(&mut rng);
                    let x = AlgebraElement::new(
                        parallel
                            .coords()
                            .iter()
                            .zip(draw.iter())
                            .map(|(p, d)| p + d)
                            .collect(),
                        tag,
                    )?;
                    let q = algebra.norm(&x)?.powf(power);
                    if !q.is_finite() {
                        return Err(Error::NonFinite("laplace estimator sample".into()));
                    }
                    out.push(q);
                }
                Ok(out)
            })
            .collect();
        let mut samples = Vec::with_capacity(n);
        for b in batches {
            samples.extend(b?);
        }
        Ok(Self { samples })
    }

    /// Build directly from scalar samples of `‖X‖^power` (used by tests).
    pub fn from_samples(samples: Vec<f64>) -> Self {
        Self { samples }
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Estimate of E[exp(−x·Q)] at x ≥ 0; exactly 1 at x = 0.
    pub fn eval(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 1.0;
        }
        let mut blocks: Vec<f64> = self
            .samples
            .chunks(BATCH)
            .map(|c| c.iter().map(|q| (-x * q).exp()).sum::<f64>())
            .collect();
        // Pairwise reduction of the block sums, in index order.
        while blocks.len() > 1 {
            let mut next = Vec::with_capacity(blocks.len().div_ceil(2));
            let mut iter = blocks.chunks(2);
            for pair in &mut iter {
                next.push(pair.iter().sum());
            }
            blocks = next;
        }
        blocks[0] / self.samples.len() as f64
    }

    /// Mean and standard error of `Q^alpha` over the pooled sample; the
    /// fractional-integral odd-moment estimate inherits this sampling error.
    pub fn power_moment(&self, alpha: f64) -> (f64, f64) {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().map(|q| q.powf(alpha)).sum::<f64>() / n;
        let var = self
            .samples
            .iter()
            .map(|q| (q.powf(alpha) - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    /// Standard error of the estimate at x.
    pub fn se(&self, x: f64) -> f64 {
        let n = self.samples.len() as f64;
        let mean = self.eval(x);
        let var = self
            .samples
            .iter()
            .map(|q| {
                let v = (-x * q).exp();
                (v - mean) * (v - mean)
            })
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }
}

/// Verdict of a tolerance gate comparison.
#[derive(Clone, Debug, Serialize)]
pub struct GateOutcome {
    pub pass: bool,
    /// Largest |mean − claim| / se across components.
    pub max_z: f64,
    pub worst_index: usize,
}

/// PASS iff |mean − claim| ≤ k_sigma·se componentwise. A tiny absolute floor
/// guards exact (zero-variance) components against floating-point noise.
pub fn tolerance_gate(estimate: &MCEstimate, claim: &[f64], k_sigma: f64) -> Result<GateOutcome> {
    if claim.len() != estimate.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: estimate.mean.len(),
            got: claim.len(),
        });
    }
    let mut max_z = 0.0f64;
    let mut worst = 0usize;
    let mut pass = true;
    for (i, ((m, s), c)) in estimate
        .mean
        .iter()
        .zip(&estimate.se)
        .zip(claim)
        .enumerate()
    {
        let diff = (m - c).abs();
        let tol = k_sigma * s + 1e-12;
        let z = if *s > 0.0 {
            diff / s
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > max_z {
            max_z = z;
            worst = i;
        }
        if diff > tol {
            pass = false;
        }
    }
    Ok(GateOutcome {
        pass,
        max_z,
        worst_index: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{FilipovicGeometry, GridSpec};
    use crate::process::OUProcess;

    fn desk_scenario(seed_base: u64) -> FrozenScenario {
        let geom = FilipovicGeometry::new(GridSpec::default_desk());
        let ou = OUProcess::with_exponential_kernel(geom, 0.1, 1.0, 1e-3).unwrap();
        FrozenScenario::simulate_ou(ou, 0.5, 0.01, 7, seed_base).unwrap()
    }

    #[test]
    fn unbiased_for_linear_coordinate() {
        let sc = desk_scenario(100);
        let d = sc.decomposition(1.0).unwrap();
        let est = conditional_mc_scalar(&sc, |x| x.coords()[3], 1.0, 20_000, 0).unwrap();
        let gate = tolerance_gate(&est, &[d.parallel.coords()[3]], 5.0).unwrap();
        assert!(gate.pass, "z = {}", gate.max_z);
    }

    #[test]
    fn pointwise_square_matches_closed_form() {
        let sc = desk_scenario(101);
        let d = sc.decomposition(1.0).unwrap();
        let vars = match &d.perp_law {
            crate::process::PerpLaw::Gaussian(law) => law.variance_diagonal(),
            _ => unreachable!(),
        };
        let node = 5usize;
        let est = conditional_mc_scalar(&sc, |x| x.coords()[node].powi(2), 1.0, 50_000, 1).unwrap();
        let claim = d.parallel.coords()[node].powi(2) + vars[node];
        let gate = tolerance_gate(&est, &[claim], 5.0).unwrap();
        assert!(gate.pass, "z = {}", gate.max_z);
    }

    #[test]
    fn cl_scaling_of_standard_errors() {
        let sc = desk_scenario(102);
        let e1 = conditional_mc_scalar(&sc, |x| x.coords()[0], 1.0, 10_000, 2).unwrap();
        let e4 = conditional_mc_scalar(&sc, |x| x.coords()[0], 1.0, 40_000, 3).unwrap();
        let ratio = e1.scalar_se() / e4.scalar_se();
        assert!((ratio - 2.0).abs() < 0.4, "ratio = {ratio}");
    }

    #[test]
    fn estimates_are_bit_identical_under_same_seed() {
        let sc = desk_scenario(103);
        let a = conditional_mc(&sc, |x| x.coords().to_vec(), 1.0, 5_000, 7).unwrap();
        let b = conditional_mc(&sc, |x| x.coords().to_vec(), 1.0, 5_000, 7).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.se, b.se);
        let c = conditional_mc(&sc, |x| x.coords().to_vec(), 1.0, 5_000, 8).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn nonfinite_functional_fails_the_run() {
        let sc = desk_scenario(104);
        let r = conditional_mc_scalar(&sc, |x| 1.0 / (x.coords()[0] - x.coords()[0]), 1.0, 500, 0);
        assert!(r.is_err());
    }

    #[test]
    fn laplace_estimator_basics() {
        let sc = desk_scenario(105);
        let est = LaplaceEstimator::build(&sc, 1.0, 2.0, 10_000, 11).unwrap();
        assert_eq!(est.eval(0.0), 1.0);
        let mut prev = 1.0;
        for x in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let v = est.eval(x);
            assert!(v <= prev + 1e-15, "not monotone at x = {x}");
            assert!(v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn laplace_estimator_scalar_gaussian_closed_form() {
        // Q = Z² with Z ~ N(0,1): E[e^{−xQ}] = (1+2x)^{−1/2}.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                z * z
            })
            .collect();
        let est = LaplaceEstimator::from_samples(samples);
        for x in [0.1f64, 1.0, 10.0] {
            let closed = (1.0 + 2.0 * x).powf(-0.5);
            let se = est.se(x);
            assert!(
                (est.eval(x) - closed).abs() <= 5.0 * se,
                "x = {x}: {} vs {closed} (se {se})",
                est.eval(x)
            );
        }
    }

    #[test]
    fn tolerance_gate_pass_and_fail() {
        let est = MCEstimate {
            mean: vec![1.0, 2.0],
            se: vec![0.1, 0.2],
            n: 1000,
        };
        assert!(tolerance_gate(&est, &[1.0, 2.0], 5.0).unwrap().pass);
        assert!(
            !tolerance_gate(&est, &[1.0, 2.0 + 10.0 * 0.2], 5.0)
                .unwrap()
                .pass
        );
        assert!(tolerance_gate(&est, &[1.0], 5.0).is_err());
    }

    #[test]
    fn gate_calibration_false_failure_rate() {
        // 200 replications of a true claim at k_sigma = 5: no false failures
        // expected (P(|z| > 5) ≈ 5.7e−7 per component).
        use rand::Rng;
        use rand::SeedableRng;
        let mut failures = 0;
        for rep in 0..200u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(900 + rep);
            let n = 1000usize;
            let samples: Vec<f64> = (0..n)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect();
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var =
                samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            let est = MCEstimate {
                mean: vec![mean],
                se: vec![(var / n as f64).sqrt()],
                n,
            };
            if !tolerance_gate(&est, &[0.0], 5.0).unwrap().pass {
                failures += 1;
            }
        }
        assert!(failures <= 2, "false-failure rate too high: {failures}/200");
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let sc = desk_scenario(106);
        let n = 20_000;
        let a = conditional_mc_scalar(&sc, |x| x.coords()[2], 1.0, n, 21).unwrap();
        let b = conditional_mc_scalar(&sc, |x| x.coords()[2], 1.0, n, 22).unwrap();
        // Both estimate the same quantity; their difference should be within
        // 5 combined standard errors of zero.
        let diff = (a.scalar_mean() - b.scalar_mean()).abs();
        let combined = (a.scalar_se().powi(2) + b.scalar_se().powi(2)).sqrt();
        assert!(diff <= 5.0 * combined);
    }
}
