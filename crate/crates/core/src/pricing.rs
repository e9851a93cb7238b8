//! European option pricing on commodity forwards modeled in the discretized
//! Filipović space: the payoff is expanded in Bernstein form on [0, M] and
//! priced through the conditional-moment engine, using the evaluation and
//! shift identities δ_x(g·h) = δ_x(g)·δ_x(h) and δ_x∘𝒮_t = δ_{x+t}.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::algebra::AlgebraElement;
use crate::error::{Error, Result};
use crate::moments::{binomial, gaussian_raw_moment};
use crate::process::{OUProcess, PerpLaw};

/// Bernstein-to-monomial conversion conditioning cap.
pub const DEGREE_CAP: usize = 20;

/// The kind of payoff, used by the Monte Carlo pricer to evaluate the exact
/// (non-polynomial) payoff where one exists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum PayoffKind {
    Call { strike: f64 },
    Put { strike: f64 },
    Custom,
}

/// A degree-n polynomial payoff held in both Bernstein and monomial form on
/// [0, M].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PayoffPolynomial {
    pub degree: usize,
    pub bernstein_coeffs: Vec<f64>,
    pub monomial_coeffs: Vec<f64>,
    pub domain_m: f64,
    /// Measured sup-norm error |B_n h − h| on [0, M] against the sampled
    /// payoff function (zero for payoffs given directly as polynomials).
    pub sup_error: f64,
}

impl PayoffPolynomial {
    /// Bernstein expansion of a scalar payoff: coefficients h(kM/n) and the
    /// exact finite-difference conversion to the monomial basis.
    pub fn from_function<F: Fn(f64) -> f64>(h: F, degree: usize, domain_m: f64) -> Result<Self> {
        if degree > DEGREE_CAP {
            return Err(Error::OrderCap {
                got: degree,
                cap: DEGREE_CAP,
            });
        }
        if !(domain_m > 0.0) {
            return Err(Error::InvalidArgument("domain bound M must be > 0".into()));
        }
        let n = degree;
        let bernstein_coeffs: Vec<f64> =
            (0..=n).map(|k| h(k as f64 * domain_m / n as f64)).collect();
        let monomial_coeffs = bernstein_to_monomial(&bernstein_coeffs, domain_m);
        let mut payoff = Self {
            degree,
            bernstein_coeffs,
            monomial_coeffs,
            domain_m,
            sup_error: 0.0,
        };
        payoff.sup_error = payoff.measure_sup_error(&h, 1000);
        Ok(payoff)
    }

    /// Wrap an explicit polynomial (monomial coefficients h₀…h_n); the
    /// Bernstein form is the exact basis change, so the sup error is zero.
    pub fn from_monomial_coeffs(coeffs: Vec<f64>, domain_m: f64) -> Result<Self> {
        let degree = coeffs.len().saturating_sub(1);
        if degree > DEGREE_CAP {
            return Err(Error::OrderCap {
                got: degree,
                cap: DEGREE_CAP,
            });
        }
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("empty coefficient list".into()));
        }
        if !(domain_m > 0.0) {
            return Err(Error::InvalidArgument("domain bound M must be > 0".into()));
        }
        let bernstein_coeffs = monomial_to_bernstein(&coeffs, domain_m);
        Ok(Self {
            degree,
            bernstein_coeffs,
            monomial_coeffs: coeffs,
            domain_m,
            sup_error: 0.0,
        })
    }

    pub fn call(strike: f64, degree: usize, domain_m: f64) -> Result<Self> {
        Self::from_function(|z| (z - strike).max(0.0), degree, domain_m)
    }

    pub fn put(strike: f64, degree: usize, domain_m: f64) -> Result<Self> {
        Self::from_function(|z| (strike - z).max(0.0), degree, domain_m)
    }

    /// Evaluate through the Bernstein basis (de Casteljau).
    pub fn eval_bernstein(&self, z: f64) -> f64 {
        let t = (z / self.domain_m).clamp(0.0, 1.0);
        let mut beta = self.bernstein_coeffs.clone();
        for round in 1..beta.len() {
            for i in 0..beta.len() - round {
                beta[i] = beta[i] * (1.0 - t) + beta[i + 1] * t;
            }
        }
        beta[0]
    }

    /// Evaluate through the monomial basis (Horner).
    pub fn eval_monomial(&self, z: f64) -> f64 {
        self.monomial_coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * z + c)
    }

    /// Max relative disagreement of the two bases on a dense grid of [0, M].
    pub fn basis_agreement_residual(&self, n_grid: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..=n_grid {
            let z = i as f64 * self.domain_m / n_grid as f64;
            let a = self.eval_bernstein(z);
            let b = self.eval_monomial(z);
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            worst = worst.max(rel);
        }
        worst
    }

    fn measure_sup_error<F: Fn(f64) -> f64>(&self, h: &F, n_grid: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..=n_grid {
            let z = i as f64 * self.domain_m / n_grid as f64;
            worst = worst.max((self.eval_bernstein(z) - h(z)).abs());
        }
        worst
    }
}

/// Monomial coefficients of the Bernstein form: coefficient of z^i is
/// `C(n,i)·Δ^i c₀ / M^i` with forward differences of the Bernstein
/// coefficient sequence.
fn bernstein_to_monomial(bernstein: &[f64], domain_m: f64) -> Vec<f64> {
    let n = bernstein.len() - 1;
    let mut diffs = bernstein.to_vec();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        out.push(binomial(n, i) * diffs[0] / domain_m.powi(i as i32));
        for j in 0..n - i {
            diffs[j] = diffs[j + 1] - diffs[j];
        }
        diffs.truncate(n - i);
    }
    out
}

/// Exact Bernstein coefficients of a polynomial written in the monomial
/// basis: `b_k = Σ_{i≤k} h_i·M^i·C(k,i)/C(n,i)`.
fn monomial_to_bernstein(monomial: &[f64], domain_m: f64) -> Vec<f64> {
    let n = monomial.len() - 1;
    (0..=n)
        .map(|k| {
            (0..=k.min(n))
                .map(|i| monomial[i] * domain_m.powi(i as i32) * binomial(k, i) / binomial(n, i))
                .sum()
        })
        .collect()
}

/// A European option pricing request on the forward curve observed at s.
#[derive(Clone, Debug)]
pub struct PricingRequest {
    pub payoff: PayoffPolynomial,
    pub payoff_kind: PayoffKind,
    /// Valuation time.
    pub s: f64,
    /// Exercise time.
    pub t: f64,
    /// Delivery offset at exercise (years).
    pub x: f64,
    /// Observed forward curve at s.
    pub f_s: AlgebraElement,
}

impl PricingRequest {
    pub fn validate(&self, process: &OUProcess) -> Result<()> {
        if !(0.0 <= self.s && self.s <= self.t) {
            return Err(Error::InvalidArgument(format!(
                "need 0 ≤ s ≤ t, got s = {}, t = {}",
                self.s, self.t
            )));
        }
        if !(self.x >= 0.0) {
            return Err(Error::InvalidArgument(
                "delivery offset x must be ≥ 0".into(),
            ));
        }
        let geom = process.geometry();
        let horizon = self.x + self.t - self.s;
        if horizon > geom.grid().x_max + geom.max_extrapolation() {
            return Err(Error::ExtrapolationPolicy {
                x: horizon,
                max: geom.grid().x_max + geom.max_extrapolation(),
            });
        }
        if self.f_s.tag() != process.algebra().tag() {
            return Err(Error::AlgebraMismatch(
                "forward curve must live on the process grid".into(),
            ));
        }
        Ok(())
    }
}

/// Pricing diagnostics reported alongside every price.
#[derive(Clone, Debug, Serialize)]
pub struct PriceDiagnostics {
    pub bernstein_sup_error: f64,
    pub basis_agreement_residual: f64,
    /// Probability that the simulated forward leaves [0, M] at exercise
    /// (Gaussian closed form); prices are trusted when ≤ 0.001.
    pub domain_exit_prob: f64,
    pub extrapolated: bool,
    pub method: &'static str,
}

/// Closed-form option price by the polynomial moment formula:
/// `Σᵢ hᵢ·Σₖ binom(i,k)·δ_x(E[(X⊥)^{i−k}])·f(s, x+t−s)^k`
/// with centered Gaussian perp moments `(m−1)!!·σ^m(x)`.
pub fn price_option(req: &PricingRequest, process: &OUProcess) -> Result<(f64, PriceDiagnostics)> {
    req.validate(process)?;
    let geom = process.geometry();
    let law = process.perp_covariance(req.s, req.t)?;
    let n = req.payoff.degree;

    // δ_x applied to the perp moment grid functions E[(X⊥)^m].
    let vars = law.variance_diagonal();
    let mut moment_at_x = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let grid_fn = AlgebraElement::grid(
            vars.iter()
                .map(|v| gaussian_raw_moment(0.0, *v, m))
                .collect(),
        );
        moment_at_x.push(geom.eval_delta(req.x, &grid_fn)?);
    }

    // f(s, x + t − s) from the observed curve: δ_x∘𝒮_{t−s} = δ_{x+t−s}.
    let (f_at, extrapolated) = geom.eval_delta_flagged(req.x + req.t - req.s, &req.f_s)?;

    let mut price = 0.0;
    for (i, hi) in req.payoff.monomial_coeffs.iter().enumerate() {
        if *hi == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for k in 0..=i {
            inner += binomial(i, k) * moment_at_x[i - k] * f_at.powi(k as i32);
        }
        price += hi * inner;
    }

    // Exit probability of the scalar forward N(f_at, σ²(x)) from [0, M].
    let sigma_x = geom
        .eval_delta(req.x, &AlgebraElement::grid(vars.clone()))?
        .max(0.0)
        .sqrt();
    let domain_exit_prob = if sigma_x > 0.0 {
        let normal = Normal::new(f_at, sigma_x)
            .map_err(|e| Error::InvalidArgument(format!("exit-probability law: {e}")))?;
        normal.cdf(0.0) + (1.0 - normal.cdf(req.payoff.domain_m))
    } else {
        let inside = (0.0..=req.payoff.domain_m).contains(&f_at);
        if inside {
            0.0
        } else {
            1.0
        }
    };

    let diagnostics = PriceDiagnostics {
        bernstein_sup_error: req.payoff.sup_error,
        basis_agreement_residual: req.payoff.basis_agreement_residual(1000),
        domain_exit_prob,
        extrapolated,
        method: "bernstein-moment",
    };
    Ok((price, diagnostics))
}

/// Frozen-path Monte Carlo price: sample X⊥(s;t), form δ_x(X∥ + X⊥) and
/// average the EXACT payoff (not its Bernstein image). Returns (price, se).
pub fn price_mc(
    req: &PricingRequest,
    process: &OUProcess,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    req.validate(process)?;
    if n_paths < 100 {
        return Err(Error::InvalidArgument("need n_paths ≥ 100".into()));
    }
    let geom = process.geometry();
    let decomposition = process.decompose(&req.f_s, req.s, req.t)?;
    let law = match &decomposition.perp_law {
        PerpLaw::Gaussian(law) => law.clone(),
        _ => unreachable!("OU perp law is Gaussian"),
    };
    let sampler = law.sampler()?;
    let parallel = decomposition.parallel;
    let tag = parallel.tag();

    let payoff = |z: f64| -> f64 {
        match req.payoff_kind {
            PayoffKind::Call { strike } => (z - strike).max(0.0),
            PayoffKind::Put { strike } => (strike - z).max(0.0),
            PayoffKind::Custom => req.payoff.eval_monomial(z),
        }
    };

    const BATCH: usize = 4096;
    let n_batches = n_paths.div_ceil(BATCH);
    let partials: Vec<Result<crate::oracle::BatchMoments>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let lo = b * BATCH;
            let hi = ((b + 1) * BATCH).min(n_paths);
            let mut buffer = Vec::with_capacity(hi - lo);
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
                let z = geom.eval_delta(req.x, &x)?;
                buffer.push(payoff(z));
            }
            Ok(crate::oracle::BatchMoments::from_buffer(1, &buffer))
        })
        .collect();

    let mut parts = Vec::with_capacity(n_batches);
    for p in partials {
        parts.push(p?);
    }
    let total = crate::oracle::BatchMoments::combine_pairwise(parts)
        .ok_or_else(|| Error::InvalidArgument("no paths".into()))?;
    let est = total.into_estimate();
    Ok((est.mean[0], est.se[0]))
}

/// Frozen-path Monte Carlo price of a two-maturity payoff
/// `h(f(t, x₁), f(t, x₂))`, e.g. a calendar spread `max(z₁ − z₂, 0)`.
/// Multi-maturity payoffs are priced through Monte Carlo only; no closed
/// form is offered for them.
pub fn price_mc_spread<F>(
    f_s: &AlgebraElement,
    s: f64,
    t: f64,
    x1: f64,
    x2: f64,
    payoff: F,
    process: &OUProcess,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if !(0.0 <= s && s <= t) {
        return Err(Error::InvalidArgument(format!(
            "need 0 ≤ s ≤ t, got s = {s}, t = {t}"
        )));
    }
    if n_paths < 100 {
        return Err(Error::InvalidArgument("need n_paths ≥ 100".into()));
    }
    let geom = process.geometry();
    let decomposition = process.decompose(f_s, s, t)?;
    let law = match &decomposition.perp_law {
        PerpLaw::Gaussian(law) => law.clone(),
        _ => unreachable!("OU perp law is Gaussian"),
    };
    let sampler = law.sampler()?;
    let parallel = decomposition.parallel;
    let tag = parallel.tag();

    const BATCH: usize = 4096;
    let n_batches = n_paths.div_ceil(BATCH);
    let partials: Vec<Result<crate::oracle::BatchMoments>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let lo = b * BATCH;
            let hi = ((b + 1) * BATCH).min(n_paths);
            let mut buffer = Vec::with_capacity(hi - lo);
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
                let z1 = geom.eval_delta(x1, &x)?;
                let z2 = geom.eval_delta(x2, &x)?;
                buffer.push(payoff(z1, z2));
            }
            Ok(crate::oracle::BatchMoments::from_buffer(1, &buffer))
        })
        .collect();
    let mut parts = Vec::with_capacity(n_batches);
    for p in partials {
        parts.push(p?);
    }
    let total = crate::oracle::BatchMoments::combine_pairwise(parts)
        .ok_or_else(|| Error::InvalidArgument("no paths".into()))?;
    let est = total.into_estimate();
    Ok((est.mean[0], est.se[0]))
}
