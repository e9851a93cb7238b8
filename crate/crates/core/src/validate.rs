//! The validation suite: every closed form gated against the frozen-path
//! Monte Carlo oracle, plus the structural and statistical invariants. The
//! CLI `validate` command and the acceptance tests both run this suite.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::algebra::{Algebra, AlgebraElement, LatticeSpec, MatrixAlgebraSpec};
use crate::config::RunConfig;
use crate::counterexample;
use crate::error::Result;
use crate::moments::{
    self, binomial, cond_expectation_words, cond_moment_commutative, cond_moment_ou,
    norm_even_moment, norm_odd_moment, OddMomentQuad,
};
use crate::multilinear::{DenseTensor, KLinearMap, Monomial};
use crate::oracle::{
    conditional_mc, conditional_mc_scalar, tolerance_gate, FrozenScenario, LaplaceEstimator,
    MCEstimate, Process,
};
use crate::pricing::{price_mc, price_option, PayoffKind, PayoffPolynomial, PricingRequest};
use crate::process::{Decomposition, EntryMoments, MatrixLevyProcess, PerpLaw};

/// Options of a validation run.
#[derive(Clone, Debug)]
pub struct ValidateOptions {
    /// Seed of the suite (overrides the config seed).
    pub seed: u64,
    /// Test-only mutation hook: flip the sign of the pure-perp coefficient
    /// of the commutative binomial formula before gating, to demonstrate
    /// the suite fails when the closed form is wrong.
    pub mutate_lemma31: bool,
}

impl ValidateOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            mutate_lemma31: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GateResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub config_hash: String,
    pub seed: u64,
    pub gates: Vec<GateResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn failures(&self) -> Vec<&GateResult> {
        self.gates.iter().filter(|g| !g.passed).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// JUnit-style XML for CI consumption.
    pub fn to_junit_xml(&self) -> String {
        let failures = self.failures().len();
        let mut xml = String::new();
        xml.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        xml.push_str(&format!(
            "<testsuite name=\"validation\" tests=\"{}\" failures=\"{failures}\">\n",
            self.gates.len()
        ));
        for gate in &self.gates {
            let secs = gate.elapsed_ms as f64 / 1000.0;
            if gate.passed {
                xml.push_str(&format!(
                    "  <testcase name=\"{}\" time=\"{secs:.3}\"/>\n",
                    xml_escape(&gate.name)
                ));
            } else {
                xml.push_str(&format!(
                    "  <testcase name=\"{}\" time=\"{secs:.3}\">\n    <failure message=\"{}\"/>\n  </testcase>\n",
                    xml_escape(&gate.name),
                    xml_escape(&gate.detail)
                ));
            }
        }
        xml.push_str("</testsuite>\n");
        xml
    }

    /// One `name,passed,elapsed_ms,detail` row per gate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,passed,elapsed_ms,detail\n");
        for g in &self.gates {
            out.push_str(&format!(
                "{},{},{},\"{}\"\n",
                g.name,
                g.passed,
                g.elapsed_ms,
                g.detail.replace('"', "'")
            ));
        }
        out
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn gate<F>(out: &mut Vec<GateResult>, name: &str, body: F)
where
    F: FnOnce() -> Result<(bool, String)>,
{
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    out.push(GateResult {
        name: name.to_string(),
        passed,
        detail,
        elapsed_ms: start.elapsed().as_millis(),
    });
}

fn random_element(rng: &mut impl Rng, algebra: &Algebra) -> AlgebraElement {
    AlgebraElement::new(
        (0..algebra.dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
        algebra.tag(),
    )
    .expect("dimension matches")
}

/// Run the full gate suite under the given configuration.
pub fn run_suite(config: &RunConfig, options: &ValidateOptions) -> SuiteReport {
    let mut gates = Vec::new();
    let ctx = match SuiteContext::build(config, options) {
        Ok(ctx) => ctx,
        Err(e) => {
            gates.push(GateResult {
                name: "suite/setup".into(),
                passed: false,
                detail: format!("error: {e}"),
                elapsed_ms: 0,
            });
            return SuiteReport {
                config_hash: config.hash(),
                seed: options.seed,
                gates,
            };
        }
    };

    algebra_gates(&ctx, &mut gates);
    multilinear_gates(&ctx, &mut gates);
    process_gates(&ctx, &mut gates);
    lemma31_gates(&ctx, &mut gates);
    words_gates(&ctx, &mut gates);
    tower_gate(&ctx, &mut gates);
    appendix_law_gates(&ctx, &mut gates);
    norm_moment_gates(&ctx, &mut gates);
    counterexample_gates(&ctx, &mut gates);
    pricing_gates(&ctx, &mut gates);
    oracle_gates(&ctx, &mut gates);

    SuiteReport {
        config_hash: config.hash(),
        seed: options.seed,
        gates,
    }
}

struct SuiteContext {
    config: RunConfig,
    options: ValidateOptions,
    ou: crate::process::OUProcess,
    algebra: Algebra,
    /// Scenario frozen at s = 0.5 with target t = 1.0 on the default grid.
    scenario: FrozenScenario,
    s: f64,
    t: f64,
    k_sigma: f64,
    n_mc: usize,
}

impl SuiteContext {
    fn build(config: &RunConfig, options: &ValidateOptions) -> Result<Self> {
        let ou = config.ou_process()?;
        let algebra = ou.algebra();
        let (s, t) = (0.5, 1.0);
        let scenario =
            FrozenScenario::simulate_ou(ou.clone(), s, 0.01, options.seed, options.seed)?;
        Ok(Self {
            config: config.clone(),
            options: options.clone(),
            ou,
            algebra,
            scenario,
            s,
            t,
            k_sigma: config.mc.k_sigma,
            n_mc: config.mc.n_paths,
        })
    }

    fn matrix_scenario(&self, mu: f64, sigma2: f64, stream_tag: u64) -> Result<FrozenScenario> {
        let process = MatrixLevyProcess::new(2, mu, sigma2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed ^ 0x5eed_0000 ^ stream_tag);
        let y = AlgebraElement::matrix(2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        FrozenScenario::from_state(
            Process::MatrixLevy(process),
            y,
            self.s,
            self.options.seed ^ stream_tag,
        )
    }
}

// ---------------------------------------------------------------------------
// algebra

fn algebra_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    let geometries = [
        ("grid", Algebra::Grid(ctx.ou.geometry().clone())),
        (
            "matrix",
            Algebra::Matrix(MatrixAlgebraSpec::new(3).expect("d = 3")),
        ),
        (
            "lattice",
            Algebra::Lattice(LatticeSpec::new(12).expect("12 sites")),
        ),
    ];
    for (tag, alg) in &geometries {
        gate(out, &format!("algebra/submultiplicativity-{tag}"), || {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xa1);
            let mut worst = 0.0f64;
            for _ in 0..1000 {
                let a = random_element(&mut rng, alg);
                let b = random_element(&mut rng, alg);
                let lhs = alg.norm(&alg.mul(&a, &b)?)?;
                let rhs = alg.norm(&a)? * alg.norm(&b)?;
                if rhs > 0.0 {
                    worst = worst.max(lhs / rhs);
                }
                if lhs > rhs * (1.0 + 1e-9) {
                    return Ok((false, format!("‖ab‖ = {lhs} > ‖a‖‖b‖ = {rhs}")));
                }
            }
            Ok((true, format!("worst ratio {worst:.6}")))
        });
    }

    gate(out, "algebra/commutativity-and-witness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xa2);
        for (_, alg) in geometries.iter().filter(|(t, _)| *t != "matrix") {
            for _ in 0..200 {
                let a = random_element(&mut rng, alg);
                let b = random_element(&mut rng, alg);
                if alg.mul(&a, &b)? != alg.mul(&b, &a)? {
                    return Ok((false, "commutative tag failed exact commutativity".into()));
                }
            }
        }
        let malg = Algebra::Matrix(MatrixAlgebraSpec::new(2)?);
        let e12 = AlgebraElement::matrix_unit(2, 0, 1);
        let e21 = AlgebraElement::matrix_unit(2, 1, 0);
        let witness = malg.mul(&e12, &e21)? != malg.mul(&e21, &e12)?;
        Ok((witness, "matrix witness pair e₁₂, e₂₁".into()))
    });

    gate(out, "algebra/shift-semigroup-homomorphism", || {
        let geom = ctx.ou.geometry();
        let alg = &ctx.algebra;
        let dx = geom.grid().dx;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xa3);
        for _ in 0..100 {
            let g = random_element(&mut rng, alg);
            let h = random_element(&mut rng, alg);
            let m = rng.random_range(0..5usize) as f64;
            let n = rng.random_range(0..5usize) as f64;
            let semi = geom.shift(m * dx, &geom.shift(n * dx, &g)?)?;
            if semi != geom.shift((m + n) * dx, &g)? {
                return Ok((false, "semigroup law broke at a grid multiple".into()));
            }
            let hom = geom.shift(m * dx, &alg.mul(&g, &h)?)?;
            let rhs = alg.mul(&geom.shift(m * dx, &g)?, &geom.shift(m * dx, &h)?)?;
            if hom != rhs {
                return Ok((false, "homomorphism broke at a grid multiple".into()));
            }
        }
        Ok((true, "exact at grid multiples, 100 draws".into()))
    });

    gate(out, "algebra/eval-delta-linear-bounded", || {
        let geom = ctx.ou.geometry();
        let alg = &ctx.algebra;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xa4);
        let mut c_max = 0.0f64;
        for _ in 0..500 {
            let g = random_element(&mut rng, alg);
            let h = random_element(&mut rng, alg);
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let x = rng.random_range(0.0..geom.grid().x_max);
            let lin = geom.eval_delta(x, &AlgebraElement::axpby(a, &g, b, &h))?;
            let split = a * geom.eval_delta(x, &g)? + b * geom.eval_delta(x, &h)?;
            if (lin - split).abs() > 1e-11 * lin.abs().max(split.abs()).max(1.0) {
                return Ok((false, format!("linearity residual at x = {x}")));
            }
            let norm = alg.norm(&g)?;
            if norm > 1e-12 {
                c_max = c_max.max(geom.eval_delta(x, &g)?.abs() / norm);
            }
        }
        Ok((
            c_max.is_finite(),
            format!("empirical bound |δ_x(g)| ≤ {c_max:.4}·‖g‖"),
        ))
    });

    gate(out, "algebra/c-norm-closed-form", || {
        let geom = ctx.ou.geometry();
        let alpha = geom.grid().alpha;
        let expected = (1.0f64 + 8.0 * (1.0 + 1.0 / alpha)).sqrt();
        let got = geom.c_norm();
        Ok((
            (got - expected).abs() < 1e-12,
            format!("c = {got} (alpha = {alpha})"),
        ))
    });
}

// ---------------------------------------------------------------------------
// multilinear

fn multilinear_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    let alg = &ctx.algebra;

    gate(out, "multilinear/frechet-fd-ladder", || {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xb1);
        let mono = Monomial::new(KLinearMap::product(4)?);
        let u = random_element(&mut rng, alg);
        let dirs: Vec<AlgebraElement> = (0..2).map(|_| random_element(&mut rng, alg)).collect();
        let refs: Vec<&AlgebraElement> = dirs.iter().collect();
        let exact = mono.frechet_derivative(alg, &u, 2, &refs)?;
        let mut errs = Vec::new();
        for h in [1e-2, 5e-3, 2.5e-3] {
            let fd = mono.finite_difference_derivative(alg, &u, 2, &refs, h)?;
            errs.push(fd.sub(&exact).max_abs());
        }
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        let ok = (2.5..6.0).contains(&r1) && (2.5..6.0).contains(&r2);
        Ok((ok, format!("error ratios {r1:.2}, {r2:.2} (O(h²) ⇒ ≈ 4)")))
    });

    gate(out, "multilinear/commutative-coefficient", || {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xb2);
        for k in 1..=4usize {
            let mono = Monomial::new(KLinearMap::product(k)?);
            let u = random_element(&mut rng, alg);
            for n in 1..=k {
                let dirs: Vec<AlgebraElement> =
                    (0..n).map(|_| random_element(&mut rng, alg)).collect();
                let refs: Vec<&AlgebraElement> = dirs.iter().collect();
                let d = mono.frechet_derivative(alg, &u, n, &refs)?;
                let falling: f64 = ((k - n + 1)..=k).map(|v| v as f64).product();
                let mut prod = alg.pow(&u, k - n)?;
                for dir in &dirs {
                    prod = alg.mul(&prod, dir)?;
                }
                let expected = prod.scale(falling);
                if d.sub(&expected).max_abs() > 1e-10 * expected.max_abs().max(1.0) {
                    return Ok((false, format!("k = {k}, n = {n} coefficient mismatch")));
                }
            }
        }
        Ok((true, "k!/(k−n)! coefficients exact for k ≤ 4".into()))
    });

    gate(out, "multilinear/derivative-vanishing-and-symmetry", || {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xb3);
        let dim = alg.dim();
        let mut tensor = DenseTensor::zeros(dim, 3)?;
        for v in tensor.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let mono = Monomial::new(KLinearMap::dense(tensor, alg)?);
        let u = random_element(&mut rng, alg);
        let dirs: Vec<AlgebraElement> = (0..4).map(|_| random_element(&mut rng, alg)).collect();
        let refs4: Vec<&AlgebraElement> = dirs.iter().collect();
        let vanish = mono.frechet_derivative(alg, &u, 4, &refs4)?;
        if vanish.max_abs() != 0.0 {
            return Ok((false, "D^{k+1} did not vanish exactly".into()));
        }
        let d_abc = mono.frechet_derivative(alg, &u, 2, &[&dirs[0], &dirs[1]])?;
        let d_bca = mono.frechet_derivative(alg, &u, 2, &[&dirs[1], &dirs[0]])?;
        let symmetric = d_abc.sub(&d_bca).max_abs() < 1e-12;
        Ok((
            symmetric,
            "D^{k+1} = 0 exact; direction symmetry exact".into(),
        ))
    });

    gate(out, "multilinear/lipschitz-bound", || {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xb4);
        for k in 1..=4usize {
            let mono = Monomial::new(KLinearMap::product(k)?);
            for _ in 0..250 {
                let x = random_element(&mut rng, alg);
                let y = random_element(&mut rng, alg);
                let (lhs, rhs) = mono.lipschitz_witness(alg, &x, &y)?;
                if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                    return Ok((false, format!("k = {k}: {lhs} > {rhs}")));
                }
            }
        }
        Ok((true, "1000 random pairs, k ≤ 4".into()))
    });

    gate(out, "multilinear/form-norm-square", || {
        let geom = ctx.ou.geometry();
        let dim = alg.dim();
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = geom.gram()[(i, j)];
            }
        }
        let form = crate::multilinear::MultilinearForm::new(dim, 2, data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xb5);
        for _ in 0..100 {
            let x = random_element(&mut rng, alg);
            let n = alg.norm(&x)?;
            let v = form.eval_monomial(&x)?;
            if (v - n * n).abs() > 1e-10 * (n * n).max(1.0) {
                return Ok((false, format!("⟨x,x⟩ = {v} vs ‖x‖² = {}", n * n)));
            }
        }
        Ok((true, "paired-inner-product tensor equals ‖x‖²".into()))
    });
}

// ---------------------------------------------------------------------------
// process

fn process_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    gate(out, "process/quadrature-refinement", || {
        let coarse = ctx.ou.perp_covariance_with_step(ctx.s, ctx.t, 1e-3)?;
        let fine = ctx.ou.perp_covariance_with_step(ctx.s, ctx.t, 1e-4)?;
        let mut worst = 0.0f64;
        for i in 0..ctx.algebra.dim() {
            let (a, b) = (coarse.cov_entry(i, i), fine.cov_entry(i, i));
            if b.abs() > 1e-14 {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
        Ok((
            worst <= 1e-4,
            format!("max relative variance error {worst:.2e}"),
        ))
    });

    gate(out, "process/chapman-kolmogorov", || {
        let dt = ctx.ou.geometry().grid().dx;
        let c1 = ctx.ou.perp_covariance(0.0, dt)?.cov();
        let c2 = ctx.ou.perp_covariance(0.0, 2.0 * dt)?.cov();
        let s = ctx.ou.shift_matrix(dt)?;
        let composed = &s * &c1 * s.transpose() + &c1;
        let scale = c2.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-12);
        let mut worst = 0.0f64;
        for i in 0..c2.nrows() {
            for j in 0..c2.ncols() {
                worst = worst.max((composed[(i, j)] - c2[(i, j)]).abs() / scale);
            }
        }
        Ok((
            worst <= 1e-6,
            format!("max relative discrepancy {worst:.2e}"),
        ))
    });

    gate(out, "process/sample-covariance", || {
        let law = ctx.ou.perp_covariance(ctx.s, ctx.t)?;
        let sampler = law.sampler()?;
        let n = 100_000usize;
        let dim = law.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xc1);
        let mut acc = DMatrix::<f64>::zeros(dim, dim);
        for _ in 0..n {
            let x = sampler.sample(&mut rng);
            acc.syger(1.0, &x, &x, 1.0);
        }
        let emp = acc / n as f64;
        let mut worst_z = 0.0f64;
        for i in 0..dim {
            for j in 0..=i {
                let cij = law.cov_entry(i, j);
                let se =
                    ((law.cov_entry(i, i) * law.cov_entry(j, j) + cij * cij) / n as f64).sqrt();
                let z = (emp[(i, j)] - cij).abs() / se.max(1e-300);
                worst_z = worst_z.max(z);
            }
        }
        Ok((
            worst_z <= ctx.k_sigma,
            format!("worst |z| = {worst_z:.2} over covariance entries, n = {n}"),
        ))
    });

    gate(out, "process/decomposition-independence", || {
        let n = 10_000usize;
        let law = ctx.ou.perp_covariance(ctx.s, ctx.t)?;
        let sampler = law.sampler()?;
        let mut rng_perp = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xc2);
        let tau = ctx.t - ctx.s;
        // Step sampler shared across paths (the increment law is stationary).
        let dt = 0.05;
        let steps = (ctx.s / dt).round() as usize;
        let step_sampler = ctx.ou.perp_covariance(0.0, dt)?.sampler()?;
        let geom = ctx.ou.geometry();
        let mut rng_path = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xc3);
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut state = AlgebraElement::zeros(ctx.algebra.tag());
            for _ in 0..steps {
                let transported = geom.shift(dt, &state)?;
                let noise = step_sampler.sample(&mut rng_path);
                state = AlgebraElement::new(
                    transported
                        .coords()
                        .iter()
                        .zip(noise.iter())
                        .map(|(a, b)| a + b)
                        .collect(),
                    ctx.algebra.tag(),
                )?;
            }
            let parallel = geom.shift(tau, &state)?;
            let perp = sampler.sample(&mut rng_perp);
            pairs.push((parallel.coords()[4], perp[9]));
        }
        let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let mean_b = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        for (a, b) in &pairs {
            cov += (a - mean_a) * (b - mean_b);
            var_a += (a - mean_a).powi(2);
            var_b += (b - mean_b).powi(2);
        }
        let corr = cov / (var_a.sqrt() * var_b.sqrt()).max(1e-300);
        let se = 1.0 / (n as f64).sqrt();
        Ok((
            corr.abs() <= ctx.k_sigma * se,
            format!(
                "sample correlation {corr:.4} (5·SE = {:.4})",
                ctx.k_sigma * se
            ),
        ))
    });

    gate(out, "process/moment-finiteness-ratio", || {
        let law = ctx.ou.perp_covariance(ctx.s, ctx.t)?;
        let sampler = law.sampler()?;
        let alg = &ctx.algebra;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xc4);
        let n = 20_000usize;
        let mut norms = Vec::with_capacity(n);
        for _ in 0..n {
            let x = AlgebraElement::from_vector(&sampler.sample(&mut rng), alg.tag())?;
            norms.push(alg.norm(&x)?);
        }
        for order in [2usize, 4, 6, 8] {
            let half: f64 = norms[..n / 2]
                .iter()
                .map(|v| v.powi(order as i32))
                .sum::<f64>()
                / (n / 2) as f64;
            let full: f64 = norms.iter().map(|v| v.powi(order as i32)).sum::<f64>() / n as f64;
            let ratio = full / half;
            if !(0.8..1.25).contains(&ratio) {
                return Ok((
                    false,
                    format!("order {order}: mean ratio {ratio:.3} outside [0.8, 1.25]"),
                ));
            }
        }
        Ok((true, "sample means of ‖X⊥‖ⁿ stable for n ≤ 8".into()))
    });

    gate(out, "process/matrix-levy-ks", || {
        let p = MatrixLevyProcess::new(2, 0.0, 1.0)?;
        let tau = 1.0;
        let d = p.decompose(
            &AlgebraElement::zeros(crate::algebra::AlgebraTag::Matrix { d: 2 }),
            0.0,
            tau,
        )?;
        let sampler = d.perp_law.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xc5);
        let mut samples = Vec::with_capacity(10_000);
        for _ in 0..2_500 {
            let m = sampler.sample(&mut rng);
            samples.extend(m.iter().copied());
        }
        let p_value = ks_test_standard_normal(&mut samples);
        Ok((
            p_value > 0.01,
            format!("KS p-value {p_value:.4} on 10⁴ standardized entries"),
        ))
    });

    gate(out, "process/seed-reproducibility", || {
        let p1 = ctx.ou.simulate_path(None, 0.5, 0.05, ctx.options.seed)?;
        let p2 = ctx.ou.simulate_path(None, 0.5, 0.05, ctx.options.seed)?;
        for (a, b) in p1.states.iter().zip(&p2.states) {
            if a != b {
                return Ok((false, "same-seed paths diverged".into()));
            }
        }
        let law = ctx.ou.perp_covariance(ctx.s, ctx.t)?;
        let a = crate::process::sample_perp(&law, 11)?;
        let b = crate::process::sample_perp(&law, 11)?;
        Ok((
            a == b,
            "paths and perp draws are pure functions of seeds".into(),
        ))
    });
}

/// One-sample Kolmogorov–Smirnov test against the standard normal
/// (asymptotic p-value).
fn ks_test_standard_normal(samples: &mut [f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = samples.len() as f64;
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut d = 0.0f64;
    for (i, x) in samples.iter().enumerate() {
        let cdf = normal.cdf(*x);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi.max(lo));
    }
    let lambda = d * n.sqrt();
    let mut p = 0.0;
    for j in 1..=100 {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        p += sign * (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
    }
    (2.0 * p).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// moments: the commutative binomial formula against the oracle

/// Closed-form claim for the Lemma-3.1 gates, with the optional test-only
/// sign flip of the pure-perp coefficient.
fn lemma31_claim(
    ctx: &SuiteContext,
    algebra: &Algebra,
    k: usize,
    decomposition: &Decomposition,
) -> Result<Vec<f64>> {
    let result = cond_moment_commutative(algebra, k, decomposition)?;
    let mut value = result.value;
    if ctx.options.mutate_lemma31 {
        let pure_perp = &result.contributions[0].value;
        value = AlgebraElement::axpby(1.0, &value, -2.0, pure_perp);
    }
    Ok(value.coords().to_vec())
}

fn lemma31_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    for k in 1..=4usize {
        gate(out, &format!("moments/lemma31-k{k}"), || {
            let decomposition = ctx.scenario.decomposition(ctx.t)?;
            let claim = lemma31_claim(ctx, &ctx.algebra, k, &decomposition)?;
            let est = conditional_mc(
                &ctx.scenario,
                |x| x.coords().iter().map(|c| c.powi(k as i32)).collect(),
                ctx.t,
                ctx.n_mc,
                10 + k as u64,
            )?;
            let outcome = tolerance_gate(&est, &claim, ctx.k_sigma)?;
            Ok((
                outcome.pass,
                format!(
                    "worst |z| = {:.2} at node {} ({} samples)",
                    outcome.max_z, outcome.worst_index, ctx.n_mc
                ),
            ))
        });
    }

    gate(out, "moments/example-ou-vs-oracle", || {
        // At a grid-multiple horizon the generalized-polynomial form is the
        // exact conditional expectation of the discretized dynamics.
        let dx = ctx.ou.geometry().grid().dx;
        let t = ctx.s + 2.0 * dx;
        let k = 3usize;
        let r = cond_moment_ou(k, ctx.scenario.state(), ctx.s, t, &ctx.ou)?;
        let est = conditional_mc(
            &ctx.scenario,
            |x| x.coords().iter().map(|c| c.powi(k as i32)).collect(),
            t,
            ctx.n_mc,
            20,
        )?;
        let outcome = tolerance_gate(&est, r.value.coords(), ctx.k_sigma)?;
        Ok((
            outcome.pass,
            format!("worst |z| = {:.2} (k = {k}, τ = 2·dx)", outcome.max_z),
        ))
    });

    gate(out, "moments/example-ou-homomorphism", || {
        let dx = ctx.ou.geometry().grid().dx;
        let (s, t) = (2.0 * dx, 5.0 * dx);
        let f = ctx.scenario.state();
        let d = ctx.ou.decompose(f, s, t)?;
        for k in 1..=5usize {
            let a = cond_moment_ou(k, f, s, t, &ctx.ou)?;
            let b = cond_moment_commutative(&ctx.algebra, k, &d)?;
            let scale = b.value.max_abs().max(1.0);
            if a.value.sub(&b.value).max_abs() > 1e-10 * scale {
                return Ok((false, format!("k = {k} deviates beyond 1e-10")));
            }
        }
        Ok((
            true,
            "generalized-polynomial form ≡ binomial form, k ≤ 5".into(),
        ))
    });
}

fn words_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    gate(out, "moments/word-counts-binomial", || {
        let d = ctx.scenario.decomposition(ctx.t)?;
        for k in 1..=5usize {
            let map = KLinearMap::product(k)?;
            let exp = cond_expectation_words(&ctx.algebra, &map, &d, 1000, 1)?;
            for (j, count) in exp.word_counts_by_par.iter().enumerate() {
                if *count as f64 != binomial(k, j) {
                    return Ok((false, format!("k = {k}, j = {j}: {count} words ≠ C(k,j)")));
                }
            }
        }
        Ok((true, "2^k words split into binomial classes, k ≤ 5".into()))
    });

    gate(out, "moments/words-vs-binomial-closed-form", || {
        let d = ctx.scenario.decomposition(ctx.t)?;
        for k in 1..=4usize {
            let map = KLinearMap::product(k)?;
            let words = cond_expectation_words(&ctx.algebra, &map, &d, 1000, 1)?;
            let closed = cond_moment_commutative(&ctx.algebra, k, &d)?;
            let scale = closed.value.max_abs().max(1.0);
            if words.result.value.sub(&closed.value).max_abs() > 1e-10 * scale {
                return Ok((false, format!("k = {k} word sum deviates")));
            }
        }
        Ok((
            true,
            "exact word route ≡ Lemma-3.1 closed form, k ≤ 4".into(),
        ))
    });

    gate(out, "moments/words-matrix-mixed-term", || {
        // PERP·PAR·PERP in the matrix algebra is E[Δ·X∥·Δ], the operator
        // the counterexample studies.
        let scenario = ctx.matrix_scenario(0.0, 2.0, 7)?;
        let d = scenario.decomposition(ctx.t)?;
        let map = KLinearMap::product(3)?;
        let exp = cond_expectation_words(&scenario.algebra(), &map, &d, 1000, 1)?;
        let mixed = exp
            .terms
            .iter()
            .find(|t| {
                t.word.0
                    == vec![
                        moments::Letter::Perp,
                        moments::Letter::Par,
                        moments::Letter::Perp,
                    ]
            })
            .expect("word present");
        let em = EntryMoments::gaussian(0.0, 2.0 * (ctx.t - ctx.s));
        let closed = counterexample::operator_l(&d.parallel, &em, 2)?;
        let ok = mixed.value.sub(&closed).max_abs() < 1e-12;
        Ok((ok, "E[Δ·X∥·Δ] matches the closed-form operator".into()))
    });

    gate(out, "moments/words-zero-parallel", || {
        let d = Decomposition {
            parallel: AlgebraElement::zeros(ctx.algebra.tag()),
            perp_law: ctx.scenario.decomposition(ctx.t)?.perp_law,
        };
        let map = KLinearMap::product(4)?;
        let exp = cond_expectation_words(&ctx.algebra, &map, &d, 1000, 1)?;
        for term in &exp.terms {
            if term.word.par_count() > 0 && term.value.max_abs() != 0.0 {
                return Ok((false, "a PAR-containing word survived X∥ = 0".into()));
            }
        }
        Ok((true, "only the all-PERP word survives".into()))
    });

    gate(out, "moments/words-mc-route-agrees", || {
        // Dense rep over the matrix algebra with an iid law goes through the
        // Monte Carlo fallback; ve it against the closed product route.
        let scenario = ctx.matrix_scenario(0.3, 1.0, 8)?;
        let d = scenario.decomposition(ctx.t)?;
        let alg = scenario.algebra();
        // Dense tensor of the triple matrix product.
        let dim = 4usize;
        let mut tensor = DenseTensor::zeros(dim, 3)?;
        for i1 in 0..2 {
            for j1 in 0..2 {
                for i2 in 0..2 {
                    for j2 in 0..2 {
                        for i3 in 0..2 {
                            for j3 in 0..2 {
                                if j1 == i2 && j2 == i3 {
                                    let idx = [i1 * 2 + j1, i2 * 2 + j2, i3 * 2 + j3];
                                    let flat = tensor.flat(&idx, i1 * 2 + j3);
                                    tensor.data_mut()[flat] += 1.0;
                                }
                            }
                        }
                    }
                }
            }
        }
        let dense = KLinearMap::dense(tensor, &alg)?;
        let product = KLinearMap::product(3)?;
        let exact = cond_expectation_words(&alg, &product, &d, 1000, 1)?;
        let mc = cond_expectation_words(&alg, &dense, &d, 100_000, ctx.options.seed ^ 0xd1)?;
        let se = mc.result.se.as_ref().expect("MC route reports SE");
        for (i, (m, c)) in mc
            .result
            .value
            .coords()
            .iter()
            .zip(exact.result.value.coords())
            .enumerate()
        {
            if (m - c).abs() > ctx.k_sigma * se[i] + 1e-12 {
                return Ok((
                    false,
                    format!(
                        "component {i}: |{m} − {c}| > 5·se = {}",
                        ctx.k_sigma * se[i]
                    ),
                ));
            }
        }
        Ok((true, "MC fallback within 5·SE of the exact route".into()))
    });
}

fn tower_gate(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    gate(out, "moments/tower-consistency", || {
        // r < s < t: E_r[q_k(X∥(s;t))] must equal the direct closed form
        // from r, by the law of total expectation. Grid-multiple horizons,
        // where the discretized semigroup composes exactly.
        let dx = ctx.ou.geometry().grid().dx;
        let (r, s, t) = (dx, 2.0 * dx, 4.0 * dx);
        let k = 2usize;
        let scenario_r = FrozenScenario::simulate_ou(
            ctx.ou.clone(),
            r,
            r / 20.0,
            ctx.options.seed ^ 0xe1,
            ctx.options.seed ^ 0xe2,
        )?;
        let claim = cond_moment_commutative(
            &ctx.algebra,
            k,
            &ctx.ou.decompose(scenario_r.state(), r, t)?,
        )?;
        // Inner closed form with the (s,t) covariance precomputed.
        let inner_law = ctx.ou.perp_covariance(s, t)?;
        let geom = ctx.ou.geometry().clone();
        let algebra = ctx.algebra.clone();
        let tau_inner = t - s;
        let est = conditional_mc(
            &scenario_r,
            move |x_s| {
                let d = Decomposition {
                    parallel: geom.shift(tau_inner, x_s).expect("shift within policy"),
                    perp_law: PerpLaw::Gaussian(inner_law.clone()),
                };
                cond_moment_commutative(&algebra, k, &d)
                    .expect("closed form evaluates")
                    .value
                    .into_coords()
            },
            s,
            20_000,
            31,
        )?;
        let outcome = tolerance_gate(&est, claim.value.coords(), ctx.k_sigma)?;
        Ok((
            outcome.pass,
            format!(
                "worst |z| = {:.2} (law of total expectation)",
                outcome.max_z
            ),
        ))
    });
}

// ---------------------------------------------------------------------------
// appendix conditional-expectation laws

fn appendix_law_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    let n = ctx.n_mc;

    gate(out, "laws/operator-exchange", || {
        // E[𝒜X | ℱ_s] = 𝒜E[X | ℱ_s] for a random bounded linear 𝒜.
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xf1);
        let dim = ctx.algebra.dim();
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.5..0.5));
        let d = ctx.scenario.decomposition(ctx.t)?;
        let claim = &a * d.parallel.as_vector();
        let a2 = a.clone();
        let est = conditional_mc(
            &ctx.scenario,
            move |x| (&a2 * x.as_vector()).iter().copied().collect(),
            ctx.t,
            n,
            41,
        )?;
        let outcome = tolerance_gate(&est, claim.as_slice(), ctx.k_sigma)?;
        Ok((outcome.pass, format!("worst |z| = {:.2}", outcome.max_z)))
    });

    gate(out, "laws/conditional-independence", || {
        // X⊥ independent of ℱ_s: E[X⊥ | ℱ_s] = E[X⊥] = 0.
        let d = ctx.scenario.decomposition(ctx.t)?;
        let parallel = d.parallel.clone();
        let est = conditional_mc(
            &ctx.scenario,
            move |x| {
                x.coords()
                    .iter()
                    .zip(parallel.coords())
                    .map(|(full, par)| full - par)
                    .collect()
            },
            ctx.t,
            n,
            42,
        )?;
        let claim = vec![0.0; ctx.algebra.dim()];
        let outcome = tolerance_gate(&est, &claim, ctx.k_sigma)?;
        Ok((outcome.pass, format!("worst |z| = {:.2}", outcome.max_z)))
    });

    gate(out, "laws/bochner-factorization", || {
        // g·E[X] = E[g·X] for a fixed algebra element g.
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0xf2);
        let g = random_element(&mut rng, &ctx.algebra);
        let d = ctx.scenario.decomposition(ctx.t)?;
        let claim = ctx.algebra.mul(&g, &d.parallel)?;
        let algebra = ctx.algebra.clone();
        let g2 = g.clone();
        let est = conditional_mc(
            &ctx.scenario,
            move |x| algebra.mul(&g2, x).expect("same algebra").into_coords(),
            ctx.t,
            n,
            43,
        )?;
        let outcome = tolerance_gate(&est, claim.coords(), ctx.k_sigma)?;
        Ok((outcome.pass, format!("worst |z| = {:.2}", outcome.max_z)))
    });

    gate(out, "laws/two-sided-factorization-matrix", || {
        // Y·E[X|𝒢] = E[YX|𝒢] and E[X|𝒢]·Y = E[XY|𝒢], checked on both sides
        // separately in the non-commutative matrix algebra with drift.
        let scenario = ctx.matrix_scenario(1.0, 1.0, 9)?;
        let alg = scenario.algebra();
        let y = scenario.state().clone();
        let tau = ctx.t - ctx.s;
        // E[Δ] has every entry equal to μ·τ.
        let e_delta = AlgebraElement::matrix(2, vec![tau; 4])?;
        let claim_left = alg.mul(&y, &e_delta)?;
        let claim_right = alg.mul(&e_delta, &y)?;

        let (alg_l, y_l) = (alg.clone(), y.clone());
        let est_left = conditional_mc(
            &scenario,
            move |x| {
                let delta = x.sub(&y_l);
                alg_l
                    .mul(&y_l, &delta)
                    .expect("matrix product")
                    .into_coords()
            },
            ctx.t,
            n,
            44,
        )?;
        let outcome_left = tolerance_gate(&est_left, claim_left.coords(), ctx.k_sigma)?;

        let (alg_r, y_r) = (alg.clone(), y.clone());
        let est_right = conditional_mc(
            &scenario,
            move |x| {
                let delta = x.sub(&y_r);
                alg_r
                    .mul(&delta, &y_r)
                    .expect("matrix product")
                    .into_coords()
            },
            ctx.t,
            n,
            45,
        )?;
        let outcome_right = tolerance_gate(&est_right, claim_right.coords(), ctx.k_sigma)?;
        Ok((
            outcome_left.pass && outcome_right.pass,
            format!(
                "left worst |z| = {:.2}, right worst |z| = {:.2}",
                outcome_left.max_z, outcome_right.max_z
            ),
        ))
    });

    gate(out, "laws/freezing-xyx", || {
        // E[f(X,Y)|𝒢] = E[f(X,y)]|_{y=Y} for f(x,y) = x·y·x: the frozen-path
        // average of Δ·Y·Δ against the closed-form operator at Y.
        let scenario = ctx.matrix_scenario(0.5, 1.5, 10)?;
        let alg = scenario.algebra();
        let y = scenario.state().clone();
        let tau = ctx.t - ctx.s;
        let em = EntryMoments::gaussian(0.5 * tau, 1.5 * tau);
        let claim = counterexample::operator_l(&y, &em, 2)?;
        let y2 = y.clone();
        let est = conditional_mc(
            &scenario,
            move |x| {
                let delta = x.sub(&y2);
                let dy = alg.mul(&delta, &y2).expect("matrix product");
                alg.mul(&dy, &delta).expect("matrix product").into_coords()
            },
            ctx.t,
            n,
            46,
        )?;
        let outcome = tolerance_gate(&est, claim.coords(), ctx.k_sigma)?;
        Ok((outcome.pass, format!("worst |z| = {:.2}", outcome.max_z)))
    });
}

// ---------------------------------------------------------------------------
// norm moments

fn norm_moment_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    gate(out, "norms/even-k2-identity-and-mc", || {
        let geom = ctx.ou.geometry();
        // Unconditional law of X(1) started from zero: centered Gaussian.
        let law = ctx.ou.perp_covariance(0.0, 1.0)?;
        let m2 = norm_even_moment(geom, &law, 2)?;
        let (_, c) = moments::orthonormal_coordinates(geom, &law)?;
        let tr = c.trace();
        let frob_sq: f64 = c.iter().map(|v| v * v).sum();
        let identity = tr * tr + 2.0 * frob_sq;
        if (m2 - identity).abs() > 1e-8 * identity.max(1.0) {
            return Ok((
                false,
                format!("Isserlis sum {m2} vs pairing identity {identity}"),
            ));
        }
        // Monte Carlo cross-check from a scenario frozen at s = 0 (X∥ = 0).
        let zero_scenario = FrozenScenario::from_state(
            Process::Ou(ctx.ou.clone()),
            AlgebraElement::zeros(ctx.algebra.tag()),
            0.0,
            ctx.options.seed ^ 0x41,
        )?;
        let alg = ctx.algebra.clone();
        let est = conditional_mc_scalar(
            &zero_scenario,
            move |x| alg.norm(x).map(|v| v.powi(4)).unwrap_or(f64::NAN),
            1.0,
            100_000,
            47,
        )?;
        let outcome = tolerance_gate(&est, &[m2], ctx.k_sigma)?;
        Ok((
            outcome.pass,
            format!("identity exact; MC |z| = {:.2}", outcome.max_z),
        ))
    });

    gate(out, "norms/even-k1-trace", || {
        let geom = ctx.ou.geometry();
        let law = ctx.ou.perp_covariance(0.0, 1.0)?;
        let m1 = norm_even_moment(geom, &law, 1)?;
        let (_, c) = moments::orthonormal_coordinates(geom, &law)?;
        let ok = (m1 - c.trace()).abs() <= 1e-9 * c.trace().max(1.0);
        Ok((ok, format!("E‖X‖² = {m1} vs tr = {}", c.trace())))
    });

    gate(out, "norms/odd-scalar-closed-form", || {
        let phi = |x: f64| (1.0 + 2.0 * x).powf(-0.5);
        let v = norm_odd_moment(0, phi, &OddMomentQuad::default())?;
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        Ok((
            (v - expected).abs() < 1e-4,
            format!("E|N(0,1)| = {v:.6} vs √(2/π) = {expected:.6}"),
        ))
    });

    gate(out, "norms/odd-grid-two-estimators", || {
        // Fractional-integral route with a pooled Laplace estimator against
        // direct Monte Carlo of E[‖X(t)‖ | ℱ_s], independent streams.
        let estimator = LaplaceEstimator::build(&ctx.scenario, ctx.t, 2.0, 100_000, 48)?;
        let odd = norm_odd_moment(0, |x| estimator.eval(x), &OddMomentQuad::default())?;
        let alg = ctx.algebra.clone();
        let direct = conditional_mc_scalar(
            &ctx.scenario,
            move |x| alg.norm(x).unwrap_or(f64::NAN),
            ctx.t,
            100_000,
            49,
        )?;
        // The integral estimate inherits the sampling error of mean(q^α).
        let (_, se_frac) = estimator.power_moment(0.5);
        let combined = (direct.scalar_se().powi(2) + se_frac * se_frac).sqrt();
        let diff = (odd - direct.scalar_mean()).abs();
        Ok((
            diff <= ctx.k_sigma * combined + 1e-9,
            format!(
                "fractional {odd:.6} vs direct {:.6} (5·combined SE = {:.2e})",
                direct.scalar_mean(),
                ctx.k_sigma * combined
            ),
        ))
    });
}

// ---------------------------------------------------------------------------
// counterexample

fn counterexample_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    gate(out, "counterexample/operator-e12", || {
        let em = EntryMoments::gaussian(0.0, 1.0);
        let e12 = AlgebraElement::matrix_unit(2, 0, 1);
        let e21 = AlgebraElement::matrix_unit(2, 1, 0);
        let image = counterexample::operator_l(&e12, &em, 2)?;
        if image != e21 {
            return Ok((false, "ℒ(e₁₂) ≠ e₂₁".into()));
        }
        let verdict = counterexample::assert_no_left_multiplier(&e12, &e21)?;
        Ok((
            verdict.is_inconsistent() && verdict.residual() >= 1.0 - 1e-12,
            format!(
                "INCONSISTENT with Frobenius residual {:.6} ≥ 1",
                verdict.residual()
            ),
        ))
    });

    gate(out, "counterexample/left-multiplier-solvable", || {
        let h = AlgebraElement::matrix(2, vec![1.0, 2.0, 3.0, 4.0])?;
        let id = AlgebraElement::matrix(2, vec![1.0, 0.0, 0.0, 1.0])?;
        match counterexample::assert_no_left_multiplier(&h, &h)? {
            counterexample::MultiplierVerdict::Solved { a, .. } => {
                if a.sub(&id).max_abs() > 1e-9 {
                    return Ok((false, "a·h = h did not solve to the identity".into()));
                }
            }
            _ => return Ok((false, "consistent system misclassified".into())),
        }
        match counterexample::assert_no_left_multiplier(&h, &h.scale(2.0))? {
            counterexample::MultiplierVerdict::Solved { a, .. } => {
                let ok = a.sub(&id.scale(2.0)).max_abs() < 1e-9;
                Ok((ok, "identity and scaling solutions recovered".into()))
            }
            _ => Ok((false, "scaled system misclassified".into())),
        }
    });

    gate(out, "counterexample/operator-linearity", || {
        let em = EntryMoments::gaussian(0.3, 1.2);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0x51);
        for _ in 0..100 {
            let h1 =
                AlgebraElement::matrix(2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            let h2 =
                AlgebraElement::matrix(2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let combo = counterexample::operator_l(&AlgebraElement::axpby(a, &h1, b, &h2), &em, 2)?;
            let split = AlgebraElement::axpby(
                a,
                &counterexample::operator_l(&h1, &em, 2)?,
                b,
                &counterexample::operator_l(&h2, &em, 2)?,
            );
            if combo.sub(&split).max_abs() > 1e-12 {
                return Ok((false, "ℒ failed exact linearity".into()));
            }
        }
        Ok((true, "ℒ linear over 100 random pairs".into()))
    });

    gate(out, "counterexample/operator-mc", || {
        let em = EntryMoments::gaussian(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0x52);
        let h = AlgebraElement::matrix(2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let claim = counterexample::operator_l(&h, &em, 2)?;
        let scenario = FrozenScenario::from_state(
            Process::MatrixLevy(MatrixLevyProcess::new(2, 0.0, 1.0)?),
            AlgebraElement::zeros(crate::algebra::AlgebraTag::Matrix { d: 2 }),
            0.0,
            ctx.options.seed ^ 0x53,
        )?;
        let alg = scenario.algebra();
        let h2 = h.clone();
        let est = conditional_mc(
            &scenario,
            move |delta| {
                let dh = alg.mul(delta, &h2).expect("matrix product");
                alg.mul(&dh, delta).expect("matrix product").into_coords()
            },
            1.0,
            ctx.n_mc,
            54,
        )?;
        let outcome = tolerance_gate(&est, claim.coords(), ctx.k_sigma)?;
        Ok((
            outcome.pass,
            format!(
                "worst |z| = {:.2} over entries ({} draws)",
                outcome.max_z, ctx.n_mc
            ),
        ))
    });

    gate(out, "counterexample/d2-mismatch", || {
        let em = EntryMoments::gaussian(1.0, 1.0);
        let result = counterexample::d2_mismatch(&em)?;
        let expected = AlgebraElement::matrix(2, vec![2.0, 3.0, 3.0, 2.0])?;
        if result.lhs.sub(&expected).max_abs() > 1e-12 {
            return Ok((false, "closed form differs from [[2,3],[3,2]]".into()));
        }
        if !result.rhs_is_zero || !result.contradiction {
            return Ok((false, "expected CONTRADICTION verdict".into()));
        }
        let centered = counterexample::d2_mismatch(&EntryMoments::gaussian(0.0, 1.0))?;
        Ok((
            !centered.contradiction && centered.lhs.max_abs() < 1e-14,
            "drifted case contradicts; centered case vanishes".into(),
        ))
    });

    gate(out, "counterexample/d2-mc-crosscheck", || {
        // Mixed central difference of f(y) = E[Δ y Δ y Δ] by Monte Carlo with
        // common random numbers; f is quadratic in y so the stencil is exact
        // up to sampling noise.
        let em = EntryMoments::gaussian(1.0, 1.0);
        let claim = counterexample::d2_mismatch(&em)?.lhs;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0x55);
        let y0 = AlgebraElement::matrix(2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let (mean, se) = counterexample::d2_mixed_difference_mc(
            &em,
            &y0,
            1.0,
            ctx.n_mc,
            ctx.options.seed ^ 0x56,
        )?;
        let mut worst_z = 0.0f64;
        for (i, (m, s)) in mean.coords().iter().zip(&se).enumerate() {
            worst_z = worst_z.max((m - claim.coords()[i]).abs() / s.max(1e-300));
        }
        Ok((
            worst_z <= ctx.k_sigma,
            format!(
                "worst |z| = {worst_z:.2} ({} common-random-number draws)",
                ctx.n_mc
            ),
        ))
    });

    gate(out, "counterexample/boundedness-witness", || {
        let em = EntryMoments::gaussian(0.2, 0.9);
        let bound = counterexample::frobenius_second_moment(&em, 2);
        let alg = Algebra::Matrix(MatrixAlgebraSpec::new(2)?);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0x57);
        for _ in 0..500 {
            let h =
                AlgebraElement::matrix(2, (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())?;
            let lh = counterexample::operator_l(&h, &em, 2)?;
            if alg.norm(&lh)? > bound * alg.norm(&h)? * (1.0 + 1e-12) {
                return Ok((false, "‖ℒ(h)‖ exceeded E‖Δ‖²·‖h‖".into()));
            }
        }
        Ok((true, format!("‖ℒ(h)‖ ≤ {bound:.3}·‖h‖ on 500 draws")))
    });

    gate(out, "counterexample/commutative-contrast", || {
        let law = ctx.ou.perp_covariance(ctx.s, ctx.t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0x58);
        let h = random_element(&mut rng, &ctx.algebra);
        let (lhs, rhs) = counterexample::commutative_contrast(&ctx.algebra, &law, &h)?;
        let ok = lhs.sub(&rhs).max_abs() <= 1e-12 * rhs.max_abs().max(1.0);
        Ok((ok, "pointwise algebra: E[Δ⊙h⊙Δ] = E[Δ⊙Δ]⊙h exactly".into()))
    });
}

// ---------------------------------------------------------------------------
// pricing

fn pricing_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    let geom = ctx.ou.geometry().clone();
    let f0 = AlgebraElement::grid(geom.grid().nodes().iter().map(|x| 1.0 + 0.1 * x).collect());

    gate(out, "pricing/call-vs-mc", || {
        let payoff = PayoffPolynomial::call(1.0, ctx.config.pricing.degree, 4.0)?;
        let sup_error = payoff.sup_error;
        let req = PricingRequest {
            payoff,
            payoff_kind: PayoffKind::Call { strike: 1.0 },
            s: 0.0,
            t: 1.0,
            x: 1.0,
            f_s: f0.clone(),
        };
        let (closed, diag) = price_option(&req, &ctx.ou)?;
        let (mc, se) = price_mc(&req, &ctx.ou, ctx.n_mc, ctx.options.seed ^ 0x61)?;
        let tol = (ctx.k_sigma * se).max(sup_error);
        let diff = (closed - mc).abs();
        Ok((
            diff <= tol && diag.domain_exit_prob <= 1e-3,
            format!(
                "closed {closed:.6} vs MC {mc:.6} ± {se:.2e}; sup error {sup_error:.4}; exit prob {:.2e}",
                diag.domain_exit_prob
            ),
        ))
    });

    gate(out, "pricing/zero-noise-and-linear-exact", || {
        let quiet = crate::process::OUProcess::new(
            geom.clone(),
            DMatrix::zeros(geom.grid().n_points, geom.grid().n_points),
            1e-3,
        )?;
        let forward = geom.eval_delta(2.0, &f0)?;
        let linear = PricingRequest {
            payoff: PayoffPolynomial::from_monomial_coeffs(vec![-1.0, 1.0], 4.0)?,
            payoff_kind: PayoffKind::Custom,
            s: 0.0,
            t: 1.0,
            x: 1.0,
            f_s: f0.clone(),
        };
        let (p_quiet, _) = price_option(&linear, &quiet)?;
        if (p_quiet - (forward - 1.0)).abs() > 1e-10 {
            return Ok((
                false,
                "zero-noise degree-1 price missed intrinsic value".into(),
            ));
        }
        let identity = PricingRequest {
            payoff: PayoffPolynomial::from_monomial_coeffs(vec![0.0, 1.0], 4.0)?,
            payoff_kind: PayoffKind::Custom,
            s: 0.0,
            t: 1.0,
            x: 1.0,
            f_s: f0.clone(),
        };
        let (p_lin, _) = price_option(&identity, &ctx.ou)?;
        Ok((
            (p_lin - forward).abs() <= 1e-10,
            format!("h(z) = z prices to the forward {forward:.6}"),
        ))
    });

    gate(out, "pricing/put-call-parity", || {
        let (k, n, m) = (1.0, ctx.config.pricing.degree, 4.0);
        let call = PayoffPolynomial::call(k, n, m)?;
        let put = PayoffPolynomial::put(k, n, m)?;
        let linear = PayoffPolynomial::from_monomial_coeffs(vec![-k, 1.0], m)?;
        let price = |payoff: PayoffPolynomial, kind: PayoffKind| -> Result<f64> {
            let req = PricingRequest {
                payoff,
                payoff_kind: kind,
                s: 0.0,
                t: 1.0,
                x: 1.0,
                f_s: f0.clone(),
            };
            Ok(price_option(&req, &ctx.ou)?.0)
        };
        let pc = price(call, PayoffKind::Call { strike: k })?;
        let pp = price(put, PayoffKind::Put { strike: k })?;
        let pl = price(linear, PayoffKind::Custom)?;
        let residual = (pc - pp - pl).abs();
        Ok((
            residual <= 1e-9,
            format!("C − P − (F − K) = {residual:.2e} (linearity in coefficients)"),
        ))
    });

    gate(out, "pricing/degenerate-time", || {
        let payoff = PayoffPolynomial::call(1.0, 12, 4.0)?;
        let req = PricingRequest {
            payoff: payoff.clone(),
            payoff_kind: PayoffKind::Call { strike: 1.0 },
            s: 0.5,
            t: 0.5,
            x: 1.0,
            f_s: f0.clone(),
        };
        let (p, _) = price_option(&req, &ctx.ou)?;
        let spot = geom.eval_delta(1.0, &f0)?;
        let expected = payoff.eval_monomial(spot);
        Ok((
            (p - expected).abs() <= 1e-9 * expected.abs().max(1.0),
            "t = s collapses to the Bernstein image of the spot".into(),
        ))
    });

    gate(out, "pricing/method-agreement-3x3", || {
        let n_mc = (ctx.n_mc / 4).max(50_000);
        let mut detail = String::new();
        for (ti, t) in [0.5, 1.0, 2.0].iter().enumerate() {
            for (ki, strike) in [0.8, 1.0, 1.2].iter().enumerate() {
                let payoff = PayoffPolynomial::call(*strike, ctx.config.pricing.degree, 4.0)?;
                let sup_error = payoff.sup_error;
                let req = PricingRequest {
                    payoff,
                    payoff_kind: PayoffKind::Call { strike: *strike },
                    s: 0.0,
                    t: *t,
                    x: 0.5,
                    f_s: f0.clone(),
                };
                let (closed, _) = price_option(&req, &ctx.ou)?;
                let (mc, se) = price_mc(
                    &req,
                    &ctx.ou,
                    n_mc,
                    ctx.options.seed ^ (0x70 + 3 * ti as u64 + ki as u64),
                )?;
                let tol = (ctx.k_sigma * se).max(sup_error);
                if (closed - mc).abs() > tol {
                    return Ok((
                        false,
                        format!("(t = {t}, K = {strike}): |{closed:.5} − {mc:.5}| > {tol:.5}"),
                    ));
                }
            }
        }
        detail.push_str("9 maturity/strike cells within max(5·SE, sup error)");
        Ok((true, detail))
    });

    gate(out, "pricing/mc-clt-scaling", || {
        let payoff = PayoffPolynomial::call(1.0, ctx.config.pricing.degree, 4.0)?;
        let req = PricingRequest {
            payoff,
            payoff_kind: PayoffKind::Call { strike: 1.0 },
            s: 0.0,
            t: 1.0,
            x: 1.0,
            f_s: f0.clone(),
        };
        let (_, se_n) = price_mc(&req, &ctx.ou, 25_000, ctx.options.seed ^ 0x62)?;
        let (_, se_4n) = price_mc(&req, &ctx.ou, 100_000, ctx.options.seed ^ 0x63)?;
        let ratio = se_n / se_4n;
        Ok((
            (1.6..2.4).contains(&ratio),
            format!("SE ratio at 4× paths = {ratio:.2} (CLT ⇒ 2)"),
        ))
    });

    gate(out, "pricing/monotonicity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ 0x64);
        let payoff = PayoffPolynomial::call(1.0, 12, 6.0)?;
        for _ in 0..100 {
            let base: Vec<f64> = (0..geom.grid().n_points)
                .map(|_| rng.random_range(0.5..1.5))
                .collect();
            let bumped: Vec<f64> = base
                .iter()
                .map(|b| b + rng.random_range(0.0..0.5))
                .collect();
            let price = |values: Vec<f64>| -> Result<f64> {
                let req = PricingRequest {
                    payoff: payoff.clone(),
                    payoff_kind: PayoffKind::Call { strike: 1.0 },
                    s: 0.0,
                    t: 1.0,
                    x: 0.5,
                    f_s: AlgebraElement::grid(values),
                };
                Ok(price_option(&req, &ctx.ou)?.0)
            };
            if price(bumped)? < price(base)? - 1e-10 {
                return Ok((false, "raising the curve lowered a call price".into()));
            }
        }
        Ok((true, "100 random curve pairs".into()))
    });
}

// ---------------------------------------------------------------------------
// oracle hygiene

fn oracle_gates(ctx: &SuiteContext, out: &mut Vec<GateResult>) {
    gate(out, "oracle/gate-calibration", || {
        let mut failures = 0usize;
        let reps = 200u64;
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.options.seed ^ (0x8000 + rep));
            let n = 1000usize;
            let samples: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let est = MCEstimate {
                mean: vec![mean],
                se: vec![(var / n as f64).sqrt()],
                n,
            };
            if !tolerance_gate(&est, &[0.0], ctx.k_sigma)?.pass {
                failures += 1;
            }
        }
        Ok((
            failures * 100 <= reps as usize,
            format!(
                "{failures}/{reps} false failures at k_sigma = {}",
                ctx.k_sigma
            ),
        ))
    });

    gate(out, "oracle/seed-discipline", || {
        let a = conditional_mc(&ctx.scenario, |x| x.coords().to_vec(), ctx.t, 5_000, 90)?;
        let b = conditional_mc(&ctx.scenario, |x| x.coords().to_vec(), ctx.t, 5_000, 90)?;
        if a.mean != b.mean || a.se != b.se {
            return Ok((false, "identical seeds gave different estimates".into()));
        }
        let c = conditional_mc(&ctx.scenario, |x| x.coords().to_vec(), ctx.t, 5_000, 91)?;
        let diff = (a.mean[0] - c.mean[0]).abs();
        let combined = (a.se[0].powi(2) + c.se[0].powi(2)).sqrt();
        Ok((
            a.mean != c.mean && diff <= ctx.k_sigma * combined,
            "bit-identical under one stream, independent across streams".into(),
        ))
    });

    gate(out, "oracle/laplace-estimator", || {
        let est = LaplaceEstimator::build(&ctx.scenario, ctx.t, 2.0, 20_000, 92)?;
        if est.eval(0.0) != 1.0 {
            return Ok((false, "φ(0) ≠ 1".into()));
        }
        let mut prev = 1.0;
        for x in [0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
            let v = est.eval(x);
            if v > prev + 1e-15 || v < 0.0 {
                return Ok((false, format!("not monotone decreasing at x = {x}")));
            }
            prev = v;
        }
        Ok((true, "φ(0) = 1 and φ decreasing on the sampled grid".into()))
    });
}
