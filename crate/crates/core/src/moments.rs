//! The conditional-moment engine: commutative binomial formula, the
//! shift-semigroup form for the OU convolution, the non-commutative 2^k word
//! expansion, Isserlis-Wick moment tensors, and even/odd norm moments.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::algebra::{Algebra, AlgebraElement, FilipovicGeometry};
use crate::error::{Error, Result};
use crate::multilinear::{KLinearMap, MapRep};
use crate::process::{Decomposition, EntryMoments, GaussianLaw, PerpLaw};
use crate::quad::adaptive_gk;

/// Dense moment-tensor order cap.
pub const MOMENT_ORDER_CAP: usize = 8;
/// Word-expansion arity cap (2^k·tensor cost beyond this).
pub const WORD_ORDER_CAP: usize = 5;

pub fn binomial(k: usize, n: usize) -> f64 {
    if n > k {
        return 0.0;
    }
    let n = n.min(k - n);
    let mut acc = 1.0;
    for i in 0..n {
        acc = acc * (k - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Raw moment E[X^n] of a scalar Gaussian N(mean, var).
pub fn gaussian_raw_moment(mean: f64, var: f64, n: usize) -> f64 {
    let mut prev2 = 1.0;
    if n == 0 {
        return 1.0;
    }
    let mut prev1 = mean;
    for order in 2..=n {
        let cur = mean * prev1 + (order - 1) as f64 * var * prev2;
        prev2 = prev1;
        prev1 = cur;
    }
    prev1
}

/// Centered Gaussian mixed moment E[Z_{i₁}⋯Z_{i_m}] by the Isserlis-Wick
/// pairing sum over the covariance.
pub fn centered_mixed_moment(cov: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let m = idx.len();
    if m == 0 {
        return 1.0;
    }
    if m % 2 == 1 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut rest = Vec::with_capacity(m - 2);
    for j in 1..m {
        let c = cov[(idx[0], idx[j])];
        if c == 0.0 {
            continue;
        }
        rest.clear();
        rest.extend(idx[1..j].iter().copied());
        rest.extend(idx[j + 1..].iter().copied());
        total += c * centered_mixed_moment(cov, &rest);
    }
    total
}

/// Gaussian mixed moment E[X_{i₁}⋯X_{i_m}] with mean handled by the binomial
/// split over mean/centered parts.
pub fn mixed_moment(mean: &DVector<f64>, cov: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let m = idx.len();
    let has_mean = idx.iter().any(|&i| mean[i] != 0.0);
    if !has_mean {
        return centered_mixed_moment(cov, idx);
    }
    let mut total = 0.0;
    for mask in 0u32..(1 << m) {
        let mut mean_part = 1.0;
        let mut rest = Vec::with_capacity(m);
        for (pos, &i) in idx.iter().enumerate() {
            if mask & (1 << pos) != 0 {
                mean_part *= mean[i];
            } else {
                rest.push(i);
            }
        }
        if mean_part != 0.0 {
            total += mean_part * centered_mixed_moment(cov, &rest);
        }
    }
    total
}

/// Fully symmetric array of mixed moments E[X_{i₁}⋯X_{i_m}] over coordinates.
#[derive(Clone, Debug)]
pub struct MomentTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl MomentTensor {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.order);
        let mut f = 0;
        for &i in idx {
            f = f * self.dim + i;
        }
        self.data[f]
    }
}

/// Exact Gaussian moment tensor of the given order via Isserlis-Wick.
///
/// Odd orders of a centered law give the zero tensor; a nonzero mean is
/// handled by the binomial expansion over mean and centered parts.
pub fn gaussian_moment_tensor(law: &GaussianLaw, order: usize) -> Result<MomentTensor> {
    if order > MOMENT_ORDER_CAP {
        return Err(Error::OrderCap {
            got: order,
            cap: MOMENT_ORDER_CAP,
        });
    }
    let dim = law.dim();
    let len = dim
        .checked_pow(order as u32)
        .filter(|l| *l <= (1 << 24))
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "moment tensor dim^order = {dim}^{order} exceeds the dense cap"
            ))
        })?;
    if order == 0 {
        return Ok(MomentTensor {
            order,
            dim,
            data: vec![1.0],
        });
    }
    let mean = law.mean();
    let cov = law.cov();
    let mut data = vec![0.0; len];
    let mut idx = vec![0usize; order];
    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    for slot in data.iter_mut() {
        let mut key = idx.clone();
        key.sort_unstable();
        let value = *memo
            .entry(key)
            .or_insert_with(|| mixed_moment(&mean, &cov, &idx));
        *slot = value;
        // Increment the multi-index, last digit fastest.
        for d in (0..order).rev() {
            idx[d] += 1;
            if idx[d] < dim {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(MomentTensor { order, dim, data })
}

/// How a conditional-moment value was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMethod {
    Exact,
    Mc,
}

#[derive(Clone, Debug, Serialize)]
pub struct Contribution {
    /// Monomial order of this contribution in the ℱ_s-measurable part.
    pub j: usize,
    pub value: AlgebraElement,
}

/// Result of a conditional-moment computation: the total and its
/// decomposition into contributions of order j ≤ k.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionalMomentResult {
    pub order: usize,
    pub value: AlgebraElement,
    pub contributions: Vec<Contribution>,
    pub method: MomentMethod,
    pub se: Option<Vec<f64>>,
}

impl ConditionalMomentResult {
    /// Report JSON: `{order_k, value, contributions, method, se}`.
    pub fn report_json(&self) -> serde_json::Value {
        json!({
            "order_k": self.order,
            "value": self.value.coords(),
            "contributions": self.contributions.iter().map(|c| json!({
                "j": c.j,
                "value": c.value.coords(),
            })).collect::<Vec<_>>(),
            "method": match self.method {
                MomentMethod::Exact => "exact",
                MomentMethod::Mc => "mc",
            },
            "se": self.se,
        })
    }
}

/// Algebra-power expectation E[(X⊥)^m] as an element of a commutative
/// algebra, given the Gaussian coordinate law of X⊥.
fn perp_power_expectation(
    algebra: &Algebra,
    law: &GaussianLaw,
    m: usize,
) -> Result<AlgebraElement> {
    match algebra {
        Algebra::Grid(_) => {
            // Pointwise powers only see scalar marginals.
            let mean = law.mean();
            let vars = law.variance_diagonal();
            let coords = (0..law.dim())
                .map(|i| gaussian_raw_moment(mean[i], vars[i], m))
                .collect();
            AlgebraElement::new(coords, algebra.tag())
        }
        Algebra::Lattice(spec) => {
            if m == 0 {
                return Ok(algebra.one());
            }
            let dim = spec.sites;
            if dim.checked_pow(m as u32).map_or(true, |l| l > (1 << 20)) {
                return Err(Error::InvalidArgument(
                    "lattice convolution-power expectation exceeds the dense cap".into(),
                ));
            }
            let mean = law.mean();
            let cov = law.cov();
            let last = dim - 1;
            let mut out = vec![0.0; dim];
            let mut idx = vec![0usize; m];
            loop {
                let target = idx.iter().sum::<usize>().min(last);
                out[target] += mixed_moment(&mean, &cov, &idx);
                let mut d = m;
                loop {
                    if d == 0 {
                        return AlgebraElement::new(out, algebra.tag());
                    }
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < dim {
                        break;
                    }
                    idx[d] = 0;
                }
            }
        }
        Algebra::Matrix(_) => Err(Error::AlgebraMismatch(
            "power expectations of the matrix algebra go through the word expansion".into(),
        )),
    }
}

/// Commutative binomial conditional moment:
/// `E[X^k(t)|ℱ_s] = Σₙ binom(k,n)·E[(X⊥)^{k−n}]·(X∥)^n`.
pub fn cond_moment_commutative(
    algebra: &Algebra,
    k: usize,
    decomposition: &Decomposition,
) -> Result<ConditionalMomentResult> {
    if !algebra.is_commutative() {
        return Err(Error::AlgebraMismatch(
            "non-commutative algebra: use cond_expectation_words".into(),
        ));
    }
    let law = match &decomposition.perp_law {
        PerpLaw::Gaussian(law) => law,
        PerpLaw::IidEntries { .. } => {
            return Err(Error::AlgebraMismatch(
                "iid-entry perp laws belong to the matrix algebra".into(),
            ))
        }
    };
    let par = &decomposition.parallel;
    let mut contributions = Vec::with_capacity(k + 1);
    let mut value = AlgebraElement::zeros(algebra.tag());
    for n in 0..=k {
        let e_perp = perp_power_expectation(algebra, law, k - n)?;
        let par_pow = algebra.pow(par, n)?;
        let term = algebra.mul(&e_perp, &par_pow)?.scale(binomial(k, n));
        value = value.add(&term);
        contributions.push(Contribution { j: n, value: term });
    }
    Ok(ConditionalMomentResult {
        order: k,
        value,
        contributions,
        method: MomentMethod::Exact,
        se: None,
    })
}

/// The OU conditional moment in generalized-polynomial form:
/// `E[X^k(t)|ℱ_s] = Σₙ binom(k,n)·E[(X⊥(s;t))^{k−n}]·𝒮_{t−s} Xⁿ(s)`,
/// expressed in powers of the observed state itself via the homomorphism
/// property of the shift semigroup.
pub fn cond_moment_ou(
    k: usize,
    f_s: &AlgebraElement,
    s: f64,
    t: f64,
    process: &crate::process::OUProcess,
) -> Result<ConditionalMomentResult> {
    if t < s {
        return Err(Error::InvalidArgument(format!(
            "need t ≥ s, got s = {s}, t = {t}"
        )));
    }
    let algebra = process.algebra();
    let geom = process.geometry();
    let law = process.perp_covariance(s, t)?;
    let tau = t - s;
    let mut contributions = Vec::with_capacity(k + 1);
    let mut value = AlgebraElement::zeros(algebra.tag());
    for n in 0..=k {
        let e_perp = perp_power_expectation(&algebra, &law, k - n)?;
        let shifted_pow = geom.shift(tau, &algebra.pow(f_s, n)?)?;
        let term = algebra.mul(&e_perp, &shifted_pow)?.scale(binomial(k, n));
        value = value.add(&term);
        contributions.push(Contribution { j: n, value: term });
    }
    Ok(ConditionalMomentResult {
        order: k,
        value,
        contributions,
        method: MomentMethod::Exact,
        se: None,
    })
}

/// A letter of the 2^k word expansion of (X⊥ + X∥)^k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Letter {
    Perp,
    Par,
}

/// A word over {PERP, PAR} of length k.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn from_mask(k: usize, mask: u32) -> Self {
        Word(
            (0..k)
                .map(|slot| {
                    if mask & (1 << slot) != 0 {
                        Letter::Par
                    } else {
                        Letter::Perp
                    }
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn par_count(&self) -> usize {
        self.0.iter().filter(|l| **l == Letter::Par).count()
    }

    pub fn perp_count(&self) -> usize {
        self.len() - self.par_count()
    }
}

/// One term of the word expansion: the word, its conditional expectation
/// (with PAR slots frozen at X∥) and, when estimated by Monte Carlo, the
/// per-coordinate standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct WordTerm {
    pub word: Word,
    pub value: AlgebraElement,
    pub se: Option<Vec<f64>>,
}

/// Result of the full 2^k word expansion.
#[derive(Clone, Debug, Serialize)]
pub struct WordExpansion {
    pub terms: Vec<WordTerm>,
    /// Number of words with j PAR letters, indexed by j.
    pub word_counts_by_par: Vec<usize>,
    pub result: ConditionalMomentResult,
}

/// A factor of a matrix word: a fresh copy of the random increment or a
/// fixed (frozen) matrix.
pub enum WordFactor<'a> {
    Random,
    Fixed(&'a AlgebraElement),
}

/// Exact expectation of a product of matrices where every `Random` factor is
/// the same d×d matrix with i.i.d. entries of the given raw moments.
///
/// Entry (i,j) is a sum over index paths; repeated uses of an entry inside a
/// path contribute its higher raw moments.
pub fn iid_matrix_word_expectation(
    d: usize,
    em: &EntryMoments,
    factors: &[WordFactor<'_>],
) -> Result<AlgebraElement> {
    let n_random = factors
        .iter()
        .filter(|f| matches!(f, WordFactor::Random))
        .count();
    if n_random > 6 {
        return Err(Error::OrderCap {
            got: n_random,
            cap: 6,
        });
    }
    for f in factors {
        if let WordFactor::Fixed(y) = f {
            if y.tag() != (crate::algebra::AlgebraTag::Matrix { d }) {
                return Err(Error::AlgebraMismatch(
                    "fixed word factors must be d×d matrix elements".into(),
                ));
            }
        }
    }

    fn walk(
        d: usize,
        em: &EntryMoments,
        factors: &[WordFactor<'_>],
        pos: usize,
        row: usize,
        target: usize,
        fixed_acc: f64,
        used: &mut Vec<(usize, usize)>,
    ) -> f64 {
        if pos == factors.len() {
            if row != target {
                return 0.0;
            }
            // Group repeated random entries and take raw moments per group.
            let mut groups: Vec<((usize, usize), usize)> = Vec::new();
            for &pair in used.iter() {
                match groups.iter_mut().find(|(p, _)| *p == pair) {
                    Some((_, c)) => *c += 1,
                    None => groups.push((pair, 1)),
                }
            }
            let mut val = fixed_acc;
            for (_, count) in groups {
                val *= em.raw(count);
            }
            return val;
        }
        let mut acc = 0.0;
        for next in 0..d {
            match &factors[pos] {
                WordFactor::Random => {
                    used.push((row, next));
                    acc += walk(d, em, factors, pos + 1, next, target, fixed_acc, used);
                    used.pop();
                }
                WordFactor::Fixed(y) => {
                    let w = y.mat(row, next);
                    if w != 0.0 {
                        acc += walk(d, em, factors, pos + 1, next, target, fixed_acc * w, used);
                    }
                }
            }
        }
        acc
    }

    let mut out = vec![0.0; d * d];
    let mut used = Vec::new();
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = walk(d, em, factors, 0, i, j, 1.0, &mut used);
        }
    }
    AlgebraElement::matrix(d, out)
}

fn apply_post(
    algebra: &Algebra,
    post: &Option<DMatrix<f64>>,
    value: AlgebraElement,
) -> Result<AlgebraElement> {
    match post {
        Some(p) => AlgebraElement::from_vector(&(p * value.as_vector()), algebra.tag()),
        None => Ok(value),
    }
}

/// Exact value of one word for the dense representation and a Gaussian perp
/// law: contract X∥ into the PAR slots, then the Gaussian moment tensor of
/// the remaining order into the PERP slots.
fn dense_word_value(
    algebra: &Algebra,
    tensor: &crate::multilinear::DenseTensor,
    word: &Word,
    par: &AlgebraElement,
    moment_cache: &mut HashMap<usize, MomentTensor>,
    law: &GaussianLaw,
) -> Result<AlgebraElement> {
    let dim = tensor.dim();
    let k = word.len();
    let p = word.perp_count();
    if !moment_cache.contains_key(&p) {
        moment_cache.insert(p, gaussian_moment_tensor(law, p)?);
    }
    let moments = &moment_cache[&p];

    // Reduce the PAR slots: reduced has p input digits plus the output digit.
    let reduced_len = dim.pow(p as u32 + 1);
    let mut reduced = vec![0.0; reduced_len];
    let mut digits = vec![0usize; k];
    for (flat, chunk) in tensor.data().chunks(dim).enumerate() {
        // Decode the k input digits of this output block.
        let mut f = flat;
        for d in (0..k).rev() {
            digits[d] = f % dim;
            f /= dim;
        }
        let mut par_weight = 1.0;
        let mut perp_flat = 0usize;
        for (slot, &digit) in digits.iter().enumerate() {
            match word.0[slot] {
                Letter::Par => par_weight *= par.coords()[digit],
                Letter::Perp => perp_flat = perp_flat * dim + digit,
            }
        }
        if par_weight == 0.0 {
            continue;
        }
        let base = perp_flat * dim;
        for (j, t) in chunk.iter().enumerate() {
            reduced[base + j] += par_weight * t;
        }
    }

    // Contract the Gaussian moment tensor over the PERP digits.
    let mut out = vec![0.0; dim];
    for (perp_flat, block) in reduced.chunks(dim).enumerate() {
        let w = moments.data()[perp_flat];
        if w == 0.0 {
            continue;
        }
        for (j, b) in block.iter().enumerate() {
            out[j] += w * b;
        }
    }
    AlgebraElement::new(out, algebra.tag())
}

/// Expand `E[L(X(t),…,X(t))|ℱ_s]` into the 2^k words of the decomposition,
/// freezing the PAR slots at X∥ and integrating the PERP slots exactly when
/// a closed route exists, by `n_mc` Monte Carlo draws otherwise.
pub fn cond_expectation_words(
    algebra: &Algebra,
    map: &KLinearMap,
    decomposition: &Decomposition,
    n_mc: usize,
    seed: u64,
) -> Result<WordExpansion> {
    let k = map.arity();
    if k > WORD_ORDER_CAP {
        return Err(Error::OrderCap {
            got: k,
            cap: WORD_ORDER_CAP,
        });
    }
    let par = &decomposition.parallel;
    if par.tag() != algebra.tag() {
        return Err(Error::AlgebraMismatch(
            "decomposition does not match the algebra".into(),
        ));
    }

    let mut moment_cache: HashMap<usize, MomentTensor> = HashMap::new();
    let mut terms: Vec<WordTerm> = Vec::with_capacity(1 << k);
    let mut mc_words: Vec<u32> = Vec::new();

    for mask in 0u32..(1 << k) {
        let word = Word::from_mask(k, mask);
        let exact: Option<AlgebraElement> = match (map.rep(), algebra, &decomposition.perp_law) {
            (MapRep::Product { post }, Algebra::Grid(_), PerpLaw::Gaussian(law)) => {
                let p = word.perp_count();
                let q = word.par_count();
                let mean = law.mean();
                let vars = law.variance_diagonal();
                let coords: Vec<f64> = (0..algebra.dim())
                    .map(|i| {
                        gaussian_raw_moment(mean[i], vars[i], p) * par.coords()[i].powi(q as i32)
                    })
                    .collect();
                Some(apply_post(
                    algebra,
                    post,
                    AlgebraElement::new(coords, algebra.tag())?,
                )?)
            }
            (MapRep::Product { post }, Algebra::Lattice(_), PerpLaw::Gaussian(law)) => {
                let e_p = perp_power_expectation(algebra, law, word.perp_count())?;
                let par_pow = algebra.pow(par, word.par_count())?;
                Some(apply_post(algebra, post, algebra.mul(&e_p, &par_pow)?)?)
            }
            (
                MapRep::Product { post },
                Algebra::Matrix(spec),
                PerpLaw::IidEntries { moments, .. },
            ) => {
                let factors: Vec<WordFactor<'_>> = word
                    .0
                    .iter()
                    .map(|l| match l {
                        Letter::Perp => WordFactor::Random,
                        Letter::Par => WordFactor::Fixed(par),
                    })
                    .collect();
                Some(apply_post(
                    algebra,
                    post,
                    iid_matrix_word_expectation(spec.d, moments, &factors)?,
                )?)
            }
            (MapRep::Dense(tensor), _, PerpLaw::Gaussian(law)) => Some(dense_word_value(
                algebra,
                tensor,
                &word,
                par,
                &mut moment_cache,
                law,
            )?),
            _ => None,
        };
        match exact {
            Some(value) => terms.push(WordTerm {
                word,
                value,
                se: None,
            }),
            None => {
                mc_words.push(mask);
                terms.push(WordTerm {
                    word,
                    value: AlgebraElement::zeros(algebra.tag()),
                    se: None,
                });
            }
        }
    }

    // Monte Carlo fallback for the words without a closed route, sharing the
    // perp draws across words (common random numbers).
    if !mc_words.is_empty() {
        if n_mc < 100 {
            return Err(Error::InvalidArgument(
                "Monte Carlo fallback needs n_mc ≥ 100".into(),
            ));
        }
        let sampler = decomposition.perp_law.sampler()?;
        let dim = algebra.dim();
        let mut sums: HashMap<u32, Vec<f64>> = HashMap::new();
        let mut sumsqs: HashMap<u32, Vec<f64>> = HashMap::new();
        for &w in &mc_words {
            sums.insert(w, vec![0.0; dim]);
            sumsqs.insert(w, vec![0.0; dim]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_mc {
            let draw = sampler.sample(&mut rng);
            let perp_elem = AlgebraElement::from_vector(&draw, algebra.tag())?;
            for &w in &mc_words {
                let word = Word::from_mask(k, w);
                let args: Vec<&AlgebraElement> = word
                    .0
                    .iter()
                    .map(|l| match l {
                        Letter::Perp => &perp_elem,
                        Letter::Par => par,
                    })
                    .collect();
                let v = map.eval(algebra, &args)?;
                let sum = sums.get_mut(&w).expect("initialized above");
                let sumsq = sumsqs.get_mut(&w).expect("initialized above");
                for (i, c) in v.coords().iter().enumerate() {
                    if !c.is_finite() {
                        return Err(Error::NonFinite("word expansion Monte Carlo".into()));
                    }
                    sum[i] += c;
                    sumsq[i] += c * c;
                }
            }
        }
        for &w in &mc_words {
            let sum = &sums[&w];
            let sumsq = &sumsqs[&w];
            let nf = n_mc as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
            let se: Vec<f64> = sum
                .iter()
                .zip(sumsq)
                .map(|(s, sq)| {
                    let m = s / nf;
                    ((sq / nf - m * m).max(0.0) / nf).sqrt()
                })
                .collect();
            let term = &mut terms[w as usize];
            term.value = AlgebraElement::new(mean.clone(), algebra.tag())?;
            term.se = Some(se);
        }
    }

    // Group contributions by the number of PAR letters.
    let mut word_counts_by_par = vec![0usize; k + 1];
    let mut grouped: Vec<AlgebraElement> = (0..=k)
        .map(|_| AlgebraElement::zeros(algebra.tag()))
        .collect();
    let mut value = AlgebraElement::zeros(algebra.tag());
    let mut var_acc = vec![0.0; algebra.dim()];
    let mut any_mc = false;
    for term in &terms {
        let j = term.word.par_count();
        word_counts_by_par[j] += 1;
        grouped[j] = grouped[j].add(&term.value);
        value = value.add(&term.value);
        if let Some(se) = &term.se {
            any_mc = true;
            for (acc, s) in var_acc.iter_mut().zip(se) {
                *acc += s * s;
            }
        }
    }
    let contributions = grouped
        .into_iter()
        .enumerate()
        .map(|(j, value)| Contribution { j, value })
        .collect();
    let se = if any_mc {
        Some(var_acc.iter().map(|v| v.sqrt()).collect())
    } else {
        None
    };
    let result = ConditionalMomentResult {
        order: k,
        value,
        contributions,
        method: if any_mc {
            MomentMethod::Mc
        } else {
            MomentMethod::Exact
        },
        se,
    };
    Ok(WordExpansion {
        terms,
        word_counts_by_par,
        result,
    })
}

/// E‖X‖^{2k} for a Gaussian law on the grid algebra, by Isserlis pairing over
/// the covariance expressed in an orthonormal basis of the discretized inner
/// product.
pub fn norm_even_moment(geometry: &FilipovicGeometry, law: &GaussianLaw, k: usize) -> Result<f64> {
    if 2 * k > MOMENT_ORDER_CAP {
        return Err(Error::OrderCap {
            got: 2 * k,
            cap: MOMENT_ORDER_CAP,
        });
    }
    if k == 0 {
        return Ok(1.0);
    }
    let n = geometry.grid().n_points;
    if law.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: law.dim(),
        });
    }
    let (mu_on, cov_on) = orthonormal_coordinates(geometry, law)?;

    // Σ_{i₁…i_k} E[Y²_{i₁}⋯Y²_{i_k}] over non-decreasing tuples, weighted by
    // their permutation multiplicity.
    let mut total = 0.0;
    let mut tuple = vec![0usize; k];
    loop {
        let mut idx = Vec::with_capacity(2 * k);
        for &i in &tuple {
            idx.push(i);
            idx.push(i);
        }
        let value = mixed_moment(&mu_on, &cov_on, &idx);
        total += value * tuple_multiplicity(&tuple);
        // Next non-decreasing tuple.
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(total);
            }
            pos -= 1;
            if tuple[pos] + 1 < n {
                let v = tuple[pos] + 1;
                for slot in tuple.iter_mut().skip(pos) {
                    *slot = v;
                }
                break;
            }
        }
    }
}

/// Mean and covariance of the law expressed in an orthonormal basis of the
/// discretized inner product (Cholesky of the Gram matrix).
pub fn orthonormal_coordinates(
    geometry: &FilipovicGeometry,
    law: &GaussianLaw,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(geometry.gram().clone())
        .ok_or_else(|| Error::InvalidArgument("Gram matrix not positive definite".into()))?;
    let r = chol.l().transpose();
    let mu = &r * law.mean();
    let cov = &r * law.cov() * r.transpose();
    Ok((mu, (cov.transpose() + &cov) * 0.5))
}

/// Number of distinct permutations of a non-decreasing index tuple.
fn tuple_multiplicity(tuple: &[usize]) -> f64 {
    let k = tuple.len();
    let mut mult: f64 = (1..=k).map(|v| v as f64).product();
    let mut run = 1usize;
    for i in 1..k {
        if tuple[i] == tuple[i - 1] {
            run += 1;
            mult /= run as f64;
        } else {
            run = 1;
        }
    }
    mult
}

/// Quadrature controls for the odd-moment fractional integral.
#[derive(Clone, Copy, Debug)]
pub struct OddMomentQuad {
    /// Absolute tolerance of the adaptive rule (before estimator noise).
    pub abs_tol: f64,
    /// Small-x cutoff below which 1−φ(x) ≈ x·E[‖X‖^{2k+2}] tames the
    /// x^{−1−α} singularity.
    pub x_small: f64,
    pub max_depth: u32,
}

impl Default for OddMomentQuad {
    fn default() -> Self {
        Self {
            abs_tol: 1e-6,
            x_small: 1e-4,
            max_depth: 48,
        }
    }
}

/// Odd norm moment via the fractional integral
/// `E‖X‖^{2k+1} = α/Γ(1−α)·∫₀^∞ (1 − E[e^{−x‖X‖^{2k+2}}])·x^{−1−α} dx`
/// with `α = (2k+1)/(2k+2)`.
///
/// The middle range is integrated on the compactified interval
/// `x = u/(1−u)`; below `x_small` the expansion `1−φ(x) ≈ x·E[‖X‖^{2k+2}]`
/// tames the `x^{−1−α}` singularity, and the tail `x ≥ 1` is integrated
/// under `x = y^{−1/α}`, which turns the fractional weight into a bounded
/// smooth integrand.
pub fn norm_odd_moment<F: Fn(f64) -> f64>(
    k: usize,
    laplace_estimator: F,
    quad: &OddMomentQuad,
) -> Result<f64> {
    let alpha = (2 * k + 1) as f64 / (2 * k + 2) as f64;
    // Estimator sanity: values must be a Laplace transform's range (0, 1].
    let mut monotone_prev = f64::INFINITY;
    for probe in [quad.x_small, 0.1, 1.0, 10.0, 100.0] {
        let v = laplace_estimator(probe);
        if !((-1e-9..=1.0 + 1e-9).contains(&v)) {
            return Err(Error::InvalidArgument(format!(
                "laplace estimator returned {v} at x = {probe}, outside [0, 1]"
            )));
        }
        if v > monotone_prev + 1e-9 {
            return Err(Error::InvalidArgument(
                "laplace estimator is not decreasing".into(),
            ));
        }
        monotone_prev = v;
    }

    let x0 = quad.x_small;
    let u0 = x0 / (1.0 + x0);
    // 1−φ(x) ≈ x·E[‖X‖^{2k+2}] near zero; integrate the expansion exactly.
    let m_hat = (1.0 - laplace_estimator(x0)).max(0.0) / x0;
    let piece_small = m_hat * x0.powf(1.0 - alpha) / (1.0 - alpha);

    // x ∈ [x₀, 1] under the compactification u = x/(1+x).
    let mid_integrand = |u: f64| {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let x = u / (1.0 - u);
        let phi = laplace_estimator(x).clamp(0.0, 1.0);
        (1.0 - phi) * u.powf(-1.0 - alpha) * (1.0 - u).powf(alpha - 1.0)
    };
    let (piece_mid, _) = adaptive_gk(&mid_integrand, u0, 0.5, quad.abs_tol / 2.0, quad.max_depth);

    // Tail x ∈ [1, ∞): with x = y^{−1/α} the weight x^{−1−α} dx becomes
    // −dy/α, leaving the bounded integrand (1 − φ(y^{−1/α}))/α on (0, 1].
    let tail_integrand = |y: f64| {
        if y <= 0.0 {
            return 1.0 / alpha;
        }
        let x = y.powf(-1.0 / alpha);
        let phi = if x.is_finite() {
            laplace_estimator(x).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (1.0 - phi) / alpha
    };
    let (piece_tail, _) = adaptive_gk(
        &tail_integrand,
        0.0,
        1.0,
        quad.abs_tol / 2.0,
        quad.max_depth,
    );

    let gamma = statrs::function::gamma::gamma(1.0 - alpha);
    let result = alpha / gamma * (piece_small + piece_mid + piece_tail);
    if !result.is_finite() {
        return Err(Error::NonFinite("odd norm moment".into()));
    }
    Ok(result)
}
