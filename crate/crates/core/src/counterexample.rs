//! Executable reconstruction of the non-commutative obstruction: in the
//! matrix algebra, the conditional-expectation operator
//! `y ↦ E[X⊥ y X⊥]` is not a left-multiplication operator, and the
//! degree-five term `y ↦ E[X⊥ y X⊥ y X⊥]` is not even a generalized
//! quadratic, so independent-increment processes there are neither
//! polynomial nor generalized polynomial.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebra::{Algebra, AlgebraElement, AlgebraTag};
use crate::error::{Error, Result};
use crate::moments::{iid_matrix_word_expectation, WordFactor};
use crate::process::EntryMoments;

/// The operator `ℒ(h) = E[Δ h Δ]` for a d×d increment with i.i.d. entries,
/// in closed form: `(ℒh)_{ij} = m₁²·Σ_{pq} h_{pq} + (m₂ − m₁²)·h_{ji}`.
pub fn operator_l(h: &AlgebraElement, em: &EntryMoments, d: usize) -> Result<AlgebraElement> {
    if h.tag() != (AlgebraTag::Matrix { d }) {
        return Err(Error::AlgebraMismatch(format!(
            "operator_l expects a {d}×{d} matrix element, got {:?}",
            h.tag()
        )));
    }
    iid_matrix_word_expectation(
        d,
        em,
        &[WordFactor::Random, WordFactor::Fixed(h), WordFactor::Random],
    )
}

/// Outcome of the left-multiplier solvability check for `a·h = g`.
#[derive(Clone, Debug, Serialize)]
pub enum MultiplierVerdict {
    /// No matrix `a` satisfies `a·h = g`; the least-squares residual is the
    /// certificate (Frobenius distance of `g` from the range of right
    /// multiplication by `h`).
    Inconsistent { residual: f64 },
    /// A solution exists (up to numerical tolerance).
    Solved { a: AlgebraElement, residual: f64 },
}

impl MultiplierVerdict {
    pub fn is_inconsistent(&self) -> bool {
        matches!(self, MultiplierVerdict::Inconsistent { .. })
    }

    pub fn residual(&self) -> f64 {
        match self {
            MultiplierVerdict::Inconsistent { residual } => *residual,
            MultiplierVerdict::Solved { residual, .. } => *residual,
        }
    }
}

/// Solve `min_a ‖a·h − g‖_F` over all d×d matrices `a` and classify the
/// system as consistent or not.
pub fn assert_no_left_multiplier(
    h: &AlgebraElement,
    g: &AlgebraElement,
) -> Result<MultiplierVerdict> {
    let d = match (h.tag(), g.tag()) {
        (AlgebraTag::Matrix { d: dh }, AlgebraTag::Matrix { d: dg }) if dh == dg => dh,
        _ => {
            return Err(Error::AlgebraMismatch(
                "assert_no_left_multiplier expects two matrix elements of equal size".into(),
            ))
        }
    };
    // (a·h)_{ij} = Σ_p a_{ip}·h_{pj}: unknowns vec(a) row-major, equations
    // indexed by (i,j) row-major.
    let n = d * d;
    let mut system = DMatrix::<f64>::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            for p in 0..d {
                system[(i * d + j, i * d + p)] = h.mat(p, j);
            }
        }
    }
    let rhs = DVector::from_column_slice(g.coords());
    let svd = system.clone().svd(true, true);
    let solution = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("least-squares solve failed: {e}")))?;
    let residual = (&system * &solution - &rhs).norm();
    let scale = rhs.norm().max(1.0);
    let a = AlgebraElement::new(solution.iter().copied().collect(), g.tag())?;
    if residual > 1e-8 * scale {
        Ok(MultiplierVerdict::Inconsistent { residual })
    } else {
        Ok(MultiplierVerdict::Solved { a, residual })
    }
}

/// The two sides of the second-derivative comparison for the degree-five
/// term `f(y) = E[Δ y Δ y Δ]` at the directions `h₁ = e₁₁`, `h₂ = e₂₂`.
#[derive(Clone, Debug, Serialize)]
pub struct D2Mismatch {
    /// `D²f(y)(h₁,h₂) = E[Δh₁Δh₂Δ] + E[Δh₂Δh₁Δ]` in closed form.
    pub lhs: AlgebraElement,
    /// `h₁·h₂` and `h₂·h₁`, both zero, so the second derivative of any
    /// generalized quadratic `ℒ₂(y²)` vanishes at these directions.
    pub rhs_is_zero: bool,
    /// Set when the closed form is nonzero while the generalized-quadratic
    /// side vanishes: the process cannot be generalized polynomial.
    pub contradiction: bool,
}

/// Closed-form evaluation of the degree-five second-derivative mismatch.
///
/// With raw increment moments m₁, m₂ the closed form is the symmetric matrix
/// with diagonal `2·m₁³` and off-diagonal `m₁³ + m₂·m₁`, which vanishes only
/// for centered increments.
pub fn d2_mismatch(em: &EntryMoments) -> Result<D2Mismatch> {
    let d = 2usize;
    let h1 = AlgebraElement::matrix_unit(d, 0, 0);
    let h2 = AlgebraElement::matrix_unit(d, 1, 1);

    let term_a = iid_matrix_word_expectation(
        d,
        em,
        &[
            WordFactor::Random,
            WordFactor::Fixed(&h1),
            WordFactor::Random,
            WordFactor::Fixed(&h2),
            WordFactor::Random,
        ],
    )?;
    let term_b = iid_matrix_word_expectation(
        d,
        em,
        &[
            WordFactor::Random,
            WordFactor::Fixed(&h2),
            WordFactor::Random,
            WordFactor::Fixed(&h1),
            WordFactor::Random,
        ],
    )?;
    let lhs = term_a.add(&term_b);

    let alg = Algebra::Matrix(crate::algebra::MatrixAlgebraSpec::new(d)?);
    let h1h2 = alg.mul(&h1, &h2)?;
    let h2h1 = alg.mul(&h2, &h1)?;
    let rhs_is_zero = h1h2.max_abs() == 0.0 && h2h1.max_abs() == 0.0;

    let contradiction = rhs_is_zero && lhs.max_abs() > 1e-12;
    Ok(D2Mismatch {
        lhs,
        rhs_is_zero,
        contradiction,
    })
}

/// Monte Carlo mixed central difference of `f(y) = E[Δ y Δ y Δ]` at the
/// directions `h₁ = e₁₁`, `h₂ = e₂₂`, using common random numbers across the
/// four stencil points. Since f is quadratic in y the stencil is exact up to
/// sampling noise; returns the entrywise means and standard errors.
pub fn d2_mixed_difference_mc(
    em: &EntryMoments,
    y0: &AlgebraElement,
    eps: f64,
    n: usize,
    seed: u64,
) -> Result<(AlgebraElement, Vec<f64>)> {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    let d = 2usize;
    if y0.tag() != (AlgebraTag::Matrix { d }) {
        return Err(Error::AlgebraMismatch("y0 must be a 2×2 matrix".into()));
    }
    let alg = Algebra::Matrix(crate::algebra::MatrixAlgebraSpec::new(d)?);
    let h1 = AlgebraElement::matrix_unit(d, 0, 0);
    let h2 = AlgebraElement::matrix_unit(d, 1, 1);
    let stencil: Vec<(f64, AlgebraElement)> = vec![
        (
            1.0,
            AlgebraElement::axpby(1.0, &y0.add(&h1.scale(eps)), eps, &h2),
        ),
        (
            -1.0,
            AlgebraElement::axpby(1.0, &y0.add(&h1.scale(eps)), -eps, &h2),
        ),
        (
            -1.0,
            AlgebraElement::axpby(1.0, &y0.sub(&h1.scale(eps)), eps, &h2),
        ),
        (
            1.0,
            AlgebraElement::axpby(1.0, &y0.sub(&h1.scale(eps)), -eps, &h2),
        ),
    ];
    // Draw Gaussian entries matching the declared first two moments.
    let mu = em.m1();
    let sd = (em.m2() - em.m1() * em.m1()).max(0.0).sqrt();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = d * d;
    let mut sum = vec![0.0; dim];
    let mut sumsq = vec![0.0; dim];
    for _ in 0..n {
        let delta = AlgebraElement::matrix(
            d,
            (0..dim)
                .map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )?;
        let mut combo = AlgebraElement::zeros(alg.tag());
        for (w, y) in &stencil {
            let dy = alg.mul(&delta, y)?;
            let dyd = alg.mul(&dy, &delta)?;
            let dydy = alg.mul(&dyd, y)?;
            let full = alg.mul(&dydy, &delta)?;
            combo = AlgebraElement::axpby(1.0, &combo, *w, &full);
        }
        combo = combo.scale(1.0 / (4.0 * eps * eps));
        for (i, v) in combo.coords().iter().enumerate() {
            sum[i] += v;
            sumsq[i] += v * v;
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se: Vec<f64> = sum
        .iter()
        .zip(&sumsq)
        .map(|(s, sq)| {
            let m = s / nf;
            (((sq / nf - m * m).max(0.0) * nf / (nf - 1.0)) / nf).sqrt()
        })
        .collect();
    Ok((AlgebraElement::matrix(d, mean)?, se))
}

/// Closed-form bound `E‖Δ‖_F² = d²·m₂` for the boundedness witness
/// `‖ℒ(h)‖_F ≤ E‖Δ‖_F²·‖h‖_F`.
pub fn frobenius_second_moment(em: &EntryMoments, d: usize) -> f64 {
    (d * d) as f64 * em.m2()
}

/// Commutative contrast: on the pointwise grid algebra the analogous
/// operator IS a multiplication operator, `E[Δ ⊙ h ⊙ Δ] = E[Δ ⊙ Δ] ⊙ h`
/// exactly. The left side goes through the word-expansion machinery (the
/// PERP·PAR·PERP word frozen at h), the right side through the power
/// expectation and one algebra product.
pub fn commutative_contrast(
    algebra: &Algebra,
    law: &crate::process::GaussianLaw,
    h: &AlgebraElement,
) -> Result<(AlgebraElement, AlgebraElement)> {
    use crate::moments::{cond_expectation_words, Letter};
    use crate::multilinear::KLinearMap;
    use crate::process::{Decomposition, PerpLaw};

    if !algebra.is_commutative() {
        return Err(Error::AlgebraMismatch(
            "the contrast test runs on a commutative algebra".into(),
        ));
    }
    let d = Decomposition {
        parallel: h.clone(),
        perp_law: PerpLaw::Gaussian(law.clone()),
    };
    let map = KLinearMap::product(3)?;
    let words = cond_expectation_words(algebra, &map, &d, 1000, 1)?;
    let lhs = words
        .terms
        .iter()
        .find(|t| t.word.0 == vec![Letter::Perp, Letter::Par, Letter::Perp])
        .expect("word expansion contains PERP·PAR·PERP")
        .value
        .clone();

    let sq = crate::moments::gaussian_moment_tensor(law, 2)?;
    let dim = algebra.dim();
    let e_delta_sq = match algebra {
        Algebra::Grid(_) => {
            AlgebraElement::new((0..dim).map(|i| sq.get(&[i, i])).collect(), algebra.tag())?
        }
        _ => {
            return Err(Error::AlgebraMismatch(
                "contrast currently instantiated on the grid algebra".into(),
            ))
        }
    };
    let rhs = algebra.mul(&e_delta_sq, h)?;
    Ok((lhs, rhs))
}
