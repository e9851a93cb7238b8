//! Bounded k-linear maps, the monomials they induce, and their Fréchet
//! derivatives in closed form and by finite differences.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebra::{Algebra, AlgebraElement};
use crate::error::{Error, Result};

/// Dense coefficient cap: representations beyond 2^24 coefficients must use
/// the product-map form.
pub const DENSE_COEFF_CAP: usize = 1 << 24;

/// Default finite-difference step, balancing truncation against cancellation
/// at double precision.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// Dense coefficient tensor of a k-linear map: shape `dim^k × dim`, the
/// output index varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dim: usize,
    /// Number of input slots (the arity k).
    arity: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dim: usize, arity: usize, data: Vec<f64>) -> Result<Self> {
        let len = dim
            .checked_pow(arity as u32 + 1)
            .filter(|l| *l <= DENSE_COEFF_CAP)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "dense tensor dim^(k+1) = {dim}^{} exceeds cap {DENSE_COEFF_CAP}; \
                     use the product-map representation",
                    arity + 1
                ))
            })?;
        if data.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: data.len(),
            });
        }
        Ok(Self { dim, arity, data })
    }

    pub fn zeros(dim: usize, arity: usize) -> Result<Self> {
        let len = dim
            .checked_pow(arity as u32 + 1)
            .filter(|l| *l <= DENSE_COEFF_CAP)
            .ok_or_else(|| Error::InvalidArgument("dense tensor too large".into()))?;
        Ok(Self {
            dim,
            arity,
            data: vec![0.0; len],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Flat index of `(i_1,…,i_k, j_out)`.
    pub fn flat(&self, idx: &[usize], out: usize) -> usize {
        debug_assert_eq!(idx.len(), self.arity);
        let mut f = 0;
        for &i in idx {
            f = f * self.dim + i;
        }
        f * self.dim + out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Contract the input slots against `args`, leaving the output vector.
    fn contract(&self, args: &[&[f64]]) -> Vec<f64> {
        debug_assert_eq!(args.len(), self.arity);
        let mut cur = self.data.clone();
        for arg in args {
            let next_len = cur.len() / self.dim;
            let mut next = vec![0.0; next_len];
            for (i, &xi) in arg.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let block = &cur[i * next_len..(i + 1) * next_len];
                for (n, b) in next.iter_mut().zip(block) {
                    *n += xi * b;
                }
            }
            cur = next;
        }
        cur
    }
}

#[derive(Serialize, Deserialize)]
struct DenseTensorDto {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Serialize for DenseTensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DenseTensorDto {
            shape: vec![self.dim; self.arity + 1],
            values: self.data.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenseTensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dto = DenseTensorDto::deserialize(deserializer)?;
        if dto.shape.is_empty() || dto.shape.iter().any(|&d| d != dto.shape[0]) {
            return Err(D::Error::custom("dense tensor shape must be [dim; k+1]"));
        }
        DenseTensor::new(dto.shape[0], dto.shape.len() - 1, dto.values).map_err(D::Error::custom)
    }
}

/// Representation of a k-linear map.
#[derive(Clone, Debug)]
pub enum MapRep {
    /// Dense coefficient tensor.
    Dense(DenseTensor),
    /// The designated algebra product, optionally composed with a bounded
    /// linear post-map acting on coordinates.
    Product { post: Option<DMatrix<f64>> },
}

/// A bounded k-linear map `L: B^k → B` with boundedness constant `bound_k`.
#[derive(Clone, Debug)]
pub struct KLinearMap {
    arity: usize,
    rep: MapRep,
    bound_k: f64,
}

impl KLinearMap {
    /// The pure algebra product `(x_1,…,x_k) ↦ x_1·x_2⋯x_k` (bound 1 by
    /// submultiplicativity of the algebra norm).
    pub fn product(arity: usize) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidArgument("arity must be ≥ 1".into()));
        }
        Ok(Self {
            arity,
            rep: MapRep::Product { post: None },
            bound_k: 1.0,
        })
    }

    /// Algebra product followed by the linear coordinate map `post`.
    pub fn product_with_post(arity: usize, post: DMatrix<f64>, algebra: &Algebra) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidArgument("arity must be ≥ 1".into()));
        }
        if post.nrows() != algebra.dim() || post.ncols() != algebra.dim() {
            return Err(Error::DimensionMismatch {
                expected: algebra.dim(),
                got: post.nrows(),
            });
        }
        let (a, b) = algebra.norm_equivalence();
        let frob = post.iter().map(|c| c * c).sum::<f64>().sqrt();
        Ok(Self {
            arity,
            rep: MapRep::Product { post: Some(post) },
            bound_k: a * b * frob,
        })
    }

    /// Dense-tensor k-linear map, with a certified bound derived from the
    /// Frobenius norm of the tensor and the algebra's norm-equivalence
    /// constants.
    pub fn dense(tensor: DenseTensor, algebra: &Algebra) -> Result<Self> {
        if tensor.dim() != algebra.dim() {
            return Err(Error::DimensionMismatch {
                expected: algebra.dim(),
                got: tensor.dim(),
            });
        }
        let (a, b) = algebra.norm_equivalence();
        let bound_k = a * b.powi(tensor.arity() as i32) * tensor.frobenius();
        Ok(Self {
            arity: tensor.arity(),
            rep: MapRep::Dense(tensor),
            bound_k,
        })
    }

    pub fn with_bound(mut self, bound_k: f64) -> Self {
        self.bound_k = bound_k;
        self
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn rep(&self) -> &MapRep {
        &self.rep
    }

    pub fn bound(&self) -> f64 {
        self.bound_k
    }

    /// Linear combination `a·L₁ + b·L₂` of two dense maps.
    pub fn linear_combination(
        a: f64,
        l1: &Self,
        b: f64,
        l2: &Self,
        algebra: &Algebra,
    ) -> Result<Self> {
        match (&l1.rep, &l2.rep) {
            (MapRep::Dense(t1), MapRep::Dense(t2)) => {
                if l1.arity != l2.arity || t1.dim() != t2.dim() {
                    return Err(Error::AlgebraMismatch(
                        "linear combination needs matching arity and dimension".into(),
                    ));
                }
                let data = t1
                    .data()
                    .iter()
                    .zip(t2.data())
                    .map(|(x, y)| a * x + b * y)
                    .collect();
                Self::dense(DenseTensor::new(t1.dim(), t1.arity(), data)?, algebra)
            }
            _ => Err(Error::InvalidArgument(
                "linear combination is only available for dense representations".into(),
            )),
        }
    }

    fn check_args(&self, algebra: &Algebra, args: &[&AlgebraElement]) -> Result<()> {
        if args.len() != self.arity {
            return Err(Error::InvalidArgument(format!(
                "arity mismatch: map takes {} arguments, got {}",
                self.arity,
                args.len()
            )));
        }
        for arg in args {
            if arg.tag() != algebra.tag() {
                return Err(Error::AlgebraMismatch(format!(
                    "argument tag {:?} does not match algebra {:?}",
                    arg.tag(),
                    algebra.tag()
                )));
            }
        }
        Ok(())
    }

    /// Exact multilinear evaluation `L(x_1,…,x_k)`.
    pub fn eval(&self, algebra: &Algebra, args: &[&AlgebraElement]) -> Result<AlgebraElement> {
        self.check_args(algebra, args)?;
        match &self.rep {
            MapRep::Product { post } => {
                let mut acc = args[0].clone();
                for arg in &args[1..] {
                    acc = algebra.mul(&acc, arg)?;
                }
                match post {
                    Some(p) => {
                        let v = p * acc.as_vector();
                        AlgebraElement::from_vector(&v, algebra.tag())
                    }
                    None => Ok(acc),
                }
            }
            MapRep::Dense(t) => {
                let coords: Vec<&[f64]> = args.iter().map(|a| a.coords()).collect();
                AlgebraElement::new(t.contract(&coords), algebra.tag())
            }
        }
    }

    /// Sampling estimate of the operator norm over random unit-norm tuples.
    /// The estimate is a certified lower bound on the true constant.
    pub fn estimate_bound(&self, algebra: &Algebra, draws: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = algebra.dim();
        let mut best: f64 = 0.0;
        for _ in 0..draws {
            let mut args = Vec::with_capacity(self.arity);
            for _ in 0..self.arity {
                let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let e = AlgebraElement::new(raw, algebra.tag())?;
                let n = algebra.norm(&e)?;
                if n < 1e-12 {
                    continue;
                }
                args.push(e.scale(1.0 / n));
            }
            if args.len() != self.arity {
                continue;
            }
            let refs: Vec<&AlgebraElement> = args.iter().collect();
            let value = self.eval(algebra, &refs)?;
            best = best.max(algebra.norm(&value)?);
        }
        Ok(best)
    }
}

/// The k-monomial `ℳ(x) = L(x,…,x)` induced by a k-linear map.
#[derive(Clone, Debug)]
pub struct Monomial {
    base: KLinearMap,
}

impl Monomial {
    pub fn new(base: KLinearMap) -> Self {
        Self { base }
    }

    pub fn base(&self) -> &KLinearMap {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.base.arity()
    }

    pub fn eval(&self, algebra: &Algebra, x: &AlgebraElement) -> Result<AlgebraElement> {
        let args: Vec<&AlgebraElement> = (0..self.order()).map(|_| x).collect();
        self.base.eval(algebra, &args)
    }

    /// Closed-form n-th Fréchet derivative `Dⁿℳ(u)(h_1,…,h_n)`: the sum over
    /// all placements of the n directions among the k slots, each direction
    /// appearing exactly once, `u` filling the rest. The (k+1)-st derivative
    /// vanishes identically.
    pub fn frechet_derivative(
        &self,
        algebra: &Algebra,
        u: &AlgebraElement,
        n: usize,
        dirs: &[&AlgebraElement],
    ) -> Result<AlgebraElement> {
        let k = self.order();
        if n == 0 || n > k + 1 {
            return Err(Error::InvalidArgument(format!(
                "derivative order n = {n} must satisfy 1 ≤ n ≤ k+1 = {}",
                k + 1
            )));
        }
        if dirs.len() != n {
            return Err(Error::InvalidArgument(format!(
                "expected {n} directions, got {}",
                dirs.len()
            )));
        }
        if n == k + 1 {
            return Ok(AlgebraElement::zeros(algebra.tag()));
        }
        let mut acc = AlgebraElement::zeros(algebra.tag());
        for slots in (0..k).combinations(n) {
            for perm in (0..n).permutations(n) {
                let mut args: Vec<&AlgebraElement> = vec![u; k];
                for (slot_pos, dir_idx) in slots.iter().zip(&perm) {
                    args[*slot_pos] = dirs[*dir_idx];
                }
                acc = acc.add(&self.base.eval(algebra, &args)?);
            }
        }
        Ok(acc)
    }

    /// n-th order mixed central finite-difference approximation of the
    /// Fréchet derivative along the given directions, truncation O(h²).
    pub fn finite_difference_derivative(
        &self,
        algebra: &Algebra,
        u: &AlgebraElement,
        n: usize,
        dirs: &[&AlgebraElement],
        h_step: f64,
    ) -> Result<AlgebraElement> {
        if !(h_step > 0.0) {
            return Err(Error::InvalidArgument("h_step must be positive".into()));
        }
        if dirs.len() != n || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "expected {n} ≥ 1 directions, got {}",
                dirs.len()
            )));
        }
        let mut acc = AlgebraElement::zeros(algebra.tag());
        for mask in 0..(1u32 << n) {
            let mut point = u.clone();
            let mut sign = 1.0;
            for (j, dir) in dirs.iter().enumerate() {
                let eps = if mask & (1 << j) != 0 { 1.0 } else { -1.0 };
                sign *= eps;
                point = AlgebraElement::axpby(1.0, &point, eps * h_step, dir);
            }
            acc = AlgebraElement::axpby(1.0, &acc, sign, &self.eval(algebra, &point)?);
        }
        Ok(acc.scale(1.0 / (2.0 * h_step).powi(n as i32)))
    }

    /// Local-Lipschitz witness: returns
    /// `(‖ℳ(x)−ℳ(y)‖, K·Σᵢ ‖x‖^{k−i}‖y‖^{i−1}·‖x−y‖)`; the contract is lhs ≤ rhs.
    pub fn lipschitz_witness(
        &self,
        algebra: &Algebra,
        x: &AlgebraElement,
        y: &AlgebraElement,
    ) -> Result<(f64, f64)> {
        let k = self.order();
        let lhs = algebra.norm(&self.eval(algebra, x)?.sub(&self.eval(algebra, y)?))?;
        let nx = algebra.norm(x)?;
        let ny = algebra.norm(y)?;
        let dist = algebra.norm(&x.sub(y))?;
        let mut c = 0.0;
        for i in 1..=k {
            c += nx.powi((k - i) as i32) * ny.powi((i - 1) as i32);
        }
        Ok((lhs, self.base.bound() * c * dist))
    }
}

/// A bounded k-linear form `B^k → ℝ`, stored as a dense scalar-valued tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct MultilinearForm {
    dim: usize,
    arity: usize,
    data: Vec<f64>,
}

impl MultilinearForm {
    pub fn new(dim: usize, arity: usize, data: Vec<f64>) -> Result<Self> {
        let len = dim
            .checked_pow(arity as u32)
            .filter(|l| *l <= DENSE_COEFF_CAP)
            .ok_or_else(|| Error::InvalidArgument("form tensor too large".into()))?;
        if data.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: data.len(),
            });
        }
        Ok(Self { dim, arity, data })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn eval(&self, args: &[&AlgebraElement]) -> Result<f64> {
        if args.len() != self.arity {
            return Err(Error::InvalidArgument(format!(
                "arity mismatch: form takes {} arguments, got {}",
                self.arity,
                args.len()
            )));
        }
        let mut cur = self.data.clone();
        for arg in args {
            if arg.coords().len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: arg.coords().len(),
                });
            }
            let next_len = cur.len() / self.dim;
            let mut next = vec![0.0; next_len];
            for (i, &xi) in arg.coords().iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let block = &cur[i * next_len..(i + 1) * next_len];
                for (nv, b) in next.iter_mut().zip(block) {
                    *nv += xi * b;
                }
            }
            cur = next;
        }
        Ok(cur[0])
    }

    /// Evaluate on the diagonal: the induced scalar monomial.
    pub fn eval_monomial(&self, x: &AlgebraElement) -> Result<f64> {
        let args: Vec<&AlgebraElement> = (0..self.arity).map(|_| x).collect();
        self.eval(&args)
    }
}

/// Scalar form `x ↦ ⟨ℳ(x), z⟩` realized from a monomial and a unit-norm
/// element of the ambient Hilbert structure (grid algebra only).
pub fn form_from_monomial(
    algebra: &Algebra,
    monomial: &Monomial,
    z: &AlgebraElement,
) -> Result<MultilinearForm> {
    let geom = algebra.geometry().ok_or_else(|| {
        Error::AlgebraMismatch("form_from_monomial needs an inner-product (grid) algebra".into())
    })?;
    let norm_z = algebra.norm(z)?;
    if (norm_z - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "z must have unit norm, got ‖z‖ = {norm_z}"
        )));
    }
    let dim = algebra.dim();
    let k = monomial.order();
    let len = dim
        .checked_pow(k as u32)
        .filter(|l| *l <= DENSE_COEFF_CAP)
        .ok_or_else(|| Error::InvalidArgument("form tensor too large".into()))?;
    // Pairing vector: ⟨v, z⟩ = vᵀ·(gram·z).
    let mz = geom.gram() * z.as_vector();

    let mut data = vec![0.0; len];
    match monomial.base().rep() {
        MapRep::Dense(t) => {
            for (flat, slot) in data.iter_mut().enumerate() {
                let base = flat * dim;
                let mut acc = 0.0;
                for j in 0..dim {
                    acc += t.data()[base + j] * mz[j];
                }
                *slot = acc;
            }
        }
        MapRep::Product { post } => {
            // Basis products vanish off the diagonal for the pointwise product.
            for i in 0..dim {
                let value = match post {
                    Some(p) => {
                        let mut acc = 0.0;
                        for j in 0..dim {
                            acc += p[(j, i)] * mz[j];
                        }
                        acc
                    }
                    None => mz[i],
                };
                let mut flat = 0usize;
                for _ in 0..k {
                    flat = flat * dim + i;
                }
                data[flat] = value;
            }
        }
    }
    MultilinearForm::new(dim, k, data)
}
