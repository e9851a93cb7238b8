//! The three concrete Banach-algebra instances everything else computes on:
//!
//! * grid functions on `[0, x_max]` under the pointwise product, normed by a
//!   discretized weighted-derivative (Filipović-type) norm rescaled so the
//!   product is submultiplicative,
//! * d×d real matrices under the matrix product and Frobenius norm,
//! * signed measures on the integer lattice `{0,…,m}` under truncated
//!   convolution and the total-variation norm.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tag identifying which algebra an element's coordinates live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgebraTag {
    /// Grid function sampled at `n_points` nodes, pointwise product.
    GridPointwise { n_points: usize },
    /// Row-major d×d matrix, matrix product.
    Matrix { d: usize },
    /// Signed measure on `{0,…,sites−1}`, truncated convolution.
    LatticeMeasure { sites: usize },
}

impl AlgebraTag {
    /// Coordinate dimension of elements carrying this tag.
    pub fn dim(&self) -> usize {
        match *self {
            AlgebraTag::GridPointwise { n_points } => n_points,
            AlgebraTag::Matrix { d } => d * d,
            AlgebraTag::LatticeMeasure { sites } => sites,
        }
    }
}

/// A coordinate vector interpreted under one of the three algebra instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement {
    coords: Vec<f64>,
    tag: AlgebraTag,
}

impl AlgebraElement {
    pub fn new(coords: Vec<f64>, tag: AlgebraTag) -> Result<Self> {
        if coords.len() != tag.dim() {
            return Err(Error::DimensionMismatch {
                expected: tag.dim(),
                got: coords.len(),
            });
        }
        Ok(Self { coords, tag })
    }

    pub fn zeros(tag: AlgebraTag) -> Self {
        Self {
            coords: vec![0.0; tag.dim()],
            tag,
        }
    }

    /// Grid function from node samples.
    pub fn grid(values: Vec<f64>) -> Self {
        let tag = AlgebraTag::GridPointwise {
            n_points: values.len(),
        };
        Self {
            coords: values,
            tag,
        }
    }

    /// d×d matrix from row-major entries.
    pub fn matrix(d: usize, row_major: Vec<f64>) -> Result<Self> {
        Self::new(row_major, AlgebraTag::Matrix { d })
    }

    /// Matrix basis element `e_{ij}` (1 at row i, column j).
    pub fn matrix_unit(d: usize, i: usize, j: usize) -> Self {
        let mut coords = vec![0.0; d * d];
        coords[i * d + j] = 1.0;
        Self {
            coords,
            tag: AlgebraTag::Matrix { d },
        }
    }

    /// Lattice measure from site masses.
    pub fn lattice(masses: Vec<f64>) -> Self {
        let tag = AlgebraTag::LatticeMeasure {
            sites: masses.len(),
        };
        Self {
            coords: masses,
            tag,
        }
    }

    /// Unit point mass at a lattice site.
    pub fn dirac(sites: usize, site: usize) -> Result<Self> {
        if site >= sites {
            return Err(Error::InvalidArgument(format!(
                "site {site} outside lattice of {sites} sites"
            )));
        }
        let mut coords = vec![0.0; sites];
        coords[site] = 1.0;
        Ok(Self {
            coords,
            tag: AlgebraTag::LatticeMeasure { sites },
        })
    }

    pub fn tag(&self) -> AlgebraTag {
        self.tag
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }

    pub fn from_vector(v: &DVector<f64>, tag: AlgebraTag) -> Result<Self> {
        Self::new(v.iter().copied().collect(), tag)
    }

    /// Matrix entry (i, j); panics unless the tag is `Matrix`.
    pub fn mat(&self, i: usize, j: usize) -> f64 {
        match self.tag {
            AlgebraTag::Matrix { d } => self.coords[i * d + j],
            _ => panic!("mat() on non-matrix element"),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|c| a * c).collect(),
            tag: self.tag,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.tag, other.tag, "algebra tag mismatch in add");
        Self {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
            tag: self.tag,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.tag, other.tag, "algebra tag mismatch in sub");
        Self {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a - b)
                .collect(),
            tag: self.tag,
        }
    }

    /// a·x + b·y for elements of the same tag.
    pub fn axpby(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        assert_eq!(x.tag, y.tag, "algebra tag mismatch in axpby");
        Self {
            coords: x
                .coords
                .iter()
                .zip(&y.coords)
                .map(|(xi, yi)| a * xi + b * yi)
                .collect(),
            tag: x.tag,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coords.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }
}

/// Spatial grid for the discretized Filipović space.
///
/// Nodes are `x_i = i·dx` for `i = 0..n_points` with `dx = x_max/(n_points−1)`,
/// and the weight is `w(x) = exp(alpha·x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_max: f64,
    pub n_points: usize,
    pub dx: f64,
    pub alpha: f64,
}

impl GridSpec {
    pub fn new(x_max: f64, n_points: usize, alpha: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidArgument("n_points must be ≥ 2".into()));
        }
        if !(x_max > 0.0) {
            return Err(Error::InvalidArgument("x_max must be positive".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(
                "alpha must be positive so that ∫ w⁻¹ dx is finite".into(),
            ));
        }
        let dx = x_max / (n_points - 1) as f64;
        Ok(Self {
            x_max,
            n_points,
            dx,
            alpha,
        })
    }

    /// Default desk-scale grid: 16 nodes on [0, 4], alpha = 1.
    pub fn default_desk() -> Self {
        Self::new(4.0, 16, 1.0).expect("default grid parameters are valid")
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Weight w(x) = exp(alpha·x); w(0) = 1, increasing, continuous.
    pub fn weight(&self, x: f64) -> f64 {
        (self.alpha * x).exp()
    }
}

/// Relative tolerance used to snap interpolation offsets onto grid nodes, so
/// that shifts by exact grid multiples act as pure node re-indexing.
const NODE_SNAP_EPS: f64 = 1e-9;

/// Discretized Filipović-space geometry: rescaled norm, inner product,
/// evaluation functional and shift semigroup on a [`GridSpec`].
#[derive(Clone, Debug)]
pub struct FilipovicGeometry {
    grid: GridSpec,
    c_norm: f64,
    quadrature_weights: Vec<f64>,
    max_extrapolation: f64,
    /// Gram matrix of the c-rescaled inner product: ⟨g,h⟩ = gᵀ·gram·h.
    gram: DMatrix<f64>,
    /// Extremal eigenvalues of the Gram matrix (norm-equivalence constants).
    gram_eig_min: f64,
    gram_eig_max: f64,
}

impl FilipovicGeometry {
    pub fn new(grid: GridSpec) -> Self {
        Self::with_extrapolation(grid, grid.x_max)
    }

    /// Geometry with an explicit extrapolation allowance beyond `x_max`.
    pub fn with_extrapolation(grid: GridSpec, max_extrapolation: f64) -> Self {
        let n = grid.n_points;
        // ∫₀^∞ w⁻¹ dx = 1/alpha in closed form for the exponential weight.
        let inv_weight_integral = 1.0 / grid.alpha;
        let c_norm = (1.0 + 8.0 * (1.0 + inv_weight_integral)).sqrt();

        // Trapezoidal weights for ∫₀^{x_max} on the grid nodes.
        let mut quadrature_weights = vec![grid.dx; n];
        quadrature_weights[0] = grid.dx / 2.0;
        quadrature_weights[n - 1] = grid.dx / 2.0;

        // Finite-difference derivative matrix: central in the interior,
        // one-sided at the boundaries.
        let mut deriv = DMatrix::<f64>::zeros(n, n);
        deriv[(0, 0)] = -1.0 / grid.dx;
        deriv[(0, 1)] = 1.0 / grid.dx;
        for i in 1..n - 1 {
            deriv[(i, i - 1)] = -1.0 / (2.0 * grid.dx);
            deriv[(i, i + 1)] = 1.0 / (2.0 * grid.dx);
        }
        deriv[(n - 1, n - 2)] = -1.0 / grid.dx;
        deriv[(n - 1, n - 1)] = 1.0 / grid.dx;

        // gram = c²·(e₀e₀ᵀ + Dᵀ·diag(q_i·w(x_i))·D)
        let w_diag = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            (0..n).map(|i| quadrature_weights[i] * grid.weight(grid.node(i))),
        ));
        let mut gram = deriv.transpose() * w_diag * &deriv;
        gram[(0, 0)] += 1.0;
        gram *= c_norm * c_norm;
        // Numerical symmetrization.
        gram = (&gram + gram.transpose()) * 0.5;

        let eig = gram.clone().symmetric_eigen();
        let gram_eig_min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let gram_eig_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);

        Self {
            grid,
            c_norm,
            quadrature_weights,
            max_extrapolation,
            gram,
            gram_eig_min,
            gram_eig_max,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// The rescaling constant c = √(1 + 8(1 + ∫₀^∞ w⁻¹ dx)).
    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    pub fn quadrature_weights(&self) -> &[f64] {
        &self.quadrature_weights
    }

    pub fn max_extrapolation(&self) -> f64 {
        self.max_extrapolation
    }

    /// Gram matrix of the c-rescaled inner product on node coordinates.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// (λ_min, λ_max) of the Gram matrix; ‖g‖ ∈ [√λ_min, √λ_max]·‖g‖₂.
    pub fn gram_eigen_range(&self) -> (f64, f64) {
        (self.gram_eig_min, self.gram_eig_max)
    }

    fn check_grid(&self, g: &AlgebraElement) -> Result<()> {
        match g.tag() {
            AlgebraTag::GridPointwise { n_points } if n_points == self.grid.n_points => Ok(()),
            other => Err(Error::AlgebraMismatch(format!(
                "expected grid element with {} nodes, got {:?}",
                self.grid.n_points, other
            ))),
        }
    }

    /// c-rescaled H_w inner product ⟨g, h⟩.
    pub fn inner(&self, g: &AlgebraElement, h: &AlgebraElement) -> Result<f64> {
        self.check_grid(g)?;
        self.check_grid(h)?;
        let gv = g.as_vector();
        let hv = h.as_vector();
        Ok((gv.transpose() * &self.gram * hv)[(0, 0)])
    }

    /// Rescaled norm c·√(g(0)² + Σ qᵢ·w(xᵢ)·g′(xᵢ)²).
    pub fn norm(&self, g: &AlgebraElement) -> Result<f64> {
        Ok(self.inner(g, g)?.max(0.0).sqrt())
    }

    /// Linear interpolation of `g` at `x`, with constant extrapolation beyond
    /// `x_max`. Returns the value and whether extrapolation occurred.
    pub fn eval_delta_flagged(&self, x: f64, g: &AlgebraElement) -> Result<(f64, bool)> {
        self.check_grid(g)?;
        if !(x >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "evaluation point x = {x} must be nonnegative"
            )));
        }
        if x > self.grid.x_max + self.max_extrapolation {
            return Err(Error::ExtrapolationPolicy {
                x,
                max: self.grid.x_max + self.max_extrapolation,
            });
        }
        let coords = g.coords();
        let n = self.grid.n_points;
        if x >= self.grid.x_max {
            let extrapolated = x > self.grid.x_max;
            return Ok((coords[n - 1], extrapolated));
        }
        let pos = x / self.grid.dx;
        let mut j = pos.floor() as usize;
        if j >= n - 1 {
            j = n - 2;
        }
        let mut theta = pos - j as f64;
        if theta < NODE_SNAP_EPS {
            theta = 0.0;
        } else if theta > 1.0 - NODE_SNAP_EPS {
            theta = 1.0;
        }
        Ok(((1.0 - theta) * coords[j] + theta * coords[j + 1], false))
    }

    /// Evaluation functional δ_x by linear interpolation.
    pub fn eval_delta(&self, x: f64, g: &AlgebraElement) -> Result<f64> {
        Ok(self.eval_delta_flagged(x, g)?.0)
    }

    /// Shift semigroup: (𝒮_t g)(x) = g(x + t), linearly interpolated off-node
    /// with constant extrapolation g(x_max) beyond the grid.
    pub fn shift(&self, t: f64, g: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_grid(g)?;
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "shift time t = {t} must be nonnegative"
            )));
        }
        let n = self.grid.n_points;
        let coords = g.coords();
        let pos = t / self.grid.dx;
        let mut m = pos.floor() as usize;
        let mut theta = pos - m as f64;
        if theta < NODE_SNAP_EPS {
            theta = 0.0;
        } else if theta > 1.0 - NODE_SNAP_EPS {
            theta = 0.0;
            m += 1;
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let j = (i + m).min(n - 1);
            let j1 = (i + m + 1).min(n - 1);
            out.push((1.0 - theta) * coords[j] + theta * coords[j1]);
        }
        Ok(AlgebraElement::grid(out))
    }

    /// Matrix of the one-node shift 𝒮_dx (node re-indexing with constant
    /// extrapolation at the last node).
    pub fn shift_step_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.n_points;
        DMatrix::from_fn(n, n, |i, j| if j == (i + 1).min(n - 1) { 1.0 } else { 0.0 })
    }
}

/// Matrix algebra instance ℝ^{d×d} with the Frobenius norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixAlgebraSpec {
    pub d: usize,
}

impl MatrixAlgebraSpec {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(
                "matrix algebra dimension must be ≥ 2".into(),
            ));
        }
        Ok(Self { d })
    }
}

/// Finite integer lattice `{0,…,sites−1}` carrying signed measures under
/// truncated convolution: mass falling off the lattice accumulates at the
/// last site, which keeps TV-norm submultiplicativity exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub sites: usize,
}

impl LatticeSpec {
    pub fn new(sites: usize) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidArgument("lattice needs ≥ 2 sites".into()));
        }
        Ok(Self { sites })
    }
}

/// One of the three concrete algebra instances, providing the product, norm
/// and (for the grid instance) the Filipović-space geometry.
#[derive(Clone, Debug)]
pub enum Algebra {
    Grid(FilipovicGeometry),
    Matrix(MatrixAlgebraSpec),
    Lattice(LatticeSpec),
}

impl Algebra {
    pub fn tag(&self) -> AlgebraTag {
        match self {
            Algebra::Grid(geom) => AlgebraTag::GridPointwise {
                n_points: geom.grid().n_points,
            },
            Algebra::Matrix(spec) => AlgebraTag::Matrix { d: spec.d },
            Algebra::Lattice(spec) => AlgebraTag::LatticeMeasure { sites: spec.sites },
        }
    }

    pub fn dim(&self) -> usize {
        self.tag().dim()
    }

    pub fn is_commutative(&self) -> bool {
        !matches!(self, Algebra::Matrix(_))
    }

    pub fn geometry(&self) -> Option<&FilipovicGeometry> {
        match self {
            Algebra::Grid(geom) => Some(geom),
            _ => None,
        }
    }

    fn check(&self, a: &AlgebraElement) -> Result<()> {
        if a.tag() == self.tag() {
            Ok(())
        } else {
            Err(Error::AlgebraMismatch(format!(
                "element tag {:?} does not match algebra {:?}",
                a.tag(),
                self.tag()
            )))
        }
    }

    /// Multiplicative unit: the constant-one function, the identity matrix,
    /// or the point mass at the lattice origin.
    pub fn one(&self) -> AlgebraElement {
        match self {
            Algebra::Grid(geom) => AlgebraElement::grid(vec![1.0; geom.grid().n_points]),
            Algebra::Matrix(spec) => {
                let d = spec.d;
                let mut coords = vec![0.0; d * d];
                for i in 0..d {
                    coords[i * d + i] = 1.0;
                }
                AlgebraElement {
                    coords,
                    tag: AlgebraTag::Matrix { d },
                }
            }
            Algebra::Lattice(spec) => AlgebraElement::dirac(spec.sites, 0).expect("site 0 exists"),
        }
    }

    /// The algebra product: pointwise (grid), matrix product (matrix) or
    /// truncated discrete convolution (lattice measure).
    pub fn mul(&self, a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
        self.check(a)?;
        self.check(b)?;
        let out = match self {
            Algebra::Grid(_) => a
                .coords()
                .iter()
                .zip(b.coords())
                .map(|(x, y)| x * y)
                .collect::<Vec<_>>(),
            Algebra::Matrix(spec) => {
                let d = spec.d;
                let mut out = vec![0.0; d * d];
                for i in 0..d {
                    for p in 0..d {
                        let aip = a.coords()[i * d + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..d {
                            out[i * d + j] += aip * b.coords()[p * d + j];
                        }
                    }
                }
                out
            }
            Algebra::Lattice(spec) => {
                let last = spec.sites - 1;
                let mut out = vec![0.0; spec.sites];
                // Sum over unordered site pairs so that each target site
                // accumulates terms in an operand-independent order: the
                // convolution is then exactly (bitwise) commutative.
                for i in 0..spec.sites {
                    for j in i..spec.sites {
                        let target = (i + j).min(last);
                        let contrib = if i == j {
                            a.coords()[i] * b.coords()[i]
                        } else {
                            a.coords()[i] * b.coords()[j] + a.coords()[j] * b.coords()[i]
                        };
                        out[target] += contrib;
                    }
                }
                out
            }
        };
        Ok(AlgebraElement {
            coords: out,
            tag: self.tag(),
        })
    }

    /// n-th algebra power; `pow(a, 0)` is the multiplicative unit.
    pub fn pow(&self, a: &AlgebraElement, n: usize) -> Result<AlgebraElement> {
        self.check(a)?;
        let mut out = self.one();
        for _ in 0..n {
            out = self.mul(&out, a)?;
        }
        Ok(out)
    }

    /// The algebra norm: rescaled Filipović norm, Frobenius norm, or
    /// total-variation norm.
    pub fn norm(&self, a: &AlgebraElement) -> Result<f64> {
        self.check(a)?;
        match self {
            Algebra::Grid(geom) => geom.norm(a),
            Algebra::Matrix(_) => Ok(a.coords().iter().map(|c| c * c).sum::<f64>().sqrt()),
            Algebra::Lattice(_) => Ok(a.coords().iter().map(|c| c.abs()).sum()),
        }
    }

    /// Norm-equivalence constants (a, b) with ‖v‖_alg ≤ a·‖v‖₂ and
    /// ‖v‖₂ ≤ b·‖v‖_alg, used for certified multilinear bounds.
    pub fn norm_equivalence(&self) -> (f64, f64) {
        match self {
            Algebra::Grid(geom) => {
                let (lo, hi) = geom.gram_eigen_range();
                (hi.sqrt(), 1.0 / lo.max(f64::MIN_POSITIVE).sqrt())
            }
            Algebra::Matrix(_) => (1.0, 1.0),
            Algebra::Lattice(spec) => ((spec.sites as f64).sqrt(), 1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_geometry() -> FilipovicGeometry {
        FilipovicGeometry::new(GridSpec::default_desk())
    }

    fn random_grid(rng: &mut impl Rng, n: usize) -> AlgebraElement {
        AlgebraElement::grid((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn grid_mul_is_pointwise() {
        let alg = Algebra::Grid(FilipovicGeometry::new(GridSpec::new(2.0, 3, 1.0).unwrap()));
        let a = AlgebraElement::grid(vec![1.0, 2.0, 3.0]);
        let b = AlgebraElement::grid(vec![2.0, 2.0, 2.0]);
        assert_eq!(alg.mul(&a, &b).unwrap().coords(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn matrix_unit_e12_squares_to_zero() {
        let alg = Algebra::Matrix(MatrixAlgebraSpec::new(2).unwrap());
        let e12 = AlgebraElement::matrix_unit(2, 0, 1);
        let sq = alg.mul(&e12, &e12).unwrap();
        assert_eq!(sq.coords(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dirac_convolution_adds_sites() {
        let alg = Algebra::Lattice(LatticeSpec::new(8).unwrap());
        let d1 = AlgebraElement::dirac(8, 1).unwrap();
        let d2 = AlgebraElement::dirac(8, 2).unwrap();
        let d3 = alg.mul(&d1, &d2).unwrap();
        assert_eq!(d3, AlgebraElement::dirac(8, 3).unwrap());
    }

    #[test]
    fn lattice_boundary_mass_accumulates() {
        let alg = Algebra::Lattice(LatticeSpec::new(4).unwrap());
        let d3 = AlgebraElement::dirac(4, 3).unwrap();
        let out = alg.mul(&d3, &d3).unwrap();
        // 3 + 3 = 6 falls off the lattice and lands at the last site.
        assert_eq!(out, AlgebraElement::dirac(4, 3).unwrap());
    }

    #[test]
    fn c_norm_closed_form_alpha_one() {
        let geom = desk_geometry();
        assert_relative_eq!(geom.c_norm(), 17.0f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn constant_function_norm_is_c_times_level() {
        let geom = desk_geometry();
        let g = AlgebraElement::grid(vec![5.0; 16]);
        assert_relative_eq!(
            geom.norm(&g).unwrap(),
            5.0 * geom.c_norm(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn tv_norm_of_signed_masses() {
        let alg = Algebra::Lattice(LatticeSpec::new(8).unwrap());
        let nu = AlgebraElement::dirac(8, 1)
            .unwrap()
            .add(&AlgebraElement::dirac(8, 2).unwrap().scale(-1.0));
        assert_eq!(alg.norm(&nu).unwrap(), 2.0);
    }

    #[test]
    fn eval_delta_interpolates_linear_data() {
        let geom = FilipovicGeometry::new(GridSpec::new(1.0, 11, 1.0).unwrap());
        let g = AlgebraElement::grid(geom.grid().nodes());
        assert_relative_eq!(geom.eval_delta(0.5, &g).unwrap(), 0.5, max_relative = 1e-12);
        assert_relative_eq!(
            geom.eval_delta(0.53, &g).unwrap(),
            0.53,
            max_relative = 1e-12
        );
    }

    #[test]
    fn eval_delta_extrapolation_flag_and_policy() {
        let geom = desk_geometry();
        let g = AlgebraElement::grid((0..16).map(|i| i as f64).collect());
        let (v, flagged) = geom.eval_delta_flagged(5.0, &g).unwrap();
        assert_eq!(v, 15.0);
        assert!(flagged);
        assert!(geom.eval_delta(100.0, &g).is_err());
        assert!(geom.eval_delta(-0.1, &g).is_err());
    }

    #[test]
    fn eval_delta_multiplicative_at_nodes() {
        let geom = desk_geometry();
        let alg = Algebra::Grid(geom.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = random_grid(&mut rng, 16);
            let h = random_grid(&mut rng, 16);
            let i = rng.random_range(0..16usize);
            let x = geom.grid().node(i);
            let gh = alg.mul(&g, &h).unwrap();
            let lhs = geom.eval_delta(x, &gh).unwrap();
            let rhs = geom.eval_delta(x, &g).unwrap() * geom.eval_delta(x, &h).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn shift_zero_is_identity_and_one_node_exact() {
        let geom = desk_geometry();
        let g = AlgebraElement::grid((0..16).map(|i| (i as f64).sin()).collect());
        assert_eq!(geom.shift(0.0, &g).unwrap(), g);

        let shifted = geom.shift(geom.grid().dx, &g).unwrap();
        let mut expected: Vec<f64> = g.coords()[1..].to_vec();
        expected.push(g.coords()[15]);
        assert_eq!(shifted.coords(), &expected[..]);
    }

    #[test]
    fn shift_rejects_negative_time() {
        let geom = desk_geometry();
        let g = AlgebraElement::grid(vec![0.0; 16]);
        assert!(geom.shift(-1.0, &g).is_err());
    }

    #[test]
    fn shift_semigroup_exact_at_grid_multiples() {
        let geom = desk_geometry();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dx = geom.grid().dx;
        for _ in 0..20 {
            let g = random_grid(&mut rng, 16);
            let s = rng.random_range(0..5usize) as f64 * dx;
            let t = rng.random_range(0..5usize) as f64 * dx;
            let a = geom.shift(s, &geom.shift(t, &g).unwrap()).unwrap();
            let b = geom.shift(s + t, &g).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shift_homomorphism_exact_at_grid_multiples() {
        let geom = desk_geometry();
        let alg = Algebra::Grid(geom.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dx = geom.grid().dx;
        for _ in 0..20 {
            let g = random_grid(&mut rng, 16);
            let h = random_grid(&mut rng, 16);
            let t = rng.random_range(0..6usize) as f64 * dx;
            let lhs = geom.shift(t, &alg.mul(&g, &h).unwrap()).unwrap();
            let rhs = alg
                .mul(&geom.shift(t, &g).unwrap(), &geom.shift(t, &h).unwrap())
                .unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn shift_is_linear() {
        let geom = desk_geometry();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let g = random_grid(&mut rng, 16);
            let h = random_grid(&mut rng, 16);
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let t = rng.random_range(0.0..2.0);
            let lhs = geom.shift(t, &AlgebraElement::axpby(a, &g, b, &h)).unwrap();
            let rhs = AlgebraElement::axpby(
                a,
                &geom.shift(t, &g).unwrap(),
                b,
                &geom.shift(t, &h).unwrap(),
            );
            for (x, y) in lhs.coords().iter().zip(rhs.coords()) {
                assert_relative_eq!(x, y, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn submultiplicative_norms_all_tags() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let algebras = vec![
            Algebra::Grid(desk_geometry()),
            Algebra::Matrix(MatrixAlgebraSpec::new(3).unwrap()),
            Algebra::Lattice(LatticeSpec::new(12).unwrap()),
        ];
        for alg in &algebras {
            let dim = alg.dim();
            for _ in 0..1000 {
                let a = AlgebraElement::new(
                    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    alg.tag(),
                )
                .unwrap();
                let b = AlgebraElement::new(
                    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    alg.tag(),
                )
                .unwrap();
                let nab = alg.norm(&alg.mul(&a, &b).unwrap()).unwrap();
                let bound = alg.norm(&a).unwrap() * alg.norm(&b).unwrap();
                assert!(
                    nab <= bound * (1.0 + 1e-9),
                    "submultiplicativity violated: {nab} > {bound} under {:?}",
                    alg.tag()
                );
            }
        }
    }

    #[test]
    fn matrix_tag_non_commutative_witness() {
        let alg = Algebra::Matrix(MatrixAlgebraSpec::new(2).unwrap());
        let a = AlgebraElement::matrix_unit(2, 0, 1);
        let b = AlgebraElement::matrix_unit(2, 1, 0);
        let ab = alg.mul(&a, &b).unwrap();
        let ba = alg.mul(&b, &a).unwrap();
        assert_ne!(ab, ba);
    }

    #[test]
    fn commutativity_grid_and_lattice() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for alg in [
            Algebra::Grid(desk_geometry()),
            Algebra::Lattice(LatticeSpec::new(9).unwrap()),
        ] {
            let dim = alg.dim();
            for _ in 0..100 {
                let a = AlgebraElement::new(
                    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    alg.tag(),
                )
                .unwrap();
                let b = AlgebraElement::new(
                    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    alg.tag(),
                )
                .unwrap();
                assert_eq!(alg.mul(&a, &b).unwrap(), alg.mul(&b, &a).unwrap());
            }
        }
    }

    #[test]
    fn tag_mismatch_rejected() {
        let alg = Algebra::Grid(desk_geometry());
        let a = AlgebraElement::grid(vec![1.0; 16]);
        let b = AlgebraElement::lattice(vec![1.0; 16]);
        assert!(alg.mul(&a, &b).is_err());
        let short = AlgebraElement::grid(vec![1.0; 8]);
        assert!(alg.mul(&a, &short).is_err());
    }

    #[test]
    fn eval_delta_product_rule_off_node_refines_quadratically() {
        // Off grid nodes δ_x(g·h) − δ_x(g)δ_x(h) = O(dx²) as the grid
        // refines; averaged over many evaluation points so the in-cell
        // position does not bias individual ratios.
        let mut errors = Vec::new();
        for n in [17usize, 33, 65] {
            let geom = FilipovicGeometry::new(GridSpec::new(4.0, n, 1.0).unwrap());
            let alg = Algebra::Grid(geom.clone());
            let g = AlgebraElement::grid(geom.grid().nodes().iter().map(|x| x.sin()).collect());
            let h = AlgebraElement::grid(geom.grid().nodes().iter().map(|x| x.cos()).collect());
            let gh = alg.mul(&g, &h).unwrap();
            let mut acc = 0.0;
            let samples = 1000;
            for i in 0..samples {
                let x = 0.1 + 3.0 * i as f64 / samples as f64;
                acc += (geom.eval_delta(x, &gh).unwrap()
                    - geom.eval_delta(x, &g).unwrap() * geom.eval_delta(x, &h).unwrap())
                .abs();
            }
            errors.push(acc / samples as f64);
        }
        // Each halving of dx should shrink the mean residual by roughly 4.
        assert!(errors[1] < errors[0] / 2.5, "{errors:?}");
        assert!(errors[2] < errors[1] / 2.5, "{errors:?}");
    }

    #[test]
    fn one_is_multiplicative_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for alg in [
            Algebra::Grid(desk_geometry()),
            Algebra::Matrix(MatrixAlgebraSpec::new(2).unwrap()),
            Algebra::Lattice(LatticeSpec::new(6).unwrap()),
        ] {
            let dim = alg.dim();
            let a = AlgebraElement::new(
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                alg.tag(),
            )
            .unwrap();
            let one = alg.one();
            assert_eq!(alg.mul(&one, &a).unwrap(), a);
            assert_eq!(alg.mul(&a, &one).unwrap(), a);
            assert_eq!(alg.pow(&a, 0).unwrap(), one);
        }
    }
}
