//! Operators on truncated composite Hilbert spaces.
//!
//! A [`HilbertSpace`] is an ordered list of subsystem dimensions. Composite
//! indices follow the Kronecker convention `slot 0 ⊗ slot 1 ⊗ …`, so the last
//! slot varies fastest. Cavity models always put the cavity in slot 0.
//!
//! Operators are stored densely; they are small (a few hundred rows at most)
//! and only the Liouvillian, which is quadratic in the Hilbert dimension, needs
//! a sparse representation (see [`crate::lindblad`]).

use std::ops::{Add, Mul, Sub};

use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative tolerance used for Hermiticity assertions.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Trace slack for density matrices.
pub const TRACE_TOL: f64 = 1e-10;
/// Allowed negative eigenvalue of a density matrix.
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
    total_dim: usize,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter("a Hilbert space needs at least one subsystem".into()));
        }
        if let Some(&bad) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(bad));
        }
        let total_dim = dims.iter().product();
        Ok(Self { dims, total_dim })
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn slots(&self) -> usize {
        self.dims.len()
    }

    /// Product of the dimensions strictly after `slot`.
    pub fn stride(&self, slot: usize) -> usize {
        self.dims[slot + 1..].iter().product()
    }

    /// Index of subsystem `slot` inside the composite basis index `index`.
    pub fn local_index(&self, index: usize, slot: usize) -> usize {
        (index / self.stride(slot)) % self.dims[slot]
    }

    fn tensor(&self, other: &HilbertSpace) -> HilbertSpace {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        HilbertSpace { total_dim: self.total_dim * other.total_dim, dims }
    }
}

/// A square complex matrix acting on a [`HilbertSpace`].
#[derive(Debug, Clone)]
pub struct Operator {
    space: HilbertSpace,
    matrix: Mat<C64>,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: Mat<C64>) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Self { space, matrix })
    }

    pub fn from_fn(space: HilbertSpace, f: impl FnMut(usize, usize) -> C64) -> Self {
        let n = space.total_dim();
        Self { matrix: Mat::from_fn(n, n, f), space }
    }

    pub fn zeros(space: HilbertSpace) -> Self {
        let n = space.total_dim();
        Self { matrix: Mat::zeros(n, n), space }
    }

    pub fn identity(space: HilbertSpace) -> Self {
        Self::from_fn(space, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// Diagonal operator with the given real entries on a single subsystem.
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let space = HilbertSpace::single(entries.len())?;
        Ok(Self::from_fn(space, |i, j| if i == j { C64::new(entries[i], 0.0) } else { C64::new(0.0, 0.0) }))
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    pub fn dagger(&self) -> Operator {
        Operator { space: self.space.clone(), matrix: self.matrix.adjoint().to_owned() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    pub fn scale(&self, c: C64) -> Operator {
        let matrix = Mat::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * c);
        Operator { space: self.space.clone(), matrix }
    }

    pub fn scale_real(&self, c: f64) -> Operator {
        self.scale(C64::new(c, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                m = m.max(self.matrix[(i, j)].norm());
            }
        }
        m
    }

    /// `max|A − A†| / max|A|`, zero for the zero operator.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim();
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut r = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                r = r.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        r / scale
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_residual() <= HERMITIAN_TOL
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        Ok(&self.try_mul(other)? - &other.try_mul(self)?)
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        self.check_same_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix * &other.matrix })
    }

    /// Kronecker product `self ⊗ other` on the concatenated space.
    pub fn kron(&self, other: &Operator) -> Operator {
        let (na, nb) = (self.dim(), other.dim());
        let matrix = Mat::from_fn(na * nb, na * nb, |r, c| self.matrix[(r / nb, c / nb)] * other.matrix[(r % nb, c % nb)]);
        Operator { space: self.space.tensor(&other.space), matrix }
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let herm = Mat::from_fn(n, n, |i, j| (self.matrix[(i, j)] + self.matrix[(j, i)].conj()) * 0.5);
        herm.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::LinearAlgebra(format!("{e:?}")))
    }

    /// Eigenvalues of a general (non-Hermitian) operator.
    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        self.matrix.eigenvalues().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))
    }

    /// Checks Hermiticity, unit trace and positivity within the crate tolerances.
    pub fn validate_density(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let herm = self.hermiticity_residual();
        if herm > HERMITIAN_TOL.max(1e-10) {
            return Err(Error::InvalidState(format!("hermiticity residual {herm:.3e}")));
        }
        let min = self.hermitian_eigenvalues()?.first().copied().unwrap_or(0.0);
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Purity `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        let n = self.dim();
        let mut p = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                p += self.matrix[(i, j)] * self.matrix[(j, i)];
            }
        }
        p.re
    }

    pub(crate) fn nonzeros(&self) -> Vec<(usize, usize, C64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let v = self.matrix[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    fn check_same_space(&self, other: &Operator) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch { left: self.space.dims.clone(), right: other.space.dims.clone() });
        }
        Ok(())
    }
}

impl Add for &Operator {
    type Output = Operator;

    /// Panics when the spaces differ; use [`Operator::try_mul`]-style checks upstream.
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "adding operators on different spaces");
        Operator { space: self.space.clone(), matrix: &self.matrix + &rhs.matrix }
    }
}

impl Sub for &Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "subtracting operators on different spaces");
        Operator { space: self.space.clone(), matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("multiplying operators on different spaces")
    }
}

/// Truncated bosonic lowering operator with `√k` on the superdiagonal.
pub fn fock_annihilation(n_max: usize) -> Result<Operator> {
    let space = HilbertSpace::single(n_max)?;
    Ok(Operator::from_fn(space, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) }))
}

/// `α·1 + ã` where `ã` is the truncated lowering operator in the displaced
/// number basis `D(α)|n⟩`.
pub fn displaced_annihilation(n_max: usize, alpha: C64) -> Result<Operator> {
    let a = fock_annihilation(n_max)?;
    let shift = Operator::identity(a.space().clone()).scale(alpha);
    Ok(&a + &shift)
}

/// Number operator `diag(0, 1, …, n_max−1)`.
pub fn fock_number(n_max: usize) -> Result<Operator> {
    let levels: Vec<f64> = (0..n_max).map(|k| k as f64).collect();
    Operator::diagonal(&levels)
}

/// Transition operator `|i⟩⟨j|` on a `dim`-level system (zero-based labels).
pub fn transition(dim: usize, i: usize, j: usize) -> Result<Operator> {
    if i >= dim || j >= dim {
        return Err(Error::InvalidParameter(format!("level out of range for dimension {dim}")));
    }
    let space = HilbertSpace::single(dim)?;
    Ok(Operator::from_fn(space, |r, c| if r == i && c == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
}

/// Lifts a single-subsystem operator to `space`, acting as identity on every
/// other slot.
pub fn embed(op: &Operator, space: &HilbertSpace, slot: usize) -> Result<Operator> {
    if slot >= space.slots() {
        return Err(Error::SlotOutOfRange { slot, slots: space.slots() });
    }
    if op.dim() != space.dims()[slot] {
        return Err(Error::DimensionMismatch { expected: space.dims()[slot], found: op.dim() });
    }
    let before: usize = space.dims()[..slot].iter().product();
    let after = space.stride(slot);
    let d = op.dim();
    let n = space.total_dim();
    let mut matrix = Mat::<C64>::zeros(n, n);
    for (i, j, v) in op.nonzeros() {
        for b in 0..before {
            for a in 0..after {
                matrix[((b * d + i) * after + a, (b * d + j) * after + a)] = v;
            }
        }
    }
    Ok(Operator { space: space.clone(), matrix })
}

/// `tr(obs · rho)`.
pub fn expect(obs: &Operator, rho: &Operator) -> Result<C64> {
    obs.check_same_space(rho)?;
    let n = obs.dim();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let o = obs.matrix[(i, j)];
            if o.re != 0.0 || o.im != 0.0 {
                acc += o * rho.matrix[(j, i)];
            }
        }
    }
    Ok(acc)
}

/// Thermal state of a single mode truncated to `n_max` levels and renormalised.
pub fn thermal_state(n_max: usize, n_bar: f64) -> Result<Operator> {
    if n_bar < 0.0 {
        return Err(Error::InvalidParameter(format!("negative occupation {n_bar}")));
    }
    let ratio = n_bar / (1.0 + n_bar);
    let weights: Vec<f64> = (0..n_max).map(|k| ratio.powi(k as i32)).collect();
    let z: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    Operator::diagonal(&probs)
}
