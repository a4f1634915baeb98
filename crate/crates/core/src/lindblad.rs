//! Open-system models, Liouvillian superoperators and steady states.
//!
//! Density matrices are vectorised by column stacking, `vec(ρ)[i + d·j] = ρᵢⱼ`,
//! so that `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`. The Liouvillian is
//!
//! ```text
//! 𝓛 = −i(1 ⊗ H − Hᵀ ⊗ 1) + Σₖ γₖ (L̄ₖ ⊗ Lₖ − ½ 1 ⊗ Lₖ†Lₖ − ½ (Lₖ†Lₖ)ᵀ ⊗ 1)
//! ```
//!
//! and is stored sparsely. Steady states come from a sparse LU of the bordered
//! system in which one population row is replaced by the trace functional; the
//! same factorisation is reused by the FCS module for Drazin solves.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{HilbertSpace, Operator, HERMITIAN_TOL};

/// Default steady-state residual tolerance.
pub const STEADY_STATE_TOL: f64 = 1e-10;

/// Liouvillian dimension below which the kernel dimension is checked densely.
const DENSE_KERNEL_CHECK_DIM: usize = 32 * 32;

/// Singular values below this fraction of the largest count as kernel.
const KERNEL_SV_RTOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct DissipationChannel {
    pub jump: Operator,
    pub rate: f64,
    pub bath_id: String,
    pub temperature: f64,
    /// Energy transferred into the system per jump; the FCS counting weight.
    pub quantum: f64,
}

impl DissipationChannel {
    pub fn new(jump: Operator, rate: f64, bath_id: impl Into<String>, temperature: f64, quantum: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!("channel rate must be non-negative, got {rate}")));
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidParameter(format!("bath temperature must be positive, got {temperature}")));
        }
        Ok(Self { jump, rate, bath_id: bath_id.into(), temperature, quantum })
    }
}

/// Coherent drive metadata carried by a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Drive {
    /// Laser drive `iE(a − a†)` on a damped cavity, in the frame rotating at `frequency`.
    Cavity { amplitude: f64, frequency: f64, kappa: f64, detuning: f64 },
    /// Classical field `g(αO† + α*O)` acting directly on the system.
    SemiClassical { alpha: C64, coupling: f64, frequency: f64 },
}

impl Drive {
    /// Rotating-frame amplitude of the field (the `g = 0` cavity amplitude for a cavity drive).
    pub fn alpha(&self) -> C64 {
        match *self {
            Drive::Cavity { amplitude, kappa, detuning, .. } => {
                let chi = C64::new(1.0, 0.0) / C64::new(1.0, 2.0 * detuning / kappa);
                chi * (-2.0 * amplitude / kappa)
            }
            Drive::SemiClassical { alpha, .. } => alpha,
        }
    }

    pub fn frequency(&self) -> f64 {
        match *self {
            Drive::Cavity { frequency, .. } | Drive::SemiClassical { frequency, .. } => frequency,
        }
    }
}

/// Flip-flop coupling `g(aO† + a†O)`, with `O` embedded on the full space.
#[derive(Debug, Clone)]
pub struct FlipFlop {
    pub coupling: f64,
    pub system_op: Operator,
}

#[derive(Debug, Clone)]
pub struct OpenSystem {
    pub space: HilbertSpace,
    /// Rotating-frame Hamiltonian.
    pub hamiltonian: Operator,
    pub channels: Vec<DissipationChannel>,
    pub drive: Option<Drive>,
    /// Embedded cavity annihilation operator; the cavity sits in slot 0.
    pub cavity: Option<Operator>,
    pub interaction: Option<FlipFlop>,
    /// Slot holding the few-level system, if any.
    pub system_slot: Option<usize>,
}

impl OpenSystem {
    pub fn new(hamiltonian: Operator, channels: Vec<DissipationChannel>) -> Result<Self> {
        let residual = hamiltonian.hermiticity_residual();
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian(residual));
        }
        let space = hamiltonian.space().clone();
        for ch in &channels {
            if ch.jump.space() != &space {
                return Err(Error::SpaceMismatch { left: space.dims().to_vec(), right: ch.jump.space().dims().to_vec() });
            }
        }
        Ok(Self { space, hamiltonian, channels, drive: None, cavity: None, interaction: None, system_slot: None })
    }

    pub fn with_drive(mut self, drive: Drive) -> Self {
        self.drive = Some(drive);
        self
    }

    pub fn with_cavity(mut self, annihilation: Operator) -> Result<Self> {
        self.check_space(&annihilation)?;
        self.cavity = Some(annihilation);
        Ok(self)
    }

    pub fn with_interaction(mut self, interaction: FlipFlop) -> Result<Self> {
        self.check_space(&interaction.system_op)?;
        self.interaction = Some(interaction);
        Ok(self)
    }

    pub fn with_system_slot(mut self, slot: usize) -> Result<Self> {
        if slot >= self.space.slots() {
            return Err(Error::SlotOutOfRange { slot, slots: self.space.slots() });
        }
        self.system_slot = Some(slot);
        Ok(self)
    }

    /// Slot whose truncation is monitored through the top-level population.
    pub fn fock_slot(&self) -> Option<usize> {
        self.cavity.as_ref().map(|_| 0)
    }

    /// Indices of the channels attached to `bath_id`.
    pub fn bath_channels(&self, bath_id: &str) -> Vec<usize> {
        self.channels.iter().enumerate().filter(|(_, c)| c.bath_id == bath_id).map(|(i, _)| i).collect()
    }

    /// Bath labels in first-appearance order.
    pub fn bath_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for ch in &self.channels {
            if !ids.contains(&ch.bath_id) {
                ids.push(ch.bath_id.clone());
            }
        }
        ids
    }

    /// The common temperature of a bath; errors when unknown or inconsistent.
    pub fn bath_temperature(&self, bath_id: &str) -> Result<f64> {
        let idx = self.bath_channels(bath_id);
        let first = idx.first().ok_or_else(|| Error::UnknownBath(bath_id.to_string()))?;
        let t = self.channels[*first].temperature;
        if idx.iter().any(|&i| (self.channels[i].temperature - t).abs() > 1e-12 * t) {
            return Err(Error::InvalidParameter(format!("bath `{bath_id}` has channels at different temperatures")));
        }
        Ok(t)
    }

    fn check_space(&self, op: &Operator) -> Result<()> {
        if op.space() != &self.space {
            return Err(Error::SpaceMismatch { left: self.space.dims().to_vec(), right: op.space().dims().to_vec() });
        }
        Ok(())
    }
}

/// A sparse superoperator acting on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    space: HilbertSpace,
    /// Entries sorted by (column, row), no duplicates.
    entries: Vec<(usize, usize, C64)>,
    fock_slot: Option<usize>,
}

impl Superoperator {
    pub(crate) fn from_triplets(space: HilbertSpace, mut triplets: Vec<(usize, usize, C64)>, fock_slot: Option<usize>) -> Self {
        // stable sort keeps duplicate summation order deterministic
        triplets.sort_by_key(|&(r, c, _)| (c, r));
        let mut entries: Vec<(usize, usize, C64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2.re != 0.0 || e.2.im != 0.0);
        Self { space, entries, fock_slot }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn hilbert_dim(&self) -> usize {
        self.space.total_dim()
    }

    /// Dimension `d²` of the vectorised space.
    pub fn dim(&self) -> usize {
        self.hilbert_dim() * self.hilbert_dim()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn fock_slot(&self) -> Option<usize> {
        self.fock_slot
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim());
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for &(r, c, x) in &self.entries {
            out[r] += x * v[c];
        }
        out
    }

    pub fn apply_to(&self, rho: &Operator) -> Operator {
        unvectorize(&self.space, &self.apply(&vectorize(rho)))
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::zeros(self.dim(), self.dim());
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Dense spectrum; intended for small superoperators.
    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        self.to_dense().eigenvalues().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.2.norm()))
    }

    /// `‖vec(1)ᵀ 𝓛‖∞ / max|𝓛|`; zero for a trace-preserving generator.
    pub fn trace_preservation_residual(&self) -> f64 {
        let d = self.hilbert_dim();
        let mut w = vec![C64::new(0.0, 0.0); self.dim()];
        for &(r, c, v) in &self.entries {
            if r % (d + 1) == 0 {
                w[c] += v;
            }
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        w.iter().fold(0.0f64, |m, x| m.max(x.norm())) / scale
    }

    pub(crate) fn faer_matrix(
        &self,
        extra: impl IntoIterator<Item = (usize, usize, C64)>,
        drop_row: Option<usize>,
    ) -> Result<SparseColMat<usize, C64>> {
        let n = self.dim();
        let mut triplets: Vec<Triplet<usize, usize, C64>> =
            self.entries.iter().filter(|e| Some(e.0) != drop_row).map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        triplets.extend(extra.into_iter().map(|(r, c, v)| Triplet::new(r, c, v)));
        SparseColMat::try_new_from_triplets(n, n, &triplets).map_err(|e| Error::LinearAlgebra(format!("{e:?}")))
    }
}

pub fn vectorize(rho: &Operator) -> Vec<C64> {
    let d = rho.dim();
    let mut v = Vec::with_capacity(d * d);
    for j in 0..d {
        for i in 0..d {
            v.push(rho.get(i, j));
        }
    }
    v
}

pub fn unvectorize(space: &HilbertSpace, v: &[C64]) -> Operator {
    let d = space.total_dim();
    Operator::from_fn(space.clone(), |i, j| v[i + d * j])
}

/// `tr(X)` of a column-stacked matrix.
pub fn vec_trace(v: &[C64], d: usize) -> C64 {
    (0..d).map(|i| v[i * (d + 1)]).sum()
}

pub(crate) fn push_left_right(out: &mut Vec<(usize, usize, C64)>, left: &Operator, right: &Operator, scale: C64) {
    // vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)
    let d = left.dim();
    let l = left.nonzeros();
    let r = right.nonzeros();
    for &(bi, bj, bv) in &r {
        // (Bᵀ)[bj, bi] = B[bi, bj]
        for &(ai, aj, av) in &l {
            out.push((ai + d * bj, aj + d * bi, scale * av * bv));
        }
    }
}

fn push_dissipator(out: &mut Vec<(usize, usize, C64)>, jump: &Operator, rate: f64) {
    let space = jump.space().clone();
    let id = Operator::identity(space);
    let ldl = &jump.dagger() * jump;
    push_left_right(out, jump, &jump.dagger(), C64::new(rate, 0.0));
    push_left_right(out, &ldl, &id, C64::new(-0.5 * rate, 0.0));
    push_left_right(out, &id, &ldl, C64::new(-0.5 * rate, 0.0));
}

/// `D[L]ρ = LρL† − ½{L†L, ρ}` as a superoperator.
pub fn dissipator(jump: &Operator) -> Superoperator {
    let mut triplets = Vec::new();
    push_dissipator(&mut triplets, jump, 1.0);
    Superoperator::from_triplets(jump.space().clone(), triplets, None)
}

/// Liouvillian of a rotating-frame model.
pub fn liouvillian(sys: &OpenSystem) -> Result<Superoperator> {
    let residual = sys.hamiltonian.hermiticity_residual();
    if residual > HERMITIAN_TOL {
        return Err(Error::NotHermitian(residual));
    }
    let id = Operator::identity(sys.space.clone());
    let mut triplets = Vec::new();
    push_left_right(&mut triplets, &sys.hamiltonian, &id, C64::new(0.0, -1.0));
    push_left_right(&mut triplets, &id, &sys.hamiltonian, C64::new(0.0, 1.0));
    for ch in &sys.channels {
        if ch.rate > 0.0 {
            push_dissipator(&mut triplets, &ch.jump, ch.rate);
        }
    }
    Ok(Superoperator::from_triplets(sys.space.clone(), triplets, sys.fock_slot()))
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: Operator,
    /// `‖𝓛ρ‖ / ‖ρ‖` (Frobenius norms).
    pub residual: f64,
    /// Population of the top level of the truncated cavity (0 without a cavity).
    pub edge_population: f64,
}

/// Sparse LU of the bordered Liouvillian.
///
/// Row `pivot` (the `ρ₀₀` equation) is replaced by the trace functional.
/// Because `vec(1)ᵀ𝓛 = 0`, the dropped equation is implied by the others
/// whenever the right-hand side is traceless, so the same factorisation
/// solves both `𝓛ρ = 0, tr ρ = 1` and `𝓛x = y, tr x = 0`.
pub struct SteadyStateSolver {
    space: HilbertSpace,
    lu: Lu<usize, C64>,
    bordered: SparseColMat<usize, C64>,
    pivot: usize,
}

impl SteadyStateSolver {
    pub fn new(l: &Superoperator) -> Result<Self> {
        let d = l.hilbert_dim();
        if l.dim() < DENSE_KERNEL_CHECK_DIM {
            let kernel = kernel_dimension(l)?;
            if kernel != 1 {
                return Err(Error::NonUniqueSteadyState(kernel));
            }
        }
        let pivot = 0;
        let trace_row = (0..d).map(|i| (pivot, i * (d + 1), C64::new(1.0, 0.0)));
        let bordered = l.faer_matrix(trace_row, Some(pivot))?;
        let symbolic = SymbolicLu::try_new(bordered.symbolic()).map_err(|_| Error::SingularLiouvillian)?;
        let lu = Lu::try_new_with_symbolic(symbolic, bordered.as_ref()).map_err(|_| Error::SingularLiouvillian)?;
        Ok(Self { space: l.space().clone(), lu, bordered, pivot })
    }

    fn solve_raw(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let n = rhs.len();
        let mut b = Mat::from_fn(n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        let x: Vec<C64> = (0..n).map(|i| b[(i, 0)]).collect();
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::SingularLiouvillian);
        }
        // a numerically singular border shows up as a large bordered residual
        let mut r: Vec<C64> = rhs.iter().map(|v| -v).collect();
        let m = self.bordered.as_ref();
        for j in 0..n {
            for (i, v) in m.row_idx_of_col(j).zip(m.val_of_col(j)) {
                r[i] += v * x[j];
            }
        }
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let res = r.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        if res > 1e-8 * scale {
            return Err(Error::SingularLiouvillian);
        }
        Ok(x)
    }

    /// Column-stacked solution of `𝓛ρ = 0`, `tr ρ = 1`.
    pub fn steady_vector(&self) -> Result<Vec<C64>> {
        let n = self.space.total_dim().pow(2);
        let mut rhs = vec![C64::new(0.0, 0.0); n];
        rhs[self.pivot] = C64::new(1.0, 0.0);
        self.solve_raw(&rhs)
    }

    /// Solves `𝓛x = y` with `tr x = 0` for traceless `y`, i.e. `x = 𝓛⁺y`.
    pub fn solve_traceless(&self, y: &[C64]) -> Result<Vec<C64>> {
        let mut rhs = y.to_vec();
        rhs[self.pivot] = C64::new(0.0, 0.0);
        self.solve_raw(&rhs)
    }
}

fn kernel_dimension(l: &Superoperator) -> Result<usize> {
    let sv = l.to_dense().singular_values().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(l.dim());
    }
    Ok(sv.iter().filter(|&&s| s <= KERNEL_SV_RTOL * max).count())
}

fn edge_population(rho: &Operator, fock_slot: Option<usize>) -> f64 {
    let Some(slot) = fock_slot else { return 0.0 };
    let space = rho.space();
    let top = space.dims()[slot] - 1;
    (0..rho.dim()).filter(|&i| space.local_index(i, slot) == top).map(|i| rho.get(i, i).re).sum()
}

/// Steady state plus the factorisation that produced it.
pub fn steady_state_with_solver(l: &Superoperator, tol: f64) -> Result<(SteadyState, SteadyStateSolver)> {
    let solver = SteadyStateSolver::new(l)?;
    let v = solver.steady_vector()?;
    let space = l.space().clone();
    let raw = unvectorize(&space, &v);
    let rho = Operator::from_fn(space, |i, j| (raw.get(i, j) + raw.get(j, i).conj()) * 0.5);

    let lv = l.apply(&vectorize(&rho));
    let norm = |x: &[C64]| x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let residual = norm(&lv) / norm(&vectorize(&rho));
    if !(residual <= tol) {
        return Err(Error::Convergence { residual, tol });
    }
    rho.validate_density()?;
    let edge = edge_population(&rho, l.fock_slot());
    Ok((SteadyState { rho, residual, edge_population: edge }, solver))
}

pub fn steady_state(l: &Superoperator, tol: f64) -> Result<SteadyState> {
    steady_state_with_solver(l, tol).map(|(ss, _)| ss)
}

/// Thresholds for [`check_cutoff_convergence`].
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceOptions {
    /// Largest relative change between the last two cutoffs.
    pub rel_threshold: f64,
    /// Largest tolerated top-level population at the last cutoff.
    pub edge_threshold: f64,
    pub solver_tol: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self { rel_threshold: 1e-4, edge_threshold: 1e-6, solver_tol: STEADY_STATE_TOL }
    }
}

#[derive(Debug, Clone)]
pub struct CutoffSample {
    pub cutoff: usize,
    pub value: f64,
    pub edge_population: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub samples: Vec<CutoffSample>,
    /// `|vₖ − vₖ₋₁| / |vₖ|` for consecutive cutoffs.
    pub rel_diffs: Vec<f64>,
    pub converged: bool,
}

pub fn check_cutoff_convergence<B, O>(builder: B, observable: O, cutoffs: &[usize], opts: &ConvergenceOptions) -> Result<ConvergenceReport>
where
    B: Fn(usize) -> Result<OpenSystem>,
    O: Fn(&OpenSystem, &SteadyState) -> Result<f64>,
{
    if cutoffs.len() < 2 {
        return Err(Error::InvalidParameter("cutoff convergence needs at least two cutoffs".into()));
    }
    let mut samples = Vec::with_capacity(cutoffs.len());
    for &cutoff in cutoffs {
        let sys = builder(cutoff)?;
        let ss = steady_state(&liouvillian(&sys)?, opts.solver_tol)?;
        let value = observable(&sys, &ss)?;
        samples.push(CutoffSample { cutoff, value, edge_population: ss.edge_population, residual: ss.residual });
    }
    let rel_diffs: Vec<f64> =
        samples.windows(2).map(|w| (w[1].value - w[0].value).abs() / w[1].value.abs().max(f64::MIN_POSITIVE)).collect();
    let last = samples.last().expect("at least two samples");
    let converged =
        *rel_diffs.last().expect("at least one difference") <= opts.rel_threshold && last.edge_population <= opts.edge_threshold;
    Ok(ConvergenceReport { samples, rel_diffs, converged })
}
