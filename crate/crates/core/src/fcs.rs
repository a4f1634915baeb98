//! Full counting statistics of weighted jump currents.
//!
//! A counted current assigns a weight `ν_k` to every jump of channel `k`. The
//! mean is `Σ ν_k γ_k tr(L_k ρ L_k†)` and the zero-frequency noise is
//!
//! ```text
//! ⟨⟨I²⟩⟩ = tr(𝒥₂ρ) − 2 tr(𝒥₁ 𝓛⁺ 𝒥₁ ρ),    𝒥_m = Σ_k ν_k^m γ_k L_k ∘ L_k†
//! ```
//!
//! with `𝓛⁺` the Drazin inverse, applied through the bordered LU. The tilted
//! generator oracle differentiates the eigenvalue of
//! `𝓛(χ) = 𝓛 + Σ_k γ_k (e^{iχν_k} − 1) L_k ∘ L_k†` that vanishes at `χ = 0`.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::Mat;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::Operator;
use crate::lindblad::{
    liouvillian, push_left_right, steady_state_with_solver, vectorize, OpenSystem, SteadyState, SteadyStateSolver, Superoperator,
    STEADY_STATE_TOL,
};

/// Default counting-field step of the finite-difference oracle, in units of `1/max|ν|`.
pub const DEFAULT_FD_STEP: f64 = 5e-3;

/// Superoperator dimension up to which the tilted eigenvalue is found densely.
const DENSE_TILTED_DIM: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct CountedCurrent {
    /// `(channel index, ν)`; unlisted channels carry weight 0.
    pub channel_weights: Vec<(usize, f64)>,
}

impl CountedCurrent {
    pub fn new(channel_weights: Vec<(usize, f64)>) -> Self {
        Self { channel_weights }
    }

    /// Every channel of `bath_id`, weighted by its energy quantum.
    pub fn for_bath(sys: &OpenSystem, bath_id: &str) -> Result<Self> {
        let idx = sys.bath_channels(bath_id);
        if idx.is_empty() {
            return Err(Error::UnknownBath(bath_id.to_string()));
        }
        Ok(Self::new(idx.into_iter().map(|i| (i, sys.channels[i].quantum)).collect()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.channel_weights.iter().map(|&(i, w)| (i, c * w)).collect())
    }

    pub fn validate(&self, sys: &OpenSystem) -> Result<()> {
        for &(index, _) in &self.channel_weights {
            if index >= sys.channels.len() {
                return Err(Error::InvalidChannel { index, channels: sys.channels.len() });
            }
        }
        Ok(())
    }

    fn max_weight(&self) -> f64 {
        self.channel_weights.iter().fold(0.0, |m, &(_, w)| m.max(w.abs()))
    }

    /// `Σ ν^power γ L†L`, so that `tr(𝒥_m X) = tr(M_m X)`.
    fn moment_operator(&self, sys: &OpenSystem, power: i32) -> Operator {
        let mut acc = Operator::zeros(sys.space.clone());
        for &(i, w) in &self.channel_weights {
            let ch = &sys.channels[i];
            let ldl = &ch.jump.dagger() * &ch.jump;
            acc = &acc + &ldl.scale_real(w.powi(power) * ch.rate);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMethod {
    Drazin,
    TiltedFd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseResult {
    pub mean: f64,
    pub variance: f64,
    pub method: NoiseMethod,
    /// Tilted oracle only: change of the variance when the step is halved.
    pub stencil_discrepancy: Option<f64>,
}

fn trace_real(op: &Operator, rho: &Operator) -> Result<f64> {
    Ok(crate::hilbert::expect(op, rho)?.re)
}

/// First cumulant `Σ ν_k γ_k tr(L_k ρ L_k†)`.
pub fn current_mean(sys: &OpenSystem, rho: &Operator, counted: &CountedCurrent) -> Result<f64> {
    counted.validate(sys)?;
    trace_real(&counted.moment_operator(sys, 1), rho)
}

/// Drazin noise reusing an existing steady state and its factorisation.
pub fn current_noise_drazin_with(
    sys: &OpenSystem,
    solver: &SteadyStateSolver,
    ss: &SteadyState,
    counted: &CountedCurrent,
) -> Result<NoiseResult> {
    counted.validate(sys)?;
    let rho = &ss.rho;
    let m1 = counted.moment_operator(sys, 1);
    let m2 = counted.moment_operator(sys, 2);
    let mean = trace_real(&m1, rho)?;

    let mut j1rho = Operator::zeros(sys.space.clone());
    for &(i, w) in &counted.channel_weights {
        let ch = &sys.channels[i];
        j1rho = &j1rho + &(&(&ch.jump * rho) * &ch.jump.dagger()).scale_real(w * ch.rate);
    }
    let rho_vec = vectorize(rho);
    let y: Vec<C64> = vectorize(&j1rho).iter().zip(&rho_vec).map(|(j, r)| j - r * mean).collect();
    let x = solver.solve_traceless(&y)?;
    let x = crate::lindblad::unvectorize(&sys.space, &x);
    let variance = trace_real(&m2, rho)? - 2.0 * crate::hilbert::expect(&m1, &x)?.re;
    Ok(NoiseResult { mean, variance, method: NoiseMethod::Drazin, stencil_discrepancy: None })
}

pub fn current_noise_drazin(sys: &OpenSystem, counted: &CountedCurrent) -> Result<NoiseResult> {
    counted.validate(sys)?;
    let l = liouvillian(sys)?;
    let (ss, solver) = steady_state_with_solver(&l, STEADY_STATE_TOL)?;
    current_noise_drazin_with(sys, &solver, &ss, counted)
}

fn tilted(sys: &OpenSystem, l: &Superoperator, counted: &CountedCurrent, theta: f64) -> Superoperator {
    let mut triplets = l.entries().to_vec();
    for &(i, w) in &counted.channel_weights {
        let ch = &sys.channels[i];
        let factor = (C64::new(0.0, theta * w).exp() - 1.0) * ch.rate;
        push_left_right(&mut triplets, &ch.jump, &ch.jump.dagger(), factor);
    }
    Superoperator::from_triplets(l.space().clone(), triplets, l.fock_slot())
}

fn dense_branch(lt: &Superoperator, chi: f64) -> Result<C64> {
    let mut ev = lt.eigenvalues()?;
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let scale = lt.max_abs().max(1.0);
    if ev.len() > 1 && (ev[1] - ev[0]).norm() <= 1e-8 * scale {
        return Err(Error::BranchAmbiguity { chi });
    }
    Ok(ev[0])
}

/// Shift-and-invert power iteration towards the eigenvalue nearest zero.
fn sparse_branch(lt: &Superoperator, chi: f64, start: &[C64]) -> Result<C64> {
    let n = lt.dim();
    let scale = lt.max_abs().max(1.0);
    let shift = 1e-6 * scale;
    let diag = (0..n).map(|i| (i, i, C64::new(-shift, 0.0)));
    let m = lt.faer_matrix(diag, None)?;
    let lu = Lu::try_new_with_symbolic(
        faer::sparse::linalg::solvers::SymbolicLu::try_new(m.symbolic()).map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?,
        m.as_ref(),
    )
    .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;

    let mut v = Mat::from_fn(n, 1, |i, _| start[i]);
    let norm = |v: &Mat<C64>| (0..v.nrows()).map(|i| v[(i, 0)].norm_sqr()).sum::<f64>().sqrt();
    let nv = norm(&v);
    v = Mat::from_fn(n, 1, |i, _| v[(i, 0)] / nv);
    let mut lambda = C64::new(f64::NAN, 0.0);
    for _ in 0..500 {
        let mut w = v.clone();
        lu.solve_in_place(w.as_mut());
        let theta: C64 = (0..n).map(|i| v[(i, 0)].conj() * w[(i, 0)]).sum();
        let next = C64::new(shift, 0.0) + 1.0 / theta;
        let nw = norm(&w);
        if !nw.is_finite() || nw == 0.0 {
            break;
        }
        v = Mat::from_fn(n, 1, |i, _| w[(i, 0)] / nw);
        let converged = (next - lambda).norm() <= 1e-15 * scale;
        lambda = next;
        if converged {
            // the Rayleigh estimate must also be an eigenpair, otherwise two
            // branches are competing
            let vv: Vec<C64> = (0..n).map(|i| v[(i, 0)]).collect();
            let r = lt.apply(&vv);
            let res = r.iter().zip(&vv).map(|(a, b)| (a - lambda * b).norm_sqr()).sum::<f64>().sqrt();
            if res <= 1e-9 * scale {
                return Ok(lambda);
            }
            break;
        }
    }
    Err(Error::BranchAmbiguity { chi })
}

/// Finite-difference oracle for the first two cumulants.
///
/// The counting field is measured in units of `1/max|ν|` and `step` refers to
/// that normalised field. Five-point stencils at `step` and `step/2` are
/// combined by Richardson extrapolation; their raw difference is reported as
/// `stencil_discrepancy`.
pub fn current_noise_tilted_fd(sys: &OpenSystem, counted: &CountedCurrent, step: f64) -> Result<NoiseResult> {
    counted.validate(sys)?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {step}")));
    }
    let scale = counted.max_weight();
    if scale == 0.0 {
        return Ok(NoiseResult { mean: 0.0, variance: 0.0, method: NoiseMethod::TiltedFd, stencil_discrepancy: Some(0.0) });
    }
    let normalised = counted.scaled(1.0 / scale);
    let l = liouvillian(sys)?;
    let dense = l.dim() <= DENSE_TILTED_DIM;
    let start = if dense { Vec::new() } else { vectorize(&crate::lindblad::steady_state(&l, STEADY_STATE_TOL)?.rho) };
    let lambda = |chi: f64| -> Result<C64> {
        let lt = tilted(sys, &l, &normalised, chi);
        if dense {
            dense_branch(&lt, chi)
        } else {
            sparse_branch(&lt, chi, &start)
        }
    };

    let h = step;
    let l0 = lambda(0.0)?;
    let (lp1, lm1, lp2, lm2) = (lambda(h)?, lambda(-h)?, lambda(2.0 * h)?, lambda(-2.0 * h)?);
    let (hp, hm) = (lambda(0.5 * h)?, lambda(-0.5 * h)?);

    let first = |f2: C64, f1: C64, b1: C64, b2: C64, h: f64| (b2 - 8.0 * b1 + 8.0 * f1 - f2) / (12.0 * h);
    let second = |f2: C64, f1: C64, z: C64, b1: C64, b2: C64, h: f64| (-f2 + 16.0 * f1 - 30.0 * z + 16.0 * b1 - b2) / (12.0 * h * h);

    let d1 = first(lp2, lp1, lm1, lm2, h);
    let d2 = second(lp2, lp1, l0, lm1, lm2, h);
    let d1_half = first(lp1, hp, hm, lm1, 0.5 * h);
    let d2_half = second(lp1, hp, l0, hm, lm1, 0.5 * h);

    // both stencils err at O(h⁴); Richardson removes the leading term
    let mean = (16.0 * d1_half.im - d1.im) / 15.0 * scale;
    let variance = -(16.0 * d2_half.re - d2.re) / 15.0 * scale * scale;
    Ok(NoiseResult { mean, variance, method: NoiseMethod::TiltedFd, stencil_discrepancy: Some((d2.re - d2_half.re).abs() * scale * scale) })
}

/// Steady-state eigenvalue of the untilted generator; zero up to rounding.
pub fn tilted_eigenvalue_at_zero(sys: &OpenSystem) -> Result<C64> {
    let l = liouvillian(sys)?;
    let d = l.hilbert_dim();
    if l.dim() <= DENSE_TILTED_DIM {
        return dense_branch(&l, 0.0);
    }
    let mut start = vec![C64::new(0.0, 0.0); l.dim()];
    for i in 0..d {
        start[i * (d + 1)] = C64::new(1.0 / d as f64, 0.0);
    }
    sparse_branch(&l, 0.0, &start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{transition, HilbertSpace};
    use crate::lindblad::{steady_state, DissipationChannel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Incoherent two-state cycle: pump 0 → 1 at `up`, decay 1 → 0 at `down`.
    fn two_state(up: f64, down: f64) -> OpenSystem {
        let chans = vec![
            DissipationChannel::new(transition(2, 1, 0).unwrap(), up, "pump", 1.0, 0.0).unwrap(),
            DissipationChannel::new(transition(2, 0, 1).unwrap(), down, "decay", 1.0, 1.0).unwrap(),
        ];
        OpenSystem::new(Operator::zeros(HilbertSpace::single(2).unwrap()), chans).unwrap()
    }

    fn thermal_qubit(gamma: f64, n: f64, omega: f64) -> OpenSystem {
        let h = Operator::diagonal(&[0.0, omega]).unwrap();
        let chans = vec![
            DissipationChannel::new(transition(2, 1, 0).unwrap(), gamma * n, "bath", 1.0, omega).unwrap(),
            DissipationChannel::new(transition(2, 0, 1).unwrap(), gamma * (n + 1.0), "bath", 1.0, -omega).unwrap(),
        ];
        OpenSystem::new(h, chans).unwrap()
    }

    fn fano_two_state(up: f64, down: f64) -> f64 {
        1.0 - 2.0 * up * down / (up + down).powi(2)
    }

    #[test]
    fn two_state_cycle_fano_factor() {
        for (up, down) in [(1.0, 1.0), (0.3, 2.0), (5.0, 0.7)] {
            let sys = two_state(up, down);
            let counted = CountedCurrent::new(vec![(1, 1.0)]);
            let r = current_noise_drazin(&sys, &counted).unwrap();
            assert_abs_diff_eq!(r.mean, up * down / (up + down), epsilon = 1e-13);
            assert_abs_diff_eq!(r.variance / r.mean, fano_two_state(up, down), epsilon = 1e-10);
            let fd = current_noise_tilted_fd(&sys, &counted, DEFAULT_FD_STEP).unwrap();
            assert_abs_diff_eq!(fd.variance / fd.mean, fano_two_state(up, down), epsilon = 1e-8);
        }
    }

    #[test]
    fn doubling_the_decay_rate() {
        let counted = CountedCurrent::new(vec![(1, 1.0)]);
        let a = current_noise_drazin(&two_state(1.0, 1.0), &counted).unwrap();
        let b = current_noise_drazin(&two_state(1.0, 2.0), &counted).unwrap();
        assert_abs_diff_eq!(a.mean, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(b.mean, 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.variance, b.mean * fano_two_state(1.0, 2.0), epsilon = 1e-12);
        // doubling both rates doubles the mean
        let c = current_noise_drazin(&two_state(2.0, 2.0), &counted).unwrap();
        assert_abs_diff_eq!(c.mean, 2.0 * a.mean, epsilon = 1e-13);
        assert_abs_diff_eq!(c.variance, 2.0 * a.variance, epsilon = 1e-12);
    }

    #[test]
    fn thermal_qubit_heat_current() {
        // one bath: absorptions and emissions alternate, so the counted energy
        // stays bounded and the zero-frequency noise vanishes
        let (gamma, n, omega) = (0.4, 0.6, 2.0);
        let sys = thermal_qubit(gamma, n, omega);
        let counted = CountedCurrent::for_bath(&sys, "bath").unwrap();
        let ss = steady_state(&liouvillian(&sys).unwrap(), STEADY_STATE_TOL).unwrap();
        assert_abs_diff_eq!(current_mean(&sys, &ss.rho, &counted).unwrap(), 0.0, epsilon = 1e-14);
        let r = current_noise_drazin(&sys, &counted).unwrap();
        assert_abs_diff_eq!(r.variance, 0.0, epsilon = 1e-12);

        // two baths at the same temperature: equilibrium, but the heat
        // exchanged with either bath fluctuates
        let mut chans = sys.channels.clone();
        for ch in sys.channels.iter() {
            let mut other = ch.clone();
            other.rate *= 2.5;
            other.bath_id = "other".into();
            chans.push(other);
        }
        let two = OpenSystem::new(sys.hamiltonian.clone(), chans).unwrap();
        let counted = CountedCurrent::for_bath(&two, "bath").unwrap();
        let r = current_noise_drazin(&two, &counted).unwrap();
        let fd = current_noise_tilted_fd(&two, &counted, DEFAULT_FD_STEP).unwrap();
        assert_abs_diff_eq!(r.mean, 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(fd.mean, 0.0, epsilon = 1e-10);
        assert!(r.variance > 0.0 && fd.variance > 0.0);
        assert_abs_diff_eq!(fd.variance, r.variance, epsilon = 1e-7 * r.variance);
    }

    #[test]
    fn resonantly_driven_qubit_emission_rate() {
        let (omega_r, gamma) = (0.8, 0.5);
        let sx = Operator::from_fn(HilbertSpace::single(2).unwrap(), |i, j| C64::new(if i != j { 1.0 } else { 0.0 }, 0.0));
        let chans = vec![DissipationChannel::new(transition(2, 0, 1).unwrap(), gamma, "vac", 1.0, 1.0).unwrap()];
        let sys = OpenSystem::new(sx.scale_real(0.5 * omega_r), chans).unwrap();
        let ss = steady_state(&liouvillian(&sys).unwrap(), STEADY_STATE_TOL).unwrap();
        let p_ee = omega_r * omega_r / (2.0 * omega_r * omega_r + gamma * gamma);
        assert_abs_diff_eq!(ss.rho.get(1, 1).re, p_ee, epsilon = 1e-12);
        let counted = CountedCurrent::new(vec![(0, 1.0)]);
        assert_abs_diff_eq!(current_mean(&sys, &ss.rho, &counted).unwrap(), gamma * p_ee, epsilon = 1e-12);
        assert_eq!(current_mean(&sys, &ss.rho, &CountedCurrent::new(vec![(0, 0.0)])).unwrap(), 0.0);
        assert!(current_mean(&sys, &ss.rho, &CountedCurrent::new(vec![(3, 1.0)])).is_err());
    }

    #[test]
    fn eigenvalue_at_zero_field_vanishes() {
        let sys = thermal_qubit(0.4, 0.6, 2.0);
        assert!(tilted_eigenvalue_at_zero(&sys).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn sparse_branch_matches_dense_branch() {
        // an 11 x 11 system has a 121-dim generator; force the sparse path on it
        let d = 11;
        let space = HilbertSpace::single(d).unwrap();
        let h = Operator::from_fn(space.clone(), |i, j| {
            if i == j {
                C64::new(0.3 * i as f64, 0.0)
            } else if i + 1 == j || j + 1 == i {
                C64::new(0.2, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let chans = vec![
            DissipationChannel::new(transition(d, 0, d - 1).unwrap(), 0.7, "a", 1.0, 1.0).unwrap(),
            DissipationChannel::new(transition(d, d - 1, 0).unwrap(), 0.4, "a", 1.0, -1.0).unwrap(),
            DissipationChannel::new(transition(d, 3, 2).unwrap(), 0.9, "b", 1.0, 0.5).unwrap(),
        ];
        let sys = OpenSystem::new(h, chans).unwrap();
        let counted = CountedCurrent::new(vec![(0, 1.0), (1, -1.0)]);
        let l = liouvillian(&sys).unwrap();
        let start = vectorize(&steady_state(&l, STEADY_STATE_TOL).unwrap().rho);
        for chi in [0.0, 0.02, -0.01] {
            let lt = tilted(&sys, &l, &counted, chi);
            let a = dense_branch(&lt, chi).unwrap();
            let b = sparse_branch(&lt, chi, &start).unwrap();
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
    }

    /// Random model with dimension 2..=4 and 1..=3 channels.
    fn random_model(seed: &[f64], dim: usize, nch: usize) -> (OpenSystem, CountedCurrent) {
        let space = HilbertSpace::single(dim).unwrap();
        let mut k = 0;
        let mut next = || {
            k += 1;
            seed[k % seed.len()] * (1.0 + 0.37 * k as f64).sin()
        };
        let raw = Operator::from_fn(space.clone(), |_, _| C64::new(next(), next()));
        let h = (&raw + &raw.dagger()).scale_real(0.5);
        let mut chans = Vec::new();
        let mut weights = Vec::new();
        for c in 0..nch {
            let jump = Operator::from_fn(space.clone(), |_, _| C64::new(next(), next()));
            let rate = 0.2 + next().abs();
            chans.push(DissipationChannel::new(jump, rate, "bath", 1.0, 0.0).unwrap());
            weights.push((c, [1.0, -2.0, 0.5][c]));
        }
        (OpenSystem::new(h, chans).unwrap(), CountedCurrent::new(weights))
    }

    #[test]
    fn methods_agree_on_random_small_models() {
        let seeds: [&[f64]; 10] = [
            &[0.3, -1.2, 0.8],
            &[1.1, 0.4, -0.5, 0.9],
            &[-0.7, 0.2],
            &[0.95, -0.33, 0.61, 0.12, -0.48],
            &[0.5, 0.5, -1.0],
            &[1.7, -0.2, 0.3],
            &[-0.15, 0.85, 0.42, -0.66],
            &[0.25, -0.9, 1.3],
            &[0.6, 0.1, -0.35, 0.75],
            &[-1.4, 0.55, 0.05],
        ];
        for (i, seed) in seeds.iter().enumerate() {
            let dim = 2 + i % 3;
            let nch = 1 + i % 3;
            let (sys, counted) = random_model(seed, dim, nch);
            let a = current_noise_drazin(&sys, &counted).unwrap();
            let b = current_noise_tilted_fd(&sys, &counted, DEFAULT_FD_STEP).unwrap();
            assert!(a.variance >= -1e-10, "model {i}: {a:?}");
            assert_abs_diff_eq!(a.mean, b.mean, epsilon = 1e-6 * a.mean.abs().max(1e-3));
            assert!((a.variance - b.variance).abs() <= 1e-7 * a.variance.abs(), "model {i}: {a:?} vs {b:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mean_is_linear_and_variance_quadratic_in_weights(
            up in 0.1f64..3.0, down in 0.1f64..3.0, w1 in -2.0f64..2.0, w2 in -2.0f64..2.0, c in -3.0f64..3.0,
        ) {
            let sys = two_state(up, down);
            let base = CountedCurrent::new(vec![(0, w1), (1, w2)]);
            let a = current_noise_drazin(&sys, &base).unwrap();
            let b = current_noise_drazin(&sys, &base.scaled(c)).unwrap();
            prop_assert!((b.mean - c * a.mean).abs() <= 1e-12 * (1.0 + a.mean.abs() * c.abs()));
            prop_assert!((b.variance - c * c * a.variance).abs() <= 1e-11 * (1.0 + a.variance.abs() * c * c));
            prop_assert!(a.variance >= -1e-12);
            let m1 = current_noise_drazin(&sys, &CountedCurrent::new(vec![(0, w1)])).unwrap().mean;
            let m2 = current_noise_drazin(&sys, &CountedCurrent::new(vec![(1, w2)])).unwrap().mean;
            prop_assert!((a.mean - m1 - m2).abs() <= 1e-12);
        }
    }
}
