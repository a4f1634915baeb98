//! The cavity-embedded three-level maser and its semi-classical reduction.
//!
//! Levels `|1⟩, |2⟩, |3⟩` are stored at indices 0, 1, 2. The composite space
//! is `[cutoff, 3]` with the cavity in slot 0. All frequencies and rates are in
//! units of the cavity linewidth `κ` unless `kappa` is changed explicitly.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcs::CountedCurrent;
use crate::hilbert::{displaced_annihilation, embed, fock_annihilation, transition, HilbertSpace, Operator};
use crate::lindblad::{DissipationChannel, Drive, FlipFlop, OpenSystem};
use crate::thermo::{ThermoHamiltonian, CAVITY_BATH};

pub const HOT_BATH: &str = "hot";
pub const COLD_BATH: &str = "cold";

/// How the truncated cavity mode is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CavityBasis {
    /// Number states `|n⟩`, `n < cutoff`.
    Fock,
    /// Displaced number states `D(α)|n⟩` around the empty-cavity amplitude.
    /// Same model, but the truncation is centred on the coherent field.
    #[default]
    Displaced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaserParams {
    pub kappa: f64,
    #[serde(rename = "E")]
    pub drive: f64,
    pub g: f64,
    #[serde(rename = "Delta")]
    pub detuning: f64,
    pub omega_d: f64,
    pub omega_2: f64,
    pub omega_3: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
    #[serde(rename = "gamma_H")]
    pub gamma_h: f64,
    #[serde(rename = "gamma_C")]
    pub gamma_c: f64,
    /// Cavity bath temperature.
    #[serde(rename = "T")]
    pub temperature: f64,
    #[serde(rename = "T_C")]
    pub t_cold: f64,
    #[serde(rename = "T_H")]
    pub t_hot: f64,
    #[serde(rename = "n_cutoff")]
    pub cutoff: usize,
    /// Hot-bath occupation; when set, `T_H` is back-solved from it.
    #[serde(rename = "n_H_override", skip_serializing_if = "Option::is_none")]
    pub n_h_override: Option<f64>,
    pub basis: CavityBasis,
}

impl Default for MaserParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            drive: 1.5,
            g: 0.025,
            detuning: 0.0,
            omega_d: 3500.0,
            omega_2: 3500.0,
            omega_3: 10500.0,
            omega: 3500.0,
            gamma_h: 0.1,
            gamma_c: 2.0,
            temperature: 2000.0,
            t_cold: 2000.0,
            t_hot: 7.4e4,
            cutoff: 30,
            n_h_override: None,
            basis: CavityBasis::Displaced,
        }
    }
}

impl MaserParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa", self.kappa),
            ("gamma_H", self.gamma_h),
            ("gamma_C", self.gamma_c),
            ("T", self.temperature),
            ("T_C", self.t_cold),
            ("T_H", self.t_hot),
            ("omega_d", self.omega_d),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("E", self.drive), ("g", self.g)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        let tol = 1e-12 * self.omega.abs().max(self.omega_d.abs());
        if (self.omega_2 - self.omega).abs() > tol {
            return Err(Error::InvalidParameter(format!("omega_2 = {} must equal Omega = {}", self.omega_2, self.omega)));
        }
        if (self.detuning - (self.omega - self.omega_d)).abs() > tol.max(1e-12) {
            return Err(Error::InvalidParameter(format!(
                "Delta = {} is inconsistent with Omega - omega_d = {}",
                self.detuning,
                self.omega - self.omega_d
            )));
        }
        if !(self.omega_3 > self.omega_d) {
            return Err(Error::InvalidParameter("omega_3 must exceed omega_d".into()));
        }
        if self.cutoff < 2 {
            return Err(Error::InvalidDimension(self.cutoff));
        }
        if let Some(n) = self.n_h_override {
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidParameter(format!("n_H override must be positive, got {n}")));
            }
        }
        Ok(())
    }

    pub fn chi(&self) -> C64 {
        susceptibility(self.detuning, self.kappa)
    }

    /// Empty-cavity steady amplitude `α = −2(E/κ)χ` (rotating frame).
    pub fn alpha(&self) -> C64 {
        self.chi() * (-2.0 * self.drive / self.kappa)
    }

    pub fn n_bar_cavity(&self) -> Result<f64> {
        bose_einstein(self.omega_d, self.temperature)
    }

    pub fn n_bar_cold(&self) -> Result<f64> {
        bose_einstein(self.omega_3 - self.omega_d, self.t_cold)
    }

    pub fn n_bar_hot(&self) -> Result<f64> {
        match self.n_h_override {
            Some(n) => Ok(n),
            None => bose_einstein(self.omega_3, self.t_hot),
        }
    }

    /// Hot-bath temperature consistent with the hot occupation in use.
    pub fn hot_temperature(&self) -> f64 {
        match self.n_h_override {
            Some(n) => self.omega_3 / (1.0 + 1.0 / n).ln(),
            None => self.t_hot,
        }
    }

    /// `n̄(ω_d)/n̄(Ω)`: how far the cavity-bath occupation at the drive
    /// frequency departs from the one at the cavity frequency.
    pub fn occupation_ratio(&self) -> Result<f64> {
        Ok(bose_einstein(self.omega_d, self.temperature)? / bose_einstein(self.omega, self.temperature)?)
    }

    /// Smallest Fock cutoff whose Poisson tail beyond the top level, at mean
    /// `|α|² + n̄`, drops below `1e-8`. Only meaningful for the Fock basis.
    pub fn fock_cutoff_hint(&self) -> Result<usize> {
        let mean = self.alpha().norm_sqr() + self.n_bar_cavity()?;
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut n = 0usize;
        while 1.0 - cdf > 1e-8 && n < 100_000 {
            n += 1;
            p *= mean / n as f64;
            cdf += p;
        }
        Ok((n + 1).max(2))
    }

    pub fn with_n_h(&self, n_h: f64) -> Self {
        Self { n_h_override: Some(n_h), ..self.clone() }
    }
}

/// `1/(e^{ω/T} − 1)`.
pub fn bose_einstein(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!("Bose-Einstein occupation needs omega > 0, got {omega}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
    }
    Ok(1.0 / (omega / temperature).exp_m1())
}

/// `χ = 1/(1 + 2iΔ/κ)`.
pub fn susceptibility(detuning: f64, kappa: f64) -> C64 {
    C64::new(1.0, 0.0) / C64::new(1.0, 2.0 * detuning / kappa)
}

/// Classical field seen by the system once the cavity is replaced by its
/// coherent amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiClassicalDrive {
    pub chi: C64,
    pub alpha: C64,
    /// `g·α`.
    pub e_sc: C64,
}

impl SemiClassicalDrive {
    pub fn from_params(p: &MaserParams) -> Self {
        let chi = p.chi();
        let alpha = p.alpha();
        Self { chi, alpha, e_sc: alpha * p.g }
    }
}

fn level(space: &HilbertSpace, slot: usize, i: usize, j: usize) -> Result<Operator> {
    embed(&transition(3, i, j)?, space, slot)
}

fn atom_channels(p: &MaserParams, space: &HilbertSpace, slot: usize) -> Result<Vec<DissipationChannel>> {
    let n_h = p.n_bar_hot()?;
    let n_c = p.n_bar_cold()?;
    let t_h = p.hot_temperature();
    let w3 = p.omega_3;
    let wc = p.omega_3 - p.omega_d;
    Ok(vec![
        DissipationChannel::new(level(space, slot, 2, 0)?, p.gamma_h * n_h, HOT_BATH, t_h, w3)?,
        DissipationChannel::new(level(space, slot, 0, 2)?, p.gamma_h * (n_h + 1.0), HOT_BATH, t_h, -w3)?,
        DissipationChannel::new(level(space, slot, 2, 1)?, p.gamma_c * n_c, COLD_BATH, p.t_cold, wc)?,
        DissipationChannel::new(level(space, slot, 1, 2)?, p.gamma_c * (n_c + 1.0), COLD_BATH, p.t_cold, -wc)?,
    ])
}

/// Composite cavity + three-level model in the frame rotating at `ω_d`:
/// `H = Δa†a + iE(a − a†) + g(a|2⟩⟨1| + a†|1⟩⟨2|) + Δ|2⟩⟨2|`.
pub fn build_maser(p: &MaserParams) -> Result<OpenSystem> {
    p.validate()?;
    let space = HilbertSpace::new(vec![p.cutoff, 3])?;
    let a_local = match p.basis {
        CavityBasis::Fock => fock_annihilation(p.cutoff)?,
        CavityBasis::Displaced => displaced_annihilation(p.cutoff, p.alpha())?,
    };
    let a = embed(&a_local, &space, 0)?;
    let ad = a.dagger();
    let o = level(&space, 1, 0, 1)?;
    let od = o.dagger();

    let h0 = &(&ad * &a).scale_real(p.detuning) + &(&a - &ad).scale(C64::new(0.0, p.drive));
    let v = (&(&a * &od) + &(&ad * &o)).scale_real(p.g);
    let h = &(&h0 + &v) + &(&od * &o).scale_real(p.detuning);
    // exact Hermitian part; the sum above is Hermitian up to rounding
    let h = (&h + &h.dagger()).scale_real(0.5);

    let n_bar = p.n_bar_cavity()?;
    let mut channels = vec![
        DissipationChannel::new(a.clone(), p.kappa * (n_bar + 1.0), CAVITY_BATH, p.temperature, -p.omega_d)?,
        DissipationChannel::new(ad, p.kappa * n_bar, CAVITY_BATH, p.temperature, p.omega_d)?,
    ];
    channels.extend(atom_channels(p, &space, 1)?);

    OpenSystem::new(h, channels)?
        .with_drive(Drive::Cavity { amplitude: p.drive, frequency: p.omega_d, kappa: p.kappa, detuning: p.detuning })
        .with_cavity(a)?
        .with_interaction(FlipFlop { coupling: p.g, system_op: o })?
        .with_system_slot(1)
}

/// Three-level model driven by the classical field `α`:
/// `H_sc = Δ|2⟩⟨2| + g(α|2⟩⟨1| + α*|1⟩⟨2|)`.
pub fn build_sc_maser(p: &MaserParams) -> Result<OpenSystem> {
    p.validate()?;
    let space = HilbertSpace::single(3)?;
    let drive = SemiClassicalDrive::from_params(p);
    let o = level(&space, 0, 0, 1)?;
    let od = o.dagger();
    let h = &(&od * &o).scale_real(p.detuning) + &(&od.scale(drive.e_sc) + &o.scale(drive.e_sc.conj()));
    OpenSystem::new(h, atom_channels(p, &space, 0)?)?
        .with_drive(Drive::SemiClassical { alpha: drive.alpha, coupling: p.g, frequency: p.omega_d })
        .with_interaction(FlipFlop { coupling: p.g, system_op: o })?
        .with_system_slot(0)
}

/// `ω_d a†a + ω_d|2⟩⟨2| + ω₃|3⟩⟨3|`: level energies `0, ω_d, ω₃`, so that the
/// flip-flop coupling conserves thermodynamic energy.
pub fn maser_thermo_hamiltonian(p: &MaserParams) -> Result<ThermoHamiltonian> {
    ThermoHamiltonian::new(p.omega_d, Operator::diagonal(&[0.0, p.omega_d, p.omega_3])?)
}

/// Cold-bath heat current counted with quanta `±(ω₃ − ω_d)`.
pub fn cold_current(sys: &OpenSystem) -> Result<CountedCurrent> {
    CountedCurrent::for_bath(sys, COLD_BATH)
}

pub fn hot_current(sys: &OpenSystem) -> Result<CountedCurrent> {
    CountedCurrent::for_bath(sys, HOT_BATH)
}

/// Leading semi-classical term of a generic interaction `g c_NM a^N (a†)^M O_NM`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiPhotonTerm {
    pub n: u32,
    pub m: u32,
    pub c_nm: f64,
    pub g: f64,
    /// `g c_NM α^N (α*)^M`.
    pub leading_coefficient: C64,
}

impl MultiPhotonTerm {
    /// `N + M`: `g|α|^{N+M}` is held fixed along the semi-classical limit.
    pub fn scaling_exponent(&self) -> u32 {
        self.n + self.m
    }
}

pub fn semiclassical_drive_term(c_nm: f64, n: u32, m: u32, g: f64, alpha: C64) -> Result<MultiPhotonTerm> {
    if n + m == 0 {
        return Err(Error::InvalidParameter("interaction term has no field dependence (N = M = 0)".into()));
    }
    let leading_coefficient = alpha.powu(n) * alpha.conj().powu(m) * (g * c_nm);
    Ok(MultiPhotonTerm { n, m, c_nm, g, leading_coefficient })
}

/// `g → g/s`, `E → E·s`: moves towards the semi-classical limit at fixed `g·α`.
pub fn semiclassical_limit_family(p: &MaserParams, s: f64) -> Result<MaserParams> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("limit-family scale must be positive, got {s}")));
    }
    Ok(MaserParams { g: p.g / s, drive: p.drive * s, ..p.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::expect;
    use crate::lindblad::{liouvillian, steady_state, STEADY_STATE_TOL};
    use approx::assert_abs_diff_eq;

    #[test]
    fn bose_einstein_values() {
        assert_eq!(bose_einstein(1e4, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(bose_einstein(2f64.ln(), 1.0).unwrap(), 1.0, epsilon = 1e-14);
        let direct = 1.0 / (1.75f64.exp() - 1.0);
        assert_abs_diff_eq!(bose_einstein(3500.0, 2000.0).unwrap(), direct, epsilon = 1e-15);
        assert_abs_diff_eq!(direct, 0.2100, epsilon = 5e-4);
        assert!(bose_einstein(0.0, 1.0).is_err());
        assert!(bose_einstein(-1.0, 1.0).is_err());
    }

    #[test]
    fn susceptibility_values() {
        assert_eq!(susceptibility(0.0, 1.0), C64::new(1.0, 0.0));
        let chi = susceptibility(0.5, 1.0);
        assert_abs_diff_eq!((chi - C64::new(0.5, -0.5)).norm(), 0.0, epsilon = 1e-15);
        for delta in [-3.0, -0.2, 0.0, 0.7, 12.0] {
            let chi = susceptibility(delta, 1.3);
            assert_abs_diff_eq!(chi.re - chi.norm_sqr(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn default_params_are_the_reference_point() {
        let p = MaserParams::default();
        assert_eq!((p.drive, p.g, p.gamma_h, p.gamma_c), (1.5, 0.025, 0.1, 2.0));
        assert_eq!(p.omega_3, 3.0 * p.omega_2);
        assert_eq!(p.cutoff, 30);
        p.validate().unwrap();
        // the fixed T_H sits inside the n_H sweep range
        let n_h = p.n_bar_hot().unwrap();
        assert!(n_h > 6.0 && n_h < 7.0, "{n_h}");
    }

    #[test]
    fn semi_classical_drive_identities() {
        let p = MaserParams::default();
        let d = SemiClassicalDrive::from_params(&p);
        assert_abs_diff_eq!((d.e_sc - C64::new(-0.075, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let p = MaserParams { detuning: 0.4, omega: 3500.4, omega_2: 3500.4, ..p };
        let d = SemiClassicalDrive::from_params(&p);
        assert_abs_diff_eq!(d.chi.re, d.chi.norm_sqr(), epsilon = 1e-12);
        assert_abs_diff_eq!((d.alpha - d.chi * (-2.0 * p.drive / p.kappa)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((d.e_sc - d.alpha * p.g).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let p = MaserParams::default();
        assert!(MaserParams { cutoff: 1, ..p.clone() }.validate().is_err());
        assert!(MaserParams { gamma_c: 0.0, ..p.clone() }.validate().is_err());
        assert!(MaserParams { omega_2: 3600.0, ..p.clone() }.validate().is_err());
        assert!(MaserParams { detuning: 1.0, ..p.clone() }.validate().is_err());
        assert!(MaserParams { n_h_override: Some(-1.0), ..p.clone() }.validate().is_err());
        assert!(build_maser(&MaserParams { t_cold: -1.0, ..p }).is_err());
    }

    #[test]
    fn maser_hamiltonian_is_hermitian() {
        for basis in [CavityBasis::Fock, CavityBasis::Displaced] {
            let sys = build_maser(&MaserParams { cutoff: 8, basis, ..Default::default() }).unwrap();
            assert!(sys.hamiltonian.hermiticity_residual() <= 1e-14);
            assert_eq!(sys.space.dims(), &[8, 3]);
            assert_eq!(sys.channels.len(), 6);
        }
    }

    #[test]
    fn sc_maser_shape() {
        let sys = build_sc_maser(&MaserParams::default()).unwrap();
        assert_eq!(liouvillian(&sys).unwrap().dim(), 9);
        assert_eq!(sys.channels.len(), 4);
        match sys.drive {
            Some(Drive::SemiClassical { alpha, coupling, .. }) => assert_abs_diff_eq!((alpha * coupling).re, -0.075, epsilon = 1e-15),
            _ => panic!("missing semi-classical drive"),
        }
    }

    #[test]
    fn sc_maser_without_coupling_is_at_the_two_bath_fixed_point() {
        let p = MaserParams { g: 0.0, ..Default::default() };
        let sys = build_sc_maser(&p).unwrap();
        let ss = steady_state(&liouvillian(&sys).unwrap(), STEADY_STATE_TOL).unwrap();
        let (n_h, n_c) = (p.n_bar_hot().unwrap(), p.n_bar_cold().unwrap());
        // detailed balance on each leg: p3/p1 = n_H/(n_H+1), p3/p2 = n_C/(n_C+1)
        let p1 = ss.rho.get(0, 0).re;
        let p2 = ss.rho.get(1, 1).re;
        let p3 = ss.rho.get(2, 2).re;
        assert_abs_diff_eq!(p3 / p1, n_h / (n_h + 1.0), epsilon = 1e-10);
        assert_abs_diff_eq!(p3 / p2, n_c / (n_c + 1.0), epsilon = 1e-10);
        assert_abs_diff_eq!(ss.rho.get(0, 1).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uncoupled_maser_factorises() {
        let p = MaserParams { g: 0.0, cutoff: 12, n_h_override: Some(2.0), ..Default::default() };
        let sys = build_maser(&p).unwrap();
        let ss = steady_state(&liouvillian(&sys).unwrap(), STEADY_STATE_TOL).unwrap();
        let (nc, ns) = (12, 3);
        let idx = |n: usize, s: usize| n * ns + s;
        let rho_cav = |n: usize, m: usize| (0..ns).map(|s| ss.rho.get(idx(n, s), idx(m, s))).sum::<C64>();
        let rho_sys = |s: usize, t: usize| (0..nc).map(|n| ss.rho.get(idx(n, s), idx(n, t))).sum::<C64>();
        let mut worst = 0.0f64;
        for n in 0..nc {
            for m in 0..nc {
                for s in 0..ns {
                    for t in 0..ns {
                        let diff = ss.rho.get(idx(n, s), idx(m, t)) - rho_cav(n, m) * rho_sys(s, t);
                        worst = worst.max(diff.norm());
                    }
                }
            }
        }
        assert!(worst <= 1e-8, "{worst}");
    }

    #[test]
    fn maser_steady_state_is_unique_at_reduced_cutoff() {
        for basis in [CavityBasis::Fock, CavityBasis::Displaced] {
            let sys = build_maser(&MaserParams { cutoff: 10, basis, ..Default::default() }).unwrap();
            let ev = liouvillian(&sys).unwrap().eigenvalues().unwrap();
            let zeros = ev.iter().filter(|e| e.norm() <= 1e-10).count();
            assert_eq!(zeros, 1);
        }
    }

    #[test]
    fn override_at_the_default_occupation_is_bit_identical() {
        let p = MaserParams { cutoff: 6, ..Default::default() };
        let q = p.with_n_h(p.n_bar_hot().unwrap());
        assert_eq!(q.n_bar_hot().unwrap(), p.n_bar_hot().unwrap());
        let a = build_maser(&p).unwrap();
        let b = build_maser(&q).unwrap();
        for (x, y) in a.channels.iter().zip(&b.channels) {
            assert_eq!(x.rate.to_bits(), y.rate.to_bits());
            assert_eq!(x.jump.matrix(), y.jump.matrix());
        }
        assert_eq!(a.hamiltonian.matrix(), b.hamiltonian.matrix());
        // T_H back-solved from the occupation
        assert_abs_diff_eq!(q.hot_temperature(), p.t_hot, epsilon = 1e-9 * p.t_hot);
    }

    #[test]
    fn multi_photon_terms() {
        let alpha = C64::new(-3.0, 0.5);
        let t = semiclassical_drive_term(1.0, 1, 0, 0.025, alpha).unwrap();
        assert_eq!(t.leading_coefficient, alpha * 0.025);
        let t = semiclassical_drive_term(1.0, 0, 1, 0.025, alpha).unwrap();
        assert_eq!(t.leading_coefficient, alpha.conj() * 0.025);
        let t = semiclassical_drive_term(1.0, 2, 0, 0.01, C64::new(-3.0, 0.0)).unwrap();
        assert_abs_diff_eq!((t.leading_coefficient - C64::new(0.09, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(t.scaling_exponent(), 2);
        assert!(semiclassical_drive_term(1.0, 0, 0, 0.01, alpha).is_err());
    }

    #[test]
    fn limit_family() {
        let p = MaserParams::default();
        assert_eq!(semiclassical_limit_family(&p, 1.0).unwrap(), p);
        for s in [0.5, 2.0, 4.0, 3.7] {
            let q = semiclassical_limit_family(&p, s).unwrap();
            let (a, b) = (SemiClassicalDrive::from_params(&p).e_sc, SemiClassicalDrive::from_params(&q).e_sc);
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-16);
        }
        let q = semiclassical_limit_family(&p, 2.0).unwrap();
        assert_eq!((q.g, q.drive), (0.0125, 3.0));
        assert_abs_diff_eq!(q.alpha().norm(), 6.0, epsilon = 1e-15);
        assert!(q.fock_cutoff_hint().unwrap() > p.fock_cutoff_hint().unwrap());
        assert!(semiclassical_limit_family(&p, 0.0).is_err());
    }

    #[test]
    fn heisenberg_relation_for_the_cavity_amplitude() {
        let p = MaserParams::default();
        let sys = build_maser(&p).unwrap();
        let ss = steady_state(&liouvillian(&sys).unwrap(), STEADY_STATE_TOL).unwrap();
        let a = expect(sys.cavity.as_ref().unwrap(), &ss.rho).unwrap();
        let o = expect(&sys.interaction.as_ref().unwrap().system_op, &ss.rho).unwrap();
        // ⟨a⟩ = α − 2i(g/κ)χ⟨O⟩ holds exactly in steady state
        let predicted = p.alpha() - C64::new(0.0, 2.0 * p.g / p.kappa) * p.chi() * o;
        assert_abs_diff_eq!((a - predicted).norm(), 0.0, epsilon = 1e-8);
        assert!((a - p.alpha()).norm() <= 4.0 * p.g / p.kappa * o.norm() + 1e-8);
    }
}
