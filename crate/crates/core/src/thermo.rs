//! Heat currents, powers, entropy production and thermodynamic uncertainty
//! under the standard, input-output (IO) and semi-classical bookkeepings.
//!
//! Sign convention: every current and power is energy flowing *into* the
//! system, so the first law reads `P + J + Σ_j J_j = 0`.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcs::{current_noise_drazin_with, CountedCurrent, NoiseResult};
use crate::hilbert::{embed, expect, Operator, HERMITIAN_TOL};
use crate::lindblad::{liouvillian, steady_state_with_solver, Drive, OpenSystem};

/// Bath label of the cavity's own reservoir.
pub const CAVITY_BATH: &str = "cavity";

/// Relative tolerance of the first-law checks.
pub const FIRST_LAW_TOL: f64 = 1e-8;

/// Imaginary residue tolerated on quantities that are real by construction.
const REAL_TOL: f64 = 1e-10;

/// `H_TD = ω a†a + H′_TD`, the energy bookkeeping used for heat currents.
#[derive(Debug, Clone)]
pub struct ThermoHamiltonian {
    pub cavity_weight: f64,
    /// Acts on the few-level system alone.
    pub system_part: Operator,
}

impl ThermoHamiltonian {
    pub fn new(cavity_weight: f64, system_part: Operator) -> Result<Self> {
        let scale = system_part.max_abs().max(1.0);
        let n = system_part.dim();
        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v = system_part.get(i, j);
                if i != j {
                    off = off.max(v.norm());
                } else {
                    off = off.max(v.im.abs());
                }
            }
        }
        if off > HERMITIAN_TOL * scale {
            return Err(Error::InvalidParameter("thermodynamic Hamiltonian must be real and diagonal".into()));
        }
        Ok(Self { cavity_weight, system_part })
    }

    /// The operator on the model's full space.
    pub fn full(&self, sys: &OpenSystem) -> Result<Operator> {
        let slot = sys.system_slot.ok_or_else(|| Error::InvalidParameter("model has no system slot".into()))?;
        let mut h = embed(&self.system_part, &sys.space, slot)?;
        if let Some(a) = &sys.cavity {
            h = &h + &(&a.dagger() * a).scale_real(self.cavity_weight);
        }
        Ok(h)
    }
}

fn real(z: C64) -> Result<f64> {
    if z.im.abs() > REAL_TOL * z.norm().max(1.0) {
        return Err(Error::NotReal(z.im));
    }
    Ok(z.re)
}

/// `Σ γ tr(H D[L]ρ) = Σ γ tr((L†HL − ½{L†L, H}) ρ)` over the channels of one bath.
fn heat_current_with(sys: &OpenSystem, rho: &Operator, h: &Operator, bath_id: &str) -> Result<f64> {
    let idx = sys.bath_channels(bath_id);
    if idx.is_empty() {
        return Err(Error::UnknownBath(bath_id.to_string()));
    }
    sys.bath_temperature(bath_id)?;
    let mut acc = C64::new(0.0, 0.0);
    for i in idx {
        let ch = &sys.channels[i];
        if ch.rate == 0.0 {
            continue;
        }
        let ld = ch.jump.dagger();
        let ldl = &ld * &ch.jump;
        let gen = &(&(&ld * h) * &ch.jump) - &(&(&ldl * h) + &(h * &ldl)).scale_real(0.5);
        acc += expect(&gen, rho)? * ch.rate;
    }
    real(acc)
}

pub fn bath_heat_current(sys: &OpenSystem, rho: &Operator, thermo_h: &ThermoHamiltonian, bath_id: &str) -> Result<f64> {
    heat_current_with(sys, rho, &thermo_h.full(sys)?, bath_id)
}

/// `ω_d κ (n̄ − ⟨a†a⟩)` for the cavity annihilation operator `a`.
pub fn cavity_heat_current(rho: &Operator, a: &Operator, kappa: f64, n_bar: f64, omega_d: f64) -> Result<f64> {
    let n = real(expect(&(&a.dagger() * a), rho)?)?;
    Ok(omega_d * kappa * (n_bar - n))
}

/// `−ω_d E ⟨a + a†⟩`.
pub fn power_standard(sys: &OpenSystem, rho: &Operator) -> Result<f64> {
    let (amplitude, omega_d) = match sys.drive {
        Some(Drive::Cavity { amplitude, frequency, .. }) => (amplitude, frequency),
        _ => return Err(Error::MissingDrive),
    };
    let a = sys.cavity.as_ref().ok_or(Error::MissingDrive)?;
    let x = expect(a, rho)?;
    Ok(-omega_d * amplitude * 2.0 * x.re)
}

/// `⟨P⟩ − ω_d κ |⟨a⟩|²`.
pub fn power_io(p_standard: f64, a_mean: C64, kappa: f64, omega_d: f64) -> f64 {
    p_standard - omega_d * kappa * a_mean.norm_sqr()
}

/// Energy-balance invariance: `⟨J⟩ + ⟨P⟩ − ⟨P_io⟩`.
pub fn heat_io(j_cavity: f64, p_standard: f64, p_io: f64) -> f64 {
    j_cavity + p_standard - p_io
}

/// `−iω_d g (α⟨O†⟩ − α*⟨O⟩)` on a system-only state.
pub fn power_semiclassical(rho: &Operator, g: f64, alpha: C64, o: &Operator, omega_d: f64) -> Result<f64> {
    let om = expect(o, rho)?;
    let odm = expect(&o.dagger(), rho)?;
    real(C64::new(0.0, -omega_d * g) * (alpha * odm - alpha.conj() * om))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    Standard,
    Io,
    #[serde(rename = "sc")]
    SemiClassical,
}

impl Framework {
    pub fn label(self) -> &'static str {
        match self {
            Framework::Standard => "standard",
            Framework::Io => "io",
            Framework::SemiClassical => "sc",
        }
    }
}

/// `σ = −J/T − Σ_j J_j/T_j`.
///
/// `cavity` is `(J, T)` for the standard framework and `(J_io, T)` for IO;
/// the semi-classical entropy production ignores it.
pub fn entropy_production(cavity: Option<(f64, f64)>, baths: &[(f64, f64)], framework: Framework) -> Result<f64> {
    let mut sigma = 0.0;
    for &(j, t) in baths {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("temperature must be positive, got {t}")));
        }
        sigma -= j / t;
    }
    match framework {
        Framework::SemiClassical => Ok(sigma),
        Framework::Standard | Framework::Io => {
            let (j, t) = cavity.ok_or(Error::MissingCavityCurrent)?;
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("temperature must be positive, got {t}")));
            }
            Ok(sigma - j / t)
        }
    }
}

/// `Q = ⟨⟨I²⟩⟩/⟨I⟩² · σ`.
pub fn thermodynamic_uncertainty(mean: f64, variance: f64, sigma: f64) -> Result<f64> {
    if mean == 0.0 || mean.abs() <= 1e-12 * variance.abs().sqrt() {
        return Err(Error::NearZeroCurrent { mean });
    }
    Ok(variance / (mean * mean) * sigma)
}

/// Thermodynamic uncertainties of the counted current, one per framework;
/// `None` where undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct QValues {
    pub standard: Option<f64>,
    pub io: Option<f64>,
    pub sc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ThermoReport {
    /// Heat current from each system bath (cavity bath excluded).
    pub j_bath: BTreeMap<String, f64>,
    pub j_cavity: Option<f64>,
    pub j_io: Option<f64>,
    pub p_standard: Option<f64>,
    pub p_io: Option<f64>,
    pub p_sc: Option<f64>,
    pub sigma_standard: Option<f64>,
    pub sigma_io: Option<f64>,
    /// `−Σ_j J_j/T_j` over the system baths of the evaluated model.
    pub sigma_sc: f64,
    pub noise: NoiseResult,
    pub q: QValues,
    /// `(P + J + Σ J_j)/max|term|` per framework.
    pub first_law: BTreeMap<Framework, f64>,
    pub a_mean: Option<C64>,
    pub solver_residual: f64,
    pub edge_population: f64,
}

impl ThermoReport {
    pub fn j(&self, bath: &str) -> Option<f64> {
        self.j_bath.get(bath).copied()
    }

    pub fn q_undefined(&self) -> bool {
        self.q.standard.is_none() && self.q.io.is_none() && self.q.sc.is_none()
    }
}

fn relative_residual(terms: &[f64]) -> f64 {
    let sum: f64 = terms.iter().sum();
    let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if scale == 0.0 {
        0.0
    } else {
        sum.abs() / scale
    }
}

/// Solves the model and evaluates every quantity its drive admits.
///
/// Cavity-driven models get the standard and IO bookkeepings; models with a
/// classical drive get the semi-classical power. The semi-classical entropy
/// production (system baths only) is always reported.
pub fn evaluate(sys: &OpenSystem, thermo_h: &ThermoHamiltonian, counted: &CountedCurrent, tol: f64) -> Result<ThermoReport> {
    let l = liouvillian(sys)?;
    let (ss, solver) = steady_state_with_solver(&l, tol)?;
    let noise = current_noise_drazin_with(sys, &solver, &ss, counted)?;
    let rho = &ss.rho;
    let h_td = thermo_h.full(sys)?;

    let mut j_bath = BTreeMap::new();
    let mut baths = Vec::new();
    for id in sys.bath_ids() {
        if id == CAVITY_BATH {
            continue;
        }
        let j = heat_current_with(sys, rho, &h_td, &id)?;
        baths.push((j, sys.bath_temperature(&id)?));
        j_bath.insert(id, j);
    }
    let sum_j: f64 = j_bath.values().sum();
    let sigma_sc = entropy_production(None, &baths, Framework::SemiClassical)?;

    let mut report = ThermoReport {
        j_bath,
        j_cavity: None,
        j_io: None,
        p_standard: None,
        p_io: None,
        p_sc: None,
        sigma_standard: None,
        sigma_io: None,
        sigma_sc,
        noise,
        q: QValues::default(),
        first_law: BTreeMap::new(),
        a_mean: None,
        solver_residual: ss.residual,
        edge_population: ss.edge_population,
    };

    match sys.drive {
        Some(Drive::Cavity { frequency, kappa, .. }) => {
            let a = sys.cavity.as_ref().ok_or(Error::MissingDrive)?;
            let t = sys.bath_temperature(CAVITY_BATH)?;
            let j = heat_current_with(sys, rho, &h_td, CAVITY_BATH)?;
            let p = power_standard(sys, rho)?;
            let a_mean = expect(a, rho)?;
            let p_io = power_io(p, a_mean, kappa, frequency);
            let j_io = heat_io(j, p, p_io);
            report.sigma_standard = Some(entropy_production(Some((j, t)), &baths, Framework::Standard)?);
            report.sigma_io = Some(entropy_production(Some((j_io, t)), &baths, Framework::Io)?);
            report.first_law.insert(Framework::Standard, relative_residual(&[p, j, sum_j]));
            report.first_law.insert(Framework::Io, relative_residual(&[p_io, j_io, sum_j]));
            report.j_cavity = Some(j);
            report.j_io = Some(j_io);
            report.p_standard = Some(p);
            report.p_io = Some(p_io);
            report.a_mean = Some(a_mean);
        }
        Some(Drive::SemiClassical { alpha, coupling, frequency }) => {
            let o = &sys.interaction.as_ref().ok_or(Error::MissingDrive)?.system_op;
            let p_sc = power_semiclassical(rho, coupling, alpha, o, frequency)?;
            report.first_law.insert(Framework::SemiClassical, relative_residual(&[p_sc, sum_j]));
            report.p_sc = Some(p_sc);
        }
        None => {}
    }

    let q = |sigma: Option<f64>| sigma.and_then(|s| thermodynamic_uncertainty(noise.mean, noise.variance, s).ok());
    report.q = QValues { standard: q(report.sigma_standard), io: q(report.sigma_io), sc: q(Some(sigma_sc)) };
    Ok(report)
}
