//! Closed-form sideband predictions: resonance conditions, Rabi rates, the
//! rotating-wave two-level propagator and the fidelity formulas built on it.
//!
//! Rates passed in MHz are cyclic (ν, not ω); they are converted to rad/ns
//! internally where they meet times in ns.

use ndarray::Array2;
use serde::Serialize;

use crate::device::HarmonicDecomposition;
use crate::dispersive::{MlsDispersiveModel, TlsDispersiveParams, DISPERSIVE_WARN};
use crate::error::{Error, Result};
use crate::linalg::{C64, TWO_PI};

/// MHz (cyclic) to rad/ns.
pub fn mhz_to_angular(x: f64) -> f64 {
    TWO_PI * x * 1e-3
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sideband {
    /// |j+1; n⟩ ↔ |j; n+1⟩
    Red,
    /// |j; n⟩ ↔ |j+1; n+1⟩
    Blue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub transmon: usize,
    /// Lower transmon level j of the j ↔ j+1 pair.
    pub level: usize,
    /// Photon number n of the n ↔ n+1 pair.
    pub photons: usize,
    pub sideband: Sideband,
}

impl Transition {
    pub fn red(transmon: usize, level: usize, photons: usize) -> Self {
        Self {
            transmon,
            level,
            photons,
            sideband: Sideband::Red,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SidebandPrediction {
    pub transition: Transition,
    pub harmonic: usize,
    /// Modulation frequency in GHz.
    pub resonance: f64,
    /// Rabi rate of the population oscillation, MHz.
    pub rabi: f64,
    /// ε_n in MHz.
    pub eps_n: f64,
    /// Spectator-conditioned resonances (spectator in |0⟩, |1⟩), GHz, when a second transmon exists.
    pub conditioned: Option<[f64; 2]>,
    /// Critical coupling |Δ|/2 in GHz.
    pub g_crit: f64,
    /// Coupling exceeds g_crit or |λ| reaches the dispersive warning threshold.
    pub outside_validity: bool,
}

fn check_harmonic(m: usize) -> Result<()> {
    if !(1..=4).contains(&m) {
        return Err(Error::Domain(format!("harmonic m = {m} outside 1..=4")));
    }
    Ok(())
}

fn check_transition(model: &MlsDispersiveModel, tr: &Transition) -> Result<()> {
    let t = model.transmons.get(tr.transmon).ok_or(Error::SlotOutOfRange {
        slot: tr.transmon,
        len: model.transmons.len(),
    })?;
    if tr.level + 1 >= t.levels() {
        return Err(Error::InvalidIndex {
            i: tr.level,
            j: tr.level + 1,
            dim: t.levels(),
        });
    }
    Ok(())
}

/// Dressed sideband detuning, including Lamb and Stark shifts, in the model's units.
pub fn dressed_detuning(model: &MlsDispersiveModel, tr: &Transition) -> Result<f64> {
    check_transition(model, tr)?;
    let t = &model.transmons[tr.transmon];
    let (j, n) = (tr.level, tr.photons as f64);
    Ok(match tr.sideband {
        Sideband::Red => model.dressed_detuning(tr.transmon, j, tr.photons),
        Sideband::Blue => {
            t.omega_tilde[j + 1] - t.omega_tilde[j] + model.omega_r + t.stark[j + 1] * (n + 1.0) - t.stark[j] * n
        }
    })
}

/// Shift of the sideband resonance when spectator `other` sits in `level`.
///
/// The photon number changes by one across the transition, so the spectator
/// contributes ∓S_level.
pub fn spectator_shift(model: &MlsDispersiveModel, tr: &Transition, other: usize, level: usize) -> Result<f64> {
    let s = model
        .transmons
        .get(other)
        .and_then(|t| t.stark.get(level))
        .ok_or(Error::SlotOutOfRange {
            slot: other,
            len: model.transmons.len(),
        })?;
    Ok(match tr.sideband {
        Sideband::Red => -s,
        Sideband::Blue => *s,
    })
}

/// Modulation frequency (Δ̃ + G)/m that drives the transition with harmonic m.
pub fn resonance(model: &MlsDispersiveModel, harmonics: &HarmonicDecomposition, tr: &Transition, m: usize) -> Result<f64> {
    check_harmonic(m)?;
    Ok(((dressed_detuning(model, tr)? + harmonics.g_shift) / m as f64).abs())
}

/// Rabi rate |g_j √(n+1)/(Δ̃ + G)|·ε_m in MHz for a model in GHz.
pub fn rabi_rate(model: &MlsDispersiveModel, harmonics: &HarmonicDecomposition, tr: &Transition, m: usize) -> Result<f64> {
    check_harmonic(m)?;
    let g = model.transmons[tr.transmon].g.get(tr.level).copied().ok_or(Error::InvalidIndex {
        i: tr.level,
        j: tr.level + 1,
        dim: model.transmons[tr.transmon].levels(),
    })?;
    let det = dressed_detuning(model, tr)? + harmonics.g_shift;
    if det == 0.0 {
        return Err(Error::Degenerate("sideband detuning plus G vanishes".into()));
    }
    Ok((g * ((tr.photons + 1) as f64).sqrt() / det).abs() * harmonics.eps_m(m) * 1e3)
}

/// Full prediction for one transition and harmonic.
pub fn predict(model: &MlsDispersiveModel, harmonics: &HarmonicDecomposition, tr: Transition, m: usize) -> Result<SidebandPrediction> {
    let res = resonance(model, harmonics, &tr, m)?;
    let rabi = rabi_rate(model, harmonics, &tr, m)?;
    let t = &model.transmons[tr.transmon];
    let bare = match tr.sideband {
        Sideband::Red => t.delta[tr.level],
        Sideband::Blue => t.sigma[tr.level],
    };
    let g = t.g[tr.level];
    let g_crit = bare.abs() / 2.0;
    let coupling = match tr.sideband {
        Sideband::Red => t.lambda[tr.level],
        Sideband::Blue => t.big_lambda[tr.level],
    };
    let conditioned = if model.transmons.len() == 2 {
        let other = 1 - tr.transmon;
        let det = dressed_detuning(model, &tr)? + harmonics.g_shift;
        let mut out = [0.0; 2];
        for (s, o) in out.iter_mut().enumerate() {
            *o = ((det + spectator_shift(model, &tr, other, s)?) / m as f64).abs();
        }
        Some(out)
    } else {
        None
    };
    Ok(SidebandPrediction {
        transition: tr,
        harmonic: m,
        resonance: res,
        rabi,
        eps_n: rabi / 2.0,
        conditioned,
        g_crit,
        outside_validity: g.abs() > g_crit || coupling.abs() >= DISPERSIVE_WARN,
    })
}

/// Two-level red-sideband detuning Δ±_n, with the literal 2(n+1)S⁽¹⁾ Stark term.
pub fn tls_detuning(p: &TlsDispersiveParams, n: usize, spectator_excited: bool) -> f64 {
    let [q1, q2] = &p.qubits;
    let spec = if spectator_excited { q2.stark } else { -q2.stark };
    q1.omega_tilde + 2.0 * (n + 1) as f64 * q1.stark - (p.omega_r + spec)
}

/// Same detuning from the diagonal-Hamiltonian energies E(e, n) − E(g, n+1), i.e. (2n+1)S⁽¹⁾.
pub fn tls_detuning_from_energies(p: &TlsDispersiveParams, n: usize, spectator_excited: bool) -> f64 {
    tls_detuning(p, n, spectator_excited) - p.qubits[0].stark
}

/// ε_n = ½λε√(n+1).
pub fn tls_eps_n(p: &TlsDispersiveParams, drive: f64, n: usize) -> f64 {
    0.5 * p.qubits[0].lambda * drive * ((n + 1) as f64).sqrt()
}

/// Rotating-wave propagator in the {|0; n+1⟩, |1; n⟩} subspace.
///
/// `eps_n` and `delta` in MHz (cyclic), `t` in ns.
pub fn two_level_evolution(eps_n: f64, delta: f64, t: f64) -> Array2<C64> {
    let e = mhz_to_angular(eps_n);
    let d = mhz_to_angular(delta);
    let r = (d * d + 4.0 * e * e).sqrt();
    let (s, cs) = (r * t / 2.0).sin_cos();
    // sin(rt/2)/r → t/2 as r → 0
    let sinc = if r == 0.0 { t / 2.0 } else { s / r };
    let ph = C64::from_polar(1.0, -d * t / 2.0);
    let i = C64::i();
    let mut v = Array2::zeros((2, 2));
    v[[0, 0]] = ph * (cs - i * d * sinc);
    v[[0, 1]] = -2.0 * i * e * sinc * ph;
    v[[1, 0]] = -2.0 * i * e * sinc * ph.conj();
    v[[1, 1]] = ph.conj() * (cs + i * d * sinc);
    v
}

/// Returns a warning when the dropped counter-rotating terms are not small.
pub fn rwa_warning(eps_n: f64, omega_fc_plus_delta: f64) -> Option<String> {
    (eps_n.abs() * 10.0 > omega_fc_plus_delta.abs()).then(|| {
        format!("ε_n = {eps_n} is not small against ω_FC + Δ_n = {omega_fc_plus_delta}")
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticFidelity {
    pub f_uv: f64,
    pub f_avg: f64,
    /// Small-δ form evaluated at t_p = π/(2ε̄).
    pub f_simple: f64,
    pub f_simple_avg: f64,
}

pub fn average_from_gate(f: f64) -> f64 {
    (2.0 * f + 1.0) / 3.0
}

/// Gate fidelity of the rotating-wave sideband against the ideal −iσx swap.
pub fn gate_fidelity_analytic(eps_bar: f64, delta: f64, t: f64) -> Result<AnalyticFidelity> {
    if eps_bar <= 0.0 {
        return Err(Error::Domain(format!("ε̄ = {eps_bar} must be positive")));
    }
    let e = mhz_to_angular(eps_bar);
    let d = mhz_to_angular(delta);
    let r2 = d * d + 4.0 * e * e;
    let r = r2.sqrt();
    let f_uv = 2.0 * e * e / r2 * (r * t / 2.0).sin().powi(2) * (1.0 + (d * t).cos());
    let tp = std::f64::consts::PI / (2.0 * e);
    let f_simple = 2.0 * e * e / r2 * (1.0 + (d * tp).cos());
    Ok(AnalyticFidelity {
        f_uv,
        f_avg: average_from_gate(f_uv),
        f_simple,
        f_simple_avg: average_from_gate(f_simple),
    })
}

/// P_t = 4ε̄²/(δ² + 4ε̄²) for a pulse of area π/2 in ε̄.
pub fn target_population(eps_bar: f64, delta: f64) -> f64 {
    4.0 * eps_bar * eps_bar / (delta * delta + 4.0 * eps_bar * eps_bar)
}

/// ε̄ = (1/t_p)∫ε(t)dt by the trapezoid rule on uniform samples.
pub fn time_average(samples: &[f64]) -> f64 {
    match samples.len() {
        0 => 0.0,
        1 => samples[0],
        n => {
            let inner: f64 = samples[1..n - 1].iter().sum();
            (inner + 0.5 * (samples[0] + samples[n - 1])) / (n - 1) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, frobenius, eye};

    #[test]
    fn identity_at_zero_time() {
        let v = two_level_evolution(3.0, 1.0, 0.0);
        assert!(frobenius(&(v - eye(2))) < 1e-15);
    }

    #[test]
    fn resonant_inversion() {
        let eps = 5.0;
        let t = std::f64::consts::PI / (2.0 * mhz_to_angular(eps));
        let v = two_level_evolution(eps, 0.0, t);
        assert!((v[[1, 0]].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_fidelity_on_resonance() {
        let eps = 4.0;
        let t = std::f64::consts::PI / (2.0 * mhz_to_angular(eps));
        let f = gate_fidelity_analytic(eps, 0.0, t).unwrap();
        assert!((f.f_uv - 1.0).abs() < 1e-12);
        assert!((f.f_avg - 1.0).abs() < 1e-12);
        assert_eq!(average_from_gate(0.0), 1.0 / 3.0);
    }

    #[test]
    fn reference_transfer() {
        let p = target_population(1.0, 0.23);
        assert!((p - 0.987).abs() < 5e-4, "{p}");
    }

    #[test]
    fn fidelity_matches_trace_formula() {
        let (eps, d, t) = (3.0, 1.3, 70.0);
        let v = two_level_evolution(eps, d, t);
        // U = −iσx
        let tr = C64::i() * (v[[0, 1]] + v[[1, 0]]);
        let want = tr.norm_sqr() / 4.0;
        let f = gate_fidelity_analytic(eps, d, t).unwrap();
        assert!((f.f_uv - want).abs() < 1e-12);
        let u = dagger(&v.view()).dot(&v);
        assert!(frobenius(&(u - eye(2))) < 1e-12);
    }

    #[test]
    fn trapezoid_average() {
        assert!((time_average(&[0.0, 1.0, 2.0]) - 1.0).abs() < 1e-15);
    }
}
