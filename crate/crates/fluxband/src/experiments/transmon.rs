//! Single transmon under continuous flux modulation: sideband Rabi rate, geometric shift, harmonic content.

use nalgebra::{Matrix3, Vector3};
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::{params_of, Point, PointOutput};
use crate::device::{harmonic_decomposition, numeric_harmonics, Device, TransmonModel, TransmonSpec};
use crate::dispersive::mls_model;
use crate::error::{Error, Result};
use crate::evolve::{Drive, IntegratorConfig, LocalTerm, Propagator};
use crate::hilbert::{DressedBasis, Operator};
use crate::linalg::TWO_PI;
use crate::sideband_model::{resonance, rabi_rate, Transition};

/// Device whose first transmon is modulated as φ(t) = φ_i + Δφ cos(2πft), with no envelope.
pub struct ContinuousFlux<'a> {
    device: &'a Device,
    delta_phi: f64,
    carrier: f64,
    h0: Operator,
    base: Vec<f64>,
}

impl<'a> ContinuousFlux<'a> {
    pub fn new(device: &'a Device, delta_phi: f64, carrier: f64) -> Result<Self> {
        if !(carrier > 0.0) {
            return Err(Error::Domain(format!("carrier {carrier} GHz must be positive")));
        }
        let h0 = device.static_hamiltonian()?;
        let mut base = vec![0.0; device.order()];
        device.transmon_diagonal(&device.static_fluxes(), &mut base)?;
        Ok(Self { device, delta_phi, carrier, h0, base })
    }
}

impl Drive for ContinuousFlux<'_> {
    fn dims(&self) -> &[usize] {
        self.device.dims()
    }
    fn static_part(&self) -> &Operator {
        &self.h0
    }
    fn local_terms(&self) -> &[LocalTerm] {
        &[]
    }
    fn eval(&self, t: f64, diag: &mut [f64], _coeffs: &mut [f64]) -> Result<bool> {
        let mut fl = self.device.static_fluxes();
        fl[0] += self.delta_phi * (TWO_PI * self.carrier * t).cos();
        self.device.transmon_diagonal(&fl, diag)?;
        for (d, b) in diag.iter_mut().zip(&self.base) {
            *d -= b;
        }
        Ok(true)
    }
    fn rate_scale(&self, _a: f64, _b: f64) -> Option<f64> {
        Some(self.carrier.max(1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiParams {
    pub delta_phi: f64,
    /// Harmonic used for the sideband; the dominant one when absent.
    pub harmonic: Option<usize>,
    /// Simulated window in predicted Rabi periods.
    pub periods: f64,
    /// Population samples across the window.
    pub samples: usize,
}

impl Default for RabiParams {
    fn default() -> Self {
        Self {
            delta_phi: 0.075,
            harmonic: None,
            periods: 3.0,
            samples: 600,
        }
    }
}

/// Least-squares fit of c0 + c1 cos(2πνt) + c2 sin(2πνt); returns (residual, coefficients).
fn sinusoid_fit(t: &[f64], y: &[f64], nu: f64) -> (f64, Vector3<f64>) {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let (s, c) = (TWO_PI * nu * ti).sin_cos();
        let row = Vector3::new(1.0, c, s);
        a += row * row.transpose();
        b += row * yi;
    }
    let coef = a.lu().solve(&b).unwrap_or_else(Vector3::zeros);
    let res = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let (s, c) = (TWO_PI * nu * ti).sin_cos();
            let r = yi - coef[0] - coef[1] * c - coef[2] * s;
            r * r
        })
        .sum();
    (res, coef)
}

/// Oscillation frequency and peak-to-peak amplitude of `y(t)`, scanning ν over [lo, hi] then refining.
pub fn fit_oscillation(t: &[f64], y: &[f64], lo: f64, hi: f64) -> Result<(f64, f64)> {
    const SCAN: usize = 800;
    let step = (hi - lo) / SCAN as f64;
    let best = (0..=SCAN)
        .map(|i| lo + step * i as f64)
        .map(|nu| (nu, sinusoid_fit(t, y, nu).0))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Domain("empty frequency scan".into()))?
        .0;
    let (nu, _) = crate::calibrate::golden_max((best - step).max(lo * 0.5), best + step, |nu| Ok(-sinusoid_fit(t, y, nu).0))?;
    let coef = sinusoid_fit(t, y, nu).1;
    Ok((nu, 2.0 * coef[1].hypot(coef[2])))
}

#[derive(Clone, Debug, Serialize)]
pub struct RabiReport {
    pub phi: f64,
    pub g_ge: f64,
    pub harmonic: usize,
    pub analytic_rabi_mhz: f64,
    /// ν√A from the fitted oscillation, ν the generalized frequency and A its amplitude.
    pub numeric_rabi_mhz: f64,
    pub relative_deviation: f64,
    pub generalized_mhz: f64,
    pub amplitude: f64,
    pub analytic_resonance_ghz: f64,
    /// Exact dressed detuning plus the Fourier-mean shift, divided by m.
    pub numeric_resonance_ghz: f64,
    pub g_crit_ghz: f64,
}

/// Drives |1;0⟩ ↔ |0;1⟩ of a one-transmon device and compares the fitted Rabi rate with the dispersive prediction.
pub fn rabi(device: &Device, p: &RabiParams, cfg: IntegratorConfig) -> Result<RabiReport> {
    if device.transmons.len() != 1 {
        return Err(Error::Domain("rabi-sweep needs a single transmon".into()));
    }
    if p.samples < 16 || !(p.periods > 0.0) {
        return Err(Error::config("params", "need samples ≥ 16 and periods > 0"));
    }
    let spec = &device.spec.transmons[0];
    let model = mls_model(device)?;
    let h = harmonic_decomposition(spec, p.delta_phi)?;
    let m = p.harmonic.unwrap_or_else(|| h.dominant());
    let tr = Transition::red(0, 0, 0);
    let analytic = rabi_rate(&model, &h, &tr, m)?;
    let analytic_res = resonance(&model, &h, &tr, m)?;
    let basis = DressedBasis::new(&device.static_hamiltonian()?, 0.5)?;
    let (up, down) = (vec![1, 0], vec![0, 1]);
    let numeric_g = numeric_harmonics(&device.transmons[0], 0, p.delta_phi, 512)?.g_shift;
    let det = (basis.energy(&up)? - basis.energy(&down)?) / TWO_PI;
    let carrier = ((det + numeric_g) / m as f64).abs();
    let drive = ContinuousFlux::new(device, p.delta_phi, carrier)?;
    let prop = Propagator::new(&drive, cfg)?;
    let window = p.periods / (analytic * 1e-3);
    let dt = window / p.samples as f64;
    let target = basis.vector(&down)?;
    let mut psi = basis.vector(&up)?.insert_axis(Axis(1));
    let mut times = Vec::with_capacity(p.samples + 1);
    let mut pops = Vec::with_capacity(p.samples + 1);
    for k in 0..=p.samples {
        let t = k as f64 * dt;
        if k > 0 {
            psi = prop.propagate(&psi, t - dt, t)?;
        }
        let amp: crate::linalg::C64 = target.iter().zip(psi.column(0)).map(|(a, b)| a.conj() * b).sum();
        times.push(t);
        pops.push(amp.norm_sqr());
    }
    let nu0 = analytic * 1e-3;
    let (nu, amp) = fit_oscillation(&times, &pops, 0.2 * nu0, 4.0 * nu0)?;
    let numeric = 1e3 * nu * amp.min(1.0).sqrt();
    let t = &model.transmons[0];
    Ok(RabiReport {
        phi: spec.phi,
        g_ge: device.spec.g_ge[0],
        harmonic: m,
        analytic_rabi_mhz: analytic,
        numeric_rabi_mhz: numeric,
        relative_deviation: (analytic - numeric).abs() / numeric,
        generalized_mhz: 1e3 * nu,
        amplitude: amp,
        analytic_resonance_ghz: analytic_res,
        numeric_resonance_ghz: carrier,
        g_crit_ghz: t.delta[0].abs() / 2.0,
    })
}

pub const RABI_COLUMNS: &[&str] = &[
    "harmonic",
    "analytic_rabi_mhz",
    "numeric_rabi_mhz",
    "relative_deviation",
    "analytic_resonance_ghz",
    "numeric_resonance_ghz",
    "g_crit_ghz",
];

pub fn rabi_point(p: &Point, cfg: IntegratorConfig) -> Result<PointOutput> {
    let params: RabiParams = params_of(p)?;
    let device = Device::new(p.device.clone())?;
    let r = rabi(&device, &params, cfg)?;
    let mut warnings = Vec::new();
    if params.delta_phi > 0.0 && r.g_ge > r.g_crit_ghz {
        warnings.push(format!("g = {} GHz exceeds g_crit = {:.4} GHz", r.g_ge, r.g_crit_ghz));
    }
    Ok(PointOutput {
        rows: vec![vec![
            r.harmonic as f64,
            r.analytic_rabi_mhz,
            r.numeric_rabi_mhz,
            r.relative_deviation,
            r.analytic_resonance_ghz,
            r.numeric_resonance_ghz,
            r.g_crit_ghz,
        ]],
        summary: serde_json::to_value(&r)?,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarmonicParams {
    pub delta_phi: f64,
    /// Static flux offsets replacing the device's φ_i of transmon 0.
    pub operating_points: Vec<f64>,
    /// Samples per drive period for the Fourier analysis.
    pub samples: usize,
}

impl Default for HarmonicParams {
    fn default() -> Self {
        Self {
            delta_phi: 0.05,
            operating_points: vec![0.0, 0.25],
            samples: 512,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicComparison {
    pub phi: f64,
    pub delta_phi: f64,
    pub omega_p_prime_ghz: f64,
    pub g_analytic_mhz: f64,
    pub g_numeric_mhz: f64,
    /// ε_m for m = 1..4, MHz.
    pub eps_analytic_mhz: [f64; 4],
    pub eps_numeric_mhz: [f64; 4],
}

impl HarmonicComparison {
    pub fn g_relative_deviation(&self) -> f64 {
        (self.g_analytic_mhz - self.g_numeric_mhz).abs() / self.g_numeric_mhz.abs()
    }
}

/// Closed-form and Fourier-analysed ω01(t) content for each operating point.
pub fn harmonics(spec: &TransmonSpec, p: &HarmonicParams) -> Result<Vec<HarmonicComparison>> {
    if p.operating_points.is_empty() {
        return Err(Error::config("params.operating_points", "empty"));
    }
    if p.samples < 16 {
        return Err(Error::config("params.samples", "need at least 16"));
    }
    p.operating_points
        .iter()
        .map(|&phi| {
            let spec = TransmonSpec { phi, ..spec.clone() };
            let a = harmonic_decomposition(&spec, p.delta_phi)?;
            let model = TransmonModel::new(spec)?;
            let n = numeric_harmonics(&model, 0, p.delta_phi, p.samples)?;
            Ok(HarmonicComparison {
                phi,
                delta_phi: p.delta_phi,
                omega_p_prime_ghz: a.omega_p_prime,
                g_analytic_mhz: 1e3 * a.g_shift,
                g_numeric_mhz: 1e3 * n.g_shift,
                eps_analytic_mhz: a.eps.map(|e| 1e3 * e),
                eps_numeric_mhz: n.eps.map(|e| 1e3 * e),
            })
        })
        .collect()
}

pub const SHIFT_COLUMNS: &[&str] = &[
    "phi",
    "g_analytic_mhz",
    "g_numeric_mhz",
    "relative_deviation",
    "eps1_numeric_over_wp",
    "eps3_numeric_over_wp",
];

pub fn shift_point(p: &Point, _cfg: IntegratorConfig) -> Result<PointOutput> {
    let params: HarmonicParams = params_of(p)?;
    let spec = p.device.transmons.first().ok_or(Error::SlotOutOfRange { slot: 0, len: 0 })?;
    let cmp = harmonics(spec, &params)?;
    let rows = cmp
        .iter()
        .map(|c| {
            let wp = 1e3 * c.omega_p_prime_ghz;
            vec![
                c.phi,
                c.g_analytic_mhz,
                c.g_numeric_mhz,
                c.g_relative_deviation(),
                c.eps_numeric_mhz[0].abs() / wp,
                c.eps_numeric_mhz[2].abs() / wp,
            ]
        })
        .collect();
    Ok(PointOutput {
        rows,
        summary: serde_json::to_value(&cmp)?,
        warnings: Vec::new(),
    })
}

pub const SPECTRUM_COLUMNS: &[&str] = &["phi", "harmonic", "eps_analytic_mhz", "eps_numeric_mhz"];

pub fn spectrum_point(p: &Point, _cfg: IntegratorConfig) -> Result<PointOutput> {
    let params: HarmonicParams = params_of(p)?;
    let spec = p.device.transmons.first().ok_or(Error::SlotOutOfRange { slot: 0, len: 0 })?;
    let cmp = harmonics(spec, &params)?;
    let rows = cmp
        .iter()
        .flat_map(|c| (0..4).map(move |m| vec![c.phi, (m + 1) as f64, c.eps_analytic_mhz[m], c.eps_numeric_mhz[m]]))
        .collect();
    Ok(PointOutput {
        rows,
        summary: serde_json::to_value(&cmp)?,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillation_fit_recovers_frequency_and_amplitude() {
        let t: Vec<f64> = (0..400).map(|k| k as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|&x| 0.4 * (1.0 - (TWO_PI * 0.013 * x).cos()) + 0.01 * (TWO_PI * 0.9 * x).sin()).collect();
        let (nu, a) = fit_oscillation(&t, &y, 0.005, 0.05).unwrap();
        assert!((nu - 0.013).abs() < 1e-5, "{nu}");
        assert!((a - 0.8).abs() < 1e-2, "{a}");
    }
}
