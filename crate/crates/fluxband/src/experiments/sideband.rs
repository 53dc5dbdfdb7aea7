//! Single red-sideband pulses on a two-transmon device: π-pulse transfer and the spectator Stark error.

use serde::{Deserialize, Serialize};

use super::{params_of, Point, PointOutput};
use crate::device::{harmonic_decomposition, Device};
use crate::dispersive::{mls_model, MlsDispersiveModel};
use crate::error::{Error, Result};
use crate::evolve::{extract_gate, IntegratorConfig, Propagator, ScheduledDrive};
use crate::hilbert::DressedBasis;
use crate::linalg::{CMat, C64};
use crate::pulses::{
    effective_amplitude, fc_segment, CarrierStrategy, ConditionedDetunings, DriveCalibration, Envelope, PulseSchedule,
    PulseSegment, ResonanceSource, UENT_TIMINGS,
};
use crate::sideband_model::{gate_fidelity_analytic, rabi_rate, target_population, time_average, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierChoice {
    ResonantOnGround,
    Midpoint,
    /// Maximizes the simulated transfer with the spectator in its ground state.
    PeakOnGround,
    /// Bisected until both spectator states see the same transfer.
    Balanced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SidebandParams {
    /// Driven transmon; the other one is the spectator.
    pub target: usize,
    /// Lower level j of the |j+1;0⟩ ↔ |j;1⟩ sideband.
    pub level: usize,
    /// Harmonic of the flux drive; the dominant one when absent.
    pub harmonic: Option<usize>,
    pub envelope: Envelope,
    pub carrier: CarrierChoice,
    pub source: ResonanceSource,
}

impl Default for SidebandParams {
    fn default() -> Self {
        Self::sideband_pi()
    }
}

impl SidebandParams {
    /// R01 pulse of the entangling sequence, carrier balanced between the spectator states.
    pub fn sideband_pi() -> Self {
        let (a, mu, s, tt) = UENT_TIMINGS[0];
        Self {
            target: 0,
            level: 0,
            harmonic: None,
            envelope: Envelope { amplitude: a, mu, sigma: s, two_tau: tt },
            carrier: CarrierChoice::Balanced,
            source: ResonanceSource::Dispersive,
        }
    }

    /// Gaussian with τ = 2σ, σ = 6.6873 ns, Δφ = 0.075, resonant with the ground-state spectator.
    pub fn stark_error() -> Self {
        let sigma = 6.6873;
        Self {
            envelope: Envelope { amplitude: 0.075, mu: 2.0 * sigma, sigma, two_tau: 4.0 * sigma },
            carrier: CarrierChoice::ResonantOnGround,
            ..Self::sideband_pi()
        }
    }
}

/// Everything fixed by the device and the transition, shared by every carrier tried.
pub struct SidebandSetup {
    pub device: Device,
    pub basis: DressedBasis,
    pub model: MlsDispersiveModel,
    pub transition: Transition,
    pub harmonic: usize,
    pub detunings: ConditionedDetunings,
    pub params: SidebandParams,
}

impl SidebandSetup {
    pub fn new(device: Device, params: SidebandParams) -> Result<Self> {
        if device.transmons.len() != 2 {
            return Err(Error::Domain("sideband scenarios need a spectator: exactly two transmons".into()));
        }
        params.envelope.validate()?;
        let basis = DressedBasis::new(&device.static_hamiltonian()?, 0.5)?;
        let model = mls_model(&device)?;
        let transition = Transition::red(params.target, params.level, 0);
        let spec = &device
            .spec
            .transmons
            .get(params.target)
            .ok_or(Error::SlotOutOfRange { slot: params.target, len: 2 })?;
        let harmonic = match params.harmonic {
            Some(m) => m,
            None => harmonic_decomposition(spec, effective_amplitude(&params.envelope))?.dominant(),
        };
        let detunings = match params.source {
            ResonanceSource::Dispersive => ConditionedDetunings::from_model(&model, transition)?,
            ResonanceSource::Spectrum => ConditionedDetunings::from_spectrum(&device, &basis, transition)?,
        };
        Ok(Self {
            device,
            basis,
            model,
            transition,
            harmonic,
            detunings,
            params,
        })
    }

    fn segment(&self, strategy: CarrierStrategy) -> Result<PulseSegment> {
        fc_segment(&self.device, &self.detunings, self.harmonic, strategy, self.params.envelope, false)
    }

    /// (upper, lower) dressed labels with the spectator in `s`.
    pub fn labels(&self, s: usize) -> (Vec<usize>, Vec<usize>) {
        let (k, j) = (self.params.target, self.params.level);
        let mut hi = vec![0, 0, 0];
        hi[k] = j + 1;
        hi[1 - k] = s;
        let mut lo = hi.clone();
        lo[k] = j;
        lo[2] = 1;
        (hi, lo)
    }

    /// Dressed-frame gate over [hi₀, lo₀, hi₁, lo₁] for a given carrier.
    pub fn gate(&self, carrier: f64, cfg: IntegratorConfig) -> Result<SidebandGate> {
        let mut seg = self.segment(CarrierStrategy::ResonantOnGround)?;
        seg.carrier = carrier;
        let sched = PulseSchedule::new(vec![seg])?;
        let cal = DriveCalibration { dipole_scale: 1.0, drag_flux: 0.0, drag_dipole: 0.0 };
        let drive = ScheduledDrive::new(&self.device, &sched, cal)?;
        let prop = Propagator::new(&drive, cfg)?;
        let states: Vec<Vec<usize>> = (0..2)
            .flat_map(|s| {
                let (hi, lo) = self.labels(s);
                [hi, lo]
            })
            .collect();
        let env = &self.params.envelope;
        let g = extract_gate(&prop, &self.basis, &states, env.start(), env.end())?;
        let energies = states.iter().map(|l| self.basis.energy(l)).collect::<Result<Vec<_>>>()?;
        Ok(SidebandGate {
            carrier,
            matrix: g.matrix,
            leakage: g.leakage,
            energies,
            duration: env.two_tau,
        })
    }

    pub fn carrier_for(&self, strategy: CarrierStrategy) -> Result<f64> {
        Ok(self.segment(strategy)?.carrier)
    }

    /// Carrier where both spectator states transfer equally, by bisection.
    pub fn balanced_carrier(&self, cfg: IntegratorConfig) -> Result<f64> {
        let c0 = self.carrier_for(CarrierStrategy::ResonantOnGround)?;
        let cm = self.carrier_for(CarrierStrategy::Midpoint)?;
        let gap = (cm - c0).abs().max(1e-5);
        let imbalance = |c: f64| -> Result<f64> {
            let t = self.gate(c, cfg)?.transfers();
            Ok(0.5 * (t[0][0] + t[0][1]) - 0.5 * (t[1][0] + t[1][1]))
        };
        let (mut lo, mut hi) = (cm - 4.0 * gap, cm + 4.0 * gap);
        let (mut f_lo, f_hi) = (imbalance(lo)?, imbalance(hi)?);
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::Tolerance(format!(
                "no balanced carrier within {:.3} MHz of the midpoint",
                4e3 * gap
            )));
        }
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let f = imbalance(mid)?;
            if f.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Carrier maximizing the ground-spectator transfer, by golden section around the analytic resonance.
    pub fn peak_carrier(&self, cfg: IntegratorConfig) -> Result<f64> {
        let c0 = self.carrier_for(CarrierStrategy::ResonantOnGround)?;
        let width = PEAK_WINDOW;
        let (c, _) = crate::calibrate::golden_max(c0 - width, c0 + width, |c| {
            let t = self.gate(c, cfg)?.transfers();
            Ok(0.5 * (t[0][0] + t[0][1]))
        })?;
        Ok(c)
    }

    pub fn choose_carrier(&self, choice: CarrierChoice, cfg: IntegratorConfig) -> Result<f64> {
        match choice {
            CarrierChoice::ResonantOnGround => self.carrier_for(CarrierStrategy::ResonantOnGround),
            CarrierChoice::Midpoint => self.carrier_for(CarrierStrategy::Midpoint),
            CarrierChoice::PeakOnGround => self.peak_carrier(cfg),
            CarrierChoice::Balanced => self.balanced_carrier(cfg),
        }
    }

    /// ε̄ = (1/t_p)∫ε_n(t)dt in MHz, with G and ε_m evaluated at the instantaneous amplitude.
    pub fn eps_bar(&self) -> Result<f64> {
        let env = &self.params.envelope;
        let spec = &self.device.spec.transmons[self.params.target];
        let samples = (0..=EPS_SAMPLES)
            .map(|i| {
                let t = env.start() + env.two_tau * i as f64 / EPS_SAMPLES as f64;
                let h = harmonic_decomposition(spec, env.value(t))?;
                Ok(0.5 * rabi_rate(&self.model, &h, &self.transition, self.harmonic)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(time_average(&samples))
    }

    /// ε̄ implied by a pulse of area π/2 over its support, ε̄·t_p = π/2, in MHz.
    pub fn eps_bar_from_area(&self) -> f64 {
        1e3 / (4.0 * self.params.envelope.two_tau)
    }

    /// Splitting of the two spectator-conditioned resonances, MHz (excited minus ground).
    pub fn spectator_splitting(&self) -> f64 {
        1e3 * (self.detunings.by_spectator[1] - self.detunings.by_spectator[0])
    }
}

const BISECTIONS: usize = 24;
/// Half-width (GHz) of the carrier search around the analytic resonance.
const PEAK_WINDOW: f64 = 0.01;
const EPS_SAMPLES: usize = 400;

#[derive(Clone, Debug)]
pub struct SidebandGate {
    pub carrier: f64,
    /// Dressed-frame amplitudes over [hi₀, lo₀, hi₁, lo₁].
    pub matrix: CMat,
    pub leakage: Vec<f64>,
    /// Dressed energies (rad/ns) of the same states.
    pub energies: Vec<f64>,
    pub duration: f64,
}

impl SidebandGate {
    /// [s][0] = P(hi → lo), [s][1] = P(lo → hi).
    pub fn transfers(&self) -> [[f64; 2]; 2] {
        let p = |a: usize, b: usize| self.matrix[[a, b]].norm_sqr();
        [[p(1, 0), p(0, 1)], [p(3, 2), p(2, 3)]]
    }

    /// |tr(U†V)/2|² between the spectator-ground gate U and spectator-excited gate V, each in its own dressed frame.
    pub fn spectator_gate_fidelity(&self) -> f64 {
        let mut tr = C64::new(0.0, 0.0);
        for a in 0..2 {
            for b in 0..2 {
                tr += self.matrix[[a, b]].conj() * self.matrix[[2 + a, 2 + b]];
            }
        }
        (tr / 2.0).norm_sqr()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SidebandPiReport {
    pub carrier_ghz: f64,
    pub carrier_choice: CarrierChoice,
    pub harmonic: usize,
    /// [spectator][direction]: P(|j+1;0⟩→|j;1⟩), P(|j;1⟩→|j+1;0⟩).
    pub transfers: [[f64; 2]; 2],
    pub min_transfer: f64,
    pub leakage: Vec<f64>,
    pub midpoint_carrier_ghz: f64,
    pub midpoint_transfers: [[f64; 2]; 2],
    pub conditioned_detunings_ghz: Vec<f64>,
    pub spectator_splitting_mhz: f64,
    /// From ε̄·t_p = π/2, the premise of the analytic transfer formula.
    pub eps_bar_mhz: f64,
    /// Time average of the dispersive-model ε_n(t) over the pulse.
    pub eps_bar_model_mhz: f64,
    pub delta_over_eps: f64,
    pub analytic_transfer: f64,
    pub analytic_transfer_model: f64,
}

pub fn sideband_pi(device: Device, params: SidebandParams, cfg: IntegratorConfig) -> Result<SidebandPiReport> {
    let choice = params.carrier;
    let setup = SidebandSetup::new(device, params)?;
    let carrier = setup.choose_carrier(choice, cfg)?;
    let gate = setup.gate(carrier, cfg)?;
    let midpoint_carrier = setup.carrier_for(CarrierStrategy::Midpoint)?;
    let midpoint = setup.gate(midpoint_carrier, cfg)?;
    let transfers = gate.transfers();
    let delta = setup.spectator_splitting();
    let eps_bar = setup.eps_bar_from_area();
    let eps_model = setup.eps_bar()?;
    Ok(SidebandPiReport {
        carrier_ghz: carrier,
        carrier_choice: choice,
        harmonic: setup.harmonic,
        transfers,
        min_transfer: transfers.iter().flatten().cloned().fold(f64::INFINITY, f64::min),
        leakage: gate.leakage.clone(),
        midpoint_carrier_ghz: midpoint_carrier,
        midpoint_transfers: midpoint.transfers(),
        conditioned_detunings_ghz: setup.detunings.by_spectator.clone(),
        spectator_splitting_mhz: delta,
        eps_bar_mhz: eps_bar,
        eps_bar_model_mhz: eps_model,
        delta_over_eps: delta.abs() / eps_bar,
        analytic_transfer: target_population(eps_bar, delta),
        analytic_transfer_model: target_population(eps_model, delta),
    })
}

pub const SIDEBAND_COLUMNS: &[&str] = &["spectator", "p_upper_to_lower", "p_lower_to_upper", "analytic_transfer"];

pub fn sideband_pi_point(p: &Point, cfg: IntegratorConfig) -> Result<PointOutput> {
    let params: SidebandParams = params_of(p)?;
    let r = sideband_pi(Device::new(p.device.clone())?, params, cfg)?;
    let rows = (0..2)
        .map(|s| vec![s as f64, r.transfers[s][0], r.transfers[s][1], r.analytic_transfer])
        .collect();
    Ok(PointOutput {
        rows,
        summary: serde_json::to_value(&r)?,
        warnings: Vec::new(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StarkErrorReport {
    pub spectator_splitting_mhz: f64,
    /// From ε̄·t_p = π/2.
    pub eps_bar_mhz: f64,
    pub eps_bar_model_mhz: f64,
    pub delta_over_eps: f64,
    /// 1 − F̄ of the small-δ gate-fidelity form.
    pub analytic_error: f64,
    /// 1 − P_t.
    pub analytic_transfer_error: f64,
    /// 1 − F̄ between the simulated gates with the spectator in 0 and in 1.
    pub numeric_error: f64,
    /// 1 − smallest simulated transfer with the spectator excited.
    pub numeric_transfer_error: f64,
    pub carrier_ghz: f64,
}

pub fn stark_error(device: Device, params: SidebandParams, cfg: IntegratorConfig) -> Result<StarkErrorReport> {
    let choice = params.carrier;
    let setup = SidebandSetup::new(device, params)?;
    let carrier = setup.choose_carrier(choice, cfg)?;
    let gate = setup.gate(carrier, cfg)?;
    let delta = setup.spectator_splitting();
    let eps_bar = setup.eps_bar_from_area();
    let eps_model = setup.eps_bar()?;
    let analytic = gate_fidelity_analytic(eps_bar, delta, 0.0)?;
    let f = gate.spectator_gate_fidelity();
    let t = gate.transfers();
    Ok(StarkErrorReport {
        spectator_splitting_mhz: delta,
        eps_bar_mhz: eps_bar,
        eps_bar_model_mhz: eps_model,
        delta_over_eps: delta.abs() / eps_bar,
        analytic_error: 1.0 - analytic.f_simple_avg,
        analytic_transfer_error: 1.0 - target_population(eps_bar, delta),
        numeric_error: 1.0 - (2.0 * f + 1.0) / 3.0,
        numeric_transfer_error: 1.0 - t[1][0].min(t[1][1]),
        carrier_ghz: carrier,
    })
}

pub const STARK_COLUMNS: &[&str] = &[
    "spectator_splitting_mhz",
    "eps_bar_mhz",
    "eps_bar_model_mhz",
    "delta_over_eps",
    "analytic_error",
    "analytic_transfer_error",
    "numeric_error",
    "numeric_transfer_error",
];

pub fn stark_error_point(p: &Point, cfg: IntegratorConfig) -> Result<PointOutput> {
    let params: SidebandParams = params_of(p)?;
    let r = stark_error(Device::new(p.device.clone())?, params, cfg)?;
    Ok(PointOutput {
        rows: vec![vec![
            r.spectator_splitting_mhz,
            r.eps_bar_mhz,
            r.eps_bar_model_mhz,
            r.delta_over_eps,
            r.analytic_error,
            r.analytic_transfer_error,
            r.numeric_error,
            r.numeric_transfer_error,
        ]],
        summary: serde_json::to_value(&r)?,
        warnings: Vec::new(),
    })
}
