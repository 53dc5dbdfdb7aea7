//! Gaussian drive segments, DRAG quadratures, carrier selection and sequence assembly.
//!
//! Flux amplitudes share the units of the static flux offsets; dipole
//! amplitudes are in MHz. Carriers are ordinary frequencies in GHz and the
//! drive phase enters as cos(2π·carrier·t + phase) with absolute time t.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::device::{harmonic_decomposition, Device};
use crate::dispersive::MlsDispersiveModel;
use crate::error::{Error, Result};
use crate::hilbert::{embed, ladder, DressedBasis, Operator};
use crate::linalg::{c, TWO_PI};
use crate::sideband_model::{dressed_detuning, spectator_shift, Sideband, Transition};

/// Truncated Gaussian A·exp(−(t−μ)²/2σ²) on |t−μ| ≤ τ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Full support 2τ (ns).
    pub two_tau: f64,
}

impl Envelope {
    pub fn new(amplitude: f64, mu: f64, sigma: f64, two_tau: f64) -> Result<Self> {
        let e = Self {
            amplitude,
            mu,
            sigma,
            two_tau,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.two_tau > 0.0) || !self.mu.is_finite() || !self.amplitude.is_finite() {
            return Err(Error::Schedule(format!(
                "envelope needs finite A and mu, sigma > 0 and two_tau > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        0.5 * self.two_tau
    }

    pub fn start(&self) -> f64 {
        self.mu - self.tau()
    }

    pub fn end(&self) -> f64 {
        self.mu + self.tau()
    }

    pub fn contains(&self, t: f64) -> bool {
        (t - self.mu).abs() <= self.tau()
    }

    pub fn value(&self, t: f64) -> f64 {
        if !self.contains(t) {
            return 0.0;
        }
        let u = t - self.mu;
        self.amplitude * (-u * u / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Exact time derivative inside the support, zero outside.
    pub fn derivative(&self, t: f64) -> f64 {
        -(t - self.mu) / (self.sigma * self.sigma) * self.value(t)
    }

    /// Integral of the truncated envelope.
    pub fn area(&self) -> f64 {
        let s2 = std::f64::consts::SQRT_2 * self.sigma;
        self.amplitude * s2 * std::f64::consts::PI.sqrt() * erf(self.tau() / s2)
    }
}

/// Half-area offset a = √2σ·erf⁻¹[½ erf(τ/√2σ)].
pub fn half_area_offset(env: &Envelope) -> f64 {
    let s2 = std::f64::consts::SQRT_2 * env.sigma;
    s2 * erf_inv(0.5 * erf(env.tau() / s2))
}

/// Amplitude Δφ′ at which the geometric shift is evaluated for a Gaussian flux pulse.
pub fn effective_amplitude(env: &Envelope) -> f64 {
    let a = half_area_offset(env);
    env.amplitude * (-a * a / (2.0 * env.sigma * env.sigma)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    /// Flux modulation of the target's E_J.
    Flux,
    /// Direct charge drive on the target transmon.
    Dipole,
}

/// One drive segment. `target` is a zero-based transmon index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSegment {
    pub kind: PulseKind,
    pub target: usize,
    /// Carrier frequency (GHz).
    pub carrier: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(flatten)]
    pub envelope: Envelope,
    #[serde(default)]
    pub drag: bool,
}

/// Scales applied when turning segments into Hamiltonian terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveCalibration {
    /// Multiplies the dipole amplitude.
    #[serde(default = "one")]
    pub dipole_scale: f64,
    /// DRAG scale for flux segments.
    #[serde(default = "one")]
    pub drag_flux: f64,
    /// DRAG scale for dipole segments.
    #[serde(default = "one")]
    pub drag_dipole: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DriveCalibration {
    fn default() -> Self {
        Self {
            dipole_scale: 1.0,
            drag_flux: 1.0,
            drag_dipole: 1.0,
        }
    }
}

impl PulseSegment {
    /// Quadrature amplitude scale·(dΛ/dt)/Δ_anh, Δ_anh in rad/ns.
    pub fn drag_quadrature(&self, t: f64, anharmonicity: f64, scale: f64) -> f64 {
        if !self.drag || anharmonicity == 0.0 {
            return 0.0;
        }
        scale * self.envelope.derivative(t) / anharmonicity
    }

    /// Λ(t)cos(ωt + phase) + q(t)sin(ωt + phase), the drive waveform before unit conversion.
    pub fn waveform(&self, t: f64, anharmonicity: f64, drag_scale: f64) -> f64 {
        let e = self.envelope.value(t);
        if e == 0.0 {
            return 0.0;
        }
        let arg = TWO_PI * self.carrier * t + self.phase;
        let q = self.drag_quadrature(t, anharmonicity, drag_scale);
        e * arg.cos() + q * arg.sin()
    }
}

/// Time-ordered, non-overlapping segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub segments: Vec<PulseSegment>,
    /// Total duration (ns), at least the end of the last segment.
    pub duration: f64,
}

const OVERLAP_TOL: f64 = 1e-9;

impl PulseSchedule {
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self> {
        let duration = segments.iter().map(|s| s.envelope.end()).fold(0.0, f64::max);
        let s = Self { segments, duration };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.segments {
            s.envelope.validate()?;
            if !(s.carrier >= 0.0) || !s.phase.is_finite() {
                return Err(Error::Schedule(format!("bad carrier or phase in {s:?}")));
            }
            if s.envelope.start() < -OVERLAP_TOL {
                return Err(Error::Schedule(format!("segment starts before t = 0: {}", s.envelope.start())));
            }
        }
        for w in self.segments.windows(2) {
            if w[1].envelope.start() < w[0].envelope.end() - OVERLAP_TOL {
                return Err(Error::Schedule(format!(
                    "segments overlap or are out of order: [{}, {}] then [{}, {}]",
                    w[0].envelope.start(),
                    w[0].envelope.end(),
                    w[1].envelope.start(),
                    w[1].envelope.end()
                )));
            }
        }
        let last = self.segments.last().map_or(0.0, |s| s.envelope.end());
        if self.duration < last - OVERLAP_TOL {
            return Err(Error::Schedule(format!("duration {} ends before the last segment", self.duration)));
        }
        Ok(())
    }

    pub fn check_targets(&self, device: &Device) -> Result<()> {
        let n = device.transmons.len();
        match self.segments.iter().find(|s| s.target >= n) {
            Some(s) => Err(Error::SlotOutOfRange { slot: s.target, len: n }),
            None => Ok(()),
        }
    }

    /// Segment active at `t`, if any.
    pub fn active(&self, t: f64) -> Option<&PulseSegment> {
        self.segments.iter().find(|s| s.envelope.contains(t))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sched: Self = serde_json::from_str(s)?;
        sched.validate()?;
        Ok(sched)
    }
}

/// Local anharmonicity (ω12 − ω01) of transmon `k` in rad/ns, zero for two-level truncations.
pub fn anharmonicity_rad(device: &Device, k: usize) -> f64 {
    device.transmons[k].anharmonicity(0).map_or(0.0, |a| TWO_PI * a)
}

/// DRAG anharmonicity for a segment: the 1↔2 drive of a dipole pulse leaks to 0↔1 across ω12 − ω01 as well.
fn segment_anharmonicity(device: &Device, seg: &PulseSegment) -> f64 {
    anharmonicity_rad(device, seg.target)
}

/// Instantaneous fluxes and dipole coefficients (rad/ns, multiplying b + b†) at `t`.
pub fn drive_values(schedule: &PulseSchedule, device: &Device, cal: &DriveCalibration, t: f64, fluxes: &mut [f64], dipole: &mut [f64]) {
    for (f, tm) in fluxes.iter_mut().zip(&device.transmons) {
        *f = tm.spec.phi;
    }
    dipole.iter_mut().for_each(|d| *d = 0.0);
    for seg in &schedule.segments {
        if !seg.envelope.contains(t) {
            continue;
        }
        let anh = segment_anharmonicity(device, seg);
        match seg.kind {
            PulseKind::Flux => fluxes[seg.target] += seg.waveform(t, anh, cal.drag_flux),
            PulseKind::Dipole => {
                dipole[seg.target] += 2.0 * TWO_PI * 1e-3 * cal.dipole_scale * seg.waveform(t, anh, cal.drag_dipole)
            }
        }
    }
}

/// Additive time-dependent term H(t) − H_static in rad/ns.
pub fn drive_hamiltonian(schedule: &PulseSchedule, t: f64, device: &Device, cal: &DriveCalibration) -> Result<Operator> {
    schedule.check_targets(device)?;
    let nq = device.transmons.len();
    let (mut fl, mut dip) = (vec![0.0; nq], vec![0.0; nq]);
    drive_values(schedule, device, cal, t, &mut fl, &mut dip);
    let dims = device.dims().to_vec();
    let order = device.order();
    let (mut d1, mut d0) = (vec![0.0; order], vec![0.0; order]);
    device.transmon_diagonal(&fl, &mut d1)?;
    device.transmon_diagonal(&device.static_fluxes(), &mut d0)?;
    let diff: Vec<f64> = d1.iter().zip(&d0).map(|(a, b)| a - b).collect();
    let mut h = Operator::from_diagonal(&diff, &dims)?;
    for (k, &cx) in dip.iter().enumerate() {
        if cx != 0.0 {
            let b = ladder(dims[k])?;
            let x = embed(&b.add(&b.dagger())?, k, &dims)?;
            h = h.add(&x.scale(c(cx)))?;
        }
    }
    Ok(h)
}

/// How the carrier sits relative to the spectator-conditioned resonances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierStrategy {
    /// Resonant with the spectator in its ground state.
    ResonantOnGround,
    /// Midway between the two spectator-conditioned resonances.
    Midpoint,
}

/// Red-sideband detunings (GHz, without G) conditioned on each computational state of the spectator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionedDetunings {
    pub transition: Transition,
    /// Index s holds the detuning with the spectator in level s.
    pub by_spectator: Vec<f64>,
}

impl ConditionedDetunings {
    /// From the many-level dispersive model.
    pub fn from_model(model: &MlsDispersiveModel, tr: Transition) -> Result<Self> {
        let base = dressed_detuning(model, &tr)?;
        let by_spectator = match model.transmons.len() {
            1 => vec![base],
            2 => {
                let other = 1 - tr.transmon;
                (0..2)
                    .map(|s| Ok(base + spectator_shift(model, &tr, other, s)?))
                    .collect::<Result<_>>()?
            }
            n => {
                return Err(Error::Domain(format!(
                    "spectator conditioning is defined for two transmons, got {n}"
                )))
            }
        };
        Ok(Self { transition: tr, by_spectator })
    }

    /// From the exact dressed spectrum of the static Hamiltonian.
    pub fn from_spectrum(device: &Device, basis: &DressedBasis, tr: Transition) -> Result<Self> {
        if tr.sideband != Sideband::Red {
            return Err(Error::Domain("exact conditioning is implemented for red sidebands".into()));
        }
        let nq = device.transmons.len();
        if tr.transmon >= nq {
            return Err(Error::SlotOutOfRange { slot: tr.transmon, len: nq });
        }
        if nq > 2 {
            return Err(Error::Domain(format!(
                "spectator conditioning is defined for two transmons, got {nq}"
            )));
        }
        let spectators: Vec<usize> = if nq == 1 { vec![0] } else { vec![0, 1] };
        let by_spectator = spectators
            .into_iter()
            .map(|s| {
                let mut hi = vec![0usize; nq + 1];
                hi[tr.transmon] = tr.level + 1;
                hi[nq] = tr.photons;
                if nq == 2 {
                    hi[1 - tr.transmon] = s;
                }
                let mut lo = hi.clone();
                lo[tr.transmon] = tr.level;
                lo[nq] = tr.photons + 1;
                Ok((basis.energy(&hi)? - basis.energy(&lo)?) / TWO_PI)
            })
            .collect::<Result<_>>()?;
        Ok(Self { transition: tr, by_spectator })
    }

    fn pick(&self, strategy: CarrierStrategy) -> Result<f64> {
        match strategy {
            CarrierStrategy::ResonantOnGround => Ok(self.by_spectator[0]),
            CarrierStrategy::Midpoint => match self.by_spectator.len() {
                1 => Ok(self.by_spectator[0]),
                2 => Ok(0.5 * (self.by_spectator[0] + self.by_spectator[1])),
                n => Err(Error::Domain(format!("midpoint is undefined for {n} spectator states"))),
            },
        }
    }
}

/// Flux segment on the red sideband, carrier |Δ̃ + G(Δφ′)|/m.
pub fn fc_segment(device: &Device, det: &ConditionedDetunings, m: usize, strategy: CarrierStrategy, envelope: Envelope, drag: bool) -> Result<PulseSegment> {
    envelope.validate()?;
    if !(1..=4).contains(&m) {
        return Err(Error::Domain(format!("harmonic m = {m} outside 1..=4")));
    }
    let target = det.transition.transmon;
    let spec = &device
        .transmons
        .get(target)
        .ok_or(Error::SlotOutOfRange { slot: target, len: device.transmons.len() })?
        .spec;
    let g = harmonic_decomposition(spec, effective_amplitude(&envelope))?.g_shift;
    Ok(PulseSegment {
        kind: PulseKind::Flux,
        target,
        carrier: ((det.pick(strategy)? + g) / m as f64).abs(),
        phase: 0.0,
        envelope,
        drag,
    })
}

/// Timings of the entangling sequence: (A, μ, σ, 2τ) per segment.
pub const UENT_TIMINGS: [(f64, f64, f64, f64); 5] = [
    (0.07308, 16.0, 7.0, 28.0),
    (0.02520, 46.5, 6.25, 25.0),
    (51.1412, 65.96, 1.48, 5.92),
    (0.02520, 85.42, 6.25, 25.0),
    (0.07308, 115.92, 7.0, 28.0),
];

/// Where sideband resonances for the entangling sequence come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResonanceSource {
    /// Exact dressed spectrum of the static Hamiltonian.
    Spectrum,
    /// Many-level dispersive model.
    Dispersive,
}

/// R01⁽¹⁾ R12⁽²⁾ σx,12⁽²⁾ R12⁽²⁾ R01⁽¹⁾, using the default segment timings.
///
/// R01 sits at the spectator midpoint, R12 on the ground-spectator resonance,
/// and the dipole pulse on the dressed 1↔2 splitting of transmon 2.
pub fn build_uent_schedule(device: &Device, source: ResonanceSource) -> Result<PulseSchedule> {
    if device.transmons.len() != 2 {
        return Err(Error::Domain("the entangling sequence needs exactly two transmons".into()));
    }
    if device.spec.transmons[1].levels < 3 {
        return Err(Error::InvalidDimension(device.spec.transmons[1].levels));
    }
    let basis = DressedBasis::new(&device.static_hamiltonian()?, 0.5)?;
    let r01 = Transition::red(0, 0, 0);
    let r12 = Transition::red(1, 1, 0);
    let (d01, d12) = match source {
        ResonanceSource::Spectrum => (
            ConditionedDetunings::from_spectrum(device, &basis, r01)?,
            ConditionedDetunings::from_spectrum(device, &basis, r12)?,
        ),
        ResonanceSource::Dispersive => {
            let model = crate::dispersive::mls_model(device)?;
            (
                ConditionedDetunings::from_model(&model, r01)?,
                ConditionedDetunings::from_model(&model, r12)?,
            )
        }
    };
    let wx = (basis.energy(&[0, 2, 0])? - basis.energy(&[0, 1, 0])?) / TWO_PI;
    let env = |i: usize| {
        let (a, mu, s, tt) = UENT_TIMINGS[i];
        Envelope::new(a, mu, s, tt)
    };
    let segments = vec![
        fc_segment(device, &d01, 1, CarrierStrategy::Midpoint, env(0)?, false)?,
        fc_segment(device, &d12, 1, CarrierStrategy::ResonantOnGround, env(1)?, true)?,
        PulseSegment {
            kind: PulseKind::Dipole,
            target: 1,
            carrier: wx,
            phase: 0.0,
            envelope: env(2)?,
            drag: true,
        },
        fc_segment(device, &d12, 1, CarrierStrategy::ResonantOnGround, env(3)?, true)?,
        fc_segment(device, &d01, 1, CarrierStrategy::Midpoint, env(4)?, false)?,
    ];
    PulseSchedule::new(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Solves ∫₀^a g = ½∫₀^τ g by bisection on a trapezoid quadrature.
    fn half_area_numeric(sigma: f64, tau: f64) -> f64 {
        let g = |u: f64| (-u * u / (2.0 * sigma * sigma)).exp();
        let integ = |x: f64| {
            let n = 4000;
            let h = x / n as f64;
            (0..=n)
                .map(|k| {
                    let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                    w * g(k as f64 * h)
                })
                .sum::<f64>()
                * h
        };
        let target = 0.5 * integ(tau);
        let (mut lo, mut hi) = (0.0, tau);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if integ(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn effective_amplitude_matches_equal_area_solve() {
        for (sigma, tau) in [(7.0, 14.0), (6.25, 12.5), (6.6873, 13.3746), (1.0, 0.3), (2.0, 50.0)] {
            let env = Envelope::new(0.1, 0.0, sigma, 2.0 * tau).unwrap();
            let a = half_area_numeric(sigma, tau);
            assert!((half_area_offset(&env) - a).abs() < 1e-6 * sigma, "σ={sigma} τ={tau}");
        }
    }

    #[test]
    fn untruncated_limit() {
        let env = Envelope::new(1.0, 0.0, 3.0, 1e3).unwrap();
        let x = erf_inv(0.5);
        assert!((effective_amplitude(&env) - (-x * x).exp()).abs() < 1e-12);
    }

    #[test]
    fn narrow_support_tends_to_half_width() {
        // for τ ≪ σ the envelope is flat, so a → τ/2 and Δφ′ → A
        let env = Envelope::new(1.0, 0.0, 100.0, 0.02).unwrap();
        assert!((half_area_offset(&env) - 0.005).abs() < 1e-8);
        assert!((effective_amplitude(&env) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn envelope_truncates_sharply() {
        let env = Envelope::new(2.0, 10.0, 3.0, 12.0).unwrap();
        assert_eq!(env.value(10.0), 2.0);
        assert!(env.value(16.0) > 0.0);
        assert_eq!(env.value(16.0 + 1e-9), 0.0);
        assert_eq!(env.derivative(3.0), 0.0);
    }

    #[test]
    fn overlapping_segments_rejected() {
        let seg = |mu| PulseSegment {
            kind: PulseKind::Flux,
            target: 0,
            carrier: 1.0,
            phase: 0.0,
            envelope: Envelope::new(0.05, mu, 2.0, 8.0).unwrap(),
            drag: false,
        };
        assert!(PulseSchedule::new(vec![seg(4.0), seg(12.0)]).is_ok());
        assert!(matches!(PulseSchedule::new(vec![seg(4.0), seg(10.0)]), Err(Error::Schedule(_))));
        assert!(matches!(PulseSchedule::new(vec![seg(12.0), seg(4.0)]), Err(Error::Schedule(_))));
    }

    #[test]
    fn json_uses_table_field_names() {
        let seg = PulseSegment {
            kind: PulseKind::Dipole,
            target: 1,
            carrier: 9.5,
            phase: 0.0,
            envelope: Envelope::new(51.1412, 65.96, 1.48, 5.92).unwrap(),
            drag: true,
        };
        let v: serde_json::Value = serde_json::to_value(&seg).unwrap();
        for k in ["A", "mu", "sigma", "two_tau", "kind", "target", "carrier", "phase", "drag"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
        let back: PulseSegment = serde_json::from_value(v).unwrap();
        assert_eq!(back, seg);
    }
}
