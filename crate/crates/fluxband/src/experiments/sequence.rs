//! The entangling sequence: gate extraction, phase fit, Bell table, Choi-evolution fidelity with and without loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{params_of, Point, PointOutput};
use crate::calibrate::{calibrate_schedule, CalibrationReport};
use crate::device::Device;
use crate::dispersive::mls_model;
use crate::error::{Error, Result};
use crate::evolve::{evolve_density_blocks, extract_gate, CollapseSet, IntegratorConfig, Propagator, ScheduledDrive};
use crate::hilbert::{basis_index, DressedBasis};
use crate::linalg::{dagger, CMat, C64, TWO_PI};
use crate::metrics::{
    assemble_cnot, bell_populations, channel_fidelity, cnot, cnot_equivalence, fit_phases, gate_fidelity, leaky_average_fidelity,
    u_ent, ChannelFidelity, BELL_PATTERN,
};
use crate::pulses::{build_uent_schedule, DriveCalibration, PulseSchedule, ResonanceSource};

/// Computational states |q1 q2; 0⟩ in the order |00⟩, |10⟩, |01⟩, |11⟩.
pub fn computational_labels() -> Vec<Vec<usize>> {
    vec![vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0], vec![1, 1, 0]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnotParams {
    pub source: ResonanceSource,
    /// Fixed drive scales; calibrated per pulse when absent.
    pub calibration: Option<DriveCalibration>,
    /// Also fit phases under alternative carrier origins and frames.
    pub frame_scan: bool,
}

impl Default for CnotParams {
    fn default() -> Self {
        Self {
            source: ResonanceSource::Dispersive,
            calibration: None,
            frame_scan: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KappaParams {
    pub source: ResonanceSource,
    pub calibration: Option<DriveCalibration>,
}

impl Default for KappaParams {
    fn default() -> Self {
        Self {
            source: ResonanceSource::Dispersive,
            calibration: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {}

/// Device, schedule and drive scales of a ready-to-run sequence.
pub struct Sequence {
    pub device: Device,
    pub schedule: PulseSchedule,
    pub calibration: DriveCalibration,
    pub calibration_report: Option<CalibrationReport>,
    pub basis: DressedBasis,
}

impl Sequence {
    pub fn new(device: Device, source: ResonanceSource, calibration: Option<DriveCalibration>, cfg: IntegratorConfig) -> Result<Self> {
        let schedule = build_uent_schedule(&device, source)?;
        let (calibration, calibration_report) = match calibration {
            Some(c) => (c, None),
            None => {
                let r = calibrate_schedule(&device, &schedule, cfg)?;
                (r.calibration, Some(r))
            }
        };
        let basis = DressedBasis::new(&device.static_hamiltonian()?, 0.5)?;
        Ok(Self {
            device,
            schedule,
            calibration,
            calibration_report,
            basis,
        })
    }

    /// Dressed-frame gate on the computational subspace, over [0, duration].
    pub fn gate(&self, schedule: &PulseSchedule, cfg: IntegratorConfig) -> Result<crate::evolve::GateExtraction> {
        let drive = ScheduledDrive::new(&self.device, schedule, self.calibration)?;
        let prop = Propagator::new(&drive, cfg)?;
        extract_gate(&prop, &self.basis, &computational_labels(), 0.0, schedule.duration)
    }

    /// Block unitaries of the whole sequence.
    pub fn blocks(&self, cfg: IntegratorConfig) -> Result<Vec<(f64, CMat)>> {
        let drive = ScheduledDrive::new(&self.device, &self.schedule, self.calibration)?;
        Propagator::new(&drive, cfg)?.blocks(0.0, self.schedule.duration)
    }

    /// outputs[i][j] = frame-corrected projection of Λ(|i⟩⟨j|) onto the dressed computational states.
    pub fn choi_outputs(&self, blocks: &[(f64, CMat)], collapse: &CollapseSet) -> Result<Vec<Vec<CMat>>> {
        let labels = computational_labels();
        let vecs = labels.iter().map(|l| self.basis.vector(l)).collect::<Result<Vec<_>>>()?;
        let e = labels.iter().map(|l| self.basis.energy(l)).collect::<Result<Vec<_>>>()?;
        let d = labels.len();
        let t = self.schedule.duration;
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
        let evolved: Vec<CMat> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let n = vecs[i].len();
                let mut rho = CMat::zeros((n, n));
                for a in 0..n {
                    for b in 0..n {
                        rho[[a, b]] = vecs[i][a] * vecs[j][b].conj();
                    }
                }
                let out = evolve_density_blocks(blocks, &rho, collapse);
                let mut p = CMat::zeros((d, d));
                for b in 0..d {
                    let rb = out.dot(&vecs[b]);
                    for a in 0..d {
                        let amp: C64 = vecs[a].iter().zip(rb.iter()).map(|(x, y)| x.conj() * y).sum();
                        p[[a, b]] = amp * C64::from_polar(1.0, (e[a] - e[b]) * t);
                    }
                }
                p
            })
            .collect();
        let mut outputs = vec![vec![CMat::zeros((d, d)); d]; d];
        for (&(i, j), m) in pairs.iter().zip(evolved) {
            if i != j {
                outputs[j][i] = dagger(&m.view());
            }
            outputs[i][j] = m;
        }
        Ok(outputs)
    }
}

/// Where the carrier phase is referenced and which energies define the rotating frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierOrigin {
    Absolute,
    PulseStart,
    PulseCentre,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Dressed,
    Bare,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameVariant {
    pub origin: CarrierOrigin,
    pub frame: Frame,
    pub phases: [f64; 3],
    pub fidelity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CnotReport {
    pub carriers_ghz: Vec<f64>,
    pub duration_ns: f64,
    pub calibration: DriveCalibration,
    pub calibration_report: Option<CalibrationReport>,
    pub gate_re: Vec<Vec<f64>>,
    pub gate_im: Vec<Vec<f64>>,
    pub leakage: Vec<f64>,
    pub phases: [f64; 3],
    /// |tr(U_ent(φ)†V)|²/16.
    pub process_fidelity: f64,
    /// Average fidelity of the leaky 4×4 map V against U_ent(φ).
    pub average_fidelity: f64,
    /// Dissipation-free Choi evolution against U_ent(φ).
    pub choi: ChannelFidelity,
    /// Rows: inputs (|00⟩±|01⟩, |10⟩±|11⟩)/√2; columns: Φ+, Φ−, Ψ+, Ψ−.
    pub bell: [[f64; 4]; 4],
    pub bell_diagonal: [f64; 4],
    pub cnot_angles: [f64; 3],
    pub cnot_average_fidelity: f64,
    pub frame_scan: Vec<FrameVariant>,
    pub warnings: Vec<String>,
}

fn shifted(schedule: &PulseSchedule, origin: CarrierOrigin) -> PulseSchedule {
    let mut s = schedule.clone();
    for seg in &mut s.segments {
        let t0 = match origin {
            CarrierOrigin::Absolute => 0.0,
            CarrierOrigin::PulseStart => seg.envelope.start(),
            CarrierOrigin::PulseCentre => seg.envelope.mu,
        };
        seg.phase -= TWO_PI * seg.carrier * t0;
    }
    s
}

fn to_bare_frame(seq: &Sequence, v: &CMat, t: f64) -> Result<CMat> {
    let h0 = seq.device.static_hamiltonian()?;
    let mut out = v.clone();
    for (a, l) in computational_labels().iter().enumerate() {
        let i = basis_index(seq.device.dims(), l)?;
        let shift = h0.data()[[i, i]].re - seq.basis.energy(l)?;
        out.row_mut(a).mapv_inplace(|z| z * C64::from_polar(1.0, shift * t));
    }
    Ok(out)
}

pub fn analyse_cnot(seq: &Sequence, frame_scan: bool, cfg: IntegratorConfig) -> Result<CnotReport> {
    let g = seq.gate(&seq.schedule, cfg)?;
    let v = &g.matrix;
    let fit = fit_phases(v)?;
    let target = u_ent(fit.phases);
    let blocks = seq.blocks(cfg)?;
    let choi = channel_fidelity(&seq.choi_outputs(&blocks, &CollapseSet::default())?, &target)?;
    let bell = bell_populations(v, Some(fit.phases))?;
    let assembled = assemble_cnot(v, fit.phases)?;
    let mut scan = Vec::new();
    if frame_scan {
        for origin in [CarrierOrigin::Absolute, CarrierOrigin::PulseStart, CarrierOrigin::PulseCentre] {
            let m = if origin == CarrierOrigin::Absolute {
                v.clone()
            } else {
                seq.gate(&shifted(&seq.schedule, origin), cfg)?.matrix
            };
            for frame in [Frame::Dressed, Frame::Bare] {
                let mm = match frame {
                    Frame::Dressed => m.clone(),
                    Frame::Bare => to_bare_frame(seq, &m, seq.schedule.duration)?,
                };
                let f = fit_phases(&mm)?;
                scan.push(FrameVariant {
                    origin,
                    frame,
                    phases: f.phases,
                    fidelity: f.fidelity,
                });
            }
        }
    }
    let mut warnings = g.warnings.clone();
    if !fit.degenerate.is_empty() {
        warnings.push(format!("phase fit is degenerate ({} equivalent maxima)", fit.degenerate.len()));
    }
    Ok(CnotReport {
        carriers_ghz: seq.schedule.segments.iter().map(|s| s.carrier).collect(),
        duration_ns: seq.schedule.duration,
        calibration: seq.calibration,
        calibration_report: seq.calibration_report.clone(),
        gate_re: v.rows().into_iter().map(|r| r.iter().map(|z| z.re).collect()).collect(),
        gate_im: v.rows().into_iter().map(|r| r.iter().map(|z| z.im).collect()).collect(),
        leakage: g.leakage.clone(),
        phases: fit.phases,
        process_fidelity: fit.fidelity,
        average_fidelity: leaky_average_fidelity(&target, v)?,
        choi,
        bell,
        bell_diagonal: std::array::from_fn(|a| bell[a][BELL_PATTERN[a]]),
        cnot_angles: cnot_equivalence(fit.phases),
        cnot_average_fidelity: gate_fidelity(&cnot(), &assembled)?.f_avg,
        frame_scan: scan,
        warnings,
    })
}

pub const CNOT_COLUMNS: &[&str] = &["input", "phi_plus", "phi_minus", "psi_plus", "psi_minus", "expected"];

pub fn cnot_point(p: &Point, cfg: IntegratorConfig) -> Result<PointOutput> {
    let params: CnotParams = params_of(p)?;
    let seq = Sequence::new(Device::new(p.device.clone())?, params.source, params.calibration, cfg)?;
    let r = analyse_cnot(&seq, params.frame_scan, cfg)?;
    let rows = (0..4)
        .map(|a| {
            let mut row = vec![a as f64];
            row.extend(r.bell[a]);
            row.push(BELL_PATTERN[a] as f64);
            row
        })
        .collect();
    Ok(PointOutput {
        rows,
        warnings: r.warnings.clone(),
        summary: serde_json::to_value(&r)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaReport {
    pub kappa_mhz: f64,
    pub t1_us: Vec<Option<f64>>,
    pub fidelity: ChannelFidelity,
    /// Same sequence with no loss at all.
    pub lossless: ChannelFidelity,
    pub phases: [f64; 3],
}

/// Shared part of a κ sweep: one propagation, many dissipative evolutions.
pub struct KappaSweep {
    pub sequence: Sequence,
    pub blocks: Vec<(f64, CMat)>,
    pub phases: [f64; 3],
    pub lossless: ChannelFidelity,
}

impl KappaSweep {
    pub fn new(device: Device, params: &KappaParams, cfg: IntegratorConfig) -> Result<Self> {
        let sequence = Sequence::new(device, params.source, params.calibration, cfg)?;
        let fit = fit_phases(&sequence.gate(&sequence.schedule, cfg)?.matrix)?;
        let blocks = sequence.blocks(cfg)?;
        let lossless = channel_fidelity(&sequence.choi_outputs(&blocks, &CollapseSet::default())?, &u_ent(fit.phases))?;
        Ok(Self {
            sequence,
            blocks,
            phases: fit.phases,
            lossless,
        })
    }

    pub fn at(&self, kappa_mhz: f64, t1_us: &[Option<f64>]) -> Result<KappaReport> {
        let collapse = CollapseSet::with_rates(&self.sequence.device, kappa_mhz, t1_us)?;
        let fidelity = channel_fidelity(&self.sequence.choi_outputs(&self.blocks, &collapse)?, &u_ent(self.phases))?;
        Ok(KappaReport {
            kappa_mhz,
            t1_us: t1_us.to_vec(),
            fidelity,
            lossless: self.lossless,
            phases: self.phases,
        })
    }
}

pub const KAPPA_COLUMNS: &[&str] = &["average_fidelity", "process_fidelity", "survival", "average_fidelity_standard"];

/// κ sweep sharing one set of block unitaries across points.
pub fn kappa_points(points: &[Point], cfg: IntegratorConfig) -> Vec<Result<PointOutput>> {
    let Some(first) = points.first() else {
        return Vec::new();
    };
    let shared = params_of::<KappaParams>(first).and_then(|params| {
        let mut spec = first.device.clone();
        spec.kappa = 0.0;
        spec.t1.clear();
        KappaSweep::new(Device::new(spec)?, &params, cfg)
    });
    let shared = match shared {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            return points.iter().map(|_| Err(Error::Tolerance(format!("sweep setup failed: {msg}")))).collect();
        }
    };
    points
        .par_iter()
        .map(|p| {
            let r = shared.at(p.device.kappa, &p.device.t1)?;
            Ok(PointOutput {
                rows: vec![vec![
                    r.fidelity.average,
                    r.fidelity.process,
                    r.fidelity.survival,
                    r.fidelity.average_standard,
                ]],
                summary: serde_json::to_value(&r)?,
                warnings: Vec::new(),
            })
        })
        .collect()
}

pub const REPORT_COLUMNS: &[&str] = &[
    "transmon",
    "level",
    "omega_ghz",
    "g_ghz",
    "delta_ghz",
    "sigma_ghz",
    "lambda",
    "big_lambda",
    "chi_ghz",
    "stark_ghz",
    "omega_tilde_ghz",
    "xi_ghz",
];

pub fn report_point(p: &Point, _cfg: IntegratorConfig) -> Result<PointOutput> {
    let _: ReportParams = params_of(p)?;
    let device = Device::new(p.device.clone())?;
    let model = mls_model(&device)?;
    let at = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(f64::NAN);
    let rows = model
        .transmons
        .iter()
        .enumerate()
        .flat_map(|(k, t)| {
            (0..t.levels()).map(move |i| {
                vec![
                    k as f64,
                    i as f64,
                    at(&t.omega, i),
                    at(&t.g, i),
                    at(&t.delta, i),
                    at(&t.sigma, i),
                    at(&t.lambda, i),
                    at(&t.big_lambda, i),
                    at(&t.chi, i),
                    at(&t.stark, i),
                    at(&t.omega_tilde, i),
                    at(&t.xi, i),
                ]
            })
        })
        .collect();
    Ok(PointOutput {
        rows,
        warnings: model.warnings.clone(),
        summary: serde_json::to_value(&model)?,
    })
}
