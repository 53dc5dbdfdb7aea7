//! Per-pulse calibration of drive scales against single-pulse population targets.
//!
//! Each scale is tuned on its own pulse in isolation, never on a sequence-level
//! figure of merit.

use serde::Serialize;

use crate::device::Device;
use crate::error::{Error, Result};
use crate::evolve::{extract_gate, IntegratorConfig, Propagator, ScheduledDrive};
use crate::hilbert::DressedBasis;
use crate::pulses::{DriveCalibration, PulseKind, PulseSchedule, PulseSegment};

/// Dressed input → expected dressed output.
pub type Mapping = (Vec<usize>, Vec<usize>);

/// Mean population reaching the expected output for one isolated segment.
pub fn pulse_score(device: &Device, basis: &DressedBasis, segment: &PulseSegment, cal: DriveCalibration, maps: &[Mapping], cfg: IntegratorConfig) -> Result<f64> {
    if maps.is_empty() {
        return Err(Error::Domain("no calibration targets".into()));
    }
    let sched = PulseSchedule::new(vec![segment.clone()])?;
    let drive = ScheduledDrive::new(device, &sched, cal)?;
    let prop = Propagator::new(&drive, cfg)?;
    let mut states: Vec<Vec<usize>> = Vec::new();
    for (a, b) in maps {
        for s in [a, b] {
            if !states.contains(s) {
                states.push(s.clone());
            }
        }
    }
    let g = extract_gate(&prop, basis, &states, 0.0, sched.duration)?;
    let idx = |s: &Vec<usize>| states.iter().position(|x| x == s).expect("collected above");
    Ok(maps.iter().map(|(a, b)| g.matrix[[idx(b), idx(a)]].norm_sqr()).sum::<f64>() / maps.len() as f64)
}

const GOLDEN_ITERS: usize = 28;

/// Maximizes a unimodal function on [lo, hi] by golden-section search.
pub fn golden_max(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        }
    }
    Ok(if f1 > f2 { (x1, f1) } else { (x2, f2) })
}

/// Targets for a 1↔2 π-pulse on transmon `k` of a two-transmon device: swap 1 and 2, leave 0 alone.
pub fn dipole_targets(k: usize) -> Vec<Mapping> {
    let at = |level: usize| {
        let mut v = vec![0, 0, 0];
        v[k] = level;
        v
    };
    vec![(at(1), at(2)), (at(2), at(1)), (at(0), at(0))]
}

/// Targets for a red sideband on level j of transmon `k`, vacuum ↔ one photon, with the lower states left alone.
pub fn sideband_targets(k: usize, j: usize) -> Vec<Mapping> {
    let at = |level: usize, n: usize| {
        let mut v = vec![0, 0, n];
        v[k] = level;
        v
    };
    let mut maps = vec![(at(j + 1, 0), at(j, 1)), (at(j, 1), at(j + 1, 0))];
    if j > 0 {
        maps.push((at(j, 0), at(j, 0)));
        maps.push((at(0, 1), at(0, 1)));
    }
    maps.push((at(0, 0), at(0, 0)));
    maps
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub calibration: DriveCalibration,
    /// Score of the dipole pulse with all scales at their defaults (1, 0).
    pub dipole_score_uncalibrated: f64,
    pub dipole_score: f64,
    pub flux_score_without_drag: Option<f64>,
    pub flux_score: Option<f64>,
}

const SCALE_RANGE: (f64, f64) = (0.8, 1.2);
const DRAG_RANGE: (f64, f64) = (-1.0, 1.0);
const PASSES: usize = 2;

/// Calibrates the dipole amplitude and DRAG scale on the first dipole segment and the flux DRAG scale on the first DRAG flux segment.
pub fn calibrate_schedule(device: &Device, schedule: &PulseSchedule, cfg: IntegratorConfig) -> Result<CalibrationReport> {
    let basis = DressedBasis::new(&device.static_hamiltonian()?, 0.5)?;
    let mut cal = DriveCalibration {
        dipole_scale: 1.0,
        drag_flux: 0.0,
        drag_dipole: 0.0,
    };
    let mut report = CalibrationReport {
        calibration: cal,
        dipole_score_uncalibrated: f64::NAN,
        dipole_score: f64::NAN,
        flux_score_without_drag: None,
        flux_score: None,
    };
    if let Some(seg) = schedule.segments.iter().find(|s| s.kind == PulseKind::Dipole) {
        let maps = dipole_targets(seg.target);
        report.dipole_score_uncalibrated = pulse_score(device, &basis, seg, cal, &maps, cfg)?;
        let mut best = report.dipole_score_uncalibrated;
        for _ in 0..PASSES {
            let (s, _) = golden_max(SCALE_RANGE.0, SCALE_RANGE.1, |s| {
                pulse_score(device, &basis, seg, DriveCalibration { dipole_scale: s, ..cal }, &maps, cfg)
            })?;
            cal.dipole_scale = s;
            if seg.drag {
                let (d, _) = golden_max(DRAG_RANGE.0, DRAG_RANGE.1, |d| {
                    pulse_score(device, &basis, seg, DriveCalibration { drag_dipole: d, ..cal }, &maps, cfg)
                })?;
                cal.drag_dipole = d;
            }
            best = pulse_score(device, &basis, seg, cal, &maps, cfg)?;
        }
        report.dipole_score = best;
    }
    if let Some(seg) = schedule.segments.iter().find(|s| s.kind == PulseKind::Flux && s.drag) {
        let maps = sideband_targets(seg.target, infer_level(device, seg)?);
        let off = pulse_score(device, &basis, seg, cal, &maps, cfg)?;
        let (d, on) = golden_max(DRAG_RANGE.0, DRAG_RANGE.1, |d| {
            pulse_score(device, &basis, seg, DriveCalibration { drag_flux: d, ..cal }, &maps, cfg)
        })?;
        // keep DRAG off unless it actually helps the isolated pulse
        if on > off {
            cal.drag_flux = d;
        }
        report.flux_score_without_drag = Some(off);
        report.flux_score = Some(on.max(off));
    }
    report.calibration = cal;
    Ok(report)
}

/// Transmon level j whose red sideband is nearest the segment's carrier.
fn infer_level(device: &Device, seg: &PulseSegment) -> Result<usize> {
    let t = &device.transmons[seg.target];
    (0..t.spec.levels - 1)
        .min_by(|&a, &b| {
            let da = ((device.spec.omega_r - t.splitting(a)).abs() - seg.carrier).abs();
            let db = ((device.spec.omega_r - t.splitting(b)).abs() - seg.carrier).abs();
            da.total_cmp(&db)
        })
        .ok_or(Error::InvalidDimension(t.spec.levels))
}
