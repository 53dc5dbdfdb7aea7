//! End-to-end dynamics checks: step-size convergence, Lindblad limits, Purcell decay, DRAG.

use fluxband::device::{Device, DeviceSpec, TransmonSpec};
use fluxband::evolve::*;
use fluxband::hilbert::{DressedBasis, StateVector};
use fluxband::linalg::{dagger, frobenius, unitarity_defect, CMat};
use fluxband::pulses::{build_uent_schedule, DriveCalibration, PulseKind, PulseSchedule, ResonanceSource};

fn transmon(e_j: f64, e_c: f64, levels: usize) -> TransmonSpec {
    TransmonSpec {
        e_j,
        e_c,
        phi: 0.25,
        levels,
    }
}

fn reference_device(levels: usize) -> Device {
    Device::new(DeviceSpec {
        transmons: vec![transmon(25.0, 0.25, levels), transmon(61.0, 0.3, levels)],
        omega_r: 7.8,
        resonator_levels: 4,
        g_ge: vec![0.1, 0.1],
        kappa: 0.0,
        t1: vec![],
    })
    .unwrap()
}

fn config(max_step: Option<f64>) -> IntegratorConfig {
    IntegratorConfig {
        max_step,
        ..IntegratorConfig::default()
    }
}

fn identity(n: usize) -> CMat {
    fluxband::linalg::eye(n)
}

fn calibrated() -> DriveCalibration {
    DriveCalibration {
        dipole_scale: 0.99874,
        drag_flux: 0.380,
        drag_dipole: -0.2412,
    }
}

#[test]
fn split_step_converges_at_second_order() {
    let dev = reference_device(3);
    let sched = build_uent_schedule(&dev, ResonanceSource::Dispersive).unwrap();
    let drive = ScheduledDrive::new(&dev, &sched, calibrated()).unwrap();
    let id = identity(dev.order());
    let run = |h: f64| Propagator::new(&drive, config(Some(h))).unwrap().propagate(&id, 10.0, 16.0).unwrap();
    let reference = run(0.0005);
    let errs: Vec<f64> = [0.008, 0.004, 0.002].iter().map(|&h| frobenius(&(run(h) - &reference))).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.8, "observed order {order:.3} from errors {errs:?}");
    }
}

#[test]
fn full_sequence_propagator_is_unitary() {
    let dev = reference_device(4);
    let sched = build_uent_schedule(&dev, ResonanceSource::Dispersive).unwrap();
    let drive = ScheduledDrive::new(&dev, &sched, calibrated()).unwrap();
    let prop = Propagator::new(&drive, IntegratorConfig::default()).unwrap();
    let u = prop.propagate(&identity(dev.order()), 0.0, 131.0).unwrap();
    assert!(unitarity_defect(&u) < 1e-8, "defect {}", unitarity_defect(&u));
}

#[test]
fn lossless_lindblad_matches_state_propagation() {
    let dev = reference_device(3);
    let sched = build_uent_schedule(&dev, ResonanceSource::Dispersive).unwrap();
    let drive = ScheduledDrive::new(&dev, &sched, calibrated()).unwrap();
    // fine steps so that both paths resolve the same continuous evolution
    let prop = Propagator::new(&drive, config(Some(3e-4))).unwrap();
    let psi0 = StateVector::basis(dev.dims(), &[1, 0, 0]).unwrap();
    let psi = propagate_state(&prop, &psi0, 0.0, 40.0).unwrap();
    let rho = propagate_density(&prop, &psi0.to_density(), &CollapseSet::default(), 0.0, 40.0).unwrap();
    let pure = psi.to_density();
    let diff = frobenius(&(rho.data() - pure.data()));
    assert!(diff < 1e-8, "‖ρ − |ψ⟩⟨ψ|‖ = {diff:.3e}");
}

#[test]
fn lindblad_preserves_trace_with_strong_loss() {
    let dev = reference_device(3);
    let sched = build_uent_schedule(&dev, ResonanceSource::Dispersive).unwrap();
    let drive = ScheduledDrive::new(&dev, &sched, calibrated()).unwrap();
    let prop = Propagator::new(&drive, IntegratorConfig::default()).unwrap();
    let collapse = CollapseSet::with_rates(&dev, 5.0, &[Some(0.5), Some(0.5)]).unwrap();
    let rho0 = StateVector::basis(dev.dims(), &[1, 1, 1]).unwrap().to_density();
    let rho = propagate_density(&prop, &rho0, &collapse, 0.0, 60.0).unwrap();
    let tr = rho.trace();
    assert!((tr.re - 1.0).abs() < 1e-8 && tr.im.abs() < 1e-8, "trace {tr}");
    let herm = frobenius(&(rho.data() - dagger(&rho.data().view())));
    assert!(herm < 1e-10);
}

#[test]
fn dressed_qubit_decays_at_purcell_rate() {
    let (g, kappa) = (0.1, 20.0);
    let dev = Device::new(DeviceSpec {
        transmons: vec![transmon(25.0, 0.25, 3)],
        omega_r: 7.8,
        resonator_levels: 4,
        g_ge: vec![g],
        kappa,
        t1: vec![],
    })
    .unwrap();
    let h = dev.static_hamiltonian().unwrap();
    let basis = DressedBasis::new(&h, 0.5).unwrap();
    let drive = StaticDrive::new(h).unwrap();
    let prop = Propagator::new(&drive, IntegratorConfig::default()).unwrap();
    let excited = basis.vector(&[1, 0]).unwrap();
    let rho0 = StateVector::new(excited.clone(), dev.dims().to_vec()).unwrap().to_density();
    let collapse = CollapseSet::from_device(&dev).unwrap();
    let t = 400.0;
    let rho = propagate_density(&prop, &rho0, &collapse, 0.0, t).unwrap();
    let p: f64 = excited
        .iter()
        .enumerate()
        .flat_map(|(i, a)| excited.iter().enumerate().map(move |(j, b)| (i, j, *a, *b)))
        .map(|(i, j, a, b)| (a.conj() * rho.data()[[i, j]] * b).re)
        .sum();
    let rate = -p.ln() / t;
    let delta = dev.transmons[0].splitting(0) - dev.spec.omega_r;
    let purcell = (g / delta).powi(2) * std::f64::consts::TAU * kappa * 1e-3;
    assert!((rate / purcell - 1.0).abs() < 0.3, "rate {rate:.4e} vs (g/Δ)²κ = {purcell:.4e}");
}

/// Population leaving {|1⟩, |2⟩} of transmon 2 during the dipole pulse, with unit DRAG scale.
fn dipole_leakage(drag: bool) -> f64 {
    let cal = DriveCalibration {
        drag_dipole: 1.0,
        ..calibrated()
    };
    let dev = reference_device(4);
    let full = build_uent_schedule(&dev, ResonanceSource::Dispersive).unwrap();
    let mut seg = full.segments.into_iter().find(|s| s.kind == PulseKind::Dipole).unwrap();
    seg.drag = drag;
    let (t0, t1) = (seg.envelope.start(), seg.envelope.end());
    let sched = PulseSchedule::new(vec![seg]).unwrap();
    let drive = ScheduledDrive::new(&dev, &sched, cal).unwrap();
    let prop = Propagator::new(&drive, IntegratorConfig::default()).unwrap();
    let basis = DressedBasis::new(&dev.static_hamiltonian().unwrap(), 0.5).unwrap();
    let psi0 = StateVector::new(basis.vector(&[0, 1, 0]).unwrap(), dev.dims().to_vec()).unwrap();
    let psi = propagate_state(&prop, &psi0, t0, t1).unwrap();
    let kept: f64 = [[0, 1, 0], [0, 2, 0]]
        .iter()
        .map(|l| {
            let v = basis.vector(l).unwrap();
            v.iter().zip(psi.amps()).map(|(a, b)| a.conj() * b).sum::<fluxband::linalg::C64>().norm_sqr()
        })
        .sum();
    1.0 - kept
}

#[test]
fn drag_reduces_leakage_of_short_dipole_pulse() {
    let with = dipole_leakage(true);
    let without = dipole_leakage(false);
    assert!(with < without, "leakage with DRAG {with:.3e}, without {without:.3e}");
}


#[test]
fn spectator_stark_error_tracks_the_analytic_estimate() {
    use fluxband::experiments::sideband::{stark_error, SidebandParams};
    let errors: Vec<(f64, f64)> = [0.02, 0.04]
        .iter()
        .map(|&g2| {
            let dev = Device::new(DeviceSpec {
                transmons: vec![transmon(25.0, 0.25, 4), transmon(35.0, 0.3, 4)],
                omega_r: 7.8,
                resonator_levels: 5,
                g_ge: vec![0.1, g2],
                kappa: 0.0,
                t1: vec![],
            })
            .unwrap();
            let r = stark_error(dev, SidebandParams::stark_error(), IntegratorConfig::default()).unwrap();
            assert!(
                (r.numeric_error / r.analytic_error - 1.0).abs() < 0.35,
                "g2 = {g2}: numeric {:.4e}, analytic {:.4e}",
                r.numeric_error,
                r.analytic_error
            );
            (r.numeric_error, r.analytic_error)
        })
        .collect();
    assert!(errors[1].0 > errors[0].0);
}

#[test]
fn dispersive_and_spectral_carriers_agree() {
    let dev = reference_device(4);
    let a = build_uent_schedule(&dev, ResonanceSource::Dispersive).unwrap();
    let b = build_uent_schedule(&dev, ResonanceSource::Spectrum).unwrap();
    for (x, y) in a.segments.iter().zip(&b.segments) {
        assert!((x.carrier - y.carrier).abs() < 50e-6, "{} vs {} GHz", x.carrier, y.carrier);
    }
}
