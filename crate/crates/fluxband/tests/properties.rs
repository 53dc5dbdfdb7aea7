//! Randomized invariants of the fidelity, frame and integrator layers.

use std::f64::consts::{PI, TAU};

use fluxband::device::{Device, DeviceSpec, TransmonSpec};
use fluxband::dispersive::{block_hamiltonian, mixing_angles, tls_params};
use fluxband::evolve::{propagate_density, CollapseSet, IntegratorConfig, Propagator, StaticDrive};
use fluxband::experiments::Resolved;
use fluxband::hilbert::{Operator, StateVector};
use fluxband::linalg::{c, dagger, trace, unitarity_defect, CMat, C64};
use fluxband::metrics::{fit_phases, gate_fidelity, leaky_average_fidelity, u_ent, ChoiMatrix};
use fluxband::pulses::{half_area_offset, Envelope};
use proptest::prelude::*;

/// e^{iγ} Rz(α) Ry(β) Rz(δ).
fn su2(g: f64, a: f64, b: f64, d: f64) -> CMat {
    let (cb, sb) = ((b / 2.0).cos(), (b / 2.0).sin());
    let e = |x: f64| C64::from_polar(1.0, x);
    let mut u = CMat::zeros((2, 2));
    u[[0, 0]] = e(g - (a + d) / 2.0) * cb;
    u[[0, 1]] = -e(g - (a - d) / 2.0) * sb;
    u[[1, 0]] = e(g + (a - d) / 2.0) * sb;
    u[[1, 1]] = e(g + (a + d) / 2.0) * cb;
    u
}

fn angle() -> impl Strategy<Value = f64> {
    0.0..TAU
}

fn unitary2() -> impl Strategy<Value = CMat> {
    (angle(), angle(), 0.0..PI, angle()).prop_map(|(g, a, b, d)| su2(g, a, b, d))
}

fn wrapped(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

/// Simpson rule with n (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn choi_overlap_equals_trace_formula(u in unitary2(), v in unitary2()) {
        let cu = ChoiMatrix::from_unitary(&u).unwrap();
        let cv = ChoiMatrix::from_unitary(&v).unwrap();
        let lhs = cu.overlap(&cv).unwrap();
        let rhs = trace(&dagger(&u.view()).dot(&v)).norm_sqr() / 4.0;
        prop_assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn qubit_average_fidelity_identity(u in unitary2(), v in unitary2()) {
        let g = gate_fidelity(&u, &v).unwrap();
        prop_assert!((g.f_avg - (2.0 * g.f + 1.0) / 3.0).abs() < 1e-14);
        let leaky = leaky_average_fidelity(&u, &v).unwrap();
        prop_assert!((leaky - g.f_avg).abs() < 1e-12);
    }

    #[test]
    fn entangling_phases_are_recovered(p1 in angle(), p2 in angle(), p3 in angle()) {
        let fit = fit_phases(&u_ent([p1, p2, p3])).unwrap();
        for (got, want) in fit.phases.iter().zip([p1, p2, p3]) {
            prop_assert!(wrapped(got - want).abs() < 1e-8, "{got} vs {want}");
        }
        prop_assert!((fit.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixing_angles_diagonalize_each_block(
        wa1 in 4.0f64..6.0,
        wa2 in 8.5f64..10.5,
        wr in 7.0f64..7.6,
        g1 in 0.01f64..0.2,
        g2 in 0.01f64..0.2,
        n in 0usize..6,
    ) {
        let p = tls_params(wa1, wa2, wr, g1, g2).unwrap();
        let h = block_hamiltonian(n, &p);
        let v = mixing_angles(n, &p).unwrap().eigenvectors();
        let d = v.t().dot(&h).dot(&v);
        let scale = 1.0 + h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    prop_assert!(d[[i, j]].abs() < 1e-10 * scale, "({i},{j}) = {}", d[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn half_area_offset_balances_inner_and_outer_areas(sigma in 0.5f64..20.0, ratio in 0.1f64..6.0) {
        let tau = ratio * sigma;
        let env = Envelope::new(1.0, 0.0, sigma, 2.0 * tau).unwrap();
        let a = half_area_offset(&env);
        let f = |t: f64| env.value(t);
        let inner = simpson(f, -a, a, 4000);
        let tail = simpson(f, a, tau, 4000);
        prop_assert!((inner - 2.0 * tail).abs() < 1e-6 * inner, "𝒜₊ = {inner}, 2𝒜₋ = {}", 2.0 * tail);
    }

    #[test]
    fn config_digest_ignores_key_order(g in 0.01f64..0.2, wr in 6.0f64..9.0) {
        let a = format!(
            r#"{{"scenario": "sideband-pi", "device": {{"transmons": [{{"E_J": 25, "E_C": 0.25, "phi": 0.25, "levels": 3}}], "omega_r": {wr}, "resonator_levels": 3, "g_ge": [{g}]}}}}"#
        );
        let b = format!(
            r#"{{"device": {{"g_ge": [{g}], "resonator_levels": 3, "omega_r": {wr}, "transmons": [{{"levels": 3, "phi": 0.25, "E_C": 0.25, "E_J": 25}}]}}, "scenario": "sideband-pi"}}"#
        );
        prop_assert_eq!(Resolved::parse(&a, None).unwrap().digest, Resolved::parse(&b, None).unwrap().digest);
    }
}

fn small_device(kappa: f64, t1: f64) -> Device {
    Device::new(DeviceSpec {
        transmons: vec![TransmonSpec {
            e_j: 25.0,
            e_c: 0.25,
            phi: 0.1,
            levels: 3,
        }],
        omega_r: 7.8,
        resonator_levels: 3,
        g_ge: vec![0.2],
        kappa,
        t1: vec![Some(t1)],
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn static_propagator_is_unitary(re in prop::collection::vec(-1.0f64..1.0, 81), im in prop::collection::vec(-1.0f64..1.0, 81), t in 0.1f64..50.0) {
        let mut m = CMat::zeros((9, 9));
        for i in 0..9 {
            for j in 0..9 {
                m[[i, j]] = C64::new(re[9 * i + j], im[9 * i + j]);
            }
        }
        let h = (&m + &dagger(&m.view())).mapv(|z| z * c(0.5));
        let op = Operator::new(h, vec![3, 3]).unwrap();
        let drive = StaticDrive::new(op).unwrap();
        let prop = Propagator::new(&drive, IntegratorConfig::default()).unwrap();
        let u = prop.propagate(&fluxband::linalg::eye(9), 0.0, t).unwrap();
        prop_assert!(unitarity_defect(&u) < 1e-8);
    }

    #[test]
    fn lindblad_keeps_unit_trace(kappa in 0.0f64..50.0, t1 in 0.05f64..20.0, q in 0usize..3, n in 0usize..3) {
        let dev = small_device(kappa, t1);
        let drive = StaticDrive::new(dev.static_hamiltonian().unwrap()).unwrap();
        let prop = Propagator::new(&drive, IntegratorConfig::default()).unwrap();
        let rho0 = StateVector::basis(dev.dims(), &[q, n]).unwrap().to_density();
        let collapse = CollapseSet::from_device(&dev).unwrap();
        let rho = propagate_density(&prop, &rho0, &collapse, 0.0, 20.0).unwrap();
        let tr = rho.trace();
        prop_assert!((tr.re - 1.0).abs() < 1e-8 && tr.im.abs() < 1e-8, "trace {}", tr);
        let min_diag = (0..9).map(|i| rho.data()[[i, i]].re).fold(f64::INFINITY, f64::min);
        prop_assert!(min_diag > -1e-10);
    }
}
