//! Acceptance criteria 1–7, one PASS/FAIL line each.
//!
//! Criteria listed in `EXPECTED_FAIL` are known not to be met by this model;
//! the run asserts that everything else passes and that those still fail, so a
//! change in either direction is noticed.

mod common;

use std::f64::consts::{PI, TAU};
use std::path::Path;

use fluxband::device::{Device, DeviceSpec, TransmonSpec};
use fluxband::dispersive::{block_hamiltonian, mixing_angles, tls_params, XiSign};
use fluxband::evolve::*;
use fluxband::experiments::{run, Resolved};
use fluxband::hilbert::StateVector;
use fluxband::linalg::{dagger, eye, frobenius, trace, unitarity_defect, CMat, C64};
use fluxband::metrics::{gate_fidelity, ChoiMatrix};
use fluxband::pulses::{build_uent_schedule, half_area_offset, DriveCalibration, Envelope, ResonanceSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const EXPECTED_FAIL: &[usize] = &[2, 6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn summaries(config: &str) -> Vec<Value> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(config);
    let text = std::fs::read_to_string(&path).unwrap();
    let resolved = Resolved::parse(&text, None).unwrap();
    let outcome = run(&resolved, 1, None).unwrap();
    assert_eq!(outcome.record.failures, 0, "{config}: {:?}", outcome.record.points.iter().map(|p| &p.status).collect::<Vec<_>>());
    outcome.record.points.into_iter().map(|p| p.summary).collect()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn wrapped(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

fn criterion_1() -> Outcome {
    let s = &summaries("sideband_pi.json")[0];
    let transfers: Vec<f64> = s["transfers"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap().iter().map(num)).collect();
    let min = transfers.iter().cloned().fold(f64::INFINITY, f64::min);
    let analytic = num(&s["analytic_transfer"]);
    let ratio = num(&s["delta_over_eps"]);
    let near = &summaries("sideband_pi_near_spectator.json")[0];
    Outcome {
        pass: min >= 0.985 && (analytic - 0.987).abs() <= 0.001,
        detail: format!(
            "min transfer {min:.5} (≥ 0.985; reported 0.992), analytic {analytic:.5} (0.987 ± 0.001) at |δ/ε̄| = {ratio:.3}; \
             carrier {:.5} GHz; midpoint-carrier transfers {}; E_J2 = 35 GHz device at midpoint: min transfer {:.3}",
            num(&s["carrier_ghz"]),
            s["midpoint_transfers"],
            num(&near["min_transfer"]),
        ),
    }
}

fn cnot_summary() -> Value {
    summaries("cnot.json").remove(0)
}

fn criterion_2(s: &Value) -> Outcome {
    let reference = [0.993, 0.993, 0.991, 0.978];
    let diag: Vec<f64> = s["bell_diagonal"].as_array().unwrap().iter().map(num).collect();
    let bell_ok = diag.iter().zip(reference).all(|(d, r)| (d - r).abs() <= 0.015);
    let target = [0.053, 2.31, 5.59];
    let mut best = (f64::INFINITY, String::new());
    for v in s["frame_scan"].as_array().unwrap() {
        let phases: Vec<f64> = v["phases"].as_array().unwrap().iter().map(num).collect();
        let err = phases.iter().zip(target).map(|(p, t)| wrapped(p - t).abs()).fold(0.0, f64::max);
        if err < best.0 {
            best = (err, format!("{}/{} {phases:.3?}", v["origin"].as_str().unwrap(), v["frame"].as_str().unwrap()));
        }
    }
    let phases_ok = best.0 <= 0.1;
    Outcome {
        pass: bell_ok && phases_ok,
        detail: format!(
            "Bell diagonal {diag:.4?} vs {reference:?} ± 0.015: {}; closest phase convention {} is {:.3} rad from {target:?} (±0.1): {}",
            if bell_ok { "ok" } else { "out of range" },
            best.1,
            best.0,
            if phases_ok { "ok" } else { "out of range" },
        ),
    }
}

fn criterion_3(s: &Value) -> Outcome {
    let f = num(&s["choi"]["average"]);
    Outcome {
        pass: (f - 0.991).abs() <= 0.005,
        detail: format!(
            "dissipation-free Choi average fidelity {f:.5} (0.991 ± 0.005); standard (dF+1)/(d+1) {:.5}; duration {:.2} ns",
            num(&s["choi"]["average_standard"]),
            num(&s["duration_ns"]),
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    for config in ["rabi_sweep.json", "rabi_sweep_sweet_spot.json"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(config);
        let resolved = Resolved::parse(&std::fs::read_to_string(path).unwrap(), None).unwrap();
        let outcome = run(&resolved, 1, None).unwrap();
        for p in &outcome.record.points {
            if p.coords[0] <= 0.075 + 1e-12 {
                worst = worst.max(num(&p.summary["relative_deviation"]));
            }
        }
    }
    let sweep = summaries("rabi_vs_coupling.json");
    let g_crit = num(&sweep[0]["g_crit_ghz"]);
    let rows: Vec<(f64, f64)> = sweep.iter().map(|s| (num(&s["g_ge"]), num(&s["relative_deviation"]))).collect();
    let weak_ok = rows.iter().filter(|(g, _)| *g <= g_crit / 2.0).all(|(_, d)| *d < 0.1);
    let grows = rows.windows(2).filter(|w| w[0].0 >= g_crit / 2.0).all(|w| w[1].1 >= w[0].1);
    let crossing = rows.iter().find(|(_, d)| *d > 0.1).map(|(g, _)| *g);
    let breaks = crossing.is_some_and(|g| g <= 1.5 * g_crit);
    Outcome {
        pass: worst < 0.1 && weak_ok && grows && breaks,
        detail: format!(
            "max deviation over Δφ ≤ 0.075 at φ ∈ {{0, 0.25}}: {:.2}%; g_crit = {g_crit:.4} GHz; deviation vs g {}; first g above 10%: {}",
            100.0 * worst,
            rows.iter().map(|(g, d)| format!("{g}:{:.1}%", 100.0 * d)).collect::<Vec<_>>().join(" "),
            crossing.map_or("none".into(), |g| format!("{g} GHz = {:.2} g_crit", g / g_crit)),
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut odd: f64 = 0.0;
    for point in summaries("geometric_shift.json") {
        for c in point.as_array().unwrap() {
            let (ga, gn) = (num(&c["g_analytic_mhz"]), num(&c["g_numeric_mhz"]));
            worst = worst.max((ga - gn).abs() / gn.abs());
            if num(&c["phi"]) == 0.0 {
                let wp = 1e3 * num(&c["omega_p_prime_ghz"]);
                for m in [0, 2] {
                    odd = odd.max(num(&c["eps_numeric_mhz"][m]).abs() / wp);
                }
            }
        }
    }
    Outcome {
        pass: worst < 0.1 && odd < 1e-6,
        detail: format!("max |G − G_num|/|G_num| over Δφ ≤ 0.1 at φ ∈ {{0, 0.25}}: {:.2}%; max ε_ω, ε_3ω / ω′_p at φ = 0: {odd:.1e}", 100.0 * worst),
    }
}

fn criterion_6() -> Outcome {
    let points = summaries("fidelity_vs_kappa.json");
    let curve: Vec<(f64, f64)> = points.iter().map(|p| (num(&p["kappa_mhz"]), num(&p["fidelity"]["average"]))).collect();
    let monotone = curve.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
    let lossless = num(&points[0]["lossless"]["average"]);
    let (k0, f0) = curve[0];
    let approaches = (f0 - lossless).abs() <= 0.005;
    Outcome {
        pass: monotone && approaches,
        detail: format!(
            "T1 = 2 µs; F̄(κ) {}: monotone {}; F̄(κ = {k0:.4} MHz) = {f0:.4} vs dissipation-free {lossless:.4} (gap {:.4}, allowed 0.005)",
            curve.iter().map(|(k, f)| format!("{k:.3}:{f:.4}")).collect::<Vec<_>>().join(" "),
            if monotone { "yes" } else { "no" },
            (f0 - lossless).abs(),
        ),
    }
}

fn reference_device() -> Device {
    let t = |e_j, e_c| TransmonSpec {
        e_j,
        e_c,
        phi: 0.25,
        levels: 3,
    };
    Device::new(DeviceSpec {
        transmons: vec![t(25.0, 0.25), t(61.0, 0.3)],
        omega_r: 7.8,
        resonator_levels: 4,
        g_ge: vec![0.1, 0.1],
        kappa: 0.0,
        t1: vec![],
    })
    .unwrap()
}

fn su2(rng: &mut ChaCha8Rng) -> CMat {
    let (g, a, b, d): (f64, f64, f64, f64) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU), rng.gen_range(0.0..PI), rng.gen_range(0.0..TAU));
    let (cb, sb) = ((b / 2.0).cos(), (b / 2.0).sin());
    let e = |x: f64| C64::from_polar(1.0, x);
    let mut u = CMat::zeros((2, 2));
    u[[0, 0]] = e(g - (a + d) / 2.0) * cb;
    u[[0, 1]] = -e(g - (a - d) / 2.0) * sb;
    u[[1, 0]] = e(g + (a - d) / 2.0) * sb;
    u[[1, 1]] = e(g + (a + d) / 2.0) * cb;
    u
}

fn criterion_7() -> Outcome {
    let mut checks: Vec<(&str, bool, String)> = Vec::new();
    let dev = reference_device();
    let sched = build_uent_schedule(&dev, ResonanceSource::Dispersive).unwrap();
    let cal = DriveCalibration {
        dipole_scale: 0.99874,
        drag_flux: 0.380,
        drag_dipole: -0.2412,
    };
    let drive = ScheduledDrive::new(&dev, &sched, cal).unwrap();

    let prop = Propagator::new(&drive, IntegratorConfig::default()).unwrap();
    let u = prop.propagate(&eye(dev.order()), 0.0, 131.0).unwrap();
    let defect = unitarity_defect(&u);
    checks.push(("unitarity", defect <= 1e-8, format!("{defect:.1e}")));

    let collapse = CollapseSet::with_rates(&dev, 2.0, &[Some(2.0), Some(2.0)]).unwrap();
    let rho0 = StateVector::basis(dev.dims(), &[1, 1, 0]).unwrap().to_density();
    let rho = propagate_density(&prop, &rho0, &collapse, 0.0, 131.0).unwrap();
    let drift = (rho.trace() - 1.0).norm();
    checks.push(("trace", drift <= 1e-8, format!("{drift:.1e}")));

    let fine = Propagator::new(
        &drive,
        IntegratorConfig {
            max_step: Some(3e-4),
            ..IntegratorConfig::default()
        },
    )
    .unwrap();
    let psi = propagate_state(&fine, &StateVector::basis(dev.dims(), &[1, 0, 0]).unwrap(), 0.0, 40.0).unwrap();
    let rho = propagate_density(&fine, &StateVector::basis(dev.dims(), &[1, 0, 0]).unwrap().to_density(), &CollapseSet::default(), 0.0, 40.0).unwrap();
    let gap = frobenius(&(rho.data() - psi.to_density().data()));
    checks.push(("unitary limit", gap <= 1e-8, format!("{gap:.1e}")));

    let tls = common::tls_residual(0.04) / common::tls_residual(0.02);
    let mls = common::mls_residual(0.04, XiSign::Cancelling) / common::mls_residual(0.02, XiSign::Cancelling);
    let in_band = |r: f64| (6.4..=9.6).contains(&r);
    checks.push(("BCH TLS", in_band(tls), format!("×{tls:.2}")));
    checks.push(("BCH MLS", in_band(mls), format!("×{mls:.2}")));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut off: f64 = 0.0;
    for _ in 0..200 {
        let p = tls_params(rng.gen_range(4.0..6.0), rng.gen_range(8.5..10.5), rng.gen_range(7.0..7.6), rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2)).unwrap();
        let n = rng.gen_range(0..6);
        let h = block_hamiltonian(n, &p);
        let v = mixing_angles(n, &p).unwrap().eigenvectors();
        let d = v.t().dot(&h).dot(&v);
        for ((i, j), x) in d.indexed_iter() {
            if i != j {
                off = off.max(x.abs());
            }
        }
    }
    checks.push(("mixing angles", off <= 1e-10, format!("{off:.1e}")));

    let (mut choi_err, mut avg_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let (a, b) = (su2(&mut rng), su2(&mut rng));
        let lhs = ChoiMatrix::from_unitary(&a).unwrap().overlap(&ChoiMatrix::from_unitary(&b).unwrap()).unwrap();
        let rhs = trace(&dagger(&a.view()).dot(&b)).norm_sqr() / 4.0;
        choi_err = choi_err.max((lhs - rhs).abs());
        let g = gate_fidelity(&a, &b).unwrap();
        avg_err = avg_err.max((g.f_avg - (2.0 * g.f + 1.0) / 3.0).abs());
    }
    checks.push(("Choi overlap", choi_err <= 1e-12, format!("{choi_err:.1e}")));
    checks.push(("F̄ identity", avg_err <= 1e-14, format!("{avg_err:.1e}")));

    let mut area: f64 = 0.0;
    for _ in 0..50 {
        let sigma = rng.gen_range(0.5..20.0);
        let tau = sigma * rng.gen_range(0.1..6.0);
        let env = Envelope::new(1.0, 0.0, sigma, 2.0 * tau).unwrap();
        let a = half_area_offset(&env);
        let simpson = |lo: f64, hi: f64| {
            let n = 4000;
            let h = (hi - lo) / n as f64;
            (0..=n)
                .map(|k| {
                    let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                    w * env.value(lo + k as f64 * h)
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let (inner, tail) = (simpson(-a, a), simpson(a, tau));
        area = area.max((inner - 2.0 * tail).abs() / inner);
    }
    checks.push(("equal area", area <= 1e-6, format!("{area:.1e}")));

    Outcome {
        pass: checks.iter().all(|c| c.1),
        detail: checks
            .iter()
            .map(|(name, ok, v)| format!("{name} {v} {}", if *ok { "ok" } else { "FAILED" }))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn main() {
    let cnot = cnot_summary();
    let outcomes = [
        criterion_1(),
        criterion_2(&cnot),
        criterion_3(&cnot),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
    ];
    let mut unexpected = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let n = i + 1;
        let expected_fail = EXPECTED_FAIL.contains(&n);
        let note = match (o.pass, expected_fail) {
            (false, true) => " [expected]",
            (true, true) => " [expected to fail but passed]",
            _ => "",
        };
        println!("{} criterion {n}{note}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if o.pass == expected_fail {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("criteria with unexpected outcome: {unexpected:?}");
        std::process::exit(1);
    }
}
