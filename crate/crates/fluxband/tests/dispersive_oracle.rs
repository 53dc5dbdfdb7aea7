//! Frame transformations checked against exact conjugation and diagonalization.

mod common;

use common::*;
use fluxband::dispersive::*;
use fluxband::hilbert::{embed, Operator};
use fluxband::linalg::{c, dagger, expm_antihermitian};

#[test]
fn tls_generator_removes_photon_changing_terms_to_third_order() {
    let r1 = tls_residual(0.04);
    let r2 = tls_residual(0.02);
    let ratio = r1 / r2;
    assert!((ratio.log2() - 3.0).abs() < 0.3, "residual ratio {ratio}");
}

fn exponent(f: impl Fn(f64) -> f64) -> f64 {
    (f(0.04) / f(0.02)).log2()
}

#[test]
fn mls_generators_leave_third_order_residual() {
    let e = exponent(|g| mls_residual(g, XiSign::Cancelling));
    assert!((e - 3.0).abs() < 0.15, "exponent {e}");
}

#[test]
fn literal_two_photon_denominator_leaves_second_order_residual() {
    let e = exponent(|g| mls_residual(g, XiSign::Literal));
    assert!((e - 2.0).abs() < 0.15, "exponent {e}");
}

#[test]
fn mls_dressed_splittings_match_exact_spectrum() {
    let (g, wr) = (0.08, 9.8);
    let levels = transmon_levels();
    let model = MlsDispersiveModel::from_levels(wr, &levels, &couplings(g), XiSign::Cancelling).unwrap();
    let (h, dims) = mls_bare(&levels, wr, &couplings(g));
    let basis = fluxband::hilbert::DressedBasis::new(&h, 0.5).unwrap();
    let lam = model
        .transmons
        .iter()
        .flat_map(|t| t.lambda.iter().chain(&t.big_lambda))
        .fold(0.0f64, |m, l| m.max(l.abs()));
    let tol = 5.0 * lam.powi(3) * g;
    for k in 0..2 {
        for i in 0..3 {
            let mut lo = vec![0, 0, 0];
            lo[k] = i;
            let mut hi = lo.clone();
            hi[k] = i + 1;
            let exact = basis.energy(&hi).unwrap() - basis.energy(&lo).unwrap();
            let pred = model.energy(&hi, 0) - model.energy(&lo, 0);
            assert!((exact - pred).abs() < tol, "transmon {k} {i}: {exact} vs {pred}, tol {tol}");
        }
    }
    assert_eq!(dims, vec![4, 4, N_RES]);
}

/// Removes the kept-block average of the diagonal, a c-number that only sets a global phase.
fn traceless(mut m: fluxband::linalg::CMat, dims: &[usize]) -> fluxband::linalg::CMat {
    let keep: Vec<usize> = every_state(dims).into_iter().flatten().collect();
    let mean = keep.iter().map(|&i| m[[i, i]]).sum::<fluxband::linalg::C64>() / keep.len() as f64;
    for i in 0..m.nrows() {
        m[[i, i]] -= mean;
    }
    m
}

fn fc_oracle(g: f64, f: [f64; 2], form: FcForm, exact: bool) -> f64 {
    fc_oracle_at(g, [5.67, 7.38], f, form, exact)
}

fn fc_oracle_at(g: f64, wa: [f64; 2], f: [f64; 2], form: FcForm, exact: bool) -> f64 {
    let wr = 9.8;
    let p = tls_params(wa[0], wa[1], wr, g, g).unwrap();
    let dims = [2, 2, N_RES];
    let u = expm_antihermitian(tls_generator(&p, N_RES).unwrap().data()).unwrap();
    let w = u.dot(mixing_unitary(&p, N_RES).unwrap().data());
    let mut drive = Operator::zeros(&dims);
    for (k, fk) in f.iter().enumerate() {
        let sz = embed(&Operator::from_diagonal(&[-1.0, 1.0], &[2]).unwrap(), k, &dims).unwrap();
        drive = drive.add(&sz.scale(c(fk / 2.0))).unwrap();
    }
    let conj = dagger(&w.view()).dot(drive.data()).dot(&w);
    let dec = fc_decomposition(&p, f[0], f[1], exact, form, N_RES - 1).unwrap();
    let diff = traceless(&conj - dec.total().unwrap().data(), &dims);
    let keep = every_state(&dims);
    let mut acc = 0.0;
    for (i, ki) in keep.iter().enumerate() {
        for (j, kj) in keep.iter().enumerate() {
            if ki.is_some() && kj.is_some() {
                acc += diff[[i, j]].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

const DRIVES: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [0.7, -0.4]];

#[test]
fn fc_decomposition_matches_conjugation_to_third_order() {
    for exact in [true, false] {
        for f in DRIVES {
            let e = exponent(|g| fc_oracle(g, f, FcForm::default(), exact));
            assert!((e - 3.0).abs() < 0.15, "exact={exact} f={f:?}: exponent {e}");
        }
    }
}

#[test]
fn exact_fc_decomposition_holds_under_strong_mixing() {
    // bare detuning ∝ g² keeps J/Δ̃_Q, hence α, fixed as g shrinks
    let wa = |g: f64| [6.0, 6.0 + 0.9 * g * g];
    let p = tls_params(6.0, wa(0.04)[1], 9.8, 0.04, 0.04).unwrap();
    assert!(mixing_angles(0, &p).unwrap().alpha.abs() > 0.3);
    for f in DRIVES {
        let e = exponent(|g| fc_oracle_at(g, wa(g), f, FcForm::default(), true));
        assert!((e - 3.0).abs() < 0.15, "f={f:?}: exponent {e}");
        let r = fc_oracle_at(0.04, wa(0.04), f, FcForm::default(), false);
        assert!(r > 0.1, "leading-order form should fail under strong mixing, residual {r}");
    }
}

#[test]
fn literal_photon_dressing_and_pair_term_leave_second_order_residual() {
    for form in [
        FcForm { x1: X1Form::Literal, s_n: SnForm::Conjugated },
        FcForm { x1: X1Form::Conjugated, s_n: SnForm::Literal },
    ] {
        let e = exponent(|g| fc_oracle(g, [0.0, 1.0], form, true));
        assert!((e - 2.0).abs() < 0.15, "{form:?}: exponent {e}");
    }
}

#[test]
fn diagonal_forms_agree_to_fourth_order_in_j() {
    let p = tls_params(5.67, 7.38, 9.8, 0.08, 0.08).unwrap();
    for n in 0..4 {
        let ex = logical_energies(n, &p, DiagForm::Exact);
        let h = block_hamiltonian(n, &p);
        let (vals, _) = fluxband::linalg::eigh_real(&h);
        let mut sorted = ex;
        sorted.sort_by(f64::total_cmp);
        for (a, b) in sorted.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let ex = logical_energies(0, &p, DiagForm::Exact);
    let ap = logical_energies(0, &p, DiagForm::Expanded { with_sj: true });
    let bound = 4.0 * p.j.powi(4) / p.delta_q.abs().powi(3);
    for (a, b) in ex.iter().zip(&ap) {
        assert!((a - b).abs() < bound, "{a} vs {b}, bound {bound}");
    }
}
