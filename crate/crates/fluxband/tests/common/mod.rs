//! Bare Hamiltonians and frame-transformation residuals shared by integration tests.
#![allow(dead_code)]

use fluxband::dispersive::*;
use fluxband::hilbert::{basis_labels, embed, ladder, projector, Operator};
use fluxband::linalg::c;

pub const N_RES: usize = 9;
/// Photon numbers kept away from the truncation edge.
pub const N_KEEP: usize = 4;

/// Bare two-qubit Rabi Hamiltonian with counter-rotating terms, on [2, 2, N].
pub fn tls_bare(wa: [f64; 2], wr: f64, g: [f64; 2]) -> Operator {
    let dims = [2, 2, N_RES];
    let a = embed(&ladder(N_RES).unwrap(), 2, &dims).unwrap();
    let x = a.add(&a.dagger()).unwrap();
    let mut h = a.dagger().dot(&a).unwrap().scale(c(wr));
    for k in 0..2 {
        let sz = embed(&Operator::from_diagonal(&[-1.0, 1.0], &[2]).unwrap(), k, &dims).unwrap();
        let sm = embed(&projector(0, 1, 2).unwrap(), k, &dims).unwrap();
        let sx = sm.add(&sm.dagger()).unwrap();
        h = h
            .add(&sz.scale(c(wa[k] / 2.0)))
            .unwrap()
            .add(&sx.dot(&x).unwrap().scale(c(g[k])))
            .unwrap();
    }
    h
}

pub fn photon_blocks(dims: &[usize]) -> Vec<Option<usize>> {
    let order: usize = dims.iter().product();
    (0..order)
        .map(|i| {
            let n = *basis_labels(dims, i).last().unwrap();
            (n < N_KEEP).then_some(n)
        })
        .collect()
}

pub fn every_state(dims: &[usize]) -> Vec<Option<usize>> {
    let order: usize = dims.iter().product();
    (0..order)
        .map(|i| (*basis_labels(dims, i).last().unwrap() < N_KEEP).then_some(i))
        .collect()
}

pub fn tls_residual(g: f64) -> f64 {
    let (wa, wr) = ([5.67, 7.38], 7.8 + 2.0);
    let p = tls_params(wa[0], wa[1], wr, g, g).unwrap();
    let h = tls_bare(wa, wr, [g, g]);
    let gen = tls_generator(&p, N_RES).unwrap();
    bch_residual(&h, &gen, &photon_blocks(&[2, 2, N_RES])).unwrap()
}

pub fn mls_bare(levels: &[Vec<f64>], wr: f64, g: &[Vec<f64>]) -> (Operator, Vec<usize>) {
    let mut dims: Vec<usize> = levels.iter().map(Vec::len).collect();
    dims.push(N_RES);
    let r = dims.len() - 1;
    let a = embed(&ladder(N_RES).unwrap(), r, &dims).unwrap();
    let x = a.add(&a.dagger()).unwrap();
    let mut h = a.dagger().dot(&a).unwrap().scale(c(wr));
    for (k, (w, gk)) in levels.iter().zip(g).enumerate() {
        let m = w.len();
        let d = embed(&Operator::from_diagonal(w, &[m]).unwrap(), k, &dims).unwrap();
        h = h.add(&d).unwrap();
        for (i, gi) in gk.iter().enumerate() {
            let p = embed(&projector(i, i + 1, m).unwrap(), k, &dims).unwrap();
            let cpl = p.add(&p.dagger()).unwrap().dot(&x).unwrap().scale(c(*gi));
            h = h.add(&cpl).unwrap();
        }
    }
    (h, dims)
}

pub fn transmon_levels() -> Vec<Vec<f64>> {
    vec![vec![0.0, 5.67, 11.03, 16.07], vec![0.0, 7.38, 14.46, 21.23]]
}

pub fn couplings(g: f64) -> Vec<Vec<f64>> {
    let row: Vec<f64> = (0..3).map(|i| g * ((i + 1) as f64).sqrt()).collect();
    vec![row.clone(), row]
}

pub fn mls_residual(g: f64, sign: XiSign) -> f64 {
    let wr = 9.8;
    let levels = transmon_levels();
    let model = MlsDispersiveModel::from_levels(wr, &levels, &couplings(g), sign).unwrap();
    let (h, dims) = mls_bare(&levels, wr, &couplings(g));
    let gd = mls_generator(&model, &dims).unwrap();
    let gj = mls_j_generator(&model, &dims).unwrap();
    let hd = transform(&h, &gd).unwrap();
    bch_residual(&hd, &gj, &every_state(&dims)).unwrap()
}
