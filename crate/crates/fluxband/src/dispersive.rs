//! Dispersive and diagonalizing frame transformations.
//!
//! Frequencies may be given in any consistent unit; derived shifts come back in
//! the same unit and the dimensionless ratios (λ, Λ, ξ, ζ, ...) are unit-free.
//! Qubit labels use 0 for the ground state, so σ₋ = |0⟩⟨1| = Π₀₁.

use std::f64::consts::FRAC_PI_4;

use ndarray::Array2;
use serde::Serialize;

use crate::device::Device;
use crate::error::{Error, Result};
use crate::hilbert::{embed, ladder, projector, Operator};
use crate::linalg::{self, c, dagger, CMat};

/// |λ| or |Λ| at or above this marks the dispersive expansion as unreliable.
pub const DISPERSIVE_WARN: f64 = 0.5;

fn nonzero(x: f64, what: &str) -> Result<f64> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::Degenerate(format!("{what} vanishes")));
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TlsQubitParams {
    pub omega_a: f64,
    pub g: f64,
    pub delta: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    pub chi: f64,
    pub mu: f64,
    /// Stark shift per photon, χ + μ.
    pub stark: f64,
    /// Lamb-shifted frequency ω_a + χ + μ.
    pub omega_tilde: f64,
    /// Squeezing coefficient (χ + μ)/4ω_r.
    pub xi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TlsDispersiveParams {
    pub omega_r: f64,
    pub qubits: [TlsQubitParams; 2],
    pub j: f64,
    pub delta_q: f64,
    pub sigma_q: f64,
    pub delta_s: f64,
    pub sigma_s: f64,
    pub s_j_plus: f64,
    pub s_j_minus: f64,
    pub warnings: Vec<String>,
}

/// Two-qubit dispersive parameters.
pub fn tls_params(wa1: f64, wa2: f64, wr: f64, g1: f64, g2: f64) -> Result<TlsDispersiveParams> {
    let mut warnings = Vec::new();
    let mut mk = |k: usize, wa: f64, g: f64| -> Result<TlsQubitParams> {
        let delta = nonzero(wa - wr, &format!("qubit {k} detuning Δ"))?;
        let sigma = nonzero(wa + wr, &format!("qubit {k} sum Σ"))?;
        let lambda = g / delta;
        let big_lambda = g / sigma;
        if lambda.abs() >= DISPERSIVE_WARN || big_lambda.abs() >= DISPERSIVE_WARN {
            warnings.push(format!("qubit {k}: |λ| = {:.3} outside dispersive regime", lambda.abs()));
        }
        let chi = g * lambda;
        let mu = g * big_lambda;
        Ok(TlsQubitParams {
            omega_a: wa,
            g,
            delta,
            sigma,
            lambda,
            big_lambda,
            chi,
            mu,
            stark: chi + mu,
            omega_tilde: wa + chi + mu,
            xi: (chi + mu) / (4.0 * wr),
        })
    };
    let q1 = mk(1, wa1, g1)?;
    let q2 = mk(2, wa2, g2)?;
    let j = g1 * g2 / 2.0
        * (1.0 / q1.delta - 1.0 / q1.sigma + 1.0 / q2.delta - 1.0 / q2.sigma);
    let delta_q = nonzero(q1.omega_tilde - q2.omega_tilde, "qubit-qubit detuning Δ_Q")?;
    let sigma_q = q1.omega_tilde + q2.omega_tilde;
    let delta_s = q1.stark - q2.stark;
    let sigma_s = q1.stark + q2.stark;
    Ok(TlsDispersiveParams {
        omega_r: wr,
        j,
        delta_q,
        sigma_q,
        delta_s,
        sigma_s,
        s_j_plus: j * j * (1.0 / sigma_q + 1.0 / delta_q),
        s_j_minus: j * j * (1.0 / sigma_q - 1.0 / delta_q),
        qubits: [q1, q2],
        warnings,
    })
}

impl TlsDispersiveParams {
    pub fn delta_q_n(&self, n: usize) -> f64 {
        self.delta_q + 2.0 * n as f64 * self.delta_s
    }

    pub fn sigma_q_n(&self, n: usize) -> f64 {
        self.sigma_q + 2.0 * n as f64 * self.sigma_s
    }
}

/// Photon-number block of the dispersive Hamiltonian in the order (ee, eg, ge, gg), without ω_r n.
pub fn block_hamiltonian(n: usize, p: &TlsDispersiveParams) -> Array2<f64> {
    let d = p.delta_q_n(n) / 2.0;
    let s = p.sigma_q_n(n) / 2.0;
    let mut h = Array2::zeros((4, 4));
    h[[0, 0]] = s;
    h[[1, 1]] = d;
    h[[2, 2]] = -d;
    h[[3, 3]] = -s;
    h[[0, 3]] = p.j;
    h[[3, 0]] = p.j;
    h[[1, 2]] = p.j;
    h[[2, 1]] = p.j;
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixingAngles {
    pub alpha: f64,
    pub beta: f64,
}

impl MixingAngles {
    /// Logical eigenvectors as columns (|00⟩, |10⟩, |01⟩, |11⟩) in the (ee, eg, ge, gg) order.
    pub fn eigenvectors(&self) -> Array2<f64> {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        let mut v = Array2::zeros((4, 4));
        // |00⟩ = cosβ|gg⟩ + sinβ|ee⟩
        v[[3, 0]] = cb;
        v[[0, 0]] = sb;
        // |10⟩ = −sinα|ge⟩ + cosα|eg⟩
        v[[2, 1]] = -sa;
        v[[1, 1]] = ca;
        // |01⟩ = cosα|ge⟩ + sinα|eg⟩
        v[[2, 2]] = ca;
        v[[1, 2]] = sa;
        // |11⟩ = −sinβ|gg⟩ + cosβ|ee⟩
        v[[3, 3]] = -sb;
        v[[0, 3]] = cb;
        v
    }
}

/// ½·atan(−2J/x), continuous at J → 0 and equal to −π/4 when x = 0.
fn half_angle(j: f64, x: f64, what: &str) -> Result<f64> {
    if x == 0.0 {
        if j == 0.0 {
            return Err(Error::Degenerate(format!("J and {what} both vanish")));
        }
        return Ok(-FRAC_PI_4 * j.signum());
    }
    Ok(0.5 * (-2.0 * j / x).atan())
}

pub fn mixing_angles(n: usize, p: &TlsDispersiveParams) -> Result<MixingAngles> {
    Ok(MixingAngles {
        alpha: half_angle(p.j, p.delta_q_n(n), "Δ̃_Q")?,
        beta: half_angle(p.j, p.sigma_q_n(n), "Σ̃_Q")?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagForm {
    /// Square-root form, exact in J.
    Exact,
    /// Second order in J, optionally with the S_J^± shifts.
    Expanded { with_sj: bool },
}

/// Logical-qubit energies per photon number: (E00, E10, E01, E11) without ω_r n.
pub fn logical_energies(n: usize, p: &TlsDispersiveParams, form: DiagForm) -> [f64; 4] {
    let (a, b) = match form {
        DiagForm::Exact => {
            let d = p.delta_q_n(n) / 2.0;
            let s = p.sigma_q_n(n) / 2.0;
            let rd = d.signum() * (p.j * p.j + d * d).sqrt();
            let rs = s.signum() * (p.j * p.j + s * s).sqrt();
            (rs + rd, rs - rd)
        }
        DiagForm::Expanded { with_sj } => {
            let (sp, sm) = if with_sj { (p.s_j_plus, p.s_j_minus) } else { (0.0, 0.0) };
            let nf = n as f64;
            (
                p.qubits[0].omega_tilde + 2.0 * nf * p.qubits[0].stark + sp,
                p.qubits[1].omega_tilde + 2.0 * nf * p.qubits[1].stark + sm,
            )
        }
    };
    [(-a - b) / 2.0, (a - b) / 2.0, (-a + b) / 2.0, (a + b) / 2.0]
}

/// Diagonal Hamiltonian on dims [2, 2, N] in the logical basis.
pub fn h_diag(p: &TlsDispersiveParams, n_max: usize, form: DiagForm) -> Result<Operator> {
    let n_res = n_max + 1;
    let dims = [2, 2, n_res];
    let mut diag = vec![0.0; 4 * n_res];
    for n in 0..n_res {
        let e = logical_energies(n, p, form);
        for (k, (t1, t2)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            diag[(t1 * 2 + t2) * n_res + n] = p.omega_r * n as f64 + e[k];
        }
    }
    Operator::from_diagonal(&diag, &dims)
}

/// Form of the two-photon pair term x1 (τ₋¹τ₋² + h.c.).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum X1Form {
    /// x1 = λ⁽¹⁾Λ⁽²⁾ + λ⁽¹⁾Λ⁽²⁾, weighted by (f⁽¹⁾ + f⁽²⁾)/2
    Literal,
    /// x1 = Λ⁽¹⁾λ⁽²⁾ − λ⁽¹⁾Λ⁽²⁾, weighted by (f⁽¹⁾ − f⁽²⁾)/2; matches direct conjugation
    Conjugated,
}

/// Photon-number dressing of the qubit σz under the dispersive transformation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SnForm {
    /// 1 − (λ² + Λ²)(n + ½)
    Literal,
    /// 1 − 2(λ² + Λ²)(n + ½), which matches direct conjugation of σz
    Conjugated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FcForm {
    pub x1: X1Form,
    pub s_n: SnForm,
}

impl Default for FcForm {
    fn default() -> Self {
        Self {
            x1: X1Form::Conjugated,
            s_n: SnForm::Conjugated,
        }
    }
}

/// Operator-valued FC-drive terms in the logical frame, on dims [2, 2, N].
#[derive(Clone, Debug)]
pub struct FcTermDecomposition {
    pub h_z1: Operator,
    pub h_z2: Operator,
    pub h_sb1: Operator,
    pub h_sb2: Operator,
    pub h_po: Operator,
    pub h_qq: Operator,
    pub h_qq_phi: Operator,
    /// ŝ_n^(k) per photon number.
    pub s_n: Vec<[f64; 2]>,
    /// λ̂_J per photon number.
    pub lambda_j: Vec<f64>,
    pub x0: f64,
    pub x1: f64,
}

impl FcTermDecomposition {
    pub fn total(&self) -> Result<Operator> {
        self.h_z1
            .add(&self.h_z2)?
            .add(&self.h_sb1)?
            .add(&self.h_sb2)?
            .add(&self.h_po)?
            .add(&self.h_qq)?
            .add(&self.h_qq_phi)
    }
}

/// Logical-frame operator toolkit on [2, 2, N].
struct LogicalOps {
    dims: Vec<usize>,
    a: Operator,
    ad: Operator,
    tm: [Operator; 2],
    tp: [Operator; 2],
    tz: [Operator; 2],
}

impl LogicalOps {
    fn new(n_res: usize) -> Result<Self> {
        let dims = vec![2, 2, n_res];
        let a = embed(&ladder(n_res)?, 2, &dims)?;
        let sm = projector(0, 1, 2)?;
        let z = Operator::from_diagonal(&[-1.0, 1.0], &[2])?;
        let tm = [embed(&sm, 0, &dims)?, embed(&sm, 1, &dims)?];
        let tp = [tm[0].dagger(), tm[1].dagger()];
        let tz = [embed(&z, 0, &dims)?, embed(&z, 1, &dims)?];
        Ok(Self {
            ad: a.dagger(),
            a,
            dims,
            tm,
            tp,
            tz,
        })
    }

    /// Diagonal function of the photon number.
    fn fun(&self, f: impl Fn(usize) -> f64) -> Operator {
        let n_res = self.dims[2];
        let diag: Vec<f64> = (0..4 * n_res).map(|i| f(i % n_res)).collect();
        Operator::from_diagonal(&diag, &self.dims).expect("dims consistent")
    }

    fn zero(&self) -> Operator {
        Operator::zeros(&self.dims)
    }
}

fn prod(ops: &[&Operator]) -> Operator {
    let mut out = ops[0].clone();
    for op in &ops[1..] {
        out = out.dot(op).expect("same dims");
    }
    out
}

fn sum(ops: &[Operator]) -> Operator {
    let mut out = ops[0].clone();
    for op in &ops[1..] {
        out = out.add(op).expect("same dims");
    }
    out
}

fn herm(op: &Operator) -> Operator {
    op.add(&op.dagger()).expect("same dims")
}

/// FC drive f1 σz¹/2 + f2 σz²/2 expressed in the diagonal logical frame.
///
/// `exact = false` gives the leading forms to first order in λ̂_J; `exact = true`
/// keeps the mixing angles exactly.
pub fn fc_decomposition(
    p: &TlsDispersiveParams,
    f1: f64,
    f2: f64,
    exact: bool,
    form: FcForm,
    n_max: usize,
) -> Result<FcTermDecomposition> {
    let n_res = n_max + 1;
    let o = LogicalOps::new(n_res)?;
    let [q1, q2] = &p.qubits;
    let (l1, bl1, l2, bl2) = (q1.lambda, q1.big_lambda, q2.lambda, q2.big_lambda);
    let s_n: Vec<[f64; 2]> = (0..n_res)
        .map(|n| {
            let m = (n as f64 + 0.5)
                * match form.s_n {
                    SnForm::Literal => 1.0,
                    SnForm::Conjugated => 2.0,
                };
            [
                1.0 - (l1 * l1 + bl1 * bl1) * m,
                1.0 - (l2 * l2 + bl2 * bl2) * m,
            ]
        })
        .collect();
    let lambda_j: Vec<f64> = (0..n_res).map(|n| p.j / p.delta_q_n(n)).collect();
    let angles = (0..n_res)
        .map(|n| mixing_angles(n, p))
        .collect::<Result<Vec<_>>>()?;
    let x0 = l1 * l2 - bl1 * bl2;
    let x1 = match form.x1 {
        X1Form::Literal => l1 * bl2 + l1 * bl2,
        X1Form::Conjugated => bl1 * l2 - l1 * bl2,
    };
    let fp = match form.x1 {
        X1Form::Literal => (f1 + f2) / 2.0,
        X1Form::Conjugated => (f1 - f2) / 2.0,
    };

    let s1 = o.fun(|n| s_n[n][0]);
    let s2 = o.fun(|n| s_n[n][1]);
    let flip = herm(&prod(&[&o.tm[0], &o.tp[1]])); // τ₋¹τ₊² + h.c.
    let pair = herm(&prod(&[&o.tm[0], &o.tm[1]])); // τ₋¹τ₋² + h.c.
    let sq = o.a.dot(&o.a)?.add(&o.ad.dot(&o.ad)?)?;

    let mut out = if exact {
        let ca = |f: &dyn Fn(f64, f64) -> f64| o.fun(|n| f(angles[n].alpha, angles[n].beta));
        let c2sum = ca(&|a, b| (2.0 * a).cos() + (2.0 * b).cos());
        let c2dif = ca(&|a, b| (2.0 * a).cos() - (2.0 * b).cos());
        let cacb = ca(&|a, b| a.cos() * b.cos());
        let sasb = ca(&|a, b| a.sin() * b.sin());
        let casb = ca(&|a, b| a.cos() * b.sin());
        let sacb = ca(&|a, b| a.sin() * b.cos());
        let sca = ca(&|a, _| a.sin() * a.cos());
        let scb = ca(&|_, b| b.sin() * b.cos());
        let c2a = ca(&|a, _| (2.0 * a).cos());
        let c2b = ca(&|_, b| (2.0 * b).cos());

        let h_z1 = sum(&[
            prod(&[&s1, &c2sum, &o.tz[0]]).scale(c(f1 / 4.0)),
            prod(&[&s2, &c2dif, &o.tz[0]]).scale(c(-f2 / 4.0)),
        ]);
        let h_z2 = sum(&[
            prod(&[&s1, &c2dif, &o.tz[1]]).scale(c(-f1 / 4.0)),
            prod(&[&s2, &c2sum, &o.tz[1]]).scale(c(f2 / 4.0)),
        ]);
        let lin = |x: &Operator, s: f64, y: &Operator, t: f64| x.scale(c(s)).add(&y.scale(c(t))).unwrap();
        let tz1 = &o.tz[0];
        let tz2 = &o.tz[1];
        let sb1_inner = sum(&[
            prod(&[&lin(&cacb, l1, &sasb, -bl1), &o.ad, &o.tm[0]]),
            prod(&[&lin(&cacb, bl1, &sasb, -l1), &o.ad, &o.tp[0]]),
            prod(&[&lin(&casb, l1, &sacb, bl1), &o.ad, tz1, &o.tp[1]]).scale(c(-1.0)),
            prod(&[&lin(&sacb, l1, &casb, bl1), &o.ad, tz1, &o.tm[1]]).scale(c(-1.0)),
        ]);
        let h_sb1 = herm(&sb1_inner).scale(c(-f1));
        let sb2_inner = sum(&[
            prod(&[&lin(&cacb, l2, &sasb, bl2), &o.ad, &o.tm[1]]),
            prod(&[&lin(&cacb, bl2, &sasb, l2), &o.ad, &o.tp[1]]),
            prod(&[&lin(&sacb, bl2, &casb, -l2), &o.ad, &o.tp[0], tz2]),
            prod(&[&lin(&sacb, l2, &casb, -bl2), &o.ad, &o.tm[0], tz2]),
        ]);
        let h_sb2 = herm(&sb2_inner).scale(c(-f2));
        let (p1, p2) = (l1 * bl1 * f1, l2 * bl2 * f2);
        let po_inner = sum(&[
            prod(&[&lin(&c2sum, p1, &c2dif, -p2), tz1]).scale(c(0.5)),
            prod(&[&lin(&c2dif, -p1, &c2sum, p2), tz2]).scale(c(0.5)),
            prod(&[&sca, &flip]).scale(c(2.0 * (p1 - p2))),
            prod(&[&scb, &pair]).scale(c(2.0 * (p1 + p2))),
        ]);
        let h_po = prod(&[&sq, &po_inner]).scale(c(-1.0));
        let fs = (f1 + f2) / 2.0;
        let h_qq = sum(&[
            prod(&[
                &sum(&[
                    c2a.scale(c(-fs * x0)),
                    prod(&[&lin(&s1, f1, &s2, -f2), &sca]),
                ]),
                &flip,
            ]),
            prod(&[
                &sum(&[
                    c2b.scale(c(-fp * x1)),
                    prod(&[&lin(&s1, f1, &s2, f2), &scb]),
                ]),
                &pair,
            ]),
        ]);
        let ee1 = o.tp[0].dot(&o.tm[0])?; // |1⟩⟨1| on qubit 1
        let gg1 = o.tm[0].dot(&o.tp[0])?;
        let ee2 = o.tp[1].dot(&o.tm[1])?;
        let gg2 = o.tm[1].dot(&o.tp[1])?;
        let angles = &angles;
        let cos2 = |f: fn(f64) -> f64, sel: usize| {
            o.fun(move |n| {
                let ang = if sel == 0 { angles[n].alpha } else { angles[n].beta };
                f(ang).powi(2)
            })
        };
        let (cb2, sb2, ca2, sa2) = (cos2(f64::cos, 1), cos2(f64::sin, 1), cos2(f64::cos, 0), cos2(f64::sin, 0));
        let phi_a = sum(&[
            prod(&[&sum(&[prod(&[&cb2, &ee1]), prod(&[&sb2, &gg1])]), tz2]),
            prod(&[tz1, &sum(&[prod(&[&cb2, &ee2]), prod(&[&sb2, &gg2])])]).scale(c(-1.0)),
        ]);
        let phi_b = sum(&[
            prod(&[&sum(&[prod(&[&sa2, &ee1]), prod(&[&ca2, &gg1])]), tz2]),
            prod(&[tz1, &sum(&[prod(&[&ca2, &ee2]), prod(&[&sa2, &gg2])])]).scale(c(-1.0)),
        ]);
        let h_qq_phi = sum(&[
            prod(&[&sca, &phi_a]).scale(c(-(f1 + f2) * x0)),
            prod(&[&scb, &phi_b]).scale(c(2.0 * fp * x1)),
        ]);
        FcTermDecomposition {
            h_z1,
            h_z2,
            h_sb1,
            h_sb2,
            h_po,
            h_qq,
            h_qq_phi,
            s_n: vec![],
            lambda_j: vec![],
            x0,
            x1,
        }
    } else {
        let lj = o.fun(|n| lambda_j[n]);
        let lj2 = o.fun(|n| lambda_j[n] * lambda_j[n]);
        let one_m = o.fun(|n| 1.0 - lambda_j[n] * lambda_j[n]);
        let h_z1 = sum(&[
            prod(&[&one_m, &s1]).scale(c(f1)),
            prod(&[&lj2, &s2]).scale(c(f2)),
        ])
        .dot(&o.tz[0])?
        .scale(c(0.5));
        let h_z2 = sum(&[
            prod(&[&lj2, &s1]).scale(c(f1)),
            prod(&[&one_m, &s2]).scale(c(f2)),
        ])
        .dot(&o.tz[1])?
        .scale(c(0.5));
        let sb1_inner = sum(&[
            prod(&[&o.ad, &o.tm[0]]).scale(c(l1)),
            prod(&[&o.ad, &o.tp[0]]).scale(c(bl1)),
            prod(&[&lj, &o.tz[0], &o.ad, &o.tm[1]]).scale(c(l1)),
            prod(&[&lj, &o.tz[0], &o.ad, &o.tp[1]]).scale(c(-bl1)),
        ]);
        let h_sb1 = herm(&sb1_inner).scale(c(-f1));
        let sb2_inner = sum(&[
            prod(&[&o.ad, &o.tm[1]]).scale(c(l2)),
            prod(&[&o.ad, &o.tp[1]]).scale(c(bl2)),
            prod(&[&lj, &o.ad, &o.tm[0], &o.tz[1]]).scale(c(-l2)),
            prod(&[&lj, &o.ad, &o.tp[0], &o.tz[1]]).scale(c(-bl2)),
        ]);
        let h_sb2 = herm(&sb2_inner).scale(c(-f2));
        let h_po = sum(&[
            prod(&[&o.tz[0], &sq]).scale(c(l1 * bl1 * f1)),
            prod(&[&o.tz[1], &sq]).scale(c(l2 * bl2 * f2)),
        ])
        .scale(c(-1.0));
        let fs = (f1 + f2) / 2.0;
        let h_qq = sum(&[
            prod(&[&sum(&[o.fun(|_| -fs * x0), lj.scale(c(-(f1 - f2)))]), &flip]),
            // J/Σ̃ counterpart of λ̂_J; same order as x1
            prod(&[&o.fun(|n| -fp * x1 - (f1 + f2) * p.j / p.sigma_q_n(n)), &pair]),
        ]);
        FcTermDecomposition {
            h_z1,
            h_z2,
            h_sb1,
            h_sb2,
            h_po,
            h_qq,
            h_qq_phi: o.zero(),
            s_n: vec![],
            lambda_j: vec![],
            x0,
            x1,
        }
    };
    out.s_n = s_n;
    out.lambda_j = lambda_j;
    Ok(out)
}

/// Photon-number-resolved cross-resonance rate −ε sin(α_n + β_n).
pub fn cross_resonance_term(p: &TlsDispersiveParams, drive: f64, n_max: usize) -> Result<Vec<f64>> {
    (0..=n_max)
        .map(|n| {
            let m = mixing_angles(n, p)?;
            Ok(-drive * (m.alpha + m.beta).sin())
        })
        .collect()
}

/// Generator of the two-level dispersive transformation on bare dims [2, 2, N].
pub fn tls_generator(p: &TlsDispersiveParams, n_res: usize) -> Result<Operator> {
    let dims = [2, 2, n_res];
    let a = embed(&ladder(n_res)?, 2, &dims)?;
    let ad = a.dagger();
    let mut g = Operator::zeros(&dims);
    for (k, q) in p.qubits.iter().enumerate() {
        let sm = embed(&projector(0, 1, 2)?, k, &dims)?;
        let sp = sm.dagger();
        let sz = embed(&Operator::from_diagonal(&[-1.0, 1.0], &[2])?, k, &dims)?;
        let r = ad.dot(&sm)?.sub(&a.dot(&sp)?)?.scale(c(q.lambda));
        let cr = a.dot(&sm)?.sub(&ad.dot(&sp)?)?.scale(c(q.big_lambda));
        let squeeze = sz.dot(&a.dot(&a)?.sub(&ad.dot(&ad)?)?)?.scale(c(q.xi));
        g = g.add(&r)?.add(&cr)?.add(&squeeze)?;
    }
    Ok(g)
}

/// Unitary taking the logical basis |τ1 τ2; n⟩ to dispersive-frame bare states on [2, 2, N].
pub fn mixing_unitary(p: &TlsDispersiveParams, n_res: usize) -> Result<Operator> {
    let dims = [2, 2, n_res];
    let mut m = CMat::zeros((4 * n_res, 4 * n_res));
    // (ee, eg, ge, gg) and logical (00, 10, 01, 11) as (q1, q2) labels
    let bare = [(1, 1), (1, 0), (0, 1), (0, 0)];
    let logical = [(0, 0), (1, 0), (0, 1), (1, 1)];
    for n in 0..n_res {
        let v = mixing_angles(n, p)?.eigenvectors();
        for (r, &(b1, b2)) in bare.iter().enumerate() {
            for (col, &(l1, l2)) in logical.iter().enumerate() {
                m[[(b1 * 2 + b2) * n_res + n, (l1 * 2 + l2) * n_res + n]] = c(v[[r, col]]);
            }
        }
    }
    Operator::new(m, dims.to_vec())
}

/// Coefficients of one transmon in the many-level dispersive frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MlsTransmonCoeffs {
    /// Bare level energies relative to ground.
    pub omega: Vec<f64>,
    /// g_i between levels i and i+1.
    pub g: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub big_lambda: Vec<f64>,
    pub chi: Vec<f64>,
    pub mu: Vec<f64>,
    pub lamb: Vec<f64>,
    pub stark: Vec<f64>,
    pub omega_tilde: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_p: Vec<f64>,
    pub xi_pp: Vec<f64>,
    pub zeta: Vec<f64>,
    pub zeta_p: Vec<f64>,
    pub eta: Vec<f64>,
    pub eta_p: Vec<f64>,
}

impl MlsTransmonCoeffs {
    pub fn levels(&self) -> usize {
        self.omega.len()
    }

    /// Dressed splitting ω̃_{i+1} − ω̃_i.
    pub fn dressed_splitting(&self, i: usize) -> f64 {
        self.omega_tilde[i + 1] - self.omega_tilde[i]
    }
}

/// Sign convention for the ξ′, ξ″ denominators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum XiSign {
    /// 2(ω_i − ω_{i+2})
    Literal,
    /// 2(ω_{i+2} − ω_i), which cancels the Π_{i,i+2} terms with U = e^G, H_D = e^{−G} H e^{G}
    Cancelling,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MlsDispersiveModel {
    pub omega_r: f64,
    pub transmons: Vec<MlsTransmonCoeffs>,
    /// J_ij between transition i of transmon 1 and j of transmon 2.
    pub j: Vec<Vec<f64>>,
    pub j_prime: Vec<Vec<f64>>,
    pub lambda_j: Vec<Vec<f64>>,
    pub big_lambda_j: Vec<Vec<f64>>,
    pub xi_sign: XiSign,
    pub warnings: Vec<String>,
}

fn transmon_coeffs(
    k: usize,
    omega: &[f64],
    g: &[f64],
    wr: f64,
    xi_sign: XiSign,
    warnings: &mut Vec<String>,
) -> Result<MlsTransmonCoeffs> {
    let m = omega.len();
    if m < 2 || g.len() + 1 != m {
        return Err(Error::DimensionMismatch {
            expected: m.saturating_sub(1),
            got: g.len(),
        });
    }
    let mut delta = Vec::with_capacity(m - 1);
    let mut sigma = Vec::with_capacity(m - 1);
    for i in 0..m - 1 {
        let w = omega[i + 1] - omega[i];
        delta.push(nonzero(w - wr, &format!("transmon {k} detuning Δ_{i}"))?);
        sigma.push(nonzero(w + wr, &format!("transmon {k} sum Σ_{i}"))?);
    }
    let lambda: Vec<f64> = (0..m - 1).map(|i| g[i] / delta[i]).collect();
    let big_lambda: Vec<f64> = (0..m - 1).map(|i| g[i] / sigma[i]).collect();
    for (i, l) in lambda.iter().enumerate() {
        if l.abs() >= DISPERSIVE_WARN {
            warnings.push(format!("transmon {k}, transition {i}: |λ| = {:.3} outside dispersive regime", l.abs()));
        }
    }
    let chi: Vec<f64> = (0..m - 1).map(|i| g[i] * lambda[i]).collect();
    let mu: Vec<f64> = (0..m - 1).map(|i| g[i] * big_lambda[i]).collect();
    // boundary values vanish below level 0 and above level M−1
    let at = |v: &[f64], i: isize| if i < 0 || i as usize >= v.len() { 0.0 } else { v[i as usize] };
    let lamb: Vec<f64> = (0..m as isize).map(|i| at(&chi, i - 1) - at(&mu, i)).collect();
    let stark: Vec<f64> = (0..m as isize)
        .map(|i| at(&chi, i - 1) + at(&mu, i - 1) - at(&chi, i) - at(&mu, i))
        .collect();
    let omega_tilde: Vec<f64> = (0..m).map(|i| omega[i] + lamb[i]).collect();
    let xi: Vec<f64> = stark.iter().map(|s| s / (4.0 * wr)).collect();
    let mut eta = Vec::new();
    let mut eta_p = Vec::new();
    let mut xi_p = Vec::new();
    let mut xi_pp = Vec::new();
    let mut zeta = Vec::new();
    let mut zeta_p = Vec::new();
    for i in 0..m.saturating_sub(2) {
        let e = g[i] * lambda[i + 1] - g[i + 1] * lambda[i];
        let ep = g[i] * big_lambda[i + 1] - g[i + 1] * big_lambda[i];
        let span = omega[i + 2] - omega[i];
        let d = match xi_sign {
            XiSign::Literal => -span,
            XiSign::Cancelling => span,
        };
        let d = nonzero(2.0 * d, &format!("transmon {k} two-photon span ω_{} − ω_{i}", i + 2))?;
        xi_p.push((e + ep) / d);
        xi_pp.push((g[i] * lambda[i + 1] - g[i + 1] * big_lambda[i]) / d);
        zeta.push(e / nonzero(2.0 * (span - 2.0 * wr), &format!("transmon {k} two-photon red detuning at level {i}"))?);
        zeta_p.push(ep / nonzero(2.0 * (span + 2.0 * wr), &format!("transmon {k} two-photon blue sum at level {i}"))?);
        eta.push(e);
        eta_p.push(ep);
    }
    Ok(MlsTransmonCoeffs {
        omega: omega.to_vec(),
        g: g.to_vec(),
        delta,
        sigma,
        lambda,
        big_lambda,
        chi,
        mu,
        lamb,
        stark,
        omega_tilde,
        xi,
        xi_p,
        xi_pp,
        zeta,
        zeta_p,
        eta,
        eta_p,
    })
}

impl MlsDispersiveModel {
    /// Builds the model from bare level energies and couplings g_i (same units as `omega_r`).
    pub fn from_levels(omega_r: f64, levels: &[Vec<f64>], couplings: &[Vec<f64>], xi_sign: XiSign) -> Result<Self> {
        let mut warnings = Vec::new();
        let transmons = levels
            .iter()
            .zip(couplings)
            .enumerate()
            .map(|(k, (w, g))| transmon_coeffs(k + 1, w, g, omega_r, xi_sign, &mut warnings))
            .collect::<Result<Vec<_>>>()?;
        let (mut j, mut j_prime, mut lambda_j, mut big_lambda_j) = (vec![], vec![], vec![], vec![]);
        if transmons.len() == 2 {
            let (t1, t2) = (&transmons[0], &transmons[1]);
            for i in 0..t1.levels() - 1 {
                let (mut rj, mut rjp, mut rl, mut rbl) = (vec![], vec![], vec![], vec![]);
                for jj in 0..t2.levels() - 1 {
                    let jij = 0.5 * t1.g[i] * (t2.lambda[jj] - t2.big_lambda[jj])
                        + 0.5 * t2.g[jj] * (t1.lambda[i] - t1.big_lambda[i]);
                    let diff = nonzero(
                        t1.dressed_splitting(i) - t2.dressed_splitting(jj),
                        &format!("detuning between transition {i} of transmon 1 and {jj} of transmon 2"),
                    )?;
                    let tot = nonzero(
                        t1.dressed_splitting(i) + t2.dressed_splitting(jj),
                        &format!("sum of transition {i} of transmon 1 and {jj} of transmon 2"),
                    )?;
                    rj.push(jij);
                    rjp.push(jij);
                    rl.push(jij / diff);
                    rbl.push(jij / tot);
                }
                j.push(rj);
                j_prime.push(rjp);
                lambda_j.push(rl);
                big_lambda_j.push(rbl);
            }
        }
        Ok(Self {
            omega_r,
            transmons,
            j,
            j_prime,
            lambda_j,
            big_lambda_j,
            xi_sign,
            warnings,
        })
    }

    /// Dressed-level Hamiltonian energy of |levels; n⟩ to second order.
    pub fn energy(&self, labels: &[usize], n: usize) -> f64 {
        let mut e = self.omega_r * n as f64;
        for (t, &l) in self.transmons.iter().zip(labels) {
            e += t.omega_tilde[l] + t.stark[l] * n as f64;
        }
        e
    }

    /// Δ̃_{j,j+1}^n of transmon `k`.
    pub fn dressed_detuning(&self, k: usize, j: usize, n: usize) -> f64 {
        let t = &self.transmons[k];
        t.omega_tilde[j + 1] - t.omega_tilde[j] - self.omega_r + n as f64 * (t.stark[j + 1] - t.stark[j])
            - t.stark[j]
    }
}

/// MLS model of a device in GHz.
pub fn mls_model(device: &Device) -> Result<MlsDispersiveModel> {
    mls_model_with(device, XiSign::Cancelling)
}

pub fn mls_model_with(device: &Device, xi_sign: XiSign) -> Result<MlsDispersiveModel> {
    let levels: Vec<Vec<f64>> = device.transmons.iter().map(|t| t.static_levels.clone()).collect();
    let couplings: Vec<Vec<f64>> = device
        .transmons
        .iter()
        .zip(&device.spec.g_ge)
        .map(|(t, g)| (0..t.spec.levels - 1).map(|i| g * ((i + 1) as f64).sqrt()).collect())
        .collect();
    MlsDispersiveModel::from_levels(device.spec.omega_r, &levels, &couplings, xi_sign)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SidebandCoefficient {
    pub transmon: usize,
    pub level: usize,
    /// δf_i λ_i, multiplying Π_{i,i+1} a† + h.c.
    pub red: f64,
    /// δf_i Λ_i, multiplying Π_{i,i+1} a + h.c.
    pub blue: f64,
}

/// First-order sideband amplitudes for per-level modulations f_i^(k).
pub fn mls_fc_sidebands(model: &MlsDispersiveModel, f: &[Vec<f64>]) -> Result<Vec<SidebandCoefficient>> {
    if f.len() != model.transmons.len() {
        return Err(Error::DimensionMismatch {
            expected: model.transmons.len(),
            got: f.len(),
        });
    }
    let mut out = Vec::new();
    for (k, (t, fk)) in model.transmons.iter().zip(f).enumerate() {
        if fk.len() != t.levels() {
            return Err(Error::DimensionMismatch {
                expected: t.levels(),
                got: fk.len(),
            });
        }
        for i in 0..t.levels() - 1 {
            let df = fk[i + 1] - fk[i];
            out.push(SidebandCoefficient {
                transmon: k,
                level: i,
                red: df * t.lambda[i],
                blue: df * t.big_lambda[i],
            });
        }
    }
    Ok(out)
}

/// Generator of the many-level dispersive transformation on dims [M1, ..., N].
pub fn mls_generator(model: &MlsDispersiveModel, dims: &[usize]) -> Result<Operator> {
    let r = dims.len() - 1;
    let a = embed(&ladder(dims[r])?, r, dims)?;
    let ad = a.dagger();
    let a2 = a.dot(&a)?;
    let ad2 = ad.dot(&ad)?;
    let num = ad.dot(&a)?;
    let mut g = Operator::zeros(dims);
    for (k, t) in model.transmons.iter().enumerate() {
        let m = t.levels();
        if dims[k] != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: dims[k],
            });
        }
        let pi = |i: usize, j: usize| embed(&projector(i, j, m).unwrap(), k, dims).unwrap();
        let mut add = |op: Operator| -> Result<()> {
            let anti = op.sub(&op.dagger())?;
            g = g.add(&anti)?;
            Ok(())
        };
        for i in 0..m - 1 {
            let p = pi(i, i + 1);
            add(p.dot(&ad)?.scale(c(t.lambda[i])))?;
            add(p.dot(&a)?.scale(c(t.big_lambda[i])))?;
        }
        for i in 0..m {
            add(a2.dot(&pi(i, i))?.scale(c(t.xi[i])))?;
        }
        for i in 0..m.saturating_sub(2) {
            let p = pi(i, i + 2);
            add(num.scale(c(t.xi_p[i])).add(&Operator::identity(dims).scale(c(t.xi_pp[i])))?.dot(&p)?)?;
            add(p.dot(&ad2)?.scale(c(t.zeta[i])))?;
            add(p.dot(&a2)?.scale(c(t.zeta_p[i])))?;
        }
    }
    Ok(g)
}

/// Generator removing the second-order transmon-transmon exchange.
pub fn mls_j_generator(model: &MlsDispersiveModel, dims: &[usize]) -> Result<Operator> {
    if model.transmons.len() != 2 {
        return Ok(Operator::zeros(dims));
    }
    let (m1, m2) = (model.transmons[0].levels(), model.transmons[1].levels());
    let mut g = Operator::zeros(dims);
    for i in 0..m1 - 1 {
        for j in 0..m2 - 1 {
            let p1 = embed(&projector(i, i + 1, m1)?, 0, dims)?;
            let down2 = embed(&projector(j + 1, j, m2)?, 1, dims)?;
            let up2 = embed(&projector(j, j + 1, m2)?, 1, dims)?;
            let op = p1
                .dot(&down2)?
                .scale(c(model.lambda_j[i][j]))
                .add(&p1.dot(&up2)?.scale(c(model.big_lambda_j[i][j])))?;
            g = g.add(&op.sub(&op.dagger())?)?;
        }
    }
    Ok(g)
}

/// e^{−G} H e^{G} for anti-Hermitian G, by exact exponential.
pub fn transform(h: &Operator, generator: &Operator) -> Result<Operator> {
    let u = linalg::expm_antihermitian(generator.data())?;
    let out = dagger(&u.view()).dot(h.data()).dot(&u);
    Operator::new(out, h.dims().to_vec())
}

/// Norm of the elements of `e^{−G} H e^{G}` that connect different blocks.
///
/// `blocks[i]` is the block label of basis state `i`; states labelled `None` are
/// excluded (typically those at the truncation edge).
pub fn bch_residual(h: &Operator, generator: &Operator, blocks: &[Option<usize>]) -> Result<f64> {
    let t = transform(h, generator)?;
    off_block_norm(&t, blocks)
}

pub fn off_block_norm(op: &Operator, blocks: &[Option<usize>]) -> Result<f64> {
    if blocks.len() != op.order() {
        return Err(Error::DimensionMismatch {
            expected: op.order(),
            got: blocks.len(),
        });
    }
    let m = op.data();
    let mut acc = 0.0;
    for (i, bi) in blocks.iter().enumerate() {
        for (j, bj) in blocks.iter().enumerate() {
            if let (Some(x), Some(y)) = (bi, bj) {
                if x != y {
                    acc += m[[i, j]].norm_sqr();
                }
            }
        }
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn typical_params() -> TlsDispersiveParams {
        tls_params(5.67, 7.379, 7.8, 0.1, 0.1).unwrap()
    }

    #[test]
    fn symmetric_j() {
        let g = 0.1;
        let p = tls_params(6.0, 6.0 + 1e-3, 7.0, g, g).unwrap();
        let q = &p.qubits[0];
        let want = g * g * (1.0 / q.delta - 1.0 / q.sigma);
        assert!((p.j - want).abs() < 2e-3 * want.abs());
    }

    #[test]
    fn zero_coupling() {
        let p = tls_params(5.0, 6.0, 7.0, 0.0, 0.0).unwrap();
        assert_eq!(p.j, 0.0);
        assert_eq!(p.qubits[0].omega_tilde, 5.0);
        let m = mixing_angles(0, &p).unwrap();
        assert_eq!(m.alpha, 0.0);
        assert_eq!(m.beta, 0.0);
    }

    #[test]
    fn resonance_is_degenerate() {
        assert!(matches!(tls_params(7.0, 6.0, 7.0, 0.1, 0.1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mixing_at_zero_detuning() {
        let mut p = typical_params();
        p.delta_q = 0.0;
        p.delta_s = 0.0;
        let m = mixing_angles(0, &p).unwrap();
        assert!((m.alpha + FRAC_PI_4 * p.j.signum()).abs() < 1e-15);
        p.j = 0.0;
        assert!(mixing_angles(0, &p).is_err());
    }

    #[test]
    fn block_eigenvalues() {
        let p = typical_params();
        for n in 0..4 {
            let h = block_hamiltonian(n, &p);
            let (vals, _) = linalg::eigh_real(&h);
            let rd = (p.j.powi(2) + (p.delta_q_n(n) / 2.0).powi(2)).sqrt();
            let rs = (p.j.powi(2) + (p.sigma_q_n(n) / 2.0).powi(2)).sqrt();
            let mut want = [-rs, -rd, rd, rs];
            want.sort_by(f64::total_cmp);
            for (a, b) in vals.iter().zip(want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_j_mixing_series() {
        let mut p = typical_params();
        p.j = 1e-5;
        let m = mixing_angles(0, &p).unwrap();
        assert!((m.alpha + p.j / p.delta_q).abs() < 1e-12);
    }

    #[test]
    fn sidebands_vanish_for_uniform_modulation() {
        let model = MlsDispersiveModel::from_levels(
            7.8,
            &[vec![0.0, 5.67, 11.02, 15.98]],
            &[vec![0.1, 0.1 * 2f64.sqrt(), 0.1 * 3f64.sqrt()]],
            XiSign::Cancelling,
        )
        .unwrap();
        let s = mls_fc_sidebands(&model, &[vec![0.3; 4]]).unwrap();
        assert!(s.iter().all(|x| x.red == 0.0 && x.blue == 0.0));
    }

    #[test]
    fn equally_spaced_levels_kill_eta() {
        let g = 0.1;
        let model = MlsDispersiveModel::from_levels(
            7.8,
            &[vec![0.0, 5.0, 10.0, 15.0]],
            &[vec![g, g * 2f64.sqrt(), g * 3f64.sqrt()]],
            XiSign::Cancelling,
        )
        .unwrap();
        let t = &model.transmons[0];
        // g_i ∝ √(i+1) does not make η vanish; check the literal identity instead
        for i in 0..2 {
            let ident = t.lambda[i] * t.lambda[i + 1]
                * ((t.omega[i + 1] - t.omega[i]) - (t.omega[i + 2] - t.omega[i + 1]));
            assert!((t.eta[i] - ident).abs() < 1e-15 + 1e-12 * t.eta[i].abs());
            assert!(t.eta[i].abs() < 1e-15);
        }
    }
}
