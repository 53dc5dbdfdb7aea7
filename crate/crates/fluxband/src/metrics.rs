//! Gate and process fidelities, Choi matrices, U_ent phase fits and Bell-state tables.
//!
//! Two-qubit matrices use the basis order |00⟩, |10⟩, |01⟩, |11⟩ with labels
//! |q1 q2⟩, so index = q1 + 2·q2.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dagger, eye, kron, trace, CMat, C64};

fn check_square(m: &CMat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn same_dim(u: &CMat, v: &CMat) -> Result<usize> {
    let d = check_square(u)?;
    if check_square(v)? != d {
        return Err(Error::DimensionMismatch { expected: d, got: v.nrows() });
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateFidelity {
    /// |tr(U†V)|²/d².
    pub f: f64,
    /// (dF + 1)/(d + 1).
    pub f_avg: f64,
}

pub fn gate_fidelity(u: &CMat, v: &CMat) -> Result<GateFidelity> {
    let d = same_dim(u, v)? as f64;
    let f = trace(&dagger(&u.view()).dot(v)).norm_sqr() / (d * d);
    Ok(GateFidelity {
        f,
        f_avg: average_from_process(f, d as usize),
    })
}

pub fn average_from_process(f: f64, d: usize) -> f64 {
    (d as f64 * f + 1.0) / (d as f64 + 1.0)
}

/// Average fidelity of a subspace map V (possibly leaky) to unitary U: [tr(MM†) + |tr M|²]/(d(d+1)), M = U†V.
pub fn leaky_average_fidelity(u: &CMat, v: &CMat) -> Result<f64> {
    let d = same_dim(u, v)? as f64;
    let m = dagger(&u.view()).dot(v);
    let mm = trace(&m.dot(&dagger(&m.view()))).re;
    Ok((mm + trace(&m).norm_sqr()) / (d * (d + 1.0)))
}

/// (1/d) Σ_ij |i⟩⟨j| ⊗ M(|i⟩⟨j|), copy first.
#[derive(Clone, Debug)]
pub struct ChoiMatrix {
    pub matrix: CMat,
    pub dim: usize,
}

const CHANNEL_TOL: f64 = 1e-8;

impl ChoiMatrix {
    /// From outputs[i][j] = M(|i⟩⟨j|). Does not require trace preservation.
    pub fn from_outputs(outputs: &[Vec<CMat>]) -> Result<Self> {
        let d = outputs.len();
        let mut m = CMat::zeros((d * d, d * d));
        for (i, row) in outputs.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            for (j, out) in row.iter().enumerate() {
                if out.dim() != (d, d) {
                    return Err(Error::DimensionMismatch { expected: d, got: out.nrows() });
                }
                for a in 0..d {
                    for b in 0..d {
                        m[[i * d + a, j * d + b]] = out[[a, b]] / d as f64;
                    }
                }
            }
        }
        Ok(Self { matrix: m, dim: d })
    }

    pub fn from_unitary(u: &CMat) -> Result<Self> {
        check_square(u)?;
        Self::from_outputs(&unitary_outputs(u))
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    /// tr[C₁C₂].
    pub fn overlap(&self, other: &ChoiMatrix) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(trace(&self.matrix.dot(&other.matrix)).re)
    }
}

/// Choi matrix of a trace-preserving map given as a closure on d×d operators.
pub fn choi_of(map: impl Fn(&CMat) -> Result<CMat>, d: usize) -> Result<ChoiMatrix> {
    let outputs = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mut e = CMat::zeros((d, d));
                    e[[i, j]] = C64::new(1.0, 0.0);
                    map(&e)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let c = ChoiMatrix::from_outputs(&outputs)?;
    if (c.trace() - 1.0).abs() > CHANNEL_TOL {
        return Err(Error::Domain(format!("map is not trace preserving (Choi trace {})", c.trace())));
    }
    Ok(c)
}

/// U|i⟩⟨j|U† for every i, j.
pub fn unitary_outputs(u: &CMat) -> Vec<Vec<CMat>> {
    let d = u.nrows();
    let ud = dagger(&u.view());
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mut m = CMat::zeros((d, d));
                    for a in 0..d {
                        for b in 0..d {
                            m[[a, b]] = u[[a, i]] * ud[[j, b]];
                        }
                    }
                    m
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChannelFidelity {
    /// Process (entanglement) fidelity tr[C_V C_Λ].
    pub process: f64,
    /// Mean population kept in the subspace.
    pub survival: f64,
    /// (d·F_pro + survival)/(d + 1); equals the standard formula for trace-preserving maps.
    pub average: f64,
    /// (d·F_pro + 1)/(d + 1) regardless of leakage.
    pub average_standard: f64,
}

/// Fidelity of a subspace channel, given by its outputs, against unitary `target`.
pub fn channel_fidelity(outputs: &[Vec<CMat>], target: &CMat) -> Result<ChannelFidelity> {
    let d = outputs.len();
    if target.dim() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, got: target.nrows() });
    }
    let cl = ChoiMatrix::from_outputs(outputs)?;
    let cv = ChoiMatrix::from_unitary(target)?;
    let process = cv.overlap(&cl)?;
    let survival = (0..d).map(|i| trace(&outputs[i][i]).re).sum::<f64>() / d as f64;
    Ok(ChannelFidelity {
        process,
        survival,
        average: (d as f64 * process + survival) / (d as f64 + 1.0),
        average_standard: average_from_process(process, d),
    })
}

/// U_ent(φ): identity on |00⟩, e^{iφ1} on |10⟩, and |01⟩ ↔ |11⟩ with phases e^{iφ3}, e^{iφ2}.
pub fn u_ent(phases: [f64; 3]) -> CMat {
    let mut u = CMat::zeros((4, 4));
    u[[0, 0]] = C64::new(1.0, 0.0);
    u[[1, 1]] = C64::from_polar(1.0, phases[0]);
    u[[2, 3]] = C64::from_polar(1.0, phases[1]);
    u[[3, 2]] = C64::from_polar(1.0, phases[2]);
    u
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseFit {
    /// φ1, φ2, φ3 in [0, 2π).
    pub phases: [f64; 3],
    /// Gate fidelity F of U_ent(φ) against the fitted matrix.
    pub fidelity: f64,
    /// Other grid maxima within tolerance of the best, if the maximum is not unique.
    pub degenerate: Vec<[f64; 3]>,
}

const GRID: usize = 64;
const DEGENERACY_TOL: f64 = 1e-9;

fn wrap(x: f64) -> f64 {
    let t = x.rem_euclid(std::f64::consts::TAU);
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

/// Phases maximizing |tr(U_ent(φ)†V)|²/16: a 64³ grid, then the exact stationary point.
///
/// tr(U_ent†V) = V₀₀ + Σ_k e^{−iφ_k} b_k is maximal when every term is aligned
/// with V₀₀, which fixes the refinement in closed form.
pub fn fit_phases(v: &CMat) -> Result<PhaseFit> {
    if v.dim() != (4, 4) {
        return Err(Error::DimensionMismatch { expected: 4, got: v.nrows() });
    }
    let b = [v[[1, 1]], v[[2, 3]], v[[3, 2]]];
    let f = |p: [f64; 3]| -> f64 {
        let mut t = v[[0, 0]];
        for k in 0..3 {
            t += C64::from_polar(1.0, -p[k]) * b[k];
        }
        t.norm_sqr() / 16.0
    };
    let step = std::f64::consts::TAU / GRID as f64;
    let mut best = ([0.0; 3], f64::MIN);
    for i in 0..GRID {
        for j in 0..GRID {
            for k in 0..GRID {
                let p = [i as f64 * step, j as f64 * step, k as f64 * step];
                let val = f(p);
                if val > best.1 {
                    best = (p, val);
                }
            }
        }
    }
    // the anchor is V₀₀ unless it vanishes, then the largest remaining term
    let anchor = if v[[0, 0]].norm() > 1e-12 {
        v[[0, 0]].arg()
    } else {
        b.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())).map_or(0.0, |(k, z)| z.arg() - best.0[k])
    };
    let mut phases = best.0;
    for k in 0..3 {
        if b[k].norm() > 1e-12 {
            phases[k] = wrap(b[k].arg() - anchor);
        }
    }
    let fidelity = f(phases);
    if fidelity + 1e-12 < best.1 {
        return Err(Error::Tolerance(format!(
            "refined phase fit {fidelity} is below the grid maximum {}",
            best.1
        )));
    }
    let mut degenerate = Vec::new();
    let free: Vec<usize> = (0..3).filter(|&k| b[k].norm() <= 1e-12).collect();
    if !free.is_empty() || v[[0, 0]].norm() <= 1e-12 {
        // any value of an unconstrained phase is optimal; list grid representatives
        for i in 0..GRID {
            let mut p = phases;
            for &k in &free {
                p[k] = i as f64 * step;
            }
            if (f(p) - fidelity).abs() < DEGENERACY_TOL && p != phases {
                degenerate.push(p);
            }
        }
    }
    Ok(PhaseFit {
        phases,
        fidelity,
        degenerate,
    })
}

/// Controlled-NOT with qubit 2 as control, in this module's basis order.
pub fn cnot() -> CMat {
    u_ent([0.0; 3])
}

/// Rotation diag(1, e^{iθ}) about z on qubit `k` (1 or 2).
pub fn z_rotation(k: usize, theta: f64) -> Result<CMat> {
    let r = {
        let mut m = eye(2);
        m[[1, 1]] = C64::from_polar(1.0, theta);
        m
    };
    match k {
        // index = q1 + 2·q2, so qubit 2 is the slow index
        1 => Ok(kron(&eye(2), &r)),
        2 => Ok(kron(&r, &eye(2))),
        _ => Err(Error::SlotOutOfRange { slot: k, len: 2 }),
    }
}

/// (θ1, θ2, θ3) making U⁽¹⁾_θ1 U_ent U⁽²⁾_θ2 U⁽¹⁾_θ3 a CNOT.
pub fn cnot_equivalence(phases: [f64; 3]) -> [f64; 3] {
    let [p1, p2, p3] = phases;
    [(p2 - p1 - p3) / 2.0, (p1 - p2 - p3) / 2.0, (p3 - p1 - p2) / 2.0]
}

/// U⁽¹⁾_θ1 V U⁽²⁾_θ2 U⁽¹⁾_θ3 with the angles from `phases`.
pub fn assemble_cnot(v: &CMat, phases: [f64; 3]) -> Result<CMat> {
    let [t1, t2, t3] = cnot_equivalence(phases);
    Ok(z_rotation(1, t1)?.dot(v).dot(&z_rotation(2, t2)?).dot(&z_rotation(1, t3)?))
}

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn combo(a: usize, b: usize, sign: f64) -> [C64; 4] {
    let mut v = [C64::new(0.0, 0.0); 4];
    v[a] += S;
    v[b] += sign * S;
    v
}

/// (|00⟩ ± |01⟩)/√2, (|10⟩ ± |11⟩)/√2.
pub fn bell_inputs() -> [[C64; 4]; 4] {
    [combo(0, 2, 1.0), combo(0, 2, -1.0), combo(1, 3, 1.0), combo(1, 3, -1.0)]
}

/// Φ± = (|00⟩ ± |11⟩)/√2, Ψ± = (|01⟩ ± |10⟩)/√2.
pub fn bell_states() -> [[C64; 4]; 4] {
    [combo(0, 3, 1.0), combo(0, 3, -1.0), combo(2, 1, 1.0), combo(2, 1, -1.0)]
}

/// Phases of the reference U_ent whose Bell table is one-to-one (|φ±⟩ → Φ∓, |ψ±⟩ → Ψ∓).
pub const BELL_REFERENCE: [f64; 3] = [0.0, std::f64::consts::PI, std::f64::consts::PI];

/// Populations |⟨Bell_b| C V |in_a⟩|², rows indexed by input.
///
/// With `fitted` phases, C = U_ent(reference)·U_ent(fitted)† removes the fitted
/// diagonal phases first; otherwise C = 1.
pub fn bell_populations(v: &CMat, fitted: Option<[f64; 3]>) -> Result<[[f64; 4]; 4]> {
    if v.dim() != (4, 4) {
        return Err(Error::DimensionMismatch { expected: 4, got: v.nrows() });
    }
    let m = match fitted {
        Some(p) => u_ent(BELL_REFERENCE).dot(&dagger(&u_ent(p).view())).dot(v),
        None => v.clone(),
    };
    let mut out = [[0.0; 4]; 4];
    for (a, inp) in bell_inputs().iter().enumerate() {
        let psi: Vec<C64> = (0..4).map(|r| (0..4).map(|k| m[[r, k]] * inp[k]).sum()).collect();
        for (b, bell) in bell_states().iter().enumerate() {
            let amp: C64 = bell.iter().zip(&psi).map(|(x, y)| x.conj() * y).sum();
            out[a][b] = amp.norm_sqr();
        }
    }
    Ok(out)
}

/// Index of the Bell state each input should land on under the reference U_ent.
pub const BELL_PATTERN: [usize; 4] = [1, 0, 3, 2];
