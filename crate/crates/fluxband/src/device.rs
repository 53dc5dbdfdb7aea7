//! Flux-tunable transmons coupled to a single resonator.
//!
//! Specs are written in ordinary-frequency units (GHz, µs, MHz); everything
//! returned as an [`Operator`] is in angular units (rad/ns).

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{embed, ladder, Operator};
use crate::linalg::{c, eigh_real, CMat, TWO_PI};

/// Oscillator basis used to diagonalize the Duffing Hamiltonian.
pub const DUFFING_BASIS: usize = 14;
/// Flux arguments beyond this (Φ0/π units) fall back to direct diagonalization.
const TABLE_FLUX_LIMIT: f64 = 0.45;
/// Below this E_J/E_C the truncated quartic binds spurious states among the low levels.
const TABLE_MIN_RATIO: f64 = 40.0;
const TABLE_DEGREE: usize = 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonSpec {
    /// Junction-sum Josephson energy E_JΣ (GHz).
    #[serde(rename = "E_J")]
    pub e_j: f64,
    #[serde(rename = "E_C")]
    pub e_c: f64,
    /// Static flux offset in Φ0/π units.
    pub phi: f64,
    pub levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub transmons: Vec<TransmonSpec>,
    /// Resonator frequency (GHz).
    pub omega_r: f64,
    pub resonator_levels: usize,
    /// Ground-to-excited coupling per transmon (GHz).
    pub g_ge: Vec<f64>,
    /// Resonator decay rate κ/2π (MHz).
    #[serde(default)]
    pub kappa: f64,
    /// Relaxation time per transmon (µs); `null` or missing means none.
    #[serde(rename = "T1", default)]
    pub t1: Vec<Option<f64>>,
}

impl TransmonSpec {
    pub fn ej_static(&self) -> f64 {
        self.e_j * (PI * self.phi).cos()
    }

    /// ω′_p = √(8 E_C E_JΣ cos φ_i) in GHz.
    pub fn plasma_static(&self) -> f64 {
        (8.0 * self.e_c * self.ej_static()).sqrt()
    }

    fn validate(&self, k: usize, warnings: &mut Vec<String>) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidDimension(self.levels));
        }
        if !(self.e_j > 0.0) || !(self.e_c > 0.0) {
            return Err(Error::Domain(format!(
                "transmon {k}: E_J and E_C must be positive"
            )));
        }
        // fluxes enter as π·φ, so |π·φ_i| ≤ π/4 means |φ_i| ≤ 1/4
        if self.phi.abs() > 0.25 + 1e-12 {
            return Err(Error::Domain(format!(
                "transmon {k}: |phi| = {} exceeds 0.25 (π/4 in phase)",
                self.phi.abs()
            )));
        }
        let ratio = self.ej_static() / self.e_c;
        if ratio < 20.0 {
            return Err(Error::Domain(format!(
                "transmon {k}: E_J(phi)/E_C = {ratio:.1} is below 20"
            )));
        }
        if ratio < 50.0 {
            warnings.push(format!(
                "transmon {k}: E_J(phi)/E_C = {ratio:.1} is below 50; Duffing model marginal"
            ));
        }
        Ok(())
    }
}

/// Real-symmetric Duffing matrix √(8E_CE_J)b†b − (E_C/12)(b+b†)⁴ in a `basis`-state oscillator space (GHz).
pub fn duffing_matrix(e_c: f64, e_j: f64, basis: usize) -> Array2<f64> {
    let mut x = Array2::<f64>::zeros((basis, basis));
    for j in 1..basis {
        let s = (j as f64).sqrt();
        x[[j - 1, j]] = s;
        x[[j, j - 1]] = s;
    }
    let x2 = x.dot(&x);
    let x4 = x2.dot(&x2);
    let wp = (8.0 * e_c * e_j).sqrt();
    let mut h = x4.mapv(|v| -e_c / 12.0 * v);
    for j in 0..basis {
        h[[j, j]] += wp * j as f64;
    }
    h
}

/// Lowest `levels` Duffing energies relative to the ground state (GHz).
///
/// The quartic term is unbounded below, so the result depends on the basis
/// size. The basis is kept small enough that no spurious state reaches the low
/// levels for E_J/E_C ≥ 40; a level with weight in the top basis states is
/// reported as an error instead of being returned.
pub fn duffing_levels(e_c: f64, e_j: f64, levels: usize) -> Result<Vec<f64>> {
    if !(e_j > 0.0) {
        return Err(Error::NonPositiveEj(e_j));
    }
    if levels + 3 > DUFFING_BASIS {
        return Err(Error::Domain(format!(
            "at most {} Duffing levels are supported",
            DUFFING_BASIS - 3
        )));
    }
    let h = duffing_matrix(e_c, e_j, DUFFING_BASIS);
    let (vals, vecs) = eigh_real(&h);
    for k in 0..levels {
        let tail: f64 = (DUFFING_BASIS - 3..DUFFING_BASIS)
            .map(|r| vecs[[r, k]].powi(2))
            .sum();
        if tail > 5e-2 {
            return Err(Error::Domain(format!(
                "Duffing level {k} at E_J={e_j}, E_C={e_c} is not bound in the truncated basis"
            )));
        }
    }
    Ok(vals[..levels].iter().map(|v| v - vals[0]).collect())
}

/// Duffing spectrum at `e_j` as a diagonal operator on the transmon's level space (rad/ns).
pub fn duffing_hamiltonian(spec: &TransmonSpec, e_j: f64) -> Result<Operator> {
    let lv = duffing_levels(spec.e_c, e_j, spec.levels)?;
    let ang: Vec<f64> = lv.iter().map(|v| TWO_PI * v).collect();
    Operator::from_diagonal(&ang, &[spec.levels])
}

/// Σ_j g √(j+1) |j⟩⟨j+1| in rad/ns.
pub fn coupling_operator(spec: &TransmonSpec, g_ge: f64) -> Result<Operator> {
    let a = ladder(spec.levels)?;
    Ok(a.scale(c(TWO_PI * g_ge)))
}

/// E_J at total flux argument `phi` (Φ0/π units).
pub fn ej_at_flux(spec: &TransmonSpec, phi: f64) -> Result<f64> {
    if phi.abs() >= 0.5 {
        return Err(Error::FluxOutOfBand(phi));
    }
    Ok(spec.e_j * (PI * phi).cos())
}

/// E_JΣ cos[π(φ_i + Δφ cos(ω_FC t))] with ω_FC in GHz and t in ns.
pub fn flux_to_ej(spec: &TransmonSpec, delta_phi: f64, omega_fc: f64, t: f64) -> Result<f64> {
    let reach = spec.phi.abs() + delta_phi.abs();
    if reach >= 0.5 {
        return Err(Error::FluxOutOfBand(reach));
    }
    ej_at_flux(spec, spec.phi + delta_phi * (TWO_PI * omega_fc * t).cos())
}

/// Chebyshev interpolant of a smooth function on `[lo, hi]`.
#[derive(Clone, Debug)]
struct Chebyshev {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    fn fit_many(lo: f64, hi: f64, degree: usize, outputs: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Vec<Self>> {
        let n = degree + 1;
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let x = (PI * (k as f64 + 0.5) / n as f64).cos();
                f(0.5 * (hi + lo) + 0.5 * (hi - lo) * x)
            })
            .collect();
        if samples.iter().any(|s| s.len() != outputs) {
            return Err(Error::Domain("level count changed across the E_J range".into()));
        }
        Ok((0..outputs)
            .map(|o| {
                let coeffs = (0..n)
                    .map(|j| {
                        let s: f64 = (0..n)
                            .map(|k| samples[k][o] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                            .sum();
                        let w = if j == 0 { 1.0 } else { 2.0 };
                        w * s / n as f64
                    })
                    .collect();
                Chebyshev { lo, hi, coeffs }
            })
            .collect())
    }

    fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn eval(&self, x: f64) -> f64 {
        let u = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &ck in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * u * b1 - b2 + ck;
            b2 = b1;
            b1 = b0;
        }
        u * b1 - b2 + self.coeffs[0]
    }
}

/// Fast instantaneous level energies of one transmon as a function of flux.
#[derive(Clone, Debug)]
pub struct TransmonModel {
    pub spec: TransmonSpec,
    table: Vec<Chebyshev>,
    /// Static level energies relative to ground (GHz).
    pub static_levels: Vec<f64>,
}

impl TransmonModel {
    pub fn new(spec: TransmonSpec) -> Result<Self> {
        let lo = (spec.e_j * (PI * TABLE_FLUX_LIMIT).cos()).max(TABLE_MIN_RATIO * spec.e_c);
        let hi = spec.e_j;
        let (ec, levels) = (spec.e_c, spec.levels);
        // the fit must not swallow solver errors, so probe both ends first
        duffing_levels(ec, lo, levels)?;
        duffing_levels(ec, hi, levels)?;
        let table = Chebyshev::fit_many(lo, hi, TABLE_DEGREE, levels, |ej| {
            duffing_levels(ec, ej, levels).unwrap_or_default()
        })?;
        let static_levels = duffing_levels(ec, spec.ej_static(), levels)?;
        Ok(Self {
            spec,
            table,
            static_levels,
        })
    }

    /// Level energies (GHz, relative to ground) at E_J.
    pub fn levels_at_ej(&self, e_j: f64) -> Result<Vec<f64>> {
        if self.table[0].contains(e_j) {
            Ok(self.table.iter().map(|t| t.eval(e_j)).collect())
        } else {
            duffing_levels(self.spec.e_c, e_j, self.spec.levels)
        }
    }

    pub fn levels_at_flux(&self, phi: f64) -> Result<Vec<f64>> {
        self.levels_at_ej(ej_at_flux(&self.spec, phi)?)
    }

    /// Writes level energies at `phi` into `out` without allocating (GHz).
    pub fn fill_levels(&self, phi: f64, out: &mut [f64]) -> Result<()> {
        let ej = ej_at_flux(&self.spec, phi)?;
        if self.table[0].contains(ej) {
            for (o, t) in out.iter_mut().zip(&self.table) {
                *o = t.eval(ej);
            }
        } else {
            out.copy_from_slice(&duffing_levels(self.spec.e_c, ej, self.spec.levels)?);
        }
        Ok(())
    }

    /// ω_{j+1} − ω_j at the static flux (GHz).
    pub fn splitting(&self, j: usize) -> f64 {
        self.static_levels[j + 1] - self.static_levels[j]
    }

    /// ω_{j+1,j+2} − ω_{j,j+1} at the static flux (GHz).
    pub fn anharmonicity(&self, j: usize) -> Option<f64> {
        (j + 2 < self.static_levels.len()).then(|| self.splitting(j + 1) - self.splitting(j))
    }
}

/// Validated device with precomputed static operators.
#[derive(Clone, Debug)]
pub struct Device {
    pub spec: DeviceSpec,
    pub transmons: Vec<TransmonModel>,
    dims: Vec<usize>,
    /// ω_r a†a + Σ_k (C_k + C_k†)(a + a†), rad/ns.
    flux_independent: Operator,
    warnings: Vec<String>,
}

impl Device {
    pub fn new(spec: DeviceSpec) -> Result<Self> {
        let mut warnings = Vec::new();
        if spec.transmons.is_empty() {
            return Err(Error::Domain("device has no transmons".into()));
        }
        if spec.resonator_levels < 2 {
            return Err(Error::InvalidDimension(spec.resonator_levels));
        }
        if spec.g_ge.len() != spec.transmons.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.transmons.len(),
                got: spec.g_ge.len(),
            });
        }
        if !spec.t1.is_empty() && spec.t1.len() != spec.transmons.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.transmons.len(),
                got: spec.t1.len(),
            });
        }
        if !(spec.omega_r > 0.0) {
            return Err(Error::Domain("omega_r must be positive".into()));
        }
        if spec.kappa < 0.0 || spec.t1.iter().flatten().any(|&t| !(t > 0.0)) {
            return Err(Error::Domain("rates must be non-negative (T1 > 0)".into()));
        }
        for (k, t) in spec.transmons.iter().enumerate() {
            t.validate(k, &mut warnings)?;
        }
        let transmons = spec
            .transmons
            .iter()
            .cloned()
            .map(TransmonModel::new)
            .collect::<Result<Vec<_>>>()?;
        let mut dims: Vec<usize> = spec.transmons.iter().map(|t| t.levels).collect();
        dims.push(spec.resonator_levels);
        let r = dims.len() - 1;

        let a = embed(&ladder(spec.resonator_levels)?, r, &dims)?;
        let x = a.add(&a.dagger())?;
        let mut h = a.dagger().dot(&a)?.scale(c(TWO_PI * spec.omega_r));
        for (k, t) in spec.transmons.iter().enumerate() {
            let ck = embed(&coupling_operator(t, spec.g_ge[k])?, k, &dims)?;
            let xk = ck.add(&ck.dagger())?;
            h = h.add(&xk.dot(&x)?)?;
        }
        Ok(Self {
            spec,
            transmons,
            dims,
            flux_independent: h,
            warnings,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn resonator_slot(&self) -> usize {
        self.dims.len() - 1
    }

    /// Resonator and coupling part of the Hamiltonian (rad/ns).
    pub fn flux_independent(&self) -> &Operator {
        &self.flux_independent
    }

    pub fn static_fluxes(&self) -> Vec<f64> {
        self.spec.transmons.iter().map(|t| t.phi).collect()
    }

    /// Diagonal of Σ_k Σ_i ω_i^(k) Π_ii^(k) at the given fluxes (rad/ns).
    pub fn transmon_diagonal(&self, fluxes: &[f64], out: &mut [f64]) -> Result<()> {
        if fluxes.len() != self.transmons.len() {
            return Err(Error::DimensionMismatch {
                expected: self.transmons.len(),
                got: fluxes.len(),
            });
        }
        let mut per: Vec<Vec<f64>> = Vec::with_capacity(fluxes.len());
        for (tm, &phi) in self.transmons.iter().zip(fluxes) {
            let mut lv = vec![0.0; tm.spec.levels];
            tm.fill_levels(phi, &mut lv)?;
            per.push(lv);
        }
        self.fill_sum(&per, out);
        Ok(())
    }

    /// Adds per-transmon level tables (GHz) across the product space and converts to rad/ns.
    pub fn fill_sum(&self, per: &[Vec<f64>], out: &mut [f64]) {
        let n_res = self.spec.resonator_levels;
        let nq = self.transmons.len();
        let mut labels = vec![0usize; nq];
        let mut idx = 0;
        loop {
            let e: f64 = labels.iter().enumerate().map(|(k, &l)| per[k][l]).sum();
            for slot in out.iter_mut().skip(idx).take(n_res) {
                *slot = TWO_PI * e;
            }
            idx += n_res;
            // odometer increment, last transmon fastest
            let mut k = nq;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                labels[k] += 1;
                if labels[k] < self.dims[k] {
                    break;
                }
                labels[k] = 0;
            }
        }
    }

    /// Full Hamiltonian with each transmon at the given instantaneous flux.
    pub fn hamiltonian(&self, fluxes: &[f64]) -> Result<Operator> {
        let mut diag = vec![0.0; self.order()];
        self.transmon_diagonal(fluxes, &mut diag)?;
        let mut m: CMat = self.flux_independent.data().clone();
        for (i, d) in diag.iter().enumerate() {
            m[[i, i]] += c(*d);
        }
        Operator::new(m, self.dims.clone())
    }

    pub fn static_hamiltonian(&self) -> Result<Operator> {
        self.hamiltonian(&self.static_fluxes())
    }
}

/// Geometric shift and modulation harmonics of a flux-driven transmon (GHz).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicDecomposition {
    pub g_shift: f64,
    /// ε_mω for m = 1..4.
    pub eps: [f64; 4],
    pub omega_p_prime: f64,
}

impl HarmonicDecomposition {
    pub fn eps_m(&self, m: usize) -> f64 {
        self.eps[m - 1]
    }

    /// First harmonic that does not vanish.
    pub fn dominant(&self) -> usize {
        let top = self.eps.iter().cloned().fold(0.0, f64::max);
        (1..=4)
            .find(|&m| self.eps[m - 1].abs() > 1e-9 * top.max(1e-300))
            .unwrap_or(1)
    }
}

/// Closed-form fourth-order expansion of ω_{j,j+1}(t) in the drive amplitude.
pub fn harmonic_decomposition(spec: &TransmonSpec, delta_phi: f64) -> Result<HarmonicDecomposition> {
    if delta_phi.abs() > 0.15 {
        return Err(Error::Domain(format!("delta_phi = {delta_phi} exceeds 0.15")));
    }
    if spec.phi.abs() > 0.25 + 1e-12 {
        return Err(Error::Domain(format!("|phi| = {} exceeds 0.25", spec.phi)));
    }
    let wp = spec.plasma_static();
    let t = (PI * spec.phi).tan();
    let t2 = t * t;
    let d = PI * delta_phi;
    let quartic = 4.0 + 20.0 * t2 + 15.0 * t2 * t2;
    let g_shift = -(1.0 + t2 / 2.0) * wp * d.powi(2) / 8.0 - quartic * wp * d.powi(4) / 1024.0;
    let e1 = (d + (1.0 + 1.5 * t2) * d.powi(3) / 16.0) * wp * t / 2.0;
    let e2 = (1.0 + t2 / 2.0) * wp * d.powi(2) / 8.0 + quartic * wp * d.powi(4) / 768.0;
    let e3 = (1.0 / 3.0 + t2 / 2.0) * wp * t * d.powi(3) / 32.0;
    let e4 = quartic * wp * d.powi(4) / 3072.0;
    Ok(HarmonicDecomposition {
        g_shift,
        eps: [e1, e2, e3, e4],
        omega_p_prime: wp,
    })
}

/// Mean shift and cosine harmonics of ω_{j,j+1}(t) from instantaneous diagonalization over one drive period.
///
/// Sign convention matches the closed form: ω(t) = ω_static + G − Σ ε_m cos(mθ).
pub fn numeric_harmonics(model: &TransmonModel, j: usize, delta_phi: f64, samples: usize) -> Result<HarmonicDecomposition> {
    let spec = &model.spec;
    let mut lv = vec![0.0; spec.levels];
    let mut w = Vec::with_capacity(samples);
    for k in 0..samples {
        let th = TWO_PI * k as f64 / samples as f64;
        model.fill_levels(spec.phi + delta_phi * th.cos(), &mut lv)?;
        w.push(lv[j + 1] - lv[j]);
    }
    let mean = w.iter().sum::<f64>() / samples as f64;
    let mut eps = [0.0; 4];
    for (m, e) in eps.iter_mut().enumerate() {
        let s: f64 = w
            .iter()
            .enumerate()
            .map(|(k, v)| v * ((m + 1) as f64 * TWO_PI * k as f64 / samples as f64).cos())
            .sum();
        *e = -2.0 * s / samples as f64;
    }
    Ok(HarmonicDecomposition {
        g_shift: mean - model.splitting(j),
        eps,
        omega_p_prime: spec.plasma_static(),
    })
}
