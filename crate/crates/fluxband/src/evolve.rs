//! Time-domain propagation of pure states and density matrices.
//!
//! The Hamiltonian is split as H(t) = H0 + D(t) + Σ_k c_k(t) X_k, with H0
//! static, D(t) diagonal in the bare basis and X_k Hermitian operators local to
//! one subsystem. The default integrator is Strang splitting: H0 is
//! exponentiated once per step size, D and the local terms exactly per half-step.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::Device;
use crate::error::{Error, Result};
use crate::hilbert::{embed, ladder, DensityMatrix, DressedBasis, Operator, StateVector};
use crate::linalg::{c, eigh_real, eye, spectral_exp, trace, CMat, C64, I, TWO_PI};
use crate::pulses::{drive_values, DriveCalibration, PulseSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PiecewiseExponential,
    AdaptiveRk,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise" | "piecewise-exponential" => Ok(Method::PiecewiseExponential),
            "rk" | "adaptive-rk" => Ok(Method::AdaptiveRk),
            other => Err(Error::config("integrator", format!("unknown integrator `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Upper bound on the step (ns); by default 1/50 of the fastest drive period.
    #[serde(default)]
    pub max_step: Option<f64>,
    /// Local error target of the adaptive integrator.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Block length (ns) over which dissipation is split from the unitary part.
    #[serde(default = "default_coarse")]
    pub coarse_step: f64,
}

fn default_tolerance() -> f64 {
    1e-9
}

fn default_coarse() -> f64 {
    0.25
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::PiecewiseExponential,
            max_step: None,
            tolerance: default_tolerance(),
            coarse_step: default_coarse(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_step.is_some_and(|h| !(h > 0.0)) {
            return Err(Error::config("integrator.max_step", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("integrator.tolerance", "must be positive"));
        }
        if !(self.coarse_step > 0.0) {
            return Err(Error::config("integrator.coarse_step", "must be positive"));
        }
        Ok(())
    }
}

/// Steps per period of the fastest drive component.
const STEPS_PER_PERIOD: f64 = 50.0;

/// Real-symmetric operator acting on one subsystem.
#[derive(Clone, Debug)]
pub struct LocalTerm {
    pub slot: usize,
    pub op: Array2<f64>,
    vals: Vec<f64>,
    vecs: Array2<f64>,
}

impl LocalTerm {
    pub fn new(slot: usize, op: Array2<f64>) -> Result<Self> {
        let asym = (&op - &op.t()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if asym > 1e-12 * (1.0 + op.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            return Err(Error::NonHermitian(asym));
        }
        let (vals, vecs) = eigh_real(&op);
        Ok(Self { slot, op, vals, vecs })
    }

    /// exp(−i·s·X).
    fn exp(&self, s: f64) -> CMat {
        let m = self.vals.len();
        let mut u = CMat::zeros((m, m));
        for a in 0..m {
            for b in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for (k, &x) in self.vals.iter().enumerate() {
                    acc += C64::from_polar(self.vecs[[a, k]] * self.vecs[[b, k]], -s * x);
                }
                u[[a, b]] = acc;
            }
        }
        u
    }
}

/// Time-dependent Hamiltonian in split form, rad/ns.
pub trait Drive: Sync {
    fn dims(&self) -> &[usize];
    fn static_part(&self) -> &Operator;
    fn local_terms(&self) -> &[LocalTerm];
    /// Writes D(t) and the local coefficients; returns false when both vanish.
    fn eval(&self, t: f64, diag: &mut [f64], coeffs: &mut [f64]) -> Result<bool>;
    /// Times where the drive may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// Fastest frequency (GHz) of the time-dependent part on (a, b); `None` if it vanishes there.
    fn rate_scale(&self, a: f64, b: f64) -> Option<f64>;

    /// Full H(t) as a dense operator.
    fn hamiltonian(&self, t: f64) -> Result<Operator> {
        let dims = self.dims().to_vec();
        let n: usize = dims.iter().product();
        let mut diag = vec![0.0; n];
        let mut coeffs = vec![0.0; self.local_terms().len()];
        self.eval(t, &mut diag, &mut coeffs)?;
        let mut m = self.static_part().data().clone();
        for (i, d) in diag.iter().enumerate() {
            m[[i, i]] += c(*d);
        }
        for (term, &ck) in self.local_terms().iter().zip(&coeffs) {
            if ck != 0.0 {
                let x = Operator::new(term.op.mapv(c), vec![term.op.nrows()])?;
                m = m + embed(&x, term.slot, &dims)?.data() * c(ck);
            }
        }
        Operator::new(m, dims)
    }
}

/// Time-independent Hamiltonian.
#[derive(Clone, Debug)]
pub struct StaticDrive {
    h: Operator,
}

impl StaticDrive {
    pub fn new(h: Operator) -> Result<Self> {
        h.ensure_hermitian()?;
        Ok(Self { h })
    }
}

impl Drive for StaticDrive {
    fn dims(&self) -> &[usize] {
        self.h.dims()
    }
    fn static_part(&self) -> &Operator {
        &self.h
    }
    fn local_terms(&self) -> &[LocalTerm] {
        &[]
    }
    fn eval(&self, _t: f64, diag: &mut [f64], _coeffs: &mut [f64]) -> Result<bool> {
        diag.iter_mut().for_each(|d| *d = 0.0);
        Ok(false)
    }
    fn rate_scale(&self, _a: f64, _b: f64) -> Option<f64> {
        None
    }
}

/// Device driven by a pulse schedule.
pub struct ScheduledDrive<'a> {
    pub device: &'a Device,
    pub schedule: &'a PulseSchedule,
    pub calibration: DriveCalibration,
    h0: Operator,
    base: Vec<f64>,
    local: Vec<LocalTerm>,
    /// Local-term index of each transmon's charge drive.
    local_of: Vec<Option<usize>>,
}

impl<'a> ScheduledDrive<'a> {
    pub fn new(device: &'a Device, schedule: &'a PulseSchedule, calibration: DriveCalibration) -> Result<Self> {
        schedule.validate()?;
        schedule.check_targets(device)?;
        let h0 = device.static_hamiltonian()?;
        h0.ensure_hermitian()?;
        let mut base = vec![0.0; device.order()];
        device.transmon_diagonal(&device.static_fluxes(), &mut base)?;
        let mut local = Vec::new();
        let mut local_of = vec![None; device.transmons.len()];
        for seg in &schedule.segments {
            if seg.kind == crate::pulses::PulseKind::Dipole && local_of[seg.target].is_none() {
                let b = ladder(device.dims()[seg.target])?;
                let x = b.add(&b.dagger())?.data().mapv(|z| z.re);
                local_of[seg.target] = Some(local.len());
                local.push(LocalTerm::new(seg.target, x)?);
            }
        }
        Ok(Self {
            device,
            schedule,
            calibration,
            h0,
            base,
            local,
            local_of,
        })
    }
}

impl Drive for ScheduledDrive<'_> {
    fn dims(&self) -> &[usize] {
        self.device.dims()
    }
    fn static_part(&self) -> &Operator {
        &self.h0
    }
    fn local_terms(&self) -> &[LocalTerm] {
        &self.local
    }
    fn eval(&self, t: f64, diag: &mut [f64], coeffs: &mut [f64]) -> Result<bool> {
        coeffs.iter_mut().for_each(|v| *v = 0.0);
        if self.schedule.active(t).is_none() {
            diag.iter_mut().for_each(|d| *d = 0.0);
            return Ok(false);
        }
        let nq = self.device.transmons.len();
        let (mut fl, mut dip) = (vec![0.0; nq], vec![0.0; nq]);
        drive_values(self.schedule, self.device, &self.calibration, t, &mut fl, &mut dip);
        self.device.transmon_diagonal(&fl, diag)?;
        for (d, b) in diag.iter_mut().zip(&self.base) {
            *d -= b;
        }
        for (k, &cx) in dip.iter().enumerate() {
            if let Some(i) = self.local_of[k] {
                coeffs[i] = cx;
            }
        }
        Ok(true)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.schedule
            .segments
            .iter()
            .flat_map(|s| [s.envelope.start(), s.envelope.end()])
            .collect()
    }
    fn rate_scale(&self, a: f64, b: f64) -> Option<f64> {
        let mid = 0.5 * (a + b);
        self.schedule
            .segments
            .iter()
            .filter(|s| s.envelope.contains(mid))
            .map(|s| s.carrier.max(1.0 / s.envelope.sigma).max(1.0))
            .reduce(f64::max)
    }
}

/// Applies a matrix `u` on subsystem `slot` to every column of `psi`.
fn apply_local(psi: &mut CMat, dims: &[usize], slot: usize, u: &CMat) {
    let m = dims[slot];
    let inner: usize = dims[slot + 1..].iter().product();
    let outer: usize = dims[..slot].iter().product();
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for col in 0..psi.ncols() {
        for o in 0..outer {
            for i in 0..inner {
                let base = o * m * inner + i;
                for (a, b) in buf.iter_mut().enumerate() {
                    *b = psi[[base + a * inner, col]];
                }
                for a in 0..m {
                    let mut s = C64::new(0.0, 0.0);
                    for (b, v) in buf.iter().enumerate() {
                        s += u[[a, b]] * v;
                    }
                    psi[[base + a * inner, col]] = s;
                }
            }
        }
    }
}

fn apply_diag_phase(psi: &mut CMat, diag: &[f64], s: f64) {
    for (mut row, &d) in psi.axis_iter_mut(Axis(0)).zip(diag) {
        if d != 0.0 {
            let ph = C64::from_polar(1.0, -d * s);
            row.mapv_inplace(|z| z * ph);
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Interval {
    t0: f64,
    t1: f64,
    /// Fastest drive frequency inside, `None` when the drive is off.
    rate: Option<f64>,
}

/// Propagator for one drive, caching static exponentials across calls.
pub struct Propagator<'a> {
    drive: &'a dyn Drive,
    pub config: IntegratorConfig,
    vals: Vec<f64>,
    vecs: CMat,
    cache: Mutex<HashMap<u64, Arc<CMat>>>,
}

const MIN_STEP: f64 = 1e-12;
const MAX_RK_STEPS: usize = 50_000_000;
const NORM_TOL: f64 = 1e-8;

impl<'a> Propagator<'a> {
    pub fn new(drive: &'a dyn Drive, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        let (vals, vecs) = drive.static_part().eigh()?;
        Ok(Self {
            drive,
            config,
            vals,
            vecs,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn dims(&self) -> &[usize] {
        self.drive.dims()
    }

    pub fn drive(&self) -> &dyn Drive {
        self.drive
    }

    /// exp(−i H0 h), cached by step size.
    fn static_step(&self, h: f64) -> Arc<CMat> {
        let key = h.to_bits();
        if let Some(u) = self.cache.lock().expect("cache poisoned").get(&key) {
            return u.clone();
        }
        let u = Arc::new(spectral_exp(&self.vals, &self.vecs, h));
        self.cache.lock().expect("cache poisoned").insert(key, u.clone());
        u
    }

    fn intervals(&self, t0: f64, t1: f64) -> Vec<Interval> {
        let mut cuts: Vec<f64> = self
            .drive
            .breakpoints()
            .into_iter()
            .filter(|&b| b > t0 && b < t1)
            .collect();
        cuts.push(t0);
        cuts.push(t1);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        cuts.windows(2)
            .map(|w| Interval {
                t0: w[0],
                t1: w[1],
                rate: self.drive.rate_scale(w[0], w[1]),
            })
            .collect()
    }

    fn step_count(&self, iv: &Interval) -> usize {
        let len = iv.t1 - iv.t0;
        let mut h = self.config.max_step.unwrap_or(f64::INFINITY);
        if let Some(r) = iv.rate {
            h = h.min(1.0 / (STEPS_PER_PERIOD * r));
        }
        if h.is_finite() {
            (len / h).ceil().max(1.0) as usize
        } else {
            1
        }
    }

    /// Evolves every column of `psi` from t0 to t1.
    pub fn propagate(&self, psi: &CMat, t0: f64, t1: f64) -> Result<CMat> {
        if psi.nrows() != self.drive.static_part().order() {
            return Err(Error::DimensionMismatch {
                expected: self.drive.static_part().order(),
                got: psi.nrows(),
            });
        }
        if t1 < t0 {
            return Err(Error::Domain(format!("t1 = {t1} precedes t0 = {t0}")));
        }
        let mut out = psi.clone();
        for iv in self.intervals(t0, t1) {
            out = match (iv.rate, self.config.method) {
                (None, _) => self.static_step(iv.t1 - iv.t0).dot(&out),
                (Some(_), Method::PiecewiseExponential) => self.strang(out, &iv)?,
                (Some(_), Method::AdaptiveRk) => self.rk45(out, &iv)?,
            };
        }
        Ok(out)
    }

    fn strang(&self, mut psi: CMat, iv: &Interval) -> Result<CMat> {
        let n = self.step_count(iv);
        let h = (iv.t1 - iv.t0) / n as f64;
        let u0 = self.static_step(h);
        let dims = self.drive.dims();
        let order = psi.nrows();
        let nl = self.drive.local_terms().len();
        let (mut d0, mut d1) = (vec![0.0; order], vec![0.0; order]);
        let (mut c0, mut c1) = (vec![0.0; nl], vec![0.0; nl]);
        self.drive.eval(iv.t0, &mut d0, &mut c0)?;
        for s in 0..n {
            // evaluate at the exact grid point to avoid drift from repeated addition
            let t_next = if s + 1 == n { iv.t1 } else { iv.t0 + (s + 1) as f64 * h };
            self.drive.eval(t_next, &mut d1, &mut c1)?;
            apply_diag_phase(&mut psi, &d0, 0.5 * h);
            self.apply_locals(&mut psi, dims, &c0, 0.5 * h);
            psi = u0.dot(&psi);
            self.apply_locals(&mut psi, dims, &c1, 0.5 * h);
            apply_diag_phase(&mut psi, &d1, 0.5 * h);
            std::mem::swap(&mut d0, &mut d1);
            std::mem::swap(&mut c0, &mut c1);
        }
        Ok(psi)
    }

    fn apply_locals(&self, psi: &mut CMat, dims: &[usize], coeffs: &[f64], s: f64) {
        for (term, &ck) in self.drive.local_terms().iter().zip(coeffs) {
            if ck != 0.0 {
                apply_local(psi, dims, term.slot, &term.exp(ck * s));
            }
        }
    }

    /// −i H(t) ψ.
    fn rhs(&self, t: f64, psi: &CMat, diag: &mut [f64], coeffs: &mut [f64]) -> Result<CMat> {
        self.drive.eval(t, diag, coeffs)?;
        let mut hp = self.drive.static_part().data().dot(psi);
        for ((mut row, src), &d) in hp.axis_iter_mut(Axis(0)).zip(psi.axis_iter(Axis(0))).zip(diag.iter()) {
            if d != 0.0 {
                row.scaled_add(c(d), &src);
            }
        }
        for (term, &ck) in self.drive.local_terms().iter().zip(coeffs.iter()) {
            if ck != 0.0 {
                let mut xp = psi.clone();
                apply_local(&mut xp, self.drive.dims(), term.slot, &term.op.mapv(c));
                hp.scaled_add(c(ck), &xp);
            }
        }
        Ok(hp.mapv(|z| -I * z))
    }

    /// Dormand–Prince 5(4) with step-size control on the full Hamiltonian.
    fn rk45(&self, mut y: CMat, iv: &Interval) -> Result<CMat> {
        const A: [[f64; 6]; 6] = [
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const CT: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
        const E: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];
        let order = y.nrows();
        let nl = self.drive.local_terms().len();
        let (mut diag, mut coeffs) = (vec![0.0; order], vec![0.0; nl]);
        let spectral = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut h = (0.5 / spectral).min(self.config.max_step.unwrap_or(f64::INFINITY));
        let mut t = iv.t0;
        let tol = self.config.tolerance;
        let mut k1 = self.rhs(t, &y, &mut diag, &mut coeffs)?;
        let mut steps = 0;
        while t < iv.t1 - 1e-14 {
            h = h.min(iv.t1 - t);
            if let Some(hmax) = self.config.max_step {
                h = h.min(hmax);
            }
            let mut ks = vec![k1.clone()];
            for (s, row) in A.iter().enumerate() {
                let mut ys = y.clone();
                for (j, &a) in row.iter().enumerate().take(s + 1) {
                    if a != 0.0 {
                        ys.scaled_add(c(h * a), &ks[j]);
                    }
                }
                ks.push(self.rhs(t + CT[s + 1] * h, &ys, &mut diag, &mut coeffs)?);
                if s == 5 {
                    // FSAL: the last stage state is the 5th-order solution
                    let mut err = CMat::zeros(y.raw_dim());
                    for (j, &e) in E.iter().enumerate() {
                        if e != 0.0 {
                            err.scaled_add(c(h * e), &ks[j]);
                        }
                    }
                    let scale = tol * (1.0 + ys.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
                    let en = err.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / scale;
                    if en <= 1.0 {
                        t += h;
                        y = ys;
                        k1 = ks.pop().expect("seven stages");
                    }
                    let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                    h *= fac;
                }
            }
            steps += 1;
            if h < MIN_STEP || steps > MAX_RK_STEPS {
                return Err(Error::Tolerance(format!(
                    "adaptive integrator stalled at t = {t:.6} ns (step {h:.3e} ns after {steps} attempts, tolerance {tol:.1e})"
                )));
            }
        }
        Ok(y)
    }

    /// Unitaries over consecutive blocks of about `coarse_step` ns, built in parallel.
    pub fn blocks(&self, t0: f64, t1: f64) -> Result<Vec<(f64, CMat)>> {
        let n = ((t1 - t0) / self.config.coarse_step).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        let id = eye(self.drive.static_part().order());
        (0..n)
            .into_par_iter()
            .map(|k| {
                let a = t0 + k as f64 * h;
                let b = if k + 1 == n { t1 } else { t0 + (k + 1) as f64 * h };
                Ok((b - a, self.propagate(&id, a, b)?))
            })
            .collect()
    }
}

/// Evolves a normalized state.
pub fn propagate_state(prop: &Propagator, psi0: &StateVector, t0: f64, t1: f64) -> Result<StateVector> {
    if psi0.dims() != prop.dims() {
        return Err(Error::DimensionMismatch {
            expected: prop.dims().iter().product(),
            got: psi0.dims().iter().product(),
        });
    }
    let col = psi0.amps().clone().insert_axis(Axis(1));
    let out = prop.propagate(&col, t0, t1)?;
    let amps = out.column(0).to_owned();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tol = match prop.config.method {
        Method::PiecewiseExponential => NORM_TOL,
        Method::AdaptiveRk => NORM_TOL.max(1e3 * prop.config.tolerance),
    };
    if (norm - 1.0).abs() > tol {
        return Err(Error::Tolerance(format!("norm drifted to {norm:.12} (tolerance {tol:.1e})")));
    }
    StateVector::new(amps, prop.dims().to_vec())
}

/// Sparse jump operator √rate·L, with L†L precomputed.
#[derive(Clone, Debug)]
pub struct Collapse {
    pub label: String,
    /// Rate in 1/ns.
    pub rate: f64,
    jump: Vec<(usize, usize, C64)>,
    decay: Vec<(usize, usize, C64)>,
}

impl Collapse {
    pub fn new(label: impl Into<String>, rate: f64, op: &Operator) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(Error::Domain(format!("collapse rate {rate} is negative")));
        }
        let s = rate.sqrt();
        let sparse = |m: &CMat| -> Vec<(usize, usize, C64)> {
            m.indexed_iter()
                .filter(|(_, v)| v.norm() > 0.0)
                .map(|((i, j), v)| (i, j, *v))
                .collect()
        };
        let l = op.data().mapv(|z| z * s);
        let ldl = crate::linalg::dagger(&l.view()).dot(&l);
        Ok(Self {
            label: label.into(),
            rate,
            jump: sparse(&l),
            decay: sparse(&ldl),
        })
    }
}

/// Jump operators acting in the bare basis; pure dephasing is not included.
#[derive(Clone, Debug, Default)]
pub struct CollapseSet {
    pub ops: Vec<Collapse>,
}

impl CollapseSet {
    /// Cavity loss at κ (MHz, as κ/2π) and transmon relaxation Σ√(i+1)|i⟩⟨i+1| at 1/T1.
    pub fn from_device(device: &Device) -> Result<Self> {
        Self::with_rates(device, device.spec.kappa, &device.spec.t1)
    }

    pub fn with_rates(device: &Device, kappa_mhz: f64, t1_us: &[Option<f64>]) -> Result<Self> {
        let dims = device.dims();
        let mut ops = Vec::new();
        if kappa_mhz < 0.0 {
            return Err(Error::Domain(format!("kappa = {kappa_mhz} is negative")));
        }
        if kappa_mhz > 0.0 {
            let r = device.resonator_slot();
            let a = embed(&ladder(dims[r])?, r, dims)?;
            ops.push(Collapse::new("cavity", TWO_PI * kappa_mhz * 1e-3, &a)?);
        }
        for (k, t1) in t1_us.iter().enumerate() {
            if let Some(t1) = t1 {
                if !(*t1 > 0.0) {
                    return Err(Error::Domain(format!("T1 = {t1} must be positive")));
                }
                let b = embed(&ladder(dims[k])?, k, dims)?;
                ops.push(Collapse::new(format!("transmon {k}"), 1.0 / (t1 * 1e3), &b)?);
            }
        }
        Ok(Self { ops })
    }

    pub fn is_empty(&self) -> bool {
        self.ops.iter().all(|o| o.rate == 0.0)
    }

    /// Σ_k L ρ L† − ½{L†L, ρ}.
    pub fn dissipator(&self, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(rho.raw_dim());
        for op in &self.ops {
            for &(r1, c1, v1) in &op.jump {
                for &(r2, c2, v2) in &op.jump {
                    out[[r1, r2]] += v1 * rho[[c1, c2]] * v2.conj();
                }
            }
            for &(r, cc, v) in &op.decay {
                let half = v * 0.5;
                for j in 0..rho.ncols() {
                    out[[r, j]] -= half * rho[[cc, j]];
                }
                for i in 0..rho.nrows() {
                    out[[i, cc]] -= rho[[i, r]] * half;
                }
            }
        }
        out
    }

    /// Fourth-order Taylor step of the dissipator alone; exactly trace preserving.
    fn damp(&self, rho: &CMat, s: f64) -> CMat {
        let mut out = rho.clone();
        let mut term = rho.clone();
        for k in 1..=DAMP_ORDER {
            term = self.dissipator(&term) * c(s / k as f64);
            out += &term;
        }
        out
    }
}

const DAMP_ORDER: usize = 4;

/// Evolves density matrices through precomputed block unitaries with dissipation split symmetrically around each block.
pub fn evolve_density_blocks(blocks: &[(f64, CMat)], rho: &CMat, collapse: &CollapseSet) -> CMat {
    let mut r = rho.clone();
    let lossless = collapse.is_empty();
    for (h, u) in blocks {
        if !lossless {
            r = collapse.damp(&r, 0.5 * h);
        }
        r = u.dot(&r).dot(&crate::linalg::dagger(&u.view()));
        if !lossless {
            r = collapse.damp(&r, 0.5 * h);
        }
    }
    r
}

/// Lindblad evolution of one density matrix.
pub fn propagate_density(prop: &Propagator, rho0: &DensityMatrix, collapse: &CollapseSet, t0: f64, t1: f64) -> Result<DensityMatrix> {
    let blocks = prop.blocks(t0, t1)?;
    let out = evolve_density_blocks(&blocks, rho0.data(), collapse);
    let tr = trace(&out);
    let tr0 = rho0.trace();
    if (tr - tr0).norm() > NORM_TOL {
        return Err(Error::Tolerance(format!("trace drifted from {tr0} to {tr}")));
    }
    Ok(DensityMatrix::from_raw(out, prop.dims().to_vec()))
}

/// Above this leakage out of the kept subspace a warning is attached.
pub const LEAKAGE_WARN: f64 = 0.02;

#[derive(Clone, Debug)]
pub struct GateExtraction {
    /// ⟨a|U|b⟩ e^{iE_a(t1 − t0)} over the requested dressed states.
    pub matrix: CMat,
    /// 1 − Σ_a |V_ab|² per input column.
    pub leakage: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Overlaps of evolved dressed states with the dressed basis, in the frame of the static dressed energies.
pub fn extract_gate(prop: &Propagator, basis: &DressedBasis, states: &[Vec<usize>], t0: f64, t1: f64) -> Result<GateExtraction> {
    let v = basis.matrix(states)?;
    let gram = crate::linalg::dagger(&v.view()).dot(&v);
    let defect = crate::linalg::frobenius(&(gram - eye(states.len())));
    if defect > 1e-10 {
        return Err(Error::InvalidState(format!("basis states are not orthonormal (defect {defect:.2e})")));
    }
    let out = prop.propagate(&v, t0, t1)?;
    let mut m = crate::linalg::dagger(&v.view()).dot(&out);
    for (a, labels) in states.iter().enumerate() {
        let ph = Complex64::from_polar(1.0, basis.energy(labels)? * (t1 - t0));
        m.row_mut(a).mapv_inplace(|z| z * ph);
    }
    let leakage: Vec<f64> = (0..states.len())
        .map(|j| 1.0 - m.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();
    let warnings = leakage
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > LEAKAGE_WARN)
        .map(|(j, l)| format!("input {:?} leaks {l:.4} out of the kept subspace", states[j]))
        .collect();
    Ok(GateExtraction { matrix: m, leakage, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::projector;

    fn diag_drive(e: &[f64]) -> StaticDrive {
        StaticDrive::new(Operator::from_diagonal(e, &[e.len()]).unwrap()).unwrap()
    }

    #[test]
    fn constant_diagonal_gives_phases() {
        let d = diag_drive(&[0.0, 1.3, -2.1]);
        let p = Propagator::new(&d, IntegratorConfig::default()).unwrap();
        let psi = StateVector::new(ndarray::arr1(&[c(0.6), c(0.0), C64::new(0.0, 0.8)]), vec![3]).unwrap();
        let out = propagate_state(&p, &psi, 0.0, 2.5).unwrap();
        let want = C64::new(0.0, 0.8) * C64::from_polar(1.0, 2.1 * 2.5);
        assert!((out.amps()[2] - want).norm() < 1e-12);
    }

    #[test]
    fn resonant_vacuum_rabi_swap() {
        let g = 0.05;
        let dims = [2, 3];
        let a = embed(&ladder(3).unwrap(), 1, &dims).unwrap();
        let sm = embed(&projector(0, 1, 2).unwrap(), 0, &dims).unwrap();
        let w = 5.0;
        let h = a
            .dagger()
            .dot(&a)
            .unwrap()
            .scale(c(w))
            .add(&sm.dagger().dot(&sm).unwrap().scale(c(w)))
            .unwrap()
            .add(&sm.dagger().dot(&a).unwrap().add(&a.dagger().dot(&sm).unwrap()).unwrap().scale(c(g)))
            .unwrap();
        let d = StaticDrive::new(h).unwrap();
        for method in [Method::PiecewiseExponential, Method::AdaptiveRk] {
            let cfg = IntegratorConfig { method, max_step: Some(0.5), ..Default::default() };
            let p = Propagator::new(&d, cfg).unwrap();
            let psi = StateVector::basis(&dims, &[1, 0]).unwrap();
            let out = propagate_state(&p, &psi, 0.0, std::f64::consts::PI / (2.0 * g)).unwrap();
            let idx = crate::hilbert::basis_index(&dims, &[0, 1]).unwrap();
            assert!((out.amps()[idx].norm_sqr() - 1.0).abs() < 1e-9, "{method:?}");
        }
    }

    #[test]
    fn non_hermitian_static_part_rejected() {
        let mut m = CMat::zeros((2, 2));
        m[[0, 1]] = c(1.0);
        let op = Operator::new(m, vec![2]).unwrap();
        assert!(matches!(StaticDrive::new(op), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn cavity_decay_is_exponential() {
        let dims = [3];
        let h = Operator::zeros(&dims);
        let d = StaticDrive::new(h).unwrap();
        let cfg = IntegratorConfig { coarse_step: 0.5, ..Default::default() };
        let p = Propagator::new(&d, cfg).unwrap();
        let kappa = 0.02;
        let col = CollapseSet {
            ops: vec![Collapse::new("a", kappa, &ladder(3).unwrap()).unwrap()],
        };
        let rho0 = StateVector::basis(&dims, &[1]).unwrap().to_density();
        let t = 40.0;
        let rho = propagate_density(&p, &rho0, &col, 0.0, t).unwrap();
        assert!((rho.data()[[1, 1]].re - (-kappa * t).exp()).abs() < 1e-6);
    }

    #[test]
    fn local_term_exponential_is_unitary() {
        let x = ndarray::arr2(&[[0.0, 1.0, 0.0], [1.0, 0.0, 2f64.sqrt()], [0.0, 2f64.sqrt(), 0.0]]);
        let t = LocalTerm::new(0, x).unwrap();
        let u = t.exp(0.37);
        assert!(crate::linalg::unitarity_defect(&u) < 1e-13);
    }
}
