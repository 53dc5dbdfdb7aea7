//! Tensor-product operator algebra.
//!
//! Subsystems are ordered `[transmon 1, transmon 2, ..., resonator]` and the
//! composite index is row-major: for dims `[M1, M2, N]` the state
//! `|p1 p2; n⟩` sits at `(p1·M2 + p2)·N + n`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::{self, c, dagger, CMat, CVec, C64};

const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-10;

/// Dense complex matrix tagged with the subsystem dimensions of its space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    data: CMat,
    dims: Vec<usize>,
}

impl Operator {
    pub fn new(data: CMat, dims: Vec<usize>) -> Result<Self> {
        let order: usize = dims.iter().product();
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                got: data.ncols(),
            });
        }
        if data.nrows() != order {
            return Err(Error::DimensionMismatch {
                expected: order,
                got: data.nrows(),
            });
        }
        Ok(Self { data, dims })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self {
            data: CMat::zeros((n, n)),
            dims: dims.to_vec(),
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self {
            data: linalg::eye(n),
            dims: dims.to_vec(),
        }
    }

    pub fn from_diagonal(diag: &[f64], dims: &[usize]) -> Result<Self> {
        let mut m = CMat::zeros((diag.len(), diag.len()));
        for (i, &d) in diag.iter().enumerate() {
            m[[i, i]] = c(d);
        }
        Self::new(m, dims.to_vec())
    }

    pub fn data(&self) -> &CMat {
        &self.data
    }

    pub fn into_data(self) -> CMat {
        self.data
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self {
            data: dagger(&self.data.view()),
            dims: self.dims.clone(),
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: other.order(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            data: self.data.dot(&other.data),
            dims: self.dims.clone(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            data: &self.data + &other.data,
            dims: self.dims.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            data: &self.data - &other.data,
            dims: self.dims.clone(),
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            data: self.data.mapv(|z| z * s),
            dims: self.dims.clone(),
        }
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.dot(other)?.sub(&other.dot(self)?)
    }

    pub fn norm(&self) -> f64 {
        linalg::frobenius(&self.data)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.data)
    }

    /// Errors unless the operator is Hermitian to 1e-12 relative norm.
    pub fn ensure_hermitian(&self) -> Result<()> {
        let d = self.hermiticity_defect();
        if d > HERMITIAN_TOL {
            return Err(Error::NonHermitian(d));
        }
        Ok(())
    }

    pub fn eigh(&self) -> Result<(Vec<f64>, CMat)> {
        linalg::eigh(&self.data)
    }
}

/// Truncated annihilation operator.
pub fn ladder(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let mut m = CMat::zeros((dim, dim));
    for j in 1..dim {
        m[[j - 1, j]] = c((j as f64).sqrt());
    }
    Operator::new(m, vec![dim])
}

/// `|i⟩⟨j|` on a single subsystem.
pub fn projector(i: usize, j: usize, dim: usize) -> Result<Operator> {
    if i >= dim || j >= dim {
        return Err(Error::InvalidIndex { i, j, dim });
    }
    let mut m = CMat::zeros((dim, dim));
    m[[i, j]] = c(1.0);
    Operator::new(m, vec![dim])
}

/// Places a single-subsystem operator on `slot` with identities elsewhere.
pub fn embed(op: &Operator, slot: usize, dims: &[usize]) -> Result<Operator> {
    if slot >= dims.len() {
        return Err(Error::SlotOutOfRange {
            slot,
            len: dims.len(),
        });
    }
    if op.order() != dims[slot] {
        return Err(Error::DimensionMismatch {
            expected: dims[slot],
            got: op.order(),
        });
    }
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    let out = linalg::kron(
        &linalg::kron(&linalg::eye(left), op.data()),
        &linalg::eye(right),
    );
    Operator::new(out, dims.to_vec())
}

/// Kronecker product of operators, concatenating their dims.
pub fn tensor(ops: &[&Operator]) -> Result<Operator> {
    let first = ops
        .first()
        .ok_or_else(|| Error::InvalidState("empty tensor product".into()))?;
    let mut data = first.data().clone();
    let mut dims = first.dims().to_vec();
    for op in &ops[1..] {
        data = linalg::kron(&data, op.data());
        dims.extend_from_slice(op.dims());
    }
    Operator::new(data, dims)
}

/// Trace out every subsystem except `keep`.
pub fn partial_trace(op: &Operator, keep: usize) -> Result<Operator> {
    let dims = op.dims();
    if keep >= dims.len() {
        return Err(Error::SlotOutOfRange {
            slot: keep,
            len: dims.len(),
        });
    }
    let left: usize = dims[..keep].iter().product();
    let d = dims[keep];
    let right: usize = dims[keep + 1..].iter().product();
    let mut out = CMat::zeros((d, d));
    let m = op.data();
    for i in 0..d {
        for j in 0..d {
            let mut acc = C64::default();
            for l in 0..left {
                for r in 0..right {
                    acc += m[[(l * d + i) * right + r, (l * d + j) * right + r]];
                }
            }
            out[[i, j]] = acc;
        }
    }
    Operator::new(out, vec![d])
}

/// Composite index of a product basis state.
pub fn basis_index(dims: &[usize], labels: &[usize]) -> Result<usize> {
    if labels.len() != dims.len() {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            got: labels.len(),
        });
    }
    let mut idx = 0;
    for (&l, &d) in labels.iter().zip(dims) {
        if l >= d {
            return Err(Error::InvalidIndex { i: l, j: l, dim: d });
        }
        idx = idx * d + l;
    }
    Ok(idx)
}

/// Inverse of [`basis_index`].
pub fn basis_labels(dims: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &d) in dims.iter().enumerate().rev() {
        out[slot] = idx % d;
        idx /= d;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: CVec,
    dims: Vec<usize>,
}

impl StateVector {
    pub fn new(amps: CVec, dims: Vec<usize>) -> Result<Self> {
        let order: usize = dims.iter().product();
        if amps.len() != order {
            return Err(Error::DimensionMismatch {
                expected: order,
                got: amps.len(),
            });
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("norm {norm} is not 1")));
        }
        Ok(Self { amps, dims })
    }

    pub fn basis(dims: &[usize], labels: &[usize]) -> Result<Self> {
        let idx = basis_index(dims, labels)?;
        let mut amps = CVec::zeros(dims.iter().product::<usize>());
        amps[idx] = c(1.0);
        Ok(Self {
            amps,
            dims: dims.to_vec(),
        })
    }

    pub fn amps(&self) -> &CVec {
        &self.amps
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn to_density(&self) -> DensityMatrix {
        let n = self.amps.len();
        let mut m = CMat::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = self.amps[i] * self.amps[j].conj();
            }
        }
        DensityMatrix {
            data: m,
            dims: self.dims.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    data: CMat,
    dims: Vec<usize>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity to 1e-10.
    pub fn new(data: CMat, dims: Vec<usize>) -> Result<Self> {
        let op = Operator::new(data, dims)?;
        let herm = linalg::frobenius(&(op.data() - &op.dagger().into_data()));
        if herm > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix not Hermitian ({herm:.2e})"
            )));
        }
        let tr = linalg::trace(op.data());
        if (tr - c(1.0)).norm() > NORM_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let (vals, _) = op.eigh()?;
        if vals[0] < -NORM_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:.3e}",
                vals[0]
            )));
        }
        Ok(Self {
            data: op.data,
            dims: op.dims,
        })
    }

    /// Wraps a matrix without validation; used for intermediate propagation results.
    pub fn from_raw(data: CMat, dims: Vec<usize>) -> Self {
        Self { data, dims }
    }

    pub fn data(&self) -> &CMat {
        &self.data
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.data)
    }
}

/// Eigenbasis of a static Hamiltonian with bare-state labels attached by
/// maximum overlap.
#[derive(Clone, Debug)]
pub struct DressedBasis {
    pub energies: Vec<f64>,
    pub vectors: CMat,
    dims: Vec<usize>,
    /// bare index -> eigenvector column
    assignment: Vec<Option<usize>>,
}

impl DressedBasis {
    /// Bare states whose best overlap is below `threshold` stay unlabeled.
    pub fn new(h: &Operator, threshold: f64) -> Result<Self> {
        let (energies, vectors) = h.eigh()?;
        let n = energies.len();
        let mut assignment = vec![None; n];
        // energy order breaks ties: lower eigenvectors claim first
        for col in 0..n {
            let (best, w) = (0..n)
                .map(|b| (b, vectors[[b, col]].norm_sqr()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if w >= threshold && assignment[best].is_none() {
                assignment[best] = Some(col);
            }
        }
        // fix the sign so the dominant component is real and positive
        let mut vectors = vectors;
        for col in 0..n {
            let (b, _) = (0..n)
                .map(|b| (b, vectors[[b, col]].norm_sqr()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            let z = vectors[[b, col]];
            let ph = z.conj() / z.norm();
            for r in 0..n {
                vectors[[r, col]] *= ph;
            }
        }
        Ok(Self {
            energies,
            vectors,
            dims: h.dims().to_vec(),
            assignment,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn column(&self, labels: &[usize]) -> Result<usize> {
        let idx = basis_index(&self.dims, labels)?;
        self.assignment[idx].ok_or_else(|| {
            Error::Labeling(format!(
                "state {labels:?} has no dressed partner above the overlap threshold"
            ))
        })
    }

    pub fn energy(&self, labels: &[usize]) -> Result<f64> {
        Ok(self.energies[self.column(labels)?])
    }

    pub fn vector(&self, labels: &[usize]) -> Result<CVec> {
        Ok(self.vectors.column(self.column(labels)?).to_owned())
    }

    /// Columns are the dressed partners of `states`, in order.
    pub fn matrix(&self, states: &[Vec<usize>]) -> Result<CMat> {
        let n = self.energies.len();
        let mut out = Array2::zeros((n, states.len()));
        for (k, s) in states.iter().enumerate() {
            out.column_mut(k).assign(&self.vector(s)?);
        }
        Ok(out)
    }
}
