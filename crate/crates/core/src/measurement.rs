//! Measurement functions: the Hermitian trace forms for SCADA quantities and
//! the linear maps for PMU phasors.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{build_branch_admittance, build_bus_admittance, Network};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Complex bus voltages v ∈ Cⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub v: Vec<Complex64>,
}

impl StateVector {
    pub fn new(v: Vec<Complex64>) -> Self {
        Self { v }
    }

    /// 1 + 0i at every bus.
    pub fn flat(n: usize) -> Self {
        Self { v: vec![ONE; n] }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Number of free real coordinates once the reference angle is pinned.
    pub fn n_coords(n: usize) -> usize {
        2 * n - 1
    }

    /// Rotates the state so that v_ref is real and non-negative. All
    /// power-type measurements are invariant under this rotation.
    pub fn gauge_fixed(&self, reference: usize) -> Self {
        let r = self.v[reference];
        let norm = r.norm();
        if norm == 0.0 {
            let mut v = self.v.clone();
            v[reference] = ZERO;
            return Self { v };
        }
        let rot = r.conj() / norm;
        let mut v: Vec<Complex64> = self.v.iter().map(|z| z * rot).collect();
        v[reference] = Complex64::new(norm, 0.0);
        Self { v }
    }

    /// Real coordinates (Re v_k, k≠ref; Im v_k, k≠ref; Re v_ref). The
    /// imaginary part of v_ref is dropped.
    pub fn to_coords(&self, reference: usize) -> Vec<f64> {
        let n = self.v.len();
        let mut x = Vec::with_capacity(2 * n - 1);
        x.extend((0..n).filter(|&k| k != reference).map(|k| self.v[k].re));
        x.extend((0..n).filter(|&k| k != reference).map(|k| self.v[k].im));
        x.push(self.v[reference].re);
        x
    }

    pub fn from_coords(x: &[f64], n: usize, reference: usize) -> Self {
        debug_assert_eq!(x.len(), 2 * n - 1);
        let mut v = vec![ZERO; n];
        let mut j = 0;
        for (k, vk) in v.iter_mut().enumerate() {
            if k != reference {
                *vk = Complex64::new(x[j], x[n - 1 + j]);
                j += 1;
            }
        }
        v[reference] = Complex64::new(x[2 * n - 2], 0.0);
        Self { v }
    }
}

/// The measurable quantities that enter the objective. The first seven are
/// real SCADA values, the last four complex PMU phasors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeasurementKind {
    VMag,
    PInj,
    QInj,
    PFrom,
    QFrom,
    PTo,
    QTo,
    VPhasor,
    IInj,
    IFrom,
    ITo,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 11] = [
        Self::VMag,
        Self::PInj,
        Self::QInj,
        Self::PFrom,
        Self::QFrom,
        Self::PTo,
        Self::QTo,
        Self::VPhasor,
        Self::IInj,
        Self::IFrom,
        Self::ITo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::VMag => "v_mag",
            Self::PInj => "p_inj",
            Self::QInj => "q_inj",
            Self::PFrom => "p_from",
            Self::QFrom => "q_from",
            Self::PTo => "p_to",
            Self::QTo => "q_to",
            Self::VPhasor => "v_phasor",
            Self::IInj => "i_inj",
            Self::IFrom => "i_from",
            Self::ITo => "i_to",
        }
    }

    pub fn is_pmu(self) -> bool {
        matches!(self, Self::VPhasor | Self::IInj | Self::IFrom | Self::ITo)
    }

    /// True when the target indexes a branch rather than a bus.
    pub fn on_branch(self) -> bool {
        matches!(
            self,
            Self::PFrom | Self::QFrom | Self::PTo | Self::QTo | Self::IFrom | Self::ITo
        )
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasurementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

impl Serialize for MeasurementKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for MeasurementKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sparse Hermitian matrix M, evaluated as the real quadratic form v*Mv.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HermitianForm {
    /// (row, col, value), sorted and without duplicates.
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl HermitianForm {
    fn from_triplets(mut t: Vec<(usize, usize, Complex64)>) -> Self {
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut entries: Vec<(usize, usize, Complex64)> = Vec::with_capacity(t.len());
        for (i, j, x) in t {
            match entries.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += x,
                _ => entries.push((i, j, x)),
            }
        }
        entries.retain(|e| e.2 != ZERO);
        Self { entries }
    }

    /// E_k = e_k e_kᵀ.
    pub fn unit(k: usize) -> Self {
        Self { entries: vec![(k, k, ONE)] }
    }

    /// ½(a* e_kᵀ + e_k aᵀ)-style form, so that v*Mv = Re(conj(v_k)·(a·v)).
    fn real_part(k: usize, a: &LinearForm) -> Self {
        let mut t = Vec::with_capacity(2 * a.entries.len());
        for &(j, x) in &a.entries {
            t.push((k, j, x * 0.5));
            t.push((j, k, x.conj() * 0.5));
        }
        Self::from_triplets(t)
    }

    /// (i/2)(e_k aᵀ − a* e_kᵀ), so that v*Mv = Im(v_k·conj(a·v)).
    fn imag_part(k: usize, a: &LinearForm) -> Self {
        let mut t = Vec::with_capacity(2 * a.entries.len());
        for &(j, x) in &a.entries {
            t.push((k, j, I * x * 0.5));
            t.push((j, k, -I * x.conj() * 0.5));
        }
        Self::from_triplets(t)
    }

    /// v*Mv, real for Hermitian M.
    pub fn eval(&self, v: &[Complex64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, x)| (v[i].conj() * x * v[j]).re)
            .sum()
    }

    /// Accumulates `scale · Mv` into `acc`. Twice the real and imaginary
    /// parts of Mv are the derivatives of v*Mv with respect to Re v and Im v.
    pub fn add_mv(&self, v: &[Complex64], scale: f64, acc: &mut [Complex64]) {
        for &(i, j, x) in &self.entries {
            acc[i] += x * v[j] * scale;
        }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(n, n, ZERO);
        for &(i, j, x) in &self.entries {
            m[(i, j)] += x;
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.entries.iter().all(|&(i, j, x)| {
            let mirror = self
                .entries
                .iter()
                .find(|e| e.0 == j && e.1 == i)
                .map_or(ZERO, |e| e.2);
            (x - mirror.conj()).norm() <= tol
        })
    }
}

/// Sparse row vector a, evaluated as a·v.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearForm {
    pub entries: Vec<(usize, Complex64)>,
}

impl LinearForm {
    fn row(m: &DMatrix<Complex64>, r: usize) -> Self {
        let entries = (0..m.ncols())
            .filter(|&c| m[(r, c)] != ZERO)
            .map(|c| (c, m[(r, c)]))
            .collect();
        Self { entries }
    }

    pub fn eval(&self, v: &[Complex64]) -> Complex64 {
        self.entries.iter().map(|&(j, a)| a * v[j]).sum()
    }
}

/// All per-bus and per-branch measurement matrices of a network.
#[derive(Debug, Clone)]
pub struct MeasurementMatrices {
    pub e: Vec<HermitianForm>,
    pub p: Vec<HermitianForm>,
    pub q: Vec<HermitianForm>,
    pub p_from: Vec<HermitianForm>,
    pub q_from: Vec<HermitianForm>,
    pub p_to: Vec<HermitianForm>,
    pub q_to: Vec<HermitianForm>,
}

/// A network together with its admittance matrices and measurement forms.
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub net: Network,
    pub y: DMatrix<Complex64>,
    pub yf: DMatrix<Complex64>,
    pub yt: DMatrix<Complex64>,
    pub matrices: MeasurementMatrices,
    y_rows: Vec<LinearForm>,
    yf_rows: Vec<LinearForm>,
    yt_rows: Vec<LinearForm>,
    v_rows: Vec<LinearForm>,
}

/// The measurement function of one entry.
#[derive(Debug, Clone, Copy)]
pub enum Form<'a> {
    Quadratic(&'a HermitianForm),
    Linear(&'a LinearForm),
}

impl NetworkModel {
    pub fn new(net: Network) -> Self {
        let y = build_bus_admittance(&net);
        let (yf, yt) = build_branch_admittance(&net);
        let n = net.n_buses();
        let m = net.n_branches();
        let y_rows: Vec<LinearForm> = (0..n).map(|k| LinearForm::row(&y, k)).collect();
        let yf_rows: Vec<LinearForm> = (0..m).map(|l| LinearForm::row(&yf, l)).collect();
        let yt_rows: Vec<LinearForm> = (0..m).map(|l| LinearForm::row(&yt, l)).collect();
        let v_rows = (0..n).map(|k| LinearForm { entries: vec![(k, ONE)] }).collect();
        let from = |l: usize| net.branches[l].from_bus;
        let to = |l: usize| net.branches[l].to_bus;
        let matrices = MeasurementMatrices {
            e: (0..n).map(HermitianForm::unit).collect(),
            p: (0..n).map(|k| HermitianForm::real_part(k, &y_rows[k])).collect(),
            q: (0..n).map(|k| HermitianForm::imag_part(k, &y_rows[k])).collect(),
            p_from: (0..m).map(|l| HermitianForm::real_part(from(l), &yf_rows[l])).collect(),
            q_from: (0..m).map(|l| HermitianForm::imag_part(from(l), &yf_rows[l])).collect(),
            p_to: (0..m).map(|l| HermitianForm::real_part(to(l), &yt_rows[l])).collect(),
            q_to: (0..m).map(|l| HermitianForm::imag_part(to(l), &yt_rows[l])).collect(),
        };
        Self { net, y, yf, yt, matrices, y_rows, yf_rows, yt_rows, v_rows }
    }

    pub fn n_buses(&self) -> usize {
        self.net.n_buses()
    }

    pub fn n_branches(&self) -> usize {
        self.net.n_branches()
    }

    pub fn reference(&self) -> usize {
        self.net.reference()
    }

    /// The measurement function for `kind` at `target`. `index` is only
    /// used in the error message.
    pub fn form(&self, kind: MeasurementKind, target: usize, index: usize) -> Result<Form<'_>> {
        let (limit, what) = if kind.on_branch() {
            (self.n_branches(), "branch")
        } else {
            (self.n_buses(), "bus")
        };
        if target >= limit {
            return Err(Error::BadTarget { index, what, target });
        }
        let mm = &self.matrices;
        Ok(match kind {
            MeasurementKind::VMag => Form::Quadratic(&mm.e[target]),
            MeasurementKind::PInj => Form::Quadratic(&mm.p[target]),
            MeasurementKind::QInj => Form::Quadratic(&mm.q[target]),
            MeasurementKind::PFrom => Form::Quadratic(&mm.p_from[target]),
            MeasurementKind::QFrom => Form::Quadratic(&mm.q_from[target]),
            MeasurementKind::PTo => Form::Quadratic(&mm.p_to[target]),
            MeasurementKind::QTo => Form::Quadratic(&mm.q_to[target]),
            MeasurementKind::VPhasor => Form::Linear(&self.v_rows[target]),
            MeasurementKind::IInj => Form::Linear(&self.y_rows[target]),
            MeasurementKind::IFrom => Form::Linear(&self.yf_rows[target]),
            MeasurementKind::ITo => Form::Linear(&self.yt_rows[target]),
        })
    }
}

impl Form<'_> {
    /// Trace forms return a real value in the real part.
    pub fn eval(&self, v: &[Complex64]) -> Complex64 {
        match self {
            Form::Quadratic(m) => Complex64::new(m.eval(v), 0.0),
            Form::Linear(a) => a.eval(v),
        }
    }
}

/// s = v ⊙ conj(Yv).
pub fn power_injections(v: &StateVector, y: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    if y.nrows() != v.len() || y.ncols() != v.len() {
        return Err(Error::DimensionMismatch { expected: y.nrows(), got: v.len() });
    }
    let vv = nalgebra::DVector::from_column_slice(&v.v);
    let i = y * &vv;
    Ok(v.v.iter().zip(i.iter()).map(|(vk, ik)| vk * ik.conj()).collect())
}

/// h(v) for each requested (kind, target). Magnitude kinds return |v_k|²;
/// PMU kinds return the complex phasor.
pub fn evaluate_h(
    v: &StateVector,
    model: &NetworkModel,
    which: &[(MeasurementKind, usize)],
) -> Result<Vec<Complex64>> {
    if v.len() != model.n_buses() {
        return Err(Error::DimensionMismatch { expected: model.n_buses(), got: v.len() });
    }
    which
        .iter()
        .enumerate()
        .map(|(idx, &(kind, target))| Ok(model.form(kind, target, idx)?.eval(&v.v)))
        .collect()
}
