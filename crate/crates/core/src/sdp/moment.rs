//! Monomial bases, moment and localizing matrices, and the moment
//! relaxation of a polynomial optimization problem.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::poly::{add_monomials, Monomial, Poly};
use crate::error::{Error, Result};

/// Largest basis `build_basis` will construct.
pub const BASIS_LIMIT: usize = 100_000;

/// All monomials of total degree ≤ order, graded, and within a degree
/// ordered by descending exponent of the first variable, then the next.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    pub n_vars: usize,
    pub order: usize,
    pub monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > u64::MAX as u128 {
            return r;
        }
    }
    r
}

fn push_degree(n: usize, deg: usize, prefix: &mut Vec<u16>, out: &mut Vec<Monomial>) {
    if prefix.len() + 1 == n {
        prefix.push(deg as u16);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=deg).rev() {
        prefix.push(e as u16);
        push_degree(n, deg - e, prefix, out);
        prefix.pop();
    }
}

pub fn build_basis(n_vars: usize, order: usize) -> Result<MonomialBasis> {
    if n_vars == 0 || order == 0 {
        return Err(Error::InvalidArgument(format!(
            "basis needs n_vars >= 1 and order >= 1, got {n_vars} and {order}"
        )));
    }
    basis_unchecked(n_vars, order)
}

/// Same as [`build_basis`] but also accepts order 0 (the constant monomial).
pub(crate) fn basis_unchecked(n_vars: usize, order: usize) -> Result<MonomialBasis> {
    let size = binomial(n_vars + order, order);
    if size > BASIS_LIMIT as u128 {
        return Err(Error::BasisTooLarge { size: size.min(usize::MAX as u128) as usize, limit: BASIS_LIMIT });
    }
    let mut monomials = Vec::with_capacity(size as usize);
    let mut prefix = Vec::with_capacity(n_vars);
    for deg in 0..=order {
        push_degree(n_vars, deg, &mut prefix, &mut monomials);
    }
    let index = monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
    Ok(MonomialBasis { n_vars, order, monomials, index })
}

impl MonomialBasis {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index_of(&self, alpha: &[u16]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

/// Pseudo-moments y_α indexed by a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub basis: MonomialBasis,
    pub y: Vec<f64>,
}

impl MomentVector {
    /// Moments of the Dirac measure at `x`, to the given degree.
    pub fn of_point(x: &[f64], degree: usize) -> Result<Self> {
        let basis = basis_unchecked(x.len(), degree)?;
        let y = basis
            .monomials
            .iter()
            .map(|a| a.iter().zip(x).map(|(&e, xi)| xi.powi(e as i32)).product())
            .collect();
        Ok(Self { basis, y })
    }

    /// Moments of the uniform mixture of the given points.
    pub fn of_mixture(points: &[Vec<f64>], degree: usize) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let mut out = Self::of_point(first, degree)?;
        for p in &points[1..] {
            let m = Self::of_point(p, degree)?;
            out.y.iter_mut().zip(&m.y).for_each(|(a, b)| *a += b);
        }
        let k = points.len() as f64;
        out.y.iter_mut().for_each(|a| *a /= k);
        Ok(out)
    }

    pub fn get(&self, alpha: &[u16]) -> Result<f64> {
        self.basis.index_of(alpha).map(|i| self.y[i]).ok_or_else(|| Error::MissingMoment(alpha.to_vec()))
    }

    /// L_y(p) = Σ p_α y_α.
    pub fn apply(&self, p: &Poly) -> Result<f64> {
        p.terms.iter().map(|(a, c)| Ok(c * self.get(a)?)).sum()
    }
}

/// M_d(y) with entry (α, β) = y_{α+β}.
pub fn moment_matrix(basis: &MonomialBasis, y: &MomentVector) -> Result<DMatrix<f64>> {
    let s = basis.len();
    let mut m = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            let v = y.get(&add_monomials(&basis.monomials[i], &basis.monomials[j]))?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Half-degree ⌈deg g / 2⌉.
pub fn half_degree(g: &Poly) -> usize {
    g.degree().div_ceil(2)
}

/// M_{d−d_g}(g y) with entry (α, β) = Σ_γ g_γ y_{γ+α+β}.
pub fn localizing_matrix(g: &Poly, order: usize, y: &MomentVector) -> Result<DMatrix<f64>> {
    let need = half_degree(g);
    if need > order {
        return Err(Error::OrderUnderflow { need, order });
    }
    let basis = basis_unchecked(g.n_vars, order - need)?;
    let s = basis.len();
    let mut m = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            let ab = add_monomials(&basis.monomials[i], &basis.monomials[j]);
            let mut v = 0.0;
            for (gamma, c) in &g.terms {
                v += c * y.get(&add_monomials(gamma, &ab))?;
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// g(x) ≥ 0.
    NonNegative,
    /// g(x) = 0.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopConstraint {
    pub poly: Poly,
    pub sense: Sense,
}

/// minimize f(x) subject to g_i(x) ≥ 0 or = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PopProblem {
    pub n_vars: usize,
    pub objective: Poly,
    pub constraints: Vec<PopConstraint>,
}

impl PopProblem {
    pub fn validate(&self) -> Result<()> {
        let polys = std::iter::once(&self.objective).chain(self.constraints.iter().map(|c| &c.poly));
        for p in polys {
            if p.n_vars != self.n_vars {
                return Err(Error::DimensionMismatch { expected: self.n_vars, got: p.n_vars });
            }
            if !p.is_finite() {
                return Err(Error::InvalidArgument("polynomial with non-finite coefficient".into()));
            }
        }
        Ok(())
    }

    pub fn max_degree(&self) -> usize {
        std::iter::once(self.objective.degree())
            .chain(self.constraints.iter().map(|c| c.poly.degree()))
            .max()
            .unwrap_or(0)
    }

    /// Smallest constraint value, equalities counted as −|g|.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let g = c.poly.eval(x);
                match c.sense {
                    Sense::NonNegative => g,
                    Sense::Zero => -g.abs(),
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// One nonzero of an SDP data matrix: (block, row, col, value), row ≤ col,
/// zero-based.
pub type SdpEntry = (usize, usize, usize, f64);

/// minimize constant + cᵀx subject to Σ_i x_i F_i − F_0 ⪰ 0, blockwise.
///
/// For a moment relaxation x_i is the moment y of basis element i (the
/// basis of order 2d minus its leading constant, which is fixed at 1 and
/// folded into F_0 and `constant`).
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub constant: f64,
    pub c: Vec<f64>,
    pub block_sizes: Vec<usize>,
    /// mats[0] = F_0, mats[i] = F_i; entries sorted.
    pub mats: Vec<Vec<SdpEntry>>,
    /// Moment basis of order 2d when built from a POP.
    pub moments: Option<MonomialBasis>,
    pub order: usize,
}

impl SdpProblem {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    /// Dense blocks of Σ x_i F_i − F_0.
    pub fn slack(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.block_sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        for (i, mat) in self.mats.iter().enumerate() {
            let w = if i == 0 { -1.0 } else { x[i - 1] };
            if w == 0.0 {
                continue;
            }
            for &(b, r, c, v) in mat {
                out[b][(r, c)] += w * v;
                if r != c {
                    out[b][(c, r)] += w * v;
                }
            }
        }
        out
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.constant + self.c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// The solver's x for a full moment vector (drops y_0).
    pub fn x_from_moments(&self, y: &MomentVector) -> Result<Vec<f64>> {
        let basis = self.moments.as_ref().ok_or_else(|| Error::InvalidArgument("SDP has no moment basis".into()))?;
        basis.monomials[1..].iter().map(|a| y.get(a)).collect()
    }

    pub fn moments_from_x(&self, x: &[f64]) -> Result<MomentVector> {
        let basis = self.moments.clone().ok_or_else(|| Error::InvalidArgument("SDP has no moment basis".into()))?;
        let mut y = Vec::with_capacity(x.len() + 1);
        y.push(1.0);
        y.extend_from_slice(x);
        Ok(MomentVector { basis, y })
    }
}

fn push_localizing(
    g: &Poly,
    order: usize,
    moments: &MonomialBasis,
    block: usize,
    mats: &mut [Vec<SdpEntry>],
) -> Result<usize> {
    let need = half_degree(g);
    if need > order {
        return Err(Error::OrderUnderflow { need, order });
    }
    let basis = basis_unchecked(g.n_vars, order - need)?;
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let ab = add_monomials(&basis.monomials[i], &basis.monomials[j]);
            for (gamma, c) in &g.terms {
                let alpha = add_monomials(gamma, &ab);
                let k = moments.index_of(&alpha).ok_or(Error::MissingMoment(alpha))?;
                // The constant moment is fixed at 1 and moves to −F_0.
                let v = if k == 0 { -c } else { *c };
                mats[k].push((block, i, j, v));
            }
        }
    }
    Ok(basis.len())
}

fn normalize(mat: &mut Vec<SdpEntry>) {
    mat.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    let mut out: Vec<SdpEntry> = Vec::with_capacity(mat.len());
    for &e in mat.iter() {
        match out.last_mut() {
            Some(last) if (last.0, last.1, last.2) == (e.0, e.1, e.2) => last.3 += e.3,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.3 != 0.0);
    *mat = out;
}

/// The order-`order` moment relaxation. Equalities become the band
/// −δ ≤ g ≤ δ, one localizing block per side; δ must be positive when
/// equalities are present.
pub fn build_moment_sdp(pop: &PopProblem, order: usize, delta: f64) -> Result<SdpProblem> {
    pop.validate()?;
    if order == 0 {
        return Err(Error::InvalidArgument("relaxation order must be at least 1".into()));
    }
    let has_eq = pop.constraints.iter().any(|c| c.sense == Sense::Zero);
    if has_eq && !(delta > 0.0) {
        return Err(Error::SlaterFailure(delta));
    }
    let need = half_degree(&pop.objective);
    if need > order {
        return Err(Error::OrderUnderflow { need, order });
    }
    let moments = basis_unchecked(pop.n_vars, 2 * order)?;
    let m = moments.len();
    let mut mats: Vec<Vec<SdpEntry>> = vec![Vec::new(); m];
    let mut block_sizes = Vec::new();

    let one = Poly::constant(pop.n_vars, 1.0);
    block_sizes.push(push_localizing(&one, order, &moments, 0, &mut mats)?);
    for con in &pop.constraints {
        let sides: Vec<Poly> = match con.sense {
            Sense::NonNegative => vec![con.poly.clone()],
            Sense::Zero => {
                let d = Poly::constant(pop.n_vars, delta);
                vec![d.sub(&con.poly), d.add(&con.poly)]
            }
        };
        for g in sides {
            let b = block_sizes.len();
            block_sizes.push(push_localizing(&g, order, &moments, b, &mut mats)?);
        }
    }
    mats.iter_mut().for_each(normalize);

    let mut c = vec![0.0; m - 1];
    let mut constant = 0.0;
    for (alpha, f) in &pop.objective.terms {
        let k = moments.index_of(alpha).ok_or_else(|| Error::MissingMoment(alpha.clone()))?;
        if k == 0 {
            constant += f;
        } else {
            c[k - 1] += f;
        }
    }
    Ok(SdpProblem { constant, c, block_sizes, mats, moments: Some(moments), order })
}
