//! The estimation problem as a polynomial optimization problem.
//!
//! Variables are the 2n−1 real voltage coordinates (same order as
//! [`StateVector::to_coords`]) followed by one auxiliary u_j per selected
//! quadratic measurement. The objective Σ c_j (u_j − z_j)² plus the PMU
//! terms is quadratic; each u_j is tied to its measurement function by the
//! equality h_j(x) − u_j = 0, which the relaxation widens to a δ band.

use nalgebra::SymmetricEigen;

use super::moment::{build_basis, moment_matrix, MomentVector, PopConstraint, PopProblem, Sense};
use super::poly::Poly;
use crate::error::{Error, Result};
use crate::estimation::{EstimationProblem, VoltageTerm};
use crate::measurement::{Form, HermitianForm, LinearForm, MeasurementKind, StateVector};

/// Rank test threshold for candidate extraction.
pub const RANK_TOL: f64 = 1e-6;

/// Per-unit magnitude bound behind the redundant ball constraint.
pub const V_MAX: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct EstimationPop {
    pub pop: PopProblem,
    pub n_buses: usize,
    pub reference: usize,
    /// Measurement index of each auxiliary variable, in variable order.
    pub aux: Vec<usize>,
}

/// Variable indices of Re v_k and Im v_k (None for the reference angle).
fn coord_vars(n: usize, reference: usize, k: usize) -> (usize, Option<usize>) {
    if k == reference {
        (2 * n - 2, None)
    } else {
        let j = if k < reference { k } else { k - 1 };
        (j, Some(n - 1 + j))
    }
}

/// Σ Re(M_ij v̄_i v_j) in real coordinates.
fn hermitian_poly(q: &HermitianForm, n: usize, reference: usize, n_vars: usize) -> Poly {
    let re = |k| Poly::var(n_vars, coord_vars(n, reference, k).0);
    let im = |k| coord_vars(n, reference, k).1.map(|i| Poly::var(n_vars, i)).unwrap_or_else(|| Poly::zero(n_vars));
    let mut p = Poly::zero(n_vars);
    for &(i, j, m) in &q.entries {
        let (ai, bi, aj, bj) = (re(i), im(i), re(j), im(j));
        let real = ai.mul(&aj).add(&bi.mul(&bj));
        let imag = ai.mul(&bj).sub(&bi.mul(&aj));
        p = p.add(&real.scale(m.re)).sub(&imag.scale(m.im));
    }
    p
}

/// (Re, Im) of a·v in real coordinates.
fn linear_poly(a: &LinearForm, n: usize, reference: usize, n_vars: usize) -> (Poly, Poly) {
    let mut re = Poly::zero(n_vars);
    let mut im = Poly::zero(n_vars);
    for &(k, c) in &a.entries {
        let (r, i) = coord_vars(n, reference, k);
        re = re.add(&Poly::var(n_vars, r).scale(c.re));
        im = im.add(&Poly::var(n_vars, r).scale(c.im));
        if let Some(i) = i {
            re = re.sub(&Poly::var(n_vars, i).scale(c.im));
            im = im.add(&Poly::var(n_vars, i).scale(c.re));
        }
    }
    (re, im)
}

fn square(p: &Poly) -> Poly {
    p.mul(p)
}

/// Builds the POP for the selected measurements of `prob`. Requires the
/// squared voltage-magnitude term (the absolute value is not polynomial).
pub fn estimation_pop(prob: &EstimationProblem) -> Result<EstimationPop> {
    if prob.voltage_term != VoltageTerm::Squared {
        return Err(Error::InvalidArgument("the moment relaxation needs the squared voltage term".into()));
    }
    let n = prob.n_buses();
    let reference = prob.reference();
    let n_coords = 2 * n - 1;
    let mut aux = Vec::new();
    for (j, m) in prob.ms.entries.iter().enumerate() {
        if prob.selection[j] != 0.0 && !m.kind.is_pmu() {
            aux.push(j);
        }
    }
    let n_vars = n_coords + aux.len();
    let mut objective = Poly::zero(n_vars);
    let mut constraints = Vec::new();
    let mut next_aux = n_coords;
    let mut has_pmu = false;
    for (j, m) in prob.ms.entries.iter().enumerate() {
        let s = prob.selection[j];
        if s == 0.0 {
            continue;
        }
        let c = prob.weights.for_kind(m.kind) * m.weight * s;
        match prob.model.form(m.kind, m.target, j)? {
            Form::Linear(a) => {
                has_pmu = true;
                let (re, im) = linear_poly(a, n, reference, n_vars);
                let r_re = re.sub(&Poly::constant(n_vars, m.value.re));
                let r_im = im.sub(&Poly::constant(n_vars, m.value.im));
                objective = objective.add(&square(&r_re).add(&square(&r_im)).scale(c));
            }
            Form::Quadratic(q) => {
                let z = if m.kind == MeasurementKind::VMag { m.value.re * m.value.re } else { m.value.re };
                let u = Poly::var(n_vars, next_aux);
                next_aux += 1;
                objective = objective.add(&square(&u.sub(&Poly::constant(n_vars, z))).scale(c));
                let h = hermitian_poly(q, n, reference, n_vars);
                constraints.push(PopConstraint { poly: h.sub(&u), sense: Sense::Zero });
            }
        }
    }
    if !has_pmu {
        // Without phasors v and −v fit equally well; keep the half with a
        // non-negative reference voltage.
        constraints.push(PopConstraint { poly: Poly::var(n_vars, 2 * n - 2), sense: Sense::NonNegative });
    }
    // Redundant bounds that make the feasible set compact; without them
    // high-order moments of the auxiliaries are unbounded and the dual has
    // no interior. Σ|v_k|² ≤ n·V_MAX², and f ≤ f(flat) + 1, which the
    // minimizer satisfies.
    let mut ball = Poly::constant(n_vars, n as f64 * V_MAX * V_MAX);
    for i in 0..n_coords {
        let xi = Poly::var(n_vars, i);
        ball = ball.sub(&xi.mul(&xi));
    }
    constraints.push(PopConstraint { poly: ball, sense: Sense::NonNegative });
    let partial = EstimationPop {
        pop: PopProblem { n_vars, objective: objective.clone(), constraints: constraints.clone() },
        n_buses: n,
        reference,
        aux: aux.clone(),
    };
    let f_flat = objective.eval(&partial.lift(&StateVector::flat(n)));
    let level = Poly::constant(n_vars, f_flat + 1.0).sub(&objective);
    constraints.push(PopConstraint { poly: level, sense: Sense::NonNegative });
    let pop = PopProblem { n_vars, objective, constraints };
    pop.validate()?;
    Ok(EstimationPop { pop, n_buses: n, reference, aux })
}

impl EstimationPop {
    pub fn n_coords(&self) -> usize {
        2 * self.n_buses - 1
    }

    /// The POP point for a state: coordinates plus u_j = h_j(v). Every
    /// equality holds exactly, up to rounding.
    pub fn lift(&self, v: &StateVector) -> Vec<f64> {
        let mut x = v.gauge_fixed(self.reference).to_coords(self.reference);
        let n_vars = self.pop.n_vars;
        x.resize(n_vars, 0.0);
        // With u_j = 0 the constraint h_j − u_j evaluates to h_j.
        let mut k = self.n_coords();
        for con in &self.pop.constraints {
            if con.sense == Sense::Zero {
                x[k] = con.poly.eval(&x);
                k += 1;
            }
        }
        x
    }

    pub fn state(&self, x: &[f64]) -> StateVector {
        StateVector::from_coords(&x[..self.n_coords()], self.n_buses, self.reference)
    }
}

/// The point behind a rank-one order-1 moment matrix: if λ₂/λ₁ ≤ tol,
/// returns the top eigenvector scaled to a leading 1.
pub fn rank_one_point(y: &MomentVector, tol: f64) -> Result<Option<Vec<f64>>> {
    let basis = build_basis(y.basis.n_vars, 1)?;
    let m = moment_matrix(&basis, y)?;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = order.get(1).map_or(0.0, |&i| eig.eigenvalues[i]);
    if !(l1 > 0.0) || l2 / l1 > tol {
        return Ok(None);
    }
    let e = eig.eigenvectors.column(order[0]);
    if e[0].abs() < 1e-12 {
        return Ok(None);
    }
    Ok(Some(e.iter().skip(1).map(|v| v / e[0]).collect()))
}

/// A state candidate from a solved relaxation, when its moment matrix is
/// numerically rank one.
pub fn extract_candidate(pop: &EstimationPop, y: &MomentVector) -> Option<StateVector> {
    rank_one_point(y, RANK_TOL).ok().flatten().map(|x| pop.state(&x))
}
