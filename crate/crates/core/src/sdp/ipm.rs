//! Primal-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector) for
//!
//!   minimize cᵀx  subject to  X = Σ x_i F_i − F_0 ⪰ 0
//!   maximize ⟨F_0, Y⟩  subject to  ⟨F_i, Y⟩ = c_i,  Y ⪰ 0.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::moment::SdpProblem;
use crate::error::{Error, Result};

/// Largest number of SDP variables the solver accepts.
pub const SDP_VAR_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    /// Stalled short of `tol` but within `loose_tol`.
    Inaccurate,
    /// Iterates diverged: the primal (moment) side has no feasible point.
    Infeasible,
    /// Numerical breakdown; the best iterate is returned.
    Failed,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    /// Relative duality gap and relative infeasibility target.
    pub tol: f64,
    /// Reduced target: the best iterate is reported as `Inaccurate` when
    /// it meets this but not `tol`.
    pub loose_tol: f64,
    pub max_iter: usize,
    /// Stop after this many iterations without a better iterate.
    pub stall_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Initial X = Y = ξ I for cold starts.
    pub initial_scale: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-7, loose_tol: 1e-5, max_iter: 100, stall_iters: 8, step_fraction: 0.95, initial_scale: 100.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal variables (the moments without y_0).
    pub x: Vec<f64>,
    pub primal_objective: f64,
    /// ⟨F_0, Y⟩ + constant; a lower bound once the dual is feasible.
    pub dual_objective: f64,
    /// The reported relaxation value: the dual objective when the dual is
    /// feasible to `loose_tol`, else the primal one.
    pub bound: f64,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
    pub slack: Vec<DMatrix<f64>>,
    pub dual: Vec<DMatrix<f64>>,
}

const QR_FLOP_LIMIT: f64 = 2e9;

/// Per block, the variables that touch it with their entries.
struct BlockMap {
    vars: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    /// The same entries with off-diagonals mirrored.
    full: Vec<Vec<Vec<(usize, usize, f64)>>>,
}

impl BlockMap {
    fn new(sdp: &SdpProblem) -> Self {
        let mut vars: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); sdp.block_sizes.len()];
        for (i, mat) in sdp.mats.iter().enumerate().skip(1) {
            for &(b, r, c, v) in mat {
                match vars[b].last_mut() {
                    Some((last, entries)) if *last == i - 1 => entries.push((r, c, v)),
                    _ => vars[b].push((i - 1, vec![(r, c, v)])),
                }
            }
        }
        let full = vars
            .iter()
            .map(|block| {
                block
                    .iter()
                    .map(|(_, entries)| {
                        let mut out = Vec::with_capacity(2 * entries.len());
                        for &(r, c, v) in entries {
                            out.push((r, c, v));
                            if r != c {
                                out.push((c, r, v));
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        Self { vars, full }
    }
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// ⟨F, A⟩ for symmetric F stored as its upper triangle.
fn inner_sparse(entries: &[(usize, usize, f64)], a: &DMatrix<f64>) -> f64 {
    entries
        .iter()
        .map(|&(r, c, v)| if r == c { v * a[(r, r)] } else { v * (a[(r, c)] + a[(c, r)]) })
        .sum()
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// F Y for sparse symmetric F.
fn sparse_times(entries: &[(usize, usize, f64)], y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    let mut out = DMatrix::zeros(n, n);
    for &(r, c, v) in entries {
        for k in 0..n {
            out[(r, k)] += v * y[(c, k)];
        }
        if r != c {
            for k in 0..n {
                out[(c, k)] += v * y[(r, k)];
            }
        }
    }
    out
}

/// Largest α with X + α dX ⪰ 0 (infinite if dX ⪰ 0).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let l = Cholesky::new(x.clone())?.l();
    let li = l.clone().try_inverse()?;
    let m = sym(&(&li * dx * li.transpose()));
    let lmin = SymmetricEigen::new(m).eigenvalues.min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn inverse_pd(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Some(sym(&Cholesky::new(x.clone())?.inverse()))
}

/// Solves B dx = rhs with a few steps of iterative refinement; B is
/// badly conditioned near the optimum.
fn solve_schur(b: &DMatrix<f64>, r_factor: Option<&DMatrix<f64>>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = if r_factor.is_some() { None } else { Cholesky::new(b.clone()) };
    let solve: Box<dyn Fn(&DVector<f64>) -> Option<DVector<f64>>> = match (r_factor, chol) {
        (Some(r), _) => Box::new(move |v| {
            let z = r.tr_solve_upper_triangular(v)?;
            r.solve_upper_triangular(&z)
        }),
        (None, Some(ch)) => Box::new(move |r| Some(ch.solve(r))),
        (None, None) => {
            let lu = b.clone().lu();
            Box::new(move |r| lu.solve(r))
        }
    };
    let mut x = match solve(rhs) {
        Some(x) => x,
        None if r_factor.is_some() => return solve_schur(b, None, rhs),
        None => return None,
    };
    for _ in 0..3 {
        let r = rhs - b * &x;
        x += solve(&r)?;
    }
    Some(x)
}

fn check_size(sdp: &SdpProblem) -> Result<()> {
    let largest = sdp.block_sizes.iter().copied().max().unwrap_or(0);
    let vars = sdp.n_vars().max(largest);
    if vars > SDP_VAR_LIMIT {
        return Err(Error::SdpTooLarge { vars, limit: SDP_VAR_LIMIT });
    }
    if sdp.mats.len() != sdp.n_vars() + 1 {
        return Err(Error::DimensionMismatch { expected: sdp.n_vars() + 1, got: sdp.mats.len() });
    }
    Ok(())
}

/// Cold start: x = 0, X = Y = ξ I. A run that breaks down or stalls is
/// restarted once from its best primal point, keeping the better of the two.
pub fn solve_sdp(sdp: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    check_size(sdp)?;
    let xs = vec![0.0; sdp.n_vars()];
    let big: Vec<DMatrix<f64>> =
        sdp.block_sizes.iter().map(|&s| DMatrix::identity(s, s) * opts.initial_scale).collect();
    let cold = run(sdp, xs, big.clone(), big, opts)?;
    if matches!(cold.status, SdpStatus::Optimal | SdpStatus::Infeasible) {
        return Ok(cold);
    }
    let warm = solve_sdp_warm(sdp, &cold.x, opts)?;
    let merit = |s: &SdpSolution| s.primal_infeasibility.max(s.dual_infeasibility).max(s.gap);
    let iterations = cold.iterations + warm.iterations;
    let mut out = if merit(&warm) < merit(&cold) { warm } else { cold };
    out.iterations = iterations;
    Ok(out)
}

/// Warm start from a previous primal point: X is the slack at `x0`
/// shifted into the interior, Y = μ₀ X⁻¹ so the start is centred.
pub fn solve_sdp_warm(sdp: &SdpProblem, x0: &[f64], opts: &SdpOptions) -> Result<SdpSolution> {
    check_size(sdp)?;
    if x0.len() != sdp.n_vars() {
        return Err(Error::DimensionMismatch { expected: sdp.n_vars(), got: x0.len() });
    }
    let slack = sdp.slack(x0);
    let mut xm = Vec::with_capacity(slack.len());
    let mut ym = Vec::with_capacity(slack.len());
    for s in slack {
        let n = s.nrows();
        let lmin = SymmetricEigen::new(s.clone()).eigenvalues.min();
        let shift = (1e-2 - lmin).max(0.0);
        let x = s + DMatrix::identity(n, n) * shift;
        let y = inverse_pd(&x).map(|xi| xi * 1e-1).unwrap_or_else(|| DMatrix::identity(n, n));
        xm.push(x);
        ym.push(y);
    }
    run(sdp, x0.to_vec(), xm, ym, opts)
}

fn run(
    sdp: &SdpProblem,
    mut x: Vec<f64>,
    mut xm: Vec<DMatrix<f64>>,
    mut ym: Vec<DMatrix<f64>>,
    opts: &SdpOptions,
) -> Result<SdpSolution> {
    let m = sdp.n_vars();
    let map = BlockMap::new(sdp);
    let dim: usize = sdp.block_sizes.iter().sum();
    let f0 = {
        let mut f: Vec<DMatrix<f64>> = sdp.block_sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        for &(b, r, c, v) in &sdp.mats[0] {
            f[b][(r, c)] += v;
            if r != c {
                f[b][(c, r)] += v;
            }
        }
        f
    };
    let f0_norm = f0.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt();
    let c_norm = sdp.c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c = DVector::from_column_slice(&sdp.c);

    // Gram matrix ⟨F_i, F_j⟩, used to project dY back onto the dual
    // equations the Schur solve only satisfies approximately.
    let mut gram = DMatrix::zeros(m, m);
    for (b, vars) in map.vars.iter().enumerate() {
        let size = sdp.block_sizes[b];
        for (i, fi) in vars {
            let mut dense = DMatrix::zeros(size, size);
            for &(r, cc, v) in fi {
                dense[(r, cc)] += v;
                if r != cc {
                    dense[(cc, r)] += v;
                }
            }
            for (j, fj) in vars {
                gram[(*j, *i)] += inner_sparse(fj, &dense);
            }
        }
    }
    let gram = Cholesky::new(gram);

    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let mut best: Option<Best> = None;
    loop {
        // Residuals.
        let fx = sdp.slack(&x);
        let p: Vec<DMatrix<f64>> = fx.iter().zip(&xm).map(|(a, b)| a - b).collect();
        let mut d = c.clone();
        for (b, vars) in map.vars.iter().enumerate() {
            for (i, entries) in vars {
                d[*i] -= inner_sparse(entries, &ym[b]);
            }
        }
        let pobj = sdp.objective(&x);
        let dobj = sdp.constant + inner(&f0, &ym);
        let pinf = p.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt() / (1.0 + f0_norm);
        let dinf = d.norm() / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let merit = pinf.max(dinf).max(gap);
        if merit.is_finite() && best.as_ref().map_or(true, |b| merit < b.merit()) {
            best = Some(Best { x: x.clone(), xm: xm.clone(), ym: ym.clone(), pinf, dinf, gap, iteration: iterations });
        }
        if merit <= opts.tol {
            status = SdpStatus::Optimal;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        if best.as_ref().is_some_and(|b| iterations - b.iteration >= opts.stall_iters) {
            break;
        }
        if !pobj.is_finite() || !dobj.is_finite() || pobj.abs() > 1e12 || dobj.abs() > 1e12 {
            status = SdpStatus::Infeasible;
            break;
        }
        iterations += 1;
        let mu = inner(&xm, &ym) / dim as f64;

        let Some(xinv) = xm.iter().map(inverse_pd).collect::<Option<Vec<_>>>() else {
            status = SdpStatus::Failed;
            break;
        };

        // Schur complement B_ij = tr(F_i X⁻¹ F_j Y).
        let mut schur = DMatrix::zeros(m, m);
        for (b, vars) in map.vars.iter().enumerate() {
            let s = sdp.block_sizes[b] as f64;
            let nnz = map.full[b].iter().map(Vec::len).sum::<usize>() as f64;
            if nnz * nnz < vars.len() as f64 * s * s * s {
                // Few entries per block: sum over entry pairs directly.
                for (i, fi) in vars.iter().zip(&map.full[b]) {
                    for (j, fj) in vars.iter().zip(&map.full[b]) {
                        if j.0 < i.0 {
                            continue;
                        }
                        let mut t = 0.0;
                        for &(a, bb, v) in fi {
                            for &(cc, d, w) in fj {
                                t += v * w * xinv[b][(bb, cc)] * ym[b][(d, a)];
                            }
                        }
                        schur[(j.0, i.0)] += t;
                        if j.0 != i.0 {
                            schur[(i.0, j.0)] += t;
                        }
                    }
                }
            } else {
                for (i, fi) in vars {
                    let g = &xinv[b] * sparse_times(fi, &ym[b]);
                    for (j, fj) in vars {
                        schur[(*j, *i)] += inner_sparse(fj, &g);
                    }
                }
            }
        }
        let schur = sym(&schur);
        // Factor B = GᵀG through a QR of G, whose columns are
        // vec(L_X⁻¹ F_i L_Y); this avoids squaring the condition number.
        let rows: usize = sdp.block_sizes.iter().map(|s| s * s).sum();
        // Past this size the QR costs far more than the rest of the
        // iteration; Cholesky with refinement is used instead.
        let factor = if (rows * m * m) as f64 > QR_FLOP_LIMIT {
            None
        } else {
            let mut g = DMatrix::zeros(rows, m);
            let mut offset = 0;
            let mut ok = true;
            for (b, vars) in map.vars.iter().enumerate() {
                let size = sdp.block_sizes[b];
                let lx = Cholesky::new(xm[b].clone()).and_then(|c| c.l().try_inverse());
                let ly = Cholesky::new(ym[b].clone()).map(|c| c.l());
                let (Some(lxi), Some(ly)) = (lx, ly) else { ok = false; break };
                for (i, fi) in vars {
                    let k = &lxi * sparse_times(fi, &ly);
                    for (t, v) in k.iter().enumerate() {
                        g[(offset + t, *i)] = *v;
                    }
                }
                offset += size * size;
            }
            if ok { Some(g.qr().r()) } else { None }
        };
        let xpy: Vec<DMatrix<f64>> = (0..xm.len()).map(|b| sym(&(&xinv[b] * &p[b] * &ym[b]))).collect();

        // Direction for a complementarity target σμ and second-order term.
        let direction = |target: f64, second: Option<&[DMatrix<f64>]>| -> Option<(DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
            let r: Vec<DMatrix<f64>> = (0..xm.len())
                .map(|b| {
                    let mut r = &xinv[b] * target - &xpy[b];
                    if let Some(s) = second {
                        r -= &s[b];
                    }
                    r
                })
                .collect();
            let mut rhs = -c.clone();
            for (b, vars) in map.vars.iter().enumerate() {
                for (i, entries) in vars {
                    rhs[*i] += inner_sparse(entries, &r[b]);
                }
            }
            let dx = solve_schur(&schur, factor.as_ref(), &rhs)?;
            if dx.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let mut dxm = p.clone();
            for (b, vars) in map.vars.iter().enumerate() {
                for (i, entries) in vars {
                    let w = dx[*i];
                    for &(rr, cc, v) in entries {
                        dxm[b][(rr, cc)] += w * v;
                        if rr != cc {
                            dxm[b][(cc, rr)] += w * v;
                        }
                    }
                }
            }
            let mut dym: Vec<DMatrix<f64>> = (0..xm.len())
                .map(|b| {
                    let mut t = &xinv[b] * target - &ym[b] - &xinv[b] * &dxm[b] * &ym[b];
                    if let Some(s) = second {
                        t -= &s[b];
                    }
                    sym(&t)
                })
                .collect();
            if let Some(g) = &gram {
                let mut r = d.clone();
                for (b, vars) in map.vars.iter().enumerate() {
                    for (i, entries) in vars {
                        r[*i] -= inner_sparse(entries, &dym[b]);
                    }
                }
                let lam = g.solve(&r);
                for (b, vars) in map.vars.iter().enumerate() {
                    for (i, entries) in vars {
                        let w = lam[*i];
                        for &(rr, cc, v) in entries {
                            dym[b][(rr, cc)] += w * v;
                            if rr != cc {
                                dym[b][(cc, rr)] += w * v;
                            }
                        }
                    }
                }
            }
            Some((dx, dxm, dym))
        };
        let steps = |dxm: &[DMatrix<f64>], dym: &[DMatrix<f64>]| -> Option<(f64, f64)> {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for b in 0..xm.len() {
                ap = ap.min(max_step(&xm[b], &dxm[b])?);
                ad = ad.min(max_step(&ym[b], &dym[b])?);
            }
            Some(((opts.step_fraction * ap).min(1.0), (opts.step_fraction * ad).min(1.0)))
        };

        // Predictor.
        let Some((_, dxa, dya)) = direction(0.0, None) else {
            status = SdpStatus::Failed;
            break;
        };
        let Some((ap, ad)) = steps(&dxa, &dya) else {
            status = SdpStatus::Failed;
            break;
        };
        let mut mu_aff = 0.0;
        for b in 0..xm.len() {
            mu_aff += (&xm[b] + &dxa[b] * ap).dot(&(&ym[b] + &dya[b] * ad));
        }
        mu_aff /= dim as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let second: Vec<DMatrix<f64>> = (0..xm.len()).map(|b| &xinv[b] * &dxa[b] * &dya[b]).collect();
        let Some((dx, dxm, dym)) = direction(sigma * mu, Some(&second)) else {
            status = SdpStatus::Failed;
            break;
        };
        let Some((ap, ad)) = steps(&dxm, &dym) else {
            status = SdpStatus::Failed;
            break;
        };
        for (xi, di) in x.iter_mut().zip(dx.iter()) {
            *xi += ap * di;
        }
        for b in 0..xm.len() {
            xm[b] += &dxm[b] * ap;
            ym[b] += &dym[b] * ad;
        }
        log::trace!("sdp iter {iterations}: mu {mu:.3e} sigma {sigma:.3e} steps {ap:.3} {ad:.3}");
    }

    let Some(b) = best else {
        return Err(Error::Numerical("interior-point start is not finite".into()));
    };
    if status != SdpStatus::Optimal {
        if b.merit() <= opts.tol {
            status = SdpStatus::Optimal;
        } else if b.merit() <= opts.loose_tol {
            status = SdpStatus::Inaccurate;
        }
    }
    let primal_objective = sdp.objective(&b.x);
    let dual_objective = sdp.constant + inner(&f0, &b.ym);
    let bound = if b.dinf <= opts.loose_tol { dual_objective } else { primal_objective };
    Ok(SdpSolution {
        status,
        x: b.x,
        primal_objective,
        dual_objective,
        bound,
        iterations,
        primal_infeasibility: b.pinf,
        dual_infeasibility: b.dinf,
        gap: b.gap,
        slack: b.xm,
        dual: b.ym,
    })
}

/// The iterate with the smallest worst residual seen so far.
struct Best {
    x: Vec<f64>,
    xm: Vec<DMatrix<f64>>,
    ym: Vec<DMatrix<f64>>,
    pinf: f64,
    dinf: f64,
    gap: f64,
    iteration: usize,
}

impl Best {
    fn merit(&self) -> f64 {
        self.pinf.max(self.dinf).max(self.gap)
    }
}
