//! Newton–Raphson AC power flow in polar coordinates. Used to produce
//! consistent true states for load trajectories.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measurement::StateVector;
use crate::network::{build_bus_admittance, BusType, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Largest allowed power mismatch, per-unit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowResult {
    pub state: StateVector,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Scheduled injections: in-service generation minus load.
pub fn scheduled_injections(net: &Network) -> Vec<Complex64> {
    let mut s: Vec<Complex64> = net.buses.iter().map(|b| -b.load).collect();
    for g in net.generators.iter().filter(|g| g.in_service) {
        s[g.bus] += g.power;
    }
    s
}

/// Solves for the bus voltages of `net` starting from `init` (its
/// magnitudes at PV and reference buses are replaced by the set points).
pub fn solve_power_flow(net: &Network, init: &StateVector, opts: &PowerFlowOptions) -> Result<PowerFlowResult> {
    let n = net.n_buses();
    if init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.len() });
    }
    let y = build_bus_admittance(net);
    let sched = scheduled_injections(net);
    let mut vm: Vec<f64> = init.v.iter().map(|v| v.norm()).collect();
    let mut va: Vec<f64> = init.v.iter().map(|v| v.arg()).collect();
    for g in net.generators.iter().filter(|g| g.in_service) {
        if net.buses[g.bus].bus_type != BusType::Pq {
            vm[g.bus] = g.voltage_setpoint;
        }
    }
    let pvpq: Vec<usize> = (0..n).filter(|&k| matches!(net.buses[k].bus_type, BusType::Pv | BusType::Pq) && !net.buses[k].is_reference).collect();
    let pq: Vec<usize> = pvpq.iter().copied().filter(|&k| net.buses[k].bus_type == BusType::Pq).collect();
    let (na, nm) = (pvpq.len(), pq.len());

    let mut iterations = 0;
    loop {
        let v: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(vm[k], va[k])).collect();
        let vv = DVector::from_vec(v.clone());
        let i = &y * &vv;
        let s: Vec<Complex64> = (0..n).map(|k| v[k] * i[k].conj()).collect();
        let mut f = DVector::zeros(na + nm);
        for (r, &k) in pvpq.iter().enumerate() {
            f[r] = s[k].re - sched[k].re;
        }
        for (r, &k) in pq.iter().enumerate() {
            f[na + r] = s[k].im - sched[k].im;
        }
        let mismatch = f.amax();
        if !mismatch.is_finite() {
            return Err(Error::Numerical("power flow diverged".into()));
        }
        if mismatch <= opts.tol {
            return Ok(PowerFlowResult { state: StateVector::new(v), iterations, mismatch });
        }
        if iterations >= opts.max_iter {
            return Err(Error::Numerical(format!("power flow did not converge (mismatch {mismatch:.3e})")));
        }
        iterations += 1;

        // dS/dθ = i·diag(V)·conj(diag(I) − Y·diag(V)),
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|).
        let mut ds_da = DMatrix::<Complex64>::zeros(n, n);
        let mut ds_dm = DMatrix::<Complex64>::zeros(n, n);
        let unit: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        for r in 0..n {
            for c in 0..n {
                let yrc = y[(r, c)];
                let mut a = -(yrc * v[c]).conj();
                if r == c {
                    a += i[r].conj();
                }
                ds_da[(r, c)] = Complex64::i() * v[r] * a;
                let mut m = v[r] * (yrc * unit[c]).conj();
                if r == c {
                    m += i[r].conj() * unit[r];
                }
                ds_dm[(r, c)] = m;
            }
        }
        let mut jac = DMatrix::zeros(na + nm, na + nm);
        for (r, &k) in pvpq.iter().enumerate() {
            for (c, &j) in pvpq.iter().enumerate() {
                jac[(r, c)] = ds_da[(k, j)].re;
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(r, na + c)] = ds_dm[(k, j)].re;
            }
        }
        for (r, &k) in pq.iter().enumerate() {
            for (c, &j) in pvpq.iter().enumerate() {
                jac[(na + r, c)] = ds_da[(k, j)].im;
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(na + r, na + c)] = ds_dm[(k, j)].im;
            }
        }
        let dx = jac.lu().solve(&(-f)).ok_or_else(|| Error::Numerical("singular power-flow Jacobian".into()))?;
        for (r, &k) in pvpq.iter().enumerate() {
            va[k] += dx[r];
        }
        for (r, &k) in pq.iter().enumerate() {
            vm[k] += dx[na + r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn reproduces_stored_solutions() {
        for name in ["case2", "case14", "case30"] {
            let net = cases::builtin(name).unwrap();
            let truth = net.case_state();
            let out = solve_power_flow(&net, &StateVector::flat(net.n_buses()), &PowerFlowOptions::default()).unwrap();
            let err = out.state.v.iter().zip(&truth.v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{name}: {err}");
        }
    }
}
