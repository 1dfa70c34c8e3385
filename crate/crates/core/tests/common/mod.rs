#![allow(dead_code)]

use gridstate::{Branch, Bus, BusType, Network, StateVector};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A connected random network: a random spanning tree plus a few extra
/// branches (parallel ones allowed), random shunts and charging, and
/// optionally off-nominal taps and phase shifters.
pub fn random_network(seed: u64, n: usize, transformers: bool) -> Network {
    let mut r = rng(seed);
    let reference = r.gen_range(0..n);
    let buses = (0..n)
        .map(|k| Bus {
            id: (k as u64 + 1) * 3,
            bus_type: if k == reference { BusType::Reference } else { BusType::Pq },
            shunt_admittance: if r.gen_bool(0.3) { c(r.gen_range(0.0..0.05), r.gen_range(-0.2..0.2)) } else { c(0.0, 0.0) },
            load: c(0.0, 0.0),
            voltage: c(1.0, 0.0),
            is_reference: k == reference,
        })
        .collect();
    let mut pairs = Vec::new();
    for k in 1..n {
        pairs.push((r.gen_range(0..k), k));
    }
    for _ in 0..n / 2 {
        let a = r.gen_range(0..n);
        let b = r.gen_range(0..n);
        if a != b {
            pairs.push((a, b));
        }
    }
    let branches = pairs
        .into_iter()
        .map(|(a, b)| {
            let (f, t) = if r.gen_bool(0.5) { (a, b) } else { (b, a) };
            let z = c(r.gen_range(0.001..0.1), r.gen_range(0.01..0.5));
            let mut br = Branch::line(f, t, 1.0 / z, c(0.0, r.gen_range(0.0..0.3)));
            if transformers && r.gen_bool(0.3) {
                br.tap_ratio = r.gen_range(0.9..1.1);
                br.phase_shift = if r.gen_bool(0.5) { r.gen_range(-0.2..0.2) } else { 0.0 };
            }
            br
        })
        .collect();
    Network::new(format!("random{seed}"), 100.0, buses, branches, vec![]).unwrap()
}

pub fn random_state(r: &mut ChaCha8Rng, n: usize) -> StateVector {
    StateVector::new((0..n).map(|_| Complex64::from_polar(r.gen_range(0.8..1.2), r.gen_range(-0.6..0.6))).collect())
}

/// Currents entering one branch at its (from, to) ends, computed from the
/// circuit: an ideal N:1 transformer at the from end feeding a pi section.
pub fn branch_currents(br: &Branch, vf: Complex64, vt: Complex64) -> (Complex64, Complex64) {
    let n = Complex64::from_polar(br.tap_ratio, br.phase_shift);
    let vf2 = vf / n;
    let series = br.series_admittance * (vf2 - vt);
    let half = br.charging_admittance / 2.0;
    let into_pi_from = series + half * vf2;
    // Lossless transformer: vf·conj(if) = vf2·conj(if2).
    let i_from = into_pi_from / n.conj();
    let i_to = -series + half * vt;
    (i_from, i_to)
}

/// Y, Y_f, Y_t assembled column by column from the circuit response to
/// unit voltages.
pub fn stamping_oracle(net: &Network) -> (DMatrix<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>) {
    let (n, m) = (net.n_buses(), net.n_branches());
    let zero = c(0.0, 0.0);
    let mut y = DMatrix::from_element(n, n, zero);
    let mut yf = DMatrix::from_element(m, n, zero);
    let mut yt = DMatrix::from_element(m, n, zero);
    for j in 0..n {
        let v: Vec<Complex64> = (0..n).map(|k| if k == j { c(1.0, 0.0) } else { zero }).collect();
        y[(j, j)] += net.buses[j].shunt_admittance;
        for (l, br) in net.branches.iter().enumerate() {
            let (i_f, i_t) = branch_currents(br, v[br.from_bus], v[br.to_bus]);
            yf[(l, j)] = i_f;
            yt[(l, j)] = i_t;
            y[(br.from_bus, j)] += i_f;
            y[(br.to_bus, j)] += i_t;
        }
    }
    (y, yf, yt)
}

pub fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
