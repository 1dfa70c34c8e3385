use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Branch, Network};

/// The four entries of a branch's two-port admittance:
/// `[i_f; i_t] = [[yff, yft], [ytf, ytt]] [v_f; v_t]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BranchBlock {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

pub(crate) fn branch_block(br: &Branch) -> BranchBlock {
    let y = br.series_admittance;
    let half = br.charging_admittance * 0.5;
    let n = br.tap();
    BranchBlock {
        yff: (y + half) / (br.tap_ratio * br.tap_ratio),
        yft: -y / n.conj(),
        ytf: -y / n,
        ytt: y + half,
    }
}

/// Bus admittance matrix Y (n×n). Parallel branches are summed here.
pub fn build_bus_admittance(net: &Network) -> DMatrix<Complex64> {
    let n = net.n_buses();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, bus) in net.buses.iter().enumerate() {
        y[(k, k)] += bus.shunt_admittance;
    }
    for br in &net.branches {
        let b = branch_block(br);
        let (f, t) = (br.from_bus, br.to_bus);
        y[(f, f)] += b.yff;
        y[(f, t)] += b.yft;
        y[(t, f)] += b.ytf;
        y[(t, t)] += b.ytt;
    }
    y
}

/// Branch admittance matrices (Y_f, Y_t), each m×n, so that `Y_f v` and
/// `Y_t v` are the currents entering each branch at its from and to ends.
pub fn build_branch_admittance(net: &Network) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let (m, n) = (net.n_branches(), net.n_buses());
    let zero = Complex64::new(0.0, 0.0);
    let mut yf = DMatrix::from_element(m, n, zero);
    let mut yt = DMatrix::from_element(m, n, zero);
    for (l, br) in net.branches.iter().enumerate() {
        let b = branch_block(br);
        yf[(l, br.from_bus)] = b.yff;
        yf[(l, br.to_bus)] = b.yft;
        yt[(l, br.from_bus)] = b.ytf;
        yt[(l, br.to_bus)] = b.ytt;
    }
    (yf, yt)
}
