//! Transmission network model: buses, pi-model branches and the admittance
//! matrices derived from them.
//!
//! All quantities are per-unit. Conversion from the case file's MW/MVAr
//! happens once, in [`parse_case`].

mod admittance;
mod case;

pub use admittance::{build_branch_admittance, build_bus_admittance};
pub use case::{emit_case, parse_case};

use num_complex::Complex64;
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// MATPOWER bus type codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Reference,
    Isolated,
}

impl BusType {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Reference),
            4 => Some(BusType::Isolated),
            _ => None,
        }
    }

    pub fn code(self) -> i64 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Reference => 3,
            BusType::Isolated => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// External id as written in the case file.
    pub id: u64,
    pub bus_type: BusType,
    /// Admittance between the bus and ground, y^G_i.
    pub shunt_admittance: Complex64,
    /// Complex power demand Pd + iQd.
    pub load: Complex64,
    /// Voltage phasor stored with the case (Vm∠Va). For the bundled cases
    /// this is a converged power-flow solution.
    pub voltage: Complex64,
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Internal (0-based) index of the "from" bus, l_f.
    pub from_bus: usize,
    /// Internal (0-based) index of the "to" bus, l_t.
    pub to_bus: usize,
    /// Series admittance y = 1/(r + ix).
    pub series_admittance: Complex64,
    /// Total line charging y^G; each end of the pi-model carries half.
    pub charging_admittance: Complex64,
    /// Off-nominal tap ratio τ (1 for a line).
    pub tap_ratio: f64,
    /// Phase shift θ_shift in radians (0 for a line).
    pub phase_shift: f64,
}

impl Branch {
    /// A plain line (τ = 1, no phase shift).
    pub fn line(from_bus: usize, to_bus: usize, series: Complex64, charging: Complex64) -> Self {
        Self {
            from_bus,
            to_bus,
            series_admittance: series,
            charging_admittance: charging,
            tap_ratio: 1.0,
            phase_shift: 0.0,
        }
    }

    /// Complex tap N = τ e^{iθ_shift}.
    pub fn tap(&self) -> Complex64 {
        Complex64::from_polar(self.tap_ratio, self.phase_shift)
    }

    pub fn is_transformer(&self) -> bool {
        self.tap_ratio != 1.0 || self.phase_shift != 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    /// Dispatched complex power Pg + iQg.
    pub power: Complex64,
    /// Voltage magnitude set point.
    pub voltage_setpoint: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl Network {
    /// Builds a network and checks its structural invariants.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        let net = Self {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    /// Internal index of the reference bus.
    pub fn reference(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.is_reference)
            .expect("validated network has a reference bus")
    }

    /// Internal index of the bus with the given external id.
    pub fn bus_index(&self, id: u64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// The voltage profile stored with the case.
    pub fn case_state(&self) -> crate::StateVector {
        crate::StateVector::new(self.buses.iter().map(|b| b.voltage).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.buses.len();
        if n == 0 {
            return Err(Error::NoReferenceBus);
        }
        if n < 2 {
            return Err(Error::InvalidNetwork(format!("need at least 2 buses, got {n}")));
        }
        let refs = self.buses.iter().filter(|b| b.is_reference).count();
        if refs != 1 {
            return Err(Error::InvalidNetwork(format!(
                "exactly one reference bus required, found {refs}"
            )));
        }
        let mut ids: Vec<u64> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidNetwork("duplicate bus ids".into()));
        }
        for (l, br) in self.branches.iter().enumerate() {
            if br.from_bus >= n || br.to_bus >= n {
                return Err(Error::InvalidNetwork(format!("branch {l} references a missing bus")));
            }
            if br.from_bus == br.to_bus {
                return Err(Error::InvalidNetwork(format!("branch {l} is a self-loop")));
            }
            if !(br.tap_ratio > 0.0) {
                return Err(Error::InvalidNetwork(format!("branch {l} has tap ratio {}", br.tap_ratio)));
            }
            if br.series_admittance == Complex64::new(0.0, 0.0) {
                return Err(Error::InvalidNetwork(format!("branch {l} has zero series admittance")));
            }
        }
        if let Some(unreached) = self.unreachable_bus() {
            return Err(Error::Disconnected(self.buses[unreached].id));
        }
        Ok(())
    }

    fn unreachable_bus(&self) -> Option<usize> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            adj[br.from_bus].push(br.to_bus);
            adj[br.to_bus].push(br.from_bus);
        }
        let start = self.buses.iter().position(|b| b.is_reference).unwrap_or(0);
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            for &j in &adj[k] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    /// Relative comparison used for parse/emit round trips, where per-unit
    /// conversion can move the last bit of a value.
    pub fn approx_eq(&self, other: &Network, rel: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300);
        let cclose = |a: Complex64, b: Complex64| (a - b).norm() <= rel * a.norm().max(b.norm()).max(1e-300);
        self.base_mva == other.base_mva
            && self.buses.len() == other.buses.len()
            && self.branches.len() == other.branches.len()
            && self.generators.len() == other.generators.len()
            && self.buses.iter().zip(&other.buses).all(|(a, b)| {
                a.id == b.id
                    && a.bus_type == b.bus_type
                    && a.is_reference == b.is_reference
                    && cclose(a.shunt_admittance, b.shunt_admittance)
                    && cclose(a.load, b.load)
                    && cclose(a.voltage, b.voltage)
            })
            && self.branches.iter().zip(&other.branches).all(|(a, b)| {
                a.from_bus == b.from_bus
                    && a.to_bus == b.to_bus
                    && cclose(a.series_admittance, b.series_admittance)
                    && cclose(a.charging_admittance, b.charging_admittance)
                    && close(a.tap_ratio, b.tap_ratio)
                    && close(a.phase_shift, b.phase_shift)
            })
            && self.generators.iter().zip(&other.generators).all(|(a, b)| {
                a.bus == b.bus
                    && a.in_service == b.in_service
                    && cclose(a.power, b.power)
                    && close(a.voltage_setpoint, b.voltage_setpoint)
            })
    }
}
