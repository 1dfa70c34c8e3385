//! Reader and writer for the MATPOWER case subset: `mpc.baseMVA`, `mpc.bus`,
//! `mpc.gen` and `mpc.branch`. Other fields are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;

use super::{Branch, Bus, BusType, Generator, Network};
use crate::error::{Error, Result};

const BUS_COLS: usize = 9;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 11;

struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct RawCase {
    name: String,
    base_mva: Option<(usize, f64)>,
    matrices: HashMap<String, Vec<Row>>,
}

enum Mode {
    Top,
    Matrix { field: String, rows: Vec<Row>, current: Vec<f64>, row_line: usize },
    Cell,
}

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax { line, msg: msg.into() }
}

/// Removes a trailing `%` comment, ignoring `%` inside single-quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| syntax(line, format!("invalid number `{tok}`")))
}

fn tokenize(text: &str) -> Result<RawCase> {
    let mut raw = RawCase::default();
    let mut mode = Mode::Top;

    for (idx, full_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut rest: &str = strip_comment(full_line);

        loop {
            match &mut mode {
                Mode::Top => {
                    let trimmed = rest.trim();
                    if trimmed.is_empty() {
                        break;
                    }
                    if let Some(sig) = trimmed.strip_prefix("function") {
                        if let Some((_, name)) = sig.split_once('=') {
                            raw.name = name.trim().trim_end_matches(';').trim().to_string();
                        }
                        break;
                    }
                    if matches!(trimmed.trim_end_matches(';'), "end" | "return") {
                        break;
                    }
                    let Some(assign) = trimmed.strip_prefix("mpc.") else {
                        return Err(syntax(line_no, format!("unexpected statement `{trimmed}`")));
                    };
                    let Some((field, rhs)) = assign.split_once('=') else {
                        return Err(syntax(line_no, "expected `mpc.<field> = <value>`"));
                    };
                    let field = field.trim().to_string();
                    if field.is_empty() || !field.chars().all(|c| c.is_alphanumeric() || c == '_') {
                        return Err(syntax(line_no, format!("invalid field name `{field}`")));
                    }
                    let rhs = rhs.trim_start();
                    if let Some(after) = rhs.strip_prefix('[') {
                        mode = Mode::Matrix { field, rows: Vec::new(), current: Vec::new(), row_line: line_no };
                        rest = after;
                        continue;
                    }
                    if let Some(after) = rhs.strip_prefix('{') {
                        mode = Mode::Cell;
                        rest = after;
                        continue;
                    }
                    if field == "baseMVA" {
                        let value = rhs.trim().trim_end_matches(';').trim();
                        let base = parse_number(value, line_no)?;
                        if !(base.is_finite() && base > 0.0) {
                            return Err(syntax(line_no, "baseMVA must be positive and finite"));
                        }
                        raw.base_mva = Some((line_no, base));
                    }
                    break;
                }
                Mode::Cell => {
                    match rest.find('}') {
                        Some(pos) => {
                            rest = rest[pos + 1..].trim_start().trim_start_matches(';');
                            mode = Mode::Top;
                            continue;
                        }
                        None => break,
                    }
                }
                Mode::Matrix { field, rows, current, row_line } => {
                    let (body, closes) = match rest.find(']') {
                        Some(pos) => (&rest[..pos], Some(pos)),
                        None => (rest, None),
                    };
                    for (k, chunk) in body.split(';').enumerate() {
                        if k > 0 && !current.is_empty() {
                            rows.push(Row { line: *row_line, values: std::mem::take(current) });
                        }
                        for tok in chunk.split(|c: char| c.is_whitespace() || c == ',') {
                            if tok.is_empty() {
                                continue;
                            }
                            if current.is_empty() {
                                *row_line = line_no;
                            }
                            current.push(parse_number(tok, line_no)?);
                        }
                    }
                    // A newline also terminates a row.
                    if !current.is_empty() {
                        rows.push(Row { line: *row_line, values: std::mem::take(current) });
                    }
                    match closes {
                        Some(pos) => {
                            let field = std::mem::take(field);
                            let rows = std::mem::take(rows);
                            if raw.matrices.insert(field.clone(), rows).is_some() {
                                return Err(syntax(line_no, format!("field `{field}` defined twice")));
                            }
                            rest = rest[pos + 1..].trim_start().trim_start_matches(';');
                            mode = Mode::Top;
                            continue;
                        }
                        None => break,
                    }
                }
            }
        }
    }

    match mode {
        Mode::Top => Ok(raw),
        Mode::Matrix { field, .. } => Err(syntax(
            text.lines().count().max(1),
            format!("unterminated matrix `mpc.{field}`"),
        )),
        Mode::Cell => Err(syntax(text.lines().count().max(1), "unterminated cell array")),
    }
}

fn require_cols(row: &Row, n: usize, what: &str) -> Result<()> {
    if row.values.len() < n {
        return Err(syntax(
            row.line,
            format!("{what} row has {} columns, expected at least {n}", row.values.len()),
        ));
    }
    if let Some(bad) = row.values[..n].iter().find(|v| !v.is_finite()) {
        return Err(syntax(row.line, format!("non-finite value {bad} in {what} row")));
    }
    Ok(())
}

fn as_id(value: f64, line: usize, what: &str) -> Result<u64> {
    if value < 0.0 || value.fract() != 0.0 || value > 9.0e15 {
        return Err(syntax(line, format!("{what} `{value}` is not a non-negative integer")));
    }
    Ok(value as u64)
}

/// Parses MATPOWER case text into a per-unit [`Network`].
///
/// Buses are renumbered to contiguous 0-based indices in file order; the
/// external ids stay on [`Bus::id`]. Branches with status 0 are dropped and
/// parallel branches are kept as separate records.
pub fn parse_case(text: &str) -> Result<Network> {
    let mut raw = tokenize(text)?;
    let (_, base) = raw
        .base_mva
        .ok_or_else(|| syntax(1, "missing `mpc.baseMVA`"))?;
    let bus_rows = raw.matrices.remove("bus").ok_or(Error::NoReferenceBus)?;
    if bus_rows.is_empty() {
        return Err(Error::NoReferenceBus);
    }

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut index_of = HashMap::new();
    for row in &bus_rows {
        require_cols(row, BUS_COLS, "bus")?;
        let v = &row.values;
        let id = as_id(v[0], row.line, "bus id")?;
        let code = as_id(v[1], row.line, "bus type")? as i64;
        let bus_type = BusType::from_code(code)
            .ok_or_else(|| syntax(row.line, format!("unknown bus type {code}")))?;
        if index_of.insert(id, buses.len()).is_some() {
            return Err(syntax(row.line, format!("duplicate bus id {id}")));
        }
        buses.push(Bus {
            id,
            bus_type,
            shunt_admittance: Complex64::new(v[4], v[5]) / base,
            load: Complex64::new(v[2], v[3]) / base,
            voltage: Complex64::from_polar(v[7], v[8].to_radians()),
            is_reference: false,
        });
    }
    let reference = buses
        .iter()
        .position(|b| b.bus_type == BusType::Reference)
        .unwrap_or_else(|| {
            let (k, _) = buses.iter().enumerate().min_by_key(|(_, b)| b.id).expect("non-empty");
            log::warn!("no reference bus in case; using lowest id {}", buses[k].id);
            k
        });
    buses[reference].is_reference = true;
    buses[reference].bus_type = BusType::Reference;

    let lookup = |id: f64, line: usize| -> Result<usize> {
        let id = as_id(id, line, "bus id")?;
        index_of
            .get(&id)
            .copied()
            .ok_or_else(|| syntax(line, format!("unknown bus {id}")))
    };

    let mut generators = Vec::new();
    for row in raw.matrices.remove("gen").unwrap_or_default() {
        require_cols(&row, GEN_COLS, "gen")?;
        let v = &row.values;
        generators.push(Generator {
            bus: lookup(v[0], row.line)?,
            power: Complex64::new(v[1], v[2]) / base,
            voltage_setpoint: v[5],
            in_service: v[7] > 0.0,
        });
    }

    let mut branches = Vec::new();
    for row in raw.matrices.remove("branch").unwrap_or_default() {
        require_cols(&row, BRANCH_COLS, "branch")?;
        let v = &row.values;
        if v[10] <= 0.0 {
            continue;
        }
        let from = lookup(v[0], row.line)?;
        let to = lookup(v[1], row.line)?;
        if from == to {
            return Err(syntax(row.line, format!("branch connects bus {} to itself", buses[from].id)));
        }
        let (r, x, b) = (v[2], v[3], v[4]);
        if r == 0.0 && x == 0.0 {
            return Err(Error::ZeroImpedance {
                line: row.line,
                from: buses[from].id,
                to: buses[to].id,
            });
        }
        let series = Complex64::new(1.0, 0.0) / Complex64::new(r, x);
        if !(series.re.is_finite() && series.im.is_finite()) {
            return Err(syntax(row.line, "branch impedance is too small to invert"));
        }
        let tap_ratio = if v[8] == 0.0 { 1.0 } else { v[8] };
        if tap_ratio < 0.0 {
            return Err(syntax(row.line, format!("negative tap ratio {tap_ratio}")));
        }
        branches.push(Branch {
            from_bus: from,
            to_bus: to,
            series_admittance: series,
            charging_admittance: Complex64::new(0.0, b),
            tap_ratio,
            phase_shift: v[9].to_radians(),
        });
    }

    let name = if raw.name.is_empty() { "case".to_string() } else { raw.name };
    Network::new(name, base, buses, branches, generators)
}

/// Writes a network back out as MATPOWER case text readable by [`parse_case`].
pub fn emit_case(net: &Network) -> String {
    let base = net.base_mva;
    let mut out = String::new();
    let name = if net.name.chars().all(|c| c.is_alphanumeric() || c == '_') && !net.name.is_empty() {
        net.name.as_str()
    } else {
        "case"
    };
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {base:?};");
    let _ = writeln!(out, "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa");
    let _ = writeln!(out, "mpc.bus = [");
    for bus in &net.buses {
        let code = if bus.is_reference { 3 } else { bus.bus_type.code() };
        let load = bus.load * base;
        let shunt = bus.shunt_admittance * base;
        let _ = writeln!(
            out,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t1\t{:?}\t{:?};",
            bus.id,
            code,
            load.re,
            load.im,
            shunt.re,
            shunt.im,
            bus.voltage.norm(),
            bus.voltage.arg().to_degrees()
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus");
    let _ = writeln!(out, "mpc.gen = [");
    for g in &net.generators {
        let s = g.power * base;
        let _ = writeln!(
            out,
            "\t{}\t{:?}\t{:?}\t9999\t-9999\t{:?}\t{:?}\t{};",
            net.buses[g.bus].id,
            s.re,
            s.im,
            g.voltage_setpoint,
            base,
            u8::from(g.in_service)
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus");
    let _ = writeln!(out, "mpc.branch = [");
    for br in &net.branches {
        let z = Complex64::new(1.0, 0.0) / br.series_admittance;
        let ratio = if br.tap_ratio == 1.0 && br.phase_shift == 0.0 { 0.0 } else { br.tap_ratio };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t0\t0\t0\t{:?}\t{:?}\t1;",
            net.buses[br.from_bus].id,
            net.buses[br.to_bus].id,
            z.re,
            z.im,
            br.charging_admittance.im,
            ratio,
            br.phase_shift.to_degrees()
        );
    }
    let _ = writeln!(out, "];");
    out
}
