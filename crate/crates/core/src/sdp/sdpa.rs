//! SDPA sparse format: export and import.
//!
//! Layout: optional comment lines starting with `"` or `*`, then the number
//! of variables m, the number of blocks, the block sizes, the objective
//! vector, and one `matno block row col value` line per upper-triangle
//! nonzero (one-based, matno 0 is F_0).

use std::fmt::Write;

use super::moment::{SdpEntry, SdpProblem};
use crate::error::{Error, Result};

const CONSTANT_TAG: &str = "* objective constant ";

/// Renders `sdp` with entries sorted by (matno, block, row, col). Floats
/// use the shortest representation that parses back to the same value.
pub fn export_sdpa(sdp: &SdpProblem) -> String {
    let mut out = String::new();
    out.push_str("* gridstate moment relaxation\n");
    if sdp.moments.is_some() {
        let _ = writeln!(out, "* order {}", sdp.order);
    }
    if sdp.constant != 0.0 {
        let _ = writeln!(out, "{CONSTANT_TAG}{:e}", sdp.constant);
    }
    let _ = writeln!(out, "{}", sdp.n_vars());
    let _ = writeln!(out, "{}", sdp.block_sizes.len());
    let sizes: Vec<String> = sdp.block_sizes.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let c: Vec<String> = sdp.c.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(out, "{}", c.join(" "));
    for (k, mat) in sdp.mats.iter().enumerate() {
        let mut sorted = mat.clone();
        sorted.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        for (b, r, c, v) in sorted {
            let _ = writeln!(out, "{k} {} {} {} {v:e}", b + 1, r + 1, c + 1);
        }
    }
    out
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format { source_name: "sdpa", line, msg: msg.into() }
}

/// Tokens of one line with the SDPA punctuation `{ } ( ) ,` treated as
/// whitespace.
fn tokens(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || "{}(),".contains(c)).filter(|t| !t.is_empty()).collect()
}

/// Parses SDPA sparse text. The moment basis is not part of the format, so
/// the result has none.
pub fn parse_sdpa(text: &str) -> Result<SdpProblem> {
    let mut constant = 0.0;
    let mut body: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut in_header = true;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if in_header && (line.starts_with('"') || line.starts_with('*')) {
            if let Some(v) = line.strip_prefix(CONSTANT_TAG.trim_end()) {
                constant = v.trim().parse().map_err(|_| err(i + 1, "bad objective constant"))?;
            }
            continue;
        }
        in_header = false;
        let t = tokens(line);
        if !t.is_empty() {
            body.push((i + 1, t));
        }
    }

    // Header lines: m, block count, block sizes, then c (which may span
    // lines). Trailing non-numeric text such as `=mDIM` is ignored.
    let mut lines = body.iter();
    let mut header_line = |what: &str| -> Result<(usize, Vec<&str>)> {
        let (l, t) = lines.next().ok_or_else(|| err(0, format!("missing {what}")))?;
        let numeric: Vec<&str> = t.iter().copied().take_while(|s| s.parse::<f64>().is_ok()).collect();
        if numeric.is_empty() {
            return Err(err(*l, format!("expected {what}, found `{}`", t[0])));
        }
        Ok((*l, numeric))
    };
    let int = |l: usize, s: &str, what: &str| -> Result<i64> {
        s.parse().map_err(|_| err(l, format!("expected integer {what}, found `{s}`")))
    };
    let (l, t) = header_line("variable count")?;
    let m = int(l, t[0], "variable count")?;
    if m < 0 {
        return Err(err(l, "negative variable count"));
    }
    let m = m as usize;
    let (l, t) = header_line("block count")?;
    let nb = int(l, t[0], "block count")?;
    if nb <= 0 {
        return Err(err(l, "block count must be positive"));
    }
    let (l, t) = header_line("block sizes")?;
    if t.len() < nb as usize {
        return Err(err(l, format!("expected {nb} block sizes, found {}", t.len())));
    }
    let mut block_sizes = Vec::new();
    for s in &t[..nb as usize] {
        let s = int(l, s, "block size")?;
        if s == 0 {
            return Err(err(l, "zero block size"));
        }
        // Negative sizes mark diagonal blocks; they are stored densely.
        block_sizes.push(s.unsigned_abs() as usize);
    }
    let mut c = Vec::new();
    while c.len() < m {
        let (l, t) = header_line("objective vector")?;
        for s in t {
            if c.len() == m {
                return Err(err(l, "objective vector has extra values"));
            }
            c.push(parse_f64(s, l)?);
        }
    }

    let mut mats: Vec<Vec<SdpEntry>> = vec![Vec::new(); m + 1];
    for (l, t) in lines {
        if t.len() != 5 {
            return Err(err(*l, format!("expected 5 fields, found {}", t.len())));
        }
        let k: usize = t[0].parse().map_err(|_| err(*l, "bad matrix number"))?;
        let b: usize = t[1].parse().map_err(|_| err(*l, "bad block number"))?;
        let r: usize = t[2].parse().map_err(|_| err(*l, "bad row"))?;
        let cc: usize = t[3].parse().map_err(|_| err(*l, "bad column"))?;
        let v = parse_f64(t[4], *l)?;
        if k > m {
            return Err(err(*l, format!("matrix {k} exceeds m = {m}")));
        }
        if b == 0 || b > block_sizes.len() {
            return Err(err(*l, format!("block {b} out of range")));
        }
        let size = block_sizes[b - 1];
        if r == 0 || cc == 0 || r > size || cc > size {
            return Err(err(*l, format!("entry ({r}, {cc}) outside block of size {size}")));
        }
        let (r, cc) = if r <= cc { (r, cc) } else { (cc, r) };
        mats[k].push((b - 1, r - 1, cc - 1, v));
    }
    for mat in &mut mats {
        mat.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        let before = mat.len();
        mat.dedup_by(|a, b| (a.0, a.1, a.2) == (b.0, b.1, b.2));
        if mat.len() != before {
            return Err(err(0, "duplicate matrix entry"));
        }
    }
    Ok(SdpProblem { constant, c, block_sizes, mats, moments: None, order: 0 })
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| err(line, format!("bad number `{s}`")))?;
    if !v.is_finite() {
        return Err(err(line, format!("non-finite value `{s}`")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::moment::{build_moment_sdp, PopProblem};
    use crate::sdp::poly::Poly;

    fn square() -> SdpProblem {
        let x = Poly::var(1, 0);
        let pop = PopProblem { n_vars: 1, objective: x.mul(&x), constraints: vec![] };
        build_moment_sdp(&pop, 1, 1e-6).unwrap()
    }

    #[test]
    fn golden_trivial() {
        let text = export_sdpa(&square());
        let golden = "* gridstate moment relaxation\n* order 1\n2\n1\n2\n0e0 1e0\n0 1 1 1 -1e0\n1 1 1 2 1e0\n2 1 2 2 1e0\n";
        assert_eq!(text, golden);
    }

    #[test]
    fn round_trip() {
        let mut sdp = square();
        sdp.constant = 0.25;
        let back = parse_sdpa(&export_sdpa(&sdp)).unwrap();
        assert_eq!(back.mats, sdp.mats);
        assert_eq!(back.c, sdp.c);
        assert_eq!(back.block_sizes, sdp.block_sizes);
        assert_eq!(back.constant, 0.25);
    }

    #[test]
    fn punctuation_and_errors() {
        let text = "\"comment\n1 =mdim\n1 =nblock\n{2}\n{1.0}\n0 1 1 1 -1\n1 1 1 2 0.5\n";
        assert_eq!(parse_sdpa(text).unwrap().c, vec![1.0]);
        let text = "1\n1\n{2}\n{1.0}\n0 1 1 1 -1\n1 1 2 1 0.5\n";
        let sdp = parse_sdpa(text).unwrap();
        assert_eq!(sdp.mats[1], vec![(0, 0, 1, 0.5)]);
        assert!(parse_sdpa("1\n1\n2\n1\n0 1 3 1 1\n").is_err());
        assert!(parse_sdpa("1\n1\n2\n1\n0 1 1 1\n").is_err());
        assert!(parse_sdpa("").is_err());
    }
}
