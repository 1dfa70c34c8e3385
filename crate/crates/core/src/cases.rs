//! Case files bundled with the library.

use crate::error::{Error, Result};
use crate::network::{parse_case, Network};

const CASES: [(&str, &str); 5] = [
    ("case2", include_str!("../cases/case2.m")),
    ("case14", include_str!("../cases/case14.m")),
    ("case30", include_str!("../cases/case30.m")),
    ("case39", include_str!("../cases/case39.m")),
    ("case57", include_str!("../cases/case57.m")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    CASES.iter().map(|(n, _)| *n)
}

pub fn builtin_text(name: &str) -> Option<&'static str> {
    CASES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn builtin(name: &str) -> Result<Network> {
    let text = builtin_text(name)
        .ok_or_else(|| Error::InvalidArgument(format!("no bundled case named `{name}`")))?;
    parse_case(text)
}

/// The two-bus system: one line y = 1/(0.01 + 0.1i), bus 2 loaded so that
/// the solved state is v = (1, 0.806 − 0.19i).
pub fn two_bus() -> Network {
    builtin("case2").expect("bundled case parses")
}
