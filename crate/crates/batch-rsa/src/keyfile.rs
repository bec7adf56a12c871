//! Line-oriented key file: one `name=hex` pair per line, lowercase hex,
//! `#` comments ignored. Keys `n, p, q, phi` followed by `e<i>`/`d<i>` per
//! slot. Deliberately hand-editable so tests can build fixtures.

use num_bigint::BigUint;
use num_traits::Num;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rsa::KeyPair;

pub fn to_string(key: &KeyPair) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# batch-rsa key file");
    let _ = writeln!(out, "n={}", key.n.to_str_radix(16));
    let _ = writeln!(out, "p={}", key.p.to_str_radix(16));
    let _ = writeln!(out, "q={}", key.q.to_str_radix(16));
    let _ = writeln!(out, "phi={}", key.phi.to_str_radix(16));
    for (i, slot) in key.slots.iter().enumerate() {
        let _ = writeln!(out, "e{}={}", i + 1, slot.e.to_str_radix(16));
        let _ = writeln!(out, "d{}={}", i + 1, slot.d.to_str_radix(16));
    }
    out
}

pub fn parse(text: &str) -> Result<KeyPair> {
    let mut fields: BTreeMap<String, BigUint> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, hex) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected name=hex", lineno + 1)))?;
        let value = BigUint::from_str_radix(hex.trim(), 16)
            .map_err(|_| Error::Parse(format!("line {}: bad hex value", lineno + 1)))?;
        if fields.insert(name.trim().to_string(), value).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate key {name}", lineno + 1)));
        }
    }
    let take = |name: &str| -> Result<BigUint> {
        fields
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Parse(format!("missing field {name}")))
    };
    let p = take("p")?;
    let q = take("q")?;
    let n = take("n")?;
    let phi = take("phi")?;
    let mut exponents = Vec::new();
    for i in 1.. {
        match fields.get(&format!("e{i}")) {
            Some(e) => exponents.push(e.clone()),
            None => break,
        }
    }
    if exponents.is_empty() {
        return Err(Error::Parse("key file has no exponent slots".into()));
    }
    let key = KeyPair::from_parts(p, q, &exponents)?;
    if key.n != n {
        return Err(Error::Parse("n does not equal p*q".into()));
    }
    if key.phi != phi {
        return Err(Error::Parse("phi does not equal (p-1)(q-1)".into()));
    }
    // Stored private exponents, when present, must match the derived ones.
    for (i, slot) in key.slots.iter().enumerate() {
        if let Some(d) = fields.get(&format!("d{}", i + 1)) {
            if d != &slot.d {
                return Err(Error::Parse(format!("d{} inconsistent with e{} and phi", i + 1, i + 1)));
            }
        }
    }
    Ok(key)
}

pub fn write(path: &Path, key: &KeyPair) -> Result<()> {
    std::fs::write(path, to_string(key))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<KeyPair> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}
