//! File formats: Hamiltonian JSON and canonical JSON output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::error::{Error, Result};
use crate::linalg;
use crate::Hamiltonian;

/// `{"dim": 2n, "A": [[...], ...], "c": real}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianFile {
    pub dim: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub c: f64,
}

impl HamiltonianFile {
    pub fn to_hamiltonian(&self) -> Result<Hamiltonian> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(Error::OddDimension(self.dim));
        }
        if self.a.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: self.a.len() });
        }
        if let Some(row) = self.a.iter().find(|r| r.len() != self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, found: row.len() });
        }
        let a = linalg::from_rows(&self.a).ok_or(Error::Invalid("ragged matrix".into()))?;
        Hamiltonian::new(a, self.c)
    }
}

impl From<&Hamiltonian> for HamiltonianFile {
    fn from(h: &Hamiltonian) -> Self {
        HamiltonianFile { dim: h.dim(), a: linalg::to_rows(h.matrix()), c: h.constant() }
    }
}

pub fn parse_hamiltonian(text: &str) -> Result<Hamiltonian> {
    serde_json::from_str::<HamiltonianFile>(text)?.to_hamiltonian()
}

pub fn read_hamiltonian(path: impl AsRef<Path>) -> Result<Hamiltonian> {
    parse_hamiltonian(&std::fs::read_to_string(path)?)
}

pub fn hamiltonian_json(h: &Hamiltonian) -> String {
    to_canonical_json(&HamiltonianFile::from(h)).expect("plain data serializes")
}

/// Prints every float with 17 significant digits, which round-trips exactly.
#[derive(Clone, Copy, Debug, Default)]
pub struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Compact JSON in field order with canonical floats; non-finite floats become `null`.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}
