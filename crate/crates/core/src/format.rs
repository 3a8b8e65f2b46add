//! On-disk formats.
//!
//! A matrix file is a 24-byte header followed by the payload:
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `RAGG`                       |
//! | 4      | 2    | version, u16 little-endian, `1`    |
//! | 6      | 2    | flags, u16 little-endian, `0`      |
//! | 8      | 8    | `n`, u64 little-endian             |
//! | 16     | 8    | `d`, u64 little-endian             |
//! | 24     | 8nd  | f64 little-endian values, row-major |
//!
//! Result tables are CSV with a header row; floating-point fields are written in
//! scientific notation with 17 significant digits so they parse back exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::SampleSet;

pub const MAGIC: &[u8; 4] = b"RAGG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

/// Serializes a sample set as a matrix file.
pub fn encode_matrix(x: &SampleSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * x.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(x.n() as u64).to_le_bytes());
    out.extend_from_slice(&(x.d() as u64).to_le_bytes());
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("slice has eight bytes"))
}

/// Parses a matrix file, rejecting bad headers, wrong lengths and non-finite
/// values.
pub fn decode_matrix(bytes: &[u8]) -> Result<SampleSet> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file has {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if flags != 0 {
        return Err(Error::Format(format!("unsupported flags {flags:#06x}")));
    }
    let (n, d) = (read_u64(bytes, 8), read_u64(bytes, 16));
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(8))
        .and_then(|p| p.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    if bytes.len() as u64 != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes for n={n}, d={d}, found {}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk has eight bytes")))
        .collect();
    SampleSet::new(n as usize, d as usize, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_matrix(path: &Path, x: &SampleSet) -> Result<()> {
    fs::write(path, encode_matrix(x))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<SampleSet> {
    decode_matrix(&fs::read(path)?)
}

/// Formats a float with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl ResultTable {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        Error::check_dim(self.header.len(), row.len())?;
        self.rows.push(row.iter().map(Cell::render).collect());
        Ok(())
    }

    pub fn header(&self) -> &[&'static str] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }
}
