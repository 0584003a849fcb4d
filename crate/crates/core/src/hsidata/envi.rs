use std::collections::HashMap;
use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use super::HsiCube;
use crate::error::{Error, Result};

/// The subset of an ENVI header this crate understands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnviHeader {
    /// Columns.
    pub samples: usize,
    /// Rows.
    pub lines: usize,
    pub bands: usize,
    /// 4 = float32, 5 = float64.
    pub data_type: u32,
    pub header_offset: usize,
}

impl EnviHeader {
    fn bytes_per_value(&self) -> usize {
        if self.data_type == 4 {
            4
        } else {
            8
        }
    }
}

/// Splits `key = value` lines; `{ ... }` values may span lines.
fn parse_pairs(text: &str) -> Result<HashMap<String, String>> {
    let mut pairs = HashMap::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() || line.eq_ignore_ascii_case("envi") || line.starts_with(';') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::format(format!("header line without '=': {line}")));
        };
        let mut value = value.trim().to_string();
        if value.starts_with('{') {
            while !value.contains('}') {
                let next = lines
                    .next()
                    .ok_or_else(|| Error::format(format!("unterminated '{{' in key '{}'", key.trim())))?;
                value.push(' ');
                value.push_str(next.trim());
            }
        }
        pairs.insert(key.trim().to_ascii_lowercase(), value);
    }
    Ok(pairs)
}

fn required<'a>(pairs: &'a HashMap<String, String>, key: &str) -> Result<&'a str> {
    pairs
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::format(format!("header is missing '{key}'")))
}

fn parse_count(pairs: &HashMap<String, String>, key: &str) -> Result<usize> {
    let v = required(pairs, key)?;
    v.parse::<usize>()
        .map_err(|_| Error::format(format!("'{key}' is not a count: {v}")))
}

pub fn parse_header(text: &str) -> Result<EnviHeader> {
    let pairs = parse_pairs(text)?;
    let samples = parse_count(&pairs, "samples")?;
    let lines = parse_count(&pairs, "lines")?;
    let bands = parse_count(&pairs, "bands")?;
    if samples == 0 || lines == 0 || bands == 0 {
        return Err(Error::format("'samples', 'lines' and 'bands' must be positive"));
    }
    let interleave = required(&pairs, "interleave")?;
    if !interleave.eq_ignore_ascii_case("bsq") {
        return Err(Error::format(format!(
            "'interleave' = {interleave} is unsupported (only bsq)"
        )));
    }
    let data_type = parse_count(&pairs, "data type")? as u32;
    if data_type != 4 && data_type != 5 {
        return Err(Error::format(format!(
            "'data type' = {data_type} is unsupported (4 or 5)"
        )));
    }
    let byte_order = parse_count(&pairs, "byte order")?;
    if byte_order != 0 {
        return Err(Error::format(format!(
            "'byte order' = {byte_order} is unsupported (0, little-endian)"
        )));
    }
    let header_offset = match pairs.get("header offset") {
        Some(_) => parse_count(&pairs, "header offset")?,
        None => 0,
    };
    Ok(EnviHeader {
        samples,
        lines,
        bands,
        data_type,
        header_offset,
    })
}

/// Reads a band-sequential float32/float64 ENVI cube.
pub fn read_envi(header_path: impl AsRef<Path>, data_path: impl AsRef<Path>) -> Result<HsiCube> {
    let header = parse_header(&fs::read_to_string(header_path)?)?;
    let raw = fs::read(data_path)?;
    let count = header.samples * header.lines * header.bands;
    let expected = header.header_offset + count * header.bytes_per_value();
    if raw.len() != expected {
        return Err(Error::format(format!(
            "data file has {} bytes, header ('samples', 'lines', 'bands', 'data type') implies {expected}",
            raw.len()
        )));
    }
    let body = &raw[header.header_offset..];
    let values = if header.data_type == 4 {
        let mut v = vec![0f32; count];
        LittleEndian::read_f32_into(body, &mut v);
        v.into_iter().map(f64::from).collect()
    } else {
        let mut v = vec![0f64; count];
        LittleEndian::read_f64_into(body, &mut v);
        v
    };
    HsiCube::new(header.lines, header.samples, header.bands, values)
}

/// Writes `cube` as a float64 BSQ ENVI pair.
pub fn write_envi(
    cube: &HsiCube,
    header_path: impl AsRef<Path>,
    data_path: impl AsRef<Path>,
) -> Result<()> {
    let header = format!(
        "ENVI\nsamples = {}\nlines = {}\nbands = {}\nheader offset = 0\nfile type = ENVI Standard\ndata type = 5\ninterleave = bsq\nbyte order = 0\n",
        cube.cols, cube.rows, cube.bands
    );
    fs::write(header_path, header)?;
    let mut buf = Vec::with_capacity(cube.values.len() * 8);
    for &v in &cube.values {
        buf.write_f64::<LittleEndian>(v)?;
    }
    fs::write(data_path, buf)?;
    Ok(())
}
