use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::LabelRaster;
use crate::error::{Error, Result};

/// Reads a label raster from a binary PGM (`P5`) or a CSV integer grid.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelRaster> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        parse_pgm(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::format("label file is neither PGM nor UTF-8 CSV"))?;
        parse_csv(text)
    }
}

pub fn parse_csv(text: &str) -> Result<LabelRaster> {
    let mut labels = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = labels.len();
        for cell in line.split(',') {
            let cell = cell.trim();
            let v = cell.parse::<u32>().map_err(|_| {
                Error::format(format!("line {}: '{cell}' is not a non-negative integer", i + 1))
            })?;
            labels.push(v);
        }
        let width = labels.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::format(format!(
                    "line {} has {width} cells, expected {c}",
                    i + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::format("empty label file"))?;
    LabelRaster::new(rows, cols, labels)
}

fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("truncated PGM header"));
    }
    Ok(&bytes[start..*pos])
}

fn pgm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = pgm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(format!("bad PGM {what}")))
}

pub fn parse_pgm(bytes: &[u8]) -> Result<LabelRaster> {
    let mut pos = 0;
    if pgm_token(bytes, &mut pos)? != b"P5" {
        return Err(Error::format("not a binary PGM (P5)"));
    }
    let cols = pgm_number(bytes, &mut pos, "width")?;
    let rows = pgm_number(bytes, &mut pos, "height")?;
    let maxval = pgm_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let width = if maxval < 256 { 1 } else { 2 };
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != rows * cols * width {
        return Err(Error::format(format!(
            "PGM raster has {} bytes, expected {}",
            data.len(),
            rows * cols * width
        )));
    }
    let labels = if width == 1 {
        data.iter().map(|&b| b as u32).collect()
    } else {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect()
    };
    LabelRaster::new(rows, cols, labels)
}

/// CSV grid, one raster row per line.
pub fn write_labels_csv(raster: &LabelRaster, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    for r in 0..raster.rows {
        for c in 0..raster.cols {
            if c > 0 {
                s.push(',');
            }
            write!(s, "{}", raster.get(r, c)).unwrap();
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_fixture() {
        let r = parse_csv("0,1\n2,0").unwrap();
        assert_eq!((r.rows, r.cols), (2, 2));
        assert_eq!(r.labels.iter().filter(|&&l| l > 0).count(), 2);
        assert_eq!(r.get(1, 0), 2);
        assert!(matches!(parse_csv("0,1.5\n2,0"), Err(Error::Format(_))));
        assert!(parse_csv("0,1\n2").is_err());
    }

    #[test]
    fn pgm_8_and_16_bit() {
        let mut p = b"P5\n# labels\n3 1\n255\n".to_vec();
        p.extend_from_slice(&[0, 4, 9]);
        let r = parse_pgm(&p).unwrap();
        assert_eq!(r.labels, vec![0, 4, 9]);

        let mut p = b"P5 2 1 65535\n".to_vec();
        p.extend_from_slice(&[0x01, 0x02, 0x00, 0x07]);
        let r = parse_pgm(&p).unwrap();
        assert_eq!(r.labels, vec![258, 7]);

        let mut p = b"P5 2 2 255\n".to_vec();
        p.push(1);
        assert!(parse_pgm(&p).is_err());
    }

    #[test]
    fn csv_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let r = LabelRaster::new(2, 3, vec![0, 1, 1, 2, 0, 3]).unwrap();
        write_labels_csv(&r, &path).unwrap();
        assert_eq!(read_labels(&path).unwrap(), r);
    }
}
