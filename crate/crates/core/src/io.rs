//! Field files.
//!
//! GF01 binary: magic `GFLD0001`, little-endian `u32` ndim, `ndim` little-endian
//! `u32` extents, then the cells as little-endian `f64` in row-major order.
//! CSV holds a 2-d field, one grid row per line, no header.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, ScanError};
use crate::field::GridField;

pub const GF01_MAGIC: &[u8; 8] = b"GFLD0001";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFormat {
    Gf01,
    Csv,
}

impl FieldFormat {
    /// Guesses from the extension; anything other than `.csv` is GF01.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FieldFormat::Csv,
            _ => FieldFormat::Gf01,
        }
    }
}

pub fn write_gf01<W: Write>(field: &GridField, mut w: W) -> Result<()> {
    w.write_all(GF01_MAGIC)?;
    w.write_all(&(field.ndim() as u32).to_le_bytes())?;
    for &n in field.dims() {
        let n = u32::try_from(n).map_err(|_| ScanError::Format(format!("extent {n} exceeds u32")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(field.len() * 8);
    for &x in field.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_gf01<R: Read>(mut r: R) -> Result<GridField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_gf01(&bytes)
}

fn parse_gf01(bytes: &[u8]) -> Result<GridField> {
    let short = || ScanError::Format("truncated GF01 file".into());
    if bytes.len() < 12 || &bytes[..8] != GF01_MAGIC {
        return Err(ScanError::Format("missing GF01 magic".into()));
    }
    let u32_at = |off: usize| -> Result<usize> {
        let b = bytes.get(off..off + 4).ok_or_else(short)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    };
    let d = u32_at(8)?;
    if d == 0 {
        return Err(ScanError::Format("GF01 ndim is 0".into()));
    }
    let dims = (0..d).map(|j| u32_at(12 + 4 * j)).collect::<Result<Vec<_>>>()?;
    let start = 12 + 4 * d;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| ScanError::Format("GF01 extents overflow".into()))?;
    let body = &bytes[start..];
    if body.len() != len * 8 {
        return Err(ScanError::Format(format!(
            "GF01 body has {} bytes, expected {}",
            body.len(),
            len * 8
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GridField::new(dims, data)
}

pub fn write_csv<W: Write>(field: &GridField, w: W) -> Result<()> {
    if field.ndim() != 2 {
        return Err(ScanError::Format(format!(
            "CSV holds 2-d fields only, got d = {}",
            field.ndim()
        )));
    }
    let cols = field.dims()[1];
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in field.data().chunks(cols) {
        wtr.write_record(row.iter().map(|x| format!("{x:?}")))
            .map_err(|e| ScanError::Io(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<GridField> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ScanError::Format(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(ScanError::Format(format!(
                    "CSV row {} has {} columns, expected {c}",
                    rows + 1,
                    rec.len()
                )))
            }
            _ => {}
        }
        for s in rec.iter() {
            let x: f64 = s
                .parse()
                .map_err(|_| ScanError::Format(format!("bad number '{s}' in CSV row {}", rows + 1)))?;
            data.push(x);
        }
        rows += 1;
    }
    let cols = cols.ok_or(ScanError::EmptyInput("CSV field"))?;
    GridField::new(vec![rows, cols], data)
}

/// Reads a field, detecting GF01 by its magic and falling back to CSV.
pub fn read_field(path: &Path) -> Result<GridField> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(GF01_MAGIC) {
        parse_gf01(&bytes)
    } else {
        read_csv(bytes.as_slice())
    }
}

pub fn write_field(field: &GridField, path: &Path, format: FieldFormat) -> Result<()> {
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    match format {
        FieldFormat::Gf01 => write_gf01(field, file),
        FieldFormat::Csv => write_csv(field, file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::white_noise;

    #[test]
    fn gf01_round_trip_is_exact() {
        for dims in [vec![7], vec![5, 3], vec![2, 3, 4]] {
            let f = white_noise(&dims, 3).unwrap();
            let mut buf = Vec::new();
            write_gf01(&f, &mut buf).unwrap();
            assert_eq!(buf.len(), 12 + 4 * dims.len() + 8 * f.len());
            assert_eq!(read_gf01(buf.as_slice()).unwrap(), f);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = white_noise(&[4, 6], 11).unwrap();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), f);
        let g = white_noise(&[2, 2, 2], 1).unwrap();
        assert!(write_csv(&g, Vec::new()).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_gf01(&b"NOTMAGIC\0\0\0\0"[..]), Err(ScanError::Format(_))));
        let f = white_noise(&[3, 3], 0).unwrap();
        let mut buf = Vec::new();
        write_gf01(&f, &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read_gf01(buf.as_slice()), Err(ScanError::Format(_))));
        assert!(matches!(read_csv(&b"1,2\n3\n"[..]), Err(ScanError::Format(_))));
        assert!(matches!(read_csv(&b"1,x\n"[..]), Err(ScanError::Format(_))));
        assert!(matches!(read_csv(&b"1,NaN\n"[..]), Err(ScanError::NonFinite { .. })));
        assert!(read_csv(&b""[..]).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(FieldFormat::from_path(Path::new("a.CSV")), FieldFormat::Csv);
        assert_eq!(FieldFormat::from_path(Path::new("a.gf")), FieldFormat::Gf01);
    }
}
