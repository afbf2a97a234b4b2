//! BART `.hdr` / `.cfl` pairs.
//!
//! The header holds the extents as ASCII on one line (after a
//! `# Dimensions` comment); the data file holds little-endian f32 pairs
//! (real, imaginary) in column-major order, i.e. the first extent varies
//! fastest.

use std::fs;
use std::path::{Path, PathBuf};

use csmri_core::{ComplexTensor, C64};
use ndarray::{ArrayD, IxDyn, ShapeBuilder};

use crate::error::{IoError, Result};

/// Largest rank BART accepts.
pub const MAX_RANK: usize = 16;

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// Header text for the given extents.
pub fn header_text(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("# Dimensions\n{}\n", dims.join(" "))
}

/// Writes `base.hdr` and `base.cfl`.
pub fn write_cfl(t: &ComplexTensor, base: impl AsRef<Path>) -> Result<()> {
    let base = base.as_ref();
    let hdr = with_ext(base, "hdr");
    let shape = t.shape();
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(IoError::CflMismatch {
            path: hdr,
            detail: format!("rank {} outside 1..={MAX_RANK}", shape.len()),
        });
    }
    fs::write(&hdr, header_text(shape)).map_err(io_err(&hdr))?;

    // reversing the axes of a row-major array walks it in column-major order
    let a = t.as_array();
    let mut bytes = Vec::with_capacity(a.len() * 8);
    for z in a.t().iter() {
        bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    let cfl = with_ext(base, "cfl");
    fs::write(&cfl, bytes).map_err(io_err(&cfl))
}

/// Parses the extents line of a header, skipping `#` comment lines.
pub fn parse_header(text: &str) -> std::result::Result<Vec<usize>, String> {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or("no dimensions line")?;
    line.split_whitespace()
        .map(|tok| tok.parse::<usize>().map_err(|_| format!("bad extent {tok:?}")))
        .collect()
}

/// Reads `base.hdr` and `base.cfl`.
pub fn read_cfl(base: impl AsRef<Path>) -> Result<ComplexTensor> {
    let base = base.as_ref();
    let hdr = with_ext(base, "hdr");
    let cfl = with_ext(base, "cfl");
    let text = fs::read_to_string(&hdr).map_err(io_err(&hdr))?;
    let shape = parse_header(&text).map_err(|detail| IoError::CflMismatch { path: hdr.clone(), detail })?;
    let bytes = fs::read(&cfl).map_err(io_err(&cfl))?;
    let n: usize = shape.iter().product();
    if bytes.len() != n * 8 {
        return Err(IoError::CflMismatch {
            path: cfl,
            detail: format!("header {shape:?} needs {} bytes, data file has {}", n * 8, bytes.len()),
        });
    }
    let samples: Vec<C64> = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            C64::new(f64::from(re), f64::from(im))
        })
        .collect();
    let fortran = ArrayD::from_shape_vec(IxDyn(&shape).f(), samples).expect("sample count checked");
    let data = fortran.as_standard_layout().into_owned();
    Ok(ComplexTensor::new(data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_format() {
        assert_eq!(header_text(&[1, 640, 368, 15]), "# Dimensions\n1 640 368 15\n");
        assert_eq!(parse_header("# Dimensions\n1 640 368 15\n").unwrap(), vec![1, 640, 368, 15]);
        assert_eq!(parse_header("3 4").unwrap(), vec![3, 4]);
        assert!(parse_header("# only a comment\n").is_err());
        assert!(parse_header("3 x").is_err());
    }
}
