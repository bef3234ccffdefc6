//! Text and binary formats for signals and matrices.
//!
//! CSV files use a header row, `,` separators and LF line endings.
//! Indices are 1-based.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sensing::SensingMatrix;

/// `index,value` for real signals, `index,re,im` for complex ones.
pub fn signal_to_csv<T: Scalar>(x: &DVector<T>) -> String {
    let mut out = String::new();
    if T::IS_COMPLEX {
        out.push_str("index,re,im\n");
        for (i, v) in x.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, v.re(), v.im()));
        }
    } else {
        out.push_str("index,value\n");
        for (i, v) in x.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, v.re()));
        }
    }
    out
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse { line, msg: format!("bad number '{s}'") })
}

/// Reads a signal CSV. Missing indices are zero; the length is `n` if
/// given, otherwise the largest index present.
pub fn signal_from_csv<T: Scalar>(text: &str, n: Option<usize>) -> Result<DVector<T>> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let want = if T::IS_COMPLEX { 3 } else { 2 };
        if f.len() != want {
            return Err(Error::Parse { line: i + 1, msg: format!("expected {want} fields") });
        }
        let idx: usize = f[0].trim().parse().map_err(|_| Error::Parse { line: i + 1, msg: "bad index".into() })?;
        if idx == 0 {
            return Err(Error::Parse { line: i + 1, msg: "indices are 1-based".into() });
        }
        let re = parse_f64(f[1], i + 1)?;
        let im = if T::IS_COMPLEX { parse_f64(f[2], i + 1)? } else { 0.0 };
        entries.push((idx - 1, T::from_parts(re, im)));
    }
    let len = n.unwrap_or_else(|| entries.iter().map(|(i, _)| i + 1).max().unwrap_or(0));
    let mut x = DVector::<T>::zeros(len);
    for (i, v) in entries {
        if i >= len {
            return Err(Error::DimensionMismatch(format!("index {} exceeds length {len}", i + 1)));
        }
        x[i] = v;
    }
    Ok(x)
}

/// Row-major CSV. Complex entries take two columns (`re`, `im`).
pub fn matrix_to_csv<T: Scalar>(a: &DMatrix<T>) -> String {
    let (m, n) = a.shape();
    let header: Vec<String> = (1..=n)
        .flat_map(|j| if T::IS_COMPLEX { vec![format!("c{j}_re"), format!("c{j}_im")] } else { vec![format!("c{j}")] })
        .collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..m {
        let row: Vec<String> = (0..n)
            .flat_map(|j| {
                let v = a[(i, j)];
                if T::IS_COMPLEX {
                    vec![v.re().to_string(), v.im().to_string()]
                } else {
                    vec![v.re().to_string()]
                }
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv<T: Scalar>(text: &str) -> Result<DMatrix<T>> {
    let mut rows: Vec<Vec<T>> = Vec::new();
    let width = if T::IS_COMPLEX { 2 } else { 1 };
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals = line.split(',').map(|s| parse_f64(s, i + 1)).collect::<Result<Vec<f64>>>()?;
        if vals.len() % width != 0 {
            return Err(Error::Parse { line: i + 1, msg: "odd number of fields for a complex row".into() });
        }
        rows.push(vals.chunks(width).map(|c| T::from_parts(c[0], *c.get(1).unwrap_or(&0.0))).collect());
    }
    let n = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Parse { line: bad + 2, msg: "ragged row".into() });
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

const FLAG_COMPLEX: u64 = 1;
const FLAG_NORMALIZED: u64 = 2;

/// Binary form: three little-endian `u64` (`m`, `n`, flags) followed by the
/// entries row-major as little-endian `f64` (complex as `re, im`).
pub fn write_matrix_binary<T: Scalar, W: Write>(phi: &SensingMatrix<T>, mut w: W) -> Result<()> {
    let flags = if T::IS_COMPLEX { FLAG_COMPLEX } else { 0 } | if phi.normalized { FLAG_NORMALIZED } else { 0 };
    for v in [phi.m() as u64, phi.n() as u64, flags] {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..phi.m() {
        for j in 0..phi.n() {
            let v = phi.entries[(i, j)];
            w.write_all(&v.re().to_le_bytes())?;
            if T::IS_COMPLEX {
                w.write_all(&v.im().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_matrix_binary<T: Scalar, R: Read>(mut r: R) -> Result<SensingMatrix<T>> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let m = u64::from_le_bytes(next(&mut r)?) as usize;
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let flags = u64::from_le_bytes(next(&mut r)?);
    if (flags & FLAG_COMPLEX != 0) != T::IS_COMPLEX {
        return Err(Error::Parse { line: 0, msg: "scalar field of the file does not match".into() });
    }
    let mut entries = DMatrix::<T>::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let re = f64::from_le_bytes(next(&mut r)?);
            let im = if T::IS_COMPLEX { f64::from_le_bytes(next(&mut r)?) } else { 0.0 };
            entries[(i, j)] = T::from_parts(re, im);
        }
    }
    Ok(SensingMatrix { entries, normalized: flags & FLAG_NORMALIZED != 0 })
}

/// Loads a matrix from `.bin` (binary form) or CSV, by extension.
pub fn load_matrix<T: Scalar>(path: &std::path::Path) -> Result<SensingMatrix<T>> {
    if path.extension().is_some_and(|e| e == "bin") {
        let f = std::fs::File::open(path)?;
        read_matrix_binary(std::io::BufReader::new(f))
    } else {
        let text = std::fs::read_to_string(path)?;
        Ok(SensingMatrix::new(matrix_from_csv(&text)?))
    }
}

pub fn save_matrix<T: Scalar>(phi: &SensingMatrix<T>, path: &std::path::Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        write_matrix_binary(phi, &mut w)?;
        w.flush()?;
        Ok(())
    } else {
        std::fs::write(path, matrix_to_csv(&phi.entries))?;
        Ok(())
    }
}
