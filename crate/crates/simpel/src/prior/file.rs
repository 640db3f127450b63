//! Binary export of prior sample matrices for estimator benchmarking.
//!
//! Layout (all integers and floats little-endian):
//!   magic `SIMPRIO1` (8 bytes), then u64 N, k, d_y, d_x,
//!   the measurement set X (k·d_x f64, row-major),
//!   then d_y blocks of N·k f64, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{PriorError, PriorSampleMatrix};

const MAGIC: &[u8; 8] = b"SIMPRIO1";

pub fn write_prior_matrix(path: &Path, matrix: &PriorSampleMatrix) -> Result<(), PriorError> {
    matrix.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let n = matrix.n_samples() as u64;
    let k = matrix.measurement_size() as u64;
    let d_y = matrix.output_dim() as u64;
    let d_x = matrix.measurement_set.ncols() as u64;
    for v in [n, k, d_y, d_x] {
        w.write_all(&v.to_le_bytes())?;
    }
    for r in 0..matrix.measurement_set.nrows() {
        for c in 0..matrix.measurement_set.ncols() {
            w.write_all(&matrix.measurement_set[(r, c)].to_le_bytes())?;
        }
    }
    for m in &matrix.per_dim {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                w.write_all(&m[(r, c)].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_prior_matrix(path: &Path) -> Result<PriorSampleMatrix, PriorError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| PriorError::BadFile("truncated header".to_string()))?;
    if &magic != MAGIC {
        return Err(PriorError::BadFile("bad magic".to_string()));
    }
    let mut read_u64 = || -> Result<u64, PriorError> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)
            .map_err(|_| PriorError::BadFile("truncated header".to_string()))?;
        Ok(u64::from_le_bytes(buf))
    };
    let n = read_u64()? as usize;
    let k = read_u64()? as usize;
    let d_y = read_u64()? as usize;
    let d_x = read_u64()? as usize;
    if n < 2 || k < 1 || d_y < 1 || d_x < 1 || n * k * d_y > 1 << 32 {
        return Err(PriorError::BadFile("implausible header sizes".to_string()));
    }

    let mut read_matrix = |rows: usize, cols: usize| -> Result<DMatrix<f64>, PriorError> {
        let mut buf = vec![0u8; rows * cols * 8];
        r.read_exact(&mut buf)
            .map_err(|_| PriorError::BadFile("truncated body".to_string()))?;
        let mut m = DMatrix::zeros(rows, cols);
        for row in 0..rows {
            for col in 0..cols {
                let off = (row * cols + col) * 8;
                m[(row, col)] = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
            }
        }
        Ok(m)
    };

    let measurement_set = read_matrix(k, d_x)?;
    let per_dim = (0..d_y)
        .map(|_| read_matrix(n, k))
        .collect::<Result<Vec<_>, _>>()?;
    let out = PriorSampleMatrix {
        measurement_set,
        per_dim,
    };
    out.validate()?;
    Ok(out)
}
