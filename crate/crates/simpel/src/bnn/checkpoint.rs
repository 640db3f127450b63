//! Versioned binary ensemble checkpoints.
//!
//! Layout (little-endian): magic `SIMPELCK`, u32 version, architecture
//! (u32 input dim, u32 output dim, u32 hidden count, u32 widths…,
//! u8 activation), u32 L, d_y×f64 noise variances, then L flat f64
//! parameter vectors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{Activation, BnnError, MlpArchitecture, ParticleEnsemble};

const MAGIC: &[u8; 8] = b"SIMPELCK";
const VERSION: u32 = 1;

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Swish => 1,
        Activation::Linear => 2,
    }
}

fn activation_from_tag(tag: u8) -> Result<Activation, BnnError> {
    match tag {
        0 => Ok(Activation::Tanh),
        1 => Ok(Activation::Swish),
        2 => Ok(Activation::Linear),
        other => Err(BnnError::BadCheckpoint(format!(
            "unknown activation tag {other}"
        ))),
    }
}

pub fn save_ensemble(path: &Path, ensemble: &ParticleEnsemble) -> Result<(), BnnError> {
    ensemble.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let arch = &ensemble.architecture;
    w.write_all(&(arch.input_dim as u32).to_le_bytes())?;
    w.write_all(&(arch.output_dim as u32).to_le_bytes())?;
    w.write_all(&(arch.hidden.len() as u32).to_le_bytes())?;
    for h in &arch.hidden {
        w.write_all(&(*h as u32).to_le_bytes())?;
    }
    w.write_all(&[activation_tag(arch.activation)])?;
    w.write_all(&(ensemble.len() as u32).to_le_bytes())?;
    for v in &ensemble.noise_variance {
        w.write_all(&v.to_le_bytes())?;
    }
    for theta in &ensemble.particles {
        for v in theta.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_ensemble(path: &Path) -> Result<ParticleEnsemble, BnnError> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |msg: &str| BnnError::BadCheckpoint(msg.to_string());

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32, BnnError> {
        r.read_exact(&mut u32buf)
            .map_err(|_| BnnError::BadCheckpoint("truncated header".to_string()))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(BnnError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let input_dim = read_u32(&mut r)? as usize;
    let output_dim = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    if n_hidden > 64 {
        return Err(bad("implausible hidden-layer count"));
    }
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(read_u32(&mut r)? as usize);
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag).map_err(|_| bad("truncated activation"))?;
    let activation = activation_from_tag(tag[0])?;
    let l = read_u32(&mut r)? as usize;

    let architecture = MlpArchitecture {
        input_dim,
        output_dim,
        hidden,
        activation,
    };
    architecture
        .validate()
        .map_err(|e| BnnError::BadCheckpoint(format!("invalid stored architecture: {e}")))?;

    let mut f64buf = [0u8; 8];
    let mut read_f64 = |r: &mut BufReader<File>| -> Result<f64, BnnError> {
        r.read_exact(&mut f64buf)
            .map_err(|_| BnnError::BadCheckpoint("truncated body".to_string()))?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mut noise_variance = Vec::with_capacity(output_dim);
    for _ in 0..output_dim {
        noise_variance.push(read_f64(&mut r)?);
    }
    let p = architecture.param_count();
    let mut particles = Vec::with_capacity(l);
    for _ in 0..l {
        let mut theta = DVector::zeros(p);
        for i in 0..p {
            theta[i] = read_f64(&mut r)?;
        }
        particles.push(theta);
    }
    // Trailing bytes mean the file does not match its own header.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(bad("trailing bytes after parameter block"));
    }
    let ensemble = ParticleEnsemble {
        architecture,
        particles,
        noise_variance,
    };
    ensemble
        .validate()
        .map_err(|e| BnnError::BadCheckpoint(format!("invalid stored ensemble: {e}")))?;
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sample_ensemble() -> ParticleEnsemble {
        let arch = MlpArchitecture::new(2, 2, vec![4, 3], Activation::Swish).unwrap();
        let mut rng = stream(0, "ckpt", 0);
        ParticleEnsemble::init(arch, 3, vec![0.01, 0.05], &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ensemble = sample_ensemble();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.ckpt");
        save_ensemble(&path, &ensemble).unwrap();
        let back = load_ensemble(&path).unwrap();
        assert_eq!(ensemble, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(
            load_ensemble(&path),
            Err(BnnError::BadCheckpoint(_))
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let ensemble = sample_ensemble();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.ckpt");
        save_ensemble(&path, &ensemble).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            load_ensemble(&path),
            Err(BnnError::BadCheckpoint(_))
        ));
    }
}
