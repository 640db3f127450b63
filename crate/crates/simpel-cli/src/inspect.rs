//! `inspect`: print an ensemble checkpoint.

use std::path::Path;

use simpel::bnn::load_ensemble;

use crate::Failure;

pub fn run(path: &Path) -> Result<(), Failure> {
    let ensemble = load_ensemble(path).map_err(Failure::from)?;
    let arch = &ensemble.architecture;
    println!("checkpoint: {}", path.display());
    println!(
        "architecture: {} -> {:?} -> {} ({:?})",
        arch.input_dim, arch.hidden, arch.output_dim, arch.activation
    );
    println!("parameters per particle: {}", arch.param_count());
    println!("particles: {}", ensemble.len());
    println!("noise variance: {:?}", ensemble.noise_variance);
    for (i, theta) in ensemble.particles.iter().enumerate() {
        println!("  particle {i}: |theta| = {:.6}", theta.norm());
    }
    Ok(())
}
