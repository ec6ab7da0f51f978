//! Trajectory serialization: long-format CSV and a columnar little-endian binary.
//!
//! Binary layout: magic `DGPTRAJ1`, then `u64` layer count, node count and a
//! coefficient flag, the per-layer widths, the offset column, the deviation
//! column (each layer column-major), and optionally the real and imaginary
//! coefficient columns.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ChainTrajectory, Layer, LayerStats};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DGPTRAJ1";

/// Writes `layer,node,component,value` rows with full round-trip precision.
pub fn write_csv<W: Write>(traj: &ChainTrajectory, mut out: W) -> Result<()> {
    writeln!(out, "layer,node,component,value")?;
    for (n, layer) in traj.layers.iter().enumerate() {
        let values = layer.values();
        for c in 0..values.ncols() {
            for i in 0..values.nrows() {
                writeln!(out, "{n},{i},{c},{:e}", values[(i, c)])?;
            }
        }
    }
    Ok(())
}

/// Writes per-layer statistics as `layer,norm,mean_square_spread,max_spread`.
pub fn write_stats_csv<W: Write>(stats: &[LayerStats], mut out: W) -> Result<()> {
    writeln!(out, "layer,norm,mean_square_spread,max_spread")?;
    for (n, s) in stats.iter().enumerate() {
        writeln!(out, "{n},{:e},{:e},{:e}", s.norm, s.mean_square_spread, s.max_spread)?;
    }
    Ok(())
}

fn put_u64<W: Write>(out: &mut W, v: u64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(out: &mut W, v: f64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(inp: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    inp.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(inp: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    inp.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_binary<W: Write>(traj: &ChainTrajectory, mut out: W) -> Result<()> {
    let n_nodes = traj.layers.first().map_or(0, Layer::len);
    out.write_all(MAGIC)?;
    put_u64(&mut out, traj.layers.len() as u64)?;
    put_u64(&mut out, n_nodes as u64)?;
    put_u64(&mut out, traj.coefficients.is_some() as u64)?;
    for l in &traj.layers {
        put_u64(&mut out, l.width() as u64)?;
    }
    for l in &traj.layers {
        for &v in &l.offset {
            put_f64(&mut out, v)?;
        }
    }
    for l in &traj.layers {
        for &v in l.deviation.as_slice() {
            put_f64(&mut out, v)?;
        }
    }
    if let Some(coeffs) = &traj.coefficients {
        for layer in coeffs {
            for c in layer {
                put_f64(&mut out, c.re)?;
            }
        }
        for layer in coeffs {
            for c in layer {
                put_f64(&mut out, c.im)?;
            }
        }
    }
    Ok(())
}

/// Reads a trajectory written by [`write_binary`]. Statistics are not stored
/// and come back empty.
pub fn read_binary<R: Read>(mut inp: R) -> Result<ChainTrajectory> {
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a trajectory file"));
    }
    let n_layers = get_u64(&mut inp)? as usize;
    let n_nodes = get_u64(&mut inp)? as usize;
    let has_coeffs = get_u64(&mut inp)? != 0;
    if n_layers == 0 || n_layers > 1 << 24 || n_nodes > 1 << 28 {
        return Err(Error::invalid("trajectory header out of range"));
    }
    let widths: Vec<usize> = (0..n_layers).map(|_| get_u64(&mut inp).map(|w| w as usize)).collect::<Result<_>>()?;
    let mut offsets = Vec::with_capacity(n_layers);
    for &w in &widths {
        offsets.push((0..w).map(|_| get_f64(&mut inp)).collect::<Result<Vec<_>>>()?);
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (offset, &w) in offsets.into_iter().zip(&widths) {
        let data = (0..n_nodes * w).map(|_| get_f64(&mut inp)).collect::<Result<Vec<_>>>()?;
        layers.push(Layer { offset, deviation: DMatrix::from_vec(n_nodes, w, data) });
    }
    let coefficients = if has_coeffs {
        let re: Vec<f64> = (0..n_layers * n_nodes).map(|_| get_f64(&mut inp)).collect::<Result<_>>()?;
        let im: Vec<f64> = (0..n_layers * n_nodes).map(|_| get_f64(&mut inp)).collect::<Result<_>>()?;
        Some(
            (0..n_layers)
                .map(|l| (0..n_nodes).map(|i| Complex64::new(re[l * n_nodes + i], im[l * n_nodes + i])).collect())
                .collect(),
        )
    } else {
        None
    };
    Ok(ChainTrajectory { layers, stats: Vec::new(), coefficients })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{initial_layer, run_chain, Construction, DeepChainConfig};
    use crate::fields::SpectralCovariance;
    use crate::grid::{Grid, Layout};
    use crate::kernels::IsotropicKernel;
    use crate::random::stream;

    #[test]
    fn binary_round_trip() {
        let cfgs = [
            DeepChainConfig::new(
                Construction::Composition {
                    kernel: IsotropicKernel::SquaredExponential { sigma2: 0.5, w2: 1.0 },
                    width: 2,
                    connect_input: false,
                },
                Grid::new(1, 6, Layout::Nodal).unwrap(),
                3,
                0,
            )
            .unwrap(),
            DeepChainConfig::new(
                Construction::Convolution { covariance: SpectralCovariance::brownian_bridge(4) },
                Grid::new(1, 8, Layout::Periodic).unwrap(),
                2,
                0,
            )
            .unwrap(),
        ];
        for cfg in cfgs {
            let u0 = initial_layer(&cfg, &mut stream(1, 0)).unwrap();
            let t = run_chain(&cfg, &u0, &mut stream(1, 1)).unwrap();
            let mut buf = Vec::new();
            write_binary(&t, &mut buf).unwrap();
            let back = read_binary(buf.as_slice()).unwrap();
            assert_eq!(back.layers, t.layers);
            assert_eq!(back.coefficients, t.coefficients);
        }
        assert!(read_binary(&b"NOTATRAJ"[..]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_value() {
        let layer = Layer::scalar(nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let t = ChainTrajectory { layers: vec![layer.clone(), layer], stats: vec![], coefficients: None };
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 5);
        assert!(s.contains("1,1,0,2e0"));
    }
}
