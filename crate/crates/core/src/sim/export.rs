use std::io::Write;

use sha2::{Digest, Sha256};

use super::ensemble::PathEnsemble;
use crate::error::Result;

/// First 16 hex digits of the SHA-256 of a model label.
pub fn model_hash(label: &str) -> String {
    let digest = Sha256::digest(label.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Writes an ensemble as CSV preceded by `#` header lines.
///
/// Columns are `path_id,time,x0,...,x{d-1},flag` where `flag` is `pre` for
/// the left limit at a jump node and `post` otherwise. With stored paths
/// every grid node is written (the `pre` row first at jump nodes);
/// otherwise only the checkpoints. Floats use 17 significant digits.
pub fn write_columnar<W: Write>(ensemble: &PathEnsemble, out: &mut W) -> Result<()> {
    let d = ensemble.dim;
    writeln!(out, "# model_hash={}", model_hash(&ensemble.label))?;
    writeln!(out, "# seed={}", ensemble.master_seed)?;
    writeln!(out, "# d={d}")?;
    writeln!(out, "# T={:.16e}", ensemble.horizon)?;
    writeln!(out, "# dt={:.16e}", ensemble.dt)?;
    let coords: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    writeln!(out, "path_id,time,{},flag", coords.join(","))?;
    let row = |out: &mut W, i: usize, t: f64, x: &mut dyn Iterator<Item = f64>, flag: &str| -> Result<()> {
        write!(out, "{i},{t:.16e}")?;
        for v in x {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out, ",{flag}")?;
        Ok(())
    };
    match &ensemble.paths {
        Some(paths) => {
            for (i, p) in paths.iter().enumerate() {
                let mut jp = 0;
                let jn = p.grid.jump_nodes();
                for (k, (t, x)) in p.grid.nodes().iter().zip(&p.states).enumerate() {
                    if jp < jn.len() && jn[jp] == k {
                        row(out, i, *t, &mut p.pre_jump[jp].iter().copied(), "pre")?;
                        jp += 1;
                    }
                    row(out, i, *t, &mut x.iter().copied(), "post")?;
                }
            }
        }
        None => {
            for i in 0..ensemble.n_paths() {
                for (c, t) in ensemble.checkpoints.iter().enumerate() {
                    row(out, i, *t, &mut ensemble.value(i, c).iter().copied(), "post")?;
                }
            }
        }
    }
    Ok(())
}
