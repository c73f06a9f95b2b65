//! Checkpoint format: a text tensor list with a layer-shape header. Values
//! are written as raw bit patterns, so save/load round-trips bit-exactly.

use super::{DenseNetwork, NnError, OutputActivation};
use crate::scalar::Real;
use ndarray::{Array1, Array2};
use std::fmt::Write as _;
use std::path::Path;

/// Serialises a network to the checkpoint text format.
pub fn network_to_string<F: Real>(net: &DenseNetwork<F>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "densenet v1");
    let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "sizes {}", sizes.join(" "));
    match net.output_activation() {
        OutputActivation::Identity => {
            let _ = writeln!(out, "output identity");
        }
        OutputActivation::Bounded { lo, hi } => {
            let _ = writeln!(out, "output bounded {} {}", lo.encode_bits(), hi.encode_bits());
        }
    }
    for l in 0..net.n_layers() {
        let w: Vec<String> = net.weights()[l].iter().map(|v| v.encode_bits()).collect();
        let _ = writeln!(out, "w{l} {}", w.join(" "));
        let b: Vec<String> = net.biases()[l].iter().map(|v| v.encode_bits()).collect();
        let _ = writeln!(out, "b{l} {}", b.join(" "));
    }
    out
}

/// Parses the checkpoint text format back into a network.
pub fn network_from_string<F: Real>(text: &str) -> Result<DenseNetwork<F>, NnError> {
    let bad = |msg: &str| NnError::Checkpoint(msg.to_string());
    let mut lines = text.lines();
    if lines.next() != Some("densenet v1") {
        return Err(bad("missing header"));
    }
    let sizes_line = lines.next().ok_or_else(|| bad("missing sizes"))?;
    let sizes: Vec<usize> = sizes_line
        .strip_prefix("sizes ")
        .ok_or_else(|| bad("malformed sizes"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad size token")))
        .collect::<Result<_, _>>()?;
    if sizes.len() < 2 {
        return Err(bad("need at least two sizes"));
    }

    let output_line = lines.next().ok_or_else(|| bad("missing output"))?;
    let output = if output_line == "output identity" {
        OutputActivation::Identity
    } else if let Some(rest) = output_line.strip_prefix("output bounded ") {
        let mut it = rest.split_whitespace();
        let lo = it
            .next()
            .and_then(F::decode_bits)
            .ok_or_else(|| bad("bad lower bound"))?;
        let hi = it
            .next()
            .and_then(F::decode_bits)
            .ok_or_else(|| bad("bad upper bound"))?;
        OutputActivation::Bounded { lo, hi }
    } else {
        return Err(bad("unknown output activation"));
    };

    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..sizes.len() - 1 {
        let (rows, cols) = (sizes[l], sizes[l + 1]);
        let wline = lines.next().ok_or_else(|| bad("missing weight line"))?;
        let wvals: Vec<F> = wline
            .strip_prefix(&format!("w{l} "))
            .or_else(|| if wline == format!("w{l}") { Some("") } else { None })
            .ok_or_else(|| bad("malformed weight line"))?
            .split_whitespace()
            .map(|t| F::decode_bits(t).ok_or_else(|| bad("bad weight token")))
            .collect::<Result<_, _>>()?;
        if wvals.len() != rows * cols {
            return Err(bad("weight count mismatch"));
        }
        weights.push(Array2::from_shape_vec((rows, cols), wvals).expect("checked shape"));

        let bline = lines.next().ok_or_else(|| bad("missing bias line"))?;
        let bvals: Vec<F> = bline
            .strip_prefix(&format!("b{l} "))
            .or_else(|| if bline == format!("b{l}") { Some("") } else { None })
            .ok_or_else(|| bad("malformed bias line"))?
            .split_whitespace()
            .map(|t| F::decode_bits(t).ok_or_else(|| bad("bad bias token")))
            .collect::<Result<_, _>>()?;
        if bvals.len() != cols {
            return Err(bad("bias count mismatch"));
        }
        biases.push(Array1::from_vec(bvals));
    }
    Ok(DenseNetwork::from_parameters(weights, biases, output))
}

/// Writes a checkpoint file.
pub fn save_network<F: Real>(net: &DenseNetwork<F>, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, network_to_string(net))
        .map_err(|e| NnError::Checkpoint(format!("write {}: {e}", path.display())))
}

/// Reads a checkpoint file.
pub fn load_network<F: Real>(path: &Path) -> Result<DenseNetwork<F>, NnError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NnError::Checkpoint(format!("read {}: {e}", path.display())))?;
    network_from_string(&text)
}
