//! Binary network checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   "PBVNET"            6 bytes
//! version u16                 currently 1
//! layers  u32
//! per layer:
//!   inputs u32, outputs u32, activation tag u8, leaky slope f64, dropout f64
//! per layer, in order:
//!   weights  outputs*inputs f64, row-major
//!   bias     outputs f64
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::layer::{Activation, DenseLayer, Network};
use super::NeuralError;

pub const NETWORK_MAGIC: &[u8; 6] = b"PBVNET";
pub const NETWORK_FORMAT_VERSION: u16 = 1;

fn activation_tag(a: Activation) -> (u8, f64) {
    match a {
        Activation::Relu => (0, 0.0),
        Activation::LeakyRelu(alpha) => (1, alpha),
        Activation::Sigmoid => (2, 0.0),
        Activation::Softmax => (3, 0.0),
        Activation::Linear => (4, 0.0),
    }
}

fn activation_from_tag(tag: u8, alpha: f64) -> Result<Activation, NeuralError> {
    Ok(match tag {
        0 => Activation::Relu,
        1 => Activation::LeakyRelu(alpha),
        2 => Activation::Sigmoid,
        3 => Activation::Softmax,
        4 => Activation::Linear,
        other => return Err(NeuralError::Checkpoint(format!("unknown activation tag {other}"))),
    })
}

pub fn write_network<W: Write>(net: &Network, out: &mut W) -> Result<(), NeuralError> {
    out.write_all(NETWORK_MAGIC)?;
    out.write_all(&NETWORK_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for layer in &net.layers {
        let (tag, alpha) = activation_tag(layer.activation);
        out.write_all(&(layer.inputs() as u32).to_le_bytes())?;
        out.write_all(&(layer.outputs() as u32).to_le_bytes())?;
        out.write_all(&[tag])?;
        out.write_all(&alpha.to_le_bytes())?;
        out.write_all(&layer.dropout.to_le_bytes())?;
    }
    for layer in &net.layers {
        for v in layer.weights.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in layer.bias.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn network_to_bytes(net: &Network) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + net.parameter_count() * 8);
    write_network(net, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub(crate) fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N], NeuralError> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| NeuralError::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32, NeuralError> {
    Ok(u32::from_le_bytes(read_array(input)?))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64, NeuralError> {
    Ok(f64::from_le_bytes(read_array(input)?))
}

pub fn read_network<R: Read>(input: &mut R) -> Result<Network, NeuralError> {
    let magic: [u8; 6] = read_array(input)?;
    if &magic != NETWORK_MAGIC {
        return Err(NeuralError::Checkpoint("not a network checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(read_array(input)?);
    if version != NETWORK_FORMAT_VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(input)? as usize;
    if count == 0 || count > 4096 {
        return Err(NeuralError::Checkpoint(format!("implausible layer count {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let inputs = read_u32(input)? as usize;
        let outputs = read_u32(input)? as usize;
        let [tag] = read_array::<1, _>(input)?;
        let alpha = read_f64(input)?;
        let dropout = read_f64(input)?;
        shapes.push((inputs, outputs, activation_from_tag(tag, alpha)?, dropout));
    }
    let mut layers = Vec::with_capacity(count);
    for (inputs, outputs, activation, dropout) in shapes {
        let mut weights = Vec::with_capacity(inputs * outputs);
        for _ in 0..inputs * outputs {
            weights.push(read_f64(input)?);
        }
        let mut bias = Vec::with_capacity(outputs);
        for _ in 0..outputs {
            bias.push(read_f64(input)?);
        }
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((outputs, inputs), weights).map_err(|e| NeuralError::Checkpoint(e.to_string()))?,
            bias: Array1::from(bias),
            activation,
            dropout,
        });
    }
    Network::from_layers(layers)
}
