//! Checkpoints: one GSV1 frame per parameter tensor, the first frame's
//! header carrying the network spec and input dims under `"meta"`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_frame, write_frame_with_meta};
use crate::network::{build_network, Network, NetworkSpec};
use crate::scalar::Scalar;
use crate::tensor::{Shape5, VolumeTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub input_dims: [usize; 5],
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, net: &Network<T>) -> Result<()> {
    let meta = serde_json::to_value(Checkpoint { spec: net.spec().clone(), input_dims: net.input_dims().to_array() })?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (i, (name, p)) in net.parameters().into_iter().enumerate() {
        let v = VolumeTensor::from_vec(Shape5::new(1, 1, 1, 1, p.len())?, p.to_vec())?;
        write_frame_with_meta(&mut f, &v, Some(&name), (i == 0).then(|| meta.clone()))?;
    }
    f.flush()?;
    Ok(())
}

/// Rebuilds the network stored at `path`. When `expected` is given the
/// stored spec must equal it.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>, expected: Option<&NetworkSpec>) -> Result<Network<T>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut frames = Vec::new();
    let mut meta = None;
    while let Some((header, v)) = read_frame::<T, _>(&mut f)? {
        if frames.is_empty() {
            meta = header.meta.clone();
        }
        frames.push((header.name.unwrap_or_default(), v.into_vec()));
    }
    let meta: Checkpoint = serde_json::from_value(
        meta.ok_or_else(|| Error::Format("checkpoint has no spec metadata".into()))?,
    )?;
    if let Some(spec) = expected {
        if *spec != meta.spec {
            return Err(Error::config("checkpoint was trained with a different network spec"));
        }
    }
    let mut net = build_network::<T>(&meta.spec, Shape5::from_slice(&meta.input_dims)?, 0)?;
    let names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();
    if names.len() != frames.len() || names.iter().zip(&frames).any(|(a, (b, _))| a != b) {
        return Err(Error::config("checkpoint parameters do not match the network layout"));
    }
    let values: Vec<Vec<T>> = frames.into_iter().map(|(_, v)| v).collect();
    net.load_parameters(&values)?;
    Ok(net)
}
