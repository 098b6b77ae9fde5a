//! Named tensor collections serialized as JSON.
//!
//! f64 values go through serde_json with `float_roundtrip`, so a save/load
//! cycle is bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const TENSOR_FILE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorFile {
    pub version: u32,
    pub tensors: BTreeMap<String, Tensor>,
}

impl TensorFile {
    pub fn new(tensors: BTreeMap<String, Tensor>) -> Self {
        TensorFile {
            version: TENSOR_FILE_VERSION,
            tensors,
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Data(format!("tensor `{name}` missing from file")))
    }
}

pub fn write_tensors<W: Write>(file: &TensorFile, out: W) -> Result<()> {
    serde_json::to_writer(out, file)?;
    Ok(())
}

pub fn read_tensors<R: Read>(input: R) -> Result<TensorFile> {
    let file: TensorFile = serde_json::from_reader(input)?;
    if file.version != TENSOR_FILE_VERSION {
        return Err(Error::Version {
            expected: TENSOR_FILE_VERSION,
            found: file.version,
        });
    }
    Ok(file)
}
