//! `HUN1` model files.
//!
//! Layout: magic `HUN1`, then little-endian `u32` architecture tag, depth `T`,
//! grid tag (1 or 2), `M` (or `M1`, `M2`) and `N`. Each layer follows as
//! `f64` planes: filter real, filter imaginary, inhibition real, inhibition
//! imaginary, then `theta`. `<file>.json` describes the model for humans.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arch, Dims, TrainConfig, TrainReport, UnfoldedNetwork};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::harmonic::GridKind;

const MAGIC: &[u8; 4] = b"HUN1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub arch: Arch,
    pub dims: Dims,
    pub depth: usize,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub omega: Vec<usize>,
    #[serde(default)]
    pub sampling_seed: Option<u64>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub report: Option<TrainReport>,
}

impl ModelSidecar {
    pub fn describe(net: &UnfoldedNetwork) -> Self {
        Self {
            arch: net.arch(),
            dims: net.dims(),
            depth: net.depth(),
            lambda: None,
            omega: Vec::new(),
            sampling_seed: None,
            train: None,
            report: None,
        }
    }

    pub fn read(model_path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(sidecar_path(model_path))?)?)
    }
}

impl UnfoldedNetwork {
    pub fn save(&self, path: &Path, sidecar: &ModelSidecar) -> Result<()> {
        if (sidecar.arch, sidecar.dims, sidecar.depth) != (self.arch, self.dims, self.depth()) {
            return Err(Error::arg("sidecar does not describe this network"));
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        write_u32(&mut w, self.arch.tag())?;
        write_usize(&mut w, self.depth())?;
        write_u32(&mut w, self.dims.grid.tag())?;
        match self.dims.grid {
            GridKind::OneD { m } => write_usize(&mut w, m)?,
            GridKind::TwoD { m1, m2 } => {
                write_usize(&mut w, m1)?;
                write_usize(&mut w, m2)?;
            }
        }
        write_usize(&mut w, self.dims.n)?;
        for l in &self.layers {
            write_planes(&mut w, l.filter.array())?;
            write_planes(&mut w, l.inhibition.array())?;
            write_f64(&mut w, l.theta)?;
        }
        w.flush()?;
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)? + "\n")?;
        Ok(())
    }

    /// Reads the binary file; the sidecar is not needed.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        read_magic(&mut r, MAGIC)?;
        let arch = Arch::from_tag(read_u32(&mut r, "architecture")?)?;
        let depth = read_usize(&mut r, "depth")?;
        let grid = match read_u32(&mut r, "grid tag")? {
            1 => GridKind::OneD {
                m: read_usize(&mut r, "M")?,
            },
            2 => GridKind::TwoD {
                m1: read_usize(&mut r, "M1")?,
                m2: read_usize(&mut r, "M2")?,
            },
            t => return Err(Error::Format(format!("unknown grid tag {t}"))),
        };
        let dims = Dims {
            grid,
            n: read_usize(&mut r, "N")?,
        };
        if !arch.supports(grid) || dims.m() == 0 || dims.n == 0 {
            return Err(Error::Format(format!("{arch} with {dims:?} is not a valid model")));
        }
        let mut net = UnfoldedNetwork::zeros(arch, dims, 0)?;
        let template = UnfoldedNetwork::zeros(arch, dims, 1)?.layers[0].clone();
        for t in 0..depth {
            let mut layer = template.clone();
            let what = format!("layer {t}");
            *layer.filter.array_mut() = read_planes(&mut r, template.filter.array().shape(), &what)?;
            *layer.inhibition.array_mut() = read_planes(&mut r, template.inhibition.array().shape(), &what)?;
            layer.theta = read_f64(&mut r, &what)?;
            net.layers.push(layer);
        }
        expect_eof(&mut r, "last layer")?;
        UnfoldedNetwork::new(arch, dims, net.layers).map_err(|e| Error::Format(e.to_string()))
    }
}
