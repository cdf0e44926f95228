//! `HIQ1` files: externally supplied samples of a 2D grid.
//!
//! Layout: magic `HIQ1`, little-endian `u32` header length, a JSON header
//! `{"m1", "m2", "omega"}`, then one `f64` `(re, im)` pair per index in
//! `omega`, in the same order. `omega` indexes the row-major `M1 x M2`
//! sample grid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{read_magic, read_pairs, read_u32, write_pairs, write_u32};
use crate::complex::{ComplexArray, Shape};
use crate::error::{Error, Result};
use crate::harmonic::{build_dictionary, Dictionary, GridKind, SamplingSet};

const MAGIC: &[u8; 4] = b"HIQ1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    m1: usize,
    m2: usize,
    omega: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IqGrid {
    pub m1: usize,
    pub m2: usize,
    pub omega: Vec<usize>,
    pub y: ComplexArray,
}

impl IqGrid {
    /// Wraps an observation taken through a 2D dictionary.
    pub fn from_observation(d: &Dictionary, y: &ComplexArray) -> Result<Self> {
        let GridKind::TwoD { m1, m2 } = d.kind() else {
            return Err(Error::arg("IQ grids are two-dimensional"));
        };
        if y.len() != d.n() {
            return Err(Error::dim(format!("{} samples for {} indices", y.len(), d.n())));
        }
        Ok(Self {
            m1,
            m2,
            omega: d.sampling().indices().to_vec(),
            y: y.clone().flattened(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if self.omega.len() != self.y.len() {
            return Err(Error::dim("sample count differs from index count"));
        }
        let header = serde_json::to_vec(&Header {
            m1: self.m1,
            m2: self.m2,
            omega: self.omega.clone(),
        })?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        write_u32(&mut w, u32::try_from(header.len()).map_err(|_| Error::arg("header too large"))?)?;
        w.write_all(&header)?;
        write_pairs(&mut w, &self.y)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        read_magic(&mut r, MAGIC)?;
        let len = read_u32(&mut r, "header length")? as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("truncated IQ header".into()))?;
        let h: Header =
            serde_json::from_slice(&header).map_err(|e| Error::Format(format!("IQ header: {e}")))?;
        if h.m1 == 0 || h.m2 == 0 {
            return Err(Error::Format("IQ grid has a zero dimension".into()));
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != 16 * h.omega.len() {
            return Err(Error::Format(format!(
                "{} index entries but {} payload bytes",
                h.omega.len(),
                payload.len()
            )));
        }
        let y = read_pairs(&mut payload.as_slice(), Shape::Vector(h.omega.len()), "IQ payload")?;
        Ok(Self {
            m1: h.m1,
            m2: h.m2,
            omega: h.omega,
            y,
        })
    }

    /// The observation reordered to ascending indices, and its dictionary.
    pub fn into_problem(self) -> Result<(ComplexArray, Dictionary)> {
        let mut order: Vec<usize> = (0..self.omega.len()).collect();
        order.sort_by_key(|&i| self.omega[i]);
        let y = ComplexArray::from_complex(&order.iter().map(|&i| self.y.get(i)).collect::<Vec<_>>());
        let sampling = SamplingSet::from_indices(self.omega, self.m1 * self.m2)
            .map_err(|e| Error::Format(e.to_string()))?;
        let d = build_dictionary(
            GridKind::TwoD {
                m1: self.m1,
                m2: self.m2,
            },
            sampling,
        )?;
        Ok((y, d))
    }
}

/// Reads an IQ file into an observation and the matching 2D dictionary.
pub fn ingest_iq_grid(path: &Path) -> Result<(ComplexArray, Dictionary)> {
    IqGrid::read(path)?.into_problem()
}
