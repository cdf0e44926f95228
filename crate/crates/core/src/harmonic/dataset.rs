//! Labeled training sets and the `HUD1` file format.
//!
//! Layout: magic `HUD1`, then little-endian `u32` kind tag (1 or 2), `M` (or
//! `M1`, `M2`), `N`, `n_samples`, `K`, a `u64` seed and an `f64` noise power,
//! followed by `Y` (`N x n_samples`) and `X` (`M x n_samples`) as row-major
//! `(re, im)` pairs. `<file>.json` mirrors the header and adds the sampling set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_dictionary, Dictionary, GridKind, SamplingSet, SparseInstance};
use crate::binio::*;
use crate::complex::{ComplexArray, Shape};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

const MAGIC: &[u8; 4] = b"HUD1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub grid: GridKind,
    pub n: usize,
    pub n_samples: usize,
    pub k: usize,
    pub seed: u64,
    pub sigma2: f64,
    #[serde(default)]
    pub offgrid: Option<f64>,
    #[serde(default)]
    pub omega: Vec<usize>,
    #[serde(default)]
    pub sampling_seed: Option<u64>,
}

/// Columns `i` of `y` and `x` form one (observation, spectrum) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: ComplexArray,
    pub x: ComplexArray,
    pub meta: DatasetMeta,
}

pub fn gen_dataset(d: &Dictionary, n_samples: usize, k: usize, sigma2: f64, seed: u64) -> Result<Dataset> {
    Dataset::generate(d, n_samples, k, sigma2, None, seed)
}

impl Dataset {
    /// Column `i` uses the stream `derive_seed(seed, i)`, so the result does
    /// not depend on how columns are scheduled.
    pub fn generate(
        d: &Dictionary,
        n_samples: usize,
        k: usize,
        sigma2: f64,
        offgrid: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        let cols = (0..n_samples)
            .into_par_iter()
            .map(|i| SparseInstance::generate(d, k, sigma2, offgrid, derive_seed(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let (n, m) = (d.n(), d.m());
        let mut y = ComplexArray::zeros(n, n_samples);
        let mut x = ComplexArray::zeros(m, n_samples);
        for (i, inst) in cols.iter().enumerate() {
            y.set_column(i, &inst.y);
            x.set_column(i, &inst.x_true);
        }
        Ok(Self {
            y,
            x,
            meta: DatasetMeta {
                grid: d.kind(),
                n,
                n_samples,
                k,
                seed,
                sigma2,
                offgrid,
                omega: d.sampling().indices().to_vec(),
                sampling_seed: d.sampling().seed(),
            },
        })
    }

    /// The dictionary the samples were drawn through, rebuilt from the stored
    /// sampling set.
    pub fn dictionary(&self) -> Result<Dictionary> {
        if self.meta.omega.len() != self.meta.n {
            return Err(Error::Format("dataset carries no sampling set".into()));
        }
        let mut sampling = SamplingSet::from_indices(self.meta.omega.clone(), self.meta.grid.size())?;
        if let Some(seed) = self.meta.sampling_seed {
            sampling = sampling.with_seed(seed);
        }
        build_dictionary(self.meta.grid, sampling)
    }

    pub fn len(&self) -> usize {
        self.meta.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn m(&self) -> usize {
        self.x.rows()
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn sample(&self, i: usize) -> (ComplexArray, ComplexArray) {
        (self.y.column(i), self.x.column(i))
    }

    /// Builds a dataset from explicit columns.
    pub fn from_columns(ys: &[ComplexArray], xs: &[ComplexArray], meta: DatasetMeta) -> Result<Self> {
        if ys.len() != xs.len() || ys.len() != meta.n_samples {
            return Err(Error::dim("column counts of Y, X and metadata differ"));
        }
        let mut y = ComplexArray::zeros(meta.n, ys.len());
        let mut x = ComplexArray::zeros(meta.grid.size(), xs.len());
        for (i, (yi, xi)) in ys.iter().zip(xs).enumerate() {
            super::expect_len(yi, meta.n, "observation column")?;
            super::expect_len(xi, meta.grid.size(), "spectrum column")?;
            y.set_column(i, yi);
            x.set_column(i, xi);
        }
        Ok(Self { y, x, meta })
    }

    /// Columns `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut y = ComplexArray::zeros(self.n(), indices.len());
        let mut x = ComplexArray::zeros(self.m(), indices.len());
        for (j, &i) in indices.iter().enumerate() {
            y.set_column(j, &self.y.column(i));
            x.set_column(j, &self.x.column(i));
        }
        let mut meta = self.meta.clone();
        meta.n_samples = indices.len();
        Self { y, x, meta }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        write_u32(&mut w, self.meta.grid.tag())?;
        match self.meta.grid {
            GridKind::OneD { m } => write_usize(&mut w, m)?,
            GridKind::TwoD { m1, m2 } => {
                write_usize(&mut w, m1)?;
                write_usize(&mut w, m2)?;
            }
        }
        write_usize(&mut w, self.meta.n)?;
        write_usize(&mut w, self.meta.n_samples)?;
        write_usize(&mut w, self.meta.k)?;
        write_u64(&mut w, self.meta.seed)?;
        write_f64(&mut w, self.meta.sigma2)?;
        write_pairs(&mut w, &self.y)?;
        write_pairs(&mut w, &self.x)?;
        w.flush()?;
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    /// Reads the binary file; the sidecar, when present, supplies the
    /// sampling set and must agree with the binary header.
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        read_magic(&mut r, MAGIC)?;
        let grid = match read_u32(&mut r, "kind tag")? {
            1 => GridKind::OneD {
                m: read_usize(&mut r, "M")?,
            },
            2 => GridKind::TwoD {
                m1: read_usize(&mut r, "M1")?,
                m2: read_usize(&mut r, "M2")?,
            },
            t => return Err(Error::Format(format!("unknown kind tag {t}"))),
        };
        let n = read_usize(&mut r, "N")?;
        let n_samples = read_usize(&mut r, "n_samples")?;
        let k = read_usize(&mut r, "K")?;
        let seed = read_u64(&mut r, "seed")?;
        let sigma2 = read_f64(&mut r, "sigma2")?;
        let y = read_pairs(&mut r, Shape::Matrix(n, n_samples), "Y")?;
        let x = read_pairs(&mut r, Shape::Matrix(grid.size(), n_samples), "X")?;
        expect_eof(&mut r, "X payload")?;

        let mut meta = DatasetMeta {
            grid,
            n,
            n_samples,
            k,
            seed,
            sigma2,
            offgrid: None,
            omega: Vec::new(),
            sampling_seed: None,
        };
        let side = sidecar_path(path);
        if side.exists() {
            let s: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(side)?)?;
            if (s.grid, s.n, s.n_samples, s.k, s.seed) != (grid, n, n_samples, k, seed)
                || s.sigma2.to_bits() != sigma2.to_bits()
            {
                return Err(Error::Format("dataset sidecar disagrees with binary header".into()));
            }
            meta.offgrid = s.offgrid;
            meta.omega = s.omega;
            meta.sampling_seed = s.sampling_seed;
        }
        Ok(Self { y, x, meta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::matvec;

    fn dict() -> Dictionary {
        Dictionary::random(GridKind::OneD { m: 32 }, 10, 1).unwrap()
    }

    #[test]
    fn empty_dataset() {
        let ds = gen_dataset(&dict(), 0, 3, 0.1, 0).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.y.shape(), Shape::Matrix(10, 0));
    }

    #[test]
    fn dictionary_survives_a_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.hud");
        let d = dict();
        gen_dataset(&d, 4, 2, 0.0, 1).unwrap().write(&path).unwrap();
        let back = Dataset::read(&path).unwrap().dictionary().unwrap();
        assert_eq!(back.phi(), d.phi());
        assert_eq!(back.sampling(), d.sampling());
    }

    #[test]
    fn noiseless_columns_satisfy_model() {
        let d = dict();
        let ds = gen_dataset(&d, 20, 3, 0.0, 4).unwrap();
        let py = d.phi().matmul(&ds.x).unwrap();
        assert!(py.max_abs_diff(&ds.y) < 1e-12);
        let (y5, x5) = ds.sample(5);
        assert!(matvec(d.phi(), &x5).unwrap().max_abs_diff(&y5) < 1e-12);
        assert_eq!(x5.abs().iter().filter(|&&a| a > 0.0).count(), 3);
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let d = dict();
        let a = gen_dataset(&d, 30, 2, 0.4, 9).unwrap();
        let b = gen_dataset(&d, 30, 2, 0.4, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_dataset(&d, 30, 2, 0.4, 10).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.hud");
        for d in [dict(), Dictionary::random(GridKind::TwoD { m1: 4, m2: 3 }, 5, 2).unwrap()] {
            let ds = gen_dataset(&d, 7, 2, 0.25, 3).unwrap();
            ds.write(&path).unwrap();
            assert_eq!(Dataset::read(&path).unwrap(), ds);
        }
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.hud");
        std::fs::write(&path, b"").unwrap();
        assert!(matches!(Dataset::read(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"XXXX0000").unwrap();
        assert!(matches!(Dataset::read(&path), Err(Error::Format(_))));

        let ds = gen_dataset(&dict(), 3, 2, 0.0, 3).unwrap();
        ds.write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(Dataset::read(&path), Err(Error::Format(_))));
    }

    #[test]
    fn select_reorders_columns() {
        let ds = gen_dataset(&dict(), 5, 2, 0.1, 3).unwrap();
        let sub = ds.select(&[4, 1]);
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.sample(0), ds.sample(4));
        assert_eq!(sub.sample(1), ds.sample(1));
    }
}
