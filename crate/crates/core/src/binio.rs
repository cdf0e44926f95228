//! Little-endian primitives for the binary file formats.

use std::io::{Read, Write};

use crate::complex::{ComplexArray, Shape};
use crate::error::{Error, Result};

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_usize(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::arg(format!("{v} does not fit in a u32 field")))?;
    write_u32(w, v)
}

fn read_exact<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub(crate) fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r, what)?))
}

pub(crate) fn read_usize(r: &mut impl Read, what: &str) -> Result<usize> {
    Ok(read_u32(r, what)? as usize)
}

pub(crate) fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r, what)?))
}

pub(crate) fn read_f64(r: &mut impl Read, what: &str) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r, what)?))
}

pub(crate) fn read_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let got = read_exact::<4>(r, "magic")?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

/// Entries as interleaved `(re, im)` pairs in storage order.
pub(crate) fn write_pairs(w: &mut impl Write, a: &ComplexArray) -> Result<()> {
    let mut buf = Vec::with_capacity(16 * a.len());
    for (re, im) in a.re().iter().zip(a.im()) {
        buf.extend_from_slice(&re.to_le_bytes());
        buf.extend_from_slice(&im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_pairs(r: &mut impl Read, shape: Shape, what: &str) -> Result<ComplexArray> {
    let n = shape.len();
    let mut buf = vec![0u8; 16 * n];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated payload in {what}")),
        _ => Error::Io(e),
    })?;
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for pair in buf.chunks_exact(16) {
        re.push(f64::from_le_bytes(pair[..8].try_into().expect("8 bytes")));
        im.push(f64::from_le_bytes(pair[8..].try_into().expect("8 bytes")));
    }
    ComplexArray::from_planes(re, im, shape)
}

/// Real plane then imaginary plane.
pub(crate) fn write_planes(w: &mut impl Write, a: &ComplexArray) -> Result<()> {
    let mut buf = Vec::with_capacity(16 * a.len());
    for v in a.re().iter().chain(a.im()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_planes(r: &mut impl Read, shape: Shape, what: &str) -> Result<ComplexArray> {
    let n = shape.len();
    let mut plane = || -> Result<Vec<f64>> { (0..n).map(|_| read_f64(r, what)).collect() };
    let re = plane()?;
    let im = plane()?;
    ComplexArray::from_planes(re, im, shape)
}

pub(crate) fn expect_eof(r: &mut impl Read, what: &str) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format(format!("trailing bytes after {what}"))),
    }
}

/// `foo.bin` -> `foo.bin.json`.
pub(crate) fn sidecar_path(path: &std::path::Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
