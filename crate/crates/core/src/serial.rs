//! Binary tensor caching.
//!
//! A small versioned format for saving compiled operators between runs:
//! magic, format version, a kind tag, the site list with explicit shapes,
//! and the payload as little-endian complex doubles in row-major order.
//! Loads validate the header and every shape before touching the payload,
//! so a truncated or foreign file fails with a clear error instead of a
//! panic or garbage tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mpo::Mpo;
use crate::mps::VecStateMps;
use crate::pepo::Pepo;

const MAGIC: &[u8; 4] = b"TNET";
const VERSION: u16 = 1;

const KIND_MPO: u8 = 1;
const KIND_STATE: u8 = 2;
pub(crate) const KIND_PEPO: u8 = 3;

/// Upper bound on a single stored axis, to reject absurd headers before
/// allocating.
const MAX_AXIS: u64 = 1 << 24;

fn bad(msg: impl Into<String>) -> Error {
    Error::Serialization(msg.into())
}

pub(crate) struct TensorWriter<W: Write> {
    w: W,
}

impl<W: Write> TensorWriter<W> {
    pub(crate) fn new(mut w: W, kind: u8, extra: &[u64]) -> Result<Self> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[kind, extra.len() as u8])?;
        for &x in extra {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(Self { w })
    }

    pub(crate) fn tensor(&mut self, t: &ArrayD<C64>) -> Result<()> {
        self.w.write_all(&[t.ndim() as u8])?;
        for &d in t.shape() {
            self.w.write_all(&(d as u64).to_le_bytes())?;
        }
        for z in t.iter() {
            self.w.write_all(&z.re.to_le_bytes())?;
            self.w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }
}

pub(crate) struct TensorReader<R: Read> {
    r: R,
}

impl<R: Read> TensorReader<R> {
    /// Checks the header and returns the reader plus any extra header
    /// words (grid dimensions and the like).
    pub(crate) fn new(mut r: R, kind: u8) -> Result<(Self, Vec<u64>)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| bad("file too short for header"))?;
        if &magic != MAGIC {
            return Err(bad("not a tensor cache file (bad magic)"));
        }
        let mut v = [0u8; 2];
        r.read_exact(&mut v)?;
        let version = u16::from_le_bytes(v);
        if version != VERSION {
            return Err(bad(format!(
                "unsupported format version {version}, expected {VERSION}"
            )));
        }
        let mut kb = [0u8; 2];
        r.read_exact(&mut kb)?;
        if kb[0] != kind {
            return Err(bad(format!(
                "wrong content kind {}, expected {kind}",
                kb[0]
            )));
        }
        let mut extra = Vec::with_capacity(kb[1] as usize);
        for _ in 0..kb[1] {
            extra.push(read_u64(&mut r)?);
        }
        Ok((Self { r }, extra))
    }

    pub(crate) fn tensor(&mut self) -> Result<ArrayD<C64>> {
        let mut nd = [0u8; 1];
        self.r
            .read_exact(&mut nd)
            .map_err(|_| bad("file ends before tensor rank"))?;
        let ndim = nd[0] as usize;
        if ndim == 0 || ndim > 8 {
            return Err(bad(format!("implausible tensor rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut len: u64 = 1;
        for _ in 0..ndim {
            let d = read_u64(&mut self.r)?;
            if d == 0 || d > MAX_AXIS {
                return Err(bad(format!("implausible axis length {d}")));
            }
            len = len
                .checked_mul(d)
                .ok_or_else(|| bad("tensor size overflows"))?;
            shape.push(d as usize);
        }
        let mut data = Vec::with_capacity(len as usize);
        let mut buf = [0u8; 16];
        for _ in 0..len {
            self.r
                .read_exact(&mut buf)
                .map_err(|_| bad("file ends inside tensor payload"))?;
            let re = f64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(buf[8..].try_into().expect("8 bytes"));
            data.push(C64::new(re, im));
        }
        ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| bad(e.to_string()))
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| bad("file ends inside header word"))?;
    Ok(u64::from_le_bytes(b))
}

/// Writes an MPO to `path`.
pub fn save_mpo(path: impl AsRef<Path>, mpo: &Mpo) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    let mut w = TensorWriter::new(f, KIND_MPO, &[mpo.n_sites() as u64])?;
    for s in mpo.sites() {
        w.tensor(&s.view().into_dyn().to_owned())?;
    }
    Ok(())
}

/// Reads an MPO written by [`save_mpo`].
pub fn load_mpo(path: impl AsRef<Path>) -> Result<Mpo> {
    let f = BufReader::new(File::open(path)?);
    let (mut r, extra) = TensorReader::new(f, KIND_MPO)?;
    let n = chain_len(&extra)?;
    let mut sites = Vec::with_capacity(n);
    for _ in 0..n {
        let t = r.tensor()?;
        sites.push(
            t.into_dimensionality()
                .map_err(|_| bad("site tensor is not rank 4"))?,
        );
    }
    Mpo::from_sites(sites)
}

/// Writes a density-matrix MPS to `path`.
pub fn save_state(path: impl AsRef<Path>, state: &VecStateMps) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    let mut w = TensorWriter::new(f, KIND_STATE, &[state.n_sites() as u64])?;
    for s in state.sites() {
        w.tensor(&s.view().into_dyn().to_owned())?;
    }
    Ok(())
}

/// Reads a state written by [`save_state`].
pub fn load_state(path: impl AsRef<Path>) -> Result<VecStateMps> {
    let f = BufReader::new(File::open(path)?);
    let (mut r, extra) = TensorReader::new(f, KIND_STATE)?;
    let n = chain_len(&extra)?;
    let mut sites = Vec::with_capacity(n);
    for _ in 0..n {
        let t = r.tensor()?;
        sites.push(
            t.into_dimensionality()
                .map_err(|_| bad("site tensor is not rank 3"))?,
        );
    }
    VecStateMps::from_sites(sites)
}

fn chain_len(extra: &[u64]) -> Result<usize> {
    match extra {
        [n] if *n >= 1 && *n <= MAX_AXIS => Ok(*n as usize),
        _ => Err(bad("header does not carry a valid site count")),
    }
}

/// Writes a PEPO to `path`; the header records the grid shape.
pub fn save_pepo(path: impl AsRef<Path>, pepo: &Pepo) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    let mut w = TensorWriter::new(
        f,
        KIND_PEPO,
        &[pepo.rows() as u64, pepo.cols() as u64],
    )?;
    for s in pepo.sites() {
        w.tensor(&s.view().into_dyn().to_owned())?;
    }
    Ok(())
}

/// Reads a PEPO written by [`save_pepo`].
pub fn load_pepo(path: impl AsRef<Path>) -> Result<Pepo> {
    let f = BufReader::new(File::open(path)?);
    let (mut r, extra) = TensorReader::new(f, KIND_PEPO)?;
    let (rows, cols) = match extra[..] {
        [a, b] if a >= 1 && b >= 1 && a <= MAX_AXIS && b <= MAX_AXIS => {
            (a as usize, b as usize)
        }
        _ => return Err(bad("header does not carry a valid grid shape")),
    };
    let mut sites = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let t = r.tensor()?;
        sites.push(
            t.into_dimensionality()
                .map_err(|_| bad("site tensor is not rank 6"))?,
        );
    }
    Pepo::from_sites(rows, cols, sites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use std::fs;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("mpoqem-serial-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn mpo_round_trip_is_exact() {
        let mut rng = rng_for(5, 0);
        let m = Mpo::random(4, 3, &mut rng).unwrap();
        let p = tmp("mpo.bin");
        save_mpo(&p, &m).unwrap();
        let back = load_mpo(&p).unwrap();
        fs::remove_file(&p).unwrap();
        assert_eq!(m.n_sites(), back.n_sites());
        for (a, b) in m.sites().iter().zip(back.sites()) {
            assert_eq!(a.shape(), b.shape());
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x == y));
        }
    }

    #[test]
    fn state_round_trip_is_exact() {
        let s = VecStateMps::zero_state(5).unwrap();
        let p = tmp("state.bin");
        save_state(&p, &s).unwrap();
        let back = load_state(&p).unwrap();
        fs::remove_file(&p).unwrap();
        assert_eq!(back.n_sites(), 5);
        for (a, b) in s.sites().iter().zip(back.sites()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x == y));
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let s = VecStateMps::zero_state(3).unwrap();
        let p = tmp("kind.bin");
        save_state(&p, &s).unwrap();
        let err = load_mpo(&p);
        fs::remove_file(&p).unwrap();
        assert!(matches!(err, Err(Error::Serialization(_))));
    }

    #[test]
    fn pepo_round_trip_is_exact() {
        let mut rng = rng_for(9, 0);
        let g = Pepo::random(2, 3, 2, &mut rng).unwrap();
        let p = tmp("pepo.bin");
        save_pepo(&p, &g).unwrap();
        let back = load_pepo(&p).unwrap();
        fs::remove_file(&p).unwrap();
        assert_eq!(back.rows(), 2);
        assert_eq!(back.cols(), 3);
        for (a, b) in g.sites().iter().zip(back.sites()) {
            assert_eq!(a.shape(), b.shape());
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x == y));
        }
    }

    #[test]
    fn pepo_loader_rejects_chain_files() {
        let mut rng = rng_for(10, 0);
        let m = Mpo::random(3, 2, &mut rng).unwrap();
        let p = tmp("pepo-kind.bin");
        save_mpo(&p, &m).unwrap();
        let err = load_pepo(&p);
        fs::remove_file(&p).unwrap();
        assert!(matches!(err, Err(Error::Serialization(_))));
    }

    #[test]
    fn corrupted_files_fail_cleanly() {
        let mut rng = rng_for(6, 0);
        let m = Mpo::random(3, 2, &mut rng).unwrap();
        let p = tmp("corrupt.bin");
        save_mpo(&p, &m).unwrap();
        let bytes = fs::read(&p).unwrap();

        // bad magic
        let mut evil = bytes.clone();
        evil[0] ^= 0xff;
        fs::write(&p, &evil).unwrap();
        assert!(matches!(load_mpo(&p), Err(Error::Serialization(_))));

        // future version
        let mut evil = bytes.clone();
        evil[4] = 0xfe;
        fs::write(&p, &evil).unwrap();
        assert!(matches!(load_mpo(&p), Err(Error::Serialization(_))));

        // truncated payload
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_mpo(&p), Err(Error::Serialization(_))));

        fs::remove_file(&p).unwrap();
    }
}
