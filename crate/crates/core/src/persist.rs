//! Binary state files: a small header (magic, format version, resolution,
//! kernel hash, time stamp) followed by raw little-endian f64 payloads, so a
//! save/load round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::history::HistoryState;
use crate::kernel::KernelSpec;
use crate::spectral::{Basis, SpectralField};

const MAGIC: &[u8; 8] = b"BBMMSTA1";
const VERSION: u32 = 1;

/// FNV-1a, used for stable config/kernel fingerprints (f64s are hashed by bit
/// pattern, so fingerprints are reproducible across runs and platforms).
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Fnv::new()
    }
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.0.write_all(&v.to_bits().to_le_bytes())?;
        Ok(())
    }
    fn field(&mut self, f: &SpectralField) -> Result<()> {
        for &c in f.coeffs() {
            self.f64(c)?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b).map_err(|_| truncated())?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b).map_err(|_| truncated())?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn field(&mut self, n: usize) -> Result<SpectralField> {
        let mut c = vec![0.0; n];
        for v in &mut c {
            *v = self.f64()?;
        }
        Ok(SpectralField::from_coeffs(c))
    }
}

fn truncated() -> Error {
    Error::Persist("unexpected end of file".into())
}

/// Serialize a full state (u, history, t) to a writer.
pub fn write_state<W: Write>(w: W, state: &State, kernel: &KernelSpec) -> Result<()> {
    let mut w = Writer(w);
    w.0.write_all(MAGIC)?;
    w.u32(VERSION)?;
    let n = state.u.n_modes() as u32;
    w.u32(n)?;
    w.u64(kernel.hash())?;
    w.f64(state.t)?;
    w.field(&state.u)?;
    match &state.history {
        HistoryState::Quadrature(q) => {
            w.u32(0)?;
            w.f64(q.ds())?;
            w.u32(q.node_count() as u32)?;
            for f in q.nodes() {
                w.field(f)?;
            }
        }
        HistoryState::Markovian(m) => {
            w.u32(1)?;
            w.u32(m.mode_count() as u32)?;
            for f in m.psi() {
                w.field(f)?;
            }
            for &q in m.channels() {
                w.f64(q)?;
            }
        }
    }
    Ok(())
}

/// Deserialize a state, validating resolution and kernel compatibility.
pub fn read_state<R: Read>(r: R, basis: &Basis, kernel: &KernelSpec) -> Result<State> {
    let mut r = Reader(r);
    let mut magic = [0u8; 8];
    r.0.read_exact(&mut magic).map_err(|_| truncated())?;
    if &magic != MAGIC {
        return Err(Error::Persist("bad magic; not a state file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Persist(format!(
            "unsupported state-file version {version} (expected {VERSION})"
        )));
    }
    let n = r.u32()? as usize;
    if n != basis.n_modes() {
        return Err(Error::Persist(format!(
            "state has {n} modes but the basis expects {}",
            basis.n_modes()
        )));
    }
    let khash = r.u64()?;
    if khash != kernel.hash() {
        return Err(Error::Persist(
            "kernel fingerprint mismatch; state was produced with a different kernel".into(),
        ));
    }
    let t = r.f64()?;
    let u = r.field(n)?;
    let backend = r.u32()?;
    let history = match backend {
        0 => {
            let ds = r.f64()?;
            let count = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                nodes.push(r.field(n)?);
            }
            HistoryState::quadrature_from_nodes(kernel, ds, nodes)?
        }
        1 => {
            let count = r.u32()? as usize;
            if count != kernel.prony_modes()?.len() {
                return Err(Error::Persist("exponential mode count mismatch".into()));
            }
            let mut psi = Vec::with_capacity(count);
            for _ in 0..count {
                psi.push(r.field(n)?);
            }
            let mut q = vec![0.0; count];
            for v in &mut q {
                *v = r.f64()?;
            }
            HistoryState::markovian_from_parts(kernel, psi, q)?
        }
        other => return Err(Error::Persist(format!("unknown history backend tag {other}"))),
    };
    Ok(State { u, history, t })
}

pub fn save_state(path: &Path, state: &State, kernel: &KernelSpec) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_state(std::io::BufWriter::new(file), state, kernel)
}

pub fn load_state(path: &Path, basis: &Basis, kernel: &KernelSpec) -> Result<State> {
    let file = std::fs::File::open(path)?;
    read_state(std::io::BufReader::new(file), basis, kernel)
}
