//! Binary parameter snapshots.
//!
//! Layout, all integers `u32` and floats `f64`, little endian:
//!
//! ```text
//! "EMOT" | version | n_nets | (n_widths, widths...) per net
//!        | n_extras | extras... | params of net 0 | params of net 1 | ...
//! ```

use super::mlp::{Mlp, MlpSpec};
use super::NnError;

pub const MAGIC: &[u8; 4] = b"EMOT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub nets: Vec<Mlp>,
    /// Scalars stored alongside the networks (meaning fixed by the caller).
    pub extras: Vec<f64>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("checkpoint field exceeds u32").to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION as usize);
        put_u32(&mut out, self.nets.len());
        for net in &self.nets {
            let w = net.spec().widths();
            put_u32(&mut out, w.len());
            for x in w {
                put_u32(&mut out, *x);
            }
        }
        put_u32(&mut out, self.extras.len());
        for e in &self.extras {
            out.extend_from_slice(&e.to_le_bytes());
        }
        for net in &self.nets {
            for p in net.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let n_nets = r.u32()?;
        let mut specs = Vec::with_capacity(n_nets.min(16));
        for _ in 0..n_nets {
            let n = r.u32()?;
            let widths = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            specs.push(MlpSpec::new(widths)?);
        }
        let n_extras = r.u32()?;
        let extras = (0..n_extras).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let mut nets = Vec::with_capacity(specs.len());
        for spec in specs {
            let params = (0..spec.n_params()).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            nets.push(Mlp::from_params(spec, params)?);
        }
        if r.pos != buf.len() {
            return Err(NnError::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self { nets, extras })
    }
}
