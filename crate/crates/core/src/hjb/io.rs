//! CSV and binary export of value and policy fields.
//!
//! # Binary layout
//!
//! All integers and floats are little-endian. Header floats are always
//! `f64`; node data uses the scalar width recorded in the header.
//!
//! | field | type |
//! |---|---|
//! | magic `EXCF` | 4 bytes |
//! | version (1) | u32 |
//! | scalar width in bytes (4 or 8) | u32 |
//! | field kind (0 floor, 1 unconstrained, 2 expectation-constrained, 3 state-constrained) | u32 |
//! | d | u32 |
//! | has m axis (0/1) | u32 |
//! | nt (time intervals) | u64 |
//! | t0, t1 | f64, f64 |
//! | per x axis, then the m axis if present: lo, hi, n | f64, f64, u64 |
//! | truncation A (NaN when absent) | f64 |
//! | control points, substeps | u64 × 2 |
//! | mask margin, discount | f64 × 2 |
//! | has policy (0/1) | u32 |
//! | if policy: k, martingale dimension | u32, u32 |
//! | values, slice-major, x1 slowest, m fastest | scalar × nodes |
//! | mask | u8 × nodes |
//! | if policy: controls, then martingale controls | scalar × nodes × k, scalar × nodes × dim |

use std::io::{self, Read, Write};

use thiserror::Error;

use super::field::{FieldKind, FieldMeta, PolicyField, ValueField, TIE_BREAK};
use super::grid::{Axis, Grid};
use crate::scalar::Real;

pub const BINARY_MAGIC: [u8; 4] = *b"EXCF";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a field dump (bad magic)")]
    BadMagic,
    #[error("unsupported dump version {0}")]
    Version(u32),
    #[error("corrupt dump: {0}")]
    Corrupt(String),
}

/// One row per node: `t, x1..xd, m, value, masked, u1..uk, a1..ad`. The `m`
/// column is empty for fields without an m axis; policy columns are present
/// only when a policy is given.
pub fn write_csv<S: Real, W: Write>(field: &ValueField<S>, policy: Option<&PolicyField<S>>, out: &mut W) -> io::Result<()> {
    let g = &field.grid;
    let d = g.dim();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(["m".to_string(), "value".into(), "masked".into()]);
    if let Some(p) = policy {
        header.extend((1..=p.k).map(|i| format!("u{i}")));
        header.extend((1..=p.d).map(|i| format!("a{i}")));
    }
    writeln!(out, "{}", header.join(","))?;
    let ns = g.n_space();
    let mut line = String::new();
    for n in 0..g.slices() {
        let t = g.time(n);
        for s in 0..ns {
            use std::fmt::Write as _;
            line.clear();
            let (ix, jm) = g.split(s);
            let _ = write!(line, "{t}");
            for x in g.x_coords(ix) {
                let _ = write!(line, ",{x}");
            }
            match g.m_value(jm) {
                Some(m) => {
                    let _ = write!(line, ",{m}");
                }
                None => line.push(','),
            }
            let _ = write!(line, ",{},{}", field.value(n, s), u8::from(field.masked(n, s)));
            if let Some(p) = policy {
                for v in p.control(n, s).iter().chain(p.martingale(n, s)) {
                    let _ = write!(line, ",{v}");
                }
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_scalar<S: Real, W: Write>(w: &mut W, v: S) -> io::Result<()> {
    if std::mem::size_of::<S>() == 4 {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())
    } else {
        put_f64(w, v.as_f64())
    }
}

/// Writes the binary dump described in the module docs.
pub fn write_binary<S: Real, W: Write>(field: &ValueField<S>, policy: Option<&PolicyField<S>>, out: &mut W) -> io::Result<()> {
    let g = &field.grid;
    let width = if std::mem::size_of::<S>() == 4 { 4 } else { 8 };
    out.write_all(&BINARY_MAGIC)?;
    put_u32(out, VERSION)?;
    put_u32(out, width)?;
    put_u32(out, field.meta.kind.code())?;
    put_u32(out, g.dim() as u32)?;
    put_u32(out, u32::from(g.m.is_some()))?;
    put_u64(out, g.nt as u64)?;
    put_f64(out, g.t0.as_f64())?;
    put_f64(out, g.t1.as_f64())?;
    for a in g.x.iter().chain(g.m.as_ref()) {
        put_f64(out, a.lo.as_f64())?;
        put_f64(out, a.hi.as_f64())?;
        put_u64(out, a.n as u64)?;
    }
    let m = &field.meta;
    put_f64(out, m.truncation.unwrap_or(f64::NAN))?;
    put_u64(out, m.control_points as u64)?;
    put_u64(out, m.substeps as u64)?;
    put_f64(out, m.mask_margin)?;
    put_f64(out, m.discount)?;
    put_u32(out, u32::from(policy.is_some()))?;
    if let Some(p) = policy {
        put_u32(out, p.k as u32)?;
        put_u32(out, p.d as u32)?;
    }
    let mut buf = io::BufWriter::new(out);
    for &v in &field.values {
        put_scalar(&mut buf, v)?;
    }
    let mask: Vec<u8> = field.mask.iter().map(|&b| u8::from(b)).collect();
    buf.write_all(&mask)?;
    if let Some(p) = policy {
        for &v in p.u.iter().chain(&p.a) {
            put_scalar(&mut buf, v)?;
        }
    }
    buf.flush()
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], FieldIoError> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                FieldIoError::Corrupt("truncated".into())
            } else {
                FieldIoError::Io(e)
            }
        })?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32, FieldIoError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, FieldIoError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize, FieldIoError> {
        usize::try_from(self.u64()?).map_err(|_| FieldIoError::Corrupt("size overflow".into()))
    }
    fn f64(&mut self) -> Result<f64, FieldIoError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn scalar<S: Real>(&mut self, width: u32) -> Result<S, FieldIoError> {
        Ok(if width == 4 {
            S::lit(f32::from_le_bytes(self.bytes()?) as f64)
        } else {
            S::lit(self.f64()?)
        })
    }
    fn scalars<S: Real>(&mut self, width: u32, n: usize) -> Result<Vec<S>, FieldIoError> {
        (0..n).map(|_| self.scalar(width)).collect()
    }
}

fn corrupt<E: std::fmt::Display>(e: E) -> FieldIoError {
    FieldIoError::Corrupt(e.to_string())
}

/// Reads a dump written by [`write_binary`].
pub fn read_binary<S: Real, R: Read>(input: R) -> Result<(ValueField<S>, Option<PolicyField<S>>), FieldIoError> {
    let mut r = Reader {
        inner: io::BufReader::new(input),
    };
    if r.bytes::<4>()? != BINARY_MAGIC {
        return Err(FieldIoError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FieldIoError::Version(version));
    }
    let width = r.u32()?;
    if width != 4 && width != 8 {
        return Err(corrupt(format!("scalar width {width}")));
    }
    let kind = FieldKind::from_code(r.u32()?).ok_or_else(|| corrupt("unknown field kind"))?;
    let d = r.u32()? as usize;
    let has_m = match r.u32()? {
        0 => false,
        1 => true,
        v => return Err(corrupt(format!("m flag {v}"))),
    };
    if d == 0 || d > 64 {
        return Err(corrupt(format!("dimension {d}")));
    }
    let nt = r.usize()?;
    let t0 = S::lit(r.f64()?);
    let t1 = S::lit(r.f64()?);
    let mut axes = Vec::with_capacity(d + 1);
    for _ in 0..d + usize::from(has_m) {
        let lo = S::lit(r.f64()?);
        let hi = S::lit(r.f64()?);
        let n = r.usize()?;
        axes.push(Axis::new(lo, hi, n).map_err(corrupt)?);
    }
    let m_axis = if has_m { axes.pop() } else { None };
    let grid = Grid::new(t0, t1, nt, axes, m_axis).map_err(corrupt)?;
    let truncation = r.f64()?;
    let meta = FieldMeta {
        kind,
        truncation: (!truncation.is_nan()).then_some(truncation),
        control_points: r.usize()?,
        substeps: r.usize()?,
        mask_margin: r.f64()?,
        discount: r.f64()?,
    };
    let has_policy = r.u32()? == 1;
    let (k, pd) = if has_policy {
        (r.u32()? as usize, r.u32()? as usize)
    } else {
        (0, 0)
    };
    let nodes = grid
        .x
        .iter()
        .chain(grid.m.as_ref())
        .try_fold(grid.slices(), |acc, a| acc.checked_mul(a.n))
        .filter(|&n| n <= 1 << 34)
        .ok_or_else(|| corrupt("node count overflow"))?;
    let values = r.scalars(width, nodes)?;
    let mut mask = vec![0u8; nodes];
    r.inner.read_exact(&mut mask).map_err(|_| corrupt("truncated mask"))?;
    let mask: Vec<bool> = mask.into_iter().map(|b| b != 0).collect();
    let policy = if has_policy {
        let u = r.scalars(width, nodes * k)?;
        let a = r.scalars(width, nodes * pd)?;
        Some(PolicyField {
            grid: grid.clone(),
            k,
            d: pd,
            u,
            a,
            truncation: meta.truncation.map(S::lit),
            tie_break: TIE_BREAK,
        })
    } else {
        None
    };
    Ok((ValueField { grid, values, mask, meta }, policy))
}
