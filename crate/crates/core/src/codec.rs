//! Little helpers for the little-endian binary formats used by checkpoints
//! and spike-tensor files.

use std::io::{self, Read, Write};

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_bits().to_le_bytes())
}

pub(crate) fn get_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub(crate) fn get_u32(r: &mut impl Read) -> io::Result<u32> {
    get_array::<4>(r).map(u32::from_le_bytes)
}

pub(crate) fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    get_array::<8>(r).map(u64::from_le_bytes)
}

pub(crate) fn get_f64(r: &mut impl Read) -> io::Result<f64> {
    get_array::<8>(r).map(|b| f64::from_bits(u64::from_le_bytes(b)))
}
