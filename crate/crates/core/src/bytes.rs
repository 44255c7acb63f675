//! Big-endian cursor and writer helpers shared by the box and metadata parsers.

/// Error produced by [`Reader`] when a field runs past the end of its buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShortRead {
    /// Absolute offset of the field that could not be read.
    pub offset: usize,
    pub wanted: usize,
}

/// A bounds-checked big-endian cursor. `base` is added to every reported
/// offset so errors point into the enclosing file, not the sub-slice.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self::with_base(buf, 0)
    }

    pub fn with_base(buf: &'a [u8], base: usize) -> Self {
        Reader { buf, pos: 0, base }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn absolute_position(&self) -> usize {
        self.base + self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], ShortRead> {
        if self.remaining() < n {
            return Err(ShortRead {
                offset: self.absolute_position(),
                wanted: n,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn skip(&mut self, n: usize) -> Result<(), ShortRead> {
        self.bytes(n).map(|_| ())
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }

    pub fn u8(&mut self) -> Result<u8, ShortRead> {
        Ok(self.bytes(1)?[0])
    }

    pub fn i8(&mut self) -> Result<i8, ShortRead> {
        Ok(self.u8()? as i8)
    }

    pub fn u16(&mut self) -> Result<u16, ShortRead> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32, ShortRead> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn i32(&mut self) -> Result<i32, ShortRead> {
        Ok(self.u32()? as i32)
    }

    pub fn u64(&mut self) -> Result<u64, ShortRead> {
        let b = self.bytes(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_be_bytes(a))
    }

    /// Unsigned big-endian integer of 1..=8 bytes.
    pub fn uint(&mut self, width: usize) -> Result<u64, ShortRead> {
        debug_assert!((1..=8).contains(&width));
        let b = self.bytes(width)?;
        Ok(b.iter().fold(0u64, |acc, &x| (acc << 8) | x as u64))
    }

    pub fn fourcc(&mut self) -> Result<[u8; 4], ShortRead> {
        let b = self.bytes(4)?;
        Ok([b[0], b[1], b[2], b[3]])
    }
}

/// Append an unsigned big-endian integer of `width` bytes. Returns `false`
/// when the value does not fit.
pub fn put_uint(out: &mut Vec<u8>, value: u64, width: usize) -> bool {
    if width < 8 && value >> (8 * width) != 0 {
        return false;
    }
    for i in (0..width).rev() {
        out.push((value >> (8 * i)) as u8);
    }
    true
}

pub fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_i32(out: &mut Vec<u8>, v: i32) {
    out.extend_from_slice(&v.to_be_bytes());
}
