//! Canonical binary encoding.
//!
//! Fixed field order, fixed-width integers (little endian), 32-byte group and
//! scalar encodings, `u32` length prefixes for variable-length byte strings.
//! Decoding is strict: non-canonical elements and trailing bytes are errors.

use thiserror::Error;

use crate::algebra::{AlgebraError, GroupElement, Scalar};

/// Version byte prefixed to every top-level encoded object.
pub const WIRE_VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("buffer truncated")]
    Truncated,
    #[error("non-canonical element encoding")]
    MalformedEncoding,
    #[error("unsupported version byte {0:#04x}")]
    BadVersion(u8),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid tag byte {0:#04x}")]
    BadTag(u8),
}

impl From<AlgebraError> for CodecError {
    fn from(_: AlgebraError) -> Self {
        CodecError::MalformedEncoding
    }
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn versioned() -> Self {
        let mut w = Self::new();
        w.u8(WIRE_VERSION);
        w
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn fixed(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(bytes.len() as u32);
        self.fixed(bytes)
    }

    pub fn scalar(&mut self, s: &Scalar) -> &mut Self {
        self.fixed(&s.encode())
    }

    pub fn element(&mut self, p: &GroupElement) -> &mut Self {
        self.fixed(&p.encode())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    /// Reader positioned after a checked version byte.
    pub fn versioned(buf: &'a [u8]) -> Result<Self, CodecError> {
        let mut r = Self::new(buf);
        match r.u8()? {
            WIRE_VERSION => Ok(r),
            v => Err(CodecError::BadVersion(v)),
        }
    }

    pub fn fixed(&mut self, len: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(len).ok_or(CodecError::Truncated)?;
        if end > self.buf.len() {
            return Err(CodecError::Truncated);
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.fixed(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.fixed(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.u32()? as usize;
        self.fixed(len)
    }

    pub fn scalar(&mut self) -> Result<Scalar, CodecError> {
        Ok(Scalar::decode(self.fixed(32)?)?)
    }

    pub fn element(&mut self) -> Result<GroupElement, CodecError> {
        Ok(GroupElement::decode(self.fixed(32)?)?)
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_decoding() {
        let mut w = Writer::versioned();
        w.u64(7).bytes(b"abc").scalar(&Scalar::ONE);
        let buf = w.finish();
        let mut r = Reader::versioned(&buf).unwrap();
        assert_eq!(r.u64().unwrap(), 7);
        assert_eq!(r.bytes().unwrap(), b"abc");
        assert_eq!(r.scalar().unwrap(), Scalar::ONE);
        r.finish().unwrap();

        let mut extended = buf.clone();
        extended.push(0);
        let mut r = Reader::versioned(&extended).unwrap();
        r.u64().unwrap();
        r.bytes().unwrap();
        r.scalar().unwrap();
        assert_eq!(r.finish(), Err(CodecError::TrailingBytes(1)));

        let mut wrong = buf.clone();
        wrong[0] = 2;
        assert!(matches!(Reader::versioned(&wrong), Err(CodecError::BadVersion(2))));
        let mut r = Reader::new(&buf[..5]);
        r.u8().unwrap();
        assert_eq!(r.u64(), Err(CodecError::Truncated));
    }
}
