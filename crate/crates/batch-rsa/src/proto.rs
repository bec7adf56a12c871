//! Wire frames for the demo batch-decryption service. All integers are
//! big-endian; frames are length-delimited by their declared fields and
//! carried over any reliable byte stream.
//!
//! Hello:    magic "BRSA", version u8 = 1, exponent_index u16,
//!           modulus_len u16 + modulus bytes, exponent_len u16 + exponent bytes.
//! Request:  type u8 = 0x01, request_id u64, ct_len u16 + ciphertext bytes.
//! Response: type u8 = 0x02, request_id u64, status u8,
//!           pt_len u16 + plaintext bytes (empty unless status 0).
//!
//! Plaintexts travel in the clear: this is a benchmark harness for
//! decryption scheduling, not a security protocol.

use num_bigint::BigUint;
use std::io::{self, Read, Write};

pub const MAGIC: [u8; 4] = *b"BRSA";
pub const VERSION: u8 = 1;
pub const TYPE_REQUEST: u8 = 0x01;
pub const TYPE_RESPONSE: u8 = 0x02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    RejectedOverload = 1,
    Malformed = 2,
}

impl Status {
    pub fn from_u8(v: u8) -> Option<Status> {
        match v {
            0 => Some(Status::Ok),
            1 => Some(Status::RejectedOverload),
            2 => Some(Status::Malformed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloFrame {
    pub exponent_index: u16,
    pub modulus: BigUint,
    pub exponent: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestFrame {
    pub request_id: u64,
    pub ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseFrame {
    pub request_id: u64,
    pub status: Status,
    pub plaintext: Vec<u8>,
}

impl HelloFrame {
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let modulus = self.modulus.to_bytes_be();
        let exponent = self.exponent.to_bytes_be();
        w.write_all(&MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&self.exponent_index.to_be_bytes())?;
        w.write_all(&(modulus.len() as u16).to_be_bytes())?;
        w.write_all(&modulus)?;
        w.write_all(&(exponent.len() as u16).to_be_bytes())?;
        w.write_all(&exponent)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<HelloFrame> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u8(r)?;
        if version != VERSION {
            return Err(bad("unsupported version"));
        }
        let exponent_index = read_u16(r)?;
        let modulus = read_block(r)?;
        let exponent = read_block(r)?;
        Ok(HelloFrame {
            exponent_index,
            modulus: BigUint::from_bytes_be(&modulus),
            exponent: BigUint::from_bytes_be(&exponent),
        })
    }
}

impl RequestFrame {
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&[TYPE_REQUEST])?;
        w.write_all(&self.request_id.to_be_bytes())?;
        w.write_all(&(self.ciphertext.len() as u16).to_be_bytes())?;
        w.write_all(&self.ciphertext)?;
        Ok(())
    }

    /// Reads the body after the type byte has already been consumed.
    pub fn read_body<R: Read>(r: &mut R) -> io::Result<RequestFrame> {
        let request_id = read_u64(r)?;
        let ciphertext = read_block(r)?;
        Ok(RequestFrame { request_id, ciphertext })
    }
}

impl ResponseFrame {
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&[TYPE_RESPONSE])?;
        w.write_all(&self.request_id.to_be_bytes())?;
        w.write_all(&[self.status as u8])?;
        w.write_all(&(self.plaintext.len() as u16).to_be_bytes())?;
        w.write_all(&self.plaintext)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<ResponseFrame> {
        let ty = read_u8(r)?;
        if ty != TYPE_RESPONSE {
            return Err(bad("expected response frame"));
        }
        let request_id = read_u64(r)?;
        let status = Status::from_u8(read_u8(r)?).ok_or_else(|| bad("unknown status"))?;
        let plaintext = read_block(r)?;
        Ok(ResponseFrame { request_id, status, plaintext })
    }
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

fn read_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_be_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_be_bytes(buf))
}

/// u16 length prefix followed by that many bytes.
fn read_block<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let len = read_u16(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_round_trip_and_layout() {
        let hello = HelloFrame {
            exponent_index: 2,
            modulus: BigUint::from(0x1234u32),
            exponent: BigUint::from(7u32),
        };
        let mut buf = Vec::new();
        hello.write_to(&mut buf).unwrap();
        // magic + version + index + (2 + 2) modulus + (2 + 1) exponent
        assert_eq!(&buf[..4], b"BRSA");
        assert_eq!(buf[4], 1);
        assert_eq!(&buf[5..7], &[0, 2]);
        assert_eq!(&buf[7..9], &[0, 2]);
        assert_eq!(&buf[9..11], &[0x12, 0x34]);
        let back = HelloFrame::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, hello);
    }

    #[test]
    fn request_and_response_round_trip() {
        let req = RequestFrame { request_id: 0xdead_beef_0102_0304, ciphertext: vec![9, 8, 7] };
        let mut buf = Vec::new();
        req.write_to(&mut buf).unwrap();
        assert_eq!(buf[0], TYPE_REQUEST);
        let mut cursor = &buf[1..];
        assert_eq!(RequestFrame::read_body(&mut cursor).unwrap(), req);

        let resp = ResponseFrame {
            request_id: 42,
            status: Status::RejectedOverload,
            plaintext: vec![],
        };
        let mut buf = Vec::new();
        resp.write_to(&mut buf).unwrap();
        assert_eq!(ResponseFrame::read_from(&mut buf.as_slice()).unwrap(), resp);
    }

    #[test]
    fn corrupt_frames_rejected() {
        assert!(HelloFrame::read_from(&mut &b"XXXX\x01"[..]).is_err());
        let mut short = Vec::new();
        RequestFrame { request_id: 1, ciphertext: vec![1, 2, 3] }.write_to(&mut short).unwrap();
        short.truncate(short.len() - 1);
        assert!(RequestFrame::read_body(&mut &short[1..]).is_err());
    }
}
