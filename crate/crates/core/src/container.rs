//! Binary container used for codebooks and unitary sets: an 8-byte magic,
//! a little-endian `u32` header length, a JSON header, then the payload as
//! little-endian `f64` (re, im) pairs.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};

pub(crate) fn write<W: Write, H: Serialize>(
    mut out: W,
    magic: &[u8; 8],
    header: &H,
    payload: &[Complex64],
) -> Result<()> {
    let header = serde_json::to_vec(header)?;
    let len = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
    out.write_all(magic)?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(payload.len() * 16);
    for z in payload {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// Reads the header and the remaining payload. The caller checks that the
/// payload length matches what the header promises.
pub(crate) fn read<R: Read, H: DeserializeOwned>(mut input: R, magic: &[u8; 8]) -> Result<(H, Vec<Complex64>)> {
    let mut found = [0u8; 8];
    input.read_exact(&mut found)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut header)?;
    let header: H = serde_json::from_slice(&header)?;

    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if rest.len() % 16 != 0 {
        return Err(Error::Format(format!(
            "payload of {} bytes is not a whole number of complex values",
            rest.len()
        )));
    }
    let payload = rest
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok((header, payload))
}
