//! QTT1 binary stream files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   8   magic "QTT1\0\0\0\0"
//! 8   8   u64 resolution in femtoseconds
//! 16  16n records: i64 time (resolution units), u16 channel, 6 zero bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{Channel, TagStream, TimeTag};
use crate::error::{Error, Result};

pub const QTT1_MAGIC: [u8; 8] = *b"QTT1\0\0\0\0";
const RECORD_LEN: usize = 16;
const FS_PER_PS: u64 = 1000;

pub fn write_stream<W: Write>(stream: &TagStream, mut out: W) -> Result<()> {
    let res = stream.resolution_ps;
    if res == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let res_fs = res
        .checked_mul(FS_PER_PS)
        .ok_or_else(|| Error::InvalidArgument(format!("resolution {res} ps overflows")))?;
    out.write_all(&QTT1_MAGIC)?;
    out.write_all(&res_fs.to_le_bytes())?;

    let mut record = [0u8; RECORD_LEN];
    for (index, tag) in stream.tags.iter().enumerate() {
        if tag.time % res as i64 != 0 {
            return Err(Error::InvalidArgument(format!(
                "tag {index} at {} ps is not a multiple of the {res} ps resolution",
                tag.time
            )));
        }
        let units = tag.time / res as i64;
        record[..8].copy_from_slice(&units.to_le_bytes());
        record[8..10].copy_from_slice(&tag.channel.0.to_le_bytes());
        out.write_all(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_stream<R: Read>(mut input: R) -> Result<TagStream> {
    let mut header = [0u8; 16];
    input
        .read_exact(&mut header)
        .map_err(|e| truncated_or(e, "header"))?;
    if header[..8] != QTT1_MAGIC {
        return Err(Error::Format("bad magic, not a QTT1 stream".into()));
    }
    let res_fs = u64::from_le_bytes(header[8..16].try_into().unwrap());
    if res_fs == 0 || res_fs % FS_PER_PS != 0 {
        return Err(Error::Format(format!(
            "resolution {res_fs} fs is not a positive whole number of picoseconds"
        )));
    }
    let res = (res_fs / FS_PER_PS) as i64;

    let mut tags = Vec::new();
    let mut record = [0u8; RECORD_LEN];
    loop {
        match read_record(&mut input, &mut record)? {
            0 => break,
            RECORD_LEN => {}
            n => {
                return Err(Error::Format(format!(
                    "truncated record {} ({n} of {RECORD_LEN} bytes)",
                    tags.len()
                )))
            }
        }
        if record[10..].iter().any(|&b| b != 0) {
            return Err(Error::Format(format!(
                "nonzero reserved bytes in record {}",
                tags.len()
            )));
        }
        let units = i64::from_le_bytes(record[..8].try_into().unwrap());
        let time = units.checked_mul(res).ok_or_else(|| {
            Error::Format(format!("record {} time overflows picoseconds", tags.len()))
        })?;
        let channel = Channel(u16::from_le_bytes([record[8], record[9]]));
        tags.push(TimeTag { channel, time });
    }
    Ok(TagStream {
        tags,
        resolution_ps: res as u64,
    })
}

pub fn read_stream_file(path: impl AsRef<Path>) -> Result<TagStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_stream(BufReader::new(file))
}

pub fn write_stream_file(stream: &TagStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_stream(stream, BufWriter::new(file))
}

/// Fills `buf` as far as possible; returns bytes read (0 only at a clean EOF).
fn read_record<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

fn truncated_or(e: std::io::Error, what: &str) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        Error::Format(format!("truncated {what}"))
    } else {
        e.into()
    }
}
