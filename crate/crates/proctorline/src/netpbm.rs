//! Binary PPM (P6) frames and PBM (P4) masks.

use std::io::{BufRead, Write};

use proctorline_core::segmentation::{Frame, PersonMask};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetpbmError {
    #[error("expected a {0} image")]
    WrongFormat(&'static str),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("pixel data is truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads the next header token, skipping whitespace and `#` comments.
fn token<R: BufRead>(r: &mut R) -> Result<String, NetpbmError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return if tok.is_empty() { Err(NetpbmError::Truncated) } else { Ok(tok) };
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
        } else if c.is_ascii_whitespace() {
            if !tok.is_empty() {
                return Ok(tok);
            }
        } else {
            tok.push(c as char);
        }
    }
}

fn number<R: BufRead>(r: &mut R) -> Result<u32, NetpbmError> {
    let t = token(r)?;
    t.parse().map_err(|_| NetpbmError::BadHeader(t))
}

pub fn read_ppm<R: BufRead>(mut r: R) -> Result<Frame, NetpbmError> {
    if token(&mut r)? != "P6" {
        return Err(NetpbmError::WrongFormat("P6"));
    }
    let (w, h, max) = (number(&mut r)?, number(&mut r)?, number(&mut r)?);
    if max != 255 {
        return Err(NetpbmError::BadHeader(format!("maxval {max}")));
    }
    let mut pixels = vec![0u8; w as usize * h as usize * 3];
    r.read_exact(&mut pixels).map_err(|_| NetpbmError::Truncated)?;
    Frame::new(w, h, pixels).map_err(|e| NetpbmError::BadHeader(e.to_string()))
}

pub fn write_ppm<W: Write>(f: &Frame, mut out: W) -> std::io::Result<()> {
    write!(out, "P6\n{} {}\n255\n", f.width(), f.height())?;
    out.write_all(f.pixels())?;
    out.flush()
}

/// PBM bit 1 (black) marks a mask pixel; rows are padded to whole bytes.
pub fn read_pbm<R: BufRead>(mut r: R, id: u32) -> Result<PersonMask, NetpbmError> {
    if token(&mut r)? != "P4" {
        return Err(NetpbmError::WrongFormat("P4"));
    }
    let (w, h) = (number(&mut r)?, number(&mut r)?);
    let stride = (w as usize).div_ceil(8);
    let mut packed = vec![0u8; stride * h as usize];
    r.read_exact(&mut packed).map_err(|_| NetpbmError::Truncated)?;
    Ok(PersonMask::from_fn(id, w, h, |x, y| {
        packed[y as usize * stride + x as usize / 8] & (0x80 >> (x % 8)) != 0
    }))
}

pub fn write_pbm<W: Write>(m: &PersonMask, mut out: W) -> std::io::Result<()> {
    write!(out, "P4\n{} {}\n", m.width(), m.height())?;
    let stride = (m.width() as usize).div_ceil(8);
    for y in 0..m.height() {
        let mut row = vec![0u8; stride];
        for x in 0..m.width() {
            if m.get(x, y) {
                row[x as usize / 8] |= 0x80 >> (x % 8);
            }
        }
        out.write_all(&row)?;
    }
    out.flush()
}

pub fn load_ppm(path: &std::path::Path) -> Result<Frame, NetpbmError> {
    read_ppm(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn load_pbm(path: &std::path::Path, id: u32) -> Result<PersonMask, NetpbmError> {
    read_pbm(std::io::BufReader::new(std::fs::File::open(path)?), id)
}

pub fn save_ppm(path: &std::path::Path, f: &Frame) -> std::io::Result<()> {
    write_ppm(f, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn save_pbm(path: &std::path::Path, m: &PersonMask) -> std::io::Result<()> {
    write_pbm(m, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_with_comment() {
        let mut f = Frame::filled(3, 2, [1, 2, 3]);
        f.set_pixel(2, 1, [200, 100, 0]);
        let mut buf = Vec::new();
        write_ppm(&f, &mut buf).unwrap();
        assert_eq!(read_ppm(buf.as_slice()).unwrap(), f);
        let commented = [b"P6\n# made by hand\n3 2\n255\n".as_slice(), f.pixels()].concat();
        assert_eq!(read_ppm(commented.as_slice()).unwrap(), f);
    }

    #[test]
    fn pbm_round_trip_odd_width() {
        let m = PersonMask::from_fn(4, 11, 3, |x, y| (x + y) % 3 == 0);
        let mut buf = Vec::new();
        write_pbm(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), "P4\n11 3\n".len() + 2 * 3);
        assert_eq!(read_pbm(buf.as_slice(), 4).unwrap(), m);
    }

    #[test]
    fn wrong_magic_and_truncation() {
        assert!(matches!(read_ppm(b"P3\n1 1\n255\n".as_slice()), Err(NetpbmError::WrongFormat("P6"))));
        assert!(matches!(read_ppm(b"P6\n2 2\n255\nabc".as_slice()), Err(NetpbmError::Truncated)));
    }
}
