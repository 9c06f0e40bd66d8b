//! Binary matrix format: little-endian u64 dimension n, then n*n complex
//! entries in row-major order, each as two little-endian f64 (re, im).
//! Vectors use the same layout with the length as header and n entries.

use std::io::{Read, Write};

use faer::Mat;

use crate::c64;
use crate::error::{Error, Result};

fn io_err(e: std::io::Error) -> Error {
    Error::Parse(format!("matrix io: {e}"))
}

pub fn write_matrix<W: Write>(w: &mut W, m: &Mat<c64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("binary format stores square matrices".into()));
    }
    let n = m.nrows();
    let mut buf = Vec::with_capacity(8 + 16 * n * n);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..n {
            let z = m.read(i, j);
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err)
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<Mat<c64>> {
    let data = read_body(r)?;
    let n = header(&data)?;
    let expected = n.checked_mul(n).and_then(|x| x.checked_mul(16)).and_then(|x| x.checked_add(8));
    if expected != Some(data.len()) {
        return Err(Error::Parse(format!("matrix file has {} bytes, expected {:?}", data.len(), expected)));
    }
    Ok(Mat::from_fn(n, n, |i, j| entry(&data, i * n + j)))
}

pub fn write_vector<W: Write>(w: &mut W, v: &[c64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 16 * v.len());
    buf.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for z in v {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)
}

pub fn read_vector<R: Read>(r: &mut R) -> Result<Vec<c64>> {
    let data = read_body(r)?;
    let n = header(&data)?;
    if n.checked_mul(16).and_then(|x| x.checked_add(8)) != Some(data.len()) {
        return Err(Error::Parse(format!("vector file has {} bytes for length {n}", data.len())));
    }
    Ok((0..n).map(|i| entry(&data, i)).collect())
}

fn read_body<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(io_err)?;
    Ok(data)
}

fn header(data: &[u8]) -> Result<usize> {
    let bytes: [u8; 8] = data
        .get(..8)
        .ok_or_else(|| Error::Parse("missing dimension header".into()))?
        .try_into()
        .expect("8 bytes");
    usize::try_from(u64::from_le_bytes(bytes)).map_err(|_| Error::Parse("dimension overflow".into()))
}

fn entry(data: &[u8], k: usize) -> c64 {
    let at = 8 + 16 * k;
    let re = f64::from_le_bytes(data[at..at + 8].try_into().unwrap());
    let im = f64::from_le_bytes(data[at + 8..at + 16].try_into().unwrap());
    c64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let m = Mat::from_fn(2, 2, |i, j| c64::new(i as f64, j as f64 + 0.5));
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 8 + 4 * 16);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        // entry (0, 1) is the second record
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 0.0);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 1.5);
        let back = read_matrix(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(read_matrix(&mut &buf[..30]).is_err());
    }
}
