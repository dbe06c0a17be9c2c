//! Flat binary serialization of [`ResidualMapStack`].
//!
//! Layout: 8-byte magic, `u32` version, `u32` latent and output dims, `u8`
//! lift flag, `u32` stage count, then per stage a `u32` width count and the
//! widths. Parameters follow as little-endian `f64`: lift matrix, lift bias,
//! then each stage's parameter array.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Lift, Mlp, ResidualMapStack};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"GPRMAP\0\0";
const VERSION: u32 = 1;
/// Guards allocation against corrupt headers.
const MAX_DIM: u32 = 1 << 20;

fn format(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| format("size does not fit in u32"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    let v = u32::from_le_bytes(b);
    if v > MAX_DIM {
        return Err(format(format!("implausible size {v} in header")));
    }
    Ok(v as usize)
}

fn get_f64s<R: Read, T: Scalar>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(T::lit(f64::from_le_bytes(b)));
    }
    Ok(out)
}

impl<T: Scalar> ResidualMapStack<T> {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(&mut w, VERSION as usize)?;
        put_u32(&mut w, self.latent_dim)?;
        put_u32(&mut w, self.output_dim)?;
        w.write_all(&[u8::from(self.lift.is_some())])?;
        put_u32(&mut w, self.stages.len())?;
        for s in &self.stages {
            put_u32(&mut w, s.widths().len())?;
            for &k in s.widths() {
                put_u32(&mut w, k)?;
            }
        }
        let lift = self.lift.iter().flat_map(|l| l.matrix.iter().chain(&l.bias));
        for v in lift.chain(self.stages.iter().flat_map(|s| s.params())) {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(format("not a residual map file"));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION as usize {
            return Err(format(format!("unsupported version {version}")));
        }
        let latent = get_u32(&mut r)?;
        let output = get_u32(&mut r)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let count = get_u32(&mut r)?;
        let mut widths = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let n = get_u32(&mut r)?;
            widths.push((0..n).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>>>()?);
        }
        let lift = match flag[0] {
            0 => None,
            1 => Some(Lift {
                matrix: get_f64s(&mut r, latent * output)?,
                bias: get_f64s(&mut r, output)?,
            }),
            f => return Err(format(format!("bad lift flag {f}"))),
        };
        let mut stages = Vec::with_capacity(widths.len());
        for w in &widths {
            let n = Mlp::<T>::zeros(w)?.param_count();
            stages.push(Mlp::from_params(w, get_f64s(&mut r, n)?)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(format("trailing bytes after parameters"));
        }
        ResidualMapStack::new(latent, output, lift, stages)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    fn sample_stack() -> ResidualMapStack<f64> {
        let mut rng = RngSeed(5).rng();
        let mut s = Mlp::init(&[3, 4, 3], &mut rng).unwrap();
        s.params_mut().iter_mut().enumerate().for_each(|(i, p)| *p += 0.01 * i as f64);
        let lift = Lift {
            matrix: vec![1.0, 0.5, -0.25, 2.0, 0.0, 1.5],
            bias: vec![0.1, -0.2, 0.3],
        };
        ResidualMapStack::new(2, 3, Some(lift), vec![s.clone(), s]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let map = sample_stack();
        let mut buf = Vec::new();
        map.write_to(&mut buf).unwrap();
        let back = ResidualMapStack::<f64>::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn identity_round_trip() {
        let map = ResidualMapStack::<f64>::identity(2);
        let mut buf = Vec::new();
        map.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 * 4 + 1);
        assert_eq!(ResidualMapStack::<f64>::read_from(buf.as_slice()).unwrap(), map);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let map = sample_stack();
        let mut buf = Vec::new();
        map.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(ResidualMapStack::<f64>::read_from(bad.as_slice()), Err(Error::Format(_))));
        assert!(ResidualMapStack::<f64>::read_from(&buf[..buf.len() - 3]).is_err());
        let mut long = buf;
        long.push(0);
        assert!(matches!(ResidualMapStack::<f64>::read_from(long.as_slice()), Err(Error::Format(_))));
    }
}
