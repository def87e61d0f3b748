//! Binary checkpoint of a trained network.
//!
//! Little-endian layout:
//!
//! ```text
//! magic     8 bytes  "IPDNNCKP"
//! version   u32
//! fp_len    u32, then fp_len bytes of UTF-8 grid fingerprint
//! activation u8
//! n_side    u32
//! log_c     f64
//! log_sigma f64
//! weights   u64 count, then f64 values
//! bias      u64 count, then f64 values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Activation, GlowParams, NetworkParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IPDNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Network parameters with the grid they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub activation: Activation,
    pub fingerprint: String,
}

impl Checkpoint {
    /// Rejects the checkpoint unless it was built for `fingerprint`.
    pub fn check_fingerprint(&self, fingerprint: &str) -> Result<()> {
        if self.fingerprint != fingerprint {
            return Err(Error::Fingerprint {
                expected: self.fingerprint.clone(),
                found: fingerprint.to_string(),
            });
        }
        Ok(())
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        self.params.validate()?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u32::<LittleEndian>(self.fingerprint.len() as u32)?;
        w.write_all(self.fingerprint.as_bytes())?;
        w.write_u8(self.activation.code())?;
        w.write_u32::<LittleEndian>(self.params.n_side as u32)?;
        w.write_f64::<LittleEndian>(self.params.glow.log_c)?;
        w.write_f64::<LittleEndian>(self.params.glow.log_sigma)?;
        for values in [&self.params.weight, &self.params.bias] {
            w.write_u64::<LittleEndian>(values.len() as u64)?;
            for &v in values.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_reader<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("malformed checkpoint: {msg}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic bytes".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let fp_len = r.read_u32::<LittleEndian>()? as usize;
        if fp_len > 1024 {
            return Err(bad(format!("fingerprint length {fp_len}")));
        }
        let mut fp = vec![0u8; fp_len];
        r.read_exact(&mut fp)?;
        let fingerprint = String::from_utf8(fp).map_err(|_| bad("fingerprint is not UTF-8".into()))?;
        let code = r.read_u8()?;
        let activation = Activation::from_code(code).ok_or_else(|| bad(format!("unknown activation code {code}")))?;
        let n_side = r.read_u32::<LittleEndian>()? as usize;
        let glow = GlowParams {
            log_c: r.read_f64::<LittleEndian>()?,
            log_sigma: r.read_f64::<LittleEndian>()?,
        };
        let d = 2 * n_side * n_side;
        let mut read_array = |expected: usize, what: &str| -> Result<Vec<f64>> {
            let len = r.read_u64::<LittleEndian>()? as usize;
            if len != expected {
                return Err(bad(format!("{what} has {len} entries, expected {expected}")));
            }
            let mut v = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let weight = read_array(d * d, "weight")?;
        let bias = read_array(d, "bias")?;
        let params = NetworkParams { n_side, weight, bias, glow };
        params.validate()?;
        Ok(Self {
            params,
            activation,
            fingerprint,
        })
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let file = File::create(path.as_ref())?;
    ckpt.to_writer(BufWriter::new(file))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let file = File::open(path.as_ref())?;
    Checkpoint::from_reader(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::net_init;

    fn sample() -> Checkpoint {
        let mut params = net_init(9, 3);
        params.bias[4] = -0.25;
        params.glow = GlowParams::new(0.7, 1.3);
        Checkpoint {
            params,
            activation: Activation::Glow,
            fingerprint: "0123456789abcdef".into(),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let mut buf = Vec::new();
        c.to_writer(&mut buf).unwrap();
        let back = Checkpoint::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.params.weight.iter().zip(&c.params.weight) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        write_checkpoint(&path, &sample()).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), sample());
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        sample().to_writer(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_reader(bad.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 3];
        assert!(Checkpoint::from_reader(truncated).is_err());
    }

    #[test]
    fn fingerprint_guard() {
        let c = sample();
        assert!(c.check_fingerprint("0123456789abcdef").is_ok());
        assert!(matches!(c.check_fingerprint("ffff"), Err(Error::Fingerprint { .. })));
    }
}
