//! Image output: grayscale PGM heatmaps, an optional colour-ramp PPM, and
//! bilevel PBM masks.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::em::PermittivityMap;
use crate::error::{Error, Result};
use crate::subregion::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[default]
    Re,
    Im,
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "re" | "real" => Ok(Channel::Re),
            "im" | "imag" => Ok(Channel::Im),
            other => Err(Error::Config(format!("unknown channel '{other}', expected re or im"))),
        }
    }
}

/// Value range of a rendered map, also written to the `.txt` sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderStats {
    pub channel: Channel,
    pub min: f64,
    pub max: f64,
}

/// Linear 8-bit levels: `min` maps to 0 and `max` to 255. A constant map
/// renders as all zeros.
fn levels(values: &[f64]) -> (Vec<u8>, f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let px = values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    (px, min, max)
}

/// Black, blue, green, yellow, white.
fn ramp(level: u8) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 255.0],
        [0.0, 200.0, 0.0],
        [255.0, 230.0, 0.0],
        [255.0, 255.0, 255.0],
    ];
    let t = level as f64 / 255.0 * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (STOPS[k][c] + f * (STOPS[k + 1][c] - STOPS[k][c])).round() as u8;
    }
    out
}

/// Binary PGM bytes for one channel of `map`.
pub fn map_to_pgm(map: &PermittivityMap, channel: Channel) -> (Vec<u8>, RenderStats) {
    let n = map.n_side();
    let values: Vec<f64> = map
        .values
        .iter()
        .map(|z| match channel {
            Channel::Re => z.re,
            Channel::Im => z.im,
        })
        .collect();
    let (px, min, max) = levels(&values);
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend_from_slice(&px);
    (out, RenderStats { channel, min, max })
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// Writes `path` as a PGM heatmap plus a `.txt` sidecar with the value
/// range, and a `.ppm` colour version when `color` is set.
pub fn render_map(map: &PermittivityMap, path: &Path, channel: Channel, color: bool) -> Result<RenderStats> {
    let (pgm, stats) = map_to_pgm(map, channel);
    std::fs::write(path, &pgm)?;
    let mut note = String::new();
    let label = match channel {
        Channel::Re => "re",
        Channel::Im => "im",
    };
    let _ = writeln!(note, "channel {label}");
    let _ = writeln!(note, "min {:e}", stats.min);
    let _ = writeln!(note, "max {:e}", stats.max);
    std::fs::write(with_extension(path, "txt"), note)?;
    if color {
        let n = map.n_side();
        let header_len = pgm.len() - n * n;
        let mut ppm = format!("P6\n{n} {n}\n255\n").into_bytes();
        for &l in &pgm[header_len..] {
            ppm.extend_from_slice(&ramp(l));
        }
        std::fs::write(with_extension(path, "ppm"), ppm)?;
    }
    Ok(stats)
}

/// Plain PBM text: 1 for active cells.
pub fn mask_to_pbm(mask: &BinaryMask) -> String {
    let n = mask.n_side();
    let mut s = format!("P1\n{n} {n}\n");
    for i in 0..n {
        let row: Vec<&str> = (0..n).map(|j| if mask.get(i, j) { "1" } else { "0" }).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_pbm<W: Write>(writer: W, mask: &BinaryMask) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(mask_to_pbm(mask).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn render_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    write_pbm(File::create(path)?, mask)
}

/// Reads a plain (P1) PBM written by [`write_pbm`]. Comments after `#` are
/// skipped; the image must be square.
pub fn read_pbm<R: Read>(mut reader: R, name: &str) -> Result<BinaryMask> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut tokens = text.lines().enumerate().flat_map(|(k, l)| {
        let body = l.split('#').next().unwrap_or("");
        body.split_whitespace().map(move |t| (k as u64 + 1, t))
    });
    let mut next = |what: &str| {
        tokens
            .next()
            .ok_or_else(|| Error::parse(name, 0, format!("unexpected end of file, expected {what}")))
    };
    let (line, magic) = next("magic")?;
    if magic != "P1" {
        return Err(Error::parse(name, line, format!("expected P1, got '{magic}'")));
    }
    let mut dim = |what: &str| -> Result<usize> {
        let (line, t) = next(what)?;
        t.parse().map_err(|_| Error::parse(name, line, format!("bad {what} '{t}'")))
    };
    let (w, h) = (dim("width")?, dim("height")?);
    if w != h {
        return Err(Error::parse(name, line, format!("mask must be square, got {w}x{h}")));
    }
    let mut bits = Vec::with_capacity(w * h);
    while bits.len() < w * h {
        let (line, t) = next("pixel")?;
        // Plain PBM allows pixels without separating whitespace.
        for c in t.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return Err(Error::parse(name, line, format!("bad pixel '{c}'"))),
            }
        }
    }
    if bits.len() != w * h {
        return Err(Error::parse(name, 0, "pixel count does not match the header"));
    }
    if let Some((line, t)) = tokens.next() {
        return Err(Error::parse(name, line, format!("trailing data '{t}'")));
    }
    BinaryMask::from_flat(w, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use num_complex::Complex64;

    #[test]
    fn constant_map_is_uniform() {
        let (pgm, stats) = map_to_pgm(&PermittivityMap::background(5), Channel::Re);
        assert!(pgm.starts_with(b"P5\n5 5\n255\n"));
        let px = &pgm[pgm.len() - 25..];
        assert!(px.iter().all(|&p| p == px[0]));
        assert_eq!((stats.min, stats.max), (1.0, 1.0));
    }

    #[test]
    fn known_map_scales_linearly() {
        let map = PermittivityMap::from_values(array![
            [Complex64::new(1.0, 0.0), Complex64::new(2.0, -1.0)],
            [Complex64::new(1.5, -0.5), Complex64::new(1.25, 0.0)]
        ])
        .unwrap();
        let (pgm, _) = map_to_pgm(&map, Channel::Re);
        // (v - 1) / 1 * 255, rounded.
        assert_eq!(&pgm[pgm.len() - 4..], &[0, 255, 128, 64]);
        let (pgm, stats) = map_to_pgm(&map, Channel::Im);
        assert_eq!(&pgm[pgm.len() - 4..], &[255, 0, 128, 255]);
        assert_eq!((stats.min, stats.max), (-1.0, 0.0));
    }

    #[test]
    fn sidecar_and_color_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("eps.pgm");
        let mut map = PermittivityMap::background(3);
        map.values[[1, 1]] = Complex64::new(2.5, 0.0);
        render_map(&map, &p, Channel::Re, true).unwrap();
        let note = std::fs::read_to_string(dir.path().join("eps.txt")).unwrap();
        assert!(note.contains("min 1e0") && note.contains("max 2.5e0"), "{note}");
        let ppm = std::fs::read(dir.path().join("eps.ppm")).unwrap();
        assert_eq!(ppm.len(), "P6\n3 3\n255\n".len() + 27);
    }

    #[test]
    fn mask_is_bilevel_and_round_trips() {
        let mask = BinaryMask::from_flat(3, vec![true, false, false, false, true, true, false, false, true]).unwrap();
        let text = mask_to_pbm(&mask);
        assert_eq!(text, "P1\n3 3\n1 0 0\n0 1 1\n0 0 1\n");
        assert_eq!(read_pbm(text.as_bytes(), "m.pbm").unwrap(), mask);
        let packed = "P1\n# comment\n3 3\n100011\n001\n";
        assert_eq!(read_pbm(packed.as_bytes(), "m.pbm").unwrap(), mask);
    }

    #[test]
    fn bad_pbm_names_the_line() {
        let err = read_pbm("P1\n2 2\n1 0\n0 x\n".as_bytes(), "m.pbm").unwrap_err();
        assert!(err.to_string().starts_with("m.pbm:4:"), "{err}");
        assert!(read_pbm("P1\n2 2\n1 0\n".as_bytes(), "m.pbm").is_err());
    }
}
