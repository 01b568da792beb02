//! 16-bit binary portable graymap (P5) with a luminance scale comment.
//!
//! Files carry a `# cd_per_level=<scale>` comment; one gray level equals
//! `scale` cd/m². Files without the comment are read with a scale of 1.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::stimuli::LuminanceImage;

const MAXVAL: u16 = 65535;
const SCALE_KEY: &str = "cd_per_level=";
/// Scale used whenever the brightest pixel fits, so integral cd/m² survive a round trip.
const FINE_SCALE: f64 = 1.0 / 256.0;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed PGM: {0}")]
    Format(String),
}

pub fn write_pgm<W: Write>(mut out: W, image: &LuminanceImage) -> Result<(), PgmError> {
    let max = image.data().iter().cloned().fold(0.0f64, f64::max);
    let scale = if max <= f64::from(MAXVAL) * FINE_SCALE {
        FINE_SCALE
    } else {
        max / f64::from(MAXVAL)
    };
    write!(
        out,
        "P5\n# {SCALE_KEY}{scale}\n{} {}\n{MAXVAL}\n",
        image.width(),
        image.height()
    )?;
    let mut bytes = Vec::with_capacity(image.data().len() * 2);
    for &v in image.data() {
        let level = (v / scale).round().clamp(0.0, f64::from(MAXVAL)) as u16;
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

/// Writes an arbitrary real field, linearly mapped so that `[min, max]` spans the gray range.
pub fn write_field_pgm<W: Write>(
    mut out: W,
    width: usize,
    height: usize,
    values: &[f64],
) -> Result<(), PgmError> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(
        out,
        "P5\n# offset={lo} {SCALE_KEY}{}\n{width} {height}\n{MAXVAL}\n",
        span / f64::from(MAXVAL)
    )?;
    let mut bytes = Vec::with_capacity(values.len() * 2);
    for &v in values {
        let level = ((v - lo) / span * f64::from(MAXVAL)).round() as u16;
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_pgm<R: Read>(mut input: R) -> Result<LuminanceImage, PgmError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;

    let mut pos = 0usize;
    let mut scale = 1.0f64;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= buf.len() {
            return Err(PgmError::Format("truncated header".into()));
        }
        if buf[pos] == b'#' {
            let end = buf[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(buf.len(), |p| pos + p);
            let comment = String::from_utf8_lossy(&buf[pos + 1..end]);
            for word in comment.split_whitespace() {
                if let Some(v) = word.strip_prefix(SCALE_KEY) {
                    scale = v
                        .parse()
                        .map_err(|_| PgmError::Format(format!("bad scale {v:?}")))?;
                }
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;

    if tokens[0] != "P5" {
        return Err(PgmError::Format(format!(
            "unsupported magic {:?}",
            tokens[0]
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| PgmError::Format(format!("bad header field {s:?}")))
    };
    let width = parse(&tokens[1])?;
    let height = parse(&tokens[2])?;
    let maxval = parse(&tokens[3])?;
    if maxval == 0 || maxval > usize::from(MAXVAL) {
        return Err(PgmError::Format(format!("bad maxval {maxval}")));
    }
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let raster = buf
        .get(pos..pos + width * height * bytes_per)
        .ok_or_else(|| PgmError::Format("truncated raster".into()))?;
    let data = if bytes_per == 2 {
        raster
            .chunks_exact(2)
            .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])) * scale)
            .collect()
    } else {
        raster.iter().map(|&b| f64::from(b) * scale).collect()
    };
    LuminanceImage::new(width, height, data)
        .map_err(|e| PgmError::Format(format!("invalid image: {e}")))
}
