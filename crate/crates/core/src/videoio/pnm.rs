//! Netpbm (P5/P6) and PNG frame I/O.

use std::fs;
use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Read a grayscale frame scaled to `[0, 1]`. RGB inputs are reduced to
/// gray with BT.601 luma weights.
pub fn read_frame(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(path, &bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(path, &bytes)
    } else {
        Err(Error::format(path, "not a binary PGM/PPM or PNG file"))
    }
}

/// Write a frame as 8-bit binary PGM. Values are clamped to `[0, 1]`.
pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    let (h, w) = frame.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w);
    for r in 0..h {
        for c in 0..w {
            out.push((frame[(r, c)].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Masks are PGM files with 0 for background and 255 for foreground.
pub fn write_mask(path: &Path, height: usize, width: usize, mask: &[bool]) -> Result<()> {
    assert_eq!(mask.len(), height * width);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for r in 0..height {
        for c in 0..width {
            out.push(if mask[r + c * height] { 255 } else { 0 });
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a mask written by [`write_mask`]; any nonzero sample is foreground.
/// Returns `(height, width, column-major mask)`.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let frame = read_frame(path)?;
    Ok((
        frame.nrows(),
        frame.ncols(),
        frame.as_slice().iter().map(|&v| v > 0.0).collect(),
    ))
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format(path, "header value out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(path, "malformed header"));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_start: pos + 1,
    })
}

fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<Frame> {
    let h = parse_header(path, bytes)?;
    if h.maxval == 0 || h.maxval > 65535 {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            detail: format!("maxval {}", h.maxval),
        });
    }
    let channels = if &h.magic == b"P6" { 3 } else { 1 };
    let sample_bytes = if h.maxval < 256 { 1 } else { 2 };
    let needed = h.width * h.height * channels * sample_bytes;
    let raster = &bytes[h.data_start..];
    if raster.len() < needed {
        return Err(Error::format(
            path,
            format!("raster has {} bytes, expected {needed}", raster.len()),
        ));
    }
    let sample = |i: usize| -> f64 {
        let v = if sample_bytes == 1 {
            raster[i] as usize
        } else {
            (raster[2 * i] as usize) << 8 | raster[2 * i + 1] as usize
        };
        v as f64 / h.maxval as f64
    };
    Ok(Frame::from_fn(h.height, h.width, |r, c| {
        let i = (r * h.width + c) * channels;
        if channels == 1 {
            sample(i)
        } else {
            LUMA[0] * sample(i) + LUMA[1] * sample(i + 1) + LUMA[2] * sample(i + 2)
        }
    }))
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Frame> {
    use image::DynamicImage;
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let frame = match img {
        DynamicImage::ImageLuma8(buf) => {
            Frame::from_fn(h, w, |r, c| buf.get_pixel(c as u32, r as u32).0[0] as f64 / 255.0)
        }
        DynamicImage::ImageLuma16(buf) => {
            Frame::from_fn(h, w, |r, c| buf.get_pixel(c as u32, r as u32).0[0] as f64 / 65535.0)
        }
        DynamicImage::ImageRgb8(buf) => Frame::from_fn(h, w, |r, c| {
            luma8(&buf.get_pixel(c as u32, r as u32).0)
        }),
        DynamicImage::ImageRgba8(buf) => Frame::from_fn(h, w, |r, c| {
            luma8(&buf.get_pixel(c as u32, r as u32).0)
        }),
        other => {
            return Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                detail: format!("{:?}", other.color()),
            })
        }
    };
    Ok(frame)
}

fn luma8(px: &[u8]) -> f64 {
    LUMA.iter()
        .zip(px)
        .map(|(w, &v)| w * v as f64 / 255.0)
        .sum()
}
