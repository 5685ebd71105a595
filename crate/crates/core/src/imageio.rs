//! File formats: 8-bit RGB images, single-channel PFM depth, 16-bit PNG depth.
//!
//! PFM (`Pf`) files are written little-endian (negative scale) with rows
//! stored bottom-to-top, as the format requires. Reading accepts either
//! byte order; the magnitude of the scale field is ignored.
//!
//! 16-bit PNG depth stores `round(meters / depth_scale)`; code 0 means
//! "no measurement" and decodes to NaN.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use thiserror::Error;

use crate::image_formation::DepthMap;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl ImageIoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ImageIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, message: impl Into<String>) -> Self {
        ImageIoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    fn image(path: &Path, source: image::ImageError) -> Self {
        ImageIoError::Image {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Packed 8-bit RGB pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8 {
    pub width: usize,
    pub height: usize,
    pub bytes: Vec<u8>,
}

pub fn read_rgb8(path: &Path) -> Result<Rgb8, ImageIoError> {
    let img = image::open(path).map_err(|e| ImageIoError::image(path, e))?.into_rgb8();
    Ok(Rgb8 {
        width: img.width() as usize,
        height: img.height() as usize,
        bytes: img.into_raw(),
    })
}

/// Encodes RGB8 as PNG bytes. Output is a deterministic function of the pixels.
pub fn encode_png_rgb8(img: &Rgb8) -> Result<Vec<u8>, image::ImageError> {
    let mut buf = Vec::new();
    PngEncoder::new_with_quality(&mut buf, CompressionType::Fast, FilterType::Sub).write_image(
        &img.bytes,
        img.width as u32,
        img.height as u32,
        ExtendedColorType::Rgb8,
    )?;
    Ok(buf)
}

pub fn write_png_rgb8(path: &Path, img: &Rgb8) -> Result<(), ImageIoError> {
    let bytes = encode_png_rgb8(img).map_err(|e| ImageIoError::image(path, e))?;
    write_atomic(path, &bytes)
}

/// Writes via a sibling temporary file and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ImageIoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| ImageIoError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| ImageIoError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ImageIoError::io(path, e))
}

pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in depth.values().chunks(w).rev() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<(), ImageIoError> {
    write_atomic(path, &encode_pfm(depth))
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<DepthMap, ImageIoError> {
    // Header: three whitespace-separated tokens followed by one whitespace byte.
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageIoError::format(path, "truncated PFM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| ImageIoError::format(path, "non-ASCII PFM header"))?);
    }
    pos += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(ImageIoError::format(path, "3-channel PFM is not a depth map")),
        other => return Err(ImageIoError::format(path, format!("bad PFM magic `{other}`"))),
    }
    let parse_dim = |s: &str| -> Result<usize, ImageIoError> {
        s.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| ImageIoError::format(path, format!("bad PFM dimension `{s}`")))
    };
    let w = parse_dim(tokens[1])?;
    let h = parse_dim(tokens[2])?;
    let scale: f64 = tokens[3]
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| ImageIoError::format(path, format!("bad PFM scale `{}`", tokens[3])))?;
    let little = scale < 0.0;
    let payload = bytes.get(pos..).unwrap_or_default();
    if payload.len() != w * h * 4 {
        return Err(ImageIoError::format(
            path,
            format!("expected {} payload bytes, found {}", w * h * 4, payload.len()),
        ));
    }
    let mut data = vec![0.0f64; w * h];
    for (src_row, dst_row) in payload.chunks_exact(w * 4).zip(data.chunks_mut(w).rev()) {
        for (b, d) in src_row.chunks_exact(4).zip(dst_row) {
            let raw = [b[0], b[1], b[2], b[3]];
            *d = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) } as f64;
        }
    }
    DepthMap::new(w, h, data).map_err(|e| ImageIoError::format(path, e.to_string()))
}

pub fn read_pfm(path: &Path) -> Result<DepthMap, ImageIoError> {
    let bytes = fs::read(path).map_err(|e| ImageIoError::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn read_png_depth16(path: &Path, depth_scale: f64) -> Result<DepthMap, ImageIoError> {
    let img = image::open(path).map_err(|e| ImageIoError::image(path, e))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        _ => return Err(ImageIoError::format(path, "depth PNG must be 16-bit single channel")),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .into_raw()
        .into_iter()
        .map(|code| if code == 0 { f64::NAN } else { code as f64 * depth_scale })
        .collect();
    DepthMap::new(w, h, data).map_err(|e| ImageIoError::format(path, e.to_string()))
}

pub fn write_png_depth16(path: &Path, depth: &DepthMap, depth_scale: f64) -> Result<(), ImageIoError> {
    let codes: Vec<u16> = depth
        .values()
        .iter()
        .map(|&v| {
            if DepthMap::is_valid_value(v) {
                (v / depth_scale).round().clamp(1.0, u16::MAX as f64) as u16
            } else {
                0
            }
        })
        .collect();
    let mut buf = Vec::new();
    let bytes: Vec<u8> = codes.iter().flat_map(|c| c.to_ne_bytes()).collect();
    PngEncoder::new(&mut buf)
        .write_image(&bytes, depth.width() as u32, depth.height() as u32, ExtendedColorType::L16)
        .map_err(|e| ImageIoError::image(path, e))?;
    write_atomic(path, &buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthFormat {
    Pfm,
    Png16,
}

impl DepthFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pfm" => Some(DepthFormat::Pfm),
            "png" => Some(DepthFormat::Png16),
            _ => None,
        }
    }
}

/// Reads a depth file, dispatching on its extension.
pub fn read_depth(path: &Path, depth_scale: f64) -> Result<DepthMap, ImageIoError> {
    match DepthFormat::from_path(path) {
        Some(DepthFormat::Pfm) => read_pfm(path),
        Some(DepthFormat::Png16) => read_png_depth16(path, depth_scale),
        None => Err(ImageIoError::format(path, "unsupported depth format (expected .pfm or .png)")),
    }
}

pub fn write_depth(path: &Path, depth: &DepthMap, depth_scale: f64) -> Result<(), ImageIoError> {
    match DepthFormat::from_path(path) {
        Some(DepthFormat::Pfm) => write_pfm(path, depth),
        Some(DepthFormat::Png16) => write_png_depth16(path, depth, depth_scale),
        None => Err(ImageIoError::format(path, "unsupported depth format (expected .pfm or .png)")),
    }
}

/// Writes `lines` as newline-terminated text through a buffered writer.
pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<(), ImageIoError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| ImageIoError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| ImageIoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(|e| ImageIoError::io(path, e))?;
    }
    w.flush().map_err(|e| ImageIoError::io(path, e))
}
