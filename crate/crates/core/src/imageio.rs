//! Tile files: binary PPM (P6, maxval 255) and PNG.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::render::RasterTile;

const MAX_DIM: u64 = 1 << 14;

pub fn encode_ppm(tile: &RasterTile) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", tile.width(), tile.height()).into_bytes();
    out.extend_from_slice(tile.pixels());
    out
}

/// Decodes any P6 image with maxval 255 into `(width, height, rgb)`.
pub fn decode_ppm_raw(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let bad = |why: &str| Error::Image(format!("ppm: {why}"));
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(bad("missing P6 magic"));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // Whitespace and comments before each header number.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos || pos - start > 6 {
            return Err(bad("bad header number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos]).unwrap().parse().map_err(|_| bad("bad header number"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("header must end in one whitespace byte")),
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval} unsupported, expected 255")));
    }
    if w == 0 || h == 0 || w > MAX_DIM || h > MAX_DIM {
        return Err(bad(&format!("dimensions {w}x{h} out of range")));
    }
    let need = (w * h * 3) as usize;
    let data = &bytes[pos..];
    if data.len() != need {
        return Err(bad(&format!("{} pixel bytes, expected {need}", data.len())));
    }
    Ok((w as u32, h as u32, data.to_vec()))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RasterTile> {
    let (w, h, px) = decode_ppm_raw(bytes)?;
    RasterTile::from_rgb(w, h, px)
}

pub fn encode_png(tile: &RasterTile) -> Result<Vec<u8>> {
    let img = image::RgbImage::from_raw(tile.width(), tile.height(), tile.pixels().to_vec())
        .ok_or_else(|| Error::Image("png: buffer size".into()))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::Image(format!("png: {e}")))?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<RasterTile> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("png: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    RasterTile::from_rgb(w, h, img.into_raw())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TileFormat {
    Ppm,
    Png,
}

impl TileFormat {
    pub fn from_path(path: &Path) -> Option<TileFormat> {
        match path.extension()?.to_str()? {
            "ppm" => Some(TileFormat::Ppm),
            "png" => Some(TileFormat::Png),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TileFormat::Ppm => "ppm",
            TileFormat::Png => "png",
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            TileFormat::Ppm => "image/x-portable-pixmap",
            TileFormat::Png => "image/png",
        }
    }
}

pub fn encode_tile(tile: &RasterTile, format: TileFormat) -> Result<Vec<u8>> {
    match format {
        TileFormat::Ppm => Ok(encode_ppm(tile)),
        TileFormat::Png => encode_png(tile),
    }
}

pub fn decode_tile(bytes: &[u8], format: TileFormat) -> Result<RasterTile> {
    match format {
        TileFormat::Ppm => decode_ppm(bytes),
        TileFormat::Png => decode_png(bytes),
    }
}

/// Reads a tile, attaching the path to any failure.
pub fn read_tile(path: &Path) -> Result<RasterTile> {
    let file_err = |reason: String| Error::File { path: path.to_path_buf(), reason };
    let format = TileFormat::from_path(path).ok_or_else(|| file_err("not a .ppm or .png file".into()))?;
    let bytes = std::fs::read(path).map_err(|e| file_err(e.to_string()))?;
    decode_tile(&bytes, format).map_err(|e| file_err(e.to_string()))
}

pub fn write_tile(path: &Path, tile: &RasterTile) -> Result<Vec<u8>> {
    let format = TileFormat::from_path(path)
        .ok_or_else(|| Error::File { path: path.to_path_buf(), reason: "not a .ppm or .png file".into() })?;
    let bytes = encode_tile(tile, format)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    std::fs::write(path, &bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(bytes)
}
