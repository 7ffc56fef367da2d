//! Small software-raster toolkit: RGB images, depth maps, binary PPM (P6)
//! and raw `f32` depth serialization, convex polygon fill, and box outlines.

use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed ppm: {0}")]
    BadPpm(String),
    #[error("depth payload has {got} values, expected {expected}")]
    BadDepth { expected: usize, got: usize },
}

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; (width * height * 3) as usize],
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = ((y * self.width + x) * 3) as usize;
            self.data[i..i + 3].copy_from_slice(&rgb);
        }
    }

    /// Binary P6 bytes: `P6\n<w> <h>\n255\n` followed by raw RGB.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Byte offset of the pixel payload within the P6 encoding.
    pub fn ppm_header_len(&self) -> usize {
        format!("P6\n{} {}\n255\n", self.width, self.height).len()
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<(), RasterError> {
        w.write_all(&self.to_ppm())?;
        Ok(())
    }

    /// Strict reader for the P6 layout this crate writes.
    pub fn read_ppm<R: Read>(mut r: R) -> Result<Self, RasterError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let header_end = bytes
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .map(|(i, _)| i)
            .nth(2)
            .ok_or_else(|| RasterError::BadPpm("missing header lines".into()))?;
        let header = std::str::from_utf8(&bytes[..header_end])
            .map_err(|_| RasterError::BadPpm("non-utf8 header".into()))?;
        let mut lines = header.lines();
        if lines.next() != Some("P6") {
            return Err(RasterError::BadPpm("not a P6 file".into()));
        }
        let dims = lines
            .next()
            .ok_or_else(|| RasterError::BadPpm("missing dimensions".into()))?;
        let mut parts = dims.split_whitespace();
        let width: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::BadPpm("bad width".into()))?;
        let height: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::BadPpm("bad height".into()))?;
        if lines.next() != Some("255") {
            return Err(RasterError::BadPpm("maxval must be 255".into()));
        }
        let data = bytes[header_end + 1..].to_vec();
        let expected = (width * height * 3) as usize;
        if data.len() != expected {
            return Err(RasterError::BadPpm(format!(
                "payload has {} bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Per-pixel normalized depth in `[0, 1]`, row-major `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![1.0; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    /// Little-endian raw `f32` bytes, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self, RasterError> {
        let expected = (width * height) as usize;
        if bytes.len() != expected * 4 {
            return Err(RasterError::BadDepth {
                expected,
                got: bytes.len() / 4,
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Fills a convex polygon given in floating-point pixel coordinates.
///
/// A pixel is painted when its center lies inside the polygon, scanning
/// pixel-center rows at `y + 0.5`. Vertex order may be either winding.
pub fn fill_convex_polygon(img: &mut RgbImage, pts: &[(f64, f64)], rgb: [u8; 3]) {
    if pts.len() < 3 {
        return;
    }
    let y_lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let row_start = (y_lo - 0.5).ceil().max(0.0) as i64;
    let row_end = ((y_hi - 0.5).floor() as i64).min(img.height as i64 - 1);
    for row in row_start..=row_end {
        let yc = row as f64 + 0.5;
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        let n = pts.len();
        for i in 0..n {
            let (x0, y0) = pts[i];
            let (x1, y1) = pts[(i + 1) % n];
            if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                let t = (yc - y0) / (y1 - y0);
                let x = x0 + t * (x1 - x0);
                x_lo = x_lo.min(x);
                x_hi = x_hi.max(x);
            }
        }
        if x_lo > x_hi {
            continue;
        }
        let col_start = (x_lo - 0.5).ceil().max(0.0) as i64;
        let col_end = ((x_hi - 0.5).floor() as i64).min(img.width as i64 - 1);
        for col in col_start..=col_end {
            img.put(col as u32, row as u32, rgb);
        }
    }
}

/// Draws a one-pixel rectangle outline at the rounded box coordinates.
pub fn draw_box_outline(img: &mut RgbImage, bounds: [f64; 4], rgb: [u8; 3]) {
    let [u_min, v_min, u_max, v_max] = bounds;
    let x0 = u_min.round().max(0.0) as i64;
    let y0 = v_min.round().max(0.0) as i64;
    let x1 = (u_max.round() as i64).min(img.width as i64 - 1);
    let y1 = (v_max.round() as i64).min(img.height as i64 - 1);
    if x0 > x1 || y0 > y1 {
        return;
    }
    for x in x0..=x1 {
        img.put(x as u32, y0 as u32, rgb);
        img.put(x as u32, y1 as u32, rgb);
    }
    for y in y0..=y1 {
        img.put(x0 as u32, y as u32, rgb);
        img.put(x1 as u32, y as u32, rgb);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trips() {
        let mut img = RgbImage::new(3, 2);
        img.put(0, 0, [255, 0, 0]);
        img.put(2, 1, [0, 128, 7]);
        let bytes = img.to_ppm();
        let back = RgbImage::read_ppm(&bytes[..]).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn ppm_header_len_matches_payload_offset() {
        let img = RgbImage::new(10, 7);
        let bytes = img.to_ppm();
        assert_eq!(bytes.len() - img.data.len(), img.ppm_header_len());
    }

    #[test]
    fn depth_round_trips() {
        let d = DepthMap {
            width: 2,
            height: 2,
            data: vec![0.0, 0.25, 0.5, 1.0],
        };
        let bytes = d.to_le_bytes();
        let back = DepthMap::from_le_bytes(2, 2, &bytes).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn polygon_fill_stays_inside_vertex_hull() {
        let mut img = RgbImage::new(20, 20);
        let pts = [(4.0, 3.0), (15.0, 5.0), (13.0, 16.0), (5.0, 14.0)];
        fill_convex_polygon(&mut img, &pts, [255, 255, 255]);
        let mut painted = 0;
        for y in 0..20 {
            for x in 0..20 {
                if img.get(x, y) != [0, 0, 0] {
                    painted += 1;
                    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                    assert!(cx >= 4.0 && cx <= 15.0 && cy >= 3.0 && cy <= 16.0);
                }
            }
        }
        assert!(painted > 20, "expected a solid fill, got {painted} pixels");
    }

    #[test]
    fn box_outline_lands_on_rounded_rows_and_columns() {
        let mut img = RgbImage::new(30, 30);
        draw_box_outline(&mut img, [5.4, 7.6, 20.2, 25.0], [9, 9, 9]);
        assert_eq!(img.get(5, 8), [9, 9, 9]); // left edge at round(5.4)
        assert_eq!(img.get(20, 8), [9, 9, 9]); // right edge at round(20.2)
        assert_eq!(img.get(10, 8), [9, 9, 9]); // top row at round(7.6)
        assert_eq!(img.get(10, 25), [9, 9, 9]); // bottom row
        assert_eq!(img.get(10, 12), [0, 0, 0]); // interior untouched
    }
}
