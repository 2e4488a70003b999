//! Grayscale images, binary PGM I/O and the resampling primitives used by
//! screening and the synthetic benchmark.
//!
//! Coordinates are 0-based with `x` the column and `y` the row. Resampling
//! uses half-pixel-centred coordinates and rounds half up.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit grayscale image stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant image. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at a continuous pixel-centre coordinate, clamped to
    /// the image edge.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }
}

/// Round half up and clamp to the 8-bit range.
#[inline]
pub fn quantize_intensity(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Parse a binary (P5) PGM byte stream.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(Error::MalformedHeader("file too short".into()));
    }
    match &bytes[..2] {
        b"P5" => {}
        b"P1" | b"P2" | b"P3" | b"P4" | b"P6" | b"P7" => {
            return Err(Error::UnsupportedFormat(format!(
                "magic {:?}, only binary P5 is supported",
                String::from_utf8_lossy(&bytes[..2])
            )))
        }
        _ => return Err(Error::MalformedHeader("missing P5 magic".into())),
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each header token
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        if i == 0 && pos == 2 {
            return Err(Error::MalformedHeader("no whitespace after magic".into()));
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader(format!(
                "expected a number at byte {start}"
            )));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("number out of range: {text}")))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 {
        return Err(Error::MalformedHeader("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(Error::MaxvalTooLarge(maxval));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::MalformedHeader(
                "expected a single whitespace after maxval".into(),
            ))
        }
    }
    let (w, h) = (width as usize, height as usize);
    if w == 0 || h == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    let need = w
        .checked_mul(h)
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(Error::MalformedHeader(format!(
            "truncated raster: expected {need} bytes, found {}",
            body.len()
        )));
    }
    GrayImage::new(w, h, body[..need].to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.data);
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(img))
        .map_err(|e| Error::io(path, e))
}

/// Bilinear resize with half-pixel-centred sample mapping.
pub fn resize_bilinear(img: &GrayImage, w: usize, h: usize) -> GrayImage {
    assert!(w >= 1 && h >= 1, "target size must be at least 1x1");
    if w == img.width && h == img.height {
        return img.clone();
    }
    let sx = img.width as f64 / w as f64;
    let sy = img.height as f64 / h as f64;
    GrayImage::from_fn(w, h, |x, y| {
        let fx = (x as f64 + 0.5) * sx - 0.5;
        let fy = (y as f64 + 0.5) * sy - 0.5;
        quantize_intensity(img.sample_bilinear(fx, fy))
    })
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub fn sin_cos_deg(angle: f64) -> (f64, f64) {
    let a = angle.rem_euclid(360.0);
    if a == 0.0 {
        (0.0, 1.0)
    } else if a == 90.0 {
        (1.0, 0.0)
    } else if a == 180.0 {
        (0.0, -1.0)
    } else if a == 270.0 {
        (-1.0, 0.0)
    } else {
        a.to_radians().sin_cos()
    }
}

/// Rotate about the image centre, keeping the input dimensions. Returns the
/// rotated image and a mask that is `true` where the output was sampled from
/// the source rather than filled.
///
/// Positive angles turn the content clockwise on screen (y points down).
pub fn rotate_with_mask(img: &GrayImage, angle: f64, fill: u8) -> (GrayImage, Vec<bool>) {
    let (s, c) = sin_cos_deg(angle);
    let cx = (img.width as f64 - 1.0) / 2.0;
    let cy = (img.height as f64 - 1.0) / 2.0;
    let xmax = img.width as f64 - 0.5;
    let ymax = img.height as f64 - 0.5;
    let mut mask = Vec::with_capacity(img.width * img.height);
    let out = GrayImage::from_fn(img.width, img.height, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let sx = cx + c * dx + s * dy;
        let sy = cy - s * dx + c * dy;
        if sx < -0.5 || sy < -0.5 || sx > xmax || sy > ymax {
            mask.push(false);
            fill
        } else {
            mask.push(true);
            quantize_intensity(img.sample_bilinear(sx, sy))
        }
    });
    (out, mask)
}

pub fn rotate(img: &GrayImage, angle: f64, fill: u8) -> GrayImage {
    rotate_with_mask(img, angle, fill).0
}

/// Offset of a centred window of length `inner` inside `outer`; odd residuals
/// leave the extra pixel on the bottom/right side.
#[inline]
pub fn center_offset(outer: usize, inner: usize) -> usize {
    (outer - inner) / 2
}

pub fn crop(img: &GrayImage, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage> {
    if w == 0 || h == 0 || x0 + w > img.width || y0 + h > img.height {
        return Err(Error::OutOfBounds(format!(
            "crop {w}x{h} at ({x0},{y0}) from {}x{}",
            img.width, img.height
        )));
    }
    let mut data = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        let row = y * img.width;
        data.extend_from_slice(&img.data[row + x0..row + x0 + w]);
    }
    GrayImage::new(w, h, data)
}

/// The `w`×`h` window whose centre is nearest the image centre, biased to the
/// top-left when the residual is odd.
pub fn crop_center(img: &GrayImage, w: usize, h: usize) -> Result<GrayImage> {
    if w > img.width || h > img.height {
        return Err(Error::OutOfBounds(format!(
            "crop {w}x{h} exceeds image {}x{}",
            img.width, img.height
        )));
    }
    crop(
        img,
        center_offset(img.width, w),
        center_offset(img.height, h),
        w,
        h,
    )
}

/// Population standard deviation of all samples.
pub fn std_dev(img: &GrayImage) -> f64 {
    let n = img.data.len() as u128;
    let (s1, s2) = img.data.iter().fold((0u128, 0u128), |(a, b), &v| {
        let v = v as u128;
        (a + v, b + v * v)
    });
    // n·Σx² − (Σx)² is exact in integers
    let num = n * s2 - s1 * s1;
    ((num as f64) / (n as f64 * n as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random())
    }

    #[test]
    fn decode_tiny_p5() {
        let img = decode_pgm(b"P5\n2 2\n255\n\x01\x02\x03\x04").unwrap();
        assert_eq!(img, GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap());
    }

    #[test]
    fn decode_header_comments() {
        let img = decode_pgm(b"P5 # c\n# another\n1 1 # x\n255\n\x07").unwrap();
        assert_eq!(img.data(), &[7]);
    }

    #[test]
    fn decode_low_maxval_keeps_raw_samples() {
        let img = decode_pgm(b"P5\n2 1\n15\n\x0f\x03").unwrap();
        assert_eq!(img.data(), &[15, 3]);
    }

    #[test]
    fn decode_errors_are_distinct() {
        assert!(matches!(
            decode_pgm(b"P6\n1 1\n255\n\0\0\0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n65535\n\0\0"),
            Err(Error::MaxvalTooLarge(65535))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\0"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5\nx 2\n255\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pgm(b"GIF89a"),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_pgm("/nonexistent/dir/x.pgm"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn save_single_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.pgm");
        let img = GrayImage::new(1, 1, vec![0]).unwrap();
        save_pgm(&img, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes, b"P5\n1 1\n255\n\0");
        assert_eq!(load_pgm(&p).unwrap(), img);
    }

    #[test]
    fn save_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for (i, img) in [
            GrayImage::filled(8, 8, 255),
            random_image(31, 17, 7),
            random_image(64, 64, 8),
        ]
        .into_iter()
        .enumerate()
        {
            let p = dir.path().join(format!("{i}.pgm"));
            save_pgm(&img, &p).unwrap();
            assert_eq!(load_pgm(&p).unwrap(), img);
        }
    }

    #[test]
    fn unwritable_path_errors() {
        let img = GrayImage::filled(2, 2, 1);
        assert!(matches!(
            save_pgm(&img, "/nonexistent/dir/out.pgm"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn resize_constant_and_identity() {
        let c = GrayImage::filled(7, 5, 57);
        for (w, h) in [(1, 1), (3, 9), (14, 10), (100, 3)] {
            assert!(resize_bilinear(&c, w, h).data().iter().all(|&v| v == 57));
        }
        let r = random_image(13, 9, 1);
        assert_eq!(resize_bilinear(&r, 13, 9), r);
    }

    #[test]
    fn resize_2x2_to_4x4_matches_hand_formula() {
        let img = GrayImage::new(2, 2, vec![0, 255, 0, 255]).unwrap();
        let out = resize_bilinear(&img, 4, 4);
        // source x for output columns: -0.25, 0.25, 0.75, 1.25 -> clamp to [0,1]
        let weights = [0.0, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for (x, w) in weights.iter().enumerate() {
                let expected = (255.0 * w + 0.5_f64).floor() as u8;
                assert_eq!(out.get(x, y), expected, "({x},{y})");
            }
        }
        assert_eq!(out.data()[..4], [0, 64, 191, 255]);
    }

    #[test]
    fn rotate_identity_and_full_turn() {
        let img = random_image(20, 15, 3);
        assert_eq!(rotate(&img, 0.0, 0), img);
        let full = rotate(&img, 360.0, 0);
        for (a, b) in full.data().iter().zip(img.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn rotate_quarter_turn_permutes_disk() {
        let n = 33;
        let c = (n as f64 - 1.0) / 2.0;
        let img = GrayImage::from_fn(n, n, |x, y| {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            if d < 10.0 {
                200
            } else {
                (x * 3 + y) as u8
            }
        });
        let rot = rotate(&img, 90.0, 0);
        for y in 0..n {
            for x in 0..n {
                // out(x,y) = src(cx + dy, cy - dx)
                let sx = y;
                let sy = n - 1 - x;
                let diff = rot.get(x, y) as i32 - img.get(sx, sy) as i32;
                assert!(diff.abs() <= 1, "({x},{y})");
            }
        }
    }

    #[test]
    fn rotate_fills_outside() {
        let img = GrayImage::filled(10, 4, 100);
        let (out, mask) = rotate_with_mask(&img, 90.0, 7);
        assert_eq!(out.get(0, 0), 7);
        assert!(!mask[0]);
        assert_eq!(out.get(5, 2), 100);
    }

    #[test]
    fn crop_center_conventions() {
        let img = random_image(4, 4, 9);
        assert_eq!(crop_center(&img, 4, 4).unwrap(), img);
        let c = crop_center(&img, 2, 2).unwrap();
        assert_eq!(
            c.data(),
            &[img.get(1, 1), img.get(2, 1), img.get(1, 2), img.get(2, 2)]
        );
        assert!(crop_center(&img, 5, 1).is_err());

        let big = random_image(33, 33, 10);
        let c = crop_center(&big, 17, 17).unwrap();
        for y in 0..17 {
            for x in 0..17 {
                assert_eq!(c.get(x, y), big.get(x + 8, y + 8));
            }
        }
    }

    #[test]
    fn std_dev_cases() {
        assert_eq!(std_dev(&GrayImage::filled(5, 3, 9)), 0.0);
        let half = GrayImage::from_fn(4, 4, |x, _| if x < 2 { 0 } else { 255 });
        assert!((std_dev(&half) - 127.5).abs() < 1e-12);

        let img = random_image(16, 16, 11);
        let n = img.data().len() as f64;
        let mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = img
            .data()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let s = std_dev(&img);
        assert!((s - var.sqrt()).abs() <= 1e-9 * var.sqrt());
    }
}
