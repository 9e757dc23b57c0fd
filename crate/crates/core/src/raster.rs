//! Minimal grayscale image grid with the pixel operations used by the
//! augmentation and image-quality stages.
//!
//! Images are single-channel, 8-bit, row-major. Ingest and output use binary
//! PGM ("P5", maxval 255); conversion from camera formats happens upstream.
//! All operations are pure: they take a grid and return a new one, so callers
//! may parallelize per image without coordination.

use thiserror::Error;

/// Errors from grid construction, PGM parsing, and pixel operations.
#[derive(Debug, Error)]
pub enum RasterError {
    #[error("bad magic number (expected \"P5\")")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0} (must be <= 255)")]
    MaxvalTooLarge(u32),
    #[error("zero image dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("truncated pixel payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    DimensionMismatch {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("brightness factor {0} outside [-0.25, 0.25]")]
    BrightnessOutOfRange(f64),
    #[error("blur radius must be >= 1")]
    ZeroBlurRadius,
    #[error("grid {width}x{height} too small (operation needs at least 3x3)")]
    GridTooSmall { width: usize, height: usize },
    #[error("affine transform is not invertible (|det| = {0:e})")]
    SingularTransform(f64),
}

/// Determinant magnitude below which an affine transform counts as singular.
pub const MIN_AFFINE_DET: f64 = 1e-12;

/// A single-channel 8-bit image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LuminanceGrid {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl LuminanceGrid {
    /// Builds a grid from raw row-major pixels. Both dimensions must be
    /// positive and `pixels.len()` must equal `width * height`.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension { width, height });
        }
        if pixels.len() != width * height {
            return Err(RasterError::DimensionMismatch {
                len: pixels.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Constant-valued grid.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroDimension { width, height });
        }
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Pixel value at (x, y). Panics when out of bounds.
    pub fn get(&self, x: usize, y: usize) -> u8 {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        self.pixels[y * self.width + x]
    }

    /// Pixel value with coordinates clamped to the grid (edge replication).
    fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }
}

/// Affine map on normalized image coordinates (x right, y down, both in
/// [0, 1]): `p' = linear * p + offset`. `linear` is row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 {
        linear: [[1.0, 0.0], [0.0, 1.0]],
        offset: [0.0, 0.0],
    };

    pub fn new(linear: [[f64; 2]; 2], offset: [f64; 2]) -> Self {
        Self { linear, offset }
    }

    pub fn det(&self) -> f64 {
        self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
    }

    pub fn is_invertible(&self) -> bool {
        self.det().abs() > MIN_AFFINE_DET
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.linear[0][0] * p[0] + self.linear[0][1] * p[1] + self.offset[0],
            self.linear[1][0] * p[0] + self.linear[1][1] * p[1] + self.offset[1],
        ]
    }

    pub fn inverse(&self) -> Result<Affine2, RasterError> {
        let det = self.det();
        if det.abs() <= MIN_AFFINE_DET {
            return Err(RasterError::SingularTransform(det.abs()));
        }
        let [[a, b], [c, d]] = self.linear;
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let off = [
            -(inv[0][0] * self.offset[0] + inv[0][1] * self.offset[1]),
            -(inv[1][0] * self.offset[0] + inv[1][1] * self.offset[1]),
        ];
        Ok(Affine2::new(inv, off))
    }

    /// Composition `self ∘ inner` (apply `inner` first).
    pub fn compose(&self, inner: &Affine2) -> Affine2 {
        let a = self.linear;
        let b = inner.linear;
        let linear = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        let moved = self.apply(inner.offset);
        Affine2::new(linear, moved)
    }
}

/// Round half away from zero, the rounding rule for all produced pixel
/// values.
pub(crate) fn round_half_away(x: f64) -> f64 {
    if x >= 0.0 {
        (x + 0.5).floor()
    } else {
        (x - 0.5).ceil()
    }
}

fn clamp_u8(x: f64) -> u8 {
    x.clamp(0.0, 255.0) as u8
}

/// Parses a binary PGM ("P5", maxval <= 255).
///
/// Header tokens may be separated by arbitrary whitespace and `#` comments;
/// exactly one whitespace byte separates the maxval from the pixel payload.
/// Trailing bytes after the payload are ignored.
pub fn read_pgm(bytes: &[u8]) -> Result<LuminanceGrid, RasterError> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(RasterError::BadMagic);
    }
    let mut pos = 2;
    let width = read_header_number(bytes, &mut pos)?;
    let height = read_header_number(bytes, &mut pos)?;
    let maxval = read_header_number(bytes, &mut pos)?;
    if maxval > 255 {
        return Err(RasterError::MaxvalTooLarge(maxval as u32));
    }
    if maxval == 0 {
        return Err(RasterError::MalformedHeader("maxval is zero".into()));
    }
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroDimension { width, height });
    }
    // Single whitespace byte between header and payload.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => {
            return Err(RasterError::MalformedHeader(
                "missing whitespace before pixel payload".into(),
            ))
        }
        None => {
            return Err(RasterError::TruncatedPayload {
                expected: width * height,
                found: 0,
            })
        }
    }
    let expected = width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(RasterError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    LuminanceGrid::new(width, height, payload[..expected].to_vec())
}

fn read_header_number(bytes: &[u8], pos: &mut usize) -> Result<usize, RasterError> {
    skip_whitespace_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(RasterError::MalformedHeader(format!(
            "expected number at byte {start}"
        )));
    }
    let text = std::str::from_utf8(&bytes[start..*pos]).expect("digits are ASCII");
    text.parse::<usize>()
        .map_err(|_| RasterError::MalformedHeader(format!("number too large at byte {start}")))
}

fn skip_whitespace_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

/// Serializes a grid as canonical binary PGM:
/// `"P5\n<w> <h>\n255\n"` followed by the row-major payload.
pub fn write_pgm(grid: &LuminanceGrid) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", grid.width, grid.height);
    let mut out = Vec::with_capacity(header.len() + grid.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&grid.pixels);
    out
}

/// Scales every pixel by `1 + factor`, rounds half away from zero, and
/// clamps to [0, 255]. `factor` must lie in [-0.25, 0.25].
pub fn adjust_brightness(grid: &LuminanceGrid, factor: f64) -> Result<LuminanceGrid, RasterError> {
    if !(-0.25..=0.25).contains(&factor) || factor.is_nan() {
        return Err(RasterError::BrightnessOutOfRange(factor));
    }
    let pixels = grid
        .pixels
        .iter()
        .map(|&p| clamp_u8(round_half_away(p as f64 * (1.0 + factor))))
        .collect();
    LuminanceGrid::new(grid.width, grid.height, pixels)
}

/// Uniform box blur over the (2·radius + 1)² neighborhood with edge
/// replication at the borders. Output pixels are the rounded neighborhood
/// mean (half away from zero).
pub fn box_blur(grid: &LuminanceGrid, radius: usize) -> Result<LuminanceGrid, RasterError> {
    if radius == 0 {
        return Err(RasterError::ZeroBlurRadius);
    }
    let r = radius as isize;
    let k = (2 * radius as u64 + 1).pow(2);
    let mut pixels = Vec::with_capacity(grid.pixels.len());
    for y in 0..grid.height as isize {
        for x in 0..grid.width as isize {
            let mut sum: u64 = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    sum += grid.get_clamped(x + dx, y + dy) as u64;
                }
            }
            // Integer round-half-up of sum / k; the mean is non-negative so
            // this equals round-half-away-from-zero.
            pixels.push(((2 * sum + k) / (2 * k)) as u8);
        }
    }
    LuminanceGrid::new(grid.width, grid.height, pixels)
}

/// Sharpness score: population variance of the 4-neighbor Laplacian
/// `4p − left − right − up − down` over interior pixels. Needs a grid of at
/// least 3x3.
pub fn laplacian_variance(grid: &LuminanceGrid) -> Result<f64, RasterError> {
    if grid.width < 3 || grid.height < 3 {
        return Err(RasterError::GridTooSmall {
            width: grid.width,
            height: grid.height,
        });
    }
    let mut values = Vec::with_capacity((grid.width - 2) * (grid.height - 2));
    for y in 1..grid.height - 1 {
        for x in 1..grid.width - 1 {
            let p = grid.get(x, y) as i32;
            let lap = 4 * p
                - grid.get(x - 1, y) as i32
                - grid.get(x + 1, y) as i32
                - grid.get(x, y - 1) as i32
                - grid.get(x, y + 1) as i32;
            values.push(lap as f64);
        }
    }
    Ok(population_variance(&values))
}

/// RMS contrast: population standard deviation of pixels normalized to
/// [0, 1].
pub fn rms_contrast(grid: &LuminanceGrid) -> f64 {
    let values: Vec<f64> = grid.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    population_variance(&values).sqrt()
}

/// Fraction of pixels clipped to either extreme (0 or 255).
pub fn exposure_clip_fraction(grid: &LuminanceGrid) -> f64 {
    let clipped = grid.pixels.iter().filter(|&&p| p == 0 || p == 255).count();
    clipped as f64 / grid.pixels.len() as f64
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Warps a grid by `transform` (forward map on normalized coordinates)
/// using inverse mapping with nearest-neighbor sampling. Samples that fall
/// outside the source fill with 0. Output dimensions equal the input's.
pub fn warp_nearest(
    grid: &LuminanceGrid,
    transform: &Affine2,
) -> Result<LuminanceGrid, RasterError> {
    let inv = transform.inverse()?;
    let w = grid.width as f64;
    let h = grid.height as f64;
    let mut pixels = Vec::with_capacity(grid.pixels.len());
    for y in 0..grid.height {
        for x in 0..grid.width {
            let p = [(x as f64 + 0.5) / w, (y as f64 + 0.5) / h];
            let q = inv.apply(p);
            let sx = (q[0] * w).floor();
            let sy = (q[1] * h).floor();
            let value = if sx >= 0.0 && sx < w && sy >= 0.0 && sy < h {
                grid.get(sx as usize, sy as usize)
            } else {
                0
            };
            pixels.push(value);
        }
    }
    LuminanceGrid::new(grid.width, grid.height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, px: &[u8]) -> LuminanceGrid {
        LuminanceGrid::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn read_pgm_direct_fields() {
        let bytes = b"P5\n2 2\n255\n\x00\x40\x80\xff";
        let g = read_pgm(bytes).unwrap();
        assert_eq!(g.width(), 2);
        assert_eq!(g.height(), 2);
        assert_eq!(g.pixels(), &[0, 64, 128, 255]);
    }

    #[test]
    fn read_pgm_handles_comments_and_whitespace() {
        let bytes = b"P5 # comment\n# another\n 3\t1 #x\n255\n\x01\x02\x03";
        let g = read_pgm(bytes).unwrap();
        assert_eq!((g.width(), g.height()), (3, 1));
        assert_eq!(g.pixels(), &[1, 2, 3]);
    }

    #[test]
    fn read_pgm_rejects_bad_magic() {
        assert!(matches!(
            read_pgm(b"P6\n1 1\n255\n\x00"),
            Err(RasterError::BadMagic)
        ));
        assert!(matches!(read_pgm(b"P"), Err(RasterError::BadMagic)));
    }

    #[test]
    fn read_pgm_rejects_large_maxval() {
        assert!(matches!(
            read_pgm(b"P5\n1 1\n65535\n\x00\x00"),
            Err(RasterError::MaxvalTooLarge(65535))
        ));
    }

    #[test]
    fn read_pgm_rejects_truncated_payload() {
        assert!(matches!(
            read_pgm(b"P5\n2 2\n255\n\x00\x01"),
            Err(RasterError::TruncatedPayload {
                expected: 4,
                found: 2
            })
        ));
    }

    #[test]
    fn read_pgm_rejects_zero_dimension() {
        assert!(matches!(
            read_pgm(b"P5\n0 3\n255\n"),
            Err(RasterError::ZeroDimension { .. })
        ));
    }

    #[test]
    fn write_pgm_canonical_form() {
        let g = grid(1, 1, &[7]);
        assert_eq!(write_pgm(&g), b"P5\n1 1\n255\n\x07");
        let g = grid(2, 1, &[0, 255]);
        assert_eq!(&write_pgm(&g)[..], b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn pgm_round_trips_both_ways() {
        let g = grid(3, 2, &[0, 10, 20, 30, 40, 250]);
        assert_eq!(read_pgm(&write_pgm(&g)).unwrap(), g);
        let file = write_pgm(&g);
        assert_eq!(write_pgm(&read_pgm(&file).unwrap()), file);
    }

    #[test]
    fn brightness_examples() {
        let g = grid(2, 1, &[100, 250]);
        let out = adjust_brightness(&g, 0.25).unwrap();
        assert_eq!(out.pixels(), &[125, 255]); // 250 * 1.25 clamps
        assert_eq!(adjust_brightness(&g, 0.0).unwrap(), g);
        assert!(matches!(
            adjust_brightness(&g, 0.3),
            Err(RasterError::BrightnessOutOfRange(_))
        ));
    }

    #[test]
    fn brightness_rounds_half_away() {
        // 102 * 1.005 is not representable; use a direct case: 2 * 1.25 = 2.5 -> 3.
        let g = grid(1, 1, &[2]);
        assert_eq!(adjust_brightness(&g, 0.25).unwrap().pixels(), &[3]);
    }

    #[test]
    fn blur_constant_is_identity() {
        let g = LuminanceGrid::filled(9, 5, 77).unwrap();
        assert_eq!(box_blur(&g, 2).unwrap(), g);
    }

    #[test]
    fn blur_impulse_center_value() {
        let mut px = vec![0u8; 11 * 11];
        px[5 * 11 + 5] = 255;
        let g = grid(11, 11, &px);
        let out = box_blur(&g, 2).unwrap();
        // 5x5 uniform kernel: round(255 / 25) = 10.
        assert_eq!(out.get(5, 5), 10);
    }

    #[test]
    fn blur_matches_nested_loop_oracle() {
        let g = LuminanceGrid::from_fn(7, 7, |x, y| ((x * 31 + y * 17 + 5) % 256) as u8).unwrap();
        let out = box_blur(&g, 2).unwrap();
        for y in 0..7i64 {
            for x in 0..7i64 {
                let mut sum = 0f64;
                for dy in -2..=2i64 {
                    for dx in -2..=2i64 {
                        let sx = (x + dx).clamp(0, 6) as usize;
                        let sy = (y + dy).clamp(0, 6) as usize;
                        sum += g.get(sx, sy) as f64;
                    }
                }
                let expect = (sum / 25.0 + 0.5).floor() as u8;
                assert_eq!(out.get(x as usize, y as usize), expect, "at {x},{y}");
            }
        }
    }

    #[test]
    fn laplacian_variance_of_constant_and_ramp() {
        let c = LuminanceGrid::filled(5, 5, 42).unwrap();
        assert_eq!(laplacian_variance(&c).unwrap(), 0.0);
        let ramp = LuminanceGrid::from_fn(6, 4, |x, _| (x * 10) as u8).unwrap();
        assert_eq!(laplacian_variance(&ramp).unwrap(), 0.0);
        let tiny = LuminanceGrid::filled(2, 5, 0).unwrap();
        assert!(matches!(
            laplacian_variance(&tiny),
            Err(RasterError::GridTooSmall { .. })
        ));
    }

    #[test]
    fn laplacian_variance_matches_oracle_on_checkerboard() {
        let g = LuminanceGrid::from_fn(6, 6, |x, y| if (x / 2 + y / 2) % 2 == 0 { 0 } else { 255 })
            .unwrap();
        let got = laplacian_variance(&g).unwrap();
        let mut vals = Vec::new();
        for y in 1..5usize {
            for x in 1..5usize {
                let lap = 4.0 * g.get(x, y) as f64
                    - g.get(x - 1, y) as f64
                    - g.get(x + 1, y) as f64
                    - g.get(x, y - 1) as f64
                    - g.get(x, y + 1) as f64;
                vals.push(lap);
            }
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((got - var).abs() < 1e-9);
    }

    #[test]
    fn contrast_and_clip_fraction() {
        let c = LuminanceGrid::filled(4, 4, 100).unwrap();
        assert!(rms_contrast(&c) < 1e-12);
        assert_eq!(exposure_clip_fraction(&c), 0.0);

        let half = grid(2, 1, &[0, 255]);
        assert_eq!(exposure_clip_fraction(&half), 1.0);
        assert!((rms_contrast(&half) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance_without_clamping() {
        let g = LuminanceGrid::from_fn(5, 5, |x, y| (50 + x * 7 + y * 11) as u8).unwrap();
        let shifted =
            LuminanceGrid::from_fn(5, 5, |x, y| (50 + x * 7 + y * 11 + 30) as u8).unwrap();
        assert_eq!(
            laplacian_variance(&g).unwrap(),
            laplacian_variance(&shifted).unwrap()
        );
        assert!((rms_contrast(&g) - rms_contrast(&shifted)).abs() < 1e-12);
    }

    #[test]
    fn warp_identity_and_flip() {
        let g = LuminanceGrid::from_fn(8, 8, |x, y| (x * 8 + y) as u8).unwrap();
        assert_eq!(warp_nearest(&g, &Affine2::IDENTITY).unwrap(), g);

        let hflip = Affine2::new([[-1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]);
        let flipped = warp_nearest(&g, &hflip).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(flipped.get(x, y), g.get(7 - x, y));
            }
        }
        assert_eq!(warp_nearest(&flipped, &hflip).unwrap(), g);
    }

    #[test]
    fn warp_rot90_four_times_is_identity() {
        let g = LuminanceGrid::from_fn(16, 16, |x, y| ((x * 37 + y * 101) % 256) as u8).unwrap();
        let rot = Affine2::new([[0.0, -1.0], [1.0, 0.0]], [1.0, 0.0]);
        let mut cur = g.clone();
        for _ in 0..4 {
            cur = warp_nearest(&cur, &rot).unwrap();
        }
        assert_eq!(cur, g);
    }

    #[test]
    fn warp_rejects_singular_transform() {
        let g = LuminanceGrid::filled(4, 4, 1).unwrap();
        let squash = Affine2::new([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0]);
        assert!(matches!(
            warp_nearest(&g, &squash),
            Err(RasterError::SingularTransform(_))
        ));
    }

    #[test]
    fn affine_inverse_and_compose() {
        let t = Affine2::new([[0.8, 0.2], [-0.1, 1.1]], [0.3, -0.2]);
        let inv = t.inverse().unwrap();
        let p = [0.37, 0.81];
        let back = inv.apply(t.apply(p));
        assert!((back[0] - p[0]).abs() < 1e-12);
        assert!((back[1] - p[1]).abs() < 1e-12);

        let composed = t.compose(&inv);
        let q = composed.apply(p);
        assert!((q[0] - p[0]).abs() < 1e-12);
        assert!((q[1] - p[1]).abs() < 1e-12);
    }
}
