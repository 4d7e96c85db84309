//! Binary masks, label maps and the pixel kernels built on them.
//!
//! [`BinaryMask`] stores one bit per pixel, packed row by row into `u64`
//! words. Every row starts on a fresh word so that horizontal shifts never
//! leak across rows; the unused high bits of the last word of each row are
//! always zero.

mod io;
mod ops;
mod rle;

use std::collections::BTreeMap;
use std::fmt;

pub use io::{
    list_frames, read_label_map, read_png_store, read_rle_store, write_label_png, write_png_store, write_rle_store,
    FrameFile, MaskStore, StoreKind,
};
pub use ops::{boundary, box_iou, dilate, erode, intersection_area, iou, precision, tight_bbox, BBox};
pub use rle::{decode_rle, encode_rle, Rle};

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    stride: usize,
    words: Vec<u64>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidMask(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        let stride = width.div_ceil(WORD_BITS);
        Ok(Self {
            height,
            width,
            stride,
            words: vec![0; stride * height],
        })
    }

    pub fn full(height: usize, width: usize) -> Result<Self> {
        let mut m = Self::new(height, width)?;
        for r in 0..height {
            m.fill_row_span(r, 0, width - 1);
        }
        Ok(m)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut m = Self::new(height, width)?;
        for r in 0..height {
            for c in 0..width {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        Ok(m)
    }

    /// Builds a mask from a row-major byte buffer; any nonzero byte is foreground.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width {
            return Err(Error::InvalidMask(format!(
                "buffer of {} bytes does not match {height}x{width}",
                bytes.len()
            )));
        }
        let mut m = Self::new(height, width)?;
        for (r, row) in bytes.chunks_exact(width).enumerate() {
            let words = &mut m.words[r * m.stride..(r + 1) * m.stride];
            for (c, &b) in row.iter().enumerate() {
                if b != 0 {
                    words[c / WORD_BITS] |= 1 << (c % WORD_BITS);
                }
            }
        }
        Ok(m)
    }

    pub fn from_pixels(height: usize, width: usize, pixels: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = Self::new(height, width)?;
        for (r, c) in pixels {
            if r >= height || c >= width {
                return Err(Error::InvalidMask(format!("pixel ({r}, {c}) outside {height}x{width}")));
            }
            m.set(r, c, true);
        }
        Ok(m)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.height && c < self.width, "pixel out of bounds");
        self.words[r * self.stride + c / WORD_BITS] >> (c % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.height && c < self.width, "pixel out of bounds");
        let w = &mut self.words[r * self.stride + c / WORD_BITS];
        let bit = 1u64 << (c % WORD_BITS);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    /// Sets columns `c0..=c1` of row `r`.
    pub fn fill_row_span(&mut self, r: usize, c0: usize, c1: usize) {
        assert!(r < self.height && c0 <= c1 && c1 < self.width, "span out of bounds");
        let row = &mut self.words[r * self.stride..(r + 1) * self.stride];
        let (w0, w1) = (c0 / WORD_BITS, c1 / WORD_BITS);
        for (i, word) in row.iter_mut().enumerate().take(w1 + 1).skip(w0) {
            let lo = if i == w0 { c0 % WORD_BITS } else { 0 };
            let hi = if i == w1 { c1 % WORD_BITS } else { WORD_BITS - 1 };
            let span = if hi - lo == WORD_BITS - 1 {
                u64::MAX
            } else {
                ((1u64 << (hi - lo + 1)) - 1) << lo
            };
            *word |= span;
        }
    }

    /// Sets every pixel of the inclusive rectangle, clipped to the canvas.
    pub fn fill_rect(&mut self, r0: i64, c0: i64, r1: i64, c1: i64) {
        let (h, w) = (self.height as i64, self.width as i64);
        let (r0, r1) = (r0.max(0), r1.min(h - 1));
        let (c0, c1) = (c0.max(0), c1.min(w - 1));
        if r0 > r1 || c0 > c1 {
            return;
        }
        for r in r0..=r1 {
            self.fill_row_span(r as usize, c0 as usize, c1 as usize);
        }
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Row-major 0/1 bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(u8::from(self.get(r, c)));
            }
        }
        out
    }

    /// Foreground pixels in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |r| {
            self.row(r).iter().enumerate().flat_map(move |(i, &word)| {
                let mut w = word;
                std::iter::from_fn(move || {
                    if w == 0 {
                        return None;
                    }
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some((r, i * WORD_BITS + b))
                })
            })
        })
    }

    pub fn same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Pixel-wise OR.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.same_dims(other)?;
        let mut out = self.clone();
        out.union_assign(other)?;
        Ok(out)
    }

    pub fn union_assign(&mut self, other: &BinaryMask) -> Result<()> {
        self.same_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    /// Clears every pixel that is set in `other`.
    pub fn subtract_assign(&mut self, other: &BinaryMask) -> Result<()> {
        self.same_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
        Ok(())
    }

    pub fn intersects(&self, other: &BinaryMask) -> Result<bool> {
        self.same_dims(other)?;
        Ok(self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0))
    }

    #[inline]
    pub(crate) fn row(&self, r: usize) -> &[u64] {
        &self.words[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.words[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    /// Mask selecting the valid bits of the last word of a row.
    #[inline]
    pub(crate) fn tail_mask(&self) -> u64 {
        let rem = self.width % WORD_BITS;
        if rem == 0 {
            u64::MAX
        } else {
            (1u64 << rem) - 1
        }
    }
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryMask({}x{}, area={})", self.height, self.width, self.area())?;
        if self.height * self.width <= 256 {
            for r in 0..self.height {
                f.write_str("\n  ")?;
                for c in 0..self.width {
                    f.write_str(if self.get(r, c) { "#" } else { "." })?;
                }
            }
        }
        Ok(())
    }
}

/// Per-pixel object ids; 0 is background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        Self::from_raw(height, width, vec![0; height * width])
    }

    pub fn from_raw(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidMask(format!(
                "label map dimensions must be positive, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::InvalidMask(format!(
                "{} labels do not match {height}x{width}",
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    /// Composes disjoint object masks into a label map.
    pub fn compose<'a>(
        height: usize,
        width: usize,
        objects: impl IntoIterator<Item = (u8, &'a BinaryMask)>,
    ) -> Result<Self> {
        let mut map = Self::new(height, width)?;
        for (id, mask) in objects {
            if id == 0 {
                return Err(Error::InvalidInput("object id 0 is reserved for background".into()));
            }
            if mask.dims() != (height, width) {
                return Err(Error::DimensionMismatch {
                    expected: (height, width),
                    actual: mask.dims(),
                });
            }
            for (r, c) in mask.iter_ones() {
                let slot = &mut map.labels[r * width + c];
                if *slot != 0 && *slot != id {
                    return Err(Error::InvalidMask(format!(
                        "objects {} and {id} overlap at ({r}, {c})",
                        *slot
                    )));
                }
                *slot = id;
            }
        }
        Ok(map)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.labels[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, id: u8) {
        self.labels[r * self.width + c] = id;
    }

    /// Sorted ids of objects present in the map.
    pub fn object_ids(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=255u8).filter(|&i| seen[i as usize]).collect()
    }

    pub fn extract(&self, id: u8) -> BinaryMask {
        let mut m = BinaryMask::new(self.height, self.width).expect("dims validated");
        for (r, row) in self.labels.chunks_exact(self.width).enumerate() {
            let words = m.row_mut(r);
            for (c, &l) in row.iter().enumerate() {
                if l == id {
                    words[c / WORD_BITS] |= 1 << (c % WORD_BITS);
                }
            }
        }
        m
    }

    /// Splits the map into one mask per object id in a single pass.
    pub fn extract_all(&self) -> BTreeMap<u8, BinaryMask> {
        let mut masks: Vec<Option<BinaryMask>> = vec![None; 256];
        for (r, row) in self.labels.chunks_exact(self.width).enumerate() {
            for (c, &l) in row.iter().enumerate() {
                if l == 0 {
                    continue;
                }
                let m = masks[l as usize]
                    .get_or_insert_with(|| BinaryMask::new(self.height, self.width).expect("dims validated"));
                m.row_mut(r)[c / WORD_BITS] |= 1 << (c % WORD_BITS);
            }
        }
        masks
            .into_iter()
            .enumerate()
            .filter_map(|(id, m)| m.map(|m| (id as u8, m)))
            .collect()
    }

    /// Union of all objects.
    pub fn foreground(&self) -> BinaryMask {
        let bytes: Vec<u8> = self.labels.iter().map(|&l| u8::from(l != 0)).collect();
        BinaryMask::from_bytes(self.height, self.width, &bytes).expect("dims validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dims() {
        assert!(BinaryMask::new(0, 3).is_err());
        assert!(LabelMap::new(2, 0).is_err());
    }

    #[test]
    fn fill_row_span_crosses_words() {
        let mut m = BinaryMask::new(1, 200).unwrap();
        m.fill_row_span(0, 60, 130);
        assert_eq!(m.area(), 71);
        assert!(!m.get(0, 59) && m.get(0, 60) && m.get(0, 130) && !m.get(0, 131));
        let full = BinaryMask::full(3, 128).unwrap();
        assert_eq!(full.area(), 384);
    }

    #[test]
    fn iter_ones_matches_get() {
        let m = BinaryMask::from_fn(5, 70, |r, c| (r * 7 + c) % 5 == 0).unwrap();
        let ones: Vec<_> = m.iter_ones().collect();
        let expected: Vec<_> = (0..5)
            .flat_map(|r| (0..70).map(move |c| (r, c)))
            .filter(|&(r, c)| m.get(r, c))
            .collect();
        assert_eq!(ones, expected);
        assert_eq!(m.area() as usize, ones.len());
    }

    #[test]
    fn label_map_round_trip() {
        let a = BinaryMask::from_pixels(3, 3, [(0, 0), (0, 1)]).unwrap();
        let b = BinaryMask::from_pixels(3, 3, [(2, 2)]).unwrap();
        let map = LabelMap::compose(3, 3, [(1, &a), (4, &b)]).unwrap();
        assert_eq!(map.object_ids(), vec![1, 4]);
        let parts = map.extract_all();
        assert_eq!(parts[&1], a);
        assert_eq!(parts[&4], b);
        let again = LabelMap::compose(3, 3, parts.iter().map(|(&i, m)| (i, m))).unwrap();
        assert_eq!(again, map);
    }

    #[test]
    fn compose_rejects_overlap() {
        let a = BinaryMask::from_pixels(2, 2, [(0, 0)]).unwrap();
        assert!(LabelMap::compose(2, 2, [(1, &a), (2, &a)]).is_err());
    }
}
