use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::Result;

/// `|a ∩ b|`.
pub fn intersection_area(a: &BinaryMask, b: &BinaryMask) -> Result<u64> {
    a.same_dims(b)?;
    Ok(a.words()
        .iter()
        .zip(b.words())
        .map(|(x, y)| u64::from((x & y).count_ones()))
        .sum())
}

/// Region similarity `|a ∩ b| / |a ∪ b|`. Two empty masks agree perfectly and score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_dims(b)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in a.words().iter().zip(b.words()) {
        inter += u64::from((x & y).count_ones());
        union += u64::from((x | y).count_ones());
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Fraction of `a` covered by `b`; 0 when `a` is empty.
pub fn precision(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_dims(b)?;
    let (mut inter, mut area) = (0u64, 0u64);
    for (x, y) in a.words().iter().zip(b.words()) {
        inter += u64::from((x & y).count_ones());
        area += u64::from(x.count_ones());
    }
    Ok(if area == 0 { 0.0 } else { inter as f64 / area as f64 })
}

// Bit c of the output holds bit c-1 of the input (content moves towards higher columns).
fn shift_east(src: &[u64], dst: &mut [u64]) {
    let mut carry = 0u64;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s << 1) | carry;
        carry = s >> 63;
    }
}

// Bit c of the output holds bit c+1 of the input.
fn shift_west(src: &[u64], dst: &mut [u64]) {
    let n = src.len();
    for i in 0..n {
        let next = if i + 1 < n { src[i + 1] << 63 } else { 0 };
        dst[i] = (src[i] >> 1) | next;
    }
}

/// Foreground pixels that touch background or the image border (4-connectivity).
pub fn boundary(m: &BinaryMask) -> BinaryMask {
    let mut out = m.clone();
    let stride = m.row(0).len();
    let tail = m.tail_mask();
    let mut east = vec![0u64; stride];
    let mut west = vec![0u64; stride];
    for r in 0..m.height() {
        let row = m.row(r);
        shift_east(row, &mut east);
        shift_west(row, &mut west);
        let dst = out.row_mut(r);
        for i in 0..stride {
            let up = if r > 0 { m.row(r - 1)[i] } else { 0 };
            let down = if r + 1 < m.height() { m.row(r + 1)[i] } else { 0 };
            let interior = row[i] & up & down & east[i] & west[i];
            dst[i] = row[i] & !interior;
        }
        dst[stride - 1] &= tail;
    }
    out
}

/// Morphological dilation with a `(2r+1)×(2r+1)` square, i.e. every pixel within
/// Chebyshev distance `radius` of the foreground.
pub fn dilate(m: &BinaryMask, radius: usize) -> BinaryMask {
    morph(m, radius, true)
}

/// Morphological erosion with a square element; pixels outside the image count as background.
pub fn erode(m: &BinaryMask, radius: usize) -> BinaryMask {
    morph(m, radius, false)
}

fn morph(m: &BinaryMask, radius: usize, grow: bool) -> BinaryMask {
    let (h, w) = m.dims();
    if radius == 0 {
        return m.clone();
    }
    let stride = m.row(0).len();
    let tail = m.tail_mask();
    let combine = |a: u64, b: u64| if grow { a | b } else { a & b };

    // Horizontal pass, one pixel at a time. Beyond `width` no further change is possible.
    let mut cur = m.clone();
    let mut east = vec![0u64; stride];
    let mut west = vec![0u64; stride];
    for _ in 0..radius.min(w) {
        for r in 0..h {
            let row = cur.row_mut(r);
            shift_east(row, &mut east);
            shift_west(row, &mut west);
            for i in 0..stride {
                row[i] = combine(combine(row[i], east[i]), west[i]);
            }
            row[stride - 1] &= tail;
        }
    }

    // Vertical pass.
    for _ in 0..radius.min(h) {
        let prev = cur.clone();
        for r in 0..h {
            for i in 0..stride {
                let up = if r > 0 { prev.row(r - 1)[i] } else { 0 };
                let down = if r + 1 < h { prev.row(r + 1)[i] } else { 0 };
                let v = prev.row(r)[i];
                cur.row_mut(r)[i] = combine(combine(v, up), down);
            }
        }
    }
    cur
}

/// Inclusive pixel box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

impl BBox {
    pub fn area(&self) -> u64 {
        ((self.row_max - self.row_min + 1) * (self.col_max - self.col_min + 1)) as u64
    }
}

/// Minimal axis-aligned box around the foreground, `None` for an empty mask.
pub fn tight_bbox(m: &BinaryMask) -> Option<BBox> {
    let mut rows = None::<(usize, usize)>;
    let (mut cmin, mut cmax) = (usize::MAX, 0usize);
    for r in 0..m.height() {
        let row = m.row(r);
        let Some(first) = row.iter().position(|&w| w != 0) else {
            continue;
        };
        let last = row.iter().rposition(|&w| w != 0).expect("row has a set word");
        cmin = cmin.min(first * 64 + row[first].trailing_zeros() as usize);
        cmax = cmax.max(last * 64 + 63 - row[last].leading_zeros() as usize);
        rows = Some(match rows {
            None => (r, r),
            Some((lo, _)) => (lo, r),
        });
    }
    rows.map(|(row_min, row_max)| BBox {
        row_min,
        col_min: cmin,
        row_max,
        col_max: cmax,
    })
}

/// Box IoU over pixel cells.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let r0 = a.row_min.max(b.row_min);
    let c0 = a.col_min.max(b.col_min);
    let r1 = a.row_max.min(b.row_max);
    let c1 = a.col_max.min(b.col_max);
    let inter = if r0 > r1 || c0 > c1 {
        0
    } else {
        ((r1 - r0 + 1) * (c1 - c0 + 1)) as u64
    };
    inter as f64 / (a.area() + b.area() - inter) as f64
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_mask(rng: &mut impl Rng, h: usize, w: usize, p: f64) -> BinaryMask {
        BinaryMask::from_fn(h, w, |_, _| rng.random_bool(p)).unwrap()
    }

    fn pixel_counts(a: &BinaryMask, b: &BinaryMask) -> (usize, usize, usize) {
        let (mut inter, mut union, mut area_a) = (0, 0, 0);
        for r in 0..a.height() {
            for c in 0..a.width() {
                let (x, y) = (a.get(r, c), b.get(r, c));
                inter += usize::from(x && y);
                union += usize::from(x || y);
                area_a += usize::from(x);
            }
        }
        (inter, union, area_a)
    }

    #[test]
    fn iou_examples() {
        let m = BinaryMask::from_pixels(4, 4, [(1, 1), (2, 3)]).unwrap();
        assert_eq!(iou(&m, &m).unwrap(), 1.0);
        let a = BinaryMask::from_pixels(2, 2, [(0, 0), (0, 1)]).unwrap();
        let b = BinaryMask::from_pixels(2, 2, [(0, 1), (1, 1)]).unwrap();
        assert_eq!(iou(&a, &b).unwrap(), 1.0 / 3.0);
        let e = BinaryMask::new(2, 2).unwrap();
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert_eq!(iou(&e, &a).unwrap(), 0.0);
    }

    #[test]
    fn kernels_reject_mismatched_dims() {
        let a = BinaryMask::new(2, 2).unwrap();
        let b = BinaryMask::new(2, 3).unwrap();
        assert!(iou(&a, &b).is_err());
        assert!(precision(&a, &b).is_err());
    }

    #[test]
    fn random_8x8_pairs_match_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_mask(&mut rng, 8, 8, 0.4);
            let b = random_mask(&mut rng, 8, 8, 0.4);
            let (inter, union, area_a) = pixel_counts(&a, &b);
            let want_iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
            let want_prec = if area_a == 0 { 0.0 } else { inter as f64 / area_a as f64 };
            assert_eq!(iou(&a, &b).unwrap(), want_iou);
            assert_eq!(precision(&a, &b).unwrap(), want_prec);
        }
    }

    #[test]
    fn precision_examples() {
        let a = BinaryMask::from_pixels(3, 3, [(1, 1)]).unwrap();
        let b = BinaryMask::from_pixels(3, 3, [(1, 1), (0, 0)]).unwrap();
        assert_eq!(precision(&a, &b).unwrap(), 1.0);
        let c = BinaryMask::from_pixels(3, 3, [(2, 2)]).unwrap();
        assert_eq!(precision(&a, &c).unwrap(), 0.0);
        let e = BinaryMask::new(3, 3).unwrap();
        assert_eq!(precision(&e, &b).unwrap(), 0.0);
    }

    #[test]
    fn boundary_examples() {
        let full = BinaryMask::full(4, 5).unwrap();
        let ring = boundary(&full);
        for r in 0..4 {
            for c in 0..5 {
                assert_eq!(ring.get(r, c), r == 0 || r == 3 || c == 0 || c == 4);
            }
        }
        let dot = BinaryMask::from_pixels(3, 3, [(1, 1)]).unwrap();
        assert_eq!(boundary(&dot), dot);

        let square = BinaryMask::from_fn(5, 5, |r, c| (1..=3).contains(&r) && (1..=3).contains(&c)).unwrap();
        let b = boundary(&square);
        assert_eq!(b.area(), 8);
        assert!(!b.get(2, 2));
    }

    #[test]
    fn boundary_wide_rows() {
        // Exercise word carries: a band straddling the 64-bit boundary.
        let m = BinaryMask::from_fn(3, 130, |_, c| (60..70).contains(&c)).unwrap();
        let b = boundary(&m);
        let brute = BinaryMask::from_fn(3, 130, |r, c| {
            if !m.get(r, c) {
                return false;
            }
            let n = |dr: i64, dc: i64| {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                rr >= 0 && cc >= 0 && rr < 3 && cc < 130 && m.get(rr as usize, cc as usize)
            };
            !(n(-1, 0) && n(1, 0) && n(0, -1) && n(0, 1))
        })
        .unwrap();
        assert_eq!(b, brute);
    }

    #[test]
    fn dilate_erode_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for radius in 0..4 {
            let m = random_mask(&mut rng, 9, 70, 0.05);
            let d = dilate(&m, radius);
            let e = erode(&m, radius);
            let r = radius as i64;
            for y in 0..9i64 {
                for x in 0..70i64 {
                    let mut any = false;
                    let mut all = true;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (yy, xx) = (y + dy, x + dx);
                            let v = yy >= 0 && xx >= 0 && yy < 9 && xx < 70 && m.get(yy as usize, xx as usize);
                            any |= v;
                            all &= v;
                        }
                    }
                    assert_eq!(d.get(y as usize, x as usize), any);
                    assert_eq!(e.get(y as usize, x as usize), all);
                }
            }
        }
    }

    #[test]
    fn bbox_examples() {
        let m = BinaryMask::from_pixels(5, 5, [(2, 3)]).unwrap();
        assert_eq!(
            tight_bbox(&m),
            Some(BBox {
                row_min: 2,
                col_min: 3,
                row_max: 2,
                col_max: 3
            })
        );
        assert_eq!(tight_bbox(&BinaryMask::new(4, 4).unwrap()), None);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let m = random_mask(&mut rng, 7, 150, 0.002);
            let ones: Vec<_> = (0..7)
                .flat_map(|r| (0..150).map(move |c| (r, c)))
                .filter(|&(r, c)| m.get(r, c))
                .collect();
            let expected = (!ones.is_empty()).then(|| BBox {
                row_min: ones.iter().map(|p| p.0).min().unwrap(),
                col_min: ones.iter().map(|p| p.1).min().unwrap(),
                row_max: ones.iter().map(|p| p.0).max().unwrap(),
                col_max: ones.iter().map(|p| p.1).max().unwrap(),
            });
            assert_eq!(tight_bbox(&m), expected);
        }
    }

    #[test]
    fn box_iou_basic() {
        let a = BBox {
            row_min: 0,
            col_min: 0,
            row_max: 1,
            col_max: 1,
        };
        let b = BBox {
            row_min: 1,
            col_min: 1,
            row_max: 2,
            col_max: 2,
        };
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &b), 1.0 / 7.0);
    }

    fn mask_strategy() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..20, 1usize..90).prop_flat_map(|(h, w)| {
            (
                proptest::collection::vec(any::<bool>(), h * w),
                proptest::collection::vec(any::<bool>(), h * w),
            )
                .prop_map(move |(a, b)| {
                    let to = |v: Vec<bool>| {
                        BinaryMask::from_bytes(h, w, &v.into_iter().map(u8::from).collect::<Vec<_>>()).unwrap()
                    };
                    (to(a), to(b))
                })
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_consistent((a, b) in mask_strategy()) {
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            let inter = intersection_area(&a, &b).unwrap();
            let covered = precision(&a, &b).unwrap() * a.area() as f64;
            prop_assert!((covered - inter as f64).abs() <= 1e-9 * (inter.max(1) as f64));
            if !a.is_empty() || !b.is_empty() {
                prop_assert_eq!(ab == 1.0, a == b);
                prop_assert_eq!(ab == 0.0, inter == 0);
            }
        }

        #[test]
        fn boundary_is_subset((a, _b) in mask_strategy()) {
            let b = boundary(&a);
            prop_assert_eq!(intersection_area(&b, &a).unwrap(), b.area());
        }
    }
}
