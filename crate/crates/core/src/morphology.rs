//! Binary morphology with elliptical structuring elements and
//! connected-component filtering.
//!
//! Conventions:
//! - The anchor of a `k×k` element is index `⌊(k−1)/2⌋` on both axes.
//! - [`dilate`] sets `p` iff the footprint placed at `p` hits a 1-pixel;
//!   pixels outside the image read as 0.
//! - [`erode`] is the adjoint of [`dilate`]: it tests the reflected footprint
//!   (identical to the footprint for odd `k`) and ignores pixels outside the
//!   image. With this pairing [`close`] is extensive and idempotent for every
//!   element size, and a full mask stays full.

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// A square binary footprint used by dilation and erosion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    size: usize,
    footprint: BinaryMask,
    /// Horizontal runs `(dr, dc0, dc1)` relative to the anchor.
    runs: Vec<(isize, isize, isize)>,
}

impl StructuringElement {
    /// Wraps an arbitrary non-empty square footprint.
    pub fn from_footprint(footprint: BinaryMask) -> Result<Self> {
        let (h, w) = footprint.shape();
        if h != w {
            return Err(Error::InvalidGrid(format!(
                "structuring element must be square, got {h}x{w}"
            )));
        }
        if footprint.is_blank() {
            return Err(Error::InvalidGrid("structuring element is empty".into()));
        }
        let anchor = ((h - 1) / 2) as isize;
        let mut runs = Vec::new();
        for r in 0..h {
            let mut c = 0;
            while c < w {
                if footprint.is_set(r, c) {
                    let start = c;
                    while c + 1 < w && footprint.is_set(r, c + 1) {
                        c += 1;
                    }
                    runs.push((
                        r as isize - anchor,
                        start as isize - anchor,
                        c as isize - anchor,
                    ));
                }
                c += 1;
            }
        }
        Ok(Self {
            size: h,
            footprint,
            runs,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn anchor(&self) -> usize {
        (self.size - 1) / 2
    }

    pub fn footprint(&self) -> &BinaryMask {
        &self.footprint
    }

    /// Footprint offsets `(dr, dc)` relative to the anchor.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let a = self.anchor() as isize;
        let mut out = Vec::new();
        for r in 0..self.size {
            for c in 0..self.size {
                if self.footprint.is_set(r, c) {
                    out.push((r as isize - a, c as isize - a));
                }
            }
        }
        out
    }
}

/// Elliptical element: pixel `(r, c)` is included iff its half-pixel center
/// lies inside the ellipse inscribed in the `k×k` box.
pub fn elliptical_element(k: usize) -> Result<StructuringElement> {
    if k == 0 {
        return Err(Error::InvalidElementSize(k));
    }
    let half = k as f64 / 2.0;
    let fp = BinaryMask::from_fn(k, k, |r, c| {
        let dy = (r as f64 + 0.5 - half) / half;
        let dx = (c as f64 + 0.5 - half) / half;
        dy * dy + dx * dx <= 1.0
    });
    StructuringElement::from_footprint(fp)
}

/// Row-wise prefix sums: `p[r * (w + 1) + c]` counts ones in row `r` before column `c`.
fn row_prefix(m: &BinaryMask) -> Vec<u32> {
    let (h, w) = m.shape();
    let mut p = vec![0u32; h * (w + 1)];
    for r in 0..h {
        let base = r * (w + 1);
        for c in 0..w {
            p[base + c + 1] = p[base + c] + m.get(r, c) as u32;
        }
    }
    p
}

/// Clips the column window `[lo, hi]` to the image; `None` when it misses entirely.
#[inline]
fn clip(lo: isize, hi: isize, w: usize) -> Option<(usize, usize)> {
    let lo = lo.max(0);
    let hi = hi.min(w as isize - 1);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

pub fn dilate(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (h, w) = m.shape();
    let pre = row_prefix(m);
    let mut out = BinaryMask::zeros(h, w);
    for r in 0..h {
        for &(dr, dc0, dc1) in &se.runs {
            let sr = r as isize + dr;
            if sr < 0 || sr >= h as isize {
                continue;
            }
            let base = sr as usize * (w + 1);
            for c in 0..w {
                if out.is_set(r, c) {
                    continue;
                }
                if let Some((lo, hi)) = clip(c as isize + dc0, c as isize + dc1, w) {
                    if pre[base + hi + 1] > pre[base + lo] {
                        out.set(r, c, true);
                    }
                }
            }
        }
    }
    out
}

pub fn erode(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (h, w) = m.shape();
    let pre = row_prefix(m);
    let mut out = BinaryMask::zeros(h, w);
    for r in 0..h {
        'px: for c in 0..w {
            for &(dr, dc0, dc1) in &se.runs {
                // reflected run
                let sr = r as isize - dr;
                if sr < 0 || sr >= h as isize {
                    continue;
                }
                let base = sr as usize * (w + 1);
                if let Some((lo, hi)) = clip(c as isize - dc1, c as isize - dc0, w) {
                    if (pre[base + hi + 1] - pre[base + lo]) as usize != hi - lo + 1 {
                        continue 'px;
                    }
                }
            }
            out.set(r, c, true);
        }
    }
    out
}

/// Morphological closing: `erode(dilate(m))`.
pub fn close(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    erode(&dilate(m, se), se)
}

/// Labels 8-connected components. Labels are `1..=count` in order of each
/// component's first pixel in row-major scan; background is 0.
pub fn label_components(m: &BinaryMask) -> (Vec<u32>, usize) {
    let (h, w) = m.shape();
    // slot 0 is reserved for background so provisional labels start at 1
    let mut parent: Vec<u32> = vec![0];
    let mut provisional = vec![0u32; h * w];

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }

    for r in 0..h {
        for c in 0..w {
            if !m.is_set(r, c) {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut look = |rr: isize, cc: isize| {
                if rr >= 0 && cc >= 0 && (cc as usize) < w {
                    let l = provisional[rr as usize * w + cc as usize];
                    if l != 0 {
                        neighbours[n] = l;
                        n += 1;
                    }
                }
            };
            let (ri, ci) = (r as isize, c as isize);
            look(ri, ci - 1);
            look(ri - 1, ci - 1);
            look(ri - 1, ci);
            look(ri - 1, ci + 1);
            let label = if n == 0 {
                parent.push(parent.len() as u32);
                parent.len() as u32 - 1
            } else {
                let mut root = find(&mut parent, neighbours[0]);
                for &l in &neighbours[1..n] {
                    let other = find(&mut parent, l);
                    if other != root {
                        let (lo, hi) = (root.min(other), root.max(other));
                        parent[hi as usize] = lo;
                        root = lo;
                    }
                }
                root
            };
            provisional[r * w + c] = label;
        }
    }
    let mut remap = vec![0u32; parent.len()];
    let mut count = 0usize;
    let mut labels = vec![0u32; h * w];
    for i in 0..h * w {
        if m.data()[i] == 0 {
            continue;
        }
        let root = find(&mut parent, provisional[i]) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count as u32;
        }
        labels[i] = remap[root];
    }
    (labels, count)
}

/// Number of 8-connected components.
pub fn component_count(m: &BinaryMask) -> usize {
    label_components(m).1
}

/// Keeps the union of the `k` largest 8-connected components. Equal sizes
/// are ordered by the row-major index of each component's first pixel.
/// With fewer than `k` components the mask is returned unchanged.
pub fn top_k_components(m: &BinaryMask, k: usize) -> BinaryMask {
    assert!(k >= 1, "top_k_components needs k >= 1");
    let (labels, count) = label_components(m);
    if count < k {
        return m.clone();
    }
    let mut sizes = vec![0usize; count + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    // labels are already numbered by first-pixel order, so a stable sort by
    // descending size implements the tie-break
    let mut order: Vec<usize> = (1..=count).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut keep = vec![false; count + 1];
    for &l in order.iter().take(k) {
        keep[l] = true;
    }
    let (h, w) = m.shape();
    BinaryMask::new(h, w, labels.iter().map(|&l| keep[l as usize] as u8).collect())
        .expect("labels preserve shape")
}
