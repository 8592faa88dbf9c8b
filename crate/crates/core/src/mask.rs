//! Dense row-major grids: binary masks, probability maps and grayscale images.
//!
//! All three share the same shape contract (`height ≥ 1`, `width ≥ 1`,
//! `data.len() == height * width`) and differ only in their element domain.

use crate::error::{Error, Result};

/// A binary mask with every element in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

/// Per-pixel probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Normalized grayscale intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidGrid(format!(
            "dimensions must be positive, got {height}x{width}"
        )));
    }
    if height * width != len {
        return Err(Error::InvalidGrid(format!(
            "{height}x{width} grid needs {} elements, got {len}",
            height * width
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

macro_rules! grid_accessors {
    ($t:ty, $elem:ty) => {
        impl $t {
            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            /// `(height, width)`.
            pub fn shape(&self) -> (usize, usize) {
                (self.height, self.width)
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            #[inline]
            pub fn get(&self, row: usize, col: usize) -> $elem {
                self.data[row * self.width + col]
            }
        }
    };
}

grid_accessors!(BinaryMask, u8);
grid_accessors!(ProbMap, f64);
grid_accessors!(GrayImage, f64);

impl BinaryMask {
    /// Builds a mask, rejecting any element outside `{0, 1}`.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidGrid(format!("mask value {v} is not 0 or 1")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_bools(height: usize, width: usize, bits: &[bool]) -> Result<Self> {
        Self::new(height, width, bits.iter().map(|&b| b as u8).collect())
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be positive");
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    /// The constraint that nullifies the penalty term.
    pub fn all_ones(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be positive");
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                m.data[r * width + c] = f(r, c) as u8;
            }
        }
        m
    }

    #[inline]
    pub fn is_set(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.data[row * self.width + col] = on as u8;
    }

    /// Number of 1-pixels.
    pub fn area(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_full(&self) -> bool {
        self.data.iter().all(|&v| v == 1)
    }

    pub fn is_blank(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Pixelwise `self ⊆ other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.shape() == other.shape()
            && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        ensure_same(self.shape(), other.shape())?;
        Ok(self.zip_with(other, |a, b| a | b))
    }

    pub fn intersect(&self, other: &BinaryMask) -> Result<BinaryMask> {
        ensure_same(self.shape(), other.shape())?;
        Ok(self.zip_with(other, |a, b| a & b))
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(u8, u8) -> u8) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Shifts the mask by `(dy, dx)`; pixels moved in from outside are 0.
    pub fn translate(&self, dy: isize, dx: isize) -> BinaryMask {
        let (h, w) = (self.height as isize, self.width as isize);
        BinaryMask::from_fn(self.height, self.width, |r, c| {
            let (sr, sc) = (r as isize - dy, c as isize - dx);
            sr >= 0 && sr < h && sc >= 0 && sc < w && self.is_set(sr as usize, sc as usize)
        })
    }

    /// Mask values as reals (0.0 / 1.0).
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

impl ProbMap {
    /// Builds a probability map, rejecting values outside `[0, 1]` or NaN.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGrid(format!("probability {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

impl GrayImage {
    /// Builds an image, rejecting intensities outside `[0, 1]` or NaN.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGrid(format!("intensity {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Mean intensity over the pixels set in `mask`; `None` when the mask is blank.
    pub fn masked_mean(&self, mask: &BinaryMask) -> Result<Option<f64>> {
        ensure_same(self.shape(), mask.shape())?;
        let (mut sum, mut n) = (0.0, 0usize);
        for (&v, &m) in self.data.iter().zip(mask.data()) {
            if m == 1 {
                sum += v;
                n += 1;
            }
        }
        Ok((n > 0).then(|| sum / n as f64))
    }
}

/// `Σ a_j · b_j` over two same-shape masks.
pub fn intersection_area(a: &BinaryMask, b: &BinaryMask) -> Result<usize> {
    ensure_same(a.shape(), b.shape())?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x & y) as usize)
        .sum())
}

/// Soft intersection `Σ y_j · c_j` of a probability map with a mask.
pub fn soft_intersection(y: &ProbMap, c: &BinaryMask) -> Result<f64> {
    ensure_same(y.shape(), c.shape())?;
    let mut acc = 0.0;
    for (&p, &m) in y.data.iter().zip(&c.data) {
        if m == 1 {
            acc += p;
        }
    }
    Ok(acc)
}

/// Binarizes with a strict inequality: pixel is set iff `y_j > t`.
pub fn threshold(y: &ProbMap, t: f64) -> BinaryMask {
    BinaryMask {
        height: y.height,
        width: y.width,
        data: y.data.iter().map(|&p| (p > t) as u8).collect(),
    }
}

/// All-ones mask of the given shape.
pub fn all_ones(height: usize, width: usize) -> BinaryMask {
    BinaryMask::all_ones(height, width)
}
