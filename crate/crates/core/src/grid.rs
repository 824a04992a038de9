//! Dense per-pixel grids: flow fields, score maps, depth maps and images.
//!
//! All grids are row-major with `(x, y)` addressing, `x` along the width.
//! Bilinear lookups are only defined on `[0, w-1] x [0, h-1]`; sampling
//! outside returns `None` rather than extrapolating.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("data length {got} does not match {width}x{height}")]
    BadLength {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("grid values must be finite")]
    NonFiniteValue,
    #[error("score values must be nonnegative")]
    NegativeScore,
    #[error("grids have mismatched dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

#[inline]
fn bilinear_cell(x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize, f64, f64)> {
    if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    Some((x0, y0, x - x0 as f64, y - y0 as f64))
}

macro_rules! grid_common {
    ($ty:ty) => {
        impl $ty {
            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn len(&self) -> usize {
                self.width * self.height
            }

            pub fn is_empty(&self) -> bool {
                self.len() == 0
            }

            #[inline]
            pub fn idx(&self, x: usize, y: usize) -> usize {
                debug_assert!(x < self.width && y < self.height);
                y * self.width + x
            }

            pub fn same_size(&self, other: &Self) -> bool {
                self.width == other.width && self.height == other.height
            }
        }
    };
}

/// Dense 2D displacement field in pixels: `data[i] = [u, v]`, u toward +x.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f64; 2]>,
}

grid_common!(FlowField);

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0, 0.0]; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<[f64; 2]>) -> Result<Self, GridError> {
        if data.len() != width * height {
            return Err(GridError::BadLength {
                width,
                height,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(GridError::NonFiniteValue);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f64; 2]) {
        let i = self.idx(x, y);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    /// Bilinear lookup; `None` outside `[0, w-1] x [0, h-1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let (x0, y0, fx, fy) = bilinear_cell(x, y, self.width, self.height)?;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let v00 = self.data[y0 * self.width + x0];
        let v10 = self.data[y0 * self.width + x1];
        let v01 = self.data[y1 * self.width + x0];
        let v11 = self.data[y1 * self.width + x1];
        let mut out = [0.0; 2];
        for c in 0..2 {
            let top = v00[c] * (1.0 - fx) + v10[c] * fx;
            let bot = v01[c] * (1.0 - fx) + v11[c] * fx;
            out[c] = top * (1.0 - fy) + bot * fy;
        }
        Some(out)
    }

    /// Mean L2 flow magnitude over all pixels.
    pub fn mean_magnitude(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.data.iter().map(|v| v[0].hypot(v[1])).sum();
        sum / self.data.len() as f64
    }
}

/// Per-pixel nonnegative scalar map (scores, masks, distances).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

grid_common!(ScoreMap);

impl ScoreMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(value >= 0.0 && value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self, GridError> {
        if data.len() != width * height {
            return Err(GridError::BadLength {
                width,
                height,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteValue);
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(GridError::NegativeScore);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let i = self.idx(x, y);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Pointwise product; panics on dimension mismatch.
    pub fn product(&self, other: &Self) -> Self {
        assert!(self.same_size(other), "score map dimension mismatch");
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

/// Per-pixel depth in length units plus a validity mask. Valid entries are
/// strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

grid_common!(DepthMap);

impl DepthMap {
    /// Builds a map where nonpositive or nonfinite entries are marked invalid.
    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self, GridError> {
        if data.len() != width * height {
            return Err(GridError::BadLength {
                width,
                height,
                got: data.len(),
            });
        }
        let valid = data.iter().map(|&v| v.is_finite() && v > 0.0).collect();
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.idx(x, y);
        self.valid[i].then(|| self.data[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, depth: f64) {
        let i = self.idx(x, y);
        self.data[i] = depth;
        self.valid[i] = depth.is_finite() && depth > 0.0;
    }

    pub fn raw_data(&self) -> &[f64] {
        &self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Returns a copy with every valid depth multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let data = self
            .data
            .iter()
            .zip(&self.valid)
            .map(|(&d, &v)| if v { d * s } else { d })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            data,
            valid: self.valid.clone(),
        }
    }

    /// Bilinear lookup; `None` outside the interpolable domain or when any
    /// neighbor with nonzero weight is invalid.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (x0, y0, fx, fy) = bilinear_cell(x, y, self.width, self.height)?;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let corners = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        let mut acc = 0.0;
        for (cx, cy, w) in corners {
            if w == 0.0 {
                continue;
            }
            let i = cy * self.width + cx;
            if !self.valid[i] {
                return None;
            }
            acc += w * self.data[i];
        }
        Some(acc)
    }
}

/// Planar multi-channel image with values expected in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

grid_common!(Image);

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Planar layout: channel 0 plane, then channel 1, ...
    pub fn from_planes(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, GridError> {
        if data.len() != width * height * channels {
            return Err(GridError::BadLength {
                width,
                height,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteValue);
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn at(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        self.data[c * self.width * self.height + y * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Bilinear lookup of one channel; `None` outside the interpolable domain.
    pub fn sample(&self, c: usize, x: f64, y: f64) -> Option<f64> {
        let (x0, y0, fx, fy) = bilinear_cell(x, y, self.width, self.height)?;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let v00 = self.at(c, x0, y0);
        let v10 = self.at(c, x1, y0);
        let v01 = self.at(c, x0, y1);
        let v11 = self.at(c, x1, y1);
        let top = v00 * (1.0 - fx) + v10 * fx;
        let bot = v01 * (1.0 - fx) + v11 * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }
}
