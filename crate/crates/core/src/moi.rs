//! Map-of-interest construction.
//!
//! The pipeline takes a single-channel compressed feature map, the HVN and
//! user detection confidences, and a region-of-interest mask, and produces
//! the per-user grid weights consumed by the scheduler:
//!
//! ```text
//! compressed --local_correlation--> p --entropy_map--> E --info_mask--> M_info
//! (q_hvn, q_user) --confidence_map--> O
//! MoI = O * M_info * RoI   (element-wise)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Window size used when none is configured.
pub const DEFAULT_WINDOW: usize = 5;
/// Informative fraction used when none is configured.
pub const DEFAULT_ETA: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MoiError {
    #[error("grid map must be at least 1x1 (got {h}x{w})")]
    EmptyMap { h: usize, w: usize },
    #[error("grid map data has {got} values, expected {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("grid map value at cell {index} is not finite")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("window size must be at least 1")]
    ZeroWindow,
    #[error("correlation score at cell {index} is {value}, outside (0, 1)")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("eta must lie in (0, 1], got {0}")]
    BadEta(f64),
    #[error("mask value at cell {index} is {value}, expected 0 or 1")]
    NotBinary { index: usize, value: f64 },
}

/// H x W real-valued map stored row-major.
///
/// Serialized as `{h, w, data}` with `data` the flat row-major array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridMap")]
pub struct GridMap {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGridMap {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl TryFrom<RawGridMap> for GridMap {
    type Error = MoiError;

    fn try_from(raw: RawGridMap) -> Result<Self, Self::Error> {
        GridMap::new(raw.h, raw.w, raw.data)
    }
}

impl GridMap {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self, MoiError> {
        if h == 0 || w == 0 {
            return Err(MoiError::EmptyMap { h, w });
        }
        if data.len() != h * w {
            return Err(MoiError::DataLength {
                expected: h * w,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(MoiError::NonFinite { index });
        }
        Ok(Self { h, w, data })
    }

    pub fn filled(h: usize, w: usize, value: f64) -> Result<Self, MoiError> {
        Self::new(h, w, vec![value; h * w])
    }

    pub fn from_fn(
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, MoiError> {
        let mut data = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                data.push(f(i, j));
            }
        }
        Self::new(h, w, data)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.w + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Number of cells equal to one.
    pub fn popcount(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1.0).count()
    }

    fn check_same_shape(&self, other: &GridMap) -> Result<(), MoiError> {
        if self.h != other.h || self.w != other.w {
            return Err(MoiError::DimensionMismatch(self.h, self.w, other.h, other.w));
        }
        Ok(())
    }

    fn check_binary(&self) -> Result<(), MoiError> {
        match self.data.iter().position(|&v| v != 0.0 && v != 1.0) {
            Some(index) => Err(MoiError::NotBinary {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> GridMap {
        GridMap {
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Local correlation score of every cell.
///
/// `p[i][j]` averages `sigmoid(F[i+a][j+b] - F[i][j])` over the window
/// offsets `a, b in 0..window`. Offsets past the bottom/right border are
/// clamped to the last row/column (replicate padding).
pub fn local_correlation(compressed: &GridMap, window: usize) -> Result<GridMap, MoiError> {
    if window == 0 {
        return Err(MoiError::ZeroWindow);
    }
    let (h, w) = (compressed.h, compressed.w);
    let norm = (window * window) as f64;
    GridMap::from_fn(h, w, |i, j| {
        let center = compressed.get(i, j);
        let mut acc = 0.0;
        for a in 0..window {
            let ii = (i + a).min(h - 1);
            for b in 0..window {
                let jj = (j + b).min(w - 1);
                acc += sigmoid(compressed.get(ii, jj) - center);
            }
        }
        acc / norm
    })
}

/// Information density `p * ln(p)` per cell.
pub fn entropy_map(p: &GridMap) -> Result<GridMap, MoiError> {
    if let Some(index) = p.data.iter().position(|&v| v <= 0.0 || v >= 1.0) {
        return Err(MoiError::ScoreOutOfRange {
            index,
            value: p.data[index],
        });
    }
    Ok(p.map(|v| v * v.ln()))
}

/// Number of cells kept by [`info_mask`] for `eta` over `cells` cells.
///
/// The product is snapped before the ceiling so that e.g. `0.3 * 10`
/// keeps 3 cells rather than 4.
pub fn informative_count(eta: f64, cells: usize) -> usize {
    let x = eta * cells as f64;
    let snapped = if (x - x.round()).abs() <= 1e-9 * x.max(1.0) {
        x.round()
    } else {
        x.ceil()
    };
    (snapped as usize).clamp(1, cells)
}

/// Binary mask over the top-`eta` fraction of entropy values.
///
/// The largest values (closest to zero, i.e. the most discrepant
/// neighbourhoods) are kept; ties go to the lower row-major index.
pub fn info_mask(entropy: &GridMap, eta: f64) -> Result<GridMap, MoiError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(MoiError::BadEta(eta));
    }
    let keep = informative_count(eta, entropy.len());
    let mut order: Vec<usize> = (0..entropy.len()).collect();
    order.sort_by(|&a, &b| {
        entropy.data[b]
            .total_cmp(&entropy.data[a])
            .then(a.cmp(&b))
    });
    let mut data = vec![0.0; entropy.len()];
    for &idx in &order[..keep] {
        data[idx] = 1.0;
    }
    Ok(GridMap {
        h: entropy.h,
        w: entropy.w,
        data,
    })
}

/// Confidence gap `max(q_hvn - q_user, 0)`.
pub fn confidence_map(q_hvn: &GridMap, q_user: &GridMap) -> Result<GridMap, MoiError> {
    q_hvn.check_same_shape(q_user)?;
    let data = q_hvn
        .data
        .iter()
        .zip(&q_user.data)
        .map(|(&a, &b)| (a - b).max(0.0))
        .collect();
    Ok(GridMap {
        h: q_hvn.h,
        w: q_hvn.w,
        data,
    })
}

/// Element-wise product of confidence gap, informativeness and RoI.
pub fn build_moi(conf: &GridMap, info: &GridMap, roi: &GridMap) -> Result<GridMap, MoiError> {
    conf.check_same_shape(info)?;
    conf.check_same_shape(roi)?;
    info.check_binary()?;
    roi.check_binary()?;
    let data = conf
        .data
        .iter()
        .zip(&info.data)
        .zip(&roi.data)
        .map(|((&c, &i), &r)| c * i * r)
        .collect();
    Ok(GridMap {
        h: conf.h,
        w: conf.w,
        data,
    })
}

/// Informativeness mask straight from a compressed feature map.
pub fn informativeness(
    compressed: &GridMap,
    window: usize,
    eta: f64,
) -> Result<GridMap, MoiError> {
    let p = local_correlation(compressed, window)?;
    let e = entropy_map(&p)?;
    info_mask(&e, eta)
}
