//! The quasi-illumination-invariant image representation: absolute value of
//! the Gaussian high-pass filtered image, plus the separable blur it rests on.
//!
//! The blur is evaluated in difference form, pass by pass: instead of the
//! plain weighted sum, each pass accumulates weighted differences against the
//! centre pixel. The two forms agree to machine precision, but the difference
//! form makes the high-pass response of a constant image *exactly* zero and
//! the representation *exactly* invariant to intensity polarity flips, since
//! negating every pixel difference negates every intermediate term bit for
//! bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SetRegError};
use crate::grid::{ImageGrid, ImageSet};

/// Normalized, truncated 1D Gaussian taps for separable convolution.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    /// Tap values for offsets `-radius ..= radius`, symmetric, summing to 1.
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(SetRegError::InvalidConfig(format!(
                "gaussian sigma must be positive and finite, got {sigma}"
            )));
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let mut weights = vec![0.0; 2 * radius + 1];
        let inv = 1.0 / (2.0 * sigma * sigma);
        weights[radius] = 1.0;
        for t in 1..=radius {
            let w = (-((t * t) as f64) * inv).exp();
            weights[radius + t] = w;
            weights[radius - t] = w; // mirrored, bit-identical
        }
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        // absorb the rounding residue into the centre tap
        let resum: f64 = weights.iter().sum();
        weights[radius] += 1.0 - resum;
        Ok(GaussianKernel {
            sigma,
            radius,
            weights,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    fn tap(&self, t: usize) -> f64 {
        self.weights[self.radius + t]
    }
}

/// Decreasing sequence of blur bandwidths, coarse to fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidSchedule {
    sigmas: Vec<f64>,
}

impl PyramidSchedule {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(SetRegError::InvalidConfig("empty sigma schedule".into()));
        }
        for pair in sigmas.windows(2) {
            if !(pair[1] < pair[0]) {
                return Err(SetRegError::InvalidConfig(format!(
                    "sigma schedule must be strictly decreasing, got {sigmas:?}"
                )));
            }
        }
        if sigmas.iter().any(|&s| !(s > 0.0)) {
            return Err(SetRegError::InvalidConfig(format!(
                "sigma schedule must be positive, got {sigmas:?}"
            )));
        }
        Ok(PyramidSchedule { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

impl Default for PyramidSchedule {
    fn default() -> Self {
        PyramidSchedule::new(vec![40.0, 20.0, 8.0, 3.0]).unwrap()
    }
}

/// ABS-HP filtered image tagged with the bandwidth that produced it.
#[derive(Debug, Clone)]
pub struct Representation {
    grid: ImageGrid,
    sigma: f64,
    source_id: String,
}

impl Representation {
    /// Wraps an existing nonnegative grid as a representation.
    pub fn new(grid: ImageGrid, sigma: f64, source_id: impl Into<String>) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(SetRegError::InvalidConfig(format!(
                "representation sigma must be positive, got {sigma}"
            )));
        }
        if grid.min_value() < 0.0 {
            return Err(SetRegError::InvalidImage(
                "representation values must be nonnegative".into(),
            ));
        }
        Ok(Representation {
            grid,
            sigma,
            source_id: source_id.into(),
        })
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

// Horizontal difference accumulator:
// P(x,y) = sum_t w_t * [(J(x-t,y) - J(x,y)) + (J(x+t,y) - J(x,y))],
// borders replicated by index clamping.
fn horizontal_diff(img: &ImageGrid, k: &GaussianKernel) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let r = k.radius();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = img.row(y);
        let dst = &mut out[y * w..(y + 1) * w];
        for x in 0..w {
            let c = row[x];
            let mut acc = 0.0;
            for t in 1..=r {
                let l = row[x.saturating_sub(t)];
                let rr = row[(x + t).min(w - 1)];
                acc += k.tap(t) * ((l - c) + (rr - c));
            }
            dst[x] = acc;
        }
    }
    out
}

// Vertical difference accumulator over the implicit horizontal result
// H = J + P, kept as the pair (J, P) so no rounded intermediate image is
// formed:
// Q(x,y) = sum_s w_s * [Hd(x, y-s) + Hd(x, y+s)],
// Hd(x,y') = (J(x,y') - J(x,y)) + (P(x,y') - P(x,y)).
fn vertical_diff(img: &ImageGrid, p: &[f64], k: &GaussianKernel) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let r = k.radius();
    let mut out = vec![0.0; w * h];
    let j = img.data();
    for y in 0..h {
        let (jc, pc) = (&j[y * w..(y + 1) * w], &p[y * w..(y + 1) * w]);
        let acc = &mut out[y * w..(y + 1) * w];
        for s in 1..=r {
            let ym = y.saturating_sub(s);
            let yp = (y + s).min(h - 1);
            let (jm, pm) = (&j[ym * w..(ym + 1) * w], &p[ym * w..(ym + 1) * w]);
            let (jp, pp) = (&j[yp * w..(yp + 1) * w], &p[yp * w..(yp + 1) * w]);
            let w_s = k.tap(s);
            for x in 0..w {
                let hd_m = (jm[x] - jc[x]) + (pm[x] - pc[x]);
                let hd_p = (jp[x] - jc[x]) + (pp[x] - pc[x]);
                acc[x] += w_s * (hd_m + hd_p);
            }
        }
    }
    out
}

/// Separable Gaussian blur (horizontal then vertical pass) with replicated
/// borders. Matches direct 2D convolution with the same kernel to within
/// accumulated rounding.
pub fn gaussian_blur(img: &ImageGrid, k: &GaussianKernel) -> ImageGrid {
    let p = horizontal_diff(img, k);
    let q = vertical_diff(img, &p, k);
    let data: Vec<f64> = img
        .data()
        .iter()
        .zip(p.iter().zip(&q))
        .map(|(&j, (&p, &q))| (j + p) + q)
        .collect();
    ImageGrid::from_raw(img.width(), img.height(), data)
}

/// ABS-HP representation: `|img - gaussian_blur(img, G(sigma))|`.
pub fn abs_highpass(
    img: &ImageGrid,
    sigma: f64,
    source_id: impl Into<String>,
) -> Result<Representation> {
    let k = GaussianKernel::new(sigma)?;
    let p = horizontal_diff(img, &k);
    let q = vertical_diff(img, &p, &k);
    // blur = J + (P + Q), so the high-pass residue is -(P + Q)
    let data: Vec<f64> = p.iter().zip(&q).map(|(&p, &q)| (p + q).abs()).collect();
    Ok(Representation {
        grid: ImageGrid::from_raw(img.width(), img.height(), data),
        sigma,
        source_id: source_id.into(),
    })
}

/// ABS-HP representations of every image in the set at one bandwidth,
/// computed in parallel.
pub fn representations(set: &ImageSet, sigma: f64) -> Result<Vec<Representation>> {
    GaussianKernel::new(sigma)?; // validate once before spawning work
    set.images()
        .par_iter()
        .zip(set.ids().par_iter())
        .map(|(img, id)| abs_highpass(img, sigma, id.clone()))
        .collect()
}
