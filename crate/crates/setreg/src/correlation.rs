//! Per-edge cross-correlation machinery: the full numerator table computed in
//! the Fourier domain, overlap-restricted denominators answered from integral
//! images, and the windowed O(1) coefficient lookup the optimizer drives.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SetRegError};
use crate::grid::{integral_image, rect_sum, ImageGrid, Shift};
use crate::representation::Representation;

/// Coefficient for shifts outside the search window or with too little
/// overlap: worse than any attainable value, so ascent is repelled.
pub const WINDOW_SENTINEL: f64 = -1.0;

/// Overlap energies below this are treated as uninformative (coefficient 0).
pub const ZERO_ENERGY_EPS: f64 = 1e-12;

/// Search-window bound and overlap gate for coefficient lookups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParams {
    /// Largest |dx| and |dy| the optimizer may probe, in pixels.
    pub max_shift: i32,
    /// Minimum overlap area as a fraction of the image area.
    pub min_overlap_frac: f64,
}

impl Default for CorrelationParams {
    fn default() -> Self {
        CorrelationParams {
            max_shift: 128,
            min_overlap_frac: 0.25,
        }
    }
}

impl CorrelationParams {
    fn validate(&self, width: usize, height: usize) -> Result<()> {
        let limit = width.min(height) as i32;
        if self.max_shift < 0 || self.max_shift >= limit {
            return Err(SetRegError::InvalidConfig(format!(
                "max_shift {} out of range 0..{limit} for {width}x{height} images",
                self.max_shift
            )));
        }
        if !(self.min_overlap_frac > 0.0 && self.min_overlap_frac <= 1.0) {
            return Err(SetRegError::InvalidConfig(format!(
                "min_overlap_frac {} outside (0, 1]",
                self.min_overlap_frac
            )));
        }
        Ok(())
    }
}

/// Dense table over all integer shifts `[-(w-1)..w-1] x [-(h-1)..h-1]`.
#[derive(Debug, Clone)]
pub struct ShiftTable {
    img_width: usize,
    img_height: usize,
    data: Vec<f64>, // (2h-1) rows x (2w-1) cols
}

impl ShiftTable {
    fn rows(&self) -> usize {
        2 * self.img_height - 1
    }

    fn cols(&self) -> usize {
        2 * self.img_width - 1
    }

    /// Table dimensions `(2w-1, 2h-1)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.cols(), self.rows())
    }

    #[inline]
    pub fn at(&self, dx: i32, dy: i32) -> f64 {
        debug_assert!(dx.unsigned_abs() as usize <= self.img_width - 1);
        debug_assert!(dy.unsigned_abs() as usize <= self.img_height - 1);
        let col = (dx + self.img_width as i32 - 1) as usize;
        let row = (dy + self.img_height as i32 - 1) as usize;
        self.data[row * self.cols() + col]
    }

    /// Copies the table into a grid (for debug dumps).
    pub fn to_grid(&self) -> ImageGrid {
        ImageGrid::from_raw(self.cols(), self.rows(), self.data.clone())
    }
}

// Smallest n >= target whose prime factors are all in {2, 3, 5}, so padded
// transforms stay near O(N log N).
fn next_smooth(target: usize) -> usize {
    let mut n = target.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

// Planned 1D transforms for one padded 2D size. Spectra are kept in the
// transposed layout (pw rows of ph) between the two passes.
struct Fft2 {
    pw: usize,
    ph: usize,
    fwd_w: Arc<dyn Fft<f64>>,
    fwd_h: Arc<dyn Fft<f64>>,
    inv_w: Arc<dyn Fft<f64>>,
    inv_h: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(pw: usize, ph: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            pw,
            ph,
            fwd_w: planner.plan_fft_forward(pw),
            fwd_h: planner.plan_fft_forward(ph),
            inv_w: planner.plan_fft_inverse(pw),
            inv_h: planner.plan_fft_inverse(ph),
        }
    }

    fn for_image(width: usize, height: usize) -> Self {
        Fft2::new(next_smooth(2 * width - 1), next_smooth(2 * height - 1))
    }

    /// Zero-padded forward transform; result is in transposed layout.
    fn forward(&self, g: &ImageGrid) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.pw * self.ph];
        for y in 0..g.height() {
            for (x, &v) in g.row(y).iter().enumerate() {
                buf[y * self.pw + x] = Complex::new(v, 0.0);
            }
        }
        self.fwd_w.process(&mut buf);
        let mut t = vec![Complex::new(0.0, 0.0); self.pw * self.ph];
        transpose(&buf, &mut t, self.pw, self.ph);
        self.fwd_h.process(&mut t);
        t
    }

    /// Inverse of a transposed-layout spectrum back to spatial layout
    /// (ph rows of pw). Unnormalized: values carry a factor of pw * ph.
    fn inverse(&self, mut spec: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        self.inv_h.process(&mut spec);
        let mut buf = vec![Complex::new(0.0, 0.0); self.pw * self.ph];
        transpose(&spec, &mut buf, self.ph, self.pw);
        self.inv_w.process(&mut buf);
        buf
    }
}

// dst becomes src_cols rows of src_rows; blocked for cache behaviour.
fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], src_cols: usize, src_rows: usize) {
    const B: usize = 32;
    for rb in (0..src_rows).step_by(B) {
        for cb in (0..src_cols).step_by(B) {
            for r in rb..(rb + B).min(src_rows) {
                for c in cb..(cb + B).min(src_cols) {
                    dst[c * src_rows + r] = src[r * src_cols + c];
                }
            }
        }
    }
}

// conj(F(zi)) . F(zj), inverted and unwrapped into the shift-indexed table:
// numerator(dr) = sum_r zi(r) * zj(r + dr).
fn numerator_from_spectra(
    fft2: &Fft2,
    spec_i: &[Complex<f64>],
    spec_j: &[Complex<f64>],
    width: usize,
    height: usize,
) -> ShiftTable {
    let product: Vec<Complex<f64>> = spec_i
        .iter()
        .zip(spec_j)
        .map(|(a, b)| a.conj() * b)
        .collect();
    let spatial = fft2.inverse(product);
    let scale = 1.0 / (fft2.pw * fft2.ph) as f64;
    let (cols, rows) = (2 * width - 1, 2 * height - 1);
    let mut data = vec![0.0; cols * rows];
    for dy in -(height as i64 - 1)..=(height as i64 - 1) {
        let src_row = dy.rem_euclid(fft2.ph as i64) as usize;
        let dst_row = (dy + height as i64 - 1) as usize;
        for dx in -(width as i64 - 1)..=(width as i64 - 1) {
            let src_col = dx.rem_euclid(fft2.pw as i64) as usize;
            let dst_col = (dx + width as i64 - 1) as usize;
            data[dst_row * cols + dst_col] = spatial[src_row * fft2.pw + src_col].re * scale;
        }
    }
    ShiftTable {
        img_width: width,
        img_height: height,
        data,
    }
}

fn check_same_dims(zi: &Representation, zj: &Representation) -> Result<(usize, usize)> {
    if !zi.grid().same_size(zj.grid()) {
        return Err(SetRegError::DimensionMismatch(format!(
            "representations {}x{} vs {}x{}",
            zi.grid().width(),
            zi.grid().height(),
            zj.grid().width(),
            zj.grid().height()
        )));
    }
    Ok((zi.grid().width(), zi.grid().height()))
}

/// Full cross-correlation numerator table via the convolution theorem:
/// both grids are zero-padded to at least `(2w-1) x (2h-1)`, transformed,
/// conjugate-multiplied and inverse-transformed.
pub fn cross_correlate_full(zi: &Representation, zj: &Representation) -> Result<ShiftTable> {
    let (w, h) = check_same_dims(zi, zj)?;
    let fft2 = Fft2::for_image(w, h);
    let spec_i = fft2.forward(zi.grid());
    let spec_j = fft2.forward(zj.grid());
    Ok(numerator_from_spectra(&fft2, &spec_i, &spec_j, w, h))
}

// Integral image of the element-wise square, plus the total energy.
fn squared_integral(g: &ImageGrid) -> (ImageGrid, f64) {
    let sq = ImageGrid::from_raw(
        g.width(),
        g.height(),
        g.data().iter().map(|&v| v * v).collect(),
    );
    let integral = integral_image(&sq);
    let total = integral.at(g.width() - 1, g.height() - 1);
    (integral, total)
}

/// Precomputed correlation data for one ordered image pair.
#[derive(Debug, Clone)]
pub struct CorrelationTable {
    edge: (usize, usize),
    width: usize,
    height: usize,
    numerator: ShiftTable,
    denom_i: Arc<ImageGrid>,
    denom_j: Arc<ImageGrid>,
    degenerate: bool,
    params: CorrelationParams,
}

impl CorrelationTable {
    /// The ordered pair of image indices this table correlates.
    pub fn edge(&self) -> (usize, usize) {
        self.edge
    }

    /// True when either representation carries essentially no energy, so
    /// every in-window lookup is 0.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn params(&self) -> CorrelationParams {
        self.params
    }

    pub fn numerator(&self) -> &ShiftTable {
        &self.numerator
    }

    /// Normalized cross-correlation coefficient at integer shift `dr`.
    /// Total over all shifts: out-of-window or under-overlap shifts return
    /// the sentinel -1, zero-energy overlaps return 0.
    pub fn lookup(&self, dr: Shift) -> f64 {
        let (w, h) = (self.width as i64, self.height as i64);
        let (dx, dy) = (dr.dx as i64, dr.dy as i64);
        let ms = self.params.max_shift as i64;
        if dx.abs() > ms || dy.abs() > ms {
            return WINDOW_SENTINEL;
        }
        let (ow, oh) = (w - dx.abs(), h - dy.abs());
        if ow <= 0 || oh <= 0 {
            return WINDOW_SENTINEL;
        }
        if ((ow * oh) as f64) < self.params.min_overlap_frac * (w * h) as f64 {
            return WINDOW_SENTINEL;
        }
        // overlap rectangles extend from a corner of each image
        let (ix0, iy0) = ((-dx).max(0) as usize, (-dy).max(0) as usize);
        let (ix1, iy1) = ((w - 1 - dx.max(0)) as usize, (h - 1 - dy.max(0)) as usize);
        let (jx0, jy0) = (dx.max(0) as usize, dy.max(0) as usize);
        let (jx1, jy1) = ((w - 1 + dx.min(0)) as usize, (h - 1 + dy.min(0)) as usize);
        let energy_i = rect_sum(&self.denom_i, ix0, iy0, ix1, iy1);
        let energy_j = rect_sum(&self.denom_j, jx0, jy0, jx1, jy1);
        if energy_i < ZERO_ENERGY_EPS || energy_j < ZERO_ENERGY_EPS {
            return 0.0;
        }
        self.numerator.at(dr.dx, dr.dy) / (energy_i * energy_j).sqrt()
    }

    /// Highest-coefficient in-window shift (ties broken towards the first
    /// scanned, row-major from the most negative shift).
    pub fn argmax(&self) -> (Shift, f64) {
        let ms = self.params.max_shift;
        let mut best = (Shift::new(0, 0), f64::NEG_INFINITY);
        for dy in -ms..=ms {
            for dx in -ms..=ms {
                let v = self.lookup(Shift::new(dx, dy));
                if v > best.1 {
                    best = (Shift::new(dx, dy), v);
                }
            }
        }
        best
    }
}

/// Builds the correlation table for one representation pair: FFT numerator
/// plus integral images of the element-wise squares for the denominators.
pub fn build_table(
    zi: &Representation,
    zj: &Representation,
    params: CorrelationParams,
) -> Result<CorrelationTable> {
    let (w, h) = check_same_dims(zi, zj)?;
    params.validate(w, h)?;
    let fft2 = Fft2::for_image(w, h);
    let spec_i = fft2.forward(zi.grid());
    let spec_j = fft2.forward(zj.grid());
    let (denom_i, energy_i) = squared_integral(zi.grid());
    let (denom_j, energy_j) = squared_integral(zj.grid());
    Ok(CorrelationTable {
        edge: (0, 1),
        width: w,
        height: h,
        numerator: numerator_from_spectra(&fft2, &spec_i, &spec_j, w, h),
        denom_i: Arc::new(denom_i),
        denom_j: Arc::new(denom_j),
        degenerate: energy_i < ZERO_ENERGY_EPS || energy_j < ZERO_ENERGY_EPS,
        params,
    })
}

/// Correlation tables for a set of edges, keyed by the canonical (low, high)
/// pair. The opposite direction is served through transpose symmetry:
/// `rho(j, i, dr) = rho(i, j, -dr)`.
#[derive(Debug)]
pub struct EdgeTables {
    tables: BTreeMap<(usize, usize), CorrelationTable>,
    params: CorrelationParams,
    sigma: f64,
}

impl EdgeTables {
    pub fn params(&self) -> CorrelationParams {
        self.params
    }

    /// Smallest representation bandwidth among the imaged edges; bounds the
    /// spatial reach of the correlation surfaces at this level.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// The table backing the (i, j) edge, if built.
    pub fn get(&self, i: usize, j: usize) -> Option<&CorrelationTable> {
        self.tables.get(&(i.min(j), i.max(j)))
    }

    /// Coefficient for the ordered edge (i, j) at relative shift `dr`.
    pub fn rho(&self, i: usize, j: usize, dr: Shift) -> Option<f64> {
        let table = self.tables.get(&(i.min(j), i.max(j)))?;
        Some(if i < j {
            table.lookup(dr)
        } else {
            table.lookup(-dr)
        })
    }
}

/// Builds tables for every listed edge, sharing forward transforms and
/// squared integral images across edges. Edges are deduplicated to their
/// canonical orientation; construction is parallel across images and edges.
pub fn build_tables(
    reps: &[Representation],
    edges: &[(usize, usize)],
    params: CorrelationParams,
) -> Result<EdgeTables> {
    if reps.is_empty() {
        return Err(SetRegError::InvalidInput("no representations".into()));
    }
    let (w, h) = (reps[0].grid().width(), reps[0].grid().height());
    for z in reps {
        if z.grid().width() != w || z.grid().height() != h {
            return Err(SetRegError::DimensionMismatch(format!(
                "representation '{}' is {}x{}, expected {w}x{h}",
                z.source_id(),
                z.grid().width(),
                z.grid().height()
            )));
        }
    }
    params.validate(w, h)?;

    let mut pairs = BTreeSet::new();
    for &(i, j) in edges {
        if i == j || i >= reps.len() || j >= reps.len() {
            return Err(SetRegError::InvalidInput(format!(
                "edge ({i}, {j}) invalid for {} representations",
                reps.len()
            )));
        }
        pairs.insert((i.min(j), i.max(j)));
    }
    let pairs: Vec<(usize, usize)> = pairs.into_iter().collect();

    let mut needed: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    needed.sort_unstable();
    needed.dedup();

    let fft2 = Fft2::for_image(w, h);

    let per_image: BTreeMap<usize, (Arc<Vec<Complex<f64>>>, Arc<ImageGrid>, f64)> = needed
        .par_iter()
        .map(|&idx| {
            let spec = Arc::new(fft2.forward(reps[idx].grid()));
            let (integral, energy) = squared_integral(reps[idx].grid());
            (idx, (spec, Arc::new(integral), energy))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    let tables: Vec<((usize, usize), CorrelationTable)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (spec_i, denom_i, energy_i) = &per_image[&i];
            let (spec_j, denom_j, energy_j) = &per_image[&j];
            let table = CorrelationTable {
                edge: (i, j),
                width: w,
                height: h,
                numerator: numerator_from_spectra(&fft2, spec_i, spec_j, w, h),
                denom_i: Arc::clone(denom_i),
                denom_j: Arc::clone(denom_j),
                degenerate: *energy_i < ZERO_ENERGY_EPS || *energy_j < ZERO_ENERGY_EPS,
                params,
            };
            ((i, j), table)
        })
        .collect();

    let sigma = needed
        .iter()
        .map(|&idx| reps[idx].sigma())
        .fold(f64::INFINITY, f64::min);
    Ok(EdgeTables {
        tables: tables.into_iter().collect(),
        params,
        sigma: if sigma.is_finite() { sigma } else { 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn rep(grid: ImageGrid, id: &str) -> Representation {
        Representation::new(grid, 1.0, id).unwrap()
    }

    fn random_rep(w: usize, h: usize, rng: &mut impl Rng, id: &str) -> Representation {
        rep(
            ImageGrid::from_fn(w, h, |_, _| rng.random_range(0.0..1.0)).unwrap(),
            id,
        )
    }

    // brute-force oracle: spatial-domain cross-correlation by quadruple loop
    fn spatial_numerator(zi: &ImageGrid, zj: &ImageGrid, dx: i32, dy: i32) -> f64 {
        let (w, h) = (zi.width() as i32, zi.height() as i32);
        let mut acc = 0.0;
        for y in 0..h {
            for x in 0..w {
                let (xj, yj) = (x + dx, y + dy);
                if xj >= 0 && xj < w && yj >= 0 && yj < h {
                    acc += zi.at(x as usize, y as usize) * zj.at(xj as usize, yj as usize);
                }
            }
        }
        acc
    }

    // brute-force oracle: overlap-restricted normalized cross-correlation
    fn spatial_ncc(zi: &ImageGrid, zj: &ImageGrid, dx: i32, dy: i32) -> f64 {
        let (w, h) = (zi.width() as i32, zi.height() as i32);
        let (mut num, mut ei, mut ej) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let (xj, yj) = (x + dx, y + dy);
                if xj >= 0 && xj < w && yj >= 0 && yj < h {
                    let a = zi.at(x as usize, y as usize);
                    let b = zj.at(xj as usize, yj as usize);
                    num += a * b;
                    ei += a * a;
                    ej += b * b;
                }
            }
        }
        num / (ei * ej).sqrt()
    }

    #[test]
    fn next_smooth_values() {
        assert_eq!(next_smooth(1), 1);
        assert_eq!(next_smooth(31), 32);
        assert_eq!(next_smooth(97), 100);
        assert_eq!(next_smooth(511), 512);
        assert_eq!(next_smooth(1023), 1024);
    }

    #[test]
    fn impulse_correlation() {
        let zi = rep(
            ImageGrid::from_fn(8, 8, |x, y| if x == 0 && y == 0 { 1.0 } else { 0.0 }).unwrap(),
            "i",
        );
        let zj = rep(
            ImageGrid::from_fn(8, 8, |x, y| if x == 2 && y == 3 { 1.0 } else { 0.0 }).unwrap(),
            "j",
        );
        let table = cross_correlate_full(&zi, &zj).unwrap();
        for dy in -7..=7 {
            for dx in -7..=7 {
                let want = if dx == 2 && dy == 3 { 1.0 } else { 0.0 };
                assert!(
                    (table.at(dx, dy) - want).abs() < 1e-9,
                    "({dx},{dy}) = {}",
                    table.at(dx, dy)
                );
            }
        }
    }

    #[test]
    fn constant_correlation_counts_overlap() {
        let k = 6usize;
        let v = 0.5;
        let z = rep(ImageGrid::constant(k, k, v).unwrap(), "c");
        let table = cross_correlate_full(&z, &z).unwrap();
        for dy in -(k as i32 - 1)..=(k as i32 - 1) {
            for dx in -(k as i32 - 1)..=(k as i32 - 1) {
                let overlap = (k as i32 - dx.abs()) as f64 * (k as i32 - dy.abs()) as f64;
                assert!((table.at(dx, dy) - overlap * v * v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fft_matches_spatial_quadruple_loop() {
        let mut rng = StdRng::seed_from_u64(21);
        let zi = random_rep(16, 16, &mut rng, "i");
        let zj = random_rep(16, 16, &mut rng, "j");
        let table = cross_correlate_full(&zi, &zj).unwrap();
        for dy in -15..=15 {
            for dx in -15..=15 {
                let want = spatial_numerator(zi.grid(), zj.grid(), dx, dy);
                assert!(
                    (table.at(dx, dy) - want).abs() < 1e-6,
                    "({dx},{dy}): {} vs {want}",
                    table.at(dx, dy)
                );
            }
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let a = rep(ImageGrid::constant(8, 8, 1.0).unwrap(), "a");
        let b = rep(ImageGrid::constant(8, 9, 1.0).unwrap(), "b");
        assert!(cross_correlate_full(&a, &b).is_err());
    }

    #[test]
    fn self_correlation_at_zero_is_one() {
        let mut rng = StdRng::seed_from_u64(5);
        let z = random_rep(12, 12, &mut rng, "z");
        let params = CorrelationParams {
            max_shift: 4,
            min_overlap_frac: 0.25,
        };
        let table = build_table(&z, &z, params).unwrap();
        assert!((table.lookup(Shift::new(0, 0)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_energy_edge_is_degenerate() {
        let z = rep(ImageGrid::constant(10, 10, 0.0).unwrap(), "z");
        let mut rng = StdRng::seed_from_u64(6);
        let other = random_rep(10, 10, &mut rng, "o");
        let params = CorrelationParams {
            max_shift: 3,
            min_overlap_frac: 0.25,
        };
        let table = build_table(&z, &other, params).unwrap();
        assert!(table.is_degenerate());
        assert_eq!(table.lookup(Shift::new(0, 0)), 0.0);
        assert_eq!(table.lookup(Shift::new(1, -2)), 0.0);
        // out-of-window stays sentinel-valued even for degenerate edges
        assert_eq!(table.lookup(Shift::new(9, 0)), WINDOW_SENTINEL);
    }

    #[test]
    fn lookup_matches_overlap_restricted_oracle() {
        let mut rng = StdRng::seed_from_u64(33);
        let zi = random_rep(12, 12, &mut rng, "i");
        let zj = random_rep(12, 12, &mut rng, "j");
        let params = CorrelationParams {
            max_shift: 4,
            min_overlap_frac: 0.1,
        };
        let table = build_table(&zi, &zj, params).unwrap();
        for dy in -4..=4 {
            for dx in -4..=4 {
                let want = spatial_ncc(zi.grid(), zj.grid(), dx, dy);
                let got = table.lookup(Shift::new(dx, dy));
                assert!((got - want).abs() < 1e-9, "({dx},{dy}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn window_and_overlap_sentinels() {
        let mut rng = StdRng::seed_from_u64(8);
        let zi = random_rep(16, 16, &mut rng, "i");
        let zj = random_rep(16, 16, &mut rng, "j");
        let params = CorrelationParams {
            max_shift: 10,
            min_overlap_frac: 0.5,
        };
        let table = build_table(&zi, &zj, params).unwrap();
        assert_eq!(table.lookup(Shift::new(11, 0)), WINDOW_SENTINEL);
        assert_eq!(table.lookup(Shift::new(0, -11)), WINDOW_SENTINEL);
        // |dx| = 10 is in-window but overlap (6/16) * 1 < 0.5
        assert_eq!(table.lookup(Shift::new(10, 0)), WINDOW_SENTINEL);
        assert!(table.lookup(Shift::new(2, 2)) > -1.0);
    }

    #[test]
    fn transpose_symmetry() {
        let mut rng = StdRng::seed_from_u64(13);
        let zi = random_rep(14, 11, &mut rng, "i");
        let zj = random_rep(14, 11, &mut rng, "j");
        let params = CorrelationParams {
            max_shift: 5,
            min_overlap_frac: 0.2,
        };
        let fwd = build_table(&zi, &zj, params).unwrap();
        let bwd = build_table(&zj, &zi, params).unwrap();
        for dy in -5..=5 {
            for dx in -5..=5 {
                let a = fwd.lookup(Shift::new(dx, dy));
                let b = bwd.lookup(Shift::new(-dx, -dy));
                assert!((a - b).abs() < 1e-9, "({dx},{dy}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn in_window_values_bounded() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..5 {
            let zi = random_rep(12, 12, &mut rng, "i");
            let zj = random_rep(12, 12, &mut rng, "j");
            let params = CorrelationParams {
                max_shift: 6,
                min_overlap_frac: 0.1,
            };
            let table = build_table(&zi, &zj, params).unwrap();
            for dy in -6..=6 {
                for dx in -6..=6 {
                    let v = table.lookup(Shift::new(dx, dy));
                    if v != WINDOW_SENTINEL {
                        assert!((0.0..=1.0 + 1e-9).contains(&v), "({dx},{dy}) = {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn denominators_match_direct_sums() {
        let mut rng = StdRng::seed_from_u64(29);
        let zi = random_rep(16, 16, &mut rng, "i");
        let zj = random_rep(16, 16, &mut rng, "j");
        let params = CorrelationParams {
            max_shift: 15,
            min_overlap_frac: 1e-6,
        };
        let table = build_table(&zi, &zj, params).unwrap();
        let (w, h) = (16i64, 16i64);
        for dy in -15..=15i64 {
            for dx in -15..=15i64 {
                // direct overlap energies
                let (mut ei, mut ej) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let (xj, yj) = (x + dx, y + dy);
                        if xj >= 0 && xj < w && yj >= 0 && yj < h {
                            let a = zi.grid().at(x as usize, y as usize);
                            let b = zj.grid().at(xj as usize, yj as usize);
                            ei += a * a;
                            ej += b * b;
                        }
                    }
                }
                // integral-image energies over the same corner rectangles
                let (ix0, iy0) = ((-dx).max(0) as usize, (-dy).max(0) as usize);
                let (ix1, iy1) = ((w - 1 - dx.max(0)) as usize, (h - 1 - dy.max(0)) as usize);
                let (jx0, jy0) = (dx.max(0) as usize, dy.max(0) as usize);
                let (jx1, jy1) = ((w - 1 + dx.min(0)) as usize, (h - 1 + dy.min(0)) as usize);
                let qi = rect_sum(&table.denom_i, ix0, iy0, ix1, iy1);
                let qj = rect_sum(&table.denom_j, jx0, jy0, jx1, jy1);
                assert!((qi - ei).abs() <= 1e-9 * ei.abs(), "({dx},{dy}): {qi} vs {ei}");
                assert!((qj - ej).abs() <= 1e-9 * ej.abs(), "({dx},{dy}): {qj} vs {ej}");
            }
        }
    }

    #[test]
    fn shift_recovery_from_common_field() {
        let mut rng = StdRng::seed_from_u64(41);
        let field = ImageGrid::from_fn(64, 64, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let params = CorrelationParams {
            max_shift: 8,
            min_overlap_frac: 0.25,
        };
        for _ in 0..10 {
            let t = Shift::new(rng.random_range(-8..=8), rng.random_range(-8..=8));
            // zj(r) = zi(r - t): window of j starts t earlier in the field
            let zi = rep(field.crop(16, 16, 32, 32).unwrap(), "i");
            let zj = rep(
                field
                    .crop((16 - t.dx) as usize, (16 - t.dy) as usize, 32, 32)
                    .unwrap(),
                "j",
            );
            let table = build_table(&zi, &zj, params).unwrap();
            let (best, _) = table.argmax();
            assert_eq!(best, t);
        }
    }

    #[test]
    fn edge_tables_serve_both_directions() {
        let mut rng = StdRng::seed_from_u64(50);
        let reps: Vec<Representation> = (0..3)
            .map(|i| random_rep(12, 12, &mut rng, &format!("r{i}")))
            .collect();
        let params = CorrelationParams {
            max_shift: 4,
            min_overlap_frac: 0.2,
        };
        let tables = build_tables(&reps, &[(0, 1), (1, 0), (2, 1)], params).unwrap();
        assert_eq!(tables.len(), 2); // (0,1) and (1,2)
        let dr = Shift::new(2, -1);
        let fwd = tables.rho(0, 1, dr).unwrap();
        let bwd = tables.rho(1, 0, -dr).unwrap();
        assert_eq!(fwd, bwd);
        assert!(tables.rho(0, 2, dr).is_none());
        // canonical table serves (2,1) via negation
        let direct = build_table(&reps[1], &reps[2], params).unwrap();
        let got = tables.rho(2, 1, dr).unwrap();
        assert!((got - direct.lookup(-dr)).abs() < 1e-12);
    }

    #[test]
    fn build_rejects_bad_params() {
        let z = rep(ImageGrid::constant(8, 8, 1.0).unwrap(), "z");
        let too_big = CorrelationParams {
            max_shift: 8,
            min_overlap_frac: 0.25,
        };
        assert!(build_table(&z, &z, too_big).is_err());
        let bad_overlap = CorrelationParams {
            max_shift: 2,
            min_overlap_frac: 0.0,
        };
        assert!(build_table(&z, &z, bad_overlap).is_err());
    }
}
