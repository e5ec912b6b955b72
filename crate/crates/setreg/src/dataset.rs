//! Image-set loading, synthetic set generation with exact ground truth, and
//! the gauge-invariant pairwise registration error metric.
//!
//! Generated views are crops of a common base raster, so the true
//! inter-image misalignments are known by construction. Appearance
//! perturbations (gamma, illumination ramp, flat occluders, noise) model
//! transient scene changes between acquisitions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SetRegError};
use crate::grid::{ImageGrid, ImageSet, Shift, ZERO_SHIFT};
use crate::io;
use crate::optimizer::RegistrationSolution;

/// Sidecar filename for ground-truth offsets.
pub const TRUTH_FILE: &str = "truth.json";

/// Hard cap on the image-area fraction occluders may cover; generation
/// fails beyond it so sets stay registrable.
pub const MAX_OCCLUDED_FRACTION: f64 = 0.2;

/// True integer shifts of each image relative to the first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub offsets: Vec<Shift>,
}

impl GroundTruth {
    pub fn new(offsets: Vec<Shift>) -> Result<Self> {
        if offsets.is_empty() || offsets[0] != ZERO_SHIFT {
            return Err(SetRegError::InvalidInput(
                "ground truth must start with a zero offset for the reference image".into(),
            ));
        }
        Ok(GroundTruth { offsets })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Parametric appearance perturbations applied per generated view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Per-image gamma exponent drawn uniformly from this range.
    pub gamma_range: (f64, f64),
    /// Amplitude of the linear illumination ramp (fraction of dynamic
    /// range); per-image orientation is uniform.
    pub ramp_amplitude: f64,
    /// Number of flat-intensity occluders per image.
    pub occluder_count: usize,
    /// Occluder size range as a fraction of image width.
    pub occluder_size_range: (f64, f64),
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// RNG seed; fixes the shifts and every perturbation draw.
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            gamma_range: (0.6, 1.6),
            ramp_amplitude: 0.3,
            occluder_count: 6,
            occluder_size_range: (0.04, 0.08),
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    /// No appearance change at all: generated views are pure crops.
    pub fn none(seed: u64) -> Self {
        PerturbationSpec {
            gamma_range: (1.0, 1.0),
            ramp_amplitude: 0.0,
            occluder_count: 0,
            occluder_size_range: (0.0, 0.0),
            noise_sigma: 0.0,
            seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.gamma_range == (1.0, 1.0)
            && self.ramp_amplitude == 0.0
            && self.occluder_count == 0
            && self.noise_sigma == 0.0
    }

    fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok_range(self.gamma_range) || self.gamma_range.0 <= 0.0 {
            return Err(SetRegError::InvalidConfig(format!(
                "gamma range {:?} must be positive and ordered",
                self.gamma_range
            )));
        }
        if !ok_range(self.occluder_size_range) || self.occluder_size_range.0 < 0.0 {
            return Err(SetRegError::InvalidConfig(format!(
                "occluder size range {:?} must be nonnegative and ordered",
                self.occluder_size_range
            )));
        }
        if !(self.ramp_amplitude >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(SetRegError::InvalidConfig(
                "ramp amplitude and noise sigma must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

fn image_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        (seed ^ 0xA5A5_5A5A_0F0F_F0F0).wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    )
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

// Applies gamma, ramp, occluders and noise; output snapped to 8-bit levels so
// PNG round-trips reproduce it exactly.
fn perturb(img: &ImageGrid, spec: &PerturbationSpec, rng: &mut ChaCha8Rng) -> Result<ImageGrid> {
    let (w, h) = (img.width(), img.height());
    let mut data: Vec<f64> = img.data().to_vec();

    let gamma = rng.random_range(spec.gamma_range.0..=spec.gamma_range.1);
    if gamma != 1.0 {
        for v in &mut data {
            *v = v.clamp(0.0, 1.0).powf(gamma);
        }
    }

    let amp = spec.ramp_amplitude;
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    if amp > 0.0 {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (dx, dy) = (theta.cos(), theta.sin());
        // normalize the projection so the ramp spans [-amp/2, amp/2]
        let extent = (cx * dx.abs() + cy * dy.abs()).max(1.0);
        for y in 0..h {
            for x in 0..w {
                let u = ((x as f64 - cx) * dx + (y as f64 - cy) * dy) / extent;
                data[y * w + x] += amp * 0.5 * u;
            }
        }
    }

    let mut painted = vec![false; w * h];
    for _ in 0..spec.occluder_count {
        let frac = rng.random_range(spec.occluder_size_range.0..=spec.occluder_size_range.1);
        let size = ((frac * w as f64).round() as usize).clamp(1, w);
        let intensity = rng.random_range(0.0..=1.0);
        if rng.random_bool(0.5) {
            // axis-aligned rectangle with a mild random aspect
            let ow = size;
            let oh = ((size as f64 * rng.random_range(0.5..=2.0)).round() as usize).clamp(1, h);
            let x0 = rng.random_range(0..=w - ow);
            let y0 = rng.random_range(0..=h - oh.min(h));
            for y in y0..(y0 + oh).min(h) {
                for x in x0..x0 + ow {
                    data[y * w + x] = intensity;
                    painted[y * w + x] = true;
                }
            }
        } else {
            // disc
            let r = (size as f64 / 2.0).max(0.5);
            let cx = rng.random_range(0.0..=(w as f64 - 1.0));
            let cy = rng.random_range(0.0..=(h as f64 - 1.0));
            let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil() as usize).min(w - 1));
            let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil() as usize).min(h - 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (ddx, ddy) = (x as f64 - cx, y as f64 - cy);
                    if ddx * ddx + ddy * ddy <= r * r {
                        data[y * w + x] = intensity;
                        painted[y * w + x] = true;
                    }
                }
            }
        }
    }
    let covered = painted.iter().filter(|&&p| p).count() as f64 / (w * h) as f64;
    if covered > MAX_OCCLUDED_FRACTION {
        return Err(SetRegError::InvalidConfig(format!(
            "occluders cover {:.1}% of the image, above the {:.0}% cap",
            covered * 100.0,
            MAX_OCCLUDED_FRACTION * 100.0
        )));
    }

    let normal = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| SetRegError::InvalidConfig(format!("noise sigma: {e}")))?;
    if spec.noise_sigma > 0.0 {
        for v in &mut data {
            *v += normal.sample(rng);
        }
    }

    for v in &mut data {
        *v = quantize(*v);
    }
    ImageGrid::new(w, h, data)
}

/// Generates `n` views of `base` with the given exact crop shifts
/// (`shifts[0]` must be zero) and per-image perturbations.
pub fn generate_set_with_shifts(
    base: &ImageGrid,
    shifts: &[Shift],
    out_width: usize,
    out_height: usize,
    spec: &PerturbationSpec,
) -> Result<(ImageSet, GroundTruth)> {
    spec.validate()?;
    if shifts.len() < 2 {
        return Err(SetRegError::InvalidInput(format!(
            "need at least 2 views, got {}",
            shifts.len()
        )));
    }
    if shifts[0] != ZERO_SHIFT {
        return Err(SetRegError::InvalidInput(
            "the reference view's shift must be zero".into(),
        ));
    }
    let margin = shifts.iter().map(|s| s.chebyshev()).max().unwrap() as usize;
    let (need_w, need_h) = (out_width + 2 * margin, out_height + 2 * margin);
    if base.width() < need_w || base.height() < need_h {
        return Err(SetRegError::InvalidInput(format!(
            "base raster {}x{} too small: need at least {need_w}x{need_h} for \
             {out_width}x{out_height} views with shifts up to {margin} px",
            base.width(),
            base.height()
        )));
    }

    let mut images = Vec::with_capacity(shifts.len());
    let mut ids = Vec::with_capacity(shifts.len());
    for (k, t) in shifts.iter().enumerate() {
        let x0 = (margin as i32 + t.dx) as usize;
        let y0 = (margin as i32 + t.dy) as usize;
        let view = base.crop(x0, y0, out_width, out_height)?;
        let view = if spec.is_identity() {
            view
        } else {
            perturb(&view, spec, &mut image_rng(spec.seed, k))?
        };
        images.push(view);
        ids.push(format!("img_{k:02}.png"));
    }
    Ok((
        ImageSet::new(images, ids)?,
        GroundTruth::new(shifts.to_vec())?,
    ))
}

/// Generates an `n`-view set with random shifts in
/// `[-shift_bound, shift_bound]^2` (the first view unshifted).
pub fn generate_set(
    base: &ImageGrid,
    n: usize,
    out_width: usize,
    out_height: usize,
    shift_bound: u32,
    spec: &PerturbationSpec,
) -> Result<(ImageSet, GroundTruth)> {
    if n < 2 {
        return Err(SetRegError::InvalidInput(format!(
            "need at least 2 views, got {n}"
        )));
    }
    let b = shift_bound as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut shifts = vec![ZERO_SHIFT];
    for _ in 1..n {
        shifts.push(Shift::new(rng.random_range(-b..=b), rng.random_range(-b..=b)));
    }
    generate_set_with_shifts(base, &shifts, out_width, out_height, spec)
}

/// Multi-octave value-noise texture, deterministic in `(width, height,
/// seed)`, with values on the 8-bit grid. Used as a base raster when no
/// real imagery is supplied.
pub fn value_noise(width: usize, height: usize, seed: u64) -> ImageGrid {
    let mut acc = vec![0.0f64; width * height];
    let mut amp = 1.0;
    let mut cell = (width.min(height) / 2).max(2);
    let mut octave = 0u64;
    while cell >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(octave.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)));
        let (gw, gh) = (width / cell + 2, height / cell + 2);
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(0.0..1.0)).collect();
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        for y in 0..height {
            let fy = y as f64 / cell as f64;
            let y0 = fy.floor() as usize;
            let ty = smooth(fy - y0 as f64);
            for x in 0..width {
                let fx = x as f64 / cell as f64;
                let x0 = fx.floor() as usize;
                let tx = smooth(fx - x0 as f64);
                let v00 = lattice[y0 * gw + x0];
                let v10 = lattice[y0 * gw + x0 + 1];
                let v01 = lattice[(y0 + 1) * gw + x0];
                let v11 = lattice[(y0 + 1) * gw + x0 + 1];
                let top = v00 + (v10 - v00) * tx;
                let bot = v01 + (v11 - v01) * tx;
                acc[y * width + x] += amp * (top + (bot - top) * ty);
            }
        }
        amp *= 0.55;
        cell /= 2;
        octave += 1;
    }
    let min = acc.iter().copied().fold(f64::INFINITY, f64::min);
    let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    let data: Vec<f64> = acc.iter().map(|&v| quantize((v - min) / span)).collect();
    ImageGrid::from_raw(width, height, data)
}

/// Edge-rich synthetic base raster: smooth multi-octave value noise blended
/// with a posterized copy, so the scene carries both broad structure and
/// persistent step edges (field boundaries, roofs). Deterministic in
/// `(width, height, seed)`.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> ImageGrid {
    let smooth = value_noise(width, height, seed);
    let cartoon = value_noise(width, height, seed ^ 0x517C_C1B7_2722_0A95);
    let levels = 5.0;
    let data: Vec<f64> = smooth
        .data()
        .iter()
        .zip(cartoon.data())
        .map(|(&s, &c)| {
            let posterized = (c * levels).floor().min(levels - 1.0) / (levels - 1.0);
            quantize(0.55 * s + 0.45 * posterized)
        })
        .collect();
    ImageGrid::from_raw(width, height, data)
}

/// One ordered pair's registration error in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub i: usize,
    pub j: usize,
    pub error: f64,
}

/// Mean and per-pair registration errors over all ordered pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseErrors {
    pub mean: f64,
    pub pairs: Vec<PairError>,
}

/// Pairwise registration error of recovered offsets against ground truth:
/// for every ordered pair (i, j), the Euclidean norm of
/// `(dr_i - dr_j) - (t_i - t_j)`. Differencing removes the global shift
/// gauge.
pub fn pairwise_error(offsets: &[Shift], truth: &GroundTruth) -> Result<PairwiseErrors> {
    let n = offsets.len();
    if n != truth.len() {
        return Err(SetRegError::InvalidInput(format!(
            "{} offsets vs {} ground-truth entries",
            n,
            truth.len()
        )));
    }
    let mut pairs = Vec::with_capacity(n * (n - 1));
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let recovered = offsets[i] - offsets[j];
            let expected = truth.offsets[i] - truth.offsets[j];
            let error = (recovered - expected).norm();
            total += error;
            pairs.push(PairError { i, j, error });
        }
    }
    Ok(PairwiseErrors {
        mean: total / pairs.len() as f64,
        pairs,
    })
}

/// Error metric for a registration solution. See [`pairwise_error`].
pub fn registration_error(
    sol: &RegistrationSolution,
    truth: &GroundTruth,
) -> Result<PairwiseErrors> {
    pairwise_error(&sol.offsets, truth)
}

/// Loads every PNG/PGM in `dir` (ordered lexicographically by filename) plus
/// the optional `truth.json` sidecar mapping filenames to `[dx, dy]`.
pub fn load_set(dir: impl AsRef<Path>) -> Result<(ImageSet, Option<GroundTruth>)> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| SetRegError::io(dir, e))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| SetRegError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let lower = name.to_lowercase();
        if lower.ends_with(".png") || lower.ends_with(".pgm") {
            names.push(name);
        }
    }
    names.sort();
    if names.len() < 2 {
        return Err(SetRegError::InvalidInput(format!(
            "{}: found {} raster files, need at least 2",
            dir.display(),
            names.len()
        )));
    }
    let mut images = Vec::with_capacity(names.len());
    for name in &names {
        images.push(io::load_image(dir.join(name))?);
    }
    let set = ImageSet::new(images, names.clone())?;

    let truth_path = dir.join(TRUTH_FILE);
    let truth = if truth_path.exists() {
        let text = fs::read_to_string(&truth_path).map_err(|e| SetRegError::io(&truth_path, e))?;
        let map: BTreeMap<String, (i32, i32)> = serde_json::from_str(&text)
            .map_err(|e| SetRegError::malformed(&truth_path, e.to_string()))?;
        for key in map.keys() {
            if !names.iter().any(|n| n == key) {
                return Err(SetRegError::malformed(
                    &truth_path,
                    format!("entry '{key}' matches no image file"),
                ));
            }
        }
        let mut offsets = Vec::with_capacity(names.len());
        for (idx, name) in names.iter().enumerate() {
            match (idx, map.get(name)) {
                (0, None) => offsets.push(ZERO_SHIFT),
                (0, Some(&(0, 0))) => offsets.push(ZERO_SHIFT),
                (0, Some(&(dx, dy))) => {
                    return Err(SetRegError::malformed(
                        &truth_path,
                        format!("reference image '{name}' must have offset [0, 0], got [{dx}, {dy}]"),
                    ))
                }
                (_, Some(&(dx, dy))) => offsets.push(Shift::new(dx, dy)),
                (_, None) => {
                    return Err(SetRegError::malformed(
                        &truth_path,
                        format!("no entry for image '{name}'"),
                    ))
                }
            }
        }
        Some(GroundTruth::new(offsets)?)
    } else {
        None
    };
    Ok((set, truth))
}

/// Writes the set as 8-bit PNGs named by id, plus `truth.json` when ground
/// truth is supplied. Reloadable by [`load_set`].
pub fn save_set(
    dir: impl AsRef<Path>,
    set: &ImageSet,
    truth: Option<&GroundTruth>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| SetRegError::io(dir, e))?;
    for (img, id) in set.images().iter().zip(set.ids()) {
        io::save_png(img, dir.join(id))?;
    }
    if let Some(truth) = truth {
        if truth.len() != set.len() {
            return Err(SetRegError::InvalidInput(format!(
                "{} ground-truth entries for {} images",
                truth.len(),
                set.len()
            )));
        }
        let map: BTreeMap<&String, (i32, i32)> = set
            .ids()
            .iter()
            .zip(&truth.offsets)
            .map(|(id, &s)| (id, s.into()))
            .collect();
        let path = dir.join(TRUTH_FILE);
        let text = serde_json::to_string_pretty(&map)
            .map_err(|e| SetRegError::malformed(&path, e.to_string()))?;
        fs::write(&path, text).map_err(|e| SetRegError::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(seed: u64) -> ImageGrid {
        value_noise(96, 96, seed)
    }

    #[test]
    fn value_noise_is_deterministic_and_bounded() {
        let a = value_noise(48, 32, 7);
        let b = value_noise(48, 32, 7);
        assert_eq!(a.data(), b.data());
        assert!(a.min_value() >= 0.0 && a.max_value() <= 1.0);
        let c = value_noise(48, 32, 8);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn generation_is_deterministic() {
        let base = base(1);
        let spec = PerturbationSpec {
            seed: 42,
            ..PerturbationSpec::default()
        };
        let (set_a, truth_a) = generate_set(&base, 4, 48, 48, 10, &spec).unwrap();
        let (set_b, truth_b) = generate_set(&base, 4, 48, 48, 10, &spec).unwrap();
        assert_eq!(truth_a, truth_b);
        for (a, b) in set_a.images().iter().zip(set_b.images()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn zero_everything_reproduces_the_crop() {
        let base = base(2);
        let shifts = vec![ZERO_SHIFT; 3];
        let (set, truth) =
            generate_set_with_shifts(&base, &shifts, 40, 40, &PerturbationSpec::none(5)).unwrap();
        assert_eq!(truth.offsets, shifts);
        let crop = base.crop(0, 0, 40, 40).unwrap();
        for img in set.images() {
            assert_eq!(img.data(), crop.data());
        }
    }

    #[test]
    fn shifted_clean_views_match_base_content() {
        let base = base(3);
        let shifts = vec![ZERO_SHIFT, Shift::new(5, -3)];
        let (set, _) =
            generate_set_with_shifts(&base, &shifts, 40, 40, &PerturbationSpec::none(5)).unwrap();
        // overlap content must agree exactly: view k at r equals base at
        // r + margin + t_k
        let margin = 5;
        for (k, t) in shifts.iter().enumerate() {
            for y in 0..40 {
                for x in 0..40 {
                    let bx = (x as i32 + margin + t.dx) as usize;
                    let by = (y as i32 + margin + t.dy) as usize;
                    assert_eq!(set.images()[k].at(x, y), base.at(bx, by));
                }
            }
        }
    }

    #[test]
    fn base_too_small_reports_required_size() {
        let base = value_noise(32, 32, 1);
        let err = generate_set(&base, 3, 40, 40, 5, &PerturbationSpec::none(1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("too small"), "{msg}");
        assert!(msg.contains("50x50"), "{msg}");
    }

    #[test]
    fn occluder_cap_enforced() {
        let base = base(4);
        let spec = PerturbationSpec {
            occluder_count: 80,
            occluder_size_range: (0.3, 0.4),
            seed: 9,
            ..PerturbationSpec::default()
        };
        let err = generate_set(&base, 3, 48, 48, 4, &spec).unwrap_err();
        assert!(err.to_string().contains("occluders cover"));
    }

    #[test]
    fn default_occluders_stay_under_cap() {
        let base = base(5);
        for seed in 0..5 {
            let spec = PerturbationSpec {
                seed,
                ..PerturbationSpec::default()
            };
            assert!(generate_set(&base, 4, 64, 64, 8, &spec).is_ok());
        }
    }

    #[test]
    fn error_metric_trivial_cases() {
        let truth = GroundTruth::new(vec![ZERO_SHIFT, Shift::new(3, -2)]).unwrap();
        let exact = pairwise_error(&truth.offsets, &truth).unwrap();
        assert_eq!(exact.mean, 0.0);

        // recovered difference off by (3, 4): error 5 on both ordered pairs
        let off = vec![ZERO_SHIFT, Shift::new(6, 2)];
        let e = pairwise_error(&off, &truth).unwrap();
        assert_eq!(e.mean, 5.0);
        assert_eq!(e.pairs.len(), 2);
    }

    #[test]
    fn error_metric_matches_hand_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let truth = GroundTruth::new(vec![
            ZERO_SHIFT,
            Shift::new(2, 1),
            Shift::new(-3, 0),
            Shift::new(4, -4),
        ])
        .unwrap();
        let offsets: Vec<Shift> = (0..4)
            .map(|i| {
                if i == 0 {
                    ZERO_SHIFT
                } else {
                    Shift::new(rng.random_range(-5..=5), rng.random_range(-5..=5))
                }
            })
            .collect();
        let got = pairwise_error(&offsets, &truth).unwrap();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let ddx = (offsets[i].dx - offsets[j].dx) - (truth.offsets[i].dx - truth.offsets[j].dx);
                    let ddy = (offsets[i].dy - offsets[j].dy) - (truth.offsets[i].dy - truth.offsets[j].dy);
                    total += ((ddx * ddx + ddy * ddy) as f64).sqrt();
                    count += 1;
                }
            }
        }
        assert!((got.mean - total / count as f64).abs() < 1e-12);
    }

    #[test]
    fn error_metric_is_gauge_invariant() {
        let truth = GroundTruth::new(vec![ZERO_SHIFT, Shift::new(1, 2), Shift::new(-2, 0)]).unwrap();
        let offsets = vec![ZERO_SHIFT, Shift::new(2, 2), Shift::new(-1, 1)];
        let base_err = pairwise_error(&offsets, &truth).unwrap();
        let c = Shift::new(7, -9);
        let lifted: Vec<Shift> = offsets.iter().map(|&s| s + c).collect();
        let lifted_err = pairwise_error(&lifted, &truth).unwrap();
        assert_eq!(base_err.mean, lifted_err.mean);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let base = base(6);
        let spec = PerturbationSpec {
            seed: 11,
            ..PerturbationSpec::default()
        };
        let (set, truth) = generate_set(&base, 4, 48, 48, 6, &spec).unwrap();
        save_set(dir.path(), &set, Some(&truth)).unwrap();
        let (loaded, loaded_truth) = load_set(dir.path()).unwrap();
        assert_eq!(loaded.ids(), set.ids());
        assert_eq!(loaded_truth.as_ref(), Some(&truth));
        for (a, b) in loaded.images().iter().zip(set.images()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn load_rejects_mismatched_sizes() {
        let dir = tempfile::tempdir().unwrap();
        io::save_png(&value_noise(16, 16, 1), dir.path().join("a.png")).unwrap();
        io::save_png(&value_noise(16, 20, 2), dir.path().join("b.png")).unwrap();
        let err = load_set(dir.path()).unwrap_err();
        assert!(err.to_string().contains("b.png"), "{err}");
    }

    #[test]
    fn load_parses_truth_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        io::save_png(&value_noise(16, 16, 1), dir.path().join("a.png")).unwrap();
        io::save_png(&value_noise(16, 16, 2), dir.path().join("b.png")).unwrap();
        fs::write(dir.path().join(TRUTH_FILE), r#"{"b.png": [3, -2]}"#).unwrap();
        let (_, truth) = load_set(dir.path()).unwrap();
        assert_eq!(
            truth.unwrap().offsets,
            vec![ZERO_SHIFT, Shift::new(3, -2)]
        );
    }

    #[test]
    fn load_rejects_bad_sidecars() {
        let dir = tempfile::tempdir().unwrap();
        io::save_png(&value_noise(16, 16, 1), dir.path().join("a.png")).unwrap();
        io::save_png(&value_noise(16, 16, 2), dir.path().join("b.png")).unwrap();
        // unknown key
        fs::write(dir.path().join(TRUTH_FILE), r#"{"zz.png": [3, -2]}"#).unwrap();
        assert!(load_set(dir.path()).unwrap_err().to_string().contains("zz.png"));
        // missing entry for b.png
        fs::write(dir.path().join(TRUTH_FILE), r#"{"a.png": [0, 0]}"#).unwrap();
        assert!(load_set(dir.path()).unwrap_err().to_string().contains("b.png"));
        // nonzero reference offset
        fs::write(
            dir.path().join(TRUTH_FILE),
            r#"{"a.png": [1, 0], "b.png": [0, 0]}"#,
        )
        .unwrap();
        assert!(load_set(dir.path()).unwrap_err().to_string().contains("a.png"));
    }

    #[test]
    fn single_image_directory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        io::save_png(&value_noise(16, 16, 1), dir.path().join("a.png")).unwrap();
        assert!(load_set(dir.path()).is_err());
    }
}
