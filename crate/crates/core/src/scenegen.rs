//! Synthetic scene generation: per-class phenology profiles drive band
//! trajectories, a cloud model carves spatially coherent gaps, and the
//! result is a fully labeled [`SceneStack`] for calibration and tests.
//!
//! Profiles describe a pixel in index space: a double-logistic NDVI
//! curve plus affine maps from NDVI to the other indices. Band values
//! are then chosen so that computing each index from the synthesized
//! bands recovers the profile's value, which makes rule behavior on
//! generated scenes predictable from the profile parameters alone.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::Band;
use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::scene::{SceneStack, NO_LABEL};
use crate::stats::derive_seed;
use crate::weaken::TargetHistogram;

/// Bands carried by every generated scene.
pub const GENERATED_BANDS: [Band; 9] = [
    Band::Blue,
    Band::Green,
    Band::Red,
    Band::Re1,
    Band::Re2,
    Band::Nir,
    Band::Swir1,
    Band::Vv,
    Band::Vh,
];

/// Double-logistic seasonal curve: flat at `base` outside the season,
/// rising to `base + amplitude` between green-up and senescence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleLogistic {
    pub base: f64,
    pub amplitude: f64,
    pub green_doy: f64,
    pub green_rate: f64,
    pub senescence_doy: f64,
    pub senescence_rate: f64,
}

impl DoubleLogistic {
    pub fn value(&self, doy: f64) -> f64 {
        let up = sigmoid(self.green_rate * (doy - self.green_doy));
        let down = sigmoid(self.senescence_rate * (self.senescence_doy - doy));
        self.base + self.amplitude * (up + down - 1.0)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Affine map from NDVI to another index: `gain * ndvi + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub gain: f64,
    pub offset: f64,
}

impl AffineMap {
    pub const fn new(gain: f64, offset: f64) -> AffineMap {
        AffineMap { gain, offset }
    }

    pub fn at(&self, ndvi: f64) -> f64 {
        self.gain * ndvi + self.offset
    }
}

/// Spectral and temporal behavior of one land-cover class.
///
/// `end_lift` adds a linear trend of that total magnitude to NDVI over
/// the calendar year, giving monotone drifts their direction. The
/// `brightness` is the sum of NIR and red reflectance, constant over
/// the season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenologyProfile {
    pub ndvi: DoubleLogistic,
    #[serde(default)]
    pub end_lift: f64,
    pub brightness: f64,
    pub rendvi: AffineMap,
    pub lswi: AffineMap,
    pub re2: AffineMap,
    pub mpdi: AffineMap,
    pub vv: AffineMap,
}

impl PhenologyProfile {
    /// NDVI at a calendar DOY, trend included.
    pub fn ndvi_at(&self, doy: f64) -> f64 {
        self.ndvi.value(doy) + self.end_lift * doy / 365.0
    }

    /// Noise-free optical band values at a calendar DOY, in
    /// [`GENERATED_BANDS`] order for the optical sensor.
    pub fn optical_bands_at(&self, doy: f64) -> [f64; 7] {
        let ndvi = self.ndvi_at(doy).clamp(-0.95, 0.95);
        let nir = self.brightness * (1.0 + ndvi) / 2.0;
        let red = self.brightness * (1.0 - ndvi) / 2.0;
        let re1 = invert_ratio(nir, self.rendvi.at(ndvi));
        let swir1 = invert_ratio(nir, self.lswi.at(ndvi));
        let re2 = self.re2.at(ndvi);
        let blue = 0.75 * red + 0.01;
        let green = 0.6 * red + 0.2 * nir + 0.01;
        [blue, green, red, re1, re2, nir, swir1]
    }

    /// Noise-free radar band values `[vv, vh]` at a calendar DOY.
    pub fn radar_bands_at(&self, doy: f64) -> [f64; 2] {
        let ndvi = self.ndvi_at(doy).clamp(-0.95, 0.95);
        let vv = self.vv.at(ndvi).max(1e-3);
        let vh = invert_ratio(vv, self.mpdi.at(ndvi));
        [vv, vh]
    }
}

/// Second operand of a normalized difference: given the first operand
/// `a` and the target ratio `(a - b) / (a + b)`, returns `b`.
fn invert_ratio(a: f64, ratio: f64) -> f64 {
    let r = ratio.clamp(-0.95, 0.95);
    a * (1.0 - r) / (1.0 + r)
}

/// Cloud gaps for the optical sensor and optional radar dropout.
///
/// `correlation_px` is the lattice spacing of the smooth cloudiness
/// field, so larger values give larger contiguous cloud patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudModel {
    pub target: TargetHistogram,
    pub correlation_px: usize,
    #[serde(default)]
    pub radar_dropout: f64,
}

/// One layout entry: which profile fills the region, which truth class
/// it gets, and the stratum recorded for background sampling (the
/// profile name when unset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub profile: String,
    pub truth_class: String,
    #[serde(default)]
    pub stratum: Option<String>,
}

impl RegionSpec {
    pub fn new(profile: &str, truth_class: &str) -> RegionSpec {
        RegionSpec {
            profile: profile.to_string(),
            truth_class: truth_class.to_string(),
            stratum: None,
        }
    }

    fn stratum_name(&self) -> &str {
        self.stratum.as_deref().unwrap_or(&self.profile)
    }
}

/// Full description of a scene to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub optical_grid: TimeGrid,
    pub radar_grid: TimeGrid,
    pub regions: Vec<RegionSpec>,
    /// Side length of the square blocks regions are tiled into.
    pub block_size: usize,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub cloud: Option<CloudModel>,
    pub seed: u64,
}

impl SceneSpec {
    /// Region index of a pixel: blocks tile the raster row-major and
    /// cycle through the region list, so any layout with at least as
    /// many blocks as regions contains every region.
    pub fn region_at(&self, x: usize, y: usize) -> usize {
        let bx = x / self.block_size;
        let by = y / self.block_size;
        let nbx = self.width.div_ceil(self.block_size);
        (by * nbx + bx) % self.regions.len()
    }
}

/// Generates a labeled scene per the spec.
///
/// Every region's profile must be present in `profiles`; a missing one
/// is an error naming the class. Band values are synthesized per pixel
/// with Gaussian noise of `noise_sd` on every band value, then the
/// cloud model (when present) marks optical steps invalid so that the
/// per-pixel valid-count histogram matches its target exactly up to
/// integer rounding.
pub fn generate_scene(
    spec: &SceneSpec,
    profiles: &BTreeMap<String, PhenologyProfile>,
) -> Result<SceneStack> {
    check_spec(spec)?;
    for region in &spec.regions {
        if !profiles.contains_key(&region.profile) {
            return Err(CoreError::UnknownClass(format!(
                "class {} has no phenology profile (missing profile '{}')",
                region.truth_class, region.profile
            )));
        }
    }
    let mut scene = synthesize(spec, profiles, spec.optical_grid, spec.radar_grid)?;
    if let Some(cloud) = &spec.cloud {
        apply_clouds(&mut scene, cloud, spec.seed)?;
        apply_radar_dropout(&mut scene, cloud.radar_dropout, spec.seed);
    }
    scene.validate()?;
    Ok(scene)
}

/// Generates the prior-year companion of a scene spec: same layout and
/// noise, grids shifted one year back on the extended DOY axis, no
/// clouds. Profiles here describe the classes' previous season.
pub fn generate_prior_year(
    spec: &SceneSpec,
    prior_profiles: &BTreeMap<String, PhenologyProfile>,
) -> Result<SceneStack> {
    check_spec(spec)?;
    for region in &spec.regions {
        if !prior_profiles.contains_key(&region.profile) {
            return Err(CoreError::UnknownClass(format!(
                "class {} has no prior-year phenology profile (missing profile '{}')",
                region.truth_class, region.profile
            )));
        }
    }
    let optical = spec.optical_grid.with_year_offset(spec.optical_grid.year_offset - 1);
    let radar = spec.radar_grid.with_year_offset(spec.radar_grid.year_offset - 1);
    let scene = synthesize(spec, prior_profiles, optical, radar)?;
    scene.validate()?;
    Ok(scene)
}

fn check_spec(spec: &SceneSpec) -> Result<()> {
    if spec.width == 0 || spec.height == 0 {
        return Err(CoreError::InvalidConfig("scene dimensions must be positive".into()));
    }
    if spec.regions.is_empty() {
        return Err(CoreError::InvalidConfig("scene needs at least one region".into()));
    }
    if spec.block_size == 0 {
        return Err(CoreError::InvalidConfig("block size must be positive".into()));
    }
    if !(spec.noise_sd >= 0.0) {
        return Err(CoreError::InvalidConfig("noise sd must be non-negative".into()));
    }
    Ok(())
}

fn synthesize(
    spec: &SceneSpec,
    profiles: &BTreeMap<String, PhenologyProfile>,
    optical_grid: TimeGrid,
    radar_grid: TimeGrid,
) -> Result<SceneStack> {
    let mut scene = SceneStack::new_empty(
        spec.width,
        spec.height,
        optical_grid,
        radar_grid,
        &GENERATED_BANDS,
    );

    let mut classes: Vec<String> = Vec::new();
    let mut strata: Vec<String> = Vec::new();
    let mut class_of_region = Vec::with_capacity(spec.regions.len());
    let mut stratum_of_region = Vec::with_capacity(spec.regions.len());
    for region in &spec.regions {
        let class = match classes.iter().position(|c| *c == region.truth_class) {
            Some(i) => i as u16,
            None => {
                classes.push(region.truth_class.clone());
                (classes.len() - 1) as u16
            }
        };
        let stratum = match strata.iter().position(|s| s == region.stratum_name()) {
            Some(i) => i as u16,
            None => {
                strata.push(region.stratum_name().to_string());
                (strata.len() - 1) as u16
            }
        };
        class_of_region.push(class);
        stratum_of_region.push(stratum);
    }

    // Profile curves are defined on the calendar year; strip the grid's
    // year offset so prior-year grids sample the same seasonal shape.
    let optical_doys: Vec<f64> = (0..optical_grid.count)
        .map(|t| (optical_grid.doy_at(t) - 365 * optical_grid.year_offset) as f64)
        .collect();
    let radar_doys: Vec<f64> = (0..radar_grid.count)
        .map(|t| (radar_grid.doy_at(t) - 365 * radar_grid.year_offset) as f64)
        .collect();

    let region_profiles: Vec<&PhenologyProfile> = spec
        .regions
        .iter()
        .map(|r| &profiles[&r.profile])
        .collect();

    let px = spec.width * spec.height;
    struct PixelOut {
        optical: Vec<f64>,
        radar: Vec<f64>,
        label: u16,
        stratum: u16,
    }
    let pixels: Vec<PixelOut> = (0..px)
        .into_par_iter()
        .map(|p| {
            let x = p % spec.width;
            let y = p / spec.width;
            let region = spec.region_at(x, y);
            let profile = region_profiles[region];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, p as u64));
            let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).unwrap();
            let draw = |rng: &mut ChaCha8Rng| {
                if spec.noise_sd > 0.0 {
                    noise.sample(rng)
                } else {
                    let _ = rng.gen::<f64>();
                    0.0
                }
            };
            let mut optical = Vec::with_capacity(optical_doys.len() * 7);
            for &doy in &optical_doys {
                let bands = profile.optical_bands_at(doy);
                for v in bands {
                    optical.push(v + draw(&mut rng));
                }
            }
            let mut radar = Vec::with_capacity(radar_doys.len() * 2);
            for &doy in &radar_doys {
                let bands = profile.radar_bands_at(doy);
                for v in bands {
                    radar.push(v + draw(&mut rng));
                }
            }
            PixelOut {
                optical,
                radar,
                label: class_of_region[region],
                stratum: stratum_of_region[region],
            }
        })
        .collect();

    let optical_order = [
        Band::Blue,
        Band::Green,
        Band::Red,
        Band::Re1,
        Band::Re2,
        Band::Nir,
        Band::Swir1,
    ];
    let mut labels = vec![NO_LABEL; px];
    let mut strata_map = vec![NO_LABEL; px];
    for (p, out) in pixels.iter().enumerate() {
        labels[p] = out.label;
        strata_map[p] = out.stratum;
    }
    for (b, &band) in optical_order.iter().enumerate() {
        let data = scene.bands.get_mut(&band).unwrap();
        for (p, out) in pixels.iter().enumerate() {
            for t in 0..optical_doys.len() {
                data[t * px + p] = out.optical[t * 7 + b] as f32;
            }
        }
    }
    for (b, &band) in [Band::Vv, Band::Vh].iter().enumerate() {
        let data = scene.bands.get_mut(&band).unwrap();
        for (p, out) in pixels.iter().enumerate() {
            for t in 0..radar_doys.len() {
                data[t * px + p] = out.radar[t * 2 + b] as f32;
            }
        }
    }
    scene.optical_valid.fill(1);
    scene.radar_valid.fill(1);
    scene.classes = classes;
    scene.strata = strata;
    scene.labels = Some(labels);
    scene.strata_map = Some(strata_map);
    Ok(scene)
}

/// Smooth per-step cloudiness field: unit Gaussians on a coarse
/// lattice, bilinearly interpolated.
struct CloudField {
    lattice: Vec<f64>,
    lw: usize,
    spacing: f64,
}

impl CloudField {
    fn new(width: usize, height: usize, spacing: usize, seed: u64) -> CloudField {
        let spacing = spacing.max(1);
        let lw = width / spacing + 2;
        let lh = height / spacing + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = (0..lw * lh).map(|_| rng.gen::<f64>()).collect();
        CloudField {
            lattice,
            lw,
            spacing: spacing as f64,
        }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let fx = x as f64 / self.spacing;
        let fy = y as f64 / self.spacing;
        let ix = fx as usize;
        let iy = fy as usize;
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = self.lattice[iy * self.lw + ix];
        let v10 = self.lattice[iy * self.lw + ix + 1];
        let v01 = self.lattice[(iy + 1) * self.lw + ix];
        let v11 = self.lattice[(iy + 1) * self.lw + ix + 1];
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
    }
}

/// Marks optical steps invalid so the per-pixel valid-count histogram
/// matches the target.
///
/// Per-pixel valid counts are apportioned to histogram bins by largest
/// remainder, pixels are ranked by mean cloudiness so clear counts go
/// to clear areas, and each pixel drops its cloudiest steps first.
/// Both the ranking and the per-pixel choice read one smooth noise
/// field per step, which keeps cloud patches spatially contiguous.
fn apply_clouds(scene: &mut SceneStack, cloud: &CloudModel, seed: u64) -> Result<()> {
    let steps = scene.optical_grid.count;
    cloud.target.check_steps(steps)?;
    let px = scene.n_pixels();

    let fields: Vec<CloudField> = (0..steps)
        .map(|t| {
            CloudField::new(
                scene.width,
                scene.height,
                cloud.correlation_px,
                derive_seed(seed, 0xC10D_0000 + t as u64),
            )
        })
        .collect();
    let mut scores = vec![0.0f64; steps * px];
    for (t, field) in fields.iter().enumerate() {
        for y in 0..scene.height {
            for x in 0..scene.width {
                scores[t * px + y * scene.width + x] = field.at(x, y);
            }
        }
    }

    let quotas = apportion(&cloud.target.bins, px);
    let mut order: Vec<usize> = (0..px).collect();
    let mean_score: Vec<f64> = (0..px)
        .map(|p| (0..steps).map(|t| scores[t * px + p]).sum::<f64>() / steps as f64)
        .collect();
    order.sort_by(|&a, &b| mean_score[a].total_cmp(&mean_score[b]).then(a.cmp(&b)));

    let mut target_count = vec![0usize; px];
    let mut cursor = order.iter();
    for k in (0..=steps).rev() {
        for _ in 0..quotas[k] {
            let &p = cursor.next().expect("quotas sum to the pixel count");
            target_count[p] = k;
        }
    }

    let mut step_order: Vec<usize> = Vec::with_capacity(steps);
    for p in 0..px {
        let drop = steps - target_count[p];
        if drop == 0 {
            continue;
        }
        step_order.clear();
        step_order.extend(0..steps);
        step_order.sort_by(|&a, &b| {
            scores[b * px + p].total_cmp(&scores[a * px + p]).then(a.cmp(&b))
        });
        for &t in step_order.iter().take(drop) {
            scene.optical_valid[t * px + p] = 0;
        }
    }
    Ok(())
}

/// Largest-remainder apportionment of `total` units to the given
/// probability bins.
fn apportion(bins: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = bins.iter().map(|&b| (b * total as f64) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(f64, usize)> = bins
        .iter()
        .enumerate()
        .map(|(k, &b)| (b * total as f64 - counts[k] as f64, k))
        .collect();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in remainders.iter().take(total - assigned) {
        counts[k] += 1;
    }
    counts
}

fn apply_radar_dropout(scene: &mut SceneStack, dropout: f64, seed: u64) {
    if dropout <= 0.0 {
        return;
    }
    let px = scene.n_pixels();
    let steps = scene.radar_grid.count;
    for p in 0..px {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5A0D_0000 + p as u64));
        for t in 0..steps {
            if rng.gen::<f64>() < dropout {
                scene.radar_valid[t * px + p] = 0;
            }
        }
    }
}

/// Gap distribution shaped like real optical coverage: a broad peak
/// around 55% of steps valid, support from 25% to 95%.
pub fn default_gap_histogram(steps: usize) -> TargetHistogram {
    let lo = (steps as f64 * 0.25).round() as usize;
    let hi = ((steps as f64 * 0.95).round() as usize).min(steps);
    let peak = steps as f64 * 0.55;
    let mut counts = vec![0usize; steps + 1];
    let width = steps as f64 * 0.40;
    for (k, c) in counts.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let w = (1.0 - ((k as f64 - peak) / width).abs()).max(0.0);
        *c = (w * 10_000.0).round() as usize;
    }
    TargetHistogram::from_counts(&counts).expect("triangular weights are non-empty")
}

fn profile(
    curve: (f64, f64, f64, f64, f64, f64),
    end_lift: f64,
    brightness: f64,
    rendvi: (f64, f64),
    lswi: (f64, f64),
    re2: (f64, f64),
    mpdi: (f64, f64),
    vv: (f64, f64),
) -> PhenologyProfile {
    PhenologyProfile {
        ndvi: DoubleLogistic {
            base: curve.0,
            amplitude: curve.1,
            green_doy: curve.2,
            green_rate: curve.3,
            senescence_doy: curve.4,
            senescence_rate: curve.5,
        },
        end_lift,
        brightness,
        rendvi: AffineMap::new(rendvi.0, rendvi.1),
        lswi: AffineMap::new(lswi.0, lswi.1),
        re2: AffineMap::new(re2.0, re2.1),
        mpdi: AffineMap::new(mpdi.0, mpdi.1),
        vv: AffineMap::new(vv.0, vv.1),
    }
}

/// Flat bare-surface profile used by several background classes.
fn flat(ndvi: f64, brightness: f64, lswi: (f64, f64), vv_level: f64) -> PhenologyProfile {
    profile(
        (ndvi, 0.0, 0.0, 1.0, 365.0, 1.0),
        0.0,
        brightness,
        (0.2, 0.0),
        lswi,
        (0.2, 0.05),
        (0.3, 0.0),
        (0.0, vv_level),
    )
}

/// Profiles for a southern double-season site: rice with a flooded
/// transplanting window, summer maize, fallow and abandoned parcels
/// told apart by the prior year, plus water, wetland, forest, and an
/// evergreen orchard.
pub fn zhijiang_profiles() -> BTreeMap<String, PhenologyProfile> {
    let mut map = BTreeMap::new();
    map.insert(
        "rice".to_string(),
        profile(
            (0.18, 0.62, 170.0, 0.20, 265.0, 0.15),
            0.0,
            0.42,
            (0.15, 0.0),
            (0.60, 0.10),
            (0.30, 0.05),
            (0.50, 0.00),
            (0.0, 0.12),
        ),
    );
    map.insert(
        "maize".to_string(),
        profile(
            (0.15, 0.65, 172.0, 0.22, 255.0, 0.18),
            0.0,
            0.40,
            (0.30, 0.0),
            (0.50, -0.02),
            (0.25, 0.10),
            (0.55, -0.05),
            (0.0, 0.22),
        ),
    );
    map.insert(
        "fallow".to_string(),
        profile(
            (0.10, 0.03, 150.0, 0.08, 240.0, 0.08),
            0.0,
            0.42,
            (0.20, 0.0),
            (0.40, -0.03),
            (0.20, 0.05),
            (0.30, 0.00),
            (0.0, 0.10),
        ),
    );
    map.insert(
        "water".to_string(),
        profile(
            (-0.08, 0.0, 0.0, 1.0, 365.0, 1.0),
            0.0,
            0.16,
            (0.10, 0.0),
            (0.30, 0.55),
            (0.10, 0.03),
            (0.30, 0.10),
            (0.0, 0.04),
        ),
    );
    map.insert(
        "wetland".to_string(),
        profile(
            (0.22, 0.13, 140.0, 0.10, 260.0, 0.10),
            0.0,
            0.30,
            (0.15, 0.0),
            (0.80, 0.15),
            (0.20, 0.05),
            (0.40, 0.10),
            (0.0, 0.08),
        ),
    );
    map.insert(
        "forest".to_string(),
        profile(
            (0.45, 0.35, 120.0, 0.08, 300.0, 0.08),
            0.0,
            0.38,
            (0.25, 0.0),
            (0.50, -0.02),
            (0.30, 0.05),
            (0.45, 0.05),
            (0.0, 0.30),
        ),
    );
    map.insert(
        "orchard".to_string(),
        profile(
            (0.50, 0.10, 150.0, 0.05, 280.0, 0.05),
            0.0,
            0.40,
            (0.20, 0.0),
            (0.50, -0.02),
            (0.30, 0.05),
            (0.40, 0.05),
            (0.0, 0.26),
        ),
    );
    map.insert("abandoned".to_string(), {
        let mut p = flat(0.13, 0.40, (0.40, -0.03), 0.14);
        p.ndvi.amplitude = 0.04;
        p.ndvi.green_doy = 130.0;
        p.ndvi.green_rate = 0.05;
        p.ndvi.senescence_doy = 260.0;
        p.ndvi.senescence_rate = 0.05;
        p
    });
    map
}

/// Prior-year companions of [`zhijiang_profiles`]. Fallow parcels were
/// cropped the year before (a full hump with a rising trend placing
/// the NDVI minimum at the season start); every other class declines
/// slightly so its prior-year NDVI maximum precedes its minimum.
pub fn zhijiang_prior_profiles() -> BTreeMap<String, PhenologyProfile> {
    let mut map = BTreeMap::new();
    for (name, current) in zhijiang_profiles() {
        let prior = if name == "fallow" {
            profile(
                (0.15, 0.60, 160.0, 0.20, 250.0, 0.18),
                0.02,
                0.40,
                (0.25, 0.0),
                (0.50, -0.02),
                (0.25, 0.08),
                (0.50, -0.05),
                (0.0, 0.20),
            )
        } else {
            let mut p = current.clone();
            p.ndvi.amplitude = 0.0;
            p.end_lift = -0.03;
            p
        };
        map.insert(name, prior);
    }
    map
}

/// Profiles for a northern single-season site: summer maize, spring
/// maize, soybean, and late vegetables, plus flat background classes.
pub fn huantai_profiles() -> BTreeMap<String, PhenologyProfile> {
    let mut map = BTreeMap::new();
    map.insert(
        "maize".to_string(),
        profile(
            (0.15, 0.65, 192.0, 0.22, 270.0, 0.18),
            0.0,
            0.40,
            (0.30, 0.0),
            (0.50, -0.02),
            (0.25, 0.10),
            (0.55, -0.05),
            (0.0, 0.22),
        ),
    );
    map.insert(
        "spring_maize".to_string(),
        profile(
            (0.06, 0.70, 130.0, 0.10, 215.0, 0.12),
            0.0,
            0.40,
            (0.25, 0.0),
            (0.50, -0.02),
            (0.25, 0.10),
            (0.55, -0.05),
            (0.0, 0.22),
        ),
    );
    map.insert(
        "soybean".to_string(),
        profile(
            (0.15, 0.65, 193.0, 0.20, 272.0, 0.18),
            0.0,
            0.42,
            (0.10, 0.02),
            (0.50, -0.02),
            (0.50, 0.10),
            (0.55, -0.05),
            (0.0, 0.18),
        ),
    );
    map.insert(
        "vegetables".to_string(),
        profile(
            (0.15, 0.62, 200.0, 0.30, 276.0, 0.25),
            0.0,
            0.40,
            (0.15, 0.0),
            (0.45, -0.02),
            (0.30, 0.10),
            (-0.50, 0.45),
            (0.0, 0.15),
        ),
    );
    map.insert("grass".to_string(), flat(0.35, 0.36, (0.50, -0.02), 0.16));
    map.insert(
        "wetland".to_string(),
        profile(
            (0.22, 0.13, 140.0, 0.10, 260.0, 0.10),
            0.0,
            0.30,
            (0.15, 0.0),
            (0.80, 0.15),
            (0.20, 0.05),
            (0.40, 0.10),
            (0.0, 0.08),
        ),
    );
    map.insert(
        "water".to_string(),
        profile(
            (-0.08, 0.0, 0.0, 1.0, 365.0, 1.0),
            0.0,
            0.16,
            (0.10, 0.0),
            (0.30, 0.55),
            (0.10, 0.03),
            (0.30, 0.10),
            (0.0, 0.04),
        ),
    );
    map.insert("abandoned".to_string(), flat(0.13, 0.40, (0.40, -0.03), 0.14));
    map.insert("impervious".to_string(), flat(0.08, 0.35, (0.30, -0.05), 0.34));
    map.insert(
        "forest".to_string(),
        profile(
            (0.45, 0.35, 120.0, 0.08, 300.0, 0.08),
            0.0,
            0.38,
            (0.25, 0.0),
            (0.50, -0.02),
            (0.30, 0.05),
            (0.45, 0.05),
            (0.0, 0.30),
        ),
    );
    map
}
