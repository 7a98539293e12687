//! Persistence for scenes, sample sets, and trained models.
//!
//! Scene bundles are directories: `scene.json` holds dimensions,
//! grids, the class and stratum tables, and a file map; each band
//! stack is one little-endian `f32` flat file in step-major layout,
//! each sensor validity stack one byte file, and the optional label
//! and stratum rasters little-endian `u16` files. Sample sets export
//! as a CSV of per-sample metadata plus a flat `f32` sidecar of series
//! values and a JSON header. Models are versioned JSON envelopes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::band::{Band, Sensor};
use crate::error::{CoreError, Result};
use crate::forest::pul::PulEnsemble;
use crate::forest::ForestModel;
use crate::grid::TimeGrid;
use crate::sample::{Provenance, Sample, SampleSet};
use crate::scene::SceneStack;
use crate::series::SeriesSet;

pub const SCENE_FORMAT: &str = "scene-bundle";
pub const SCENE_VERSION: u32 = 1;
pub const SAMPLES_FORMAT: &str = "sample-set";
pub const SAMPLES_VERSION: u32 = 1;
pub const FOREST_FORMAT: &str = "forest-model";
pub const FOREST_VERSION: u32 = 1;
pub const PUL_FORMAT: &str = "pul-model";
pub const PUL_VERSION: u32 = 1;

fn format_err(path: &Path, detail: impl Into<String>) -> CoreError {
    CoreError::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

pub fn write_f32_file(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f32_file(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 4 {
        return Err(format_err(
            path,
            format!("expected {} f32 values ({} bytes), file has {} bytes", expected, expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_u16_file(path: &Path, values: &[u16]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 2);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_u16_file(path: &Path, expected: usize) -> Result<Vec<u16>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 2 {
        return Err(format_err(
            path,
            format!("expected {} u16 values ({} bytes), file has {} bytes", expected, expected * 2, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

pub fn write_u8_file(path: &Path, values: &[u8]) -> Result<()> {
    fs::write(path, values)?;
    Ok(())
}

pub fn read_u8_file(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!("expected {} bytes, file has {}", expected, bytes.len()),
        ));
    }
    Ok(bytes)
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    payload: T,
}

/// Writes a value as a versioned JSON envelope.
pub fn save_versioned<T: Serialize>(path: &Path, format: &str, version: u32, payload: &T) -> Result<()> {
    let envelope = Envelope {
        format: format.to_string(),
        version,
        payload,
    };
    let json = serde_json::to_string_pretty(&envelope)?;
    fs::write(path, json)?;
    Ok(())
}

/// Reads a versioned JSON envelope, rejecting other formats and
/// versions.
pub fn load_versioned<T: DeserializeOwned>(path: &Path, format: &str, version: u32) -> Result<T> {
    let json = fs::read_to_string(path)?;
    let envelope: Envelope<serde_json::Value> = serde_json::from_str(&json)?;
    if envelope.format != format {
        return Err(format_err(
            path,
            format!("format '{}' where '{}' was expected", envelope.format, format),
        ));
    }
    if envelope.version != version {
        return Err(CoreError::Version {
            what: format.to_string(),
            found: envelope.version,
            expected: version,
        });
    }
    Ok(serde_json::from_value(envelope.payload)?)
}

#[derive(Serialize, Deserialize)]
struct SceneMeta {
    format: String,
    version: u32,
    width: usize,
    height: usize,
    classes: Vec<String>,
    strata: Vec<String>,
    optical_grid: TimeGrid,
    radar_grid: TimeGrid,
    /// Band name to flat-file name, in band order.
    band_files: BTreeMap<String, String>,
    optical_valid_file: String,
    radar_valid_file: String,
    labels_file: Option<String>,
    strata_file: Option<String>,
}

/// Writes a scene bundle directory, creating it if needed.
pub fn save_scene(scene: &SceneStack, dir: &Path) -> Result<()> {
    scene.validate()?;
    fs::create_dir_all(dir)?;
    let mut band_files = BTreeMap::new();
    for (&band, data) in &scene.bands {
        let file = format!("{}.f32", band.name());
        write_f32_file(&dir.join(&file), data)?;
        band_files.insert(band.name().to_string(), file);
    }
    write_u8_file(&dir.join("optical_valid.u8"), &scene.optical_valid)?;
    write_u8_file(&dir.join("radar_valid.u8"), &scene.radar_valid)?;
    let labels_file = match &scene.labels {
        Some(labels) => {
            write_u16_file(&dir.join("labels.u16"), labels)?;
            Some("labels.u16".to_string())
        }
        None => None,
    };
    let strata_file = match &scene.strata_map {
        Some(strata) => {
            write_u16_file(&dir.join("strata.u16"), strata)?;
            Some("strata.u16".to_string())
        }
        None => None,
    };
    let meta = SceneMeta {
        format: SCENE_FORMAT.to_string(),
        version: SCENE_VERSION,
        width: scene.width,
        height: scene.height,
        classes: scene.classes.clone(),
        strata: scene.strata.clone(),
        optical_grid: scene.optical_grid,
        radar_grid: scene.radar_grid,
        band_files,
        optical_valid_file: "optical_valid.u8".to_string(),
        radar_valid_file: "radar_valid.u8".to_string(),
        labels_file,
        strata_file,
    };
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(dir.join("scene.json"), json)?;
    Ok(())
}

/// Reads a scene bundle directory and validates its sizes.
pub fn load_scene(dir: &Path) -> Result<SceneStack> {
    let meta_path = dir.join("scene.json");
    let json = fs::read_to_string(&meta_path)?;
    let meta: SceneMeta = serde_json::from_str(&json)?;
    if meta.format != SCENE_FORMAT {
        return Err(format_err(
            &meta_path,
            format!("format '{}' where '{}' was expected", meta.format, SCENE_FORMAT),
        ));
    }
    if meta.version != SCENE_VERSION {
        return Err(CoreError::Version {
            what: SCENE_FORMAT.to_string(),
            found: meta.version,
            expected: SCENE_VERSION,
        });
    }
    let px = meta.width * meta.height;
    let mut bands = BTreeMap::new();
    for (name, file) in &meta.band_files {
        let band = Band::from_name(name)
            .ok_or_else(|| format_err(&meta_path, format!("unknown band '{name}'")))?;
        let steps = match band.sensor() {
            Sensor::Optical => meta.optical_grid.count,
            Sensor::Radar => meta.radar_grid.count,
        };
        bands.insert(band, read_f32_file(&dir.join(file), steps * px)?);
    }
    let optical_valid = read_u8_file(&dir.join(&meta.optical_valid_file), meta.optical_grid.count * px)?;
    let radar_valid = read_u8_file(&dir.join(&meta.radar_valid_file), meta.radar_grid.count * px)?;
    let labels = match &meta.labels_file {
        Some(file) => Some(read_u16_file(&dir.join(file), px)?),
        None => None,
    };
    let strata_map = match &meta.strata_file {
        Some(file) => Some(read_u16_file(&dir.join(file), px)?),
        None => None,
    };
    let scene = SceneStack {
        width: meta.width,
        height: meta.height,
        classes: meta.classes,
        strata: meta.strata,
        optical_grid: meta.optical_grid,
        radar_grid: meta.radar_grid,
        bands,
        optical_valid,
        radar_valid,
        labels,
        strata_map,
    };
    scene.validate()?;
    Ok(scene)
}

#[derive(Serialize, Deserialize)]
struct SamplesMeta {
    format: String,
    version: u32,
    classes: Vec<String>,
    optical_grid: TimeGrid,
    radar_grid: TimeGrid,
    /// Bands each sample's series carries, in sidecar order.
    bands: Vec<Band>,
    count: usize,
}

/// Series values of one sample in sidecar order: each band's full
/// series, bands in the meta's order.
fn sidecar_len(bands: &[Band], optical: &TimeGrid, radar: &TimeGrid) -> usize {
    bands
        .iter()
        .map(|b| match b.sensor() {
            Sensor::Optical => optical.count,
            Sensor::Radar => radar.count,
        })
        .sum()
}

/// Writes a sample set as `<stem>.csv`, `<stem>.f32`, and
/// `<stem>.json` next to each other.
///
/// The CSV columns are `sample, x, y, class, provenance,
/// optical_valid, radar_valid`; location-free samples leave `x` and
/// `y` empty. The sidecar holds each sample's series as contiguous
/// `f32` values, bands in the JSON header's order. Every sample must
/// carry the same band set.
pub fn save_samples(set: &SampleSet, stem: &Path) -> Result<()> {
    let bands: Vec<Band> = match set.samples.first() {
        Some(first) => first.series.bands.keys().copied().collect(),
        None => Vec::new(),
    };
    for (i, sample) in set.samples.iter().enumerate() {
        let sample_bands: Vec<Band> = sample.series.bands.keys().copied().collect();
        if sample_bands != bands {
            return Err(CoreError::RejectedInput(format!(
                "sample {i} carries a different band set than sample 0"
            )));
        }
    }

    let meta = SamplesMeta {
        format: SAMPLES_FORMAT.to_string(),
        version: SAMPLES_VERSION,
        classes: set.classes.clone(),
        optical_grid: set.optical_grid,
        radar_grid: set.radar_grid,
        bands: bands.clone(),
        count: set.samples.len(),
    };
    save_versioned(
        &stem.with_extension("json"),
        SAMPLES_FORMAT,
        SAMPLES_VERSION,
        &meta,
    )?;

    let mut csv = String::from("sample,x,y,class,provenance,optical_valid,radar_valid\n");
    let mut sidecar: Vec<f32> = Vec::new();
    for (i, sample) in set.samples.iter().enumerate() {
        let (x, y) = match sample.location {
            Some((x, y)) => (x.to_string(), y.to_string()),
            None => (String::new(), String::new()),
        };
        let class = set
            .classes
            .get(sample.class_id as usize)
            .ok_or_else(|| CoreError::UnknownClass(format!("class id {}", sample.class_id)))?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i,
            x,
            y,
            class,
            sample.provenance.name(),
            sample.series.valid_count(Sensor::Optical),
            sample.series.valid_count(Sensor::Radar),
        ));
        for &band in &bands {
            sidecar.extend_from_slice(sample.series.band(band).unwrap());
        }
    }
    let mut csv_file = fs::File::create(stem.with_extension("csv"))?;
    csv_file.write_all(csv.as_bytes())?;
    write_f32_file(&stem.with_extension("f32"), &sidecar)?;
    Ok(())
}

/// Reads a sample set written by [`save_samples`].
pub fn load_samples(stem: &Path) -> Result<SampleSet> {
    let meta: SamplesMeta = load_versioned(
        &stem.with_extension("json"),
        SAMPLES_FORMAT,
        SAMPLES_VERSION,
    )?;
    let per_sample = sidecar_len(&meta.bands, &meta.optical_grid, &meta.radar_grid);
    let sidecar = read_f32_file(&stem.with_extension("f32"), per_sample * meta.count)?;

    let csv_path = stem.with_extension("csv");
    let mut csv = String::new();
    fs::File::open(&csv_path)?.read_to_string(&mut csv)?;
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or("");
    if header != "sample,x,y,class,provenance,optical_valid,radar_valid" {
        return Err(format_err(&csv_path, "unexpected CSV header"));
    }

    let mut set = SampleSet::new(meta.classes.clone(), meta.optical_grid, meta.radar_grid);
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(format_err(&csv_path, format!("row {row} has {} fields", fields.len())));
        }
        let location = match (fields[1], fields[2]) {
            ("", "") => None,
            (x, y) => Some((
                x.parse::<u32>().map_err(|e| format_err(&csv_path, format!("row {row} x: {e}")))?,
                y.parse::<u32>().map_err(|e| format_err(&csv_path, format!("row {row} y: {e}")))?,
            )),
        };
        let class_id = meta
            .classes
            .iter()
            .position(|c| c == fields[3])
            .ok_or_else(|| CoreError::UnknownClass(fields[3].to_string()))? as u16;
        let provenance = Provenance::from_name(fields[4])
            .ok_or_else(|| format_err(&csv_path, format!("row {row} provenance '{}'", fields[4])))?;

        let base = row * per_sample;
        let mut offset = 0usize;
        let mut bands = BTreeMap::new();
        for &band in &meta.bands {
            let steps = match band.sensor() {
                Sensor::Optical => meta.optical_grid.count,
                Sensor::Radar => meta.radar_grid.count,
            };
            bands.insert(band, sidecar[base + offset..base + offset + steps].to_vec());
            offset += steps;
        }
        set.samples.push(Sample {
            location,
            class_id,
            provenance,
            series: SeriesSet {
                optical_grid: meta.optical_grid,
                radar_grid: meta.radar_grid,
                bands,
            },
        });
    }
    if set.samples.len() != meta.count {
        return Err(format_err(
            &csv_path,
            format!("{} rows where the header declares {}", set.samples.len(), meta.count),
        ));
    }
    Ok(set)
}

pub fn save_forest_model(model: &ForestModel, path: &Path) -> Result<()> {
    save_versioned(path, FOREST_FORMAT, FOREST_VERSION, model)
}

pub fn load_forest_model(path: &Path) -> Result<ForestModel> {
    load_versioned(path, FOREST_FORMAT, FOREST_VERSION)
}

pub fn save_pul_model(model: &PulEnsemble, path: &Path) -> Result<()> {
    save_versioned(path, PUL_FORMAT, PUL_VERSION, model)
}

pub fn load_pul_model(path: &Path) -> Result<PulEnsemble> {
    load_versioned(path, PUL_FORMAT, PUL_VERSION)
}

/// Resolves a path relative to a base directory unless it is absolute.
pub fn resolve_path(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_scene, huantai_profiles, RegionSpec, SceneSpec};
    use tempfile::tempdir;

    fn small_scene() -> SceneStack {
        let spec = SceneSpec {
            width: 6,
            height: 4,
            optical_grid: TimeGrid::new(65, 10, 5),
            radar_grid: TimeGrid::new(65, 12, 4),
            regions: vec![
                RegionSpec::new("maize", "maize"),
                RegionSpec::new("water", "other"),
            ],
            block_size: 2,
            noise_sd: 0.02,
            cloud: None,
            seed: 77,
        };
        generate_scene(&spec, &huantai_profiles()).unwrap()
    }

    #[test]
    fn scene_bundle_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let scene = small_scene();
        save_scene(&scene, dir.path()).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn scene_bundle_rejects_truncated_band_file() {
        let dir = tempdir().unwrap();
        let scene = small_scene();
        save_scene(&scene, dir.path()).unwrap();
        let nir = dir.path().join("nir.f32");
        let bytes = fs::read(&nir).unwrap();
        fs::write(&nir, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_scene(dir.path()), Err(CoreError::Format { .. })));
    }

    #[test]
    fn scene_bundle_rejects_future_version() {
        let dir = tempdir().unwrap();
        save_scene(&small_scene(), dir.path()).unwrap();
        let meta_path = dir.path().join("scene.json");
        let json = fs::read_to_string(&meta_path).unwrap();
        fs::write(&meta_path, json.replace("\"version\": 1", "\"version\": 9")).unwrap();
        assert!(matches!(
            load_scene(dir.path()),
            Err(CoreError::Version { found: 9, expected: 1, .. })
        ));
    }

    fn sample_fixture() -> SampleSet {
        let scene = small_scene();
        let mut set = SampleSet::new(
            scene.classes.clone(),
            scene.optical_grid,
            scene.radar_grid,
        );
        for (i, (x, y)) in [(0u32, 0u32), (3, 1), (5, 3)].iter().enumerate() {
            set.samples.push(Sample {
                location: if i == 2 { None } else { Some((*x, *y)) },
                class_id: (i % 2) as u16,
                provenance: if i == 2 { Provenance::Mixture } else { Provenance::Rule },
                series: scene.pixel_series(*x as usize, *y as usize),
            });
        }
        set
    }

    #[test]
    fn sample_set_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let stem = dir.path().join("samples");
        let set = sample_fixture();
        save_samples(&set, &stem).unwrap();
        let back = load_samples(&stem).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn sample_csv_has_documented_columns() {
        let dir = tempdir().unwrap();
        let stem = dir.path().join("samples");
        save_samples(&sample_fixture(), &stem).unwrap();
        let csv = fs::read_to_string(stem.with_extension("csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "sample,x,y,class,provenance,optical_valid,radar_valid"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[3], "maize");
        assert_eq!(first[4], "rule");
        assert_eq!(first[5], "5");
        assert_eq!(first[6], "4");
        let third: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(third[0], "1");
        let last: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!((last[1], last[2]), ("", ""), "synthesized samples have no location");
    }

    #[test]
    fn forest_model_round_trips_through_the_envelope() {
        use crate::features::FeatureConfig;
        use crate::forest::{train_forest, ForestParams};
        use crate::index::IndexKind;

        let mut set = sample_fixture();
        let scene = small_scene();
        for (x, y) in [(1, 0), (2, 2), (4, 1), (0, 3), (2, 0), (5, 0)] {
            let labels = scene.labels.as_ref().unwrap();
            set.samples.push(Sample {
                location: Some((x as u32, y as u32)),
                class_id: labels[y * scene.width + x],
                provenance: Provenance::Rule,
                series: scene.pixel_series(x, y),
            });
        }
        let features = FeatureConfig {
            indices: vec![IndexKind::Ndvi],
            ..FeatureConfig::default()
        };
        let params = ForestParams {
            n_trees: 5,
            ..ForestParams::default()
        };
        let model = train_forest(&set, &features, &params, 3).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_forest_model(&model, &path).unwrap();
        let back = load_forest_model(&path).unwrap();
        assert_eq!(model, back);

        assert!(matches!(
            load_pul_model(&path),
            Err(CoreError::Format { .. })
        ));
    }

    #[test]
    fn version_mismatch_is_a_version_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v.json");
        save_versioned(&path, "thing", 2, &vec![1, 2, 3]).unwrap();
        match load_versioned::<Vec<i32>>(&path, "thing", 3) {
            Err(CoreError::Version { found: 2, expected: 3, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }
}
