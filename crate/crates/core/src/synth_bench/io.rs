//! On-disk layout of a generated suite:
//!
//! ```text
//! DIR/manifest.json
//! DIR/worlds/world_000.geojson        network + ground truth
//! DIR/worlds/world_000.features.csv   vertex,<16 channels>,disruption
//! DIR/worlds/world_000.spec.json      scenario that produced it
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::channel_names;
use super::suite::{Preset, Suite, SuiteOptions};
use super::world::{generate_world, World};
use super::{DisruptionKind, SynthError};
use crate::autodiff::Tensor;
use crate::ingest::{network_document, parse_geojson_network, write_atomic, LabeledNetwork, TagMapping};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSplit {
    pub name: String,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Index of a suite directory: world stems per split and role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub preset: Preset,
    pub seed: u64,
    pub options: SuiteOptions,
    pub splits: Vec<ManifestSplit>,
}

impl SuiteManifest {
    pub fn split(&self, name: &str) -> Option<&ManifestSplit> {
        self.splits.iter().find(|s| s.name == name)
    }
}

/// Paths of one world's files, relative to the suite directory.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldFiles {
    pub network: PathBuf,
    pub features: PathBuf,
    pub spec: PathBuf,
}

impl WorldFiles {
    pub fn for_stem(dir: &Path, stem: &str) -> Self {
        let base = dir.join(stem);
        let with = |ext: &str| {
            let mut p = base.clone().into_os_string();
            p.push(ext);
            PathBuf::from(p)
        };
        Self {
            network: with(".geojson"),
            features: with(".features.csv"),
            spec: with(".spec.json"),
        }
    }
}

/// A world as read back from disk: everything evaluation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldData {
    pub name: String,
    pub network: LabeledNetwork,
    pub features: Tensor,
    pub disruption: Vec<Option<DisruptionKind>>,
}

impl WorldData {
    pub fn from_world(name: &str, w: &World) -> Self {
        Self {
            name: name.to_string(),
            network: w.network.clone(),
            features: w.features.clone(),
            disruption: w.disruption.clone(),
        }
    }

    pub fn occluded_mask(&self) -> Vec<bool> {
        self.disruption.iter().map(|d| d.is_some_and(DisruptionKind::occludes)).collect()
    }

    pub fn subsets(&self) -> Vec<(String, Vec<bool>)> {
        vec![
            ("occluded".to_string(), self.occluded_mask()),
            ("clean".to_string(), self.disruption.iter().map(Option::is_none).collect()),
        ]
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, SynthError> {
        let files = WorldFiles::for_stem(dir, stem);
        let text = read_text(&files.network)?;
        let network = parse_geojson_network(&text, &TagMapping::default())?.network;
        let (features, disruption) = read_features(&files.features)?;
        if features.rows() != network.vertex_count() {
            return Err(SynthError::Features(format!(
                "{} has {} rows for {} vertices",
                files.features.display(),
                features.rows(),
                network.vertex_count()
            )));
        }
        Ok(Self {
            name: stem.to_string(),
            network,
            features,
            disruption,
        })
    }
}

/// Writes the sidecar feature CSV atomically.
pub fn write_features(path: &Path, features: &Tensor, disruption: &[Option<DisruptionKind>]) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["vertex".to_string()];
    header.extend(channel_names());
    header.push("disruption".to_string());
    let csv_err = |e: csv::Error| SynthError::Features(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for v in 0..features.rows() {
        let mut rec = vec![v.to_string()];
        rec.extend(features.row(v).iter().map(|x| x.to_string()));
        rec.push(disruption[v].map_or(String::new(), |k| k.as_str().to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| SynthError::Features(e.to_string()))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

/// Reads a sidecar feature CSV. Rows must be in vertex order; the
/// `disruption` column is optional.
pub fn read_features(path: &Path) -> Result<(Tensor, Vec<Option<DisruptionKind>>), SynthError> {
    let ferr = |msg: String| SynthError::Features(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| ferr(e.to_string()))?;
    let header = r.headers().map_err(|e| ferr(e.to_string()))?.clone();
    if header.get(0) != Some("vertex") {
        return Err(ferr("first column must be `vertex`".into()));
    }
    let has_disruption = header.iter().next_back() == Some("disruption");
    let dim = header.len() - 1 - usize::from(has_disruption);
    if dim == 0 {
        return Err(ferr("no feature columns".into()));
    }
    let mut data = Vec::new();
    let mut disruption = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| ferr(e.to_string()))?;
        let v: usize = rec[0].parse().map_err(|_| ferr(format!("row {}: bad vertex id", i + 1)))?;
        if v != i {
            return Err(ferr(format!("row {}: expected vertex {i}, found {v}", i + 1)));
        }
        for c in 1..=dim {
            let x: f64 = rec[c]
                .parse()
                .map_err(|_| ferr(format!("row {}: bad value {:?}", i + 1, &rec[c])))?;
            data.push(x);
        }
        disruption.push(if has_disruption && !rec[dim + 1].is_empty() {
            Some(
                DisruptionKind::parse(&rec[dim + 1])
                    .ok_or_else(|| ferr(format!("row {}: unknown disruption {:?}", i + 1, &rec[dim + 1])))?,
            )
        } else {
            None
        });
    }
    let rows = disruption.len();
    Ok((Tensor::matrix(rows, dim, data).map_err(|e| ferr(e.to_string()))?, disruption))
}

/// Writes one world's three files under `dir` using `stem`.
pub fn write_world(dir: &Path, stem: &str, world: &World) -> Result<WorldFiles, SynthError> {
    let files = WorldFiles::for_stem(dir, stem);
    if let Some(parent) = files.network.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_atomic(&files.network, network_document(&world.network).as_bytes())?;
    write_features(&files.features, &world.features, &world.disruption)?;
    let spec = serde_json::to_string_pretty(&world.spec).expect("serializable");
    write_atomic(&files.spec, spec.as_bytes())?;
    Ok(files)
}

/// Generates every world of `suite` and writes it under `dir`. Worlds
/// shared between splits are written once.
pub fn write_suite(dir: &Path, suite: &Suite, options: &SuiteOptions) -> Result<SuiteManifest, SynthError> {
    std::fs::create_dir_all(dir)?;
    let mut written: BTreeMap<String, String> = BTreeMap::new();
    let mut splits = Vec::new();
    for split in &suite.splits {
        let mut stems = |specs: &[super::ScenarioSpec]| -> Result<Vec<String>, SynthError> {
            specs
                .iter()
                .map(|spec| {
                    let key = serde_json::to_string(spec).expect("serializable");
                    if let Some(stem) = written.get(&key) {
                        return Ok(stem.clone());
                    }
                    let stem = format!("worlds/world_{:03}", written.len());
                    write_world(dir, &stem, &generate_world(spec)?)?;
                    written.insert(key, stem.clone());
                    Ok(stem)
                })
                .collect()
        };
        splits.push(ManifestSplit {
            name: split.name.clone(),
            train: stems(&split.train)?,
            validation: stems(&split.validation)?,
            test: stems(&split.test)?,
        });
    }
    let manifest = SuiteManifest {
        preset: suite.preset,
        seed: suite.seed,
        options: options.clone(),
        splits,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("serializable");
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

/// Reads a whole file; the error names the path.
fn read_text(path: &Path) -> Result<String, SynthError> {
    std::fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

pub fn read_manifest(dir: &Path) -> Result<SuiteManifest, SynthError> {
    let path = dir.join(MANIFEST_FILE);
    let text = read_text(&path)?;
    serde_json::from_str(&text).map_err(|e| SynthError::Spec(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_bench::suite::scenario_suite;

    fn tiny() -> SuiteOptions {
        SuiteOptions {
            train_worlds: Some(2),
            validation_worlds: Some(1),
            test_worlds: Some(1),
            ..SuiteOptions::default()
        }
    }

    #[test]
    fn suite_round_trips_through_disk() {
        let opts = tiny();
        let suite = scenario_suite(Preset::Basic, 4, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_suite(dir.path(), &suite, &opts).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
        let stem = &manifest.splits[0].test[0];
        let loaded = WorldData::load(dir.path(), stem).unwrap();
        let original = generate_world(&suite.splits[0].test[0]).unwrap();
        assert_eq!(loaded.features, original.features);
        assert_eq!(loaded.disruption, original.disruption);
        assert_eq!(loaded.network.lanes, original.network.lanes);
        assert_eq!(loaded.network.road_type, original.network.road_type);
        assert_eq!(loaded.network.graph.adjacency(), original.network.graph.adjacency());
    }

    #[test]
    fn shared_train_worlds_written_once() {
        let opts = SuiteOptions {
            steps: 2,
            ..tiny()
        };
        let suite = scenario_suite(Preset::LongDisruption, 1, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_suite(dir.path(), &suite, &opts).unwrap();
        assert_eq!(manifest.splits.len(), 3);
        assert_eq!(manifest.splits[0].train, manifest.splits[2].train);
        let files = std::fs::read_dir(dir.path().join("worlds")).unwrap().count();
        // 3 shared train/validation worlds + 3 test worlds, 3 files each
        assert_eq!(files, 6 * 3);
    }

    #[test]
    fn feature_csv_rejects_out_of_order_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "vertex,a,b\n1,0.5,0.5\n").unwrap();
        assert!(matches!(read_features(&p), Err(SynthError::Features(_))));
    }
}
