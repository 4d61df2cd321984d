use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::{IngestError, LabeledNetwork, RoadType, DEFAULT_ORIGIN};
use crate::predictions::{PredictionSet, LANE_CLASSES, TYPE_CLASSES};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// GeoJSON document with one Point per vertex (in vertex order) followed by
/// one two-point LineString per edge, so that parsing it back rebuilds the
/// same graph and labels. Points carry ground truth where known and, when
/// given, the predicted classes and probabilities.
fn document(network: &LabeledNetwork, predictions: Option<&PredictionSet>) -> Result<String, IngestError> {
    let n = network.vertex_count();
    if let Some(p) = predictions {
        if p.len() != n || p.road_type.len() != n {
            return Err(IngestError::Invalid(format!(
                "predictions cover {} vertices, network has {n}",
                p.len()
            )));
        }
        if p.lanes.classes() != LANE_CLASSES || p.road_type.classes() != TYPE_CLASSES {
            return Err(IngestError::Invalid("prediction tables have the wrong class count".into()));
        }
    }
    let origin = network.origin.unwrap_or(DEFAULT_ORIGIN);
    let coord = |v: usize| {
        let (lon, lat) = origin.unproject(network.graph.position(v));
        json!([lon, lat])
    };

    let argmax = predictions.map(|p| (p.lanes.argmax(), p.road_type.argmax()));
    let mut features = Vec::with_capacity(n + network.graph.edge_count());
    for v in 0..n {
        let mut props = Map::new();
        props.insert("vertex".into(), json!(v));
        if let Some(l) = network.lanes[v] {
            props.insert("lanes".into(), json!(l));
        }
        if let Some(t) = network.road_type[v] {
            props.insert("highway".into(), json!(t.as_str()));
        }
        if let (Some(p), Some((lane_pred, type_pred))) = (predictions, &argmax) {
            props.insert("pred_lanes".into(), json!(lane_pred[v] + 1));
            props.insert("lane_probs".into(), json!(p.lanes.row(v)));
            let ty = RoadType::from_class(type_pred[v]).expect("two type classes");
            props.insert("pred_type".into(), json!(ty.as_str()));
            props.insert("type_probs".into(), json!(p.road_type.row(v)));
        }
        features.push(json!({
            "type": "Feature",
            "properties": Value::Object(props),
            "geometry": {"type": "Point", "coordinates": coord(v)},
        }));
    }
    for (a, b) in network.graph.edges() {
        features.push(json!({
            "type": "Feature",
            "properties": {},
            "geometry": {"type": "LineString", "coordinates": [coord(a), coord(b)]},
        }));
    }
    let doc = json!({
        "type": "FeatureCollection",
        "projection_origin": [origin.lon, origin.lat],
        "features": features,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("serializable"))
}

/// Network and ground truth only.
pub fn network_document(network: &LabeledNetwork) -> String {
    document(network, None).expect("no predictions to validate")
}

/// Network, ground truth, and per-vertex predictions.
pub fn predictions_document(
    network: &LabeledNetwork,
    predictions: &PredictionSet,
) -> Result<String, IngestError> {
    document(network, Some(predictions))
}

/// Serializes predictions and writes them atomically; returns the document.
pub fn write_predictions(
    network: &LabeledNetwork,
    predictions: &PredictionSet,
    path: &Path,
) -> Result<String, IngestError> {
    let text = predictions_document(network, predictions)?;
    write_atomic(path, text.as_bytes())?;
    Ok(text)
}
