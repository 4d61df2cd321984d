//! Python module `roadtagger_native`: network parsing, tagger inference, and
//! the full command line, callable in-process.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use roadtagger::autodiff::Tensor;
use roadtagger::cli::Bundle;
use roadtagger::ingest::{parse_geojson_network, parse_osm_xml, LabeledNetwork, Parsed, RoadType, TagMapping};
use roadtagger::metrics_eval;
use roadtagger::model::RoadTagger;
use roadtagger::training::{PreparedNetwork, TrainConfig};

fn parse_text(text: &str, format: &str) -> Result<Parsed, String> {
    let mapping = TagMapping::default();
    let parsed = match format {
        "geojson" => parse_geojson_network(text, &mapping),
        "osm" => parse_osm_xml(text, &mapping),
        other => return Err(format!("unknown network format {other:?}; expected \"geojson\" or \"osm\"")),
    };
    parsed.map_err(|e| e.to_string())
}

fn feature_tensor(rows: Vec<Vec<f64>>) -> Result<Tensor, String> {
    let width = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(format!("feature row {i} has {} values, row 0 has {width}", rows[i].len()));
    }
    Tensor::matrix(rows.len(), width, rows.concat()).map_err(|e| e.to_string())
}

/// Accepts a training bundle or a bare model checkpoint.
fn load_model(path: &std::path::Path) -> Result<RoadTagger, String> {
    match Bundle::load(path) {
        Ok(bundle) => bundle.tagger().map_err(|e| e.to_string()),
        Err(bundle_err) => RoadTagger::load(path).map_err(|e| format!("{bundle_err}; as a model checkpoint: {e}")),
    }
}

fn type_name(t: Option<RoadType>) -> Option<&'static str> {
    t.map(RoadType::as_str)
}

fn network_dict<'py>(py: Python<'py>, net: &LabeledNetwork, warnings: &[String]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let positions: Vec<(f64, f64)> = net.graph.positions().iter().map(|p| (p.x, p.y)).collect();
    let edges: Vec<(usize, usize)> = net.graph.edges().collect();
    d.set_item("positions", positions)?;
    d.set_item("edges", edges)?;
    d.set_item("lanes", net.lanes.clone())?;
    d.set_item("road_type", net.road_type.iter().map(|&t| type_name(t)).collect::<Vec<_>>())?;
    d.set_item("warnings", warnings.to_vec())?;
    Ok(d)
}

/// Parses a GeoJSON or OSM XML document into planar positions, edges, and
/// per-vertex labels (`None` where masked).
#[pyfunction]
#[pyo3(signature = (text, format = "geojson"))]
fn parse_network<'py>(py: Python<'py>, text: &str, format: &str) -> PyResult<Bound<'py, PyDict>> {
    let parsed = parse_text(text, format).map_err(PyValueError::new_err)?;
    network_dict(py, &parsed.network, &parsed.warnings)
}

/// Runs the command line with `args` (without the program name) and returns
/// its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| roadtagger::cli::run(std::iter::once("roadtagger".to_string()).chain(args)))
}

/// Relative ALE reduction in percent.
#[pyfunction]
fn reduction_percent(base: f64, new: f64) -> f64 {
    metrics_eval::reduction_percent(base, new)
}

/// A trained tagger.
#[pyclass(name = "Tagger", module = "roadtagger_native", frozen)]
struct PyTagger {
    model: RoadTagger,
}

#[pymethods]
impl PyTagger {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        if !path.exists() {
            return Err(PyOSError::new_err(format!("{}: no such file", path.display())));
        }
        load_model(&path).map(|model| Self { model }).map_err(PyValueError::new_err)
    }

    #[getter]
    fn steps(&self) -> usize {
        self.model.config().steps
    }

    #[getter]
    fn structures(&self) -> Vec<&'static str> {
        self.model.config().structures.iter().map(|k| k.name()).collect()
    }

    /// Lane counts, road types, and class probabilities for every vertex of
    /// `network`, given one feature row per vertex.
    #[pyo3(signature = (network, features, format = "geojson"))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        network: &str,
        features: Vec<Vec<f64>>,
        format: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let parsed = parse_text(network, format).map_err(PyValueError::new_err)?;
        let features = feature_tensor(features).map_err(PyValueError::new_err)?;
        let kinds = &self.model.config().structures;
        let net = PreparedNetwork::new("network", parsed.network, features, kinds)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let batch = TrainConfig::default().eval_batch_vertices;
        let preds = py
            .detach(|| self.model.predict(&net.features, &net.structures, batch))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let d = PyDict::new(py);
        let lanes: Vec<usize> = preds.lanes.argmax().into_iter().map(|c| c + 1).collect();
        let types: Vec<Option<&str>> =
            preds.road_type.argmax().into_iter().map(|c| type_name(RoadType::from_class(c))).collect();
        let rows = |t: &roadtagger::predictions::ProbTable| (0..t.len()).map(|v| t.row(v).to_vec()).collect::<Vec<_>>();
        d.set_item("lanes", lanes)?;
        d.set_item("road_type", types)?;
        d.set_item("lane_probs", rows(&preds.lanes))?;
        d.set_item("type_probs", rows(&preds.road_type))?;
        Ok(d)
    }
}

#[pymodule]
fn roadtagger_native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(parse_network, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_function(wrap_pyfunction!(reduction_percent, m)?)?;
    m.add_class::<PyTagger>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"type": "FeatureCollection", "features": [{"type": "Feature",
        "properties": {"lanes": 3, "highway": "primary"},
        "geometry": {"type": "LineString", "coordinates": [[11.0, 48.0], [11.0005, 48.0]]}}]}"#;

    #[test]
    fn formats_dispatch() {
        let p = parse_text(LINE, "geojson").unwrap();
        assert_eq!(p.network.vertex_count(), 2);
        assert!(parse_text(LINE, "osm").is_err());
        assert!(parse_text(LINE, "shapefile").unwrap_err().contains("unknown network format"));
    }

    #[test]
    fn ragged_features_rejected() {
        assert!(feature_tensor(vec![vec![1.0, 2.0], vec![3.0]]).unwrap_err().contains("row 1"));
        let t = feature_tensor(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        assert!(load_model(std::path::Path::new("/nonexistent/model.json")).is_err());
    }
}
