use serde_json::Value;

use super::{
    parse_lanes_text, clamp_lanes, GeoOrigin, IngestError, LabeledNetwork, Parsed, RoadType, TagMapping,
    VertexMerger,
};
use crate::road_graph::RoadGraph;

fn invalid(msg: impl Into<String>) -> IngestError {
    IngestError::Invalid(msg.into())
}

fn lon_lat(v: &Value) -> Option<(f64, f64)> {
    let arr = v.as_array()?;
    if arr.len() < 2 {
        return None;
    }
    Some((arr[0].as_f64()?, arr[1].as_f64()?))
}

fn lanes_property(props: &Value, context: &str, warnings: &mut Vec<String>) -> Option<u8> {
    match props.get("lanes")? {
        Value::Number(n) => match n.as_i64() {
            Some(i) => Some(clamp_lanes(i, context, warnings)),
            None => match n.as_f64() {
                Some(f) if f.fract() == 0.0 => Some(clamp_lanes(f as i64, context, warnings)),
                _ => {
                    warnings.push(format!("{context}: non-integer lanes {n}, label masked"));
                    None
                }
            },
        },
        Value::String(s) => parse_lanes_text(s, context, warnings),
        Value::Null => None,
        other => {
            warnings.push(format!("{context}: unsupported lanes value {other}, label masked"));
            None
        }
    }
}

fn highway_property(props: &Value, mapping: &TagMapping) -> Option<RoadType> {
    props.get("highway").and_then(Value::as_str).and_then(|h| mapping.classify(h))
}

/// Parses a FeatureCollection of LineString (roads) and Point (per-vertex
/// labels) features with lon/lat coordinates.
///
/// Coordinates are projected about the document's `projection_origin`
/// member when present, otherwise about the bounding-box centre. Points
/// closer than the merge tolerance become one vertex. The first label
/// assigned to a vertex wins.
pub fn parse_geojson_network(text: &str, mapping: &TagMapping) -> Result<Parsed, IngestError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| IngestError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(invalid("top-level object is not a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| invalid("FeatureCollection has no features array"))?;

    let mut warnings = Vec::new();
    let origin = match doc.get("projection_origin").and_then(lon_lat) {
        Some((lon, lat)) => GeoOrigin { lon, lat },
        None => {
            let mut coords = Vec::new();
            for f in features {
                let geom = f.get("geometry");
                match geom.and_then(|g| g.get("type")).and_then(Value::as_str) {
                    Some("LineString") => {
                        if let Some(cs) = geom.and_then(|g| g.get("coordinates")).and_then(Value::as_array) {
                            coords.extend(cs.iter().filter_map(lon_lat));
                        }
                    }
                    Some("Point") => {
                        if let Some(c) = geom.and_then(|g| g.get("coordinates")).and_then(lon_lat) {
                            coords.push(c);
                        }
                    }
                    _ => {}
                }
            }
            GeoOrigin::bbox_centroid(coords).unwrap_or(GeoOrigin { lon: 0.0, lat: 0.0 })
        }
    };

    let mut graph = RoadGraph::new();
    let mut merger = VertexMerger::new();
    let mut lanes: Vec<Option<u8>> = Vec::new();
    let mut road_type: Vec<Option<RoadType>> = Vec::new();
    let mut skipped = 0usize;

    for (fi, f) in features.iter().enumerate() {
        let context = format!("feature {fi}");
        let props = f.get("properties").cloned().unwrap_or(Value::Null);
        let geom = f.get("geometry").unwrap_or(&Value::Null);
        let coords = geom.get("coordinates");
        match geom.get("type").and_then(Value::as_str) {
            Some("LineString") => {
                let cs = coords
                    .and_then(Value::as_array)
                    .ok_or_else(|| invalid(format!("{context}: LineString without coordinates")))?;
                let lane = lanes_property(&props, &context, &mut warnings);
                let ty = highway_property(&props, mapping);
                let mut prev: Option<usize> = None;
                for c in cs {
                    let (lon, lat) =
                        lon_lat(c).ok_or_else(|| invalid(format!("{context}: bad coordinate {c}")))?;
                    let (v, _) = merger.vertex_for(&mut graph, origin.project(lon, lat))?;
                    if v >= lanes.len() {
                        lanes.push(None);
                        road_type.push(None);
                    }
                    if lanes[v].is_none() {
                        lanes[v] = lane;
                    }
                    if road_type[v].is_none() {
                        road_type[v] = ty;
                    }
                    if let Some(p) = prev {
                        if p != v {
                            graph.add_edge(p, v, Some(fi as i64))?;
                        }
                    }
                    prev = Some(v);
                }
            }
            Some("Point") => {
                let (lon, lat) = coords
                    .and_then(lon_lat)
                    .ok_or_else(|| invalid(format!("{context}: Point without coordinates")))?;
                let (v, _) = merger.vertex_for(&mut graph, origin.project(lon, lat))?;
                if v >= lanes.len() {
                    lanes.push(None);
                    road_type.push(None);
                }
                if lanes[v].is_none() {
                    lanes[v] = lanes_property(&props, &context, &mut warnings);
                }
                if road_type[v].is_none() {
                    road_type[v] = highway_property(&props, mapping);
                }
            }
            other => {
                skipped += 1;
                let kind = other.unwrap_or("missing geometry");
                warnings.push(format!("{context}: skipped {kind}"));
            }
        }
    }
    if skipped > 0 {
        warnings.push(format!("{skipped} non-LineString feature(s) skipped"));
    }

    Ok(Parsed {
        network: LabeledNetwork {
            graph,
            lanes,
            road_type,
            origin: Some(origin),
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(features: &str) -> String {
        format!(r#"{{"type":"FeatureCollection","features":[{features}]}}"#)
    }

    #[test]
    fn single_linestring_labels_every_vertex() {
        let text = doc(
            r#"{"type":"Feature","properties":{"lanes":4,"highway":"primary"},
               "geometry":{"type":"LineString","coordinates":[[-71.0,42.0],[-71.001,42.0],[-71.002,42.0]]}}"#,
        );
        let parsed = parse_geojson_network(&text, &TagMapping::default()).unwrap();
        let net = parsed.network;
        assert_eq!(net.vertex_count(), 3);
        assert_eq!(net.graph.edge_count(), 2);
        assert!(net.lanes.iter().all(|l| *l == Some(4)));
        assert!(net.road_type.iter().all(|t| *t == Some(RoadType::Primary)));
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn shared_endpoint_is_merged() {
        let text = doc(
            r#"{"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0.0,0.0],[0.001,0.0]]}},
               {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0.001,0.0],[0.002,0.0]]}}"#,
        );
        let net = parse_geojson_network(&text, &TagMapping::default()).unwrap().network;
        assert_eq!(net.vertex_count(), 3);
        assert_eq!(net.graph.degree(1), 2);
        assert!(net.lanes.iter().all(Option::is_none));
    }

    #[test]
    fn lanes_clamped_with_warning() {
        let text = doc(
            r#"{"type":"Feature","properties":{"lanes":8},"geometry":{"type":"LineString","coordinates":[[0.0,0.0],[0.001,0.0]]}}"#,
        );
        let parsed = parse_geojson_network(&text, &TagMapping::default()).unwrap();
        assert_eq!(parsed.network.lanes, vec![Some(6), Some(6)]);
        assert!(parsed.warnings.iter().any(|w| w.contains("clamped to 6")));
    }

    #[test]
    fn non_linestring_skipped_with_warning() {
        let text = doc(
            r#"{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[]}},
               {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0.0,0.0],[0.001,0.0]]}}"#,
        );
        let parsed = parse_geojson_network(&text, &TagMapping::default()).unwrap();
        assert_eq!(parsed.network.vertex_count(), 2);
        assert!(parsed.warnings.iter().any(|w| w.contains("1 non-LineString")));
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\n  \"type\": \"FeatureCollection\",\n  \"features\": [ oops ]\n}";
        match parse_geojson_network(text, &TagMapping::default()) {
            Err(IngestError::Json { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected JSON error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_collection() {
        assert!(parse_geojson_network(r#"{"type":"Feature"}"#, &TagMapping::default()).is_err());
    }
}
