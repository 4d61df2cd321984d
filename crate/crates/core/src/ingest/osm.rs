use std::collections::HashMap;

use super::{parse_lanes_text, GeoOrigin, IngestError, LabeledNetwork, Parsed, RoadType, TagMapping};
use crate::road_graph::RoadGraph;

struct Way {
    id: i64,
    refs: Vec<i64>,
    lanes: Option<String>,
    highway: String,
}

fn attr<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Result<&'a str, IngestError> {
    node.attribute(name).ok_or_else(|| {
        let pos = node.document().text_pos_at(node.range().start);
        IngestError::Xml(format!(
            "<{}> at {}:{} is missing attribute {name}",
            node.tag_name().name(),
            pos.row,
            pos.col
        ))
    })
}

fn number<T: std::str::FromStr>(node: roxmltree::Node, name: &str) -> Result<T, IngestError> {
    let raw = attr(node, name)?;
    raw.parse()
        .map_err(|_| IngestError::Xml(format!("attribute {name}={raw:?} is not a number")))
}

/// Parses the `<node>` / `<way>` subset of OSM XML. Ways without a
/// `highway` tag are ignored; every referenced node becomes one vertex,
/// projected about the bounding-box centre of the referenced nodes.
pub fn parse_osm_xml(text: &str, mapping: &TagMapping) -> Result<Parsed, IngestError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| IngestError::Xml(e.to_string()))?;
    let mut nodes: HashMap<i64, (f64, f64)> = HashMap::new();
    let mut ways = Vec::new();

    for el in doc.root_element().children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let id: i64 = number(el, "id")?;
                let lat: f64 = number(el, "lat")?;
                let lon: f64 = number(el, "lon")?;
                nodes.insert(id, (lon, lat));
            }
            "way" => {
                let id: i64 = number(el, "id")?;
                let mut refs = Vec::new();
                let mut tags = HashMap::new();
                for child in el.children().filter(|n| n.is_element()) {
                    match child.tag_name().name() {
                        "nd" => refs.push(number(child, "ref")?),
                        "tag" => {
                            tags.insert(attr(child, "k")?.to_string(), attr(child, "v")?.to_string());
                        }
                        _ => {}
                    }
                }
                if let Some(highway) = tags.remove("highway") {
                    ways.push(Way {
                        id,
                        refs,
                        lanes: tags.remove("lanes"),
                        highway,
                    });
                }
            }
            _ => {}
        }
    }

    // Vertex order follows first reference across ways in document order.
    let mut vertex_of: HashMap<i64, usize> = HashMap::new();
    let mut order: Vec<i64> = Vec::new();
    for way in &ways {
        for &r in &way.refs {
            if !nodes.contains_key(&r) {
                return Err(IngestError::MissingNode { way: way.id, node: r });
            }
            vertex_of.entry(r).or_insert_with(|| {
                order.push(r);
                order.len() - 1
            });
        }
    }

    let origin = GeoOrigin::bbox_centroid(order.iter().map(|r| nodes[r]))
        .unwrap_or(GeoOrigin { lon: 0.0, lat: 0.0 });
    let mut graph = RoadGraph::new();
    for r in &order {
        let (lon, lat) = nodes[r];
        graph.add_vertex(origin.project(lon, lat))?;
    }

    let mut warnings = Vec::new();
    let mut lanes: Vec<Option<u8>> = vec![None; order.len()];
    let mut road_type: Vec<Option<RoadType>> = vec![None; order.len()];
    for way in &ways {
        let context = format!("way {}", way.id);
        let lane = way
            .lanes
            .as_deref()
            .and_then(|l| parse_lanes_text(l, &context, &mut warnings));
        let ty = mapping.classify(&way.highway);
        let mut prev: Option<usize> = None;
        for r in &way.refs {
            let v = vertex_of[r];
            if lanes[v].is_none() {
                lanes[v] = lane;
            }
            if road_type[v].is_none() {
                road_type[v] = ty;
            }
            if let Some(p) = prev {
                if p != v {
                    graph.add_edge(p, v, Some(way.id))?;
                }
            }
            prev = Some(v);
        }
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
