use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::features::{render_clean, render_occluder, Occluder, CH_LEFT, CH_MARKINGS, CH_RIGHT, FEATURE_DIM};
use super::{DisruptionKind, DisruptionSpec, ScenarioSpec, SynthError, Topology};
use crate::autodiff::Tensor;
use crate::ingest::{LabeledNetwork, RoadType, DEFAULT_ORIGIN, MAX_LANES, MIN_LANES};
use crate::road_graph::{densify, GeoPoint, RoadGraph};

/// A generated world: labeled network, rendered features, and bookkeeping
/// about which road each vertex belongs to and what disrupts it.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub spec: ScenarioSpec,
    pub network: LabeledNetwork,
    /// `V × 16` observation matrix.
    pub features: Tensor,
    /// Vertex ids along each topology road, in road order.
    pub roads: Vec<Vec<usize>>,
    pub disruption: Vec<Option<DisruptionKind>>,
    /// `(road, index along road)` of the road whose attributes label each
    /// vertex: the lowest-numbered road through it.
    owner: Vec<(usize, usize)>,
    noise: Tensor,
}

impl World {
    pub fn vertex_count(&self) -> usize {
        self.network.vertex_count()
    }

    /// Vertices whose road surface is hidden.
    pub fn occluded_mask(&self) -> Vec<bool> {
        self.disruption.iter().map(|d| d.is_some_and(DisruptionKind::occludes)).collect()
    }

    pub fn clean_mask(&self) -> Vec<bool> {
        self.disruption.iter().map(Option::is_none).collect()
    }

    /// Named subsets used in evaluation reports.
    pub fn subsets(&self) -> Vec<(String, Vec<bool>)> {
        vec![
            ("occluded".to_string(), self.occluded_mask()),
            ("clean".to_string(), self.clean_mask()),
        ]
    }

    fn render_vertex(&mut self, v: usize) {
        let (road, _) = self.owner[v];
        let profile = &self.spec.roads[road];
        let lanes = self.network.lanes[v].expect("synthetic vertices are labeled");
        let noise = self.noise.row(v).to_vec();
        render_clean(self.features.row_mut(v), lanes, profile.road_type, profile.shoulder, &noise);
    }
}

fn bad(msg: impl Into<String>) -> SynthError {
    SynthError::Spec(msg.into())
}

fn line(a: GeoPoint, b: GeoPoint, spacing: f64) -> Result<Vec<GeoPoint>, SynthError> {
    let len = a.distance(b);
    let steps = len / spacing;
    if (steps - steps.round()).abs() > 1e-6 || steps.round() < 1.0 {
        return Err(bad(format!("road length {len} m is not a positive multiple of spacing {spacing} m")));
    }
    let n = steps.round() as usize;
    Ok((0..=n).map(|i| a.lerp(b, i as f64 / n as f64)).collect())
}

fn road_polylines(t: &Topology, spacing: f64) -> Result<Vec<Vec<GeoPoint>>, SynthError> {
    let p = GeoPoint::new;
    let roads = match *t {
        Topology::StraightCorridor { length } => vec![line(p(0.0, 0.0), p(length, 0.0), spacing)?],
        Topology::PlusIntersection { arm } => vec![
            line(p(-arm, 0.0), p(arm, 0.0), spacing)?,
            line(p(0.0, -arm), p(0.0, arm), spacing)?,
        ],
        Topology::ParallelPair { length, separation } => {
            if separation <= 0.0 {
                return Err(bad("parallel separation must be positive"));
            }
            vec![
                line(p(0.0, 0.0), p(length, 0.0), spacing)?,
                line(p(0.0, separation), p(length, separation), spacing)?,
            ]
        }
        Topology::OverpassCrossing { arm } => {
            // Offset by half a spacing so no vertex of one road coincides
            // with a vertex of the other.
            let dx = spacing / 2.0;
            vec![
                line(p(-arm, 0.0), p(arm, 0.0), spacing)?,
                line(p(dx, -arm + dx), p(dx, arm + dx), spacing)?,
            ]
        }
        Topology::CityGrid { cols, rows, block } => {
            if cols == 0 || rows == 0 {
                return Err(bad("city grid needs at least one block"));
            }
            let (w, h) = (cols as f64 * block, rows as f64 * block);
            let mut out = Vec::new();
            for j in 0..=rows {
                let y = j as f64 * block;
                out.push(line(p(0.0, y), p(w, y), spacing)?);
            }
            for i in 0..=cols {
                let x = i as f64 * block;
                out.push(line(p(x, 0.0), p(x, h), spacing)?);
            }
            out
        }
    };
    Ok(roads)
}

fn validate(spec: &ScenarioSpec) -> Result<(), SynthError> {
    if !(spec.spacing > 0.0 && spec.spacing.is_finite()) {
        return Err(bad("spacing must be positive"));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(bad("noise sigma must be non-negative"));
    }
    if spec.roads.len() != spec.topology.road_count() {
        return Err(bad(format!(
            "{} has {} roads but {} profiles were given",
            spec.topology.name(),
            spec.topology.road_count(),
            spec.roads.len()
        )));
    }
    for (r, profile) in spec.roads.iter().enumerate() {
        if profile.lanes.first().map(|s| s.start) != Some(0) {
            return Err(bad(format!("road {r}: lane profile must start at vertex 0")));
        }
        if profile.lanes.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(bad(format!("road {r}: lane segments must be strictly increasing")));
        }
        if profile.lanes.iter().any(|s| !(MIN_LANES..=MAX_LANES).contains(&s.lanes)) {
            return Err(bad(format!("road {r}: lane counts must lie in 1..=6")));
        }
    }
    Ok(())
}

/// Builds the graph, labels, and features for `spec`, then applies its
/// disruptions (lane changes first, then the rest in listed order).
pub fn generate_world(spec: &ScenarioSpec) -> Result<World, SynthError> {
    validate(spec)?;
    let polylines = road_polylines(&spec.topology, spec.spacing)?;

    let mut graph = RoadGraph::new();
    let mut by_coord: HashMap<(i64, i64), usize> = HashMap::new();
    let mut roads = Vec::with_capacity(polylines.len());
    let mut owner: Vec<(usize, usize)> = Vec::new();
    for (r, pts) in polylines.iter().enumerate() {
        let mut ids = Vec::with_capacity(pts.len());
        for (i, &pt) in pts.iter().enumerate() {
            let key = ((pt.x * 100.0).round() as i64, (pt.y * 100.0).round() as i64);
            let v = match by_coord.get(&key) {
                Some(&v) => v,
                None => {
                    let v = graph.add_vertex(pt)?;
                    by_coord.insert(key, v);
                    owner.push((r, i));
                    v
                }
            };
            if let Some(&prev) = ids.last() {
                graph.add_edge(prev, v, Some(r as i64))?;
            }
            ids.push(v);
        }
        roads.push(ids);
    }
    let graph = densify(&graph, spec.spacing)?;
    debug_assert_eq!(graph.vertex_count(), owner.len());

    let n = graph.vertex_count();
    let lanes: Vec<Option<u8>> = owner.iter().map(|&(r, i)| Some(spec.roads[r].lanes_at(i))).collect();
    let road_type: Vec<Option<RoadType>> = owner.iter().map(|&(r, _)| Some(spec.roads[r].road_type)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| bad(e.to_string()))?;
    let noise_data: Vec<f64> = (0..n * FEATURE_DIM).map(|_| normal.sample(&mut rng)).collect();
    let noise = Tensor::matrix(n, FEATURE_DIM, noise_data).expect("sized");

    let mut world = World {
        spec: spec.clone(),
        network: LabeledNetwork {
            graph,
            lanes,
            road_type,
            origin: Some(DEFAULT_ORIGIN),
        },
        features: Tensor::zeros(&[n, FEATURE_DIM]),
        roads,
        disruption: vec![None; n],
        owner,
        noise,
    };
    for v in 0..n {
        world.render_vertex(v);
    }
    let (changes, others): (Vec<_>, Vec<_>) = spec
        .disruptions
        .iter()
        .partition(|d| d.kind == DisruptionKind::LaneChangeUnderOcclusion);
    for d in changes.into_iter().chain(others) {
        inject_disruption(&mut world, d)?;
    }
    Ok(world)
}

/// Overwrites the observations inside one span of one road. A lane change
/// also relabels the road from the middle of the span up to its next
/// profile boundary. Any overlap with an earlier disruption is an error.
pub fn inject_disruption(world: &mut World, d: &DisruptionSpec) -> Result<(), SynthError> {
    let road = world
        .roads
        .get(d.road)
        .ok_or_else(|| bad(format!("disruption references road {} of {}", d.road, world.roads.len())))?
        .clone();
    let end = d.start + d.len;
    if d.len == 0 || end > road.len() {
        return Err(bad(format!(
            "span {}..{end} is outside road {} ({} vertices)",
            d.start,
            d.road,
            road.len()
        )));
    }
    if let Some(&v) = road[d.start..end].iter().find(|&&v| world.disruption[v].is_some()) {
        return Err(SynthError::Overlap {
            road: d.road,
            start: d.start,
            end,
            vertex: v,
        });
    }

    let occluder = match d.kind {
        DisruptionKind::TreeOcclusion => Some(Occluder::Tree),
        DisruptionKind::BuildingOcclusion => Some(Occluder::Building),
        DisruptionKind::OverpassOcclusion => Some(Occluder::Overpass(
            d.upper.ok_or_else(|| bad("overpass disruption needs the upper road's attributes"))?,
        )),
        DisruptionKind::LaneChangeUnderOcclusion => {
            let new = d.new_lanes.ok_or_else(|| bad("lane change needs new_lanes"))?;
            if d.len < 2 || !(MIN_LANES..=MAX_LANES).contains(&new) {
                return Err(bad("lane change needs a span of at least 2 and new_lanes in 1..=6"));
            }
            relabel_from(world, d.road, d.start + d.len / 2, new, d.start..end)?;
            Some(Occluder::Tree)
        }
        DisruptionKind::RemoveMarkings | DisruptionKind::AlternateSideOcclusion => None,
    };

    for (offset, &v) in road[d.start..end].iter().enumerate() {
        let noise = world.noise.row(v).to_vec();
        let row = world.features.row_mut(v);
        match (d.kind, occluder) {
            (_, Some(occ)) => render_occluder(row, occ, &noise),
            (DisruptionKind::RemoveMarkings, _) => {
                row[CH_MARKINGS] = 0.0;
                row[CH_LEFT] = 0.0;
                row[CH_RIGHT] = 0.0;
            }
            _ => {
                let side = if offset % 2 == 0 { CH_LEFT } else { CH_RIGHT };
                row[side] = 0.0;
            }
        }
        world.disruption[v] = Some(d.kind);
    }
    Ok(())
}

/// Sets the lane label of `road` vertices from index `from` up to the next
/// profile boundary, re-rendering the visible ones.
fn relabel_from(
    world: &mut World,
    road: usize,
    from: usize,
    lanes: u8,
    span: std::ops::Range<usize>,
) -> Result<(), SynthError> {
    let stop = world.spec.roads[road]
        .lanes
        .iter()
        .map(|s| s.start)
        .find(|&s| s > from)
        .unwrap_or(usize::MAX)
        .min(world.roads[road].len());
    for i in from..stop {
        let v = world.roads[road][i];
        if world.owner[v].0 != road {
            continue;
        }
        world.network.lanes[v] = Some(lanes);
        if span.contains(&i) {
            continue;
        }
        if world.disruption[v].is_some() {
            return Err(bad(format!(
                "lane change on road {road} would relabel vertex {v}, which is already disrupted"
            )));
        }
        world.render_vertex(v);
    }
    Ok(())
}
