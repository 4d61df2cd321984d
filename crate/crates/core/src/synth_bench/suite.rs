use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::NOISE_SIGMA;
use super::world::generate_world;
use super::{
    DisruptionKind, DisruptionSpec, LaneSegment, RoadProfile, ScenarioSpec, SynthError, Topology, UpperRoad,
};
use crate::ingest::RoadType;
use crate::road_graph::DEFAULT_SPACING;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Basic,
    OcclusionSweep,
    Overpass,
    LongDisruption,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Basic, Preset::OcclusionSweep, Preset::Overpass, Preset::LongDisruption];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Basic => "basic",
            Preset::OcclusionSweep => "occlusion_sweep",
            Preset::Overpass => "overpass",
            Preset::LongDisruption => "long_disruption",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

/// Knobs shared by every preset. World counts default per preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteOptions {
    /// Propagation steps the suite is built around (span lengths scale with it).
    pub steps: usize,
    pub spacing: f64,
    pub noise_sigma: f64,
    pub train_worlds: Option<usize>,
    pub validation_worlds: Option<usize>,
    pub test_worlds: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            steps: 8,
            spacing: DEFAULT_SPACING,
            noise_sigma: NOISE_SIGMA,
            train_worlds: None,
            validation_worlds: None,
            test_worlds: None,
        }
    }
}

/// One train/validation/test grouping. Validation worlds are carved from
/// the train pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub name: String,
    pub train: Vec<ScenarioSpec>,
    pub validation: Vec<ScenarioSpec>,
    pub test: Vec<ScenarioSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub preset: Preset,
    pub seed: u64,
    pub splits: Vec<Split>,
}

/// How disruptions are scattered along roads.
#[derive(Clone, Debug)]
enum Scatter {
    /// Mixed short disruptions of every kind.
    Mixed,
    /// Tree/building spans of `min..=max` vertices covering about
    /// `fraction` of each road.
    Occlusion { fraction: f64, min: usize, max: usize },
    /// Tree/building spans of exactly `len`, separated by visible gaps.
    Fixed { len: usize },
}

struct Recipe<'a> {
    topologies: &'a [TopologyKind],
    piecewise_lanes: bool,
    scatter: Scatter,
}

#[derive(Clone, Copy, Debug)]
enum TopologyKind {
    Corridor,
    Plus,
    Parallel,
    Overpass,
    Grid,
}

fn topology_of(kind: TopologyKind) -> Topology {
    match kind {
        TopologyKind::Corridor => Topology::StraightCorridor { length: 1200.0 },
        TopologyKind::Plus => Topology::PlusIntersection { arm: 600.0 },
        TopologyKind::Parallel => Topology::ParallelPair {
            length: 1200.0,
            separation: 15.0,
        },
        TopologyKind::Overpass => Topology::OverpassCrossing { arm: 600.0 },
        TopologyKind::Grid => Topology::CityGrid {
            cols: 2,
            rows: 2,
            block: 300.0,
        },
    }
}

fn random_lanes(rng: &mut impl Rng) -> u8 {
    rng.random_range(1..=6)
}

fn random_type(rng: &mut impl Rng) -> RoadType {
    if rng.random_bool(0.5) {
        RoadType::Primary
    } else {
        RoadType::Residential
    }
}

fn nudge_lanes(lanes: u8, rng: &mut impl Rng) -> u8 {
    match lanes {
        1 => 2,
        6 => 5,
        l if rng.random_bool(0.5) => l + 1,
        l => l - 1,
    }
}

/// Tracks which vertices already carry a disruption. Junction vertices are
/// never disrupted so that spans stay on a single road.
struct Placer {
    used: Vec<bool>,
}

impl Placer {
    fn free(&self, ids: &[usize]) -> bool {
        ids.iter().all(|&v| !self.used[v])
    }

    fn take(&mut self, ids: &[usize]) {
        ids.iter().for_each(|&v| self.used[v] = true);
    }
}

fn scatter_spans(
    scatter: &Scatter,
    roads: &[Vec<usize>],
    placer: &mut Placer,
    rng: &mut impl Rng,
    out: &mut Vec<DisruptionSpec>,
) {
    for (r, ids) in roads.iter().enumerate() {
        let mut i = match scatter {
            Scatter::Mixed => rng.random_range(2..12),
            Scatter::Occlusion { .. } => rng.random_range(1..6),
            Scatter::Fixed { .. } => rng.random_range(3..8),
        };
        while i < ids.len() {
            let (kind, len, gap) = match *scatter {
                Scatter::Mixed => {
                    let kind = *DisruptionKind::ALL.choose(rng).expect("non-empty");
                    let len = match kind {
                        DisruptionKind::RemoveMarkings => rng.random_range(2..=6),
                        DisruptionKind::AlternateSideOcclusion => rng.random_range(3..=8),
                        DisruptionKind::TreeOcclusion => rng.random_range(2..=6),
                        DisruptionKind::BuildingOcclusion => rng.random_range(2..=5),
                        DisruptionKind::OverpassOcclusion => rng.random_range(2..=4),
                        DisruptionKind::LaneChangeUnderOcclusion => rng.random_range(4..=7),
                    };
                    (kind, len, rng.random_range(4..=16))
                }
                Scatter::Occlusion { fraction, min, max } => {
                    let len = rng.random_range(min..=max);
                    let mean_gap = (min + max) as f64 / 2.0 * (1.0 - fraction) / fraction;
                    let lo = (0.5 * mean_gap).round().max(1.0) as usize;
                    let hi = (1.5 * mean_gap).round().max(lo as f64) as usize;
                    (occlusion_kind(rng), len, rng.random_range(lo..=hi))
                }
                Scatter::Fixed { len } => (occlusion_kind(rng), len, rng.random_range(4..=10)),
            };
            // Keep one free vertex on each side so every span is bracketed by
            // visible evidence from its own road.
            if i == 0 || i + len >= ids.len() {
                break;
            }
            let span = &ids[i..i + len];
            if !placer.free(&ids[i - 1..i + len + 1]) {
                i += 1;
                continue;
            }
            placer.take(span);
            let mut d = DisruptionSpec::new(kind, r, i, len);
            match kind {
                DisruptionKind::OverpassOcclusion => {
                    d.upper = Some(UpperRoad {
                        lanes: random_lanes(rng),
                        road_type: random_type(rng),
                        shoulder: rng.random_range(0.0..3.0),
                    });
                }
                DisruptionKind::LaneChangeUnderOcclusion => {
                    // Filled in once the labels at the change point are known.
                    d.new_lanes = Some(0);
                }
                _ => {}
            }
            out.push(d);
            i += len + gap;
        }
    }
}

fn occlusion_kind(rng: &mut impl Rng) -> DisruptionKind {
    if rng.random_bool(0.5) {
        DisruptionKind::TreeOcclusion
    } else {
        DisruptionKind::BuildingOcclusion
    }
}

/// Draws one scenario of the given topology: random lane/type profiles and
/// disruptions scattered per `recipe`.
fn draw_spec(
    topology: Topology,
    recipe: &Recipe,
    opts: &SuiteOptions,
    rng: &mut ChaCha8Rng,
    world_seed: u64,
) -> Result<ScenarioSpec, SynthError> {
    let mut spec = ScenarioSpec {
        roads: Vec::new(),
        topology,
        spacing: opts.spacing,
        disruptions: Vec::new(),
        noise_sigma: opts.noise_sigma,
        rng_seed: world_seed,
    };
    // A throwaway profile gives road lengths and junctions.
    spec.roads = vec![RoadProfile::constant(1, RoadType::Residential, 0.0); spec.topology.road_count()];
    let skeleton = generate_world(&spec)?;
    spec.roads = skeleton
        .roads
        .iter()
        .map(|ids| {
            let first = random_lanes(rng);
            let mut lanes = vec![LaneSegment { start: 0, lanes: first }];
            if recipe.piecewise_lanes && rng.random_bool(0.5) && ids.len() >= 8 {
                let start = rng.random_range(ids.len() / 4..3 * ids.len() / 4);
                let mut second = random_lanes(rng);
                while second == first {
                    second = random_lanes(rng);
                }
                lanes.push(LaneSegment { start, lanes: second });
            }
            RoadProfile {
                lanes,
                road_type: random_type(rng),
                shoulder: rng.random_range(0.0..3.0),
            }
        })
        .collect();
    if let Topology::ParallelPair { .. } = spec.topology {
        // The two carriageways of a divided road: same lanes and type, own shoulder.
        spec.roads[1].lanes = spec.roads[0].lanes.clone();
        spec.roads[1].road_type = spec.roads[0].road_type;
    }

    let graph = &skeleton.network.graph;
    let mut placer = Placer {
        used: (0..graph.vertex_count()).map(|v| graph.degree(v) > 2).collect(),
    };
    let mut disruptions = Vec::new();
    if let Topology::OverpassCrossing { .. } = spec.topology {
        // Lower-road vertices within 35 m of the upper road's line.
        let ux = graph.position(skeleton.roads[1][0]).x;
        let under: Vec<usize> = (0..skeleton.roads[0].len())
            .filter(|&i| (graph.position(skeleton.roads[0][i]).x - ux).abs() <= 35.0)
            .collect();
        let cross = (0..skeleton.roads[1].len())
            .min_by(|&a, &b| {
                let ya = graph.position(skeleton.roads[1][a]).y.abs();
                let yb = graph.position(skeleton.roads[1][b]).y.abs();
                ya.total_cmp(&yb)
            })
            .expect("upper road has vertices");
        let upper = &spec.roads[1];
        let mut d = DisruptionSpec::new(DisruptionKind::OverpassOcclusion, 0, under[0], under.len());
        d.upper = Some(UpperRoad {
            lanes: upper.lanes_at(cross),
            road_type: upper.road_type,
            shoulder: upper.shoulder,
        });
        placer.take(&skeleton.roads[0][d.start..d.start + d.len]);
        disruptions.push(d);
    }
    scatter_spans(&recipe.scatter, &skeleton.roads, &mut placer, rng, &mut disruptions);

    // Lane changes move to a neighboring count of whatever the road has at
    // the change point, taking earlier changes on the same road into account.
    let mut current: Vec<Vec<u8>> = skeleton
        .roads
        .iter()
        .enumerate()
        .map(|(r, ids)| (0..ids.len()).map(|i| spec.roads[r].lanes_at(i)).collect())
        .collect();
    disruptions.sort_by_key(|d| (d.road, d.start));
    for d in disruptions.iter_mut().filter(|d| d.kind == DisruptionKind::LaneChangeUnderOcclusion) {
        let c = d.start + d.len / 2;
        let new = nudge_lanes(current[d.road][c], rng);
        let stop = spec.roads[d.road]
            .lanes
            .iter()
            .map(|s| s.start)
            .find(|&s| s > c)
            .unwrap_or(usize::MAX)
            .min(current[d.road].len());
        current[d.road][c..stop].iter_mut().for_each(|l| *l = new);
        d.new_lanes = Some(new);
    }
    spec.disruptions = disruptions;
    Ok(spec)
}

/// Draws a scenario for `topology` with piecewise lanes and mixed
/// scattered disruptions (the `basic` recipe).
pub fn random_spec(topology: Topology, opts: &SuiteOptions, seed: u64) -> Result<ScenarioSpec, SynthError> {
    let recipe = Recipe {
        topologies: &[],
        piecewise_lanes: true,
        scatter: Scatter::Mixed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_spec(topology, &recipe, opts, &mut rng, seed)
}

struct SeedStream {
    base: u64,
    next: u64,
}

impl SeedStream {
    fn take(&mut self) -> u64 {
        self.next += 1;
        self.base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(self.next)
    }
}

fn draw_many(
    recipe: &Recipe,
    count: usize,
    opts: &SuiteOptions,
    rng: &mut ChaCha8Rng,
    seeds: &mut SeedStream,
) -> Result<Vec<ScenarioSpec>, SynthError> {
    (0..count)
        .map(|i| {
            let kind = recipe.topologies[i % recipe.topologies.len()];
            draw_spec(topology_of(kind), recipe, opts, rng, seeds.take())
        })
        .collect()
}

/// Deterministic benchmark suite for `preset`.
pub fn scenario_suite(preset: Preset, seed: u64, opts: &SuiteOptions) -> Result<Suite, SynthError> {
    use TopologyKind::*;
    let t = opts.steps.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0000 ^ preset as u64);
    let mut seeds = SeedStream { base: seed, next: 0 };
    let counts = |train: usize, val: usize, test: usize| {
        (
            opts.train_worlds.unwrap_or(train),
            opts.validation_worlds.unwrap_or(val),
            opts.test_worlds.unwrap_or(test),
        )
    };
    let pool = |recipe: &Recipe, train: usize, val: usize, rng: &mut ChaCha8Rng, seeds: &mut SeedStream| {
        let mut all = draw_many(recipe, train + val, opts, rng, seeds)?;
        let validation = all.split_off(train);
        Ok::<_, SynthError>((all, validation))
    };

    let splits = match preset {
        Preset::Basic | Preset::Overpass => {
            let recipe = Recipe {
                topologies: if preset == Preset::Basic {
                    &[Corridor, Plus, Parallel, Overpass, Grid]
                } else {
                    &[Overpass]
                },
                piecewise_lanes: true,
                scatter: Scatter::Mixed,
            };
            let (nt, nv, ns) = if preset == Preset::Basic {
                counts(48, 6, 8)
            } else {
                counts(20, 5, 8)
            };
            let (train, validation) = pool(&recipe, nt, nv, &mut rng, &mut seeds)?;
            let test = draw_many(&recipe, ns, opts, &mut rng, &mut seeds)?;
            vec![Split {
                name: preset.as_str().to_string(),
                train,
                validation,
                test,
            }]
        }
        Preset::OcclusionSweep => {
            let (nt, nv, ns) = counts(6, 2, 4);
            (1..=6)
                .map(|tenth| {
                    let recipe = Recipe {
                        topologies: &[Corridor, Plus, Grid],
                        piecewise_lanes: false,
                        scatter: Scatter::Occlusion {
                            fraction: tenth as f64 / 10.0,
                            min: 2,
                            max: t,
                        },
                    };
                    let (train, validation) = pool(&recipe, nt, nv, &mut rng, &mut seeds)?;
                    let test = draw_many(&recipe, ns, opts, &mut rng, &mut seeds)?;
                    Ok(Split {
                        name: format!("fraction_{:02}", tenth * 10),
                        train,
                        validation,
                        test,
                    })
                })
                .collect::<Result<_, SynthError>>()?
        }
        Preset::LongDisruption => {
            let (nt, nv, ns) = counts(24, 6, 4);
            let train_recipe = Recipe {
                topologies: &[Corridor, Plus],
                piecewise_lanes: false,
                scatter: Scatter::Occlusion {
                    fraction: 0.3,
                    min: 2,
                    max: t,
                },
            };
            let (train, validation) = pool(&train_recipe, nt, nv, &mut rng, &mut seeds)?;
            (2..=2 * t)
                .map(|len| {
                    let recipe = Recipe {
                        topologies: &[Corridor, Plus],
                        piecewise_lanes: false,
                        scatter: Scatter::Fixed { len },
                    };
                    Ok(Split {
                        name: format!("span_{len:02}"),
                        train: train.clone(),
                        validation: validation.clone(),
                        test: draw_many(&recipe, ns, opts, &mut rng, &mut seeds)?,
                    })
                })
                .collect::<Result<_, SynthError>>()?
        }
    };
    Ok(Suite { preset, seed, splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn basic_counts_and_disjoint_seeds() {
        let s = scenario_suite(Preset::Basic, 7, &SuiteOptions::default()).unwrap();
        let split = &s.splits[0];
        assert!(split.train.len() + split.validation.len() >= 20 && split.test.len() >= 5);
        let mut seen = HashSet::new();
        for spec in split.train.iter().chain(&split.validation).chain(&split.test) {
            assert!(seen.insert(spec.rng_seed));
        }
    }

    #[test]
    fn same_seed_same_suite() {
        let opts = SuiteOptions::default();
        assert_eq!(
            scenario_suite(Preset::OcclusionSweep, 3, &opts).unwrap(),
            scenario_suite(Preset::OcclusionSweep, 3, &opts).unwrap()
        );
    }

    #[test]
    fn long_disruption_covers_short_and_long_spans() {
        let s = scenario_suite(Preset::LongDisruption, 1, &SuiteOptions::default()).unwrap();
        let lens: Vec<usize> = s
            .splits
            .iter()
            .map(|sp| sp.test[0].disruptions[0].len)
            .collect();
        assert_eq!(lens.first(), Some(&2));
        assert_eq!(lens.last(), Some(&16));
        for sp in &s.splits {
            let want: usize = sp.name[5..].parse().unwrap();
            for spec in &sp.test {
                assert!(spec.disruptions.iter().all(|d| d.len == want && d.kind.occludes()));
            }
        }
        let train_max = s.splits[0]
            .train
            .iter()
            .flat_map(|spec| spec.disruptions.iter().map(|d| d.len))
            .max();
        assert_eq!(train_max, Some(8));
    }

    #[test]
    fn sweep_fraction_grows() {
        let s = scenario_suite(Preset::OcclusionSweep, 2, &SuiteOptions::default()).unwrap();
        let frac = |sp: &Split| {
            let (mut occ, mut total) = (0usize, 0usize);
            for spec in &sp.test {
                let w = generate_world(spec).unwrap();
                occ += w.occluded_mask().iter().filter(|&&m| m).count();
                total += w.vertex_count();
            }
            occ as f64 / total as f64
        };
        let lo = frac(&s.splits[0]);
        let hi = frac(&s.splits[5]);
        assert!(lo < 0.2 && hi > 0.4, "{lo} {hi}");
    }

    #[test]
    fn every_preset_generates() {
        let opts = SuiteOptions {
            train_worlds: Some(2),
            validation_worlds: Some(1),
            test_worlds: Some(2),
            ..SuiteOptions::default()
        };
        for p in Preset::ALL {
            let s = scenario_suite(p, 11, &opts).unwrap();
            for sp in &s.splits {
                for spec in sp.train.iter().chain(&sp.validation).chain(&sp.test) {
                    generate_world(spec).unwrap();
                }
            }
        }
    }

    #[test]
    fn overpass_worlds_hide_the_lower_road() {
        let opts = SuiteOptions {
            train_worlds: Some(1),
            validation_worlds: Some(0),
            test_worlds: Some(0),
            ..SuiteOptions::default()
        };
        let s = scenario_suite(Preset::Overpass, 5, &opts).unwrap();
        let w = generate_world(&s.splits[0].train[0]).unwrap();
        let under: Vec<usize> = w.roads[0]
            .iter()
            .copied()
            .filter(|&v| w.disruption[v] == Some(DisruptionKind::OverpassOcclusion))
            .collect();
        assert!(under.len() >= 4);
    }

    fn any_topology() -> impl Strategy<Value = Topology> {
        // Road lengths are whole multiples of the 20 m spacing.
        let m = |k: usize| k as f64 * DEFAULT_SPACING;
        prop_oneof![
            (10usize..30).prop_map(move |k| Topology::StraightCorridor { length: m(k) }),
            (5usize..15).prop_map(move |k| Topology::PlusIntersection { arm: m(k) }),
            (10usize..25, 12.0f64..25.0)
                .prop_map(move |(k, separation)| Topology::ParallelPair { length: m(k), separation }),
            (5usize..15).prop_map(move |k| Topology::OverpassCrossing { arm: m(k) }),
            (1usize..3, 1usize..3).prop_map(move |(cols, rows)| Topology::CityGrid { cols, rows, block: m(6) }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_worlds_are_labeled_and_serializable(topology in any_topology(), seed in any::<u64>()) {
            let spec = random_spec(topology, &SuiteOptions::default(), seed).unwrap();
            let w = generate_world(&spec).unwrap();
            let n = w.vertex_count();
            prop_assert_eq!(w.features.rows(), n);
            prop_assert!(w.network.lanes.iter().all(|l| l.is_some_and(|l| (1..=6).contains(&l))));
            prop_assert!(w.network.road_type.iter().all(Option::is_some));
            for d in &spec.disruptions {
                prop_assert!(d.len <= SuiteOptions::default().steps);
            }
            let text = crate::ingest::network_document(&w.network);
            let back = crate::ingest::parse_geojson_network(&text, &crate::ingest::TagMapping::default())
                .unwrap()
                .network;
            prop_assert_eq!(back.graph.adjacency(), w.network.graph.adjacency());
            prop_assert_eq!(&back.lanes, &w.network.lanes);
            prop_assert_eq!(&back.road_type, &w.network.road_type);
        }
    }
}
