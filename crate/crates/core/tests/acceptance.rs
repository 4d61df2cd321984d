//! Acceptance suite. Each test prints one `PASS`/`FAIL` line straight to
//! stderr (bypassing the harness capture) and then asserts the same outcome.
//! Tolerances and training schedules are pinned here; the heavy criteria
//! run one at a time behind a shared lock so their timings stay honest.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roadtagger::autodiff::{check_op, GradCheckOptions, Tape, Tensor, OP_NAMES};
use roadtagger::baselines::{
    chain_min_energy, mrf_grid_search, mrf_predictions, smooth_predictions, train_classifier, LabelDistance,
    MrfGrid, MrfParams, MrfSettings, SearchInput,
};
use roadtagger::cli::ClassifierRun;
use roadtagger::ingest::{
    network_document, parse_geojson_network, parse_osm_xml, IngestError, LabeledNetwork, RoadType, TagMapping,
};
use roadtagger::metrics_eval::{accuracy, compare_reports, reduction_percent, Confusion, EvalReport};
use roadtagger::model::{Ctx, ModelConfig, RoadTagger, DEFAULT_FEATURE_DIM};
use roadtagger::predictions::PredictionSet;
use roadtagger::road_graph::{
    build_structures, extract_road_chains, GeoPoint, GraphStructure, RoadGraph, StructureKind, DEFAULT_CHAIN_ANGLE,
    DEFAULT_SPACING,
};
use roadtagger::synth_bench::{generate_world, scenario_suite, Preset, ScenarioSpec, SuiteOptions, WorldData};
use roadtagger::training::{
    model_check_options, model_gradient_check, predict_all, score_predictions, train, PreparedNetwork, TrainConfig,
};

// Pinned thresholds.
const GRAD_TOLERANCE: f64 = 1e-5;
const GRAD_INSTANCES: usize = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const MRF_INSTANCES: usize = 200;
const MRF_ENERGY_TOL: f64 = 1e-9;
const MRF_BUDGET: Duration = Duration::from_secs(30);
const LOCALITY_GRAPHS: usize = 20;
const LOCALITY_STEPS: usize = 3;
const OCCLUDED_TAGGER_MIN: f64 = 0.95;
const OCCLUDED_CLASSIFIER_MAX: f64 = 1.0 / 6.0 + 0.15;
const TRAIN_BUDGET: Duration = Duration::from_secs(600);
const ORDER_MARGIN: f64 = 0.02;
const LONG_SPAN_DROP: f64 = 0.20;
const ABLATION_DROP: f64 = 0.01;
const ABLATION_SEEDS_NEEDED: usize = 2;

// Pinned schedules. Hidden chunk 16 with a 1e-3 step size is the desk-scale
// setting these thresholds were validated with.
const STEPS: usize = 8;
const HIDDEN_CHUNK: usize = 16;
const SWEEP_ITERATIONS: usize = 5000;
const BASIC_ITERATIONS: usize = 6000;
const LONG_ITERATIONS: usize = 5000;
const SEEDS: [u64; 3] = [1, 2, 3];

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance {id:02} {name}: {verdict} | {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn tagger_config(seed: u64, iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        learning_rate: 1e-3,
        decay_interval: iterations / 2 + 1,
        validation_interval: 250,
        seed,
        model: ModelConfig {
            hidden_chunk: HIDDEN_CHUNK,
            steps: STEPS,
            ..ModelConfig::default()
        },
        ..TrainConfig::desk()
    }
}

fn prepare(specs: &[ScenarioSpec], kinds: &[StructureKind], tag: &str) -> Vec<PreparedNetwork> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let world = generate_world(s).unwrap();
            PreparedNetwork::from_world(&WorldData::from_world(&format!("{tag}{i}"), &world), kinds).unwrap()
        })
        .collect()
}

fn subset<'a>(net: &'a PreparedNetwork, name: &str) -> &'a [bool] {
    &net.subsets.iter().find(|(n, _)| n == name).expect("subset present").1
}

/// Lane accuracy over the vertices of one named subset, pooled across networks.
fn subset_lane_accuracy(nets: &[PreparedNetwork], preds: &[PredictionSet], name: &str) -> (f64, usize) {
    let (mut p, mut y) = (Vec::new(), Vec::new());
    for (n, pr) in nets.iter().zip(preds) {
        let arg = pr.lanes.argmax();
        for (v, &inside) in subset(n, name).iter().enumerate() {
            if inside {
                p.push(arg[v]);
                y.push(n.lane_labels[v]);
            }
        }
    }
    (accuracy(&p, &y).unwrap_or(f64::NAN), y.len())
}

fn fit_mrf(classifier_preds: &[PredictionSet], validation: &[PreparedNetwork]) -> MrfSettings {
    let grid = MrfGrid::default();
    let lanes: Vec<SearchInput> = validation
        .iter()
        .zip(classifier_preds)
        .map(|(n, p)| SearchInput { probs: &p.lanes, labels: &n.lane_labels, chains: &n.chains })
        .collect();
    let types: Vec<SearchInput> = validation
        .iter()
        .zip(classifier_preds)
        .map(|(n, p)| SearchInput { probs: &p.road_type, labels: &n.type_labels, chains: &n.chains })
        .collect();
    MrfSettings {
        lanes: mrf_grid_search(&lanes, &grid, LabelDistance::Absolute).unwrap().0,
        road_type: mrf_grid_search(&types, &grid, LabelDistance::Indicator).unwrap().0,
    }
}

// ---------------------------------------------------------------------------
// 1. Gradients

#[test]
fn c01_gradient_correctness() {
    let _g = serial();
    let start = Instant::now();
    let opts = GradCheckOptions { tolerance: GRAD_TOLERANCE, ..GradCheckOptions::default() };
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, op) in OP_NAMES.iter().enumerate() {
        for r in check_op(op, GRAD_INSTANCES, 100 + i as u64, &opts).unwrap() {
            worst = worst.max(r.max_rel_error());
            checked += 1;
            if !r.passed() {
                failures.push(r.label.clone());
            }
        }
    }
    let mut model_worst: f64 = 0.0;
    for seed in 0..GRAD_INSTANCES as u64 {
        let opts = GradCheckOptions { tolerance: GRAD_TOLERANCE, ..model_check_options(seed) };
        let r = model_gradient_check(seed, &opts).unwrap();
        model_worst = model_worst.max(r.max_rel_error());
        if !r.passed() {
            failures.push(r.label.clone());
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < GRAD_BUDGET;
    let detail = format!(
        "{} ops x {GRAD_INSTANCES} ({checked} checks) worst {worst:.1e}; model T={STEPS} x {GRAD_INSTANCES} worst {model_worst:.1e}; \
         {} failures; {:.1} s of {} s",
        OP_NAMES.len(),
        failures.len(),
        elapsed.as_secs_f64(),
        GRAD_BUDGET.as_secs()
    );
    report(1, "gradient correctness", pass, &detail);
    assert!(pass, "{detail}: {failures:?}");
}

// ---------------------------------------------------------------------------
// 2. Exact chain inference

fn oracle_energy(unary: &[Vec<f64>], labels: &[usize], closed: bool, params: MrfParams, dist: LabelDistance) -> f64 {
    let pair = |a: usize, b: usize| {
        let d = match dist {
            LabelDistance::Absolute => a.abs_diff(b) as f64,
            LabelDistance::Indicator => f64::from(u8::from(a != b)),
        };
        params.lambda * d.powi(params.exponent as i32)
    };
    let mut e: f64 = labels.iter().zip(unary).map(|(&l, u)| u[l]).sum();
    for w in labels.windows(2) {
        e += pair(w[0], w[1]);
    }
    if closed && labels.len() > 2 {
        e += pair(labels[labels.len() - 1], labels[0]);
    }
    e
}

fn brute_force_minimum(unary: &[Vec<f64>], closed: bool, params: MrfParams, dist: LabelDistance) -> f64 {
    let (n, k) = (unary.len(), unary[0].len());
    let mut labels = vec![0; n];
    let mut best = f64::INFINITY;
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        best = best.min(oracle_energy(unary, &labels, closed, params, dist));
    }
    best
}

#[test]
fn c02_mrf_exactness() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut closed_count = 0;
    for _ in 0..MRF_INSTANCES {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(2..=4);
        let closed = n >= 3 && rng.random_bool(0.3);
        closed_count += usize::from(closed);
        let params = MrfParams::new(rng.random_range(0.0..3.0), rng.random_range(1..=2)).unwrap();
        let dist = if rng.random_bool(0.5) { LabelDistance::Absolute } else { LabelDistance::Indicator };
        let unary: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(0.0..4.0)).collect()).collect();
        let labels = chain_min_energy(&unary, closed, params, dist);
        assert_eq!(labels.len(), n);
        let got = oracle_energy(&unary, &labels, closed, params, dist);
        worst = worst.max((got - brute_force_minimum(&unary, closed, params, dist)).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= MRF_ENERGY_TOL && elapsed < MRF_BUDGET;
    let detail = format!(
        "{MRF_INSTANCES} chains ({closed_count} closed), length <= 8, <= 4 labels; max energy gap {worst:.1e} \
         (tol {MRF_ENERGY_TOL:.0e}); {:.2} s",
        elapsed.as_secs_f64()
    );
    report(2, "MRF exactness", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 3. Propagation locality

fn jitter(rng: &mut ChaCha8Rng, x: f64, y: f64) -> GeoPoint {
    GeoPoint::new(x + rng.random_range(-2.0..2.0), y + rng.random_range(-2.0..2.0))
}

fn add_path(g: &mut RoadGraph, pts: Vec<GeoPoint>, attach: Option<usize>) -> Vec<usize> {
    let mut ids: Vec<usize> = attach.into_iter().collect();
    for p in pts {
        ids.push(g.add_vertex(p).unwrap());
    }
    for w in ids.windows(2) {
        g.add_edge(w[0], w[1], None).unwrap();
    }
    ids
}

/// A main road, sometimes a parallel carriageway, a side street, and a
/// diagonal spur; never more than 30 vertices.
fn random_road_graph(rng: &mut ChaCha8Rng) -> RoadGraph {
    let mut g = RoadGraph::new();
    let a = rng.random_range(4..=10);
    let main_pts = (0..a).map(|i| jitter(rng, 20.0 * i as f64, 0.0)).collect();
    let main = add_path(&mut g, main_pts, None);
    if rng.random_bool(0.6) {
        let b = rng.random_range(3..=a);
        let off = rng.random_range(0..=a - b) as f64;
        let pts = (0..b).map(|i| jitter(rng, 20.0 * (off + i as f64), 15.0)).collect();
        add_path(&mut g, pts, None);
    }
    if rng.random_bool(0.6) {
        let j = rng.random_range(0..a);
        let c = rng.random_range(2..=6);
        let x = g.position(main[j]).x;
        let pts = (1..=c).map(|i| jitter(rng, x, -20.0 * i as f64)).collect();
        add_path(&mut g, pts, Some(main[j]));
    }
    if rng.random_bool(0.4) {
        let end = *main.last().unwrap();
        let p = g.position(end);
        let d = rng.random_range(2..=4);
        let pts = (1..=d).map(|i| jitter(rng, p.x + 14.0 * i as f64, p.y - 14.0 * i as f64)).collect();
        add_path(&mut g, pts, Some(end));
    }
    assert!(g.vertex_count() <= 30);
    g
}

/// Hop distance from every vertex to `target` along message edges of any
/// structure (a source `u` of `w` sends to `w`).
fn hops_to(structures: &[GraphStructure], target: usize) -> Vec<usize> {
    let n = structures[0].vertex_count();
    let mut dist = vec![usize::MAX; n];
    dist[target] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(w) = queue.pop_front() {
        for s in structures {
            for &u in &s.sources[w] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[w] + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    dist
}

#[test]
fn c03_propagation_locality() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = ModelConfig {
        feature_dim: DEFAULT_FEATURE_DIM,
        embed_dim: 16,
        encoder_hidden: vec![16],
        hidden_chunk: 8,
        steps: LOCALITY_STEPS,
        head_hidden: vec![16],
        ..ModelConfig::default()
    };
    let (mut mismatches, mut near, mut far, mut aux_graphs) = (0usize, 0usize, 0usize, 0usize);
    for gi in 0..LOCALITY_GRAPHS {
        let graph = random_road_graph(&mut rng);
        let n = graph.vertex_count();
        let chains = extract_road_chains(&graph, DEFAULT_CHAIN_ANGLE);
        let structures = build_structures(&graph, &chains, &config.structures);
        let aux = structures.last().unwrap();
        aux_graphs += usize::from(aux.sources.iter().any(|s| !s.is_empty()));
        let mut model = RoadTagger::new(config.clone(), gi as u64).unwrap();
        // Positive biases keep the narrow ReLU layers from switching a whole
        // vertex off, which would zero a gradient that should flow.
        let store = model.params_mut();
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).ends_with(".bias") {
                for b in store.get_mut(id).data_mut() {
                    *b = rng.random_range(0.1..0.5);
                }
            }
        }
        let feats: Vec<f64> = (0..n * DEFAULT_FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let features = Tensor::matrix(n, DEFAULT_FEATURE_DIM, feats).unwrap();
        for target in 0..n {
            let mut tape = Tape::new();
            let (x, logits) = {
                let mut ctx = Ctx::new(&mut tape, model.params());
                let x = ctx.tape.constant(features.clone()).unwrap();
                let trace = model.forward_on(&mut ctx, x, &structures, None).unwrap();
                (x, trace.lane_logits)
            };
            let classes = tape.value(logits).cols();
            let mut pick = Tensor::zeros(&[n, classes]);
            for w in pick.row_mut(target) {
                *w = rng.random_range(0.5..1.5);
            }
            let pick = tape.constant(pick).unwrap();
            let weighted = tape.mul(logits, pick).unwrap();
            let y = tape.sum(weighted).unwrap();
            let grads = tape.backward(y).unwrap();
            let gx = grads.wrt(x).expect("gradient reaches the inputs");
            let dist = hops_to(&structures, target);
            for u in 0..n {
                let reaches = gx.row(u).iter().any(|&g| g != 0.0);
                let within = dist[u] <= LOCALITY_STEPS;
                if within {
                    near += 1;
                } else {
                    far += 1;
                }
                mismatches += usize::from(reaches != within);
            }
        }
    }
    let pass = mismatches == 0 && near > 0 && far > 0 && aux_graphs > 0;
    let detail = format!(
        "{LOCALITY_GRAPHS} graphs (<= 30 vertices, {aux_graphs} with parallel links), T={LOCALITY_STEPS}; \
         {near} pairs within T, {far} beyond; {mismatches} disagreements with the BFS oracle"
    );
    report(3, "propagation locality", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 4. Receptive-field separation

#[test]
fn c04_receptive_field_separation() {
    let _g = serial();
    let seed = 1;
    let suite = scenario_suite(Preset::OcclusionSweep, seed, &SuiteOptions::default()).unwrap();
    let cfg = tagger_config(seed, SWEEP_ITERATIONS);
    let kinds = cfg.model.structures.clone();

    // Occlusion spans must stay within the propagation range.
    let longest = suite
        .splits
        .iter()
        .flat_map(|s| s.train.iter().chain(&s.validation).chain(&s.test))
        .flat_map(|spec| spec.disruptions.iter().filter(|d| d.kind.occludes()).map(|d| d.len))
        .max()
        .unwrap_or(0);

    // Occluded observations must carry no label information: regenerating a
    // test world with every lane count and road type changed leaves its
    // occluded feature rows bit for bit the same.
    let (mut occluded_rows, mut leaked_rows, mut visible_moved) = (0usize, 0usize, 0usize);
    for spec in suite.splits.iter().flat_map(|s| &s.test) {
        let mut relabeled = spec.clone();
        for road in &mut relabeled.roads {
            road.lanes.iter_mut().for_each(|seg| seg.lanes = 7 - seg.lanes);
            road.road_type = match road.road_type {
                RoadType::Primary => RoadType::Residential,
                RoadType::Residential => RoadType::Primary,
            };
        }
        let (a, b) = (generate_world(spec).unwrap(), generate_world(&relabeled).unwrap());
        assert_eq!(a.vertex_count(), b.vertex_count());
        for (v, occ) in a.occluded_mask().into_iter().enumerate() {
            let moved = a.features.row(v) != b.features.row(v);
            if occ {
                occluded_rows += 1;
                leaked_rows += usize::from(moved);
            } else {
                visible_moved += usize::from(moved);
            }
        }
    }

    let (mut train_set, mut validation) = (Vec::new(), Vec::new());
    for sp in &suite.splits {
        train_set.extend(prepare(&sp.train, &kinds, "t"));
        validation.extend(prepare(&sp.validation, &kinds, "v"));
    }
    let start = Instant::now();
    let tagger = train(&train_set, &validation, &cfg).unwrap();
    let train_time = start.elapsed();
    let classifier = train_classifier(
        &train_set,
        &validation,
        &ClassifierRun::default().model,
        &ClassifierRun::default().schedule(&cfg),
    )
    .unwrap()
    .classifier;

    let mut test = Vec::new();
    for sp in &suite.splits {
        test.extend(prepare(&sp.test, &kinds, "x"));
    }

    let tagger_preds = predict_all(&tagger.model, &test, TrainConfig::default().eval_batch_vertices).unwrap();
    let classifier_preds: Vec<PredictionSet> =
        test.iter().map(|n| classifier.predict_network(n).unwrap()).collect();
    let (tagger_acc, count) = subset_lane_accuracy(&test, &tagger_preds, "occluded");
    let (classifier_acc, _) = subset_lane_accuracy(&test, &classifier_preds, "occluded");

    let pass = longest <= STEPS
        && occluded_rows > 0
        && leaked_rows == 0
        && visible_moved > 0
        && tagger_acc >= OCCLUDED_TAGGER_MIN
        && classifier_acc <= OCCLUDED_CLASSIFIER_MAX
        && train_time < TRAIN_BUDGET;
    let detail = format!(
        "{count} occluded vertices, spans <= {longest} (T={STEPS}), \
         {leaked_rows} of {occluded_rows} occluded rows move under relabeling \
         ({visible_moved} visible rows do); \
         tagger {tagger_acc:.3} (>= {OCCLUDED_TAGGER_MIN:.2}), classifier {classifier_acc:.3} \
         (<= {OCCLUDED_CLASSIFIER_MAX:.3}); tagger trained in {:.0} s",
        train_time.as_secs_f64()
    );
    report(4, "receptive-field separation", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 5 and 7 share the basic-suite runs.

struct BasicRun {
    seed: u64,
    /// Test lane accuracy of tagger, smoothing, classifier, MRF.
    lanes: [f64; 4],
    /// Best validation mean accuracy: full, no dropout, no Laplace term.
    validation: [f64; 3],
}

fn basic_runs() -> &'static [BasicRun] {
    static RUNS: OnceLock<Vec<BasicRun>> = OnceLock::new();
    RUNS.get_or_init(|| SEEDS.iter().map(|&s| basic_run(s)).collect())
}

fn basic_run(seed: u64) -> BasicRun {
    let suite = scenario_suite(Preset::Basic, seed, &SuiteOptions::default()).unwrap();
    let split = &suite.splits[0];
    let cfg = tagger_config(seed, BASIC_ITERATIONS);
    let kinds = cfg.model.structures.clone();
    let (tr, va, te) = (prepare(&split.train, &kinds, "t"), prepare(&split.validation, &kinds, "v"), prepare(&split.test, &kinds, "x"));

    let full = train(&tr, &va, &cfg).unwrap();
    let no_dropout = train(&tr, &va, &TrainConfig { dropout_rate: 0.0, ..cfg.clone() }).unwrap();
    let no_laplace = train(&tr, &va, &TrainConfig { laplace_weight: 0.0, ..cfg.clone() }).unwrap();
    let best = |o: &roadtagger::training::TrainOutcome| o.best_score.expect("validation worlds present");

    let run = ClassifierRun::default();
    let classifier = train_classifier(&tr, &va, &run.model, &run.schedule(&cfg)).unwrap().classifier;
    let val_preds: Vec<PredictionSet> = va.iter().map(|n| classifier.predict_network(n).unwrap()).collect();
    let settings = fit_mrf(&val_preds, &va);

    let tagged = predict_all(&full.model, &te, cfg.eval_batch_vertices).unwrap();
    let classified: Vec<PredictionSet> = te.iter().map(|n| classifier.predict_network(n).unwrap()).collect();
    let smoothed: Vec<PredictionSet> =
        te.iter().zip(&classified).map(|(n, p)| smooth_predictions(p, &n.network.graph)).collect();
    let mrf: Vec<PredictionSet> =
        te.iter().zip(&classified).map(|(n, p)| mrf_predictions(p, &n.chains, &settings)).collect();
    let lane = |p: &[PredictionSet]| score_predictions(&te, p).lane_accuracy.unwrap();
    BasicRun {
        seed,
        lanes: [lane(&tagged), lane(&smoothed), lane(&classified), lane(&mrf)],
        validation: [best(&full), best(&no_dropout), best(&no_laplace)],
    }
}

#[test]
fn c05_scheme_ordering() {
    let _g = serial();
    let runs = basic_runs();
    let mean = |i: usize| runs.iter().map(|r| r.lanes[i]).sum::<f64>() / runs.len() as f64;
    let (tagger, smooth, classifier, mrf) = (mean(0), mean(1), mean(2), mean(3));
    let margins = [tagger - smooth, smooth - classifier, tagger - mrf];
    let pass = margins.iter().all(|&m| m >= ORDER_MARGIN);
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "seed {}: {:.3}/{:.3}/{:.3}/{:.3}",
                r.seed, r.lanes[0], r.lanes[1], r.lanes[2], r.lanes[3]
            )
        })
        .collect();
    let detail = format!(
        "mean lane accuracy tagger {tagger:.3}, smoothing {smooth:.3}, classifier {classifier:.3}, MRF {mrf:.3}; \
         margins {:.1}/{:.1}/{:.1} pts (>= {:.0}); tagger/smooth/classifier/MRF by {}",
        100.0 * margins[0],
        100.0 * margins[1],
        100.0 * margins[2],
        100.0 * ORDER_MARGIN,
        per_seed.join(", ")
    );
    report(5, "scheme ordering", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 6. Propagation-limit failure mode

#[test]
fn c06_long_disruption_failure() {
    let _g = serial();
    let seed = 1;
    let suite = scenario_suite(Preset::LongDisruption, seed, &SuiteOptions::default()).unwrap();
    let cfg = tagger_config(seed, LONG_ITERATIONS);
    let kinds = cfg.model.structures.clone();
    let first = &suite.splits[0];
    let model = train(&prepare(&first.train, &kinds, "t"), &prepare(&first.validation, &kinds, "v"), &cfg)
        .unwrap()
        .model;
    let span_accuracy = |len: usize| {
        let split = suite
            .splits
            .iter()
            .find(|s| s.name == format!("span_{len:02}"))
            .expect("span split present");
        let test = prepare(&split.test, &kinds, "x");
        let preds = predict_all(&model, &test, cfg.eval_batch_vertices).unwrap();
        subset_lane_accuracy(&test, &preds, "occluded").0
    };
    let (short, long) = (span_accuracy(STEPS / 2), span_accuracy(2 * STEPS));
    let pass = short - long >= LONG_SPAN_DROP;
    let detail = format!(
        "occluded accuracy span {} = {short:.3}, span {} = {long:.3}; drop {:.1} pts (>= {:.0})",
        STEPS / 2,
        2 * STEPS,
        100.0 * (short - long),
        100.0 * LONG_SPAN_DROP
    );
    report(6, "long-disruption failure mode", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 7. Ablation direction

#[test]
fn c07_ablation_direction() {
    let _g = serial();
    let runs = basic_runs();
    let drops = |i: usize| runs.iter().map(|r| r.validation[0] - r.validation[i]).collect::<Vec<f64>>();
    let (dropout, laplace) = (drops(1), drops(2));
    let wins = |d: &[f64]| d.iter().filter(|&&x| x >= ABLATION_DROP).count();
    let pass = wins(&dropout) >= ABLATION_SEEDS_NEEDED && wins(&laplace) >= ABLATION_SEEDS_NEEDED;
    let pts = |d: &[f64]| d.iter().map(|x| format!("{:+.1}", 100.0 * x)).collect::<Vec<_>>().join("/");
    let detail = format!(
        "best validation lane accuracy drop vs full model over seeds {SEEDS:?}: no dropout {} pts, no Laplace {} pts; \
         need >= {:.0} pt on {ABLATION_SEEDS_NEEDED} of {}",
        pts(&dropout),
        pts(&laplace),
        100.0 * ABLATION_DROP,
        SEEDS.len()
    );
    report(7, "ablation direction", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 8. Report arithmetic

#[test]
fn c08_report_arithmetic() {
    let row = |scheme: &str, lanes: f64, ty: f64, ale: f64| EvalReport {
        scheme: scheme.into(),
        lane_accuracy: lanes,
        type_accuracy: ty,
        ale,
        lane_confusion: Confusion::build(6, &[], &[]),
        type_confusion: Confusion::build(2, &[], &[]),
        subsets: Vec::new(),
    };
    let table = compare_reports(vec![row("classifier", 0.718, 0.891, 0.374), row("roadtagger", 0.772, 0.931, 0.291)])
        .unwrap();
    let records = table.records();
    let direct = format!("{:.1}", reduction_percent(0.374, 0.291));
    let csv = table.to_csv();
    let pass = direct == "22.2" && records[1][6] == "22.2" && records[1][4] == "5.4" && records[1][5] == "4.0";
    let detail = format!(
        "ALE 0.374 -> 0.291 reported as {}% (direct {direct}%), lane gain {} pts, type gain {} pts",
        records[1][6], records[1][4], records[1][5]
    );
    report(8, "report arithmetic", pass, &detail);
    assert!(pass, "{detail}\n{csv}");
}

// ---------------------------------------------------------------------------
// 9. Parser round trips

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::read_to_string(path).unwrap()
}

/// Densify, write, and parse again; returns a description of the first
/// difference, if any.
fn round_trip(parsed: &LabeledNetwork) -> Result<usize, String> {
    let dense = parsed.densified(DEFAULT_SPACING).map_err(|e| e.to_string())?;
    let longest = dense.graph.edges().map(|(a, b)| dense.graph.edge_length(a, b)).fold(0.0, f64::max);
    if longest > DEFAULT_SPACING + 1e-9 {
        return Err(format!("densified edge of {longest:.2} m"));
    }
    let back = parse_geojson_network(&network_document(&dense), &TagMapping::default())
        .map_err(|e| e.to_string())?
        .network;
    if back.graph.adjacency() != dense.graph.adjacency() {
        return Err("adjacency differs".into());
    }
    if back.lanes != dense.lanes || back.road_type != dense.road_type {
        return Err("labels differ".into());
    }
    let drift = (0..dense.vertex_count())
        .map(|v| back.graph.position(v).distance(dense.graph.position(v)))
        .fold(0.0, f64::max);
    if drift > 1e-6 {
        return Err(format!("positions drift {drift:.2e} m"));
    }
    Ok(dense.vertex_count())
}

#[test]
fn c09_parser_round_trips() {
    let mapping = TagMapping::default();
    let mut problems = Vec::new();

    let geo = parse_geojson_network(&fixture("town.geojson"), &mapping).unwrap();
    let g = &geo.network;
    let junction = (0..g.vertex_count()).find(|&v| g.graph.degree(v) == 4);
    if g.vertex_count() != 7 || junction.is_none() {
        problems.push(format!("geojson: {} vertices, junction {junction:?}", g.vertex_count()));
    }
    if !g.lanes.contains(&Some(6)) || g.lanes.iter().any(|l| l.is_some_and(|l| l > 6)) {
        problems.push("geojson: lanes not clamped to 6".into());
    }
    if !g.lanes.contains(&None) || geo.warnings.len() < 2 {
        problems.push(format!("geojson: masked labels or warnings missing ({:?})", geo.warnings));
    }
    let geo_dense = round_trip(g).unwrap_or_else(|e| {
        problems.push(format!("geojson round trip: {e}"));
        0
    });

    let osm = parse_osm_xml(&fixture("town.osm"), &mapping).unwrap().network;
    let degrees: Vec<usize> = (0..osm.vertex_count()).map(|v| osm.graph.degree(v)).collect();
    if osm.vertex_count() != 6 || !degrees.contains(&4) {
        problems.push(format!("osm: degrees {degrees:?}"));
    }
    if !osm.road_type.contains(&Some(RoadType::Primary)) || !osm.lanes.contains(&None) {
        problems.push("osm: tag mapping".into());
    }
    let osm_dense = round_trip(&osm).unwrap_or_else(|e| {
        problems.push(format!("osm round trip: {e}"));
        0
    });

    match parse_geojson_network(&fixture("malformed.geojson"), &mapping) {
        Err(IngestError::Json { line: 5, .. }) => {}
        other => problems.push(format!("malformed geojson: {:?}", other.map(|p| p.network.vertex_count()))),
    }
    match parse_osm_xml(&fixture("missing_node.osm"), &mapping) {
        Err(e @ IngestError::MissingNode { way: 7, node: 99 }) if e.to_string() == "way 7 references missing node 99" => {}
        other => problems.push(format!("missing node: {:?}", other.map(|p| p.network.vertex_count()))),
    }
    match parse_osm_xml(&fixture("malformed.osm"), &mapping) {
        Err(IngestError::Xml(_)) => {}
        other => problems.push(format!("malformed osm: {:?}", other.map(|p| p.network.vertex_count()))),
    }

    let pass = problems.is_empty();
    let detail = format!(
        "GeoJSON fixture {geo_dense} and OSM fixture {osm_dense} densified vertices round-trip with identical \
         adjacency and labels; 3 malformed fixtures; {} problems {problems:?}",
        problems.len()
    );
    report(9, "parser round trips", pass, &detail);
    assert!(pass, "{detail}");
}

// ---------------------------------------------------------------------------
// 10. Determinism of the command-line pipeline

fn cli(args: &[&str], paths: &[&Path]) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_roadtagger"));
    cmd.args(args).args(paths);
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

const PIPELINE_CONFIG: &str = "\
[tagger]
iterations = 40
validation_interval = 20
learning_rate = 0.001

[tagger.model]
hidden_chunk = 8

[classifier]
iterations = 30
validation_interval = 10
";

fn pipeline(root: &Path) -> [BTreeMap<PathBuf, Vec<u8>>; 3] {
    let suite = root.join("suite");
    let config = root.join("run.toml");
    let bundle = root.join("model.json");
    let report = root.join("report.csv");
    std::fs::write(&config, PIPELINE_CONFIG).unwrap();
    cli(
        &["generate", "--preset", "basic", "--seed", "5", "--train-worlds", "3", "--validation-worlds", "2", "--test-worlds", "2", "--out"],
        &[&suite],
    );
    cli(&["train", "--config"], &[&config, Path::new("--data"), &suite, Path::new("--out"), &bundle]);
    cli(&["eval", "--ckpt"], &[&bundle, Path::new("--data"), &suite, Path::new("--report"), &report]);
    let files = |names: &[&str]| {
        names
            .iter()
            .map(|n| (PathBuf::from(n), std::fs::read(root.join(n)).unwrap()))
            .collect::<BTreeMap<_, _>>()
    };
    [tree_bytes(&suite), files(&["model.json", "model.metrics.csv"]), files(&["report.csv"])]
}

#[test]
fn c10_pipeline_determinism() {
    let _g = serial();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let stages = ["generate", "train", "eval"];
    let mut differing = Vec::new();
    let mut files = 0;
    for ((stage, x), y) in stages.iter().zip(&first).zip(&second) {
        files += x.len();
        if x != y {
            differing.push(*stage);
        }
    }
    let pass = differing.is_empty() && files > 4;
    let detail = format!("two generate/train/eval runs, {files} output files compared byte for byte; differing stages {differing:?}");
    report(10, "pipeline determinism", pass, &detail);
    assert!(pass, "{detail}");
}
