use std::path::{Path, PathBuf};

use super::bundle::{load_config, Bundle, RunConfig};
use super::{CliError, EvalArgs, GenerateArgs, GradcheckArgs, InferArgs, MrfSearchArgs, TrainArgs};
use crate::autodiff::{check_op, GradCheckOptions, OP_NAMES};
use crate::baselines::{
    mrf_grid_search, mrf_predictions, smooth_predictions, train_classifier, Classifier, GridScore, LabelDistance,
    MrfGrid, MrfSettings, SearchInput,
};
use crate::ingest::{parse_geojson_network, parse_osm_xml, write_atomic, write_predictions, TagMapping};
use crate::metrics_eval::{compare_report, EvalLabels};
use crate::model::RoadTagger;
use crate::predictions::PredictionSet;
use crate::road_graph::StructureKind;
use crate::synth_bench::{
    read_features, read_manifest, scenario_suite, write_suite, ManifestSplit, Preset, SuiteManifest, SuiteOptions,
    WorldData,
};
use crate::training::{
    metrics_csv, model_check_options, model_gradient_check, predict_all, train_with, PreparedNetwork, TrainConfig,
};

pub const SCHEME_NAMES: [&str; 4] = ["roadtagger", "classifier", "smooth", "mrf"];

/// A validated, duplicate-free scheme list in the order given.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schemes(pub Vec<&'static str>);

impl Schemes {
    pub fn parse(list: &str) -> Result<Self, CliError> {
        let mut out: Vec<&'static str> = Vec::new();
        for raw in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let name = SCHEME_NAMES
                .iter()
                .copied()
                .find(|n| *n == raw)
                .ok_or_else(|| CliError::usage(format!("unknown scheme {raw:?}; expected one of {}", SCHEME_NAMES.join(", "))))?;
            if out.contains(&name) {
                return Err(CliError::usage(format!("scheme {name:?} listed twice")));
            }
            out.push(name);
        }
        if out.is_empty() {
            return Err(CliError::usage("no schemes given"));
        }
        Ok(Self(out))
    }

    fn needs_classifier(&self) -> bool {
        self.0.iter().any(|s| *s != "roadtagger")
    }

    fn needs_mrf(&self) -> bool {
        self.0.contains(&"mrf")
    }
}

/// Where `train` writes the per-iteration log unless told otherwise.
pub fn metrics_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("metrics.csv")
}

fn select_splits<'a>(m: &'a SuiteManifest, name: Option<&str>) -> Result<Vec<&'a ManifestSplit>, CliError> {
    match name {
        None => Ok(m.splits.iter().collect()),
        Some(n) => m.split(n).map(|s| vec![s]).ok_or_else(|| {
            let known: Vec<&str> = m.splits.iter().map(|s| s.name.as_str()).collect();
            CliError::usage(format!("no split {n:?}; the suite has {}", known.join(", ")))
        }),
    }
}

/// First occurrence order, duplicates dropped.
fn unique<'a>(stems: impl IntoIterator<Item = &'a String>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in stems {
        if !out.contains(&s.as_str()) {
            out.push(s);
        }
    }
    out
}

fn load_nets(dir: &Path, stems: &[&str], kinds: &[StructureKind]) -> Result<Vec<PreparedNetwork>, CliError> {
    stems
        .iter()
        .map(|stem| {
            let data = WorldData::load(dir, stem)?;
            Ok(PreparedNetwork::from_world(&data, kinds)?)
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.4}"))
}

pub fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    let preset = Preset::parse(&a.preset).ok_or_else(|| {
        let names: Vec<&str> = Preset::ALL.iter().map(|p| p.as_str()).collect();
        CliError::usage(format!("unknown preset {:?}; expected one of {}", a.preset, names.join(", ")))
    })?;
    let mut opts = SuiteOptions::default();
    if let Some(t) = a.steps {
        opts.steps = t;
    }
    opts.train_worlds = a.train_worlds.or(opts.train_worlds);
    opts.validation_worlds = a.validation_worlds.or(opts.validation_worlds);
    opts.test_worlds = a.test_worlds.or(opts.test_worlds);

    let out = &a.out;
    let occupied = out.exists() && (!out.is_dir() || std::fs::read_dir(out)?.next().is_some());
    if occupied {
        return Err(CliError::data(format!("{} exists and is not an empty directory", out.display())));
    }
    let suite = scenario_suite(preset, a.seed, &opts)?;

    // Build next to the target and rename, so a failed run leaves nothing behind.
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let name = out
        .file_name()
        .ok_or_else(|| CliError::usage(format!("{} has no directory name", out.display())))?;
    let staging = parent.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    let written = write_suite(&staging, &suite, &opts).and_then(|m| {
        if out.exists() {
            std::fs::remove_dir(out)?;
        }
        std::fs::rename(&staging, out)?;
        Ok(m)
    });
    let manifest = match written {
        Ok(m) => m,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e.into());
        }
    };
    let worlds = unique(manifest.splits.iter().flat_map(|s| s.train.iter().chain(&s.validation).chain(&s.test))).len();
    println!(
        "wrote {} preset (seed {}): {} worlds in {} split(s) to {}",
        preset.as_str(),
        a.seed,
        worlds,
        manifest.splits.len(),
        out.display()
    );
    Ok(())
}

/// Classifier outputs on each network.
fn classify(c: &Classifier, nets: &[PreparedNetwork]) -> Result<Vec<PredictionSet>, CliError> {
    nets.iter().map(|n| Ok(c.predict_network(n)?)).collect()
}

/// MRF settings chosen per attribute on `nets`, with every grid score.
fn fit_mrf(
    c: &Classifier,
    nets: &[PreparedNetwork],
    grid: &MrfGrid,
) -> Result<(MrfSettings, Vec<GridScore>, Vec<GridScore>), CliError> {
    let preds = classify(c, nets)?;
    let lanes: Vec<SearchInput> = nets
        .iter()
        .zip(&preds)
        .map(|(n, p)| SearchInput { probs: &p.lanes, labels: &n.lane_labels, chains: &n.chains })
        .collect();
    let types: Vec<SearchInput> = nets
        .iter()
        .zip(&preds)
        .map(|(n, p)| SearchInput { probs: &p.road_type, labels: &n.type_labels, chains: &n.chains })
        .collect();
    let (lp, ls) = mrf_grid_search(&lanes, grid, LabelDistance::Absolute)?;
    let (tp, ts) = mrf_grid_search(&types, grid, LabelDistance::Indicator)?;
    Ok((MrfSettings { lanes: lp, road_type: tp }, ls, ts))
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = a.iterations {
        cfg.tagger.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.tagger.seed = s;
    }
    cfg.tagger.validate().map_err(|e| CliError::usage(e.to_string()))?;
    cfg.mrf.points().map_err(|e| CliError::usage(e.to_string()))?;

    let manifest = read_manifest(&a.data)?;
    let splits = select_splits(&manifest, a.split.as_deref())?;
    let kinds = cfg.tagger.model.structures.clone();
    let train_set = load_nets(&a.data, &unique(splits.iter().flat_map(|s| &s.train)), &kinds)?;
    let validation = load_nets(&a.data, &unique(splits.iter().flat_map(|s| &s.validation)), &kinds)?;

    let outcome = train_with(&train_set, &validation, &cfg.tagger, &mut |row| {
        if let Some(v) = &row.validation {
            eprintln!(
                "iteration {:>6}  loss {:.4}  val lane {}  val type {}",
                row.iteration,
                row.loss,
                fmt_opt(v.lane_accuracy),
                fmt_opt(v.type_accuracy)
            );
        }
    })?;
    let metrics = a.metrics.clone().unwrap_or_else(|| metrics_path(&a.out));
    write_atomic(&metrics, metrics_csv(&outcome.history).as_bytes())?;

    let (classifier, mrf) = if cfg.classifier.enabled && !a.no_baselines {
        let schedule: TrainConfig = cfg.classifier.schedule(&cfg.tagger);
        let c = train_classifier(&train_set, &validation, &cfg.classifier.model, &schedule)?.classifier;
        let settings = if validation.is_empty() {
            MrfSettings::default()
        } else {
            fit_mrf(&c, &validation, &cfg.mrf)?.0
        };
        (Some(c), Some(settings))
    } else {
        (None, None)
    };
    Bundle::new(&outcome.model, outcome.best_iteration, classifier.as_ref(), mrf).save(&a.out)?;

    let best = outcome.best_score;
    println!(
        "trained {} iterations on {} worlds ({} validation); best validation {} at iteration {}",
        cfg.tagger.iterations,
        train_set.len(),
        validation.len(),
        fmt_opt(best),
        outcome.best_iteration.map_or("-".to_string(), |i| i.to_string())
    );
    if let Some(m) = mrf {
        println!(
            "mrf: lanes lambda {} n {}, type lambda {} n {}",
            m.lanes.lambda, m.lanes.exponent, m.road_type.lambda, m.road_type.exponent
        );
    }
    println!("wrote {} and {}", a.out.display(), metrics.display());
    Ok(())
}

/// Everything needed to produce any scheme's predictions.
struct Predictors {
    tagger: RoadTagger,
    classifier: Option<Classifier>,
    mrf: Option<MrfSettings>,
    batch: usize,
}

impl Predictors {
    fn load(bundle: &Bundle, schemes: &Schemes) -> Result<Self, CliError> {
        let classifier = if schemes.needs_classifier() { Some(bundle.classifier()?) } else { None };
        let mrf = if schemes.needs_mrf() {
            Some(bundle.mrf.ok_or_else(|| CliError::data("checkpoint holds no MRF settings"))?)
        } else {
            None
        };
        Ok(Self {
            tagger: bundle.tagger()?,
            classifier,
            mrf,
            batch: TrainConfig::default().eval_batch_vertices,
        })
    }

    fn kinds(&self) -> &[StructureKind] {
        &self.tagger.config().structures
    }

    /// Per-network predictions for each scheme, in `schemes` order.
    fn predict(&self, schemes: &Schemes, nets: &[PreparedNetwork]) -> Result<Vec<Vec<PredictionSet>>, CliError> {
        let base = match &self.classifier {
            Some(c) => Some(classify(c, nets)?),
            None => None,
        };
        schemes
            .0
            .iter()
            .map(|&s| {
                let cls = || base.as_ref().expect("classifier loaded for non-tagger schemes");
                Ok(match s {
                    "roadtagger" => predict_all(&self.tagger, nets, self.batch)?,
                    "classifier" => cls().clone(),
                    "smooth" => nets.iter().zip(cls()).map(|(n, p)| smooth_predictions(p, &n.network.graph)).collect(),
                    _ => {
                        let m = self.mrf.as_ref().expect("mrf settings loaded");
                        nets.iter().zip(cls()).map(|(n, p)| mrf_predictions(p, &n.chains, m)).collect()
                    }
                })
            })
            .collect()
    }
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let schemes = Schemes::parse(&a.schemes)?;
    let bundle = Bundle::load(&a.ckpt)?;
    let predictors = Predictors::load(&bundle, &schemes)?;
    let manifest = read_manifest(&a.data)?;
    let splits = select_splits(&manifest, a.split.as_deref())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header_written = false;
    for split in splits {
        let nets = load_nets(&a.data, &unique(&split.test), predictors.kinds())?;
        if nets.is_empty() {
            return Err(CliError::data(format!("split {:?} has no test worlds", split.name)));
        }
        let labels = EvalLabels::concat(&nets.iter().map(PreparedNetwork::eval_labels).collect::<Vec<_>>());
        let per_scheme = predictors.predict(&schemes, &nets)?;
        let named: Vec<(String, PredictionSet)> = schemes
            .0
            .iter()
            .zip(per_scheme)
            .map(|(s, p)| {
                let pooled = PredictionSet::concat(&p).ok_or_else(|| CliError::data("inconsistent class counts"))?;
                Ok((s.to_string(), pooled))
            })
            .collect::<Result<_, CliError>>()?;
        let cmp = compare_report(&named, &labels)?;
        if !header_written {
            let mut h = vec!["split".to_string()];
            h.extend(cmp.header());
            w.write_record(&h).map_err(|e| CliError::data(e.to_string()))?;
            header_written = true;
        }
        for rec in cmp.records() {
            let mut row = vec![split.name.clone()];
            row.extend(rec);
            w.write_record(&row).map_err(|e| CliError::data(e.to_string()))?;
        }
        println!("split {} ({} worlds, {} vertices)", split.name, nets.len(), labels.len());
        print!("{}", cmp.to_text_table());
        println!();
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    write_atomic(&a.report, &bytes)?;
    println!("wrote {}", a.report.display());
    Ok(())
}

pub fn infer(a: &InferArgs) -> Result<(), CliError> {
    let schemes = Schemes::parse(&a.scheme)?;
    if schemes.0.len() != 1 {
        return Err(CliError::usage("infer takes exactly one scheme"));
    }
    let bundle = Bundle::load(&a.ckpt)?;
    let predictors = Predictors::load(&bundle, &schemes)?;
    let text = std::fs::read_to_string(&a.network).map_err(|e| CliError::data(format!("{}: {e}", a.network.display())))?;
    let is_osm = a
        .network
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("osm") || e.eq_ignore_ascii_case("xml"));
    let mapping = TagMapping::default();
    let parsed = if is_osm { parse_osm_xml(&text, &mapping)? } else { parse_geojson_network(&text, &mapping)? };
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let (features, _) = read_features(&a.features)?;
    let name = a.network.file_stem().map_or("network".into(), |s| s.to_string_lossy().into_owned());
    let net = PreparedNetwork::new(&name, parsed.network, features, predictors.kinds())?;
    let preds = predictors.predict(&schemes, std::slice::from_ref(&net))?.remove(0).remove(0);
    write_predictions(&net.network, &preds, &a.out)?;
    println!("wrote {} predictions for {} vertices to {}", schemes.0[0], net.vertex_count(), a.out.display());
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    if a.instances == 0 {
        return Err(CliError::usage("--instances must be at least 1"));
    }
    let opts = GradCheckOptions { seed: a.seed, ..GradCheckOptions::default() };
    let mut failed: Vec<String> = Vec::new();
    let mut line = |name: &str, reports: &[crate::autodiff::GradCheckReport]| {
        let ok = reports.iter().filter(|r| r.passed()).count();
        let worst = reports.iter().map(|r| r.max_rel_error()).fold(0.0, f64::max);
        println!("{name:<14} {ok:>3}/{:<3} max rel error {worst:.2e}", reports.len());
        failed.extend(reports.iter().filter(|r| !r.passed()).map(|r| r.label.clone()));
    };
    for (i, op) in OP_NAMES.iter().enumerate() {
        let reports = check_op(op, a.instances, a.seed.wrapping_add(i as u64), &opts)?;
        line(op, &reports);
    }
    let models = (0..a.instances as u64)
        .map(|k| {
            let s = a.seed.wrapping_add(k);
            model_gradient_check(s, &model_check_options(s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    line("model", &models);
    if failed.is_empty() {
        println!("all gradient checks passed");
        Ok(())
    } else {
        Err(CliError::check(format!("{} gradient check(s) failed: {}", failed.len(), failed.join(", "))))
    }
}

pub fn mrf_search(a: &MrfSearchArgs) -> Result<(), CliError> {
    let grid: MrfGrid = load_config(&a.grid)?;
    grid.points().map_err(|e| CliError::usage(e.to_string()))?;
    let mut bundle = Bundle::load(&a.ckpt)?;
    let classifier = bundle.classifier()?;
    let kinds = bundle.tagger.config.structures.clone();
    let manifest = read_manifest(&a.data)?;
    let splits = select_splits(&manifest, a.split.as_deref())?;
    let nets = load_nets(&a.data, &unique(splits.iter().flat_map(|s| &s.validation)), &kinds)?;
    if nets.is_empty() {
        return Err(CliError::data("no validation worlds to search on"));
    }
    let (settings, lanes, types) = fit_mrf(&classifier, &nets, &grid)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut put = |rec: [String; 4]| w.write_record(rec).map_err(|e| CliError::data(e.to_string()));
    put(["attribute", "lambda", "exponent", "accuracy"].map(String::from))?;
    for (attr, scores) in [("lanes", &lanes), ("road_type", &types)] {
        for s in scores {
            put([attr.to_string(), s.params.lambda.to_string(), s.params.exponent.to_string(), format!("{:.6}", s.accuracy)])?;
        }
    }
    let table = String::from_utf8(w.into_inner().map_err(|e| CliError::data(e.to_string()))?).expect("utf-8 csv");
    let summary = format!(
        "selected: lanes lambda {} n {}, type lambda {} n {}",
        settings.lanes.lambda, settings.lanes.exponent, settings.road_type.lambda, settings.road_type.exponent
    );
    match &a.out {
        Some(p) => {
            write_atomic(p, table.as_bytes())?;
            println!("{summary}");
            println!("wrote {}", p.display());
        }
        None => {
            print!("{table}");
            eprintln!("{summary}");
        }
    }
    if a.update {
        bundle.mrf = Some(settings);
        bundle.save(&a.ckpt)?;
    }
    Ok(())
}
