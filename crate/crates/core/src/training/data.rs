use super::TrainError;
use crate::autodiff::Tensor;
use crate::ingest::LabeledNetwork;
use crate::metrics_eval::EvalLabels;
use crate::road_graph::{build_structures, extract_road_chains, GraphStructure, RoadChain, StructureKind, DEFAULT_CHAIN_ANGLE};
use crate::synth_bench::WorldData;

/// A labeled network with its features and everything derived from the
/// graph once: chains, propagation structures, zero-based class labels.
#[derive(Clone, Debug)]
pub struct PreparedNetwork {
    pub name: String,
    pub network: LabeledNetwork,
    pub features: Tensor,
    pub chains: Vec<RoadChain>,
    pub structures: Vec<GraphStructure>,
    pub lane_labels: Vec<Option<usize>>,
    pub type_labels: Vec<Option<usize>>,
    /// Named vertex subsets reported separately by evaluation.
    pub subsets: Vec<(String, Vec<bool>)>,
}

impl PreparedNetwork {
    pub fn new(
        name: &str,
        network: LabeledNetwork,
        features: Tensor,
        kinds: &[StructureKind],
    ) -> Result<Self, TrainError> {
        if features.rows() != network.vertex_count() {
            return Err(TrainError::Data(format!(
                "{name}: {} feature rows for {} vertices",
                features.rows(),
                network.vertex_count()
            )));
        }
        let chains = extract_road_chains(&network.graph, DEFAULT_CHAIN_ANGLE);
        let structures = build_structures(&network.graph, &chains, kinds);
        Ok(Self {
            name: name.to_string(),
            lane_labels: network.lane_classes(),
            type_labels: network.type_classes(),
            network,
            features,
            chains,
            structures,
            subsets: Vec::new(),
        })
    }

    pub fn from_world(data: &WorldData, kinds: &[StructureKind]) -> Result<Self, TrainError> {
        let mut p = Self::new(&data.name, data.network.clone(), data.features.clone(), kinds)?;
        p.subsets = data.subsets();
        Ok(p)
    }

    pub fn vertex_count(&self) -> usize {
        self.features.rows()
    }

    pub fn eval_labels(&self) -> EvalLabels {
        EvalLabels {
            lanes: self.lane_labels.clone(),
            road_type: self.type_labels.clone(),
            subsets: self.subsets.clone(),
        }
    }
}
