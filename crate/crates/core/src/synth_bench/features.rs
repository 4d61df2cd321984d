use super::UpperRoad;
use crate::ingest::RoadType;

pub const FEATURE_DIM: usize = 16;

/// Visible lane-marking count / 6.
pub const CH_MARKINGS: usize = 0;
/// Paved width / 30 m.
pub const CH_WIDTH: usize = 1;
pub const CH_LEFT: usize = 2;
pub const CH_RIGHT: usize = 3;
/// Start of the four-way occluder one-hot: none, tree, building, overpass.
pub const CH_OCCLUDER: usize = 4;
pub const CH_SURFACE: usize = 8;
/// First pure-noise channel; the rest of the vector is noise.
pub const CH_NOISE: usize = 9;

pub const NOISE_SIGMA: f64 = 0.05;

const LANE_WIDTH: f64 = 3.5;
const WIDTH_SCALE: f64 = 30.0;

/// What hides the road surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Occluder {
    Tree,
    Building,
    /// Shows the upper road instead of the one below.
    Overpass(UpperRoad),
}

pub fn channel_names() -> Vec<String> {
    let named = [
        "markings",
        "width",
        "left_flag",
        "right_flag",
        "occ_none",
        "occ_tree",
        "occ_building",
        "occ_overpass",
        "surface",
    ];
    let mut out: Vec<String> = named.iter().map(|s| s.to_string()).collect();
    out.extend((CH_NOISE..FEATURE_DIM).map(|i| format!("noise{}", i - CH_NOISE)));
    out
}

fn surface_cue(t: RoadType) -> f64 {
    match t {
        RoadType::Residential => 0.35,
        RoadType::Primary => 0.75,
    }
}

fn add_noise(row: &mut [f64], noise: &[f64]) {
    for ch in [CH_MARKINGS, CH_WIDTH, CH_SURFACE] {
        row[ch] += noise[ch];
    }
    row[CH_NOISE..].copy_from_slice(&noise[CH_NOISE..]);
}

/// Unobstructed view of a road. `noise` is the vertex's fixed noise draw.
pub fn render_clean(row: &mut [f64], lanes: u8, road_type: RoadType, shoulder: f64, noise: &[f64]) {
    row.fill(0.0);
    row[CH_MARKINGS] = lanes as f64 / 6.0;
    row[CH_WIDTH] = (lanes as f64 * LANE_WIDTH + shoulder) / WIDTH_SCALE;
    row[CH_LEFT] = 1.0;
    row[CH_RIGHT] = 1.0;
    row[CH_OCCLUDER] = 1.0;
    row[CH_SURFACE] = surface_cue(road_type);
    add_noise(row, noise);
}

/// Fully occluded view. Depends only on the occluder and the noise draw,
/// never on the road underneath.
pub fn render_occluder(row: &mut [f64], occluder: Occluder, noise: &[f64]) {
    match occluder {
        Occluder::Overpass(up) => {
            render_clean(row, up.lanes, up.road_type, up.shoulder, noise);
            row[CH_OCCLUDER] = 0.0;
            row[CH_OCCLUDER + 3] = 1.0;
        }
        Occluder::Tree | Occluder::Building => {
            row.fill(0.0);
            let (width, surface, slot) = if occluder == Occluder::Tree {
                (0.25, 0.15, 1)
            } else {
                (0.05, 0.55, 2)
            };
            row[CH_WIDTH] = width;
            row[CH_SURFACE] = surface;
            row[CH_OCCLUDER + slot] = 1.0;
            add_noise(row, noise);
        }
    }
}
