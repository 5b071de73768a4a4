//! Synthetic V2I scenes.
//!
//! An elevated node observes a rectangular map split into `H x W` grids and
//! serves ground users around it. Per-grid maps are synthesized from the
//! geometry: detection quality peaks near objects, a user sees a cell worse
//! when an occluder blocks the straight line to it, and each user cares
//! about a square region ahead of it. The MoI pipeline and the MCS table
//! then turn the scene into a [`ProblemInstance`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{McsTable, DEFAULT_MCS};
use crate::instance::{InstanceData, InstanceError, ProblemInstance};
use crate::moi::{build_moi, confidence_map, informativeness, GridMap, MoiError};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("user {0} does not exist")]
    NoSuchUser(usize),
    #[error("user {0} sits at the transmitter position")]
    ZeroDistance(usize),
    #[error(transparent)]
    Moi(#[from] MoiError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("no rate assignment reproduces the target utilities")]
    NoFig1Match,
}

/// Free-space path loss in dB at distance `d_m`.
pub fn free_space_pathloss_db(d_m: f64, carrier_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * d_m * carrier_hz / SPEED_OF_LIGHT).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Radio {
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub pathloss_exponent: f64,
    pub carrier_hz: f64,
    /// Loss at the 1 m reference distance.
    pub ref_pathloss_db: f64,
}

impl Default for Radio {
    fn default() -> Self {
        Self {
            tx_power_dbm: 23.0,
            noise_dbm: -92.0,
            pathloss_exponent: 3.8,
            carrier_hz: 5.9e9,
            ref_pathloss_db: 47.85,
        }
    }
}

impl Radio {
    /// Log-distance SNR at a 3D distance of `d_m` meters.
    pub fn snr_db(&self, d_m: f64) -> f64 {
        let loss = self.ref_pathloss_db + 10.0 * self.pathloss_exponent * d_m.log10();
        self.tx_power_dbm - loss - self.noise_dbm
    }

    fn is_finite(&self) -> bool {
        [
            self.tx_power_dbm,
            self.noise_dbm,
            self.pathloss_exponent,
            self.carrier_hz,
            self.ref_pathloss_db,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Axis-aligned rectangle blocking line of sight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub center: [f64; 2],
    pub half_size: [f64; 2],
}

impl Occluder {
    fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).abs() <= self.half_size[0]
            && (p[1] - self.center[1]).abs() <= self.half_size[1]
    }

    /// Whether the open segment `a -> b` passes through the rectangle.
    fn blocks(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        // Liang-Barsky clipping
        let lo = [self.center[0] - self.half_size[0], self.center[1] - self.half_size[1]];
        let hi = [self.center[0] + self.half_size[0], self.center[1] + self.half_size[1]];
        let d = [b[0] - a[0], b[1] - a[1]];
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..2 {
            if d[k] == 0.0 {
                if a[k] < lo[k] || a[k] > hi[k] {
                    return false;
                }
                continue;
            }
            let mut ta = (lo[k] - a[k]) / d[k];
            let mut tb = (hi[k] - a[k]) / d[k];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        t1 > 0.0 && t0 < 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneUser {
    pub position: [f64; 3],
    /// +1 drives towards growing x, -1 towards shrinking x.
    pub heading: f64,
    pub roi: GridMap,
    pub q_user: GridMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub hvn_position: [f64; 3],
    pub users: Vec<SceneUser>,
    pub q_hvn: GridMap,
    pub compressed_feature: GridMap,
    pub extent_m: [f64; 2],
    pub height: usize,
    pub width: usize,
    pub radio: Radio,
    pub occluders: Vec<Occluder>,
    pub objects: Vec<[f64; 2]>,
}

impl Scene {
    /// Center of grid `(i, j)`; rows run along y, columns along x.
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        cell_center(self.extent_m, self.height, self.width, i, j)
    }
}

fn cell_center(extent: [f64; 2], h: usize, w: usize, i: usize, j: usize) -> [f64; 2] {
    let cw = extent[0] / w as f64;
    let ch = extent[1] / h as f64;
    [(j as f64 + 0.5) * cw, (i as f64 + 0.5) * ch]
}

/// SNR of a user from the log-distance model.
pub fn snr_for_user(scene: &Scene, user: usize) -> Result<f64, ScenarioError> {
    let u = scene.users.get(user).ok_or(ScenarioError::NoSuchUser(user))?;
    let d = distance3(scene.hvn_position, u.position);
    if d <= 0.0 {
        return Err(ScenarioError::ZeroDistance(user));
    }
    Ok(scene.radio.snr_db(d))
}

fn distance3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub n_users: usize,
    /// Map size in meters, `[x, y]`.
    pub extent_m: [f64; 2],
    pub height: usize,
    pub width: usize,
    pub hvn_height_m: f64,
    pub n_occluders: usize,
    /// Full occluder size in meters, `[x, y]`.
    pub occluder_size_m: [f64; 2],
    pub n_objects: usize,
    /// Spread of the detection-quality bump around each object.
    pub object_sigma_m: f64,
    pub noise_amplitude: f64,
    /// Fraction of HVN quality a user keeps behind an occluder.
    pub occlusion_keep: f64,
    /// Half side of the square RoI.
    pub roi_half_m: f64,
    /// Distance from the user to the RoI center along its heading.
    pub roi_ahead_m: f64,
    pub seed: u64,
    pub eta: f64,
    pub window: usize,
    pub grid_bytes: f64,
    pub bandwidth_hz: f64,
    pub budget_s: f64,
    pub mcs_table: McsTable,
    pub radio: Radio,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_users: 24,
            extent_m: [120.0, 48.0],
            height: 10,
            width: 25,
            hvn_height_m: 15.0,
            n_occluders: 45,
            occluder_size_m: [12.0, 3.0],
            n_objects: 100,
            object_sigma_m: 4.0,
            noise_amplitude: 0.05,
            occlusion_keep: 0.2,
            roi_half_m: 30.0,
            roi_ahead_m: 15.0,
            seed: 0,
            eta: 0.5,
            window: 5,
            grid_bytes: 1600.0,
            bandwidth_hz: 100e6,
            budget_s: 0.030,
            mcs_table: McsTable::default(),
            radio: Radio::default(),
        }
    }
}

impl GenParams {
    pub fn n_grids(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Params(m.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be at least 1");
        }
        if self.height == 0 || self.width == 0 {
            return bad("grid resolution must be at least 1x1");
        }
        if !self.extent_m.iter().all(|&e| e.is_finite() && e > 0.0) {
            return bad("map extent must be positive");
        }
        if !(self.hvn_height_m.is_finite() && self.hvn_height_m > 0.0) {
            return bad("hvn_height_m must be positive");
        }
        if !self.occluder_size_m.iter().all(|&e| e.is_finite() && e > 0.0) {
            return bad("occluder size must be positive");
        }
        if !(self.object_sigma_m.is_finite() && self.object_sigma_m > 0.0) {
            return bad("object_sigma_m must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise_amplitude) {
            return bad("noise_amplitude must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.occlusion_keep) {
            return bad("occlusion_keep must lie in [0, 1]");
        }
        if !(self.roi_half_m.is_finite() && self.roi_half_m > 0.0 && self.roi_ahead_m.is_finite()) {
            return bad("roi_half_m must be positive and roi_ahead_m finite");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if !(self.grid_bytes.is_finite() && self.grid_bytes > 0.0) {
            return bad("grid_bytes must be positive");
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz must be positive");
        }
        if !(self.budget_s.is_finite() && self.budget_s > 0.0) {
            return bad("budget_s must be positive");
        }
        if !self.radio.is_finite() {
            return bad("radio parameters must be finite");
        }
        Ok(())
    }
}

fn bump_map(
    extent: [f64; 2],
    h: usize,
    w: usize,
    centers: &[[f64; 2]],
    sigma: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GridMap, MoiError> {
    let mut data = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let c = cell_center(extent, h, w, i, j);
            let density: f64 = centers
                .iter()
                .map(|o| {
                    let d2 = (c[0] - o[0]).powi(2) + (c[1] - o[1]).powi(2);
                    (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .sum();
            let jitter = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
            data.push((density.min(1.0) + jitter).clamp(0.0, 1.0));
        }
    }
    GridMap::new(h, w, data)
}

/// Build a scene and its problem instance. Deterministic in `params.seed`.
pub fn generate(params: &GenParams) -> Result<(Scene, ProblemInstance), ScenarioError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (h, w, ext) = (params.height, params.width, params.extent_m);

    let hvn = [ext[0] / 2.0, ext[1] / 2.0, params.hvn_height_m];
    let uniform = |rng: &mut ChaCha8Rng| [rng.gen_range(0.0..ext[0]), rng.gen_range(0.0..ext[1])];

    let objects: Vec<[f64; 2]> = (0..params.n_objects).map(|_| uniform(&mut rng)).collect();
    let occluders: Vec<Occluder> = (0..params.n_occluders)
        .map(|_| Occluder {
            center: uniform(&mut rng),
            half_size: [params.occluder_size_m[0] / 2.0, params.occluder_size_m[1] / 2.0],
        })
        .collect();

    let q_hvn = bump_map(
        ext,
        h,
        w,
        &objects,
        params.object_sigma_m,
        params.noise_amplitude,
        &mut rng,
    )?;
    let compressed = bump_map(
        ext,
        h,
        w,
        &objects,
        params.object_sigma_m,
        params.noise_amplitude,
        &mut rng,
    )?;
    let info = informativeness(&compressed, params.window, params.eta)?;

    let mut users = Vec::with_capacity(params.n_users);
    let mut moi = Vec::with_capacity(params.n_users);
    let mut snr = Vec::with_capacity(params.n_users);
    for _ in 0..params.n_users {
        let p = uniform(&mut rng);
        let heading = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let roi_center = [p[0] + heading * params.roi_ahead_m, p[1]];
        let roi = GridMap::from_fn(h, w, |i, j| {
            let c = cell_center(ext, h, w, i, j);
            let inside = (c[0] - roi_center[0]).abs() <= params.roi_half_m
                && (c[1] - roi_center[1]).abs() <= params.roi_half_m;
            if inside {
                1.0
            } else {
                0.0
            }
        })?;
        let q_user = GridMap::from_fn(h, w, |i, j| {
            let c = cell_center(ext, h, w, i, j);
            let hidden = occluders
                .iter()
                .any(|o| !o.contains(p) && !o.contains(c) && o.blocks(p, c));
            let q = q_hvn.get(i, j);
            if hidden {
                q * params.occlusion_keep
            } else {
                q
            }
        })?;
        let conf = confidence_map(&q_hvn, &q_user)?;
        let m = build_moi(&conf, &info, &roi)?;
        let position = [p[0], p[1], 0.0];
        let d = distance3(hvn, position);
        snr.push(params.radio.snr_db(d));
        moi.push(m.into_data());
        users.push(SceneUser {
            position,
            heading,
            roi,
            q_user,
        });
    }

    let scene = Scene {
        hvn_position: hvn,
        users,
        q_hvn,
        compressed_feature: compressed,
        extent_m: ext,
        height: h,
        width: w,
        radio: params.radio.clone(),
        occluders,
        objects,
    };
    let inst = ProblemInstance::new(InstanceData {
        n_users: params.n_users,
        n_grids: h * w,
        mcs_table: params.mcs_table.clone(),
        snr_db: snr,
        moi,
        grid_bytes: params.grid_bytes,
        bandwidth_hz: params.bandwidth_hz,
        budget_s: params.budget_s,
    })?;
    Ok((scene, inst))
}

/// Shape of [`random_instance`] draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n_users: usize,
    pub n_grids: usize,
    /// Prefix of the default MCS table to use, `1..=14`.
    pub n_rates: usize,
    /// Share of `(user, grid)` weights that are nonzero.
    pub density: f64,
    /// Budget as a fraction of sending every grid at the lowest rate.
    pub budget_fraction: (f64, f64),
}

impl RandomSpec {
    pub fn new(n_users: usize, n_grids: usize, n_rates: usize) -> Self {
        Self {
            n_users,
            n_grids,
            n_rates,
            density: 0.6,
            budget_fraction: (0.05, 0.6),
        }
    }
}

/// Unstructured random instance for property tests and benchmarks.
pub fn random_instance(spec: &RandomSpec, seed: u64) -> Result<ProblemInstance, ScenarioError> {
    if spec.n_users == 0 || spec.n_grids == 0 {
        return Err(ScenarioError::Params("n_users and n_grids must be positive".into()));
    }
    if spec.n_rates == 0 || spec.n_rates > DEFAULT_MCS.len() {
        return Err(ScenarioError::Params(format!(
            "n_rates must lie in 1..={}",
            DEFAULT_MCS.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = McsTable::from_pairs(&DEFAULT_MCS[..spec.n_rates]).expect("default prefix");
    let lo = table.threshold_db(0) - 3.0;
    let hi = table.threshold_db(spec.n_rates - 1) + 3.0;
    let snr: Vec<f64> = (0..spec.n_users).map(|_| rng.gen_range(lo..hi)).collect();
    let moi: Vec<Vec<f64>> = (0..spec.n_users)
        .map(|_| {
            (0..spec.n_grids)
                .map(|_| {
                    if rng.gen_bool(spec.density) {
                        rng.gen_range(0.0..1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let (grid_bytes, bandwidth_hz) = (1600.0, 100e6);
    let full = spec.n_grids as f64 * table.item_cost(0, bandwidth_hz, grid_bytes);
    let (f_lo, f_hi) = spec.budget_fraction;
    let budget_s = full * rng.gen_range(f_lo..=f_hi);
    Ok(ProblemInstance::new(InstanceData {
        n_users: spec.n_users,
        n_grids: spec.n_grids,
        mcs_table: table,
        snr_db: snr,
        moi,
        grid_bytes,
        bandwidth_hz,
        budget_s,
    })?)
}

/// Rates (bits/s/Hz at 10 MHz) and thresholds of the four-user example.
const FIG1_MCS: [(f64, f64); 5] = [(2.0, 0.0), (2.4, 3.0), (3.0, 6.0), (4.0, 9.0), (6.0, 12.0)];
const FIG1_BANDWIDTH_HZ: f64 = 10e6;
const FIG1_GRID_BYTES: f64 = 15_000.0;
const FIG1_BUDGET_S: f64 = 0.014;
const FIG1_TARGET: (f64, f64, f64) = (8.0, 6.0, 3.0);

fn fig1_candidate(rates: [usize; 4], grid1: [bool; 4]) -> ProblemInstance {
    let table = McsTable::from_pairs(&FIG1_MCS).expect("valid table");
    // grid 0: everyone; grids 2 and 3: the two strong users; grid 1: searched
    let moi: Vec<Vec<f64>> = (0..4)
        .map(|u| {
            let strong = u < 2;
            vec![
                1.0,
                if grid1[u] { 1.0 } else { 0.0 },
                if strong { 1.0 } else { 0.0 },
                if strong { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    ProblemInstance::new(InstanceData {
        n_users: 4,
        n_grids: 4,
        snr_db: rates.iter().map(|&m| table.threshold_db(m)).collect(),
        mcs_table: table,
        moi,
        grid_bytes: FIG1_GRID_BYTES,
        bandwidth_hz: FIG1_BANDWIDTH_HZ,
        budget_s: FIG1_BUDGET_S,
    })
    .expect("valid candidate")
}

/// Four users, four grids, 14 ms budget, 15 KB grids, weakest user at
/// 20 Mbit/s, unit weights.
///
/// The other users' rates and the interest set of one grid are found by an
/// exhaustive search in a fixed order: the first candidate where the exact
/// optimum is 8, broadcast reaches 6 and unicast 3 is returned. Only the
/// oracle and the two reference schemes steer the search.
pub fn fig1_instance() -> Result<ProblemInstance, ScenarioError> {
    use crate::baselines::{broadcast_solve, unicast_solve};
    use crate::oracle::exact_solve;

    let m = FIG1_MCS.len();
    // users ordered strong to weak: the strong pair outpaces user 2, which
    // outpaces the weakest user at the lowest rate
    for r0 in (0..m).rev() {
        for r1 in (0..=r0).rev() {
            for r2 in (1..r1).rev() {
                for mask in 1u8..16 {
                    let grid1 = [mask & 1 != 0, mask & 2 != 0, mask & 4 != 0, mask & 8 != 0];
                    let inst = fig1_candidate([r0, r1, r2, 0], grid1);
                    let opt = exact_solve(&inst).expect("tiny instance").opt_utility;
                    if opt != FIG1_TARGET.0 {
                        continue;
                    }
                    if broadcast_solve(&inst).utility == FIG1_TARGET.1
                        && unicast_solve(&inst).utility == FIG1_TARGET.2
                    {
                        return Ok(inst);
                    }
                }
            }
        }
    }
    Err(ScenarioError::NoFig1Match)
}
