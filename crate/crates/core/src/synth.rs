//! Deterministic synthetic microscopy scenes.
//!
//! Six parametric cell archetypes (distinct morphology, texture and tint per
//! type) are placed on a noisy background either well separated or in
//! touching/overlapping clusters. Every scene comes with its binary mask and
//! per-instance ground truth, and is a pure function of its spec, so the
//! same seed always reproduces the same bytes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::boxes::BoundingBox;
use crate::components::bounding_box;
use crate::math;
use crate::raster::{BinaryMask, Raster};
use crate::rng::{mix, Rng, SplitMix64};
use crate::taxonomy::{CellType, LabelSet};

/// Fraction of an instance footprint that must fall inside a patch box for
/// the instance's type to join the patch label set.
pub const COVERAGE_FRACTION: f64 = 0.3;

const BACKGROUND: [u8; 3] = [226, 223, 219];
const PLACEMENT_ATTEMPTS: usize = 400;
/// Probability that a cell of a mixed-mode scene stands alone; the rest
/// cluster together. Mirrors the 1080:1389 single:multi patch balance.
const MIXED_SINGLE_PROB: f64 = 1080.0 / 2469.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthError {
    BadSpec(String),
    /// Cells could not be placed within the attempt budget.
    PlacementFailed,
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::BadSpec(msg) => write!(f, "bad scene spec: {msg}"),
            SynthError::PlacementFailed => f.write_str("placement failed"),
        }
    }
}

impl core::error::Error for SynthError {}

/// How instances of one scene may interact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapMode {
    /// Pairwise footprints are disjoint with a guard gap.
    Separated,
    /// All cells form one chain-connected cluster with boundary contact.
    Touching,
    /// All cells form one cluster with substantial footprint overlap.
    Overlapping,
    /// Random split into singles plus one cluster.
    Mixed,
}

impl OverlapMode {
    pub fn name(self) -> &'static str {
        match self {
            OverlapMode::Separated => "separated",
            OverlapMode::Touching => "touching",
            OverlapMode::Overlapping => "overlapping",
            OverlapMode::Mixed => "mixed",
        }
    }

    pub fn from_name(name: &str) -> Option<OverlapMode> {
        [
            OverlapMode::Separated,
            OverlapMode::Touching,
            OverlapMode::Overlapping,
            OverlapMode::Mixed,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }
}

/// Full description of one scene to synthesize.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    /// Inclusive range of cell counts; the count is drawn from the seed.
    pub cell_count: (u32, u32),
    pub overlap_mode: OverlapMode,
    /// Per-type draw probabilities in the fixed type order; must sum to 1.
    pub type_probs: [f64; 6],
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width < 64 || self.height < 64 {
            return Err(SynthError::BadSpec(String::from("scene must be at least 64×64")));
        }
        if self.cell_count.0 > self.cell_count.1 {
            return Err(SynthError::BadSpec(String::from("cell count range is inverted")));
        }
        let sum: f64 = self.type_probs.iter().sum();
        if math::abs(sum - 1.0) > 1e-9 {
            return Err(SynthError::BadSpec(String::from("type probabilities must sum to 1")));
        }
        if self.type_probs.iter().any(|&p| p < 0.0) {
            return Err(SynthError::BadSpec(String::from("negative type probability")));
        }
        Ok(())
    }
}

/// Geometry and texture parameters of one rendered cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    pub cx: f64,
    pub cy: f64,
    pub r_major: f64,
    pub r_minor: f64,
    pub rotation: f64,
    pub spike_amp: f64,
    pub spike_count: u32,
    pub spike_phase: f64,
    pub stipple_density: f64,
    pub stipple_coarse: bool,
    pub slit_band: bool,
    pub crescent_cut: bool,
    pub pallor: bool,
    pub tint: [u8; 3],
    pub texture_seed: u64,
}

/// One ground-truth cell instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CellInstance {
    pub cell_type: CellType,
    pub bbox: BoundingBox,
    pub shape: ShapeParams,
}

/// A rendered scene plus its complete ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub image: Raster,
    pub mask: BinaryMask,
    pub instances: Vec<CellInstance>,
}

/// Parameter ranges for one cell type.
#[derive(Debug, Clone)]
pub struct CellArchetype {
    pub cell_type: CellType,
    pub axis_ratio: (f64, f64),
    pub radius: (f64, f64),
    pub spike_amp: (f64, f64),
    pub spike_count: (u32, u32),
    pub stipple_density: (f64, f64),
    pub stipple_coarse: bool,
    pub slit_band: bool,
    pub crescent_cut: bool,
    pub pallor: bool,
    pub tint_base: [u8; 3],
}

/// The fixed archetype table. The tints, textures and boundary styles are
/// visual proxies chosen to make the six classes clearly separable.
pub fn archetype(cell_type: CellType) -> CellArchetype {
    match cell_type {
        CellType::OvalDisc => CellArchetype {
            cell_type,
            axis_ratio: (0.80, 0.95),
            radius: (13.0, 18.0),
            spike_amp: (0.0, 0.0),
            spike_count: (0, 0),
            stipple_density: (0.0, 0.0),
            stipple_coarse: false,
            slit_band: false,
            crescent_cut: false,
            pallor: true,
            tint_base: [232, 170, 160],
        },
        CellType::ElongatedSickle => CellArchetype {
            cell_type,
            axis_ratio: (0.46, 0.58),
            radius: (19.0, 24.0),
            spike_amp: (0.0, 0.0),
            spike_count: (0, 0),
            stipple_density: (0.0, 0.0),
            stipple_coarse: false,
            slit_band: false,
            crescent_cut: true,
            pallor: false,
            tint_base: [60, 16, 100],
        },
        CellType::Reticulocyte => CellArchetype {
            cell_type,
            axis_ratio: (0.85, 1.0),
            radius: (12.0, 16.0),
            spike_amp: (0.0, 0.0),
            spike_count: (0, 0),
            stipple_density: (0.32, 0.45),
            stipple_coarse: false,
            slit_band: false,
            crescent_cut: false,
            pallor: false,
            tint_base: [70, 160, 185],
        },
        CellType::Granular => CellArchetype {
            cell_type,
            axis_ratio: (0.80, 0.95),
            radius: (12.0, 17.0),
            spike_amp: (0.0, 0.0),
            spike_count: (0, 0),
            stipple_density: (0.14, 0.22),
            stipple_coarse: true,
            slit_band: false,
            crescent_cut: false,
            pallor: false,
            tint_base: [125, 148, 58],
        },
        CellType::Echinocyte => CellArchetype {
            cell_type,
            axis_ratio: (0.85, 1.0),
            radius: (11.0, 15.0),
            spike_amp: (0.18, 0.28),
            spike_count: (9, 14),
            stipple_density: (0.0, 0.0),
            stipple_coarse: false,
            slit_band: false,
            crescent_cut: false,
            pallor: false,
            tint_base: [240, 172, 36],
        },
        CellType::Stomatocyte => CellArchetype {
            cell_type,
            axis_ratio: (0.85, 1.0),
            radius: (12.0, 17.0),
            spike_amp: (0.0, 0.0),
            spike_count: (0, 0),
            stipple_density: (0.0, 0.0),
            stipple_coarse: false,
            slit_band: true,
            crescent_cut: false,
            pallor: false,
            tint_base: [222, 74, 118],
        },
    }
}

/// Deterministic per-pixel hash in [0, 1), used for texture stippling and
/// background noise.
fn pixel_hash(seed: u64, x: u32, y: u32) -> f64 {
    let mut sm = SplitMix64(seed ^ (((x as u64) << 32) | y as u64).wrapping_mul(0x9e3779b97f4a7c15));
    (sm.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn local_coords(shape: &ShapeParams, px: u32, py: u32) -> (f64, f64) {
    let dx = px as f64 + 0.5 - shape.cx;
    let dy = py as f64 + 0.5 - shape.cy;
    let (s, c) = (math::sin(shape.rotation), math::cos(shape.rotation));
    (dx * c + dy * s, -dx * s + dy * c)
}

/// Boundary modulation factor at normalized-space angle `phi`.
fn spike_factor(shape: &ShapeParams, phi: f64) -> f64 {
    if shape.spike_amp == 0.0 {
        1.0
    } else {
        1.0 + shape.spike_amp * math::cos(shape.spike_count as f64 * phi + shape.spike_phase)
    }
}

fn inside_cell(shape: &ShapeParams, px: u32, py: u32) -> bool {
    let (xl, yl) = local_coords(shape, px, py);
    let nx = xl / shape.r_major;
    let ny = yl / shape.r_minor;
    let rho = math::sqrt(nx * nx + ny * ny);
    if rho > 1.0 + shape.spike_amp {
        return false;
    }
    let phi = math::atan2(ny, nx);
    if rho > spike_factor(shape, phi) {
        return false;
    }
    if shape.crescent_cut {
        // Remove a shifted copy of the ellipse, leaving a curved sliver.
        let cut_y = (yl - 0.85 * shape.r_minor) / (0.80 * shape.r_minor);
        let cut_x = xl / (0.95 * shape.r_major);
        if cut_x * cut_x + cut_y * cut_y <= 1.0 {
            return false;
        }
    }
    true
}

/// Rasterizes the pixel footprint of a shape, clipped to `(width, height)`,
/// sorted row-major.
pub fn footprint(shape: &ShapeParams, width: u32, height: u32) -> Vec<(u32, u32)> {
    let reach = shape.r_major * (1.0 + shape.spike_amp) + 1.0;
    let x0 = math::fmax(math::floor(shape.cx - reach), 0.0) as u32;
    let y0 = math::fmax(math::floor(shape.cy - reach), 0.0) as u32;
    let x1 = math::fmin(math::floor(shape.cx + reach) + 1.0, (width - 1) as f64) as u32;
    let y1 = math::fmin(math::floor(shape.cy + reach) + 1.0, (height - 1) as f64) as u32;
    let mut pixels = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if inside_cell(shape, x, y) {
                pixels.push((x, y));
            }
        }
    }
    pixels
}

fn scale_channel(v: f64, factor: f64) -> f64 {
    math::clamp(v * factor, 0.0, 255.0)
}

/// Interior color of a cell at one of its footprint pixels.
fn cell_pixel_color(shape: &ShapeParams, px: u32, py: u32) -> [u8; 3] {
    let (xl, yl) = local_coords(shape, px, py);
    let nx = xl / shape.r_major;
    let ny = yl / shape.r_minor;
    let rho = math::sqrt(nx * nx + ny * ny);
    let phi = math::atan2(ny, nx);
    let rho_frac = rho / spike_factor(shape, phi);

    let mut factor = 1.0;
    // Darker rim roughly 2 px wide.
    if rho_frac > 1.0 - 2.2 / shape.r_major {
        factor *= 0.72;
    }
    if shape.pallor && rho_frac < 0.62 {
        factor *= 1.0 + 0.30 * (1.0 - rho_frac / 0.62);
    }
    if shape.stipple_density > 0.0 {
        let hit = if shape.stipple_coarse {
            pixel_hash(shape.texture_seed, px / 3, py / 3) < shape.stipple_density
        } else {
            pixel_hash(shape.texture_seed, px, py) < shape.stipple_density
        };
        if hit {
            factor *= if shape.stipple_coarse { 0.35 } else { 0.55 };
        }
    }
    if shape.slit_band
        && math::abs(yl) < 0.22 * shape.r_minor
        && math::abs(xl) < 0.68 * shape.r_major
    {
        factor *= 0.35;
    }
    // Mild interior grain so every cell carries edge energy.
    let grain = 0.96 + 0.08 * pixel_hash(shape.texture_seed ^ 0x5151, px, py);
    let mut out = [0u8; 3];
    for (o, &t) in out.iter_mut().zip(&shape.tint) {
        *o = scale_channel(t as f64 * grain, factor) as u8;
    }
    out
}

fn draw_cell_type(probs: &[f64; 6], rng: &mut Rng) -> CellType {
    let roll = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if roll < acc {
            return CellType::ALL[i];
        }
    }
    CellType::Stomatocyte
}

fn draw_shape(cell_type: CellType, rng: &mut Rng) -> (ShapeParams, CellType) {
    let arch = archetype(cell_type);
    let r_major = rng.uniform(arch.radius.0, arch.radius.1);
    let ratio = rng.uniform(arch.axis_ratio.0, arch.axis_ratio.1);
    let tint_jitter = |base: u8, rng: &mut Rng| -> u8 {
        math::clamp(base as f64 + rng.uniform(-6.0, 6.0), 0.0, 255.0) as u8
    };
    let tint = [
        tint_jitter(arch.tint_base[0], rng),
        tint_jitter(arch.tint_base[1], rng),
        tint_jitter(arch.tint_base[2], rng),
    ];
    let shape = ShapeParams {
        cx: 0.0,
        cy: 0.0,
        r_major,
        r_minor: r_major * ratio,
        rotation: rng.uniform(0.0, core::f64::consts::PI),
        spike_amp: rng.uniform(arch.spike_amp.0, arch.spike_amp.1),
        spike_count: if arch.spike_count.1 == 0 {
            0
        } else {
            rng.range_u32(arch.spike_count.0, arch.spike_count.1)
        },
        spike_phase: rng.uniform(0.0, 2.0 * core::f64::consts::PI),
        stipple_density: rng.uniform(arch.stipple_density.0, arch.stipple_density.1),
        stipple_coarse: arch.stipple_coarse,
        slit_band: arch.slit_band,
        crescent_cut: arch.crescent_cut,
        pallor: arch.pallor,
        tint,
        texture_seed: rng.next_u64(),
    };
    (shape, cell_type)
}

/// Ellipse boundary radius along world angle `psi` (no spike term).
fn radius_along(shape: &ShapeParams, psi: f64) -> f64 {
    let local = psi - shape.rotation;
    let (a, b) = (shape.r_major, shape.r_minor);
    let (c, s) = (math::cos(local), math::sin(local));
    a * b / math::sqrt(b * b * c * c + a * a * s * s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Contact {
    Touch,
    Overlap,
}

#[derive(Debug, Clone)]
enum GroupPlan {
    Single,
    Cluster(Contact, u32),
}

fn plan_groups(spec: &SceneSpec, count: u32, rng: &mut Rng) -> Vec<GroupPlan> {
    match spec.overlap_mode {
        OverlapMode::Separated => (0..count).map(|_| GroupPlan::Single).collect(),
        OverlapMode::Touching => {
            if count == 0 {
                vec![]
            } else if count == 1 {
                vec![GroupPlan::Single]
            } else {
                vec![GroupPlan::Cluster(Contact::Touch, count)]
            }
        }
        OverlapMode::Overlapping => {
            if count == 0 {
                vec![]
            } else if count == 1 {
                vec![GroupPlan::Single]
            } else {
                vec![GroupPlan::Cluster(Contact::Overlap, count)]
            }
        }
        OverlapMode::Mixed => {
            let mut singles = 0;
            let mut clustered = 0;
            for _ in 0..count {
                if rng.next_f64() < MIXED_SINGLE_PROB {
                    singles += 1;
                } else {
                    clustered += 1;
                }
            }
            if clustered == 1 {
                singles += 1;
                clustered = 0;
            }
            let mut groups: Vec<GroupPlan> = (0..singles).map(|_| GroupPlan::Single).collect();
            if clustered >= 2 {
                let contact = if rng.next_f64() < 0.5 { Contact::Touch } else { Contact::Overlap };
                groups.push(GroupPlan::Cluster(contact, clustered));
            }
            groups
        }
    }
}

struct Placement {
    shape: ShapeParams,
    cell_type: CellType,
    pixels: Vec<(u32, u32)>,
}

/// Checks a candidate footprint against the occupancy grid.
///
/// Every pixel's 8-neighborhood must be free of *other* groups (keeping a
/// one-pixel guard gap between groups); cluster members after the first must
/// additionally touch their own group.
fn admissible(
    pixels: &[(u32, u32)],
    grid: &[u16],
    width: u32,
    height: u32,
    group: u16,
    need_contact: bool,
) -> bool {
    if pixels.is_empty() {
        return false;
    }
    let mut contact = !need_contact;
    for &(x, y) in pixels {
        for ny in y.saturating_sub(1)..=(y + 1).min(height - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                let v = grid[ny as usize * width as usize + nx as usize];
                if v != 0 && v != group {
                    return false;
                }
                if v == group {
                    contact = true;
                }
            }
        }
    }
    contact
}

/// Generates one scene. Deterministic for a given spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<LabeledScene, SynthError> {
    spec.validate()?;
    let mut rng = Rng::new(mix(spec.seed, 0xce11));
    let (w, h) = (spec.width, spec.height);
    let count = if spec.cell_count.0 == spec.cell_count.1 {
        spec.cell_count.0
    } else {
        rng.range_u32(spec.cell_count.0, spec.cell_count.1)
    };
    let groups = plan_groups(spec, count, &mut rng);

    let mut grid = vec![0u16; w as usize * h as usize];
    let mut placements: Vec<Placement> = Vec::with_capacity(count as usize);

    for (gi, group) in groups.iter().enumerate() {
        let gid = gi as u16 + 1;
        let members = match group {
            GroupPlan::Single => 1,
            GroupPlan::Cluster(_, n) => *n,
        };
        let mut anchors: Vec<usize> = Vec::new();
        for mi in 0..members {
            let cell_type = draw_cell_type(&spec.type_probs, &mut rng);
            let (mut shape, cell_type) = draw_shape(cell_type, &mut rng);
            let reach = shape.r_major * (1.0 + shape.spike_amp);
            let mut placed = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                if mi == 0 {
                    shape.cx = rng.uniform(reach + 3.0, w as f64 - reach - 3.0);
                    shape.cy = rng.uniform(reach + 3.0, h as f64 - reach - 3.0);
                } else {
                    // Anchor on the first member: clusters stay compact, so
                    // multi-cell boxes carry less background.
                    let anchor = &placements[anchors[0]];
                    let psi = rng.uniform(0.0, 2.0 * core::f64::consts::PI);
                    let factor = match group {
                        GroupPlan::Cluster(Contact::Touch, _) => rng.uniform(0.82, 0.93),
                        GroupPlan::Cluster(Contact::Overlap, _) => rng.uniform(0.58, 0.78),
                        GroupPlan::Single => unreachable!("singles have one member"),
                    };
                    let dist = (radius_along(&anchor.shape, psi)
                        + radius_along(&shape, psi + core::f64::consts::PI))
                        * factor;
                    shape.cx = anchor.shape.cx + dist * math::cos(psi);
                    shape.cy = anchor.shape.cy + dist * math::sin(psi);
                    if shape.cx < reach + 3.0
                        || shape.cy < reach + 3.0
                        || shape.cx > w as f64 - reach - 3.0
                        || shape.cy > h as f64 - reach - 3.0
                    {
                        continue;
                    }
                }
                let pixels = footprint(&shape, w, h);
                if admissible(&pixels, &grid, w, h, gid, mi > 0) {
                    for &(x, y) in &pixels {
                        grid[y as usize * w as usize + x as usize] = gid;
                    }
                    anchors.push(placements.len());
                    placements.push(Placement { shape, cell_type, pixels });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(SynthError::PlacementFailed);
            }
        }
    }

    // Background with per-pixel noise.
    let noise_seed = mix(spec.seed, 0xba5e);
    let mut data = vec![0u8; w as usize * h as usize * 3];
    for y in 0..h {
        for x in 0..w {
            let n = (pixel_hash(noise_seed, x, y) - 0.5) * 10.0;
            let o = (y as usize * w as usize + x as usize) * 3;
            for c in 0..3 {
                data[o + c] = math::clamp(BACKGROUND[c] as f64 + n, 0.0, 255.0) as u8;
            }
        }
    }
    let mut image = Raster::new(w, h, 3, data).expect("scene dimensions are valid");
    let mut mask = BinaryMask::blank(w, h);

    // Paint large cells first so overlapped small cells stay visible on
    // top, the way thin cells sit over round ones.
    let mut paint_order: Vec<usize> = (0..placements.len()).collect();
    paint_order.sort_by_key(|&i| (usize::MAX - placements[i].pixels.len(), i));
    for &i in &paint_order {
        let p = &placements[i];
        for &(x, y) in &p.pixels {
            image.set_pixel(x, y, &cell_pixel_color(&p.shape, x, y));
            mask.set(x, y, true);
        }
    }
    let instances = placements
        .iter()
        .map(|p| CellInstance {
            cell_type: p.cell_type,
            bbox: bounding_box(&p.pixels).expect("footprint is non-empty"),
            shape: p.shape.clone(),
        })
        .collect();

    Ok(LabeledScene { image, mask, instances })
}

/// The set of cell types whose instances overlap `bbox` by more than
/// [`COVERAGE_FRACTION`] of their own footprint.
pub fn patch_labelset(scene: &LabeledScene, bbox: &BoundingBox) -> LabelSet {
    let mut labels = LabelSet::new();
    for inst in instances_covering(scene, bbox, COVERAGE_FRACTION) {
        labels.insert(inst.cell_type);
    }
    labels
}

/// Instances whose footprint overlaps `bbox` by more than `coverage` of the
/// footprint area.
pub fn instances_covering<'a>(
    scene: &'a LabeledScene,
    bbox: &'a BoundingBox,
    coverage: f64,
) -> impl Iterator<Item = &'a CellInstance> {
    let (w, h) = (scene.image.width(), scene.image.height());
    scene.instances.iter().filter(move |inst| {
        if inst.bbox.intersection(bbox).is_none() {
            return false;
        }
        let fp = footprint(&inst.shape, w, h);
        let inside = fp.iter().filter(|&&(x, y)| bbox.contains_point(x, y)).count();
        inside as f64 > coverage * fp.len() as f64
    })
}

/// Configuration for a full synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_scenes: u32,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub type_probs: [f64; 6],
    /// Cell counts of all-singles scenes.
    pub singles_per_scene: (u32, u32),
    /// Cell counts of one-cluster scenes.
    pub cluster_cells: (u32, u32),
    /// Target single:multi region ratio across the dataset.
    pub region_ratio_target: (u32, u32),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_scenes: 250,
            width: 384,
            height: 288,
            seed: 42,
            type_probs: [0.5, 0.1, 0.1, 0.1, 0.1, 0.1],
            singles_per_scene: (2, 4),
            cluster_cells: (2, 4),
            region_ratio_target: (1080, 1389),
        }
    }
}

/// Plans the scene specs of a dataset.
///
/// Scenes alternate between all-singles and one-cluster layouts under a
/// running quota, so the cumulative single:multi region counts track the
/// target ratio within one region at every prefix. Per-scene cell counts
/// are pinned into each spec, making the plan arithmetic exact.
pub fn plan_dataset(cfg: &DatasetConfig) -> Vec<SceneSpec> {
    let mut rng = Rng::new(mix(cfg.seed, 0x9147));
    let (target_s, target_m) = cfg.region_ratio_target;
    let mut singles: u64 = 0;
    let mut multis: u64 = 0;
    let mut specs = Vec::with_capacity(cfg.n_scenes as usize);
    for i in 0..cfg.n_scenes {
        let make_single_scene = singles * target_m as u64 <= multis * target_s as u64;
        let (mode, count) = if make_single_scene {
            let c = rng.range_u32(cfg.singles_per_scene.0, cfg.singles_per_scene.1);
            singles += c as u64;
            (OverlapMode::Separated, c)
        } else {
            let c = rng.range_u32(cfg.cluster_cells.0, cfg.cluster_cells.1);
            multis += 1;
            let mode = if rng.next_f64() < 0.5 {
                OverlapMode::Touching
            } else {
                OverlapMode::Overlapping
            };
            (mode, c)
        };
        specs.push(SceneSpec {
            width: cfg.width,
            height: cfg.height,
            cell_count: (count, count),
            overlap_mode: mode,
            type_probs: cfg.type_probs,
            seed: mix(cfg.seed, 0x5ce0 + i as u64),
        });
    }
    specs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::connected_components;

    fn spec(mode: OverlapMode, count: u32, seed: u64) -> SceneSpec {
        SceneSpec {
            width: 256,
            height: 192,
            cell_count: (count, count),
            overlap_mode: mode,
            type_probs: [0.5, 0.1, 0.1, 0.1, 0.1, 0.1],
            seed,
        }
    }

    #[test]
    fn zero_cells_gives_blank_ground_truth() {
        let scene = generate_scene(&spec(OverlapMode::Separated, 0, 1)).unwrap();
        assert!(scene.instances.is_empty());
        assert_eq!(scene.mask.count_true(), 0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let s = spec(OverlapMode::Mixed, 5, 7);
        let a = generate_scene(&s).unwrap();
        let b = generate_scene(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_scene(&spec(OverlapMode::Separated, 3, 1)).unwrap();
        let b = generate_scene(&spec(OverlapMode::Separated, 3, 2)).unwrap();
        assert_ne!(a.image, b.image);
    }

    #[test]
    fn separated_footprints_are_pairwise_disjoint() {
        let scene = generate_scene(&spec(OverlapMode::Separated, 3, 7)).unwrap();
        assert_eq!(scene.instances.len(), 3);
        let fps: Vec<Vec<(u32, u32)>> = scene
            .instances
            .iter()
            .map(|i| footprint(&i.shape, 256, 192))
            .collect();
        for a in 0..fps.len() {
            for b in a + 1..fps.len() {
                let overlap = fps[a].iter().filter(|p| fps[b].contains(p)).count();
                assert_eq!(overlap, 0, "instances {a} and {b} intersect");
            }
        }
    }

    #[test]
    fn separated_mask_has_one_component_per_cell() {
        for seed in 0..6 {
            let scene = generate_scene(&spec(OverlapMode::Separated, 4, seed)).unwrap();
            assert_eq!(connected_components(&scene.mask).len(), 4, "seed {seed}");
        }
    }

    #[test]
    fn cluster_mask_is_one_component() {
        for seed in 0..6 {
            for mode in [OverlapMode::Touching, OverlapMode::Overlapping] {
                let scene = generate_scene(&spec(mode, 3, seed)).unwrap();
                assert_eq!(
                    connected_components(&scene.mask).len(),
                    1,
                    "seed {seed} mode {mode:?}"
                );
            }
        }
    }

    #[test]
    fn mask_equals_union_of_footprints() {
        let scene = generate_scene(&spec(OverlapMode::Mixed, 5, 3)).unwrap();
        let mut expect = BinaryMask::blank(256, 192);
        for inst in &scene.instances {
            for (x, y) in footprint(&inst.shape, 256, 192) {
                expect.set(x, y, true);
            }
        }
        assert_eq!(scene.mask, expect);
    }

    #[test]
    fn instance_boxes_are_tight_and_inside() {
        let scene = generate_scene(&spec(OverlapMode::Mixed, 5, 11)).unwrap();
        for inst in &scene.instances {
            assert!(scene.image.contains_box(&inst.bbox));
            let fp = footprint(&inst.shape, 256, 192);
            assert_eq!(bounding_box(&fp).unwrap(), inst.bbox);
        }
    }

    #[test]
    fn patch_labelset_full_cover_and_background() {
        let scene = generate_scene(&spec(OverlapMode::Separated, 1, 5)).unwrap();
        let inst = &scene.instances[0];
        assert_eq!(
            patch_labelset(&scene, &inst.bbox),
            LabelSet::from_types(&[inst.cell_type])
        );
        // A corner far away from any 1-cell placement margin is background.
        let corner = BoundingBox::new(0, 0, 2, 2).unwrap();
        if inst.bbox.intersection(&corner).is_none() {
            assert!(patch_labelset(&scene, &corner).is_empty());
        }
    }

    #[test]
    fn overlapping_pair_yields_both_labels() {
        for seed in 0..8 {
            let s = spec(OverlapMode::Overlapping, 2, 100 + seed);
            let scene = generate_scene(&s).unwrap();
            let region = connected_components(&scene.mask);
            assert_eq!(region.len(), 1);
            let bbox = region[0].bbox();
            let want: LabelSet = scene.instances.iter().map(|i| i.cell_type).collect();
            assert_eq!(patch_labelset(&scene, &bbox), want, "seed {}", 100 + seed);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec(OverlapMode::Separated, 1, 0);
        s.type_probs = [0.5, 0.1, 0.1, 0.1, 0.1, 0.2];
        assert!(matches!(generate_scene(&s), Err(SynthError::BadSpec(_))));
        let mut s2 = spec(OverlapMode::Separated, 1, 0);
        s2.cell_count = (3, 2);
        assert!(s2.validate().is_err());
    }

    #[test]
    fn impossible_placement_fails_loudly() {
        let mut s = spec(OverlapMode::Separated, 24, 3);
        s.width = 64;
        s.height = 64;
        assert_eq!(generate_scene(&s), Err(SynthError::PlacementFailed));
    }

    #[test]
    fn dataset_plan_tracks_region_ratio() {
        let mut cfg = DatasetConfig::default();
        cfg.n_scenes = 247;
        let specs = plan_dataset(&cfg);
        assert_eq!(specs.len(), 247);
        let mut singles = 0u64;
        let mut multis = 0u64;
        for s in &specs {
            match s.overlap_mode {
                OverlapMode::Separated => singles += s.cell_count.0 as u64,
                _ => multis += 1,
            }
        }
        let got = singles as f64 / multis as f64;
        let want = 1080.0 / 1389.0;
        assert!(
            (got - want).abs() / want <= 0.05,
            "ratio {got} vs target {want}"
        );
    }

    #[test]
    fn dataset_plan_is_deterministic() {
        let cfg = DatasetConfig::default();
        assert_eq!(plan_dataset(&cfg), plan_dataset(&cfg));
    }
}
