//! Deterministic rendering of concept primitives.
//!
//! Geometry is defined in a 64x64 reference frame with pixel centers at
//! half-integer coordinates; other image sizes sample the same shapes by
//! mapping each pixel center back into the reference frame. No two
//! primitives share a pixel, so each concept owns its footprint.

use rand_distr::{Distribution, StandardNormal};

use super::{ConceptId, ConceptSet, Image};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const REFERENCE_SIDE: f64 = 64.0;
pub const MIN_SIDE: usize = 16;
pub const BACKGROUND_INTENSITY: u8 = 40;
pub const NODULE_RADIUS: f64 = 3.0;

/// Candidate nodule centers (reference frame); one is picked per seed.
pub const NODULE_SITES: [(f64, f64); 5] = [
    (8.5, 20.5),
    (20.5, 20.5),
    (32.5, 20.5),
    (44.5, 20.5),
    (56.5, 20.5),
];

fn in_disk(x: f64, y: f64, cx: f64, cy: f64, r: f64) -> bool {
    let (dx, dy) = (x - cx, y - cy);
    dx * dx + dy * dy <= r * r
}

/// Index into [`NODULE_SITES`] of the nodule location drawn for `seed`.
pub fn nodule_site_index(seed: u64) -> usize {
    let mut rng = SplitMix64::for_purpose(seed, "nodule-site");
    rng.below(NODULE_SITES.len() as u64) as usize
}

fn nodule_site(seed: u64) -> (f64, f64) {
    NODULE_SITES[nodule_site_index(seed)]
}

/// Intensity of the primitive covering the reference point, if any.
fn primitive_at(concept: ConceptId, x: f64, y: f64, nodule: (f64, f64)) -> Option<u8> {
    let s = REFERENCE_SIDE;
    let hit = match concept {
        ConceptId::RightLowerLobeOpacity => in_disk(x, y, 50.0, 42.0, 5.5),
        ConceptId::LeftLowerLobeOpacity => in_disk(x, y, 14.0, 42.0, 5.5),
        ConceptId::BilateralPerihilarOpacity => {
            in_disk(x, y, 20.0, 30.0, 4.5) || in_disk(x, y, 44.0, 30.0, 4.5)
        }
        ConceptId::IncreasedLungMarkings => {
            let in_row = [(3.0, 5.0), (8.0, 10.0), (13.0, 15.0)]
                .iter()
                .any(|&(lo, hi)| (lo..hi).contains(&y));
            let in_col = (4.0..28.0).contains(&x) || (36.0..60.0).contains(&x);
            in_row && in_col
        }
        ConceptId::ElevatedDiaphragm => (52.0..56.0).contains(&y) && (4.0..60.0).contains(&x),
        ConceptId::EnlargedCardiacSilhouette => {
            let (dx, dy) = ((x - 32.0) / 9.0, (y - 42.0) / 7.0);
            dx * dx + dy * dy <= 1.0
        }
        ConceptId::BluntedCostophrenicAngle => {
            let up = s - y;
            x + up <= 8.0 || (s - x) + up <= 8.0
        }
        ConceptId::PulmonaryNodule => in_disk(x, y, nodule.0, nodule.1, NODULE_RADIUS),
    };
    hit.then_some(match concept {
        ConceptId::PulmonaryNodule => 230,
        ConceptId::BilateralPerihilarOpacity => 180,
        ConceptId::EnlargedCardiacSilhouette => 175,
        _ => 170,
    })
}

fn check_size(width: usize, height: usize) -> Result<()> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::Image(format!(
            "{width}x{height} is below the {MIN_SIDE}x{MIN_SIDE} minimum for planted primitives"
        )));
    }
    Ok(())
}

fn reference_coords(width: usize, height: usize, px: usize, py: usize) -> (f64, f64) {
    (
        (px as f64 + 0.5) * REFERENCE_SIDE / width as f64,
        (py as f64 + 0.5) * REFERENCE_SIDE / height as f64,
    )
}

/// Pixel mask (row-major) covered by `concept`'s primitive for this seed.
pub fn concept_footprint(
    concept: ConceptId,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<Vec<bool>> {
    check_size(width, height)?;
    let nodule = nodule_site(seed);
    let mut mask = Vec::with_capacity(width * height);
    for py in 0..height {
        for px in 0..width {
            let (x, y) = reference_coords(width, height, px, py);
            mask.push(primitive_at(concept, x, y, nodule).is_some());
        }
    }
    Ok(mask)
}

/// Render `concepts` onto a background of intensity 40 with additive
/// Gaussian noise, rounded and clamped to `[0, 255]`.
pub fn plant_concepts(
    width: usize,
    height: usize,
    concepts: ConceptSet,
    seed: u64,
    noise_sigma: f64,
) -> Result<Image> {
    check_size(width, height)?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let nodule = nodule_site(seed);
    let mut noise = SplitMix64::for_purpose(seed, "pixel-noise");
    let mut pixels = Vec::with_capacity(width * height);
    for py in 0..height {
        for px in 0..width {
            let (x, y) = reference_coords(width, height, px, py);
            let base = concepts
                .iter()
                .find_map(|c| primitive_at(c, x, y, nodule))
                .unwrap_or(BACKGROUND_INTENSITY);
            let value = if noise_sigma > 0.0 {
                let n: f64 = StandardNormal.sample(&mut noise);
                (base as f64 + noise_sigma * n).round().clamp(0.0, 255.0) as u8
            } else {
                base
            };
            pixels.push(value);
        }
    }
    Image::new(width, height, pixels)
}
