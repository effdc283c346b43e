//! Constructive verification that compressive encode/decode pairs with the
//! promised recovery property exist: explicit piecewise-constant `E`/`D`
//! built from grid-cube tessellations and Voronoi regions, checked by
//! Monte Carlo volume estimates.
//!
//! For each label `l` with open region `S_l ⊂ (0,1)^n`:
//!
//! * keep every open grid cube of side `1/k` fully inside `S_l`,
//! * pick one distinct anchor point per kept cube inside
//!   `A_l = (0,1)^m + 2l·𝟙` (a regular lattice prefix),
//! * `E` maps a cube's points to its anchor (0 elsewhere); `D` maps a
//!   point of `A_l` to the center of the cube whose anchor is strictly
//!   nearest (0 elsewhere).
//!
//! Then `D(E(x))` is exactly the cube center for every `x` in a kept cube,
//! so `‖D(E(x)) − x‖ ≤ √n/(2k) < γ` once the resolution check `k > √m/γ`
//! holds, and anchor sets of different labels never meet (the 2-shift
//! keeps them ≥ 1 apart in L∞).

use crate::error::{CaeError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;

/// An axis-aligned open box `(min_i, max_i)` per axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxN {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoxN {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(CaeError::invalid("box needs matching non-empty bounds"));
        }
        if min.iter().zip(&max).any(|(&a, &b)| !(a < b)) {
            return Err(CaeError::invalid(format!(
                "box must have positive extent per axis: {min:?}..{max:?}"
            )));
        }
        Ok(BoxN { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn volume(&self) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(&a, &b)| b - a)
            .product()
    }

    /// Strict interior membership.
    pub fn contains_open(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(&v, (&a, &b))| a < v && v < b)
    }

    /// Closure membership.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(&v, (&a, &b))| a <= v && v <= b)
    }

    /// Do two open boxes share interior volume?
    pub fn overlaps(&self, other: &BoxN) -> bool {
        self.dim() == other.dim()
            && self
                .min
                .iter()
                .zip(&self.max)
                .zip(other.min.iter().zip(&other.max))
                .all(|((&a1, &b1), (&a2, &b2))| a1 < b2 && a2 < b1)
    }
}

/// An open region: a disjoint union of boxes, or a membership predicate
/// sampled conservatively inside a bounding box.
pub enum Region {
    Boxes(Vec<BoxN>),
    Predicate {
        contains: Box<dyn Fn(&[f64]) -> bool + Send + Sync>,
        bounding: BoxN,
    },
}

impl std::fmt::Debug for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Region::Boxes(b) => f.debug_tuple("Boxes").field(b).finish(),
            Region::Predicate { bounding, .. } => {
                f.debug_struct("Predicate").field("bounding", bounding).finish()
            }
        }
    }
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Boxes(boxes) => boxes.first().map(|b| b.dim()).unwrap_or(0),
            Region::Predicate { bounding, .. } => bounding.dim(),
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |b: &BoxN| {
            b.min.iter().all(|&v| v >= 0.0) && b.max.iter().all(|&v| v <= 1.0)
        };
        match self {
            Region::Boxes(boxes) => {
                if boxes.is_empty() {
                    return Err(CaeError::invalid("region needs at least one box"));
                }
                let d = boxes[0].dim();
                for b in boxes {
                    if b.dim() != d {
                        return Err(CaeError::invalid("mixed box dimensions in one region"));
                    }
                    if !unit(b) {
                        return Err(CaeError::invalid(format!(
                            "region must sit inside the unit cube: {b:?}"
                        )));
                    }
                }
                for (i, a) in boxes.iter().enumerate() {
                    for b in &boxes[i + 1..] {
                        if a.overlaps(b) {
                            return Err(CaeError::invalid(format!(
                                "boxes of one region must be disjoint (sampling \
                                 weights assume it): {a:?} vs {b:?}"
                            )));
                        }
                    }
                }
                Ok(())
            }
            Region::Predicate { bounding, .. } => {
                if !unit(bounding) {
                    return Err(CaeError::invalid(
                        "predicate bounding box must sit inside the unit cube",
                    ));
                }
                Ok(())
            }
        }
    }

    /// True when every given point lies in the (closed, for boxes) region.
    fn holds_at(&self, x: &[f64], closed: bool) -> bool {
        match self {
            Region::Boxes(boxes) => boxes.iter().any(|b| {
                if closed {
                    b.contains_closed(x)
                } else {
                    b.contains_open(x)
                }
            }),
            Region::Predicate { contains, bounding } => {
                bounding.contains_closed(x) && contains(x)
            }
        }
    }

    /// Draws one uniform point of the region. Box unions pick a box by
    /// volume and sample it directly; predicates reject from the bounding
    /// box (with a cap, so a degenerate region errors out).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Region::Boxes(boxes) => {
                let total: f64 = boxes.iter().map(|b| b.volume()).sum();
                let mut pick = rng.gen_range(0.0..total);
                let mut chosen = boxes.last().expect("validated non-empty");
                for b in boxes {
                    let v = b.volume();
                    if pick < v {
                        chosen = b;
                        break;
                    }
                    pick -= v;
                }
                Ok(chosen
                    .min
                    .iter()
                    .zip(&chosen.max)
                    .map(|(&a, &b)| rng.gen_range(a..b))
                    .collect())
            }
            Region::Predicate { contains, bounding } => {
                for _ in 0..100_000 {
                    let x: Vec<f64> = bounding
                        .min
                        .iter()
                        .zip(&bounding.max)
                        .map(|(&a, &b)| rng.gen_range(a..b))
                        .collect();
                    if contains(&x) {
                        return Ok(x);
                    }
                }
                Err(CaeError::invalid(
                    "predicate region looks degenerate: no point accepted in 100000 draws",
                ))
            }
        }
    }
}

/// One open set to be given a label.
#[derive(Debug)]
pub struct OpenSetSpec {
    pub label: usize,
    pub region: Region,
}

/// One retained grid cube (side `1/k`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cube {
    pub index: Vec<usize>,
    pub center: Vec<f64>,
}

/// All grid cubes of side `1/k` fully contained in the region. Box unions
/// are tested at the `2^n` cube corners (exact for a single box, slightly
/// optimistic across touching boxes — the center is checked too when the
/// union has several boxes); predicates are sampled conservatively at the
/// corners and the center.
pub fn cube_tessellation(region: &Region, k: usize) -> Result<Vec<Cube>> {
    if k == 0 {
        return Err(CaeError::invalid("grid resolution k must be at least 1"));
    }
    region.validate()?;
    let n = region.dim();
    if !(1..=3).contains(&n) {
        return Err(CaeError::invalid(format!(
            "desk-scale construction supports 1 to 3 dimensions, got {n}"
        )));
    }
    let side = 1.0 / k as f64;
    let mut cubes = Vec::new();
    let mut index = vec![0usize; n];
    'grid: loop {
        let lo: Vec<f64> = index.iter().map(|&d| d as f64 * side).collect();
        let center: Vec<f64> = lo.iter().map(|&v| v + side / 2.0).collect();
        let mut inside = true;
        for corner_bits in 0..(1u32 << n) {
            let corner: Vec<f64> = (0..n)
                .map(|a| lo[a] + if (corner_bits >> a) & 1 == 1 { side } else { 0.0 })
                .collect();
            if !region.holds_at(&corner, true) {
                inside = false;
                break;
            }
        }
        let check_center = match region {
            Region::Boxes(boxes) => boxes.len() > 1,
            Region::Predicate { .. } => true,
        };
        if inside && check_center && !region.holds_at(&center, false) {
            inside = false;
        }
        if inside {
            cubes.push(Cube {
                index: index.clone(),
                center,
            });
        }
        // Advance the odometer.
        for a in 0..n {
            index[a] += 1;
            if index[a] < k {
                continue 'grid;
            }
            index[a] = 0;
        }
        break;
    }
    Ok(cubes)
}

/// `t` pairwise-distinct anchor points inside `(0,1)^m + offset·𝟙`: the
/// first `t` nodes (row-major) of a `q^m` regular lattice with spacing
/// `1/(q+1)`, `q` minimal with `q^m ≥ t`.
pub fn anchor_lattice(t: usize, m: usize, offset: f64) -> Result<Vec<Vec<f64>>> {
    if t == 0 || m == 0 {
        return Err(CaeError::invalid("anchor lattice needs t ≥ 1 and m ≥ 1"));
    }
    let mut q = 1usize;
    while q.pow(m as u32) < t {
        q += 1;
    }
    let spacing = 1.0 / (q + 1) as f64;
    let mut anchors = Vec::with_capacity(t);
    let mut node = vec![0usize; m];
    while anchors.len() < t {
        anchors.push(
            node.iter()
                .map(|&i| offset + (i + 1) as f64 * spacing)
                .collect(),
        );
        for a in 0..m {
            node[a] += 1;
            if node[a] < q {
                break;
            }
            node[a] = 0;
        }
    }
    Ok(anchors)
}

/// Index of the strictly-nearest anchor for `y` inside the convex set `a`
/// (an open box here); `None` outside `a` or on an exact-tie boundary.
pub fn voronoi_assign(anchors: &[Vec<f64>], y: &[f64], a: &BoxN) -> Option<usize> {
    if !a.contains_open(y) {
        return None;
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    let mut tied = false;
    for (i, p) in anchors.iter().enumerate() {
        let d: f64 = p
            .iter()
            .zip(y)
            .map(|(&av, &yv)| (av - yv) * (av - yv))
            .sum();
        if d < best_d {
            best_d = d;
            best = i;
            tied = false;
        } else if d == best_d {
            tied = true;
        }
    }
    if tied {
        None
    } else {
        Some(best)
    }
}

/// The per-label half of the construction.
#[derive(Debug)]
pub struct LabelConstruction {
    pub label: usize,
    pub cubes: Vec<Cube>,
    pub anchors: Vec<Vec<f64>>,
    /// `A_l = (0,1)^m + 2·label·𝟙`.
    pub a_box: BoxN,
    cube_lookup: HashMap<Vec<usize>, usize>,
}

/// The combined piecewise-constant encode/decode pair over every label.
#[derive(Debug)]
pub struct PiecewiseEd {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub labels: Vec<LabelConstruction>,
}

/// The resolution precondition `k > √m/γ` (which at these dimensions also
/// gives the recovery guarantee `√n/(2k) < γ`).
pub fn check_resolution(n: usize, m: usize, k: usize, gamma: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(CaeError::invalid("gamma must be positive"));
    }
    if (k as f64) <= (m as f64).sqrt() / gamma {
        return Err(CaeError::invalid(format!(
            "resolution too coarse: need k > sqrt(m)/gamma = {:.3}, got k = {k}",
            (m as f64).sqrt() / gamma
        )));
    }
    let half_diag = (n as f64).sqrt() / (2.0 * k as f64);
    if half_diag >= gamma {
        return Err(CaeError::invalid(format!(
            "cube half-diagonal {half_diag:.4} is not below gamma {gamma}"
        )));
    }
    Ok(())
}

/// Builds the encode/decode pair: tessellate every set, place one anchor
/// per kept cube in that label's shifted unit box. Overlapping sets (or a
/// set too small to keep any cube at this resolution) are rejected.
pub fn build_piecewise_ed(sets: &[OpenSetSpec], m: usize, k: usize) -> Result<PiecewiseEd> {
    if sets.is_empty() {
        return Err(CaeError::invalid("need at least one labeled set"));
    }
    if !(1..=3).contains(&m) {
        return Err(CaeError::invalid(format!(
            "desk-scale code dimension must be 1 to 3, got {m}"
        )));
    }
    let n = sets[0].region.dim();
    let mut labels = Vec::with_capacity(sets.len());
    let mut seen_labels = std::collections::HashSet::new();
    for set in sets {
        if set.region.dim() != n {
            return Err(CaeError::invalid("all sets must share one dimension"));
        }
        if !seen_labels.insert(set.label) {
            return Err(CaeError::invalid(format!("duplicate label {}", set.label)));
        }
        let cubes = cube_tessellation(&set.region, k)?;
        if cubes.is_empty() {
            return Err(CaeError::invalid(format!(
                "label {}: no grid cube of side 1/{k} fits inside the set",
                set.label
            )));
        }
        let anchors = anchor_lattice(cubes.len(), m, 2.0 * set.label as f64)?;
        let offset = 2.0 * set.label as f64;
        let a_box = BoxN::new(vec![offset; m], vec![offset + 1.0; m])?;
        let cube_lookup = cubes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.index.clone(), i))
            .collect();
        labels.push(LabelConstruction {
            label: set.label,
            cubes,
            anchors,
            a_box,
            cube_lookup,
        });
    }
    // Disjointness across labels, checked two ways: exact pairwise box
    // overlap where available, and kept-cube collisions always.
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if let (Region::Boxes(ba), Region::Boxes(bb)) = (&a.region, &b.region) {
                for ba1 in ba {
                    for bb1 in bb {
                        if ba1.overlaps(bb1) {
                            return Err(CaeError::invalid(format!(
                                "sets {} and {} overlap",
                                a.label, b.label
                            )));
                        }
                    }
                }
            }
        }
    }
    let mut cube_owner: HashMap<&[usize], usize> = HashMap::new();
    for lc in &labels {
        for cube in &lc.cubes {
            if let Some(&other) = cube_owner.get(cube.index.as_slice()) {
                return Err(CaeError::invalid(format!(
                    "labels {other} and {} both keep grid cube {:?} — sets overlap",
                    lc.label, cube.index
                )));
            }
            cube_owner.insert(&cube.index, lc.label);
        }
    }
    Ok(PiecewiseEd { n, m, k, labels })
}

impl PiecewiseEd {
    /// `E(x)`: the anchor of the kept cube strictly containing `x`, as
    /// `(label, cube position, anchor)`; `None` encodes the zero value.
    pub fn encode(&self, x: &[f64]) -> Option<(usize, usize, &[f64])> {
        if x.len() != self.n {
            return None;
        }
        let mut index = Vec::with_capacity(self.n);
        for &v in x {
            if !(0.0..1.0).contains(&v) {
                return None;
            }
            let scaled = v * self.k as f64;
            let d = scaled.floor();
            if scaled == d {
                return None; // on a grid plane: inside no open cube
            }
            index.push(d as usize);
        }
        for lc in &self.labels {
            if let Some(&pos) = lc.cube_lookup.get(&index) {
                return Some((lc.label, pos, &lc.anchors[pos]));
            }
        }
        None
    }

    /// `D(y)`: the center of the cube whose anchor is strictly nearest to
    /// `y` within its label's shifted box, as `(label, cube position,
    /// center)`; `None` encodes the zero value.
    pub fn decode(&self, y: &[f64]) -> Option<(usize, usize, &[f64])> {
        for lc in &self.labels {
            if let Some(pos) = voronoi_assign(&lc.anchors, y, &lc.a_box) {
                return Some((lc.label, pos, &lc.cubes[pos].center));
            }
        }
        None
    }
}

/// 95%-style Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Monte Carlo readings for one label.
#[derive(Debug, Clone, Serialize)]
pub struct LabelReport {
    pub label: usize,
    pub samples: usize,
    /// Fraction with `‖D(E(x)) − x‖ < γ`.
    pub recovered_fraction: f64,
    pub recovered_ci: (f64, f64),
    /// Fraction landing inside a kept cube (`E(x) ≠ 0`).
    pub encoded_fraction: f64,
    pub kept_cubes: usize,
    /// Exact volume of the kept cubes, `t/kⁿ`.
    pub kept_volume: f64,
}

/// The full Monte Carlo verification report.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub gamma: f64,
    pub epsilon: f64,
    pub total_samples: usize,
    /// Fraction of encoded samples whose anchor lies in a *different*
    /// label's target box (zero by construction).
    pub overlap_fraction: f64,
    pub overlap_ci: (f64, f64),
    /// Count of encoded samples whose decode failed to return the exact
    /// cube center (zero by construction).
    pub roundtrip_mismatches: usize,
    pub per_label: Vec<LabelReport>,
    /// True when every label's recovered fraction exceeds `1 − ε` and no
    /// overlap was seen.
    pub holds: bool,
}

/// Samples every set uniformly and measures recovery at radius `gamma`,
/// target-set overlap, and decode-roundtrip exactness.
pub fn verify_theorem(
    ed: &PiecewiseEd,
    sets: &[OpenSetSpec],
    epsilon: f64,
    gamma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<TheoremReport> {
    use rand::SeedableRng;
    if !(epsilon > 0.0 && epsilon < 1.0) || !(gamma > 0.0) {
        return Err(CaeError::invalid("need ε in (0,1) and γ > 0"));
    }
    if n_samples < 10_000 {
        return Err(CaeError::invalid(
            "Monte Carlo verification needs at least 10000 samples per set",
        ));
    }
    if sets.len() != ed.labels.len()
        || sets
            .iter()
            .zip(&ed.labels)
            .any(|(s, lc)| s.label != lc.label)
    {
        return Err(CaeError::invalid(
            "sets must match the construction label-for-label",
        ));
    }
    let mut per_label = Vec::with_capacity(sets.len());
    let mut overlaps = 0usize;
    let mut roundtrip_mismatches = 0usize;
    let mut total = 0usize;
    for (set, lc) in sets.iter().zip(&ed.labels) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(set.label as u64));
        let mut recovered = 0usize;
        let mut encoded = 0usize;
        for _ in 0..n_samples {
            let x = set.region.sample(&mut rng)?;
            let Some((enc_label, pos, anchor)) = ed.encode(&x) else {
                continue;
            };
            encoded += 1;
            for other in &ed.labels {
                if other.label != enc_label && other.a_box.contains_open(anchor) {
                    overlaps += 1;
                }
            }
            match ed.decode(anchor) {
                Some((dec_label, dec_pos, center))
                    if dec_label == enc_label && dec_pos == pos =>
                {
                    let dist: f64 = center
                        .iter()
                        .zip(&x)
                        .map(|(&c, &v)| (c - v) * (c - v))
                        .sum::<f64>()
                        .sqrt();
                    if dist < gamma {
                        recovered += 1;
                    }
                }
                _ => roundtrip_mismatches += 1,
            }
        }
        total += n_samples;
        per_label.push(LabelReport {
            label: set.label,
            samples: n_samples,
            recovered_fraction: recovered as f64 / n_samples as f64,
            recovered_ci: wilson_interval(recovered, n_samples, 1.96),
            encoded_fraction: encoded as f64 / n_samples as f64,
            kept_cubes: lc.cubes.len(),
            kept_volume: lc.cubes.len() as f64 / (ed.k as f64).powi(ed.n as i32),
        });
        let _ = lc;
    }
    let holds = overlaps == 0
        && roundtrip_mismatches == 0
        && per_label
            .iter()
            .all(|r| r.recovered_fraction > 1.0 - epsilon);
    Ok(TheoremReport {
        gamma,
        epsilon,
        total_samples: total,
        overlap_fraction: overlaps as f64 / total as f64,
        overlap_ci: wilson_interval(overlaps, total, 1.96),
        roundtrip_mismatches,
        per_label,
        holds,
    })
}
