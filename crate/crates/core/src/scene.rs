//! Scenes, boxes, and the two-level tiling they are processed under.
//!
//! A square scene splits into a grid of non-overlapping patches; each patch
//! splits further into overlapping subpatches laid out on a fixed stride.
//! Boxes are assigned to the patch containing their centroid (boundary ties
//! go to the lower index) and to every subpatch whose rectangle contains the
//! centroid, so a box in an overlap band legitimately appears in more than
//! one subpatch. Scenes can also be rendered to a small grayscale raster,
//! which is what the policy networks see.

use crate::error::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Axis-aligned box, center + extent, in scene pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class_id: u32,
    /// Detection confidence; ground-truth boxes carry `None`.
    pub score: Option<f64>,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, class_id: u32) -> Self {
        BBox { cx, cy, w, h, class_id, score: None }
    }

    pub fn with_score(cx: f64, cy: f64, w: f64, h: f64, class_id: u32, score: f64) -> Self {
        BBox { cx, cy, w, h, class_id, score: Some(score) }
    }

    pub fn rect(&self) -> Rect {
        Rect {
            x0: self.cx - self.w / 2.0,
            y0: self.cy - self.h / 2.0,
            x1: self.cx + self.w / 2.0,
            y1: self.cy + self.h / 2.0,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    fn validate(&self, scene_w: f64, scene_h: f64) -> Result<()> {
        if !(self.w > 0.0) || !(self.h > 0.0) {
            return Err(Error::Config(format!(
                "box extent must be positive, got {}x{}",
                self.w, self.h
            )));
        }
        let r = self.rect();
        if r.x1 <= 0.0 || r.y1 <= 0.0 || r.x0 >= scene_w || r.y0 >= scene_h {
            return Err(Error::Config(format!(
                "box centered at ({}, {}) lies outside the {scene_w}x{scene_h} scene",
                self.cx, self.cy
            )));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Config(format!("score {s} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        w * h
    }
}

/// A scene: dimensions plus ground-truth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub ground_truth: Vec<BBox>,
}

impl Scene {
    /// Checks dimensions and every ground-truth box against the invariants
    /// the rest of the pipeline assumes (positive extents, scene overlap).
    pub fn validate(&self, min_side: u32) -> Result<()> {
        if self.width < min_side || self.height < min_side {
            return Err(Error::Config(format!(
                "scene '{}' is {}x{}, smaller than the minimum side {min_side}",
                self.id, self.width, self.height
            )));
        }
        for b in &self.ground_truth {
            b.validate(self.width as f64, self.height as f64)?;
        }
        Ok(())
    }
}

/// Two-level tiling of a square scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub scene_side: u32,
    pub patch_size: u32,
    pub patches_per_side: u32,
    pub subpatch_size: u32,
    pub subpatch_overlap: u32,
}

impl GridLayout {
    /// Number of patches (decision slots at the coarse level).
    pub fn patch_count(&self) -> usize {
        (self.patches_per_side * self.patches_per_side) as usize
    }

    pub fn subpatch_stride(&self) -> u32 {
        self.subpatch_size - self.subpatch_overlap
    }

    pub fn subpatches_per_side(&self) -> u32 {
        (self.patch_size - self.subpatch_size) / self.subpatch_stride() + 1
    }

    /// Number of subpatches per patch (decision slots at the fine level).
    pub fn subpatch_count(&self) -> usize {
        (self.subpatches_per_side() * self.subpatches_per_side()) as usize
    }

    /// Total subpatch slots in the scene.
    pub fn total_subpatches(&self) -> usize {
        self.patch_count() * self.subpatch_count()
    }

    /// Patch rectangle in scene coordinates; patches are indexed row-major.
    pub fn patch_rect(&self, patch: usize) -> Result<Rect> {
        if patch >= self.patch_count() {
            return Err(Error::Argument(format!(
                "patch index {patch} out of range for {} patches",
                self.patch_count()
            )));
        }
        let per = self.patches_per_side as usize;
        let (row, col) = (patch / per, patch % per);
        let size = self.patch_size as f64;
        Ok(Rect {
            x0: col as f64 * size,
            y0: row as f64 * size,
            x1: (col + 1) as f64 * size,
            y1: (row + 1) as f64 * size,
        })
    }

    /// Subpatch rectangle in scene coordinates; subpatches are indexed
    /// row-major within their patch.
    pub fn subpatch_rect(&self, patch: usize, sub: usize) -> Result<Rect> {
        let patch_rect = self.patch_rect(patch)?;
        if sub >= self.subpatch_count() {
            return Err(Error::Argument(format!(
                "subpatch index {sub} out of range for {} subpatches",
                self.subpatch_count()
            )));
        }
        let per = self.subpatches_per_side() as usize;
        let (row, col) = (sub / per, sub % per);
        let stride = self.subpatch_stride() as f64;
        let size = self.subpatch_size as f64;
        Ok(Rect {
            x0: patch_rect.x0 + col as f64 * stride,
            y0: patch_rect.y0 + row as f64 * stride,
            x1: patch_rect.x0 + col as f64 * stride + size,
            y1: patch_rect.y0 + row as f64 * stride + size,
        })
    }
}

/// Validates the tiling geometry and returns the layout.
///
/// The patch grid must tile the scene exactly, and the subpatch stride
/// (size minus overlap) must step from the patch's left edge to its right
/// edge exactly, so the subpatch row covers the patch with no remainder.
pub fn build_grid(
    scene_side: u32,
    patch_size: u32,
    subpatch_size: u32,
    subpatch_overlap: u32,
) -> Result<GridLayout> {
    if patch_size == 0 || subpatch_size == 0 {
        return Err(Error::Config("patch and subpatch sizes must be positive".into()));
    }
    if !scene_side.is_multiple_of(patch_size) {
        return Err(Error::Config(format!(
            "scene side {scene_side} is not divisible by patch size {patch_size}"
        )));
    }
    if subpatch_size > patch_size {
        return Err(Error::Config(format!(
            "subpatch size {subpatch_size} exceeds patch size {patch_size}"
        )));
    }
    if subpatch_overlap >= subpatch_size {
        return Err(Error::Config(format!(
            "subpatch overlap {subpatch_overlap} must be smaller than subpatch size {subpatch_size}"
        )));
    }
    let stride = subpatch_size - subpatch_overlap;
    if !(patch_size - subpatch_size).is_multiple_of(stride) {
        return Err(Error::Config(format!(
            "subpatches of size {subpatch_size} with overlap {subpatch_overlap} \
             (stride {stride}) do not tile a patch of size {patch_size}"
        )));
    }
    Ok(GridLayout {
        scene_side,
        patch_size,
        patches_per_side: scene_side / patch_size,
        subpatch_size,
        subpatch_overlap,
    })
}

/// Ground-truth box indices grouped by the tile responsible for them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxAssignment {
    /// Per patch: indices into the scene's ground-truth list.
    pub per_patch: Vec<Vec<usize>>,
    /// Per patch, per subpatch: indices into the ground-truth list. A box
    /// whose centroid lies in an overlap band appears under every subpatch
    /// that contains it.
    pub per_subpatch: Vec<Vec<Vec<usize>>>,
}

impl BoxAssignment {
    /// Object count for a patch (the N_i weight in the accuracy reward).
    pub fn n_objects(&self, patch: usize) -> usize {
        self.per_patch[patch].len()
    }
}

/// Cell index along one axis for a coordinate, with exact-boundary ties
/// resolved toward the lower cell and out-of-range values clamped.
fn axis_cell(x: f64, cell: f64, cells: usize) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let q = x / cell;
    let f = libm::floor(q);
    let idx = if q == f { (f as usize).saturating_sub(1) } else { f as usize };
    idx.min(cells - 1)
}

/// Assigns every ground-truth box to its patch (by centroid) and to every
/// subpatch containing the centroid. Centroids of boxes that straddle the
/// scene border are clamped into the scene before assignment.
pub fn assign_boxes(scene: &Scene, grid: &GridLayout) -> Result<BoxAssignment> {
    if scene.width != grid.scene_side || scene.height != grid.scene_side {
        return Err(Error::Argument(format!(
            "scene '{}' is {}x{} but the grid expects a {} square",
            scene.id, scene.width, scene.height, grid.scene_side
        )));
    }
    scene.validate(grid.patch_size)?;

    let per_side = grid.patches_per_side as usize;
    let n_patches = grid.patch_count();
    let n_subs = grid.subpatch_count();
    let mut per_patch = vec![Vec::new(); n_patches];
    let mut per_subpatch = vec![vec![Vec::new(); n_subs]; n_patches];

    let side = grid.scene_side as f64;
    let patch_size = grid.patch_size as f64;
    for (idx, b) in scene.ground_truth.iter().enumerate() {
        let cx = b.cx.clamp(0.0, side);
        let cy = b.cy.clamp(0.0, side);
        let col = axis_cell(cx, patch_size, per_side);
        let row = axis_cell(cy, patch_size, per_side);
        let patch = row * per_side + col;
        per_patch[patch].push(idx);
        for (sub, slot) in per_subpatch[patch].iter_mut().enumerate() {
            let r = grid.subpatch_rect(patch, sub)?;
            if r.contains(cx, cy) {
                slot.push(idx);
            }
        }
    }
    Ok(BoxAssignment { per_patch, per_subpatch })
}

/// Grayscale observation, row-major, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterObservation {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl RasterObservation {
    pub fn zeros(width: usize, height: usize) -> Self {
        RasterObservation { width, height, pixels: vec![0.0; width * height] }
    }

    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Renders ground truth to a small grayscale raster.
///
/// Boxes are painted in list order with their class intensity; a later box
/// overwrites earlier paint wherever it covers a pixel, and pixels only
/// partially covered blend by coverage fraction, so edges stay smooth at
/// any output resolution. Classes must all have a configured intensity.
pub fn rasterize(
    scene: &Scene,
    out_w: usize,
    out_h: usize,
    class_intensity: &[(u32, f64)],
) -> Result<RasterObservation> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Argument("raster dimensions must be positive".into()));
    }
    for (_, v) in class_intensity {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Config(format!("class intensity {v} outside [0, 1]")));
        }
    }
    let lookup = |class_id: u32| -> Result<f64> {
        class_intensity
            .iter()
            .find(|(c, _)| *c == class_id)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Config(format!("no intensity configured for class {class_id}")))
    };

    let mut obs = RasterObservation::zeros(out_w, out_h);
    let cell_w = scene.width as f64 / out_w as f64;
    let cell_h = scene.height as f64 / out_h as f64;
    for b in &scene.ground_truth {
        let intensity = lookup(b.class_id)?;
        let r = b.rect();
        let bx0 = r.x0.max(0.0);
        let bx1 = r.x1.min(scene.width as f64);
        let by0 = r.y0.max(0.0);
        let by1 = r.y1.min(scene.height as f64);
        if bx1 <= bx0 || by1 <= by0 {
            continue;
        }
        let px0 = axis_floor(bx0, cell_w, out_w);
        let px1 = axis_ceil(bx1, cell_w, out_w);
        let py0 = axis_floor(by0, cell_h, out_h);
        let py1 = axis_ceil(by1, cell_h, out_h);
        for py in py0..py1 {
            let c0 = py as f64 * cell_h;
            let cov_y = ((by1.min(c0 + cell_h) - by0.max(c0)) / cell_h).clamp(0.0, 1.0);
            if cov_y <= 0.0 {
                continue;
            }
            for px in px0..px1 {
                let c0 = px as f64 * cell_w;
                let cov_x = ((bx1.min(c0 + cell_w) - bx0.max(c0)) / cell_w).clamp(0.0, 1.0);
                if cov_x <= 0.0 {
                    continue;
                }
                let cov = cov_x * cov_y;
                let p = &mut obs.pixels[py * out_w + px];
                *p = *p * (1.0 - cov) + intensity * cov;
            }
        }
    }
    Ok(obs)
}

fn axis_floor(x: f64, cell: f64, cells: usize) -> usize {
    (libm::floor(x / cell).max(0.0) as usize).min(cells)
}

fn axis_ceil(x: f64, cell: f64, cells: usize) -> usize {
    (libm::ceil(x / cell).max(0.0) as usize).min(cells)
}

/// Extracts the aligned block of a scene raster that covers one patch.
/// The raster dimensions must split evenly across the patch grid.
pub fn crop_observation(
    obs: &RasterObservation,
    grid: &GridLayout,
    patch: usize,
) -> Result<RasterObservation> {
    if patch >= grid.patch_count() {
        return Err(Error::Argument(format!(
            "patch index {patch} out of range for {} patches",
            grid.patch_count()
        )));
    }
    let per = grid.patches_per_side as usize;
    if !obs.width.is_multiple_of(per) || !obs.height.is_multiple_of(per) {
        return Err(Error::Argument(format!(
            "{}x{} raster does not split evenly into a {per}x{per} patch grid",
            obs.width, obs.height
        )));
    }
    let crop_w = obs.width / per;
    let crop_h = obs.height / per;
    let (row, col) = (patch / per, patch % per);
    let mut out = RasterObservation::zeros(crop_w, crop_h);
    for y in 0..crop_h {
        let src_y = row * crop_h + y;
        let src0 = src_y * obs.width + col * crop_w;
        out.pixels[y * crop_w..(y + 1) * crop_w]
            .copy_from_slice(&obs.pixels[src0..src0 + crop_w]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> GridLayout {
        build_grid(2400, 600, 320, 40).unwrap()
    }

    #[test]
    fn default_grid_has_sixteen_patches_of_four_subpatches() {
        let g = default_grid();
        assert_eq!(g.patch_count(), 16);
        assert_eq!(g.subpatch_count(), 4);
        assert_eq!(g.subpatch_stride(), 280);
        assert_eq!(g.total_subpatches(), 64);
    }

    #[test]
    fn grid_rejects_stride_that_misses_patch_edge() {
        let err = build_grid(2400, 600, 320, 30).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn grid_rejects_indivisible_scene() {
        assert!(build_grid(2500, 600, 320, 40).is_err());
        assert!(build_grid(2400, 600, 320, 320).is_err());
        assert!(build_grid(2400, 600, 700, 40).is_err());
    }

    #[test]
    fn patch_rects_partition_scene() {
        let g = default_grid();
        let total: f64 = (0..g.patch_count())
            .map(|i| g.patch_rect(i).unwrap().area())
            .sum();
        assert_eq!(total, 2400.0 * 2400.0);
        // Row-major: patch 1 sits right of patch 0.
        let r0 = g.patch_rect(0).unwrap();
        let r1 = g.patch_rect(1).unwrap();
        assert_eq!(r0.x1, r1.x0);
        assert_eq!(r0.y0, r1.y0);
    }

    #[test]
    fn subpatch_rects_stay_inside_patch_and_cover_it() {
        let g = default_grid();
        let patch = g.patch_rect(5).unwrap();
        let mut covered = 0.0;
        for sub in 0..g.subpatch_count() {
            let r = g.subpatch_rect(5, sub).unwrap();
            assert!(r.x0 >= patch.x0 && r.x1 <= patch.x1);
            assert!(r.y0 >= patch.y0 && r.y1 <= patch.y1);
            covered += r.intersection_area(&patch);
        }
        // Four 320-squares overlapping by 40 cover the 600-square with excess.
        assert!(covered >= patch.area());
    }

    #[test]
    fn boundary_centroid_goes_to_lower_patch() {
        let g = default_grid();
        let scene = Scene {
            id: "t".into(),
            width: 2400,
            height: 2400,
            ground_truth: alloc::vec![BBox::new(600.0, 10.0, 8.0, 8.0, 0)],
        };
        let a = assign_boxes(&scene, &g).unwrap();
        assert_eq!(a.per_patch[0], alloc::vec![0]);
        assert_eq!(a.n_objects(1), 0);
    }

    #[test]
    fn overlap_band_centroid_lands_in_both_subpatches() {
        let g = default_grid();
        // y = 290 lies in [0, 320] and in [280, 600].
        let scene = Scene {
            id: "t".into(),
            width: 2400,
            height: 2400,
            ground_truth: alloc::vec![BBox::new(100.0, 290.0, 10.0, 10.0, 0)],
        };
        let a = assign_boxes(&scene, &g).unwrap();
        assert_eq!(a.per_subpatch[0][0], alloc::vec![0]);
        assert_eq!(a.per_subpatch[0][2], alloc::vec![0]);
        assert!(a.per_subpatch[0][1].is_empty());
        assert!(a.per_subpatch[0][3].is_empty());
    }

    #[test]
    fn every_patch_box_lands_in_at_least_one_subpatch() {
        let g = default_grid();
        let mut rng = crate::rng::RngStream::new(99);
        let boxes: Vec<BBox> = (0..200)
            .map(|_| {
                BBox::new(rng.uniform(0.0, 2400.0), rng.uniform(0.0, 2400.0), 6.0, 6.0, 0)
            })
            .collect();
        let scene = Scene { id: "t".into(), width: 2400, height: 2400, ground_truth: boxes };
        let a = assign_boxes(&scene, &g).unwrap();
        let patch_total: usize = a.per_patch.iter().map(Vec::len).sum();
        assert_eq!(patch_total, 200);
        for p in 0..g.patch_count() {
            let mut seen: Vec<usize> = a.per_subpatch[p].iter().flatten().copied().collect();
            seen.sort_unstable();
            seen.dedup();
            let mut expect = a.per_patch[p].clone();
            expect.sort_unstable();
            assert_eq!(seen, expect, "patch {p}");
        }
    }

    #[test]
    fn empty_scene_rasterizes_to_zeros() {
        let scene = Scene { id: "t".into(), width: 2400, height: 2400, ground_truth: Vec::new() };
        let obs = rasterize(&scene, 64, 64, &[(0, 1.0)]).unwrap();
        assert!(obs.pixels.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn patch_sized_box_paints_exact_block() {
        // A 600-square centered on patch 0 covers exactly the 16x16 top-left
        // block of a 64x64 raster of a 2400-square scene.
        let scene = Scene {
            id: "t".into(),
            width: 2400,
            height: 2400,
            ground_truth: alloc::vec![BBox::new(300.0, 300.0, 600.0, 600.0, 1)],
        };
        let obs = rasterize(&scene, 64, 64, &[(1, 0.7)]).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let expect = if x < 16 && y < 16 { 0.7 } else { 0.0 };
                assert_eq!(obs.pixel(x, y), expect, "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn later_box_overwrites_earlier_paint() {
        let scene = Scene {
            id: "t".into(),
            width: 2400,
            height: 2400,
            ground_truth: alloc::vec![
                BBox::new(300.0, 300.0, 600.0, 600.0, 0),
                BBox::new(300.0, 300.0, 600.0, 600.0, 1),
            ],
        };
        let obs = rasterize(&scene, 64, 64, &[(0, 0.2), (1, 0.9)]).unwrap();
        assert_eq!(obs.pixel(0, 0), 0.9);
    }

    #[test]
    fn unknown_class_is_a_config_error() {
        let scene = Scene {
            id: "t".into(),
            width: 2400,
            height: 2400,
            ground_truth: alloc::vec![BBox::new(100.0, 100.0, 10.0, 10.0, 7)],
        };
        assert!(matches!(rasterize(&scene, 64, 64, &[(0, 1.0)]), Err(Error::Config(_))));
    }

    #[test]
    fn raster_values_stay_in_unit_range() {
        let mut rng = crate::rng::RngStream::new(4);
        let boxes: Vec<BBox> = (0..50)
            .map(|_| {
                BBox::new(
                    rng.uniform(0.0, 2400.0),
                    rng.uniform(0.0, 2400.0),
                    rng.uniform(5.0, 400.0),
                    rng.uniform(5.0, 400.0),
                    (rng.next_u64() % 2) as u32,
                )
            })
            .collect();
        let scene = Scene { id: "t".into(), width: 2400, height: 2400, ground_truth: boxes };
        let obs = rasterize(&scene, 64, 64, &[(0, 0.6), (1, 1.0)]).unwrap();
        assert!(obs.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn crop_extracts_row_major_block() {
        let g = default_grid();
        let mut obs = RasterObservation::zeros(64, 64);
        // Mark the patch-5 block (row 1, col 1): pixels [16..32) x [16..32).
        for y in 16..32 {
            for x in 16..32 {
                obs.pixels[y * 64 + x] = 0.5;
            }
        }
        let crop = crop_observation(&obs, &g, 5).unwrap();
        assert_eq!(crop.width, 16);
        assert_eq!(crop.height, 16);
        assert!(crop.pixels.iter().all(|p| *p == 0.5));
        let other = crop_observation(&obs, &g, 0).unwrap();
        assert!(other.pixels.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn crop_rejects_misaligned_raster() {
        let g = default_grid();
        let obs = RasterObservation::zeros(63, 63);
        assert!(matches!(crop_observation(&obs, &g, 0), Err(Error::Argument(_))));
        let obs = RasterObservation::zeros(64, 64);
        assert!(matches!(crop_observation(&obs, &g, 16), Err(Error::Argument(_))));
    }

    #[test]
    fn crop_matches_rasterizing_patch_content_directly() {
        // For boxes wholly inside one patch, cropping the scene raster agrees
        // with rasterizing that patch's content as its own small scene.
        let g = default_grid();
        let mut rng = crate::rng::RngStream::new(31);
        for patch in [0usize, 5, 10, 15] {
            let pr = g.patch_rect(patch).unwrap();
            let boxes: Vec<BBox> = (0..8)
                .map(|_| {
                    let w = rng.uniform(10.0, 80.0);
                    let h = rng.uniform(10.0, 80.0);
                    BBox::new(
                        rng.uniform(pr.x0 + w / 2.0, pr.x1 - w / 2.0),
                        rng.uniform(pr.y0 + h / 2.0, pr.y1 - h / 2.0),
                        w,
                        h,
                        0,
                    )
                })
                .collect();
            let scene =
                Scene { id: "t".into(), width: 2400, height: 2400, ground_truth: boxes.clone() };
            let obs = rasterize(&scene, 64, 64, &[(0, 0.8)]).unwrap();
            let crop = crop_observation(&obs, &g, patch).unwrap();

            let local: Vec<BBox> = boxes
                .iter()
                .map(|b| BBox::new(b.cx - pr.x0, b.cy - pr.y0, b.w, b.h, b.class_id))
                .collect();
            let sub_scene =
                Scene { id: "p".into(), width: 600, height: 600, ground_truth: local };
            let direct = rasterize(&sub_scene, 16, 16, &[(0, 0.8)]).unwrap();
            for (a, b) in crop.pixels.iter().zip(direct.pixels.iter()) {
                assert!((a - b).abs() < 1e-12, "patch {patch}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn scene_validation_rejects_degenerate_boxes() {
        let scene = Scene {
            id: "t".into(),
            width: 2400,
            height: 2400,
            ground_truth: alloc::vec![BBox::new(100.0, 100.0, 0.0, 10.0, 0)],
        };
        assert!(scene.validate(600).is_err());
        let scene = Scene {
            id: "t".into(),
            width: 2400,
            height: 2400,
            ground_truth: alloc::vec![BBox::new(5000.0, 100.0, 10.0, 10.0, 0)],
        };
        assert!(scene.validate(600).is_err());
    }
}
