//! Ulam estimate of the diffused transfer operator.
//!
//! Every source box is sampled with a lattice of test points. Each test point
//! is smeared over a stencil approximating the uniform `epsilon`-ball, pushed
//! through the flow map, smeared again, and the final points are counted in
//! image boxes. Row `i` of `P` holds the fraction of box `i`'s samples landing
//! in each image box, so `P` is row stochastic by construction.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{wrap_periodic, FlowMap, FrameTime, FrameTransform, Point};
use crate::partition::{BoxGrid, Cell, ImageGrid};
use crate::sparse::{norm, CsrMatrix, LinearOperator};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilLayout {
    /// Origin plus concentric rings of `6k` points, ring `k` at radius
    /// `k epsilon / R`, each ring rotated by half its angular step relative
    /// to the previous one.
    #[default]
    Rings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    pub epsilon: f64,
    #[serde(default = "default_stencil_points")]
    pub points: usize,
    #[serde(default)]
    pub layout: StencilLayout,
}

fn default_stencil_points() -> usize {
    37
}

impl DiffusionSpec {
    /// No explicit diffusion; only the implicit smoothing of the box partition.
    pub fn none() -> Self {
        Self {
            epsilon: 0.0,
            points: default_stencil_points(),
            layout: StencilLayout::Rings,
        }
    }

    pub fn ball(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::none()
        }
    }

    /// Number of rings for a hexagonal-count stencil `1 + 3R(R+1)`.
    fn rings(&self) -> Result<usize> {
        let mut r = 0usize;
        while 1 + 3 * r * (r + 1) < self.points {
            r += 1;
        }
        if 1 + 3 * r * (r + 1) != self.points {
            return Err(Error::InvalidStencil(self.points));
        }
        Ok(r)
    }

    /// Sample offsets, uniformly weighted.
    pub fn stencil(&self) -> Result<Vec<Point>> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidDiffusion(self.epsilon));
        }
        if self.epsilon == 0.0 {
            return Ok(vec![Point::default()]);
        }
        let rings = self.rings()?;
        let mut out = Vec::with_capacity(self.points);
        out.push(Point::default());
        let mut phase = 0.0;
        for k in 1..=rings {
            let count = 6 * k;
            let step = std::f64::consts::TAU / count as f64;
            if k > 1 {
                phase += 0.5 * step;
            }
            let radius = self.epsilon * k as f64 / rings as f64;
            for j in 0..count {
                let (s, c) = (phase + step * j as f64).sin_cos();
                out.push(Point::new(radius * c, radius * s));
            }
        }
        Ok(out)
    }

    pub fn stencil_len(&self) -> usize {
        if self.epsilon == 0.0 {
            1
        } else {
            self.points
        }
    }
}

/// Source boxes that carry initial mass; row `r` of `P` is box `boxes[r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceBoxes {
    pub grid: BoxGrid,
    boxes: Vec<usize>,
}

impl SourceBoxes {
    pub fn all(grid: BoxGrid) -> Self {
        let boxes = (0..grid.len()).collect();
        Self { grid, boxes }
    }

    /// Boxes whose centres satisfy `keep`.
    pub fn filtered(grid: BoxGrid, keep: impl Fn(Point) -> bool) -> Self {
        let boxes = (0..grid.len()).filter(|&i| keep(grid.center(i))).collect();
        Self { grid, boxes }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn is_dense(&self) -> bool {
        self.boxes.len() == self.grid.len()
    }

    pub fn box_index(&self, row: usize) -> usize {
        self.boxes[row]
    }

    pub fn boxes(&self) -> &[usize] {
        &self.boxes
    }

    pub fn row_of_box(&self, index: usize) -> Option<usize> {
        self.boxes.binary_search(&index).ok()
    }

    pub fn cell(&self, row: usize) -> Cell {
        self.grid.cell(self.boxes[row])
    }

    pub fn cells(&self) -> Vec<Cell> {
        (0..self.len()).map(|r| self.cell(r)).collect()
    }

    pub fn center(&self, row: usize) -> Point {
        self.grid.center(self.boxes[row])
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|r| self.center(r)).collect()
    }

    /// Row of the box containing `p`, if that box is active.
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.grid.locate(p).and_then(|i| self.row_of_box(i))
    }
}

/// How smeared image points are reduced before they are binned.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum ImageFold {
    #[default]
    Open,
    /// Wrap `x` into `[origin.x, origin.x + period)` of the lattice.
    Periodic(f64),
    /// Periodicity of the original `x` coordinate seen through a frame change
    /// at the final time: `Phi_1 o wrap o Phi_1^{-1}`.
    Frame { frame: FrameTransform, period: f64 },
}

impl ImageFold {
    pub fn grid_period(&self) -> Option<f64> {
        match *self {
            Self::Periodic(period) => Some(period),
            _ => None,
        }
    }

    pub fn apply(&self, z: Point) -> Point {
        match *self {
            Self::Frame { frame, period } => {
                let w = frame.inverse_point(z, FrameTime::Final);
                frame.transform_point(
                    Point::new(wrap_periodic(w.x, period), w.y),
                    FrameTime::Final,
                )
            }
            _ => z,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSetup {
    pub n_test: usize,
    pub diffusion: DiffusionSpec,
    pub image_fold: ImageFold,
    /// Relative initial density per source row; uniform when absent.
    pub density: Option<Vec<f64>>,
}

/// `P`, the discrete initial measure `p` and the pushed-forward measure `q = p^T P`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrices {
    pub transition: CsrMatrix,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl TransferMatrices {
    /// Derives `q` from `P` and `p`.
    pub fn new(transition: CsrMatrix, p: Vec<f64>) -> Result<Self> {
        if p.len() != transition.nrows() {
            return Err(Error::Dimension {
                expected: transition.nrows(),
                got: p.len(),
            });
        }
        if p.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(
                "source weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!(
                "source weights sum to {total}, not 1"
            )));
        }
        let q = transition.tr_mul_vec(&p)?;
        Ok(Self { transition, p, q })
    }

    pub fn with_uniform(transition: CsrMatrix) -> Result<Self> {
        let n = transition.nrows();
        Self::new(transition, vec![1.0 / n as f64; n])
    }

    pub fn n_source(&self) -> usize {
        self.transition.nrows()
    }

    pub fn n_image(&self) -> usize {
        self.transition.ncols()
    }
}

/// A built operator together with the boxes indexing its rows and columns.
#[derive(Clone, Debug)]
pub struct Transition {
    pub source: SourceBoxes,
    pub image: ImageGrid,
    pub matrices: TransferMatrices,
}

/// Normalizes a density table into probability weights.
pub fn source_weights(n: usize, density: Option<&[f64]>) -> Result<Vec<f64>> {
    match density {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(d) => {
            if d.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: d.len(),
                });
            }
            if d.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidMeasure(
                    "density must be finite and nonnegative".into(),
                ));
            }
            let total: f64 = d.iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidMeasure("density integrates to zero".into()));
            }
            Ok(d.iter().map(|w| w / total).collect())
        }
    }
}

/// Assembles `P`, `p`, `q` for `flow` on the given source boxes.
///
/// Image boxes share the source lattice and are instantiated on first hit,
/// then numbered by lexicographic origin, so the result does not depend on
/// how the rows were scheduled.
pub fn build_transition<F: FlowMap>(
    source: &SourceBoxes,
    flow: &F,
    setup: &TransitionSetup,
) -> Result<Transition> {
    if setup.n_test == 0 {
        return Err(Error::NoTestPoints);
    }
    if source.is_empty() {
        return Err(Error::InvalidGrid("no active source boxes".into()));
    }
    let stencil = setup.diffusion.stencil()?;
    let lattice = source.grid.lattice();
    let locator = ImageGrid::from_cells(lattice, setup.image_fold.grid_period(), Vec::new());
    let per_row = (setup.n_test * stencil.len() * stencil.len()) as f64;

    // Rows are sampled a block at a time and stored against provisional image
    // ids, so only one block of uncompressed hits is alive at once.
    let mut provisional: HashMap<Cell, u32> = HashMap::new();
    let mut cells: Vec<Cell> = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    for start in (0..source.len()).step_by(ASSEMBLY_BLOCK) {
        let end = (start + ASSEMBLY_BLOCK).min(source.len());
        let rows: Vec<Vec<Hit>> = (start..end)
            .into_par_iter()
            .map(|row| sample_row(source, row, flow, setup, &stencil, &locator))
            .collect::<Result<_>>()?;
        if let Some(k) = rows.iter().position(Vec::is_empty) {
            return Err(Error::EmptyRow { row: start + k });
        }
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut block = Block {
            lens: Vec::with_capacity(rows.len()),
            ids: Vec::with_capacity(nnz),
            counts: Vec::with_capacity(nnz),
        };
        for entries in rows {
            block.lens.push(entries.len());
            for hit in entries {
                let next = u32::try_from(cells.len()).map_err(|_| {
                    Error::InvalidGrid("more image boxes than column indices can address".into())
                })?;
                let id = *provisional.entry(hit.cell()).or_insert_with(|| {
                    cells.push(hit.cell());
                    next
                });
                block.ids.push(id);
                block.counts.push(hit.count);
            }
        }
        blocks.push(block);
    }
    drop(provisional);

    let mut order: Vec<u32> = (0..cells.len() as u32).collect();
    order.sort_unstable_by_key(|&i| cells[i as usize]);
    let mut canonical = vec![0u32; cells.len()];
    for (rank, &i) in order.iter().enumerate() {
        canonical[i as usize] = rank as u32;
    }
    let all: Vec<Cell> = order.iter().map(|&i| cells[i as usize]).collect();
    drop(order);
    drop(cells);
    let image = ImageGrid::from_cells(lattice, setup.image_fold.grid_period(), all);

    let nnz: usize = blocks.iter().map(|b| b.ids.len()).sum();
    let mut indptr = Vec::with_capacity(source.len() + 1);
    indptr.push(0);
    let mut indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    let mut row: Vec<(u32, u32)> = Vec::new();
    for block in blocks {
        let mut at = 0;
        for len in block.lens {
            row.clear();
            row.extend((at..at + len).map(|e| (canonical[block.ids[e] as usize], block.counts[e])));
            row.sort_unstable();
            indices.extend(row.iter().map(|e| e.0));
            values.extend(row.iter().map(|e| e.1 as f64 / per_row));
            indptr.push(indices.len());
            at += len;
        }
    }
    let transition = CsrMatrix::from_parts(source.len(), image.len(), indptr, indices, values)?;
    let p = source_weights(source.len(), setup.density.as_deref())?;
    let matrices = TransferMatrices::new(transition, p)?;
    Ok(Transition {
        source: source.clone(),
        image,
        matrices,
    })
}

const ASSEMBLY_BLOCK: usize = 1024;

/// Sampled rows against provisional image ids.
struct Block {
    lens: Vec<usize>,
    ids: Vec<u32>,
    counts: Vec<u32>,
}

/// One `(cell, count)` entry of a row, stored compactly while rows are assembled.
#[derive(Clone, Copy)]
struct Hit {
    ix: i32,
    iy: i32,
    count: u32,
}

impl Hit {
    fn cell(&self) -> Cell {
        Cell {
            ix: self.ix.into(),
            iy: self.iy.into(),
        }
    }
}

fn sample_row<F: FlowMap>(
    source: &SourceBoxes,
    row: usize,
    flow: &F,
    setup: &TransitionSetup,
    stencil: &[Point],
    locator: &ImageGrid,
) -> Result<Vec<Hit>> {
    let box_id = source.box_index(row);
    let tests = source.grid.test_points(box_id, setup.n_test)?;
    let mut samples = Vec::with_capacity(tests.len() * stencil.len());
    for &t in &tests {
        samples.extend(stencil.iter().map(|&o| t + o));
    }
    flow.map_points(&mut samples)
        .map_err(|e| Error::BoxIntegration {
            box_id,
            source: Box::new(e),
        })?;
    let mut cells = Vec::with_capacity(samples.len() * stencil.len());
    for &z in &samples {
        cells.extend(
            stencil
                .iter()
                .map(|&o| locator.cell_of(setup.image_fold.apply(z + o))),
        );
    }
    cells.sort_unstable();
    let mut out: Vec<Hit> = Vec::new();
    for c in cells {
        match out.last_mut() {
            Some(last) if last.cell() == c => last.count += 1,
            _ => {
                let (Ok(ix), Ok(iy)) = (i32::try_from(c.ix), i32::try_from(c.iy)) else {
                    return Err(Error::InvalidGrid(format!(
                        "box {box_id} maps to lattice cell ({}, {}), beyond the supported range",
                        c.ix, c.iy
                    )));
                };
                out.push(Hit { ix, iy, count: 1 });
            }
        }
    }
    out.shrink_to_fit();
    Ok(out)
}

/// `M_ij = sqrt(p_i) P_ij / sqrt(q_j)`; its singular vectors realize the
/// relaxed coherence problem in Euclidean coordinates.
pub fn weighted_matrix(tm: &TransferMatrices) -> Result<CsrMatrix> {
    let view = WeightedView::new(tm)?;
    Ok(tm.transition.map_values(|r, c, v| view.entry(r, c, v)))
}

/// `M` computed entry by entry from `P`, `p` and `q` without storing it.
///
/// Products agree bit for bit with those of [`weighted_matrix`].
pub struct WeightedView<'a> {
    transition: &'a CsrMatrix,
    sp: Vec<f64>,
    sq: Vec<f64>,
}

impl<'a> WeightedView<'a> {
    pub fn new(tm: &'a TransferMatrices) -> Result<Self> {
        for (r, c, v) in tm.transition.triplets() {
            if v != 0.0 && tm.q[c] <= 0.0 && tm.p[r] > 0.0 {
                return Err(Error::ZeroColumnWeight { col: c });
            }
        }
        Ok(Self {
            transition: &tm.transition,
            sp: tm.p.iter().map(|w| w.sqrt()).collect(),
            sq: tm.q.iter().map(|w| w.sqrt()).collect(),
        })
    }

    fn entry(&self, r: usize, c: usize, v: f64) -> f64 {
        if self.sp[r] == 0.0 {
            0.0
        } else {
            self.sp[r] * v / self.sq[c]
        }
    }
}

impl LinearOperator for WeightedView<'_> {
    fn rows(&self) -> usize {
        self.transition.nrows()
    }

    fn cols(&self) -> usize {
        self.transition.ncols()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(1024).enumerate().for_each(|(chunk, out)| {
            let start = chunk * 1024;
            for (k, yr) in out.iter_mut().enumerate() {
                let r = start + k;
                *yr = self
                    .transition
                    .row(r)
                    .map(|(c, v)| self.entry(r, c, v) * x[c])
                    .sum();
            }
        });
    }

    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.transition.row(r) {
                y[c] += self.entry(r, c, v) * xr;
            }
        }
    }
}

/// `(L f)_j = sum_i p_i P_ij f_i / q_j`.
pub fn apply_l(tm: &TransferMatrices, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != tm.n_source() {
        return Err(Error::Dimension {
            expected: tm.n_source(),
            got: f.len(),
        });
    }
    let weighted: Vec<f64> = tm.p.iter().zip(f).map(|(p, f)| p * f).collect();
    let mut out = tm.transition.tr_mul_vec(&weighted)?;
    for (o, &q) in out.iter_mut().zip(&tm.q) {
        *o = if q > 0.0 { *o / q } else { 0.0 };
    }
    Ok(out)
}

/// `(L* g)_i = sum_j P_ij g_j`.
pub fn apply_l_dual(tm: &TransferMatrices, g: &[f64]) -> Result<Vec<f64>> {
    tm.transition.mul_vec(g)
}

pub fn inner(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(weights)
        .map(|((x, y), w)| x * y * w)
        .sum()
}

/// Measured defects of the operator identities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorInvariants {
    pub max_row_sum_error: f64,
    pub worst_row: usize,
    pub min_entry: f64,
    pub p_sum_error: f64,
    pub q_sum_error: f64,
    pub min_q: f64,
    /// `|| M sqrt(q) - sqrt(p) ||_2`
    pub right_residual: f64,
    /// `|| M^T sqrt(p) - sqrt(q) ||_2`
    pub left_residual: f64,
}

impl OperatorInvariants {
    pub fn measure(tm: &TransferMatrices, m: &CsrMatrix) -> Result<Self> {
        let sums = tm.transition.row_sums();
        let (worst_row, max_row_sum_error) =
            sums.iter()
                .map(|s| (s - 1.0).abs())
                .enumerate()
                .fold(
                    (0, 0.0f64),
                    |acc, (i, e)| if e > acc.1 { (i, e) } else { acc },
                );
        let min_entry = tm
            .transition
            .values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let sp: Vec<f64> = tm.p.iter().map(|w| w.sqrt()).collect();
        let sq: Vec<f64> = tm.q.iter().map(|w| w.sqrt()).collect();
        let right: Vec<f64> = m
            .mul_vec(&sq)?
            .iter()
            .zip(&sp)
            .map(|(a, b)| a - b)
            .collect();
        let left: Vec<f64> = m
            .tr_mul_vec(&sp)?
            .iter()
            .zip(&sq)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            max_row_sum_error,
            worst_row,
            min_entry,
            p_sum_error: (tm.p.iter().sum::<f64>() - 1.0).abs(),
            q_sum_error: (tm.q.iter().sum::<f64>() - 1.0).abs(),
            min_q: tm.q.iter().copied().fold(f64::INFINITY, f64::min),
            right_residual: norm(&right),
            left_residual: norm(&left),
        })
    }
}
