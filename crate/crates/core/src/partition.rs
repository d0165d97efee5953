//! Box partitions of the initial domain and of the reachable image domain.
//!
//! Both sides share one rectangular lattice of half-open boxes
//! `[x0 + ix w, x0 + (ix+1) w) x [y0 + iy h, y0 + (iy+1) h)`. The initial
//! grid is a dense `nx x ny` block of it; the image grid instantiates boxes on
//! first hit and is reindexed canonically by lexicographic box origin.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{wrap_periodic, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub const fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        Self {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x < self.xmax && p.y >= self.ymin && p.y < self.ymax
    }
}

/// Integer lattice coordinates of a box. Ordering is lexicographic by
/// origin: first `x`, then `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub ix: i64,
    pub iy: i64,
}

/// Box lattice anchored at `origin` with box sizes `width x height`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Point,
    pub width: f64,
    pub height: f64,
}

impl Lattice {
    pub fn cell_origin(&self, cell: Cell) -> Point {
        Point::new(
            self.origin.x + cell.ix as f64 * self.width,
            self.origin.y + cell.iy as f64 * self.height,
        )
    }

    pub fn cell_center(&self, cell: Cell) -> Point {
        let o = self.cell_origin(cell);
        Point::new(o.x + 0.5 * self.width, o.y + 0.5 * self.height)
    }

    /// Half-open lookup; ties on a shared edge go to the box whose origin is
    /// the edge itself.
    pub fn cell_of(&self, p: Point) -> Cell {
        Cell {
            ix: axis_index(p.x, self.origin.x, self.width),
            iy: axis_index(p.y, self.origin.y, self.height),
        }
    }
}

fn axis_index(v: f64, origin: f64, size: f64) -> i64 {
    let mut i = ((v - origin) / size).floor() as i64;
    // the division can land on the wrong side of an edge by one ulp
    if v < origin + i as f64 * size {
        i -= 1;
    } else if v >= origin + (i + 1) as f64 * size {
        i += 1;
    }
    i
}

/// Dense grid of `nx x ny` boxes covering a rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl BoxGrid {
    pub fn new(rect: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!(
                "box counts must be positive, got {nx} x {ny}"
            )));
        }
        let finite = [rect.xmin, rect.xmax, rect.ymin, rect.ymax]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(rect.xmax > rect.xmin) || !(rect.ymax > rect.ymin) {
            return Err(Error::InvalidGrid(format!("degenerate rectangle {rect:?}")));
        }
        Ok(Self { rect, nx, ny })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lattice(&self) -> Lattice {
        Lattice {
            origin: Point::new(self.rect.xmin, self.rect.ymin),
            width: (self.rect.xmax - self.rect.xmin) / self.nx as f64,
            height: (self.rect.ymax - self.rect.ymin) / self.ny as f64,
        }
    }

    /// Half-widths `(rx, ry)` of every box.
    pub fn radii(&self) -> (f64, f64) {
        let lat = self.lattice();
        (0.5 * lat.width, 0.5 * lat.height)
    }

    pub fn box_measure(&self) -> f64 {
        let lat = self.lattice();
        lat.width * lat.height
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell {
            ix: (index / self.ny) as i64,
            iy: (index % self.ny) as i64,
        }
    }

    pub fn index_of(&self, cell: Cell) -> Option<usize> {
        if cell.ix < 0 || cell.iy < 0 || cell.ix >= self.nx as i64 || cell.iy >= self.ny as i64 {
            return None;
        }
        Some(cell.ix as usize * self.ny + cell.iy as usize)
    }

    pub fn center(&self, index: usize) -> Point {
        self.lattice().cell_center(self.cell(index))
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Box containing `p`, or `None` outside the rectangle.
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.index_of(self.lattice().cell_of(p))
    }

    /// Deterministic interior sample points of box `index`.
    ///
    /// A perfect square `n = m^2` gives the regular `m x m` sublattice of
    /// sub-cell centres; other counts use a half-offset Hammersley set.
    pub fn test_points(&self, index: usize, n: usize) -> Result<Vec<Point>> {
        let offsets = unit_test_offsets(n)?;
        let lat = self.lattice();
        let o = lat.cell_origin(self.cell(index));
        Ok(offsets
            .into_iter()
            .map(|(u, v)| Point::new(o.x + u * lat.width, o.y + v * lat.height))
            .collect())
    }
}

/// Test point offsets as fractions of the box size, all strictly inside `(0, 1)^2`.
pub fn unit_test_offsets(n: usize) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::NoTestPoints);
    }
    let m = (n as f64).sqrt().round() as usize;
    if m * m == n {
        let step = 1.0 / m as f64;
        let mut out = Vec::with_capacity(n);
        for a in 0..m {
            for b in 0..m {
                out.push(((a as f64 + 0.5) * step, (b as f64 + 0.5) * step));
            }
        }
        return Ok(out);
    }
    let inv = 1.0 / n as f64;
    Ok((0..n)
        .map(|k| {
            (
                (k as f64 + 0.5) * inv,
                radical_inverse_base2(k as u64) + 0.5 * inv,
            )
        })
        .collect())
}

fn radical_inverse_base2(k: u64) -> f64 {
    k.reverse_bits() as f64 * (1.0 / 18446744073709551616.0)
}

/// Image-side grid on the same lattice, holding only boxes that were hit.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    pub lattice: Lattice,
    /// Period used to wrap `x` into `[origin.x, origin.x + period)`.
    pub x_period: Option<f64>,
    cells: Vec<Cell>,
    index: HashMap<Cell, usize>,
}

impl ImageGrid {
    /// Builds the grid from the set of instantiated cells, sorted canonically.
    pub fn from_cells(lattice: Lattice, x_period: Option<f64>, mut cells: Vec<Cell>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        let index = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self {
            lattice,
            x_period,
            cells,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn wrap(&self, p: Point) -> Point {
        match self.x_period {
            Some(period) => Point::new(
                self.lattice.origin.x + wrap_periodic(p.x - self.lattice.origin.x, period),
                p.y,
            ),
            None => p,
        }
    }

    /// Lattice cell of a point after periodic reduction.
    pub fn cell_of(&self, p: Point) -> Cell {
        self.lattice.cell_of(self.wrap(p))
    }

    pub fn locate(&self, p: Point) -> Option<usize> {
        self.index.get(&self.cell_of(p)).copied()
    }

    pub fn index_of(&self, cell: Cell) -> Option<usize> {
        self.index.get(&cell).copied()
    }

    pub fn center(&self, index: usize) -> Point {
        self.lattice.cell_center(self.cells[index])
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|j| self.center(j)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stratospheric_grid_dimensions() {
        let grid = BoxGrid::new(Rect::new(0.0, 20.0, -2.5, 2.5), 256, 128).unwrap();
        assert_eq!(grid.len(), 1 << 15);
        let (rx, ry) = grid.radii();
        assert_eq!(rx, 0.0390625);
        assert_eq!(ry, 0.01953125);
        assert!((rx - 0.0391).abs() < 1e-4 && (ry - 0.0195).abs() < 1e-4);
        let total = grid.box_measure() * grid.len() as f64;
        assert!((total - grid.rect.area()).abs() <= 1e-12 * grid.rect.area());
    }

    #[test]
    fn single_box_and_direct_indexing() {
        let one = BoxGrid::new(Rect::new(0.0, 1.0, 0.0, 1.0), 1, 1).unwrap();
        assert_eq!(one.locate(Point::new(0.5, 0.5)), Some(0));
        let two = BoxGrid::new(Rect::new(0.0, 2.0, 0.0, 1.0), 2, 1).unwrap();
        assert_eq!(two.locate(Point::new(1.5, 0.5)), Some(1));
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(BoxGrid::new(Rect::new(0.0, 1.0, 0.0, 1.0), 0, 3).is_err());
        assert!(BoxGrid::new(Rect::new(1.0, 1.0, 0.0, 1.0), 2, 3).is_err());
        assert!(BoxGrid::new(Rect::new(0.0, 1.0, 2.0, 1.0), 2, 3).is_err());
    }

    #[test]
    fn edges_belong_to_right_hand_box() {
        let grid = BoxGrid::new(Rect::new(0.0, 20.0, -2.5, 2.5), 256, 128).unwrap();
        let lat = grid.lattice();
        for ix in 1..256 {
            let x = lat.origin.x + ix as f64 * lat.width;
            let i = grid.locate(Point::new(x, 0.01)).unwrap();
            assert_eq!(grid.cell(i).ix, ix as i64);
        }
        assert_eq!(grid.locate(Point::new(20.0, 0.0)), None);
        assert_eq!(grid.locate(Point::new(0.0, -2.5)), Some(0));
        assert_eq!(grid.locate(Point::new(-1e-12, 0.0)), None);
    }

    #[test]
    fn centers_locate_to_themselves() {
        let grid = BoxGrid::new(Rect::new(-1.0, 3.0, 0.5, 2.0), 17, 9).unwrap();
        for i in 0..grid.len() {
            assert_eq!(grid.locate(grid.center(i)), Some(i));
        }
    }

    #[test]
    fn uniform_occupancy_within_three_sigma() {
        let grid = BoxGrid::new(Rect::new(0.0, 2.0, 0.0, 1.0), 4, 4).unwrap();
        let n = 1_000_000usize;
        let mut counts = vec![0usize; grid.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..n {
            let p = Point::new(rng.random_range(0.0..2.0), rng.random_range(0.0..1.0));
            counts[grid.locate(p).unwrap()] += 1;
        }
        let prob = 1.0 / grid.len() as f64;
        let mean = n as f64 * prob;
        let sigma = (n as f64 * prob * (1.0 - prob)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sigma,
                "{c} vs {mean} +- {sigma}"
            );
        }
    }

    #[test]
    fn test_point_layouts() {
        let grid = BoxGrid::new(Rect::new(0.0, 2.0, 0.0, 1.0), 2, 1).unwrap();
        assert_eq!(grid.test_points(1, 1).unwrap(), vec![grid.center(1)]);
        let quarter = grid.test_points(0, 4).unwrap();
        assert_eq!(
            quarter,
            vec![
                Point::new(0.25, 0.25),
                Point::new(0.25, 0.75),
                Point::new(0.75, 0.25),
                Point::new(0.75, 0.75)
            ]
        );
        assert!(matches!(grid.test_points(0, 0), Err(Error::NoTestPoints)));
    }

    #[test]
    fn four_hundred_points_keep_clear_of_edges() {
        let grid = BoxGrid::new(Rect::new(0.0, 20.0, -2.5, 2.5), 256, 128).unwrap();
        let lat = grid.lattice();
        let pts = grid.test_points(777, 400).unwrap();
        assert_eq!(pts.len(), 400);
        let o = lat.cell_origin(grid.cell(777));
        let min_x = pts
            .iter()
            .map(|p| (p.x - o.x).min(o.x + lat.width - p.x))
            .fold(f64::MAX, f64::min);
        let min_y = pts
            .iter()
            .map(|p| (p.y - o.y).min(o.y + lat.height - p.y))
            .fold(f64::MAX, f64::min);
        assert!((min_x - lat.width / 40.0).abs() < 1e-12);
        assert!((min_y - lat.height / 40.0).abs() < 1e-12);
        assert!(pts.iter().all(|&p| grid.locate(p) == Some(777)));
    }

    #[test]
    fn non_square_counts_stay_inside() {
        for n in [2, 3, 5, 7, 10, 33] {
            let offs = unit_test_offsets(n).unwrap();
            assert_eq!(offs.len(), n);
            assert!(offs
                .iter()
                .all(|&(u, v)| u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn image_grid_is_canonical() {
        let lat = Lattice {
            origin: Point::new(0.0, 0.0),
            width: 1.0,
            height: 1.0,
        };
        let cells = vec![
            Cell { ix: 2, iy: 0 },
            Cell { ix: 0, iy: 5 },
            Cell { ix: 0, iy: -1 },
            Cell { ix: 2, iy: 0 },
        ];
        let g = ImageGrid::from_cells(lat, Some(3.0), cells);
        assert_eq!(
            g.cells(),
            &[
                Cell { ix: 0, iy: -1 },
                Cell { ix: 0, iy: 5 },
                Cell { ix: 2, iy: 0 }
            ]
        );
        assert_eq!(g.locate(Point::new(5.5, 0.5)), Some(2));
        assert_eq!(g.locate(Point::new(-0.5, 0.5)), Some(2));
        assert_eq!(g.locate(Point::new(1.5, 0.5)), None);
    }

    proptest! {
        #[test]
        fn every_point_lies_in_its_box(x in 0.0f64..20.0, y in -2.5f64..2.5) {
            let grid = BoxGrid::new(Rect::new(0.0, 20.0, -2.5, 2.5), 256, 128).unwrap();
            let p = Point::new(x, y);
            let i = grid.locate(p).unwrap();
            let lat = grid.lattice();
            let o = lat.cell_origin(grid.cell(i));
            prop_assert!(p.x >= o.x && p.x < o.x + lat.width + 1e-12);
            prop_assert!(p.y >= o.y && p.y < o.y + lat.height + 1e-12);
        }

        #[test]
        fn translation_preserves_indices(dx in -50i32..50, dy in -50i32..50, i in 0usize..60, k in 0usize..9) {
            let base = BoxGrid::new(Rect::new(0.0, 3.0, 0.0, 1.25), 12, 5).unwrap();
            let lat = base.lattice();
            let shift = Point::new(dx as f64 * 0.125, dy as f64 * 0.0625);
            let moved = BoxGrid::new(
                Rect::new(shift.x, 3.0 + shift.x, shift.y, 1.25 + shift.y), 12, 5).unwrap();
            let pts = moved.test_points(i, 9).unwrap();
            prop_assert_eq!(moved.locate(pts[k]), Some(i));
            prop_assert_eq!(base.locate(pts[k] - shift), Some(i));
            let _ = lat;
        }
    }
}
