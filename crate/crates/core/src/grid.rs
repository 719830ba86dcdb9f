//! Uniform periodic Cartesian mesh.
//!
//! Cells are indexed by `(ix, iy)` with linear index `iy * nx + ix`. Points on a
//! grid line belong to the cell on their right (resp. upper) side, so every
//! point of the plane maps to exactly one cell of the periodic extension.

use std::ops::{Add, Mul, Sub};

use crate::error::{Result, SldgError};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Rectangular, doubly periodic domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_max > x_min && y_max > y_min) || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(SldgError::InvalidArgument(format!(
                "domain [{x_min}, {x_max}] x [{y_min}, {y_max}] is empty or not finite"
            )));
        }
        Ok(Domain { x_min, x_max, y_min, y_max })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub ix: usize,
    pub iy: usize,
}

impl CellId {
    pub const fn new(ix: usize, iy: usize) -> Self {
        CellId { ix, iy }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub domain: Domain,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Mesh {
    pub fn new(domain: Domain, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(SldgError::InvalidArgument(format!(
                "mesh needs at least 2 cells per direction, got {nx} x {ny}"
            )));
        }
        Ok(Mesh {
            domain,
            nx,
            ny,
            dx: domain.width() / nx as f64,
            dy: domain.height() / ny as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn index(&self, c: CellId) -> usize {
        c.iy * self.nx + c.ix
    }

    pub fn cell(&self, index: usize) -> CellId {
        CellId::new(index % self.nx, index / self.nx)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.n_cells()).map(|j| self.cell(j))
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, c: CellId) -> Point {
        Point::new(
            self.domain.x_min + c.ix as f64 * self.dx,
            self.domain.y_min + c.iy as f64 * self.dy,
        )
    }

    pub fn cell_center(&self, c: CellId) -> Point {
        Point::new(
            self.domain.x_min + (c.ix as f64 + 0.5) * self.dx,
            self.domain.y_min + (c.iy as f64 + 0.5) * self.dy,
        )
    }

    /// Grid vertex `(i, j)`; indices may run past the domain (periodic images).
    pub fn vertex(&self, i: i64, j: i64) -> Point {
        Point::new(
            self.domain.x_min + i as f64 * self.dx,
            self.domain.y_min + j as f64 * self.dy,
        )
    }

    /// Wrap a point into `[x_min, x_max) x [y_min, y_max)`.
    pub fn wrap_point(&self, p: Point) -> Point {
        Point::new(
            wrap_coord(p.x, self.domain.x_min, self.domain.x_max),
            wrap_coord(p.y, self.domain.y_min, self.domain.y_max),
        )
    }

    /// Unwrapped column of `x` in the periodic extension (floor convention).
    pub fn column_of(&self, x: f64) -> i64 {
        ((x - self.domain.x_min) / self.dx).floor() as i64
    }

    /// Unwrapped row of `y` in the periodic extension (floor convention).
    pub fn row_of(&self, y: f64) -> i64 {
        ((y - self.domain.y_min) / self.dy).floor() as i64
    }

    /// Map an unwrapped `(column, row)` pair to the periodic cell.
    pub fn wrap_index(&self, col: i64, row: i64) -> CellId {
        CellId::new(
            col.rem_euclid(self.nx as i64) as usize,
            row.rem_euclid(self.ny as i64) as usize,
        )
    }

    pub fn locate_cell(&self, p: Point) -> CellId {
        let q = self.wrap_point(p);
        let ix = (self.column_of(q.x).max(0) as usize).min(self.nx - 1);
        let iy = (self.row_of(q.y).max(0) as usize).min(self.ny - 1);
        CellId::new(ix, iy)
    }

    /// Map a point in cell `c` (or in its closure) to reference coordinates in `[-1, 1]^2`.
    pub fn to_reference(&self, c: CellId, p: Point) -> (f64, f64) {
        let o = self.cell_center(c);
        (2.0 * (p.x - o.x) / self.dx, 2.0 * (p.y - o.y) / self.dy)
    }

    /// Reference coordinates of `p` relative to the unwrapped cell `(col, row)`.
    pub fn to_reference_unwrapped(&self, col: i64, row: i64, p: Point) -> (f64, f64) {
        let cx = self.domain.x_min + (col as f64 + 0.5) * self.dx;
        let cy = self.domain.y_min + (row as f64 + 0.5) * self.dy;
        (2.0 * (p.x - cx) / self.dx, 2.0 * (p.y - cy) / self.dy)
    }

    pub fn from_reference(&self, c: CellId, xi: f64, eta: f64) -> Point {
        let o = self.cell_center(c);
        Point::new(o.x + 0.5 * self.dx * xi, o.y + 0.5 * self.dy * eta)
    }
}

fn wrap_coord(v: f64, lo: f64, hi: f64) -> f64 {
    let len = hi - lo;
    if v >= lo && v < hi {
        return v;
    }
    let w = v - len * ((v - lo) / len).floor();
    if w >= hi || w < lo {
        lo
    } else {
        w
    }
}
