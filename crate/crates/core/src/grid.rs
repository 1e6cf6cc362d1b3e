//! Dense, growable site-indexed storage and sup-norm clearance queries.

use crate::geometry::{Site, SiteSet};

/// A rectangular array over lattice sites that grows to cover every write.
/// Reads outside the covered rectangle return the default value.
#[derive(Debug, Clone)]
pub struct DenseGrid<T> {
    x0: i64,
    y0: i64,
    width: i64,
    height: i64,
    cells: Vec<T>,
}

impl<T: Copy + Default + PartialEq> DenseGrid<T> {
    pub fn new() -> Self {
        DenseGrid { x0: 0, y0: 0, width: 0, height: 0, cells: Vec::new() }
    }

    /// Grid pre-sized to cover `[x_min, x_max] × [y_min, y_max]`.
    pub fn covering(x_min: i64, x_max: i64, y_min: i64, y_max: i64) -> Self {
        let mut g = DenseGrid::new();
        g.reserve(x_min, x_max, y_min, y_max);
        g
    }

    #[inline]
    fn index(&self, x: i64, y: i64) -> Option<usize> {
        let dx = x - self.x0;
        let dy = y - self.y0;
        if dx < 0 || dy < 0 || dx >= self.width || dy >= self.height {
            return None;
        }
        Some((dy * self.width + dx) as usize)
    }

    #[inline]
    pub fn get(&self, p: Site) -> T {
        match self.index(p.x, p.y) {
            Some(i) => self.cells[i],
            None => T::default(),
        }
    }

    #[inline]
    pub fn get_xy(&self, x: i64, y: i64) -> T {
        match self.index(x, y) {
            Some(i) => self.cells[i],
            None => T::default(),
        }
    }

    pub fn set(&mut self, p: Site, value: T) {
        if self.index(p.x, p.y).is_none() {
            if value == T::default() {
                return;
            }
            self.grow_to(p.x, p.y);
        }
        let i = self.index(p.x, p.y).expect("grown");
        self.cells[i] = value;
    }

    pub fn update(&mut self, p: Site, f: impl FnOnce(T) -> T) {
        let v = f(self.get(p));
        self.set(p, v);
    }

    fn reserve(&mut self, x_min: i64, x_max: i64, y_min: i64, y_max: i64) {
        let (nx0, ny0) = (x_min.min(self.x0), y_min.min(self.y0));
        let (nx1, ny1) = if self.width == 0 {
            (x_max, y_max)
        } else {
            (x_max.max(self.x0 + self.width - 1), y_max.max(self.y0 + self.height - 1))
        };
        let (nx0, ny0) = if self.width == 0 { (x_min, y_min) } else { (nx0, ny0) };
        self.reshape(nx0, ny0, nx1 - nx0 + 1, ny1 - ny0 + 1);
    }

    fn grow_to(&mut self, x: i64, y: i64) {
        if self.width == 0 {
            self.reshape(x - 8, y - 8, 17, 17);
            return;
        }
        let mut x0 = self.x0;
        let mut y0 = self.y0;
        let mut x1 = self.x0 + self.width - 1;
        let mut y1 = self.y0 + self.height - 1;
        // Grow geometrically so repeated outward writes cost amortized O(1).
        let pad_x = self.width.max(16);
        let pad_y = self.height.max(16);
        if x < x0 {
            x0 = x.min(x0 - pad_x);
        }
        if x > x1 {
            x1 = x.max(x1 + pad_x);
        }
        if y < y0 {
            y0 = y.min(y0 - pad_y);
        }
        if y > y1 {
            y1 = y.max(y1 + pad_y);
        }
        self.reshape(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    }

    fn reshape(&mut self, x0: i64, y0: i64, width: i64, height: i64) {
        let mut cells = vec![T::default(); (width * height) as usize];
        for row in 0..self.height {
            for col in 0..self.width {
                let v = self.cells[(row * self.width + col) as usize];
                if v != T::default() {
                    let nx = self.x0 + col - x0;
                    let ny = self.y0 + row - y0;
                    cells[(ny * width + nx) as usize] = v;
                }
            }
        }
        self.x0 = x0;
        self.y0 = y0;
        self.width = width;
        self.height = height;
        self.cells = cells;
    }
}

impl<T: Copy + Default + PartialEq> Default for DenseGrid<T> {
    fn default() -> Self {
        DenseGrid::new()
    }
}

/// Answers "is any indexed site within sup-norm distance `k` of `p`?".
///
/// Queries are conservative: coarse blocks may report an obstruction that a
/// site-level scan would not, never the reverse.
pub trait Clearance {
    /// True only if no obstructing site lies within sup-norm distance `k` of `p`.
    fn clear(&self, p: Site, k: i64) -> bool;
}

/// Nothing is ever obstructed.
pub struct NoObstacles;

impl Clearance for NoObstacles {
    fn clear(&self, _p: Site, _k: i64) -> bool {
        true
    }
}

const LEVEL_SHIFTS: [u32; 3] = [2, 4, 6];

/// Multi-resolution occupancy index over a growing set of sites.
#[derive(Debug, Clone, Default)]
pub struct ClearanceIndex {
    fine: DenseGrid<bool>,
    coarse: [DenseGrid<u32>; 3],
    max_norm: f64,
    len: usize,
}

impl ClearanceIndex {
    pub fn new() -> Self {
        ClearanceIndex::default()
    }

    pub fn from_sites<'a>(sites: impl IntoIterator<Item = &'a Site>) -> Self {
        let mut idx = ClearanceIndex::new();
        for p in sites {
            idx.insert(*p);
        }
        idx
    }

    pub fn from_set(set: &SiteSet) -> Self {
        ClearanceIndex::from_sites(set.iter())
    }

    pub fn insert(&mut self, p: Site) {
        if self.fine.get(p) {
            return;
        }
        self.fine.set(p, true);
        for (level, shift) in LEVEL_SHIFTS.iter().enumerate() {
            let cell = Site::new(p.x >> shift, p.y >> shift);
            self.coarse[level].update(cell, |c| c + 1);
        }
        self.max_norm = self.max_norm.max(p.norm());
        self.len += 1;
    }

    pub fn contains(&self, p: Site) -> bool {
        self.fine.get(p)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }
}

impl Clearance for ClearanceIndex {
    fn clear(&self, p: Site, k: i64) -> bool {
        if k < 0 || self.len == 0 {
            return true;
        }
        // Every indexed site has norm <= max_norm; a box of sup-radius k stays
        // within Euclidean distance k·√2 of p.
        if p.norm() - (k as f64) * std::f64::consts::SQRT_2 > self.max_norm + 1e-9 {
            return true;
        }
        let (x0, x1, y0, y1) = (p.x - k, p.x + k, p.y - k, p.y + k);
        if k < 4 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if self.fine.get_xy(x, y) {
                        return false;
                    }
                }
            }
            return true;
        }
        let level = LEVEL_SHIFTS.iter().rposition(|&s| (1i64 << s) <= k).unwrap_or(0);
        let shift = LEVEL_SHIFTS[level];
        let grid = &self.coarse[level];
        for cy in (y0 >> shift)..=(y1 >> shift) {
            for cx in (x0 >> shift)..=(x1 >> shift) {
                if grid.get_xy(cx, cy) > 0 {
                    return false;
                }
            }
        }
        true
    }
}
