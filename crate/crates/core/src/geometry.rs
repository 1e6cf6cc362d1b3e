//! Exact combinatorial model of the lattice wedge.
//!
//! A wedge is bounded by two rays from the origin whose tangents are rational
//! (or vertical), so every membership question is decided by integer cross
//! products. Floating point only appears in [`WedgeSpec::phi`], which feeds the
//! closed-form formulas elsewhere in the crate.

use std::cmp::Ordering;
use std::collections::btree_set;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest absolute coordinate accepted by the checked geometry entry points.
pub const COORD_LIMIT: i64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid slope {rise}/{run}: {reason}")]
    InvalidSlope { rise: i64, run: i64, reason: &'static str },
    #[error("cannot parse slope {0:?}: expected \"p/q\" with q >= 0")]
    SlopeSyntax(String),
    #[error("wedge boundary slopes must satisfy theta1 < theta2 (got {lower} and {upper})")]
    DegenerateWedge { lower: Slope, upper: Slope },
    #[error("wedge must contain the positive x-axis: need theta1 <= 0 <= theta2 (got {lower} and {upper})")]
    AxisExcluded { lower: Slope, upper: Slope },
    #[error("angle {0} is outside [-pi/2, pi/2]")]
    AngleOutOfRange(f64),
    #[error("site {0} is not a member of the wedge")]
    NotInWedge(Site),
    #[error("site {0} exceeds the coordinate limit 2^40")]
    CoordinateOverflow(Site),
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("ray radii must satisfy 0 <= r < L (got r = {r}, L = {l})")]
    InvalidRayRange { r: f64, l: f64 },
    #[error("line {line}: {message}")]
    SiteSetSyntax { line: usize, message: String },
}

/// A point of the integer lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    pub fn norm2(self) -> i128 {
        let (x, y) = (self.x as i128, self.y as i128);
        x * x + y * y
    }

    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    /// The four lattice neighbors in the order east, north, west, south.
    pub fn lattice_neighbors(self) -> [Site; 4] {
        let Site { x, y } = self;
        [
            Site::new(x + 1, y),
            Site::new(x, y + 1),
            Site::new(x - 1, y),
            Site::new(x, y - 1),
        ]
    }

    /// The eight sites at sup-norm distance one.
    pub fn king_neighbors(self) -> [Site; 8] {
        let Site { x, y } = self;
        [
            Site::new(x + 1, y),
            Site::new(x + 1, y + 1),
            Site::new(x, y + 1),
            Site::new(x - 1, y + 1),
            Site::new(x - 1, y),
            Site::new(x - 1, y - 1),
            Site::new(x, y - 1),
            Site::new(x + 1, y - 1),
        ]
    }

    pub fn l1_distance(self, other: Site) -> i64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn mirrored(self) -> Site {
        Site::new(self.x, -self.y)
    }

    fn in_range(self) -> bool {
        self.x.abs() <= COORD_LIMIT && self.y.abs() <= COORD_LIMIT
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl FromStr for Site {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (x, y) = s.split_once(',').ok_or_else(|| format!("expected \"x,y\", got {s:?}"))?;
        let x = x.trim().parse().map_err(|e| format!("bad x coordinate {x:?}: {e}"))?;
        let y = y.trim().parse().map_err(|e| format!("bad y coordinate {y:?}: {e}"))?;
        Ok(Site::new(x, y))
    }
}

/// Exact ray descriptor: the ray through `(run, rise)`, i.e. `tan θ = rise / run`.
///
/// `run == 0` encodes the vertical rays, with `rise = ±1` selecting `±π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slope {
    rise: i64,
    run: i64,
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Slope {
    pub fn new(rise: i64, run: i64) -> Result<Self, GeometryError> {
        if run < 0 {
            return Err(GeometryError::InvalidSlope { rise, run, reason: "denominator must be >= 0" });
        }
        if run == 0 && rise == 0 {
            return Err(GeometryError::InvalidSlope { rise, run, reason: "0/0 has no direction" });
        }
        if rise.abs() > COORD_LIMIT || run > COORD_LIMIT {
            return Err(GeometryError::InvalidSlope { rise, run, reason: "entries exceed 2^40" });
        }
        let g = gcd(rise, run);
        Ok(Slope { rise: rise / g, run: run / g })
    }

    pub const fn horizontal() -> Self {
        Slope { rise: 0, run: 1 }
    }

    pub const fn vertical_up() -> Self {
        Slope { rise: 1, run: 0 }
    }

    pub const fn vertical_down() -> Self {
        Slope { rise: -1, run: 0 }
    }

    pub fn rise(&self) -> i64 {
        self.rise
    }

    pub fn run(&self) -> i64 {
        self.run
    }

    pub fn is_vertical(&self) -> bool {
        self.run == 0
    }

    pub fn angle(&self) -> f64 {
        (self.rise as f64).atan2(self.run as f64)
    }

    /// Best rational approximation (continued-fraction convergent) of the ray at
    /// `angle`, accurate to `tolerance` radians.
    pub fn approximate(angle: f64, tolerance: f64) -> Result<Self, GeometryError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !angle.is_finite() || angle.abs() > half_pi + 1e-15 {
            return Err(GeometryError::AngleOutOfRange(angle));
        }
        if (angle - half_pi).abs() <= tolerance {
            return Ok(Slope::vertical_up());
        }
        if (angle + half_pi).abs() <= tolerance {
            return Ok(Slope::vertical_down());
        }
        let target = angle.tan();
        let sign = if target < 0.0 { -1 } else { 1 };
        let t = target.abs();
        // Convergents h/k of the continued fraction of t.
        let (mut h_prev, mut h) = (1i64, t.floor() as i64);
        let (mut k_prev, mut k) = (0i64, 1i64);
        let mut frac = t - t.floor();
        loop {
            let candidate = Slope::new(sign * h, k)?;
            if (candidate.angle() - angle).abs() <= tolerance || frac < 1e-15 {
                return Ok(candidate);
            }
            let inv = 1.0 / frac;
            let a = inv.floor() as i64;
            frac = inv - inv.floor();
            let h_next = a.checked_mul(h).and_then(|v| v.checked_add(h_prev));
            let k_next = a.checked_mul(k).and_then(|v| v.checked_add(k_prev));
            match (h_next, k_next) {
                (Some(hn), Some(kn)) if hn <= COORD_LIMIT && kn <= COORD_LIMIT => {
                    h_prev = h;
                    h = hn;
                    k_prev = k;
                    k = kn;
                }
                _ => return Ok(candidate),
            }
        }
    }

    /// Orders the direction of the nonzero vector `(x, y)` (with `x >= 0`)
    /// against this ray. Both angles live in `[-π/2, π/2]`.
    fn cmp_direction(&self, x: i64, y: i64) -> Ordering {
        debug_assert!(x >= 0 && (x, y) != (0, 0));
        match (x == 0, self.run == 0) {
            (true, true) => y.signum().cmp(&self.rise.signum()),
            (true, false) => {
                if y > 0 {
                    Ordering::Greater
                } else {
                    Ordering::Less
                }
            }
            (false, true) => {
                if self.rise > 0 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
            (false, false) => {
                let lhs = y as i128 * self.run as i128;
                let rhs = self.rise as i128 * x as i128;
                lhs.cmp(&rhs)
            }
        }
    }

    /// Smallest `y` with `(x, y)` on or above the ray, for `x > 0` and a non-vertical ray.
    fn ceil_at(&self, x: i64) -> i64 {
        div_ceil(self.rise as i128 * x as i128, self.run as i128) as i64
    }

    /// Largest `y` with `(x, y)` on or below the ray, for `x > 0` and a non-vertical ray.
    fn floor_at(&self, x: i64) -> i64 {
        div_floor(self.rise as i128 * x as i128, self.run as i128) as i64
    }
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

impl fmt::Display for Slope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.rise, self.run)
    }
}

impl FromStr for Slope {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryError::SlopeSyntax(s.to_string());
        let t = s.trim();
        let (p, q) = match t.split_once('/') {
            Some((p, q)) => (p.trim(), q.trim()),
            None => (t, "1"),
        };
        let rise: i64 = p.parse().map_err(|_| bad())?;
        let run: i64 = q.parse().map_err(|_| bad())?;
        if run < 0 {
            return Err(bad());
        }
        Slope::new(rise, run)
    }
}

/// Which discrete boundary ray of the wedge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "upper" | "u" => Ok(Side::Upper),
            "lower" | "l" => Ok(Side::Lower),
            other => Err(format!("unknown side {other:?} (expected upper|lower)")),
        }
    }
}

/// The wedge `W_{θ1,θ2}` with rational boundary rays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgeSpec {
    lower: Slope,
    upper: Slope,
    phi: f64,
}

impl WedgeSpec {
    pub fn new(lower: Slope, upper: Slope) -> Result<Self, GeometryError> {
        if upper.cmp_direction(lower.run, lower.rise) != Ordering::Less {
            return Err(GeometryError::DegenerateWedge { lower, upper });
        }
        // Without (1,0) the apex can be isolated and the wedge graph disconnected.
        if lower.rise > 0 || upper.rise < 0 {
            return Err(GeometryError::AxisExcluded { lower, upper });
        }
        let phi = upper.angle() - lower.angle();
        Ok(WedgeSpec { lower, upper, phi })
    }

    /// The right half-plane `W_{-π/2, π/2}`.
    pub fn half_plane() -> Self {
        WedgeSpec::new(Slope::vertical_down(), Slope::vertical_up()).expect("valid")
    }

    /// Wedge from floating angles, each approximated by a rational ray within `tolerance`.
    pub fn from_angles(theta1: f64, theta2: f64, tolerance: f64) -> Result<Self, GeometryError> {
        WedgeSpec::new(Slope::approximate(theta1, tolerance)?, Slope::approximate(theta2, tolerance)?)
    }

    pub fn lower(&self) -> Slope {
        self.lower
    }

    pub fn upper(&self) -> Slope {
        self.upper
    }

    pub fn theta1(&self) -> f64 {
        self.lower.angle()
    }

    pub fn theta2(&self) -> f64 {
        self.upper.angle()
    }

    /// Opening angle `θ2 − θ1`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Membership in `W_{θ1,θ2}`; coordinates must be within [`COORD_LIMIT`].
    pub fn contains(&self, p: Site) -> bool {
        if p == Site::ORIGIN {
            return true;
        }
        if p.x < 0 {
            return false;
        }
        self.lower.cmp_direction(p.x, p.y) != Ordering::Less
            && self.upper.cmp_direction(p.x, p.y) != Ordering::Greater
    }

    pub fn checked_contains(&self, p: Site) -> Result<bool, GeometryError> {
        if !p.in_range() {
            return Err(GeometryError::CoordinateOverflow(p));
        }
        Ok(self.contains(p))
    }

    /// Is the direction of `p` strictly counterclockwise of the upper ray?
    /// Points on the negative x-axis count as beyond both rays.
    pub fn strictly_above(&self, p: Site) -> bool {
        if p == Site::ORIGIN {
            return false;
        }
        if p.x < 0 {
            return p.y >= 0;
        }
        self.upper.cmp_direction(p.x, p.y) == Ordering::Greater
    }

    /// Is the direction of `p` strictly clockwise of the lower ray?
    pub fn strictly_below(&self, p: Site) -> bool {
        if p == Site::ORIGIN {
            return false;
        }
        if p.x < 0 {
            return p.y <= 0;
        }
        self.lower.cmp_direction(p.x, p.y) == Ordering::Less
    }

    /// Largest `k` such that every site within sup-norm distance `k` of `p` is a
    /// member; negative when `p` itself is outside.
    pub fn box_clearance(&self, p: Site) -> i64 {
        let (x, y) = (p.x as i128, p.y as i128);
        let lo = (self.lower.run as i128, self.lower.rise as i128);
        let hi = (self.upper.run as i128, self.upper.rise as i128);
        let below = (lo.0 * y - lo.1 * x).div_euclid(lo.0 + lo.1.abs());
        let above = (hi.1 * x - hi.0 * y).div_euclid(hi.0 + hi.1.abs());
        below.min(above).min(x) as i64
    }

    /// Bitmask over [`Site::lattice_neighbors`] of the neighbors lying in the wedge.
    pub fn neighbor_mask(&self, p: Site) -> u8 {
        let mut mask = 0u8;
        for (i, q) in p.lattice_neighbors().into_iter().enumerate() {
            if self.contains(q) {
                mask |= 1 << i;
            }
        }
        mask
    }

    pub fn neighbors(&self, p: Site) -> Result<Vec<Site>, GeometryError> {
        if !self.checked_contains(p)? {
            return Err(GeometryError::NotInWedge(p));
        }
        Ok(p.lattice_neighbors().into_iter().filter(|q| self.contains(*q)).collect())
    }

    pub fn degree(&self, p: Site) -> Result<usize, GeometryError> {
        Ok(self.neighbors(p)?.len())
    }

    /// Range of `y` values of wedge members in column `x`, ignoring any radius.
    /// `None` bounds mean unbounded in that direction.
    pub fn column(&self, x: i64) -> Option<(Option<i64>, Option<i64>)> {
        if x < 0 {
            return None;
        }
        if x == 0 {
            let lo = if self.lower == Slope::vertical_down() { None } else { Some(0) };
            let hi = if self.upper == Slope::vertical_up() { None } else { Some(0) };
            return Some((lo, hi));
        }
        let lo = if self.lower.is_vertical() { None } else { Some(self.lower.ceil_at(x)) };
        let hi = if self.upper.is_vertical() { None } else { Some(self.upper.floor_at(x)) };
        match (lo, hi) {
            (Some(l), Some(h)) if l > h => None,
            _ => Some((lo, hi)),
        }
    }

    /// Members of the column `x` intersected with `y_min..=y_max`.
    fn column_clamped(&self, x: i64, y_min: i64, y_max: i64) -> Option<(i64, i64)> {
        let (lo, hi) = self.column(x)?;
        let lo = lo.map_or(y_min, |l| l.max(y_min));
        let hi = hi.map_or(y_max, |h| h.min(y_max));
        (lo <= hi).then_some((lo, hi))
    }

    /// `W^R = W ∩ B_R` with `B_R = {x² + y² < R²}`.
    pub fn ball_sector(&self, radius: f64) -> Result<SiteSet, GeometryError> {
        check_radius(radius)?;
        let r2 = radius * radius;
        let reach = radius.ceil() as i64;
        let mut out = SiteSet::new();
        for x in 0..=reach {
            if (x * x) as f64 >= r2 {
                break;
            }
            let rest = r2 - (x * x) as f64;
            let ymax = rest.sqrt().ceil() as i64;
            if let Some((lo, hi)) = self.column_clamped(x, -ymax, ymax) {
                for y in lo..=hi {
                    if ((x * x + y * y) as f64) < r2 {
                        out.insert(Site::new(x, y));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Is `p` a member of `∂W^R`, the outer boundary of the ball sector?
    pub fn on_ring(&self, p: Site, radius: f64) -> bool {
        let r2 = radius * radius;
        if (p.norm2() as f64) < r2 || !self.contains(p) {
            return false;
        }
        p.lattice_neighbors()
            .into_iter()
            .any(|q| (q.norm2() as f64) < r2 && self.contains(q))
    }

    /// `∂W^R`, enumerated directly from the annulus `R <= |p| < R + 1`.
    pub fn ring(&self, radius: f64) -> Result<SiteSet, GeometryError> {
        check_radius(radius)?;
        let outer = radius + 1.0;
        let reach = outer.ceil() as i64;
        let mut out = SiteSet::new();
        for x in 0..=reach {
            let x2 = (x * x) as f64;
            if x2 >= outer * outer {
                break;
            }
            let ymax = (outer * outer - x2).sqrt().ceil() as i64;
            let ymin_abs = if x2 >= radius * radius { 0 } else { ((radius * radius - x2).sqrt().floor() as i64 - 1).max(0) };
            if let Some((lo, hi)) = self.column_clamped(x, -ymax, ymax) {
                let upper_band = lo.max(ymin_abs)..=hi;
                let lower_band = lo..=hi.min(-ymin_abs);
                for y in upper_band.chain(lower_band) {
                    let p = Site::new(x, y);
                    if self.on_ring(p, radius) {
                        out.insert(p);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `∂S = {y ∈ W \ S : ∃ x ∈ S, |x − y|_1 = 1}`.
    pub fn outer_boundary(&self, s: &SiteSet) -> SiteSet {
        let mut out = SiteSet::new();
        for a in s.iter() {
            for q in a.lattice_neighbors() {
                if !s.contains(&q) && self.contains(q) {
                    out.insert(q);
                }
            }
        }
        out
    }

    /// `S ∪ ∂S`.
    pub fn closure(&self, s: &SiteSet) -> SiteSet {
        let mut out = s.clone();
        out.extend(self.outer_boundary(s).iter().copied());
        out
    }

    /// Membership in the discrete boundary ray `Γ^u` or `Γ^l`.
    pub fn on_boundary_ray(&self, p: Site, side: Side) -> bool {
        if !self.contains(p) {
            return false;
        }
        p.king_neighbors().into_iter().any(|q| match side {
            Side::Upper => self.strictly_above(q),
            Side::Lower => self.strictly_below(q),
        })
    }

    /// `Γ^{α,r,L} = ∂W^r ∪ (Γ^α ∩ (W^L \ W^r))`. With `r = 0` this is `Γ^α ∩ W^L`.
    pub fn gamma_ray(&self, side: Side, r: f64, l: f64) -> Result<SiteSet, GeometryError> {
        if !(r >= 0.0 && r < l && l.is_finite()) {
            return Err(GeometryError::InvalidRayRange { r, l });
        }
        let mut out = if r > 0.0 { self.ring(r)? } else { SiteSet::new() };
        let r2 = r * r;
        for p in self.ball_sector(l)?.iter() {
            if (p.norm2() as f64) >= r2 && self.on_boundary_ray(*p, side) {
                out.insert(*p);
            }
        }
        Ok(out)
    }

    /// Reflection `y → −y` when the wedge is symmetric about the x-axis.
    pub fn mirror(&self) -> Option<WedgeSpec> {
        let lower = Slope { rise: -self.upper.rise, run: self.upper.run };
        let upper = Slope { rise: -self.lower.rise, run: self.lower.run };
        WedgeSpec::new(lower, upper).ok()
    }

    pub fn is_symmetric(&self) -> bool {
        self.lower.rise == -self.upper.rise && self.lower.run == self.upper.run
    }
}

impl fmt::Display for WedgeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W[{}, {}]", self.lower, self.upper)
    }
}

fn check_radius(radius: f64) -> Result<(), GeometryError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidRadius(radius))
    }
}

/// A finite set of lattice sites, iterated in lexicographic order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteSet {
    sites: BTreeSet<Site>,
}

impl SiteSet {
    pub fn new() -> Self {
        SiteSet::default()
    }

    pub fn insert(&mut self, p: Site) -> bool {
        self.sites.insert(p)
    }

    pub fn remove(&mut self, p: &Site) -> bool {
        self.sites.remove(p)
    }

    pub fn contains(&self, p: &Site) -> bool {
        self.sites.contains(p)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn iter(&self) -> btree_set::Iter<'_, Site> {
        self.sites.iter()
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        self.sites.union(&other.sites).copied().collect()
    }

    pub fn difference(&self, other: &SiteSet) -> SiteSet {
        self.sites.difference(&other.sites).copied().collect()
    }

    pub fn intersection(&self, other: &SiteSet) -> SiteSet {
        self.sites.intersection(&other.sites).copied().collect()
    }

    pub fn is_disjoint(&self, other: &SiteSet) -> bool {
        self.sites.is_disjoint(&other.sites)
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.sites.is_subset(&other.sites)
    }

    /// Largest Euclidean norm among members (0 for the empty set).
    pub fn max_norm(&self) -> f64 {
        self.sites.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Is the set connected under nearest-neighbor adjacency?
    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.sites.iter().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for q in p.lattice_neighbors() {
                if self.sites.contains(&q) && seen.insert(q) {
                    stack.push(q);
                }
            }
        }
        seen.len() == self.sites.len()
    }

    /// Mirror image under `y → −y`.
    pub fn mirrored(&self) -> SiteSet {
        self.sites.iter().map(|p| p.mirrored()).collect()
    }

    /// One `x,y` line per site, lexicographically sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.sites.len() * 8);
        for p in &self.sites {
            out.push_str(&format!("{},{}\n", p.x, p.y));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<SiteSet, GeometryError> {
        let mut out = SiteSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let p: Site = line
                .parse()
                .map_err(|message| GeometryError::SiteSetSyntax { line: i + 1, message })?;
            out.insert(p);
        }
        Ok(out)
    }
}

impl FromIterator<Site> for SiteSet {
    fn from_iter<I: IntoIterator<Item = Site>>(iter: I) -> Self {
        SiteSet { sites: iter.into_iter().collect() }
    }
}

impl Extend<Site> for SiteSet {
    fn extend<I: IntoIterator<Item = Site>>(&mut self, iter: I) {
        self.sites.extend(iter)
    }
}

impl<'a> IntoIterator for &'a SiteSet {
    type Item = &'a Site;
    type IntoIter = btree_set::Iter<'a, Site>;
    fn into_iter(self) -> Self::IntoIter {
        self.sites.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn w(lower: &str, upper: &str) -> WedgeSpec {
        WedgeSpec::new(lower.parse().unwrap(), upper.parse().unwrap()).unwrap()
    }

    fn brute_ball(spec: &WedgeSpec, radius: f64) -> SiteSet {
        let reach = radius.ceil() as i64 + 1;
        let mut out = SiteSet::new();
        for x in -reach..=reach {
            for y in -reach..=reach {
                let p = Site::new(x, y);
                if spec.contains(p) && ((x * x + y * y) as f64) < radius * radius {
                    out.insert(p);
                }
            }
        }
        out
    }

    #[test]
    fn origin_always_member() {
        for spec in [w("0/1", "1/1"), w("-1/3", "1/2"), WedgeSpec::half_plane(), w("-1/0", "0/1")] {
            assert!(spec.contains(Site::ORIGIN));
        }
    }

    #[test]
    fn vertical_ray_membership() {
        let spec = w("0/1", "1/0");
        assert!(spec.contains(Site::new(0, 3)));
        assert!(!spec.contains(Site::new(0, -3)));
        let half = WedgeSpec::half_plane();
        assert!(half.contains(Site::new(0, -3)));
        assert!(!half.contains(Site::new(-1, 0)));
    }

    #[test]
    fn below_lower_ray_excluded() {
        let spec = w("0/1", "1/1");
        assert!(!spec.contains(Site::new(1, -1)));
        assert!(spec.contains(Site::new(1, 1)));
        assert!(!spec.contains(Site::new(1, 2)));
    }

    #[test]
    fn diagonal_ray_stable() {
        let spec = w("0/1", "1/1");
        for n in [1i64, 7, 1 << 20, 1 << 39, COORD_LIMIT] {
            assert!(spec.contains(Site::new(n, n)));
            assert!(!spec.contains(Site::new(n, n + 1)));
        }
        assert!(spec.checked_contains(Site::new(COORD_LIMIT + 1, 0)).is_err());
    }

    #[test]
    fn degenerate_wedge_rejected() {
        assert!(WedgeSpec::new(Slope::horizontal(), Slope::horizontal()).is_err());
        assert!(WedgeSpec::new("1/1".parse().unwrap(), "0/1".parse().unwrap()).is_err());
        assert!("1/-2".parse::<Slope>().is_err());
        assert!(WedgeSpec::new("1/3".parse().unwrap(), "1/2".parse().unwrap()).is_err());
    }

    #[test]
    fn phi_matches_slopes() {
        let spec = w("0/1", "1/1");
        assert!((spec.phi() - FRAC_PI_4).abs() < 1e-12);
        assert!((WedgeSpec::half_plane().phi() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn neighbor_examples() {
        let half = WedgeSpec::half_plane();
        assert_eq!(
            half.neighbors(Site::ORIGIN).unwrap(),
            vec![Site::new(1, 0), Site::new(0, 1), Site::new(0, -1)]
        );
        let spec = w("0/1", "1/1");
        assert_eq!(spec.degree(Site::new(10, 5)).unwrap(), 4);
        assert_eq!(
            spec.neighbors(Site::new(10, 0)).unwrap(),
            vec![Site::new(11, 0), Site::new(10, 1), Site::new(9, 0)]
        );
        assert!(spec.neighbors(Site::new(1, -1)).is_err());
    }

    #[test]
    fn degrees_between_one_and_four() {
        for spec in [w("0/1", "1/1"), w("0/1", "2/5"), w("-1/3", "1/2"), WedgeSpec::half_plane(), w("-1/0", "0/1")] {
            for p in spec.ball_sector(30.0).unwrap().iter() {
                let d = spec.degree(*p).unwrap();
                assert!((1..=4).contains(&d), "{spec} {p} degree {d}");
            }
        }
    }

    #[test]
    fn box_clearance_matches_scan() {
        for spec in [w("0/1", "1/1"), w("-1/3", "2/5"), WedgeSpec::half_plane(), w("-1/0", "0/1"), w("0/1", "1/0")] {
            for x in 0..14 {
                for y in -14..14 {
                    let p = Site::new(x, y);
                    if !spec.contains(p) {
                        continue;
                    }
                    let scan = (0..20)
                        .take_while(|&k| {
                            (-k..=k).all(|dx| (-k..=k).all(|dy| spec.contains(Site::new(x + dx, y + dy))))
                        })
                        .last()
                        .unwrap();
                    assert_eq!(spec.box_clearance(p).min(19), scan, "{spec} {p}");
                }
            }
        }
    }

    #[test]
    fn outer_boundary_examples() {
        let half = WedgeSpec::half_plane();
        let s: SiteSet = [Site::ORIGIN].into_iter().collect();
        let b = half.outer_boundary(&s);
        let expected: SiteSet = [Site::new(1, 0), Site::new(0, 1), Site::new(0, -1)].into_iter().collect();
        assert_eq!(b, expected);
        assert!(half.outer_boundary(&SiteSet::new()).is_empty());
    }

    #[test]
    fn ring_matches_outer_boundary_scan() {
        for spec in [w("0/1", "1/0"), w("0/1", "1/1"), WedgeSpec::half_plane(), w("-1/3", "1/2")] {
            for r in [1.0, 2.5, 3.0, 5.0, 8.0, 17.3, 64.0] {
                let ball = spec.ball_sector(r).unwrap();
                let scanned = spec.outer_boundary(&ball);
                assert_eq!(spec.ring(r).unwrap(), scanned, "{spec} r={r}");
            }
        }
    }

    #[test]
    fn ring_three_quarter_plane() {
        // exhaustive scan of B_5 ∩ W
        let spec = w("0/1", "1/0");
        let expected: SiteSet = [
            (0, 3), (1, 3), (2, 3), (3, 0), (3, 1), (3, 2),
        ]
        .into_iter()
        .map(|(x, y)| Site::new(x, y))
        .collect();
        assert_eq!(spec.ring(3.0).unwrap(), expected);
    }

    #[test]
    fn ball_sector_examples() {
        let half = WedgeSpec::half_plane();
        assert_eq!(half.ball_sector(1.0).unwrap().iter().copied().collect::<Vec<_>>(), vec![Site::ORIGIN]);
        let quarter = w("0/1", "1/0");
        let expected: SiteSet = [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1)]
            .into_iter()
            .map(|(x, y)| Site::new(x, y))
            .collect();
        assert_eq!(quarter.ball_sector(2.5).unwrap(), expected);
        assert!(half.ball_sector(0.0).is_err());
    }

    #[test]
    fn ball_sector_matches_double_loop() {
        for spec in [w("0/1", "1/1"), w("-1/0", "1/0"), w("-1/3", "5/2"), w("-2/7", "1/9")] {
            for r in [1.0, 4.5, 10.0, 31.7, 64.0] {
                assert_eq!(spec.ball_sector(r).unwrap(), brute_ball(&spec, r), "{spec} r={r}");
            }
        }
    }

    #[test]
    fn ring_size_linear_in_radius() {
        let spec = w("0/1", "1/1");
        let worst = (8..=256)
            .step_by(8)
            .map(|r| spec.ring(r as f64).unwrap().len() as f64 / r as f64)
            .fold(0.0, f64::max);
        assert!(worst < 2.0, "|ring|/r reached {worst}");
    }

    #[test]
    fn lower_gamma_hugs_axis() {
        let spec = w("0/1", "1/1");
        let g = spec.gamma_ray(Side::Lower, 0.0, 8.0).unwrap();
        let expected: SiteSet = (0..8).map(|x| Site::new(x, 0)).collect();
        assert_eq!(g, expected);
        assert!(spec.gamma_ray(Side::Lower, 8.0, 8.0).is_err());
    }

    #[test]
    fn gamma_thin_annulus() {
        let spec = w("0/1", "1/1");
        let g = spec.gamma_ray(Side::Upper, 1.0, 2.0).unwrap();
        // ∂W^1 = {(1,0)}; Γ^u ∩ (W^2 \ W^1) = {(1,0), (1,1)}
        let expected: SiteSet = [Site::new(1, 0), Site::new(1, 1)].into_iter().collect();
        assert_eq!(g, expected);
    }

    #[test]
    fn gamma_mirror_symmetry() {
        let spec = w("-1/2", "1/2");
        assert!(spec.is_symmetric());
        for (r, l) in [(0.0, 10.0), (3.0, 12.0), (8.0, 30.0)] {
            let up = spec.gamma_ray(Side::Upper, r, l).unwrap();
            let low = spec.gamma_ray(Side::Lower, r, l).unwrap();
            assert_eq!(up.mirrored(), low);
        }
        let half = WedgeSpec::half_plane();
        let up = half.gamma_ray(Side::Upper, 0.0, 6.0).unwrap();
        assert_eq!(up.mirrored(), half.gamma_ray(Side::Lower, 0.0, 6.0).unwrap());
    }

    #[test]
    fn gamma_rays_are_connected() {
        for spec in [w("0/1", "1/1"), w("0/1", "2/5"), w("-1/3", "1/2"), w("-1/0", "1/0"), w("-7/3", "1/5")] {
            for side in [Side::Upper, Side::Lower] {
                let g = spec.gamma_ray(side, 0.0, 40.0).unwrap();
                assert!(g.is_connected(), "{spec} {side:?}");
            }
        }
    }

    #[test]
    fn rational_approximation() {
        let s = Slope::approximate(std::f64::consts::PI / 8.0, 1e-9).unwrap();
        assert!((s.angle() - std::f64::consts::PI / 8.0).abs() <= 1e-9);
        assert_eq!(Slope::approximate(FRAC_PI_4, 1e-12).unwrap(), Slope::new(1, 1).unwrap());
        assert_eq!(Slope::approximate(FRAC_PI_2, 1e-9).unwrap(), Slope::vertical_up());
        let neg = Slope::approximate(-0.3, 1e-10).unwrap();
        assert!((neg.angle() + 0.3).abs() <= 1e-10);
    }

    #[test]
    fn site_set_text_round_trip() {
        let s: SiteSet = [Site::new(3, -1), Site::new(0, 0), Site::new(-2, 5)].into_iter().collect();
        let text = s.to_text();
        assert_eq!(text, "-2,5\n0,0\n3,-1\n");
        assert_eq!(SiteSet::from_text(&text).unwrap(), s);
        assert!(matches!(SiteSet::from_text("1,2\nnope\n"), Err(GeometryError::SiteSetSyntax { line: 2, .. })));
    }
}
