//! Exit laws of the free lattice walk from the center of a square box.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::Rng;

use crate::geometry::{Site, SiteSet};
use crate::oracle::{HarmonicProblem, OracleError};

pub const TABLE_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"WDLAJUMP";
pub const MAX_HALF_WIDTH: i64 = 64;
/// Half-widths tried by the accelerated walk, roughly ×√2 apart.
pub const DEFAULT_LADDER: [i64; 11] = [2, 3, 4, 6, 8, 11, 16, 23, 32, 45, 64];

/// Exit distribution of simple random walk started at the center of
/// `[-k, k]²`, over the sites at sup-distance exactly `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTable {
    k: i64,
    exits: Vec<(i32, i32)>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    mean_steps: f64,
}

impl JumpTable {
    pub fn build(k: i64) -> Result<Self, OracleError> {
        if !(1..=MAX_HALF_WIDTH).contains(&k) {
            return Err(OracleError::Invalid(format!("box half-width {k} outside 1..={MAX_HALF_WIDTH}")));
        }
        let mut interior = SiteSet::new();
        let mut rim = SiteSet::new();
        for y in -k..=k {
            for x in -k..=k {
                let p = Site::new(x, y);
                if x.abs() < k && y.abs() < k {
                    interior.insert(p);
                } else if x.abs() != y.abs() {
                    rim.insert(p);
                }
            }
        }
        let problem = HarmonicProblem::on_lattice(&interior, vec![("rim".into(), rim)])?;
        let dist = problem.hit_distribution(Site::ORIGIN)?;
        let raw: Vec<(Site, f64)> = dist.probs.iter().map(|(p, v)| (*p, *v)).collect();
        let lookup = |p: Site| dist.probs.get(&p).copied().unwrap_or(0.0);
        // Average over the dihedral group to remove solver asymmetry.
        let mut exits = Vec::with_capacity(raw.len());
        let mut probs = Vec::with_capacity(raw.len());
        for (p, _) in &raw {
            let images = dihedral(*p);
            let mean = images.iter().map(|q| lookup(*q)).sum::<f64>() / 8.0;
            exits.push((p.x as i32, p.y as i32));
            probs.push(mean);
        }
        Ok(JumpTable::from_parts(k, exits, probs, dist.expected_steps))
    }

    fn from_parts(k: i64, exits: Vec<(i32, i32)>, probs: Vec<f64>, mean_steps: f64) -> Self {
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        JumpTable { k, exits, probs, cumulative, mean_steps }
    }

    pub fn half_width(&self) -> i64 {
        self.k
    }

    /// Expected number of single steps to leave the box.
    pub fn mean_steps(&self) -> f64 {
        self.mean_steps
    }

    pub fn total_weight(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.exits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exits.is_empty()
    }

    pub fn probability(&self, offset: Site) -> f64 {
        self.exits
            .iter()
            .position(|&(x, y)| x as i64 == offset.x && y as i64 == offset.y)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.exits.iter().zip(&self.probs).map(|(&(x, y), &p)| (Site::new(x as i64, y as i64), p))
    }

    /// Exit offset drawn from the table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.exits.len() - 1);
        let (x, y) = self.exits[i];
        Site::new(x as i64, y as i64)
    }

    pub fn file_name(k: i64) -> String {
        format!("jump_k{k}.tbl")
    }

    pub fn write_to(&self, out: &mut impl Write) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&TABLE_VERSION.to_le_bytes())?;
        out.write_all(&(self.k as u32).to_le_bytes())?;
        out.write_all(&(self.exits.len() as u32).to_le_bytes())?;
        out.write_all(&self.mean_steps.to_le_bytes())?;
        for (&(x, y), p) in self.exits.iter().zip(&self.probs) {
            out.write_all(&x.to_le_bytes())?;
            out.write_all(&y.to_le_bytes())?;
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a table; `Ok(None)` when the header is from another format version.
    pub fn read_from(input: &mut impl Read) -> io::Result<Option<Self>> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "not a jump table"));
        }
        if read_u32(input)? != TABLE_VERSION {
            return Ok(None);
        }
        let k = read_u32(input)? as i64;
        let n = read_u32(input)? as usize;
        let mean_steps = read_f64(input)?;
        let mut exits = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        for _ in 0..n {
            let x = read_u32(input)? as i32;
            let y = read_u32(input)? as i32;
            exits.push((x, y));
            probs.push(read_f64(input)?);
        }
        Ok(Some(JumpTable::from_parts(k, exits, probs, mean_steps)))
    }
}

fn read_u32(input: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(input: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn dihedral(p: Site) -> [Site; 8] {
    let (x, y) = (p.x, p.y);
    [
        Site::new(x, y),
        Site::new(-x, y),
        Site::new(x, -y),
        Site::new(-x, -y),
        Site::new(y, x),
        Site::new(-y, x),
        Site::new(y, -x),
        Site::new(-y, -x),
    ]
}

/// Tables for a fixed ladder of half-widths.
#[derive(Debug, Clone)]
pub struct JumpLadder {
    tables: Vec<JumpTable>,
}

impl JumpLadder {
    pub fn build(ks: &[i64]) -> Result<Self, OracleError> {
        let mut tables = ks.iter().map(|&k| JumpTable::build(k)).collect::<Result<Vec<_>, _>>()?;
        tables.sort_by_key(|t| t.k);
        Ok(JumpLadder { tables })
    }

    pub fn standard() -> Result<Self, OracleError> {
        JumpLadder::build(&DEFAULT_LADDER)
    }

    /// Process-wide standard ladder, built on first use.
    pub fn shared() -> &'static JumpLadder {
        static LADDER: OnceLock<JumpLadder> = OnceLock::new();
        LADDER.get_or_init(|| JumpLadder::standard().expect("standard ladder builds"))
    }

    /// Loads each table from `dir`, building and saving any that are missing
    /// or stale.
    pub fn cached(dir: &Path, ks: &[i64]) -> Result<Self, OracleError> {
        let mut tables = Vec::with_capacity(ks.len());
        for &k in ks {
            let path: PathBuf = dir.join(JumpTable::file_name(k));
            let loaded = fs::File::open(&path)
                .ok()
                .and_then(|mut f| JumpTable::read_from(&mut f).ok().flatten())
                .filter(|t| t.k == k);
            let table = match loaded {
                Some(t) => t,
                None => {
                    let t = JumpTable::build(k)?;
                    let saved = fs::create_dir_all(dir)
                        .and_then(|_| fs::File::create(&path))
                        .and_then(|mut f| t.write_to(&mut f));
                    if let Err(e) = saved {
                        return Err(OracleError::Invalid(format!("cannot cache {}: {e}", path.display())));
                    }
                    t
                }
            };
            tables.push(table);
        }
        tables.sort_by_key(|t| t.k);
        Ok(JumpLadder { tables })
    }

    pub fn tables(&self) -> &[JumpTable] {
        &self.tables
    }

    /// Largest table with half-width in `2..=bound`.
    pub fn largest_within(&self, bound: i64) -> Option<&JumpTable> {
        if bound < 2 {
            return None;
        }
        self.tables.iter().rev().find(|t| t.k <= bound && t.k >= 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn unit_box_is_uniform() {
        let t = JumpTable::build(1).unwrap();
        assert_eq!(t.len(), 4);
        for (_, p) in t.entries() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert!((t.mean_steps() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k2_matches_hand_elimination() {
        // Expected visits on the 3×3 interior: center 3/2, edge 1/2, corner 1/4.
        let t = JumpTable::build(2).unwrap();
        let mid = t.probability(Site::new(2, 0));
        let near_corner = t.probability(Site::new(2, 1));
        assert!((mid - 1.0 / 8.0).abs() < 1e-13);
        assert!((near_corner - 1.0 / 16.0).abs() < 1e-13);
        assert!(near_corner < mid);
        assert_eq!(t.probability(Site::new(2, 2)), 0.0);
        assert!((t.mean_steps() - 4.5).abs() < 1e-12);
    }

    #[test]
    fn weights_normalized_and_symmetric() {
        for k in 1..=16 {
            let t = JumpTable::build(k).unwrap();
            assert!((t.total_weight() - 1.0).abs() < 1e-12, "k={k} sum {}", t.total_weight());
            for (p, v) in t.entries() {
                for q in dihedral(p) {
                    assert!((t.probability(q) - v).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let built = JumpLadder::cached(dir.path(), &[2, 5]).unwrap();
        assert!(dir.path().join("jump_k5.tbl").exists());
        let loaded = JumpLadder::cached(dir.path(), &[2, 5]).unwrap();
        assert_eq!(built.tables(), loaded.tables());
    }

    #[test]
    fn sampling_follows_weights() {
        let t = JumpTable::build(3).unwrap();
        let streams = Streams::new(1, 1);
        let mut rng = streams.trial(0);
        let n = 200_000;
        let mut hits = 0usize;
        for _ in 0..n {
            if t.sample(&mut rng) == Site::new(3, 0) {
                hits += 1;
            }
        }
        let p = t.probability(Site::new(3, 0));
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - p).abs() < 4.0 * sd);
    }
}
