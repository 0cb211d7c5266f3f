//! Cubic lattices `Ω ⊂ ηZ^d`, blocks, coarse lattices and reflections.

use std::fmt;

use crate::{Error, Result};

/// Default bound on the total number of sites of a finite lattice.
pub const DEFAULT_SITE_CAP: usize = 20_000;

/// Integer multi-index of a lattice point, in units of the lattice spacing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site(coords)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Which end of an axis a reflection fixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    Low,
    High,
}

/// A cube of `n^d` sites with spacing `L^{-k}`.
///
/// Sites carry integer indices `origin..origin + n` on every axis. Lattices
/// built by [`LatticeGeometry::new`] have `origin = 0` and `n = L^m`; coarse
/// lattices, rescaled lattices and free-lattice patches reuse the same type
/// with other values of `k`, `n` and `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatticeGeometry {
    d: usize,
    l: u64,
    k: i32,
    n: usize,
    origin: i64,
}

fn check_l(l: u64) -> Result<()> {
    if l < 3 || l.is_multiple_of(2) {
        return Err(Error::Geometry(format!("L must be odd and at least 3, got {l}")));
    }
    Ok(())
}

impl LatticeGeometry {
    /// The cube with `L^m` sites per axis and spacing `L^{-k}`.
    pub fn new(d: usize, l: u64, k: u32, m: u32) -> Result<Self> {
        Self::with_cap(d, l, k, m, DEFAULT_SITE_CAP)
    }

    pub fn with_cap(d: usize, l: u64, k: u32, m: u32, cap: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Geometry("dimension must be positive".into()));
        }
        check_l(l)?;
        if k > m {
            return Err(Error::Geometry(format!("k = {k} exceeds m = {m}")));
        }
        let n = (l as usize)
            .checked_pow(m)
            .ok_or_else(|| Error::Geometry("side overflows".into()))?;
        let total = n.checked_pow(d as u32).unwrap_or(usize::MAX);
        if total > cap {
            return Err(Error::Geometry(format!(
                "{total} sites exceed the desk-scale cap of {cap}"
            )));
        }
        Ok(LatticeGeometry { d, l, k: k as i32, n, origin: 0 })
    }

    /// A box of `n` sites per axis starting at index `origin`, spacing `L^{-k}`.
    pub fn patch(d: usize, l: u64, k: i32, n: usize, origin: i64) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::Geometry("empty patch".into()));
        }
        check_l(l)?;
        Ok(LatticeGeometry { d, l, k, n, origin })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> u64 {
        self.l
    }

    /// Scale index: the spacing is `L^{-k}`. Negative for coarse lattices.
    pub fn k(&self) -> i32 {
        self.k
    }

    /// Sites per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    /// The exponent `m` with `n = L^m`, if there is one.
    pub fn m(&self) -> Option<u32> {
        let mut p = 1usize;
        for m in 0..64 {
            if p == self.n {
                return Some(m);
            }
            if p > self.n {
                return None;
            }
            p *= self.l as usize;
        }
        None
    }

    pub fn spacing(&self) -> f64 {
        lpow(self.l, -self.k)
    }

    /// `η^d`, the measure of one site.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn side_length(&self) -> f64 {
        self.n as f64 * self.spacing()
    }

    pub fn num_sites(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.dim() == self.d
            && x.0.iter().all(|&c| c >= self.origin && c < self.origin + self.n as i64)
    }

    /// Row-major flat position of a site.
    pub fn index_of(&self, x: &Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0usize;
        for &c in &x.0 {
            idx = idx * self.n + (c - self.origin) as usize;
        }
        Some(idx)
    }

    pub fn site(&self, mut idx: usize) -> Site {
        let mut coords = vec![0i64; self.d];
        for mu in (0..self.d).rev() {
            coords[mu] = self.origin + (idx % self.n) as i64;
            idx /= self.n;
        }
        Site(coords)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.num_sites()).map(move |i| self.site(i))
    }

    /// Physical coordinates `η·index`.
    pub fn position(&self, x: &Site) -> Vec<f64> {
        let h = self.spacing();
        x.0.iter().map(|&c| c as f64 * h).collect()
    }

    /// Same index set with spacing multiplied by `L^ell`.
    pub fn scaled(&self, ell: i32) -> Self {
        LatticeGeometry { k: self.k - ell, ..*self }
    }

    /// The coarse lattice `Ω_j` of block labels.
    pub fn coarse(&self, j: u32) -> Result<Self> {
        let b = (self.l as usize)
            .checked_pow(j)
            .ok_or_else(|| Error::Geometry("block size overflows".into()))?;
        if !self.n.is_multiple_of(b) || self.origin.rem_euclid(b as i64) != 0 {
            return Err(Error::Geometry(format!(
                "blocks of side {b} do not tile {} sites at origin {}",
                self.n, self.origin
            )));
        }
        Ok(LatticeGeometry {
            k: self.k - j as i32,
            n: self.n / b,
            origin: self.origin.div_euclid(b as i64),
            ..*self
        })
    }

    /// Label of the block `B_j(y)` containing `x`.
    pub fn block_label(&self, j: u32, x: &Site) -> Site {
        let b = (self.l as i64).pow(j);
        Site(x.0.iter().map(|&c| c.div_euclid(b)).collect())
    }

    /// The `L^{jd}` sites of the block with label `y`.
    pub fn block_sites(&self, j: u32, y: &Site) -> Result<Vec<Site>> {
        let coarse = self.coarse(j)?;
        if !coarse.contains(y) {
            return Err(Error::OutOfRange(y.to_string()));
        }
        let b = (self.l as usize).pow(j);
        let block = LatticeGeometry::patch(self.d, self.l, self.k, b, 0)?;
        Ok(block
            .sites()
            .map(|w| Site(w.0.iter().zip(&y.0).map(|(&o, &c)| c * b as i64 + o).collect()))
            .collect())
    }

    /// Reflection through the hyperplane half a spacing outside one face.
    pub fn reflect(&self, axis: usize, end: End, x: &Site) -> Site {
        let mut out = x.clone();
        let c = x.0[axis];
        out.0[axis] = match end {
            End::Low => 2 * self.origin - 1 - c,
            End::High => 2 * (self.origin + self.n as i64) - 1 - c,
        };
        out
    }

    /// Images of `y` in the `(2s+1)^d` reflected copies of the cube.
    ///
    /// Copy `c` along an axis holds `y` translated by `c` sides when `c` is
    /// even and the mirror image of `y` translated by `c` sides when odd.
    pub fn image_points(&self, y: &Site, shells: usize) -> Vec<Site> {
        let s = shells as i64;
        let n = self.n as i64;
        let width = 2 * shells + 1;
        let count = width.pow(self.d as u32);
        let mut out = Vec::with_capacity(count);
        for idx in 0..count {
            let mut rem = idx;
            let mut coords = vec![0i64; self.d];
            for mu in (0..self.d).rev() {
                let c = (rem % width) as i64 - s;
                rem /= width;
                let r = y.0[mu] - self.origin;
                let local = if c.rem_euclid(2) == 0 { r } else { n - 1 - r };
                coords[mu] = self.origin + c * n + local;
            }
            out.push(Site(coords));
        }
        out
    }

    /// Shell number of an image point: the largest copy offset over axes.
    pub fn shell_of(&self, x: &Site) -> usize {
        let n = self.n as i64;
        x.0.iter()
            .map(|&c| (c - self.origin).div_euclid(n).unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }
}

/// `L^e` for a possibly negative exponent.
pub fn lpow(l: u64, e: i32) -> f64 {
    if e >= 0 {
        (l as f64).powi(e)
    } else {
        1.0 / (l as f64).powi(-e)
    }
}

/// Euclidean distance.
pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Maximum-norm distance.
pub fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Euclidean distance from `x` to the nearest point of `set`.
pub fn dist_to_set(x: &[f64], set: &[Vec<f64>]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Invalid("distance to an empty set".into()));
    }
    Ok(set.iter().map(|s| dist(x, s)).fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_geometry() {
        let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
        assert_eq!(g.n(), 9);
        assert!((g.spacing() - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.side_length() - 3.0).abs() < 1e-14);
        let u = LatticeGeometry::new(2, 3, 0, 1).unwrap();
        assert_eq!(u.num_sites(), 9);
        assert_eq!(u.spacing(), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LatticeGeometry::new(1, 4, 1, 2).is_err());
        assert!(LatticeGeometry::new(1, 1, 0, 2).is_err());
        assert!(LatticeGeometry::new(1, 3, 3, 2).is_err());
        assert!(LatticeGeometry::with_cap(2, 3, 1, 4, 1000).is_err());
    }

    #[test]
    fn coarse_lattices() {
        let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
        let c = g.coarse(1).unwrap();
        assert_eq!(c.n(), 3);
        assert_eq!(c.spacing(), 1.0);
        assert_eq!(g.coarse(0).unwrap(), g);
        assert!(g.coarse(3).is_err());
    }

    #[test]
    fn labels_and_blocks() {
        let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
        assert_eq!(g.block_label(1, &Site(vec![5])), Site(vec![1]));
        let g2 = LatticeGeometry::new(2, 3, 1, 2).unwrap();
        assert_eq!(g2.block_label(2, &Site(vec![8, 0])), Site(vec![0, 0]));
        let b = g.block_sites(1, &Site(vec![2])).unwrap();
        assert_eq!(b, vec![Site(vec![6]), Site(vec![7]), Site(vec![8])]);
        assert_eq!(g.block_sites(0, &Site(vec![4])).unwrap(), vec![Site(vec![4])]);
        assert!(g.block_sites(1, &Site(vec![3])).is_err());
    }

    #[test]
    fn reflections() {
        let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
        assert_eq!(g.reflect(0, End::Low, &Site(vec![0])), Site(vec![-1]));
        assert_eq!(g.reflect(0, End::High, &Site(vec![8])), Site(vec![9]));
    }

    #[test]
    fn images_one_shell() {
        let g = LatticeGeometry::new(1, 3, 1, 2).unwrap();
        let mut img: Vec<i64> = g.image_points(&Site(vec![1]), 1).iter().map(|s| s.0[0]).collect();
        img.sort();
        assert_eq!(img, vec![-2, 1, 16]);
        assert_eq!(g.image_points(&Site(vec![1]), 0), vec![Site(vec![1])]);
    }

    #[test]
    fn distances() {
        assert_eq!(dist(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        assert_eq!(sup_dist(&[0.0, 0.0], &[3.0, 4.0]), 4.0);
        assert_eq!(dist_to_set(&[1.0], &[vec![1.0]]).unwrap(), 0.0);
        assert!(dist_to_set(&[1.0], &[]).is_err());
    }
}
