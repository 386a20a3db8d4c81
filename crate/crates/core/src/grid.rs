//! Uniform periodic grids on the torus `[0, L)^d` and per-species fields on them.
//!
//! Node `i` along an axis sits at `i * h` with `h = L / n`. Multi-dimensional
//! nodes are stored row-major with the last axis fastest.

use crate::{Error, Result, Vec3, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    /// Nodes per axis.
    pub nodes: usize,
    /// Box side length.
    pub length: f64,
}

impl Grid {
    pub fn new(dim: usize, nodes: usize, length: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Config(format!("dimension {dim} not in 1..=3")));
        }
        if nodes == 0 {
            return Err(Error::Config("grid needs at least one node per axis".into()));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("box length {length} must be positive")));
        }
        Ok(Self { dim, nodes, length })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.length / self.nodes as f64
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.nodes.pow(self.dim as u32)
    }

    /// Volume element `h^d` of the rectangle rule.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    #[inline]
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Per-axis indices of a flat node index.
    pub fn unflatten(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.nodes;
            idx /= self.nodes;
        }
        out
    }

    pub fn flatten(&self, ijk: &[usize]) -> usize {
        ijk.iter()
            .take(self.dim)
            .fold(0, |acc, &i| acc * self.nodes + i)
    }

    /// Flat index of the node reached by moving `offset` nodes along `axis`,
    /// with periodic wrap.
    #[inline]
    pub fn shifted(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let stride = self.nodes.pow((self.dim - 1 - axis) as u32);
        let i = (idx / stride) % self.nodes;
        let j = (i as isize + offset).rem_euclid(self.nodes as isize) as usize;
        idx - i * stride + j * stride
    }

    pub fn coord(&self, idx: usize) -> Vec3 {
        let h = self.spacing();
        let ijk = self.unflatten(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = ijk[a] as f64 * h;
        }
        x
    }

    /// Periodic multilinear interpolation of node values at `x`.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let h = self.spacing();
        let n = self.nodes as isize;
        let mut base = [0isize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..self.dim {
            let s = x[a].rem_euclid(self.length) / h;
            let f = s.floor();
            base[a] = f as isize;
            frac[a] = s - f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for a in 0..self.dim {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                let i = (base[a] + bit as isize).rem_euclid(n) as usize;
                idx = idx * self.nodes + i;
            }
            acc += w * values[idx];
        }
        acc
    }
}

/// Minimum-image displacement on a torus of side `length`.
#[inline]
pub fn min_image(dx: f64, length: f64) -> f64 {
    dx - length * (dx / length).round()
}

/// Densities of `R` species on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    /// `values[r][node]`.
    pub values: Vec<Vec<f64>>,
}

impl GridField {
    pub fn zeros(grid: Grid, species: usize) -> Self {
        Self {
            grid,
            values: vec![vec![0.0; grid.node_count()]; species],
        }
    }

    /// Samples `f(x)` at every node for each species.
    pub fn from_fn(grid: Grid, species: usize, f: impl Fn(usize, &Vec3) -> f64) -> Self {
        let mut out = Self::zeros(grid, species);
        for (r, vals) in out.values.iter_mut().enumerate() {
            for (i, v) in vals.iter_mut().enumerate() {
                *v = f(r, &grid.coord(i));
            }
        }
        out
    }

    /// Single-species isotropic Gaussian bump of standard deviation `width`
    /// centered in the box, with unit integral (periodic images included).
    pub fn gaussian_bump(grid: Grid, width: f64) -> Self {
        let c = grid.length / 2.0;
        Self::from_fn(grid, 1, |_, x| {
            let mut sq = 0.0;
            for xa in x.iter().take(grid.dim) {
                let dx = min_image(xa - c, grid.length);
                sq += dx * dx;
            }
            (-(sq) / (2.0 * width * width)).exp()
                / (2.0 * std::f64::consts::PI * width * width).powf(grid.dim as f64 / 2.0)
        })
    }

    pub fn species(&self) -> usize {
        self.values.len()
    }

    /// Rectangle-rule integral of species `r`.
    pub fn integral(&self, r: usize) -> f64 {
        self.values[r].iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `sum_r m_r <s_r, 1>`.
    pub fn mass(&self, masses: &[u32]) -> f64 {
        (0..self.species())
            .map(|r| masses[r] as f64 * self.integral(r))
            .sum()
    }

    pub fn l2_norm_sq(&self, r: usize) -> f64 {
        self.values[r].iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn inner(&self, r: usize, other: &[f64]) -> f64 {
        self.values[r]
            .iter()
            .zip(other)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A vector-valued field sampled on a grid, one component array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGrid {
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
}

impl VectorGrid {
    pub fn eval(&self, x: &[f64]) -> Vec3 {
        let mut v = [0.0; MAX_DIM];
        for (a, comp) in self.components.iter().enumerate().take(self.grid.dim) {
            v[a] = self.grid.interpolate(comp, x);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_roundtrip_and_shift() {
        let g = Grid::new(3, 4, 1.0).unwrap();
        for idx in 0..g.node_count() {
            assert_eq!(g.flatten(&g.unflatten(idx)), idx);
        }
        let idx = g.flatten(&[3, 0, 2]);
        assert_eq!(g.unflatten(g.shifted(idx, 0, 1)), [0, 0, 2]);
        assert_eq!(g.unflatten(g.shifted(idx, 1, -1)), [3, 3, 2]);
        assert_eq!(g.unflatten(g.shifted(idx, 2, 2)), [3, 0, 0]);
    }

    #[test]
    fn interpolation_is_exact_for_linear_data_inside_a_cell() {
        let g = Grid::new(2, 8, 8.0).unwrap();
        let vals: Vec<f64> = (0..g.node_count())
            .map(|i| {
                let x = g.coord(i);
                2.0 * x[0] + 3.0 * x[1]
            })
            .collect();
        let v = g.interpolate(&vals, &[2.25, 3.5]);
        assert!((v - (4.5 + 10.5)).abs() < 1e-12);
    }

    #[test]
    fn bump_has_unit_mass() {
        let g = Grid::new(1, 256, 10.0).unwrap();
        let f = GridField::gaussian_bump(g, 0.5);
        assert!((f.integral(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_image_wraps() {
        assert!((min_image(9.0, 10.0) + 1.0).abs() < 1e-15);
        assert!((min_image(-6.0, 10.0) - 4.0).abs() < 1e-15);
    }
}
