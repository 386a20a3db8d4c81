//! Gaussian interaction and smoothing kernels under moderate scaling, and
//! evaluation of kernel-smoothed empirical measures on the periodic box.
//!
//! Two evaluators are provided for `(1/N) sum_l W(x - X_l)`:
//!
//! - [`CellList`]: the truncated kernel (`|x| <= 6/alpha`) summed over every
//!   periodic image inside the cutoff. When the cutoff is at most half the box
//!   this is exactly the minimum-image sum, and it matches the naive
//!   double loop to rounding.
//! - [`SpectralField`]: the untruncated periodised Gaussian, evaluated as a
//!   Fourier series truncated where the kernel transform drops below 1e-16.
//!   Cost is `O(N * modes)`, independent of how many neighbours fall inside
//!   the cutoff, which is what moderate scaling makes large.
//!
//! The two differ only by the Gaussian tail beyond six standard deviations.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::grid::{Grid, GridField};
use crate::{Error, Result, ValidationReport, Violation, MAX_DIM};

/// Kernel support in units of the kernel standard deviation `1/alpha`.
pub const CUTOFF_SIGMAS: f64 = 6.0;

/// Relative size of the smallest Fourier weight kept by [`SpectralField`].
const SPECTRAL_TOL: f64 = 1e-16;

/// Moderate scaling exponents and the derived kernel scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub dim: usize,
    pub beta: f64,
    pub beta_hat: f64,
    /// System size (atom count).
    pub n: u64,
}

impl ScalingParams {
    pub fn new(dim: usize, beta: f64, beta_hat: f64, n: u64) -> Self {
        Self {
            dim,
            beta,
            beta_hat,
            n,
        }
    }

    /// Interaction scale `alpha_N = N^(beta/d)`.
    pub fn alpha(&self) -> f64 {
        (self.n as f64).powf(self.beta / self.dim as f64)
    }

    /// Smoothing scale `alpha_hat_N = N^(beta_hat/d)`.
    pub fn alpha_hat(&self) -> f64 {
        (self.n as f64).powf(self.beta_hat / self.dim as f64)
    }

    pub fn with_n(self, n: u64) -> Self {
        Self { n, ..self }
    }

    pub fn interaction_kernel(&self) -> Kernel {
        Kernel::new(self.dim, self.alpha())
    }

    pub fn smoothing_kernel(&self) -> Kernel {
        Kernel::new(self.dim, self.alpha_hat())
    }

    pub fn validate(&self) -> ValidationReport {
        validate_scaling(self.dim, self.beta, self.beta_hat)
    }
}

/// Accepts iff `0 < beta_hat < d/(d+2)` and `0 < beta < beta_hat/(d+1)`.
pub fn validate_scaling(dim: usize, beta: f64, beta_hat: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !(1..=MAX_DIM).contains(&dim) {
        report.push(Violation::UnsupportedDimension { dim });
        return report;
    }
    let d = dim as f64;
    let hat_bound = d / (d + 2.0);
    if !(beta_hat > 0.0 && beta_hat < hat_bound) {
        report.push(Violation::SmoothingExponent {
            beta_hat,
            bound: hat_bound,
        });
    }
    let bound = beta_hat / (d + 1.0);
    if !(beta > 0.0 && beta < bound) {
        report.push(Violation::InteractionExponent { beta, bound });
    }
    report
}

/// Standard Gaussian `W_1` rescaled to `alpha^d W_1(alpha x)` and truncated
/// at `6/alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub dim: usize,
    pub alpha: f64,
    /// Multiplies the normalisation constant. Always 1 except when a test
    /// deliberately perturbs it.
    scale: f64,
}

impl Kernel {
    pub fn new(dim: usize, alpha: f64) -> Self {
        Self {
            dim,
            alpha,
            scale: 1.0,
        }
    }

    /// Fault-injection hook: a kernel whose mass is `1 + eps`.
    pub fn with_mass_perturbation(self, eps: f64) -> Self {
        Self {
            scale: 1.0 + eps,
            ..self
        }
    }

    #[inline]
    pub fn cutoff(&self) -> f64 {
        CUTOFF_SIGMAS / self.alpha
    }

    /// Peak value `alpha^d (2 pi)^(-d/2)`.
    #[inline]
    pub fn peak(&self) -> f64 {
        self.scale * self.alpha.powi(self.dim as i32) / (2.0 * PI).powf(self.dim as f64 / 2.0)
    }

    /// Value at squared distance `r2`.
    #[inline]
    pub fn eval_r2(&self, r2: f64) -> f64 {
        let rc = self.cutoff();
        if r2 > rc * rc {
            0.0
        } else {
            self.peak() * (-0.5 * self.alpha * self.alpha * r2).exp()
        }
    }

    /// Value at displacement `x` (no periodic wrapping).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_r2(x.iter().take(self.dim).map(|v| v * v).sum())
    }

    /// Value at displacement `x` on a torus of side `length`, using the
    /// minimum-image displacement.
    pub fn eval_min_image(&self, x: &[f64], length: f64) -> f64 {
        let r2 = x
            .iter()
            .take(self.dim)
            .map(|v| {
                let m = crate::grid::min_image(*v, length);
                m * m
            })
            .sum();
        self.eval_r2(r2)
    }

    /// Fourier weight `exp(-|k|^2 / (2 alpha^2))` of the untruncated kernel.
    #[inline]
    pub fn transform(&self, k2: f64) -> f64 {
        self.scale * (-0.5 * k2 / (self.alpha * self.alpha)).exp()
    }

    /// `int W^2` over R^d for the untruncated kernel.
    pub fn squared_integral(&self) -> f64 {
        (self.alpha / (2.0 * PI.sqrt())).powi(self.dim as i32) * self.scale * self.scale
    }
}

/// Sum of `kernel(dx - j L)` over every periodic image `j` inside the cutoff.
/// Reference implementation used by the naive evaluators.
pub fn image_sum(kernel: &Kernel, dx: &[f64], length: f64) -> f64 {
    let dim = kernel.dim;
    let rc = kernel.cutoff();
    let mut lo = [0i64; MAX_DIM];
    let mut hi = [0i64; MAX_DIM];
    for a in 0..dim {
        lo[a] = ((dx[a] - rc) / length).ceil() as i64;
        hi[a] = ((dx[a] + rc) / length).floor() as i64;
        if lo[a] > hi[a] {
            return 0.0;
        }
    }
    let mut total = 0.0;
    let mut j = lo;
    loop {
        let mut r2 = 0.0;
        for a in 0..dim {
            let d = dx[a] - j[a] as f64 * length;
            r2 += d * d;
        }
        total += kernel.eval_r2(r2);
        // odometer over image indices
        let mut a = 0;
        loop {
            if a == dim {
                return total;
            }
            j[a] += 1;
            if j[a] <= hi[a] {
                break;
            }
            j[a] = lo[a];
            a += 1;
        }
    }
}

/// `(weight) * sum_l W(query - X_l)` by direct loop over all particles.
/// `positions` is flat with stride `kernel.dim`.
pub fn convolve_empirical_naive(
    positions: &[f64],
    weight: f64,
    kernel: &Kernel,
    length: f64,
    query: &[f64],
    exclude: Option<usize>,
) -> f64 {
    let dim = kernel.dim;
    let mut dx = [0.0; MAX_DIM];
    let mut total = 0.0;
    for (l, y) in positions.chunks_exact(dim).enumerate() {
        if Some(l) == exclude {
            continue;
        }
        for a in 0..dim {
            dx[a] = query[a] - y[a];
        }
        total += image_sum(kernel, &dx, length);
    }
    weight * total
}

/// `(weight) * sum_l W(query - X_l)` through a freshly built cell list.
pub fn convolve_empirical(
    positions: &[f64],
    weight: f64,
    kernel: &Kernel,
    length: f64,
    query: &[f64],
    exclude: Option<usize>,
) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    CellList::new(positions, *kernel, length).sum(query, exclude) * weight
}

/// Spatial binning of a frozen set of positions with cells no smaller than
/// the kernel cutoff.
#[derive(Debug, Clone)]
pub struct CellList {
    kernel: Kernel,
    length: f64,
    cells_per_axis: usize,
    cell_size: f64,
    reach: i64,
    /// `start[c]..start[c+1]` indexes `sorted` for cell `c`.
    start: Vec<usize>,
    /// Positions in cell order.
    sorted: Vec<f64>,
    /// Original particle index of each sorted entry.
    ids: Vec<usize>,
}

impl CellList {
    pub fn new(positions: &[f64], kernel: Kernel, length: f64) -> Self {
        let dim = kernel.dim;
        let rc = kernel.cutoff();
        // cap keeps the cell table small for very narrow kernels
        let cells_per_axis = ((length / rc).floor() as usize).clamp(1, 1 << (24 / dim));
        let cell_size = length / cells_per_axis as f64;
        let reach = (rc / cell_size).ceil() as i64;
        let ncell = cells_per_axis.pow(dim as u32);
        let count = positions.len() / dim;

        let cell_of = |x: &[f64]| -> usize {
            let mut c = 0;
            for &xa in x.iter().take(dim) {
                let i = ((xa / cell_size) as usize).min(cells_per_axis - 1);
                c = c * cells_per_axis + i;
            }
            c
        };
        let mut start = vec![0usize; ncell + 1];
        let cells: Vec<usize> = positions.chunks_exact(dim).map(cell_of).collect();
        for &c in &cells {
            start[c + 1] += 1;
        }
        for c in 0..ncell {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut sorted = vec![0.0; positions.len()];
        let mut ids = vec![0; count];
        for (k, &c) in cells.iter().enumerate() {
            let slot = fill[c];
            fill[c] += 1;
            ids[slot] = k;
            sorted[slot * dim..(slot + 1) * dim].copy_from_slice(&positions[k * dim..(k + 1) * dim]);
        }
        Self {
            kernel,
            length,
            cells_per_axis,
            cell_size,
            reach,
            start,
            sorted,
            ids,
        }
    }

    /// `sum_l W(query - X_l)` over all particles and periodic images inside
    /// the cutoff, skipping particle `exclude` (and its images).
    pub fn sum(&self, query: &[f64], exclude: Option<usize>) -> f64 {
        let dim = self.kernel.dim;
        let nc = self.cells_per_axis as i64;
        let rc2 = self.kernel.cutoff().powi(2);
        let a2 = 0.5 * self.kernel.alpha * self.kernel.alpha;
        let mut home = [0i64; MAX_DIM];
        for a in 0..dim {
            home[a] = ((query[a] / self.cell_size) as i64).min(nc - 1);
        }
        let span = 2 * self.reach + 1;
        let combos = span.pow(dim as u32);
        let mut total = 0.0;
        for combo in 0..combos {
            let mut rest = combo;
            let mut cell = 0usize;
            let mut shift = [0.0; MAX_DIM];
            for a in 0..dim {
                let o = rest % span - self.reach;
                rest /= span;
                let u = home[a] + o;
                let c = u.rem_euclid(nc);
                shift[a] = u.div_euclid(nc) as f64 * self.length;
                cell = cell * self.cells_per_axis + c as usize;
            }
            for slot in self.start[cell]..self.start[cell + 1] {
                if Some(self.ids[slot]) == exclude {
                    continue;
                }
                let y = &self.sorted[slot * dim..(slot + 1) * dim];
                let mut r2 = 0.0;
                for a in 0..dim {
                    let d = query[a] - (y[a] + shift[a]);
                    r2 += d * d;
                }
                if r2 <= rc2 {
                    total += (-a2 * r2).exp();
                }
            }
        }
        total * self.kernel.peak()
    }

    /// Work estimate for `targets` queries, in kernel evaluations.
    pub fn cost(&self, targets: usize) -> f64 {
        let sources = self.ids.len() as f64;
        let scanned = ((2 * self.reach + 1) as f64 * self.cell_size / self.length)
            .powi(self.kernel.dim as i32);
        targets as f64 * sources * scanned
    }
}

/// Fourier-series evaluation of `weight * sum_l W_per(x - X_l)` with the
/// untruncated periodised Gaussian `W_per`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    dim: usize,
    length: f64,
    max_mode: i64,
    /// Retained modes: `n = 0` first, then one representative of each
    /// `{n, -n}` pair.
    modes: Vec<[i64; MAX_DIM]>,
    coeffs: Vec<Complex64>,
    self_value: f64,
}

impl SpectralField {
    /// Number of modes per axis needed for `kernel` on a box of side `length`.
    pub fn max_mode(kernel: &Kernel, length: f64) -> i64 {
        let kmax = kernel.alpha * (2.0 * (1.0 / SPECTRAL_TOL).ln()).sqrt();
        (kmax * length / (2.0 * PI)).ceil() as i64
    }

    fn mode_set(kernel: &Kernel, length: f64) -> (i64, Vec<[i64; MAX_DIM]>, Vec<f64>) {
        let dim = kernel.dim;
        let kk = Self::max_mode(kernel, length);
        let span = 2 * kk + 1;
        let vol = length.powi(dim as i32);
        let dk = 2.0 * PI / length;
        let floor = SPECTRAL_TOL * kernel.transform(0.0);
        let mut modes = vec![[0i64; MAX_DIM]];
        let mut weights = vec![kernel.transform(0.0) / vol];
        for combo in 0..span.pow(dim as u32) {
            let mut rest = combo;
            let mut n = [0i64; MAX_DIM];
            for na in n.iter_mut().take(dim) {
                *na = rest % span - kk;
                rest /= span;
            }
            // keep the half with first nonzero component positive
            match n.iter().take(dim).find(|&&c| c != 0) {
                Some(&c) if c > 0 => {}
                _ => continue,
            }
            let k2: f64 = n.iter().take(dim).map(|&c| (c as f64 * dk).powi(2)).sum();
            let w = kernel.transform(k2);
            if w < floor {
                continue;
            }
            modes.push(n);
            weights.push(w / vol);
        }
        (kk, modes, weights)
    }

    /// Number of retained modes (including the zero mode).
    pub fn mode_count(kernel: &Kernel, length: f64) -> usize {
        Self::mode_set(kernel, length).1.len()
    }

    pub fn new(positions: &[f64], weight: f64, kernel: &Kernel, length: f64) -> Self {
        let dim = kernel.dim;
        let (kk, modes, weights) = Self::mode_set(kernel, length);
        let mut sums = vec![Complex64::new(0.0, 0.0); modes.len()];
        if dim == 1 {
            let kmax = modes.len() - 1;
            for &x in positions {
                let z = Complex64::from_polar(1.0, -2.0 * PI * x / length);
                let mut p = Complex64::new(1.0, 0.0);
                sums[0] += p;
                for s in sums.iter_mut().skip(1).take(kmax) {
                    p *= z;
                    *s += p;
                }
            }
        } else {
            let mut table = vec![Complex64::new(0.0, 0.0); dim * (2 * kk as usize + 1)];
            for x in positions.chunks_exact(dim) {
                fill_phase_table(&mut table, x, dim, kk, length, -1.0);
                for (s, n) in sums.iter_mut().zip(&modes) {
                    *s += phase(&table, n, dim, kk);
                }
            }
        }
        let coeffs: Vec<Complex64> = sums
            .iter()
            .zip(&weights)
            .map(|(s, w)| s * (w * weight))
            .collect();
        let self_value =
            weight * (weights[0] + 2.0 * weights.iter().skip(1).sum::<f64>());
        Self {
            dim,
            length,
            max_mode: kk,
            modes,
            coeffs,
            self_value,
        }
    }

    /// Contribution of a single particle to its own position,
    /// `weight * W_per(0)`.
    pub fn self_value(&self) -> f64 {
        self.self_value
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.dim == 1 {
            let z = Complex64::from_polar(1.0, 2.0 * PI * x[0] / self.length);
            let mut p = z;
            let mut acc = 0.0;
            for c in self.coeffs.iter().skip(1) {
                acc += c.re * p.re - c.im * p.im;
                p *= z;
            }
            return self.coeffs[0].re + 2.0 * acc;
        }
        let kk = self.max_mode;
        let mut table = vec![Complex64::new(0.0, 0.0); self.dim * (2 * kk as usize + 1)];
        fill_phase_table(&mut table, x, self.dim, kk, self.length, 1.0);
        let mut acc = 0.0;
        for (c, n) in self.coeffs.iter().zip(&self.modes).skip(1) {
            let p = phase(&table, n, self.dim, kk);
            acc += c.re * p.re - c.im * p.im;
        }
        self.coeffs[0].re + 2.0 * acc
    }

    pub fn cost(kernel: &Kernel, length: f64, sources: usize, targets: usize) -> f64 {
        // a complex multiply-add is a few times cheaper than an exp
        0.3 * (sources + targets) as f64 * Self::mode_count(kernel, length) as f64
    }
}

fn fill_phase_table(table: &mut [Complex64], x: &[f64], dim: usize, kk: i64, length: f64, sign: f64) {
    let span = 2 * kk as usize + 1;
    for a in 0..dim {
        let z = Complex64::from_polar(1.0, sign * 2.0 * PI * x[a] / length);
        let row = &mut table[a * span..(a + 1) * span];
        let mid = kk as usize;
        row[mid] = Complex64::new(1.0, 0.0);
        for m in 1..=mid {
            row[mid + m] = row[mid + m - 1] * z;
            row[mid - m] = row[mid + m].conj();
        }
    }
}

#[inline]
fn phase(table: &[Complex64], n: &[i64; MAX_DIM], dim: usize, kk: i64) -> Complex64 {
    let span = 2 * kk + 1;
    let mut p = table[(n[0] + kk) as usize];
    for a in 1..dim {
        p *= table[(a as i64 * span + n[a] + kk) as usize];
    }
    p
}

/// How the interaction field is evaluated during a particle step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldMethod {
    /// Truncated kernel through a cell list.
    CellList,
    /// Untruncated periodised kernel through a Fourier sum.
    Spectral,
    /// Whichever of the two has the smaller work estimate.
    #[default]
    Auto,
}

/// Kernel-smoothed density of one species, ready for repeated queries.
#[derive(Debug, Clone)]
pub enum DensityField {
    Cells { cells: CellList, weight: f64 },
    Spectral(SpectralField),
}

impl DensityField {
    pub fn build(
        positions: &[f64],
        weight: f64,
        kernel: &Kernel,
        length: f64,
        targets: usize,
        method: FieldMethod,
    ) -> Self {
        let use_cells = match method {
            FieldMethod::CellList => true,
            FieldMethod::Spectral => false,
            FieldMethod::Auto => {
                let cells = CellList::new(positions, *kernel, length);
                let sources = positions.len() / kernel.dim;
                if cells.cost(targets) <= SpectralField::cost(kernel, length, sources, targets) {
                    return DensityField::Cells { cells, weight };
                }
                false
            }
        };
        if use_cells {
            DensityField::Cells {
                cells: CellList::new(positions, *kernel, length),
                weight,
            }
        } else {
            DensityField::Spectral(SpectralField::new(positions, weight, kernel, length))
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, DensityField::Spectral(_))
    }

    /// Field at `x`, leaving out source particle `exclude` (an index into the
    /// positions the field was built from).
    pub fn eval_excluding(&self, x: &[f64], exclude: Option<usize>) -> f64 {
        match self {
            DensityField::Cells { cells, weight } => cells.sum(x, exclude) * weight,
            DensityField::Spectral(s) => {
                let v = s.eval(x);
                if exclude.is_some() {
                    (v - s.self_value()).max(0.0)
                } else {
                    v
                }
            }
        }
    }

    /// Evaluates at every point of `targets` (flat, stride `dim`). With
    /// `exclude_self`, target `k` is assumed to be source `k`.
    pub fn eval_all(&self, targets: &[f64], dim: usize, exclude_self: bool) -> Vec<f64> {
        let eval = |(k, x): (usize, &[f64])| {
            self.eval_excluding(x, if exclude_self { Some(k) } else { None })
        };
        if targets.len() / dim >= 2048 {
            targets.par_chunks_exact(dim).enumerate().map(eval).collect()
        } else {
            targets.chunks_exact(dim).enumerate().map(eval).collect()
        }
    }
}

/// Smoothed densities `h_r = S_r * W` at every grid node, for each species.
/// Requires grid spacing `<= (1/alpha) / 4`.
pub fn smooth_to_grid(
    species_positions: &[&[f64]],
    weight: f64,
    kernel: &Kernel,
    grid: Grid,
) -> Result<GridField> {
    check_resolution(kernel, &grid)?;
    let mut out = GridField::zeros(grid, species_positions.len());
    for (vals, pos) in out.values.iter_mut().zip(species_positions) {
        deposit(vals, pos, weight, kernel, &grid);
    }
    Ok(out)
}

pub(crate) fn check_resolution(kernel: &Kernel, grid: &Grid) -> Result<()> {
    let width = 1.0 / kernel.alpha;
    if grid.spacing() > width / 4.0 * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse {
            spacing: grid.spacing(),
            width,
        });
    }
    Ok(())
}

fn deposit(vals: &mut [f64], positions: &[f64], weight: f64, kernel: &Kernel, grid: &Grid) {
    let dim = grid.dim;
    let h = grid.spacing();
    let rc = kernel.cutoff();
    let rc2 = rc * rc;
    let n = grid.nodes as i64;
    let a2 = 0.5 * kernel.alpha * kernel.alpha;
    let amp = kernel.peak() * weight;
    for x in positions.chunks_exact(dim) {
        let mut lo = [0i64; MAX_DIM];
        let mut hi = [0i64; MAX_DIM];
        for a in 0..dim {
            lo[a] = ((x[a] - rc) / h).ceil() as i64;
            hi[a] = ((x[a] + rc) / h).floor() as i64;
        }
        match dim {
            1 => {
                for i in lo[0]..=hi[0] {
                    let d = x[0] - i as f64 * h;
                    let r2 = d * d;
                    if r2 <= rc2 {
                        vals[i.rem_euclid(n) as usize] += amp * (-a2 * r2).exp();
                    }
                }
            }
            _ => {
                let mut j = lo;
                'outer: loop {
                    let mut r2 = 0.0;
                    let mut idx = 0usize;
                    for a in 0..dim {
                        let d = x[a] - j[a] as f64 * h;
                        r2 += d * d;
                        idx = idx * grid.nodes + j[a].rem_euclid(n) as usize;
                    }
                    if r2 <= rc2 {
                        vals[idx] += amp * (-a2 * r2).exp();
                    }
                    let mut a = dim;
                    loop {
                        if a == 0 {
                            break 'outer;
                        }
                        a -= 1;
                        j[a] += 1;
                        if j[a] <= hi[a] {
                            break;
                        }
                        j[a] = lo[a];
                    }
                }
            }
        }
    }
}

/// Rectangle-rule integral over the box of the truncated periodised kernel
/// centred at the origin, on a grid of `nodes` per axis.
pub fn kernel_mass(kernel: &Kernel, length: f64, nodes: usize) -> f64 {
    let grid = Grid {
        dim: kernel.dim,
        nodes,
        length,
    };
    let origin = [0.0; MAX_DIM];
    let field = smooth_unchecked(&origin[..kernel.dim], kernel, &grid);
    field.iter().sum::<f64>() * grid.cell_volume()
}

fn smooth_unchecked(positions: &[f64], kernel: &Kernel, grid: &Grid) -> Vec<f64> {
    let mut vals = vec![0.0; grid.node_count()];
    deposit(&mut vals, positions, 1.0, kernel, grid);
    vals
}

/// Wavenumber `|k|^2` of every FFT bin of `grid`, in FFT storage order.
fn wavenumbers_sq(grid: &Grid) -> Vec<f64> {
    let n = grid.nodes;
    let dk = 2.0 * PI / grid.length;
    let axis_k = |m: usize| {
        let s = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        s * dk
    };
    (0..grid.node_count())
        .map(|idx| {
            grid.unflatten(idx)
                .iter()
                .take(grid.dim)
                .map(|&m| axis_k(m).powi(2))
                .sum()
        })
        .collect()
}

/// In-place multi-dimensional FFT over a row-major grid.
fn fft_nd(data: &mut [Complex64], grid: &Grid, inverse: bool) {
    let n = grid.nodes;
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..grid.dim {
        let stride = n.pow((grid.dim - 1 - axis) as u32);
        for base in 0..grid.node_count() {
            if !(base / stride).is_multiple_of(n) {
                continue;
            }
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            fft.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[base + i * stride] = *v;
            }
        }
    }
}

fn spectrum(values: &[f64], grid: &Grid) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, grid, false);
    data
}

/// Periodic convolution `f * W` of a grid field with the untruncated kernel,
/// computed exactly for the trigonometric interpolant of `f`.
pub fn convolve_grid(values: &[f64], grid: &Grid, kernel: &Kernel) -> Vec<f64> {
    let mut data = spectrum(values, grid);
    for (c, k2) in data.iter_mut().zip(wavenumbers_sq(grid)) {
        *c *= kernel.transform(k2);
    }
    fft_nd(&mut data, grid, true);
    let scale = 1.0 / grid.node_count() as f64;
    data.iter().map(|c| c.re * scale).collect()
}

/// `||f - f * W_alpha||_2^2` by Parseval.
pub fn smoothing_defect_sq(values: &[f64], grid: &Grid, alpha: f64) -> f64 {
    let kernel = Kernel::new(grid.dim, alpha);
    let data = spectrum(values, grid);
    let sum: f64 = data
        .iter()
        .zip(wavenumbers_sq(grid))
        .map(|(c, k2)| c.norm_sqr() * (1.0 - kernel.transform(k2)).powi(2))
        .sum();
    sum * grid.cell_volume() / grid.node_count() as f64
}

/// `||grad f||_2^2` by Parseval.
pub fn gradient_norm_sq(values: &[f64], grid: &Grid) -> f64 {
    let data = spectrum(values, grid);
    let sum: f64 = data
        .iter()
        .zip(wavenumbers_sq(grid))
        .map(|(c, k2)| c.norm_sqr() * k2)
        .sum();
    sum * grid.cell_volume() / grid.node_count() as f64
}

/// Result of [`kernel_approx_decay`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub alphas: Vec<f64>,
    pub defects_sq: Vec<f64>,
    /// Least-squares slope of `ln defect` against `ln alpha`; `None` when every
    /// defect is zero (the field is constant or identically zero).
    pub slope: Option<f64>,
}

impl DecayFit {
    pub fn is_exact_zero(&self) -> bool {
        self.slope.is_none()
    }
}

/// Fits the decay exponent of `||f - f * W_alpha||_2^2` in `alpha` for the
/// first species of `f`.
pub fn kernel_approx_decay(f: &GridField, alphas: &[f64]) -> Result<DecayFit> {
    if alphas.len() < 3 {
        return Err(Error::Config(format!(
            "decay fit needs at least 3 alpha values, got {}",
            alphas.len()
        )));
    }
    let values = &f.values[0];
    let norm_sq = f.l2_norm_sq(0);
    let defects_sq: Vec<f64> = alphas
        .iter()
        .map(|&a| smoothing_defect_sq(values, &f.grid, a))
        .collect();
    // roundoff floor of the FFT route
    let floor = 1e-24 * norm_sq;
    if norm_sq == 0.0 || defects_sq.iter().all(|&d| d <= floor) {
        return Ok(DecayFit {
            alphas: alphas.to_vec(),
            defects_sq: vec![0.0; alphas.len()],
            slope: None,
        });
    }
    let xs: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = defects_sq.iter().map(|d| d.ln()).collect();
    Ok(DecayFit {
        alphas: alphas.to_vec(),
        defects_sq,
        slope: Some(least_squares_slope(&xs, &ys)),
    })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn scaling_examples() {
        assert!(validate_scaling(1, 0.1, 0.3).is_valid());
        assert!(!validate_scaling(1, 0.1, 0.34).is_valid());
        let r = validate_scaling(2, 0.2, 0.4);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::InteractionExponent { .. }));
        assert!(!validate_scaling(4, 0.1, 0.2).is_valid());
        assert!(!validate_scaling(1, 0.0, 0.3).is_valid());
    }

    #[test]
    fn scaled_alphas() {
        let s = ScalingParams::new(1, 0.5, 0.3, 100);
        assert!((s.alpha() - 10.0).abs() < 1e-12);
        let s = ScalingParams::new(2, 0.1, 0.3, 10_000);
        assert!((s.alpha() - 10f64.powf(0.2)).abs() < 1e-12);
        assert!((s.alpha_hat() - 10f64.powf(0.6)).abs() < 1e-12);
    }

    #[test]
    fn kernel_values() {
        let k = Kernel::new(1, 10.0);
        assert!((k.eval(&[0.0]) - 10.0 * INV_SQRT_2PI).abs() < 1e-12);
        assert!((Kernel::new(1, 1.0).eval(&[0.0]) - INV_SQRT_2PI).abs() < 1e-15);
        assert_eq!(k.eval(&[0.6001]), 0.0);
        assert_eq!(Kernel::new(3, 2.0).eval(&[2.0, 2.0, 2.0]), 0.0);
        // minimum image: 9.9 on a box of 10 is 0.1 away
        assert!((k.eval_min_image(&[9.9], 10.0) - k.eval(&[0.1])).abs() < 1e-12);
    }

    #[test]
    fn kernel_mass_is_one_when_box_is_wide() {
        for (dim, alpha, len, nodes) in [(1, 2.0, 10.0, 400), (2, 4.0, 5.0, 160), (3, 8.0, 2.5, 80)] {
            let k = Kernel::new(dim, alpha);
            assert!(alpha * len >= 20.0);
            let m = kernel_mass(&k, len, nodes);
            assert!((m - 1.0).abs() < 1e-6, "d={dim}: {m}");
        }
    }

    #[test]
    fn convolution_examples() {
        let k = Kernel::new(1, 10.0);
        let v = convolve_empirical(&[3.0], 0.01, &k, 10.0, &[3.0], None);
        assert!((v - 0.039_894_228_040_143_27).abs() < 1e-12);
        assert_eq!(convolve_empirical(&[], 0.01, &k, 10.0, &[3.0], None), 0.0);
        assert_eq!(convolve_empirical(&[1.0, 5.0], 0.01, &k, 10.0, &[3.0], None), 0.0);
    }

    fn random_positions(rng: &mut ChaCha8Rng, count: usize, dim: usize, length: f64) -> Vec<f64> {
        (0..count * dim).map(|_| rng.random::<f64>() * length).collect()
    }

    #[test]
    fn cell_list_handles_cutoff_wider_than_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 1..=2 {
            let k = Kernel::new(dim, 1.5);
            let length = 1.0;
            let pos = random_positions(&mut rng, 50, dim, length);
            let cells = CellList::new(&pos, k, length);
            for q in pos.chunks_exact(dim).take(5) {
                let a = cells.sum(q, None);
                let b = convolve_empirical_naive(&pos, 1.0, &k, length, q, None);
                assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn spectral_matches_truncated_sum_up_to_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (dim, alpha, length) in [(1, 2.5, 10.0), (2, 3.0, 4.0), (3, 4.0, 3.0)] {
            let k = Kernel::new(dim, alpha);
            let pos = random_positions(&mut rng, 200, dim, length);
            let spec = SpectralField::new(&pos, 0.01, &k, length);
            let cells = CellList::new(&pos, k, length);
            for (i, q) in pos.chunks_exact(dim).take(20).enumerate() {
                let a = spec.eval(q);
                let b = cells.sum(q, None) * 0.01;
                // six-sigma tail relative to the peak
                assert!((a - b).abs() < 1e-7 * k.peak(), "d={dim} {a} vs {b}");
                let c = (a - spec.self_value()).max(0.0);
                let d = cells.sum(q, Some(i)) * 0.01;
                assert!((c - d).abs() < 1e-7 * k.peak());
            }
        }
    }

    #[test]
    fn spectral_self_value_is_periodised_peak() {
        // wide box: only the central image matters
        let k = Kernel::new(1, 3.0);
        let s = SpectralField::new(&[0.0], 1.0, &k, 20.0);
        assert!((s.self_value() - k.peak()).abs() < 1e-12);
        // unit box, wide kernel: W_per is nearly flat with mean 1
        let k = Kernel::new(1, 2.5);
        let s = SpectralField::new(&[0.3], 1.0, &k, 1.0);
        let mean: f64 = (0..1000).map(|i| s.eval(&[i as f64 / 1000.0])).sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_normalisation_examples() {
        let g = Grid::new(1, 1024, 10.0).unwrap();
        let k = Kernel::new(1, 18.0);
        let empty: &[f64] = &[];
        let zero = smooth_to_grid(&[empty], 0.01, &k, g).unwrap();
        assert!(zero.values[0].iter().all(|&v| v == 0.0));

        let one = smooth_to_grid(&[&[3.3]], 0.01, &k, g).unwrap();
        assert!((one.integral(0) - 0.01).abs() < 1e-6 * 0.01);

        let coarse = Grid::new(1, 64, 10.0).unwrap();
        assert!(matches!(
            smooth_to_grid(&[&[3.3]], 0.01, &k, coarse),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn particles_on_every_node_give_flat_field() {
        let g = Grid::new(1, 512, 10.0).unwrap();
        let k = Kernel::new(1, 10.0);
        let pos: Vec<f64> = (0..512).map(|i| g.coord(i)[0]).collect();
        let f = smooth_to_grid(&[&pos], 1.0 / 512.0, &k, g).unwrap();
        // brute-force value at a few nodes
        for node in [0usize, 17, 300] {
            let x = g.coord(node)[0];
            let brute: f64 = pos
                .iter()
                .map(|y| k.eval_min_image(&[x - y], 10.0))
                .sum::<f64>()
                / 512.0;
            assert!((f.values[0][node] - brute).abs() < 1e-12);
        }
        let mean = f.values[0].iter().sum::<f64>() / 512.0;
        assert!(f.values[0].iter().all(|v| (v - mean).abs() < 0.01 * mean));
    }

    #[test]
    fn smoothing_two_dimensional_agrees_with_pointwise_convolution() {
        let g = Grid::new(2, 48, 4.0).unwrap();
        let k = Kernel::new(2, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pos = random_positions(&mut rng, 30, 2, 4.0);
        let f = smooth_to_grid(&[&pos], 0.1, &k, g).unwrap();
        for node in [0usize, 100, 2000] {
            let x = g.coord(node);
            let b = convolve_empirical_naive(&pos, 0.1, &k, 4.0, &x[..2], None);
            assert!((f.values[0][node] - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_fit_edge_cases() {
        let g = Grid::new(1, 512, 10.0).unwrap();
        let zero = GridField::zeros(g, 1);
        assert!(kernel_approx_decay(&zero, &[4.0, 8.0, 16.0]).unwrap().is_exact_zero());
        let flat = GridField::from_fn(g, 1, |_, _| 0.7);
        assert!(kernel_approx_decay(&flat, &[4.0, 8.0, 16.0]).unwrap().is_exact_zero());
        assert!(kernel_approx_decay(&flat, &[4.0, 8.0]).is_err());
    }

    #[test]
    fn smoothing_defect_respects_gradient_bound() {
        // (1 - e^{-x})^2 <= x gives ||f - f*W||^2 <= ||grad f||^2 / (2 alpha^2)
        let g = Grid::new(1, 1024, 10.0).unwrap();
        let f = GridField::gaussian_bump(g, 0.3);
        let grad = gradient_norm_sq(&f.values[0], &g);
        for alpha in [1.0, 4.0, 16.0] {
            let defect = smoothing_defect_sq(&f.values[0], &g, alpha);
            assert!(defect <= grad / (2.0 * alpha * alpha));
        }
    }

    #[test]
    fn pointwise_smoothing_error_shrinks_along_doubling_sequence() {
        let g = Grid::new(1, 2048, 10.0).unwrap();
        let f = GridField::gaussian_bump(g, 0.7);
        let params = ScalingParams::new(1, 0.15, 0.3, 1000);
        let mut prev = f64::INFINITY;
        for i in 0..6 {
            let k = params.with_n(1000 << i).interaction_kernel();
            let conv = convolve_grid(&f.values[0], &g, &k);
            let err = (conv[1024] - f.values[0][1024]).abs();
            assert!(err < prev, "step {i}: {err} >= {prev}");
            prev = err;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_is_symmetric(dim in 1usize..=3, alpha in 0.5f64..20.0,
                               x in prop::collection::vec(-1.0f64..1.0, 3)) {
            let k = Kernel::new(dim, alpha);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert_eq!(k.eval(&x), k.eval(&neg));
            prop_assert_eq!(k.eval_min_image(&x, 1.7), k.eval_min_image(&neg, 1.7));
        }

        #[test]
        fn cell_list_equals_naive(seed in any::<u64>(), dim in 1usize..=3, count in 1usize..300,
                                  alpha in 0.5f64..8.0, length in 1.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = Kernel::new(dim, alpha);
            let pos = random_positions(&mut rng, count, dim, length);
            let cells = CellList::new(&pos, k, length);
            let q = random_positions(&mut rng, 1, dim, length);
            let a = cells.sum(&q, None);
            let b = convolve_empirical_naive(&pos, 1.0, &k, length, &q, None);
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }
}
