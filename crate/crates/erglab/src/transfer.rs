//! Ulam discretization of the transfer operator and the uniform /
//! uniformly-returning set diagnostics.
//!
//! The transfer operator with respect to Lebesgue measure is approximated by
//! the row-stochastic matrix `P[i][j] = lambda(cell_i ∩ T^{-1} cell_j) /
//! lambda(cell_i)`. Both interval maps are piecewise monotone with two full
//! increasing branches, so the exact entries follow from branch inverses;
//! a Monte-Carlo mode serves as an independent cross-check.
//!
//! The mu-statements are tested in lambda-conjugated form: with `h = dmu/dl`
//! replaced by the Cesaro shape estimate `hhat`,
//!
//! - uniformly returning: `W_n * G(1-b) G(1+b) * (T^n g)(x) / hhat(x)`
//!   flattens over the cells of `A` as `n` grows;
//! - uniform: `(1/a_n) sum_{k<n} (T^k g)(x) / hhat(x)` flattens, with
//!   `a_n = n / (G(1+alpha) G(2-alpha) W_n)`.
//!
//! Only ratio/flattening statements are asserted; absolute constants cancel,
//! so no outside knowledge of invariant densities enters.

use crate::dynamics::{thaler_branch_point, Interval, IntervalMap};
use crate::processes::TailTable;
use crate::rng::replica_rng;
use crate::special::gamma_fn;
use rand::Rng;
use rayon::prelude::*;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("invalid partition: {0}")]
    InvalidPartition(&'static str),
    #[error("degenerate cell of width {0:e}")]
    DegenerateCell(f64),
    #[error("density vector has wrong length or mass (expected cell-weighted sum 1)")]
    InvalidDensity,
    #[error("mass drifted by {0:e} during iteration")]
    MassDrift(f64),
    #[error("samples_per_cell must be at least 100")]
    TooFewSamples,
    #[error("wandering table too short for the requested grid")]
    WanderingTableTooShort,
    #[error("no cells found inside the requested interval")]
    EmptyCellRange,
}

/// Minimal admissible cell width.
const WIDTH_FLOOR: f64 = 1e-14;

/// Cell boundaries `0 = c_0 < c_1 < ... < c_M = 1`.
#[derive(Debug, Clone)]
pub struct Partition {
    bounds: Vec<f64>,
}

impl Partition {
    pub fn uniform(m: usize) -> Result<Self, TransferError> {
        if m < 2 {
            return Err(TransferError::InvalidPartition("need at least 2 cells"));
        }
        let bounds = (0..=m).map(|i| i as f64 / m as f64).collect();
        Self::from_bounds(bounds)
    }

    /// Geometric refinement near the indifferent fixed point: below `pivot`
    /// the boundaries shrink geometrically with `ratio`, above it the grid is
    /// uniform. The geometric depth stops before cells would cross the width
    /// floor.
    pub fn geometric(m: usize, pivot: f64, ratio: f64) -> Result<Self, TransferError> {
        if !(0.0 < pivot && pivot < 1.0) || !(0.0 < ratio && ratio < 1.0) {
            return Err(TransferError::InvalidPartition("pivot and ratio must lie in (0, 1)"));
        }
        if m < 16 {
            return Err(TransferError::InvalidPartition("need at least 16 cells"));
        }
        // deepest boundary stays above 10 * WIDTH_FLOOR
        let max_depth = ((1e-13 / pivot).ln() / ratio.ln()).floor() as usize + 1;
        let n_geo = max_depth.min(m / 2);
        let n_uni = m - n_geo;
        let mut bounds = Vec::with_capacity(m + 1);
        bounds.push(0.0);
        for j in (1..n_geo).rev() {
            bounds.push(pivot * ratio.powi(j as i32));
        }
        for i in 0..=n_uni {
            bounds.push(pivot + (1.0 - pivot) * i as f64 / n_uni as f64);
        }
        *bounds.last_mut().unwrap() = 1.0;
        Self::from_bounds(bounds)
    }

    pub fn from_bounds(bounds: Vec<f64>) -> Result<Self, TransferError> {
        if bounds.len() < 3 || bounds[0] != 0.0 || *bounds.last().unwrap() != 1.0 {
            return Err(TransferError::InvalidPartition("bounds must run from 0 to 1"));
        }
        for w in bounds.windows(2) {
            if w[1] - w[0] <= WIDTH_FLOOR {
                return Err(TransferError::DegenerateCell(w[1] - w[0]));
            }
        }
        Ok(Self { bounds })
    }

    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn cell_of(&self, x: f64) -> usize {
        let idx = self.bounds.partition_point(|&b| b <= x);
        idx.saturating_sub(1).min(self.len() - 1)
    }

    pub fn cell(&self, j: usize) -> (f64, f64) {
        (self.bounds[j], self.bounds[j + 1])
    }

    pub fn width(&self, j: usize) -> f64 {
        self.bounds[j + 1] - self.bounds[j]
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        0.5 * (self.bounds[j] + self.bounds[j + 1])
    }

    /// Indices of the cells contained in `iv` (up to 1e-12 slack).
    pub fn cells_inside(&self, iv: &Interval) -> Range<usize> {
        let mut lo = self.len();
        let mut hi = 0;
        for j in 0..self.len() {
            let (a, b) = self.cell(j);
            if a >= iv.lo - 1e-12 && b <= iv.hi + 1e-12 {
                lo = lo.min(j);
                hi = hi.max(j + 1);
            }
        }
        lo..hi.max(lo)
    }

    /// Normalized indicator of `iv` as a cell density (mean value over each
    /// cell of `1_iv / lambda(iv)`).
    pub fn indicator_density(&self, iv: &Interval) -> Vec<f64> {
        (0..self.len())
            .map(|j| {
                let (a, b) = self.cell(j);
                let overlap = (b.min(iv.hi) - a.max(iv.lo)).max(0.0);
                overlap / (self.width(j) * iv.length())
            })
            .collect()
    }
}

/// Maps available to the Ulam builder: the two interval maps plus the
/// doubling map as a sanity case with known uniform invariant density.
#[derive(Debug, Clone, Copy)]
pub enum UlamMap {
    Thaler,
    LasotaYorke,
    Doubling,
}

struct BranchGeom {
    lo: f64,
    hi: f64,
}

impl UlamMap {
    pub fn tag(&self) -> &'static str {
        match self {
            UlamMap::Thaler => "thaler",
            UlamMap::LasotaYorke => "lasota_yorke",
            UlamMap::Doubling => "doubling",
        }
    }

    fn branches(&self) -> Vec<BranchGeom> {
        match self {
            UlamMap::Thaler => {
                let a = thaler_branch_point();
                vec![BranchGeom { lo: 0.0, hi: a }, BranchGeom { lo: a, hi: 1.0 }]
            }
            UlamMap::LasotaYorke | UlamMap::Doubling => {
                vec![BranchGeom { lo: 0.0, hi: 0.5 }, BranchGeom { lo: 0.5, hi: 1.0 }]
            }
        }
    }

    fn forward(&self, branch: usize, x: f64) -> f64 {
        match (self, branch) {
            (UlamMap::Thaler, 0) => {
                if x == 0.0 {
                    0.0
                } else {
                    (x + x * x * (-1.0 / x).exp()).min(1.0)
                }
            }
            (UlamMap::Thaler, 1) => {
                let a = thaler_branch_point();
                ((x - a) / (1.0 - a)).clamp(0.0, 1.0)
            }
            (UlamMap::LasotaYorke, 0) => x / (1.0 - x),
            (UlamMap::LasotaYorke, 1) => 2.0 * x - 1.0,
            (UlamMap::Doubling, 0) => 2.0 * x,
            (UlamMap::Doubling, 1) => 2.0 * x - 1.0,
            _ => unreachable!("invalid branch"),
        }
    }

    /// Inverse of the (increasing) branch; Thaler's left branch is inverted
    /// by bisection.
    fn inverse(&self, branch: usize, y: f64) -> f64 {
        match (self, branch) {
            (UlamMap::Thaler, 0) => {
                let a = thaler_branch_point();
                let (mut lo, mut hi) = (0.0_f64, a);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.forward(0, mid) > y {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            }
            (UlamMap::Thaler, 1) => {
                let a = thaler_branch_point();
                a + y * (1.0 - a)
            }
            (UlamMap::LasotaYorke, 0) => y / (1.0 + y),
            (UlamMap::LasotaYorke, 1) => 0.5 * (y + 1.0),
            (UlamMap::Doubling, 0) => 0.5 * y,
            (UlamMap::Doubling, 1) => 0.5 * (y + 1.0),
            _ => unreachable!("invalid branch"),
        }
    }

    /// One application with the left-closed branch-boundary convention.
    pub fn apply(&self, x: f64) -> f64 {
        let branches = self.branches();
        if x <= branches[0].hi {
            self.forward(0, x)
        } else {
            self.forward(1, x)
        }
    }

    pub fn from_interval_map(map: &IntervalMap) -> Self {
        match map {
            IntervalMap::Thaler(_) => UlamMap::Thaler,
            IntervalMap::LasotaYorke(_) => UlamMap::LasotaYorke,
        }
    }
}

/// Sparse row-stochastic Ulam matrix.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    partition: Partition,
    rows: Vec<Vec<(u32, f64)>>,
    tag: &'static str,
}

impl UlamOperator {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn tag(&self) -> &'static str {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(_, w)| w).sum()).collect()
    }

    /// Pull a dense entry (zero when absent).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(col, _)| col as usize == j)
            .map(|&(_, w)| w)
            .unwrap_or(0.0)
    }

    /// One push of a mass vector: `out_j = sum_i mass_i P[i][j]`.
    pub fn apply_mass(&self, mass: &[f64]) -> Vec<f64> {
        debug_assert_eq!(mass.len(), self.rows.len());
        let mut out = vec![0.0; mass.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let m = mass[i];
            if m == 0.0 {
                continue;
            }
            for &(j, w) in row {
                out[j as usize] += m * w;
            }
        }
        out
    }
}

/// Exact Ulam matrix from the branch inverses.
pub fn build_ulam_exact(map: UlamMap, partition: Partition) -> Result<UlamOperator, TransferError> {
    let m = partition.len();
    let branches = map.branches();
    let rows: Vec<Vec<(u32, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let (clo, chi) = partition.cell(i);
            let wi = chi - clo;
            let mut row: Vec<(u32, f64)> = Vec::new();
            for (b, geom) in branches.iter().enumerate() {
                let slo = clo.max(geom.lo);
                let shi = chi.min(geom.hi);
                if shi <= slo {
                    continue;
                }
                let ylo = map.forward(b, slo);
                let yhi = map.forward(b, shi);
                if yhi <= ylo {
                    continue;
                }
                let jlo = partition.cell_of(ylo);
                let jhi = partition.cell_of(yhi.min(1.0 - f64::EPSILON)).max(jlo);
                let mut prev_x = slo;
                for j in jlo..=jhi {
                    let y_right = partition.cell(j).1.min(yhi);
                    let x_right = if y_right >= yhi {
                        shi
                    } else {
                        map.inverse(b, y_right).clamp(prev_x, shi)
                    };
                    let w = x_right - prev_x;
                    if w > 0.0 {
                        row.push((j as u32, w / wi));
                    }
                    prev_x = x_right;
                }
            }
            normalize_row(&mut row);
            row
        })
        .collect();
    Ok(UlamOperator { partition, rows, tag: map.tag() })
}

/// Monte-Carlo Ulam matrix; row `i` uses its own RNG stream derived from
/// `master_seed`, so the build is deterministic and parallel by row.
pub fn build_ulam_mc(
    map: UlamMap,
    partition: Partition,
    samples_per_cell: u32,
    master_seed: u64,
) -> Result<UlamOperator, TransferError> {
    if samples_per_cell < 100 {
        return Err(TransferError::TooFewSamples);
    }
    let m = partition.len();
    let rows: Vec<Vec<(u32, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(master_seed, i as u64, 0);
            let (clo, chi) = partition.cell(i);
            let w = chi - clo;
            let mut counts: std::collections::BTreeMap<u32, u32> = std::collections::BTreeMap::new();
            for _ in 0..samples_per_cell {
                let x = clo + rng.random::<f64>() * w;
                let y = map.apply(x).clamp(0.0, 1.0);
                *counts.entry(partition.cell_of(y) as u32).or_insert(0) += 1;
            }
            let mut row: Vec<(u32, f64)> = counts
                .into_iter()
                .map(|(j, c)| (j, c as f64 / samples_per_cell as f64))
                .collect();
            normalize_row(&mut row);
            row
        })
        .collect();
    Ok(UlamOperator { partition, rows, tag: map.tag() })
}

fn normalize_row(row: &mut [(u32, f64)]) {
    let sum: f64 = row.iter().map(|&(_, w)| w).sum();
    if sum > 0.0 {
        for (_, w) in row.iter_mut() {
            *w /= sum;
        }
    }
}

fn validate_density(op: &UlamOperator, g: &[f64]) -> Result<Vec<f64>, TransferError> {
    if g.len() != op.len() || g.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(TransferError::InvalidDensity);
    }
    let mass: Vec<f64> = g.iter().enumerate().map(|(j, &v)| v * op.partition.width(j)).collect();
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(TransferError::InvalidDensity);
    }
    Ok(mass)
}

/// Iterate the density `steps` times, reporting the checkpointed densities.
///
/// `g` is a Lebesgue density per cell (cell-weighted sum 1). Mass is
/// conserved to 1e-10 at every step; a larger drift is an error.
pub fn push_density(
    op: &UlamOperator,
    g: &[f64],
    checkpoints: &[u64],
) -> Result<Vec<(u64, Vec<f64>)>, TransferError> {
    let mut mass = validate_density(op, g)?;
    let max_n = checkpoints.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(checkpoints.len());
    if checkpoints.contains(&0) {
        out.push((0, g.to_vec()));
    }
    for step in 1..=max_n {
        mass = op.apply_mass(&mass);
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(TransferError::MassDrift((total - 1.0).abs()));
        }
        if checkpoints.contains(&step) {
            let dens: Vec<f64> =
                mass.iter().enumerate().map(|(j, &m)| m / op.partition.width(j)).collect();
            out.push((step, dens));
        }
    }
    Ok(out)
}

/// Cesaro normalizer from the wandering rate:
/// `a_n = n / (Gamma(1+alpha) Gamma(2-alpha) W_n)`.
pub fn cesaro_normalizer(wtab: &TailTable, alpha: f64, n: u64) -> Result<f64, TransferError> {
    let wn = wtab.wandering_rate(n).map_err(|_| TransferError::WanderingTableTooShort)?;
    Ok(n as f64 / (gamma_fn(1.0 + alpha) * gamma_fn(2.0 - alpha) * wn))
}

/// Cesaro estimate of the invariant-density shape on the cells right of
/// `cut`, normalized to mean 1 over the `a_cells` range.
#[derive(Debug, Clone)]
pub struct DensityShape {
    /// Per-cell values; NaN on cells left of the cut.
    pub values: Vec<f64>,
    pub retained: Range<usize>,
    /// Number of retained cells that sat below the numerical floor before
    /// normalization.
    pub floor_warnings: usize,
}

impl DensityShape {
    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }
}

/// Estimate the shape of the invariant density via the normalized Cesaro sum
/// `(1/a_n) sum_{k<n} (T^k g)`, restricted to cells with lower edge >= `cut`.
pub fn estimate_density_shape(
    op: &UlamOperator,
    g: &[f64],
    wtab: &TailTable,
    alpha: f64,
    n_cesaro: u64,
    cut: f64,
    a_cells: Range<usize>,
) -> Result<DensityShape, TransferError> {
    let mut mass = validate_density(op, g)?;
    let mut cesaro = mass.clone(); // k = 0 term
    for _ in 1..n_cesaro {
        mass = op.apply_mass(&mass);
        for (c, &m) in cesaro.iter_mut().zip(&mass) {
            *c += m;
        }
    }
    let a_n = cesaro_normalizer(wtab, alpha, n_cesaro)?;
    let m = op.len();
    let mut values = vec![f64::NAN; m];
    let mut floor_warnings = 0usize;
    let mut first = m;
    for j in 0..m {
        if op.partition.cell(j).0 < cut {
            continue;
        }
        first = first.min(j);
        let v = cesaro[j] / (op.partition.width(j) * a_n);
        if v < 1e-12 {
            floor_warnings += 1;
        }
        values[j] = v;
    }
    if first >= m || a_cells.start < first || a_cells.end > m {
        return Err(TransferError::EmptyCellRange);
    }
    // normalize: weighted mean over the A-cells is exactly 1
    let w_total: f64 = a_cells.clone().map(|j| op.partition.width(j)).sum();
    let mean: f64 =
        a_cells.clone().map(|j| values[j] * op.partition.width(j)).sum::<f64>() / w_total;
    if !(mean > 0.0) {
        return Err(TransferError::EmptyCellRange);
    }
    for v in &mut values[first..] {
        *v /= mean;
    }
    Ok(DensityShape { values, retained: first..m, floor_warnings })
}

/// Equilibrated-iterate variant of the shape estimate: the normalized
/// density `T^N g` for `N` well past the diagnostic horizon.
///
/// The Cesaro shape keeps an O(1/N) imprint of the early iterates, which
/// floors sup/inf diagnostics above the genuine `T^n` transient; the pure
/// iterate sheds its start dependence instead, so it is the right reference
/// for the uniformly-returning check.
pub fn estimate_density_shape_iterate(
    op: &UlamOperator,
    g: &[f64],
    n_push: u64,
    cut: f64,
    a_cells: Range<usize>,
) -> Result<DensityShape, TransferError> {
    let snapshots = push_density(op, g, &[n_push])?;
    let (_, dens) = snapshots.into_iter().next().ok_or(TransferError::EmptyCellRange)?;
    let m = op.len();
    let mut values = vec![f64::NAN; m];
    let mut floor_warnings = 0usize;
    let mut first = m;
    for j in 0..m {
        if op.partition.cell(j).0 < cut {
            continue;
        }
        first = first.min(j);
        if dens[j] < 1e-12 {
            floor_warnings += 1;
        }
        values[j] = dens[j];
    }
    if first >= m || a_cells.start < first || a_cells.end > m {
        return Err(TransferError::EmptyCellRange);
    }
    let w_total: f64 = a_cells.clone().map(|j| op.partition.width(j)).sum();
    let mean: f64 =
        a_cells.clone().map(|j| values[j] * op.partition.width(j)).sum::<f64>() / w_total;
    if !(mean > 0.0) {
        return Err(TransferError::EmptyCellRange);
    }
    for v in &mut values[first..] {
        *v /= mean;
    }
    Ok(DensityShape { values, retained: first..m, floor_warnings })
}

/// Per-checkpoint ratio summary over the cells of `A`.
#[derive(Debug, Clone, Copy)]
pub struct RatioRow {
    pub n: u64,
    pub sup: f64,
    pub inf: f64,
    pub median: f64,
    /// Integrated (covariance-style) variant: the same normalization applied
    /// to the total mass on `A` instead of cell-wise values.
    pub integrated: f64,
}

/// Result of the uniformly-returning check.
#[derive(Debug, Clone)]
pub struct ReturningCheck {
    pub rows: Vec<RatioRow>,
    /// `(n, median over A-cells of r_n / r_{n/2})` for grid points whose half
    /// is also on the grid; the medians approaching 1 is the Cauchy-style
    /// surrogate for the unproven limit constant.
    pub doubling_median: Vec<(u64, f64)>,
}

/// Uniformly-returning diagnostic: per `n`, sup/inf/median over the cells of
/// `A` of `r_n(x) = W_n G(1-beta) G(1+beta) (T^n g)(x) / hhat(x)`.
pub fn check_uniformly_returning(
    op: &UlamOperator,
    a_cells: Range<usize>,
    g: &[f64],
    wtab: &TailTable,
    beta: f64,
    n_grid: &[u64],
    hhat: &DensityShape,
) -> Result<ReturningCheck, TransferError> {
    if a_cells.is_empty() || a_cells.end > op.len() {
        return Err(TransferError::EmptyCellRange);
    }
    let gamma_corr = gamma_fn(1.0 - beta) * gamma_fn(1.0 + beta);
    let snapshots = push_density(op, g, n_grid)?;
    let mut rows = Vec::with_capacity(snapshots.len());
    let mut per_cell: Vec<(u64, Vec<f64>)> = Vec::with_capacity(snapshots.len());
    for (n, dens) in &snapshots {
        let wn = wtab.wandering_rate(*n).map_err(|_| TransferError::WanderingTableTooShort)?;
        let r: Vec<f64> =
            a_cells.clone().map(|j| wn * gamma_corr * dens[j] / hhat.value(j)).collect();
        let sup = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inf = r.iter().cloned().fold(f64::INFINITY, f64::min);
        let med = median(&r);
        let mass_a: f64 = a_cells.clone().map(|j| dens[j] * op.partition.width(j)).sum();
        let href_a: f64 = a_cells.clone().map(|j| hhat.value(j) * op.partition.width(j)).sum();
        rows.push(RatioRow {
            n: *n,
            sup,
            inf,
            median: med,
            integrated: wn * gamma_corr * mass_a / href_a,
        });
        per_cell.push((*n, r));
    }
    let mut doubling_median = Vec::new();
    for (n, r) in &per_cell {
        if let Some((_, half)) = per_cell.iter().find(|(m, _)| 2 * m == *n) {
            let ratios: Vec<f64> = r.iter().zip(half).map(|(a, b)| a / b).collect();
            doubling_median.push((*n, median(&ratios)));
        }
    }
    Ok(ReturningCheck { rows, doubling_median })
}

/// Uniform-set diagnostic: per `n`, sup/inf/median over the cells of `A` of
/// `(1/a_n) sum_{k<n} (T^k g)(x) / hhat(x)`.
pub fn check_uniform(
    op: &UlamOperator,
    a_cells: Range<usize>,
    g: &[f64],
    wtab: &TailTable,
    alpha: f64,
    n_grid: &[u64],
    hhat: &DensityShape,
) -> Result<Vec<RatioRow>, TransferError> {
    if a_cells.is_empty() || a_cells.end > op.len() {
        return Err(TransferError::EmptyCellRange);
    }
    let mut mass = validate_density(op, g)?;
    let mut cesaro = mass.clone();
    let max_n = n_grid.iter().copied().max().unwrap_or(0);
    let mut rows = Vec::with_capacity(n_grid.len());
    for step in 1..=max_n {
        mass = op.apply_mass(&mass);
        for (c, &m) in cesaro.iter_mut().zip(&mass) {
            *c += m;
        }
        if n_grid.contains(&step) {
            // cesaro now holds sum_{k<=step}; the k<n convention uses n = step+1
            let n = step + 1;
            let a_n = cesaro_normalizer(wtab, alpha, n)?;
            let r: Vec<f64> = a_cells
                .clone()
                .map(|j| cesaro[j] / (op.partition.width(j) * a_n * hhat.value(j)))
                .collect();
            let sup = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let inf = r.iter().cloned().fold(f64::INFINITY, f64::min);
            let mass_a: f64 =
                a_cells.clone().map(|j| cesaro[j]).sum::<f64>() / a_n;
            let href_a: f64 =
                a_cells.clone().map(|j| hhat.value(j) * op.partition.width(j)).sum();
            rows.push(RatioRow {
                n: step,
                sup,
                inf,
                median: median(&r),
                integrated: mass_a / href_a,
            });
        }
    }
    Ok(rows)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TailKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn partition_basics() {
        let p = Partition::uniform(4).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.cell_of(0.0), 0);
        assert_eq!(p.cell_of(0.25), 1);
        assert_eq!(p.cell_of(1.0), 3);
        assert_eq!(p.cell_of(0.999), 3);

        let g = Partition::geometric(256, 0.05, 0.9).unwrap();
        assert_eq!(g.len(), 256);
        // strictly increasing with widths above the floor
        for j in 0..g.len() {
            assert!(g.width(j) > WIDTH_FLOOR);
        }
        // refinement concentrates near 0
        assert!(g.width(0) < g.width(g.len() - 1));
    }

    #[test]
    fn doubling_map_two_cells() {
        let op = build_ulam_exact(UlamMap::Doubling, Partition::uniform(2).unwrap()).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(op.entry(i, 0), 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(op.entry(i, 1), 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn row_sums_are_one() {
        for map in [UlamMap::LasotaYorke, UlamMap::Thaler, UlamMap::Doubling] {
            let op = build_ulam_exact(map, Partition::geometric(128, 0.05, 0.9).unwrap()).unwrap();
            for (i, s) in op.row_sums().iter().enumerate() {
                assert!((s - 1.0).abs() < 1e-12, "row {i} of {} sums to {s}", op.tag());
            }
        }
    }

    #[test]
    fn stochasticity_survives_matrix_powers() {
        let op = build_ulam_exact(UlamMap::LasotaYorke, Partition::uniform(64).unwrap()).unwrap();
        // left action: total mass persists over 1000 pushes
        let mut mass = vec![1.0 / 64.0; 64];
        for _ in 0..1000 {
            mass = op.apply_mass(&mass);
        }
        assert_abs_diff_eq!(mass.iter().sum::<f64>(), 1.0, epsilon = 1e-9);

        // right action: the row sums of the 1000th matrix power stay 1
        let mut v = vec![1.0; 64];
        for _ in 0..1000 {
            let mut next = vec![0.0; 64];
            for (i, slot) in next.iter_mut().enumerate() {
                *slot = op.row(i).iter().map(|&(j, w)| w * v[j as usize]).sum();
            }
            v = next;
        }
        for (i, &s) in v.iter().enumerate() {
            assert!((s - 1.0).abs() < 1e-9, "row {i} of the power sums to {s}");
        }
    }

    #[test]
    fn exact_vs_mc_within_three_standard_errors() {
        let m = 32;
        let s = 20_000u32;
        let part = Partition::uniform(m).unwrap();
        let exact = build_ulam_exact(UlamMap::LasotaYorke, part.clone()).unwrap();
        let mc = build_ulam_mc(UlamMap::LasotaYorke, part, s, 31337).unwrap();
        for i in 0..m {
            for j in 0..m {
                let p = exact.entry(i, j);
                let p_hat = mc.entry(i, j);
                let se = (p * (1.0 - p) / s as f64).sqrt();
                let tol = 3.0 * se + 2.0 / s as f64;
                assert!(
                    (p_hat - p).abs() <= tol,
                    "entry ({i},{j}): exact {p}, mc {p_hat}, tol {tol}"
                );
            }
        }
    }

    #[test]
    fn mc_build_rejects_small_samples() {
        let part = Partition::uniform(8).unwrap();
        assert!(matches!(
            build_ulam_mc(UlamMap::Doubling, part, 10, 0),
            Err(TransferError::TooFewSamples)
        ));
    }

    #[test]
    fn ly_cell_at_half_splits_between_branches() {
        // the cell containing 1/2 has preimage mass under both branches
        let m = 16;
        let op = build_ulam_exact(UlamMap::LasotaYorke, Partition::uniform(m).unwrap()).unwrap();
        let i = 7; // cell [7/16, 8/16], straddles nothing but maps via branch 1 only
        assert!(op.row(i).len() > 1);
        let i_mid = 8; // cell [8/16, 9/16] right of 1/2: branch 2
        let sum: f64 = op.row(i_mid).iter().map(|&(_, w)| w).sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn push_density_conserves_and_keeps_doubling_uniform() {
        let op = build_ulam_exact(UlamMap::Doubling, Partition::uniform(32).unwrap()).unwrap();
        let g = vec![1.0; 32];
        let out = push_density(&op, &g, &[1, 10, 1000]).unwrap();
        for (_, dens) in &out {
            for &v in dens {
                assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn ly_mass_leaks_toward_fixed_point() {
        let part = Partition::geometric(256, 0.05, 0.9).unwrap();
        let op = build_ulam_exact(UlamMap::LasotaYorke, part).unwrap();
        let m = op.len();
        let g = vec![1.0; m];
        let out = push_density(&op, &g, &[1, 50, 200, 800]).unwrap();
        // mass on [0, 0.05) grows along the run
        let low_mass = |dens: &Vec<f64>| -> f64 {
            (0..m)
                .filter(|&j| op.partition().cell(j).1 <= 0.05 + 1e-12)
                .map(|j| dens[j] * op.partition().width(j))
                .sum()
        };
        let mut prev = 0.0;
        for (_, dens) in &out {
            let v = low_mass(dens);
            assert!(v >= prev - 1e-9, "near-zero mass must be nondecreasing");
            prev = v;
        }
        assert!(prev > 0.3, "mass should accumulate near the indifferent fixed point");
    }

    #[test]
    fn density_shape_doubling_is_flat() {
        let part = Partition::uniform(64).unwrap();
        let op = build_ulam_exact(UlamMap::Doubling, part).unwrap();
        // probability-preserving sanity case: wandering rate constant; the
        // indicator start leaves a O(1/n) transient in the Cesaro mean
        let t = vec![1.0f64].into_iter().chain(std::iter::repeat(0.0)).take(6000).collect();
        let wtab = TailTable::from_values(
            t,
            1.0,
            crate::processes::TailSource::Empirical { sample_count: 0, censored: 0 },
        )
        .unwrap();
        let a = Interval::new(0.25, 0.75).unwrap();
        let a_cells = op.partition().cells_inside(&a);
        let g = op.partition().indicator_density(&a);
        let shape =
            estimate_density_shape(&op, &g, &wtab, 1.0, 5000, 0.05, a_cells.clone()).unwrap();
        for j in shape.retained.clone() {
            assert_abs_diff_eq!(shape.value(j), 1.0, epsilon = 1e-3);
        }
        // normalization: mean over A is exactly 1
        let w: f64 = a_cells.clone().map(|j| op.partition().width(j)).sum();
        let mean: f64 =
            a_cells.clone().map(|j| shape.value(j) * op.partition().width(j)).sum::<f64>() / w;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ly_density_shape_decreases() {
        let part = Partition::geometric(512, 0.05, 0.9).unwrap();
        let op = build_ulam_exact(UlamMap::LasotaYorke, part).unwrap();
        let wtab = TailTable::exact(TailKind::Harmonic, 800); // W ~ ln n surrogate
        let a = Interval::new(0.5, 1.0).unwrap();
        let a_cells = op.partition().cells_inside(&a);
        let g = op.partition().indicator_density(&a);
        let shape = estimate_density_shape(&op, &g, &wtab, 1.0, 600, 0.1, a_cells).unwrap();
        // decreasing-in-x trend: compare cell values at 0.15, 0.5, 0.9
        let v = |x: f64| shape.value(op.partition().cell_of(x));
        assert!(v(0.15) > v(0.5));
        assert!(v(0.5) > v(0.9));
    }

    #[test]
    fn returning_check_flattens_for_ly() {
        let part = Partition::geometric(1024, 0.05, 0.9).unwrap();
        let op = build_ulam_exact(UlamMap::LasotaYorke, part).unwrap();
        let wtab = TailTable::exact(TailKind::Harmonic, 2000);
        let a = Interval::new(0.5, 1.0).unwrap();
        let a_cells = op.partition().cells_inside(&a);
        let g = op.partition().indicator_density(&a);
        let hhat =
            estimate_density_shape_iterate(&op, &g, 3200, 0.05, a_cells.clone()).unwrap();
        let check =
            check_uniformly_returning(&op, a_cells.clone(), &g, &wtab, 0.0, &[100, 200, 400, 800], &hhat)
                .unwrap();
        for row in &check.rows {
            assert!(row.sup >= row.inf);
        }
        let spreads: Vec<f64> = check.rows.iter().map(|r| r.sup / r.inf).collect();
        for w in spreads.windows(2) {
            assert!(w[1] < w[0], "sup/inf ratio should flatten: {spreads:?}");
        }
        // doubling ratios near 1 at the largest paired n
        let &(_, med) = check.doubling_median.last().unwrap();
        assert!((med - 1.0).abs() < 0.1, "doubling median = {med}");
    }

    #[test]
    fn uniform_check_flattens_and_cesaro_grows() {
        let part = Partition::geometric(1024, 0.05, 0.9).unwrap();
        let op = build_ulam_exact(UlamMap::LasotaYorke, part).unwrap();
        let wtab = TailTable::exact(TailKind::Harmonic, 2000);
        let a = Interval::new(0.5, 1.0).unwrap();
        let a_cells = op.partition().cells_inside(&a);
        let g = op.partition().indicator_density(&a);
        let hhat =
            estimate_density_shape(&op, &g, &wtab, 1.0, 800, 0.05, a_cells.clone()).unwrap();
        let rows =
            check_uniform(&op, a_cells.clone(), &g, &wtab, 1.0, &[100, 200, 400, 800], &hhat)
                .unwrap();
        let first = rows.first().unwrap();
        let last = rows.last().unwrap();
        assert!(last.sup / last.inf <= first.sup / first.inf + 1e-9);

        // conservativity surrogate: raw Cesaro sums grow without bound on A
        let mut mass = validate_density(&op, &g).unwrap();
        let mut cesaro = mass.clone();
        let mut snapshots = Vec::new();
        for step in 1..=800u64 {
            mass = op.apply_mass(&mass);
            for (c, &m) in cesaro.iter_mut().zip(&mass) {
                *c += m;
            }
            if [100u64, 200, 400, 800].contains(&step) {
                let total_a: f64 = a_cells.clone().map(|j| cesaro[j]).sum();
                snapshots.push(total_a);
            }
        }
        for w in snapshots.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn thaler_uniform_check_flattens() {
        // Cesaro normalizer a_n ∝ ln n here (wandering rate of the n/ln n
        // class); the inverse-log tail is the exactly matching surrogate
        let part = Partition::geometric(512, 0.05, 0.9).unwrap();
        let op = build_ulam_exact(UlamMap::Thaler, part).unwrap();
        let wtab = TailTable::exact(TailKind::InverseLog, 1000);
        let a = Interval::new(thaler_branch_point(), 1.0).unwrap();
        let a_cells = op.partition().cells_inside(&a);
        let g = op.partition().indicator_density(&a);
        let hhat =
            estimate_density_shape(&op, &g, &wtab, 0.0, 800, 0.05, a_cells.clone()).unwrap();
        let rows =
            check_uniform(&op, a_cells, &g, &wtab, 0.0, &[100, 200, 400, 800], &hhat).unwrap();
        let spreads: Vec<f64> = rows.iter().map(|r| r.sup / r.inf).collect();
        assert!(
            spreads.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "thaler uniform-set curve should flatten: {spreads:?}"
        );
    }

    #[test]
    fn grid_refinement_stability() {
        // doubling the cell count changes the sup/inf ratio by < 5% at fixed n
        let mut ratios = Vec::new();
        for m in [512usize, 1024] {
            let part = Partition::geometric(m, 0.05, 0.9).unwrap();
            let op = build_ulam_exact(UlamMap::LasotaYorke, part).unwrap();
            let wtab = TailTable::exact(TailKind::Harmonic, 1000);
            let a = Interval::new(0.5, 1.0).unwrap();
            let a_cells = op.partition().cells_inside(&a);
            let g = op.partition().indicator_density(&a);
            let hhat =
                estimate_density_shape_iterate(&op, &g, 1600, 0.05, a_cells.clone()).unwrap();
            let check =
                check_uniformly_returning(&op, a_cells, &g, &wtab, 0.0, &[400], &hhat).unwrap();
            ratios.push(check.rows[0].sup / check.rows[0].inf);
        }
        assert!(
            (ratios[1] / ratios[0] - 1.0).abs() < 0.05,
            "refinement moved the ratio too much: {ratios:?}"
        );
    }
}
