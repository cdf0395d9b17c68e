//! Time grids, Brownian path generation, running extrema and the discrete
//! Skorohod reflection map. Everything here is node-exact: no interpolation
//! between grid points.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("time horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("grid needs at least one step")]
    EmptyGrid,
    #[error("value count {got} does not match grid ({want} nodes)")]
    LengthMismatch { got: usize, want: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("coarsening factor {factor} does not divide n_steps {n_steps}")]
    BadCoarsenFactor { factor: usize, n_steps: usize },
    #[error("coarsening factor must be >= 1")]
    ZeroCoarsenFactor,
    #[error("Skorohod driver must start nonnegative, got {0}")]
    NegativeDriverStart(f64),
    #[error("paths live on different grids")]
    GridMismatch,
}

/// Uniform grid `t_k = k·dt` on `[0, t_end]` with `dt = t_end / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self, PathError> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(PathError::NonPositiveHorizon(t_end));
        }
        if n_steps == 0 {
            return Err(PathError::EmptyGrid);
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }
}

/// Values of a scalar process on the nodes of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self, PathError> {
        if values.len() != grid.n_nodes() {
            return Err(PathError::LengthMismatch {
                got: values.len(),
                want: grid.n_nodes(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(PathError::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    /// Constant path `c` on `grid`.
    pub fn constant(grid: TimeGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_nodes()],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Pointwise map; keeps the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two paths on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, PathError> {
        if self.grid != other.grid {
            return Err(PathError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64, PathError> {
        if self.grid != other.grid {
            return Err(PathError::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// A solution path bundled with its running extrema and local time at zero.
///
/// `max` and `min` are the exact prefix extrema of `x` on the grid.
/// `local_time` is the minimal Skorohod pushing process (no half-factor
/// Tanaka normalization); it starts at zero, never decreases and is flat on
/// steps that do not land on zero. Non-reflected families carry an
/// identically-zero local time.
#[derive(Debug, Clone)]
pub struct ExtremaDecomposition {
    pub x: SamplePath,
    pub max: SamplePath,
    pub min: SamplePath,
    pub local_time: SamplePath,
}

/// Seed for one path of a Monte Carlo set: a master seed plus the path index.
///
/// Seeding is counter-based so path sets are reproducible and independent of
/// generation order: path `i` always sees the stream keyed by
/// `(master_seed, i)`, no matter how many paths run or on how many workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSeed {
    pub master: u64,
    pub index: u64,
}

impl PathSeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    fn rng(self) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&self.index.to_le_bytes());
        ChaCha12Rng::from_seed(key)
    }
}

impl From<u64> for PathSeed {
    fn from(master: u64) -> Self {
        Self { master, index: 0 }
    }
}

/// One standard normal draw by the Box-Muller transform.
///
/// The transform is fixed so that two implementations sharing the ChaCha12
/// stream produce byte-identical paths: draw two u64 words `a`, `b`, map them
/// to uniforms `u = (a >> 11 + 0.5) / 2^53` (strictly inside (0,1)) and
/// return `sqrt(-2 ln u1) * cos(2π u2)`. The sine partner is discarded.
fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    const TWO_53: f64 = 9007199254740992.0;
    let u1 = ((rng.next_u64() >> 11) as f64 + 0.5) / TWO_53;
    let u2 = ((rng.next_u64() >> 11) as f64 + 0.5) / TWO_53;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Standard Brownian path on `grid`: `W_0 = 0`, i.i.d. N(0, dt) increments.
/// Identical `(grid, seed)` gives a bit-identical path.
pub fn generate_brownian(grid: TimeGrid, seed: impl Into<PathSeed>) -> SamplePath {
    let mut rng = seed.into().rng();
    let sqrt_dt = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.n_nodes());
    let mut w = 0.0;
    values.push(w);
    for _ in 0..grid.n_steps() {
        w += sqrt_dt * standard_normal(&mut rng);
        values.push(w);
    }
    SamplePath { grid, values }
}

/// Interval maxima of the Brownian path `w` sampled from the exact bridge law.
///
/// Conditionally on the endpoints `(W_k, W_{k+1})` the maximum of a Brownian
/// motion over the step is distributed as
/// `(W_k + W_{k+1} + sqrt((W_{k+1}-W_k)^2 - 2 dt ln U)) / 2` with `U`
/// uniform. The running maximum assembled from these interval maxima has the
/// exact continuous-time law, free of the O(sqrt(dt)) downward bias of the
/// grid maximum. Used by law-level studies only; all pathwise machinery stays
/// on the grid.
pub fn bridge_running_max(w: &SamplePath, seed: impl Into<PathSeed>) -> SamplePath {
    const TWO_53: f64 = 9007199254740992.0;
    let mut rng = seed.into().rng();
    let dt = w.grid().dt();
    let vals = w.values();
    let mut out = Vec::with_capacity(vals.len());
    let mut m = vals[0];
    out.push(m);
    for k in 0..vals.len() - 1 {
        let (a, b) = (vals[k], vals[k + 1]);
        let u = ((rng.next_u64() >> 11) as f64 + 0.5) / TWO_53;
        let interval_max = 0.5 * (a + b + ((b - a).powi(2) - 2.0 * dt * u.ln()).sqrt());
        m = m.max(interval_max);
        out.push(m);
    }
    SamplePath {
        grid: w.grid(),
        values: out,
    }
}

/// Restriction of `path` to every `factor`-th node. Increments of the coarse
/// path are sums of fine increments, so refinement studies stay coupled.
pub fn coarsen(path: &SamplePath, factor: usize) -> Result<SamplePath, PathError> {
    if factor == 0 {
        return Err(PathError::ZeroCoarsenFactor);
    }
    let n = path.grid().n_steps();
    if !n.is_multiple_of(factor) {
        return Err(PathError::BadCoarsenFactor { factor, n_steps: n });
    }
    let grid = TimeGrid::new(path.grid().t_end(), n / factor).expect("valid by construction");
    let values = path.values().iter().step_by(factor).copied().collect();
    Ok(SamplePath { grid, values })
}

/// Exact prefix maximum per node.
pub fn running_max(path: &SamplePath) -> SamplePath {
    path.running_max()
}

/// Exact prefix minimum per node.
pub fn running_min(path: &SamplePath) -> SamplePath {
    path.running_min()
}

impl SamplePath {
    fn map_mut(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// See [`running_max`].
    pub fn running_max(&self) -> SamplePath {
        let mut m = f64::NEG_INFINITY;
        self.map_mut(|v| {
            m = m.max(v);
            m
        })
    }

    /// See [`running_min`].
    pub fn running_min(&self) -> SamplePath {
        let mut m = f64::INFINITY;
        self.map_mut(|v| {
            m = m.min(v);
            m
        })
    }
}

/// Discrete Skorohod map: reflected path and minimal pushing process.
///
/// `local_time_k = max(0, max_{j<=k}(-driver_j))`, the smallest nondecreasing
/// process starting at 0 with `driver + local_time >= 0`. The pushing process
/// is flat wherever the reflected path is strictly positive.
pub fn skorohod_reflect(driver: &SamplePath) -> Result<(SamplePath, SamplePath), PathError> {
    let first = driver.values()[0];
    if first < 0.0 {
        return Err(PathError::NegativeDriverStart(first));
    }
    let mut push = 0.0f64;
    let local_time = driver.map_mut(|d| {
        push = push.max(-d);
        push
    });
    let reflected = driver.zip_with(&local_time, |d, l| d + l)?;
    Ok((reflected, local_time))
}
