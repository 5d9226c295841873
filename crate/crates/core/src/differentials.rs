//! Limit differentials built from shrinking five-event neighborhoods.
//!
//! A derivative here never touches chart axes directly: values of the
//! packet at the vertices of a neighborhood are differenced, divided by
//! the metric separation of those vertices, and the whole construction is
//! repeated over a schedule of shrinking neighborhood scales. Polynomial
//! extrapolation of the estimates to zero scale gives the reported value,
//! together with the observed convergence order and a residual, so a
//! caller can tell a clean limit from a non-convergent one.

use num_complex::Complex64 as C64;

use crate::geometry::{Chart, Event, GeometryError, Neighborhood};
use crate::numeric;
use crate::partition::{self, LocalGrid, PartitionError};
use crate::wavepacket::{Axis, WaveError, WaveFunction};

/// Hard ceiling on packet evaluations a single differential may spend.
pub const EVAL_BUDGET: usize = 1_000_000;

/// Differences below this fraction of the estimate scale are treated as
/// roundoff when measuring convergence.
const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum DifferentialError {
    #[error("undefined-grid: the packet carries no flow grid at (t = {t}, x = {x})")]
    UndefinedGrid { t: f64, x: f64 },
    #[error("bad-schedule: {0}")]
    BadSchedule(&'static str),
    #[error("too-costly: the request needs about {estimated} packet evaluations (budget {EVAL_BUDGET})")]
    TooCostly { estimated: usize },
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

type Result<T> = std::result::Result<T, DifferentialError>;

fn grid_failure(e: PartitionError) -> DifferentialError {
    match e {
        PartitionError::VanishingDensity { t, x, .. }
        | PartitionError::SuperluminalFlow { t, x, .. } => DifferentialError::UndefinedGrid { t, x },
        other => DifferentialError::Partition(other),
    }
}

/// A strictly decreasing sequence of squared-interval scales over which a
/// limit differential is evaluated. At least three entries, so an order
/// and a residual can always be read off.
#[derive(Debug, Clone)]
pub struct LimitSchedule {
    deltas: Vec<f64>,
}

impl LimitSchedule {
    pub fn new(deltas: Vec<f64>) -> Result<LimitSchedule> {
        if deltas.len() < 3 {
            return Err(DifferentialError::BadSchedule("need at least three scales"));
        }
        if deltas.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(DifferentialError::BadSchedule("scales must be positive and finite"));
        }
        if deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DifferentialError::BadSchedule("scales must decrease strictly"));
        }
        Ok(LimitSchedule { deltas })
    }

    /// Geometric schedule delta, delta*ratio, ... with `count` entries.
    pub fn geometric(delta: f64, ratio: f64, count: usize) -> Result<LimitSchedule> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(DifferentialError::BadSchedule("ratio must lie in (0, 1)"));
        }
        let mut deltas = Vec::with_capacity(count);
        let mut d = delta;
        for _ in 0..count {
            deltas.push(d);
            d *= ratio;
        }
        LimitSchedule::new(deltas)
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for LimitSchedule {
    /// Four scales from 1e-2 down by quarters: small enough for curvature
    /// corrections to extrapolate away, large enough that differences stay
    /// above roundoff.
    fn default() -> LimitSchedule {
        LimitSchedule::geometric(1e-2, 0.25, 4).unwrap()
    }
}

/// Outcome of a limit differential.
#[derive(Debug, Clone)]
pub struct DerivativeResult {
    pub value: C64,
    /// Raw estimate at each schedule scale, before extrapolation.
    pub estimates: Vec<(f64, C64)>,
    /// Slope of log estimate-difference against log of the neighborhood
    /// width sqrt(delta); infinite when the estimates agree to roundoff.
    pub observed_order: f64,
    /// Magnitude of the last extrapolation correction.
    pub residual: f64,
    /// False when the estimate differences fail to shrink monotonically.
    pub converged: bool,
}

/// Outcome of a local normalization-density read.
#[derive(Debug, Clone)]
pub struct DensityResult {
    pub value: f64,
    pub estimates: Vec<(f64, f64)>,
    pub observed_order: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Extrapolates complex estimates to zero scale and classifies their
/// convergence.
fn analyze(deltas: &[f64], values: &[C64]) -> (C64, f64, f64, bool) {
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.im).collect();
    let tab_re = numeric::neville_to_zero(deltas, &re);
    let tab_im = numeric::neville_to_zero(deltas, &im);
    let value = C64::new(tab_re[tab_re.len() - 1], tab_im[tab_im.len() - 1]);
    let prev = C64::new(tab_re[tab_re.len() - 2], tab_im[tab_im.len() - 2]);
    let residual = (value - prev).norm();

    let scale = values.iter().map(|v| v.norm()).fold(1e-300, f64::max);
    let floor = NOISE_FLOOR * scale;
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &d) in diffs.iter().enumerate() {
        if d > floor {
            xs.push(deltas[i].sqrt().ln());
            ys.push(d.ln());
        }
    }
    let order = if xs.len() < 2 {
        f64::INFINITY
    } else {
        numeric::ls_slope(&xs, &ys)
    };
    let mut converged = true;
    for w in diffs.windows(2) {
        if w[1] > 2.0 * w[0] && w[1] > floor {
            converged = false;
        }
    }
    (value, order, residual, converged)
}

fn build_all(chart: &Chart, grid: &LocalGrid, schedule: &LimitSchedule) -> Result<Vec<Neighborhood>> {
    schedule
        .deltas()
        .iter()
        .map(|&d| Ok(chart.build_neighborhood(&grid.anchor, grid.time_axis, d)?))
        .collect()
}

/// Proper separation of the differencing pair for the given axis.
fn pair_separation(chart: &Chart, nb: &Neighborhood, axis: Axis) -> Result<f64> {
    let (a, b) = match axis {
        Axis::Time => (&nb.past, &nb.future),
        Axis::Space => (&nb.spatial_minus, &nb.spatial_plus),
    };
    let s2 = chart.interval_squared(a, b)?;
    Ok(s2.abs().sqrt())
}

fn single_estimate(phi: &WaveFunction, chart: &Chart, nb: &Neighborhood, axis: Axis) -> Result<C64> {
    let (lo, hi) = match axis {
        Axis::Time => (&nb.past, &nb.future),
        Axis::Space => (&nb.spatial_minus, &nb.spatial_plus),
    };
    let sep = pair_separation(chart, nb, axis)?;
    Ok((phi.evaluate(hi)? - phi.evaluate(lo)?) / sep)
}

/// First derivative of the packet along an axis of an explicit local
/// grid, by shrinking central differences at the neighborhood vertices.
pub fn transcoord_partial_on_grid(
    phi: &WaveFunction,
    grid: &LocalGrid,
    axis: Axis,
    schedule: &LimitSchedule,
) -> Result<DerivativeResult> {
    if 2 * schedule.len() > EVAL_BUDGET {
        return Err(DifferentialError::TooCostly { estimated: 2 * schedule.len() });
    }
    let chart = phi.chart().clone();
    let nbs = build_all(&chart, grid, schedule)?;
    let mut estimates = Vec::with_capacity(schedule.len());
    for (nb, &d) in nbs.iter().zip(schedule.deltas()) {
        estimates.push((d, single_estimate(phi, &chart, nb, axis)?));
    }
    let values: Vec<C64> = estimates.iter().map(|&(_, v)| v).collect();
    let (value, observed_order, residual, converged) = analyze(schedule.deltas(), &values);
    Ok(DerivativeResult { value, estimates, observed_order, residual, converged })
}

/// First derivative along the packet's own flow grid at the event.
pub fn transcoord_partial(
    phi: &WaveFunction,
    e: &Event,
    axis: Axis,
    schedule: &LimitSchedule,
) -> Result<DerivativeResult> {
    let grid = partition::local_grid(phi, e).map_err(grid_failure)?;
    transcoord_partial_on_grid(phi, &grid, axis, schedule)
}

/// Second spatial derivative: the spatial first derivative is itself
/// differenced across the spatial vertices, each inner derivative taken
/// on a grid of the same rapidity re-anchored at the vertex.
pub fn transcoord_second_space_on_grid(
    phi: &WaveFunction,
    grid: &LocalGrid,
    schedule: &LimitSchedule,
) -> Result<DerivativeResult> {
    let estimated = 4 * schedule.len() * schedule.len();
    if estimated > EVAL_BUDGET {
        return Err(DifferentialError::TooCostly { estimated });
    }
    let chart = phi.chart().clone();
    let chi = grid.rapidity(&chart)?;
    let nbs = build_all(&chart, grid, schedule)?;
    let mut estimates = Vec::with_capacity(schedule.len());
    for (nb, &d) in nbs.iter().zip(schedule.deltas()) {
        let sep = pair_separation(&chart, nb, Axis::Space)?;
        let g_plus = LocalGrid::boosted(&chart, &nb.spatial_plus, chi)?;
        let g_minus = LocalGrid::boosted(&chart, &nb.spatial_minus, chi)?;
        let d_plus = transcoord_partial_on_grid(phi, &g_plus, Axis::Space, schedule)?;
        let d_minus = transcoord_partial_on_grid(phi, &g_minus, Axis::Space, schedule)?;
        estimates.push((d, (d_plus.value - d_minus.value) / sep));
    }
    let values: Vec<C64> = estimates.iter().map(|&(_, v)| v).collect();
    let (value, observed_order, residual, converged) = analyze(schedule.deltas(), &values);
    Ok(DerivativeResult { value, estimates, observed_order, residual, converged })
}

/// Second spatial derivative on the packet's own flow grids: the outer
/// difference runs over the flow grid at the event, the inner derivatives
/// over the flow grids at the vertices.
pub fn transcoord_second_space(
    phi: &WaveFunction,
    e: &Event,
    schedule: &LimitSchedule,
) -> Result<DerivativeResult> {
    let estimated = 4 * schedule.len() * schedule.len();
    if estimated > EVAL_BUDGET {
        return Err(DifferentialError::TooCostly { estimated });
    }
    let chart = phi.chart().clone();
    let grid = partition::local_grid(phi, e).map_err(grid_failure)?;
    let nbs = build_all(&chart, &grid, schedule)?;
    let mut estimates = Vec::with_capacity(schedule.len());
    for (nb, &d) in nbs.iter().zip(schedule.deltas()) {
        let sep = pair_separation(&chart, nb, Axis::Space)?;
        let d_plus = transcoord_partial(phi, &nb.spatial_plus, Axis::Space, schedule)?;
        let d_minus = transcoord_partial(phi, &nb.spatial_minus, Axis::Space, schedule)?;
        estimates.push((d, (d_plus.value - d_minus.value) / sep));
    }
    let values: Vec<C64> = estimates.iter().map(|&(_, v)| v).collect();
    let (value, observed_order, residual, converged) = analyze(schedule.deltas(), &values);
    Ok(DerivativeResult { value, estimates, observed_order, residual, converged })
}

/// Probability density read by an observer with the given grid: the
/// current flux through the shrinking spatial chord of the neighborhood,
/// divided by the chord's metric width, extrapolated to zero scale.
pub fn local_normalization_density_on_grid(
    phi: &WaveFunction,
    grid: &LocalGrid,
    schedule: &LimitSchedule,
) -> Result<DensityResult> {
    if 300 * schedule.len() > EVAL_BUDGET {
        return Err(DifferentialError::TooCostly { estimated: 300 * schedule.len() });
    }
    let chart = phi.chart().clone();
    let nbs = build_all(&chart, grid, schedule)?;
    let mut estimates = Vec::with_capacity(schedule.len());
    for (nb, &d) in nbs.iter().zip(schedule.deltas()) {
        let width = pair_separation(&chart, nb, Axis::Space)?;
        let flux = partition::flux_between(phi, &nb.spatial_minus, &nb.spatial_plus)
            .map_err(DifferentialError::Partition)?;
        estimates.push((d, flux / width));
    }
    let values: Vec<C64> = estimates.iter().map(|&(_, v)| C64::new(v, 0.0)).collect();
    let (value, observed_order, residual, converged) = analyze(schedule.deltas(), &values);
    Ok(DensityResult {
        value: value.re,
        estimates,
        observed_order,
        residual,
        converged,
    })
}

/// Density in the packet's own flow frame (its rest density), read
/// through shrinking flow-adapted windows.
pub fn local_normalization_density(
    phi: &WaveFunction,
    e: &Event,
    schedule: &LimitSchedule,
) -> Result<DensityResult> {
    let grid = partition::local_grid(phi, e).map_err(grid_failure)?;
    local_normalization_density_on_grid(phi, &grid, schedule)
}
