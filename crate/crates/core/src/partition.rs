//! Partition machinery: streamlines of the probability flow, the fraction
//! of a packet lying to one side of a streamline, local grids adapted to
//! the flow, perpendicular cuts, and the internal chart a packet induces
//! along one of its own streamlines.
//!
//! All fractions are fluxes of the conserved probability current through
//! curves, computed with the covariant flux form
//! sqrt(A B) (j^t dx - j^x dt). Because the current is divergence free,
//! that flux depends only on the curve's endpoints (up to exponentially
//! small tail contributions), which has two load-bearing consequences:
//! the fraction assigned to a streamline is constant along it, and the
//! value is independent of the chart the integral is carried out in.

use crate::geometry::{Chart, Event, GeometryError};
use crate::numeric;
use crate::wavepacket::{WaveError, WaveFunction};

/// Densities below this ratio times the slice peak are treated as absent
/// when a flow direction is requested.
pub const DENSITY_FLOOR_RATIO: f64 = 1e-12;

/// Local error tolerance (per unit coordinate time) of the streamline
/// tracer.
pub const TRACE_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum PartitionError {
    #[error("vanishing-density: rho = {rho:.3e} at (t = {t}, x = {x}) is below the slice floor {floor:.3e}")]
    VanishingDensity { t: f64, x: f64, rho: f64, floor: f64 },
    #[error("superluminal-flow: flow speed {v} at (t = {t}, x = {x}) admits no timelike direction")]
    SuperluminalFlow { t: f64, x: f64, v: f64 },
    #[error("not-normalized: fractions need a packet with unit total probability")]
    NotNormalized,
    #[error("outside-traced-range: t = {0} is beyond the traced span of the line")]
    OutsideTracedRange(f64),
    #[error("no-foot-point: no flow perpendicular from the traced line passes through the event")]
    NoFootPoint,
    #[error("trace-failed: the flow became undefined near (t = {t}, x = {x})")]
    TraceFailed { t: f64, x: f64 },
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

type Result<T> = std::result::Result<T, PartitionError>;

/// An orthonormal pair at an event: a unit future timelike axis and the
/// unit spacelike axis completing it, oriented toward increasing chart x.
#[derive(Debug, Clone, Copy)]
pub struct LocalGrid {
    pub anchor: Event,
    pub time_axis: [f64; 2],
    pub space_axis: [f64; 2],
}

impl LocalGrid {
    /// The grid of an observer at rest in the chart coordinates.
    pub fn chart_rest(chart: &Chart, anchor: &Event) -> Result<LocalGrid> {
        let (gtt, gxx) = chart.metric_at(anchor.x)?;
        Ok(LocalGrid {
            anchor: *anchor,
            time_axis: [(-gtt).sqrt().recip(), 0.0],
            space_axis: [0.0, gxx.sqrt().recip()],
        })
    }

    /// The chart-rest grid boosted by the given rapidity within the local
    /// orthonormal frame.
    pub fn boosted(chart: &Chart, anchor: &Event, rapidity: f64) -> Result<LocalGrid> {
        let (gtt, gxx) = chart.metric_at(anchor.x)?;
        let st = (-gtt).sqrt();
        let sx = gxx.sqrt();
        Ok(LocalGrid {
            anchor: *anchor,
            time_axis: [rapidity.cosh() / st, rapidity.sinh() / sx],
            space_axis: [rapidity.sinh() / st, rapidity.cosh() / sx],
        })
    }

    /// Maximum defect of the orthonormality relations.
    pub fn orthonormality_defect(&self, chart: &Chart) -> Result<f64> {
        let tq = chart.norm_squared(&self.anchor, self.time_axis)?;
        let xq = chart.norm_squared(&self.anchor, self.space_axis)?;
        let cross = chart.inner(&self.anchor, self.time_axis, self.space_axis)?;
        Ok((tq + 1.0).abs().max((xq - 1.0).abs()).max(cross.abs()))
    }

    /// Rapidity of the grid relative to the chart rest frame at its anchor.
    pub fn rapidity(&self, chart: &Chart) -> Result<f64> {
        let (gtt, gxx) = chart.metric_at(self.anchor.x)?;
        let f0 = (-gtt).sqrt() * self.time_axis[0];
        let f1 = gxx.sqrt() * self.time_axis[1];
        Ok((f1 / f0).atanh())
    }
}

/// Probability density and current at an event, with the density floor
/// applied relative to the packet's peak on the same time slice.
fn gated_density(phi: &WaveFunction, e: &Event) -> Result<(f64, f64)> {
    let (rho, j) = phi.density_current(e)?;
    let peak = phi.slice_density_peak(e.t, e.x)?;
    let floor = DENSITY_FLOOR_RATIO * peak;
    if !(rho > floor) {
        return Err(PartitionError::VanishingDensity { t: e.t, x: e.x, rho, floor });
    }
    Ok((rho, j))
}

/// Unit future timelike direction of the probability flow at an event.
pub fn flow_direction(phi: &WaveFunction, e: &Event) -> Result<[f64; 2]> {
    let (rho, j) = gated_density(phi, e)?;
    let chart = phi.chart();
    let q = chart.norm_squared(e, [rho, j])?;
    if q >= 0.0 {
        return Err(PartitionError::SuperluminalFlow { t: e.t, x: e.x, v: j / rho });
    }
    let s = (-q).sqrt();
    Ok([rho / s, j / s])
}

/// The local grid carried by the flow: time axis along the flow, space
/// axis its oriented orthonormal completion.
pub fn local_grid(phi: &WaveFunction, e: &Event) -> Result<LocalGrid> {
    let u = flow_direction(phi, e)?;
    let chart = phi.chart();
    let s = chart.spatial_partner(e, u)?;
    Ok(LocalGrid { anchor: *e, time_axis: u, space_axis: s })
}

/// Coordinate velocity dx/dt of the flow, with a hard subluminal check
/// against the local light speed. Used pointwise by the tracer.
pub fn flow_velocity(phi: &WaveFunction, e: &Event) -> Result<f64> {
    let (rho, j) = phi.density_current(e)?;
    if !(rho > 0.0) {
        return Err(PartitionError::VanishingDensity { t: e.t, x: e.x, rho, floor: 0.0 });
    }
    let v = j / rho;
    let (gtt, gxx) = phi.chart().metric_at(e.x)?;
    let light = (-gtt / gxx).sqrt();
    if v.abs() >= light {
        return Err(PartitionError::SuperluminalFlow { t: e.t, x: e.x, v });
    }
    Ok(v)
}

/// Covariant flux of the probability current through the straight
/// coordinate segment from `from` to `to`: the integral of
/// sqrt(A B) (j^t dx - j^x dt) along it. Points where the packet is
/// absent contribute zero. Because the current is divergence free the
/// value depends only on the endpoints, so any convenient curve between
/// them measures the same crossing probability.
pub fn flux_between(phi: &WaveFunction, from: &Event, to: &Event) -> Result<f64> {
    let chart = phi.chart().clone();
    let dt = to.t - from.t;
    let dx = to.x - from.x;
    let integrand = |lam: f64| -> f64 {
        let t = from.t + lam * dt;
        let x = from.x + lam * dx;
        let e = chart.event(t, x);
        let (rho, j) = match phi.density_current(&e) {
            Ok(v) => v,
            Err(_) => return 0.0,
        };
        let (gtt, gxx) = match chart.metric_at(x) {
            Ok(v) => v,
            Err(_) => return 0.0,
        };
        let vol = (-gtt * gxx).sqrt();
        vol * (rho * dx - j * dt)
    };
    // Pulled-back packets evaluate their current through a numeric map
    // Jacobian whose cancellation noise is ~1e-10 relative; the tolerance
    // has to sit above that floor or the adaptive refinement cannot
    // terminate. Closed forms are quiet enough for the tight setting.
    let tol = if phi.is_pulled_back() { 1e-11 } else { 1e-13 };
    Ok(numeric::integrate(&integrand, 0.0, 1.0, tol))
}

/// Width of the chunks used when a flux integral has to reach into a
/// packet tail of unknown extent.
const TAIL_CHUNK: f64 = 6.0;
const TAIL_CHUNK_LIMIT: usize = 64;

/// Fraction of the packet's probability lying to the left of (before, in
/// chart x) the streamline through `a`: the flux of the current across a
/// cut reaching from the left dead region up to `a`.
pub fn fraction_at(phi: &WaveFunction, a: &Event) -> Result<f64> {
    if !phi.is_normalized() {
        return Err(PartitionError::NotNormalized);
    }
    // The fraction is a chart-free scalar, so for pulled-back packets it is
    // computed in the defining chart: there the current decays like the
    // packet itself, while along a mapped slice the crossing flux can thin
    // out too slowly for any fixed integration window.
    if let Some((inner, home)) = phi.unmapped(a) {
        return fraction_at(inner, &home);
    }
    let chart = phi.chart().clone();
    let mut total = 0.0;
    for k in 0..TAIL_CHUNK_LIMIT {
        let hi = a.x - TAIL_CHUNK * k as f64;
        let lo = hi - TAIL_CHUNK;
        let chunk = flux_between(phi, &chart.event(a.t, lo), &chart.event(a.t, hi))?;
        total += chunk;
        if chunk.abs() < 1e-13 && k >= 2 {
            break;
        }
    }
    Ok(total)
}

/// One traced point of a partition line: the event and the flow velocity
/// there (the slope dx/dt used for interpolation between samples).
#[derive(Debug, Clone, Copy)]
pub struct LineSample {
    pub t: f64,
    pub x: f64,
    pub velocity: f64,
}

/// A streamline of the probability flow, tagged with the fraction of the
/// packet to its left.
#[derive(Debug, Clone)]
pub struct PartitionLine {
    pub fraction: f64,
    samples: Vec<LineSample>,
}

impl PartitionLine {
    pub fn samples(&self) -> &[LineSample] {
        &self.samples
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    /// Position of the line at time t, by cubic interpolation through the
    /// bracketing samples using the recorded slopes.
    pub fn position_at(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.t_range();
        let eps = 1e-10 * (1.0 + hi.abs().max(lo.abs()));
        if t < lo - eps || t > hi + eps {
            return Err(PartitionError::OutsideTracedRange(t));
        }
        let t = t.clamp(lo, hi);
        let i = match self
            .samples
            .binary_search_by(|s| s.t.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Ok(self.samples[i].x),
            Err(i) => i.clamp(1, self.samples.len() - 1) - 1,
        };
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        Ok(numeric::hermite(t, a.t, b.t, a.x, b.x, a.velocity, b.velocity))
    }

    pub fn velocity_at(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.t_range();
        if t < lo - 1e-10 || t > hi + 1e-10 {
            return Err(PartitionError::OutsideTracedRange(t));
        }
        let t = t.clamp(lo, hi);
        let i = match self
            .samples
            .binary_search_by(|s| s.t.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Ok(self.samples[i].velocity),
            Err(i) => i.clamp(1, self.samples.len() - 1) - 1,
        };
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let w = (t - a.t) / (b.t - a.t);
        Ok(a.velocity * (1.0 - w) + b.velocity * w)
    }
}

/// Traces the streamline through `anchor` across [t_lo, t_hi] by
/// adaptive integration of dx/dt = j/rho, and tags it with the fraction
/// of the packet to its left.
pub fn trace_partition_line(
    phi: &WaveFunction,
    anchor: &Event,
    t_lo: f64,
    t_hi: f64,
) -> Result<PartitionLine> {
    assert!(t_lo <= t_hi);
    let chart = phi.chart().clone();
    if anchor.chart != chart.id() {
        return Err(PartitionError::Geometry(GeometryError::WrongChart {
            expected: chart.id(),
            found: anchor.chart,
        }));
    }
    // Establish that the anchor itself has a well-defined flow.
    flow_direction(phi, anchor)?;
    // Uniform streams (plane waves) have streamlines but no fractions.
    let fraction = if phi.is_normalized() {
        fraction_at(phi, anchor)?
    } else {
        f64::NAN
    };
    // Trial steps of the adaptive integrator may probe outside the packet;
    // returning NaN there makes it shrink the step, and a genuine failure
    // surfaces as a non-finite final state.
    let rhs = |t: f64, y: &[f64; 1]| -> [f64; 1] {
        match flow_velocity(phi, &chart.event(t, y[0])) {
            Ok(v) => [v],
            Err(_) => [f64::NAN],
        }
    };
    let mut forward: Vec<LineSample> = Vec::new();
    if t_hi > anchor.t {
        let end = numeric::rk4_adaptive(&rhs, anchor.t, t_hi, [anchor.x], TRACE_TOL, &mut |t, y| {
            if let Ok(v) = flow_velocity(phi, &chart.event(t, y[0])) {
                forward.push(LineSample { t, x: y[0], velocity: v });
            }
        });
        if !end[0].is_finite() {
            let last = forward.last().map(|s| (s.t, s.x)).unwrap_or((anchor.t, anchor.x));
            return Err(PartitionError::TraceFailed { t: last.0, x: last.1 });
        }
    }
    let mut backward: Vec<LineSample> = Vec::new();
    if t_lo < anchor.t {
        let end = numeric::rk4_adaptive(&rhs, anchor.t, t_lo, [anchor.x], TRACE_TOL, &mut |t, y| {
            if let Ok(v) = flow_velocity(phi, &chart.event(t, y[0])) {
                backward.push(LineSample { t, x: y[0], velocity: v });
            }
        });
        if !end[0].is_finite() {
            let last = backward.last().map(|s| (s.t, s.x)).unwrap_or((anchor.t, anchor.x));
            return Err(PartitionError::TraceFailed { t: last.0, x: last.1 });
        }
    }
    let mut samples = backward;
    samples.reverse();
    let v0 = flow_velocity(phi, anchor)?;
    samples.push(LineSample { t: anchor.t, x: anchor.x, velocity: v0 });
    samples.extend(forward);
    samples.dedup_by(|a, b| (a.t - b.t).abs() < 1e-14);
    Ok(PartitionLine { fraction, samples })
}

/// Conservation scan: the flux between two streamlines, read on a chart
/// time slice, at each requested time. Reports the reference value at the
/// first time and the maximum drift from it.
#[derive(Debug, Clone)]
pub struct ConservationReport {
    pub reference: f64,
    pub max_drift: f64,
    pub values: Vec<(f64, f64)>,
}

pub fn fraction_conservation_check(
    phi: &WaveFunction,
    line_a: &PartitionLine,
    line_b: &PartitionLine,
    times: &[f64],
) -> Result<ConservationReport> {
    assert!(!times.is_empty());
    let chart = phi.chart().clone();
    let mut values = Vec::with_capacity(times.len());
    let mut reference = None;
    let mut max_drift: f64 = 0.0;
    for &t in times {
        let xa = line_a.position_at(t)?;
        let xb = line_b.position_at(t)?;
        let f = flux_between(phi, &chart.event(t, xa), &chart.event(t, xb))?;
        let r = *reference.get_or_insert(f);
        max_drift = max_drift.max((f - r).abs());
        values.push((t, f));
    }
    Ok(ConservationReport { reference: reference.unwrap(), max_drift, values })
}

/// Result of the minimal-crossing-direction search at an event.
#[derive(Debug, Clone, Copy)]
pub struct MinDirection {
    /// Rapidity of the minimizing grid relative to the chart rest frame.
    pub rapidity: f64,
    pub grid_time_axis: [f64; 2],
    /// Flux through the spatial chord of the neighborhood at the minimum.
    pub flux: f64,
    /// Set when the objective is numerically flat across all directions.
    pub degenerate: bool,
}

/// Sweeps boost rapidity and finds the direction whose neighborhood chord
/// (the spacelike cross-section of the five-event construction at scale
/// `delta`) intercepts the least probability flux. For a locally uniform
/// current the objective is proportional to cosh(rapidity - flow
/// rapidity), so the minimum rides the flow.
pub fn min_probability_direction(phi: &WaveFunction, a: &Event, delta: f64) -> Result<MinDirection> {
    let chart = phi.chart().clone();
    // The flow must exist at the anchor for the search to be meaningful.
    let flow_grid = local_grid(phi, a)?;
    let flow_chi = flow_grid.rapidity(&chart)?;
    let objective = |chi: f64| -> Result<f64> {
        let grid = LocalGrid::boosted(&chart, a, chi)?;
        let nb = chart.build_neighborhood(a, grid.time_axis, delta)?;
        flux_between(phi, &nb.spatial_minus, &nb.spatial_plus)
    };
    // Degeneracy scan across the search range.
    let mut lo_val = f64::INFINITY;
    let mut hi_val = f64::NEG_INFINITY;
    for i in 0..9 {
        let chi = -8.0 + 2.0 * i as f64;
        let v = objective(chi)?;
        lo_val = lo_val.min(v);
        hi_val = hi_val.max(v);
    }
    if (hi_val - lo_val).abs() <= 1e-12 * hi_val.abs().max(1e-300) {
        return Ok(MinDirection {
            rapidity: flow_chi,
            grid_time_axis: flow_grid.time_axis,
            flux: objective(flow_chi)?,
            degenerate: true,
        });
    }
    let wrapped = |chi: f64| objective(chi).unwrap_or(f64::INFINITY);
    let (chi, flux) = numeric::golden_min(&wrapped, -8.0, 8.0, 1e-7);
    let grid = LocalGrid::boosted(&chart, a, chi)?;
    Ok(MinDirection { rapidity: chi, grid_time_axis: grid.time_axis, flux, degenerate: false })
}

/// One sample of a perpendicular cut.
#[derive(Debug, Clone, Copy)]
pub struct PerpSample {
    /// Signed arc length from the anchor along the space axis.
    pub arc: f64,
    pub event: Event,
    /// Cumulative packet fraction at this point of the cut.
    pub fraction: f64,
}

/// A flow-perpendicular cut through an anchor: sampled events along the
/// space axis of the local grid, each carrying the cumulative fraction,
/// plus the total flux through the full cut (one, for a normalized
/// packet, within quadrature error).
#[derive(Debug, Clone)]
pub struct Perpendicular {
    pub grid: LocalGrid,
    pub samples: Vec<PerpSample>,
    pub total_flux: f64,
}

pub fn perpendicular_at(phi: &WaveFunction, a: &Event, half_width: f64, count: usize) -> Result<Perpendicular> {
    assert!(count >= 3 && half_width > 0.0);
    if !phi.is_normalized() {
        return Err(PartitionError::NotNormalized);
    }
    let chart = phi.chart().clone();
    let grid = local_grid(phi, a)?;
    let at_arc = |s: f64| -> Result<Event> {
        if chart.is_flat_chart() {
            Ok(chart.event(a.t + s * grid.space_axis[0], a.x + s * grid.space_axis[1]))
        } else {
            Ok(chart.geodesic_flow(a, grid.space_axis, s)?.0)
        }
    };
    let left_end = at_arc(-half_width)?;
    let base = fraction_at(phi, a)?;
    // Fraction below the cut's left end: base minus the flux from the left
    // end to the anchor along the cut itself.
    let to_anchor = flux_between(phi, &left_end, a)?;
    let f_left = base - to_anchor;
    let mut samples = Vec::with_capacity(count);
    let mut prev_event = left_end;
    let mut acc = f_left;
    for i in 0..count {
        let s = -half_width + 2.0 * half_width * i as f64 / (count - 1) as f64;
        let e = at_arc(s)?;
        if i > 0 {
            acc += flux_between(phi, &prev_event, &e)?;
        }
        samples.push(PerpSample { arc: s, event: e, fraction: acc });
        prev_event = e;
    }
    // Total flux through the full cut: extend beyond the sampled window
    // with tail chunks on both sides.
    let mut total = acc - f_left;
    let mut outer = prev_event;
    for _ in 0..TAIL_CHUNK_LIMIT {
        let next = at_arc_offset(&chart, &grid, &outer, a, TAIL_CHUNK)?;
        let chunk = flux_between(phi, &outer, &next)?;
        total += chunk;
        outer = next;
        if chunk.abs() < 1e-13 {
            break;
        }
    }
    let mut outer_l = left_end;
    for _ in 0..TAIL_CHUNK_LIMIT {
        let next = at_arc_offset(&chart, &grid, &outer_l, a, -TAIL_CHUNK)?;
        let chunk = flux_between(phi, &next, &outer_l)?;
        total += chunk;
        outer_l = next;
        if chunk.abs() < 1e-13 {
            break;
        }
    }
    Ok(Perpendicular { grid, samples, total_flux: total })
}

/// Continues a cut beyond `from` by `step` units of arc, along the
/// direction of the grid's space axis (transported trivially in flat
/// charts, along the geodesic otherwise).
fn at_arc_offset(
    chart: &Chart,
    grid: &LocalGrid,
    from: &Event,
    anchor: &Event,
    step: f64,
) -> Result<Event> {
    if chart.is_flat_chart() {
        return Ok(chart.event(
            from.t + step * grid.space_axis[0],
            from.x + step * grid.space_axis[1],
        ));
    }
    // In a curved chart, continue the geodesic from the anchor rather than
    // compounding short segments.
    let (_, wf) = chart.conformal(from)?;
    let (_, wa) = chart.conformal(anchor)?;
    let s_here = chart.interval_squared(anchor, from)?.max(0.0).sqrt() * (wf - wa).signum();
    Ok(chart.geodesic_flow(anchor, grid.space_axis, s_here + step)?.0)
}

/// The chart a packet induces on the neighborhood of one of its
/// streamlines: time is proper time along the line, space is signed
/// proper distance along the flow perpendicular through the line.
pub struct InternalChart<'a> {
    phi: &'a WaveFunction,
    line: PartitionLine,
    /// Cumulative proper time at each line sample, zero at the origin.
    tau: Vec<f64>,
    origin_t: f64,
}

pub fn build_internal_chart<'a>(
    phi: &'a WaveFunction,
    origin: &Event,
    t_lo: f64,
    t_hi: f64,
) -> Result<InternalChart<'a>> {
    let line = trace_partition_line(phi, origin, t_lo, t_hi)?;
    let chart = phi.chart();
    let samples = line.samples();
    let mut tau = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    tau.push(0.0);
    for i in 1..samples.len() {
        let (ta, tb) = (samples[i - 1].t, samples[i].t);
        let rate = |t: f64| -> f64 {
            let x = line.position_at(t).unwrap_or(samples[i].x);
            let v = line.velocity_at(t).unwrap_or(samples[i].velocity);
            let (gtt, gxx) = chart.metric_at(x).unwrap_or((-1.0, 1.0));
            (-(gtt + gxx * v * v)).max(0.0).sqrt()
        };
        acc += numeric::gauss20(&rate, ta, tb);
        tau.push(acc);
    }
    // Shift so the origin sits at proper time zero.
    let mut ic = InternalChart { phi, line, tau, origin_t: origin.t };
    let shift = ic.proper_time_at(origin.t)?;
    for v in &mut ic.tau {
        *v -= shift;
    }
    Ok(ic)
}

impl<'a> InternalChart<'a> {
    pub fn line(&self) -> &PartitionLine {
        &self.line
    }

    /// Proper time along the central line at chart time t (zero at the
    /// origin event).
    pub fn proper_time_at(&self, t: f64) -> Result<f64> {
        let samples = self.line.samples();
        let (lo, hi) = self.line.t_range();
        if t < lo - 1e-10 || t > hi + 1e-10 {
            return Err(PartitionError::OutsideTracedRange(t));
        }
        let t = t.clamp(lo, hi);
        let i = match samples.binary_search_by(|s| s.t.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok(self.tau[i]),
            Err(i) => i.clamp(1, samples.len() - 1) - 1,
        };
        let chart = self.phi.chart();
        let line = &self.line;
        let rate = |tt: f64| -> f64 {
            let x = line.position_at(tt).unwrap_or(samples[i].x);
            let v = line.velocity_at(tt).unwrap_or(samples[i].velocity);
            let (gtt, gxx) = chart.metric_at(x).unwrap_or((-1.0, 1.0));
            (-(gtt + gxx * v * v)).max(0.0).sqrt()
        };
        Ok(self.tau[i] + numeric::gauss20(&rate, samples[i].t, t))
    }

    /// Chart time at which the central line reaches the given proper time.
    fn chart_time_at_tau(&self, tau: f64) -> Result<f64> {
        let (lo, hi) = self.line.t_range();
        let f_lo = self.proper_time_at(lo)? - tau;
        let f_hi = self.proper_time_at(hi)? - tau;
        if f_lo > 0.0 || f_hi < 0.0 {
            return Err(PartitionError::OutsideTracedRange(tau));
        }
        let f = |t: f64| self.proper_time_at(t).unwrap_or(f64::NAN) - tau;
        Ok(numeric::bracket_root(&f, lo, hi, 1e-13))
    }

    /// Internal coordinates (proper time along the line, signed proper
    /// distance along the flow perpendicular) of an external event.
    ///
    /// The foot point is located by chord orthogonality in the conformal
    /// plane, which coincides with geodesic orthogonality in flat charts;
    /// in genuinely curved charts the assignment carries a bias of second
    /// order in the distance from the line.
    pub fn to_internal(&self, e: &Event) -> Result<(f64, f64)> {
        let chart = self.phi.chart().clone();
        let (lo, hi) = self.line.t_range();
        // Foot point: the line point whose flow perpendicular contains e,
        // which zeroes g(e - p(t), u(p(t))).
        let miss = |t: f64| -> Result<f64> {
            let x = self.line.position_at(t)?;
            let p = chart.event(t, x);
            let u = flow_direction(self.phi, &p)?;
            // In a curved chart the difference vector is taken in
            // conformal components, which preserves orthogonality checks
            // up to the conformal factor.
            let (tp, wp) = chart.conformal(&p)?;
            let (te, we) = chart.conformal(e)?;
            let (gtt, gxx) = chart.metric_at(p.x)?;
            let uf = [(-gtt).sqrt() * u[0], gxx.sqrt() * u[1]];
            Ok(-(te - tp) * uf[0] + (we - wp) * uf[1])
        };
        let n_scan = 65;
        let mut prev_t = lo;
        let mut prev_m = miss(lo)?;
        let mut bracket = None;
        for i in 1..n_scan {
            let t = lo + (hi - lo) * i as f64 / (n_scan - 1) as f64;
            let m = miss(t)?;
            if prev_m == 0.0 || prev_m * m <= 0.0 {
                bracket = Some((prev_t, t));
                break;
            }
            prev_t = t;
            prev_m = m;
        }
        let (blo, bhi) = bracket.ok_or(PartitionError::NoFootPoint)?;
        let froot = |t: f64| miss(t).unwrap_or(f64::NAN);
        let t_foot = numeric::bracket_root(&froot, blo, bhi, 1e-13);
        let x_foot = self.line.position_at(t_foot)?;
        let p = chart.event(t_foot, x_foot);
        let tau = self.proper_time_at(t_foot)?;
        let s2 = chart.interval_squared(&p, e)?;
        let sigma = s2.max(0.0).sqrt();
        let (_, wp) = chart.conformal(&p)?;
        let (_, we) = chart.conformal(e)?;
        let xi = if we >= wp { sigma } else { -sigma };
        Ok((tau, xi))
    }

    /// External event at the given internal coordinates.
    pub fn to_external(&self, tau: f64, xi: f64) -> Result<Event> {
        let chart = self.phi.chart().clone();
        let t = self.chart_time_at_tau(tau)?;
        let x = self.line.position_at(t)?;
        let p = chart.event(t, x);
        if xi == 0.0 {
            return Ok(p);
        }
        let grid = local_grid(self.phi, &p)?;
        if chart.is_flat_chart() {
            Ok(chart.event(p.t + xi * grid.space_axis[0], p.x + xi * grid.space_axis[1]))
        } else {
            Ok(chart.geodesic_flow(&p, grid.space_axis, xi)?.0)
        }
    }

    /// The perpendicular cut at internal time tau.
    pub fn perpendicular(&self, tau: f64, half_width: f64, count: usize) -> Result<Perpendicular> {
        let t = self.chart_time_at_tau(tau)?;
        let x = self.line.position_at(t)?;
        let p = self.phi.chart().event(t, x);
        perpendicular_at(self.phi, &p, half_width, count)
    }

    pub fn origin_chart_time(&self) -> f64 {
        self.origin_t
    }
}

/// Rest-frame density of the packet at an event: the invariant length of
/// the current, equal to rho * sqrt(1 - v^2) in a local orthonormal
/// frame. This is what a shrinking flow-adapted window measures.
pub fn rest_density(phi: &WaveFunction, e: &Event) -> Result<f64> {
    let (rho, j) = phi.density_current(e)?;
    let q = phi.chart().norm_squared(e, [rho, j])?;
    if q >= 0.0 {
        return Err(PartitionError::SuperluminalFlow { t: e.t, x: e.x, v: j / rho });
    }
    Ok((-q).sqrt())
}

/// Rapidity of the flow at an event relative to the chart rest frame.
pub fn flow_rapidity(phi: &WaveFunction, e: &Event) -> Result<f64> {
    let grid = local_grid(phi, e)?;
    grid.rapidity(phi.chart())
}
