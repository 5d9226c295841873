//! Gridless photon phase fields.
//!
//! A photon here is not a worldline with a frame of its own: it is a
//! family of phase components riding a null direction, defined on a band
//! of the retarded coordinate xi = x - s t (s = +1 rightward, -1
//! leftward). Phases are functions of xi alone, so transporting any
//! component along its own ray changes nothing. Every frame-dependent
//! quantity (energy, momentum) exists only relative to somebody's local
//! grid, obtained by contracting the phase covector with the grid axes.
//! Flat charts only: the straight null rays these fields ride do not
//! survive a position-dependent metric.

use num_complex::Complex64 as C64;
use std::sync::Arc;

use crate::geometry::{Chart, Event, GeometryError};
use crate::partition::LocalGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayDirection {
    Rightward,
    Leftward,
}

impl RayDirection {
    pub fn sign(self) -> f64 {
        match self {
            RayDirection::Rightward => 1.0,
            RayDirection::Leftward => -1.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PhotonError {
    #[error("requires-flat-region: photon phase fields need a flat chart")]
    RequiresFlatRegion,
    #[error("non-positive-frequency: component {index} has omega = {omega}")]
    NonPositiveFrequency { index: usize, omega: f64 },
    #[error("empty-band: the band [{lo}, {hi}] has no interior")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("outside-band: xi = {xi} is outside [{lo}, {hi}]")]
    OutsideBand { xi: f64, lo: f64, hi: f64 },
    #[error("grid-event-mismatch: the grid is anchored at (t = {grid_t}, x = {grid_x}), not at (t = {at_t}, x = {at_x})")]
    GridEventMismatch { grid_t: f64, grid_x: f64, at_t: f64, at_x: f64 },
    #[error("not-reachable: no wavelet has arrived at the target yet")]
    NotReachable,
    #[error("not-normalized: direction weights sum to {sum}, not one")]
    NotNormalized { sum: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

type Result<T> = std::result::Result<T, PhotonError>;

/// One phase component: a positive frequency and a phase offset.
#[derive(Debug, Clone, Copy)]
pub struct PhaseComponent {
    pub omega: f64,
    pub offset: f64,
}

/// A multi-component photon phase field on a null band.
#[derive(Clone)]
pub struct PhotonPhaseField {
    chart: Arc<Chart>,
    direction: RayDirection,
    components: Vec<PhaseComponent>,
    band: (f64, f64),
}

impl PhotonPhaseField {
    /// Builds a phase field from (omega, offset) pairs on the given band
    /// of xi = x - s t.
    pub fn new(
        chart: Arc<Chart>,
        direction: RayDirection,
        components: Vec<(f64, f64)>,
        band: (f64, f64),
    ) -> Result<PhotonPhaseField> {
        if !chart.is_flat_chart() {
            return Err(PhotonError::RequiresFlatRegion);
        }
        if !(band.0 < band.1) {
            return Err(PhotonError::EmptyBand { lo: band.0, hi: band.1 });
        }
        let mut parts = Vec::with_capacity(components.len());
        for (i, (omega, offset)) in components.into_iter().enumerate() {
            if !(omega > 0.0) {
                return Err(PhotonError::NonPositiveFrequency { index: i, omega });
            }
            parts.push(PhaseComponent { omega, offset });
        }
        Ok(PhotonPhaseField { chart, direction, components: parts, band })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn direction(&self) -> RayDirection {
        self.direction
    }

    pub fn components(&self) -> &[PhaseComponent] {
        &self.components
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    /// Retarded coordinate of an event.
    pub fn xi(&self, e: &Event) -> Result<f64> {
        if e.chart != self.chart.id() {
            return Err(PhotonError::Geometry(GeometryError::WrongChart {
                expected: self.chart.id(),
                found: e.chart,
            }));
        }
        Ok(e.x - self.direction.sign() * e.t)
    }

    fn xi_in_band(&self, e: &Event) -> Result<f64> {
        let xi = self.xi(e)?;
        if xi < self.band.0 || xi > self.band.1 {
            return Err(PhotonError::OutsideBand { xi, lo: self.band.0, hi: self.band.1 });
        }
        Ok(xi)
    }

    pub fn contains(&self, e: &Event) -> bool {
        self.xi_in_band(e).is_ok()
    }

    /// Phase of every component at an event of the band.
    pub fn phases(&self, e: &Event) -> Result<Vec<f64>> {
        let xi = self.xi_in_band(e)?;
        let s = self.direction.sign();
        Ok(self
            .components
            .iter()
            .map(|c| s * c.omega * xi + c.offset)
            .collect())
    }

    /// Sum over components of the phase change from e1 to e2. Zero
    /// whenever the two events ride the same rays.
    pub fn relative_phase_difference(&self, e1: &Event, e2: &Event) -> Result<f64> {
        let xi1 = self.xi_in_band(e1)?;
        let xi2 = self.xi_in_band(e2)?;
        let s = self.direction.sign();
        let omega_total: f64 = self.components.iter().map(|c| c.omega).sum();
        Ok(s * omega_total * (xi2 - xi1))
    }

    /// The event reached from e by riding the rays for a coordinate time
    /// dt.
    pub fn advance(&self, e: &Event, dt: f64) -> Result<Event> {
        let _ = self.xi(e)?;
        Ok(self.chart.event(e.t + dt, e.x + self.direction.sign() * dt))
    }
}

/// Energy and momentum of a phase field as read by one local grid.
#[derive(Debug, Clone)]
pub struct GridKinematics {
    /// (energy, momentum) per component, in the grid's frame.
    pub per_component: Vec<(f64, f64)>,
    pub energy: f64,
    pub momentum: f64,
}

/// Contracts each component's phase covector d(theta) = (-omega, s omega)
/// with the grid axes: energy is minus the time-axis contraction,
/// momentum the space-axis contraction. For the chart rest grid this
/// returns (sum omega, s sum omega).
pub fn grid_relative_kinematics(
    photon: &PhotonPhaseField,
    grid: &LocalGrid,
    at: &Event,
) -> Result<GridKinematics> {
    let _ = photon.xi_in_band(at)?;
    if grid.anchor.chart != photon.chart.id() {
        return Err(PhotonError::Geometry(GeometryError::WrongChart {
            expected: photon.chart.id(),
            found: grid.anchor.chart,
        }));
    }
    let scale = 1.0_f64.max(at.t.abs()).max(at.x.abs());
    if (grid.anchor.t - at.t).abs() > 1e-9 * scale || (grid.anchor.x - at.x).abs() > 1e-9 * scale {
        return Err(PhotonError::GridEventMismatch {
            grid_t: grid.anchor.t,
            grid_x: grid.anchor.x,
            at_t: at.t,
            at_x: at.x,
        });
    }
    let s = photon.direction.sign();
    let mut per = Vec::with_capacity(photon.components.len());
    let mut energy = 0.0;
    let mut momentum = 0.0;
    for c in &photon.components {
        // Covector components (theta_t, theta_x) = (-omega, s omega).
        let e = c.omega * grid.time_axis[0] - s * c.omega * grid.time_axis[1];
        let p = s * c.omega * grid.space_axis[1] - c.omega * grid.space_axis[0];
        per.push((e, p));
        energy += e;
        momentum += p;
    }
    Ok(GridKinematics { per_component: per, energy, momentum })
}

/// Ratio of received to emitted energy for a photon of the given
/// direction exchanged between two grids: sqrt((1 - s v) / (1 + s v))
/// with v the receiver's velocity in the emitter's frame.
pub fn doppler_ratio(
    chart: &Chart,
    emitter: &LocalGrid,
    receiver: &LocalGrid,
    direction: RayDirection,
) -> Result<f64> {
    if !chart.is_flat_chart() {
        return Err(PhotonError::RequiresFlatRegion);
    }
    let u = receiver.time_axis;
    let t_dot = chart.inner(&emitter.anchor, u, emitter.time_axis)?;
    let x_dot = chart.inner(&emitter.anchor, u, emitter.space_axis)?;
    let v = x_dot / (-t_dot);
    let s = direction.sign();
    Ok(((1.0 - s * v) / (1.0 + s * v)).sqrt())
}

/// A point wavelet source in a spatial plane: it oscillates with the
/// given phase rate from `emission_start` on, and its wavelet carries the
/// retarded phase outward at unit speed.
#[derive(Debug, Clone, Copy)]
pub struct PlanarSource {
    pub position: [f64; 2],
    pub phase_rate: f64,
    pub phase_offset: f64,
    pub intensity: f64,
    pub emission_start: f64,
}

/// Superposes the wavelets of all sources that have reached the target by
/// `time`: sum of sqrt(intensity) exp(i (offset + rate (time - r))) over
/// arrived sources. Errs when nothing has arrived.
pub fn huygens_superpose(sources: &[PlanarSource], target: [f64; 2], time: f64) -> Result<C64> {
    let mut amp = C64::new(0.0, 0.0);
    let mut arrived = false;
    for src in sources {
        let dx = target[0] - src.position[0];
        let dy = target[1] - src.position[1];
        let r = (dx * dx + dy * dy).sqrt();
        if time - src.emission_start < r {
            continue;
        }
        arrived = true;
        let phase = src.phase_offset + src.phase_rate * (time - r);
        amp += src.intensity.sqrt() * C64::new(0.0, phase).exp();
    }
    if !arrived {
        return Err(PhotonError::NotReachable);
    }
    Ok(amp)
}

/// Probability weights for the two emission directions available in one
/// spatial dimension.
#[derive(Debug, Clone, Copy)]
pub struct EmissionWeights {
    rightward: f64,
    leftward: f64,
}

impl EmissionWeights {
    pub fn new(rightward: f64, leftward: f64) -> Result<EmissionWeights> {
        let sum = rightward + leftward;
        if !(rightward >= 0.0) || !(leftward >= 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(PhotonError::NotNormalized { sum });
        }
        Ok(EmissionWeights { rightward, leftward })
    }

    pub fn isotropic() -> EmissionWeights {
        EmissionWeights { rightward: 0.5, leftward: 0.5 }
    }

    pub fn rightward(&self) -> f64 {
        self.rightward
    }

    pub fn leftward(&self) -> f64 {
        self.leftward
    }

    /// Maps a uniform draw from [0, 1) to a direction.
    pub fn sample(&self, u: f64) -> RayDirection {
        if u < self.rightward {
            RayDirection::Rightward
        } else {
            RayDirection::Leftward
        }
    }
}
