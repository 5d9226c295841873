//! Scalar wave packets on a chart: closed-form families (spreading
//! Gaussian, plane waves, Gaussian superpositions, Klein-Gordon mode sums,
//! a uniform boxcar test form), lattice-sampled states produced by grid
//! evolution, and chart-remapped views of any of these.
//!
//! Two dynamical principles are supported. Nonrelativistic packets evolve
//! by i d_t phi = -(1/2m) d_xx phi and carry the probability current
//! j = Im(conj(phi) d_x phi) / m with density rho = |phi|^2. Relativistic
//! packets are positive-frequency mode sums with omega = sqrt(k^2 + m^2)
//! and carry the conserved current j^mu = Im(conj(phi) d^mu phi) / m, so
//! their flow speed j/rho stays below 1 mode by mode.
//!
//! Everything is expressed in the packet's home chart; `mapped` wraps a
//! packet behind a coordinate map so the same physical object can be read
//! from another chart, with currents pushed through the map's Jacobian.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::geometry::{Chart, Event, GeometryError};
use crate::numeric;

/// Coordinate axis selector for partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Time,
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Principle {
    /// Nonrelativistic, mass m: omega(k) = k^2 / (2m).
    Schroedinger { mass: f64 },
    /// Relativistic positive-frequency, mass m: omega(k) = sqrt(k^2 + m^2).
    KleinGordon { mass: f64 },
}

impl Principle {
    pub fn mass(&self) -> f64 {
        match *self {
            Principle::Schroedinger { mass } => mass,
            Principle::KleinGordon { mass } => mass,
        }
    }

    pub fn omega(&self, k: f64) -> f64 {
        match *self {
            Principle::Schroedinger { mass } => k * k / (2.0 * mass),
            Principle::KleinGordon { mass } => (k * k + mass * mass).sqrt(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WaveError {
    #[error("outside-packet: event (t = {t}, x = {x}) is outside the packet domain")]
    OutsidePacket { t: f64, x: f64 },
    #[error("insufficient-stencil: x = {x} is too close to the lattice boundary")]
    InsufficientStencil { x: f64 },
    #[error("no-analytic-form: the operation needs a closed-form packet")]
    NoAnalyticForm,
    #[error("non-normalizable: the packet has no finite norm")]
    NonNormalizable,
    #[error("unsupported-form: {0}")]
    UnsupportedForm(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

type Result<T> = std::result::Result<T, WaveError>;

#[derive(Debug, Clone, Copy)]
struct GaussianParams {
    sigma0: f64,
    x0: f64,
    k0: f64,
}

struct GridData {
    x0: f64,
    dx: f64,
    n: usize,
    times: Vec<f64>,
    slices: Vec<Vec<C64>>,
}

type CoordMap = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

enum Form {
    Gaussian(GaussianParams),
    Plane { amp: C64, k: f64 },
    Boxcar { center: f64, width: f64 },
    /// Normalized superposition of nonrelativistic Gaussians; the overall
    /// scale is fixed at construction so the t = 0 norm is one.
    GaussianSum { scale: f64, terms: Vec<(C64, GaussianParams)> },
    /// Relativistic positive-frequency mode sum (not normalizable).
    ModeSum { terms: Vec<(C64, f64)> },
    Grid(GridData),
    /// The same packet read through a coordinate map: `to_home` sends this
    /// chart's coordinates to the inner packet's chart, `from_home` is its
    /// inverse.
    Mapped { to_home: CoordMap, from_home: CoordMap, inner: Box<WaveFunction> },
}

/// Grid evolution request: a uniform lattice on [x_min, x_max] with
/// `nodes` points, evolved from t_start to t_end, recording
/// `recorded_slices` equally spaced time slices with `substeps`
/// integrator steps between consecutive recorded slices.
#[derive(Debug, Clone, Copy)]
pub struct EvolveSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub recorded_slices: usize,
    pub substeps: usize,
}

pub struct WaveFunction {
    chart: Arc<Chart>,
    principle: Principle,
    form: Form,
    normalized: bool,
}

fn gaussian_s(m: f64, sigma0: f64, t: f64) -> C64 {
    C64::new(1.0, t / (2.0 * m * sigma0 * sigma0))
}

/// Closed-form spreading Gaussian and its exact first two x-derivative
/// factors; `d` selects the derivative order (0, 1, or 2 in space, -1 for
/// the time derivative).
fn gaussian_eval(p: &GaussianParams, m: f64, t: f64, x: f64, d: i32) -> C64 {
    let s = gaussian_s(m, p.sigma0, t);
    let v0 = p.k0 / m;
    let w0 = p.k0 * p.k0 / (2.0 * m);
    let xi = x - p.x0 - v0 * t;
    let norm = (2.0 * std::f64::consts::PI * p.sigma0 * p.sigma0).powf(-0.25);
    let phase = C64::new(0.0, p.k0 * (x - p.x0) - w0 * t);
    let core = norm * s.sqrt().inv() * (phase - xi * xi / (4.0 * p.sigma0 * p.sigma0 * s)).exp();
    let g1 = -xi / (2.0 * p.sigma0 * p.sigma0 * s) + C64::new(0.0, p.k0);
    match d {
        0 => core,
        1 => core * g1,
        2 => core * (g1 * g1 - (2.0 * p.sigma0 * p.sigma0 * s).inv()),
        -1 => {
            let sdot = C64::new(0.0, 1.0 / (2.0 * m * p.sigma0 * p.sigma0));
            let term = -sdot / (2.0 * s) + xi * v0 / (2.0 * p.sigma0 * p.sigma0 * s)
                + xi * xi * sdot / (4.0 * p.sigma0 * p.sigma0 * s * s)
                - C64::new(0.0, w0);
            core * term
        }
        _ => unreachable!(),
    }
}

fn plane_eval(amp: C64, k: f64, omega: f64, t: f64, x: f64, axis: Option<Axis>, second: bool) -> C64 {
    let base = amp * C64::new(0.0, k * x - omega * t).exp();
    match (axis, second) {
        (None, _) => base,
        (Some(Axis::Space), false) => base * C64::new(0.0, k),
        (Some(Axis::Time), false) => base * C64::new(0.0, -omega),
        (Some(Axis::Space), true) => base * C64::new(0.0, k) * C64::new(0.0, k),
        (Some(Axis::Time), true) => base * C64::new(0.0, -omega) * C64::new(0.0, -omega),
    }
}

impl WaveFunction {
    /// Normalized spreading Gaussian with initial width sigma0, centered
    /// at x0 with carrier wavenumber k0, under the nonrelativistic
    /// principle with the given mass.
    pub fn gaussian(chart: Arc<Chart>, mass: f64, sigma0: f64, x0: f64, k0: f64) -> WaveFunction {
        assert!(mass > 0.0 && sigma0 > 0.0);
        WaveFunction {
            chart,
            principle: Principle::Schroedinger { mass },
            form: Form::Gaussian(GaussianParams { sigma0, x0, k0 }),
            normalized: true,
        }
    }

    /// Unit-amplitude plane wave under either principle. Not normalizable.
    pub fn plane_wave(chart: Arc<Chart>, principle: Principle, k: f64) -> WaveFunction {
        WaveFunction {
            chart,
            principle,
            form: Form::Plane { amp: C64::new(1.0, 0.0), k },
            normalized: false,
        }
    }

    /// Superposition of nonrelativistic Gaussians, rescaled so the t = 0
    /// norm is exactly one.
    pub fn gaussian_superposition(
        chart: Arc<Chart>,
        mass: f64,
        terms: Vec<(C64, f64, f64, f64)>,
    ) -> Result<WaveFunction> {
        assert!(!terms.is_empty());
        let params: Vec<(C64, GaussianParams)> = terms
            .into_iter()
            .map(|(c, sigma0, x0, k0)| (c, GaussianParams { sigma0, x0, k0 }))
            .collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, p) in &params {
            lo = lo.min(p.x0 - 14.0 * p.sigma0);
            hi = hi.max(p.x0 + 14.0 * p.sigma0);
        }
        let density = |x: f64| {
            let mut acc = C64::new(0.0, 0.0);
            for (c, p) in &params {
                acc += *c * gaussian_eval(p, mass, 0.0, x, 0);
            }
            acc.norm_sqr()
        };
        let norm = numeric::integrate(&density, lo, hi, 1e-13);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(WaveError::NonNormalizable);
        }
        Ok(WaveFunction {
            chart,
            principle: Principle::Schroedinger { mass },
            form: Form::GaussianSum { scale: norm.sqrt().recip(), terms: params },
            normalized: true,
        })
    }

    /// Relativistic positive-frequency mode sum: amplitudes and
    /// wavenumbers, with omega fixed by the mass shell.
    pub fn mode_sum(chart: Arc<Chart>, mass: f64, terms: Vec<(C64, f64)>) -> WaveFunction {
        assert!(!terms.is_empty());
        WaveFunction {
            chart,
            principle: Principle::KleinGordon { mass },
            form: Form::ModeSum { terms },
            normalized: false,
        }
    }

    /// Uniform boxcar over [center - width/2, center + width/2]: constant
    /// amplitude 1/sqrt(width), zero current, domain equal to its support.
    /// A static fixture: it does not evolve, it pins exactness contracts.
    pub fn uniform_box(chart: Arc<Chart>, principle: Principle, center: f64, width: f64) -> WaveFunction {
        assert!(width > 0.0);
        WaveFunction { chart, principle, form: Form::Boxcar { center, width }, normalized: true }
    }

    /// Wraps a packet behind a coordinate map so it can be read from
    /// `chart`: `to_home` maps this chart's (t, x) to the inner packet's
    /// coordinates and `from_home` is its inverse. The map must preserve
    /// time and space orientation (left stays left).
    pub fn mapped<F, G>(chart: Arc<Chart>, to_home: F, from_home: G, inner: WaveFunction) -> WaveFunction
    where
        F: Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
        G: Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
    {
        let normalized = inner.normalized;
        let principle = inner.principle;
        WaveFunction {
            chart,
            principle,
            form: Form::Mapped {
                to_home: Arc::new(to_home),
                from_home: Arc::new(from_home),
                inner: Box::new(inner),
            },
            normalized,
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn principle(&self) -> Principle {
        self.principle
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// True when values come through a coordinate map, whose numeric
    /// Jacobian limits how quietly the current can be evaluated.
    pub fn is_pulled_back(&self) -> bool {
        matches!(self.form, Form::Mapped { .. })
    }

    /// For a packet defined by pulling another one through a coordinate
    /// map: the inner packet and the image of `e` in its chart. Lets
    /// chart-free quantities be computed where the current decays fastest.
    pub fn unmapped(&self, e: &Event) -> Option<(&WaveFunction, Event)> {
        match &self.form {
            Form::Mapped { to_home, inner, .. } => {
                let (t, x) = to_home(e.t, e.x);
                Some((inner, inner.chart.event(t, x)))
            }
            _ => None,
        }
    }

    fn own(&self, e: &Event) -> Result<()> {
        if e.chart != self.chart.id() {
            return Err(WaveError::Geometry(GeometryError::WrongChart {
                expected: self.chart.id(),
                found: e.chart,
            }));
        }
        Ok(())
    }

    /// Complex value of the packet at an event of its chart.
    pub fn evaluate(&self, e: &Event) -> Result<C64> {
        self.own(e)?;
        let m = self.principle.mass();
        match &self.form {
            Form::Gaussian(p) => Ok(gaussian_eval(p, m, e.t, e.x, 0)),
            Form::Plane { amp, k } => Ok(plane_eval(*amp, *k, self.principle.omega(*k), e.t, e.x, None, false)),
            Form::Boxcar { center, width } => {
                if (e.x - center).abs() <= 0.5 * width {
                    Ok(C64::new(width.sqrt().recip(), 0.0))
                } else {
                    Err(WaveError::OutsidePacket { t: e.t, x: e.x })
                }
            }
            Form::GaussianSum { scale, terms } => {
                let mut acc = C64::new(0.0, 0.0);
                for (c, p) in terms {
                    acc += *c * gaussian_eval(p, m, e.t, e.x, 0);
                }
                Ok(acc * *scale)
            }
            Form::ModeSum { terms } => {
                let mut acc = C64::new(0.0, 0.0);
                for (c, k) in terms {
                    acc += plane_eval(*c, *k, self.principle.omega(*k), e.t, e.x, None, false);
                }
                Ok(acc)
            }
            Form::Grid(g) => grid_value(g, e.t, e.x, None),
            Form::Mapped { to_home, inner, .. } => {
                let (t, x) = to_home(e.t, e.x);
                inner.evaluate(&inner.chart.event(t, x))
            }
        }
    }

    /// Closed-form (or lattice-stencil) partial derivative along a chart
    /// axis at an event.
    pub fn analytic_partial(&self, e: &Event, axis: Axis) -> Result<C64> {
        self.own(e)?;
        let m = self.principle.mass();
        match &self.form {
            Form::Gaussian(p) => Ok(gaussian_eval(p, m, e.t, e.x, if axis == Axis::Space { 1 } else { -1 })),
            Form::Plane { amp, k } => {
                Ok(plane_eval(*amp, *k, self.principle.omega(*k), e.t, e.x, Some(axis), false))
            }
            Form::Boxcar { center, width } => {
                if (e.x - center).abs() <= 0.5 * width {
                    Ok(C64::new(0.0, 0.0))
                } else {
                    Err(WaveError::OutsidePacket { t: e.t, x: e.x })
                }
            }
            Form::GaussianSum { scale, terms } => {
                let d = if axis == Axis::Space { 1 } else { -1 };
                let mut acc = C64::new(0.0, 0.0);
                for (c, p) in terms {
                    acc += *c * gaussian_eval(p, m, e.t, e.x, d);
                }
                Ok(acc * *scale)
            }
            Form::ModeSum { terms } => {
                let mut acc = C64::new(0.0, 0.0);
                for (c, k) in terms {
                    acc += plane_eval(*c, *k, self.principle.omega(*k), e.t, e.x, Some(axis), false);
                }
                Ok(acc)
            }
            Form::Grid(g) => grid_value(g, e.t, e.x, Some(axis)),
            Form::Mapped { to_home, inner, .. } => {
                // Chain rule through the map: d_outer = J^T d_inner with J
                // the Jacobian of to_home at the event.
                let (jt, jx) = map_jacobian(to_home, e.t, e.x);
                let (t, x) = to_home(e.t, e.x);
                let he = inner.chart.event(t, x);
                let dt = inner.analytic_partial(&he, Axis::Time)?;
                let dx = inner.analytic_partial(&he, Axis::Space)?;
                Ok(match axis {
                    Axis::Time => dt * jt.0 + dx * jt.1,
                    Axis::Space => dt * jx.0 + dx * jx.1,
                })
            }
        }
    }

    /// Second spatial derivative in closed form, where one exists.
    pub fn analytic_second_space(&self, e: &Event) -> Result<C64> {
        self.own(e)?;
        let m = self.principle.mass();
        match &self.form {
            Form::Gaussian(p) => Ok(gaussian_eval(p, m, e.t, e.x, 2)),
            Form::Plane { amp, k } => {
                Ok(plane_eval(*amp, *k, self.principle.omega(*k), e.t, e.x, Some(Axis::Space), true))
            }
            Form::Boxcar { center, width } => {
                if (e.x - center).abs() <= 0.5 * width {
                    Ok(C64::new(0.0, 0.0))
                } else {
                    Err(WaveError::OutsidePacket { t: e.t, x: e.x })
                }
            }
            Form::GaussianSum { scale, terms } => {
                let mut acc = C64::new(0.0, 0.0);
                for (c, p) in terms {
                    acc += *c * gaussian_eval(p, m, e.t, e.x, 2);
                }
                Ok(acc * *scale)
            }
            Form::ModeSum { terms } => {
                let mut acc = C64::new(0.0, 0.0);
                for (c, k) in terms {
                    acc += plane_eval(*c, *k, self.principle.omega(*k), e.t, e.x, Some(Axis::Space), true);
                }
                Ok(acc)
            }
            Form::Grid(_) | Form::Mapped { .. } => Err(WaveError::NoAnalyticForm),
        }
    }

    /// Probability density and current (j^t, j^x) at an event, as chart
    /// components. Nonrelativistic: (|phi|^2, Im(conj(phi) d_x phi)/m).
    /// Relativistic: j^mu = Im(conj(phi) d^mu phi)/m with the index raised
    /// by the chart metric.
    pub fn density_current(&self, e: &Event) -> Result<(f64, f64)> {
        self.own(e)?;
        match &self.form {
            Form::Boxcar { center, width } => {
                if (e.x - center).abs() <= 0.5 * width {
                    Ok((width.recip(), 0.0))
                } else {
                    Err(WaveError::OutsidePacket { t: e.t, x: e.x })
                }
            }
            Form::Mapped { to_home, from_home, inner } => {
                let (t, x) = to_home(e.t, e.x);
                let he = inner.chart.event(t, x);
                let (rho, j) = inner.density_current(&he)?;
                // The current is a vector: push its components through the
                // Jacobian of the inverse map at the inner coordinates.
                let (jt, jx) = map_jacobian(from_home, t, x);
                Ok((jt.0 * rho + jt.1 * j, jx.0 * rho + jx.1 * j))
            }
            _ => {
                let m = self.principle.mass();
                let phi = self.evaluate(e)?;
                let dx = self.analytic_partial(e, Axis::Space)?;
                match self.principle {
                    Principle::Schroedinger { .. } => {
                        Ok((phi.norm_sqr(), (phi.conj() * dx).im / m))
                    }
                    Principle::KleinGordon { .. } => {
                        let dt = self.analytic_partial(e, Axis::Time)?;
                        let (gtt, gxx) = self.chart.metric_at(e.x)?;
                        // Raise indices: j^t = g^tt j_t, j^x = g^xx j_x.
                        let jt = (phi.conj() * dt).im / m / gtt;
                        let jx = (phi.conj() * dx).im / m / gxx;
                        Ok((jt, jx))
                    }
                }
            }
        }
    }

    /// Peak probability density on the chart time slice t. Used to set the
    /// floor below which a flow direction is considered absent, so a scale
    /// estimate suffices. Closed forms give the peak exactly; sampled,
    /// mapped, and mode-sum packets are scanned (around `x_hint` when the
    /// packet has no intrinsic center).
    pub fn slice_density_peak(&self, t: f64, x_hint: f64) -> Result<f64> {
        match &self.form {
            Form::Gaussian(p) => {
                let m = self.principle.mass();
                let sigma = p.sigma0 * gaussian_s(m, p.sigma0, t).norm();
                Ok(((2.0 * std::f64::consts::PI).sqrt() * sigma).recip())
            }
            Form::Plane { amp, .. } => Ok(amp.norm_sqr()),
            Form::Boxcar { width, .. } => Ok(width.recip()),
            Form::GaussianSum { terms, .. } => {
                let m = self.principle.mass();
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (_, p) in terms {
                    let sigma = p.sigma0 * gaussian_s(m, p.sigma0, t).norm();
                    let center = p.x0 + p.k0 / m * t;
                    lo = lo.min(center - 12.0 * sigma);
                    hi = hi.max(center + 12.0 * sigma);
                }
                Ok(self.scan_density_peak(t, lo, hi, 2048))
            }
            Form::ModeSum { .. } => Ok(self.scan_density_peak(t, x_hint - 24.0, x_hint + 24.0, 2048)),
            Form::Grid(g) => {
                // Scale estimate from the recorded slice nearest to t.
                let i = match g.times.iter().position(|&ts| ts >= t) {
                    Some(0) | None => {
                        if g.times[0] >= t { 0 } else { g.times.len() - 1 }
                    }
                    Some(i) => {
                        if (g.times[i] - t).abs() < (t - g.times[i - 1]).abs() { i } else { i - 1 }
                    }
                };
                let peak = g.slices[i].iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
                Ok(peak)
            }
            Form::Mapped { .. } => Ok(self.scan_density_peak(t, x_hint - 24.0, x_hint + 24.0, 1024)),
        }
    }

    fn scan_density_peak(&self, t: f64, lo: f64, hi: f64, n: usize) -> f64 {
        let mut best = 0.0f64;
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            if let Ok((rho, _)) = self.density_current(&self.chart.event(t, x)) {
                if rho.is_finite() {
                    best = best.max(rho);
                }
            }
        }
        best
    }

    /// Evolves the packet on a uniform lattice and returns a sampled
    /// packet covering [t_start, t_end]. Nonrelativistic packets integrate
    /// the free equation with a Crank-Nicolson step (unitary on the
    /// lattice, Dirichlet walls); relativistic mode sums are sampled from
    /// their closed form.
    pub fn evolve(&self, spec: &EvolveSpec) -> Result<WaveFunction> {
        assert!(spec.nodes >= 8 && spec.recorded_slices >= 2 && spec.substeps >= 1);
        assert!(spec.x_max > spec.x_min && spec.t_end > spec.t_start);
        match (&self.form, self.principle) {
            (Form::Gaussian(_) | Form::GaussianSum { .. } | Form::Grid(_), Principle::Schroedinger { mass }) => {
                self.evolve_crank_nicolson(spec, mass)
            }
            (Form::ModeSum { .. }, Principle::KleinGordon { .. }) => {
                let dx = (spec.x_max - spec.x_min) / (spec.nodes - 1) as f64;
                let mut times = Vec::with_capacity(spec.recorded_slices);
                let mut slices = Vec::with_capacity(spec.recorded_slices);
                for s in 0..spec.recorded_slices {
                    let t = spec.t_start
                        + (spec.t_end - spec.t_start) * s as f64 / (spec.recorded_slices - 1) as f64;
                    let mut row = Vec::with_capacity(spec.nodes);
                    for i in 0..spec.nodes {
                        let x = spec.x_min + dx * i as f64;
                        row.push(self.evaluate(&self.chart.event(t, x))?);
                    }
                    times.push(t);
                    slices.push(row);
                }
                Ok(WaveFunction {
                    chart: self.chart.clone(),
                    principle: self.principle,
                    form: Form::Grid(GridData { x0: spec.x_min, dx, n: spec.nodes, times, slices }),
                    normalized: self.normalized,
                })
            }
            _ => Err(WaveError::UnsupportedForm(
                "evolve expects a localized nonrelativistic packet or a relativistic mode sum",
            )),
        }
    }

    fn evolve_crank_nicolson(&self, spec: &EvolveSpec, mass: f64) -> Result<WaveFunction> {
        let n = spec.nodes;
        let dx = (spec.x_max - spec.x_min) / (n - 1) as f64;
        let mut psi: Vec<C64> = Vec::with_capacity(n);
        for i in 0..n {
            let x = spec.x_min + dx * i as f64;
            psi.push(self.evaluate(&self.chart.event(spec.t_start, x))?);
        }
        let slice_dt = (spec.t_end - spec.t_start) / (spec.recorded_slices - 1) as f64;
        let dt = slice_dt / spec.substeps as f64;
        // (1 + i H dt/2) psi_next = (1 - i H dt/2) psi with
        // H = -(1/2m) D_xx on interior nodes, Dirichlet walls.
        let alpha = C64::new(0.0, dt / (4.0 * mass * dx * dx));
        let interior = n - 2;
        let sub = vec![-alpha; interior - 1];
        let diag = vec![C64::new(1.0, 0.0) + 2.0 * alpha; interior];
        let sup = vec![-alpha; interior - 1];
        let mut times = vec![spec.t_start];
        let mut slices = vec![psi.clone()];
        for s in 1..spec.recorded_slices {
            for _ in 0..spec.substeps {
                let mut rhs = Vec::with_capacity(interior);
                for i in 1..n - 1 {
                    let lap = psi[i - 1] + psi[i + 1];
                    rhs.push((C64::new(1.0, 0.0) - 2.0 * alpha) * psi[i] + alpha * lap);
                }
                let sol = numeric::solve_tridiag_complex(&sub, &diag, &sup, rhs);
                for (i, v) in sol.into_iter().enumerate() {
                    psi[i + 1] = v;
                }
                psi[0] = C64::new(0.0, 0.0);
                psi[n - 1] = C64::new(0.0, 0.0);
            }
            times.push(spec.t_start + slice_dt * s as f64);
            slices.push(psi.clone());
        }
        Ok(WaveFunction {
            chart: self.chart.clone(),
            principle: self.principle,
            form: Form::Grid(GridData { x0: spec.x_min, dx, n, times, slices }),
            normalized: self.normalized,
        })
    }

    /// Lattice l2 norm (dx times the sum of |psi|^2) of the recorded slice
    /// closest to t. Only sampled packets carry lattice slices.
    pub fn lattice_norm(&self, t: f64) -> Result<f64> {
        match &self.form {
            Form::Grid(g) => {
                let i = g
                    .times
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                Ok(g.dx * g.slices[i].iter().map(|c| c.norm_sqr()).sum::<f64>())
            }
            _ => Err(WaveError::UnsupportedForm("lattice_norm needs a sampled packet")),
        }
    }

    /// Integral of the density over a spatial window at fixed chart time.
    pub fn norm_on_slice(&self, t: f64, x_lo: f64, x_hi: f64) -> Result<f64> {
        let f = |x: f64| match self.density_current(&self.chart.event(t, x)) {
            Ok((rho, _)) => rho,
            Err(_) => 0.0,
        };
        Ok(numeric::integrate(&f, x_lo, x_hi, 1e-12))
    }
}

fn map_jacobian(map: &CoordMap, t: f64, x: f64) -> ((f64, f64), (f64, f64)) {
    let ht = 1e-6 * (1.0 + t.abs());
    let hx = 1e-6 * (1.0 + x.abs());
    let (tp, xp) = map(t + ht, x);
    let (tm, xm) = map(t - ht, x);
    let d_dt = ((tp - tm) / (2.0 * ht), (xp - xm) / (2.0 * ht));
    let (tp, xp) = map(t, x + hx);
    let (tm, xm) = map(t, x - hx);
    let d_dx = ((tp - tm) / (2.0 * hx), (xp - xm) / (2.0 * hx));
    // Rows of the Jacobian: (d new_t / d (t, x), d new_x / d (t, x)).
    (
        (d_dt.0, d_dx.0),
        (d_dt.1, d_dx.1),
    )
}

/// Cubic (Catmull-Rom) interpolation in x, linear in t; `axis` selects a
/// derivative instead of the value.
fn grid_value(g: &GridData, t: f64, x: f64, axis: Option<Axis>) -> Result<C64> {
    let t_lo = g.times[0];
    let t_hi = *g.times.last().unwrap();
    let eps = 1e-12 * (1.0 + t_hi.abs());
    if t < t_lo - eps || t > t_hi + eps {
        return Err(WaveError::OutsidePacket { t, x });
    }
    let x_hi = g.x0 + g.dx * (g.n - 1) as f64;
    if x < g.x0 - 1e-12 || x > x_hi + 1e-12 {
        return Err(WaveError::OutsidePacket { t, x });
    }
    let k = match g.times.iter().position(|&tk| tk >= t - eps) {
        Some(0) => 0,
        Some(k) => k - 1,
        None => g.times.len() - 2,
    };
    let k = k.min(g.times.len().saturating_sub(2));
    let interp = |slice: &[C64]| -> Result<C64> {
        let u = ((x - g.x0) / g.dx).floor();
        let i = (u as isize).clamp(0, g.n as isize - 2) as usize;
        let s = (x - (g.x0 + g.dx * i as f64)) / g.dx;
        let want_deriv = matches!(axis, Some(Axis::Space));
        if i == 0 || i + 2 >= g.n {
            if axis.is_some() {
                return Err(WaveError::InsufficientStencil { x });
            }
            // Linear fallback in the first and last cells.
            return Ok(slice[i] * (1.0 - s) + slice[i + 1] * s);
        }
        let p0 = slice[i - 1];
        let p1 = slice[i];
        let p2 = slice[i + 1];
        let p3 = slice[i + 2];
        if want_deriv {
            // d/dx of the Catmull-Rom cell polynomial.
            let c1 = (p2 - p0) * 0.5;
            let c2 = p0 - p1 * 2.5 + p2 * 2.0 - p3 * 0.5;
            let c3 = (p1 - p2) * 1.5 + (p3 - p0) * 0.5;
            return Ok((c1 + c2 * (2.0 * s) + c3 * (3.0 * s * s)) / g.dx);
        }
        let c1 = (p2 - p0) * 0.5;
        let c2 = p0 - p1 * 2.5 + p2 * 2.0 - p3 * 0.5;
        let c3 = (p1 - p2) * 1.5 + (p3 - p0) * 0.5;
        Ok(p1 + c1 * s + c2 * (s * s) + c3 * (s * s * s))
    };
    if g.times.len() == 1 {
        if matches!(axis, Some(Axis::Time)) {
            return Err(WaveError::InsufficientStencil { x });
        }
        return interp(&g.slices[0]);
    }
    let ta = g.times[k];
    let tb = g.times[k + 1];
    let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
    match axis {
        Some(Axis::Time) => {
            let va = interp(&g.slices[k])?;
            let vb = interp(&g.slices[k + 1])?;
            Ok((vb - va) / (tb - ta))
        }
        _ => {
            let va = interp(&g.slices[k])?;
            let vb = interp(&g.slices[k + 1])?;
            Ok(va * (1.0 - w) + vb * w)
        }
    }
}
