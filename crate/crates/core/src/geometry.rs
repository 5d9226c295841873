//! Charts, events, intervals, cones, geodesics, and the five-event
//! neighborhood used by limit constructions.
//!
//! A chart is a coordinate system plus a metric expressed in it. Two kinds
//! are supported: the flat Minkowski chart, and static diagonal charts
//! ds^2 = g_tt(x) dt^2 + g_xx(x) dx^2 with g_tt < 0 < g_xx on a stated
//! domain. Every event carries the label of the chart its coordinates live
//! in, and mixing labels is an error rather than a silent misread.
//!
//! Static diagonal charts precompute a tortoise table w(x) with
//! dw/dx = sqrt(g_xx / -g_tt). In the (t, w) plane the metric is conformal
//! to Minkowski, so light rays are exact 45 degree lines there: causal
//! classification and null-ray intersections are algebra, not integration.
//! Timelike and spacelike separations come from geodesic shooting in the
//! original coordinates, parameterized by the monotone coordinate.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::numeric;

/// Relative half-width of the band around the light cone inside which a
/// separation is classified lightlike and reported as exactly zero.
pub const LIGHT_BAND: f64 = 1e-9;

static NEXT_CHART_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChartId(u64);

/// A point of spacetime, as coordinates in one named chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub chart: ChartId,
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalClass {
    Timelike,
    Spacelike,
    Lightlike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeSide {
    Past,
    Future,
}

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("wrong-chart: event labeled chart {found:?} used with chart {expected:?}")]
    WrongChart { expected: ChartId, found: ChartId },
    #[error("outside-domain: x = {x} outside chart domain [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },
    #[error("invalid-signature: g_tt = {g_tt}, g_xx = {g_xx} at x = {x}")]
    InvalidSignature { x: f64, g_tt: f64, g_xx: f64 },
    #[error("not-timelike: ({0}, {1}) is not a future timelike direction")]
    NotTimelike(f64, f64),
    #[error("null-direction: ({0}, {1}) has vanishing norm, no unit rescale")]
    NullDirection(f64, f64),
    #[error("no-unique-geodesic: shooting failed between ({at}, {ax}) and ({bt}, {bx})")]
    NoUniqueGeodesic { at: f64, ax: f64, bt: f64, bx: f64 },
    #[error("no-chart-map: {from:?} -> {to:?} is not registered")]
    NoChartMap { from: ChartId, to: ChartId },
    #[error("scale-too-coarse: delta = {delta} pushes the construction outside the chart domain")]
    ScaleTooCoarse { delta: f64 },
}

type Result<T> = std::result::Result<T, GeometryError>;

type Coefficient = Box<dyn Fn(f64) -> f64 + Send + Sync>;

struct TortoiseTable {
    xs: Vec<f64>,
    ws: Vec<f64>,
    /// dw/dx at the nodes, known in closed form as sqrt(B/A).
    slopes: Vec<f64>,
}

impl TortoiseTable {
    fn build(a: &Coefficient, b: &Coefficient, lo: f64, hi: f64, n: usize) -> TortoiseTable {
        let slope = |x: f64| (b(x) / a(x)).sqrt();
        let h = (hi - lo) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        let slopes: Vec<f64> = xs.iter().map(|&x| slope(x)).collect();
        let mut ws = Vec::with_capacity(n);
        ws.push(0.0);
        for i in 1..n {
            let mid = 0.5 * (xs[i - 1] + xs[i]);
            let seg = h / 6.0 * (slopes[i - 1] + 4.0 * slope(mid) + slopes[i]);
            ws.push(ws[i - 1] + seg);
        }
        TortoiseTable { xs, ws, slopes }
    }

    fn forward(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        numeric::hermite(
            x,
            self.xs[i],
            self.xs[i + 1],
            self.ws[i],
            self.ws[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
        )
    }

    /// Inverse of the strictly increasing tortoise map, by cell bisection.
    fn inverse(&self, w: f64) -> f64 {
        let n = self.ws.len();
        let i = match self.ws.binary_search_by(|v| v.partial_cmp(&w).unwrap()) {
            Ok(i) => return self.xs[i.min(n - 1)],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let mut lo = self.xs[i];
        let mut hi = self.xs[i + 1];
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.forward(mid) < w {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * (1.0 + lo.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

enum ChartKind {
    Minkowski,
    StaticDiagonal {
        /// A(x) = -g_tt(x) > 0.
        a: Coefficient,
        /// B(x) = g_xx(x) > 0.
        b: Coefficient,
        lo: f64,
        hi: f64,
        tortoise: TortoiseTable,
    },
}

pub struct Chart {
    id: ChartId,
    name: String,
    kind: ChartKind,
}

impl std::fmt::Debug for Chart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Chart({:?}, {})", self.id, self.name)
    }
}

/// Boost of a two-vector (v_t, v_x) by velocity beta, |beta| < 1.
pub fn lorentz_boost(v: [f64; 2], beta: f64) -> [f64; 2] {
    let g = 1.0 / (1.0 - beta * beta).sqrt();
    [g * (v[0] + beta * v[1]), g * (v[1] + beta * v[0])]
}

pub fn beta_to_rapidity(beta: f64) -> f64 {
    beta.atanh()
}

pub fn rapidity_to_beta(chi: f64) -> f64 {
    chi.tanh()
}

/// Relativistic velocity composition.
pub fn add_velocities(u: f64, v: f64) -> f64 {
    (u + v) / (1.0 + u * v)
}

/// The five-event construction around a center: two timelike endpoints at
/// proper time sqrt(delta) along the given time direction, and the two
/// null-ray intersections flanking the center spatially. `delta` is the
/// squared interval scale of the construction.
#[derive(Debug, Clone, Copy)]
pub struct Neighborhood {
    pub center: Event,
    pub future: Event,
    pub past: Event,
    /// Null intersection on the +x side of the time axis.
    pub spatial_plus: Event,
    /// Null intersection on the -x side.
    pub spatial_minus: Event,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetryReport {
    pub time_translation: bool,
    pub space_translation: bool,
    pub boost: bool,
}

/// Symmetry scan for a diagonal metric whose coefficients may depend on
/// both coordinates. Time (space) translation symmetry means both
/// coefficients are numerically independent of t (x) at every probe;
/// a boost Killing field exists for a diagonal metric exactly when both
/// coefficients are constant.
pub fn metric_symmetry_report<F, G>(g_tt: F, g_xx: G, probes: &[(f64, f64)]) -> SymmetryReport
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    let mut dt_max: f64 = 0.0;
    let mut dx_max: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for &(t, x) in probes {
        let ht = 1e-4 * (1.0 + t.abs());
        let hx = 1e-4 * (1.0 + x.abs());
        for f in [&g_tt as &dyn Fn(f64, f64) -> f64, &g_xx] {
            dt_max = dt_max.max(((f(t + ht, x) - f(t - ht, x)) / (2.0 * ht)).abs());
            dx_max = dx_max.max(((f(t, x + hx) - f(t, x - hx)) / (2.0 * hx)).abs());
            scale = scale.max(f(t, x).abs());
        }
    }
    let tol = 1e-9 * scale.max(1.0);
    let time_translation = dt_max <= tol;
    let space_translation = dx_max <= tol;
    SymmetryReport {
        time_translation,
        space_translation,
        boost: time_translation && space_translation,
    }
}

impl Chart {
    pub fn minkowski() -> Arc<Chart> {
        Arc::new(Chart {
            id: ChartId(NEXT_CHART_ID.fetch_add(1, Ordering::Relaxed)),
            name: "minkowski".into(),
            kind: ChartKind::Minkowski,
        })
    }

    /// A static diagonal chart on the stated x-domain. The signature
    /// (g_tt < 0 < g_xx) is validated on a scan of the domain up front.
    pub fn static_diagonal<F, G>(name: &str, g_tt: F, g_xx: G, domain: (f64, f64)) -> Result<Arc<Chart>>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let (lo, hi) = domain;
        assert!(lo < hi, "domain must be a nonempty interval");
        for i in 0..=64 {
            let x = lo + (hi - lo) * i as f64 / 64.0;
            let gt = g_tt(x);
            let gx = g_xx(x);
            if !(gt < 0.0 && gx > 0.0) || !gt.is_finite() || !gx.is_finite() {
                return Err(GeometryError::InvalidSignature { x, g_tt: gt, g_xx: gx });
            }
        }
        let a: Coefficient = Box::new(move |x| -g_tt(x));
        let b: Coefficient = Box::new(g_xx);
        let tortoise = TortoiseTable::build(&a, &b, lo, hi, 2001);
        Ok(Arc::new(Chart {
            id: ChartId(NEXT_CHART_ID.fetch_add(1, Ordering::Relaxed)),
            name: name.into(),
            kind: ChartKind::StaticDiagonal { a, b, lo, hi, tortoise },
        }))
    }

    pub fn id(&self) -> ChartId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_flat_chart(&self) -> bool {
        matches!(self.kind, ChartKind::Minkowski)
    }

    pub fn event(&self, t: f64, x: f64) -> Event {
        Event { chart: self.id, t, x }
    }

    fn own(&self, e: &Event) -> Result<()> {
        if e.chart != self.id {
            return Err(GeometryError::WrongChart { expected: self.id, found: e.chart });
        }
        Ok(())
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if let ChartKind::StaticDiagonal { lo, hi, .. } = &self.kind {
            // Written so a NaN coordinate also lands in the error branch.
            if !(x >= *lo && x <= *hi) {
                return Err(GeometryError::OutsideDomain { x, lo: *lo, hi: *hi });
            }
        } else if !x.is_finite() {
            return Err(GeometryError::OutsideDomain { x, lo: f64::NEG_INFINITY, hi: f64::INFINITY });
        }
        Ok(())
    }

    /// Metric components (g_tt, g_xx) at spatial coordinate x.
    pub fn metric_at(&self, x: f64) -> Result<(f64, f64)> {
        self.check_domain(x)?;
        match &self.kind {
            ChartKind::Minkowski => Ok((-1.0, 1.0)),
            ChartKind::StaticDiagonal { a, b, .. } => Ok((-(a(x)), b(x))),
        }
    }

    /// g(v, v) for a two-vector attached at `at`.
    pub fn norm_squared(&self, at: &Event, v: [f64; 2]) -> Result<f64> {
        self.own(at)?;
        let (gtt, gxx) = self.metric_at(at.x)?;
        Ok(gtt * v[0] * v[0] + gxx * v[1] * v[1])
    }

    /// g(u, v) for two-vectors attached at `at`.
    pub fn inner(&self, at: &Event, u: [f64; 2], v: [f64; 2]) -> Result<f64> {
        self.own(at)?;
        let (gtt, gxx) = self.metric_at(at.x)?;
        Ok(gtt * u[0] * v[0] + gxx * u[1] * v[1])
    }

    /// Rescales v to a unit future timelike vector, erring if it is not
    /// timelike or points pastward.
    pub fn unit_future_timelike(&self, at: &Event, v: [f64; 2]) -> Result<[f64; 2]> {
        let q = self.norm_squared(at, v)?;
        if q >= 0.0 || v[0] <= 0.0 {
            return Err(GeometryError::NotTimelike(v[0], v[1]));
        }
        let s = (-q).sqrt();
        Ok([v[0] / s, v[1] / s])
    }

    /// The unit spacelike direction completing `u` (unit future timelike)
    /// to an oriented orthonormal pair, with positive x component.
    pub fn spatial_partner(&self, at: &Event, u: [f64; 2]) -> Result<[f64; 2]> {
        self.own(at)?;
        let (gtt, gxx) = self.metric_at(at.x)?;
        // Orthogonality gtt*u0*w0 + gxx*u1*w1 = 0 with unit spacelike norm.
        // In an orthonormal frame (e_t = u0*sqrt(-gtt), ...) this is the
        // usual swap of components.
        let st = (-gtt).sqrt();
        let sx = gxx.sqrt();
        // Frame components of u: (st*u0, sx*u1); partner frame components
        // swap them; back to chart components.
        let f0 = st * u[0];
        let f1 = sx * u[1];
        let w = [f1 / st, f0 / sx];
        if w[1] > 0.0 {
            Ok(w)
        } else {
            Ok([-w[0], -w[1]])
        }
    }

    /// Conformal coordinates (t, w) where light rays are 45 degree lines.
    pub fn conformal(&self, e: &Event) -> Result<(f64, f64)> {
        self.own(e)?;
        self.check_domain(e.x)?;
        match &self.kind {
            ChartKind::Minkowski => Ok((e.t, e.x)),
            ChartKind::StaticDiagonal { tortoise, .. } => Ok((e.t, tortoise.forward(e.x))),
        }
    }

    pub fn from_conformal(&self, t: f64, w: f64) -> Result<Event> {
        match &self.kind {
            ChartKind::Minkowski => Ok(self.event(t, w)),
            ChartKind::StaticDiagonal { tortoise, .. } => {
                let x = tortoise.inverse(w);
                self.check_domain(x)?;
                Ok(self.event(t, x))
            }
        }
    }

    /// Squared geodesic interval between two events of this chart.
    /// Negative for timelike pairs (minus proper time squared), positive
    /// for spacelike pairs (proper length squared), exactly zero inside
    /// the lightlike band.
    pub fn interval_squared(&self, a: &Event, b: &Event) -> Result<f64> {
        self.own(a)?;
        self.own(b)?;
        if let ChartKind::Minkowski = self.kind {
            let dt = b.t - a.t;
            let dx = b.x - a.x;
            let s2 = -dt * dt + dx * dx;
            let scale = dt * dt + dx * dx;
            // Inside the relative band around the cone the interval reads
            // exactly zero, consistent with the lightlike classification.
            if s2.abs() <= LIGHT_BAND * scale.max(1.0) {
                return Ok(0.0);
            }
            return Ok(s2);
        }
        match self.classify(a, b)? {
            CausalClass::Lightlike => Ok(0.0),
            CausalClass::Timelike => {
                let tau = self.shoot_timelike(a, b)?;
                Ok(-tau * tau)
            }
            CausalClass::Spacelike => {
                let sigma = self.shoot_spacelike(a, b)?;
                Ok(sigma * sigma)
            }
        }
    }

    /// Causal classification with an explicit lightlike band: conformal
    /// rescaling preserves causal structure, so the sign of
    /// -dt^2 + dw^2 in tortoise coordinates is exact.
    pub fn classify(&self, a: &Event, b: &Event) -> Result<CausalClass> {
        let (ta, wa) = self.conformal(a)?;
        let (tb, wb) = self.conformal(b)?;
        let dt = tb - ta;
        let dw = wb - wa;
        let omega2 = match &self.kind {
            ChartKind::Minkowski => 1.0,
            ChartKind::StaticDiagonal { a: ca, .. } => ca(0.5 * (a.x + b.x)),
        };
        let proxy = omega2 * (-dt * dt + dw * dw);
        let scale = omega2 * (dt * dt + dw * dw);
        if proxy.abs() <= LIGHT_BAND * scale.max(1.0) {
            Ok(CausalClass::Lightlike)
        } else if proxy < 0.0 {
            Ok(CausalClass::Timelike)
        } else {
            Ok(CausalClass::Spacelike)
        }
    }

    /// Closed-cone membership: is `e` in the past or future cone of
    /// `apex`, boundary included?
    pub fn in_cone(&self, apex: &Event, e: &Event, side: TimeSide) -> Result<bool> {
        let (ta, wa) = self.conformal(apex)?;
        let (te, we) = self.conformal(e)?;
        let dt = te - ta;
        let dw = we - wa;
        let slack = 1e-12 * (dt.abs() + dw.abs()).max(1.0);
        Ok(match side {
            TimeSide::Future => dt >= dw.abs() - slack,
            TimeSide::Past => -dt >= dw.abs() - slack,
        })
    }

    /// Exponential map: follow the geodesic from `at` with initial tangent
    /// `v` (timelike or spacelike, any scale) for parameter length `s` in
    /// units where the tangent is normalized to unit norm. Returns the
    /// endpoint and the transported unit tangent.
    pub fn geodesic_flow(&self, at: &Event, v: [f64; 2], s: f64) -> Result<(Event, [f64; 2])> {
        self.own(at)?;
        let q = self.norm_squared(at, v)?;
        if q == 0.0 || !q.is_finite() {
            return Err(GeometryError::NullDirection(v[0], v[1]));
        }
        let n = q.abs().sqrt();
        let v = [v[0] / n, v[1] / n];
        if let ChartKind::Minkowski = self.kind {
            return Ok((self.event(at.t + s * v[0], at.x + s * v[1]), v));
        }
        let rhs = |_: f64, y: &[f64; 4]| self.geodesic_rhs(y);
        let mut strayed = false;
        let y = numeric::rk4_adaptive(&rhs, 0.0, s, [at.t, at.x, v[0], v[1]], 1e-12, &mut |_, y| {
            strayed |= self.check_domain(y[1]).is_err();
        });
        if strayed {
            return Err(GeometryError::OutsideDomain {
                x: y[1],
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            });
        }
        self.check_domain(y[1])?;
        Ok((self.event(y[0], y[1]), [y[2], y[3]]))
    }

    fn coeffs(&self) -> Option<(&Coefficient, &Coefficient)> {
        match &self.kind {
            ChartKind::Minkowski => None,
            ChartKind::StaticDiagonal { a, b, .. } => Some((a, b)),
        }
    }

    fn geodesic_rhs(&self, y: &[f64; 4]) -> [f64; 4] {
        let (a, b) = self.coeffs().expect("curved chart");
        let x = y[1];
        let h = 1e-6 * (1.0 + x.abs());
        let ax = a(x);
        let bx = b(x);
        let ap = (a(x + h) - a(x - h)) / (2.0 * h);
        let bp = (b(x + h) - b(x - h)) / (2.0 * h);
        let (td, xd) = (y[2], y[3]);
        [
            td,
            xd,
            -(ap / ax) * td * xd,
            -(ap / (2.0 * bx)) * td * td - (bp / (2.0 * bx)) * xd * xd,
        ]
    }

    /// Proper time along the unique timelike geodesic from a to b, found by
    /// shooting over the initial rapidity. The geodesic is integrated in
    /// coordinate time, which is strictly monotone along timelike curves of
    /// a static diagonal metric.
    fn shoot_timelike(&self, a: &Event, b: &Event) -> Result<f64> {
        let (ca, cb) = self.coeffs().expect("curved chart");
        let (from, to) = if b.t >= a.t { (a, b) } else { (b, a) };
        let ratio = |x: f64| (ca(x) / cb(x)).sqrt();
        let deriv = |x: f64, f: &Coefficient| {
            let h = 1e-6 * (1.0 + x.abs());
            (f(x + h) - f(x - h)) / (2.0 * h)
        };
        // State [x, v = dx/dt, tau], independent variable t.
        let rhs = |_: f64, y: &[f64; 3]| {
            let x = y[0];
            let v = y[1];
            let ax = ca(x);
            let bx = cb(x);
            let ap = deriv(x, ca);
            let bp = deriv(x, cb);
            let dv = -ap / (2.0 * bx) - (bp / (2.0 * bx)) * v * v + (ap / ax) * v * v;
            let arg = (ax - bx * v * v).max(0.0);
            [v, dv, arg.sqrt()]
        };
        let residual = |p: f64| -> Option<(f64, f64)> {
            let v0 = ratio(from.x) * p;
            let y = numeric::rk4_adaptive(&rhs, from.t, to.t, [from.x, v0, 0.0], 1e-11, &mut |_, _| {});
            if !y[0].is_finite() {
                return None;
            }
            Some((y[0] - to.x, y[2]))
        };
        shoot_root(&residual, 1e-13 * (1.0 + to.x.abs())).ok_or(self.no_geodesic(a, b))
    }

    /// Proper length along the spacelike geodesic from a to b, shooting in
    /// the monotone spatial coordinate.
    fn shoot_spacelike(&self, a: &Event, b: &Event) -> Result<f64> {
        let (ca, cb) = self.coeffs().expect("curved chart");
        let (from, to) = if b.x >= a.x { (a, b) } else { (b, a) };
        let deriv = |x: f64, f: &Coefficient| {
            let h = 1e-6 * (1.0 + x.abs());
            (f(x + h) - f(x - h)) / (2.0 * h)
        };
        // State [t, u = dt/dx, sigma], independent variable x.
        let rhs = |x: f64, y: &[f64; 3]| {
            let u = y[1];
            let ax = ca(x);
            let bx = cb(x);
            let ap = deriv(x, ca);
            let bp = deriv(x, cb);
            let du = -(ap / ax) * u + (ap / (2.0 * bx)) * u * u * u + (bp / (2.0 * bx)) * u;
            let arg = (bx - ax * u * u).max(0.0);
            [u, du, arg.sqrt()]
        };
        let ratio = |x: f64| (cb(x) / ca(x)).sqrt();
        let residual = |p: f64| -> Option<(f64, f64)> {
            let u0 = ratio(from.x) * p;
            let y = numeric::rk4_adaptive(&rhs, from.x, to.x, [from.t, u0, 0.0], 1e-11, &mut |_, _| {});
            if !y[0].is_finite() {
                return None;
            }
            Some((y[0] - to.t, y[2]))
        };
        shoot_root(&residual, 1e-13 * (1.0 + to.t.abs())).ok_or(self.no_geodesic(a, b))
    }

    fn no_geodesic(&self, a: &Event, b: &Event) -> GeometryError {
        GeometryError::NoUniqueGeodesic { at: a.t, ax: a.x, bt: b.t, bx: b.x }
    }

    /// Builds the five-event neighborhood at `center` for squared scale
    /// `delta`, with the time axis along `time_dir` (any future timelike
    /// vector, normalized internally).
    ///
    /// The timelike endpoints sit at proper time sqrt(delta) along the
    /// axis; the spatial vertices are the intersections of the past light
    /// cone of the future endpoint with the future light cone of the past
    /// endpoint, computed exactly in tortoise coordinates.
    pub fn build_neighborhood(&self, center: &Event, time_dir: [f64; 2], delta: f64) -> Result<Neighborhood> {
        self.own(center)?;
        assert!(delta > 0.0, "delta must be positive");
        let u = self.unit_future_timelike(center, time_dir)?;
        let r = delta.sqrt();
        if let ChartKind::Minkowski = self.kind {
            let future = self.event(center.t + r * u[0], center.x + r * u[1]);
            let past = self.event(center.t - r * u[0], center.x - r * u[1]);
            // Spatial partner of u in flat space swaps components.
            let w = [u[1], u[0]];
            let plus = self.event(center.t + r * w[0], center.x + r * w[1]);
            let minus = self.event(center.t - r * w[0], center.x - r * w[1]);
            return Ok(Neighborhood {
                center: *center,
                future,
                past,
                spatial_plus: plus,
                spatial_minus: minus,
                delta,
            });
        }
        let flow = |dir: f64| -> Result<Event> {
            self.geodesic_flow(center, [dir * u[0], dir * u[1]], r)
                .map(|(e, _)| e)
                .map_err(|e| match e {
                    GeometryError::OutsideDomain { .. } => GeometryError::ScaleTooCoarse { delta },
                    other => other,
                })
        };
        let future = flow(1.0)?;
        let past = flow(-1.0)?;
        let (tf, wf) = self.conformal(&future)?;
        let (tp, wp) = self.conformal(&past)?;
        // Right-going null ray down from the future endpoint meets the
        // right-going... the two rays bounding the +w side: from `future`
        // along t + w = const decreasing t, from `past` along t - w = const
        // increasing t. Intersection in the (t, w) plane is linear algebra.
        let w_plus = 0.5 * (wf + wp + tf - tp);
        let t_plus = 0.5 * (tf + tp + wf - wp);
        let w_minus = 0.5 * (wf + wp - (tf - tp));
        let t_minus = 0.5 * (tf + tp - (wf - wp));
        let tortoise = match &self.kind {
            ChartKind::StaticDiagonal { tortoise, .. } => tortoise,
            ChartKind::Minkowski => unreachable!(),
        };
        let (xlo, xhi) = match &self.kind {
            ChartKind::StaticDiagonal { lo, hi, .. } => (*lo, *hi),
            ChartKind::Minkowski => unreachable!(),
        };
        let wlo = 0.0f64.min(tortoise.forward(xlo));
        let whi = tortoise.forward(xhi).max(0.0);
        if w_plus > whi || w_minus < wlo {
            return Err(GeometryError::ScaleTooCoarse { delta });
        }
        let plus = self.event(t_plus, tortoise.inverse(w_plus));
        let minus = self.event(t_minus, tortoise.inverse(w_minus));
        Ok(Neighborhood {
            center: *center,
            future,
            past,
            spatial_plus: plus,
            spatial_minus: minus,
            delta,
        })
    }

    /// Maximum defect of the defining relations of a neighborhood: the
    /// timelike endpoints must sit at squared interval -delta from the
    /// center, and all four outer edges must be lightlike.
    pub fn neighborhood_consistency(&self, n: &Neighborhood) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for e in [&n.future, &n.past] {
            worst = worst.max((self.interval_squared(&n.center, e)? + n.delta).abs());
        }
        for (p, q) in [
            (&n.future, &n.spatial_plus),
            (&n.future, &n.spatial_minus),
            (&n.past, &n.spatial_plus),
            (&n.past, &n.spatial_minus),
        ] {
            worst = worst.max(self.interval_squared(p, q)?.abs());
        }
        Ok(worst)
    }

    /// Symmetry report for this chart's (static) coefficients.
    pub fn symmetry_report(&self, probe_xs: &[f64]) -> SymmetryReport {
        let probes: Vec<(f64, f64)> = probe_xs.iter().map(|&x| (0.0, x)).collect();
        match &self.kind {
            ChartKind::Minkowski => metric_symmetry_report(|_, _| -1.0, |_, _| 1.0, &probes),
            ChartKind::StaticDiagonal { a, b, .. } => {
                metric_symmetry_report(|_, x| -(a(x)), |_, x| b(x), &probes)
            }
        }
    }
}

/// Root find for geodesic shooting over p = tanh(initial rapidity).
/// The residual is evaluated on a ladder of increasingly relativistic
/// candidates until a sign change brackets the root, then bisected; this
/// keeps near-null shots (which are expensive and can blow up) out of the
/// search unless the geometry actually demands them. Returns the payload
/// (proper time or length) at the root.
fn shoot_root<F>(residual: &F, tol: f64) -> Option<f64>
where
    F: Fn(f64) -> Option<(f64, f64)>,
{
    const LADDER: [f64; 11] = [
        -0.999_999, -0.999, -0.99, -0.9, -0.5, 0.0, 0.5, 0.9, 0.99, 0.999, 0.999_999,
    ];
    // Walk outward from the center of the ladder so mild geometries never
    // touch the extreme candidates.
    let order = [5usize, 4, 6, 3, 7, 2, 8, 1, 9, 0, 10];
    let mut seen: Vec<(f64, f64)> = Vec::with_capacity(LADDER.len());
    let mut bracket: Option<((f64, f64), (f64, f64))> = None;
    for &i in &order {
        let p = LADDER[i];
        let Some((r, _)) = residual(p) else { continue };
        if let Some(&(q, rq)) = seen.iter().find(|(_, rq)| rq * r <= 0.0) {
            bracket = Some(if q < p { ((q, rq), (p, r)) } else { ((p, r), (q, rq)) });
            break;
        }
        seen.push((p, r));
    }
    let ((mut lo, mut rlo), (mut hi, _)) = bracket?;
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        let (rm, payload) = residual(mid)?;
        if rm.abs() <= tol || (hi - lo) < 1e-15 {
            return Some(payload);
        }
        if rlo * rm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            rlo = rm;
        }
    }
    residual(0.5 * (lo + hi)).map(|(_, payload)| payload)
}

type MapFn = Box<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

/// A registry of charts and the coordinate maps between them. Events are
/// geometrically equal when their images in a common chart coincide.
#[derive(Default)]
pub struct Atlas {
    charts: BTreeMap<ChartId, Arc<Chart>>,
    maps: BTreeMap<(ChartId, ChartId), MapFn>,
}

impl Atlas {
    pub fn new() -> Atlas {
        Atlas::default()
    }

    pub fn register_chart(&mut self, chart: &Arc<Chart>) {
        self.charts.insert(chart.id(), chart.clone());
    }

    /// Registers the forward and inverse coordinate maps between two
    /// charts. Both directions become available.
    pub fn register_map<F, G>(&mut self, from: &Arc<Chart>, to: &Arc<Chart>, forward: F, inverse: G)
    where
        F: Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
        G: Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
    {
        self.register_chart(from);
        self.register_chart(to);
        self.maps.insert((from.id(), to.id()), Box::new(forward));
        self.maps.insert((to.id(), from.id()), Box::new(inverse));
    }

    pub fn to_chart(&self, e: &Event, target: &Chart) -> Result<Event> {
        if e.chart == target.id() {
            return Ok(*e);
        }
        let map = self
            .maps
            .get(&(e.chart, target.id()))
            .ok_or(GeometryError::NoChartMap { from: e.chart, to: target.id() })?;
        let (t, x) = map(e.t, e.x);
        Ok(Event { chart: target.id(), t, x })
    }

    /// Pushes a tangent vector at `at` through the chart map into `target`
    /// components, via a central-difference Jacobian of the registered map.
    pub fn push_vector(&self, at: &Event, v: [f64; 2], target: &Chart) -> Result<[f64; 2]> {
        if at.chart == target.id() {
            return Ok(v);
        }
        let map = self
            .maps
            .get(&(at.chart, target.id()))
            .ok_or(GeometryError::NoChartMap { from: at.chart, to: target.id() })?;
        let ht = 1e-6 * (1.0 + at.t.abs());
        let hx = 1e-6 * (1.0 + at.x.abs());
        let (tp, xp) = map(at.t + ht, at.x);
        let (tm, xm) = map(at.t - ht, at.x);
        let j00 = (tp - tm) / (2.0 * ht);
        let j10 = (xp - xm) / (2.0 * ht);
        let (tp, xp) = map(at.t, at.x + hx);
        let (tm, xm) = map(at.t, at.x - hx);
        let j01 = (tp - tm) / (2.0 * hx);
        let j11 = (xp - xm) / (2.0 * hx);
        Ok([j00 * v[0] + j01 * v[1], j10 * v[0] + j11 * v[1]])
    }

    /// Two events are geometrically equal when they map to the same point:
    /// images in the first event's chart agree in both coordinates within
    /// `tol`.
    pub fn geometric_equal(&self, a: &Event, b: &Event, tol: f64) -> Result<bool> {
        let chart = self
            .charts
            .get(&a.chart)
            .ok_or(GeometryError::NoChartMap { from: a.chart, to: a.chart })?;
        let b_here = self.to_chart(b, chart)?;
        Ok((a.t - b_here.t).abs() <= tol && (a.x - b_here.x).abs() <= tol)
    }
}
