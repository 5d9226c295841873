//! Trans-coordinate states, histories, and collapse bookkeeping.
//!
//! A state tuple assigns one event to each particle, pairwise spacelike,
//! so no chart is privileged: any observer may read the tuple as "now".
//! Tuples of the same particles are partially ordered by the successor
//! relation (every particle moved into its own closed future cone), which
//! replaces the total time-order a single chart would impose.
//!
//! A history records worldline nodes and collapse events. Collapse
//! re-tags the region its comparator selects: the closed past cone of the
//! trigger (the backward-cone scheme), or everything on or before a plane
//! of some velocity (the planar scheme kept for comparison). The loop
//! check then treats the trigger as influencing the complementary region;
//! backward-cone influence always composes into a directed acyclic graph,
//! while planar influence admits cycles exactly when two triggers are
//! spacelike and read through straddling planes.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::geometry::{beta_to_rapidity, CausalClass, Chart, Event, GeometryError, TimeSide};
use crate::numeric;
use crate::partition::LocalGrid;
use crate::photon::{
    doppler_ratio, grid_relative_kinematics, EmissionWeights, PhotonError, PhotonPhaseField,
    RayDirection,
};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParticleId(pub String);

impl From<&str> for ParticleId {
    fn from(s: &str) -> ParticleId {
        ParticleId(s.to_string())
    }
}

impl fmt::Display for ParticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("not-spacelike: particles {a} and {b} are {class:?}-separated in the tuple")]
    NotSpacelike { a: ParticleId, b: ParticleId, class: CausalClass },
    #[error("bad-amplitudes: squared magnitudes sum to {sum}, not one")]
    BadAmplitudes { sum: f64 },
    #[error("different-particles: the tuples do not describe the same particle set")]
    DifferentParticles,
    #[error("unknown-particle: {0} has no world line in the history")]
    UnknownParticle(ParticleId),
    #[error("trigger-not-on-world-line: no node of {particle} sits at (t = {t}, x = {x})")]
    TriggerNotOnWorldLine { particle: ParticleId, t: f64, x: f64 },
    #[error("not-causal: world line step from (t = {t0}) to (t = {t1}) leaves the closed future cone")]
    NotCausal { t0: f64, t1: f64 },
    #[error("empty-world-line")]
    EmptyWorldLine,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Photon(#[from] PhotonError),
    #[error(transparent)]
    Partition(#[from] crate::partition::PartitionError),
}

type Result<T> = std::result::Result<T, StateError>;

/// One labeled branch amplitude attached to a state tuple.
#[derive(Debug, Clone)]
pub struct AmplitudeTag {
    pub label: String,
    pub amplitude: C64,
}

/// A pairwise-spacelike assignment of events to particles, optionally
/// carrying normalized branch amplitudes.
#[derive(Debug, Clone)]
pub struct StateTuple {
    chart: Arc<Chart>,
    entries: BTreeMap<ParticleId, Event>,
    amplitudes: Option<Vec<AmplitudeTag>>,
}

impl StateTuple {
    pub fn new(chart: Arc<Chart>, entries: Vec<(ParticleId, Event)>) -> Result<StateTuple> {
        let list: Vec<_> = entries.iter().collect();
        for i in 0..list.len() {
            for k in i + 1..list.len() {
                let class = chart.classify(&list[i].1, &list[k].1)?;
                if class != CausalClass::Spacelike {
                    return Err(StateError::NotSpacelike {
                        a: list[i].0.clone(),
                        b: list[k].0.clone(),
                        class,
                    });
                }
            }
        }
        Ok(StateTuple { chart, entries: entries.into_iter().collect(), amplitudes: None })
    }

    /// Attaches branch amplitudes; their squared magnitudes must sum to
    /// one.
    pub fn with_amplitudes(mut self, tags: Vec<AmplitudeTag>) -> Result<StateTuple> {
        let sum: f64 = tags.iter().map(|t| t.amplitude.norm_sqr()).sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(StateError::BadAmplitudes { sum });
        }
        self.amplitudes = Some(tags);
        Ok(self)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn event_of(&self, id: &ParticleId) -> Option<&Event> {
        self.entries.get(id)
    }

    pub fn particles(&self) -> impl Iterator<Item = &ParticleId> {
        self.entries.keys()
    }

    pub fn amplitudes(&self) -> Option<&[AmplitudeTag]> {
        self.amplitudes.as_deref()
    }

    /// True when every particle of `self` sits in the closed future cone
    /// of its event in `earlier`. Reflexive; two tuples can also be
    /// incomparable in both directions.
    pub fn is_successor_of(&self, earlier: &StateTuple) -> Result<bool> {
        if self.entries.len() != earlier.entries.len()
            || !self.entries.keys().eq(earlier.entries.keys())
        {
            return Err(StateError::DifferentParticles);
        }
        for (id, e) in &self.entries {
            let from = &earlier.entries[id];
            if !self.chart.in_cone(from, e, TimeSide::Future)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
pub struct HistoryNode {
    pub particle: ParticleId,
    pub event: Event,
    pub tag: String,
    pub original_tag: String,
}

/// Region rule of a collapse: which nodes a trigger re-tags, and dually
/// which nodes it counts as influencing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Comparator {
    /// Re-tags the closed past cone of the trigger; influences the closed
    /// future cone.
    BackwardCone,
    /// Re-tags everything on or before the plane of the given velocity
    /// through the trigger; influences everything on or after it.
    Plane { beta: f64 },
}

#[derive(Debug, Clone)]
pub struct CollapseRecord {
    pub trigger: NodeId,
    pub new_tag: String,
    pub comparator: Comparator,
    pub retagged: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct LoopReport {
    pub acyclic: bool,
    /// Edges of one directed cycle when there is one, in walk order.
    pub witness: Vec<(NodeId, NodeId)>,
}

/// Worldline nodes plus collapse records over one chart.
pub struct History {
    chart: Arc<Chart>,
    nodes: Vec<HistoryNode>,
    lines: Vec<Vec<usize>>,
    records: Vec<CollapseRecord>,
}

impl History {
    pub fn new(chart: Arc<Chart>) -> History {
        History { chart, nodes: Vec::new(), lines: Vec::new(), records: Vec::new() }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn nodes(&self) -> &[HistoryNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &HistoryNode {
        &self.nodes[id.0]
    }

    pub fn records(&self) -> &[CollapseRecord] {
        &self.records
    }

    /// Adds a worldline as a chain of nodes; consecutive events must stay
    /// within each other's closed future cones.
    pub fn add_worldline(
        &mut self,
        particle: ParticleId,
        events: &[Event],
        tag: &str,
    ) -> Result<Vec<NodeId>> {
        if events.is_empty() {
            return Err(StateError::EmptyWorldLine);
        }
        for w in events.windows(2) {
            if !self.chart.in_cone(&w[0], &w[1], TimeSide::Future)? {
                return Err(StateError::NotCausal { t0: w[0].t, t1: w[1].t });
            }
        }
        let mut ids = Vec::with_capacity(events.len());
        let mut line = Vec::with_capacity(events.len());
        for e in events {
            let id = self.nodes.len();
            self.nodes.push(HistoryNode {
                particle: particle.clone(),
                event: *e,
                tag: tag.to_string(),
                original_tag: tag.to_string(),
            });
            ids.push(NodeId(id));
            line.push(id);
        }
        self.lines.push(line);
        Ok(ids)
    }

    fn find_trigger(&self, particle: &ParticleId, at: &Event) -> Result<usize> {
        let scale = 1.0_f64.max(at.t.abs()).max(at.x.abs());
        let tol = 1e-9 * scale;
        let mut known = false;
        for (i, n) in self.nodes.iter().enumerate() {
            if &n.particle != particle {
                continue;
            }
            known = true;
            if (n.event.t - at.t).abs() <= tol && (n.event.x - at.x).abs() <= tol {
                return Ok(i);
            }
        }
        if known {
            Err(StateError::TriggerNotOnWorldLine { particle: particle.clone(), t: at.t, x: at.x })
        } else {
            Err(StateError::UnknownParticle(particle.clone()))
        }
    }

    fn in_retag_region(&self, comparator: Comparator, trigger: &Event, e: &Event) -> Result<bool> {
        Ok(match comparator {
            Comparator::BackwardCone => self.chart.in_cone(trigger, e, TimeSide::Past)?,
            Comparator::Plane { beta } => (e.t - trigger.t) <= beta * (e.x - trigger.x),
        })
    }

    fn in_influence_region(
        &self,
        comparator: Comparator,
        trigger: &Event,
        e: &Event,
    ) -> Result<bool> {
        Ok(match comparator {
            Comparator::BackwardCone => self.chart.in_cone(trigger, e, TimeSide::Future)?,
            Comparator::Plane { beta } => (e.t - trigger.t) >= beta * (e.x - trigger.x),
        })
    }

    /// Applies a collapse triggered at an existing node of `particle`'s
    /// worldline: every node in the comparator's re-tag region (trigger
    /// included) takes the new tag.
    pub fn apply_collapse(
        &mut self,
        particle: &ParticleId,
        at: &Event,
        new_tag: &str,
        comparator: Comparator,
    ) -> Result<&CollapseRecord> {
        let trigger = self.find_trigger(particle, at)?;
        let trigger_event = self.nodes[trigger].event;
        let mut retagged = Vec::new();
        for i in 0..self.nodes.len() {
            if self.in_retag_region(comparator, &trigger_event, &self.nodes[i].event)? {
                self.nodes[i].tag = new_tag.to_string();
                retagged.push(NodeId(i));
            }
        }
        self.records.push(CollapseRecord {
            trigger: NodeId(trigger),
            new_tag: new_tag.to_string(),
            comparator,
            retagged,
        });
        Ok(self.records.last().unwrap())
    }

    /// Influence graph: worldline succession plus, for every collapse
    /// record, edges from the trigger into its influence region.
    fn influence_adjacency(&self) -> Result<Vec<Vec<usize>>> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for line in &self.lines {
            for w in line.windows(2) {
                adj[w[0]].push(w[1]);
            }
        }
        for rec in &self.records {
            let trig = rec.trigger.0;
            let te = self.nodes[trig].event;
            for i in 0..n {
                if i == trig {
                    continue;
                }
                if self.in_influence_region(rec.comparator, &te, &self.nodes[i].event)? {
                    adj[trig].push(i);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(adj)
    }

    /// Flat edge list of the influence graph, for inspection and export.
    pub fn influence_edges(&self) -> Result<Vec<(NodeId, NodeId)>> {
        let adj = self.influence_adjacency()?;
        let mut edges = Vec::new();
        for (u, list) in adj.iter().enumerate() {
            for &v in list {
                edges.push((NodeId(u), NodeId(v)));
            }
        }
        Ok(edges)
    }

    /// Searches the influence graph for a directed cycle. The walk order
    /// is deterministic, so the same history always yields the same
    /// witness.
    pub fn causal_loop_check(&self) -> Result<LoopReport> {
        let adj = self.influence_adjacency()?;
        let n = adj.len();
        // 0 = unvisited, 1 = on stack, 2 = done.
        let mut color = vec![0u8; n];
        let mut parent = vec![usize::MAX; n];
        for start in 0..n {
            if color[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            color[start] = 1;
            while let Some(&mut (u, ref mut next)) = stack.last_mut() {
                if *next < adj[u].len() {
                    let v = adj[u][*next];
                    *next += 1;
                    match color[v] {
                        0 => {
                            color[v] = 1;
                            parent[v] = u;
                            stack.push((v, 0));
                        }
                        1 => {
                            // Back edge: unwind the cycle v -> ... -> u -> v.
                            let mut path = vec![u];
                            let mut w = u;
                            while w != v {
                                w = parent[w];
                                path.push(w);
                            }
                            path.reverse();
                            let mut witness: Vec<(NodeId, NodeId)> = path
                                .windows(2)
                                .map(|p| (NodeId(p[0]), NodeId(p[1])))
                                .collect();
                            witness.push((NodeId(u), NodeId(v)));
                            return Ok(LoopReport { acyclic: false, witness });
                        }
                        _ => {}
                    }
                } else {
                    color[u] = 2;
                    stack.pop();
                }
            }
        }
        Ok(LoopReport { acyclic: true, witness: Vec::new() })
    }
}

/// Straddling plane velocities for two trigger events: both planes tilt
/// toward the connecting slope, one from each side, whenever the events
/// are spacelike; otherwise both fall back to rest planes.
pub fn straddling_planes(a: &Event, b: &Event) -> (f64, f64) {
    let dx = b.x - a.x;
    let dt = b.t - a.t;
    if dx == 0.0 {
        return (0.0, 0.0);
    }
    let slope = dt / dx;
    if slope.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    ((slope - 1.0) / 2.0, (slope + 1.0) / 2.0)
}

/// Which object the emission record is attached to in the history tags.
/// Attachment is pure bookkeeping: trial records never depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    Atom,
    Photon,
    Detector,
}

impl Attachment {
    fn label(self) -> &'static str {
        match self {
            Attachment::Atom => "atom",
            Attachment::Photon => "photon",
            Attachment::Detector => "detector",
        }
    }
}

/// Specification of the decay-and-detection scenario: an unstable atom
/// with decay rate `gamma` (per unit of its own proper time), a single
/// photon of frequency `photon_omega` in the atom's frame emitted at the
/// jump, and a detector that clicks after an additional exponential
/// waiting time of the same rate in its own proper time once the photon
/// arrives.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub gamma: f64,
    pub atom_beta: f64,
    pub detector_x0: f64,
    pub detector_beta: f64,
    pub photon_omega: f64,
    pub emission: EmissionWeights,
    pub attachment: Attachment,
    pub trials: u32,
    pub master_seed: u64,
    pub t_max: f64,
    pub checkpoint_times: Vec<f64>,
}

/// Everything recorded about one trial. All fields are chart quantities
/// except the proper times, which belong to the named particle.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u32,
    /// Atom proper time of the jump (drawn even when it falls past the
    /// horizon).
    pub jump_proper_time: f64,
    pub emitted: bool,
    pub emission_event: Option<(f64, f64)>,
    pub direction: Option<RayDirection>,
    /// Photon frequency in the emitting atom's frame.
    pub e_emit: f64,
    /// Photon frequency in the chart rest frame.
    pub chart_omega: Option<f64>,
    pub arrival_t: Option<f64>,
    pub detected: bool,
    pub detection_event: Option<(f64, f64)>,
    /// Photon energy in the detector's frame at the click.
    pub e_detect: Option<f64>,
    /// Emission-to-detection energy bookkeeping closed to within 1e-12.
    pub energy_consistent: bool,
    pub history_acyclic: bool,
}

#[derive(Debug)]
pub struct ScenarioResult {
    pub records: Vec<TrialRecord>,
    pub mean_jump_proper_time: f64,
    pub ks_statistic: f64,
    pub detected_count: usize,
    pub emitted_count: usize,
    /// Pairwise-spacelike and amplitude checks passed for every
    /// checkpoint and final tuple built across all trials.
    pub tuples_valid: bool,
    /// Checkpoint and horizon tuples of the first few trials.
    pub exemplar_tuples: Vec<StateTuple>,
    pub all_histories_acyclic: bool,
}

/// Kolmogorov-Smirnov distance between samples and a reference cdf.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max((c - (i as f64 + 1.0) / n).abs());
    }
    d
}

fn gamma_factor(beta: f64) -> f64 {
    (1.0 - beta * beta).sqrt().recip()
}

pub fn run_decay_detection(chart: &Arc<Chart>, spec: &ScenarioSpec) -> Result<ScenarioResult> {
    assert!(spec.gamma > 0.0 && spec.trials > 0 && spec.t_max > 0.0);
    assert!(spec.atom_beta.abs() < 1.0 && spec.detector_beta.abs() < 1.0);
    let g_atom = gamma_factor(spec.atom_beta);
    let g_det = gamma_factor(spec.detector_beta);
    let atom_id = ParticleId::from("atom");
    let det_id = ParticleId::from("detector");
    let phot_id = ParticleId::from("photon");

    let atom_pos = |t: f64| spec.atom_beta * t;
    let det_pos = |t: f64| spec.detector_x0 + spec.detector_beta * t;

    let mut records = Vec::with_capacity(spec.trials as usize);
    let mut jumps = Vec::with_capacity(spec.trials as usize);
    let mut tuples_valid = true;
    let mut exemplars = Vec::new();
    let mut all_acyclic = true;
    let mut detected_count = 0;
    let mut emitted_count = 0;

    for trial in 0..spec.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(numeric::mix_seed(spec.master_seed, trial as u64));
        // Draw order is fixed: jump time, direction, detection delay.
        let u1: f64 = rng.gen();
        let tau_jump = -(1.0 - u1).ln() / spec.gamma;
        jumps.push(tau_jump);
        let t_emit = tau_jump * g_atom;
        let emitted = t_emit <= spec.t_max;

        let mut rec = TrialRecord {
            trial,
            jump_proper_time: tau_jump,
            emitted,
            emission_event: None,
            direction: None,
            e_emit: spec.photon_omega,
            chart_omega: None,
            arrival_t: None,
            detected: false,
            detection_event: None,
            e_detect: None,
            energy_consistent: true,
            history_acyclic: true,
        };

        let mut photon_path: Option<(f64, f64, f64, RayDirection)> = None; // (t_e, x_e, t_gone, dir)
        if emitted {
            emitted_count += 1;
            let x_emit = atom_pos(t_emit);
            rec.emission_event = Some((t_emit, x_emit));
            let u2: f64 = rng.gen();
            let dir = spec.emission.sample(u2);
            rec.direction = Some(dir);
            let s = dir.sign();

            let e_emit_event = chart.event(t_emit, x_emit);
            let atom_grid = LocalGrid::boosted(chart, &e_emit_event, beta_to_rapidity(spec.atom_beta))?;
            let rest_grid = LocalGrid::chart_rest(chart, &e_emit_event)?;
            let omega_chart =
                spec.photon_omega * doppler_ratio(chart, &atom_grid, &rest_grid, dir)?;
            rec.chart_omega = Some(omega_chart);

            // Crossing of the ray with the detector line.
            let denom = s - spec.detector_beta;
            let t_hit = if denom.abs() < 1e-12 {
                f64::INFINITY
            } else {
                (spec.detector_x0 - x_emit + s * t_emit) / denom
            };
            let mut t_gone = spec.t_max;
            if t_hit.is_finite() && t_hit > t_emit {
                rec.arrival_t = Some(t_hit);
                t_gone = t_hit.min(spec.t_max);
                if t_hit <= spec.t_max {
                    let u3: f64 = rng.gen();
                    let tau_wait = -(1.0 - u3).ln() / spec.gamma;
                    let t_click = t_hit + tau_wait * g_det;
                    if t_click <= spec.t_max {
                        rec.detected = true;
                        detected_count += 1;
                        let click_event = chart.event(t_click, det_pos(t_click));
                        rec.detection_event = Some((click_event.t, click_event.x));
                        // Energy read by the detector grid at the click.
                        let xi_band = {
                            let xi = x_emit - s * t_emit;
                            (xi - 1e-6, xi + 1e-6)
                        };
                        let field = PhotonPhaseField::new(
                            chart.clone(),
                            dir,
                            vec![(omega_chart, 0.0)],
                            xi_band,
                        )?;
                        let det_grid = LocalGrid::boosted(
                            chart,
                            &chart.event(t_hit, det_pos(t_hit)),
                            beta_to_rapidity(spec.detector_beta),
                        )?;
                        let arrival_event = chart.event(t_hit, det_pos(t_hit));
                        let kin = grid_relative_kinematics(&field, &det_grid, &arrival_event)?;
                        rec.e_detect = Some(kin.energy);
                        let expect =
                            spec.photon_omega * doppler_ratio(chart, &atom_grid, &det_grid, dir)?;
                        rec.energy_consistent =
                            (kin.energy - expect).abs() <= 1e-12 * expect.abs().max(1.0);
                    }
                }
            }
            photon_path = Some((t_emit, x_emit, t_gone, dir));
        }

        // Checkpoint tuples with branch amplitudes, plus the horizon tuple.
        let mut trial_tuples = Vec::new();
        for &tc in spec.checkpoint_times.iter().chain(std::iter::once(&spec.t_max)) {
            if tc <= 0.0 || tc > spec.t_max {
                continue;
            }
            let mut entries = vec![
                (atom_id.clone(), chart.event(tc, atom_pos(tc))),
                (det_id.clone(), chart.event(tc, det_pos(tc))),
            ];
            if let Some((t_e, x_e, t_gone, dir)) = photon_path {
                if tc >= t_e && tc < t_gone {
                    let pe = chart.event(tc, x_e + dir.sign() * (tc - t_e));
                    // Just after emission the photon still sits inside the
                    // lightlike resolution band of the atom; it becomes a
                    // separate tuple entry once pairwise spacelike.
                    let mut resolvable = true;
                    for (_, e) in &entries {
                        resolvable &= chart.classify(e, &pe)? == CausalClass::Spacelike;
                    }
                    if resolvable {
                        entries.push((phot_id.clone(), pe));
                    }
                }
            }
            let tuple = StateTuple::new(chart.clone(), entries).and_then(|t| {
                if emitted && tc >= t_emit {
                    t.with_amplitudes(vec![AmplitudeTag {
                        label: "decayed".into(),
                        amplitude: C64::new(1.0, 0.0),
                    }])
                } else {
                    let survival = (-spec.gamma * tc / g_atom).exp();
                    t.with_amplitudes(vec![
                        AmplitudeTag {
                            label: "undecayed".into(),
                            amplitude: C64::new(survival.sqrt(), 0.0),
                        },
                        AmplitudeTag {
                            label: "decayed".into(),
                            amplitude: C64::new((1.0 - survival).sqrt(), 0.0),
                        },
                    ])
                }
            });
            match tuple {
                Ok(t) => trial_tuples.push(t),
                Err(_) => tuples_valid = false,
            }
        }

        // History with the collapse applied at the click.
        let mut history = History::new(chart.clone());
        let pre_tag = format!("superposed[{}]", spec.attachment.label());
        let mut atom_events = vec![chart.event(0.0, atom_pos(0.0))];
        if emitted {
            atom_events.push(chart.event(t_emit, atom_pos(t_emit)));
        }
        atom_events.push(chart.event(spec.t_max, atom_pos(spec.t_max)));
        history.add_worldline(atom_id.clone(), &atom_events, &pre_tag)?;
        let mut det_events = vec![chart.event(0.0, det_pos(0.0))];
        if let Some(t_hit) = rec.arrival_t {
            if t_hit <= spec.t_max {
                det_events.push(chart.event(t_hit, det_pos(t_hit)));
            }
        }
        if let Some((tc, xc)) = rec.detection_event {
            det_events.push(chart.event(tc, xc));
        }
        det_events.push(chart.event(spec.t_max, det_pos(spec.t_max)));
        det_events.dedup_by(|a, b| (a.t - b.t).abs() < 1e-12);
        history.add_worldline(det_id.clone(), &det_events, &pre_tag)?;
        if let Some((t_e, x_e, t_gone, dir)) = photon_path {
            let events = [
                chart.event(t_e, x_e),
                chart.event(t_gone, x_e + dir.sign() * (t_gone - t_e)),
            ];
            if events[1].t > events[0].t {
                history.add_worldline(phot_id.clone(), &events, &pre_tag)?;
            }
        }
        if let Some((tc, xc)) = rec.detection_event {
            history.apply_collapse(
                &det_id,
                &chart.event(tc, xc),
                "clicked",
                Comparator::BackwardCone,
            )?;
        }
        let report = history.causal_loop_check()?;
        rec.history_acyclic = report.acyclic;
        all_acyclic &= report.acyclic;

        if trial < 4 {
            exemplars.extend(trial_tuples);
        }
        records.push(rec);
    }

    let mean = jumps.iter().sum::<f64>() / jumps.len() as f64;
    let rate = spec.gamma;
    let ks = ks_statistic(&jumps, |x| 1.0 - (-rate * x).exp());
    Ok(ScenarioResult {
        records,
        mean_jump_proper_time: mean,
        ks_statistic: ks,
        detected_count,
        emitted_count,
        tuples_valid,
        exemplar_tuples: exemplars,
        all_histories_acyclic: all_acyclic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mink() -> Arc<Chart> {
        Chart::minkowski()
    }

    fn tuple_at(chart: &Arc<Chart>, pts: &[(f64, f64)]) -> StateTuple {
        let entries = pts
            .iter()
            .enumerate()
            .map(|(i, &(t, x))| (ParticleId(format!("p{i}")), chart.event(t, x)))
            .collect();
        StateTuple::new(chart.clone(), entries).unwrap()
    }

    #[test]
    fn tuples_must_be_pairwise_spacelike() {
        let c = mink();
        assert!(StateTuple::new(
            c.clone(),
            vec![
                (ParticleId::from("a"), c.event(0.0, 0.0)),
                (ParticleId::from("b"), c.event(1.0, 0.2)),
            ],
        )
        .is_err());
        assert!(StateTuple::new(
            c.clone(),
            vec![
                (ParticleId::from("a"), c.event(0.0, 0.0)),
                (ParticleId::from("b"), c.event(0.2, 1.0)),
            ],
        )
        .is_ok());
    }

    #[test]
    fn amplitude_tags_must_be_normalized() {
        let c = mink();
        let t = tuple_at(&c, &[(0.0, 0.0), (0.0, 5.0)]);
        assert!(matches!(
            t.clone().with_amplitudes(vec![
                AmplitudeTag { label: "x".into(), amplitude: C64::new(0.8, 0.0) },
                AmplitudeTag { label: "y".into(), amplitude: C64::new(0.7, 0.0) },
            ]),
            Err(StateError::BadAmplitudes { .. })
        ));
        assert!(t
            .with_amplitudes(vec![
                AmplitudeTag { label: "x".into(), amplitude: C64::new(0.6, 0.0) },
                AmplitudeTag { label: "y".into(), amplitude: C64::new(0.0, 0.8) },
            ])
            .is_ok());
    }

    #[test]
    fn successor_examples() {
        let c = mink();
        let a = tuple_at(&c, &[(0.0, 0.0), (0.0, 10.0)]);
        let b = tuple_at(&c, &[(2.0, 1.0), (1.0, 10.5)]);
        assert!(b.is_successor_of(&a).unwrap());
        assert!(!a.is_successor_of(&b).unwrap());
        assert!(a.is_successor_of(&a).unwrap());
        // One particle ahead, the other behind: incomparable.
        let m = tuple_at(&c, &[(2.0, 1.0), (-1.0, 10.5)]);
        assert!(!m.is_successor_of(&a).unwrap());
        assert!(!a.is_successor_of(&m).unwrap());
        // Different particle sets cannot be compared.
        let entries = vec![(ParticleId::from("z"), c.event(0.0, 0.0))];
        let other = StateTuple::new(c.clone(), entries).unwrap();
        assert!(matches!(
            other.is_successor_of(&a),
            Err(StateError::DifferentParticles)
        ));
    }

    #[test]
    fn collapse_retags_the_closed_past_cone() {
        let c = mink();
        let mut h = History::new(c.clone());
        let a_nodes = h
            .add_worldline(
                ParticleId::from("a"),
                &[c.event(0.0, 0.0), c.event(1.0, 0.0), c.event(2.0, 0.0)],
                "plain",
            )
            .unwrap();
        h.add_worldline(
            ParticleId::from("b"),
            &[c.event(0.0, 5.0), c.event(2.0, 5.0)],
            "plain",
        )
        .unwrap();
        let rec = h
            .apply_collapse(
                &ParticleId::from("a"),
                &c.event(1.0, 0.0),
                "seen",
                Comparator::BackwardCone,
            )
            .unwrap();
        // The trigger and its past on the same line re-tag; b's nodes are
        // spacelike to it and keep their tag.
        assert_eq!(rec.retagged, vec![a_nodes[0], a_nodes[1]]);
        assert_eq!(h.node(a_nodes[0]).tag, "seen");
        assert_eq!(h.node(a_nodes[1]).tag, "seen");
        assert_eq!(h.node(a_nodes[2]).tag, "plain");
        assert_eq!(h.node(a_nodes[0]).original_tag, "plain");
        for n in h.nodes().iter().filter(|n| n.particle == ParticleId::from("b")) {
            assert_eq!(n.tag, "plain");
        }
        assert!(h.causal_loop_check().unwrap().acyclic);
    }

    #[test]
    fn collapse_trigger_must_exist() {
        let c = mink();
        let mut h = History::new(c.clone());
        h.add_worldline(ParticleId::from("a"), &[c.event(0.0, 0.0)], "plain")
            .unwrap();
        assert!(matches!(
            h.apply_collapse(
                &ParticleId::from("a"),
                &c.event(0.5, 0.0),
                "seen",
                Comparator::BackwardCone
            ),
            Err(StateError::TriggerNotOnWorldLine { .. })
        ));
        assert!(matches!(
            h.apply_collapse(
                &ParticleId::from("ghost"),
                &c.event(0.0, 0.0),
                "seen",
                Comparator::BackwardCone
            ),
            Err(StateError::UnknownParticle(_))
        ));
    }

    #[test]
    fn worldlines_must_be_causal() {
        let c = mink();
        let mut h = History::new(c.clone());
        assert!(matches!(
            h.add_worldline(
                ParticleId::from("a"),
                &[c.event(0.0, 0.0), c.event(0.5, 3.0)],
                "plain"
            ),
            Err(StateError::NotCausal { .. })
        ));
    }

    #[test]
    fn straddling_planes_bracket_spacelike_pairs() {
        let c = mink();
        let a = c.event(0.5, 0.0);
        let b = c.event(0.0, 5.0);
        let (b1, b2) = straddling_planes(&a, &b);
        let slope = (b.t - a.t) / (b.x - a.x);
        assert!(b1 < slope && slope < b2);
        assert!(b1.abs() < 1.0 && b2.abs() < 1.0);
        // Timelike pairs fall back to rest planes.
        let tl = c.event(6.0, 1.0);
        assert_eq!(straddling_planes(&a, &tl), (0.0, 0.0));
    }

    fn two_trigger_planar_history(c: &Arc<Chart>, t1: f64, t2: f64, d: f64) -> History {
        let mut h = History::new(c.clone());
        h.add_worldline(
            ParticleId::from("left"),
            &[c.event(-8.0, 0.0), c.event(t1, 0.0), c.event(8.0 + t1.abs(), 0.0)],
            "plain",
        )
        .unwrap();
        h.add_worldline(
            ParticleId::from("right"),
            &[c.event(-8.0, d), c.event(t2, d), c.event(8.0 + t2.abs(), d)],
            "plain",
        )
        .unwrap();
        let e1 = c.event(t1, 0.0);
        let e2 = c.event(t2, d);
        let (b1, b2) = straddling_planes(&e1, &e2);
        h.apply_collapse(&ParticleId::from("left"), &e1, "one", Comparator::Plane { beta: b1 })
            .unwrap();
        h.apply_collapse(&ParticleId::from("right"), &e2, "two", Comparator::Plane { beta: b2 })
            .unwrap();
        h
    }

    #[test]
    fn planar_collapse_loops_exactly_for_spacelike_triggers() {
        let c = mink();
        // Spacelike: |dt| = 1 < d = 5.
        let h = two_trigger_planar_history(&c, 0.0, 1.0, 5.0);
        let rep = h.causal_loop_check().unwrap();
        assert!(!rep.acyclic);
        assert!(!rep.witness.is_empty());
        // Timelike: |dt| = 7 > d = 5: no loop.
        let h = two_trigger_planar_history(&c, 0.0, 7.0, 5.0);
        assert!(h.causal_loop_check().unwrap().acyclic);
    }

    #[test]
    fn scenario_statistics_and_doppler() {
        let c = mink();
        let spec = ScenarioSpec {
            gamma: 1.0,
            atom_beta: 0.0,
            detector_x0: 5.0,
            detector_beta: 0.6,
            photon_omega: 2.0,
            emission: EmissionWeights::isotropic(),
            attachment: Attachment::Atom,
            trials: 2000,
            master_seed: 7,
            t_max: 40.0,
            checkpoint_times: vec![0.25, 2.0],
        };
        let out = run_decay_detection(&c, &spec).unwrap();
        assert_eq!(out.records.len(), 2000);
        assert!((out.mean_jump_proper_time - 1.0).abs() < 0.1, "mean {}", out.mean_jump_proper_time);
        let crit = 1.628 / (2000.0_f64).sqrt();
        assert!(out.ks_statistic < crit, "ks {} vs {crit}", out.ks_statistic);
        assert!(out.detected_count > 0);
        assert!(out.tuples_valid);
        assert!(out.all_histories_acyclic);
        for r in &out.records {
            assert!(r.energy_consistent, "trial {}", r.trial);
            if let Some(e) = r.e_detect {
                // Atom at rest, detector receding at 0.6: every click reads
                // half the emitted frequency.
                assert!((e - 1.0).abs() < 1e-12, "trial {}: {e}", r.trial);
                assert_eq!(r.direction, Some(RayDirection::Rightward));
                let (t, x) = r.detection_event.unwrap();
                assert!((x - (5.0 + 0.6 * t)).abs() < 1e-9);
            }
        }
        // Emission times follow the drawn proper times.
        for r in &out.records {
            if let Some((t, x)) = r.emission_event {
                assert!((t - r.jump_proper_time).abs() < 1e-12);
                assert!(x.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attachment_is_pure_bookkeeping() {
        let c = mink();
        let base = ScenarioSpec {
            gamma: 1.0,
            atom_beta: 0.2,
            detector_x0: 4.0,
            detector_beta: -0.3,
            photon_omega: 1.5,
            emission: EmissionWeights::new(0.7, 0.3).unwrap(),
            attachment: Attachment::Atom,
            trials: 200,
            master_seed: 99,
            t_max: 25.0,
            checkpoint_times: vec![1.0],
        };
        let a = run_decay_detection(&c, &base).unwrap();
        let mut spec_b = base.clone();
        spec_b.attachment = Attachment::Detector;
        let b = run_decay_detection(&c, &spec_b).unwrap();
        let mut spec_c = base;
        spec_c.attachment = Attachment::Photon;
        let cc = run_decay_detection(&c, &spec_c).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records, cc.records);
    }

    #[test]
    fn ks_statistic_detects_mismatch() {
        let good: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        let d = ks_statistic(&good, |x| x.clamp(0.0, 1.0));
        assert!(d < 0.01, "{d}");
        let d = ks_statistic(&good, |x| (x * x).clamp(0.0, 1.0));
        assert!(d > 0.2, "{d}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn successor_order_properties(
            ts in prop::collection::vec(-1.0..1.0f64, 3),
            jit in prop::collection::vec(-1.0..1.0f64, 3),
            dx1 in prop::collection::vec(-1.0..1.0f64, 3),
            pad1 in prop::collection::vec(0.01..2.0f64, 3),
            dx2 in prop::collection::vec(-1.0..1.0f64, 3),
            pad2 in prop::collection::vec(0.01..2.0f64, 3),
        ) {
            let c = mink();
            // Base tuple: well-separated positions keep everything
            // pairwise spacelike.
            let pts: Vec<(f64, f64)> = (0..3)
                .map(|i| (ts[i], 20.0 * i as f64 + jit[i]))
                .collect();
            let t0 = tuple_at(&c, &pts);
            let step = |src: &Vec<(f64, f64)>, dx: &Vec<f64>, pad: &Vec<f64>| -> Vec<(f64, f64)> {
                (0..3)
                    .map(|i| (src[i].0 + dx[i].abs() + pad[i], src[i].1 + dx[i]))
                    .collect()
            };
            let pts1 = step(&pts, &dx1, &pad1);
            let pts2 = step(&pts1, &dx2, &pad2);
            let t1 = tuple_at(&c, &pts1);
            let t2 = tuple_at(&c, &pts2);
            // Reflexive.
            prop_assert!(t0.is_successor_of(&t0).unwrap());
            // Constructed chains are successors, and transitively so.
            prop_assert!(t1.is_successor_of(&t0).unwrap());
            prop_assert!(t2.is_successor_of(&t1).unwrap());
            prop_assert!(t2.is_successor_of(&t0).unwrap());
            // Strict steps are antisymmetric.
            prop_assert!(!t0.is_successor_of(&t1).unwrap());
            // Pushing one particle back makes the pair incomparable.
            let mut mixed = pts1.clone();
            mixed[0] = (pts[0].0 - pad1[0], pts[0].1);
            let tm = tuple_at(&c, &mixed);
            prop_assert!(!tm.is_successor_of(&t0).unwrap());
            prop_assert!(!t0.is_successor_of(&tm).unwrap());
        }

        #[test]
        fn backward_cone_collapse_never_loops(
            betas in prop::collection::vec(-0.8..0.8f64, 3),
            jitter in prop::collection::vec(-1.0..1.0f64, 3),
            trig_line in 0usize..3,
            trig_node in 1usize..4,
            trig_line2 in 0usize..3,
            trig_node2 in 1usize..4,
        ) {
            let c = mink();
            let mut h = History::new(c.clone());
            let mut ids = Vec::new();
            for i in 0..3 {
                let x0 = 15.0 * i as f64 + jitter[i];
                let events: Vec<Event> = (0..4)
                    .map(|k| c.event(k as f64, x0 + betas[i] * k as f64))
                    .collect();
                ids.push(h.add_worldline(ParticleId(format!("w{i}")), &events, "plain").unwrap());
            }
            let t1 = h.node(ids[trig_line][trig_node]).clone();
            h.apply_collapse(&t1.particle, &t1.event, "c1", Comparator::BackwardCone).unwrap();
            let t2 = h.node(ids[trig_line2][trig_node2]).clone();
            h.apply_collapse(&t2.particle, &t2.event, "c2", Comparator::BackwardCone).unwrap();
            let rep = h.causal_loop_check().unwrap();
            prop_assert!(rep.acyclic, "witness {:?}", rep.witness);
        }

        #[test]
        fn retagged_region_is_past_closed(
            beta in -0.8..0.8f64,
            trig_node in 1usize..4,
        ) {
            let c = mink();
            let mut h = History::new(c.clone());
            let events: Vec<Event> = (0..4).map(|k| c.event(k as f64, beta * k as f64)).collect();
            let ids = h.add_worldline(ParticleId::from("w"), &events, "plain").unwrap();
            h.add_worldline(
                ParticleId::from("bystander"),
                &[c.event(0.0, 30.0), c.event(3.0, 30.0)],
                "plain",
            ).unwrap();
            let trig = h.node(ids[trig_node]).clone();
            let rec = h.apply_collapse(&trig.particle, &trig.event, "seen", Comparator::BackwardCone)
                .unwrap()
                .clone();
            for id in &rec.retagged {
                let n = h.node(*id);
                prop_assert!(c.in_cone(&n.event, &trig.event, crate::geometry::TimeSide::Future).unwrap());
            }
            // Nodes outside the cone kept their tags.
            for (i, n) in h.nodes().iter().enumerate() {
                if !rec.retagged.contains(&NodeId(i)) {
                    prop_assert_eq!(&n.tag, "plain");
                }
            }
        }

        #[test]
        fn planar_pairs_loop_iff_spacelike(
            t2 in -6.0..6.0f64,
            d in 2.0..8.0f64,
        ) {
            let c = mink();
            let h = two_trigger_planar_history(&c, 0.0, t2, d);
            let rep = h.causal_loop_check().unwrap();
            let spacelike = t2.abs() < d;
            prop_assert_eq!(rep.acyclic, !spacelike,
                "t2 = {}, d = {}, witness {:?}", t2, d, rep.witness);
        }
    }
}
