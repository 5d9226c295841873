//! Command implementations. Each one reads its parameters from the
//! validated config, drives the toolkit, and writes CSV (and for the
//! collapse demo, DOT) artifacts into the output directory.

use std::path::Path;
use std::sync::Arc;

use transcoord_core::differentials::{
    local_normalization_density, local_normalization_density_on_grid, transcoord_partial,
    transcoord_partial_on_grid, transcoord_second_space, transcoord_second_space_on_grid,
    LimitSchedule,
};
use transcoord_core::geometry::{beta_to_rapidity, lorentz_boost, Chart, Event};
use transcoord_core::partition::{
    build_internal_chart, fraction_at, fraction_conservation_check, trace_partition_line,
    LocalGrid,
};
use transcoord_core::photon::{
    doppler_ratio, huygens_superpose, EmissionWeights, PhotonError, PlanarSource, RayDirection,
};
use transcoord_core::states::{
    run_decay_detection, straddling_planes, Attachment, Comparator, History, ParticleId,
    ScenarioSpec,
};
use transcoord_core::wavepacket::{Axis, WaveFunction};

use crate::config::{chart_from, config_err, module_err, packet_from, CliError, Config};
use crate::table::{fnum, write_text, Csv};
use crate::RunArgs;

type Result<T> = std::result::Result<T, CliError>;

pub fn execute(command: &'static str, args: &RunArgs) -> Result<()> {
    let cfg = Config::load(&args.config)?;
    cfg.validate_header(command)?;
    let seed = cfg.seed(args.seed)?;
    let out = args.out.as_path();
    match command {
        "trace" => trace(&cfg, out),
        "fraction" => fraction(&cfg, out),
        "derive" => derive(&cfg, out),
        "neighborhood" => neighborhood(&cfg, out),
        "doppler" => doppler(&cfg, out),
        "interference" => interference(&cfg, out),
        "scenario" => scenario(&cfg, out, seed),
        "collapse-demo" => collapse_demo(&cfg, out),
        "internal-coords" => internal_coords(&cfg, out),
        "conservation-report" => conservation_report(&cfg, out),
        other => unreachable!("unrouted command {other}"),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Finds the position on a time slice where the packet fraction equals
/// `f`, expanding a bracket around the hint and bisecting. The fraction
/// is monotone in position, so the bracket only needs to straddle.
fn anchor_for_fraction(phi: &WaveFunction, t: f64, f: f64, hint: f64) -> Result<f64> {
    let chart = phi.chart().clone();
    let eval =
        |x: f64| -> Result<f64> { fraction_at(phi, &chart.event(t, x)).map_err(module_err) };
    let mut w = 1.0;
    let (mut lo, mut hi) = (hint - w, hint + w);
    loop {
        if eval(lo)? <= f && f <= eval(hi)? {
            break;
        }
        w *= 2.0;
        lo = hint - w;
        hi = hint + w;
        if w > 1e6 {
            return Err(CliError::Module {
                name: "AnchorNotFound".into(),
                message: format!("no position reaches fraction {f} on the slice t = {t}"),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? < f {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn unit_fraction(path: &str, f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(config_err(path, "must lie strictly between 0 and 1"))
    }
}

fn trace(cfg: &Config, out: &Path) -> Result<()> {
    let chart = chart_from(cfg, "params.chart")?;
    let phi = packet_from(cfg, &chart, "params.packet")?;
    let fractions = cfg.f64_list("params.fractions")?;
    if fractions.is_empty() {
        return Err(config_err("params.fractions", "needs at least one fraction"));
    }
    let [t_lo, t_hi] = cfg.pair("params.t_range")?;
    if !(t_lo < t_hi) {
        return Err(config_err("params.t_range", "must be an increasing pair"));
    }
    let anchor_time = cfg.f64_or("params.anchor_time", t_lo)?;
    let hint = cfg.f64_or("params.anchor_hint", 0.0)?;
    let mut summary = Csv::create(out, "lines.csv", "index,fraction,anchor_x,samples")?;
    for (i, &f) in fractions.iter().enumerate() {
        unit_fraction(&format!("params.fractions[{i}]"), f)?;
        let ax = anchor_for_fraction(&phi, anchor_time, f, hint)?;
        let line = trace_partition_line(&phi, &chart.event(anchor_time, ax), t_lo, t_hi)
            .map_err(module_err)?;
        let mut csv = Csv::create(out, &format!("line_{i:02}_f{f:.4}.csv"), "t,x,velocity")?;
        for s in line.samples() {
            csv.row(&[fnum(s.t), fnum(s.x), fnum(s.velocity)])?;
        }
        csv.finish()?;
        summary.row(&[
            i.to_string(),
            fnum(f),
            fnum(ax),
            line.samples().len().to_string(),
        ])?;
    }
    summary.finish()
}

fn fraction(cfg: &Config, out: &Path) -> Result<()> {
    let chart = chart_from(cfg, "params.chart")?;
    let phi = packet_from(cfg, &chart, "params.packet")?;
    let events = cfg.pair_list("params.events")?;
    let mut csv = Csv::create(out, "fractions.csv", "t,x,fraction")?;
    for [t, x] in events {
        let f = fraction_at(&phi, &chart.event(t, x)).map_err(module_err)?;
        csv.row(&[fnum(t), fnum(x), fnum(f)])?;
    }
    csv.finish()
}

fn schedule_from(cfg: &Config) -> Result<LimitSchedule> {
    if !cfg.has("params.schedule") {
        return Ok(LimitSchedule::geometric(1e-2, 0.25, 4).expect("default schedule"));
    }
    let delta = cfg.f64("params.schedule.delta")?;
    let ratio = cfg.f64_or("params.schedule.ratio", 0.25)?;
    let count = cfg.u64_or("params.schedule.count", 4)? as usize;
    LimitSchedule::geometric(delta, ratio, count)
        .map_err(|e| config_err("params.schedule", e.to_string()))
}

/// The grid the derivative is read on: the chart rest frame by default,
/// the packet's own flow grid on request (None), or an explicit boost.
fn grid_from(cfg: &Config, chart: &Arc<Chart>, e: &Event) -> Result<Option<LocalGrid>> {
    if !cfg.has("params.grid") {
        return LocalGrid::chart_rest(chart, e).map(Some).map_err(module_err);
    }
    let kind = cfg.str_or("params.grid.kind", "rest")?;
    match kind.as_str() {
        "flow" => Ok(None),
        "rest" => LocalGrid::chart_rest(chart, e).map(Some).map_err(module_err),
        "boosted" => {
            let chi = cfg.f64("params.grid.rapidity")?;
            LocalGrid::boosted(chart, e, chi).map(Some).map_err(module_err)
        }
        other => Err(config_err(
            "params.grid.kind",
            format!("unknown grid kind '{other}' (expected flow, rest, or boosted)"),
        )),
    }
}

fn derive(cfg: &Config, out: &Path) -> Result<()> {
    let chart = chart_from(cfg, "params.chart")?;
    let phi = packet_from(cfg, &chart, "params.packet")?;
    let [t, x] = cfg.pair("params.event")?;
    let e = chart.event(t, x);
    let axis = cfg.str_or("params.axis", "space")?;
    let schedule = schedule_from(cfg)?;
    let grid = grid_from(cfg, &chart, &e)?;
    if axis == "density" {
        let r = match &grid {
            Some(g) => local_normalization_density_on_grid(&phi, g, &schedule),
            None => local_normalization_density(&phi, &e, &schedule),
        }
        .map_err(module_err)?;
        let mut csv = Csv::create(out, "density.csv", "delta,value")?;
        for &(d, v) in &r.estimates {
            csv.row(&[fnum(d), fnum(v)])?;
        }
        csv.row(&[fnum(0.0), fnum(r.value)])?;
        csv.finish()?;
        let mut s =
            Csv::create(out, "density_summary.csv", "value,observed_order,residual,converged")?;
        s.row(&[
            fnum(r.value),
            fnum(r.observed_order),
            fnum(r.residual),
            r.converged.to_string(),
        ])?;
        return s.finish();
    }
    let r = match axis.as_str() {
        "time" | "space" => {
            let ax = if axis == "time" { Axis::Time } else { Axis::Space };
            match &grid {
                Some(g) => transcoord_partial_on_grid(&phi, g, ax, &schedule),
                None => transcoord_partial(&phi, &e, ax, &schedule),
            }
        }
        "second_space" => match &grid {
            Some(g) => transcoord_second_space_on_grid(&phi, g, &schedule),
            None => transcoord_second_space(&phi, &e, &schedule),
        },
        other => {
            return Err(config_err(
                "params.axis",
                format!(
                    "unknown axis '{other}' (expected time, space, second_space, or density)"
                ),
            ))
        }
    }
    .map_err(module_err)?;
    let mut csv = Csv::create(out, "derivative.csv", "delta,re,im")?;
    for &(d, v) in &r.estimates {
        csv.row(&[fnum(d), fnum(v.re), fnum(v.im)])?;
    }
    csv.row(&[fnum(0.0), fnum(r.value.re), fnum(r.value.im)])?;
    csv.finish()?;
    let mut s = Csv::create(
        out,
        "derivative_summary.csv",
        "re,im,observed_order,residual,converged",
    )?;
    s.row(&[
        fnum(r.value.re),
        fnum(r.value.im),
        fnum(r.observed_order),
        fnum(r.residual),
        r.converged.to_string(),
    ])?;
    s.finish()
}

fn neighborhood(cfg: &Config, out: &Path) -> Result<()> {
    let chart = chart_from(cfg, "params.chart")?;
    let [t, x] = cfg.pair("params.center")?;
    let center = chart.event(t, x);
    let delta = cfg.f64("params.delta")?;
    if !(delta > 0.0) {
        return Err(config_err("params.delta", "must be positive"));
    }
    let time_dir = if cfg.has("params.time_dir") {
        cfg.pair("params.time_dir")?
    } else if cfg.has("params.beta") {
        let beta = cfg.f64("params.beta")?;
        if !(beta.abs() < 1.0) {
            return Err(config_err("params.beta", "must satisfy |beta| < 1"));
        }
        if !chart.is_flat_chart() {
            return Err(config_err(
                "params.beta",
                "only meaningful on a flat chart; give time_dir instead",
            ));
        }
        lorentz_boost([1.0, 0.0], beta)
    } else {
        chart.unit_future_timelike(&center, [1.0, 0.0]).map_err(module_err)?
    };
    let nb = chart.build_neighborhood(&center, time_dir, delta).map_err(module_err)?;
    let defect = chart.neighborhood_consistency(&nb).map_err(module_err)?;
    let mut csv = Csv::create(out, "neighborhood.csv", "role,t,x")?;
    for (role, e) in [
        ("center", &nb.center),
        ("future", &nb.future),
        ("past", &nb.past),
        ("spatial_plus", &nb.spatial_plus),
        ("spatial_minus", &nb.spatial_minus),
    ] {
        csv.row(&[role.to_string(), fnum(e.t), fnum(e.x)])?;
    }
    csv.finish()?;
    let mut s = Csv::create(out, "neighborhood_summary.csv", "delta,consistency_defect")?;
    s.row(&[fnum(nb.delta), fnum(defect)])?;
    s.finish()
}

fn direction_from(cfg: &Config, path: &str) -> Result<RayDirection> {
    match cfg.str_or(path, "rightward")?.as_str() {
        "rightward" => Ok(RayDirection::Rightward),
        "leftward" => Ok(RayDirection::Leftward),
        other => Err(config_err(
            path,
            format!("unknown direction '{other}' (expected rightward or leftward)"),
        )),
    }
}

fn doppler(cfg: &Config, out: &Path) -> Result<()> {
    let chart = chart_from(cfg, "params.chart")?;
    let eb = cfg.f64("params.emitter_beta")?;
    let rb = cfg.f64("params.receiver_beta")?;
    for (path, b) in [("params.emitter_beta", eb), ("params.receiver_beta", rb)] {
        if !(b.abs() < 1.0) {
            return Err(config_err(path, "must satisfy |beta| < 1"));
        }
    }
    let omega = cfg.f64_or("params.omega", 1.0)?;
    let [t, x] = cfg.pair_or("params.at", [0.0, 0.0])?;
    let dir = direction_from(cfg, "params.direction")?;
    let e = chart.event(t, x);
    let emitter = LocalGrid::boosted(&chart, &e, beta_to_rapidity(eb)).map_err(module_err)?;
    let receiver = LocalGrid::boosted(&chart, &e, beta_to_rapidity(rb)).map_err(module_err)?;
    let ratio = doppler_ratio(&chart, &emitter, &receiver, dir).map_err(module_err)?;
    let mut csv = Csv::create(
        out,
        "doppler.csv",
        "emitter_beta,receiver_beta,direction,omega,ratio,received_omega",
    )?;
    csv.row(&[
        fnum(eb),
        fnum(rb),
        direction_name(dir).to_string(),
        fnum(omega),
        fnum(ratio),
        fnum(omega * ratio),
    ])?;
    csv.finish()
}

fn direction_name(d: RayDirection) -> &'static str {
    match d {
        RayDirection::Rightward => "rightward",
        RayDirection::Leftward => "leftward",
    }
}

fn interference(cfg: &Config, out: &Path) -> Result<()> {
    let arr = cfg.array("params.sources")?.to_vec();
    let mut sources = Vec::with_capacity(arr.len());
    for (i, v) in arr.iter().enumerate() {
        let path = format!("params.sources[{i}]");
        let obj = v
            .as_object()
            .ok_or_else(|| config_err(&path, "expected an object"))?;
        let pos = obj
            .get("position")
            .ok_or_else(|| config_err(format!("{path}.position"), "missing required pair"))?;
        let pos = pos
            .as_array()
            .filter(|a| a.len() == 2)
            .and_then(|a| Some([a[0].as_f64()?, a[1].as_f64()?]))
            .ok_or_else(|| config_err(format!("{path}.position"), "expected a pair of numbers"))?;
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match obj.get(key) {
                None => default
                    .ok_or_else(|| config_err(format!("{path}.{key}"), "missing required number")),
                Some(n) => n
                    .as_f64()
                    .ok_or_else(|| config_err(format!("{path}.{key}"), "expected a number")),
            }
        };
        sources.push(PlanarSource {
            position: pos,
            phase_rate: num("rate", None)?,
            phase_offset: num("offset", Some(0.0))?,
            intensity: num("intensity", Some(1.0))?,
            emission_start: num("start", Some(-1.0e9))?,
        });
    }
    let from = cfg.pair("params.screen.from")?;
    let to = cfg.pair("params.screen.to")?;
    let points = cfg.u64("params.screen.points")? as usize;
    if points < 2 {
        return Err(config_err("params.screen.points", "needs at least 2 points"));
    }
    let time = cfg.f64("params.time")?;
    let mut csv = Csv::create(out, "interference.csv", "index,x,y,re,im,intensity")?;
    for i in 0..points {
        let s = i as f64 / (points - 1) as f64;
        let p = [from[0] + s * (to[0] - from[0]), from[1] + s * (to[1] - from[1])];
        let amp = match huygens_superpose(&sources, p, time) {
            Ok(a) => a,
            Err(PhotonError::NotReachable) => num_complex::Complex64::new(0.0, 0.0),
            Err(e) => return Err(module_err(e)),
        };
        csv.row(&[
            i.to_string(),
            fnum(p[0]),
            fnum(p[1]),
            fnum(amp.re),
            fnum(amp.im),
            fnum(amp.norm_sqr()),
        ])?;
    }
    csv.finish()
}

fn attachment_from(cfg: &Config, path: &str) -> Result<Attachment> {
    match cfg.str_or(path, "atom")?.as_str() {
        "atom" => Ok(Attachment::Atom),
        "photon" => Ok(Attachment::Photon),
        "detector" => Ok(Attachment::Detector),
        other => Err(config_err(
            path,
            format!("unknown attachment '{other}' (expected atom, photon, or detector)"),
        )),
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fnum).unwrap_or_default()
}

fn scenario(cfg: &Config, out: &Path, seed: u64) -> Result<()> {
    let chart = Chart::minkowski();
    let gamma = cfg.f64("params.gamma")?;
    if !(gamma > 0.0) {
        return Err(config_err("params.gamma", "must be positive"));
    }
    let atom_beta = cfg.f64_or("params.atom_beta", 0.0)?;
    let detector_beta = cfg.f64_or("params.detector_beta", 0.0)?;
    for (path, b) in [("params.atom_beta", atom_beta), ("params.detector_beta", detector_beta)] {
        if !(b.abs() < 1.0) {
            return Err(config_err(path, "must satisfy |beta| < 1"));
        }
    }
    let photon_omega = cfg.f64_or("params.photon_omega", 1.0)?;
    if !(photon_omega > 0.0) {
        return Err(config_err("params.photon_omega", "must be positive"));
    }
    let emission = EmissionWeights::new(
        cfg.f64_or("params.emission.rightward", 0.5)?,
        cfg.f64_or("params.emission.leftward", 0.5)?,
    )
    .map_err(|e| config_err("params.emission", e.to_string()))?;
    let trials = cfg.u64("params.trials")?;
    if trials == 0 || trials > u32::MAX as u64 {
        return Err(config_err("params.trials", "must be between 1 and 2^32 - 1"));
    }
    let t_max = cfg.f64("params.t_max")?;
    if !(t_max > 0.0) {
        return Err(config_err("params.t_max", "must be positive"));
    }
    let spec = ScenarioSpec {
        gamma,
        atom_beta,
        detector_x0: cfg.f64("params.detector_x0")?,
        detector_beta,
        photon_omega,
        emission,
        attachment: attachment_from(cfg, "params.attachment")?,
        trials: trials as u32,
        master_seed: seed,
        t_max,
        checkpoint_times: cfg.f64_list_or_empty("params.checkpoint_times")?,
    };
    let result = run_decay_detection(&chart, &spec).map_err(module_err)?;
    let mut csv = Csv::create(
        out,
        "trials.csv",
        "trial,jump_proper_time,emitted,direction,emission_t,emission_x,e_emit,\
         chart_omega,arrival_t,detected,detection_t,detection_x,e_detect,\
         energy_consistent,history_acyclic",
    )?;
    for r in &result.records {
        let (et, ex) = match r.emission_event {
            Some((t, x)) => (Some(t), Some(x)),
            None => (None, None),
        };
        let (dt, dx) = match r.detection_event {
            Some((t, x)) => (Some(t), Some(x)),
            None => (None, None),
        };
        csv.row(&[
            r.trial.to_string(),
            fnum(r.jump_proper_time),
            r.emitted.to_string(),
            r.direction.map(direction_name).unwrap_or("").to_string(),
            opt_num(et),
            opt_num(ex),
            fnum(r.e_emit),
            opt_num(r.chart_omega),
            opt_num(r.arrival_t),
            r.detected.to_string(),
            opt_num(dt),
            opt_num(dx),
            opt_num(r.e_detect),
            r.energy_consistent.to_string(),
            r.history_acyclic.to_string(),
        ])?;
    }
    csv.finish()?;
    let mut s = Csv::create(
        out,
        "summary.csv",
        "trials,emitted,detected,mean_jump_proper_time,ks_statistic,tuples_valid,\
         all_histories_acyclic",
    )?;
    s.row(&[
        result.records.len().to_string(),
        result.emitted_count.to_string(),
        result.detected_count.to_string(),
        fnum(result.mean_jump_proper_time),
        fnum(result.ks_statistic),
        result.tuples_valid.to_string(),
        result.all_histories_acyclic.to_string(),
    ])?;
    s.finish()
}

fn collapse_demo(cfg: &Config, out: &Path) -> Result<()> {
    let chart = Chart::minkowski();
    let triggers = cfg.pair_list("params.triggers")?;
    if triggers.len() != 2 {
        return Err(config_err("params.triggers", "needs exactly two [t, x] events"));
    }
    let [t1, x1] = triggers[0];
    let [t2, x2] = triggers[1];
    let span_default = 10.0 + (x2 - x1).abs() + (t2 - t1).abs();
    let span = cfg.f64_or("params.span", span_default)?;
    if !(span > 0.0) {
        return Err(config_err("params.span", "must be positive"));
    }
    let comparator = cfg.str_or("params.comparator", "backward_cone")?;
    let e1 = chart.event(t1, x1);
    let e2 = chart.event(t2, x2);
    let t_min = t1.min(t2) - span;
    let t_max = t1.max(t2) + span;
    let mut h = History::new(chart.clone());
    h.add_worldline(
        ParticleId::from("left"),
        &[chart.event(t_min, x1), e1, chart.event(t_max, x1)],
        "plain",
    )
    .map_err(module_err)?;
    h.add_worldline(
        ParticleId::from("right"),
        &[chart.event(t_min, x2), e2, chart.event(t_max, x2)],
        "plain",
    )
    .map_err(module_err)?;
    match comparator.as_str() {
        "backward_cone" => {
            h.apply_collapse(&ParticleId::from("left"), &e1, "one", Comparator::BackwardCone)
                .map_err(module_err)?;
            h.apply_collapse(&ParticleId::from("right"), &e2, "two", Comparator::BackwardCone)
                .map_err(module_err)?;
        }
        "straddling_planes" => {
            let (b1, b2) = straddling_planes(&e1, &e2);
            h.apply_collapse(&ParticleId::from("left"), &e1, "one", Comparator::Plane { beta: b1 })
                .map_err(module_err)?;
            h.apply_collapse(
                &ParticleId::from("right"),
                &e2,
                "two",
                Comparator::Plane { beta: b2 },
            )
            .map_err(module_err)?;
        }
        other => {
            return Err(config_err(
                "params.comparator",
                format!(
                    "unknown comparator '{other}' \
                     (expected backward_cone or straddling_planes)"
                ),
            ))
        }
    }
    let report = h.causal_loop_check().map_err(module_err)?;
    let mut nodes = Csv::create(out, "nodes.csv", "node,particle,t,x,tag,original_tag")?;
    for (i, n) in h.nodes().iter().enumerate() {
        nodes.row(&[
            i.to_string(),
            n.particle.to_string(),
            fnum(n.event.t),
            fnum(n.event.x),
            n.tag.clone(),
            n.original_tag.clone(),
        ])?;
    }
    nodes.finish()?;
    let mut dot = String::from("digraph influence {\n  rankdir=BT;\n");
    for (i, n) in h.nodes().iter().enumerate() {
        dot.push_str(&format!(
            "  n{i} [label=\"{} t={:.6} x={:.6} tag={}\"];\n",
            n.particle, n.event.t, n.event.x, n.tag
        ));
    }
    for (a, b) in h.influence_edges().map_err(module_err)? {
        dot.push_str(&format!("  n{} -> n{};\n", a.0, b.0));
    }
    dot.push_str("}\n");
    write_text(out, "influence.dot", &dot)?;
    let witness = report
        .witness
        .iter()
        .map(|(a, b)| format!("n{}->n{}", a.0, b.0))
        .collect::<Vec<_>>()
        .join(";");
    let mut rep = Csv::create(out, "loop_report.csv", "comparator,acyclic,witness")?;
    rep.row(&[comparator, report.acyclic.to_string(), witness])?;
    rep.finish()
}

fn internal_coords(cfg: &Config, out: &Path) -> Result<()> {
    let chart = chart_from(cfg, "params.chart")?;
    let phi = packet_from(cfg, &chart, "params.packet")?;
    let [ot, ox] = cfg.pair("params.origin")?;
    let [t_lo, t_hi] = cfg.pair("params.t_range")?;
    if !(t_lo < t_hi) {
        return Err(config_err("params.t_range", "must be an increasing pair"));
    }
    let ic = build_internal_chart(&phi, &chart.event(ot, ox), t_lo, t_hi).map_err(module_err)?;
    let mut line = Csv::create(out, "internal_line.csv", "t,x,velocity,tau")?;
    for s in ic.line().samples() {
        let tau = ic.proper_time_at(s.t).map_err(module_err)?;
        line.row(&[fnum(s.t), fnum(s.x), fnum(s.velocity), fnum(tau)])?;
    }
    line.finish()?;
    if cfg.has("params.events") {
        let mut map = Csv::create(out, "internal_map.csv", "t,x,tau,xi,back_t,back_x")?;
        for [t, x] in cfg.pair_list("params.events")? {
            let e = chart.event(t, x);
            let (tau, xi) = ic.to_internal(&e).map_err(module_err)?;
            let back = ic.to_external(tau, xi).map_err(module_err)?;
            map.row(&[fnum(t), fnum(x), fnum(tau), fnum(xi), fnum(back.t), fnum(back.x)])?;
        }
        map.finish()?;
    }
    if cfg.has("params.perpendicular") {
        let tau = cfg.f64_or("params.perpendicular.tau", 0.0)?;
        let half_width = cfg.f64("params.perpendicular.half_width")?;
        if !(half_width > 0.0) {
            return Err(config_err("params.perpendicular.half_width", "must be positive"));
        }
        let count = cfg.u64_or("params.perpendicular.count", 65)? as usize;
        if count < 3 {
            return Err(config_err("params.perpendicular.count", "needs at least 3 samples"));
        }
        let perp = ic.perpendicular(tau, half_width, count).map_err(module_err)?;
        let mut csv = Csv::create(out, "internal_perpendicular.csv", "arc,t,x,fraction")?;
        for s in &perp.samples {
            csv.row(&[fnum(s.arc), fnum(s.event.t), fnum(s.event.x), fnum(s.fraction)])?;
        }
        csv.finish()?;
        let mut s = Csv::create(
            out,
            "perpendicular_summary.csv",
            "tau,half_width,count,total_flux",
        )?;
        s.row(&[fnum(tau), fnum(half_width), count.to_string(), fnum(perp.total_flux)])?;
        s.finish()?;
    }
    Ok(())
}

fn conservation_report(cfg: &Config, out: &Path) -> Result<()> {
    let chart = chart_from(cfg, "params.chart")?;
    let phi = packet_from(cfg, &chart, "params.packet")?;
    let [f_lo, f_hi] = cfg.pair("params.fractions")?;
    unit_fraction("params.fractions[0]", f_lo)?;
    unit_fraction("params.fractions[1]", f_hi)?;
    if !(f_lo < f_hi) {
        return Err(config_err("params.fractions", "must be an increasing pair"));
    }
    let [t_lo, t_hi] = cfg.pair("params.t_range")?;
    if !(t_lo < t_hi) {
        return Err(config_err("params.t_range", "must be an increasing pair"));
    }
    let slices = cfg.u64_or("params.slices", 41)? as usize;
    if slices < 2 {
        return Err(config_err("params.slices", "needs at least 2 slices"));
    }
    let anchor_time = cfg.f64_or("params.anchor_time", t_lo)?;
    let hint = cfg.f64_or("params.anchor_hint", 0.0)?;
    let a_lo = anchor_for_fraction(&phi, anchor_time, f_lo, hint)?;
    let a_hi = anchor_for_fraction(&phi, anchor_time, f_hi, hint)?;
    let line_a = trace_partition_line(&phi, &chart.event(anchor_time, a_lo), t_lo, t_hi)
        .map_err(module_err)?;
    let line_b = trace_partition_line(&phi, &chart.event(anchor_time, a_hi), t_lo, t_hi)
        .map_err(module_err)?;
    let times = linspace(t_lo, t_hi, slices);
    let rep = fraction_conservation_check(&phi, &line_a, &line_b, &times).map_err(module_err)?;
    let mut csv = Csv::create(out, "conservation.csv", "t,fraction_between")?;
    for &(t, v) in &rep.values {
        csv.row(&[fnum(t), fnum(v)])?;
    }
    csv.finish()?;
    let mut s = Csv::create(
        out,
        "conservation_summary.csv",
        "fraction_lo,fraction_hi,reference,max_drift",
    )?;
    s.row(&[fnum(f_lo), fnum(f_hi), fnum(rep.reference), fnum(rep.max_drift)])?;
    s.finish()
}
