//! Bohm trajectories on the extended configuration space.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{DetectorId, DetectorRegion, EventKind, Plane2D};
use crate::scenario::Scenario;
use crate::wavefield::{Guidance, WaveField, WwLabel};
use crate::Vec2;

/// Points whose density is below this fraction of peak are flagged `near_node`.
pub const NEAR_NODE_FRACTION: f64 = 1e-6;
/// Intervals of the common time grid used for pair-crossing detection.
pub const RESAMPLE_INTERVALS: usize = 2000;
const MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    R,
    T,
}

impl Arm {
    pub fn index(self) -> usize {
        match self {
            Arm::R => 0,
            Arm::T => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    D1,
    D2,
    Undetected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec2,
    pub w: WwLabel,
    pub v: Vec2,
    pub near_node: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Side of the splitter plane right after the split; `None` for starts exactly on it.
    pub origin_arm: Option<Arm>,
    pub endpoint: Endpoint,
    /// Why integration stopped early, if it did.
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least its initial point")
    }

    pub fn t_span(&self) -> (f64, f64) {
        (self.points[0].t, self.last().t)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<'a> {
    field: &'a WaveField,
    w: WwLabel,
    tol: f64,
    h_min: f64,
}

struct StepFailure {
    t: f64,
    reason: String,
}

impl Stepper<'_> {
    fn eval(&self, x: &Vec2, t: f64) -> Result<Guidance> {
        self.field.guide(self.w, x, t)
    }

    fn point(&self, t: f64, x: Vec2, g: &Guidance) -> TrajectoryPoint {
        TrajectoryPoint { t, x, w: self.w, v: g.velocity, near_node: g.density < NEAR_NODE_FRACTION * g.peak }
    }

    fn try_step(&self, t: f64, x: &Vec2, k1: &Vec2, h: f64) -> Result<(Vec2, Guidance, f64)> {
        let k2 = self.eval(&(x + k1 * (h * A21)), t + C2 * h)?.velocity;
        let k3 = self.eval(&(x + (k1 * A31 + k2 * A32) * h), t + C3 * h)?.velocity;
        let k4 = self.eval(&(x + (k1 * A41 + k2 * A42 + k3 * A43) * h), t + C4 * h)?.velocity;
        let k5 = self.eval(&(x + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h), t + C5 * h)?.velocity;
        let k6 = self.eval(&(x + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h), t + h)?.velocity;
        let x_new = x + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
        let g7 = self.eval(&x_new, t + h)?;
        let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + g7.velocity * E7) * h;
        let mut err = 0.0f64;
        for i in 0..2 {
            let scale = self.tol + self.tol * x[i].abs().max(x_new[i].abs());
            err = err.max(err_vec[i].abs() / scale);
        }
        Ok((x_new, g7, err))
    }

    /// Integrates over `[a, b]` with no optical event inside; appends accepted points.
    fn run(&self, a: f64, b: f64, x0: Vec2, h: &mut f64, points: &mut Vec<TrajectoryPoint>) -> std::result::Result<Vec2, StepFailure> {
        let mut t = a;
        let mut x = x0;
        let mut g = self.eval(&x, t).map_err(|e| StepFailure { t, reason: e.to_string() })?;
        let mut steps = 0usize;
        while t < b {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(StepFailure { t, reason: "step budget exhausted".into() });
            }
            let last = *h >= b - t;
            let hh = if last { b - t } else { *h };
            match self.try_step(t, &x, &g.velocity, hh) {
                Ok((x_new, g_new, err)) if err <= 1.0 => {
                    t = if last { b } else { t + hh };
                    x = x_new;
                    g = g_new;
                    points.push(self.point(t, x, &g));
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if !last || factor < 1.0 {
                        *h = hh * factor;
                    }
                }
                Ok((_, _, err)) => {
                    *h = hh * (0.9 * err.powf(-0.2)).max(0.1);
                    if *h < self.h_min {
                        return Err(StepFailure { t, reason: format!("step size collapsed below h_min at t = {t}") });
                    }
                }
                Err(Error::NodeProximity { .. }) => {
                    *h = hh * 0.5;
                    if *h < self.h_min {
                        return Err(StepFailure { t, reason: format!("node trap at t = {t}, x = ({}, {})", x.x, x.y) });
                    }
                }
                Err(e) => return Err(StepFailure { t, reason: e.to_string() }),
            }
        }
        Ok(x)
    }
}

fn arm_of(scenario: &Scenario, x: &Vec2) -> Option<Arm> {
    let d = scenario.geometry.r_side().signed_distance(x);
    if d > 0.0 {
        Some(Arm::R)
    } else if d < 0.0 {
        Some(Arm::T)
    } else {
        None
    }
}

fn apply_label_events(scenario: &Scenario, t: f64, x: &Vec2, w: &mut WwLabel, arm: &mut Option<Arm>, after_split: &mut bool) {
    for ev in scenario.timeline.events().iter().filter(|e| e.time == t) {
        match ev.kind {
            EventKind::BeamSplit => {
                *after_split = true;
                *arm = arm_of(scenario, x);
            }
            EventKind::WwTag(label) => {
                if *w == WwLabel::None && ev.applies_to.contains_point(x) {
                    *w = label;
                }
            }
            EventKind::Mirror => {}
        }
    }
}

/// Integrates `dx/dt = v(w, x, t)` from `t0` to `t1` through the field timeline.
pub fn integrate_trajectory(scenario: &Scenario, x0: Vec2, t0: f64, t1: f64) -> Result<Trajectory> {
    if !(t0 < t1) {
        return Err(Error::Precondition(format!("t0 = {t0} must precede t1 = {t1}")));
    }
    let tl = &scenario.timeline;
    tl.field_at(t0)?;
    tl.field_at(t1)?;
    let tol = &scenario.params.tolerances;
    let mut w = WwLabel::None;
    let mut after_split = false;
    let mut arm = None;
    let mut passed: Vec<f64> = tl.events().iter().map(|e| e.time).filter(|t| *t <= t0).collect();
    passed.dedup();
    for te in passed {
        apply_label_events(scenario, te, &x0, &mut w, &mut arm, &mut after_split);
    }
    if after_split {
        arm = arm_of(scenario, &x0);
    }

    let mut points = Vec::new();
    let mut failure = None;
    let field0 = tl.field_at(t0)?;
    match field0.guide(w, &x0, t0) {
        Ok(g) => points.push(TrajectoryPoint { t: t0, x: x0, w, v: g.velocity, near_node: g.density < NEAR_NODE_FRACTION * g.peak }),
        Err(e) => {
            points.push(TrajectoryPoint { t: t0, x: x0, w, v: Vec2::zeros(), near_node: true });
            failure = Some(format!("start inside node zone: {e}"));
        }
    }
    if failure.is_none() && after_split && arm.is_none() {
        failure = Some("start lies exactly on the splitter plane".into());
    }

    let mut breaks = tl.event_times_between(t0, t1);
    breaks.push(t1);
    let mut a = t0;
    let mut x = x0;
    let mut h = 1e-3f64.min(t1 - t0);
    if failure.is_none() {
        for b in breaks {
            let field = tl.field_at(a)?;
            let stepper = Stepper { field, w, tol: tol.tol_step, h_min: tol.h_min };
            match stepper.run(a, b, x, &mut h, &mut points) {
                Ok(xb) => x = xb,
                Err(f) => {
                    failure = Some(format!("{} (t = {})", f.reason, f.t));
                    break;
                }
            }
            if b < t1 {
                apply_label_events(scenario, b, &x, &mut w, &mut arm, &mut after_split);
                if after_split && arm.is_none() {
                    failure = Some("trajectory sits exactly on the splitter plane at the split".into());
                    break;
                }
                let post = tl.field_at(b)?;
                match post.guide(w, &x, b) {
                    Ok(g) => {
                        let last = points.last_mut().expect("points");
                        last.w = w;
                        last.v = g.velocity;
                        last.near_node = g.density < NEAR_NODE_FRACTION * g.peak;
                    }
                    Err(e) => {
                        failure = Some(format!("post-event node at t = {b}: {e}"));
                        break;
                    }
                }
            }
            a = b;
        }
    }
    let mut traj = Trajectory { points, origin_arm: arm, endpoint: Endpoint::Undetected, failure };
    traj.endpoint = attribute_endpoint(&traj, &scenario.geometry.detectors);
    Ok(traj)
}

pub fn attribute_endpoint(traj: &Trajectory, detectors: &[DetectorRegion]) -> Endpoint {
    if traj.failure.is_some() {
        return Endpoint::Undetected;
    }
    let x = traj.last().x;
    match detectors.iter().find(|d| d.contains(&x)).map(|d| d.id) {
        Some(DetectorId::D1) => Endpoint::D1,
        Some(DetectorId::D2) => Endpoint::D2,
        None => Endpoint::Undetected,
    }
}

/// Draws `n` points from the label-marginal `|Ψ(·, t)|²` by rejection against
/// the exact envelope `m_max Σ_j |ψ_j|²`.
pub fn born_sample(field: &WaveField, t: f64, n: usize, seed: u64) -> Result<Vec<Vec2>> {
    if n == 0 {
        return Err(Error::Precondition("born_sample needs n > 0".into()));
    }
    let c = field.constants();
    let terms = field.terms();
    if terms.is_empty() {
        return Err(Error::Precondition("field has no terms".into()));
    }
    let weights: Vec<f64> = terms.iter().map(|(_, p)| p.amplitude.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    let m_max = field.labels().iter().map(|w| terms.iter().filter(|(l, _)| l == w).count()).max().unwrap_or(1) as f64;
    let comps: Vec<(Vec2, f64)> = terms.iter().map(|(_, p)| (p.center(t, c), p.width(t, c))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0u64;
    while out.len() < n {
        attempts += 1;
        if attempts >= 1000 && (out.len() as f64) / (attempts as f64) < 1e-3 {
            return Err(Error::SamplerEfficiency { rate: out.len() as f64 / attempts as f64 });
        }
        let mut u = rng.random::<f64>() * total;
        let mut j = 0;
        while j + 1 < weights.len() && u >= weights[j] {
            u -= weights[j];
            j += 1;
        }
        let (center, sigma) = comps[j];
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        let x = center + Vec2::new(zx, zy) * sigma;
        let envelope: f64 = m_max * terms.iter().map(|(_, p)| p.value(&x, t, c).norm_sqr()).sum::<f64>();
        if rng.random::<f64>() * envelope < field.density(&x, t) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Strict sign changes of the signed distance to `plane` inside `window`.
pub fn detect_bs_plane_crossings(traj: &Trajectory, plane: &Plane2D, window: (f64, f64)) -> usize {
    let mut last_sign = 0.0f64;
    let mut count = 0;
    for p in traj.points.iter().filter(|p| p.t >= window.0 && p.t <= window.1) {
        let d = plane.signed_distance(&p.x);
        if d != 0.0 {
            let s = d.signum();
            if last_sign != 0.0 && s != last_sign {
                count += 1;
            }
            last_sign = s;
        }
    }
    count
}

/// Trajectories linearly interpolated onto a shared uniform time grid.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Vec2>>,
    pub labels: Vec<Vec<WwLabel>>,
}

pub fn resample(trajs: &[Trajectory], intervals: usize) -> Result<Resampled> {
    if trajs.is_empty() {
        return Ok(Resampled { times: Vec::new(), positions: Vec::new(), labels: Vec::new() });
    }
    let start = trajs.iter().map(|t| t.t_span().0).fold(f64::NEG_INFINITY, f64::max);
    let end = trajs.iter().map(|t| t.t_span().1).fold(f64::INFINITY, f64::min);
    if !(end > start) {
        return Err(Error::Resampling(format!("time spans do not overlap ([{start}, {end}])")));
    }
    let times: Vec<f64> = (0..=intervals).map(|i| start + (end - start) * i as f64 / intervals as f64).collect();
    let mut positions = Vec::with_capacity(trajs.len());
    let mut labels = Vec::with_capacity(trajs.len());
    for tr in trajs {
        let pts = &tr.points;
        let mut pos = Vec::with_capacity(times.len());
        let mut lab = Vec::with_capacity(times.len());
        let mut j = 0;
        for &t in &times {
            while j + 1 < pts.len() && pts[j + 1].t <= t {
                j += 1;
            }
            let p = &pts[j];
            if j + 1 < pts.len() && t > p.t {
                let q = &pts[j + 1];
                let s = (t - p.t) / (q.t - p.t);
                pos.push(p.x + (q.x - p.x) * s);
            } else {
                pos.push(p.x);
            }
            lab.push(p.w);
        }
        positions.push(pos);
        labels.push(lab);
    }
    Ok(Resampled { times, positions, labels })
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Intersection point of segments `p1p2` and `q1q2`, if any.
pub fn segment_intersection(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> Option<Vec2> {
    let r = p2 - p1;
    let s = q2 - q1;
    let qp = q1 - p1;
    let denom = cross(r, s);
    if denom == 0.0 {
        if cross(qp, r) != 0.0 {
            return None;
        }
        let rr = r.norm_squared();
        if rr == 0.0 {
            return if (q1 - p1).norm() == 0.0 { Some(p1) } else { None };
        }
        let t0 = qp.dot(&r) / rr;
        let t1 = t0 + s.dot(&r) / rr;
        let (lo, hi) = (t0.min(t1).max(0.0), t0.max(t1).min(1.0));
        return if lo <= hi { Some(p1 + r * (0.5 * (lo + hi))) } else { None };
    }
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(p1 + r * t)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingMarker {
    pub time: f64,
    pub position: Vec2,
    pub pair: (usize, usize),
}

/// Distance from the origin to the segment `d0d1`.
fn origin_to_segment(d0: Vec2, d1: Vec2) -> f64 {
    let e = d1 - d0;
    let ee = e.norm_squared();
    let s = if ee == 0.0 { 0.0 } else { (-d0.dot(&e) / ee).clamp(0.0, 1.0) };
    (d0 + e * s).norm()
}

fn pair_segments(rs: &Resampled, i: usize, j: usize, coincidence: f64) -> (Vec<CrossingMarker>, usize) {
    let (a, b) = (&rs.positions[i], &rs.positions[j]);
    let mut markers = Vec::new();
    let mut same = 0;
    for k in 0..rs.times.len() - 1 {
        let (p1, p2, q1, q2) = (a[k], a[k + 1], b[k], b[k + 1]);
        if rs.labels[i][k] == rs.labels[j][k] {
            // One sheet: the flow forbids equal-time coincidence, while the
            // spatial paths may still cross at different times.
            if origin_to_segment(p1 - q1, p2 - q2) <= coincidence {
                same += 1;
            }
            continue;
        }
        if p1.x.max(p2.x) < q1.x.min(q2.x) || q1.x.max(q2.x) < p1.x.min(p2.x) || p1.y.max(p2.y) < q1.y.min(q2.y) || q1.y.max(q2.y) < p1.y.min(p2.y) {
            continue;
        }
        if let Some(pos) = segment_intersection(p1, p2, q1, q2) {
            markers.push(CrossingMarker { time: 0.5 * (rs.times[k] + rs.times[k + 1]), position: pos, pair: (i, j) });
        }
    }
    (markers, same)
}

/// Crossings of the spatial projection between trajectories on different
/// sheets, found on a common time grid. Two trajectories on the same sheet
/// coming within `coincidence` of each other at equal times contradicts
/// uniqueness of the flow and is an error.
pub fn detect_projected_pair_crossings(trajs: &[Trajectory], coincidence: f64) -> Result<Vec<CrossingMarker>> {
    if trajs.len() < 2 {
        return Ok(Vec::new());
    }
    let rs = resample(trajs, RESAMPLE_INTERVALS)?;
    let n = trajs.len();
    let per_i: Vec<(Vec<CrossingMarker>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut ms = Vec::new();
            let mut same = 0;
            for j in i + 1..n {
                let (m, s) = pair_segments(&rs, i, j, coincidence);
                ms.extend(m);
                same += s;
            }
            (ms, same)
        })
        .collect();
    let same: usize = per_i.iter().map(|(_, s)| s).sum();
    if same > 0 {
        return Err(Error::Invariant(format!("{same} same-sheet trajectory crossings detected")));
    }
    Ok(per_i.into_iter().flat_map(|(m, _)| m).collect())
}

/// Smallest equal-time distance between two trajectories on the same sheet.
pub fn min_same_sheet_distance(rs: &Resampled) -> f64 {
    let n = rs.positions.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in i + 1..n {
                for k in 0..rs.times.len() {
                    if rs.labels[i][k] == rs.labels[j][k] {
                        best = best.min((rs.positions[i][k] - rs.positions[j][k]).norm());
                    }
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    /// `counts[origin arm][detector]` with arms `[r, t]` and detectors `[D1, D2]`.
    pub counts: [[usize; 2]; 2],
    pub undetected: usize,
    pub crossings_of_bs_plane: usize,
    pub projected_pair_crossings: usize,
    pub seed: u64,
    pub n: usize,
}

impl EnsembleResult {
    fn empty(seed: u64) -> Self {
        Self { counts: [[0; 2]; 2], undetected: 0, crossings_of_bs_plane: 0, projected_pair_crossings: 0, seed, n: 0 }
    }

    pub fn detector_totals(&self) -> [usize; 2] {
        [self.counts[0][0] + self.counts[1][0], self.counts[0][1] + self.counts[1][1]]
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub result: EnsembleResult,
    pub trajectories: Vec<Trajectory>,
    pub markers: Vec<CrossingMarker>,
}

/// Samples at the split instant, integrates to the final time, attributes endpoints.
pub fn run_ensemble(scenario: &Scenario, n: usize, seed: u64) -> Result<EnsembleRun> {
    if n == 0 {
        return Ok(EnsembleRun { result: EnsembleResult::empty(seed), trajectories: Vec::new(), markers: Vec::new() });
    }
    let t0 = scenario.split_time();
    let t1 = scenario.final_time();
    let starts = born_sample(scenario.timeline.field_at(t0)?, t0, n, seed)?;
    let trajectories: Vec<Trajectory> = starts.par_iter().map(|x0| integrate_trajectory(scenario, *x0, t0, t1)).collect::<Result<_>>()?;
    let mut result = EnsembleResult::empty(seed);
    result.n = n;
    let plane = scenario.geometry.beam_splitter;
    for (i, tr) in trajectories.iter().enumerate() {
        if let Some(reason) = &tr.failure {
            warn!("trajectory {i} undetected: {reason}");
        }
        match (tr.origin_arm, tr.endpoint) {
            (Some(arm), Endpoint::D1) => result.counts[arm.index()][0] += 1,
            (Some(arm), Endpoint::D2) => result.counts[arm.index()][1] += 1,
            _ => result.undetected += 1,
        }
        result.crossings_of_bs_plane += detect_bs_plane_crossings(tr, &plane, (t0, t1));
    }
    let complete: Vec<Trajectory> = trajectories.iter().filter(|t| t.failure.is_none()).cloned().collect();
    let markers = detect_projected_pair_crossings(&complete, 10.0 * scenario.params.tolerances.tol_step)?;
    result.projected_pair_crossings = markers.len();
    Ok(EnsembleRun { result, trajectories, markers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::GeometryParams;
    use crate::scenario::ScenarioParams;
    use crate::wavefield::{GaussianPacket, PhysicalConstants};
    use num_complex::Complex64;

    fn scenario(ww: bool) -> Scenario {
        Scenario::new(ScenarioParams { geometry: GeometryParams { which_way: ww, ..Default::default() }, ..Default::default() }).unwrap()
    }

    #[test]
    fn packet_center_rides_straight() {
        let s = scenario(false);
        let c = s.geometry.constants;
        let p = s.geometry.source;
        let t1 = s.split_time();
        let tr = integrate_trajectory(&s, p.center(0.0, &c), 0.0, t1 * 0.999).unwrap();
        assert!(tr.failure.is_none());
        for pt in &tr.points {
            assert!((pt.x - p.center(pt.t, &c)).norm() < 1e-9);
            assert!((pt.v - p.group_velocity(&c)).norm() < 1e-9);
        }
    }

    #[test]
    fn single_arm_paths_follow_the_rules() {
        for (ww, expect) in [(false, Endpoint::D1), (true, Endpoint::D2)] {
            let s = scenario(ww);
            let t0 = s.split_time();
            let tr = integrate_trajectory(&s, Vec2::new(0.1, 0.3), t0, s.final_time()).unwrap();
            assert_eq!(tr.origin_arm, Some(Arm::R));
            assert!(tr.failure.is_none(), "{:?}", tr.failure);
            assert_eq!(tr.endpoint, expect);
            assert!(tr.points.windows(2).all(|w| w[1].t > w[0].t));
            let labels: Vec<WwLabel> = tr.points.iter().map(|p| p.w).collect();
            let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
            assert_eq!(changes, usize::from(ww));
            if ww {
                assert_eq!(tr.last().w, WwLabel::R);
            }
        }
    }

    #[test]
    fn starts_on_the_plane_are_undetected() {
        let s = scenario(false);
        let tr = integrate_trajectory(&s, Vec2::new(0.2, 0.0), s.split_time(), s.final_time()).unwrap();
        assert_eq!(tr.origin_arm, None);
        assert_eq!(tr.endpoint, Endpoint::Undetected);
    }

    #[test]
    fn endpoint_attribution() {
        let s = scenario(false);
        let mk = |x: Vec2| Trajectory {
            points: vec![TrajectoryPoint { t: 0.0, x, w: WwLabel::None, v: Vec2::zeros(), near_node: false }],
            origin_arm: Some(Arm::R),
            endpoint: Endpoint::Undetected,
            failure: None,
        };
        let det = s.geometry.detectors;
        assert_eq!(attribute_endpoint(&mk(Vec2::new(40.0, 12.0)), &det), Endpoint::D1);
        assert_eq!(attribute_endpoint(&mk(Vec2::new(40.0, 0.1)), &det), Endpoint::Undetected);
        let mut moved = det;
        moved[0].half_plane.point.y = 13.0;
        assert_eq!(attribute_endpoint(&mk(Vec2::new(40.0, 12.0)), &moved), Endpoint::Undetected);
    }

    #[test]
    fn born_sample_single_packet_moments() {
        let c = PhysicalConstants::default();
        let p = GaussianPacket::new(Vec2::new(1.0, -2.0), Vec2::new(3.0, 1.0), 0.8, 0.0, Complex64::new(1.0, 0.0)).unwrap();
        let f = WaveField::single(p, c);
        let t = 1.5;
        let n = 20000;
        let xs = born_sample(&f, t, n, 7).unwrap();
        let mean = xs.iter().fold(Vec2::zeros(), |a, x| a + x) / n as f64;
        let sigma_t = p.width(t, &c);
        assert!((mean - p.center(t, &c)).norm() < 4.0 * sigma_t / (n as f64).sqrt());
        let var_x = xs.iter().map(|x| (x.x - mean.x).powi(2)).sum::<f64>() / (n - 1) as f64;
        let var_y = xs.iter().map(|x| (x.y - mean.y).powi(2)).sum::<f64>() / (n - 1) as f64;
        let cov = xs.iter().map(|x| (x.x - mean.x) * (x.y - mean.y)).sum::<f64>() / (n - 1) as f64;
        // Sample variance of a normal has relative s.d. √(2/n) ≈ 0.01.
        let s2 = sigma_t * sigma_t;
        assert!((var_x / s2 - 1.0).abs() < 0.05 && (var_y / s2 - 1.0).abs() < 0.05);
        assert!((cov / s2).abs() < 0.05);
        assert_eq!(born_sample(&f, t, 50, 3).unwrap(), born_sample(&f, t, 50, 3).unwrap());
        assert!(born_sample(&f, t, 0, 3).is_err());
    }

    #[test]
    fn born_sample_splits_disjoint_packets_evenly() {
        let c = PhysicalConstants::default();
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let a = GaussianPacket::new(Vec2::new(0.0, 10.0), Vec2::zeros(), 1.0, 0.0, h).unwrap();
        let b = GaussianPacket::new(Vec2::new(0.0, -10.0), Vec2::zeros(), 1.0, 0.0, h).unwrap();
        let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c).unwrap();
        let n = 400;
        let xs = born_sample(&f, 0.0, n, 11).unwrap();
        let up = xs.iter().filter(|x| x.y > 0.0).count() as f64;
        assert!((up - n as f64 / 2.0).abs() <= 4.0 * (n as f64 / 4.0).sqrt());
    }

    #[test]
    fn plane_crossing_counts_strict_sign_changes() {
        let plane = Plane2D::new(Vec2::zeros(), Vec2::y()).unwrap();
        let mk = |ys: &[f64]| Trajectory {
            points: ys.iter().enumerate().map(|(i, y)| TrajectoryPoint { t: i as f64, x: Vec2::new(0.0, *y), w: WwLabel::None, v: Vec2::zeros(), near_node: false }).collect(),
            origin_arm: Some(Arm::R),
            endpoint: Endpoint::D1,
            failure: None,
        };
        assert_eq!(detect_bs_plane_crossings(&mk(&[1.0, 2.0, 3.0]), &plane, (0.0, 10.0)), 0);
        assert_eq!(detect_bs_plane_crossings(&mk(&[1.0, 0.0, -1.0, 2.0]), &plane, (0.0, 10.0)), 2);
        assert_eq!(detect_bs_plane_crossings(&mk(&[1.0, -1.0, 2.0]), &plane, (1.0, 10.0)), 1);
    }

    #[test]
    fn segment_intersection_cases() {
        let v = Vec2::new;
        assert!(segment_intersection(v(0.0, 0.0), v(1.0, 1.0), v(0.0, 1.0), v(1.0, 0.0)).is_some());
        assert!(segment_intersection(v(0.0, 0.0), v(1.0, 0.0), v(0.0, 1.0), v(1.0, 1.0)).is_none());
        assert!(segment_intersection(v(0.0, 0.0), v(2.0, 0.0), v(1.0, 0.0), v(3.0, 0.0)).is_some());
        assert!(segment_intersection(v(0.0, 0.0), v(1.0, 0.0), v(2.0, 0.0), v(3.0, 0.0)).is_none());
    }

    #[test]
    fn mirrored_pair_crosses_only_in_projection() {
        let s = scenario(true);
        let t0 = s.split_time();
        let a = integrate_trajectory(&s, Vec2::new(0.05, 0.25), t0, s.final_time()).unwrap();
        let b = integrate_trajectory(&s, Vec2::new(0.05, -0.25), t0, s.final_time()).unwrap();
        let markers = detect_projected_pair_crossings(&[a.clone(), b], 1e-7).unwrap();
        assert!(!markers.is_empty());
        assert!(detect_projected_pair_crossings(&[a], 1e-7).unwrap().is_empty());
        // Two r-sheet trajectories never cross.
        let c = integrate_trajectory(&s, Vec2::new(-0.1, 0.6), t0, s.final_time()).unwrap();
        let d = integrate_trajectory(&s, Vec2::new(0.2, 0.2), t0, s.final_time()).unwrap();
        assert!(detect_projected_pair_crossings(&[c, d], 1e-7).unwrap().is_empty());
    }

    #[test]
    fn empty_ensemble() {
        let run = run_ensemble(&scenario(false), 0, 5).unwrap();
        assert_eq!(run.result.counts, [[0; 2]; 2]);
        assert_eq!(run.result.undetected, 0);
        assert!(run.trajectories.is_empty());
    }
}
