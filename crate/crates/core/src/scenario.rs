//! A concrete interferometer run: geometry, tolerances and the piecewise
//! analytic field obtained by replaying the optical timeline.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::optics::{apply_event, GeometryParams, InterferometerGeometry, OpticalEvent, Trace};
use crate::wavefield::WaveField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative and absolute local error per integrator step.
    pub tol_step: f64,
    /// Node threshold relative to the field's peak density.
    pub node_threshold: f64,
    /// Smallest step before a trajectory is declared node-trapped.
    pub h_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol_step: 1e-8, node_threshold: 1e-10, h_min: 1e-12 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("tol_step", self.tol_step)?;
        ensure_positive("node_threshold", self.node_threshold)?;
        ensure_positive("h_min", self.h_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub geometry: GeometryParams,
    pub tolerances: Tolerances,
}

/// Analytic field as a function of time, piecewise free between events.
#[derive(Debug, Clone)]
pub struct FieldTimeline {
    start: f64,
    end: f64,
    /// `(segment start, field)`; simultaneous events give equal starts.
    segments: Vec<(f64, WaveField)>,
    events: Vec<OpticalEvent>,
}

impl FieldTimeline {
    pub fn build(initial: WaveField, start: f64, end: f64, events: &[OpticalEvent]) -> Result<Self> {
        let mut segments = vec![(start, initial)];
        for ev in events {
            if ev.time < start || ev.time > end {
                return Err(Error::Geometry(format!("event at t = {} outside [{start}, {end}]", ev.time)));
            }
            let next = apply_event(&segments.last().expect("non-empty").1, ev)?;
            segments.push((ev.time, next));
        }
        Ok(Self { start, end, segments, events: events.to_vec() })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn events(&self) -> &[OpticalEvent] {
        &self.events
    }

    pub fn segments(&self) -> &[(f64, WaveField)] {
        &self.segments
    }

    /// Field valid at `t`; at an event time this is the post-event field.
    pub fn field_at(&self, t: f64) -> Result<&WaveField> {
        let slack = 1e-12 * (1.0 + self.end.abs());
        if !(t >= self.start - slack && t <= self.end + slack) {
            return Err(Error::TimelineGap { t, start: self.start, end: self.end });
        }
        let idx = self.segments.partition_point(|(s, _)| *s <= t);
        Ok(&self.segments[idx.saturating_sub(1)].1)
    }

    /// Field just before `t` (the pre-event field when `t` is an event time).
    pub fn field_before(&self, t: f64) -> Result<&WaveField> {
        if !(t >= self.start && t <= self.end) {
            return Err(Error::TimelineGap { t, start: self.start, end: self.end });
        }
        let idx = self.segments.partition_point(|(s, _)| *s < t);
        Ok(&self.segments[idx.saturating_sub(1)].1)
    }

    /// Distinct event times strictly inside `(a, b)`, ascending.
    pub fn event_times_between(&self, a: f64, b: f64) -> Vec<f64> {
        let mut times: Vec<f64> = self.events.iter().map(|e| e.time).filter(|t| *t > a && *t < b).collect();
        times.dedup();
        times
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub geometry: InterferometerGeometry,
    pub trace: Trace,
    pub timeline: FieldTimeline,
}

impl Scenario {
    pub fn new(params: ScenarioParams) -> Result<Self> {
        params.tolerances.validate()?;
        let geometry = InterferometerGeometry::standard(&params.geometry)?;
        Self::from_geometry(params, geometry)
    }

    pub fn from_geometry(params: ScenarioParams, geometry: InterferometerGeometry) -> Result<Self> {
        let trace = geometry.trace()?;
        let initial = WaveField::single(geometry.source, geometry.constants).with_node_threshold(params.tolerances.node_threshold);
        let timeline = FieldTimeline::build(initial, geometry.source.birth_time, geometry.final_time, &trace.events)?;
        Ok(Self { params, geometry, trace, timeline })
    }

    pub fn which_way(&self) -> bool {
        self.geometry.ww_tag_planes.is_some()
    }

    pub fn split_time(&self) -> f64 {
        self.trace.split_time
    }

    /// Mean time at which the arm packets reach the crossing point.
    pub fn overlap_time(&self) -> f64 {
        0.5 * (self.trace.arrival_times[0] + self.trace.arrival_times[1])
    }

    pub fn final_time(&self) -> f64 {
        self.geometry.final_time
    }

    /// Time at which the approaching arm centers are `offset` apart along the splitter normal.
    pub fn pre_overlap_time(&self, offset: f64) -> f64 {
        let c = &self.geometry.constants;
        let v = self.geometry.source.group_velocity(c);
        let vn = v.dot(&self.geometry.beam_splitter.unit_normal).abs();
        self.overlap_time() - 0.5 * offset / vn
    }

    pub fn speed(&self) -> f64 {
        self.geometry.source.group_velocity(&self.geometry.constants).norm()
    }
}
