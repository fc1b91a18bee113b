//! Location tagging: assign an inferred position to every fingerprint event
//! captured during a walk along a known path.
//!
//! Two interpolation models are supported. Constant speed maps event time
//! linearly onto the path. Constant stride divides the path into K equal
//! strides (K = detected step count) and interpolates within the stride that
//! brackets the event, which absorbs walking-speed variation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{FeatureId, Location, PathSegment, TaggedObservation};
use crate::steps::StepEvents;

/// Events this close outside the walk window are clamped to the boundary;
/// anything further out is rejected. Sensor pipelines emit stragglers.
pub const EVENT_CLAMP_TOLERANCE_MS: i64 = 100;

/// Which interpolation model tags the events of a walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaggingMethod {
    ConstantSpeed,
    ConstantStride,
}

impl TaggingMethod {
    pub fn parse(s: &str) -> Option<TaggingMethod> {
        match s {
            "speed" | "constant-speed" => Some(TaggingMethod::ConstantSpeed),
            "stride" | "constant-stride" => Some(TaggingMethod::ConstantStride),
            _ => None,
        }
    }
}

/// One untagged fingerprint event from a walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub t_ms: i64,
    pub feature: FeatureId,
    pub value: f64,
    pub scan_id: u64,
}

/// One walk along a straight path: window, step events, and the fingerprint
/// events captured on the way. Walks taken in the reverse direction are
/// separate records with swapped endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkRecord {
    path: PathSegment,
    t_start_ms: i64,
    t_end_ms: i64,
    steps: StepEvents,
    events: Vec<RawEvent>,
}

impl WalkRecord {
    /// Step events outside the walk window are dropped (they belong to the
    /// lead-in or lead-out); fingerprint events are kept and judged against
    /// the clamp tolerance at tagging time.
    pub fn new(
        path: PathSegment,
        t_start_ms: i64,
        t_end_ms: i64,
        steps: StepEvents,
        events: Vec<RawEvent>,
    ) -> Result<WalkRecord> {
        if t_start_ms >= t_end_ms {
            return Err(Error::InvalidWalkWindow {
                t_start_ms,
                t_end_ms,
            });
        }
        let in_window: Vec<i64> = steps
            .timestamps_ms
            .into_iter()
            .filter(|t| (t_start_ms..=t_end_ms).contains(t))
            .collect();
        Ok(WalkRecord {
            path,
            t_start_ms,
            t_end_ms,
            steps: StepEvents::new(in_window)?,
            events,
        })
    }

    pub fn path(&self) -> &PathSegment {
        &self.path
    }

    pub fn t_start_ms(&self) -> i64 {
        self.t_start_ms
    }

    pub fn t_end_ms(&self) -> i64 {
        self.t_end_ms
    }

    pub fn steps(&self) -> &StepEvents {
        &self.steps
    }

    pub fn events(&self) -> &[RawEvent] {
        &self.events
    }

    /// Clamps an event timestamp into the walk window, tolerating stragglers
    /// up to [`EVENT_CLAMP_TOLERANCE_MS`] outside it.
    fn clamp_event_time(&self, t_ms: i64) -> Result<i64> {
        if (self.t_start_ms..=self.t_end_ms).contains(&t_ms) {
            return Ok(t_ms);
        }
        if t_ms < self.t_start_ms && self.t_start_ms - t_ms <= EVENT_CLAMP_TOLERANCE_MS {
            return Ok(self.t_start_ms);
        }
        if t_ms > self.t_end_ms && t_ms - self.t_end_ms <= EVENT_CLAMP_TOLERANCE_MS {
            return Ok(self.t_end_ms);
        }
        Err(Error::OutsideWalkWindow {
            t_ms,
            t_start_ms: self.t_start_ms,
            t_end_ms: self.t_end_ms,
            tolerance_ms: EVENT_CLAMP_TOLERANCE_MS,
        })
    }
}

/// Constant-speed tag: linear time interpolation between the endpoints.
pub fn tag_constant_speed(walk: &WalkRecord, t_ms: i64) -> Result<Location> {
    let t = walk.clamp_event_time(t_ms)?;
    let fraction =
        (t - walk.t_start_ms) as f64 / (walk.t_end_ms - walk.t_start_ms) as f64;
    walk.path.point_along(fraction)
}

/// Constant-stride tag: the path is split into K equal strides; the event is
/// placed within the stride whose step events bracket it.
///
/// Events before the first step interpolate the 0th stride using
/// `(t_start, t'_1)` as the bracket; events after the last step clamp to the
/// path end. Both choices keep tags on-path and monotone in time.
pub fn tag_constant_stride(walk: &WalkRecord, t_ms: i64) -> Result<Location> {
    if walk.steps.is_empty() {
        return Err(Error::StrideTaggingUnavailable);
    }
    let t = walk.clamp_event_time(t_ms)?;
    let fraction = stride_fraction(walk.t_start_ms, &walk.steps.timestamps_ms, t);
    walk.path.point_along(fraction)
}

/// Fraction of the path covered at time `t`, under the equal-stride model.
/// `steps` must be non-empty and strictly increasing; `t` must already be
/// clamped into the walk window.
fn stride_fraction(t_start_ms: i64, steps: &[i64], t: i64) -> f64 {
    let k = steps.len();
    if t >= steps[k - 1] {
        return 1.0;
    }
    // Number of completed steps at time t; t lies in stride j.
    let j = steps.partition_point(|s| *s <= t);
    let (bracket_lo, bracket_hi) = if j == 0 {
        (t_start_ms, steps[0])
    } else {
        (steps[j - 1], steps[j])
    };
    let denom = (bracket_hi - bracket_lo) as f64;
    let phi = if denom > 0.0 {
        (t - bracket_lo) as f64 / denom
    } else {
        0.0
    };
    ((j as f64 + phi) / k as f64).clamp(0.0, 1.0)
}

/// Per-walk tagging outcome counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggingReport {
    pub accepted: usize,
    /// Events beyond the clamp tolerance.
    pub rejected_out_of_window: usize,
    /// Wifi readings outside [-100, 0] dBm.
    pub rejected_value_range: usize,
    /// Events inside the tolerance band that were clamped to a boundary.
    pub clamped: usize,
}

impl TaggingReport {
    pub fn merge(&mut self, other: &TaggingReport) {
        self.accepted += other.accepted;
        self.rejected_out_of_window += other.rejected_out_of_window;
        self.rejected_value_range += other.rejected_value_range;
        self.clamped += other.clamped;
    }
}

/// Tags every event of a walk, preserving feature, value and scan id.
/// Per-event rejections are counted, not fatal. Stride tagging on a walk
/// with zero detected steps is an error so the caller can fall back or skip.
pub fn tag_walk(
    walk: &WalkRecord,
    method: TaggingMethod,
) -> Result<(Vec<TaggedObservation>, TaggingReport)> {
    if method == TaggingMethod::ConstantStride && walk.steps.is_empty() {
        return Err(Error::StrideTaggingUnavailable);
    }
    let mut out = Vec::with_capacity(walk.events.len());
    let mut report = TaggingReport::default();
    for ev in &walk.events {
        let tagged = match method {
            TaggingMethod::ConstantSpeed => tag_constant_speed(walk, ev.t_ms),
            TaggingMethod::ConstantStride => tag_constant_stride(walk, ev.t_ms),
        };
        let location = match tagged {
            Ok(loc) => loc,
            Err(Error::OutsideWalkWindow { .. }) => {
                report.rejected_out_of_window += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if ev.t_ms < walk.t_start_ms || ev.t_ms > walk.t_end_ms {
            report.clamped += 1;
        }
        match TaggedObservation::new(ev.feature.clone(), ev.value, location, ev.scan_id) {
            Ok(obs) => {
                report.accepted += 1;
                out.push(obs);
            }
            Err(Error::RssOutOfRange(_)) => report.rejected_value_range += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::FeatureKind;
    use proptest::prelude::*;

    fn path_10m() -> PathSegment {
        PathSegment::new(
            Location::new(0.0, 0.0).unwrap(),
            Location::new(10.0, 0.0).unwrap(),
        )
        .unwrap()
    }

    fn walk(steps: Vec<i64>, events: Vec<RawEvent>) -> WalkRecord {
        WalkRecord::new(
            path_10m(),
            0,
            10_000,
            StepEvents::new(steps).unwrap(),
            events,
        )
        .unwrap()
    }

    fn ev(t_ms: i64) -> RawEvent {
        RawEvent {
            t_ms,
            feature: FeatureId::wifi("aa:bb"),
            value: -50.0,
            scan_id: 1,
        }
    }

    fn dist_to_segment(p: &Location, seg: &PathSegment) -> f64 {
        let (a, b) = (seg.start(), seg.end());
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        p.distance(&Location::new(a.x + t * dx, a.y + t * dy).unwrap())
    }

    #[test]
    fn constant_speed_endpoints_and_midpoint() {
        let w = walk(vec![], vec![]);
        assert_eq!(tag_constant_speed(&w, 0).unwrap(), w.path().start());
        assert_eq!(tag_constant_speed(&w, 10_000).unwrap(), w.path().end());
        let mid = tag_constant_speed(&w, 5_000).unwrap();
        assert!((mid.x - 5.0).abs() < 1e-12 && mid.y == 0.0);
    }

    #[test]
    fn constant_speed_direct() {
        let w = walk(vec![], vec![]);
        let p = tag_constant_speed(&w, 3_000).unwrap();
        assert!((p.x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn clamp_tolerance_and_rejection() {
        let w = walk(vec![], vec![]);
        // 50 ms past the end: clamped to the end point.
        assert_eq!(tag_constant_speed(&w, 10_050).unwrap(), w.path().end());
        assert_eq!(tag_constant_speed(&w, -100).unwrap(), w.path().start());
        assert!(matches!(
            tag_constant_speed(&w, 10_200),
            Err(Error::OutsideWalkWindow { .. })
        ));
    }

    #[test]
    fn stride_fraction_during_fourth_step() {
        // 5 steps; an event halfway between the 3rd and 4th step events lands
        // at fraction (3 + 0.5) / 5 of the path.
        let w = walk(vec![1_000, 2_000, 3_000, 4_000, 5_000], vec![]);
        let p = tag_constant_stride(&w, 3_500).unwrap();
        assert!((p.x - 10.0 * (3.0 + 0.5) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn stride_fraction_exactly_at_step_j() {
        let w = walk(vec![1_000, 2_500, 3_000, 7_000, 9_000], vec![]);
        for (j, t) in [(1, 1_000), (2, 2_500), (3, 3_000), (4, 7_000), (5, 9_000)] {
            let p = tag_constant_stride(&w, t).unwrap();
            assert!(
                (p.x - 10.0 * j as f64 / 5.0).abs() < 1e-12,
                "step {j}: got {}",
                p.x
            );
        }
    }

    #[test]
    fn stride_boundaries() {
        let w = walk(vec![2_000, 4_000, 6_000], vec![]);
        // Before the first step: 0th stride bracketed by (t_start, t'_1).
        let p = tag_constant_stride(&w, 1_000).unwrap();
        assert!((p.x - 10.0 * (0.5 / 3.0)).abs() < 1e-12);
        // After the last step: clamped to the end point.
        assert_eq!(tag_constant_stride(&w, 8_000).unwrap(), w.path().end());
    }

    #[test]
    fn stride_without_steps_unavailable() {
        let w = walk(vec![], vec![ev(100)]);
        assert!(matches!(
            tag_constant_stride(&w, 100),
            Err(Error::StrideTaggingUnavailable)
        ));
        assert!(matches!(
            tag_walk(&w, TaggingMethod::ConstantStride),
            Err(Error::StrideTaggingUnavailable)
        ));
    }

    #[test]
    fn uniform_steps_reduce_to_constant_speed() {
        // Steps evenly spaced over the whole window make the two models agree.
        let steps: Vec<i64> = (1..=8).map(|k| k * 10_000 / 8).collect();
        let w = walk(steps, vec![]);
        for t in (0..=10_000).step_by(37) {
            let a = tag_constant_speed(&w, t).unwrap();
            let b = tag_constant_stride(&w, t).unwrap();
            assert!(
                a.distance(&b) <= 1e-9,
                "t={t}: speed {:?} vs stride {:?}",
                a,
                b
            );
        }
    }

    #[test]
    fn tag_walk_empty_and_counts() {
        let w = walk(vec![], vec![]);
        let (obs, report) = tag_walk(&w, TaggingMethod::ConstantSpeed).unwrap();
        assert!(obs.is_empty());
        assert_eq!(report, TaggingReport::default());

        let events = vec![ev(1_000), ev(2_000), ev(10_050), ev(11_000)];
        let w = walk(vec![], events);
        let (obs, report) = tag_walk(&w, TaggingMethod::ConstantSpeed).unwrap();
        assert_eq!(obs.len(), 3);
        assert_eq!(report.accepted, 3);
        assert_eq!(report.clamped, 1);
        assert_eq!(report.rejected_out_of_window, 1);
    }

    #[test]
    fn tag_walk_rejects_out_of_range_rss() {
        let mut bad = ev(1_000);
        bad.value = -150.0;
        let w = walk(vec![], vec![ev(500), bad]);
        let (obs, report) = tag_walk(&w, TaggingMethod::ConstantSpeed).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(report.rejected_value_range, 1);
    }

    #[test]
    fn tag_walk_monotone_distances() {
        let events: Vec<RawEvent> = [800, 2_300, 4_100, 9_900].iter().map(|t| ev(*t)).collect();
        let w = walk(vec![1_500, 3_000, 4_500, 6_000, 7_500, 9_000], events);
        for method in [TaggingMethod::ConstantSpeed, TaggingMethod::ConstantStride] {
            let (obs, _) = tag_walk(&w, method).unwrap();
            assert_eq!(obs.len(), 4);
            let start = w.path().start();
            let mut prev = 0.0;
            for o in &obs {
                let d = o.location.distance(&start);
                assert!(d >= prev - 1e-12);
                prev = d;
            }
        }
    }

    #[test]
    fn feature_kind_roundtrip() {
        for kind in [
            FeatureKind::WifiBssid,
            FeatureKind::MagneticMagnitude,
            FeatureKind::MagneticZ,
        ] {
            assert_eq!(FeatureKind::parse(kind.as_str()), Some(kind));
        }
    }

    proptest! {
        #[test]
        fn tags_stay_on_segment_and_monotone(
            step_seed in 1u64..1000,
            times in proptest::collection::vec(0i64..10_000, 1..40),
        ) {
            // Deterministic pseudo-random step layout from the seed.
            let mut steps = Vec::new();
            let mut t = 400 + (step_seed % 700) as i64;
            while t < 10_000 {
                steps.push(t);
                t += 350 + ((step_seed.wrapping_mul(t as u64 + 1)) % 900) as i64;
            }
            prop_assume!(!steps.is_empty());
            let mut times = times;
            times.sort_unstable();
            times.dedup();
            let w = walk(steps, vec![]);

            for method in [TaggingMethod::ConstantSpeed, TaggingMethod::ConstantStride] {
                let mut prev = -1.0;
                for t in &times {
                    let loc = match method {
                        TaggingMethod::ConstantSpeed => tag_constant_speed(&w, *t).unwrap(),
                        TaggingMethod::ConstantStride => tag_constant_stride(&w, *t).unwrap(),
                    };
                    prop_assert!(dist_to_segment(&loc, w.path()) <= 1e-9);
                    let d = loc.distance(&w.path().start());
                    prop_assert!(d >= prev - 1e-12);
                    prev = d;
                }
            }
        }
    }
}
