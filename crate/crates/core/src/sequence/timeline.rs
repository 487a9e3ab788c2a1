use crate::error::{Error, Result};
use crate::num::Real;
use crate::physics::{EffectiveField, PhysicalConstants, Vec3};

use super::rf::RfPulse;
use super::waveform::{waveform_from_trapezoids, Trapezoid, Waveform};

/// How residual transverse magnetization is destroyed between repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spoiling {
    /// No spoiling; transverse magnetization is carried over.
    None,
    /// Transverse magnetization zeroed at the end of each repetition.
    Ideal,
    /// Random RF phase per repetition from a seeded generator.
    RfRandom { seed: u64 },
}

/// One RF pulse played at `start` with carrier phase `phase`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfEvent<T> {
    pub start: T,
    pub pulse: RfPulse<T>,
    pub phase: T,
}

impl<T: Real> RfEvent<T> {
    pub fn end(&self) -> T {
        self.start + self.pulse.duration
    }
    pub fn center(&self) -> T {
        self.start + self.pulse.duration * T::lit(0.5)
    }
}

/// A gradient lobe on one physical axis (0 = x, 1 = y, 2 = z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientLobe<T> {
    pub axis: usize,
    pub shape: Trapezoid<T>,
}

/// Bookkeeping for one repetition `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Repetition<T> {
    pub start: T,
    pub end: T,
    /// Absolute echo time marker.
    pub te: T,
    /// Spoke angle θ in [0, 2π).
    pub angle: T,
    /// Readout flat-top window, if any.
    pub readout: Option<(T, T)>,
}

/// Source of the effective field. Implementations must be deterministic.
pub trait FieldSource<T: Real>: Send + Sync {
    /// Transverse RF components `(B1x, B1y)` in T.
    fn rf(&self, t: T) -> (T, T);
    /// Gradient vector in T/m.
    fn gradient(&self, t: T) -> [T; 3];
    /// Discontinuities of the data strictly inside `(t0, t1)`.
    fn breakpoints(&self, _t0: T, _t1: T, _out: &mut Vec<T>) {}

    fn field(&self, t: T, r: [T; 3]) -> EffectiveField<T> {
        let (bx, by) = self.rf(t);
        let g = self.gradient(t);
        Vec3::new(bx, by, g[0] * r[0] + g[1] * r[1] + g[2] * r[2])
    }
}

/// Time-independent field, handy for tests and analytic checks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstantField<T> {
    pub rf: (T, T),
    pub gradient: [T; 3],
}

impl<T: Real> FieldSource<T> for ConstantField<T> {
    fn rf(&self, _t: T) -> (T, T) {
        self.rf
    }
    fn gradient(&self, _t: T) -> [T; 3] {
        self.gradient
    }
}

/// Immutable pulse-sequence timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTimeline<T> {
    rf: Vec<RfEvent<T>>,
    lobes: Vec<GradientLobe<T>>,
    gradients: [Waveform<T>; 3],
    reps: Vec<Repetition<T>>,
    spoiling: Spoiling,
    spokes_per_frame: usize,
    rf_edges: Vec<T>,
}

impl<T: Real> SequenceTimeline<T> {
    pub fn new(
        mut rf: Vec<RfEvent<T>>,
        lobes: Vec<GradientLobe<T>>,
        reps: Vec<Repetition<T>>,
        spoiling: Spoiling,
        spokes_per_frame: usize,
    ) -> Result<Self> {
        rf.sort_by(|a, b| a.start.partial_cmp(&b.start).expect("finite rf start"));
        for w in rf.windows(2) {
            if w[1].start < w[0].end() {
                return Err(Error::InfeasibleTiming(format!("RF events overlap at {} s", w[1].start.to_f64_lossy())));
            }
        }
        let mut per_axis: [Vec<Trapezoid<T>>; 3] = Default::default();
        for l in &lobes {
            if l.axis > 2 {
                return Err(Error::invalid("gradient.axis", "must be 0, 1 or 2"));
            }
            per_axis[l.axis].push(l.shape);
        }
        let gradients = [
            waveform_from_trapezoids(&per_axis[0])?,
            waveform_from_trapezoids(&per_axis[1])?,
            waveform_from_trapezoids(&per_axis[2])?,
        ];
        if spokes_per_frame == 0 {
            return Err(Error::invalid("spokes_per_frame", "must be at least 1"));
        }
        for (i, rep) in reps.iter().enumerate() {
            if !(rep.end > rep.start) {
                return Err(Error::invalid("repetition", format!("repetition {i} has non-positive length")));
            }
            if !(rep.angle >= T::zero() && rep.angle < T::TAU()) {
                return Err(Error::invalid("spoke angle", format!("repetition {i}: angle outside [0, 2π)")));
            }
            if rep.te < rep.start || rep.te > rep.end {
                return Err(Error::InfeasibleTiming(format!("repetition {i}: TE marker outside the repetition")));
            }
            let n_rf = rf.iter().filter(|e| e.start >= rep.start && e.start < rep.end).count();
            if n_rf != 1 {
                return Err(Error::InfeasibleTiming(format!("repetition {i} contains {n_rf} RF events, expected 1")));
            }
        }
        let mut rf_edges: Vec<T> = rf.iter().flat_map(|e| [e.start, e.end()]).collect();
        rf_edges.dedup();
        Ok(Self { rf, lobes, gradients, reps, spoiling, spokes_per_frame, rf_edges })
    }

    pub fn rf_events(&self) -> &[RfEvent<T>] {
        &self.rf
    }
    pub fn lobes(&self) -> &[GradientLobe<T>] {
        &self.lobes
    }
    pub fn gradient_waveform(&self, axis: usize) -> &Waveform<T> {
        &self.gradients[axis]
    }
    pub fn repetitions(&self) -> &[Repetition<T>] {
        &self.reps
    }
    pub fn spoiling(&self) -> Spoiling {
        self.spoiling
    }
    pub fn spokes_per_frame(&self) -> usize {
        self.spokes_per_frame
    }
    pub fn frames(&self) -> usize {
        self.reps.len().div_ceil(self.spokes_per_frame)
    }
    pub fn te_markers(&self) -> impl Iterator<Item = T> + '_ {
        self.reps.iter().map(|r| r.te)
    }

    /// End of the last repetition (or last event when there are none).
    pub fn end_time(&self) -> T {
        let mut end = self.reps.last().map(|r| r.end).unwrap_or(T::zero());
        if let Some(e) = self.rf.last() {
            end = end.max(e.end());
        }
        for g in &self.gradients {
            if let Some(&t) = g.times().last() {
                end = end.max(t);
            }
        }
        end
    }

    fn rf_event_at(&self, t: T) -> Option<&RfEvent<T>> {
        let i = self.rf.partition_point(|e| e.start <= t);
        if i == 0 {
            return None;
        }
        let e = &self.rf[i - 1];
        (t < e.end()).then_some(e)
    }

    /// Centre of the most recent excitation at or before `t`.
    pub fn last_excitation_center(&self, t: T) -> Option<T> {
        let i = self.rf.partition_point(|e| e.center() <= t);
        (i > 0).then(|| self.rf[i - 1].center())
    }
}

impl<T: Real> FieldSource<T> for SequenceTimeline<T> {
    fn rf(&self, t: T) -> (T, T) {
        match self.rf_event_at(t) {
            None => (T::zero(), T::zero()),
            Some(e) => {
                let a = e.pulse.envelope(t - e.start);
                let (s, c) = e.phase.sin_cos();
                (a * c, a * s)
            }
        }
    }

    fn gradient(&self, t: T) -> [T; 3] {
        [self.gradients[0].eval(t), self.gradients[1].eval(t), self.gradients[2].eval(t)]
    }

    fn breakpoints(&self, t0: T, t1: T, out: &mut Vec<T>) {
        let lo = self.rf_edges.partition_point(|&s| s <= t0);
        let hi = self.rf_edges.partition_point(|&s| s < t1);
        if lo < hi {
            out.extend_from_slice(&self.rf_edges[lo..hi]);
        }
        for g in &self.gradients {
            g.breakpoints_in(t0, t1, out);
        }
    }
}

/// Effective field `(B1x(t), B1y(t), G(t)·r)` at time `t` and position `r`.
pub fn eval_field<T: Real, F: FieldSource<T> + ?Sized>(source: &F, t: T, r: [T; 3]) -> EffectiveField<T> {
    source.field(t, r)
}

/// k-space position `(γ/2π) ∫ G dτ` for the in-plane axes, integrated
/// from the centre of the latest excitation (or from zero before any).
pub fn kspace_trajectory<T: Real>(tl: &SequenceTimeline<T>, times: &[T], consts: &PhysicalConstants<T>) -> Vec<(T, T)> {
    let gbar = consts.gamma_bar();
    times
        .iter()
        .map(|&t| {
            let t_ref = tl.last_excitation_center(t).unwrap_or(T::neg_infinity());
            let kx = tl.gradients[0].integral_to(t) - tl.gradients[0].integral_to(t_ref);
            let ky = tl.gradients[1].integral_to(t) - tl.gradients[1].integral_to(t_ref);
            (gbar * kx, gbar * ky)
        })
        .collect()
}
