use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Value `v[i]` holds on `[t[i], t[i+1])`; the last value is unused.
    Constant,
    Linear,
}

/// Piecewise waveform over strictly increasing breakpoints. Zero outside
/// `[t_first, t_last)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    times: Vec<T>,
    values: Vec<T>,
    interp: Interpolation,
    // running integral at each breakpoint
    cumulative: Vec<T>,
}

impl<T: Real> Waveform<T> {
    pub fn new(times: Vec<T>, values: Vec<T>, interp: Interpolation) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid("waveform", "times and values differ in length"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("waveform breakpoints".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("waveform", "breakpoint times must be strictly increasing"));
        }
        let mut cumulative = Vec::with_capacity(times.len());
        let mut acc = T::zero();
        for i in 0..times.len() {
            cumulative.push(acc);
            if i + 1 < times.len() {
                let dt = times[i + 1] - times[i];
                acc += match interp {
                    Interpolation::Constant => values[i] * dt,
                    Interpolation::Linear => (values[i] + values[i + 1]) * dt * T::lit(0.5),
                };
            }
        }
        Ok(Self { times, values, interp, cumulative })
    }

    pub fn empty() -> Self {
        Self { times: Vec::new(), values: Vec::new(), interp: Interpolation::Constant, cumulative: Vec::new() }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    // index i with times[i] <= t < times[i+1], if inside the span
    fn segment(&self, t: T) -> Option<usize> {
        let n = self.times.len();
        if n < 2 || t < self.times[0] || t >= self.times[n - 1] {
            return None;
        }
        Some(self.times.partition_point(|&s| s <= t) - 1)
    }

    pub fn eval(&self, t: T) -> T {
        match self.segment(t) {
            None => T::zero(),
            Some(i) => match self.interp {
                Interpolation::Constant => self.values[i],
                Interpolation::Linear => {
                    let a = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
                    self.values[i] + (self.values[i + 1] - self.values[i]) * a
                }
            },
        }
    }

    /// Exact integral from the first breakpoint (or -∞) to `t`.
    pub fn integral_to(&self, t: T) -> T {
        let n = self.times.len();
        if n < 2 || t <= self.times[0] {
            return T::zero();
        }
        if t >= self.times[n - 1] {
            return self.cumulative[n - 1];
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let dt = t - self.times[i];
        let part = match self.interp {
            Interpolation::Constant => self.values[i] * dt,
            Interpolation::Linear => {
                let slope = (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i]);
                self.values[i] * dt + slope * dt * dt * T::lit(0.5)
            }
        };
        self.cumulative[i] + part
    }

    pub fn integral(&self, a: T, b: T) -> T {
        self.integral_to(b) - self.integral_to(a)
    }

    /// Breakpoints strictly inside `(t0, t1)`, appended to `out`.
    pub fn breakpoints_in(&self, t0: T, t1: T, out: &mut Vec<T>) {
        let lo = self.times.partition_point(|&s| s <= t0);
        let hi = self.times.partition_point(|&s| s < t1);
        if lo < hi {
            out.extend_from_slice(&self.times[lo..hi]);
        }
    }
}

/// Trapezoidal gradient lobe: ramp up, flat top, ramp down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid<T> {
    pub start: T,
    pub ramp: T,
    pub flat: T,
    pub amplitude: T,
}

impl<T: Real> Trapezoid<T> {
    pub fn end(&self) -> T {
        self.start + self.ramp * T::lit(2.0) + self.flat
    }

    pub fn area(&self) -> T {
        self.amplitude * (self.flat + self.ramp)
    }
}

/// Builds one axis from non-overlapping trapezoids sorted by start. With
/// zero ramps the result is piecewise constant, otherwise piecewise linear.
pub fn waveform_from_trapezoids<T: Real>(lobes: &[Trapezoid<T>]) -> Result<Waveform<T>> {
    let mut lobes: Vec<_> = lobes.iter().copied().filter(|l| l.flat + l.ramp > T::zero()).collect();
    lobes.sort_by(|a, b| a.start.partial_cmp(&b.start).expect("finite start"));
    // lobes computed along different arithmetic paths may touch with a few ulp of overlap
    let near = |a: T, b: T| (a - b).abs() <= T::epsilon() * T::lit(16.0) * a.abs().max(b.abs());
    for w in lobes.windows(2) {
        if w[1].start < w[0].end() && !near(w[1].start, w[0].end()) {
            return Err(Error::InfeasibleTiming(format!(
                "gradient lobes overlap: one ends at {} s, next starts at {} s",
                w[0].end(),
                w[1].start
            )));
        }
    }
    if lobes.is_empty() {
        return Ok(Waveform::empty());
    }
    let ramped = lobes.iter().any(|l| l.ramp > T::zero());
    let mut times: Vec<T> = Vec::new();
    let mut values: Vec<T> = Vec::new();
    let push = |t: T, v: T, times: &mut Vec<T>, values: &mut Vec<T>| {
        if let Some(&last) = times.last() {
            if t <= last || near(t, last) {
                // touching lobes share a breakpoint; the later value wins
                *values.last_mut().expect("paired") = v;
                return;
            }
        }
        times.push(t);
        values.push(v);
    };
    for l in &lobes {
        if ramped {
            push(l.start, T::zero(), &mut times, &mut values);
            push(l.start + l.ramp, l.amplitude, &mut times, &mut values);
            push(l.start + l.ramp + l.flat, l.amplitude, &mut times, &mut values);
            push(l.end(), T::zero(), &mut times, &mut values);
        } else {
            push(l.start, l.amplitude, &mut times, &mut values);
            push(l.end(), T::zero(), &mut times, &mut values);
        }
    }
    let interp = if ramped { Interpolation::Linear } else { Interpolation::Constant };
    Waveform::new(times, values, interp)
}
