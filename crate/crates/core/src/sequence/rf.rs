use crate::error::{Error, Result};
use crate::num::Real;
use crate::physics::PhysicalConstants;
use crate::quadrature::GaussLegendre;

/// Envelope family of an RF pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RfShape<T> {
    /// Constant amplitude.
    Hard,
    /// Blackman-windowed sinc, centred, with bandwidth in Hz. The
    /// time-bandwidth product is `bandwidth · duration`.
    BlackmanSinc { bandwidth: T },
}

/// RF pulse with a real-valued envelope; the carrier phase lives on the
/// event that plays it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfPulse<T> {
    pub shape: RfShape<T>,
    pub duration: T,
    /// Calibrated peak amplitude in T.
    pub amplitude: T,
    /// Amplitude that was requested before calibration, T.
    pub nominal_amplitude: T,
    /// Nominal flip angle in rad.
    pub flip: T,
}

fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-8) {
        let px = T::PI() * x;
        T::one() - px * px / T::lit(6.0)
    } else {
        let px = T::PI() * x;
        px.sin() / px
    }
}

fn blackman<T: Real>(s: T, duration: T) -> T {
    let a = T::TAU() * s / duration;
    T::lit(0.42) - T::lit(0.5) * a.cos() + T::lit(0.08) * (a + a).cos()
}

impl<T: Real> RfShape<T> {
    /// Unit-amplitude envelope at local time `s ∈ [0, duration]`.
    pub fn unit_envelope(&self, s: T, duration: T) -> T {
        if s < T::zero() || s > duration {
            return T::zero();
        }
        match *self {
            RfShape::Hard => T::one(),
            RfShape::BlackmanSinc { bandwidth } => {
                let x = s - duration * T::lit(0.5);
                // exact zeros at the ends
                if s == T::zero() || s == duration {
                    return T::zero();
                }
                blackman(s, duration) * sinc(bandwidth * x)
            }
        }
    }

    /// `∫ unit_envelope dt` over the pulse.
    pub fn unit_area(&self, duration: T) -> T {
        match *self {
            RfShape::Hard => duration,
            RfShape::BlackmanSinc { bandwidth } => {
                let lobes = (bandwidth * duration).to_f64_lossy().abs().ceil() as usize;
                let panels = 32 * lobes.max(1);
                GaussLegendre::new(8).integrate(T::zero(), duration, panels, |s| self.unit_envelope(s, duration))
            }
        }
    }
}

impl<T: Real> RfPulse<T> {
    /// Envelope (T) at local time `s`, zero outside the pulse.
    pub fn envelope(&self, s: T) -> T {
        self.amplitude * self.shape.unit_envelope(s, self.duration)
    }

    /// Flip angle actually delivered on resonance, `γ ∫ B1 dt`.
    pub fn delivered_flip(&self, consts: &PhysicalConstants<T>) -> T {
        consts.gamma * self.amplitude * self.shape.unit_area(self.duration)
    }

    /// Relative deviation of the calibrated amplitude from the nominal one.
    pub fn amplitude_deviation(&self) -> T {
        (self.amplitude - self.nominal_amplitude) / self.nominal_amplitude
    }
}

fn calibrate<T: Real>(
    shape: RfShape<T>,
    nominal_amplitude: T,
    duration: T,
    flip: T,
    consts: &PhysicalConstants<T>,
) -> Result<RfPulse<T>> {
    if !(duration.is_finite() && duration > T::zero()) {
        return Err(Error::invalid("rf.duration", "must be positive"));
    }
    if !flip.is_finite() || flip < T::zero() {
        return Err(Error::invalid("rf.flip", "must be non-negative"));
    }
    let area = shape.unit_area(duration);
    if !(area.is_finite() && area > T::zero()) {
        return Err(Error::invalid("rf", "envelope has no positive area; cannot calibrate flip angle"));
    }
    let amplitude = flip / (consts.gamma * area);
    let nominal = if nominal_amplitude > T::zero() { nominal_amplitude } else { amplitude };
    Ok(RfPulse { shape, duration, amplitude, nominal_amplitude: nominal, flip })
}

/// Blackman-windowed sinc with `time_bandwidth` = bandwidth · duration,
/// amplitude recalibrated so that the on-resonance flip equals `target_flip`.
/// The requested `amplitude` is kept as the nominal value for reporting.
pub fn blackman_sinc_pulse<T: Real>(
    amplitude: T,
    duration: T,
    target_flip: T,
    time_bandwidth: T,
    consts: &PhysicalConstants<T>,
) -> Result<RfPulse<T>> {
    if !(time_bandwidth.is_finite() && time_bandwidth > T::zero()) {
        return Err(Error::invalid("rf.time_bandwidth", "must be positive"));
    }
    if !(duration.is_finite() && duration > T::zero()) {
        return Err(Error::invalid("rf.duration", "must be positive"));
    }
    let shape = RfShape::BlackmanSinc { bandwidth: time_bandwidth / duration };
    calibrate(shape, amplitude, duration, target_flip, consts)
}

/// Rectangular pulse with `γ B1 duration = flip`.
pub fn hard_pulse<T: Real>(flip: T, duration: T, consts: &PhysicalConstants<T>) -> Result<RfPulse<T>> {
    calibrate(RfShape::Hard, T::zero(), duration, flip, consts)
}
