use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::physics::PhysicalConstants;

use super::rf::{blackman_sinc_pulse, hard_pulse, RfPulse};
use super::timeline::{GradientLobe, Repetition, RfEvent, SequenceTimeline, Spoiling};
use super::waveform::Trapezoid;

/// Spoke angle ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpokeOrder {
    /// θ_n = n·π/N mod 2π with N spokes per frame.
    #[default]
    Sequential,
    /// Successive spokes advance by the golden angle.
    GoldenAngle,
}

/// Excitation pulse choice for a FLASH repetition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Excitation<T> {
    /// Non-selective rectangular pulse; no slice gradient is played.
    Hard { duration: T },
    /// Slice-selective Blackman-sinc under a constant slice gradient.
    /// When `g_slice` is `None` it is derived from the time-bandwidth
    /// product and the slice thickness; otherwise the product follows
    /// from the gradient.
    Sinc { duration: T, time_bandwidth: T, g_slice: Option<T>, nominal_amplitude: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlashParams<T> {
    pub tr: T,
    /// Echo time measured from the centre of the excitation pulse.
    pub te: T,
    pub flip: T,
    pub spokes_per_frame: usize,
    pub frames: usize,
    pub excitation: Excitation<T>,
    /// Readout gradient amplitude, T/m.
    pub g_readout: T,
    /// Duration of the readout flat top, s.
    pub readout_duration: T,
    pub slice_thickness: T,
    pub fov: T,
    /// Gradient ramp time, s. Zero gives ideal rectangles.
    pub ramp: T,
    pub spoke_order: SpokeOrder,
    pub spoiling: Spoiling,
}

impl<T: Real> FlashParams<T> {
    pub fn repetitions(&self) -> usize {
        self.spokes_per_frame * self.frames
    }
}

/// Spoke angle of repetition `n` in `[0, 2π)`.
pub fn spoke_angle<T: Real>(order: SpokeOrder, n: usize, spokes_per_frame: usize) -> T {
    let step = match order {
        SpokeOrder::Sequential => std::f64::consts::PI / spokes_per_frame as f64,
        SpokeOrder::GoldenAngle => std::f64::consts::PI * (5f64.sqrt() - 1.0) / 2.0,
    };
    let a = (n as f64 * step).rem_euclid(std::f64::consts::TAU);
    let a = T::lit(a);
    if a >= T::TAU() {
        T::zero()
    } else {
        a
    }
}

/// Slice gradient and pulse for the configured excitation.
fn excitation_pulse<T: Real>(p: &FlashParams<T>, consts: &PhysicalConstants<T>) -> Result<(RfPulse<T>, Option<T>)> {
    match p.excitation {
        Excitation::Hard { duration } => Ok((hard_pulse(p.flip, duration, consts)?, None)),
        Excitation::Sinc { duration, time_bandwidth, g_slice, nominal_amplitude } => {
            if !(p.slice_thickness > T::zero()) {
                return Err(Error::invalid("slice_thickness", "must be positive"));
            }
            let (tbw, g) = match g_slice {
                Some(g) => (consts.gamma_bar() * g * p.slice_thickness * duration, g),
                None => {
                    let bw = time_bandwidth / duration;
                    (time_bandwidth, bw / (consts.gamma_bar() * p.slice_thickness))
                }
            };
            let pulse = blackman_sinc_pulse(nominal_amplitude, duration, p.flip, tbw, consts)?;
            Ok((pulse, Some(g)))
        }
    }
}

/// Radial spoiled FLASH timeline. Per repetition: slice selection and
/// rewinder on z, prephaser concurrent with the rewinder, and a readout
/// centred at TE along the spoke direction.
pub fn build_flash_radial<T: Real>(p: &FlashParams<T>, consts: &PhysicalConstants<T>) -> Result<SequenceTimeline<T>> {
    if p.spokes_per_frame == 0 || p.frames == 0 {
        return Err(Error::invalid("spokes_per_frame/frames", "counts must be at least 1"));
    }
    if !(p.tr > T::zero() && p.te > T::zero() && p.te < p.tr) {
        return Err(Error::invalid("te", "need 0 < te < tr"));
    }
    if p.ramp < T::zero() || p.readout_duration < T::zero() {
        return Err(Error::invalid("ramp/readout_duration", "must be non-negative"));
    }
    let (pulse, g_slice) = excitation_pulse(p, consts)?;
    let half = T::lit(0.5);
    let ramp = p.ramp;
    let d = pulse.duration;

    // offsets relative to the repetition start
    let (rf_start, after_rf) = match g_slice {
        Some(_) => (ramp, d + ramp * T::lit(2.0)),
        None => (T::zero(), d),
    };
    let centre = rf_start + d * half;
    let rewinder_flat = (d - ramp) * half;
    if g_slice.is_some() && rewinder_flat < T::zero() {
        return Err(Error::InfeasibleTiming("slice rewinder: pulse shorter than the ramp".into()));
    }
    let rewinder_end = after_rf + if g_slice.is_some() { ramp * T::lit(2.0) + rewinder_flat } else { T::zero() };
    let ro_len = p.readout_duration;
    let prephaser_flat = (ro_len - ramp) * half;
    if prephaser_flat < T::zero() {
        return Err(Error::InfeasibleTiming("prephaser: readout shorter than the ramp".into()));
    }
    let prephaser_end = after_rf + ramp * T::lit(2.0) + prephaser_flat;
    let te_abs = centre + p.te;
    let ro_start = te_abs - ro_len * half - ramp;
    let ro_end = te_abs + ro_len * half + ramp;
    let mut violations = Vec::new();
    if ro_start < prephaser_end {
        violations.push(format!(
            "prephaser needs {:.4} ms after the RF but the readout starts {:.4} ms into the repetition",
            prephaser_end.to_f64_lossy() * 1e3,
            ro_start.to_f64_lossy() * 1e3
        ));
    }
    if ro_end > p.tr {
        violations.push(format!(
            "readout ends at {:.4} ms, beyond TR {:.4} ms",
            ro_end.to_f64_lossy() * 1e3,
            p.tr.to_f64_lossy() * 1e3
        ));
    }
    if rewinder_end > p.tr || te_abs > p.tr {
        violations.push(format!("slice refocusing or TE exceeds TR ({:.4} ms)", p.tr.to_f64_lossy() * 1e3));
    }
    if !violations.is_empty() {
        return Err(Error::InfeasibleTiming(violations.join("; ")));
    }

    let n_rep = p.repetitions();
    let mut rng = match p.spoiling {
        Spoiling::RfRandom { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut rf = Vec::with_capacity(n_rep);
    let mut lobes = Vec::with_capacity(n_rep * 6);
    let mut reps = Vec::with_capacity(n_rep);
    for n in 0..n_rep {
        let s = p.tr * T::from_usize_lossy(n);
        let phase = match rng.as_mut() {
            Some(r) => T::lit(r.random_range(0.0..std::f64::consts::TAU)),
            None => T::zero(),
        };
        rf.push(RfEvent { start: s + rf_start, pulse, phase });
        if let Some(g) = g_slice {
            lobes.push(GradientLobe { axis: 2, shape: Trapezoid { start: s, ramp, flat: d, amplitude: g } });
            lobes.push(GradientLobe {
                axis: 2,
                shape: Trapezoid { start: s + after_rf, ramp, flat: rewinder_flat, amplitude: -g },
            });
        }
        let theta: T = spoke_angle(p.spoke_order, n, p.spokes_per_frame);
        let (sn, cs) = theta.sin_cos();
        let has_readout = ro_len > T::zero() && p.g_readout != T::zero();
        if has_readout {
            for (axis, c) in [(0usize, cs), (1usize, sn)] {
                let g = p.g_readout * c;
                lobes.push(GradientLobe {
                    axis,
                    shape: Trapezoid { start: s + after_rf, ramp, flat: prephaser_flat, amplitude: -g },
                });
                lobes.push(GradientLobe {
                    axis,
                    shape: Trapezoid { start: s + ro_start, ramp, flat: ro_len, amplitude: g },
                });
            }
        }
        reps.push(Repetition {
            start: s,
            end: p.tr * T::from_usize_lossy(n + 1),
            te: s + te_abs,
            angle: theta,
            readout: has_readout.then(|| (s + ro_start + ramp, s + ro_start + ramp + ro_len)),
        });
    }
    SequenceTimeline::new(rf, lobes, reps, p.spoiling, p.spokes_per_frame)
}

/// Parameters of the single-shot slice-profile experiment: one selective
/// pulse under `g_slice`, followed by a half-area rewinder, recorded at the
/// end of the rewinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceProfileParams<T> {
    pub nominal_amplitude: T,
    pub duration: T,
    pub flip: T,
    pub g_slice: T,
    pub slice_thickness: T,
    /// Overrides the product derived from gradient and thickness.
    pub time_bandwidth: Option<T>,
}

pub fn build_slice_profile<T: Real>(
    p: &SliceProfileParams<T>,
    consts: &PhysicalConstants<T>,
) -> Result<SequenceTimeline<T>> {
    let tbw = p.time_bandwidth.unwrap_or_else(|| consts.gamma_bar() * p.g_slice * p.slice_thickness * p.duration);
    let pulse = blackman_sinc_pulse(p.nominal_amplitude, p.duration, p.flip, tbw, consts)?;
    let d = p.duration;
    let half = T::lit(0.5);
    let lobes = vec![
        GradientLobe { axis: 2, shape: Trapezoid { start: T::zero(), ramp: T::zero(), flat: d, amplitude: p.g_slice } },
        GradientLobe { axis: 2, shape: Trapezoid { start: d, ramp: T::zero(), flat: d * half, amplitude: -p.g_slice } },
    ];
    let end = d + d * half;
    let reps = vec![Repetition { start: T::zero(), end, te: end, angle: T::zero(), readout: None }];
    let rf = vec![RfEvent { start: T::zero(), pulse, phase: T::zero() }];
    SequenceTimeline::new(rf, lobes, reps, Spoiling::None, 1)
}
