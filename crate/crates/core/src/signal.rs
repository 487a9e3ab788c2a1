//! Demodulated receive signal, echo-time sampling and frame series.

use std::io::Write;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::isochromat::IsochromatSet;
use crate::mesh_dg::{DgSpace, DgState};
use crate::num::Real;
use crate::quadrature::GaussLegendre;
use crate::sequence::SequenceTimeline;

/// Axis-aligned box in physical coordinates over which the receive coil
/// integrates. Bounds on axes the mesh does not resolve are ignored for
/// DG states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalRegion<T> {
    pub lower: [T; 3],
    pub upper: [T; 3],
}

impl<T: Real> SignalRegion<T> {
    pub fn new(lower: [T; 3], upper: [T; 3]) -> Self {
        Self { lower, upper }
    }

    /// Unbounded region.
    pub fn everywhere() -> Self {
        Self { lower: [T::neg_infinity(); 3], upper: [T::infinity(); 3] }
    }

    pub fn contains(&self, r: [T; 3]) -> bool {
        (0..3).all(|a| r[a] >= self.lower[a] && r[a] <= self.upper[a])
    }
}

fn clip<T: Real>(space: &DgSpace<T>, cell: usize, region: &SignalRegion<T>) -> Option<Vec<(T, T)>> {
    let mesh = space.mesh();
    let mut out = Vec::with_capacity(mesh.dim());
    for a in 0..mesh.dim() {
        let ax = mesh.axes()[a];
        let c = mesh.center(cell, a);
        let hw = mesh.width(a) * T::lit(0.5);
        let lo = ((region.lower[ax] - c) / hw).max(-T::one());
        let hi = ((region.upper[ax] - c) / hw).min(T::one());
        if !(hi > lo) {
            return None;
        }
        out.push((lo, hi));
    }
    Some(out)
}

/// `∫ (Mx + i My) dr` over `region`, exact for the stored polynomials.
pub fn integrate_signal<T: Real>(
    space: &DgSpace<T>,
    state: &DgState<T>,
    region: &SignalRegion<T>,
) -> Result<Complex<T>> {
    integrate_signal_with_phase(space, state, region, None)
}

/// As [`integrate_signal`], optionally weighting with `e^{-2πi(kx x + ky y)}`
/// for a k-space position away from the echo. With a phase the quadrature
/// is approximate.
pub fn integrate_signal_with_phase<T: Real>(
    space: &DgSpace<T>,
    state: &DgState<T>,
    region: &SignalRegion<T>,
    k: Option<(T, T)>,
) -> Result<Complex<T>> {
    let mesh = space.mesh();
    let dim = mesh.dim();
    let npts = if k.is_some() { space.degree() + 4 } else { space.degree() + 1 };
    let rule = GaussLegendre::<T>::new(npts);
    let root = mesh.cell_volume().sqrt();
    let jvol = mesh.cell_volume() / T::from_usize_lossy(1 << dim);
    let mut acc = Complex::new(T::zero(), T::zero());
    let mut hit = false;
    let mut xi = vec![T::zero(); dim];
    for cell in 0..mesh.num_cells() {
        let Some(bounds) = clip(space, cell, region) else { continue };
        hit = true;
        let full = bounds.iter().all(|&(lo, hi)| lo == -T::one() && hi == T::one());
        if full && k.is_none() {
            acc += Complex::new(state.coeffs[space.dof(cell, 0, 0)], state.coeffs[space.dof(cell, 1, 0)]) * root;
            continue;
        }
        let q = rule.len();
        for p in 0..q.pow(dim as u32) {
            let mut rem = p;
            let mut w = jvol;
            for (a, x) in xi.iter_mut().enumerate() {
                let i = rem % q;
                rem /= q;
                let (lo, hi) = bounds[a];
                let half = (hi - lo) * T::lit(0.5);
                *x = lo + half * (rule.nodes[i] + T::one());
                w *= half * rule.weights[i];
            }
            let m = state.eval_ref(space, cell, &xi);
            let mut v = Complex::new(m.x, m.y) * w;
            if let Some((kx, ky)) = k {
                let r = mesh.position(cell, &xi);
                let phase = -T::lit(2.0) * T::PI() * (kx * r[0] + ky * r[1]);
                v *= Complex::from_polar(T::one(), phase);
            }
            acc += v;
        }
    }
    if !hit {
        return Err(Error::EmptyRegion);
    }
    Ok(acc)
}

/// Weighted sum of `Mx + i My` over the isochromats inside `region`.
pub fn integrate_isochromats<T: Real>(set: &IsochromatSet<T>, y: &[T], region: &SignalRegion<T>) -> Result<Complex<T>> {
    let mut acc = Complex::new(T::zero(), T::zero());
    let mut hit = false;
    for (i, (&r, &w)) in set.positions.iter().zip(&set.weights).enumerate() {
        if region.contains(r) {
            hit = true;
            acc += Complex::new(y[3 * i], y[3 * i + 1]) * w;
        }
    }
    if !hit {
        return Err(Error::EmptyRegion);
    }
    Ok(acc)
}

/// One echo-time sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSample<T> {
    pub t: T,
    pub value: Complex<T>,
    pub spoke: usize,
    pub frame: usize,
}

/// Collects one sample per repetition at its echo time, removing the
/// excitation phase so that RF-spoiled data are demodulated.
#[derive(Debug, Clone)]
pub struct TeRecorder<T> {
    times: Vec<T>,
    phases: Vec<T>,
    spokes_per_frame: usize,
    samples: Vec<SignalSample<T>>,
}

impl<T: Real> TeRecorder<T> {
    pub fn new(tl: &SequenceTimeline<T>) -> Self {
        let times: Vec<T> = tl.te_markers().collect();
        let phases = tl
            .repetitions()
            .iter()
            .map(|rep| {
                tl.rf_events().iter().find(|e| e.start >= rep.start && e.start < rep.end).map_or(T::zero(), |e| e.phase)
            })
            .collect();
        Self { times, phases, spokes_per_frame: tl.spokes_per_frame().max(1), samples: Vec::new() }
    }

    /// Echo times, one per repetition, to be used as integrator stops.
    pub fn stops(&self) -> &[T] {
        &self.times
    }

    /// Stores the raw signal of repetition `rep` taken at time `t`.
    pub fn record(&mut self, rep: usize, t: T, raw: Complex<T>) {
        let value = raw * Complex::from_polar(T::one(), -self.phases[rep]);
        self.samples.push(SignalSample {
            t,
            value,
            spoke: rep % self.spokes_per_frame,
            frame: rep / self.spokes_per_frame,
        });
    }

    pub fn samples(&self) -> &[SignalSample<T>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<SignalSample<T>> {
        self.samples
    }
}

/// Frame-averaged magnitudes with the normalization applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries<T> {
    pub magnitude: Vec<T>,
    pub normalized: Vec<T>,
    /// Product of all references divided out of `magnitude`.
    pub reference: T,
}

impl<T: Real> FrameSeries<T> {
    pub fn new(magnitude: Vec<T>) -> Self {
        Self { normalized: magnitude.clone(), magnitude, reference: T::one() }
    }

    pub fn len(&self) -> usize {
        self.magnitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitude.is_empty()
    }

    /// Mean of the last `n` normalized values.
    pub fn tail_mean(&self, n: usize) -> T {
        let n = n.clamp(1, self.normalized.len().max(1));
        let tail = &self.normalized[self.normalized.len().saturating_sub(n)..];
        tail.iter().copied().sum::<T>() / T::from_usize_lossy(tail.len())
    }
}

/// Mean `|s|` per frame; every frame must hold exactly `spokes_per_frame`
/// samples.
pub fn frame_average<T: Real>(samples: &[SignalSample<T>], spokes_per_frame: usize) -> Result<FrameSeries<T>> {
    if spokes_per_frame == 0 {
        return Err(Error::invalid("spokes_per_frame", "must be positive"));
    }
    let frames = samples.iter().map(|s| s.frame + 1).max().unwrap_or(0);
    let mut sum = vec![T::zero(); frames];
    let mut count = vec![0usize; frames];
    for s in samples {
        sum[s.frame] += s.value.norm();
        count[s.frame] += 1;
    }
    for (frame, &got) in count.iter().enumerate() {
        if got != spokes_per_frame {
            return Err(Error::RaggedFrames { frame, got, expected: spokes_per_frame });
        }
    }
    let k = T::from_usize_lossy(spokes_per_frame);
    Ok(FrameSeries::new(sum.into_iter().map(|s| s / k).collect()))
}

/// Normalization reference.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a, T> {
    /// Mean of the last `n` frames of the series itself.
    LastN(usize),
    /// Largest last-`n` plateau among the given series.
    Brightest {
        series: &'a [FrameSeries<T>],
        last: usize,
    },
    External(T),
}

pub fn resolve_reference<T: Real>(series: &FrameSeries<T>, reference: Reference<'_, T>) -> T {
    match reference {
        Reference::LastN(n) => series.tail_mean(n),
        Reference::Brightest { series: all, last } => {
            all.iter().map(|s| s.tail_mean(last)).fold(T::neg_infinity(), T::max)
        }
        Reference::External(v) => v,
    }
}

/// Divides the series by the resolved reference.
pub fn normalize<T: Real>(series: &FrameSeries<T>, reference: Reference<'_, T>) -> Result<FrameSeries<T>> {
    let r = resolve_reference(series, reference);
    if !(r.is_finite() && r != T::zero()) {
        return Err(Error::ZeroReference);
    }
    Ok(FrameSeries {
        magnitude: series.magnitude.clone(),
        normalized: series.normalized.iter().map(|&v| v / r).collect(),
        reference: series.reference * r,
    })
}

/// CSV with columns `frame,magnitude,normalized_magnitude`.
pub fn write_frame_csv<T: Real, W: Write>(series: &FrameSeries<T>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "frame,magnitude,normalized_magnitude")?;
    for (i, (m, n)) in series.magnitude.iter().zip(&series.normalized).enumerate() {
        writeln!(w, "{i},{:e},{:e}", m.to_f64_lossy(), n.to_f64_lossy())?;
    }
    Ok(())
}

/// CSV with columns `t,re,im,spoke,frame`.
pub fn write_sample_csv<T: Real, W: Write>(samples: &[SignalSample<T>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,re,im,spoke,frame")?;
    for s in samples {
        writeln!(
            w,
            "{:e},{:e},{:e},{},{}",
            s.t.to_f64_lossy(),
            s.value.re.to_f64_lossy(),
            s.value.im.to_f64_lossy(),
            s.spoke,
            s.frame
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_dg::BoxMesh;
    use crate::physics::Vec3;

    fn unit_cube(k: usize) -> DgSpace<f64> {
        DgSpace::new(BoxMesh::cuboid([0.0; 3], [1.0; 3], [2, 3, 2]).unwrap(), k)
    }

    #[test]
    fn uniform_transverse_over_unit_volume() {
        let space = unit_cube(1);
        let s = DgState::uniform(&space, Vec3::new(1.0, 0.0, 0.3));
        let v = integrate_signal(&space, &s, &SignalRegion::everywhere()).unwrap();
        assert!((v.re - 1.0).abs() < 1e-14 && v.im.abs() < 1e-14);
    }

    #[test]
    fn odd_profile_cancels() {
        let space = unit_cube(2);
        let s = DgState::project(&space, |r| Vec3::new(r[0] - 0.5, 0.5 - r[0], 0.0));
        let v = integrate_signal(&space, &s, &SignalRegion::everywhere()).unwrap();
        assert!(v.norm() < 1e-14);
    }

    #[test]
    fn partial_cells_are_exact() {
        let space = unit_cube(2);
        let s = DgState::project(&space, |r| Vec3::new(r[2] * r[2], r[0], 0.0));
        let region = SignalRegion::new([0.1, 0.0, 0.2], [0.7, 1.0, 0.9]);
        let v = integrate_signal(&space, &s, &region).unwrap();
        let want_re = 0.6 * (0.9f64.powi(3) - 0.2f64.powi(3)) / 3.0;
        let want_im = 0.7 * (0.49 - 0.01) / 2.0;
        assert!((v.re - want_re).abs() < 1e-14 && (v.im - want_im).abs() < 1e-14);
    }

    #[test]
    fn empty_region_is_an_error() {
        let space = unit_cube(0);
        let s = DgState::zeros(&space);
        let far = SignalRegion::new([2.0; 3], [3.0; 3]);
        assert_eq!(integrate_signal(&space, &s, &far), Err(Error::EmptyRegion));
    }

    #[test]
    fn zero_kspace_phase_matches_plain_signal() {
        let space = unit_cube(1);
        let s = DgState::project(&space, |r| Vec3::new(r[1], 1.0 - r[2], 0.0));
        let region = SignalRegion::everywhere();
        let a = integrate_signal(&space, &s, &region).unwrap();
        let b = integrate_signal_with_phase(&space, &s, &region, Some((0.0, 0.0))).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    fn sample(mag: f64, frame: usize, spoke: usize) -> SignalSample<f64> {
        SignalSample { t: 0.0, value: Complex::new(0.0, mag), spoke, frame }
    }

    #[test]
    fn frames_and_normalization() {
        let s = vec![sample(1.0, 0, 0), sample(2.0, 0, 1), sample(3.0, 0, 2)];
        let f = frame_average(&s, 3).unwrap();
        assert_eq!(f.magnitude, vec![2.0]);
        assert_eq!(frame_average(&s, 2).unwrap_err(), Error::RaggedFrames { frame: 0, got: 3, expected: 2 });

        let c = FrameSeries::new(vec![0.4f64; 30]);
        let n = normalize(&c, Reference::LastN(20)).unwrap();
        assert!(n.normalized.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(normalize(&n, Reference::External(1.0)).unwrap(), n);
        assert_eq!(normalize(&c, Reference::External(0.0)), Err(Error::ZeroReference));

        let bright = FrameSeries::new(vec![0.9, 0.6, 0.5]);
        let dim = FrameSeries::new(vec![0.5, 0.3, 0.2]);
        let both = [bright.clone(), dim.clone()];
        let r = Reference::Brightest { series: &both, last: 1 };
        assert_eq!(*normalize(&bright, r).unwrap().normalized.last().unwrap(), 1.0);
        assert!(*normalize(&dim, r).unwrap().normalized.last().unwrap() < 1.0);
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_frame_csv(&FrameSeries::new(vec![1.0]), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame,magnitude,normalized_magnitude\n0,1e0,1e0\n");
        let mut buf = Vec::new();
        write_sample_csv(&[sample(2.0, 1, 4)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,re,im,spoke,frame\n0e0,0e0,2e0,4,1\n");
    }
}
