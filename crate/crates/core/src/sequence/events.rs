//! Plain-text event list.
//!
//! One event per line, whitespace separated:
//!
//! ```text
//! <start s> <duration s> <type> <axis> [key=value ...]
//! ```
//!
//! Types:
//! - `meta`: `spoiling=none|ideal|rf-random`, `seed=<u64>`, `spokes_per_frame=<n>`
//! - `rf`: `shape=hard|sinc`, `bandwidth=<Hz>` (sinc), `amplitude=<T>`,
//!   `nominal=<T>`, `flip=<rad>`, `phase=<rad>`
//! - `grad`: axis `x|y|z`, `ramp=<s>`, `flat=<s>`, `amplitude=<T/m>`; duration covers the whole lobe
//! - `rep`: one repetition, `angle=<rad>`, optional `readout=<start>:<end>`
//! - `te`: echo marker (duration 0), matched to repetitions in order
//!
//! Axis is `-` when it does not apply. Blank lines and `#` comments are ignored.
//! Numbers are written in shortest round-trip form, so a write/read cycle
//! reproduces an f64 timeline exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::num::Real;

use super::rf::{RfPulse, RfShape};
use super::timeline::{GradientLobe, Repetition, RfEvent, SequenceTimeline, Spoiling};
use super::waveform::Trapezoid;

fn num<T: Real>(v: T) -> String {
    format!("{:e}", v.to_f64_lossy())
}

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn write_event_list<T: Real>(tl: &SequenceTimeline<T>) -> String {
    let mut out = String::from("# start duration type axis params\n");
    let (sp, seed) = match tl.spoiling() {
        Spoiling::None => ("none", None),
        Spoiling::Ideal => ("ideal", None),
        Spoiling::RfRandom { seed } => ("rf-random", Some(seed)),
    };
    let _ = write!(out, "0 0 meta - spoiling={sp} spokes_per_frame={}", tl.spokes_per_frame());
    if let Some(s) = seed {
        let _ = write!(out, " seed={s}");
    }
    out.push('\n');
    for e in tl.rf_events() {
        let p = &e.pulse;
        let shape = match p.shape {
            RfShape::Hard => "shape=hard".to_string(),
            RfShape::BlackmanSinc { bandwidth } => format!("shape=sinc bandwidth={}", num(bandwidth)),
        };
        let _ = writeln!(
            out,
            "{} {} rf - {shape} amplitude={} nominal={} flip={} phase={}",
            num(e.start),
            num(p.duration),
            num(p.amplitude),
            num(p.nominal_amplitude),
            num(p.flip),
            num(e.phase)
        );
    }
    for l in tl.lobes() {
        let s = &l.shape;
        let _ = writeln!(
            out,
            "{} {} grad {} ramp={} flat={} amplitude={}",
            num(s.start),
            num(s.end() - s.start),
            AXES[l.axis],
            num(s.ramp),
            num(s.flat),
            num(s.amplitude)
        );
    }
    for r in tl.repetitions() {
        let _ = write!(out, "{} {} rep - angle={}", num(r.start), num(r.end - r.start), num(r.angle));
        if let Some((a, b)) = r.readout {
            let _ = write!(out, " readout={}:{}", num(a), num(b));
        }
        out.push('\n');
        let _ = writeln!(out, "{} 0 te -", num(r.te));
    }
    out
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("event list line {line}: {msg}"))
}

pub fn parse_event_list<T: Real>(text: &str) -> Result<SequenceTimeline<T>> {
    let mut spoiling = Spoiling::Ideal;
    let mut spokes = 1usize;
    let mut rf = Vec::new();
    let mut lobes = Vec::new();
    let mut reps: Vec<Repetition<T>> = Vec::new();
    let mut tes: Vec<T> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let mut field = |name: &str| tok.next().ok_or_else(|| parse_err(ln, format!("missing {name}")));
        let fnum = |s: &str, what: &str| -> Result<T> {
            s.parse::<f64>().map(T::lit).map_err(|_| parse_err(ln, format!("bad number for {what}: `{s}`")))
        };
        let start = fnum(field("start")?, "start")?;
        let duration = fnum(field("duration")?, "duration")?;
        let kind = field("type")?.to_string();
        let axis = field("axis")?.to_string();
        let mut kv = std::collections::HashMap::new();
        for t in tok {
            let (k, v) = t.split_once('=').ok_or_else(|| parse_err(ln, format!("expected key=value, got `{t}`")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| parse_err(ln, format!("missing `{k}`")));
        match kind.as_str() {
            "meta" => {
                if let Some(s) = kv.get("spokes_per_frame") {
                    spokes = s.parse().map_err(|_| parse_err(ln, "bad spokes_per_frame"))?;
                }
                if let Some(s) = kv.get("spoiling") {
                    spoiling = match s.as_str() {
                        "none" => Spoiling::None,
                        "ideal" => Spoiling::Ideal,
                        "rf-random" => {
                            let seed = get("seed")?.parse().map_err(|_| parse_err(ln, "bad seed"))?;
                            Spoiling::RfRandom { seed }
                        }
                        other => return Err(parse_err(ln, format!("unknown spoiling `{other}`"))),
                    };
                }
            }
            "rf" => {
                let shape = match get("shape")? {
                    "hard" => RfShape::Hard,
                    "sinc" => RfShape::BlackmanSinc { bandwidth: fnum(get("bandwidth")?, "bandwidth")? },
                    other => return Err(parse_err(ln, format!("unknown rf shape `{other}`"))),
                };
                let pulse = RfPulse {
                    shape,
                    duration,
                    amplitude: fnum(get("amplitude")?, "amplitude")?,
                    nominal_amplitude: fnum(get("nominal")?, "nominal")?,
                    flip: fnum(get("flip")?, "flip")?,
                };
                rf.push(RfEvent { start, pulse, phase: fnum(get("phase")?, "phase")? });
            }
            "grad" => {
                let a = AXES
                    .iter()
                    .position(|&x| x == axis)
                    .ok_or_else(|| parse_err(ln, format!("unknown axis `{axis}`")))?;
                let ramp = fnum(get("ramp")?, "ramp")?;
                // the flat time is stored so lobe ends are recomputed bit-identically
                let flat = match kv.get("flat") {
                    Some(f) => fnum(f, "flat")?,
                    None => duration - ramp - ramp,
                };
                lobes.push(GradientLobe {
                    axis: a,
                    shape: Trapezoid { start, ramp, flat, amplitude: fnum(get("amplitude")?, "amplitude")? },
                });
            }
            "rep" => {
                let readout = match kv.get("readout") {
                    None => None,
                    Some(s) => {
                        let (a, b) = s.split_once(':').ok_or_else(|| parse_err(ln, "readout must be start:end"))?;
                        Some((fnum(a, "readout")?, fnum(b, "readout")?))
                    }
                };
                reps.push(Repetition {
                    start,
                    end: start + duration,
                    te: T::nan(),
                    angle: fnum(get("angle")?, "angle")?,
                    readout,
                });
            }
            "te" => tes.push(start),
            other => return Err(parse_err(ln, format!("unknown event type `{other}`"))),
        }
    }
    if tes.len() != reps.len() {
        return Err(Error::Config(format!("event list has {} repetitions but {} TE markers", reps.len(), tes.len())));
    }
    for (r, te) in reps.iter_mut().zip(tes) {
        r.te = te;
    }
    SequenceTimeline::new(rf, lobes, reps, spoiling, spokes)
}
