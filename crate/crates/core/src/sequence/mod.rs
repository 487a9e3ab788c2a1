//! Pulse-sequence timelines and the effective field they produce.

pub mod events;
pub mod flash;
pub mod rf;
pub mod timeline;
pub mod waveform;

pub use events::{parse_event_list, write_event_list};
pub use flash::{
    build_flash_radial, build_slice_profile, spoke_angle, Excitation, FlashParams, SliceProfileParams, SpokeOrder,
};
pub use rf::{blackman_sinc_pulse, hard_pulse, RfPulse, RfShape};
pub use timeline::{
    eval_field, kspace_trajectory, ConstantField, FieldSource, GradientLobe, Repetition, RfEvent, SequenceTimeline,
    Spoiling,
};
pub use waveform::{waveform_from_trapezoids, Interpolation, Trapezoid, Waveform};
