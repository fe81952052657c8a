//! Observer-gain and controller synthesis through linear matrix inequalities.

pub mod lmi;
pub mod sdp;
pub mod design;
pub mod sweep;
