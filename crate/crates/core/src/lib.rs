pub mod bytes;
pub mod isobmff;
pub mod omaf;
pub mod extractor;
pub mod geometry;
pub mod mpd;
pub mod synth;
pub mod session;
pub mod cli;
