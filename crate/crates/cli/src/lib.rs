//! Command-line pipeline around the `csgs` library: synthetic model and data
//! generation, structure learning, weight fitting, KL evaluation and
//! experiment sweeps. All outputs are JSON or CSV documents tagged `csgs-v1`.

pub mod app;
pub mod manifest;
pub mod pipeline;
pub mod sweep;
