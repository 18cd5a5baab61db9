//! Front end for the `aam` machines: configuration, dispatch and reports.

pub mod config;
pub mod report;
pub mod run;

pub use config::{Format, Machine, RunConfig};
pub use report::Report;
pub use run::{run, RunError};

/// Exit status for a completed run: stuck concrete machines report 3.
pub fn exit_code(r: &Report) -> i32 {
    match &r.summary.outcome {
        Some(o) if o.starts_with("Stuck") => 3,
        _ => 0,
    }
}

pub fn render(r: &Report, format: Format) -> String {
    match format {
        Format::Text => r.to_text(),
        Format::Json => r.to_json(),
        Format::Dot => r.to_dot(),
    }
}
