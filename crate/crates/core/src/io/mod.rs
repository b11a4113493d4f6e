//! File formats: SPFIELD raw field dumps, CSV tables and `key=value` reports.

mod report;
mod spfield;
mod tables;

pub use report::{parse_report, Report, ToReport};
pub use spfield::{read_spfield, write_spfield, Encoding, SpField};
pub use tables::{profile_header, trace_header, write_profile_csv, write_table, write_trace_csv};
