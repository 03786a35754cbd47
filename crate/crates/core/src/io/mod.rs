//! Files in and out: CSV data, time tags, configuration and reports.

mod config;
mod data;
mod report;

pub use config::{Config, QuadratureChoice, OUTPUT_DIR_ENV};
pub use data::{
    load_correlation_csv, load_ple_scans, load_time_tags, write_correlation_csv, write_time_tags_binary,
    write_time_tags_csv, TIME_TAG_MAGIC,
};
pub use report::{
    plot_csv, plot_svg, render_report, write_plot_csv, write_report, write_text, Envelope, SCHEMA_ID, SCHEMA_VERSION,
};
