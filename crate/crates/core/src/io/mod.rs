//! File formats: field and table CSVs, PGM/PPM heatmaps, JSON helpers.

pub mod csv;
pub mod heatmap;
pub mod json;

pub use self::csv::{GridCsv, TableRow};
pub use heatmap::{render_heatmap, Colormap, HeatmapImage};
