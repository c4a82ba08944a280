//! Persistence: the cube container, network checkpoints, plain-text
//! operator matrices, experiment configs, PPM image export, and JSON run
//! summaries. All formats are little-endian and byte-identical across
//! platforms for identical inputs.

mod checkpoint;
mod config;
mod cube_file;
mod image;
mod text;

pub use checkpoint::{load_params, save_params};
pub use config::ExperimentConfig;
pub use cube_file::{load_cube, save_cube};
pub use image::{export_error_map, export_kernel_image, export_pseudocolor, export_srf_image};
pub use text::{load_kernel_text, load_srf_text, save_kernel_text, save_srf_text};
