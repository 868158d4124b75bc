//! On-disk formats: WAMF arrays, pyramid directories, and plain-text
//! PGM/PPM heatmaps.

mod image;
mod pyramid_dir;
mod wamf;

pub use image::{heat_colormap, render_heatmap, render_pgm, render_ppm, Colormap};
pub use pyramid_dir::{read_pyramid_dir, write_pyramid_dir, BandEntry, PyramidManifest};
pub use wamf::{decode_wamf, encode_wamf, read_wamf, write_wamf};
