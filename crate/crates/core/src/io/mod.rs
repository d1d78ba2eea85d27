//! File formats: PFM and 16-bit PNG depth, PNG images, pose and intrinsics text
//! files, PGM heatmaps and sequence manifests.

mod manifest;
mod pfm;
mod raster;
mod text;

pub use manifest::{
    format_manifest, load_manifest, parse_manifest, read_depth, read_image, read_manifest, save_sequence,
    write_manifest, FrameRecord, Manifest, MANIFEST_HEADER,
};
pub use pfm::{
    decode_pfm, encode_pfm, read_pfm, read_pfm_depth, read_pfm_image, write_pfm, write_pfm_depth, write_pfm_image,
    PfmData,
};
pub use raster::{read_depth_png16, read_image_png, write_depth_png16, write_image_png, write_pgm, PNG16_DEPTH_DIVISOR};
pub use text::{
    format_intrinsics, format_poses, parse_intrinsics, parse_poses, read_intrinsics, read_poses, write_intrinsics,
    write_poses, POSE_REJECT_TOLERANCE,
};

use std::path::Path;

use crate::error::{Error, Result};

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
