//! patchmine: a dual-resolution visual token mining toolkit.
//!
//! One high-resolution image is encoded twice: a patch-embedding flow over
//! the bilinear-downsampled image yields N query tokens, and a
//! convolutional flow yields a dense feature grid at 1/4 input scale.
//! Each query token then attends over the M x M grid window it owns
//! (patch info mining), enriching itself without changing the token
//! count; an optional five-view extension raises the count to 5N. The
//! crate also carries the generation-trigger / OCR-reference text
//! protocols, the dataset-mixture manifest arithmetic, and verification
//! suites (scalar oracles, finite-difference gradient checks, shape and
//! coverage invariants) for all of it.

pub mod encoder;
pub mod error;
pub mod extension;
pub mod image;
pub mod manifest;
pub mod mining;
pub mod parallel;
pub mod pipeline;
pub mod protocol;
pub mod tensor;
pub mod verify;

pub use encoder::{EncoderConfig, EncoderWeights, FeatureGrid, VisualTokens};
pub use error::{Error, Result};
pub use extension::{build_extended_batch, build_view_maps, mine_extended, ExtendedBatch};
pub use manifest::{build_published_manifest, scale_manifest, validate_manifest, Manifest};
pub use mining::{
    build_subregion_map, gather_kv, mine, mine_grad, mine_reference, MiningWeights, SubregionMap,
};
pub use pipeline::{run_forward, ForwardInput, ForwardSummary, RunConfig};
pub use protocol::{
    append_ocr_tokens, assemble_gpt4_query, emit_generation, parse_generation, ParsedOutput,
    ProtocolError,
};
pub use tensor::{Precision, Rng, Tensor};
