//! The end-to-end forward pipeline behind the `forward` command.
//!
//! derive_lr → encode_lr → encode_hr → (token extension) → mining, with
//! the mined tokens written to the output directory in the tensor text
//! format and summarized as {N, S, M, tokenCount, checksum}.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{self, EncoderConfig, EncoderWeights, VisualTokens};
use crate::error::{Error, Result};
use crate::extension;
use crate::image;
use crate::mining::{self, MiningWeights};
use crate::tensor::{fnv1a64, Precision, Tensor};

/// Forward-run configuration.
///
/// `encoder.seed` fixes the (frozen) encoder and mining weights; `seed`
/// fixes the synthetic input image. `precision` selects the mining kernel
/// (encoders always run in f64).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub extended: bool,
    pub seed: u64,
    pub precision: Precision,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.extended {
            // Surface both extension rules before any compute.
            if self.encoder.hr_size < 2 * self.encoder.lr_size {
                return Err(Error::config(format!(
                    "token extension requires hrSize ({}) >= 2 x lrSize ({})",
                    self.encoder.hr_size, self.encoder.lr_size
                )));
            }
            let n = self.encoder.grid_side();
            let s = self.encoder.feature_side();
            if !s.is_multiple_of(2 * n) {
                return Err(Error::config(format!(
                    "token extension requires the HR feature side ({s}) to be divisible by 2n ({})",
                    2 * n
                )));
            }
        }
        Ok(())
    }
}

/// Where the forward input image comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Ramp,
    Noise,
}

#[derive(Debug, Clone)]
pub enum ForwardInput {
    /// A decoded image; must match the configured hrSize.
    Image(Tensor),
    Synthetic(SyntheticKind),
}

/// Result record of a forward run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "tokenCount")]
    pub token_count: usize,
    /// FNV-1a 64 over the canonical text rendering, as 16 hex digits.
    pub checksum: String,
}

/// Order-stable digest of a tensor: FNV-1a 64 over the bytes of its
/// tensor-text serialization (rank line, dims line, 18-significant-digit
/// values in row-major order).
pub fn checksum_tensor(t: &Tensor) -> u64 {
    let mut buf = Vec::new();
    crate::tensor::write_tensor(&mut buf, t).expect("writing to memory cannot fail");
    fnv1a64(&buf)
}

/// Run the forward pipeline and write `t_v.txt` (plus the five view dumps
/// in extended mode) under `config.output_dir`.
pub fn run_forward(config: &RunConfig, input: ForwardInput) -> Result<ForwardSummary> {
    config.validate()?;
    let cfg = &config.encoder;

    let img = match input {
        ForwardInput::Image(img) => {
            if img.shape() != [cfg.hr_size, cfg.hr_size, 3] {
                return Err(Error::config(format!(
                    "input image is {:?} but the config wants {side} x {side} x 3",
                    img.shape(),
                    side = cfg.hr_size
                )));
            }
            img
        }
        ForwardInput::Synthetic(SyntheticKind::Ramp) => image::synthetic_ramp(cfg.hr_size),
        ForwardInput::Synthetic(SyntheticKind::Noise) => {
            image::synthetic_noise(cfg.hr_size, config.seed)
        }
    };

    let enc_w = EncoderWeights::seeded(cfg)?;
    let mine_w = MiningWeights::seeded(cfg.channels, cfg.seed)?;
    let grid = encoder::encode_hr(&img, cfg, &enc_w)?;

    let mined = if config.extended {
        let batch = extension::build_extended_batch(&img, cfg)?;
        let mut all = Vec::with_capacity(5 * cfg.token_count() * cfg.channels);
        for view in &batch.views {
            let t = encoder::encode_lr(view, cfg, &enc_w)?;
            all.extend_from_slice(t.data.data());
        }
        let tokens = VisualTokens::new(
            Tensor::new(vec![5 * cfg.token_count(), cfg.channels], all)?,
            5,
        )?;
        let maps = extension::build_view_maps(cfg)?;
        std::fs::create_dir_all(&config.output_dir)?;
        extension::dump_views(&batch, &config.output_dir, "view")?;
        match config.precision {
            Precision::F64 => extension::mine_extended(&tokens, &grid, &maps, &mine_w)?,
            Precision::F32 => extension::mine_extended_f32(&tokens, &grid, &maps, &mine_w)?,
        }
    } else {
        let lr = encoder::derive_lr(&img, cfg)?;
        let tokens = encoder::encode_lr(&lr, cfg, &enc_w)?;
        let map = mining::build_subregion_map(cfg.grid_side(), cfg.window_size());
        let (k, v) = mining::gather_kv(&grid, &map)?;
        match config.precision {
            Precision::F64 => mining::mine(&tokens, &k, &v, &mine_w)?,
            Precision::F32 => mining::mine_f32(&tokens, &k, &v, &mine_w)?,
        }
    };

    std::fs::create_dir_all(&config.output_dir)?;
    let out_path = config.output_dir.join("t_v.txt");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&out_path)?);
    crate::tensor::write_tensor(&mut f, &mined.data)?;

    Ok(ForwardSummary {
        n: cfg.token_count(),
        s: cfg.feature_side(),
        m: cfg.window_size(),
        token_count: mined.count,
        checksum: format!("{:016x}", checksum_tensor(&mined.data)),
    })
}

/// Load a forward input from a PPM path, if given.
pub fn load_input(path: Option<&Path>, synthetic: SyntheticKind) -> Result<ForwardInput> {
    match path {
        Some(p) => Ok(ForwardInput::Image(image::read_ppm_file(p)?)),
        None => Ok(ForwardInput::Synthetic(synthetic)),
    }
}
