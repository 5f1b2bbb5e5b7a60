//! Self-verification suites behind the `check` command.
//!
//! Each suite runs the module invariants at desk scale and reports one
//! outcome per check with its wall time.

use std::time::Instant;

use crate::encoder::{self, EncoderConfig, EncoderWeights, VisualTokens};
use crate::extension;
use crate::manifest::{self, Fraction, Stage};
use crate::mining::{self, MiningWeights};
use crate::protocol;
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Grad,
    Shapes,
    Extension,
    Protocol,
    Manifest,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Suite> {
        Some(match s {
            "oracle" => Suite::Oracle,
            "grad" => Suite::Grad,
            "shapes" => Suite::Shapes,
            "extension" => Suite::Extension,
            "protocol" => Suite::Protocol,
            "manifest" => Suite::Manifest,
            "all" => Suite::All,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub millis: u128,
}

type CheckFn = fn() -> Result<String, String>;

fn run_checks(checks: &[(&str, CheckFn)]) -> Vec<CheckOutcome> {
    checks
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let result = f();
            CheckOutcome {
                name: name.to_string(),
                passed: result.is_ok(),
                detail: result.unwrap_or_else(|e| e),
                millis: start.elapsed().as_millis(),
            }
        })
        .collect()
}

pub fn run_suite(suite: Suite) -> Vec<CheckOutcome> {
    match suite {
        Suite::Oracle => run_checks(&[
            ("oracle/mine-vs-reference-f64-bitwise", check_oracle_f64),
            ("oracle/mine-f32-within-1e-6", check_oracle_f32),
        ]),
        Suite::Grad => run_checks(&[
            ("grad/finite-differences", check_gradients),
            ("grad/zero-upstream", check_grad_zero_upstream),
        ]),
        Suite::Shapes => run_checks(&[
            ("shapes/config-sweep-identities", check_shape_sweep),
            (
                "shapes/token-count-invariance",
                check_token_count_invariance,
            ),
        ]),
        Suite::Extension => run_checks(&[
            ("extension/map-coverage-bijections", check_extension_maps),
            ("extension/window-ratio-and-5n", check_extension_counts),
            ("extension/locality", check_locality),
        ]),
        Suite::Protocol => run_checks(&[
            ("protocol/emit-parse-round-trip", check_protocol_round_trip),
            ("protocol/grammar-errors", check_protocol_errors),
            ("protocol/ocr-suffix-pattern", check_ocr_pattern),
        ]),
        Suite::Manifest => run_checks(&[
            ("manifest/published-aggregates", check_manifest_aggregates),
            ("manifest/scaling-preserves-totals", check_manifest_scaling),
        ]),
        Suite::All => {
            let mut all = Vec::new();
            for s in [
                Suite::Shapes,
                Suite::Oracle,
                Suite::Grad,
                Suite::Extension,
                Suite::Protocol,
                Suite::Manifest,
            ] {
                all.extend(run_suite(s));
            }
            all
        }
    }
}

fn check_oracle_f64() -> Result<String, String> {
    let mut cases = 0usize;
    for &n in &[1usize, 4, 16, 64] {
        for &m in &[1usize, 2, 4] {
            for seed in 0..3u64 {
                for &c in &[2usize, 8, 16] {
                    let key = (n as u64) << 32 | (m as u64) << 16 | (c as u64) << 8 | seed;
                    let (q, k, v, w) =
                        mining::random_instance(n, m * m, c, key).map_err(|e| e.to_string())?;
                    let a = mining::mine(&q, &k, &v, &w).map_err(|e| e.to_string())?;
                    let b = mining::mine_reference(&q, &k, &v, &w).map_err(|e| e.to_string())?;
                    if a.data != b.data {
                        return Err(format!("mismatch at N={n} M={m} C={c} seed={seed}"));
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} instances bit-identical"))
}

fn check_oracle_f32() -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let (q, k, v, w) =
            mining::random_instance(8, 4, 8, 1000 + seed).map_err(|e| e.to_string())?;
        let a = mining::mine_f32(&q, &k, &v, &w).map_err(|e| e.to_string())?;
        let b = mining::mine_reference(&q, &k, &v, &w).map_err(|e| e.to_string())?;
        for (x, y) in a.data.data().iter().zip(b.data.data().iter()) {
            worst = worst.max((x - y).abs());
        }
    }
    if worst <= 1e-6 {
        Ok(format!("max |f32 - f64| = {worst:.3e}"))
    } else {
        Err(format!("f32 deviation {worst:.3e} exceeds 1e-6"))
    }
}

fn check_gradients() -> Result<String, String> {
    let mut checked = 0usize;
    for seed in 0..5u64 {
        let (q, k, v, w) =
            mining::random_instance(4, 4, 4, 2000 + seed).map_err(|e| e.to_string())?;
        let mut rng = Rng::derive(seed, "grad-upstream");
        let upstream =
            Tensor::random_uniform(vec![4, 4], 1.0, &mut rng).map_err(|e| e.to_string())?;
        let g = mining::mine_grad(&q, &k, &v, &w, &upstream).map_err(|e| e.to_string())?;

        let loss = |q: &VisualTokens, k: &Tensor, v: &Tensor, w: &MiningWeights| -> f64 {
            let out = mining::mine_reference(q, k, v, w).expect("shapes fixed");
            out.data
                .data()
                .iter()
                .zip(upstream.data().iter())
                .map(|(o, u)| o * u)
                .sum()
        };

        // Spot-check a handful of coordinates in every gradient tensor.
        let h = 1e-5;
        let mut check = |name: &str,
                         analytic: &Tensor,
                         perturb: &mut dyn FnMut(usize, f64) -> f64|
         -> Result<(), String> {
            let len = analytic.len();
            let probes = [0, len / 2, len - 1];
            for &i in probes.iter() {
                let plus = perturb(i, h);
                let minus = perturb(i, -h);
                let fd = (plus - minus) / (2.0 * h);
                let a = analytic.data()[i];
                let abs = (fd - a).abs();
                let rel = abs / fd.abs().max(a.abs()).max(1e-12);
                if abs > 1e-6 && rel > 1e-4 {
                    return Err(format!("{name}[{i}]: fd={fd:.9e} analytic={a:.9e}"));
                }
                checked += 1;
            }
            Ok(())
        };

        macro_rules! fd_weight {
            ($field:ident, $grad:expr, $name:expr) => {{
                let mut f = |i: usize, d: f64| {
                    let mut wp = w.clone();
                    wp.$field.data_mut()[i] += d;
                    loss(&q, &k, &v, &wp)
                };
                check($name, $grad, &mut f)?;
            }};
        }
        fd_weight!(phi_q, &g.d_phi_q, "phiQ");
        fd_weight!(phi_k, &g.d_phi_k, "phiK");
        fd_weight!(phi_v, &g.d_phi_v, "phiV");
        fd_weight!(mlp_w1, &g.d_mlp_w1, "mlpW1");
        fd_weight!(mlp_b1, &g.d_mlp_b1, "mlpB1");
        fd_weight!(mlp_w2, &g.d_mlp_w2, "mlpW2");
        fd_weight!(mlp_b2, &g.d_mlp_b2, "mlpB2");

        let mut f = |i: usize, d: f64| {
            let mut qp = q.clone();
            qp.data.data_mut()[i] += d;
            loss(&qp, &k, &v, &w)
        };
        check("Q", &g.d_q, &mut f)?;
        let mut f = |i: usize, d: f64| {
            let mut kp = k.clone();
            kp.data_mut()[i] += d;
            loss(&q, &kp, &v, &w)
        };
        check("K", &g.d_k, &mut f)?;
        let mut f = |i: usize, d: f64| {
            let mut vp = v.clone();
            vp.data_mut()[i] += d;
            loss(&q, &k, &vp, &w)
        };
        check("V", &g.d_v, &mut f)?;
    }
    Ok(format!("{checked} coordinates within tolerance"))
}

fn check_grad_zero_upstream() -> Result<String, String> {
    let (q, k, v, w) = mining::random_instance(3, 4, 3, 5).map_err(|e| e.to_string())?;
    let upstream = Tensor::zeros(vec![3, 3]).map_err(|e| e.to_string())?;
    let g = mining::mine_grad(&q, &k, &v, &w, &upstream).map_err(|e| e.to_string())?;
    let all_zero = [
        &g.d_q,
        &g.d_k,
        &g.d_v,
        &g.d_phi_q,
        &g.d_phi_k,
        &g.d_phi_v,
        &g.d_mlp_w1,
        &g.d_mlp_b1,
        &g.d_mlp_w2,
        &g.d_mlp_b2,
    ]
    .iter()
    .all(|t| t.data().iter().all(|&x| x == 0.0));
    if all_zero {
        Ok("all gradients zero".into())
    } else {
        Err("nonzero gradient from zero upstream".into())
    }
}

fn sweep_configs() -> Vec<EncoderConfig> {
    let mut configs = Vec::new();
    for &lr in &[56usize, 112, 336] {
        for &hr in &[2 * lr, 4 * lr] {
            configs.push(EncoderConfig {
                hr_size: hr,
                lr_size: lr,
                patch_size: 14,
                channels: 8,
                hr_stage_channels: vec![4, 6, 8],
                seed: 0,
            });
        }
    }
    configs
}

fn check_shape_sweep() -> Result<String, String> {
    let mut checked = 0usize;
    let mut configs = sweep_configs();
    configs.push(EncoderConfig::default_geometry());
    for cfg in &configs {
        cfg.validate().map_err(|e| e.to_string())?;
        let n = cfg.token_count();
        let m = cfg.window_size();
        let s = cfg.feature_side();
        if s * s != n * m * m {
            return Err(format!(
                "shape law broken: S²={} vs N·M²={} for lr {} hr {}",
                s * s,
                n * m * m,
                cfg.lr_size,
                cfg.hr_size
            ));
        }
        if s != cfg.hr_size / 4 {
            return Err("feature side is not hr/4".into());
        }
        checked += 1;
    }
    // The published default additionally pins the exact numbers.
    let d = EncoderConfig::default_geometry();
    if d.token_count() != 576 || d.feature_side() != 192 || d.window_size() != 8 {
        return Err("published geometry (N=576, S=192, M=8) not reproduced".into());
    }
    Ok(format!("{checked} configs satisfy S² == N·M²"))
}

fn check_token_count_invariance() -> Result<String, String> {
    for &hr in &[112usize, 224, 448] {
        let cfg = EncoderConfig {
            hr_size: hr,
            lr_size: 56,
            patch_size: 14,
            channels: 8,
            hr_stage_channels: vec![4, 6, 8],
            seed: 2,
        };
        let w = EncoderWeights::seeded(&cfg).map_err(|e| e.to_string())?;
        let img = crate::image::synthetic_noise(hr, 1);
        let lr = encoder::derive_lr(&img, &cfg).map_err(|e| e.to_string())?;
        let tokens = encoder::encode_lr(&lr, &cfg, &w).map_err(|e| e.to_string())?;
        let grid = encoder::encode_hr(&img, &cfg, &w).map_err(|e| e.to_string())?;
        let map = mining::build_subregion_map(cfg.grid_side(), cfg.window_size());
        let (k, v) = mining::gather_kv(&grid, &map).map_err(|e| e.to_string())?;
        let mw = MiningWeights::seeded(cfg.channels, 7).map_err(|e| e.to_string())?;
        let out = mining::mine(&tokens, &k, &v, &mw).map_err(|e| e.to_string())?;
        if out.count != 16 {
            return Err(format!("hr {hr}: token count {} != 16", out.count));
        }
    }
    Ok("16 tokens at hr 112/224/448".into())
}

fn check_extension_maps() -> Result<String, String> {
    for (lr, hr) in [(28usize, 64usize), (56, 224), (336, 1536)] {
        let cfg = EncoderConfig {
            hr_size: hr,
            lr_size: lr,
            patch_size: 14,
            channels: 4,
            hr_stage_channels: vec![2, 3, 4],
            seed: 0,
        };
        let maps = extension::build_view_maps(&cfg).map_err(|e| e.to_string())?;
        let s = cfg.feature_side();
        let cover = |maps: &[&mining::SubregionMap]| -> Result<(), String> {
            let mut seen = vec![false; s * s];
            for map in maps {
                for cells in &map.entries {
                    for &cell in cells {
                        if seen[cell] {
                            return Err(format!("cell {cell} claimed twice at lr {lr} hr {hr}"));
                        }
                        seen[cell] = true;
                    }
                }
            }
            if seen.iter().all(|&x| x) {
                Ok(())
            } else {
                Err(format!("coverage gap at lr {lr} hr {hr}"))
            }
        };
        cover(&[&maps.global])?;
        cover(&[
            &maps.quadrants[0],
            &maps.quadrants[1],
            &maps.quadrants[2],
            &maps.quadrants[3],
        ])?;
        if maps.global_window() != 2 * maps.quadrant_window() {
            return Err("global window is not twice the quadrant window".into());
        }
    }
    Ok("bijection and disjointness hold up to S = 384".into())
}

fn check_extension_counts() -> Result<String, String> {
    let cfg = EncoderConfig {
        hr_size: 224,
        lr_size: 56,
        patch_size: 14,
        channels: 8,
        hr_stage_channels: vec![4, 6, 8],
        seed: 4,
    };
    let img = crate::image::synthetic_noise(cfg.hr_size, 8);
    let enc = EncoderWeights::seeded(&cfg).map_err(|e| e.to_string())?;
    let batch = extension::build_extended_batch(&img, &cfg).map_err(|e| e.to_string())?;
    let mut all = Vec::new();
    for view in &batch.views {
        let t = encoder::encode_lr(view, &cfg, &enc).map_err(|e| e.to_string())?;
        all.extend_from_slice(t.data.data());
    }
    let tokens = VisualTokens::new(
        Tensor::new(vec![5 * cfg.token_count(), cfg.channels], all).map_err(|e| e.to_string())?,
        5,
    )
    .map_err(|e| e.to_string())?;
    let grid = encoder::encode_hr(&img, &cfg, &enc).map_err(|e| e.to_string())?;
    let maps = extension::build_view_maps(&cfg).map_err(|e| e.to_string())?;
    let w = MiningWeights::seeded(cfg.channels, 4).map_err(|e| e.to_string())?;
    let out = extension::mine_extended(&tokens, &grid, &maps, &w).map_err(|e| e.to_string())?;
    if out.count != 5 * cfg.token_count() {
        return Err(format!("extended output count {}", out.count));
    }

    // Per-view composition equality.
    for view in 0..5 {
        let slice = tokens.view_slice(view).map_err(|e| e.to_string())?;
        let map = if view == 0 {
            &maps.global
        } else {
            &maps.quadrants[view - 1]
        };
        let (k, v) = mining::gather_kv(&grid, map).map_err(|e| e.to_string())?;
        let independent = mining::mine(&slice, &k, &v, &w).map_err(|e| e.to_string())?;
        if independent.data != out.view_slice(view).map_err(|e| e.to_string())?.data {
            return Err(format!("view {view} diverges from independent mining"));
        }
    }
    Ok(format!(
        "5N = {} tokens, per-view composition holds",
        out.count
    ))
}

fn check_locality() -> Result<String, String> {
    let mut rng = Rng::new(31);
    for trial in 0..10u64 {
        let (n_side, m) = (2usize, 2usize);
        let s = n_side * m;
        let c = 3;
        let grid_t =
            Tensor::random_uniform(vec![s, s, c], 1.0, &mut rng).map_err(|e| e.to_string())?;
        let grid = crate::encoder::FeatureGrid::new(grid_t, m).map_err(|e| e.to_string())?;
        let map = mining::build_subregion_map(n_side, m);
        let q = VisualTokens::new(
            Tensor::random_uniform(vec![n_side * n_side, c], 1.0, &mut rng)
                .map_err(|e| e.to_string())?,
            1,
        )
        .map_err(|e| e.to_string())?;
        let w = MiningWeights::seeded(c, trial).map_err(|e| e.to_string())?;

        let (k, v) = mining::gather_kv(&grid, &map).map_err(|e| e.to_string())?;
        let base = mining::mine(&q, &k, &v, &w).map_err(|e| e.to_string())?;

        let target = (trial as usize) % map.entries.len();
        // Poke a cell owned by a different patch.
        let foreign_cell = map.entries[(target + 1) % map.entries.len()][0];
        let mut poked = grid.clone();
        poked.data.data_mut()[foreign_cell * c] += 2.0;
        let (k2, v2) = mining::gather_kv(&poked, &map).map_err(|e| e.to_string())?;
        let out = mining::mine(&q, &k2, &v2, &w).map_err(|e| e.to_string())?;

        if out.data.row(target) != base.data.row(target) {
            return Err(format!("trial {trial}: token {target} changed"));
        }
        if out.data == base.data {
            return Err(format!("trial {trial}: perturbation had no effect at all"));
        }
    }
    Ok("10 trials, foreign perturbations never leak".into())
}

fn check_protocol_round_trip() -> Result<String, String> {
    let mut rng = Rng::new(77);
    for _ in 0..200 {
        let len = (rng.next_u64() % 40) as usize;
        let caption: String = (0..len)
            .map(|_| {
                let alphabet = b"abcdefghijklmnopqrstuvwxyz 0123456789,.";
                alphabet[(rng.next_u64() as usize) % alphabet.len()] as char
            })
            .collect();
        let emitted = protocol::emit_generation("Sure.", &caption).map_err(|e| e.to_string())?;
        let parsed = protocol::parse_generation(&emitted).map_err(|e| e.to_string())?;
        if parsed.directive.as_deref() != Some(caption.as_str()) {
            return Err(format!("caption {caption:?} did not round-trip"));
        }
        if parsed.text.trim_end() != "Sure." {
            return Err(format!("reply corrupted: {:?}", parsed.text));
        }
    }
    Ok("200 fuzzed captions round-trip".into())
}

fn check_protocol_errors() -> Result<String, String> {
    use protocol::ProtocolError::*;
    if !matches!(
        protocol::parse_generation("<GEN> nothing"),
        Err(MalformedDirective { .. })
    ) {
        return Err("missing-block case not rejected".into());
    }
    if !matches!(
        protocol::parse_generation("<GEN> <h>open"),
        Err(UnterminatedCaption { .. })
    ) {
        return Err("unterminated case not rejected".into());
    }
    if !matches!(
        protocol::emit_generation("r", "a<b"),
        Err(CaptionCharset { .. })
    ) {
        return Err("caption charset not enforced".into());
    }
    Ok("all grammar errors surface".into())
}

fn check_ocr_pattern() -> Result<String, String> {
    let mut rng = Rng::new(13);
    for _ in 0..100 {
        let count = 1 + (rng.next_u64() % 5) as usize;
        let tokens: Vec<String> = (0..count)
            .map(|i| format!("tok{}-{}", i, rng.next_u64() % 1000))
            .collect();
        let out = protocol::append_ocr_tokens("convo", &tokens).map_err(|e| e.to_string())?;
        let suffix = &out["convo".len()..];
        // Pattern: \nReference OCR token:[^,\n]+(,[^,\n]+)*
        let body = suffix
            .strip_prefix("\nReference OCR token:")
            .ok_or("missing prefix")?;
        if body
            .split(',')
            .any(|part| part.is_empty() || part.contains('\n'))
        {
            return Err(format!("malformed suffix {suffix:?}"));
        }
        let back = protocol::OcrAugmentation::parse_suffix(suffix).ok_or("parse-back failed")?;
        if back != tokens {
            return Err("token list did not survive".into());
        }
    }
    Ok("100 fuzzed token lists match the pattern".into())
}

fn check_manifest_aggregates() -> Result<String, String> {
    let m = manifest::build_published_manifest();
    let checks = [
        (m.stage_total(Stage::Pretrain), 1_253_000u64, "pretrain"),
        (m.instruct_total_exclusive(), 1_487_000, "instruct excl"),
        (m.instruct_total_inclusive(), 1_500_000, "instruct incl"),
        (m.stage_total(Stage::Generation), 13_000, "generation"),
    ];
    for (got, want, what) in checks {
        if got != want {
            return Err(format!("{what}: {got} != {want}"));
        }
    }
    let findings = manifest::validate_manifest(&m);
    if findings.len() != 1 || findings[0].kind != manifest::FindingKind::RoundingNote {
        return Err(format!("unexpected findings: {findings:?}"));
    }
    Ok("published aggregates reproduced".into())
}

fn check_manifest_scaling() -> Result<String, String> {
    let m = manifest::build_published_manifest();
    let mut rng = Rng::new(55);
    for trial in 0..100u64 {
        let den = 1 + (rng.next_u64() % 5000);
        let num = 1 + (rng.next_u64() % den);
        let f = Fraction::new(num, den).map_err(|e| e.to_string())?;
        let scaled = manifest::scale_manifest(&m, f, trial).map_err(|e| e.to_string())?;
        for stage in manifest::STAGES {
            let total = m.stage_total(stage) as u128;
            let target = (num as u128 * total * 2 + den as u128) / (den as u128 * 2);
            if scaled.stage_total(stage) as u128 != target {
                return Err(format!("stage {stage} total drifted at factor {f}"));
            }
        }
    }
    Ok("100 random factors preserve stage totals".into())
}
