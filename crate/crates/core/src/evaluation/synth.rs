//! Synthetic project records with known structure.
//!
//! The log defect count follows the reference model
//! `ln D = −5.939 + 0.704·ln FP + 6.011·VAF − 1.480·[Enhancement] + ε`, with an
//! optional per-level shift of the VAF quantification that only the truth
//! sees. Efforts is tied to FP through a Gaussian copula, MaxTeamSize is
//! weakly linked to FP and DevPlatform is pure noise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, Role, Transform, VariableSpec};
use crate::numerics::{pearson, Prng};
use crate::regression::{LinearModel, Quantification, QuantificationSet, ScalingLevel};
use crate::screening::spearman;
use crate::transform::{compute_vaf, GscVector};
use crate::{Error, Result};

pub const REFERENCE_INTERCEPT: f64 = -5.939;
pub const REFERENCE_FP: f64 = 0.704;
pub const REFERENCE_VAF: f64 = 6.011;
pub const REFERENCE_ENHANCEMENT: f64 = -1.480;

pub const DEV_TYPES: [&str; 3] = ["New Development", "Re-development", "Enhancement"];
pub const MERGED_NEW: &str = "New Development+Re-development";
const PLATFORMS: [&str; 3] = ["MF", "MR", "PC"];
const QUALITY: [&str; 4] = ["A", "B", "C", "D"];

/// Reference model over `fp` (ln scale), `vaf` and `dev_type`, with New
/// Development and Re-development coded 0 and Enhancement 1.
pub fn reference_model() -> LinearModel {
    let mapping = [(DEV_TYPES[0], 0.0), (DEV_TYPES[1], 0.0), (MERGED_NEW, 0.0), (DEV_TYPES[2], 1.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let codings: QuantificationSet = [Quantification {
        variable: "dev_type".into(),
        mapping,
        scaling_level: ScalingLevel::Nominal,
    }]
    .into_iter()
    .collect();
    LinearModel::from_coefficients(
        "defects",
        Transform::Ln,
        REFERENCE_INTERCEPT,
        &[("fp", REFERENCE_FP), ("vaf", REFERENCE_VAF), ("dev_type", REFERENCE_ENHANCEMENT)],
        codings,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Qualified rows (quality A/B, all fields present).
    pub n: usize,
    pub noise_sd: f64,
    pub ln_fp_mean: f64,
    pub ln_fp_sd: f64,
    pub vaf_levels: Vec<f64>,
    /// Each level's hidden shift is uniform in `[−max, max]`.
    pub vaf_shift_max: f64,
    /// Target Spearman correlation between FP and Efforts.
    pub efforts_rank_correlation: f64,
    /// Loading of ln MaxTeamSize on standardized ln FP.
    pub team_size_link: f64,
    /// Probabilities of New Development, Re-development, Enhancement.
    pub dev_type_weights: [f64; 3],
    /// Extra rows of quality C/D or with a missing defect count.
    pub unqualified_rows: usize,
    /// Extra quality-A rows with a missing VAF.
    pub missing_vaf_rows: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 64,
            noise_sd: 0.5,
            ln_fp_mean: 5.5,
            ln_fp_sd: 1.0,
            vaf_levels: vec![0.65, 0.90, 1.00, 1.10, 1.35],
            vaf_shift_max: 0.0,
            efforts_rank_correlation: 0.62,
            team_size_link: 0.2,
            dev_type_weights: [0.35, 0.15, 0.5],
            unqualified_rows: 0,
            missing_vaf_rows: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 3 {
            return bad(format!("synthetic n must be at least 3, got {}", self.n));
        }
        if !(self.noise_sd >= 0.0) || !(self.ln_fp_sd >= 0.0) || !(self.vaf_shift_max >= 0.0) {
            return bad("noise_sd, ln_fp_sd and vaf_shift_max must be nonnegative".into());
        }
        if self.vaf_levels.is_empty() {
            return bad("vaf_levels must not be empty".into());
        }
        for &v in &self.vaf_levels {
            let total = (v * 100.0 - 65.0).round();
            if !(0.0..=70.0).contains(&total) || (v * 100.0 - 65.0 - total).abs() > 1e-9 {
                return bad(format!("VAF level {v} is not 0.65 + 0.01·k with k in 0..=70"));
            }
        }
        if !(self.efforts_rank_correlation > -1.0 && self.efforts_rank_correlation < 1.0) {
            return bad("efforts_rank_correlation must be in (-1, 1)".into());
        }
        if self.dev_type_weights.iter().any(|w| !(*w >= 0.0)) || self.dev_type_weights.iter().sum::<f64>() <= 0.0 {
            return bad("dev_type_weights must be nonnegative with a positive sum".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthMetadata {
    pub config: SynthConfig,
    pub seed: u64,
    /// `(level, hidden shift)` per VAF level.
    pub vaf_shifts: Vec<(f64, f64)>,
    /// Pearson correlation of the latent normals implementing the rank target.
    pub copula_rho: f64,
    pub achieved_spearman_fp_efforts: f64,
    pub achieved_pearson_ln_fp_ln_efforts: f64,
    pub rows_total: usize,
    pub rows_qualified: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub metadata: SynthMetadata,
}

/// Schema of generated data. `defects` and `fp` carry a declared ln
/// transform; `vaf` stays on its natural scale.
pub fn synthetic_schema() -> Vec<VariableSpec> {
    vec![
        VariableSpec::numeric("project_id", Role::Identifier),
        VariableSpec::categorical("data_quality", Role::Excluded, &QUALITY),
        VariableSpec::numeric("defects", Role::Response).with_transform(Transform::Ln),
        VariableSpec::numeric("fp", Role::Predictor).with_transform(Transform::Ln),
        VariableSpec::numeric("vaf", Role::Predictor),
        VariableSpec::categorical("dev_type", Role::Predictor, &DEV_TYPES),
        VariableSpec::numeric("efforts", Role::Predictor),
        VariableSpec::numeric("max_team_size", Role::Predictor),
        VariableSpec::categorical("dev_platform", Role::Predictor, &PLATFORMS),
    ]
}

fn pick(rng: &mut Prng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Ratings summing to `total`, spread at random over the 14 characteristics.
fn gsc_for_total(rng: &mut Prng, total: u32) -> GscVector {
    let mut r = [0i64; GscVector::LEN];
    for _ in 0..total {
        let open: Vec<usize> = (0..GscVector::LEN).filter(|&i| r[i] < GscVector::MAX_RATING as i64).collect();
        r[open[rng.below(open.len() as u64) as usize]] += 1;
    }
    GscVector::new(&r).expect("ratings within range")
}

struct Record {
    quality: usize,
    defects: Option<f64>,
    fp: f64,
    vaf: Option<f64>,
    dev_type: usize,
    efforts: f64,
    team: f64,
    platform: usize,
}

pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = Prng::new(seed);
    let shifts: Vec<(f64, f64)> = cfg
        .vaf_levels
        .iter()
        .map(|&v| (v, cfg.vaf_shift_max * (2.0 * rng.uniform() - 1.0)))
        .collect();
    let rho = 2.0 * (PI * cfg.efforts_rank_correlation / 6.0).sin();
    let total = cfg.n + cfg.unqualified_rows + cfg.missing_vaf_rows;
    let mut records = Vec::with_capacity(total);
    for i in 0..total {
        let z_fp = rng.normal();
        let ln_fp = cfg.ln_fp_mean + cfg.ln_fp_sd * z_fp;
        let z_e = rho * z_fp + (1.0 - rho * rho).sqrt() * rng.normal();
        let efforts = (8.5 + z_e).exp().round().max(1.0);
        let team = (1.5 + cfg.team_size_link * z_fp + 0.5 * rng.normal()).exp().round().max(1.0);
        let level = rng.below(cfg.vaf_levels.len() as u64) as usize;
        let vaf: f64 = compute_vaf(&gsc_for_total(&mut rng, (cfg.vaf_levels[level] * 100.0 - 65.0).round() as u32));
        let dev_type = pick(&mut rng, &cfg.dev_type_weights);
        let platform = rng.below(PLATFORMS.len() as u64) as usize;
        let eps = cfg.noise_sd * rng.normal();
        let enh = if dev_type == 2 { 1.0 } else { 0.0 };
        let ln_d = REFERENCE_INTERCEPT
            + REFERENCE_FP * ln_fp
            + REFERENCE_VAF * (vaf + shifts[level].1)
            + REFERENCE_ENHANCEMENT * enh
            + eps;
        let mut rec = Record {
            quality: rng.below(2) as usize,
            defects: Some(ln_d.exp()),
            fp: ln_fp.exp(),
            vaf: Some(vaf),
            dev_type,
            efforts,
            team,
            platform,
        };
        if i >= cfg.n && i < cfg.n + cfg.unqualified_rows {
            if rng.below(3) == 0 {
                rec.defects = None;
            } else {
                rec.quality = 2 + rng.below(2) as usize;
            }
        } else if i >= cfg.n + cfg.unqualified_rows {
            rec.quality = 0;
            rec.vaf = None;
        }
        records.push(rec);
    }
    // interleave the extra rows so filters have to look at every row
    let order = rng.permutation(total);
    let records: Vec<&Record> = order.iter().map(|&i| &records[i]).collect();

    let num = |f: &dyn Fn(&Record) -> Option<f64>| Column::Numeric(records.iter().map(|r| f(r)).collect());
    let cat = |f: &dyn Fn(&Record) -> usize| Column::Categorical(records.iter().map(|r| Some(f(r))).collect());
    let columns = vec![
        Column::Numeric((1..=total).map(|i| Some(i as f64)).collect()),
        cat(&|r| r.quality),
        num(&|r| r.defects),
        num(&|r| Some(r.fp)),
        num(&|r| r.vaf),
        cat(&|r| r.dev_type),
        num(&|r| Some(r.efforts)),
        num(&|r| Some(r.team)),
        cat(&|r| r.platform),
    ];
    let dataset = Dataset::new(synthetic_schema(), columns)?;

    let fp: Vec<Option<f64>> = records.iter().map(|r| Some(r.fp)).collect();
    let ef: Vec<Option<f64>> = records.iter().map(|r| Some(r.efforts)).collect();
    let achieved_spearman_fp_efforts = spearman(&fp, &ef).map(|c| c.rho).unwrap_or(f64::NAN);
    let lfp: Vec<f64> = records.iter().map(|r| r.fp.ln()).collect();
    let lef: Vec<f64> = records.iter().map(|r| r.efforts.ln()).collect();
    let metadata = SynthMetadata {
        config: cfg.clone(),
        seed,
        vaf_shifts: shifts,
        copula_rho: rho,
        achieved_spearman_fp_efforts,
        achieved_pearson_ln_fp_ln_efforts: pearson(&lfp, &lef).unwrap_or(f64::NAN),
        rows_total: total,
        rows_qualified: cfg.n,
    };
    Ok(SynthOutput { dataset, metadata })
}
