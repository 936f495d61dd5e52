//! Synthetic experiments with known ground truth.
//!
//! Each case of a [`DesignPlan`] gets covariates drawn from per-covariate
//! distributions and fires one shot. The impact point is the cell offset plus
//! circular bivariate normal noise with per-axis sd
//!
//! ```text
//! sigma * cell_multiplier * exp(sum_k slope_k * (z_k - mean_k) / sd_k)
//! ```
//!
//! Covariate slopes act on the standardized covariate, so they are unit-free.
//! Everything is driven by one ChaCha20 stream per seed, drawn in a fixed
//! order: covariates (plan order), firing order, impact noise (plan order),
//! then invalidation flags.
//!
//! The JSON config mirrors [`EffectModel`]; every field is optional:
//!
//! ```json
//! {
//!   "sigma": 12.0,
//!   "seed": 7,
//!   "cell_offsets": [{"seating_depth": 0.03, "powder_charge": 26.2, "dx": 5.0, "dy": 0.0}],
//!   "cell_multipliers": [{"seating_depth": 0.03, "powder_charge": 26.2, "factor": 3.0}],
//!   "covariate_slopes": {"case_weight": 0.1},
//!   "covariates": {"case_volume": {"mean": 46.0, "sd": 0.4}},
//!   "invalidations": {"shooter_error": 10, "tumbled": 4, "wrong_target": 6}
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{
    CartridgeRecord, Covariate, Covariates, DataError, Dataset, Flag, InvalidReason, ShotRecord,
};
use crate::doe::{levels_match, DesignPlan};
use crate::groupstats::ImpactPoint;
use crate::surface;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid effect model: {0}")]
    Config(String),
    #[error("cannot read effect model: {0}")]
    Parse(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateDistribution {
    pub mean: f64,
    pub sd: f64,
}

/// Measured means and sample sds of the 13 covariates of a 380-unit study.
/// Case mouth square is drawn as Bernoulli(mean).
pub fn default_distribution(c: Covariate) -> CovariateDistribution {
    let (mean, sd) = match c {
        Covariate::CaseLength => (1.7526, 0.0044),
        Covariate::NeckInnerDiameter => (0.2200, 0.0005),
        Covariate::NeckOuterDiameter => (0.2414, 0.0006),
        Covariate::NeckThickness => (0.0114, 0.0005),
        Covariate::HeadSpace => (-8.4303, 1.8566),
        Covariate::PrimerPocketDepth => (0.1190, 0.0012),
        Covariate::PrimerPocketDiameter => (0.1710, 0.0005),
        Covariate::CaseWeight => (92.9526, 0.7691),
        Covariate::CaseMouthSquare => (0.7316, 0.4437),
        Covariate::CaseVolume => (45.8341, 0.5118),
        Covariate::PrimerWeight => (3.2650, 0.0478),
        Covariate::BulletOverallLength => (0.8107, 0.0010),
        Covariate::BulletWeight => (55.0195, 0.0711),
    };
    CovariateDistribution { mean, sd }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellOffset {
    pub seating_depth: f64,
    pub powder_charge: f64,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellMultiplier {
    pub seating_depth: f64,
    pub powder_charge: f64,
    pub factor: f64,
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectModel {
    /// Baseline per-axis dispersion, in impact length units.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Unlisted cells have no offset.
    #[serde(default)]
    pub cell_offsets: Vec<CellOffset>,
    /// Unlisted cells have multiplier 1.
    #[serde(default)]
    pub cell_multipliers: Vec<CellMultiplier>,
    #[serde(default)]
    pub covariate_slopes: BTreeMap<Covariate, f64>,
    /// Overrides of [`default_distribution`].
    #[serde(default)]
    pub covariates: BTreeMap<Covariate, CovariateDistribution>,
    /// Number of shots to flag per reason. Flags never empty a cell.
    #[serde(default)]
    pub invalidations: BTreeMap<InvalidReason, usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EffectModel {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            cell_offsets: Vec::new(),
            cell_multipliers: Vec::new(),
            covariate_slopes: BTreeMap::new(),
            covariates: BTreeMap::new(),
            invalidations: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl EffectModel {
    pub fn null(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            seed,
            ..Self::default()
        }
    }

    /// 10 shooter errors, 4 tumbled bullets and 6 wrong-target hits.
    pub fn with_standard_invalidations(mut self) -> Self {
        self.invalidations = BTreeMap::from([
            (InvalidReason::ShooterError, 10),
            (InvalidReason::Tumbled, 4),
            (InvalidReason::WrongTarget, 6),
        ]);
        self
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let m: Self = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("effect model serializes") + "\n"
    }

    pub fn distribution(&self, c: Covariate) -> CovariateDistribution {
        self.covariates
            .get(&c)
            .copied()
            .unwrap_or_else(|| default_distribution(c))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        for m in &self.cell_multipliers {
            if !(m.factor.is_finite() && m.factor >= 0.0) {
                return bad(format!(
                    "multiplier must be finite and >= 0, got {}",
                    m.factor
                ));
            }
        }
        for o in &self.cell_offsets {
            if !(o.dx.is_finite() && o.dy.is_finite()) {
                return bad("cell offsets must be finite".into());
            }
        }
        for (c, s) in &self.covariate_slopes {
            if !s.is_finite() {
                return bad(format!("slope for {c} must be finite"));
            }
        }
        for c in Covariate::ALL {
            let d = self.distribution(c);
            if !(d.mean.is_finite() && d.sd.is_finite() && d.sd >= 0.0) {
                return bad(format!(
                    "distribution for {c} needs finite mean and sd >= 0"
                ));
            }
            if c == Covariate::CaseMouthSquare && !(0.0..=1.0).contains(&d.mean) {
                return bad(format!("{c} mean is a probability, got {}", d.mean));
            }
            if matches!(
                c,
                Covariate::CaseWeight
                    | Covariate::CaseVolume
                    | Covariate::PrimerWeight
                    | Covariate::BulletWeight
            ) && d.mean <= 0.0
            {
                return bad(format!("{c} mean must be positive"));
            }
        }
        Ok(())
    }
}

/// Multiplier `low` where the SD and PC level indices have even sum, `high`
/// elsewhere. Balanced over rows and columns when both level counts are even
/// or one of them is.
pub fn checkerboard_multipliers(
    sd_levels: &[f64],
    pc_levels: &[f64],
    low: f64,
    high: f64,
) -> Vec<CellMultiplier> {
    let mut out = Vec::with_capacity(sd_levels.len() * pc_levels.len());
    for (i, &sd) in sd_levels.iter().enumerate() {
        for (j, &pc) in pc_levels.iter().enumerate() {
            out.push(CellMultiplier {
                seating_depth: sd,
                powder_charge: pc,
                factor: if (i + j) % 2 == 0 { low } else { high },
            });
        }
    }
    out
}

/// Simulated cartridges, shots and flags for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedExperiment {
    pub cartridges: Vec<CartridgeRecord>,
    /// Sorted by firing order.
    pub shots: Vec<ShotRecord>,
    pub flags: Vec<Flag>,
}

impl SimulatedExperiment {
    /// Joins onto `plan` and applies the flags.
    pub fn into_dataset(self, plan: &DesignPlan) -> Result<Dataset, DataError> {
        let mut ds = Dataset::from_parts(plan.clone(), self.cartridges, self.shots)?;
        ds.apply_invalidation(&self.flags)?;
        Ok(ds)
    }

    /// Writes shots.csv, cartridges.csv, plan.csv/plan.json and flags.csv.
    pub fn write(&self, plan: &DesignPlan, dir: &Path) -> Result<(), DataError> {
        self.clone().into_dataset(plan)?.write(dir)?;
        let flags = dir.join("flags.csv");
        if self.flags.is_empty() {
            std::fs::write(&flags, crate::dataio::flags_to_csv(&[])).map_err(|source| {
                DataError::Io {
                    path: flags.display().to_string(),
                    source,
                }
            })?;
        }
        Ok(())
    }
}

fn cell_lookup<T: Copy>(
    plan: &DesignPlan,
    entries: impl Iterator<Item = (f64, f64, T)>,
    what: &str,
) -> Result<HashMap<(usize, usize), T>, SimError> {
    let (sd, pc) = (&plan.factors[0], &plan.factors[1]);
    let mut map = HashMap::new();
    for (s, p, v) in entries {
        let key = sd.level_index(s).zip(pc.level_index(p)).ok_or_else(|| {
            SimError::Config(format!("{what} cell ({s}, {p}) is not a plan level"))
        })?;
        if map.insert(key, v).is_some() {
            return Err(SimError::Config(format!(
                "{what} cell ({s}, {p}) listed twice"
            )));
        }
    }
    Ok(map)
}

fn check_plan(plan: &DesignPlan) -> Result<(), SimError> {
    let names: Vec<&str> = plan.factors.iter().map(|f| f.name.as_str()).collect();
    if names != ["seating_depth", "powder_charge"] {
        return Err(SimError::Config(
            "plan factors must be seating_depth, powder_charge".into(),
        ));
    }
    Ok(())
}

fn draw_covariates(rng: &mut ChaCha20Rng, effects: &EffectModel) -> Covariates {
    let mut cov = Covariates::default();
    for c in Covariate::ALL {
        let d = effects.distribution(c);
        let v = if c == Covariate::CaseMouthSquare {
            if rng.random::<f64>() < d.mean {
                1.0
            } else {
                0.0
            }
        } else {
            let normal = Normal::new(d.mean, d.sd).expect("validated distribution");
            let positive = matches!(
                c,
                Covariate::CaseWeight
                    | Covariate::CaseVolume
                    | Covariate::PrimerWeight
                    | Covariate::BulletWeight
            );
            loop {
                let v = normal.sample(rng);
                if !positive || v > 0.0 {
                    break v;
                }
            }
        };
        cov.set(c, v);
    }
    cov
}

fn covariate_factor(effects: &EffectModel, cov: &Covariates) -> f64 {
    let exponent: f64 = effects
        .covariate_slopes
        .iter()
        .map(|(&c, &slope)| {
            let d = effects.distribution(c);
            let z = if d.sd > 0.0 {
                (cov.get(c) - d.mean) / d.sd
            } else {
                0.0
            };
            slope * z
        })
        .sum();
    exponent.exp()
}

/// One experiment, deterministic in `effects.seed`.
pub fn simulate_experiment(
    plan: &DesignPlan,
    effects: &EffectModel,
) -> Result<SimulatedExperiment, SimError> {
    effects.validate()?;
    check_plan(plan)?;
    let offsets = cell_lookup(
        plan,
        effects
            .cell_offsets
            .iter()
            .map(|o| (o.seating_depth, o.powder_charge, (o.dx, o.dy))),
        "offset",
    )?;
    let multipliers = cell_lookup(
        plan,
        effects
            .cell_multipliers
            .iter()
            .map(|m| (m.seating_depth, m.powder_charge, m.factor)),
        "multiplier",
    )?;
    let (sd, pc) = (&plan.factors[0], &plan.factors[1]);
    let cells: Vec<(usize, usize)> = plan
        .assignments
        .iter()
        .map(|a| {
            let i = sd.level_index(a.values[0]).expect("plan values are levels");
            let j = pc.level_index(a.values[1]).expect("plan values are levels");
            (i, j)
        })
        .collect();

    let mut rng = ChaCha20Rng::seed_from_u64(effects.seed);
    let cartridges: Vec<CartridgeRecord> = plan
        .assignments
        .iter()
        .map(|a| CartridgeRecord {
            case_id: a.case_id.clone(),
            lot: a.block.clone(),
            seating_depth: a.values[0],
            powder_charge: a.values[1],
            covariates: draw_covariates(&mut rng, effects),
        })
        .collect();

    let n = cartridges.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut seq_of = vec![0u32; n];
    for (pos, &case) in order.iter().enumerate() {
        seq_of[case] = pos as u32 + 1;
    }

    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    let mut shots: Vec<ShotRecord> = cartridges
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let cell = cells[k];
            let (dx, dy) = offsets.get(&cell).copied().unwrap_or((0.0, 0.0));
            let mult = multipliers.get(&cell).copied().unwrap_or(1.0);
            let s = effects.sigma * mult * covariate_factor(effects, &c.covariates);
            let x = dx + s * unit.sample(&mut rng);
            let y = dy + s * unit.sample(&mut rng);
            let seq = seq_of[k];
            ShotRecord {
                case_id: c.case_id.clone(),
                target_id: format!("T{seq:04}"),
                seq,
                point: ImpactPoint::new(x, y),
                velocity: None,
                valid: true,
                invalid_reason: None,
            }
        })
        .collect();

    let flags = draw_flags(&mut rng, effects, &cells, &seq_of, &cartridges)?;
    shots.sort_by_key(|s| s.seq);
    Ok(SimulatedExperiment {
        cartridges,
        shots,
        flags,
    })
}

fn draw_flags(
    rng: &mut ChaCha20Rng,
    effects: &EffectModel,
    cells: &[(usize, usize)],
    seq_of: &[u32],
    cartridges: &[CartridgeRecord],
) -> Result<Vec<Flag>, SimError> {
    let mut reasons: Vec<InvalidReason> = Vec::new();
    for (&r, &k) in &effects.invalidations {
        reasons.extend(std::iter::repeat_n(r, k));
    }
    if reasons.is_empty() {
        return Ok(Vec::new());
    }
    let mut remaining: HashMap<(usize, usize), usize> = HashMap::new();
    for &c in cells {
        *remaining.entry(c).or_insert(0) += 1;
    }
    let mut candidates: Vec<usize> = (0..cells.len()).collect();
    candidates.shuffle(rng);
    let mut chosen = Vec::with_capacity(reasons.len());
    for k in candidates {
        if chosen.len() == reasons.len() {
            break;
        }
        let left = remaining.get_mut(&cells[k]).expect("cell counted");
        if *left > 1 {
            *left -= 1;
            chosen.push(k);
        }
    }
    if chosen.len() < reasons.len() {
        return Err(SimError::Config(format!(
            "cannot flag {} shots without emptying a cell",
            reasons.len()
        )));
    }
    let mut flags: Vec<Flag> = chosen
        .into_iter()
        .zip(reasons)
        .map(|(k, reason)| Flag {
            seq: Some(seq_of[k]),
            case_id: Some(cartridges[k].case_id.clone()),
            reason,
        })
        .collect();
    flags.sort_by_key(|f| f.seq);
    Ok(flags)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermPower {
    pub term: String,
    pub detections: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFrequency {
    pub seating_depth: f64,
    pub powder_charge: f64,
    pub count: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerReport {
    pub n_seeds: usize,
    pub alpha: f64,
    /// Model row first, then each term in model order.
    pub terms: Vec<TermPower>,
    /// How often each cell had the largest mean radius; most frequent first.
    pub ranked_last: Vec<CellFrequency>,
}

impl PowerReport {
    pub fn rate(&self, term: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.term == term).map(|t| t.rate)
    }
}

struct SeedOutcome {
    detected: Vec<(String, bool)>,
    last: (f64, f64),
}

fn run_seed(plan: &DesignPlan, effects: &EffectModel, alpha: f64) -> Result<SeedOutcome, SimError> {
    let ds = simulate_experiment(plan, effects)?.into_dataset(plan)?;
    let table = ds.anova()?;
    let mut detected = vec![(
        "Model".to_string(),
        table.model.p.is_some_and(|p| p < alpha),
    )];
    detected.extend(
        table
            .terms
            .iter()
            .map(|r| (r.source.clone(), r.p.is_some_and(|p| p < alpha))),
    );
    let ranking = surface::rank_levels(&ds.surface()?).map_err(DataError::from)?;
    let worst = ranking.last().expect("ranking is non-empty");
    Ok(SeedOutcome {
        detected,
        last: (worst.seating_depth, worst.powder_charge),
    })
}

/// Fraction of seeds `effects.seed, effects.seed + 1, ...` whose Type I ANOVA
/// p-value is below `alpha`, per term. Seeds run in parallel; the report does
/// not depend on the thread count.
pub fn power_run(
    plan: &DesignPlan,
    effects: &EffectModel,
    n_seeds: usize,
    alpha: f64,
) -> Result<PowerReport, SimError> {
    if n_seeds == 0 {
        return Err(SimError::Config("n_seeds must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::Config(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    effects.validate()?;
    let outcomes: Vec<SeedOutcome> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut e = effects.clone();
            e.seed = effects.seed.wrapping_add(i);
            run_seed(plan, &e, alpha)
        })
        .collect::<Result<_, _>>()?;

    let mut terms: Vec<TermPower> = outcomes[0]
        .detected
        .iter()
        .map(|(t, _)| TermPower {
            term: t.clone(),
            detections: 0,
            rate: 0.0,
        })
        .collect();
    let mut last: Vec<CellFrequency> = Vec::new();
    for o in &outcomes {
        for (tp, (_, hit)) in terms.iter_mut().zip(&o.detected) {
            tp.detections += usize::from(*hit);
        }
        match last.iter_mut().find(|c| {
            levels_match(c.seating_depth, o.last.0) && levels_match(c.powder_charge, o.last.1)
        }) {
            Some(c) => c.count += 1,
            None => last.push(CellFrequency {
                seating_depth: o.last.0,
                powder_charge: o.last.1,
                count: 1,
                rate: 0.0,
            }),
        }
    }
    let n = n_seeds as f64;
    for t in &mut terms {
        t.rate = t.detections as f64 / n;
    }
    for c in &mut last {
        c.rate = c.count as f64 / n;
    }
    last.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.powder_charge.total_cmp(&b.powder_charge))
            .then(a.seating_depth.total_cmp(&b.seating_depth))
    });
    Ok(PowerReport {
        n_seeds,
        alpha,
        terms,
        ranked_last: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe::{randomize_assignment, DesignSkeleton};

    fn full_plan(seed: u64) -> DesignPlan {
        randomize_assignment(&DesignSkeleton::default_layout(), seed).unwrap()
    }

    #[test]
    fn zero_sigma_puts_every_shot_on_its_center() {
        let plan = full_plan(1);
        let ds = simulate_experiment(&plan, &EffectModel::null(0.0, 5))
            .unwrap()
            .into_dataset(&plan)
            .unwrap();
        assert!(ds
            .shots
            .iter()
            .all(|s| s.point == ImpactPoint::new(0.0, 0.0)));
        let grid = ds.surface().unwrap();
        assert_eq!(grid.occupied_count(), 60);
        assert!(grid
            .cells
            .iter()
            .flatten()
            .all(|c| c.mean_radius == Some(0.0)));
    }

    #[test]
    fn deterministic_per_seed() {
        let plan = full_plan(2);
        let e = EffectModel::null(10.0, 9).with_standard_invalidations();
        let a = simulate_experiment(&plan, &e).unwrap();
        let b = simulate_experiment(&plan, &e).unwrap();
        assert_eq!(a, b);
        let mut other = e.clone();
        other.seed = 10;
        assert_ne!(a, simulate_experiment(&plan, &other).unwrap());
    }

    #[test]
    fn standard_invalidations_leave_380_and_full_grid() {
        let plan = full_plan(3);
        let ds = simulate_experiment(
            &plan,
            &EffectModel::null(10.0, 4).with_standard_invalidations(),
        )
        .unwrap()
        .into_dataset(&plan)
        .unwrap();
        let r = ds.invalidation_report();
        assert_eq!((r.total, r.valid), (400, 380));
        assert_eq!(r.by_reason[&InvalidReason::WrongTarget], 6);
        assert_eq!(ds.surface().unwrap().occupied_count(), 60);
    }

    #[test]
    fn seq_is_a_permutation() {
        let plan = full_plan(4);
        let sim = simulate_experiment(&plan, &EffectModel::null(1.0, 0)).unwrap();
        let seqs: Vec<u32> = sim.shots.iter().map(|s| s.seq).collect();
        assert_eq!(seqs, (1..=400).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        let mut e = EffectModel::null(-1.0, 0);
        assert!(e.validate().is_err());
        e.sigma = 1.0;
        e.cell_multipliers.push(CellMultiplier {
            seating_depth: 0.005,
            powder_charge: 25.3,
            factor: -2.0,
        });
        assert!(e.validate().is_err());
        let mut e = EffectModel::null(1.0, 0);
        e.cell_offsets.push(CellOffset {
            seating_depth: 0.5,
            powder_charge: 25.3,
            dx: 1.0,
            dy: 0.0,
        });
        assert!(matches!(
            simulate_experiment(&full_plan(0), &e),
            Err(SimError::Config(_))
        ));
        assert!(EffectModel::from_json(r#"{"sigma": 2, "bogus": 1}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut e = EffectModel::null(12.0, 7).with_standard_invalidations();
        e.covariate_slopes.insert(Covariate::CaseWeight, 0.1);
        e.covariates.insert(
            Covariate::CaseVolume,
            CovariateDistribution {
                mean: 46.0,
                sd: 0.4,
            },
        );
        e.cell_multipliers = checkerboard_multipliers(&[0.005, 0.01], &[25.3, 25.4], 1.0, 2.0);
        assert_eq!(EffectModel::from_json(&e.to_json()).unwrap(), e);
        let minimal = EffectModel::from_json("{}").unwrap();
        assert_eq!(minimal, EffectModel::default());
    }

    #[test]
    fn checkerboard_is_balanced() {
        let m = checkerboard_multipliers(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0], 1.0, 2.0);
        for sd in [1.0, 2.0, 3.0] {
            let row: f64 = m
                .iter()
                .filter(|c| c.seating_depth == sd)
                .map(|c| c.factor)
                .sum();
            assert_eq!(row, 6.0);
        }
    }

    #[test]
    fn too_many_flags_is_a_config_error() {
        let plan = full_plan(5);
        let mut e = EffectModel::null(1.0, 0);
        e.invalidations.insert(InvalidReason::Other, 341);
        assert!(matches!(
            simulate_experiment(&plan, &e),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn power_run_is_thread_count_independent() {
        let plan = full_plan(6);
        let e = EffectModel::null(1.0, 100);
        let a = power_run(&plan, &e, 8, 0.05).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| power_run(&plan, &e, 8, 0.05)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.terms.len(), 5);
        assert_eq!(a.ranked_last.iter().map(|c| c.count).sum::<usize>(), 8);
        assert!(power_run(&plan, &e, 0, 0.05).is_err());
    }
}
