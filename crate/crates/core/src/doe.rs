//! Factorial structure and two-phase randomized block assignment.
//!
//! Within each block every experimental level first receives one randomly
//! chosen case; the leftover cases of the block then draw a level uniformly
//! at random, with replacement. Plans are reproducible from the seed: the
//! generator is ChaCha20 seeded through `SeedableRng::seed_from_u64`, and
//! that identity is written into the plan sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Generator identity recorded in plan sidecars.
pub const RNG_IDENTITY: &str = "chacha20/seed_from_u64/rand-0.9";
pub const PLAN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("factor `{0}` needs at least 2 levels")]
    TooFewLevels(String),
    #[error("factor `{0}` levels must be finite and strictly increasing")]
    UnorderedLevels(String),
    #[error("no factors given")]
    NoFactors,
    #[error("no blocks given")]
    NoBlocks,
    #[error("duplicate block id `{0}`")]
    DuplicateBlock(String),
    #[error("phase-1 infeasible: {cases} cases per block cannot cover {levels} levels")]
    Phase1Infeasible { cases: usize, levels: usize },
    #[error("plan file {path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A factor and its ordered numeric levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDef {
    pub name: String,
    pub unit: String,
    pub levels: Vec<f64>,
}

impl FactorDef {
    pub fn new(
        name: impl Into<String>,
        unit: impl Into<String>,
        levels: Vec<f64>,
    ) -> Result<Self, DesignError> {
        let f = Self {
            name: name.into(),
            unit: unit.into(),
            levels,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if self.levels.len() < 2 {
            return Err(DesignError::TooFewLevels(self.name.clone()));
        }
        let ordered = self.levels.iter().all(|v| v.is_finite())
            && self.levels.windows(2).all(|w| w[0] < w[1]);
        if !ordered {
            return Err(DesignError::UnorderedLevels(self.name.clone()));
        }
        Ok(())
    }

    /// Six seating depths, 0.005 to 0.030 in by 0.005.
    pub fn default_seating_depth() -> Self {
        Self {
            name: "seating_depth".into(),
            unit: "in".into(),
            levels: vec![0.005, 0.010, 0.015, 0.020, 0.025, 0.030],
        }
    }

    /// Ten powder charges, 25.3 to 26.2 gr by 0.1.
    pub fn default_powder_charge() -> Self {
        Self {
            name: "powder_charge".into(),
            unit: "gr".into(),
            levels: vec![25.3, 25.4, 25.5, 25.6, 25.7, 25.8, 25.9, 26.0, 26.1, 26.2],
        }
    }

    /// Index of `value` among the levels, matched to a relative 1e-9.
    pub fn level_index(&self, value: f64) -> Option<usize> {
        self.levels.iter().position(|&l| levels_match(l, value))
    }
}

pub(crate) fn levels_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Full Cartesian product of the factor levels, first factor slowest.
pub fn build_factor_grid(factors: &[FactorDef]) -> Result<Vec<Vec<f64>>, DesignError> {
    if factors.is_empty() {
        return Err(DesignError::NoFactors);
    }
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for f in factors {
        f.validate()?;
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                f.levels.iter().map(move |&l| {
                    let mut t = prefix.clone();
                    t.push(l);
                    t
                })
            })
            .collect();
    }
    Ok(grid)
}

/// Factors, blocks and block size: everything needed to randomize a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSkeleton {
    pub factors: Vec<FactorDef>,
    pub blocks: Vec<String>,
    pub cases_per_block: usize,
}

impl DesignSkeleton {
    /// 6 seating depths x 10 powder charges, four lots of 100 cases.
    pub fn default_layout() -> Self {
        Self {
            factors: vec![
                FactorDef::default_seating_depth(),
                FactorDef::default_powder_charge(),
            ],
            blocks: (1..=4).map(|b| b.to_string()).collect(),
            cases_per_block: 100,
        }
    }

    pub fn level_count(&self) -> usize {
        self.factors.iter().map(|f| f.levels.len()).product()
    }

    fn validate(&self) -> Result<Vec<Vec<f64>>, DesignError> {
        let grid = build_factor_grid(&self.factors)?;
        if self.blocks.is_empty() {
            return Err(DesignError::NoBlocks);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if self.blocks[..i].contains(b) {
                return Err(DesignError::DuplicateBlock(b.clone()));
            }
        }
        if self.cases_per_block < grid.len() {
            return Err(DesignError::Phase1Infeasible {
                cases: self.cases_per_block,
                levels: grid.len(),
            });
        }
        Ok(grid)
    }

    pub fn case_id(&self, block: &str, index: usize) -> String {
        let width = self.cases_per_block.to_string().len().max(3);
        format!("L{block}-C{index:0width$}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub case_id: String,
    pub block: String,
    /// Row-major index into the factor grid.
    pub level: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPlan {
    pub factors: Vec<FactorDef>,
    pub blocks: Vec<String>,
    pub cases_per_block: usize,
    pub assignments: Vec<Assignment>,
    pub seed: u64,
}

/// Randomizes cases to levels, block by block, from a single seeded stream.
pub fn randomize_assignment(
    skeleton: &DesignSkeleton,
    seed: u64,
) -> Result<DesignPlan, DesignError> {
    let grid = skeleton.validate()?;
    let levels = grid.len();
    let cases = skeleton.cases_per_block;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut assignments = Vec::with_capacity(cases * skeleton.blocks.len());

    for block in &skeleton.blocks {
        // Phase 1: a random case for every level.
        let mut order: Vec<usize> = (0..cases).collect();
        order.shuffle(&mut rng);
        let mut level_of = vec![usize::MAX; cases];
        for (level, &case) in order[..levels].iter().enumerate() {
            level_of[case] = level;
        }
        // Phase 2: leftovers draw uniformly, in case order.
        for slot in level_of.iter_mut().filter(|l| **l == usize::MAX) {
            *slot = rng.random_range(0..levels);
        }
        for (case, level) in level_of.into_iter().enumerate() {
            assignments.push(Assignment {
                case_id: skeleton.case_id(block, case + 1),
                block: block.clone(),
                level,
                values: grid[level].clone(),
            });
        }
    }

    Ok(DesignPlan {
        factors: skeleton.factors.clone(),
        blocks: skeleton.blocks.clone(),
        cases_per_block: cases,
        assignments,
        seed,
    })
}

/// Case counts per experimental level and block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountTable {
    pub levels: Vec<Vec<f64>>,
    pub blocks: Vec<String>,
    /// `counts[level][block]`
    pub counts: Vec<Vec<usize>>,
}

impl CountTable {
    pub fn level_totals(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn block_totals(&self) -> Vec<usize> {
        (0..self.blocks.len())
            .map(|b| self.counts.iter().map(|r| r[b]).sum())
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn assignment_counts(plan: &DesignPlan) -> CountTable {
    let levels = build_factor_grid(&plan.factors).unwrap_or_default();
    let mut counts = vec![vec![0usize; plan.blocks.len()]; levels.len()];
    for a in &plan.assignments {
        if let Some(b) = plan.blocks.iter().position(|b| *b == a.block) {
            counts[a.level][b] += 1;
        }
    }
    CountTable {
        levels,
        blocks: plan.blocks.clone(),
        counts,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanSidecar {
    format_version: u32,
    rng: String,
    seed: u64,
    cases_per_block: usize,
    blocks: Vec<String>,
    factors: Vec<FactorDef>,
}

fn io_error(path: &Path, source: std::io::Error) -> DesignError {
    DesignError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Sidecar path for a plan CSV: same stem, `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

impl DesignPlan {
    pub fn level_grid(&self) -> Vec<Vec<f64>> {
        build_factor_grid(&self.factors).unwrap_or_default()
    }

    /// Plan CSV: `case_id,block,<factor names...>`, one row per case.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case_id,block");
        for f in &self.factors {
            out.push(',');
            out.push_str(&f.name);
        }
        out.push('\n');
        for a in &self.assignments {
            out.push_str(&a.case_id);
            out.push(',');
            out.push_str(&a.block);
            for v in &a.values {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn sidecar_json(&self) -> String {
        let sidecar = PlanSidecar {
            format_version: PLAN_FORMAT_VERSION,
            rng: RNG_IDENTITY.into(),
            seed: self.seed,
            cases_per_block: self.cases_per_block,
            blocks: self.blocks.clone(),
            factors: self.factors.clone(),
        };
        let mut s = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        s.push('\n');
        s
    }

    /// Writes the plan CSV and its sidecar, creating the parent directory.
    pub fn write(&self, csv_path: &Path) -> Result<(), DesignError> {
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        let side = sidecar_path(csv_path);
        fs::write(csv_path, self.to_csv()).map_err(|e| io_error(csv_path, e))?;
        fs::write(&side, self.sidecar_json()).map_err(|e| io_error(&side, e))?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<Self, DesignError> {
        let csv_text = fs::read_to_string(csv_path).map_err(|e| io_error(csv_path, e))?;
        let side_path = sidecar_path(csv_path);
        let side_text = fs::read_to_string(&side_path).map_err(|e| DesignError::Format {
            path: side_path.display().to_string(),
            message: format!("cannot read plan sidecar: {e}"),
        })?;
        Self::parse(&csv_text, &side_text).map_err(|message| DesignError::Format {
            path: csv_path.display().to_string(),
            message,
        })
    }

    pub fn parse(csv_text: &str, sidecar: &str) -> Result<Self, String> {
        let side: PlanSidecar =
            serde_json::from_str(sidecar).map_err(|e| format!("sidecar: {e}"))?;
        if side.format_version != PLAN_FORMAT_VERSION {
            return Err(format!(
                "unsupported plan format version {}",
                side.format_version
            ));
        }
        for f in &side.factors {
            f.validate().map_err(|e| e.to_string())?;
        }
        let grid = build_factor_grid(&side.factors).map_err(|e| e.to_string())?;

        let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let mut expected = vec!["case_id".to_string(), "block".to_string()];
        expected.extend(side.factors.iter().map(|f| f.name.clone()));
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(format!("header must be `{}`", expected.join(",")));
        }

        let mut assignments = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| format!("row {row}: {e}"))?;
            let case_id = rec[0].to_string();
            let block = rec[1].to_string();
            if !side.blocks.contains(&block) {
                return Err(format!("row {row}, column block: unknown block `{block}`"));
            }
            if seen.insert(case_id.clone(), row).is_some() {
                return Err(format!(
                    "row {row}, column case_id: duplicate case `{case_id}`"
                ));
            }
            let mut idx = Vec::with_capacity(side.factors.len());
            for (k, f) in side.factors.iter().enumerate() {
                let raw = &rec[k + 2];
                let v: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| format!("row {row}, column {}: not a number `{raw}`", f.name))?;
                let li = f
                    .level_index(v)
                    .ok_or_else(|| format!("row {row}, column {}: {v} is not a level", f.name))?;
                idx.push(li);
            }
            let level = idx
                .iter()
                .zip(&side.factors)
                .fold(0, |acc, (&li, f)| acc * f.levels.len() + li);
            assignments.push(Assignment {
                case_id,
                block,
                level,
                values: grid[level].clone(),
            });
        }
        Ok(Self {
            factors: side.factors,
            blocks: side.blocks,
            cases_per_block: side.cases_per_block,
            assignments,
            seed: side.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(cases: usize) -> DesignSkeleton {
        DesignSkeleton {
            factors: vec![FactorDef::new("a", "", vec![1.0, 2.0]).unwrap()],
            blocks: vec!["1".into()],
            cases_per_block: cases,
        }
    }

    #[test]
    fn default_grid_has_sixty_levels() {
        let grid = build_factor_grid(&DesignSkeleton::default_layout().factors).unwrap();
        assert_eq!(grid.len(), 60);
        assert_eq!(grid[0], vec![0.005, 25.3]);
        assert_eq!(grid[1], vec![0.005, 25.4]);
        assert_eq!(grid[59], vec![0.030, 26.2]);
    }

    #[test]
    fn single_factor_grid() {
        let f = FactorDef::new("a", "", vec![1.0, 2.0]).unwrap();
        assert_eq!(build_factor_grid(&[f]).unwrap(), vec![vec![1.0], vec![2.0]]);
    }

    #[test]
    fn grid_matches_nested_loop_enumeration() {
        let a = FactorDef::new("a", "", vec![1.0, 2.0, 3.0]).unwrap();
        let b = FactorDef::new("b", "", vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        let mut expected = Vec::new();
        for &x in &[1.0, 2.0, 3.0] {
            for &y in &[10.0, 20.0, 30.0, 40.0] {
                expected.push(vec![x, y]);
            }
        }
        assert_eq!(build_factor_grid(&[a, b]).unwrap(), expected);
    }

    #[test]
    fn factor_validation() {
        assert!(matches!(
            FactorDef::new("a", "", vec![1.0]),
            Err(DesignError::TooFewLevels(_))
        ));
        assert!(matches!(
            FactorDef::new("a", "", vec![2.0, 1.0]),
            Err(DesignError::UnorderedLevels(_))
        ));
        assert!(matches!(
            FactorDef::new("a", "", vec![1.0, 1.0]),
            Err(DesignError::UnorderedLevels(_))
        ));
        assert!(matches!(
            build_factor_grid(&[]),
            Err(DesignError::NoFactors)
        ));
    }

    #[test]
    fn infeasible_and_empty_skeletons() {
        let mut s = two_level(1);
        assert!(matches!(
            randomize_assignment(&s, 0),
            Err(DesignError::Phase1Infeasible {
                cases: 1,
                levels: 2
            })
        ));
        s.cases_per_block = 2;
        s.blocks.clear();
        assert!(matches!(
            randomize_assignment(&s, 0),
            Err(DesignError::NoBlocks)
        ));
    }

    #[test]
    fn cases_equal_to_levels_is_a_pure_bijection() {
        let plan = randomize_assignment(&two_level(2), 5).unwrap();
        let mut levels: Vec<usize> = plan.assignments.iter().map(|a| a.level).collect();
        levels.sort();
        assert_eq!(levels, vec![0, 1]);
    }

    #[test]
    fn realized_outcome_is_in_enumerated_space() {
        // All 2^3 maps of 3 cases onto 2 levels; valid ones cover both levels.
        let valid: Vec<[usize; 3]> = (0..8usize)
            .map(|m| [m & 1, (m >> 1) & 1, (m >> 2) & 1])
            .filter(|o| o.contains(&0) && o.contains(&1))
            .collect();
        assert_eq!(valid.len(), 6);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..400 {
            let plan = randomize_assignment(&two_level(3), seed).unwrap();
            let o = [
                plan.assignments[0].level,
                plan.assignments[1].level,
                plan.assignments[2].level,
            ];
            assert!(valid.contains(&o), "seed {seed} gave {o:?}");
            assert_eq!(plan, randomize_assignment(&two_level(3), seed).unwrap());
            seen.insert(o);
        }
        assert_eq!(seen.len(), 6, "every valid outcome is reachable");
    }

    #[test]
    fn default_layout_counts() {
        let plan = randomize_assignment(&DesignSkeleton::default_layout(), 2024).unwrap();
        assert_eq!(plan.assignments.len(), 400);
        let t = assignment_counts(&plan);
        assert_eq!(t.counts.len(), 60);
        assert!(t.counts.iter().flatten().all(|&c| c >= 1));
        assert!(t.level_totals().iter().all(|&c| c >= 4));
        assert_eq!(t.block_totals(), vec![100; 4]);
        assert_eq!(t.total(), 400);
        assert_eq!(plan.assignments[0].case_id, "L1-C001");
        assert_eq!(plan.assignments[399].case_id, "L4-C100");
    }

    #[test]
    fn no_phase_two_gives_unit_counts() {
        let mut s = DesignSkeleton::default_layout();
        s.cases_per_block = 60;
        let t = assignment_counts(&randomize_assignment(&s, 9).unwrap());
        assert!(t.counts.iter().flatten().all(|&c| c == 1));
    }

    #[test]
    fn counts_match_independent_scan() {
        let plan = randomize_assignment(&DesignSkeleton::default_layout(), 77).unwrap();
        let t = assignment_counts(&plan);
        for (li, lv) in t.levels.iter().enumerate() {
            for (bi, b) in t.blocks.iter().enumerate() {
                let n = plan
                    .assignments
                    .iter()
                    .filter(|a| &a.block == b && &a.values == lv)
                    .count();
                assert_eq!(t.counts[li][bi], n);
            }
        }
    }

    #[test]
    fn phase_two_is_marginally_uniform() {
        // 3 levels, 5 cases: 2 phase-2 draws per seed.
        let s = DesignSkeleton {
            factors: vec![FactorDef::new("a", "", vec![1.0, 2.0, 3.0]).unwrap()],
            blocks: vec!["1".into()],
            cases_per_block: 5,
        };
        let mut counts = [0f64; 3];
        for seed in 0..2000 {
            let t = assignment_counts(&randomize_assignment(&s, seed).unwrap());
            for (l, row) in t.counts.iter().enumerate() {
                counts[l] += (row[0] - 1) as f64;
            }
        }
        let expected = 4000.0 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|c| (c - expected).powi(2) / expected)
            .sum();
        // chi-square with 2 df has survival exp(-x/2).
        let p = (-chi2 / 2.0).exp();
        assert!(p > 0.001, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn plan_csv_and_sidecar_round_trip() {
        let plan = randomize_assignment(&DesignSkeleton::default_layout(), 11).unwrap();
        let csv = plan.to_csv();
        assert!(csv.starts_with("case_id,block,seating_depth,powder_charge\n"));
        let back = DesignPlan::parse(&csv, &plan.sidecar_json()).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back.to_csv(), csv);
    }

    #[test]
    fn plan_parse_reports_row_and_column() {
        let plan = randomize_assignment(&two_level(2), 1).unwrap();
        let csv = "case_id,block,a\nL1-C001,1,1\nL1-C002,1,7\n";
        let err = DesignPlan::parse(csv, &plan.sidecar_json()).unwrap_err();
        assert!(err.contains("row 3") && err.contains("column a"), "{err}");
    }
}
