//! Shot and cartridge files: schemas, joins, invalidation flags, descriptive
//! statistics, lot screening and the firing-order stability series.
//!
//! All files are headered UTF-8 CSV with `.` as the decimal separator.
//!
//! | file            | header                                                   |
//! |-----------------|----------------------------------------------------------|
//! | shots.csv       | `case_id,target_id,seq,x,y,velocity`                     |
//! | cartridges.csv  | `case_id,lot,seating_depth,powder_charge,` + covariates  |
//! | flags.csv       | `seq,case_id,reason`                                     |
//! | plan.csv        | see [`crate::doe`]                                       |
//!
//! Impact coordinates are target-local with the bulls-eye at the origin.
//! `velocity` may be blank; it is carried through but never analyzed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doe::{levels_match, DesignError, DesignPlan};
use crate::groupstats::ImpactPoint;
use crate::linmod::{self, Column, DataTable, LinModError, ModelSpec, Term};
use crate::surface::{self, CellShot, SurfaceError, SurfaceGrid};

pub const SHOTS_HEADER: &str = "case_id,target_id,seq,x,y,velocity";
pub const FLAGS_HEADER: &str = "seq,case_id,reason";
/// Name of the per-shot response column in analysis tables.
pub const RESPONSE: &str = "radial_deviation";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Schema { file: String, message: String },
    #[error("{file}, row {row}{}: {message}", column.as_ref().map(|c| format!(", column {c}")).unwrap_or_default())]
    Row {
        file: String,
        row: usize,
        column: Option<String>,
        message: String,
    },
    #[error("column `{0}` is unknown")]
    UnknownColumn(String),
    #[error("column `{0}` is not numeric")]
    NonNumeric(String),
    #[error("no records")]
    Empty,
    #[error("lot screening needs at least 2 lots, found {0}")]
    SingleLot(usize),
    #[error("lot `{lot}` has {n} case(s); lot screening needs at least 2 per lot")]
    LotTooSmall { lot: String, n: usize },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Model(#[from] LinModError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

fn row_err(file: &str, row: usize, column: Option<&str>, message: impl Into<String>) -> DataError {
    DataError::Row {
        file: file.into(),
        row,
        column: column.map(String::from),
        message: message.into(),
    }
}

/// The thirteen measured cartridge covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    CaseLength,
    NeckInnerDiameter,
    NeckOuterDiameter,
    NeckThickness,
    HeadSpace,
    PrimerPocketDepth,
    PrimerPocketDiameter,
    CaseWeight,
    CaseVolume,
    PrimerWeight,
    BulletOverallLength,
    BulletWeight,
    CaseMouthSquare,
}

impl Covariate {
    /// File column order.
    pub const ALL: [Covariate; 13] = [
        Covariate::CaseLength,
        Covariate::NeckInnerDiameter,
        Covariate::NeckOuterDiameter,
        Covariate::NeckThickness,
        Covariate::HeadSpace,
        Covariate::PrimerPocketDepth,
        Covariate::PrimerPocketDiameter,
        Covariate::CaseWeight,
        Covariate::CaseVolume,
        Covariate::PrimerWeight,
        Covariate::BulletOverallLength,
        Covariate::BulletWeight,
        Covariate::CaseMouthSquare,
    ];

    /// Order in which covariates enter the default ANCOVA.
    pub const MODEL_ORDER: [Covariate; 13] = [
        Covariate::CaseLength,
        Covariate::CaseMouthSquare,
        Covariate::CaseVolume,
        Covariate::CaseWeight,
        Covariate::HeadSpace,
        Covariate::NeckInnerDiameter,
        Covariate::NeckOuterDiameter,
        Covariate::NeckThickness,
        Covariate::PrimerPocketDepth,
        Covariate::PrimerPocketDiameter,
        Covariate::PrimerWeight,
        Covariate::BulletWeight,
        Covariate::BulletOverallLength,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Covariate::CaseLength => "case_length",
            Covariate::NeckInnerDiameter => "neck_inner_diameter",
            Covariate::NeckOuterDiameter => "neck_outer_diameter",
            Covariate::NeckThickness => "neck_thickness",
            Covariate::HeadSpace => "head_space",
            Covariate::PrimerPocketDepth => "primer_pocket_depth",
            Covariate::PrimerPocketDiameter => "primer_pocket_diameter",
            Covariate::CaseWeight => "case_weight",
            Covariate::CaseVolume => "case_volume",
            Covariate::PrimerWeight => "primer_weight",
            Covariate::BulletOverallLength => "bullet_overall_length",
            Covariate::BulletWeight => "bullet_weight",
            Covariate::CaseMouthSquare => "case_mouth_square",
        }
    }

    /// Display name used in ANOVA tables.
    pub fn label(self) -> &'static str {
        match self {
            Covariate::CaseLength => "Case Length",
            Covariate::NeckInnerDiameter => "Neck Inner Diameter",
            Covariate::NeckOuterDiameter => "Neck Outer Diameter",
            Covariate::NeckThickness => "Neck Thickness",
            Covariate::HeadSpace => "Head Space",
            Covariate::PrimerPocketDepth => "Primer Pocket Depth",
            Covariate::PrimerPocketDiameter => "Primer Pocket Diameter",
            Covariate::CaseWeight => "Case Weight",
            Covariate::CaseVolume => "Case Volume",
            Covariate::PrimerWeight => "Primer Weight",
            Covariate::BulletOverallLength => "Bullet Overall Length",
            Covariate::BulletWeight => "Bullet Weight",
            Covariate::CaseMouthSquare => "Case Mouth Square",
        }
    }

    /// Lengths in inches, weights in grains, head space in thousandths of an
    /// inch off standard, case mouth square as 0/1.
    pub fn unit(self) -> &'static str {
        match self {
            Covariate::HeadSpace => "0.001 in",
            Covariate::CaseWeight
            | Covariate::CaseVolume
            | Covariate::PrimerWeight
            | Covariate::BulletWeight => "gr",
            Covariate::CaseMouthSquare => "0/1",
            _ => "in",
        }
    }

    fn must_be_positive(self) -> bool {
        matches!(
            self,
            Covariate::CaseWeight
                | Covariate::CaseVolume
                | Covariate::PrimerWeight
                | Covariate::BulletWeight
        )
    }

    pub fn from_column(name: &str) -> Option<Covariate> {
        Self::ALL.into_iter().find(|c| c.column() == name)
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// Covariate measurements of one cartridge, indexed by [`Covariate`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Covariates([f64; 13]);

impl Covariates {
    pub fn get(&self, c: Covariate) -> f64 {
        self.0[c as usize]
    }

    pub fn set(&mut self, c: Covariate, v: f64) {
        self.0[c as usize] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartridgeRecord {
    pub case_id: String,
    pub lot: String,
    pub seating_depth: f64,
    pub powder_charge: f64,
    pub covariates: Covariates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    ShooterError,
    Tumbled,
    WrongTarget,
    Other,
}

impl InvalidReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InvalidReason::ShooterError => "shooter_error",
            InvalidReason::Tumbled => "tumbled",
            InvalidReason::WrongTarget => "wrong_target",
            InvalidReason::Other => "other",
        }
    }
}

impl FromStr for InvalidReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shooter_error" => Ok(Self::ShooterError),
            "tumbled" => Ok(Self::Tumbled),
            "wrong_target" => Ok(Self::WrongTarget),
            "other" => Ok(Self::Other),
            _ => Err(format!(
                "unknown reason `{s}` (expected shooter_error, tumbled, wrong_target or other)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub case_id: String,
    pub target_id: String,
    /// 1-based firing order.
    pub seq: u32,
    pub point: ImpactPoint,
    pub velocity: Option<f64>,
    pub valid: bool,
    pub invalid_reason: Option<InvalidReason>,
}

/// One invalidation flag; identifies a shot by `seq`, by `case_id`, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub seq: Option<u32>,
    pub case_id: Option<String>,
    pub reason: InvalidReason,
}

struct CsvRows {
    file: String,
    rows: Vec<csv::StringRecord>,
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_csv(file: &str, text: &str, expected: &[&str]) -> Result<CsvRows, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| DataError::Schema {
        file: file.into(),
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != expected {
        let message = if headers.is_empty() {
            "missing header".to_string()
        } else {
            format!("header must be `{}`", expected.join(","))
        };
        return Err(DataError::Schema {
            file: file.into(),
            message,
        });
    }
    let rows = rdr
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| row_err(file, i + 2, None, e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CsvRows {
        file: file.into(),
        rows,
    })
}

impl CsvRows {
    /// 1-based file line of data row `i` (the header is line 1).
    fn line(i: usize) -> usize {
        i + 2
    }

    fn number(&self, i: usize, col: usize, name: &str) -> Result<f64, DataError> {
        let raw = &self.rows[i][col];
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                row_err(
                    &self.file,
                    Self::line(i),
                    Some(name),
                    format!("not a finite number `{raw}`"),
                )
            })
    }

    fn text(&self, i: usize, col: usize, name: &str) -> Result<String, DataError> {
        let raw = &self.rows[i][col];
        if raw.is_empty() {
            return Err(row_err(
                &self.file,
                Self::line(i),
                Some(name),
                "empty value",
            ));
        }
        Ok(raw.to_string())
    }
}

pub fn cartridges_header() -> String {
    let mut h = vec!["case_id", "lot", "seating_depth", "powder_charge"];
    h.extend(Covariate::ALL.iter().map(|c| c.column()));
    h.join(",")
}

pub fn parse_cartridges(text: &str) -> Result<Vec<CartridgeRecord>, DataError> {
    let header = cartridges_header();
    let expected: Vec<&str> = header.split(',').collect();
    let csv = read_csv("cartridges.csv", text, &expected)?;
    let mut out = Vec::with_capacity(csv.rows.len());
    let mut seen: HashMap<String, usize> = HashMap::new();
    for i in 0..csv.rows.len() {
        let line = CsvRows::line(i);
        let case_id = csv.text(i, 0, "case_id")?;
        if let Some(first) = seen.insert(case_id.clone(), line) {
            return Err(row_err(
                "cartridges.csv",
                line,
                Some("case_id"),
                format!("duplicate case `{case_id}` (first on row {first})"),
            ));
        }
        let mut covariates = Covariates::default();
        for (k, c) in Covariate::ALL.into_iter().enumerate() {
            let v = csv.number(i, 4 + k, c.column())?;
            if c.must_be_positive() && v <= 0.0 {
                return Err(row_err(
                    "cartridges.csv",
                    line,
                    Some(c.column()),
                    "weight must be positive",
                ));
            }
            if c == Covariate::CaseMouthSquare && v != 0.0 && v != 1.0 {
                return Err(row_err(
                    "cartridges.csv",
                    line,
                    Some(c.column()),
                    "must be 0 or 1",
                ));
            }
            covariates.set(c, v);
        }
        out.push(CartridgeRecord {
            case_id,
            lot: csv.text(i, 1, "lot")?,
            seating_depth: csv.number(i, 2, "seating_depth")?,
            powder_charge: csv.number(i, 3, "powder_charge")?,
            covariates,
        });
    }
    Ok(out)
}

pub fn cartridges_to_csv(records: &[CartridgeRecord]) -> String {
    let mut out = cartridges_header();
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}",
            r.case_id, r.lot, r.seating_depth, r.powder_charge
        ));
        for c in Covariate::ALL {
            out.push(',');
            out.push_str(&r.covariates.get(c).to_string());
        }
        out.push('\n');
    }
    out
}

pub fn parse_shots(text: &str) -> Result<Vec<ShotRecord>, DataError> {
    let expected: Vec<&str> = SHOTS_HEADER.split(',').collect();
    let csv = read_csv("shots.csv", text, &expected)?;
    let mut out = Vec::with_capacity(csv.rows.len());
    let mut seen: HashMap<u32, usize> = HashMap::new();
    for i in 0..csv.rows.len() {
        let line = CsvRows::line(i);
        let raw_seq = &csv.rows[i][2];
        let seq: u32 = raw_seq.parse().ok().filter(|&s| s >= 1).ok_or_else(|| {
            row_err(
                "shots.csv",
                line,
                Some("seq"),
                format!("bad firing order `{raw_seq}`"),
            )
        })?;
        if let Some(first) = seen.insert(seq, line) {
            return Err(row_err(
                "shots.csv",
                line,
                Some("seq"),
                format!("duplicate seq {seq} (first on row {first})"),
            ));
        }
        let velocity = if csv.rows[i][5].is_empty() {
            None
        } else {
            Some(csv.number(i, 5, "velocity")?)
        };
        out.push(ShotRecord {
            case_id: csv.text(i, 0, "case_id")?,
            target_id: csv.text(i, 1, "target_id")?,
            seq,
            point: ImpactPoint::new(csv.number(i, 3, "x")?, csv.number(i, 4, "y")?),
            velocity,
            valid: true,
            invalid_reason: None,
        });
    }
    Ok(out)
}

pub fn shots_to_csv(shots: &[ShotRecord]) -> String {
    let mut out = format!("{SHOTS_HEADER}\n");
    for s in shots {
        let v = s.velocity.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.case_id, s.target_id, s.seq, s.point.x, s.point.y, v
        ));
    }
    out
}

pub fn parse_flags(text: &str) -> Result<Vec<Flag>, DataError> {
    let expected: Vec<&str> = FLAGS_HEADER.split(',').collect();
    let csv = read_csv("flags.csv", text, &expected)?;
    let mut out = Vec::with_capacity(csv.rows.len());
    for (i, r) in csv.rows.iter().enumerate() {
        let line = CsvRows::line(i);
        let seq = if r[0].is_empty() {
            None
        } else {
            Some(r[0].parse::<u32>().map_err(|_| {
                row_err(
                    "flags.csv",
                    line,
                    Some("seq"),
                    format!("bad firing order `{}`", &r[0]),
                )
            })?)
        };
        let case_id = (!r[1].is_empty()).then(|| r[1].to_string());
        if seq.is_none() && case_id.is_none() {
            return Err(row_err(
                "flags.csv",
                line,
                None,
                "a flag needs seq or case_id",
            ));
        }
        let reason = r[2]
            .parse()
            .map_err(|e: String| row_err("flags.csv", line, Some("reason"), e))?;
        out.push(Flag {
            seq,
            case_id,
            reason,
        });
    }
    Ok(out)
}

pub fn flags_to_csv(flags: &[Flag]) -> String {
    let mut out = format!("{FLAGS_HEADER}\n");
    for f in flags {
        let seq = f.seq.map(|s| s.to_string()).unwrap_or_default();
        let case = f.case_id.clone().unwrap_or_default();
        out.push_str(&format!("{seq},{case},{}\n", f.reason.as_str()));
    }
    out
}

/// Counts after invalidation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvalidationReport {
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    pub by_reason: BTreeMap<InvalidReason, usize>,
}

/// Shots joined to cartridges and the randomization plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Length unit of impact coordinates; a label only, never converted.
    pub unit: String,
    pub plan: DesignPlan,
    pub cartridges: Vec<CartridgeRecord>,
    pub shots: Vec<ShotRecord>,
    /// Index into `cartridges` for each shot.
    shot_cartridge: Vec<usize>,
}

/// A valid shot with its cartridge.
#[derive(Debug, Clone, Copy)]
pub struct JoinedShot<'a> {
    pub shot: &'a ShotRecord,
    pub cartridge: &'a CartridgeRecord,
}

impl Dataset {
    /// Validates referential integrity and joins shots to cartridges.
    pub fn from_parts(
        plan: DesignPlan,
        cartridges: Vec<CartridgeRecord>,
        shots: Vec<ShotRecord>,
    ) -> Result<Self, DataError> {
        let names: Vec<&str> = plan.factors.iter().map(|f| f.name.as_str()).collect();
        if names != ["seating_depth", "powder_charge"] {
            return Err(DataError::Schema {
                file: "plan".into(),
                message: "plan factors must be seating_depth, powder_charge".into(),
            });
        }
        let by_plan: HashMap<&str, usize> = plan
            .assignments
            .iter()
            .enumerate()
            .map(|(i, a)| (a.case_id.as_str(), i))
            .collect();
        let (sd, pc) = (&plan.factors[0], &plan.factors[1]);
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, c) in cartridges.iter().enumerate() {
            let line = CsvRows::line(i);
            if index.insert(c.case_id.as_str(), i).is_some() {
                return Err(row_err(
                    "cartridges.csv",
                    line,
                    Some("case_id"),
                    format!("duplicate case `{}`", c.case_id),
                ));
            }
            if sd.level_index(c.seating_depth).is_none() {
                return Err(row_err(
                    "cartridges.csv",
                    line,
                    Some("seating_depth"),
                    format!("{} is not a plan level", c.seating_depth),
                ));
            }
            if pc.level_index(c.powder_charge).is_none() {
                return Err(row_err(
                    "cartridges.csv",
                    line,
                    Some("powder_charge"),
                    format!("{} is not a plan level", c.powder_charge),
                ));
            }
            let a = by_plan
                .get(c.case_id.as_str())
                .map(|&k| &plan.assignments[k])
                .ok_or_else(|| {
                    row_err(
                        "cartridges.csv",
                        line,
                        Some("case_id"),
                        format!("case `{}` is not in the plan", c.case_id),
                    )
                })?;
            let agrees = a.block == c.lot
                && levels_match(a.values[0], c.seating_depth)
                && levels_match(a.values[1], c.powder_charge);
            if !agrees {
                return Err(row_err(
                    "cartridges.csv",
                    line,
                    None,
                    format!(
                        "case `{}` disagrees with its plan assignment (lot {}, levels {:?})",
                        c.case_id, a.block, a.values
                    ),
                ));
            }
        }
        let mut shot_cartridge = Vec::with_capacity(shots.len());
        let mut seqs: HashMap<u32, usize> = HashMap::new();
        for (i, s) in shots.iter().enumerate() {
            let line = CsvRows::line(i);
            if seqs.insert(s.seq, i).is_some() {
                return Err(row_err(
                    "shots.csv",
                    line,
                    Some("seq"),
                    format!("duplicate seq {}", s.seq),
                ));
            }
            let k = index.get(s.case_id.as_str()).ok_or_else(|| {
                row_err(
                    "shots.csv",
                    line,
                    Some("case_id"),
                    format!("unknown case_id `{}`", s.case_id),
                )
            })?;
            shot_cartridge.push(*k);
        }
        Ok(Self {
            unit: "mm".into(),
            plan,
            cartridges,
            shots,
            shot_cartridge,
        })
    }

    pub fn parse(shots: &str, cartridges: &str, plan: DesignPlan) -> Result<Self, DataError> {
        Self::from_parts(plan, parse_cartridges(cartridges)?, parse_shots(shots)?)
    }

    /// Reads the shots, cartridges and plan files (plus the plan sidecar).
    pub fn load(shots: &Path, cartridges: &Path, plan: &Path) -> Result<Self, DataError> {
        let plan = DesignPlan::read(plan)?;
        Self::parse(&read_text(shots)?, &read_text(cartridges)?, plan)
    }

    /// Flags describing the current invalid shots, in firing order.
    pub fn flags(&self) -> Vec<Flag> {
        let mut flags: Vec<Flag> = self
            .shots
            .iter()
            .filter_map(|s| {
                s.invalid_reason.map(|reason| Flag {
                    seq: Some(s.seq),
                    case_id: Some(s.case_id.clone()),
                    reason,
                })
            })
            .collect();
        flags.sort_by_key(|f| f.seq);
        flags
    }

    /// Writes shots.csv, cartridges.csv, plan.csv/plan.json and, when any
    /// shot is invalid, flags.csv into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), DataError> {
        let io = |path: &Path| {
            let p = path.display().to_string();
            move |source| DataError::Io { path: p, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let shots = dir.join("shots.csv");
        fs::write(&shots, shots_to_csv(&self.shots)).map_err(io(&shots))?;
        let carts = dir.join("cartridges.csv");
        fs::write(&carts, cartridges_to_csv(&self.cartridges)).map_err(io(&carts))?;
        self.plan.write(&dir.join("plan.csv"))?;
        let flags = self.flags();
        if !flags.is_empty() {
            let p = dir.join("flags.csv");
            fs::write(&p, flags_to_csv(&flags)).map_err(io(&p))?;
        }
        Ok(())
    }

    /// Marks flagged shots invalid. Every flag is checked before any shot is
    /// touched; coordinates and covariates are never modified.
    pub fn apply_invalidation(&mut self, flags: &[Flag]) -> Result<InvalidationReport, DataError> {
        let mut targets = Vec::with_capacity(flags.len());
        for (i, f) in flags.iter().enumerate() {
            let line = CsvRows::line(i);
            let matches: Vec<usize> = self
                .shots
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    f.seq.is_none_or(|q| q == s.seq)
                        && f.case_id.as_ref().is_none_or(|c| *c == s.case_id)
                })
                .map(|(k, _)| k)
                .collect();
            if matches.is_empty() {
                let what = match (&f.seq, &f.case_id) {
                    (Some(q), Some(c)) => format!("seq {q} / case `{c}`"),
                    (Some(q), None) => format!("seq {q}"),
                    (None, Some(c)) => format!("case `{c}`"),
                    (None, None) => "nothing".into(),
                };
                return Err(row_err(
                    "flags.csv",
                    line,
                    None,
                    format!("flag references unknown shot: {what}"),
                ));
            }
            targets.extend(matches.into_iter().map(|k| (k, f.reason)));
        }
        for (k, reason) in targets {
            let s = &mut self.shots[k];
            s.valid = false;
            s.invalid_reason = Some(reason);
        }
        Ok(self.invalidation_report())
    }

    pub fn apply_flags_file(&mut self, path: &Path) -> Result<InvalidationReport, DataError> {
        let flags = parse_flags(&read_text(path)?)?;
        self.apply_invalidation(&flags)
    }

    pub fn invalidation_report(&self) -> InvalidationReport {
        let mut by_reason = BTreeMap::new();
        for r in self.shots.iter().filter_map(|s| s.invalid_reason) {
            *by_reason.entry(r).or_insert(0) += 1;
        }
        let invalid = self.shots.iter().filter(|s| !s.valid).count();
        InvalidationReport {
            total: self.shots.len(),
            valid: self.shots.len() - invalid,
            invalid,
            by_reason,
        }
    }

    pub fn valid_shots(&self) -> impl Iterator<Item = JoinedShot<'_>> {
        self.shots
            .iter()
            .zip(&self.shot_cartridge)
            .filter(|(s, _)| s.valid)
            .map(|(s, &k)| JoinedShot {
                shot: s,
                cartridge: &self.cartridges[k],
            })
    }

    /// Cartridges behind the valid shots, in shot order.
    pub fn valid_cartridges(&self) -> Vec<CartridgeRecord> {
        self.valid_shots().map(|j| j.cartridge.clone()).collect()
    }

    pub fn sd_levels(&self) -> &[f64] {
        &self.plan.factors[0].levels
    }

    pub fn pc_levels(&self) -> &[f64] {
        &self.plan.factors[1].levels
    }

    fn cell_shots(&self) -> Vec<CellShot> {
        self.valid_shots()
            .map(|j| CellShot {
                seating_depth: j.cartridge.seating_depth,
                powder_charge: j.cartridge.powder_charge,
                point: j.shot.point,
            })
            .collect()
    }

    /// Cell-mean surface over the valid shots.
    pub fn surface(&self) -> Result<SurfaceGrid, DataError> {
        Ok(surface::cell_means(
            &self.cell_shots(),
            self.sd_levels(),
            self.pc_levels(),
        )?)
    }

    /// One row per valid shot: the radial deviation from its cell's group
    /// center, lot, both factors and every covariate.
    pub fn analysis_table(&self) -> Result<DataTable, DataError> {
        let grid = self.surface()?;
        let joined: Vec<JoinedShot> = self.valid_shots().collect();
        let n = joined.len();
        let mut response = Vec::with_capacity(n);
        for j in &joined {
            let i = self.plan.factors[0]
                .level_index(j.cartridge.seating_depth)
                .unwrap();
            let k = self.plan.factors[1]
                .level_index(j.cartridge.powder_charge)
                .unwrap();
            let center = grid.cells[i][k].center.expect("occupied cell has a center");
            response.push(Some(j.shot.point.distance(&center)));
        }
        let mut table = DataTable::new(n);
        table.insert(RESPONSE, Column::Numeric(response))?;
        table.insert(
            "lot",
            Column::Text(
                joined
                    .iter()
                    .map(|j| Some(j.cartridge.lot.clone()))
                    .collect(),
            ),
        )?;
        table.insert(
            "seating_depth",
            Column::Numeric(
                joined
                    .iter()
                    .map(|j| Some(j.cartridge.seating_depth))
                    .collect(),
            ),
        )?;
        table.insert(
            "powder_charge",
            Column::Numeric(
                joined
                    .iter()
                    .map(|j| Some(j.cartridge.powder_charge))
                    .collect(),
            ),
        )?;
        for c in Covariate::ALL {
            table.insert(
                c.column(),
                Column::Numeric(
                    joined
                        .iter()
                        .map(|j| Some(j.cartridge.covariates.get(c)))
                        .collect(),
                ),
            )?;
        }
        Ok(table)
    }

    /// Lot, seating depth, powder charge and their interaction, with the
    /// plan's level counts declared.
    pub fn anova_spec(&self) -> ModelSpec {
        let mut spec = anova_spec();
        spec.terms[0].declared_levels = Some(self.plan.blocks.len());
        spec.terms[1].declared_levels = Some(self.sd_levels().len());
        spec.terms[2].declared_levels = Some(self.pc_levels().len());
        spec
    }

    pub fn ancova_spec(&self) -> ModelSpec {
        let mut spec = self.anova_spec();
        spec.terms.extend(covariate_terms());
        spec
    }

    pub fn anova(&self) -> Result<linmod::AnovaTable, DataError> {
        Ok(linmod::type1_anova(
            &self.anova_spec(),
            &self.analysis_table()?,
        )?)
    }

    pub fn ancova(&self) -> Result<linmod::AnovaTable, DataError> {
        Ok(linmod::type1_ancova(
            &self.ancova_spec(),
            &self.analysis_table()?,
        )?)
    }
}

/// Lot block, then seating depth, powder charge and their interaction.
pub fn anova_spec() -> ModelSpec {
    ModelSpec::new(
        RESPONSE,
        vec![
            Term::block("lot", "lot"),
            Term::factor("Seating Depth", "seating_depth"),
            Term::factor("Powder Charge", "powder_charge"),
            Term::interaction(
                "Seating Depth * Powder Charge",
                &["seating_depth", "powder_charge"],
            ),
        ],
    )
}

fn covariate_terms() -> impl Iterator<Item = Term> {
    Covariate::MODEL_ORDER
        .into_iter()
        .map(|c| Term::covariate(c.label(), c.column()))
}

/// [`anova_spec`] followed by the thirteen covariates.
pub fn ancova_spec() -> ModelSpec {
    let mut spec = anova_spec();
    spec.terms.extend(covariate_terms());
    spec
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveRow {
    pub column: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub std_dev: Option<f64>,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

pub fn describe(column: &str, values: &[f64]) -> Result<DescriptiveRow, DataError> {
    if values.is_empty() {
        return Err(DataError::Empty);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_dev = (n > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(DescriptiveRow {
        column: column.into(),
        n,
        mean,
        std_dev,
        min: sorted[0],
        max: sorted[n - 1],
        median,
    })
}

fn numeric_column(cartridges: &[CartridgeRecord], name: &str) -> Result<Vec<f64>, DataError> {
    match name {
        "seating_depth" => Ok(cartridges.iter().map(|c| c.seating_depth).collect()),
        "powder_charge" => Ok(cartridges.iter().map(|c| c.powder_charge).collect()),
        "case_id" | "lot" => Err(DataError::NonNumeric(name.into())),
        _ => {
            let c = Covariate::from_column(name)
                .ok_or_else(|| DataError::UnknownColumn(name.into()))?;
            Ok(cartridges.iter().map(|r| r.covariates.get(c)).collect())
        }
    }
}

/// Mean, sample SD, min, max and median for each named column.
pub fn descriptive_stats(
    cartridges: &[CartridgeRecord],
    columns: &[&str],
) -> Result<Vec<DescriptiveRow>, DataError> {
    columns
        .iter()
        .map(|&name| describe(name, &numeric_column(cartridges, name)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenRow {
    pub covariate: Covariate,
    pub f: Option<f64>,
    pub p: Option<f64>,
    pub significant: bool,
    pub table: linmod::AnovaTable,
}

/// One-way ANOVA of each covariate on lot.
pub fn lot_difference_screen(
    cartridges: &[CartridgeRecord],
    alpha: f64,
) -> Result<Vec<ScreenRow>, DataError> {
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for c in cartridges {
        *sizes.entry(c.lot.as_str()).or_insert(0) += 1;
    }
    if sizes.len() < 2 {
        return Err(DataError::SingleLot(sizes.len()));
    }
    if let Some((lot, &n)) = sizes.iter().find(|(_, &n)| n < 2) {
        return Err(DataError::LotTooSmall {
            lot: lot.to_string(),
            n,
        });
    }
    let lots: Vec<&str> = cartridges.iter().map(|c| c.lot.as_str()).collect();
    Covariate::ALL
        .into_iter()
        .map(|cov| {
            let values: Vec<f64> = cartridges.iter().map(|c| c.covariates.get(cov)).collect();
            let data = DataTable::new(cartridges.len())
                .with_numeric(cov.column(), &values)?
                .with_text("lot", &lots)?;
            let spec = ModelSpec::new(cov.column(), vec![Term::block("lot", "lot")]);
            let table = linmod::type1_anova(&spec, &data)?;
            let row = &table.terms[0];
            Ok(ScreenRow {
                covariate: cov,
                f: row.f,
                p: row.p,
                significant: row.p.is_some_and(|p| p < alpha),
                table,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub seq: u32,
    pub distance: f64,
}

/// Later-half variance over earlier-half variance of the distances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRatio {
    pub first_n: usize,
    pub second_n: usize,
    pub first_var: f64,
    pub second_var: f64,
    pub f: f64,
    /// Two-sided p-value.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySeries {
    pub points: Vec<StabilityPoint>,
    /// Absent when either half has fewer than 2 shots or zero variance.
    pub halves: Option<VarianceRatio>,
}

impl StabilitySeries {
    pub fn degenerate(&self) -> bool {
        self.halves.is_none()
    }
}

fn sample_var(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Distance from the bulls-eye (target origin) of each valid shot in firing
/// order, with a two-halves variance-ratio check for constant dispersion.
pub fn stability_series(shots: &[ShotRecord]) -> StabilitySeries {
    let mut points: Vec<StabilityPoint> = shots
        .iter()
        .filter(|s| s.valid)
        .map(|s| StabilityPoint {
            seq: s.seq,
            distance: s.point.norm(),
        })
        .collect();
    points.sort_by_key(|p| p.seq);
    let d: Vec<f64> = points.iter().map(|p| p.distance).collect();
    let (first, second) = d.split_at(d.len() / 2);
    let halves = (first.len() >= 2 && second.len() >= 2)
        .then(|| (sample_var(first), sample_var(second)))
        .filter(|&(a, b)| a > 0.0 && b > 0.0)
        .map(|(first_var, second_var)| {
            let f = second_var / first_var;
            let df1 = (second.len() - 1) as f64;
            let df2 = (first.len() - 1) as f64;
            let upper = linmod::f_pvalue(f, df1, df2).expect("valid df");
            let lower = linmod::f_cdf(f, df1, df2).expect("valid df");
            VarianceRatio {
                first_n: first.len(),
                second_n: second.len(),
                first_var,
                second_var,
                f,
                p: (2.0 * upper.min(lower)).min(1.0),
            }
        });
    StabilitySeries { points, halves }
}
