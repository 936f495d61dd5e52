//! Cell-mean response surface over the seating depth x powder charge grid,
//! its ranking, and plot-ready CSV exports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doe::levels_match;
use crate::groupstats::{self, ImpactPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurfaceError {
    #[error("shot {index} at ({sd}, {pc}) does not map to a grid cell")]
    OffGrid { index: usize, sd: f64, pc: f64 },
    #[error("grid needs at least one level per axis, strictly increasing")]
    BadLevels,
    #[error("no occupied cells")]
    AllEmpty,
    #[error("unknown surface format `{0}` (expected long, dense or interpolated)")]
    UnknownFormat(String),
    #[error("surface import, line {line}: {message}")]
    Import { line: usize, message: String },
}

/// A valid shot located on the factor grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellShot {
    pub seating_depth: f64,
    pub powder_charge: f64,
    pub point: ImpactPoint,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub mean_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<ImpactPoint>,
}

impl Cell {
    pub fn occupied(&self) -> bool {
        self.mean_radius.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub sd_levels: Vec<f64>,
    pub pc_levels: Vec<f64>,
    /// `cells[sd][pc]`
    pub cells: Vec<Vec<Cell>>,
}

impl SurfaceGrid {
    pub fn empty(sd_levels: Vec<f64>, pc_levels: Vec<f64>) -> Result<Self, SurfaceError> {
        let ok = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
        if !ok(&sd_levels) || !ok(&pc_levels) {
            return Err(SurfaceError::BadLevels);
        }
        let cells = vec![vec![Cell::default(); pc_levels.len()]; sd_levels.len()];
        Ok(Self {
            sd_levels,
            pc_levels,
            cells,
        })
    }

    /// Sets a cell's value directly.
    pub fn set(&mut self, sd: usize, pc: usize, mean_radius: f64, n: usize) {
        self.cells[sd][pc] = Cell {
            n,
            mean_radius: Some(mean_radius),
            center: None,
        };
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.occupied()).count()
    }

    fn index_of(levels: &[f64], v: f64) -> Option<usize> {
        levels.iter().position(|&l| levels_match(l, v))
    }
}

/// Groups shots by cell and measures each group independently.
pub fn cell_means(
    shots: &[CellShot],
    sd_levels: &[f64],
    pc_levels: &[f64],
) -> Result<SurfaceGrid, SurfaceError> {
    let mut grid = SurfaceGrid::empty(sd_levels.to_vec(), pc_levels.to_vec())?;
    let mut members: Vec<Vec<Vec<ImpactPoint>>> =
        vec![vec![Vec::new(); pc_levels.len()]; sd_levels.len()];
    for (index, s) in shots.iter().enumerate() {
        let off = || SurfaceError::OffGrid {
            index,
            sd: s.seating_depth,
            pc: s.powder_charge,
        };
        let i = SurfaceGrid::index_of(sd_levels, s.seating_depth).ok_or_else(off)?;
        let j = SurfaceGrid::index_of(pc_levels, s.powder_charge).ok_or_else(off)?;
        members[i][j].push(s.point);
    }
    for (i, row) in members.iter().enumerate() {
        for (j, pts) in row.iter().enumerate() {
            if let Ok(summary) = groupstats::summarize(pts) {
                grid.cells[i][j] = Cell {
                    n: summary.n,
                    mean_radius: Some(summary.mean_radius),
                    center: Some(summary.center),
                };
            }
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub seating_depth: f64,
    pub powder_charge: f64,
    pub mean_radius: f64,
    pub n: usize,
}

/// Occupied cells, smallest mean radius first. Ties go to the lower powder
/// charge, then the lower seating depth.
pub fn rank_levels(grid: &SurfaceGrid) -> Result<Vec<RankEntry>, SurfaceError> {
    let mut entries: Vec<RankEntry> = Vec::new();
    for (i, row) in grid.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if let Some(mr) = cell.mean_radius {
                entries.push(RankEntry {
                    rank: 0,
                    seating_depth: grid.sd_levels[i],
                    powder_charge: grid.pc_levels[j],
                    mean_radius: mr,
                    n: cell.n,
                });
            }
        }
    }
    if entries.is_empty() {
        return Err(SurfaceError::AllEmpty);
    }
    entries.sort_by(|a, b| {
        a.mean_radius
            .total_cmp(&b.mean_radius)
            .then(a.powder_charge.total_cmp(&b.powder_charge))
            .then(a.seating_depth.total_cmp(&b.seating_depth))
    });
    for (k, e) in entries.iter_mut().enumerate() {
        e.rank = k + 1;
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceFormat {
    /// `seating_depth,powder_charge,mean_radius,n`, one row per cell.
    Long,
    /// Seating depths down, powder charges across; blank where unoccupied.
    Dense,
    /// Bilinear interpolation between occupied cells, long layout. Derived
    /// data for plotting only.
    Interpolated { steps: usize },
}

impl FromStr for SurfaceFormat {
    type Err = SurfaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long" => Ok(Self::Long),
            "dense" => Ok(Self::Dense),
            "interpolated" => Ok(Self::Interpolated { steps: 4 }),
            other => Err(SurfaceError::UnknownFormat(other.into())),
        }
    }
}

pub const LONG_HEADER: &str = "seating_depth,powder_charge,mean_radius,n";
pub const INTERPOLATED_HEADER: &str = "seating_depth,powder_charge,mean_radius_interpolated";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn export_surface(grid: &SurfaceGrid, format: SurfaceFormat) -> String {
    let mut out = String::new();
    match format {
        SurfaceFormat::Long => {
            out.push_str(LONG_HEADER);
            out.push('\n');
            for (i, row) in grid.cells.iter().enumerate() {
                for (j, cell) in row.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        grid.sd_levels[i],
                        grid.pc_levels[j],
                        fmt_opt(cell.mean_radius),
                        cell.n
                    );
                }
            }
        }
        SurfaceFormat::Dense => {
            out.push_str("seating_depth");
            for pc in &grid.pc_levels {
                let _ = write!(out, ",{pc}");
            }
            out.push('\n');
            for (i, row) in grid.cells.iter().enumerate() {
                out.push_str(&grid.sd_levels[i].to_string());
                for cell in row {
                    out.push(',');
                    out.push_str(&fmt_opt(cell.mean_radius));
                }
                out.push('\n');
            }
        }
        SurfaceFormat::Interpolated { steps } => {
            out.push_str(INTERPOLATED_HEADER);
            out.push('\n');
            let steps = steps.max(1);
            let axis = |levels: &[f64]| -> Vec<(usize, f64)> {
                // (lower cell index, fraction toward the next level)
                let mut pts = Vec::new();
                for k in 0..levels.len().saturating_sub(1) {
                    for s in 0..steps {
                        pts.push((k, s as f64 / steps as f64));
                    }
                }
                pts.push((levels.len() - 1, 0.0));
                pts
            };
            for &(i, u) in &axis(&grid.sd_levels) {
                for &(j, v) in &axis(&grid.pc_levels) {
                    let sd = lerp_level(&grid.sd_levels, i, u);
                    let pc = lerp_level(&grid.pc_levels, j, v);
                    let value = bilinear(grid, i, j, u, v);
                    let _ = writeln!(out, "{sd},{pc},{}", fmt_opt(value));
                }
            }
        }
    }
    out
}

fn lerp_level(levels: &[f64], k: usize, t: f64) -> f64 {
    if t == 0.0 {
        levels[k]
    } else {
        levels[k] + t * (levels[k + 1] - levels[k])
    }
}

fn bilinear(grid: &SurfaceGrid, i: usize, j: usize, u: f64, v: f64) -> Option<f64> {
    let at = |di: usize, dj: usize| grid.cells[i + di][j + dj].mean_radius;
    let i1 = usize::from(u > 0.0);
    let j1 = usize::from(v > 0.0);
    let (a, b, c, d) = (at(0, 0)?, at(i1, 0)?, at(0, j1)?, at(i1, j1)?);
    Some(a * (1.0 - u) * (1.0 - v) + b * u * (1.0 - v) + c * (1.0 - u) * v + d * u * v)
}

/// Reads a long or dense export back into a grid. Dense exports carry no
/// counts; imported occupied cells get `n = 1`.
pub fn import_surface(text: &str, format: SurfaceFormat) -> Result<SurfaceGrid, SurfaceError> {
    let err = |line: usize, message: String| SurfaceError::Import { line, message };
    let num = |line: usize, s: &str| -> Result<f64, SurfaceError> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| err(line, format!("not a number `{s}`")))
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty input".into()))?;
    match format {
        SurfaceFormat::Long => {
            if header != LONG_HEADER {
                return Err(err(1, format!("header must be `{LONG_HEADER}`")));
            }
            let mut rows = Vec::new();
            for (ln, l) in lines {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 4 {
                    return Err(err(ln, format!("expected 4 fields, found {}", f.len())));
                }
                let mr = if f[2].is_empty() {
                    None
                } else {
                    Some(num(ln, f[2])?)
                };
                let n: usize = f[3]
                    .trim()
                    .parse()
                    .map_err(|_| err(ln, format!("bad count `{}`", f[3])))?;
                rows.push((num(ln, f[0])?, num(ln, f[1])?, mr, n));
            }
            let mut sd: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let mut pc: Vec<f64> = rows.iter().map(|r| r.1).collect();
            for v in [&mut sd, &mut pc] {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
            let mut grid = SurfaceGrid::empty(sd, pc)?;
            for (s, p, mr, n) in rows {
                let i = SurfaceGrid::index_of(&grid.sd_levels, s).unwrap();
                let j = SurfaceGrid::index_of(&grid.pc_levels, p).unwrap();
                grid.cells[i][j] = Cell {
                    n,
                    mean_radius: mr,
                    center: None,
                };
            }
            Ok(grid)
        }
        SurfaceFormat::Dense => {
            let h: Vec<&str> = header.split(',').collect();
            if h.first() != Some(&"seating_depth") {
                return Err(err(1, "first header field must be `seating_depth`".into()));
            }
            let pc = h[1..]
                .iter()
                .map(|s| num(1, s))
                .collect::<Result<Vec<_>, _>>()?;
            let mut sd = Vec::new();
            let mut values = Vec::new();
            for (ln, l) in lines {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != h.len() {
                    return Err(err(
                        ln,
                        format!("expected {} fields, found {}", h.len(), f.len()),
                    ));
                }
                sd.push(num(ln, f[0])?);
                let row = f[1..]
                    .iter()
                    .map(|s| {
                        if s.is_empty() {
                            Ok(None)
                        } else {
                            num(ln, s).map(Some)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                values.push(row);
            }
            let mut grid = SurfaceGrid::empty(sd, pc)?;
            for (i, row) in values.into_iter().enumerate() {
                for (j, v) in row.into_iter().enumerate() {
                    if let Some(v) = v {
                        grid.set(i, j, v, 1);
                    }
                }
            }
            Ok(grid)
        }
        SurfaceFormat::Interpolated { .. } => Err(SurfaceError::UnknownFormat(
            "interpolated exports cannot be imported".into(),
        )),
    }
}
