mod error;
mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loadopt::dataio::{self, CartridgeRecord, Covariate, Dataset};
use loadopt::doe::{self, DesignPlan, DesignSkeleton, FactorDef};
use loadopt::linmod::{self, ModelSpec};
use loadopt::shotsim::{self, EffectModel};
use loadopt::surface::{self, SurfaceFormat, SurfaceGrid};
use serde::Serialize;

use error::CliError;

#[derive(Parser)]
#[command(
    name = "loadopt",
    version,
    about = "Blocked seating-depth x powder-charge load development"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a randomized block plan (plan CSV plus JSON sidecar).
    Design(DesignArgs),
    /// Simulate cartridges and shots for a plan.
    Simulate(SimulateArgs),
    /// Descriptive statistics of cartridge measurements.
    Stats(StatsArgs),
    /// One-way ANOVA of each covariate on lot.
    ScreenLots(ScreenArgs),
    /// Sequential ANOVA: lot, seating depth, powder charge, interaction.
    Anova(ModelArgs),
    /// Sequential ANCOVA: the ANOVA terms followed by the thirteen covariates.
    Ancova(ModelArgs),
    /// Cell-mean surface export.
    Surface(SurfaceArgs),
    /// Cells ordered by mean radius.
    Rank(RankArgs),
    /// Distance from the bulls-eye in firing order.
    Stability(StabilityArgs),
    /// Empirical detection rates over many simulated experiments.
    Power(PowerArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding shots.csv, cartridges.csv, plan.csv and optionally flags.csv.
    #[arg(long, short = 'd')]
    dir: Option<PathBuf>,
    #[arg(long)]
    shots: Option<PathBuf>,
    #[arg(long)]
    cartridges: Option<PathBuf>,
    /// Plan CSV; its `.json` sidecar must sit next to it.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Invalidation flags (default: flags.csv in --dir when present).
    #[arg(long)]
    flags: Option<PathBuf>,
    /// Ignore all invalidation flags.
    #[arg(long)]
    no_flags: bool,
    /// Length unit of impact coordinates, used in labels only.
    #[arg(long, default_value = "mm")]
    unit: String,
}

impl DataArgs {
    fn path(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
        explicit
            .clone()
            .or_else(|| self.dir.as_ref().map(|d| d.join(name)))
            .ok_or_else(|| {
                CliError::Validation(format!("need --{} or --dir", name.trim_end_matches(".csv")))
            })
    }

    fn flags_path(&self) -> Option<PathBuf> {
        if self.no_flags {
            return None;
        }
        self.flags.clone().or_else(|| {
            self.dir
                .as_ref()
                .map(|d| d.join("flags.csv"))
                .filter(|p| p.exists())
        })
    }

    /// Cartridge file alone, without shots or plan.
    fn cartridges_only(&self) -> bool {
        self.dir.is_none() && self.shots.is_none() && self.cartridges.is_some()
    }

    fn load(&self) -> Result<Dataset, CliError> {
        let mut ds = Dataset::load(
            &self.path(&self.shots, "shots.csv")?,
            &self.path(&self.cartridges, "cartridges.csv")?,
            &self.path(&self.plan, "plan.csv")?,
        )?;
        ds.unit = self.unit.clone();
        if let Some(flags) = self.flags_path() {
            ds.apply_flags_file(&flags)?;
        }
        Ok(ds)
    }

    fn read_cartridges(&self) -> Result<Vec<CartridgeRecord>, CliError> {
        let path = self.path(&self.cartridges, "cartridges.csv")?;
        Ok(dataio::parse_cartridges(&read(&path)?)?)
    }
}

#[derive(Args)]
struct OutArgs {
    /// Write to this file instead of stdout.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TextOrJson {
    Text,
    Json,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    seed: u64,
    /// Plan CSV path; the sidecar goes next to it with a `.json` extension.
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// Seating depth levels in inches (default 0.005..0.030 by 0.005).
    #[arg(long, value_delimiter = ',')]
    sd_levels: Option<Vec<f64>>,
    /// Powder charge levels in grains (default 25.3..26.2 by 0.1).
    #[arg(long, value_delimiter = ',')]
    pc_levels: Option<Vec<f64>>,
    /// Lot identifiers.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    lots: Vec<String>,
    #[arg(long, default_value_t = 100)]
    cases_per_lot: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Effect model JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config baseline dispersion.
    #[arg(long)]
    sigma: Option<f64>,
    /// Flag 10 shooter errors, 4 tumbled bullets and 6 wrong-target hits.
    #[arg(long)]
    standard_flags: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Columns to summarize (default: every covariate).
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Include cartridges whose shot was invalidated.
    #[arg(long)]
    all_units: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Term order, by term name or column name (default: the standard order).
    #[arg(long, value_delimiter = ',')]
    terms: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// long, dense or interpolated.
    #[arg(long, default_value = "long")]
    format: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Rank a surface CSV instead of raw data.
    #[arg(long, conflicts_with_all = ["dir", "shots", "cartridges", "plan"])]
    grid: Option<PathBuf>,
    /// Layout of --grid: long or dense.
    #[arg(long, default_value = "long")]
    grid_format: String,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    bottom: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    seeds: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Checkerboard dispersion multipliers LOW,HIGH over the whole grid.
    #[arg(long, value_delimiter = ',')]
    checkerboard: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "text")]
    format: TextOrJson,
    #[command(flatten)]
    out: OutArgs,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn emit(out: &OutArgs, text: &str) -> Result<(), CliError> {
    match &out.out {
        Some(p) => {
            fs::write(p, text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn design(a: DesignArgs) -> Result<(), CliError> {
    let mut sd = FactorDef::default_seating_depth();
    let mut pc = FactorDef::default_powder_charge();
    if let Some(l) = a.sd_levels {
        sd = FactorDef::new(&sd.name, &sd.unit, l)?;
    }
    if let Some(l) = a.pc_levels {
        pc = FactorDef::new(&pc.name, &pc.unit, l)?;
    }
    let skeleton = DesignSkeleton {
        factors: vec![sd, pc],
        blocks: a.lots,
        cases_per_block: a.cases_per_lot,
    };
    let plan = doe::randomize_assignment(&skeleton, a.seed)?;
    plan.write(&a.out)?;
    let counts = doe::assignment_counts(&plan);
    let per_level = counts.level_totals();
    println!(
        "wrote {} ({} cases, {} levels, {} lots, seed {}); cases per level {}..{}",
        a.out.display(),
        counts.total(),
        per_level.len(),
        plan.blocks.len(),
        a.seed,
        per_level.iter().min().unwrap_or(&0),
        per_level.iter().max().unwrap_or(&0)
    );
    Ok(())
}

fn load_effects(path: &Option<PathBuf>) -> Result<EffectModel, CliError> {
    match path {
        Some(p) => Ok(EffectModel::from_json(&read(p)?)?),
        None => Ok(EffectModel::default()),
    }
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let plan = DesignPlan::read(&a.plan)?;
    let mut effects = load_effects(&a.config)?;
    if let Some(s) = a.seed {
        effects.seed = s;
    }
    if let Some(s) = a.sigma {
        effects.sigma = s;
    }
    if a.standard_flags {
        effects = effects.with_standard_invalidations();
    }
    let sim = shotsim::simulate_experiment(&plan, &effects)?;
    sim.write(&plan, &a.out_dir)?;
    let effects_path = a.out_dir.join("effects.json");
    fs::write(&effects_path, effects.to_json())
        .map_err(|e| CliError::Validation(format!("{}: {e}", effects_path.display())))?;
    println!(
        "wrote {} ({} shots, {} flagged, seed {})",
        a.out_dir.display(),
        sim.shots.len(),
        sim.flags.len(),
        effects.seed
    );
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let cartridges = if a.data.cartridges_only() {
        a.data.read_cartridges()?
    } else {
        let ds = a.data.load()?;
        if a.all_units {
            ds.cartridges.clone()
        } else {
            ds.valid_cartridges()
        }
    };
    let columns: Vec<String> = a.columns.unwrap_or_else(|| {
        Covariate::ALL
            .iter()
            .map(|c| c.column().to_string())
            .collect()
    });
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows = dataio::descriptive_stats(&cartridges, &names)?;
    let text = match a.format {
        TextOrJson::Text => render::descriptive(&rows),
        TextOrJson::Json => json(&rows),
    };
    emit(&a.out, &text)
}

fn screen_lots(a: ScreenArgs) -> Result<(), CliError> {
    let cartridges = if a.data.cartridges_only() {
        a.data.read_cartridges()?
    } else {
        a.data.load()?.cartridges
    };
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Validation(format!(
            "alpha must be in (0, 1), got {}",
            a.alpha
        )));
    }
    let rows = dataio::lot_difference_screen(&cartridges, a.alpha)?;
    let text = match a.format {
        TextOrJson::Text => render::screen(&rows, a.alpha),
        TextOrJson::Json => json(&rows),
    };
    emit(&a.out, &text)
}

fn reorder(spec: ModelSpec, order: &[String]) -> Result<ModelSpec, CliError> {
    let mut remaining = spec.terms;
    let mut terms = Vec::with_capacity(order.len());
    for name in order {
        let name = name.trim();
        let k = remaining
            .iter()
            .position(|t| t.name == name || (t.sources.len() == 1 && t.sources[0] == name))
            .ok_or_else(|| CliError::Validation(format!("unknown or repeated term `{name}`")))?;
        terms.push(remaining.remove(k));
    }
    Ok(ModelSpec::new(spec.response, terms))
}

fn model(a: ModelArgs, covariates: bool) -> Result<(), CliError> {
    let ds = a.data.load()?;
    let mut spec = if covariates {
        ds.ancova_spec()
    } else {
        ds.anova_spec()
    };
    if let Some(order) = &a.terms {
        spec = reorder(spec, order)?;
    }
    let data = ds.analysis_table()?;
    let table = if covariates {
        linmod::type1_ancova(&spec, &data)?
    } else {
        linmod::type1_anova(&spec, &data)?
    };
    let text = match a.format {
        TableFormat::Text => render::anova(&table, Some(&ds.unit)),
        TableFormat::Json => json(&table),
        TableFormat::Csv => render::anova_csv(&table),
    };
    emit(&a.out, &text)
}

fn surface_cmd(a: SurfaceArgs) -> Result<(), CliError> {
    let format: SurfaceFormat = a.format.parse()?;
    let grid = a.data.load()?.surface()?;
    emit(&a.out, &surface::export_surface(&grid, format))
}

fn rank(a: RankArgs) -> Result<(), CliError> {
    let (grid, unit, show_counts): (SurfaceGrid, String, bool) = match &a.grid {
        Some(p) => {
            let format: SurfaceFormat = a.grid_format.parse()?;
            (
                surface::import_surface(&read(p)?, format)?,
                a.data.unit.clone(),
                format == SurfaceFormat::Long,
            )
        }
        None => {
            let ds = a.data.load()?;
            (ds.surface()?, ds.unit, true)
        }
    };
    let all = surface::rank_levels(&grid)?;
    let selected = match (a.top, a.bottom) {
        (None, None) => all.clone(),
        (top, bottom) => {
            let head = top.unwrap_or(0).min(all.len());
            let tail_start = all.len().saturating_sub(bottom.unwrap_or(0)).max(head);
            all[..head]
                .iter()
                .chain(&all[tail_start..])
                .cloned()
                .collect()
        }
    };
    let text = match a.format {
        TextOrJson::Text => render::ranking(
            &selected,
            render::level_decimals(&grid.sd_levels),
            render::level_decimals(&grid.pc_levels),
            &unit,
            show_counts,
        ),
        TextOrJson::Json => json(&selected),
    };
    emit(&a.out, &text)
}

fn stability(a: StabilityArgs) -> Result<(), CliError> {
    let ds = a.data.load()?;
    let series = dataio::stability_series(&ds.shots);
    let text = match a.format {
        TableFormat::Text => render::stability(&series),
        TableFormat::Json => json(&series),
        TableFormat::Csv => {
            let mut s = String::from("seq,distance\n");
            for p in &series.points {
                s.push_str(&format!("{},{}\n", p.seq, p.distance));
            }
            s
        }
    };
    emit(&a.out, &text)
}

fn power(a: PowerArgs) -> Result<(), CliError> {
    let plan = DesignPlan::read(&a.plan)?;
    let mut effects = load_effects(&a.config)?;
    if let Some(cb) = &a.checkerboard {
        let [low, high] = cb[..] else {
            return Err(CliError::Validation("--checkerboard takes LOW,HIGH".into()));
        };
        effects.cell_multipliers = shotsim::checkerboard_multipliers(
            &plan.factors[0].levels,
            &plan.factors[1].levels,
            low,
            high,
        );
    }
    let report = shotsim::power_run(&plan, &effects, a.seeds, a.alpha)?;
    let text = match a.format {
        TextOrJson::Text => render::power(&report),
        TextOrJson::Json => json(&report),
    };
    emit(&a.out, &text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design(a) => design(a),
        Command::Simulate(a) => simulate(a),
        Command::Stats(a) => stats(a),
        Command::ScreenLots(a) => screen_lots(a),
        Command::Anova(a) => model(a, false),
        Command::Ancova(a) => model(a, true),
        Command::Surface(a) => surface_cmd(a),
        Command::Rank(a) => rank(a),
        Command::Stability(a) => stability(a),
        Command::Power(a) => power(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
