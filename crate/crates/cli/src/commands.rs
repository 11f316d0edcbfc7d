use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use copula_bounds::corrmodels::CorrelationModel;
use copula_bounds::estimators::{estimator_benchmark, BenchConfig};
use copula_bounds::infobounds::bound_curve;
use copula_bounds::lanlab::{mc_lan_experiment, quad_convergence, QuadConvRow};
use copula_bounds::{LanConfig, Result};

use crate::config::{RunConfig, Subcommand, DEFAULT_PANEL_P};

pub const SYMMETRY_CSV_HEADER: [&str; 5] = ["family", "theta", "component", "spread", "symmetric"];

pub fn run(config: &RunConfig) -> Result<()> {
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir)?;
        config.write_ini(BufWriter::new(File::create(dir.join("config.ini"))?))?;
    }
    match config.command {
        Subcommand::Bounds => bounds(config),
        Subcommand::Symmetry => symmetry(config),
        Subcommand::Lan => lan(config),
        Subcommand::Quadconv => quadconv(config),
        Subcommand::Estimate => estimate(config),
    }
}

/// Write `name` under `--out`, or to stdout when no directory is set.
fn primary<F>(config: &RunConfig, name: &str, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match &config.out {
        Some(dir) => to_file(dir, name, write),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

/// Write `name` under `--out`; without it, say where it would have gone.
fn secondary<F>(config: &RunConfig, name: &str, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match &config.out {
        Some(dir) => to_file(dir, name, write),
        None => {
            eprintln!("note: {name} is only written with --out");
            Ok(())
        }
    }
}

fn to_file<F>(dir: &Path, name: &str, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn bounds(config: &RunConfig) -> Result<()> {
    let model = config.model()?;
    let grid: Vec<f64> = config
        .grid_points(model)?
        .into_iter()
        .map(|t| t[0])
        .collect();
    let curve = bound_curve(model, &grid, &config.regimes)?;
    primary(config, "bounds.csv", |w| curve.write_csv(w))?;
    if config.differences {
        secondary(config, "differences.csv", |w| {
            curve.write_differences_csv(w)
        })?;
    }
    Ok(())
}

fn symmetry_panel(config: &RunConfig) -> Result<Vec<CorrelationModel>> {
    if let Some(m) = &config.model {
        return Ok(vec![*m]);
    }
    let p = config.p.unwrap_or(DEFAULT_PANEL_P);
    Ok(vec![
        CorrelationModel::exchangeable(p)?,
        CorrelationModel::circular(),
        CorrelationModel::ar1(2)?,
        CorrelationModel::ar1(p)?,
    ])
}

fn symmetry(config: &RunConfig) -> Result<()> {
    let mut rows = Vec::new();
    for model in symmetry_panel(config)? {
        for theta in config.grid_points(&model)? {
            // relative to the size of diag(B C_θk), which blows up near the boundary
            let scale = model
                .at(&theta)?
                .bc
                .iter()
                .map(|bc| bc.diagonal().amax())
                .fold(1.0, f64::max);
            for (k, spread) in model.symmetry_spread(&theta)?.into_iter().enumerate() {
                let ok = spread <= config.tol * scale;
                let theta_k = if theta.len() == 1 { theta[0] } else { theta[k] };
                rows.push([
                    model.to_string(),
                    format!("{theta_k:.16e}"),
                    k.to_string(),
                    format!("{spread:.16e}"),
                    ok.to_string(),
                ]);
            }
        }
    }
    let write = |w: &mut dyn Write| -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(SYMMETRY_CSV_HEADER)?;
        for r in &rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    };
    if config.out.is_some() {
        primary(config, "symmetry.csv", write)?;
    }
    // the verdict table always goes to the terminal
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    write(&mut lock)
}

fn lan(config: &RunConfig) -> Result<()> {
    let model = config.model()?;
    let report = mc_lan_experiment(&LanConfig {
        model: *model,
        theta: config.theta.clone().unwrap_or_default(),
        s: config.s.clone(),
        regime: config.regimes[0],
        n: config.ns[0],
        reps: config.reps,
        master_seed: config.seed()?,
        margins: config.margins.clone(),
    })?;
    secondary(config, "replicates.csv", |w| report.write_replicates_csv(w))?;
    primary(config, "summary.csv", |w| report.write_summary_csv(w))
}

fn quadconv(config: &RunConfig) -> Result<()> {
    let model = config.model()?;
    let rows = quad_convergence(
        model,
        config.theta.as_deref().unwrap_or_default(),
        &config.s,
        config.regimes[0],
        &config.ns,
        config.reps,
        config.seed()?,
    )?;
    primary(config, "quadconv.csv", |w| QuadConvRow::write_csv(&rows, w))
}

fn estimate(config: &RunConfig) -> Result<()> {
    let model = config.model()?;
    let report = estimator_benchmark(&BenchConfig {
        model: *model,
        theta: config.theta.clone().unwrap_or_default(),
        n: config.ns[0],
        reps: config.reps,
        master_seed: config.seed()?,
        estimators: config.estimators.clone(),
        margins: config.margins.clone(),
    })?;
    secondary(config, "replicates.csv", |w| report.write_records_csv(w))?;
    primary(config, "estimates.csv", |w| report.write_csv(w))
}
