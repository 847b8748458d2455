//! `galvo`: batch front-end for kernels, scans, oracle runs, inversions and
//! sensitivity estimates.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 failed
//! statistical check.

// `!(x > 0.0)` rejects NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use galvo_core::config::{InversionSection, ScenarioConfig};
use galvo_core::counting::{estimate_means, simulate_counts};
use galvo_core::inversion::{build_kernel_matrix, uniform_grid, InverseProblem, Regularizer};
use galvo_core::io::{
    kernel_table, read_kernel, read_scan, reconstruction_table, scan_table, Format, Table,
};
use galvo_core::kernel::{KernelMode, KernelSettings, ResponseKernel};
use galvo_core::oracle::{oracle_atom_count, CurrentProcess, OracleSetup};
use galvo_core::spectra::{asymmetry, scan, sensitivity_estimate, transferred_atoms_many, ScanAxis};
use galvo_core::{condensate, Error};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "galvo", version, about = "Condensate noise spectroscopy of a vibrating nanowire")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML), or an output file whose header embeds one.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Exact and approximate response kernels on a frequency grid.
    Kernel(Common),
    /// Forward scan N(Omega), optionally with simulated counts.
    Scan(Common),
    /// Monte-Carlo trajectories against the analytic forward map.
    Oracle(Common),
    /// Deconvolve a scan file back to S(omega).
    Invert {
        #[command(flatten)]
        common: Common,
        /// Scan file; overrides inversion.scan_file.
        #[arg(long)]
        scan: Option<PathBuf>,
        /// Kernel file; overrides inversion.kernel_file.
        #[arg(long)]
        kernel: Option<PathBuf>,
    },
    /// Current sensitivity at one detected atom.
    Estimate(Common),
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() || matches!(e, Error::Io(_)) { 2 } else { 3 };
        Failure { code, message: e.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn statistical(message: String) -> Failure {
    Failure { code: 4, message }
}

struct Context {
    config: ScenarioConfig,
    out: PathBuf,
    format: Format,
}

impl Context {
    fn new(common: &Common) -> Result<Self, Failure> {
        let format: Format = common.format.parse()?;
        let mut config = ScenarioConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            config.run.seed = seed;
        }
        if let Some(n) = common.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure { code: 2, message: format!("--threads: {e}") })?;
        }
        std::fs::create_dir_all(&common.out).map_err(Error::from)?;
        Ok(Self { config, out: common.out.clone(), format })
    }

    /// Stamps version, command and the effective config, then writes `<stem>.<ext>`.
    fn write(&self, stem: &str, command: &str, mut table: Table) -> Result<PathBuf, Failure> {
        let mut meta = vec![
            ("galvo_version".to_string(), VERSION.to_string()),
            ("command".to_string(), command.to_string()),
        ];
        meta.append(&mut table.meta);
        table.meta = meta;
        table.config = Some(self.config.to_toml()?);
        let path = self.out.join(format!("{stem}.{}", self.format.extension()));
        table.save(&path)?;
        Ok(path)
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn build_kernel(cfg: &ScenarioConfig) -> Result<ResponseKernel, Failure> {
    let k = ResponseKernel::build(&cfg.trap_config()?, &cfg.nanowire_config()?, &cfg.kernel_settings()?)?;
    Ok(k)
}

fn cmd_kernel(common: &Common) -> Outcome {
    let ctx = Context::new(common)?;
    let cfg = &ctx.config;
    let trap = cfg.trap_config()?;
    let wire = cfg.nanowire_config()?;
    let base = cfg.kernel_settings()?;
    let exact = ResponseKernel::build(&trap, &wire, &KernelSettings { mode: KernelMode::Exact3D, ..base })?;
    let approx = ResponseKernel::build(&trap, &wire, &KernelSettings { mode: KernelMode::Approx1D, ..base })?;
    warn_all(&exact.warnings);
    let bw = exact.bandwidth();
    let omega: Vec<f64> = uniform_grid(-0.5, 1.5, cfg.kernel.points).iter().map(|w| w * bw).collect();
    let table = kernel_table(&[&exact, &approx], &omega)?;
    let path = ctx.write("kernel", "kernel", table)?;
    println!("kernel file      {}", path.display());
    println!("U(0)^2           {:.6}", exact.u0_sq);
    println!("n_det            {:e} 1/(A^2 s^2)", exact.n_det);
    println!("mu               {:e} J", exact.mu);
    println!("mu/hbar          {:e} rad/s", bw);
    println!("D(0) Exact3D     {:e} 1/(A^2 s^2)", exact.d0());
    println!("D(0) Approx1D    {:e} 1/(A^2 s^2)", approx.d0());

    if !cfg.kernel.sweep_atom_numbers.is_empty() {
        let w = uniform_grid(-0.5, 1.5, cfg.kernel.points);
        let mut columns = vec!["w".to_string(), "q_approx1d".into()];
        let mut family = Vec::new();
        let mut sweep = Table::default();
        for &n in &cfg.kernel.sweep_atom_numbers {
            let t = trap.with_atom_number(n);
            let k = ResponseKernel::build(&t, &wire, &KernelSettings { mode: KernelMode::Exact3D, ..base })?;
            let cond = condensate::chemical_potential(&t)?;
            warn_all(&k.warnings);
            sweep.push_meta(
                format!("N={n:e}"),
                format!("c = {:e} m, b = {:e} m, mu/hbar = {:e} rad/s", cond.c, cond.b, k.bandwidth()),
            );
            columns.push(format!("q_exact3d_N={n:e}"));
            family.push(k);
        }
        sweep.columns = columns;
        for &x in &w {
            let mut row = vec![x, approx.level_density(x)];
            row.extend(family.iter().map(|k| k.level_density(x)));
            sweep.rows.push(row);
        }
        let path = ctx.write("kernel_sweep", "kernel", sweep)?;
        println!("sweep file       {}", path.display());
    }
    Ok(())
}

fn cmd_scan(common: &Common) -> Outcome {
    let ctx = Context::new(common)?;
    let cfg = &ctx.config;
    let model = cfg.model()?;
    let section = cfg.scan_section()?;
    let kernel = build_kernel(cfg)?;
    let wire = cfg.nanowire_config()?;
    let trap = cfg.trap_config()?;
    let axis = ScanAxis::symmetric(section.omega_max.si, section.points, &wire, &trap.constants)?;
    let mut result = scan(&model, &kernel, section.t_meas.si, &axis, cfg.regime()?, wire.omega_cnt)?;
    if let Some(det) = cfg.detection_config()? {
        result = simulate_counts(&result, &det)?;
    }
    warn_all(&result.warnings);
    let asym = asymmetry(&result)?;
    let path = ctx.write("scan", "scan", scan_table(&result, &kernel, Some(&asym)))?;
    println!("scan file        {}", path.display());
    println!("points           {}", result.omega.len());
    println!("max mean atoms   {:e}", result.mean_atoms.iter().cloned().fold(0.0, f64::max));
    Ok(())
}

fn cmd_oracle(common: &Common) -> Outcome {
    let ctx = Context::new(common)?;
    let cfg = &ctx.config;
    let model = cfg.model()?;
    let process = CurrentProcess::from_model(&model)?;
    let section = cfg.oracle_section()?;
    let kernel = build_kernel(cfg)?;
    let t_meas = section.t_meas.si;
    let dt_target = section.dt.map_or(process.correlation_time() / 50.0, |d| d.si);
    let steps = (t_meas / dt_target).ceil().max(1.0);
    let omegas: Vec<f64> = section.omegas.iter().map(|o| o.si).collect();
    let setup = OracleSetup {
        trap: cfg.trap_config()?,
        wire: cfg.nanowire_config()?,
        grid: cfg.oracle_grid()?,
        dt: t_meas / steps,
        t_meas,
        omegas: omegas.clone(),
        seed: cfg.run.seed,
    };
    let mc = oracle_atom_count(&process, section.ensemble, &setup)?;
    let analytic = transferred_atoms_many(&model, &kernel, t_meas, &omegas, galvo_core::spectra::Regime::Full)?;
    let mut table = Table::new(
        ["omega_rad_s", "analytic_atoms", "oracle_atoms", "oracle_stderr", "z"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    table.push_meta("ensemble", section.ensemble);
    table.push_meta("dt_s", format!("{:e}", setup.dt));
    table.push_meta("t_meas_s", format!("{:e}", t_meas));
    table.push_meta("z_threshold", format!("{:e}", section.z_threshold));
    let mut worst: f64 = 0.0;
    for i in 0..omegas.len() {
        let diff = mc.mean[i] - analytic[i];
        let z = if diff == 0.0 { 0.0 } else { diff / mc.stderr[i] };
        worst = worst.max(z.abs());
        table.rows.push(vec![omegas[i], analytic[i], mc.mean[i], mc.stderr[i], z]);
    }
    let path = ctx.write("oracle", "oracle", table)?;
    println!("oracle file      {}", path.display());
    println!("max |z|          {worst:.3}");
    if !(worst <= section.z_threshold) {
        return Err(statistical(format!("oracle disagrees: max |z| = {worst:.3} > {}", section.z_threshold)));
    }
    Ok(())
}

fn resolve(path: Option<&PathBuf>, configured: Option<&String>, what: &str) -> Result<PathBuf, Failure> {
    path.cloned()
        .or_else(|| configured.map(PathBuf::from))
        .ok_or_else(|| Failure { code: 2, message: format!("no {what} file: pass --{what} or set inversion.{what}_file") })
}

fn cmd_invert(common: &Common, scan_path: Option<&PathBuf>, kernel_path: Option<&PathBuf>) -> Outcome {
    let mut ctx = Context::new(common)?;
    let section: InversionSection = ctx.config.inversion.clone().unwrap_or_default();
    let scan_path = resolve(scan_path, section.scan_file.as_ref(), "scan")?;
    let kernel_path = resolve(kernel_path, section.kernel_file.as_ref(), "kernel")?;
    // Record the files actually used so the header re-runs this inversion.
    let inv = ctx.config.inversion.get_or_insert_with(InversionSection::default);
    inv.scan_file = Some(scan_path.display().to_string());
    inv.kernel_file = Some(kernel_path.display().to_string());
    let scan_file = read_scan(&Table::load(&scan_path)?)?;
    let kernel_tab = Table::load(&kernel_path)?;
    let kernel = read_kernel(&kernel_tab, scan_file.kernel_mode)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !close(scan_file.mu, kernel.mu) || !close(scan_file.n_det, kernel.n_det) {
        return Err(Error::GridMismatch(format!(
            "scan {} (mu = {:e} J, n_det = {:e}) and kernel {} (mu = {:e} J, n_det = {:e}) describe different condensates",
            scan_path.display(),
            scan_file.mu,
            scan_file.n_det,
            kernel_path.display(),
            kernel.mu,
            kernel.n_det
        ))
        .into());
    }
    let s = &scan_file.scan;
    let (data, stderr) = match &s.counts {
        Some(counts) => {
            let est = estimate_means(counts)?;
            let shots = counts.shots.first().map_or(1, Vec::len) as f64;
            let floor = 1.0 / (counts.efficiency * shots);
            let se = est
                .stderr
                .iter()
                .zip(&est.mean_atoms)
                .map(|(e, m)| match e {
                    Some(v) => v.max(floor),
                    None => (m * counts.efficiency).max(1.0).sqrt() / counts.efficiency,
                })
                .collect();
            (est.mean_atoms, se)
        }
        None => {
            let floor = section.noise_floor * s.mean_atoms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let floor = if floor > 0.0 { floor } else { section.noise_floor };
            (s.mean_atoms.clone(), vec![floor; s.mean_atoms.len()])
        }
    };
    let bw = kernel.bandwidth();
    let (lo, hi) = kernel.support();
    let start = s.omega[0] - hi;
    let end = s.omega[s.omega.len() - 1] - lo;
    let points = match section.points {
        Some(p) => p,
        None => {
            let step = if s.omega.len() > 1 { s.omega[1] - s.omega[0] } else { 0.1 * bw };
            ((end - start) / step).round() as usize + 1
        }
    };
    let omega = uniform_grid(start, end, points.max(2));
    let matrix = build_kernel_matrix(&omega, &s.omega, &kernel, s.t_meas, s.regime)?;
    let regularizer: Regularizer = section.regularizer.parse()?;
    let problem = InverseProblem {
        omega: omega.clone(),
        big_omega: s.omega.clone(),
        matrix,
        data,
        stderr,
        lambda: section.lambda.unwrap_or(0.0),
        regularizer,
        non_negative: section.non_negative,
    };
    let rec = match section.lambda {
        Some(_) => problem.deconvolve()?,
        None => problem.discrepancy_lambda()?,
    };
    let truth: Option<Vec<f64>> = ctx.config.model.as_ref().map(|m| {
        let model = m.to_model();
        omega.iter().map(|&o| model.density(o)).collect()
    });
    let path = ctx.write("reconstruction", "invert", reconstruction_table(&rec, truth.as_deref()))?;
    println!("reconstruction   {}", path.display());
    println!("lambda           {:e}", rec.diagnostics.lambda);
    println!("chi^2 / n        {:.4}", rec.diagnostics.residual_norm.powi(2) / rec.diagnostics.chi2_target);
    if section.lambda.is_none() && !rec.diagnostics.discrepancy_met {
        return Err(statistical("discrepancy principle not satisfied within the lambda range".into()));
    }
    Ok(())
}

fn cmd_estimate(common: &Common) -> Outcome {
    let ctx = Context::new(common)?;
    let cfg = &ctx.config;
    let kernel = ResponseKernel::build(
        &cfg.trap_config()?,
        &cfg.nanowire_config()?,
        &KernelSettings { mode: KernelMode::Approx1D, ..cfg.kernel_settings()? },
    )?;
    let t_meas = cfg.scan.as_ref().map_or(1.0, |s| s.t_meas.si);
    let s = sensitivity_estimate(&kernel, t_meas)?;
    let mut table = Table::new(vec!["t_meas_s".into(), "sqrt_I2_A".into()]);
    table.push_meta("u0_squared", format!("{:e}", kernel.u0_sq));
    table.push_meta("n_det", format!("{:e}", kernel.n_det));
    table.push_meta("mu_J", format!("{:e}", kernel.mu));
    table.push_meta("mu_over_hbar_rad_s", format!("{:e}", kernel.bandwidth()));
    table.rows.push(vec![t_meas, s]);
    let path = ctx.write("estimate", "estimate", table)?;
    println!("estimate file    {}", path.display());
    println!("U(0)^2           {:.4}", kernel.u0_sq);
    println!("n_det            {:e} 1/(A^2 s^2)", kernel.n_det);
    println!("mu               {:e} J (mu/hbar = {:e} rad/s)", kernel.mu, kernel.bandwidth());
    println!("T                {:e} s", t_meas);
    println!("sqrt<I^2>        {:.4} uA at one transferred atom", s * 1e6);
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Kernel(c) => cmd_kernel(c),
        Command::Scan(c) => cmd_scan(c),
        Command::Oracle(c) => cmd_oracle(c),
        Command::Invert { common, scan, kernel } => cmd_invert(common, scan.as_ref(), kernel.as_ref()),
        Command::Estimate(c) => cmd_estimate(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
