use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use starksim::error::{Error, Result};
use starksim::harness::{
    self, apply_overrides, parse_config, run_cut, run_grid_sweep, AxisName, CutKind, RunConfig,
};
use starksim::lz::{lz_survival_estimate, minimum_position, LzRunSpec};
use starksim::model::{convert, Quantity, UnitContext, UnitSystem};
use starksim::noise::{
    generate_path, power_spectrum, sample_equilibrium, spectrum_peak, NoiseParams, StartCondition,
};
use starksim::propagator::{evolve, prepare_ground_state, PhaseProfile};
use starksim::quasistatic::{beta_sweep, quasistatic_average};
use starksim::stats::{derive_seed, sample_variance};

/// Noise-assisted interband transport in a tilted bichromatic optical
/// lattice: full wavefunction propagation, noisy Landau-Zener reduction, and
/// the quasistatic moving-lattice model.
#[derive(Parser)]
#[command(name = "starksim", version, disable_help_subcommand = true)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise realizations per point (overrides the config).
    #[arg(long, global = true)]
    realizations: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra `key=value` config overrides.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check noise statistics against the stationary moments and the
    /// spectral peak; optionally dump one trajectory.
    NoiseCheck {
        /// Equilibrium draws for the variance check.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Samples per trajectory for the periodogram.
        #[arg(long, default_value_t = 8192)]
        path_steps: usize,
        /// Trajectories averaged in the periodogram.
        #[arg(long, default_value_t = 16)]
        paths: usize,
    },
    /// Propagate a single noise trajectory and write the survival series.
    Run {
        /// Write the final wavefunction as `# x re(psi) im(psi)` rows.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Noisy Landau-Zener survival scan over omega0.
    LzScan,
    /// Deterministic moving-lattice survival versus relative velocity.
    BetaSweep {
        /// Also average the sweep over the stationary velocity distribution
        /// for a log-spaced set of temperatures and write
        /// `temperature,p_sur_avg` here.
        #[arg(long)]
        average_out: Option<PathBuf>,
    },
    /// Evaluate an engine over a 1- or 2-axis parameter grid.
    GridSweep,
    /// 1D cuts through the noise-parameter plane.
    Cut {
        /// `constant-variance` scans omega0 with T = variance * omega0^2;
        /// `constant-omega0` scans T and reports the long-time rate.
        #[arg(value_parser = ["constant-variance", "constant-omega0"])]
        kind: String,
    },
    /// Convert a value between si, dimensionless and experimental units,
    /// or print the conversion table.
    Units {
        value: Option<f64>,
        #[arg(value_parser = ["energy", "time", "space", "force", "potential"])]
        quantity: Option<String>,
        #[arg(value_parser = ["si", "dimensionless", "experimental"])]
        from: Option<String>,
        #[arg(value_parser = ["si", "dimensionless", "experimental"])]
        to: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are success paths.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(r) = cli.realizations {
        if r == 0 {
            return Err(Error::Config {
                line: 0,
                message: "realizations must be >= 1".into(),
            });
        }
        cfg.realizations = r;
    }
    Ok(cfg)
}

/// Write through `--out` or to stdout.
fn emit(out: &Option<PathBuf>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let mut file = io::BufWriter::new(fs::File::create(path)?);
            body(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config {
                line: 0,
                message: format!("cannot configure {threads} worker threads: {e}"),
            })?;
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::NoiseCheck {
            samples,
            path_steps,
            paths,
        } => noise_check(&cli, &cfg, *samples, *path_steps, *paths),
        Command::Run { snapshot } => single_run(&cli, &cfg, snapshot),
        Command::LzScan => lz_scan(&cli, &cfg),
        Command::BetaSweep { average_out } => beta_sweep_cmd(&cli, &cfg, average_out),
        Command::GridSweep => {
            let result = run_grid_sweep(&cfg)?;
            for cell in result.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!(
                    "warning: cell (omega0={}, T={}, v0={}) failed: {}",
                    cell.omega0,
                    cell.temperature,
                    cell.v0,
                    cell.error.as_deref().unwrap_or("unknown")
                );
            }
            emit(&cli.out, |w| harness::write_grid_csv(&result, w))
        }
        Command::Cut { kind } => {
            let kind = match kind.as_str() {
                "constant-variance" => CutKind::ConstantVariance,
                _ => CutKind::ConstantOmega0,
            };
            let table = run_cut(&cfg, kind)?;
            for row in table.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "warning: point (omega0={}, T={}) failed: {}",
                    row.omega0,
                    row.temperature,
                    row.error.as_deref().unwrap_or("unknown")
                );
            }
            emit(&cli.out, |w| harness::write_cut_csv(&table, w))
        }
        Command::Units {
            value,
            quantity,
            from,
            to,
        } => units(*value, quantity, from, to),
    }
}

fn noise_check(
    cli: &Cli,
    cfg: &RunConfig,
    samples: usize,
    path_steps: usize,
    n_paths: usize,
) -> Result<()> {
    use rand::SeedableRng;
    let noise = cfg.noise()?;
    if noise.omega0 <= 0.0 {
        return Err(Error::Config {
            line: 0,
            message: "noise-check needs omega0 > 0".into(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut phis = Vec::with_capacity(samples);
    let mut mus = Vec::with_capacity(samples);
    for _ in 0..samples {
        let s = sample_equilibrium(&noise, &mut rng)?;
        phis.push(s.phi);
        mus.push(s.mu);
    }
    let var_phi = sample_variance(&phis);
    let var_mu = sample_variance(&mus);
    let expect_phi = noise.stationary_var_phi();
    let expect_mu = noise.temperature;
    let se = |v: f64| v * (2.0 / (samples as f64 - 1.0)).sqrt();
    println!(
        "equilibrium Var(phi) = {:.6} (theory {:.6}, deviation {:+.2} se at n={samples})",
        var_phi,
        expect_phi,
        (var_phi - expect_phi) / se(expect_phi).max(f64::MIN_POSITIVE)
    );
    println!(
        "equilibrium Var(mu)  = {:.6} (theory {:.6}, deviation {:+.2} se)",
        var_mu,
        expect_mu,
        (var_mu - expect_mu) / se(expect_mu).max(f64::MIN_POSITIVE)
    );
    if !noise.is_oscillatory() {
        println!(
            "note: omega0 <= sqrt(2) gamma (overdamped regime); no spectral peak is defined"
        );
    }

    let dt = (0.05 / noise.omega0).min(0.05);
    let t_total = (path_steps - 1) as f64 * dt;
    let mut avg: Vec<(f64, f64)> = Vec::new();
    let mut first = None;
    for i in 0..n_paths {
        let seed = derive_seed(cfg.seed, 1000 + i as u64);
        let path = generate_path(&noise, t_total, dt, seed, StartCondition::Equilibrium)?;
        let spec = power_spectrum(&path)?;
        if avg.is_empty() {
            avg = spec;
        } else {
            for (a, s) in avg.iter_mut().zip(spec) {
                a.1 += s.1;
            }
        }
        if first.is_none() {
            first = Some(path);
        }
    }
    if let Some(peak) = spectrum_peak(&avg) {
        let bin = avg[1].0 - avg[0].0;
        match noise.peak_frequency() {
            Some(w1) => println!(
                "spectrum peak at {peak:.6} (omega1 = {w1:.6}, bin width {bin:.6}, off by {:+.3} bins)",
                (peak - w1) / bin
            ),
            None => println!("spectrum peak at {peak:.6} (bin width {bin:.6})"),
        }
    }
    if cli.out.is_some() {
        let path = first.expect("at least one path was generated");
        emit(&cli.out, |w| path.write_text(w))?;
    }
    Ok(())
}

fn single_run(cli: &Cli, cfg: &RunConfig, snapshot: &Option<PathBuf>) -> Result<()> {
    let params = cfg.lattice()?;
    let noise = cfg.noise()?;
    let evolution = cfg.evolution(cfg.periods)?;
    let grid = cfg.grid(cfg.periods)?;
    let t_final = *evolution.measure_times.last().unwrap();
    let ground = prepare_ground_state(grid, &params, &evolution)?;
    let path = generate_path(&noise, t_final, evolution.dt, cfg.seed, StartCondition::Equilibrium)?;
    let profile = PhaseProfile::Path {
        path: &path,
        offset: params.phi0,
    };
    let (wf, series) = evolve(ground, &profile, t_final, &params, &evolution)?;
    emit(&cli.out, |w| harness::write_survival_csv(&series, w))?;
    if let Some(snap) = snapshot {
        let mut file = io::BufWriter::new(fs::File::create(snap)?);
        writeln!(file, "# x re(psi) im(psi)")?;
        for (i, a) in wf.amplitudes.iter().enumerate() {
            writeln!(
                file,
                "{} {} {}",
                harness::fmt_full(wf.grid.position(i)),
                harness::fmt_full(a.re),
                harness::fmt_full(a.im)
            )?;
        }
        file.flush()?;
    }
    Ok(())
}

fn lz_scan(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let scales = starksim::model::bloch_scales(&cfg.lattice()?)?;
    let axis = match cfg.axis1 {
        Some(a) if a.name == AxisName::Omega0 => a,
        Some(a) => {
            return Err(Error::Config {
                line: 0,
                message: format!("lz-scan needs an omega0 axis, got {:?}", a.name),
            })
        }
        None => harness::AxisSpec {
            name: AxisName::Omega0,
            scale: harness::AxisScale::Linear,
            min: 0.5 * scales.omega_b,
            max: 12.0 * scales.omega_b,
            points: 24,
        },
    };
    let mut rows = Vec::with_capacity(axis.points);
    for i in 0..axis.points {
        let omega0 = axis.value(i);
        let noise = NoiseParams::new(cfg.gamma, omega0, cfg.variance * omega0 * omega0)?;
        let mut spec = LzRunSpec::new(cfg.v0, cfg.f0, noise)?;
        spec.n_realizations = cfg.realizations.max(2);
        spec.tail_fraction = cfg.tail_fraction;
        let seed = derive_seed(cfg.seed, (i as u64) << 32);
        let (mean, std) = lz_survival_estimate(&spec, seed)?;
        rows.push((omega0, mean, std));
    }
    emit(&cli.out, |w| harness::write_scan_csv(&rows, w))?;
    match minimum_position(&rows) {
        Ok(m) => eprintln!(
            "first survival minimum at omega0 = {m:.6} ({:.3} omega_B)",
            m / scales.omega_b
        ),
        Err(Error::NoMinimum) => eprintln!("no statistically significant minimum in the scan"),
        Err(e) => return Err(e),
    }
    Ok(())
}

fn beta_sweep_cmd(cli: &Cli, cfg: &RunConfig, average_out: &Option<PathBuf>) -> Result<()> {
    let params = cfg.lattice()?;
    let grid = cfg.grid(1)?;
    let evolution = cfg.evolution(1)?;
    let sweep = beta_sweep(&params, &cfg.beta_grid(), grid, &evolution)?;
    emit(&cli.out, |w| harness::write_beta_csv(&sweep, w))?;
    if let Some(avg_path) = average_out {
        let omega_b = starksim::model::bloch_scales(&params)?.omega_b;
        let temps: Vec<f64> = (0..=12)
            .map(|k| omega_b * omega_b * 10f64.powf(k as f64 * 0.5))
            .collect();
        let mut rows = Vec::new();
        for t in temps {
            match quasistatic_average(&sweep, t) {
                Ok(avg) => rows.push((t, avg)),
                Err(e) => {
                    eprintln!("warning: skipping T = {t}: {e}");
                }
            }
        }
        let mut file = io::BufWriter::new(fs::File::create(avg_path)?);
        harness::write_average_csv(&rows, &mut file)?;
        file.flush()?;
    }
    Ok(())
}

fn units(
    value: Option<f64>,
    quantity: &Option<String>,
    from: &Option<String>,
    to: &Option<String>,
) -> Result<()> {
    let ctx = UnitContext::default();
    let parse_q = |s: &str| match s {
        "energy" => Quantity::Energy,
        "time" => Quantity::Time,
        "space" => Quantity::Space,
        "force" => Quantity::Force,
        _ => Quantity::Potential,
    };
    let parse_u = |s: &str| match s {
        "si" => UnitSystem::Si,
        "dimensionless" => UnitSystem::Dimensionless,
        _ => UnitSystem::Experimental,
    };
    match (value, quantity, from, to) {
        (Some(v), Some(q), Some(f), Some(t)) => {
            let out = convert(v, parse_q(q), parse_u(f), parse_u(t), &ctx);
            println!("{}", harness::fmt_full(out));
            Ok(())
        }
        (None, None, None, None) => {
            println!("reference context: Rb-87, 426 nm lattice spacing");
            println!("  E_rec = {:.6e} J", ctx.recoil_energy);
            println!("  k_L   = {:.6e} 1/m", ctx.laser_wavenumber);
            println!("  M     = {:.6e} kg", ctx.atom_mass);
            println!("one dimensionless unit expressed in si / experimental units:");
            for (name, q) in [
                ("energy", Quantity::Energy),
                ("time", Quantity::Time),
                ("space", Quantity::Space),
                ("force", Quantity::Force),
                ("potential", Quantity::Potential),
            ] {
                let si = convert(1.0, q, UnitSystem::Dimensionless, UnitSystem::Si, &ctx);
                let exp = convert(1.0, q, UnitSystem::Dimensionless, UnitSystem::Experimental, &ctx);
                println!("  {name:<10} 1 -> {si:.9e} (si), {exp:.9e} (experimental)");
            }
            Ok(())
        }
        _ => Err(Error::Config {
            line: 0,
            message: "units needs either no arguments or `<value> <quantity> <from> <to>`".into(),
        }),
    }
}
