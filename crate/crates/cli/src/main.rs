use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use homog_core::cell::{CellSolution, DEFAULT_TOL};
use homog_core::coefficient::CoefficientField;
use homog_core::harness::{emit_report, run_sweep, seeded_datum, ReportFormat, SignChoice, SweepConfig, JOBS_ENV};
use homog_core::io::{load_field, save_field};
use homog_core::resolvent::{ApproximationOrder, LSign, Order, ResolventSolution};
use homog_core::steklov::{h1_norm, lemma_csv, LemmaBattery};

#[derive(Parser)]
#[command(name = "homog", version, about = "Spectral periodic homogenization on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems and print the homogenized data.
    Cell {
        #[arg(long)]
        coeff: PathBuf,
        #[arg(long, default_value_t = 32)]
        n_cell: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Directory for the corrector cache.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Print JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Run the smoothing-operator battery and write a CSV.
    Lemmas {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Values of 1/eps, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16, 32])]
        inverse_eps: Vec<usize>,
        /// Grid points per axis are `multiplier / eps`.
        #[arg(long, default_value_t = 8)]
        multiplier: usize,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve `(A_eps + 1) u = f` and build an approximation.
    Solve {
        #[arg(long)]
        coeff: PathBuf,
        /// Period, written `1/m` or as a decimal.
        #[arg(long, value_parser = parse_eps)]
        eps: f64,
        /// Points per axis of the reference grid.
        #[arg(long)]
        grid: usize,
        /// Approximation order: 0, 1 or 2.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
        order: u8,
        #[arg(long)]
        no_smoothing: bool,
        #[arg(long, default_value = "paper-3250")]
        sign: LSign,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 32)]
        n_cell: usize,
        /// Datum field file; a seeded unit-norm datum otherwise.
        #[arg(long)]
        datum: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the approximation.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the oscillatory solution.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Run an eps sweep and write report.csv / report.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sign: Option<SignChoice>,
        #[arg(long)]
        no_smoothing: bool,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_eps(s: &str) -> std::result::Result<f64, String> {
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("bad eps `{s}`"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("bad eps `{s}`"))?;
            num / den
        }
        None => s.trim().parse().map_err(|_| format!("bad eps `{s}`"))?,
    };
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("eps {v} outside (0, 1]"))
    }
}

fn print_matrix(name: &str, a: &[f64], d: usize) {
    println!("{name}:");
    for row in a.chunks(d) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.8e}")).collect();
        println!("  {}", cells.join(" "));
    }
}

fn cmd_cell(coeff: PathBuf, n_cell: usize, tol: f64, cache: Option<PathBuf>, json: bool) -> Result<()> {
    let field = CoefficientField::load(&coeff).with_context(|| format!("loading {}", coeff.display()))?;
    let cell = match cache {
        Some(dir) => CellSolution::cached(&dir, &field, n_cell, tol)?,
        None => CellSolution::compute(&field, n_cell, tol)?,
    };
    let hom = &cell.homogenized;
    let d = hom.dim;
    if json {
        let out = serde_json::json!({
            "a0": hom.a0,
            "a0_adj": hom.a0_adj,
            "lambda": [cell.lambda.0, cell.lambda.1],
            "sup_norms": cell.primal.sup_norms,
            "sup_norms_adj": cell.adjoint.sup_norms,
            "flux_norms": cell.primal.flux_norms,
            "solenoidal_defect": hom.solenoidal_defect,
            "solenoidal_defect_adj": hom.solenoidal_defect_adj,
            "c": hom.c,
            "ctilde": hom.ctilde,
            "constants_discrepancy": hom.constants_discrepancy,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    print_matrix("a0", &hom.a0, d);
    print_matrix("a0 (adjoint problem)", &hom.a0_adj, d);
    println!("ellipticity bounds: {:.6e} .. {:.6e}", cell.lambda.0, cell.lambda.1);
    for j in 0..d {
        println!(
            "N^{j}: sup {:.6e}  flux L2 {:.6e}  div defect {:.3e} (adjoint {:.3e})  iterations {}",
            cell.primal.sup_norms[j],
            cell.primal.flux_norms[j],
            hom.solenoidal_defect[j],
            hom.solenoidal_defect_adj[j],
            cell.primal.iterations[j],
        );
    }
    println!("corrector constants (j k i: c, c~):");
    for j in 0..d {
        for k in 0..d {
            for i in 0..d {
                let idx = hom.c_index(j, k, i);
                println!("  {j} {k} {i}: {:>14.8e} {:>14.8e}", hom.c[idx], hom.ctilde[idx]);
            }
        }
    }
    println!("two-route discrepancy: {:.3e}", hom.constants_discrepancy);
    Ok(())
}

fn cmd_lemmas(dim: usize, seed: u64, inverse_eps: Vec<usize>, multiplier: usize, out: Option<PathBuf>) -> Result<()> {
    let battery = LemmaBattery {
        dim,
        inverse_eps,
        multiplier,
        seed,
    };
    let csv = lemma_csv(&battery.run()?);
    match out {
        Some(path) => std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    coeff: PathBuf,
    eps: f64,
    grid: usize,
    order: u8,
    smoothing: bool,
    sign: LSign,
    tol: f64,
    n_cell: usize,
    datum: Option<PathBuf>,
    seed: u64,
    out: PathBuf,
    reference: Option<PathBuf>,
) -> Result<()> {
    let field = CoefficientField::load(&coeff).with_context(|| format!("loading {}", coeff.display()))?;
    let f = match datum {
        Some(p) => load_field(&p)?.resampled(grid)?,
        None => seeded_datum(field.dim(), grid, seed)?,
    };
    let order = match order {
        0 => Order::Zero,
        1 => Order::FirstH1,
        _ => Order::SecondL2,
    };
    let cell = CellSolution::compute(&field, n_cell, tol)?;
    let sol = ResolventSolution::compute(&field, &cell, eps, &f, ApproximationOrder { order, smoothing }, sign, tol)?;
    let approx = sol.approximations.get(order);
    let diff = sol.u_eps().sub(&approx)?;
    println!("iterations {}  residual {:.3e}", sol.solve.iterations, sol.residual());
    println!("L2 error {:.6e}  H1 error {:.6e}", diff.l2_norm(), h1_norm(&diff));
    save_field(&approx, &out)?;
    if let Some(p) = reference {
        save_field(sol.u_eps(), &p)?;
    }
    Ok(())
}

fn cmd_sweep(
    config: PathBuf,
    sign: Option<SignChoice>,
    no_smoothing: bool,
    jobs: Option<usize>,
    out: PathBuf,
) -> Result<ExitCode> {
    let mut cfg = SweepConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(s) = sign {
        cfg.sign = s;
    }
    if no_smoothing {
        cfg.smoothing = false;
    }
    if let Some(j) = jobs {
        if j == 0 {
            bail!("--jobs must be positive");
        }
        // the flag wins over the environment
        std::env::set_var(JOBS_ENV, j.to_string());
    }
    let report = run_sweep(&cfg)?;
    emit_report(&report, &out, &[ReportFormat::Csv, ReportFormat::Structured])?;
    let failures = report.threshold_failures();
    if failures.is_empty() {
        if let Some(s) = &report.slopes {
            println!(
                "pass: s0 {} s1 {} s2 {} (sign {})",
                fmt_slope(s.s0),
                fmt_slope(s.s1),
                fmt_slope(s.s2),
                report.metadata.sign
            );
        }
        Ok(ExitCode::SUCCESS)
    } else {
        let summary = serde_json::json!({
            "passed": false,
            "partial": report.partial,
            "failures": failures,
            "slopes": report.slopes,
            "sign": report.metadata.sign,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
        Ok(ExitCode::from(1))
    }
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "exact".to_string(), |v| format!("{v:.4}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cell {
            coeff,
            n_cell,
            tol,
            cache,
            json,
        } => cmd_cell(coeff, n_cell, tol, cache, json).map(|_| ExitCode::SUCCESS),
        Command::Lemmas {
            dim,
            seed,
            inverse_eps,
            multiplier,
            out,
        } => cmd_lemmas(dim, seed, inverse_eps, multiplier, out).map(|_| ExitCode::SUCCESS),
        Command::Solve {
            coeff,
            eps,
            grid,
            order,
            no_smoothing,
            sign,
            tol,
            n_cell,
            datum,
            seed,
            out,
            reference,
        } => cmd_solve(
            coeff,
            eps,
            grid,
            order,
            !no_smoothing,
            sign,
            tol,
            n_cell,
            datum,
            seed,
            out,
            reference,
        )
        .map(|_| ExitCode::SUCCESS),
        Command::Sweep {
            config,
            sign,
            no_smoothing,
            jobs,
            out,
        } => cmd_sweep(config, sign, no_smoothing, jobs, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
