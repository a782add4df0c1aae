//! `screenopt`: command-line front end for the screening solvers.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;

use screenopt::bvp::{self, BvpProblem, DirichletData, PolygonalDomain, SearchConfig, Seed};
use screenopt::closed_form::BluntProfile;
use screenopt::direct::{self, Method, SolverConfig};
use screenopt::euler_lagrange::{solve_fan, BunchInput};
use screenopt::par::Exec;
use screenopt::pipeline::{run_pipeline, PipelineConfig};
use screenopt::pricing::{double_conjugate_gap, price_menu, product_intensity};
use screenopt::regions::{self, InterfaceCurve, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL};
use screenopt::{svg, Error, ModelParams, Result, ScalarField};

/// Tolerance used when recovering the grid from a field file.
const GRID_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "screenopt", version, about = "Monopolist screening on the square [a, a+1]^2")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print t05, C0, t15 and a table of (t, U, U', U'').
    ClosedForm {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        a: f64,
        /// Table rows on [t05, 2a + 2].
        #[arg(long, default_value_t = 21)]
        rows: usize,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximize the discrete profit over convex, nondecreasing, nonnegative u.
    SolveDirect {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = SolverConfig::default().max_iters)]
        max_iters: usize,
        #[arg(long, default_value_t = SolverConfig::default().kkt_tol)]
        kkt_tol: f64,
        /// Convexity stencil width.
        #[arg(long, default_value_t = 1)]
        stencil: u8,
        /// Use projected-gradient ascent instead of the interior-point method.
        #[arg(long)]
        projected_gradient: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label regions of a solution and extract the interface.
    Classify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
        #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
        zero_tol: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Integrate the targeted-bunching fan.
    ElSolve {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        a: f64,
        #[arg(long)]
        t10: f64,
        /// CSV with header `theta,R`; the first angle must be -pi/4.
        #[arg(long)]
        r_samples: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        step: f64,
        /// End segments on the diagonal when they would cross it.
        #[arg(long)]
        clip_diagonal: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the Poisson problem above an interface.
    BvpSolve {
        /// Interface polyline, `s,t` or `x1,x2` rows.
        #[arg(long)]
        domain: PathBuf,
        /// Grid field (`x1,x2,value`) giving the Dirichlet data on the interface.
        #[arg(long)]
        dirichlet: PathBuf,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Full-grid field: the solution above the interface, the Dirichlet
        /// field below it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the constant-strip ansatz and write the refutation report.
    RefuteRc {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate the fan and interface against a direct solution.
    Calibrate {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Number of R samples.
        #[arg(long, default_value_t = SearchConfig::default().k)]
        k: usize,
        /// Evaluation budget per grid level.
        #[arg(long, default_value_t = 600)]
        max_evals: usize,
        /// Reuse a direct solution instead of solving again.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Price menu by convex conjugation and the product intensity.
    PriceMenu {
        #[arg(long = "in")]
        input: PathBuf,
        /// Product-space extent; a + 1 by default.
        #[arg(long)]
        y_max: Option<f64>,
        /// Product grid points per side; the type grid size by default.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the stages listed in a JSON config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_validation() {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    }
}

/// Unreadable inputs are the caller's mistake.
fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(w.flush()?)
}

fn read_field(path: &Path) -> Result<ScalarField> {
    ScalarField::read_csv(open(path)?, GRID_TOL)
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::ClosedForm { a, rows, out } => {
            ModelParams::new(a, ModelParams::MIN_N, GRID_TOL)?;
            let p = BluntProfile::new(a);
            println!("t05 = {:.16e}", p.t05);
            println!("C0 = {:.16e}", p.c0);
            println!("t15_rc = {:.16e}", p.t15_rc);
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    p.write_table_csv(&mut w, rows)?;
                    w.flush()?;
                }
                None => p.write_table_csv(io::stdout().lock(), rows)?,
            }
        }
        Command::SolveDirect { a, n, max_iters, kkt_tol, stencil, projected_gradient, out } => {
            let params = ModelParams::new(a, n, GRID_TOL)?;
            let method = if projected_gradient { Method::ProjectedGradient } else { Method::InteriorPoint };
            let cfg = SolverConfig { method, max_iters, kkt_tol, stencil_width: stencil, ..Default::default() };
            let (u, report) = direct::solve(&params, &cfg)?;
            fs::create_dir_all(&out)?;
            let mut w = create(&out.join("u.csv"))?;
            u.write_csv(&mut w)?;
            w.flush()?;
            write_json(&out.join("report.json"), &serde_json::to_value(report)?)?;
            println!("phi = {:.12} after {} iterations (converged: {})", report.phi, report.iterations, report.converged);
        }
        Command::Classify { input, rank_tol, zero_tol, out, svg: svg_path } => {
            let u = read_field(&input)?;
            let map = regions::classify(&u, rank_tol, zero_tol)?;
            fs::create_dir_all(&out)?;
            let mut w = create(&out.join("labels.csv"))?;
            map.write_csv(&mut w)?;
            w.flush()?;
            let curve = regions::extract_interface(&map)?;
            let mut w = create(&out.join("interface.csv"))?;
            curve.write_csv(&mut w)?;
            w.flush()?;
            if let Some(path) = svg_path {
                let mut w = create(&path)?;
                w.write_all(svg::regions_svg(&map, Some(&curve)).as_bytes())?;
                w.flush()?;
            }
            for r in regions::Region::ALL {
                println!("{:<15} {:.4}", r.as_str(), map.fraction(r));
            }
            println!("interface t in [{:.6}, {:.6}]", curve.t_min(), curve.t_max());
        }
        Command::ElSolve { a, t10, r_samples, step, clip_diagonal, out } => {
            let params = ModelParams::new(a, ModelParams::MIN_N, GRID_TOL)?;
            let (theta, r) = read_r_samples(&r_samples)?;
            let mut input = BunchInput::from_samples(&params, t10, theta, r)?;
            if clip_diagonal {
                input = input.clipped_to_diagonal();
            }
            let fan = solve_fan(&params, &input, step)?;
            let mut w = create(&out)?;
            fan.write_csv(&mut w)?;
            w.flush()?;
            println!("{} fan samples up to theta = {:.6}", fan.len(), fan.theta[fan.len() - 1]);
        }
        Command::BvpSolve { domain, dirichlet, a, n, out } => {
            let params = ModelParams::new(a, n, GRID_TOL)?;
            let curve = InterfaceCurve::read_csv(open(&domain)?)?;
            let u1 = Arc::new(read_field(&dirichlet)?);
            let dom = PolygonalDomain::from_curve(params, &curve)?;
            let g = Arc::clone(&u1);
            let problem = BvpProblem::model(dom, DirichletData::Function(Arc::new(move |x: [f64; 2]| g.interpolate(x))));
            let sol = bvp::solve_bvp(&problem)?;
            let field = sol.merged(|x| u1.interpolate(x));
            let mut w = create(&out)?;
            field.write_csv(&mut w)?;
            w.flush()?;
            let summary = json!({
                "nodes": sol.mask.iter().filter(|&&m| m).count(),
                "linear_residual": sol.linear_residual,
                "dirichlet_residual": sol.dirichlet_residual,
                "neumann_residual": sol.neumann_residual,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::RefuteRc { a, n, out } => {
            let params = ModelParams::new(a, n, GRID_TOL)?;
            let report = bvp::refute_rc(&params)?;
            write_json(&out, &serde_json::to_value(&report)?)?;
            println!("{} (min u_x1x1 = {:.4}, bound {:.6} < {})", report.verdict, report.min_uxx, report.bound_lhs, report.bound_rhs);
        }
        Command::Calibrate { a, n, k, max_evals, input, out } => {
            let params = ModelParams::new(a, n, GRID_TOL)?;
            let cfg = SearchConfig { k, max_evals, ..Default::default() };
            cfg.validate()?;
            let u = match input {
                Some(path) => {
                    let u = read_field(&path)?;
                    if u.params.n != n || (u.params.a - a).abs() > GRID_TOL {
                        return Err(Error::Validation(format!(
                            "input field is on a={} n={}, expected a={a} n={n}",
                            u.params.a, u.params.n
                        )));
                    }
                    u
                }
                None => direct::solve(&params, &SolverConfig::default())?.0,
            };
            let map = regions::classify(&u, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL)?;
            let (report, asm) = bvp::calibrate(&params, &cfg, &Seed::from_map(&map)?)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("calibration.json"), &serde_json::to_value(&report)?)?;
            if let Some(asm) = &asm {
                let mut w = create(&out.join("fan.csv"))?;
                asm.fan.write_csv(&mut w)?;
                w.flush()?;
                let mut w = create(&out.join("u_calibrated.csv"))?;
                asm.field.write_csv(&mut w)?;
                w.flush()?;
                println!("sup |u_calibrated - u_direct| = {:.3e}", asm.field.max_abs_diff(&u));
            }
            println!(
                "{}: extra-condition L2 {:.4e} (ansatz {:.4e}), t10 = {:.6}",
                report.message, report.best_evaluation.extra_l2, report.ansatz_evaluation.extra_l2, report.best.t10
            );
        }
        Command::PriceMenu { input, y_max, m, bins, out } => {
            let u = read_field(&input)?;
            let y_max = y_max.unwrap_or(u.params.a + 1.0);
            let menu = price_menu(&u, y_max, m.unwrap_or(u.params.n))?;
            let intensity = product_intensity(&u, bins, y_max)?;
            fs::create_dir_all(&out)?;
            let mut w = create(&out.join("prices.csv"))?;
            menu.write_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&out.join("intensity.csv"))?;
            intensity.write_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&out.join("intensity.svg"))?;
            w.write_all(svg::intensity_svg(&intensity).as_bytes())?;
            w.flush()?;
            let summary = json!({
                "price_at_origin": menu.get(0, 0),
                "min_increment": menu.min_increment(),
                "min_second_difference": menu.min_second_difference(),
                "double_conjugate_gap": double_conjugate_gap(Exec::default(), &u, &menu),
                "intensity_mass": intensity.total(),
            });
            write_json(&out.join("pricing.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Pipeline { config, out } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| Error::Validation(format!("cannot read {}: {e}", config.display())))?;
            let cfg = PipelineConfig::from_json(&text)?;
            let summary = run_pipeline(&cfg, &out)?;
            for r in &summary.stages {
                println!("{:<13} {:<8} {}", serde_json::to_value(r.stage)?.as_str().unwrap_or(""), format!("{:?}", r.status).to_lowercase(), r.message);
            }
            if !summary.ok {
                let validation = summary.stages.iter().any(|r| r.validation_failure);
                return Ok(ExitCode::from(if validation { 2 } else { 3 }));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Reads `theta,R` rows.
fn read_r_samples(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = BufReader::new(open(path)?).lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty R sample file".into()))??;
    if header.trim().replace(' ', "").to_lowercase() != "theta,r" {
        return Err(Error::Parse(format!("R sample header must be `theta,R`, got {header:?}")));
    }
    let (mut theta, mut r) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("R sample row {}: {e}", k + 2)))?;
        if vals.len() != 2 {
            return Err(Error::Parse(format!("R sample row {} has {} columns", k + 2, vals.len())));
        }
        theta.push(vals[0]);
        r.push(vals[1]);
    }
    Ok((theta, r))
}
