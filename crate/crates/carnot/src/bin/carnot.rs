//! Command-line entry point: scenario verification, characteristic traces,
//! parameterization builds, mollification, and plot-data export.

use carnot::characteristics::min_forward_max_backward;
use carnot::error::{Error, Result};
use carnot::field::w_axis_names;
use carnot::group::{GroupSpec, Point};
use carnot::lagrangian::{
    build_full_param, extract_wbar, load_param, mollified_phi_and_w, mollify_chi, save_param,
};
use carnot::report::{CheckRecord, Provenance, VerificationReport};
use carnot::scenario::{build_field, build_group, run_scenario, Scenario};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "carnot", version, about = "Intrinsic-graph numerical laboratory")]
struct Cli {
    /// Output directory (falls back to $CARNOT_OUT_DIR, then the CWD).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Group-spec operations.
    Group {
        #[command(subcommand)]
        command: GroupCommand,
    },
    /// Characteristic-curve operations.
    Char {
        #[command(subcommand)]
        command: CharCommand,
    },
    /// Lagrangian-parameterization operations.
    Lagrangian {
        #[command(subcommand)]
        command: LagrangianCommand,
    },
    /// Run a scenario end to end and write its report.
    Verify { scenario: PathBuf },
    /// Regularize a stored parameterization and emit the smoothed maps.
    Mollify {
        param_dir: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Scenario providing the group and field, enabling phi/w output.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Flatten a report JSON into a CSV series for external plotting.
    Plotdata { report: PathBuf },
}

#[derive(Subcommand)]
enum GroupCommand {
    /// Validate a group-spec file and run the axiom battery.
    Check { spec: PathBuf },
}

#[derive(Subcommand)]
enum CharCommand {
    /// Trace the glued extremal characteristic through an initial datum.
    Trace {
        scenario: PathBuf,
        /// Initial vertical components, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        init: Vec<f64>,
        /// Base time; defaults to the left end of the x_j axis.
        #[arg(long)]
        t_bar: Option<f64>,
    },
}

#[derive(Subcommand)]
enum LagrangianCommand {
    /// Build the full parameterization for every j in the scenario.
    Build { scenario: PathBuf },
}

fn out_dir(cli_dir: &Option<PathBuf>) -> PathBuf {
    cli_dir
        .clone()
        .or_else(|| std::env::var_os("CARNOT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn random_point(spec: &GroupSpec, rng: &mut ChaCha8Rng) -> Point {
    let coords: Vec<f64> = (0..spec.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Point::from_coords(coords, spec.m())
}

/// Axiom battery: associativity, identity, inverse, norm homogeneity, and
/// left-invariance of the distance, each on seeded random samples.
fn group_axioms(spec: &GroupSpec, samples: usize, seed: u64) -> Result<VerificationReport> {
    let text = spec.to_toml()?;
    let mut report = VerificationReport::new(Provenance::new(&text, seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-12;
    let res = format!("{samples} samples");
    // Coordinate-level sup, not hnorm: the square root in the homogeneous
    // norm would amplify float noise on the vertical part.
    let coord_gap = |a: &Point, b: &Point| -> f64 {
        a.coords()
            .iter()
            .zip(b.coords())
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max)
    };
    let (mut assoc, mut ident, mut inv, mut homog, mut left) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let p = random_point(spec, &mut rng);
        let q = random_point(spec, &mut rng);
        let r = random_point(spec, &mut rng);
        let pq_r = spec.multiply(&spec.multiply(&p, &q)?, &r)?;
        let p_qr = spec.multiply(&p, &spec.multiply(&q, &r)?)?;
        assoc = assoc.max(coord_gap(&pq_r, &p_qr));
        let e = spec.identity();
        ident = ident.max(coord_gap(&spec.multiply(&p, &e)?, &p));
        inv = inv.max(coord_gap(&spec.multiply(&p, &spec.inverse(&p))?, &e));
        let lambda = rng.gen_range(0.1..2.0);
        homog = homog.max((spec.hnorm(&spec.dilate(lambda, &p)?) - lambda * spec.hnorm(&p)).abs());
        let d0 = spec.distance(&q, &r)?;
        let d1 = spec.distance(&spec.multiply(&p, &q)?, &spec.multiply(&p, &r)?)?;
        left = left.max((d0 - d1).abs());
    }
    report.push(CheckRecord::new("associativity", assoc, tol, res.clone()));
    report.push(CheckRecord::new("identity", ident, tol, res.clone()));
    report.push(CheckRecord::new("inverse", inv, tol, res.clone()));
    report.push(CheckRecord::new("norm_homogeneity", homog, tol, res.clone()));
    report.push(CheckRecord::new("left_invariance", left, tol, res));
    Ok(report)
}

fn finish_report(report: &VerificationReport, out: &Path, stem: &str) -> Result<bool> {
    std::fs::create_dir_all(out)?;
    report.write_json(&out.join(format!("{stem}.json")))?;
    print!("{}", report.text_table());
    Ok(report.all_pass())
}

fn run(cli: &Cli) -> Result<bool> {
    let out = out_dir(&cli.out_dir);
    match &cli.command {
        Command::Group { command: GroupCommand::Check { spec } } => {
            let text = std::fs::read_to_string(spec)?;
            match GroupSpec::from_toml(&text) {
                Ok(g) => {
                    let report = group_axioms(&g, 10_000, 0)?;
                    finish_report(&report, &out, "group_check")
                }
                Err(e) => {
                    let mut report = VerificationReport::new(Provenance::new(&text, 0));
                    report.push(CheckRecord::boolean("spec_valid", false, format!("{e}")));
                    finish_report(&report, &out, "group_check")
                }
            }
        }
        Command::Char { command: CharCommand::Trace { scenario, init, t_bar } } => {
            let sc = Scenario::load(scenario)?;
            let spec = build_group(&sc.group)?;
            let field = build_field(&sc, &spec)?;
            let j = sc.j_list[0];
            let axes = field.grid().axes();
            let xhat: Vec<f64> = (2..=spec.m())
                .filter(|&l| l != j)
                .map(|l| 0.5 * (axes[l - 2].min + axes[l - 2].max))
                .collect();
            let t_ax = &axes[j - 2];
            let t0 = t_bar.unwrap_or(t_ax.min);
            let gs = sc.grid_spec();
            let curve = min_forward_max_backward(
                &spec,
                &field,
                j,
                &xhat,
                init,
                t0,
                (t_ax.min, t_ax.max),
                gs.step,
                &gs.eps_seq,
                gs.gap_tol,
            )?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("characteristic.csv");
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["t".to_string()];
            header.extend((1..=spec.n()).map(|s| format!("gamma{s}")));
            w.write_record(&header)?;
            for (t, g) in curve.t_samples.iter().zip(&curve.gamma) {
                let mut row = vec![t.to_string()];
                row.extend(g.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Lagrangian { command: LagrangianCommand::Build { scenario } } => {
            let sc = Scenario::load(scenario)?;
            let spec = build_group(&sc.group)?;
            let field = build_field(&sc, &spec)?;
            let gs = sc.grid_spec();
            for &j in &sc.j_list {
                let mut param = build_full_param(&spec, &field, j, &gs)?;
                if let Ok(wbar) = extract_wbar(&spec, &field, &param) {
                    param.wbar = Some(wbar);
                }
                let dir = out.join(format!("param_j{j}"));
                save_param(&param, &dir)?;
                println!("wrote {}", dir.display());
            }
            Ok(true)
        }
        Command::Verify { scenario } => {
            let sc = Scenario::load(scenario)?;
            let report = run_scenario(&sc)?;
            finish_report(&report, &out, "report")
        }
        Command::Mollify { param_dir, eps, scenario } => {
            let param = load_param(param_dir)?;
            let chi_eps = mollify_chi(&param, *eps)?;
            std::fs::create_dir_all(&out)?;
            let names = vec!["t".to_string(), "label".to_string()];
            chi_eps.write_csv(&out.join("chi_eps.csv"), &names, "chi_eps")?;
            println!("wrote {}", out.join("chi_eps.csv").display());
            if let Some(path) = scenario {
                let sc = Scenario::load(path)?;
                let spec = build_group(&sc.group)?;
                let field = build_field(&sc, &spec)?;
                let (phi_eps, w_eps) = mollified_phi_and_w(&spec, &field, &param, *eps)?;
                let inames = w_axis_names(spec.m(), spec.n());
                let inames = vec![inames[param.j - 2].clone(), "y_image".to_string()];
                phi_eps.write_csv(&out.join("phi_eps.csv"), &inames, "phi_eps")?;
                w_eps.write_csv(&out.join("w_eps.csv"), &inames, "w_eps")?;
                println!("wrote {}", out.join("phi_eps.csv").display());
                println!("wrote {}", out.join("w_eps.csv").display());
            }
            Ok(true)
        }
        Command::Plotdata { report } => {
            let text = std::fs::read_to_string(report)?;
            let parsed: VerificationReport = serde_json::from_str(&text)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("plotdata.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["check", "pass", "measured", "tolerance", "resolution"])?;
            for c in &parsed.checks {
                w.write_record([
                    c.name.clone(),
                    c.pass.to_string(),
                    c.measured.to_string(),
                    c.tolerance.to_string(),
                    c.resolution.clone(),
                ])?;
            }
            w.flush()?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::ConfigError(_)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
