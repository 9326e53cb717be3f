//! Command-line front end: campaign execution and resumption, fitting,
//! evaluation of the analytic constants and threshold curves, and the
//! curved-surface scaling report.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toric_mc::analysis::{
    self, ChainBoundParams, H3Table, NHat,
};
use toric_mc::campaign::{
    emit, fmt_float, run_campaign, CampaignConfig, CampaignError, ResultStore,
};
use toric_mc::decoder3d::StarMetricParams;
use toric_mc::fitting::fit_campaign;
use toric_mc::surface::{
    minimal_loop_length, perimeter_closed_form, perimeter_table, threshold_multiplier,
    threshold_multiplier_closed_form, SurfaceParams,
};
use toric_mc::BETA;

#[derive(Parser)]
#[command(name = "toric-mc", about = "Toric-code recovery simulations and threshold analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a campaign described by a key=value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (overrides the config key).
        #[arg(long)]
        threads: Option<usize>,
        /// Master seed (overrides the config key).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Continue an interrupted campaign from its output directory.
    Resume {
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce a finished campaign to per-k fits and the cross-k exponent.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate analytic results.
    Analysis {
        #[command(subcommand)]
        what: AnalysisCmd,
    },
    /// Curved-surface scaling: perimeter table and scalar summaries.
    Surface(SurfaceArgs),
}

#[derive(Subcommand)]
enum AnalysisCmd {
    /// The closed-form constants: growth rates, thresholds, coefficients.
    Constants,
    /// Sub-threshold region boundary curves in the (q, p) plane as CSV.
    Curves,
}

#[derive(Args)]
struct SurfaceArgs {
    #[arg(long = "L")]
    l: u32,
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    symmetrized: bool,
    /// Largest diamond radius tabulated (default 3L).
    #[arg(long)]
    r_max: Option<u32>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CampaignError::Config(_) => ExitCode::from(2),
                CampaignError::Io(_) | CampaignError::Store(_) => ExitCode::from(3),
            }
        }
    }
}

fn config_err(msg: String) -> CampaignError {
    CampaignError::Config(msg)
}

fn dispatch(cmd: Command) -> Result<(), CampaignError> {
    match cmd {
        Command::Run { config, out, threads, seed } => {
            let text = fs::read_to_string(&config)?;
            let mut cfg = CampaignConfig::from_key_values(&text)?;
            if let Some(t) = threads {
                cfg.threads = t;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            cfg.validate()?;
            execute(&cfg, &out)
        }
        Command::Resume { out } => {
            let text = fs::read_to_string(out.join("config.resolved"))?;
            let cfg = CampaignConfig::from_key_values(&text)?;
            execute(&cfg, &out)
        }
        Command::Fit { input, out } => {
            let store = ResultStore::open(&input.join("store.ndjson"))?;
            let (per_k, beta) = fit_campaign(&store.samples())
                .map_err(|e| config_err(e.to_string()))?;
            fs::create_dir_all(&out)?;
            let mut csv = String::from("k,exponent,exponent_stderr,p_c,p_c_stderr,n_used\n");
            for f in &per_k {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    f.k,
                    fmt_float(f.exponent),
                    fmt_float(f.exponent_stderr),
                    fmt_float(f.p_c),
                    fmt_float(f.p_c_stderr),
                    f.n_used
                ));
            }
            fs::write(out.join("per_k.csv"), csv)?;
            let summary = serde_json::json!({
                "slope": beta.slope,
                "slope_stderr": beta.slope_stderr,
                "intercept": beta.intercept,
                "intercept_stderr": beta.intercept_stderr,
                "f_min": beta.f_min,
                "beta_predicted": BETA,
            });
            fs::write(out.join("fit.json"), serde_json::to_string_pretty(&summary)?)?;
            println!(
                "slope = {} +/- {}  intercept = {} +/- {}",
                fmt_float(beta.slope),
                fmt_float(beta.slope_stderr),
                fmt_float(beta.intercept),
                fmt_float(beta.intercept_stderr)
            );
            Ok(())
        }
        Command::Analysis { what } => match what {
            AnalysisCmd::Constants => {
                let params = StarMetricParams::default();
                let kv = |k: &str, v: f64| println!("{k} = {}", fmt_float(v));
                kv("beta", BETA);
                kv("h1_rate", analysis::h1_rate());
                kv("h2_rate", analysis::h2_rate());
                kv("p_c_2d", 1.0 / analysis::h2_rate());
                kv("saturation_threshold_2d", analysis::saturation_threshold_2d());
                kv("saturation_threshold_3d", analysis::saturation_threshold_3d());
                kv("prediction_coefficient_3d", analysis::prediction_coefficient_3d(&params));
                kv("gamma_all_errors", analysis::gamma_of(NHat::AllErrors, &params));
                kv("gamma_single_error", analysis::gamma_of(NHat::Pow2(0), &params));
                Ok(())
            }
            AnalysisCmd::Curves => {
                let params = ChainBoundParams::standard().map_err(|e| config_err(e.to_string()))?;
                let table = H3Table::from_embedded().map_err(|e| config_err(e.to_string()))?;
                let region = analysis::threshold_region(8, &table, &params.star)
                    .map_err(|e| config_err(e.to_string()))?;
                println!("# ankle p = {}", fmt_float(region.ankle));
                println!("# toe q = {}", fmt_float(region.toe));
                println!("curve,q,p");
                for curve in &region.curves {
                    let label = match curve.n_hat {
                        NHat::Pow2(m) => format!("n{}", 1u64 << m),
                        NHat::AllErrors => "errors".into(),
                        NHat::AllGhosts => "ghosts".into(),
                    };
                    for &(q, p) in &curve.points {
                        println!("{label},{},{}", fmt_float(q), fmt_float(p));
                    }
                }
                Ok(())
            }
        },
        Command::Surface(args) => {
            if args.l < 2 || args.n < 2 {
                return Err(config_err("surface requires L >= 2 and N >= 2".into()));
            }
            let p = SurfaceParams::new(args.l, args.n, args.symmetrized);
            let d = p.kink_density();
            let r_max = args.r_max.unwrap_or(3 * args.l);
            let table = perimeter_table(r_max, d);
            println!("r,c_recursion,c_closed");
            for (r, &c) in table.iter().enumerate() {
                println!("{r},{},{}", fmt_float(c), fmt_float(perimeter_closed_form(r as f64, d)));
            }
            println!("# minimal_loop_length = {}", fmt_float(minimal_loop_length(&p)));
            println!("# threshold_multiplier = {}", fmt_float(threshold_multiplier(&p)));
            println!(
                "# threshold_multiplier_closed_form = {}",
                fmt_float(threshold_multiplier_closed_form(&p))
            );
            Ok(())
        }
    }
}

/// Run (or resume) all cells into DIR/store.ndjson and export the data
/// files. The resolved config is written first so `resume` sees the same
/// cell plan.
fn execute(cfg: &CampaignConfig, out: &PathBuf) -> Result<(), CampaignError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.resolved"), cfg.to_key_values())?;
    let mut store = ResultStore::open(&out.join("store.ndjson"))?;
    run_campaign(cfg, &mut store)?;
    store.compact()?;
    emit(cfg, &store, out)?;
    println!("{} cells complete in {}", store.len(), out.display());
    Ok(())
}
