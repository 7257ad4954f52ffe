use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use singular_orbits::cli::{self, Command, Format, RunConfig};

/// Normal forms and checks near singular orbits of integrable systems.
#[derive(Parser)]
#[command(name = "singorb", version)]
struct Opts {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Tolerance (integrator tolerance, or eigenvalue threshold for classify).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Grid or probe count (meaning depends on the command).
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Random draws (classify: generic combinations; model: automorphisms).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand)]
enum Cmd {
    /// Williamson type of a quadratic family given as JSON.
    Classify {
        input: PathBuf,
        /// Rank of the orbit.
        #[arg(long, default_value_t = 0)]
        m: usize,
    },
    /// Linear model from a JSON descriptor.
    Model { input: PathBuf },
    /// Trajectory of the Hamiltonian field of an expression.
    Flow {
        hamiltonian: String,
        /// Start point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Vec<f64>,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        time: f64,
    },
    /// Exponential map of a field tangent to a moment map.
    Exp {
        hamiltonian: String,
        /// Moment-map component (repeatable).
        #[arg(long = "moment", required = true)]
        moment: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Recover the generator of the path t -> exp(t X_H).
    Pathinv {
        hamiltonian: String,
        #[arg(long = "moment", required = true)]
        moment: Vec<String>,
        #[arg(long, default_value_t = 65)]
        samples: usize,
    },
    /// Linearize a finite group action given as JSON.
    Average { input: PathBuf },
    /// Action integrals of a planar system.
    Actions {
        hamiltonian: String,
        #[arg(long, default_value_t = 0.1)]
        e_min: f64,
        #[arg(long, default_value_t = 1.0)]
        e_max: f64,
        /// Primitive: ydx, -xdy or sym.
        #[arg(long, default_value = "ydx", allow_hyphen_values = true)]
        tag: String,
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
    },
    /// Nonresonant system with hyperbolic orbits near the origin.
    Counterexample {
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, std::f64::consts::SQRT_2])]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        regions: usize,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        /// Nonresonance search bound.
        #[arg(long, default_value_t = 50)]
        bound: i64,
    },
    /// Rerun a saved config.json.
    Replay { config: PathBuf },
}

fn main() -> ExitCode {
    let opts = Opts::parse();
    let c = opts.common;
    let command = match opts.cmd {
        Cmd::Classify { input, m } => Command::Classify { input, m },
        Cmd::Model { input } => Command::Model { input },
        Cmd::Flow { hamiltonian, point, time } => Command::Flow { hamiltonian, point, time },
        Cmd::Exp {
            hamiltonian,
            moment,
            radius,
        } => Command::Exp {
            hamiltonian,
            moment,
            radius,
        },
        Cmd::Pathinv {
            hamiltonian,
            moment,
            samples,
        } => Command::Pathinv {
            hamiltonian,
            moment,
            samples,
        },
        Cmd::Average { input } => Command::Average { input },
        Cmd::Actions {
            hamiltonian,
            e_min,
            e_max,
            tag,
            radius,
        } => Command::Actions {
            hamiltonian,
            e_min,
            e_max,
            tag,
            radius,
        },
        Cmd::Counterexample {
            gamma,
            regions,
            epsilon,
            bound,
        } => Command::Counterexample {
            gamma,
            regions,
            epsilon,
            bound,
        },
        Cmd::Replay { config } => match cli::load_config(&config, c.out.clone()) {
            Ok(cfg) => return finish(cli::run(&cfg)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let cfg = RunConfig {
        command,
        tol: c.tol,
        grid: c.grid,
        seed: c.seed,
        trials: c.trials,
        format: c.format,
        out: c.out,
    };
    finish(cli::run(&cfg))
}

fn finish(o: cli::Outcome) -> ExitCode {
    if o.exit_code == 0 {
        println!("{} ({})", o.message, o.report.display());
    } else {
        eprintln!("{} ({})", o.message, o.report.display());
    }
    ExitCode::from(o.exit_code as u8)
}
