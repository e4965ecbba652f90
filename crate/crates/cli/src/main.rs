use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdft::sweep::{
    contour_table, evolve_trace, run_sweep, verify, write_contours_csv, write_evolve_csv,
    write_sweep_csv, write_verify_json, RunConfig, SweepError, SweepGrid, DEFAULT_SEED,
};

/// Two atoms crossing a detuned cavity mode: transit traces, entanglement
/// maps, maximal-entanglement contours and a numerical self-check.
#[derive(Parser, Debug)]
#[command(name = "tdft", version)]
struct Cli {
    /// Config file of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (default: stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Accept |g0/delta| above 0.1
    #[arg(long = "unsafe", global = true)]
    allow_unsafe: bool,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Per-key overrides of the config file.
#[derive(Args, Debug)]
struct Overrides {
    #[arg(
        long = "g0_mhz",
        global = true,
        value_name = "RAD_PER_US",
        allow_hyphen_values = true
    )]
    g0_mhz: Option<String>,
    #[arg(
        long = "delta_mhz",
        global = true,
        value_name = "RAD_PER_US",
        allow_hyphen_values = true
    )]
    delta_mhz: Option<String>,
    #[arg(
        long = "d_um",
        global = true,
        value_name = "UM",
        allow_hyphen_values = true
    )]
    d_um: Option<String>,
    #[arg(
        long = "v_mps",
        global = true,
        value_name = "M_PER_S",
        allow_hyphen_values = true
    )]
    v_mps: Option<String>,
    #[arg(
        long = "z1_0_um",
        global = true,
        value_name = "UM",
        allow_hyphen_values = true
    )]
    z1_0_um: Option<String>,
    #[arg(
        long = "z2_0_um",
        global = true,
        value_name = "UM",
        allow_hyphen_values = true
    )]
    z2_0_um: Option<String>,
    #[arg(long = "n_p", global = true, allow_hyphen_values = true)]
    n_p: Option<String>,
    #[arg(long = "step_factor", global = true, allow_hyphen_values = true)]
    step_factor: Option<String>,
    #[arg(long = "window_sigmas", global = true, allow_hyphen_values = true)]
    window_sigmas: Option<String>,
    /// closed_form, quadrature or exact
    #[arg(long = "mode", global = true)]
    mode: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> [(&'static str, &Option<String>); 10] {
        [
            ("g0_mhz", &self.g0_mhz),
            ("delta_mhz", &self.delta_mhz),
            ("d_um", &self.d_um),
            ("v_mps", &self.v_mps),
            ("z1_0_um", &self.z1_0_um),
            ("z2_0_um", &self.z2_0_um),
            ("n_p", &self.n_p),
            ("step_factor", &self.step_factor),
            ("window_sigmas", &self.window_sigmas),
            ("mode", &self.mode),
        ]
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time trace of one transit
    Evolve {
        #[arg(long, default_value_t = 401)]
        samples: usize,
    },
    /// Final entanglement over a grid of reduced velocity and separation
    Sweep {
        #[arg(long = "v_min", default_value_t = 0.05)]
        v_min: f64,
        #[arg(long = "v_max", default_value_t = 2.0)]
        v_max: f64,
        #[arg(long = "z0_min", default_value_t = -4.0, allow_hyphen_values = true)]
        z0_min: f64,
        #[arg(long = "z0_max", default_value_t = 4.0, allow_hyphen_values = true)]
        z0_max: f64,
        #[arg(long, default_value_t = 101)]
        nv: usize,
        #[arg(long, default_value_t = 101)]
        nz: usize,
    },
    /// Velocities of maximal entanglement
    Contours {
        #[arg(long = "n_max", default_value_t = 6)]
        n_max: u32,
        #[arg(long = "z0_min", default_value_t = -4.0, allow_hyphen_values = true)]
        z0_min: f64,
        #[arg(long = "z0_max", default_value_t = 4.0, allow_hyphen_values = true)]
        z0_max: f64,
        #[arg(long, default_value_t = 101)]
        nz: usize,
        /// Allow n_max above 6
        #[arg(long = "allow_large_n")]
        allow_large_n: bool,
    },
    /// Numerical checks as a JSON report; exit 1 if any check fails
    Verify {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, SweepError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| SweepError::Config {
                key: "config".into(),
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for (key, value) in cli.overrides.pairs() {
        if let Some(v) = value {
            config.set(key, v)?;
        }
    }
    Ok(config)
}

/// Returns the encoded output and whether every check passed.
fn run(cli: &Cli) -> Result<(Vec<u8>, bool), SweepError> {
    let config = load_config(cli)?;
    let mut buf = Vec::new();
    let mut passed = true;
    match &cli.command {
        Command::Evolve { samples } => {
            let rows = evolve_trace(&config, *samples, cli.allow_unsafe)?;
            write_evolve_csv(&mut buf, &rows)?;
        }
        Command::Sweep {
            v_min,
            v_max,
            z0_min,
            z0_max,
            nv,
            nz,
        } => {
            let grid = SweepGrid {
                v_min: *v_min,
                v_max: *v_max,
                z0_min: *z0_min,
                z0_max: *z0_max,
                nv: *nv,
                nz: *nz,
            };
            let rows = run_sweep(&grid, &config, cli.allow_unsafe, cli.threads)?;
            write_sweep_csv(&mut buf, &rows)?;
        }
        Command::Contours {
            n_max,
            z0_min,
            z0_max,
            nz,
            allow_large_n,
        } => {
            let rows = contour_table(*n_max, *z0_min, *z0_max, *nz, *allow_large_n)?;
            write_contours_csv(&mut buf, &rows)?;
        }
        Command::Verify { seed } => {
            let report = match cli.threads {
                Some(0) => {
                    return Err(SweepError::Config {
                        key: "threads".into(),
                        message: "must be at least 1".into(),
                    })
                }
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| SweepError::Config {
                        key: "threads".into(),
                        message: e.to_string(),
                    })?
                    .install(|| verify(&config, cli.allow_unsafe, *seed))?,
                None => verify(&config, cli.allow_unsafe, *seed)?,
            };
            passed = report.passed;
            write_verify_json(&mut buf, &report)?;
        }
    }
    Ok((buf, passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (bytes, passed) = match run(&cli) {
        Ok(done) => done,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let written = match &cli.out {
        Some(path) => fs::write(path, &bytes),
        None => io::stdout().lock().write_all(&bytes),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(2);
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
