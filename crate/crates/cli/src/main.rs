//! `crown`: runs the acceptance experiments and writes CSV/JSON tables.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use crown_core::experiments::{self, EpsWindow, Outcome, Settings};

#[derive(Parser, Debug)]
#[command(name = "crown", version, about = "Crown-ansatz experiment runner")]
struct Cli {
    /// TOML file overriding the embedded defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for result files.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Profile {
    Bubble,
    Crown,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Energy constants and c̃ per dimension.
    Constants {
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
    },
    /// Crown energy against (k+1) S_n over a sweep in k.
    CrownEnergy {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Gram matrix of the kernel fields.
    Gram {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Kernel residuals and parameter-derivative identities.
    Kernel {
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
    },
    /// Boundary-defect sweeps of the projection.
    Projection {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Energy expansion coefficient and slope fits.
    Expansion {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        d: Option<f64>,
    },
    /// Critical scale, golden-section check and crown Hessian.
    Reduced {
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = Profile::Both)]
        profile: Profile,
        /// Ring size for the crown profile.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Weighted error-norm sweeps.
    Residual {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',', requires = "n")]
        eps: Option<Vec<f64>>,
    },
    /// Convolution-bound stability and kernel decay.
    Bounds {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
    },
    /// Error-estimate audit on closed-form integrals.
    Quadrature,
    /// Every experiment.
    All,
    /// Print the effective configuration as TOML.
    Config,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Constants { .. } => "constants",
            Command::CrownEnergy { .. } => "crown-energy",
            Command::Gram { .. } => "gram",
            Command::Kernel { .. } => "kernel",
            Command::Projection { .. } => "projection",
            Command::Expansion { .. } => "expansion",
            Command::Reduced { .. } => "reduced",
            Command::Residual { .. } => "residual",
            Command::Bounds { .. } => "bounds",
            Command::Quadrature => "quadrature",
            Command::All => "all",
            Command::Config => "config",
        }
    }

    /// Fold command-line overrides into `s`.
    fn apply(&self, s: &mut Settings) -> Result<()> {
        match self {
            Command::Constants { n: Some(n) } => s.constants.dims = n.clone(),
            Command::CrownEnergy { n, k } => {
                if let Some(n) = n {
                    s.crown_energy.n = *n;
                }
                if let Some(k) = k {
                    s.crown_energy.ks = k.clone();
                }
            }
            Command::Gram { n, k } => {
                if let Some(n) = n {
                    s.gram.n = *n;
                }
                if let Some(k) = k {
                    s.gram.k = *k;
                }
            }
            Command::Kernel { n: Some(n) } => {
                let ks: Vec<usize> = n
                    .iter()
                    .map(|d| {
                        s.kernel
                            .dims
                            .iter()
                            .position(|x| x == d)
                            .and_then(|i| s.kernel.ks.get(i).copied())
                            .unwrap_or(8)
                    })
                    .collect();
                s.kernel.dims = n.clone();
                s.kernel.ks = ks;
            }
            Command::Projection { eps: Some(e) } => s.projection.eps = e.clone(),
            Command::Expansion { eps, d } => {
                if let Some(e) = eps {
                    s.expansion.eps = e.clone();
                }
                if d.is_some() {
                    s.expansion.d = *d;
                }
            }
            Command::Reduced { n, profile, k } => {
                if let Some(n) = n {
                    s.reduced.dims = n.clone();
                }
                if let Some(k) = k {
                    let n = s.reduced.crown.map_or(4, |c| c[0]);
                    s.reduced.crown = Some([n, *k]);
                }
                match profile {
                    Profile::Bubble => s.reduced.crown = None,
                    Profile::Crown => s.reduced.dims.clear(),
                    Profile::Both => {}
                }
            }
            Command::Residual { n: Some(n), eps } => {
                let window = match eps {
                    Some(e) => EpsWindow { n: *n, eps: e.clone() },
                    None => match s.residual.windows.iter().find(|w| w.n == *n) {
                        Some(w) => w.clone(),
                        None => bail!("no ε window configured for n = {n}; pass --eps"),
                    },
                };
                s.residual.windows = vec![window];
            }
            Command::Bounds { a, b } => {
                if let Some(a) = a {
                    s.bounds.a = *a;
                }
                if let Some(b) = b {
                    s.bounds.b = *b;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn run(&self, s: &Settings) -> Result<Vec<Outcome>> {
        let out = match self {
            Command::Constants { .. } => vec![experiments::constants_check(&s.constants)?],
            Command::CrownEnergy { .. } => vec![experiments::crown_energy_check(&s.crown_energy)?],
            Command::Gram { .. } => vec![experiments::gram_check(&s.gram)?],
            Command::Kernel { .. } => vec![experiments::kernel_check(&s.kernel)?],
            Command::Projection { .. } => vec![experiments::projection_check(&s.projection)?],
            Command::Expansion { .. } => vec![experiments::expansion_check_all(&s.expansion)?],
            Command::Reduced { .. } => vec![experiments::reduced_check(&s.reduced)?],
            Command::Residual { .. } => vec![experiments::residual_check(&s.residual)?],
            Command::Bounds { .. } => vec![experiments::bounds_check(&s.bounds)?],
            Command::Quadrature => vec![experiments::quadrature_check(&s.quadrature)?],
            Command::All => experiments::run_all(s)?,
            Command::Config => Vec::new(),
        };
        Ok(out)
    }
}

fn load_settings(path: Option<&PathBuf>) -> Result<Settings> {
    match path {
        None => Ok(Settings::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("malformed config {}", p.display()))
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let mut settings = load_settings(cli.config.as_ref())?;
    cli.command.apply(&mut settings)?;
    if let Command::Config = cli.command {
        print!("{}", toml::to_string(&settings)?);
        return Ok(true);
    }
    let outcomes = cli
        .command
        .run(&settings)
        .with_context(|| format!("experiment `{}` failed", cli.command.name()))?;
    let files = output::write(&cli.out, cli.command.name(), &settings, &outcomes, cli.format)?;
    for o in &outcomes {
        println!("C{} {} {}: {}", o.criterion, o.verdict, o.name, o.summary);
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(outcomes.iter().all(|o| o.verdict.passed()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn overrides_fold_into_settings() {
        let mut s = Settings::default();
        let cli = Cli::parse_from(["crown", "reduced", "--n", "3", "--profile", "bubble"]);
        cli.command.apply(&mut s).unwrap();
        assert_eq!(s.reduced.dims, vec![3]);
        assert!(s.reduced.crown.is_none());

        let cli = Cli::parse_from(["crown", "crown-energy", "--n", "4", "--k", "8,16,32"]);
        cli.command.apply(&mut s).unwrap();
        assert_eq!(s.crown_energy.ks, vec![8, 16, 32]);

        let cli = Cli::parse_from(["crown", "residual", "--n", "7"]);
        assert!(cli.command.apply(&mut s).is_err());
    }

    #[test]
    fn embedded_defaults_round_trip_through_toml() {
        let s = Settings::default();
        let text = toml::to_string(&s).unwrap();
        let back: Settings = toml::from_str(&text).unwrap();
        assert_eq!(s, back);
        let partial: Settings = toml::from_str("[gram]\nk = 8\n").unwrap();
        assert_eq!(partial.gram.k, 8);
        assert_eq!(partial.gram.n, 4);
        assert!(toml::from_str::<Settings>("[gram]\nbogus = 1\n").is_err());
    }
}
