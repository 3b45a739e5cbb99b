//! Command-line front end: single fault studies, load sweeps and branch diagrams.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cct_core::energy::{TauA, TauH};
use cct_core::equilibria::{write_branches_csv, ContinuationOptions};
use cct_core::faultstudy::{run_fault_study, FaultScenario, FaultStudyResult, StudyOptions, TrueCct};
use cct_core::report::{branch_svg, emit_reports};
use cct_core::scenario::{load_scenario, wscc9_tmib};
use cct_core::sweep::{closest_uep_switches, find_optimum, fold_locations, run_branches, run_sweep, Metric, ParamPath, SweepSpec};

const EXIT_INADMISSIBLE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "cct", version, about = "Critical clearing times for swing-equation network models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one fault study and print the three clearing times.
    Study {
        /// Scenario file, or `wscc9` for the bundled WSCC 9-bus case.
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one load parameter and write CSV and SVG reports.
    Sweep {
        scenario: String,
        /// Load parameter, e.g. `G_C`, `B_B` or `B:8`.
        #[arg(long)]
        param: String,
        /// Grid as `lo:hi:step`.
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also trace equilibrium branches over the range.
        #[arg(long)]
        branches: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Trace equilibrium branches of the post-fault system.
    Branches {
        scenario: String,
        #[arg(long)]
        param: String,
        /// Interval as `lo:hi`.
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Grid frequency override (Hz).
    #[arg(long)]
    freq: Option<f64>,
    /// Relative integration tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Upper end of the clearing-time bisection (s).
    #[arg(long)]
    horizon: Option<f64>,
    /// Bisection resolution (s).
    #[arg(long)]
    resolution: Option<f64>,
    /// Worker threads for sweeps (1 = serial, 0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn options(&self) -> Result<StudyOptions> {
        let mut o = StudyOptions::default();
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                bail!("--tolerance must be positive");
            }
            o.ode.rtol = t;
            o.tau_h.ode.rtol = t;
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                bail!("--horizon must be positive");
            }
            o.horizon = h;
        }
        if let Some(r) = self.resolution {
            if !(r > 0.0) {
                bail!("--resolution must be positive");
            }
            o.resolution = r;
        }
        Ok(o)
    }

    fn scenario(&self, arg: &str) -> Result<FaultScenario> {
        let mut sc = if arg == "wscc9" { wscc9_tmib() } else { load_scenario(Path::new(arg))? };
        if let Some(f) = self.freq {
            if !(f > 0.0) {
                bail!("--freq must be positive");
            }
            sc.frequency = Some(f);
        }
        Ok(sc)
    }
}

fn parse_range(s: &str, parts: usize) -> Result<Vec<f64>> {
    let v = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| anyhow!("bad number {p:?} in range {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if v.len() != parts {
        bail!("range {s:?} needs {parts} colon-separated values");
    }
    Ok(v)
}

fn fmt_time(t: Option<f64>) -> String {
    t.map(|t| format!("{t:.4} s")).unwrap_or_else(|| "-".into())
}

fn print_study(r: &FaultStudyResult) {
    println!("admissible: {}", r.admissible);
    if let Some(reason) = &r.inadmissible {
        println!("reason:     {} ({reason:?})", reason.code());
    }
    if !r.pm.is_empty() {
        println!("P_m:        {:?}", r.pm);
    }
    if let Some(s) = &r.sep {
        println!("SEP:        {s:?}");
    }
    if let Some(c) = &r.critical {
        println!("closest UEP {:?}, E_c = {:.6}", c.closest_uep.delta, c.e_c);
    }
    if let Some(de) = r.delta_e {
        println!("dE:         {de:.6}");
    }
    match r.tau {
        Some(TrueCct::Time { value, bracket_verified }) => {
            let note = match bracket_verified {
                Some(false) => " (bracket re-check failed)",
                _ => "",
            };
            println!("tau:        {value:.4} s{note}");
        }
        Some(TrueCct::Unbounded) => println!("tau:        unbounded"),
        Some(TrueCct::UnstableAtZero) => println!("tau:        0 (post-fault system unstable)"),
        None => {}
    }
    match r.tau_h {
        Some(TauH::Crossing(t)) => println!("tau_H:      {}", fmt_time(Some(t))),
        Some(TauH::NoCrossing) => println!("tau_H:      no crossing"),
        None => {}
    }
    match r.tau_a {
        Some(TauA::Time(t)) => println!("tau_A:      {}", fmt_time(Some(t))),
        Some(TauA::NoRealRoot) => println!("tau_A:      no real root"),
        None => {}
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Study { scenario, common } => {
            let sc = common.scenario(&scenario)?;
            let r = run_fault_study(&sc, &common.options()?)?;
            print_study(&r);
            Ok(if r.admissible { 0 } else { EXIT_INADMISSIBLE })
        }
        Command::Sweep { scenario, param, range, out, branches, common } => {
            let sc = common.scenario(&scenario)?;
            let opts = common.options()?;
            let r = parse_range(&range, 3)?;
            let path = ParamPath::parse(&sc, &param)?;
            let spec = SweepSpec::new(path.clone(), r[0], r[1], r[2])?;
            let table = run_sweep(&sc, &spec, &opts, common.jobs)?;
            let traced = branches.then(|| run_branches(&sc, &path, r[0], r[1], &ContinuationOptions::default(), &opts));
            for f in emit_reports(&table, traced.as_deref(), &out)? {
                println!("wrote {}", f.display());
            }
            if !table.any_admissible() {
                eprintln!("no admissible point in the sweep");
                return Ok(EXIT_INADMISSIBLE);
            }
            for (name, m) in [("tau", Metric::Tau), ("tau_H", Metric::TauH), ("tau_A", Metric::TauA), ("dE", Metric::DeltaE)] {
                if let Ok((p, v)) = find_optimum(&table.rows, m) {
                    println!("max {name}: {v:.4} at {} = {p}", table.param);
                }
            }
            let switches = closest_uep_switches(&table.rows, 0.3);
            if !switches.is_empty() {
                println!("closest-UEP switches near {switches:?}");
            }
            if let Some(b) = &traced {
                println!("folds near {:?}", fold_locations(b, 0.05));
            }
            Ok(0)
        }
        Command::Branches { scenario, param, range, out, common } => {
            let sc = common.scenario(&scenario)?;
            let opts = common.options()?;
            let r = parse_range(&range, 2)?;
            if !(r[0] < r[1]) {
                bail!("range needs lo < hi");
            }
            let path = ParamPath::parse(&sc, &param)?;
            let branches = run_branches(&sc, &path, r[0], r[1], &ContinuationOptions::default(), &opts);
            if branches.is_empty() {
                eprintln!("no equilibria found over the range");
                return Ok(EXIT_INADMISSIBLE);
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let csv_path = out.join("branches.csv");
            let file = std::fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
            write_branches_csv(&branches, std::io::BufWriter::new(file))?;
            let svg_path = out.join("branches.svg");
            std::fs::write(&svg_path, branch_svg(&branches, None, &path.label)).with_context(|| format!("writing {}", svg_path.display()))?;
            println!("wrote {}\nwrote {}", csv_path.display(), svg_path.display());
            println!("{} branches, folds near {:?}", branches.len(), fold_locations(&branches, 0.05));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
