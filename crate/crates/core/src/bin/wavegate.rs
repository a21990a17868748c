use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use wavegate::basis::fmt17;
use wavegate::gramian::{
    filtered_constant, fit_rate, observability_row, write_ct_csv, FilterSpec, ObservabilityRow, RateFit,
};
use wavegate::packets::{mesh_table, trap_experiment, write_trap_csv, PacketSpec};
use wavegate::spectral::{cfl_margin, eig_branches, refined_grid};
use wavegate::{Error, LocalMatrices, ObservationRegion, PeriodicMesh, Scheme, SchemeParams, StatePair};

#[derive(Parser, Debug)]
#[command(name = "wavegate", version, about = "P^k-LDG leapfrog wave laboratory")]
struct Cli {
    /// Worker threads for parallel sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Seed of the random generator; WAVEGATE_SEED takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump the local mass and stiffness blocks as JSON.
    Assemble {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Branch-tracked dispersion relation as CSV.
    Dispersion {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        /// Uniform samples on [-pi/h, pi/h].
        #[arg(long, default_value_t = 1025)]
        samples: usize,
        /// Halvings of the spacing around 0 and +-pi/h.
        #[arg(long, default_value_t = 10)]
        levels: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve seeded random data and record the energies.
    Simulate {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        h: f64,
        #[arg(long = "T", default_value_t = 2.5)]
        t: f64,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trapped packet experiment over a list of mesh sizes.
    Trap {
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0.3)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
        h_list: Vec<f64>,
        #[arg(long = "T", default_value_t = 2.5)]
        t: f64,
        #[arg(long, default_value_t = 0.8)]
        gamma: f64,
        #[arg(long, default_value_t = 1.5)]
        s: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x_c: f64,
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Observability constants, unfiltered or filtered.
    Gramian {
        #[arg(long, value_delimiter = ',', default_value = "0")]
        k: Vec<usize>,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.125,0.0625")]
        h_list: Vec<f64>,
        /// Observation time; defaults to 2.5, or 2.4 with --filter-gamma-sweep.
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long)]
        filter_delta: Option<f64>,
        #[arg(long)]
        physical_only: bool,
        #[arg(long)]
        slave_pair: bool,
        /// Sweep the retention 1 - delta over 0.1, 0.2, ..., 0.9.
        #[arg(long)]
        filter_gamma_sweep: bool,
        #[command(flatten)]
        geometry: Geometry,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit ln C_T = intercept + r / h to a ct.csv file.
    FitRate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct Geometry {
    #[arg(long, value_delimiter = ',', num_args = 1..=2, default_values_t = [-6.0, 6.0], allow_hyphen_values = true)]
    domain: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..=2, default_values_t = [-1.0, 1.0], allow_hyphen_values = true)]
    exclude: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Domain {
    lo: f64,
    hi: f64,
    region: ObservationRegion,
}

impl Geometry {
    fn resolve(&self) -> Result<Domain, Failure> {
        if self.domain.len() != 2 || self.exclude.len() != 2 {
            return Err(Error::ParameterDomain("--domain and --exclude take two values".into()).into());
        }
        let region = ObservationRegion::new(self.exclude[0], self.exclude[1])?;
        if !(self.domain[1] > self.domain[0]) {
            return Err(Error::ParameterDomain(format!("empty domain {:?}", self.domain)).into());
        }
        Ok(Domain {
            lo: self.domain[0],
            hi: self.domain[1],
            region,
        })
    }
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(e) => e.exit_code() as u8,
            Failure::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn provenance(command: &str, seed: u64, params: Value) -> Value {
    json!({
        "tool": "wavegate",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "params": params,
    })
}

/// Provenance as `#` comment lines for CSV output.
fn write_header(out: &mut dyn Write, prov: &Value) -> io::Result<()> {
    writeln!(out, "# wavegate {} {}", prov["version"].as_str().unwrap_or(""), prov["command"].as_str().unwrap_or(""))?;
    writeln!(out, "# seed {}", prov["seed"])?;
    writeln!(out, "# params {}", prov["params"])
}

fn mesh_for(dom: &Domain, h: f64) -> Result<PeriodicMesh, Failure> {
    let mesh = PeriodicMesh::new(dom.lo, dom.hi, h)?;
    dom.region.validate_in(&mesh)?;
    Ok(mesh)
}

fn check_cfl(params: &SchemeParams) -> Result<(), Failure> {
    let local = LocalMatrices::for_params(params)?;
    let m = cfl_margin(&local, params.lambda, 256)?;
    if !m.is_stable() {
        return Err(Error::CflViolation {
            ratio: m.max_ratio,
            lambda_max: m.lambda_max,
        }
        .into());
    }
    Ok(())
}

fn run(cli: Cli, seed: u64) -> Result<(), Failure> {
    match cli.command {
        Command::Assemble { k, h, out } => {
            let local = wavegate::assemble_stiffness(k, h)?;
            let prov = provenance("assemble", seed, json!({ "k": k, "h": h }));
            let body = local.to_json();
            let mut w = open_out(&out)?;
            write!(w, "{{\n  \"provenance\": {},{}", prov, &body[1..])?;
            w.flush()?;
        }
        Command::Dispersion { k, lambda, h, samples, levels, out } => {
            let params = SchemeParams::new(k, h, lambda)?;
            check_cfl(&params)?;
            let local = LocalMatrices::for_params(&params)?;
            let table = eig_branches(&local, lambda, &refined_grid(h, samples, levels))?;
            let prov = provenance(
                "dispersion",
                seed,
                json!({ "k": k, "lambda": lambda, "h": h, "samples": samples, "levels": levels }),
            );
            let mut w = open_out(&out)?;
            write_header(&mut w, &prov)?;
            table.write_csv(&mut w)?;
            w.flush()?;
            eprintln!("branches: {}, physical: {}", table.branch_count(), table.physical_index);
        }
        Command::Simulate { k, lambda, h, t, stride, geometry, out } => {
            let dom = geometry.resolve()?;
            let mesh = mesh_for(&dom, h)?;
            let params = SchemeParams::new(k, h, lambda)?;
            let scheme = Scheme::new(params, mesh)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let initial = StatePair::random(params, &mesh, &mut rng);
            let result = scheme.run(&initial, t, &dom.region)?;
            let prov = provenance(
                "simulate",
                seed,
                json!({
                    "k": k, "lambda": lambda, "h": h, "T": t, "stride": stride,
                    "domain": [dom.lo, dom.hi], "exclude": [dom.region.a, dom.region.b],
                }),
            );
            let mut w = open_out(&out)?;
            write_header(&mut w, &prov)?;
            result.write_csv(&mut w, stride)?;
            w.flush()?;
            eprintln!(
                "steps {}, relative energy drift {}, observed integral {}",
                result.steps,
                fmt17(result.energy_drift()),
                fmt17(result.observed_integral)
            );
        }
        Command::Trap { k, lambda, h_list, t, gamma, s, x_c, margin, geometry, out } => {
            let dom = geometry.resolve()?;
            let spec = PacketSpec::new(gamma, s, x_c, margin)?;
            let rows = h_list
                .par_iter()
                .map(|&h| {
                    let mesh = mesh_for(&dom, h)?;
                    let params = SchemeParams::new(k, h, lambda)?;
                    Ok(trap_experiment(&params, &mesh, &spec, t, &dom.region)?)
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let prov = provenance(
                "trap",
                seed,
                json!({
                    "k": k, "lambda": lambda, "h_list": h_list, "T": t, "gamma": gamma, "s": s,
                    "x_c": x_c, "margin": margin,
                    "domain": [dom.lo, dom.hi], "exclude": [dom.region.a, dom.region.b],
                }),
            );
            let mut w = open_out(&out)?;
            write_header(&mut w, &prov)?;
            write_trap_csv(&mut w, &rows)?;
            w.flush()?;
        }
        Command::Gramian {
            k,
            lambda,
            h_list,
            t,
            filter_delta,
            physical_only,
            slave_pair,
            filter_gamma_sweep,
            geometry,
            out,
        } => {
            let dom = geometry.resolve()?;
            let t = t.unwrap_or(if filter_gamma_sweep { 2.4 } else { 2.5 });
            let deltas: Vec<Option<f64>> = if filter_gamma_sweep {
                (1..=9).map(|i| Some(1.0 - i as f64 / 10.0)).collect()
            } else {
                vec![filter_delta]
            };
            let mut jobs = Vec::new();
            for &kk in &k {
                for &h in &h_list {
                    for &d in &deltas {
                        jobs.push((kk, h, d));
                    }
                }
            }
            let rows = jobs
                .par_iter()
                .map(|&(kk, h, delta)| -> Result<ObservabilityRow, Failure> {
                    let mesh = mesh_for(&dom, h)?;
                    let params = SchemeParams::new(kk, h, lambda)?;
                    let scheme = Scheme::new(params, mesh)?;
                    match delta {
                        None => Ok(observability_row(&scheme, &dom.region, t)?),
                        Some(d) => {
                            let filter = FilterSpec::new(d, physical_only, slave_pair)?;
                            let table = mesh_table(&params, &mesh, 4)?;
                            let f = filtered_constant(&scheme, &dom.region, t, &table, &filter)?;
                            Ok(ObservabilityRow {
                                k: kk,
                                lambda,
                                t,
                                h,
                                cells: mesh.cells,
                                steps: scheme.steps_for(t)?,
                                delta: Some(d),
                                physical_only,
                                c_t: f.c_t,
                                mu_min: f.mu_min,
                                deflated_dim: f.deflated_dim,
                            })
                        }
                    }
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let prov = provenance(
                "gramian",
                seed,
                json!({
                    "k": k, "lambda": lambda, "h_list": h_list, "T": t, "filter_delta": filter_delta,
                    "physical_only": physical_only, "slave_pair": slave_pair,
                    "filter_gamma_sweep": filter_gamma_sweep,
                    "domain": [dom.lo, dom.hi], "exclude": [dom.region.a, dom.region.b],
                }),
            );
            let mut w = open_out(&out)?;
            write_header(&mut w, &prov)?;
            write_ct_csv(&mut w, &rows)?;
            w.flush()?;
        }
        Command::FitRate { input, k, lambda, out } => {
            let points = read_ct(&input, k, lambda)?;
            let fit = fit_rate(&points)?;
            let prov = provenance(
                "fit-rate",
                seed,
                json!({ "in": input.display().to_string(), "k": k, "lambda": lambda }),
            );
            let mut w = open_out(&out)?;
            writeln!(w, "{}", rate_json(&fit, prov))?;
            w.flush()?;
        }
    }
    Ok(())
}

fn rate_json(fit: &RateFit, prov: Value) -> String {
    let points: Vec<String> = fit
        .points
        .iter()
        .map(|(h, c)| format!("{{\"h\": {}, \"C_T\": {}}}", fmt17(*h), fmt17(*c)))
        .collect();
    format!(
        "{{\n  \"r\": {},\n  \"intercept\": {},\n  \"r2\": {},\n  \"points\": [{}],\n  \"provenance\": {}\n}}",
        fmt17(fit.r),
        fmt17(fit.intercept),
        fmt17(fit.r2),
        points.join(", "),
        prov
    )
}

/// `(h, C_T)` rows of a ct.csv file matching the selectors; all remaining rows
/// must share `k`, `lambda`, `T` and `delta`.
fn read_ct(path: &Path, k: Option<usize>, lambda: Option<f64>) -> Result<Vec<(f64, f64)>, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Failure::Io(e.to_string()))?;
    let bad = |msg: String| Failure::Core(Error::ParameterDomain(msg));
    let mut points = Vec::new();
    let mut config: Option<(String, String, String, String)> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(format!("malformed ct.csv: {e}")))?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| field(i).parse::<f64>().map_err(|e| bad(format!("column {i}: {e}")));
        if let Some(k) = k {
            if field(0) != k.to_string() {
                continue;
            }
        }
        if let Some(l) = lambda {
            if (num(1)? - l).abs() > 1e-12 * l.abs() {
                continue;
            }
        }
        let key = (field(0), field(1), field(2), field(6));
        match &config {
            None => config = Some(key),
            Some(c) if *c != key => {
                return Err(bad("ct.csv mixes configurations; select one with --k/--lambda".into()))
            }
            _ => {}
        }
        points.push((num(3)?, num(8)?));
    }
    Ok(points)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = match std::env::var("WAVEGATE_SEED") {
        Ok(v) => match v.trim().parse::<u64>() {
            Ok(s) => s,
            Err(_) => {
                eprintln!("error: WAVEGATE_SEED must be an unsigned integer, got {v:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => cli.seed,
    };
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli, seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
