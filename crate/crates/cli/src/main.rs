use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use latblock::constants::{self, WeightSource};
use latblock::covariance::{Covariogram, DEFAULT_REL_TOL};
use latblock::estimators::{estimate, FieldSample, SmoothStatistic};
use latblock::fieldsim::{build_generator, sample_field, substream, Method};
use latblock::geometry::{lattice_sites, Region, Scheme, SubsampleSpec, Template};
use latblock::harness::{run_study, StudyConfig};
use latblock::scaling::{default_candidates, hj_scaling, npi_scaling, theoretical_scaling, ScalingPlan};
use latblock::{Error, Result};

/// Variance estimation for statistics of lattice random fields by spatial
/// subsampling.
#[derive(Parser, Debug)]
#[command(name = "latblock", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Shape constants K0, K1, |R0| and ARE; with --cov also B0 and tau^2.
    Constants(ConstantsArgs),
    /// Subsample variance estimate from a field CSV.
    Estimate(EstimateArgs),
    /// Optimal subsample scale by theory, NPI or HJ.
    Scale(ScaleArgs),
    /// Simulate one Gaussian field replicate to CSV.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study described by a TOML file.
    Study(StudyArgs),
}

#[derive(Args, Debug)]
struct ConstantsArgs {
    #[arg(long)]
    template: String,
    /// Use grid quadrature for K0 even when a closed form exists.
    #[arg(long)]
    numeric: bool,
    #[arg(long)]
    cov: Option<String>,
}

#[derive(Args, Debug)]
struct RegionArgs {
    /// Region template.
    #[arg(long)]
    template: String,
    /// Diagonal of the region scaling, e.g. `14,18`.
    #[arg(long = "region-scale", value_parser = parse_list)]
    region_scale: List,
    /// Lattice shift in [-1/2, 1/2]^d; zero by default.
    #[arg(long, value_parser = parse_list)]
    shift: Option<List>,
}

impl RegionArgs {
    fn region(&self) -> Result<Region> {
        let template: Template = self.template.parse()?;
        let shift = self.shift.clone().map_or_else(|| vec![0.0; template.dim()], |l| l.0);
        Region::new(template, self.region_scale.0.clone(), shift)
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    /// Subsample scale.
    #[arg(long)]
    scale: f64,
    #[arg(long, default_value = "mean")]
    stat: String,
    #[arg(long = "sub-template")]
    sub_template: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Ol,
    Nol,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Ol => Scheme::Ol,
            SchemeArg::Nol => Scheme::Nol,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleMethod {
    Theory,
    Npi,
    Hj,
}

#[derive(Args, Debug)]
struct ScaleArgs {
    #[arg(long, value_enum)]
    method: ScaleMethod,
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, value_enum, default_value = "ol")]
    scheme: SchemeArg,
    /// Bias constant (theory).
    #[arg(long)]
    b0: Option<f64>,
    /// Long-run variance (theory).
    #[arg(long)]
    tau2: Option<f64>,
    /// Covariogram supplying B0 and tau^2 (theory).
    #[arg(long)]
    cov: Option<String>,
    /// Field CSV (npi, hj).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "mean")]
    stat: String,
    #[arg(long, default_value_t = 0.5)]
    c1: f64,
    #[arg(long, default_value_t = 0.5)]
    c2: f64,
    #[arg(long = "lambda-m")]
    lambda_m: Option<f64>,
    /// Comma-separated candidate scales; default 2, ..., lambda_m - 1.
    #[arg(long, value_parser = parse_list)]
    candidates: Option<List>,
    /// Also write the plan as a two-column CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    cov: String,
    #[arg(long)]
    template: String,
    /// Diagonal of the region scaling, e.g. `14,18`.
    #[arg(long, value_parser = parse_list)]
    scale: List,
    #[arg(long, value_parser = parse_list)]
    shift: Option<List>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    #[arg(long, default_value = "auto")]
    method: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

/// Numbers separated by `,` or `x`.
#[derive(Clone, Debug)]
struct List(Vec<f64>);

fn parse_list(s: &str) -> std::result::Result<List, String> {
    s.split([',', 'x'])
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()
        .map(List)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Constants(a) => constants_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Scale(a) => scale_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Study(a) => study_cmd(a),
    }
}

fn constants_cmd(a: ConstantsArgs) -> Result<()> {
    let template: Template = a.template.parse()?;
    let shape = if a.numeric {
        constants::k0_numeric(&template, None)?
    } else {
        constants::k0(&template)?
    };
    println!("template={template}");
    println!("K0={}", shape.k0);
    println!("K1={}", shape.k1);
    println!("volume={}", shape.volume);
    println!("ARE={}", shape.k1.powf(2.0 / (template.dim() as f64 + 2.0)));
    println!("source={:?}", shape.source);
    if let Some(c) = a.cov {
        let cov: Covariogram = c.parse()?;
        let b0 = constants::b0_with(&template, &cov, DEFAULT_REL_TOL, true, WeightSource::Auto)?;
        println!("B0={b0}");
        println!("tau2={}", cov.tau_sq(DEFAULT_REL_TOL)?);
    }
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let region = a.region.region()?;
    let sample = FieldSample::read_csv(&a.data)?;
    let stat: SmoothStatistic = a.stat.parse()?;
    let sub: Template = match &a.sub_template {
        Some(s) => s.parse()?,
        None => region.template().clone(),
    };
    let spec = SubsampleSpec::new(sub, a.scale, a.scheme.into())?;
    let res = estimate(&sample, &region, &spec, stat)?;
    println!("tau_hat_sq={:.16e}", res.tau_hat_sq);
    println!("scheme={}", res.scheme);
    println!("subsamples={}", res.subsamples);
    let (lo, hi) = res
        .site_counts
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    println!("site_count_min={lo}");
    println!("site_count_max={hi}");
    println!("grand_mean={:.16e}", res.grand_mean);
    if !res.integer_scale {
        println!("warning=non-integer NOL scale");
    }
    Ok(())
}

fn need<T>(v: Option<T>, flag: &str, method: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required for --method {method}")))
}

fn scale_cmd(a: ScaleArgs) -> Result<()> {
    let region = a.region.region()?;
    let scheme: Scheme = a.scheme.into();
    let plan: ScalingPlan = match a.method {
        ScaleMethod::Theory => {
            let shape = constants::k0(region.template())?;
            let (b0, tau2) = match (&a.cov, a.b0, a.tau2) {
                (Some(c), None, None) => {
                    let cov: Covariogram = c.parse()?;
                    (
                        constants::b0(region.template(), &cov, DEFAULT_REL_TOL)?,
                        cov.tau_sq(DEFAULT_REL_TOL)?,
                    )
                }
                (None, Some(b0), Some(t)) => (b0, t),
                _ => {
                    return Err(Error::InvalidParameter(
                        "--method theory takes either --cov or both --b0 and --tau2".into(),
                    ))
                }
            };
            theoretical_scaling(region.dim(), region.det(), b0, tau2, &shape, scheme)?
        }
        ScaleMethod::Npi => {
            let sample = FieldSample::read_csv(&need(a.data, "data", "npi")?)?;
            npi_scaling(&sample, &region, a.stat.parse()?, a.c1, a.c2, scheme)?
        }
        ScaleMethod::Hj => {
            let sample = FieldSample::read_csv(&need(a.data, "data", "hj")?)?;
            let lambda_m = need(a.lambda_m, "lambda-m", "hj")?;
            let candidates = a.candidates.map_or_else(|| default_candidates(lambda_m), |l| l.0);
            hj_scaling(&sample, &region, a.stat.parse()?, lambda_m, &candidates, scheme)?
        }
    };
    let kv = plan.to_key_values();
    for (k, v) in &kv {
        println!("{k}={v}");
    }
    if let Some(path) = a.csv {
        write_key_values(&path, &kv)?;
    }
    Ok(())
}

fn write_key_values(path: &Path, kv: &[(String, String)]) -> Result<()> {
    let mut text = String::from("key,value\n");
    for (k, v) in kv {
        text.push_str(&format!("{k},{v}\n"));
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, text)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            Error::Io {
                context: format!("writing {}", path.display()),
                message: e.to_string(),
            }
        })
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let template: Template = a.template.parse()?;
    let shift = a.shift.map_or_else(|| vec![0.0; template.dim()], |l| l.0);
    let region = Region::new(template, a.scale.0, shift)?;
    let cov: Covariogram = a.cov.parse()?;
    let method: Method = a.method.parse()?;
    let window = lattice_sites(&region)?;
    let generator = build_generator(&cov, &window, method)?;
    let mut stream = substream(a.seed, a.replicate);
    let sample = sample_field(&generator, &mut stream);
    sample.write_csv(&a.out)?;
    println!("sites={}", window.len());
    println!("out={}", a.out.display());
    Ok(())
}

fn study_cmd(a: StudyArgs) -> Result<()> {
    let mut config = StudyConfig::from_path(&a.config)?;
    if a.seed.is_some() {
        config.seed = a.seed;
    }
    if a.threads.is_some() {
        config.threads = a.threads;
    }
    let study = config.validate()?;
    for path in run_study(&study)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
