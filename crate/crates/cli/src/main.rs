use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use emschwarz_cli::{
    emit, export_artifacts, run_experiment, CoarseChoice, ExperimentConfig, Format, LambdaFormula, RhoTemplate,
    RunParams,
};

/// Runs condition-number sweeps of the two-level Schwarz preconditioner on
/// the unit square.
#[derive(Parser, Debug)]
#[command(name = "emschwarz", version = emschwarz_cli::VERSION)]
struct Args {
    /// Subdomains per side.
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Fine squares per subdomain side.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Overlap layers: list `1,2,3`, inclusive range `1..5`, or empty.
    #[arg(long, default_value = "1..5", allow_hyphen_values = true)]
    d: String,
    /// Oversampling layers for `ms` (list or range).
    #[arg(long, default_value = "1")]
    k: String,
    /// Coarse space: none, galvis, ms, glb.
    #[arg(long, default_value = "ms")]
    coarse: CoarseChoice,
    /// Threshold Λ: auto, 1+log2(m), 1+ln(m+2d), 1+log10(m), or a number.
    #[arg(long, default_value = "auto")]
    lambda: LambdaFormula,
    /// Compare eigenvalues scaled by the patch size (`mesh`) or unscaled (`raw`).
    #[arg(long, default_value = "mesh")]
    eigen_scale: String,
    /// Coefficient: const:V or loguniform:LO:HI.
    #[arg(long, default_value = "const:1")]
    rho: RhoTemplate,
    /// Seeds for random coefficients (list or range).
    #[arg(long, default_value = "1..5")]
    seed: String,
    /// Constant source term.
    #[arg(long, default_value_t = 1.0)]
    f: f64,
    /// Relative tolerance on the preconditioned residual.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    maxit: usize,
    /// Output format: table, csv, json.
    #[arg(long, default_value = "table")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump coefficient, partition, spectra, basis and matrix files of
    /// the first run of the sweep into this directory.
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr + Copy + Into<u64> + TryFrom<u64>>(s: &str, what: &str) -> Result<Vec<T>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let num = |p: &str| p.trim().parse::<u64>().map_err(|e| format!("{what}: {p:?}: {e}"));
    let mut out = Vec::new();
    for part in s.split(',') {
        let values: Vec<u64> = match part.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
                if a > b {
                    return Err(format!("{what}: empty range {part:?}"));
                }
                (a..=b).collect()
            }
            None => vec![num(part)?],
        };
        for v in values {
            out.push(T::try_from(v).map_err(|_| format!("{what}: {v} out of range"))?);
        }
    }
    Ok(out)
}

fn config(args: &Args) -> Result<ExperimentConfig, String> {
    let normalize_eigenvalues = match args.eigen_scale.as_str() {
        "mesh" => true,
        "raw" => false,
        other => return Err(format!("--eigen-scale: unknown value {other:?} (mesh|raw)")),
    };
    let d_values: Vec<u64> = parse_list(&args.d, "--d")?;
    let k_values: Vec<u64> = parse_list(&args.k, "--k")?;
    Ok(ExperimentConfig {
        n: args.n,
        m: args.m,
        d_values: d_values.into_iter().map(|v| v as usize).collect(),
        k_values: k_values.into_iter().map(|v| v as usize).collect(),
        coarse: args.coarse,
        lambda: args.lambda,
        normalize_eigenvalues,
        rho: args.rho,
        seeds: parse_list(&args.seed, "--seed")?,
        f: args.f,
        tol: args.tol,
        maxit: args.maxit,
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("emschwarz: {e}");
            return ExitCode::from(1);
        }
    };

    if let (Some(dir), Some(&d)) = (&args.export_dir, cfg.d_values.first()) {
        let seed = if cfg.rho.is_random() { cfg.seeds.first().copied().unwrap_or(0) } else { 0 };
        let params = RunParams {
            n: cfg.n,
            m: cfg.m,
            d,
            k: cfg.k_values.first().copied().unwrap_or(0),
            coarse: cfg.coarse,
            lambda: cfg.lambda.value(cfg.m, d, cfg.coarse),
            normalize_eigenvalues: cfg.normalize_eigenvalues,
            rho: cfg.rho.spec(seed),
            f: cfg.f,
            tol: cfg.tol,
            maxit: cfg.maxit,
        };
        match export_artifacts(&params, dir) {
            Ok(files) => eprintln!("emschwarz: wrote {} to {}", files.join(", "), dir.display()),
            Err(e) => {
                eprintln!("emschwarz: export failed: {e}");
                return ExitCode::from(2);
            }
        }
    }

    let out = run_experiment(&cfg);
    let text = emit(&out, args.format);
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("emschwarz: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    let failed = out.failures();
    if failed > 0 {
        eprintln!("emschwarz: {failed} of {} runs failed", out.rows.len());
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
