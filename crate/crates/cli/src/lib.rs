//! Experiment driver: parameter sweeps over the preconditioner pipeline and
//! their table / CSV / JSON reports.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use emschwarz_core::coarse::{build_coarse_space, CoarseKind, CoarseSpace, EnergyForms};
use emschwarz_core::fem::{assemble_constant_load, assemble_stiffness, DofMap};
use emschwarz_core::krylov::{pcg, PcgOptions, SolveReport};
use emschwarz_core::mesh::{build_mesh, sample_coefficient, CoefficientField, CoefficientSpec, Mesh};
use emschwarz_core::partition::{build_partition, build_pou, DomainPartition, PartitionOfUnity};
use emschwarz_core::precond::build_preconditioner;
use emschwarz_core::sparse::SparseSymMatrix;
use emschwarz_core::spectral::{
    build_aux_space, galvis_from_spectra, solve_galvis_spectra, spectra_to_csv, AuxSpace, Threshold,
};
use emschwarz_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const VERSION: &str = concat!("emschwarz ", env!("CARGO_PKG_VERSION"), " (", env!("EMSCHWARZ_GIT_DESCRIBE"), ")");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseChoice {
    None,
    Galvis,
    Ms,
    Glb,
}

impl FromStr for CoarseChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "galvis" => Ok(Self::Galvis),
            "ms" => Ok(Self::Ms),
            "glb" => Ok(Self::Glb),
            _ => Err(format!("unknown coarse space {s:?} (none|galvis|ms|glb)")),
        }
    }
}

impl fmt::Display for CoarseChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Galvis => "galvis",
            Self::Ms => "ms",
            Self::Glb => "glb",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    Two,
    E,
    Ten,
}

impl LogBase {
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Two => x.log2(),
            Self::E => x.ln(),
            Self::Ten => x.log10(),
        }
    }
    fn name(self) -> &'static str {
        match self {
            Self::Two => "log2",
            Self::E => "ln",
            Self::Ten => "log10",
        }
    }
}

/// Which patch size enters Λ = 1 + log(·).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaArg {
    M,
    MPlus2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "snake_case")]
pub enum LambdaFormula {
    /// `1+log2(m+2d)` for the baseline, `1+log2(m)` otherwise.
    Auto,
    OnePlusLog { base: LogBase, arg: LambdaArg },
    Explicit { value: f64 },
}

impl LambdaFormula {
    pub fn value(&self, m: usize, d: usize, coarse: CoarseChoice) -> f64 {
        let eval = |base: LogBase, arg: LambdaArg| {
            let x = match arg {
                LambdaArg::M => m,
                LambdaArg::MPlus2d => m + 2 * d,
            };
            1.0 + base.apply(x as f64)
        };
        match *self {
            Self::Auto => match coarse {
                CoarseChoice::Galvis => eval(LogBase::Two, LambdaArg::MPlus2d),
                _ => eval(LogBase::Two, LambdaArg::M),
            },
            Self::OnePlusLog { base, arg } => eval(base, arg),
            Self::Explicit { value } => value,
        }
    }
}

impl FromStr for LambdaFormula {
    type Err = String;
    /// `auto`, a number, or `1+log2(m)`, `1+ln(m+2d)`, `1+log10(m)`, …
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t == "auto" {
            return Ok(Self::Auto);
        }
        if let Ok(value) = t.parse::<f64>() {
            return if value > 0.0 { Ok(Self::Explicit { value }) } else { Err(format!("Λ must be positive, got {value}")) };
        }
        let body = t
            .strip_prefix("1+")
            .ok_or_else(|| format!("unrecognised Λ formula {s:?}"))?;
        for base in [LogBase::Two, LogBase::E, LogBase::Ten] {
            for (arg, a) in [(LambdaArg::M, "m"), (LambdaArg::MPlus2d, "m+2d")] {
                if body == format!("{}({a})", base.name()) {
                    return Ok(Self::OnePlusLog { base, arg });
                }
            }
        }
        Err(format!("unrecognised Λ formula {s:?}; try 1+log2(m), 1+ln(m+2d), 1+log10(m), auto or a number"))
    }
}

impl fmt::Display for LambdaFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::OnePlusLog { base, arg } => {
                let a = match arg {
                    LambdaArg::M => "m",
                    LambdaArg::MPlus2d => "m+2d",
                };
                write!(f, "1+{}({a})", base.name())
            }
            Self::Explicit { value } => write!(f, "{value}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhoTemplate {
    Const { value: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl RhoTemplate {
    pub fn is_random(&self) -> bool {
        matches!(self, Self::LogUniform { .. })
    }

    pub fn spec(&self, seed: u64) -> CoefficientSpec {
        match *self {
            Self::Const { value } => CoefficientSpec::Constant { value },
            Self::LogUniform { lo, hi } => CoefficientSpec::LogUniform { lo, hi, seed },
        }
    }
}

impl FromStr for RhoTemplate {
    type Err = String;
    /// `const:1` or `loguniform:1:1e6`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"));
        match parts.as_slice() {
            ["const", v] => Ok(Self::Const { value: num(v)? }),
            ["loguniform", lo, hi] => Ok(Self::LogUniform { lo: num(lo)?, hi: num(hi)? }),
            _ => Err(format!("unrecognised coefficient {s:?}; use const:V or loguniform:LO:HI")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format {s:?} (table|csv|json)")),
        }
    }
}

/// A sweep: every combination of `d_values × k_values × seeds` is one row
/// (`k` only matters for `ms`, seeds only for random coefficients).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub d_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub coarse: CoarseChoice,
    pub lambda: LambdaFormula,
    /// Scale pencil eigenvalues by H_e/h before comparing with Λ.
    pub normalize_eigenvalues: bool,
    pub rho: RhoTemplate,
    pub seeds: Vec<u64>,
    pub f: f64,
    pub tol: f64,
    pub maxit: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 6,
            m: 10,
            d_values: vec![1, 2, 3, 4, 5],
            k_values: vec![1],
            coarse: CoarseChoice::Ms,
            lambda: LambdaFormula::Auto,
            normalize_eigenvalues: true,
            rho: RhoTemplate::Const { value: 1.0 },
            seeds: vec![1, 2, 3, 4, 5],
            f: 1.0,
            tol: 1e-6,
            maxit: 1000,
        }
    }
}

/// Parameters of a single pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunParams {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub coarse: CoarseChoice,
    pub lambda: f64,
    pub normalize_eigenvalues: bool,
    pub rho: CoefficientSpec,
    pub f: f64,
    pub tol: f64,
    pub maxit: usize,
}

impl RunParams {
    /// Default threshold, tolerance and source for the given space.
    pub fn standard(n: usize, m: usize, d: usize, k: usize, coarse: CoarseChoice, rho: CoefficientSpec) -> Self {
        Self {
            n,
            m,
            d,
            k,
            coarse,
            lambda: LambdaFormula::Auto.value(m, d, coarse),
            normalize_eigenvalues: true,
            rho,
            f: 1.0,
            tol: 1e-6,
            maxit: 1000,
        }
    }

    pub fn threshold(&self) -> Threshold {
        Threshold { lambda: self.lambda, normalize: self.normalize_eigenvalues }
    }
}

/// Mesh, coefficient, partition and stiffness for one run.
pub struct Problem {
    pub mesh: Mesh,
    pub rho: CoefficientField,
    pub part: DomainPartition,
    pub pou: PartitionOfUnity,
    pub dofs: DofMap,
    pub stiffness: SparseSymMatrix,
}

impl Problem {
    pub fn build(n: usize, m: usize, d: usize, rho: &CoefficientSpec) -> Result<Self> {
        let mesh = build_mesh(n, m)?;
        let rho = sample_coefficient(&mesh, rho)?;
        let part = build_partition(&mesh, d)?;
        let pou = build_pou(&mesh, &part)?;
        let dofs = DofMap::new(&mesh);
        let stiffness = assemble_stiffness(&mesh, &rho)?;
        Ok(Self { mesh, rho, part, pou, dofs, stiffness })
    }

    pub fn aux(&self, threshold: Threshold) -> Result<AuxSpace> {
        build_aux_space(&self.mesh, &self.rho, &self.part, &self.pou, threshold)
    }

    pub fn forms<'a>(&'a self, aux: &'a AuxSpace) -> EnergyForms<'a> {
        EnergyForms::new(&self.mesh, &self.rho, &self.part, &self.dofs, &self.stiffness, aux)
    }

    pub fn coarse(&self, params: &RunParams) -> Result<Option<CoarseSpace>> {
        let t = params.threshold();
        Ok(match params.coarse {
            CoarseChoice::None => None,
            CoarseChoice::Galvis => {
                let spectra = solve_galvis_spectra(&self.mesh, &self.rho, &self.part, &self.pou, t)?;
                Some(galvis_from_spectra(&self.pou, &self.dofs, &spectra))
            }
            CoarseChoice::Ms | CoarseChoice::Glb => {
                let aux = self.aux(t)?;
                let kind = if params.coarse == CoarseChoice::Glb { CoarseKind::Glb } else { CoarseKind::Ms { k: params.k } };
                Some(build_coarse_space(kind, &self.forms(&aux))?)
            }
        })
    }
}

pub fn check_params(p: &RunParams) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidArgument(m));
    if p.n == 0 || p.m == 0 {
        return bad(format!("n and m must be positive (n={}, m={})", p.n, p.m));
    }
    if p.d >= p.m {
        return bad(format!("overlap d={} must be smaller than m={}", p.d, p.m));
    }
    if p.coarse == CoarseChoice::Ms && p.k > p.n {
        return bad(format!("oversampling k={} exceeds n={}", p.k, p.n));
    }
    if !(p.tol > 0.0 && p.tol < 1.0) {
        return bad(format!("tol must lie in (0, 1), got {}", p.tol));
    }
    if !(p.lambda > 0.0) {
        return bad(format!("Λ must be positive, got {}", p.lambda));
    }
    Ok(())
}

/// Runs mesh → ρ → partition → PoU → coarse space → preconditioner → PCG.
pub fn run_single(params: &RunParams) -> Result<SolveReport> {
    check_params(params)?;
    let prob = Problem::build(params.n, params.m, params.d, &params.rho)?;
    let coarse = prob.coarse(params)?;
    let pd = coarse.as_ref().map(|c| c.pd());
    let precond = build_preconditioner(&prob.stiffness, &prob.mesh, &prob.part, coarse)?;
    let b = assemble_constant_load(&prob.mesh, params.f)?;
    let report = pcg(&prob.stiffness, &precond, &b, PcgOptions { tol: params.tol, maxit: params.maxit })?;
    Ok(match pd {
        Some(pd) => report.with_pd(pd),
        None => report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub coarse: CoarseChoice,
    pub lambda: f64,
    pub iter: Option<usize>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(rename = "pD")]
    pub pd: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self { mean, min, max })
    }
}

/// Aggregate over the seeds of one `(d, k)` point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub d: usize,
    pub k: Option<usize>,
    pub runs: usize,
    pub iter: Option<Stat>,
    pub lambda_min: Option<Stat>,
    pub lambda_max: Option<Stat>,
    pub kappa: Option<Stat>,
    #[serde(rename = "pD")]
    pub pd: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<RunRow>,
    pub summaries: Vec<SummaryRow>,
}

impl ExperimentOutput {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

fn sweep(config: &ExperimentConfig) -> Vec<(usize, Option<usize>, Option<u64>)> {
    let ks: Vec<Option<usize>> =
        if config.coarse == CoarseChoice::Ms { config.k_values.iter().map(|&k| Some(k)).collect() } else { vec![None] };
    let seeds: Vec<Option<u64>> =
        if config.rho.is_random() { config.seeds.iter().map(|&s| Some(s)).collect() } else { vec![None] };
    let mut out = Vec::new();
    for &d in &config.d_values {
        for &k in &ks {
            for &s in &seeds {
                out.push((d, k, s));
            }
        }
    }
    out
}

pub fn run_experiment(config: &ExperimentConfig) -> ExperimentOutput {
    let mut rows = Vec::new();
    for (d, k, seed) in sweep(config) {
        let lambda = config.lambda.value(config.m, d, config.coarse);
        let params = RunParams {
            n: config.n,
            m: config.m,
            d,
            k: k.unwrap_or(0),
            coarse: config.coarse,
            lambda,
            normalize_eigenvalues: config.normalize_eigenvalues,
            rho: config.rho.spec(seed.unwrap_or(0)),
            f: config.f,
            tol: config.tol,
            maxit: config.maxit,
        };
        let mut row = RunRow {
            n: config.n,
            m: config.m,
            d,
            k,
            seed,
            coarse: config.coarse,
            lambda,
            iter: None,
            lambda_min: None,
            lambda_max: None,
            kappa: None,
            pd: None,
            converged: None,
            error: None,
        };
        match run_single(&params) {
            Ok(rep) => {
                row.iter = Some(rep.iterations);
                row.lambda_min = rep.lambda_min;
                row.lambda_max = rep.lambda_max;
                row.kappa = rep.kappa;
                row.pd = rep.pd;
                row.converged = Some(rep.converged);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    let summaries = if config.rho.is_random() && config.seeds.len() > 1 { summarize(&rows) } else { Vec::new() };
    ExperimentOutput { version: VERSION.to_string(), config: config.clone(), rows, summaries }
}

fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, Option<usize>)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.d, r.k)) {
            keys.push((r.d, r.k));
        }
    }
    keys.into_iter()
        .map(|(d, k)| {
            let group: Vec<&RunRow> = rows.iter().filter(|r| r.d == d && r.k == k && r.error.is_none()).collect();
            let col = |f: &dyn Fn(&RunRow) -> Option<f64>| Stat::of(&group.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                d,
                k,
                runs: group.len(),
                iter: col(&|r| r.iter.map(|v| v as f64)),
                lambda_min: col(&|r| r.lambda_min),
                lambda_max: col(&|r| r.lambda_max),
                kappa: col(&|r| r.kappa),
                pd: col(&|r| r.pd),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

fn table(out: &ExperimentOutput) -> String {
    let has_k = out.rows.iter().any(|r| r.k.is_some());
    let has_seed = out.rows.iter().any(|r| r.seed.is_some());
    let mut header = vec!["n(m)", "d"];
    if has_k {
        header.push("k");
    }
    if has_seed {
        header.push("seed");
    }
    header.extend(["iter", "λmin", "λmax", "κ", "pD"]);

    let mut lines: Vec<Vec<String>> = Vec::new();
    for r in &out.rows {
        let mut l = vec![format!("{}({})", r.n, r.m), r.d.to_string()];
        if has_k {
            l.push(r.k.map_or("-".into(), |k| k.to_string()));
        }
        if has_seed {
            l.push(r.seed.map_or("-".into(), |s| s.to_string()));
        }
        if let Some(e) = &r.error {
            l.push(format!("error: {e}"));
        } else {
            let it = r.iter.map_or("-".into(), |i| i.to_string());
            l.push(if r.converged == Some(false) { format!("{it}*") } else { it });
            l.extend([cell(r.lambda_min), cell(r.lambda_max), cell(r.kappa), cell(r.pd)]);
        }
        lines.push(l);
    }
    for s in &out.summaries {
        for (label, pick) in [("mean", 0), ("min", 1), ("max", 2)] {
            let get = |st: Option<Stat>| st.map(|x| [x.mean, x.min, x.max][pick]);
            let mut l = vec![label.to_string(), s.d.to_string()];
            if has_k {
                l.push(s.k.map_or("-".into(), |k| k.to_string()));
            }
            if has_seed {
                l.push(format!("{} runs", s.runs));
            }
            l.extend([cell(get(s.iter)), cell(get(s.lambda_min)), cell(get(s.lambda_max)), cell(get(s.kappa)), cell(get(s.pd))]);
            lines.push(l);
        }
    }

    let ncol = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for l in &lines {
        for (c, v) in l.iter().enumerate().take(ncol) {
            width[c] = width[c].max(v.chars().count());
        }
    }
    let fmt_line = |cells: Vec<String>| {
        let mut s = String::new();
        for (c, v) in cells.iter().enumerate() {
            if c > 0 {
                s.push_str("  ");
            }
            let w = width.get(c).copied().unwrap_or(0);
            s.push_str(&format!("{v:>w$}"));
        }
        s.trim_end().to_string()
    };
    let mut text = fmt_line(header.iter().map(|h| h.to_string()).collect());
    text.push('\n');
    for l in lines {
        text.push_str(&fmt_line(l));
        text.push('\n');
    }
    text
}

pub fn emit(out: &ExperimentOutput, format: Format) -> String {
    match format {
        Format::Table => table(out),
        Format::Json => serde_json::to_string_pretty(out).expect("report serializes") + "\n",
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
            for r in &out.rows {
                w.serialize(r).expect("row serializes");
            }
            let body = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8");
            format!("# {}\n# config: {}\n{body}", out.version, serde_json::to_string(&out.config).expect("config serializes"))
        }
    }
}

/// Reads the rows back from [`emit`]'s CSV output.
pub fn parse_csv_rows(text: &str) -> Result<Vec<RunRow>> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    rd.deserialize().map(|r| r.map_err(|e| Error::Parse(e.to_string()))).collect()
}

/// Writes the coefficient field, partition summary, spectra, coarse basis
/// and stiffness matrix of one run into `dir`.
pub fn export_artifacts(params: &RunParams, dir: &Path) -> Result<Vec<String>> {
    check_params(params)?;
    let io = |e: std::io::Error| Error::InvalidArgument(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let prob = Problem::build(params.n, params.m, params.d, &params.rho)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        std::fs::write(dir.join(name), text).map_err(io)?;
        written.push(name.to_string());
        Ok(())
    };
    put("coefficient.csv", prob.rho.to_csv(&prob.mesh))?;
    put("partition.json", prob.part.summary(&prob.mesh).to_json())?;
    put("stiffness.mtx", prob.stiffness.to_matrix_market())?;
    let t = params.threshold();
    match params.coarse {
        CoarseChoice::None => {}
        CoarseChoice::Galvis => {
            let spectra = solve_galvis_spectra(&prob.mesh, &prob.rho, &prob.part, &prob.pou, t)?;
            put("spectra.csv", spectra_to_csv(&spectra))?;
            put("coarse_basis.csv", galvis_from_spectra(&prob.pou, &prob.dofs, &spectra).to_csv(&prob.mesh, &prob.dofs))?;
        }
        CoarseChoice::Ms | CoarseChoice::Glb => {
            let aux = prob.aux(t)?;
            put("spectra.csv", spectra_to_csv(&aux.spectra))?;
            let kind = if params.coarse == CoarseChoice::Glb { CoarseKind::Glb } else { CoarseKind::Ms { k: params.k } };
            let cs = build_coarse_space(kind, &prob.forms(&aux))?;
            put("coarse_basis.csv", cs.to_csv(&prob.mesh, &prob.dofs))?;
        }
    }
    Ok(written)
}
