//! `bifree`: batch front end over the bifree-core modules.
//!
//! Every command prints one report (JSON by default, CSV with
//! `--format csv`). Usage errors exit with 2, computation failures with 1
//! and a JSON error object.

mod model;
mod output;

use std::io::Read;
use std::process::ExitCode;

use bifree_core::bnc::{enumerate_bnc, mobius_bnc};
use bifree_core::conjvar::{
    circular_entropy_experiment, conj_residual, fisher_minimization_experiment,
    semicircular_entropy_experiment, solve_conjugate, ConjugateCandidate, EntropyExperiment,
    ExperimentReport, FisherExperiment, PresenceContext,
};
use bifree_core::moments::{
    bifree_test, cumulants_from_moments, moments_from_cumulants, BifreeOptions, PartitionTable,
    TableEntryJson,
};
use bifree_core::verify::{run_all, VerifyConfig};
use bifree_core::{
    BElementJson, BncPartition, ChiWord, MomentFunctional, Monomial, PartitionJson, Tolerance,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::model::{
    check_symbols, flatten, format_polynomial, load_cp_map, load_model, parse_polynomial,
};
use crate::output::{error_object, Format, Report};

#[derive(Debug, Parser)]
#[command(
    name = "bifree",
    version,
    about = "Bi-free probability with amalgamation over matrix algebras"
)]
struct Cli {
    #[command(flatten)]
    run: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunConfig {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed for randomized trials.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Absolute tolerance for numerical checks.
    #[arg(long, global = true, default_value_t = 1e-9, value_parser = parse_tolerance)]
    tolerance: f64,
    /// Matrix size of the base algebra for preset models.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=8))]
    d: u64,
    /// Largest word or partition size.
    #[arg(long, global = true, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..=8))]
    max_order: u64,
    /// Fock depth cap; omitted means exact.
    #[arg(long, global = true)]
    truncation: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bi-non-crossing partitions.
    #[command(subcommand)]
    Bnc(BncCmd),
    /// Moment and cumulant tables.
    #[command(subcommand)]
    Mc(McCmd),
    /// Mixed-cumulant test for bi-freeness.
    #[command(subcommand)]
    Bifree(BifreeCmd),
    /// Exact Fock space moments.
    #[command(subcommand)]
    Fock(FockCmd),
    /// Conjugate variable relations.
    #[command(subcommand)]
    Conj(ConjCmd),
    /// Fisher information experiments.
    #[command(subcommand)]
    Fisher(ExperimentCmd<FisherExp>),
    /// Entropy experiments.
    #[command(subcommand)]
    Entropy(ExperimentCmd<EntropyExp>),
    /// The acceptance suite.
    #[command(subcommand)]
    Verify(VerifyCmd),
}

#[derive(Debug, Subcommand)]
enum BncCmd {
    /// List BNC(χ).
    Enum {
        #[arg(long)]
        chi: ChiWord,
    },
    /// Möbius function μ(σ, π) on BNC(χ).
    Mobius {
        #[arg(long)]
        chi: ChiWord,
        /// Blocks as JSON, e.g. "[[1],[2]]".
        #[arg(long, value_parser = parse_blocks)]
        sigma: Blocks,
        #[arg(long, value_parser = parse_blocks)]
        pi: Blocks,
    },
}

type Blocks = Vec<Vec<usize>>;

#[derive(Debug, Subcommand)]
enum McCmd {
    /// Möbius-transform a full moment table into cumulants.
    ToCumulants {
        /// JSON array of table entries, or an `mc` report; `-` reads stdin.
        #[arg(long)]
        input: String,
    },
    /// Rebuild every E_π from a full cumulant table.
    ToMoments {
        #[arg(long)]
        input: String,
    },
}

#[derive(Debug, Subcommand)]
enum BifreeCmd {
    /// Check that mixed cumulants up to --max-order vanish.
    Test {
        /// Preset (semicircular, flip, circular) or model spec JSON path.
        #[arg(long, default_value = "semicircular")]
        model: String,
        /// Multiply operands by random coefficients on their own faces.
        #[arg(long)]
        decorate: bool,
    },
}

#[derive(Debug, Subcommand)]
enum FockCmd {
    /// E(word) in a Fock model.
    Moment {
        /// Space-separated generators, e.g. "S1 S1 D1 D1".
        #[arg(long)]
        word: String,
        #[arg(long, default_value = "semicircular")]
        model: String,
    },
}

#[derive(Debug, Subcommand)]
enum ConjCmd {
    /// Residual of a candidate conjugate variable, or a least-squares fit.
    Check {
        #[arg(long, default_value = "semicircular")]
        model: String,
        /// Generator whose conjugate variable is tested.
        #[arg(long)]
        target: String,
        /// Candidate polynomial, e.g. "0.5*S1 + 2*S2 S2 - 1".
        #[arg(long, required_unless_present = "solve")]
        xi: Option<String>,
        /// Comma-separated left generators present with the target.
        #[arg(long, value_delimiter = ',')]
        left: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        right: Vec<String>,
        /// identity, flip, or a CP map JSON path.
        #[arg(long, default_value = "identity")]
        eta: String,
        /// Longest test word.
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(0..=8))]
        max_n: u64,
        /// Fit a candidate instead of checking --xi.
        #[arg(long)]
        solve: bool,
        /// Longest basis word for --solve.
        #[arg(long, default_value_t = 3)]
        basis_len: usize,
    },
}

#[derive(Debug, Subcommand)]
enum ExperimentCmd<E: ValueEnum + Clone + Send + Sync + 'static> {
    /// Run a named experiment.
    Run {
        #[arg(long)]
        experiment: E,
        /// Scale of the circular pair (fisher) or variance (entropy).
        #[arg(long)]
        scale: Option<f64>,
        /// Upper limit of the entropy integral.
        #[arg(long, default_value_t = 1e5)]
        t_max: f64,
        /// Quadrature panels for the entropy integral.
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FisherExp {
    CircularMin,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EntropyExp {
    SemicircularMax,
    SemicircularStandard,
    CircularPair,
}

#[derive(Debug, Subcommand)]
enum VerifyCmd {
    /// Run all acceptance criteria; exits 1 if any fails.
    All {
        /// Include wall-clock times (makes output run-dependent).
        #[arg(long)]
        timings: bool,
    },
}

fn parse_tolerance(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    Tolerance::new(v)
        .map(|t| t.eps())
        .map_err(|e| e.to_string())
}

fn parse_blocks(s: &str) -> Result<Blocks, String> {
    serde_json::from_str(s).map_err(|e| format!("expected a JSON list of blocks: {e}"))
}

/// Failure of a command after its arguments parsed.
struct Failure {
    message: String,
    /// A report to print before exiting 1, used by `verify all`.
    report: Option<Report>,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            message: e.to_string(),
            report: None,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print!("{}", report.render(cli.run.format));
            ExitCode::SUCCESS
        }
        Err(Failure {
            report: Some(report),
            ..
        }) => {
            print!("{}", report.render(cli.run.format));
            ExitCode::from(1)
        }
        Err(Failure { message, .. }) => {
            print!("{}", error_object(&message));
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    let cfg = &cli.run;
    match &cli.command {
        Command::Bnc(BncCmd::Enum { chi }) => bnc_enum(chi),
        Command::Bnc(BncCmd::Mobius { chi, sigma, pi }) => bnc_mobius(chi, sigma, pi),
        Command::Mc(McCmd::ToCumulants { input }) => {
            let table = read_table(input)?;
            table_report("mc to-cumulants", &cumulants_from_moments(&table)?)
        }
        Command::Mc(McCmd::ToMoments { input }) => {
            let kappa = read_table(input)?;
            let mut out = PartitionTable::new(kappa.chi().clone());
            for pi in enumerate_bnc(kappa.chi())? {
                let v = moments_from_cumulants(&kappa, &pi)?;
                out.insert(&pi, v)?;
            }
            table_report("mc to-moments", &out)
        }
        Command::Bifree(BifreeCmd::Test { model, decorate }) => bifree(cfg, model, *decorate),
        Command::Fock(FockCmd::Moment { word, model }) => fock_moment(cfg, model, word),
        Command::Conj(ConjCmd::Check {
            model,
            target,
            xi,
            left,
            right,
            eta,
            max_n,
            solve,
            basis_len,
        }) => {
            let ctx = PresenceContext::new(&as_strs(left), &as_strs(right));
            conj_check(
                cfg,
                model,
                target,
                xi.as_deref(),
                &ctx,
                eta,
                *max_n as usize,
                solve.then_some(*basis_len),
            )
        }
        Command::Fisher(ExperimentCmd::Run {
            experiment, scale, ..
        }) => {
            let FisherExp::CircularMin = experiment;
            let exp = FisherExperiment {
                scale: scale.unwrap_or(1.0),
                tolerance: tolerance(cfg)?,
                ..FisherExperiment::default()
            };
            experiment_report("fisher run", fisher_minimization_experiment(&exp)?)
        }
        Command::Entropy(ExperimentCmd::Run {
            experiment,
            scale,
            t_max,
            steps,
        }) => {
            let mut exp = EntropyExperiment {
                t_max: *t_max,
                steps: *steps,
                tolerance: tolerance(cfg)?,
                ..EntropyExperiment::default()
            };
            let report = match experiment {
                EntropyExp::SemicircularMax => {
                    if let Some(v) = scale {
                        exp.variance = *v;
                    }
                    semicircular_entropy_experiment(&exp)?
                }
                EntropyExp::SemicircularStandard => {
                    exp.variance = 1.0;
                    semicircular_entropy_experiment(&exp)?
                }
                EntropyExp::CircularPair => circular_entropy_experiment(&exp)?,
            };
            experiment_report("entropy run", report)
        }
        Command::Verify(VerifyCmd::All { timings }) => verify_all(cfg, *timings),
    }
}

fn tolerance(cfg: &RunConfig) -> Result<Tolerance, Failure> {
    Ok(Tolerance::new(cfg.tolerance)?)
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter()
        .map(String::as_str)
        .filter(|s| !s.is_empty())
        .collect()
}

fn bnc_enum(chi: &ChiWord) -> Result<Report, Failure> {
    let parts = enumerate_bnc(chi)?;
    let json_parts: Vec<PartitionJson> = parts.iter().map(PartitionJson::from).collect();
    let mut r = Report::new("bnc enum", vec!["index", "blocks"]);
    for (i, p) in json_parts.iter().enumerate() {
        r.row(vec![i.to_string(), serde_json::to_string(&p.blocks)?]);
    }
    Ok(r.field("chi", chi.to_string())
        .field("count", parts.len())
        .field("partitions", serde_json::to_value(&json_parts)?))
}

fn bnc_mobius(chi: &ChiWord, sigma: &Blocks, pi: &Blocks) -> Result<Report, Failure> {
    let s = BncPartition::from_blocks(chi.clone(), sigma)?;
    let p = BncPartition::from_blocks(chi.clone(), pi)?;
    let mu = mobius_bnc(&s, &p)?;
    let mut r = Report::new("bnc mobius", vec!["chi", "sigma", "pi", "mobius"]);
    r.row(vec![
        chi.to_string(),
        serde_json::to_string(sigma)?,
        serde_json::to_string(pi)?,
        mu.to_string(),
    ]);
    Ok(r.field("chi", chi.to_string())
        .field("sigma", json!(sigma))
        .field("pi", json!(pi))
        .field("mobius", mu))
}

fn read_table(input: &str) -> Result<PartitionTable, Failure> {
    let text = if input == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(input).map_err(|e| format!("cannot read {input:?}: {e}"))?
    };
    // Either a bare array or a report from an earlier `mc` command.
    let mut value: Value = serde_json::from_str(&text).map_err(|e| format!("bad table: {e}"))?;
    if let Some(inner) = value.get_mut("entries") {
        value = inner.take();
    }
    let entries: Vec<TableEntryJson> =
        serde_json::from_value(value).map_err(|e| format!("bad table: {e}"))?;
    Ok(PartitionTable::from_json(&entries)?)
}

fn table_report(command: &'static str, table: &PartitionTable) -> Result<Report, Failure> {
    let entries = table.to_json()?;
    let mut r = Report::new(command, vec!["chi", "partition", "row", "col", "re", "im"]);
    for (pi, v) in table.entries()? {
        let blocks = serde_json::to_string(&pi.blocks())?;
        for (i, j, re, im) in flatten(&v) {
            r.row(vec![
                pi.chi().to_string(),
                blocks.clone(),
                i.to_string(),
                j.to_string(),
                re.to_string(),
                im.to_string(),
            ]);
        }
    }
    Ok(r.field("chi", table.chi().to_string())
        .field("entries", serde_json::to_value(entries)?))
}

fn model_for(cfg: &RunConfig, source: &str) -> Result<bifree_core::fock::FockModel, Failure> {
    let mut m = load_model(source, cfg.d as usize)?;
    if m.dim() > 8 {
        return Err(format!("model dimension {} exceeds 8", m.dim()).into());
    }
    m.set_truncation(cfg.truncation);
    Ok(m)
}

fn bifree(cfg: &RunConfig, source: &str, decorate: bool) -> Result<Report, Failure> {
    let m = model_for(cfg, source)?;
    let opts = BifreeOptions {
        tolerance: tolerance(cfg)?,
        decorate,
        seed: cfg.seed,
    };
    let rep = bifree_test(&m, cfg.max_order as usize, &opts)?;
    let mut r = Report::new("bifree test", vec!["word", "chi", "order", "norm"]);
    for e in &rep.entries {
        r.row(vec![
            e.word.join(" "),
            e.chi.clone(),
            e.order.to_string(),
            e.norm.to_string(),
        ]);
    }
    Ok(r.field("seed", cfg.seed)
        .field("model", source)
        .field("families", json!(rep.families))
        .field("max_order", rep.max_order)
        .field("tested", rep.tested)
        .field("max_residual", rep.max_residual)
        .field("pass", rep.pass)
        .field("worst", serde_json::to_value(&rep.worst)?))
}

fn fock_moment(cfg: &RunConfig, source: &str, word: &str) -> Result<Report, Failure> {
    let m = model_for(cfg, source)?;
    let w = Monomial::parse(word);
    check_symbols(&m, &w)?;
    let v = m.moment(&w)?;
    let mut r = Report::new("fock moment", vec!["row", "col", "re", "im"]);
    for (i, j, re, im) in flatten(&v) {
        r.row(vec![
            i.to_string(),
            j.to_string(),
            re.to_string(),
            im.to_string(),
        ]);
    }
    Ok(r.field("model", source)
        .field("word", w.to_string())
        .field("value", serde_json::to_value(BElementJson::from(&v))?))
}

#[allow(clippy::too_many_arguments)]
fn conj_check(
    cfg: &RunConfig,
    source: &str,
    target: &str,
    xi: Option<&str>,
    ctx: &PresenceContext,
    eta: &str,
    max_n: usize,
    solve_basis: Option<usize>,
) -> Result<Report, Failure> {
    let m = model_for(cfg, source)?;
    let side = m.lookup(target)?.side;
    let eta_map = load_cp_map(eta, m.dim())?;
    let (cand, residual, solved) = match solve_basis {
        Some(len) => {
            let (c, res) = solve_conjugate(&m, target, side, &eta_map, ctx, len, max_n)?;
            (c, res, true)
        }
        None => {
            let p = parse_polynomial(xi.expect("clap requires --xi without --solve"))?;
            for (_, w) in p.terms() {
                check_symbols(&m, w)?;
            }
            let c = ConjugateCandidate::new(target, side, p);
            let res = conj_residual(&m, &c, &eta_map, ctx, max_n)?;
            (c, res, false)
        }
    };
    let pass = tolerance(cfg)?.accepts(residual);
    let poly = format_polynomial(&cand.vector);
    let mut r = Report::new(
        "conj check",
        vec!["target", "candidate", "max_n", "residual", "pass"],
    );
    r.row(vec![
        target.to_string(),
        poly.clone(),
        max_n.to_string(),
        residual.to_string(),
        pass.to_string(),
    ]);
    Ok(r.field("model", source)
        .field("target", target)
        .field("side", side.as_char().to_string())
        .field("candidate", poly)
        .field("solved", solved)
        .field("max_n", max_n)
        .field("residual", residual)
        .field("pass", pass))
}

fn experiment_report(command: &'static str, rep: ExperimentReport) -> Result<Report, Failure> {
    let value = serde_json::to_value(&rep)?;
    let mut r = Report::new(command, vec!["key", "value"]);
    if let Value::Object(map) = &value {
        for (k, v) in map {
            r.row(vec![k.clone(), v.to_string().trim_matches('"').to_string()]);
        }
    }
    let pass = rep.pass;
    let mut r = match value {
        Value::Object(map) => {
            r.body = map;
            r
        }
        _ => r,
    };
    r.body.insert("pass".into(), json!(pass));
    Ok(r)
}

fn verify_all(cfg: &RunConfig, timings: bool) -> Result<Report, Failure> {
    let vc = VerifyConfig {
        seed: cfg.seed,
        tolerance: tolerance(cfg)?,
        ..VerifyConfig::default()
    };
    let results = run_all(&vc);
    let all_pass = results.iter().all(|c| c.pass);
    let mut header = vec!["id", "name", "pass", "detail"];
    if timings {
        header.push("seconds");
    }
    let mut r = Report::new("verify all", header);
    let mut items = Vec::new();
    for c in &results {
        eprintln!("{c}");
        let mut row = vec![
            c.id.to_string(),
            c.name.clone(),
            c.pass.to_string(),
            c.detail.clone(),
        ];
        let mut item = json!({ "id": c.id, "name": c.name, "pass": c.pass, "detail": c.detail });
        if timings {
            row.push(format!("{:.3}", c.seconds));
            item["seconds"] = json!(c.seconds);
        }
        r.row(row);
        items.push(item);
    }
    let r = r
        .field("seed", cfg.seed)
        .field("all_pass", all_pass)
        .field("criteria", Value::Array(items));
    if all_pass {
        Ok(r)
    } else {
        Err(Failure {
            message: "acceptance criteria failed".into(),
            report: Some(r),
        })
    }
}
