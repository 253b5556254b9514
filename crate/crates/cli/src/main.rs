mod parse;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use deformed_xi::funceq::{
    candidate_zeros, seeded_params, verify_with, zero_family_value, IdentityId, VerificationReport, VerifyParams,
    ZeroFamily,
};
use deformed_xi::gaussmat::RhoMatrix;
use deformed_xi::multi::{MultiXi, Variant};
use deformed_xi::ode;
use deformed_xi::quadrature::QuadSpec;
use deformed_xi::xi::{XiValue, Xi1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const DEFAULT_ABS_TOL: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "xi", version, about = "Evaluate Gaussian-deformed Xi functions and check their functional equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format; defaults to json for eval/verify/decompose and csv for zeros/grid.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Pass/fail tolerance for verify and zeros.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Absolute quadrature tolerance for one-dimensional integrals; other levels scale alike.
    /// Overrides XI_QUAD_TOL.
    #[arg(long, global = true)]
    quad_tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one family member.
    Eval {
        #[arg(long, value_enum, default_value = "xi")]
        family: Family,
        #[command(flatten)]
        rho: RhoArgs,
        /// Comma-separated complex arguments, e.g. "0.5+8πi" or "1,2".
        #[arg(long, allow_hyphen_values = true)]
        s: String,
        /// Order for xi_m.
        #[arg(long, default_value_t = 0)]
        m: u32,
    },
    /// Check one functional equation by quadrature.
    Verify {
        /// Identity name, e.g. telescope, fun1, result3d.
        id: String,
        #[command(flatten)]
        rho: RhoArgs,
        #[arg(long, allow_hyphen_values = true)]
        s: Option<String>,
        /// m for telescope.
        #[arg(long)]
        m: Option<usize>,
        /// k for sk_flip.
        #[arg(long)]
        k: Option<usize>,
        /// Extra parameters, e.g. --param gamma=0.3.
        #[arg(long = "param", allow_hyphen_values = true)]
        params: Vec<String>,
        /// Draw predicate-satisfying parameters from this seed instead.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List closed-form roots and confirm them by quadrature.
    Zeros {
        #[command(flatten)]
        rho: RhoArgs,
        #[arg(long, value_enum, default_value = "telescope")]
        family: ZeroKind,
        #[arg(long, default_value_t = 0)]
        m: u32,
        /// Number of k values, starting at k = 0.
        #[arg(long, default_value_t = 3)]
        count: usize,
    },
    /// Split e^{(−s²+s)/16ρ}Ξ_ρ(s) into sinh, cosh and integral parts.
    Decompose {
        #[arg(long, allow_hyphen_values = true)]
        rho: String,
        #[arg(long, allow_hyphen_values = true)]
        s: String,
    },
    /// Values over a rectangle of s.
    Grid {
        #[arg(long, allow_hyphen_values = true)]
        rho: String,
        #[arg(long, value_enum, default_value = "xi")]
        family: Family,
        /// lo:hi:n for Re s.
        #[arg(long, allow_hyphen_values = true)]
        re: String,
        /// lo:hi:n for Im s.
        #[arg(long, allow_hyphen_values = true)]
        im: String,
    },
}

#[derive(Args, Debug)]
struct RhoArgs {
    /// Scalar ρ.
    #[arg(long, conflicts_with = "rho_matrix", allow_hyphen_values = true)]
    rho: Option<String>,
    /// Matrix ρ, rows separated by ';', e.g. "1,0.2;0.2,1".
    #[arg(long, allow_hyphen_values = true)]
    rho_matrix: Option<String>,
}

impl RhoArgs {
    fn get(&self) -> Result<Option<RhoMatrix>> {
        Ok(match (&self.rho, &self.rho_matrix) {
            (Some(r), _) => Some(RhoMatrix::scalar(parse::complex(r)?)),
            (None, Some(m)) => Some(parse::rho_matrix(m)?),
            (None, None) => None,
        })
    }

    fn require(&self) -> Result<RhoMatrix> {
        self.get()?.context("--rho or --rho-matrix is required")
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Family {
    #[value(name = "xi")]
    Xi,
    #[value(name = "xi_tilde")]
    XiTilde,
    #[value(name = "xi_m")]
    XiM,
    #[value(name = "xi_d")]
    XiD,
    #[value(name = "jensen")]
    Jensen,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ZeroKind {
    Telescope,
    Tilde,
    Funcor1,
    Funcor2,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub family: String,
    pub rho: Vec<Vec<Complex64>>,
    pub s: Vec<Complex64>,
    pub m: u32,
    pub value: Complex64,
    pub quad_error: f64,
    pub evaluations: usize,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRecord {
    pub k: i64,
    pub branch: i8,
    pub s: Complex64,
    pub closed_form_residual: f64,
    pub quad_residual: f64,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeRecord {
    pub rho: Complex64,
    pub s: Complex64,
    pub sinh_coeff: Complex64,
    pub cosh_coeff: Complex64,
    pub integral_part: Complex64,
    pub total: Complex64,
    pub direct: Complex64,
    pub a_plus: Complex64,
    pub a_minus: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub s: Complex64,
    pub value: Complex64,
    pub quad_error: f64,
}

/// Full round-trip precision.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

struct Ctx {
    format: Option<Format>,
    output: Option<PathBuf>,
    tol: Option<f64>,
    quad_scale: f64,
}

impl Ctx {
    fn spec(&self, d: usize) -> QuadSpec {
        QuadSpec::for_dim(d).scaled(self.quad_scale)
    }

    fn emit(&self, text: String) -> Result<()> {
        let text = if text.ends_with('\n') { text } else { text + "\n" };
        match &self.output {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, v: &T) -> Result<String> {
        Ok(serde_json::to_string_pretty(v)?)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(t) = cli.tol {
        if !(t > 0.0) || !t.is_finite() {
            bail!("--tol must be positive and finite");
        }
    }
    let quad_tol = match cli.quad_tol {
        Some(t) => Some(t),
        None => match std::env::var("XI_QUAD_TOL") {
            Ok(v) => Some(v.trim().parse::<f64>().context("XI_QUAD_TOL is not a number")?),
            Err(_) => None,
        },
    };
    let quad_scale = match quad_tol {
        Some(t) if t > 0.0 && t.is_finite() => t / DEFAULT_ABS_TOL,
        Some(_) => bail!("quadrature tolerance must be positive and finite"),
        None => 1.0,
    };
    let ctx = Ctx {
        format: cli.format,
        output: cli.output,
        tol: cli.tol,
        quad_scale,
    };
    match cli.command {
        Command::Eval { family, rho, s, m } => cmd_eval(&ctx, family, rho.require()?, parse::complex_list(&s)?, m),
        Command::Verify {
            id,
            rho,
            s,
            m,
            k,
            params,
            seed,
        } => {
            let id = IdentityId::parse(&id, m.or(k).unwrap_or(0))?;
            let p = match seed {
                Some(seed) => seeded_params(id, seed),
                None => {
                    let rho = rho.require()?;
                    let s = parse::complex_list(s.as_deref().context("--s is required without --seed")?)?;
                    let mut p = VerifyParams::new(rho, s);
                    for kv in &params {
                        let (k, v) = parse::key_value(kv)?;
                        p = p.with(&k, v);
                    }
                    p
                }
            };
            cmd_verify(&ctx, id, &p)
        }
        Command::Zeros { rho, family, m, count } => cmd_zeros(&ctx, rho.require()?, family, m, count),
        Command::Decompose { rho, s } => cmd_decompose(&ctx, parse::complex(&rho)?, parse::complex(&s)?),
        Command::Grid { rho, family, re, im } => {
            cmd_grid(&ctx, parse::complex(&rho)?, family, parse::range(&re)?, parse::range(&im)?)
        }
    }
}

fn scalar_rho(rho: &RhoMatrix, what: &str) -> Result<Complex64> {
    if rho.dim() != 1 {
        bail!("{what} needs a scalar ρ");
    }
    Ok(rho.get(0, 0))
}

fn one_s(s: &[Complex64], what: &str) -> Result<Complex64> {
    match s {
        [x] => Ok(*x),
        _ => bail!("{what} takes a single s, got {}", s.len()),
    }
}

fn eval_value(ctx: &Ctx, family: Family, rho: &RhoMatrix, s: &[Complex64], m: u32) -> Result<XiValue> {
    Ok(match family {
        Family::Xi | Family::XiTilde | Family::XiM => {
            let x = Xi1::with_spec(scalar_rho(rho, "this family")?, ctx.spec(1))?;
            let s = one_s(s, "this family")?;
            match family {
                Family::Xi => x.value(s)?,
                Family::XiTilde => x.tilde(s)?,
                _ => x.sum_m(s, m)?,
            }
        }
        Family::XiD | Family::Jensen => {
            let d = rho.dim();
            if s.len() != d {
                bail!("ρ is {d}×{d} but {} arguments were given", s.len());
            }
            let variant = if family == Family::Jensen { Variant::Jensen } else { Variant::Theta };
            MultiXi::with_spec(variant, d, ctx.spec(d))?.eval(rho, s)?
        }
    })
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Xi => "xi",
        Family::XiTilde => "xi_tilde",
        Family::XiM => "xi_m",
        Family::XiD => "xi_d",
        Family::Jensen => "jensen",
    }
}

fn cmd_eval(ctx: &Ctx, family: Family, rho: RhoMatrix, s: Vec<Complex64>, m: u32) -> Result<u8> {
    let v = eval_value(ctx, family, &rho, &s, m)?;
    let rec = EvalRecord {
        family: family_name(family).into(),
        rho: rho.rows(),
        s,
        m,
        value: v.value,
        quad_error: v.quad_error,
        evaluations: v.evaluations,
        condition: v.condition,
    };
    let text = match ctx.format.unwrap_or(Format::Json) {
        Format::Json => ctx.json(&rec)?,
        Format::Csv => csv_text(
            &["family", "value_re", "value_im", "quad_error", "evaluations", "condition"],
            vec![vec![
                rec.family.clone(),
                num(rec.value.re),
                num(rec.value.im),
                num(rec.quad_error),
                rec.evaluations.to_string(),
                num(rec.condition),
            ]],
        )?,
    };
    ctx.emit(text)?;
    Ok(0)
}

fn cmd_verify(ctx: &Ctx, id: IdentityId, p: &VerifyParams) -> Result<u8> {
    let r: VerificationReport = verify_with(id, p, ctx.tol, Some(ctx.quad_scale))?;
    let text = match ctx.format.unwrap_or(Format::Json) {
        Format::Json => ctx.json(&r)?,
        Format::Csv => format!("{}\n{}", VerificationReport::CSV_HEADER, r.csv_row()),
    };
    ctx.emit(text)?;
    Ok(if !r.converged {
        eprintln!("error: quadrature did not converge; values are best effort");
        2
    } else if r.pass {
        0
    } else {
        1
    })
}

fn cmd_zeros(ctx: &Ctx, rho: RhoMatrix, kind: ZeroKind, m: u32, count: usize) -> Result<u8> {
    if count == 0 {
        bail!("--count must be at least 1");
    }
    let family = match kind {
        ZeroKind::Telescope => ZeroFamily::Telescope(m),
        ZeroKind::Tilde => ZeroFamily::Tilde(m),
        ZeroKind::Funcor1 => ZeroFamily::FunCor1,
        ZeroKind::Funcor2 => ZeroFamily::FunCor2,
    };
    let tol = ctx.tol.unwrap_or(1e-8);
    let roots = candidate_zeros(family, &rho, 0..=(count as i64 - 1))?;
    let per_k = if matches!(kind, ZeroKind::Funcor1 | ZeroKind::Funcor2) { 2 } else { 1 };
    let mut recs = Vec::new();
    for (i, &s) in roots.iter().enumerate() {
        let closed = zero_family_value(family, &rho, s).norm();
        let quad = match kind {
            ZeroKind::Telescope | ZeroKind::Tilde => {
                let x = Xi1::with_spec(rho.get(0, 0), ctx.spec(1))?;
                let refl = 1.0 - m as f64 - s;
                if let ZeroKind::Telescope = kind {
                    (x.sum_m(s, m)?.value - x.sum_m(refl, m)?.value).norm()
                } else {
                    let sg = if m % 2 == 0 { 1.0 } else { -1.0 };
                    (x.tilde_sum_m(s, m)?.value + sg * x.tilde_sum_m(refl, m)?.value).norm()
                }
            }
            ZeroKind::Funcor1 | ZeroKind::Funcor2 => {
                let id = if let ZeroKind::Funcor1 = kind { IdentityId::FunCor1 } else { IdentityId::FunCor2 };
                verify_with(id, &VerifyParams::new(rho.clone(), vec![s]), Some(tol), Some(ctx.quad_scale))?.abs_residual
            }
        };
        recs.push(ZeroRecord {
            k: (i / per_k) as i64,
            branch: if per_k == 1 { 0 } else if i % 2 == 0 { 1 } else { -1 },
            s,
            closed_form_residual: closed,
            quad_residual: quad,
            confirmed: closed < tol && quad < tol,
        });
    }
    let all = recs.iter().all(|r| r.confirmed);
    let text = match ctx.format.unwrap_or(Format::Csv) {
        Format::Json => ctx.json(&recs)?,
        Format::Csv => csv_text(
            &["k", "branch", "re", "im", "closed_form_residual", "quad_residual", "confirmed"],
            recs.iter()
                .map(|r| {
                    vec![
                        r.k.to_string(),
                        r.branch.to_string(),
                        num(r.s.re),
                        num(r.s.im),
                        num(r.closed_form_residual),
                        num(r.quad_residual),
                        r.confirmed.to_string(),
                    ]
                })
                .collect(),
        )?,
    };
    ctx.emit(text)?;
    Ok(if all { 0 } else { 1 })
}

fn cmd_decompose(ctx: &Ctx, rho: Complex64, s: Complex64) -> Result<u8> {
    let d = ode::canonical_decomposition(rho, s)?;
    let (a_plus, a_minus) = ode::a_pm(rho, s)?;
    let rec = DecomposeRecord {
        rho,
        s,
        sinh_coeff: d.sinh_coeff,
        cosh_coeff: d.cosh_coeff,
        integral_part: d.integral_part,
        total: d.total,
        direct: ode::canonical_target(rho, s)?,
        a_plus,
        a_minus,
    };
    let text = match ctx.format.unwrap_or(Format::Json) {
        Format::Json => ctx.json(&rec)?,
        Format::Csv => {
            let rows = [
                ("sinh_coeff", rec.sinh_coeff),
                ("cosh_coeff", rec.cosh_coeff),
                ("integral_part", rec.integral_part),
                ("total", rec.total),
                ("direct", rec.direct),
                ("a_plus", rec.a_plus),
                ("a_minus", rec.a_minus),
            ];
            csv_text(
                &["quantity", "re", "im"],
                rows.iter().map(|(n, v)| vec![n.to_string(), num(v.re), num(v.im)]).collect(),
            )?
        }
    };
    ctx.emit(text)?;
    Ok(0)
}

fn cmd_grid(ctx: &Ctx, rho: Complex64, family: Family, re: Vec<f64>, im: Vec<f64>) -> Result<u8> {
    if !matches!(family, Family::Xi | Family::XiTilde) {
        bail!("grid supports the xi and xi_tilde families");
    }
    let x = Xi1::with_spec(rho, ctx.spec(1))?;
    let mut recs = Vec::with_capacity(re.len() * im.len());
    for &a in &re {
        for &b in &im {
            let s = Complex64::new(a, b);
            let v = if family == Family::Xi { x.value(s)? } else { x.tilde(s)? };
            recs.push(GridRecord {
                s,
                value: v.value,
                quad_error: v.quad_error,
            });
        }
    }
    let text = match ctx.format.unwrap_or(Format::Csv) {
        Format::Json => ctx.json(&recs)?,
        Format::Csv => csv_text(
            &["re", "im", "value_re", "value_im", "quad_error"],
            recs.iter()
                .map(|r| vec![num(r.s.re), num(r.s.im), num(r.value.re), num(r.value.im), num(r.quad_error)])
                .collect(),
        )?,
    };
    ctx.emit(text)?;
    Ok(0)
}
