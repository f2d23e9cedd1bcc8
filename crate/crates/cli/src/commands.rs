use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use gapweaver_core::bloch1d::{band_diagram_2d, band_structure, edge_eigenfunctions, k_grid};
use gapweaver_core::cme2d::{
    continue_in_omega_with, integrate_cme_time, solve_class, ClassTag, CmeField, NewtonOptions, SolveSpec,
};
use gapweaver_core::elliptic2d::{convergence_study, track_ansatz, ConvergenceOptions, TrackingOptions};
use gapweaver_core::io::{self, fmt};
use gapweaver_core::jacobian::{kernel_report, kernel_rows};
use gapweaver_core::resonance::{check_nonresonance, compute_coefficients, find_bifurcation_eta};
use gapweaver_core::{PeriodicPotential, ResonanceCoefficients};

use crate::config::*;
use crate::CliError;

type Res<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    potential_hash: String,
    inputs: &'a [Artifact],
    outputs: &'a [Artifact],
    summary: Value,
}

/// Output directory plus the bookkeeping for the manifest.
struct Ctx {
    out: PathBuf,
    potential: PeriodicPotential,
    grid_n: usize,
    tol: Option<f64>,
    inputs: Vec<Artifact>,
    outputs: Vec<Artifact>,
}

impl Ctx {
    fn input(&mut self, path: &Path) -> Res<()> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(Artifact { path: path.display().to_string(), sha256: io::sha256_hex(&bytes), bytes: bytes.len() });
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Res<()> {
        let path = self.out.join(name);
        io::atomic_write(&path, bytes)?;
        self.outputs.push(Artifact { path: name.to_string(), sha256: io::sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Res<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(gapweaver_core::Error::from)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn newton(&self) -> NewtonOptions {
        let d = NewtonOptions::default();
        NewtonOptions { tol: self.tol.unwrap_or(d.tol), ..d }
    }

    /// Coefficients from a file, or computed at the run's resolution.
    fn coeffs(&mut self, file: Option<&Path>, bracket: &str) -> Res<ResonanceCoefficients> {
        match file {
            Some(f) => {
                self.input(f)?;
                Ok(io::read_json(f)?)
            }
            None => {
                let b = find_bifurcation_eta(&self.potential, parse_pair(bracket)?, self.grid_n)?;
                Ok(compute_coefficients(&self.potential, b.eta0, self.grid_n)?)
            }
        }
    }
}

fn parse_pair(s: &str) -> Res<(f64, f64)> {
    let v = parse_list(s, ':')?;
    match v[..] {
        [a, b] => Ok((a, b)),
        _ => Err(CliError::Usage(format!("expected lo:hi, got '{s}'"))),
    }
}

fn parse_list(s: &str, sep: char) -> Res<Vec<f64>> {
    s.split(sep)
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("not a number: '{t}' in '{s}'"))))
        .collect()
}

fn parse_class(s: &str) -> Res<ClassTag> {
    s.parse().map_err(|e: gapweaver_core::Error| CliError::Usage(e.to_string()))
}

pub fn load_potential(spec: &str) -> Res<(PeriodicPotential, Option<PathBuf>)> {
    match spec {
        "one-minus-cos" | "builtin:one-minus-cos" => Ok((PeriodicPotential::one_minus_cos(), None)),
        "zero" | "builtin:zero" => Ok((PeriodicPotential::zero(), None)),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("potential '{path}': not a builtin and not readable ({e})")))?;
            Ok((PeriodicPotential::from_json(&text)?, Some(PathBuf::from(path))))
        }
    }
}

pub fn run(cfg: &RunConfig) -> Res<Value> {
    if cfg.grid_n < 8 {
        return Err(CliError::Usage(format!("grid-n must be at least 8, got {}", cfg.grid_n)));
    }
    if let Some(t) = cfg.tol {
        if !(t > 0.0) {
            return Err(CliError::Usage(format!("tol must be positive, got {t}")));
        }
    }
    let (potential, file) = load_potential(&cfg.potential)?;
    let mut ctx = Ctx {
        out: cfg.out.clone(),
        potential,
        grid_n: cfg.grid_n,
        tol: cfg.tol,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    if let Some(f) = file {
        ctx.input(&f)?;
    }
    ctx.json("config.json", cfg)?;
    let summary = match &cfg.command {
        CommandConfig::Bands(a) => bands(&mut ctx, a)?,
        CommandConfig::Bifurcate(a) => bifurcate(&mut ctx, a)?,
        CommandConfig::Coeffs(a) => coeffs(&mut ctx, a)?,
        CommandConfig::Solve(a) => solve(&mut ctx, a)?,
        CommandConfig::Continue(a) => continue_branch(&mut ctx, a)?,
        CommandConfig::DiagKernel(a) => diag_kernel(&mut ctx, a)?,
        CommandConfig::VerifyEps(a) => verify_eps(&mut ctx, a)?,
        CommandConfig::Evolve(a) => evolve(&mut ctx, a)?,
        CommandConfig::Nonres(a) => nonres(&mut ctx, a)?,
    };
    let manifest = Manifest {
        tool: "gapweaver",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.name(),
        config: cfg,
        potential_hash: ctx.potential.descriptor_hash(),
        inputs: &ctx.inputs,
        outputs: &ctx.outputs,
        summary: summary.clone(),
    };
    io::write_json(&ctx.out.join("manifest.json"), &manifest)?;
    Ok(summary)
}

fn bifurcate(ctx: &mut Ctx, a: &BifurcateArgs) -> Res<Value> {
    let b = find_bifurcation_eta(&ctx.potential, parse_pair(&a.bracket)?, ctx.grid_n)?;
    ctx.json("bifurcation.json", &b)?;
    let efs = edge_eigenfunctions(&ctx.potential, b.eta0, 2, ctx.grid_n)?;
    let header = json!({
        "eta": efs.eta, "grid_n": efs.grid_n, "h": efs.h, "lambda": efs.lambda, "mu": efs.mu,
        "columns": ["x", "psi1", "phi1", "phi2"], "layout": "column-major",
    });
    let payload: Vec<f64> = [efs.x(), efs.psi(1), efs.phi(1), efs.phi(2)].concat();
    ctx.write("edge_functions.bin", &io::encode_binary(&header, &payload)?)?;
    println!("eta0   = {:.6}", b.eta0);
    println!("omega0 = {:.6}", b.omega0);
    println!("lambda1 = {:.6}  mu1 = {:.6}  mu2 = {:.6}", b.lambda1, b.mu1, b.mu2);
    Ok(json!({"eta0": b.eta0, "omega0": b.omega0, "lambda1": b.lambda1, "mu1": b.mu1, "mu2": b.mu2}))
}

fn bands(ctx: &mut Ctx, a: &BandsArgs) -> Res<Value> {
    if a.n_eigs == 0 || a.k_points < 2 {
        return Err(CliError::Usage("need n-eigs >= 1 and k-points >= 2".into()));
    }
    let eta = match a.eta {
        Some(e) => e,
        None => find_bifurcation_eta(&ctx.potential, parse_pair(&a.bracket)?, ctx.grid_n)?.eta0,
    };
    let ks = k_grid(-0.5, 0.5, a.k_points);
    let bd = band_structure(&ctx.potential, eta, a.n_eigs, &ks, ctx.grid_n, a.extrapolate)?;
    let mut cols = vec!["k".to_string()];
    cols.extend((1..=a.n_eigs).map(|n| format!("rho{n}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> =
        bd.k_grid.iter().zip(&bd.bands).map(|(k, r)| std::iter::once(*k).chain(r.iter().copied()).map(fmt).collect()).collect();
    let header = json!({"eta": eta, "grid_n": ctx.grid_n, "n_eigs": a.n_eigs, "k_grid": bd.k_grid});
    ctx.write("bands.csv", io::encode_table(&header, &cols, &rows)?.as_bytes())?;

    let dg = band_diagram_2d(&ctx.potential, eta, a.n_eigs, a.diagram_points, ctx.grid_n)?;
    let mut cols = vec!["s".to_string(), "k1".into(), "k2".into()];
    cols.extend((1..=a.n_eigs).map(|n| format!("band{n}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..dg.s.len())
        .map(|j| [dg.s[j], dg.k[j].0, dg.k[j].1].into_iter().chain(dg.bands[j].iter().copied()).map(fmt).collect())
        .collect();
    let header = json!({"eta": eta, "grid_n": ctx.grid_n, "path": "G-X-M-G", "vertices": dg.vertices});
    ctx.write("band_diagram_2d.csv", io::encode_table(&header, &cols, &rows)?.as_bytes())?;
    println!("bands at eta = {eta:.6}: lambda = {:?}", bd.lambda);
    Ok(json!({"eta": eta, "lambda": bd.lambda, "mu": bd.mu}))
}

fn coeffs(ctx: &mut Ctx, a: &CoeffsArgs) -> Res<Value> {
    let eta0 = match a.eta0 {
        Some(e) => e,
        None => find_bifurcation_eta(&ctx.potential, parse_pair(&a.bracket)?, ctx.grid_n)?.eta0,
    };
    let c = compute_coefficients(&ctx.potential, eta0, ctx.grid_n)?;
    ctx.json("coefficients.json", &c)?;
    print!("{}", c.table());
    Ok(serde_json::to_value(&c).map_err(gapweaver_core::Error::from)?)
}

fn solve(ctx: &mut Ctx, a: &SolveArgs) -> Res<Value> {
    let class = parse_class(&a.class)?;
    let c = ctx.coeffs(a.coeffs.as_deref(), &a.bracket)?;
    let mut spec = SolveSpec::new(class, a.omega);
    spec.sigma = a.sigma;
    spec.d = a.d;
    if let Some(dy) = a.dy {
        spec.dy = dy;
    }
    spec.homotopy_steps = a.homotopy_steps;
    spec.coarsen = a.coarsen;
    spec.newton = ctx.newton();
    let (f, reports, homotopy) = solve_class(&c, &spec)?;
    ctx.write("field.bin", &f.to_bytes()?)?;
    let summary = json!({
        "class": class, "omega": a.omega, "D": f.d, "dy": f.dy, "n": f.n,
        "amplitude": f.amplitude(), "power": f.power(), "residual": f.residual_norm(),
        "boundary_ratio": f.boundary_ratio(), "reversibility_defect": f.reversibility_defect(),
    });
    ctx.json("solve.json", &json!({"summary": summary, "newton": reports, "homotopy": homotopy, "spec": spec}))?;
    println!("{class} at Omega = {}: amplitude {:.6}, residual {:.2e}", a.omega, f.amplitude(), f.residual_norm());
    Ok(summary)
}

fn continue_branch(ctx: &mut Ctx, a: &ContinueArgs) -> Res<Value> {
    let r = parse_list(&a.omega_range, ':')?;
    let [start, end, step] = r[..] else {
        return Err(CliError::Usage(format!("expected start:end:step, got '{}'", a.omega_range)));
    };
    ctx.input(&a.from)?;
    let seed = CmeField::load(&a.from)?;
    let out = ctx.out.clone();
    let mut saved: Vec<(f64, f64, String, Vec<u8>)> = Vec::new();
    let branch = continue_in_omega_with(&seed, (start, end), step, ctx.newton(), |f| {
        let name = format!("branch/field_{:04}.bin", saved.len());
        let bytes = f.to_bytes()?;
        io::atomic_write(&out.join(&name), &bytes)?;
        saved.push((f.omega, f.amplitude(), name, bytes));
        Ok(())
    })?;
    let mut rows = Vec::new();
    for (om, amp, name, bytes) in &saved {
        ctx.outputs.push(Artifact { path: name.clone(), sha256: io::sha256_hex(bytes), bytes: bytes.len() });
        rows.push(vec![fmt(*om), fmt(*amp), name.clone()]);
    }
    ctx.write("branch.csv", io::encode_csv(&["omega", "amplitude", "field_path"], &rows).as_bytes())?;
    let edge = if matches!(seed.class_tag, ClassTag::AM0 | ClassTag::AM1) { seed.coeffs.beta2 } else { seed.coeffs.beta1 };
    let exponent = branch.edge_exponent(edge, 0.05);
    ctx.json("branch.json", &json!({"branch": branch, "edge": edge, "edge_exponent": exponent}))?;
    println!("{} points, end {:?}, edge exponent {:?}", branch.points.len(), branch.end, exponent);
    Ok(json!({"points": branch.points.len(), "end": branch.end, "edge_exponent": exponent}))
}

fn diag_kernel(ctx: &mut Ctx, a: &DiagKernelArgs) -> Res<Value> {
    let ds = parse_list(&a.d, ',')?;
    if ds.is_empty() || ds.iter().any(|&d| !(d > 0.0)) {
        return Err(CliError::Usage(format!("bad box list '{}'", a.d)));
    }
    ctx.input(&a.field)?;
    let f = CmeField::load(&a.field)?;
    let rows = kernel_rows(&f, &ds, ctx.newton())?;
    let report = kernel_report(f.class_tag, f.omega, rows, f.max_modulus() == 0.0);
    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![fmt(r.d)];
            v.extend((0..4).map(|k| r.eigenvalues.get(k).map_or_else(|| "nan".into(), |x| fmt(*x))));
            v.push(fmt(r.subspace_angle));
            v
        })
        .collect();
    let cols = ["D", "lambda_J1", "lambda_J2", "lambda_J3", "lambda_J4", "subspace_angle"];
    ctx.write("kernel.csv", io::encode_csv(&cols, &table).as_bytes())?;
    ctx.json("kernel.json", &report)?;
    for r in &report.rows {
        println!("D = {:>5}: lambda = {:?}, angle = {:.2e}", r.d, r.eigenvalues, r.subspace_angle);
    }
    println!("verified: {} ({})", report.verified, report.reason);
    Ok(json!({"verified": report.verified, "known": report.known, "reason": report.reason}))
}

fn verify_eps(ctx: &mut Ctx, a: &VerifyEpsArgs) -> Res<Value> {
    let class = parse_class(&a.class)?;
    let mut o = ConvergenceOptions {
        eps: parse_list(&a.eps, ',')?,
        points_per_period: a.points_per_period,
        y_support: a.y_support,
        bracket: parse_pair(&a.bracket)?,
        ..Default::default()
    };
    o.newton.cell_budget = a.cell_budget;
    if let Some(t) = ctx.tol {
        o.newton.tol = t;
    }
    let r = convergence_study(&ctx.potential, class, a.omega, &o)?;
    let rows: Vec<Vec<String>> =
        r.points.iter().map(|p| vec![fmt(p.epsilon), fmt(p.error), p.grid_n.to_string()]).collect();
    ctx.write("convergence.csv", io::encode_csv(&["epsilon", "error", "grid_n"], &rows).as_bytes())?;
    ctx.json(
        "convergence.json",
        &json!({"slope": r.slope, "intercept": r.intercept, "class": class, "omega": a.omega, "report": r}),
    )?;
    for p in &r.points {
        println!("eps = {:<6} error = {:.4e}", p.epsilon, p.error);
    }
    println!("slope = {:.4}", r.slope);
    if !r.complete {
        return Err(CliError::Incomplete(r.failure.unwrap_or_else(|| "study incomplete".into())));
    }
    Ok(json!({"slope": r.slope, "intercept": r.intercept, "complete": r.complete}))
}

fn evolve(ctx: &mut Ctx, a: &EvolveArgs) -> Res<Value> {
    match (&a.field, a.track_eps) {
        (Some(path), None) => {
            ctx.input(path)?;
            let f = CmeField::load(path)?;
            let (g, d) = integrate_cme_time(&f, a.t, a.dt)?;
            ctx.write("evolved.bin", &g.to_bytes()?)?;
            ctx.json("evolve.json", &d)?;
            println!("T = {}: power {:.10e} -> {:.10e}", d.t_end, d.power_initial, d.power_final);
            Ok(serde_json::to_value(&d).map_err(gapweaver_core::Error::from)?)
        }
        (None, Some(eps)) => {
            let (Some(class), Some(omega)) = (&a.class, a.omega) else {
                return Err(CliError::Usage("--track-eps needs --class and --omega".into()));
            };
            let class = parse_class(class)?;
            let o = TrackingOptions {
                epsilon: eps,
                t0: a.t,
                dt: a.dt,
                points_per_period: a.points_per_period,
                y_support: a.y_support,
                bracket: parse_pair(&a.bracket)?,
                ..Default::default()
            };
            let r = track_ansatz(&ctx.potential, class, omega, &o)?;
            let rows: Vec<Vec<String>> = r.samples.iter().map(|(t, e)| vec![fmt(*t), fmt(*e)]).collect();
            ctx.write("tracking.csv", io::encode_csv(&["t", "error"], &rows).as_bytes())?;
            ctx.json("tracking.json", &r)?;
            println!("eps = {eps}: sup error {:.4e}, mass drift {:.1e}", r.sup_error, r.mass_drift);
            Ok(json!({"epsilon": eps, "sup_error": r.sup_error, "mass_drift": r.mass_drift}))
        }
        _ => Err(CliError::Usage("evolve needs exactly one of --field or --track-eps".into())),
    }
}

fn nonres(ctx: &mut Ctx, a: &NonresArgs) -> Res<Value> {
    if a.n_max == 0 {
        return Err(CliError::Usage("n-max must be positive".into()));
    }
    let b = find_bifurcation_eta(&ctx.potential, parse_pair(&a.bracket)?, ctx.grid_n)?;
    let r = check_nonresonance(&ctx.potential, b.eta0, b.omega0, a.n_max, ctx.grid_n)?;
    ctx.json("nonres.json", &r)?;
    println!("minimum {:.6e} ({}), tail certified: {}", r.minimum, r.status, r.tail.certified);
    Ok(json!({"minimum": r.minimum, "certified": r.tail.certified, "status": r.status}))
}
