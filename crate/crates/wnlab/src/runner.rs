//! Experiment execution: resolves a configuration, writes a manifest, runs
//! the requested computation and emits deterministic CSV/JSON artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use wnlab_core::bandwidth::{
    oracle_bandwidth_grid, BandwidthField, BandwidthVector, OracleGridCaps,
};
use wnlab_core::estimator::{check_resolvable, resolvability_floor};
use wnlab_core::grid::Grid;
use wnlab_core::kernels::{build_base_w, build_wl, product_kernel, ProductKernel};
use wnlab_core::nikolskii::{check_membership, default_u_grid, ClassSpec};
use wnlab_core::rates::{self, Zone};
use wnlab_core::selection::{PsiMode, UpperFunctionConfig};
use wnlab_core::testbed::{build_family, render_family_member, vg_set, LowerBoundConstants};

use crate::config::{
    parse_and_validate, CapsDef, ExperimentKind, HRecipe, KernelDef, ResolvedConfig,
};
use crate::gridio;
use crate::risk::{
    corollary_benchmark, mc_risk, oracle_benchmark, oracle_terms, rate_fit, upper_function_check,
    Method,
};

/// Failure modes of a run, mapped onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Configuration did not parse or validate (exit 2).
    #[error("invalid configuration: {0}")]
    Validation(String),
    /// The computation failed after the manifest was written (exit 3;
    /// partial artifacts remain).
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub manifest_hash: String,
}

fn runtime<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Runtime(e.to_string())
}

pub fn build_kernel(def: &KernelDef, d: usize) -> ProductKernel {
    let base = build_base_w(def.profile, def.ell);
    product_kernel(build_wl(&base, def.ell), d)
}

fn upper_config(cfg: &ResolvedConfig, kernel: &ProductKernel, mode: PsiMode) -> UpperFunctionConfig {
    let mut uc = UpperFunctionConfig::compute(kernel, cfg.grid.d, cfg.grid.b, cfg.p, cfg.q, mode);
    if let Some(scale) = cfg.overrides.c1_scale {
        uc.c1 *= scale;
    }
    if let Some(table) = &cfg.overrides.c2_table {
        uc.c2_table = table.clone();
    }
    uc.h_eps_override = cfg.overrides.h_eps;
    uc.a_eps_override = cfg.overrides.a_eps;
    uc.r_cap = cfg.caps.r_cap;
    uc.family_cap = cfg.caps.family_cap;
    uc
}

fn lower_bound_constants(cfg: &ResolvedConfig) -> LowerBoundConstants {
    LowerBoundConstants {
        c1_lb: cfg.overrides.c1_lb.unwrap_or(4.0),
        c2_lb: cfg.overrides.c2_lb,
        c3_lb: cfg.overrides.c3_lb,
    }
}

/// Cartesian product of per-axis levels, resolvable tuples only.
fn const_lattice_family(
    grid: Grid,
    levels: &[u32],
    caps: &CapsDef,
) -> Result<Vec<BandwidthField>, String> {
    let d = grid.dim();
    let floor = resolvability_floor(&grid);
    let usable: Vec<u32> = levels.iter().copied().filter(|s| *s <= floor).collect();
    if usable.is_empty() {
        return Err(format!(
            "no resolvable levels: the grid supports levels up to {floor}"
        ));
    }
    let mut tuples: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for t in &tuples {
            for s in &usable {
                let mut t2 = t.clone();
                t2.push(*s);
                next.push(t2);
            }
        }
        tuples = next;
    }
    if tuples.len() > caps.family_cap {
        return Err(format!(
            "constant lattice of size {} exceeds the family cap {}",
            tuples.len(),
            caps.family_cap
        ));
    }
    tuples
        .into_iter()
        .map(|t| {
            BandwidthField::constant(grid, BandwidthVector::new(t)).map_err(|e| e.to_string())
        })
        .collect()
}

/// Constants plus single-cell refinements on a dyadic partition.
fn dyadic_varying_family(
    grid: Grid,
    partition_level: u32,
    levels: &[u32],
    caps: &CapsDef,
) -> Result<Vec<BandwidthField>, String> {
    let d = grid.dim();
    let floor = resolvability_floor(&grid);
    let usable: Vec<u32> = levels.iter().copied().filter(|s| *s <= floor).collect();
    if usable.is_empty() {
        return Err("no resolvable levels for the varying recipe".into());
    }
    let partition = wnlab_core::bandwidth::DyadicPartition::new(d, grid.half_width(), partition_level)
        .map_err(|e| e.to_string())?;
    let cells = partition.cell_count();
    let mut family = Vec::new();
    for s in &usable {
        let constant =
            vec![BandwidthVector::constant(d, *s); cells];
        family.push(
            BandwidthField::from_cells(grid, partition_level, constant).map_err(|e| e.to_string())?,
        );
    }
    'outer: for s in &usable {
        for cell in 0..cells {
            if *s + 1 > floor {
                continue;
            }
            let mut cell_levels = vec![BandwidthVector::constant(d, *s); cells];
            cell_levels[cell] = BandwidthVector::constant(d, *s + 1);
            family.push(
                BandwidthField::from_cells(grid, partition_level, cell_levels)
                    .map_err(|e| e.to_string())?,
            );
            if family.len() >= caps.family_cap {
                break 'outer;
            }
        }
    }
    Ok(family)
}

fn oracle_grid_family(
    grid: Grid,
    class: &ClassSpec,
    p: f64,
    eps: f64,
    kernel_ell: u32,
    caps: &CapsDef,
) -> Result<Vec<BandwidthField>, String> {
    let oc = OracleGridCaps {
        level_cap: caps.level_cap,
        max_vectors: caps.max_vectors,
        resolution_floor: Some(grid.cell_width()),
        ell: Some(kernel_ell),
    };
    let vectors = oracle_bandwidth_grid(class, p, eps, &oc).map_err(|e| e.to_string())?;
    let mut family = Vec::new();
    for v in vectors {
        let field = BandwidthField::constant(grid, v).map_err(|e| e.to_string())?;
        if check_resolvable(&field).is_ok() {
            family.push(field);
        }
    }
    if family.is_empty() {
        return Err("oracle grid contains no resolvable bandwidths on this grid".into());
    }
    Ok(family)
}

fn family_for(
    cfg: &ResolvedConfig,
    grid: Grid,
    class: &ClassSpec,
    eps: f64,
) -> Result<Vec<BandwidthField>, String> {
    match &cfg.h_recipe {
        HRecipe::ConstLattice { levels } => const_lattice_family(grid, levels, &cfg.caps),
        HRecipe::DyadicVarying {
            partition_level,
            levels,
        } => dyadic_varying_family(grid, *partition_level, levels, &cfg.caps),
        HRecipe::OracleGrid => {
            oracle_grid_family(grid, class, cfg.p, eps, cfg.kernel.ell, &cfg.caps)
        }
    }
}

fn family_is_constant(family: &[BandwidthField]) -> bool {
    family.iter().all(|f| f.as_constant().is_some())
}

fn method_for(family: &[BandwidthField]) -> Method {
    if family_is_constant(family) {
        Method::SelectConst(
            family
                .iter()
                .map(|f| f.as_constant().unwrap().clone())
                .collect(),
        )
    } else {
        Method::SelectVarying(family.to_vec())
    }
}

/// Format a float for CSV: shortest round-trip representation.
fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Execute a configuration (given as JSON text) into an output directory.
pub fn run_config_text(
    text: &str,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<RunArtifacts, RunError> {
    let mut cfg = parse_and_validate(text).map_err(RunError::Validation)?;
    let overridden_seed = seed_override.is_some();
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }

    let grid = Grid::new(cfg.grid.d, cfg.grid.b, cfg.grid.n)
        .map_err(|e| RunError::Validation(e.to_string()))?;
    let kernel = build_kernel(&cfg.kernel, grid.dim());
    let mode = match &cfg.h_recipe {
        HRecipe::DyadicVarying { .. } => PsiMode::General,
        _ => PsiMode::Constant,
    };
    let ucfg = upper_config(&cfg, &kernel, mode);
    ucfg.validate().map_err(|e| RunError::Validation(e.to_string()))?;

    let manifest = json!({
        "tool": "wnlab",
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(&cfg).map_err(runtime)?,
        "seed_overridden": overridden_seed,
        "constants": {
            "c1": ucfg.c1,
            "c3": ucfg.c3,
            "c4": ucfg.c4,
            "c2p": ucfg.c2p(),
            "kernel": kernel.descriptor(),
        },
    });
    let manifest_text = serde_json::to_string_pretty(&manifest).map_err(runtime)? + "\n";
    let manifest_hash = hex::encode(Sha256::digest(manifest_text.as_bytes()));

    fs::create_dir_all(out_dir).map_err(runtime)?;
    fs::write(out_dir.join("manifest.json"), &manifest_text).map_err(runtime)?;

    let (csv_body, results) = match cfg.kind {
        ExperimentKind::RatesTable => run_rates_table(&cfg)?,
        ExperimentKind::RiskCurve => run_risk_curve(&cfg, grid, &kernel, &ucfg)?,
        ExperimentKind::OracleCheck => run_oracle_check(&cfg, grid, &kernel, &ucfg)?,
        ExperimentKind::UpperFunctionCheck => run_upper_check(&cfg, grid, &kernel, &ucfg)?,
        ExperimentKind::TestbedExport => run_testbed_export(&cfg, grid, out_dir)?,
        ExperimentKind::MembershipCheck => run_membership_check(&cfg, grid)?,
    };

    let csv_text = format!("# manifest_sha256 = {manifest_hash}\n{csv_body}");
    fs::write(out_dir.join("results.csv"), csv_text).map_err(runtime)?;
    let results_doc = json!({"manifest_sha256": manifest_hash, "results": results});
    fs::write(
        out_dir.join("results.json"),
        serde_json::to_string_pretty(&results_doc).map_err(runtime)? + "\n",
    )
    .map_err(runtime)?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        manifest_hash,
    })
}

fn run_rates_table(cfg: &ResolvedConfig) -> Result<(String, Value), RunError> {
    let mut csv = String::from(
        "class,p,zone,exponent,beta,omega,l_beta,p_star,tau_2,tau_p_star,kappa_p,boundary_kappa_zero,boundary_rj_one,consistent\n",
    );
    let mut rows = Vec::new();
    for (i, class) in cfg.classes.iter().enumerate() {
        let profile = rates::aggregates(class, cfg.p);
        let (tau2, _) = rates::tau_kappa(class, 2.0);
        let tau_star = class.tau(profile.p_star);
        let kappa_p = class.kappa(cfg.p);
        writeln!(
            csv,
            "{i},{},{:?},{},{},{},{},{},{},{},{},{},{},{}",
            fmt(cfg.p),
            profile.zone,
            fmt(profile.exponent),
            fmt(profile.beta),
            fmt(profile.omega),
            fmt(profile.l_beta),
            fmt(profile.p_star),
            fmt(tau2),
            fmt(tau_star),
            fmt(kappa_p),
            profile.boundary_kappa_zero,
            profile.boundary_rj_one,
            profile.consistent
        )
        .map_err(runtime)?;
        rows.push(serde_json::to_value(&profile).map_err(runtime)?);
    }
    Ok((csv, json!(rows)))
}

fn run_risk_curve(
    cfg: &ResolvedConfig,
    grid: Grid,
    kernel: &ProductKernel,
    ucfg: &UpperFunctionConfig,
) -> Result<(String, Value), RunError> {
    let class = &cfg.classes[0];
    let signal = cfg.signal.render(&grid);
    let mut csv = String::from("eps,risk,stderr,oracle,ratio\n");
    let mut rows = Vec::new();
    let mut curve = Vec::new();
    for &eps in &cfg.eps_list {
        let family = family_for(cfg, grid, class, eps).map_err(RunError::Runtime)?;
        let method = method_for(&family);
        let est = mc_risk(
            &signal, &method, cfg.p, cfg.q, eps, cfg.reps, cfg.seed, ucfg, kernel,
        )
        .map_err(runtime)?;
        let oracle = oracle_benchmark(&signal, &family, cfg.p, eps, ucfg, kernel).map_err(runtime)?;
        let ratio = est.risk / oracle;
        writeln!(
            csv,
            "{},{},{},{},{}",
            fmt(eps),
            fmt(est.risk),
            fmt(est.stderr),
            fmt(oracle),
            fmt(ratio)
        )
        .map_err(runtime)?;
        rows.push(json!({
            "eps": eps,
            "risk": est.risk,
            "stderr": est.stderr,
            "oracle": oracle,
            "ratio": ratio,
            "reps": cfg.reps,
            "family_size": family.len(),
        }));
        curve.push((eps, est.risk));
    }
    // slope against the zone's branch argument
    let profile = rates::aggregates(class, cfg.p);
    let (branch, xs): (&str, Vec<(f64, f64)>) = match profile.zone {
        Zone::Dense => ("ln eps", curve.clone()),
        _ => (
            "ln(eps^2 |ln eps|)",
            curve
                .iter()
                .map(|(e, r)| (e * e * e.ln().abs(), *r))
                .collect(),
        ),
    };
    let theory_slope = match profile.zone {
        Zone::Dense => 2.0 * profile.exponent,
        _ => profile.exponent,
    };
    let fit = if xs.len() >= 4 { rate_fit(&xs).ok() } else { None };
    let slope_json = fit
        .map(|f| {
            json!({
                "branch": branch,
                "slope": f.slope,
                "halfwidth": f.halfwidth,
                "theory": theory_slope,
            })
        })
        .unwrap_or(Value::Null);
    Ok((
        csv,
        json!({"rows": rows, "slope": slope_json, "zone": format!("{:?}", profile.zone)}),
    ))
}

fn run_oracle_check(
    cfg: &ResolvedConfig,
    grid: Grid,
    kernel: &ProductKernel,
    ucfg: &UpperFunctionConfig,
) -> Result<(String, Value), RunError> {
    let class = &cfg.classes[0];
    let signal = cfg.signal.render(&grid);
    let slack = 9.0 * (ucfg.c3 + ucfg.c4 + 2.0);
    let mut csv =
        String::from("eps,frac_within_theorem_bound,frac_within_corollary_bound,risk,theorem_bound,corollary_bound\n");
    let mut rows = Vec::new();
    for &eps in &cfg.eps_list {
        let family = family_for(cfg, grid, class, eps).map_err(RunError::Runtime)?;
        let method = method_for(&family);
        let est = mc_risk(
            &signal, &method, cfg.p, cfg.q, eps, cfg.reps, cfg.seed, ucfg, kernel,
        )
        .map_err(runtime)?;
        let terms = oracle_terms(&signal, &family, cfg.p, eps, ucfg, kernel).map_err(runtime)?;
        let thm_bound = 5.0 * terms.iter().fold(f64::INFINITY, |a, b| a.min(*b)) + slack * eps;
        let cor_bound = if family_is_constant(&family) {
            let levels: Vec<BandwidthVector> = family
                .iter()
                .map(|f| f.as_constant().unwrap().clone())
                .collect();
            Some(
                5.0 * corollary_benchmark(&signal, &levels, cfg.p, eps, ucfg, kernel)
                    .map_err(runtime)?
                    + slack * eps,
            )
        } else {
            None
        };
        let frac_thm = est
            .per_rep_norm
            .iter()
            .filter(|n| **n <= thm_bound)
            .count() as f64
            / est.per_rep_norm.len() as f64;
        let frac_cor = cor_bound
            .map(|b| {
                est.per_rep_norm.iter().filter(|n| **n <= b).count() as f64
                    / est.per_rep_norm.len() as f64
            })
            .unwrap_or(f64::NAN);
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt(eps),
            fmt(frac_thm),
            fmt(frac_cor),
            fmt(est.risk),
            fmt(thm_bound),
            fmt(cor_bound.unwrap_or(f64::NAN))
        )
        .map_err(runtime)?;
        rows.push(json!({
            "eps": eps,
            "frac_theorem": frac_thm,
            "frac_corollary": frac_cor,
            "risk": est.risk,
            "theorem_bound": thm_bound,
            "corollary_bound": cor_bound,
            "slack_constant": slack,
        }));
    }
    Ok((csv, json!(rows)))
}

fn run_upper_check(
    cfg: &ResolvedConfig,
    grid: Grid,
    kernel: &ProductKernel,
    ucfg: &UpperFunctionConfig,
) -> Result<(String, Value), RunError> {
    let class = &cfg.classes[0];
    let mut csv = String::from("eps,moment,budget,ratio,exceedances,reps\n");
    let mut rows = Vec::new();
    for &eps in &cfg.eps_list {
        let family = family_for(cfg, grid, class, eps).map_err(RunError::Runtime)?;
        let report = upper_function_check(
            grid, &family, cfg.q, eps, cfg.reps, ucfg, kernel, cfg.seed,
        )
        .map_err(runtime)?;
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt(eps),
            fmt(report.moment),
            fmt(report.budget),
            fmt(report.ratio),
            report.exceedances,
            report.reps
        )
        .map_err(runtime)?;
        rows.push(serde_json::to_value(&report).map_err(runtime)?);
    }
    Ok((csv, json!(rows)))
}

fn run_testbed_export(
    cfg: &ResolvedConfig,
    grid: Grid,
    out_dir: &Path,
) -> Result<(String, Value), RunError> {
    let class = &cfg.classes[0];
    let constants = lower_bound_constants(cfg);
    let mut csv = String::from("eps,zone,m,sites,amplitude,rho,rho_over_rate,exported_members\n");
    let mut rows = Vec::new();
    for (i, &eps) in cfg.eps_list.iter().enumerate() {
        let family = build_family(class, cfg.p, eps, grid.half_width(), &constants, cfg.seed)
            .map_err(runtime)?;
        let rate = rates::lower_rate(class, cfg.p, eps).map_err(runtime)?;
        let rho_over_rate = family.rho / rate;
        let dir = out_dir.join(format!("family_{i}"));
        fs::create_dir_all(&dir).map_err(runtime)?;
        // descriptor with patterns as bitstrings when small enough
        let mut descriptor = serde_json::to_value(&family).map_err(runtime)?;
        if family.site_count() <= 4096 {
            descriptor["pattern_bitstrings"] = json!(family.pattern_bitstrings());
        }
        fs::write(
            dir.join("family.json"),
            serde_json::to_string_pretty(&descriptor).map_err(runtime)? + "\n",
        )
        .map_err(runtime)?;
        let export_count = family.patterns.len().min(cfg.caps.export_members);
        for (j, pattern) in family.patterns.iter().take(export_count).enumerate() {
            let member = render_family_member(&family, pattern, &grid).map_err(runtime)?;
            let file = fs::File::create(dir.join(format!("member_{j}.bin"))).map_err(runtime)?;
            gridio::write_binary(std::io::BufWriter::new(file), &member).map_err(runtime)?;
        }
        if let Some(pattern) = family.patterns.first() {
            let member = render_family_member(&family, pattern, &grid).map_err(runtime)?;
            let file = fs::File::create(dir.join("member_0.csv")).map_err(runtime)?;
            gridio::write_csv(std::io::BufWriter::new(file), &member).map_err(runtime)?;
        }
        writeln!(
            csv,
            "{},{:?},{},{},{},{},{},{export_count}",
            fmt(eps),
            family.zone,
            family.m,
            family.site_count(),
            fmt(family.amplitude),
            fmt(family.rho),
            fmt(rho_over_rate)
        )
        .map_err(runtime)?;
        rows.push(json!({
            "eps": eps,
            "zone": format!("{:?}", family.zone),
            "m": family.m,
            "sites": family.site_count(),
            "amplitude": family.amplitude,
            "rho": family.rho,
            "rho_over_rate": rho_over_rate,
            "certificate": serde_json::to_value(&family.certificate).map_err(runtime)?,
        }));
    }
    Ok((csv, json!(rows)))
}

fn run_membership_check(cfg: &ResolvedConfig, grid: Grid) -> Result<(String, Value), RunError> {
    let class = &cfg.classes[0];
    let constants = lower_bound_constants(cfg);
    let eps = cfg.eps_list[0];
    let slack = cfg.overrides.membership_slack.unwrap_or(0.1);
    let family = build_family(class, cfg.p, eps, grid.half_width(), &constants, cfg.seed)
        .map_err(runtime)?;
    let u_grid = default_u_grid(&grid);
    let mut csv = String::from("member,pass,worst_ratio,worst_norm_excess\n");
    let mut rows = Vec::new();
    for (i, pattern) in family.patterns.iter().enumerate() {
        let member = render_family_member(&family, pattern, &grid).map_err(runtime)?;
        let report = check_membership(&member, class, &u_grid, slack).map_err(runtime)?;
        let worst_ratio = report
            .axes
            .iter()
            .map(|a| a.worst_ratio)
            .fold(0.0f64, f64::max);
        let worst_norm = report
            .axes
            .iter()
            .map(|a| a.norm / a.radius)
            .fold(0.0f64, f64::max);
        writeln!(
            csv,
            "{i},{},{},{}",
            report.pass,
            fmt(worst_ratio),
            fmt(worst_norm)
        )
        .map_err(runtime)?;
        rows.push(json!({
            "member": i,
            "pass": report.pass,
            "worst_ratio": worst_ratio,
            "worst_norm_ratio": worst_norm,
        }));
    }
    Ok((csv, json!({"rows": rows, "slack": slack})))
}

/// One line of the verification suite.
#[derive(Debug)]
pub struct VerifyLine {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// The fast property suite behind `wnlab verify`: kernel moments, packing
/// certificates, join-complexity, a canned family membership and the
/// kappa/tau identity. Deterministic.
pub fn verify(c2_table: Option<&BTreeMap<u32, f64>>) -> Result<Vec<VerifyLine>, RunError> {
    use rand::{Rng, SeedableRng};
    if let Some(table) = c2_table {
        if table.values().any(|v| !(*v > 0.0)) {
            return Err(RunError::Validation(
                "c2 table entries must be positive".into(),
            ));
        }
    }
    let mut lines = Vec::new();

    // kernel normalization and vanishing moments
    {
        let mut pass = true;
        let mut detail = String::new();
        for profile in [
            wnlab_core::kernels::KernelProfile::CosineBump,
            wnlab_core::kernels::KernelProfile::QuarticSpline,
        ] {
            for ell in 1..=4u32 {
                let w = build_base_w(profile, ell);
                let wl = build_wl(&w, ell);
                if (wl.integral() - 1.0).abs() > 1e-10 {
                    pass = false;
                    let _ = write!(detail, "integral {profile:?} ell={ell}; ");
                }
                for k in 1..ell {
                    if wl.moment(k).abs() > 1e-8 {
                        pass = false;
                        let _ = write!(detail, "moment {k} {profile:?} ell={ell}; ");
                    }
                }
            }
        }
        lines.push(VerifyLine {
            name: "kernel-moments",
            pass,
            detail,
        });
    }

    // packing certificates
    {
        let mut pass = true;
        let mut detail = String::new();
        for (m, n) in [(4usize, 36usize), (8, 80)] {
            match vg_set(m, n, 1) {
                Ok(set) => {
                    if !set.certificate.pass {
                        pass = false;
                        let _ = write!(detail, "({m},{n}) certificate failed; ");
                    }
                }
                Err(e) => {
                    pass = false;
                    let _ = write!(detail, "({m},{n}): {e}; ");
                }
            }
        }
        lines.push(VerifyLine {
            name: "vg-certificates",
            pass,
            detail,
        });
    }

    // lattice join complexity (the two-parameter class is closed under
    // joins with doubled budget)
    {
        let mut pass = true;
        let mut detail = String::new();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        'outer: for d in 1..=2usize {
            let grid = Grid::new(d, 1.0, 16).unwrap();
            let kappa = 1.0 / (2.0 * d as f64);
            let budget = 4.0f64;
            let mut accepted = 0;
            let mut attempts = 0;
            while accepted < 15 && attempts < 4000 {
                attempts += 1;
                let level = rng.gen_range(0..=2u32);
                let partition =
                    wnlab_core::bandwidth::DyadicPartition::new(d, 1.0, level).unwrap();
                let mk = |rng: &mut rand_chacha::ChaCha12Rng| {
                    let cells = partition.cell_count();
                    let cl: Vec<BandwidthVector> = (0..cells)
                        .map(|_| {
                            BandwidthVector::new(
                                (0..d).map(|_| rng.gen_range(0..5u32)).collect(),
                            )
                        })
                        .collect();
                    BandwidthField::from_cells(grid, level, cl).unwrap()
                };
                let h = mk(&mut rng);
                let eta = mk(&mut rng);
                if h.complexity(kappa) > budget || eta.complexity(kappa) > budget {
                    continue;
                }
                accepted += 1;
                let join = h.join(&eta).unwrap();
                let joined_kappa = d as f64 * kappa;
                let joined_budget = (2.0 * budget).powi(d as i32);
                if join.complexity(joined_kappa) > joined_budget + 1e-12 {
                    pass = false;
                    let _ = write!(
                        detail,
                        "d={d}: join complexity {} > {joined_budget}; ",
                        join.complexity(joined_kappa)
                    );
                    break 'outer;
                }
            }
        }
        lines.push(VerifyLine {
            name: "lattice-join-complexity",
            pass,
            detail,
        });
    }

    // canned bump family membership
    {
        let mut pass = true;
        let mut detail = String::new();
        let spec = ClassSpec::isotropic(1, 1.0, f64::INFINITY, 11.0).unwrap();
        match build_family(&spec, 2.0, 0.05, 1.0, &LowerBoundConstants::default(), 1) {
            Ok(family) => {
                let grid = Grid::new(1, 1.0, 256).unwrap();
                let u_grid = default_u_grid(&grid);
                for pattern in &family.patterns {
                    let member = render_family_member(&family, pattern, &grid).unwrap();
                    let report = check_membership(&member, &spec, &u_grid, 0.1).unwrap();
                    if !report.pass {
                        pass = false;
                        detail = format!("worst ratio {:?}", report.axes);
                        break;
                    }
                }
            }
            Err(e) => {
                pass = false;
                detail = e.to_string();
            }
        }
        lines.push(VerifyLine {
            name: "bump-family-membership",
            pass,
            detail,
        });
    }

    // kappa/tau relation on random classes
    {
        let mut pass = true;
        let mut detail = String::new();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let d = rng.gen_range(1..=3usize);
            let beta: Vec<f64> = (0..d).map(|_| 0.3 + 3.0 * rng.gen::<f64>()).collect();
            let r: Vec<f64> = (0..d).map(|_| 1.0 + 7.0 * rng.gen::<f64>()).collect();
            let l: Vec<f64> = (0..d).map(|_| 0.5 + 2.0 * rng.gen::<f64>()).collect();
            let spec = ClassSpec::new(beta, r, l).unwrap();
            let s = 1.0 + 9.0 * rng.gen::<f64>();
            let (tau, kappa) = rates::tau_kappa(&spec, s);
            let lhs = kappa / (spec.omega() * s);
            let rhs = (2.0 - s) / s + tau;
            if (lhs - rhs).abs() > 1e-12 {
                pass = false;
                detail = format!("relation violated by {}", (lhs - rhs).abs());
                break;
            }
        }
        lines.push(VerifyLine {
            name: "kappa-tau-identity",
            pass,
            detail,
        });
    }

    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_suite_passes() {
        let lines = verify(None).unwrap();
        for line in &lines {
            assert!(line.pass, "{}: {}", line.name, line.detail);
        }
        assert!(lines.len() >= 5);
    }

    #[test]
    fn verify_rejects_bad_c2() {
        let mut table = BTreeMap::new();
        table.insert(3u32, -2.0);
        let err = verify(Some(&table)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rates_table_runs() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{
            "kind": "rates_table",
            "classes": [
                {"beta": [2.0, 2.0], "r": [2.0, 2.0], "radii": [1.0, 1.0]},
                {"beta": [1.0], "r": [1.0], "radii": [1.0]}
            ],
            "p": 2.0
        }"#;
        let artifacts = run_config_text(text, dir.path(), None).unwrap();
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(csv.starts_with(&format!("# manifest_sha256 = {}", artifacts.manifest_hash)));
        assert!(csv.contains("Dense"));
        assert!(fs::metadata(dir.path().join("manifest.json")).is_ok());
        assert!(fs::metadata(dir.path().join("results.json")).is_ok());
    }

    #[test]
    fn invalid_config_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_config_text(r#"{"kind": "risk_curve"}"#, dir.path(), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn byte_identical_reruns() {
        let text = r#"{
            "kind": "risk_curve",
            "grid": {"d": 1, "b": 1.0, "n": 128},
            "class": {"beta": [2.0], "r": ["inf"], "radii": [1.0]},
            "signal": {"amplitude": 3.0, "axes": [{"type": "quartic_bump"}]},
            "eps_list": [0.2, 0.1, 0.05],
            "h_recipe": {"type": "const_lattice", "levels": [0, 1]},
            "reps": 30,
            "seed": 11
        }"#;
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_config_text(text, d1.path(), None).unwrap();
        run_config_text(text, d2.path(), None).unwrap();
        for file in ["manifest.json", "results.csv", "results.json"] {
            let a = fs::read(d1.path().join(file)).unwrap();
            let b = fs::read(d2.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
        }
    }
}
