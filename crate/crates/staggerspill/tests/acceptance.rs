//! Acceptance suite: one PASS/FAIL line per criterion, with the checks behind
//! each line listed underneath. Runs without the libtest harness so the report
//! is always printed.
//!
//! A check listed in `KNOWN_FAILURES` still prints FAIL; it only keeps the
//! process exit status at zero. Anything else that fails makes the target fail.

use std::process::ExitCode;
use std::time::Instant;

use staggerspill::cli::try_main;
use staggerspill::mc::{run_parallel, thread_pool};
use staggerspill_core::estimators::Component;
use staggerspill_core::inference::{infer, Bandwidth, Distance, InferenceConfig, InferenceReport};
use staggerspill_core::pipeline::{estimate, EstimationConfig, FirstStageKind};
use staggerspill_core::simulate::{
    finite_population_truth, generate, Design, DgpConfig, Draw, McConfig, McReport, Method,
};

const SEED: u64 = 20240601;
const REPS: usize = 1000;

/// Checks that fail on the reference run; see the decisions ledger.
const KNOWN_FAILURES: &[&str] = &[
    "3: dgp3 N=500 DID coverage",
    "3: dgp3 N=500 CS coverage",
];

/// Reference RMSE for (design, N, method).
fn reference_rmse(design: Design, n: usize, m: Method) -> f64 {
    let row: [f64; 3] = match (design, n) {
        (Design::Dgp1, 200) => [0.263, 0.296, 0.401],
        (Design::Dgp1, 500) => [0.152, 0.174, 0.234],
        (Design::Dgp2, 200) => [0.269, 0.299, 0.406],
        (Design::Dgp2, 500) => [0.150, 0.182, 0.239],
        (Design::Dgp3, 200) => [0.298, 0.350, 0.430],
        (Design::Dgp3, 500) => [0.166, 0.231, 0.279],
        _ => unreachable!(),
    };
    match m {
        Method::Dse => row[0],
        Method::Cse => row[1],
        Method::Dte => row[2],
        _ => unreachable!(),
    }
}

struct Check {
    id: String,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn check(&mut self, id: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            id: id.into(),
            pass,
            detail: detail.into(),
        });
    }
}

fn report(num: usize, title: &str, c: &Criterion, unexpected: &mut Vec<String>) {
    let pass = !c.checks.is_empty() && c.checks.iter().all(|k| k.pass);
    println!("[{}] {num}. {title}", if pass { "PASS" } else { "FAIL" });
    for k in &c.checks {
        let known = KNOWN_FAILURES.contains(&k.id.as_str());
        let tag = match (k.pass, known) {
            (true, _) => "ok  ",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("      {tag} {}: {}", k.id, k.detail);
        if !k.pass && !known {
            unexpected.push(k.id.clone());
        }
    }
    if c.checks.is_empty() {
        unexpected.push(format!("{num}: no checks ran"));
    }
}

fn monte_carlo() -> Vec<McReport> {
    let pool = thread_pool(None).unwrap();
    let mut out = Vec::new();
    for design in Design::ALL {
        for n in [200, 500] {
            let cfg = McConfig::new(design, n, REPS, SEED);
            let (rep, _) = run_parallel(&cfg, &pool).unwrap();
            out.push(rep);
        }
    }
    out
}

fn proposed(reports: &[McReport], c1: &mut Criterion, c2: &mut Criterion) {
    for r in reports {
        let d = r.design.as_str();
        let dgp3 = r.design == Design::Dgp3;
        let (bias_tol, cov_lo) = if dgp3 { (0.06, 0.90) } else { (0.05, 0.91) };
        let c = if dgp3 { &mut *c2 } else { &mut *c1 };
        c.check(
            format!("{}: {d} N={} failed replications", if dgp3 { 2 } else { 1 }, r.n),
            r.failures.is_empty(),
            format!("{} of {}", r.failures.len(), r.reps),
        );
        for m in [Method::Dse, Method::Cse, Method::Dte] {
            let row = r.pooled(m).unwrap();
            let tag = format!("{}: {d} N={} {}", if dgp3 { 2 } else { 1 }, r.n, m.as_str());
            c.check(
                format!("{tag} bias"),
                row.bias.abs() <= bias_tol,
                format!("{:+.4} (|bias| <= {bias_tol})", row.bias),
            );
            let cov = row.coverage.unwrap_or(f64::NAN);
            c.check(
                format!("{tag} coverage"),
                (cov_lo..=0.97).contains(&cov),
                format!(
                    "{cov:.3} in [{cov_lo}, 0.97]; availability {:.3}, retained share {:.3}",
                    row.availability, row.retained_share
                ),
            );
            if !dgp3 {
                let reference = reference_rmse(r.design, r.n, m);
                let ratio = row.rmse / reference;
                c.check(
                    format!("{tag} RMSE"),
                    (0.75..=1.25).contains(&ratio),
                    format!("{:.4} vs {reference} (ratio {ratio:.3}, within +/-25%)", row.rmse),
                );
            } else {
                let reference = reference_rmse(r.design, r.n, m);
                println!(
                    "      info 2: {d} N={} {} RMSE {:.4} (reference {reference})",
                    r.n,
                    m.as_str(),
                    row.rmse
                );
            }
        }
    }
}

fn benchmarks(reports: &[McReport], c: &mut Criterion) {
    for r in reports {
        let d = r.design.as_str();
        let target = if r.design == Design::Dgp3 { -0.36 } else { -0.31 };
        for m in [Method::Did, Method::Cs] {
            let row = r.pooled(m).unwrap();
            let tag = format!("3: {d} N={} {}", r.n, m.as_str());
            c.check(
                format!("{tag} deviation"),
                row.bias < 0.0 && (row.bias - target).abs() <= 0.10,
                format!("{:+.4} (negative, within 0.10 of {target})", row.bias),
            );
            if r.n == 500 {
                let cov = row.coverage.unwrap_or(f64::NAN);
                c.check(
                    format!("{tag} coverage"),
                    cov <= 0.30,
                    format!("{cov:.3} (<= 0.30)"),
                );
            }
        }
    }
}

fn identities(reports: &[McReport], c: &mut Criterion) {
    let worst = |f: fn(&McReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    let runs = reports.len() * REPS;
    for (id, tol, v) in [
        ("5: DTE = DSE + CSE", 1e-12, worst(|r| r.max_additivity_residual)),
        (
            "5: regression equals cell means",
            1e-10,
            worst(|r| r.max_regression_rel_err),
        ),
        ("5: unit taxonomy", 1e-12, worst(|r| r.max_taxonomy_residual)),
        ("5: DID decomposition", 1e-12, worst(|r| r.max_decomposition_residual)),
    ] {
        c.check(id, v <= tol, format!("max {v:.2e} over {runs} draws (<= {tol:e})"));
    }
}

fn dose() -> FirstStageKind {
    FirstStageKind::Dose {
        doses: vec![0.0, 1.0, 2.0],
        pooled: false,
    }
}

fn config(first_stage: FirstStageKind) -> EstimationConfig {
    EstimationConfig {
        min_cell: 5,
        event_max: 2,
        pre_period: true,
        first_stage,
        use_strata: false,
    }
}

/// Proposed estimates paired with their retained-support truths.
fn errors(d: &Draw) -> Vec<(String, f64)> {
    let est = estimate(&d.ds, &d.path, &config(dose())).unwrap();
    let truth = finite_population_truth(&d.po, &est);
    let mut out = Vec::new();
    for c in &est.cells {
        let t = truth.cell(c.g, c.l).unwrap();
        for (name, v, tr) in [
            ("DSE", c.dse.value, t.dse),
            ("CSE", c.cse.value, t.cse),
            ("DTE", c.dte.value, t.dte),
        ] {
            if let Some(v) = v {
                out.push((format!("{name}({},{})", c.g, c.l), v - tr));
            }
        }
    }
    for e in &est.event_time {
        let t = truth.event(e.l).unwrap();
        for (name, v, tr) in [("DSE", e.dse, t.dse), ("CSE", e.cse, t.cse), ("DTE", e.dte, t.dte)] {
            if let Some(v) = v {
                out.push((format!("{name}(l={})", e.l), v - tr));
            }
        }
    }
    out
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn convergence(c: &mut Criterion) {
    for design in Design::ALL {
        let runs: Vec<Vec<(String, f64)>> = (0..=4)
            .map(|k| {
                let mut cfg = DgpConfig::new(design, 500);
                cfg.noise_scale = 10f64.powi(-k);
                errors(&generate(&cfg, SEED, 0).unwrap())
            })
            .collect();
        let xs: Vec<f64> = (0..=4).map(|k| -(k as f64)).collect();
        let (mut lo, mut hi, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0);
        let mut same_support = true;
        for (j, (name, e0)) in runs[0].iter().enumerate() {
            if e0.abs() < 1e-9 {
                continue;
            }
            let ys: Option<Vec<f64>> = runs
                .iter()
                .map(|r| r.get(j).filter(|(n, _)| n == name).map(|(_, e)| e.abs().log10()))
                .collect();
            let Some(ys) = ys else {
                same_support = false;
                continue;
            };
            let s = slope(&xs, &ys);
            lo = lo.min(s);
            hi = hi.max(s);
            count += 1;
        }
        c.check(
            format!("4: {} log-log slope", design.as_str()),
            same_support && count > 0 && lo >= 0.9 && hi <= 1.1,
            format!("{count} estimates, slopes in [{lo:.6}, {hi:.6}] (within [0.9, 1.1])"),
        );
    }
}

fn run_inference(d: &Draw, bandwidth: Bandwidth, first_stage: FirstStageKind) -> InferenceReport {
    let est = estimate(&d.ds, &d.path, &config(first_stage)).unwrap();
    let cfg = InferenceConfig {
        bandwidth,
        band_draws: 0,
        check_jacobian: true,
        ..InferenceConfig::default()
    };
    infer(&d.ds, &d.path, &est, &cfg, &Distance::Line(d.positions.clone())).unwrap()
}

fn plumbing(c: &mut Criterion) {
    let d = generate(&DgpConfig::new(Design::Dgp1, 500), SEED, 0).unwrap();
    let (mut jac, mut mom) = (0.0f64, 0.0f64);
    for kind in [FirstStageKind::Saturated, dose()] {
        let rep = run_inference(&d, Bandwidth::CubeRoot, kind);
        jac = jac.max(rep.system.jacobian_max_rel_err.unwrap());
        mom = mom.max(rep.system.max_abs_moment);
    }
    c.check("6: Jacobian vs finite differences", jac <= 1e-6, format!("max relative error {jac:.2e} (<= 1e-6)"));
    c.check("6: moments at the estimate", mom <= 1e-10, format!("max |mean moment| {mom:.2e} (<= 1e-10)"));

    let tiny = run_inference(&d, Bandwidth::Fixed(1e-9), dose());
    let n = tiny.n as f64;
    let direct = tiny.rows.transpose() * &tiny.rows / n;
    let gap = (&tiny.gamma - &direct).amax() / direct.amax();
    c.check(
        "6: b -> 0 is the self-pair sandwich",
        tiny.gamma == tiny.gamma_iid && gap <= 1e-12,
        format!("equal to iid covariance; relative gap to rows'rows/N {gap:.2e}"),
    );

    let rep = run_inference(&d, Bandwidth::CubeRoot, dose());
    let g = &rep.gamma;
    c.check("6: covariance symmetric", g == &g.transpose(), format!("{}x{} exact", g.nrows(), g.ncols()));
    let mut worst = 0.0f64;
    let mut count = 0;
    for (k, id) in rep.columns.iter().enumerate() {
        if id.component != Component::Dte {
            continue;
        }
        let find = |comp| {
            rep.columns
                .iter()
                .position(|x| x.component == comp && x.g == id.g && x.l == id.l && x.aggregate == id.aggregate)
                .unwrap()
        };
        let (a, b) = (find(Component::Dse), find(Component::Cse));
        let law = g[(a, a)] + g[(b, b)] + 2.0 * g[(a, b)];
        worst = worst.max((g[(k, k)] - law).abs() / g[(k, k)].abs().max(1.0));
        count += 1;
    }
    c.check(
        "6: DTE variance law",
        count > 0 && worst <= 1e-12,
        format!("{count} DTE columns, max relative gap {worst:.2e}"),
    );
}

fn collapse(c: &mut Criterion) {
    let mut cse_max = 0.0f64;
    let (mut dse_gap, mut pde_gap) = (0.0f64, 0.0f64);
    let (mut cells, mut pde_cells) = (0, 0);
    for design in Design::ALL {
        let d = generate(&DgpConfig::new(design, 500), SEED, 1).unwrap();
        let zero = d.path.zeroed();
        for kind in [FirstStageKind::Saturated, dose()] {
            let est = estimate(&d.ds, &zero, &config(kind)).unwrap();
            for cell in &est.cells {
                if let Some(v) = cell.cse.value {
                    cse_max = cse_max.max(v.abs());
                }
                if let (Some(a), Some(b)) = (cell.dse.value, cell.did.value) {
                    dse_gap = dse_gap.max((a - b).abs());
                    cells += 1;
                }
                if let (Some(a), Some(b)) = (cell.local_pde.value, cell.did.value) {
                    pde_gap = pde_gap.max((a - b).abs());
                    pde_cells += 1;
                }
            }
        }
    }
    c.check("7: CSE identically zero", cse_max == 0.0, format!("max |CSE| = {cse_max:e}"));
    c.check(
        "7: DSE equals standard DID",
        cells > 0 && dse_gap == 0.0,
        format!("{cells} cells, max gap {dse_gap:e}"),
    );
    c.check(
        "7: local PDE equals standard DID",
        pde_cells > 0 && pde_gap == 0.0,
        format!("{pde_cells} cells, max gap {pde_gap:e}"),
    );
}

fn read_dir(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(c: &mut Criterion) {
    let tmp = tempfile::tempdir().unwrap();
    let d = generate(&DgpConfig::new(Design::Dgp1, 300), SEED, 2).unwrap();
    let panel = tmp.path().join("panel.csv");
    staggerspill::panel_io::write_panel(&d.ds, &panel).unwrap();
    let run = |args: &[&str], out: &str| {
        let out = tmp.path().join(out);
        let mut argv: Vec<String> = vec!["staggerspill".into()];
        argv.extend(args.iter().map(|s| s.to_string()));
        argv.extend(["--threads".into(), "1".into(), "--out".into(), out.display().to_string()]);
        try_main(argv).unwrap();
        read_dir(&out)
    };
    let p = panel.display().to_string();
    for (name, args) in [
        ("estimate", vec!["estimate", "--panel", p.as_str()]),
        ("benchmark", vec!["benchmark", "--panel", p.as_str()]),
        ("exposure", vec!["exposure", "--panel", p.as_str()]),
        ("simulate", vec!["simulate", "--design", "dgp3", "--n", "200", "--reps", "40", "--keep-replications"]),
    ] {
        let a = run(&args, &format!("{name}-a"));
        let b = run(&args, &format!("{name}-b"));
        // run.json echoes the output directory, which differs by design.
        let strip = |v: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
            v.into_iter().filter(|(f, _)| f != "run.json").collect()
        };
        let files = a.len();
        c.check(
            format!("8: {name} artifacts"),
            files > 1 && strip(a) == strip(b),
            format!("{files} files compared byte for byte"),
        );
    }
    // Rerunning from a run record reproduces every artifact, run.json included.
    let first = tmp.path().join("estimate-a");
    let before = read_dir(&first);
    let rerun = tmp.path().join("rerun");
    std::fs::create_dir_all(&rerun).unwrap();
    let cfg = rerun.join("config.json");
    std::fs::copy(first.join("run.json"), &cfg).unwrap();
    let args = vec!["staggerspill".to_string(), "estimate".into(), "--config".into(), cfg.display().to_string()];
    let code = try_main(args).map_or_else(|e| e.kind.exit_code(), |_| 0);
    let again = read_dir(&first);
    c.check(
        "8: rerun from run.json",
        code == 0 && again == before,
        format!("exit {code}; {} files", again.len()),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut unexpected = Vec::new();
    let mut c = vec![];
    c.resize_with(8, Criterion::default);

    let reports = monte_carlo();
    println!("Monte Carlo: {} design-size cells, R = {REPS}, seed {SEED}, {:.1}s", reports.len(), start.elapsed().as_secs_f64());
    print!("{}", staggerspill_core::simulate::format_tables(&reports));
    let (c1, rest) = c.split_at_mut(1);
    proposed(&reports, &mut c1[0], &mut rest[0]);
    benchmarks(&reports, &mut c[2]);
    convergence(&mut c[3]);
    identities(&reports, &mut c[4]);
    plumbing(&mut c[5]);
    collapse(&mut c[6]);
    determinism(&mut c[7]);

    let titles = [
        "DGP1/DGP2: proposed bias, coverage and RMSE",
        "DGP3: proposed bias and coverage",
        "Benchmarks: deviation from the DTE target and coverage collapse",
        "Oracle convergence under shrinking noise",
        "Exact identities on every Monte Carlo draw",
        "Inference plumbing",
        "Collapse under zero exposure",
        "Determinism with one thread",
    ];
    println!();
    for (k, (crit, title)) in c.iter().zip(titles).enumerate() {
        report(k + 1, title, crit, &mut unexpected);
    }
    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
