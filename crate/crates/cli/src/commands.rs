use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use scanstat::eps::{
    covering_len, covering_verify, enumerate_covering, epsilon_adaptive_scan, CoveringParams,
};
use scanstat::field::{inject_signal, white_noise, Rect, SignalSpec};
use scanstat::harness::{
    bench_epsilon, qq_pvalues, run_experiment, run_null, run_power, ExperimentConfig, MCResult,
    ScannerSpec,
};
use scanstat::io::{read_field, write_field, FieldFormat};
use scanstat::prefix::PrefixSumTable;
use scanstat::rng::{derive_seed, seeded, stream};
use scanstat::scan::{oracle_scan_table, ShapeScan};
use scanstat::threshold::{max_upper_shape, ShapeRange};

use crate::args::{BenchArgs, CoverArgs, FileFormat, GenArgs, McArgs, Method, ScanArgs};
use crate::{CliError, CliResult};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `34x38` into `[34, 38]`.
fn parse_tuple(s: &str, what: &str) -> CliResult<Vec<usize>> {
    s.split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("{what} must look like 34x38, got '{s}'")))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|_| usage(format!("bad {what} '{p}'"))))
        .collect()
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn gen(a: GenArgs) -> CliResult<()> {
    if a.n == 0 || a.d == 0 {
        return Err(usage("--n and --d must be at least 1"));
    }
    if !(a.mu.is_finite() && a.mu >= 0.0) {
        return Err(usage(format!("--mu must be >= 0, got {}", a.mu)));
    }
    let dims = vec![a.n; a.d];
    let shape = a.shape.as_deref().map(|s| parse_tuple(s, "--shape")).transpose()?;
    if a.mu > 0.0 && shape.is_none() {
        return Err(usage("--mu > 0 needs --shape"));
    }
    let format = match a.format {
        Some(FileFormat::Gf01) => FieldFormat::Gf01,
        Some(FileFormat::Csv) => FieldFormat::Csv,
        None => FieldFormat::from_path(&a.out),
    };
    if format == FieldFormat::Csv && a.d != 2 {
        return Err(usage("CSV output holds 2-d fields only"));
    }
    let rect = match &shape {
        None => None,
        Some(shape) => {
            if shape.len() != a.d || shape.iter().any(|&h| h == 0 || h > a.n) {
                return Err(usage(format!("--shape {shape:?} does not fit a {}-d grid of side {}", a.d, a.n)));
            }
            let rect = if a.anchor == "random" {
                let mut rng = seeded(derive_seed(a.seed, 0, stream::ANCHOR));
                Rect::random_anchor(&mut rng, &dims, shape).map_err(|e| usage(e.to_string()))?
            } else {
                Rect::new(parse_tuple(&a.anchor, "--anchor")?, shape.clone()).map_err(|e| usage(e.to_string()))?
            };
            rect.check_fits(&dims).map_err(|e| usage(e.to_string()))?;
            Some(rect)
        }
    };

    let mut field = white_noise(&dims, a.seed)?;
    if let Some(r) = &rect {
        field = inject_signal(&field, &SignalSpec::new(r.clone(), a.mu)?)?;
    }
    write_field(&field, &a.out, format)?;
    print_json(&json!({
        "path": a.out.display().to_string(),
        "format": if format == FieldFormat::Csv { "csv" } else { "gf01" },
        "dims": dims,
        "seed": a.seed,
        "mu": a.mu,
        "signal": rect,
    }))
}

pub fn scan(a: ScanArgs) -> CliResult<()> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let ranged = a.method != Method::Oracle;
    if ranged && a.hstar.is_some() {
        return Err(usage("--hstar applies to --method oracle only"));
    }
    if !ranged && (a.hlo.is_some() || a.hhi.is_some()) {
        return Err(usage("--method oracle takes --hstar, not --hlo/--hhi"));
    }
    if a.eps.is_some() != (a.method == Method::Eps) {
        return Err(usage("--eps goes with --method eps, and only there"));
    }
    let hstar = match (a.method, &a.hstar) {
        (Method::Oracle, Some(s)) => Some(parse_tuple(s, "--hstar")?),
        (Method::Oracle, None) => return Err(usage("--method oracle needs --hstar")),
        _ => None,
    };
    if ranged && a.hlo.is_none() {
        return Err(usage("this method needs --hlo"));
    }

    let field = read_field(&a.input)?;
    let n = field.cubic_side()?;
    let table = PrefixSumTable::new(&field);
    let range = match a.hlo {
        Some(lo) => Some(ShapeRange::new(lo, a.hhi.unwrap_or_else(|| max_upper_shape(n)))?),
        None => None,
    };

    let mut outcome = match a.method {
        Method::Oracle => oracle_scan_table(&table, hstar.as_deref().expect("checked"))?,
        Method::Multi => ShapeScan::new(&table, range.expect("checked"))?.multiscale()?,
        Method::Adaptive => ShapeScan::new(&table, range.expect("checked"))?.adaptive()?,
        Method::Eps => epsilon_adaptive_scan(&field, range.expect("checked"), a.eps.expect("checked"))?,
        Method::Modified => {
            let m = ShapeScan::new(&table, range.expect("checked"))?.modified()?;
            return print_json(&json!({
                "kind": "modified",
                "stat": m.stat,
                "best_rect": m.best_rect,
            }));
        }
    };
    if !a.per_shape {
        outcome.per_shape = None;
    }
    let reject = outcome.reject(a.alpha);
    let mut value = serde_json::to_value(&outcome)?;
    value["alpha"] = json!(a.alpha);
    value["reject"] = json!(reject);
    print_json(&value)
}

pub fn cover(a: CoverArgs) -> CliResult<()> {
    let range = ShapeRange::new(a.hlo, a.hhi).map_err(|e| usage(e.to_string()))?;
    range.check_fits(a.n).map_err(|e| usage(e.to_string()))?;
    if a.d == 0 {
        return Err(usage("--d must be at least 1"));
    }
    let params = CoveringParams::new(a.eps, a.d, range).map_err(|e| usage(e.to_string()))?;
    params.a_top(a.n).map_err(|e| usage(e.to_string()))?;

    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = ["a", "f", "t"]
            .iter()
            .flat_map(|p| (0..a.d).map(move |j| format!("{p}_{j}")))
            .collect();
        w.write_record(&header)?;
        for e in enumerate_covering(a.n, range, &params)? {
            w.write_record(e.a.iter().chain(&e.f).chain(&e.t).map(|x| x.to_string()))?;
        }
        w.flush()?;
    }
    if a.verify {
        let rep = covering_verify(a.n, range, &params, a.trials, a.seed)?;
        eprintln!(
            "{}: max min delta {:.6} over {} rectangles (eps = {})",
            if rep.pass { "PASS" } else { "FAIL" },
            rep.max_min_delta,
            rep.trials,
            rep.eps
        );
        let mut value = serde_json::to_value(&rep)?;
        value["status"] = json!(if rep.pass { "PASS" } else { "FAIL" });
        print_json(&value)
    } else {
        print_json(&json!({
            "n": a.n,
            "d": a.d,
            "eps": a.eps,
            "a_lo": params.a_lo,
            "a_hi": params.a_top(a.n)?,
            "f_max": params.f_max,
            "elements": covering_len(a.n, &params)?.to_string(),
        }))
    }
}

#[derive(Serialize)]
struct RateRow<'a> {
    scanner: &'a str,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    power: Option<f64>,
}

#[derive(Serialize)]
struct RocRow<'a> {
    scanner: &'a str,
    tau: f64,
    fpr: f64,
    tpr: f64,
}

#[derive(Serialize)]
struct QqRow<'a> {
    scanner: &'a str,
    u_quantile: f64,
    p_quantile: f64,
}

fn write_mc_outputs(res: &MCResult, out: &Path) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    let names: Vec<String> = res.scanners.iter().map(|s| s.scanner.to_string()).collect();
    let mut size = Vec::new();
    let mut power = Vec::new();
    let mut roc = Vec::new();
    let mut qq = Vec::new();
    for (s, name) in res.scanners.iter().zip(&names) {
        size.extend(s.size.iter().map(|r| RateRow { scanner: name, alpha: r.alpha, size: Some(r.rate), power: None }));
        power.extend(s.power.iter().map(|r| RateRow { scanner: name, alpha: r.alpha, size: None, power: Some(r.rate) }));
        roc.extend(s.roc.iter().map(|p| RocRow { scanner: name, tau: p.threshold, fpr: p.fpr, tpr: p.tpr }));
        if let Some(p) = s.null.as_ref().and_then(|n| n.pvalues.as_ref()) {
            qq.extend(qq_pvalues(p)?.into_iter().map(|q| QqRow {
                scanner: name,
                u_quantile: q.u_quantile,
                p_quantile: q.p_quantile,
            }));
        }
    }
    let has_null = res.scanners.iter().any(|s| s.null.is_some());
    let has_alt = res.scanners.iter().any(|s| s.alt.is_some());
    let mut emit = |file: &str, write: &dyn Fn(&Path) -> CliResult<()>| -> CliResult<()> {
        let p = out.join(file);
        write(&p)?;
        written.push(p.display().to_string());
        Ok(())
    };
    if has_null {
        emit("size.csv", &|p| write_csv_rows(p, &size))?;
        emit("qq.csv", &|p| write_csv_rows(p, &qq))?;
    }
    if has_alt {
        emit("power.csv", &|p| write_csv_rows(p, &power))?;
    }
    if has_null && has_alt {
        emit("roc.csv", &|p| write_csv_rows(p, &roc))?;
    }
    Ok(written)
}

pub fn mc(a: McArgs, threads: usize) -> CliResult<()> {
    let scanners: Vec<ScannerSpec> = parse_list(&a.scanners, "scanner")?;
    let alpha_grid: Vec<f64> = parse_list(&a.alphas, "level")?;
    let signal_shape = a.shape.as_deref().map(|s| parse_tuple(s, "--shape")).transpose()?;
    let (do_null, do_alt) = match (a.null, a.power) {
        (false, false) => (true, true),
        flags => flags,
    };
    if do_alt && signal_shape.is_none() {
        return Err(usage("power simulations need --shape"));
    }
    let cfg = ExperimentConfig {
        n: a.n,
        d: a.d,
        h_lo: a.hlo,
        h_hi: a.hhi.unwrap_or_else(|| max_upper_shape(a.n)),
        mu: a.mu,
        signal_shape,
        reps: a.reps,
        seed: a.seed,
        scanners,
        alpha_grid,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&a.out)?;

    let start = Instant::now();
    let res = match (do_null, do_alt) {
        (true, true) => run_experiment(&cfg)?,
        (true, false) => run_null(&cfg)?,
        _ => run_power(&cfg)?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    let files = write_mc_outputs(&res, &a.out)?;

    let scanners: Vec<_> = res
        .scanners
        .iter()
        .map(|s| {
            json!({
                "scanner": s.scanner.to_string(),
                "size": s.size,
                "power": s.power,
                "auc": s.auc,
            })
        })
        .collect();
    let summary = json!({
        "config": res.config,
        "scanners": scanners,
        "files": files,
        "run": {
            "tool": concat!("scanstat ", env!("CARGO_PKG_VERSION")),
            "started_unix": SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs().saturating_sub(elapsed as u64))
                .unwrap_or(0),
            "elapsed_s": elapsed,
            "threads": if threads == 0 { rayon::current_num_threads() } else { threads },
        },
    });
    let path = a.out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
    for s in &res.scanners {
        let rates: Vec<String> = s
            .size
            .iter()
            .map(|r| format!("size@{}={:.4}", r.alpha, r.rate))
            .chain(s.power.iter().map(|r| format!("power@{}={:.4}", r.alpha, r.rate)))
            .collect();
        eprintln!("{:<12} {} auc={:?}", s.scanner.to_string(), rates.join(" "), s.auc);
    }
    print_json(&summary)
}

pub fn bench(a: BenchArgs) -> CliResult<()> {
    let eps_list: Vec<f64> = parse_list(&a.eps_list, "epsilon")?;
    if eps_list.is_empty() {
        return Err(usage("--eps-list is empty"));
    }
    let cfg = ExperimentConfig {
        n: a.n,
        d: a.d,
        h_lo: a.hlo,
        h_hi: a.hhi,
        mu: 0.0,
        signal_shape: None,
        reps: a.reps,
        seed: a.seed,
        scanners: eps_list.iter().map(|&eps| ScannerSpec::Epsilon { eps }).collect(),
        alpha_grid: Vec::new(),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&a.out)?;
    let records = bench_epsilon(&cfg, &eps_list)?;

    #[derive(Serialize)]
    struct BenchRow {
        eps: f64,
        median_s: f64,
        p5_s: f64,
        p95_s: f64,
        op_count: u64,
    }
    let rows: Vec<BenchRow> = records
        .iter()
        .map(|r| BenchRow {
            eps: r.eps,
            median_s: r.median_s,
            p5_s: r.p5_s,
            p95_s: r.p95_s,
            op_count: r.op_count,
        })
        .collect();
    let path = a.out.join("bench.csv");
    write_csv_rows(&path, &rows)?;
    for r in &records {
        eprintln!("eps {:<6} median {:.4}s  ops {}", r.eps, r.median_s, r.op_count);
    }
    print_json(&json!({ "file": path.display().to_string(), "records": records }))
}
