use std::fs;

use serde::Serialize;

use rfkde::config::ConfigFile;
use rfkde::harness::{self, lemma1_check, Lemma1Table, RegimeReport};
use rfkde::lattice::sample_with_budget;
use rfkde::mixing::{block_scale, dedecker_condition, lemma2_limits, series_condition, BlockScale, DedeckerReport, Lemma2Table, SeriesReport};
use rfkde::{density_estimate, CltReport, Error};

use crate::output::{Manifest, RunDir};
use crate::{CommonArgs, Failure};

struct Loaded {
    text: String,
    config: ConfigFile,
}

impl Loaded {
    fn fail(&self, err: Error) -> Failure {
        Failure::from_error(err, Some(&self.text))
    }
}

fn load(args: &CommonArgs) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Runtime(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config = ConfigFile::from_json(&text).map_err(|e| Failure::from_error(e, Some(&text)))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(Loaded { text, config })
}

fn out_dir(args: &CommonArgs) -> Result<RunDir, Failure> {
    let path = args
        .out
        .as_ref()
        .ok_or_else(|| Failure::Config { message: "--out is required".into(), path: None, line: None })?;
    RunDir::create(path)
}

fn threaded<T: Send>(args: &CommonArgs, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    harness::with_threads(args.threads, f).map_err(|e| Failure::from_error(e, None))
}

/// Moves a config error reported under `from` to the section it came from.
fn rebase(err: Error, from: &str, to: &str) -> Error {
    match err {
        Error::Config { path, message } if path.starts_with(from) => Error::Config {
            path: format!("{to}{}", &path[from.len()..]),
            message,
        },
        e => e,
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

#[derive(Serialize)]
struct SimulatePlan {
    sites: usize,
    seed: u64,
}

pub fn simulate(args: &CommonArgs) -> Result<(), Failure> {
    let ld = load(args)?;
    let (model, window) = ld.config.field().map_err(|e| ld.fail(e))?;
    // validate the estimator sections too when present
    if ld.config.kernel.is_some() || ld.config.bandwidth.is_some() {
        ld.config.experiment().map_err(|e| ld.fail(e))?;
    }
    if args.dry_run {
        print_json(&SimulatePlan { sites: window.site_count(), seed: ld.config.seed });
        return Ok(());
    }
    let budget = ld.config.memory_budget_bytes.map(u128::from).unwrap_or(rfkde::lattice::DEFAULT_MEMORY_BUDGET);
    let sample = threaded(args, || sample_with_budget(&model, &window, ld.config.seed, budget))?.map_err(|e| ld.fail(e))?;
    let mut dir = out_dir(args)?;
    sample.write_csv(dir.writer("sample.csv")?).map_err(|e| ld.fail(e))?;
    dir.finish(Manifest::new("simulate", &ld.config, args.threads))
}

#[derive(Serialize)]
struct EstimateSummary {
    points: usize,
    bandwidth: f64,
    min_value: f64,
    trapezoid_mass: f64,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

pub fn estimate(args: &CommonArgs) -> Result<(), Failure> {
    let ld = load(args)?;
    let exp = ld.config.experiment().map_err(|e| ld.fail(e))?;
    let points = ld.config.estimate_points().map_err(|e| ld.fail(e))?;
    if args.dry_run {
        print_json(&SimulatePlan { sites: exp.window().site_count(), seed: exp.seed() });
        return Ok(());
    }
    let est = threaded(args, || {
        let s = sample_with_budget(exp.model(), exp.window(), exp.seed(), exp.memory_budget())?;
        density_estimate(&s, exp.kernel(), exp.bandwidth(), &points)
    })?
    .map_err(|e| ld.fail(e))?;
    let summary = EstimateSummary {
        points: est.points.len(),
        bandwidth: est.bandwidth,
        min_value: est.values.iter().copied().fold(f64::INFINITY, f64::min),
        trapezoid_mass: trapezoid(&est.points, &est.values),
    };
    let mut dir = out_dir(args)?;
    est.write_csv(dir.writer("estimate.csv")?).map_err(|e| ld.fail(e))?;
    let mut manifest = Manifest::new("estimate", &ld.config, args.threads);
    manifest.checks.insert("nonnegative".into(), est.values.iter().all(|&v| v >= 0.0));
    dir.finish(manifest)?;
    print_json(&summary);
    Ok(())
}

#[derive(Serialize)]
struct CltOutput<'a> {
    passed: bool,
    clt: &'a CltReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    lemma1: Option<&'a Lemma1Gate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regime: Option<&'a RegimeReport>,
    config: &'a ConfigFile,
}

#[derive(Serialize)]
struct Lemma1Gate {
    table: Lemma1Table,
    eta_rel_tol: f64,
    eta_passed: bool,
    passed: bool,
}

pub fn clt(args: &CommonArgs) -> Result<(), Failure> {
    let ld = load(args)?;
    let exp = ld.config.experiment().map_err(|e| ld.fail(e))?;
    exp.check_for_clt().map_err(|e| ld.fail(e))?;
    let lemma1 = ld.config.lemma1.as_ref();
    let regime = ld.config.regime_sweep.as_ref();
    if let Some(r) = regime {
        for (i, &beta) in r.betas.iter().enumerate() {
            rfkde::BandwidthSchedule::new(1.0, beta, exp.window().d as u32)
                .map_err(|e| ld.fail(rebase(e, "bandwidth.schedule.beta", &format!("regime_sweep.betas.{i}"))))?;
        }
    }
    if args.dry_run {
        print_json(&harness::plan(&exp).map_err(|e| ld.fail(e))?);
        return Ok(());
    }
    let mut dir = out_dir(args)?;
    let (report, reps, lemma1_gate, regime_report) = threaded(args, || -> rfkde::Result<_> {
        let (report, reps) = harness::run_clt(&exp)?;
        let lemma1_gate = match lemma1 {
            Some(sec) => {
                let table = lemma1_check(&exp, &sec.fluctuation, &sec.bandwidths, &sec.lags)?;
                let smallest = table.rows.iter().min_by(|a, b| a.b.total_cmp(&b.b));
                let eta_passed = smallest.is_some_and(|r| r.rel_error < sec.eta_rel_tol);
                let ratio_ok = sec.lags.is_empty() || table.ratio_bounded;
                Some(Lemma1Gate {
                    passed: eta_passed && ratio_ok && table.delta_bound_holds,
                    table,
                    eta_rel_tol: sec.eta_rel_tol,
                    eta_passed,
                })
            }
            None => None,
        };
        let regime_report = match regime {
            Some(r) => Some(harness::bandwidth_regime_sweep(&exp, &r.betas)?),
            None => None,
        };
        Ok((report, reps, lemma1_gate, regime_report))
    })?
    .map_err(|e| ld.fail(e))?;
    reps.write_csv(dir.writer("replicates.csv")?).map_err(|e| ld.fail(e))?;
    let regime_passed = regime_report.as_ref().is_none_or(|r| r.rows.iter().all(|row| row.report.passed));
    let lemma1_passed = lemma1_gate.as_ref().is_none_or(|g| g.passed);
    let passed = report.passed && lemma1_passed && regime_passed;
    dir.write_json(
        "report.json",
        &CltOutput {
            passed,
            clt: &report,
            lemma1: lemma1_gate.as_ref(),
            regime: regime_report.as_ref(),
            config: &ld.config,
        },
    )?;
    let mut manifest = Manifest::new("clt", &ld.config, args.threads);
    for p in &report.points {
        manifest.checks.insert(format!("ks[x={}]", p.x), p.ks_passed);
        manifest.checks.insert(format!("variance[x={}]", p.x), p.variance.passed);
        manifest.checks.insert(format!("degenerate[x={}]", p.x), p.degenerate_passed);
    }
    if let Some(c) = &report.covariance {
        manifest.checks.insert("diagonal".into(), c.passed);
    }
    if lemma1_gate.is_some() {
        manifest.checks.insert("lemma1".into(), lemma1_passed);
    }
    if regime_report.is_some() {
        manifest.checks.insert("regime_sweep".into(), regime_passed);
    }
    dir.finish(manifest)?;
    for p in &report.points {
        println!(
            "x={} ks={:.4} (< {:.4}) p={:.3} var={:.5} target={:.5} degenerate={}",
            p.x, p.ks.distance, p.ks_threshold, p.ks.p_value, p.variance.estimate, p.limit_variance, p.degenerate_replicates
        );
    }
    if let Some(c) = &report.covariance {
        println!("max |corr| = {:.4} (< {:.4})", c.check.max_abs_off_diagonal, c.threshold);
    }
    if passed {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Check("one or more gates failed; see report.json".into()))
    }
}

#[derive(Serialize)]
struct BlockRow {
    b: f64,
    #[serde(flatten)]
    scale: BlockScale,
}

#[derive(Serialize)]
struct MixingOutput {
    series: SeriesReport,
    block_scale: Vec<BlockRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lemma2: Option<Lemma2Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lemma2_trends_hold: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dedecker: Option<DedeckerReport>,
    /// Why the block scale and its limits were skipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped: Option<String>,
}

pub fn mixing(args: &CommonArgs) -> Result<(), Failure> {
    let ld = load(args)?;
    let sec = ld.config.mixing_section().map_err(|e| ld.fail(e))?;
    if sec.d == 0 {
        return Err(ld.fail(Error::config("mixing.d", "dimension must be at least 1")));
    }
    let sched = match sec.schedule {
        Some(s) => {
            let s = s.with_dim(sec.d);
            s.check().map_err(|e| ld.fail(rebase(e, "bandwidth.schedule", "mixing.schedule")))?;
            Some(s)
        }
        None => None,
    };
    for (i, &b) in sec.bandwidths.iter().enumerate() {
        if !(b > 0.0 && b < 1.0) {
            return Err(ld.fail(Error::config(format!("mixing.bandwidths.{i}"), format!("bandwidth must lie in (0, 1), got {b}"))));
        }
    }
    if args.dry_run {
        print_json(&serde_json::json!({"bandwidths": sec.bandwidths.len(), "n_grid": sec.n_grid.len()}));
        return Ok(());
    }
    let series = series_condition(&sec.sequence, sec.d);
    let dedecker = match &sec.distribution {
        Some(dist) => Some(dedecker_condition(&sec.sequence, sec.d, dist).map_err(|e| ld.fail(e))?),
        None => None,
    };
    let mut out = MixingOutput {
        series,
        block_scale: Vec::new(),
        lemma2: None,
        lemma2_trends_hold: None,
        dedecker,
        skipped: None,
    };
    if series.verdict == rfkde::Verdict::Diverges {
        out.skipped = Some("psi is infinite for a divergent mixing series".into());
    } else {
        for &b in &sec.bandwidths {
            out.block_scale.push(BlockRow {
                b,
                scale: block_scale(&sec.sequence, sec.d, b).map_err(|e| ld.fail(e))?,
            });
        }
        if let Some(s) = sched {
            if !sec.n_grid.is_empty() {
                let t = lemma2_limits(&sec.sequence, &s, &sec.n_grid).map_err(|e| ld.fail(e))?;
                out.lemma2_trends_hold = Some(t.trends_hold());
                out.lemma2 = Some(t);
            }
        }
    }
    let converges = out.series.verdict == rfkde::Verdict::Converges;
    if let Some(path) = &args.out {
        let mut dir = RunDir::create(path)?;
        dir.write_json("mixing.json", &out)?;
        if let Some(t) = &out.lemma2 {
            t.write_csv(dir.writer("lemma2.csv")?).map_err(|e| ld.fail(e))?;
        }
        let mut manifest = Manifest::new("mixing", &ld.config, args.threads);
        manifest.checks.insert("series_converges".into(), converges);
        if let Some(h) = out.lemma2_trends_hold {
            manifest.checks.insert("lemma2_trends".into(), h);
        }
        dir.finish(manifest)?;
    }
    print_json(&out);
    if converges && out.lemma2_trends_hold != Some(false) {
        Ok(())
    } else {
        Err(Failure::Check(format!("mixing series verdict {:?}", out.series.verdict)))
    }
}
