use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::config::{Command, ExperimentConfig};
use crate::branches::{decay_rate, partition, partition_levels, DEFAULT_DEPTH_CAP};
use crate::dimension::{delta0, hd_curve, hd_estimate, pressure_sum, zero_run_count, PRESSURE_TOL};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, FamilyMap, IntervalMap, MapFamily, Side, DOMAIN};
use crate::geometry::{asymptotic_gap_fit, distortion_suite, estimate_constants, gap_records};
use crate::metric::{tilde_decay_rate, MetricChange, TildeMap};
use crate::point::{Pt, Span};
use crate::scaling::{asymmetry, gamma_recover, jump_at, scale_at, scaling_graph};
use crate::symbolic::DualPoint;

/// What a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
    pub exit_code: i32,
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    family: MapFamily,
    out_dir: &'a Path,
    artifacts: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn map(&self) -> Result<FamilyMap> {
        self.family.at(self.config.epsilon)
    }

    fn path(&self, fallback: &str) -> PathBuf {
        let name = self.config.output.clone().unwrap_or_else(|| fallback.to_string());
        let p = PathBuf::from(name);
        if p.is_absolute() {
            p
        } else {
            self.out_dir.join(p)
        }
    }

    fn create(&mut self, path: PathBuf) -> Result<BufWriter<File>> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let f = File::create(&path)?;
        self.artifacts.push(path);
        Ok(BufWriter::new(f))
    }

    fn write_json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        let mut w = self.create(path)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn points(&self, default: &[&str]) -> Result<Vec<DualPoint>> {
        match &self.config.points {
            Some(ps) => ps.iter().map(|p| p.parse()).collect(),
            None => default.iter().map(|p| p.parse()).collect(),
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed)
    }
}

/// Runs one experiment, writing artifacts under `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    config.validate()?;
    let mut ctx = Ctx { config, family: config.family.build()?, out_dir, artifacts: Vec::new() };
    let (summary, exit_code) = match config.command {
        Command::Partition => cmd_partition(&mut ctx)?,
        Command::ScalingGraph => cmd_scaling_graph(&mut ctx)?,
        Command::ScalingPoint => cmd_scaling_point(&mut ctx)?,
        Command::GapFit => cmd_gap_fit(&mut ctx)?,
        Command::DimensionCurve => cmd_dimension_curve(&mut ctx)?,
        Command::MetricCheck => cmd_metric_check(&mut ctx)?,
        Command::DistortionCheck => cmd_distortion_check(&mut ctx)?,
        Command::JumpReport => cmd_jump_report(&mut ctx)?,
        Command::Invariants => cmd_invariants(&mut ctx)?,
    };
    Ok(Outcome { summary, artifacts: ctx.artifacts, exit_code })
}

fn cmd_partition(ctx: &mut Ctx) -> Result<(String, i32)> {
    let map = ctx.map()?;
    let p = partition(&map, ctx.config.depth)?;
    let path = ctx.path(&Command::Partition.default_output());
    let mut w = ctx.create(path)?;
    p.write_csv(&mut w)?;
    w.flush()?;
    Ok((format!("partition: {} cylinders at depth {}, lambda={}", p.len(), p.depth, p.lambda), 0))
}

fn cmd_scaling_graph(ctx: &mut Ctx) -> Result<(String, i32)> {
    let map = ctx.map()?;
    let rows = scaling_graph(&map, ctx.config.depth)?;
    let path = ctx.path(&Command::ScalingGraph.default_output());
    let mut w = ctx.create(path)?;
    writeln!(w, "x_coord,word,s")?;
    for r in &rows {
        writeln!(w, "{},{},{}", r.x_coord, r.word, r.s)?;
    }
    w.flush()?;
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.s), b.max(r.s)));
    Ok((format!("scaling-graph: {} rows, s in [{lo}, {hi}]", rows.len()), 0))
}

fn cmd_scaling_point(ctx: &mut Ctx) -> Result<(String, i32)> {
    let map = ctx.map()?;
    let points = ctx.points(&["0^inf|.", "(1)^inf|.", "(01)^inf|."])?;
    let estimates = points.iter().map(|a| scale_at(&map, a, ctx.config.depth)).collect::<Result<Vec<_>>>()?;
    let path = ctx.path(&Command::ScalingPoint.default_output());
    ctx.write_json(path, &estimates)?;
    let bad = estimates.iter().filter(|e| e.non_convergent).count();
    let values: Vec<String> = estimates.iter().map(|e| format!("{}={}", e.dual_point, e.value)).collect();
    Ok((format!("scaling-point: {}", values.join(" ")), if bad > 0 { 2 } else { 0 }))
}

fn cmd_gap_fit(ctx: &mut Ctx) -> Result<(String, i32)> {
    let grid = ctx.config.epsilon_grid.clone().expect("validated");
    let family = ctx.family.clone();
    let fit = asymptotic_gap_fit(|e| family.at(e), family.gamma, &grid, ctx.config.depth)?;
    let path = ctx.path(&Command::GapFit.default_output());
    ctx.write_json(path, &fit)?;
    let band = fit.band_leading.1 / fit.band_leading.0;
    Ok((format!("gap-fit: slope={} (min {}, max {}), band ratio={band}", fit.slope_leading, fit.slope_min, fit.slope_max), 0))
}

fn cmd_dimension_curve(ctx: &mut Ctx) -> Result<(String, i32)> {
    let grid = ctx.config.epsilon_grid.clone().expect("validated");
    let curve = hd_curve(&ctx.family, &grid, ctx.config.depth)?;
    let csv = ctx.path(&Command::DimensionCurve.default_output());
    let report = csv.with_extension("json");
    let mut w = ctx.create(csv)?;
    writeln!(w, "epsilon,delta,bracket_lo,bracket_hi")?;
    for r in &curve.rows {
        writeln!(w, "{},{},{},{}", r.epsilon, r.delta, r.bracket.0, r.bracket.1)?;
    }
    w.flush()?;
    ctx.write_json(report, &curve)?;
    Ok((format!("dimension-curve: slope={} over {} values", curve.slope, curve.rows.len()), 0))
}

#[derive(Serialize)]
struct MetricReport {
    family: String,
    epsilon: f64,
    b: f64,
    round_trip_max_error: f64,
    tilde_deriv_max_relative_error: f64,
    conjugacy_max_error: Option<f64>,
    lambda_fit: f64,
    lambda_fit_tilde: f64,
}

fn cmd_metric_check(ctx: &mut Ctx) -> Result<(String, i32)> {
    let map = ctx.map()?;
    let tilde = TildeMap::new(&map)?;
    let m = &tilde.metric;
    let grid: Vec<f64> = (0..1000).map(|k| -1.0 + 2.0 * k as f64 / 999.0).collect();
    let mut round_trip = 0.0f64;
    for &x in &grid {
        round_trip = round_trip.max((m.h_inv(m.h(x)?)? - x).abs());
        round_trip = round_trip.max((m.h(m.h_inv(x)?)? - x).abs());
    }
    let mut deriv_err = 0.0f64;
    for &y in grid.iter().filter(|y| y.abs() > 0.01 && y.abs() < 0.99) {
        let d = 1e-5;
        let fd = (tilde.eval(y + d)? - tilde.eval(y - d)?) / (2.0 * d);
        deriv_err = deriv_err.max((tilde.deriv(y, None)? / fd - 1.0).abs());
    }
    let conjugacy = if matches!(map.family.kind, FamilyKind::Quadratic) && map.eps == 0.0 {
        let mut worst = 0.0f64;
        for &y in &grid {
            worst = worst.max((tilde.eval(y)? - (1.0 - 2.0 * y.abs())).abs());
        }
        Some(worst)
    } else {
        None
    };
    let n = ctx.config.depth.min(14);
    let report = MetricReport {
        family: map.family.label(),
        epsilon: map.eps,
        b: m.b,
        round_trip_max_error: round_trip,
        tilde_deriv_max_relative_error: deriv_err,
        conjugacy_max_error: conjugacy,
        lambda_fit: decay_rate(&map, n)?.lambda_fit,
        lambda_fit_tilde: tilde_decay_rate(&map, n)?.lambda_fit,
    };
    let path = ctx.path(&Command::MetricCheck.default_output());
    ctx.write_json(path, &report)?;
    let mut line = format!("metric-check: b={} round-trip={round_trip:e} deriv={deriv_err:e}", m.b);
    if let Some(c) = conjugacy {
        let _ = write!(line, " conjugacy={c:e}");
    }
    Ok((line, 0))
}

fn cmd_distortion_check(ctx: &mut Ctx) -> Result<(String, i32)> {
    let samples = ctx.config.samples.unwrap_or(10_000);
    let grid = ctx.config.epsilon_grid.clone().unwrap_or_else(|| vec![ctx.config.epsilon]);
    let max_len = ctx.config.depth.min(15);
    let mut rng = ctx.rng();
    let mut rows = Vec::with_capacity(grid.len());
    let mut failures = 0;
    for &eps in &grid {
        let map = ctx.family.at(eps)?;
        let consts = estimate_constants(&map, 64)?;
        let suite = distortion_suite(&map, &consts, samples, max_len, &mut rng)?;
        failures += 2 * samples - suite.pass_lemma - suite.pass_corollary;
        rows.push(json!({ "epsilon": eps, "constants": consts, "suite": suite }));
    }
    let path = ctx.path(&Command::DistortionCheck.default_output());
    ctx.write_json(path, &rows)?;
    Ok((
        format!("distortion-check: {} samples per value, {failures} bound violations", samples),
        if failures > 0 { 1 } else { 0 },
    ))
}

fn cmd_jump_report(ctx: &mut Ctx) -> Result<(String, i32)> {
    let map = ctx.map()?;
    let gamma = map.family.gamma;
    let depth = ctx.config.depth;
    let points = ctx.points(&["0^inf|.", "0^inf|1.", "0^inf|10."])?;
    let mut text = String::new();
    let _ = writeln!(text, "family {} epsilon {} depth {depth}", map.family.label(), map.eps);
    let mut unsettled = 0;
    for a in &points {
        let j = jump_at(&map, gamma, a, depth)?;
        unsettled += j.non_convergent as usize;
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| v.to_string());
        let _ = writeln!(text, "\npoint {}", j.dual_point);
        let _ = writeln!(text, "  s0          {}", j.s0);
        let _ = writeln!(text, "  b-side      {}", j.b_side_limit);
        let _ = writeln!(text, "  jump        {}", j.jump);
        let _ = writeln!(text, "  tau1        {}", opt(j.tau1));
        let _ = writeln!(text, "  tau2        {}", opt(j.tau2));
        let _ = writeln!(text, "  one-sided   {} {}", j.one_sided_limits.0, j.one_sided_limits.1);
        let _ = writeln!(text, "  near child  {}", j.near_child);
        let _ = writeln!(text, "  spread      {:e}{}", j.cauchy_spread, if j.non_convergent { " (not settled)" } else { "" });
    }
    if map.eps == 0.0 && gamma > 1.0 {
        match gamma_recover(&map, depth.max(12)) {
            Ok(g) => {
                let _ = writeln!(text, "\ngamma recovered {} (s_a {}, s_b {})", g.gamma, g.s_a, g.s_b);
            }
            Err(e) => {
                let _ = writeln!(text, "\ngamma recovery failed: {e}");
            }
        }
    }
    if let Ok(a) = asymmetry(&map, depth.max(8)) {
        let _ = writeln!(text, "asymmetry {} (spread {:e})", a.value, a.cauchy_spread);
    }
    let path = ctx.path(&Command::JumpReport.default_output());
    let mut w = ctx.create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok((
        format!("jump-report: {} points, {unsettled} not settled", points.len()),
        if unsettled > 0 { 2 } else { 0 },
    ))
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn cmd_invariants(ctx: &mut Ctx) -> Result<(String, i32)> {
    let map = ctx.map()?;
    let depth = ctx.config.depth.min(10);
    let mut rng = ctx.rng();
    let mut checks = Vec::new();

    let levels = partition_levels(&map, depth, DEFAULT_DEPTH_CAP)?;
    let records = gap_records(&levels, depth, Span::whole(map.domain()));
    let worst = records
        .iter()
        .map(|r| (r.gap_ratio + r.child_ratios.0 + r.child_ratios.1 - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(check("additivity", worst <= 1e-12, format!("max deviation {worst:e}")));

    let mut nested = true;
    let mut oriented = true;
    for n in 1..=depth {
        for c in levels[n].cylinders() {
            let parent = levels[n - 1].spans[(c.word.code() >> 1) as usize];
            nested &= parent.contains(&c.span.lo, 1e-15) && parent.contains(&c.span.hi, 1e-15);
        }
        for p in levels[n - 1].cylinders() {
            let code = (p.word.code() << 1) as usize;
            let (c0, c1) = (levels[n].spans[code], levels[n].spans[code + 1]);
            oriented &= (c1.lo.diff(&c0.lo) > 0.0) == (p.orientation > 0);
        }
    }
    checks.push(check("nesting", nested, format!("levels 0..={depth}")));
    checks.push(check("orientation", oriented, "child order follows the branch parity".into()));

    let lambdas: Vec<f64> = levels.iter().map(|p| p.lambda).collect();
    let decreasing = lambdas.windows(2).all(|w| w[1] < w[0]);
    checks.push(check("lambda-decreasing", decreasing, format!("lambda_{depth}={}", lambdas[depth])));

    let p = &levels[depth];
    let sums: Vec<f64> = (1..=15).map(|k| pressure_sum(p, 0.1 * k as f64)).collect();
    checks.push(check("pressure-monotone", sums.windows(2).all(|w| w[1] < w[0]), "delta in 0.1..1.5".into()));

    let mut in_unit = true;
    let mut tent_exact = 0.0f64;
    for _ in 0..100 {
        let a = DualPoint::random_truncated(&mut rng, depth + 1);
        let s = scale_at(&map, &a, depth)?;
        in_unit &= s.approximants.iter().all(|v| *v > 0.0 && *v < 1.0);
        if map.family.kind == FamilyKind::Tent {
            let exact = 1.0 / (2.0 + map.eps);
            tent_exact = s.approximants.iter().fold(tent_exact, |m, v| m.max((v - exact).abs()));
        }
    }
    checks.push(check("scaling-in-unit-interval", in_unit, "100 random dual points".into()));

    let hd = hd_estimate(&map, depth.max(6))?;
    let hd_ok = hd.delta > 0.0 && hd.delta <= 1.0 && hd.residual.abs() <= PRESSURE_TOL;
    checks.push(check("dimension-range", hd_ok, format!("delta={} residual={:e}", hd.delta, hd.residual)));

    if map.family.kind == FamilyKind::Tent {
        checks.push(check("tent-uniform-scaling", tent_exact <= 1e-12, format!("max deviation {tent_exact:e}")));
        let moran = hd_estimate(&map, 14)?;
        let exact = 2f64.ln() / (2.0 + map.eps).ln();
        let err = (moran.delta - exact).abs();
        checks.push(check("moran", err <= 1e-6, format!("delta={} exact={exact}", moran.delta)));
    } else if map.family.gamma > 1.0 {
        let m = MetricChange::new(map.family.gamma, map.eps)?;
        let mut worst = 0.0f64;
        for k in 0..1000 {
            let x = -1.0 + 2.0 * k as f64 / 999.0;
            worst = worst.max((m.h(m.h_inv(x)?)? - x).abs());
        }
        checks.push(check("metric-round-trip", worst <= 1e-10, format!("max error {worst:e}")));
        let t = TildeMap::new(&map)?;
        let (l, r) = (t.deriv(0.0, Some(Side::Left))?, t.deriv(0.0, Some(Side::Right))?);
        let h = m.h_pt(Pt::from_x(-1e-9, DOMAIN)).x;
        let near = t.deriv(h, None)?;
        checks.push(check(
            "tilde-corner",
            l > 0.0 && r < 0.0 && (near / l - 1.0).abs() < 1e-6,
            format!("left {l} right {r}"),
        ));
    }

    let mut zr = true;
    for n in 1..=16usize {
        let brute = (0u32..1 << n)
            .filter(|s| {
                let mut run = 0;
                (0..n).all(|k| {
                    run = if s >> k & 1 == 0 { run + 1 } else { 0 };
                    run < 3
                })
            })
            .count() as u64;
        zr &= zero_run_count(n, 3)? == brute;
    }
    checks.push(check("zero-run-count", zr, "n <= 16 against enumeration".into()));

    let mut d0 = 0.0f64;
    for _ in 0..100 {
        let c6: f64 = rng.random_range(0.0..5.0);
        let eps: f64 = rng.random_range(0.0..1.0);
        let q = c6 * eps.sqrt();
        if q >= 0.999 {
            continue;
        }
        let d = delta0(eps, c6)?;
        d0 = d0.max((2.0 * ((1.0 - q) / 2.0).powf(d) - 1.0).abs());
    }
    checks.push(check("delta0-identity", d0 <= 1e-12, format!("max deviation {d0:e}")));

    let passed = checks.iter().filter(|c| c.pass).count();
    let total = checks.len();
    let path = ctx.path(&Command::Invariants.default_output());
    ctx.write_json(path, &json!({ "family": map.family.label(), "epsilon": map.eps, "checks": checks }))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let mut line = format!("invariants: {passed}/{total} pass");
    if !failed.is_empty() {
        let _ = write!(line, " (failed: {})", failed.join(", "));
    }
    Ok((line, if passed == total { 0 } else { 1 }))
}
