//! Command-line orchestration: stages, on-disk caches, the run manifest and reports.
//!
//! Every stage reads its inputs from files written by earlier stages in the
//! output directory, so a stage can be rerun on its own against a warm cache.
//! JSON outputs carry the scenario hash as a top-level field and CSV outputs
//! as a leading `# scenario_hash=` line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::approx::{
    poly_distance, rational_bounds_constants, rational_distance, spread_check, uniform_grid, PolyFit, RationalBounds,
    RationalFit, SpreadSet, SpreadVerdict,
};
use crate::charts::{build_unstable_chart, Chart};
use crate::compat::{
    build_joint_surface, build_stable_chart, compat_jets, monomials, tangency_table, whitney_cross_extend,
    CompatReport, CrossData, TangencyRow,
};
use crate::error::{Error, Result};
use crate::models::{load_scenario, Grids, Scenario};
use crate::nform::{build_leaf_param, transported_leaf, Bundle, LeafParam};
use crate::qni::{
    estimate_holonomy_holder, qni_scan, qni_symmetry_check, Direction, HolderFit, LeafSources, QniConfig, QniReport,
    QniVerdict, SampledCurve, SymmetryCheck,
};
use crate::splitting::{
    cache_file_name, lyapunov_exponents, read_orbit_cache, write_orbit_cache, Exponents, OrbitSegment, SplittingFrame,
    MAX_POWER,
};
use crate::templates::{
    classify_template, degree_bound, extract_template, improve_from_verdict, s_grid, symmetric_grid,
    template_law_residual, DegreeBound, DichotomyVerdict, Template, TemplateSampler, Verdict,
};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.txt";
const CHART: &str = "chart.json";
const CHART_FINAL: &str = "chart-final.json";
const TEMPLATES: &str = "templates.json";
const QNI: &str = "qni.json";

#[derive(Parser, Debug)]
#[command(name = "phcharts", version, about = "Normal forms, good charts, templates and QNI diagnostics")]
pub struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Output directory; overrides the scenario's `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for jittered QNI grids; uniform grids when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    Splitting,
    Nform,
    Chart,
    Template,
    Approx,
    Qni(QniArgs),
    Compat,
    /// Run a list of stages, all of them by default.
    Run {
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
        #[command(flatten)]
        qni: QniArgs,
    },
    /// Summarize the manifest in the output directory and write plot data.
    Report,
}

#[derive(Args, Debug, Default, Clone)]
pub struct QniArgs {
    #[arg(long = "V")]
    pub v: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub kmin: Option<usize>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub samples_per_scale: Option<usize>,
}

impl QniArgs {
    pub fn apply(&self, scenario: &mut Scenario) -> Result<()> {
        let g = &mut scenario.grids;
        g.v = self.v.unwrap_or(g.v);
        g.nu = self.nu.unwrap_or(g.nu);
        g.k_min = self.kmin.unwrap_or(g.k_min);
        g.k_max = self.kmax.unwrap_or(g.k_max);
        g.samples_per_scale = self.samples_per_scale.unwrap_or(g.samples_per_scale);
        scenario.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Splitting,
    Nform,
    Charts,
    Templates,
    Approx,
    Qni,
    Compat,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Splitting, Stage::Nform, Stage::Charts, Stage::Templates, Stage::Approx, Stage::Qni, Stage::Compat];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Splitting => "splitting",
            Stage::Nform => "nform",
            Stage::Charts => "charts",
            Stage::Templates => "templates",
            Stage::Approx => "approx",
            Stage::Qni => "qni",
            Stage::Compat => "compat",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub outputs: Vec<String>,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_hash: String,
    pub versions: BTreeMap<String, String>,
    pub scenario: Scenario,
    pub seed: Option<u64>,
    pub workers: usize,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn outputs(&self) -> Vec<String> {
        let mut all: Vec<String> = self.stages.iter().flat_map(|s| s.outputs.iter().cloned()).collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub workers: usize,
}

#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    scenario_hash: String,
    /// Hash of the scenario without the QNI-only grid fields; caches are matched on it.
    upstream_hash: String,
    data: T,
}

/// Hash of everything except the QNI window, so rerunning the scan with new
/// flags reuses the cached charts.
pub fn upstream_hash(scenario: &Scenario) -> String {
    let mut s = scenario.clone();
    let d = Grids::default();
    s.grids =
        Grids { v: d.v, nu: d.nu, k_min: d.k_min, k_max: d.k_max, samples_per_scale: d.samples_per_scale, ..s.grids };
    s.hash_hex()
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    hash: String,
    upstream: String,
    out: &'a Path,
    seed: Option<u64>,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, data: &T) -> Result<String> {
        let stamped = Stamped { scenario_hash: self.hash.clone(), upstream_hash: self.upstream.clone(), data };
        let mut text = serde_json::to_string_pretty(&stamped)?;
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        Ok(name.to_string())
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        read_stamped(self.out, name, &self.upstream)
    }

    fn write_csv(&self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<String> {
        let mut text = format!("# scenario_hash={}\n{header}\n", self.hash);
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        std::fs::write(self.path(name), text)?;
        Ok(name.to_string())
    }

    fn orbit_name(&self) -> String {
        cache_file_name(&self.scenario.model_map().hash_hex(), self.scenario.orbit)
    }

    fn orbit(&self) -> Result<OrbitSegment> {
        read_orbit_cache(&self.path(&self.orbit_name()), &self.scenario.model_map().hash_hex())
    }
}

fn read_stamped<T: DeserializeOwned>(dir: &Path, name: &str, upstream: &str) -> Result<T> {
    let path = dir.join(name);
    let text =
        std::fs::read_to_string(&path).map_err(|_| Error::MissingCache(format!("{name} in {}", dir.display())))?;
    let stamped: Stamped<T> = serde_json::from_str(&text)?;
    if stamped.upstream_hash != upstream {
        return Err(Error::MissingCache(format!("{name} was written for another scenario")));
    }
    Ok(stamped.data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingOutput {
    pub frame: SplittingFrame,
    pub exponents: Exponents,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NformOutput {
    pub unstable: Vec<LeafParam>,
    pub stable: Vec<LeafParam>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub level: usize,
    pub bound: DegreeBound,
    pub law_residual: f64,
    pub template: Template,
    pub verdict: DichotomyVerdict,
}

impl TemplateRecord {
    /// Highest fitted coefficient above the fit tolerance, with its value.
    pub fn effective_degree(&self, tol: f64) -> Option<(usize, f64)> {
        self.verdict.fit.iter().enumerate().rev().find(|(_, c)| c.abs() > tol).map(|(k, c)| (k, *c))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxOutput {
    pub level: usize,
    /// Samples are `T(t_max·x)` for `x` on the uniform grid of `[-1, 1]`.
    pub t_max: f64,
    pub polynomial: Vec<PolyFit>,
    pub threshold: f64,
    pub rational: Vec<RationalFit>,
    pub spread: SpreadSet,
    pub spread_verdict: SpreadVerdict,
    pub bounds: Option<RationalBounds>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QniOutput {
    pub seed: Option<u64>,
    pub forward: QniReport,
    pub inverse: QniReport,
    pub symmetry: SymmetryCheck,
    pub holder: HolderFit,
}

fn stage_splitting(ctx: &Ctx) -> Result<Vec<String>> {
    let s = ctx.scenario;
    let map = s.model_map();
    let segment = OrbitSegment::build(&map, s.anchor, s.orbit, MAX_POWER)?;
    let orbit = ctx.orbit_name();
    write_orbit_cache(&ctx.path(&orbit), &segment, &ctx.hash, &map.hash_hex())?;
    let out = SplittingOutput { frame: segment.anchor().clone(), exponents: lyapunov_exponents(&segment) };
    Ok(vec![orbit, ctx.write_json("splitting.json", &out)?])
}

fn stage_nform(ctx: &Ctx) -> Result<Vec<String>> {
    let s = ctx.scenario;
    let map = s.model_map();
    let segment = ctx.orbit()?;
    let tol = s.tolerances.conjugacy;
    let out = NformOutput {
        unstable: build_leaf_param(&map, &segment, Bundle::Unstable, s.order, tol)?,
        stable: build_leaf_param(&map, &segment, Bundle::Stable, s.order, tol)?,
    };
    Ok(vec![ctx.write_json("nform.json", &out)?])
}

fn stage_charts(ctx: &Ctx) -> Result<Vec<String>> {
    let s = ctx.scenario;
    let segment = ctx.orbit()?;
    let chart = build_unstable_chart(&s.model_map(), segment.anchor(), s.order, s.radius)?;
    Ok(vec![ctx.write_json(CHART, &chart)?])
}

fn stage_templates(ctx: &Ctx) -> Result<Vec<String>> {
    let s = ctx.scenario;
    let map = s.model_map();
    let segment = ctx.orbit()?;
    let frame = segment.anchor();
    let mut chart: Chart = ctx.read_json(CHART)?;
    let ts = symmetric_grid(s.grids.t_points, s.grids.t_max);
    let ss = s_grid(s.grids.s_points, s.grids.s_max);
    let chi = frame.lams().map(|l| l.abs().ln());
    let mut outputs = Vec::new();
    let mut records = Vec::new();
    for level in 0..=s.level {
        let template = extract_template(&map, &chart, frame, level, &ts, &ss)?;
        let sampler = TemplateSampler::new(&map, &chart, frame, level);
        let law_residual = template_law_residual(&map, &chart, &sampler, &ts)?;
        let bound = degree_bound(chi, level, s.tolerances.eps_dev)?;
        let sample = |t: f64| sampler.value(t);
        let verdict = classify_template(&template, bound.degree, Some(&sample))?;
        let fit = |t: f64| verdict.fit.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let rows = template.ts.iter().enumerate().map(|(i, &t)| {
            let v = template.values[i];
            format!("{t:e},{v:e},{:e},{:e},{:e}", template.a[i], template.b[i], (v - fit(t)).abs())
        });
        outputs.push(ctx.write_csv(&format!("template-l{level}.csv"), "t,T,a,b,fit_residual", rows)?);
        let polynomial = matches!(verdict.verdict, Verdict::Polynomial { .. });
        let next = if polynomial { Some(improve_from_verdict(&chart, &verdict)?) } else { None };
        records.push(TemplateRecord { level, bound, law_residual, template, verdict });
        match next {
            Some(c) => chart = c,
            None => break,
        }
    }
    outputs.push(ctx.write_json(TEMPLATES, &records)?);
    outputs.push(ctx.write_json(CHART_FINAL, &chart)?);
    Ok(outputs)
}

fn stage_approx(ctx: &Ctx) -> Result<Vec<String>> {
    let s = ctx.scenario;
    let map = s.model_map();
    let segment = ctx.orbit()?;
    let chart: Chart = ctx.read_json(CHART)?;
    let sampler = TemplateSampler::new(&map, &chart, segment.anchor(), 0);
    let xs = uniform_grid(s.grids.approx_points);
    let t_max = s.grids.t_max;
    let vs = xs.par_iter().map(|&x| sampler.value(x * t_max)).collect::<Result<Vec<f64>>>()?;
    let sup = vs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = s.tolerances.fit * (1.0 + sup);
    let polynomial = (0..=6).map(|d| poly_distance(&xs, &vs, d)).collect::<Result<Vec<_>>>()?;
    let rational = (1..=3).map(|d| rational_distance(&xs, &vs, d, 1e-3)).collect::<Result<Vec<_>>>()?;
    let spread = SpreadSet { points: xs.clone(), k: 7, sigma: 1.0 / xs.len() as f64, eta: 0.1 };
    let spread_verdict = spread_check(&spread);
    let best = rational.iter().rev().find_map(|f| f.rational.clone());
    let bounds = match best {
        Some(r) if sup > 0.0 => Some(rational_bounds_constants(&spread, &r)?),
        _ => None,
    };
    let out = ApproxOutput { level: 0, t_max, polynomial, threshold, rational, spread, spread_verdict, bounds };
    Ok(vec![ctx.write_json("approx.json", &out)?])
}

pub fn qni_config(scenario: &Scenario, seed: Option<u64>) -> QniConfig {
    let g = &scenario.grids;
    QniConfig { v: g.v, nu: g.nu, k_min: g.k_min, k_max: g.k_max, samples: g.samples_per_scale, jitter: seed }
}

fn sample_rows(report: &QniReport) -> Vec<String> {
    report
        .samples
        .iter()
        .map(|p| format!("{},{},{:e},{:e},{:e},{:?}", p.k1, p.k2, p.s, p.t, p.distance, p.branch))
        .collect()
}

fn stage_qni(ctx: &Ctx) -> Result<Vec<String>> {
    let s = ctx.scenario;
    let map = s.model_map();
    let chart: Chart = ctx.read_json(CHART)?;
    let segment = ctx.orbit()?;
    let src = LeafSources::new(&map, segment.anchor(), s.order, s.radius)?;
    let config = qni_config(s, ctx.seed);
    let mut forward = qni_scan(&src, Direction::Forward, &config)?;
    let mut inverse = qni_scan(&src, Direction::Inverse, &config)?;
    let symmetry = qni_symmetry_check(&forward, &inverse, config.nu);
    let holder = estimate_holonomy_holder(&src, &chart, (1e-4, 1e-2), (0.01, 0.2), 5)?;
    let header = "k1,k2,s,t,distance,branch";
    let outputs = vec![
        ctx.write_csv("qni-forward.csv", header, sample_rows(&forward))?,
        ctx.write_csv("qni-inverse.csv", header, sample_rows(&inverse))?,
    ];
    forward.samples.clear();
    inverse.samples.clear();
    let out = QniOutput { seed: ctx.seed, forward, inverse, symmetry, holder };
    Ok([outputs, vec![ctx.write_json(QNI, &out)?]].concat())
}

fn stage_compat(ctx: &Ctx) -> Result<Vec<String>> {
    let s = ctx.scenario;
    let map = s.model_map();
    let unstable: Chart = ctx.read_json(CHART_FINAL)?;
    let segment = ctx.orbit()?;
    let frame = segment.anchor();
    let stable = build_stable_chart(&map, s.anchor, s.order, s.radius, unstable.level)?;
    let jets = compat_jets(&stable.iota, &unstable.iota, s.order)?;
    let level = s.order / 2;
    let rho = 0.8 * s.radius;
    let mut report = CompatReport {
        scenario_hash: ctx.hash.clone(),
        order: jets.order,
        table: jets.table.clone(),
        tolerance: jets.tolerance,
        index_set: jets.index_set.clone(),
        compatibility_order: jets.compatibility_order,
        minimal_index: jets.minimal_index(s.grids.v),
        surface: Vec::new(),
        level,
        containment: None,
        refusal: None,
        tangency: Vec::new(),
    };
    let data = CrossData::from_h2(&jets.h[1], level, rho)?;
    match whitney_cross_extend(&data, s.tolerances.template) {
        Err(Error::Precondition(reason)) => report.refusal = Some(reason),
        Err(e) => return Err(e),
        Ok(ext) => {
            report.surface = monomials(&ext.poly, 1e-14);
            let surface = build_joint_surface(&unstable, ext, rho)?;
            report.containment = Some(surface.containment);
            let src = LeafSources::new(&map, frame, s.order, s.radius)?;
            let anchors = [-0.1, 0.05, 0.1];
            let mut leaves = Vec::new();
            let mut rows = Vec::new();
            for &t in &anchors {
                let (leaf, _) = transported_leaf(&map, frame, src.unstable_point(t), Bundle::Stable, s.order)?;
                leaves.push(SampledCurve::new(leaf.curve, -s.radius, s.radius)?);
                rows.push(("stable".to_string(), t));
            }
            for &u in &anchors {
                leaves.push(src.unstable_leaf(u)?);
                rows.push(("unstable".to_string(), u));
            }
            let table = tangency_table(&surface, &leaves, 0.1, s.order)?;
            report.tangency = rows
                .into_iter()
                .zip(table)
                .map(|((family, anchor), r)| TangencyRow { family, anchor, tangency: r.tangency })
                .collect();
        }
    }
    Ok(vec![ctx.write_json("compat.json", &report)?])
}

fn run_stage(ctx: &Ctx, stage: Stage) -> Result<Vec<String>> {
    match stage {
        Stage::Splitting => stage_splitting(ctx),
        Stage::Nform => stage_nform(ctx),
        Stage::Charts => stage_charts(ctx),
        Stage::Templates => stage_templates(ctx),
        Stage::Approx => stage_approx(ctx),
        Stage::Qni => stage_qni(ctx),
        Stage::Compat => stage_compat(ctx),
    }
}

fn versions() -> BTreeMap<String, String> {
    Stage::ALL.iter().map(|s| (s.name().to_string(), env!("CARGO_PKG_VERSION").to_string())).collect()
}

pub fn read_manifest(out: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(out.join(MANIFEST))
        .map_err(|_| Error::MissingCache(format!("{MANIFEST} in {}", out.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(out.join(MANIFEST), text)?;
    Ok(())
}

/// Run `stages` in pipeline order. Records from an earlier manifest for the
/// same scenario are kept for stages not rerun; the manifest is written last,
/// also when a stage fails.
pub fn run_pipeline(scenario: &Scenario, stages: &[Stage], opts: &RunOptions) -> Result<RunManifest> {
    scenario.validate()?;
    std::fs::create_dir_all(&opts.out)?;
    let hash = scenario.hash_hex();
    let ctx = Ctx { scenario, hash: hash.clone(), upstream: upstream_hash(scenario), out: &opts.out, seed: opts.seed };
    let mut records: Vec<StageRecord> = match read_manifest(&opts.out) {
        Ok(m) if m.scenario_hash == hash && m.seed == opts.seed => m.stages,
        _ => Vec::new(),
    };
    let mut ordered = stages.to_vec();
    ordered.sort();
    ordered.dedup();
    let mut failure = None;
    for stage in ordered {
        records.retain(|r| r.stage != stage);
        let start = Instant::now();
        let result = run_stage(&ctx, stage);
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(outputs) => records.push(StageRecord { stage, outputs, seconds, error: None }),
            Err(e) => {
                records.push(StageRecord { stage, outputs: Vec::new(), seconds, error: Some(e.to_string()) });
                failure = Some(e);
                break;
            }
        }
    }
    records.sort_by_key(|r| r.stage);
    let manifest = RunManifest {
        scenario_hash: hash,
        versions: versions(),
        scenario: scenario.clone(),
        seed: opts.seed,
        workers: opts.workers,
        stages: records,
    };
    write_manifest(&opts.out, &manifest)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    pub text: String,
    pub files: Vec<String>,
}

/// Human-readable summary of a manifest plus plot-data CSVs.
pub fn report(out: &Path) -> Result<ReportSummary> {
    let manifest = read_manifest(out)?;
    let scenario = &manifest.scenario;
    let hash = &manifest.scenario_hash;
    let ctx = Ctx { scenario, hash: hash.clone(), upstream: upstream_hash(scenario), out, seed: manifest.seed };
    let ok = |stage: Stage| manifest.record(stage).is_some_and(|r| r.error.is_none());
    let mut text = String::new();
    let mut files = Vec::new();
    let p = scenario.params;
    let _ = writeln!(text, "scenario {} model {:?}", &hash[..16], scenario.model);
    let _ = writeln!(
        text,
        "params l1 = {}, l2 = {}, l3 = {}, eps = {}; order {}, radius {}, level {}",
        p.l1, p.l2, p.l3, p.eps, scenario.order, scenario.radius, scenario.level
    );
    for r in &manifest.stages {
        if let Some(e) = &r.error {
            let _ = writeln!(text, "{}: failed: {e}", r.stage.name());
        }
    }

    if ok(Stage::Splitting) {
        let sp: SplittingOutput = ctx.read_json("splitting.json")?;
        let [a, b, c] = sp.exponents.chi;
        let _ = writeln!(text, "splitting: exponents ({a:.6}, {b:.6}, {c:.6})");
    }
    if ok(Stage::Templates) {
        let records: Vec<TemplateRecord> = ctx.read_json(TEMPLATES)?;
        let tol = scenario.tolerances.fit;
        for r in &records {
            match (&r.verdict.verdict, r.effective_degree(tol)) {
                (Verdict::Polynomial { .. }, Some((k, c))) => {
                    let _ = writeln!(text, "templates level {}: template degree {k}, coefficient {c:.5}", r.level);
                }
                (Verdict::Polynomial { .. }, None) => {
                    let _ = writeln!(text, "templates level {}: template vanishes", r.level);
                }
                (Verdict::NonPolynomial, _) => {
                    let _ = writeln!(
                        text,
                        "templates level {}: non-polynomial at degree {} (distance {:.3e})",
                        r.level, r.verdict.degree, r.verdict.fit_residual
                    );
                }
            }
        }
        let mut rows = Vec::new();
        let mut dd = Vec::new();
        for r in &records {
            for (t, v) in r.template.ts.iter().zip(&r.template.values) {
                rows.push(format!("{},{t:e},{v:e}", r.level));
            }
            if let Some(probe) = &r.verdict.probe {
                for d in [&probe.second_order, &probe.high_order] {
                    for (h, m) in d.scales.iter().zip(&d.mean_square) {
                        dd.push(format!("{},{},{h:e},{m:e}", r.level, d.order));
                    }
                }
            }
        }
        files.push(ctx.write_csv("report-template-curves.csv", "level,t,T", rows)?);
        files.push(ctx.write_csv("report-divided-differences.csv", "level,order,scale,mean_square", dd)?);
    }
    if ok(Stage::Approx) {
        let ap: ApproxOutput = ctx.read_json("approx.json")?;
        let first = ap.polynomial.iter().find(|f| f.distance <= ap.threshold).map(|f| f.degree);
        match first {
            Some(d) => {
                let _ = writeln!(text, "approx: polynomial within tolerance from degree {d}");
            }
            None => {
                let _ = writeln!(text, "approx: no polynomial of degree <= 6 within tolerance");
            }
        }
    }
    if ok(Stage::Qni) {
        let q: QniOutput = ctx.read_json(QNI)?;
        let fmt = |r: &QniReport| match (r.verdict, r.alpha_hat) {
            (QniVerdict::Positive, Some(a)) => format!("Positive (alpha {a:.5})"),
            (v, _) => format!("{v:?}"),
        };
        let _ = writeln!(
            text,
            "qni: forward {}, inverse {}, symmetry {}",
            fmt(&q.forward),
            fmt(&q.inverse),
            if q.symmetry.holds { "holds" } else { "fails" }
        );
        let forward = std::fs::read_to_string(out.join("qni-forward.csv"))?;
        let fitted = |k1: usize| match (q.forward.alpha_hat, q.forward.c_hat) {
            (Some(a), Some(c)) => c * (-a * k1 as f64).exp(),
            _ => 0.0,
        };
        let rows: Vec<String> = forward
            .lines()
            .skip(2)
            .filter_map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                let k1: usize = f.first()?.parse().ok()?;
                Some(format!("{k1},{},{:e}", f.get(4)?, fitted(k1)))
            })
            .collect();
        files.push(ctx.write_csv("report-qni-scatter.csv", "k1,distance,fitted", rows)?);
    }
    if ok(Stage::Compat) {
        let c: CompatReport = ctx.read_json("compat.json")?;
        let _ = writeln!(text, "compat: index set {:?}, compatibility order {}", c.index_set, c.compatibility_order);
        if let Some(reason) = &c.refusal {
            let _ = writeln!(text, "compat: no joint surface ({reason})");
        }
        if let (Some(d), Some(worst)) = (c.containment, c.min_tangency()) {
            let _ = writeln!(
                text,
                "compat: joint surface contains both axes to {d:.1e}, smallest tangency order {worst:.2}"
            );
            let verdict = if c.jointly_integrable() { "yes" } else { "no" };
            let _ = writeln!(text, "compat: jointly integrable to order {}: {verdict}", c.level);
        }
    }
    std::fs::write(out.join(SUMMARY), &text)?;
    files.push(SUMMARY.to_string());
    Ok(ReportSummary { text, files })
}

fn stage_for(command: &Command) -> Option<Stage> {
    match command {
        Command::Splitting => Some(Stage::Splitting),
        Command::Nform => Some(Stage::Nform),
        Command::Chart => Some(Stage::Charts),
        Command::Template => Some(Stage::Templates),
        Command::Approx => Some(Stage::Approx),
        Command::Qni(_) => Some(Stage::Qni),
        Command::Compat => Some(Stage::Compat),
        Command::Run { .. } | Command::Report => None,
    }
}

fn output_dir(cli: &Cli, scenario: Option<&Scenario>) -> PathBuf {
    match (&cli.out, scenario) {
        (Some(out), _) => out.clone(),
        (None, Some(s)) => PathBuf::from(&s.out_dir),
        (None, None) => PathBuf::from("out"),
    }
}

/// Execute a parsed command line.
pub fn execute(cli: &Cli) -> Result<String> {
    if cli.workers == 0 {
        return Err(Error::Precondition("--workers must be at least 1".into()));
    }
    // the global pool can be configured once per process; later calls keep it
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
    if let Command::Report = cli.command {
        let out = match &cli.scenario {
            Some(path) => output_dir(cli, Some(&load_scenario(path)?)),
            None => output_dir(cli, None),
        };
        return Ok(report(&out)?.text);
    }
    let path = cli.scenario.as_ref().ok_or_else(|| Error::Precondition("--scenario is required".into()))?;
    let mut scenario = load_scenario(path)?;
    let out = output_dir(cli, Some(&scenario));
    scenario.out_dir = out.display().to_string();
    let stages = match &cli.command {
        Command::Run { stages, qni } => {
            qni.apply(&mut scenario)?;
            stages.clone().unwrap_or_else(|| Stage::ALL.to_vec())
        }
        Command::Qni(qni) => {
            qni.apply(&mut scenario)?;
            vec![Stage::Qni]
        }
        other => vec![stage_for(other).expect("stage command")],
    };
    let opts = RunOptions { out, seed: cli.seed, workers: cli.workers };
    let manifest = run_pipeline(&scenario, &stages, &opts)?;
    let mut text = String::new();
    for r in &manifest.stages {
        let _ = writeln!(text, "{}: {}", r.stage.name(), r.outputs.join(", "));
    }
    Ok(text)
}

/// Parse arguments, run, print, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn opts(dir: &Path) -> RunOptions {
        RunOptions { out: dir.to_path_buf(), seed: None, workers: 1 }
    }

    #[test]
    fn qni_without_charts_names_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::defaults_for(ModelKind::A);
        let err = run_pipeline(&s, &[Stage::Qni], &opts(dir.path())).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("chart.json"), "{err}");
        let m = read_manifest(dir.path()).unwrap();
        assert!(m.record(Stage::Qni).unwrap().error.is_some());
    }

    #[test]
    fn empty_stage_set_reports_scenario_only() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::defaults_for(ModelKind::B);
        let m = run_pipeline(&s, &[], &opts(dir.path())).unwrap();
        assert!(m.stages.is_empty());
        let r = report(dir.path()).unwrap();
        assert_eq!(r.text.lines().count(), 2);
        assert!(r.text.starts_with("scenario "));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::defaults_for(ModelKind::A);
        run_pipeline(&s, &[Stage::Splitting, Stage::Charts], &opts(dir.path())).unwrap();
        let mut other = s.clone();
        other.radius = 0.4;
        let err = run_pipeline(&other, &[Stage::Templates], &opts(dir.path())).unwrap_err();
        assert!(matches!(err, Error::MissingCache(_)), "{err}");
    }

    #[test]
    fn qni_flags_reuse_upstream_caches() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::defaults_for(ModelKind::A);
        run_pipeline(&s, &[Stage::Splitting, Stage::Charts], &opts(dir.path())).unwrap();
        let mut narrow = s.clone();
        QniArgs { kmax: Some(4), ..Default::default() }.apply(&mut narrow).unwrap();
        assert_ne!(narrow.hash_hex(), s.hash_hex());
        assert_eq!(upstream_hash(&narrow), upstream_hash(&s));
        let m = run_pipeline(&narrow, &[Stage::Qni], &opts(dir.path())).unwrap();
        assert_eq!(m.stages.len(), 1);
        assert_eq!(m.scenario_hash, narrow.hash_hex());
    }

    #[test]
    fn flags_override_grids() {
        let mut s = Scenario::defaults_for(ModelKind::C);
        let args = QniArgs { v: Some(1.2), kmax: Some(5), ..Default::default() };
        args.apply(&mut s).unwrap();
        assert_eq!((s.grids.v, s.grids.k_max), (1.2, 5));
        let bad = QniArgs { nu: Some(1.5), ..Default::default() };
        assert_eq!(bad.apply(&mut s).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "phcharts",
            "qni",
            "--scenario",
            "s.toml",
            "--V",
            "1.1",
            "--nu",
            "0.2",
            "--kmin",
            "3",
            "--kmax",
            "6",
            "--samples-per-scale",
            "20",
            "--seed",
            "4",
            "--workers",
            "2",
        ])
        .unwrap();
        match &cli.command {
            Command::Qni(q) => assert_eq!((q.v, q.samples_per_scale, q.kmin), (Some(1.1), Some(20), Some(3))),
            other => panic!("{other:?}"),
        }
        assert_eq!((cli.seed, cli.workers), (Some(4), 2));
        let run = Cli::try_parse_from(["phcharts", "run", "--stages", "splitting,charts"]).unwrap();
        match run.command {
            Command::Run { stages, .. } => assert_eq!(stages, Some(vec![Stage::Splitting, Stage::Charts])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_scenario_is_a_validation_error() {
        assert_eq!(main_with_args(["phcharts", "splitting"]), 2);
        assert_eq!(main_with_args(["phcharts", "bogus"]), 2);
    }
}
