//! The five subcommands. Each returns the process exit code on success.

use std::path::{Path, PathBuf};

use chaosdesign::analysis::{self, BifurcationDiagram, Phase};
use chaosdesign::experiment::{evaluate_model, evaluate_point, linear_grid, settled_pca, sweep_rho, sweep_washout, Sweep};
use chaosdesign::io::{load_model, save_model, trace_to_csv, write_json, write_skeleton, write_text};
use chaosdesign::search::{search as run_search, SearchResult};
use chaosdesign::training::{run_open_loop, train as fit};
use chaosdesign::{build_reservoir, Error, PointEvaluation, RecordOptions, Result, Skeleton};
use serde::Serialize;

use crate::config::{ScanParam, SkeletonKind};
use crate::svg::{Plot, Series};
use crate::{AnalyzeArgs, Context, ScanArgs, SearchArgs, SkeletonArgs, TrainArgs};

fn announce(path: &Path) {
    println!("{}", path.display());
}

fn write_svg(path: &Path, plot: &Plot) -> Result<()> {
    write_text(path, &plot.render())?;
    announce(path);
    Ok(())
}

pub fn skeleton(mut ctx: Context, a: &SkeletonArgs) -> Result<u8> {
    let s = &mut ctx.cfg.skeleton;
    if a.lissajous {
        s.kind = SkeletonKind::Lissajous;
    } else if a.circle {
        s.kind = SkeletonKind::Circle;
    } else if a.vdp {
        s.kind = SkeletonKind::VanDerPol;
    } else if a.rossler {
        s.kind = SkeletonKind::Rossler;
    } else if let Some(p) = &a.csv {
        s.kind = SkeletonKind::Csv;
        s.path = Some(p.clone());
        if a.resample.is_none() && s.resample.is_none() {
            // Raw curves are resampled to their own point count by default.
            let text = std::fs::read_to_string(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
            let points = chaosdesign::skeleton::parse_csv_points(&text, &p.display().to_string())?;
            s.resample = Some(points.len());
        }
    }
    if s.kind == SkeletonKind::Csv && s.path.is_none() {
        return Err(Error::Input("pick a generator (--lissajous, --circle, --vdp, --rossler) or --csv PATH".into()));
    }
    if let Some(v) = a.steps {
        s.steps = Some(v);
    }
    if let Some(v) = a.period {
        s.period = v;
    }
    if let Some(v) = a.mu {
        s.mu = v;
    }
    if let Some(v) = a.c {
        s.c = v;
    }
    if a.dt.is_some() {
        s.dt = a.dt;
    }
    if a.cross_xy {
        s.rossler_form = chaosdesign::skeleton::RosslerForm::CrossXy;
    }
    if a.resample.is_some() {
        s.resample = a.resample;
    }
    s.close |= a.close;
    if a.raw {
        s.normalize = Some(false);
    } else if a.normalize {
        s.normalize = Some(true);
    }
    let needed = ctx.cfg.steps_needed();
    let (sk, source) = ctx.cfg.skeleton.build(needed)?;
    let (csv, json) = write_skeleton(&ctx.out, &a.name, &sk, source)?;
    announce(&csv);
    announce(&json);
    log::info!("{} samples of a {}-dimensional skeleton ({})", sk.len(), sk.dim(), sk.label());
    Ok(0)
}

fn apply_train_args(ctx: &mut Context, a: &TrainArgs) {
    let c = &mut ctx.cfg;
    if let Some(p) = &a.skeleton {
        c.skeleton.kind = SkeletonKind::Csv;
        c.skeleton.path = Some(p.clone());
        c.skeleton.resample = None;
    }
    if let Some(v) = a.nodes {
        c.reservoir.n_nodes = v;
    }
    if let Some(v) = a.leak {
        c.reservoir.leak_rate = v;
    }
    if let Some(v) = a.sigma {
        c.reservoir.input_scale = v;
    }
    if let Some(v) = a.beta {
        c.training.beta = v;
    }
    if let Some(v) = a.t_init {
        c.training.t_init = v;
    }
    if let Some(v) = a.t_train {
        c.training.t_train = v;
    }
}

fn load_skeleton(ctx: &Context) -> Result<Skeleton> {
    ctx.cfg.skeleton.build(ctx.cfg.steps_needed()).map(|(sk, _)| sk)
}

#[derive(Debug, Serialize)]
struct TrainReport {
    seed: u64,
    rho: f64,
    n_nodes: usize,
    leak_rate: f64,
    input_scale: f64,
    beta: f64,
    t_init: usize,
    t_train: usize,
    skeleton: String,
    /// Open-loop error per output component after the hand-off.
    rmse: Vec<f64>,
    rmse_steps: usize,
    eff_radius_pre: f64,
    eff_radius_post: f64,
}

pub fn train(mut ctx: Context, a: &TrainArgs) -> Result<u8> {
    apply_train_args(&mut ctx, a);
    let sk = load_skeleton(&ctx)?;
    let res = build_reservoir(ctx.cfg.reservoir.spec(sk.dim()))?;
    log::info!("training N = {} at rho = {} (seed {})", res.n(), res.rho(), res.spec().seed);
    let model = fit(&res, &sk, &ctx.cfg.training)?;
    let steps = ctx.cfg.evaluation.rmse_steps;
    let trace = run_open_loop(&model, &sk, steps, RecordOptions::default())?;
    let rmse = (0..sk.dim())
        .map(|c| analysis::rmse(&trace, &sk, c, steps))
        .collect::<Result<Vec<_>>>()?;
    let report = TrainReport {
        seed: res.spec().seed,
        rho: res.rho(),
        n_nodes: res.n(),
        leak_rate: res.leak(),
        input_scale: res.sigma(),
        beta: model.config.beta,
        t_init: model.config.t_init,
        t_train: model.config.t_train,
        skeleton: sk.label().to_string(),
        rmse,
        rmse_steps: steps,
        eff_radius_pre: res.effective_radius_pre()?,
        eff_radius_post: model.effective_radius_post()?,
    };
    let dir = a.model.clone().unwrap_or_else(|| ctx.out.join("model"));
    save_model(&dir, &model, &sk)?;
    announce(&dir);
    let path = ctx.out.join("train_report.json");
    write_json(&path, &report)?;
    announce(&path);
    log::info!(
        "open-loop RMSE {:?}, effective radius {:.4} -> {:.4}",
        report.rmse,
        report.eff_radius_pre,
        report.eff_radius_post
    );
    Ok(0)
}

/// Skeleton-plane plot of a closed-loop output window against the target.
fn output_plane(title: &str, outputs: &[Vec<f64>], sk: &Skeleton) -> Plot {
    let xy = |rows: &[Vec<f64>]| -> Vec<(f64, f64)> {
        rows.iter().map(|z| (z[0], z.get(1).copied().unwrap_or(0.0))).collect()
    };
    Plot::new(title, "z_0", if sk.dim() > 1 { "z_1" } else { "0" })
        .with(Series::line("closed loop", xy(outputs)))
        .with(Series::line("skeleton", xy(sk.one_period())))
}

pub fn analyze(mut ctx: Context, a: &AnalyzeArgs) -> Result<u8> {
    let dir = a.model.clone().unwrap_or_else(|| ctx.out.join("model"));
    let (mut model, sk) = load_model(&dir)?;
    if ctx.rho_given || ctx.seed_given {
        let spec = model
            .reservoir
            .spec()
            .with_rho(ctx.cfg.reservoir.spectral_scale);
        let spec = chaosdesign::ReservoirSpec {
            seed: if ctx.seed_given { ctx.cfg.reservoir.seed } else { spec.seed },
            ..spec
        };
        log::info!("retraining the saved setup at rho = {} (seed {})", spec.spectral_scale, spec.seed);
        model = fit(&build_reservoir(spec)?, &sk, &model.config)?;
    }
    let eval = &mut ctx.cfg.evaluation;
    eval.record_states = true;
    eval.post_radius = true;
    let eval = eval.clone();
    let PointEvaluation {
        report,
        closed_trace,
        open_trace,
        ..
    } = evaluate_model(model, &sk, &eval)?;

    let out = &ctx.out;
    let path = out.join("analysis.json");
    write_json(&path, &report)?;
    announce(&path);

    let from = closed_trace.len() - eval.shape_window;
    let settled = closed_trace.tail(from);
    let pca = settled_pca(&closed_trace, eval.shape_window)?;
    if pca.degenerate {
        log::warn!("settled closed-loop states have no variance; principal components are arbitrary");
    }
    let path = out.join("trace_closed.csv");
    write_text(&path, &trace_to_csv(&settled, &[("pc", &pca.coordinates)]))?;
    announce(&path);
    let path = out.join("trace_open.csv");
    write_text(&path, &trace_to_csv(&open_trace, &[]))?;
    announce(&path);

    let x = closed_trace.output_component(0);
    let spectrum = analysis::power_spectrum(&x[eval.transient_steps.min(x.len())..])?;
    let mut csv = String::from("frequency,power\n");
    for (f, p) in spectrum.frequency.iter().zip(&spectrum.power) {
        csv.push_str(&format!("{f},{p}\n"));
    }
    let path = out.join("spectrum.csv");
    write_text(&path, &csv)?;
    announce(&path);

    let title = format!("rho = {}: {}", report.rho, report.classification);
    write_svg(&out.join("output_plane.svg"), &output_plane(&title, &settled.outputs, &sk))?;
    let pcs: Vec<(f64, f64)> = pca.coordinates.iter().map(|c| (c[0], c[1])).collect();
    write_svg(
        &out.join("pca_plane.svg"),
        &Plot::new(&title, "pc1", "pc2").with(Series::line("settled states", pcs)),
    )?;
    let power: Vec<(f64, f64)> = spectrum.frequency.iter().copied().zip(spectrum.power.iter().copied()).skip(1).collect();
    write_svg(
        &out.join("spectrum.svg"),
        &Plot::new(&title, "frequency (cycles/step)", "power")
            .log_y()
            .with(Series::line("z_0", power)),
    )?;
    log::info!(
        "CLE {:+.5}, MLE {:+.5}, shape {:.3e}: {}",
        report.cle,
        report.mle,
        report.shape_value(),
        report.classification
    );
    Ok(0)
}

fn scan_summary_csv(sweep: &Sweep) -> String {
    let mut s = format!("{},cle,mle,mean_q,shape_dev,classification\n", sweep.param_name);
    for p in &sweep.points {
        match &p.report {
            Some(r) => {
                let q = r.mean_q.map(|q| q.to_string()).unwrap_or_default();
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    p.rho, r.cle, r.mle, q, r.shape_distance, r.classification
                ));
            }
            None => s.push_str(&format!("{},,,,,failed\n", p.rho)),
        }
    }
    s
}

fn diagram_plot(d: &BifurcationDiagram) -> Plot {
    let pick = |phase: Phase| -> Vec<(f64, f64)> {
        d.points
            .iter()
            .filter(|p| p.phase == phase)
            .map(|p| (p.param, p.value))
            .collect()
    };
    let source = serde_json::to_value(d.source).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    Plot::new(format!("bifurcation diagram ({source})"), &d.param_name, "value")
        .with(Series::scatter("transient", pick(Phase::Transient)))
        .with(Series::scatter("settled", pick(Phase::Settled)))
}

pub fn scan(mut ctx: Context, a: &ScanArgs) -> Result<u8> {
    apply_train_args(&mut ctx, &a.train);
    let sc = &mut ctx.cfg.scan;
    if let Some(p) = a.param {
        sc.param = p;
    }
    if let Some(v) = a.from {
        sc.from = v;
    }
    if let Some(v) = a.to {
        sc.to = v;
    }
    if let Some(v) = a.step {
        sc.step = v;
    }
    let sc = sc.clone();
    let grid = linear_grid(sc.from, sc.to, sc.step)?;
    let sk = load_skeleton(&ctx)?;
    let base = build_reservoir(ctx.cfg.reservoir.spec(sk.dim()))?;
    let (train, eval, diagrams) = (&ctx.cfg.training, &ctx.cfg.evaluation, &ctx.cfg.diagrams);
    log::info!("scanning {} values of {:?} from {} to {}", grid.len(), sc.param, sc.from, sc.to);
    let sweep = match sc.param {
        ScanParam::Rho => sweep_rho(&base, &sk, train, eval, diagrams, &grid),
        ScanParam::TInit => {
            let t: Vec<usize> = grid.iter().map(|v| v.round() as usize).collect();
            sweep_washout(&base, &sk, train, eval, diagrams, &t)
        }
    };

    let out = &ctx.out;
    let path = out.join("scan.json");
    write_json(&path, &sweep)?;
    announce(&path);
    let path = out.join("scan_summary.csv");
    write_text(&path, &scan_summary_csv(&sweep))?;
    announce(&path);
    for d in &sweep.diagrams {
        let stem = match d.source {
            analysis::DiagramSource::NodeAverageExtrema => "diagram_node_average",
            analysis::DiagramSource::OutputExtrema => "diagram_output_maxima",
            analysis::DiagramSource::PoincareSection => "diagram_poincare",
        };
        let path = out.join(format!("{stem}.csv"));
        write_text(&path, &d.to_csv())?;
        announce(&path);
        write_svg(&out.join(format!("{stem}.svg")), &diagram_plot(d))?;
    }
    let ok = sweep.success_fraction();
    if ok < sc.min_success {
        eprintln!(
            "error: only {:.0}% of scan points succeeded (need {:.0}%)",
            100.0 * ok,
            100.0 * sc.min_success
        );
        return Ok(3);
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_edge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_supervised: Option<f64>,
    scanned: usize,
    failed_points: usize,
    candidates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    result_file: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SearchSummary {
    seeds: Vec<SeedSummary>,
    seeds_with_candidates: usize,
    note: String,
}

pub fn search(mut ctx: Context, a: &SearchArgs) -> Result<u8> {
    apply_train_args(&mut ctx, &a.train);
    if let Some(s) = &a.seeds {
        ctx.cfg.search.seeds = s.clone();
    }
    if a.stop_after.is_some() {
        ctx.cfg.search.stop_after_candidates = a.stop_after;
    }
    ctx.cfg.search.scan_descending |= a.descending;
    if a.max_scan_points.is_some() {
        ctx.cfg.search.max_scan_points = a.max_scan_points;
    }
    let sk = load_skeleton(&ctx)?;
    let cfg = &ctx.cfg;
    let out = &ctx.out;
    let mut summaries = Vec::new();
    let mut merged = String::new();
    let mut worst = 0u8;
    for &seed in &cfg.search.seeds {
        let spec = chaosdesign::ReservoirSpec {
            seed,
            ..cfg.reservoir.spec(sk.dim())
        };
        let r = build_reservoir(spec)
            .and_then(|res| run_search(&res, &sk, &cfg.training, &cfg.evaluation, &cfg.search));
        match r {
            Ok(r) => {
                let json = out.join(format!("search_seed{seed}.json"));
                write_json(&json, &r)?;
                announce(&json);
                let csv = out.join(format!("search_seed{seed}.csv"));
                let rows = r.summary_csv();
                write_text(&csv, &rows)?;
                announce(&csv);
                if merged.is_empty() {
                    merged.push_str(&rows);
                } else {
                    merged.extend(rows.lines().skip(1).map(|l| format!("{l}\n")));
                }
                candidate_plots(out, &spec, &sk, cfg, &r, a.plots)?;
                log::info!("seed {seed}: {} candidate(s)", r.candidates.len());
                summaries.push(SeedSummary {
                    seed,
                    rho_edge: Some(r.rho_edge),
                    rho_supervised: r.rho_supervised,
                    scanned: r.full_scan.len(),
                    failed_points: r.failures(),
                    candidates: r.candidates.iter().map(|c| c.rho).collect(),
                    error: None,
                    result_file: Some(json),
                });
            }
            Err(e) => {
                log::error!("seed {seed}: {e}");
                worst = worst.max(crate::exit_code(&e));
                summaries.push(SeedSummary {
                    seed,
                    rho_edge: None,
                    rho_supervised: None,
                    scanned: 0,
                    failed_points: 0,
                    candidates: Vec::new(),
                    error: Some(e.to_string()),
                    result_file: None,
                });
            }
        }
    }
    let with = summaries.iter().filter(|s| !s.candidates.is_empty()).count();
    let note = if with == 0 {
        "no semi-supervised point was found for any seed".to_string()
    } else {
        format!("semi-supervised points found for {with} of {} seeds", summaries.len())
    };
    log::info!("{note}");
    if merged.is_empty() {
        merged.push_str("seed,rho,cle,mle,mean_q,shape_dev,classification\n");
    }
    let path = out.join("search_summary.csv");
    write_text(&path, &merged)?;
    announce(&path);
    let path = out.join("search_summary.json");
    write_json(
        &path,
        &SearchSummary {
            seeds: summaries,
            seeds_with_candidates: with,
            note,
        },
    )?;
    announce(&path);
    Ok(worst)
}

fn candidate_plots(
    out: &Path,
    spec: &chaosdesign::ReservoirSpec,
    sk: &Skeleton,
    cfg: &crate::config::ExperimentConfig,
    r: &SearchResult,
    limit: usize,
) -> Result<()> {
    for c in r.candidates.iter().take(limit) {
        let res = build_reservoir(spec.with_rho(c.rho))?;
        let ev = evaluate_point(&res, sk, &cfg.training, &cfg.evaluation)?;
        let from = ev.closed_trace.len() - cfg.evaluation.shape_window;
        let title = format!("seed {}, rho = {}: MLE {:+.4}", spec.seed, c.rho, c.mle);
        let plot = output_plane(&title, &ev.closed_trace.outputs[from..], sk);
        write_svg(&out.join(format!("candidate_seed{}_rho{}.svg", spec.seed, c.rho)), &plot)?;
    }
    Ok(())
}
