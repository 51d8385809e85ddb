use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;
use serde_json::json;

use evac_core::dataset::{self, DatasetRecord, Profile};
use evac_core::envgraph::{validate, EnvironmentGraph};
use evac_core::estimator::{estimate_environment, EnvironmentEstimate, EstimatorConfig, FetVariant, RoomModel};
use evac_core::harness::compare::{
    chain_experiment, compare_environments, nightclub_graph, simulation_report, ChainReport, Suite,
    NIGHTCLUB_REFERENCE, NIGHTCLUB_REFERENCE_ERRORS,
};
use evac_core::harness::imo::{self, CornerReport, CounterflowReport, ExitAllocReport, WalkReport};
use evac_core::harness::pipeline::{render_comparison, render_demo, run_demo_on, DemoConfig, TrainSummary};
use evac_core::harness::showcase::{orca_showcase, ShowcaseReport};
use evac_core::mlp::{samples, score_below_threshold, Activation, MlpModel, SurrogateConfig, Target, TrainConfig};
use evac_core::sim::{run_room, SimConfig};

use crate::output::{emit, fmt_opt, pass_fail, print_failure, Failure};
use crate::{
    ActivationArg, ChainArgs, Cli, Command, CompareArgs, DemoArgs, EstimateArgs, EstimatorArgs, Experiment, FetArg,
    GenDatasetArgs, NightclubArgs, Scenario, ScoreArgs, ServeArgs, SimulateArgs, TargetArg, TrainArgs, ValidateArgs,
};

pub fn run(cli: &Cli) -> ExitCode {
    let name = command_name(&cli.command);
    let json = cli.global.json;
    let sim = SimConfig { rng_seed: cli.global.seed, ..SimConfig::default() };
    let outcome = match &cli.command {
        Command::GenDataset(a) => gen_dataset(a, cli.global.seed, &sim, json),
        Command::Train(a) => train(a, cli.global.seed, json),
        Command::Score(a) => score(a, json),
        Command::Estimate(a) => estimate(a, json),
        Command::Simulate(a) => simulate(a, &sim, json),
        Command::Validate(a) => validate_scenarios(a, &sim, json),
        Command::Experiment(Experiment::Compare(a)) => compare(a, &sim, json),
        Command::Experiment(Experiment::Chain(a)) => chain(a, &sim, json),
        Command::Experiment(Experiment::Nightclub(a)) => nightclub(a, &sim, json),
        Command::Serve(a) => serve(a),
        Command::Demo(a) => demo(a, cli.global.seed, &sim, json),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            print_failure(json, name, &f);
            ExitCode::from(f.code())
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenDataset(_) => "gen-dataset",
        Command::Train(_) => "train",
        Command::Score(_) => "score",
        Command::Estimate(_) => "estimate",
        Command::Simulate(_) => "simulate",
        Command::Validate(_) => "validate",
        Command::Experiment(Experiment::Compare(_)) => "experiment compare",
        Command::Experiment(Experiment::Chain(_)) => "experiment chain",
        Command::Experiment(Experiment::Nightclub(_)) => "experiment nightclub",
        Command::Serve(_) => "serve",
        Command::Demo(_) => "demo",
    }
}

type Outcome = Result<bool, Failure>;

fn load_model(path: &Path) -> Result<MlpModel, Failure> {
    MlpModel::load(path).map_err(|e| Failure::domain(format!("cannot load model: {e}")))
}

pub fn load_graph(path: &Path) -> Result<EnvironmentGraph, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?;
    let graph = EnvironmentGraph::from_json(&text).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?;
    let violations = validate(&graph);
    if violations.is_empty() {
        Ok(graph)
    } else {
        Err(Failure::violations(&violations))
    }
}

fn estimator_config(a: &EstimatorArgs) -> EstimatorConfig {
    EstimatorConfig {
        fet_variant: match a.fet {
            FetArg::Simple => FetVariant::Simple,
            FetArg::Diamond => FetVariant::Diamond,
        },
        clamp_inputs: !a.no_clamp,
        ..EstimatorConfig::default()
    }
}

fn gen_dataset(a: &GenDatasetArgs, seed: u64, sim: &SimConfig, json: bool) -> Outcome {
    let profile = if a.desk_scale { Profile::Desk } else { Profile::Full };
    let summary = dataset::generate(a.count, seed, profile, sim, &a.out)?;
    let data = json!({
        "out": a.out.display().to_string(),
        "count": a.count,
        "seed": seed,
        "profile": if a.desk_scale { "desk" } else { "full" },
        "written": summary.written,
        "censored": summary.censored,
    });
    emit(json, "gen-dataset", true, &data, || {
        format!("wrote {} rooms to {} ({} hit the time limit)\n", summary.written, a.out.display(), summary.censored)
    });
    Ok(true)
}

fn read_records(path: &Path) -> Result<Vec<DatasetRecord>, Failure> {
    dataset::read_csv(path).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}

fn train(a: &TrainArgs, seed: u64, json: bool) -> Outcome {
    if !(a.lr.is_finite() && a.lr >= 0.0) || a.epochs == 0 || a.hidden == 0 {
        return Err(Failure::Usage("--lr must be finite and >= 0, --epochs and --hidden at least 1".into()));
    }
    let records = read_records(&a.data)?;
    let (records, _) = dataset::split(&records, a.holdout);
    let cfg = SurrogateConfig {
        hidden: a.hidden,
        activation: match a.activation {
            ActivationArg::Sigmoid => Activation::Sigmoid,
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Identity => Activation::Identity,
        },
        use_bias: a.bias,
        normalize: a.normalize,
        validation: a.validation,
        init_seed: seed,
        train: TrainConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            shuffle_seed: seed,
            target: match a.target {
                TargetArg::Tt => Target::Tt,
                TargetArg::AvgExitTime => Target::AvgExitTime,
            },
            patience: a.patience,
            ..TrainConfig::default()
        },
    };
    let (model, report) = evac_core::mlp::fit_surrogate(&records, &cfg)?;
    model.save(&a.out)?;
    let summary = TrainSummary::of(&report);
    emit(
        json,
        "train",
        true,
        &json!({ "out": a.out.display().to_string(), "training": summary, "report": report }),
        || {
            format!(
                "trained {} epochs (best {}, monitored mse {:.4}, final lr {:e}); model written to {}\n",
                summary.epochs_run,
                summary.best_epoch,
                summary.best_valid_loss,
                summary.final_learning_rate,
                a.out.display()
            )
        },
    );
    Ok(true)
}

fn score(a: &ScoreArgs, json: bool) -> Outcome {
    let model = load_model(&a.model)?;
    let records = read_records(&a.data)?;
    let rows = if a.holdout == 0 { records } else { dataset::split(&records, a.holdout).1 };
    let report = score_below_threshold(&model, &samples(&rows, model.target), a.threshold)?;
    emit(json, "score", true, &report, || {
        format!(
            "{:.1}% of {} rows below {:.0}% relative error (mean {:.1}%)\n",
            100.0 * report.fraction,
            report.scored,
            100.0 * report.threshold,
            100.0 * report.mean_relative_error
        )
    });
    Ok(true)
}

pub fn render_estimate(e: &EnvironmentEstimate) -> String {
    let mut out = format!(
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>7} {:>7} {:>8} {:>8}  notes\n",
        "room", "git", "ift", "F", "f", "pop", "fet", "gfet", "tt"
    );
    for id in &e.order {
        let r = &e.per_room[id];
        let mut notes = Vec::new();
        if e.exit_rooms.contains(id) {
            notes.push("exit".to_string());
        }
        if !r.clamped.is_empty() {
            notes.push(format!("clamped {}", r.clamped.join("/")));
        }
        if r.degenerate_window {
            notes.push("squeezed window".into());
        }
        out.push_str(&format!(
            "{:<12} {:>8.2} {:>8.2} {:>8.2} {:>8.3} {:>7.1} {:>7.2} {:>8.2} {:>8.2}  {}\n",
            r.id,
            r.git,
            r.ift,
            r.flow_duration,
            r.input_flow,
            r.pop,
            r.fet,
            r.gfet,
            r.tt,
            notes.join(", ")
        ));
    }
    for w in &e.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out.push_str(&format!("tt_e: {:.2} s\n", e.tt_e));
    if let Some(avg) = e.avg_exit_time_e {
        out.push_str(&format!("avg_exit_time_e: {avg:.2} s\n"));
    }
    out
}

fn estimate(a: &EstimateArgs, json: bool) -> Outcome {
    let graph = load_graph(&a.graph)?;
    let model = load_model(&a.model)?;
    let avg = a.model_avg.as_deref().map(load_model).transpose()?;
    let est = estimate_environment(
        &graph,
        &model,
        avg.as_ref().map(|m| m as &dyn RoomModel),
        &estimator_config(&a.estimator),
    )?;
    emit(json, "estimate", true, &est, || render_estimate(&est));
    Ok(true)
}

fn simulate(a: &SimulateArgs, sim: &SimConfig, json: bool) -> Outcome {
    let mut cfg = sim.clone();
    if let Some(t) = a.max_time {
        cfg.max_sim_time = t;
    }
    cfg.validate()?;
    if let Some(spec) = &a.room {
        let m = run_room(spec, &cfg)?;
        emit(json, "simulate", true, &json!({ "room": spec, "metrics": m }), || {
            format!(
                "tt {:.2} s  avg exit {:.2} s  avg speed {:.3} m/s  avg density {:.3} /m2{}\n",
                m.tt,
                m.avg_exit_time,
                m.avg_speed,
                m.avg_density,
                if m.censored { "  (time limit reached)" } else { "" }
            )
        });
        return Ok(true);
    }
    let path = a.graph.as_deref().expect("clap requires --graph or --room");
    let graph = load_graph(path)?;
    let model = a.model.as_deref().map(load_model).transpose()?;
    let report =
        simulation_report(&graph, &cfg, model.as_ref().map(|m| m as &dyn RoomModel), &EstimatorConfig::default())?;
    emit(json, "simulate", true, &report, || {
        let m = &report.metrics;
        let mut out = format!(
            "{} of {} agents out, tt {:.2} s, avg exit {:.2} s{}\n",
            m.agents_exited,
            m.agents_total,
            m.tt,
            m.avg_exit_time,
            if m.censored { " (time limit reached)" } else { "" }
        );
        for r in &m.rooms {
            out.push_str(&format!(
                "  {:<12} {:>4} left, last at {}\n",
                r.id,
                r.departures.len(),
                fmt_opt(r.departures.last().copied(), 2)
            ));
        }
        if let (Some(e), Some(err)) = (report.estimated_tt, report.err) {
            out.push_str(&format!("estimate {e:.2} s, error {:+.1}%\n", 100.0 * err));
        }
        out
    });
    Ok(true)
}

#[derive(Debug, Default, Serialize)]
struct ValidationReport {
    walk: Option<WalkReport>,
    corner: Option<CornerReport>,
    counterflow: Option<CounterflowReport>,
    exit_allocation: Option<ExitAllocReport>,
    showcase: Option<ShowcaseReport>,
    passed: bool,
}

fn validate_scenarios(a: &ValidateArgs, sim: &SimConfig, json: bool) -> Outcome {
    let wants = |s: Scenario| a.only.is_none_or(|o| o == s);
    let mut r = ValidationReport::default();
    if wants(Scenario::Walk) {
        r.walk = Some(imo::imo_walk_test(sim)?);
    }
    if wants(Scenario::Corner) {
        r.corner = Some(imo::imo_corner_test(sim, None, true)?);
    }
    if wants(Scenario::Counterflow) {
        r.counterflow = Some(imo::imo_counterflow_test(sim, &imo::COUNTER_FLUXES)?);
    }
    if wants(Scenario::Exitalloc) {
        r.exit_allocation = Some(imo::imo_exit_alloc_test(sim, false)?);
    }
    if wants(Scenario::Showcase) {
        r.showcase = Some(orca_showcase(sim)?);
    }
    r.passed = r.walk.as_ref().is_none_or(|x| x.passed)
        && r.corner.as_ref().is_none_or(|x| x.passed)
        && r.counterflow.as_ref().is_none_or(|x| x.passed)
        && r.exit_allocation.as_ref().is_none_or(|x| x.passed)
        && r.showcase.as_ref().is_none_or(|x| x.passed);
    emit(json, "validate", r.passed, &r, || render_validation(&r));
    Ok(r.passed)
}

fn render_validation(r: &ValidationReport) -> String {
    let mut out = String::new();
    if let Some(w) = &r.walk {
        out.push_str(&format!("{} walk: exit at {} s\n", pass_fail(w.passed), fmt_opt(w.exit_time, 2)));
    }
    if let Some(c) = &r.corner {
        out.push_str(&format!(
            "{} corner: {} agents, {} containment violations, {} hard overlaps, min distance {:.3} m, done at {} s\n",
            pass_fail(c.passed),
            c.agents,
            c.containment_violations,
            c.hard_overlaps,
            c.min_pair_distance,
            fmt_opt(c.finish_time, 2)
        ));
    }
    if let Some(c) = &r.counterflow {
        let times: Vec<String> =
            c.runs.iter().map(|run| format!("{}: {}", run.counter_flux, fmt_opt(run.completion_time, 2))).collect();
        out.push_str(&format!(
            "{} counterflow: {} (increasing {}, no-counterflow case in band {})\n",
            pass_fail(c.passed),
            times.join(", "),
            c.strictly_increasing,
            c.zero_flux_in_band.map_or("-".into(), |b| b.to_string())
        ));
    }
    if let Some(e) = &r.exit_allocation {
        out.push_str(&format!("{} exit allocation: {} mismatches\n", pass_fail(e.passed), e.mismatches.len()));
        for m in &e.mismatches {
            out.push_str(&format!("    {m}\n"));
        }
    }
    if let Some(s) = &r.showcase {
        out.push_str(&format!(
            "{} showcase: {} agents, converged at {} s, max target error {:.3} m, {} hard overlaps\n",
            pass_fail(s.passed),
            s.agents,
            fmt_opt(s.converged_at, 2),
            s.max_target_error,
            s.hard_overlaps
        ));
    }
    out
}

fn compare(a: &CompareArgs, sim: &SimConfig, json: bool) -> Outcome {
    let suite = match &a.suite {
        Some(p) => Suite::from_json(
            &std::fs::read_to_string(p).map_err(|e| Failure::domain(format!("{}: {e}", p.display())))?,
        )?,
        None => Suite::bundled()?,
    };
    let model = load_model(&a.model)?;
    let report = compare_environments(&suite.cases, &model, sim, &estimator_config(&a.estimator))?;
    emit(json, "experiment compare", true, &report, || render_comparison(&report));
    Ok(true)
}

pub fn render_chain(r: &ChainReport) -> String {
    let mut out = format!("{:>5} {:>9} {:>9} {:>8}\n", "rooms", "sim tt", "est tt", "err");
    for row in &r.rows {
        let err = row.err.map(|e| format!("{:+.1}%", 100.0 * e)).unwrap_or_else(|| "jam".into());
        out.push_str(&format!("{:>5} {:>9.2} {:>9.2} {:>8}\n", row.rooms, row.simulated_tt, row.estimated_tt, err));
    }
    out.push_str(&format!(
        "mean |err| {:.1}% (std {:.1}%), rank correlation with length {:.3}\n",
        100.0 * r.mean_abs_err,
        100.0 * r.std_abs_err,
        r.spearman
    ));
    out
}

fn chain(a: &ChainArgs, sim: &SimConfig, json: bool) -> Outcome {
    if a.max < 3 {
        return Err(Failure::Usage("--max must be at least 3".into()));
    }
    let model = load_model(&a.model)?;
    let report = chain_experiment(&a.room, a.max, &model, sim, &estimator_config(&a.estimator))?;
    emit(json, "experiment chain", true, &report, || render_chain(&report));
    Ok(true)
}

fn nightclub(a: &NightclubArgs, sim: &SimConfig, json: bool) -> Outcome {
    let graph = nightclub_graph()?;
    let model = load_model(&a.model)?;
    let est = estimate_environment(&graph, &model, None, &estimator_config(&a.estimator))?;
    let report = simulation_report(&graph, sim, Some(&model), &estimator_config(&a.estimator))?;
    let reference: Vec<_> = NIGHTCLUB_REFERENCE.iter().map(|(k, v)| json!({ "source": k, "tt": v })).collect();
    let reference_errors: Vec<_> =
        NIGHTCLUB_REFERENCE_ERRORS.iter().map(|(k, v)| json!({ "source": k, "err": v })).collect();
    let data = json!({
        "estimate": est,
        "simulated_tt": report.metrics.tt,
        "err": report.err,
        "reference": reference,
        "reference_errors": reference_errors,
    });
    emit(json, "experiment nightclub", true, &data, || {
        let mut out = render_estimate(&est);
        out.push_str(&format!(
            "simulated: {:.2} s ({} agents), estimate error {}\n",
            report.metrics.tt,
            report.metrics.agents_total,
            report.err.map_or("-".into(), |e| format!("{:+.1}%", 100.0 * e))
        ));
        out.push_str("published timings for the original building (not this layout):\n");
        for (k, v) in NIGHTCLUB_REFERENCE {
            out.push_str(&format!("  {k:<12} {v:>6.0} s\n"));
        }
        for (k, v) in NIGHTCLUB_REFERENCE_ERRORS {
            out.push_str(&format!("  {k:<12} {:>+6.2}% against the drill\n", 100.0 * v));
        }
        out
    });
    Ok(true)
}

fn serve(a: &ServeArgs) -> Outcome {
    let model = evac_service::load_model(a.model.as_deref())?;
    if model.is_none() {
        log::warn!("no model loaded; /estimate will answer 422");
    }
    let state = evac_service::AppState::new(evac_service::ServiceConfig {
        model,
        graphs_dir: a.graphs_dir.clone(),
        workers: a.workers,
        estimator: EstimatorConfig::default(),
    });
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(evac_service::serve(std::net::SocketAddr::new(a.host, a.port), state))?;
    Ok(true)
}

fn demo(a: &DemoArgs, seed: u64, sim: &SimConfig, json: bool) -> Outcome {
    let mut cfg = DemoConfig::new(seed);
    cfg.count = a.count;
    cfg.holdout = a.holdout;
    cfg.skip_suite = a.skip_suite;
    if let Some(e) = a.epochs {
        if e == 0 {
            return Err(Failure::Usage("--epochs must be at least 1".into()));
        }
        cfg.surrogate.train.epochs = e;
    }
    if a.holdout >= a.count {
        return Err(Failure::Usage("--holdout must be smaller than --count".into()));
    }
    cfg.surrogate.validation = cfg.surrogate.validation.min((a.count - a.holdout) / 10);
    let records = dataset::generate_records(cfg.count, seed, Profile::Desk, sim)?;
    if let Some(p) = &a.save_data {
        dataset::write_csv(&records, p)?;
    }
    let (report, model) = run_demo_on(&records, &cfg, sim)?;
    if let Some(p) = &a.save_model {
        model.save(p)?;
    }
    emit(json, "demo", true, &report, || render_demo(&report));
    Ok(true)
}
