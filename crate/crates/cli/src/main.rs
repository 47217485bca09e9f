//! `boxloss` command-line entry point.
//!
//! Exit codes: 0 success, 1 validation failure (bad arguments, bad input
//! files, failed checks), 2 runtime failure (I/O, aborted runs).

mod format;
mod scenario_file;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use boxloss::experiments::{label_accuracy_experiment, occlusion_recall_experiment, RecallSummary};
use boxloss::nms::greedy_nms;
use boxloss::oracle::{grad_check_suite, GradCheckReport};
use boxloss::{loss_eval, run_descent, BBox, DescentRun, LossKind, PushConfig};
use clap::{Parser, Subcommand};

use crate::format::{point, trace};
use crate::scenario_file::ScenarioFile;

#[derive(Debug, Parser)]
#[command(
    name = "boxloss",
    version,
    about = "IoU-family box regression losses and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one loss and its gradient.
    Loss {
        #[arg(long)]
        kind: LossKind,
        /// Predicted box as x1,y1,x2,y2.
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        pred: BBox,
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        gt: BBox,
        #[arg(long = "second-gt", value_parser = parse_box, allow_hyphen_values = true)]
        second_gt: Option<BBox>,
        #[arg(long, default_value_t = boxloss::losses::DEFAULT_PUSH_ALPHA)]
        alpha: f64,
    },
    /// Compare analytic gradients against central finite differences.
    Gradcheck {
        /// A loss kind, or `all`.
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Run a scenario file and write its trace as CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's loss.
        #[arg(long)]
        loss: Option<LossKind>,
    },
    /// Paired recall after NMS on two-object occlusion scenes.
    NmsDemo {
        /// IoU between the two ground truths.
        #[arg(long, default_value_t = 0.55)]
        overlap: f64,
        /// Loss pair `a,b`. Without it both iou,pushiou and deciou,pushdeciou run.
        #[arg(long, value_parser = parse_loss_pair)]
        losses: Option<(LossKind, LossKind)>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = boxloss::losses::DEFAULT_PUSH_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Confidence labels with and without the dynamic anchor.
    Labels {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_box(s: &str) -> Result<BBox, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let coords: [f64; 4] = parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 comma-separated numbers, got {}", v.len()))?;
    BBox::try_from(coords).map_err(|e| e.to_string())
}

fn parse_loss_pair(s: &str) -> Result<(LossKind, LossKind), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| "expected two comma-separated loss kinds".to_string())?;
    let a = a
        .trim()
        .parse()
        .map_err(|e: boxloss::error::LossError| e.to_string())?;
    let b = b
        .trim()
        .parse()
        .map_err(|e: boxloss::error::LossError| e.to_string())?;
    Ok((a, b))
}

#[derive(Debug)]
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

type CmdResult = Result<String, Failure>;

fn validation<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Validation(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn cmd_loss(
    kind: LossKind,
    pred: &BBox,
    gt: &BBox,
    second_gt: Option<&BBox>,
    alpha: f64,
) -> CmdResult {
    let cfg = PushConfig::new(alpha).map_err(validation)?;
    let eval = loss_eval(kind, pred, gt, second_gt, &cfg).map_err(validation)?;
    let mut out = String::new();
    writeln!(out, "kind={kind}").unwrap();
    if kind.is_push() {
        writeln!(out, "alpha={}", point(alpha)).unwrap();
    }
    writeln!(out, "value={}", point(eval.value)).unwrap();
    let grad: Vec<String> = eval.grad.iter().map(|g| point(*g)).collect();
    writeln!(out, "grad={}", grad.join(",")).unwrap();
    Ok(out)
}

fn render_report(out: &mut String, r: &GradCheckReport) {
    writeln!(
        out,
        "kind={} samples={} checked={} skipped_near_clamp={} max_rel={} max_abs={}",
        r.kind,
        r.samples,
        r.checked(),
        r.skipped_near_clamp,
        point(r.max_rel_error),
        point(r.max_abs_error)
    )
    .unwrap();
    if let Some(w) = &r.worst_case {
        write!(
            out,
            "  worst: component={} analytic={} numeric={} pred={} gt={}",
            ["x1", "y1", "x2", "y2"][w.component],
            point(w.analytic),
            point(w.numeric),
            w.pred,
            w.gt
        )
        .unwrap();
        if let Some(s) = &w.second_gt {
            write!(out, " second_gt={s}").unwrap();
        }
        writeln!(out).unwrap();
    }
    writeln!(
        out,
        "GRADCHECK kind={} max_rel={} pass={}",
        r.kind,
        point(r.max_rel_error),
        r.passed()
    )
    .unwrap();
}

fn cmd_gradcheck(kind: &str, samples: usize, seed: u64, tolerance: f64) -> CmdResult {
    if samples == 0 {
        return Err(validation(anyhow::anyhow!("--samples must be at least 1")));
    }
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(validation(anyhow::anyhow!(
            "--tolerance must be non-negative"
        )));
    }
    let kinds: Vec<LossKind> = if kind.eq_ignore_ascii_case("all") {
        LossKind::ALL.to_vec()
    } else {
        vec![kind.parse().map_err(validation)?]
    };
    let mut out = String::new();
    let mut all_pass = true;
    for k in kinds {
        let report = grad_check_suite(k, samples, seed, tolerance);
        all_pass &= report.passed();
        render_report(&mut out, &report);
    }
    if all_pass {
        Ok(out)
    } else {
        print!("{out}");
        Err(validation(anyhow::anyhow!("gradient check failed")))
    }
}

const CSV_HEADER: &str = "step,pred_index,x1,y1,x2,y2,loss,iou_gt,iou_gt2,shape_error,conf_label";

fn write_trace(path: &Path, run: &DescentRun) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{CSV_HEADER}")?;
    for r in &run.rows {
        let [x1, y1, x2, y2] = r.bbox.coords();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.pred_index,
            trace(x1),
            trace(y1),
            trace(x2),
            trace(y2),
            trace(r.loss_value),
            trace(r.iou_to_gt),
            trace(r.iou_to_second_gt),
            trace(r.shape_error),
            trace(r.confidence_label)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(scenario: &Path, out_path: &Path, loss: Option<LossKind>) -> CmdResult {
    let mut file = ScenarioFile::load(scenario).map_err(validation)?;
    if let Some(k) = loss {
        file.loss = k;
    }
    let scenario = file.into_scenario().map_err(validation)?;
    let run = run_descent(&scenario).map_err(runtime)?;
    write_trace(out_path, &run).map_err(runtime)?;

    let mut out = format!(
        "SIMULATE name={} loss={} alpha={} dynamic_anchor={} steps={} preds={} \
         final_mean_iou_gt={} final_mean_shape_error={} corner_swaps={}",
        scenario.name,
        scenario.loss,
        point(scenario.push.alpha()),
        scenario.dynamic_anchor,
        scenario.steps,
        run.pred_count,
        point(run.mean_final(|r| r.iou_to_gt)),
        point(run.mean_final(|r| r.shape_error)),
        run.corner_swaps
    );
    if let Some(t) = scenario.nms_threshold {
        let kept = greedy_nms(&run.final_detections(), t);
        write!(out, " nms_threshold={} nms_kept={}", point(t), kept.len()).unwrap();
    }
    out.push('\n');
    Ok(out)
}

fn render_recall(out: &mut String, s: &RecallSummary) {
    writeln!(out, "{:<12} {:<16} mean_iou_gt2", "loss", "mean_recall").unwrap();
    for (k, r, i2) in [
        (s.loss_a, s.mean_recall_a, s.mean_iou_to_second_gt_a),
        (s.loss_b, s.mean_recall_b, s.mean_iou_to_second_gt_b),
    ] {
        writeln!(out, "{:<12} {:<16} {}", k.name(), point(r), point(i2)).unwrap();
    }
    writeln!(
        out,
        "paired {}-{}: mean_diff={} wins={} losses={} ties={}",
        s.loss_b,
        s.loss_a,
        point(s.mean_difference()),
        s.wins,
        s.losses,
        s.ties
    )
    .unwrap();
}

fn cmd_nms_demo(
    overlap: f64,
    losses: Option<(LossKind, LossKind)>,
    trials: usize,
    alpha: f64,
    seed: u64,
) -> CmdResult {
    let cfg = PushConfig::new(alpha).map_err(validation)?;
    let pairs = match losses {
        Some(p) => vec![p],
        None => vec![
            (LossKind::IoU, LossKind::PushIoU),
            (LossKind::DecIoU, LossKind::PushDecIoU),
        ],
    };
    let mut out = format!(
        "NMS-DEMO overlap={} trials={trials} alpha={} seed={seed} nms_threshold=0.5 match_iou=0.5\n",
        point(overlap),
        point(alpha)
    );
    for (a, b) in pairs {
        let s =
            occlusion_recall_experiment(overlap, a, b, trials, &cfg, seed).map_err(validation)?;
        out.push('\n');
        render_recall(&mut out, &s);
    }
    Ok(out)
}

fn cmd_labels(trials: usize, seed: u64) -> CmdResult {
    let s = label_accuracy_experiment(trials, seed).map_err(validation)?;
    let mut out = format!(
        "LABELS trials={} seed={seed} mean_plain={} mean_dynamic={} exceed_fraction={}\n",
        s.trials,
        point(s.mean_plain),
        point(s.mean_dynamic),
        point(s.exceed_fraction)
    );
    writeln!(
        out,
        "{:<16} {:>6} {:<16} {:<16} {:>8} {:>8}",
        "family", "count", "mean_plain", "mean_dynamic", "at_least", "exceeds"
    )
    .unwrap();
    for (name, f) in [
        ("center_aligned", s.center_aligned),
        ("equal_dims", s.equal_dims),
        ("mixed", s.mixed),
    ] {
        writeln!(
            out,
            "{:<16} {:>6} {:<16} {:<16} {:>8} {:>8}",
            name,
            f.count,
            point(f.mean_plain),
            point(f.mean_dynamic),
            f.dynamic_at_least_plain,
            f.dynamic_exceeds_plain
        )
        .unwrap();
    }
    Ok(out)
}

fn configure_threads() {
    if let Some(n) = std::env::var("BOXLOSS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
    {
        // Fails only if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    configure_threads();

    let result = match &cli.command {
        Command::Loss {
            kind,
            pred,
            gt,
            second_gt,
            alpha,
        } => cmd_loss(*kind, pred, gt, second_gt.as_ref(), *alpha),
        Command::Gradcheck {
            kind,
            samples,
            seed,
            tolerance,
        } => cmd_gradcheck(kind, *samples, *seed, *tolerance),
        Command::Simulate {
            scenario,
            out,
            loss,
        } => cmd_simulate(scenario, out, *loss),
        Command::NmsDemo {
            overlap,
            losses,
            trials,
            alpha,
            seed,
        } => cmd_nms_demo(*overlap, *losses, *trials, *alpha, *seed),
        Command::Labels { trials, seed } => cmd_labels(*trials, *seed),
    };

    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (Failure::Validation(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.exit_code())
        }
    }
}
