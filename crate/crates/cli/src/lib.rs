//! `wcdas` command-line studies. Every command resolves its settings from
//! defaults, an optional `--config` file and flags, writes CSV/JSON artifacts
//! into `--out`, and finishes with a `manifest.json` that can be passed back as
//! `--config` to reproduce the same bytes.

pub mod config;
pub mod output;

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use wcdas_core::longtail::{
    evaluate, generate_dataset, train_decoupled_with, DatasetSpec, FrequencyGroup, GroupThresholds, Model,
    TrainConfig, TrainRecord,
};
use wcdas_core::momentfit::{default_grid, preference_map, DEFAULT_SAMPLES};
use wcdas_core::wcdas::{gradcheck, gradient_surface, margin_factor, margin_threshold, HeadKind};

use config::ConfigDoc;
use output::{csv_bytes, num, opt_num, OutputSet};

/// Bad flags, config or inputs. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A verification command ran but its check did not pass.
    VerificationFailed,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<wcdas_core::Error>() {
        Some(wcdas_core::Error::Diverged { .. }) | None => EXIT_VERIFICATION,
        Some(_) => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "wcdas", version, about = "Wrapped Cauchy angular softmax studies")]
pub struct Cli {
    /// Seed for every random stream the command uses.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// JSON, flat key=value, or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// WC-vs-WN preference over a (mu_rho, sigma_rho) grid.
    Preference {
        #[arg(long, value_delimiter = ',')]
        mu: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        sigma: Option<Vec<f64>>,
        /// Concentrations drawn per cell.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Margin amplification factor over a rho grid, and its unit crossing.
    Margin {
        #[arg(long, value_delimiter = ',')]
        rho: Option<Vec<f64>>,
    },
    /// Density gradient with respect to rho over a (rho, theta) grid.
    Gradsurface {
        #[arg(long, value_delimiter = ',')]
        rho: Option<Vec<f64>>,
        /// Evenly spaced angles on [-pi, pi].
        #[arg(long)]
        theta_points: Option<usize>,
    },
    /// Analytic head gradients against central finite differences.
    Gradcheck {
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Number of random instances per head kind.
        #[arg(long)]
        seeds: Option<usize>,
        /// Perturb the analytic gradient; the check must then fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Decoupled two-stage training on the synthetic long-tailed benchmark.
    Train {
        /// wcdas, angular or vmf.
        #[arg(long)]
        head: Option<String>,
        /// Override a setting, e.g. `--set train.rep_lr=0.05`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Accuracy of a saved model on the balanced test split.
    Eval {
        /// Model checkpoint written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preference { .. } => "preference",
            Command::Margin { .. } => "margin",
            Command::Gradsurface { .. } => "gradsurface",
            Command::Gradcheck { .. } => "gradcheck",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceConfig {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        Self {
            mu: default_grid(),
            sigma: default_grid(),
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginConfig {
    pub rho: Vec<f64>,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self {
            rho: (0..100).map(|i| i as f64 / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradSurfaceConfig {
    pub rho: Vec<f64>,
    pub theta_points: usize,
}

impl Default for GradSurfaceConfig {
    fn default() -> Self {
        Self {
            rho: default_grid(),
            theta_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub batch: usize,
    pub classes: usize,
    pub dim: usize,
    pub seeds: usize,
    pub seed: u64,
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            batch: 4,
            classes: 5,
            dim: 8,
            seeds: 20,
            seed: 0,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: PathBuf,
    pub dataset: DatasetSpec,
    pub many_threshold: usize,
    pub few_threshold: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let t = GroupThresholds::default();
        Self {
            model: PathBuf::from("out/model.json"),
            dataset: DatasetSpec::default(),
            many_threshold: t.many,
            few_threshold: t.few,
        }
    }
}

fn apply_sets(doc: &mut ConfigDoc, sets: &[String]) -> Result<(), UsageError> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {s:?}")))?;
        doc.set_text(k.trim(), v.trim());
    }
    Ok(())
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("config serializes")
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let start = Instant::now();
    let mut doc = match &cli.config {
        Some(p) => ConfigDoc::load(p)?,
        None => ConfigDoc::default(),
    };
    let name = cli.command.name();
    match &cli.command {
        Command::Eval { .. } => doc.expect_command(&["eval", "train"])?,
        _ => doc.expect_command(&[name])?,
    }
    let mut out = OutputSet::create(&cli.out)?;
    match &cli.command {
        Command::Preference { mu, sigma, samples } => {
            if let Some(v) = mu {
                doc.set("mu", json!(v));
            }
            if let Some(v) = sigma {
                doc.set("sigma", json!(v));
            }
            if let Some(v) = samples {
                doc.set("samples", json!(v));
            }
            if let Some(v) = cli.seed {
                doc.set("seed", json!(v));
            }
            let cfg: PreferenceConfig = doc.resolve()?;
            cmd_preference(&cfg, &mut out)?;
            out.finish(name, to_value(&cfg), vec![cfg.seed], start.elapsed())?;
            Ok(Outcome::Success)
        }
        Command::Margin { rho } => {
            if let Some(v) = rho {
                doc.set("rho", json!(v));
            }
            let cfg: MarginConfig = doc.resolve()?;
            cmd_margin(&cfg, &mut out)?;
            out.finish(name, to_value(&cfg), vec![], start.elapsed())?;
            Ok(Outcome::Success)
        }
        Command::Gradsurface { rho, theta_points } => {
            if let Some(v) = rho {
                doc.set("rho", json!(v));
            }
            if let Some(v) = theta_points {
                doc.set("theta_points", json!(v));
            }
            let cfg: GradSurfaceConfig = doc.resolve()?;
            cmd_gradsurface(&cfg, &mut out)?;
            out.finish(name, to_value(&cfg), vec![], start.elapsed())?;
            Ok(Outcome::Success)
        }
        Command::Gradcheck {
            batch,
            classes,
            dim,
            seeds,
            corrupt,
        } => {
            for (k, v) in [("batch", batch), ("classes", classes), ("dim", dim), ("seeds", seeds)] {
                if let Some(v) = v {
                    doc.set(k, json!(v));
                }
            }
            if *corrupt {
                doc.set("corrupt", json!(true));
            }
            if let Some(v) = cli.seed {
                doc.set("seed", json!(v));
            }
            let cfg: GradcheckConfig = doc.resolve()?;
            let passed = cmd_gradcheck(&cfg, &mut out)?;
            let seeds = (cfg.seed..cfg.seed + cfg.seeds as u64).collect();
            out.finish(name, to_value(&cfg), seeds, start.elapsed())?;
            Ok(if passed {
                Outcome::Success
            } else {
                Outcome::VerificationFailed
            })
        }
        Command::Train { head, set } => {
            if let Some(h) = head {
                let kind: HeadKind = h.parse().map_err(|e: wcdas_core::Error| UsageError(e.to_string()))?;
                doc.set("train.head", json!(kind));
            }
            if let Some(v) = cli.seed {
                doc.set("train.seed", json!(v));
                doc.set("dataset.data_seed", json!(v));
            }
            apply_sets(&mut doc, set)?;
            let cfg: TrainRunConfig = doc.resolve()?;
            cmd_train(&cfg, &mut out)?;
            out.finish(
                name,
                to_value(&cfg),
                vec![cfg.train.seed, cfg.dataset.data_seed],
                start.elapsed(),
            )?;
            Ok(Outcome::Success)
        }
        Command::Eval { model, set } => {
            if doc.manifest_command.as_deref() == Some("train") {
                doc = eval_doc_from_train(&doc)?;
            }
            if let Some(m) = model {
                doc.set("model", json!(m));
            }
            if let Some(v) = cli.seed {
                doc.set("dataset.data_seed", json!(v));
            }
            apply_sets(&mut doc, set)?;
            let cfg: EvalConfig = doc.resolve()?;
            cmd_eval(&cfg, &mut out)?;
            out.finish(name, to_value(&cfg), vec![cfg.dataset.data_seed], start.elapsed())?;
            Ok(Outcome::Success)
        }
    }
}

/// Evaluation settings matching a training manifest: same data, same group
/// thresholds, and the model it wrote.
fn eval_doc_from_train(train: &ConfigDoc) -> Result<ConfigDoc, UsageError> {
    let cfg: TrainRunConfig = train.resolve()?;
    let model = train.base_dir.clone().unwrap_or_default().join("model.json");
    let eval = EvalConfig {
        model,
        dataset: cfg.dataset,
        many_threshold: cfg.train.many_threshold,
        few_threshold: cfg.train.few_threshold,
    };
    let Value::Object(values) = to_value(&eval) else {
        unreachable!("struct serializes to an object")
    };
    Ok(ConfigDoc {
        values,
        ..Default::default()
    })
}

pub fn cmd_preference(cfg: &PreferenceConfig, out: &mut OutputSet) -> Result<()> {
    let cells = preference_map(&cfg.mu, &cfg.sigma, cfg.samples, cfg.seed)?;
    let rows = cells.iter().map(|c| {
        vec![
            num(c.mu_rho),
            num(c.sigma_rho),
            c.winner.code().to_string(),
            num(c.delta_wc),
            num(c.delta_wn),
            c.n_samples.to_string(),
            c.seed.to_string(),
        ]
    });
    let bytes = csv_bytes(
        &["mu_rho", "sigma_rho", "winner", "delta_wc", "delta_wn", "n_samples", "seed"],
        rows,
    )?;
    out.write("preference.csv", &bytes)?;

    println!("winner by cell (rows sigma_rho, columns mu_rho; C = wrapped Cauchy, N = wrapped Normal)");
    for (i, s) in cfg.sigma.iter().enumerate() {
        let row: String = cells[i * cfg.mu.len()..(i + 1) * cfg.mu.len()]
            .iter()
            .map(|c| if c.winner.code() == "WC" { 'C' } else { 'N' })
            .collect();
        println!("  sigma_rho={s:<5} {row}");
    }
    Ok(())
}

pub fn cmd_margin(cfg: &MarginConfig, out: &mut OutputSet) -> Result<()> {
    let mut rows = Vec::with_capacity(cfg.rho.len());
    for &r in &cfg.rho {
        rows.push(vec![num(r), num(margin_factor(r)?)]);
    }
    out.write("margin.csv", &csv_bytes(&["rho", "factor"], rows)?)?;
    println!("margin factor crosses 1 at rho = {}", num(margin_threshold()));
    Ok(())
}

pub fn cmd_gradsurface(cfg: &GradSurfaceConfig, out: &mut OutputSet) -> Result<()> {
    if cfg.theta_points < 2 {
        return Err(UsageError("theta_points must be at least 2".into()).into());
    }
    let step = 2.0 * PI / (cfg.theta_points - 1) as f64;
    let theta: Vec<f64> = (0..cfg.theta_points).map(|i| -PI + i as f64 * step).collect();
    let surface = gradient_surface(&cfg.rho, &theta)?;
    let rows = cfg.rho.iter().zip(&surface).flat_map(|(&r, line)| {
        theta
            .iter()
            .zip(line)
            .map(move |(&t, &v)| vec![num(r), num(t), num(v)])
    });
    out.write("gradsurface.csv", &csv_bytes(&["rho", "theta", "value"], rows)?)?;
    Ok(())
}

/// Returns whether every head kind passed.
pub fn cmd_gradcheck(cfg: &GradcheckConfig, out: &mut OutputSet) -> Result<bool> {
    if cfg.seeds == 0 {
        return Err(UsageError("seeds must be positive".into()).into());
    }
    let seeds = cfg.seed..cfg.seed + cfg.seeds as u64;
    let mut rows = Vec::new();
    let mut all = true;
    println!("{:<8} {:>10} {:>10} {:>10} {:>10}  result", "head", "weights", "w_conc", "s", "features");
    for kind in HeadKind::ALL {
        let r = gradcheck::gradcheck(kind, cfg.batch, cfg.classes, cfg.dim, seeds.clone(), cfg.corrupt)?;
        let w = &r.worst;
        let verdict = if r.passed() { "pass" } else { "FAIL" };
        println!(
            "{:<8} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}  {verdict}",
            kind.name(),
            w.weights,
            w.w_conc,
            w.s,
            w.features
        );
        all &= r.passed();
        rows.push(vec![
            kind.name().to_string(),
            r.seeds.to_string(),
            num(w.weights),
            num(w.w_conc),
            num(w.s),
            num(w.features),
            r.passed().to_string(),
        ]);
    }
    let header = ["head", "seeds", "weights", "w_conc", "s", "features", "passed"];
    out.write("gradcheck.csv", &csv_bytes(&header, rows)?)?;
    println!("tolerance {:e}: {}", gradcheck::REL_TOL, if all { "pass" } else { "FAIL" });
    Ok(all)
}

fn record_row(r: &TrainRecord) -> Vec<String> {
    vec![
        r.epoch.to_string(),
        r.stage.to_string(),
        num(r.loss),
        num(r.accuracy.all),
        opt_num(r.accuracy.many),
        opt_num(r.accuracy.medium),
        opt_num(r.accuracy.few),
        num(r.s),
    ]
}

fn print_accuracy_table(acc: &wcdas_core::longtail::Accuracy) {
    let cell = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    println!("{:<8} {:>8}", "group", "top-1");
    println!("{:<8} {:>8}", "many", cell(acc.many));
    println!("{:<8} {:>8}", "medium", cell(acc.medium));
    println!("{:<8} {:>8}", "few", cell(acc.few));
    println!("{:<8} {:>8.4}", "all", acc.all);
}

pub fn cmd_train(cfg: &TrainRunConfig, out: &mut OutputSet) -> Result<()> {
    let dataset = generate_dataset(&cfg.dataset)?;
    let mut rho_files = Vec::new();
    let mut on_epoch = |r: &TrainRecord| rho_files.push((r.epoch, r.rho.clone()));
    let (model, records) = train_decoupled_with(&dataset, &cfg.train, &mut on_epoch)?;

    let header = ["epoch", "stage", "loss", "acc_all", "acc_many", "acc_medium", "acc_few", "s"];
    out.write("train_records.csv", &csv_bytes(&header, records.iter().map(record_row))?)?;
    for (epoch, rho) in rho_files {
        let Some(rho) = rho else { continue };
        let rows = rho
            .iter()
            .zip(&dataset.class_counts)
            .enumerate()
            .map(|(j, (&r, &n))| vec![j.to_string(), n.to_string(), num(r)]);
        out.write(&format!("rho_epoch_{epoch}.csv"), &csv_bytes(&["class", "count", "rho"], rows)?)?;
    }
    out.write("head.json", model.head.to_json().as_bytes())?;
    out.write("model.json", model.to_json().as_bytes())?;

    let last = records.last().context("no epochs were run")?;
    println!(
        "{} head, {} epochs, final loss {:.4}, s {:.3}",
        cfg.train.head,
        records.len(),
        last.loss,
        last.s
    );
    print_accuracy_table(&last.accuracy);
    Ok(())
}

pub fn cmd_eval(cfg: &EvalConfig, out: &mut OutputSet) -> Result<()> {
    let text = std::fs::read_to_string(&cfg.model)
        .map_err(|e| UsageError(format!("cannot read model {}: {e}", cfg.model.display())))?;
    let model = Model::from_json(&text)?;
    let dataset = generate_dataset(&cfg.dataset)?;
    if model.encoder.input_dim() != dataset.test.features.ncols() || model.head.classes() != dataset.classes() {
        return Err(UsageError("model does not match the configured dataset".into()).into());
    }
    let thresholds = GroupThresholds {
        many: cfg.many_threshold,
        few: cfg.few_threshold,
    };
    let acc = evaluate(&model, &dataset.test, &dataset.class_counts, thresholds)?;
    let mut text = serde_json::to_string_pretty(&acc)?;
    text.push('\n');
    out.write("eval.json", text.as_bytes())?;
    let groups = thresholds.groups(&dataset.class_counts);
    let rows = acc.per_class.iter().enumerate().map(|(j, a)| {
        let g = match groups[j] {
            FrequencyGroup::Many => "many",
            FrequencyGroup::Medium => "medium",
            FrequencyGroup::Few => "few",
        };
        vec![j.to_string(), dataset.class_counts[j].to_string(), g.to_string(), opt_num(*a)]
    });
    out.write("eval_per_class.csv", &csv_bytes(&["class", "count", "group", "accuracy"], rows)?)?;
    print_accuracy_table(&acc);
    Ok(())
}
