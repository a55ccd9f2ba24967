//! `treesense`: experiments on adaptive sensing of tree-sparse signals.
//!
//! Every subcommand reads a `key = value` file (`--config`), then applies
//! `--set key=value` overrides and the common flags. Unknown keys are an
//! error so typos do not silently fall back to defaults.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use treesense::bounds::min_amplitude;
use treesense::dictlearn::{learn, learn_to_sparsity, load_dictionary, save_dictionary, GroupNorm, Init, LearnConfig, TrainingSet, WeightScheme};
use treesense::harness::compare::{summarize, COMPARE_KEYS};
use treesense::harness::corpus::{column_major_to_image, corpus_files, load_corpus, read_pgm, resample_column_major, write_pgm};
use treesense::harness::output::{
    manifest_path, write_csv, write_manifest, ObjectiveRow, COMPARISON_HEADER, OBJECTIVE_HEADER, THEOREM_SUMMARY_HEADER, THEOREM_TRIAL_HEADER,
};
use treesense::harness::synth::{planted_compare_inputs, synthetic_corpus, SyntheticConfig};
use treesense::harness::theorem::THEOREM_KEYS;
use treesense::harness::{
    compare_methods, verify_theorem, CompareConfig, CompareInputs, ConfigMap, Method, Split, TestImage, TheoremConfig, Workers,
};
use treesense::sensing::allocate_beta;
use treesense::tree::groups_of;
use treesense::{make_tree, Dictionary};

#[derive(Parser)]
#[command(name = "treesense", version, about = "Adaptive sensing of tree-sparse signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print node, level and group layout of a balanced tree
    TreeInfo(Common),
    /// Monte Carlo check of exact support recovery on synthetic signals
    VerifyTheorem(Common),
    /// Learn a tree-structured orthonormal dictionary from a PGM corpus
    Learn(Common),
    /// Adaptively sense images with a stored dictionary
    Sense(Common),
    /// Reconstruction SNR against measurement count for every method
    Compare(Common),
    /// Write a planted synthetic corpus and its dictionary
    SynthCorpus(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output file (directory for synth-corpus)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn resolve(&self, known: &[&str]) -> Result<ConfigMap> {
        let mut map = match &self.config {
            Some(path) => ConfigMap::load(path)?,
            None => ConfigMap::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
            map.set(k.trim(), v.trim());
        }
        if let Some(s) = self.seed {
            map.set("seed", s.to_string());
        }
        if let Some(t) = self.trials {
            map.set("trials", t.to_string());
        }
        if let Some(o) = &self.out {
            map.set("out", o.display().to_string());
        }
        if let Some(w) = self.workers {
            map.set("workers", w.to_string());
        }
        map.check_known(known)?;
        Ok(map)
    }
}

fn workers(map: &ConfigMap) -> Result<Workers> {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    Ok(Workers::new(map.get_or("workers", default)?)?)
}

fn out_path(map: &ConfigMap, default: &str) -> PathBuf {
    PathBuf::from(map.raw("out").unwrap_or(default))
}

fn required_path(map: &ConfigMap, key: &str) -> Result<PathBuf> {
    map.raw(key).map(PathBuf::from).ok_or_else(|| anyhow!("missing required key `{key}`"))
}

/// Config text for the manifest, without keys that do not affect results.
fn manifest_config(map: &ConfigMap) -> String {
    let mut m = map.clone();
    m.remove("workers");
    m.to_text()
}

fn side_of_dictionary(dict: &Dictionary) -> Result<usize> {
    let n = dict.n();
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || !side.is_power_of_two() {
        bail!("dictionary dimension {n} is not a power-of-two square image");
    }
    Ok(side)
}

fn tree_info(c: &Common) -> Result<()> {
    let map = c.resolve(&["d", "L", "k", "R", "c1", "a"])?;
    let tree = make_tree(map.get_or("d", 2)?, map.get_or("L", 7)?)?;
    let d = tree.degree();
    println!("degree {d}, depth {}, p = {}", tree.depth(), tree.len());
    for level in 0..tree.depth() {
        let r = tree.level_range(level);
        println!("level {level}: nodes {}..{} ({})", r.start, r.end, r.len());
    }
    let groups = groups_of(&tree, None)?;
    let order = groups.order();
    println!(
        "groups: {} (deepest first: node {} first, root last)",
        groups.len(),
        order.first().copied().unwrap_or(0)
    );
    if let Some(k) = map.get::<usize>("k")? {
        println!("k = {k}: exact support recovery takes m = dk + 1 = {} measurements", d * k + 1);
        if let Some(budget) = map.get::<f64>("R")? {
            let beta = allocate_beta(budget, d, k)?;
            let a: f64 = map.get_or("a", 0.5)?;
            let alpha = min_amplitude(map.get_or("c1", 1.0)?, a, d, k, beta)?;
            println!(
                "R = {budget}: beta = {beta:.6}, guaranteed alpha_min = {alpha:.6}, tau = {:.6}",
                a * beta * alpha
            );
        }
    }
    Ok(())
}

fn run_verify_theorem(c: &Common) -> Result<()> {
    let map = c.resolve(THEOREM_KEYS)?;
    let cfg = TheoremConfig::from_config(&map)?;
    let out = out_path(&map, "theorem.csv");
    let report = verify_theorem(&cfg, &workers(&map)?)?;
    for s in &report.skipped {
        eprintln!("skipped {s}");
    }
    let trials_out = out.with_extension("trials.csv");
    write_csv(&out, &report.summary, THEOREM_SUMMARY_HEADER)?;
    write_csv(&trials_out, &report.trials, THEOREM_TRIAL_HEADER)?;
    let mut notes: Vec<String> = report.skipped.iter().map(|s| format!("skipped {s}")).collect();
    notes.push(format!("per-trial rows: {}", trials_out.display()));
    write_manifest(&manifest_path(&out), "verify-theorem", cfg.seed, &manifest_config(&map), &notes)?;
    for s in &report.summary {
        println!(
            "k={} R={} tau={:.4} alpha_min={:.4}: failure rate {:.4} (bound {:.4}), mean m {:.2} (dk+1 = {})",
            s.k, s.budget, s.tau, s.alpha_min, s.failure_rate, s.bound, s.mean_m, s.predicted_m
        );
    }
    Ok(())
}

const LEARN_KEYS: &[&str] = &[
    "corpus",
    "side",
    "d",
    "L",
    "lambda",
    "norm",
    "weight_decay",
    "outer_iters",
    "position_rounds",
    "inner_iters",
    "tol",
    "init",
    "target_sparsity",
    "seed",
    "workers",
    "out",
];

fn parse_norm(s: &str) -> Result<GroupNorm> {
    match s {
        "l2" => Ok(GroupNorm::L2),
        "linf" => Ok(GroupNorm::Linf),
        _ => bail!("norm must be l2 or linf, got {s:?}"),
    }
}

fn run_learn(c: &Common) -> Result<()> {
    let map = c.resolve(LEARN_KEYS)?;
    let corpus = load_corpus(&required_path(&map, "corpus")?, map.get_or("side", 128)?)?;
    let tree = make_tree(map.get_or("d", 2)?, map.get_or("L", 7)?)?;
    let d = LearnConfig::default();
    let cfg = LearnConfig {
        lambda: map.get_or("lambda", d.lambda)?,
        group_norm: map.raw("norm").map(parse_norm).transpose()?.unwrap_or(d.group_norm),
        weights: match map.get::<f64>("weight_decay")? {
            Some(rho) => WeightScheme::DepthDecay(rho),
            None => WeightScheme::Uniform,
        },
        outer_iters: map.get_or("outer_iters", d.outer_iters)?,
        inner_iters: map.get_or("inner_iters", d.inner_iters)?,
        tol: map.get_or("tol", d.tol)?,
        position_rounds: map.get_or("position_rounds", d.position_rounds)?,
    };
    let seed: u64 = map.get_or("seed", 0)?;
    let init = match map.raw("init").unwrap_or("data") {
        "data" => Init::DataColumns { seed },
        "random" => Init::Random { seed },
        "principal" => Init::Principal,
        other => bail!("init must be data, random or principal, got {other:?}"),
    };
    let target: Option<f64> = map.get("target_sparsity")?;
    let out = out_path(&map, "dictionary.lasr");

    let learned = workers(&map)?.install(|| match target {
        Some(t) => learn_to_sparsity(&corpus.set, &tree, &cfg, &init, t),
        None => learn(&corpus.set, &tree, &cfg, &init),
    })?;

    save_dictionary(&out, &learned.dictionary, corpus.set.mean())?;
    let objectives: Vec<ObjectiveRow> = learned
        .report
        .objectives
        .iter()
        .enumerate()
        .map(|(iteration, &objective)| ObjectiveRow { iteration, objective })
        .collect();
    let obj_out = out.with_extension("objectives.csv");
    write_csv(&obj_out, &objectives, OBJECTIVE_HEADER)?;
    let sparsity = learned.mean_sparsity(1e-9);
    let tree_frac = learned.tree_sparse_fraction(1e-9);
    let notes = vec![
        format!("images: {}", corpus.names.len()),
        format!("lambda used: {}", learned.report.lambda),
        format!("alternations: {}", learned.report.alternations()),
        format!("rank-deficient updates: {}", learned.report.rank_deficient_updates),
        format!("position swap rounds: {}", learned.report.position_swaps),
        format!("mean nonzeros per code: {sparsity:.3}"),
        format!("tree-sparse codes: {:.1}%", 100.0 * tree_frac),
        format!("objectives: {}", obj_out.display()),
    ];
    write_manifest(&manifest_path(&out), "learn", seed, &manifest_config(&map), &notes)?;
    if learned.report.rank_deficient_updates > 0 {
        eprintln!(
            "warning: {} dictionary updates were rank deficient; null directions were completed deterministically",
            learned.report.rank_deficient_updates
        );
    }
    println!(
        "learned {} atoms of dimension {} from {} images: objective {:.6} -> {:.6}, {sparsity:.2} nonzeros per code",
        learned.dictionary.p(),
        learned.dictionary.n(),
        corpus.names.len(),
        objectives.first().map_or(f64::NAN, |o| o.objective),
        objectives.last().map_or(f64::NAN, |o| o.objective),
    );
    Ok(())
}

fn with_keys(extra: &[&'static str]) -> Vec<&'static str> {
    COMPARE_KEYS.iter().copied().chain(extra.iter().copied()).collect()
}

/// PGM files at `path` (a file or a directory), resampled to `side`.
fn load_images(path: &Path, side: usize, split: Split) -> Result<Vec<TestImage>> {
    let files = if path.is_dir() { corpus_files(path)? } else { vec![path.to_path_buf()] };
    files
        .iter()
        .map(|f| {
            let img = read_pgm(f)?;
            Ok(TestImage {
                label: f.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                split,
                pixels: resample_column_major(&img, side),
            })
        })
        .collect()
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "in-sample" => Ok(Split::InSample),
        "held-out" => Ok(Split::HeldOut),
        _ => bail!("split must be in-sample or held-out, got {s:?}"),
    }
}

fn write_comparison(
    map: &ConfigMap,
    subcommand: &str,
    inputs: &CompareInputs,
    cfg: &CompareConfig,
    default_out: &str,
    notes: Vec<String>,
) -> Result<()> {
    let out = out_path(map, default_out);
    let rows = compare_methods(inputs, cfg, &workers(map)?)?;
    write_csv(&out, &rows, COMPARISON_HEADER)?;
    write_manifest(&manifest_path(&out), subcommand, cfg.seed, &manifest_config(map), &notes)?;
    let mut table = format!("{:<14} {:>8} {:>10} {:>6} {:>8} {:>9}\n", "method", "tau", "R", "m", "mean_m", "snr_db");
    for s in summarize(&rows) {
        let tau = s.tau.map_or("-".to_string(), |t| format!("{t}"));
        let m = s.m.map_or("stop".to_string(), |m| m.to_string());
        table += &format!(
            "{:<14} {:>8} {:>10.1} {:>6} {:>8.1} {:>9.2}\n",
            s.method, tau, s.budget, m, s.mean_m, s.mean_snr_db
        );
    }
    // a closed pipe (e.g. `| head`) is not an error
    let _ = std::io::stdout().write_all(table.as_bytes());
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn run_sense(c: &Common) -> Result<()> {
    let map = c.resolve(&with_keys(&["dictionary", "images", "split", "workers", "out"]))?;
    let stored = load_dictionary(&required_path(&map, "dictionary")?)?;
    let side = side_of_dictionary(&stored.dictionary)?;
    let mut cfg = CompareConfig::from_config(&map)?;
    if !map.contains("methods") {
        cfg.methods = vec![Method::AdaptiveDict];
    }
    if let Some(m) = cfg.methods.iter().find(|m| !matches!(m, Method::AdaptiveDict | Method::AdaptiveHaar)) {
        bail!("sense runs the adaptive methods only; use compare for {}", m.label());
    }
    let split = map.raw("split").map(parse_split).transpose()?.unwrap_or(Split::HeldOut);
    let images = load_images(&required_path(&map, "images")?, side, split)?;
    if images.is_empty() {
        bail!("no .pgm images found");
    }
    // the adaptive arms need neither training data nor a tuning signal
    let mean_only = TrainingSet::from_columns(nalgebra::DMatrix::from_column_slice(side * side, 1, &stored.mean))?;
    let inputs = CompareInputs {
        tuning: images[0].pixels.clone(),
        dictionary: stored.dictionary,
        mean: stored.mean,
        training: mean_only,
        images,
    };
    let notes = vec![format!("images: {}", inputs.images.len())];
    write_comparison(&map, "sense", &inputs, &cfg, "sense.csv", notes)
}

const COMPARE_EXTRA: &[&str] = &[
    "dictionary",
    "corpus",
    "side",
    "in_sample",
    "heldout",
    "tuning",
    "synthetic",
    "synth_side",
    "synth_depth",
    "synth_k",
    "synth_train",
    "synth_heldout",
    "synth_seed",
    "workers",
    "out",
];

fn corpus_inputs(map: &ConfigMap, notes: &mut Vec<String>) -> Result<CompareInputs> {
    let stored = load_dictionary(&required_path(map, "dictionary")?).context("loading the dictionary container")?;
    let side = side_of_dictionary(&stored.dictionary)?;
    if let Some(s) = map.get::<usize>("side")? {
        if s != side {
            bail!("side = {s} but the dictionary holds {side}x{side} images");
        }
    }
    let corpus = load_corpus(&required_path(map, "corpus")?, side)?;
    let q = corpus.names.len();
    let in_sample: usize = map.get_or("in_sample", 2usize.min(q))?;
    if in_sample > q {
        bail!("in_sample = {in_sample} but the corpus has {q} images");
    }
    let mut images: Vec<TestImage> = (0..in_sample)
        .map(|i| TestImage {
            label: corpus.names[i].trim_end_matches(".pgm").to_string(),
            split: Split::InSample,
            pixels: corpus.set.original_column(i),
        })
        .collect();
    let mut held = match map.raw("heldout") {
        Some(dir) => load_images(Path::new(dir), side, Split::HeldOut)?,
        None => Vec::new(),
    };
    let tuning = if let Some(path) = map.raw("tuning") {
        notes.push(format!("lasso tuning image: {path}"));
        resample_column_major(&read_pgm(Path::new(path))?, side)
    } else if held.len() >= 2 {
        let t = held.pop().unwrap();
        notes.push(format!("lasso tuning image: held-out {}", t.label));
        t.pixels
    } else if q > in_sample {
        notes.push(format!("lasso tuning image: corpus {}", corpus.names[q - 1]));
        corpus.set.original_column(q - 1)
    } else {
        bail!("no image left to tune the Lasso weight; set `tuning`");
    };
    images.extend(held);
    notes.push(format!("training images: {q}, test images: {}", images.len()));
    Ok(CompareInputs {
        dictionary: stored.dictionary,
        mean: stored.mean,
        training: corpus.set,
        tuning,
        images,
    })
}

fn synthetic_inputs(map: &ConfigMap, notes: &mut Vec<String>) -> Result<CompareInputs> {
    let d = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        side: map.get_or("synth_side", d.side)?,
        depth: map.get_or("synth_depth", d.depth)?,
        k: map.get_or("synth_k", d.k)?,
        seed: map.get_or("synth_seed", d.seed)?,
        ..d
    };
    let train: usize = map.get_or("synth_train", 160)?;
    let (inputs, _) = planted_compare_inputs(&cfg, train, map.get_or("in_sample", 2)?, map.get_or("synth_heldout", 2)?)?;
    notes.push(format!("synthetic planted corpus: {cfg:?}"));
    Ok(inputs)
}

fn run_compare(c: &Common) -> Result<()> {
    let map = c.resolve(&with_keys(COMPARE_EXTRA))?;
    let cfg = CompareConfig::from_config(&map)?;
    let mut notes = Vec::new();
    let inputs = if map.get_or("synthetic", false)? {
        synthetic_inputs(&map, &mut notes)?
    } else {
        corpus_inputs(&map, &mut notes)?
    };
    write_comparison(&map, "compare", &inputs, &cfg, "compare.csv", notes)
}

fn run_synth_corpus(c: &Common) -> Result<()> {
    let map = c.resolve(&["side", "depth", "count", "k", "amp_min", "amp_max", "decay", "offset", "seed", "out"])?;
    let d = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        side: map.get_or("side", d.side)?,
        depth: map.get_or("depth", d.depth)?,
        count: map.get_or("count", d.count)?,
        k: map.get_or("k", d.k)?,
        amp_min: map.get_or("amp_min", d.amp_min)?,
        amp_max: map.get_or("amp_max", d.amp_max)?,
        decay: map.get_or("decay", d.decay)?,
        offset: map.get_or("offset", d.offset)?,
        seed: map.get_or("seed", d.seed)?,
    };
    let dir = out_path(&map, "synthetic");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let syn = synthetic_corpus(&cfg)?;
    let mut clamped = 0;
    for i in 0..cfg.count {
        let pixels = syn.image(i);
        clamped += pixels.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        write_pgm(&dir.join(format!("synth{i:04}.pgm")), &column_major_to_image(&pixels, cfg.side), u16::MAX)?;
    }
    let training = syn.training_set()?;
    save_dictionary(&dir.join("planted.lasr"), &syn.dictionary, training.mean())?;
    let notes = vec![format!("pixels clamped to [0, 1]: {clamped}")];
    write_manifest(&dir.join("manifest.txt"), "synth-corpus", cfg.seed, &map.to_text(), &notes)?;
    if clamped > 0 {
        eprintln!("warning: {clamped} pixels fell outside [0, 1] and were clamped");
    }
    println!("wrote {} images and planted.lasr to {}", cfg.count, dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TreeInfo(c) => tree_info(c),
        Command::VerifyTheorem(c) => run_verify_theorem(c),
        Command::Learn(c) => run_learn(c),
        Command::Sense(c) => run_sense(c),
        Command::Compare(c) => run_compare(c),
        Command::SynthCorpus(c) => run_synth_corpus(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
