//! Command-line entry point wiring all modules into reproducible pipelines.
//! Every run is fully determined by its inputs and `--seed`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, GradCheckOpts, Tensor};
use crate::checkpoint;
use crate::data::{corpus, detokenize, synth_corpus, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate_corpus;
use crate::ie::{self, ExtractorConfig};
use crate::model::attention::instance_attention_dump;
use crate::model::{beam_search, GenOptions};
use crate::train::{self, nll_loss, TrainConfig};

#[derive(Parser)]
#[command(
    name = "textmanip",
    version,
    about = "Generate table summaries in the style of a reference summary"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus as train/dev/test JSON Lines files.
    SynthData(SynthDataArgs),
    /// Print loader statistics for a corpus file.
    Stats(StatsArgs),
    /// Rewrite a corpus so each instance's reference pair comes from its
    /// type-retrieved neighbor.
    BuildDataset(BuildDatasetArgs),
    /// Train a model and write checkpoints plus a CSV training log.
    Train(TrainArgs),
    /// Decode summaries for a corpus from a checkpoint.
    Generate(GenerateArgs),
    /// Score generated summaries against their corpus.
    Evaluate(EvaluateArgs),
    /// Reference baselines.
    Baseline(BaselineArgs),
    /// Finite-difference gradient checks on a micro configuration.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthDataArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    instances: usize,
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    types: usize,
    /// Output directory for train.jsonl / dev.jsonl / test.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    dev_frac: f64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Args)]
struct BuildDatasetArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Entity attribution window of the extractor.
    #[arg(long, default_value_t = 10)]
    window: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    /// Output directory for checkpoints and the training log.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with `TrainConfig` keys; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    min_freq: Option<usize>,
    /// Epochs for the three stages, e.g. `--stage-epochs 30,10,10`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    stage_epochs: Option<Vec<usize>>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long, default_value_t = false)]
    no_inter_att: bool,
    #[arg(long, default_value_t = false)]
    no_back_trans: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output JSON Lines file of generations.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Also write per-instance attention/copy traces to this JSON file.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Also write per-instance attention matrices to this JSON file.
    #[arg(long)]
    dump_attention: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Generations JSON Lines file produced by `generate` or `baseline`.
    #[arg(long)]
    generations: PathBuf,
    /// Where to write the metric report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mask extracted record tokens on both sides before the BLEU.
    #[arg(long, default_value_t = false)]
    mask_records: bool,
    #[arg(long, default_value_t = 10)]
    window: usize,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(subcommand)]
    which: BaselineKind,
}

#[derive(Subcommand)]
enum BaselineKind {
    /// Rule-based slot filling: refill the reference's record slots from the
    /// source table.
    RuleSf(RuleSfArgs),
}

#[derive(Args)]
struct RuleSfArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    window: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on coordinates checked per parameter.
    #[arg(long)]
    max_coords: Option<usize>,
}

/// One generation output line.
#[derive(Serialize, Deserialize)]
pub struct GenerationLine {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub score: f64,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData(a) => cmd_synth_data(a),
        Command::Stats(a) => cmd_stats(a),
        Command::BuildDataset(a) => cmd_build_dataset(a),
        Command::Train(a) => cmd_train(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Baseline(a) => match a.which {
            BaselineKind::RuleSf(a) => cmd_rule_sf(a),
        },
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn cmd_synth_data(a: SynthDataArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&(a.train_frac + a.dev_frac)) {
        return Err(Error::Config("train_frac + dev_frac must be <= 1".into()));
    }
    let corpus = synth_corpus(&SynthConfig {
        seed: a.seed,
        n_instances: a.instances,
        n_rows: a.rows,
        n_types: a.types,
    })?;
    fs::create_dir_all(&a.out)?;
    let n_train = (a.instances as f64 * a.train_frac).round() as usize;
    let n_dev = (a.instances as f64 * a.dev_frac).round() as usize;
    let (train, rest) = corpus.split_at(n_train.min(corpus.len()));
    let (dev, test) = rest.split_at(n_dev.min(rest.len()));
    for (name, part) in [("train", train), ("dev", dev), ("test", test)] {
        if part.is_empty() {
            continue;
        }
        corpus::write_corpus(&a.out.join(format!("{name}.jsonl")), part)?;
        println!("wrote {} instances to {name}.jsonl", part.len());
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let split = Split::parse(&a.split)?;
    let instances = corpus::parse_corpus(&a.corpus, split)?;
    let stats = corpus::stats(&instances);
    let cfg = ExtractorConfig::default();
    let mentioned: usize = instances
        .iter()
        .filter_map(|i| i.y_aux.as_ref().map(|aux| (i, aux)))
        .map(|(i, aux)| ie::extract_records_from_text(aux, &i.x, &cfg).len())
        .sum();
    println!("#instances          {}", stats.instances);
    println!("avg ref length      {:.2}", stats.avg_reference_len);
    println!("#data types         {}", stats.n_types);
    println!("avg input records   {:.2}", stats.avg_input_records);
    println!(
        "avg output records  {:.2}",
        mentioned as f64 / stats.instances.max(1) as f64
    );
    Ok(())
}

fn cmd_build_dataset(a: BuildDatasetArgs) -> Result<()> {
    let instances = corpus::parse_corpus(&a.corpus, Split::Train)?;
    let cfg = ExtractorConfig {
        entity_window: a.window,
        ..Default::default()
    };
    let rebuilt = ie::build_dataset(&instances, &cfg)?;
    corpus::write_corpus(&a.out, &rebuilt)?;
    println!("wrote {} instances to {}", rebuilt.len(), a.out.display());
    Ok(())
}

fn load_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => toml::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.d {
        cfg.d = v;
    }
    if let Some(v) = a.dropout {
        cfg.dropout = v as crate::autodiff::Scalar;
    }
    if let Some(v) = a.lr {
        cfg.lr = v as crate::autodiff::Scalar;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.min_freq {
        cfg.min_freq = v;
    }
    if let Some(v) = &a.stage_epochs {
        cfg.stage_epochs = [v[0], v[1], v[2]];
    }
    if let Some(v) = a.beam {
        cfg.beam = v;
    }
    if let Some(v) = a.min_len {
        cfg.min_len = v;
    }
    if let Some(v) = a.max_len {
        cfg.max_len = v;
    }
    cfg.no_inter_att |= a.no_inter_att;
    cfg.no_back_trans |= a.no_back_trans;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = load_train_config(&a)?;
    let instances = corpus::parse_corpus(&a.train, Split::Train)?;
    fs::create_dir_all(&a.out)?;

    let model = cfg.model();
    let out_dir = a.out.clone();
    let outcome = train::train(&instances, &cfg, |epoch, params, vocab| {
        checkpoint::save(
            &out_dir.join(format!("epoch_{epoch:03}.ckpt")),
            params,
            &model,
            vocab,
        )
    })?;

    checkpoint::save(
        &a.out.join("model.ckpt"),
        &outcome.params,
        &model,
        &outcome.vocab,
    )?;
    let mut csv = String::from("step,epoch,stage,loss_record,loss_style,loss_back,loss_total,lr\n");
    for row in &outcome.log {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.step,
            row.epoch,
            row.stage,
            row.loss_record,
            row.loss_style,
            row.loss_back,
            row.loss_total,
            row.lr
        ));
    }
    fs::write(a.out.join("train_log.csv"), csv)?;
    println!(
        "trained {} steps; final loss {:.4}; checkpoint at {}",
        outcome.log.len(),
        outcome.log.last().map(|r| r.loss_total).unwrap_or(f64::NAN),
        a.out.join("model.ckpt").display()
    );
    if outcome.skipped_back_translations > 0 {
        println!(
            "skipped {} empty back-translations",
            outcome.skipped_back_translations
        );
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let (params, model, vocab) = checkpoint::load(&a.checkpoint)?;
    let instances = corpus::parse_corpus(&a.corpus, Split::Test)?;
    let defaults = GenOptions::default();
    let opts = GenOptions {
        beam: a.beam.unwrap_or(defaults.beam),
        min_len: a.min_len.unwrap_or(defaults.min_len),
        max_len: a.max_len.unwrap_or(defaults.max_len),
    };

    let results: Vec<_> = instances
        .par_iter()
        .map(|inst| {
            beam_search(&params, &model, &vocab, &inst.x, &inst.y_prime, &opts)
                .map(|r| (inst.id.clone(), r))
        })
        .collect::<Result<_>>()?;

    let mut out = fs::File::create(&a.out)?;
    for (id, r) in &results {
        let line = GenerationLine {
            id: id.clone(),
            text: detokenize(&r.tokens),
            tokens: r.tokens.clone(),
            score: r.score,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    println!("wrote {} generations to {}", results.len(), a.out.display());

    if let Some(path) = &a.traces {
        let traces: BTreeMap<&str, _> = results
            .iter()
            .map(|(id, r)| (id.as_str(), &r.steps))
            .collect();
        fs::write(path, serde_json::to_string(&traces)?)?;
    }
    if let Some(path) = &a.dump_attention {
        let mut dumps = BTreeMap::new();
        for inst in &instances {
            if let Some(dump) =
                instance_attention_dump(&params, &model, &vocab, &inst.x, &inst.y_prime)?
            {
                dumps.insert(inst.id.as_str(), dump);
            }
        }
        fs::write(path, serde_json::to_string(&dumps)?)?;
    }
    Ok(())
}

fn read_generations(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let g: GenerationLine = serde_json::from_str(line)?;
        out.insert(g.id, g.tokens);
    }
    Ok(out)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let instances = corpus::parse_corpus(&a.corpus, Split::Test)?;
    let generations = read_generations(&a.generations)?;
    let mut aligned = Vec::with_capacity(instances.len());
    for inst in &instances {
        let tokens = generations.get(&inst.id).ok_or_else(|| {
            Error::Config(format!("no generation for instance `{}`", inst.id))
        })?;
        aligned.push(tokens.clone());
    }
    let cfg = ExtractorConfig {
        entity_window: a.window,
        ..Default::default()
    };
    let report = evaluate_corpus(&aligned, &instances, &cfg, a.mask_records)?;
    print!("{}", report.formatted());
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&report)?)?;
        println!("report written to {}", out.display());
    }
    Ok(())
}

fn cmd_rule_sf(a: RuleSfArgs) -> Result<()> {
    let instances = corpus::parse_corpus(&a.corpus, Split::Test)?;
    let cfg = ExtractorConfig {
        entity_window: a.window,
        ..Default::default()
    };
    let mut out = fs::File::create(&a.out)?;
    let mut unmapped = 0usize;
    for inst in &instances {
        let x_prime = inst.x_prime.as_ref().ok_or_else(|| {
            Error::Config(format!("instance `{}` has no reference-side table", inst.id))
        })?;
        let filled = crate::baseline::rule_sf(&inst.x, &inst.y_prime, x_prime, &cfg);
        unmapped += filled.unmapped_slots;
        let line = GenerationLine {
            id: inst.id.clone(),
            text: detokenize(&filled.tokens),
            tokens: filled.tokens,
            score: 0.0,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    println!(
        "wrote {} slot-filled summaries to {} ({unmapped} unmapped slots kept verbatim)",
        instances.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    use crate::autodiff::{AdamState, Axis, ParamStore};
    use crate::data::build_vocab;
    use crate::model::init_params;
    use rand::{Rng, SeedableRng};

    let opts = GradCheckOpts {
        epsilon: 1e-5,
        max_coords_per_param: a.max_coords,
        seed: a.seed,
    };
    let mut failures = 0usize;
    let mut check = |name: &str, threshold: f64, report: crate::autodiff::GradCheckReport| {
        let pass = (report.max_rel_err as f64) < threshold;
        println!(
            "{:<28} max_rel_err {:.3e} ({} coords)  {}",
            name,
            report.max_rel_err,
            report.coords_checked,
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failures += 1;
        }
    };

    // Primitive chain: matmul + mul + sigmoid + tanh + softmax + embedding
    // + pick-nll, all in one scalar loss.
    let mut store = ParamStore::new(AdamState::new(0.001, 0.97));
    let mut seeded = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let mut randn = |rows: usize, cols: usize| {
        let data = (0..rows * cols)
            .map(|_| seeded.gen_range(-0.5..0.5))
            .collect();
        Tensor::new(rows, cols, data).unwrap()
    };
    store.insert("a", randn(3, 4));
    store.insert("b", randn(4, 2));
    store.insert("table", randn(3, 5));
    let report = grad_check(&store, opts, |tape, bound| {
        let a = bound.node("a");
        let b = bound.node("b");
        let table = bound.node("table");
        let prod = tape.matmul(a, b); // 3x2
        let sig = tape.sigmoid(prod);
        let tan = tape.tanh(prod);
        let mixed = tape.mul(sig, tan);
        let emb = tape.embed(table, &[1, 4, 1]); // 3x3
        let embt = tape.transpose(emb);
        let joined = tape.matmul(embt, mixed); // 3x2
        let soft = tape.softmax_axis(joined, Axis::Cols)?;
        let col = tape.select_col(soft, 0);
        let nll = tape.nll_pick(col, 1);
        let smooth = tape.mean_all(joined);
        let sq = tape.mul(smooth, smooth);
        let both = tape.concat_cols(&[nll, sq]);
        Ok(tape.mean_all(both))
    })?;
    check("primitive chain", 1e-4, report);

    // Full joint loss on a micro instance.
    let corpus = synth_corpus(&SynthConfig {
        seed: a.seed,
        n_instances: 2,
        n_rows: 1,
        n_types: 2,
    })?;
    let vocab = build_vocab(&corpus, 1);
    let mcfg = crate::model::ModelConfig {
        d: a.d,
        no_inter_att: false,
    };
    let params = init_params(&mcfg, vocab.len(), a.seed, AdamState::new(0.001, 0.97));
    let inst = corpus[0].clone();
    let report = grad_check(&params, opts, |tape, bound| {
        let l_rec = nll_loss(
            tape,
            bound,
            &mcfg,
            &vocab,
            &inst.x,
            &inst.y_prime,
            inst.y_aux.as_ref().unwrap(),
        )?;
        let l_sty = nll_loss(
            tape,
            bound,
            &mcfg,
            &vocab,
            inst.x_prime.as_ref().unwrap(),
            &inst.y_prime,
            &inst.y_prime,
        )?;
        let l_bt = train::back_translation_loss_with_z(
            tape,
            bound,
            &mcfg,
            &vocab,
            inst.x_prime.as_ref().unwrap(),
            &inst.y_aux.clone().unwrap(),
            &inst.y_prime,
        )?;
        train::joint_objective(tape, Some(l_rec), Some(l_sty), Some(l_bt), 0.4, 0.5)
    })?;
    check("full joint loss", 1e-3, report);

    if failures > 0 {
        return Err(Error::Training(format!("{failures} gradient checks failed")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_exits_nonzero() {
        let code = run(["textmanip", "frobnicate"]);
        assert_ne!(code, 0);
    }

    #[test]
    fn help_is_available() {
        // Help prints usage and exits 0 via clap's special handling.
        let code = run(["textmanip", "--help"]);
        assert_eq!(code, 0);
    }
}
