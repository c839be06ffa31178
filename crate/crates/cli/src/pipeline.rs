//! The pipeline stages behind each subcommand.
//!
//! Every stage reads its inputs from `output_dir`, writes its outputs there
//! atomically, and returns the rows it wrote. Errors are reported in
//! centimeters in every CSV.

use crate::config::{Baseline, ConfigError, PipelineConfig};
use anyhow::{bail, Context, Result};
use augsearch::depth::{export_pgm, load_dataset, save_dataset, write_atomic};
use augsearch::nnet::{
    encode_checkpoint, evaluate_sequence, median, rollout_policy, score_sequence, train_bc,
    SequenceScore, TrainConfig,
};
use augsearch::scene::{
    make_dataset, rollout_controller, sample_reach_scene, scripted_expert, Demonstration,
    ExpertController,
};
use augsearch::search::{run_search, LogEntry, SearchError, StopReason};
use augsearch::transforms::{apply_sequence, enumerate_choices};
use augsearch::{
    AugmentationSequence, Dataset, Domain, Magnitude, Rng, TransformKind, TransformSpec,
};
use rayon::prelude::*;
use std::io::Write;
use std::path::{Path, PathBuf};

const CM: f64 = 100.0;

// Stream tags under the global seed.
const SIM_TRAIN_STREAM: u64 = 1;
const SIM_VAL_STREAM: u64 = 2;
const PSEUDO_REAL_STREAM: u64 = 3;
const RANDOM_BASELINE_STREAM: u64 = 4;
const DEMO_STREAM: u64 = 5;
const ROLLOUT_STREAM: u64 = 6;
const PREVIEW_STREAM: u64 = 7;

pub const SIM_TRAIN_FILE: &str = "sim_train.daug";
pub const SIM_VAL_FILE: &str = "sim_val.daug";
pub const PSEUDO_REAL_FILE: &str = "pseudoreal.daug";
pub const TABLE1_FILE: &str = "table1.csv";
pub const TABLE2_FILE: &str = "table2.csv";
pub const TABLE3_FILE: &str = "table3.csv";

pub fn search_log_file(k: usize) -> String {
    format!("search_k{k}.csv")
}

pub fn best_sequence_file(k: usize) -> String {
    format!("best_sequence_k{k}.txt")
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    Rng::stream(seed, stream).next_u64()
}

/// Runs `f` over `items` on up to `workers` threads. Output order follows
/// input order whatever the thread count.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}), running serially");
            items.iter().map(f).collect()
        }
    }
}

/// Output directory plus the provenance line stamped on its CSVs.
pub struct Run<'a> {
    pub cfg: &'a PipelineConfig,
    pub workers: usize,
    hash: String,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a PipelineConfig, workers: usize) -> Self {
        Self {
            cfg,
            workers: workers.max(1),
            hash: cfg.sha256(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn ensure_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.cfg.output_dir)
            .with_context(|| format!("cannot create {}", self.cfg.output_dir.display()))
    }

    fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
        let mut text = format!("# config_sha256={}\n{header}\n", self.hash);
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        let path = self.path(name);
        write_atomic(&path, text.as_bytes())
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    fn dataset(&self, name: &str, domain: Domain) -> Result<Dataset> {
        let path = self.path(name);
        let ds = load_dataset(&path)
            .with_context(|| format!("cannot load {} (run gen-data first)", path.display()))?;
        if ds.domain() != domain {
            bail!(
                "{} holds {} frames, expected {domain}",
                path.display(),
                ds.domain()
            );
        }
        if ds.width() != self.cfg.image_size || ds.height() != self.cfg.image_size {
            bail!(
                "{} has {}x{} frames but image_size is {}",
                path.display(),
                ds.width(),
                ds.height(),
                self.cfg.image_size
            );
        }
        Ok(ds)
    }

    fn datasets(&self) -> Result<Datasets> {
        Ok(Datasets {
            sim_train: self.dataset(SIM_TRAIN_FILE, Domain::Sim)?,
            sim_val: self.dataset(SIM_VAL_FILE, Domain::Sim)?,
            pseudo_real: self.dataset(PSEUDO_REAL_FILE, Domain::PseudoReal)?,
        })
    }

    /// Training configs for each evaluation seed.
    fn train_seeds(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        (0..self.cfg.eval_seeds as u64)
            .map(|i| TrainConfig {
                seed: base.seed.wrapping_add(i),
                ..*base
            })
            .collect()
    }

    fn learned_sequence(&self, k: usize) -> Result<AugmentationSequence> {
        let path = self.path(&best_sequence_file(k));
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {} (run search first)", path.display()))?;
        text.trim()
            .parse()
            .with_context(|| format!("bad sequence in {}", path.display()))
    }
}

struct Datasets {
    sim_train: Dataset,
    sim_val: Dataset,
    pseudo_real: Dataset,
}

impl Datasets {
    fn evaluate(&self, seq: &AugmentationSequence, train: &TrainConfig) -> Result<SequenceScore> {
        evaluate_sequence(
            seq,
            &self.sim_train,
            &self.sim_val,
            &self.pseudo_real,
            train,
        )
        .with_context(|| format!("training with {seq} failed"))
    }
}

fn cm(v: f64) -> String {
    format!("{:.4}", v * CM)
}

/// Sim and shifted-domain error of one table row, in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Errors {
    pub sim: f64,
    pub pseudo_real: f64,
}

fn median_errors(scores: &[SequenceScore]) -> Errors {
    let sim: Vec<f64> = scores.iter().map(|s| s.sim_error).collect();
    let real: Vec<f64> = scores.iter().map(|s| s.pseudo_real_error).collect();
    Errors {
        sim: median(&sim),
        pseudo_real: median(&real),
    }
}

pub fn gen_data(run: &Run) -> Result<Vec<PathBuf>> {
    run.ensure_dir()?;
    let cfg = run.cfg;
    let jobs = [
        (SIM_TRAIN_FILE, cfg.sim_train, Domain::Sim, SIM_TRAIN_STREAM),
        (SIM_VAL_FILE, cfg.sim_val, Domain::Sim, SIM_VAL_STREAM),
        (
            PSEUDO_REAL_FILE,
            cfg.pseudo_real,
            Domain::PseudoReal,
            PSEUDO_REAL_STREAM,
        ),
    ];
    let built = parallel_map(&jobs, run.workers, |&(name, size, domain, stream)| {
        let seed = derived_seed(cfg.seed, stream);
        log::info!(
            "{name}: {} scenes x {} views, seed {seed}",
            size.scenes,
            size.views
        );
        let ds = make_dataset(size.scenes, size.views, domain, cfg.image_size, seed);
        let path = run.path(name);
        save_dataset(&ds, &path).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    });
    built.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformRow {
    pub kind: TransformKind,
    pub magnitude: Option<Magnitude>,
    pub errors: Errors,
}

/// Single-transform study: each kind alone at probability 1, keeping the
/// magnitude with the lower median shifted-domain error.
pub fn eval_transforms(run: &Run) -> Result<Vec<TransformRow>> {
    let data = run.datasets()?;
    let seeds = run.train_seeds(&run.cfg.train);
    let mut variants = Vec::new();
    for kind in TransformKind::ALL {
        let mags: &[Magnitude] = if kind.is_parameterless() {
            &[Magnitude::Low]
        } else {
            &Magnitude::ALL
        };
        for &m in mags {
            variants.push((kind, m));
        }
    }
    let jobs: Vec<(usize, &TrainConfig)> = (0..variants.len())
        .flat_map(|v| seeds.iter().map(move |s| (v, s)))
        .collect();
    let scores = parallel_map(&jobs, run.workers, |&(v, train)| {
        let (kind, m) = variants[v];
        let seq =
            AugmentationSequence::new(vec![TransformSpec::always(kind, m)]).expect("one spec");
        data.evaluate(&seq, train)
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>>>()?;
    let per_variant: Vec<Errors> = scores.chunks(seeds.len()).map(median_errors).collect();

    let mut rows: Vec<TransformRow> = Vec::new();
    for (&(kind, m), errors) in variants.iter().zip(per_variant) {
        let row = TransformRow {
            kind,
            magnitude: (!kind.is_parameterless()).then_some(m),
            errors,
        };
        match rows.last_mut() {
            Some(prev) if prev.kind == kind => {
                if errors.pseudo_real < prev.errors.pseudo_real {
                    *prev = row;
                }
            }
            _ => rows.push(row),
        }
    }
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            let m = match r.magnitude {
                None => "-",
                Some(Magnitude::Low) => "L",
                Some(Magnitude::High) => "H",
            };
            format!(
                "{},{m},{},{}",
                r.kind.name(),
                cm(r.errors.sim),
                cm(r.errors.pseudo_real)
            )
        })
        .collect();
    run.write_csv(
        TABLE1_FILE,
        "kind,magnitude,sim_error,pseudoreal_error",
        &lines,
    )?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub length: usize,
    pub baseline_score: f64,
    pub best_sequence: AugmentationSequence,
    pub best_score: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub stop: StopReason,
}

fn log_line(e: &LogEntry) -> String {
    format!(
        "{},{},{},{}",
        e.iteration,
        e.sequence,
        cm(e.score),
        cm(e.best_so_far)
    )
}

/// One search per learned baseline length. The reward baseline is the score
/// of training without augmentation.
pub fn search(run: &Run) -> Result<Vec<SearchOutcome>> {
    let cfg = run.cfg;
    let lengths = cfg.learned_lengths();
    if lengths.is_empty() {
        return Err(
            ConfigError("no learned-k baseline configured, nothing to search".into()).into(),
        );
    }
    let data = run.datasets()?;
    let e0 = score_sequence(
        &AugmentationSequence::empty(),
        &data.sim_train,
        &data.pseudo_real,
        &cfg.train,
    )
    .context("scoring the unaugmented baseline failed")?;
    if !(e0.is_finite() && e0 > 0.0) {
        bail!("unaugmented baseline score {e0} cannot serve as reward baseline");
    }
    log::info!("baseline (no augmentation) score {:.2} cm", e0 * CM);
    let mut out = Vec::new();
    for k in lengths {
        let mut scfg = cfg.search.clone();
        scfg.sequence_length = k;
        scfg.reward_baseline = e0;
        let log_path = run.path(&search_log_file(k));
        let mut partial_name = log_path.file_name().unwrap().to_os_string();
        partial_name.push(".partial");
        let partial = log_path.with_file_name(partial_name);
        let file = std::fs::File::create(&partial)
            .with_context(|| format!("cannot create {}", partial.display()))?;
        let mut stream = std::io::BufWriter::new(file);
        writeln!(stream, "# config_sha256={}\n{}", run.hash, LOG_HEADER)?;
        let mut io_error = None;
        let mut observer = |e: &LogEntry| {
            log::info!(
                "k={k} eval {}: {} -> {:.2} cm (best {:.2})",
                e.iteration,
                e.sequence,
                e.score * CM,
                e.best_so_far * CM
            );
            if io_error.is_none() {
                if let Err(err) = writeln!(stream, "{}", log_line(e)).and_then(|_| stream.flush()) {
                    io_error = Some(err);
                }
            }
        };
        let result = run_search(
            &data.sim_train,
            &data.pseudo_real,
            &scfg,
            &cfg.train,
            run.workers,
            &mut observer,
        );
        drop(stream);
        if let Some(err) = io_error {
            return Err(err).with_context(|| format!("cannot write {}", partial.display()));
        }
        let result = match result {
            Ok(r) => r,
            Err(e @ SearchError::Config(_)) => return Err(ConfigError(e.to_string()).into()),
            Err(e) => {
                return Err(e).with_context(|| {
                    format!("search k={k} failed, partial log in {}", partial.display())
                })
            }
        };
        let lines: Vec<String> = result.log.iter().map(log_line).collect();
        run.write_csv(&search_log_file(k), LOG_HEADER, &lines)?;
        std::fs::remove_file(&partial).ok();
        let best_path = run.path(&best_sequence_file(k));
        write_atomic(&best_path, format!("{}\n", result.best_sequence).as_bytes())
            .with_context(|| format!("cannot write {}", best_path.display()))?;
        log::info!(
            "k={k}: {} after {} evaluations ({:?}), {:.2} cm",
            result.best_sequence,
            result.log.len(),
            result.stop,
            result.best_score * CM
        );
        out.push(SearchOutcome {
            length: k,
            baseline_score: e0,
            best_sequence: result.best_sequence,
            best_score: result.best_score,
            evaluations: result.log.len(),
            iterations: result.iterations,
            stop: result.stop,
        });
    }
    Ok(out)
}

const LOG_HEADER: &str = "iteration,sequence,score,best_so_far";

/// A length-`k` sequence drawn uniformly over the full choice grid, one
/// slot at a time, honoring the once-per-kind rule.
pub fn random_sequence(k: usize, rng: &mut Rng) -> AugmentationSequence {
    let mut specs: Vec<TransformSpec> = Vec::with_capacity(k);
    for _ in 0..k {
        let used = specs
            .iter()
            .map(|s| s.kind)
            .filter(|&kind| kind != TransformKind::Identity)
            .collect();
        let choices = enumerate_choices(&used);
        specs.push(choices[rng.below(choices.len() as u64) as usize]);
    }
    AugmentationSequence::new(specs).expect("choices respect once-per-kind")
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRow {
    pub baseline: Baseline,
    /// Rendered sequence, or a description for averaged rows.
    pub sequence: String,
    pub errors: Errors,
}

/// Scores every configured baseline. Random rows average their sequences
/// per training seed; all rows then take the median over seeds.
pub fn compare(run: &Run) -> Result<Vec<BaselineRow>> {
    let cfg = run.cfg;
    let data = run.datasets()?;
    let seeds = run.train_seeds(&cfg.train);
    let mut random_rng = Rng::new(derived_seed(cfg.seed, RANDOM_BASELINE_STREAM));
    let mut groups: Vec<(Baseline, Vec<AugmentationSequence>)> = Vec::new();
    for &b in &cfg.baselines {
        let seqs = match b {
            Baseline::None => vec![AugmentationSequence::empty()],
            Baseline::Handcrafted => vec![AugmentationSequence::handcrafted()],
            Baseline::Learned(k) => vec![run.learned_sequence(k)?],
            Baseline::Random(k) => (0..cfg.random_sequences)
                .map(|_| random_sequence(k, &mut random_rng))
                .collect(),
        };
        groups.push((b, seqs));
    }
    let mut jobs: Vec<(usize, usize, &TrainConfig)> = Vec::new();
    for (g, (_, seqs)) in groups.iter().enumerate() {
        for s in 0..seqs.len() {
            jobs.extend(seeds.iter().map(|t| (g, s, t)));
        }
    }
    let scores = parallel_map(&jobs, run.workers, |&(g, s, train)| {
        data.evaluate(&groups[g].1[s], train)
    });
    let mut scores = scores.into_iter();
    let mut rows = Vec::new();
    for (baseline, seqs) in &groups {
        // Jobs are ordered sequence-major, seed-minor.
        let mut per_seed = vec![(0.0, 0.0); seeds.len()];
        for _ in seqs {
            for acc in per_seed.iter_mut() {
                let s = scores.next().expect("one score per job")?;
                acc.0 += s.sim_error / seqs.len() as f64;
                acc.1 += s.pseudo_real_error / seqs.len() as f64;
            }
        }
        let per_seed: Vec<SequenceScore> = per_seed
            .into_iter()
            .map(|(sim, real)| SequenceScore {
                sim_error: sim,
                pseudo_real_error: real,
            })
            .collect();
        let sequence = match seqs.as_slice() {
            [one] => one.render(),
            many => format!("mean of {} random sequences", many.len()),
        };
        rows.push(BaselineRow {
            baseline: *baseline,
            sequence,
            errors: median_errors(&per_seed),
        });
    }
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                r.baseline,
                r.sequence,
                cm(r.errors.sim),
                cm(r.errors.pseudo_real)
            )
        })
        .collect();
    run.write_csv(
        TABLE2_FILE,
        "baseline,sequence,sim_error,pseudoreal_error",
        &lines,
    )?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyRow {
    pub policy: String,
    pub sequence: String,
    /// Median successes over training seeds.
    pub sim_successes: f64,
    pub pseudo_real_successes: f64,
    pub trials: usize,
}

/// Expert demonstrations for BC, one reach scene per stream.
pub fn demonstrations(n: usize, size: usize, seed: u64) -> Result<Vec<Demonstration>> {
    (0..n)
        .map(|i| {
            let scene = sample_reach_scene(&mut Rng::stream(seed, i as u64));
            scripted_expert(&scene, size)
                .with_context(|| format!("expert failed on demo scene {i}"))
        })
        .collect()
}

/// Trains BC policies with and without the learned sequence and rolls both
/// out in each domain. Both policies face the same rollout scenes.
pub fn bc(run: &Run) -> Result<Vec<PolicyRow>> {
    let cfg = run.cfg;
    let learned = run.learned_sequence(cfg.bc.learned_length)?;
    let size = cfg.image_size;
    let demos = demonstrations(cfg.bc.demos, size, derived_seed(cfg.seed, DEMO_STREAM))?;
    let rollout_seed = derived_seed(cfg.seed, ROLLOUT_STREAM);
    let trials = cfg.bc.trials;
    let variants = [
        ("none", AugmentationSequence::empty()),
        ("learned", learned),
    ];
    let seeds = run.train_seeds(&cfg.bc.train);
    let jobs: Vec<(usize, &TrainConfig)> = (0..variants.len())
        .flat_map(|v| seeds.iter().map(move |s| (v, s)))
        .collect();
    run.ensure_dir()?;
    let outcomes = parallel_map(&jobs, run.workers, |&(v, train)| -> Result<(f64, f64)> {
        let (name, seq) = &variants[v];
        let (model, _) =
            train_bc(&demos, seq, train).with_context(|| format!("BC training ({name}) failed"))?;
        let path = run.path(&format!("policy_{name}_seed{}.maug", train.seed));
        let bytes = encode_checkpoint(&model)?;
        write_atomic(&path, &bytes).with_context(|| format!("cannot write {}", path.display()))?;
        let sim = rollout_policy(&model, Domain::Sim, trials, rollout_seed);
        let real = rollout_policy(&model, Domain::PseudoReal, trials, rollout_seed);
        log::info!(
            "policy {name} seed {}: sim {sim}/{trials}, pseudoreal {real}/{trials}",
            train.seed
        );
        Ok((sim as f64, real as f64))
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let expert = |domain| {
        rollout_controller(&mut ExpertController, domain, trials, size, rollout_seed) as f64
    };
    let mut rows = vec![PolicyRow {
        policy: "expert".into(),
        sequence: "-".into(),
        sim_successes: expert(Domain::Sim),
        pseudo_real_successes: expert(Domain::PseudoReal),
        trials,
    }];
    for ((name, seq), chunk) in variants.iter().zip(outcomes.chunks(seeds.len())) {
        let sim: Vec<f64> = chunk.iter().map(|o| o.0).collect();
        let real: Vec<f64> = chunk.iter().map(|o| o.1).collect();
        rows.push(PolicyRow {
            policy: (*name).into(),
            sequence: seq.render(),
            sim_successes: median(&sim),
            pseudo_real_successes: median(&real),
            trials,
        });
    }
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.policy, r.sequence, r.sim_successes, r.pseudo_real_successes, r.trials
            )
        })
        .collect();
    run.write_csv(
        TABLE3_FILE,
        "policy,sequence,sim_successes,pseudoreal_successes,trials",
        &lines,
    )?;
    Ok(rows)
}

/// Writes `count` (original, augmented) PGM pairs into `output_dir/preview`.
pub fn preview(
    run: &Run,
    sequence: &str,
    count: usize,
    dataset: Option<&Path>,
) -> Result<Vec<(PathBuf, PathBuf)>> {
    let seq: AugmentationSequence = sequence
        .parse()
        .map_err(|e| ConfigError(format!("--sequence: {e}")))?;
    let ds = match dataset {
        Some(p) => load_dataset(p).with_context(|| format!("cannot load {}", p.display()))?,
        None => run.dataset(SIM_TRAIN_FILE, Domain::Sim)?,
    };
    let dir = run.path("preview");
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let seed = derived_seed(run.cfg.seed, PREVIEW_STREAM);
    let mut out = Vec::new();
    for (i, item) in ds.items().iter().take(count).enumerate() {
        let augmented = apply_sequence(&seq, &item.frame, &mut Rng::stream(seed, i as u64));
        let a = dir.join(format!("{i:03}_original.pgm"));
        let b = dir.join(format!("{i:03}_augmented.pgm"));
        export_pgm(&item.frame, &a).with_context(|| format!("cannot write {}", a.display()))?;
        export_pgm(&augmented, &b).with_context(|| format!("cannot write {}", b.display()))?;
        out.push((a, b));
    }
    Ok(out)
}
