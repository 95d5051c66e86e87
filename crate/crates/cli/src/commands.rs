use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;

use sedkit::gradcheck::{check_pooling, check_subsample, random_kernel};
use sedkit::io::{read_annotations, read_posterior, write_annotations, write_posterior};
use sedkit::pooling::pool_columns;
use sedkit::{
    generate, mask_to_events, score, Corpus, EvalReport, PoolingKind, PostProcess, PosteriorClip, SubsampleKind,
    SynthSpec,
};

use crate::options::{EvalOptions, PostOptions};
use crate::GradKind;

/// Independent failures, reported one per line.
#[derive(Debug)]
pub struct Failures(pub Vec<String>);

impl std::fmt::Display for Failures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.join("; "))
    }
}

impl std::error::Error for Failures {}

/// Expands directories into their `.tsv` files, sorted by name.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .with_context(|| format!("reading directory {}", input.display()))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "tsv"))
                .collect();
            found.sort();
            if found.is_empty() {
                bail!("no .tsv posterior files in {}", input.display());
            }
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        bail!("no posterior inputs given");
    }
    Ok(files)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let jobs = match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => n,
        None => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Runs `f` on every file in parallel. Results come back sorted by clip id;
/// every failure is kept, not just the first.
fn per_file<T, F>(files: &[PathBuf], jobs: Option<usize>, f: F) -> Result<Vec<(String, T)>>
where
    T: Send,
    F: Fn(PosteriorClip) -> Result<T> + Sync,
{
    let pool = thread_pool(jobs)?;
    let results: Vec<Result<(String, T)>> = pool.install(|| {
        files
            .par_iter()
            .map(|path| {
                let clip = read_posterior(path)?;
                let id = clip.clip_id.clone();
                let value = f(clip).with_context(|| format!("{}", path.display()))?;
                Ok((id, value))
            })
            .collect()
    });
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(format!("{e:#}").replace('\n', " ")),
        }
    }
    if !failures.is_empty() {
        return Err(Failures(failures).into());
    }
    ok.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = ok.windows(2).find(|w| w[0].0 == w[1].0) {
        bail!("clip id `{}` appears in more than one input", w[0].0);
    }
    Ok(ok)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn pool(kind: PoolingKind, inputs: &[PathBuf]) -> Result<()> {
    let files = expand_inputs(inputs)?;
    let rows = per_file(&files, None, |clip| {
        let pooled = pool_columns(&clip, kind)?;
        Ok(clip.classes.labels().iter().cloned().zip(pooled).collect::<Vec<_>>())
    })?;
    let mut out = String::from("filename\tevent_label\tprobability\n");
    for (id, values) in rows {
        for (label, p) in values {
            writeln!(out, "{id}\t{label}\t{p}")?;
        }
    }
    print!("{out}");
    Ok(())
}

pub fn gradcheck(kind: GradKind, trials: usize, seed: u64, alpha: f64, p: f64, kernel_size: usize) -> Result<()> {
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    let report = match kind {
        GradKind::Ls => check_pooling(PoolingKind::LinearSoftmax, trials, seed)?,
        other => {
            let op = match other {
                GradKind::Mm => SubsampleKind::Mm,
                GradKind::Amm => SubsampleKind::alpha_mm(alpha)?,
                GradKind::Lp => SubsampleKind::lp(p)?,
                GradKind::Conv => SubsampleKind::Conv(random_kernel(kernel_size, seed)?),
                GradKind::Ls => unreachable!(),
            };
            check_subsample(&op, trials, seed)?
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.passed {
        bail!(
            "gradient check failed for {}: max relative error {:.3e} exceeds {:.0e}",
            report.kind,
            report.max_rel_error,
            report.tolerance
        );
    }
    Ok(())
}

fn decode_files(files: &[PathBuf], post: &PostProcess, jobs: Option<usize>) -> Result<(Corpus, BTreeSet<String>)> {
    let decoded = per_file(files, jobs, |clip| {
        let events = mask_to_events(&post.apply(&clip)?);
        Ok((events, clip.classes.labels().to_vec()))
    })?;
    let mut labels = BTreeSet::new();
    let mut corpus = Corpus::new();
    for (id, (events, clip_labels)) in decoded {
        labels.extend(clip_labels);
        corpus.insert(id, events);
    }
    Ok((corpus, labels))
}

pub fn decode(inputs: &[PathBuf], post: &PostOptions, output: Option<&Path>, jobs: Option<usize>) -> Result<()> {
    let post = post.resolve()?;
    let files = expand_inputs(inputs)?;
    let (corpus, _) = decode_files(&files, &post, jobs)?;
    write_or_print(output, &sedkit::io::annotations_to_tsv(&corpus))
}

pub fn fuse(inputs: &[PathBuf], output: &Path) -> Result<()> {
    let clips = inputs
        .iter()
        .map(|p| read_posterior(p).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let fused = sedkit::fuse(&clips)?;
    write_posterior(output, &fused)?;
    Ok(())
}

fn score_corpora(reference: &Corpus, predicted: &Corpus, opts: &EvalOptions) -> Result<EvalReport> {
    let classes = opts.class_map(&[reference, predicted])?;
    let params = opts.params(&classes)?;
    Ok(score(reference, predicted, &classes, &params)?)
}

pub fn eval(reference: &Path, pred: &Path, opts: &EvalOptions, report_path: Option<&Path>) -> Result<()> {
    let reference = read_annotations(reference)?;
    let predicted = read_annotations(pred)?;
    let report = score_corpora(&reference, &predicted, opts)?;
    print!("{}", report.to_table());
    println!("{}", report.to_json());
    if let Some(path) = report_path {
        fs::write(path, report.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn synth(spec_path: Option<&Path>, seed: Option<u64>, out_dir: &Path, n_clips: usize) -> Result<()> {
    let mut spec = match spec_path {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<SynthSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if n_clips == 0 {
        bail!("--n-clips must be at least 1");
    }
    let corpus = generate(&spec, n_clips)?;
    let post_dir = out_dir.join("posteriors");
    fs::create_dir_all(&post_dir).with_context(|| format!("creating {}", post_dir.display()))?;
    for clip in &corpus.posteriors {
        write_posterior(&post_dir.join(format!("{}.tsv", clip.clip_id)), clip)?;
    }
    write_annotations(&out_dir.join("ground_truth.tsv"), &corpus.reference)?;
    fs::write(out_dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    println!(
        "wrote {} clips to {} and ground truth to {}",
        corpus.posteriors.len(),
        post_dir.display(),
        out_dir.join("ground_truth.tsv").display()
    );
    Ok(())
}

/// Pipeline config file. Relative paths are taken relative to the file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PipelineConfig {
    inputs: Vec<PathBuf>,
    reference: Option<PathBuf>,
    postprocess: PostOptions,
    eval: EvalOptions,
    output: Option<PathBuf>,
    report: Option<PathBuf>,
    jobs: Option<usize>,
}

pub struct PipelineFlags {
    pub inputs: Vec<PathBuf>,
    pub reference: Option<PathBuf>,
    pub post: PostOptions,
    pub eval: EvalOptions,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub jobs: Option<usize>,
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut config: PipelineConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rebase = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
    config.inputs = config.inputs.into_iter().map(rebase).collect();
    config.reference = config.reference.map(rebase);
    config.output = config.output.map(rebase);
    config.report = config.report.map(rebase);
    config.eval = config.eval.rebase(base);
    Ok(config)
}

pub fn pipeline(config_path: Option<&Path>, flags: PipelineFlags) -> Result<()> {
    let config = match config_path {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    let post = flags.post.or(config.postprocess).resolve()?;
    let eval_opts = flags.eval.or(config.eval);
    let inputs = if flags.inputs.is_empty() {
        config.inputs
    } else {
        flags.inputs
    };
    let reference = flags
        .reference
        .or(config.reference)
        .ok_or_else(|| anyhow!("no reference annotations given (--ref or `reference` in the config)"))?;
    let output = flags.output.or(config.output);
    let report_path = flags.report.or(config.report);
    let jobs = flags.jobs.or(config.jobs);

    let files = expand_inputs(&inputs)?;
    let reference = read_annotations(&reference)?;
    let (predicted, posterior_labels) = decode_files(&files, &post, jobs)?;
    if let Some(e) = reference
        .values()
        .flatten()
        .find(|e| !posterior_labels.contains(&e.label))
    {
        bail!("reference label `{}` is not a posterior class", e.label);
    }

    // The annotation file is what `eval` will see, so the report is scored
    // from its parsed form.
    let tsv = sedkit::io::annotations_to_tsv(&predicted);
    let reparsed = sedkit::io::annotations_from_tsv(&tsv, Path::new("<decoded>"))?;
    let report = score_corpora(&reference, &reparsed, &eval_opts)?;

    write_or_print(output.as_deref(), &tsv)?;
    if output.is_some() {
        print!("{}", report.to_table());
    } else {
        eprint!("{}", report.to_table());
    }
    if let Some(path) = report_path {
        fs::write(&path, report.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
