use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rmn::data::{gen_delayed_recall, gen_future_recall, gen_parity, read_archive, write_archive, Corpus, FeatureStats};
use rmn::model::{
    check_gradients, checkpoint, param_count, param_count_lstmp, Direction, SharedWeightForm,
};
use rmn::trainer::{evaluate_with, fit_with, EpochStats, EvalOptions};
use rmn::{Exec, Model, RMNConfig};

use crate::config::Settings;
use crate::{CliError, Task};

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

#[allow(clippy::too_many_arguments)]
pub fn gen(
    task: Task,
    out: &Path,
    classes: usize,
    delay: usize,
    window: usize,
    frames: usize,
    utts: usize,
    seed: u64,
) -> Result<ExitCode, CliError> {
    let corpus = match task {
        Task::DelayedRecall => gen_delayed_recall(classes, delay, frames, utts, seed)?,
        Task::FutureRecall => gen_future_recall(classes, delay, frames, utts, seed)?,
        Task::Parity => gen_parity(window, frames, utts, seed)?,
    };
    write_archive(&corpus, out).map_err(runtime("writing archive"))?;
    println!(
        "wrote {} utterances ({} frames, {} classes) to {}",
        corpus.len(),
        corpus.total_frames(),
        corpus.num_classes,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_settings(path: &Path, overrides: &[String]) -> Result<Settings, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut s = Settings::parse(&text)?;
    s.apply_overrides(overrides)?;
    Ok(s)
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    read_archive(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Everything a training run needs, checked before any work starts.
struct Run {
    model: Model,
    train: Corpus,
    valid: Corpus,
    train_config: rmn::trainer::TrainConfig,
    stats: Option<FeatureStats>,
    exclude_class: Option<usize>,
}

fn prepare(settings: &Settings) -> Result<Run, CliError> {
    settings.require(&["train_data", "valid_data", "out_dir"])?;
    let train_config = settings.train()?;
    let train = load_corpus(&settings.train_data().expect("required"))?;
    let valid = load_corpus(&settings.valid_data().expect("required"))?;
    let config = settings.model(Some(train.feature_dim), Some(train.num_classes))?;
    let exclude_class = settings.exclude_class()?;
    let (train, valid, stats) = if settings.normalize()? {
        let stats = FeatureStats::from_corpus(&train)?;
        (stats.apply(&train), stats.apply(&valid), Some(stats))
    } else {
        (train, valid, None)
    };
    let model = Model::new(config, train_config.seed)?;
    Ok(Run {
        model,
        train,
        valid,
        train_config,
        stats,
        exclude_class,
    })
}

/// The model as it should be stored: reading raw, unnormalised features.
fn exported(model: &Model, stats: Option<&FeatureStats>) -> Result<Model, CliError> {
    let mut m = model.clone();
    if let Some(s) = stats {
        m.absorb_normalization(s)?;
    }
    Ok(m)
}

pub fn train(config: &Path, overrides: &[String]) -> Result<ExitCode, CliError> {
    let settings = load_settings(config, overrides)?;
    let mut run = prepare(&settings)?;
    let out_dir = settings.out_dir().expect("required");
    fs::create_dir_all(&out_dir).map_err(runtime("creating output directory"))?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path).map_err(runtime("creating metrics.csv"))?;
    writeln!(metrics, "{}", EpochStats::CSV_HEADER).map_err(runtime("writing metrics.csv"))?;
    let checkpoint_path = out_dir.join("model.ckpt");
    let initial = exported(&run.model, run.stats.as_ref())?;
    checkpoint::save(&initial, &checkpoint_path)?;

    let stats = run.stats.clone();
    let history = fit_with(
        &mut run.model,
        &run.train,
        &run.valid,
        &run.train_config,
        Exec::default(),
        |s, model| {
            writeln!(metrics, "{}", s.csv_row())?;
            metrics.flush()?;
            let mut m = model.clone();
            if let Some(st) = &stats {
                m.absorb_normalization(st)?;
            }
            checkpoint::save(&m, out_dir.join(format!("epoch-{:03}.ckpt", s.epoch)))?;
            checkpoint::save(&m, &checkpoint_path)?;
            println!(
                "epoch {:>3}  lr {:<10.3e} train ce {:.4} fer {:.4}  valid ce {:.4} fer {:.4}  ({:.1}s)",
                s.epoch, s.lr, s.train_ce, s.train_fer, s.valid_ce, s.valid_fer, s.wall_seconds
            );
            Ok(())
        },
    )?;
    if let (Some(k), Some(_)) = (run.exclude_class, history.last()) {
        let e = evaluate_with(
            &run.model,
            &run.valid,
            EvalOptions {
                exclude_class: Some(k),
                stream: None,
            },
            Exec::default(),
        )?;
        println!("valid fer excluding class {k}: {:.4}", e.fer);
    }
    println!("wrote {} and {}", metrics_path.display(), checkpoint_path.display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(
    checkpoint_path: &Path,
    corpus_path: &Path,
    stream: Option<(usize, usize)>,
    exclude_class: Option<usize>,
) -> Result<ExitCode, CliError> {
    let model = checkpoint::load(checkpoint_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", checkpoint_path.display())))?;
    let corpus = load_corpus(corpus_path)?;
    if let Some((chunk, _)) = stream {
        if chunk == 0 {
            return Err(CliError::Usage("stream chunk size must be at least 1".into()));
        }
    }
    let opts = EvalOptions {
        exclude_class,
        stream,
    };
    let e = evaluate_with(&model, &corpus, opts, Exec::default())?;
    println!("ce={} fer={}", e.ce, e.fer);
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck_config(
    direction: Direction,
    form: SharedWeightForm,
    residual: Option<usize>,
    layers: usize,
) -> RMNConfig {
    RMNConfig {
        input_dim: 6,
        wide_dim: 8,
        memory_dim: 5,
        num_memory_layers: layers,
        num_classes: 4,
        direction,
        shared_weight_form: form,
        residual_interval: residual,
        ..RMNConfig::default()
    }
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn gradcheck(
    seed: u64,
    direction: Direction,
    form: SharedWeightForm,
    residual: &str,
    layers: usize,
    frames: usize,
    corrupt: bool,
) -> Result<ExitCode, CliError> {
    let residual = match residual {
        "none" => None,
        r => Some(
            r.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad residual interval `{r}`")))?,
        ),
    };
    if frames == 0 {
        return Err(CliError::Usage("frames must be at least 1".into()));
    }
    let config = gradcheck_config(direction, form, residual, layers);
    config.validate()?;
    let bump = |g: &mut [f64]| {
        let last = g.len() - 1;
        g[last] += 0.5 * (1.0 + g[last].abs());
    };
    let hook: Option<&dyn Fn(&mut [f64])> = if corrupt { Some(&bump) } else { None };
    let r = check_gradients(&config, frames, seed, hook)?;
    let pass = r.max_rel_error < GRADCHECK_TOLERANCE;
    println!(
        "max_rel_error={:e} worst={} entries={} {}",
        r.max_rel_error,
        r.worst,
        r.checked,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn millions(n: u64) -> String {
    format!("{:.1} M", n as f64 / 1e6)
}

/// Pulls `--flag` and `--flag value` options of this command out of the
/// override list.
fn take_flag(args: &mut Vec<String>, flag: &str) -> bool {
    match args.iter().position(|a| a == flag) {
        Some(i) => {
            args.remove(i);
            true
        }
        None => false,
    }
}

fn take_value<T: std::str::FromStr>(args: &mut Vec<String>, flag: &str, default: T) -> Result<T, CliError> {
    match args.iter().position(|a| a == flag) {
        Some(i) if i + 1 < args.len() => {
            let v = args.remove(i + 1);
            args.remove(i);
            v.parse()
                .map_err(|_| CliError::Usage(format!("bad value `{v}` for {flag}")))
        }
        Some(_) => Err(CliError::Usage(format!("missing value for {flag}"))),
        None => Ok(default),
    }
}

pub fn params(args: &[String]) -> Result<ExitCode, CliError> {
    let mut args = args.to_vec();
    let compare = take_flag(&mut args, "--compare-lstmp");
    let lstmp_layers = take_value(&mut args, "--lstmp-layers", 3usize)?;
    let lstmp_cells = take_value(&mut args, "--lstmp-cells", 1024usize)?;
    let lstmp_proj = take_value(&mut args, "--lstmp-proj", 512usize)?;
    let lstmp_input = take_value(&mut args, "--lstmp-input-dim", 40usize)?;
    let settings = match args.first() {
        Some(first) if !first.starts_with("--") => {
            let path = PathBuf::from(first);
            load_settings(&path, &args[1..])?
        }
        _ => {
            let mut s = Settings::default();
            s.apply_overrides(&args)?;
            s
        }
    };
    let mut settings = settings;
    // without a corpus to read them from, the full-size defaults apply
    let d = RMNConfig::default();
    for (key, v) in [("input_dim", d.input_dim), ("num_classes", d.num_classes)] {
        if !settings.has(key) {
            settings.set(key, &v.to_string()).map_err(CliError::Usage)?;
        }
    }
    let config = settings.model(None, None)?;
    let n = param_count(&config);
    println!("param_count={n} ({})", millions(n));
    if compare {
        if [lstmp_layers, lstmp_cells, lstmp_proj, lstmp_input].contains(&0) {
            return Err(CliError::Usage("LSTMP sizes must be at least 1".into()));
        }
        let l = param_count_lstmp(lstmp_layers, lstmp_cells, lstmp_proj, lstmp_input, config.num_classes);
        let ratio = 100.0 * (l as f64 - n as f64) / l as f64;
        println!("lstmp_param_count={l} ({})", millions(l));
        println!("reduction={ratio:.1}%");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn parse_layer_list(list: &str) -> Result<Vec<usize>, CliError> {
    let layers: Vec<usize> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .ok()
                .filter(|&l| l >= 1)
                .ok_or_else(|| CliError::Usage(format!("bad layer count `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    if layers.is_empty() {
        return Err(CliError::Usage("empty layer list".into()));
    }
    Ok(layers)
}

pub fn sweep(
    config: &Path,
    layers: &str,
    no_delay: bool,
    out: Option<&Path>,
    overrides: &[String],
) -> Result<ExitCode, CliError> {
    let layers = parse_layer_list(layers)?;
    let mut settings = load_settings(config, overrides)?;
    if no_delay {
        settings.set("delay_enabled", "false").map_err(CliError::Usage)?;
    }
    settings.require(&["train_data", "valid_data", "out_dir"])?;
    let out_path = match out {
        Some(p) => p.to_path_buf(),
        None => settings.out_dir().expect("required").join("sweep.csv"),
    };
    // validate every configuration before training any of them
    for &l in &layers {
        let mut s = settings.clone();
        s.set("num_memory_layers", &l.to_string()).map_err(CliError::Usage)?;
        prepare(&s)?;
    }
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(runtime("creating output directory"))?;
    }
    let mut rows = vec!["layers,delay_enabled,best_valid_fer".to_string()];
    for &l in &layers {
        let mut s = settings.clone();
        s.set("num_memory_layers", &l.to_string()).map_err(CliError::Usage)?;
        let mut run = prepare(&s)?;
        let mut best = f64::INFINITY;
        let exclude = run.exclude_class;
        let valid = run.valid.clone();
        fit_with(
            &mut run.model,
            &run.train,
            &run.valid,
            &run.train_config,
            Exec::default(),
            |st, model| {
                let fer = match exclude {
                    Some(k) => {
                        let opts = EvalOptions {
                            exclude_class: Some(k),
                            stream: None,
                        };
                        evaluate_with(model, &valid, opts, Exec::default())?.fer
                    }
                    None => st.valid_fer,
                };
                best = best.min(fer);
                Ok(())
            },
        )?;
        println!("layers {l}: best valid fer {best:.4}");
        rows.push(format!("{l},{},{best}", run.model.config.delay_enabled));
    }
    fs::write(&out_path, rows.join("\n") + "\n").map_err(runtime("writing sweep csv"))?;
    println!("wrote {}", out_path.display());
    Ok(ExitCode::SUCCESS)
}
