use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gsconv_core::group_shift::verify::{builtin_grid, verify_table, CheckOutcome};
use gsconv_core::io::{load_volume, save_volume};
use gsconv_core::network::{ConvKind, NetworkSpec, ShiftFraction, StageSpec, DEFAULT_CHANNELS};
use gsconv_core::profiler::{compare_report, count_flops};
use gsconv_core::synth::{generate, TaskKind, TaskSpec};
use gsconv_core::training::{evaluate, load_checkpoint, metrics_csv, save_checkpoint, train, Sample, TrainConfig};
use gsconv_core::{
    apply_group_shift_naive, apply_permutation, build_network, build_permutation, GroupShiftConfig, GsInsertPosition,
    GsPlacement, PermutationTable, Shape5, SpatialGroupPreset, SpatialGroups, VolumeTensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::*;

/// Written next to every run's outputs.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<NetworkSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
}

impl RunManifest {
    fn new(command: &str, seed: u64, out_dir: &Path) -> Self {
        RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            out_dir: out_dir.to_path_buf(),
            spec_path: None,
            spec: None,
            task: None,
            train: None,
            data_dir: None,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

// ---- verify-gs -------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
#[error("{failed} of {total} group shift checks failed")]
pub struct VerifyFailed {
    pub failed: usize,
    pub total: usize,
}

pub fn verify_gs(a: &VerifyArgs) -> Result<()> {
    let mut cases: Vec<(Shape5, GroupShiftConfig)> = if a.no_grid { Vec::new() } else { builtin_grid() };
    if let Some([d, h, w, c]) = a.dims {
        let groups = SpatialGroups::from(a.groups.unwrap_or((1, 1, 1)));
        let cfg = match a.cs {
            Some(cs) => GroupShiftConfig::with_shifted(groups, a.cg, cs)?,
            None => GroupShiftConfig::new(groups, a.cg)?,
        };
        let dims = Shape5::new(1, d, h, w, c)?;
        cfg.bind(dims)?;
        cases.push((dims, cfg));
    }
    if cases.is_empty() {
        bail!(gsconv_core::Error::Argument("nothing to verify".into()));
    }
    let mut failed = 0;
    let mut total = 0;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, (dims, cfg)) in cases.iter().enumerate() {
        let bound = cfg.bind(*dims)?;
        let mut table = build_permutation(cfg, *dims)?;
        if a.inject_corruption && i == 0 {
            let mut map = table.map().to_vec();
            let last = map.len() - 1;
            map.swap(0, last);
            table = PermutationTable::from_map_unchecked(*dims, map);
        }
        for CheckOutcome { name, passed, detail } in verify_table(&bound, &table, *dims, a.seed) {
            total += 1;
            failed += usize::from(!passed);
            writeln!(
                out,
                "{} dims={} groups={} cg={} cs={} check={} {}",
                if passed { "PASS" } else { "FAIL" },
                dims,
                cfg.groups,
                cfg.channels_per_group,
                cfg.shifted,
                name,
                detail
            )?;
        }
    }
    writeln!(out, "{} configs, {} checks, {} failed", cases.len(), total, failed)?;
    if failed > 0 {
        return Err(VerifyFailed { failed, total }.into());
    }
    Ok(())
}

// ---- datasets --------------------------------------------------------------

fn task_spec(t: &TaskArgs, seed: u64, count: usize) -> Result<TaskSpec> {
    let kind: TaskKind = t.task.parse()?;
    Ok(TaskSpec { kind, dims: t.dims, num_classes: 3, seed, count })
}

fn sample_paths(dir: &Path, i: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("sample_{i:05}.image.gsv")), dir.join(format!("sample_{i:05}.label.gsv")))
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let spec = task_spec(&a.task, a.seed, a.task.count)?;
    let data = generate::<f32>(&spec)?;
    out_dir(&a.out)?;
    for (i, s) in data.iter().enumerate() {
        let (img, lab) = sample_paths(&a.out, i);
        save_volume(img, &s.image)?;
        save_volume(lab, &s.label)?;
    }
    let mut m = RunManifest::new("gen", a.seed, &a.out);
    m.task = Some(spec);
    m.write(&a.out)?;
    println!("wrote {} samples to {}", data.len(), a.out.display());
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<(Vec<Sample<f64>>, Option<TaskSpec>)> {
    let manifest: Option<RunManifest> = fs::read_to_string(dir.join("manifest.json"))
        .ok()
        .map(|s| serde_json::from_str(&s))
        .transpose()
        .context("reading dataset manifest")?;
    let mut data = Vec::new();
    for i in 0.. {
        let (img, lab) = sample_paths(dir, i);
        if !img.exists() {
            break;
        }
        data.push(Sample { image: load_volume(&img)?, label: load_volume(&lab)? });
    }
    if data.is_empty() {
        bail!(gsconv_core::Error::Format(format!("no samples found in {}", dir.display())));
    }
    Ok((data, manifest.and_then(|m| m.task)))
}

// ---- network specs ---------------------------------------------------------

fn read_spec(path: &Path) -> Result<NetworkSpec> {
    let text = fs::read_to_string(path)
        .map_err(gsconv_core::Error::from)
        .with_context(|| format!("reading spec {}", path.display()))?;
    Ok(NetworkSpec::from_json(&text)?)
}

fn resolve_spec(n: &NetArgs, in_channels: usize, classes: usize) -> Result<NetworkSpec> {
    if let Some(p) = &n.spec {
        return read_spec(p);
    }
    let channels = n.channels.clone().unwrap_or_else(|| DEFAULT_CHANNELS.to_vec());
    let groups: Vec<SpatialGroups> = match &n.preset {
        Some(p) => {
            let preset: SpatialGroupPreset = p.parse()?;
            if channels.len() != 5 {
                bail!(gsconv_core::Error::Config("presets define 5 stages; --channels must list 5 widths".into()));
            }
            preset.groups().to_vec()
        }
        None => vec![SpatialGroups::from(n.groups.unwrap_or((2, 2, 1))); channels.len()],
    };
    let conv = match n.conv.as_deref() {
        None | Some("pointwise") => ConvKind::Pointwise,
        Some("conv3") => ConvKind::Conv3,
        Some(other) => bail!(gsconv_core::Error::Config(format!("unknown conv kind `{other}`"))),
    };
    let spec = NetworkSpec {
        in_channels: n.in_channels.unwrap_or(in_channels),
        num_classes: n.classes.unwrap_or(classes),
        stages: channels.iter().zip(groups).map(|(&channels, groups)| StageSpec { channels, groups, conv }).collect(),
        insert: n.insert.as_deref().unwrap_or("csc").parse::<GsInsertPosition>()?,
        placement: n.placement.as_deref().unwrap_or("both").parse::<GsPlacement>()?,
        shift_fraction: match &n.shift_fraction {
            Some(f) => ShiftFraction::parse(f)?,
            None => ShiftFraction::half(),
        },
    };
    spec.validate()?;
    Ok(spec)
}

// ---- train / eval ----------------------------------------------------------

fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut v = serde_json::to_value(TrainConfig::default())?;
    if let Some(p) = &a.config {
        let text = fs::read_to_string(p)
            .map_err(gsconv_core::Error::from)
            .with_context(|| format!("reading config {}", p.display()))?;
        let file: Value = serde_json::from_str(&text).map_err(gsconv_core::Error::from)?;
        let Value::Object(file) = file else {
            bail!(gsconv_core::Error::Config("config file must hold a JSON object".into()));
        };
        for (k, val) in file {
            if v.get(&k).is_none() {
                bail!(gsconv_core::Error::Config(format!("unknown config key `{k}`")));
            }
            v[k] = val;
        }
    }
    let flags: [(&str, Option<Value>); 7] = [
        ("max_iters", a.iters.map(Value::from)),
        ("batch_size", a.batch.map(Value::from)),
        ("base_lr", a.lr.map(Value::from)),
        ("power", a.power.map(Value::from)),
        ("momentum", a.momentum.map(Value::from)),
        ("log_interval", a.log_interval.map(Value::from)),
        ("seed", a.seed.map(Value::from)),
    ];
    for (k, val) in flags {
        if let Some(val) = val {
            v[k] = val;
        }
    }
    let cfg: TrainConfig = serde_json::from_value(v).map_err(gsconv_core::Error::from)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(a)?;
    let (data, task) = match &a.data {
        Some(dir) => load_dataset(dir)?,
        None => {
            let t = task_spec(&a.task, cfg.seed, a.task.count)?;
            (generate::<f64>(&t)?, Some(t))
        }
    };
    let spec = resolve_spec(&a.net, data[0].image.shape().c, 3)?;
    let mut net = build_network::<f64>(&spec, data[0].image.shape(), cfg.seed)?;
    out_dir(&a.out)?;

    let mut manifest = RunManifest::new("train", cfg.seed, &a.out);
    manifest.spec_path = a.net.spec.clone();
    manifest.spec = Some(spec.clone());
    manifest.task = task.clone();
    manifest.train = Some(cfg.clone());
    manifest.data_dir = a.data.clone();
    manifest.write(&a.out)?;

    let rows = train(&mut net, &data, &cfg, |r| log::info!("{}", r.to_csv()))?;
    fs::write(a.out.join("metrics.csv"), metrics_csv(&rows, spec.num_classes))?;
    save_checkpoint(a.out.join("checkpoint.gsv"), &net)?;
    write_json(&a.out.join("spec.json"), &spec)?;
    let last = rows.last().expect("at least one row");
    println!("trained {} iterations: loss={} mDice={}", cfg.max_iters, last.loss, last.mdice);

    if a.eval_count > 0 {
        let base = task.ok_or_else(|| gsconv_core::Error::Argument("--eval-count needs a task description".into()))?;
        let eval_set = generate::<f64>(&TaskSpec { seed: base.seed + 1, count: a.eval_count, ..base })?;
        let report = evaluate(&net, &eval_set)?;
        write_json(&a.out.join("eval.json"), &report)?;
        println!("{}", serde_json::to_string(&report)?);
    }
    Ok(())
}

pub fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let expected = a.spec.as_deref().map(read_spec).transpose()?;
    let net = load_checkpoint::<f64>(&a.checkpoint, expected.as_ref())?;
    let (data, task) = match &a.data {
        Some(dir) => load_dataset(dir)?,
        None => {
            let t = task_spec(&a.task, a.seed, a.task.count)?;
            (generate::<f64>(&t)?, Some(t))
        }
    };
    let report = evaluate(&net, &data)?;
    println!("{}", serde_json::to_string(&report)?);
    if let Some(dir) = &a.out {
        out_dir(dir)?;
        write_json(&dir.join("eval.json"), &report)?;
        let mut m = RunManifest::new("eval", a.seed, dir);
        m.spec_path = a.spec.clone();
        m.spec = Some(net.spec().clone());
        m.task = task;
        m.data_dir = a.data.clone();
        m.write(dir)?;
    }
    Ok(())
}

// ---- profile / bench -------------------------------------------------------

pub fn profile(a: &ProfileArgs) -> Result<()> {
    let input = Shape5::from_slice(&a.input)?;
    let spec = resolve_spec(&a.net, input.c, 3)?;
    let text = match a.baseline.as_deref() {
        None => {
            let net = build_network::<f32>(&spec, input, 0)?;
            let r = count_flops(&net, input);
            if a.format == "table" { r.to_table() } else { r.to_csv() }
        }
        Some("conv3") | Some("pointwise") => {
            let c = compare_report(&spec, input)?;
            if a.format == "table" { c.to_table() } else { c.to_csv() }
        }
        Some(other) => bail!(gsconv_core::Error::Config(format!("unknown baseline `{other}` (conv3)"))),
    };
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchReport {
    dims: [usize; 5],
    groups: SpatialGroups,
    channels_per_group: usize,
    reps: usize,
    table_build_ns: u128,
    naive_ns_per_element: f64,
    table_ns_per_element: f64,
    speedup: f64,
    outputs_equal: bool,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let [d, h, w, c] = a.dims;
    let dims = Shape5::new(1, d, h, w, c)?;
    let cfg = GroupShiftConfig::new(a.groups, a.cg)?;
    cfg.bind(dims)?;
    if a.reps == 0 {
        bail!(gsconv_core::Error::Argument("--reps must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let x = VolumeTensor::<f32>::from_fn(dims, |_| rng.gen_range(-1.0..1.0));
    let t0 = Instant::now();
    let table = build_permutation(&cfg, dims)?;
    let table_build_ns = t0.elapsed().as_nanos();
    let n = dims.len() as f64;
    let mut naive_t = Vec::new();
    let mut table_t = Vec::new();
    let mut equal = true;
    for _ in 0..a.reps {
        let t = Instant::now();
        let slow = apply_group_shift_naive(&x, &cfg)?;
        naive_t.push(t.elapsed().as_nanos() as f64 / n);
        let t = Instant::now();
        let fast = apply_permutation(&x, &table)?;
        table_t.push(t.elapsed().as_nanos() as f64 / n);
        equal &= slow == fast;
    }
    let (naive, tab) = (median(naive_t), median(table_t));
    let r = BenchReport {
        dims: dims.to_array(),
        groups: cfg.groups,
        channels_per_group: cfg.channels_per_group,
        reps: a.reps,
        table_build_ns,
        naive_ns_per_element: naive,
        table_ns_per_element: tab,
        speedup: naive / tab,
        outputs_equal: equal,
    };
    println!("{}", serde_json::to_string(&r)?);
    if !equal {
        bail!(gsconv_core::Error::State("table path disagrees with the reference".into()));
    }
    Ok(())
}
