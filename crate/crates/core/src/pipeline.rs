//! Experiment configuration, sequential two-stage training, evaluation and
//! run artifacts (metrics CSV, manifest, checkpoints).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::Episodic;
use crate::env::{make_handoff, EnvConfig, LowerEnv, UpperEnv};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::learn::{Policy, PpoConfig, RolloutBuffer, Sample};
use crate::model::{generate_scenario, Instance};
use crate::objective::{evaluate as evaluate_objective, ObjectiveBreakdown};
use crate::oracle::{brute_force, TinyLimits};
use crate::rng::Rng64;
use crate::routing::RoutePlan;

pub const CKPT_SCHEMA: &str = "ckpt-v1";
pub const MANIFEST_SCHEMA: &str = "manifest-v1";
pub const MA_WINDOW: usize = 50;

pub const LAYER_UPPER: &str = "upper";
pub const LAYER_LOWER: &str = "lower";
pub const LAYER_LOWER_A2C: &str = "lower_a2c";

const STREAM_UPPER: u64 = 0x0100;
const STREAM_LOWER: u64 = 0x0200;
const STREAM_A2C: u64 = 0x0300;
const STREAM_UPDATE: u64 = 0x5eed_0000;
const STREAM_INIT: u64 = 0x1417;
const STREAM_EVAL: u64 = 0xe7a1;

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Registered generator profile, used when `path` is empty.
    pub profile: String,
    pub seed: u64,
    /// Instance JSON file; overrides the generator when non-empty.
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    /// `""` or `"a2c"`; the latter adds a Low-A2C series.
    pub baseline: String,
    /// Checkpoint cadence in episodes; 0 writes only at stage ends.
    pub checkpoint_every: usize,
    pub eval_episodes: usize,
    pub execution: Execution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub env: EnvConfig,
    pub up_ppo: PpoConfig,
    pub low_ppo: PpoConfig,
    pub low_a2c: PpoConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig {
                profile: "paper".into(),
                seed: 1,
                path: String::new(),
            },
            env: EnvConfig::default(),
            up_ppo: PpoConfig::up_ppo(),
            low_ppo: PpoConfig::low_ppo(),
            low_a2c: PpoConfig::low_a2c(),
            run: RunConfig {
                seed: 0,
                out_dir: "runs/default".into(),
                baseline: String::new(),
                checkpoint_every: 100,
                eval_episodes: 20,
                execution: Execution::Parallel,
            },
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// Reads an optional TOML file, layers it over the defaults, then applies
    /// `SCHED_<SECTION>_<KEY>` overrides from `vars`.
    pub fn load<I>(path: Option<&Path>, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, vars)
    }

    pub fn from_toml_str<I>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut base = toml::Table::try_from(Self::default()).map_err(|e| cfg_err(e.to_string()))?;
        let user: toml::Table = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        merge(&mut base, user, "")?;
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with("SCHED_")).collect();
        vars.sort();
        for (k, v) in vars {
            apply_override(&mut base, &k["SCHED_".len()..], &v).map_err(|e| cfg_err(format!("{k}: {e}")))?;
        }
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        for (name, p) in [("up_ppo", &self.up_ppo), ("low_ppo", &self.low_ppo), ("low_a2c", &self.low_a2c)] {
            p.validate().map_err(|e| cfg_err(format!("[{name}] {e}")))?;
        }
        if !matches!(self.run.baseline.as_str(), "" | "a2c") {
            return Err(cfg_err(format!("run.baseline must be \"\" or \"a2c\", got {:?}", self.run.baseline)));
        }
        if self.scenario.path.is_empty() && !crate::model::PROFILES.contains(&self.scenario.profile.as_str()) {
            return Err(cfg_err(format!("unknown scenario profile {:?}", self.scenario.profile)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    /// SHA-256 of the resolved configuration, ignoring fields that cannot
    /// change results (output location, execution mode).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.out_dir.clear();
        c.run.execution = Execution::Sequential;
        let text = c.to_toml().unwrap_or_default();
        hex(&Sha256::digest(text.as_bytes()))
    }

    pub fn load_instance(&self) -> Result<Instance> {
        if self.scenario.path.is_empty() {
            generate_scenario(self.scenario.seed, &self.scenario.profile)
        } else {
            let text = fs::read_to_string(&self.scenario.path)
                .map_err(|e| Error::Input(format!("{}: {e}", self.scenario.path)))?;
            Instance::from_json(&text)
        }
    }

    pub fn with_baseline(&self) -> bool {
        self.run.baseline == "a2c"
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn merge(base: &mut toml::Table, over: toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in over {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (base.get_mut(&k), v) {
            (None, _) => return Err(cfg_err(format!("unknown key `{path}`"))),
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &path)?,
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

/// Resolves an upper-case, underscore-joined key path against the table and
/// replaces the leaf. Section and key names may themselves contain
/// underscores, so every split is tried against the existing keys.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> std::result::Result<(), String> {
    let names: Vec<String> = table.keys().cloned().collect();
    for name in names {
        let up = name.to_uppercase();
        if key == up {
            let slot = table.get_mut(&name).expect("key exists");
            *slot = parse_value(slot, raw)?;
            return Ok(());
        }
        if let Some(rest) = key.strip_prefix(&format!("{up}_")) {
            if let Some(toml::Value::Table(sub)) = table.get_mut(&name) {
                if apply_override(sub, rest, raw).is_ok() {
                    return Ok(());
                }
            }
        }
    }
    Err(format!("no configuration key matches `{key}`"))
}

fn parse_value(current: &toml::Value, raw: &str) -> std::result::Result<toml::Value, String> {
    if current.is_str() {
        return Ok(toml::Value::String(raw.to_string()));
    }
    let t: toml::Table = toml::from_str(&format!("v = {raw}")).map_err(|e| format!("cannot parse {raw:?}: {e}"))?;
    let v = t.get("v").cloned().ok_or("empty value")?;
    // integers are accepted where floats are expected
    match (current, v) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => Ok(toml::Value::Float(i as f64)),
        (_, v) => Ok(v),
    }
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub layer: String,
    pub reward: f64,
    pub ma50: f64,
    pub collection_rate: Option<f64>,
    pub deadline_rate: Option<f64>,
    pub objective: Option<ObjectiveBreakdown>,
}

pub fn metrics_header() -> String {
    let mut cols = vec!["episode", "layer", "reward", "ma50", "collection_rate", "deadline_rate"];
    cols.extend(ObjectiveBreakdown::CSV_COLUMNS);
    cols.join(",")
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut f = vec![
            self.episode.to_string(),
            self.layer.clone(),
            self.reward.to_string(),
            self.ma50.to_string(),
            opt(self.collection_rate),
            opt(self.deadline_rate),
        ];
        match &self.objective {
            Some(o) => f.extend(o.csv_values().iter().map(|v| v.to_string())),
            None => f.extend(std::iter::repeat_n(String::new(), ObjectiveBreakdown::CSV_COLUMNS.len())),
        }
        f.join(",")
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut s = metrics_header();
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn moving_average(xs: &[f64], window: usize) -> f64 {
    let tail = &xs[xs.len().saturating_sub(window)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Training stages

/// Complete state of one training stage; resuming from it continues the
/// exact same trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageState {
    pub layer: String,
    pub episodes_done: usize,
    pub policy: Policy,
    pub buffer: RolloutBuffer,
    pub rewards: Vec<f64>,
    pub rows: Vec<MetricsRow>,
    pub best_ma: Option<f64>,
    pub best_policy: Option<Policy>,
    /// Wall-clock per episode in milliseconds; kept out of the metrics CSV.
    pub wall_ms: Vec<f64>,
}

impl StageState {
    fn new<E: Episodic>(layer: &str, env: &E, ppo: &PpoConfig, seed: u64) -> Self {
        Self {
            layer: layer.into(),
            episodes_done: 0,
            policy: Policy::new(env.obs_dim(), env.spec(), &ppo.hidden, ppo.init_log_std, seed),
            buffer: RolloutBuffer::default(),
            rewards: Vec::new(),
            rows: Vec::new(),
            best_ma: None,
            best_policy: None,
            wall_ms: Vec::new(),
        }
    }

    /// Policy selected for deployment: the best moving-average snapshot when
    /// tracked, otherwise the latest parameters.
    pub fn deployed(&self) -> &Policy {
        self.best_policy.as_ref().unwrap_or(&self.policy)
    }
}

/// Runs one episode with sampled actions, updating whenever the buffer fills.
fn train_episode<E: Episodic>(env: &mut E, st: &mut StageState, ppo: &PpoConfig, seed: u64) -> Result<f64> {
    let ep = st.episodes_done as u64;
    let mut rng = Rng64::derive(seed, ep);
    let env_seed = rng.next_u64();
    let mut s = env.reset(env_seed);
    let mut total = 0.0;
    loop {
        let mask = env.flat_mask();
        let (action, logp, value) = st.policy.act(&s, &mask, &mut rng, false)?;
        let (next, reward, done) = env.apply(&action);
        total += reward;
        st.buffer.push(Sample {
            state: s,
            mask,
            action,
            logp,
            value,
            reward,
            done,
        });
        if st.buffer.len() >= ppo.rollout_len {
            let last = if done { 0.0 } else { st.policy.value(&next)? };
            st.buffer.finalize(last, ppo.gamma, ppo.lambda)?;
            let mut urng = Rng64::derive(seed ^ STREAM_UPDATE, st.policy.updates);
            st.policy.update(&st.buffer, ppo, &mut urng)?;
            st.buffer.clear();
        }
        s = next;
        if done {
            return Ok(total);
        }
    }
}

/// Greedy rollout of a policy; returns the episode return.
fn greedy_episode<E: Episodic>(env: &mut E, policy: &Policy, seed: u64) -> Result<f64> {
    let mut rng = Rng64::new(seed);
    let mut s = env.reset(seed);
    let mut total = 0.0;
    loop {
        let mask = env.flat_mask();
        let (a, _, _) = policy.act(&s, &mask, &mut rng, true)?;
        let (next, r, done) = env.apply(&a);
        total += r;
        s = next;
        if done {
            return Ok(total);
        }
    }
}

fn lower_row_fields(env: &LowerEnv) -> Result<(f64, ObjectiveBreakdown)> {
    let trace = env.trace();
    let n = trace.records.len();
    let ontime = trace.records.iter().filter(|r| r.z).count();
    let rate = if n == 0 { 1.0 } else { ontime as f64 / n as f64 };
    let obj = evaluate_objective(env.instance(), &trace.plan, &trace.records, &trace.ledger)?;
    Ok((rate, obj))
}

fn collection_rate(inst: &Instance, plan: &RoutePlan) -> f64 {
    if inst.n_stations() == 0 {
        1.0
    } else {
        plan.collected().len() as f64 / inst.n_stations() as f64
    }
}

/// Everything needed to resume a run or evaluate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub config_hash: String,
    pub upper: StageState,
    pub plan: Option<RoutePlan>,
    pub lower: Option<StageState>,
    pub lower_a2c: Option<StageState>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let f = fs::File::create(&tmp)?;
            let mut gz = GzEncoder::new(f, Compression::fast());
            serde_json::to_writer(&mut gz, self)?;
            gz.finish()?.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        GzDecoder::new(fs::File::open(path)?).read_to_string(&mut text)?;
        let ck: Self = serde_json::from_str(&text)?;
        if ck.schema != CKPT_SCHEMA {
            return Err(Error::Input(format!("unsupported checkpoint schema {:?}", ck.schema)));
        }
        Ok(ck)
    }

    /// Metrics rows of every stage in training order.
    pub fn rows(&self) -> Vec<MetricsRow> {
        let mut rows = self.upper.rows.clone();
        for s in [&self.lower, &self.lower_a2c].into_iter().flatten() {
            rows.extend(s.rows.iter().cloned());
        }
        rows
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub resume: Option<PathBuf>,
    /// Stops (after checkpointing) once this many episodes ran in total
    /// across stages in this invocation; simulates an interruption.
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub checkpoint: Checkpoint,
    pub finished: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'a str,
    config_hash: &'a str,
    code_version: &'a str,
    seed: u64,
    scenario_profile: &'a str,
    scenario_seed: u64,
    scenario_path: &'a str,
    instance_sha256: String,
    resumed_from: Option<String>,
    finished: bool,
    episodes: Vec<(String, usize)>,
    files: Vec<&'a str>,
    config_toml: String,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const PLAN_FILE: &str = "plan.json";

struct Budget {
    left: Option<usize>,
}

impl Budget {
    fn exhausted(&self) -> bool {
        self.left == Some(0)
    }

    fn spend(&mut self) {
        if let Some(n) = self.left.as_mut() {
            *n = n.saturating_sub(1);
        }
    }
}

/// Trains Up-PPO, fixes its best policy's plan, then trains Low-PPO (and
/// Low-A2C when configured) against that plan.
pub fn train(cfg: &ExperimentConfig, opts: &TrainOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let inst = Arc::new(cfg.load_instance()?);
    let out = PathBuf::from(&cfg.run.out_dir);
    fs::create_dir_all(&out).map_err(|e| Error::Input(format!("{}: {e}", out.display())))?;
    let hash = cfg.hash();
    let seed = cfg.run.seed;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let mut budget = Budget { left: opts.stop_after };

    let mut upper_env = UpperEnv::new(inst.clone(), cfg.env.clone());
    let mut ck = match &opts.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.config_hash != hash {
                return Err(cfg_err(format!(
                    "checkpoint was written under config {}, current config is {hash}",
                    ck.config_hash
                )));
            }
            ck
        }
        None => Checkpoint {
            schema: CKPT_SCHEMA.into(),
            config_hash: hash.clone(),
            upper: StageState::new(LAYER_UPPER, &upper_env, &cfg.up_ppo, Rng64::derive(seed, STREAM_INIT).next_u64()),
            plan: None,
            lower: None,
            lower_a2c: None,
        },
    };

    let every = cfg.run.checkpoint_every;
    let save = |ck: &Checkpoint| ck.save(&ckpt_path);

    // stage 1
    let up_seed = Rng64::derive(seed, STREAM_UPPER).next_u64();
    while ck.upper.episodes_done < cfg.up_ppo.episodes && !budget.exhausted() {
        let t0 = Instant::now();
        let st = &mut ck.upper;
        let reward = train_episode(&mut upper_env, st, &cfg.up_ppo, up_seed)?;
        st.rewards.push(reward);
        let ma = moving_average(&st.rewards, MA_WINDOW);
        if st.best_ma.is_none_or(|b| ma >= b) {
            st.best_ma = Some(ma);
            st.best_policy = Some(st.policy.clone());
        }
        st.rows.push(MetricsRow {
            episode: st.episodes_done,
            layer: LAYER_UPPER.into(),
            reward,
            ma50: ma,
            collection_rate: Some(upper_env.collected_fraction()),
            deadline_rate: None,
            objective: None,
        });
        st.episodes_done += 1;
        st.wall_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        budget.spend();
        if every > 0 && st.episodes_done % every == 0 {
            save(&ck)?;
        }
    }
    if ck.upper.episodes_done < cfg.up_ppo.episodes {
        return interrupted(cfg, &out, ck, &opts.resume, &inst);
    }

    // handoff from the selected upper policy
    let plan = match &ck.plan {
        Some(p) => p.clone(),
        None => {
            greedy_episode(&mut upper_env, ck.upper.deployed(), seed)?;
            let p = upper_env.plan();
            ck.plan = Some(p.clone());
            save(&ck)?;
            p
        }
    };
    fs::write(out.join(PLAN_FILE), plan.to_json()?)?;
    let handoff = make_handoff(&inst, &plan)?;
    let col_rate = collection_rate(&inst, &plan);

    // stage 2 (and the optional baseline)
    let mut stages = vec![(LAYER_LOWER, STREAM_LOWER, &cfg.low_ppo)];
    if cfg.with_baseline() {
        stages.push((LAYER_LOWER_A2C, STREAM_A2C, &cfg.low_a2c));
    }
    for (layer, stream, ppo) in stages {
        let mut env = LowerEnv::new(inst.clone(), handoff.clone(), cfg.env.clone());
        env.reset(0);
        let mut st = match stage_slot(&mut ck, layer).take() {
            Some(s) => s,
            None => StageState::new(layer, &env, ppo, Rng64::derive(seed ^ stream, STREAM_INIT).next_u64()),
        };
        let st_seed = Rng64::derive(seed, stream).next_u64();
        while st.episodes_done < ppo.episodes && !budget.exhausted() {
            let t0 = Instant::now();
            let reward = train_episode(&mut env, &mut st, ppo, st_seed)?;
            st.rewards.push(reward);
            let (rate, obj) = lower_row_fields(&env)?;
            st.rows.push(MetricsRow {
                episode: st.episodes_done,
                layer: layer.into(),
                reward,
                ma50: moving_average(&st.rewards, MA_WINDOW),
                collection_rate: Some(col_rate),
                deadline_rate: Some(rate),
                objective: Some(obj),
            });
            st.episodes_done += 1;
            st.wall_ms.push(t0.elapsed().as_secs_f64() * 1e3);
            budget.spend();
            if every > 0 && st.episodes_done % every == 0 {
                *stage_slot(&mut ck, layer) = Some(st.clone());
                save(&ck)?;
            }
        }
        let done = st.episodes_done >= ppo.episodes;
        *stage_slot(&mut ck, layer) = Some(st);
        if !done {
            return interrupted(cfg, &out, ck, &opts.resume, &inst);
        }
    }
    save(&ck)?;
    write_artifacts(cfg, &out, &ck, &opts.resume, &inst, true)?;
    Ok(RunSummary {
        out_dir: out,
        checkpoint: ck,
        finished: true,
    })
}

fn stage_slot<'a>(ck: &'a mut Checkpoint, layer: &str) -> &'a mut Option<StageState> {
    if layer == LAYER_LOWER {
        &mut ck.lower
    } else {
        &mut ck.lower_a2c
    }
}

fn interrupted(
    cfg: &ExperimentConfig,
    out: &Path,
    ck: Checkpoint,
    resume: &Option<PathBuf>,
    inst: &Instance,
) -> Result<RunSummary> {
    ck.save(&out.join(CHECKPOINT_FILE))?;
    write_artifacts(cfg, out, &ck, resume, inst, false)?;
    Ok(RunSummary {
        out_dir: out.to_path_buf(),
        checkpoint: ck,
        finished: false,
    })
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    out: &Path,
    ck: &Checkpoint,
    resume: &Option<PathBuf>,
    inst: &Instance,
    finished: bool,
) -> Result<()> {
    write_metrics(&out.join(METRICS_FILE), &ck.rows())?;
    let mut timing = String::from("episode,layer,wall_ms\n");
    for s in [Some(&ck.upper), ck.lower.as_ref(), ck.lower_a2c.as_ref()].into_iter().flatten() {
        for (i, ms) in s.wall_ms.iter().enumerate() {
            timing.push_str(&format!("{i},{},{ms:.3}\n", s.layer));
        }
    }
    fs::write(out.join(TIMING_FILE), timing)?;
    let episodes = [Some(&ck.upper), ck.lower.as_ref(), ck.lower_a2c.as_ref()]
        .into_iter()
        .flatten()
        .map(|s| (s.layer.clone(), s.episodes_done))
        .collect();
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        config_hash: &ck.config_hash,
        code_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.run.seed,
        scenario_profile: &cfg.scenario.profile,
        scenario_seed: cfg.scenario.seed,
        scenario_path: &cfg.scenario.path,
        instance_sha256: hex(&Sha256::digest(inst.to_json()?.as_bytes())),
        resumed_from: resume.as_ref().map(|p| p.display().to_string()),
        finished,
        episodes,
        files: vec![METRICS_FILE, TIMING_FILE, CHECKPOINT_FILE, PLAN_FILE],
        config_toml: cfg.to_toml()?,
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, sd: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowerChoice {
    #[default]
    Ppo,
    A2c,
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    pub lower: LowerChoice,
    /// Also solve every evaluated instance exactly and report the gap.
    pub oracle: bool,
    pub limits: TinyLimits,
    pub execution: Execution,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: 20,
            seed: 0,
            lower: LowerChoice::Ppo,
            oracle: false,
            limits: TinyLimits::default(),
            execution: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub upper_reward: f64,
    pub collection_rate: f64,
    pub lower_reward: Stat,
    pub deadline_rate: Stat,
    pub objective: Stat,
    pub breakdown: ObjectiveBreakdown,
    pub per_episode_objective: Vec<f64>,
    pub optimum: Option<Stat>,
    /// Mean objective over mean optimum.
    pub optimality_ratio: Option<f64>,
    /// `(optimum - objective) / |optimum|` on the means.
    pub optimality_gap: Option<f64>,
}

/// Greedy evaluation: the upper policy fixes the plan once, then the lower
/// policy schedules `episodes` task realizations.
pub fn evaluate(ck: &Checkpoint, inst: Arc<Instance>, env_cfg: &EnvConfig, opts: &EvalOptions) -> Result<EvalReport> {
    if opts.episodes == 0 {
        return Err(Error::Input("evaluation needs at least one episode".into()));
    }
    let lower = match opts.lower {
        LowerChoice::Ppo => ck.lower.as_ref(),
        LowerChoice::A2c => ck.lower_a2c.as_ref(),
    }
    .ok_or_else(|| Error::Input(format!("checkpoint has no {:?} lower policy", opts.lower)))?;
    let mut up = UpperEnv::new(inst.clone(), env_cfg.clone());
    let up_policy = ck.upper.deployed();
    if up_policy.obs_dim != up.obs_dim() || up_policy.spec != up.spec() {
        return Err(Error::Shape {
            expected: up.obs_dim(),
            got: up_policy.obs_dim,
        });
    }
    let upper_reward = greedy_episode(&mut up, up_policy, opts.seed)?;
    let plan = up.plan();
    let handoff = make_handoff(&inst, &plan)?;
    let probe = LowerEnv::new(inst.clone(), handoff.clone(), env_cfg.clone());
    if lower.policy.obs_dim != probe.obs_dim() || lower.policy.spec != probe.spec() {
        return Err(Error::Shape {
            expected: probe.obs_dim(),
            got: lower.policy.obs_dim,
        });
    }
    let episodes = map_range(opts.execution, opts.episodes, |ep| -> Result<_> {
        let mut env = LowerEnv::new(inst.clone(), handoff.clone(), env_cfg.clone());
        let seed = Rng64::derive(opts.seed ^ STREAM_EVAL, ep as u64).next_u64();
        let ret = greedy_episode(&mut env, &lower.policy, seed)?;
        let (rate, obj) = lower_row_fields(&env)?;
        let opt = if opts.oracle {
            let mut cfg = env_cfg.clone();
            cfg.resample_tasks = false;
            Some(brute_force(&env.trace().instance, &cfg, &opts.limits, Execution::Sequential)?.value)
        } else {
            None
        };
        Ok((ret, rate, obj, opt))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rets: Vec<f64> = episodes.iter().map(|e| e.0).collect();
    let rates: Vec<f64> = episodes.iter().map(|e| e.1).collect();
    let objs: Vec<f64> = episodes.iter().map(|e| e.2.total).collect();
    let n = episodes.len() as f64;
    let mut breakdown = ObjectiveBreakdown::default();
    for e in &episodes {
        breakdown.collection_value += e.2.collection_value / n;
        breakdown.ontime_return += e.2.ontime_return / n;
        breakdown.miss_cost += e.2.miss_cost / n;
        breakdown.flow_cost += e.2.flow_cost / n;
        breakdown.resource_cost += e.2.resource_cost / n;
        breakdown.total += e.2.total / n;
        let (r, x) = (&mut breakdown.raw, &e.2.raw);
        r.collection += x.collection / n;
        r.ontime += x.ontime / n;
        r.miss += x.miss / n;
        r.flow += x.flow / n;
        r.resource += x.resource / n;
    }
    let optimum = opts
        .oracle
        .then(|| Stat::of(&episodes.iter().filter_map(|e| e.3).collect::<Vec<_>>()));
    let obj = Stat::of(&objs);
    Ok(EvalReport {
        episodes: opts.episodes,
        upper_reward,
        collection_rate: collection_rate(&inst, &plan),
        lower_reward: Stat::of(&rets),
        deadline_rate: Stat::of(&rates),
        objective: obj,
        breakdown,
        per_episode_objective: objs,
        optimum,
        optimality_ratio: optimum.map(|o| obj.mean / o.mean),
        optimality_gap: optimum.map(|o| (o.mean - obj.mean) / o.mean.abs()),
    })
}
