//! The `pretrain`, `run` and `forgetting` commands.

use std::path::PathBuf;
use std::time::Instant;

use fstta_core::model::{load_params, pretrain, save_params, TrainReport};
use fstta_core::sim::{evaluate, generate_stream, run_episode, shuffled_order};
use fstta_core::{AdaptConfig, AdaptSession, Counters, Episode, EpisodeRecord, MetricsRow, PolicyParams, Strategy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, StreamKind};
use crate::error::{HarnessError, Result};
use crate::results::{self, aggregate, canonical_order, mean_std, ResultRow, SCHEMA_VERSION};

/// Added to the stream seed for unseen streams so the two families never
/// share a generator state.
const UNSEEN_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn stream_label(kind: StreamKind, seed: u64) -> String {
    format!("{}-{seed}", kind.name())
}

pub fn build_stream(cfg: &RunConfig, kind: StreamKind, seed: u64) -> Result<Vec<Episode>> {
    let gen_seed = match kind {
        StreamKind::Seen => seed,
        StreamKind::Unseen => seed.wrapping_add(UNSEEN_SEED_OFFSET),
    };
    Ok(generate_stream(gen_seed, &cfg.shift(kind, seed), cfg.episodes)?)
}

fn ensure_output_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| HarnessError::Data(format!("cannot create {}: {e}", cfg.output_dir.display())))
}

fn with_threads<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("`threads`: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainOutcome {
    pub params_path: PathBuf,
    /// Hex SHA-256 of the params file.
    pub checksum: String,
    pub report: TrainReport,
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    ensure_output_dir(cfg)?;
    let (params, report) = pretrain(&cfg.train_config(), cfg.pretrain_seed)?;
    let params_path = cfg.params_path();
    save_params(&params_path, &params)?;
    let checksum = hex::encode(Sha256::digest(std::fs::read(&params_path)?));

    #[derive(Serialize)]
    struct ReportFile<'a> {
        code_version: &'a str,
        params_file: &'a str,
        params_sha256: &'a str,
        report: &'a TrainReport,
        config: &'a RunConfig,
    }
    let text = toml::to_string(&ReportFile {
        code_version: results::CODE_VERSION,
        params_file: &cfg.params_file,
        params_sha256: &checksum,
        report: &report,
        config: cfg,
    })
    .map_err(|e| HarnessError::Data(e.to_string()))?;
    std::fs::write(cfg.output_dir.join("pretrain_report.toml"), text)?;
    Ok(PretrainOutcome { params_path, checksum, report })
}

pub fn load_policy(cfg: &RunConfig) -> Result<PolicyParams> {
    let path = cfg.params_path();
    if !path.exists() {
        return Err(HarnessError::Data(format!(
            "params file {} not found; run `fstta pretrain` first",
            path.display()
        )));
    }
    Ok(load_params(&path)?)
}

/// One online pass over a stream in a given presentation order.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub metrics: MetricsRow,
    pub time_ms: f64,
    pub counters: Counters,
    /// Records in presentation order.
    pub records: Vec<EpisodeRecord>,
    pub final_theta: Vec<f64>,
}

pub fn run_cell(
    policy: &PolicyParams,
    session: &mut AdaptSession,
    episodes: &[Episode],
    order: &[usize],
) -> Result<CellOutcome> {
    let start = Instant::now();
    let mut records = Vec::with_capacity(order.len());
    for &i in order {
        records.push(run_episode(policy, session, &episodes[i])?);
    }
    let time_ms = start.elapsed().as_secs_f64() * 1e3 / order.len() as f64;
    Ok(CellOutcome {
        metrics: evaluate(&records)?,
        time_ms,
        counters: session.counters(),
        records,
        final_theta: session.theta().to_vec(),
    })
}

fn fresh_cell(policy: &PolicyParams, strategy: Strategy, acfg: AdaptConfig, episodes: &[Episode], order: &[usize]) -> Result<CellOutcome> {
    let mut session = AdaptSession::new(strategy, acfg, policy.adaptable())?;
    run_cell(policy, &mut session, episodes, order)
}

fn cell_row(strategy: Strategy, stream: &str, shuffle: usize, outcome: &Result<CellOutcome>) -> ResultRow {
    let mut row = ResultRow {
        schema_version: SCHEMA_VERSION,
        strategy: strategy.to_string(),
        stream: stream.to_string(),
        shuffle: shuffle.to_string(),
        n: 0,
        sr: None,
        osr: None,
        spl: None,
        tl: None,
        ne: None,
        time_ms: None,
        fast_updates: None,
        slow_updates: None,
        quarantined: None,
        status: String::new(),
    };
    match outcome {
        Ok(o) => {
            row.n = 1;
            row.sr = Some(o.metrics.sr);
            row.osr = Some(o.metrics.osr);
            row.spl = Some(o.metrics.spl);
            row.tl = Some(o.metrics.tl);
            row.ne = Some(o.metrics.ne);
            row.time_ms = Some(o.time_ms);
            row.fast_updates = Some(o.counters.fast_updates as u64);
            row.slow_updates = Some(o.counters.slow_updates as u64);
            row.quarantined = Some(o.counters.quarantined as u64);
            row.status = "ok".into();
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

/// Mean success rate after each stream position, averaged over shuffles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub strategy: String,
    pub stream: String,
    pub position: usize,
    pub cumulative_sr: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub curves: Vec<CurvePoint>,
    pub results_path: PathBuf,
}

/// Runs every strategy × stream × shuffle cell and writes `results.csv`,
/// its sidecar and `curves.csv`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let policy = load_policy(cfg)?;
    let strategies = cfg.strategy_list()?;
    let acfg = cfg.adapt_config();

    let mut streams = Vec::new();
    for kind in cfg.stream_kinds() {
        for &seed in &cfg.stream_seeds {
            streams.push((stream_label(kind, seed), build_stream(cfg, kind, seed)?));
        }
    }
    let orders: Vec<Vec<usize>> = (0..cfg.shuffles).map(|s| shuffled_order(cfg.episodes, cfg.shuffle_seed, s)).collect();

    let cells: Vec<(usize, Strategy, usize)> = (0..streams.len())
        .flat_map(|si| strategies.iter().flat_map(move |&st| (0..cfg.shuffles).map(move |sh| (si, st, sh))))
        .collect();
    let outcomes: Vec<Result<CellOutcome>> = with_threads(cfg, || {
        cells
            .par_iter()
            .map(|&(si, st, sh)| fresh_cell(&policy, st, acfg, &streams[si].1, &orders[sh]))
            .collect()
    })?;

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (si, (label, _)) in streams.iter().enumerate() {
        for &st in &strategies {
            let idx: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].0 == si && cells[i].1 == st).collect();
            let shuffle_rows: Vec<ResultRow> = idx.iter().map(|&i| cell_row(st, label, cells[i].2, &outcomes[i])).collect();
            let refs: Vec<&ResultRow> = shuffle_rows.iter().collect();
            let agg = aggregate(&st.to_string(), label, &refs);
            rows.extend(shuffle_rows);
            rows.extend(agg);

            let ok: Vec<&CellOutcome> = idx.iter().filter_map(|&i| outcomes[i].as_ref().ok()).collect();
            if !ok.is_empty() {
                let mut hits = vec![0.0; cfg.episodes];
                for o in &ok {
                    let mut acc = 0.0;
                    for (p, r) in o.records.iter().enumerate() {
                        acc += if r.success { 1.0 } else { 0.0 };
                        hits[p] += 100.0 * acc / (p + 1) as f64;
                    }
                }
                curves.extend(hits.into_iter().enumerate().map(|(p, h)| CurvePoint {
                    strategy: st.to_string(),
                    stream: label.clone(),
                    position: p + 1,
                    cumulative_sr: h / ok.len() as f64,
                }));
            }
        }
    }
    rows.sort_by(canonical_order);

    ensure_output_dir(cfg)?;
    let results_path = cfg.output_dir.join("results.csv");
    results::write_results(&results_path, "run", cfg, &rows)?;
    results::write_table(&cfg.output_dir.join("curves.csv"), &results::header_lines("run", cfg), &curves)?;
    Ok(RunOutput { rows, curves, results_path })
}

/// Conditions of the forgetting protocol: whether the strategy adapts on the
/// unseen stream first, and whether it adapts during the seen evaluation.
pub const CONDITIONS: [(bool, bool); 4] = [(false, false), (false, true), (true, false), (true, true)];

pub fn condition_label(adapt_unseen: bool, adapt_seen: bool) -> String {
    let mark = |b: bool| if b { '✓' } else { '×' };
    format!("{}→{}", mark(adapt_unseen), mark(adapt_seen))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingRow {
    pub schema_version: u32,
    pub strategy: String,
    pub condition: String,
    pub adapt_unseen: bool,
    pub adapt_seen: bool,
    /// Successful (stream seed, shuffle) cells behind the row.
    pub n: usize,
    pub sr: f64,
    pub sr_std: f64,
    pub osr: f64,
    pub spl: f64,
    pub spl_std: f64,
    pub tl: f64,
    pub ne: f64,
}

#[derive(Debug, Clone)]
pub struct ForgettingOutput {
    pub rows: Vec<ForgettingRow>,
    pub path: PathBuf,
}

/// Evaluates on seen streams after optional adaptation on unseen streams.
///
/// For each stream seed and shuffle the unseen pass runs first; its final
/// parameters are then either frozen (`✓→×`) or kept adapting in the same
/// session (`✓→✓`) over the seen stream.
pub fn cmd_forgetting(cfg: &RunConfig) -> Result<ForgettingOutput> {
    cfg.validate()?;
    let policy = load_policy(cfg)?;
    let strategy = cfg.forgetting()?;
    let acfg = cfg.adapt_config();
    let mut pairs = Vec::new();
    for &seed in &cfg.stream_seeds {
        pairs.push((build_stream(cfg, StreamKind::Seen, seed)?, build_stream(cfg, StreamKind::Unseen, seed)?));
    }
    let orders: Vec<Vec<usize>> = (0..cfg.shuffles).map(|s| shuffled_order(cfg.episodes, cfg.shuffle_seed, s)).collect();
    let jobs: Vec<(usize, usize)> = (0..pairs.len()).flat_map(|p| (0..cfg.shuffles).map(move |s| (p, s))).collect();

    let per_job: Vec<Result<[MetricsRow; 4]>> = with_threads(cfg, || {
        jobs.par_iter()
            .map(|&(p, sh)| {
                let (seen, unseen) = &pairs[p];
                let order = &orders[sh];
                let xx = fresh_cell(&policy, Strategy::NoAdapt, acfg, seen, order)?.metrics;
                let xv = fresh_cell(&policy, strategy, acfg, seen, order)?.metrics;
                let mut session = AdaptSession::new(strategy, acfg, policy.adaptable())?;
                run_cell(&policy, &mut session, unseen, order)?;
                let mut adapted = policy.clone();
                adapted.set_adaptable(session.theta())?;
                let vx = fresh_cell(&adapted, Strategy::NoAdapt, acfg, seen, order)?.metrics;
                let vv = run_cell(&policy, &mut session, seen, order)?.metrics;
                Ok([xx, xv, vx, vv])
            })
            .collect()
    })?;

    let ok: Vec<&[MetricsRow; 4]> = per_job.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        let first = per_job.into_iter().find_map(|r| r.err()).expect("at least one job");
        return Err(first);
    }
    let rows: Vec<ForgettingRow> = CONDITIONS
        .iter()
        .enumerate()
        .map(|(c, &(u, s))| {
            let col = |f: fn(&MetricsRow) -> f64| ok.iter().map(|m| f(&m[c])).collect::<Vec<f64>>();
            let (sr, sr_std) = mean_std(&col(|m| m.sr));
            let (spl, spl_std) = mean_std(&col(|m| m.spl));
            ForgettingRow {
                schema_version: SCHEMA_VERSION,
                strategy: strategy.to_string(),
                condition: condition_label(u, s),
                adapt_unseen: u,
                adapt_seen: s,
                n: ok.len(),
                sr,
                sr_std,
                osr: mean_std(&col(|m| m.osr)).0,
                spl,
                spl_std,
                tl: mean_std(&col(|m| m.tl)).0,
                ne: mean_std(&col(|m| m.ne)).0,
            }
        })
        .collect();

    ensure_output_dir(cfg)?;
    let path = cfg.output_dir.join("forgetting.csv");
    results::write_table(&path, &results::header_lines("forgetting", cfg), &rows)?;
    results::write_sidecar(&path, "forgetting", cfg)?;
    Ok(ForgettingOutput { rows, path })
}
