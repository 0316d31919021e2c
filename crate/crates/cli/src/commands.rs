//! The five batch commands. Each one reads its inputs, never modifies them,
//! and writes everything into an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use zipmfm::data::{
    align_coords, compute_size_factors, default_threshold, load_counts, quality_control,
    read_coords, write_coords, write_dense_csv, SpatialGraph,
};
use zipmfm::metrics::{ari, auc, confusion_metrics};
use zipmfm::posterior::{merge_domains, summarize, Linkage, PosteriorSummary};
use zipmfm::sampler::{run_chain, ChainTrace, ModelData};
use zipmfm::selection::select_d;
use zipmfm::simulation::{simulate, simulate_with_labels, SimDataset};

use crate::config::{RunConfig, SimConfig};
use crate::output::{
    fmt_f, read_flags, read_labels, read_matrix, read_table, read_values, write_flags,
    write_labels, write_matrix, write_table, write_values,
};

/// Above this many spots the co-clustering matrix is stored sparsely.
pub const DENSE_PPM_MAX: usize = 5000;
/// Sparse co-clustering entries at or below this are dropped.
pub const SPARSE_PPM_MIN: f64 = 0.01;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .context("building worker pool")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn versions() -> serde_json::Value {
    json!({ "zipmfm": VERSION })
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub replicates: usize,
    pub seed: Option<u64>,
    pub threads: usize,
}

/// Spot layout with 1-based labels, `spot_id,x,y,label`.
fn read_layout(path: &Path) -> Result<(Vec<String>, Vec<[f64; 2]>, Vec<usize>)> {
    let (header, rows) = read_table(path)?;
    ensure!(header.len() == 4, "{}: expected spot_id,x,y,label", path.display());
    let (mut ids, mut xy, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (k, r) in rows.iter().enumerate() {
        let line = k + 2;
        let num = |c: &str| {
            c.parse::<f64>()
                .with_context(|| format!("{}: line {line}: bad coordinate '{c}'", path.display()))
        };
        let l: usize = r[3]
            .parse()
            .with_context(|| format!("{}: line {line}: bad label '{}'", path.display(), r[3]))?;
        ensure!(l >= 1, "{}: line {line}: labels start at 1", path.display());
        ids.push(r[0].clone());
        xy.push([num(&r[1])?, num(&r[2])?]);
        labels.push(l - 1);
    }
    ensure!(!ids.is_empty(), "{}: no spots", path.display());
    Ok((ids, xy, labels))
}

/// `key = value` lines, one per scenario field.
fn write_scenario(path: &Path, scenario: &zipmfm::simulation::SimScenario) -> Result<()> {
    let value = serde_json::to_value(scenario)?;
    let mut text = String::new();
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            text += &format!("{k} = {v}\n");
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_replicate(dir: &Path, ds: &SimDataset, scenario: &zipmfm::simulation::SimScenario) -> Result<()> {
    ensure_dir(dir)?;
    let spots = ds.counts.spot_ids();
    let genes = ds.counts.gene_ids();
    write_dense_csv(&ds.counts, &dir.join("counts.csv")).context("data")?;
    write_coords(spots, &ds.coords, &dir.join("coords.csv")).context("data")?;
    write_labels(&dir.join("z_true.csv"), spots, &ds.z_true)?;
    write_flags(&dir.join("gamma_true.csv"), genes, &[("gamma_true", &ds.gamma_true)])?;
    write_values(&dir.join("s_true.csv"), "spot_id", spots, "s", &ds.s_true)?;
    write_values(&dir.join("mu0_true.csv"), "gene_id", genes, "mu0", &ds.mu0_true)?;
    // domain means exist only for the discriminating genes
    let dgs: Vec<String> = genes
        .iter()
        .zip(&ds.gamma_true)
        .filter(|(_, g)| **g)
        .map(|(id, _)| id.clone())
        .collect();
    let domains: Vec<String> = (1..=ds.mu_star_true.len()).map(|k| k.to_string()).collect();
    write_matrix(&dir.join("mu_true.csv"), "domain", &domains, &dgs, &ds.mu_star_true)?;
    write_scenario(&dir.join("scenario.txt"), scenario)?;
    // ready-to-run fit config pointing at the files next to it
    write_json(
        &dir.join("fit.json"),
        &json!({ "data": { "counts": "counts.csv", "coords": "coords.csv" } }),
    )
}

/// Writes `rep_001`, `rep_002`, ... under `out`. Replicate `r` (from 1) uses
/// seed `seed + r - 1`, so the first replicate is the scenario itself and a
/// rerun reproduces every file.
pub fn cmd_simulate(sim: &SimConfig, opts: &SimulateOptions, out: &Path) -> Result<Vec<PathBuf>> {
    let mut base = sim.scenario();
    if let Some(s) = opts.seed {
        base.seed = s;
    }
    ensure!(opts.replicates >= 1, "replicates must be >= 1");
    let layout = sim.layout.as_deref().map(read_layout).transpose()?;
    if layout.is_none() {
        base.validate().context("simulation")?;
    }
    ensure_dir(out)?;

    let dirs: Vec<PathBuf> = (1..=opts.replicates).map(|r| out.join(format!("rep_{r:03}"))).collect();
    let results: Vec<Result<()>> = pool(opts.threads)?.install(|| {
        dirs.par_iter()
            .enumerate()
            .map(|(r, dir)| {
                let scenario = zipmfm::simulation::SimScenario {
                    seed: base.seed.wrapping_add(r as u64),
                    ..base.clone()
                };
                let ds = match &layout {
                    Some((ids, xy, labels)) => {
                        let mut ds = simulate_with_labels(labels, xy.clone(), &scenario)
                            .context("simulation")?;
                        ds.counts = relabel_spots(&ds, ids)?;
                        ds
                    }
                    None => simulate(&scenario).context("simulation")?,
                };
                write_replicate(dir, &ds, &scenario)
                    .with_context(|| format!("replicate {}", r + 1))
            })
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;

    write_json(
        &out.join("manifest.json"),
        &json!({
            "command": "simulate",
            "config": sim,
            "base_seed": base.seed,
            "replicates": opts.replicates,
            "versions": versions(),
        }),
    )?;
    log::info!("wrote {} replicate(s) to {}", dirs.len(), out.display());
    Ok(dirs)
}

/// Simulated counts carry generated spot ids; a layout supplies its own.
fn relabel_spots(ds: &SimDataset, ids: &[String]) -> Result<zipmfm::data::CountMatrix> {
    let c = &ds.counts;
    Ok(zipmfm::data::CountMatrix::new(
        c.values().to_vec(),
        ids.to_vec(),
        c.gene_ids().to_vec(),
    )?)
}

// --------------------------------------------------------------------- fit

/// Counts, size factors and neighbor graph ready for sampling.
pub struct Prepared {
    pub data: ModelData,
    pub graph: SpatialGraph,
    pub coords: Vec<[f64; 2]>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let counts_path = cfg.data.counts.as_deref().context("data.counts is not set")?;
    let coords_path = cfg.data.coords.as_deref().context("data.coords is not set")?;
    let mut counts = load_counts(counts_path, cfg.data.format).context("data: loading counts")?;
    if cfg.data.qc {
        counts = quality_control(&counts, &cfg.qc).context("data: quality control")?;
    }
    let records = read_coords(coords_path).context("data: reading coordinates")?;
    let coords = align_coords(counts.spot_ids(), &records).context("data: aligning coordinates")?;
    let s = compute_size_factors(&counts).context("data: size factors")?;
    let c0 = match cfg.data.c0 {
        Some(c) => c,
        None => default_threshold(&coords).context("data: neighbor threshold")?,
    };
    let graph = SpatialGraph::build(&coords, c0).context("data: neighbor graph")?;
    let data = ModelData::new(counts, s).context("data")?;
    Ok(Prepared { data, graph, coords })
}

pub struct FitOutcome {
    pub summary: PosteriorSummary,
    pub trace: ChainTrace,
}

/// Runs one chain and writes the posterior summaries. Numeric outputs depend
/// only on the config.
pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<FitOutcome> {
    cfg.validate()?;
    ensure_dir(out)?;
    let prep = prepare(cfg)?;
    let (n, p) = (prep.data.n(), prep.data.p());
    log::info!("fitting {n} spots x {p} genes, d = {}", cfg.mfm.d);

    let trace = pool(cfg.threads)?
        .install(|| run_chain(&prep.data, &prep.graph, &cfg.hyperparams, &cfg.mfm, &cfg.mcmc))
        .context("sampler")?;
    let summary = summarize(&trace, &cfg.summary).context("posterior")?;

    let counts = prep.data.counts();
    let spots = counts.spot_ids();
    let genes = counts.gene_ids();
    write_values(&out.join("ppi.csv"), "gene_id", genes, "ppi", &summary.ppi)?;
    write_flags(
        &out.join("gamma_hat.csv"),
        genes,
        &[("gamma_hat", &summary.gamma_hat), ("gamma_map", &summary.gamma_hat_map)],
    )?;
    write_values(&out.join("mu0_hat.csv"), "gene_id", genes, "mu0", &summary.mu0_hat)?;
    write_labels(&out.join("z_map.csv"), spots, &summary.z_hat_map)?;
    write_labels(&out.join("z_ppm.csv"), spots, &summary.z_hat_ppm)?;
    write_ppm(out, spots, &summary)?;
    let domains: Vec<String> = (1..=summary.k_hat).map(|k| k.to_string()).collect();
    write_matrix(&out.join("mu_hat.csv"), "domain", &domains, genes, &summary.mu_hat)?;
    write_table(
        &out.join("loglik_trace.csv"),
        &["iteration".into(), "loglik".into()],
        trace.loglik().iter().enumerate().map(|(t, v)| vec![(t + 1).to_string(), fmt_f(*v)]),
    )?;
    write_table(
        &out.join("k_trace.csv"),
        &["iteration".into(), "k".into()],
        trace.k_trace().iter().enumerate().map(|(t, k)| vec![(t + 1).to_string(), k.to_string()]),
    )?;
    write_values(&out.join("size_factors.csv"), "spot_id", spots, "s", prep.data.size_factors())?;
    if let Some(r) = &summary.r_mean {
        let rows: Vec<Vec<f64>> = r.chunks(p).map(<[f64]>::to_vec).collect();
        write_matrix(&out.join("r_hat.csv"), "spot_id", spots, genes, &rows)?;
    }

    write_json(
        &out.join("manifest.json"),
        &json!({
            "command": "fit",
            "config": cfg,
            "config_sha256": cfg.hash(),
            "seed": cfg.mcmc.seed,
            "versions": versions(),
            "n_spots": n,
            "n_genes": p,
            "neighbor_threshold": prep.graph.threshold(),
            "k_hat": summary.k_hat,
            "n_selected": summary.gamma_hat.iter().filter(|&&g| g).count(),
            "selection_threshold": summary.selection_threshold,
        }),
    )?;
    Ok(FitOutcome { summary, trace })
}

fn write_ppm(out: &Path, spots: &[String], s: &PosteriorSummary) -> Result<()> {
    let n = s.ppm.n();
    if n < DENSE_PPM_MAX {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| s.ppm.row(i).to_vec()).collect();
        write_matrix(&out.join("ppm.csv"), "spot_id", spots, spots, &rows)
    } else {
        let rows = (0..n).flat_map(|i| {
            (i + 1..n).filter_map(move |j| {
                let v = s.ppm.get(i, j);
                (v > SPARSE_PPM_MIN).then(|| vec![spots[i].clone(), spots[j].clone(), fmt_f(v)])
            })
        });
        write_table(
            &out.join("ppm_sparse.csv"),
            &["spot_i".into(), "spot_j".into(), "prob".into()],
            rows,
        )
    }
}

// ---------------------------------------------------------------- select-d

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub d: f64,
    pub pbic: Option<f64>,
    pub k_hat: Option<usize>,
    pub p_gamma_hat: Option<usize>,
    pub loglik: Option<f64>,
    pub error: Option<String>,
}

/// Fits every grid value, writes `pbic.csv` with one row per grid point and
/// returns the selected `d` with the table.
pub fn cmd_select_d(cfg: &RunConfig, out: &Path) -> Result<(f64, Vec<GridRow>)> {
    cfg.validate()?;
    ensure_dir(out)?;
    let prep = prepare(cfg)?;
    let sel = pool(cfg.threads)?
        .install(|| {
            select_d(&prep.data, &prep.graph, &cfg.grid, &cfg.hyperparams, &cfg.mfm, &cfg.mcmc)
        })
        .context("model selection")?;

    // successes and failures each keep grid order, so walk them together
    let (mut ok, mut bad) = (sel.records.iter().peekable(), sel.failed.iter().peekable());
    let mut rows = Vec::with_capacity(cfg.grid.len());
    for &d in &cfg.grid {
        if let Some(r) = ok.next_if(|r| r.d.to_bits() == d.to_bits()) {
            rows.push(GridRow {
                d,
                pbic: Some(r.pbic),
                k_hat: Some(r.k_hat),
                p_gamma_hat: Some(r.p_gamma_hat),
                loglik: Some(r.loglik_at_estimates),
                error: None,
            });
        } else if let Some((_, e)) = bad.next_if(|(fd, _)| fd.to_bits() == d.to_bits()) {
            rows.push(GridRow { d, pbic: None, k_hat: None, p_gamma_hat: None, loglik: None, error: Some(e.clone()) });
        } else {
            bail!("model selection returned no result for d = {d}");
        }
    }

    let opt = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
    write_table(
        &out.join("pbic.csv"),
        &["d", "pbic", "k_hat", "p_gamma_hat", "loglik", "status"].map(String::from),
        rows.iter().map(|r| {
            vec![
                fmt_f(r.d),
                opt(r.pbic.map(fmt_f)),
                opt(r.k_hat.map(|k| k.to_string())),
                opt(r.p_gamma_hat.map(|k| k.to_string())),
                opt(r.loglik.map(fmt_f)),
                match &r.error {
                    None => "ok".into(),
                    Some(e) => format!("failed: {}", e.replace([',', '\n'], ";")),
                },
            ]
        }),
    )?;
    write_json(
        &out.join("manifest.json"),
        &json!({
            "command": "select-d",
            "config": cfg,
            "config_sha256": cfg.hash(),
            "seed": cfg.mcmc.seed,
            "versions": versions(),
            "selected_d": sel.best_d,
        }),
    )?;
    Ok((sel.best_d, rows))
}

// --------------------------------------------------------------- summarize

/// Linkage recorded in a fit manifest, or the default.
fn fit_linkage(fit_dir: &Path) -> Result<Linkage> {
    let path = fit_dir.join("manifest.json");
    if !path.exists() {
        return Ok(Linkage::default());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(RunConfig::from_json(&text).map(|c| c.linkage).unwrap_or_default())
}

/// Writes `z_merged_K<k>.csv` into `out` for each requested `k` (default
/// `1..=K`). Merging uses `mu_hat.csv` over the selected genes.
pub fn cmd_summarize(
    fit_dir: &Path,
    out: &Path,
    k_targets: Option<&[usize]>,
    linkage: Option<Linkage>,
) -> Result<Vec<PathBuf>> {
    let (spots, z) = read_labels(&fit_dir.join("z_ppm.csv"))?;
    let (gene_cols, _, mu_hat) = read_matrix(&fit_dir.join("mu_hat.csv"))?;
    let (genes, gamma) = read_flags(&fit_dir.join("gamma_hat.csv"))?;
    ensure!(gene_cols == genes, "mu_hat.csv and gamma_hat.csv list different genes");
    let linkage = match linkage {
        Some(l) => l,
        None => fit_linkage(fit_dir)?,
    };
    let k_hat = mu_hat.len();
    let targets: Vec<usize> = match k_targets {
        Some(t) => t.to_vec(),
        None => (1..=k_hat).collect(),
    };
    ensure_dir(out)?;
    let mut written = Vec::new();
    for k in targets {
        let merged = merge_domains(&mu_hat, &gamma, &z, k, linkage)
            .with_context(|| format!("posterior: merging to {k} domains"))?;
        let path = out.join(format!("z_merged_K{k}.csv"));
        write_labels(&path, &spots, &merged)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub ari: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub mcc: f64,
    pub auc: f64,
}

/// Position in `truth` of each id in `est`. The estimate ids must appear in
/// the same relative order as in the truth (filtering may drop some).
fn align_subsequence(what: &str, truth: &[String], est: &[String]) -> Result<Vec<usize>> {
    let mut pos = Vec::with_capacity(est.len());
    let mut t = 0;
    for id in est {
        while t < truth.len() && truth[t] != *id {
            t += 1;
        }
        if t == truth.len() {
            bail!(
                "{what} id '{id}' is missing from the truth or out of order; \
                 estimates must list ids in the truth's order"
            );
        }
        pos.push(t);
        t += 1;
    }
    Ok(pos)
}

/// Compares a fit directory with a simulated replicate and writes
/// `metrics.csv` into `out`. Genes removed before fitting count as not
/// selected with inclusion probability 0.
pub fn cmd_evaluate(truth_dir: &Path, fit_dir: &Path, out: &Path) -> Result<Evaluation> {
    let (t_spots, z_true) = read_labels(&truth_dir.join("z_true.csv"))?;
    let (t_genes, gamma_true) = read_flags(&truth_dir.join("gamma_true.csv"))?;
    let (e_spots, z_hat) = read_labels(&fit_dir.join("z_ppm.csv"))?;
    let (e_genes, gamma_hat) = read_flags(&fit_dir.join("gamma_hat.csv"))?;
    let (ppi_genes, ppi) = read_values(&fit_dir.join("ppi.csv"))?;
    ensure!(ppi_genes == e_genes, "ppi.csv and gamma_hat.csv list different genes");

    let spot_pos = align_subsequence("spot", &t_spots, &e_spots)?;
    let z_true_sub: Vec<usize> = spot_pos.iter().map(|&i| z_true[i]).collect();
    let gene_pos = align_subsequence("gene", &t_genes, &e_genes)?;
    let mut call = vec![false; t_genes.len()];
    let mut score = vec![0.0; t_genes.len()];
    for (k, &j) in gene_pos.iter().enumerate() {
        call[j] = gamma_hat[k];
        score[j] = ppi[k];
    }

    let sel = confusion_metrics(&gamma_true, &call).context("metrics")?;
    let ev = Evaluation {
        ari: ari(&z_true_sub, &z_hat).context("metrics")?,
        sensitivity: sel.sensitivity,
        specificity: sel.specificity,
        mcc: sel.mcc,
        auc: auc(&gamma_true, &score).context("metrics")?,
    };
    ensure_dir(out)?;
    write_table(
        &out.join("metrics.csv"),
        &["metric".into(), "value".into()],
        [
            ("ari", ev.ari),
            ("sensitivity", ev.sensitivity),
            ("specificity", ev.specificity),
            ("mcc", ev.mcc),
            ("auc", ev.auc),
        ]
        .map(|(k, v)| vec![k.to_string(), fmt_f(v)]),
    )?;
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn subsequence_alignment() {
        let t = ids(&["a", "b", "c", "d"]);
        assert_eq!(align_subsequence("spot", &t, &ids(&["a", "c", "d"])).unwrap(), vec![0, 2, 3]);
        assert_eq!(align_subsequence("spot", &t, &t).unwrap(), vec![0, 1, 2, 3]);
        assert!(align_subsequence("spot", &t, &ids(&["b", "a"])).is_err());
        assert!(align_subsequence("spot", &t, &ids(&["a", "x"])).is_err());
        assert!(align_subsequence("spot", &t, &ids(&["a", "a"])).is_err());
    }
}
