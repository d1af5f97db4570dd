//! Experiment pipelines behind the `rcm` binary.
//!
//! Each run writes into a staging directory next to the destination and
//! renames it into place only after every stage succeeded, so a failed run
//! leaves no statistic files behind. `manifest.json` records the canonical
//! config, its SHA-256, the seed and a digest of every output file.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Stage};
use crate::env::{extract_cluster, regularity_tail, sample_environment, ClusterView, Environment};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::kernel::{
    check_envelope, fit_envelope, heat_kernel_table_with, on_diagonal_exponent, DomainRule, EnvelopeConstants,
    EnvelopeFit, EnvelopeSide, FitSettings, RowRetention,
};
use crate::lil::{
    confinement_vs_corollary, dispersion_report, exit_scaling_report, lil_report, write_lil_csv, LilReport,
    LilStatistic, TaggedReport,
};
use crate::rng::WalkKey;
use crate::walk::{checkpoint_times, exit_ensemble, PathSummary, Walker};

pub const MANIFEST: &str = "manifest.json";
pub const OUT_ROOT_VAR: &str = "RCM_OUT_ROOT";

/// Walk ids for start `s` are `s * WALK_ID_STRIDE + i`, so start ensembles never share streams.
pub const WALK_ID_STRIDE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub schema_version: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub jobs: usize,
    pub stages: Vec<Stage>,
    /// Canonical config text; feeding it back through `--config` reproduces the run.
    pub config: String,
    pub files: Vec<FileDigest>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads a config file, or the config embedded in a manifest. The result is
/// not validated; call [`ExperimentConfig::validate`] after applying overrides.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('{') {
        let manifest: Manifest = serde_json::from_str(&text)?;
        return ExperimentConfig::parse_unvalidated(&manifest.config);
    }
    ExperimentConfig::parse_unvalidated(&text)
}

/// Destination directory: explicit, then the config's `out`, then `$RCM_OUT_ROOT/<command>-<hash>`.
pub fn resolve_out_dir(explicit: Option<&Path>, config: &ExperimentConfig, command: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &config.out {
        return PathBuf::from(p);
    }
    let root = std::env::var_os(OUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("rcm-out"));
    let hash = sha256_hex(config.canonical_text().as_bytes());
    root.join(format!("{command}-{}", &hash[..12]))
}

struct Staging {
    dir: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn new(dest: &Path) -> Result<Self> {
        let parent = dest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let name = dest
            .file_name()
            .ok_or_else(|| Error::param("out", "must name a directory"))?
            .to_string_lossy();
        let dir = parent.join(format!(".{name}.staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Staging { dir, files: Vec::new() })
    }

    fn create(&mut self, rel: &str) -> Result<BufWriter<fs::File>> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.files.push(rel.to_string());
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(BufWriter::new(file))
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        use std::io::Write;
        w.write_all(b"\n").map_err(|e| Error::io(rel, e))?;
        w.flush().map_err(|e| Error::io(rel, e))
    }

    fn digests(&self) -> Result<Vec<FileDigest>> {
        let mut files = self.files.clone();
        files.sort();
        files
            .into_iter()
            .map(|rel| {
                let path = self.dir.join(&rel);
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok(FileDigest {
                    sha256: sha256_hex(&bytes),
                    path: rel,
                })
            })
            .collect()
    }

    fn commit(self, dest: &Path) -> Result<()> {
        if dest.exists() {
            fs::remove_dir_all(dest).map_err(|e| Error::io(dest, e))?;
        }
        fs::rename(&self.dir, dest).map_err(|e| Error::io(dest, e))
    }

    fn abandon(self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

/// Runs `stages` of `config` into `dest` on a pool of `config.jobs` threads.
pub fn execute(config: &ExperimentConfig, command: &str, dest: &Path) -> Result<Manifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;
    let mut staging = Staging::new(dest)?;
    let result = pool.install(|| run_stages(config, &mut staging)).and_then(|()| {
        let canonical = config.canonical_text();
        let manifest = Manifest {
            tool: "rcm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            schema_version: crate::config::SCHEMA_VERSION,
            config_sha256: sha256_hex(canonical.as_bytes()),
            seed: config.seed,
            jobs: config.jobs,
            stages: config.stages.clone(),
            config: canonical,
            files: staging.digests()?,
        };
        staging.json(MANIFEST, &manifest)?;
        Ok(manifest)
    });
    match result {
        Ok(manifest) => {
            staging.commit(dest)?;
            Ok(manifest)
        }
        Err(e) => {
            staging.abandon();
            Err(e)
        }
    }
}

struct Sampled {
    env: Environment,
    cluster: ClusterView,
}

fn environments(config: &ExperimentConfig, graph: &WeightedGraph) -> Result<Vec<Sampled>> {
    (config.first_env..config.first_env + config.environments)
        .map(|env_id| {
            let env = sample_environment(graph, config.model, config.seed, env_id)?;
            let cluster = extract_cluster(&env);
            Ok(Sampled { env, cluster })
        })
        .collect()
}

#[derive(Serialize)]
struct EnvSummary {
    env_id: u64,
    vertices: usize,
    edges: usize,
    cluster_size: usize,
    density: f64,
}

#[derive(Serialize)]
struct LilEntry {
    env_id: u64,
    start: usize,
    start_vertex: usize,
    report: LilReport,
}

#[derive(Serialize)]
struct KernelSummary {
    env_id: u64,
    source: usize,
    horizon: usize,
    max_mass_error: f64,
    diagonal: Option<crate::kernel::DiagonalExponent>,
    upper: Option<EnvelopeFit>,
    lower: Option<EnvelopeFit>,
    vacuous_upper_violations: Option<usize>,
}

fn run_stages(config: &ExperimentConfig, out: &mut Staging) -> Result<()> {
    let graph = config.graph.build_with_budget(config.vertex_budget)?;
    let envs = environments(config, &graph)?;
    let stages = &config.stages;
    let beta = config.params.beta;

    if stages.contains(&Stage::Env) {
        let summaries: Vec<EnvSummary> = envs
            .iter()
            .map(|s| EnvSummary {
                env_id: s.env.env_id(),
                vertices: graph.vertex_count(),
                edges: graph.edge_count(),
                cluster_size: s.cluster.size(),
                density: s.cluster.density(),
            })
            .collect();
        out.json("env/summary.json", &summaries)?;
        for s in &envs {
            out.json(&format!("env/env_{}.json", s.env.env_id()), &s.env.sidecar(config.graph))?;
        }
    }

    if stages.contains(&Stage::Walk) || stages.contains(&Stage::Lil) {
        let checkpoints = checkpoint_times(config.walk.checkpoint_ratio, config.walk.n_steps)?;
        let mut all: Vec<PathSummary> = Vec::new();
        let mut entries = Vec::new();
        let mut tagged = Vec::new();
        for s in &envs {
            for (i, start) in config.walk.starts.iter().enumerate() {
                let x = start.resolve(&graph)?;
                let walker = Walker::new(&s.env, &s.cluster, x, config.walk.metric, config.walk.boundary_margin)?;
                let first = i as u64 * WALK_ID_STRIDE;
                let summaries = walker.ensemble(
                    config.walk.n_steps,
                    &checkpoints,
                    WalkKey::new(config.seed, s.env.env_id(), 0),
                    first..first + config.walk.n_walks,
                );
                if stages.contains(&Stage::Walk) {
                    let w = out.create(&format!("walk/paths_env{}_start{}.csv", s.env.env_id(), i))?;
                    PathSummary::write_csv(&summaries, w)?;
                }
                if stages.contains(&Stage::Lil) {
                    let report = lil_report(&summaries, beta, config.lil)?;
                    tagged.push(TaggedReport {
                        env_id: s.env.env_id(),
                        start: i,
                        report: report.clone(),
                    });
                    entries.push(LilEntry {
                        env_id: s.env.env_id(),
                        start: i,
                        start_vertex: x,
                        report,
                    });
                }
                all.extend(summaries);
            }
        }
        if stages.contains(&Stage::Lil) {
            for stat in [
                LilStatistic::Displacement,
                LilStatistic::RunningMaxOverPhi,
                LilStatistic::RunningMaxOverPsi,
            ] {
                let w = out.create(&format!("lil/{}.csv", stat.file_stem()))?;
                write_lil_csv(&all, beta, stat, w)?;
            }
            out.json("lil/reports.json", &entries)?;
            if let Ok(d) = dispersion_report(&tagged) {
                out.json("lil/dispersion.json", &d)?;
            }
        }
    }

    if stages.contains(&Stage::Hk) {
        let mut summaries = Vec::new();
        for s in &envs {
            let x = config.hk.start.resolve(&graph)?;
            let table = heat_kernel_table_with(
                &s.env,
                &s.cluster,
                x,
                config.hk.horizon,
                config.hk.retention,
                config.kernel_budget,
            )?;
            if table.retains_rows() {
                let w = out.create(&format!("hk/kernel_env{}.csv", s.env.env_id()))?;
                table.write_csv(w)?;
            }
            let max_mass_error = (0..=table.horizon())
                .map(|n| (table.row_mass(n) - 1.0).abs())
                .fold(0.0, f64::max);
            let diagonal = if config.hk.diag_min >= 2 && config.hk.diag_min < config.hk.diag_max {
                Some(on_diagonal_exponent(&table, config.hk.diag_min, config.hk.diag_max)?)
            } else {
                None
            };
            let (upper, lower, vacuous) = if config.hk.fit && config.hk.retention == RowRetention::All {
                let domain = DomainRule {
                    n_hat: config.hk.n_hat,
                    epsilon: config.params.epsilon,
                };
                let exps = config.exponents();
                let settings = FitSettings::default();
                let upper = fit_envelope(&table, EnvelopeSide::Upper, exps, domain, settings)?;
                let lower = fit_envelope(&table, EnvelopeSide::Lower, exps, domain, settings)?;
                let vacuous = check_envelope(
                    &table,
                    EnvelopeSide::Upper,
                    exps,
                    domain,
                    EnvelopeConstants { c_amp: 1e300, c_exp: 0.0 },
                )?;
                (Some(upper), Some(lower), Some(vacuous.violation_count))
            } else {
                (None, None, None)
            };
            summaries.push(KernelSummary {
                env_id: s.env.env_id(),
                source: x,
                horizon: table.horizon(),
                max_mass_error,
                diagonal,
                upper,
                lower,
                vacuous_upper_violations: vacuous,
            });
        }
        out.json("hk/summary.json", &summaries)?;
    }

    if stages.contains(&Stage::Exit) {
        let mut reports = Vec::new();
        for s in &envs {
            let x = config.exit.start.resolve(&graph)?;
            let records = exit_ensemble(
                &s.env,
                &s.cluster,
                x,
                &config.exit.radii,
                config.exit.cap,
                config.exit.walks,
                WalkKey::new(config.seed, s.env.env_id(), 0),
            )?;
            let w = out.create(&format!("exit/records_env{}.csv", s.env.env_id()))?;
            crate::walk::ExitRecord::write_csv(&records, w)?;
            let report = exit_scaling_report(&records, beta)?;
            let w = out.create(&format!("exit/scaling_env{}.csv", s.env.env_id()))?;
            report.write_csv(w)?;
            reports.push(report);
        }
        out.json("exit/summary.json", &reports)?;
    }

    if stages.contains(&Stage::Corollary) {
        let plain: Vec<Environment> = envs.iter().map(|s| s.env.clone()).collect();
        let rows = confinement_vs_corollary(
            &plain,
            &config.params,
            config.corollary.k_min..=config.corollary.k_max,
            config.corollary.trials,
            config.corollary.max_horizon,
            config.seed,
        )?;
        let mut w = csv::Writer::from_writer(out.create("corollary/table.csv")?);
        w.write_record(["k", "env_id", "radius", "horizon", "estimate", "ci_low", "ci_high", "target"])?;
        for r in &rows {
            w.write_record([
                r.k.to_string(),
                r.env_id.to_string(),
                r.radius.to_string(),
                r.horizon.to_string(),
                format!("{:?}", r.estimate),
                format!("{:?}", r.interval.0),
                format!("{:?}", r.interval.1),
                format!("{:?}", r.target),
            ])?;
        }
        w.flush().map_err(|e| Error::io("corollary/table.csv", e))?;
    }

    if stages.contains(&Stage::Regularity) {
        let seeds: Vec<u64> = (0..config.regularity.seeds).map(|i| config.seed.wrapping_add(i)).collect();
        let tail = regularity_tail(
            &graph,
            config.model,
            config.regularity.constants,
            config.regularity.r_max,
            &seeds,
        )?;
        out.json("regularity/tail.json", &tail)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeOverview {
    pub runs: usize,
    pub tables: usize,
    pub upper_c_amp: Vec<f64>,
    pub upper_c_exp: Vec<f64>,
    pub lower_c_amp: Vec<f64>,
    pub lower_c_exp: Vec<f64>,
    pub diagonal_exponents: Vec<f64>,
}

/// Merges `lil/reports.json` and `hk/summary.json` from prior run directories
/// into `report/dispersion.json` and `report/envelope_summary.json`.
pub fn report(inputs: &[PathBuf], dest: &Path) -> Result<Vec<String>> {
    #[derive(Deserialize)]
    struct LilIn {
        env_id: u64,
        start: usize,
        report: LilReport,
    }
    #[derive(Deserialize)]
    struct KernelIn {
        diagonal: Option<crate::kernel::DiagonalExponent>,
        upper: Option<EnvelopeFit>,
        lower: Option<EnvelopeFit>,
    }

    let mut tagged = Vec::new();
    let mut overview = EnvelopeOverview {
        runs: 0,
        tables: 0,
        upper_c_amp: vec![],
        upper_c_exp: vec![],
        lower_c_amp: vec![],
        lower_c_exp: vec![],
        diagonal_exponents: vec![],
    };
    let mut dirs: Vec<PathBuf> = Vec::new();
    for input in inputs {
        if input.join(MANIFEST).is_file() {
            dirs.push(input.clone());
        } else if input.is_dir() {
            let mut children: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(MANIFEST).is_file())
                .collect();
            children.sort();
            dirs.extend(children);
        }
    }
    for dir in &dirs {
        let lil = dir.join("lil/reports.json");
        if lil.is_file() {
            let text = fs::read_to_string(&lil).map_err(|e| Error::io(&lil, e))?;
            let entries: Vec<LilIn> = serde_json::from_str(&text)?;
            tagged.extend(entries.into_iter().map(|e| TaggedReport {
                env_id: e.env_id,
                start: e.start,
                report: e.report,
            }));
        }
        let hk = dir.join("hk/summary.json");
        if hk.is_file() {
            let text = fs::read_to_string(&hk).map_err(|e| Error::io(&hk, e))?;
            let entries: Vec<KernelIn> = serde_json::from_str(&text)?;
            overview.runs += 1;
            for k in entries {
                overview.tables += 1;
                if let Some(d) = k.diagonal {
                    overview.diagonal_exponents.push(d.exponent_hat);
                }
                if let Some(u) = k.upper {
                    overview.upper_c_amp.push(u.constants.c_amp);
                    overview.upper_c_exp.push(u.constants.c_exp);
                }
                if let Some(l) = k.lower {
                    overview.lower_c_amp.push(l.constants.c_amp);
                    overview.lower_c_exp.push(l.constants.c_exp);
                }
            }
        }
    }
    if tagged.is_empty() && overview.tables == 0 {
        return Err(Error::MissingInput(format!(
            "no lil/reports.json or hk/summary.json under {} input path(s)",
            inputs.len()
        )));
    }
    let mut staging = Staging::new(dest)?;
    let result = (|| {
        let mut written = Vec::new();
        if !tagged.is_empty() {
            match dispersion_report(&tagged) {
                Ok(d) => {
                    staging.json("report/dispersion.json", &d)?;
                    written.push("report/dispersion.json".to_string());
                }
                Err(e) if overview.tables == 0 => return Err(e),
                Err(_) => {}
            }
        }
        if overview.tables > 0 {
            staging.json("report/envelope_summary.json", &overview)?;
            written.push("report/envelope_summary.json".to_string());
        }
        Ok(written)
    })();
    match result {
        Ok(written) => {
            staging.commit(dest)?;
            Ok(written)
        }
        Err(e) => {
            staging.abandon();
            Err(e)
        }
    }
}
