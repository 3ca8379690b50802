use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use mflab_core::diagnostics::{
    convergence_metrics, coupling_distance, diversity_roundtrip, finite_metrics, grad_check, write_metrics_csv,
    MetricsRecord,
};
use mflab_core::embedding::{build_embedding, LatentCodes, NeuronalEmbedding};
use mflab_core::io::{
    codes_to_container, embedding_to_container, finite_trajectory_to_container, mf_trajectory_to_container, Container,
};
use mflab_core::mf::{
    aux_flow, integrate_mf, probe_shape, AuxPairState, Direction, IntegrateOptions, MfProblem, MfTrajectory,
    ParticleSystem,
};
use mflab_core::model::{DataModel, DataSource, LossSpec, Sample, Schedules};
use mflab_core::net::{train_finite, FiniteTrajectory, NetworkArch, TrainOptions};
use mflab_core::rng::RngState;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};
use crate::manifest::{Manifest, RunStatus, SeedRecord, Versions};

/// Split labels of the master seed.
const STREAMS: [(&str, u64); 5] = [("codes", 1), ("population-codes", 2), ("panel-noise", 3), ("sgd", 4), ("probes", 5)];

fn stream(master: RngState, name: &str) -> RngState {
    let label = STREAMS.iter().find(|(n, _)| *n == name).expect("known stream").1;
    master.split(label)
}

/// Paths of everything a run wrote.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub metrics: Vec<PathBuf>,
    pub snapshots: Vec<PathBuf>,
    pub manifest: PathBuf,
}

struct Artifacts {
    dir: PathBuf,
    metrics: Vec<String>,
    snapshots: Vec<String>,
}

impl Artifacts {
    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    fn metrics(&mut self, name: &str, depth: usize, records: &[MetricsRecord]) -> Result<()> {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, depth, records)?;
        self.table(name, &buf)
    }

    fn table(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.write(name, bytes)?;
        self.metrics.push(name.into());
        Ok(())
    }

    fn snapshot(&mut self, name: &str, c: &Container) -> Result<()> {
        self.write(name, c.render().as_bytes())?;
        self.snapshots.push(name.into());
        Ok(())
    }
}

struct Setup {
    arch: NetworkArch,
    emb: NeuronalEmbedding,
    data: DataModel<f64>,
    problem: MfProblem<f64>,
    master: RngState,
}

impl Setup {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let arch = config.arch.build()?;
        let emb = build_embedding(&arch, &config.embedding)?;
        let loss: LossSpec = config.loss.spec();
        let schedules: Schedules = config.schedules.build(arch.depth())?;
        let master = RngState::new(config.seed);
        let d = &config.data;
        let teacher = DataModel::synthetic(d.teacher.clone(), d.inputs, d.noise_std, arch.input_dim())?;
        let panel: Vec<Sample<f64>> = teacher.panel(d.panel_size, stream(master, "panel-noise"))?;
        let data = if d.finite { DataModel::finite(panel.clone(), teacher.input_bound())? } else { teacher };
        let mut problem = MfProblem::new(panel, loss, schedules)?;
        problem.reduction = config.reduction();
        Ok(Setup { arch, emb, data, problem, master })
    }

    fn codes(&self, widths: &[usize], name: &str) -> Result<LatentCodes> {
        Ok(self.emb.sample_codes(widths, stream(self.master, name))?)
    }
}

/// Validates `config`, runs its pipeline and writes metrics, snapshots and
/// the manifest into `config.out_dir`.
///
/// On numerical overflow the partial outputs and a manifest with status
/// `overflow` are still written, and [`CliError::Overflow`] is returned.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let dir = config
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Validation(vec!["out_dir: required (set it in the config or pass --out-dir)".into()]))?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let mut art = Artifacts { dir: dir.clone(), metrics: Vec::new(), snapshots: Vec::new() };
    let (outcome, threads) = match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
            (pool.install(|| dispatch(config, &mut art)), n)
        }
        None => (dispatch(config, &mut art), rayon::current_num_threads()),
    };

    let (status, error) = match &outcome {
        Ok(()) => (RunStatus::Ok, None),
        Err(CliError::Core(e)) if e.is_overflow() => (RunStatus::Overflow, Some(e.to_string())),
        Err(e) => (RunStatus::Failed, Some(e.to_string())),
    };
    let manifest = Manifest {
        status,
        error,
        config: config.clone(),
        seeds: SeedRecord {
            master: config.seed,
            embedding: config.embedding.seed,
            streams: STREAMS.iter().map(|(n, l)| (n.to_string(), *l)).collect(),
        },
        versions: Versions::current(),
        started_unix,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        threads,
        metrics: art.metrics.clone(),
        snapshots: art.snapshots.clone(),
    };
    let manifest_path = manifest.write(&dir)?;
    match outcome {
        Ok(()) => Ok(RunOutput {
            metrics: art.metrics.iter().map(|n| dir.join(n)).collect(),
            snapshots: art.snapshots.iter().map(|n| dir.join(n)).collect(),
            manifest: manifest_path,
            out_dir: dir,
        }),
        Err(CliError::Core(error)) if error.is_overflow() => Err(CliError::Overflow { error, out_dir: dir }),
        Err(e) => Err(e),
    }
}

/// Re-runs the configuration recorded in a manifest into `out_dir`.
pub fn replay(manifest: &Path, out_dir: &Path) -> Result<RunOutput> {
    let m = Manifest::read(manifest)?;
    let mut config = m.config;
    config.out_dir = Some(out_dir.to_path_buf());
    run_experiment(&config)
}

fn dispatch(config: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let setup = Setup::new(config)?;
    art.snapshot("embedding.txt", &embedding_to_container(&setup.emb))?;
    match config.kind {
        ExperimentKind::TrainFinite => run_train_finite(config, &setup, art),
        ExperimentKind::TrainMf => run_train_mf(config, &setup, art),
        ExperimentKind::Couple => run_couple(config, &setup, art),
        ExperimentKind::Diversity => run_diversity(config, &setup, art),
        ExperimentKind::GradCheck => run_grad_check(config, &setup, art),
    }
}

fn train(config: &ExperimentConfig, setup: &Setup, init: &mflab_core::net::Weights<f64>) -> (FiniteTrajectory<f64>, Option<mflab_core::Error>) {
    let sgd = config.sgd.as_ref().expect("validated");
    let opts = TrainOptions {
        eps: sgd.eps,
        steps: sgd.steps,
        log_every: sgd.log_every,
        batch: sgd.batch,
        reduction: config.reduction(),
    };
    let p = &setup.problem;
    match train_finite(&setup.arch, init, &setup.data, &p.loss, &p.schedules, &opts, stream(setup.master, "sgd")) {
        Ok(t) => (t, None),
        Err(i) => (i.partial, Some(i.error)),
    }
}

fn integrate(config: &ExperimentConfig, setup: &Setup, ps: &ParticleSystem<f64>) -> (MfTrajectory<f64>, Option<mflab_core::Error>) {
    let i = config.integration.as_ref().expect("validated");
    let opts = IntegrateOptions { h: i.h, horizon: i.horizon, scheme: i.scheme, checkpoint_every: i.checkpoint_every };
    match integrate_mf(ps, &setup.problem, &opts) {
        Ok(t) => (t, None),
        Err(i) => (i.partial, Some(i.error)),
    }
}

fn fail(err: Option<mflab_core::Error>) -> Result<()> {
    err.map_or(Ok(()), |e| Err(e.into()))
}

fn run_train_finite(config: &ExperimentConfig, setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let codes = setup.codes(setup.arch.widths(), "codes")?;
    art.snapshot("codes.txt", &codes_to_container(&codes))?;
    let (_, init) = setup.emb.weights_on::<f64>(&codes)?;
    let (traj, err) = train(config, setup, &init);
    art.snapshot("finite_snapshots.txt", &finite_trajectory_to_container(&setup.arch, &traj))?;
    art.metrics("metrics.csv", setup.arch.depth(), &finite_metrics(&setup.arch, &traj, &setup.problem)?)?;
    fail(err)
}

fn mf_metrics(setup: &Setup, traj: &MfTrajectory<f64>, art: &mut Artifacts, name: &str) -> Result<()> {
    let records = convergence_metrics(traj, traj.last(), &setup.problem)?;
    art.metrics(name, setup.arch.depth(), &records)
}

fn population_system(config: &ExperimentConfig, setup: &Setup, art: &mut Artifacts) -> Result<ParticleSystem<f64>> {
    let codes = setup.codes(&config.population_widths(), "codes")?;
    art.snapshot("codes.txt", &codes_to_container(&codes))?;
    Ok(setup.emb.instantiate_coupled::<f64>(&codes)?.particles)
}

fn run_train_mf(config: &ExperimentConfig, setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let ps = population_system(config, setup, art)?;
    let (traj, err) = integrate(config, setup, &ps);
    art.snapshot("mf_snapshots.txt", &mf_trajectory_to_container(&traj))?;
    mf_metrics(setup, &traj, art, "metrics.csv")?;
    fail(err)
}

fn run_couple(config: &ExperimentConfig, setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let widths = setup.arch.widths().to_vec();
    let pop = config.population_widths();
    let codes = setup.codes(&widths, "codes")?;
    art.snapshot("codes.txt", &codes_to_container(&codes))?;
    let pair = setup.emb.instantiate_coupled::<f64>(&codes)?;
    let particles = if pop == widths {
        pair.particles
    } else {
        let population = setup.codes(&pop, "population-codes")?;
        art.snapshot("population_codes.txt", &codes_to_container(&population))?;
        setup.emb.instantiate_with_tracers::<f64>(&population, &codes)?
    };

    let (fin, fin_err) = train(config, setup, &pair.finite);
    art.snapshot("finite_snapshots.txt", &finite_trajectory_to_container(&setup.arch, &fin))?;
    let mut records = finite_metrics(&setup.arch, &fin, &setup.problem)?;
    if fin_err.is_some() {
        art.metrics("metrics.csv", setup.arch.depth(), &records)?;
        return fail(fin_err);
    }
    let (mf, mf_err) = integrate(config, setup, &particles);
    art.snapshot("mf_snapshots.txt", &mf_trajectory_to_container(&mf))?;
    if mf_err.is_none() {
        let series = coupling_distance(&setup.arch, &fin, &mf)?;
        for (r, d) in records.iter_mut().zip(&series.distances) {
            r.coupling_dist = Some(*d);
        }
    }
    art.metrics("metrics.csv", setup.arch.depth(), &records)?;
    mf_metrics(setup, &mf, art, "mf_metrics.csv")?;
    fail(mf_err)
}

fn run_diversity(config: &ExperimentConfig, setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let ps = population_system(config, setup, art)?;
    let (traj, err) = integrate(config, setup, &ps);
    art.snapshot("mf_snapshots.txt", &mf_trajectory_to_container(&traj))?;
    mf_metrics(setup, &traj, art, "metrics.csv")?;
    fail(err)?;

    let div = config.diversity.clone().unwrap_or_default();
    let depth = setup.arch.depth();
    let layers = div.layers.clone().unwrap_or_else(|| (1..depth).collect());
    let probe_rng = stream(setup.master, "probes");
    let mut table = String::from("layer,kind,index,error\n");
    for &layer in &layers {
        let (l, r) = probe_shape(traj.first(), layer);
        let mut gen = probe_rng.split(layer as u64).generator();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut gen)).collect() };
        let probes: Vec<AuxPairState<f64>> =
            (0..div.probes).map(|_| AuxPairState { layer, left: draw(l), right: draw(r) }).collect();
        for (k, e) in diversity_roundtrip(&traj, &setup.problem, &probes, None)?.iter().enumerate() {
            table.push_str(&format!("{layer},roundtrip,{k},{e:.16e}\n"));
        }
        for j in 0..div.consistency_particles.min(ps.populations()[layer - 1]) {
            let start = AuxPairState::from_particle(traj.first(), layer, j)?;
            let end = AuxPairState::from_particle(traj.last(), layer, j)?;
            let flowed = aux_flow(&traj, &setup.problem, &start, Direction::Forward, None)?;
            table.push_str(&format!("{layer},consistency,{j},{:.16e}\n", flowed.max_abs_diff(&end)));
        }
    }
    art.table("diversity.csv", table.as_bytes())
}

fn run_grad_check(config: &ExperimentConfig, setup: &Setup, art: &mut Artifacts) -> Result<()> {
    let gc = config.grad_check.clone().unwrap_or_default();
    let codes = setup.codes(setup.arch.widths(), "codes")?;
    art.snapshot("codes.txt", &codes_to_container(&codes))?;
    let (_, w) = setup.emb.weights_on::<f64>(&codes)?;
    let samples: &[Sample<f64>] = match setup.data.source() {
        DataSource::FiniteDataset(s) => s,
        _ => &setup.problem.panel,
    };
    let mut table = String::from("instance,max_rel_error,layer,row,col,analytic,numeric\n");
    for k in 0..gc.instances {
        let rep = grad_check(&setup.arch, &w, &samples[k % samples.len()], &setup.problem.loss, gc.h)?;
        let (i, r, c) = rep.location;
        table.push_str(&format!(
            "{k},{:.16e},{i},{r},{c},{:.16e},{:.16e}\n",
            rep.max_rel_error, rep.analytic, rep.numeric
        ));
    }
    art.table("grad_check.csv", table.as_bytes())
}
