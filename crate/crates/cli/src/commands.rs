use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ddrom::autoencoder::{load_checkpoint, save_checkpoint};
use ddrom::burgers::{build_problem, BurgersParams, FomProblem};
use ddrom::config::WorkbenchConfig;
use ddrom::dd::decompose;
use ddrom::hyper::{gaussian_test_matrix, load_samples, save_samples, SamplingMatrix, WeakConstraintMatrix};
use ddrom::rom::{
    assemble_rom, benchmark_rom, parameter_table, time_fom, write_bench_csv, BenchRow, Constraints, EvalReport,
    RomInstance, SubdomainDecoders, BENCH_HEADER, PARAMETER_HEADER,
};
use ddrom::snapshots::{generate_snapshots, SnapshotOptions, SnapshotSet};
use ddrom::workflow::{
    autoencoder_decoders, autoencoder_parameter_counts, default_n_c, hr_samples, identity_decoders, network_seed,
    pod_decoders, train_autoencoders, train_jobs, Part, RomSizes,
};
use ddrom::{Error, Result};
use log::{error, info, warn};

use crate::{Cli, Command, ConstraintKind, RomKind, SolveArgs};

pub fn run(cli: Cli) -> Result<()> {
    if let Command::PrintDefaults { desk } = cli.command {
        let c = if desk { WorkbenchConfig::desk() } else { WorkbenchConfig::default() };
        print!("{}", c.to_toml());
        return Ok(());
    }
    let mut cfg = match &cli.config {
        Some(p) => WorkbenchConfig::load(p)?,
        None => WorkbenchConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let ctx = Ctx {
        cfg,
        force: cli.force,
        dry_run: cli.dry_run,
    };
    match cli.command {
        Command::Snapshots => ctx.snapshots(),
        Command::Train { subdomain } => ctx.train(&subdomain),
        Command::Solve(args) => ctx.solve(&args),
        Command::Bench => ctx.bench(),
        Command::PrintDefaults { .. } => unreachable!(),
    }
}

/// Exclusive hold on an artifact directory, released on drop.
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "{} is locked by another run; delete {} if that run is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

struct Ctx {
    cfg: WorkbenchConfig,
    force: bool,
    dry_run: bool,
}

struct Online {
    fom: FomProblem,
    reference: Vec<f64>,
    x0: Vec<f64>,
    fom_seconds: f64,
}

fn sizes_of((n_omega, n_gamma): (usize, usize)) -> RomSizes {
    RomSizes { n_omega, n_gamma }
}

fn checkpoint_name(subdomain: usize, part: Part) -> String {
    format!("{subdomain}_{}.ckpt", part.name())
}

impl Ctx {
    fn dir(&self) -> PathBuf {
        self.cfg.artifact_dir()
    }

    fn snapshot_dir(&self) -> PathBuf {
        self.dir().join("snapshots")
    }

    fn n_subdomains(&self) -> usize {
        self.cfg.dd.n_sub_x * self.cfg.dd.n_sub_y
    }

    fn snapshots(&self) -> Result<()> {
        let sdir = self.snapshot_dir();
        let pgrid = self.cfg.parameter_grid()?;
        let exists = sdir.join("manifest.txt").exists();
        if self.dry_run {
            println!(
                "snapshots: {} FOM solves on {}x{}, {}x{} subdomains -> {}{}",
                pgrid.len(),
                self.cfg.mesh.nx,
                self.cfg.mesh.ny,
                self.cfg.dd.n_sub_x,
                self.cfg.dd.n_sub_y,
                sdir.display(),
                if exists && !self.force { " (exists, skipped)" } else { "" }
            );
            return Ok(());
        }
        if exists && !self.force {
            println!("snapshots up to date: {}", sdir.display());
            return Ok(());
        }
        let _lock = Lock::acquire(&self.dir())?;
        let grid = self.cfg.grid()?;
        let layout = decompose(&grid, self.cfg.dd.n_sub_x, self.cfg.dd.n_sub_y)?;
        let opts = SnapshotOptions {
            chains: self.cfg.parameters.chains,
            ..SnapshotOptions::default()
        };
        let t = Instant::now();
        let snap = generate_snapshots(&grid, self.cfg.mesh.nu, &pgrid, &layout, &opts)?;
        if !snap.failed.is_empty() {
            warn!("{} of {} FOM solves failed: {:?}", snap.failed.len(), pgrid.len(), snap.failed);
        }
        if sdir.exists() {
            fs::remove_dir_all(&sdir)?;
        }
        snap.save(&sdir)?;
        fs::write(self.dir().join("config.toml"), self.cfg.to_toml())?;
        println!(
            "{} snapshots ({} failed) in {:.1} s -> {}",
            snap.len(),
            snap.failed.len(),
            t.elapsed().as_secs_f64(),
            sdir.display()
        );
        Ok(())
    }

    fn require_snapshots(&self) -> Result<()> {
        let manifest = self.snapshot_dir().join("manifest.txt");
        if manifest.exists() {
            Ok(())
        } else {
            Err(Error::MissingArtifacts(vec![manifest]))
        }
    }

    fn load_snapshots(&self) -> Result<SnapshotSet> {
        self.require_snapshots()?;
        SnapshotSet::load(&self.snapshot_dir())
    }

    fn train(&self, only: &[usize]) -> Result<()> {
        let n_sub = self.n_subdomains();
        if let Some(&bad) = only.iter().find(|&&i| i >= n_sub) {
            return Err(Error::InvalidArgument(format!("subdomain {bad} does not exist ({n_sub} subdomains)")));
        }
        let only = (!only.is_empty()).then_some(only);
        let plan: Vec<(RomSizes, Vec<_>)> = self
            .cfg
            .rom
            .sizes
            .iter()
            .map(|&s| {
                let dir = self.cfg.model_dir(s);
                let jobs: Vec<_> = train_jobs(n_sub, only)
                    .into_iter()
                    .filter(|j| self.force || !dir.join(checkpoint_name(j.subdomain, j.part)).exists())
                    .collect();
                (s, jobs)
            })
            .collect();
        if self.dry_run {
            for (s, jobs) in &plan {
                println!(
                    "train ({},{}): {} networks, {} epochs -> {}",
                    s.n_omega,
                    s.n_gamma,
                    jobs.len(),
                    self.cfg.training.epochs,
                    self.cfg.model_dir(*s).display()
                );
            }
            return Ok(());
        }
        self.require_snapshots()?;
        let _lock = Lock::acquire(&self.dir())?;
        let snap = self.load_snapshots()?;
        let tcfg = self.cfg.training();
        let mut failures = 0;
        for (sizes, jobs) in &plan {
            if jobs.is_empty() {
                println!("networks ({},{}) up to date", sizes.n_omega, sizes.n_gamma);
                continue;
            }
            let dir = self.cfg.model_dir(*sizes);
            fs::create_dir_all(&dir)?;
            let t = Instant::now();
            let results = train_autoencoders(&snap, *sizes, &self.cfg.autoencoder, &tcfg, jobs);
            for (job, r) in jobs.iter().zip(results) {
                let name = checkpoint_name(job.subdomain, job.part);
                match r {
                    Ok((ae, report)) => {
                        save_checkpoint(&ae, network_seed(tcfg.seed, job.subdomain, job.part), &dir.join(&name))?;
                        fs::write(dir.join(name.replace(".ckpt", "_report.csv")), report.to_csv())?;
                    }
                    Err(e) => {
                        error!("subdomain {} {}: {e}", job.subdomain, job.part.name());
                        failures += 1;
                    }
                }
            }
            println!(
                "trained {} networks ({},{}) in {:.1} s -> {}",
                jobs.len(),
                sizes.n_omega,
                sizes.n_gamma,
                t.elapsed().as_secs_f64(),
                dir.display()
            );
        }
        if failures > 0 {
            return Err(Error::Diverged(format!("{failures} networks failed to train")));
        }
        Ok(())
    }

    fn missing_checkpoints(&self, sizes: RomSizes) -> Vec<PathBuf> {
        let dir = self.cfg.model_dir(sizes);
        train_jobs(self.n_subdomains(), None)
            .into_iter()
            .map(|j| dir.join(checkpoint_name(j.subdomain, j.part)))
            .filter(|p| !p.exists())
            .collect()
    }

    fn decoders(&self, kind: RomKind, snap: &SnapshotSet, sizes: RomSizes) -> Result<Vec<SubdomainDecoders>> {
        match kind {
            RomKind::Identity => Ok(identity_decoders(snap)),
            RomKind::Ls => pod_decoders(snap, sizes),
            RomKind::Nm => {
                let missing = self.missing_checkpoints(sizes);
                if !missing.is_empty() {
                    return Err(Error::MissingArtifacts(missing));
                }
                let dir = self.cfg.model_dir(sizes);
                let load = |part: Part| -> Result<Vec<_>> {
                    (0..self.n_subdomains())
                        .map(|i| Ok(load_checkpoint(&dir.join(checkpoint_name(i, part)))?.0))
                        .collect()
                };
                Ok(autoencoder_decoders(load(Part::Interior)?, load(Part::Interface)?))
            }
        }
    }

    fn constraints(&self, kind: ConstraintKind, snap: &SnapshotSet, decoders: &[SubdomainDecoders]) -> Result<Constraints> {
        let n_a = snap.layout.n_constraints();
        match kind {
            ConstraintKind::Strong => Ok(Constraints::Strong),
            ConstraintKind::Weak if self.cfg.hr.identity_c => Ok(Constraints::Weak(WeakConstraintMatrix::identity(n_a))),
            ConstraintKind::Weak => {
                let latent: usize = decoders.iter().map(|d| d.interface.latent_dim()).sum();
                let n_c = self.cfg.hr.n_c.unwrap_or_else(|| default_n_c(n_a, latent));
                Ok(Constraints::Weak(gaussian_test_matrix(n_c, n_a, self.cfg.constraint_seed())?))
            }
        }
    }

    fn samples(&self, snap: &SnapshotSet) -> Result<Vec<SamplingMatrix>> {
        let path = self.dir().join(format!("hr_samples_{}.toml", self.cfg.hr.n_samples));
        if path.exists() && !self.force {
            return load_samples(&path);
        }
        let s = hr_samples(snap, self.cfg.hr.n_samples)?;
        save_samples(&path, &s)?;
        Ok(s)
    }

    fn online(&self, snap: &SnapshotSet, a: f64, lambda: f64) -> Result<Online> {
        let params = BurgersParams::new(a, lambda, self.cfg.mesh.nu)?;
        let fom = build_problem(&snap.grid, &params)?;
        let x0 = snap.column(snap.nearest(a, lambda)).to_vec();
        let (reference, fom_seconds) = time_fom(&fom, &x0, self.cfg.bench.runs)?;
        info!("FOM at ({a}, {lambda}): {fom_seconds:.4} s");
        Ok(Online {
            fom,
            reference,
            x0,
            fom_seconds,
        })
    }

    fn evaluate(&self, rom: &RomInstance, on: &Online) -> Result<EvalReport> {
        let init = rom.encode(&on.x0)?;
        benchmark_rom(rom, &on.fom, &init, &on.reference, self.cfg.bench.runs, &self.cfg.solver.options())
    }

    fn solve(&self, args: &SolveArgs) -> Result<()> {
        let sizes = args
            .size
            .map(sizes_of)
            .unwrap_or(self.cfg.rom.sizes[0]);
        let (a, lambda) = (
            args.a.unwrap_or(self.cfg.rom.test_parameter.0),
            args.lambda.unwrap_or(self.cfg.rom.test_parameter.1),
        );
        BurgersParams::new(a, lambda, self.cfg.mesh.nu)?;
        let ckind = args.constraints.unwrap_or(if args.rom == RomKind::Identity {
            ConstraintKind::Strong
        } else {
            ConstraintKind::Weak
        });
        if self.dry_run {
            println!(
                "solve: {:?} ROM, sizes ({},{}), hr={}, {:?} constraints at a={a}, lambda={lambda}",
                args.rom, sizes.n_omega, sizes.n_gamma, args.hr, ckind
            );
            return Ok(());
        }
        self.require_snapshots()?;
        let _lock = Lock::acquire(&self.dir())?;
        let snap = self.load_snapshots()?;
        let decoders = self.decoders(args.rom, &snap, sizes)?;
        let constraints = self.constraints(ckind, &snap, &decoders)?;
        let samples = if args.hr { Some(self.samples(&snap)?) } else { None };
        let rom = assemble_rom(&snap.layout, decoders, samples.as_deref(), constraints)?;
        let on = self.online(&snap, a, lambda)?;
        let r = self.evaluate(&rom, &on)?;
        let header = "rom_type,n_omega,n_gamma,dof,constraints,hr,a,lambda,error,iterations,rom_seconds,rom_wall_seconds,fom_seconds,speedup,strong_violation,weak_violation";
        let (ni, ng) = rom.latent_sizes(0);
        let line = format!(
            "{:?},{ni},{ng},{},{:?},{},{a},{lambda},{:.6e},{},{:.6e},{:.6e},{:.6e},{:.4},{:.6e},{:.6e}",
            args.rom,
            rom.dof(),
            ckind,
            args.hr,
            r.error,
            r.iterations,
            r.rom_seconds,
            r.rom_wall_seconds,
            on.fom_seconds,
            on.fom_seconds / r.rom_seconds,
            r.strong_violation,
            r.weak_violation
        )
        .to_lowercase();
        let path = self.dir().join("solve_report.csv");
        fs::write(&path, format!("{header}\n{line}\n"))?;
        println!("{header}\n{line}");
        Ok(())
    }

    fn bench(&self) -> Result<()> {
        let combos: Vec<(RomSizes, RomKind, bool)> = self
            .cfg
            .rom
            .sizes
            .iter()
            .flat_map(|&s| [RomKind::Ls, RomKind::Nm].map(|k| (s, k)))
            .flat_map(|(s, k)| [false, true].map(|hr| (s, k, hr)))
            .collect();
        if self.dry_run {
            println!("bench: {} ROM configurations, {} timed runs each", combos.len(), self.cfg.bench.runs);
            println!("parameter table layouts: {:?}", self.cfg.bench.parameter_layouts);
            return Ok(());
        }
        let missing: Vec<PathBuf> = self.cfg.rom.sizes.iter().flat_map(|&s| self.missing_checkpoints(s)).collect();
        if !missing.is_empty() {
            return Err(Error::MissingArtifacts(missing));
        }
        self.require_snapshots()?;
        let _lock = Lock::acquire(&self.dir())?;
        let snap = self.load_snapshots()?;
        let (a, lambda) = self.cfg.rom.test_parameter;
        let on = self.online(&snap, a, lambda)?;
        let samples = self.samples(&snap)?;
        let mut rows = Vec::new();
        let mut first_err = None;
        for (sizes, kind, hr) in combos {
            let decoders = self.decoders(kind, &snap, sizes)?;
            let constraints = self.constraints(ConstraintKind::Weak, &snap, &decoders)?;
            let rom = assemble_rom(&snap.layout, decoders, hr.then_some(samples.as_slice()), constraints)?;
            let label = if kind == RomKind::Ls { "LS" } else { "NM" };
            let (error, speedup, iterations) = match self.evaluate(&rom, &on) {
                Ok(r) => (r.error, on.fom_seconds / r.rom_seconds, r.iterations),
                Err(e) => {
                    error!("{label} ({},{}) hr={hr}: {e}", sizes.n_omega, sizes.n_gamma);
                    first_err.get_or_insert(e);
                    (f64::NAN, f64::NAN, 0)
                }
            };
            rows.push(BenchRow {
                rom_type: label.into(),
                n_omega: sizes.n_omega,
                n_gamma: sizes.n_gamma,
                dof: rom.dof(),
                hr,
                n_hr_nodes: if hr { samples.iter().map(|s| s.len()).max().unwrap_or(0) } else { 0 },
                error,
                speedup,
                iterations,
            });
        }
        let bench_path = self.dir().join("bench_results.csv");
        write_bench_csv(&bench_path, &rows)?;
        println!("{BENCH_HEADER}");
        for r in &rows {
            println!("{}", r.csv());
        }

        let grid = self.cfg.grid()?;
        let base = self.cfg.rom.sizes[0];
        let counts = self
            .cfg
            .bench
            .parameter_layouts
            .iter()
            .map(|&(nx, ny)| {
                let layout = decompose(&grid, nx, ny)?;
                Ok((format!("{nx}x{ny}"), autoencoder_parameter_counts(&layout, base, &self.cfg.autoencoder)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let table = parameter_table(counts);
        let mut text = format!("{PARAMETER_HEADER}\n");
        for r in &table {
            text.push_str(&r.csv());
            text.push('\n');
        }
        fs::write(self.dir().join("parameter_table.csv"), &text)?;
        print!("\n{text}");
        println!("\nwrote {}", bench_path.display());
        first_err.map_or(Ok(()), Err)
    }
}
