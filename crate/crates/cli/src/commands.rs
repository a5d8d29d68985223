use std::fs;
use std::path::{Path, PathBuf};

use mmsearch_core::certificate::Certificate;
use mmsearch_core::dataset::{read_dataset, write_dataset, Dataset};
use mmsearch_core::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelParams};
use mmsearch_core::oracle::{brute_force_rank, OracleConfig, OracleGuide};
use mmsearch_core::render::render_algorithm;
use mmsearch_core::rng;
use mmsearch_core::search::{decompose as run_search, Guide};
use mmsearch_core::synth::generate_dataset;
use mmsearch_core::tensor::{build_matmul_tensor, first_mismatch, verify_matmul_algorithm};
use mmsearch_core::tensor_file::read_tensor;
use mmsearch_core::{Error, MatmulShape, Tensor3};

use crate::config::RunConfig;
use crate::{CliError, Common, Failed};

type CmdResult = Result<(), CliError>;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.into(),
        source: e,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Loads the configuration, applies the common flag overrides and creates
/// the output directory.
fn resolve(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.out = out.clone();
    }
    let out = cfg.run.out.clone();
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    Ok((cfg, out))
}

enum Target {
    Matmul(MatmulShape, Tensor3),
    File(Tensor3),
}

impl Target {
    fn parse(arg: &str) -> Result<Self, Error> {
        match arg.strip_prefix("matmul:") {
            Some(dims) => {
                let shape: MatmulShape = dims.parse()?;
                let t = build_matmul_tensor(shape.n, shape.m, shape.p)?;
                Ok(Target::Matmul(shape, t))
            }
            None => Ok(Target::File(read_tensor(Path::new(arg))?)),
        }
    }

    fn tensor(&self) -> &Tensor3 {
        match self {
            Target::Matmul(_, t) | Target::File(t) => t,
        }
    }
}

pub fn gen(common: &Common, n: Option<usize>, no_filter: bool) -> CmdResult {
    let (mut cfg, out) = resolve(common)?;
    if let Some(n) = n {
        cfg.gen.n = n;
    }
    if no_filter {
        cfg.gen.filter = false;
    }
    let params = cfg.gen_params();
    let (demos, stats) = generate_dataset(&params, cfg.gen.n, cfg.filter()?, cfg.gen.max_retries)?;
    let dataset = Dataset::new(params.size, params.f_max, demos)?;
    write_dataset(&dataset, &out.join("dataset.txt"))?;
    let report = stats.report();
    write_file(&out.join("gen_stats.txt"), &report)?;
    cfg.write_snapshot(&out)?;
    print!("{report}");
    Ok(())
}

pub fn train(
    common: &Common,
    dataset_path: &Path,
    variant: Option<String>,
    epochs: Option<usize>,
    resume: Option<&Path>,
) -> CmdResult {
    let (mut cfg, out) = resolve(common)?;
    if let Some(v) = variant {
        cfg.run.variant = v;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let dataset = read_dataset(dataset_path)?;
    let mut train_cfg = cfg.train_config()?;
    let init = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path, Some(dataset.size))?;
            train_cfg.start_epoch = ckpt.epoch;
            ckpt.params
        }
        None => {
            let arch = cfg.architecture(dataset.size, dataset.f_max)?;
            ModelParams::init(arch, &mut rng::seeded(cfg.train_seed()))?
        }
    };
    if init.tokenizer().f_max < dataset.f_max {
        return Err(Error::Incompatible(format!(
            "model covers entries up to {}, dataset needs {}",
            init.tokenizer().f_max,
            dataset.f_max
        ))
        .into());
    }
    cfg.write_snapshot(&out)?;
    let ckpt_path = out.join("model.ckpt");
    match mmsearch_core::model::train(&dataset.demos, &train_cfg, init) {
        Ok((params, log)) => {
            let epoch = log.records.last().map_or(train_cfg.start_epoch, |r| r.epoch);
            save_checkpoint(&Checkpoint { params, epoch }, &ckpt_path)?;
            write_file(&out.join("train.log"), &log.to_text())?;
            write_file(&out.join("loss_table.txt"), &log.loss_table())?;
            if let Some(last) = log.records.last() {
                println!(
                    "epoch={} train_loss={:.6} variant={}",
                    last.epoch, last.train.total, log.variant
                );
            }
            Ok(())
        }
        Err(abort) => {
            let ckpt = Checkpoint {
                params: abort.params,
                epoch: abort.last_good_epoch,
            };
            save_checkpoint(&ckpt, &ckpt_path)?;
            write_file(&out.join("train.log"), &abort.log.to_text())?;
            write_file(&out.join("loss_table.txt"), &abort.log.loss_table())?;
            Err(Failed(format!(
                "training aborted: {}; kept epoch {} weights in {}",
                abort.error,
                abort.last_good_epoch,
                ckpt_path.display()
            ))
            .into())
        }
    }
}

pub fn decompose(
    common: &Common,
    target: &str,
    checkpoint: Option<&Path>,
    oracle: bool,
    simulations: Option<usize>,
) -> CmdResult {
    let (mut cfg, out) = resolve(common)?;
    if let Some(s) = simulations {
        cfg.search.simulations = s;
    }
    let target = Target::parse(target)?;
    let t = target.tensor();
    let search_cfg = cfg.search_config()?;
    let (guide, f_max): (Box<dyn Guide>, i32) = if oracle {
        let ocfg = OracleConfig::new(t.size(), 3);
        (Box::new(OracleGuide::new(&ocfg)?), 1)
    } else {
        let path = checkpoint.ok_or_else(|| Error::Usage("--checkpoint is required".into()))?;
        let params = load_checkpoint(path, Some(t.size()))?.params;
        let f_max = params.tokenizer().f_max;
        (Box::new(params), f_max)
    };
    cfg.write_snapshot(&out)?;
    let result = run_search(t, guide.as_ref(), &search_cfg);
    let dec = match result {
        Ok(d) => d,
        Err(failure) => {
            write_file(&out.join("episode.log"), &failure.partial.episode_log())?;
            return Err(failure.error.into());
        }
    };
    write_file(&out.join("episode.log"), &dec.episode_log())?;
    if !dec.success {
        return Err(Failed(format!(
            "search failed: residual has {} non-zero entries after {} factors",
            dec.residual.nnz(),
            dec.rank()
        ))
        .into());
    }
    let f_max = dec.factors.iter().map(|f| f.max_abs()).max().unwrap_or(0).max(f_max);
    Certificate::new(t.size(), f_max, dec.factors.clone()).write(&out.join("certificate.txt"))?;
    println!("rank={}", dec.rank());
    Ok(())
}

pub fn verify(certificate: &Path, target: &str, trials: usize, seed: u64) -> CmdResult {
    let cert = Certificate::read(certificate)?;
    let target = Target::parse(target)?;
    let t = target.tensor();
    if cert.size != t.size() {
        return Err(Error::Usage(format!(
            "dimension mismatch: certificate has S={}, target has S={}",
            cert.size,
            t.size()
        ))
        .into());
    }
    let mut ok = true;
    match first_mismatch(t, &cert.factors) {
        None => println!("decomposition=pass rank={}", cert.rank()),
        Some(((a, b, c), expected, got)) => {
            ok = false;
            println!("decomposition=fail first_mismatch=[{a},{b},{c}] expected={expected} got={got}");
        }
    }
    if let Target::Matmul(shape, _) = target {
        let pass = verify_matmul_algorithm(shape, &cert.factors, trials, seed)?;
        ok &= pass;
        println!(
            "matmul_algorithm={} trials={trials}",
            if pass { "pass" } else { "fail" }
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Failed("verification failed".into()).into())
    }
}

pub fn render(certificate: &Path, target: &str) -> CmdResult {
    let cert = Certificate::read(certificate)?;
    let Target::Matmul(shape, t) = Target::parse(target)? else {
        return Err(Error::Usage("render needs a matmul:n,m,p target".into()).into());
    };
    if cert.size != t.size() {
        return Err(Error::Usage(format!(
            "dimension mismatch: certificate has S={}, target has S={}",
            cert.size,
            t.size()
        ))
        .into());
    }
    if first_mismatch(&t, &cert.factors).is_some() {
        return Err(Failed("refusing to render: certificate does not verify".into()).into());
    }
    print!("{}", render_algorithm(&cert.factors, shape)?);
    Ok(())
}

pub fn oracle(tensor: &Path, max_rank: usize, out: Option<&Path>) -> CmdResult {
    let t = read_tensor(tensor)?;
    let cfg = OracleConfig::new(t.size(), max_rank);
    match brute_force_rank(&t, &cfg)? {
        Some((rank, witness)) => {
            println!("rank={rank}");
            if let Some(path) = out {
                let f_max = witness.iter().map(|f| f.max_abs()).max().unwrap_or(1);
                Certificate::new(t.size(), f_max, witness).write(path)?;
            }
            Ok(())
        }
        None => {
            println!("rank>{max_rank}");
            Ok(())
        }
    }
}
