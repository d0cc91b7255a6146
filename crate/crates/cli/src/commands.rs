use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use idmotion::dataset::synth::{synth_generate_with, SynthConfig};
use idmotion::dataset::{clean_frames, load_raw_sequence, pad_missing, trim_clips, DatasetIndex, MotionClip, RawFormat, Split};
use idmotion::idscore::{
    evaluate_idscore, mapper_pairs, split_gallery_probe, BaselineEmbedder, ExternalEmbedder, FaceOffsets,
    GaitEmbedder, KeypointMapper, MlpMapper,
};
use idmotion::losses::AdversarialForm;
use idmotion::render::render_clip;
use idmotion::training::{fit, load_run, resume, Checkpoint, FitOutput, CHECKPOINT_FILE};
use log::info;

use crate::config::RunConfig;
use crate::{Cli, Command, GanForm, InputFormat};

pub fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    match cli.command {
        Command::GenData { out } => gen_data(&config, &out).context("gen-data"),
        Command::Preprocess {
            source,
            format,
            content,
            test_id,
            out,
        } => preprocess(&config, &source, format, content, &test_id, &out).context("preprocess"),
        Command::Train {
            source,
            out,
            checkpoint,
            epochs,
            gan_form,
        } => train(config, &source, &out, checkpoint.as_deref(), epochs, gan_form).context("train"),
        Command::Retarget {
            checkpoint,
            source,
            target,
            out,
        } => retarget(&checkpoint, &source, &target, &out).context("retarget"),
        Command::EvalIdscore {
            checkpoint,
            source,
            target,
            embedder,
            out,
        } => eval_idscore(&config, &checkpoint, &source, target, &embedder, &out).context("eval-idscore"),
        Command::Render { source, out, size } => {
            let clip = load_clip(&source)?;
            let files = render_clip(&clip, &out, size.unwrap_or(config.render_size)).context("render")?;
            info!("wrote {} frames to {}", files.len(), out.display());
            Ok(())
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("input {} does not exist", path.display());
    }
    Ok(())
}

fn load_clip(path: &Path) -> Result<MotionClip> {
    require(path)?;
    MotionClip::load(path).with_context(|| format!("loading clip {}", path.display()))
}

fn load_index(path: &Path) -> Result<DatasetIndex> {
    require(path)?;
    DatasetIndex::load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn gen_data(config: &RunConfig, out: &Path) -> Result<()> {
    let s = &config.synth;
    if s.test_ids >= s.ids {
        bail!("synth.test_ids ({}) must be below synth.ids ({})", s.test_ids, s.ids);
    }
    let mut synth = SynthConfig::new(s.ids, s.contents, s.frames, config.seed);
    synth.clips_per_cell = s.clips_per_cell;
    synth.noise_px = s.noise_px;
    let mut index = synth_generate_with(&synth)?;
    let test: Vec<String> = index.ids().into_iter().skip(s.ids - s.test_ids).collect();
    index.split_by_ids(&test)?;
    let manifest = index.write_to_dir(out)?;
    info!("wrote {} clips, manifest {}", index.len(), manifest.display());
    Ok(())
}

fn preprocess(
    config: &RunConfig,
    sources: &[std::path::PathBuf],
    format: InputFormat,
    content: Option<String>,
    test_ids: &[String],
    out: &Path,
) -> Result<()> {
    let format = match format {
        InputFormat::OpenposeJsonDir => RawFormat::OpenposeJsonDir,
        InputFormat::ClipContainer => RawFormat::ClipContainer,
    };
    let mut index = DatasetIndex::new();
    for source in sources {
        require(source)?;
        let mut raw = load_raw_sequence(source, format).with_context(|| format!("loading {}", source.display()))?;
        if content.is_some() {
            raw.content_id = content.clone();
        }
        let before = raw.frames.len();
        let cleaned = clean_frames(&raw);
        let padded = pad_missing(&cleaned).with_context(|| format!("padding {}", source.display()))?;
        let clips = trim_clips(&padded, config.clip_frames)?;
        info!(
            "{}: {before} frames, {} kept, {} clips",
            source.display(),
            cleaned.frames.len(),
            clips.len()
        );
        for clip in clips {
            index.insert(clip);
        }
    }
    if index.is_empty() {
        bail!("no clip of {} frames could be cut from the inputs", config.clip_frames);
    }
    for id in test_ids {
        if !index.ids().contains(id) {
            bail!("test identity {id} not found among {:?}", index.ids());
        }
        index.set_split(id, Split::Test);
    }
    let manifest = index.write_to_dir(out)?;
    info!("wrote {} clips, manifest {}", index.len(), manifest.display());
    Ok(())
}

fn train(
    mut config: RunConfig,
    source: &Path,
    out: &Path,
    checkpoint: Option<&Path>,
    epochs: Option<usize>,
    gan_form: Option<GanForm>,
) -> Result<()> {
    let index = load_index(source)?.train();
    if let Some(form) = gan_form {
        config.train.gan_form = match form {
            GanForm::Lsgan => AdversarialForm::LeastSquares,
            GanForm::Log => AdversarialForm::Log,
        };
    }
    if let Some(e) = epochs {
        config.train.max_epochs = e;
    }
    let output = FitOutput::in_dir(out);
    let log_epoch = |s: &idmotion::training::EpochSummary| {
        info!(
            "epoch {:4} lr {:.2e} rec {:.4} adv {:.4} d {:.4} mc_rec {:.4} mc_tri {:.4} id_rec {:.4} id_tri {:.4} total {:.4}",
            s.epoch, s.ae_lr, s.mean.rec, s.mean.adv, s.mean.d_loss, s.mean.mc_rec, s.mean.mc_tri, s.mean.id_rec, s.mean.id_tri, s.mean.total
        )
    };
    let ck = match checkpoint {
        Some(path) => {
            require(path)?;
            let ck = Checkpoint::load(path)?;
            let until = epochs.unwrap_or(ck.trainer.config.max_epochs);
            resume(ck, &index, until, &output, log_epoch)?
        }
        None => fit(&index, config.model.clone(), config.train.clone(), &output, log_epoch)?,
    };
    info!(
        "finished at epoch {} (step {}), checkpoint {}",
        ck.trainer.epoch,
        ck.trainer.step,
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require(path)?;
    if path.is_dir() {
        Ok(load_run(path)?)
    } else {
        Ok(Checkpoint::load(path)?)
    }
}

fn retarget(checkpoint: &Path, source: &Path, target: &Path, out: &Path) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let (s, t) = (load_clip(source)?, load_clip(target)?);
    let clip = ck.model().retarget(&s, &t)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    clip.save(out)?;
    info!("wrote {}", out.display());
    Ok(())
}

fn eval_idscore(
    config: &RunConfig,
    checkpoint: &Path,
    source: &Path,
    target: Option<String>,
    embedder: &str,
    out: &Path,
) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let index = load_index(source)?;
    let (train, test) = (index.train(), index.test());
    let test_ids = test.ids();
    let subject = match target {
        Some(t) => t,
        None => test_ids.last().cloned().ok_or_else(|| anyhow!("the manifest has no test identities"))?,
    };
    let new_clip = index
        .clips()
        .find(|c| c.id_label == subject)
        .cloned()
        .ok_or_else(|| anyhow!("identity {subject} not found in {}", source.display()))?;
    let pool: Vec<MotionClip> = test.clips().filter(|c| c.id_label != subject).cloned().collect();
    let split = split_gallery_probe(&pool, config.seed)?;

    let mapper = if config.linear_face {
        KeypointMapper::Linear(FaceOffsets::default())
    } else {
        let synth = synth_generate_with(&SynthConfig::new(6, 8, 64, config.mapper.seed))?;
        let refs: Vec<&MotionClip> = synth.clips().collect();
        KeypointMapper::Mlp(MlpMapper::fit(&mapper_pairs(&refs)?, &config.mapper)?)
    };
    let embedder: Box<dyn GaitEmbedder> = match embedder {
        "baseline" => {
            let coco: Vec<MotionClip> = train.clips().map(|c| mapper.to_coco17(c)).collect::<idmotion::Result<_>>()?;
            Box::new(BaselineEmbedder::fit(&coco, &config.embedder)?)
        }
        other => match other.strip_prefix("external:") {
            Some(program) if !program.is_empty() => Box::new(ExternalEmbedder::new(program)),
            _ => bail!("--embedder must be `baseline` or `external:<program>`, got `{other}`"),
        },
    };
    let ev = evaluate_idscore(ck.model(), &split, &new_clip, embedder.as_ref(), &mapper)?;
    let csv = out.extension().is_some_and(|e| e == "csv");
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    ev.report.write(out, csv)?;
    let r = ev.report;
    info!(
        "rank1 rec {:.4} cross {:.4} idscore1 {:.4}; rank5 rec {:.4} cross {:.4} idscore5 {:.4}",
        r.rank1_rec, r.rank1_cross, r.idscore1, r.rank5_rec, r.rank5_cross, r.idscore5
    );
    Ok(())
}
