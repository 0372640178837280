import yaml
import torch
from pathlib import Path
from dataclasses import replace

from captiongan.exc import ConfigError, InputError, StateError
from captiongan.util import split_seed
from captiongan.core.config import RunConfig
from captiongan.embeddings import get_backend, ToyWorld, CorpusEmbeddingTable
from captiongan.embeddings import build_corpus_table
from captiongan.embeddings.corpus import load_corpus, load_images, load_references
from captiongan.embeddings.corpus import write_corpus, write_images, write_references
from captiongan.generator import build_generator
from captiongan.discriminator import build_discriminator
from captiongan.rewards import AggregateCache
from captiongan.training import Trainer, run_initialization, run_pseudo_training
from captiongan.training import save_checkpoint, load_checkpoint
from captiongan.training.init import backend_vocabulary, corpus_loss
from captiongan.evaluation import clip_retrieval_baseline, clip_pseudo_labels
from captiongan.evaluation import evaluate, emit_report
from captiongan.evaluation.report import write_candidates, load_candidates, alignment
from captiongan.evaluation.baselines import write_pseudo_labels, load_pseudo_labels
from captiongan.explain import explain_prompts
from captiongan.core.export import write_json

TABLE_FILE = "corpus.emb"
INIT_CHECKPOINT = "init.ckpt"
TRAIN_CHECKPOINT = "train.ckpt"
TRAIN_LOG = "train.jsonl"
CANDIDATES_FILE = "candidates.jsonl"
REPORT_FILE = "report.json"
PSEUDO_FILE = "pseudo-labels.jsonl"
RETRIEVAL_FILE = "baseline-retrieval.jsonl"
EXPLAIN_FILE = "explain.json"


def _require(value, key):
    if value is None:
        raise ConfigError(f"Missing input file: {key}", key=key)
    return value


def _backend(context):
    if not hasattr(context, "_backend"):
        context._backend = get_backend(context.config.embeddings)
    return context._backend


def _encode_images(context, images):
    backend = _backend(context)
    vectors = backend.encode_images(images, workers=context.config.embeddings.workers)
    return [(image.id, vector) for image, vector in zip(images, vectors)]


def _seed(context, name):
    return split_seed(context.config.seed, name)[name]


def toy_world(context, out_dir):
    """Write a synthetic world (images, corpus, held-out images and the
    hidden captions as references) plus a run config pointing at it."""
    cfg = context.config
    if cfg.embeddings.backend != "toy":
        raise ConfigError("A toy world needs the toy embedding backend")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    world = ToyWorld(cfg.embeddings.toy_spec, seed=cfg.data.world_seed)
    images, corpus, eval_images, refs = world.generate(
        cfg.data.world_images, cfg.data.world_sentences
    )
    write_images(out_dir.joinpath("images.jsonl"), images)
    write_images(out_dir.joinpath("eval_images.jsonl"), eval_images)
    write_corpus(out_dir.joinpath("corpus.jsonl"), corpus)
    write_references(out_dir.joinpath("refs.json"), refs)
    data = replace(
        cfg.data,
        images="images.jsonl",
        corpus="corpus.jsonl",
        refs="refs.json",
        eval_images="eval_images.jsonl",
    )
    world_config = replace(cfg, data=data)
    config_path = out_dir.joinpath("run.yml")
    with open(config_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(world_config.to_dict(), fh, sort_keys=True)
    context.log.info(
        "Wrote toy world",
        path=out_dir,
        images=len(images),
        sentences=len(corpus),
    )
    return config_path


def embed_corpus(context):
    cfg = context.config
    backend = _backend(context)
    corpus = load_corpus(_require(cfg.data.corpus, "data.corpus"))
    table = build_corpus_table(
        corpus,
        backend,
        workers=cfg.embeddings.workers,
        meta={"config": cfg.to_dict(), "seed": cfg.seed},
    )
    table.save(context.get_path(TABLE_FILE))
    context.metrics = {"sentences": len(table)}
    return table


def load_table(context, path=None):
    """The corpus table of the run, built on first use. A table from a
    different encoder is rejected."""
    backend = _backend(context)
    path = Path(path) if path is not None else context.get_path(TABLE_FILE)
    if not path.exists():
        context.log.info("No corpus table yet, building it", path=path)
        return embed_corpus(context)
    table = CorpusEmbeddingTable.load(path)
    table.check(backend)
    return table


def aggregate(context, table_path=None, temperature=None):
    """Precompute and cache the aggregate embedding of every training
    image."""
    cfg = context.config
    if temperature is None:
        temperature = cfg.rewards.temperature
    if not temperature > 0:
        raise ConfigError("Aggregation temperature must be positive", key="tau")
    table = load_table(context, table_path)
    images = load_images(_require(cfg.data.images, "data.images"))
    pairs = _encode_images(context, images)
    aggregates = AggregateCache().get_or_build(
        pairs, table, temperature, config=cfg.to_dict()
    )
    context.metrics = {"images": len(aggregates), "temperature": temperature}
    return aggregates


def init_train(context):
    """Supervised stage: corpus reconstruction, or pseudo-label training
    when ``training.mode`` is ``pseudo``."""
    cfg = context.config
    backend = _backend(context)
    corpus = load_corpus(_require(cfg.data.corpus, "data.corpus"))
    if cfg.training.mode == "pseudo":
        path = _require(cfg.data.pseudo_labels, "data.pseudo_labels")
        pairs = load_pseudo_labels(path)
        images = load_images(_require(cfg.data.images, "data.images"))
        bundle = run_pseudo_training(pairs, images, backend, cfg)
    else:
        bundle = run_initialization(corpus, backend, cfg)
    save_checkpoint(bundle, context.get_path(INIT_CHECKPOINT))
    context.metrics = {
        "loss": bundle.state.stats.get("loss"),
        "corpus_loss": init_loss(context, bundle, corpus),
    }
    return bundle


def load_generator(context, bundle=None):
    cfg = context.config
    backend = _backend(context)
    generator = build_generator(
        cfg.generator,
        backend.d1,
        seed=_seed(context, "generator"),
        vocabulary=backend_vocabulary(backend),
    )
    if bundle is not None:
        generator.load_state_dict(bundle.generator)
    generator.eval()
    return generator


def latest_checkpoint(context, path=None):
    if path is not None:
        return load_checkpoint(path)
    for name in (TRAIN_CHECKPOINT, INIT_CHECKPOINT):
        candidate = context.get_path(name)
        if candidate.exists():
            return load_checkpoint(candidate)
    raise StateError("Run has no checkpoint", run=context.name)


def train(context, resume=False):
    """Adversarial stage, starting from the init checkpoint (unless
    ``training.skip_init``) or resuming the last adversarial one."""
    cfg = context.config
    backend = _backend(context)
    generator = load_generator(context)
    discriminator = None
    if cfg.rewards.use_naturalness:
        discriminator = build_discriminator(
            cfg.discriminator,
            seed=_seed(context, "discriminator"),
            vocabulary=backend_vocabulary(backend),
        )
    images = load_images(_require(cfg.data.images, "data.images"))
    pairs = _encode_images(context, images)
    corpus = load_corpus(_require(cfg.data.corpus, "data.corpus"))
    aggregates = None
    if cfg.rewards.needs_aggregate:
        table = load_table(context)
        aggregates = AggregateCache().get_or_build(
            pairs, table, cfg.rewards.temperature, config=cfg.to_dict()
        )
    log_path = context.get_path(TRAIN_LOG)
    trainer = Trainer(
        cfg,
        generator,
        discriminator,
        backend,
        pairs,
        [s.text for s in corpus],
        aggregates=aggregates,
        log_path=log_path,
    )
    resume_path = context.get_path(TRAIN_CHECKPOINT)
    if resume and resume_path.exists():
        trainer.restore(load_checkpoint(resume_path))
    else:
        if log_path.exists():
            log_path.unlink()
        if not cfg.training.skip_init:
            init_path = context.get_path(INIT_CHECKPOINT)
            if not init_path.exists():
                raise StateError("Run init-train first, or set training.skip_init")
            trainer.restore(load_checkpoint(init_path))
    rows = trainer.train()
    bundle = trainer.checkpoint()
    save_checkpoint(bundle, resume_path)
    if len(rows):
        context.metrics = {
            "step": trainer.state.step,
            "mean_reward": rows[-1]["mean_reward"],
        }
    return bundle


def _eval_images(context):
    cfg = context.config
    path = cfg.data.eval_images or _require(cfg.data.images, "data.images")
    return load_images(path)


def infer(context, checkpoint=None, out_path=None):
    """Greedy captions for the evaluation images."""
    cfg = context.config
    bundle = latest_checkpoint(context, checkpoint)
    generator = load_generator(context, bundle)
    pairs = _encode_images(context, _eval_images(context))
    size = cfg.training.batch_size
    candidates = {}
    with torch.no_grad():
        for start in range(0, len(pairs), size):
            chunk = pairs[start : start + size]
            prompts = generator.prompts([v for _, v in chunk])
            for (image_id, _), caption in zip(
                chunk, generator.greedy_batch(prompts, cfg.generator.decode)
            ):
                candidates[image_id] = caption.text
    out_path = out_path or context.get_path(CANDIDATES_FILE)
    write_candidates(out_path, candidates)
    context.metrics = {
        "checkpoint": bundle.tag,
        "images": len(candidates),
        "alignment": alignment(_backend(context), pairs, candidates),
    }
    return candidates


def evaluate_run(context, candidates_path=None, refs_path=None, out_path=None):
    cfg = context.config
    candidates_path = candidates_path or context.get_path(CANDIDATES_FILE)
    candidates = load_candidates(candidates_path)
    refs = load_references(_require(refs_path or cfg.data.refs, "data.refs"))
    meta = {"run": context.name, "seed": cfg.seed, "config": cfg.to_dict()}
    report = evaluate(candidates, refs, cfg.evaluation, meta=meta)
    emit_report(report, out_path or context.get_path(REPORT_FILE))
    context.metrics = dict(report.scores)
    return report


def baseline(context, mode="retrieval", table_path=None):
    """The retrieval baseline on the evaluation images, or pseudo labels
    for the training images."""
    cfg = context.config
    table = load_table(context, table_path)
    if mode == "pseudo":
        images = load_images(_require(cfg.data.images, "data.images"))
        pairs = clip_pseudo_labels(_encode_images(context, images), table)
        write_pseudo_labels(context.get_path(PSEUDO_FILE), pairs)
        context.metrics = {"pairs": len(pairs)}
        return pairs
    if mode != "retrieval":
        raise InputError(f"Unknown baseline mode: {mode}")
    images = _encode_images(context, _eval_images(context))
    candidates = clip_retrieval_baseline(images, table)
    path = write_candidates(context.get_path(RETRIEVAL_FILE), candidates)
    if cfg.data.refs is not None:
        evaluate_run(
            context,
            candidates_path=path,
            out_path=context.get_path("baseline-report.json"),
        )
    return candidates


def explain(context, image_id=None, checkpoint=None):
    bundle = latest_checkpoint(context, checkpoint)
    generator = load_generator(context, bundle)
    images = _eval_images(context)
    if image_id is not None:
        images = [i for i in images if i.id == image_id]
        if not len(images):
            raise InputError("Unknown image", image_id=image_id)
    (image_id, vector), = _encode_images(context, images[:1])
    prompts = generator.map_prompts(vector, image_id=image_id)
    explanation = explain_prompts(
        prompts, generator.decoder.token_embeddings, generator.tokenizer
    )
    with open(context.get_path(EXPLAIN_FILE), "w", encoding="utf-8") as fh:
        write_json(explanation, fh)
    return explanation


def full_run(context):
    """Every stage from initialization to evaluation in one go; used by
    sweeps. A toy config without data files gets a fresh toy world in the
    run directory."""
    cfg = context.config
    if cfg.data.images is None and cfg.embeddings.backend == "toy":
        context.config = RunConfig.load(toy_world(context, context.get_path("world")))
        context.write_config()
    if not context.config.training.skip_init:
        init_train(context)
    train(context)
    infer(context)
    inferred = dict(context.metrics)
    report = evaluate_run(context)
    context.metrics = dict(report.scores)
    context.metrics["alignment"] = inferred["alignment"]
    context.metrics["checkpoint"] = inferred["checkpoint"]
    return report


def init_loss(context, bundle, corpus=None):
    """Mean corpus reconstruction loss of a checkpoint, in nats per token."""
    generator = load_generator(context, bundle)
    if corpus is None:
        corpus = load_corpus(_require(context.config.data.corpus, "data.corpus"))
    return corpus_loss(generator, corpus, _backend(context))
