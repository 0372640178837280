import math
import structlog
import numpy as np

from captiongan.exc import InputError
from captiongan.util import split_seed
from captiongan.embeddings.backend import sentence_text
from captiongan.generator.generator import build_generator
from captiongan.training.optim import build_optimizer, apply_gradients, check_finite
from captiongan.training.state import TrainState, CheckpointBundle
from captiongan.training.state import numpy_rng, torch_rng, capture_rng, clone_state

log = structlog.get_logger(__name__)

INIT_TAG = "init"
PSEUDO_TAG = "pseudo"


def backend_vocabulary(backend):
    return getattr(backend, "vocabulary", None)


def supervised_training(generator, embeddings, texts, config, steps, seed, tag):
    """Cross-entropy training of the generator on (embedding, caption)
    pairs. Used both for corpus reconstruction, where each sentence is
    conditioned on its own text embedding, and for pseudo-labelled image
    pairs."""
    train = config.training
    gen_cfg = config.generator
    if len(embeddings) != len(texts):
        raise InputError("Embeddings and texts must align")
    if not len(texts):
        raise InputError("No training pairs")
    matrix = np.stack([e.values for e in embeddings])
    seeds = split_seed(seed, f"{tag}:data", f"{tag}:noise")
    data_rng = numpy_rng(seeds[f"{tag}:data"])
    noise_rng = torch_rng(seeds[f"{tag}:noise"])
    optimizer, schedule = build_optimizer(
        generator, train.init_lr, train.init_warmup, train
    )
    batch_size = min(train.init_batch_size, len(texts))
    generator.train()
    window = []
    for step in range(steps):
        idx = data_rng.choice(len(texts), size=batch_size, replace=False)
        loss = generator.reconstruction_loss(
            matrix[idx],
            [texts[i] for i in idx],
            gen_cfg.max_len,
            noise=gen_cfg.init_noise,
            generator=noise_rng,
        )
        check_finite(loss.detach(), "reconstruction loss", step)
        loss.backward()
        apply_gradients(generator, optimizer, schedule, train.grad_clip, step)
        window.append(float(loss.detach()))
        window = window[-max(train.log_every, 1) :]
        if train.log_every and (step + 1) % train.log_every == 0:
            log.info(
                "Supervised training",
                stage=tag,
                step=step + 1,
                loss=sum(window) / len(window),
            )
    generator.eval()
    state = TrainState(init_step=steps)
    state.rng = capture_rng({"data": data_rng}, {"noise": noise_rng})
    if len(window):
        state.stats["loss"] = math.fsum(window) / len(window)
    return CheckpointBundle(
        tag=tag,
        generator=clone_state(generator.state_dict()),
        state=state,
        config=config.to_dict(),
        optimizers=clone_state(
            {"init": optimizer.state_dict(), "init_schedule": schedule.state_dict()}
        ),
    )


def corpus_loss(generator, corpus, backend, max_len=None):
    """Mean reconstruction loss over a corpus, in nats per token."""
    losses = [generator.init_reconstruction_loss(s, backend, max_len) for s in corpus]
    return math.fsum(losses) / len(losses)


def run_initialization(corpus, backend, config, generator=None, steps=None):
    """Train the generator to reconstruct corpus sentences from their own
    text embeddings. Returns a checkpoint tagged ``init``."""
    corpus = list(corpus)
    if not len(corpus):
        raise InputError("Corpus is empty")
    if generator is None:
        generator = build_generator(
            config.generator,
            backend.d1,
            seed=split_seed(config.seed, "generator")["generator"],
            vocabulary=backend_vocabulary(backend),
        )
    steps = config.training.init_steps if steps is None else steps
    texts = [sentence_text(s) for s in corpus]
    embeddings = backend.encode_texts(corpus, workers=config.embeddings.workers)
    log.info("Initialization", sentences=len(corpus), steps=steps)
    return supervised_training(
        generator, embeddings, texts, config, steps, config.seed, INIT_TAG
    )


def run_pseudo_training(pairs, images, backend, config, generator=None, steps=None):
    """Supervised training on (image id, caption) pseudo labels, each
    caption conditioned on its image embedding."""
    pairs = list(pairs)
    if not len(pairs):
        raise InputError("No pseudo-label pairs")
    by_id = {image.id: image for image in images}
    missing = [image_id for image_id, _ in pairs if image_id not in by_id]
    if len(missing):
        raise InputError("Pseudo labels name unknown images", image_id=missing[0])
    if generator is None:
        generator = build_generator(
            config.generator,
            backend.d1,
            seed=split_seed(config.seed, "generator")["generator"],
            vocabulary=backend_vocabulary(backend),
        )
    steps = config.training.init_steps if steps is None else steps
    embeddings = backend.encode_images(
        [by_id[i] for i, _ in pairs], workers=config.embeddings.workers
    )
    texts = [caption for _, caption in pairs]
    log.info("Pseudo-label training", pairs=len(pairs), steps=steps)
    return supervised_training(
        generator, embeddings, texts, config, steps, config.seed, PSEUDO_TAG
    )
