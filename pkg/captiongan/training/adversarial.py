import math
import torch
import structlog
import numpy as np
from pathlib import Path

from captiongan.exc import InputError, StateError
from captiongan.util import split_seed
from captiongan.core.export import write_object
from captiongan.discriminator import discriminator_loss
from captiongan.rewards.semantic import RewardScorer, ramp_weight
from captiongan.training.optim import build_optimizer, apply_gradients
from captiongan.training.optim import skip_update, check_finite
from captiongan.training.state import TrainState, CheckpointBundle
from captiongan.training.state import numpy_rng, torch_rng, clone_state
from captiongan.training.state import capture_rng, restore_rng

log = structlog.get_logger(__name__)

ADVERSARIAL_TAG = "adversarial"


def policy_gradient_loss(log_probs, advantages):
    """Self-critical policy loss: the negated mean over samples of the
    advantage times the sequence log-probability. Advantages carry no
    gradient."""
    advantages = torch.as_tensor(advantages, dtype=log_probs.dtype)
    advantages = advantages.to(log_probs.device).detach()
    if advantages.shape != log_probs.shape:
        raise InputError("One advantage per sequence is required")
    return -(advantages * log_probs).mean()


def caption_text(sample, eos_token):
    """Text of a decoded caption. A caption that decodes to nothing is
    scored as the bare EOS string."""
    text = sample.text.strip()
    return text if len(text) else eos_token


class Trainer(object):
    """Alternating adversarial training: discriminator updates on real
    corpus sentences against generated captions, then a self-critical
    generator update on the combined naturalness and semantic reward.

    ``images`` is a list of (image id, EmbeddingVector) pairs, ``sentences``
    the corpus texts the discriminator treats as real."""

    def __init__(
        self,
        config,
        generator,
        discriminator,
        backend,
        images,
        sentences,
        aggregates=None,
        log_path=None,
    ):
        if not len(images):
            raise InputError("No training images")
        if not len(sentences):
            raise InputError("No corpus sentences")
        self.config = config
        self.train_cfg = config.training
        self.reward_cfg = config.rewards
        self.decode_cfg = config.generator.decode
        self.generator = generator
        self.discriminator = discriminator
        self.images = list(images)
        self.sentences = list(sentences)
        self.scorer = RewardScorer(
            backend,
            config.rewards,
            aggregates=aggregates,
            workers=self.train_cfg.workers,
        )
        self.log_path = Path(log_path) if log_path is not None else None
        self.state = TrainState()

        seeds = split_seed(config.seed, "adv:data", "adv:sampling")
        self.data_rng = numpy_rng(seeds["adv:data"])
        self.sample_rng = torch_rng(seeds["adv:sampling"])

        t = self.train_cfg
        self.gen_opt, self.gen_schedule = build_optimizer(
            generator, t.gen_lr, t.gen_warmup, t
        )
        self.disc_opt, self.disc_schedule = None, None
        if self.use_discriminator:
            self.disc_opt, self.disc_schedule = build_optimizer(
                discriminator, t.disc_lr, t.disc_warmup, t
            )

    @property
    def use_discriminator(self):
        return self.discriminator is not None and self.reward_cfg.use_naturalness

    def _rng_streams(self):
        return {"data": self.data_rng}, {"sampling": self.sample_rng}

    def draw(self, items, size):
        size = min(size, len(items))
        idx = self.data_rng.choice(len(items), size=size, replace=False)
        return [items[i] for i in sorted(idx)]

    def _prompts(self, images):
        return self.generator.prompts([vector for _, vector in images])

    def naturalness(self, texts):
        if not self.use_discriminator:
            return [0.0 for _ in texts]
        self.discriminator.eval()
        with torch.no_grad():
            scores = self.discriminator(texts)
        return [float(s) for s in scores.double()]

    def discriminator_update(self, images, sentences):
        """One discriminator step on real corpus sentences against one
        sampled caption per image. Generated captions are plain text, so
        no gradient reaches the generator."""
        if not self.use_discriminator:
            return None
        if not len(images) or not len(sentences):
            raise InputError("Discriminator update needs images and sentences")
        eos = self.decode_cfg.eos_token
        with torch.no_grad():
            prompts = self._prompts(images)
            fakes = self.generator.decode_batch(
                prompts, self.decode_cfg, sample=True, generator=self.sample_rng
            )
        fake_texts = [caption_text(s, eos) for s in fakes]
        self.discriminator.train()
        real = self.discriminator(sentences)
        fake = self.discriminator(fake_texts)
        loss = discriminator_loss(real, fake)
        check_finite(loss.detach(), "discriminator loss", self.state.step)
        self.disc_opt.zero_grad(set_to_none=True)
        loss.backward()
        apply_gradients(
            self.discriminator,
            self.disc_opt,
            self.disc_schedule,
            self.train_cfg.grad_clip,
            self.state.step,
            what="discriminator gradient",
        )
        self.discriminator.eval()
        return float(loss.detach())

    def scst_generator_update(self, images):
        """Self-critical update: for every image, n sampled captions are
        rewarded relative to the greedy caption's reward. Returns the mean
        advantage and the mean sample reward."""
        if not len(images):
            raise InputError("Generator update needs images")
        n = self.config.generator.sample_n
        eos = self.decode_cfg.eos_token
        step = self.state.step
        self.generator.eval()
        with torch.no_grad():
            prompts = self._prompts(images)
            greedy = self.generator.greedy_batch(prompts, self.decode_cfg)
            samples = self.generator.sample_batch(
                prompts, self.decode_cfg, n, generator=self.sample_rng
            )

        texts, owners = [], []
        for i, caption in enumerate(greedy):
            texts.append(caption_text(caption, eos))
            owners.append(images[i])
        for i, group in enumerate(samples):
            for sample in group:
                texts.append(caption_text(sample, eos))
                owners.append(images[i])
        rewards = self.scorer.score(owners, texts, self.naturalness(texts), step)
        totals = np.array([r.total for r in rewards], dtype=np.float64)
        baseline = totals[: len(images)]
        sampled = totals[len(images) :].reshape(len(images), n)
        advantages = (sampled - baseline[:, None]).reshape(-1)
        mean_reward = float(sampled.mean())
        mean_advantage = float(advantages.mean())

        if not np.any(advantages != 0.0):
            skip_update(self.gen_opt, self.gen_schedule)
            return mean_advantage, mean_reward

        live = self._prompts(images).repeat_interleave(n, dim=0)
        token_ids = [s.token_ids for group in samples for s in group]
        log_probs = self.generator.sequence_log_probs(
            live, token_ids, temperature=self.decode_cfg.temperature
        )
        loss = policy_gradient_loss(log_probs, advantages)
        check_finite(loss.detach(), "policy loss", step)
        self.gen_opt.zero_grad(set_to_none=True)
        loss.backward()
        apply_gradients(
            self.generator,
            self.gen_opt,
            self.gen_schedule,
            self.train_cfg.grad_clip,
            step,
            what="generator gradient",
        )
        return mean_advantage, mean_reward

    def adversarial_step(self, images=None, sentences=None):
        """One training step: ``d_steps_per_g`` discriminator updates, then
        one generator update at the current step's reward schedule."""
        t = self.train_cfg
        if images is None:
            images = self.draw(self.images, t.batch_size)
        if sentences is None:
            sentences = self.draw(self.sentences, t.batch_size)
        d_losses = []
        for _ in range(t.d_steps_per_g):
            d_loss = self.discriminator_update(images, sentences)
            if d_loss is not None:
                d_losses.append(d_loss)
        mean_advantage, mean_reward = self.scst_generator_update(images)
        row = {
            "step": self.state.step,
            "d_loss": math.fsum(d_losses) / len(d_losses) if len(d_losses) else None,
            "mean_advantage": mean_advantage,
            "lambda": ramp_weight(self.state.step, self.reward_cfg),
            "mean_reward": mean_reward,
        }
        self.state.advance()
        self._update_stats(row)
        return row

    def pretrain_discriminator(self, steps):
        for _ in range(steps):
            images = self.draw(self.images, self.train_cfg.batch_size)
            sentences = self.draw(self.sentences, self.train_cfg.batch_size)
            self.discriminator_update(images, sentences)

    def _update_stats(self, row):
        stats = self.state.stats
        count = stats.get("count", 0) + 1
        stats["count"] = count
        stats["mean_reward"] = stats.get("mean_reward", 0.0) + (
            row["mean_reward"] - stats.get("mean_reward", 0.0)
        ) / count
        stats["last_reward"] = row["mean_reward"]

    def _write_row(self, row):
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            write_object(fh, row)

    def train(self, steps=None):
        """Run ``steps`` adversarial steps (default: the configured total
        minus the steps already taken). Discriminator pre-steps happen only
        when starting from step 0."""
        t = self.train_cfg
        if steps is None:
            steps = max(0, t.steps - self.state.step)
        if self.state.step == 0 and t.d_pretrain_steps and self.use_discriminator:
            log.info("Discriminator pre-training", steps=t.d_pretrain_steps)
            self.pretrain_discriminator(t.d_pretrain_steps)
        rows = []
        for _ in range(steps):
            row = self.adversarial_step()
            self._write_row(row)
            rows.append(row)
            if t.log_every and self.state.step % t.log_every == 0:
                log.info(
                    "Adversarial training",
                    step=self.state.step,
                    d_loss=row["d_loss"],
                    reward=row["mean_reward"],
                    advantage=row["mean_advantage"],
                )
        return rows

    def checkpoint(self, tag=ADVERSARIAL_TAG):
        numpy_rngs, torch_gens = self._rng_streams()
        self.state.rng = capture_rng(numpy_rngs, torch_gens)
        optimizers = {
            "generator": self.gen_opt.state_dict(),
            "generator_schedule": self.gen_schedule.state_dict(),
        }
        disc_state = None
        if self.discriminator is not None:
            disc_state = self.discriminator.state_dict()
        if self.disc_opt is not None:
            optimizers["discriminator"] = self.disc_opt.state_dict()
            optimizers["discriminator_schedule"] = self.disc_schedule.state_dict()
        return CheckpointBundle(
            tag=tag,
            generator=clone_state(self.generator.state_dict()),
            discriminator=clone_state(disc_state),
            state=TrainState.from_dict(clone_state(self.state.to_dict())),
            config=self.config.to_dict(),
            optimizers=clone_state(optimizers),
        )

    def restore(self, bundle):
        """Resume from an adversarial checkpoint, or start from an
        initialization checkpoint (generator weights only)."""
        self.generator.load_state_dict(bundle.generator)
        if bundle.tag != ADVERSARIAL_TAG:
            log.info("Starting from checkpoint", tag=bundle.tag)
            return
        if self.discriminator is not None:
            if bundle.discriminator is None:
                raise StateError("Checkpoint has no discriminator weights")
            self.discriminator.load_state_dict(bundle.discriminator)
        opts = bundle.optimizers
        self.gen_opt.load_state_dict(opts["generator"])
        self.gen_schedule.load_state_dict(opts["generator_schedule"])
        if self.disc_opt is not None:
            self.disc_opt.load_state_dict(opts["discriminator"])
            self.disc_schedule.load_state_dict(opts["discriminator_schedule"])
        self.state = TrainState.from_dict(clone_state(bundle.state.to_dict()))
        numpy_rngs, torch_gens = self._rng_streams()
        restore_rng(self.state.rng, numpy_rngs, torch_gens)
        log.info("Resumed training", step=self.state.step)
