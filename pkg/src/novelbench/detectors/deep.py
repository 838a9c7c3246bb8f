"""Autoencoder, VAE, GAN and feature-matching GAN detectors."""

from __future__ import annotations

import math

import numpy as np

from ..nn import (
    Mlp,
    TrainingError,
    adam_init,
    adam_step,
    backward,
    bce_logit_losses,
    feature_matching_loss,
    forward,
    interp_architecture,
    kl_gauss,
    mlp_new,
    mse_recon_loss,
    sigmoid,
    PROB_CLAMP,
)
from .._util import stable_seed
from .base import TrainedDetector, mlp_arrays, mlp_meta, mlp_restore
from .config import DetectorConfig

# rows scored per chunk when Monte-Carlo draws multiply the batch
_SCORE_CHUNK = 4096


def hidden_sizes(config: DetectorConfig, dim: int) -> list[int]:
    if config.hidden is not None:
        return list(config.hidden)
    code = min(config.code_dim, dim)
    return interp_architecture(dim, code, config.n_hidden)


def minibatches(rng: np.random.Generator, n: int, batch: int, steps: int):
    """Yield ``steps`` index batches, reshuffling after each pass over the data."""
    batch = min(batch, n)
    perm = rng.permutation(n)
    pos = 0
    for _ in range(steps):
        if pos + batch > n:
            perm = rng.permutation(n)
            pos = 0
        yield perm[pos:pos + batch]
        pos += batch


def reparametrize(mu: np.ndarray, log_var: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Posterior draws ``mu + sigma * eps`` with ``sigma = exp(log_var / 2)``."""
    return mu + np.exp(0.5 * log_var) * eps


def _finite(*values):
    if not all(np.isfinite(v) for v in values):
        raise TrainingError("loss became non-finite")


class AutoencoderDetector(TrainedDetector):
    """Squared reconstruction error through an encoder/decoder pair."""

    algorithms = ("ae",)

    def __init__(self, config: DetectorConfig, dim: int, encoder: Mlp, decoder: Mlp):
        super().__init__(config, dim)
        self.encoder = encoder
        self.decoder = decoder
        self.loss_trace: list[float] = []

    @classmethod
    def build(cls, config: DetectorConfig, dim: int) -> "AutoencoderDetector":
        hidden = hidden_sizes(config, dim)
        enc = mlp_new([dim, *hidden, config.code_dim], seed=stable_seed(config.seed, "enc"))
        dec = mlp_new([config.code_dim, *hidden[::-1], dim], seed=stable_seed(config.seed, "dec"))
        return cls(config, dim, enc, dec)

    def loss_and_grads(self, enc: Mlp, dec: Mlp, xb: np.ndarray):
        acts_e, z = forward(enc, xb)
        acts_d, xh = forward(dec, z)
        loss, g_out = mse_recon_loss(xb, xh)
        g_dec = backward(dec, acts_d, g_out)
        g_enc = backward(enc, acts_e, g_dec.input)
        return loss, g_enc, g_dec

    def train(self, data: np.ndarray) -> "AutoencoderDetector":
        rng = np.random.default_rng(stable_seed(self.config.seed, "batches"))
        s_enc = adam_init(self.encoder, lr=self.config.lr_)
        s_dec = adam_init(self.decoder, lr=self.config.lr_)
        enc, dec = self.encoder, self.decoder
        for step, idx in enumerate(minibatches(rng, len(data), self.config.batch_size_,
                                               self.config.steps_)):
            loss, g_enc, g_dec = self.loss_and_grads(enc, dec, data[idx])
            _finite(loss)
            dec, s_dec = adam_step(dec, g_dec, s_dec)
            enc, s_enc = adam_step(enc, g_enc, s_enc)
            if step % 100 == 0:
                self.loss_trace.append(loss)
        self.encoder, self.decoder = enc, dec
        return self

    def reconstruct(self, x) -> np.ndarray:
        return self.decoder(self.encoder(self._check(x)))

    def score(self, x) -> np.ndarray:
        x = self._check(x)
        diff = x - self.reconstruct(x)
        return np.sum(diff * diff, axis=1)

    def _arrays(self):
        return {**mlp_arrays("enc", self.encoder), **mlp_arrays("dec", self.decoder)}

    def _meta(self):
        return {"enc": mlp_meta(self.encoder), "dec": mlp_meta(self.decoder)}

    @classmethod
    def _restore(cls, config, dim, arrays, meta):
        return cls(config, dim, mlp_restore("enc", arrays, meta["enc"]),
                   mlp_restore("dec", arrays, meta["dec"]))


class VaeDetector(AutoencoderDetector):
    """Variational autoencoder.

    The encoder emits ``[mu, log_var]`` for a diagonal Gaussian posterior;
    the decoder emits the reconstruction mean with unit observation noise,
    so ``kl_weight`` plays the role of the data variance in the loss.
    The default score is the Monte-Carlo mean squared reconstruction error
    over ``n_z`` posterior draws; ``vae_score="code_nll"`` instead scores by
    the negative prior log-density of the posterior mean.
    """

    algorithms = ("vae",)

    @classmethod
    def build(cls, config: DetectorConfig, dim: int) -> "VaeDetector":
        hidden = hidden_sizes(config, dim)
        c = config.code_dim
        enc = mlp_new([dim, *hidden, 2 * c], seed=stable_seed(config.seed, "enc"))
        dec = mlp_new([c, *hidden[::-1], dim], seed=stable_seed(config.seed, "dec"))
        return cls(config, dim, enc, dec)

    @property
    def code_dim(self) -> int:
        return self.decoder.in_dim

    def posterior(self, x) -> tuple[np.ndarray, np.ndarray]:
        out = self.encoder(self._check(x))
        c = self.code_dim
        return out[:, :c], out[:, c:]

    def loss_and_grads(self, enc: Mlp, dec: Mlp, xb: np.ndarray, eps: np.ndarray):
        """Minibatch loss and parameter gradients for fixed noise ``eps``."""
        lam = self.config.kl_weight
        c = self.code_dim
        acts_e, out = forward(enc, xb)
        mu, log_var = out[:, :c], out[:, c:]
        sd = np.exp(0.5 * log_var)
        z = reparametrize(mu, log_var, eps)
        acts_d, xh = forward(dec, z)
        rec, g_xh = mse_recon_loss(xb, xh)
        kl, g_mu_kl, g_lv_kl = kl_gauss(mu, log_var)
        g_dec = backward(dec, acts_d, g_xh)
        g_z = g_dec.input
        g_mu = g_z + lam * g_mu_kl
        g_lv = g_z * eps * 0.5 * sd + lam * g_lv_kl
        g_enc = backward(enc, acts_e, np.hstack([g_mu, g_lv]))
        return rec + lam * kl, kl, g_enc, g_dec

    def train(self, data: np.ndarray) -> "VaeDetector":
        rng = np.random.default_rng(stable_seed(self.config.seed, "batches"))
        s_enc = adam_init(self.encoder, lr=self.config.lr_)
        s_dec = adam_init(self.decoder, lr=self.config.lr_)
        enc, dec = self.encoder, self.decoder
        c = self.code_dim
        for step, idx in enumerate(minibatches(rng, len(data), self.config.batch_size_,
                                               self.config.steps_)):
            xb = data[idx]
            eps = rng.standard_normal((len(idx), c))
            loss, kl, g_enc, g_dec = self.loss_and_grads(enc, dec, xb, eps)
            _finite(loss)
            dec, s_dec = adam_step(dec, g_dec, s_dec)
            enc, s_enc = adam_step(enc, g_enc, s_enc)
            if step % 100 == 0:
                self.loss_trace.append(loss)
        self.encoder, self.decoder = enc, dec
        return self

    def mean_kl(self, x) -> float:
        mu, log_var = self.posterior(x)
        return kl_gauss(mu, log_var)[0]

    def reconstruct(self, x) -> np.ndarray:
        return self.decoder(self.posterior(x)[0])

    def score_draws(self, x, n_z: int | None = None) -> np.ndarray:
        """Per-draw squared reconstruction errors, shape ``(n, n_z)``.

        The same ``n_z`` standard-normal vectors (fixed by the score seed)
        are reused for every sample, so a sample's score does not depend on
        what else is in the batch.
        """
        n_z = n_z or self.config.n_z_
        eps = np.random.default_rng(self.score_seed).standard_normal((n_z, self.code_dim))
        x = self._check(x)
        out = np.empty((len(x), n_z))
        rows = max(1, _SCORE_CHUNK // n_z)
        for s in range(0, len(x), rows):
            xc = x[s:s + rows]
            mu, log_var = self.posterior(xc)
            z = reparametrize(mu[:, None, :], log_var[:, None, :], eps[None, :, :])
            xh = self.decoder(z.reshape(-1, self.code_dim)).reshape(len(xc), n_z, -1)
            diff = xh - xc[:, None, :]
            out[s:s + rows] = np.sum(diff * diff, axis=2)
        return out

    def code_log_likelihood(self, x) -> np.ndarray:
        """Standard-normal log-density of the posterior mean code."""
        mu, _ = self.posterior(x)
        c = mu.shape[1]
        return -0.5 * np.sum(mu * mu, axis=1) - 0.5 * c * math.log(2 * math.pi)

    def score(self, x, n_z: int | None = None) -> np.ndarray:
        if self.config.vae_score == "code_nll":
            return -self.code_log_likelihood(x)
        return self.score_draws(x, n_z).mean(axis=1)


class AdversarialDetector(TrainedDetector):
    """GAN and feature-matching GAN share this class and its score.

    The discriminator network outputs a logit; ``d(x)`` is its sigmoid.
    Each training step makes one discriminator update followed by one
    generator update. For ``fmgan`` the generator loss is
    ``fm_alpha * L_g + mean ||h(x) - h(g(z))||`` with ``h`` the
    discriminator's penultimate activations.
    """

    algorithms = ("gan", "fmgan")

    def __init__(self, config: DetectorConfig, dim: int, generator: Mlp, discriminator: Mlp):
        super().__init__(config, dim)
        self.generator = generator
        self.discriminator = discriminator
        self.loss_trace: list[tuple[float, float]] = []

    @classmethod
    def build(cls, config: DetectorConfig, dim: int) -> "AdversarialDetector":
        hidden = hidden_sizes(config, dim)
        gen = mlp_new([config.code_dim, *hidden[::-1], dim], seed=stable_seed(config.seed, "gen"))
        disc = mlp_new([dim, *hidden, 1], seed=stable_seed(config.seed, "disc"))
        return cls(config, dim, gen, disc)

    @property
    def code_dim(self) -> int:
        return self.generator.in_dim

    @property
    def feature_layer(self) -> int:
        # index of the layer whose output is the penultimate activation
        return len(self.discriminator.layers) - 2

    def features(self, x) -> np.ndarray:
        acts, _ = forward(self.discriminator, self._check(x))
        return acts[-2]

    def discriminator_grads(self, disc: Mlp, gen: Mlp, xb: np.ndarray, z: np.ndarray):
        _, fake = forward(gen, z)
        acts_r, logit_r = forward(disc, xb)
        acts_f, logit_f = forward(disc, fake)
        losses = bce_logit_losses(logit_r, logit_f)
        grads = backward(disc, acts_r, losses.d_grad_real) + backward(disc, acts_f, losses.d_grad_fake)
        return losses.d_loss, grads

    def generator_grads(self, disc: Mlp, gen: Mlp, xb: np.ndarray, z: np.ndarray):
        acts_g, fake = forward(gen, z)
        acts_f, logit_f = forward(disc, fake)
        p_fake = np.clip(sigmoid(logit_f), PROB_CLAMP, 1 - PROB_CLAMP)
        g_loss = float(-np.mean(np.log(p_fake)))
        g_logit = (sigmoid(logit_f) - 1.0) / len(z)
        extra = None
        loss = g_loss
        if self.algorithm == "fmgan":
            alpha = self.config.fm_alpha
            acts_r, _ = forward(disc, xb)
            fm, g_h = feature_matching_loss(acts_r[-2], acts_f[-2])
            loss = alpha * g_loss + fm
            g_logit = alpha * g_logit
            extra = {self.feature_layer: g_h}
        g_disc = backward(disc, acts_f, g_logit, extra)
        return loss, backward(gen, acts_g, g_disc.input)

    def train(self, data: np.ndarray) -> "AdversarialDetector":
        rng = np.random.default_rng(stable_seed(self.config.seed, "batches"))
        s_gen = adam_init(self.generator, lr=self.config.lr_)
        s_disc = adam_init(self.discriminator, lr=self.config.lr_)
        gen, disc = self.generator, self.discriminator
        c = self.code_dim
        for step, idx in enumerate(minibatches(rng, len(data), self.config.batch_size_,
                                               self.config.steps_)):
            xb = data[idx]
            d_loss, g_d = self.discriminator_grads(disc, gen, xb,
                                                   rng.standard_normal((len(idx), c)))
            disc, s_disc = adam_step(disc, g_d, s_disc)
            g_loss, g_g = self.generator_grads(disc, gen, xb, rng.standard_normal((len(idx), c)))
            gen, s_gen = adam_step(gen, g_g, s_gen)
            _finite(d_loss, g_loss)
            if step % 100 == 0:
                self.loss_trace.append((d_loss, g_loss))
        self.generator, self.discriminator = gen, disc
        return self

    def discriminate(self, x) -> np.ndarray:
        """Clamped probability that each row is real data."""
        logit = self.discriminator(self._check(x))[:, 0]
        return np.clip(sigmoid(logit), PROB_CLAMP, 1 - PROB_CLAMP)

    def sample(self, n: int, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(self.score_seed if seed is None else seed)
        return self.generator(rng.standard_normal((n, self.code_dim)))

    def reconstruction_distance(self, x, n_z: int | None = None) -> np.ndarray:
        """Mean unsquared distance from each row to ``n_z`` generated samples."""
        x = self._check(x)
        fakes = self.sample(n_z or self.config.n_z_)
        out = np.empty(len(x))
        rows = max(1, _SCORE_CHUNK // len(fakes))
        for s in range(0, len(x), rows):
            diff = x[s:s + rows, None, :] - fakes[None, :, :]
            out[s:s + rows] = np.sqrt(np.sum(diff * diff, axis=2)).mean(axis=1)
        return out

    def score(self, x, score_weight: float | None = None, n_z: int | None = None) -> np.ndarray:
        lam = self.config.score_weight if score_weight is None else score_weight
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"score weight must lie in [0, 1], got {lam}")
        x = self._check(x)
        out = -(1.0 - lam) * np.log(self.discriminate(x))
        if lam > 0:
            out = out + lam * self.reconstruction_distance(x, n_z)
        return out

    def _arrays(self):
        return {**mlp_arrays("gen", self.generator), **mlp_arrays("disc", self.discriminator)}

    def _meta(self):
        return {"gen": mlp_meta(self.generator), "disc": mlp_meta(self.discriminator)}

    @classmethod
    def _restore(cls, config, dim, arrays, meta):
        return cls(config, dim, mlp_restore("gen", arrays, meta["gen"]),
                   mlp_restore("disc", arrays, meta["disc"]))
