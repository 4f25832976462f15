"""Consistency-regularized training of a linear embedder

The backbone is a single linear projection trained by plain SGD on the sum of
a softmax cross-entropy, a triplet loss and the sub-space consistency loss
aligning the centroid look-up table with the exact per-sub-space distances of
the batch. The codebook is learned before the first epoch and refreshed every
T epochs by k-means warm-started from the previous centroids.

"""

import dataclasses
import math

import numpy as np
import pandas
import progressbar
import scipy.special

from scrreid import distance, quantizer
from scrreid.exception import (
    ArgumentError, ConfigurationError, ContractError, ProtocolError,
    TrainingError, ValidationError)


@dataclasses.dataclass
class EmbedderParams:
    """Trainable parameters: D_in x D_out projection, Y x D_out classifier"""
    projection: np.ndarray
    classifier: np.ndarray

    def __post_init__(self):
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.classifier = np.asarray(self.classifier, dtype=np.float64)
        if self.projection.shape[1] != self.classifier.shape[1]:
            raise ConfigurationError(
                f'projection outputs {self.projection.shape[1]} dimensions, '
                f'classifier expects {self.classifier.shape[1]}')

    @property
    def in_dim(self):
        return self.projection.shape[0]

    @property
    def out_dim(self):
        return self.projection.shape[1]

    @property
    def num_classes(self):
        return self.classifier.shape[0]

    def embed(self, features):
        """Projects a FeatureSet (or an array) in the embedding space"""
        vectors = np.asarray(
            getattr(features, 'vectors', features), dtype=np.float64)
        if vectors.shape[1] != self.in_dim:
            raise ConfigurationError(
                f'vectors have dimension {vectors.shape[1]}, the embedder '
                f'expects {self.in_dim}')
        embedded = vectors @ self.projection
        if hasattr(features, 'with_vectors'):
            return features.with_vectors(embedded)
        return embedded


def save_params(params, path):
    with open(path, 'wb') as fp:
        np.savez(fp, projection=params.projection,
                 classifier=params.classifier)


def load_params(path):
    with np.load(path) as data:
        return EmbedderParams(data['projection'], data['classifier'])


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of the training loop"""
    epochs: int = 120
    batch_size: int = 64
    instances_per_identity: int = 4
    learning_rate: float = 3.5e-4
    lr_milestones: tuple = (40, 70)
    lr_factors: tuple = (0.1, 0.01)
    warmup_epochs: int = 10
    margin: float = 0.3
    alpha: float = 0.01
    refresh_period: int = 10
    num_subspaces: int = 4
    num_centroids: int = 256
    int_mode: bool = False
    embed_dim: int = None
    kmeans_iters: int = 25
    kmeans_tol: float = 1e-4
    rng_seed: int = 0

    def validate(self):
        for name in ('epochs', 'batch_size', 'instances_per_identity',
                     'refresh_period', 'num_subspaces', 'num_centroids',
                     'kmeans_iters'):
            value = getattr(self, name)
            if value < 1:
                raise ValidationError(f'{name} must be at least 1, it is {value}')

        if self.instances_per_identity < 2:
            raise ValidationError(
                'instances_per_identity must be at least 2 to sample '
                'positives')
        if self.batch_size < 2 * self.instances_per_identity:
            raise ValidationError(
                f'batch_size must hold two identities of '
                f'{self.instances_per_identity} instances, it is '
                f'{self.batch_size}')
        if self.learning_rate <= 0:
            raise ValidationError(
                f'learning_rate must be positive, it is {self.learning_rate}')
        if self.margin <= 0:
            raise ValidationError(f'margin must be positive, it is {self.margin}')
        if self.alpha < 0:
            raise ValidationError(
                f'alpha must be non-negative, it is {self.alpha}')
        if self.warmup_epochs < 0:
            raise ValidationError(
                f'warmup_epochs must be non-negative, it is '
                f'{self.warmup_epochs}')
        if len(self.lr_milestones) != len(self.lr_factors):
            raise ValidationError(
                'lr_milestones and lr_factors must have the same length')
        if self.embed_dim is not None and self.embed_dim < 1:
            raise ValidationError(
                f'embed_dim must be positive, it is {self.embed_dim}')


@dataclasses.dataclass
class LossBreakdown:
    """Components of the loss, total = ce + triplet + alpha x consistency"""
    ce: float
    triplet: float
    consistency: float
    total: float

    @classmethod
    def combine(cls, ce, triplet, consistency, alpha):
        return cls(
            float(ce), float(triplet), float(consistency),
            float(ce + triplet + alpha * consistency))


def learning_rate(epoch, config):
    """Returns the learning rate of the 1-based `epoch`

    Linear warm-up from lr / 10 at epoch 1 to lr at the end of the warm-up,
    then the rate is multiplied by the factor of the last milestone passed.

    """
    rate = config.learning_rate
    for milestone, factor in zip(config.lr_milestones, config.lr_factors):
        if epoch > milestone:
            rate = config.learning_rate * factor

    if config.warmup_epochs > 1 and epoch <= config.warmup_epochs:
        ramp = 0.1 + 0.9 * (epoch - 1) / (config.warmup_epochs - 1)
        rate *= ramp
    return rate


def cross_entropy_loss(embeddings, labels, classifier):
    """Mean softmax negative log-likelihood of `labels`

    Returns
    -------
    loss : float
    grad_embeddings : numpy.ndarray
    grad_classifier : numpy.ndarray

    Raises
    ------
    ArgumentError
        On an empty batch or a label out of [0, Y).

    """
    labels = np.asarray(labels)
    size = embeddings.shape[0]
    if size == 0:
        raise ArgumentError('empty batch')
    if labels.min() < 0 or labels.max() >= classifier.shape[0]:
        raise ArgumentError(
            f'labels must be in [0, {classifier.shape[0]}), got '
            f'[{labels.min()}, {labels.max()}]')

    logits = embeddings @ classifier.T
    log_probs = logits - scipy.special.logsumexp(logits, axis=1, keepdims=True)
    loss = -log_probs[np.arange(size), labels].mean()

    delta = np.exp(log_probs)
    delta[np.arange(size), labels] -= 1
    delta /= size
    return loss, delta @ classifier, delta.T @ embeddings


def triplet_loss(anchor, positive, negative, margin):
    """Mean of max(0, margin + |a - p| - |a - n|) over the rows

    Single triplets are accepted as 1D vectors. The subgradient is 0 at the
    hinge corner and on coincident points.

    Returns
    -------
    loss : float
    grad_anchor, grad_positive, grad_negative : numpy.ndarray

    """
    anchor, positive, negative = (
        np.atleast_2d(np.asarray(v, dtype=np.float64))
        for v in (anchor, positive, negative))
    if anchor.shape[1] == 0:
        raise ArgumentError('triplet vectors must not be empty')
    if not anchor.shape == positive.shape == negative.shape:
        raise ArgumentError(
            f'triplet shapes differ: {anchor.shape}, {positive.shape}, '
            f'{negative.shape}')
    if margin <= 0:
        raise ArgumentError(f'margin must be positive, it is {margin}')

    to_pos = anchor - positive
    to_neg = anchor - negative
    d_pos = np.linalg.norm(to_pos, axis=1)
    d_neg = np.linalg.norm(to_neg, axis=1)
    hinge = margin + d_pos - d_neg
    active = (hinge > 0) / anchor.shape[0]

    with np.errstate(invalid='ignore', divide='ignore'):
        unit_pos = np.where(d_pos[:, None] > 0, to_pos / d_pos[:, None], 0)
        unit_neg = np.where(d_neg[:, None] > 0, to_neg / d_neg[:, None], 0)

    grad_pos = -active[:, None] * unit_pos
    grad_neg = active[:, None] * unit_neg
    loss = np.maximum(hinge, 0).mean()
    return loss, -grad_pos - grad_neg, grad_pos, grad_neg


def table_normalizer(lut):
    """Largest entry of `lut` in squared distance units, 1 on a null table"""
    peak = float(lut.entries().max())
    return peak if peak > 0 else 1.0


def consistency_loss(embeddings, codes, lut, num_subspaces, normalizer=1.0):
    """Mean squared gap between table distances and exact sub-space distances

    loss = 1/n^2 sum_{i,j} sum_m ((T[m][c_i^m][c_j^m] - V[m][i][j]) / s)^2,
    where V holds the exact squared sub-space distances of the batch, T the
    table entries (an IntLUT is descaled by 1 / scale) and s the
    `normalizer`. The table is a constant: the gradient only flows through V.

    Returns
    -------
    loss : float
    grad_embeddings : numpy.ndarray

    Raises
    ------
    ArgumentError
        If the batch has less than 2 rows or `normalizer` is not positive.
    ContractError
        If the codes do not match the batch or the table.

    """
    size = embeddings.shape[0]
    if size < 2:
        raise ArgumentError(f'batch must have at least 2 rows, it has {size}')
    if not normalizer > 0:
        raise ArgumentError(
            f'normalizer must be positive, it is {normalizer}')
    if len(codes) != size:
        raise ContractError(f'{len(codes)} codes for a batch of {size} rows')
    if not codes.num_subspaces == lut.num_subspaces == num_subspaces:
        raise ContractError(
            f'M mismatch: codes {codes.num_subspaces}, table '
            f'{lut.num_subspaces}, expected {num_subspaces}')

    exact = distance.euclidean_matrix(embeddings, embeddings, num_subspaces)
    table = lut.entries()
    loss = 0.0
    gradient = []
    for m, sub in enumerate(quantizer.split_subspaces(
            embeddings, num_subspaces)):
        column = codes.codes[:, m]
        residual = (table[m][np.ix_(column, column)] - exact[m]) / normalizer
        loss += (residual ** 2).sum()

        # d loss / d V = -2 R / (s n^2), d V_ij / d e_i = 2 (e_i - e_j)
        weights = -2 * (residual + residual.T) / (normalizer * size ** 2)
        gradient.append(2 * (weights.sum(axis=1)[:, None] * sub - weights @ sub))

    return loss / size ** 2, np.concatenate(gradient, axis=1)


@dataclasses.dataclass
class Batch:
    """Training rows with class labels and sampled triplet partners"""
    inputs: np.ndarray
    labels: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray


def total_loss(batch, params, codebook, lut, config):
    """Returns the LossBreakdown and the EmbedderParams gradients of a batch

    The consistency term is computed when `codebook` and `lut` are given, on
    the codes of the current embeddings, with residuals relative to the
    largest table entry.

    """
    embeddings = batch.inputs @ params.projection

    ce, grad_ce, grad_classifier = cross_entropy_loss(
        embeddings, batch.labels, params.classifier)

    triplet, grad_a, grad_p, grad_n = triplet_loss(
        embeddings, embeddings[batch.positives], embeddings[batch.negatives],
        config.margin)
    grad_triplet = grad_a.copy()
    np.add.at(grad_triplet, batch.positives, grad_p)
    np.add.at(grad_triplet, batch.negatives, grad_n)

    consistency, grad_consistency = 0.0, np.zeros_like(embeddings)
    if codebook is not None and lut is not None:
        codes = quantizer.encode(embeddings, codebook)
        consistency, grad_consistency = consistency_loss(
            embeddings, codes, lut, codebook.num_subspaces,
            normalizer=table_normalizer(lut))

    grad_embeddings = grad_ce + grad_triplet + config.alpha * grad_consistency
    return (
        LossBreakdown.combine(ce, triplet, consistency, config.alpha),
        EmbedderParams(batch.inputs.T @ grad_embeddings, grad_classifier))


def sample_batches(labels, config, rng):
    """Returns the row indices of the batches of one epoch

    Identities are shuffled and grouped by P = batch_size // K, each
    contributing K instances (drawn without replacement when it has enough).
    A trailing group of a single identity joins the previous one.

    """
    identities = rng.permutation(np.unique(labels))
    per_batch = config.batch_size // config.instances_per_identity
    groups = [identities[i:i + per_batch]
              for i in range(0, identities.size, per_batch)]
    if len(groups) > 1 and groups[-1].size == 1:
        groups[-2] = np.concatenate(groups[-2:])
        del groups[-1]

    batches = []
    for group in groups:
        rows = []
        for identity in group:
            candidates = np.flatnonzero(labels == identity)
            if candidates.size >= config.instances_per_identity:
                rows.append(rng.choice(
                    candidates, config.instances_per_identity, replace=False))
            else:
                extra = rng.choice(
                    candidates,
                    config.instances_per_identity - candidates.size)
                rows.append(np.concatenate([rng.permutation(candidates), extra]))
        batches.append(np.concatenate(rows))
    return batches


def sample_triplets(labels, rng):
    """Returns a random positive and negative batch position per anchor"""
    positions = np.arange(labels.size)
    positives = np.empty(labels.size, dtype=np.int64)
    negatives = np.empty(labels.size, dtype=np.int64)
    for i, label in enumerate(labels):
        same = (labels == label) & (positions != i)
        if not same.any():
            same = labels == label
        positives[i] = rng.choice(positions[same])
        negatives[i] = rng.choice(positions[labels != label])
    return positives, negatives


@dataclasses.dataclass
class TrainingLog:
    """Per-epoch losses and per-refresh quantization errors"""
    epochs: list = dataclasses.field(default_factory=list)
    refreshes: list = dataclasses.field(default_factory=list)

    COLUMNS = [
        'epoch', 'lr', 'ce', 'triplet', 'consistency', 'total', 'quant_error']

    def to_frame(self):
        return pandas.DataFrame(self.epochs, columns=self.COLUMNS)

    def refreshes_frame(self):
        return pandas.DataFrame(
            self.refreshes, columns=['epoch', 'error_before', 'error_after'])


def _build_tables(codebook, config):
    lut = distance.build_lut(codebook)
    return distance.quantize_lut(lut) if config.int_mode else lut


def init_params(in_dim, num_classes, config, rng):
    """Identity projection when dimensions agree, scaled Gaussian otherwise"""
    out_dim = config.embed_dim or in_dim
    if out_dim == in_dim:
        projection = np.eye(in_dim)
    else:
        projection = rng.normal(0, 1 / math.sqrt(in_dim), (in_dim, out_dim))
    classifier = rng.normal(0, 0.01, (num_classes, out_dim))
    return EmbedderParams(projection, classifier)


def run_training(features, config, verbose=False):
    """Trains the embedder and its codebook on `features`

    Returns
    -------
    params : EmbedderParams
    codebook : Codebook
        Refreshed on the final embeddings when the last epoch is a multiple
        of the refresh period.
    log : TrainingLog

    Raises
    ------
    ValidationError
        If `config` is not valid.
    ConfigurationError
        If the embedding dimension is not divisible by M.
    ProtocolError
        If some identities have a single instance.
    TrainingError
        If the parameters become non-finite.

    """
    config.validate()
    identities, labels, counts = np.unique(
        features.person_ids, return_inverse=True, return_counts=True)
    if (counts < 2).any():
        raise ProtocolError(
            'identities with a single instance cannot give triplets',
            identities[counts < 2].tolist())
    if identities.size < 2:
        raise ProtocolError('triplets need at least two identities')

    out_dim = config.embed_dim or features.dim
    if out_dim % config.num_subspaces:
        raise ConfigurationError(
            f'M={config.num_subspaces} does not divide the embedding '
            f'dimension {out_dim}')

    rng = np.random.default_rng(config.rng_seed)
    inputs = features.vectors.astype(np.float64)
    params = init_params(features.dim, identities.size, config, rng)
    seeds = iter(np.random.SeedSequence(config.rng_seed).generate_state(
        1 + config.epochs // config.refresh_period))

    codebook, report = quantizer.train_codebook(
        params.embed(inputs), config.num_subspaces, config.num_centroids,
        config.kmeans_iters, config.kmeans_tol, rng_seed=next(seeds))
    lut = _build_tables(codebook, config)

    log = TrainingLog()
    if verbose:
        bar = progressbar.ProgressBar(prefix='  > ', max_value=config.epochs)
        bar.start()

    for epoch in range(1, config.epochs + 1):
        rate = learning_rate(epoch, config)
        losses = []
        for rows in sample_batches(labels, config, rng):
            positives, negatives = sample_triplets(labels[rows], rng)
            batch = Batch(inputs[rows], labels[rows], positives, negatives)
            breakdown, gradient = total_loss(
                batch, params, codebook, lut, config)
            losses.append(breakdown)

            params = EmbedderParams(
                params.projection - rate * gradient.projection,
                params.classifier - rate * gradient.classifier)
            if not (np.all(np.isfinite(params.projection))
                    and np.all(np.isfinite(params.classifier))):
                raise TrainingError(
                    f'parameters became non-finite at epoch {epoch}, '
                    f'lower the learning rate or alpha')

        embedded = params.embed(inputs)
        if epoch % config.refresh_period == 0:
            codebook, report = quantizer.train_codebook(
                embedded, config.num_subspaces, codebook.num_centroids,
                config.kmeans_iters, config.kmeans_tol, warm_start=codebook,
                rng_seed=next(seeds))
            lut = _build_tables(codebook, config)
            quant_error = report.total_quantization_error
            log.refreshes.append(
                {'epoch': epoch, 'error_before': report.initial_error,
                 'error_after': quant_error})
        else:
            quant_error = quantizer.quantization_error(embedded, codebook)

        log.epochs.append({
            'epoch': epoch,
            'lr': rate,
            'ce': np.mean([b.ce for b in losses]),
            'triplet': np.mean([b.triplet for b in losses]),
            'consistency': np.mean([b.consistency for b in losses]),
            'total': np.mean([b.total for b in losses]),
            'quant_error': quant_error})

        if verbose:
            bar.update(epoch)

    if verbose:
        bar.finish()
    return params, codebook, log
