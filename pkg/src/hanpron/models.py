"""Pronunciation models: MLP over bag-of-radicals, LSTM over GeoD tokens, and
the multimodal LSTM + cognate-phoneme model with an auxiliary head.

Every model ends in an :class:`OutputHead` predicting Cantonese onset,
nucleus and coda. In sequential mode the coda is predicted first from the
trunk features, the nucleus from the features plus the coda distribution,
and the onset from the features plus both distributions.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .ids import RadicalInventory
from .metrics import EvalReport, score
from .nn import (
    LSTM,
    Adam,
    Dense,
    Dropout,
    Embedding,
    NonFiniteValue,
    Relu,
    load_checkpoint,
    save_checkpoint,
    softmax,
    softmax_backward,
    softmax_xent,
)
from .phonology import LexiconEntry, PhonemeVocab, SyllableParts, indicator_matrix

logger = logging.getLogger(__name__)

MODEL_KINDS = ("mlp", "lstm", "multimodal", "dt")
HEAD_MODES = ("sequential", "independent")


class ConfigError(ValueError):
    pass


class MissingFeature(ValueError):
    pass


class DivergedLoss(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    model: str = "mlp"
    head: str = "sequential"
    # MLP input: concatenate the cognate indicator to the BoR counts
    use_indicator: bool = False
    positional_indicator: bool = True
    hidden_sizes: tuple = (750, 500, 250)
    hidden_dropout: tuple = (0.5, 0.5, 0.2)
    l2: float = 1e-4
    embed_dim: int = 64
    lstm_size: int = 256
    lstm_layers: int = 2
    input_dropout: float = 0.2
    recurrent_dropout: float = 0.5
    aux_weight: float = 0.3
    dropout: bool = True
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 100
    patience: Optional[int] = 10
    stop_at_dev_ser: Optional[float] = None
    seed: int = 0
    # decision-tree baseline
    min_samples_leaf: int = 5
    max_depth: Optional[int] = None

    def __post_init__(self):
        self.hidden_sizes = tuple(self.hidden_sizes)
        self.hidden_dropout = tuple(self.hidden_dropout)
        self.validate()

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.head not in HEAD_MODES:
            raise ConfigError(f"head must be one of {HEAD_MODES}, got {self.head!r}")
        if len(self.hidden_sizes) != len(self.hidden_dropout):
            raise ConfigError("hidden_sizes and hidden_dropout must have equal length")
        rates = list(self.hidden_dropout) + [self.input_dropout, self.recurrent_dropout]
        if any(not 0 <= r < 1 for r in rates):
            raise ConfigError("dropout rates must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.lstm_layers < 1:
            raise ConfigError("batch_size, max_epochs and lstm_layers must be positive")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.lr <= 0 or self.l2 < 0 or self.aux_weight < 0:
            raise ConfigError("lr must be positive; l2 and aux_weight non-negative")

    @property
    def uses_indicator(self) -> bool:
        return self.model == "multimodal" or (self.model in ("mlp", "dt") and self.use_indicator)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_json(obj)


# --- building blocks ------------------------------------------------------


class OutputHead:
    """Onset/nucleus/coda classifiers on top of a feature vector."""

    def __init__(self, n_in: int, sizes: Sequence[int], mode: str, rng: np.random.Generator):
        k_on, k_nu, k_cd = sizes
        self.mode = mode
        if mode == "sequential":
            self.coda = Dense(n_in, k_cd, rng)
            self.nucleus = Dense(n_in + k_cd, k_nu, rng)
            self.onset = Dense(n_in + k_cd + k_nu, k_on, rng)
        elif mode == "independent":
            self.coda = Dense(n_in, k_cd, rng)
            self.nucleus = Dense(n_in, k_nu, rng)
            self.onset = Dense(n_in, k_on, rng)
        else:
            raise ConfigError(f"unknown head mode {mode!r}")
        self.sizes = (k_on, k_nu, k_cd)
        self._probs: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None
        self._logits: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    def layers(self) -> dict[str, Dense]:
        return {"onset": self.onset, "nucleus": self.nucleus, "coda": self.coda}

    def forward(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        zc = self.coda.forward(h)
        pc = softmax(zc)
        if self.mode == "sequential":
            zn = self.nucleus.forward(np.concatenate([h, pc], axis=1))
            pn = softmax(zn)
            zo = self.onset.forward(np.concatenate([h, pc, pn], axis=1))
        else:
            zn = self.nucleus.forward(h)
            pn = softmax(zn)
            zo = self.onset.forward(h)
        self._logits = (zo, zn, zc)
        self._probs = (softmax(zo), pn, pc)
        return self._probs

    def loss_backward(self, targets: np.ndarray, weight: float = 1.0) -> tuple[float, np.ndarray]:
        """Summed mean cross-entropy of the three positions for the last
        forward call; backpropagates ``weight`` times it and returns
        (loss, gradient w.r.t. the input features)."""
        _, pn, pc = self._probs
        zo, zn, zc = self._logits
        loss_o, dzo = softmax_xent(zo, targets[:, 0])
        loss_n, dzn = softmax_xent(zn, targets[:, 1])
        loss_c, dzc = softmax_xent(zc, targets[:, 2])
        dzo, dzn, dzc = weight * dzo, weight * dzn, weight * dzc
        if self.mode == "independent":
            dh = self.onset.backward(dzo) + self.nucleus.backward(dzn) + self.coda.backward(dzc)
            return loss_o + loss_n + loss_c, dh
        d = self.onset.n_in - self.sizes[2] - self.sizes[1]
        k_cd = self.sizes[2]
        d_in_o = self.onset.backward(dzo)
        dh = d_in_o[:, :d]
        dpc = d_in_o[:, d : d + k_cd]
        dpn = d_in_o[:, d + k_cd :]
        d_in_n = self.nucleus.backward(dzn + softmax_backward(pn, dpn))
        dh = dh + d_in_n[:, :d]
        dpc = dpc + d_in_n[:, d:]
        dh = dh + self.coda.backward(dzc + softmax_backward(pc, dpc))
        return loss_o + loss_n + loss_c, dh


class MlpTrunk:
    def __init__(self, n_in: int, sizes: Sequence[int], rates: Sequence[float], l2: float, rng):
        self.dense, self.act, self.drop = [], [], []
        for n_out, rate in zip(sizes, rates):
            self.dense.append(Dense(n_in, n_out, rng, l2=l2))
            self.act.append(Relu())
            self.drop.append(Dropout(rate))
            n_in = n_out
        self.n_out = n_in

    def forward(self, x: np.ndarray, train: bool, rng) -> np.ndarray:
        for dense, act, drop in zip(self.dense, self.act, self.drop):
            x = drop.forward(act.forward(dense.forward(x)), train, rng)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for dense, act, drop in reversed(list(zip(self.dense, self.act, self.drop))):
            dy = dense.backward(act.backward(drop.backward(dy)))
        return dy

    def penalty(self) -> float:
        return sum(d.penalty() for d in self.dense)


class LstmEncoder:
    def __init__(self, n_tokens: int, cfg: TrainConfig, rng):
        self.embedding = Embedding(n_tokens, cfg.embed_dim, rng)
        in_drop = cfg.input_dropout if cfg.dropout else 0.0
        rec_drop = cfg.recurrent_dropout if cfg.dropout else 0.0
        self.lstms = []
        n_in = cfg.embed_dim
        for _ in range(cfg.lstm_layers):
            self.lstms.append(LSTM(n_in, cfg.lstm_size, rng, in_drop, rec_drop))
            n_in = cfg.lstm_size
        self.n_out = n_in
        self._T = 0

    def forward(self, tokens: np.ndarray, train: bool, rng) -> np.ndarray:
        x = self.embedding.forward(tokens)
        for lstm in self.lstms:
            x = lstm.forward(x, train, rng)
        self._T = x.shape[0]
        return x[-1]

    def backward(self, dh_last: np.ndarray) -> None:
        dx = np.zeros((self._T,) + dh_last.shape)
        dx[-1] = dh_last
        for lstm in reversed(self.lstms):
            dx = lstm.backward(dx)
        self.embedding.backward(dx)


# --- encoded data -----------------------------------------------------------


@dataclass
class Batch:
    index: np.ndarray
    bor: Optional[np.ndarray] = None
    tokens: Optional[np.ndarray] = None
    indicator: Optional[np.ndarray] = None
    targets: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.index)


@dataclass
class EncodedSet:
    """Model-ready features for a list of entries, computed once."""

    n: int
    bor: Optional[np.ndarray] = None
    tokens: Optional[list[np.ndarray]] = None
    indicator: Optional[np.ndarray] = None
    targets: Optional[np.ndarray] = None
    references: list[SyllableParts] = field(default_factory=list)

    def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> list[Batch]:
        """Fixed-size batches; sequence inputs are grouped by exact length so
        no padding enters the recurrence. With ``rng`` both membership and
        batch order are shuffled."""
        order = rng.permutation(self.n) if rng is not None else np.arange(self.n)
        if self.tokens is None:
            groups = [order]
        else:
            by_len: dict[int, list[int]] = {}
            for i in order:
                by_len.setdefault(len(self.tokens[i]), []).append(int(i))
            groups = [np.array(by_len[k]) for k in sorted(by_len)]
        chunks = [g[s : s + batch_size] for g in groups for s in range(0, len(g), batch_size)]
        if rng is not None:
            chunks = [chunks[i] for i in rng.permutation(len(chunks))]
        return [self.take(c) for c in chunks]

    def take(self, idx: np.ndarray) -> Batch:
        return Batch(
            index=idx,
            bor=None if self.bor is None else self.bor[idx],
            tokens=None if self.tokens is None else np.stack([self.tokens[i] for i in idx], axis=1),
            indicator=None if self.indicator is None else self.indicator[idx],
            targets=None if self.targets is None else self.targets[idx],
        )

    def subset(self, idx: Sequence[int]) -> "EncodedSet":
        idx = np.asarray(idx)
        return EncodedSet(
            n=len(idx),
            bor=None if self.bor is None else self.bor[idx],
            tokens=None if self.tokens is None else [self.tokens[i] for i in idx],
            indicator=None if self.indicator is None else self.indicator[idx],
            targets=None if self.targets is None else self.targets[idx],
            references=[self.references[i] for i in idx] if self.references else [],
        )


# --- models -------------------------------------------------------------------


class PronunciationModel:
    """One of the three neural architectures, selected by ``config.model``."""

    def __init__(self, config: TrainConfig, inventory: RadicalInventory, vocab: PhonemeVocab):
        if config.model not in ("mlp", "lstm", "multimodal"):
            raise ConfigError(f"{config.model!r} is not a neural model")
        self.config = config
        self.inventory = inventory
        self.vocab = vocab
        self.kind = config.model
        rng = np.random.default_rng(config.seed)
        sizes = vocab.target_sizes()
        self.n_indicator = len(vocab.indicator_layout(config.positional_indicator)) if config.uses_indicator else 0
        rates = config.hidden_dropout if config.dropout else (0.0,) * len(config.hidden_dropout)
        self.encoder: Optional[LstmEncoder] = None
        self.trunk: Optional[MlpTrunk] = None
        self.aux: Optional[OutputHead] = None
        if self.kind == "mlp":
            self.trunk = MlpTrunk(len(inventory) + 1 + self.n_indicator, config.hidden_sizes, rates, config.l2, rng)
            self.head = OutputHead(self.trunk.n_out, sizes, config.head, rng)
        elif self.kind == "lstm":
            self.encoder = LstmEncoder(inventory.n_tokens, config, rng)
            self.head = OutputHead(self.encoder.n_out, sizes, config.head, rng)
        else:
            self.encoder = LstmEncoder(inventory.n_tokens, config, rng)
            self.trunk = MlpTrunk(self.encoder.n_out + self.n_indicator, config.hidden_sizes, rates, config.l2, rng)
            self.head = OutputHead(self.trunk.n_out, sizes, config.head, rng)
            self.aux = OutputHead(self.encoder.n_out, sizes, config.head, rng)

    # parameters ------------------------------------------------------------

    def _layers(self) -> dict:
        out = {}
        if self.encoder is not None:
            out["emb"] = self.encoder.embedding
            for i, lstm in enumerate(self.encoder.lstms):
                out[f"lstm{i}"] = lstm
        if self.trunk is not None:
            for i, d in enumerate(self.trunk.dense):
                out[f"fc{i}"] = d
        for pos, d in self.head.layers().items():
            out[f"head.{pos}"] = d
        if self.aux is not None:
            for pos, d in self.aux.layers().items():
                out[f"aux.{pos}"] = d
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": p for ln, layer in self._layers().items() for pn, p in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": g for ln, layer in self._layers().items() for pn, g in layer.grads.items()}

    def zero_grad(self) -> None:
        for layer in self._layers().values():
            layer.zero_grad()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def penalty(self) -> float:
        return self.trunk.penalty() if self.trunk is not None else 0.0

    # data ------------------------------------------------------------------

    def encode(self, entries: Sequence[LexiconEntry], with_targets: bool = True) -> EncodedSet:
        enc = EncodedSet(n=len(entries), references=[e.target for e in entries])
        if self.kind == "mlp":
            if any(e.bor is None for e in entries):
                raise MissingFeature("MLP input needs bag-of-radicals counts on every entry")
            enc.bor = np.stack([e.bor.as_array() for e in entries]) if entries else np.zeros((0, len(self.inventory) + 1))
            if enc.bor.shape[1] != len(self.inventory) + 1:
                raise MissingFeature("BoR vectors do not match the model's radical inventory")
        else:
            if any(not e.geod for e in entries):
                raise MissingFeature("LSTM input needs a GeoD sequence on every entry")
            enc.tokens = [self.inventory.token_ids(e.geod) for e in entries]
        if self.n_indicator:
            enc.indicator = indicator_matrix(entries, self.vocab, self.config.positional_indicator)
        if with_targets:
            enc.targets = np.array([self.vocab.encode_target(e.target) for e in entries], dtype=np.int64).reshape(-1, 3)
        return enc

    # computation -----------------------------------------------------------

    def _features(self, batch: Batch, train: bool, rng) -> np.ndarray:
        if self.kind == "mlp":
            x = batch.bor if not self.n_indicator else np.concatenate([batch.bor, batch.indicator], axis=1)
            return self.trunk.forward(x, train, rng)
        h_last = self.encoder.forward(batch.tokens, train, rng)
        self._h_last = h_last
        if self.kind == "lstm":
            return h_last
        return self.trunk.forward(np.concatenate([h_last, batch.indicator], axis=1), train, rng)

    def forward(self, batch: Batch, train: bool = False, rng=None) -> dict:
        """Position distributions ``(onset, nucleus, coda)``; multimodal
        models also return the auxiliary triple under ``"aux"``."""
        out = {"main": self.head.forward(self._features(batch, train, rng))}
        if self.aux is not None:
            out["aux"] = self.aux.forward(self._h_last)
        return out

    def loss_and_backward(self, batch: Batch, train: bool = False, rng=None) -> dict[str, float]:
        """Forward, loss and gradient accumulation for one batch. Returns the
        loss components; gradients land in :meth:`gradients`."""
        self.forward(batch, train, rng)
        main, dfeat = self.head.loss_backward(batch.targets)
        parts = {"main": main}
        if self.kind == "mlp":
            self.trunk.backward(dfeat)
        elif self.kind == "lstm":
            self.encoder.backward(dfeat)
        else:
            dx = self.trunk.backward(dfeat)
            dh = dx[:, : self.encoder.n_out]
            aux, dh_aux = self.aux.loss_backward(batch.targets, self.config.aux_weight)
            parts["aux"] = aux
            self.encoder.backward(dh + dh_aux)
        parts["penalty"] = self.penalty()
        parts["total"] = main + self.config.aux_weight * parts.get("aux", 0.0) + parts["penalty"]
        return parts

    def predict_proba(self, data: Union[EncodedSet, Sequence[LexiconEntry]], batch_size: int = 256):
        enc = data if isinstance(data, EncodedSet) else self.encode(data, with_targets=False)
        sizes = self.vocab.target_sizes()
        probs = [np.zeros((enc.n, k)) for k in sizes]
        for batch in enc.batches(batch_size):
            for k, p in enumerate(self.forward(batch)["main"]):
                probs[k][batch.index] = p
        return tuple(probs)

    def predict_indices(self, data, batch_size: int = 256) -> np.ndarray:
        """Argmax per position; ``np.argmax`` resolves ties to the lowest index."""
        return np.stack([p.argmax(axis=1) for p in self.predict_proba(data, batch_size)], axis=1)

    def predict(self, data, batch_size: int = 256) -> list[SyllableParts]:
        return [self.vocab.decode_target(row) for row in self.predict_indices(data, batch_size)]

    # persistence -----------------------------------------------------------

    def save(self, path: Union[str, Path], extra: Optional[dict] = None) -> None:
        meta = {
            "format": "hanpron-model",
            "architecture": self.kind,
            "config": self.config.to_json(),
            "inventory": list(self.inventory.radicals),
            "vocab": self.vocab.to_json(),
            "vocab_hash": self.vocab.digest(),
            **(extra or {}),
        }
        save_checkpoint(path, self.parameters(), meta)

    @classmethod
    def load(cls, path: Union[str, Path]) -> tuple["PronunciationModel", dict]:
        meta, tensors = load_checkpoint(path)
        model = cls(
            TrainConfig.from_json(meta["config"]),
            RadicalInventory(tuple(meta["inventory"])),
            PhonemeVocab.from_json(meta["vocab"]),
        )
        params = model.parameters()
        if set(params) != set(tensors):
            raise ConfigError("checkpoint tensors do not match the architecture")
        for name, arr in tensors.items():
            params[name][...] = arr
        return model, meta


def predict(model: PronunciationModel, entry: LexiconEntry) -> SyllableParts:
    return model.predict([entry])[0]


# --- training -------------------------------------------------------------------


@dataclass
class TrainResult:
    best_epoch: int
    best_dev: Optional[EvalReport]
    log: list[dict]


def train(
    model: PronunciationModel,
    train_entries: Union[Sequence[LexiconEntry], EncodedSet],
    dev_entries: Union[Sequence[LexiconEntry], EncodedSet],
    config: Optional[TrainConfig] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Minibatch Adam with early stopping on dev TER; the parameters of the
    best dev epoch are restored before returning."""
    cfg = config or model.config
    train_set = train_entries if isinstance(train_entries, EncodedSet) else model.encode(train_entries)
    dev_set = dev_entries if isinstance(dev_entries, EncodedSet) else model.encode(dev_entries)
    rng = np.random.default_rng([cfg.seed, 1])
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    params, grads = model.parameters(), model.gradients()
    best_ter, best_epoch, best_report = math.inf, 0, None
    best_params = {k: v.copy() for k, v in params.items()}
    stale = 0
    log = []
    for epoch in range(1, cfg.max_epochs + 1):
        sums: dict[str, float] = {}
        n_seen = 0
        for batch in train_set.batches(cfg.batch_size, rng):
            model.zero_grad()
            try:
                parts = model.loss_and_backward(batch, train=True, rng=rng)
            except NonFiniteValue as exc:
                raise DivergedLoss(f"epoch {epoch}: {exc}") from exc
            if not math.isfinite(parts["total"]):
                raise DivergedLoss(f"epoch {epoch}: loss became {parts['total']}")
            opt.step(params, grads)
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v * len(batch)
            n_seen += len(batch)
        dev_report = score(model.predict(dev_set), dev_set.references)
        record = {"epoch": epoch, **{f"train_{k}": v / n_seen for k, v in sums.items()},
                  "dev_ser": dev_report.ser, "dev_ter": dev_report.ter}
        log.append(record)
        if on_epoch is not None:
            on_epoch(record)
        logger.info("epoch %d loss %.4f dev SER %.2f TER %.2f", epoch, record["train_total"],
                    dev_report.ser, dev_report.ter)
        if dev_report.ter < best_ter:
            best_ter, best_epoch, best_report, stale = dev_report.ter, epoch, dev_report, 0
            for k, v in params.items():
                best_params[k][...] = v
        else:
            stale += 1
        if cfg.stop_at_dev_ser is not None and dev_report.ser < cfg.stop_at_dev_ser:
            break
        if cfg.patience is not None and stale >= cfg.patience:
            break
    for k, v in params.items():
        v[...] = best_params[k]
    return TrainResult(best_epoch, best_report, log)


def model_grad_check(
    model: PronunciationModel,
    entries: Sequence[LexiconEntry],
    n_samples: Optional[int] = 200,
    tolerance: float = 1e-5,
    scale: Optional[float] = 0.5,
    seed: int = 0,
    corrupt: bool = False,
):
    """Finite-difference check of the full model loss (dropout off) on one
    batch built from ``entries``, which must share a GeoD length for
    sequence models.

    Freshly initialised recurrent stacks have gradients near 1e-8 where
    central differences are dominated by round-off, so with ``scale`` set
    the parameters are first redrawn from N(0, scale^2). ``corrupt``
    perturbs the analytic gradient of the last head layer as a negative
    control.
    """
    from .nn import grad_check

    rng = np.random.default_rng(seed)
    params = model.parameters()
    if scale is not None:
        for p in params.values():
            p[...] = rng.normal(0.0, scale, size=p.shape)
    enc = model.encode(entries)
    batches = enc.batches(len(entries))
    if len(batches) != 1:
        raise ValueError("grad check entries must form a single batch")
    batch = batches[0]

    def loss_and_grads():
        model.zero_grad()
        parts = model.loss_and_backward(batch, train=False)
        grads = model.gradients()
        if corrupt:
            grads = dict(grads)
            grads["head.onset.W"] = grads["head.onset.W"] * 1.5 + 0.01
        return parts["total"], grads

    return grad_check(loss_and_grads, params, tolerance=tolerance, n_samples=n_samples, rng=rng)
