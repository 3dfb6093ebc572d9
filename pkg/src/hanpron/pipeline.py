"""Experiment orchestration: build a model from a config, train it into a
run directory, evaluate it, and run the full comparison suite with a result
cache keyed by config, dataset and source digests."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import __version__
from .metrics import EvalReport, compare, score
from .models import PronunciationModel, TrainConfig, train
from .phonology import LexiconEntry
from .tree import DecisionTreeModel, DtConfig
from .unihan import PreparedDataset, load_dataset, manifest_hash

logger = logging.getLogger(__name__)

Model = Union[PronunciationModel, DecisionTreeModel]

# run-directory file names
MANIFEST = "manifest.json"
LOG = "log.jsonl"
NEURAL_FILE = "model.ckpt"
TREE_FILE = "model.json"

# display names and default configs of the comparison suite
UNIMODAL = ("dt_bor", "mlp_bor", "lstm_geod")
MULTIMODAL = ("dt_bor_ph", "mlp_bor_ph", "lstm_multimodal")
ABLATION = ("mlp_bor_independent",)
DISPLAY_NAMES = {
    "dt_bor": "DT (BoR)",
    "mlp_bor": "MLP (BoR)",
    "lstm_geod": "LSTM (GeoD)",
    "dt_bor_ph": "DT (BoR, ph)",
    "mlp_bor_ph": "MLP (BoR, ph)",
    "lstm_multimodal": "LSTM (GeoD, ph)",
    "mlp_bor_independent": "MLP (BoR), independent head",
}


class RunDirExists(FileExistsError):
    pass


def default_config(name: str) -> TrainConfig:
    """One of the bundled experiment configs (see ``hanpron/configs``)."""
    try:
        text = resources.files("hanpron.configs").joinpath(f"{name}.json").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise KeyError(f"no bundled config named {name!r}") from None
    return TrainConfig.from_json(json.loads(text))


def bundled_config_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("hanpron.configs").iterdir() if p.name.endswith(".json"))


def dataset_dir(arg: Optional[Union[str, Path]] = None) -> Path:
    """Explicit path, else ``$HANPRON_DATASET_DIR``, else ``./work/dataset``."""
    if arg is not None:
        return Path(arg)
    return Path(os.environ.get("HANPRON_DATASET_DIR", "work/dataset"))


def raw_data_dir(arg: Optional[Union[str, Path]] = None) -> Path:
    """Explicit path, else ``$HANPRON_DATA_DIR``, else ``./data``."""
    if arg is not None:
        return Path(arg)
    return Path(os.environ.get("HANPRON_DATA_DIR", "data"))


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(config.to_json(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def build_model(config: TrainConfig, data: PreparedDataset) -> Model:
    if config.model == "dt":
        return DecisionTreeModel(
            data.inventory,
            data.vocab,
            DtConfig(max_depth=config.max_depth, min_samples_leaf=config.min_samples_leaf),
            use_indicator=config.use_indicator,
            positional_indicator=config.positional_indicator,
        )
    return PronunciationModel(config, data.inventory, data.vocab)


def fit(model: Model, data: PreparedDataset, on_epoch: Optional[Callable[[dict], None]] = None) -> list[dict]:
    """Train ``model`` on the training split; returns the per-epoch log."""
    if isinstance(model, DecisionTreeModel):
        model.fit(data.train)
        dev = score(model.predict(data.dev), [e.target for e in data.dev])
        record = {"epoch": 1, "dev_ser": dev.ser, "dev_ter": dev.ter,
                  "nodes": [t.n_nodes() for t in model.trees]}
        if on_epoch:
            on_epoch(record)
        return [record]
    return train(model, data.train, data.dev, on_epoch=on_epoch).log


def evaluate(model: Model, entries: Sequence[LexiconEntry], metadata: Optional[dict] = None) -> EvalReport:
    return score(model.predict(entries), [e.target for e in entries], metadata)


def save_model(model: Model, run_dir: Path, extra: Optional[dict] = None) -> Path:
    if isinstance(model, DecisionTreeModel):
        path = run_dir / TREE_FILE
        model.save(path)
    else:
        path = run_dir / NEURAL_FILE
        model.save(path, extra)
    return path


def load_model(path: Union[str, Path]) -> Model:
    """Load a checkpoint file, or the model inside a run directory."""
    p = Path(path)
    if p.is_dir():
        p = p / NEURAL_FILE if (p / NEURAL_FILE).exists() else p / TREE_FILE
    if not p.exists():
        raise FileNotFoundError(f"no model at {path}")
    with open(p, "rb") as fh:
        head = fh.read(8)
    if head == b"HPRNCKPT":
        return PronunciationModel.load(p)[0]
    return DecisionTreeModel.load(p)


def run_training(
    config: TrainConfig,
    data: PreparedDataset,
    run_dir: Union[str, Path],
    name: Optional[str] = None,
    overwrite: bool = False,
) -> Model:
    """Train into ``run_dir``: writes the run manifest, the JSON-lines
    training log and the model file. The directory is created only after
    the config and dataset have been validated by the caller."""
    run = Path(run_dir)
    if (run / MANIFEST).exists() and not overwrite:
        raise RunDirExists(f"{run} already holds a run")
    model = build_model(config, data)
    run.mkdir(parents=True, exist_ok=True)
    started = time.time()
    with open(run / LOG, "w", encoding="utf-8") as log_fh:
        def on_epoch(rec: dict) -> None:
            log_fh.write(json.dumps(rec, sort_keys=True) + "\n")
            log_fh.flush()

        log = fit(model, data, on_epoch)
    best = min(log, key=lambda r: (r["dev_ter"], r["epoch"]))
    manifest = {
        "format": "hanpron-run",
        "name": name or config.model,
        "tool_version": __version__,
        "config": config.to_json(),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "data_manifest_hash": manifest_hash(data.manifest),
        "data_sources": data.manifest.get("sources", {}),
        "best_epoch": best["epoch"],
        "epochs_run": len(log),
        "timestamps": {"started": _iso(started), "finished": _iso(time.time())},
    }
    save_model(model, run, {"seed": config.seed, "epoch": best["epoch"],
                            "data_manifest_hash": manifest["data_manifest_hash"]})
    (run / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return model


def _iso(t: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def report_metadata(name: str, config: TrainConfig, data: PreparedDataset, split_name: str) -> dict:
    return {
        "model": name,
        "architecture": config.model,
        "head": config.head,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "data_manifest_hash": manifest_hash(data.manifest),
        "split": split_name,
    }


# --- comparison suite --------------------------------------------------------


def source_digest() -> str:
    """Digest of the modules that determine experiment outcomes."""
    pkg = Path(__file__).resolve().parent
    files = sorted(
        [pkg / "ids.py", pkg / "phonology.py", pkg / "models.py", pkg / "tree.py", pkg / "metrics.py"]
        + list((pkg / "nn").glob("*.py"))
    )
    h = hashlib.sha256()
    for f in files:
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


@dataclass
class ExperimentResult:
    name: str
    dev: EvalReport
    test: EvalReport
    cached: bool
    seconds: float


def run_experiment(
    name: str,
    data: PreparedDataset,
    results_dir: Union[str, Path],
    config: Optional[TrainConfig] = None,
    use_cache: bool = True,
) -> ExperimentResult:
    """Train and evaluate one named experiment, reusing a cached result when
    the config, dataset manifest and model sources are unchanged."""
    config = config or default_config(name)
    run = Path(results_dir) / name
    key = {"config_hash": config_hash(config), "data_manifest_hash": manifest_hash(data.manifest),
           "source_digest": source_digest()}
    key_path = run / "cache_key.json"
    if use_cache and key_path.exists() and json.loads(key_path.read_text()) == key:
        dev = EvalReport.from_json(json.loads((run / "report_dev.json").read_text(encoding="utf-8")))
        test = EvalReport.from_json(json.loads((run / "report_test.json").read_text(encoding="utf-8")))
        secs = json.loads((run / "timing.json").read_text())["seconds"]
        return ExperimentResult(name, dev, test, True, secs)
    t0 = time.time()
    logger.info("running experiment %s", name)
    model = run_training(config, data, run, name=name, overwrite=True)
    secs = time.time() - t0
    dev = evaluate(model, data.dev, report_metadata(name, config, data, "dev"))
    test = evaluate(model, data.test, report_metadata(name, config, data, "test"))
    (run / "report_dev.json").write_text(dev.dumps(), encoding="utf-8")
    (run / "report_test.json").write_text(test.dumps(), encoding="utf-8")
    (run / "timing.json").write_text(json.dumps({"seconds": round(secs, 1)}) + "\n")
    key_path.write_text(json.dumps(key, sort_keys=True) + "\n")
    return ExperimentResult(name, dev, test, False, secs)


def run_suite(
    data_dir: Union[str, Path],
    results_dir: Union[str, Path],
    names: Sequence[str] = UNIMODAL + MULTIMODAL + ABLATION,
    use_cache: bool = True,
) -> dict[str, ExperimentResult]:
    data = load_dataset(data_dir)
    results = {}
    for name in names:
        results[name] = run_experiment(name, data, results_dir, use_cache=use_cache)
        r = results[name]
        logger.info("%s: test SER %.1f TER %.1f (%s, %.0fs)", name, r.test.ser, r.test.ter,
                    "cached" if r.cached else "trained", r.seconds)
    write_tables(results, results_dir)
    return results


def write_tables(results: dict[str, ExperimentResult], results_dir: Union[str, Path]) -> str:
    out = Path(results_dir)
    text = []
    for title, group in (("unimodal", UNIMODAL), ("multimodal", MULTIMODAL), ("ablation", ("mlp_bor",) + ABLATION)):
        names = [n for n in group if n in results]
        if not names:
            continue
        table = compare([results[n].test for n in names], [DISPLAY_NAMES.get(n, n) for n in names])
        text.append(f"== {title} (test) ==\n" + table.text())
        (out / f"table_{title}.json").write_text(json.dumps(table.to_json(), ensure_ascii=False, indent=2) + "\n",
                                                 encoding="utf-8")
    joined = "\n".join(text)
    (out / "tables.txt").write_text(joined, encoding="utf-8")
    return joined


def synthetic_entries(n: int = 6, seed: int = 0) -> list[LexiconEntry]:
    """Tiny lexicon with equal-length GeoD sequences and cognates, for grad
    checks that should not depend on an ingested dataset."""
    from .phonology import Language, SyllableParts

    rng = np.random.default_rng(seed)
    rads = ["口", "木", "水", "火", "土", "金"]
    onsets, nuclei, codas = ["s", "m", None, "g"], ["a", "i", "o", "aa"], [None, "n", "ng", "p"]
    out = []
    for i in range(n):
        a, b, c = rng.choice(len(rads), 3)
        geod = ("⿰", rads[a], "⿱", rads[b], rads[c])
        target = SyllableParts(onsets[i % 4], nuclei[(i // 2) % 4], codas[(i * 3) % 4])
        cog = {Language.MANDARIN: (SyllableParts(onsets[(i + 1) % 4], "a", None, Language.MANDARIN),)}
        if i % 2:
            cog[Language.KOREAN] = (SyllableParts("k", "a", "p", Language.KOREAN),)
        out.append(LexiconEntry(chr(0x4E00 + i), geod, target, cog))
    return out
