"""JSON checkpoints: parameters as 17-significant-digit strings, written atomically."""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .nets import AdamState, DenseNet

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_array(a):
    return [format(float(v), ".17g") for v in np.ravel(a)]


def decode_array(items):
    return np.array([float(s) for s in items], dtype=np.float64)


def _enc_float(v):
    return None if v is None else format(float(v), ".17g")


def _dec_float(s):
    return None if s is None else float(s)


def encode_adam(opt):
    if opt is None:
        return None
    return {"m": encode_array(opt.m), "v": encode_array(opt.v), "lr": _enc_float(opt.lr),
            "beta1": _enc_float(opt.beta1), "beta2": _enc_float(opt.beta2), "eps": _enc_float(opt.eps),
            "step": int(opt.step), "skipped": int(opt.skipped)}


def decode_adam(d):
    if d is None:
        return None
    return AdamState(decode_array(d["m"]), decode_array(d["v"]), float(d["lr"]), float(d["beta1"]),
                     float(d["beta2"]), float(d["eps"]), int(d["step"]), int(d["skipped"]))


def write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(doc):
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def checkpoint_doc(trainer):
    from .blend import FidelityTrainer

    blend = isinstance(trainer, FidelityTrainer)
    original = trainer.original if blend else trainer.agent
    base_iteration = trainer.base_iteration if blend else trainer.iteration
    popt, ropt = trainer.base_opts if blend else (trainer.popt, trainer.ropt)
    doc = {
        "format_version": FORMAT_VERSION,
        "config": trainer.cfg.to_dict(),
        "iteration": int(base_iteration),
        "start_metric": _enc_float(None if blend else trainer.start_metric),
        "rng": {"scheme": "default_rng([seed, stream, iteration])", "seed": int(trainer.cfg.seed),
                "next_iteration": int(base_iteration)},
        "agent": encode_array(original.net.params),
        "reward_model": None if trainer.reward_model is None else encode_array(trainer.reward_model.net.params),
        "optimizers": {"policy": encode_adam(popt), "reward": encode_adam(ropt)},
        "fidelity": None,
    }
    if blend:
        doc["fidelity"] = {"agent": encode_array(trainer.agent.net.params),
                           "optimizer": encode_adam(trainer.popt),
                           "iteration": int(trainer.iteration)}
    return doc


def save_checkpoint(path, trainer):
    text = dumps(checkpoint_doc(trainer))
    write_atomic(path, text)
    return text


def read_checkpoint(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    version = doc.get("format_version") if isinstance(doc, dict) else None
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r} (expected {FORMAT_VERSION})")
    return doc


def _with_params(net, items):
    try:
        return DenseNet(net.layer_sizes, net.activation, net.steps, params=decode_array(items))
    except ValueError as e:
        raise CheckpointError(f"parameters do not fit the configured network: {e}") from None


def trainer_from_doc(doc):
    from .blend import FidelityTrainer
    from .config import config_from_dict
    from .training import Trainer

    cfg = config_from_dict(doc["config"])
    tr = Trainer(cfg)
    tr.agent.net = _with_params(tr.agent.net, doc["agent"])
    if doc["reward_model"] is not None:
        if tr.reward_model is None:
            raise CheckpointError("checkpoint has reward-model parameters but the config has none")
        tr.reward_model.net = _with_params(tr.reward_model.net, doc["reward_model"])
    tr.popt = decode_adam(doc["optimizers"]["policy"])
    tr.ropt = decode_adam(doc["optimizers"]["reward"])
    tr.iteration = int(doc["iteration"])
    tr.start_metric = _dec_float(doc["start_metric"])
    if doc.get("fidelity") is None:
        return tr
    fid = doc["fidelity"]
    ft = FidelityTrainer(tr)
    ft.agent.net = _with_params(ft.agent.net, fid["agent"])
    ft.popt = decode_adam(fid["optimizer"])
    ft.iteration = int(fid["iteration"])
    return ft


def load_trainer(path):
    return trainer_from_doc(read_checkpoint(path))


def params_digest(params):
    """Hex digest of the exact float64 bytes of ``params``."""
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(params, dtype=np.float64).tobytes()).hexdigest()
