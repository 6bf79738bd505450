# -*- coding: utf-8 -*-
"""
Spectral checks for modular-addition models.

- effective_logit_map: W_L = W_U^T W_out^T restricted to the p numeric
  classes, one column per MLP neuron.
- top_frequencies: real FFT along the class axis, energy summed over
  neurons, DC excluded.
- frequency_ablation_accuracy: project each example's class logits onto
  DC + the chosen cos/sin tones and re-score.
- fve: share of centered final-position MLP activation variance captured
  by cos(w_k(a+b)) and sin(w_k(a+b)), w_k = 2*pi*k/p, pooled over neurons.
- neuron_fve: the same shares measured neuron by neuron; the best neuron is
  reported.
- dominant_activation_frequency: the k whose tones explain the most pooled
  activation variance. It need not appear among the W_L top frequencies.
"""
import csv
import warnings
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from grok_lab.errors import UnsupportedTaskError
from grok_lab.model import Params, forward, mlp_activations, unembed_columns
from grok_lab.schemas import FrequencyFVE, FrequencyPeak, ModelConfig, SpectralReport
from grok_lab.tasks import TaskDataset
from grok_lab.tensor import no_grad
from grok_lab.training import evaluate


def _require_mod_add(dataset: TaskDataset) -> int:
    if dataset.task != "mod_add":
        raise UnsupportedTaskError(f"spectral analysis needs a mod_add dataset, got '{dataset.task}'")
    return dataset.p


def effective_logit_map(params: Params, config: ModelConfig, dataset: TaskDataset) -> np.ndarray:
    p = _require_mod_add(dataset)
    if config.vocab_size != dataset.vocab_size:
        raise ValueError(f"model vocab_size {config.vocab_size} does not match dataset vocab_size {dataset.vocab_size}")
    w_u = unembed_columns(params, config).astype(np.float64)[:, :p]
    w_out = params.W_out.data.astype(np.float64)
    return w_u.T @ w_out.T


def energy_spectrum(w_l: np.ndarray) -> np.ndarray:
    """Energy per frequency k = 0..floor(p/2), summed over neuron columns."""
    spec = np.fft.rfft(np.asarray(w_l, dtype=np.float64), axis=0)
    return (np.abs(spec) ** 2).sum(axis=1)


def top_frequencies(w_l: np.ndarray, n: int = 5) -> List[Tuple[int, float]]:
    p = w_l.shape[0]
    if p < 3:
        raise ValueError(f"need at least 3 classes for a spectrum, got {p}")
    if not 1 <= n <= p // 2:
        raise ValueError(f"n must be in [1, {p // 2}], got {n}")
    energy = energy_spectrum(w_l)[1:]
    order = np.argsort(-energy, kind="stable")[:n]
    return [(int(i) + 1, float(np.sqrt(energy[i]))) for i in order]


def _check_freqs(freqs: Iterable[int], p: int) -> List[int]:
    freqs = sorted(set(int(k) for k in freqs))
    if not freqs:
        raise ValueError("frequency list must not be empty")
    for k in freqs:
        if not 1 <= k <= p // 2:
            raise ValueError(f"frequency {k} outside [1, {p // 2}]")
    return freqs


def project_logits(logits: np.ndarray, freqs: Iterable[int], p: int) -> np.ndarray:
    """Least-squares projection of each row onto {1, cos(2 pi k c/p), sin(2 pi k c/p)}."""
    freqs = _check_freqs(freqs, p)
    if len(freqs) == p // 2:
        # complete basis: the projection is the identity
        return logits
    c = np.arange(p)
    cols = [np.ones(p)]
    for k in freqs:
        angle = 2.0 * np.pi * k * c / p
        cols.append(np.cos(angle))
        if 2 * k != p:
            cols.append(np.sin(angle))
    basis = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(basis, np.asarray(logits, dtype=np.float64).T, rcond=None)
    return (basis @ coef).T


def _class_logits(params: Params, config: ModelConfig, dataset: TaskDataset, split: str) -> Tuple[np.ndarray, np.ndarray]:
    p = _require_mod_add(dataset)
    tokens, labels = dataset.split(split)
    with no_grad():
        logits = forward(params, config, tokens).data
    return logits[:, :p].astype(np.float64), labels


def class_restricted_accuracy(params: Params, config: ModelConfig, dataset: TaskDataset, split: str = "test") -> float:
    logits, labels = _class_logits(params, config, dataset, split)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def frequency_ablation_accuracy(
    params: Params, config: ModelConfig, dataset: TaskDataset, freqs: Iterable[int]
) -> float:
    logits, labels = _class_logits(params, config, dataset, "test")
    projected = project_logits(logits, freqs, dataset.p)
    return float(np.mean(np.argmax(projected, axis=1) == labels))


def _tone_basis(tokens: np.ndarray, p: int, ks: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Centered unit-norm cos/sin columns of w_k (a + b), one per k; all-zero where a tone is constant."""
    s = (tokens[:, 0] + tokens[:, 1]).astype(np.float64)
    omega = 2.0 * np.pi * np.asarray(ks, dtype=np.float64) / p
    out = []
    for fn in (np.cos, np.sin):
        basis = fn(np.outer(s, omega))
        basis -= basis.mean(axis=0, keepdims=True)
        norm = np.linalg.norm(basis, axis=0, keepdims=True)
        out.append(np.divide(basis, norm, out=np.zeros_like(basis), where=norm > 1e-9))
    return out[0], out[1]


def _centered(activations: np.ndarray) -> np.ndarray:
    acts = np.asarray(activations, dtype=np.float64)
    return acts - acts.mean(axis=0, keepdims=True)


def _check_k(k: int, p: int) -> None:
    if not 1 <= k <= p // 2:
        raise ValueError(f"frequency {k} outside [1, {p // 2}]")


def fve_from_activations(activations: np.ndarray, tokens: np.ndarray, p: int, k: int) -> Tuple[float, float]:
    _check_k(k, p)
    acts = _centered(activations)
    total = float((acts * acts).sum())
    if total <= 0.0:
        warnings.warn("MLP activations have zero variance; FVE reported as 0", RuntimeWarning)
        return 0.0, 0.0
    cos_b, sin_b = _tone_basis(tokens, p, [k])
    u = float(((acts.T @ cos_b) ** 2).sum()) / total
    v = float(((acts.T @ sin_b) ** 2).sum()) / total
    return min(1.0, u), min(1.0, v)


def neuron_fve_from_activations(activations: np.ndarray, tokens: np.ndarray, p: int, k: int) -> Tuple[float, float]:
    """Max over neurons with non-zero variance of each neuron's own cos/sin share."""
    _check_k(k, p)
    acts = _centered(activations)
    var = (acts * acts).sum(axis=0)
    live = var > 0.0
    if not live.any():
        warnings.warn("MLP activations have zero variance; FVE reported as 0", RuntimeWarning)
        return 0.0, 0.0
    cos_b, sin_b = _tone_basis(tokens, p, [k])
    u = (acts[:, live].T @ cos_b)[:, 0] ** 2 / var[live]
    v = (acts[:, live].T @ sin_b)[:, 0] ** 2 / var[live]
    return min(1.0, float(u.max())), min(1.0, float(v.max()))


def activation_spectrum(activations: np.ndarray, tokens: np.ndarray, p: int) -> np.ndarray:
    """Pooled FVE (cos + sin) for k = 0..p//2; entry 0 (DC) is always 0."""
    acts = _centered(activations)
    total = float((acts * acts).sum())
    out = np.zeros(p // 2 + 1)
    if total <= 0.0:
        return out
    cos_b, sin_b = _tone_basis(tokens, p, range(1, p // 2 + 1))
    out[1:] = (((acts.T @ cos_b) ** 2).sum(axis=0) + ((acts.T @ sin_b) ** 2).sum(axis=0)) / total
    return out


def dominant_activation_frequency(activations: np.ndarray, tokens: np.ndarray, p: int) -> int:
    if p < 3:
        raise ValueError(f"need at least 3 classes for a spectrum, got {p}")
    # ties resolve to the lowest k
    return int(np.argmax(activation_spectrum(activations, tokens, p)[1:])) + 1


def _all_activations(params: Params, config: ModelConfig, dataset: TaskDataset) -> Tuple[np.ndarray, np.ndarray]:
    tokens, _ = dataset.split("all")
    with no_grad():
        acts = mlp_activations(params, config, tokens)
    return acts, tokens


def fve(params: Params, config: ModelConfig, dataset: TaskDataset, k: int) -> Tuple[float, float]:
    p = _require_mod_add(dataset)
    acts, tokens = _all_activations(params, config, dataset)
    return fve_from_activations(acts, tokens, p, k)


def neuron_fve(params: Params, config: ModelConfig, dataset: TaskDataset, k: int) -> Tuple[float, float]:
    p = _require_mod_add(dataset)
    acts, tokens = _all_activations(params, config, dataset)
    return neuron_fve_from_activations(acts, tokens, p, k)


def _frequency_fve(acts: np.ndarray, tokens: np.ndarray, p: int, k: int) -> FrequencyFVE:
    u, v = fve_from_activations(acts, tokens, p, k)
    nu, nv = neuron_fve_from_activations(acts, tokens, p, k)
    return FrequencyFVE(k=k, fve_u=u, fve_v=v, neuron_fve_u=nu, neuron_fve_v=nv)


def build_spectral_report(
    params: Params,
    config: ModelConfig,
    dataset: TaskDataset,
    n: int = 5,
    grok_threshold: float = 0.99,
) -> SpectralReport:
    w_l = effective_logit_map(params, config, dataset)
    top = top_frequencies(w_l, n)
    freqs = [k for k, _ in top]
    _, test_acc = evaluate(params, config, dataset, "test")
    acts, tokens = _all_activations(params, config, dataset)
    per_freq = [_frequency_fve(acts, tokens, dataset.p, k) for k in freqs]
    dominant = _frequency_fve(acts, tokens, dataset.p, dominant_activation_frequency(acts, tokens, dataset.p))
    return SpectralReport(
        p=dataset.p,
        top_frequencies=[FrequencyPeak(k=k, magnitude=m) for k, m in top],
        ablation_accuracy=frequency_ablation_accuracy(params, config, dataset, freqs),
        unablated_accuracy=class_restricted_accuracy(params, config, dataset),
        fve=per_freq,
        activation_frequency=dominant,
        test_accuracy=test_acc,
        grokked=test_acc >= grok_threshold,
        grok_threshold=grok_threshold,
    )


def write_spectrum_csv(w_l: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    energy = energy_spectrum(w_l)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["k", "energy"])
        for k, e in enumerate(energy.tolist()):
            writer.writerow([k, e])
    return path
