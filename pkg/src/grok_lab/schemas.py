from typing import List, Dict, Any, Optional, Literal

from pydantic import BaseModel, Field, root_validator, validator


NormMode = Literal["layernorm", "rmsnorm", "spherical"]
UnembedMode = Literal["standard", "bounded_cosine"]
AttentionMode = Literal["learned", "uniform"]
TaskKind = Literal["mod_add", "s5"]
Precision = Literal["float32", "float64"]

S5_ORDER = 120

METRICS_CSV_HEADER = ["epoch", "train_loss", "test_loss", "train_acc", "test_acc", "res_norm", "max_logit"]


class StrictModel(BaseModel):
    class Config:
        extra = "forbid"
        validate_assignment = True


class ModelConfig(StrictModel):
    vocab_size: int = Field(..., ge=2)
    seq_len: int = Field(3, ge=1)
    d_model: int = Field(128, ge=1)
    n_heads: int = Field(4, ge=1)
    d_head: int = Field(32, ge=1)
    d_mlp: int = Field(512, ge=1)
    norm_mode: NormMode = "layernorm"
    unembed_mode: UnembedMode = "standard"
    tau: float = Field(10.0, gt=0)  # bounded_cosine temperature
    attention_mode: AttentionMode = "learned"
    fourier_init: bool = False
    fourier_freqs: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    init_seed: int = 0

    @root_validator(skip_on_failure=True)
    def _check_switchboard(cls, values):
        if values["n_heads"] * values["d_head"] != values["d_model"]:
            raise ValueError("n_heads * d_head must equal d_model")
        if values["norm_mode"] == "spherical" and values["unembed_mode"] != "bounded_cosine":
            raise ValueError("spherical norm_mode requires unembed_mode 'bounded_cosine'")
        if values["fourier_init"]:
            freqs = values["fourier_freqs"]
            if not freqs:
                raise ValueError("fourier_init requires a non-empty fourier_freqs")
            if 2 * len(freqs) > values["d_model"]:
                raise ValueError("fourier_init requires 2 * len(fourier_freqs) <= d_model")
        return values


class TaskConfig(StrictModel):
    kind: TaskKind = "mod_add"
    p: int = Field(113, ge=2)  # ignored for s5
    split_seed: int = 0
    train_fraction: float = Field(0.3, gt=0, lt=1)

    @property
    def vocab_size(self) -> int:
        if self.kind == "s5":
            return S5_ORDER + 1
        return self.p + 1


class TrainConfig(StrictModel):
    learning_rate: float = Field(1e-4, ge=0)
    weight_decay: float = Field(1.0, ge=0)
    beta1: float = Field(0.9, gt=0, lt=1)
    beta2: float = Field(0.999, gt=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    max_epochs: int = Field(15000, ge=0)
    eval_every: int = Field(100, ge=1)
    grok_threshold: float = Field(0.99, gt=0, le=1)
    train_seed: int = 0
    precision: Precision = "float32"


class ExperimentConfig(StrictModel):
    name: str
    comment: str = ""  # which comparison row this preset reproduces
    task: TaskConfig = Field(default_factory=TaskConfig)
    model: ModelConfig
    train: TrainConfig = Field(default_factory=TrainConfig)
    seeds: List[int] = Field(default_factory=lambda: [0], min_items=1)
    output_dir: Optional[str] = None

    @root_validator(pre=True)
    def _fill_vocab_from_task(cls, values):
        task = values.get("task") or {}
        model = values.get("model")
        if isinstance(model, dict) and model.get("vocab_size") is None:
            if isinstance(task, TaskConfig):
                vocab = task.vocab_size
            else:
                try:
                    vocab = TaskConfig(**task).vocab_size
                except Exception:
                    # the task error itself is reported by field validation
                    return values
            values = dict(values)
            values["model"] = dict(model, vocab_size=vocab)
        return values

    @root_validator(skip_on_failure=True)
    def _check_vocab(cls, values):
        if values["model"].vocab_size != values["task"].vocab_size:
            raise ValueError(
                f"model.vocab_size={values['model'].vocab_size} does not match "
                f"task vocabulary {values['task'].vocab_size}"
            )
        return values

    def for_seed(self, seed: int) -> "ExperimentConfig":
        """One seed drives init, split and train-order RNGs together."""
        return ExperimentConfig(
            name=self.name,
            comment=self.comment,
            task=self.task.copy(update={"split_seed": seed}),
            model=self.model.copy(update={"init_seed": seed}),
            train=self.train.copy(update={"train_seed": seed}),
            seeds=[seed],
            output_dir=self.output_dir,
        )


class MetricRow(BaseModel):
    epoch: int
    train_loss: float
    test_loss: float
    train_acc: float
    test_acc: float
    res_norm: float
    max_logit: float


class RunRecord(BaseModel):
    name: str
    seed: int
    config: Dict[str, Any]
    rows: List[MetricRow] = Field(default_factory=list)
    grok_epoch: Optional[int] = None
    peak_test_acc: float = 0.0
    diverged: bool = False
    divergence_epoch: Optional[int] = None
    wall_time_seconds: float = 0.0
    started_at: Optional[str] = None
    finished_at: Optional[str] = None

    @validator("rows")
    def _epochs_increasing(cls, rows):
        for prev, cur in zip(rows, rows[1:]):
            if cur.epoch <= prev.epoch:
                raise ValueError("metric epochs must be strictly increasing")
        return rows


class RunSummary(BaseModel):
    name: str
    seed: int
    config: Dict[str, Any]
    grok_epoch: Optional[int] = None
    peak_test_acc: float = 0.0
    final_train_acc: Optional[float] = None
    final_test_acc: Optional[float] = None
    diverged: bool = False
    divergence_epoch: Optional[int] = None
    # optimizer steps applied; a diverged run stops one short of divergence_epoch
    epochs_completed: int = 0
    wall_time_seconds: float = 0.0
    started_at: Optional[str] = None
    finished_at: Optional[str] = None

    @classmethod
    def from_record(cls, record: RunRecord) -> "RunSummary":
        last = record.rows[-1] if record.rows else None
        if record.diverged and record.divergence_epoch is not None:
            completed = max(0, record.divergence_epoch - 1)
        else:
            completed = last.epoch if last else 0
        return cls(
            name=record.name,
            seed=record.seed,
            config=record.config,
            grok_epoch=record.grok_epoch,
            peak_test_acc=record.peak_test_acc,
            final_train_acc=last.train_acc if last else None,
            final_test_acc=last.test_acc if last else None,
            diverged=record.diverged,
            divergence_epoch=record.divergence_epoch,
            epochs_completed=completed,
            wall_time_seconds=record.wall_time_seconds,
            started_at=record.started_at,
            finished_at=record.finished_at,
        )


class SeedOutcome(BaseModel):
    seed: int
    run_dir: str
    grok_epoch: Optional[int] = None
    peak_test_acc: Optional[float] = None
    diverged: bool = False
    error: Optional[str] = None


class SweepAggregate(BaseModel):
    name: str
    comment: str = ""
    seeds: List[int]
    n_runs: int
    failures: int  # runs without a grok epoch
    errors: int  # seeds that crashed before writing a summary
    mean_grok_epoch: Optional[float] = None
    std_grok_epoch: Optional[float] = None
    min_grok_epoch: Optional[int] = None
    max_grok_epoch: Optional[int] = None
    mean_peak_acc: Optional[float] = None
    max_peak_acc: Optional[float] = None
    success_count: int = 0  # runs whose peak test accuracy hit 100%
    started_at: Optional[str] = None
    finished_at: Optional[str] = None
    per_seed: List[SeedOutcome] = Field(default_factory=list)


class FrequencyPeak(BaseModel):
    k: int
    magnitude: float


class FrequencyFVE(BaseModel):
    k: int
    # pooled over all neurons
    fve_u: float = Field(..., ge=0, le=1)
    fve_v: float = Field(..., ge=0, le=1)
    # best single neuron
    neuron_fve_u: Optional[float] = Field(None, ge=0, le=1)
    neuron_fve_v: Optional[float] = Field(None, ge=0, le=1)


class SpectralReport(BaseModel):
    p: int
    top_frequencies: List[FrequencyPeak]
    ablation_accuracy: float
    unablated_accuracy: float
    fve: List[FrequencyFVE] = Field(default_factory=list)
    # frequency that dominates the MLP activations, with its FVE
    activation_frequency: Optional[FrequencyFVE] = None
    test_accuracy: float
    grokked: bool
    grok_threshold: float

    @root_validator(skip_on_failure=True)
    def _frequencies_in_range(cls, values):
        hi = values["p"] // 2
        ks = [peak.k for peak in values["top_frequencies"]]
        if values.get("activation_frequency") is not None:
            ks.append(values["activation_frequency"].k)
        for k in ks:
            if not 1 <= k <= hi:
                raise ValueError(f"frequency {k} outside [1, {hi}]")
        return values
