"""Post-processing model zoo and the rolling-origin protocol.

Six variants share one training loop. The raw-ensemble baseline
("members") needs no training: per cell it reports the member mean and
(n-1)-normalized member standard deviation. The per-grid baseline
("fcn") sees seven per-cell summary features through 1x1 convolutions,
so no spatial context leaks between cells. The four convolutional
variants differ only in their input channels and training multiset:

    cnn       20 member channels, originals only
    cnn-dyn   25 channels (members + geographic/dynamic), originals only
    cnn-aug   20 channels, interpolation + noise augmentation
    cnn-all   25 channels, interpolation + noise augmentation

All trained variants minimize the same temporally weighted closed-form
CRPS over land cells, full batch, fixed 100 epochs of Adam at lr 0.001.
Network outputs live in standardized target space: mu = t_mean +
t_std * out0 and sigma = t_std * softplus(out1) + floor, where t_mean /
t_std summarize the training observations over land. Without this
rescaling a freshly initialized network sits hundreds of mm from the
data and 100 fixed-rate epochs cannot close the gap.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .augmentation import DEFAULT_NOISE_SCALE, build_augmented_set
from .domain import GridDomain, Report, ReportOrigin
from .features import (
    CHANNEL_NAMES,
    N_MEMBERS,
    FeatureStack,
    NormStats,
    apply_standardizer,
    assemble_stack,
    fit_standardizer,
    passed_flag_field,
    tc_distance_field,
)
from .neuralnet import (
    Adam,
    ConvLayer,
    Sequential,
    SoftplusLayer,
    TrainingDiverged,
    load_network,
    save_network,
    softplus,
)
from .scoring import GaussianField, crps_gaussian, crps_gradient, make_weights

VARIANTS = ("members", "fcn", "cnn", "cnn-dyn", "cnn-aug", "cnn-all")
#: variant -> (use_geo_dyn, use_augmentation); members/fcn take neither
_VARIANT_FLAGS = {
    "members": (False, False),
    "fcn": (False, False),
    "cnn": (False, False),
    "cnn-dyn": (True, False),
    "cnn-aug": (False, True),
    "cnn-all": (True, True),
}

FCN_CHANNEL_NAMES = ("member_mean", "member_std", "lon", "lat",
                     "altitude", "dist_tc", "passed_flag")
HIDDEN_MAPS_CNN = 32
HIDDEN_WIDTH_FCN = 16
SIGMA_FLOOR_MM = 1e-3
MEMBERS_SIGMA_FLOOR = 1e-6
#: t_std is clamped here so near-dry training windows cannot blow up the
#: standardized-space gradients
TARGET_STD_FLOOR_MM = 1.0


@dataclass(frozen=True)
class ModelConfig:
    """Training recipe for one variant; flags must match its table row."""

    variant: str
    use_geo_dyn: bool
    use_augmentation: bool
    epochs: int = 100
    lr: float = 0.001
    noise_scale: float = DEFAULT_NOISE_SCALE
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        flags = _VARIANT_FLAGS[self.variant]
        if (self.use_geo_dyn, self.use_augmentation) != flags:
            raise ValueError(f"variant {self.variant!r} requires "
                             f"(use_geo_dyn, use_augmentation) == {flags}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "ModelConfig":
        variant = variant.lower()
        if variant not in _VARIANT_FLAGS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        geo, aug = _VARIANT_FLAGS[variant]
        return cls(variant=variant, use_geo_dyn=geo, use_augmentation=aug, **overrides)

    @property
    def trains(self) -> bool:
        return self.variant != "members"

    @property
    def channel_names(self) -> tuple[str, ...]:
        if self.variant == "fcn":
            return FCN_CHANNEL_NAMES
        return CHANNEL_NAMES if self.use_geo_dyn else CHANNEL_NAMES[:N_MEMBERS]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def predict_members_baseline(report: Report) -> GaussianField:
    """Gaussian from the raw ensemble: member mean and (n-1) std per cell."""
    mu = report.members.mean(axis=0)
    sigma = np.maximum(report.members.std(axis=0, ddof=1), MEMBERS_SIGMA_FLOOR)
    return GaussianField(mu=mu, sigma=sigma)


def original_track(reports) -> list[tuple[float, tuple[float, float]]]:
    """(index, tc_center) of the original reports, ascending."""
    pairs = [(r.index, r.tc_center) for r in reports
             if r.origin is ReportOrigin.ORIGINAL]
    return sorted(pairs, key=lambda p: p[0])


def track_through(track_pairs, report: Report) -> list[tuple[float, float]]:
    """TC positions known when report was issued.

    All original centers up to the report's fractional index, plus the
    report's own (interpolated) center when it sits between originals.
    """
    track = [c for i, c in track_pairs if i <= report.index]
    if report.index != int(report.index):
        track.append(report.tc_center)
    if not track:
        track = [report.tc_center]
    return track


def fcn_features(report: Report, domain: GridDomain, track) -> FeatureStack:
    """Seven per-cell predictors for the per-grid baseline."""
    lat_grid, lon_grid = domain.latlon_grids()
    channels = np.stack([
        report.members.mean(axis=0),
        report.members.std(axis=0, ddof=1),
        lon_grid,
        lat_grid,
        domain.altitude,
        tc_distance_field(domain, report.tc_center),
        passed_flag_field(track, domain),
    ])
    return FeatureStack(channels=channels, channel_names=FCN_CHANNEL_NAMES)


def _stack_for(config: ModelConfig, report: Report, domain: GridDomain,
               track_pairs) -> FeatureStack:
    track = track_through(track_pairs, report)
    if config.variant == "fcn":
        return fcn_features(report, domain, track)
    stack = assemble_stack(report, domain, track)
    if config.use_geo_dyn:
        return stack
    return FeatureStack(channels=stack.channels[:N_MEMBERS],
                        channel_names=CHANNEL_NAMES[:N_MEMBERS])


def _build_network(config: ModelConfig, fold_key: int = 0) -> Sequential:
    # fold_key decorrelates the parameter draw across rolling-origin folds
    # so a single unlucky initialization cannot taint every target.
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(int(config.seed), 7, int(fold_key))))
    n_in = len(config.channel_names)
    if config.variant == "fcn":
        layers = [
            ConvLayer(n_in, HIDDEN_WIDTH_FCN, kernel=(1, 1), rng=rng, input_grad=False),
            SoftplusLayer(),
            ConvLayer(HIDDEN_WIDTH_FCN, 2, kernel=(1, 1), rng=rng),
        ]
    else:
        layers = [
            ConvLayer(n_in, HIDDEN_MAPS_CNN, kernel=(2, 2), rng=rng, input_grad=False),
            SoftplusLayer(),
            ConvLayer(HIDDEN_MAPS_CNN, 2, kernel=(1, 1), rng=rng),
        ]
    return Sequential(layers)


@dataclass
class TrainedModel:
    """A fitted network plus everything needed to replay its predictions."""

    config: ModelConfig
    net: Sequential
    norm: NormStats
    target_mean: float
    target_std: float
    loss_history: list[float] = field(default_factory=list)

    def _heads_to_field(self, out: np.ndarray) -> GaussianField:
        mu = self.target_mean + self.target_std * out[0].astype(float)
        sigma = self.target_std * softplus(out[1].astype(float)) + SIGMA_FLOOR_MM
        return GaussianField(mu=mu, sigma=sigma)

    def predict(self, report: Report, domain: GridDomain, track_pairs) -> GaussianField:
        """Post-processed Gaussian for one report.

        ``track_pairs`` are (index, tc_center) originals of the scenario;
        only positions at or before the report's index are consulted.
        """
        stack = _stack_for(self.config, report, domain, track_pairs)
        z = apply_standardizer(stack, self.norm)
        x = z.channels[None].astype(self.config.dtype)
        out = self.net.forward(x)[0]
        return self._heads_to_field(out)

    def save(self, path) -> None:
        meta = {
            "config": self.config.to_dict(),
            "norm_mean": self.norm.mean.tolist(),
            "norm_std": self.norm.std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }
        save_network(path, self.net, meta=meta)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        net, meta = load_network(path)
        return cls(
            config=ModelConfig.from_dict(meta["config"]),
            net=net,
            norm=NormStats(mean=np.array(meta["norm_mean"]),
                           std=np.array(meta["norm_std"])),
            target_mean=meta["target_mean"],
            target_std=meta["target_std"],
        )


def train_model(config: ModelConfig, history, domain: GridDomain) -> TrainedModel:
    """Fit one variant on the reports preceding a target.

    ``history`` is the ready-made training list (already augmented for the
    -aug variants); every report needs an observation. Full-batch: each
    epoch is one Adam step on the weighted CRPS loss over land cells.
    """
    if not config.trains:
        raise ValueError("the members baseline has no trainable parameters")
    history = list(history)
    if not history:
        raise ValueError("history is empty; need at least one report to train on")
    if any(r.observation is None for r in history):
        raise ValueError("every training report needs an observation")

    dtype = np.dtype(config.dtype)
    track_pairs = original_track(history)
    stacks = [_stack_for(config, r, domain, track_pairs) for r in history]
    norm = fit_standardizer(stacks)
    x = np.stack([apply_standardizer(s, norm).channels for s in stacks]).astype(dtype)
    x.flags.writeable = False  # lets conv layers reuse the im2col expansion

    y = np.stack([r.observation for r in history])
    land = domain.land_mask
    n_land = int(land.sum())
    target_mean = float(y[:, land].mean())
    target_std = max(float(y[:, land].std()), TARGET_STD_FLOOR_MM)

    if not track_pairs:
        raise ValueError("history contains no original reports")
    indices = [r.index for r in history]
    scheme = make_weights(indices, len(track_pairs))
    w = scheme.weights_for(indices)  # (B,), sums to 1

    fold_key = round(10 * max(r.index for r in history))
    net = _build_network(config, fold_key=fold_key).astype(dtype)
    opt = Adam(net.parameters(), lr=config.lr)
    model = TrainedModel(config=config, net=net, norm=norm,
                         target_mean=target_mean, target_std=target_std)

    # per-cell loss scale: w_r / n_land on land, 0 at sea
    cell_w = (w[:, None, None] * land[None, :, :] / n_land)
    for _epoch in range(config.epochs):
        out = net.forward(x).astype(float)
        mu = target_mean + target_std * out[:, 0]
        raw = out[:, 1]
        sigma = target_std * softplus(raw) + SIGMA_FLOOR_MM
        scores = crps_gaussian(mu, sigma, y)
        loss = float((cell_w * scores).sum())
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite training loss at epoch {_epoch} for {config.variant}")
        model.loss_history.append(loss)

        dmu, dsigma = crps_gradient(mu, sigma, y)
        grad = np.empty_like(out)
        grad[:, 0] = cell_w * dmu * target_std
        grad[:, 1] = cell_w * dsigma * target_std * expit(raw)
        net.zero_grad()
        net.backward(grad.astype(dtype))
        opt.step()
    return model


def train_fcn_baseline(history, domain: GridDomain, **overrides) -> TrainedModel:
    """Per-grid seven-feature baseline on the same weighted CRPS loss."""
    return train_model(ModelConfig.for_variant("fcn", **overrides), history, domain)


def rolling_origin_run(configs, scenario, targets=range(6, 12),
                       ) -> dict[tuple[str, int], GaussianField]:
    """Train-and-predict every variant at every target, never peeking ahead.

    For each target k the trainable variants learn from reports indexed
    strictly below k (augmented first when the variant calls for it) and
    then post-process report k's forecast stack. Returns {(variant, k):
    prediction}; targets without any preceding report are skipped with a
    warning.
    """
    domain = scenario.domain
    originals = sorted((r for r in scenario.reports
                        if r.origin is ReportOrigin.ORIGINAL),
                       key=lambda r: r.index)
    by_index = {r.index: r for r in originals}
    track_pairs = original_track(originals)

    predictions: dict[tuple[str, int], GaussianField] = {}
    for k in targets:
        target = by_index.get(float(k))
        if target is None:
            raise ValueError(f"scenario has no original report with index {k}")
        history = [r for r in originals if r.index < k]
        if not history:
            warnings.warn(f"skipping target {k}: no preceding reports", stacklevel=2)
            continue
        for config in configs:
            if not config.trains:
                predictions[(config.variant, k)] = predict_members_baseline(target)
                continue
            if config.use_augmentation and len(history) >= 2:
                training = build_augmented_set(history, eta=config.noise_scale,
                                               seed=config.seed).reports
            else:
                if config.use_augmentation:
                    warnings.warn(f"target {k}: single-report history cannot be "
                                  "augmented; training on originals", stacklevel=2)
                training = history
            model = train_model(config, training, domain)
            predictions[(config.variant, k)] = model.predict(target, domain, track_pairs)
    return predictions


def default_configs(seed: int = 0, **overrides) -> list[ModelConfig]:
    """One config per variant, shared seed."""
    return [ModelConfig.for_variant(v, seed=seed, **overrides) for v in VARIANTS]


def config_variants_table() -> dict[str, tuple[bool, bool]]:
    """variant -> (use_geo_dyn, use_augmentation), the Y/- matrix."""
    return dict(_VARIANT_FLAGS)
