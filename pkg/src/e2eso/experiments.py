"""The four experiments, end to end.

Each ``run_*`` function takes an :class:`ExperimentConfig`, trains whatever
decision maps its strategies need, evaluates every strategy on fresh test
draws and returns an :class:`EvalReport`.  Nothing here touches the file
system; :func:`e2eso.reporting.emit_outputs` writes the artifacts.

Random streams: strategy ``i`` of the registry, replication ``r`` uses seed
``base_seed + i * 10**6 + r`` for its network initialisation, its training
stream and its shuffles.  Test draws use their own seeds above
``TEST_SEED_OFFSET``.
"""
import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import decisions, nnet, scenarios, solvers, training
from .errors import ConfigError

log = logging.getLogger(__name__)

EXPERIMENTS = ("mean-est", "newsvendor", "grad-proj", "dispatch")

STRATEGIES = {
    "mean-est": ("NN", "ERM", "MMSE"),
    "newsvendor": ("NN_BAY", "NN_ERM", "NN_DRO", "BAY", "ERM", "DRO", "True", "Oracle-Z"),
    "grad-proj": ("inside", "outside"),
    "dispatch": ("Oracle", "Lag-1", "MLE", "E2E-CAL", "E2E-OPL-Softplus", "E2E-OPL-Relu"),
}

DEFAULT_STRATEGIES = {
    "mean-est": STRATEGIES["mean-est"],
    # Oracle-Z (perfect knowledge of Z) is available on request only
    "newsvendor": STRATEGIES["newsvendor"][:7],
    "grad-proj": STRATEGIES["grad-proj"],
    "dispatch": STRATEGIES["dispatch"],
}

SEED_STRIDE = 10 ** 6
TEST_SEED_OFFSET = 97 * SEED_STRIDE

# (desk value, paper-scale value) for entries that change with --paper-scale
_PAPER = object()

SCENARIO_DEFAULTS = {
    "mean-est": {"mu_z": 2.0, "var_z": 0.25, "var_y": 4.0, "n": 20, "z_max": 5.0},
    "newsvendor": {"d": 11, "n": 20, "p_wholesale": 5.0, "q_retail": 7.0, "prior": "uniform",
                   "test_priors": ["uniform", "shift_high", "shift_low"]},
    "grad-proj": {"target": [0.0, 0.5], "radius": 1.0,
                  "starts": {"inside": [0.9, -0.2], "outside": [1.2, 0.9]}},
    "dispatch": {"records": (30_000, 85_000), "frequencies": [10, 30, 60],
                 "observations": ["myopic", "myopic_incomplete", "historical"],
                 "replications": 5, "demand": 4.0, "penalty": 100.0,
                 "fleet": decisions.GeneratorFleet.reference().to_dict(),
                 "split_boundary": "2020-01-01T00:00", "train_fraction": 0.8,
                 "column_map": None, "power_scale": 1.0},
}

TRAIN_DEFAULTS = {
    "mean-est": {"K": (200_000, 5_000_000), "width": (64, 500), "optimizer": "adam",
                 "step": 1e-3, "schedule": "constant", "batch": 32},
    "newsvendor": {"K": (200_000, 5_000_000), "width": 64, "optimizer": "adam", "step": 3e-3,
                   "schedule": "constant", "batch": (50, 5000), "per_z": 5,
                   "logit_bound": 5.0, "feature_scale": 10.0, "conditional_targets": True},
    "grad-proj": {"K": 2000, "optimizer": "sgd_sqrt", "step": 0.1, "schedule": "constant",
                  "batch": 1},
    "dispatch": {"K": (30_000, 300_000), "width": 64, "optimizer": "adam", "step": 3e-3,
                 "schedule": "constant", "batch": 32},
}

N_TEST = {"mean-est": (5000, 5000), "newsvendor": (2000, 10_000), "grad-proj": (1, 1),
          "dispatch": (None, None)}


def _pick(v, paper_scale):
    return v[1 if paper_scale else 0] if isinstance(v, tuple) else v


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment run.

    ``scenario`` and ``train`` hold overrides of the per-experiment defaults;
    unknown keys and unknown strategy names are rejected on construction.
    """

    experiment: str
    seed: int = 0
    K: int = None
    eps: float = 0.025
    strategies: list = None
    paper_scale: bool = False
    n_test: int = None
    data: str = "synthetic"
    out: str = "results"
    scenario: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    FIELDS = ("experiment", "seed", "K", "eps", "strategies", "paper_scale", "n_test",
              "data", "out", "scenario", "train")

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        try:
            self.seed = int(self.seed)
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}") from None
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.eps is None or not float(self.eps) >= 0:
            raise ConfigError(f"eps must be nonnegative, got {self.eps!r}")
        self.eps = float(self.eps)
        if self.K is not None and int(self.K) < 1:
            raise ConfigError("K must be positive")
        if self.n_test is not None and int(self.n_test) < 2:
            raise ConfigError("n_test must be at least 2")
        known = STRATEGIES[self.experiment]
        if self.strategies is None:
            self.strategies = list(DEFAULT_STRATEGIES[self.experiment])
        else:
            bad = [s for s in self.strategies if s not in known]
            if bad:
                raise ConfigError(f"unknown strategies {bad} for {self.experiment}; "
                                  f"choose from {list(known)}")
            if not self.strategies:
                raise ConfigError("strategy list is empty")
            self.strategies = list(dict.fromkeys(self.strategies))
        for name, table in (("scenario", SCENARIO_DEFAULTS), ("train", TRAIN_DEFAULTS)):
            over = getattr(self, name) or {}
            if not isinstance(over, dict):
                raise ConfigError(f"{name} overrides must be a mapping")
            bad = sorted(set(over) - set(table[self.experiment]))
            if bad:
                raise ConfigError(f"unknown {name} keys {bad} for {self.experiment}")
            setattr(self, name, dict(over))
        if not (self.data == "synthetic" or str(self.data).startswith("csv:")):
            raise ConfigError(f"data must be 'synthetic' or 'csv:<path>', got {self.data!r}")

    @classmethod
    def from_dict(cls, d):
        bad = sorted(set(d) - set(cls.FIELDS))
        if bad:
            raise ConfigError(f"unknown config keys {bad}")
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment' entry")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(d)

    def to_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in self.FIELDS}

    # resolved settings: defaults < paper-scale < overrides < explicit fields
    def scenario_settings(self):
        base = {k: _pick(v, self.paper_scale) for k, v in SCENARIO_DEFAULTS[self.experiment].items()}
        base.update(copy.deepcopy(self.scenario))
        return base

    def train_settings(self):
        base = {k: _pick(v, self.paper_scale) for k, v in TRAIN_DEFAULTS[self.experiment].items()}
        base.update(self.train)
        if self.K is not None:
            base["K"] = int(self.K)
        return base

    def test_size(self):
        if self.n_test is not None:
            return int(self.n_test)
        return _pick(N_TEST[self.experiment], self.paper_scale)

    def resolved(self):
        """Full effective settings, as recorded in the run manifest."""
        d = self.to_dict()
        d["scenario"] = self.scenario_settings()
        d["train"] = self.train_settings()
        d["n_test"] = self.test_size()
        return d

    def strategy_seed(self, name, replication=0):
        return self.seed + STRATEGIES[self.experiment].index(name) * SEED_STRIDE + replication


@dataclass
class EvalReport:
    """Metrics and plot-ready data of one experiment run.

    ``metrics`` is JSON-ready and is what ``summary.json`` holds.  ``cdfs``
    maps a series name to ``(values, cum_prob)``; ``decisions`` maps column
    names to equal-length arrays.
    """

    experiment: str
    config: dict
    metrics: dict
    cdfs: dict = field(default_factory=dict)
    cdf_variable: str = "profit"
    decisions: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    def summary(self):
        return {"experiment": self.experiment, "seed": self.config["seed"],
                "seeds": self.seeds, "metrics": self.metrics}


# --------------------------------------------------------------------------
# statistics helpers
# --------------------------------------------------------------------------

def empirical_cdf(values):
    """Distinct sorted values and the empirical CDF at each of them."""
    v = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if v.size == 0:
        raise ConfigError("empty sample")
    x, counts = np.unique(v, return_counts=True)
    return x, np.cumsum(counts) / v.size


def cdf_mean(x, F):
    """Mean of the distribution whose CDF jumps to ``F`` at ``x``."""
    return float(np.sum(np.asarray(x) * np.diff(np.r_[0.0, F])))


def mean_se(values):
    v = np.asarray(values, dtype=np.float64)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "se": se}


def linear_fit(x, y):
    slope, intercept = np.polyfit(np.asarray(x), np.asarray(y), 1)
    return {"slope": float(slope), "intercept": float(intercept)}


def rmse(a, b):
    d = np.asarray(a) - np.asarray(b)
    return float(np.sqrt(np.mean(d * d)))


def replication_stats(runs):
    r = np.asarray(runs, dtype=np.float64)
    std = float(r.std(ddof=1)) if r.size > 1 else 0.0
    return {"mean": float(r.mean()), "std": std, "runs": r.tolist(),
            "formatted": f"{r.mean():.3f}({std:.3f})"}


def _optim(tr):
    return nnet.OptimState(tr["optimizer"], float(tr["step"]), schedule=tr.get("schedule", "constant"))


# --------------------------------------------------------------------------
# mean estimation
# --------------------------------------------------------------------------

def run_mean_est(config):
    """Train a network on (X, Y) draws and compare it with the sample mean and the MMSE estimate."""
    sc, tr = config.scenario_settings(), config.train_settings()
    h = solvers.GaussianHierarchy(sc["mu_z"], sc["var_z"], sc["var_y"], int(sc["n"]))
    seed = config.strategy_seed("NN")
    width = int(tr["width"])
    net = nnet.init_weights([h.n, width, width, 1], ["relu", "relu", "linear"], seed)
    dmap = training.DecisionMap(net)
    log.info("mean-est: training %s on K=%d samples", net.layer_dims, tr["K"])
    report = training.train_bayes(dmap, scenarios.GaussianScenario(h, seed), decisions.SquaredTask(),
                                  int(tr["K"]), int(tr["batch"]), _optim(tr), seed)

    # equidistant Z on [0, z_max], one observation per Z
    n_test = config.test_size()
    Z = np.linspace(0.0, float(sc["z_max"]), n_test)
    rng = np.random.default_rng(config.seed + TEST_SEED_OFFSET)
    X = Z[:, None] + np.sqrt(h.var_y) * rng.standard_normal((n_test, h.n))
    mu_mmse = solvers.gaussian_posterior(h, X)[0]
    mu_erm = X.mean(axis=1)
    mu_nn = dmap(X)[:, 0]
    below, above = Z < h.mu_z, Z > h.mu_z
    metrics = {
        "n_test": n_test,
        "fit_nn_vs_mmse": linear_fit(mu_mmse, mu_nn),
        "fit_nn_vs_erm": linear_fit(mu_erm, mu_nn),
        "rmse_nn_mmse": rmse(mu_nn, mu_mmse),
        "rmse_nn_erm": rmse(mu_nn, mu_erm),
        "shrinkage": {"mean_nn_minus_erm_below": float(np.mean((mu_nn - mu_erm)[below])),
                      "mean_nn_minus_erm_above": float(np.mean((mu_nn - mu_erm)[above]))},
        "training": report.summary(),
    }
    s = metrics["shrinkage"]
    metrics["shrinkage"]["toward_prior_mean"] = bool(s["mean_nn_minus_erm_below"] > 0
                                                     and s["mean_nn_minus_erm_above"] < 0)
    return EvalReport("mean-est", config.to_dict(), metrics, cdf_variable="estimate",
                      decisions={"z": Z, "mu_nn": mu_nn, "mu_erm": mu_erm, "mu_mmse": mu_mmse},
                      seeds={"NN": seed, "test": config.seed + TEST_SEED_OFFSET})


# --------------------------------------------------------------------------
# newsvendor
# --------------------------------------------------------------------------

def _train_newsvendor(config, name, prior, params, sc, tr):
    seed = config.strategy_seed(name)
    d, width = params.d, int(tr["width"])
    scen = scenarios.NewsvendorScenario(prior, int(sc["n"]), seed, per_z=int(tr["per_z"]),
                                        center=True, feature_scale=float(tr["feature_scale"]))
    net = nnet.init_weights([d, width, width, d], ["relu", "relu", "linear"], seed)
    dmap = training.DecisionMap(net, decisions.SoftmaxLevels(d, tr["logit_bound"]))
    task = decisions.NewsvendorTask(params)
    K, batch, opt = int(tr["K"]), int(tr["batch"]), _optim(tr)
    log.info("newsvendor: training %s on K=%d samples", name, K)
    if name == "NN_BAY":
        source = scenarios.ConditionalTargets(scen) if tr["conditional_targets"] else scen
        rep = training.train_bayes(dmap, source, task, K, batch, opt, seed)
    elif name == "NN_ERM":
        rep = training.train_erm(dmap, scen, task, K, batch, opt, seed)
    else:
        rep = training.train_dro(dmap, scen, task, config.eps, K, batch, opt, seed)
    return dmap, scen, rep, seed


def run_newsvendor(config):
    """Neural and exact Bayes / ERM / DRO ordering policies under several test priors."""
    sc, tr = config.scenario_settings(), config.train_settings()
    params = decisions.NewsvendorParams(int(sc["d"]), float(sc["p_wholesale"]), float(sc["q_retail"]))
    d, n = params.d, int(sc["n"])
    prior = solvers.named_prior(sc["prior"], d)
    test_priors = list(sc["test_priors"])
    if not test_priors:
        raise ConfigError("need at least one test prior")
    for p in test_priors:
        solvers.named_prior(p, d)
    M = params.loss_matrix()
    strategies = config.strategies

    nets, seeds, train_summ = {}, {}, {}
    for name in ("NN_BAY", "NN_ERM", "NN_DRO"):
        if name in strategies:
            dmap, scen, rep, seed = _train_newsvendor(config, name, prior, params, sc, tr)
            nets[name] = (dmap, scen)
            seeds[name] = seed
            train_summ[name] = rep.summary()

    n_test = config.test_size()
    feat = scenarios.NewsvendorScenario(prior, n, 0, center=True,
                                        feature_scale=float(tr["feature_scale"]))
    results, cdfs, decision_cols, agreement = {}, {}, {}, {}
    dro_eps0_equals_erm, dro_le_erm = None, None
    for ti, tp_name in enumerate(test_priors):
        tp = solvers.named_prior(tp_name, d)
        tseed = config.seed + TEST_SEED_OFFSET + ti
        seeds[f"test:{tp_name}"] = tseed
        data = scenarios.NewsvendorScenario(tp, n, tseed).sample(0, n_test)
        C = feat.counts(data["X"])
        Y = data["Y"]
        acts = {}
        for name in strategies:
            if name in nets:
                acts[name] = decisions.SoftmaxLevels.levels(nets[name][0](feat.features(data["X"])))
            elif name == "BAY":
                post = prior.alpha + C
                acts[name] = solvers.batch_expected_loss_actions(post / post.sum(1, keepdims=True), params)
            elif name == "True":
                post = tp.alpha + C
                acts[name] = solvers.batch_expected_loss_actions(post / post.sum(1, keepdims=True), params)
            elif name == "ERM":
                acts[name] = solvers.batch_expected_loss_actions(C / n, params)
            elif name == "DRO":
                acts[name] = solvers.batch_dro_actions(C, params, config.eps)
            elif name == "Oracle-Z":
                acts[name] = solvers.batch_expected_loss_actions(data["Z"], params)
        res = {}
        for name, a in acts.items():
            profit = -M[Y - 1, a - 1]
            x, F = empirical_cdf(profit)
            key = name if ti == 0 else f"{name}.{tp_name}"
            cdfs[key] = (x, F)
            res[name] = {**mean_se(profit),
                         "loss_probability": float(np.mean(profit < 0)),
                         "cdf_at_zero": float(np.mean(profit <= 0)),
                         "mean_order": float(a.mean())}
        # paired left-tail comparison against ERM
        if "ERM" in acts:
            erm_tail = -M[Y - 1, acts["ERM"] - 1] <= 0
            for name, a in acts.items():
                diff = erm_tail.astype(float) - (-M[Y - 1, a - 1] <= 0)
                res[name]["erm_tail_excess"] = mean_se(diff)
        results[tp_name] = res
        if ti == 0:
            decision_cols = {"y": Y, **{f"a_{k}": v for k, v in acts.items()}}
            for nn_name in nets:
                agreement[nn_name] = {x: float(np.mean(acts[nn_name] == acts[x]))
                                      for x in ("BAY", "ERM", "DRO") if x in acts}
            erm = solvers.batch_expected_loss_actions(C / n, params)
            dro0 = solvers.batch_dro_actions(C, params, 0.0)
            dro_eps0_equals_erm = bool(np.array_equal(dro0, erm))
            dro_le_erm = float(np.mean(solvers.batch_dro_actions(C, params, config.eps) <= erm))
    metrics = {
        "n_test": n_test, "eps": config.eps, "train_prior": sc["prior"],
        "correct_prior": test_priors[0],
        "profit": results,
        "agreement": agreement,
        "dro_eps0_equals_erm": dro_eps0_equals_erm,
        "freq_dro_le_erm": dro_le_erm,
        "training": train_summ,
    }
    return EvalReport("newsvendor", config.to_dict(), metrics, cdfs, "profit", decision_cols, seeds)


# --------------------------------------------------------------------------
# gradient projection
# --------------------------------------------------------------------------

def run_grad_proj(config):
    """Train ``w -> proj_ball(w)`` from a start inside and a start outside the ball."""
    sc, tr = config.scenario_settings(), config.train_settings()
    target = np.asarray(sc["target"], dtype=np.float64)
    radius = float(sc["radius"])
    presc = decisions.BallProjection(radius, target.size)
    scen = scenarios.ArrayScenario(np.ones((1, 1)), target[None, :], seed=config.seed)
    metrics, cols, seeds = {}, {k: [] for k in ("run", "k", "w1", "w2", "norm", "pred1", "pred2")}, {}
    for name in config.strategies:
        w0 = np.asarray(sc["starts"][name], dtype=np.float64)
        net = nnet.Mlp([1, target.size], ["linear"], [w0[:, None]], [np.zeros(target.size)],
                       bias=False)
        dmap = training.DecisionMap(net, presc)
        traj = [w0.copy()]
        rep = training.train_bayes(dmap, scen, decisions.SquaredTask(), int(tr["K"]), int(tr["batch"]),
                             _optim(tr), seed=config.strategy_seed(name),
                             callback=lambda k, loss, m: traj.append(m.extractor.weights[0][:, 0].copy()))
        W = np.array(traj)
        norms = np.linalg.norm(W, axis=1)
        preds = presc.forward(W)[0]
        final = preds[-1]
        metrics[name] = {
            "start": w0.tolist(), "final_w": W[-1].tolist(), "final_prediction": final.tolist(),
            "min_norm": float(norms.min()), "max_norm": float(norms.max()),
            "final_prediction_norm": float(np.linalg.norm(final)),
            "final_distance_to_target": float(np.linalg.norm(final - target)),
            "iterations": int(W.shape[0] - 1),
            "training": rep.summary(),
        }
        seeds[name] = config.strategy_seed(name)
        for k, (w, nrm, p) in enumerate(zip(W, norms, preds)):
            for c, v in zip(cols, (name, k, w[0], w[1], nrm, p[0], p[1])):
                cols[c].append(v)
    return EvalReport("grad-proj", config.to_dict(), metrics, cdf_variable="norm",
                      decisions={k: np.asarray(v) for k, v in cols.items()}, seeds=seeds)


# --------------------------------------------------------------------------
# economic dispatch
# --------------------------------------------------------------------------

_E2E_HEADS = {
    "E2E-CAL": ("linear", "cal"),
    "E2E-OPL-Softplus": ("softplus", "opl"),
    "E2E-OPL-Relu": ("relu", "opl"),
}


def load_wind(config):
    """Train/test wind series from the configured source."""
    sc = config.scenario_settings()
    if config.data == "synthetic":
        series = scenarios.wind_synthetic(seed=config.seed, count=int(sc["records"]))
        return series.split(fraction=float(sc["train_fraction"]))
    series = scenarios.ingest_wind_csv(config.data[len("csv:"):], 10, sc["column_map"],
                                       power_scale=float(sc["power_scale"]))
    train, test = series.split(boundary=sc["split_boundary"])
    if len(train) < 10 or len(test) < 10:
        raise ConfigError(f"split at {sc['split_boundary']} leaves too few records "
                          f"({len(train)} train, {len(test)} test)")
    return train, test


def _aligned(series, spec, lags):
    """Observations at t >= lags so every spec scores the same intervals."""
    X, Y, _ = scenarios.build_observations(series, spec)
    first = lags if spec.kind == "historical" else 0
    return X[lags - first:], Y[lags - first:]


def _dispatch_cost(task, A, Y):
    return task.outcome_losses(A, np.asarray(Y)[:, None])[0][:, 0]


def run_dispatch(config):
    """Oracle, Lag-1, least-squares MLE and end-to-end maps on wind data."""
    sc, tr = config.scenario_settings(), config.train_settings()
    fleet = decisions.GeneratorFleet.from_dict(sc["fleet"])
    task = decisions.DispatchTask(fleet, sc["demand"], sc["penalty"])
    opl = decisions.DispatchOPL(fleet, sc["demand"], sc["penalty"])
    train, test = load_wind(config)
    R = int(sc["replications"])
    if R < 1:
        raise ConfigError("replications must be positive")
    freqs = [int(f) for f in sc["frequencies"]]
    obs_kinds = list(sc["observations"])
    specs = {k: scenarios.ObservationSpec(k) for k in obs_kinds}
    lags = scenarios.ObservationSpec("historical").lags
    width, K, batch = int(tr["width"]), int(tr["K"]), int(tr["batch"])
    table, seeds, descent = {}, {}, {}
    cdfs, decision_cols = {}, {}

    def put(strategy, obs, freq, runs):
        table.setdefault(strategy, {}).setdefault(obs, {})[str(freq)] = replication_stats(runs)

    for freq in freqs:
        te = test.thin(freq, 0)
        _, Yte = _aligned(te, scenarios.ObservationSpec("myopic"), lags)
        first_cell = freq == freqs[0]
        if first_cell:
            decision_cols["y"] = Yte
        per_interval = {}
        if "Oracle" in config.strategies:
            c = _dispatch_cost(task, opl(Yte[:, None]), Yte)
            put("Oracle", "-", freq, [c.mean()] * R)
            per_interval["Oracle"] = c
        if "Lag-1" in config.strategies:
            Xl, _ = _aligned(te, scenarios.ObservationSpec("lag1"), lags)
            c = _dispatch_cost(task, opl(Xl), Yte)
            put("Lag-1", "-", freq, [c.mean()] * R)
            per_interval["Lag-1"] = c
        for kind in obs_kinds:
            spec = specs[kind]
            parts = [_aligned(train.thin(freq, off), spec, lags) for off in range(freq // 10)]
            Xtr = np.vstack([p[0] for p in parts])
            Ytr = np.concatenate([p[1] for p in parts])
            Xte, _ = _aligned(te, spec, lags)
            mu, sd = Xtr.mean(axis=0), Xtr.std(axis=0)
            sd[sd == 0] = 1.0
            Ftr, Fte = (Xtr - mu) / sd, (Xte - mu) / sd
            if "MLE" in config.strategies:
                beta = np.linalg.lstsq(np.c_[Ftr, np.ones(len(Ftr))], Ytr, rcond=None)[0]
                yhat = np.c_[Fte, np.ones(len(Fte))] @ beta
                c = _dispatch_cost(task, opl(yhat[:, None]), Yte)
                put("MLE", kind, freq, [c.mean()] * R)
                if kind == obs_kinds[0]:
                    per_interval["MLE"] = c
            for name, (head, arch) in _E2E_HEADS.items():
                if name not in config.strategies:
                    continue
                runs = []
                for r in range(R):
                    seed = config.strategy_seed(name, r)
                    seeds[name] = config.strategy_seed(name)
                    if arch == "cal":
                        net = nnet.init_weights([spec.dim, width, fleet.count], ["relu", head], seed)
                        presc = decisions.SigmoidCapacity(fleet.capacities)
                    else:
                        net = nnet.init_weights([spec.dim, width, 1], ["relu", head], seed)
                        presc = opl
                    dmap = training.DecisionMap(net, presc)
                    log.info("dispatch: %s %s %d-min replication %d", name, kind, freq, r)
                    rep = training.train_bayes(dmap, scenarios.ArrayScenario(Ftr, Ytr, seed), task,
                                               K, batch, _optim(tr), seed).summary()
                    descent.setdefault(name, []).append(
                        [rep["initial_window_loss"], rep["trailing_window_loss"]])
                    c = _dispatch_cost(task, dmap(Fte), Yte)
                    runs.append(c.mean())
                    if r == 0 and kind == obs_kinds[0]:
                        per_interval[name] = c
                put(name, kind, freq, runs)
        if first_cell:
            for name, c in per_interval.items():
                cdfs[name] = empirical_cdf(c)
                decision_cols[f"cost_{name}"] = c
    for name in ("Oracle", "Lag-1"):
        if name in config.strategies:
            seeds[name] = config.strategy_seed(name)
    if "MLE" in config.strategies:
        seeds["MLE"] = config.strategy_seed("MLE")
    rows = [[s, o] for s in config.strategies for o in table.get(s, {})]
    missing = [s for s in config.strategies if s not in table]
    if missing:
        raise ConfigError(f"strategies produced no results: {missing}")
    metrics = {
        "cost_unit": "mean cost per dispatch interval",
        "frequencies": freqs, "observations": obs_kinds, "replications": R,
        "train_records": len(train), "test_records": len(test),
        "rows": rows, "table": table,
        # (initial, trailing) window losses of every end-to-end training run
        "training_windows": descent,
        "cdf_cell": {"frequency": freqs[0], "observation": obs_kinds[0], "replication": 0},
    }
    return EvalReport("dispatch", config.to_dict(), metrics, cdfs, "cost", decision_cols, seeds)


RUNNERS = {
    "mean-est": run_mean_est,
    "newsvendor": run_newsvendor,
    "grad-proj": run_grad_proj,
    "dispatch": run_dispatch,
}


def run(config):
    return RUNNERS[config.experiment](config)
